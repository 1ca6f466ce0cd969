//! Line-oriented problem-instance files.
//!
//! ```text
//! ONEBIT-INSTANCE v1
//! dims <m> <n>
//! h
//! <m rows of n values>
//! sigma2
//! <one row of m values>
//! tau
//! <one row of m values>
//! r
//! <one row of m values, each +1 or -1>
//! x_true            (optional block)
//! <one row of n values>
//! end
//! ```

use std::fmt::Write as _;
use std::path::Path;

use deeprec_core::linalg::Mat;
use deeprec_core::model::ProblemInstance;

use crate::error::{CliError, Result};

const MAGIC: &str = "ONEBIT-INSTANCE v1";

/// Renders an instance; `with_truth` controls the optional `x_true` block.
pub fn encode(inst: &ProblemInstance, with_truth: bool) -> String {
    let dims = inst.dims();
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "dims {} {}", dims.m, dims.n);
    let _ = writeln!(out, "h");
    for i in 0..dims.m {
        push_row(&mut out, inst.h.row(i));
    }
    let _ = writeln!(out, "sigma2");
    push_row(&mut out, &inst.sigma2);
    let _ = writeln!(out, "tau");
    push_row(&mut out, &inst.tau);
    let _ = writeln!(out, "r");
    push_row(&mut out, &inst.r);
    if with_truth {
        let _ = writeln!(out, "x_true");
        push_row(&mut out, &inst.x_true);
    }
    let _ = writeln!(out, "end");
    out
}

fn push_row(out: &mut String, row: &[f64]) {
    let mut first = true;
    for v in row {
        if !first {
            out.push(' ');
        }
        let _ = write!(out, "{v}");
        first = false;
    }
    out.push('\n');
}

/// Parsed instance plus whether the file carried the ground truth.
pub struct LoadedInstance {
    pub inst: ProblemInstance,
    pub has_truth: bool,
}

pub fn decode(text: &str, path: &Path) -> Result<LoadedInstance> {
    let mut num = 0usize;
    let mut it = text.lines();
    let mut next = |what: &str| -> Result<(usize, &str)> {
        match it.next() {
            Some(l) => {
                num += 1;
                Ok((num, l))
            }
            None => Err(CliError::Parse {
                path: path.to_owned(),
                line: num + 1,
                msg: format!("unexpected end of file, expected {what}"),
            }),
        }
    };
    let perr = |line: usize, msg: String| CliError::Parse {
        path: path.to_owned(),
        line,
        msg,
    };

    let (l, magic) = next("header")?;
    if magic.trim_end() != MAGIC {
        return Err(perr(l, format!("expected header `{MAGIC}`")));
    }
    let (l, dims_line) = next("dims")?;
    let toks: Vec<&str> = dims_line.split_ascii_whitespace().collect();
    if toks.len() != 3 || toks[0] != "dims" {
        return Err(perr(l, "expected `dims <m> <n>`".into()));
    }
    let m: usize = toks[1].parse().map_err(|_| perr(l, "bad m".into()))?;
    let n: usize = toks[2].parse().map_err(|_| perr(l, "bad n".into()))?;
    if m == 0 || n == 0 {
        return Err(perr(l, "dims must be positive".into()));
    }

    let mut parse_block = |name: &str, rows: usize, cols: usize| -> Result<Vec<f64>> {
        let (l, got) = next(name)?;
        if got.trim_end() != name {
            return Err(perr(l, format!("expected block `{name}`, got `{got}`")));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (l, row) = next("row of values")?;
            let mut count = 0;
            for tok in row.split_ascii_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| perr(l, format!("bad number `{tok}`")))?;
                data.push(v);
                count += 1;
            }
            if count != cols {
                return Err(perr(l, format!("expected {cols} values, got {count}")));
            }
        }
        Ok(data)
    };

    let h = parse_block("h", m, n)?;
    let sigma2 = parse_block("sigma2", 1, m)?;
    let tau = parse_block("tau", 1, m)?;
    let r = parse_block("r", 1, m)?;

    let (l, tail) = next("`x_true` or `end`")?;
    let (x_true, has_truth) = match tail.trim_end() {
        "end" => (vec![0.0; n], false),
        "x_true" => {
            let (l2, row) = next("x_true row")?;
            let vals: std::result::Result<Vec<f64>, _> = row
                .split_ascii_whitespace()
                .map(|tok| tok.parse::<f64>())
                .collect();
            let vals = vals.map_err(|_| perr(l2, "bad number in x_true".into()))?;
            if vals.len() != n {
                return Err(perr(l2, format!("expected {n} values, got {}", vals.len())));
            }
            let (l3, fin) = next("end")?;
            if fin.trim_end() != "end" {
                return Err(perr(l3, "expected `end`".into()));
            }
            (vals, true)
        }
        other => return Err(perr(l, format!("expected `x_true` or `end`, got `{other}`"))),
    };

    let inst = ProblemInstance {
        h: Mat::from_vec(m, n, h),
        sigma2,
        tau,
        x_true,
        r,
    };
    inst.validate().map_err(|e| CliError::Format {
        path: path.to_owned(),
        msg: e.to_string(),
    })?;
    Ok(LoadedInstance { inst, has_truth })
}

pub fn save_instance(inst: &ProblemInstance, path: &Path, with_truth: bool) -> Result<()> {
    std::fs::write(path, encode(inst, with_truth)).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn load_instance(path: &Path) -> Result<LoadedInstance> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })?;
    decode(&text, path)
}
