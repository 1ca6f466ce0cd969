//! The versioned, line-oriented network weight file.
//!
//! ```text
//! DEEPREC-NET v1
//! dims <m> <n> <K> <delta>
//! layer 1
//! W1
//! <rows> <cols>
//! <row of values>...
//! W2 ... W3 ... b1 ... b2 ...
//! layer 2 ...
//! ```
//!
//! Vectors serialize as single-row blocks (`1 <len>`). Numbers print with
//! Rust's shortest round-trip formatting, so save/load is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use deeprec_core::linalg::Mat;
use deeprec_core::model::ProblemDims;
use deeprec_core::net::{Activation, LayerParams, UnfoldedNetwork};

use crate::error::{CliError, Result};

const MAGIC: &str = "DEEPREC-NET v1";
const BLOCK_NAMES: [&str; 5] = ["W1", "W2", "W3", "b1", "b2"];

fn write_row(out: &mut String, row: &[f64]) {
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

/// Renders the network in the v1 text format.
pub fn encode(net: &UnfoldedNetwork) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(
        out,
        "dims {} {} {} {}",
        net.dims.m,
        net.dims.n,
        net.layers.len(),
        net.delta
    );
    for (k, layer) in net.layers.iter().enumerate() {
        let _ = writeln!(out, "layer {}", k + 1);
        let blocks: [(&str, usize, usize, &[f64]); 5] = [
            ("W1", net.dims.m, net.dims.m, layer.w1.data()),
            ("W2", net.dims.m, net.dims.m, layer.w2.data()),
            ("W3", net.dims.n, 2 * net.dims.n, layer.w3.data()),
            ("b1", 1, net.dims.m, &layer.b1),
            ("b2", 1, net.dims.n, &layer.b2),
        ];
        for (name, rows, cols, data) in blocks {
            let _ = writeln!(out, "{name}");
            let _ = writeln!(out, "{rows} {cols}");
            for r in 0..rows {
                write_row(&mut out, &data[r * cols..(r + 1) * cols]);
            }
        }
    }
    out
}

struct Lines<'a> {
    iter: std::str::Lines<'a>,
    num: usize,
    path: &'a Path,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        match self.iter.next() {
            Some(l) => {
                self.num += 1;
                Ok(l)
            }
            None => Err(CliError::Parse {
                path: self.path.to_owned(),
                line: self.num + 1,
                msg: "unexpected end of file".into(),
            }),
        }
    }

    /// Error at the line most recently read.
    fn err(&self, msg: impl Into<String>) -> CliError {
        CliError::Parse {
            path: self.path.to_owned(),
            line: self.num.max(1),
            msg: msg.into(),
        }
    }

    fn format_err(&self, msg: impl Into<String>) -> CliError {
        CliError::Format {
            path: self.path.to_owned(),
            msg: msg.into(),
        }
    }
}

fn parse_row(lines: &mut Lines<'_>, cols: usize, out: &mut Vec<f64>) -> Result<()> {
    let line = lines.next()?;
    let mut count = 0;
    for tok in line.split_ascii_whitespace() {
        let v: f64 = tok
            .parse()
            .map_err(|_| lines.err(format!("bad number `{tok}`")))?;
        if !v.is_finite() {
            return Err(lines.err(format!("non-finite value `{tok}`")));
        }
        out.push(v);
        count += 1;
    }
    if count != cols {
        return Err(lines.err(format!("expected {cols} values, got {count}")));
    }
    Ok(())
}

/// Parses the v1 text format. `path` is used only for error reporting.
pub fn decode(text: &str, path: &Path) -> Result<UnfoldedNetwork> {
    let mut lines = Lines {
        iter: text.lines(),
        num: 0,
        path,
    };
    let magic = lines.next()?;
    if magic.trim_end() != MAGIC {
        return Err(lines.err(format!("expected header `{MAGIC}`")));
    }
    let dims_line = lines.next()?;
    let toks: Vec<&str> = dims_line.split_ascii_whitespace().collect();
    if toks.len() != 5 || toks[0] != "dims" {
        return Err(lines.err("expected `dims <m> <n> <K> <delta>`"));
    }
    let m: usize = toks[1].parse().map_err(|_| lines.err("bad m"))?;
    let n: usize = toks[2].parse().map_err(|_| lines.err("bad n"))?;
    let k_layers: usize = toks[3].parse().map_err(|_| lines.err("bad K"))?;
    let delta: f64 = toks[4].parse().map_err(|_| lines.err("bad delta"))?;
    if m == 0 || n == 0 || k_layers == 0 {
        return Err(lines.format_err("dims must be positive"));
    }
    let dims = ProblemDims::new(m, n).map_err(CliError::Core)?;

    let shapes: [(usize, usize); 5] = [(m, m), (m, m), (n, 2 * n), (1, m), (1, n)];
    let mut layers = Vec::with_capacity(k_layers);
    for k in 1..=k_layers {
        let header = lines.next()?;
        if header.trim_end() != format!("layer {k}") {
            return Err(lines.err(format!("expected `layer {k}`, got `{header}`")));
        }
        let mut blocks: Vec<Vec<f64>> = Vec::with_capacity(5);
        for (b, name) in BLOCK_NAMES.iter().enumerate() {
            let got = lines.next()?;
            if got.trim_end() != *name {
                return Err(lines.err(format!("expected block `{name}`, got `{got}`")));
            }
            let shape_line = lines.next()?;
            let st: Vec<&str> = shape_line.split_ascii_whitespace().collect();
            if st.len() != 2 {
                return Err(lines.err("expected `<rows> <cols>`"));
            }
            let rows: usize = st[0].parse().map_err(|_| lines.err("bad row count"))?;
            let cols: usize = st[1].parse().map_err(|_| lines.err("bad col count"))?;
            if (rows, cols) != shapes[b] {
                return Err(lines.format_err(format!(
                    "block {name} of layer {k} has shape {rows}x{cols}, but the header dims require {}x{}",
                    shapes[b].0, shapes[b].1
                )));
            }
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                parse_row(&mut lines, cols, &mut data)?;
            }
            blocks.push(data);
        }
        let b2 = blocks.pop().expect("five blocks");
        let b1 = blocks.pop().expect("five blocks");
        let w3 = blocks.pop().expect("five blocks");
        let w2 = blocks.pop().expect("five blocks");
        let w1 = blocks.pop().expect("five blocks");
        layers.push(LayerParams {
            w1: Mat::from_vec(m, m, w1),
            w2: Mat::from_vec(m, m, w2),
            w3: Mat::from_vec(n, 2 * n, w3),
            b1,
            b2,
        });
    }
    if lines.iter.next().is_some() {
        return Err(CliError::Parse {
            path: path.to_owned(),
            line: lines.num + 1,
            msg: "trailing content after last layer".into(),
        });
    }
    let net = UnfoldedNetwork {
        dims,
        delta,
        layers,
        activation: Activation::Relu,
    };
    net.validate().map_err(CliError::Core)?;
    Ok(net)
}

pub fn save_network(net: &UnfoldedNetwork, path: &Path) -> Result<()> {
    std::fs::write(path, encode(net)).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn load_network(path: &Path) -> Result<UnfoldedNetwork> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })?;
    decode(&text, path)
}
