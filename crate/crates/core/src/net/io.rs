//! Versioned plain-text model files.
//!
//! ```text
//! annpricer-model 1
//! widths 5 128 128 128 1
//! activation leaky_relu 1.0000000000000000e0
//! activation melu 4.8999999999999999e-1
//! activation melu 4.8999999999999999e-1
//! activation softplus_shift
//! scaling direct <shift>            | inverse <shift> <eps_atm> | none
//! seed 42
//! layer 0 5 128
//! w <fan_out values>                (fan_in lines)
//! b <fan_out values>
//! ...                               (one block per layer)
//! end
//! ```
//!
//! Floats are written with 17 significant digits, which round-trips every
//! `f64` exactly.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{Activation, Network};
use crate::dataset::{format_float, Scaling};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "annpricer-model";

pub fn write_model<W: Write>(net: &Network, mut out: W) -> Result<()> {
    writeln!(out, "{MAGIC} {MODEL_FORMAT_VERSION}")?;
    let widths: Vec<String> = net.widths().iter().map(|w| w.to_string()).collect();
    writeln!(out, "widths {}", widths.join(" "))?;
    for act in net.activations() {
        writeln!(out, "activation {act}")?;
    }
    match net.scaling {
        None => writeln!(out, "scaling none")?,
        Some(Scaling::Direct { shift }) => writeln!(out, "scaling direct {}", format_float(shift))?,
        Some(Scaling::Inverse { shift, eps_atm }) => writeln!(
            out,
            "scaling inverse {} {}",
            format_float(shift),
            format_float(eps_atm)
        )?,
    }
    writeln!(out, "seed {}", net.seed)?;
    for layer in 0..net.n_layers() {
        let (fan_in, fan_out) = net.layer_shape(layer);
        writeln!(out, "layer {layer} {fan_in} {fan_out}")?;
        let (w, b) = net.layer_range(layer);
        for row in net.params()[w].chunks(fan_out) {
            write_row(&mut out, "w", row)?;
        }
        write_row(&mut out, "b", &net.params()[b])?;
    }
    writeln!(out, "end")?;
    out.flush()?;
    Ok(())
}

fn write_row<W: Write>(out: &mut W, tag: &str, values: &[f64]) -> Result<()> {
    write!(out, "{tag}")?;
    for v in values {
        write!(out, " {}", format_float(*v))?;
    }
    writeln!(out)?;
    Ok(())
}

pub fn save_model(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_model(net, file)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_model(file).map_err(|e| match e {
        Error::ModelLoad { message, .. } => Error::ModelLoad {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

struct Lines<R> {
    inner: std::io::Lines<BufReader<R>>,
    number: usize,
}

impl<R: Read> Lines<R> {
    fn next_line(&mut self, expecting: &str) -> Result<String> {
        self.number += 1;
        match self.inner.next() {
            Some(line) => Ok(line?),
            None => Err(corrupt(format!(
                "unexpected end of file at line {} (expecting {expecting})",
                self.number
            ))),
        }
    }

    fn keyed(&mut self, key: &str) -> Result<Vec<String>> {
        let line = self.next_line(key)?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(corrupt(format!(
                "line {}: expected '{key}', found '{line}'",
                self.number
            )));
        }
        Ok(parts.map(str::to_owned).collect())
    }
}

fn corrupt(message: String) -> Error {
    Error::ModelLoad {
        path: Default::default(),
        message,
    }
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse::<T>()
        .map_err(|_| corrupt(format!("invalid {what} '{s}'")))
}

pub fn read_model<R: Read>(input: R) -> Result<Network> {
    let mut lines = Lines {
        inner: BufReader::new(input).lines(),
        number: 0,
    };

    let header = lines.keyed(MAGIC)?;
    let version: u32 = parse(header.first().map(String::as_str).unwrap_or(""), "format version")?;
    if version != MODEL_FORMAT_VERSION {
        return Err(corrupt(format!(
            "unsupported format version {version} (this build reads {MODEL_FORMAT_VERSION})"
        )));
    }

    let widths = lines
        .keyed("widths")?
        .iter()
        .map(|w| parse::<usize>(w, "width"))
        .collect::<Result<Vec<_>>>()?;
    if widths.len() < 2 {
        return Err(corrupt("fewer than two layer widths".into()));
    }

    let mut activations = Vec::with_capacity(widths.len() - 1);
    for _ in 1..widths.len() {
        let parts = lines.keyed("activation")?;
        let act = parts
            .join(" ")
            .parse::<Activation>()
            .map_err(|e| corrupt(e.to_string()))?;
        activations.push(act);
    }

    let scaling_parts = lines.keyed("scaling")?;
    let scaling = match scaling_parts.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        ["none"] => None,
        ["direct", shift] => Some(Scaling::Direct {
            shift: parse(shift, "shift")?,
        }),
        ["inverse", shift, eps] => Some(Scaling::Inverse {
            shift: parse(shift, "shift")?,
            eps_atm: parse(eps, "eps_atm")?,
        }),
        _ => {
            return Err(corrupt(format!(
                "unrecognised scaling line '{}'",
                scaling_parts.join(" ")
            )))
        }
    };

    let seed_parts = lines.keyed("seed")?;
    let seed: u64 = parse(seed_parts.first().map(String::as_str).unwrap_or(""), "seed")?;

    let mut net = Network::zeros(widths, activations).map_err(|e| corrupt(e.to_string()))?;
    net.scaling = scaling;
    net.seed = seed;

    for layer in 0..net.n_layers() {
        let (fan_in, fan_out) = net.layer_shape(layer);
        let head = lines.keyed("layer")?;
        let expected = [layer, fan_in, fan_out];
        let got = head
            .iter()
            .map(|v| parse::<usize>(v, "layer header"))
            .collect::<Result<Vec<_>>>()?;
        if got != expected {
            return Err(corrupt(format!(
                "layer header {got:?} does not match architecture {expected:?}"
            )));
        }
        let (w, b) = net.layer_range(layer);
        let mut weights = Vec::with_capacity(fan_in * fan_out);
        for _ in 0..fan_in {
            weights.extend(read_row(&mut lines, "w", fan_out)?);
        }
        net.params_mut()[w].copy_from_slice(&weights);
        let bias = read_row(&mut lines, "b", fan_out)?;
        net.params_mut()[b].copy_from_slice(&bias);
    }
    lines.keyed("end")?;
    Ok(net)
}

fn read_row<R: Read>(lines: &mut Lines<R>, tag: &str, width: usize) -> Result<Vec<f64>> {
    let parts = lines.keyed(tag)?;
    if parts.len() != width {
        return Err(corrupt(format!(
            "line {}: expected {width} values, found {}",
            lines.number,
            parts.len()
        )));
    }
    parts.iter().map(|v| parse::<f64>(v, "float")).collect()
}
