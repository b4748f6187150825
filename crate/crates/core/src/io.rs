//! Plain-text formats: pair CSV files, prediction CSV files and saved models.
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading
//! a file back reproduces every value bit for bit.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::data::{Dataset, PairRecord};
use crate::distributions::DistributionFamily;
use crate::error::{Error, Result};
use crate::neural::{NetworkWeights, Standardizer};
use crate::pipeline::{CalibrationModel, IntervalPrediction};
use crate::scoring::BetaWeight;

/// First line of every model file.
pub const MODEL_MAGIC: &str = "accrue-calib-model";
pub const MODEL_SCHEMA_VERSION: u32 = 1;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_f64(tok: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = tok
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format!("cannot parse {what} {tok:?} as a number")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("{what} is not finite")));
    }
    Ok(v)
}

fn pair_header(dim: usize) -> String {
    let mut h: Vec<String> = (1..=dim).map(|i| format!("x_{i}")).collect();
    h.push("m".into());
    h.push("y".into());
    h.join(",")
}

/// Reads `x_1,...,x_d,m,y` CSV with a header row. Blank lines are skipped.
pub fn read_pairs<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut lines = reader.lines().enumerate();
    let dim = loop {
        let Some((i, line)) = lines.next() else {
            return Err(Error::Empty("csv input"));
        };
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let dim = cols.len().saturating_sub(2);
        if dim == 0 || cols.join(",") != pair_header(dim) {
            return Err(parse_err(
                i + 1,
                format!("expected header like {:?}", pair_header(dim.max(1))),
            ));
        }
        break dim;
    };
    let mut records = Vec::new();
    for (i, line) in lines {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 2 {
            return Err(parse_err(
                lineno,
                format!("expected {} fields, found {}", dim + 2, fields.len()),
            ));
        }
        let mut x = Vec::with_capacity(dim);
        for (j, f) in fields[..dim].iter().enumerate() {
            x.push(parse_f64(f, lineno, &format!("x_{}", j + 1))?);
        }
        let m = parse_f64(fields[dim], lineno, "m")?;
        let y = parse_f64(fields[dim + 1], lineno, "y")?;
        records.push(PairRecord::new(x, m, y).map_err(|e| parse_err(lineno, e.to_string()))?);
    }
    Dataset::new(dim, records)
}

pub fn write_pairs<W: Write>(mut w: W, data: &Dataset) -> Result<()> {
    writeln!(w, "{}", pair_header(data.dim()))?;
    let mut row = String::new();
    for r in data.records() {
        row.clear();
        for v in &r.x {
            write!(row, "{v},").expect("string write");
        }
        writeln!(row, "{},{}", r.m, r.y).expect("string write");
        w.write_all(row.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_predictions<W: Write>(mut w: W, preds: &[IntervalPrediction]) -> Result<()> {
    let dim = preds.first().map_or(1, |p| p.x.len());
    let mut header: Vec<String> = (1..=dim).map(|i| format!("x_{i}")).collect();
    header.extend(["m", "median", "lo50", "hi50", "lo95", "hi95"].map(String::from));
    writeln!(w, "{}", header.join(","))?;
    for p in preds {
        let mut row = String::new();
        for v in &p.x {
            write!(row, "{v},").expect("string write");
        }
        writeln!(
            row,
            "{},{},{},{},{},{}",
            p.m, p.median, p.lo50, p.hi50, p.lo95, p.hi95
        )
        .expect("string write");
        w.write_all(row.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Serializes a model to the line-based text format.
pub fn model_to_string(model: &CalibrationModel) -> String {
    let w = &model.weights;
    let mut s = String::new();
    let mut line = |k: &str, v: String| {
        s.push_str(k);
        s.push(' ');
        s.push_str(&v);
        s.push('\n');
    };
    line(MODEL_MAGIC, MODEL_SCHEMA_VERSION.to_string());
    line("family", model.family.tag().to_string());
    line("beta_star", model.beta_star.value().to_string());
    line("leaky_slope", model.leaky_slope.to_string());
    line("seed", model.seed.to_string());
    line("test_loss", model.test_loss.to_string());
    line("dims", format!("{} {} {}", w.d_in(), w.hidden(), w.n_out()));
    line("mean", join(&model.standardizer.mean));
    line("std", join(&model.standardizer.std));
    line("w1", join(&w.w1));
    line("b1", join(&w.b1));
    line("w2", join(&w.w2));
    line("b2", join(&w.b2));
    s
}

struct Fields<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Fields<'a> {
    fn next(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (i, line) = self
            .lines
            .next()
            .ok_or_else(|| parse_err(0, format!("missing field {key:?}")))?;
        let lineno = i + 1;
        let (k, rest) = line.split_once(' ').unwrap_or((line, ""));
        if k != key {
            return Err(parse_err(lineno, format!("expected {key:?}, found {k:?}")));
        }
        Ok((lineno, rest))
    }

    fn scalar<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let (lineno, rest) = self.next(key)?;
        rest.trim()
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad value for {key}: {rest:?}")))
    }

    fn floats(&mut self, key: &str) -> Result<Vec<f64>> {
        let (lineno, rest) = self.next(key)?;
        rest.split_whitespace()
            .map(|t| parse_f64(t, lineno, key))
            .collect()
    }
}

/// Parses a model written by [`model_to_string`].
pub fn model_from_str(text: &str) -> Result<CalibrationModel> {
    let mut f = Fields {
        lines: text.lines().enumerate(),
    };
    let version: u32 = f.scalar(MODEL_MAGIC)?;
    if version != MODEL_SCHEMA_VERSION {
        return Err(parse_err(1, format!("unsupported schema version {version}")));
    }
    let family: DistributionFamily = f.scalar("family")?;
    if !family.is_learnable() {
        return Err(parse_err(2, format!("{family} models cannot be loaded")));
    }
    let beta = BetaWeight::new(f.scalar("beta_star")?).map_err(|e| parse_err(3, e.to_string()))?;
    let leaky_slope: f64 = f.scalar("leaky_slope")?;
    let seed: u64 = f.scalar("seed")?;
    let test_loss: f64 = f.scalar("test_loss")?;
    let dims: Vec<usize> = {
        let (lineno, rest) = f.next("dims")?;
        let d: std::result::Result<Vec<usize>, _> = rest.split_whitespace().map(str::parse).collect();
        match d {
            Ok(d) if d.len() == 3 => d,
            _ => return Err(parse_err(lineno, "dims needs three integers")),
        }
    };
    if dims[2] != family.arity() {
        return Err(parse_err(7, format!("{family} needs {} outputs", family.arity())));
    }
    let standardizer = Standardizer::new(f.floats("mean")?, f.floats("std")?)?;
    if standardizer.dim() != dims[0] {
        return Err(Error::DimensionMismatch {
            expected: dims[0],
            got: standardizer.dim(),
        });
    }
    let weights = NetworkWeights::from_parts(
        dims[0],
        dims[1],
        dims[2],
        f.floats("w1")?,
        f.floats("b1")?,
        f.floats("w2")?,
        f.floats("b2")?,
    )?;
    if let Some((i, extra)) = f.lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(parse_err(i + 1, format!("unexpected trailing line {extra:?}")));
    }
    Ok(CalibrationModel {
        family,
        beta_star: beta,
        weights,
        standardizer,
        leaky_slope,
        seed,
        test_loss,
    })
}

pub fn save_model(path: &std::path::Path, model: &CalibrationModel) -> Result<()> {
    std::fs::write(path, model_to_string(model))?;
    Ok(())
}

pub fn load_model(path: &std::path::Path) -> Result<CalibrationModel> {
    model_from_str(&std::fs::read_to_string(path)?)
}

pub fn read_pairs_file(path: &std::path::Path) -> Result<Dataset> {
    let f = std::fs::File::open(path)?;
    read_pairs(std::io::BufReader::new(f))
}

pub fn write_pairs_file(path: &std::path::Path, data: &Dataset) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_pairs(std::io::BufWriter::new(f), data)
}
