//! CSV and JSON persistence.
//!
//! JSON floats are always written as `{:.16e}` (17 significant digits) so
//! identical inputs give byte-identical files.

use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::deviation::DeviationProcess;
use crate::error::{invalid, Result};
use crate::lattice::RandomVariable;

#[derive(Debug, Serialize, Deserialize)]
struct LeafRow {
    leaf: usize,
    value: f64,
}

#[derive(Debug, Serialize)]
struct ProcessRow {
    level: usize,
    node: usize,
    value: f64,
}

/// Reads `leaf,value` rows; every leaf in `0..leaves` must appear exactly once.
pub fn read_payoff_csv(path: &Path, leaves: usize) -> Result<RandomVariable> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut values = vec![None; leaves];
    for row in reader.deserialize() {
        let row: LeafRow = row?;
        let slot = values.get_mut(row.leaf).ok_or_else(|| {
            invalid(format!("{}: leaf {} out of range (lattice has {leaves})", path.display(), row.leaf))
        })?;
        if slot.replace(row.value).is_some() {
            return Err(invalid(format!("{}: leaf {} listed twice", path.display(), row.leaf)));
        }
    }
    let values = values
        .into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| invalid(format!("{}: leaf {i} missing", path.display()))))
        .collect::<Result<Vec<f64>>>()?;
    let x = RandomVariable::new(values);
    x.check_finite()?;
    Ok(x)
}

/// `leaf,value` CSV text.
pub fn payoff_csv(x: &RandomVariable) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (leaf, &value) in x.values().iter().enumerate() {
        w.serialize(LeafRow { leaf, value })?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

/// `level,node,value` CSV text in level order.
pub fn process_csv(dev: &DeviationProcess) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (level, node, value) in dev.rows() {
        w.serialize(ProcessRow { level, node, value })?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

pub fn write_payoff_csv(path: &Path, x: &RandomVariable) -> Result<()> {
    std::fs::write(path, payoff_csv(x)?)?;
    Ok(())
}

pub fn write_process_csv(path: &Path, dev: &DeviationProcess) -> Result<()> {
    std::fs::write(path, process_csv(dev)?)?;
    Ok(())
}

/// Pretty printing with fixed-width float formatting.
struct FixedFloats(PrettyFormatter<'static>);

impl Formatter for FixedFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }

    fn begin_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_array(writer)
    }

    fn end_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object(writer)
    }

    fn end_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object_value(writer)
    }
}

/// Pretty JSON with every float at 17 significant digits; non-finite floats become `null`.
pub fn to_json(value: &impl Serialize) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFloats(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    std::fs::write(path, to_json(value)?)?;
    Ok(())
}
