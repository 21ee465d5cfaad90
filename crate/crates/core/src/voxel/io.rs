//! Scene files: ASCII PLY with `x y z label` vertex properties, or CSV with a
//! `x,y,z,label` header. The `label` column is optional on input.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ply_rs::parser::Parser;
use ply_rs::ply::{
    Addable, DefaultElement, ElementDef, Encoding, Ply, Property, PropertyDef, PropertyType,
    ScalarType,
};
use ply_rs::writer::Writer;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenePoint {
    pub position: [f64; 3],
    pub label: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneFormat {
    Ply,
    Csv,
}

impl SceneFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("ply") => Ok(SceneFormat::Ply),
            Some("csv") => Ok(SceneFormat::Csv),
            _ => Err(Error::invalid(format!("{}: expected a .ply or .csv scene", path.display()))),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            SceneFormat::Ply => "ply",
            SceneFormat::Csv => "csv",
        }
    }
}

fn scalar_f64(p: &Property) -> Option<f64> {
    Some(match *p {
        Property::Char(v) => v as f64,
        Property::UChar(v) => v as f64,
        Property::Short(v) => v as f64,
        Property::UShort(v) => v as f64,
        Property::Int(v) => v as f64,
        Property::UInt(v) => v as f64,
        Property::Float(v) => v as f64,
        Property::Double(v) => v,
        _ => return None,
    })
}

fn label_of(v: f64, row: usize) -> Result<u32> {
    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as u32)
    } else {
        Err(Error::invalid(format!("row {row}: label {v} is not a class id")))
    }
}

pub fn read_ply<R: Read>(source: &mut R) -> Result<Vec<ScenePoint>> {
    let ply = Parser::<DefaultElement>::new()
        .read_ply(source)
        .map_err(|e| Error::invalid(format!("malformed PLY: {e}")))?;
    let vertices = ply
        .payload
        .get("vertex")
        .ok_or_else(|| Error::invalid("PLY has no vertex element"))?;
    let mut out = Vec::with_capacity(vertices.len());
    for (row, v) in vertices.iter().enumerate() {
        let mut position = [0.0; 3];
        for (slot, key) in position.iter_mut().zip(["x", "y", "z"]) {
            *slot = v
                .get(key)
                .and_then(scalar_f64)
                .ok_or_else(|| Error::invalid(format!("vertex {row} lacks scalar `{key}`")))?;
        }
        let label = match v.get("label").map(scalar_f64) {
            Some(Some(l)) => Some(label_of(l, row)?),
            Some(None) => return Err(Error::invalid(format!("vertex {row}: label is not scalar"))),
            None => None,
        };
        out.push(ScenePoint { position, label });
    }
    Ok(out)
}

pub fn write_ply<W: Write>(out: &mut W, points: &[ScenePoint]) -> Result<()> {
    let labeled = points.iter().all(|p| p.label.is_some());
    let mut columns: Vec<(&str, Vec<f64>)> = ["x", "y", "z"]
        .iter()
        .enumerate()
        .map(|(a, k)| (*k, points.iter().map(|p| p.position[a]).collect()))
        .collect();
    let mut ints = Vec::new();
    if labeled && !points.is_empty() {
        ints.push(("label", points.iter().map(|p| p.label.unwrap_or(0) as i64).collect()));
    }
    write_vertex_ply(out, &mut columns, &ints)
}

/// Writes an ASCII PLY with float columns followed by int columns.
pub fn write_vertex_ply<W: Write>(
    out: &mut W,
    floats: &mut [(&str, Vec<f64>)],
    ints: &[(&str, Vec<i64>)],
) -> Result<()> {
    let n = floats.first().map_or(0, |c| c.1.len());
    let mut ply = Ply::<DefaultElement>::new();
    ply.header.encoding = Encoding::Ascii;
    let mut element = ElementDef::new("vertex".to_string());
    for (name, _) in floats.iter() {
        element.properties.add(PropertyDef::new(
            name.to_string(),
            PropertyType::Scalar(ScalarType::Float),
        ));
    }
    for (name, _) in ints {
        element
            .properties
            .add(PropertyDef::new(name.to_string(), PropertyType::Scalar(ScalarType::Int)));
    }
    ply.header.elements.add(element);
    let mut rows = Vec::with_capacity(n);
    for r in 0..n {
        let mut e = DefaultElement::new();
        for (name, col) in floats.iter() {
            e.insert(name.to_string(), Property::Float(col[r] as f32));
        }
        for (name, col) in ints {
            let v = i32::try_from(col[r])
                .map_err(|_| Error::invalid(format!("{name} value {} exceeds int range", col[r])))?;
            e.insert(name.to_string(), Property::Int(v));
        }
        rows.push(e);
    }
    ply.payload.insert("vertex".to_string(), rows);
    Writer::new()
        .write_ply(out, &mut ply)
        .map_err(|e| Error::io("<ply>", e))?;
    Ok(())
}

pub fn read_csv<R: Read>(source: R) -> Result<Vec<ScenePoint>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = rdr
        .headers()
        .map_err(|e| Error::invalid(format!("malformed CSV header: {e}")))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (x, y, z) = match (col("x"), col("y"), col("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(Error::invalid("CSV header must contain x,y,z")),
    };
    let lab = col("label");
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::invalid(format!("CSV row {row}: {e}")))?;
        let num = |c: usize| -> Result<f64> {
            rec.get(c)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::invalid(format!("CSV row {row}: column {c} is not a number")))
        };
        let label = match lab {
            Some(c) => Some(label_of(num(c)?, row)?),
            None => None,
        };
        out.push(ScenePoint {
            position: [num(x)?, num(y)?, num(z)?],
            label,
        });
    }
    Ok(out)
}

pub fn write_csv<W: Write>(out: W, points: &[ScenePoint]) -> Result<()> {
    let labeled = points.iter().all(|p| p.label.is_some());
    let mut w = csv::Writer::from_writer(out);
    let header: &[&str] = if labeled { &["x", "y", "z", "label"] } else { &["x", "y", "z"] };
    let err = |e: csv::Error| Error::invalid(format!("CSV write failed: {e}"));
    w.write_record(header).map_err(err)?;
    for p in points {
        let mut rec: Vec<String> = p.position.iter().map(|v| v.to_string()).collect();
        if let (true, Some(l)) = (labeled, p.label) {
            rec.push(l.to_string());
        }
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_scene(path: &Path) -> Result<Vec<ScenePoint>> {
    let format = SceneFormat::from_path(path)?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    match format {
        SceneFormat::Ply => read_ply(&mut reader),
        SceneFormat::Csv => read_csv(reader),
    }
}

pub fn write_scene(path: &Path, points: &[ScenePoint]) -> Result<()> {
    let format = SceneFormat::from_path(path)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    match format {
        SceneFormat::Ply => write_ply(&mut w, points)?,
        SceneFormat::Csv => write_csv(&mut w, points)?,
    }
    w.flush().map_err(|e| Error::io(path, e))
}
