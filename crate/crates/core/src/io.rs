//! File formats.
//!
//! Point tables come in two forms:
//!
//! * CSV with header `x,y,value`, floats written in shortest round-trip form.
//! * Binary: `b"SWLD"`, `u16` version, `u64` point count, then packed
//!   little-endian `f64` triples `(x, y, value)`.
//!
//! Truth files are CSV `x,y,value,membership` where `membership` is the
//! partition bitmask. Grids are written as ESRI ASCII grids or 16-bit PGM.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::point::{MergedDataset, Point, PointCloudPartition};
use crate::synth::SceneTruth;

pub const BINARY_MAGIC: &[u8; 4] = b"SWLD";
pub const BINARY_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Binary,
}

impl TableFormat {
    /// `.bin` and `.swld` are binary; everything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("swld") => TableFormat::Binary,
            _ => TableFormat::Csv,
        }
    }
}

/// Rows of `(x, y, value)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointTable {
    pub points: Vec<Point>,
    pub values: Vec<f64>,
}

impl PointTable {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_partition(self, index: usize) -> Result<PointCloudPartition> {
        PointCloudPartition::new(index, self.points, self.values)
    }
}

impl From<&PointCloudPartition> for PointTable {
    fn from(p: &PointCloudPartition) -> Self {
        Self {
            points: p.points().to_vec(),
            values: p.values().to_vec(),
        }
    }
}

impl From<&MergedDataset> for PointTable {
    fn from(m: &MergedDataset) -> Self {
        Self {
            points: m.points.clone(),
            values: m.values.clone(),
        }
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_csv(w: impl Write, table: &PointTable) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x", "y", "value"])?;
    for (p, v) in table.points.iter().zip(&table.values) {
        out.write_record([fmt_f64(p.x), fmt_f64(p.y), fmt_f64(*v)])?;
    }
    out.flush()?;
    Ok(())
}

fn parse_field(rec: &csv::StringRecord, k: usize, line: u64) -> Result<f64> {
    let s = rec
        .get(k)
        .ok_or_else(|| Error::Format(format!("line {line}: missing column {k}")))?;
    s.parse::<f64>()
        .map_err(|e| Error::Format(format!("line {line}: bad number {s:?}: {e}")))
}

fn csv_reader(r: impl Read) -> csv::Reader<impl Read> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r)
}

pub fn read_csv(r: impl Read) -> Result<PointTable> {
    let mut rdr = csv_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["x", "y", "value"] {
        return Err(Error::Format(format!("expected header x,y,value, got {headers:?}")));
    }
    let mut table = PointTable::default();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k as u64 + 2;
        table.points.push(Point::new(parse_field(&rec, 0, line)?, parse_field(&rec, 1, line)?));
        table.values.push(parse_field(&rec, 2, line)?);
    }
    Ok(table)
}

pub fn write_binary(mut w: impl Write, table: &PointTable) -> Result<()> {
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&BINARY_VERSION.to_le_bytes())?;
    w.write_all(&(table.len() as u64).to_le_bytes())?;
    for (p, v) in table.points.iter().zip(&table.values) {
        w.write_all(&p.x.to_le_bytes())?;
        w.write_all(&p.y.to_le_bytes())?;
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary(mut r: impl Read) -> Result<PointTable> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(Error::Format("missing SWLD magic".into()));
    }
    let mut b2 = [0u8; 2];
    r.read_exact(&mut b2)?;
    let version = u16::from_le_bytes(b2);
    if version != BINARY_VERSION {
        return Err(Error::Format(format!("unsupported binary version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let count = u64::from_le_bytes(b8) as usize;
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() != count * 24 {
        return Err(Error::Format(format!(
            "header says {count} records but payload has {} bytes",
            buf.len()
        )));
    }
    let f = |c: &[u8]| f64::from_le_bytes(c.try_into().unwrap());
    let mut table = PointTable {
        points: Vec::with_capacity(count),
        values: Vec::with_capacity(count),
    };
    for rec in buf.chunks_exact(24) {
        table.points.push(Point::new(f(&rec[0..8]), f(&rec[8..16])));
        table.values.push(f(&rec[16..24]));
    }
    Ok(table)
}

/// Reads a table, sniffing the binary magic regardless of extension.
pub fn read_table(path: &Path) -> Result<PointTable> {
    let mut r = BufReader::new(File::open(path)?);
    let mut head = [0u8; 4];
    let n = read_up_to(&mut r, &mut head)?;
    let chained = (&head[..n]).chain(r);
    if n == 4 && &head == BINARY_MAGIC {
        read_binary(chained)
    } else {
        read_csv(chained)
    }
}

fn read_up_to(r: &mut impl Read, buf: &mut [u8]) -> Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match r.read(&mut buf[n..])? {
            0 => break,
            k => n += k,
        }
    }
    Ok(n)
}

pub fn write_table(path: &Path, table: &PointTable) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    match TableFormat::from_path(path) {
        TableFormat::Csv => write_csv(w, table),
        TableFormat::Binary => write_binary(w, table),
    }
}

pub fn write_truth_csv(w: impl Write, truth: &SceneTruth) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x", "y", "value", "membership"])?;
    for ((p, v), m) in truth.points.iter().zip(&truth.ground_truth).zip(&truth.membership) {
        out.write_record([fmt_f64(p.x), fmt_f64(p.y), fmt_f64(*v), m.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a truth file; only points, values and memberships are recovered.
pub fn read_truth_csv(r: impl Read) -> Result<SceneTruth> {
    let mut rdr = csv_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["x", "y", "value", "membership"] {
        return Err(Error::Format(format!(
            "expected header x,y,value,membership, got {headers:?}"
        )));
    }
    let mut truth = SceneTruth::default();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k as u64 + 2;
        truth.points.push(Point::new(parse_field(&rec, 0, line)?, parse_field(&rec, 1, line)?));
        truth.ground_truth.push(parse_field(&rec, 2, line)?);
        let m = rec.get(3).unwrap_or("");
        truth.membership.push(
            m.parse::<u64>()
                .map_err(|e| Error::Format(format!("line {line}: bad membership {m:?}: {e}")))?,
        );
    }
    Ok(truth)
}

/// Cell-averaged raster of scattered values. Empty cells are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub ncols: usize,
    pub nrows: usize,
    pub x0: f64,
    pub y0: f64,
    pub cell: f64,
    /// Row-major, row 0 at the top (largest y).
    pub cells: Vec<Option<f64>>,
}

impl Grid {
    pub fn rasterize(points: &[Point], values: &[f64], ncols: usize) -> Result<Self> {
        if points.is_empty() || ncols == 0 {
            return Err(Error::InvalidConfig("cannot rasterize an empty dataset".into()));
        }
        let (mut xmin, mut xmax, mut ymin, mut ymax) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in points {
            xmin = xmin.min(p.x);
            xmax = xmax.max(p.x);
            ymin = ymin.min(p.y);
            ymax = ymax.max(p.y);
        }
        let span = (xmax - xmin).max(ymax - ymin).max(f64::MIN_POSITIVE);
        let cell = (xmax - xmin).max(span * 1e-9) / ncols as f64;
        let nrows = (((ymax - ymin) / cell).ceil() as usize).max(1);
        let mut sum = vec![0.0; ncols * nrows];
        let mut cnt = vec![0u32; ncols * nrows];
        for (p, v) in points.iter().zip(values) {
            let c = (((p.x - xmin) / cell) as usize).min(ncols - 1);
            let r_from_bottom = (((p.y - ymin) / cell) as usize).min(nrows - 1);
            let k = (nrows - 1 - r_from_bottom) * ncols + c;
            sum[k] += v;
            cnt[k] += 1;
        }
        Ok(Self {
            ncols,
            nrows,
            x0: xmin,
            y0: ymin,
            cell,
            cells: sum
                .iter()
                .zip(&cnt)
                .map(|(s, &c)| (c > 0).then(|| s / c as f64))
                .collect(),
        })
    }

    pub const NODATA: f64 = -9999.0;

    pub fn write_ascii(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "ncols {}", self.ncols)?;
        writeln!(w, "nrows {}", self.nrows)?;
        writeln!(w, "xllcorner {:?}", self.x0)?;
        writeln!(w, "yllcorner {:?}", self.y0)?;
        writeln!(w, "cellsize {:?}", self.cell)?;
        writeln!(w, "NODATA_value {}", Self::NODATA)?;
        for row in self.cells.chunks(self.ncols) {
            let line: Vec<String> = row
                .iter()
                .map(|c| format!("{:?}", c.unwrap_or(Self::NODATA)))
                .collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    /// 16-bit binary PGM scaled to the data range; empty cells are 0.
    pub fn write_pgm(&self, mut w: impl Write) -> Result<()> {
        let (lo, hi) = self
            .cells
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        let range = if hi > lo { hi - lo } else { 1.0 };
        write!(w, "P5\n{} {}\n65535\n", self.ncols, self.nrows)?;
        for c in &self.cells {
            let level: u16 = match c {
                Some(v) => 1 + ((v - lo) / range * 65534.0).round() as u16,
                None => 0,
            };
            w.write_all(&level.to_be_bytes())?;
        }
        Ok(())
    }

    pub fn write_path(&self, path: &Path) -> Result<()> {
        let w = BufWriter::new(File::create(path)?);
        match path.extension().and_then(|e| e.to_str()) {
            Some("pgm") => self.write_pgm(w),
            _ => self.write_ascii(w),
        }
    }
}
