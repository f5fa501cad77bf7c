//! Laplacian reuse across merges.
//!
//! On-disk format (little-endian):
//!
//! ```text
//! "SWLL"  u16 version  u64 n  u64 nnz
//! u64 row_ptr[n + 1]  u64 col_idx[nnz]  f64 values[nnz]  u32 degree[n]
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};

use super::{CsrMatrix, EdgeWeighting, GraphLaplacian, GraphOptions, PartitionGraph};
use crate::error::{Error, Result};
use crate::point::Point;

const MAGIC: &[u8; 4] = b"SWLL";
const VERSION: u16 = 1;

/// Hash of the point coordinates (bit-exact) and graph options.
pub fn content_key(points: &[Point], options: &GraphOptions) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((points.len() as u64).to_le_bytes());
    for p in points {
        let (x, y) = p.bits();
        h.update(x.to_le_bytes());
        h.update(y.to_le_bytes());
    }
    h.update([match options.weighting {
        EdgeWeighting::Unit => 0u8,
        EdgeWeighting::InverseDistance => 1u8,
    }]);
    match options.max_edge_length {
        Some(m) => {
            h.update([1u8]);
            h.update(m.to_bits().to_le_bytes());
        }
        None => h.update([0u8]),
    }
    h.finalize().into()
}

pub fn write_laplacian(w: &mut impl Write, lap: &GraphLaplacian) -> Result<()> {
    let m = lap.matrix();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.nnz() as u64).to_le_bytes())?;
    for &r in m.row_ptr() {
        w.write_all(&(r as u64).to_le_bytes())?;
    }
    for &c in m.col_idx() {
        w.write_all(&(c as u64).to_le_bytes())?;
    }
    for &v in m.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    for &d in lap.degree() {
        w.write_all(&d.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_laplacian(r: &mut impl Read) -> Result<GraphLaplacian> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a Laplacian cache file".into()));
    }
    let mut b2 = [0u8; 2];
    r.read_exact(&mut b2)?;
    let version = u16::from_le_bytes(b2);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported cache version {version}")));
    }
    let read_u64 = |r: &mut dyn Read| -> Result<u64> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    };
    let n = read_u64(r)? as usize;
    let nnz = read_u64(r)? as usize;
    let row_ptr = (0..=n)
        .map(|_| read_u64(r).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let col_idx = (0..nnz)
        .map(|_| read_u64(r).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let values = (0..nnz)
        .map(|_| read_u64(r).map(f64::from_bits))
        .collect::<Result<Vec<_>>>()?;
    let mut degree = Vec::with_capacity(n);
    for _ in 0..n {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        degree.push(u32::from_le_bytes(b));
    }
    if row_ptr.first() != Some(&0)
        || row_ptr.last() != Some(&nnz)
        || row_ptr.windows(2).any(|w| w[0] > w[1])
        || col_idx.iter().any(|&c| c >= n)
    {
        return Err(Error::Format("corrupt Laplacian cache structure".into()));
    }
    Ok(GraphLaplacian::from_parts(
        CsrMatrix::from_parts(n, n, row_ptr, col_idx, values),
        degree,
    ))
}

/// Memoizes [`PartitionGraph`]s by content key, optionally persisting the
/// Laplacians to a directory.
#[derive(Debug, Default)]
pub struct LaplacianCache {
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<[u8; 32], Arc<PartitionGraph>>>,
}

impl LaplacianCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn with_dir(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir: Some(dir),
            memory: Mutex::default(),
        })
    }

    fn path_for(dir: &Path, key: &[u8; 32]) -> PathBuf {
        let hex: String = key.iter().map(|b| format!("{b:02x}")).collect();
        dir.join(format!("{hex}.swll"))
    }

    pub fn len(&self) -> usize {
        self.memory.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Returns the cached graph for these points, building it on a miss.
    pub fn get_or_build(&self, points: &[Point], options: &GraphOptions) -> Result<Arc<PartitionGraph>> {
        let key = content_key(points, options);
        if let Some(g) = self.memory.lock().unwrap().get(&key) {
            return Ok(Arc::clone(g));
        }
        let graph = match &self.dir {
            Some(dir) => {
                let path = Self::path_for(dir, &key);
                match File::open(&path) {
                    Ok(f) => {
                        let laplacian = read_laplacian(&mut BufReader::new(f))?;
                        if laplacian.order() != points.len() {
                            return Err(Error::Format(format!(
                                "cached Laplacian {} has wrong order",
                                path.display()
                            )));
                        }
                        PartitionGraph {
                            edges: laplacian.edges(),
                            laplacian,
                        }
                    }
                    Err(_) => {
                        let g = PartitionGraph::build(points, options)?;
                        let tmp = path.with_extension("tmp");
                        {
                            let mut w = BufWriter::new(File::create(&tmp)?);
                            write_laplacian(&mut w, &g.laplacian)?;
                            w.flush()?;
                        }
                        std::fs::rename(&tmp, &path)?;
                        g
                    }
                }
            }
            None => PartitionGraph::build(points, options)?,
        };
        let graph = Arc::new(graph);
        self.memory
            .lock()
            .unwrap()
            .insert(key, Arc::clone(&graph));
        Ok(graph)
    }
}
