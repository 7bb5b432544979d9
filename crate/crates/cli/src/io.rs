//! Feature, label, cluster and graph files.
//!
//! Features are headerless little-endian `f32` rows with a `<path>.meta`
//! sidecar holding `count=N` and `dim=D`. Labels and cluster ids are one
//! non-negative integer per line. Graphs use a small binary container.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nasa_core::cluster::ClusterAssignment;
use nasa_core::graph::{normalize_rows, Edge, EmbeddingSet, KnnGraph, LabelVector, Neighbor, WeightedGraph};
use nasa_core::linalg::Matrix;

use crate::error::{FormatError, Result};

pub const GRAPH_MAGIC: &[u8; 8] = b"NASAGRPH";
pub const GRAPH_VERSION: u32 = 1;

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| FormatError::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| FormatError::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
    }
    let f = fs::File::create(path).map_err(|e| FormatError::io(path, e))?;
    let mut w = BufWriter::new(f);
    w.write_all(bytes).and_then(|_| w.flush()).map_err(|e| FormatError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write(path, text.as_bytes())
}

fn parse_meta(path: &Path) -> Result<(usize, usize)> {
    let mp = meta_path(path);
    let text = read_text(&mp)?;
    let (mut count, mut dim) = (None, None);
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let bad = || FormatError::parse(&mp, format!("bad meta line {line:?}"));
        let (k, v) = line.split_once('=').ok_or_else(bad)?;
        let v: usize = v.trim().parse().map_err(|_| bad())?;
        match k.trim() {
            "count" => count = Some(v),
            "dim" => dim = Some(v),
            _ => return Err(bad()),
        }
    }
    match (count, dim) {
        (Some(c), Some(d)) => Ok((c, d)),
        _ => Err(FormatError::parse(&mp, "meta needs count and dim")),
    }
}

/// Loads a feature file. Rows are L2-normalized unless `normalize` is false.
pub fn load_features(path: &Path, normalize: bool) -> Result<EmbeddingSet> {
    let (count, dim) = parse_meta(path)?;
    let bytes = read(path)?;
    let expected = count
        .checked_mul(dim)
        .and_then(|x| x.checked_mul(4))
        .ok_or_else(|| FormatError::parse(path, "meta sizes overflow"))?;
    if bytes.len() != expected {
        return Err(FormatError::SizeMismatch { path: path.to_path_buf(), expected, actual: bytes.len() });
    }
    let data: Vec<f64> =
        bytes.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]))).collect();
    let m = Matrix::new(count, dim, data)?;
    Ok(if normalize { normalize_rows(m)? } else { EmbeddingSet::from_matrix(m)? })
}

/// Writes rows as `f32` plus the meta sidecar.
pub fn save_features(e: &EmbeddingSet, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(e.len() * e.dim() * 4);
    for &v in e.matrix().as_slice() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    write(path, &bytes)?;
    write_text(&meta_path(path), &format!("count={}\ndim={}\n", e.len(), e.dim()))
}

fn parse_ints(path: &Path) -> Result<Vec<usize>> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(no, l)| {
            l.trim()
                .parse::<usize>()
                .map_err(|_| FormatError::parse(path, format!("line {}: expected a non-negative integer", no + 1)))
        })
        .collect()
}

fn write_ints(path: &Path, values: &[usize]) -> Result<()> {
    let mut s = String::with_capacity(values.len() * 4);
    for v in values {
        s.push_str(&v.to_string());
        s.push('\n');
    }
    write_text(path, &s)
}

pub fn load_labels(path: &Path) -> Result<LabelVector> {
    Ok(LabelVector::new(parse_ints(path)?))
}

pub fn save_labels(l: &LabelVector, path: &Path) -> Result<()> {
    write_ints(path, l.as_slice())
}

pub fn load_clusters(path: &Path) -> Result<ClusterAssignment> {
    Ok(ClusterAssignment::from_labels(&parse_ints(path)?))
}

pub fn save_clusters(c: &ClusterAssignment, path: &Path) -> Result<()> {
    write_ints(path, c.as_slice())
}

/// Little-endian reader over a byte buffer.
pub(crate) struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(path: &'a Path, bytes: &'a [u8]) -> Self {
        Self { path, bytes, at: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end =
            self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
                FormatError::parse(self.path, format!("truncated at byte {} (wanted {n} more)", self.at))
            })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.at != self.bytes.len() {
            return Err(FormatError::parse(self.path, "trailing bytes"));
        }
        Ok(())
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    read(path)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    write(path, bytes)
}

/// `NASAGRPH`, version, node count, then per node an edge count followed by
/// `(u64 id, f64 weight)` pairs.
pub fn save_graph(lists: &[Vec<Edge>], path: &Path) -> Result<()> {
    let mut b = Vec::new();
    b.extend_from_slice(GRAPH_MAGIC);
    b.extend_from_slice(&GRAPH_VERSION.to_le_bytes());
    b.extend_from_slice(&(lists.len() as u64).to_le_bytes());
    for list in lists {
        b.extend_from_slice(&(list.len() as u64).to_le_bytes());
        for e in list {
            b.extend_from_slice(&(e.to as u64).to_le_bytes());
            b.extend_from_slice(&e.weight.to_le_bytes());
        }
    }
    write(path, &b)
}

pub fn load_graph_lists(path: &Path) -> Result<Vec<Vec<Edge>>> {
    let bytes = read(path)?;
    let mut r = Reader::new(path, &bytes);
    if r.take(8)? != GRAPH_MAGIC {
        return Err(FormatError::parse(path, "not a graph file"));
    }
    let version = r.u32()?;
    if version != GRAPH_VERSION {
        return Err(FormatError::parse(path, format!("unsupported graph version {version}")));
    }
    let n = r.u64()? as usize;
    let mut lists = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        let m = r.u64()? as usize;
        let mut list = Vec::with_capacity(m.min(1 << 16));
        for _ in 0..m {
            let to = r.u64()? as usize;
            let weight = r.f64()?;
            list.push(Edge { to, weight });
        }
        lists.push(list);
    }
    r.finish()?;
    Ok(lists)
}

pub fn save_knn(knn: &KnnGraph, path: &Path) -> Result<()> {
    save_graph(&WeightedGraph::from_knn(knn).to_lists(), path)
}

/// Loads a graph file that must satisfy the kNN invariants.
pub fn load_knn(path: &Path) -> Result<KnnGraph> {
    let lists = load_graph_lists(path)?;
    let k = lists.first().map_or(0, Vec::len);
    let lists =
        lists.into_iter().map(|l| l.into_iter().map(|e| Neighbor { id: e.to, sim: e.weight }).collect()).collect();
    Ok(KnnGraph::from_lists(k, lists)?)
}

pub fn save_weighted(g: &WeightedGraph, path: &Path) -> Result<()> {
    save_graph(&g.to_lists(), path)
}

pub fn load_weighted(path: &Path) -> Result<WeightedGraph> {
    Ok(WeightedGraph::from_lists(load_graph_lists(path)?)?)
}
