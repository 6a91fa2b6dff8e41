//! On-disk cache of Green columns.
//!
//! Layout: `<root>/n{n}/col_{a}_{b}_{c}_{d}.mbf` (field files) and
//! `<root>/n{n}/index.json` mapping each source to its solver metadata and the
//! SHA-256 of the column file. A cached column is reused only if it was
//! solved at least as tightly as requested and its digest still matches.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::solver::{solve_green_column, GreenColumn, SolveStats};
use crate::error::{Error, Result};
use crate::lattice::{io, GridSpec, Site};

/// Environment variable overriding the cache directory.
pub const CACHE_ENV: &str = "CACHE_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub source: [i64; 4],
    pub file: String,
    pub tolerance: f64,
    pub iterations: usize,
    pub residual: f64,
    pub sha256: String,
}

type Index = BTreeMap<String, IndexEntry>;

fn key(source: Site) -> String {
    let c = source.coords();
    format!("{}_{}_{}_{}", c[0], c[1], c[2], c[3])
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// SHA-256 (hex) of a column's field file.
pub fn column_digest(column: &GreenColumn) -> String {
    hex_digest(&io::to_bytes(&column.values))
}

/// Writes `bytes` to `path` through a temporary file and a rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub struct ColumnCache {
    root: PathBuf,
    lock: Mutex<()>,
}

impl ColumnCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            lock: Mutex::new(()),
        }
    }

    /// `$CACHE_DIR` when set, otherwise `default`.
    pub fn from_env_or(default: impl Into<PathBuf>) -> Self {
        match std::env::var_os(CACHE_ENV) {
            Some(dir) if !dir.is_empty() => Self::new(PathBuf::from(dir)),
            _ => Self::new(default),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, grid: GridSpec) -> PathBuf {
        self.root.join(format!("n{}", grid.n()))
    }

    fn read_index(dir: &Path) -> Result<Index> {
        let path = dir.join("index.json");
        match fs::read_to_string(&path) {
            Ok(text) => Ok(serde_json::from_str(&text)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Index::new()),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    /// A cached column solved to a tolerance `<= tol`, if any.
    pub fn lookup(&self, grid: GridSpec, source: Site, tol: f64) -> Result<Option<GreenColumn>> {
        let dir = self.dir(grid);
        let index = {
            let _guard = self.lock.lock().unwrap_or_else(|p| p.into_inner());
            Self::read_index(&dir)?
        };
        let Some(entry) = index.get(&key(source)) else {
            return Ok(None);
        };
        if entry.tolerance > tol {
            return Ok(None);
        }
        let path = dir.join(&entry.file);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(_) => return Ok(None),
        };
        if hex_digest(&bytes) != entry.sha256 {
            return Ok(None);
        }
        let values = io::read_binary(&bytes[..])?;
        if values.grid() != grid {
            return Ok(None);
        }
        Ok(Some(GreenColumn {
            grid,
            source,
            values,
            stats: SolveStats {
                iterations: entry.iterations,
                residual: entry.residual,
                tolerance: entry.tolerance,
                converged: true,
            },
        }))
    }

    /// Persists a converged column; non-converged columns are ignored.
    pub fn store(&self, column: &GreenColumn) -> Result<()> {
        if !column.converged() {
            return Ok(());
        }
        let dir = self.dir(column.grid);
        let _guard = self.lock.lock().unwrap_or_else(|p| p.into_inner());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let name = format!("col_{}.mbf", key(column.source));
        let bytes = io::to_bytes(&column.values);
        write_atomic(&dir.join(&name), &bytes)?;
        let mut index = Self::read_index(&dir)?;
        index.insert(
            key(column.source),
            IndexEntry {
                source: column.source.coords(),
                file: name,
                tolerance: column.stats.tolerance,
                iterations: column.stats.iterations,
                residual: column.stats.residual,
                sha256: hex_digest(&bytes),
            },
        );
        write_atomic(
            &dir.join("index.json"),
            serde_json::to_string_pretty(&index)?.as_bytes(),
        )
    }

    /// Cached column if good enough, otherwise solve, store and return.
    pub fn column(&self, grid: GridSpec, source: Site, tol: f64) -> Result<GreenColumn> {
        if let Some(col) = self.lookup(grid, source, tol)? {
            return Ok(col);
        }
        let col = solve_green_column(grid, source, tol)?.require_converged()?;
        self.store(&col)?;
        Ok(col)
    }
}

/// Green columns, optionally backed by a [`ColumnCache`].
pub struct ColumnSource {
    cache: Option<ColumnCache>,
}

impl ColumnSource {
    pub fn direct() -> Self {
        Self { cache: None }
    }

    pub fn cached(cache: ColumnCache) -> Self {
        Self { cache: Some(cache) }
    }

    pub fn column(&self, grid: GridSpec, source: Site, tol: f64) -> Result<GreenColumn> {
        match &self.cache {
            Some(c) => c.column(grid, source, tol),
            None => solve_green_column(grid, source, tol)?.require_converged(),
        }
    }
}
