//! Plain-text cloud files and corpus manifests.
//!
//! A cloud file holds one point per line: three whitespace-separated decimal
//! reals, with `#`-prefixed comment lines and blank lines allowed. A manifest
//! lists one `path<TAB>family` entry per line, paths resolved relative to the
//! manifest's directory.

use super::{PointCloud, ShapeFamily};
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

/// Writes one point per line with 17 significant digits, which round-trips
/// every f64 exactly.
pub fn save_cloud(cloud: &PointCloud, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(cloud.len() * 75);
    for p in &cloud.points {
        writeln!(out, "{:.16e} {:.16e} {:.16e}", p[0], p[1], p[2])
            .expect("writing to a String cannot fail");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_cloud(path: &Path) -> Result<PointCloud> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: format!("expected 3 coordinates, found {}", fields.len()),
            });
        }
        let mut p = [0.0f64; 3];
        for (k, field) in fields.iter().enumerate() {
            p[k] = field.parse().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: format!("bad coordinate {field:?}: {e}"),
            })?;
            if !p[k].is_finite() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    msg: format!("non-finite coordinate {field:?}"),
                });
            }
        }
        points.push(p);
    }
    if points.is_empty() {
        return Err(Error::Data(format!(
            "{}: no points in cloud file",
            path.display()
        )));
    }
    Ok(PointCloud::new(points))
}

/// One corpus entry: where the cloud lives and, when known, its family.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub family: Option<ShapeFamily>,
}

/// Writes `relative-path<TAB>family` lines. Paths are stored as given.
pub fn save_manifest(entries: &[(String, ShapeFamily)], path: &Path) -> Result<()> {
    let mut out = String::new();
    for (rel, family) in entries {
        writeln!(out, "{rel}\t{}", family.name()).expect("writing to a String cannot fail");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Parses a manifest; relative paths are resolved against the manifest's
/// parent directory.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (rel, label) = match line.split_once('\t') {
            Some((r, l)) => (r.trim(), Some(l.trim())),
            None => (line, None),
        };
        let family = match label {
            None | Some("") => None,
            Some(l) => Some(ShapeFamily::parse(l).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: format!("unknown shape family {l:?}"),
            })?),
        };
        let p = Path::new(rel);
        let resolved = if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        };
        entries.push(ManifestEntry {
            path: resolved,
            family,
        });
    }
    if entries.is_empty() {
        return Err(Error::Data(format!(
            "{}: manifest lists no clouds",
            path.display()
        )));
    }
    Ok(entries)
}

/// A loaded corpus: clouds plus whatever family labels the source carried.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub clouds: Vec<PointCloud>,
    pub families: Vec<Option<ShapeFamily>>,
    pub paths: Vec<PathBuf>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }
}

/// Loads a corpus from a manifest file or from a directory. A directory
/// containing a `manifest.txt` is read through that manifest (which also
/// supplies family labels); otherwise every `*.txt` file in the directory
/// is taken as a cloud, in name order.
pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let entries = if path.is_dir() {
        let manifest = path.join("manifest.txt");
        if manifest.is_file() {
            load_manifest(&manifest)?
        } else {
            let mut files: Vec<PathBuf> = fs::read_dir(path)
                .map_err(|e| Error::io(path, e))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|ext| ext == "txt"))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(Error::Data(format!(
                    "{}: directory contains no .txt cloud files",
                    path.display()
                )));
            }
            files
                .into_iter()
                .map(|p| ManifestEntry {
                    path: p,
                    family: None,
                })
                .collect()
        }
    } else {
        load_manifest(path)?
    };
    let mut corpus = Corpus {
        clouds: Vec::with_capacity(entries.len()),
        families: Vec::with_capacity(entries.len()),
        paths: Vec::with_capacity(entries.len()),
    };
    for entry in entries {
        corpus.clouds.push(load_cloud(&entry.path)?);
        corpus.families.push(entry.family);
        corpus.paths.push(entry.path);
    }
    Ok(corpus)
}
