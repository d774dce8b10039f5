//! Model directories.
//!
//! ```text
//! metadata.txt      key=value lines
//! reference.csv     n x d reference coordinates (Gaussian models only)
//! omega.csv         n values
//! eigenvalues.csv   r retained eigenvalues, descending
//! eigenvectors.csv  n x r
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use bistoch_core::affinity::Provenance;
use bistoch_core::{Eigenpairs, Matrix, ReferenceSet, SpectralModel};

use crate::io::{fmt_f64, read_grid, write_column, write_matrix, write_points, Format, IoError};

pub const FORMAT_VERSION: u32 = 1;

const METADATA: &str = "metadata.txt";
const REFERENCE: &str = "reference.csv";
const OMEGA: &str = "omega.csv";
const EIGENVALUES: &str = "eigenvalues.csv";
const EIGENVECTORS: &str = "eigenvectors.csv";

/// Embedding parameters used at fit time; `extend` falls back to them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmbeddingDefaults {
    pub components: usize,
    pub time: f64,
}

pub fn save_model(
    dir: &Path,
    model: &SpectralModel,
    defaults: Option<EmbeddingDefaults>,
) -> Result<(), IoError> {
    fs::create_dir_all(dir)?;
    let mut meta = BufWriter::new(File::create(dir.join(METADATA))?);
    writeln!(meta, "format_version={FORMAT_VERSION}")?;
    writeln!(meta, "m={}", model.m())?;
    writeln!(meta, "n={}", model.n())?;
    match model.d() {
        Some(d) => writeln!(meta, "d={d}")?,
        None => writeln!(meta, "d=none")?,
    }
    writeln!(meta, "rank={}", model.rank())?;
    writeln!(meta, "affinity={}", model.provenance().builder_name())?;
    match model.provenance() {
        Provenance::Gaussian { epsilon } => writeln!(meta, "epsilon={}", fmt_f64(*epsilon))?,
        Provenance::External { digest } => writeln!(meta, "digest={digest}")?,
    }
    writeln!(meta, "cutoff={}", fmt_f64(model.cutoff()))?;
    writeln!(meta, "density_tol={}", fmt_f64(model.density_tol()))?;
    writeln!(meta, "lambda_max_warning={}", model.lambda_max_warning())?;
    if let Some(e) = defaults {
        writeln!(meta, "components={}", e.components)?;
        writeln!(meta, "time={}", fmt_f64(e.time))?;
    }
    meta.flush()?;

    if let Some(y) = model.reference() {
        write_points(BufWriter::new(File::create(dir.join(REFERENCE))?), y.points(), b',')?;
    }
    write_column(BufWriter::new(File::create(dir.join(OMEGA))?), model.omega())?;
    write_column(
        BufWriter::new(File::create(dir.join(EIGENVALUES))?),
        model.eigenvalues(),
    )?;
    write_matrix(
        BufWriter::new(File::create(dir.join(EIGENVECTORS))?),
        model.eigenvectors(),
        b',',
    )?;
    Ok(())
}

fn parse_metadata(text: &str) -> Result<BTreeMap<String, String>, IoError> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| IoError::Parse {
            line: i as u64 + 1,
            msg: format!("expected key=value in {METADATA}"),
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn get<'a>(meta: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str, IoError> {
    meta.get(key)
        .map(String::as_str)
        .ok_or_else(|| IoError::Invalid(format!("{METADATA} is missing `{key}`")))
}

fn parse<T: std::str::FromStr>(meta: &BTreeMap<String, String>, key: &str) -> Result<T, IoError> {
    let raw = get(meta, key)?;
    raw.parse()
        .map_err(|_| IoError::Invalid(format!("{METADATA}: `{key}` has bad value {raw:?}")))
}

fn read_file(dir: &Path, name: &str) -> Result<(usize, usize, Vec<f64>), IoError> {
    let f = File::open(dir.join(name))
        .map_err(|e| IoError::Invalid(format!("{}: {e}", dir.join(name).display())))?;
    read_grid(f, Format::default()).map_err(|e| match e {
        IoError::Parse { line, msg } => IoError::Invalid(format!("{name}: line {line}: {msg}")),
        e => e,
    })
}

fn read_vector(dir: &Path, name: &str, len: usize) -> Result<Vec<f64>, IoError> {
    let (rows, cols, data) = read_file(dir, name)?;
    if cols != 1 || rows != len {
        return Err(IoError::Invalid(format!(
            "{name}: expected {len} x 1, found {rows} x {cols}"
        )));
    }
    Ok(data)
}

pub fn load_model(dir: &Path) -> Result<(SpectralModel, Option<EmbeddingDefaults>), IoError> {
    let meta = parse_metadata(&fs::read_to_string(dir.join(METADATA))?)?;
    let version: u32 = parse(&meta, "format_version")?;
    if version != FORMAT_VERSION {
        return Err(IoError::Invalid(format!(
            "unsupported model format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let m: usize = parse(&meta, "m")?;
    let n: usize = parse(&meta, "n")?;
    let r: usize = parse(&meta, "rank")?;
    let cutoff: f64 = parse(&meta, "cutoff")?;
    let density_tol: f64 = parse(&meta, "density_tol")?;
    let provenance = match get(&meta, "affinity")? {
        "gaussian" => Provenance::Gaussian {
            epsilon: parse(&meta, "epsilon")?,
        },
        "external" => Provenance::External {
            digest: get(&meta, "digest")?.to_string(),
        },
        other => return Err(IoError::Invalid(format!("unknown affinity builder {other:?}"))),
    };
    let reference = match get(&meta, "d")? {
        "none" => None,
        _ => {
            let d: usize = parse(&meta, "d")?;
            let (rows, cols, data) = read_file(dir, REFERENCE)?;
            if rows != n || cols != d {
                return Err(IoError::Invalid(format!(
                    "{REFERENCE}: expected {n} x {d}, found {rows} x {cols}"
                )));
            }
            let pts = bistoch_core::PointSet::from_row_major(rows, cols, data)
                .map_err(|e| IoError::Invalid(e.to_string()))?;
            Some(ReferenceSet::new(pts))
        }
    };
    let omega = read_vector(dir, OMEGA, n)?;
    let values = read_vector(dir, EIGENVALUES, r)?;
    let (rows, cols, data) = read_file(dir, EIGENVECTORS)?;
    if rows != n || cols != r {
        return Err(IoError::Invalid(format!(
            "{EIGENVECTORS}: expected {n} x {r}, found {rows} x {cols}"
        )));
    }
    let pairs = Eigenpairs {
        spectrum: values.clone(),
        values,
        vectors: Matrix::from_row_major(rows, cols, data),
        cutoff,
    };
    let model = SpectralModel::new(pairs, omega, reference, provenance, m, density_tol)
        .map_err(|e| IoError::Invalid(e.to_string()))?;
    let defaults = match (meta.get("components"), meta.get("time")) {
        (Some(_), Some(_)) => Some(EmbeddingDefaults {
            components: parse(&meta, "components")?,
            time: parse(&meta, "time")?,
        }),
        _ => None,
    };
    Ok((model, defaults))
}
