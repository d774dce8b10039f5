//! Delimiter-separated text files: point sets, measures, precomputed
//! affinities and embeddings.
//!
//! Numbers are written with 17 significant digits, which round-trips every
//! `f64` exactly.

use std::io::{Read, Write};

use bistoch_core::affinity::Provenance;
use bistoch_core::{AffinityMatrix, DiffusionEmbedding, Matrix, Measure, PointSet};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("empty input")]
    Empty,
    #[error("{0}")]
    Invalid(String),
}

/// How delimited text is split.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Format {
    pub delimiter: u8,
    /// Skip the first line.
    pub header: bool,
}

impl Default for Format {
    fn default() -> Self {
        Format {
            delimiter: b',',
            header: false,
        }
    }
}

/// Renders `v` with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Reads an equal-width grid of numbers, returning `(rows, cols, row-major data)`.
pub fn read_grid<R: Read>(reader: R, format: Format) -> Result<(usize, usize, Vec<f64>), IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .has_headers(format.header)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            match e.into_kind() {
                csv::ErrorKind::Io(io) => IoError::Io(io),
                kind => IoError::Parse {
                    line,
                    msg: format!("{kind:?}"),
                },
            }
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(IoError::Parse {
                    line,
                    msg: format!("expected {w} fields, found {}", rec.len()),
                })
            }
            _ => {}
        }
        for (k, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| IoError::Parse {
                line,
                msg: format!("field {} is not a number: {field:?}", k + 1),
            })?;
            if !v.is_finite() {
                return Err(IoError::Parse {
                    line,
                    msg: format!("field {} is not finite: {field:?}", k + 1),
                });
            }
            data.push(v);
        }
        rows += 1;
    }
    match width {
        Some(w) if rows > 0 && w > 0 => Ok((rows, w, data)),
        _ => Err(IoError::Empty),
    }
}

pub fn load_points<R: Read>(reader: R, format: Format) -> Result<PointSet, IoError> {
    let (m, d, data) = read_grid(reader, format)?;
    PointSet::from_row_major(m, d, data).map_err(|e| IoError::Invalid(e.to_string()))
}

/// One positive weight per line.
pub fn load_measure<R: Read>(reader: R, format: Format) -> Result<Measure, IoError> {
    let (_, w, data) = read_grid(reader, format)?;
    if w != 1 {
        return Err(IoError::Invalid(format!(
            "measure file must have one value per line, found {w}"
        )));
    }
    Measure::new(data).map_err(|e| IoError::Invalid(e.to_string()))
}

/// Reads an `m x n` affinity grid. The provenance records the SHA-256 of the bytes.
pub fn load_affinity<R: Read>(mut reader: R, format: Format) -> Result<AffinityMatrix, IoError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let digest = format!("sha256:{}", hex::encode(Sha256::digest(&bytes)));
    let (m, n, data) = read_grid(bytes.as_slice(), format)?;
    AffinityMatrix::new(Matrix::from_row_major(m, n, data), Provenance::External { digest })
        .map_err(|e| IoError::Invalid(e.to_string()))
}

pub fn write_matrix<W: Write>(mut w: W, m: &Matrix, delimiter: u8) -> std::io::Result<()> {
    let sep = char::from(delimiter).to_string();
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|&v| fmt_f64(v)).collect();
        writeln!(w, "{}", line.join(&sep))?;
    }
    Ok(())
}

pub fn write_points<W: Write>(w: W, x: &PointSet, delimiter: u8) -> std::io::Result<()> {
    write_matrix(w, x.coords(), delimiter)
}

pub fn write_column<W: Write>(mut w: W, v: &[f64]) -> std::io::Result<()> {
    for &x in v {
        writeln!(w, "{}", fmt_f64(x))?;
    }
    Ok(())
}

/// One row per point. With `header`, a `# t=... lambda=...` comment line and a
/// `psi_2,...,psi_{K+1}` column header come first.
pub fn write_embedding<W: Write>(
    mut w: W,
    e: &DiffusionEmbedding,
    delimiter: u8,
    header: bool,
) -> std::io::Result<()> {
    if header {
        let sep = char::from(delimiter).to_string();
        let lambdas: Vec<String> = e.eigenvalues.iter().map(|&l| fmt_f64(l)).collect();
        writeln!(w, "# t={} lambda={}", fmt_f64(e.time), lambdas.join(" "))?;
        let names: Vec<String> = (0..e.dim()).map(|k| format!("psi_{}", k + 2)).collect();
        writeln!(w, "{}", names.join(&sep))?;
    }
    write_matrix(w, &e.coordinates, delimiter)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_rows() {
        let x = load_points("0,0\n1,0\n0,1\n".as_bytes(), Format::default()).unwrap();
        assert_eq!((x.len(), x.dim()), (3, 2));
        assert_eq!(x.point(2), &[0.0, 1.0]);
    }

    #[test]
    fn single_value() {
        let x = load_points("5".as_bytes(), Format::default()).unwrap();
        assert_eq!((x.len(), x.dim()), (1, 1));
    }

    #[test]
    fn ragged_rows_name_the_line() {
        let err = load_points("1,2\n3,4,5\n".as_bytes(), Format::default()).unwrap_err();
        assert!(matches!(err, IoError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn non_numeric_names_the_line() {
        let err = load_points("1,2\n3,4\nx,5\n".as_bytes(), Format::default()).unwrap_err();
        assert!(matches!(err, IoError::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn empty_input() {
        assert!(matches!(load_points("".as_bytes(), Format::default()), Err(IoError::Empty)));
        assert!(matches!(
            load_points("a,b\n".as_bytes(), Format { delimiter: b',', header: true }),
            Err(IoError::Empty)
        ));
    }

    #[test]
    fn header_and_delimiter() {
        let fmt = Format {
            delimiter: b'\t',
            header: true,
        };
        let x = load_points("x\ty\n1.5\t-2\n".as_bytes(), fmt).unwrap();
        assert_eq!(x.point(0), &[1.5, -2.0]);
    }

    #[test]
    fn measure_file() {
        let mu = load_measure("0.5\n2\n".as_bytes(), Format::default()).unwrap();
        assert_eq!(mu.weights(), &[0.5, 2.0]);
        assert!(load_measure("0.5\n0\n".as_bytes(), Format::default()).is_err());
        assert!(load_measure("0.5,1\n".as_bytes(), Format::default()).is_err());
    }

    #[test]
    fn affinity_digest_is_stable() {
        let a = load_affinity("1,0.5\n0.5,1\n".as_bytes(), Format::default()).unwrap();
        let b = load_affinity("1,0.5\n0.5,1\n".as_bytes(), Format::default()).unwrap();
        assert_eq!(a.provenance(), b.provenance());
        assert!(load_affinity("1,-0.5\n".as_bytes(), Format::default()).is_err());
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
