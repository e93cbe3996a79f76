//! Predefined codebooks of sensing coefficient vectors.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};

use crate::error::{OasError, Result};
use crate::rng::seeded_rng;

/// A finite set of `S` candidate coefficient vectors in `R^N`, stored one
/// codeword per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    vectors: DMatrix<f64>,
    entry_variance: f64,
    seed: u64,
}

impl Codebook {
    /// Wraps an explicit `S x N` matrix. Used for hand-built codebooks; the
    /// variance and seed are recorded as metadata only.
    pub fn from_rows(vectors: DMatrix<f64>, entry_variance: f64, seed: u64) -> Result<Self> {
        if vectors.nrows() == 0 || vectors.ncols() == 0 {
            return Err(OasError::invalid(
                "codebook must have at least one vector of length >= 1",
            ));
        }
        if !(entry_variance > 0.0) {
            return Err(OasError::invalid("codebook entry variance must be positive"));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(OasError::invalid("codebook entries must be finite"));
        }
        Ok(Codebook {
            vectors,
            entry_variance,
            seed,
        })
    }

    /// Number of codewords `S`.
    pub fn size(&self) -> usize {
        self.vectors.nrows()
    }

    /// Codeword length `N`.
    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn entry_variance(&self) -> f64 {
        self.entry_variance
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// All codewords as an `S x N` matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn vector(&self, index: usize) -> DVector<f64> {
        self.vectors.row(index).transpose()
    }

    /// Stacks the codewords at `source_indices` into a sensing matrix.
    pub fn sensing_matrix(&self, source_indices: &[usize]) -> Result<SensingMatrix> {
        SensingMatrix::from_codebook(self, source_indices.to_vec())
    }

    /// Writes the codebook as a whitespace-separated text matrix: a header
    /// line `S N entry_variance seed` followed by one codeword per line.
    /// Floats use the shortest round-trip representation.
    pub fn write_text(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| OasError::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut emit = || -> std::io::Result<()> {
            writeln!(
                w,
                "{} {} {} {}",
                self.size(),
                self.dim(),
                self.entry_variance,
                self.seed
            )?;
            for row in self.vectors.row_iter() {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
            w.flush()
        };
        emit().map_err(|e| OasError::io(path, e))
    }

    pub fn read_text(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| OasError::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let bad = |msg: &str| OasError::Config(format!("{}: {msg}", path.display()));

        let header = lines
            .next()
            .ok_or_else(|| bad("empty codebook file"))?
            .map_err(|e| OasError::io(path, e))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(bad("header must be `S N entry_variance seed`"));
        }
        let s: usize = fields[0].parse().map_err(|_| bad("bad S"))?;
        let n: usize = fields[1].parse().map_err(|_| bad("bad N"))?;
        let var: f64 = fields[2].parse().map_err(|_| bad("bad entry_variance"))?;
        let seed: u64 = fields[3].parse().map_err(|_| bad("bad seed"))?;

        let mut data = Vec::with_capacity(s * n);
        for line in lines.take(s) {
            let line = line.map_err(|e| OasError::io(path, e))?;
            let before = data.len();
            for tok in line.split_whitespace() {
                data.push(tok.parse::<f64>().map_err(|_| bad("bad matrix entry"))?);
            }
            if data.len() - before != n {
                return Err(bad("row length does not match N"));
            }
        }
        if data.len() != s * n {
            return Err(bad("fewer rows than S"));
        }
        Codebook::from_rows(DMatrix::from_row_slice(s, n, &data), var, seed)
    }
}

/// Draws `s` codewords of length `n` with i.i.d. `N(0, entry_variance)`
/// entries. Entries are drawn row by row from a ChaCha8 stream, so the same
/// seed reproduces the codebook bit-for-bit.
pub fn generate_codebook(s: usize, n: usize, entry_variance: f64, seed: u64) -> Result<Codebook> {
    if s == 0 || n == 0 {
        return Err(OasError::invalid(format!(
            "codebook size and dimension must be positive (got S={s}, N={n})"
        )));
    }
    if !(entry_variance > 0.0) || !entry_variance.is_finite() {
        return Err(OasError::invalid(format!(
            "entry variance must be positive and finite (got {entry_variance})"
        )));
    }
    let normal = Normal::new(0.0, entry_variance.sqrt()).map_err(|e| OasError::invalid(e.to_string()))?;
    let mut rng = seeded_rng(seed);
    let vectors = DMatrix::from_row_iterator(s, n, (0..s * n).map(|_| normal.sample(&mut rng)));
    Ok(Codebook {
        vectors,
        entry_variance,
        seed,
    })
}

/// `K` codewords chosen for one subframe, stacked as rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix {
    rows: DMatrix<f64>,
    source_indices: Vec<usize>,
}

impl SensingMatrix {
    pub fn from_codebook(codebook: &Codebook, source_indices: Vec<usize>) -> Result<Self> {
        if source_indices.is_empty() {
            return Err(OasError::invalid("sensing matrix needs at least one codeword"));
        }
        let s = codebook.size();
        let mut seen = vec![false; s];
        for &i in &source_indices {
            if i >= s {
                return Err(OasError::invalid(format!(
                    "codeword index {i} outside codebook of size {s}"
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(OasError::invalid(format!("codeword index {i} selected twice")));
            }
        }
        let rows = codebook.matrix().select_rows(source_indices.iter());
        Ok(SensingMatrix { rows, source_indices })
    }

    /// The `K x N` matrix `A`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn source_indices(&self) -> &[usize] {
        &self.source_indices
    }

    pub fn nrows(&self) -> usize {
        self.rows.nrows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_variance_statistics() {
        let var = 1.0 / 50f64.sqrt();
        let cb = generate_codebook(1000, 200, var, 7).unwrap();
        assert_eq!((cb.size(), cb.dim()), (1000, 200));
        let count = (cb.size() * cb.dim()) as f64;
        let mean = cb.matrix().sum() / count;
        let sample_var = cb.matrix().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0);
        assert!(mean.abs() <= 3.0 * (var / count).sqrt(), "mean {mean}");
        assert!((sample_var / var - 1.0).abs() < 0.05, "variance {sample_var} vs {var}");
    }

    #[test]
    fn scalar_codebook_is_reproducible() {
        let a = generate_codebook(1, 1, 1.0, 0).unwrap();
        let b = generate_codebook(1, 1, 1.0, 0).unwrap();
        assert_eq!(a.matrix()[(0, 0)].to_bits(), b.matrix()[(0, 0)].to_bits());
    }

    #[test]
    fn seed_contract() {
        let a = generate_codebook(3, 4, 0.25, 1).unwrap();
        let b = generate_codebook(3, 4, 0.25, 1).unwrap();
        let c = generate_codebook(3, 4, 0.25, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.matrix(), c.matrix());
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(
            generate_codebook(0, 4, 1.0, 0),
            Err(OasError::InvalidArgument(_))
        ));
        assert!(matches!(
            generate_codebook(4, 0, 1.0, 0),
            Err(OasError::InvalidArgument(_))
        ));
        assert!(matches!(
            generate_codebook(4, 4, 0.0, 0),
            Err(OasError::InvalidArgument(_))
        ));
        assert!(matches!(
            generate_codebook(4, 4, -1.0, 0),
            Err(OasError::InvalidArgument(_))
        ));
    }

    #[test]
    fn sensing_matrix_rows_match_sources() {
        let cb = generate_codebook(10, 5, 0.5, 3).unwrap();
        let a = cb.sensing_matrix(&[7, 2, 4]).unwrap();
        for (k, &src) in a.source_indices().iter().enumerate() {
            assert_eq!(a.matrix().row(k), cb.matrix().row(src));
        }
        assert!(cb.sensing_matrix(&[1, 1]).is_err());
        assert!(cb.sensing_matrix(&[10]).is_err());
    }

    #[test]
    fn text_file_round_trip() {
        let cb = generate_codebook(6, 4, 0.02, 99).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cb.txt");
        cb.write_text(&path).unwrap();
        let back = Codebook::read_text(&path).unwrap();
        assert_eq!(cb, back);
    }
}
