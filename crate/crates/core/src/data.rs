//! LIBSVM dataset parsing, label mapping, and deterministic batch sampling.
//!
//! Rows are stored sparse (CSR layout); labels are mapped to {-1, +1} at
//! ingest. Gzip-compressed files are accepted when the filename ends in
//! `.gz`.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};
use crate::linalg::DVec;
use crate::rng::{RngStream, Stream};

/// A sparse labeled dataset: `n` rows over `d` features, labels in {-1, +1}.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
    labels: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from per-row `(feature index, value)` pairs, checking
    /// every invariant (indices strictly increasing and `< d`, finite values,
    /// labels in {-1, +1}).
    pub fn from_rows(rows: &[Vec<(usize, f64)>], labels: &[f64], d: usize) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Config(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for (r, row) in rows.iter().enumerate() {
            let mut prev: Option<usize> = None;
            for &(j, v) in row {
                if j >= d {
                    return Err(Error::Config(format!("row {r}: feature index {j} >= d={d}")));
                }
                if let Some(p) = prev {
                    if j <= p {
                        return Err(Error::Config(format!(
                            "row {r}: indices not strictly increasing"
                        )));
                    }
                }
                if !v.is_finite() {
                    return Err(Error::Config(format!("row {r}: non-finite value")));
                }
                prev = Some(j);
                indices.push(j as u32);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        for (r, &y) in labels.iter().enumerate() {
            if y != 1.0 && y != -1.0 {
                return Err(Error::Config(format!("row {r}: label {y} not in {{-1,+1}}")));
            }
        }
        Ok(Self { n: rows.len(), d, indptr, indices, values, labels: labels.to_vec() })
    }

    /// Parses LIBSVM text: one sample per nonempty line, `label idx:val ...`
    /// with 1-based strictly increasing indices; `#` starts a comment.
    /// Labels in {0, 1} are mapped to {-1, +1}; labels already in {-1, +1}
    /// are kept. The feature dimension is the maximum index seen unless
    /// `dim_override` is given.
    pub fn parse_libsvm(reader: impl BufRead, dim_override: Option<usize>) -> Result<Self> {
        let mut indptr = vec![0usize];
        let mut indices: Vec<u32> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut labels: Vec<f64> = Vec::new();
        let mut max_index = 0usize; // 1-based

        for (lineno, line) in reader.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line?;
            let content = match line.find('#') {
                Some(pos) => &line[..pos],
                None => &line[..],
            };
            let mut tokens = content.split_whitespace();
            let Some(label_tok) = tokens.next() else { continue };

            let label: f64 = label_tok.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("non-numeric label '{label_tok}'"),
            })?;
            let label = match label {
                y if y == 1.0 => 1.0,
                y if y == -1.0 => -1.0,
                y if y == 0.0 => -1.0,
                y => {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("label {y} outside {{0, 1, -1, +1}}"),
                    })
                }
            };

            let mut prev_index = 0usize; // 1-based; 0 means none yet
            for tok in tokens {
                let Some((idx_s, val_s)) = tok.split_once(':') else {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("expected index:value pair, got '{tok}'"),
                    });
                };
                let idx: usize = idx_s.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("non-numeric feature index '{idx_s}'"),
                })?;
                if idx == 0 {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: "feature indices are 1-based; got 0".into(),
                    });
                }
                if idx <= prev_index {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("indices not strictly increasing at '{tok}'"),
                    });
                }
                let val: f64 = val_s.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("non-numeric value '{val_s}'"),
                })?;
                if !val.is_finite() {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("non-finite value '{val_s}'"),
                    });
                }
                prev_index = idx;
                max_index = max_index.max(idx);
                indices.push((idx - 1) as u32);
                values.push(val);
            }
            indptr.push(indices.len());
            labels.push(label);
        }

        let d = match dim_override {
            Some(d) => {
                if d < max_index {
                    return Err(Error::Config(format!(
                        "dimension override {d} below maximum feature index {max_index}"
                    )));
                }
                d
            }
            None => max_index,
        };
        Ok(Self { n: labels.len(), d, indptr, indices, values, labels })
    }

    /// Reads a LIBSVM file; transparently gunzips when the name ends `.gz`.
    pub fn from_path(path: impl AsRef<Path>, dim_override: Option<usize>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path)?;
        let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
            Box::new(GzDecoder::new(file))
        } else {
            Box::new(file)
        };
        Self::parse_libsvm(BufReader::new(reader), dim_override)
    }

    /// Writes the dataset back out as LIBSVM text (labels as +1/-1,
    /// indices 1-based). Values use the shortest round-trip float form.
    pub fn write_libsvm(&self, mut w: impl Write) -> Result<()> {
        for i in 0..self.n {
            let label = if self.labels[i] > 0.0 { "+1" } else { "-1" };
            w.write_all(label.as_bytes())?;
            let (idxs, vals) = self.row(i);
            for (&j, &v) in idxs.iter().zip(vals) {
                write!(w, " {}:{}", j + 1, v)?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Raises the feature dimension (e.g. to the max over train and test
    /// splits). Fails if `d` is below an index already present.
    pub fn expand_dim(&mut self, d: usize) -> Result<()> {
        let max_seen = self.indices.iter().map(|&j| j as usize + 1).max().unwrap_or(0);
        if d < max_seen {
            return Err(Error::Config(format!(
                "cannot shrink dimension to {d}; max feature index is {max_seen}"
            )));
        }
        self.d = d;
        Ok(())
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    /// Sparse row `i` as parallel `(indices, values)` slices.
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn dot_row(&self, i: usize, w: &DVec) -> f64 {
        let (idxs, vals) = self.row(i);
        idxs.iter().zip(vals).map(|(&j, &v)| v * w[j as usize]).sum()
    }

    /// `out += alpha * x_i`.
    pub fn add_row_scaled(&self, i: usize, alpha: f64, out: &mut DVec) {
        let (idxs, vals) = self.row(i);
        for (&j, &v) in idxs.iter().zip(vals) {
            out[j as usize] += alpha * v;
        }
    }

    pub fn row_norm_sq(&self, i: usize) -> f64 {
        let (_, vals) = self.row(i);
        vals.iter().map(|v| v * v).sum()
    }

    /// Per-feature maximum absolute value over all rows (1.0 for features
    /// that never appear, so scaling is a no-op for them).
    pub fn maxabs_factors(&self) -> Vec<f64> {
        let mut f = vec![0.0f64; self.d];
        for (&j, &v) in self.indices.iter().zip(&self.values) {
            f[j as usize] = f[j as usize].max(v.abs());
        }
        for x in &mut f {
            if *x == 0.0 {
                *x = 1.0;
            }
        }
        f
    }

    /// Returns a copy with each feature divided by its factor.
    pub fn scaled_by(&self, factors: &[f64]) -> Result<Self> {
        if factors.len() != self.d {
            return Err(Error::Config(format!(
                "{} scale factors for dimension {}",
                factors.len(),
                self.d
            )));
        }
        if factors.iter().any(|&f| !(f > 0.0) || !f.is_finite()) {
            return Err(Error::Config("scale factors must be positive and finite".into()));
        }
        let mut out = self.clone();
        for (slot, &j) in out.values.iter_mut().zip(&self.indices) {
            *slot /= factors[j as usize];
        }
        Ok(out)
    }

    /// Splits into the first `n_first` rows and the remainder, both keeping
    /// dimension `d`. Used to carve a held-out split from one generated
    /// sample so both sides share the same label process.
    pub fn split_at(&self, n_first: usize) -> Result<(Self, Self)> {
        if n_first > self.n {
            return Err(Error::Config(format!(
                "cannot split {} rows at {n_first}",
                self.n
            )));
        }
        let cut = self.indptr[n_first];
        let head = Dataset {
            indptr: self.indptr[..=n_first].to_vec(),
            indices: self.indices[..cut].to_vec(),
            values: self.values[..cut].to_vec(),
            labels: self.labels[..n_first].to_vec(),
            n: n_first,
            d: self.d,
        };
        let tail = Dataset {
            indptr: self.indptr[n_first..].iter().map(|&p| p - cut).collect(),
            indices: self.indices[cut..].to_vec(),
            values: self.values[cut..].to_vec(),
            labels: self.labels[n_first..].to_vec(),
            n: self.n - n_first,
            d: self.d,
        };
        Ok((head, tail))
    }
}

/// How mini-batches are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    /// Independent uniform draws each call.
    WithReplacement,
    /// A fresh shuffle each epoch, emitted as consecutive chunks.
    WithoutReplacementPerEpoch,
}

/// Deterministic mini-batch index source. Identical `(seed, mode,
/// batch_size, n)` reproduce the exact batch sequence on any platform.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    rng: RngStream,
    batch_size: usize,
    mode: BatchMode,
    perm: Vec<usize>,
    pos: usize,
    current_n: usize,
}

impl BatchSampler {
    pub fn new(seed: u64, batch_size: usize, mode: BatchMode) -> Self {
        Self {
            rng: RngStream::new(seed, Stream::Batch),
            batch_size,
            mode,
            perm: Vec::new(),
            pos: 0,
            current_n: 0,
        }
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn next_batch(&mut self, n: usize) -> Result<Vec<usize>> {
        if self.batch_size > n {
            return Err(Error::Config(format!(
                "batch size {} exceeds sample count {n}",
                self.batch_size
            )));
        }
        match self.mode {
            BatchMode::WithReplacement => {
                Ok((0..self.batch_size).map(|_| self.rng.uniform(n)).collect())
            }
            BatchMode::WithoutReplacementPerEpoch => {
                if self.current_n != n || self.pos >= n {
                    self.perm = (0..n).collect();
                    self.rng.shuffle(&mut self.perm);
                    self.pos = 0;
                    self.current_n = n;
                }
                let end = (self.pos + self.batch_size).min(n);
                let batch = self.perm[self.pos..end].to_vec();
                self.pos = end;
                Ok(batch)
            }
        }
    }
}
