//! Additive process noise: sources, seeded draws and sample files.
//!
//! Gaussian draws use Box-Muller on the uniform stream of a ChaCha8
//! generator seeded with a `u64`; results depend only on the seed.

use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone)]
pub enum NoiseSource {
    Gaussian {
        mean: DVector<f64>,
        covariance: DMatrix<f64>,
        /// `L` with `L L^T = covariance`.
        factor: DMatrix<f64>,
    },
    /// Recorded samples; consumed in order for abstraction, resampled
    /// uniformly for simulation.
    Empirical { samples: Vec<DVector<f64>> },
    /// `sum_j weights[j] * eta_j` over `weights.len()` consecutive base draws.
    Lumped {
        base: Box<NoiseSource>,
        weights: Vec<DMatrix<f64>>,
    },
}

impl NoiseSource {
    pub fn gaussian(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        check_dim("noise covariance rows", n, covariance.nrows())?;
        check_dim("noise covariance cols", n, covariance.ncols())?;
        let asym = (&covariance - covariance.transpose()).abs().max();
        if asym > 1e-12 * (1.0 + covariance.abs().max()) {
            return Err(Error::InvalidArgument("noise covariance is not symmetric".into()));
        }
        let factor = match covariance.clone().cholesky() {
            Some(ch) => ch.l(),
            None => {
                let eig = covariance.clone().symmetric_eigen();
                let tol = 1e-12 * (1.0 + covariance.abs().max());
                if eig.eigenvalues.iter().any(|&l| l < -tol) {
                    return Err(Error::InvalidArgument(
                        "noise covariance is not positive semidefinite".into(),
                    ));
                }
                let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
                &eig.eigenvectors * DMatrix::from_diagonal(&sqrt)
            }
        };
        Ok(NoiseSource::Gaussian {
            mean,
            covariance,
            factor,
        })
    }

    pub fn standard_gaussian(n: usize) -> Self {
        NoiseSource::Gaussian {
            mean: DVector::zeros(n),
            covariance: DMatrix::identity(n, n),
            factor: DMatrix::identity(n, n),
        }
    }

    /// Zero noise of dimension `n`.
    pub fn zero(n: usize) -> Self {
        NoiseSource::Gaussian {
            mean: DVector::zeros(n),
            covariance: DMatrix::zeros(n, n),
            factor: DMatrix::zeros(n, n),
        }
    }

    pub fn empirical(samples: Vec<DVector<f64>>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty sample list".into()))?;
        let n = first.len();
        for s in &samples {
            check_dim("noise sample", n, s.len())?;
        }
        Ok(NoiseSource::Empirical { samples })
    }

    pub fn from_file(path: &Path, dim: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::empirical(parse_samples(&text, dim)?)
    }

    pub fn dim(&self) -> usize {
        match self {
            NoiseSource::Gaussian { mean, .. } => mean.len(),
            NoiseSource::Empirical { samples } => samples[0].len(),
            NoiseSource::Lumped { weights, .. } => weights[0].nrows(),
        }
    }

    /// One draw with simulation semantics.
    pub fn draw(&self, rng: &mut NoiseRng) -> DVector<f64> {
        match self {
            NoiseSource::Gaussian { mean, factor, .. } => {
                let z = rng.standard_normal_vector(mean.len());
                mean + factor * z
            }
            NoiseSource::Empirical { samples } => {
                samples[rng.index(samples.len())].clone()
            }
            NoiseSource::Lumped { base, weights } => {
                let mut acc = DVector::zeros(weights[0].nrows());
                for w in weights {
                    acc += w * base.draw(rng);
                }
                acc
            }
        }
    }

    /// `count` draws for building intervals. Empirical sources yield their
    /// first `count` rows in file order.
    pub fn sample_set(&self, count: usize, seed: u64) -> Result<SampleSet> {
        if count == 0 {
            return Err(Error::InvalidArgument("sample count must be at least 1".into()));
        }
        let mut rng = NoiseRng::new(seed);
        let samples = self.ordered_draws(count, &mut rng)?;
        Ok(SampleSet { samples, seed })
    }

    fn ordered_draws(&self, count: usize, rng: &mut NoiseRng) -> Result<Vec<DVector<f64>>> {
        match self {
            NoiseSource::Gaussian { .. } => Ok((0..count).map(|_| self.draw(rng)).collect()),
            NoiseSource::Empirical { samples } => {
                if samples.len() < count {
                    return Err(Error::InvalidArgument(format!(
                        "{count} samples requested but only {} available",
                        samples.len()
                    )));
                }
                Ok(samples[..count].to_vec())
            }
            NoiseSource::Lumped { base, weights } => {
                let m = weights.len();
                let raw = base.ordered_draws(count * m, rng)?;
                Ok(raw
                    .chunks(m)
                    .map(|chunk| {
                        chunk
                            .iter()
                            .zip(weights)
                            .fold(DVector::zeros(weights[0].nrows()), |acc, (eta, w)| {
                                acc + w * eta
                            })
                    })
                    .collect())
            }
        }
    }
}

/// The noise samples shared by every action's interval row.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub samples: Vec<DVector<f64>>,
    pub seed: u64,
}

impl SampleSet {
    pub fn new(samples: Vec<DVector<f64>>, seed: u64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("sample set is empty".into()));
        }
        Ok(Self { samples, seed })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Seeded uniform stream plus Box-Muller normals.
#[derive(Debug, Clone)]
pub struct NoiseRng {
    inner: ChaCha8Rng,
}

impl NoiseRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform on `(0, 1]`.
    pub fn uniform(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn index(&mut self, len: usize) -> usize {
        ((self.uniform() * len as f64).ceil() as usize).clamp(1, len) - 1
    }

    pub fn standard_normal_pair(&mut self) -> (f64, f64) {
        let r = (-2.0 * self.uniform().ln()).sqrt();
        let theta = TAU * self.uniform();
        (r * theta.cos(), r * theta.sin())
    }

    pub fn standard_normal_vector(&mut self, n: usize) -> DVector<f64> {
        let mut out = DVector::zeros(n);
        let mut i = 0;
        while i < n {
            let (a, b) = self.standard_normal_pair();
            out[i] = a;
            if i + 1 < n {
                out[i + 1] = b;
            }
            i += 2;
        }
        out
    }
}

/// One sample per line, `dim` whitespace-separated floats; blank lines and
/// lines starting with `#` are skipped.
pub fn parse_samples(text: &str, dim: usize) -> Result<Vec<DVector<f64>>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|e| Error::Parse {
                    line: idx + 1,
                    message: format!("`{tok}`: {e}"),
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected {dim} columns, found {}", values.len()),
            });
        }
        out.push(DVector::from_vec(values));
    }
    if out.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "no samples".into(),
        });
    }
    Ok(out)
}
