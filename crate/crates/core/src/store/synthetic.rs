//! Two "languages" generated from one shared latent factor matrix, used as a
//! ground-truth oracle for the mapping methods.
//!
//! Draw order from the seeded stream: latent `Z` (n×p, row-major), mixing
//! `A_x` (k×p), mixing `A_y` (k×p), then the noise for `X` and `Y` when
//! `noise_sigma > 0`. A rank-deficient mixing draw is replaced in place by
//! the next draw from the stream.

use thiserror::Error;

use super::{EmbeddingMatrix, StoreError};
use crate::linalg::{thin_svd, DenseMatrix, LinalgError, DEFAULT_RCOND};
use crate::rng::SeededRng;

/// Redraws allowed after the first rank-deficient mixing matrix.
pub const MAX_MIXING_REDRAWS: usize = 3;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("mixing matrix still rank-deficient after {0} redraws")]
    RankDeficientMixing(usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mixing {
    /// Independent Gaussian `k×p` mixing per language.
    #[default]
    Independent,
    /// `A_x = A_y = I`; requires `latent_dim == embed_dim`.
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_docs: usize,
    pub latent_dim: usize,
    pub embed_dim: usize,
    /// Standard deviation of the additive Gaussian noise, in embedding units.
    pub noise_sigma: f64,
    pub seed: u64,
    pub mixing: Mixing,
    pub languages: (String, String),
}

impl SyntheticSpec {
    pub fn new(n_docs: usize, latent_dim: usize, embed_dim: usize, noise_sigma: f64, seed: u64) -> Self {
        Self {
            n_docs,
            latent_dim,
            embed_dim,
            noise_sigma,
            seed,
            mixing: Mixing::Independent,
            languages: ("x".into(), "y".into()),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::InvalidSpec(msg));
        if self.n_docs == 0 {
            return bad("n_docs must be at least 1".into());
        }
        if self.latent_dim == 0 || self.latent_dim > self.embed_dim {
            return bad(format!(
                "latent_dim {} must be in 1..={}",
                self.latent_dim, self.embed_dim
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma {} must be finite and >= 0", self.noise_sigma));
        }
        if self.mixing == Mixing::Identity && self.latent_dim != self.embed_dim {
            return bad("identity mixing needs latent_dim == embed_dim".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub x: EmbeddingMatrix,
    pub y: EmbeddingMatrix,
    pub latent: DenseMatrix,
}

pub fn generate_synthetic_pair(spec: &SyntheticSpec) -> Result<SyntheticPair, SynthError> {
    spec.validate()?;
    let (n, p, k) = (spec.n_docs, spec.latent_dim, spec.embed_dim);
    let mut rng = SeededRng::new(spec.seed);

    let latent = gaussian(&mut rng, n, p);
    let (mix_x, mix_y) = match spec.mixing {
        Mixing::Identity => (DenseMatrix::identity(k), DenseMatrix::identity(k)),
        Mixing::Independent => {
            let a = full_rank_mixing(&mut rng, k, p)?;
            let b = full_rank_mixing(&mut rng, k, p)?;
            (a, b)
        }
    };

    let mut x = latent.matmul_t(&mix_x)?;
    let mut y = latent.matmul_t(&mix_y)?;
    if spec.noise_sigma > 0.0 {
        for m in [&mut x, &mut y] {
            for i in 0..n {
                for v in m.row_mut(i) {
                    *v += spec.noise_sigma * rng.normal();
                }
            }
        }
    }

    let ids: Vec<String> = (0..n).map(|i| format!("doc{i:06}")).collect();
    Ok(SyntheticPair {
        x: EmbeddingMatrix::from_dense(&x, ids.clone(), spec.languages.0.clone(), "synthetic")?,
        y: EmbeddingMatrix::from_dense(&y, ids, spec.languages.1.clone(), "synthetic")?,
        latent,
    })
}

fn gaussian(rng: &mut SeededRng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.normal())
}

fn full_rank_mixing(rng: &mut SeededRng, k: usize, p: usize) -> Result<DenseMatrix, SynthError> {
    for _ in 0..=MAX_MIXING_REDRAWS {
        let a = gaussian(rng, k, p);
        if thin_svd(&a)?.numerical_rank(DEFAULT_RCOND) == p {
            return Ok(a);
        }
    }
    Err(SynthError::RankDeficientMixing(MAX_MIXING_REDRAWS))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_mixing_without_noise_gives_equal_spaces() {
        let mut spec = SyntheticSpec::new(20, 6, 6, 0.0, 1);
        spec.mixing = Mixing::Identity;
        let pair = generate_synthetic_pair(&spec).unwrap();
        assert_eq!(pair.x.values(), pair.y.values());
        assert_eq!(pair.x.doc_ids(), pair.y.doc_ids());
        assert_eq!(pair.x.language(), "x");
        assert_eq!(pair.y.language(), "y");
    }

    #[test]
    fn deterministic_under_seed() {
        let spec = SyntheticSpec::new(30, 4, 10, 0.1, 77);
        let a = generate_synthetic_pair(&spec).unwrap();
        let b = generate_synthetic_pair(&spec).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
        assert_eq!(a.latent, b.latent);
        let other = generate_synthetic_pair(&SyntheticSpec { seed: 78, ..spec }).unwrap();
        assert_ne!(a.x, other.x);
    }

    #[test]
    fn noise_leaves_latent_and_mixing_untouched() {
        let clean = generate_synthetic_pair(&SyntheticSpec::new(10, 3, 8, 0.0, 5)).unwrap();
        let noisy = generate_synthetic_pair(&SyntheticSpec::new(10, 3, 8, 0.5, 5)).unwrap();
        assert_eq!(clean.latent, noisy.latent);
        let diff: f64 = clean
            .x
            .values()
            .iter()
            .zip(noisy.x.values())
            .map(|(a, b)| f64::from(a - b).powi(2))
            .sum::<f64>()
            / 80.0;
        assert!((diff.sqrt() - 0.5).abs() < 0.15, "{}", diff.sqrt());
    }

    #[test]
    fn invalid_specs() {
        assert!(generate_synthetic_pair(&SyntheticSpec::new(0, 1, 2, 0.0, 0)).is_err());
        assert!(generate_synthetic_pair(&SyntheticSpec::new(5, 3, 2, 0.0, 0)).is_err());
        assert!(generate_synthetic_pair(&SyntheticSpec::new(5, 1, 2, -1.0, 0)).is_err());
        let mut spec = SyntheticSpec::new(5, 1, 2, 0.0, 0);
        spec.mixing = Mixing::Identity;
        assert!(generate_synthetic_pair(&spec).is_err());
    }
}
