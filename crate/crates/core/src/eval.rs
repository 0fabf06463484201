//! Mate retrieval rate and mean reciprocal rank over cosine similarity.
//!
//! Row `d` of a similarity matrix holds the scores of query `d` against every
//! target; its mate is target `d`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{cosine_matrix, DenseMatrix, LinalgError};
use crate::mappers::{MapperError, MapperModel, Method, Side};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("similarity matrix is {rows}x{cols}, mate evaluation needs a square matrix")]
    NotSquare { rows: usize, cols: usize },
    #[error("query and target ids differ at position {0}")]
    IdMismatch(usize),
    #[error("expected {expected} ids, got {found}")]
    IdCount { expected: usize, found: usize },
    #[error("similarity {value} at ({row}, {col}) is outside [-1, 1]")]
    OutOfRange { row: usize, col: usize, value: f64 },
    #[error("nothing to evaluate")]
    Empty,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Mapper(#[from] MapperError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    values: DenseMatrix,
    query_ids: Vec<String>,
    target_ids: Vec<String>,
}

impl SimilarityMatrix {
    pub fn new(values: DenseMatrix, query_ids: Vec<String>, target_ids: Vec<String>) -> Result<Self> {
        let (rows, cols) = values.shape();
        if query_ids.len() != rows {
            return Err(EvalError::IdCount {
                expected: rows,
                found: query_ids.len(),
            });
        }
        if target_ids.len() != cols {
            return Err(EvalError::IdCount {
                expected: cols,
                found: target_ids.len(),
            });
        }
        for i in 0..rows {
            for (j, &value) in values.row(i).iter().enumerate() {
                if !(-1.0..=1.0).contains(&value) {
                    return Err(EvalError::OutOfRange { row: i, col: j, value });
                }
            }
        }
        Ok(Self {
            values,
            query_ids,
            target_ids,
        })
    }

    /// Positional ids `0..n`, for matrices whose rows are already aligned.
    pub fn from_values(values: DenseMatrix) -> Result<Self> {
        let q = (0..values.rows()).map(|i| i.to_string()).collect();
        let t = (0..values.cols()).map(|i| i.to_string()).collect();
        Self::new(values, q, t)
    }

    /// Cosine similarity of every query row against every target row.
    pub fn cosine(queries: &DenseMatrix, targets: &DenseMatrix) -> Result<Self> {
        Self::from_values(cosine_matrix(queries, targets)?)
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn query_ids(&self) -> &[String] {
        &self.query_ids
    }

    pub fn target_ids(&self) -> &[String] {
        &self.target_ids
    }

    fn check_mates(&self) -> Result<usize> {
        let (rows, cols) = self.values.shape();
        if rows != cols {
            return Err(EvalError::NotSquare { rows, cols });
        }
        if let Some(i) = (0..rows).find(|&i| self.query_ids[i] != self.target_ids[i]) {
            return Err(EvalError::IdMismatch(i));
        }
        if rows == 0 {
            return Err(EvalError::Empty);
        }
        Ok(rows)
    }
}

/// Index of the row maximum; ties go to the lowest index.
fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Fraction of queries whose most similar target is their mate.
pub fn mate_retrieval_rate(s: &SimilarityMatrix) -> Result<f64> {
    let n = s.check_mates()?;
    let hits = (0..n)
        .into_par_iter()
        .filter(|&d| argmax(s.values.row(d)) == d)
        .count();
    Ok(hits as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranks {
    /// 1-based rank of each query's mate.
    pub ranks: Vec<usize>,
    pub mean_reciprocal_rank: f64,
}

/// Rank of each mate, counting only strictly better targets.
pub fn reciprocal_ranks(s: &SimilarityMatrix) -> Result<Ranks> {
    let n = s.check_mates()?;
    let ranks: Vec<usize> = (0..n)
        .into_par_iter()
        .map(|d| {
            let row = s.values.row(d);
            1 + row.iter().filter(|&&v| v > row[d]).count()
        })
        .collect();
    let mean_reciprocal_rank = mean_reciprocal(&ranks);
    Ok(Ranks {
        ranks,
        mean_reciprocal_rank,
    })
}

/// Mean of `1/r` with the terms summed smallest first, so the result
/// depends only on the multiset of ranks.
pub fn mean_reciprocal(ranks: &[usize]) -> f64 {
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    sorted.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64
}

/// Double-loop reference implementations of both metrics.
pub mod brute_force {
    use super::{Result, SimilarityMatrix};

    pub fn mate_retrieval_rate(s: &SimilarityMatrix) -> Result<f64> {
        let n = s.check_mates()?;
        let v = &s.values;
        let mut hits = 0usize;
        for d in 0..n {
            let mut won = true;
            for j in 0..n {
                let beaten = if j < d { v[(d, j)] >= v[(d, d)] } else { v[(d, j)] > v[(d, d)] };
                if beaten {
                    won = false;
                }
            }
            if won {
                hits += 1;
            }
        }
        Ok(hits as f64 / n as f64)
    }

    pub fn reciprocal_ranks(s: &SimilarityMatrix) -> Result<(Vec<usize>, f64)> {
        let n = s.check_mates()?;
        let v = &s.values;
        let mut ranks = vec![1usize; n];
        for d in 0..n {
            for j in 0..n {
                if j != d && v[(d, j)] > v[(d, d)] {
                    ranks[d] += 1;
                }
            }
        }
        let mrr = super::mean_reciprocal(&ranks);
        Ok((ranks, mrr))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalScores {
    pub mate_retrieval_rate: f64,
    pub mean_reciprocal_rank: f64,
    pub n_queries: usize,
}

pub fn score(s: &SimilarityMatrix) -> Result<RetrievalScores> {
    Ok(RetrievalScores {
        mate_retrieval_rate: mate_retrieval_rate(s)?,
        mean_reciprocal_rank: reciprocal_ranks(s)?.mean_reciprocal_rank,
        n_queries: s.values.rows(),
    })
}

/// Encodes the test rows of both languages and scores mate retrieval.
pub fn evaluate_pair(model: &MapperModel, x_test: &DenseMatrix, y_test: &DenseMatrix) -> Result<RetrievalScores> {
    if x_test.shape() != y_test.shape() {
        return Err(EvalError::NotSquare {
            rows: x_test.rows(),
            cols: y_test.rows(),
        });
    }
    let (qx, ty) = rayon::join(
        || model.encode_batch(x_test, Side::Source),
        || model.encode_batch(y_test, Side::Target),
    );
    score(&SimilarityMatrix::cosine(&qx?, &ty?)?)
}

/// One evaluated cell of the experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    /// Embedding model tag the vectors came from.
    pub model: String,
    pub pair: (String, String),
    pub method: Method,
    pub dim: Option<usize>,
    pub mate_retrieval_rate: f64,
    pub mean_reciprocal_rank: f64,
    pub n_queries: usize,
}

impl RetrievalReport {
    pub fn new(
        model: impl Into<String>,
        pair: (String, String),
        method: Method,
        dim: Option<usize>,
        scores: RetrievalScores,
    ) -> Self {
        Self {
            model: model.into(),
            pair,
            method,
            dim,
            mate_retrieval_rate: scores.mate_retrieval_rate,
            mean_reciprocal_rank: scores.mean_reciprocal_rank,
            n_queries: scores.n_queries,
        }
    }
}
