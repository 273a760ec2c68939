use rayon::prelude::*;

use super::{check_rows, sq_dist, EvalError};

pub const HISTOGRAM_BINS: usize = 64;

/// Generative model identifier. Declaration order is the canonical tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelTag {
    Qcbm,
    Qgan,
    Lstm,
}

impl ModelTag {
    pub const ALL: [ModelTag; 3] = [ModelTag::Qcbm, ModelTag::Qgan, ModelTag::Lstm];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelTag::Qcbm => "qcbm",
            ModelTag::Qgan => "qgan",
            ModelTag::Lstm => "lstm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl std::fmt::Display for ModelTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub tag: ModelTag,
    pub rows: Vec<Vec<f64>>,
}

impl SampleSet {
    pub fn new(tag: ModelTag, rows: Vec<Vec<f64>>) -> Self {
        SampleSet { tag, rows }
    }
}

fn nearest(point: &[f64], set: &[Vec<f64>]) -> f64 {
    set.iter()
        .map(|s| sq_dist(point, s))
        .fold(f64::INFINITY, f64::min)
}

fn check_pair(samples: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<(), EvalError> {
    let a = check_rows(samples, "samples")?;
    let b = check_rows(reference, "reference")?;
    if a != b {
        return Err(EvalError::Ragged {
            expected: b,
            got: a,
        });
    }
    Ok(())
}

/// Mean over samples of the Euclidean distance to the closest reference row.
pub fn avg_min_distance(samples: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<f64, EvalError> {
    check_pair(samples, reference)?;
    let mins: Vec<f64> = samples
        .par_iter()
        .map(|s| nearest(s, reference).sqrt())
        .collect();
    Ok(mins.iter().sum::<f64>() / mins.len() as f64)
}

/// For each reference row, the Euclidean distance to the closest sample.
pub fn min_distances(samples: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<Vec<f64>, EvalError> {
    check_pair(samples, reference)?;
    Ok(reference
        .par_iter()
        .map(|r| nearest(r, samples).sqrt())
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnCounts {
    pub wins: Vec<(ModelTag, usize)>,
    pub ties: usize,
}

impl NnCounts {
    pub fn get(&self, tag: ModelTag) -> usize {
        self.wins
            .iter()
            .find(|(t, _)| *t == tag)
            .map_or(0, |(_, c)| *c)
    }

    pub fn total(&self) -> usize {
        self.wins.iter().map(|(_, c)| c).sum()
    }
}

/// Attributes every reference row to the model owning the globally nearest sample.
/// Exact ties go to the earliest model in canonical order and are tallied in `ties`.
pub fn nearest_neighbor_counts(
    sets: &[SampleSet],
    reference: &[Vec<f64>],
) -> Result<NnCounts, EvalError> {
    if sets.is_empty() {
        return Err(EvalError::Empty("sample sets"));
    }
    let mut ordered: Vec<&SampleSet> = sets.iter().collect();
    ordered.sort_by_key(|s| s.tag);
    for s in &ordered {
        check_pair(&s.rows, reference)?;
    }
    let winners: Vec<(usize, bool)> = reference
        .par_iter()
        .map(|r| {
            let mut best = f64::INFINITY;
            let mut who = 0;
            let mut tie = false;
            for (k, s) in ordered.iter().enumerate() {
                let d = nearest(r, &s.rows);
                if d < best {
                    best = d;
                    who = k;
                    tie = false;
                } else if d == best {
                    tie = true;
                }
            }
            (who, tie)
        })
        .collect();
    let mut wins: Vec<(ModelTag, usize)> = ordered.iter().map(|s| (s.tag, 0)).collect();
    let mut ties = 0;
    for (who, tie) in winners {
        wins[who].1 += 1;
        ties += usize::from(tie);
    }
    Ok(NnCounts { wins, ties })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceHistogram {
    /// `HISTOGRAM_BINS + 1` bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<(ModelTag, Vec<usize>)>,
}

/// Per-model histograms of min distances over a shared, pooled range.
pub fn min_distance_distribution(
    per_model: &[(ModelTag, Vec<f64>)],
) -> Result<DistanceHistogram, EvalError> {
    let pooled = per_model.iter().flat_map(|(_, v)| v.iter().copied());
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut any = false;
    for v in pooled {
        if !v.is_finite() {
            return Err(EvalError::NonFinite("distances"));
        }
        lo = lo.min(v);
        hi = hi.max(v);
        any = true;
    }
    if !any {
        return Err(EvalError::Empty("distances"));
    }
    if hi <= lo {
        hi = lo + 1.0;
    }
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let edges: Vec<f64> = (0..=HISTOGRAM_BINS)
        .map(|i| lo + width * i as f64)
        .collect();
    let counts = per_model
        .iter()
        .map(|(tag, v)| {
            let mut c = vec![0usize; HISTOGRAM_BINS];
            for &x in v {
                let b = (((x - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
                c[b] += 1;
            }
            (*tag, c)
        })
        .collect();
    Ok(DistanceHistogram { edges, counts })
}

/// Pearson correlation matrix of the columns. Constant columns get zero off-diagonal entries.
pub fn correlation_matrix(rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, EvalError> {
    let d = check_rows(rows, "rows")?;
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..d)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            let a = r[i] - mean[i];
            for j in i..d {
                cov[i][j] += a * (r[j] - mean[j]);
            }
        }
    }
    let mut out = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in i..d {
            let denom = (cov[i][i] * cov[j][j]).sqrt();
            let v = if i == j {
                1.0
            } else if denom > 0.0 {
                cov[i][j] / denom
            } else {
                0.0
            };
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    Ok(out)
}
