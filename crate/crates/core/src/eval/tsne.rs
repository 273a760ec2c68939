use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{check_rows, sq_dist, EvalError};

#[derive(Debug, Clone, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    pub kl_every: usize,
    pub entropy_tol: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 100.0,
            iterations: 1000,
            learning_rate: 200.0,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            kl_every: 50,
            entropy_tol: 1e-5,
            seed: 0,
        }
    }
}

/// Per-point Gaussian conditionals with precisions tuned to the target perplexity.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub n: usize,
    /// Row-major N × N; row i is p(j | i), zero on the diagonal.
    pub conditional: Vec<f64>,
    pub betas: Vec<f64>,
    /// Natural-log Shannon entropy of each conditional row.
    pub entropies: Vec<f64>,
}

impl Calibration {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.conditional[i * self.n..(i + 1) * self.n]
    }
}

#[derive(Debug, Clone)]
pub struct TsneResult {
    pub coords: Vec<[f64; 2]>,
    /// (iteration, KL(P‖Q)) measured against the unexaggerated affinities.
    pub kl_history: Vec<(usize, f64)>,
    pub calibration: Calibration,
}

fn check_size(n: usize, perplexity: f64) -> Result<(), EvalError> {
    let limit = (3.0 * perplexity).ceil() as usize;
    if !(perplexity > 0.0) || (n as f64) <= 3.0 * perplexity {
        return Err(EvalError::TooFewPoints {
            n,
            limit,
            suggest: ((n.saturating_sub(1)) as f64 / 3.0).floor().max(1.0),
        });
    }
    Ok(())
}

fn row_distribution(d: &[f64], i: usize, beta: f64, out: &mut [f64]) -> f64 {
    let dmin = d
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    let mut weighted = 0.0;
    for (j, (&dj, o)) in d.iter().zip(out.iter_mut()).enumerate() {
        if j == i {
            *o = 0.0;
            continue;
        }
        let p = (-beta * (dj - dmin)).exp();
        *o = p;
        sum += p;
        weighted += p * (dj - dmin);
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    sum.ln() + beta * weighted / sum
}

/// Binary search on each point's precision so the conditional entropy equals ln(perplexity).
pub fn calibrate(rows: &[Vec<f64>], perplexity: f64, tol: f64) -> Result<Calibration, EvalError> {
    check_rows(rows, "t-SNE input")?;
    let n = rows.len();
    check_size(n, perplexity)?;
    let target = perplexity.ln();
    let mut conditional = vec![0.0; n * n];
    let fitted: Vec<(f64, f64)> = conditional
        .par_chunks_mut(n)
        .enumerate()
        .map(|(i, out)| {
            let d: Vec<f64> = rows.iter().map(|r| sq_dist(&rows[i], r)).collect();
            let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
            let mut beta = 1.0;
            let mut h = row_distribution(&d, i, beta, out);
            for _ in 0..200 {
                if (h - target).abs() <= tol {
                    break;
                }
                if h > target {
                    lo = beta;
                    beta = if hi.is_finite() {
                        0.5 * (beta + hi)
                    } else {
                        beta * 2.0
                    };
                } else {
                    hi = beta;
                    beta = 0.5 * (beta + lo);
                }
                h = row_distribution(&d, i, beta, out);
            }
            (beta, h)
        })
        .collect();
    let (betas, entropies) = fitted.into_iter().unzip();
    Ok(Calibration {
        n,
        conditional,
        betas,
        entropies,
    })
}

fn pair_sum(y: &[[f64; 2]]) -> f64 {
    y.par_iter()
        .enumerate()
        .map(|(i, a)| {
            y.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, b)| 1.0 / (1.0 + (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)))
                .sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

fn kl_divergence(p: &[f64], y: &[[f64; 2]], z: f64) -> f64 {
    let n = y.len();
    let parts: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..n {
                let pij = p[i * n + j];
                if j == i || pij <= 0.0 {
                    continue;
                }
                let num = 1.0 / (1.0 + (y[i][0] - y[j][0]).powi(2) + (y[i][1] - y[j][1]).powi(2));
                acc += pij * (pij / (num / z).max(1e-300)).ln();
            }
            acc
        })
        .collect();
    parts.iter().sum()
}

/// Exact symmetric t-SNE into two dimensions.
pub fn tsne_embed(rows: &[Vec<f64>], cfg: &TsneConfig) -> Result<TsneResult, EvalError> {
    let calibration = calibrate(rows, cfg.perplexity, cfg.entropy_tol)?;
    let n = calibration.n;
    let mut p = vec![0.0; n * n];
    p.par_chunks_mut(n).enumerate().for_each(|(i, out)| {
        for (j, o) in out.iter_mut().enumerate() {
            if j != i {
                let v = (calibration.conditional[i * n + j] + calibration.conditional[j * n + i])
                    / (2.0 * n as f64);
                *o = v.max(1e-12);
            }
        }
    });

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| [init.sample(&mut rng), init.sample(&mut rng)])
        .collect();
    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut kl_history = Vec::new();

    for t in 0..cfg.iterations {
        let exaggeration = if t < cfg.exaggeration_iters {
            cfg.exaggeration
        } else {
            1.0
        };
        let momentum = if t < cfg.momentum_switch {
            cfg.initial_momentum
        } else {
            cfg.final_momentum
        };
        let z = pair_sum(&y);
        let grad: Vec<[f64; 2]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut g = [0.0; 2];
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let dx = y[i][0] - y[j][0];
                    let dy = y[i][1] - y[j][1];
                    let num = 1.0 / (1.0 + dx * dx + dy * dy);
                    let coef = (exaggeration * p[i * n + j] - num / z) * num;
                    g[0] += coef * dx;
                    g[1] += coef * dy;
                }
                [4.0 * g[0], 4.0 * g[1]]
            })
            .collect();
        for i in 0..n {
            for k in 0..2 {
                let same = (grad[i][k] > 0.0) == (update[i][k] > 0.0);
                gains[i][k] = if same {
                    gains[i][k] * 0.8
                } else {
                    gains[i][k] + 0.2
                };
                gains[i][k] = gains[i][k].max(0.01);
                update[i][k] =
                    momentum * update[i][k] - cfg.learning_rate * gains[i][k] * grad[i][k];
                y[i][k] += update[i][k];
            }
        }
        let mean = y.iter().fold([0.0; 2], |m, v| [m[0] + v[0], m[1] + v[1]]);
        for v in y.iter_mut() {
            v[0] -= mean[0] / n as f64;
            v[1] -= mean[1] / n as f64;
        }
        if cfg.kl_every > 0 && (t + 1) % cfg.kl_every == 0 {
            let kl = kl_divergence(&p, &y, pair_sum(&y));
            if !kl.is_finite() {
                return Err(EvalError::NonFinite("t-SNE objective"));
            }
            kl_history.push((t + 1, kl));
        }
    }
    Ok(TsneResult {
        coords: y,
        kl_history,
        calibration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn clusters(per: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut out = Vec::new();
        for c in 0..3 {
            for _ in 0..per {
                out.push(
                    (0..7)
                        .map(|k| if k == c { 5.0 } else { 0.0 } + noise.sample(&mut rng))
                        .collect(),
                );
            }
        }
        out
    }

    fn entropy(row: &[f64]) -> f64 {
        -row.iter()
            .filter(|&&p| p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    }

    #[test]
    fn calibration_hits_target_entropy() {
        let rows = clusters(60, 1);
        let cal = calibrate(&rows, 30.0, 1e-5).unwrap();
        for i in 0..cal.n {
            let row = cal.row(i);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(row[i], 0.0);
            assert!((entropy(row) - 30f64.ln()).abs() < 1e-4);
        }
    }

    #[test]
    fn rejects_small_inputs() {
        let rows = clusters(10, 2);
        let err = calibrate(&rows, 10.0, 1e-5).unwrap_err();
        match err {
            EvalError::TooFewPoints { n, suggest, .. } => {
                assert_eq!(n, 30);
                assert!(suggest * 3.0 < 30.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    fn quick(seed: u64) -> TsneConfig {
        TsneConfig {
            perplexity: 15.0,
            seed,
            ..TsneConfig::default()
        }
    }

    #[test]
    fn duplicate_points_embed_together() {
        let mut rows = clusters(50, 3);
        let dup = rows[17].clone();
        rows.push(dup);
        let res = tsne_embed(&rows, &quick(3)).unwrap();
        let n = rows.len();
        let d = |a: usize, b: usize| {
            let (p, q) = (res.coords[a], res.coords[b]);
            ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
        };
        let mut all: Vec<f64> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| d(i, j))
            .collect();
        all.sort_by(f64::total_cmp);
        let p1 = all[all.len() / 100];
        assert!(d(17, n - 1) < p1, "dup {} vs p1 {}", d(17, n - 1), p1);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let rows = clusters(20, 4);
        let a = tsne_embed(&rows, &quick(9)).unwrap();
        let b = tsne_embed(&rows, &quick(9)).unwrap();
        assert_eq!(a.coords, b.coords);
        assert_eq!(a.kl_history.len(), 20);
    }

    #[test]
    fn kl_tail_is_non_increasing_for_most_seeds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut good = 0;
        for seed in 0..20u64 {
            let rows = clusters(100, rng.random());
            let cfg = TsneConfig {
                perplexity: 30.0,
                ..quick(seed)
            };
            let res = tsne_embed(&rows, &cfg).unwrap();
            let tail: Vec<f64> = res
                .kl_history
                .iter()
                .filter(|(t, _)| *t >= 750)
                .map(|(_, k)| *k)
                .collect();
            assert!(tail.iter().all(|k| k.is_finite()));
            if tail.windows(2).all(|w| w[1] <= w[0]) {
                good += 1;
            }
        }
        assert!(
            good >= 19,
            "only {good}/20 runs had a non-increasing KL tail"
        );
    }
}
