use nalgebra::{DMatrix, SymmetricEigen};

use super::{check_rows, EvalError};

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit-norm principal axes, one row per component.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub explained_ratio: Vec<f64>,
    /// Centered data projected onto the components, N × k.
    pub coords: Vec<Vec<f64>>,
    pub warning: Option<String>,
}

/// Relative eigenvalue threshold below which a component is treated as degenerate.
const DEGENERATE: f64 = 1e-12;

pub fn pca_fit_project(rows: &[Vec<f64>], k: usize) -> Result<Pca, EvalError> {
    let d = check_rows(rows, "PCA input")?;
    if rows.len() < k + 1 {
        return Err(EvalError::PcaRows {
            need: k + 1,
            got: rows.len(),
        });
    }
    let n = rows.len();
    let mean: Vec<f64> = (0..d)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for r in rows {
        for i in 0..d {
            let a = r[i] - mean[i];
            for j in i..d {
                cov[(i, j)] += a * (r[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / (n - 1) as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let trace = cov.trace();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let wanted = k.min(d);
    let usable = order
        .iter()
        .take(wanted)
        .take_while(|&&i| trace > 0.0 && eig.eigenvalues[i] > DEGENERATE * trace)
        .count();
    let warning = (usable < k).then(|| {
        format!("covariance has only {usable} non-degenerate direction(s); projecting onto {usable} of {k} requested components")
    });

    let mut components = Vec::with_capacity(usable);
    let mut explained_variance = Vec::with_capacity(usable);
    for &i in order.iter().take(usable) {
        let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        v.iter_mut().for_each(|x| *x *= sign / norm);
        components.push(v);
        explained_variance.push(eig.eigenvalues[i]);
    }
    let explained_ratio = explained_variance.iter().map(|l| l / trace).collect();
    let coords = rows
        .iter()
        .map(|r| {
            components
                .iter()
                .map(|c| {
                    c.iter()
                        .zip(r)
                        .zip(&mean)
                        .map(|((w, x), m)| w * (x - m))
                        .sum()
                })
                .collect()
        })
        .collect();
    Ok(Pca {
        mean,
        components,
        explained_variance,
        explained_ratio,
        coords,
        warning,
    })
}
