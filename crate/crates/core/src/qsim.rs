//! Dense state-vector simulation of layered `Ry`/`CZ` circuits.
//!
//! Qubit 0 is the least significant bit of a basis index, so basis state
//! `|q_{n-1} … q_1 q_0⟩` has index `Σ q_k 2^k`.

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

pub const MAX_QUBITS: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QsimError {
    #[error("qubit count {0} outside 1..={MAX_QUBITS}")]
    QubitCount(usize),
    #[error("qubit {qubit} out of range for a {n}-qubit register")]
    QubitIndex { qubit: usize, n: usize },
    #[error("CZ needs two distinct qubits, got {0} twice")]
    SameQubit(usize),
    #[error("parameter shape mismatch: ansatz needs {expected} angles, got {got}")]
    ParamShape { expected: usize, got: usize },
    #[error("probabilities sum to {0}, not 1")]
    Unnormalized(f64),
}

/// `2^n` complex amplitudes stored as parallel real and imaginary arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl StateVector {
    /// `|0…0⟩` on `n` qubits.
    pub fn zero(n: usize) -> Result<Self, QsimError> {
        if !(1..=MAX_QUBITS).contains(&n) {
            return Err(QsimError::QubitCount(n));
        }
        let mut re = vec![0.0; 1 << n];
        re[0] = 1.0;
        Ok(Self {
            n,
            re,
            im: vec![0.0; 1 << n],
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.re.len()
    }

    pub fn amplitude(&self, index: usize) -> (f64, f64) {
        (self.re[index], self.im[index])
    }

    pub fn real(&self) -> &[f64] {
        &self.re
    }

    pub fn imag(&self) -> &[f64] {
        &self.im
    }

    pub fn norm_sqr(&self) -> f64 {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| r * r + i * i)
            .sum()
    }

    fn check_qubit(&self, qubit: usize) -> Result<(), QsimError> {
        if qubit < self.n {
            Ok(())
        } else {
            Err(QsimError::QubitIndex { qubit, n: self.n })
        }
    }

    /// `Ry(θ) = [[cos θ/2, −sin θ/2], [sin θ/2, cos θ/2]]` on `qubit`.
    pub fn apply_ry(&mut self, qubit: usize, theta: f64) -> Result<(), QsimError> {
        self.check_qubit(qubit)?;
        self.ry_unchecked(qubit, theta);
        Ok(())
    }

    fn ry_unchecked(&mut self, qubit: usize, theta: f64) {
        let (s, c) = (0.5 * theta).sin_cos();
        let bit = 1usize << qubit;
        for block in (0..self.re.len()).step_by(bit << 1) {
            for i in block..block + bit {
                let j = i | bit;
                let (r0, r1) = (self.re[i], self.re[j]);
                self.re[i] = c * r0 - s * r1;
                self.re[j] = s * r0 + c * r1;
                let (i0, i1) = (self.im[i], self.im[j]);
                self.im[i] = c * i0 - s * i1;
                self.im[j] = s * i0 + c * i1;
            }
        }
    }

    /// Negates every amplitude whose basis index has both qubits set.
    pub fn apply_cz(&mut self, q1: usize, q2: usize) -> Result<(), QsimError> {
        self.check_qubit(q1)?;
        self.check_qubit(q2)?;
        if q1 == q2 {
            return Err(QsimError::SameQubit(q1));
        }
        self.cz_unchecked(q1, q2);
        Ok(())
    }

    fn cz_unchecked(&mut self, q1: usize, q2: usize) {
        let mask = (1usize << q1) | (1usize << q2);
        for i in 0..self.re.len() {
            if i & mask == mask {
                self.re[i] = -self.re[i];
                self.im[i] = -self.im[i];
            }
        }
    }

    /// Born probabilities `|a_i|²` in basis-index order.
    pub fn probabilities(&self) -> Vec<f64> {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| r * r + i * i)
            .collect()
    }
}

/// Same as [`StateVector::zero`].
pub fn init_state(n: usize) -> Result<StateVector, QsimError> {
    StateVector::zero(n)
}

pub fn born_probabilities(state: &StateVector) -> Vec<f64> {
    state.probabilities()
}

/// Layers of `Ry` on every qubit followed by a ring of `CZ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayeredAnsatz {
    pub n_qubits: usize,
    pub n_layers: usize,
}

impl LayeredAnsatz {
    pub fn new(n_qubits: usize, n_layers: usize) -> Result<Self, QsimError> {
        if !(1..=MAX_QUBITS).contains(&n_qubits) {
            return Err(QsimError::QubitCount(n_qubits));
        }
        Ok(Self { n_qubits, n_layers })
    }

    pub fn n_params(&self) -> usize {
        self.n_qubits * self.n_layers
    }

    /// `(0,1), (1,2), …, (n−1,0)`; a single pair for two qubits, none for one.
    pub fn entangler(&self) -> Vec<(usize, usize)> {
        match self.n_qubits {
            1 => vec![],
            2 => vec![(0, 1)],
            n => (0..n).map(|q| (q, (q + 1) % n)).collect(),
        }
    }

    fn check(&self, angles: &[f64]) -> Result<(), QsimError> {
        if angles.len() == self.n_params() {
            Ok(())
        } else {
            Err(QsimError::ParamShape {
                expected: self.n_params(),
                got: angles.len(),
            })
        }
    }

    /// Applies the layers to an existing state. `angles[layer * n + qubit]`.
    pub fn apply(&self, state: &mut StateVector, angles: &[f64]) -> Result<(), QsimError> {
        self.check(angles)?;
        if state.n != self.n_qubits {
            return Err(QsimError::QubitCount(state.n));
        }
        let ring = self.entangler();
        for layer in angles.chunks(self.n_qubits) {
            for (q, &theta) in layer.iter().enumerate() {
                state.ry_unchecked(q, theta);
            }
            for &(a, b) in &ring {
                state.cz_unchecked(a, b);
            }
        }
        Ok(())
    }

    pub fn run(&self, angles: &[f64]) -> Result<StateVector, QsimError> {
        let mut s = StateVector::zero(self.n_qubits)?;
        self.apply(&mut s, angles)?;
        Ok(s)
    }

    pub fn probabilities(&self, angles: &[f64]) -> Result<Vec<f64>, QsimError> {
        Ok(self.run(angles)?.probabilities())
    }
}

pub fn run_ansatz(ansatz: &LayeredAnsatz, angles: &[f64]) -> Result<StateVector, QsimError> {
    ansatz.run(angles)
}

/// Jacobian `∂p_k/∂θ_j`, stored row-major as `[outcome][param]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub outcomes: usize,
    pub params: usize,
    pub data: Vec<f64>,
}

impl Jacobian {
    pub fn get(&self, outcome: usize, param: usize) -> f64 {
        self.data[outcome * self.params + param]
    }

    /// `vᵀ J` for a vector over outcomes.
    pub fn vjp(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.params];
        for (k, row) in self.data.chunks(self.params).enumerate() {
            for (o, j) in out.iter_mut().zip(row) {
                *o += v[k] * j;
            }
        }
        out
    }
}

/// Parameter-shift Jacobian of any probability map whose parameters all
/// enter through `Ry` gates: `½[p(θ_j + π/2) − p(θ_j − π/2)]`.
pub fn parameter_shift<F>(angles: &[f64], probs: F) -> Result<Jacobian, QsimError>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, QsimError> + Sync,
{
    let shift = std::f64::consts::FRAC_PI_2;
    let columns: Vec<Vec<f64>> = (0..angles.len())
        .into_par_iter()
        .map(|j| {
            let mut a = angles.to_vec();
            a[j] = angles[j] + shift;
            let plus = probs(&a)?;
            a[j] = angles[j] - shift;
            let minus = probs(&a)?;
            Ok(plus
                .iter()
                .zip(&minus)
                .map(|(p, m)| 0.5 * (p - m))
                .collect())
        })
        .collect::<Result<_, QsimError>>()?;
    let outcomes = match columns.first() {
        Some(c) => c.len(),
        None => probs(angles)?.len(),
    };
    let params = angles.len();
    let mut data = vec![0.0; outcomes * params];
    for (j, col) in columns.iter().enumerate() {
        for (k, v) in col.iter().enumerate() {
            data[k * params + j] = *v;
        }
    }
    Ok(Jacobian {
        outcomes,
        params,
        data,
    })
}

pub fn parameter_shift_jacobian(
    ansatz: &LayeredAnsatz,
    angles: &[f64],
) -> Result<Jacobian, QsimError> {
    ansatz.check(angles)?;
    parameter_shift(angles, |a| ansatz.probabilities(a))
}

/// Inverse-CDF sampling of `count` basis indices.
pub fn sample(p: &[f64], rng: &mut impl Rng, count: usize) -> Result<Vec<usize>, QsimError> {
    let sampler = Sampler::new(p)?;
    Ok((0..count).map(|_| sampler.draw(rng)).collect())
}

/// Cumulative table for repeated inverse-CDF draws.
#[derive(Debug, Clone)]
pub struct Sampler {
    cdf: Vec<f64>,
}

impl Sampler {
    pub fn new(p: &[f64]) -> Result<Self, QsimError> {
        let mut acc = 0.0;
        let cdf: Vec<f64> = p
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        if !acc.is_finite() || (acc - 1.0).abs() > 1e-9 || p.iter().any(|v| *v < 0.0) {
            return Err(QsimError::Unnormalized(acc));
        }
        Ok(Self { cdf })
    }

    pub fn draw(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cdf.last().unwrap();
        let u = rng.random::<f64>() * total;
        let k = self.cdf.partition_point(|c| *c <= u);
        k.min(self.cdf.len() - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_angles(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-PI..PI)).collect()
    }

    #[test]
    fn init_state_cases() {
        let s = init_state(1).unwrap();
        assert_eq!(s.real(), &[1.0, 0.0]);
        let s = init_state(3).unwrap();
        assert_eq!(s.dim(), 8);
        assert_eq!(s.norm_sqr(), 1.0);
        assert_eq!(s.probabilities()[0], 1.0);
        assert!(init_state(0).is_err());
        assert!(init_state(25).is_err());
    }

    #[test]
    fn ry_cases() {
        let mut s = init_state(1).unwrap();
        s.apply_ry(0, 0.0).unwrap();
        assert_eq!(s.real(), &[1.0, 0.0]);
        s.apply_ry(0, PI).unwrap();
        assert!(s.real()[0].abs() < 1e-16 && (s.real()[1] - 1.0).abs() < 1e-16);
        let mut s = init_state(1).unwrap();
        s.apply_ry(0, PI / 2.0).unwrap();
        assert!((s.probabilities()[1] - 0.5).abs() < 1e-15);
        assert!(s.apply_ry(1, 0.3).is_err());
    }

    #[test]
    fn cz_cases() {
        let mut s = init_state(2).unwrap();
        s.apply_ry(0, PI).unwrap();
        s.apply_ry(1, PI).unwrap();
        s.apply_cz(0, 1).unwrap();
        assert!((s.real()[3] + 1.0).abs() < 1e-15);
        let mut s = init_state(2).unwrap();
        s.apply_ry(1, PI).unwrap();
        let before = s.clone();
        s.apply_cz(0, 1).unwrap();
        assert_eq!(s, before);
        assert_eq!(s.apply_cz(1, 1), Err(QsimError::SameQubit(1)));
    }

    #[test]
    fn ansatz_cases() {
        let a = LayeredAnsatz::new(8, 7).unwrap();
        let p = a.probabilities(&vec![0.0; 56]).unwrap();
        assert_eq!(p[0], 1.0);
        let one = LayeredAnsatz::new(1, 1).unwrap();
        let p = one.probabilities(&[0.9]).unwrap();
        assert!((p[1] - (0.45f64).sin().powi(2)).abs() < 1e-15);
        let s = a.run(&random_angles(56, 1)).unwrap();
        assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
        assert!(matches!(
            a.run(&[0.0; 3]),
            Err(QsimError::ParamShape {
                expected: 56,
                got: 3
            })
        ));
    }

    #[test]
    fn ring_covers_each_edge_once() {
        let a = LayeredAnsatz::new(8, 1).unwrap();
        let ring = a.entangler();
        assert_eq!(ring.len(), 8);
        let mut degree = [0; 8];
        for (x, y) in ring {
            degree[x] += 1;
            degree[y] += 1;
        }
        assert!(degree.iter().all(|d| *d == 2));
    }

    #[test]
    fn born_probability_cases() {
        let mut s = init_state(1).unwrap();
        assert_eq!(born_probabilities(&s), vec![1.0, 0.0]);
        s.apply_ry(0, PI / 2.0).unwrap();
        let p = born_probabilities(&s);
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sampling_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut onehot = vec![0.0; 8];
        onehot[5] = 1.0;
        assert!(sample(&onehot, &mut rng, 1000)
            .unwrap()
            .iter()
            .all(|k| *k == 5));
        let draws = sample(&[0.5, 0.5], &mut rng, 100_000).unwrap();
        let freq = draws.iter().filter(|k| **k == 1).count() as f64 / 1e5;
        assert!((freq - 0.5).abs() < 0.01);
        let a = sample(&[0.2, 0.3, 0.5], &mut ChaCha8Rng::seed_from_u64(9), 50).unwrap();
        let b = sample(&[0.2, 0.3, 0.5], &mut ChaCha8Rng::seed_from_u64(9), 50).unwrap();
        assert_eq!(a, b);
        assert!(sample(&[0.5, 0.6], &mut rng, 1).is_err());
    }

    #[test]
    fn shift_rule_closed_forms() {
        let a = LayeredAnsatz::new(1, 1).unwrap();
        let j = parameter_shift_jacobian(&a, &[PI / 2.0]).unwrap();
        assert!((j.get(1, 0) - 0.5).abs() < 1e-15);
        let j = parameter_shift_jacobian(&a, &[0.0]).unwrap();
        assert!(j.get(1, 0).abs() < 1e-15);
    }

    #[test]
    fn shift_rule_matches_finite_differences() {
        let a = LayeredAnsatz::new(8, 7).unwrap();
        let theta = random_angles(56, 2);
        let j = parameter_shift_jacobian(&a, &theta).unwrap();
        let h = 1e-5;
        let mut max_err: f64 = 0.0;
        for p in 0..56 {
            let mut t = theta.clone();
            t[p] += h;
            let plus = a.probabilities(&t).unwrap();
            t[p] -= 2.0 * h;
            let minus = a.probabilities(&t).unwrap();
            for k in 0..256 {
                max_err = max_err.max((j.get(k, p) - (plus[k] - minus[k]) / (2.0 * h)).abs());
            }
            let col: f64 = (0..256).map(|k| j.get(k, p)).sum();
            assert!(col.abs() < 1e-10);
        }
        assert!(max_err < 1e-6, "{max_err}");
    }

    proptest! {
        #[test]
        fn gates_preserve_norm(ops in proptest::collection::vec((0usize..5, 0usize..5, -10.0f64..10.0), 1..400)) {
            let mut s = init_state(5).unwrap();
            for (a, b, t) in ops {
                if a == b {
                    s.apply_ry(a, t).unwrap();
                } else {
                    s.apply_cz(a, b).unwrap();
                    s.apply_ry(b, t).unwrap();
                }
            }
            prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn cz_is_diagonal(theta in proptest::collection::vec(-PI..PI, 12), q1 in 0usize..4, q2 in 0usize..4) {
            prop_assume!(q1 != q2);
            let a = LayeredAnsatz::new(4, 3).unwrap();
            let mut s = a.run(&theta).unwrap();
            let before = s.probabilities();
            s.apply_cz(q1, q2).unwrap();
            for (x, y) in before.iter().zip(s.probabilities()) {
                prop_assert!((x - y).abs() < 1e-15);
            }
        }

        #[test]
        fn ry_preserves_other_marginals(theta in proptest::collection::vec(-PI..PI, 12), q in 0usize..4, t in -PI..PI) {
            let a = LayeredAnsatz::new(4, 3).unwrap();
            let mut s = a.run(&theta).unwrap();
            let marginals = |p: &[f64]| -> Vec<f64> {
                (0..4).map(|k| p.iter().enumerate().filter(|(i, _)| i & (1 << k) != 0).map(|(_, v)| v).sum()).collect()
            };
            let before = marginals(&s.probabilities());
            s.apply_ry(q, t).unwrap();
            let after = marginals(&s.probabilities());
            for k in (0..4).filter(|k| *k != q) {
                prop_assert!((before[k] - after[k]).abs() < 1e-12);
            }
        }

        #[test]
        fn probabilities_sum_to_one(theta in proptest::collection::vec(-PI..PI, 18)) {
            let a = LayeredAnsatz::new(6, 3).unwrap();
            let p = a.probabilities(&theta).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
