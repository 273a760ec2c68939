//! D2Q9 lattice Boltzmann solver for 2D channel flow around an obstacle.
//!
//! Direction indexing (also recorded in the snapshot file docs):
//! ```text
//!   6   2   5
//!    \  |  /
//!   3 - 0 - 1
//!    /  |  \
//!   7   4   8
//! ```
//! Populations are stored direction-major, then row-major with `x` fastest:
//! `f[i * nx * ny + y * nx + x]`.

mod config;
mod diagnostics;
mod kernels;
mod sim;

pub use config::{BoundaryPolicy, CylinderChannel, LatticeConfig, ObstacleMask};
pub use diagnostics::{dominant_frequency, strouhal_number, total_mass};
pub use kernels::{
    apply_inflow, bounce_back, collide, compute_equilibrium, compute_macroscopics,
    compute_vorticity, propagate,
};
pub use sim::{
    collect_snapshots, collect_snapshots_with, simulate_step, Lattice, SnapshotSchedule,
};

use thiserror::Error;

/// Discrete velocities, indexed as in the module diagram.
pub const VELOCITIES: [[i32; 2]; 9] = [
    [0, 0],
    [1, 0],
    [0, 1],
    [-1, 0],
    [0, -1],
    [1, 1],
    [-1, 1],
    [-1, -1],
    [1, -1],
];

/// Lattice weights.
pub const WEIGHTS: [f64; 9] = [
    4.0 / 9.0,
    1.0 / 9.0,
    1.0 / 9.0,
    1.0 / 9.0,
    1.0 / 9.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
];

/// Opposite direction of each velocity, used by bounce-back.
pub const OPPOSITE: [usize; 9] = [0, 3, 4, 1, 2, 7, 8, 5, 6];

/// Lattice speed of sound.
pub const SOUND_SPEED: f64 = 0.577_350_269_189_625_8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LbmError {
    #[error("invalid lattice configuration: {0}")]
    Config(String),
    #[error("non-finite input to {0}")]
    NonFinite(&'static str),
    #[error("numerical blowup at step {step}: density {rho} at node ({x}, {y})")]
    Blowup {
        step: u64,
        x: usize,
        y: usize,
        rho: f64,
    },
}

/// The nine populations per node over an `nx` by `ny` lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionField {
    nx: usize,
    ny: usize,
    data: Vec<f64>,
}

impl DistributionField {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        Self {
            nx,
            ny,
            data: vec![0.0; 9 * nx * ny],
        }
    }

    /// Every node at the equilibrium for `(rho, u)`.
    pub fn uniform(nx: usize, ny: usize, rho: f64, u: [f64; 2]) -> Result<Self, LbmError> {
        let feq = compute_equilibrium(rho, u)?;
        let mut field = Self::zeros(nx, ny);
        for (i, w) in feq.iter().enumerate() {
            field.direction_mut(i).fill(*w);
        }
        Ok(field)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nodes(&self) -> usize {
        self.nx * self.ny
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Populations of one direction, row-major with `x` fastest.
    pub fn direction(&self, i: usize) -> &[f64] {
        let n = self.nodes();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn direction_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.nodes();
        &mut self.data[i * n..(i + 1) * n]
    }

    #[inline]
    pub fn get(&self, i: usize, x: usize, y: usize) -> f64 {
        self.data[i * self.nodes() + y * self.nx + x]
    }

    #[inline]
    pub fn set(&mut self, i: usize, x: usize, y: usize, value: f64) {
        let n = self.nodes();
        self.data[i * n + y * self.nx + x] = value;
    }

    /// The nine populations at one node.
    pub fn node(&self, x: usize, y: usize) -> [f64; 9] {
        let n = self.nodes();
        let k = y * self.nx + x;
        std::array::from_fn(|i| self.data[i * n + k])
    }

    pub fn set_node(&mut self, x: usize, y: usize, values: [f64; 9]) {
        let n = self.nodes();
        let k = y * self.nx + x;
        for (i, v) in values.into_iter().enumerate() {
            self.data[i * n + k] = v;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Density and velocity per node.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroscopicFields {
    pub nx: usize,
    pub ny: usize,
    pub rho: Vec<f64>,
    pub ux: Vec<f64>,
    pub uy: Vec<f64>,
}

impl MacroscopicFields {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        Self {
            nx,
            ny,
            rho: vec![0.0; nx * ny],
            ux: vec![0.0; nx * ny],
            uy: vec![0.0; nx * ny],
        }
    }
}

/// Scalar vorticity over the lattice, `x` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct VorticitySnapshot {
    pub nx: usize,
    pub ny: usize,
    pub omega: Vec<f64>,
    pub step_index: u64,
}

impl VorticitySnapshot {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.omega[y * self.nx + x]
    }
}
