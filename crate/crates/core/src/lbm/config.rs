use super::{LbmError, SOUND_SPEED};

/// Solid nodes of the immersed obstacle.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleMask {
    nx: usize,
    ny: usize,
    solid: Vec<bool>,
}

impl ObstacleMask {
    pub fn empty(nx: usize, ny: usize) -> Self {
        Self {
            nx,
            ny,
            solid: vec![false; nx * ny],
        }
    }

    /// Disc of the given radius; a node is solid when its centre lies within the disc.
    pub fn cylinder(nx: usize, ny: usize, cx: f64, cy: f64, radius: f64) -> Self {
        let mut mask = Self::empty(nx, ny);
        for y in 0..ny {
            for x in 0..nx {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                if dx * dx + dy * dy <= radius * radius {
                    mask.solid[y * nx + x] = true;
                }
            }
        }
        mask
    }

    /// Solid ring around the domain edge.
    pub fn closed_box(nx: usize, ny: usize) -> Self {
        let mut mask = Self::empty(nx, ny);
        for y in 0..ny {
            for x in 0..nx {
                if x == 0 || y == 0 || x == nx - 1 || y == ny - 1 {
                    mask.solid[y * nx + x] = true;
                }
            }
        }
        mask
    }

    pub fn from_fn(nx: usize, ny: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut mask = Self::empty(nx, ny);
        for y in 0..ny {
            for x in 0..nx {
                mask.solid[y * nx + x] = f(x, y);
            }
        }
        mask
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    #[inline]
    pub fn is_solid(&self, x: usize, y: usize) -> bool {
        self.solid[y * self.nx + x]
    }

    pub fn set(&mut self, x: usize, y: usize, solid: bool) {
        self.solid[y * self.nx + x] = solid;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.solid
    }

    pub fn count(&self) -> usize {
        self.solid.iter().filter(|s| **s).count()
    }

    pub fn union(&self, other: &ObstacleMask) -> ObstacleMask {
        ObstacleMask {
            nx: self.nx,
            ny: self.ny,
            solid: self
                .solid
                .iter()
                .zip(&other.solid)
                .map(|(a, b)| *a || *b)
                .collect(),
        }
    }
}

/// Which domain-edge treatments are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryPolicy {
    /// Equilibrium velocity inlet at column 0.
    pub inflow: bool,
    /// Zero-gradient copy into the last column.
    pub outflow: bool,
    /// Bounce-back walls on the first and last rows.
    pub channel_walls: bool,
}

impl BoundaryPolicy {
    /// Inlet and outlet with wrap-around top and bottom edges.
    pub const WAKE: Self = Self {
        inflow: true,
        outflow: true,
        channel_walls: false,
    };
    pub const WALLED_CHANNEL: Self = Self {
        inflow: true,
        outflow: true,
        channel_walls: true,
    };
    pub const PERIODIC: Self = Self {
        inflow: false,
        outflow: false,
        channel_walls: false,
    };
}

/// Physical description of the cylinder-wake setup; `tau` is derived from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylinderChannel {
    pub nx: usize,
    pub ny: usize,
    pub radius: f64,
    pub reynolds: f64,
    pub u_inlet: f64,
    /// Cylinder centre; `None` places it at `(nx / 4, ny / 2)`.
    pub center: Option<(f64, f64)>,
}

impl CylinderChannel {
    /// 256x64 grid, radius 16, Re 500, inlet at Mach 0.1.
    pub fn reference() -> Self {
        Self {
            nx: 256,
            ny: 64,
            radius: 16.0,
            reynolds: 500.0,
            u_inlet: 0.1 * SOUND_SPEED,
            center: None,
        }
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    /// `tau = 3 * u * D / Re + 0.5`.
    pub fn tau(&self) -> f64 {
        3.0 * self.u_inlet * self.diameter() / self.reynolds + 0.5
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeConfig {
    pub nx: usize,
    pub ny: usize,
    pub tau: f64,
    pub u_inlet: f64,
    pub obstacle: ObstacleMask,
    pub reynolds: Option<f64>,
    pub diameter: Option<f64>,
    pub boundary: BoundaryPolicy,
    /// Constant body force applied with Guo forcing.
    pub body_force: [f64; 2],
}

impl LatticeConfig {
    pub fn cylinder_channel(setup: CylinderChannel) -> Result<Self, LbmError> {
        let (cx, cy) = setup
            .center
            .unwrap_or((setup.nx as f64 / 4.0, setup.ny as f64 / 2.0));
        let obstacle = ObstacleMask::cylinder(setup.nx, setup.ny, cx, cy, setup.radius);
        let config = Self {
            nx: setup.nx,
            ny: setup.ny,
            tau: setup.tau(),
            u_inlet: setup.u_inlet,
            obstacle,
            reynolds: Some(setup.reynolds),
            diameter: Some(setup.diameter()),
            boundary: BoundaryPolicy::WAKE,
            body_force: [0.0, 0.0],
        };
        config.validate()?;
        Ok(config)
    }

    /// No inlet, no outlet, wrap-around edges; walls come from `obstacle`.
    pub fn enclosed(
        nx: usize,
        ny: usize,
        tau: f64,
        obstacle: ObstacleMask,
    ) -> Result<Self, LbmError> {
        let config = Self {
            nx,
            ny,
            tau,
            u_inlet: 0.0,
            obstacle,
            reynolds: None,
            diameter: None,
            boundary: BoundaryPolicy::PERIODIC,
            body_force: [0.0, 0.0],
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_body_force(mut self, force: [f64; 2]) -> Self {
        self.body_force = force;
        self
    }

    pub fn with_boundary(mut self, boundary: BoundaryPolicy) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn validate(&self) -> Result<(), LbmError> {
        if self.nx < 3 || self.ny < 3 {
            return Err(LbmError::Config(format!(
                "grid {}x{} is smaller than 3x3",
                self.nx, self.ny
            )));
        }
        if self.obstacle.nx() != self.nx || self.obstacle.ny() != self.ny {
            return Err(LbmError::Config("obstacle mask does not match grid".into()));
        }
        if !(self.tau > 0.5) || !self.tau.is_finite() {
            return Err(LbmError::Config(format!(
                "tau = {} violates the stability bound tau > 0.5",
                self.tau
            )));
        }
        if !(self.u_inlet.abs() < 0.2) {
            return Err(LbmError::Config(format!(
                "inlet speed {} is outside the low-Mach range |u| < 0.2",
                self.u_inlet
            )));
        }
        if self.boundary.inflow && (0..self.ny).any(|y| self.obstacle.is_solid(0, y)) {
            return Err(LbmError::Config(
                "obstacle intersects the inlet column".into(),
            ));
        }
        if let (Some(re), Some(d)) = (self.reynolds, self.diameter) {
            let expected = 3.0 * self.u_inlet * d / re + 0.5;
            if (expected - self.tau).abs() > 1e-12 * expected {
                return Err(LbmError::Config(format!(
                    "tau {} inconsistent with Re {re}, D {d}, u {} (expected {expected})",
                    self.tau, self.u_inlet
                )));
            }
        }
        Ok(())
    }

    /// Obstacle plus channel walls when enabled.
    pub fn solid_mask(&self) -> ObstacleMask {
        if self.boundary.channel_walls {
            let ny = self.ny;
            let walls = ObstacleMask::from_fn(self.nx, ny, |_, y| y == 0 || y == ny - 1);
            self.obstacle.union(&walls)
        } else {
            self.obstacle.clone()
        }
    }
}
