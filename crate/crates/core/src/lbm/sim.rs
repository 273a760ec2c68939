use super::kernels::{
    apply_inflow_in_place, bounce_back_in_place, compute_vorticity, equilibrium, macroscopics_into,
    propagate_into,
};
use super::{
    DistributionField, LatticeConfig, LbmError, MacroscopicFields, ObstacleMask, VorticitySnapshot,
    VELOCITIES, WEIGHTS,
};

/// A running simulation: configuration, populations and a streaming buffer.
#[derive(Debug, Clone)]
pub struct Lattice {
    config: LatticeConfig,
    solid: ObstacleMask,
    f: DistributionField,
    scratch: DistributionField,
    fields: MacroscopicFields,
    step: u64,
}

impl Lattice {
    /// Start from the equilibrium at `(1, (u_inlet, 0))` everywhere.
    pub fn new(config: LatticeConfig) -> Result<Self, LbmError> {
        let f = DistributionField::uniform(config.nx, config.ny, 1.0, [config.u_inlet, 0.0])?;
        Self::with_populations(config, f)
    }

    pub fn with_populations(config: LatticeConfig, f: DistributionField) -> Result<Self, LbmError> {
        config.validate()?;
        if f.nx() != config.nx || f.ny() != config.ny {
            return Err(LbmError::Config(
                "population field does not match grid".into(),
            ));
        }
        if !f.is_finite() {
            return Err(LbmError::NonFinite("initial populations"));
        }
        let solid = config.solid_mask();
        let (nx, ny) = (config.nx, config.ny);
        Ok(Self {
            config,
            solid,
            f,
            scratch: DistributionField::zeros(nx, ny),
            fields: MacroscopicFields::zeros(nx, ny),
            step: 0,
        })
    }

    pub fn config(&self) -> &LatticeConfig {
        &self.config
    }

    pub fn populations(&self) -> &DistributionField {
        &self.f
    }

    pub fn solid(&self) -> &ObstacleMask {
        &self.solid
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    /// Advance one step: inflow, moments, equilibrium, collide, bounce-back,
    /// propagate, outflow copy.
    pub fn step(&mut self) -> Result<(), LbmError> {
        let (nx, ny) = (self.config.nx, self.config.ny);
        let n = nx * ny;
        let boundary = self.config.boundary;
        let force = self.config.body_force;
        let forced = force != [0.0, 0.0];

        if boundary.inflow {
            apply_inflow_in_place(&mut self.f, self.config.u_inlet, &self.solid);
        }
        macroscopics_into(&self.f, &self.solid, force, self.step, &mut self.fields)?;

        let omega = 1.0 / self.config.tau;
        let guo = 1.0 - 0.5 * omega;
        let mask = self.solid.as_slice();
        let data = self.f.as_mut_slice();
        for k in 0..n {
            if mask[k] {
                continue;
            }
            let (rho, ux, uy) = (self.fields.rho[k], self.fields.ux[k], self.fields.uy[k]);
            let feq = equilibrium(rho, ux, uy);
            for i in 0..9 {
                let slot = &mut data[i * n + k];
                *slot -= (*slot - feq[i]) * omega;
            }
            if forced {
                for i in 0..9 {
                    let (ex, ey) = (VELOCITIES[i][0] as f64, VELOCITIES[i][1] as f64);
                    let eu = ex * ux + ey * uy;
                    let gx = 3.0 * (ex - ux) + 9.0 * eu * ex;
                    let gy = 3.0 * (ey - uy) + 9.0 * eu * ey;
                    data[i * n + k] += guo * WEIGHTS[i] * (gx * force[0] + gy * force[1]);
                }
            }
        }

        bounce_back_in_place(&mut self.f, &self.solid);
        propagate_into(&self.f, &mut self.scratch);
        std::mem::swap(&mut self.f, &mut self.scratch);

        if boundary.outflow {
            for i in 0..9 {
                let dir = self.f.direction_mut(i);
                for y in 0..ny {
                    dir[y * nx + nx - 1] = dir[y * nx + nx - 2];
                }
            }
        }
        self.step += 1;
        Ok(())
    }

    pub fn run(&mut self, steps: u64) -> Result<(), LbmError> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }

    /// Current moments, including the half-force velocity shift.
    pub fn macroscopics(&self) -> Result<MacroscopicFields, LbmError> {
        let mut fields = MacroscopicFields::zeros(self.config.nx, self.config.ny);
        macroscopics_into(
            &self.f,
            &self.solid,
            self.config.body_force,
            self.step,
            &mut fields,
        )?;
        Ok(fields)
    }

    pub fn vorticity(&self) -> Result<VorticitySnapshot, LbmError> {
        let fields = self.macroscopics()?;
        Ok(compute_vorticity(&fields, &self.solid, self.step))
    }
}

/// Advance a population field by one step under `config`.
pub fn simulate_step(
    f: &DistributionField,
    config: &LatticeConfig,
) -> Result<DistributionField, LbmError> {
    let mut lattice = Lattice::with_populations(config.clone(), f.clone())?;
    lattice.step()?;
    Ok(lattice.f)
}

/// When to record snapshots: after `warmup` steps, then every `interval` steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SnapshotSchedule {
    pub warmup: u64,
    pub interval: u64,
    pub count: usize,
}

impl SnapshotSchedule {
    pub fn reference() -> Self {
        Self {
            warmup: 5000,
            interval: 10,
            count: 1999,
        }
    }

    fn validate(&self) -> Result<(), LbmError> {
        if self.count == 0 {
            return Err(LbmError::Config("snapshot count must be at least 1".into()));
        }
        if self.interval == 0 {
            return Err(LbmError::Config(
                "snapshot interval must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Run the schedule and hand every snapshot to `sink`. The first snapshot is
/// taken at step `warmup`, the k-th at `warmup + k * interval`.
pub fn collect_snapshots_with(
    config: &LatticeConfig,
    schedule: SnapshotSchedule,
    mut sink: impl FnMut(VorticitySnapshot),
) -> Result<(), LbmError> {
    schedule.validate()?;
    let mut lattice = Lattice::new(config.clone())?;
    lattice.run(schedule.warmup)?;
    for k in 0..schedule.count {
        if k > 0 {
            lattice.run(schedule.interval)?;
        }
        sink(lattice.vorticity()?);
    }
    Ok(())
}

pub fn collect_snapshots(
    config: &LatticeConfig,
    schedule: SnapshotSchedule,
) -> Result<Vec<VorticitySnapshot>, LbmError> {
    let mut out = Vec::with_capacity(schedule.count);
    collect_snapshots_with(config, schedule, |s| out.push(s))?;
    Ok(out)
}
