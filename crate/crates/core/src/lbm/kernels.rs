use super::{
    DistributionField, LbmError, MacroscopicFields, ObstacleMask, VorticitySnapshot, OPPOSITE,
    VELOCITIES, WEIGHTS,
};

/// Second-order D2Q9 equilibrium. Zeroth moment is `rho`, first moment `rho * u`.
pub fn compute_equilibrium(rho: f64, u: [f64; 2]) -> Result<[f64; 9], LbmError> {
    if !rho.is_finite() || !u[0].is_finite() || !u[1].is_finite() {
        return Err(LbmError::NonFinite("compute_equilibrium"));
    }
    Ok(equilibrium(rho, u[0], u[1]))
}

#[inline]
pub(crate) fn equilibrium(rho: f64, ux: f64, uy: f64) -> [f64; 9] {
    let usq = 1.5 * (ux * ux + uy * uy);
    std::array::from_fn(|i| {
        let eu = VELOCITIES[i][0] as f64 * ux + VELOCITIES[i][1] as f64 * uy;
        WEIGHTS[i] * rho * (1.0 + 3.0 * eu + 4.5 * eu * eu - usq)
    })
}

/// BGK relaxation `f <- f - (f - f_eq) / tau` at fluid nodes.
pub fn collide(
    f: &mut DistributionField,
    f_eq: &DistributionField,
    tau: f64,
    solid: &ObstacleMask,
) -> Result<(), LbmError> {
    if !(tau > 0.5) {
        return Err(LbmError::Config(format!("tau = {tau} must exceed 0.5")));
    }
    if f_eq.nx() != f.nx() || f_eq.ny() != f.ny() {
        return Err(LbmError::Config("equilibrium field shape mismatch".into()));
    }
    let omega = 1.0 / tau;
    let n = f.nodes();
    let mask = solid.as_slice();
    let eq = f_eq.as_slice();
    for (k, (fi, ei)) in f.as_mut_slice().iter_mut().zip(eq).enumerate() {
        if !mask[k % n] {
            *fi -= (*fi - ei) * omega;
        }
    }
    Ok(())
}

/// Streaming with periodic wrap at every edge: population `i` at `(x, y)`
/// moves to `(x + e_ix, y + e_iy)`.
pub fn propagate(f: &DistributionField) -> DistributionField {
    let mut out = DistributionField::zeros(f.nx(), f.ny());
    propagate_into(f, &mut out);
    out
}

pub(crate) fn propagate_into(src: &DistributionField, dst: &mut DistributionField) {
    let (nx, ny) = (src.nx(), src.ny());
    for i in 0..9 {
        let [ex, ey] = VELOCITIES[i];
        let from = src.direction(i);
        let to = dst.direction_mut(i);
        // shift = number of columns each row rotates right
        let shift = ex.rem_euclid(nx as i32) as usize;
        for y in 0..ny {
            let ty = (y as i32 + ey).rem_euclid(ny as i32) as usize;
            let row = &from[y * nx..(y + 1) * nx];
            let out = &mut to[ty * nx..(ty + 1) * nx];
            out[shift..].copy_from_slice(&row[..nx - shift]);
            out[..shift].copy_from_slice(&row[nx - shift..]);
        }
    }
}

/// Full-way bounce-back: every solid node trades each population with its opposite.
pub fn bounce_back(f: &DistributionField, mask: &ObstacleMask) -> DistributionField {
    let mut out = f.clone();
    bounce_back_in_place(&mut out, mask);
    out
}

pub(crate) fn bounce_back_in_place(f: &mut DistributionField, mask: &ObstacleMask) {
    let n = f.nodes();
    let data = f.as_mut_slice();
    for (k, _) in mask.as_slice().iter().enumerate().filter(|(_, s)| **s) {
        for i in [1usize, 2, 5, 6] {
            data.swap(i * n + k, OPPOSITE[i] * n + k);
        }
    }
}

/// Replace the fluid nodes of column 0 by the equilibrium at `(1, (u_inlet, 0))`.
pub fn apply_inflow(
    f: &DistributionField,
    u_inlet: f64,
    solid: &ObstacleMask,
) -> DistributionField {
    let mut out = f.clone();
    apply_inflow_in_place(&mut out, u_inlet, solid);
    out
}

pub(crate) fn apply_inflow_in_place(f: &mut DistributionField, u_inlet: f64, solid: &ObstacleMask) {
    let feq = equilibrium(1.0, u_inlet, 0.0);
    for y in 0..f.ny() {
        if !solid.is_solid(0, y) {
            f.set_node(0, y, feq);
        }
    }
}

/// Density and velocity moments. Velocities at solid nodes are reported as zero.
pub fn compute_macroscopics(
    f: &DistributionField,
    solid: &ObstacleMask,
    step: u64,
) -> Result<MacroscopicFields, LbmError> {
    let mut fields = MacroscopicFields::zeros(f.nx(), f.ny());
    macroscopics_into(f, solid, [0.0, 0.0], step, &mut fields)?;
    Ok(fields)
}

/// Moments with the half-force velocity shift used by Guo forcing.
pub(crate) fn macroscopics_into(
    f: &DistributionField,
    solid: &ObstacleMask,
    force: [f64; 2],
    step: u64,
    out: &mut MacroscopicFields,
) -> Result<(), LbmError> {
    let (nx, n) = (f.nx(), f.nodes());
    let data = f.as_slice();
    let mask = solid.as_slice();
    for k in 0..n {
        let mut rho = 0.0;
        let mut jx = 0.0;
        let mut jy = 0.0;
        for i in 0..9 {
            let v = data[i * n + k];
            rho += v;
            jx += v * VELOCITIES[i][0] as f64;
            jy += v * VELOCITIES[i][1] as f64;
        }
        out.rho[k] = rho;
        if mask[k] {
            out.ux[k] = 0.0;
            out.uy[k] = 0.0;
            continue;
        }
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(LbmError::Blowup {
                step,
                x: k % nx,
                y: k / nx,
                rho,
            });
        }
        out.ux[k] = (jx + 0.5 * force[0]) / rho;
        out.uy[k] = (jy + 0.5 * force[1]) / rho;
    }
    Ok(())
}

/// `omega = d(uy)/dx - d(ux)/dy`: central differences inside, one-sided at
/// the edges, zero at solid nodes.
pub fn compute_vorticity(
    fields: &MacroscopicFields,
    solid: &ObstacleMask,
    step_index: u64,
) -> VorticitySnapshot {
    let (nx, ny) = (fields.nx, fields.ny);
    assert!(nx >= 3 && ny >= 3, "vorticity needs at least a 3x3 grid");
    let at = |v: &[f64], x: usize, y: usize| v[y * nx + x];
    let mut omega = vec![0.0; nx * ny];
    for y in 0..ny {
        for x in 0..nx {
            if solid.is_solid(x, y) {
                continue;
            }
            let duy_dx = if x == 0 {
                at(&fields.uy, 1, y) - at(&fields.uy, 0, y)
            } else if x == nx - 1 {
                at(&fields.uy, nx - 1, y) - at(&fields.uy, nx - 2, y)
            } else {
                0.5 * (at(&fields.uy, x + 1, y) - at(&fields.uy, x - 1, y))
            };
            let dux_dy = if y == 0 {
                at(&fields.ux, x, 1) - at(&fields.ux, x, 0)
            } else if y == ny - 1 {
                at(&fields.ux, x, ny - 1) - at(&fields.ux, x, ny - 2)
            } else {
                0.5 * (at(&fields.ux, x, y + 1) - at(&fields.ux, x, y - 1))
            };
            omega[y * nx + x] = duy_dx - dux_dy;
        }
    }
    VorticitySnapshot {
        nx,
        ny,
        omega,
        step_index,
    }
}
