use super::{AutodiffError, Graph, ParamSet, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference half step.
    pub eps: f64,
    /// Lower bound on the relative-error denominator.
    pub floor: f64,
    /// Check at most this many evenly spaced entries per block.
    pub max_per_block: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            floor: 1e-3,
            max_per_block: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockError {
    pub name: String,
    pub checked: usize,
    pub max_abs: f64,
    /// `max |a - n| / max(|a|, |n|, floor)` over checked entries.
    pub max_rel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockError>,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel).fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_error() < tolerance
    }
}

/// Compares analytic gradients of `build`'s scalar output with central
/// differences, perturbing one parameter entry at a time.
pub fn gradient_check<F>(
    params: &ParamSet,
    build: F,
    options: &GradCheckOptions,
) -> Result<GradCheckReport, AutodiffError>
where
    F: Fn(&mut Graph<'_>) -> Result<Var, AutodiffError>,
{
    let eval = |ps: &ParamSet| -> Result<f64, AutodiffError> {
        let mut g = Graph::new(ps);
        let loss = build(&mut g)?;
        Ok(g.value(loss).item())
    };
    let analytic = {
        let mut g = Graph::new(params);
        let loss = build(&mut g)?;
        g.backward(loss)?.param_grads(params)
    };
    let mut work = params.clone();
    let mut blocks = Vec::with_capacity(params.len());
    for id in params.ids() {
        let n = params.get(id).len();
        let stride = match options.max_per_block {
            Some(m) if m > 0 && n > m => n.div_ceil(m),
            _ => 1,
        };
        let mut block = BlockError {
            name: params.name(id).to_string(),
            checked: 0,
            max_abs: 0.0,
            max_rel: 0.0,
        };
        for k in (0..n).step_by(stride) {
            let orig = work.get(id).data()[k];
            work.get_mut(id).data_mut()[k] = orig + options.eps;
            let plus = eval(&work)?;
            work.get_mut(id).data_mut()[k] = orig - options.eps;
            let minus = eval(&work)?;
            work.get_mut(id).data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * options.eps);
            let a = analytic[id.index()].data()[k];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(options.floor);
            block.checked += 1;
            block.max_abs = block.max_abs.max(abs);
            block.max_rel = block.max_rel.max(rel);
        }
        blocks.push(block);
    }
    Ok(GradCheckReport { blocks })
}
