//! Dual-weighted residual estimation with degree enrichment on the same mesh.

use std::sync::Arc;

use crate::assembly::{linearized_by_element, residual_by_element};
use crate::error::{Error, Result};
use crate::fespace::{build_space, FeFunction, FeSpace};
use crate::goals::GoalFunctional;
use crate::problem::ProblemDefinition;

/// Below this goal error efficiency indices are not reported.
pub const EFFICIENCY_CUTOFF: f64 = 1e-14;

#[derive(Clone, Debug, Default)]
pub struct EstimatorBreakdown {
    /// `-A(u~)(z2 - z~)`.
    pub eta_h_p: f64,
    /// `J'(u~)(u2 - u~) - A'(u~)(u2 - u~, z~)`.
    pub eta_h_a: f64,
    /// `(eta_h_p + eta_h_a) / 2`.
    pub eta_h: f64,
    /// `-A(u~)(z~)`, the iteration error part.
    pub eta_k: f64,
    /// Element indicators; they sum to `eta_h`.
    pub local: Vec<f64>,
    pub i_eff_h: Option<f64>,
    pub i_eff_p: Option<f64>,
    pub i_eff_a: Option<f64>,
}

/// The degree-2 space on the mesh of a degree-1 space.
pub fn enrich(space: &FeSpace) -> Result<Arc<FeSpace>> {
    if space.degree() != 1 {
        return Err(Error::InvalidArgument(format!(
            "enrichment needs a degree 1 space, got degree {}",
            space.degree()
        )));
    }
    build_space(space.mesh().clone(), 2)
}

fn difference(a: &FeFunction, b: &FeFunction) -> Result<FeFunction> {
    let c = a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x - y).collect();
    FeFunction::from_coeffs(a.space(), c)
}

/// Estimator parts from coarse solutions `u_h`, `z_h` and enriched solutions
/// `u_h2`, `z_h2` (the latter two on the same space, whose mesh must be the
/// coarse mesh).
pub fn estimate(
    prob: &ProblemDefinition,
    goal: &GoalFunctional,
    u_h: &FeFunction,
    z_h: &FeFunction,
    u_h2: &FeFunction,
    z_h2: &FeFunction,
) -> Result<EstimatorBreakdown> {
    let fine = u_h2.space();
    if !Arc::ptr_eq(fine, z_h2.space()) || !Arc::ptr_eq(u_h.space(), z_h.space()) {
        return Err(Error::DimensionMismatch("primal and adjoint live on different spaces".into()));
    }
    if fine.mesh().id() != u_h.space().mesh().id() {
        return Err(Error::DimensionMismatch("enriched space is on a different mesh".into()));
    }
    let ut = u_h.transfer_to(fine)?;
    let zt = z_h.transfer_to(fine)?;
    let eu = difference(u_h2, &ut)?;
    let ez = difference(z_h2, &zt)?;
    let primal = residual_by_element(fine, prob, &ut, &ez)?;
    let goal_part = goal.derivative_by_element(&ut, &eu)?;
    let lin = linearized_by_element(fine, prob, &ut, &eu, &zt)?;
    let iteration = residual_by_element(fine, prob, &ut, &zt)?;
    let local: Vec<f64> = (0..fine.n_elements())
        .map(|e| 0.5 * (-primal[e] + goal_part[e] - lin[e]))
        .collect();
    let eta_h_p = -primal.iter().sum::<f64>();
    let eta_h_a = goal_part.iter().sum::<f64>() - lin.iter().sum::<f64>();
    Ok(EstimatorBreakdown {
        eta_h_p,
        eta_h_a,
        eta_h: 0.5 * (eta_h_p + eta_h_a),
        eta_k: -iteration.iter().sum::<f64>(),
        local,
        ..Default::default()
    })
}

/// `(I_eff_h, I_eff_p, I_eff_a)` with the error `J_exact - J_h` in the
/// denominator; all absent when that error is below [`EFFICIENCY_CUTOFF`].
pub fn efficiency(b: &EstimatorBreakdown, j_exact: f64, j_h: f64) -> (Option<f64>, Option<f64>, Option<f64>) {
    let err = j_exact - j_h;
    if err.abs() < EFFICIENCY_CUTOFF {
        return (None, None, None);
    }
    (Some(b.eta_h / err), Some(b.eta_h_p / err), Some(b.eta_h_a / err))
}

impl EstimatorBreakdown {
    pub fn with_efficiency(mut self, j_exact: f64, j_h: f64) -> Self {
        let (h, p, a) = efficiency(&self, j_exact, j_h);
        self.i_eff_h = h;
        self.i_eff_p = p;
        self.i_eff_a = a;
        self
    }

    /// Remainder of the error representation measured in the enriched space:
    /// `[J(u_h2) - J(u~)] - [eta_h + eta_k]`.
    pub fn remainder(&self, j_enriched: f64, j_h: f64) -> f64 {
        (j_enriched - j_h) - (self.eta_h + self.eta_k)
    }
}
