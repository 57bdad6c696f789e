//! Dörfler marking and the adaptive solve-estimate-mark-refine loop.

use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dwr::{enrich, estimate};
use crate::error::{Error, Result};
use crate::fespace::{build_space, FeFunction, FeSpace};
use crate::goals::GoalFunctional;
use crate::mesh::SimplicialMesh;
use crate::problem::ProblemDefinition;
use crate::solvers::{newton_solve, solve_adjoint, LinearSolverConfig, NewtonConfig};
use crate::vtk;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefinementMode {
    Uniform,
    Dwr,
}

#[derive(Clone, Debug)]
pub struct AdaptiveConfig {
    pub mode: RefinementMode,
    pub theta: f64,
    pub max_dofs: usize,
    pub max_levels: usize,
    pub degree: usize,
    /// Seed of the pseudo-random initial guess on level 0.
    pub seed: u64,
    pub vtk_dir: Option<PathBuf>,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig {
            mode: RefinementMode::Dwr,
            theta: 0.5,
            max_dofs: 100_000,
            max_levels: 30,
            degree: 1,
            seed: 0,
            vtk_dir: None,
        }
    }
}

impl AdaptiveConfig {
    fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::InvalidArgument(format!("theta must lie in (0, 1], got {}", self.theta)));
        }
        if self.max_levels == 0 {
            return Err(Error::InvalidArgument("max_levels must be at least 1".into()));
        }
        if self.mode == RefinementMode::Dwr && self.degree != 1 {
            return Err(Error::InvalidArgument("dwr mode requires degree 1".into()));
        }
        if !(1..=2).contains(&self.degree) {
            return Err(Error::UnsupportedDegree(self.degree));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct ConvergenceRecord {
    pub level: usize,
    pub dofs: usize,
    pub elements: usize,
    pub j_h: f64,
    pub j_error: Option<f64>,
    pub eta_h: Option<f64>,
    pub eta_h_p: Option<f64>,
    pub eta_h_a: Option<f64>,
    pub eta_k: Option<f64>,
    pub i_eff_h: Option<f64>,
    pub i_eff_p: Option<f64>,
    pub i_eff_a: Option<f64>,
    pub newton_iters: usize,
    pub inner_iters: usize,
    pub l2_q_error: Option<f64>,
    pub l2_h1_error: Option<f64>,
    // diagnostics outside the CSV schema
    pub newton_converged: bool,
    pub inner_converged: bool,
    pub newton_residuals: Vec<f64>,
    /// Sum of the element indicators (equals `eta_h` up to rounding).
    pub eta_local_sum: Option<f64>,
    pub j_enriched: Option<f64>,
    /// `[J(u_h2) - J(u_h)] - [eta_h + eta_k]`.
    pub remainder: Option<f64>,
    pub enriched_newton_iters: Option<usize>,
    pub marked: usize,
    /// Marked elements inside the region of interest (p-energy goals).
    pub marked_in_region: usize,
    pub marked_volume: f64,
    pub marked_volume_in_region: f64,
}

#[derive(Clone, Debug)]
pub struct AdaptiveRun {
    pub records: Vec<ConvergenceRecord>,
    pub final_mesh: Arc<SimplicialMesh>,
}

/// Smallest set of elements, taken by decreasing `|eta_i|`, whose indicator
/// magnitudes reach `theta` times the total.
pub fn doerfler_mark(indicators: &[f64], theta: f64) -> Result<Vec<usize>> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidArgument(format!("theta must lie in (0, 1], got {theta}")));
    }
    if let Some(i) = indicators.iter().position(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!("indicator {i} is not finite")));
    }
    let mut order: Vec<usize> = (0..indicators.len()).filter(|&i| indicators[i] != 0.0).collect();
    order.sort_by(|&a, &b| indicators[b].abs().total_cmp(&indicators[a].abs()).then(a.cmp(&b)));
    let total: f64 = order.iter().map(|&i| indicators[i].abs()).sum();
    let mut acc = 0.0;
    let mut marked = Vec::new();
    for i in order {
        if acc >= theta * total {
            break;
        }
        acc += indicators[i].abs();
        marked.push(i);
    }
    Ok(marked)
}

fn random_initial_guess(space: &Arc<FeSpace>, seed: u64) -> FeFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = (0..space.n_dofs()).map(|_| rng.gen::<f64>()).collect();
    let mut u = FeFunction::from_coeffs(space, coeffs).expect("length matches");
    u.zero_constrained();
    u
}

/// Runs the adaptive algorithm from `mesh`. In uniform mode every level is
/// obtained by `dim` bisection sweeps (halving the mesh size) and no
/// estimation takes place. The loop stops before a level whose space would
/// exceed `max_dofs` dofs or after `max_levels` levels. Solver failures are
/// recorded and the loop continues.
pub fn adaptive_loop(
    prob: &ProblemDefinition,
    goal: &GoalFunctional,
    mesh: Arc<SimplicialMesh>,
    cfg: &AdaptiveConfig,
    ncfg: &NewtonConfig,
    lcfg: &LinearSolverConfig,
) -> Result<AdaptiveRun> {
    cfg.validate()?;
    if let GoalFunctional::PEnergyRegion { region, .. } = goal {
        region.classify(&mesh)?;
    }
    if let Some(dir) = &cfg.vtk_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut space = build_space(mesh, cfg.degree)?;
    let mut init = random_initial_guess(&space, cfg.seed);
    let mut records = Vec::new();
    for level in 0..cfg.max_levels {
        let (u, stats) = newton_solve(prob, &space, &init, ncfg, lcfg)?;
        let j_h = goal.eval(&u)?;
        let mut rec = ConvergenceRecord {
            level,
            dofs: space.n_dofs(),
            elements: space.n_elements(),
            j_h,
            j_error: prob.exact_goal.map(|j| j - j_h),
            newton_iters: stats.newton_iters,
            inner_iters: stats.total_inner_iters,
            newton_converged: stats.converged,
            inner_converged: stats.inner_converged,
            newton_residuals: stats.residual_history.clone(),
            ..Default::default()
        };
        if let Some(exact) = &prob.exact {
            let (l2, h1) = u.error_norms(exact.as_ref())?;
            rec.l2_q_error = Some(l2);
            rec.l2_h1_error = Some(h1);
        }
        let mesh = space.mesh().clone();
        let mut indicators = None;
        if cfg.mode == RefinementMode::Dwr {
            let (z, adj) = solve_adjoint(prob, &space, &u, goal, lcfg)?;
            rec.inner_converged &= adj.converged;
            let fine = enrich(&space)?;
            let (u2, st2) = newton_solve(prob, &fine, &u.transfer_to(&fine)?, ncfg, lcfg)?;
            let (z2, adj2) = solve_adjoint(prob, &fine, &u2, goal, lcfg)?;
            rec.inner_converged &= st2.inner_converged && adj2.converged;
            rec.enriched_newton_iters = Some(st2.newton_iters);
            let mut b = estimate(prob, goal, &u, &z, &u2, &z2)?;
            if let Some(j) = prob.exact_goal {
                b = b.with_efficiency(j, j_h);
            }
            let j2 = goal.eval(&u2)?;
            rec.eta_h = Some(b.eta_h);
            rec.eta_h_p = Some(b.eta_h_p);
            rec.eta_h_a = Some(b.eta_h_a);
            rec.eta_k = Some(b.eta_k);
            rec.i_eff_h = b.i_eff_h;
            rec.i_eff_p = b.i_eff_p;
            rec.i_eff_a = b.i_eff_a;
            rec.eta_local_sum = Some(b.local.iter().sum());
            rec.j_enriched = Some(j2);
            rec.remainder = Some(b.remainder(j2, j_h));
            indicators = Some(b.local);
        }
        if let Some(dir) = &cfg.vtk_dir {
            vtk::write_level(&dir.join(format!("level_{level:03}.vtk")), &u, indicators.as_deref())?;
        }
        let last = level + 1 == cfg.max_levels;
        let next = if last {
            None
        } else {
            match &indicators {
                None => Some(mesh.refine_uniform(mesh.dim())?),
                Some(eta) => {
                    let marked = doerfler_mark(eta, cfg.theta)?;
                    if marked.is_empty() {
                        None
                    } else {
                        rec.marked = marked.len();
                        rec.marked_volume = marked.iter().map(|&e| mesh.volume(e)).sum();
                        if let GoalFunctional::PEnergyRegion { region, .. } = goal {
                            let inside = region.classify(&mesh)?;
                            let m_in: Vec<usize> = marked.iter().copied().filter(|&e| inside[e]).collect();
                            rec.marked_in_region = m_in.len();
                            rec.marked_volume_in_region = m_in.iter().map(|&e| mesh.volume(e)).sum();
                        }
                        Some(mesh.refine(&marked)?)
                    }
                }
            }
        };
        records.push(rec);
        let Some(next) = next else { break };
        let next_space = build_space(Arc::new(next), cfg.degree)?;
        if next_space.n_dofs() > cfg.max_dofs {
            break;
        }
        init = u.transfer_to(&next_space)?;
        space = next_space;
    }
    Ok(AdaptiveRun {
        records,
        final_mesh: space.mesh().clone(),
    })
}
