//! Command-line experiment driver: presets, CSV output and rate reports.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, ValueEnum};

use crate::adaptivity::{adaptive_loop, AdaptiveConfig, AdaptiveRun, ConvergenceRecord, RefinementMode};
use crate::error::{Error, Result};
use crate::goals::{
    region_aligned_mesh, GoalFunctional, Region, FINAL_TIME_EXACT_1D, FINAL_TIME_EXACT_2D, P_ENERGY_EXACT_1D,
    P_ENERGY_EXACT_2D,
};
use crate::mesh::{build_box_mesh, SimplicialMesh};
use crate::problem::ProblemDefinition;
use crate::solvers::{LinearSolverConfig, LinearSolverKind, NewtonConfig, Preconditioner};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Preset {
    SmoothConvergence,
    LinearGoal,
    NonlinearGoal,
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Uniform,
    Dwr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Gmres,
    Direct,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PrecondArg {
    None,
    Jacobi,
    Ilu0,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GoalArg {
    FinalTime,
    PEnergy,
}

/// Goal-oriented adaptive space-time finite elements for the regularized
/// parabolic p-Laplace equation.
#[derive(Clone, Debug, Parser)]
#[command(name = "spacetime-dwr", version)]
pub struct RunConfig {
    #[arg(long, value_enum, default_value = "linear_goal")]
    pub preset: Preset,
    /// Spatial dimension d (the space-time mesh has dimension d + 1).
    #[arg(long = "dim", default_value_t = 1)]
    pub d: usize,
    #[arg(long, default_value_t = 4.0)]
    pub p: f64,
    #[arg(long = "epsilon", default_value_t = 1e-5)]
    pub eps: f64,
    /// Polynomial degree of the discrete space.
    #[arg(long = "degree", default_value_t = 1)]
    pub k: usize,
    /// Refinement mode; defaults to uniform for smooth_convergence, dwr otherwise.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Goal functional for the custom preset.
    #[arg(long, value_enum, default_value = "final-time")]
    pub goal: GoalArg,
    /// Cells per axis of the initial mesh (default 4 for d=1, 8 for d=2).
    #[arg(long)]
    pub initial_cells: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_dofs: usize,
    #[arg(long, default_value_t = 30)]
    pub max_levels: usize,
    #[arg(long, value_enum, default_value = "direct")]
    pub solver: SolverArg,
    #[arg(long, value_enum, default_value = "jacobi")]
    pub precond: PrecondArg,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    #[arg(long)]
    pub out_vtk_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for assembly (0: all cores).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

/// A fully specified experiment.
pub struct Experiment {
    pub problem: ProblemDefinition,
    pub goal: GoalFunctional,
    pub mesh: Arc<SimplicialMesh>,
    pub adaptive: AdaptiveConfig,
    pub newton: NewtonConfig,
    pub linear: LinearSolverConfig,
}

impl RunConfig {
    pub fn mode(&self) -> RefinementMode {
        match (self.mode, self.preset) {
            (Some(ModeArg::Uniform), _) | (None, Preset::SmoothConvergence) => RefinementMode::Uniform,
            _ => RefinementMode::Dwr,
        }
    }

    fn goal_kind(&self) -> GoalArg {
        match self.preset {
            Preset::SmoothConvergence | Preset::LinearGoal => GoalArg::FinalTime,
            Preset::NonlinearGoal => GoalArg::PEnergy,
            Preset::Custom => self.goal,
        }
    }

    /// Builds the problem, goal, initial mesh and solver settings.
    pub fn experiment(&self) -> Result<Experiment> {
        let d = self.d;
        let n = self.initial_cells.unwrap_or(4 * d);
        let mut problem = ProblemDefinition::manufactured(d, self.p, self.eps)?;
        let (goal, mesh) = match self.goal_kind() {
            GoalArg::FinalTime => {
                problem = problem.with_exact_goal(if d == 1 { FINAL_TIME_EXACT_1D } else { FINAL_TIME_EXACT_2D });
                (GoalFunctional::FinalTimeIntegral, build_box_mesh(d, n)?)
            }
            GoalArg::PEnergy => {
                let mesh = region_aligned_mesh(d, n)?;
                if self.p == 4.0 {
                    problem = problem.with_exact_goal(if d == 1 { P_ENERGY_EXACT_1D } else { P_ENERGY_EXACT_2D });
                }
                (GoalFunctional::p_energy(Region::for_dim(d)?, self.p, &mesh)?, mesh)
            }
        };
        let linear = LinearSolverConfig {
            kind: match self.solver {
                SolverArg::Gmres => LinearSolverKind::Gmres,
                SolverArg::Direct => LinearSolverKind::Direct,
            },
            preconditioner: match self.precond {
                PrecondArg::None => Preconditioner::None,
                PrecondArg::Jacobi => Preconditioner::Jacobi,
                PrecondArg::Ilu0 => Preconditioner::Ilu0,
            },
            ..Default::default()
        };
        Ok(Experiment {
            problem,
            goal,
            mesh: Arc::new(mesh),
            adaptive: AdaptiveConfig {
                mode: self.mode(),
                theta: self.theta,
                max_dofs: self.max_dofs,
                max_levels: self.max_levels,
                degree: self.k,
                seed: self.seed,
                vtk_dir: self.out_vtk_dir.clone(),
            },
            newton: NewtonConfig::default(),
            linear,
        })
    }
}

impl Experiment {
    pub fn run(&self) -> Result<AdaptiveRun> {
        adaptive_loop(&self.problem, &self.goal, self.mesh.clone(), &self.adaptive, &self.newton, &self.linear)
    }
}

pub const CSV_COLUMNS: [&str; 16] = [
    "level",
    "dofs",
    "elements",
    "J_h",
    "J_error",
    "eta_h",
    "eta_h_p",
    "eta_h_a",
    "eta_k",
    "I_eff_h",
    "I_eff_p",
    "I_eff_a",
    "newton_iters",
    "inner_iters",
    "l2_Q_error",
    "l2_h1_error",
];

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// CSV body (header and one row per record), without the timestamp line.
pub fn csv_rows(records: &[ConvergenceRecord]) -> String {
    let mut out = CSV_COLUMNS.join(",");
    out.push('\n');
    for r in records {
        let fields = [
            r.level.to_string(),
            r.dofs.to_string(),
            r.elements.to_string(),
            num(r.j_h),
            opt(r.j_error),
            opt(r.eta_h),
            opt(r.eta_h_p),
            opt(r.eta_h_a),
            opt(r.eta_k),
            opt(r.i_eff_h),
            opt(r.i_eff_p),
            opt(r.i_eff_a),
            r.newton_iters.to_string(),
            r.inner_iters.to_string(),
            opt(r.l2_q_error),
            opt(r.l2_h1_error),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateRow {
    pub quantity: &'static str,
    /// `log(e_{l-1} / e_l) / log(h_{l-1} / h_l)` with `h = elements^(-1/(d+1))`.
    pub orders: Vec<f64>,
    /// The same with `h = dofs^(-1/d)`.
    pub orders_dofs_h: Vec<f64>,
    /// Least-squares slope of `log e` against `log dofs`.
    pub slope_vs_dofs: f64,
}

fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

type Extract = fn(&ConvergenceRecord) -> Option<f64>;

/// Observed orders of `|J error|`, `|eta_h|` and the two error norms.
/// `space_dim` is d.
pub fn report_rates(records: &[ConvergenceRecord], space_dim: usize) -> Result<Vec<RateRow>> {
    if records.len() < 3 {
        return Err(Error::TooFewRecords(records.len()));
    }
    let quantities: [(&'static str, Extract); 4] = [
        ("l2_Q_error", |r| r.l2_q_error),
        ("l2_h1_error", |r| r.l2_h1_error),
        ("J_error", |r| r.j_error.map(f64::abs)),
        ("eta_h", |r| r.eta_h.map(f64::abs)),
    ];
    let dim = (space_dim + 1) as f64;
    let mut rows = Vec::new();
    for (name, get) in quantities {
        let pts: Vec<(f64, f64, f64)> = records
            .iter()
            .filter_map(|r| get(r).filter(|v| *v > 0.0).map(|v| (v, r.elements as f64, r.dofs as f64)))
            .collect();
        if pts.len() < 2 {
            continue;
        }
        let orders = pts
            .windows(2)
            .map(|w| (w[0].0 / w[1].0).ln() / ((w[1].1 / w[0].1).ln() / dim))
            .collect();
        let orders_dofs_h = pts
            .windows(2)
            .map(|w| (w[0].0 / w[1].0).ln() / ((w[1].2 / w[0].2).ln() / space_dim as f64))
            .collect();
        let lx: Vec<f64> = pts.iter().map(|p| p.2.ln()).collect();
        let ly: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
        rows.push(RateRow {
            quantity: name,
            orders,
            orders_dofs_h,
            slope_vs_dofs: least_squares_slope(&lx, &ly),
        });
    }
    Ok(rows)
}

pub fn format_rates(rows: &[RateRow]) -> String {
    let mut s = String::new();
    for r in rows {
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(
            s,
            "{}: orders (h = elements^(-1/D)) [{}]; orders (h = dofs^(-1/d)) [{}]; slope vs dofs {:.4}",
            r.quantity,
            fmt(&r.orders),
            fmt(&r.orders_dofs_h),
            r.slope_vs_dofs
        );
    }
    s
}

fn timestamp() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Runs the configured experiment and writes its outputs. Returns the
/// process exit code: 0 on success, 1 on solver failure, 2 on invalid
/// configuration.
pub fn run(cfg: &RunConfig) -> i32 {
    if cfg.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global() {
            eprintln!("warning: could not configure the thread pool: {e}");
        }
    }
    let exp = match cfg.experiment() {
        Ok(e) => e,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    if let Some(j) = exp.problem.exact_goal {
        println!("reference goal value J(u) = {j:.15}");
    }
    let run = match exp.run() {
        Ok(r) => r,
        Err(e @ (Error::InvalidArgument(_) | Error::UnsupportedDegree(_) | Error::UnsupportedDimension(_))) => {
            eprintln!("error: {e}");
            return 2;
        }
        Err(e) => {
            eprintln!("solver failure: {e}");
            return 1;
        }
    };
    for r in &run.records {
        println!(
            "level {:>2}  dofs {:>8}  J_h {:.10e}  J_err {}  eta_h {}  I_eff {}  newton {} ({})",
            r.level,
            r.dofs,
            r.j_h,
            r.j_error.map_or("-".into(), |x| format!("{x:.3e}")),
            r.eta_h.map_or("-".into(), |x| format!("{x:.3e}")),
            r.i_eff_h.map_or("-".into(), |x| format!("{x:.3}")),
            r.newton_iters,
            r.inner_iters
        );
    }
    let rates = report_rates(&run.records, cfg.d);
    let rate_text = match &rates {
        Ok(rows) => format_rates(rows),
        Err(e) => format!("{e}\n"),
    };
    print!("{rate_text}");
    if let Some(last) = run.records.last() {
        if let (Some(h), Some(p), Some(a)) = (last.i_eff_h, last.i_eff_p, last.i_eff_a) {
            println!("final efficiency indices: I_eff,h {h:.4}  I_eff,p {p:.4}  I_eff,a {a:.4}");
        }
    }
    if let Some(path) = &cfg.out_csv {
        let mut text = format!("# spacetime-dwr run at unix time {}\n", timestamp());
        text.push_str(&csv_rows(&run.records));
        for line in rate_text.lines() {
            text.push_str("# ");
            text.push_str(line);
            text.push('\n');
        }
        let written = std::fs::File::create(path).and_then(|mut f| f.write_all(text.as_bytes()));
        if let Err(e) = written {
            eprintln!("error writing {}: {e}", path.display());
            return 1;
        }
    }
    if run.records.iter().any(|r| !r.newton_converged) {
        eprintln!("warning: Newton did not converge on some levels");
        return 1;
    }
    0
}

/// Parses arguments and runs; usage errors exit with code 2.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match RunConfig::try_parse_from(args) {
        Ok(cfg) => run(&cfg),
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(level: usize, dofs: usize, elements: usize, err: f64) -> ConvergenceRecord {
        ConvergenceRecord {
            level,
            dofs,
            elements,
            l2_q_error: Some(err),
            ..Default::default()
        }
    }

    #[test]
    fn rates_of_halving_errors() {
        let recs: Vec<_> = (0..4).map(|l| record(l, 4usize.pow(l as u32) * 10, 4usize.pow(l as u32) * 8, 0.5f64.powi(l as i32))).collect();
        let rows = report_rates(&recs, 1).unwrap();
        let r = &rows[0];
        assert!(r.orders.iter().all(|o| (o - 1.0).abs() < 1e-12));
        assert!((r.slope_vs_dofs + 0.5).abs() < 1e-12);
    }

    #[test]
    fn rates_of_constant_errors() {
        let recs: Vec<_> = (0..3).map(|l| record(l, 10 << l, 8 << l, 0.3)).collect();
        let r = &report_rates(&recs, 1).unwrap()[0];
        assert!(r.orders.iter().all(|o| o.abs() < 1e-12));
        assert!(r.slope_vs_dofs.abs() < 1e-12);
    }

    #[test]
    fn slope_fit_recovers_exponent() {
        let recs: Vec<_> = [100usize, 400, 1500, 7000, 20000]
            .iter()
            .enumerate()
            .map(|(l, &n)| record(l, n, n, (n as f64).powf(-0.85)))
            .collect();
        let r = &report_rates(&recs, 1).unwrap()[0];
        assert!((r.slope_vs_dofs + 0.85).abs() < 0.01);
    }

    #[test]
    fn too_few_records() {
        assert!(matches!(report_rates(&[record(0, 1, 1, 1.0)], 1), Err(Error::TooFewRecords(1))));
    }

    #[test]
    fn csv_has_fixed_schema() {
        let text = csv_rows(&[record(0, 9, 8, 0.25)]);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_COLUMNS.join(","));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 16);
        assert_eq!(row[14], "2.5000000000000000e-1");
        assert_eq!(row[5], "");
    }

    #[test]
    fn usage_errors_exit_with_two() {
        assert_eq!(main_with_args(["spacetime-dwr", "--bogus"]), 2);
        assert_eq!(main_with_args(["spacetime-dwr", "--preset", "nonexistent"]), 2);
        assert_eq!(main_with_args(["spacetime-dwr", "--theta", "1.5", "--max-levels", "1"]), 2);
        assert_eq!(main_with_args(["spacetime-dwr", "--dim", "3"]), 2);
    }

    #[test]
    fn presets_select_goals_and_targets() {
        let cfg = RunConfig::try_parse_from(["x", "--preset", "linear_goal", "--dim", "2"]).unwrap();
        let exp = cfg.experiment().unwrap();
        assert!((exp.problem.exact_goal.unwrap() - 1.10167812933171).abs() < 1e-13);
        let cfg = RunConfig::try_parse_from(["x", "--preset", "nonlinear_goal", "--dim", "2"]).unwrap();
        let exp = cfg.experiment().unwrap();
        assert_eq!(exp.problem.exact_goal, Some(0.01937125060566419));
        assert!(matches!(exp.goal, GoalFunctional::PEnergyRegion { .. }));
        let cfg = RunConfig::try_parse_from(["x", "--preset", "smooth_convergence"]).unwrap();
        assert_eq!(cfg.mode(), RefinementMode::Uniform);
    }

    fn run_to_csv(path: &std::path::Path, extra: &[&str]) -> String {
        let mut args = vec!["spacetime-dwr", "--preset", "linear_goal", "--dim", "1", "--max-dofs", "150", "--seed", "7"];
        args.extend_from_slice(extra);
        let p = path.to_str().unwrap();
        args.extend_from_slice(&["--out-csv", p]);
        assert_eq!(main_with_args(args), 0);
        std::fs::read_to_string(path).unwrap()
    }

    #[test]
    fn csv_is_deterministic_apart_from_the_timestamp() {
        let dir = tempfile::tempdir().unwrap();
        let a = run_to_csv(&dir.path().join("a.csv"), &[]);
        let b = run_to_csv(&dir.path().join("b.csv"), &[]);
        assert!(a.starts_with("# "));
        let body = |s: &str| s.lines().skip(1).map(str::to_owned).collect::<Vec<_>>();
        assert_eq!(body(&a), body(&b));
        let lines = body(&a);
        assert_eq!(lines[0], CSV_COLUMNS.join(","));
        let data: Vec<&String> = lines.iter().skip(1).filter(|l| !l.starts_with('#')).collect();
        assert!(data.len() >= 3);
        assert!(data.iter().all(|row| row.split(',').count() == 16));
    }

    #[test]
    fn vtk_files_per_level() {
        let dir = tempfile::tempdir().unwrap();
        let vtk = dir.path().join("vtk");
        let args = ["x", "--preset", "nonlinear_goal", "--max-levels", "2", "--out-vtk-dir", vtk.to_str().unwrap()];
        assert_eq!(main_with_args(args), 0);
        assert!(vtk.join("level_000.vtk").exists());
        assert!(vtk.join("level_001.vtk").exists());
    }
}
