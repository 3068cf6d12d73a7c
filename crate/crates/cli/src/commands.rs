//! The four experiments.

use serde_json::{json, Value};

use dgieti::assembly::DgProblem;
use dgieti::geometry::{mesh_ratio_factor, MultiPatch};
use dgieti::ieti::{IetiDp, IetiSolution, PcgResult, Spectrum};
use dgieti::linalg::{norm_inf, DENSE_LIMIT};
use dgieti::norms::{error_norms, ErrorNorms};

use crate::config::RunConfig;
use crate::manufactured::{Manufactured, ManufacturedData};
use crate::output::{fmt_float, fmt_opt, Table};
use crate::CliError;

/// Extra Gauss points used when measuring errors.
const ERROR_QUADRATURE_EXTRA: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    KappaStudy,
    RatioStudy,
    Convergence,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::KappaStudy => "kappa-study",
            Command::RatioStudy => "ratio-study",
            Command::Convergence => "convergence",
        }
    }
}

/// Command line settings that take precedence over the configuration file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub delta: Option<f64>,
    pub tol: Option<f64>,
    pub oracle: bool,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        if let Some(d) = self.delta {
            cfg.delta = Some(d);
        }
        if let Some(t) = self.tol {
            cfg.tol = t;
        }
        cfg.oracle |= self.oracle;
        cfg.validate()
    }
}

/// Table and report of a run; `failure` is set when the run did not complete successfully.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub table: Table,
    pub report: Value,
    pub failure: Option<String>,
}

pub fn run(command: Command, cfg: &RunConfig) -> Result<RunOutput, CliError> {
    cfg.validate()?;
    let mut out = match command {
        Command::Solve => solve(cfg)?,
        Command::KappaStudy => kappa_study(cfg)?,
        Command::RatioStudy => ratio_study(cfg)?,
        Command::Convergence => convergence(cfg)?,
    };
    if let Value::Object(map) = &mut out.report {
        map.insert("command".into(), json!(command.name()));
        map.insert("config".into(), serde_json::to_value(cfg)?);
        map.insert("success".into(), json!(out.failure.is_none()));
        if let Some(f) = &out.failure {
            map.insert("failure".into(), json!(f));
        }
    }
    Ok(out)
}

/// Everything measured on one discretization.
#[derive(Debug, Clone)]
pub struct LevelRun {
    pub dofs: usize,
    pub multipliers: usize,
    pub primal: usize,
    pub h: f64,
    pub h_ratio: f64,
    pub q_h: f64,
    pub solution: IetiSolution,
    pub estimate: PcgResult,
    pub oracle: Option<Spectrum>,
    pub errors: ErrorNorms,
}

impl LevelRun {
    pub fn converged(&self) -> bool {
        self.solution.pcg.converged && self.estimate.converged
    }
}

fn manufactured(cfg: &RunConfig, mp: &MultiPatch) -> Result<Manufactured, CliError> {
    let m = Manufactured::from_name(&cfg.manufactured)?;
    m.check_dirichlet(mp)?;
    Ok(m)
}

/// Assembles, solves and measures on a given domain.
pub fn run_level(cfg: &RunConfig, mp: MultiPatch) -> Result<LevelRun, CliError> {
    let m = manufactured(cfg, &mp)?;
    let data = ManufacturedData::new(m, &mp);
    let metrics = mp.metrics()?;
    let h = metrics.iter().map(|m| m.h).fold(0.0, f64::max);
    let h_ratio = mp.max_h_ratio()?;
    let q_h = mp.mesh_ratio_q()?;
    let problem = DgProblem::assemble(mp, cfg.delta, &data)?;
    let ieti = IetiDp::build(&problem)?;
    let solution = ieti.solve(cfg.tol, cfg.max_iterations)?;
    let estimate = ieti.estimate_condition(cfg.tol, cfg.max_iterations, cfg.seed)?;
    let oracle =
        if cfg.oracle && ieti.num_multipliers() <= DENSE_LIMIT { Some(ieti.dense_spectrum_oracle()?) } else { None };
    let errors = error_norms(&problem, &solution.global, &m, ERROR_QUADRATURE_EXTRA)?;
    Ok(LevelRun {
        dofs: problem.num_dofs(),
        multipliers: ieti.num_multipliers(),
        primal: ieti.num_primal(),
        h,
        h_ratio,
        q_h,
        solution,
        estimate,
        oracle,
        errors,
    })
}

fn nonconvergence(run: &LevelRun) -> String {
    format!(
        "PCG did not converge within {} iterations (relative residual {:e})",
        run.solution.pcg.iterations,
        run.solution.pcg.residual_history.last().copied().unwrap_or(f64::NAN)
    )
}

fn oracle_kappa(run: &LevelRun) -> Option<f64> {
    run.oracle.as_ref().filter(|s| !s.eigenvalues.is_empty()).map(Spectrum::kappa)
}

fn level_json(run: &LevelRun) -> Value {
    json!({
        "dofs": run.dofs,
        "multipliers": run.multipliers,
        "primal": run.primal,
        "h": run.h,
        "h_ratio": run.h_ratio,
        "q_h": run.q_h,
        "iterations": run.solution.pcg.iterations,
        "converged": run.solution.pcg.converged,
        "jump_residual": run.solution.jump_residual,
        "solution_max": norm_inf(&run.solution.global),
        "solve_lambda_min": run.solution.pcg.lambda_min,
        "solve_lambda_max": run.solution.pcg.lambda_max,
        "estimate_iterations": run.estimate.iterations,
        "lambda_min": run.estimate.lambda_min,
        "lambda_max": run.estimate.lambda_max,
        "kappa": run.estimate.kappa(),
        "oracle_lambda_min": run.oracle.as_ref().map(Spectrum::min),
        "oracle_lambda_max": run.oracle.as_ref().map(Spectrum::max),
        "oracle_kappa": oracle_kappa(run),
        "dg_error": run.errors.dg,
        "l2_error": run.errors.l2,
        "energy_error": run.errors.energy,
    })
}

/// One solve on the configured domain.
pub fn solve(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let run = run_level(cfg, cfg.multipatch()?)?;
    let mut table = Table::new(&[
        "dofs",
        "multipliers",
        "primal",
        "iterations",
        "converged",
        "lambda_min",
        "lambda_max",
        "kappa",
        "oracle_kappa",
        "jump_residual",
        "dg_error",
        "l2_error",
    ]);
    table.push(vec![
        run.dofs.to_string(),
        run.multipliers.to_string(),
        run.primal.to_string(),
        run.solution.pcg.iterations.to_string(),
        run.solution.pcg.converged.to_string(),
        fmt_opt(run.estimate.lambda_min),
        fmt_opt(run.estimate.lambda_max),
        fmt_float(run.estimate.kappa()),
        fmt_opt(oracle_kappa(&run)),
        fmt_float(run.solution.jump_residual),
        fmt_float(run.errors.dg),
        fmt_float(run.errors.l2),
    ]);
    let failure = (!run.converged()).then(|| nonconvergence(&run));
    Ok(RunOutput { table, report: json!({ "result": level_json(&run) }), failure })
}

/// Least squares line `y = slope x + intercept` with its coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl Regression {
    pub fn fit(x: &[f64], y: &[f64]) -> Option<Self> {
        let n = x.len() as f64;
        if x.len() < 2 || x.len() != y.len() {
            return None;
        }
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
        if sxx == 0.0 {
            return None;
        }
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
        Some(Self { slope, intercept, r_squared })
    }

    pub fn predict(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

/// `(1 + log(H/h))^2`
pub fn log_factor(h_ratio: f64) -> f64 {
    let l = 1.0 + h_ratio.ln();
    l * l
}

fn default_levels(cfg: &RunConfig, fallback: &[usize]) -> Vec<usize> {
    cfg.levels.clone().unwrap_or_else(|| fallback.to_vec())
}

/// Condition numbers over refinement levels and their fit against the squared log factor.
pub fn kappa_study(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let levels = default_levels(cfg, &[2, 3, 4, 5]);
    if levels.len() < 3 {
        return Err(CliError::Config("the condition number study needs at least three levels".into()));
    }
    let mut table = Table::new(&[
        "level",
        "h_ratio",
        "dofs",
        "multipliers",
        "iterations",
        "lambda_min",
        "lambda_max",
        "kappa",
        "oracle_kappa",
    ]);
    let mut rows = Vec::new();
    let mut failure = None;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for &level in &levels {
        let run = match cfg.multipatch_at(level).and_then(|mp| run_level(cfg, mp)) {
            Ok(r) => r,
            Err(e) => {
                failure = Some(format!("level {level}: {e}"));
                break;
            }
        };
        table.push(vec![
            level.to_string(),
            fmt_float(run.h_ratio),
            run.dofs.to_string(),
            run.multipliers.to_string(),
            run.solution.pcg.iterations.to_string(),
            fmt_opt(run.estimate.lambda_min),
            fmt_opt(run.estimate.lambda_max),
            fmt_float(run.estimate.kappa()),
            fmt_opt(oracle_kappa(&run)),
        ]);
        x.push(log_factor(run.h_ratio));
        y.push(run.estimate.kappa());
        let mut j = level_json(&run);
        j["level"] = json!(level);
        rows.push(j);
        if !run.converged() {
            failure = Some(format!("level {level}: {}", nonconvergence(&run)));
            break;
        }
    }
    let fit = Regression::fit(&x, &y);
    let growth: Vec<Value> = match fit {
        Some(f) => x
            .windows(2)
            .zip(y.windows(2))
            .map(|(xs, ys)| json!({ "measured": ys[1] / ys[0], "model": f.predict(xs[1]) / f.predict(xs[0]) }))
            .collect(),
        None => Vec::new(),
    };
    let report = json!({
        "levels": rows,
        "regression": fit.map(|f| json!({ "slope": f.slope, "intercept": f.intercept, "r_squared": f.r_squared })),
        "growth": growth,
    });
    Ok(RunOutput { table, report, failure })
}

/// Condition numbers when one patch of a two-patch domain is refined further than its neighbor.
pub fn ratio_study(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let base = cfg.base_multipatch()?;
    if base.num_patches() != 2 || base.interfaces().len() != 1 {
        return Err(CliError::Config("the ratio study needs a two-patch domain with one interface".into()));
    }
    let ratios = cfg.ratios.clone().unwrap_or_else(|| vec![1, 2, 4, 8]);
    if ratios.first() != Some(&1) {
        return Err(CliError::Config("the ratio list must start with 1 to calibrate the envelope".into()));
    }
    let mut table = Table::new(&["ratio", "q_h", "h_ratio", "dofs", "iterations", "kappa", "envelope"]);
    let mut rows = Vec::new();
    let mut failure = None;
    let mut constant = None;
    let mut kappas = Vec::new();
    for &r in &ratios {
        let extra = r.trailing_zeros() as usize;
        let mut c = cfg.clone();
        let mut per_patch = cfg.patch_refinement.clone().unwrap_or_else(|| vec![[0, 0]; 2]);
        per_patch[1] = [per_patch[1][0] + extra, per_patch[1][1] + extra];
        c.patch_refinement = Some(per_patch);
        let run = match c.multipatch().and_then(|mp| run_level(&c, mp)) {
            Ok(run) => run,
            Err(e) => {
                failure = Some(format!("ratio {r}: {e}"));
                break;
            }
        };
        let kappa = run.estimate.kappa();
        let model = run.q_h * run.q_h * log_factor(run.h_ratio);
        let c_env = *constant.get_or_insert(kappa / model);
        let envelope = c_env * model;
        kappas.push(kappa);
        table.push(vec![
            r.to_string(),
            fmt_float(run.q_h),
            fmt_float(run.h_ratio),
            run.dofs.to_string(),
            run.solution.pcg.iterations.to_string(),
            fmt_float(kappa),
            fmt_float(envelope),
        ]);
        let mut j = level_json(&run);
        j["ratio"] = json!(r);
        j["envelope"] = json!(envelope);
        j["q_h_expected"] = json!(mesh_ratio_factor(r as f64));
        rows.push(j);
        if !run.converged() {
            failure = Some(format!("ratio {r}: {}", nonconvergence(&run)));
            break;
        }
    }
    let spread = match (kappas.iter().cloned().reduce(f64::min), kappas.iter().cloned().reduce(f64::max)) {
        (Some(lo), Some(hi)) => Some(hi / lo),
        _ => None,
    };
    let report = json!({
        "ratios": rows,
        "envelope_constant": constant,
        "kappa_spread": spread,
    });
    Ok(RunOutput { table, report, failure })
}

fn rate(prev: (f64, f64), cur: (f64, f64)) -> Option<f64> {
    let (h0, e0) = prev;
    let (h1, e1) = cur;
    (e0 > 0.0 && e1 > 0.0 && h0 != h1).then(|| (e0 / e1).ln() / (h0 / h1).ln())
}

/// Discretization errors and observed orders over refinement levels.
pub fn convergence(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let levels = default_levels(cfg, &[1, 2, 3, 4]);
    if levels.len() < 2 {
        return Err(CliError::Config("the convergence study needs at least two levels".into()));
    }
    let mut table = Table::new(&["level", "h", "dofs", "iterations", "dg_error", "l2_error", "dg_rate", "l2_rate"]);
    let mut rows = Vec::new();
    let mut failure = None;
    let mut prev: Option<LevelRun> = None;
    for &level in &levels {
        let run = match cfg.multipatch_at(level).and_then(|mp| run_level(cfg, mp)) {
            Ok(r) => r,
            Err(e) => {
                failure = Some(format!("level {level}: {e}"));
                break;
            }
        };
        let (dg_rate, l2_rate) = match &prev {
            Some(p) => {
                (rate((p.h, p.errors.dg), (run.h, run.errors.dg)), rate((p.h, p.errors.l2), (run.h, run.errors.l2)))
            }
            None => (None, None),
        };
        table.push(vec![
            level.to_string(),
            fmt_float(run.h),
            run.dofs.to_string(),
            run.solution.pcg.iterations.to_string(),
            fmt_float(run.errors.dg),
            fmt_float(run.errors.l2),
            fmt_opt(dg_rate),
            fmt_opt(l2_rate),
        ]);
        let mut j = level_json(&run);
        j["level"] = json!(level);
        j["dg_rate"] = json!(dg_rate);
        j["l2_rate"] = json!(l2_rate);
        rows.push(j);
        let converged = run.converged();
        if !converged {
            failure = Some(format!("level {level}: {}", nonconvergence(&run)));
        }
        prev = Some(run);
        if !converged {
            break;
        }
    }
    Ok(RunOutput { table, report: json!({ "levels": rows }), failure })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regression_recovers_a_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        let f = Regression::fit(&x, &y).unwrap();
        assert!((f.slope - 2.5).abs() < 1e-14);
        assert!((f.intercept + 1.0).abs() < 1e-14);
        assert!((f.r_squared - 1.0).abs() < 1e-14);
        assert!(Regression::fit(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn rates_of_power_laws() {
        let r = rate((0.5, 0.5f64.powi(3)), (0.25, 0.25f64.powi(3))).unwrap();
        assert!((r - 3.0).abs() < 1e-12);
        assert!(rate((0.5, 0.0), (0.25, 0.0)).is_none());
    }
}
