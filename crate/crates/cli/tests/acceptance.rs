//! End-to-end acceptance checks. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; the process fails if any criterion does.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dgieti::assembly::{DgProblem, SourceFn, ZeroData};
use dgieti::bspline::{KnotVector, TensorSplineSpace};
use dgieti::generators::{rectangle_grid, unit_square_grid, BoundaryKind, BoundaryTags};
use dgieti::geometry::{Interface, MultiPatch, Orientation, Patch, Side, SideRef};
use dgieti::ieti::{IetiDp, DEFAULT_MAX_ITERATIONS};
use dgieti::linalg::norm_inf;
use dgieti::norms::FaceGram;
use dgieti::schur::PatchSchur;
use dgieti_cli::commands::{convergence, kappa_study, ratio_study};
use dgieti_cli::RunConfig;
use serde_json::Value;

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn sinsin(x: [f64; 2]) -> f64 {
    use std::f64::consts::PI;
    2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin()
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn ensure(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn condition_growth() -> Outcome {
    let mut notes = Vec::new();
    for degree in [2, 3] {
        let cfg = RunConfig::from_json(&format!(
            r#"{{"geometry": {{"type": "grid", "nx": 4, "ny": 4}}, "degree": {degree}, "levels": [2, 3, 4, 5], "tol": 1e-10}}"#
        ))
        .map_err(err)?;
        let out = kappa_study(&cfg).map_err(err)?;
        if let Some(failure) = out.failure {
            return Err(failure);
        }
        let ratios: Vec<f64> = out.report["levels"].as_array().unwrap().iter().map(|l| f(&l["h_ratio"])).collect();
        ensure(ratios == [4.0, 8.0, 16.0, 32.0], format!("p={degree}: H/h = {ratios:?}"))?;
        let r2 = f(&out.report["regression"]["r_squared"]);
        ensure(r2 >= 0.95, format!("p={degree}: R^2 = {r2:.4}"))?;
        for g in out.report["growth"].as_array().unwrap() {
            let (measured, model) = (f(&g["measured"]), f(&g["model"]));
            ensure(measured <= 1.2 * model, format!("p={degree}: growth {measured:.4} vs model {model:.4}"))?;
        }
        let kappas: Vec<String> =
            out.report["levels"].as_array().unwrap().iter().map(|l| format!("{:.3}", f(&l["kappa"]))).collect();
        notes.push(format!("p={degree} R^2={r2:.4} kappa=[{}]", kappas.join(", ")));
    }
    Ok(notes.join("; "))
}

fn lanczos_matches_dense() -> Outcome {
    let mp = unit_square_grid(2, 2, 2, 1.0).map_err(err)?.refined(4);
    let problem = DgProblem::assemble(mp, None, &SourceFn(sinsin)).map_err(err)?;
    let ieti = IetiDp::build(&problem).map_err(err)?;
    let n = ieti.num_multipliers();
    ensure(n <= 500, format!("{n} multipliers"))?;
    let exact = ieti.dense_spectrum_oracle().map_err(err)?;
    let est = ieti.estimate_condition(1e-10, DEFAULT_MAX_ITERATIONS, 7).map_err(err)?;
    let rel = (est.kappa() - exact.kappa()).abs() / exact.kappa();
    ensure(exact.min() >= 1.0 - 1e-6, format!("lambda_min = {}", exact.min()))?;
    ensure(rel <= 0.1, format!("estimate {:.4} vs exact {:.4}", est.kappa(), exact.kappa()))?;
    Ok(format!(
        "{n} multipliers, estimate {:.5}, exact {:.5}, lambda_min {:.8}",
        est.kappa(),
        exact.kappa(),
        exact.min()
    ))
}

fn equivalence_interval(levels: usize, rng: &mut ChaCha8Rng) -> Result<(f64, f64), String> {
    let mp = unit_square_grid(2, 2, 2, 1.0).map_err(err)?.refined_per_patch(&[
        [levels, levels],
        [levels + 1, levels + 1],
        [levels + 1, levels + 1],
        [levels, levels],
    ]);
    let problem = DgProblem::assemble(mp, None, &ZeroData).map_err(err)?;
    let k = problem.global_matrix();
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for _ in 0..20 {
        let u = random_vec(rng, problem.num_dofs());
        let r = k.quadratic_form(&u) / problem.dg_norm_squared(&u);
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Ok((lo, hi))
}

fn norm_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (a0, a1) = equivalence_interval(2, &mut rng)?;
    let (b0, b1) = equivalence_interval(3, &mut rng)?;
    ensure(a0 > 0.0 && b0 > 0.0, format!("lower bounds {a0}, {b0}"))?;
    let change = ((b0 - a0).abs() / a0).max((b1 - a1).abs() / a1);
    ensure(change < 0.25, format!("[{a0:.4}, {a1:.4}] -> [{b0:.4}, {b1:.4}]"))?;
    Ok(format!("[{a0:.4}, {a1:.4}] -> [{b0:.4}, {b1:.4}], change {:.1}%", 100.0 * change))
}

fn discrete_harmonic_comparison() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut maxima = Vec::new();
    for levels in [2, 3, 4] {
        let mp = unit_square_grid(3, 3, 2, 1.0).map_err(err)?.refined(levels);
        let problem = DgProblem::assemble(mp, None, &ZeroData).map_err(err)?;
        let sys = problem.system(4);
        let schur = PatchSchur::new(sys).map_err(err)?;
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let ub = random_vec(&mut rng, schur.boundary().len());
            let wa = schur.combine(&schur.harmonic_extension_a(&ub).map_err(err)?, &ub);
            let we = schur.combine(&schur.harmonic_extension_e(&ub).map_err(err)?, &ub);
            let (da, de) = (sys.dg_energy(&wa), sys.dg_energy(&we));
            ensure(da <= de * (1.0 + 1e-12), format!("level {levels}: {da} > {de}"))?;
            worst = worst.max(de / da);
        }
        maxima.push(worst);
    }
    let lo = maxima.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = maxima.iter().cloned().fold(0.0, f64::max);
    ensure(hi / lo - 1.0 < 0.25, format!("maxima {maxima:?}"))?;
    Ok(format!("max ratio per level {:?}", maxima.iter().map(|m| format!("{m:.5}")).collect::<Vec<_>>()))
}

/// Own patch `[0,1]^2` with `n` elements along the interface; the neighbor `[1,2]x[0,1]`
/// has `n / ratio` elements there, or a staggered mesh of the same size for ratio 1.
fn projection_pair(n: usize, ratio: usize) -> Result<MultiPatch, String> {
    let degree = 2;
    let own = Patch::rectangle([0.0, 0.0], [1.0, 1.0], degree, 1.0)
        .map_err(err)?
        .with_space(TensorSplineSpace::uniform(degree, [n, n]).map_err(err)?);
    let m = n / ratio;
    let breaks: Vec<f64> = if ratio == 1 {
        std::iter::once(0.0).chain((0..m).map(|i| (i as f64 + 0.5) / m as f64)).chain(std::iter::once(1.0)).collect()
    } else {
        (0..=m).map(|i| i as f64 / m as f64).collect()
    };
    let space = TensorSplineSpace::new(
        KnotVector::uniform(degree, m).map_err(err)?,
        KnotVector::from_breakpoints(degree, &breaks).map_err(err)?,
    );
    let other = Patch::rectangle([1.0, 0.0], [2.0, 1.0], degree, 1.0).map_err(err)?.with_space(space);
    MultiPatch::new(
        vec![own, other],
        vec![Interface::new(SideRef::new(0, Side::East), SideRef::new(1, Side::West), Orientation::Same)],
        vec![SideRef::new(0, Side::West), SideRef::new(1, Side::East)],
        [0, 1].iter().flat_map(|&k| [SideRef::new(k, Side::South), SideRef::new(k, Side::North)]).collect(),
    )
    .map_err(err)
}

fn projection_scaling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut notes = Vec::new();
    for ratio in [1, 2, 4] {
        let mut constants = Vec::new();
        for n in [8, 16, 32] {
            let mp = projection_pair(n, ratio)?;
            let nb = mp.neighbors(0)[0];
            let gram = FaceGram::new(&mp, &nb).map_err(err)?;
            let own = mp.patch(0);
            let stiffness = dgieti::assembly::volume_stiffness(own).map_err(err)?;
            let metrics = mp.metrics().map_err(err)?;
            let (hk, hl) = (metrics[0].h, metrics[1].h);
            let face = own.face_indices(Side::East);
            let mut c: f64 = 0.0;
            for _ in 0..10 {
                let mut v = vec![0.0; own.num_dofs()];
                for &i in &face {
                    v[i] = rng.gen_range(-1.0..1.0);
                }
                let trace: Vec<f64> = face.iter().map(|&i| v[i]).collect();
                let dist = gram.distance_squared(&trace, &gram.project(&trace).map_err(err)?);
                let semi = stiffness.quadratic_form(&v) / own.alpha();
                c = c.max(dist / (hl * (hl / hk) * semi));
            }
            constants.push(c);
        }
        let lo = constants.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = constants.iter().cloned().fold(0.0, f64::max);
        ensure(lo > 0.0 && hi / lo <= 3.0, format!("ratio {ratio}: constants {constants:?}"))?;
        notes.push(format!("ratio {ratio}: max/min {:.3}", hi / lo));
    }
    Ok(notes.join(", "))
}

fn schur_is_constrained_minimum() -> Outcome {
    let mp = unit_square_grid(3, 3, 2, 1.0).map_err(err)?.refined(2);
    let problem = DgProblem::assemble(mp, None, &ZeroData).map_err(err)?;
    let sys = problem.system(4);
    let n = sys.dofs.len();
    ensure(n <= 200, format!("{n} extended dofs"))?;
    let schur = PatchSchur::new(sys).map_err(err)?;
    let boundary = schur.boundary();
    let nb = boundary.len();
    let k = sys.matrix.to_dense();
    let mut kkt = DMatrix::zeros(n + nb, n + nb);
    kkt.view_mut((0, 0), (n, n)).copy_from(&k);
    for (j, &b) in boundary.iter().enumerate() {
        kkt[(n + j, b)] = 1.0;
        kkt[(b, n + j)] = 1.0;
    }
    let lu = kkt.lu();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let ub = random_vec(&mut rng, nb);
        let mut rhs = DVector::zeros(n + nb);
        rhs.rows_mut(n, nb).copy_from_slice(&ub);
        let sol = lu.solve(&rhs).ok_or("singular constraint system")?;
        let w = sol.rows(0, n).clone_owned();
        let minimum = (w.transpose() * &k * &w)[0];
        let s = schur.schur_apply(&ub).map_err(err)?;
        let value: f64 = s.iter().zip(&ub).map(|(a, b)| a * b).sum();
        worst = worst.max((value - minimum).abs() / minimum);
    }
    ensure(worst <= 1e-10, format!("relative difference {worst:e}"))?;
    Ok(format!("{n} dofs, max relative difference {worst:.2e}"))
}

fn convergence_rates() -> Outcome {
    let mut notes = Vec::new();
    for degree in [1usize, 2] {
        let cfg = RunConfig::from_json(&format!(
            r#"{{"geometry": {{"type": "grid", "nx": 2, "ny": 1}}, "degree": {degree},
                "patch_refinement": [[0, 0], [1, 1]], "levels": [1, 2, 3, 4], "tol": 1e-10}}"#
        ))
        .map_err(err)?;
        let out = convergence(&cfg).map_err(err)?;
        if let Some(failure) = out.failure {
            return Err(failure);
        }
        let last = out.report["levels"].as_array().unwrap().last().cloned().unwrap();
        let (dg, l2) = (f(&last["dg_rate"]), f(&last["l2_rate"]));
        let p = degree as f64;
        ensure((dg - p).abs() <= 0.2, format!("p={degree}: dG rate {dg:.3}"))?;
        ensure((l2 - p - 1.0).abs() <= 0.2, format!("p={degree}: L2 rate {l2:.3}"))?;
        notes.push(format!("p={degree}: dG {dg:.3}, L2 {l2:.3}"));
    }
    Ok(notes.join("; "))
}

fn ratio_envelope() -> Outcome {
    let cfg = RunConfig::from_json(
        r#"{"geometry": {"type": "grid", "nx": 2, "ny": 1, "boundary": {"south": "neumann", "north": "neumann"}},
            "degree": 2, "refinement": 3, "ratios": [1, 2, 4], "tol": 1e-10}"#,
    )
    .map_err(err)?;
    let out = ratio_study(&cfg).map_err(err)?;
    if let Some(failure) = out.failure {
        return Err(failure);
    }
    let mut kappas = Vec::new();
    for row in out.report["ratios"].as_array().unwrap() {
        let (kappa, envelope) = (f(&row["kappa"]), f(&row["envelope"]));
        ensure(kappa <= envelope * (1.0 + 1e-12), format!("ratio {}: kappa {kappa} > {envelope}", row["ratio"]))?;
        kappas.push(format!("{kappa:.4}"));
    }
    Ok(format!("kappa over ratios [{}], spread {:.4} (nearly flat)", kappas.join(", "), f(&out.report["kappa_spread"])))
}

fn exactness_and_feasibility() -> Outcome {
    let tol = 1e-10;
    let cfg = RunConfig::from_json(&format!(
        r#"{{"geometry": {{"type": "grid", "nx": 2, "ny": 2,
              "boundary": {{"west": "dirichlet", "east": "neumann", "south": "neumann", "north": "neumann"}}}},
            "degree": 2, "refinement": 2, "patch_refinement": [[0, 0], [1, 1], [1, 0], [0, 1]],
            "manufactured": "linear-x", "tol": {tol:e}}}"#
    ))
    .map_err(err)?;
    let run = dgieti_cli::commands::run_level(&cfg, cfg.multipatch().map_err(err)?).map_err(err)?;
    ensure(run.converged(), "PCG did not converge".into())?;
    ensure(run.errors.l2 <= 1e-8 && run.errors.dg <= 1e-8, format!("errors {:?}", run.errors))?;
    let umax = norm_inf(&run.solution.global);
    ensure(
        run.solution.jump_residual <= 10.0 * tol * umax,
        format!("jump residual {:e} for max value {umax}", run.solution.jump_residual),
    )?;

    let tags = BoundaryTags {
        west: BoundaryKind::Neumann,
        east: BoundaryKind::Neumann,
        south: BoundaryKind::Neumann,
        north: BoundaryKind::Neumann,
    };
    let mp = rectangle_grid(2, 2, [0.0, 0.0], [1.0, 1.0], 2, 1.0, tags).map_err(err)?.refined(2);
    let floating = DgProblem::assemble(mp, None, &ZeroData).map_err(err)?;
    let ones = vec![1.0; floating.num_dofs()];
    let scale = floating.global_matrix().max_abs() * floating.num_dofs() as f64;
    let constant = floating.dg_norm_squared(&ones);
    ensure(constant.abs() <= 1e-12 * scale, format!("dG norm of a constant {constant:e}"))?;
    Ok(format!(
        "linear errors L2 {:.1e} dG {:.1e}, jump {:.1e}, constant {:.1e}",
        run.errors.l2, run.errors.dg, run.solution.jump_residual, constant
    ))
}

fn main() {
    let criteria: [Check; 9] = [
        ("condition number grows like (1 + log(H/h))^2", condition_growth),
        ("Lanczos estimate matches the dense spectrum", lanczos_matches_dense),
        ("bilinear form and dG norm are uniformly equivalent", norm_equivalence),
        ("volume-harmonic extension has smaller dG energy", discrete_harmonic_comparison),
        ("face L2 projection error scales with the mesh ratio", projection_scaling),
        ("Schur complement equals the constrained minimum", schur_is_constrained_minimum),
        ("optimal convergence on non-matching meshes", convergence_rates),
        ("condition number stays below the mesh-ratio envelope", ratio_envelope),
        ("linear reproduction, feasibility and constant kernel", exactness_and_feasibility),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name} ({secs:.1}s) {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {}: {name} ({secs:.1}s) {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
