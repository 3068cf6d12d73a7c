//! Dual-primal tearing and interconnecting solver for the extended patch systems.
//!
//! Every extended patch keeps its own copy of each neighbor face layer. Copies and
//! their owners are glued by Lagrange multipliers, except at the face endpoints:
//! the point evaluations at the corners of the extended patches are primal and
//! shared between the owner and all of its copies. The interface problem for the
//! multipliers is solved with PCG and a scaled Dirichlet preconditioner, and the
//! PCG coefficients are reused for a Lanczos estimate of the condition number.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::assembly::DgProblem;
use crate::error::{Error, Result};
use crate::linalg::{dense_sym_eig, dot, norm_inf, CsrMatrix, SpdFactorization, DENSE_LIMIT};
use crate::schur::PatchSchur;

/// Default relative reduction of the preconditioned residual.
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITERATIONS: usize = 1000;

/// A symmetric linear map on `R^n`.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (self * nalgebra::DVector::from_column_slice(x)).iter().copied().collect()
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.mul_vec(x)
    }
}

/// Identity operator, the trivial preconditioner.
#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}

/// Outcome of a preconditioned conjugate gradient run.
#[derive(Debug, Clone, PartialEq)]
pub struct PcgResult {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `sqrt(r^T M r)` relative to its initial value, per iteration (starting with 1).
    pub residual_history: Vec<f64>,
    /// Extreme eigenvalues of the Lanczos matrix; `None` without iterations.
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
}

impl PcgResult {
    /// `lambda_max / lambda_min`, or 1 when no iteration was needed.
    pub fn kappa(&self) -> f64 {
        match (self.lambda_min, self.lambda_max) {
            (Some(lo), Some(hi)) => hi / lo,
            _ => 1.0,
        }
    }
}

/// PCG for `F x = d` from `x = 0`; stops once `sqrt(r^T M r) <= tol * sqrt(r_0^T M r_0)`.
pub fn pcg_solve(
    f: &dyn LinearOperator,
    m: &dyn LinearOperator,
    d: &[f64],
    tol: f64,
    max_iterations: usize,
) -> Result<PcgResult> {
    let n = f.dim();
    if d.len() != n || m.dim() != n {
        return Err(Error::Dimension { expected: n, got: if d.len() != n { d.len() } else { m.dim() } });
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Parameter(format!("tolerance must lie in (0, 1), got {tol}")));
    }
    let mut x = vec![0.0; n];
    let mut r = d.to_vec();
    let mut z = m.apply(&r);
    let mut rz = dot(&r, &z);
    let mut history = vec![1.0];
    if !(rz > 0.0) {
        return Ok(PcgResult {
            solution: x,
            iterations: 0,
            converged: true,
            residual_history: history,
            lambda_min: None,
            lambda_max: None,
        });
    }
    let rz0 = rz;
    let mut p = z.clone();
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    let mut converged = false;
    while alphas.len() < max_iterations {
        let q = f.apply(&p);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            break;
        }
        let alpha = rz / pq;
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut().zip(&q).for_each(|(ri, qi)| *ri -= alpha * qi);
        alphas.push(alpha);
        z = m.apply(&r);
        let rz_new = dot(&r, &z);
        let rel = (rz_new.max(0.0) / rz0).sqrt();
        history.push(rel);
        if rel <= tol {
            converged = true;
            break;
        }
        let beta = rz_new / rz;
        betas.push(beta);
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    let (lambda_min, lambda_max) = lanczos_extremes(&alphas, &betas);
    Ok(PcgResult {
        solution: x,
        iterations: alphas.len(),
        converged,
        residual_history: history,
        lambda_min,
        lambda_max,
    })
}

/// Extreme eigenvalues of the Lanczos tridiagonal built from PCG step lengths and direction updates.
pub fn lanczos_extremes(alphas: &[f64], betas: &[f64]) -> (Option<f64>, Option<f64>) {
    let m = alphas.len();
    if m == 0 {
        return (None, None);
    }
    let mut t = DMatrix::zeros(m, m);
    for j in 0..m {
        t[(j, j)] = 1.0 / alphas[j] + if j > 0 { betas[j - 1] / alphas[j - 1] } else { 0.0 };
        if j + 1 < m {
            let off = betas[j].sqrt() / alphas[j];
            t[(j, j + 1)] = off;
            t[(j + 1, j)] = off;
        }
    }
    let ev = SymmetricEigen::new(t).eigenvalues;
    (Some(ev.min()), Some(ev.max()))
}

/// One Lagrange multiplier: `u[copy] - u[owner] = 0`, each side given as `(patch, local dof)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Multiplier {
    pub copy: (usize, usize),
    pub owner: (usize, usize),
}

/// A vector on the partially assembled space: dual values per patch plus global primal values.
#[derive(Debug, Clone, PartialEq)]
pub struct TildeVector {
    pub dual: Vec<Vec<f64>>,
    pub primal: Vec<f64>,
}

impl TildeVector {
    pub fn dot(&self, other: &TildeVector) -> f64 {
        self.dual.iter().zip(&other.dual).map(|(a, b)| dot(a, b)).sum::<f64>() + dot(&self.primal, &other.primal)
    }

    pub fn scaled(&self, s: f64) -> TildeVector {
        TildeVector {
            dual: self.dual.iter().map(|v| v.iter().map(|x| x * s).collect()).collect(),
            primal: self.primal.iter().map(|x| x * s).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

#[derive(Debug)]
struct PatchData {
    num_own: usize,
    /// Eliminated-first ordering: interior dofs, then dual dofs.
    interior: Vec<usize>,
    dual: Vec<usize>,
    primal: Vec<usize>,
    primal_global: Vec<usize>,
    /// Per dual dof: multiplier ids with signs.
    jumps: Vec<Vec<(usize, f64)>>,
    weights: Vec<f64>,
    rr: Option<SpdFactorization>,
    r_pi: CsrMatrix,
    /// `K_rr^{-1} K_r,pi`
    phi: DMatrix<f64>,
    load_r: Vec<f64>,
    load_pi: Vec<f64>,
    /// Schur complement onto dual followed by primal dofs.
    schur: PatchSchur,
}

impl PatchData {
    fn r_len(&self) -> usize {
        self.interior.len() + self.dual.len()
    }

    fn solve_rr(&self, b: &[f64]) -> Vec<f64> {
        match &self.rr {
            Some(f) => f.solve(b),
            None => Vec::new(),
        }
    }
}

/// Setup of the dual-primal solver.
#[derive(Debug)]
pub struct IetiDp {
    patches: Vec<PatchData>,
    multipliers: Vec<Multiplier>,
    primal_keys: Vec<(usize, usize)>,
    coarse_matrix: DMatrix<f64>,
    coarse: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    local_to_global: Vec<Vec<usize>>,
    num_dofs: usize,
}

/// Solution of the coupled problem recovered from the multipliers.
#[derive(Debug, Clone)]
pub struct IetiSolution {
    pub lambda: Vec<f64>,
    pub pcg: PcgResult,
    /// Extended local vectors per patch.
    pub extended: Vec<Vec<f64>>,
    /// Coupled vector assembled from the own parts.
    pub global: Vec<f64>,
    /// `||B u||_inf`
    pub jump_residual: f64,
}

/// Eigenvalues of the preconditioned interface operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
}

impl Spectrum {
    pub fn min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(f64::NAN)
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(f64::NAN)
    }

    pub fn kappa(&self) -> f64 {
        self.max() / self.min()
    }
}

impl IetiDp {
    pub fn build(problem: &DgProblem) -> Result<Self> {
        let systems = problem.systems();

        // primal dofs: one per (owner patch, owner basis) corner evaluation
        let mut keys: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for s in systems {
            for &li in s.dofs.boundary() {
                if s.dofs.is_vertex(li) {
                    keys.insert(s.dofs.owner(li), 0);
                }
            }
        }
        for (i, v) in keys.values_mut().enumerate() {
            *v = i;
        }
        let primal_keys: Vec<(usize, usize)> = keys.keys().copied().collect();

        // multipliers: one per non-vertex copy
        let mut multipliers = Vec::new();
        let mut jumps: Vec<BTreeMap<usize, Vec<(usize, f64)>>> = vec![BTreeMap::new(); systems.len()];
        let mut multiplicity: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (k, s) in systems.iter().enumerate() {
            for &li in s.dofs.boundary() {
                if s.dofs.is_vertex(li) {
                    continue;
                }
                *multiplicity.entry(s.dofs.owner(li)).or_insert(0) += 1;
                if !s.dofs.is_copy(li) {
                    continue;
                }
                let (l, basis) = s.dofs.owner(li);
                let owner_local = systems[l]
                    .dofs
                    .own_local(basis)
                    .ok_or_else(|| Error::Configuration(format!("copy on patch {k} refers to an eliminated dof")))?;
                if systems[l].dofs.is_vertex(owner_local) {
                    return Err(Error::Configuration(format!(
                        "copy on patch {k} pairs with a primal dof of patch {l}"
                    )));
                }
                let id = multipliers.len();
                multipliers.push(Multiplier { copy: (k, li), owner: (l, owner_local) });
                jumps[k].entry(li).or_default().push((id, 1.0));
                jumps[l].entry(owner_local).or_default().push((id, -1.0));
            }
        }

        let patches = systems
            .par_iter()
            .enumerate()
            .map(|(k, s)| {
                let boundary = s.dofs.boundary();
                let dual: Vec<usize> = boundary.iter().copied().filter(|&i| !s.dofs.is_vertex(i)).collect();
                let primal: Vec<usize> = boundary.iter().copied().filter(|&i| s.dofs.is_vertex(i)).collect();
                let interior = s.dofs.interior().to_vec();
                let r: Vec<usize> = interior.iter().chain(&dual).copied().collect();
                let k_rr = s.matrix.submatrix(&r, &r);
                let rr = if r.is_empty() {
                    None
                } else {
                    Some(SpdFactorization::factorize(&k_rr).map_err(|e| {
                        Error::Configuration(format!(
                            "patch {k}: local problem with primal dofs fixed is not definite ({e})"
                        ))
                    })?)
                };
                let r_pi = s.matrix.submatrix(&r, &primal);
                let mut phi = DMatrix::zeros(r.len(), primal.len());
                let dense_r_pi = r_pi.to_dense();
                for j in 0..primal.len() {
                    let col: Vec<f64> = dense_r_pi.column(j).iter().copied().collect();
                    if let Some(f) = &rr {
                        phi.column_mut(j).copy_from_slice(&f.solve(&col));
                    }
                }
                let split: Vec<usize> = dual.iter().chain(&primal).copied().collect();
                let schur = PatchSchur::with_split(s, &interior, &split)?;
                Ok(PatchData {
                    num_own: s.dofs.num_own(),
                    primal_global: primal.iter().map(|&i| keys[&s.dofs.owner(i)]).collect(),
                    jumps: dual.iter().map(|i| jumps[k].get(i).cloned().unwrap_or_default()).collect(),
                    weights: dual.iter().map(|&i| 1.0 / multiplicity[&s.dofs.owner(i)] as f64).collect(),
                    load_r: r.iter().map(|&i| s.load[i]).collect(),
                    load_pi: primal.iter().map(|&i| s.load[i]).collect(),
                    interior,
                    dual,
                    primal,
                    rr,
                    r_pi,
                    phi,
                    schur,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let np = primal_keys.len();
        let mut coarse_matrix = DMatrix::zeros(np, np);
        for (pd, s) in patches.iter().zip(systems) {
            let pipi = s.matrix.submatrix(&pd.primal, &pd.primal).to_dense();
            let local = pipi - pd.r_pi.to_dense().transpose() * &pd.phi;
            for (a, &ga) in pd.primal_global.iter().enumerate() {
                for (b, &gb) in pd.primal_global.iter().enumerate() {
                    coarse_matrix[(ga, gb)] += local[(a, b)];
                }
            }
        }
        let coarse = if np == 0 {
            None
        } else {
            let sym = (&coarse_matrix + coarse_matrix.transpose()) * 0.5;
            Some(sym.cholesky().ok_or_else(|| Error::Configuration("coarse primal problem is singular".into()))?)
        };
        Ok(Self {
            patches,
            multipliers,
            primal_keys,
            coarse_matrix,
            coarse,
            local_to_global: (0..systems.len()).map(|k| problem.local_to_global(k)).collect(),
            num_dofs: problem.num_dofs(),
        })
    }

    pub fn num_multipliers(&self) -> usize {
        self.multipliers.len()
    }

    pub fn num_primal(&self) -> usize {
        self.primal_keys.len()
    }

    pub fn multipliers(&self) -> &[Multiplier] {
        &self.multipliers
    }

    /// `(owner patch, owner basis index)` of each global primal dof.
    pub fn primal_keys(&self) -> &[(usize, usize)] {
        &self.primal_keys
    }

    pub fn coarse_matrix(&self) -> &DMatrix<f64> {
        &self.coarse_matrix
    }

    pub fn num_patches(&self) -> usize {
        self.patches.len()
    }

    /// Local dual dofs of patch `k`.
    pub fn dual_dofs(&self, k: usize) -> &[usize] {
        &self.patches[k].dual
    }

    /// Local primal dofs of patch `k` and their global primal ids.
    pub fn primal_dofs(&self, k: usize) -> (&[usize], &[usize]) {
        (&self.patches[k].primal, &self.patches[k].primal_global)
    }

    /// Multiplicity weights of the dual dofs of patch `k`.
    pub fn weights(&self, k: usize) -> &[f64] {
        &self.patches[k].weights
    }

    pub fn zero_tilde(&self) -> TildeVector {
        TildeVector {
            dual: self.patches.iter().map(|p| vec![0.0; p.dual.len()]).collect(),
            primal: vec![0.0; self.num_primal()],
        }
    }

    /// Solves the partially assembled system for right-hand sides on the eliminated dofs and the primal dofs.
    fn ktilde_solve(&self, f_r: &[Vec<f64>], f_pi: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let y: Vec<Vec<f64>> = self.patches.par_iter().zip(f_r).map(|(p, f)| p.solve_rr(f)).collect();
        let mut g = f_pi.to_vec();
        for (p, yk) in self.patches.iter().zip(&y) {
            let mut c = vec![0.0; p.primal.len()];
            p.r_pi.mul_transpose_add(yk, &mut c);
            for (&gi, ci) in p.primal_global.iter().zip(c) {
                g[gi] -= ci;
            }
        }
        let u_pi: Vec<f64> = match &self.coarse {
            Some(c) => c.solve(&nalgebra::DVector::from_vec(g)).iter().copied().collect(),
            None => Vec::new(),
        };
        let u_r = self
            .patches
            .par_iter()
            .zip(y)
            .map(|(p, mut yk)| {
                for (a, &gi) in p.primal_global.iter().enumerate() {
                    let v = u_pi[gi];
                    for (yi, phi) in yk.iter_mut().zip(p.phi.column(a).iter()) {
                        *yi -= phi * v;
                    }
                }
                yk
            })
            .collect();
        (u_r, u_pi)
    }

    /// `B^T lambda` placed on the dual part of each patch's eliminated block.
    fn scatter_multipliers(&self, lambda: &[f64]) -> Vec<Vec<f64>> {
        self.patches
            .iter()
            .map(|p| {
                let mut f = vec![0.0; p.r_len()];
                let off = p.interior.len();
                for (d, jumps) in p.jumps.iter().enumerate() {
                    f[off + d] = jumps.iter().map(|&(j, s)| s * lambda[j]).sum();
                }
                f
            })
            .collect()
    }

    /// `B u` for eliminated-block vectors.
    fn gather_jumps(&self, u_r: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.multipliers.len()];
        for (p, u) in self.patches.iter().zip(u_r) {
            let off = p.interior.len();
            for (d, jumps) in p.jumps.iter().enumerate() {
                for &(j, s) in jumps {
                    out[j] += s * u[off + d];
                }
            }
        }
        out
    }

    /// Solves with the Schur complement on the partially assembled space.
    pub fn stilde_solve(&self, b: &TildeVector) -> Result<TildeVector> {
        self.check_tilde(b)?;
        let f_r: Vec<Vec<f64>> = self
            .patches
            .iter()
            .zip(&b.dual)
            .map(|(p, bd)| {
                let mut f = vec![0.0; p.interior.len()];
                f.extend_from_slice(bd);
                f
            })
            .collect();
        let (u_r, u_pi) = self.ktilde_solve(&f_r, &b.primal);
        Ok(TildeVector {
            dual: self.patches.iter().zip(u_r).map(|(p, u)| u[p.interior.len()..].to_vec()).collect(),
            primal: u_pi,
        })
    }

    /// Applies the Schur complement on the partially assembled space.
    pub fn stilde_apply(&self, w: &TildeVector) -> Result<TildeVector> {
        self.check_tilde(w)?;
        let parts = self
            .patches
            .par_iter()
            .zip(&w.dual)
            .map(|(p, wd)| {
                let mut ub = wd.clone();
                ub.extend(p.primal_global.iter().map(|&g| w.primal[g]));
                p.schur.schur_apply(&ub)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = self.zero_tilde();
        for (k, (p, s)) in self.patches.iter().zip(parts).enumerate() {
            let nd = p.dual.len();
            out.dual[k].copy_from_slice(&s[..nd]);
            for (&g, v) in p.primal_global.iter().zip(&s[nd..]) {
                out.primal[g] += v;
            }
        }
        Ok(out)
    }

    fn check_tilde(&self, b: &TildeVector) -> Result<()> {
        if b.dual.len() != self.patches.len() {
            return Err(Error::Dimension { expected: self.patches.len(), got: b.dual.len() });
        }
        for (p, d) in self.patches.iter().zip(&b.dual) {
            if d.len() != p.dual.len() {
                return Err(Error::Dimension { expected: p.dual.len(), got: d.len() });
            }
        }
        if b.primal.len() != self.num_primal() {
            return Err(Error::Dimension { expected: self.num_primal(), got: b.primal.len() });
        }
        Ok(())
    }

    /// `B` restricted to the dual dofs.
    pub fn apply_jump(&self, w: &TildeVector) -> Vec<f64> {
        let mut out = vec![0.0; self.multipliers.len()];
        for (p, wd) in self.patches.iter().zip(&w.dual) {
            for (jumps, v) in p.jumps.iter().zip(wd) {
                for &(j, s) in jumps {
                    out[j] += s * v;
                }
            }
        }
        out
    }

    /// `B^T lambda` as a vector on the partially assembled space.
    pub fn apply_jump_transpose(&self, lambda: &[f64]) -> TildeVector {
        let mut out = self.zero_tilde();
        for (k, p) in self.patches.iter().enumerate() {
            for (d, jumps) in p.jumps.iter().enumerate() {
                out.dual[k][d] = jumps.iter().map(|&(j, s)| s * lambda[j]).sum();
            }
        }
        out
    }

    /// `F lambda = B S~^{-1} B^T lambda`
    pub fn apply_f(&self, lambda: &[f64]) -> Vec<f64> {
        let f_r = self.scatter_multipliers(lambda);
        let (u_r, _) = self.ktilde_solve(&f_r, &vec![0.0; self.num_primal()]);
        self.gather_jumps(&u_r)
    }

    /// Scaled Dirichlet preconditioner `B_D S_e B_D^T r`.
    pub fn apply_preconditioner(&self, r: &[f64]) -> Vec<f64> {
        let parts: Vec<Vec<f64>> = self
            .patches
            .par_iter()
            .map(|p| {
                let mut ub = vec![0.0; p.dual.len() + p.primal.len()];
                for (d, jumps) in p.jumps.iter().enumerate() {
                    ub[d] = p.weights[d] * jumps.iter().map(|&(j, s)| s * r[j]).sum::<f64>();
                }
                p.schur.schur_apply(&ub).expect("boundary size matches the split")
            })
            .collect();
        let mut out = vec![0.0; self.multipliers.len()];
        for (p, s) in self.patches.iter().zip(parts) {
            for (d, jumps) in p.jumps.iter().enumerate() {
                for &(j, sign) in jumps {
                    out[j] += p.weights[d] * sign * s[d];
                }
            }
        }
        out
    }

    /// Right-hand side of the multiplier equation.
    pub fn rhs(&self) -> Vec<f64> {
        let f_r: Vec<Vec<f64>> = self.patches.iter().map(|p| p.load_r.clone()).collect();
        let (u_r, _) = self.ktilde_solve(&f_r, &self.primal_load());
        self.gather_jumps(&u_r)
    }

    fn primal_load(&self) -> Vec<f64> {
        let mut f = vec![0.0; self.num_primal()];
        for p in &self.patches {
            for (&g, v) in p.primal_global.iter().zip(&p.load_pi) {
                f[g] += v;
            }
        }
        f
    }

    /// Local solutions for given multipliers: `u = K~^{-1}(f - B^T lambda)`.
    pub fn recover(&self, lambda: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>, f64) {
        let bt = self.scatter_multipliers(lambda);
        let f_r: Vec<Vec<f64>> =
            self.patches.iter().zip(bt).map(|(p, b)| p.load_r.iter().zip(b).map(|(f, b)| f - b).collect()).collect();
        let (u_r, u_pi) = self.ktilde_solve(&f_r, &self.primal_load());
        let jump = norm_inf(&self.gather_jumps(&u_r));
        let mut global = vec![0.0; self.num_dofs];
        let extended: Vec<Vec<f64>> = self
            .patches
            .iter()
            .zip(&u_r)
            .zip(&self.local_to_global)
            .map(|((p, ur), l2g)| {
                let mut u = vec![0.0; l2g.len()];
                for (&i, v) in p.interior.iter().chain(&p.dual).zip(ur) {
                    u[i] = *v;
                }
                for (&i, &g) in p.primal.iter().zip(&p.primal_global) {
                    u[i] = u_pi[g];
                }
                u
            })
            .collect();
        for ((p, u), l2g) in self.patches.iter().zip(&extended).zip(&self.local_to_global) {
            for li in 0..p.num_own {
                global[l2g[li]] = u[li];
            }
        }
        (extended, global, jump)
    }

    /// Solves the multiplier equation with PCG and recovers the coupled solution.
    pub fn solve(&self, tol: f64, max_iterations: usize) -> Result<IetiSolution> {
        let d = self.rhs();
        let f = FOperator(self);
        let m = PreconditionerOperator(self);
        let pcg = pcg_solve(&f, &m, &d, tol, max_iterations)?;
        let (extended, global, jump_residual) = self.recover(&pcg.solution);
        Ok(IetiSolution { lambda: pcg.solution.clone(), pcg, extended, global, jump_residual })
    }

    /// Lanczos extreme eigenvalues from PCG on a seeded random right-hand side.
    ///
    /// A symmetric load on a symmetric configuration only excites part of the
    /// spectrum, so condition estimates use a generic right-hand side instead.
    pub fn estimate_condition(&self, tol: f64, max_iterations: usize, seed: u64) -> Result<PcgResult> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d: Vec<f64> = (0..self.num_multipliers()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        pcg_solve(&FOperator(self), &PreconditionerOperator(self), &d, tol, max_iterations)
    }

    /// All eigenvalues of the preconditioned multiplier operator, from dense matrices.
    pub fn dense_spectrum_oracle(&self) -> Result<Spectrum> {
        let n = self.num_multipliers();
        if n > DENSE_LIMIT {
            return Err(Error::SizeGuard { size: n, limit: DENSE_LIMIT });
        }
        if n == 0 {
            return Ok(Spectrum { eigenvalues: Vec::new() });
        }
        let (f, m) = self.dense_operators()?;
        let l = f.cholesky().ok_or(Error::NotSpd { row: 0, pivot: f64::NAN })?.l();
        let c = l.transpose() * m * &l;
        let c = (&c + c.transpose()) * 0.5;
        Ok(Spectrum { eigenvalues: dense_sym_eig(&c)? })
    }

    /// Dense `F` and preconditioner, symmetrized.
    pub fn dense_operators(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let n = self.num_multipliers();
        if n > DENSE_LIMIT {
            return Err(Error::SizeGuard { size: n, limit: DENSE_LIMIT });
        }
        let cols: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                (self.apply_f(&e), self.apply_preconditioner(&e))
            })
            .collect();
        let mut f = DMatrix::zeros(n, n);
        let mut m = DMatrix::zeros(n, n);
        for (j, (fc, mc)) in cols.into_iter().enumerate() {
            f.column_mut(j).copy_from_slice(&fc);
            m.column_mut(j).copy_from_slice(&mc);
        }
        Ok(((&f + f.transpose()) * 0.5, (&m + m.transpose()) * 0.5))
    }
}

/// `F` as a [`LinearOperator`].
pub struct FOperator<'a>(pub &'a IetiDp);

impl LinearOperator for FOperator<'_> {
    fn dim(&self) -> usize {
        self.0.num_multipliers()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.0.apply_f(x)
    }
}

/// The scaled Dirichlet preconditioner as a [`LinearOperator`].
pub struct PreconditionerOperator<'a>(pub &'a IetiDp);

impl LinearOperator for PreconditionerOperator<'_> {
    fn dim(&self) -> usize {
        self.0.num_multipliers()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.0.apply_preconditioner(x)
    }
}
