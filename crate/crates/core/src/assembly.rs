//! Per-patch extended stiffness matrices of the symmetric interior penalty formulation,
//! load vectors, and the global coupled system.
//!
//! Each patch `k` works on an extended local space: its own active basis functions
//! followed by one copy of every neighbor's face layer. Volume, consistency and
//! penalty contributions are kept as separate matrices so that norms and the
//! harmonic extensions can reuse the pieces.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{harmonic_average, MultiPatch, Neighbor, Patch, SideKind, SideRef};
use crate::linalg::{CsrMatrix, SpdFactorization, TripletMatrix};
use crate::quadrature::GaussLegendre;

/// Breakpoints closer than this are merged on faces.
const BREAK_TOL: f64 = 1e-12;

/// Penalty parameter `(p + 1)(p + 2)` used when none is given.
pub fn default_penalty(degree: usize) -> f64 {
    ((degree + 1) * (degree + 2)) as f64
}

/// Right-hand side data: volume source and Neumann flux, both per patch.
pub trait ProblemData: Sync {
    fn source(&self, patch: usize, x: [f64; 2]) -> f64;

    fn neumann(&self, _patch: usize, _x: [f64; 2], _normal: [f64; 2]) -> f64 {
        0.0
    }
}

/// Homogeneous data.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroData;

impl ProblemData for ZeroData {
    fn source(&self, _patch: usize, _x: [f64; 2]) -> f64 {
        0.0
    }
}

/// Source term given by a closure, homogeneous Neumann data.
pub struct SourceFn<F>(pub F);

impl<F: Fn([f64; 2]) -> f64 + Sync> ProblemData for SourceFn<F> {
    fn source(&self, _patch: usize, x: [f64; 2]) -> f64 {
        (self.0)(x)
    }
}

/// Copies of one neighbor's face layer inside the extended space of a patch.
#[derive(Debug, Clone, PartialEq)]
pub struct CopyBlock {
    pub neighbor: Neighbor,
    /// Local index of the copy at each position along the neighbor's face; `None` if eliminated there.
    pub local_by_pos: Vec<Option<usize>>,
}

/// Local numbering of the extended space of one patch.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedDofMap {
    pub patch: usize,
    own_local: Vec<Option<usize>>,
    own_space: Vec<usize>,
    copies: Vec<CopyBlock>,
    owner: Vec<(usize, usize)>,
    vertex: Vec<bool>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
}

/// `true` for basis functions of patch `k` that survive Dirichlet elimination.
pub fn active_mask(mp: &MultiPatch, k: usize) -> Vec<bool> {
    let patch = mp.patch(k);
    let mut mask = vec![true; patch.num_dofs()];
    for side in crate::geometry::Side::ALL {
        if mp.is_dirichlet(SideRef::new(k, side)) {
            for i in patch.face_indices(side) {
                mask[i] = false;
            }
        }
    }
    mask
}

impl ExtendedDofMap {
    pub fn new(mp: &MultiPatch, k: usize) -> Self {
        let patch = mp.patch(k);
        let mask = active_mask(mp, k);
        let mut own_local = vec![None; patch.num_dofs()];
        let mut own_space = Vec::new();
        let mut owner = Vec::new();
        for (i, &active) in mask.iter().enumerate() {
            if active {
                own_local[i] = Some(own_space.len());
                own_space.push(i);
                owner.push((k, i));
            }
        }
        let n_own = own_space.len();
        let mut vertex = vec![false; n_own];
        let mut on_interface = vec![false; n_own];
        let neighbors = mp.neighbors(k);
        for nb in &neighbors {
            let face = patch.face_indices(nb.own.side);
            for (pos, &i) in face.iter().enumerate() {
                if let Some(li) = own_local[i] {
                    on_interface[li] = true;
                    if pos == 0 || pos + 1 == face.len() {
                        vertex[li] = true;
                    }
                }
            }
        }
        let mut copies = Vec::with_capacity(neighbors.len());
        for nb in neighbors {
            let l = nb.other.patch;
            let other_mask = active_mask(mp, l);
            let face = mp.patch(l).face_indices(nb.other.side);
            let mut local_by_pos = vec![None; face.len()];
            for (pos, &i) in face.iter().enumerate() {
                if other_mask[i] {
                    local_by_pos[pos] = Some(owner.len());
                    owner.push((l, i));
                    vertex.push(pos == 0 || pos + 1 == face.len());
                }
            }
            copies.push(CopyBlock { neighbor: nb, local_by_pos });
        }
        let interior = (0..n_own).filter(|&i| !on_interface[i]).collect();
        let boundary = (0..owner.len()).filter(|&i| i >= n_own || on_interface[i]).collect();
        Self { patch: k, own_local, own_space, copies, owner, vertex, interior, boundary }
    }

    /// Size of the extended local space.
    pub fn len(&self) -> usize {
        self.owner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owner.is_empty()
    }

    pub fn num_own(&self) -> usize {
        self.own_space.len()
    }

    /// Local index of own basis function `i`, if not eliminated.
    pub fn own_local(&self, i: usize) -> Option<usize> {
        self.own_local[i]
    }

    /// Own basis index of local own dof `li`.
    pub fn own_space(&self, li: usize) -> usize {
        self.own_space[li]
    }

    pub fn copies(&self) -> &[CopyBlock] {
        &self.copies
    }

    /// `(owner patch, owner basis index)` of every local dof.
    pub fn owner(&self, li: usize) -> (usize, usize) {
        self.owner[li]
    }

    pub fn is_copy(&self, li: usize) -> bool {
        li >= self.own_space.len()
    }

    /// Local dof is a point evaluation at a corner of the extended patch.
    pub fn is_vertex(&self, li: usize) -> bool {
        self.vertex[li]
    }

    /// Own dofs with zero trace on every interface side.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    /// Own interface-layer dofs together with all neighbor copies.
    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }
}

/// Quadrature bookkeeping of one interface side.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceRule {
    pub neighbor: Neighbor,
    pub segments: usize,
    pub points_per_segment: usize,
    pub h_kl: f64,
}

/// Extended system of one patch.
#[derive(Debug, Clone)]
pub struct PatchSystem {
    pub dofs: ExtendedDofMap,
    /// Volume stiffness `a`, restricted to active own dofs.
    pub volume: CsrMatrix,
    /// Consistency term `s`.
    pub consistency: CsrMatrix,
    /// Penalty term `p`.
    pub penalty: CsrMatrix,
    /// `volume + consistency + penalty`
    pub matrix: CsrMatrix,
    pub load: Vec<f64>,
    pub delta: f64,
    pub face_rules: Vec<FaceRule>,
}

/// The four blocks of a matrix split into interior and extended-boundary dofs.
#[derive(Debug, Clone)]
pub struct Blocks {
    pub ii: CsrMatrix,
    pub ib: CsrMatrix,
    pub bi: CsrMatrix,
    pub bb: CsrMatrix,
}

impl Blocks {
    pub fn split(m: &CsrMatrix, interior: &[usize], boundary: &[usize]) -> Self {
        Self {
            ii: m.submatrix(interior, interior),
            ib: m.submatrix(interior, boundary),
            bi: m.submatrix(boundary, interior),
            bb: m.submatrix(boundary, boundary),
        }
    }
}

impl PatchSystem {
    pub fn blocks(&self) -> Blocks {
        Blocks::split(&self.matrix, self.dofs.interior(), self.dofs.boundary())
    }

    pub fn load_interior(&self) -> Vec<f64> {
        self.dofs.interior().iter().map(|&i| self.load[i]).collect()
    }

    pub fn load_boundary(&self) -> Vec<f64> {
        self.dofs.boundary().iter().map(|&i| self.load[i]).collect()
    }

    /// `u^T (volume + penalty) u`: the local part of the dG norm.
    pub fn dg_energy(&self, u: &[f64]) -> f64 {
        self.volume.quadratic_form(u) + self.penalty.quadratic_form(u)
    }

    /// `u^T (volume + consistency + penalty) u`
    pub fn energy(&self, u: &[f64]) -> f64 {
        self.matrix.quadratic_form(u)
    }
}

fn gauss_points(patch: &Patch) -> usize {
    patch.space().dir(0).degree().max(patch.space().dir(1).degree()) + 1
}

fn element_breaks(patch: &Patch, dir: usize) -> Vec<f64> {
    merge_breaks(patch.space().dir(dir).breakpoints().into_iter().chain(patch.geometry().dir(dir).breakpoints()))
}

fn merge_breaks(it: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = it.collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() < BREAK_TOL);
    v
}

/// Volume stiffness `int alpha grad N_i . grad N_j` over all basis functions of the patch.
pub fn volume_stiffness(patch: &Patch) -> Result<CsrMatrix> {
    volume_stiffness_with_order(patch, gauss_points(patch))
}

/// As [`volume_stiffness`] with `order` Gauss points per direction and element.
pub fn volume_stiffness_with_order(patch: &Patch, order: usize) -> Result<CsrMatrix> {
    let n = patch.num_dofs();
    let rule = GaussLegendre::new(order);
    let b0 = element_breaks(patch, 0);
    let b1 = element_breaks(patch, 1);
    let mut trip = TripletMatrix::new(n, n);
    let mut grads: Vec<[f64; 2]> = Vec::new();
    for w1 in b1.windows(2) {
        for w0 in b0.windows(2) {
            let mut local: Vec<f64> = Vec::new();
            let mut indices: Vec<usize> = Vec::new();
            for (y, wy) in rule.on_interval(w1[0], w1[1]) {
                for (x, wx) in rule.on_interval(w0[0], w0[1]) {
                    let b = patch.space().eval([x, y])?;
                    let g = patch.eval_geometry([x, y])?;
                    let jinv_t = g
                        .jacobian
                        .try_inverse()
                        .ok_or_else(|| Error::Geometry("singular Jacobian".into()))?
                        .transpose();
                    let weight = wx * wy * g.jacobian.determinant() * patch.alpha();
                    if indices.is_empty() {
                        indices = b.indices.clone();
                        local = vec![0.0; indices.len() * indices.len()];
                    }
                    grads.clear();
                    grads.extend(b.grads.iter().map(|gr| {
                        let v = jinv_t * nalgebra::Vector2::new(gr[0], gr[1]);
                        [v[0], v[1]]
                    }));
                    let m = indices.len();
                    for a in 0..m {
                        for c in 0..m {
                            local[a * m + c] += weight * (grads[a][0] * grads[c][0] + grads[a][1] * grads[c][1]);
                        }
                    }
                }
            }
            let m = indices.len();
            for a in 0..m {
                for c in 0..m {
                    trip.push(indices[a], indices[c], local[a * m + c]);
                }
            }
        }
    }
    Ok(trip.into_csr())
}

/// Consistency and penalty matrices of one patch towards one neighbor, in the patch's extended numbering.
#[derive(Debug, Clone)]
pub struct InterfaceTerms {
    pub consistency: CsrMatrix,
    pub penalty: CsrMatrix,
}

/// Interface contributions of patch `dofs.patch` on all faces it shares with patch `other`.
pub fn interface_terms(mp: &MultiPatch, dofs: &ExtendedDofMap, other: usize, delta: f64) -> Result<InterfaceTerms> {
    if !(delta > 0.0) {
        return Err(Error::Parameter(format!("penalty must be positive, got {delta}")));
    }
    let n = dofs.len();
    let mut cons = TripletMatrix::new(n, n);
    let mut pen = TripletMatrix::new(n, n);
    let mut found = false;
    for block in dofs.copies().iter().filter(|b| b.neighbor.other.patch == other) {
        found = true;
        let h_kl = interface_mesh_size(mp, &block.neighbor)?;
        face_terms(mp, dofs, block, delta, h_kl, &mut cons, &mut pen)?;
    }
    if !found {
        return Err(Error::Topology(format!("patches {} and {other} do not share an interface", dofs.patch)));
    }
    Ok(InterfaceTerms { consistency: cons.into_csr(), penalty: pen.into_csr() })
}

/// Harmonic average of the two patch meshsizes across an interface.
pub fn interface_mesh_size(mp: &MultiPatch, nb: &Neighbor) -> Result<f64> {
    harmonic_average(mp.patch(nb.own.patch).metrics()?.h, mp.patch(nb.other.patch).metrics()?.h)
}

/// Merged face partition in the own face coordinate.
pub fn face_breakpoints(mp: &MultiPatch, nb: &Neighbor) -> Vec<f64> {
    let own = mp.patch(nb.own.patch);
    let other = mp.patch(nb.other.patch);
    let d = nb.own.side.running_dir();
    let e = nb.other.side.running_dir();
    merge_breaks(
        own.space().dir(d).breakpoints().into_iter().chain(own.geometry().dir(d).breakpoints()).chain(
            other
                .space()
                .dir(e)
                .breakpoints()
                .into_iter()
                .chain(other.geometry().dir(e).breakpoints())
                .map(|t| nb.orientation.map(t)),
        ),
    )
}

/// Gauss points per merged face segment.
pub fn face_order(mp: &MultiPatch, nb: &Neighbor) -> usize {
    let own = mp.patch(nb.own.patch).face_space(nb.own.side).degree();
    let other = mp.patch(nb.other.patch).face_space(nb.other.side).degree();
    own.max(other) + 1
}

/// Face quadrature points `(t, weight * ds/dt, frame)` in the own face coordinate.
pub(crate) fn face_quadrature(mp: &MultiPatch, nb: &Neighbor) -> Result<Vec<(f64, f64, crate::geometry::SideFrame)>> {
    let own = mp.patch(nb.own.patch);
    let rule = GaussLegendre::new(face_order(mp, nb));
    let mut out = Vec::new();
    for w in face_breakpoints(mp, nb).windows(2) {
        for (t, wt) in rule.on_interval(w[0], w[1]) {
            let frame = own.side_frame(nb.own.side, t)?;
            out.push((t, wt * frame.ds_dt, frame));
        }
    }
    Ok(out)
}

fn face_terms(
    mp: &MultiPatch,
    dofs: &ExtendedDofMap,
    block: &CopyBlock,
    delta: f64,
    h_kl: f64,
    cons: &mut TripletMatrix,
    pen: &mut TripletMatrix,
) -> Result<()> {
    let nb = &block.neighbor;
    let own = mp.patch(nb.own.patch);
    let other = mp.patch(nb.other.patch);
    let other_face = other.face_space(nb.other.side);
    let alpha = own.alpha();
    let mut jump: Vec<(usize, f64)> = Vec::new();
    let mut dn: Vec<(usize, f64)> = Vec::new();
    for (t, w, frame) in face_quadrature(mp, nb)? {
        let b = own.space().eval(nb.own.side.param_point(t))?;
        let jinv_t =
            frame.geo.jacobian.try_inverse().ok_or_else(|| Error::Geometry("singular Jacobian".into()))?.transpose();
        jump.clear();
        dn.clear();
        for ((&i, &v), g) in b.indices.iter().zip(&b.values).zip(&b.grads) {
            let Some(li) = dofs.own_local(i) else { continue };
            let d = (jinv_t * nalgebra::Vector2::new(g[0], g[1])).dot(&frame.normal);
            if v != 0.0 {
                jump.push((li, -v));
            }
            if d != 0.0 {
                dn.push((li, d));
            }
        }
        let (first, values) = other_face.eval_basis(nb.orientation.map(t))?;
        for (a, &v) in values.iter().enumerate() {
            if let Some(li) = block.local_by_pos[first + a] {
                if v != 0.0 {
                    jump.push((li, v));
                }
            }
        }
        let cp = w * delta * alpha / h_kl;
        let cs = 0.5 * w * alpha;
        for &(i, ji) in &jump {
            for &(j, jj) in &jump {
                pen.push(i, j, cp * ji * jj);
            }
            for &(j, dj) in &dn {
                cons.push(i, j, cs * ji * dj);
                cons.push(j, i, cs * ji * dj);
            }
        }
    }
    Ok(())
}

/// Volume source and Neumann contributions over all basis functions of patch `k`.
pub fn assemble_load(mp: &MultiPatch, k: usize, data: &dyn ProblemData) -> Result<Vec<f64>> {
    let patch = mp.patch(k);
    let mut load = vec![0.0; patch.num_dofs()];
    let rule = GaussLegendre::new(gauss_points(patch));
    let b0 = element_breaks(patch, 0);
    let b1 = element_breaks(patch, 1);
    for w1 in b1.windows(2) {
        for w0 in b0.windows(2) {
            for (y, wy) in rule.on_interval(w1[0], w1[1]) {
                for (x, wx) in rule.on_interval(w0[0], w0[1]) {
                    let g = patch.eval_geometry([x, y])?;
                    let f = data.source(k, [g.point[0], g.point[1]]);
                    if f == 0.0 {
                        continue;
                    }
                    let b = patch.space().eval([x, y])?;
                    let c = wx * wy * g.jacobian.determinant() * f;
                    for (&i, &v) in b.indices.iter().zip(&b.values) {
                        load[i] += c * v;
                    }
                }
            }
        }
    }
    for side in crate::geometry::Side::ALL {
        if mp.side_kind(SideRef::new(k, side)) != SideKind::Neumann {
            continue;
        }
        let d = side.running_dir();
        for w in element_breaks(patch, d).windows(2) {
            for (t, wt) in rule.on_interval(w[0], w[1]) {
                let frame = patch.side_frame(side, t)?;
                let p = frame.geo.point;
                let g = data.neumann(k, [p[0], p[1]], [frame.normal[0], frame.normal[1]]);
                if g == 0.0 {
                    continue;
                }
                let b = patch.space().eval(side.param_point(t))?;
                for (&i, &v) in b.indices.iter().zip(&b.values) {
                    load[i] += wt * frame.ds_dt * g * v;
                }
            }
        }
    }
    Ok(load)
}

/// Extended system of patch `k` with Dirichlet dofs eliminated.
pub fn assemble_patch(mp: &MultiPatch, k: usize, delta: f64, data: &dyn ProblemData) -> Result<PatchSystem> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Parameter(format!("penalty must be positive, got {delta}")));
    }
    let dofs = ExtendedDofMap::new(mp, k);
    let n = dofs.len();
    let own_rows: Vec<usize> = (0..dofs.num_own()).map(|li| dofs.own_space(li)).collect();

    let full = volume_stiffness(mp.patch(k))?;
    let mut trip = TripletMatrix::new(n, n);
    for (li, &i) in own_rows.iter().enumerate() {
        let (cols, vals) = full.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            if let Some(lj) = dofs.own_local(j) {
                trip.push(li, lj, v);
            }
        }
    }
    let volume = trip.into_csr();

    let mut cons = TripletMatrix::new(n, n);
    let mut pen = TripletMatrix::new(n, n);
    let mut face_rules = Vec::new();
    for block in dofs.copies() {
        let h_kl = interface_mesh_size(mp, &block.neighbor)?;
        face_terms(mp, &dofs, block, delta, h_kl, &mut cons, &mut pen)?;
        face_rules.push(FaceRule {
            neighbor: block.neighbor,
            segments: face_breakpoints(mp, &block.neighbor).len() - 1,
            points_per_segment: face_order(mp, &block.neighbor),
            h_kl,
        });
    }
    let consistency = cons.into_csr();
    let penalty = pen.into_csr();
    let matrix = volume.add(&consistency)?.add(&penalty)?;

    let full_load = assemble_load(mp, k, data)?;
    let mut load = vec![0.0; n];
    for (li, &i) in own_rows.iter().enumerate() {
        load[li] = full_load[i];
    }
    Ok(PatchSystem { dofs, volume, consistency, penalty, matrix, load, delta, face_rules })
}

/// All patch systems together with the global numbering of the coupled space.
#[derive(Debug, Clone)]
pub struct DgProblem {
    mp: MultiPatch,
    systems: Vec<PatchSystem>,
    offsets: Vec<usize>,
    delta: f64,
}

impl DgProblem {
    /// Assembles every patch; `delta = None` selects the default penalty for the largest degree.
    pub fn assemble(mp: MultiPatch, delta: Option<f64>, data: &dyn ProblemData) -> Result<Self> {
        let degree =
            mp.patches().iter().map(|p| p.space().dir(0).degree().max(p.space().dir(1).degree())).max().unwrap_or(1);
        let delta = delta.unwrap_or_else(|| default_penalty(degree));
        let systems = (0..mp.num_patches())
            .into_par_iter()
            .map(|k| assemble_patch(&mp, k, delta, data))
            .collect::<Result<Vec<_>>>()?;
        let mut offsets = Vec::with_capacity(systems.len() + 1);
        let mut total = 0;
        for s in &systems {
            offsets.push(total);
            total += s.dofs.num_own();
        }
        offsets.push(total);
        Ok(Self { mp, systems, offsets, delta })
    }

    pub fn multipatch(&self) -> &MultiPatch {
        &self.mp
    }

    pub fn systems(&self) -> &[PatchSystem] {
        &self.systems
    }

    pub fn system(&self, k: usize) -> &PatchSystem {
        &self.systems[k]
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Number of dofs of the coupled (non-extended) space.
    pub fn num_dofs(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    /// Global index of an own basis function, if active.
    pub fn global_index(&self, patch: usize, basis: usize) -> Option<usize> {
        self.systems[patch].dofs.own_local(basis).map(|li| self.offsets[patch] + li)
    }

    /// Global indices of all local extended dofs of patch `k`.
    pub fn local_to_global(&self, k: usize) -> Vec<usize> {
        let dofs = &self.systems[k].dofs;
        (0..dofs.len())
            .map(|li| {
                let (p, i) = dofs.owner(li);
                self.global_index(p, i).expect("copies exist only for active owners")
            })
            .collect()
    }

    /// Restriction of a coupled vector to the extended space of patch `k`.
    pub fn extended(&self, k: usize, u: &[f64]) -> Vec<f64> {
        self.local_to_global(k).into_iter().map(|g| u[g]).collect()
    }

    /// Coefficients of patch `k` over its full basis (eliminated dofs are zero).
    pub fn patch_coefficients(&self, k: usize, u: &[f64]) -> Vec<f64> {
        let dofs = &self.systems[k].dofs;
        let mut c = vec![0.0; self.mp.patch(k).num_dofs()];
        for li in 0..dofs.num_own() {
            c[dofs.own_space(li)] = u[self.offsets[k] + li];
        }
        c
    }

    /// Own part of an extended local vector written into a coupled vector.
    pub fn scatter_own(&self, k: usize, local: &[f64], u: &mut [f64]) {
        let n = self.systems[k].dofs.num_own();
        u[self.offsets[k]..self.offsets[k] + n].copy_from_slice(&local[..n]);
    }

    /// Sum of the extended patch matrices mapped to the coupled space.
    pub fn global_matrix(&self) -> CsrMatrix {
        let n = self.num_dofs();
        let mut trip = TripletMatrix::new(n, n);
        for (k, s) in self.systems.iter().enumerate() {
            let map = self.local_to_global(k);
            for (i, &gi) in map.iter().enumerate() {
                let (cols, vals) = s.matrix.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    trip.push(gi, map[j], v);
                }
            }
        }
        trip.into_csr()
    }

    pub fn global_load(&self) -> Vec<f64> {
        let mut f = vec![0.0; self.num_dofs()];
        for (k, s) in self.systems.iter().enumerate() {
            for (gi, v) in self.local_to_global(k).into_iter().zip(&s.load) {
                f[gi] += v;
            }
        }
        f
    }

    /// Solves the coupled system with a sparse direct factorization.
    pub fn solve_direct(&self) -> Result<Vec<f64>> {
        Ok(SpdFactorization::factorize(&self.global_matrix())?.solve(&self.global_load()))
    }

    /// `sum_k u_k^T (volume + penalty) u_k`
    pub fn dg_norm_squared(&self, u: &[f64]) -> f64 {
        (0..self.systems.len()).map(|k| self.systems[k].dg_energy(&self.extended(k, u))).sum()
    }
}
