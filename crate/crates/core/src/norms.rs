//! The dG norm, discretization errors, face L2 projections and coefficient-based discrete norms.

use nalgebra::{DMatrix, DVector};

use crate::assembly::{face_quadrature, interface_mesh_size, DgProblem};
use crate::bspline::{KnotVector, TensorSplineSpace};
use crate::error::{Error, Result};
use crate::geometry::{harmonic_average, MultiPatch, Neighbor};
use crate::quadrature::GaussLegendre;

/// A smooth reference solution.
pub trait ExactSolution: Sync {
    fn value(&self, x: [f64; 2]) -> f64;
    fn gradient(&self, x: [f64; 2]) -> [f64; 2];
}

/// Squared dG norm of a coupled coefficient vector.
pub fn dg_norm_squared(problem: &DgProblem, u: &[f64]) -> Result<f64> {
    if u.len() != problem.num_dofs() {
        return Err(Error::Dimension { expected: problem.num_dofs(), got: u.len() });
    }
    Ok(problem.dg_norm_squared(u))
}

/// Squared dG norm of a function given by one extended vector per patch (copies may disagree with owners).
pub fn dg_norm_squared_extended(problem: &DgProblem, u: &[Vec<f64>]) -> Result<f64> {
    if u.len() != problem.systems().len() {
        return Err(Error::Dimension { expected: problem.systems().len(), got: u.len() });
    }
    let mut total = 0.0;
    for (s, uk) in problem.systems().iter().zip(u) {
        if uk.len() != s.dofs.len() {
            return Err(Error::Dimension { expected: s.dofs.len(), got: uk.len() });
        }
        total += s.dg_energy(uk);
    }
    Ok(total)
}

/// Discretization errors against a smooth solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub l2: f64,
    /// Broken `alpha`-weighted H1 seminorm.
    pub energy: f64,
    /// dG norm: energy part plus the penalty-weighted jumps of the discrete solution.
    pub dg: f64,
}

/// Errors of the coupled vector `u` measured with `extra` Gauss points above the assembly rule.
pub fn error_norms(problem: &DgProblem, u: &[f64], exact: &dyn ExactSolution, extra: usize) -> Result<ErrorNorms> {
    if u.len() != problem.num_dofs() {
        return Err(Error::Dimension { expected: problem.num_dofs(), got: u.len() });
    }
    let mp = problem.multipatch();
    let mut l2 = 0.0;
    let mut energy = 0.0;
    for (k, patch) in mp.patches().iter().enumerate() {
        let coeffs = problem.patch_coefficients(k, u);
        let space = patch.space();
        let rule = GaussLegendre::new(space.dir(0).degree().max(space.dir(1).degree()) + 1 + extra);
        let b0 = space.dir(0).breakpoints();
        let b1 = space.dir(1).breakpoints();
        for w1 in b1.windows(2) {
            for w0 in b0.windows(2) {
                for (y, wy) in rule.on_interval(w1[0], w1[1]) {
                    for (x, wx) in rule.on_interval(w0[0], w0[1]) {
                        let g = patch.eval_geometry([x, y])?;
                        let (uh, grad) = space.tensor_eval(&coeffs, [x, y])?;
                        let jinv_t = g
                            .jacobian
                            .try_inverse()
                            .ok_or_else(|| Error::Geometry("singular Jacobian".into()))?
                            .transpose();
                        let gh = jinv_t * nalgebra::Vector2::new(grad[0], grad[1]);
                        let p = [g.point[0], g.point[1]];
                        let ge = exact.gradient(p);
                        let w = wx * wy * g.jacobian.determinant();
                        l2 += w * (exact.value(p) - uh).powi(2);
                        energy += w * patch.alpha() * ((ge[0] - gh[0]).powi(2) + (ge[1] - gh[1]).powi(2));
                    }
                }
            }
        }
    }
    let mut jumps = 0.0;
    for k in 0..mp.num_patches() {
        jumps += penalized_jumps(problem, k, &problem.extended(k, u))?;
    }
    Ok(ErrorNorms { l2: l2.sqrt(), energy: energy.sqrt(), dg: (energy + jumps).sqrt() })
}

/// Penalty-weighted squared jumps of an extended vector across the faces of patch `k`,
/// evaluated pointwise (the penalty quadratic form cancels badly for tiny jumps).
fn penalized_jumps(problem: &DgProblem, k: usize, u: &[f64]) -> Result<f64> {
    let mp = problem.multipatch();
    let sys = problem.system(k);
    let own = mp.patch(k);
    let mut total = 0.0;
    for block in sys.dofs.copies() {
        let nb = &block.neighbor;
        let other_face = mp.patch(nb.other.patch).face_space(nb.other.side);
        let h_kl = interface_mesh_size(mp, nb)?;
        for (t, w, _) in face_quadrature(mp, nb)? {
            let b = own.space().eval(nb.own.side.param_point(t))?;
            let mut jump = 0.0;
            for (&i, &v) in b.indices.iter().zip(&b.values) {
                if let Some(li) = sys.dofs.own_local(i) {
                    jump -= v * u[li];
                }
            }
            let (first, values) = other_face.eval_basis(nb.orientation.map(t))?;
            for (a, &v) in values.iter().enumerate() {
                if let Some(li) = block.local_by_pos[first + a] {
                    jump += v * u[li];
                }
            }
            total += w * problem.delta() * own.alpha() / h_kl * jump * jump;
        }
    }
    Ok(total)
}

/// Mass matrices of one interface: neighbor face space against itself and against the own trace space.
#[derive(Debug, Clone)]
pub struct FaceGram {
    pub neighbor: Neighbor,
    /// Neighbor face space mass matrix.
    pub mass: DMatrix<f64>,
    /// Rows: neighbor face functions, columns: own trace functions.
    pub mixed: DMatrix<f64>,
    /// Own trace space mass matrix.
    pub own_mass: DMatrix<f64>,
    factor: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl FaceGram {
    pub fn new(mp: &MultiPatch, neighbor: &Neighbor) -> Result<Self> {
        let own = mp.patch(neighbor.own.patch).face_space(neighbor.own.side);
        let other = mp.patch(neighbor.other.patch).face_space(neighbor.other.side);
        let (m, n) = (other.num_basis(), own.num_basis());
        let mut mass = DMatrix::zeros(m, m);
        let mut mixed = DMatrix::zeros(m, n);
        let mut own_mass = DMatrix::zeros(n, n);
        for (t, w, _) in face_quadrature(mp, neighbor)? {
            let (fo, vo) = other.eval_basis(neighbor.orientation.map(t))?;
            let (fk, vk) = own.eval_basis(t)?;
            for (a, &va) in vo.iter().enumerate() {
                for (b, &vb) in vo.iter().enumerate() {
                    mass[(fo + a, fo + b)] += w * va * vb;
                }
                for (b, &vb) in vk.iter().enumerate() {
                    mixed[(fo + a, fk + b)] += w * va * vb;
                }
            }
            for (a, &va) in vk.iter().enumerate() {
                for (b, &vb) in vk.iter().enumerate() {
                    own_mass[(fk + a, fk + b)] += w * va * vb;
                }
            }
        }
        let factor = mass.clone().cholesky().ok_or(Error::NotSpd { row: 0, pivot: f64::NAN })?;
        Ok(Self { neighbor: *neighbor, mass, mixed, own_mass, factor })
    }

    /// Coefficients in the neighbor face space of the L2 projection of an own trace.
    pub fn project(&self, own_trace: &[f64]) -> Result<Vec<f64>> {
        if own_trace.len() != self.mixed.ncols() {
            return Err(Error::Dimension { expected: self.mixed.ncols(), got: own_trace.len() });
        }
        let rhs = &self.mixed * DVector::from_column_slice(own_trace);
        Ok(self.factor.solve(&rhs).iter().copied().collect())
    }

    /// `||v - pi v||^2` on the face for an own trace `v` and neighbor-face coefficients `c`.
    pub fn distance_squared(&self, own_trace: &[f64], c: &[f64]) -> f64 {
        let v = DVector::from_column_slice(own_trace);
        let c = DVector::from_column_slice(c);
        (v.transpose() * &self.own_mass * &v)[0] - 2.0 * (c.transpose() * &self.mixed * &v)[0]
            + (c.transpose() * &self.mass * &c)[0]
    }

    pub fn own_norm_squared(&self, own_trace: &[f64]) -> f64 {
        let v = DVector::from_column_slice(own_trace);
        (v.transpose() * &self.own_mass * &v)[0]
    }

    pub fn neighbor_norm_squared(&self, c: &[f64]) -> f64 {
        let c = DVector::from_column_slice(c);
        (c.transpose() * &self.mass * &c)[0]
    }
}

/// Projection of the trace of own coefficients onto the face space of the neighbor.
pub fn l2_project_face(mp: &MultiPatch, neighbor: &Neighbor, own_trace: &[f64]) -> Result<Vec<f64>> {
    FaceGram::new(mp, neighbor)?.project(own_trace)
}

/// Coefficient-based norms of a tensor-product spline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteNorms {
    /// `sum c_i^2 h^2` with the parameter meshsize `h`.
    pub box_norm: f64,
    /// Sum of squared first differences over both index directions.
    pub grad_norm: f64,
}

pub fn discrete_norms(space: &TensorSplineSpace, coeffs: &[f64]) -> Result<DiscreteNorms> {
    if coeffs.len() != space.dim() {
        return Err(Error::Dimension { expected: space.dim(), got: coeffs.len() });
    }
    let h = space.mesh_size();
    let [m1, m2] = space.sizes();
    let box_norm = coeffs.iter().map(|c| c * c).sum::<f64>() * h * h;
    let mut grad_norm = 0.0;
    for j in 0..m2 {
        for i in 0..m1 {
            let c = coeffs[space.index(i, j)];
            if i > 0 {
                grad_norm += (c - coeffs[space.index(i - 1, j)]).powi(2);
            }
            if j > 0 {
                grad_norm += (c - coeffs[space.index(i, j - 1)]).powi(2);
            }
        }
    }
    Ok(DiscreteNorms { box_norm, grad_norm })
}

/// Face variant of the box norm: `sum c_i^2 h`.
pub fn face_box_norm(face: &KnotVector, coeffs: &[f64]) -> Result<f64> {
    if coeffs.len() != face.num_basis() {
        return Err(Error::Dimension { expected: face.num_basis(), got: coeffs.len() });
    }
    Ok(coeffs.iter().map(|c| c * c).sum::<f64>() * face.mesh_size())
}

/// Face variant of the difference norm.
pub fn face_grad_norm(face: &KnotVector, coeffs: &[f64]) -> Result<f64> {
    if coeffs.len() != face.num_basis() {
        return Err(Error::Dimension { expected: face.num_basis(), got: coeffs.len() });
    }
    Ok(coeffs.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum())
}

/// Squared L2 norm over the parameter square.
pub fn parameter_l2_norm_squared(space: &TensorSplineSpace, coeffs: &[f64]) -> Result<f64> {
    if coeffs.len() != space.dim() {
        return Err(Error::Dimension { expected: space.dim(), got: coeffs.len() });
    }
    let rule = GaussLegendre::new(space.dir(0).degree().max(space.dir(1).degree()) + 1);
    let mut total = 0.0;
    for w1 in space.dir(1).breakpoints().windows(2) {
        for w0 in space.dir(0).breakpoints().windows(2) {
            for (y, wy) in rule.on_interval(w1[0], w1[1]) {
                for (x, wx) in rule.on_interval(w0[0], w0[1]) {
                    total += wx * wy * space.tensor_eval(coeffs, [x, y])?.0.powi(2);
                }
            }
        }
    }
    Ok(total)
}

/// Coefficient-based dG norm of an extended vector of patch `k`: the difference
/// norm of the own coefficients plus, per neighbor, the penalty-scaled box norm of
/// the copy minus the projected own trace.
pub fn discrete_dg_norm(problem: &DgProblem, k: usize, u: &[f64]) -> Result<f64> {
    let mp = problem.multipatch();
    let sys = problem.system(k);
    if u.len() != sys.dofs.len() {
        return Err(Error::Dimension { expected: sys.dofs.len(), got: u.len() });
    }
    let patch = mp.patch(k);
    let mut own = vec![0.0; patch.num_dofs()];
    for li in 0..sys.dofs.num_own() {
        own[sys.dofs.own_space(li)] = u[li];
    }
    let mut total = discrete_norms(patch.space(), &own)?.grad_norm;
    for block in sys.dofs.copies() {
        let nb = &block.neighbor;
        let other = mp.patch(nb.other.patch);
        let trace: Vec<f64> = patch.face_indices(nb.own.side).iter().map(|&i| own[i]).collect();
        let projected = l2_project_face(mp, nb, &trace)?;
        let diff: Vec<f64> =
            block.local_by_pos.iter().zip(&projected).map(|(li, p)| li.map_or(0.0, |li| u[li]) - p).collect();
        let h_kl = harmonic_average(patch.space().mesh_size(), other.space().mesh_size())?;
        total += problem.delta() / h_kl * face_box_norm(other.face_space(nb.other.side), &diff)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{SourceFn, ZeroData};
    use crate::geometry::{Interface, Orientation, Patch, Side, SideRef};
    use approx::assert_relative_eq;

    fn pair(e0: usize, e1: usize, degree: usize) -> MultiPatch {
        let p0 = Patch::rectangle([0.0, 0.0], [1.0, 1.0], degree, 1.0)
            .unwrap()
            .with_space(TensorSplineSpace::uniform(degree, [e0, e0]).unwrap());
        let p1 = Patch::rectangle([1.0, 0.0], [2.0, 1.0], degree, 1.0)
            .unwrap()
            .with_space(TensorSplineSpace::uniform(degree, [e1, e1]).unwrap());
        MultiPatch::without_dirichlet(
            vec![p0, p1],
            vec![Interface::new(SideRef::new(0, Side::East), SideRef::new(1, Side::West), Orientation::Same)],
            vec![
                SideRef::new(0, Side::West),
                SideRef::new(0, Side::South),
                SideRef::new(0, Side::North),
                SideRef::new(1, Side::East),
                SideRef::new(1, Side::South),
                SideRef::new(1, Side::North),
            ],
        )
        .unwrap()
    }

    #[test]
    fn dg_norm_examples() {
        let prob = DgProblem::assemble(pair(2, 2, 2), Some(12.0), &ZeroData).unwrap();
        let ones = vec![1.0; prob.num_dofs()];
        assert!(dg_norm_squared(&prob, &ones).unwrap().abs() < 1e-12);

        // patch 0 zero, patch 1 one: both sides see the unit jump once
        let mut u = vec![0.0; prob.num_dofs()];
        for i in 0..prob.multipatch().patch(1).num_dofs() {
            u[prob.global_index(1, i).unwrap()] = 1.0;
        }
        let h = prob.system(0).face_rules[0].h_kl;
        assert_relative_eq!(dg_norm_squared(&prob, &u).unwrap(), 2.0 * 12.0 / h, epsilon = 1e-10);
        // seen from patch 0 alone
        assert_relative_eq!(prob.system(0).dg_energy(&prob.extended(0, &u)), 12.0 / h, epsilon = 1e-10);

        assert!(dg_norm_squared(&prob, &[1.0]).is_err());
    }

    #[test]
    fn pointwise_jumps_match_penalty_form() {
        let prob = DgProblem::assemble(pair(3, 5, 2), Some(9.0), &ZeroData).unwrap();
        let u: Vec<f64> = (0..prob.num_dofs()).map(|i| (0.7 * i as f64).sin()).collect();
        for k in 0..2 {
            let ext = prob.extended(k, &u);
            let form = prob.system(k).penalty.quadratic_form(&ext);
            assert_relative_eq!(penalized_jumps(&prob, k, &ext).unwrap(), form, max_relative = 1e-12);
        }
    }

    #[test]
    fn linear_function_single_patch() {
        let patch = Patch::rectangle([0.0, 0.0], [1.0, 1.0], 2, 1.0).unwrap().refined([2, 2]);
        let mp =
            MultiPatch::without_dirichlet(vec![patch], vec![], Side::ALL.iter().map(|&s| SideRef::new(0, s)).collect())
                .unwrap();
        let prob = DgProblem::assemble(mp, None, &SourceFn(|_| 0.0)).unwrap();
        let g = prob.multipatch().patch(0).space().dir(0).greville();
        let u: Vec<f64> =
            (0..prob.num_dofs()).map(|i| g[prob.multipatch().patch(0).space().multi_index(i)[0]]).collect();
        assert_relative_eq!(dg_norm_squared(&prob, &u).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn projection_identity_on_range_and_constants() {
        let mp = pair(4, 4, 2);
        let nb = mp.neighbors(0)[0];
        let gram = FaceGram::new(&mp, &nb).unwrap();
        let v: Vec<f64> = (0..gram.mixed.ncols()).map(|i| (i as f64 * 0.7).sin()).collect();
        let c = gram.project(&v).unwrap();
        for (a, b) in c.iter().zip(&v) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(gram.distance_squared(&v, &c).abs() < 1e-12);

        let coarse = pair(8, 2, 3);
        let nb = coarse.neighbors(0)[0];
        let ones = vec![1.0; 11];
        let c = l2_project_face(&coarse, &nb, &ones).unwrap();
        assert!(c.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn projection_is_stable() {
        let mp = pair(8, 2, 2);
        let nb = mp.neighbors(0)[0];
        let gram = FaceGram::new(&mp, &nb).unwrap();
        let v: Vec<f64> = (0..gram.mixed.ncols()).map(|i| if i % 2 == 0 { 1.0 } else { -0.5 }).collect();
        let c = gram.project(&v).unwrap();
        assert!(gram.neighbor_norm_squared(&c).sqrt() <= gram.own_norm_squared(&v).sqrt() + 1e-12);
    }

    #[test]
    fn reversed_orientation_projection() {
        let mut mp = pair(4, 2, 2);
        // flip patch 1 so that its west side runs downwards
        let flipped = Patch::bilinear([[2.0, 1.0], [1.0, 1.0], [1.0, 0.0], [2.0, 0.0]], 2, 1.0)
            .unwrap()
            .with_space(TensorSplineSpace::uniform(2, [2, 2]).unwrap());
        mp = MultiPatch::without_dirichlet(
            vec![mp.patch(0).clone(), flipped],
            vec![Interface::new(SideRef::new(0, Side::East), SideRef::new(1, Side::East), Orientation::Reversed)],
            vec![
                SideRef::new(0, Side::West),
                SideRef::new(0, Side::South),
                SideRef::new(0, Side::North),
                SideRef::new(1, Side::West),
                SideRef::new(1, Side::South),
                SideRef::new(1, Side::North),
            ],
        )
        .unwrap();
        assert!(mp.verify_topology(1e-12).is_empty());
        let nb = mp.neighbors(0)[0];
        // linear trace t on patch 0 becomes 1 - t' on the flipped neighbor
        let g = mp.patch(0).face_space(Side::East).greville();
        let c = l2_project_face(&mp, &nb, &g).unwrap();
        let gn = mp.patch(1).face_space(Side::East).greville();
        for (a, b) in c.iter().zip(&gn) {
            assert!((a - (1.0 - b)).abs() < 1e-12);
        }
    }

    #[test]
    fn discrete_norm_examples() {
        let space = TensorSplineSpace::uniform(2, [3, 4]).unwrap();
        let zero = discrete_norms(&space, &vec![0.0; space.dim()]).unwrap();
        assert_eq!(zero, DiscreteNorms { box_norm: 0.0, grad_norm: 0.0 });
        let c = 2.5;
        let n = discrete_norms(&space, &vec![c; space.dim()]).unwrap();
        assert_eq!(n.grad_norm, 0.0);
        let h = space.mesh_size();
        assert_relative_eq!(n.box_norm, c * c * space.dim() as f64 * h * h, epsilon = 1e-14);
    }

    #[test]
    fn discrete_dg_norm_constants_and_delta_scaling() {
        let mp = pair(4, 2, 2);
        let a = DgProblem::assemble(mp.clone(), Some(10.0), &ZeroData).unwrap();
        let ones = vec![1.0; a.system(0).dofs.len()];
        assert!(discrete_dg_norm(&a, 0, &ones).unwrap().abs() < 1e-12);

        let u: Vec<f64> = (0..ones.len()).map(|i| ((i * 7) % 5) as f64).collect();
        let b = DgProblem::assemble(mp, Some(20.0), &ZeroData).unwrap();
        let grad = {
            let mut own = vec![0.0; a.multipatch().patch(0).num_dofs()];
            for li in 0..a.system(0).dofs.num_own() {
                own[a.system(0).dofs.own_space(li)] = u[li];
            }
            discrete_norms(a.multipatch().patch(0).space(), &own).unwrap().grad_norm
        };
        let ja = discrete_dg_norm(&a, 0, &u).unwrap() - grad;
        let jb = discrete_dg_norm(&b, 0, &u).unwrap() - grad;
        assert_relative_eq!(jb, 2.0 * ja, max_relative = 1e-12);
    }
}
