//! Schur complements of the extended patch matrices and discrete harmonic extensions.

use std::sync::OnceLock;

use nalgebra::DMatrix;

use crate::assembly::{Blocks, PatchSystem};
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, SpdFactorization, DENSE_LIMIT};

/// Schur complement of one extended patch matrix with respect to a set of boundary dofs.
#[derive(Debug)]
pub struct PatchSchur {
    interior: Vec<usize>,
    boundary: Vec<usize>,
    blocks: Blocks,
    volume_ii: CsrMatrix,
    volume_ib: CsrMatrix,
    interior_factor: Option<SpdFactorization>,
    volume_factor: OnceLock<Result<Option<SpdFactorization>>>,
}

fn factor_if_nonempty(m: &CsrMatrix) -> Result<Option<SpdFactorization>> {
    if m.nrows() == 0 {
        Ok(None)
    } else {
        SpdFactorization::factorize(m).map(Some)
    }
}

fn solve(f: &Option<SpdFactorization>, b: &[f64]) -> Vec<f64> {
    match f {
        Some(f) => f.solve(b),
        None => Vec::new(),
    }
}

impl PatchSchur {
    /// Splits along the interior / extended-boundary partition of the patch.
    pub fn new(system: &PatchSystem) -> Result<Self> {
        Self::with_split(system, system.dofs.interior(), system.dofs.boundary())
    }

    /// Eliminates `interior`; `boundary` must hold the remaining local dofs.
    pub fn with_split(system: &PatchSystem, interior: &[usize], boundary: &[usize]) -> Result<Self> {
        let n = system.dofs.len();
        if interior.len() + boundary.len() != n {
            return Err(Error::Dimension { expected: n, got: interior.len() + boundary.len() });
        }
        let blocks = Blocks::split(&system.matrix, interior, boundary);
        let interior_factor = factor_if_nonempty(&blocks.ii)?;
        Ok(Self {
            interior: interior.to_vec(),
            boundary: boundary.to_vec(),
            volume_ii: system.volume.submatrix(interior, interior),
            volume_ib: system.volume.submatrix(interior, boundary),
            blocks,
            interior_factor,
            volume_factor: OnceLock::new(),
        })
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn blocks(&self) -> &Blocks {
        &self.blocks
    }

    fn check(&self, u_b: &[f64]) -> Result<()> {
        if u_b.len() != self.boundary.len() {
            return Err(Error::Dimension { expected: self.boundary.len(), got: u_b.len() });
        }
        Ok(())
    }

    /// Solves with the interior block of the full extended matrix.
    pub fn solve_interior(&self, b: &[f64]) -> Vec<f64> {
        solve(&self.interior_factor, b)
    }

    /// `(K_BB - K_BI K_II^{-1} K_IB) u_b`
    pub fn schur_apply(&self, u_b: &[f64]) -> Result<Vec<f64>> {
        self.check(u_b)?;
        let mut out = self.blocks.bb.mul_vec(u_b);
        let u_i = self.harmonic_extension_e(u_b)?;
        let coupling = self.blocks.bi.mul_vec(&u_i);
        out.iter_mut().zip(coupling).for_each(|(o, c)| *o += c);
        Ok(out)
    }

    /// Interior values minimizing the full extended energy for the boundary data `u_b`.
    pub fn harmonic_extension_e(&self, u_b: &[f64]) -> Result<Vec<f64>> {
        self.check(u_b)?;
        let mut rhs = self.blocks.ib.mul_vec(u_b);
        rhs.iter_mut().for_each(|v| *v = -*v);
        Ok(solve(&self.interior_factor, &rhs))
    }

    /// Interior values minimizing the volume energy only.
    pub fn harmonic_extension_a(&self, u_b: &[f64]) -> Result<Vec<f64>> {
        self.check(u_b)?;
        let factor = self.volume_factor.get_or_init(|| factor_if_nonempty(&self.volume_ii));
        let factor = factor.as_ref().map_err(Clone::clone)?;
        let mut rhs = self.volume_ib.mul_vec(u_b);
        rhs.iter_mut().for_each(|v| *v = -*v);
        Ok(solve(factor, &rhs))
    }

    /// Full local vector from boundary and interior parts.
    pub fn combine(&self, u_i: &[f64], u_b: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.interior.len() + self.boundary.len()];
        for (&i, &v) in self.interior.iter().zip(u_i) {
            u[i] = v;
        }
        for (&i, &v) in self.boundary.iter().zip(u_b) {
            u[i] = v;
        }
        u
    }

    /// Dense Schur complement, built column by column.
    pub fn dense_schur(&self) -> Result<DMatrix<f64>> {
        let n = self.boundary.len();
        if n > DENSE_LIMIT {
            return Err(Error::SizeGuard { size: n, limit: DENSE_LIMIT });
        }
        let mut s = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.schur_apply(&e)?;
            e[j] = 0.0;
            s.column_mut(j).copy_from_slice(&col);
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_patch, ZeroData};
    use crate::bspline::TensorSplineSpace;
    use crate::geometry::{Interface, MultiPatch, Orientation, Patch, Side, SideRef};
    use crate::linalg::dot;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn floating_pair(degree: usize, e: usize) -> MultiPatch {
        let mk = |x0: f64| {
            Patch::rectangle([x0, 0.0], [x0 + 1.0, 1.0], degree, 1.0)
                .unwrap()
                .with_space(TensorSplineSpace::uniform(degree, [e, e]).unwrap())
        };
        MultiPatch::without_dirichlet(
            vec![mk(0.0), mk(1.0)],
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
    fn constants_are_in_the_kernel() {
        let sys = assemble_patch(&floating_pair(2, 4), 0, 12.0, &ZeroData).unwrap();
        let ps = PatchSchur::new(&sys).unwrap();
        let ones = vec![1.0; ps.boundary().len()];
        let s = ps.schur_apply(&ones).unwrap();
        assert!(crate::linalg::norm_inf(&s) <= 1e-10 * sys.matrix.max_abs());
        for v in ps.harmonic_extension_e(&ones).unwrap().into_iter().chain(ps.harmonic_extension_a(&ones).unwrap()) {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn symmetric_and_energy_identity() {
        let sys = assemble_patch(&floating_pair(2, 3), 1, 12.0, &ZeroData).unwrap();
        let ps = PatchSchur::new(&sys).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = ps.boundary().len();
        for _ in 0..5 {
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let su = ps.schur_apply(&u).unwrap();
            let sv = ps.schur_apply(&v).unwrap();
            assert!((dot(&su, &v) - dot(&sv, &u)).abs() <= 1e-12 * dot(&su, &u).abs().max(1.0));
            let w = ps.combine(&ps.harmonic_extension_e(&u).unwrap(), &u);
            let e = sys.energy(&w);
            assert!((dot(&su, &u) - e).abs() <= 1e-10 * e.abs());
        }
    }

    #[test]
    fn extension_residual_vanishes_on_interior() {
        let sys = assemble_patch(&floating_pair(3, 4), 0, 20.0, &ZeroData).unwrap();
        let ps = PatchSchur::new(&sys).unwrap();
        let u: Vec<f64> = (0..ps.boundary().len()).map(|i| (i as f64).cos()).collect();
        let w = ps.combine(&ps.harmonic_extension_e(&u).unwrap(), &u);
        let r = sys.matrix.mul_vec(&w);
        let scale = crate::linalg::norm_inf(&u) * sys.matrix.max_abs();
        for &i in ps.interior() {
            assert!(r[i].abs() <= 1e-10 * scale);
        }
        let w = ps.combine(&ps.harmonic_extension_a(&u).unwrap(), &u);
        let r = sys.volume.mul_vec(&w);
        for &i in ps.interior() {
            assert!(r[i].abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn single_patch_extensions_coincide() {
        let patch = Patch::rectangle([0.0, 0.0], [1.0, 1.0], 2, 1.0).unwrap().refined([2, 2]);
        let mp = MultiPatch::new(
            vec![patch],
            vec![],
            vec![SideRef::new(0, Side::West)],
            vec![SideRef::new(0, Side::East), SideRef::new(0, Side::South), SideRef::new(0, Side::North)],
        )
        .unwrap();
        let sys = assemble_patch(&mp, 0, 12.0, &ZeroData).unwrap();
        // treat the east layer as boundary data
        let east: Vec<usize> =
            mp.patch(0).face_indices(Side::East).iter().filter_map(|&i| sys.dofs.own_local(i)).collect();
        let interior: Vec<usize> = (0..sys.dofs.len()).filter(|i| !east.contains(i)).collect();
        let ps = PatchSchur::with_split(&sys, &interior, &east).unwrap();
        let u: Vec<f64> = (0..east.len()).map(|i| i as f64 * 0.3 - 0.4).collect();
        let a = ps.harmonic_extension_a(&u).unwrap();
        let e = ps.harmonic_extension_e(&u).unwrap();
        for (x, y) in a.iter().zip(&e) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn dense_schur_guard_and_shape() {
        let sys = assemble_patch(&floating_pair(1, 2), 0, 6.0, &ZeroData).unwrap();
        let ps = PatchSchur::new(&sys).unwrap();
        let s = ps.dense_schur().unwrap();
        assert_eq!(s.nrows(), ps.boundary().len());
        assert!((&s - s.transpose()).amax() <= 1e-12 * s.amax());
        assert!(ps.schur_apply(&[1.0]).is_err());
    }
}
