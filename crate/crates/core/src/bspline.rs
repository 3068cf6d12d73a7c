//! Univariate B-spline bases on open knot vectors over `[0, 1]` and their tensor products.
//!
//! Indices are zero-based throughout: basis function `i` is supported on
//! `[knots[i], knots[i + degree + 1]]`, and `find_span` returns the `s` with
//! `knots[s] <= x < knots[s + 1]`, so the active functions at `x` are `s - p ..= s`.

use crate::error::{Error, Result};

/// Knots closer than this are considered equal when extracting breakpoints.
const KNOT_TOL: f64 = 1e-12;

/// An open (clamped) knot vector on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    degree: usize,
    knots: Vec<f64>,
}

/// Values and first derivatives of the `degree + 1` active functions at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisDerivs {
    pub first: usize,
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
}

impl KnotVector {
    pub fn new(degree: usize, knots: Vec<f64>) -> Result<Self> {
        if degree < 1 {
            return Err(Error::KnotVector("degree must be at least 1".into()));
        }
        let p = degree;
        if knots.len() < 2 * (p + 1) {
            return Err(Error::KnotVector(format!(
                "{} knots cannot hold {} basis functions of degree {p}",
                knots.len(),
                p + 1
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::KnotVector("non-finite knot".into()));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::KnotVector("knots must be nondecreasing".into()));
        }
        let n = knots.len();
        if knots[..=p].iter().any(|&k| k != 0.0) || knots[n - p - 1..].iter().any(|&k| k != 1.0) {
            return Err(Error::KnotVector(format!(
                "knot vector must be open on [0,1] with end multiplicity {}",
                p + 1
            )));
        }
        // interior multiplicity <= p
        let interior = &knots[p + 1..n - p - 1];
        let mut run = 0;
        for (i, &k) in interior.iter().enumerate() {
            if k <= 0.0 || k >= 1.0 {
                return Err(Error::KnotVector(format!("interior knot {k} outside (0,1)")));
            }
            run = if i > 0 && interior[i - 1] == k { run + 1 } else { 1 };
            if run > p {
                return Err(Error::KnotVector(format!("interior knot {k} has multiplicity above degree {p}")));
            }
        }
        Ok(Self { degree, knots })
    }

    /// Uniform open knot vector with `elements` equal spans.
    pub fn uniform(degree: usize, elements: usize) -> Result<Self> {
        if elements == 0 {
            return Err(Error::KnotVector("need at least one element".into()));
        }
        let breaks: Vec<f64> = (0..=elements).map(|i| i as f64 / elements as f64).collect();
        Self::from_breakpoints(degree, &breaks)
    }

    /// Open knot vector with simple interior knots at the given breakpoints (which must include 0 and 1).
    pub fn from_breakpoints(degree: usize, breakpoints: &[f64]) -> Result<Self> {
        let mut knots = vec![0.0; degree + 1];
        let inner = breakpoints.iter().copied().filter(|&b| b > 0.0 && b < 1.0);
        knots.extend(inner);
        knots.extend(std::iter::repeat_n(1.0, degree + 1));
        Self::new(degree, knots)
    }

    #[inline]
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    #[inline]
    pub fn num_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Distinct knot values, ascending, including 0 and 1.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for &k in &self.knots {
            if out.last().is_none_or(|&l| k - l > KNOT_TOL) {
                out.push(k);
            }
        }
        out
    }

    pub fn num_elements(&self) -> usize {
        self.breakpoints().len() - 1
    }

    /// Largest knot span.
    pub fn mesh_size(&self) -> f64 {
        self.breakpoints().windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn find_span(&self, x: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("parameter {x} outside [0,1]")));
        }
        let p = self.degree;
        let m = self.num_basis();
        if x >= self.knots[m] {
            return Ok(m - 1);
        }
        // largest s in [p, m-1] with knots[s] <= x
        let (mut lo, mut hi) = (p, m);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.knots[mid] <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }

    /// Cox-de Boor triangle for the `degree + 1` functions of degree `q <= p` active in `span`.
    fn basis_in_span(&self, span: usize, x: f64, q: usize) -> Vec<f64> {
        let u = &self.knots;
        let mut n = vec![0.0; q + 1];
        let mut left = vec![0.0; q + 1];
        let mut right = vec![0.0; q + 1];
        n[0] = 1.0;
        for j in 1..=q {
            left[j] = x - u[span + 1 - j];
            right[j] = u[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom != 0.0 { n[r] / denom } else { 0.0 };
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        n
    }

    /// Returns the index of the first active function and the `degree + 1` active values.
    pub fn eval_basis(&self, x: f64) -> Result<(usize, Vec<f64>)> {
        let s = self.find_span(x)?;
        Ok((s - self.degree, self.basis_in_span(s, x, self.degree)))
    }

    pub fn eval_basis_deriv(&self, x: f64) -> Result<BasisDerivs> {
        let p = self.degree;
        let s = self.find_span(x)?;
        let values = self.basis_in_span(s, x, p);
        // lower-degree functions N_{s-p+1..=s, p-1}
        let lower = self.basis_in_span(s, x, p - 1);
        let u = &self.knots;
        let pf = p as f64;
        let derivs = (0..=p)
            .map(|a| {
                let i = s - p + a;
                let left = if a > 0 && u[i + p] != u[i] { lower[a - 1] / (u[i + p] - u[i]) } else { 0.0 };
                let right = if a < p && u[i + p + 1] != u[i + 1] { lower[a] / (u[i + p + 1] - u[i + 1]) } else { 0.0 };
                pf * (left - right)
            })
            .collect();
        Ok(BasisDerivs { first: s - p, values, derivs })
    }

    /// Bisects every nonempty span `levels` times.
    pub fn uniform_refine(&self, levels: usize) -> KnotVector {
        let mut kv = self.clone();
        for _ in 0..levels {
            let b = kv.breakpoints();
            let mids: Vec<f64> = b.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
            kv = kv.insert_knots(&mids);
        }
        kv
    }

    /// Inserts the given interior knots (each once).
    pub fn insert_knots(&self, new: &[f64]) -> KnotVector {
        let mut knots = self.knots.clone();
        knots.extend(new.iter().copied().filter(|&k| k > 0.0 && k < 1.0));
        knots.sort_by(f64::total_cmp);
        KnotVector { degree: self.degree, knots }
    }

    /// Greville abscissae (knot averages).
    pub fn greville(&self) -> Vec<f64> {
        let p = self.degree;
        (0..self.num_basis()).map(|i| self.knots[i + 1..=i + p].iter().sum::<f64>() / p as f64).collect()
    }

    /// Parameter interval on which basis function `i` is nonzero.
    pub fn support(&self, i: usize) -> (f64, f64) {
        (self.knots[i], self.knots[i + self.degree + 1])
    }
}

/// Tensor product of two univariate spaces; multi-index `(i1, i2)` maps to `i1 + M1 * i2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSplineSpace {
    dirs: [KnotVector; 2],
}

/// Nonzero tensor-product basis functions at a point, with parameter-space gradients.
#[derive(Debug, Clone, Default)]
pub struct TensorBasis {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
}

impl TensorSplineSpace {
    pub fn new(u: KnotVector, v: KnotVector) -> Self {
        Self { dirs: [u, v] }
    }

    pub fn uniform(degree: usize, elements: [usize; 2]) -> Result<Self> {
        Ok(Self::new(KnotVector::uniform(degree, elements[0])?, KnotVector::uniform(degree, elements[1])?))
    }

    #[inline]
    pub fn dir(&self, d: usize) -> &KnotVector {
        &self.dirs[d]
    }

    pub fn sizes(&self) -> [usize; 2] {
        [self.dirs[0].num_basis(), self.dirs[1].num_basis()]
    }

    pub fn dim(&self) -> usize {
        self.dirs[0].num_basis() * self.dirs[1].num_basis()
    }

    #[inline]
    pub fn index(&self, i1: usize, i2: usize) -> usize {
        i1 + self.dirs[0].num_basis() * i2
    }

    #[inline]
    pub fn multi_index(&self, i: usize) -> [usize; 2] {
        let m1 = self.dirs[0].num_basis();
        [i % m1, i / m1]
    }

    /// Parameter meshsize: the largest knot span over both directions.
    pub fn mesh_size(&self) -> f64 {
        self.dirs[0].mesh_size().max(self.dirs[1].mesh_size())
    }

    pub fn uniform_refine(&self, levels: [usize; 2]) -> Self {
        Self::new(self.dirs[0].uniform_refine(levels[0]), self.dirs[1].uniform_refine(levels[1]))
    }

    pub fn eval(&self, x: [f64; 2]) -> Result<TensorBasis> {
        let bu = self.dirs[0].eval_basis_deriv(x[0])?;
        let bv = self.dirs[1].eval_basis_deriv(x[1])?;
        let n = bu.values.len() * bv.values.len();
        let mut out =
            TensorBasis { indices: Vec::with_capacity(n), values: Vec::with_capacity(n), grads: Vec::with_capacity(n) };
        for (b, (&vv, &dv)) in bv.values.iter().zip(&bv.derivs).enumerate() {
            for (a, (&vu, &du)) in bu.values.iter().zip(&bu.derivs).enumerate() {
                out.indices.push(self.index(bu.first + a, bv.first + b));
                out.values.push(vu * vv);
                out.grads.push([du * vv, vu * dv]);
            }
        }
        Ok(out)
    }

    /// Value and parameter gradient of the spline with the given coefficients.
    pub fn tensor_eval(&self, coeffs: &[f64], x: [f64; 2]) -> Result<(f64, [f64; 2])> {
        if coeffs.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: coeffs.len() });
        }
        let b = self.eval(x)?;
        let mut val = 0.0;
        let mut grad = [0.0; 2];
        for ((&i, &v), g) in b.indices.iter().zip(&b.values).zip(&b.grads) {
            val += coeffs[i] * v;
            grad[0] += coeffs[i] * g[0];
            grad[1] += coeffs[i] * g[1];
        }
        Ok((val, grad))
    }
}
