//! Patch geometry maps, multipatch topology and mesh metrics.

use std::collections::BTreeMap;

use nalgebra::{Matrix2, Vector2};

use crate::bspline::{KnotVector, TensorSplineSpace};
use crate::error::{Error, Result};

/// Samples per direction used to check the Jacobian sign at construction.
const JACOBIAN_SAMPLES: usize = 10;

/// A side of the parameter square `[0,1]^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    /// `x1 = 0`
    West,
    /// `x1 = 1`
    East,
    /// `x2 = 0`
    South,
    /// `x2 = 1`
    North,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::West, Side::East, Side::South, Side::North];

    /// Parameter direction held fixed on this side.
    #[inline]
    pub fn fixed_dir(self) -> usize {
        match self {
            Side::West | Side::East => 0,
            Side::South | Side::North => 1,
        }
    }

    /// Parameter direction running along this side.
    #[inline]
    pub fn running_dir(self) -> usize {
        1 - self.fixed_dir()
    }

    #[inline]
    pub fn fixed_value(self) -> f64 {
        match self {
            Side::West | Side::South => 0.0,
            Side::East | Side::North => 1.0,
        }
    }

    /// Parameter point at face coordinate `t`.
    #[inline]
    pub fn param_point(self, t: f64) -> [f64; 2] {
        let mut x = [0.0; 2];
        x[self.fixed_dir()] = self.fixed_value();
        x[self.running_dir()] = t;
        x
    }

    /// Outward unit normal in parameter space.
    fn param_normal(self) -> Vector2<f64> {
        match self {
            Side::West => Vector2::new(-1.0, 0.0),
            Side::East => Vector2::new(1.0, 0.0),
            Side::South => Vector2::new(0.0, -1.0),
            Side::North => Vector2::new(0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SideRef {
    pub patch: usize,
    pub side: Side,
}

impl SideRef {
    pub fn new(patch: usize, side: Side) -> Self {
        Self { patch, side }
    }
}

/// Relative parametrization direction of the two sides of an interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    Same,
    Reversed,
}

impl Orientation {
    #[inline]
    pub fn map(self, t: f64) -> f64 {
        match self {
            Orientation::Same => t,
            Orientation::Reversed => 1.0 - t,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Orientation::Same => Orientation::Reversed,
            Orientation::Reversed => Orientation::Same,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interface {
    pub a: SideRef,
    pub b: SideRef,
    pub orientation: Orientation,
}

impl Interface {
    pub fn new(a: SideRef, b: SideRef, orientation: Orientation) -> Self {
        Self { a, b, orientation }
    }
}

/// A neighbor relation seen from one patch: its own side, the neighbor's side and
/// the map from own face coordinate to the neighbor's face coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub interface: usize,
    pub own: SideRef,
    pub other: SideRef,
    pub orientation: Orientation,
}

/// Geometry map value and Jacobian `J[(i, j)] = dG_i / dx_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoEval {
    pub point: Vector2<f64>,
    pub jacobian: Matrix2<f64>,
}

/// Physical data at a point on a patch side.
#[derive(Debug, Clone, Copy)]
pub struct SideFrame {
    pub geo: GeoEval,
    /// `|dG/dt|` along the side.
    pub ds_dt: f64,
    /// Outward unit normal.
    pub normal: Vector2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchMetrics {
    /// Largest mapped element diameter.
    pub h: f64,
    /// Diameter of the control-point set.
    pub diameter: f64,
}

/// A mapped tensor-product patch carrying its own solution space.
#[derive(Debug, Clone)]
pub struct Patch {
    geometry: TensorSplineSpace,
    control_points: Vec<Vector2<f64>>,
    space: TensorSplineSpace,
    alpha: f64,
}

impl Patch {
    pub fn new(
        geometry: TensorSplineSpace,
        control_points: Vec<[f64; 2]>,
        space: TensorSplineSpace,
        alpha: f64,
    ) -> Result<Self> {
        if control_points.len() != geometry.dim() {
            return Err(Error::Dimension { expected: geometry.dim(), got: control_points.len() });
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Parameter(format!("diffusion coefficient must be positive, got {alpha}")));
        }
        let patch = Self {
            geometry,
            control_points: control_points.into_iter().map(|p| Vector2::new(p[0], p[1])).collect(),
            space,
            alpha,
        };
        for i in 0..=JACOBIAN_SAMPLES {
            for j in 0..=JACOBIAN_SAMPLES {
                let x = [i as f64 / JACOBIAN_SAMPLES as f64, j as f64 / JACOBIAN_SAMPLES as f64];
                patch.eval_geometry(x)?;
            }
        }
        Ok(patch)
    }

    /// Patch whose solution space has degree `degree` and the geometry's breakpoints.
    pub fn with_degree(
        geometry: TensorSplineSpace,
        control_points: Vec<[f64; 2]>,
        degree: usize,
        alpha: f64,
    ) -> Result<Self> {
        let space = TensorSplineSpace::new(
            KnotVector::from_breakpoints(degree, &geometry.dir(0).breakpoints())?,
            KnotVector::from_breakpoints(degree, &geometry.dir(1).breakpoints())?,
        );
        Self::new(geometry, control_points, space, alpha)
    }

    /// Bilinear patch through four corners given counter-clockwise from `G(0,0)`.
    pub fn bilinear(corners: [[f64; 2]; 4], degree: usize, alpha: f64) -> Result<Self> {
        let geometry = TensorSplineSpace::uniform(1, [1, 1])?;
        let [c00, c10, c11, c01] = corners;
        Self::with_degree(geometry, vec![c00, c10, c01, c11], degree, alpha)
    }

    /// Axis-aligned rectangle `[x0,x1] x [y0,y1]`.
    pub fn rectangle(lo: [f64; 2], hi: [f64; 2], degree: usize, alpha: f64) -> Result<Self> {
        Self::bilinear([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]], degree, alpha)
    }

    pub fn geometry(&self) -> &TensorSplineSpace {
        &self.geometry
    }

    pub fn control_points(&self) -> &[Vector2<f64>] {
        &self.control_points
    }

    pub fn space(&self) -> &TensorSplineSpace {
        &self.space
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Parameter(format!("diffusion coefficient must be positive, got {alpha}")));
        }
        self.alpha = alpha;
        Ok(self)
    }

    pub fn with_space(mut self, space: TensorSplineSpace) -> Self {
        self.space = space;
        self
    }

    /// Same geometry, solution space bisected `levels` times per direction.
    pub fn refined(&self, levels: [usize; 2]) -> Self {
        Self { space: self.space.uniform_refine(levels), ..self.clone() }
    }

    pub fn num_dofs(&self) -> usize {
        self.space.dim()
    }

    pub fn eval_geometry(&self, x: [f64; 2]) -> Result<GeoEval> {
        let b = self.geometry.eval(x)?;
        let mut point = Vector2::zeros();
        let mut jacobian = Matrix2::zeros();
        for ((&i, &v), g) in b.indices.iter().zip(&b.values).zip(&b.grads) {
            let cp = self.control_points[i];
            point += cp * v;
            for r in 0..2 {
                jacobian[(r, 0)] += cp[r] * g[0];
                jacobian[(r, 1)] += cp[r] * g[1];
            }
        }
        let det = jacobian.determinant();
        if !(det > 0.0) {
            return Err(Error::Geometry(format!("non-positive Jacobian determinant {det:e} at {x:?}")));
        }
        Ok(GeoEval { point, jacobian })
    }

    pub fn side_frame(&self, side: Side, t: f64) -> Result<SideFrame> {
        let geo = self.eval_geometry(side.param_point(t))?;
        let tangent = geo.jacobian.column(side.running_dir()).into_owned();
        let inv_t = geo.jacobian.try_inverse().ok_or_else(|| Error::Geometry("singular Jacobian".into()))?.transpose();
        let n = inv_t * side.param_normal();
        Ok(SideFrame { geo, ds_dt: tangent.norm(), normal: n / n.norm() })
    }

    /// Own basis indices with nonzero trace on `side`, ordered along the side's running direction.
    pub fn face_indices(&self, side: Side) -> Vec<usize> {
        let [m1, m2] = self.space.sizes();
        match side {
            Side::West => (0..m2).map(|j| self.space.index(0, j)).collect(),
            Side::East => (0..m2).map(|j| self.space.index(m1 - 1, j)).collect(),
            Side::South => (0..m1).map(|i| self.space.index(i, 0)).collect(),
            Side::North => (0..m1).map(|i| self.space.index(i, m2 - 1)).collect(),
        }
    }

    /// Univariate solution space along `side`.
    pub fn face_space(&self, side: Side) -> &KnotVector {
        self.space.dir(side.running_dir())
    }

    pub fn metrics(&self) -> Result<PatchMetrics> {
        let b0 = self.space.dir(0).breakpoints();
        let b1 = self.space.dir(1).breakpoints();
        let mut h: f64 = 0.0;
        let mut pts = Vec::with_capacity(9);
        for w0 in b0.windows(2) {
            for w1 in b1.windows(2) {
                pts.clear();
                for a in 0..3 {
                    for b in 0..3 {
                        let x = [w0[0] + 0.5 * a as f64 * (w0[1] - w0[0]), w1[0] + 0.5 * b as f64 * (w1[1] - w1[0])];
                        pts.push(self.eval_geometry(x)?.point);
                    }
                }
                for i in 0..pts.len() {
                    for j in i + 1..pts.len() {
                        h = h.max((pts[i] - pts[j]).norm());
                    }
                }
            }
        }
        let cp = &self.control_points;
        let mut diameter: f64 = 0.0;
        for i in 0..cp.len() {
            for j in i + 1..cp.len() {
                diameter = diameter.max((cp[i] - cp[j]).norm());
            }
        }
        Ok(PatchMetrics { h, diameter })
    }
}

/// `2 a b / (a + b)`
pub fn harmonic_average(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Domain(format!("mesh sizes must be positive, got {a} and {b}")));
    }
    Ok(2.0 * a * b / (a + b))
}

/// `z + z^2`
pub fn mesh_ratio_factor(z: f64) -> f64 {
    z + z * z
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SideKind {
    Interface(usize),
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologyViolation {
    pub interface: usize,
    pub max_distance: f64,
    pub message: String,
}

/// Index sets of one interface as seen from the owning patch `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceDofSet {
    pub neighbor: Neighbor,
    /// Own basis functions with nonzero trace on the face, along the own face coordinate.
    pub own: Vec<usize>,
    /// Neighbor basis functions with nonzero trace on the neighbor's face, along its face coordinate.
    pub neighbor_dofs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceDofSets {
    pub own: Vec<usize>,
    pub faces: Vec<FaceDofSet>,
}

#[derive(Debug, Clone)]
pub struct MultiPatch {
    patches: Vec<Patch>,
    interfaces: Vec<Interface>,
    side_kinds: BTreeMap<SideRef, SideKind>,
}

impl MultiPatch {
    /// Builds and validates the topology; the Dirichlet set must be nonempty.
    pub fn new(
        patches: Vec<Patch>,
        interfaces: Vec<Interface>,
        dirichlet: Vec<SideRef>,
        neumann: Vec<SideRef>,
    ) -> Result<Self> {
        if dirichlet.is_empty() {
            return Err(Error::Topology("the Dirichlet boundary must be nonempty".into()));
        }
        Self::build(patches, interfaces, dirichlet, neumann)
    }

    /// Same as [`MultiPatch::new`] but accepts a pure Neumann (floating) configuration.
    /// The resulting systems are singular; this exists for kernel and consistency checks.
    pub fn without_dirichlet(patches: Vec<Patch>, interfaces: Vec<Interface>, neumann: Vec<SideRef>) -> Result<Self> {
        Self::build(patches, interfaces, Vec::new(), neumann)
    }

    fn build(
        patches: Vec<Patch>,
        interfaces: Vec<Interface>,
        dirichlet: Vec<SideRef>,
        neumann: Vec<SideRef>,
    ) -> Result<Self> {
        let mut side_kinds = BTreeMap::new();
        let mut claim = |s: SideRef, kind: SideKind| -> Result<()> {
            if s.patch >= patches.len() {
                return Err(Error::Topology(format!("side {s:?} refers to a missing patch")));
            }
            if let Some(prev) = side_kinds.insert(s, kind) {
                return Err(Error::Topology(format!("side {s:?} tagged twice ({prev:?} and {kind:?})")));
            }
            Ok(())
        };
        for (i, f) in interfaces.iter().enumerate() {
            if f.a.patch == f.b.patch {
                return Err(Error::Topology(format!("interface {i} connects patch {} to itself", f.a.patch)));
            }
            claim(f.a, SideKind::Interface(i))?;
            claim(f.b, SideKind::Interface(i))?;
        }
        for s in dirichlet {
            claim(s, SideKind::Dirichlet)?;
        }
        for s in neumann {
            claim(s, SideKind::Neumann)?;
        }
        for k in 0..patches.len() {
            for side in Side::ALL {
                if !side_kinds.contains_key(&SideRef::new(k, side)) {
                    return Err(Error::Topology(format!("side {side:?} of patch {k} is not tagged")));
                }
            }
        }
        Ok(Self { patches, interfaces, side_kinds })
    }

    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn patch(&self, k: usize) -> &Patch {
        &self.patches[k]
    }

    pub fn num_patches(&self) -> usize {
        self.patches.len()
    }

    pub fn interfaces(&self) -> &[Interface] {
        &self.interfaces
    }

    pub fn side_kind(&self, s: SideRef) -> SideKind {
        self.side_kinds[&s]
    }

    pub fn sides_of_kind(&self, kind: SideKind) -> Vec<SideRef> {
        self.side_kinds.iter().filter(|(_, &k)| k == kind).map(|(&s, _)| s).collect()
    }

    pub fn is_dirichlet(&self, s: SideRef) -> bool {
        self.side_kind(s) == SideKind::Dirichlet
    }

    /// Neighbors of patch `k` in the order of its sides (West, East, South, North).
    pub fn neighbors(&self, k: usize) -> Vec<Neighbor> {
        Side::ALL
            .iter()
            .filter_map(|&side| {
                let own = SideRef::new(k, side);
                match self.side_kind(own) {
                    SideKind::Interface(i) => Some(self.neighbor_across(i, own)),
                    _ => None,
                }
            })
            .collect()
    }

    fn neighbor_across(&self, interface: usize, own: SideRef) -> Neighbor {
        let f = self.interfaces[interface];
        let other = if f.a == own { f.b } else { f.a };
        Neighbor { interface, own, other, orientation: f.orientation }
    }

    /// Replaces every patch's solution space by its `levels`-fold uniform refinement.
    pub fn refined(&self, levels: usize) -> Self {
        self.refined_per_patch(&vec![[levels, levels]; self.patches.len()])
    }

    pub fn refined_per_patch(&self, levels: &[[usize; 2]]) -> Self {
        assert_eq!(levels.len(), self.patches.len());
        Self {
            patches: self.patches.iter().zip(levels).map(|(p, &l)| p.refined(l)).collect(),
            interfaces: self.interfaces.clone(),
            side_kinds: self.side_kinds.clone(),
        }
    }

    pub fn map_patches(&self, f: impl Fn(usize, &Patch) -> Patch) -> Self {
        Self {
            patches: self.patches.iter().enumerate().map(|(k, p)| f(k, p)).collect(),
            interfaces: self.interfaces.clone(),
            side_kinds: self.side_kinds.clone(),
        }
    }

    /// Checks that each declared interface is geometrically conforming; an empty list means valid.
    pub fn verify_topology(&self, tol: f64) -> Vec<TopologyViolation> {
        const SAMPLES: usize = 11;
        let mut out = Vec::new();
        for (i, f) in self.interfaces.iter().enumerate() {
            let pa = &self.patches[f.a.patch];
            let pb = &self.patches[f.b.patch];
            let diameter = pa.metrics().map(|m| m.diameter).unwrap_or(1.0);
            let mut max_distance: f64 = 0.0;
            let mut failure = None;
            for s in 0..SAMPLES {
                let t = s as f64 / (SAMPLES - 1) as f64;
                let ga = pa.eval_geometry(f.a.side.param_point(t));
                let gb = pb.eval_geometry(f.b.side.param_point(f.orientation.map(t)));
                match (ga, gb) {
                    (Ok(ga), Ok(gb)) => max_distance = max_distance.max((ga.point - gb.point).norm()),
                    (Err(e), _) | (_, Err(e)) => failure = Some(e.to_string()),
                }
            }
            if let Some(msg) = failure {
                out.push(TopologyViolation { interface: i, max_distance: f64::INFINITY, message: msg });
            } else if max_distance > tol * diameter {
                out.push(TopologyViolation {
                    interface: i,
                    max_distance,
                    message: format!("sides {:?} and {:?} are {max_distance:e} apart", f.a, f.b),
                });
            }
        }
        out
    }

    /// Face index sets of one interface side.
    pub fn interface_face_dofs(&self, own: SideRef) -> Result<FaceDofSet> {
        match self.side_kind(own) {
            SideKind::Interface(i) => {
                let neighbor = self.neighbor_across(i, own);
                Ok(FaceDofSet {
                    neighbor,
                    own: self.patches[own.patch].face_indices(own.side),
                    neighbor_dofs: self.patches[neighbor.other.patch].face_indices(neighbor.other.side),
                })
            }
            kind => Err(Error::Topology(format!("side {own:?} is {kind:?}, not an interface"))),
        }
    }

    pub fn face_dof_sets(&self, k: usize) -> Result<FaceDofSets> {
        let faces = self.neighbors(k).iter().map(|n| self.interface_face_dofs(n.own)).collect::<Result<Vec<_>>>()?;
        Ok(FaceDofSets { own: (0..self.patches[k].num_dofs()).collect(), faces })
    }

    pub fn metrics(&self) -> Result<Vec<PatchMetrics>> {
        self.patches.iter().map(Patch::metrics).collect()
    }

    /// `max_k H_k / h_k`
    pub fn max_h_ratio(&self) -> Result<f64> {
        Ok(self.metrics()?.iter().map(|m| m.diameter / m.h).fold(0.0, f64::max))
    }

    /// `max over neighbors (h_l/h_k + (h_l/h_k)^2)`; 0 without interfaces.
    pub fn mesh_ratio_q(&self) -> Result<f64> {
        let m = self.metrics()?;
        let mut q: f64 = 0.0;
        for f in &self.interfaces {
            let (hk, hl) = (m[f.a.patch].h, m[f.b.patch].h);
            q = q.max(mesh_ratio_factor(hl / hk)).max(mesh_ratio_factor(hk / hl));
        }
        Ok(q)
    }
}
