//! JSON run configuration and geometry documents.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dgieti::bspline::{KnotVector, TensorSplineSpace};
use dgieti::generators::{self, BoundaryKind, BoundaryTags};
use dgieti::geometry::{Interface, MultiPatch, Orientation, Patch, Side, SideRef};
use dgieti::ieti::{DEFAULT_MAX_ITERATIONS, DEFAULT_TOL};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideName {
    West,
    East,
    South,
    North,
}

impl From<SideName> for Side {
    fn from(s: SideName) -> Side {
        match s {
            SideName::West => Side::West,
            SideName::East => Side::East,
            SideName::South => Side::South,
            SideName::North => Side::North,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideSpec {
    pub patch: usize,
    pub side: SideName,
}

impl From<SideSpec> for SideRef {
    fn from(s: SideSpec) -> SideRef {
        SideRef::new(s.patch, s.side.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OrientationName {
    #[default]
    Same,
    Reversed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceSpec {
    pub a: SideSpec,
    pub b: SideSpec,
    #[serde(default)]
    pub orientation: OrientationName,
}

/// One patch: geometry knots per direction and control points with the first index running fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub degree: [usize; 2],
    pub knots: [Vec<f64>; 2],
    pub control_points: Vec<[f64; 2]>,
    /// Knots of the solution space; defaults to the run degree on the geometry breakpoints.
    #[serde(default)]
    pub solution_knots: Option<[Vec<f64>; 2]>,
}

/// Explicit multipatch geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryDocument {
    pub patches: Vec<PatchSpec>,
    #[serde(default)]
    pub interfaces: Vec<InterfaceSpec>,
    #[serde(default)]
    pub dirichlet: Vec<SideSpec>,
    #[serde(default)]
    pub neumann: Vec<SideSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryName {
    #[default]
    Dirichlet,
    Neumann,
}

/// Boundary tags of a rectangular grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct BoundarySpec {
    #[serde(default)]
    pub west: BoundaryName,
    #[serde(default)]
    pub east: BoundaryName,
    #[serde(default)]
    pub south: BoundaryName,
    #[serde(default)]
    pub north: BoundaryName,
}

impl From<BoundarySpec> for BoundaryTags {
    fn from(b: BoundarySpec) -> Self {
        let k = |n: BoundaryName| match n {
            BoundaryName::Dirichlet => BoundaryKind::Dirichlet,
            BoundaryName::Neumann => BoundaryKind::Neumann,
        };
        BoundaryTags { west: k(b.west), east: k(b.east), south: k(b.south), north: k(b.north) }
    }
}

fn unit_lo() -> [f64; 2] {
    [0.0, 0.0]
}

fn unit_hi() -> [f64; 2] {
    [1.0, 1.0]
}

/// Where the patches come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum GeometrySpec {
    /// `nx x ny` axis-aligned patches covering `[lo, hi]`.
    Grid {
        nx: usize,
        ny: usize,
        #[serde(default = "unit_lo")]
        lo: [f64; 2],
        #[serde(default = "unit_hi")]
        hi: [f64; 2],
        #[serde(default)]
        boundary: BoundarySpec,
    },
    LShape,
    QuarterAnnulusPair,
    /// A geometry document stored in a separate JSON file, relative to the config file.
    File {
        path: PathBuf,
    },
    Inline(GeometryDocument),
}

/// Diffusion coefficient: one value for all patches or one per patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSpec {
    Uniform(f64),
    PerPatch(Vec<f64>),
}

impl Default for AlphaSpec {
    fn default() -> Self {
        AlphaSpec::Uniform(1.0)
    }
}

impl AlphaSpec {
    pub fn for_patch(&self, k: usize) -> Result<f64, CliError> {
        match self {
            AlphaSpec::Uniform(a) => Ok(*a),
            AlphaSpec::PerPatch(v) => {
                v.get(k).copied().ok_or_else(|| CliError::Config(format!("no diffusion coefficient for patch {k}")))
            }
        }
    }
}

fn default_degree() -> usize {
    2
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_max_iterations() -> usize {
    DEFAULT_MAX_ITERATIONS
}

fn default_manufactured() -> String {
    "sinsin".to_string()
}

fn default_seed() -> u64 {
    2024
}

/// A complete run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometrySpec,
    #[serde(default = "default_degree")]
    pub degree: usize,
    /// Uniform refinement levels applied to every patch.
    #[serde(default)]
    pub refinement: usize,
    /// Additional refinement levels per patch and direction.
    #[serde(default)]
    pub patch_refinement: Option<Vec<[usize; 2]>>,
    /// Refinement levels of the studies.
    #[serde(default)]
    pub levels: Option<Vec<usize>>,
    /// Neighbor meshsize ratios of the ratio study (powers of two).
    #[serde(default)]
    pub ratios: Option<Vec<usize>>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub alpha: AlphaSpec,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_manufactured")]
    pub manufactured: String,
    #[serde(default)]
    pub oracle: bool,
    /// Seed of the random right-hand side used for condition estimates.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Directory against which relative geometry file paths are resolved.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.degree < 1 {
            return Err(CliError::Config("degree must be at least 1".into()));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err(CliError::Config(format!("penalty must be positive, got {d}")));
            }
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(CliError::Config(format!("tolerance must lie in (0, 1), got {}", self.tol)));
        }
        if self.max_iterations == 0 {
            return Err(CliError::Config("max_iterations must be positive".into()));
        }
        if let Some(r) = &self.ratios {
            if r.iter().any(|&x| x == 0 || !x.is_power_of_two()) {
                return Err(CliError::Config("ratios must be powers of two".into()));
            }
        }
        match &self.alpha {
            AlphaSpec::Uniform(a) if !(*a > 0.0) => return Err(CliError::Config("alpha must be positive".into())),
            AlphaSpec::PerPatch(v) if v.iter().any(|a| !(*a > 0.0)) => {
                return Err(CliError::Config("alpha must be positive".into()))
            }
            _ => {}
        }
        Ok(())
    }

    /// Unrefined multipatch domain of degree `self.degree`.
    pub fn base_multipatch(&self) -> Result<MultiPatch, CliError> {
        let mp = match &self.geometry {
            GeometrySpec::Grid { nx, ny, lo, hi, boundary } => {
                generators::rectangle_grid(*nx, *ny, *lo, *hi, self.degree, 1.0, (*boundary).into())?
            }
            GeometrySpec::LShape => generators::l_shape(self.degree, 1.0)?,
            GeometrySpec::QuarterAnnulusPair => generators::quarter_annulus_pair(self.degree, 1.0)?,
            GeometrySpec::File { path } => {
                let full = match &self.base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                let text =
                    std::fs::read_to_string(&full).map_err(|e| CliError::Io(format!("{}: {e}", full.display())))?;
                let doc: GeometryDocument = serde_json::from_str(&text)?;
                build_document(&doc, self.degree)?
            }
            GeometrySpec::Inline(doc) => build_document(doc, self.degree)?,
        };
        let mut alphas = Vec::with_capacity(mp.num_patches());
        for k in 0..mp.num_patches() {
            alphas.push(self.alpha.for_patch(k)?);
        }
        let patches: Vec<Patch> =
            mp.patches().iter().zip(&alphas).map(|(p, &a)| p.clone().with_alpha(a)).collect::<dgieti::Result<_>>()?;
        let mp = mp.map_patches(|k, _| patches[k].clone());
        let violations = mp.verify_topology(1e-10);
        if let Some(v) = violations.first() {
            return Err(CliError::Config(format!("interface {} is not conforming: {}", v.interface, v.message)));
        }
        Ok(mp)
    }

    /// Domain refined by `levels` uniform steps plus the configured per-patch levels.
    pub fn multipatch_at(&self, levels: usize) -> Result<MultiPatch, CliError> {
        let base = self.base_multipatch()?;
        let extra = match &self.patch_refinement {
            Some(v) if v.len() != base.num_patches() => {
                return Err(CliError::Config(format!(
                    "patch_refinement has {} entries for {} patches",
                    v.len(),
                    base.num_patches()
                )))
            }
            Some(v) => v.clone(),
            None => vec![[0, 0]; base.num_patches()],
        };
        let per_patch: Vec<[usize; 2]> = extra.iter().map(|e| [e[0] + levels, e[1] + levels]).collect();
        Ok(base.refined_per_patch(&per_patch))
    }

    pub fn multipatch(&self) -> Result<MultiPatch, CliError> {
        self.multipatch_at(self.refinement)
    }
}

fn build_document(doc: &GeometryDocument, degree: usize) -> Result<MultiPatch, CliError> {
    let mut patches = Vec::with_capacity(doc.patches.len());
    for p in &doc.patches {
        let geometry = TensorSplineSpace::new(
            KnotVector::new(p.degree[0], p.knots[0].clone())?,
            KnotVector::new(p.degree[1], p.knots[1].clone())?,
        );
        let patch = match &p.solution_knots {
            Some([u, v]) => {
                let space =
                    TensorSplineSpace::new(KnotVector::new(degree, u.clone())?, KnotVector::new(degree, v.clone())?);
                Patch::new(geometry, p.control_points.clone(), space, 1.0)?
            }
            None => Patch::with_degree(geometry, p.control_points.clone(), degree, 1.0)?,
        };
        patches.push(patch);
    }
    let interfaces = doc
        .interfaces
        .iter()
        .map(|i| {
            let o = match i.orientation {
                OrientationName::Same => Orientation::Same,
                OrientationName::Reversed => Orientation::Reversed,
            };
            Interface::new(i.a.into(), i.b.into(), o)
        })
        .collect();
    let dirichlet = doc.dirichlet.iter().map(|&s| s.into()).collect::<Vec<SideRef>>();
    let neumann = doc.neumann.iter().map(|&s| s.into()).collect();
    if dirichlet.is_empty() {
        return Err(CliError::Config("the Dirichlet boundary must be nonempty".into()));
    }
    Ok(MultiPatch::new(patches, interfaces, dirichlet, neumann)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_grid_config() {
        let cfg = RunConfig::from_json(r#"{"geometry": {"type": "grid", "nx": 2, "ny": 1}}"#).unwrap();
        assert_eq!(cfg.degree, 2);
        assert_eq!(cfg.tol, DEFAULT_TOL);
        let mp = cfg.multipatch().unwrap();
        assert_eq!(mp.num_patches(), 2);
    }

    #[test]
    fn invalid_values_are_rejected() {
        for bad in [
            r#"{"geometry": {"type": "l-shape"}, "delta": -1}"#,
            r#"{"geometry": {"type": "l-shape"}, "tol": 2}"#,
            r#"{"geometry": {"type": "l-shape"}, "ratios": [3]}"#,
            r#"{"geometry": {"type": "l-shape"}, "alpha": 0}"#,
            r#"{"geometry": {"type": "l-shape"}, "unknown": 1}"#,
            r#"{"geometry": {"type": "l-shape"}, "refinement": -1}"#,
        ] {
            assert!(RunConfig::from_json(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn inline_document_round_trip() {
        let doc = r#"{
            "geometry": {"type": "inline",
                "patches": [
                    {"degree": [1, 1], "knots": [[0,0,1,1],[0,0,1,1]], "control_points": [[0,0],[1,0],[0,1],[1,1]]},
                    {"degree": [1, 1], "knots": [[0,0,1,1],[0,0,1,1]], "control_points": [[1,0],[2,0],[1,1],[2,1]],
                     "solution_knots": [[0,0,0,0.5,1,1,1],[0,0,0,1,1,1]]}
                ],
                "interfaces": [{"a": {"patch": 0, "side": "east"}, "b": {"patch": 1, "side": "west"}}],
                "dirichlet": [{"patch": 0, "side": "west"}, {"patch": 1, "side": "east"}],
                "neumann": [{"patch": 0, "side": "south"}, {"patch": 0, "side": "north"},
                            {"patch": 1, "side": "south"}, {"patch": 1, "side": "north"}]
            },
            "degree": 2,
            "alpha": [1.0, 3.0]
        }"#;
        let cfg = RunConfig::from_json(doc).unwrap();
        let mp = cfg.multipatch().unwrap();
        assert_eq!(mp.patch(1).space().dir(0).num_elements(), 2);
        assert_eq!(mp.patch(1).alpha(), 3.0);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn nonconforming_document_is_rejected() {
        let doc = r#"{
            "geometry": {"type": "inline",
                "patches": [
                    {"degree": [1, 1], "knots": [[0,0,1,1],[0,0,1,1]], "control_points": [[0,0],[1,0],[0,1],[1,1]]},
                    {"degree": [1, 1], "knots": [[0,0,1,1],[0,0,1,1]], "control_points": [[1.5,0],[2,0],[1.5,1],[2,1]]}
                ],
                "interfaces": [{"a": {"patch": 0, "side": "east"}, "b": {"patch": 1, "side": "west"}}],
                "dirichlet": [{"patch": 0, "side": "west"}, {"patch": 1, "side": "east"},
                              {"patch": 0, "side": "south"}, {"patch": 0, "side": "north"},
                              {"patch": 1, "side": "south"}, {"patch": 1, "side": "north"}]
            }
        }"#;
        let cfg = RunConfig::from_json(doc).unwrap();
        assert!(matches!(cfg.multipatch(), Err(CliError::Config(_))));
    }
}
