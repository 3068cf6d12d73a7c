//! Built-in manufactured solutions with analytic data.

use std::f64::consts::PI;

use dgieti::assembly::ProblemData;
use dgieti::geometry::{MultiPatch, SideKind};
use dgieti::norms::ExactSolution;

use crate::CliError;

/// A smooth function together with its Laplacian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Manufactured {
    /// `sin(pi x) sin(pi y)`
    SinSin,
    /// `x`
    LinearX,
    /// `0`
    Zero,
}

impl Manufactured {
    pub const NAMES: [&'static str; 3] = ["sinsin", "linear-x", "zero"];

    pub fn from_name(name: &str) -> Result<Self, CliError> {
        match name {
            "sinsin" => Ok(Self::SinSin),
            "linear-x" => Ok(Self::LinearX),
            "zero" => Ok(Self::Zero),
            other => Err(CliError::Config(format!(
                "unknown manufactured solution '{other}', expected one of {:?}",
                Self::NAMES
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::SinSin => "sinsin",
            Self::LinearX => "linear-x",
            Self::Zero => "zero",
        }
    }

    pub fn laplacian(self, x: [f64; 2]) -> f64 {
        match self {
            Self::SinSin => -2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin(),
            Self::LinearX | Self::Zero => 0.0,
        }
    }

    /// Checks that the solution vanishes on the Dirichlet boundary, sampled along every Dirichlet side.
    pub fn check_dirichlet(self, mp: &MultiPatch) -> Result<(), CliError> {
        for s in mp.sides_of_kind(SideKind::Dirichlet) {
            let patch = mp.patch(s.patch);
            for i in 0..=16 {
                let t = i as f64 / 16.0;
                let x = patch.eval_geometry(s.side.param_point(t))?.point;
                let v = self.value([x[0], x[1]]);
                if v.abs() > 1e-12 {
                    return Err(CliError::Config(format!(
                        "manufactured solution '{}' does not vanish on the Dirichlet side {:?} of patch {} (value {v:e})",
                        self.name(),
                        s.side,
                        s.patch
                    )));
                }
            }
        }
        Ok(())
    }
}

impl ExactSolution for Manufactured {
    fn value(&self, x: [f64; 2]) -> f64 {
        match self {
            Self::SinSin => (PI * x[0]).sin() * (PI * x[1]).sin(),
            Self::LinearX => x[0],
            Self::Zero => 0.0,
        }
    }

    fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        match self {
            Self::SinSin => [PI * (PI * x[0]).cos() * (PI * x[1]).sin(), PI * (PI * x[0]).sin() * (PI * x[1]).cos()],
            Self::LinearX => [1.0, 0.0],
            Self::Zero => [0.0, 0.0],
        }
    }
}

/// Source and Neumann data of a manufactured solution for per-patch diffusion coefficients.
pub struct ManufacturedData {
    pub solution: Manufactured,
    pub alpha: Vec<f64>,
}

impl ManufacturedData {
    pub fn new(solution: Manufactured, mp: &MultiPatch) -> Self {
        Self { solution, alpha: mp.patches().iter().map(|p| p.alpha()).collect() }
    }
}

impl ProblemData for ManufacturedData {
    fn source(&self, patch: usize, x: [f64; 2]) -> f64 {
        -self.alpha[patch] * self.solution.laplacian(x)
    }

    fn neumann(&self, patch: usize, x: [f64; 2], normal: [f64; 2]) -> f64 {
        let g = self.solution.gradient(x);
        self.alpha[patch] * (g[0] * normal[0] + g[1] * normal[1])
    }
}
