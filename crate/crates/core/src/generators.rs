//! Ready-made multipatch domains.
//!
//! Every generator returns patches whose solution space is a single element of the
//! requested degree; refine with [`MultiPatch::refined`] or
//! [`MultiPatch::refined_per_patch`].

use crate::bspline::{KnotVector, TensorSplineSpace};
use crate::error::Result;
use crate::geometry::{Interface, MultiPatch, Orientation, Patch, Side, SideRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryKind {
    #[default]
    Dirichlet,
    Neumann,
}

/// Boundary condition per side of a rectangular domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BoundaryTags {
    pub west: BoundaryKind,
    pub east: BoundaryKind,
    pub south: BoundaryKind,
    pub north: BoundaryKind,
}

impl BoundaryTags {
    pub fn dirichlet() -> Self {
        Self::default()
    }

    pub fn get(&self, side: Side) -> BoundaryKind {
        match side {
            Side::West => self.west,
            Side::East => self.east,
            Side::South => self.south,
            Side::North => self.north,
        }
    }
}

fn split(tags: impl IntoIterator<Item = (SideRef, BoundaryKind)>) -> (Vec<SideRef>, Vec<SideRef>) {
    let mut dirichlet = Vec::new();
    let mut neumann = Vec::new();
    for (s, kind) in tags {
        match kind {
            BoundaryKind::Dirichlet => dirichlet.push(s),
            BoundaryKind::Neumann => neumann.push(s),
        }
    }
    (dirichlet, neumann)
}

/// `nx x ny` grid of axis-aligned patches covering `[lo, hi]`; patch `(i, j)` has index `i + nx j`.
pub fn rectangle_grid(
    nx: usize,
    ny: usize,
    lo: [f64; 2],
    hi: [f64; 2],
    degree: usize,
    alpha: f64,
    tags: BoundaryTags,
) -> Result<MultiPatch> {
    let dx = (hi[0] - lo[0]) / nx as f64;
    let dy = (hi[1] - lo[1]) / ny as f64;
    let mut patches = Vec::with_capacity(nx * ny);
    let mut interfaces = Vec::new();
    let mut outer = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let k = i + nx * j;
            let x0 = [lo[0] + i as f64 * dx, lo[1] + j as f64 * dy];
            patches.push(Patch::rectangle(x0, [x0[0] + dx, x0[1] + dy], degree, alpha)?);
            if i + 1 < nx {
                interfaces.push(Interface::new(
                    SideRef::new(k, Side::East),
                    SideRef::new(k + 1, Side::West),
                    Orientation::Same,
                ));
            }
            if j + 1 < ny {
                interfaces.push(Interface::new(
                    SideRef::new(k, Side::North),
                    SideRef::new(k + nx, Side::South),
                    Orientation::Same,
                ));
            }
            if i == 0 {
                outer.push((SideRef::new(k, Side::West), tags.west));
            }
            if i + 1 == nx {
                outer.push((SideRef::new(k, Side::East), tags.east));
            }
            if j == 0 {
                outer.push((SideRef::new(k, Side::South), tags.south));
            }
            if j + 1 == ny {
                outer.push((SideRef::new(k, Side::North), tags.north));
            }
        }
    }
    let (dirichlet, neumann) = split(outer);
    if dirichlet.is_empty() {
        MultiPatch::without_dirichlet(patches, interfaces, neumann)
    } else {
        MultiPatch::new(patches, interfaces, dirichlet, neumann)
    }
}

/// `n x m` grid on the unit square with Dirichlet conditions everywhere.
pub fn unit_square_grid(n: usize, m: usize, degree: usize, alpha: f64) -> Result<MultiPatch> {
    rectangle_grid(n, m, [0.0, 0.0], [1.0, 1.0], degree, alpha, BoundaryTags::dirichlet())
}

/// L-shaped domain `[0,2]x[0,1] u [0,1]x[0,2]` split along the diagonal through the reentrant corner.
pub fn l_shape(degree: usize, alpha: f64) -> Result<MultiPatch> {
    let a = Patch::bilinear([[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0]], degree, alpha)?;
    let b = Patch::bilinear([[0.0, 0.0], [1.0, 1.0], [1.0, 2.0], [0.0, 2.0]], degree, alpha)?;
    let interfaces = vec![Interface::new(SideRef::new(0, Side::West), SideRef::new(1, Side::South), Orientation::Same)];
    let dirichlet = vec![
        SideRef::new(0, Side::South),
        SideRef::new(0, Side::East),
        SideRef::new(0, Side::North),
        SideRef::new(1, Side::East),
        SideRef::new(1, Side::North),
        SideRef::new(1, Side::West),
    ];
    MultiPatch::new(vec![a, b], interfaces, dirichlet, vec![])
}

/// Half annulus `1 <= r <= 2`, `y >= 0`, as two quarter annuli with quadratic (non-rational) arcs.
pub fn quarter_annulus_pair(degree: usize, alpha: f64) -> Result<MultiPatch> {
    let geometry = TensorSplineSpace::new(KnotVector::uniform(1, 1)?, KnotVector::uniform(2, 1)?);
    let first = vec![[1.0, 0.0], [2.0, 0.0], [1.0, 1.0], [2.0, 2.0], [0.0, 1.0], [0.0, 2.0]];
    let second: Vec<[f64; 2]> = first.iter().map(|&[x, y]| [-y, x]).collect();
    let p0 = Patch::with_degree(geometry.clone(), first, degree, alpha)?;
    let p1 = Patch::with_degree(geometry, second, degree, alpha)?;
    let interfaces =
        vec![Interface::new(SideRef::new(0, Side::North), SideRef::new(1, Side::South), Orientation::Same)];
    let dirichlet = vec![
        SideRef::new(0, Side::West),
        SideRef::new(0, Side::East),
        SideRef::new(0, Side::South),
        SideRef::new(1, Side::West),
        SideRef::new(1, Side::East),
        SideRef::new(1, Side::North),
    ];
    MultiPatch::new(vec![p0, p1], interfaces, dirichlet, vec![])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_domains_are_conforming() {
        for mp in
            [unit_square_grid(3, 2, 2, 1.0).unwrap(), l_shape(2, 1.0).unwrap(), quarter_annulus_pair(2, 1.0).unwrap()]
        {
            assert!(mp.verify_topology(1e-12).is_empty());
        }
    }

    #[test]
    fn grid_counts() {
        let mp = unit_square_grid(4, 4, 2, 1.0).unwrap();
        assert_eq!(mp.num_patches(), 16);
        assert_eq!(mp.interfaces().len(), 24);
        let tags = BoundaryTags { south: BoundaryKind::Neumann, north: BoundaryKind::Neumann, ..Default::default() };
        let strip = rectangle_grid(2, 1, [0.0, 0.0], [1.0, 1.0], 1, 1.0, tags).unwrap();
        assert_eq!(strip.sides_of_kind(crate::geometry::SideKind::Neumann).len(), 4);
    }
}
