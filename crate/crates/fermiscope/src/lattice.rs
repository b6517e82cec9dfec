//! Lattice geometry: periodic site indexing and the measurement/observable
//! geometries (strip pairs, separated point pairs).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LatticeError {
    #[error("lattice must have an even number of sites, got {0}x{1}")]
    OddSiteCount(usize, usize),
    #[error("strip geometry requires a square lattice with L divisible by 4, got {0}x{1}")]
    StripGeometry(usize, usize),
    #[error("displacement component {0} out of range for extent {1}")]
    DisplacementRange(i64, usize),
    #[error("regions overlap at site {0}")]
    OverlappingRegions(usize),
    #[error("site index {index} out of range for {sites} sites")]
    SiteOutOfRange { index: usize, sites: usize },
    #[error("duplicate site index {0} in region")]
    DuplicateSite(usize),
}

/// Periodic 2D lattice extents. Sites are indexed row-major over (x, y):
/// `index = x * ly + y`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub lx: usize,
    pub ly: usize,
}

impl LatticeSpec {
    /// Square L x L lattice, the geometry used by all production campaigns.
    pub fn square(l: usize) -> Result<Self, LatticeError> {
        Self::rect(l, l)
    }

    /// Rectangular lattice; used by the small-system cross-check harness.
    /// Half filling requires an even site count.
    pub fn rect(lx: usize, ly: usize) -> Result<Self, LatticeError> {
        if lx == 0 || ly == 0 || !(lx * ly).is_multiple_of(2) {
            return Err(LatticeError::OddSiteCount(lx, ly));
        }
        Ok(Self { lx, ly })
    }

    pub fn sites(&self) -> usize {
        self.lx * self.ly
    }

    pub fn is_square(&self) -> bool {
        self.lx == self.ly
    }

    /// Linear size of a square lattice.
    pub fn linear(&self) -> usize {
        debug_assert!(self.is_square());
        self.lx
    }

    /// Map (possibly out-of-range) coordinates to the site index, wrapping
    /// both components periodically.
    pub fn site_index(&self, x: i64, y: i64) -> usize {
        let xw = x.rem_euclid(self.lx as i64) as usize;
        let yw = y.rem_euclid(self.ly as i64) as usize;
        xw * self.ly + yw
    }

    /// Inverse of [`site_index`](Self::site_index) on the fundamental domain.
    pub fn coords(&self, index: usize) -> (usize, usize) {
        debug_assert!(index < self.sites());
        (index / self.ly, index % self.ly)
    }

    /// Translate a site by an integer displacement with periodic wrap.
    pub fn translate(&self, index: usize, dx: i64, dy: i64) -> usize {
        let (x, y) = self.coords(index);
        self.site_index(x as i64 + dx, y as i64 + dy)
    }
}

/// Strip orientation: `X` strips select ranges of the x coordinate (spanning
/// all y), `Y` strips select ranges of the y coordinate.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

/// An ordered set of site indices with a geometry tag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    sites: Vec<usize>,
    label: String,
}

impl Region {
    pub fn new(
        mut sites: Vec<usize>,
        label: impl Into<String>,
        spec: &LatticeSpec,
    ) -> Result<Self, LatticeError> {
        sites.sort_unstable();
        let n = spec.sites();
        for pair in sites.windows(2) {
            if pair[0] == pair[1] {
                return Err(LatticeError::DuplicateSite(pair[0]));
            }
        }
        if let Some(&last) = sites.last() {
            if last >= n {
                return Err(LatticeError::SiteOutOfRange { index: last, sites: n });
            }
        }
        Ok(Self { sites, label: label.into() })
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn is_disjoint(&self, other: &Region) -> Result<(), LatticeError> {
        // Both site lists are sorted.
        let (mut i, mut j) = (0, 0);
        while i < self.sites.len() && j < other.sites.len() {
            match self.sites[i].cmp(&other.sites[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    return Err(LatticeError::OverlappingRegions(self.sites[i]))
                }
            }
        }
        Ok(())
    }

    /// Union of two disjoint regions.
    pub fn union(&self, other: &Region) -> Region {
        let mut sites = self.sites.clone();
        sites.extend_from_slice(&other.sites);
        sites.sort_unstable();
        Region { sites, label: format!("{}+{}", self.label, other.label) }
    }
}

/// A pair of sites with their defining displacement (wrapped per axis).
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct PointPair {
    pub x: usize,
    pub x_prime: usize,
    pub displacement: (i64, i64),
}

/// Two parallel strips of size (L/4) x L separated by L/4 on both sides
/// (periodic), translated by `offset` along the strip normal.
///
/// The same construction covers the localized-phase comparison geometry: a
/// 4l x 4l system with l x 4l strips separated by l is `strip_pair` with
/// L = 4l.
pub fn strip_pair(
    spec: &LatticeSpec,
    orientation: Axis,
    offset: i64,
) -> Result<(Region, Region), LatticeError> {
    if !spec.is_square() || !spec.lx.is_multiple_of(4) {
        return Err(LatticeError::StripGeometry(spec.lx, spec.ly));
    }
    let l = spec.lx;
    let w = l / 4;
    let slab = |start: i64| -> Vec<usize> {
        let mut sites = Vec::with_capacity(w * l);
        for u in 0..w as i64 {
            for v in 0..l as i64 {
                let idx = match orientation {
                    Axis::X => spec.site_index(start + u, v),
                    Axis::Y => spec.site_index(v, start + u),
                };
                sites.push(idx);
            }
        }
        sites
    };
    let a = Region::new(slab(offset), "strip_L4", spec)?;
    let b = Region::new(slab(offset + 2 * w as i64), "strip_L4", spec)?;
    a.is_disjoint(&b)?;
    Ok((a, b))
}

/// All N translated pairs (x, x + displacement), one with each site as base
/// point. Callers subsample for spatial averaging.
pub fn point_pairs(
    spec: &LatticeSpec,
    displacement: (i64, i64),
) -> Result<Vec<PointPair>, LatticeError> {
    let (dx, dy) = displacement;
    if dx.unsigned_abs() as usize >= spec.lx {
        return Err(LatticeError::DisplacementRange(dx, spec.lx));
    }
    if dy.unsigned_abs() as usize >= spec.ly {
        return Err(LatticeError::DisplacementRange(dy, spec.ly));
    }
    Ok((0..spec.sites())
        .map(|x| PointPair { x, x_prime: spec.translate(x, dx, dy), displacement })
        .collect())
}
