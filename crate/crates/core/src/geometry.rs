//! Planar geometry computed from pairwise distances only.
//!
//! Triangle areas come from the Cayley-Menger determinant, barycentric
//! weights from ratios of those areas. Coordinates ([`Point2`]) are only used
//! to synthesize distances from scenario ground truth.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Degeneracy threshold on squared area (absolute).
pub const EPS_AREA: f64 = 1e-12;
/// Relative tolerance for convex-hull membership and weight sums.
pub const EPS_HULL: f64 = 1e-9;
/// Relative slack allowed on the triangle inequality.
const EPS_TRIANGLE_INEQUALITY: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("distance {0} is not a finite positive number")]
    InvalidDistance(f64),
    #[error("distances ({0}, {1}, {2}) violate the triangle inequality")]
    TriangleInequality(f64, f64, f64),
    #[error("squared area {0} is negative: distances admit no planar embedding")]
    NegativeSquaredArea(f64),
    #[error("neighbor triangle is degenerate (squared area {0})")]
    DegenerateNeighborTriangle(f64),
    #[error("node is outside the neighbors' convex hull (weight sum {sum})")]
    NotInConvexHull { sum: f64, weights: [f64; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Mul<Point2> for f64 {
    type Output = Point2;
    fn mul(self, rhs: Point2) -> Point2 {
        Point2::new(self * rhs.x, self * rhs.y)
    }
}

/// Euclidean distance between two points.
pub fn distance(p: Point2, q: Point2) -> f64 {
    (p.x - q.x).hypot(p.y - q.y)
}

/// Side lengths of a labeled triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleDistances {
    d_ab: f64,
    d_bc: f64,
    d_ca: f64,
}

impl TriangleDistances {
    pub fn new(d_ab: f64, d_bc: f64, d_ca: f64) -> Result<Self, GeometryError> {
        for d in [d_ab, d_bc, d_ca] {
            if !(d.is_finite() && d > 0.0) {
                return Err(GeometryError::InvalidDistance(d));
            }
        }
        let slack = EPS_TRIANGLE_INEQUALITY * (d_ab + d_bc + d_ca);
        if d_ab > d_bc + d_ca + slack || d_bc > d_ca + d_ab + slack || d_ca > d_ab + d_bc + slack {
            return Err(GeometryError::TriangleInequality(d_ab, d_bc, d_ca));
        }
        Ok(Self { d_ab, d_bc, d_ca })
    }

    pub fn sides(&self) -> [f64; 3] {
        [self.d_ab, self.d_bc, self.d_ca]
    }
}

/// `-det(CM) / 16` for the triangle with the given side lengths.
///
/// The 4x4 Cayley-Menger determinant of a triangle expands to
/// `-(a+b+c)(-a+b+c)(a-b+c)(a+b-c)`; the product is evaluated with sides
/// sorted descending and parenthesized so that no cancellation occurs before
/// the final multiplication. Zero-length sides are allowed here so that
/// sub-triangles touching a coincident vertex evaluate to zero.
fn squared_area(a: f64, b: f64, c: f64) -> f64 {
    let mut s = [a, b, c];
    s.sort_by(|x, y| y.total_cmp(x));
    let [a, b, c] = s;
    (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c)) / 16.0
}

fn area_from_squared(sq: f64) -> Result<f64, GeometryError> {
    if sq < -EPS_AREA {
        Err(GeometryError::NegativeSquaredArea(sq))
    } else {
        Ok(sq.max(0.0).sqrt())
    }
}

pub fn triangle_area_from_distances(d: &TriangleDistances) -> Result<f64, GeometryError> {
    area_from_squared(squared_area(d.d_ab, d.d_bc, d.d_ca))
}

/// The six pairwise distances among node `i` and its candidate neighbors
/// `j, k, l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborDistances {
    pub ij: f64,
    pub ik: f64,
    pub il: f64,
    pub jk: f64,
    pub kl: f64,
    pub lj: f64,
}

impl NeighborDistances {
    /// Distances synthesized from coordinates of `i` and `[j, k, l]`.
    pub fn from_points(i: Point2, [j, k, l]: [Point2; 3]) -> Self {
        Self {
            ij: distance(i, j),
            ik: distance(i, k),
            il: distance(i, l),
            jk: distance(j, k),
            kl: distance(k, l),
            lj: distance(l, j),
        }
    }

    fn validate(&self) -> Result<(), GeometryError> {
        for d in [self.ij, self.ik, self.il] {
            if !(d.is_finite() && d >= 0.0) {
                return Err(GeometryError::InvalidDistance(d));
            }
        }
        for d in [self.jk, self.kl, self.lj] {
            if !(d.is_finite() && d > 0.0) {
                return Err(GeometryError::InvalidDistance(d));
            }
        }
        Ok(())
    }
}

/// Areas of triangles `ikl`, `ilj`, `ijk` (opposite j, k, l) and `jkl`.
fn sub_areas(d: &NeighborDistances) -> Result<([f64; 3], f64), GeometryError> {
    d.validate()?;
    let total_sq = squared_area(d.jk, d.kl, d.lj);
    if total_sq <= EPS_AREA {
        return Err(GeometryError::DegenerateNeighborTriangle(total_sq));
    }
    let total = total_sq.sqrt();
    let opposite_j = area_from_squared(squared_area(d.ik, d.kl, d.il))?;
    let opposite_k = area_from_squared(squared_area(d.il, d.lj, d.ij))?;
    let opposite_l = area_from_squared(squared_area(d.ij, d.jk, d.ik))?;
    Ok(([opposite_j, opposite_k, opposite_l], total))
}

/// Barycentric weights of a node relative to three neighbors, slot-aligned
/// with the neighbor order `j, k, l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarycentricWeights(pub [f64; 3]);

impl BarycentricWeights {
    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// `Σ w_r p_r`.
    pub fn combine(&self, points: [Point2; 3]) -> Point2 {
        self.0
            .iter()
            .zip(points)
            .fold(Point2::default(), |acc, (&w, p)| acc + w * p)
    }
}

/// Area-ratio weights `(S_ikl, S_ilj, S_ijk) / S_jkl`.
///
/// Areas are unsigned, so the weights sum to 1 only when `i` lies in
/// `conv{j, k, l}`; otherwise [`GeometryError::NotInConvexHull`] carries the
/// computed weights.
pub fn barycentric_from_distances(
    d: &NeighborDistances,
) -> Result<BarycentricWeights, GeometryError> {
    let (sub, total) = sub_areas(d)?;
    let weights = sub.map(|s| s / total);
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > EPS_HULL {
        return Err(GeometryError::NotInConvexHull { sum, weights });
    }
    Ok(BarycentricWeights(weights))
}

/// Boundary points count as inside.
pub fn is_in_convex_hull(d: &NeighborDistances) -> Result<bool, GeometryError> {
    let (sub, total) = sub_areas(d)?;
    let sum: f64 = sub.iter().sum();
    Ok((sum - total).abs() <= EPS_HULL * total)
}
