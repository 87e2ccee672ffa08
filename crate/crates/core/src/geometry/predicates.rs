//! Exact orientation and in-circle tests with symbolic tie-breaking.
//!
//! The in-circle test is perturbed by lifting the k-th point (in
//! lexicographic rank) to |p|^2 + eps^k. An exact zero is resolved by the
//! cofactor of the lowest-rank point whose cofactor does not vanish.

use robust::Coord;

use super::Point2;

#[inline]
fn c(p: Point2) -> Coord<f64> {
    Coord { x: p.x, y: p.y }
}

/// Positive iff a, b, c are counter-clockwise. Exact sign.
#[inline]
pub fn orient(a: Point2, b: Point2, p: Point2) -> f64 {
    robust::orient2d(c(a), c(b), c(p))
}

/// Positive iff d is strictly inside the circle through counter-clockwise a, b, c.
#[inline]
pub fn incircle(a: Point2, b: Point2, cc: Point2, d: Point2) -> f64 {
    robust::incircle(c(a), c(b), c(cc), c(d))
}

/// Perturbed in-circle decision for counter-clockwise (a, b, c) and query d.
/// `r*` are the lexicographic ranks (distinct). Never ties.
pub fn in_circle_perturbed(
    a: Point2,
    b: Point2,
    cc: Point2,
    d: Point2,
    ra: u32,
    rb: u32,
    rc: u32,
    rd: u32,
) -> bool {
    let det = incircle(a, b, cc, d);
    if det != 0.0 {
        return det > 0.0;
    }
    let mut ranked = [(ra, 0u8), (rb, 1), (rc, 2), (rd, 3)];
    ranked.sort_unstable();
    for &(_, who) in &ranked {
        let cof = match who {
            0 => orient(b, cc, d),
            1 => -orient(a, cc, d),
            2 => orient(a, b, d),
            _ => -orient(a, b, cc),
        };
        if cof != 0.0 {
            return cof > 0.0;
        }
    }
    false
}
