//! Brute-force Delaunay validator on dyadic inputs using i128 arithmetic.
//! Points must have coordinates that are integers divided by 2^20.

#![allow(dead_code)]

use coxperc_core::geometry::Point2;

pub const SCALE: f64 = 1048576.0;

pub fn to_int(p: Point2) -> (i128, i128) {
    let (x, y) = (p.x * SCALE, p.y * SCALE);
    assert!(
        x.fract() == 0.0 && y.fract() == 0.0,
        "non-dyadic input {p:?}"
    );
    (x as i128, y as i128)
}

fn det3(m: [[i128; 3]; 3]) -> i128 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn orient(a: (i128, i128), b: (i128, i128), c: (i128, i128)) -> i128 {
    det3([[a.0, a.1, 1], [b.0, b.1, 1], [c.0, c.1, 1]])
}

/// Sign of det [x, y, x^2 + y^2 + eps^rank, 1] over rows a, b, c, d.
pub fn lifted_sign(rows: [(i128, i128); 4], ranks: [usize; 4]) -> i32 {
    let shift = rows[3];
    let r: Vec<(i128, i128)> = rows
        .iter()
        .map(|p| (p.0 - shift.0, p.1 - shift.1))
        .collect();
    let lift = |p: (i128, i128)| p.0 * p.0 + p.1 * p.1;
    let m = [
        [r[0].0, r[0].1, lift(r[0])],
        [r[1].0, r[1].1, lift(r[1])],
        [r[2].0, r[2].1, lift(r[2])],
    ];
    // Translating all rows leaves the 4x4 determinant unchanged; with the
    // last row at the origin it reduces to this 3x3 determinant.
    let d0 = det3(m);
    if d0 != 0 {
        return d0.signum() as i32;
    }
    let mut order = [0usize, 1, 2, 3];
    order.sort_by_key(|&k| ranks[k]);
    for k in order {
        let minor: Vec<[i128; 3]> = (0..4)
            .filter(|&i| i != k)
            .map(|i| [rows[i].0, rows[i].1, 1])
            .collect();
        let sign = if k % 2 == 0 { 1 } else { -1 };
        let cof = sign * det3([minor[0], minor[1], minor[2]]);
        if cof != 0 {
            return cof.signum() as i32;
        }
    }
    0
}

/// Lexicographic ranks of the points (distinct points assumed).
pub fn ranks(pts: &[(i128, i128)]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    idx.sort_by_key(|&i| pts[i]);
    let mut r = vec![0; pts.len()];
    for (k, &i) in idx.iter().enumerate() {
        r[i] = k;
    }
    r
}

/// Number of points on the boundary of the convex hull, collinear ones included,
/// and twice the hull area.
pub fn hull_stats(pts: &[(i128, i128)]) -> (usize, i128) {
    let mut p = pts.to_vec();
    p.sort();
    p.dedup();
    let mut lower: Vec<(i128, i128)> = Vec::new();
    for &q in &p {
        while lower.len() >= 2 && orient(lower[lower.len() - 2], lower[lower.len() - 1], q) < 0 {
            lower.pop();
        }
        lower.push(q);
    }
    let mut upper: Vec<(i128, i128)> = Vec::new();
    for &q in p.iter().rev() {
        while upper.len() >= 2 && orient(upper[upper.len() - 2], upper[upper.len() - 1], q) < 0 {
            upper.pop();
        }
        upper.push(q);
    }
    lower.pop();
    upper.pop();
    let hull: Vec<(i128, i128)> = lower.into_iter().chain(upper).collect();
    let mut area2 = 0i128;
    for i in 0..hull.len() {
        let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
        area2 += a.0 * b.1 - a.1 * b.0;
    }
    (hull.len(), area2)
}

/// Violations of the empty-circumcircle rule plus structural defects.
pub fn count_violations(points: &[Point2], triangles: &[[u32; 3]]) -> usize {
    let all: Vec<(i128, i128)> = points.iter().map(|&p| to_int(p)).collect();
    let mut uniq = all.clone();
    uniq.sort();
    uniq.dedup();
    let rk_u = ranks(&uniq);
    let rank_of = |p: (i128, i128)| rk_u[uniq.binary_search(&p).unwrap()];
    let mut bad = 0;
    let mut area = 0i128;
    let mut directed = std::collections::HashSet::new();
    for t in triangles {
        let [a, b, c] = t.map(|i| all[i as usize]);
        let o = orient(a, b, c);
        if o <= 0 {
            bad += 1;
            continue;
        }
        area += o;
        for e in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            if !directed.insert(e) {
                bad += 1;
            }
        }
        for &d in &uniq {
            if d == a || d == b || d == c {
                continue;
            }
            let s = lifted_sign(
                [a, b, c, d],
                [rank_of(a), rank_of(b), rank_of(c), rank_of(d)],
            );
            if s > 0 {
                bad += 1;
            }
        }
    }
    let (h, hull_area2) = hull_stats(&uniq);
    if area != hull_area2 || triangles.len() + 2 + h != 2 * uniq.len() {
        bad += 1;
    }
    bad
}

#[cfg(test)]
mod self_check {
    use super::*;

    #[test]
    fn inside_is_positive() {
        let s = SCALE as i128;
        let rows = [(0, 0), (s, 0), (0, s), (s / 4, s / 4)];
        assert_eq!(lifted_sign(rows, [0, 1, 2, 3]), 1);
        let rows = [(0, 0), (s, 0), (0, s), (2 * s, 2 * s)];
        assert_eq!(lifted_sign(rows, [0, 1, 2, 3]), -1);
    }
}

/// Up to 30 dyadic points: a jittered cloud mixed with grid points that form
/// exactly cocircular quadruples, occasionally with duplicates.
pub fn random_instance(seed: u64) -> Vec<Point2> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n_free = rng.gen_range(0..=18usize);
    let side = rng.gen_range(2..=4i64);
    let mut pts = Vec::new();
    let cells = (side + 1) * (side + 1);
    let n_grid = rng.gen_range(3..=cells.min(12)) as usize;
    let mut grid: Vec<(i64, i64)> = (0..=side)
        .flat_map(|i| (0..=side).map(move |j| (i, j)))
        .collect();
    for k in 0..n_grid {
        let j = rng.gen_range(k..grid.len());
        grid.swap(k, j);
        pts.push(Point2::new(grid[k].0 as f64, grid[k].1 as f64));
    }
    for _ in 0..n_free {
        let x = rng.gen_range(0..(side as u64) << 20) as f64 / SCALE;
        let y = rng.gen_range(0..(side as u64) << 20) as f64 / SCALE;
        pts.push(Point2::new(x, y));
    }
    if rng.gen_bool(0.2) && !pts.is_empty() {
        let k = rng.gen_range(0..pts.len());
        pts.push(pts[k]);
    }
    pts.truncate(30);
    pts
}
