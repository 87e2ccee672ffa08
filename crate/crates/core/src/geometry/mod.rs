//! Planar primitives, Poisson sampling, Delaunay triangulation and clipping.

mod clip;
mod delaunay;
pub mod predicates;

use std::cmp::Ordering;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Poisson};

pub use clip::{
    clip_segment, clip_segments_to_cube, clip_to_grid, min_distance_to_segments,
    point_segment_distance,
};
pub(crate) use delaunay::triangulate_raw;
pub use delaunay::{circumcircle, delaunay_triangulate, Triangulation};

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Point2 {
        Point2 { x, y }
    }

    pub fn dist(self, o: Point2) -> f64 {
        self.dist2(o).sqrt()
    }

    pub fn dist2(self, o: Point2) -> f64 {
        let (dx, dy) = (self.x - o.x, self.y - o.y);
        dx * dx + dy * dy
    }

    pub fn sup_norm(self) -> f64 {
        self.x.abs().max(self.y.abs())
    }

    pub fn offset(self, dx: f64, dy: f64) -> Point2 {
        Point2::new(self.x + dx, self.y + dy)
    }
}

/// Lexicographic order on (x, y); the canonical vertex order for tie-breaking.
pub fn lex_cmp(a: &Point2, b: &Point2) -> Ordering {
    a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y))
}

/// Axis-aligned box [x0, x1) x [y0, y1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Rect {
        Rect { x0, y0, x1, y1 }
    }

    pub fn square(origin: Point2, side: f64) -> Rect {
        Rect::new(origin.x, origin.y, origin.x + side, origin.y + side)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.x0 && p.x < self.x1 && p.y >= self.y0 && p.y < self.y1
    }

    pub fn contains_closed(&self, p: Point2) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    pub fn expand(&self, r: f64) -> Rect {
        Rect::new(self.x0 - r, self.y0 - r, self.x1 + r, self.y1 + r)
    }

    /// Euclidean distance from p to the closed box.
    pub fn distance(&self, p: Point2) -> f64 {
        let dx = (self.x0 - p.x).max(p.x - self.x1).max(0.0);
        let dy = (self.y0 - p.y).max(p.y - self.y1).max(0.0);
        dx.hypot(dy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub a: Point2,
    pub b: Point2,
}

impl Segment {
    pub const fn new(a: Point2, b: Point2) -> Segment {
        Segment { a, b }
    }

    pub fn length(&self) -> f64 {
        self.a.dist(self.b)
    }

    /// Point at parameter s in [0, 1].
    pub fn at(&self, s: f64) -> Point2 {
        if s <= 0.0 {
            self.a
        } else if s >= 1.0 {
            self.b
        } else {
            Point2::new(
                self.a.x + s * (self.b.x - self.a.x),
                self.a.y + s * (self.b.y - self.a.y),
            )
        }
    }

    /// Same segment with endpoints in lexicographic order.
    pub fn normalized(self) -> Segment {
        if lex_cmp(&self.b, &self.a) == Ordering::Less {
            Segment::new(self.b, self.a)
        } else {
            self
        }
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Segment {
        Segment::new(self.a.offset(dx, dy), self.b.offset(dx, dy))
    }

    pub fn bbox(&self) -> Rect {
        Rect::new(
            self.a.x.min(self.b.x),
            self.a.y.min(self.b.y),
            self.a.x.max(self.b.x),
            self.a.y.max(self.b.y),
        )
    }
}

pub fn segment_cmp(s: &Segment, t: &Segment) -> Ordering {
    lex_cmp(&s.a, &t.a).then_with(|| lex_cmp(&s.b, &t.b))
}

const TWO_POW_M32: f64 = 1.0 / 4294967296.0;

/// Homogeneous Poisson sample in `cube`. Coordinates are the cube origin plus
/// a multiple of 2^-32 of the side, so translating the cube by representable
/// offsets translates the sample exactly.
pub fn sample_poisson_block<R: RngCore>(rng: &mut R, intensity: f64, cube: &Rect) -> Vec<Point2> {
    let mean = intensity * cube.area();
    if !(mean > 0.0) {
        return Vec::new();
    }
    let n = Poisson::new(mean)
        .expect("finite positive mean")
        .sample(rng) as usize;
    let (w, h) = (cube.width(), cube.height());
    (0..n)
        .map(|_| {
            let qx = rng.gen::<u32>() as f64 * TWO_POW_M32;
            let qy = rng.gen::<u32>() as f64 * TWO_POW_M32;
            Point2::new(cube.x0 + w * qx, cube.y0 + h * qy)
        })
        .collect()
}

/// Grid points L Z^2 inside the closed window.
pub fn grid_points(l: f64, window: &Rect) -> Vec<Point2> {
    let range = |lo: f64, hi: f64| {
        let mut a = (lo / l).ceil() as i64;
        while (a as f64) * l < lo {
            a += 1;
        }
        let mut b = (hi / l).floor() as i64;
        while (b as f64) * l > hi {
            b -= 1;
        }
        a..=b
    };
    let mut out = Vec::new();
    for i in range(window.x0, window.x1) {
        for j in range(window.y0, window.y1) {
            out.push(Point2::new(i as f64 * l, j as f64 * l));
        }
    }
    out
}

/// Union of `points` with L Z^2 on the closed window, deduplicated and
/// sorted lexicographically.
pub fn superimpose_grid(points: &[Point2], l: f64, window: &Rect) -> Vec<Point2> {
    let mut all: Vec<Point2> = points.to_vec();
    all.extend(grid_points(l, window));
    all.sort_by(lex_cmp);
    all.dedup();
    all
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{derive_stream, Purpose, StreamKey};

    #[test]
    fn zero_intensity_is_empty() {
        let mut r = derive_stream(&StreamKey::new(1, [0, 0], Purpose::Env, 0));
        assert!(sample_poisson_block(&mut r, 0.0, &Rect::new(0.0, 0.0, 1.0, 1.0)).is_empty());
    }

    #[test]
    fn sampling_is_deterministic_and_inside() {
        let cube = Rect::new(-3.0, 2.0, 2.0, 7.0);
        let key = StreamKey::new(9, [4, 4], Purpose::Env, 1);
        let a = sample_poisson_block(&mut derive_stream(&key), 2.0, &cube);
        let b = sample_poisson_block(&mut derive_stream(&key), 2.0, &cube);
        assert_eq!(a, b);
        assert!(a.iter().all(|p| cube.contains(*p)));
    }

    #[test]
    fn poisson_mean_oracle() {
        let cube = Rect::new(0.0, 0.0, 1.0, 1.0);
        let trials = 100_000u64;
        let mut total = 0usize;
        for t in 0..trials {
            let mut r = derive_stream(&StreamKey::new(5, [0, 0], Purpose::Env, t));
            total += sample_poisson_block(&mut r, 2.0, &cube).len();
        }
        let mean = total as f64 / trials as f64;
        assert!(
            (mean - 2.0).abs() <= 4.0 * (2.0 / trials as f64).sqrt(),
            "mean {mean}"
        );
    }

    #[test]
    fn grid_superposition_counts() {
        assert_eq!(
            superimpose_grid(&[], 1.0, &Rect::new(0.0, 0.0, 2.0, 2.0)).len(),
            9
        );
        let one = [Point2::new(0.5, 0.5)];
        assert_eq!(
            superimpose_grid(&one, 1.0, &Rect::new(0.0, 0.0, 1.0, 1.0)).len(),
            5
        );
        let dup = [Point2::new(1.0, 1.0)];
        assert_eq!(
            superimpose_grid(&dup, 1.0, &Rect::new(0.0, 0.0, 1.0, 1.0)).len(),
            4
        );
    }

    #[test]
    fn grid_is_periodic() {
        let w = Rect::new(0.3, -1.2, 7.9, 4.4);
        let l = 2.5;
        let a = grid_points(l, &w);
        let b = grid_points(l, &Rect::new(w.x0 + l, w.y0 + l, w.x1 + l, w.y1 + l));
        let shifted: Vec<_> = a.iter().map(|p| p.offset(l, l)).collect();
        assert_eq!(shifted, b);
    }
}
