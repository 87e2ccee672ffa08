use crate::geometry::{point_segment_distance, Point2, Rect, Segment};

/// Area of {x in cube : dist(x, segs) <= w0} by the n x n midpoint rule,
/// evaluated through a quadtree that skips blocks of cells whose midpoints
/// are provably all inside or all outside. Returns the area and an error
/// bound: h^2 times the number of cells whose midpoint lies within h/sqrt(2)
/// of the boundary of the region.
pub fn quadrature_area(cube: &Rect, segs: &[Segment], w0: f64, n: usize) -> (f64, f64) {
    if segs.is_empty() || n == 0 {
        return (0.0, 0.0);
    }
    let hx = cube.width() / n as f64;
    let hy = cube.height() / n as f64;
    let q = Quad {
        cube,
        segs,
        w0,
        hx,
        hy,
        tol: 1e-9 * (cube.width() + cube.height() + w0),
    };
    let mut acc = Acc::default();
    q.visit(0, 0, n, &mut acc);
    let cell = hx * hy;
    (acc.inside as f64 * cell, acc.near as f64 * cell)
}

#[derive(Default)]
struct Acc {
    inside: u64,
    near: u64,
}

struct Quad<'a> {
    cube: &'a Rect,
    segs: &'a [Segment],
    w0: f64,
    hx: f64,
    hy: f64,
    tol: f64,
}

impl Quad<'_> {
    fn dist(&self, p: Point2) -> f64 {
        self.segs
            .iter()
            .map(|s| point_segment_distance(p, s))
            .fold(f64::INFINITY, f64::min)
    }

    fn midpoint(&self, i: usize, j: usize) -> Point2 {
        Point2::new(
            self.cube.x0 + (i as f64 + 0.5) * self.hx,
            self.cube.y0 + (j as f64 + 0.5) * self.hy,
        )
    }

    fn visit(&self, i0: usize, j0: usize, size: usize, acc: &mut Acc) {
        if size == 1 {
            let d = self.dist(self.midpoint(i0, j0));
            if d <= self.w0 {
                acc.inside += 1;
            }
            if (d - self.w0).abs() <= 0.5 * self.hx.hypot(self.hy) {
                acc.near += 1;
            }
            return;
        }
        let c = Point2::new(
            self.cube.x0 + (i0 as f64 + size as f64 / 2.0) * self.hx,
            self.cube.y0 + (j0 as f64 + size as f64 / 2.0) * self.hy,
        );
        let half_diag = 0.5 * (size as f64 * self.hx).hypot(size as f64 * self.hy);
        let d = self.dist(c);
        // Boundary cells are still visited individually for the error count.
        let margin = half_diag + 0.5 * self.hx.hypot(self.hy) + self.tol;
        if d + margin < self.w0 {
            acc.inside += (size * size) as u64;
            return;
        }
        if d - margin > self.w0 {
            return;
        }
        let h = size / 2;
        let rest = size - h;
        self.visit(i0, j0, h, acc);
        self.visit(i0 + h, j0, rest, acc);
        self.visit(i0, j0 + h, h, acc);
        self.visit(i0 + h, j0 + h, rest, acc);
    }
}
