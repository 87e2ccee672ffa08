use super::{segment_cmp, Point2, Rect, Segment};
use crate::error::{Error, Result};

/// Intersection of a segment with the half-open box. A segment lying on a
/// box edge belongs to the box only for the low sides.
pub fn clip_segment(seg: &Segment, cube: &Rect) -> Option<Segment> {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let axes = [
        (seg.a.x, seg.b.x - seg.a.x, cube.x0, cube.x1),
        (seg.a.y, seg.b.y - seg.a.y, cube.y0, cube.y1),
    ];
    for (p, d, c0, c1) in axes {
        if d == 0.0 {
            if !(c0 <= p && p < c1) {
                return None;
            }
        } else {
            let (mut t0, mut t1) = ((c0 - p) / d, (c1 - p) / d);
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            lo = lo.max(t0);
            hi = hi.min(t1);
        }
    }
    if hi <= lo {
        return None;
    }
    let out = Segment::new(seg.at(lo), seg.at(hi));
    if out.a == out.b {
        None
    } else {
        Some(out.normalized())
    }
}

/// Clipped pieces in lexicographic order and their total length.
pub fn clip_segments_to_cube(edges: &[Segment], cube: &Rect) -> (Vec<Segment>, f64) {
    let mut pieces: Vec<Segment> = edges.iter().filter_map(|e| clip_segment(e, cube)).collect();
    pieces.sort_by(segment_cmp);
    let total = pieces.iter().map(Segment::length).sum();
    (pieces, total)
}

/// Pieces of `seg` in the half-open cells `[bounds[i], bounds[i+1]) x
/// [bounds[j], bounds[j+1])`, reported as `(i, j, piece)`. Each piece equals
/// `clip_segment` against that cell.
pub fn clip_to_grid(seg: &Segment, bounds: &[f64], mut f: impl FnMut(usize, usize, Segment)) {
    let nb = bounds.len() as i64 - 1;
    if nb < 1 || seg.a == seg.b {
        return;
    }
    let cell_of = |v: f64| -> i64 {
        if v < bounds[0] {
            return -1;
        }
        let k = bounds.partition_point(|&b| b <= v) as i64 - 1;
        k.min(nb)
    };
    // Line crossings along one axis as (t, step), in increasing t.
    let crossings = |p: f64, q: f64, out: &mut Vec<(f64, i8, bool)>, is_x: bool| {
        let d = q - p;
        if d > 0.0 {
            let lo = bounds.partition_point(|&b| b <= p);
            let hi = bounds.partition_point(|&b| b <= q);
            out.extend(bounds[lo..hi].iter().map(|&b| ((b - p) / d, 1, is_x)));
        } else if d < 0.0 {
            let lo = bounds.partition_point(|&b| b <= q);
            let hi = bounds.partition_point(|&b| b <= p);
            out.extend(
                bounds[lo..hi]
                    .iter()
                    .rev()
                    .map(|&b| ((b - p) / d, -1, is_x)),
            );
        }
    };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    crossings(seg.a.x, seg.b.x, &mut xs, true);
    crossings(seg.a.y, seg.b.y, &mut ys, false);
    let (mut col, mut row) = (cell_of(seg.a.x), cell_of(seg.a.y));
    let mut emit = |col: i64, row: i64, t0: f64, t1: f64| {
        if t1 > t0 && (0..nb).contains(&col) && (0..nb).contains(&row) {
            let piece = Segment::new(seg.at(t0), seg.at(t1));
            if piece.a != piece.b {
                f(col as usize, row as usize, piece.normalized());
            }
        }
    };
    let (mut a, mut b) = (0, 0);
    let mut prev = 0.0f64;
    while a < xs.len() || b < ys.len() {
        let take_x = b >= ys.len() || (a < xs.len() && xs[a].0 <= ys[b].0);
        let (t, step, is_x) = if take_x { xs[a] } else { ys[b] };
        if take_x {
            a += 1;
        } else {
            b += 1;
        }
        let t = t.clamp(0.0, 1.0);
        emit(col, row, prev, t);
        prev = prev.max(t);
        if is_x {
            col += step as i64;
        } else {
            row += step as i64;
        }
    }
    emit(col, row, prev, 1.0);
}

pub fn point_segment_distance(p: Point2, s: &Segment) -> f64 {
    let (dx, dy) = (s.b.x - s.a.x, s.b.y - s.a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.dist(s.a);
    }
    let t = (((p.x - s.a.x) * dx + (p.y - s.a.y) * dy) / len2).clamp(0.0, 1.0);
    p.dist(Point2::new(s.a.x + t * dx, s.a.y + t * dy))
}

pub fn min_distance_to_segments(p: Point2, segs: &[Segment]) -> Result<f64> {
    if segs.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(segs
        .iter()
        .map(|s| point_segment_distance(p, s))
        .fold(f64::INFINITY, f64::min))
}
