//! Incremental Bowyer-Watson triangulation with ghost triangles.

use std::fmt::Write as _;

use super::predicates::{in_circle_perturbed, orient};
use super::{lex_cmp, Point2};
use crate::error::{Error, Result};

const GHOST: u32 = u32::MAX;
const NONE: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq)]
pub struct Triangulation {
    pub vertices: Vec<Point2>,
    /// Counter-clockwise, smallest index first, sorted.
    pub triangles: Vec<[u32; 3]>,
    /// Pairs (i, j) with i < j, sorted.
    pub edges: Vec<[u32; 2]>,
}

impl Triangulation {
    pub fn edge_segments(&self) -> impl Iterator<Item = super::Segment> + '_ {
        self.edges.iter().map(move |&[i, j]| {
            super::Segment::new(self.vertices[i as usize], self.vertices[j as usize]).normalized()
        })
    }

    /// Line-based dump: header, vertex block, triangle block.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# triangulation v1\n");
        let _ = writeln!(s, "vertices {}", self.vertices.len());
        for p in &self.vertices {
            let _ = writeln!(s, "{:?} {:?}", p.x, p.y);
        }
        let _ = writeln!(s, "triangles {}", self.triangles.len());
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Triangulation> {
        let bad = |m: &str| Error::DegenerateInput(format!("malformed triangulation text: {m}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some("# triangulation v1") {
            return Err(bad("header"));
        }
        let count = |line: Option<&str>, key: &str| -> Result<usize> {
            let line = line.ok_or_else(|| bad(key))?;
            let rest = line.strip_prefix(key).ok_or_else(|| bad(key))?;
            rest.trim().parse().map_err(|_| bad(key))
        };
        let nv = count(lines.next(), "vertices")?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let l = lines.next().ok_or_else(|| bad("vertex"))?;
            let mut it = l.split_whitespace().map(|t| t.parse::<f64>());
            match (it.next(), it.next()) {
                (Some(Ok(x)), Some(Ok(y))) => vertices.push(Point2::new(x, y)),
                _ => return Err(bad("vertex")),
            }
        }
        let nt = count(lines.next(), "triangles")?;
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let l = lines.next().ok_or_else(|| bad("triangle"))?;
            let v: Vec<u32> = l
                .split_whitespace()
                .filter_map(|t| t.parse().ok())
                .collect();
            if v.len() != 3 || v.iter().any(|&i| i as usize >= nv) {
                return Err(bad("triangle"));
            }
            triangles.push([v[0], v[1], v[2]]);
        }
        let edges = edges_of(&triangles);
        Ok(Triangulation {
            vertices,
            triangles,
            edges,
        })
    }
}

fn edges_of(triangles: &[[u32; 3]]) -> Vec<[u32; 2]> {
    let mut e: Vec<u64> = triangles
        .iter()
        .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
        .map(|(a, b)| ((a.min(b) as u64) << 32) | a.max(b) as u64)
        .collect();
    e.sort_unstable();
    e.dedup();
    e.into_iter()
        .map(|k| [(k >> 32) as u32, k as u32])
        .collect()
}

/// Circumcenter and circumradius of a non-degenerate triangle.
pub fn circumcircle(a: Point2, b: Point2, c: Point2) -> (Point2, f64) {
    let (bx, by) = (b.x - a.x, b.y - a.y);
    let (cx, cy) = (c.x - a.x, c.y - a.y);
    let d = 2.0 * (bx * cy - by * cx);
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    let ux = (cy * b2 - by * c2) / d;
    let uy = (bx * c2 - cx * b2) / d;
    (Point2::new(a.x + ux, a.y + uy), ux.hypot(uy))
}

fn hilbert_index(x: u32, y: u32, order: u32) -> u64 {
    let (mut x, mut y) = (x as u64, y as u64);
    let n = 1u64 << order;
    let mut d = 0u64;
    let mut s = n >> 1;
    while s > 0 {
        let rx = u64::from(x & s > 0);
        let ry = u64::from(y & s > 0);
        d += s * s * ((3 * rx) ^ ry);
        if ry == 0 {
            if rx == 1 {
                x = n - 1 - x;
                y = n - 1 - y;
            }
            std::mem::swap(&mut x, &mut y);
        }
        s >>= 1;
    }
    d
}

struct Mesh<'a> {
    pts: &'a [Point2],
    v: Vec<[u32; 3]>,
    n: Vec<[u32; 3]>,
    alive: Vec<bool>,
    free: Vec<u32>,
    mark: Vec<u32>,
    epoch: u32,
    last: u32,
    cavity: Vec<u32>,
    boundary: Vec<(u32, u32, u32)>,
    fresh: Vec<(u32, u32, u32)>,
}

impl<'a> Mesh<'a> {
    fn p(&self, i: u32) -> Point2 {
        self.pts[i as usize]
    }

    fn alloc(&mut self, v: [u32; 3]) -> u32 {
        let v = if v[0] == GHOST {
            [v[1], v[2], GHOST]
        } else if v[1] == GHOST {
            [v[2], v[0], GHOST]
        } else {
            v
        };
        if let Some(t) = self.free.pop() {
            self.v[t as usize] = v;
            self.n[t as usize] = [NONE; 3];
            self.alive[t as usize] = true;
            t
        } else {
            self.v.push(v);
            self.n.push([NONE; 3]);
            self.alive.push(true);
            self.mark.push(0);
            (self.v.len() - 1) as u32
        }
    }

    /// Slot of the edge {x, y} in triangle t (the index of the opposite vertex).
    fn slot(&self, t: u32, x: u32, y: u32) -> usize {
        let v = self.v[t as usize];
        (0..3)
            .find(|&i| {
                let (a, b) = (v[(i + 1) % 3], v[(i + 2) % 3]);
                (a == x && b == y) || (a == y && b == x)
            })
            .expect("edge belongs to triangle")
    }

    fn conflicts(&self, t: u32, q: u32) -> bool {
        let [a, b, c] = self.v[t as usize];
        if c == GHOST {
            let o = orient(self.p(a), self.p(b), self.p(q));
            if o > 0.0 {
                return true;
            }
            // Collinear with the hull edge: conflict only strictly between its
            // endpoints. Lexicographic rank orders collinear points along the line.
            o == 0.0 && a.min(b) < q && q < a.max(b)
        } else {
            in_circle_perturbed(self.p(a), self.p(b), self.p(c), self.p(q), a, b, c, q)
        }
    }

    fn locate(&self, q: u32) -> Option<u32> {
        let mut t = self.last;
        if !self.alive[t as usize] {
            t = (0..self.v.len() as u32).find(|&i| self.alive[i as usize])?;
        }
        if self.v[t as usize][2] == GHOST {
            t = self.n[t as usize][2];
        }
        let qp = self.p(q);
        let cap = 64 + 4 * (self.pts.len() as f64).sqrt() as usize;
        for step in 0..cap {
            let v = self.v[t as usize];
            if v[2] == GHOST {
                return Some(t);
            }
            let start = (step + q as usize) % 3;
            let mut moved = false;
            for k in 0..3 {
                let i = (start + k) % 3;
                let (a, b) = (v[(i + 1) % 3], v[(i + 2) % 3]);
                if orient(self.p(a), self.p(b), qp) < 0.0 {
                    t = self.n[t as usize][i];
                    moved = true;
                    break;
                }
            }
            if !moved {
                return Some(t);
            }
        }
        None
    }

    fn insert(&mut self, q: u32) {
        let seed = match self.locate(q) {
            Some(t) if self.conflicts(t, q) => t,
            _ => (0..self.v.len() as u32)
                .find(|&t| self.alive[t as usize] && self.conflicts(t, q))
                .expect("some triangle conflicts with a new distinct point"),
        };
        self.epoch += 1;
        let ep = self.epoch;
        let mut cavity = std::mem::take(&mut self.cavity);
        let mut boundary = std::mem::take(&mut self.boundary);
        let mut fresh = std::mem::take(&mut self.fresh);
        cavity.clear();
        boundary.clear();
        fresh.clear();
        cavity.push(seed);
        self.mark[seed as usize] = ep;
        // Boundary entries are (from, to, outside triangle).
        let mut i = 0;
        while i < cavity.len() {
            let t = cavity[i];
            i += 1;
            let v = self.v[t as usize];
            for s in 0..3 {
                let nb = self.n[t as usize][s];
                if self.mark[nb as usize] == ep {
                    continue;
                }
                if self.conflicts(nb, q) {
                    self.mark[nb as usize] = ep;
                    cavity.push(nb);
                } else {
                    boundary.push((v[(s + 1) % 3], v[(s + 2) % 3], nb));
                }
            }
        }
        // A neighbor first rejected may later be reached through another cavity
        // triangle and accepted; drop boundary edges that became interior.
        boundary.retain(|&(_, _, nb)| self.mark[nb as usize] != ep);
        for &t in &cavity {
            self.alive[t as usize] = false;
            self.mark[t as usize] = 0;
            self.free.push(t);
        }
        for &(a, b, outside) in &boundary {
            let t = self.alloc([a, b, q]);
            let s = self.slot(t, a, b);
            self.n[t as usize][s] = outside;
            let so = self.slot(outside, a, b);
            self.n[outside as usize][so] = t;
            fresh.push((a, b, t));
        }
        for &(a, b, t) in &fresh {
            // Neighbor across (b, q) starts at b; across (q, a) ends at a.
            let next = fresh.iter().find(|f| f.0 == b).expect("closed boundary").2;
            let prev = fresh.iter().find(|f| f.1 == a).expect("closed boundary").2;
            let s = self.slot(t, b, q);
            self.n[t as usize][s] = next;
            let s = self.slot(t, q, a);
            self.n[t as usize][s] = prev;
        }
        self.last = fresh
            .iter()
            .map(|f| f.2)
            .find(|&t| self.v[t as usize][2] != GHOST)
            .unwrap_or(fresh[0].2);
        self.cavity = cavity;
        self.boundary = boundary;
        self.fresh = fresh;
    }
}

/// Triangles (input indices, counter-clockwise) and edges (each once) in
/// construction order.
pub(crate) struct RawTriangulation {
    pub triangles: Vec<[u32; 3]>,
    pub edges: Vec<[u32; 2]>,
}

/// Delaunay triangulation of `points` with lexicographic symbolic tie-breaking.
/// Exact duplicates collapse onto their first occurrence.
pub fn delaunay_triangulate(points: &[Point2]) -> Result<Triangulation> {
    let raw = triangulate_raw(points)?;
    let mut triangles = raw.triangles;
    for w in triangles.iter_mut() {
        let r = (0..3).min_by_key(|&i| w[i]).unwrap();
        w.rotate_left(r);
    }
    triangles
        .sort_unstable_by_key(|t| ((t[0] as u128) << 64) | ((t[1] as u128) << 32) | t[2] as u128);
    let mut edges: Vec<u64> = raw
        .edges
        .iter()
        .map(|&[a, b]| ((a.min(b) as u64) << 32) | a.max(b) as u64)
        .collect();
    edges.sort_unstable();
    let edges = edges
        .into_iter()
        .map(|k| [(k >> 32) as u32, k as u32])
        .collect();
    Ok(Triangulation {
        vertices: points.to_vec(),
        triangles,
        edges,
    })
}

pub(crate) fn triangulate_raw(points: &[Point2]) -> Result<RawTriangulation> {
    if points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
        return Err(Error::DegenerateInput("non-finite coordinate".into()));
    }
    let mut order: Vec<u32> = (0..points.len() as u32).collect();
    let presorted = points
        .windows(2)
        .all(|w| lex_cmp(&w[0], &w[1]) == std::cmp::Ordering::Less);
    if !presorted {
        order.sort_by(|&i, &j| lex_cmp(&points[i as usize], &points[j as usize]).then(i.cmp(&j)));
        order.dedup_by(|b, a| points[*a as usize] == points[*b as usize]);
    }
    let pts: Vec<Point2> = order.iter().map(|&i| points[i as usize]).collect();
    let n = pts.len();
    if n < 3 {
        return Err(Error::DegenerateInput(format!("{n} distinct points")));
    }
    let third = (2..n)
        .find(|&k| orient(pts[0], pts[1], pts[k]) != 0.0)
        .ok_or_else(|| Error::DegenerateInput("all points collinear".into()))?
        as u32;

    let mut mesh = Mesh {
        pts: &pts,
        v: Vec::new(),
        n: Vec::new(),
        alive: Vec::new(),
        free: Vec::new(),
        mark: Vec::new(),
        epoch: 0,
        last: 0,
        cavity: Vec::new(),
        boundary: Vec::new(),
        fresh: Vec::new(),
    };
    let (a, mut b, mut c) = (0u32, 1u32, third);
    if orient(pts[0], pts[1], pts[third as usize]) < 0.0 {
        std::mem::swap(&mut b, &mut c);
    }
    let t0 = mesh.alloc([a, b, c]);
    let ghosts = [
        mesh.alloc([b, a, GHOST]),
        mesh.alloc([c, b, GHOST]),
        mesh.alloc([a, c, GHOST]),
    ];
    mesh.n[t0 as usize] = [ghosts[1], ghosts[2], ghosts[0]];
    // ghost (x, y, G): slot 2 faces the real triangle, slot 0 is across (y, G), slot 1 across (G, x).
    mesh.n[ghosts[0] as usize] = [ghosts[2], ghosts[1], t0];
    mesh.n[ghosts[1] as usize] = [ghosts[0], ghosts[2], t0];
    mesh.n[ghosts[2] as usize] = [ghosts[1], ghosts[0], t0];
    mesh.last = t0;

    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in &pts {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let sx = if x1 > x0 { 65535.0 / (x1 - x0) } else { 0.0 };
    let sy = if y1 > y0 { 65535.0 / (y1 - y0) } else { 0.0 };
    let mut rest: Vec<(u64, u32)> = (0..n as u32)
        .filter(|&k| k != a && k != b && k != c)
        .map(|k| {
            let p = pts[k as usize];
            let h = hilbert_index(((p.x - x0) * sx) as u32, ((p.y - y0) * sy) as u32, 16);
            (h, k)
        })
        .collect();
    rest.sort_unstable();
    for &(_, k) in &rest {
        mesh.insert(k);
    }

    let mut triangles: Vec<[u32; 3]> = Vec::with_capacity(2 * n);
    let mut edges: Vec<[u32; 2]> = Vec::with_capacity(3 * n);
    for (t, v) in mesh.v.iter().enumerate() {
        if !mesh.alive[t] || v[2] == GHOST {
            continue;
        }
        triangles.push(v.map(|i| order[i as usize]));
        for s in 0..3 {
            let nb = mesh.n[t][s] as usize;
            if mesh.v[nb][2] == GHOST || t < nb {
                edges.push([
                    order[v[(s + 1) % 3] as usize],
                    order[v[(s + 2) % 3] as usize],
                ]);
            }
        }
    }
    Ok(RawTriangulation { triangles, edges })
}
