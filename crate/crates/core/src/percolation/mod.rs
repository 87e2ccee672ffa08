//! Clusters of the ball union, crossing events and the block exploration.

mod explore;

use crate::environment::{EnvBuilder, Environment, YField};
use crate::error::{Error, Result};
use crate::geometry::{Point2, Rect};
use crate::lattice::{BlockRange, ValidatedParams};
use crate::sampler::{realize, sample_driver_trial, CoxConfiguration, Driver};

pub use explore::{explore, explore_any_m, Exploration};

/// Disjoint sets with union by size and path halving.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> UnionFind {
        UnionFind {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let g = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = g;
            x = g;
        }
        x
    }

    /// Root of the merged set.
    pub fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return ra;
        }
        let (big, small) = if self.size[ra as usize] >= self.size[rb as usize] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[small as usize] = big;
        self.size[big as usize] += self.size[small as usize];
        big
    }
}

/// Points bucketed into a dense grid of square cells of side at least `cell`.
pub(crate) struct CellIndex {
    cell: f64,
    x0: f64,
    y0: f64,
    cols: usize,
    rows: usize,
    /// CSR start of each cell, row-major, plus a final sentinel.
    start: Vec<u32>,
    order: Vec<u32>,
}

impl CellIndex {
    pub(crate) fn new(points: &[Point2], cell: f64) -> CellIndex {
        let (mut x0, mut y0, mut x1, mut y1) = (
            f64::INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
        );
        for p in points {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        if points.is_empty() {
            (x0, y0, x1, y1) = (0.0, 0.0, 0.0, 0.0);
        }
        let limit = (4 * points.len()).max(1 << 16) as f64;
        let mut cell = cell;
        if ((x1 - x0) / cell + 1.0) * ((y1 - y0) / cell + 1.0) > limit {
            cell = ((x1 - x0 + cell) * (y1 - y0 + cell) / limit)
                .sqrt()
                .max(cell);
        }
        let cols = ((x1 - x0) / cell).floor() as usize + 1;
        let rows = ((y1 - y0) / cell).floor() as usize + 1;
        let mut idx = CellIndex {
            cell,
            x0,
            y0,
            cols,
            rows,
            start: vec![0; cols * rows + 1],
            order: Vec::new(),
        };
        let cells: Vec<usize> = points.iter().map(|p| idx.slot(*p)).collect();
        for &c in &cells {
            idx.start[c + 1] += 1;
        }
        for c in 0..cols * rows {
            idx.start[c + 1] += idx.start[c];
        }
        let mut fill = idx.start.clone();
        idx.order = vec![0; points.len()];
        for (i, &c) in cells.iter().enumerate() {
            idx.order[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        idx
    }

    fn coord(&self, v: f64, lo: f64) -> i64 {
        ((v - lo) / self.cell).floor() as i64
    }

    fn slot(&self, p: Point2) -> usize {
        let cx = self.coord(p.x, self.x0).clamp(0, self.cols as i64 - 1) as usize;
        let cy = self.coord(p.y, self.y0).clamp(0, self.rows as i64 - 1) as usize;
        cy * self.cols + cx
    }

    /// Indices of points in the 3 x 3 cells around p.
    pub(crate) fn for_each_near(&self, p: Point2, mut f: impl FnMut(u32)) {
        let (cx, cy) = (self.coord(p.x, self.x0), self.coord(p.y, self.y0));
        let c0 = (cx - 1).max(0);
        let c1 = (cx + 1).min(self.cols as i64 - 1);
        if c0 > c1 {
            return;
        }
        for row in (cy - 1).max(0)..=(cy + 1).min(self.rows as i64 - 1) {
            let base = row as usize * self.cols;
            let lo = self.start[base + c0 as usize] as usize;
            let hi = self.start[base + c1 as usize + 1] as usize;
            for &i in &self.order[lo..hi] {
                f(i);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterLabels {
    /// Cluster id per point, numbered by first appearance.
    pub labels: Vec<u32>,
    pub n_clusters: usize,
}

fn link(points: &[Point2], r: f64) -> UnionFind {
    let mut uf = UnionFind::new(points.len());
    let reach2 = 4.0 * r * r;
    let idx = CellIndex::new(points, 2.0 * r);
    for (i, &p) in points.iter().enumerate() {
        idx.for_each_near(p, |j| {
            if (j as usize) > i && p.dist2(points[j as usize]) <= reach2 {
                uf.union(i as u32, j);
            }
        });
    }
    uf
}

/// Connected components of the union of closed balls of radius r.
pub fn build_clusters(config: &CoxConfiguration, ball_radius: f64) -> ClusterLabels {
    let pts: Vec<Point2> = config.points.iter().map(|q| q.p).collect();
    clusters_of_points(&pts, ball_radius)
}

pub fn clusters_of_points(pts: &[Point2], r: f64) -> ClusterLabels {
    let mut uf = link(pts, r);
    let mut id = vec![u32::MAX; pts.len()];
    let mut labels = Vec::with_capacity(pts.len());
    let mut next = 0u32;
    for i in 0..pts.len() as u32 {
        let root = uf.find(i) as usize;
        if id[root] == u32::MAX {
            id[root] = next;
            next += 1;
        }
        labels.push(id[root]);
    }
    ClusterLabels {
        labels,
        n_clusters: next as usize,
    }
}

/// Target sets for connection events.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RegionSpec {
    /// Lambda_a = [-a, a]^2.
    Box { a: f64 },
    /// Lambda_{a-M} minus Lambda_{a-2M}.
    Annulus { a: f64, m: f64 },
}

impl RegionSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RegionSpec::Box { a } if a < 0.0 => Err(Error::Range(format!("box half-width {a}"))),
            RegionSpec::Annulus { a, m } if !(a > 2.0 * m) => Err(Error::Range(format!(
                "annulus needs a > 2M (a = {a}, M = {m})"
            ))),
            _ => Ok(()),
        }
    }

    /// Euclidean distance from p to the region (as an infimum).
    pub fn distance(&self, p: Point2) -> f64 {
        match *self {
            RegionSpec::Box { a } => Rect::new(-a, -a, a, a).distance(p),
            RegionSpec::Annulus { a, m } => {
                let s = p.sup_norm();
                let (inner, outer) = (a - 2.0 * m, a - m);
                if s > outer {
                    Rect::new(-outer, -outer, outer, outer).distance(p)
                } else if s <= inner {
                    inner - s
                } else {
                    0.0
                }
            }
        }
    }

    /// Radial extent (lo, hi] in the sup norm; boxes start at -infinity.
    fn shell(&self) -> (f64, f64) {
        match *self {
            RegionSpec::Box { a } => (f64::NEG_INFINITY, a),
            RegionSpec::Annulus { a, m } => (a - 2.0 * m, a - m),
        }
    }

    pub fn overlaps(&self, o: &RegionSpec) -> bool {
        let ((l1, h1), (l2, h2)) = (self.shell(), o.shell());
        l1.max(l2) < h1.min(h2)
    }
}

/// Some cluster has a point within r of A and a point within r of B.
pub fn connects(
    config: &CoxConfiguration,
    labels: &ClusterLabels,
    a: &RegionSpec,
    b: &RegionSpec,
    ball_radius: f64,
) -> Result<bool> {
    a.validate()?;
    b.validate()?;
    if a.overlaps(b) {
        return Err(Error::RegionsOverlap);
    }
    let mut touch = vec![0u8; labels.n_clusters];
    for (q, &c) in config.points.iter().zip(&labels.labels) {
        let t = &mut touch[c as usize];
        if a.distance(q.p) <= ball_radius {
            *t |= 1;
        }
        if b.distance(q.p) <= ball_radius {
            *t |= 2;
        }
        if *t == 3 {
            return Ok(true);
        }
    }
    Ok(false)
}

/// The two regions of f_n: Lambda_{3M} and the annulus of Lambda_{Mn}.
pub fn crossing_regions(p: &ValidatedParams, n: i64) -> (RegionSpec, RegionSpec) {
    (
        RegionSpec::Box { a: 3.0 * p.m },
        RegionSpec::Annulus {
            a: p.m * n as f64,
            m: p.m,
        },
    )
}

/// Half-width of the region R_n that decides f_n.
pub fn decisive_half_width(p: &ValidatedParams, n: i64) -> f64 {
    p.m * (n as f64 - 2.0) + p.ball_radius
}

/// Blocks meeting R_n and the closed square R_n itself.
pub fn window_for(p: &ValidatedParams, n: i64) -> (BlockRange, Rect) {
    let a = decisive_half_width(p, n);
    let lo = (-a / p.m).floor() as i64;
    let hi = (a / p.m).floor() as i64;
    (BlockRange::new([lo, lo], [hi, hi]), Rect::new(-a, -a, a, a))
}

fn check_window(env: &Environment, driver: &Driver, n: i64) -> Result<()> {
    let p = env.params();
    if n < 5 {
        return Err(Error::NTooSmall { n, min: 5 });
    }
    let (w, r) = window_for(p, n);
    let roi = env.roi();
    let covered = roi.x0 <= r.x0 && roi.y0 <= r.y0 && roi.x1 >= r.x1 && roi.y1 >= r.y1;
    if !covered || !env.window().contains_range(&w) || !driver.window().contains_range(&w) {
        return Err(Error::WindowTooSmall(format!(
            "n = {n} needs blocks {:?}..{:?}",
            w.lo, w.hi
        )));
    }
    Ok(())
}

/// Points of the configuration inside R_n.
fn decisive_points(config: &CoxConfiguration, p: &ValidatedParams, n: i64) -> Vec<(Point2, f64)> {
    let a = decisive_half_width(p, n);
    config
        .points
        .iter()
        .filter(|q| q.p.sup_norm() <= a)
        .map(|q| (q.p, q.t))
        .collect()
}

/// f_n: Lambda_{3M} is connected to the annulus of Lambda_{Mn}.
pub fn evaluate_f_n(driver: &Driver, env: &Environment, lambda: f64, n: i64) -> Result<bool> {
    check_window(env, driver, n)?;
    let p = env.params();
    let config = realize(driver, env, lambda)?;
    let pts: Vec<Point2> = decisive_points(&config, p, n)
        .into_iter()
        .map(|x| x.0)
        .collect();
    let labels = clusters_of_points(&pts, p.ball_radius);
    let (a, b) = crossing_regions(p, n);
    let sub = CoxConfiguration {
        lambda,
        points: config
            .points
            .iter()
            .copied()
            .filter(|q| q.p.sup_norm() <= decisive_half_width(p, n))
            .collect(),
        rejected: config.rejected,
    };
    connects(&sub, &labels, &a, &b, p.ball_radius)
}

/// For each n, the smallest level lambda <= lambda_max at which f_n holds
/// under the coupled driver (None if it never does). One pass of
/// incremental union-find over points in order of appearance.
pub fn crossing_levels(driver: &Driver, env: &Environment, ns: &[i64]) -> Result<Vec<Option<f64>>> {
    let nmax = *ns
        .iter()
        .max()
        .ok_or_else(|| Error::Range("no n given".into()))?;
    check_window(env, driver, nmax)?;
    if let Some(&n) = ns.iter().find(|&&n| n < 5) {
        return Err(Error::NTooSmall { n, min: 5 });
    }
    let p = env.params();
    let config = realize(driver, env, driver.lambda_max())?;
    let mut pts = decisive_points(&config, p, nmax);
    pts.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(levels_from_points(&pts, p.m, p.ball_radius, ns))
}

/// Core of [`crossing_levels`] on (point, level) pairs sorted by level.
pub fn levels_from_points(pts: &[(Point2, f64)], m: f64, r: f64, ns: &[i64]) -> Vec<Option<f64>> {
    let xy: Vec<Point2> = pts.iter().map(|x| x.0).collect();
    let idx = CellIndex::new(&xy, 2.0 * r);
    let reach2 = 4.0 * r * r;
    let a_box = RegionSpec::Box { a: 3.0 * m };
    let mut uf = UnionFind::new(xy.len());
    let mut touch_a = vec![false; xy.len()];
    let mut reach = vec![f64::NEG_INFINITY; xy.len()];
    let mut best = f64::NEG_INFINITY;
    let thresholds: Vec<f64> = ns.iter().map(|&n| m * (n as f64 - 2.0) - r).collect();
    let mut out: Vec<Option<f64>> = vec![None; ns.len()];
    let mut pending = ns.len();
    for (i, &p) in xy.iter().enumerate() {
        if pending == 0 {
            break;
        }
        touch_a[i] = a_box.distance(p) <= r;
        reach[i] = p.sup_norm();
        let mut root = i as u32;
        idx.for_each_near(p, |j| {
            if (j as usize) < i && p.dist2(xy[j as usize]) <= reach2 {
                let rj = uf.find(j);
                if rj != uf.find(root) {
                    let (ta, re) = (touch_a[rj as usize], reach[rj as usize]);
                    let r0 = uf.find(root) as usize;
                    let (ta0, re0) = (touch_a[r0], reach[r0]);
                    root = uf.union(root, j);
                    touch_a[root as usize] = ta || ta0;
                    reach[root as usize] = re.max(re0);
                }
            }
        });
        let r0 = uf.find(root) as usize;
        if touch_a[r0] && reach[r0] > best {
            best = reach[r0];
            for (k, th) in thresholds.iter().enumerate() {
                if out[k].is_none() && best >= *th {
                    out[k] = Some(pts[i].1);
                    pending -= 1;
                }
            }
        }
    }
    out
}

/// Clusters of a point set inside R_n with per-cluster contact flags:
/// bit 0 for Lambda_{3M}, bit 1 for the annulus of Lambda_{Mn}.
pub(crate) struct FlaggedClusters {
    pts: Vec<Point2>,
    idx: CellIndex,
    uf: UnionFind,
    flags: Vec<u8>,
    regions: (RegionSpec, RegionSpec),
    r: f64,
    half_width: f64,
    crossed: bool,
}

impl FlaggedClusters {
    /// Points outside R_n are dropped.
    pub(crate) fn new(pts: impl IntoIterator<Item = Point2>, p: &ValidatedParams, n: i64) -> Self {
        let half_width = decisive_half_width(p, n);
        let pts: Vec<Point2> = pts
            .into_iter()
            .filter(|q| q.sup_norm() <= half_width)
            .collect();
        let r = p.ball_radius;
        let regions = crossing_regions(p, n);
        let mut uf = link(&pts, r);
        let mut flags = vec![0u8; pts.len()];
        let mut crossed = false;
        for (i, &q) in pts.iter().enumerate() {
            let f = Self::contact(&regions, r, q);
            let root = uf.find(i as u32) as usize;
            flags[root] |= f;
            crossed |= flags[root] == 3;
        }
        let idx = CellIndex::new(&pts, 2.0 * r);
        FlaggedClusters {
            pts,
            idx,
            uf,
            flags,
            regions,
            r,
            half_width,
            crossed,
        }
    }

    fn contact(regions: &(RegionSpec, RegionSpec), r: f64, q: Point2) -> u8 {
        (regions.0.distance(q) <= r) as u8 | ((regions.1.distance(q) <= r) as u8) << 1
    }

    pub(crate) fn crossed(&self) -> bool {
        self.crossed
    }

    /// Whether adding a point at q creates a crossing that is absent now.
    pub(crate) fn flips_with(&mut self, q: Point2) -> bool {
        if self.crossed || q.sup_norm() > self.half_width {
            return false;
        }
        let mut f = Self::contact(&self.regions, self.r, q);
        let reach2 = 4.0 * self.r * self.r;
        let (pts, uf, flags) = (&self.pts, &mut self.uf, &self.flags);
        self.idx.for_each_near(q, |j| {
            if q.dist2(pts[j as usize]) <= reach2 {
                f |= flags[uf.find(j) as usize];
            }
        });
        f == 3
    }
}

/// Environment and driver of one Monte Carlo trial, on the window of R_n.
#[derive(Clone, Debug)]
pub struct Instance {
    pub env: Environment,
    pub driver: Driver,
    pub n: i64,
}

impl Instance {
    pub fn new(
        p: &ValidatedParams,
        n: i64,
        lambda_max: f64,
        seed: u64,
        trial: u64,
    ) -> Result<Instance> {
        let (w, roi) = window_for(p, n);
        let env = EnvBuilder::new(p, w)
            .yfield(YField::new(p, seed, trial))
            .roi(roi)
            .build()?;
        let driver = sample_driver_trial(p, w, lambda_max, seed, trial)?;
        Ok(Instance { env, driver, n })
    }

    pub fn f_n(&self, lambda: f64) -> Result<bool> {
        evaluate_f_n(&self.driver, &self.env, lambda, self.n)
    }
}
