use super::{crossing_regions, decisive_half_width, CellIndex, RegionSpec, UnionFind};
use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::lattice::{block_of_site, BlockId, BlockRange};
use crate::sampler::{realize, Driver};

/// Result of one run of the exploration algorithm.
#[derive(Clone, Debug, PartialEq)]
pub struct Exploration {
    pub outcome: bool,
    /// Revealed blocks in row-major order of the window.
    pub revealed: Vec<BlockId>,
    /// (step, block) in reveal order; step 0 is the initial shell.
    pub trace: Vec<(usize, BlockId)>,
}

impl Exploration {
    pub fn trace_table(&self) -> String {
        let mut s = String::from("step,block_x,block_y\n");
        for (k, z) in &self.trace {
            s.push_str(&format!("{k},{},{}\n", z[0], z[1]));
        }
        s
    }
}

/// Exploration T^m with 6 <= m <= n - 3.
pub fn explore(
    driver: &Driver,
    env: &Environment,
    lambda: f64,
    n: i64,
    m: i64,
    trace: bool,
) -> Result<Exploration> {
    if m < 6 || m > n - 3 {
        return Err(Error::BadM { m, n });
    }
    explore_any_m(driver, env, lambda, n, m, trace)
}

/// Exploration for any annulus index 5 <= m <= n - 1.
pub fn explore_any_m(
    driver: &Driver,
    env: &Environment,
    lambda: f64,
    n: i64,
    m: i64,
    trace: bool,
) -> Result<Exploration> {
    if m < 5 || m >= n {
        return Err(Error::BadM { m, n });
    }
    super::check_window(env, driver, n)?;
    let p = env.params();
    let w: BlockRange = env.window();
    let dep = p.dependency_radius().unwrap_or(w.width().max(w.height()));
    let config = realize(driver, env, lambda)?;
    let a = decisive_half_width(p, n);
    let pts: Vec<(Point2, BlockId)> = config
        .points
        .iter()
        .filter(|q| q.p.sup_norm() <= a)
        .map(|q| (q.p, block_of_site(q.site, p.b_inv)))
        .collect();
    let xy: Vec<Point2> = pts.iter().map(|x| x.0).collect();
    let r = p.ball_radius;
    let (ra, rb) = crossing_regions(p, n);
    let rm = RegionSpec::Annulus {
        a: p.m * m as f64,
        m: p.m,
    };

    let nb = w.len();
    let mut by_block: Vec<Vec<u32>> = vec![Vec::new(); nb];
    for (i, (_, z)) in pts.iter().enumerate() {
        by_block[w.index_of(*z).expect("point inside window")].push(i as u32);
    }
    let mut flags: Vec<u8> = xy
        .iter()
        .map(|&q| {
            (ra.distance(q) <= r) as u8
                | ((rb.distance(q) <= r) as u8) << 1
                | ((rm.distance(q) <= r) as u8) << 2
        })
        .collect();
    let mut st = State {
        w,
        dep,
        revealed: vec![false; nb],
        missing: w
            .iter()
            .map(|z| w.intersect(&BlockRange::around(z, dep)).len())
            .collect(),
        known: vec![false; xy.len()],
        uf: UnionFind::new(xy.len()),
        idx: CellIndex::new(&xy, 2.0 * r),
        reach2: 4.0 * r * r,
        trace: Vec::new(),
        record: trace,
        crossed: false,
    };

    let shell: Vec<BlockId> = w
        .iter()
        .filter(|z| (z[0].abs().max(z[1].abs()) - m).abs() <= dep + 2)
        .collect();
    for z in shell {
        st.reveal(z, 0, &by_block, &xy, &mut flags);
    }
    let mut step = 0usize;
    loop {
        if st.crossing_known() {
            break;
        }
        let mut best: Option<((i64, BlockId), BlockId)> = None;
        for (bi, z) in w.iter().enumerate() {
            if !st.revealed[bi] || st.closed(z) {
                continue;
            }
            let in_s = by_block[bi]
                .iter()
                .any(|&i| st.known[i as usize] && flags[st.uf.find(i) as usize] & 4 != 0);
            if !in_s {
                continue;
            }
            let key = ((z[0].abs().max(z[1].abs()) - m).abs(), z);
            if best.map_or(true, |(k, _)| key < k) {
                best = Some((key, z));
            }
        }
        let Some((_, z)) = best else { break };
        step += 1;
        for v in w.intersect(&BlockRange::around(z, dep + 1)).iter() {
            st.reveal(v, step, &by_block, &xy, &mut flags);
        }
    }
    let outcome = st.crossing_known();
    let revealed = w
        .iter()
        .enumerate()
        .filter(|(i, _)| st.revealed[*i])
        .map(|(_, z)| z)
        .collect();
    Ok(Exploration {
        outcome,
        revealed,
        trace: st.trace,
    })
}

struct State {
    w: BlockRange,
    dep: i64,
    revealed: Vec<bool>,
    /// Unrevealed blocks within the dependency radius, per block.
    missing: Vec<usize>,
    known: Vec<bool>,
    uf: UnionFind,
    idx: CellIndex,
    reach2: f64,
    trace: Vec<(usize, BlockId)>,
    record: bool,
    crossed: bool,
}

impl State {
    fn closed(&self, z: BlockId) -> bool {
        self.w
            .intersect(&BlockRange::around(z, self.dep + 1))
            .iter()
            .all(|v| self.revealed[self.w.index_of(v).unwrap()])
    }

    fn reveal(
        &mut self,
        z: BlockId,
        step: usize,
        by_block: &[Vec<u32>],
        xy: &[Point2],
        flags: &mut [u8],
    ) {
        let bi = self.w.index_of(z).expect("inside window");
        if self.revealed[bi] {
            return;
        }
        self.revealed[bi] = true;
        if self.record {
            self.trace.push((step, z));
        }
        for v in self.w.intersect(&BlockRange::around(z, self.dep)).iter() {
            let vi = self.w.index_of(v).unwrap();
            self.missing[vi] -= 1;
            if self.missing[vi] == 0 {
                for &i in &by_block[vi] {
                    self.learn(i, xy, flags);
                }
            }
        }
    }

    fn learn(&mut self, i: u32, xy: &[Point2], flags: &mut [u8]) {
        self.known[i as usize] = true;
        let p = xy[i as usize];
        let mut near = Vec::new();
        self.idx.for_each_near(p, |j| {
            if j != i && self.known[j as usize] && p.dist2(xy[j as usize]) <= self.reach2 {
                near.push(j);
            }
        });
        for j in near {
            let (a, b) = (self.uf.find(i), self.uf.find(j));
            if a != b {
                let f = flags[a as usize] | flags[b as usize];
                let root = self.uf.union(a, b);
                flags[root as usize] = f;
            }
        }
        if flags[self.uf.find(i) as usize] == 7 {
            self.crossed = true;
        }
    }

    fn crossing_known(&self) -> bool {
        self.crossed
    }
}
