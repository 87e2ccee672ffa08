//! Driver marks (v, u, t) and the Cox configuration they induce.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::environment::{inverse_position, Environment};
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::lattice::{
    block_of_site, derive_stream, local_index, site_from_local, BlockId, BlockRange, Purpose,
    SiteId, StreamKey, ValidatedParams, Variant,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriverMark {
    pub v: f64,
    pub u: f64,
    /// Coupling level: the mark is active for lambda >= t.
    pub t: f64,
}

fn mark_cmp(a: &DriverMark, b: &DriverMark) -> std::cmp::Ordering {
    a.t.total_cmp(&b.t)
        .then(a.v.total_cmp(&b.v))
        .then(a.u.total_cmp(&b.u))
}

/// Stream a site's marks come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MarkSource {
    Block(Purpose),
    Site(Purpose),
}

/// Marks of one block, grouped by site.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockMarks {
    pub block: BlockId,
    pub source: Purpose,
    pub offsets: Vec<u32>,
    /// u-layer 0 marks (u < rho), sorted by (t, v) within each site.
    pub marks: Vec<DriverMark>,
    /// Sites redrawn from their own streams.
    pub site_sources: Vec<(u32, Purpose)>,
    /// Inserted marks (t = 0).
    pub inserted: Vec<(u32, DriverMark)>,
}

impl BlockMarks {
    pub fn site_marks(&self, idx: usize) -> &[DriverMark] {
        &self.marks[self.offsets[idx] as usize..self.offsets[idx + 1] as usize]
    }

    fn source_of(&self, idx: usize) -> MarkSource {
        match self.site_sources.iter().find(|(i, _)| *i as usize == idx) {
            Some((_, p)) => MarkSource::Site(*p),
            None => MarkSource::Block(self.source),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Driver {
    params: ValidatedParams,
    window: BlockRange,
    lambda_max: f64,
    seed: u64,
    trial: u64,
    blocks: Vec<Arc<BlockMarks>>,
}

fn t_layers(lambda_max: f64) -> u32 {
    lambda_max.ceil().max(0.0) as u32
}

fn slab_lane(u_layer: u32, t_layer: u32) -> u64 {
    ((u_layer as u64) << 24) | t_layer as u64
}

fn site_lane(idx: usize, u_layer: u32, t_layer: u32) -> u64 {
    (1 << 63) | ((idx as u64) << 32) | slab_lane(u_layer, t_layer)
}

/// Marks of u-layer `i` for every site of a block, as (site index, mark).
fn draw_block_layer(
    p: &ValidatedParams,
    seed: u64,
    trial: u64,
    z: BlockId,
    purpose: Purpose,
    u_layer: u32,
    lambda_max: f64,
) -> Vec<(u32, DriverMark)> {
    let n_sites = p.sites_per_block();
    let mut out = Vec::new();
    for k in 0..t_layers(lambda_max) {
        let key = StreamKey::new(seed, z, purpose, trial).lane(slab_lane(u_layer, k));
        let mut rng = derive_stream(&key);
        let n = poisson(&mut rng, p.rho * n_sites as f64);
        for _ in 0..n {
            let site = rng.gen_range(0..n_sites) as u32;
            let m = draw_mark(&mut rng, p.rho, u_layer, k);
            if m.t <= lambda_max {
                out.push((site, m));
            }
        }
    }
    out
}

fn draw_site_layer(
    p: &ValidatedParams,
    seed: u64,
    trial: u64,
    z: BlockId,
    idx: usize,
    purpose: Purpose,
    u_layer: u32,
    lambda_max: f64,
) -> Vec<DriverMark> {
    let mut out = Vec::new();
    for k in 0..t_layers(lambda_max) {
        let key = StreamKey::new(seed, z, purpose, trial).lane(site_lane(idx, u_layer, k));
        let mut rng = derive_stream(&key);
        let n = poisson(&mut rng, p.rho);
        for _ in 0..n {
            let m = draw_mark(&mut rng, p.rho, u_layer, k);
            if m.t <= lambda_max {
                out.push(m);
            }
        }
    }
    out
}

fn poisson<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if mean > 0.0 {
        Poisson::new(mean).expect("positive mean").sample(rng) as u64
    } else {
        0
    }
}

fn draw_mark<R: Rng>(rng: &mut R, rho: f64, u_layer: u32, t_layer: u32) -> DriverMark {
    let v: f64 = rng.gen();
    let u = rho * (u_layer as f64 + rng.gen::<f64>());
    let t = t_layer as f64 + rng.gen::<f64>();
    DriverMark { v, u, t }
}

fn assemble(n_sites: usize, mut pairs: Vec<(u32, DriverMark)>) -> (Vec<u32>, Vec<DriverMark>) {
    pairs.sort_unstable_by(|a, b| a.0.cmp(&b.0).then_with(|| mark_cmp(&a.1, &b.1)));
    let mut offsets = vec![0u32; n_sites + 1];
    for (s, _) in &pairs {
        offsets[*s as usize + 1] += 1;
    }
    for i in 0..n_sites {
        offsets[i + 1] += offsets[i];
    }
    (offsets, pairs.into_iter().map(|(_, m)| m).collect())
}

fn block_marks(
    p: &ValidatedParams,
    seed: u64,
    trial: u64,
    z: BlockId,
    purpose: Purpose,
    lambda_max: f64,
) -> BlockMarks {
    let pairs = draw_block_layer(p, seed, trial, z, purpose, 0, lambda_max);
    let (offsets, marks) = assemble(p.sites_per_block(), pairs);
    BlockMarks {
        block: z,
        source: purpose,
        offsets,
        marks,
        site_sources: Vec::new(),
        inserted: Vec::new(),
    }
}

/// Driver for trial 0 of `seed`.
pub fn sample_driver(
    p: &ValidatedParams,
    window: BlockRange,
    lambda_max: f64,
    seed: u64,
) -> Result<Driver> {
    sample_driver_trial(p, window, lambda_max, seed, 0)
}

pub fn sample_driver_trial(
    p: &ValidatedParams,
    window: BlockRange,
    lambda_max: f64,
    seed: u64,
    trial: u64,
) -> Result<Driver> {
    if !(lambda_max >= 0.0) || !lambda_max.is_finite() {
        return Err(Error::Range(format!("lambda_max = {lambda_max}")));
    }
    let zs: Vec<BlockId> = window.iter().collect();
    let blocks = zs
        .par_iter()
        .map(|&z| Arc::new(block_marks(p, seed, trial, z, Purpose::Driver, lambda_max)))
        .collect();
    Ok(Driver {
        params: p.clone(),
        window,
        lambda_max,
        seed,
        trial,
        blocks,
    })
}

/// Scope of a resampling step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResampleScope {
    Site(SiteId),
    Block(BlockId),
    EnvBlock(BlockId),
}

impl Driver {
    pub fn params(&self) -> &ValidatedParams {
        &self.params
    }

    pub fn window(&self) -> BlockRange {
        self.window
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trial(&self) -> u64 {
        self.trial
    }

    pub fn block(&self, z: BlockId) -> Option<&BlockMarks> {
        self.window.index_of(z).map(|i| self.blocks[i].as_ref())
    }

    pub fn marks(&self, x: SiteId) -> Option<&[DriverMark]> {
        let z = block_of_site(x, self.params.b_inv);
        self.block(z)
            .map(|b| b.site_marks(local_index(x, self.params.b_inv)))
    }

    pub fn total_marks(&self) -> usize {
        self.blocks.iter().map(|b| b.marks.len()).sum()
    }

    /// Marks of site `idx` with u in [i rho, (i+1) rho), i >= 1. Block-level
    /// layers are drawn once per block and cached.
    fn extra_layer(
        &self,
        bm: &BlockMarks,
        idx: usize,
        u_layer: u32,
        cache: &mut Vec<Option<Vec<Vec<DriverMark>>>>,
    ) -> Vec<DriverMark> {
        let p = &self.params;
        match bm.source_of(idx) {
            MarkSource::Site(purpose) => draw_site_layer(
                p,
                self.seed,
                self.trial,
                bm.block,
                idx,
                purpose,
                u_layer,
                self.lambda_max,
            ),
            MarkSource::Block(purpose) => {
                let li = u_layer as usize;
                if cache.len() <= li {
                    cache.resize(li + 1, None);
                }
                let per_site = cache[li].get_or_insert_with(|| {
                    let mut v = vec![Vec::new(); p.sites_per_block()];
                    for (s, m) in draw_block_layer(
                        p,
                        self.seed,
                        self.trial,
                        bm.block,
                        purpose,
                        u_layer,
                        self.lambda_max,
                    ) {
                        v[s as usize].push(m);
                    }
                    v
                });
                per_site[idx].clone()
            }
        }
    }

    /// Copy with (r, u) added to the marks of x at level t = 0.
    pub fn with_inserted_mark(&self, x: SiteId, r: f64, u: f64) -> Result<Driver> {
        if !(0.0..=1.0).contains(&r) || !(0.0..=self.params.rho).contains(&u) {
            return Err(Error::Range(format!(
                "mark (r, u) = ({r}, {u}) outside [0,1] x [0,{}]",
                self.params.rho
            )));
        }
        let b_inv = self.params.b_inv;
        let z = block_of_site(x, b_inv);
        let bi = self.window.index_of(z).ok_or(Error::OutOfWindow(z))?;
        let idx = local_index(x, b_inv);
        let mark = DriverMark { v: r, u, t: 0.0 };
        let mut bm = (*self.blocks[bi]).clone();
        let pos = bm.offsets[idx] as usize
            + bm.site_marks(idx)
                .partition_point(|m| mark_cmp(m, &mark) != std::cmp::Ordering::Greater);
        bm.marks.insert(pos, mark);
        for o in &mut bm.offsets[idx + 1..] {
            *o += 1;
        }
        bm.inserted.push((idx as u32, mark));
        let mut out = self.clone();
        out.blocks[bi] = Arc::new(bm);
        Ok(out)
    }

    fn replace_site(&self, x: SiteId, j: u32) -> Result<Driver> {
        let b_inv = self.params.b_inv;
        let z = block_of_site(x, b_inv);
        let bi = self.window.index_of(z).ok_or(Error::OutOfWindow(z))?;
        let idx = local_index(x, b_inv);
        let purpose = Purpose::ResampleDriver(j);
        let mut fresh = draw_site_layer(
            &self.params,
            self.seed,
            self.trial,
            z,
            idx,
            purpose,
            0,
            self.lambda_max,
        );
        fresh.sort_unstable_by(mark_cmp);
        let old = &self.blocks[bi];
        let mut pairs: Vec<(u32, DriverMark)> = Vec::with_capacity(old.marks.len() + fresh.len());
        for s in 0..self.params.sites_per_block() {
            if s == idx {
                pairs.extend(fresh.iter().map(|m| (s as u32, *m)));
            } else {
                pairs.extend(old.site_marks(s).iter().map(|m| (s as u32, *m)));
            }
        }
        let (offsets, marks) = assemble(self.params.sites_per_block(), pairs);
        let mut site_sources: Vec<(u32, Purpose)> = old
            .site_sources
            .iter()
            .copied()
            .filter(|(s, _)| *s as usize != idx)
            .collect();
        site_sources.push((idx as u32, purpose));
        let inserted = old
            .inserted
            .iter()
            .copied()
            .filter(|(s, _)| *s as usize != idx)
            .collect();
        let bm = BlockMarks {
            block: z,
            source: old.source,
            offsets,
            marks,
            site_sources,
            inserted,
        };
        let mut out = self.clone();
        out.blocks[bi] = Arc::new(bm);
        Ok(out)
    }

    fn replace_block(&self, z: BlockId, j: u32) -> Result<Driver> {
        let bi = self.window.index_of(z).ok_or(Error::OutOfWindow(z))?;
        let mut out = self.clone();
        out.blocks[bi] = Arc::new(block_marks(
            &self.params,
            self.seed,
            self.trial,
            z,
            Purpose::ResampleDriver(j),
            self.lambda_max,
        ));
        Ok(out)
    }
}

/// Replace the driver at a site or block, or the Y-block of an environment.
pub fn resample(
    driver: &Driver,
    scope: ResampleScope,
    j: u32,
    env: Option<&Environment>,
) -> Result<(Driver, Option<Environment>)> {
    match scope {
        ResampleScope::Site(x) => Ok((driver.replace_site(x, j)?, env.cloned())),
        ResampleScope::Block(z) => Ok((driver.replace_block(z, j)?, env.cloned())),
        ResampleScope::EnvBlock(z) => {
            let env = env
                .ok_or_else(|| Error::Range("env-block resampling needs an environment".into()))?;
            Ok((driver.clone(), Some(env.resample_env_block(z, j)?)))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoxPoint {
    pub p: Point2,
    pub site: SiteId,
    /// Index of the mark within the site's accepted list order.
    pub mark: u32,
    /// Level at which the point appears.
    pub t: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoxConfiguration {
    pub lambda: f64,
    pub points: Vec<CoxPoint>,
    /// WIDTH marks dropped after the proposal cap.
    pub rejected: usize,
}

impl CoxConfiguration {
    /// Sub-configuration at a lower level.
    pub fn at_level(&self, lambda: f64) -> CoxConfiguration {
        CoxConfiguration {
            lambda,
            points: self
                .points
                .iter()
                .copied()
                .filter(|q| q.t <= lambda)
                .collect(),
            rejected: self.rejected,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Point table: x,y,site_x,site_y,mark.
    pub fn to_table(&self) -> String {
        let mut s = String::from("x,y,site_x,site_y,mark\n");
        for q in &self.points {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                q.p.x, q.p.y, q.site[0], q.site[1], q.mark
            );
        }
        s
    }
}

pub const WIDTH_PROPOSAL_CAP: u32 = 10_000;

/// Uniform point of the WIDTH region inside the site cube. The proposal
/// stream is ChaCha8 seeded with the bits of v; each proposal draws x then y.
fn width_point(site: &crate::environment::EnvironmentSite<'_>, v: f64) -> Option<Point2> {
    let mut rng = ChaCha8Rng::seed_from_u64(v.to_bits());
    let c = site.cube;
    for _ in 0..WIDTH_PROPOSAL_CAP {
        let x = c.x0 + (c.x1 - c.x0) * rng.gen::<f64>();
        let y = c.y0 + (c.y1 - c.y0) * rng.gen::<f64>();
        let q = Point2::new(x, y);
        if site.in_width_region(q) {
            return Some(Point2::new(
                site.block_origin.x + x,
                site.block_origin.y + y,
            ));
        }
    }
    None
}

/// Position of a mark with coordinate v, as placed by [`realize`].
pub(crate) fn mark_position(
    site: &crate::environment::EnvironmentSite<'_>,
    v: f64,
) -> Option<Point2> {
    if site.variant == Variant::Width {
        width_point(site, v)
    } else {
        inverse_position(site, v).ok()
    }
}

/// Accept marks with t <= lambda and u <= mass and place them.
pub fn realize(driver: &Driver, env: &Environment, lambda: f64) -> Result<CoxConfiguration> {
    if lambda > driver.lambda_max || lambda < 0.0 {
        return Err(Error::ScaleMismatch(format!(
            "lambda {lambda} outside [0, {}]",
            driver.lambda_max
        )));
    }
    let (pd, pe) = (driver.params(), env.params());
    if pd.m != pe.m || pd.b_inv != pe.b_inv || pd.rho != pe.rho || pd.variant != pe.variant {
        return Err(Error::ScaleMismatch(
            "driver and environment parameters differ".into(),
        ));
    }
    if !driver.window.contains_range(&env.window()) {
        return Err(Error::ScaleMismatch(
            "driver window does not cover the environment window".into(),
        ));
    }
    let zs: Vec<BlockId> = env.window().iter().collect();
    let parts: Vec<(Vec<CoxPoint>, usize)> = zs
        .par_iter()
        .map(|&z| realize_block(driver, env, z, lambda))
        .collect();
    let mut points = Vec::with_capacity(parts.iter().map(|p| p.0.len()).sum());
    let mut rejected = 0;
    for (p, r) in parts {
        points.extend(p);
        rejected += r;
    }
    Ok(CoxConfiguration {
        lambda,
        points,
        rejected,
    })
}

/// Accepted and placed points of block z at level lambda. Parameter and
/// window compatibility are the caller's responsibility.
pub(crate) fn realize_block(
    driver: &Driver,
    env: &Environment,
    z: BlockId,
    lambda: f64,
) -> (Vec<CoxPoint>, usize) {
    let pe = env.params();
    let b_inv = pe.b_inv;
    let bs = env.block(z).expect("window block");
    let bm = driver.block(z).expect("covered block");
    let mut pts = Vec::new();
    let mut rejected = 0usize;
    let mut cache = Vec::new();
    for idx in 0..bs.built.len() {
        if !bs.built[idx] || bs.mass[idx] <= 0.0 {
            continue;
        }
        let mass = bs.mass[idx];
        if mass <= pe.rho && bm.site_marks(idx).is_empty() {
            continue;
        }
        let k = site_from_local(z, idx, b_inv);
        let site = env.view(bs, idx, k);
        let mut accepted: Vec<DriverMark> = bm
            .site_marks(idx)
            .iter()
            .copied()
            .filter(|m| m.t <= lambda && m.u <= mass)
            .collect();
        if mass > pe.rho {
            let layers = (mass / pe.rho).ceil() as u32;
            for i in 1..layers {
                accepted.extend(
                    driver
                        .extra_layer(bm, idx, i, &mut cache)
                        .into_iter()
                        .filter(|m| m.t <= lambda && m.u <= mass),
                );
            }
            accepted.sort_unstable_by(mark_cmp);
        }
        for (mi, m) in accepted.iter().enumerate() {
            let pos = if pe.variant == Variant::Width {
                match width_point(&site, m.v) {
                    Some(q) => q,
                    None => {
                        rejected += 1;
                        continue;
                    }
                }
            } else {
                match inverse_position(&site, m.v) {
                    Ok(q) => q,
                    Err(_) => continue,
                }
            };
            pts.push(CoxPoint {
                p: pos,
                site: k,
                mark: mi as u32,
                t: m.t,
            });
        }
    }
    (pts, rejected)
}
