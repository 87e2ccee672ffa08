//! The random measure: per-site masses and arc-length tables built from a
//! Delaunay street system over an iid block field Y.

mod conditions;
mod dump;
mod width;

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{
    circumcircle, clip_to_grid, lex_cmp, min_distance_to_segments, sample_poisson_block,
    segment_cmp, superimpose_grid, triangulate_raw, Point2, Rect, Segment,
};
use crate::lattice::{
    block_of_site, derive_stream, local_index, BlockId, BlockRange, Purpose, SiteId, StreamKey,
    ValidatedParams, Variant,
};

pub use conditions::{
    check_conditions, check_conditions_with, ConditionConfig, ConditionReport, EssentialReport,
};
pub use width::quadrature_area;

/// Replacement rule for one Y-block.
#[derive(Clone, Debug, PartialEq)]
pub enum YOverride {
    /// Draw the block from the RESAMPLE_ENV(j) stream.
    Resample(u32),
    /// Explicit block-local offsets in [0, M)^2.
    Points(Vec<Point2>),
}

/// The iid field {Y_z}: Poisson(lambda_del) points in Mz + [0, M)^2.
#[derive(Clone, Debug, PartialEq)]
pub struct YField {
    pub seed: u64,
    pub trial: u64,
    pub lambda_del: f64,
    pub m: f64,
    /// Block z reads the stream of block z - shift.
    pub shift: BlockId,
    pub overrides: BTreeMap<BlockId, YOverride>,
    /// Blocks outside the range use RESAMPLE_ENV(j).
    pub outside: Option<(BlockRange, u32)>,
}

impl YField {
    pub fn new(p: &ValidatedParams, seed: u64, trial: u64) -> YField {
        YField {
            seed,
            trial,
            lambda_del: p.lambda_del,
            m: p.m,
            shift: [0, 0],
            overrides: BTreeMap::new(),
            outside: None,
        }
    }

    pub fn with_override(&self, z: BlockId, o: YOverride) -> YField {
        let mut y = self.clone();
        y.overrides.insert(z, o);
        y
    }

    /// Global points of block z.
    pub fn block_points(&self, z: BlockId) -> Vec<Point2> {
        let local = match self.overrides.get(&z) {
            Some(YOverride::Points(p)) => p.clone(),
            Some(YOverride::Resample(j)) => self.draw(z, Purpose::ResampleEnv(*j)),
            None => match self.outside {
                Some((keep, j)) if !keep.contains(z) => self.draw(z, Purpose::ResampleEnv(j)),
                _ => self.draw(z, Purpose::Env),
            },
        };
        let (ox, oy) = (self.m * z[0] as f64, self.m * z[1] as f64);
        local
            .into_iter()
            .map(|p| Point2::new(ox + p.x, oy + p.y))
            .collect()
    }

    fn draw(&self, z: BlockId, purpose: Purpose) -> Vec<Point2> {
        let src = [z[0] - self.shift[0], z[1] - self.shift[1]];
        let mut rng = derive_stream(&StreamKey::new(self.seed, src, purpose, self.trial));
        sample_poisson_block(
            &mut rng,
            self.lambda_del,
            &Rect::new(0.0, 0.0, self.m, self.m),
        )
    }
}

/// Site tables of one block. Segments are in block-local coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSites {
    pub block: BlockId,
    pub b_inv: u32,
    /// Sites whose cube meets the region of interest.
    pub built: Vec<bool>,
    pub mass: Vec<f64>,
    /// Uncapped clipped length (segment variants) or unused.
    pub total: Vec<f64>,
    pub offsets: Vec<u32>,
    pub segs: Vec<Segment>,
    pub cum: Vec<f64>,
    /// WIDTH only: edges within w0 of the block, block-local.
    pub near: Vec<Segment>,
    /// WIDTH only: quadrature error bound per site.
    pub quad_err: Vec<f64>,
}

impl BlockSites {
    pub fn max_mass(&self) -> f64 {
        self.mass.iter().copied().fold(0.0, f64::max)
    }

    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.block[0].to_le_bytes());
        h.update(self.block[1].to_le_bytes());
        for (i, &b) in self.built.iter().enumerate() {
            h.update([b as u8]);
            h.update(self.mass[i].to_bits().to_le_bytes());
        }
        for s in &self.segs {
            for v in [s.a.x, s.a.y, s.b.x, s.b.y] {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().into()
    }

    /// The site entry as a comparable value.
    pub fn site_entry(&self, idx: usize) -> (bool, u64, Vec<[u64; 4]>, Vec<u64>) {
        let r = self.offsets[idx] as usize..self.offsets[idx + 1] as usize;
        (
            self.built[idx],
            self.mass[idx].to_bits(),
            self.segs[r.clone()]
                .iter()
                .map(|s| [s.a.x, s.a.y, s.b.x, s.b.y].map(f64::to_bits))
                .collect(),
            self.cum[r].iter().map(|c| c.to_bits()).collect(),
        )
    }
}

/// Read-only view of one site.
#[derive(Clone, Copy, Debug)]
pub struct EnvironmentSite<'a> {
    pub site: SiteId,
    pub variant: Variant,
    pub mass: f64,
    /// Uncapped clipped length; the end of the cumulative table.
    pub total_length: f64,
    /// Global origin Mz of the owning block.
    pub block_origin: Point2,
    /// Site cube in block-local coordinates.
    pub cube: Rect,
    pub segments: &'a [Segment],
    pub cum: &'a [f64],
    pub near: &'a [Segment],
    pub w0: f64,
}

impl<'a> EnvironmentSite<'a> {
    pub fn is_nonempty(&self) -> bool {
        self.mass > 0.0
    }

    /// Global cube of the site.
    pub fn global_cube(&self) -> Rect {
        Rect::new(
            self.block_origin.x + self.cube.x0,
            self.block_origin.y + self.cube.y0,
            self.block_origin.x + self.cube.x1,
            self.block_origin.y + self.cube.y1,
        )
    }

    /// Inside the WIDTH region (block-local point).
    pub fn in_width_region(&self, local: Point2) -> bool {
        min_distance_to_segments(local, self.near)
            .map(|d| d <= self.w0)
            .unwrap_or(false)
    }
}

/// Point at arc length v times the uncapped total length along the ordered
/// segments, in global coordinates.
pub fn inverse_position(s: &EnvironmentSite<'_>, v: f64) -> Result<Point2> {
    if s.variant == Variant::Width {
        return Err(Error::VariantMismatch(
            "WIDTH sites have no segment table".into(),
        ));
    }
    if !(s.mass > 0.0) || s.segments.is_empty() {
        return Err(Error::EmptySupport);
    }
    let target = v.clamp(0.0, 1.0) * s.total_length;
    let k = s.cum.partition_point(|&c| c < target).min(s.cum.len() - 1);
    let start = if k == 0 { 0.0 } else { s.cum[k - 1] };
    let seg = &s.segments[k];
    let len = s.cum[k] - start;
    let frac = if len > 0.0 {
        ((target - start) / len).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let p = seg.at(frac);
    Ok(Point2::new(s.block_origin.x + p.x, s.block_origin.y + p.y))
}

#[derive(Clone, Debug)]
pub struct Environment {
    params: ValidatedParams,
    window: BlockRange,
    roi: Rect,
    y_rect: Rect,
    yfield: YField,
    blocks: Vec<Arc<BlockSites>>,
    circumradius_max: f64,
}

/// Seed, trial and Y-overrides; block digests are computed on request.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub master_seed: u64,
    pub trial: u64,
    pub overrides: Vec<BlockId>,
    pub block_digests: Vec<(BlockId, [u8; 32])>,
}

impl Environment {
    pub fn params(&self) -> &ValidatedParams {
        &self.params
    }

    pub fn window(&self) -> BlockRange {
        self.window
    }

    /// Region whose sites are built.
    pub fn roi(&self) -> Rect {
        self.roi
    }

    pub fn y_rect(&self) -> Rect {
        self.y_rect
    }

    pub fn yfield(&self) -> &YField {
        &self.yfield
    }

    pub fn block(&self, z: BlockId) -> Option<&BlockSites> {
        self.window.index_of(z).map(|i| self.blocks[i].as_ref())
    }

    pub fn block_arc(&self, z: BlockId) -> Option<&Arc<BlockSites>> {
        self.window.index_of(z).map(|i| &self.blocks[i])
    }

    pub fn blocks(&self) -> impl Iterator<Item = &BlockSites> {
        self.blocks.iter().map(|b| b.as_ref())
    }

    /// Largest circumradius among triangles centred in the region of interest.
    pub fn circumradius_max(&self) -> f64 {
        self.circumradius_max
    }

    pub fn site(&self, k: SiteId) -> Option<EnvironmentSite<'_>> {
        let b_inv = self.params.b_inv;
        let z = block_of_site(k, b_inv);
        let bs = self.block(z)?;
        let idx = local_index(k, b_inv);
        if !bs.built[idx] {
            return None;
        }
        Some(self.view(bs, idx, k))
    }

    pub(crate) fn view<'a>(
        &'a self,
        bs: &'a BlockSites,
        idx: usize,
        k: SiteId,
    ) -> EnvironmentSite<'a> {
        let b = self.params.b_inv as usize;
        let (i, j) = ((idx % b) as u32, (idx / b) as u32);
        let r = bs.offsets[idx] as usize..bs.offsets[idx + 1] as usize;
        EnvironmentSite {
            site: k,
            variant: self.params.variant,
            mass: bs.mass[idx],
            total_length: bs.total[idx],
            block_origin: Point2::new(
                self.params.m * bs.block[0] as f64,
                self.params.m * bs.block[1] as f64,
            ),
            cube: Rect::new(
                self.params.bound(i),
                self.params.bound(j),
                self.params.bound(i + 1),
                self.params.bound(j + 1),
            ),
            segments: &bs.segs[r.clone()],
            cum: &bs.cum[r],
            near: &bs.near,
            w0: self.params.w0,
        }
    }

    pub fn max_mass(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_mass()).fold(0.0, f64::max)
    }

    pub fn provenance(&self, with_digests: bool) -> Provenance {
        Provenance {
            master_seed: self.yfield.seed,
            trial: self.yfield.trial,
            overrides: self.yfield.overrides.keys().copied().collect(),
            block_digests: if with_digests {
                self.blocks.iter().map(|b| (b.block, b.digest())).collect()
            } else {
                Vec::new()
            },
        }
    }

    /// Replace Y_z by the RESAMPLE_ENV(j) draw and rebuild exactly the blocks
    /// that can depend on it.
    pub fn resample_env_block(&self, z: BlockId, j: u32) -> Result<Environment> {
        let reach = BlockRange::new(
            [
                (self.y_rect.x0 / self.params.m).floor() as i64,
                (self.y_rect.y0 / self.params.m).floor() as i64,
            ],
            [
                (self.y_rect.x1 / self.params.m).floor() as i64,
                (self.y_rect.y1 / self.params.m).floor() as i64,
            ],
        );
        if !reach.contains(z) {
            return Err(Error::OutOfWindow(z));
        }
        let yfield = self.yfield.with_override(z, YOverride::Resample(j));
        self.rebuild_with(yfield, z)
    }

    /// Rebuild after changing Y around block z.
    pub fn rebuild_with(&self, yfield: YField, z: BlockId) -> Result<Environment> {
        let p = &self.params;
        match p.dependency_radius() {
            None => build_inner(p, self.window, self.roi, Some(self.y_rect), yfield, None),
            Some(r) => {
                let affected = self.window.intersect(&BlockRange::around(z, r));
                let mut env = self.clone();
                env.yfield = yfield;
                if affected.is_empty() {
                    return Ok(env);
                }
                let rect = block_rect(p, &affected).expand(p.y_pad());
                let y_rect = intersect_rect(&rect, &self.y_rect);
                let only: Vec<BlockId> = affected.iter().collect();
                let (fresh, _) = build_blocks(
                    p,
                    self.window,
                    self.roi,
                    y_rect,
                    &env.yfield,
                    Some(&only),
                    false,
                )?;
                for (z2, bs) in fresh {
                    let i = self.window.index_of(z2).expect("inside window");
                    env.blocks[i] = Arc::new(bs);
                }
                Ok(env)
            }
        }
    }

    /// Build block z alone under another Y-field, using this environment's Y-rectangle.
    /// Rebuilds block `z` alone. The triangulation covers two block rings
    /// around `z` plus the Y pad, so a resampled outer ring is still seen.
    pub fn rebuild_block(&self, yfield: &YField, z: BlockId) -> Result<BlockSites> {
        let p = &self.params;
        let near = block_rect(p, &BlockRange::around(z, 2)).expand(p.y_pad());
        let (mut fresh, _) = build_blocks(
            p,
            self.window,
            self.roi,
            intersect_rect(&near, &self.y_rect),
            yfield,
            Some(&[z]),
            false,
        )?;
        fresh.pop().map(|(_, b)| b).ok_or(Error::OutOfWindow(z))
    }

    pub fn to_dump(&self) -> String {
        dump::to_dump(self)
    }
}

pub(crate) fn block_rect(p: &ValidatedParams, r: &BlockRange) -> Rect {
    Rect::new(
        p.m * r.lo[0] as f64,
        p.m * r.lo[1] as f64,
        p.m * (r.hi[0] + 1) as f64,
        p.m * (r.hi[1] + 1) as f64,
    )
}

fn intersect_rect(a: &Rect, b: &Rect) -> Rect {
    Rect::new(
        a.x0.max(b.x0),
        a.y0.max(b.y0),
        a.x1.min(b.x1),
        a.y1.min(b.y1),
    )
}

/// Environment on all sites of `window` for trial 0 of `seed`.
pub fn build_environment(
    p: &ValidatedParams,
    window: BlockRange,
    seed: u64,
) -> Result<Environment> {
    EnvBuilder::new(p, window).seed(seed).build()
}

/// Configurable environment construction.
#[derive(Clone, Debug)]
pub struct EnvBuilder {
    params: ValidatedParams,
    window: BlockRange,
    roi: Option<Rect>,
    yfield: YField,
}

impl EnvBuilder {
    pub fn new(p: &ValidatedParams, window: BlockRange) -> EnvBuilder {
        EnvBuilder {
            params: p.clone(),
            window,
            roi: None,
            yfield: YField::new(p, 0, 0),
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.yfield.seed = seed;
        self
    }

    pub fn trial(mut self, trial: u64) -> Self {
        self.yfield.trial = trial;
        self
    }

    /// Only sites whose cube meets `roi` are built.
    pub fn roi(mut self, roi: Rect) -> Self {
        self.roi = Some(roi);
        self
    }

    pub fn yfield(mut self, y: YField) -> Self {
        self.yfield = y;
        self
    }

    pub fn build(self) -> Result<Environment> {
        if self.window.is_empty() {
            return Err(Error::Range("empty window".into()));
        }
        let roi = self
            .roi
            .unwrap_or_else(|| block_rect(&self.params, &self.window));
        build_inner(&self.params, self.window, roi, None, self.yfield, None)
    }
}

fn build_inner(
    p: &ValidatedParams,
    window: BlockRange,
    roi: Rect,
    y_rect: Option<Rect>,
    yfield: YField,
    only: Option<&[BlockId]>,
) -> Result<Environment> {
    let y_rect = y_rect.unwrap_or_else(|| roi.expand(p.y_pad()));
    let (built, circ) = build_blocks(p, window, roi, y_rect, &yfield, only, true)?;
    let mut blocks = Vec::with_capacity(window.len());
    let mut it = built.into_iter().peekable();
    for z in window.iter() {
        match it.peek() {
            Some((z2, _)) if *z2 == z => blocks.push(Arc::new(it.next().unwrap().1)),
            _ => blocks.push(Arc::new(empty_block(p, z))),
        }
    }
    Ok(Environment {
        params: p.clone(),
        window,
        roi,
        y_rect,
        yfield,
        blocks,
        circumradius_max: circ,
    })
}

fn empty_block(p: &ValidatedParams, z: BlockId) -> BlockSites {
    let n = p.sites_per_block();
    BlockSites {
        block: z,
        b_inv: p.b_inv,
        built: vec![false; n],
        mass: vec![0.0; n],
        total: vec![0.0; n],
        offsets: vec![0; n + 1],
        segs: Vec::new(),
        cum: Vec::new(),
        near: Vec::new(),
        quad_err: Vec::new(),
    }
}

/// Y-points in the rectangle, plus the grid for grid variants; sorted.
pub(crate) fn vertex_set(p: &ValidatedParams, y_rect: &Rect, yfield: &YField) -> Vec<Point2> {
    let m = p.m;
    let (bx0, by0) = (
        (y_rect.x0 / m).floor() as i64,
        (y_rect.y0 / m).floor() as i64,
    );
    let (bx1, by1) = (
        (y_rect.x1 / m).floor() as i64,
        (y_rect.y1 / m).floor() as i64,
    );
    let mut pts = Vec::new();
    for by in by0..=by1 {
        for bx in bx0..=bx1 {
            pts.extend(
                yfield
                    .block_points([bx, by])
                    .into_iter()
                    .filter(|q| y_rect.contains_closed(*q)),
            );
        }
    }
    if p.variant.has_grid() {
        superimpose_grid(&pts, p.l, y_rect)
    } else {
        pts.sort_unstable_by(lex_cmp);
        pts.dedup();
        pts
    }
}

/// Clipped tables for the window blocks (or the `only` subset), plus the
/// largest circumradius centred in the region of interest.
fn build_blocks(
    p: &ValidatedParams,
    window: BlockRange,
    roi: Rect,
    y_rect: Rect,
    yfield: &YField,
    only: Option<&[BlockId]>,
    measure_circumradius: bool,
) -> Result<(Vec<(BlockId, BlockSites)>, f64)> {
    let pts = vertex_set(p, &y_rect, yfield);
    let raw = triangulate_raw(&pts)?;
    let mut circ = 0.0f64;
    if measure_circumradius {
        for t in &raw.triangles {
            let (c, r) = circumcircle(pts[t[0] as usize], pts[t[1] as usize], pts[t[2] as usize]);
            if roi.contains_closed(c) {
                circ = circ.max(r);
            }
        }
    }
    // Vertices are sorted, so index order is segment order and buckets
    // inherit a canonical order of pieces within each site.
    let mut keys: Vec<u64> = raw
        .edges
        .iter()
        .map(|&[a, b]| ((a.min(b) as u64) << 32) | a.max(b) as u64)
        .collect();
    keys.sort_unstable();
    let edges: Vec<Segment> = keys
        .iter()
        .map(|&k| Segment::new(pts[(k >> 32) as usize], pts[k as u32 as usize]))
        .collect();

    let targets: Vec<BlockId> = match only {
        Some(list) => list
            .iter()
            .copied()
            .filter(|z| window.contains(*z))
            .collect(),
        None => window.iter().collect(),
    };
    let reach = if p.variant == Variant::Width {
        p.w0
    } else {
        0.0
    };
    let mut slot = vec![usize::MAX; window.len()];
    for (k, z) in targets.iter().enumerate() {
        slot[window.index_of(*z).unwrap()] = k;
    }
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); targets.len()];
    let m = p.m;
    for (ei, e) in edges.iter().enumerate() {
        let bb = e.bbox().expand(reach);
        let x0 = ((bb.x0 / m).floor() as i64).max(window.lo[0]);
        let x1 = ((bb.x1 / m).floor() as i64).min(window.hi[0]);
        let y0 = ((bb.y0 / m).floor() as i64).max(window.lo[1]);
        let y1 = ((bb.y1 / m).floor() as i64).min(window.hi[1]);
        for by in y0..=y1 {
            for bx in x0..=x1 {
                let s = slot[window.index_of([bx, by]).unwrap()];
                if s != usize::MAX {
                    buckets[s].push(ei as u32);
                }
            }
        }
    }
    let out: Vec<(BlockId, BlockSites)> = targets
        .par_iter()
        .zip(buckets.par_iter())
        .map(|(&z, bucket)| (z, build_block(p, z, &edges, bucket, &roi)))
        .collect();
    Ok((out, circ))
}

fn build_block(
    p: &ValidatedParams,
    z: BlockId,
    edges: &[Segment],
    bucket: &[u32],
    roi: &Rect,
) -> BlockSites {
    let b = p.b_inv;
    let nb = b as usize;
    let n = nb * nb;
    let (ox, oy) = (p.m * z[0] as f64, p.m * z[1] as f64);
    let bounds: Vec<f64> = (0..=b).map(|i| p.bound(i)).collect();
    let mut built = vec![false; n];
    for j in 0..nb {
        for i in 0..nb {
            let (x0, x1) = (ox + bounds[i], ox + bounds[i + 1]);
            let (y0, y1) = (oy + bounds[j], oy + bounds[j + 1]);
            built[j * nb + i] = x0 <= roi.x1 && x1 >= roi.x0 && y0 <= roi.y1 && y1 >= roi.y0;
        }
    }
    let local: Vec<Segment> = bucket
        .iter()
        .map(|&e| edges[e as usize].translate(-ox, -oy))
        .collect();
    let mut bs = empty_block(p, z);
    bs.built = built;

    if p.variant == Variant::Width {
        let block = Rect::new(0.0, 0.0, p.m, p.m);
        bs.near = local
            .into_iter()
            .filter(|s| block.distance_to_segment_box(s) <= p.w0)
            .collect();
        bs.near.sort_by(segment_cmp);
        bs.quad_err = vec![0.0; n];
        for idx in 0..n {
            if !bs.built[idx] {
                continue;
            }
            let (i, j) = (idx % nb, idx / nb);
            let cube = Rect::new(bounds[i], bounds[j], bounds[i + 1], bounds[j + 1]);
            let site_near: Vec<Segment> = bs
                .near
                .iter()
                .copied()
                .filter(|s| cube.distance_to_segment_box(s) <= p.w0)
                .collect();
            let (area, err) = quadrature_area(&cube, &site_near, p.w0, 256);
            bs.mass[idx] = area.min(p.rho);
            bs.total[idx] = area;
            bs.quad_err[idx] = err;
        }
        return bs;
    }

    let mut pieces: Vec<(u32, Segment)> = Vec::with_capacity(8 * local.len());
    for s in &local {
        clip_to_grid(s, &bounds, |i, j, piece| {
            let idx = j * nb + i;
            if bs.built[idx] {
                pieces.push((idx as u32, piece));
            }
        });
    }
    let mut counts = vec![0u32; n + 1];
    for (idx, _) in &pieces {
        counts[*idx as usize + 1] += 1;
    }
    for idx in 0..n {
        counts[idx + 1] += counts[idx];
    }
    bs.offsets.copy_from_slice(&counts);
    bs.segs = vec![Segment::new(Point2::new(0.0, 0.0), Point2::new(0.0, 0.0)); pieces.len()];
    for (idx, piece) in pieces {
        let slot = &mut counts[idx as usize];
        bs.segs[*slot as usize] = piece;
        *slot += 1;
    }
    bs.cum = Vec::with_capacity(bs.segs.len());
    for idx in 0..n {
        let mut acc = 0.0;
        for s in &bs.segs[bs.offsets[idx] as usize..bs.offsets[idx + 1] as usize] {
            acc += s.length();
            bs.cum.push(acc);
        }
        bs.total[idx] = acc;
        bs.mass[idx] = if p.variant == Variant::Capped {
            acc.min(p.rho)
        } else {
            acc
        };
    }
    bs.offsets[n] = bs.segs.len() as u32;
    bs
}

impl Rect {
    /// Distance from the box to the bounding box of a segment (a lower bound
    /// on the distance to the segment).
    fn distance_to_segment_box(&self, s: &Segment) -> f64 {
        let bb = s.bbox();
        let dx = (bb.x0 - self.x1).max(self.x0 - bb.x1).max(0.0);
        let dy = (bb.y0 - self.y1).max(self.y0 - bb.y1).max(0.0);
        dx.hypot(dy)
    }
}

#[cfg(test)]
mod tests;
