//! Model parameters, block/site indexing and keyed random streams.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Block index z in Z^2. Block z covers Mz + [0, M)^2.
pub type BlockId = [i64; 2];
/// Site index k; the site is x = b k and owns the cube Mx + [0, Mb)^2.
pub type SiteId = [i64; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Del,
    DelGrid,
    Width,
    Capped,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Del => "DEL",
            Variant::DelGrid => "DEL_GRID",
            Variant::Width => "WIDTH",
            Variant::Capped => "CAPPED",
        }
    }

    /// Whether the street system contains the sparse grid L Z^2.
    pub fn has_grid(self) -> bool {
        !matches!(self, Variant::Del)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().replace('-', "_").as_str() {
            "DEL" => Ok(Variant::Del),
            "DEL_GRID" => Ok(Variant::DelGrid),
            "WIDTH" => Ok(Variant::Width),
            "CAPPED" => Ok(Variant::Capped),
            other => Err(format!("unknown variant '{other}'")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub d: usize,
    /// Coarse scale M.
    pub m: f64,
    /// Integer reciprocal of the fine scale b.
    pub b_inv: u32,
    pub lambda: f64,
    pub lambda_del: f64,
    /// Sparse grid spacing L.
    pub l: f64,
    pub rho: f64,
    pub w0: f64,
    pub eta: f64,
    pub variant: Variant,
    pub ball_radius: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            d: 2,
            m: 1.0,
            b_inv: 5,
            lambda: 1.0,
            lambda_del: 1.0,
            l: 1.0,
            rho: 1.0,
            w0: 0.0,
            eta: 1e-3,
            variant: Variant::Capped,
            ball_radius: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ParamViolation {
    #[error("INVALID_SCALE: b^-1 = {b_inv} must be an integer exceeding 2dM = {bound}")]
    InvalidScale { b_inv: u32, bound: f64 },
    #[error("INVALID_GRID: M = {m} must equal M'L for a positive integer M' (L = {l})")]
    InvalidGrid { m: f64, l: f64 },
    #[error("NONPOSITIVE: {0} must be positive")]
    NonPositive(&'static str),
    #[error("OUT_OF_RANGE: {0}")]
    OutOfRange(String),
}

/// Parameters that passed [`validate_params`]. WIDTH has rho normalized to (Mb)^2.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidatedParams {
    p: ModelParams,
    m_prime: Option<u32>,
}

impl std::ops::Deref for ValidatedParams {
    type Target = ModelParams;
    fn deref(&self) -> &ModelParams {
        &self.p
    }
}

impl ValidatedParams {
    pub fn params(&self) -> &ModelParams {
        &self.p
    }

    pub fn m_prime(&self) -> Option<u32> {
        self.m_prime
    }

    /// Returns a copy with a different device intensity.
    pub fn with_lambda(&self, lambda: f64) -> ValidatedParams {
        let mut v = self.clone();
        v.p.lambda = lambda;
        v
    }

    pub fn b(&self) -> f64 {
        1.0 / self.p.b_inv as f64
    }

    /// Side length Mb of a site cube.
    pub fn site_side(&self) -> f64 {
        self.p.m / self.p.b_inv as f64
    }

    pub fn sites_per_block(&self) -> usize {
        (self.p.b_inv as usize) * (self.p.b_inv as usize)
    }

    /// Block-local coordinate of the i-th site boundary, exact at both ends.
    pub fn bound(&self, i: u32) -> f64 {
        if i == 0 {
            0.0
        } else if i == self.p.b_inv {
            self.p.m
        } else {
            self.p.m * i as f64 / self.p.b_inv as f64
        }
    }

    /// Block radius (in the sup norm) beyond which Y-blocks cannot influence
    /// the environment of a block. `None` for the pure Delaunay variant.
    pub fn dependency_radius(&self) -> Option<i64> {
        if !self.p.variant.has_grid() {
            return None;
        }
        let reach = self.p.l * std::f64::consts::SQRT_2 + self.width_reach();
        Some(((reach / self.p.m).ceil() as i64).max(1))
    }

    fn width_reach(&self) -> f64 {
        if self.p.variant == Variant::Width {
            self.p.w0
        } else {
            0.0
        }
    }

    /// Padding (length units) between the environment window and the Y-window.
    pub fn y_pad(&self) -> f64 {
        if self.p.variant.has_grid() {
            (4.0 * self.p.l).max(self.p.l * std::f64::consts::SQRT_2 + self.width_reach())
        } else {
            (2.0 * self.p.m).max((6.0 / self.p.lambda_del.sqrt()).min(16.0 * self.p.m))
        }
    }

    pub fn y_pad_blocks(&self) -> i64 {
        let pb = (self.y_pad() / self.p.m - 1e-12).ceil() as i64;
        pb.max(self.dependency_radius().unwrap_or(1))
    }
}

pub fn validate_params(p: &ModelParams) -> Result<ValidatedParams, Vec<ParamViolation>> {
    let mut v = Vec::new();
    let mut q = p.clone();
    if p.d != 2 {
        v.push(ParamViolation::OutOfRange(format!(
            "d = {} but only d = 2 is supported",
            p.d
        )));
    }
    if !(p.m.is_finite() && p.m > 0.0) {
        v.push(ParamViolation::NonPositive("M"));
    }
    let bound = 2.0 * p.d as f64 * p.m;
    if !(p.b_inv as f64 > bound) {
        v.push(ParamViolation::InvalidScale {
            b_inv: p.b_inv,
            bound,
        });
    }
    if !(p.lambda_del.is_finite() && p.lambda_del > 0.0) {
        v.push(ParamViolation::NonPositive("lambda_del"));
    }
    if !(p.rho.is_finite() && p.rho > 0.0) && p.variant != Variant::Width {
        v.push(ParamViolation::NonPositive("rho"));
    }
    if !(p.eta.is_finite() && p.eta > 0.0) {
        v.push(ParamViolation::NonPositive("eta"));
    }
    if !(p.lambda.is_finite() && p.lambda >= 0.0) {
        v.push(ParamViolation::OutOfRange(format!(
            "lambda = {} must be >= 0",
            p.lambda
        )));
    }
    if !(p.ball_radius.is_finite() && p.ball_radius > 0.0) {
        v.push(ParamViolation::NonPositive("ball_radius"));
    }
    if !(p.w0.is_finite() && p.w0 >= 0.0) {
        v.push(ParamViolation::OutOfRange(format!(
            "w0 = {} must be >= 0",
            p.w0
        )));
    }
    if !(p.l.is_finite() && p.l >= 1.0) {
        v.push(ParamViolation::OutOfRange(format!(
            "L = {} must be >= 1",
            p.l
        )));
    }
    let mut m_prime = None;
    if p.variant.has_grid() && p.l.is_finite() && p.l >= 1.0 && p.m > 0.0 {
        let k = (p.m / p.l).round();
        if k >= 1.0 && (k * p.l - p.m).abs() <= 1e-9 * p.m {
            m_prime = Some(k as u32);
        } else {
            v.push(ParamViolation::InvalidGrid { m: p.m, l: p.l });
        }
    }
    if p.variant == Variant::Width {
        let s = p.m / p.b_inv.max(1) as f64;
        q.rho = s * s;
    }
    if q.eta > q.rho && q.rho > 0.0 {
        v.push(ParamViolation::OutOfRange(format!(
            "eta = {} exceeds rho = {}",
            q.eta, q.rho
        )));
    }
    if v.is_empty() {
        Ok(ValidatedParams { p: q, m_prime })
    } else {
        Err(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IndexKind {
    IPlus,
    IPlusPlus,
    Ib,
    IbPlus,
    IbPlusPlus,
}

/// All integer vectors v with lo <= v < hi componentwise, in lexicographic order.
pub fn box_indices<const D: usize>(lo: [i64; D], hi: [i64; D]) -> Vec<[i64; D]> {
    if (0..D).any(|i| hi[i] <= lo[i]) {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut cur = lo;
    loop {
        out.push(cur);
        let mut i = D;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            cur[i] += 1;
            if cur[i] < hi[i] {
                break;
            }
            cur[i] = lo[i];
        }
    }
}

/// Index sets around block z: block ids for the `I` kinds, site ids for the `Ib` kinds.
pub fn index_neighbors<const D: usize>(kind: IndexKind, z: [i64; D], b_inv: u32) -> Vec<[i64; D]> {
    let b = b_inv as i64;
    let (lo_off, hi_off, sites) = match kind {
        IndexKind::IPlus => (-1, 2, false),
        IndexKind::IPlusPlus => (-2, 3, false),
        IndexKind::Ib => (0, 1, true),
        IndexKind::IbPlus => (-1, 2, true),
        IndexKind::IbPlusPlus => (-2, 3, true),
    };
    let scale = if sites { b } else { 1 };
    let lo = std::array::from_fn(|i| (z[i] + lo_off) * scale);
    let hi = std::array::from_fn(|i| (z[i] + hi_off) * scale);
    box_indices(lo, hi)
}

pub fn block_of_site<const D: usize>(k: [i64; D], b_inv: u32) -> [i64; D] {
    std::array::from_fn(|i| k[i].div_euclid(b_inv as i64))
}

/// Position of the site inside its block, as (column, row).
pub fn local_site(k: SiteId, b_inv: u32) -> [u32; 2] {
    let b = b_inv as i64;
    [k[0].rem_euclid(b) as u32, k[1].rem_euclid(b) as u32]
}

/// Row-major offset of a site inside its block's site table.
pub fn local_index(k: SiteId, b_inv: u32) -> usize {
    let [i, j] = local_site(k, b_inv);
    j as usize * b_inv as usize + i as usize
}

pub fn site_from_local(z: BlockId, idx: usize, b_inv: u32) -> SiteId {
    let b = b_inv as i64;
    [
        z[0] * b + (idx % b_inv as usize) as i64,
        z[1] * b + (idx / b_inv as usize) as i64,
    ]
}

pub fn sup_norm(z: BlockId) -> i64 {
    z[0].abs().max(z[1].abs())
}

/// Inclusive rectangle of block ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BlockRange {
    pub lo: BlockId,
    pub hi: BlockId,
}

impl BlockRange {
    pub fn new(lo: BlockId, hi: BlockId) -> BlockRange {
        BlockRange { lo, hi }
    }

    pub fn around(z: BlockId, r: i64) -> BlockRange {
        BlockRange {
            lo: [z[0] - r, z[1] - r],
            hi: [z[0] + r, z[1] + r],
        }
    }

    pub fn width(&self) -> i64 {
        (self.hi[0] - self.lo[0] + 1).max(0)
    }

    pub fn height(&self) -> i64 {
        (self.hi[1] - self.lo[1] + 1).max(0)
    }

    pub fn len(&self) -> usize {
        (self.width() * self.height()) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, z: BlockId) -> bool {
        z[0] >= self.lo[0] && z[0] <= self.hi[0] && z[1] >= self.lo[1] && z[1] <= self.hi[1]
    }

    pub fn contains_range(&self, o: &BlockRange) -> bool {
        o.is_empty() || (self.contains(o.lo) && self.contains(o.hi))
    }

    /// Row-major position of z.
    pub fn index_of(&self, z: BlockId) -> Option<usize> {
        if !self.contains(z) {
            return None;
        }
        Some(((z[1] - self.lo[1]) * self.width() + (z[0] - self.lo[0])) as usize)
    }

    pub fn block_at(&self, idx: usize) -> BlockId {
        let w = self.width() as usize;
        [self.lo[0] + (idx % w) as i64, self.lo[1] + (idx / w) as i64]
    }

    pub fn expand(&self, r: i64) -> BlockRange {
        BlockRange {
            lo: [self.lo[0] - r, self.lo[1] - r],
            hi: [self.hi[0] + r, self.hi[1] + r],
        }
    }

    pub fn intersect(&self, o: &BlockRange) -> BlockRange {
        BlockRange {
            lo: [self.lo[0].max(o.lo[0]), self.lo[1].max(o.lo[1])],
            hi: [self.hi[0].min(o.hi[0]), self.hi[1].min(o.hi[1])],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = BlockId> + '_ {
        (0..self.len()).map(move |i| self.block_at(i))
    }
}

/// Source of randomness a stream is reserved for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Purpose {
    Env,
    Driver,
    ResampleEnv(u32),
    ResampleDriver(u32),
    Alg,
}

impl Purpose {
    fn tag(self) -> (u8, u32) {
        match self {
            Purpose::Env => (1, 0),
            Purpose::Driver => (2, 0),
            Purpose::ResampleEnv(j) => (3, j),
            Purpose::ResampleDriver(j) => (4, j),
            Purpose::Alg => (5, 0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub master_seed: u64,
    pub block: BlockId,
    pub purpose: Purpose,
    pub trial: u64,
    /// Sub-stream index within one (block, purpose, trial) cell.
    pub lane: u64,
}

impl StreamKey {
    pub fn new(master_seed: u64, block: BlockId, purpose: Purpose, trial: u64) -> StreamKey {
        StreamKey {
            master_seed,
            block,
            purpose,
            trial,
            lane: 0,
        }
    }

    pub fn lane(mut self, lane: u64) -> StreamKey {
        self.lane = lane;
        self
    }

    pub fn digest(&self) -> [u8; 32] {
        let (tag, j) = self.purpose.tag();
        let mut h = Sha256::new();
        h.update(b"coxperc/stream/v1");
        h.update(self.master_seed.to_le_bytes());
        h.update(self.block[0].to_le_bytes());
        h.update(self.block[1].to_le_bytes());
        h.update([tag]);
        h.update(j.to_le_bytes());
        h.update(self.trial.to_le_bytes());
        h.update(self.lane.to_le_bytes());
        h.finalize().into()
    }
}

pub type Stream = ChaCha8Rng;

pub fn derive_stream(key: &StreamKey) -> Stream {
    ChaCha8Rng::from_seed(key.digest())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    fn base() -> ModelParams {
        ModelParams {
            m: 1.0,
            b_inv: 5,
            l: 1.0,
            ..ModelParams::default()
        }
    }

    #[test]
    fn scale_rule() {
        assert!(validate_params(&base()).is_ok());
        let e = validate_params(&ModelParams { b_inv: 4, ..base() }).unwrap_err();
        assert!(matches!(
            e[0],
            ParamViolation::InvalidScale { b_inv: 4, .. }
        ));
    }

    #[test]
    fn nonpositive_lambda_del() {
        let p = ModelParams {
            m: 2.0,
            l: 1.0,
            b_inv: 9,
            lambda_del: 0.0,
            ..base()
        };
        let e = validate_params(&p).unwrap_err();
        assert_eq!(e, vec![ParamViolation::NonPositive("lambda_del")]);
    }

    #[test]
    fn grid_rule() {
        let p = ModelParams {
            m: 5.0,
            l: 2.0,
            b_inv: 21,
            ..base()
        };
        assert!(matches!(
            validate_params(&p).unwrap_err()[0],
            ParamViolation::InvalidGrid { .. }
        ));
        let p = ModelParams {
            variant: Variant::Del,
            ..p
        };
        assert!(validate_params(&p).is_ok());
        let p = ModelParams {
            m: 5.0,
            l: 2.5,
            b_inv: 21,
            ..base()
        };
        assert_eq!(validate_params(&p).unwrap().m_prime(), Some(2));
    }

    #[test]
    fn width_normalizes_rho() {
        let p = ModelParams {
            variant: Variant::Width,
            rho: 7.0,
            eta: 1e-4,
            ..base()
        };
        let v = validate_params(&p).unwrap();
        assert!((v.rho - 0.04).abs() < 1e-15);
    }

    #[test]
    fn neighborhood_sizes() {
        assert_eq!(index_neighbors(IndexKind::IPlus, [0, 0], 5).len(), 9);
        assert_eq!(index_neighbors(IndexKind::IPlusPlus, [0, 0], 5).len(), 25);
        assert_eq!(index_neighbors(IndexKind::Ib, [0, 0], 5).len(), 25);
        assert_eq!(index_neighbors(IndexKind::IbPlus, [3, -2], 5).len(), 225);
        assert_eq!(index_neighbors(IndexKind::IbPlusPlus, [0, 0], 5).len(), 625);
        assert_eq!(index_neighbors(IndexKind::IPlus, [0, 0, 0], 5).len(), 27);
    }

    #[test]
    fn site_block_roundtrip() {
        for k in box_indices([-12, -12], [13, 13]) {
            let z = block_of_site(k, 5);
            assert_eq!(site_from_local(z, local_index(k, 5), 5), k);
        }
    }

    #[test]
    fn same_key_same_stream() {
        let k = StreamKey::new(7, [1, -2], Purpose::Driver, 3);
        let (mut a, mut b) = (derive_stream(&k), derive_stream(&k));
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = derive_stream(&StreamKey { trial: 4, ..k });
        assert_ne!(derive_stream(&k).next_u64(), c.next_u64());
    }

    #[test]
    fn block_range_indexing() {
        let r = BlockRange::new([-2, 3], [1, 5]);
        assert_eq!(r.len(), 12);
        for (i, z) in r.iter().enumerate() {
            assert_eq!(r.index_of(z), Some(i));
        }
        assert_eq!(r.index_of([2, 3]), None);
    }
}
