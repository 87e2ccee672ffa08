use rand::Rng;
use rayon::prelude::*;

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::lattice::{
    derive_stream, site_from_local, BlockId, BlockRange, Purpose, StreamKey, ValidatedParams,
};
use crate::percolation::{crossing_levels, FlaggedClusters, Instance};
use crate::sampler::{mark_position, realize_block, resample, Driver, ResampleScope};

const PIV_LANE: u64 = 0x5049_5600;

/// Index of the independent copy used for resampling.
const RESAMPLE_J: u32 = 1;

/// Influence and pivotality estimates for one block.
#[derive(Clone, Debug, PartialEq)]
pub struct InfluenceEstimate {
    pub target: BlockId,
    pub trials: u64,
    pub inf_x: f64,
    pub inf_x_se: f64,
    pub inf_y: f64,
    pub inf_y_se: f64,
    pub inf_joint: f64,
    pub inf_joint_se: f64,
    /// Sum over the sites of the block of the integral of Piv over (r, u).
    pub piv_integral: f64,
    pub piv_se: f64,
}

impl InfluenceEstimate {
    pub fn to_text(&self) -> String {
        format!(
            "kind = influence\nblock_x = {}\nblock_y = {}\ntrials = {}\n\
             inf_x = {}\ninf_x_se = {}\ninf_y = {}\ninf_y_se = {}\n\
             inf_joint = {}\ninf_joint_se = {}\npiv_integral = {}\npiv_se = {}\n",
            self.target[0],
            self.target[1],
            self.trials,
            self.inf_x,
            self.inf_x_se,
            self.inf_y,
            self.inf_y_se,
            self.inf_joint,
            self.inf_joint_se,
            self.piv_integral,
            self.piv_se
        )
    }
}

/// What each trial of a survey measures.
#[derive(Clone, Copy, Debug)]
pub(crate) struct SurveySpec {
    pub lambda: f64,
    pub n: i64,
    /// Driver level; at least lambda.
    pub lambda_max: f64,
    pub resampling: bool,
    /// Piv probes per block and trial; 0 disables.
    pub probes: u32,
    /// Record the crossing levels of f_s, 5 <= s <= n (up to lambda_max).
    pub levels: bool,
}

/// Per-trial outcome; block vectors follow the survey's block list.
#[derive(Clone, Debug)]
pub(crate) struct TrialSurvey {
    pub base: bool,
    /// Crossing levels of f_s for s = 5..=n, when requested.
    pub levels: Vec<Option<f64>>,
    pub x: Vec<bool>,
    pub y: Vec<bool>,
    pub joint: Vec<bool>,
    pub piv: Vec<f64>,
}

/// Blocks that can influence f_n: the window and, for the environment, the
/// Y-blocks within the dependency radius of it.
pub(crate) fn relevant_blocks(p: &ValidatedParams, n: i64) -> BlockRange {
    let (w, _) = crate::percolation::window_for(p, n);
    w.expand(p.dependency_radius().unwrap_or(p.y_pad_blocks()))
}

struct Base<'a> {
    env: &'a Environment,
    driver: &'a Driver,
    w: BlockRange,
    pts: Vec<Vec<Point2>>,
    p: &'a ValidatedParams,
    n: i64,
    lambda: f64,
}

impl Base<'_> {
    fn block_points(driver: &Driver, env: &Environment, z: BlockId, lambda: f64) -> Vec<Point2> {
        realize_block(driver, env, z, lambda)
            .0
            .into_iter()
            .map(|q| q.p)
            .collect()
    }

    /// f_n after replacing the points of some window blocks.
    fn f_with(&self, repl: &[(usize, Vec<Point2>)]) -> bool {
        let mut skip = vec![false; self.pts.len()];
        for (i, _) in repl {
            skip[*i] = true;
        }
        let all = self
            .pts
            .iter()
            .enumerate()
            .filter(|(i, _)| !skip[*i])
            .flat_map(|(_, v)| v.iter().copied())
            .chain(repl.iter().flat_map(|(_, v)| v.iter().copied()));
        FlaggedClusters::new(all, self.p, self.n).crossed()
    }

    fn affected(&self, z: BlockId) -> BlockRange {
        match self.p.dependency_radius() {
            Some(r) => self.w.intersect(&BlockRange::around(z, r)),
            None => self.w,
        }
    }

    /// Flips under driver, environment and joint resampling of z.
    fn resampled(&self, z: BlockId, base: bool) -> Result<(bool, bool, bool)> {
        let wi = self.w.index_of(z);
        let d2 = match wi {
            Some(_) => Some(resample(self.driver, ResampleScope::Block(z), RESAMPLE_J, None)?.0),
            None => None,
        };
        let x = match (wi, &d2) {
            (Some(i), Some(d)) => {
                self.f_with(&[(i, Self::block_points(d, self.env, z, self.lambda))]) != base
            }
            _ => false,
        };
        let env2 = match self.env.resample_env_block(z, RESAMPLE_J) {
            Ok(e) => e,
            Err(Error::OutOfWindow(_)) => return Ok((x, false, x)),
            Err(e) => return Err(e),
        };
        let aff = self.affected(z);
        let with = |d: &Driver, extra: Option<usize>| -> Vec<(usize, Vec<Point2>)> {
            let mut v: Vec<(usize, Vec<Point2>)> = aff
                .iter()
                .map(|b| {
                    (
                        self.w.index_of(b).unwrap(),
                        Self::block_points(d, &env2, b, self.lambda),
                    )
                })
                .collect();
            if let Some(i) = extra {
                if !v.iter().any(|(j, _)| *j == i) {
                    v.push((i, Self::block_points(d, &env2, z, self.lambda)));
                }
            }
            v
        };
        let y = self.f_with(&with(self.driver, None)) != base;
        let joint = match &d2 {
            Some(d) => self.f_with(&with(d, wi)) != base,
            None => y,
        };
        Ok((x, y, joint))
    }
}

/// Estimate of sum over sites x of block z of the integral of Piv_x over
/// [0,1] x [0, rho] for this trial: W * mean flip, with the site drawn
/// proportionally to its mass W_x and u integrated out.
fn piv_probe(
    b: &Base<'_>,
    fc: &mut FlaggedClusters,
    z: BlockId,
    probes: u32,
    seed: u64,
    trial: u64,
) -> f64 {
    let Some(bs) = b.env.block(z) else {
        return 0.0;
    };
    let mut cum = Vec::with_capacity(bs.mass.len());
    let mut total = 0.0;
    for (i, &m) in bs.mass.iter().enumerate() {
        if bs.built[i] {
            total += m;
        }
        cum.push(total);
    }
    if !(total > 0.0) || probes == 0 {
        return 0.0;
    }
    let mut rng = derive_stream(&StreamKey::new(seed, z, Purpose::Alg, trial).lane(PIV_LANE));
    let b_inv = b.p.b_inv;
    let mut flips = 0u32;
    for _ in 0..probes {
        let target = rng.gen::<f64>() * total;
        let idx = cum.partition_point(|&c| c <= target).min(cum.len() - 1);
        let r: f64 = rng.gen();
        let k = site_from_local(z, idx, b_inv);
        let Some(site) = b.env.site(k) else { continue };
        if let Some(q) = mark_position(&site, r) {
            flips += fc.flips_with(q) as u32;
        }
    }
    total * flips as f64 / probes as f64
}

pub(crate) fn survey_trial(
    p: &ValidatedParams,
    spec: &SurveySpec,
    blocks: &[BlockId],
    seed: u64,
    trial: u64,
) -> Result<TrialSurvey> {
    let inst = Instance::new(p, spec.n, spec.lambda_max, seed, trial)?;
    let w = inst.env.window();
    let pts: Vec<Vec<Point2>> = w
        .iter()
        .map(|z| Base::block_points(&inst.driver, &inst.env, z, spec.lambda))
        .collect();
    let b = Base {
        env: &inst.env,
        driver: &inst.driver,
        w,
        pts,
        p,
        n: spec.n,
        lambda: spec.lambda,
    };
    let mut fc = FlaggedClusters::new(b.pts.iter().flatten().copied(), p, spec.n);
    let base = fc.crossed();
    let levels = if spec.levels {
        let ss: Vec<i64> = (5..=spec.n).collect();
        crossing_levels(&inst.driver, &inst.env, &ss)?
    } else {
        Vec::new()
    };
    let k = blocks.len();
    let mut out = TrialSurvey {
        base,
        levels,
        x: vec![false; k],
        y: vec![false; k],
        joint: vec![false; k],
        piv: vec![0.0; k],
    };
    for (i, &z) in blocks.iter().enumerate() {
        if spec.resampling {
            let (x, y, j) = b.resampled(z, base)?;
            out.x[i] = x;
            out.y[i] = y;
            out.joint[i] = j;
        }
        if spec.probes > 0 && !base && w.contains(z) {
            out.piv[i] = piv_probe(&b, &mut fc, z, spec.probes, seed, trial);
        }
    }
    Ok(out)
}

/// Trials in parallel, collected in trial order.
pub(crate) fn run_survey(
    p: &ValidatedParams,
    spec: &SurveySpec,
    blocks: &[BlockId],
    trials: u64,
    seed: u64,
) -> Result<Vec<TrialSurvey>> {
    if trials == 0 {
        return Err(Error::Range("trials must be at least 1".into()));
    }
    if spec.n < 5 {
        return Err(Error::NTooSmall { n: spec.n, min: 5 });
    }
    if !(spec.lambda >= 0.0 && spec.lambda <= spec.lambda_max && spec.lambda_max.is_finite()) {
        return Err(Error::Range(format!("lambda = {}", spec.lambda)));
    }
    (0..trials)
        .into_par_iter()
        .map(|t| survey_trial(p, spec, blocks, seed, t))
        .collect()
}

pub(crate) fn bernoulli(hits: impl Iterator<Item = bool>, trials: u64) -> (f64, f64) {
    let k = hits.filter(|&h| h).count() as f64;
    let t = trials as f64;
    let m = k / t;
    (m, (m * (1.0 - m) / t).sqrt())
}

/// Sample mean and its standard error.
pub(crate) fn mean_se(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let xs: Vec<f64> = v.collect();
    (super::mean(&xs), super::std_error(&xs))
}

/// Default number of Piv probes per block and trial.
pub const DEFAULT_PROBES: u32 = 16;

/// Resampling influences of the driver, the environment and both at block
/// z, and the integrated pivotality of its sites. Blocks that cannot affect
/// f_n get exact zeros.
pub fn estimate_influences(
    p: &ValidatedParams,
    lambda: f64,
    n: i64,
    target: BlockId,
    trials: u64,
    seed: u64,
) -> Result<InfluenceEstimate> {
    estimate_influences_with(p, lambda, n, target, trials, DEFAULT_PROBES, seed)
}

pub fn estimate_influences_with(
    p: &ValidatedParams,
    lambda: f64,
    n: i64,
    target: BlockId,
    trials: u64,
    probes: u32,
    seed: u64,
) -> Result<InfluenceEstimate> {
    let reach = relevant_blocks(p, n);
    let zero = InfluenceEstimate {
        target,
        trials,
        inf_x: 0.0,
        inf_x_se: 0.0,
        inf_y: 0.0,
        inf_y_se: 0.0,
        inf_joint: 0.0,
        inf_joint_se: 0.0,
        piv_integral: 0.0,
        piv_se: 0.0,
    };
    if trials == 0 {
        return Err(Error::Range("trials must be at least 1".into()));
    }
    if !reach.contains(target) {
        return Ok(zero);
    }
    let spec = SurveySpec {
        lambda,
        n,
        lambda_max: lambda,
        resampling: true,
        probes,
        levels: false,
    };
    let s = run_survey(p, &spec, &[target], trials, seed)?;
    let (inf_x, inf_x_se) = bernoulli(s.iter().map(|t| t.x[0]), trials);
    let (inf_y, inf_y_se) = bernoulli(s.iter().map(|t| t.y[0]), trials);
    let (inf_joint, inf_joint_se) = bernoulli(s.iter().map(|t| t.joint[0]), trials);
    let (piv_integral, piv_se) = mean_se(s.iter().map(|t| t.piv[0]));
    Ok(InfluenceEstimate {
        target,
        trials,
        inf_x,
        inf_x_se,
        inf_y,
        inf_y_se,
        inf_joint,
        inf_joint_se,
        piv_integral,
        piv_se,
    })
}
