use std::collections::{HashSet, VecDeque};

use rayon::prelude::*;

use crate::environment::{EnvBuilder, YField};
use crate::error::{Error, Result};
use crate::lattice::{block_of_site, BlockId, BlockRange, SiteId, ValidatedParams};
use crate::sampler::{realize, sample_driver_trial, Driver};

/// Bad and good probabilities of block 0 at one level.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteDiagnostics {
    pub lambda: f64,
    pub trials: u64,
    pub p_bad: f64,
    pub p_bad_se: f64,
    pub p_good: f64,
    pub p_good_se: f64,
}

/// Per-trial outcomes over a coupled lambda grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteSweep {
    pub rows: Vec<SiteDiagnostics>,
    /// Trials where bad switched off as lambda grew (always 0).
    pub bad_violations: u64,
    /// Trials where good switched off as lambda grew.
    pub good_violations: u64,
}

/// Some driver mark of a site in I_b(z) is active at lambda.
pub fn is_bad(driver: &Driver, z: BlockId, lambda: f64) -> bool {
    driver
        .block(z)
        .is_some_and(|b| b.marks.iter().any(|m| m.t <= lambda))
}

/// (i) some site of I_b(z) is populated and (ii) the populated sites of
/// I_b^+(z) are joined by chains of 8-adjacent populated sites in I_b^{++}(z).
pub fn is_good(populated: &HashSet<SiteId>, z: BlockId, b_inv: u32) -> bool {
    let inner = BlockRange::around(z, 1);
    let outer = BlockRange::around(z, 2);
    if !populated.iter().any(|&x| block_of_site(x, b_inv) == z) {
        return false;
    }
    let targets: Vec<SiteId> = populated
        .iter()
        .copied()
        .filter(|&x| inner.contains(block_of_site(x, b_inv)))
        .collect();
    let start = *targets.iter().min().unwrap();
    let mut seen: HashSet<SiteId> = HashSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(x) = queue.pop_front() {
        for dx in -1..=1 {
            for dy in -1..=1 {
                let y = [x[0] + dx, x[1] + dy];
                if populated.contains(&y)
                    && outer.contains(block_of_site(y, b_inv))
                    && seen.insert(y)
                {
                    queue.push_back(y);
                }
            }
        }
    }
    targets.iter().all(|x| seen.contains(x))
}

/// Bad/good frequencies of block 0 over a lambda grid, coupled per trial.
pub fn site_diagnostics(
    p: &ValidatedParams,
    lambdas: &[f64],
    trials: u64,
    seed: u64,
) -> Result<SiteSweep> {
    if trials == 0 {
        return Err(Error::Range("trials must be at least 1".into()));
    }
    let mut grid = lambdas.to_vec();
    grid.sort_by(f64::total_cmp);
    let lmax = grid.last().copied().unwrap_or(0.0);
    let w = BlockRange::around([0, 0], 2);
    let per: Vec<Result<Vec<(bool, bool)>>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let env = EnvBuilder::new(p, w)
                .yfield(YField::new(p, seed, t))
                .build()?;
            let d = sample_driver_trial(p, w, lmax, seed, t)?;
            grid.iter()
                .map(|&l| {
                    let c = realize(&d, &env, l)?;
                    let pop: HashSet<SiteId> = c.points.iter().map(|q| q.site).collect();
                    Ok((is_bad(&d, [0, 0], l), is_good(&pop, [0, 0], p.b_inv)))
                })
                .collect()
        })
        .collect();
    let tf = trials as f64;
    let mut bad = vec![0u64; grid.len()];
    let mut good = vec![0u64; grid.len()];
    let (mut bv, mut gv) = (0, 0);
    for r in per {
        let r = r?;
        for (k, (b, g)) in r.iter().enumerate() {
            bad[k] += *b as u64;
            good[k] += *g as u64;
        }
        bv += r.windows(2).any(|w| w[0].0 && !w[1].0) as u64;
        gv += r.windows(2).any(|w| w[0].1 && !w[1].1) as u64;
    }
    let se = |c: u64| {
        let q = c as f64 / tf;
        (q, (q * (1.0 - q) / tf).sqrt())
    };
    let rows = grid
        .iter()
        .enumerate()
        .map(|(k, &lambda)| {
            let (p_bad, p_bad_se) = se(bad[k]);
            let (p_good, p_good_se) = se(good[k]);
            SiteDiagnostics {
                lambda,
                trials,
                p_bad,
                p_bad_se,
                p_good,
                p_good_se,
            }
        })
        .collect();
    Ok(SiteSweep {
        rows,
        bad_violations: bv,
        good_violations: gv,
    })
}
