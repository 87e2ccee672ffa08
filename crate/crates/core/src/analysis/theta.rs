use rayon::prelude::*;

use super::stats::wilson_interval;
use crate::error::{Error, Result};
use crate::lattice::ValidatedParams;
use crate::percolation::{crossing_levels, Instance};

/// Monte Carlo estimate of theta_n(lambda).
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaEstimate {
    pub lambda: f64,
    pub n: i64,
    pub trials: u64,
    pub hits: u64,
    pub theta: f64,
    /// Wilson 95% interval.
    pub ci: (f64, f64),
    pub seed: u64,
}

pub const THETA_HEADER: &str = "lambda,n,trials,hits,theta,ci_lo,ci_hi,seed";

impl ThetaEstimate {
    pub fn from_hits(lambda: f64, n: i64, trials: u64, hits: u64, seed: u64) -> ThetaEstimate {
        if n <= 4 {
            return ThetaEstimate {
                lambda,
                n,
                trials,
                hits: trials,
                theta: 1.0,
                ci: (1.0, 1.0),
                seed,
            };
        }
        ThetaEstimate {
            lambda,
            n,
            trials,
            hits,
            theta: if trials == 0 {
                0.0
            } else {
                hits as f64 / trials as f64
            },
            ci: wilson_interval(hits, trials),
            seed,
        }
    }

    pub fn row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.lambda,
            self.n,
            self.trials,
            self.hits,
            self.theta,
            self.ci.0,
            self.ci.1,
            self.seed
        )
    }
}

/// Table text with header, one row per estimate.
pub fn theta_table_text(rows: &[ThetaEstimate]) -> String {
    let mut s = String::from(THETA_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.row());
        s.push('\n');
    }
    s
}

fn check_trials(trials: u64) -> Result<()> {
    if trials == 0 {
        return Err(Error::Range("trials must be at least 1".into()));
    }
    Ok(())
}

/// theta_n(lambda) from independent trials, each with its own environment and
/// driver. n <= 4 returns 1 by convention without sampling.
pub fn estimate_theta(
    p: &ValidatedParams,
    lambda: f64,
    n: i64,
    trials: u64,
    seed: u64,
) -> Result<ThetaEstimate> {
    check_trials(trials)?;
    if n <= 4 {
        return Ok(ThetaEstimate::from_hits(lambda, n, trials, trials, seed));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Range(format!("lambda = {lambda}")));
    }
    let outcomes: Vec<Result<bool>> = (0..trials)
        .into_par_iter()
        .map(|t| Instance::new(p, n, lambda, seed, t)?.f_n(lambda))
        .collect();
    let mut hits = 0;
    for o in outcomes {
        hits += o? as u64;
    }
    Ok(ThetaEstimate::from_hits(lambda, n, trials, hits, seed))
}

/// Per-trial crossing levels for every n in `ns`, all read off one coupled
/// instance on the window of the largest n. Entries for n <= 4 are 0.
pub fn trial_levels(
    p: &ValidatedParams,
    ns: &[i64],
    lambda_max: f64,
    trials: u64,
    seed: u64,
) -> Result<Vec<Vec<Option<f64>>>> {
    check_trials(trials)?;
    let live: Vec<i64> = ns.iter().copied().filter(|&n| n > 4).collect();
    let per_trial: Vec<Result<Vec<Option<f64>>>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let lv = match live.iter().max() {
                Some(&nmax) => {
                    let inst = Instance::new(p, nmax, lambda_max, seed, t)?;
                    crossing_levels(&inst.driver, &inst.env, &live)?
                }
                None => Vec::new(),
            };
            let mut it = lv.into_iter();
            Ok(ns
                .iter()
                .map(|&n| {
                    if n <= 4 {
                        Some(0.0)
                    } else {
                        it.next().flatten()
                    }
                })
                .collect())
        })
        .collect();
    per_trial.into_iter().collect()
}

/// Number of trials whose level is at most lambda.
pub fn hits_at(levels: &[Option<f64>], lambda: f64) -> u64 {
    levels
        .iter()
        .filter(|l| l.is_some_and(|l| l <= lambda))
        .count() as u64
}

/// Coupled theta table over a lambda grid and a list of n. Rows are ordered
/// by lambda, then n. Hits are nondecreasing in lambda and nonincreasing in
/// n by construction.
pub fn theta_table(
    p: &ValidatedParams,
    lambdas: &[f64],
    ns: &[i64],
    trials: u64,
    seed: u64,
) -> Result<Vec<ThetaEstimate>> {
    let lmax = lambdas.iter().copied().fold(0.0, f64::max);
    if lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
        return Err(Error::Range(
            "lambda values must be finite and nonnegative".into(),
        ));
    }
    let lv = trial_levels(p, ns, lmax, trials, seed)?;
    let mut rows = Vec::with_capacity(lambdas.len() * ns.len());
    for &lambda in lambdas {
        for (k, &n) in ns.iter().enumerate() {
            let col: Vec<Option<f64>> = lv.iter().map(|r| r[k]).collect();
            rows.push(ThetaEstimate::from_hits(
                lambda,
                n,
                trials,
                hits_at(&col, lambda),
                seed,
            ));
        }
    }
    Ok(rows)
}
