use super::theta::{hits_at, trial_levels};
use crate::error::{Error, Result};
use crate::lattice::ValidatedParams;

/// Finite-size bracket for the critical intensity: the level at which
/// theta_n crosses a threshold, for one n. Not an estimate of the limit.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaCEstimate {
    pub lo: f64,
    pub hi: f64,
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub n: i64,
    pub trials: u64,
    pub threshold: f64,
    /// Bracket width after each iteration, starting with the initial one.
    pub widths: Vec<f64>,
    pub seed: u64,
}

impl LambdaCEstimate {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn to_text(&self) -> String {
        format!(
            "kind = lambda_c_bracket\n\
             note = finite-size proxy: crossing of theta_n at the threshold, not the infinite-volume lambda_c\n\
             n = {}\ntrials = {}\nthreshold = {}\nlambda_lo = {}\nlambda_hi = {}\n\
             theta_lo = {}\ntheta_hi = {}\niterations = {}\nseed = {}\n",
            self.n,
            self.trials,
            self.threshold,
            self.lo,
            self.hi,
            self.theta_lo,
            self.theta_hi,
            self.widths.len() - 1,
            self.seed
        )
    }
}

/// Bisection on the empirical curve lambda -> (#levels <= lambda) / trials.
/// Requires theta(lo) < threshold <= theta(hi).
pub fn bisect_levels(
    levels: &[Option<f64>],
    threshold: f64,
    tol: f64,
    bracket: (f64, f64),
) -> Result<(f64, f64, Vec<f64>)> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Range(format!("threshold {threshold} not in (0, 1)")));
    }
    if !(tol > 0.0) {
        return Err(Error::Range(format!("tol {tol} must be positive")));
    }
    let (mut lo, mut hi) = bracket;
    if !(lo < hi && lo >= 0.0 && hi.is_finite()) {
        return Err(Error::Range(format!("bad bracket [{lo}, {hi}]")));
    }
    let th = |l: f64| hits_at(levels, l) as f64 / levels.len().max(1) as f64;
    let (tl, thi) = (th(lo), th(hi));
    if !(tl < threshold && thi >= threshold) {
        return Err(Error::NoSignChange {
            lo,
            hi,
            theta_lo: tl,
            theta_hi: thi,
            threshold,
        });
    }
    let mut widths = vec![hi - lo];
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if th(mid) >= threshold {
            hi = mid;
        } else {
            lo = mid;
        }
        widths.push(hi - lo);
    }
    Ok((lo, hi, widths))
}

pub fn estimate_lambda_c(
    p: &ValidatedParams,
    n: i64,
    trials: u64,
    threshold: f64,
    tol: f64,
    bracket: (f64, f64),
    seed: u64,
) -> Result<LambdaCEstimate> {
    if n < 5 {
        return Err(Error::NTooSmall { n, min: 5 });
    }
    if !(bracket.0 < bracket.1 && bracket.0 >= 0.0 && bracket.1.is_finite()) {
        return Err(Error::Range(format!(
            "bad bracket [{}, {}]",
            bracket.0, bracket.1
        )));
    }
    let lv: Vec<Option<f64>> = trial_levels(p, &[n], bracket.1, trials, seed)?
        .into_iter()
        .map(|r| r[0])
        .collect();
    let (lo, hi, widths) = bisect_levels(&lv, threshold, tol, bracket)?;
    let t = trials as f64;
    Ok(LambdaCEstimate {
        lo,
        hi,
        theta_lo: hits_at(&lv, lo) as f64 / t,
        theta_hi: hits_at(&lv, hi) as f64 / t,
        n,
        trials,
        threshold,
        widths,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{validate_params, ModelParams};

    #[test]
    fn bisection_contract() {
        let levels: Vec<Option<f64>> = (0..100)
            .map(|i| {
                if i % 7 == 0 {
                    None
                } else {
                    Some(i as f64 / 50.0)
                }
            })
            .collect();
        let (lo, hi, w) = bisect_levels(&levels, 0.5, 1e-3, (0.0, 3.0)).unwrap();
        assert!(hi - lo <= 1e-3);
        let th = |l: f64| hits_at(&levels, l) as f64 / 100.0;
        assert!(th(lo) < 0.5 && th(hi) >= 0.5);
        for k in 1..w.len() {
            assert_eq!(w[k], w[k - 1] / 2.0);
        }
        assert!(matches!(
            bisect_levels(&levels, 0.5, 1e-3, (0.0, 0.01)),
            Err(Error::NoSignChange { .. })
        ));
        assert!(bisect_levels(&levels, 1.0, 1e-3, (0.0, 3.0)).is_err());
        assert!(bisect_levels(&levels, 0.5, 0.0, (0.0, 3.0)).is_err());
    }

    #[test]
    fn tiny_bracket_has_no_sign_change() {
        let p = validate_params(&ModelParams {
            rho: 0.35,
            ..ModelParams::default()
        })
        .unwrap();
        assert!(matches!(
            estimate_lambda_c(&p, 6, 8, 0.5, 1e-3, (0.0, 1e-6), 3),
            Err(Error::NoSignChange { theta_lo, theta_hi, .. }) if theta_lo == 0.0 && theta_hi == 0.0
        ));
    }
}
