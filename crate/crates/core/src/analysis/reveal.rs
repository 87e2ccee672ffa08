use rand::Rng;
use rayon::prelude::*;

use super::stats::std_error;
use crate::error::{Error, Result};
use crate::lattice::{derive_stream, BlockId, Purpose, StreamKey, ValidatedParams};
use crate::percolation::{crossing_levels, explore_any_m, Instance};

const REVEAL_LANE: u64 = 0x5245_5600;

pub const REVEAL_HEADER: &str = "block_x,block_y,delta,se,trials";

/// Revealment of the randomized exploration, per window block, with the
/// crossing probabilities theta_s, s <= n, from the same instances.
#[derive(Clone, Debug, PartialEq)]
pub struct RevealmentMap {
    pub lambda: f64,
    pub n: i64,
    pub trials: u64,
    pub seed: u64,
    /// Admissible annulus indices, drawn uniformly per trial.
    pub ms: Vec<i64>,
    /// (block, delta, binomial SE), row-major over the window.
    pub blocks: Vec<(BlockId, f64, f64)>,
    /// theta_s for s = 1..=n; 1 for s <= 4.
    pub theta_s: Vec<f64>,
    /// (8/n) sum_{s<=n} theta_s and its SE.
    pub bound: f64,
    pub bound_se: f64,
    /// Exploration outcome disagreed with f_n (must stay 0).
    pub mismatches: u64,
}

impl RevealmentMap {
    pub fn delta(&self, z: BlockId) -> Option<f64> {
        self.blocks.iter().find(|b| b.0 == z).map(|b| b.1)
    }

    pub fn to_table(&self) -> String {
        let mut s = String::from(REVEAL_HEADER);
        s.push('\n');
        for (z, d, se) in &self.blocks {
            s.push_str(&format!("{},{},{d},{se},{}\n", z[0], z[1], self.trials));
        }
        s
    }

    pub fn to_text(&self) -> String {
        let ms: Vec<String> = self.ms.iter().map(|m| m.to_string()).collect();
        let th: Vec<String> = self.theta_s.iter().map(|t| t.to_string()).collect();
        let worst = self.blocks.iter().map(|b| b.1).fold(0.0, f64::max);
        let v = self.bound_violations();
        let mut s = format!(
            "kind = revealment\nlambda = {}\nn = {}\ntrials = {}\nseed = {}\nm_values = {}\n\
             theta_s = {}\nbound = {}\nbound_se = {}\ndelta_max = {worst}\n\
             mismatches = {}\nviolations = {}\nverdict = {}\n",
            self.lambda,
            self.n,
            self.trials,
            self.seed,
            ms.join(" "),
            th.join(" "),
            self.bound,
            self.bound_se,
            self.mismatches,
            v.len(),
            if v.is_empty() { "PASS" } else { "FAIL" }
        );
        for z in v {
            s.push_str(&format!("violation = {} {}\n", z[0], z[1]));
        }
        s
    }

    /// Blocks with delta above the bound by more than three combined SEs.
    pub fn bound_violations(&self) -> Vec<BlockId> {
        self.blocks
            .iter()
            .filter(|(_, d, se)| *d > self.bound + 3.0 * (se * se + self.bound_se.powi(2)).sqrt())
            .map(|b| b.0)
            .collect()
    }
}

/// Revealment for n >= 16, m uniform in {6, ..., n - 3}.
pub fn estimate_revealment(
    p: &ValidatedParams,
    lambda: f64,
    n: i64,
    trials: u64,
    seed: u64,
) -> Result<RevealmentMap> {
    if n < 16 {
        return Err(Error::NTooSmall { n, min: 16 });
    }
    let ms: Vec<i64> = (6..=n - 3).collect();
    revealment_with(p, lambda, n, &ms, trials, seed)
}

/// Same estimator with any admissible set of m (5 <= m < n).
pub fn revealment_with(
    p: &ValidatedParams,
    lambda: f64,
    n: i64,
    ms: &[i64],
    trials: u64,
    seed: u64,
) -> Result<RevealmentMap> {
    if trials == 0 {
        return Err(Error::Range("trials must be at least 1".into()));
    }
    if ms.is_empty() {
        return Err(Error::Range("no annulus index given".into()));
    }
    if let Some(&m) = ms.iter().find(|&&m| m < 5 || m >= n) {
        return Err(Error::BadM { m, n });
    }
    let live: Vec<i64> = (5..=n).collect();
    let per: Vec<Result<(Vec<BlockId>, Vec<bool>, bool)>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let inst = Instance::new(p, n, lambda, seed, t)?;
            let mut rng =
                derive_stream(&StreamKey::new(seed, [0, 0], Purpose::Alg, t).lane(REVEAL_LANE));
            let m = ms[rng.gen_range(0..ms.len())];
            let e = explore_any_m(&inst.driver, &inst.env, lambda, n, m, false)?;
            let lv = crossing_levels(&inst.driver, &inst.env, &live)?;
            let hits: Vec<bool> = lv.iter().map(|l| l.is_some_and(|l| l <= lambda)).collect();
            let agree = e.outcome == *hits.last().unwrap();
            Ok((e.revealed, hits, agree))
        })
        .collect();
    let (w, _) = crate::percolation::window_for(p, n);
    let mut counts = vec![0u64; w.len()];
    let mut hit_counts = vec![0u64; live.len()];
    let mut sums = Vec::with_capacity(trials as usize);
    let mut mismatches = 0;
    for r in per {
        let (rev, hits, agree) = r?;
        for z in rev {
            counts[w.index_of(z).expect("window block")] += 1;
        }
        for (c, h) in hit_counts.iter_mut().zip(&hits) {
            *c += *h as u64;
        }
        sums.push(4.0 + hits.iter().filter(|h| **h).count() as f64);
        mismatches += !agree as u64;
    }
    let tf = trials as f64;
    let blocks = w
        .iter()
        .zip(&counts)
        .map(|(z, &c)| {
            let d = c as f64 / tf;
            (z, d, (d * (1.0 - d) / tf).sqrt())
        })
        .collect();
    let mut theta_s = vec![1.0; 4];
    theta_s.extend(hit_counts.iter().map(|&c| c as f64 / tf));
    let scale = 8.0 / n as f64;
    Ok(RevealmentMap {
        lambda,
        n,
        trials,
        seed,
        ms: ms.to_vec(),
        blocks,
        bound: scale * theta_s.iter().sum::<f64>(),
        bound_se: scale * std_error(&sums),
        theta_s,
        mismatches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{sup_norm, validate_params, ModelParams};

    fn m1() -> ValidatedParams {
        validate_params(&ModelParams {
            rho: 0.012,
            ..ModelParams::default()
        })
        .unwrap()
    }

    #[test]
    fn small_n_is_rejected() {
        assert_eq!(
            estimate_revealment(&m1(), 1.0, 15, 4, 1),
            Err(Error::NTooSmall { n: 15, min: 16 })
        );
        assert!(matches!(
            revealment_with(&m1(), 1.0, 8, &[8], 4, 1),
            Err(Error::BadM { m: 8, n: 8 })
        ));
    }

    #[test]
    fn zero_lambda_reveals_exactly_the_shell() {
        let p = m1();
        let n = 16;
        let map = estimate_revealment(&p, 0.0, n, 30, 3).unwrap();
        let dep = p.dependency_radius().unwrap();
        for &(z, d, _) in &map.blocks {
            let near = map.ms.iter().any(|m| (sup_norm(z) - m).abs() <= dep + 2);
            if !near {
                assert_eq!(d, 0.0, "{z:?}");
            }
        }
        // A single m reveals its shell in every trial.
        let one = revealment_with(&p, 0.0, n, &[9], 10, 3).unwrap();
        for &(z, d, _) in &one.blocks {
            let shell = (sup_norm(z) - 9).abs() <= dep + 2;
            assert_eq!(d, if shell { 1.0 } else { 0.0 }, "{z:?}");
        }
        assert_eq!(map.mismatches, 0);
        assert_eq!(map.theta_s[..4], [1.0; 4]);
        assert!(map.theta_s[4..].iter().all(|&t| t == 0.0));
        assert_eq!(map.bound, 32.0 / 16.0);
    }

    #[test]
    fn outcomes_agree_and_table_has_header() {
        let p = m1();
        let map = revealment_with(&p, 1.0, 8, &[5, 6, 7], 30, 8).unwrap();
        assert_eq!(map.mismatches, 0);
        assert!(map.theta_s.windows(2).all(|w| w[0] >= w[1]));
        let t = map.to_table();
        assert!(t.starts_with(REVEAL_HEADER));
        assert_eq!(t.lines().count(), 1 + map.blocks.len());
    }
}
