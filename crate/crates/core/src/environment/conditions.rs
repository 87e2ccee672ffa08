use std::collections::HashMap;

use rand::seq::index::sample;
use rayon::prelude::*;

use super::{block_rect, EnvBuilder, Environment, YField};
use crate::analysis::wilson_interval;
use crate::error::Result;
use crate::lattice::{
    derive_stream, site_from_local, BlockId, BlockRange, Purpose, SiteId, StreamKey, Variant,
};

/// Sample sizes and thresholds for [`check_conditions_with`].
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionConfig {
    pub eta: f64,
    pub q0: f64,
    /// Fresh blocks for the coverage estimate.
    pub coverage_blocks: usize,
    /// Sites whose tables are rebuilt with Y resampled outside I^+(z).
    pub one_dep_sites: usize,
    /// Blocks examined for essential connectedness.
    pub conn_blocks: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EssentialReport {
    pub blocks_checked: usize,
    /// Every examined block passes at the requested eta.
    pub pass_at_eta: bool,
    /// Largest eta of the form rho 2^-k at which every examined block passes (0 if none).
    pub eta_max: f64,
    /// Blocks settled by a single common component.
    pub fast_path: usize,
    pub failures: Vec<BlockId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionReport {
    pub one_dependence: bool,
    pub one_dependence_checked: usize,
    pub one_dependence_mismatches: Vec<SiteId>,
    pub cap_ok: bool,
    pub max_mass: f64,
    pub rho: f64,
    /// Estimated probability that a block carries a non-empty site.
    pub coverage: f64,
    pub coverage_ci: (f64, f64),
    pub coverage_trials: usize,
    pub q0: f64,
    pub essential: EssentialReport,
    pub circumradius_max: f64,
    /// L sqrt(2) / 2 for grid variants.
    pub circumradius_bound: Option<f64>,
    pub circumradius_ok: bool,
    /// WIDTH only: largest quadrature error bound over built sites.
    pub quadrature_error: f64,
}

impl ConditionReport {
    /// Hard verdicts: (i), (ii) and (iv). Coverage is reported only.
    pub fn all_hold(&self) -> bool {
        self.one_dependence && self.cap_ok && self.essential.pass_at_eta
    }

    pub fn to_text(&self) -> String {
        let verdict = |b: bool| if b { "pass" } else { "fail" };
        let mut s = format!(
            "kind = conditions\n\
             one_dependence = {}\none_dependence.checked = {}\n",
            verdict(self.one_dependence),
            self.one_dependence_checked
        );
        for x in &self.one_dependence_mismatches {
            s.push_str(&format!("one_dependence.counterexample = {} {}\n", x[0], x[1]));
        }
        s.push_str(&format!(
            "bounded_intensity = {}\nbounded_intensity.max_mass = {}\nbounded_intensity.rho = {}\n\
             coverage = {}\ncoverage.ci_lo = {}\ncoverage.ci_hi = {}\ncoverage.blocks = {}\n\
             coverage.q0 = {}\ncoverage.above_q0 = {}\n\
             essential_connectedness = {}\nessential_connectedness.blocks = {}\n\
             essential_connectedness.eta_max = {}\n",
            verdict(self.cap_ok),
            self.max_mass,
            self.rho,
            self.coverage,
            self.coverage_ci.0,
            self.coverage_ci.1,
            self.coverage_trials,
            self.q0,
            self.coverage > self.q0,
            verdict(self.essential.pass_at_eta),
            self.essential.blocks_checked,
            self.essential.eta_max
        ));
        for z in &self.essential.failures {
            s.push_str(&format!("essential_connectedness.failure = {} {}\n", z[0], z[1]));
        }
        s.push_str(&format!("circumradius.max = {}\n", self.circumradius_max));
        match self.circumradius_bound {
            Some(b) => s.push_str(&format!(
                "circumradius.bound = {b}\ncircumradius.ratio = {}\ncircumradius = {}\n",
                self.circumradius_max / b,
                verdict(self.circumradius_ok)
            )),
            None => s.push_str("circumradius.bound = none\n"),
        }
        if self.quadrature_error > 0.0 {
            s.push_str(&format!("quadrature_error = {}\n", self.quadrature_error));
        }
        s
    }
}

pub fn check_conditions(
    env: &Environment,
    eta: f64,
    q0: f64,
    n_blocks: usize,
    seed: u64,
) -> Result<ConditionReport> {
    let cfg = ConditionConfig {
        eta,
        q0,
        coverage_blocks: n_blocks,
        one_dep_sites: n_blocks.min(64),
        conn_blocks: n_blocks.min(16),
    };
    check_conditions_with(env, &cfg, seed)
}

pub fn check_conditions_with(
    env: &Environment,
    cfg: &ConditionConfig,
    seed: u64,
) -> Result<ConditionReport> {
    let p = env.params();
    let mut rng =
        derive_stream(&StreamKey::new(seed, [0, 0], Purpose::Alg, env.yfield().trial).lane(0xC0D));

    // (i)
    let b_inv = p.b_inv;
    let built: Vec<(BlockId, usize)> = env
        .blocks()
        .flat_map(|bs| {
            bs.built
                .iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(move |(i, _)| (bs.block, i))
        })
        .collect();
    let picks: Vec<(BlockId, usize)> = if built.len() <= cfg.one_dep_sites {
        built.clone()
    } else {
        let mut v: Vec<usize> = sample(&mut rng, built.len(), cfg.one_dep_sites).into_vec();
        v.sort_unstable();
        v.into_iter().map(|i| built[i]).collect()
    };
    let mismatches: Vec<SiteId> = picks
        .par_iter()
        .enumerate()
        .filter_map(|(k, &(z, idx))| {
            let mut y: YField = env.yfield().clone();
            y.outside = Some((BlockRange::around(z, 1), 1 + k as u32));
            let fresh = env.rebuild_block(&y, z).ok()?;
            let orig = env.block(z)?;
            if fresh.site_entry(idx) == orig.site_entry(idx) {
                None
            } else {
                Some(site_from_local(z, idx, b_inv))
            }
        })
        .collect();

    // (ii)
    let max_mass = env.max_mass();
    let cap_ok = max_mass <= p.rho;

    // (iii)
    let hits: usize = (0..cfg.coverage_blocks)
        .into_par_iter()
        .map(|t| {
            let w = BlockRange::new([0, 0], [0, 0]);
            let e = EnvBuilder::new(p, w)
                .seed(seed ^ 0x5eed_c0fe)
                .trial(t as u64)
                .roi(block_rect(p, &w))
                .build();
            match e {
                Ok(e) => e
                    .block([0, 0])
                    .map(|b| b.mass.iter().any(|&m| m > 0.0))
                    .unwrap_or(false) as usize,
                Err(_) => 0,
            }
        })
        .sum();
    let coverage = if cfg.coverage_blocks > 0 {
        hits as f64 / cfg.coverage_blocks as f64
    } else {
        f64::NAN
    };
    let coverage_ci = wilson_interval(hits as u64, cfg.coverage_blocks as u64);

    // (iv)
    let essential = essential_connectedness(env, cfg.eta, cfg.conn_blocks, &mut rng);

    let (bound, ok) = if p.variant.has_grid() {
        let b = p.l * std::f64::consts::SQRT_2 / 2.0;
        (Some(b), env.circumradius_max() <= b * (1.0 + 1e-12))
    } else {
        (None, true)
    };
    let quadrature_error = if p.variant == Variant::Width {
        env.blocks()
            .flat_map(|b| b.quad_err.iter().copied())
            .fold(0.0, f64::max)
    } else {
        0.0
    };

    Ok(ConditionReport {
        one_dependence: mismatches.is_empty(),
        one_dependence_checked: picks.len(),
        one_dependence_mismatches: mismatches,
        cap_ok,
        max_mass,
        rho: p.rho,
        coverage,
        coverage_ci,
        coverage_trials: cfg.coverage_blocks,
        q0: cfg.q0,
        essential,
        circumradius_max: env.circumradius_max(),
        circumradius_bound: bound,
        circumradius_ok: ok,
        quadrature_error,
    })
}

fn essential_connectedness(
    env: &Environment,
    eta: f64,
    n: usize,
    rng: &mut impl rand::Rng,
) -> EssentialReport {
    let p = env.params();
    let b = p.b_inv as usize;
    let inner = BlockRange::new(
        [env.window().lo[0] + 2, env.window().lo[1] + 2],
        [env.window().hi[0] - 2, env.window().hi[1] - 2],
    );
    let eligible: Vec<BlockId> = inner
        .iter()
        .filter(|&z| {
            BlockRange::around(z, 2).iter().all(|w| {
                env.block(w)
                    .map(|bs| bs.built.iter().all(|&x| x))
                    .unwrap_or(false)
            })
        })
        .collect();
    let chosen: Vec<BlockId> = if eligible.len() <= n {
        eligible
    } else {
        let mut v = sample(rng, eligible.len(), n).into_vec();
        v.sort_unstable();
        v.into_iter().map(|i| eligible[i]).collect()
    };
    let results: Vec<(BlockId, bool, bool, f64)> = chosen
        .par_iter()
        .map(|&z| {
            let g = ConnGrid::gather(env, z);
            let (pass, fast) = g.passes(b, eta);
            (z, pass, fast, g.largest_eta(b, p.rho))
        })
        .collect();
    EssentialReport {
        blocks_checked: results.len(),
        pass_at_eta: !results.is_empty() && results.iter().all(|r| r.1),
        eta_max: if results.is_empty() {
            0.0
        } else {
            results.iter().map(|r| r.3).fold(f64::INFINITY, f64::min)
        },
        fast_path: results.iter().filter(|r| r.2).count(),
        failures: results.iter().filter(|r| !r.1).map(|r| r.0).collect(),
    }
}

/// Masses on I_b^{++}(z), row-major with side 5B.
struct ConnGrid {
    n: usize,
    mass: Vec<f64>,
}

impl ConnGrid {
    fn gather(env: &Environment, z: BlockId) -> ConnGrid {
        let b = env.params().b_inv as usize;
        let n = 5 * b;
        let mut mass = vec![0.0; n * n];
        for dy in 0..5 {
            for dx in 0..5 {
                let bs = env
                    .block([z[0] - 2 + dx as i64, z[1] - 2 + dy as i64])
                    .expect("eligible block");
                for j in 0..b {
                    for i in 0..b {
                        mass[(dy * b + j) * n + dx * b + i] = bs.mass[j * b + i];
                    }
                }
            }
        }
        ConnGrid { n, mass }
    }

    fn largest_eta(&self, b: usize, rho: f64) -> f64 {
        let ok = |k: u32| self.passes(b, rho * 0.5f64.powi(k as i32)).0;
        if ok(0) {
            return rho;
        }
        let mut hi = 1u32;
        while hi < 64 && !ok(hi) {
            hi = (hi * 2).min(64);
        }
        if !ok(hi) {
            return 0.0;
        }
        let mut lo = hi / 2;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        rho * 0.5f64.powi(hi as i32)
    }

    /// (pass, settled by one common component).
    fn passes(&self, b: usize, eta: f64) -> (bool, bool) {
        let n = self.n;
        let comp = self.components(eta);
        let mut touched: Vec<(usize, usize, [u32; 9], usize)> = Vec::new();
        for j in b..4 * b {
            for i in b..4 * b {
                if self.mass[j * n + i] <= 0.0 {
                    continue;
                }
                let mut c = [u32::MAX; 9];
                let mut len = 0;
                for (di, dj) in NEIGH9 {
                    let (a, bb) = (i as i64 + di, j as i64 + dj);
                    if a < 0 || bb < 0 || a >= n as i64 || bb >= n as i64 {
                        continue;
                    }
                    let id = comp[bb as usize * n + a as usize];
                    if id != u32::MAX && !c[..len].contains(&id) {
                        c[len] = id;
                        len += 1;
                    }
                }
                c[..len].sort_unstable();
                touched.push((i, j, c, len));
            }
        }
        if touched.len() <= 1 {
            return (true, true);
        }
        let mut common = touched[0].2[..touched[0].3].to_vec();
        for t in &touched[1..] {
            common.retain(|c| t.2[..t.3].binary_search(c).is_ok());
            if common.is_empty() {
                break;
            }
        }
        if !common.is_empty() {
            return (true, true);
        }
        let mut groups: HashMap<&[u32], Vec<(usize, usize)>> = HashMap::new();
        for t in &touched {
            groups.entry(&t.2[..t.3]).or_default().push((t.0, t.1));
        }
        let keys: Vec<&[u32]> = groups.keys().copied().collect();
        let adjacent_all = |g1: &[(usize, usize)], g2: &[(usize, usize)], same: bool| {
            if g1.len() > 9 || g2.len() > 9 {
                return false;
            }
            g1.iter().enumerate().all(|(a, x)| {
                g2.iter().enumerate().all(|(bi, y)| {
                    (same && a == bi) || (x.0.abs_diff(y.0) <= 1 && x.1.abs_diff(y.1) <= 1)
                })
            })
        };
        for (ia, ka) in keys.iter().enumerate() {
            if ka.is_empty() && !adjacent_all(&groups[ka], &groups[ka], true) {
                return (false, false);
            }
            for kb in &keys[ia + 1..] {
                let disjoint = !ka.iter().any(|c| kb.binary_search(c).is_ok());
                if disjoint && !adjacent_all(&groups[ka], &groups[kb], false) {
                    return (false, false);
                }
            }
        }
        (true, false)
    }

    fn components(&self, eta: f64) -> Vec<u32> {
        let n = self.n;
        let mut comp = vec![u32::MAX; n * n];
        let mut next = 0u32;
        let mut stack = Vec::new();
        for s in 0..n * n {
            if comp[s] != u32::MAX || self.mass[s] < eta {
                continue;
            }
            comp[s] = next;
            stack.push(s);
            while let Some(c) = stack.pop() {
                let (i, j) = ((c % n) as i64, (c / n) as i64);
                for (di, dj) in NEIGH9 {
                    let (a, bb) = (i + di, j + dj);
                    if a < 0 || bb < 0 || a >= n as i64 || bb >= n as i64 {
                        continue;
                    }
                    let t = bb as usize * n + a as usize;
                    if comp[t] == u32::MAX && self.mass[t] >= eta {
                        comp[t] = next;
                        stack.push(t);
                    }
                }
            }
            next += 1;
        }
        comp
    }
}

const NEIGH9: [(i64, i64); 9] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (0, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];
