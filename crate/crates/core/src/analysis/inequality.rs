use std::fmt;
use std::str::FromStr;

use super::influence::{relevant_blocks, run_survey, SurveySpec, TrialSurvey, DEFAULT_PROBES};
use super::reveal::revealment_with;
use super::stats::{mean, std_error};
use crate::error::{Error, Result};
use crate::lattice::{BlockId, BlockRange, ValidatedParams};
use crate::percolation::window_for;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InequalityKind {
    Osss,
    EfronStein,
    Russo,
    PivLemma,
    InfLemma,
    Differential,
}

impl InequalityKind {
    pub const ALL: [InequalityKind; 6] = [
        InequalityKind::Osss,
        InequalityKind::EfronStein,
        InequalityKind::Russo,
        InequalityKind::PivLemma,
        InequalityKind::InfLemma,
        InequalityKind::Differential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InequalityKind::Osss => "OSSS",
            InequalityKind::EfronStein => "EFRON_STEIN",
            InequalityKind::Russo => "RUSSO",
            InequalityKind::PivLemma => "PIV_LEMMA",
            InequalityKind::InfLemma => "INF_LEMMA",
            InequalityKind::Differential => "DIFFERENTIAL",
        }
    }

    fn needs_resampling(self) -> bool {
        matches!(
            self,
            InequalityKind::Osss
                | InequalityKind::EfronStein
                | InequalityKind::PivLemma
                | InequalityKind::InfLemma
        )
    }
}

impl fmt::Display for InequalityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InequalityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_uppercase().replace('-', "_");
        InequalityKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::Range(format!("unknown inequality kind '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// Report-only kinds.
    Reported,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Reported => "REPORTED",
        }
    }
}

/// lhs <= rhs at three combined standard errors.
fn at_most(slack: f64, se: f64) -> Verdict {
    if slack >= -3.0 * se {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

fn ratio(num: f64, den: f64, what: &str) -> Result<f64> {
    if den > 0.0 && den.is_finite() {
        Ok(num / den)
    } else {
        Err(Error::DivisionDegenerate(format!(
            "{what}: denominator {den}"
        )))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockLine {
    pub block: BlockId,
    pub lhs: f64,
    pub rhs: f64,
    pub se: f64,
    pub verdict: Verdict,
    pub constant: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InequalityReport {
    pub kind: InequalityKind,
    pub lambda: f64,
    pub n: i64,
    pub trials: u64,
    pub seed: u64,
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub rhs_se: f64,
    /// rhs - lhs.
    pub slack: f64,
    pub combined_se: f64,
    pub verdict: Verdict,
    /// Name of the implied constant, if the kind has one.
    pub constant_name: Option<&'static str>,
    /// None when the denominator estimate is zero.
    pub constant: Option<f64>,
    pub blocks: Vec<BlockLine>,
    pub details: Vec<(String, String)>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(
        || "unavailable (DIVISION_DEGENERATE)".to_string(),
        |c| c.to_string(),
    )
}

impl InequalityReport {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "kind = {}\nlambda = {}\nn = {}\ntrials = {}\nseed = {}\n\
             lhs = {}\nlhs_se = {}\nrhs = {}\nrhs_se = {}\nslack = {}\ncombined_se = {}\nverdict = {}\n",
            self.kind,
            self.lambda,
            self.n,
            self.trials,
            self.seed,
            self.lhs,
            self.lhs_se,
            self.rhs,
            self.rhs_se,
            self.slack,
            self.combined_se,
            self.verdict.name()
        );
        if let Some(name) = self.constant_name {
            s.push_str(&format!("{name} = {}\n", opt(self.constant)));
        }
        for (k, v) in &self.details {
            s.push_str(&format!("{k} = {v}\n"));
        }
        for b in &self.blocks {
            s.push_str(&format!(
                "block {} {} : lhs = {} rhs = {} se = {} verdict = {}",
                b.block[0],
                b.block[1],
                b.lhs,
                b.rhs,
                b.se,
                b.verdict.name()
            ));
            if self.constant_name.is_some() {
                s.push_str(&format!(" constant = {}", opt(b.constant)));
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyOptions {
    pub trials: u64,
    pub seed: u64,
    /// Finite-difference step as a fraction of lambda.
    pub h_frac: f64,
    pub probes: u32,
    /// Trials of the revealment estimate (OSSS); defaults to `trials`.
    pub reveal_trials: Option<u64>,
}

impl VerifyOptions {
    pub fn new(trials: u64, seed: u64) -> VerifyOptions {
        VerifyOptions {
            trials,
            seed,
            h_frac: 0.1,
            probes: DEFAULT_PROBES,
            reveal_trials: None,
        }
    }
}

pub fn verify_inequality(
    kind: InequalityKind,
    p: &ValidatedParams,
    lambda: f64,
    n: i64,
    trials: u64,
    seed: u64,
) -> Result<InequalityReport> {
    let mut v = verify_many(&[kind], p, lambda, n, &VerifyOptions::new(trials, seed))?;
    Ok(v.remove(0))
}

struct Ctx<'a> {
    p: &'a ValidatedParams,
    lambda: f64,
    n: i64,
    opts: &'a VerifyOptions,
    blocks: Vec<BlockId>,
    window: BlockRange,
    s: Vec<TrialSurvey>,
    h: f64,
}

impl Ctx<'_> {
    fn report(&self, kind: InequalityKind) -> InequalityReport {
        InequalityReport {
            kind,
            lambda: self.lambda,
            n: self.n,
            trials: self.opts.trials,
            seed: self.opts.seed,
            lhs: 0.0,
            lhs_se: 0.0,
            rhs: 0.0,
            rhs_se: 0.0,
            slack: 0.0,
            combined_se: 0.0,
            verdict: Verdict::Reported,
            constant_name: None,
            constant: None,
            blocks: Vec::new(),
            details: Vec::new(),
        }
    }

    fn tf(&self) -> f64 {
        self.opts.trials as f64
    }

    fn theta(&self) -> f64 {
        self.s.iter().filter(|t| t.base).count() as f64 / self.tf()
    }

    fn col<T: Copy>(&self, f: impl Fn(&TrialSurvey) -> &Vec<T>, i: usize) -> Vec<T> {
        self.s.iter().map(|t| f(t)[i]).collect()
    }

    fn rate(&self, f: impl Fn(&TrialSurvey) -> &Vec<bool>, i: usize) -> (f64, f64) {
        let k = self.s.iter().filter(|t| f(t)[i]).count() as f64;
        let m = k / self.tf();
        (m, (m * (1.0 - m) / self.tf()).sqrt())
    }

    /// Coupled centered difference (theta(l+h) - theta(l-h)) / 2h per trial.
    fn fd_terms(&self) -> Vec<f64> {
        let (lo, hi) = (self.lambda - self.h, self.lambda + self.h);
        self.s
            .iter()
            .map(|t| {
                let l = t.levels.last().copied().flatten();
                let a = l.is_some_and(|l| l <= hi) as u8 as f64;
                let b = l.is_some_and(|l| l <= lo) as u8 as f64;
                (a - b) / (2.0 * self.h)
            })
            .collect()
    }

    fn osss(&self, delta: &dyn Fn(BlockId) -> (f64, f64)) -> InequalityReport {
        let mut r = self.report(InequalityKind::Osss);
        let th = self.theta();
        let var = th * (1.0 - th);
        let mu4 = var * (1.0 - 3.0 * th + 3.0 * th * th);
        r.lhs = var;
        r.lhs_se = ((mu4 - var * var).max(0.0) / self.tf()).sqrt();
        let (mut rhs, mut rvar, mut split) = (0.0, 0.0, 0.0);
        for (i, &z) in self.blocks.iter().enumerate() {
            let (d, dse) = delta(z);
            let (j, jse) = self.rate(|t| &t.joint, i);
            let (x, _) = self.rate(|t| &t.x, i);
            let (y, _) = self.rate(|t| &t.y, i);
            rhs += 0.5 * d * j;
            split += 0.5 * d * (x + y);
            rvar += 0.25 * (j * j * dse * dse + d * d * jse * jse);
        }
        r.rhs = rhs;
        r.rhs_se = rvar.sqrt();
        r.slack = r.rhs - r.lhs;
        r.combined_se = (r.lhs_se.powi(2) + r.rhs_se.powi(2)).sqrt();
        r.verdict = at_most(r.slack, r.combined_se);
        r.details.push(("theta".into(), th.to_string()));
        r.details.push(("rhs_split_form".into(), split.to_string()));
        r
    }

    fn efron_stein(&self) -> InequalityReport {
        let mut r = self.report(InequalityKind::EfronStein);
        let t = self.s.len();
        let mut total = vec![0.0; t];
        let mut all_pass = true;
        let (mut lhs, mut rhs) = (0.0, 0.0);
        for (i, &z) in self.blocks.iter().enumerate() {
            let d: Vec<f64> = self
                .s
                .iter()
                .map(|s| s.x[i] as u8 as f64 + s.y[i] as u8 as f64 - s.joint[i] as u8 as f64)
                .collect();
            for (a, b) in total.iter_mut().zip(&d) {
                *a += b;
            }
            let (j, _) = self.rate(|s| &s.joint, i);
            let (x, _) = self.rate(|s| &s.x, i);
            let (y, _) = self.rate(|s| &s.y, i);
            let se = std_error(&d);
            let verdict = at_most(mean(&d), se);
            all_pass &= verdict == Verdict::Pass;
            lhs += j;
            rhs += x + y;
            r.blocks.push(BlockLine {
                block: z,
                lhs: j,
                rhs: x + y,
                se,
                verdict,
                constant: None,
            });
        }
        r.lhs = lhs;
        r.rhs = rhs;
        r.slack = mean(&total);
        r.combined_se = std_error(&total);
        r.lhs_se = r.combined_se;
        r.rhs_se = r.combined_se;
        r.verdict = if all_pass && at_most(r.slack, r.combined_se) == Verdict::Pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        r.details.push((
            "blocks_failing".into(),
            r.blocks
                .iter()
                .filter(|b| b.verdict == Verdict::Fail)
                .count()
                .to_string(),
        ));
        r
    }

    fn piv_totals(&self) -> Vec<f64> {
        self.s.iter().map(|t| t.piv.iter().sum()).collect()
    }

    fn russo(&self) -> InequalityReport {
        let mut r = self.report(InequalityKind::Russo);
        let fd = self.fd_terms();
        let piv = self.piv_totals();
        let diff: Vec<f64> = fd.iter().zip(&piv).map(|(a, b)| a - b).collect();
        r.lhs = mean(&fd);
        r.lhs_se = std_error(&fd);
        r.rhs = mean(&piv);
        r.rhs_se = std_error(&piv);
        r.slack = -mean(&diff);
        r.combined_se = std_error(&diff);
        r.verdict = if r.slack.abs() <= 3.0 * r.combined_se {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        r.details.push(("h".into(), self.h.to_string()));
        r.details
            .push(("rhs_form".into(), "sum_x int Piv_x".into()));
        r.details
            .push(("rhs_lambda_form".into(), (self.lambda * r.rhs).to_string()));
        r.details.push((
            "rhs_lambda_form_slack".into(),
            (self.lambda * r.rhs - r.lhs).to_string(),
        ));
        r
    }

    fn piv_lemma(&self) -> InequalityReport {
        let mut r = self.report(InequalityKind::PivLemma);
        let p = self.p;
        let lstar = self.lambda * p.rho * p.sites_per_block() as f64;
        let factor = 2.0 * lstar.exp() * self.lambda;
        r.constant_name = Some("c_piv");
        let mut all_pass = true;
        let mut worst: Option<f64> = None;
        let mut degenerate = 0;
        for (i, &z) in self.blocks.iter().enumerate() {
            if !self.window.contains(z) {
                continue;
            }
            let x: Vec<f64> = self
                .col(|t| &t.x, i)
                .iter()
                .map(|&b| b as u8 as f64)
                .collect();
            let pv = self.col(|t| &t.piv, i);
            let e: Vec<f64> = x.iter().zip(&pv).map(|(a, b)| a - factor * b).collect();
            let se = std_error(&e);
            let verdict = at_most(-mean(&e), se);
            all_pass &= verdict == Verdict::Pass;
            let c = ratio(mean(&x), 2.0 * self.lambda * mean(&pv), "c_piv").ok();
            if c.is_none() {
                degenerate += 1;
            }
            if let Some(c) = c {
                worst = Some(worst.map_or(c, |w: f64| w.max(c)));
            }
            r.lhs += mean(&x);
            r.rhs += factor * mean(&pv);
            r.blocks.push(BlockLine {
                block: z,
                lhs: mean(&x),
                rhs: factor * mean(&pv),
                se,
                verdict,
                constant: c,
            });
        }
        let tot: Vec<f64> = (0..self.s.len())
            .map(|t| {
                self.blocks
                    .iter()
                    .enumerate()
                    .filter(|(_, z)| self.window.contains(**z))
                    .map(|(i, _)| self.s[t].x[i] as u8 as f64 - factor * self.s[t].piv[i])
                    .sum()
            })
            .collect();
        r.slack = -mean(&tot);
        r.combined_se = std_error(&tot);
        r.verdict = if all_pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        r.constant = worst;
        r.details.push(("lambda_star".into(), lstar.to_string()));
        r.details
            .push(("exp_lambda_star".into(), lstar.exp().to_string()));
        r.details.push((
            "c_piv_form".into(),
            "inf_x / (2 lambda sum_x int Piv_x), max over blocks".into(),
        ));
        r.details
            .push(("blocks_unavailable".into(), degenerate.to_string()));
        r
    }

    fn inf_lemma(&self) -> InequalityReport {
        let mut r = self.report(InequalityKind::InfLemma);
        r.constant_name = Some("c_inf");
        let reach = self.p.dependency_radius().unwrap_or(1) + 1;
        let inf_x: Vec<f64> = (0..self.blocks.len())
            .map(|i| self.rate(|t| &t.x, i).0)
            .collect();
        let mut worst: Option<f64> = None;
        for (i, &z) in self.blocks.iter().enumerate() {
            let (y, yse) = self.rate(|t| &t.y, i);
            let around = BlockRange::around(z, reach);
            let den: f64 = self
                .blocks
                .iter()
                .zip(&inf_x)
                .filter(|(b, _)| around.contains(**b))
                .map(|(_, v)| v)
                .sum();
            let c = ratio(y, den, "c_inf").ok();
            if let Some(c) = c {
                worst = Some(worst.map_or(c, |w: f64| w.max(c)));
            }
            r.lhs += y;
            r.rhs += den;
            r.blocks.push(BlockLine {
                block: z,
                lhs: y,
                rhs: den,
                se: yse,
                verdict: Verdict::Reported,
                constant: c,
            });
        }
        r.slack = r.rhs - r.lhs;
        r.constant = worst;
        r.details
            .push(("neighbourhood_radius".into(), reach.to_string()));
        r.details.push((
            "c_inf_form".into(),
            "inf_y(z) / sum_{z' near z} inf_x(z'), max over blocks".into(),
        ));
        r
    }

    fn differential(&self) -> InequalityReport {
        let mut r = self.report(InequalityKind::Differential);
        r.constant_name = Some("c_diff");
        let fd = self.fd_terms();
        let deriv = mean(&fd);
        let tf = self.tf();
        let n = self.n;
        let mut sum_theta = 4.0_f64.min(n as f64);
        for k in 0..(n - 4).max(0) as usize {
            let hits = self
                .s
                .iter()
                .filter(|t| t.levels[k].is_some_and(|l| l <= self.lambda))
                .count();
            sum_theta += hits as f64 / tf;
        }
        let th = self.theta();
        r.lhs = deriv;
        r.lhs_se = std_error(&fd);
        r.rhs = n as f64 * th * (1.0 - th) / sum_theta;
        r.slack = r.rhs - r.lhs;
        r.constant = ratio(deriv, r.rhs, "c_diff").ok();
        r.details.push(("theta".into(), th.to_string()));
        r.details
            .push(("sum_theta_s".into(), sum_theta.to_string()));
        r.details.push(("h".into(), self.h.to_string()));
        r.details.push((
            "c_diff_form".into(),
            "theta' sum_{s<=n} theta_s / (n theta (1 - theta))".into(),
        ));
        r
    }
}

/// Several reports from one shared survey of trials.
pub fn verify_many(
    kinds: &[InequalityKind],
    p: &ValidatedParams,
    lambda: f64,
    n: i64,
    opts: &VerifyOptions,
) -> Result<Vec<InequalityReport>> {
    if n < 6 {
        return Err(Error::NTooSmall { n, min: 6 });
    }
    let fd = kinds
        .iter()
        .any(|k| matches!(k, InequalityKind::Russo | InequalityKind::Differential));
    if fd && !(lambda > 0.0) {
        return Err(Error::Range("finite differences need lambda > 0".into()));
    }
    if !(opts.h_frac > 0.0 && opts.h_frac < 1.0) {
        return Err(Error::Range(format!(
            "h fraction {} not in (0, 1)",
            opts.h_frac
        )));
    }
    let h = opts.h_frac * lambda;
    let spec = SurveySpec {
        lambda,
        n,
        lambda_max: if fd { lambda + h } else { lambda },
        resampling: kinds.iter().any(|k| k.needs_resampling()),
        probes: if kinds
            .iter()
            .any(|k| matches!(k, InequalityKind::Russo | InequalityKind::PivLemma))
        {
            opts.probes
        } else {
            0
        },
        levels: fd,
    };
    let blocks: Vec<BlockId> = if spec.resampling {
        relevant_blocks(p, n).iter().collect()
    } else {
        window_for(p, n).0.iter().collect()
    };
    let s = run_survey(p, &spec, &blocks, opts.trials, opts.seed)?;
    let ctx = Ctx {
        p,
        lambda,
        n,
        opts,
        blocks,
        window: window_for(p, n).0,
        s,
        h,
    };
    let reveal = if kinds.contains(&InequalityKind::Osss) {
        let ms: Vec<i64> = if n >= 9 {
            (6..=n - 3).collect()
        } else {
            (5..n).collect()
        };
        Some(revealment_with(
            p,
            lambda,
            n,
            &ms,
            opts.reveal_trials.unwrap_or(opts.trials),
            opts.seed ^ 0x5245_5645_414c,
        )?)
    } else {
        None
    };
    let mut out = Vec::with_capacity(kinds.len());
    for &k in kinds {
        out.push(match k {
            InequalityKind::Osss => {
                let map = reveal.as_ref().unwrap();
                let w = ctx.window;
                let delta = |z: BlockId| -> (f64, f64) {
                    match w.index_of(z) {
                        Some(i) => (map.blocks[i].1, map.blocks[i].2),
                        None => (1.0, 0.0),
                    }
                };
                let mut r = ctx.osss(&delta);
                let ms: Vec<String> = map.ms.iter().map(|m| m.to_string()).collect();
                r.details.push(("annulus_indices".into(), ms.join(" ")));
                r.details
                    .push(("reveal_trials".into(), map.trials.to_string()));
                r.details.push((
                    "delta_outside_window".into(),
                    "1 (Y-blocks queried unconditionally)".into(),
                ));
                r
            }
            InequalityKind::EfronStein => ctx.efron_stein(),
            InequalityKind::Russo => ctx.russo(),
            InequalityKind::PivLemma => ctx.piv_lemma(),
            InequalityKind::InfLemma => ctx.inf_lemma(),
            InequalityKind::Differential => ctx.differential(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{validate_params, ModelParams};

    fn m1() -> ValidatedParams {
        validate_params(&ModelParams {
            rho: 0.012,
            ..ModelParams::default()
        })
        .unwrap()
    }

    #[test]
    fn names_round_trip() {
        for k in InequalityKind::ALL {
            assert_eq!(k.name().parse::<InequalityKind>().unwrap(), k);
        }
        assert_eq!(
            "efron-stein".parse::<InequalityKind>().unwrap(),
            InequalityKind::EfronStein
        );
        assert!("FKG".parse::<InequalityKind>().is_err());
        assert!(matches!(
            ratio(1.0, 0.0, "x"),
            Err(Error::DivisionDegenerate(_))
        ));
    }

    #[test]
    fn efron_stein_at_zero_lambda() {
        let r = verify_inequality(InequalityKind::EfronStein, &m1(), 0.0, 6, 6, 1).unwrap();
        assert_eq!((r.lhs, r.rhs, r.slack), (0.0, 0.0, 0.0));
        assert_eq!(r.verdict, Verdict::Pass);
        let p = verify_inequality(InequalityKind::PivLemma, &m1(), 0.0, 6, 4, 1).unwrap();
        assert_eq!(p.constant, None);
        assert!(p
            .to_text()
            .contains("c_piv = unavailable (DIVISION_DEGENERATE)"));
        assert!(verify_inequality(InequalityKind::Russo, &m1(), 0.0, 6, 4, 1).is_err());
    }

    #[test]
    fn shared_survey_reports() {
        let kinds = InequalityKind::ALL;
        let mut o = VerifyOptions::new(40, 3);
        o.probes = 4;
        let rs = verify_many(&kinds, &m1(), 1.0, 6, &o).unwrap();
        assert_eq!(rs.len(), 6);
        for r in &rs {
            let t = r.to_text();
            assert!(t.starts_with(&format!("kind = {}\n", r.kind)));
            assert!(t.contains("verdict = "));
            assert!(r.slack.is_finite());
        }
        let es = &rs[1];
        assert!(es.blocks.iter().all(|b| b.lhs <= 1.0 && b.rhs <= 2.0));
        assert_eq!(rs[4].verdict, Verdict::Reported);
        // The same survey seen alone gives the same Efron-Stein report.
        let alone = verify_many(&[InequalityKind::EfronStein], &m1(), 1.0, 6, &o).unwrap();
        assert_eq!(alone[0], *es);
    }
}
