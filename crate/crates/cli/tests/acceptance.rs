//! Acceptance suite. Runs as a plain binary so that every criterion prints
//! its PASS/FAIL line under `cargo test`.
//!
//! Select criteria with free arguments or `COXPERC_ACCEPT=c03,c11`
//! (substring match on the criterion key).

#[path = "../../core/tests/support/exact_delaunay.rs"]
#[allow(dead_code, unused_imports)]
mod exact_delaunay;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use coxperc_core::analysis::{
    estimate_lambda_c, estimate_revealment, estimate_theta, hits_at, subcritical_fit,
    trial_levels, verify_inequality, verify_many, wilson_interval, InequalityKind, Verdict,
    VerifyOptions,
};
use coxperc_core::environment::{check_conditions_with, ConditionConfig, EnvBuilder};
use coxperc_core::geometry::{delaunay_triangulate, lex_cmp, predicates::orient, Point2};
use coxperc_core::lattice::{validate_params, BlockRange, ModelParams, ValidatedParams, Variant};
use coxperc_core::percolation::{clusters_of_points, explore_any_m, Instance};
use coxperc_core::presets;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria whose failure is analysed in the decisions ledger rather than
/// failing the build. Empty: every verdict is enforced.
const ALLOWED_TO_FAIL: &[&str] = &[];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn params(m: ModelParams) -> ValidatedParams {
    validate_params(&m).expect("desk parameters validate")
}

type Criterion = (&'static str, f64, fn() -> Outcome);

const CRITERIA: [Criterion; 13] = [
    ("c01_theta_convention", 1.0, c01),
    ("c02_delaunay_oracle", 30.0, c02),
    ("c03_circumradius", 60.0, c03),
    ("c04_cluster_oracle", 60.0, c04),
    ("c05_exploration_decides", 300.0, c05),
    ("c06_revealment_bound", 600.0, c06),
    ("c07_osss_efron_stein", 600.0, c07),
    ("c08_russo", 600.0, c08),
    ("c09_nontrivial_transition", 600.0, c09),
    ("c10_subcritical_decay", 900.0, c10),
    ("c11_monotone_coupling", 300.0, c11),
    ("c12_conditions", 600.0, c12),
    ("c13_reproducibility", 300.0, c13),
];

fn main() {
    let mut filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    if let Ok(v) = std::env::var("COXPERC_ACCEPT") {
        filters.extend(v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()));
    }
    let chosen: Vec<&Criterion> = CRITERIA
        .iter()
        .filter(|c| filters.is_empty() || filters.iter().any(|f| c.0.contains(f.as_str())))
        .collect();
    let mut hard_failures = Vec::new();
    for (key, budget, run) in chosen {
        let t0 = Instant::now();
        let o = run();
        let secs = t0.elapsed().as_secs_f64();
        let over = if secs > *budget { " OVER BUDGET" } else { "" };
        println!(
            "{} {key}: {} [{secs:.1} s of {budget} s{over}]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.pass && !ALLOWED_TO_FAIL.contains(key) {
            hard_failures.push(*key);
        }
    }
    if !hard_failures.is_empty() {
        println!("acceptance failures: {}", hard_failures.join(", "));
        std::process::exit(1);
    }
}

fn c01() -> Outcome {
    let p = params(presets::m1());
    let mut bad = Vec::new();
    for n in 1..=4 {
        for lambda in [0.0, 0.5, 3.0] {
            let t = estimate_theta(&p, lambda, n, 50, 11).unwrap();
            if t.theta != 1.0 || t.hits != 50 {
                bad.push((n, lambda));
            }
        }
    }
    outcome(bad.is_empty(), format!("theta_n = 1 for n <= 4, exceptions {bad:?}"))
}

fn collinear(p: &[Point2]) -> bool {
    let mut u = p.to_vec();
    u.sort_by(lex_cmp);
    u.dedup();
    u.len() < 3 || (2..u.len()).all(|k| orient(u[0], u[1], u[k]) == 0.0)
}

fn c02() -> Outcome {
    let (mut checked, mut violations, mut cocircular) = (0, 0, 0);
    for seed in 0..200 {
        let pts = exact_delaunay::random_instance(1000 + seed);
        if collinear(&pts) {
            if delaunay_triangulate(&pts).is_ok() {
                violations += 1;
            }
            continue;
        }
        let t = delaunay_triangulate(&pts).unwrap();
        checked += 1;
        cocircular += (pts.iter().filter(|q| q.x.fract() == 0.0 && q.y.fract() == 0.0).count() >= 4)
            as usize;
        violations += exact_delaunay::count_violations(&pts, &t.triangles);
    }
    outcome(
        violations == 0 && checked >= 190,
        format!("{checked} instances ({cocircular} with four or more grid points), {violations} violations"),
    )
}

fn c03() -> Outcome {
    let p = params(ModelParams {
        m: 5.0,
        b_inv: 21,
        l: 5.0,
        lambda_del: 1.0,
        rho: 2.0,
        variant: Variant::DelGrid,
        ..ModelParams::default()
    });
    let bound = 5.0 * 2f64.sqrt() / 2.0;
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let env = EnvBuilder::new(&p, BlockRange::around([0, 0], 2))
            .seed(300 + seed)
            .build()
            .unwrap();
        worst = worst.max(env.circumradius_max());
    }
    outcome(worst < bound, format!("max circumradius {worst:.6} vs bound {bound:.6}"))
}

fn naive_labels(pts: &[Point2], r: f64) -> Vec<u32> {
    let n = pts.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..n {
        for j in i + 1..n {
            if pts[i].dist(pts[j]) <= 2.0 * r {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut ids = BTreeMap::new();
    (0..n)
        .map(|i| {
            let root = find(&mut parent, i);
            let next = ids.len() as u32;
            *ids.entry(root).or_insert(next)
        })
        .collect()
}

fn c04() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut mismatched, mut points, mut clusters) = (0, 0, 0);
    for _ in 0..100 {
        let n = rng.gen_range(0..=2000usize);
        let side = (n as f64).sqrt().max(1.0) * rng.gen_range(0.6..1.4);
        let pts: Vec<Point2> = (0..n)
            .map(|_| Point2::new(rng.gen_range(0.0..side), rng.gen_range(0.0..side)))
            .collect();
        let got = clusters_of_points(&pts, 0.5);
        let want = naive_labels(&pts, 0.5);
        mismatched += (got.labels != want) as usize;
        points += n;
        clusters += got.n_clusters;
    }
    outcome(
        mismatched == 0,
        format!("100 configs, {points} points, {clusters} clusters, {mismatched} mismatched"),
    )
}

/// Finite-size crossing level of the M = 5 preset at n = 16, used as the
/// desk lambda near the transition.
fn m5_pilot_lambda(p: &ValidatedParams) -> f64 {
    match estimate_lambda_c(p, 16, 40, 0.5, 0.01, (0.02, 2.0), 505) {
        Ok(e) => e.midpoint(),
        Err(_) => p.lambda,
    }
}

fn c05() -> Outcome {
    let p = params(presets::m5());
    let lambda = m5_pilot_lambda(&p);
    let n = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (mut pairs, mut mismatches, mut crossings) = (0, 0, 0);
    for t in 0..50 {
        let inst = Instance::new(&p, n, lambda, 5050, t).unwrap();
        let f = inst.f_n(lambda).unwrap();
        crossings += f as usize;
        for k in sample(&mut rng, (n - 5) as usize, 10) {
            let m = 5 + k as i64;
            let e = explore_any_m(&inst.driver, &inst.env, lambda, n, m, false).unwrap();
            pairs += 1;
            mismatches += (e.outcome != f) as usize;
        }
    }
    outcome(
        mismatches == 0 && pairs >= 500,
        format!("lambda {lambda:.4}, {pairs} pairs, {crossings}/50 crossing instances, {mismatches} mismatches"),
    )
}

fn c06() -> Outcome {
    let p = params(presets::m5());
    let lambda = m5_pilot_lambda(&p);
    let r = estimate_revealment(&p, lambda, 16, 2000, 606).unwrap();
    let v = r.bound_violations();
    let dmax = r.blocks.iter().map(|b| b.1).fold(0.0, f64::max);
    outcome(
        v.is_empty() && r.mismatches == 0,
        format!(
            "lambda {lambda:.4}, max delta {dmax:.4}, bound {:.4} (se {:.4}), {} violations, {} mismatches",
            r.bound,
            r.bound_se,
            v.len(),
            r.mismatches
        ),
    )
}

fn c07() -> Outcome {
    let p = params(presets::m1());
    let opts = VerifyOptions::new(1500, 707);
    let reps = verify_many(&[InequalityKind::Osss, InequalityKind::EfronStein], &p, 1.0, 6, &opts)
        .unwrap();
    let pass = reps.iter().all(|r| {
        r.verdict == Verdict::Pass && r.blocks.iter().all(|b| b.verdict != Verdict::Fail)
    });
    let detail = reps
        .iter()
        .map(|r| {
            let failing = r.blocks.iter().filter(|b| b.verdict == Verdict::Fail).count();
            format!(
                "{}: lhs {:.4} rhs {:.4} se {:.4} {} ({} blocks, {failing} failing)",
                r.kind,
                r.lhs,
                r.rhs,
                r.combined_se,
                r.verdict.name(),
                r.blocks.len()
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    outcome(pass, detail)
}

fn c08() -> Outcome {
    let p = params(presets::m1());
    let r = verify_inequality(InequalityKind::Russo, &p, 1.0, 6, 20_000, 808).unwrap();
    outcome(
        r.verdict == Verdict::Pass,
        format!(
            "finite difference {:.5}, pivotal integral {:.5}, |gap| {:.5} vs 3 se {:.5}",
            r.lhs,
            r.rhs,
            (r.lhs - r.rhs).abs(),
            3.0 * r.combined_se
        ),
    )
}

fn column(levels: &[Vec<Option<f64>>], i: usize) -> Vec<Option<f64>> {
    levels.iter().map(|t| t[i]).collect()
}

fn c09() -> Outcome {
    let p = params(presets::m20());
    // Pilot: crossing levels of 40 trials up to lambda = 1.
    let pilot = column(&trial_levels(&p, &[10], 1.0, 40, 909).unwrap(), 0);
    let seen: Vec<f64> = pilot.iter().flatten().copied().collect();
    if seen.is_empty() {
        return outcome(false, "pilot saw no crossing below lambda = 1");
    }
    let lo = 0.8 * seen.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = if seen.len() == pilot.len() {
        (1.2 * seen.iter().copied().fold(0.0, f64::max)).min(1.0)
    } else {
        1.0
    };
    // Confirmation on fresh seeds; one coupled run serves both levels.
    let trials = 1000;
    let lv = column(&trial_levels(&p, &[10], hi, trials, 9090).unwrap(), 0);
    let (k_lo, k_hi) = (hits_at(&lv, lo), hits_at(&lv, hi));
    let (ci_lo, ci_hi) = (wilson_interval(k_lo, trials), wilson_interval(k_hi, trials));
    let (t_lo, t_hi) = (k_lo as f64 / trials as f64, k_hi as f64 / trials as f64);
    outcome(
        t_lo < 0.05 && t_hi > 0.5 && ci_lo.1 < ci_hi.0,
        format!(
            "lambda_lo {lo:.4} theta {t_lo:.4} ci [{:.4}, {:.4}]; lambda_hi {hi:.4} theta {t_hi:.4} ci [{:.4}, {:.4}]",
            ci_lo.0, ci_lo.1, ci_hi.0, ci_hi.1
        ),
    )
}

fn c10() -> Outcome {
    let p = params(presets::m1());
    let bracket = estimate_lambda_c(&p, 16, 100, 0.5, 0.01, (1.0, 12.0), 1010).unwrap();
    let lambda = 0.5 * bracket.midpoint();
    let ns: Vec<i64> = (6..=16).collect();
    let mut trials = 2000;
    loop {
        let lv = trial_levels(&p, &ns, lambda, trials, 10_100).unwrap();
        let thetas: Vec<f64> = (0..ns.len())
            .map(|i| hits_at(&column(&lv, i), lambda) as f64 / trials as f64)
            .collect();
        let nonzero = thetas.iter().filter(|t| **t > 0.0).count();
        if nonzero < 3 && trials < 32_000 {
            trials *= 4;
            continue;
        }
        return match subcritical_fit(&ns, &thetas) {
            Ok(f) => outcome(
                f.slope < 0.0 && f.r2 >= 0.9,
                format!(
                    "lambda {lambda:.4} (bracket [{:.4}, {:.4}]), {trials} trials, {nonzero} nonzero, slope {:.4} r2 {:.4}",
                    bracket.lo, bracket.hi, f.slope, f.r2
                ),
            ),
            Err(e) => outcome(false, format!("lambda {lambda:.4}, {trials} trials: {e}")),
        };
    }
}

fn c11() -> Outcome {
    let p = params(presets::m1());
    let grid = [0.5, 0.75, 1.0, 1.25, 1.5];
    let (mut pairs, mut violations) = (0u64, 0u64);
    let mut hits = [0u64; 5];
    for t in 0..2500 {
        let inst = Instance::new(&p, 6, 1.5, 1111, t).unwrap();
        let f: Vec<bool> = grid.iter().map(|&l| inst.f_n(l).unwrap()).collect();
        for (h, &x) in hits.iter_mut().zip(&f) {
            *h += x as u64;
        }
        for w in f.windows(2) {
            pairs += 1;
            violations += (w[0] && !w[1]) as u64;
        }
    }
    outcome(
        violations == 0 && pairs == 10_000,
        format!("{pairs} pairs, {violations} violations, hits {hits:?}"),
    )
}

fn c12() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, m) in [("m5", presets::m5()), ("m20", presets::m20())] {
        let p = params(m);
        let env = EnvBuilder::new(&p, BlockRange::around([0, 0], 18))
            .seed(1212)
            .build()
            .unwrap();
        let cfg = ConditionConfig {
            eta: p.eta,
            q0: 0.9999,
            coverage_blocks: 200,
            one_dep_sites: 500,
            conn_blocks: 1000,
        };
        let r = check_conditions_with(&env, &cfg, 1212).unwrap();
        let ok = r.one_dependence
            && r.one_dependence_checked == 500
            && r.cap_ok
            && r.essential.pass_at_eta
            && r.essential.blocks_checked == 1000;
        pass &= ok;
        detail.push(format!(
            "{name}: one_dep {}/{} mismatches {}, max mass {:.4} <= rho {}, essential {} over {} blocks (eta {}, eta_max {}), coverage {:.4} [{:.4}, {:.4}] vs q0 {}",
            r.one_dependence_checked - r.one_dependence_mismatches.len(),
            r.one_dependence_checked,
            r.one_dependence_mismatches.len(),
            r.max_mass,
            r.rho,
            if r.essential.pass_at_eta { "pass" } else { "fail" },
            r.essential.blocks_checked,
            p.eta,
            r.essential.eta_max,
            r.coverage,
            r.coverage_ci.0,
            r.coverage_ci.1,
            r.q0
        ));
    }
    outcome(pass, detail.join("; "))
}

/// (subcommand, arguments) with small desk configurations.
const RUNS: [(&str, &[&str]); 8] = [
    (
        "check-env",
        &["--preset", "m5", "--env-radius", "2", "--coverage-blocks", "10", "--one-dep-sites", "8", "--conn-blocks", "2"],
    ),
    ("theta", &["--preset", "m1", "--n", "6", "--trials", "20"]),
    ("sweep", &["--preset", "m1", "--n-list", "5 6", "--lambda-list", "0.5 1", "--trials", "10"]),
    ("lambda-c", &["--preset", "m1", "--n", "6", "--trials", "20"]),
    (
        "sharpness",
        &["--preset", "m1", "--n-list", "6 7 8", "--lambda-list", "0.5 2 8", "--trials", "20"],
    ),
    ("influence", &["--preset", "m1", "--n", "6", "--trials", "8", "--probes", "4"]),
    ("reveal", &["--preset", "m1", "--n", "16", "--trials", "6"]),
    ("verify", &["all", "--preset", "m1", "--n", "6", "--trials", "12"]),
];

fn run_all(dir: &Path, threads: usize) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let bin = env!("CARGO_BIN_EXE_coxperc");
    let th = threads.to_string();
    let mut calls: Vec<Vec<String>> = RUNS
        .iter()
        .map(|(cmd, args)| {
            std::iter::once(*cmd)
                .chain(args.iter().copied())
                .map(str::to_string)
                .collect()
        })
        .collect();
    let theta = dir.join("theta.csv").to_string_lossy().into_owned();
    calls.push(
        ["plot", "--kind", "theta_vs_lambda", "--input", theta.as_str()]
            .map(str::to_string)
            .to_vec(),
    );
    for mut args in calls {
        args.extend(["--threads".to_string(), th.clone()]);
        let o = Command::new(bin)
            .args(&args)
            .env("COXPERC_OUTPUT_DIR", dir)
            .output()
            .map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(format!("{}: {}", args[0], String::from_utf8_lossy(&o.stderr).trim()));
        }
    }
    let mut out = BTreeMap::new();
    for e in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = e.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if name != "runs.jsonl" {
            out.insert(name, fs::read(&path).map_err(|e| e.to_string())?);
        }
    }
    Ok(out)
}

fn c13() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let mut sets = Vec::new();
    for threads in [1, 2, 8] {
        let dir = root.path().join(format!("t{threads}"));
        fs::create_dir_all(&dir).unwrap();
        match run_all(&dir, threads) {
            Ok(s) => sets.push((threads, s)),
            Err(e) => return outcome(false, format!("{threads} threads: {e}")),
        }
    }
    let base = &sets[0].1;
    let differing: Vec<String> = sets[1..]
        .iter()
        .flat_map(|(t, s)| {
            let mut d: Vec<String> = base
                .iter()
                .filter(|(k, v)| s.get(*k) != Some(v))
                .map(|(k, _)| format!("{k}@{t}"))
                .collect();
            d.extend(s.keys().filter(|k| !base.contains_key(*k)).map(|k| format!("{k}@{t}")));
            d
        })
        .collect();
    outcome(
        differing.is_empty() && base.len() >= 10,
        format!("{} artifacts at 1, 2, 8 threads, differing {differing:?}", base.len()),
    )
}
