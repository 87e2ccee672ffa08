use super::lambda_c::bisect_levels;
use super::theta::{hits_at, trial_levels};
use crate::error::{Error, Result};
use crate::lattice::ValidatedParams;

/// Ordinary least squares y = intercept + slope * x.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    pub r2: f64,
    pub n: usize,
}

/// Standard errors are infinite with only two points.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::Range("x and y differ in length".into()));
    }
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} points")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::InsufficientData("all x equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = b - intercept - slope * a;
            e * e
        })
        .sum();
    let (slope_se, intercept_se) = if n > 2 {
        let s2 = ssr / (nf - 2.0);
        ((s2 / sxx).sqrt(), (s2 * (1.0 / nf + mx * mx / sxx)).sqrt())
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    let r2 = if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 };
    Ok(LinearFit {
        slope,
        intercept,
        slope_se,
        intercept_se,
        r2,
        n,
    })
}

/// Slope of log theta_n against n, using only the n with theta_n > 0.
/// Fewer than three such n is INSUFFICIENT_DATA.
pub fn subcritical_fit(ns: &[i64], thetas: &[f64]) -> Result<LinearFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = ns
        .iter()
        .zip(thetas)
        .filter(|(_, t)| **t > 0.0)
        .map(|(n, t)| (*n as f64, t.ln()))
        .unzip();
    if x.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} nonzero theta values",
            x.len()
        )));
    }
    linear_fit(&x, &y)
}

/// Regression of theta on (lambda - lambda_c).
pub fn supercritical_fit(lambdas: &[f64], thetas: &[f64], lambda_c: f64) -> Result<LinearFit> {
    let x: Vec<f64> = lambdas.iter().map(|l| l - lambda_c).collect();
    linear_fit(&x, thetas)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubcriticalRow {
    pub lambda: f64,
    pub thetas: Vec<f64>,
    /// Err carries the INSUFFICIENT_DATA note.
    pub fit: std::result::Result<LinearFit, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SharpnessReport {
    pub bracket: (f64, f64),
    pub lambda_c_hat: f64,
    pub n_list: Vec<i64>,
    pub trials: u64,
    pub seed: u64,
    pub subcritical: Vec<SubcriticalRow>,
    /// Grid points above the bracket, theta at the largest n.
    pub super_points: Vec<(f64, f64)>,
    pub supercritical: std::result::Result<LinearFit, String>,
}

fn fit_text(prefix: &str, f: &std::result::Result<LinearFit, String>) -> String {
    match f {
        Ok(f) => format!(
            "{prefix}.slope = {}\n{prefix}.slope_se = {}\n{prefix}.intercept = {}\n\
             {prefix}.intercept_se = {}\n{prefix}.r2 = {}\n{prefix}.points = {}\n",
            f.slope, f.slope_se, f.intercept, f.intercept_se, f.r2, f.n
        ),
        Err(note) => format!("{prefix}.note = INSUFFICIENT_DATA: {note}\n"),
    }
}

impl SharpnessReport {
    pub fn to_text(&self) -> String {
        let ns: Vec<String> = self.n_list.iter().map(|n| n.to_string()).collect();
        let mut s = format!(
            "kind = sharpness\n\
             note = lambda_c bracket is a finite-size proxy at the largest n, threshold 0.5\n\
             lambda_c_lo = {}\nlambda_c_hi = {}\nlambda_c_hat = {}\nn_list = {}\ntrials = {}\nseed = {}\n",
            self.bracket.0,
            self.bracket.1,
            self.lambda_c_hat,
            ns.join(" "),
            self.trials,
            self.seed
        );
        for (i, row) in self.subcritical.iter().enumerate() {
            let th: Vec<String> = row.thetas.iter().map(|t| t.to_string()).collect();
            s.push_str(&format!(
                "sub[{i}].lambda = {}\nsub[{i}].theta = {}\n",
                row.lambda,
                th.join(" ")
            ));
            s.push_str(&fit_text(&format!("sub[{i}]"), &row.fit));
        }
        for (l, t) in &self.super_points {
            s.push_str(&format!("super.point = {l} {t}\n"));
        }
        s.push_str(&fit_text("super", &self.supercritical));
        s
    }
}

/// Subcritical decay fits below the lambda_c bracket and a linear fit of
/// theta just above it, from one coupled theta table.
pub fn fit_sharpness(
    p: &ValidatedParams,
    lambdas: &[f64],
    ns: &[i64],
    trials: u64,
    seed: u64,
) -> Result<SharpnessReport> {
    if let Some(&n) = ns.iter().find(|&&n| n < 6) {
        return Err(Error::NTooSmall { n, min: 6 });
    }
    let nmax = *ns
        .iter()
        .max()
        .ok_or_else(|| Error::Range("empty n list".into()))?;
    if lambdas.len() < 2 || lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
        return Err(Error::Range(
            "need at least two finite nonnegative lambda values".into(),
        ));
    }
    let mut grid = lambdas.to_vec();
    grid.sort_by(f64::total_cmp);
    let (lmin, lmax) = (grid[0], grid[grid.len() - 1]);
    let lv = trial_levels(p, ns, lmax, trials, seed)?;
    let kmax = ns.iter().position(|&n| n == nmax).unwrap();
    let col = |k: usize| -> Vec<Option<f64>> { lv.iter().map(|r| r[k]).collect() };
    let theta = |k: usize, l: f64| hits_at(&col(k), l) as f64 / trials as f64;
    let (lo, hi, _) = bisect_levels(&col(kmax), 0.5, (lmax - lmin) * 1e-3, (lmin, lmax))?;
    let lc = 0.5 * (lo + hi);

    let subcritical = grid
        .iter()
        .filter(|&&l| l < lo)
        .map(|&l| {
            let thetas: Vec<f64> = (0..ns.len()).map(|k| theta(k, l)).collect();
            let fit = subcritical_fit(ns, &thetas).map_err(|e| match e {
                Error::InsufficientData(s) => s,
                e => e.to_string(),
            });
            SubcriticalRow {
                lambda: l,
                thetas,
                fit,
            }
        })
        .collect();
    let super_points: Vec<(f64, f64)> = grid
        .iter()
        .filter(|&&l| l > hi)
        .map(|&l| (l, theta(kmax, l)))
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = super_points.iter().copied().unzip();
    let supercritical = supercritical_fit(&xs, &ys, lc).map_err(|e| e.to_string());
    Ok(SharpnessReport {
        bracket: (lo, hi),
        lambda_c_hat: lc,
        n_list: ns.to_vec(),
        trials,
        seed,
        subcritical,
        super_points,
        supercritical,
    })
}
