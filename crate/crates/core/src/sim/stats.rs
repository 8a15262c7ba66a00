use std::collections::HashMap;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::path_rng;

/// Linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let f = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - f) + sorted[i + 1] * f
    } else {
        sorted[i]
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&v, 0.5)
}

/// Ordinary least squares `y = a + b x`; returns `(a, b, rss)`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let rss = x.iter().zip(y).map(|(u, v)| (v - a - b * u).powi(2)).sum();
    (a, b, rss)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HillEstimate {
    pub index: f64,
    pub std_error: f64,
    pub k_used: usize,
    pub threshold: f64,
}

fn hill_core(sorted_desc: &[f64], k: usize) -> f64 {
    let th = sorted_desc[k];
    let s: f64 = sorted_desc[..k].iter().map(|v| (v / th).ln()).sum();
    k as f64 / s
}

/// Hill estimate of the tail index from the largest `top_fraction` of the
/// samples, with a bootstrap standard error.
pub fn hill_estimate(samples: &[f64], top_fraction: f64, seed: u64) -> Result<HillEstimate> {
    if !(top_fraction > 0.0 && top_fraction < 1.0) {
        return Err(Error::InvalidParams(format!("top_fraction must be in (0, 1), got {top_fraction}")));
    }
    let n = samples.len();
    let k = (top_fraction * n as f64).floor() as usize;
    if k < 10 || k >= n {
        return Err(Error::InsufficientData(format!("{k} tail samples out of {n}")));
    }
    let mut sorted: Vec<f64> = samples.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    if !(sorted[k] > 0.0) {
        return Err(Error::InvalidParams("Hill estimator needs positive tail samples".into()));
    }
    let index = hill_core(&sorted, k);
    let mut rng = path_rng(seed, 0);
    let reps = 200;
    let mut boots = Vec::with_capacity(reps);
    let mut buf = vec![0.0; n];
    for _ in 0..reps {
        for b in buf.iter_mut() {
            *b = samples[rng.random_range(0..n)];
        }
        buf.sort_by(|a, b| b.total_cmp(a));
        if buf[k] > 0.0 {
            boots.push(hill_core(&buf, k));
        }
    }
    let m = boots.iter().sum::<f64>() / boots.len() as f64;
    let var = boots.iter().map(|b| (b - m) * (b - m)).sum::<f64>() / (boots.len() as f64 - 1.0);
    Ok(HillEstimate { index, std_error: var.sqrt(), k_used: k, threshold: sorted[k] })
}

/// Kolmogorov-Smirnov distance to a continuous CDF.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Half the L1 distance between histograms of two samples on a common grid
/// whose edges are per-coordinate quantiles of the pooled sample.
pub fn tv_proxy(a: &[Vec<f64>], b: &[Vec<f64>], bins_per_dim: usize) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    if bins_per_dim < 1 {
        return Err(Error::InvalidParams("bins_per_dim must be at least 1".into()));
    }
    let d = a[0].len();
    if a.iter().chain(b).any(|r| r.len() != d) {
        return Err(Error::InvalidParams("rows have inconsistent dimension".into()));
    }
    let edges: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let mut col: Vec<f64> = a.iter().chain(b).map(|r| r[j]).collect();
            col.sort_by(|x, y| x.total_cmp(y));
            (1..bins_per_dim).map(|i| quantile_sorted(&col, i as f64 / bins_per_dim as f64)).collect()
        })
        .collect();
    let cell = |r: &Vec<f64>| -> usize {
        let mut idx = 0;
        for j in 0..d {
            let e = &edges[j];
            let pos = e.partition_point(|&v| v < r[j]);
            idx = idx * bins_per_dim + pos;
        }
        idx
    };
    let mut counts: HashMap<usize, (f64, f64)> = HashMap::new();
    for r in a {
        counts.entry(cell(r)).or_default().0 += 1.0;
    }
    for r in b {
        counts.entry(cell(r)).or_default().1 += 1.0;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    Ok(0.5 * counts.values().map(|(x, y)| (x / na - y / nb).abs()).sum::<f64>())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayFamily {
    Exponential,
    Stretched,
    Polynomial,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    pub family: DecayFamily,
    /// `gamma` in `C exp(-gamma t^s)`, or `r` in `C t^{-r}`.
    pub rate: f64,
    /// `s` for the stretched family (1 for exponential, 0 for polynomial).
    pub exponent: f64,
    pub log_prefactor: f64,
    pub rss: f64,
}

fn bic(rss: f64, n: usize, p: usize) -> f64 {
    let n = n as f64;
    n * (rss / n).max(1e-300).ln() + p as f64 * n.ln()
}

/// Chooses between `C e^{-gamma t}`, `C e^{-gamma t^s}` with `s < 1`, and
/// `C t^{-r}` by least squares on `ln d` and the Bayesian information
/// criterion. Only strictly positive values at positive times are used.
pub fn fit_decay(times: &[f64], values: &[f64]) -> Result<DecayFit> {
    let (t, y): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(t, v)| **t > 0.0 && **v > 0.0 && v.is_finite())
        .map(|(t, v)| (*t, v.ln()))
        .unzip();
    let n = t.len();
    if n < 5 {
        return Err(Error::InsufficientData(format!("{n} usable points")));
    }
    let (ae, be, rss_e) = ols(&t, &y);
    let lt: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let (ap, bp, rss_p) = ols(&lt, &y);
    let stretched = |s: f64| {
        let ts: Vec<f64> = t.iter().map(|v| v.powf(s)).collect();
        ols(&ts, &y)
    };
    // coarse grid then golden section on s
    let (lo_s, hi_s) = (0.02, 0.98);
    let mut best = (lo_s, f64::INFINITY);
    let steps = 96;
    for i in 0..=steps {
        let s = lo_s + (hi_s - lo_s) * i as f64 / steps as f64;
        let r = stretched(s).2;
        if r < best.1 {
            best = (s, r);
        }
    }
    let h = (hi_s - lo_s) / steps as f64;
    let (mut a, mut b) = ((best.0 - h).max(lo_s), (best.0 + h).min(hi_s));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if stretched(c).2 < stretched(d).2 {
            b = d;
        } else {
            a = c;
        }
    }
    let s_best = 0.5 * (a + b);
    let (as_, bs, rss_s) = stretched(s_best);
    let cands = [
        (bic(rss_e, n, 2), DecayFit { family: DecayFamily::Exponential, rate: -be, exponent: 1.0, log_prefactor: ae, rss: rss_e }),
        (bic(rss_p, n, 2), DecayFit { family: DecayFamily::Polynomial, rate: -bp, exponent: 0.0, log_prefactor: ap, rss: rss_p }),
        (bic(rss_s, n, 3), DecayFit { family: DecayFamily::Stretched, rate: -bs, exponent: s_best, log_prefactor: as_, rss: rss_s }),
    ];
    let mut pick = cands[0];
    for c in &cands[1..] {
        if c.0 < pick.0 {
            pick = *c;
        }
    }
    Ok(pick.1)
}

/// Least-squares slope of the cross-path median over the second half of the
/// records, with a bootstrap standard error obtained by resampling paths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlopeTest {
    pub slope: f64,
    pub std_error: f64,
}

pub fn median_slope(times: &[f64], values: &[Vec<f64>], seed: u64) -> Result<SlopeTest> {
    let r = times.len();
    if r < 4 || values.is_empty() {
        return Err(Error::InsufficientData("need at least 4 records".into()));
    }
    let half = r / 2;
    let slope_of = |idx: &[usize]| {
        let med: Vec<f64> = (half..r)
            .map(|j| median(&idx.iter().map(|&i| values[i][j]).collect::<Vec<_>>()))
            .collect();
        ols(&times[half..], &med).1
    };
    let all: Vec<usize> = (0..values.len()).collect();
    let slope = slope_of(&all);
    let mut rng = path_rng(seed, 0);
    let reps = 100;
    let boots: Vec<f64> = (0..reps)
        .map(|_| {
            let idx: Vec<usize> = (0..values.len()).map(|_| rng.random_range(0..values.len())).collect();
            slope_of(&idx)
        })
        .collect();
    let m = boots.iter().sum::<f64>() / reps as f64;
    let se = (boots.iter().map(|b| (b - m) * (b - m)).sum::<f64>() / (reps as f64 - 1.0)).sqrt();
    Ok(SlopeTest { slope, std_error: se })
}
