use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::integrator::{step, IntegratorConfig};
use super::stats::quantile_sorted;
use crate::error::{Error, Result};
use crate::model::{ModelParams, State4};
use crate::rng::path_rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_paths: usize,
    pub t_end: f64,
    /// Time between stored snapshots.
    pub record_every: f64,
    pub seed: u64,
    pub x0: State4,
}

/// Snapshots `states[path][record]` at `times[record]`.
#[derive(Clone, Debug)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    pub states: Vec<Vec<State4>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub t: f64,
    pub mean: f64,
    pub median: f64,
    pub q05: f64,
    pub q95: f64,
}

pub fn run_ensemble(params: &ModelParams, icfg: &IntegratorConfig, ecfg: &EnsembleConfig) -> Result<EnsembleResult> {
    icfg.validate()?;
    if ecfg.n_paths == 0 {
        return Err(Error::InvalidParams("n_paths must be positive".into()));
    }
    let per_record = (ecfg.record_every / icfg.dt).round().max(1.0) as usize;
    let n_records = (ecfg.t_end / (per_record as f64 * icfg.dt)).floor() as usize + 1;
    let times: Vec<f64> = (0..n_records).map(|r| r as f64 * per_record as f64 * icfg.dt).collect();
    let paths: Result<Vec<Vec<State4>>> = (0..ecfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(ecfg.seed, i as u64);
            let mut x = ecfg.x0;
            let mut out = Vec::with_capacity(n_records);
            out.push(x);
            for r in 1..n_records {
                for _ in 0..per_record {
                    x = step(&x, params, icfg, &mut rng).map_err(|_| Error::Diverged(times[r]))?;
                }
                out.push(x);
            }
            Ok(out)
        })
        .collect();
    Ok(EnsembleResult { times, states: paths? })
}

impl EnsembleResult {
    pub fn n_paths(&self) -> usize {
        self.states.len()
    }

    /// `values[path][record]` of an observable.
    pub fn observable(&self, f: impl Fn(&State4) -> f64 + Sync) -> Vec<Vec<f64>> {
        self.states.par_iter().map(|path| path.iter().map(&f).collect()).collect()
    }

    /// States of all paths at one record.
    pub fn snapshot(&self, record: usize) -> Vec<State4> {
        self.states.iter().map(|p| p[record]).collect()
    }

    pub fn summary(&self, f: impl Fn(&State4) -> f64 + Sync) -> Vec<SummaryRow> {
        summarize(&self.times, &self.observable(f))
    }
}

/// Mean and quantiles across paths at each record time.
pub fn summarize(times: &[f64], values: &[Vec<f64>]) -> Vec<SummaryRow> {
    times
        .iter()
        .enumerate()
        .map(|(r, &t)| {
            let mut col: Vec<f64> = values.iter().map(|v| v[r]).collect();
            col.sort_by(|a, b| a.total_cmp(b));
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            SummaryRow {
                t,
                mean,
                median: quantile_sorted(&col, 0.5),
                q05: quantile_sorted(&col, 0.05),
                q95: quantile_sorted(&col, 0.95),
            }
        })
        .collect()
}
