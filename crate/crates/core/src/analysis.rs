//! Deterministic and Monte Carlo comparison of the two formulations.
//!
//! The deterministic path clears one instance under both formulations and
//! reduces the outcome differences to RMSEs over nodal prices, voltage
//! magnitudes, apparent branch flows and settled revenues, optionally
//! normalized against a reference case. The Monte Carlo path perturbs the
//! bid set per sample, clears both formulations, and accumulates per-bus
//! and per-branch moment series with running-mean convergence traces.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bids::{perturb_bids, ScenarioConfig};
use crate::formulation::{Formulation, MarketInstance};
use crate::market::{clear_with, ClearingResult, MarketError};
use crate::solver::{SolverBackend, SolverSettings};

/// Entries whose |mean| falls below this fraction of the quantity's own
/// mean magnitude get their CV flagged as unreliable.
pub const CV_FLAG_FRACTION: f64 = 1e-3;

/// Monte Carlo aborts when more than this fraction of samples fail.
pub const MAX_FAILED_FRACTION: f64 = 0.05;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("comparison input did not clear: {0}")]
    Comparison(#[from] MarketError),
    #[error("{failed} of {attempted} Monte Carlo samples failed (limit {limit:.0}%)")]
    TooManyFailures {
        failed: usize,
        attempted: usize,
        limit: f64,
    },
}

/// Root-mean-squared componentwise difference.
pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64, AnalysisError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(AnalysisError::DimensionMismatch(a.len(), b.len()));
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sum / a.len() as f64).sqrt())
}

/// RMSEs of the four compared market outcomes.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RmseSet {
    pub dlmp: f64,
    pub voltage: f64,
    pub flow: f64,
    pub revenue: f64,
}

impl RmseSet {
    fn normalized_by(&self, reference: &RmseSet) -> RmseSet {
        let div = |a: f64, b: f64| if b > 0.0 { a / b } else { f64::NAN };
        RmseSet {
            dlmp: div(self.dlmp, reference.dlmp),
            voltage: div(self.voltage, reference.voltage),
            flow: div(self.flow, reference.flow),
            revenue: div(self.revenue, reference.revenue),
        }
    }
}

/// Outcome of one linear-vs-cone comparison.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub case_label: String,
    pub rmse: RmseSet,
    /// Present when a reference report was supplied.
    pub rmse_normalized: Option<RmseSet>,
    /// Bus label and relative deviation (percent) of the largest nodal
    /// price gap between the formulations.
    pub max_dlmp_dev: (i64, f64),
}

/// Compare one instance cleared under both formulations.
///
/// Flow RMSE runs over internal branches (the virtual interface carries the
/// whole system's loss difference and is not a market line). The maximum
/// price deviation is relative to the cone formulation's price.
pub fn compare_deterministic(
    lp: &ClearingResult,
    socp: &ClearingResult,
    label: &str,
    reference: Option<&ComparisonReport>,
) -> Result<ComparisonReport, AnalysisError> {
    let rmse_set = RmseSet {
        dlmp: rmse(&lp.dlmp, &socp.dlmp)?,
        voltage: rmse(&lp.voltages, &socp.voltages)?,
        flow: rmse(&lp.internal_flows(), &socp.internal_flows())?,
        revenue: rmse(&lp.revenues, &socp.revenues)?,
    };

    let mut max_dev = (lp.bus_ids[lp.root], 0.0f64);
    for i in 0..lp.dlmp.len() {
        let denom = socp.dlmp[i].abs();
        if denom < 1e-9 {
            continue;
        }
        let dev = 100.0 * (lp.dlmp[i] - socp.dlmp[i]).abs() / denom;
        if dev > max_dev.1 {
            max_dev = (lp.bus_ids[i], dev);
        }
    }

    Ok(ComparisonReport {
        case_label: label.to_string(),
        rmse: rmse_set,
        rmse_normalized: reference.map(|r| rmse_set.normalized_by(&r.rmse)),
        max_dlmp_dev: max_dev,
    })
}

/// Render comparison rows as the four-column RMSE table.
pub fn comparison_table_csv(rows: &[(String, RmseSet)]) -> String {
    let mut out = String::from("case,dlmp,voltage,flow,revenue\n");
    for (label, set) in rows {
        out.push_str(&format!(
            "{label},{:.6},{:.6},{:.6},{:.6}\n",
            set.dlmp, set.voltage, set.flow, set.revenue
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// Monte Carlo

/// Moment series for one quantity (per bus or per branch).
#[derive(Debug, Clone, Serialize)]
pub struct SeriesStats {
    /// Entity labels (bus ids, or `from-to` branch labels).
    pub labels: Vec<String>,
    pub mean: Vec<f64>,
    /// Sample standard deviation (zero for a single sample).
    pub std: Vec<f64>,
    /// Coefficient of variation, std / |mean|.
    pub cv: Vec<f64>,
    /// CV flagged unreliable: |mean| below `CV_FLAG_FRACTION` of the
    /// quantity's mean magnitude.
    pub flagged: Vec<bool>,
    /// Sample counts at which running means were recorded.
    pub checkpoints: Vec<usize>,
    /// Running mean per checkpoint (outer) and entity (inner).
    pub running_mean: Vec<Vec<f64>>,
}

impl SeriesStats {
    /// Accumulate moment series from per-sample vectors, recording running
    /// means every `checkpoint_every` samples (and at the end).
    pub fn accumulate(labels: Vec<String>, samples: &[Vec<f64>], checkpoint_every: usize) -> SeriesStats {
        let n_ent = labels.len();
        let n = samples.len();
        let mut sum = vec![0.0; n_ent];
        let mut sumsq = vec![0.0; n_ent];
        let mut checkpoints = Vec::new();
        let mut running_mean = Vec::new();
        for (k, sample) in samples.iter().enumerate() {
            assert_eq!(sample.len(), n_ent, "sample width mismatch");
            for (i, &v) in sample.iter().enumerate() {
                sum[i] += v;
                sumsq[i] += v * v;
            }
            let count = k + 1;
            if count % checkpoint_every.max(1) == 0 || count == n {
                checkpoints.push(count);
                running_mean.push(sum.iter().map(|s| s / count as f64).collect());
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n.max(1) as f64).collect();
        let std: Vec<f64> = (0..n_ent)
            .map(|i| {
                if n < 2 {
                    0.0
                } else {
                    let var = (sumsq[i] - sum[i] * sum[i] / n as f64) / (n as f64 - 1.0);
                    var.max(0.0).sqrt()
                }
            })
            .collect();
        let mean_mag = mean.iter().map(|m| m.abs()).sum::<f64>() / n_ent.max(1) as f64;
        let flagged: Vec<bool> = mean.iter().map(|m| m.abs() < CV_FLAG_FRACTION * mean_mag).collect();
        let cv: Vec<f64> = mean
            .iter()
            .zip(&std)
            .map(|(m, s)| if m.abs() > 0.0 { s / m.abs() } else { f64::NAN })
            .collect();
        SeriesStats {
            labels,
            mean,
            std,
            cv,
            flagged,
            checkpoints,
            running_mean,
        }
    }

    /// Largest relative running-mean change over the trailing fraction of
    /// samples, across entities with reliable means.
    pub fn drift_metric(&self, window_fraction: f64) -> f64 {
        let Some(&total) = self.checkpoints.last() else {
            return 0.0;
        };
        let start = (total as f64 * (1.0 - window_fraction)) as usize;
        let final_mean = self.running_mean.last().expect("nonempty");
        let mut drift = 0.0f64;
        for (ci, &count) in self.checkpoints.iter().enumerate() {
            if count < start {
                continue;
            }
            for i in 0..self.labels.len() {
                if self.flagged[i] || final_mean[i].abs() < 1e-12 {
                    continue;
                }
                let rel = (self.running_mean[ci][i] - final_mean[i]).abs() / final_mean[i].abs();
                drift = drift.max(rel);
            }
        }
        drift
    }

    /// Per-entity summary CSV (label, mean, std, cv, flagged).
    pub fn summary_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "entity,mean,std,cv,cv_flagged")?;
        for i in 0..self.labels.len() {
            writeln!(
                w,
                "{},{:.8},{:.8},{:.8},{}",
                self.labels[i], self.mean[i], self.std[i], self.cv[i], self.flagged[i]
            )?;
        }
        Ok(())
    }

    /// Long-format running-mean trace CSV (entity, samples, running_mean).
    pub fn trace_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "entity,samples,running_mean")?;
        for (ci, &count) in self.checkpoints.iter().enumerate() {
            for i in 0..self.labels.len() {
                writeln!(w, "{},{},{:.8}", self.labels[i], count, self.running_mean[ci][i])?;
            }
        }
        Ok(())
    }
}

/// Monte Carlo moments for one formulation.
#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloStats {
    pub formulation: Formulation,
    pub seed: u64,
    pub samples_attempted: usize,
    pub samples_used: usize,
    pub failed_samples: Vec<usize>,
    /// Nodal prices per bus, EUR/MWh.
    pub dlmp: SeriesStats,
    /// Apparent flow per internal branch, MVA.
    pub flow: SeriesStats,
}

/// Run the sampled comparison: per sample, perturb the base instance's
/// bids, clear under both formulations, and accumulate moments. Samples
/// where either formulation fails to clear are excluded from the moments
/// and reported; more than `MAX_FAILED_FRACTION` failures aborts.
///
/// Samples are solved in parallel; accumulation is sequential in sample
/// order, so results are independent of thread scheduling.
pub fn run_monte_carlo(
    base: &MarketInstance,
    cfg: &ScenarioConfig,
    backend: &(dyn SolverBackend + Sync),
    settings: &SolverSettings,
    checkpoint_every: usize,
) -> Result<(MonteCarloStats, MonteCarloStats), AnalysisError> {
    cfg.validate().map_err(|e| {
        AnalysisError::Comparison(MarketError::Inconsistent(format!("invalid config: {e}")))
    })?;

    type SampleOut = Option<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)>;
    let outcomes: Vec<SampleOut> = (0..cfg.samples)
        .into_par_iter()
        .map(|k| {
            let bids = perturb_bids(&base.bids, cfg, k);
            let inst_lp = base.with_bids(bids).with_formulation(Formulation::Lp);
            let inst_socp = inst_lp.with_formulation(Formulation::Socp);
            let lp = clear_with(&inst_lp, backend, settings).ok()?;
            let socp = clear_with(&inst_socp, backend, settings).ok()?;
            Some((
                lp.dlmp.clone(),
                lp.internal_flows(),
                socp.dlmp.clone(),
                socp.internal_flows(),
            ))
        })
        .collect();

    let failed_samples: Vec<usize> = outcomes
        .iter()
        .enumerate()
        .filter_map(|(k, o)| o.is_none().then_some(k))
        .collect();
    if failed_samples.len() as f64 > MAX_FAILED_FRACTION * cfg.samples as f64 {
        return Err(AnalysisError::TooManyFailures {
            failed: failed_samples.len(),
            attempted: cfg.samples,
            limit: 100.0 * MAX_FAILED_FRACTION,
        });
    }

    let bus_labels: Vec<String> = base.net.buses.iter().map(|b| b.id.to_string()).collect();
    let branch_labels: Vec<String> = base
        .net
        .internal_branches()
        .map(|i| {
            let br = &base.net.branches[i];
            format!(
                "{}-{}",
                base.net.bus_id(br.from_bus.expect("internal branch")),
                base.net.bus_id(br.to_bus)
            )
        })
        .collect();

    let mut lp_dlmp = Vec::new();
    let mut lp_flow = Vec::new();
    let mut socp_dlmp = Vec::new();
    let mut socp_flow = Vec::new();
    for o in outcomes.into_iter().flatten() {
        lp_dlmp.push(o.0);
        lp_flow.push(o.1);
        socp_dlmp.push(o.2);
        socp_flow.push(o.3);
    }
    let samples_used = lp_dlmp.len();

    let make = |formulation, dlmp_samples: &[Vec<f64>], flow_samples: &[Vec<f64>]| MonteCarloStats {
        formulation,
        seed: cfg.seed,
        samples_attempted: cfg.samples,
        samples_used,
        failed_samples: failed_samples.clone(),
        dlmp: SeriesStats::accumulate(bus_labels.clone(), dlmp_samples, checkpoint_every),
        flow: SeriesStats::accumulate(branch_labels.clone(), flow_samples, checkpoint_every),
    };
    Ok((
        make(Formulation::Lp, &lp_dlmp, &lp_flow),
        make(Formulation::Socp, &socp_dlmp, &socp_flow),
    ))
}
