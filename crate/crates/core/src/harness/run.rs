use super::config::{ConfigError, ExperimentConfig, ExperimentKind};
use crate::entropy::{AtomLaw, Role, SeedScheme};
use crate::mde::solve_mc;
use crate::model::{
    build_bordered, random_unit_frame, standard_pi, standard_xi, BlockTridiagonal, BorderedEnsemble, PeriodicEnsemble, Realize,
};
use crate::numerics::lu_logdet;
use crate::spectra::{
    empirical_stieltjes, esd, ginibre_logdet_limit, ginibre_logdet_sample, ginibre_potential, least_singular_value,
    log_fourth_moment, quantile, rigidity_count, singular_values, tail_profile,
};
use crate::transfer::{logdet_via_transfer, mean_and_variance, plain_logdet};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    /// Reporting seed derived from the master seed and trial index.
    pub seed: u64,
    /// One entry per column; `None` for failed trials and non-finite values.
    pub values: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config: ExperimentConfig,
    pub version: String,
    pub columns: Vec<String>,
    pub trials: Vec<TrialRecord>,
    pub aggregate: BTreeMap<String, Aggregate>,
    /// Experiment-level statistics computed from the trials.
    pub summary: BTreeMap<String, f64>,
    pub failed_trials: usize,
    pub wall_time_secs: f64,
}

impl ResultRecord {
    /// Values of one column over the successful trials.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.trials.iter().filter_map(|t| t.values[idx]).collect())
    }
}

/// Mean, unbiased standard deviation and interpolated quantiles.
pub fn aggregate(values: &[f64]) -> Option<Aggregate> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (mean, variance) = mean_and_variance(values);
    Some(Aggregate {
        count: values.len(),
        mean,
        std_dev: variance.sqrt(),
        min: sorted[0],
        q25: quantile(&sorted, 0.25),
        median: quantile(&sorted, 0.5),
        q75: quantile(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    })
}

/// Column names for an experiment, in CSV order.
pub fn columns(cfg: &ExperimentConfig) -> Vec<String> {
    let owned = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
    match cfg.experiment {
        ExperimentKind::LogdetIdentity => owned(&[
            "plain_transfer",
            "plain_lu",
            "plain_rel_err",
            "bordered_transfer",
            "bordered_lu",
            "bordered_rel_err",
        ]),
        ExperimentKind::LogdetLimit => owned(&["log_potential", "pro_normalized"]),
        ExperimentKind::Esd => owned(&["fraction_in_disk", "radial_cdf_distance"]),
        ExperimentKind::LsvTail => owned(&["s_min", "log_s_min"]),
        ExperimentKind::Rigidity => owned(&["count", "s_min"]),
        ExperimentKind::MdeCompare => cfg
            .sweep_ells()
            .iter()
            .flat_map(|l| [format!("m_re_l{l}"), format!("m_im_l{l}")])
            .collect(),
        ExperimentKind::Concentration => cfg.sweep_ns().iter().map(|n| format!("pro_n{n}")).collect(),
        ExperimentKind::Ginibre => owned(&["log_det_normalized"]),
    }
}

/// Largest dense dimension an experiment will build, if any.
fn dense_dim(cfg: &ExperimentConfig) -> Option<usize> {
    match cfg.experiment {
        ExperimentKind::LogdetIdentity => Some((cfg.n + 2) * cfg.ell),
        ExperimentKind::Esd => Some(cfg.n * cfg.ell),
        ExperimentKind::LsvTail | ExperimentKind::Rigidity => Some((cfg.n + 2) * cfg.ell),
        ExperimentKind::MdeCompare => cfg.sweep_ells().iter().max().map(|l| cfg.n * l),
        ExperimentKind::Ginibre => Some(cfg.n),
        ExperimentKind::LogdetLimit | ExperimentKind::Concentration => None,
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn trial_values(cfg: &ExperimentConfig, law: AtomLaw, scheme: SeedScheme, trial: u64) -> Result<Vec<f64>, String> {
    let err = |e: &dyn std::fmt::Display| e.to_string();
    let (n, ell, z, cap) = (cfg.n, cfg.ell, cfg.z(), cfg.max_dense);
    let sample = |n, ell| BlockTridiagonal::sample(n, ell, law, scheme, trial);
    let norm = (n * ell) as f64;
    match cfg.experiment {
        ExperimentKind::LogdetIdentity => {
            let t = sample(n, ell);
            let plain = plain_logdet(&t, z).map_err(|e| err(&e))?;
            let plain_lu = lu_logdet(&t.dense(z, cap).map_err(|e| err(&e))?).map_err(|e| err(&e))?.log_abs;
            let mut rng = scheme.stream(trial, 0, Role::Frame);
            let xi = random_unit_frame(ell, &mut rng);
            let pi = random_unit_frame(ell, &mut rng).adjoint();
            let bordered = logdet_via_transfer(&t, z, &pi, &xi).map_err(|e| err(&e))?.total;
            let b = build_bordered(t, pi, xi).map_err(|e| err(&e))?;
            let bordered_lu = lu_logdet(&b.dense(z, cap).map_err(|e| err(&e))?).map_err(|e| err(&e))?.log_abs;
            Ok(vec![
                plain,
                plain_lu,
                rel_err(plain, plain_lu),
                bordered,
                bordered_lu,
                rel_err(bordered, bordered_lu),
            ])
        }
        ExperimentKind::LogdetLimit => {
            let t = sample(n, ell);
            let plain = plain_logdet(&t, z).map_err(|e| err(&e))?;
            let r = logdet_via_transfer(&t, z, &standard_pi(ell), &standard_xi(ell)).map_err(|e| err(&e))?;
            Ok(vec![plain / norm, r.pro / norm])
        }
        ExperimentKind::Esd => {
            let s = esd(&sample(n, ell), cap).map_err(|e| err(&e))?;
            Ok(vec![s.fraction_in_disk, s.radial_cdf_distance])
        }
        ExperimentKind::LsvTail => {
            let s = least_singular_value(&BorderedEnsemble::standard(sample(n, ell)), z, cap).map_err(|e| err(&e))?;
            Ok(vec![s, s.ln()])
        }
        ExperimentKind::Rigidity => {
            let measure = singular_values(&BorderedEnsemble::standard(sample(n, ell)), z, cap).map_err(|e| err(&e))?;
            // atoms are squared singular values
            let threshold = ((n + 2) as f64 * ell as f64).powf(-2.0 * cfg.rigidity_exponent);
            Ok(vec![rigidity_count(&measure, threshold) as f64, measure.atoms()[0].sqrt()])
        }
        ExperimentKind::MdeCompare => {
            let mut out = Vec::new();
            for l in cfg.sweep_ells() {
                let p = PeriodicEnsemble::sample(n, l, law, scheme, trial);
                let measure = singular_values(&p, z, cap).map_err(|e| err(&e))?;
                let m = empirical_stieltjes(&measure, cfg.xi()).map_err(|e| err(&e))?;
                out.extend([m.re, m.im]);
            }
            Ok(out)
        }
        ExperimentKind::Concentration => cfg
            .sweep_ns()
            .iter()
            .map(|&nn| {
                let r = logdet_via_transfer(&sample(nn, ell), z, &standard_pi(ell), &standard_xi(ell)).map_err(|e| err(&e))?;
                Ok(r.pro / (nn * ell) as f64)
            })
            .collect(),
        ExperimentKind::Ginibre => Ok(vec![ginibre_logdet_sample(n, law, scheme, trial).map_err(|e| err(&e))?]),
    }
}

fn summarize(cfg: &ExperimentConfig, record: &ResultRecord) -> BTreeMap<String, f64> {
    let mut s = BTreeMap::new();
    let mean = |name: &str| record.aggregate.get(name).map(|a| a.mean);
    match cfg.experiment {
        ExperimentKind::LogdetIdentity => {
            let worst = ["plain_rel_err", "bordered_rel_err"]
                .iter()
                .filter_map(|c| record.aggregate.get(*c).map(|a| a.max))
                .fold(0.0, f64::max);
            s.insert("max_rel_err".into(), worst);
            let ok = record.failed_trials == 0 && worst <= cfg.tol;
            s.insert("passed".into(), if ok { 1.0 } else { 0.0 });
        }
        ExperimentKind::LogdetLimit => {
            let u = ginibre_potential(cfg.z());
            s.insert("target_potential".into(), u);
            s.insert("target_pro".into(), u + 0.5 * 3f64.ln() + 0.5);
            if let Some(m) = mean("log_potential") {
                s.insert("deviation".into(), (m - u).abs());
            }
        }
        ExperimentKind::Esd => {
            if let (Some(f), Some(d)) = (record.aggregate.get("fraction_in_disk"), record.aggregate.get("radial_cdf_distance")) {
                s.insert("min_fraction_in_disk".into(), f.min);
                s.insert("max_radial_cdf_distance".into(), d.max);
            }
        }
        ExperimentKind::LsvTail => {
            let samples = record.column("s_min").unwrap_or_default();
            if !samples.is_empty() {
                let thresholds = if cfg.thresholds.is_empty() {
                    let mut sorted = samples.clone();
                    sorted.sort_by(f64::total_cmp);
                    let q = quantile(&sorted, 0.05);
                    vec![q / 10f64.sqrt(), q, q * 10f64.sqrt()]
                } else {
                    cfg.thresholds.clone()
                };
                if let Ok(profile) = tail_profile(&samples, &thresholds) {
                    for (k, p) in profile.iter().enumerate() {
                        s.insert(format!("t{k}"), p.t);
                        s.insert(format!("prob_t{k}"), p.probability);
                        s.insert(format!("ratio_t{k}"), p.ratio);
                    }
                }
                let moment = log_fourth_moment(&samples, cfg.n, cfg.ell);
                s.insert("log_fourth_moment".into(), moment.fourth_moment);
                s.insert("calibrated_c".into(), moment.calibrated_c);
            }
        }
        ExperimentKind::Rigidity => {
            let dim = ((cfg.n + 2) * cfg.ell) as f64;
            s.insert("reference_count".into(), dim / (cfg.ell as f64).powf(0.1));
            if let Some(a) = record.aggregate.get("count") {
                s.insert("max_count".into(), a.max);
            }
        }
        ExperimentKind::MdeCompare => {
            let mut previous = f64::INFINITY;
            let mut decreasing = true;
            if let Ok(theory) = solve_mc(cfg.xi(), cfg.z()) {
                s.insert("theory_re".into(), theory.re);
                s.insert("theory_im".into(), theory.im);
                for l in cfg.sweep_ells() {
                    if let (Some(re), Some(im)) = (mean(&format!("m_re_l{l}")), mean(&format!("m_im_l{l}"))) {
                        let dev = (num_complex::Complex64::new(re, im) - theory).norm();
                        decreasing &= dev < previous;
                        previous = dev;
                        s.insert(format!("deviation_l{l}"), dev);
                    }
                }
                s.insert("deviation_decreasing".into(), if decreasing { 1.0 } else { 0.0 });
            }
        }
        ExperimentKind::Concentration => {
            let mut previous = f64::INFINITY;
            let mut decreasing = true;
            for n in cfg.sweep_ns() {
                if let Some(a) = record.aggregate.get(&format!("pro_n{n}")) {
                    s.insert(format!("std_n{n}"), a.std_dev);
                    decreasing &= a.std_dev < previous;
                    previous = a.std_dev;
                }
            }
            s.insert("std_decreasing".into(), if decreasing { 1.0 } else { 0.0 });
            s.insert("target_pro".into(), ginibre_potential(cfg.z()) + 0.5 * 3f64.ln() + 0.5);
        }
        ExperimentKind::Ginibre => {
            s.insert("target".into(), ginibre_logdet_limit());
            if let Some(m) = mean("log_det_normalized") {
                s.insert("deviation".into(), (m - ginibre_logdet_limit()).abs());
            }
        }
    }
    s.retain(|_, v| v.is_finite());
    s
}

/// Runs every trial on a pool of `cfg.workers` threads. Results are merged in
/// trial order, so the record does not depend on the worker count.
pub fn run(cfg: &ExperimentConfig) -> Result<ResultRecord, ConfigError> {
    cfg.validate()?;
    if let Some(dim) = dense_dim(cfg) {
        if dim > cfg.max_dense {
            return Err(ConfigError::Invalid(format!("dense dimension {dim} exceeds max-dense {}", cfg.max_dense)));
        }
    }
    let law = cfg.atom_law()?;
    let scheme = SeedScheme::new(cfg.seed);
    let columns = columns(cfg);
    let started = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| ConfigError::Invalid(format!("cannot start worker pool: {e}")))?;
    let trials: Vec<TrialRecord> = pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                let seed = scheme.trial_seed(trial);
                match trial_values(cfg, law, scheme, trial) {
                    Ok(values) => {
                        let nonfinite = values.iter().any(|v| !v.is_finite());
                        TrialRecord {
                            trial,
                            seed,
                            values: values.into_iter().map(|v| v.is_finite().then_some(v)).collect(),
                            error: nonfinite.then(|| "non-finite value".to_string()),
                        }
                    }
                    Err(e) => TrialRecord { trial, seed, values: vec![None; columns.len()], error: Some(e) },
                }
            })
            .collect()
    });
    let failed_trials = trials.iter().filter(|t| t.error.is_some()).count();
    let mut record = ResultRecord {
        config: cfg.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        columns,
        trials,
        aggregate: BTreeMap::new(),
        summary: BTreeMap::new(),
        failed_trials,
        wall_time_secs: 0.0,
    };
    for name in &record.columns {
        if let Some(a) = aggregate(&record.column(name).unwrap_or_default()) {
            record.aggregate.insert(name.clone(), a);
        }
    }
    record.summary = summarize(cfg, &record);
    record.wall_time_secs = started.elapsed().as_secs_f64();
    Ok(record)
}
