use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{PredictorKind, RunConfig, Variant};
use super::demos::{generate_demos, ControllerKind, DemoStats};
use super::HarnessError;
use crate::policy::{CategoricalPolicy, HybridPolicy};
use crate::ppo::{appo_train, behavior_clone, degrade_policy, evaluate, EvalReport, MetricsRow, Shaper};
use crate::predictor::{train_predictor, DemonstrationSet, Predictor, RolloutPredictor};
use crate::seed::substream;
use crate::twtl::SpecFile;

pub const CELLS_HEADER: [&str; 14] = [
    "variant",
    "seed",
    "status",
    "steps",
    "updates",
    "final_return",
    "steps_to_threshold",
    "eval_return",
    "eval_return_std",
    "eval_satisfaction",
    "eval_robustness",
    "offline_return",
    "offline_satisfaction",
    "error",
];

pub const SUMMARY_HEADER: [&str; 9] = [
    "variant",
    "cells_ok",
    "cells_failed",
    "mean_final_return",
    "median_steps_to_threshold",
    "reached_threshold",
    "satisfaction_rate",
    "mean_eval_return",
    "mean_offline_return",
];

/// Trailing mean over the last `window` values (fewer at the start).
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            values[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

/// Environment steps at the first update whose 10-update moving-average return exceeds `threshold`.
pub fn steps_to_threshold(metrics: &[MetricsRow], threshold: f64) -> Option<usize> {
    let returns: Vec<f64> = metrics.iter().map(|m| m.mean_return).collect();
    moving_average(&returns, 10).iter().position(|r| *r > threshold).map(|i| metrics[i].steps)
}

/// Everything a seed's cells share: demonstrations, the cloned and degraded
/// offline policy, the predictor and the offline baseline evaluation.
#[derive(Debug, Clone)]
pub struct OfflineArtifacts {
    pub demos: DemonstrationSet,
    pub demo_stats: DemoStats,
    pub bc: CategoricalPolicy,
    pub degraded: CategoricalPolicy,
    pub predictor: Option<Predictor>,
    pub offline_eval: EvalReport,
}

/// Demonstrations, cloning, degradation, predictor fitting and baseline evaluation for one seed.
pub fn prepare_offline(
    cfg: &RunConfig,
    spec: &SpecFile,
    seed: u64,
    need_predictor: bool,
    dir: Option<&Path>,
) -> Result<OfflineArtifacts, HarnessError> {
    let env = cfg.env_config();
    let (demos, demo_stats) =
        generate_demos(env, spec, ControllerKind::Expert, cfg.bc.demo_episodes, substream(seed, "demos"))?;
    let (bc, _) = behavior_clone(&demos, env.num_actions(), &cfg.bc.bc_config(), substream(seed, "bc"))?;
    let degraded = degrade_policy(&bc, cfg.bc.sigma, substream(seed, "degradation"))?;
    let predictor = if need_predictor {
        Some(match cfg.predictor.kind {
            PredictorKind::Learned => {
                let (p, _) = train_predictor(
                    &demos,
                    spec.time_horizon(),
                    &cfg.predictor.train_config(),
                    Some(env),
                    substream(seed, "predictor"),
                )?;
                Predictor::Learned(p)
            }
            PredictorKind::Rollout => Predictor::Rollout(RolloutPredictor { env: env.clone(), policy: degraded.clone() }),
        })
    } else {
        None
    };
    let mut probe = degraded.clone();
    let offline_eval =
        evaluate(&mut probe, env, spec, cfg.experiment.eval_episodes, substream(seed, "eval"), cfg.ppo.r_max)?;
    if let Some(d) = dir {
        fs::create_dir_all(d)?;
        demos.save(&d.join("demos.csv"))?;
        bc.save(&d.join("offline.txt"))?;
        degraded.save(&d.join("offline_degraded.txt"))?;
        if let Some(Predictor::Learned(p)) = &predictor {
            p.save(&d.join("predictor.txt"))?;
        }
    }
    Ok(OfflineArtifacts { demos, demo_stats, bc, degraded, predictor, offline_eval })
}

impl OfflineArtifacts {
    pub fn cell_inputs(&self) -> CellInputs {
        CellInputs { offline: self.degraded.clone(), predictor: self.predictor.clone(), offline_eval: self.offline_eval.clone() }
    }
}

/// What a training cell needs from the offline stage.
#[derive(Debug, Clone)]
pub struct CellInputs {
    /// Frozen offline policy of the hybrid (the degraded clone in experiments).
    pub offline: CategoricalPolicy,
    /// Required by shaping variants.
    pub predictor: Option<Predictor>,
    pub offline_eval: EvalReport,
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub variant: Variant,
    pub seed: u64,
    pub run_dir: PathBuf,
    pub metrics: Vec<MetricsRow>,
    pub steps: usize,
    /// Moving-average training return at the last update.
    pub final_return: Option<f64>,
    pub steps_to_threshold: Option<usize>,
    pub eval: EvalReport,
    pub offline_eval: EvalReport,
}

/// Train and evaluate one variant for one seed inside `run_dir`.
pub fn run_cell(
    cfg: &RunConfig,
    spec: &SpecFile,
    variant: Variant,
    seed: u64,
    inputs: &CellInputs,
    run_dir: &Path,
) -> Result<CellResult, HarnessError> {
    fs::create_dir_all(run_dir)?;
    let mut cell_cfg = cfg.clone();
    cell_cfg.experiment.variants = vec![variant];
    cell_cfg.experiment.seeds = vec![seed];
    fs::write(run_dir.join("config.toml"), cell_cfg.to_toml())?;
    let env = cfg.env_config();
    let policy = HybridPolicy::new(inputs.offline.clone(), &cfg.ppo.hidden, substream(seed, "policy-init"), variant.mixing());
    let shaper = if variant.shaping() {
        let predictor = inputs
            .predictor
            .clone()
            .ok_or_else(|| HarnessError::Config("shaping variant without a predictor".into()))?;
        Some(Shaper { predictor })
    } else {
        None
    };
    let out = appo_train(policy, env, spec, shaper.as_ref(), &cfg.ppo, substream(seed, "rollout"), Some(run_dir))?;
    let mut trained = out.policy;
    let eval = evaluate(&mut trained, env, spec, cfg.experiment.eval_episodes, substream(seed, "eval"), cfg.ppo.r_max)?;
    let returns: Vec<f64> = out.metrics.iter().map(|m| m.mean_return).collect();
    Ok(CellResult {
        variant,
        seed,
        run_dir: run_dir.to_path_buf(),
        final_return: moving_average(&returns, 10).last().copied(),
        steps_to_threshold: steps_to_threshold(&out.metrics, cfg.threshold()),
        metrics: out.metrics,
        steps: out.steps,
        eval,
        offline_eval: inputs.offline_eval.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantSummary {
    pub variant: String,
    pub cells_ok: usize,
    pub cells_failed: usize,
    pub mean_final_return: f64,
    /// Unreached cells count as infinity.
    pub median_steps_to_threshold: f64,
    pub reached_threshold: usize,
    pub satisfaction_rate: f64,
    pub mean_eval_return: f64,
    pub mean_offline_return: f64,
}

#[derive(Debug)]
pub struct ExperimentReport {
    pub cells: Vec<(Variant, u64, Result<CellResult, String>)>,
    pub summaries: Vec<VariantSummary>,
}

impl ExperimentReport {
    pub fn cell(&self, variant: Variant, seed: u64) -> Option<&CellResult> {
        self.cells.iter().find(|(v, s, _)| *v == variant && *s == seed).and_then(|(_, _, r)| r.as_ref().ok())
    }

    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.2.is_err()).count()
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn summarize(variant: Variant, cells: &[(Variant, u64, Result<CellResult, String>)]) -> VariantSummary {
    let ok: Vec<&CellResult> = cells.iter().filter(|c| c.0 == variant).filter_map(|c| c.2.as_ref().ok()).collect();
    let failed = cells.iter().filter(|c| c.0 == variant && c.2.is_err()).count();
    VariantSummary {
        variant: variant.to_string(),
        cells_ok: ok.len(),
        cells_failed: failed,
        mean_final_return: mean(ok.iter().filter_map(|c| c.final_return)),
        median_steps_to_threshold: median(
            ok.iter().map(|c| c.steps_to_threshold.map_or(f64::INFINITY, |s| s as f64)).collect(),
        ),
        reached_threshold: ok.iter().filter(|c| c.steps_to_threshold.is_some()).count(),
        satisfaction_rate: mean(ok.iter().map(|c| c.eval.satisfaction_rate)),
        mean_eval_return: mean(ok.iter().map(|c| c.eval.mean_return)),
        mean_offline_return: mean(ok.iter().map(|c| c.offline_eval.mean_return)),
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_cells(path: &Path, cells: &[(Variant, u64, Result<CellResult, String>)]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CELLS_HEADER)?;
    for (variant, seed, r) in cells {
        let row: Vec<String> = match r {
            Ok(c) => vec![
                variant.to_string(),
                seed.to_string(),
                "ok".into(),
                c.steps.to_string(),
                c.metrics.len().to_string(),
                opt(c.final_return),
                opt(c.steps_to_threshold),
                c.eval.mean_return.to_string(),
                c.eval.std_return.to_string(),
                c.eval.satisfaction_rate.to_string(),
                c.eval.robustness_mean.to_string(),
                c.offline_eval.mean_return.to_string(),
                c.offline_eval.satisfaction_rate.to_string(),
                String::new(),
            ],
            Err(e) => {
                let mut row = vec![variant.to_string(), seed.to_string(), "error".into()];
                row.extend(std::iter::repeat_n(String::new(), CELLS_HEADER.len() - 4));
                row.push(e.clone());
                row
            }
        };
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Run every `variant x seed` cell of the config.
///
/// Layout under `experiment.out`: `offline/seed-<s>/` for the shared artifacts,
/// `<variant>/seed-<s>/` for each run, plus `cells.csv` and `summary.csv`.
/// A failing stage turns the affected cells into error rows; other cells still run.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentReport, HarnessError> {
    let spec = cfg.validate()?;
    let out = &cfg.experiment.out;
    fs::create_dir_all(out)?;
    let need_predictor = cfg.experiment.variants.iter().any(|v| v.shaping());
    let mut cells = Vec::new();
    for &seed in &cfg.experiment.seeds {
        let offline_dir = out.join("offline").join(format!("seed-{seed}"));
        match prepare_offline(cfg, &spec, seed, need_predictor, Some(&offline_dir)) {
            Ok(offline) => {
                let inputs = offline.cell_inputs();
                for &variant in &cfg.experiment.variants {
                    let dir = out.join(variant.label()).join(format!("seed-{seed}"));
                    let r = run_cell(cfg, &spec, variant, seed, &inputs, &dir).map_err(|e| e.to_string());
                    cells.push((variant, seed, r));
                }
            }
            Err(e) => {
                for &variant in &cfg.experiment.variants {
                    cells.push((variant, seed, Err(format!("offline stage: {e}"))));
                }
            }
        }
    }
    write_cells(&out.join("cells.csv"), &cells)?;
    let summaries: Vec<VariantSummary> = cfg.experiment.variants.iter().map(|v| summarize(*v, &cells)).collect();
    let mut w = csv::Writer::from_path(out.join("summary.csv"))?;
    for s in &summaries {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(ExperimentReport { cells, summaries })
}
