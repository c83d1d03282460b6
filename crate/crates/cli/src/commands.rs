use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use twtlrl_core::envs::EnvConfig;
use twtlrl_core::harness::{
    generate_demos, prepare_offline, run_cell, run_experiment, CellInputs, EnvSection, HarnessError, PredictorKind,
    RunConfig,
};
use twtlrl_core::nn::ParamVector;
use twtlrl_core::ppo::{agreement, behavior_clone, degrade_policy, evaluate, EvalReport, PpoConfig, PpoError};
use twtlrl_core::policy::{CategoricalPolicy, HybridPolicy};
use twtlrl_core::predictor::{train_predictor, DemonstrationSet, LearnedPredictor, Predictor, RolloutPredictor};
use twtlrl_core::seed::substream;
use twtlrl_core::shaping::{default_gridworld, random_trials};
use twtlrl_core::twtl::{parse_spec, ObservationWord, SpecFile};

use crate::{Cli, Command, Global, Setup};

/// Marks an error as a domain failure (exit code 1) rather than a usage error.
#[derive(Debug)]
struct DomainFailure(String);

impl std::fmt::Display for DomainFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for DomainFailure {}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<DomainFailure>()
            || matches!(cause.downcast_ref::<HarnessError>(), Some(HarnessError::ExpertQuality(_)))
            || matches!(cause.downcast_ref::<PpoError>(), Some(PpoError::NonFinite { .. }))
        {
            return 1;
        }
    }
    2
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    let g = &cli.global;
    match cli.command {
        Command::Parse { spec } => {
            let s = read_spec(&spec)?;
            emit(g, &s.to_string())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Horizon { spec } => {
            let s = read_spec(&spec)?;
            emit(g, &format!("{}\n", s.time_horizon()))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Monitor { spec, trajectory, boolean: _, robustness } => monitor(g, &spec, &trajectory, robustness),
        Command::GenDemos { setup, controller, episodes } => {
            let cfg = resolve(g, &setup)?;
            let spec = cfg.load_spec()?;
            let out = required_out(g)?;
            let episodes = episodes.unwrap_or(cfg.bc.demo_episodes);
            let (demos, stats) = generate_demos(cfg.env_config(), &spec, controller, episodes, seed(g))?;
            demos.save(out)?;
            let mut s = String::new();
            kv(&mut s, "episodes", stats.episodes);
            kv(&mut s, "transitions", demos.len());
            kv(&mut s, "satisfaction_rate", stats.satisfaction_rate);
            kv(&mut s, "success_rate", stats.success_rate);
            kv(&mut s, "mean_return", stats.mean_return);
            print!("{s}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Bc { demos } => {
            let out = required_out(g)?;
            let cfg = g.config.as_deref().map(RunConfig::load).transpose()?;
            let demos = DemonstrationSet::load(&demos)?;
            let env = match &cfg {
                Some(c) => c.env_config().clone(),
                None => env_for_dim(demos.state_dim)?,
            };
            let bc_cfg = cfg.as_ref().map(|c| c.bc.bc_config()).unwrap_or_default();
            let (policy, losses) = behavior_clone(&demos, env.num_actions(), &bc_cfg, seed(g))?;
            policy.save(out)?;
            let mut s = String::new();
            kv(&mut s, "epochs", losses.len());
            kv(&mut s, "final_loss", losses.last().copied().unwrap_or(f64::NAN));
            kv(&mut s, "agreement", agreement(&policy, &demos)?);
            print!("{s}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Degrade { policy, sigma } => {
            let out = required_out(g)?;
            let cfg = g.config.as_deref().map(RunConfig::load).transpose()?;
            let sigma = sigma.or(cfg.map(|c| c.bc.sigma)).ok_or_else(|| anyhow!("pass --sigma or --config"))?;
            let p = CategoricalPolicy::load(&policy)?;
            degrade_policy(&p, sigma, seed(g))?.save(out)?;
            println!("sigma={sigma}");
            Ok(ExitCode::SUCCESS)
        }
        Command::TrainPredictor { setup, demos } => {
            let cfg = resolve(g, &setup)?;
            let spec = cfg.load_spec()?;
            let out = required_out(g)?;
            let demos = DemonstrationSet::load(&demos)?;
            let (model, report) = train_predictor(
                &demos,
                spec.time_horizon(),
                &cfg.predictor.train_config(),
                Some(cfg.env_config()),
                seed(g),
            )?;
            model.save(out)?;
            let mut s = String::new();
            kv(&mut s, "windows", report.windows);
            kv(&mut s, "skipped", report.skipped);
            kv(&mut s, "final_loss", report.losses.last().copied().unwrap_or(f64::NAN));
            print!("{s}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Train { setup, variant, offline, predictor, steps } => {
            let mut cfg = resolve(g, &setup)?;
            if let Some(n) = steps {
                cfg.ppo.total_steps = n;
            }
            let spec = cfg.validate()?;
            let seed = g.seed.unwrap_or(cfg.experiment.seeds[0]);
            let run_dir = g
                .out
                .clone()
                .unwrap_or_else(|| cfg.experiment.out.join(variant.label()).join(format!("seed-{seed}")));
            let mut inputs = match offline {
                None => {
                    let need = variant.shaping() && predictor.is_none();
                    prepare_offline(&cfg, &spec, seed, need, Some(&run_dir.join("offline")))?.cell_inputs()
                }
                Some(path) => {
                    let policy = CategoricalPolicy::load(&path)?;
                    check_dim(policy.obs_dim(), cfg.env_config())?;
                    let predictor = match (variant.shaping(), cfg.predictor.kind) {
                        (true, PredictorKind::Rollout) => Some(Predictor::Rollout(RolloutPredictor {
                            env: cfg.env_config().clone(),
                            policy: policy.clone(),
                        })),
                        (true, PredictorKind::Learned) if predictor.is_none() => {
                            bail!("variant {variant} with --offline needs --predictor or a rollout predictor")
                        }
                        _ => None,
                    };
                    let offline_eval = eval_report(&mut policy.clone(), &cfg, &spec, cfg.experiment.eval_episodes, seed)?;
                    CellInputs { offline: policy, predictor, offline_eval }
                }
            };
            if let Some(path) = predictor {
                let p = LearnedPredictor::load(&path)?;
                check_dim(p.dim(), cfg.env_config())?;
                inputs.predictor = Some(Predictor::Learned(p));
            }
            let cell = run_cell(&cfg, &spec, variant, seed, &inputs, &run_dir)?;
            let mut s = String::new();
            kv(&mut s, "run_dir", cell.run_dir.display());
            kv(&mut s, "steps", cell.steps);
            kv(&mut s, "updates", cell.metrics.len());
            kv(&mut s, "final_return", opt(cell.final_return));
            kv(&mut s, "steps_to_threshold", opt(cell.steps_to_threshold));
            report_lines(&mut s, "eval_", &cell.eval);
            report_lines(&mut s, "offline_", &cell.offline_eval);
            print!("{s}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval { setup, policy, episodes, min_return } => {
            let cfg = resolve(g, &setup)?;
            let spec = cfg.load_spec()?;
            let episodes = episodes.unwrap_or(cfg.experiment.eval_episodes);
            let (kind, _) = ParamVector::load(&policy)?;
            let report = if kind == "policy" {
                let mut p = CategoricalPolicy::load(&policy)?;
                check_dim(p.obs_dim(), cfg.env_config())?;
                eval_report(&mut p, &cfg, &spec, episodes, seed(g))?
            } else {
                let mut p = HybridPolicy::load(&policy)?;
                check_dim(p.obs_dim(), cfg.env_config())?;
                eval_report(&mut p, &cfg, &spec, episodes, seed(g))?
            };
            let mut s = String::new();
            report_lines(&mut s, "", &report);
            emit(g, &s)?;
            match min_return {
                Some(m) if report.mean_return < m => {
                    Err(DomainFailure(format!("mean return {} below {m}", report.mean_return)).into())
                }
                _ => Ok(ExitCode::SUCCESS),
            }
        }
        Command::VerifyShaping { trials, form, scale } => {
            if !(scale.is_finite() && scale > 0.0) {
                bail!("--scale must be positive");
            }
            let kappa = match g.config.as_deref() {
                Some(p) => RunConfig::load(p)?.ppo.kappa,
                None => PpoConfig::default().kappa,
            };
            let mdp = default_gridworld();
            let mut rng = ChaCha8Rng::seed_from_u64(substream(seed(g), "shaping-trials"));
            let summary = random_trials(&mdp, trials, scale, form, kappa, &mut rng);
            let mut s = String::new();
            kv(&mut s, "form", form_label(&form));
            kv(&mut s, "trials", summary.trials);
            kv(&mut s, "argmax_passed", summary.argmax_passed);
            kv(&mut s, "worst_shift_error", summary.worst_shift_error);
            emit(g, &s)?;
            if summary.argmax_passed == summary.trials {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
        Command::Experiment => {
            let path = g.config.as_deref().ok_or_else(|| anyhow!("experiment needs --config"))?;
            let mut cfg = RunConfig::load(path)?;
            if let Some(out) = &g.out {
                cfg.experiment.out = out.clone();
            }
            if let Some(s) = g.seed {
                cfg.experiment.seeds = vec![s];
            }
            let report = run_experiment(&cfg)?;
            let summary = cfg.experiment.out.join("summary.csv");
            print!("{}", fs::read_to_string(&summary).with_context(|| format!("reading {}", summary.display()))?);
            for (v, s, r) in &report.cells {
                if let Err(e) = r {
                    eprintln!("cell {v} seed {s} failed: {e}");
                }
            }
            if report.failures() > 0 {
                Ok(ExitCode::from(1))
            } else {
                Ok(ExitCode::SUCCESS)
            }
        }
    }
}

fn monitor(g: &Global, spec: &Path, trajectory: &Path, robustness: bool) -> Result<ExitCode> {
    let s = read_spec(spec)?;
    let file = fs::File::open(trajectory).with_context(|| format!("opening {}", trajectory.display()))?;
    let word = ObservationWord::read_csv(file)?;
    let satisfied = s.satisfies(&word)?;
    let text = if robustness { s.robustness(&word)?.to_string() } else { satisfied.to_string() };
    emit(g, &format!("{text}\n"))?;
    Ok(if satisfied { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn read_spec(path: &Path) -> Result<SpecFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(parse_spec(&text).with_context(|| format!("in {}", path.display()))?)
}

/// Config from `--config` (or defaults for `--env`), with `--env` and `--spec` applied on top.
fn resolve(g: &Global, setup: &Setup) -> Result<RunConfig> {
    let mut cfg = match (&g.config, setup.env) {
        (Some(p), _) => RunConfig::load(p)?,
        (None, Some(kind)) => RunConfig::new(kind, PathBuf::new()),
        (None, None) => bail!("pass --config or --env"),
    };
    if let Some(kind) = setup.env {
        if kind != cfg.env_config().kind() {
            cfg.env = EnvSection(EnvConfig::default_for(kind));
        }
    }
    if let Some(spec) = &setup.spec {
        cfg.spec.path = spec.clone();
    }
    if cfg.spec.path.as_os_str().is_empty() {
        bail!("pass --spec or --config");
    }
    Ok(cfg)
}

fn env_for_dim(dim: usize) -> Result<EnvConfig> {
    [twtlrl_core::envs::EnvKind::Pendulum, twtlrl_core::envs::EnvKind::Lander]
        .into_iter()
        .map(EnvConfig::default_for)
        .find(|e| e.state_dim() == dim)
        .ok_or_else(|| anyhow!("no environment has state dimension {dim}; pass --config"))
}

fn check_dim(dim: usize, env: &EnvConfig) -> Result<()> {
    if dim != env.state_dim() {
        bail!("input dimension {dim} does not match the {} state dimension {}", env.kind(), env.state_dim());
    }
    Ok(())
}

fn eval_report(
    controller: &mut dyn twtlrl_core::envs::Controller,
    cfg: &RunConfig,
    spec: &SpecFile,
    episodes: usize,
    seed: u64,
) -> Result<EvalReport> {
    Ok(evaluate(controller, cfg.env_config(), spec, episodes, substream(seed, "eval"), cfg.ppo.r_max)?)
}

fn seed(g: &Global) -> u64 {
    g.seed.unwrap_or(0)
}

fn required_out(g: &Global) -> Result<&Path> {
    g.out.as_deref().ok_or_else(|| anyhow!("--out is required"))
}

/// Write to `--out` when given, stdout otherwise.
fn emit(g: &Global, text: &str) -> Result<()> {
    match &g.out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn kv(s: &mut String, key: &str, value: impl std::fmt::Display) {
    writeln!(s, "{key}={value}").expect("writing to a string");
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "none".into())
}

fn report_lines(s: &mut String, prefix: &str, r: &EvalReport) {
    kv(s, &format!("{prefix}episodes"), r.episodes);
    kv(s, &format!("{prefix}mean_return"), r.mean_return);
    kv(s, &format!("{prefix}std_return"), r.std_return);
    kv(s, &format!("{prefix}mean_task_return"), r.mean_task_return);
    kv(s, &format!("{prefix}satisfaction_rate"), r.satisfaction_rate);
    kv(s, &format!("{prefix}robustness_mean"), r.robustness_mean);
}

fn form_label(form: &twtlrl_core::ppo::ShapingForm) -> &'static str {
    match form {
        twtlrl_core::ppo::ShapingForm::Potential => "potential",
        twtlrl_core::ppo::ShapingForm::Reversed => "reversed",
    }
}
