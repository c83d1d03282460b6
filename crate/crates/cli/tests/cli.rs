use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_twtlrl"))
}

fn specs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value(out: &str, key: &str) -> String {
    out.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {out}"))
        .to_string()
}

#[test]
fn horizon_of_landing_spec() {
    let o = run(&["horizon", specs().join("landing.twtl").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "1403");
}

#[test]
fn parse_prints_a_reparseable_spec() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["parse", specs().join("landing.twtl").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let again = dir.path().join("again.twtl");
    fs::write(&again, stdout(&o)).unwrap();
    let h = run(&["horizon", again.to_str().unwrap()]);
    assert_eq!(stdout(&h).trim(), "1403");
}

#[test]
fn bad_spec_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.twtl");
    fs::write(&bad, "obs_dim 1\npred p := o[0]\nformula := [H^3 p]^[0,1]\n").unwrap();
    assert_eq!(run(&["horizon", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["horizon", "/no/such/file.twtl"]).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
}

fn write_spec(dir: &Path) -> PathBuf {
    let spec = dir.join("s.twtl");
    fs::write(&spec, "obs_dim 1\npred pos := o[0]\nformula := H^2 pos\n").unwrap();
    spec
}

#[test]
fn monitor_exit_codes_and_values() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path());
    let good = dir.path().join("good.csv");
    fs::write(&good, "t,o0\n0,0.5\n1,0.25\n2,1.0\n").unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "t,o0\n0,0.5\n1,-0.5\n2,1.0\n").unwrap();
    let (s, g, b) = (spec.to_str().unwrap(), good.to_str().unwrap(), bad.to_str().unwrap());

    let o = run(&["monitor", s, g]);
    assert_eq!((o.status.code(), stdout(&o).trim().to_string()), (Some(0), "true".into()));
    let o = run(&["monitor", s, g, "--robustness"]);
    assert_eq!((o.status.code(), stdout(&o).trim().to_string()), (Some(0), "0.25".into()));
    let o = run(&["monitor", s, b, "--boolean"]);
    assert_eq!((o.status.code(), stdout(&o).trim().to_string()), (Some(1), "false".into()));
    let o = run(&["monitor", s, b, "--robustness"]);
    assert_eq!((o.status.code(), stdout(&o).trim().to_string()), (Some(1), "-0.5".into()));

    let short = dir.path().join("short.csv");
    fs::write(&short, "t,o0\n0,1\n").unwrap();
    let o = run(&["monitor", s, short.to_str().unwrap(), "--robustness"]);
    assert_eq!((o.status.code(), stdout(&o).trim().to_string()), (Some(1), "-inf".into()));
    let ragged = dir.path().join("ragged.csv");
    fs::write(&ragged, "t,o0\n0,1\n2,1\n").unwrap();
    assert_eq!(run(&["monitor", s, ragged.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["monitor", s, g, "--boolean", "--robustness"]).status.code(), Some(2));
}

#[test]
fn offline_pipeline_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = |f: &str| dir.path().join(f).to_str().unwrap().to_string();
    let spec = specs().join("pendulum.twtl").to_str().unwrap().to_string();
    let common = ["--env", "pendulum", "--spec", &spec];

    let mut args = vec!["gen-demos", "--episodes", "4", "--seed", "3", "--out"];
    let demos = d("demos.csv");
    args.push(&demos);
    args.extend(common);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(value(&stdout(&o), "episodes"), "4");
    let again = d("demos2.csv");
    args[6] = &again;
    run(&args);
    assert_eq!(fs::read(&demos).unwrap(), fs::read(&again).unwrap());

    let policy = d("bc.txt");
    let o = run(&["bc", "--demos", &demos, "--out", &policy]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let agree: f64 = value(&stdout(&o), "agreement").parse().unwrap();
    assert!(agree > 0.5);

    let degraded = d("deg.txt");
    let o = run(&["degrade", "--policy", &policy, "--sigma", "0.1", "--out", &degraded]);
    assert_eq!(o.status.code(), Some(0));
    assert_ne!(fs::read(&policy).unwrap(), fs::read(&degraded).unwrap());

    let mut args = vec!["eval", "--policy", &degraded, "--episodes", "3"];
    args.extend(common);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(value(&stdout(&o), "episodes"), "3");
    args.extend(["--min-return", "1e9"]);
    assert_eq!(run(&args).status.code(), Some(1));

    let run_dir = d("run");
    let mut args = vec!["train", "--variant", "mixing", "--offline", &degraded, "--steps", "600", "--out", &run_dir];
    args.extend(common);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["metrics.csv", "config.toml", "policy.txt", "value.txt"] {
        assert!(Path::new(&run_dir).join(f).exists(), "{f}");
    }
    let trained = Path::new(&run_dir).join("policy.txt");
    let mut args = vec!["eval", "--policy", trained.to_str().unwrap(), "--episodes", "2"];
    args.extend(common);
    assert_eq!(run(&args).status.code(), Some(0));
}

#[test]
fn random_lander_demos_record_zero_satisfaction() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let spec = specs().join("lander.twtl");
    let o = run(&[
        "gen-demos",
        "--env",
        "lander",
        "--spec",
        spec.to_str().unwrap(),
        "--controller",
        "random",
        "--episodes",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(value(&stdout(&o), "satisfaction_rate"), "0");
}

#[test]
fn missing_inputs_are_usage_errors() {
    assert_eq!(run(&["gen-demos", "--out", "/tmp/x.csv"]).status.code(), Some(2));
    assert_eq!(run(&["experiment"]).status.code(), Some(2));
    assert_eq!(run(&["bc", "--demos", "/no/such.csv", "--out", "/tmp/y.txt"]).status.code(), Some(2));
}

#[test]
fn verify_shaping_forms() {
    let o = run(&["verify-shaping", "--trials", "5", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(value(&stdout(&o), "argmax_passed"), "5");
    let err: f64 = value(&stdout(&o), "worst_shift_error").parse().unwrap();
    assert!(err < 1e-8);
    let o = run(&["verify-shaping", "--trials", "5", "--form", "reversed", "--scale", "50"]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
}

#[test]
fn experiment_with_missing_spec_fails_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[env]\nkind = \"pendulum\"\n\n[spec]\npath = \"nope.twtl\"\n").unwrap();
    let o = run(&["experiment", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn smoke_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    let spec = specs().join("pendulum.twtl");
    fs::write(
        &cfg,
        format!(
            "[env]\nkind = \"pendulum\"\n\n[spec]\npath = {:?}\n\n[ppo]\ntotal_steps = 1000\nsteps_per_rollout = 500\n\n\
             [bc]\ndemo_episodes = 3\nepochs = 5\n\n[experiment]\nvariants = [\"vanilla\"]\neval_episodes = 2\n",
            spec.to_str().unwrap()
        ),
    )
    .unwrap();
    let o = run(&["experiment", "--config", cfg.to_str().unwrap(), "--seed", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 2, "{out}");
    assert!(out.lines().nth(1).unwrap().starts_with("vanilla,1,0,"));
    let run_dir = dir.path().join("out/vanilla/seed-4");
    assert!(run_dir.join("metrics.csv").exists());
    assert!(run_dir.join("config.toml").exists());
}
