//! Fixtures shared by the benchmarks.

use std::path::Path;

use twtlrl_core::envs::{rollout, EnvConfig, EnvKind, ScriptedController};
use twtlrl_core::twtl::{parse_spec, ObservationWord, SpecFile};

pub fn spec(name: &str) -> SpecFile {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs").join(name);
    parse_spec(&std::fs::read_to_string(path).expect("spec file")).expect("valid spec")
}

/// Expert lander episode, padded to `len` observations.
pub fn lander_word(len: usize) -> ObservationWord {
    let env = EnvConfig::default_for(EnvKind::Lander);
    let mut ctl = ScriptedController::expert(&env);
    let ep = rollout(&env, &mut ctl, 0).expect("rollout");
    ObservationWord::new(0, ep.padded_word(len)).expect("word")
}
