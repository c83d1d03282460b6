use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::envs::Episode;

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("demonstration file: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One recorded episode: `states.len() == actions.len() + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub episode: usize,
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
}

impl From<(usize, &Episode)> for Trajectory {
    fn from((episode, ep): (usize, &Episode)) -> Self {
        Trajectory { episode, states: ep.states.clone(), actions: ep.actions.clone(), rewards: ep.rewards.clone() }
    }
}

/// Expert (or baseline) trajectories in the `episode,t,x0..,action,reward` CSV layout.
///
/// Each episode has one row per visited state; the final row carries action `-1`
/// and reward 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DemonstrationSet {
    pub state_dim: usize,
    pub trajectories: Vec<Trajectory>,
}

impl DemonstrationSet {
    pub fn new(state_dim: usize, trajectories: Vec<Trajectory>) -> Result<Self, DemoError> {
        for tr in &trajectories {
            if tr.states.len() != tr.actions.len() + 1 || tr.rewards.len() != tr.actions.len() {
                return Err(DemoError::Format(format!("episode {}: inconsistent lengths", tr.episode)));
            }
            if let Some(s) = tr.states.iter().find(|s| s.len() != state_dim) {
                return Err(DemoError::Format(format!("episode {}: state of dimension {}", tr.episode, s.len())));
            }
        }
        Ok(DemonstrationSet { state_dim, trajectories })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// All `(state, action)` pairs.
    pub fn pairs(&self) -> impl Iterator<Item = (&[f64], usize)> {
        self.trajectories.iter().flat_map(|t| t.states.iter().zip(&t.actions).map(|(s, a)| (s.as_slice(), *a)))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DemoError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["episode".to_string(), "t".to_string()];
        header.extend((0..self.state_dim).map(|i| format!("x{i}")));
        header.extend(["action".to_string(), "reward".to_string()]);
        out.write_record(&header)?;
        for tr in &self.trajectories {
            for (t, s) in tr.states.iter().enumerate() {
                let mut row = vec![tr.episode.to_string(), t.to_string()];
                row.extend(s.iter().map(|v| format!("{v:?}")));
                match tr.actions.get(t) {
                    Some(a) => row.extend([a.to_string(), format!("{:?}", tr.rewards[t])]),
                    None => row.extend(["-1".to_string(), "0.0".to_string()]),
                }
                out.write_record(&row)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, DemoError> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        let cols: Vec<&str> = headers.iter().collect();
        let dim = cols.len().checked_sub(4).ok_or_else(|| DemoError::Format("too few columns".into()))?;
        let ok_header = cols[0] == "episode"
            && cols[1] == "t"
            && cols[cols.len() - 2] == "action"
            && cols[cols.len() - 1] == "reward"
            && (0..dim).all(|i| cols[2 + i] == format!("x{i}"));
        if !ok_header || dim == 0 {
            return Err(DemoError::Format(format!("unexpected header `{}`", cols.join(","))));
        }
        let mut trajectories: Vec<Trajectory> = Vec::new();
        let mut closed = true;
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |m: String| DemoError::Format(format!("row {}: {m}", line + 2));
            let num = |i: usize| rec[i].trim().parse::<f64>().map_err(|_| bad(format!("bad number `{}`", &rec[i])));
            let episode: usize = rec[0].trim().parse().map_err(|_| bad("bad episode id".into()))?;
            let t: usize = rec[1].trim().parse().map_err(|_| bad("bad time index".into()))?;
            let state = (0..dim).map(|i| num(2 + i)).collect::<Result<Vec<_>, _>>()?;
            let action: i64 = rec[dim + 2].trim().parse().map_err(|_| bad("bad action".into()))?;
            let reward = num(dim + 3)?;
            let new_episode = trajectories.last().is_none_or(|tr| tr.episode != episode || closed);
            if new_episode {
                if t != 0 {
                    return Err(bad(format!("episode {episode} starts at t={t}")));
                }
                trajectories.push(Trajectory { episode, states: vec![], actions: vec![], rewards: vec![] });
            }
            let tr = trajectories.last_mut().expect("pushed above");
            if t != tr.states.len() {
                return Err(bad(format!("time index {t} out of order")));
            }
            tr.states.push(state);
            if action < 0 {
                closed = true;
            } else {
                closed = false;
                tr.actions.push(action as usize);
                tr.rewards.push(reward);
            }
        }
        if !closed {
            return Err(DemoError::Format("last episode has no final row (action -1)".into()));
        }
        DemonstrationSet::new(dim, trajectories)
    }

    pub fn save(&self, path: &Path) -> Result<(), DemoError> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, DemoError> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}
