use std::io::{Read, Write};

use super::TwtlError;

/// Finite observation word `o_{t1,t2}`; `start_index` is `t1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationWord {
    start_index: usize,
    observations: Vec<Vec<f64>>,
}

impl ObservationWord {
    pub fn new(start_index: usize, observations: Vec<Vec<f64>>) -> Result<Self, TwtlError> {
        let Some(first) = observations.first() else {
            return Err(TwtlError::EmptyWord);
        };
        let dim = first.len();
        if let Some((index, o)) = observations.iter().enumerate().find(|(_, o)| o.len() != dim) {
            return Err(TwtlError::DimensionMismatch { expected: dim, found: o.len(), index });
        }
        Ok(ObservationWord { start_index, observations })
    }

    /// Word over a single scalar channel, handy for one-proposition tests.
    pub fn scalar(values: &[f64]) -> Result<Self, TwtlError> {
        Self::new(0, values.iter().map(|&v| vec![v]).collect())
    }

    pub fn start_index(&self) -> usize {
        self.start_index
    }

    /// `t2` of `o_{t1,t2}`.
    pub fn end_index(&self) -> usize {
        self.start_index + self.observations.len() - 1
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.observations[0].len()
    }

    pub fn observations(&self) -> &[Vec<f64>] {
        &self.observations
    }

    /// First `len` observations.
    pub fn truncated(&self, len: usize) -> Result<Self, TwtlError> {
        Self::new(self.start_index, self.observations[..len.min(self.len())].to_vec())
    }

    /// Extend to at least `len` observations by repeating the last one.
    pub fn padded_to(mut self, len: usize) -> Self {
        let last = self.observations.last().cloned().expect("word is never empty");
        while self.observations.len() < len {
            self.observations.push(last.clone());
        }
        self
    }

    /// Parse a trajectory CSV with header `t,o0,o1,...`; `t` must count up by one.
    pub fn read_csv<R: Read>(r: R) -> Result<Self, TwtlError> {
        let bad = |m: String| TwtlError::Trajectory(m);
        let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(r);
        let header = rd.headers().map_err(|e| bad(e.to_string()))?.clone();
        let dim = header.len().saturating_sub(1);
        let expected = (0..dim).map(|i| format!("o{i}"));
        if header.get(0) != Some("t") || dim == 0 || !header.iter().skip(1).eq(expected.clone()) {
            return Err(bad(format!("header must be t,o0,...; found `{}`", header.iter().collect::<Vec<_>>().join(","))));
        }
        let mut start = None;
        let mut observations = Vec::new();
        for (row, rec) in rd.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(format!("row {}: `{}` is not a number", row + 1, &rec[i])));
            let t: usize = rec[0].parse().map_err(|_| bad(format!("row {}: `{}` is not a time step", row + 1, &rec[0])))?;
            let t0 = *start.get_or_insert(t);
            if t != t0 + row {
                return Err(bad(format!("row {}: time step {t} breaks the sequence from {t0}", row + 1)));
            }
            observations.push((1..=dim).map(num).collect::<Result<Vec<_>, _>>()?);
        }
        Self::new(start.unwrap_or(0), observations)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), TwtlError> {
        let io = |e: csv::Error| TwtlError::Trajectory(e.to_string());
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.dim()).map(|i| format!("o{i}")));
        wr.write_record(&header).map_err(io)?;
        for (i, o) in self.observations.iter().enumerate() {
            let mut row = vec![(self.start_index + i).to_string()];
            row.extend(o.iter().map(|v| v.to_string()));
            wr.write_record(&row).map_err(io)?;
        }
        wr.flush().map_err(|e| TwtlError::Trajectory(e.to_string()))
    }
}
