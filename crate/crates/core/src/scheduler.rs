//! Seeded simulation of the bounded-delay arrival process.
//!
//! At every master iteration a set `A_k` of workers "arrives". Workers that
//! have been absent for `τ−1` iterations are always included, the rest arrive
//! independently with their own probability, and extra rounds of draws are
//! taken until at least `A` workers are present.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Rounds of Bernoulli draws before the gate is filled deterministically.
pub const MAX_DRAW_ROUNDS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalModel {
    pub probs: Vec<f64>,
    pub tau: usize,
    pub min_arrivals: usize,
    pub seed: u64,
}

impl ArrivalModel {
    pub fn new(probs: Vec<f64>, tau: usize, min_arrivals: usize, seed: u64) -> Result<Self> {
        let model = Self {
            probs,
            tau,
            min_arrivals,
            seed,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn uniform(n_workers: usize, p: f64, tau: usize, min_arrivals: usize, seed: u64) -> Result<Self> {
        Self::new(vec![p; n_workers], tau, min_arrivals, seed)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.probs.len();
        if n == 0 {
            return Err(Error::InvalidArgument("arrival model needs at least one worker".into()));
        }
        if self.tau == 0 {
            return Err(Error::InvalidArgument("tau must be at least 1".into()));
        }
        if self.min_arrivals == 0 || self.min_arrivals > n {
            return Err(Error::InvalidArgument(format!(
                "min_arrivals must lie in [1, {n}], got {}",
                self.min_arrivals
            )));
        }
        if let Some(p) = self.probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidArgument(format!(
                "arrival probability {p} outside [0, 1]"
            )));
        }
        Ok(())
    }

    pub fn n_workers(&self) -> usize {
        self.probs.len()
    }
}

/// Iterations since each worker last arrived.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayState {
    pub d: Vec<usize>,
}

impl DelayState {
    pub fn zeros(n_workers: usize) -> Self {
        Self { d: vec![0; n_workers] }
    }
}

/// Draws `A_k` (sorted worker indices) from the current delays.
pub fn draw_arrival_set(model: &ArrivalModel, delays: &DelayState, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = model.n_workers();
    debug_assert_eq!(delays.d.len(), n);
    let mut arrived: Vec<bool> = (0..n)
        .map(|i| delays.d[i] + 1 >= model.tau || rng.random_bool(model.probs[i]))
        .collect();
    let mut count = arrived.iter().filter(|a| **a).count();
    let mut rounds = 0;
    while count < model.min_arrivals && rounds < MAX_DRAW_ROUNDS {
        if (0..n).all(|i| arrived[i] || model.probs[i] == 0.0) {
            break;
        }
        for (a, &p) in arrived.iter_mut().zip(&model.probs) {
            if !*a && rng.random_bool(p) {
                *a = true;
                count += 1;
            }
        }
        rounds += 1;
    }
    while count < model.min_arrivals {
        // Stalest missing worker, lowest index on ties.
        let i = (0..n)
            .filter(|i| !arrived[*i])
            .max_by(|a, b| delays.d[*a].cmp(&delays.d[*b]).then(b.cmp(a)))
            .expect("min_arrivals <= N");
        arrived[i] = true;
        count += 1;
    }
    (0..n).filter(|i| arrived[*i]).collect()
}

/// Resets the counters of `arrived` workers and increments the rest.
pub fn advance_delays(delays: &DelayState, arrived: &[usize]) -> Result<DelayState> {
    if arrived.is_empty() {
        return Err(Error::InvalidArgument("an iteration needs at least one arrival".into()));
    }
    let mut d: Vec<usize> = delays.d.iter().map(|v| v + 1).collect();
    for &i in arrived {
        *d.get_mut(i)
            .ok_or_else(|| Error::InvalidArgument(format!("worker {i} outside 0..{}", delays.d.len())))? = 0;
    }
    Ok(DelayState { d })
}

/// One master iteration of a schedule. `d` holds the counters the master saw
/// before `arrivals` were consumed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleRecord {
    pub k: usize,
    pub arrivals: Vec<usize>,
    pub d: Vec<usize>,
}

/// A finite sequence of arrival sets, generated or recorded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    n_workers: usize,
    records: Vec<ScheduleRecord>,
}

impl Schedule {
    pub fn generate(model: &ArrivalModel, iterations: usize) -> Result<Self> {
        Self::generate_from(model, DelayState::zeros(model.n_workers()), iterations)
    }

    /// Starts from the given counters instead of all zeros.
    pub fn generate_from(model: &ArrivalModel, initial: DelayState, iterations: usize) -> Result<Self> {
        model.validate()?;
        Error::check_dim("initial delays", model.n_workers(), initial.d.len())?;
        if let Some(d) = initial.d.iter().find(|d| **d >= model.tau) {
            return Err(Error::InvalidArgument(format!(
                "initial delay {d} exceeds tau-1 = {}",
                model.tau - 1
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
        let mut delays = initial;
        let mut records = Vec::with_capacity(iterations);
        for k in 0..iterations {
            let arrivals = draw_arrival_set(model, &delays, &mut rng);
            let next = advance_delays(&delays, &arrivals)?;
            records.push(ScheduleRecord {
                k,
                arrivals,
                d: delays.d,
            });
            delays = next;
        }
        Ok(Self {
            n_workers: model.n_workers(),
            records,
        })
    }

    /// Every worker arrives at every iteration.
    pub fn synchronous(n_workers: usize, iterations: usize) -> Self {
        let records = (0..iterations)
            .map(|k| ScheduleRecord {
                k,
                arrivals: (0..n_workers).collect(),
                d: vec![0; n_workers],
            })
            .collect();
        Self { n_workers, records }
    }

    /// Builds a schedule from bare arrival sets, recomputing the counters.
    pub fn from_arrivals(n_workers: usize, sets: Vec<Vec<usize>>) -> Result<Self> {
        let mut delays = DelayState::zeros(n_workers);
        let mut records = Vec::with_capacity(sets.len());
        for (k, mut arrivals) in sets.into_iter().enumerate() {
            arrivals.sort_unstable();
            if arrivals.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidArgument(format!("duplicate worker in arrival set {k}")));
            }
            let next = advance_delays(&delays, &arrivals)?;
            records.push(ScheduleRecord {
                k,
                arrivals,
                d: delays.d,
            });
            delays = next;
        }
        Ok(Self { n_workers, records })
    }

    pub fn n_workers(&self) -> usize {
        self.n_workers
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[ScheduleRecord] {
        &self.records
    }

    pub fn arrivals(&self, k: usize) -> &[usize] {
        &self.records[k].arrivals
    }

    pub fn truncated(&self, iterations: usize) -> Self {
        Self {
            n_workers: self.n_workers,
            records: self.records[..iterations.min(self.records.len())].to_vec(),
        }
    }

    pub fn max_arrival_size(&self) -> usize {
        self.records.iter().map(|r| r.arrivals.len()).max().unwrap_or(0)
    }

    /// Arrival-set bound fed to the parameter advisor: `min(N, max_k |A_k| + 1)`.
    pub fn suggested_s(&self) -> usize {
        (self.max_arrival_size() + 1).min(self.n_workers).max(1)
    }

    /// First `(k, worker)` at which worker has not arrived during
    /// `A_k ∪ … ∪ A_{max(k−τ+1, −1)}`, with `A_{−1}` the full set.
    pub fn bounded_delay_violation(&self, tau: usize) -> Option<(usize, usize)> {
        let mut last: Vec<isize> = vec![-1; self.n_workers];
        for rec in &self.records {
            for &i in &rec.arrivals {
                last[i] = rec.k as isize;
            }
            for (i, &l) in last.iter().enumerate() {
                if rec.k as isize - l >= tau as isize {
                    return Some((rec.k, i));
                }
            }
        }
        None
    }

    pub fn min_arrivals_violation(&self, min_arrivals: usize) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.arrivals.len() < min_arrivals)
            .map(|r| r.k)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        Self::from_lines(text.lines().map(|l| Ok(l.to_string())))
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_lines(BufReader::new(file).lines().map(|l| l.map_err(|e| Error::io(path, e))))
    }

    fn from_lines(lines: impl Iterator<Item = Result<String>>) -> Result<Self> {
        let mut records: Vec<ScheduleRecord> = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ScheduleRecord = serde_json::from_str(&line)?;
            if rec.k != records.len() {
                return Err(Error::Format(format!(
                    "schedule record {} out of order (expected k={})",
                    rec.k,
                    records.len()
                )));
            }
            records.push(rec);
        }
        let n_workers = records.first().map_or(0, |r| r.d.len());
        for r in &records {
            Error::check_dim("schedule delay vector", n_workers, r.d.len())?;
            if r.arrivals.is_empty() || r.arrivals.iter().any(|i| *i >= n_workers) {
                return Err(Error::Format(format!("invalid arrival set at k={}", r.k)));
            }
        }
        Ok(Self { n_workers, records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tau_one_is_synchronous() {
        let m = ArrivalModel::uniform(5, 0.2, 1, 1, 3).unwrap();
        let s = Schedule::generate(&m, 50).unwrap();
        assert!(s.records().iter().all(|r| r.arrivals == vec![0, 1, 2, 3, 4]));
    }

    #[test]
    fn certain_arrivals_are_synchronous() {
        let m = ArrivalModel::uniform(4, 1.0, 5, 1, 3).unwrap();
        let s = Schedule::generate(&m, 50).unwrap();
        assert!(s.records().iter().all(|r| r.arrivals.len() == 4));
    }

    #[test]
    fn zero_probability_rotation_with_staggered_start() {
        let m = ArrivalModel::uniform(3, 0.0, 3, 1, 0).unwrap();
        let s = Schedule::generate_from(&m, DelayState { d: vec![2, 1, 0] }, 9).unwrap();
        for r in s.records() {
            assert_eq!(r.arrivals, vec![r.k % 3], "k={}", r.k);
        }
    }

    #[test]
    fn zero_probability_two_workers_alternate() {
        // With two workers and one required arrival, the stalest one is taken
        // before anyone reaches the forced-inclusion bound.
        let m = ArrivalModel::uniform(2, 0.0, 3, 1, 0).unwrap();
        let s = Schedule::generate(&m, 6).unwrap();
        let sets: Vec<_> = s.records().iter().map(|r| r.arrivals.clone()).collect();
        assert_eq!(sets, vec![vec![0], vec![1], vec![0], vec![1], vec![0], vec![1]]);
    }

    #[test]
    fn advance_examples() {
        let d = DelayState { d: vec![0, 1] };
        assert_eq!(advance_delays(&d, &[0]).unwrap().d, vec![0, 2]);
        assert_eq!(advance_delays(&d, &[0, 1]).unwrap().d, vec![0, 0]);
        assert!(advance_delays(&d, &[]).is_err());
        assert!(advance_delays(&d, &[2]).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let m = ArrivalModel::new(vec![0.1, 0.8, 0.3], 4, 1, 11).unwrap();
        let s = Schedule::generate(&m, 40).unwrap();
        let back = Schedule::from_jsonl(&s.to_jsonl()).unwrap();
        assert_eq!(s, back);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        s.write_jsonl(&p).unwrap();
        assert_eq!(Schedule::read_jsonl(&p).unwrap(), s);
    }

    #[test]
    fn from_arrivals_recomputes_delays() {
        let s = Schedule::from_arrivals(2, vec![vec![1], vec![0], vec![1, 0]]).unwrap();
        assert_eq!(s.records()[1].d, vec![1, 0]);
        assert_eq!(s.records()[2].arrivals, vec![0, 1]);
        assert_eq!(s.bounded_delay_violation(2), None);
        assert_eq!(s.bounded_delay_violation(1), Some((0, 0)));
    }

    #[test]
    fn suggested_s_is_capped() {
        let s = Schedule::synchronous(4, 3);
        assert_eq!(s.suggested_s(), 4);
        let s = Schedule::from_arrivals(4, vec![vec![0], vec![1, 2]]).unwrap();
        assert_eq!(s.suggested_s(), 3);
    }

    fn model_strategy() -> impl Strategy<Value = ArrivalModel> {
        (1usize..8)
            .prop_flat_map(|n| {
                (
                    prop::collection::vec(0.0f64..=1.0, n),
                    1usize..6,
                    1usize..=n,
                    any::<u64>(),
                )
            })
            .prop_map(|(probs, tau, a, seed)| ArrivalModel::new(probs, tau, a, seed).unwrap())
    }

    proptest! {
        #[test]
        fn generated_schedules_respect_bounds(model in model_strategy(), len in 1usize..120) {
            let s = Schedule::generate(&model, len).unwrap();
            prop_assert_eq!(s.len(), len);
            prop_assert_eq!(s.bounded_delay_violation(model.tau), None);
            prop_assert_eq!(s.min_arrivals_violation(model.min_arrivals), None);
            for r in s.records() {
                prop_assert!(r.d.iter().all(|d| *d < model.tau));
            }
        }

        #[test]
        fn full_gate_is_synchronous(model in model_strategy()) {
            let mut m = model;
            m.min_arrivals = m.n_workers();
            let s = Schedule::generate(&m, 30).unwrap();
            prop_assert!(s.records().iter().all(|r| r.arrivals.len() == m.n_workers()));
        }

        #[test]
        fn same_seed_same_schedule(model in model_strategy()) {
            let a = Schedule::generate(&model, 60).unwrap();
            let b = Schedule::generate(&model, 60).unwrap();
            prop_assert_eq!(a.to_jsonl(), b.to_jsonl());
        }
    }
}
