//! Event-level Monte Carlo of the multiplexed repeater protocol.
//!
//! Each trial is one lock-step attempt round: every elementary link draws an
//! independent Bernoulli BSM outcome per spectral mode, feed-forward selects
//! the lowest-index heralded mode, and if every link heralded the chain draws
//! its swap outcomes and the two end readouts. Links that fail discard the
//! whole round.
//!
//! Randomness is counter based: trial `i` of a run seeded with `s` reads the
//! ChaCha8 keystream keyed by `s` at stream `i`. Results therefore depend only
//! on `(seed, trial index)` and not on how trials are scheduled across threads.

use std::collections::BTreeMap;

use rand::distr::{Bernoulli, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::RepeaterParams;
use crate::rate;

/// Identifier recorded in run metadata. Bump when the draw order changes.
pub const RNG_ALGORITHM: &str = "chacha8/rand_chacha-0.9/seed_from_u64+stream=trial-index/v1";

const CHUNK: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("num_trials must be at least 1")]
    NoTrials,
    #[error("{0}")]
    Probability(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    seed: u64,
    num_trials: u64,
    params: RepeaterParams,
}

impl SimConfig {
    pub fn new(seed: u64, num_trials: u64, params: RepeaterParams) -> Result<Self, SimError> {
        if num_trials == 0 {
            return Err(SimError::NoTrials);
        }
        Ok(Self {
            seed,
            num_trials,
            params,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn num_trials(&self) -> u64 {
        self.num_trials
    }
    pub fn params(&self) -> &RepeaterParams {
        &self.params
    }
}

/// Random stream for one trial.
pub fn trial_rng(seed: u64, trial_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial_index);
    rng
}

/// Lowest-index successful mode, if any.
pub fn heralded_mode(mode_outcomes: &[bool]) -> Option<usize> {
    mode_outcomes.iter().position(|&ok| ok)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkTrace {
    pub mode_outcomes: Vec<bool>,
    pub heralded_mode: Option<usize>,
}

/// Everything drawn during one attempt round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialTrace {
    pub links: Vec<LinkTrace>,
    /// One outcome per link intersection; empty unless every link heralded.
    pub swaps: Vec<bool>,
    /// Readout at each end of the chain; `None` unless every link heralded.
    pub readout: Option<[bool; 2]>,
}

impl TrialTrace {
    pub fn success(&self) -> bool {
        self.links.iter().all(|l| l.heralded_mode.is_some())
            && self.swaps.iter().all(|&s| s)
            && self.readout.is_some_and(|r| r[0] && r[1])
    }
}

/// Receives the outcomes of one trial as they are drawn.
trait TrialVisitor {
    fn mode(&mut self, _link: usize, _outcome: bool) {}
    fn herald(&mut self, _link: usize, _mode: Option<usize>) {}
    fn swap(&mut self, _outcome: bool) {}
    fn readout(&mut self, _ends: [bool; 2]) {}
}

/// Per-run Bernoulli distributions; the draw order defines [`RNG_ALGORITHM`].
#[derive(Debug, Clone, Copy)]
struct Protocol {
    links: usize,
    modes: usize,
    bsm: Bernoulli,
    swap: Bernoulli,
    end: Bernoulli,
}

impl Protocol {
    fn new(params: &RepeaterParams) -> Result<Self, SimError> {
        let bern = |p: f64| Bernoulli::new(p).map_err(|e| SimError::Probability(format!("{e}: {p}")));
        Ok(Self {
            links: params.num_links() as usize,
            modes: params.num_spectral_modes() as usize,
            bsm: bern(rate::p_bsm_one_mode(params))?,
            swap: bern(rate::p_swap(params))?,
            end: bern(params.memory_eff() * params.detector_eff_swap())?,
        })
    }

    fn play<R: Rng + ?Sized, V: TrialVisitor>(&self, rng: &mut R, visitor: &mut V) -> bool {
        let mut all_linked = true;
        for link in 0..self.links {
            let mut first = None;
            for mode in 0..self.modes {
                let ok = self.bsm.sample(rng);
                visitor.mode(link, ok);
                if ok && first.is_none() {
                    first = Some(mode);
                }
            }
            visitor.herald(link, first);
            all_linked &= first.is_some();
        }
        if !all_linked {
            return false;
        }
        let mut ok = true;
        for _ in 1..self.links {
            let s = self.swap.sample(rng);
            visitor.swap(s);
            ok &= s;
        }
        let ends = [self.end.sample(rng), self.end.sample(rng)];
        visitor.readout(ends);
        ok && ends[0] && ends[1]
    }
}

struct TraceBuilder(TrialTrace);

impl TrialVisitor for TraceBuilder {
    fn mode(&mut self, link: usize, outcome: bool) {
        if self.0.links.len() == link {
            self.0.links.push(LinkTrace {
                mode_outcomes: Vec::new(),
                heralded_mode: None,
            });
        }
        self.0.links[link].mode_outcomes.push(outcome);
    }
    fn herald(&mut self, link: usize, mode: Option<usize>) {
        self.0.links[link].heralded_mode = mode;
    }
    fn swap(&mut self, outcome: bool) {
        self.0.swaps.push(outcome);
    }
    fn readout(&mut self, ends: [bool; 2]) {
        self.0.readout = Some(ends);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Tally {
    trials: u64,
    successes: u64,
    heralds: Vec<u64>,
}

impl Tally {
    fn new(modes: usize) -> Self {
        Self {
            trials: 0,
            successes: 0,
            heralds: vec![0; modes],
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        self.trials += other.trials;
        self.successes += other.successes;
        for (a, b) in self.heralds.iter_mut().zip(other.heralds) {
            *a += b;
        }
        self
    }
}

impl TrialVisitor for Tally {
    fn herald(&mut self, _link: usize, mode: Option<usize>) {
        if let Some(j) = mode {
            self.heralds[j] += 1;
        }
    }
}

/// Draws one attempt round from `rng`.
pub fn run_trial<R: Rng + ?Sized>(rng: &mut R, params: &RepeaterParams) -> TrialTrace {
    let protocol = Protocol::new(params).expect("validated parameters give valid probabilities");
    let mut builder = TraceBuilder(TrialTrace {
        links: Vec::with_capacity(protocol.links),
        swaps: Vec::new(),
        readout: None,
    });
    protocol.play(rng, &mut builder);
    builder.0
}

/// Aggregate of a Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub successes: u64,
    pub trials: u64,
    pub est_p_success: f64,
    pub std_error: f64,
    /// Heralded mode index -> number of link-rounds heralded in that mode,
    /// counted over every link of every trial.
    pub per_link_mode_histogram: BTreeMap<usize, u64>,
}

impl SimOutcome {
    fn from_tally(tally: Tally) -> Self {
        let n = tally.trials as f64;
        let p = tally.successes as f64 / n;
        Self {
            successes: tally.successes,
            trials: tally.trials,
            est_p_success: p,
            std_error: (p * (1.0 - p) / n).sqrt(),
            per_link_mode_histogram: tally.heralds.into_iter().enumerate().filter(|&(_, c)| c > 0).collect(),
        }
    }
}

/// Runs `config.num_trials()` independent rounds on the current rayon pool.
pub fn estimate(config: &SimConfig) -> SimOutcome {
    let protocol = Protocol::new(&config.params).expect("validated parameters give valid probabilities");
    let chunks = config.num_trials.div_ceil(CHUNK);
    let tally = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut tally = Tally::new(protocol.modes);
            let end = ((c + 1) * CHUNK).min(config.num_trials);
            for i in c * CHUNK..end {
                let mut rng = trial_rng(config.seed, i);
                if protocol.play(&mut rng, &mut tally) {
                    tally.successes += 1;
                }
                tally.trials += 1;
            }
            tally
        })
        .reduce(|| Tally::new(protocol.modes), Tally::merge);
    SimOutcome::from_tally(tally)
}

/// Per-trial traces in trial-index order.
pub fn traces(config: &SimConfig) -> impl Iterator<Item = (u64, TrialTrace)> + '_ {
    (0..config.num_trials).map(move |i| (i, run_trial(&mut trial_rng(config.seed, i), &config.params)))
}

/// One line of the trace dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub trial: u64,
    /// Heralded mode per link, `-1` where the link failed.
    pub heralded: Vec<i64>,
    pub success: bool,
}

impl TraceRecord {
    pub fn new(trial: u64, trace: &TrialTrace) -> Self {
        Self {
            trial,
            heralded: trace
                .links
                .iter()
                .map(|l| l.heralded_mode.map_or(-1, |j| j as i64))
                .collect(),
            success: trace.success(),
        }
    }
}

/// Writes one JSON object per trial, in trial order.
pub fn write_trace<W: std::io::Write>(config: &SimConfig, mut out: W) -> std::io::Result<()> {
    for (i, trace) in traces(config) {
        serde_json::to_writer(&mut out, &TraceRecord::new(i, &trace))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
