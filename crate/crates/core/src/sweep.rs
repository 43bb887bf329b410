//! Distance sweeps with per-distance optimisation of the number of
//! elementary links.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::{ParamError, RepeaterParams};
use crate::rate;

pub const DEFAULT_N_MAX: u32 = 64;
pub const DEFAULT_DIRECT_SOURCE_RATE_HZ: f64 = 10e9;

/// Relative difference below which two candidate link counts are treated as
/// tied; the smaller count wins a tie.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error("distance list is empty")]
    NoDistances,
    #[error("distances must be strictly increasing (index {0})")]
    Unordered(usize),
    #[error("modes list is empty")]
    NoModes,
    #[error("n_max must be at least 1")]
    ZeroNMax,
    #[error(transparent)]
    Param(#[from] ParamError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    distances_km: Vec<f64>,
    n_max: u32,
    /// `num_links`, `num_spectral_modes` and `total_length_km` are overridden.
    base_params: RepeaterParams,
    modes_list: Vec<u32>,
    direct_source_rate_hz: f64,
}

impl SweepSpec {
    pub fn new(
        distances_km: Vec<f64>,
        n_max: u32,
        base_params: RepeaterParams,
        modes_list: Vec<u32>,
        direct_source_rate_hz: f64,
    ) -> Result<Self, SweepError> {
        if distances_km.is_empty() {
            return Err(SweepError::NoDistances);
        }
        for (i, &d) in distances_km.iter().enumerate() {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(ParamError::OutOfRange {
                    field: "distances_km",
                    value: d,
                    expected: "non-negative distances in km",
                }
                .into());
            }
            if i > 0 && d <= distances_km[i - 1] {
                return Err(SweepError::Unordered(i));
            }
        }
        if modes_list.is_empty() {
            return Err(SweepError::NoModes);
        }
        if let Some(&m) = modes_list.iter().find(|&&m| m == 0) {
            base_params.with_num_spectral_modes(m)?;
        }
        if n_max == 0 {
            return Err(SweepError::ZeroNMax);
        }
        if !(direct_source_rate_hz > 0.0 && direct_source_rate_hz.is_finite()) {
            return Err(ParamError::OutOfRange {
                field: "direct_source_rate_hz",
                value: direct_source_rate_hz,
                expected: "a positive rate in Hz",
            }
            .into());
        }
        Ok(Self {
            distances_km,
            n_max,
            base_params,
            modes_list,
            direct_source_rate_hz,
        })
    }

    /// The three-curve comparison: m in {100, 1000, 10000}, 0..=1000 km in
    /// 5 km steps, standard efficiencies, 10 GHz direct source.
    pub fn optimal_rate_curves(base_params: RepeaterParams) -> Self {
        Self::new(
            default_distances(),
            DEFAULT_N_MAX,
            base_params,
            vec![100, 1_000, 10_000],
            DEFAULT_DIRECT_SOURCE_RATE_HZ,
        )
        .expect("default sweep is valid")
    }

    pub fn distances_km(&self) -> &[f64] {
        &self.distances_km
    }
    pub fn n_max(&self) -> u32 {
        self.n_max
    }
    pub fn base_params(&self) -> &RepeaterParams {
        &self.base_params
    }
    pub fn modes_list(&self) -> &[u32] {
        &self.modes_list
    }
    pub fn direct_source_rate_hz(&self) -> f64 {
        self.direct_source_rate_hz
    }
}

/// 0 to 1000 km in 5 km steps.
pub fn default_distances() -> Vec<f64> {
    (0..=200).map(|i| 5.0 * f64::from(i)).collect()
}

/// Index of the largest value, preferring the earliest among values within
/// [`TIE_TOLERANCE`] of each other.
pub fn argmax_smallest(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            None => best = Some(i),
            Some(b) if v > values[b] && v - values[b] > TIE_TOLERANCE * values[b].abs() => best = Some(i),
            _ => {}
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkChoice {
    pub optimal_n: u32,
    pub rate_hz: f64,
}

fn per_n_rates(params: &RepeaterParams, n_max: u32) -> Result<Vec<f64>, ParamError> {
    (1..=n_max)
        .map(|n| Ok(rate::rate_success(&params.with_num_links(n)?).rate_hz))
        .collect()
}

/// Exhaustive search over `n` in `1..=n_max`; `num_links` of `params` is ignored.
pub fn optimize_n(params: &RepeaterParams, n_max: u32) -> Result<LinkChoice, SweepError> {
    if n_max == 0 {
        return Err(SweepError::ZeroNMax);
    }
    let rates = per_n_rates(params, n_max)?;
    Ok(choose(&rates))
}

fn choose(rates: &[f64]) -> LinkChoice {
    // All candidates share the attempt period, so ranking by rate equals
    // ranking by success probability.
    let i = argmax_smallest(rates).expect("at least one candidate");
    LinkChoice {
        optimal_n: i as u32 + 1,
        rate_hz: rates[i],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: u32,
    pub length_km: f64,
    pub optimal_n: u32,
    pub rate_hz: f64,
    pub direct_rate_hz: f64,
    /// Rate for `n = 1..=n_max`.
    pub per_n_rates: Vec<f64>,
}

/// Stretch of distance over which one link count stays optimal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub n: u32,
    pub start_km: f64,
    pub end_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub m: u32,
    /// First distance at which the repeater beats direct transmission,
    /// interpolated linearly in log-rate; `None` if it never does on the grid.
    pub crossover_km: Option<f64>,
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Ordered by `(m, length)` in the order of the spec's lists.
    pub rows: Vec<SweepRow>,
    pub curves: Vec<CurveSummary>,
}

impl SweepResult {
    pub fn curve(&self, m: u32) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.m == m)
    }
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult, SweepError> {
    let mut rows = Vec::with_capacity(spec.modes_list.len() * spec.distances_km.len());
    let mut curves = Vec::with_capacity(spec.modes_list.len());
    for &m in &spec.modes_list {
        let with_m = spec.base_params.with_num_spectral_modes(m)?;
        let curve: Vec<SweepRow> = spec
            .distances_km
            .par_iter()
            .map(|&length_km| {
                let p = with_m.with_total_length_km(length_km)?;
                let per_n_rates = per_n_rates(&p, spec.n_max)?;
                let choice = choose(&per_n_rates);
                Ok(SweepRow {
                    m,
                    length_km,
                    optimal_n: choice.optimal_n,
                    rate_hz: choice.rate_hz,
                    direct_rate_hz: rate::rate_direct_transmission(
                        spec.direct_source_rate_hz,
                        p.attenuation_db_per_km(),
                        length_km,
                    )?,
                    per_n_rates,
                })
            })
            .collect::<Result<_, ParamError>>()?;
        curves.push(CurveSummary {
            m,
            crossover_km: crossover_km(&curve),
            segments: segments(&curve),
        });
        rows.extend(curve);
    }
    Ok(SweepResult { rows, curves })
}

fn crossover_km(curve: &[SweepRow]) -> Option<f64> {
    let i = curve.iter().position(|r| r.rate_hz > r.direct_rate_hz)?;
    if i == 0 {
        return Some(curve[0].length_km);
    }
    let (a, b) = (&curve[i - 1], &curve[i]);
    let gap = |r: &SweepRow| r.rate_hz.ln() - r.direct_rate_hz.ln();
    let (ga, gb) = (gap(a), gap(b));
    if !ga.is_finite() {
        return Some(b.length_km);
    }
    // ga <= 0 < gb
    Some(a.length_km + (b.length_km - a.length_km) * (-ga) / (gb - ga))
}

fn segments(curve: &[SweepRow]) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    for r in curve {
        match out.last_mut() {
            Some(s) if s.n == r.optimal_n => s.end_km = r.length_km,
            _ => out.push(Segment {
                n: r.optimal_n,
                start_km: r.length_km,
                end_km: r.length_km,
            }),
        }
    }
    out
}
