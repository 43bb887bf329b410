//! The `specmux` command line.
//!
//! Every subcommand reads the same flat config format, lets flags and
//! `--set key=value` override it, and resolves it to a complete key set.
//! That resolved set goes into the run manifest, and `specmux replay`
//! recomputes the output from it byte for byte.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

use crate::afc::{self, AfcComb, AfcCombSpec, AfcError, AfcPreset, LossBudget, LossComponent};
use crate::config::{self, ConfigError, KvConfig, PARAM_KEYS};
use crate::crosstalk::{self, CavityFilter, CrosstalkError, CrosstalkScenario};
use crate::decoy::{self, DecoyError, FidelityReport, VacuumErrorRate};
use crate::montecarlo::{self, SimConfig, SimError, SimOutcome, RNG_ALGORITHM};
use crate::output::{fmt_num, to_json};
use crate::params::{ParamError, ParamSpec, TimeBinQubitSpec};
use crate::rate;
use crate::sweep::{self, SweepError, SweepResult, SweepSpec};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_TRIALS: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    /// Bad input: config, parameters, count files. Exit code 1.
    #[error("{0}")]
    Validation(String),
    /// Valid input that cannot produce a result. Exit code 2.
    #[error("{0}")]
    Computation(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Validation(_) => 1,
            Self::Computation(_) => 2,
        }
    }
}

macro_rules! validation_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self::Validation(e.to_string())
            }
        }
    )*};
}
validation_from!(ConfigError, ParamError, SweepError, AfcError, SimError);

impl From<CrosstalkError> for CliError {
    fn from(e: CrosstalkError) -> Self {
        match e {
            CrosstalkError::NoCounts => Self::Computation(e.to_string()),
            _ => Self::Validation(e.to_string()),
        }
    }
}

impl From<DecoyError> for CliError {
    fn from(e: DecoyError) -> Self {
        if e.is_bound_invalid() {
            Self::Computation(e.to_string())
        } else {
            Self::Validation(e.to_string())
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Computation(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Rate,
    Sweep,
    Simulate,
    Decoy,
    Afc,
    Crosstalk,
}

impl CommandKind {
    fn default_format(self) -> Format {
        match self {
            Self::Sweep | Self::Crosstalk => Format::Csv,
            _ => Format::Json,
        }
    }
}

/// Everything needed to rerun a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: CommandKind,
    pub tool_version: String,
    pub timestamp: String,
    pub format: Format,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Fully resolved configuration; defaults are written out explicitly.
    pub config: Table,
}

#[derive(Debug, Parser)]
#[command(
    name = "specmux",
    version,
    about = "Rates, simulation and analysis for frequency-multiplexed quantum repeaters"
)]
pub struct Cli {
    /// Flat key = value config file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Write the result here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub trials: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Manifest path. Defaults to `<out>.manifest.json` when `--out` is set.
    #[arg(long, global = true, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
    /// Override a config key (repeatable), e.g. `--set num_links=4`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form success probability and rate for one configuration.
    Rate,
    /// Optimal number of links against distance for several mode counts.
    Sweep,
    /// Monte Carlo estimate of the success probability.
    Simulate {
        /// Also dump one JSON line per trial.
        #[arg(long, value_name = "PATH")]
        trace: Option<PathBuf>,
    },
    /// Fidelities and single-photon bounds from a count file.
    Decoy {
        /// CSV with columns state,mu,counts_same,counts_orth,total_pulses.
        counts: Option<PathBuf>,
        /// `half`, `measured` or a number in [0, 1].
        #[arg(long, value_name = "E0")]
        vacuum_error_rate: Option<String>,
    },
    /// Comb storage time, efficiency, bin capacity and loss budget.
    Afc {
        /// Write the resolved comb and budget as a reusable config file.
        #[arg(long, value_name = "PATH")]
        save_preset: Option<PathBuf>,
    },
    /// Filter-cavity crosstalk fidelity as neighbours are added.
    Crosstalk,
    /// Rerun a command from its manifest.
    Replay { manifest: PathBuf },
}

/// Result of one command before it is written anywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Executed {
    pub resolved: KvConfig,
    pub body: String,
    /// Side output for formats that cannot hold everything (sweep CSV).
    pub summary: Option<String>,
    pub seed: Option<u64>,
}

/// Parses `args` and runs; the return value is the process exit status.
pub fn main_from<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("specmux: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Computation(e.to_string()))?;
    pool.install(|| run_in_pool(cli))
}

fn run_in_pool(cli: &Cli) -> Result<(), CliError> {
    let (kind, cfg, format) = match &cli.command {
        Command::Replay { manifest } => {
            let text = fs::read_to_string(manifest)
                .map_err(|e| CliError::Validation(format!("{}: {e}", manifest.display())))?;
            let m: RunManifest = serde_json::from_str(&text)
                .map_err(|e| CliError::Validation(format!("{}: {e}", manifest.display())))?;
            (
                m.command,
                KvConfig::from_table(m.config),
                cli.format.unwrap_or(m.format),
            )
        }
        command => {
            let kind = match command {
                Command::Rate => CommandKind::Rate,
                Command::Sweep => CommandKind::Sweep,
                Command::Simulate { .. } => CommandKind::Simulate,
                Command::Decoy { .. } => CommandKind::Decoy,
                Command::Afc { .. } => CommandKind::Afc,
                Command::Crosstalk => CommandKind::Crosstalk,
                Command::Replay { .. } => unreachable!(),
            };
            let mut cfg = match &cli.config {
                Some(path) => KvConfig::load(path)?,
                None => KvConfig::default(),
            };
            cfg.apply_overrides(&cli.set)?;
            apply_flags(cli, kind, &mut cfg);
            (kind, cfg, cli.format.unwrap_or(kind.default_format()))
        }
    };

    let done = execute(kind, &cfg, format)?;
    write_output(cli.out.as_deref(), &done.body)?;
    if let (Some(summary), Some(out)) = (&done.summary, &cli.out) {
        write_output(Some(&sidecar(out, ".summary.json")), summary)?;
    }
    match &cli.command {
        Command::Simulate { trace: Some(path) } => {
            let sim = sim_config(&done.resolved)?;
            let file = fs::File::create(path).map_err(|e| io_error(path, e))?;
            let mut w = std::io::BufWriter::new(file);
            montecarlo::write_trace(&sim, &mut w)
                .and_then(|()| w.flush())
                .map_err(|e| io_error(path, e))?;
        }
        Command::Afc {
            save_preset: Some(path),
        } => write_output(Some(path), &done.resolved.to_toml_string())?,
        _ => {}
    }
    let manifest_path = cli
        .manifest
        .clone()
        .or_else(|| cli.out.as_ref().map(|o| sidecar(o, ".manifest.json")));
    if let Some(path) = manifest_path {
        let manifest = RunManifest {
            command: kind,
            tool_version: TOOL_VERSION.to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            format,
            rng: done.seed.map(|_| RNG_ALGORITHM.to_string()),
            seed: done.seed,
            config: done.resolved.table().clone(),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Computation(e.to_string()))?;
        write_output(Some(&path), &(text + "\n"))?;
    }
    Ok(())
}

/// Dedicated flags take precedence over both the file and `--set`.
fn apply_flags(cli: &Cli, kind: CommandKind, cfg: &mut KvConfig) {
    if kind == CommandKind::Simulate {
        if let Some(seed) = cli.seed {
            cfg.set("seed", seed_value(seed));
        }
        if let Some(trials) = cli.trials {
            cfg.set("trials", i64::try_from(trials).unwrap_or(i64::MAX));
        }
    } else if cli.seed.is_some() || cli.trials.is_some() {
        eprintln!("specmux: --seed and --trials only affect `simulate`; ignored");
    }
    if let Command::Decoy {
        counts,
        vacuum_error_rate,
    } = &cli.command
    {
        if let Some(path) = counts {
            cfg.set("counts", path.display().to_string());
        }
        if let Some(e0) = vacuum_error_rate {
            cfg.set("vacuum_error_rate", e0.as_str());
        }
    }
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| io_error(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|()| out.flush())
                .map_err(|e| CliError::Computation(format!("stdout: {e}")))
        }
    }
}

/// Runs `kind` on `cfg`. Pure apart from reading the decoy count file.
pub fn execute(kind: CommandKind, cfg: &KvConfig, format: Format) -> Result<Executed, CliError> {
    match kind {
        CommandKind::Rate => cmd_rate(cfg, format),
        CommandKind::Sweep => cmd_sweep(cfg, format),
        CommandKind::Simulate => cmd_simulate(cfg, format),
        CommandKind::Decoy => cmd_decoy(cfg, format),
        CommandKind::Afc => cmd_afc(cfg, format),
        CommandKind::Crosstalk => cmd_crosstalk(cfg, format),
    }
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::Computation(e.to_string());
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(&row).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Computation(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn json_text<T: Serialize>(value: &T) -> Result<String, CliError> {
    to_json(value).map_err(|e| CliError::Computation(e.to_string()))
}

fn key_value_csv(pairs: &[(&str, f64)]) -> Result<String, CliError> {
    csv_text(
        &["quantity", "value"],
        pairs.iter().map(|(k, v)| vec![k.to_string(), fmt_num(*v)]),
    )
}

fn with_keys<'a>(groups: &[&[&'a str]]) -> Vec<&'a str> {
    groups.iter().flat_map(|g| g.iter().copied()).collect()
}

// ---- rate ----

fn cmd_rate(cfg: &KvConfig, format: Format) -> Result<Executed, CliError> {
    cfg.check_keys(&PARAM_KEYS)?;
    let params = config::param_spec(cfg, &[])?.validate()?;
    let r = rate::rate_success(&params);
    let mut resolved = KvConfig::default();
    config::params_to_config(&params, &mut resolved);
    let body = match format {
        Format::Json => json_text(&r)?,
        Format::Csv => csv_text(
            &[
                "p_one_mode",
                "p_link",
                "p_elementary",
                "p_success",
                "attempt_period_s",
                "rate_hz",
            ],
            [[
                r.p_one_mode,
                r.p_link,
                r.p_elementary,
                r.p_success,
                r.attempt_period_s,
                r.rate_hz,
            ]
            .iter()
            .map(|&x| fmt_num(x))
            .collect()],
        )?,
    };
    Ok(Executed {
        resolved,
        body,
        summary: None,
        seed: None,
    })
}

// ---- sweep ----

const SWEEP_KEYS: [&str; 8] = [
    "distances_km",
    "distance_start_km",
    "distance_stop_km",
    "distance_step_km",
    "n_max",
    "modes_list",
    "direct_source_rate_hz",
    "total_length_km",
];
/// `start, start + step, ...` up to `stop` inclusive.
pub fn distance_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(CliError::Validation(format!(
            "distance_step_km = {step} must be positive"
        )));
    }
    if !(start.is_finite() && stop.is_finite() && stop >= start) {
        return Err(CliError::Validation(format!(
            "distance_stop_km = {stop} must not be below distance_start_km = {start}"
        )));
    }
    let n = ((stop - start) / step + 1e-9).floor();
    if n > 1e7 {
        return Err(CliError::Validation(format!("{n} distance points is too many")));
    }
    Ok((0..=n as u64).map(|i| start + i as f64 * step).collect())
}

fn standard_defaults() -> Vec<(&'static str, f64)> {
    let s = ParamSpec::standard(0.0, 1, 1);
    vec![
        ("attenuation_db_per_km", s.attenuation_db_per_km),
        ("pair_emission_prob", s.pair_emission_prob),
        ("detector_eff_center", s.detector_eff_center),
        ("detector_eff_swap", s.detector_eff_swap),
        ("memory_eff", s.memory_eff),
        ("total_bandwidth_hz", s.total_bandwidth_hz),
        ("bandwidth_inefficiency", s.bandwidth_inefficiency),
    ]
}

fn sweep_spec(cfg: &KvConfig) -> Result<SweepSpec, CliError> {
    cfg.check_keys(&with_keys(&[&PARAM_KEYS, &SWEEP_KEYS]))?;
    let distances = if cfg.contains("distances_km") {
        cfg.f64_list("distances_km")?
    } else {
        distance_grid(
            cfg.f64_or("distance_start_km", 0.0)?,
            cfg.f64_or("distance_stop_km", 1000.0)?,
            cfg.f64_or("distance_step_km", 5.0)?,
        )?
    };
    let modes = if cfg.contains("modes_list") {
        cfg.u32_list("modes_list")?
    } else {
        vec![100, 1_000, 10_000]
    };
    let mut defaults = standard_defaults();
    // Set per point by the sweep itself.
    defaults.extend([
        ("total_length_km", 0.0),
        ("num_links", 1.0),
        ("num_spectral_modes", 1.0),
    ]);
    let mut base = config::param_spec(cfg, &defaults)?;
    base.total_length_km = 0.0;
    base.num_links = 1;
    base.num_spectral_modes = 1;
    Ok(SweepSpec::new(
        distances,
        cfg.u32_or("n_max", sweep::DEFAULT_N_MAX)?,
        base.validate()?,
        modes,
        cfg.f64_or("direct_source_rate_hz", sweep::DEFAULT_DIRECT_SOURCE_RATE_HZ)?,
    )?)
}

fn cmd_sweep(cfg: &KvConfig, format: Format) -> Result<Executed, CliError> {
    let spec = sweep_spec(cfg)?;
    let result: SweepResult = sweep::run_sweep(&spec)?;

    let mut resolved = KvConfig::default();
    let base = spec.base_params().spec();
    for (key, value) in [
        ("attenuation_db_per_km", base.attenuation_db_per_km),
        ("pair_emission_prob", base.pair_emission_prob),
        ("detector_eff_center", base.detector_eff_center),
        ("detector_eff_swap", base.detector_eff_swap),
        ("memory_eff", base.memory_eff),
        ("total_bandwidth_hz", base.total_bandwidth_hz),
        ("bandwidth_inefficiency", base.bandwidth_inefficiency),
    ] {
        resolved.set(key, value);
    }
    resolved.set("distances_km", spec.distances_km().to_vec());
    resolved.set("n_max", i64::from(spec.n_max()));
    resolved.set(
        "modes_list",
        spec.modes_list().iter().map(|&m| i64::from(m)).collect::<Vec<_>>(),
    );
    resolved.set("direct_source_rate_hz", spec.direct_source_rate_hz());

    let (body, summary) = match format {
        Format::Json => (json_text(&result)?, None),
        Format::Csv => (
            csv_text(
                &["m", "length_km", "optimal_n", "rate_hz", "direct_rate_hz"],
                result.rows.iter().map(|r| {
                    vec![
                        r.m.to_string(),
                        fmt_num(r.length_km),
                        r.optimal_n.to_string(),
                        fmt_num(r.rate_hz),
                        fmt_num(r.direct_rate_hz),
                    ]
                }),
            )?,
            Some(json_text(&result.curves)?),
        ),
    };
    Ok(Executed {
        resolved,
        body,
        summary,
        seed: None,
    })
}

// ---- simulate ----

fn seed_value(seed: u64) -> Value {
    i64::try_from(seed).map_or_else(|_| Value::String(seed.to_string()), Value::Integer)
}

fn read_seed(cfg: &KvConfig) -> Result<u64, CliError> {
    match cfg.table().get("seed") {
        None => Ok(DEFAULT_SEED),
        Some(Value::String(s)) => s
            .parse()
            .map_err(|_| CliError::Validation(format!("seed {s:?} is not an unsigned 64-bit integer"))),
        Some(_) => Ok(cfg.u64("seed")?),
    }
}

fn sim_config(cfg: &KvConfig) -> Result<SimConfig, CliError> {
    cfg.check_keys(&with_keys(&[&PARAM_KEYS, &["seed", "trials"]]))?;
    let params = config::param_spec(cfg, &[])?.validate()?;
    let trials = if cfg.contains("trials") {
        cfg.u64("trials")?
    } else {
        DEFAULT_TRIALS
    };
    Ok(SimConfig::new(read_seed(cfg)?, trials, params)?)
}

#[derive(Debug, Serialize)]
struct SimMeta<'a> {
    command: &'a str,
    tool_version: &'a str,
    rng: &'a str,
    seed: u64,
    trials: u64,
}

#[derive(Debug, Serialize)]
struct SimPayload<'a> {
    meta: SimMeta<'a>,
    params: ParamSpec,
    analytic_p_success: f64,
    #[serde(flatten)]
    outcome: &'a SimOutcome,
}

fn cmd_simulate(cfg: &KvConfig, format: Format) -> Result<Executed, CliError> {
    let sim = sim_config(cfg)?;
    let outcome = montecarlo::estimate(&sim);
    let analytic = rate::p_success(sim.params());
    let mut resolved = KvConfig::default();
    config::params_to_config(sim.params(), &mut resolved);
    resolved.set("seed", seed_value(sim.seed()));
    resolved.set("trials", i64::try_from(sim.num_trials()).unwrap_or(i64::MAX));
    let body = match format {
        Format::Json => json_text(&SimPayload {
            meta: SimMeta {
                command: "simulate",
                tool_version: TOOL_VERSION,
                rng: RNG_ALGORITHM,
                seed: sim.seed(),
                trials: sim.num_trials(),
            },
            params: sim.params().spec(),
            analytic_p_success: analytic,
            outcome: &outcome,
        })?,
        Format::Csv => csv_text(
            &[
                "seed",
                "successes",
                "trials",
                "est_p_success",
                "std_error",
                "analytic_p_success",
            ],
            [vec![
                sim.seed().to_string(),
                outcome.successes.to_string(),
                outcome.trials.to_string(),
                fmt_num(outcome.est_p_success),
                fmt_num(outcome.std_error),
                fmt_num(analytic),
            ]],
        )?,
    };
    Ok(Executed {
        resolved,
        body,
        summary: None,
        seed: Some(sim.seed()),
    })
}

// ---- decoy ----

fn vacuum_rate(cfg: &KvConfig) -> Result<VacuumErrorRate, CliError> {
    match cfg.table().get("vacuum_error_rate") {
        None => Ok(VacuumErrorRate::default()),
        Some(Value::String(s)) => s.parse().map_err(CliError::Validation),
        Some(_) => {
            let e = cfg.f64("vacuum_error_rate")?;
            format!("{e}").parse().map_err(CliError::Validation)
        }
    }
}

fn vacuum_rate_value(v: VacuumErrorRate) -> Value {
    match v {
        VacuumErrorRate::Half => Value::from("half"),
        VacuumErrorRate::Measured => Value::from("measured"),
        VacuumErrorRate::Fixed(e) => Value::from(e),
    }
}

fn cmd_decoy(cfg: &KvConfig, format: Format) -> Result<Executed, CliError> {
    cfg.check_keys(&["counts", "vacuum_error_rate"])?;
    let path = cfg.string("counts")?;
    let vacuum = vacuum_rate(cfg)?;
    let text = fs::read_to_string(&path).map_err(|e| CliError::Validation(format!("{path}: {e}")))?;
    let rows = decoy::parse_count_file(&text).map_err(|e| match e {
        DecoyError::Malformed { .. } => CliError::Validation(format!("{path}: {e}")),
        other => other.into(),
    })?;
    let report: FidelityReport = decoy::analyze(&rows, vacuum)?;

    let mut resolved = KvConfig::default();
    resolved.set("counts", path);
    resolved.set("vacuum_error_rate", vacuum_rate_value(vacuum));
    let body = match format {
        Format::Json => json_text(&report)?,
        Format::Csv => {
            let est = [
                ("f_e", report.f_e),
                ("f_l", report.f_l),
                ("f_plus", report.f_plus),
                ("f_minus", report.f_minus),
                ("f_el", report.f_el),
                ("f_pm", report.f_pm),
                ("f_avg", report.f_avg),
                ("f_l1_el", report.bound_el.f_l1_bound),
                ("f_l1_pm", report.bound_pm.f_l1_bound),
                ("f_l1_avg", report.f_l1_avg),
                ("y1_lower_el", report.bound_el.y1_lower),
                ("y1_lower_pm", report.bound_pm.y1_lower),
                ("e1_upper_el", report.bound_el.e1_upper),
                ("e1_upper_pm", report.bound_pm.e1_upper),
            ];
            csv_text(
                &["quantity", "value", "sigma"],
                est.iter()
                    .map(|(k, e)| vec![k.to_string(), fmt_num(e.value), fmt_num(e.sigma)])
                    .chain([vec![
                        "margin_sigmas".into(),
                        fmt_num(report.classical.margin_sigmas),
                        String::new(),
                    ]]),
            )?
        }
    };
    Ok(Executed {
        resolved,
        body,
        summary: None,
        seed: None,
    })
}

// ---- afc ----

const AFC_KEYS: [&str; 10] = [
    "preset",
    "name",
    "tooth_spacing_hz",
    "tooth_width_hz",
    "bin_bandwidth_hz",
    "num_bins",
    "bin_center_spacing_hz",
    "memory_bandwidth_hz",
    "loss_components",
    "loss_transmissions",
];

/// Starts from `preset` (default `calgary-2014`) and applies any explicit keys.
pub fn afc_preset(cfg: &KvConfig) -> Result<AfcPreset, CliError> {
    cfg.check_keys(&AFC_KEYS)?;
    let base = AfcPreset::by_name(
        &cfg.opt_string("preset")?
            .unwrap_or_else(|| afc::CALGARY_2014.to_string()),
    )?;
    let c = base.comb.spec();
    let comb = AfcComb::new(AfcCombSpec {
        tooth_spacing_hz: cfg.f64_or("tooth_spacing_hz", c.tooth_spacing_hz)?,
        tooth_width_hz: cfg.f64_or("tooth_width_hz", c.tooth_width_hz)?,
        bin_bandwidth_hz: cfg.f64_or("bin_bandwidth_hz", c.bin_bandwidth_hz)?,
        num_bins: cfg.u32_or("num_bins", c.num_bins)?,
        bin_center_spacing_hz: cfg.f64_or("bin_center_spacing_hz", c.bin_center_spacing_hz)?,
    })?;
    let budget = match (cfg.contains("loss_components"), cfg.contains("loss_transmissions")) {
        (false, false) => base.budget,
        (true, true) => {
            let names = cfg.string_list("loss_components")?;
            let values = cfg.f64_list("loss_transmissions")?;
            if names.len() != values.len() {
                return Err(CliError::Validation(format!(
                    "loss_components has {} entries but loss_transmissions has {}",
                    names.len(),
                    values.len()
                )));
            }
            LossBudget::from_pairs(names.into_iter().zip(values))?
        }
        (true, false) => return Err(ConfigError::MissingKey("loss_transmissions".into()).into()),
        (false, true) => return Err(ConfigError::MissingKey("loss_components".into()).into()),
    };
    Ok(AfcPreset {
        name: cfg.opt_string("name")?.unwrap_or(base.name),
        comb,
        memory_bandwidth_hz: cfg.f64_or("memory_bandwidth_hz", base.memory_bandwidth_hz)?,
        budget,
    })
}

/// The preset as config keys, loadable by [`afc_preset`].
pub fn afc_preset_config(p: &AfcPreset) -> KvConfig {
    let c = p.comb.spec();
    let mut cfg = KvConfig::default();
    cfg.set("name", p.name.as_str());
    cfg.set("tooth_spacing_hz", c.tooth_spacing_hz);
    cfg.set("tooth_width_hz", c.tooth_width_hz);
    cfg.set("bin_bandwidth_hz", c.bin_bandwidth_hz);
    cfg.set("num_bins", i64::from(c.num_bins));
    cfg.set("bin_center_spacing_hz", c.bin_center_spacing_hz);
    cfg.set("memory_bandwidth_hz", p.memory_bandwidth_hz);
    cfg.set(
        "loss_components",
        p.budget.components().iter().map(|l| l.name.clone()).collect::<Vec<_>>(),
    );
    cfg.set(
        "loss_transmissions",
        p.budget.components().iter().map(|l| l.transmission).collect::<Vec<_>>(),
    );
    cfg
}

#[derive(Debug, Serialize)]
struct AfcReport<'a> {
    name: &'a str,
    comb: AfcCombSpec,
    finesse: f64,
    storage_time_s: f64,
    cavity_matched_efficiency: f64,
    memory_bandwidth_hz: f64,
    max_bins: u64,
    occupied_bandwidth_hz: f64,
    bins_fit: bool,
    loss_budget: &'a [LossComponent],
    overall_efficiency: f64,
}

fn cmd_afc(cfg: &KvConfig, format: Format) -> Result<Executed, CliError> {
    let p = afc_preset(cfg)?;
    let finesse = p.comb.finesse();
    let eff = afc::cavity_matched_efficiency(finesse)?;
    let max_bins = afc::max_bins(p.memory_bandwidth_hz, p.comb.bin_center_spacing_hz())?;
    let report = AfcReport {
        name: &p.name,
        comb: p.comb.spec(),
        finesse,
        storage_time_s: afc::storage_time(&p.comb),
        cavity_matched_efficiency: eff,
        memory_bandwidth_hz: p.memory_bandwidth_hz,
        max_bins,
        occupied_bandwidth_hz: p.comb.occupied_bandwidth_hz(),
        bins_fit: p.comb.check_bandwidth(p.memory_bandwidth_hz).is_ok(),
        loss_budget: p.budget.components(),
        overall_efficiency: afc::overall_efficiency(&p.budget),
    };
    let body = match format {
        Format::Json => json_text(&report)?,
        Format::Csv => key_value_csv(&[
            ("finesse", report.finesse),
            ("storage_time_s", report.storage_time_s),
            ("cavity_matched_efficiency", report.cavity_matched_efficiency),
            ("memory_bandwidth_hz", report.memory_bandwidth_hz),
            ("max_bins", report.max_bins as f64),
            ("occupied_bandwidth_hz", report.occupied_bandwidth_hz),
            ("bins_fit", if report.bins_fit { 1.0 } else { 0.0 }),
            ("overall_efficiency", report.overall_efficiency),
        ])?,
    };
    Ok(Executed {
        resolved: afc_preset_config(&p),
        body,
        summary: None,
        seed: None,
    })
}

// ---- crosstalk ----

const CROSSTALK_KEYS: [&str; 9] = [
    "test_bin_hz",
    "neighbor_detunings_hz",
    "mean_photons_test",
    "mean_photons_neighbor",
    "cavity_fwhm_hz",
    "cavity_resonance_hz",
    "frequency_shift_hz",
    "bin_separation_s",
    "pulse_fwhm_s",
];

/// Defaults to the 26-bin comb layout with the test bin at 1350 MHz.
pub fn crosstalk_inputs(cfg: &KvConfig) -> Result<(CrosstalkScenario, TimeBinQubitSpec), CliError> {
    cfg.check_keys(&CROSSTALK_KEYS)?;
    let d = crosstalk::default_scenario(&AfcPreset::calgary_2014().comb);
    let q = TimeBinQubitSpec::experimental();
    let scenario = CrosstalkScenario {
        test_bin_detuning_hz: cfg.f64_or("test_bin_hz", d.test_bin_detuning_hz)?,
        neighbor_detunings_hz: if cfg.contains("neighbor_detunings_hz") {
            cfg.f64_list("neighbor_detunings_hz")?
        } else {
            d.neighbor_detunings_hz
        },
        mean_photons_test: cfg.f64_or("mean_photons_test", d.mean_photons_test)?,
        mean_photons_neighbor: cfg.f64_or("mean_photons_neighbor", d.mean_photons_neighbor)?,
        filter: CavityFilter::new(
            cfg.f64_or("cavity_fwhm_hz", d.filter.fwhm_hz())?,
            cfg.f64_or("cavity_resonance_hz", d.filter.resonance_detuning_hz())?,
        )?,
        frequency_shift_hz: if cfg.contains("frequency_shift_hz") {
            Some(cfg.f64("frequency_shift_hz")?)
        } else {
            None
        },
    };
    let qubit = TimeBinQubitSpec::new(
        cfg.f64_or("bin_separation_s", q.bin_separation_s())?,
        cfg.f64_or("pulse_fwhm_s", q.pulse_fwhm_s())?,
    )?;
    Ok((scenario, qubit))
}

#[derive(Debug, Serialize)]
struct CurvePoint {
    num_neighbors: usize,
    fidelity: f64,
}

#[derive(Debug, Serialize)]
struct CrosstalkReport<'a> {
    scenario: &'a CrosstalkScenario,
    shift_hz: f64,
    phase_correction_rad: f64,
    fidelity: f64,
    curve: Vec<CurvePoint>,
}

fn cmd_crosstalk(cfg: &KvConfig, format: Format) -> Result<Executed, CliError> {
    let (scenario, qubit) = crosstalk_inputs(cfg)?;
    let curve = crosstalk::saturation_curve(&scenario)?;
    let mut resolved = KvConfig::default();
    resolved.set("test_bin_hz", scenario.test_bin_detuning_hz);
    resolved.set("neighbor_detunings_hz", scenario.neighbor_detunings_hz.clone());
    resolved.set("mean_photons_test", scenario.mean_photons_test);
    resolved.set("mean_photons_neighbor", scenario.mean_photons_neighbor);
    resolved.set("cavity_fwhm_hz", scenario.filter.fwhm_hz());
    resolved.set("cavity_resonance_hz", scenario.filter.resonance_detuning_hz());
    if let Some(s) = scenario.frequency_shift_hz {
        resolved.set("frequency_shift_hz", s);
    }
    resolved.set("bin_separation_s", qubit.bin_separation_s());
    resolved.set("pulse_fwhm_s", qubit.pulse_fwhm_s());

    let body = match format {
        Format::Csv => csv_text(
            &["num_neighbors", "fidelity"],
            curve.iter().map(|&(k, f)| vec![k.to_string(), fmt_num(f)]),
        )?,
        Format::Json => json_text(&CrosstalkReport {
            scenario: &scenario,
            shift_hz: scenario.shift_hz(),
            phase_correction_rad: crosstalk::phase_correction(scenario.shift_hz(), &qubit),
            fidelity: curve.last().map_or(1.0, |p| p.1),
            curve: curve
                .iter()
                .map(|&(num_neighbors, fidelity)| CurvePoint {
                    num_neighbors,
                    fidelity,
                })
                .collect(),
        })?,
    };
    Ok(Executed {
        resolved,
        body,
        summary: None,
        seed: None,
    })
}
