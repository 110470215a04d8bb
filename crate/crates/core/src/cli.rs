//! Experiment runner behind the `hardball` binary.
//!
//! A run is described by a TOML file with a `[system]` and an `[experiment]`
//! table:
//!
//! ```toml
//! [system]
//! nu = 2
//! radius = 0.1
//! masses = [1.0, 1.0, 1.0]
//!
//! [system.tolerances]     # optional, every key defaults
//! grazing_cos = 1e-6
//!
//! [experiment]
//! kind = "verify-q"       # optional, must match the subcommand if given
//! seed = 7
//! collisions = 1000
//! runs = 100
//! L = 100.0               # certificate
//! a = 1.5                 # verify-lemma310
//! selection = "measured"  # certificate: "measured" | "proof-bound"
//! richness_window = 100
//! output_dir = "out"
//! ```
//!
//! Every run writes `report.json` into the output directory, plus
//! `events.csv`, `tangent_trace.csv` and `certificates.json` where they
//! apply. Reports embed the resolved config (minus the output directory) and
//! the suite tolerances but no timestamps, so a fixed config and seed give
//! byte-identical files.
//!
//! Exit codes: [`EXIT_PASS`], [`EXIT_VIOLATION`], [`EXIT_SINGULAR`],
//! [`EXIT_UNMET`], [`EXIT_CONFIG`].

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::estimates::{
    curvature_lower_bound, curvature_sharp_bound, f_bound, g_threshold, g_threshold_bisection, lemma_3_10_bound,
    max_relative_speed, prop_3_5_check, MassMultiset,
};
use crate::flow::{simulate, write_events_csv, CollisionEvent, Stop, TrajectorySegment};
use crate::graphs::CollisionSequence;
use crate::phase_space::{normalize_state, min_image_delta, norm, PhasePoint, SystemParams, ToleranceSet};
use crate::subspaces::{
    contraction_certificate, expansion_certificate, lemma_3_7_seed, verify_certificate, Certificate,
    CertificateOptions, SeedMode, SelectionRule,
};
use crate::tangent::{propagate_along, propagate_along_with, write_trace_csv, Side, TangentVector, TraceOptions, TraceSample};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_SINGULAR: i32 = 2;
/// Hypothesis unmet, budget exhausted or no convergence.
pub const EXIT_UNMET: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

/// Acceptance tolerances used by the suites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuiteTolerances {
    pub conservation: f64,
    pub per_collision: f64,
    /// Q decrease allowed between samples, relative to `‖w‖²`.
    pub q_slack: f64,
    /// Flight increment error of Q, relative to `‖w‖²`.
    pub flight_increment: f64,
    pub growth: f64,
    pub curvature: f64,
    pub spread: f64,
    pub f_bound: f64,
    pub duality: f64,
}

pub const TOLERANCES: SuiteTolerances = SuiteTolerances {
    conservation: 1e-9,
    per_collision: 1e-12,
    q_slack: 1e-10,
    flight_increment: 1e-12,
    growth: 1e-8,
    curvature: 1e-9,
    spread: 1e-12,
    f_bound: 1e-9,
    duality: 1e-10,
};

/// Attempts per ball when placing positions; also the number of velocity
/// draws allowed when a run needs a speed bound.
pub const MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Simulate,
    VerifyQ,
    VerifyProp35,
    VerifyLemma310,
    VerifyCor312,
    Certificate,
    Estimates,
}

impl Kind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Kind::Simulate => "simulate",
            Kind::VerifyQ => "verify-q",
            Kind::VerifyProp35 => "verify-prop35",
            Kind::VerifyLemma310 => "verify-lemma310",
            Kind::VerifyCor312 => "verify-cor312",
            Kind::Certificate => "certificate",
            Kind::Estimates => "estimates",
        }
    }

    fn default_runs(&self) -> usize {
        match self {
            Kind::VerifyQ | Kind::VerifyLemma310 | Kind::VerifyCor312 => 100,
            Kind::VerifyProp35 => 50,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Optional for `estimates`, which only needs masses.
    pub nu: Option<usize>,
    pub radius: Option<f64>,
    pub masses: Vec<f64>,
    #[serde(default)]
    pub tolerances: ToleranceSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    pub kind: Option<Kind>,
    pub seed: u64,
    pub collisions: usize,
    pub runs: Option<usize>,
    #[serde(rename = "L")]
    pub l: f64,
    pub a: Option<f64>,
    pub selection: SelectionRule,
    pub richness_window: usize,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            kind: None,
            seed: 0,
            collisions: 1000,
            runs: None,
            l: 100.0,
            a: None,
            selection: SelectionRule::Measured,
            richness_window: 100,
            output_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    #[serde(default)]
    pub experiment: ExperimentSettings,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies command-line overrides and checks everything a run of `kind`
    /// needs. Nothing is written before this succeeds.
    pub fn resolve(mut self, kind: Kind, seed: Option<u64>, output: Option<PathBuf>) -> Result<ResolvedConfig> {
        let exp = &mut self.experiment;
        if let Some(k) = exp.kind {
            if k != kind {
                return Err(Error::Config(format!(
                    "config kind {} does not match subcommand {}",
                    k.as_str(),
                    kind.as_str()
                )));
            }
        }
        exp.kind = Some(kind);
        if let Some(s) = seed {
            exp.seed = s;
        }
        if output.is_some() {
            exp.output_dir = output;
        }
        if exp.output_dir.is_none() {
            return Err(Error::Config("no output directory (set experiment.output_dir or --output)".into()));
        }
        exp.runs = Some(exp.runs.unwrap_or(kind.default_runs()));
        if exp.collisions == 0 || exp.runs == Some(0) {
            return Err(Error::Config("collisions and runs must be positive".into()));
        }
        if !(exp.l.is_finite() && exp.l > 0.0) {
            return Err(Error::Config(format!("L must be positive, got {}", exp.l)));
        }
        if kind == Kind::VerifyLemma310 {
            match exp.a {
                Some(a) if a.is_finite() && a > 0.0 => {}
                Some(a) => return Err(Error::Config(format!("a must be positive, got {a}"))),
                None => return Err(Error::Config("verify-lemma310 needs experiment.a".into())),
            }
        }
        let masses = MassMultiset::new(&self.system.masses).map_err(|e| Error::Config(e.to_string()))?;
        let params = if kind == Kind::Estimates {
            if masses.len() < 2 {
                return Err(Error::Config("estimates need at least two masses".into()));
            }
            None
        } else {
            let (Some(nu), Some(radius)) = (self.system.nu, self.system.radius) else {
                return Err(Error::Config("system.nu and system.radius are required".into()));
            };
            let p = SystemParams::new(nu, radius, self.system.masses.clone(), self.system.tolerances)
                .map_err(|e| Error::Config(e.to_string()))?;
            Some(p)
        };
        Ok(ResolvedConfig { kind, config: self, params, masses })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub kind: Kind,
    pub config: ExperimentConfig,
    pub params: Option<SystemParams>,
    pub masses: MassMultiset,
}

impl ResolvedConfig {
    fn settings(&self) -> &ExperimentSettings {
        &self.config.experiment
    }

    fn params(&self) -> &SystemParams {
        self.params.as_ref().expect("dynamics suites resolve SystemParams")
    }

    fn runs(&self) -> usize {
        self.settings().runs.expect("resolved")
    }

    pub fn output_dir(&self) -> &Path {
        self.settings().output_dir.as_deref().expect("resolved")
    }
}

/// Draws a random admissible state: positions uniform on the torus with
/// rejection of overlaps, Gaussian velocity components, then
/// [`normalize_state`].
pub fn generate_state_with(params: &SystemParams, rng: &mut ChaCha8Rng) -> Result<PhasePoint> {
    let nu = params.nu;
    let mut q: Vec<f64> = Vec::with_capacity(params.compound_len());
    for i in 0..params.n {
        let mut placed = false;
        for _ in 0..MAX_ATTEMPTS {
            let cand: Vec<f64> = (0..nu).map(|_| rng.random::<f64>()).collect();
            let clear = (0..i).all(|j| norm(&min_image_delta(&cand, &q[j * nu..(j + 1) * nu])) > 2.0 * params.radius);
            if clear {
                q.extend(cand);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::SamplingFailed { attempts: MAX_ATTEMPTS });
        }
    }
    let v: Vec<f64> = (0..params.compound_len()).map(|_| rng.sample(StandardNormal)).collect();
    normalize_state(&q, &v, params)
}

/// [`generate_state_with`] on a ChaCha8 stream seeded by `seed`.
pub fn generate_state(params: &SystemParams, seed: u64) -> Result<PhasePoint> {
    generate_state_with(params, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub limit: f64,
}

fn at_most(name: &str, value: f64, limit: f64) -> Check {
    Check { name: name.into(), passed: value <= limit, value, limit }
}

fn at_least(name: &str, value: f64, limit: f64) -> Check {
    Check { name: name.into(), passed: value >= limit, value, limit }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub kind: Kind,
    pub config: ExperimentConfig,
    pub tolerances: SuiteTolerances,
    pub status: String,
    pub exit_code: i32,
    pub error: Option<String>,
    pub checks: Vec<Check>,
    pub results: serde_json::Value,
}

#[derive(Default)]
struct SuiteOutput {
    checks: Vec<Check>,
    results: serde_json::Value,
    events: Option<Vec<CollisionEvent>>,
    trace: Option<Vec<TraceSample>>,
    certificates: Option<Vec<Certificate>>,
    /// Exit code for outcomes that are not check failures (e.g. unmet hypotheses).
    code: Option<i32>,
}

pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::SingularOrbit { .. } | Error::CollisionFlood { .. } | Error::Grazing { .. } => EXIT_SINGULAR,
        Error::HypothesisUnmet(_)
        | Error::BudgetExhausted { .. }
        | Error::NoConvergence { .. }
        | Error::SamplingFailed { .. }
        | Error::DegenerateSpan => EXIT_UNMET,
        Error::Config(_) | Error::InvalidParams(_) | Error::Parse(_) => EXIT_CONFIG,
        _ => EXIT_VIOLATION,
    }
}

/// Runs a resolved experiment, writing its files into the output directory.
pub fn run(cfg: &ResolvedConfig) -> Result<Report> {
    let outcome = match cfg.kind {
        Kind::Simulate => suite_simulate(cfg),
        Kind::VerifyQ => suite_verify_q(cfg),
        Kind::VerifyProp35 => suite_prop35(cfg),
        Kind::VerifyLemma310 => suite_lemma310(cfg),
        Kind::VerifyCor312 => suite_cor312(cfg),
        Kind::Certificate => suite_certificate(cfg),
        Kind::Estimates => suite_estimates(cfg),
    };
    let dir = cfg.output_dir();
    fs::create_dir_all(dir)?;
    let (out, error) = match outcome {
        Ok(o) => (o, None),
        Err(e) => (SuiteOutput { code: Some(exit_code_for(&e)), ..Default::default() }, Some(e.to_string())),
    };
    if let Some(events) = &out.events {
        write_events_csv(fs::File::create(dir.join("events.csv"))?, events)?;
    }
    if let Some(trace) = &out.trace {
        write_trace_csv(fs::File::create(dir.join("tangent_trace.csv"))?, cfg.params(), trace)?;
    }
    if let Some(certs) = &out.certificates {
        let mut f = fs::File::create(dir.join("certificates.json"))?;
        serde_json::to_writer_pretty(&mut f, certs)?;
        std::io::Write::write_all(&mut f, b"\n")?;
    }
    let all_pass = out.checks.iter().all(|c| c.passed);
    let exit_code = match out.code {
        Some(c) => c,
        None if all_pass => EXIT_PASS,
        None => EXIT_VIOLATION,
    };
    let status = match exit_code {
        EXIT_PASS => "pass",
        EXIT_VIOLATION => "violation",
        EXIT_SINGULAR => "singular-orbit",
        EXIT_UNMET => "hypothesis-unmet",
        _ => "error",
    };
    let mut config = cfg.config.clone();
    config.experiment.output_dir = None;
    let report = Report {
        kind: cfg.kind,
        config,
        tolerances: TOLERANCES,
        status: status.into(),
        exit_code,
        error,
        checks: out.checks,
        results: out.results,
    };
    let mut f = fs::File::create(dir.join("report.json"))?;
    serde_json::to_writer_pretty(&mut f, &report)?;
    std::io::Write::write_all(&mut f, b"\n")?;
    Ok(report)
}

fn energy(params: &SystemParams, v: &[f64]) -> f64 {
    0.5 * params.mass_inner(v, v)
}

fn momentum_norm(params: &SystemParams, v: &[f64]) -> f64 {
    norm(&params.metric().weighted_sum(v))
}

/// Largest per-collision change of `E` and `I`, and the final drifts.
pub fn conservation_defects(params: &SystemParams, seg: &TrajectorySegment) -> Result<[f64; 4]> {
    let mut step_e = 0.0f64;
    let mut step_i = 0.0f64;
    for (k, pre) in seg.contacts.iter().enumerate() {
        let post = seg.post_state(params, k)?;
        step_e = step_e.max((energy(params, &post.v) - energy(params, &pre.v)).abs());
        let dp: Vec<f64> = post.v.iter().zip(&pre.v).map(|(a, b)| a - b).collect();
        step_i = step_i.max(momentum_norm(params, &dp));
    }
    let v = &seg.x_end.v;
    Ok([step_e, step_i, (energy(params, v) - 0.5).abs(), momentum_norm(params, v)])
}

fn suite_simulate(cfg: &ResolvedConfig) -> Result<SuiteOutput> {
    let p = cfg.params();
    let s = cfg.settings();
    let x0 = generate_state(p, s.seed)?;
    let seg = simulate(p, &x0, Stop::Collisions(s.collisions))?;
    let [step_e, step_i, drift_e, drift_i] = conservation_defects(p, &seg)?;
    let tol = p.tolerances.conservation_tol;
    Ok(SuiteOutput {
        checks: vec![
            at_most("energy_drift", drift_e, tol),
            at_most("momentum_drift", drift_i, tol),
            at_most("per_collision_energy", step_e, TOLERANCES.per_collision),
            at_most("per_collision_momentum", step_i, TOLERANCES.per_collision),
        ],
        results: json!({
            "collisions": seg.events.len(),
            "t_end": seg.t_end,
            "min_gap": seg.min_gap(),
            "x0": x0,
            "x_end": seg.x_end,
        }),
        events: Some(seg.events),
        ..Default::default()
    })
}

/// Random tangent vector on the constraint set at `x` with `Q ≥ 0`.
pub fn random_tangent(params: &SystemParams, x: &PhasePoint, rng: &mut ChaCha8Rng) -> TangentVector {
    let len = params.compound_len();
    let metric = params.metric();
    let mut dq: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
    let mut dv: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
    metric.remove_translation(&mut dq);
    metric.remove_translation(&mut dv);
    let s = params.mass_inner(&x.v, &dv) / params.mass_inner(&x.v, &x.v);
    dv.iter_mut().zip(&x.v).for_each(|(d, v)| *d -= s * v);
    if params.mass_inner(&dq, &dv) < 0.0 {
        dv.iter_mut().for_each(|d| *d = -*d);
    }
    TangentVector { dq, dv }
}

/// Slacks of the monotonicity laws along one trace, all relative to `‖w‖²`
/// (or `‖w‖` for the curvature quotient) of the earlier sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QSlacks {
    /// `min (Q_next − Q_prev)`; must stay above `−q_slack`.
    pub q: f64,
    /// `max |ΔQ − Δt‖δv‖²|` within flights.
    pub flight: f64,
    /// `min Δ(⟨δq,δv⟩/‖δq‖)` while `Q > 0`.
    pub quotient: f64,
}

pub fn q_slacks(params: &SystemParams, trace: &[TraceSample]) -> QSlacks {
    let mut out = QSlacks { q: f64::INFINITY, flight: 0.0, quotient: f64::INFINITY };
    for pair in trace.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let shift = 2f64.powi(b.scale_exp - a.scale_exp);
        let na = a.w.norm(params);
        let scale = na * na;
        out.q = out.q.min((b.q * shift * shift - a.q) / scale);
        let in_flight = !(a.side == Side::Pre && b.side == Side::Post) && b.side != Side::Post;
        if in_flight {
            let dv2 = params.mass_inner(&a.w.dv, &a.w.dv);
            out.flight = out.flight.max((b.q - a.q - (b.t - a.t) * dv2).abs() / scale);
        }
        if a.q > 0.0 {
            let za = a.q / a.w.norm_dq(params);
            let zb = b.q * shift / b.w.norm_dq(params);
            out.quotient = out.quotient.min((zb - za) / na);
        }
    }
    out
}

fn suite_verify_q(cfg: &ResolvedConfig) -> Result<SuiteOutput> {
    let p = cfg.params();
    let s = cfg.settings();
    let x0 = generate_state(p, s.seed)?;
    let seg = simulate(p, &x0, Stop::Collisions(s.collisions))?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    rng.set_stream(1);
    let mut worst = QSlacks { q: f64::INFINITY, flight: 0.0, quotient: f64::INFINITY };
    let mut residual = 0.0f64;
    let mut first_trace = None;
    for _ in 0..cfg.runs() {
        let w = random_tangent(p, &x0, &mut rng);
        let mut trace = Vec::new();
        let summary = propagate_along_with(p, &w, &seg, &TraceOptions::default(), |t| trace.push(t.clone()))?;
        residual = residual.max(summary.max_projection_residual);
        let sl = q_slacks(p, &trace);
        worst.q = worst.q.min(sl.q);
        worst.flight = worst.flight.max(sl.flight);
        worst.quotient = worst.quotient.min(sl.quotient);
        first_trace.get_or_insert(trace);
    }
    Ok(SuiteOutput {
        checks: vec![
            at_least("q_monotone", worst.q, -TOLERANCES.q_slack),
            at_most("flight_increment", worst.flight, TOLERANCES.flight_increment),
            at_least("curvature_quotient_monotone", worst.quotient, -TOLERANCES.q_slack),
        ],
        results: json!({
            "collisions": seg.events.len(),
            "seeds": cfg.runs(),
            "min_q_slack": worst.q,
            "max_flight_increment_error": worst.flight,
            "min_quotient_slack": worst.quotient,
            "max_projection_residual": residual,
        }),
        events: Some(seg.events),
        trace: first_trace,
        ..Default::default()
    })
}

fn suite_prop35(cfg: &ResolvedConfig) -> Result<SuiteOutput> {
    let p = cfg.params();
    let s = cfg.settings();
    let x0 = generate_state(p, s.seed)?;
    let runs = cfg.runs();
    // room for `runs` seed collisions (plus degenerate skips) each followed by a full window
    let seg = simulate(p, &x0, Stop::Collisions(s.collisions + 2 * runs))?;
    let mut seeds = 0;
    let mut degenerate = 0;
    let mut min_excess = f64::INFINITY;
    let mut min_sharp_excess = f64::INFINITY;
    let mut min_slack = f64::INFINITY;
    let mut violations = 0;
    let mut first_trace = None;
    let mut k = 0;
    while seeds < runs && k + s.collisions <= seg.events.len() {
        let ev = &seg.events[k];
        let w = match lemma_3_7_seed(p, &seg.contacts[k], ev.pair, SeedMode::Flat) {
            Ok(w) => w,
            Err(Error::DegenerateSpan) => {
                degenerate += 1;
                k += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let window = seg.tail_from(k).head_through(p, s.collisions - 1)?;
        let trace = propagate_along(p, &w, &window, &TraceOptions::default())?;
        let start = trace.iter().position(|t| t.side == Side::Post).expect("window starts with a collision");
        let post = &trace[start];
        let c0 = post.q / post.w.norm_dq(p).powi(2);
        min_excess = min_excess.min(c0 - curvature_lower_bound(ev, p));
        let sharp = curvature_sharp_bound(ev, p);
        min_sharp_excess = min_sharp_excess.min((c0 - sharp) / sharp);
        let report = prop_3_5_check(p, &trace[start..], c0)?;
        min_slack = min_slack.min(report.min_slack);
        violations += report.violations;
        first_trace.get_or_insert(trace);
        seeds += 1;
        k += 1;
    }
    if seeds < runs {
        return Err(Error::HypothesisUnmet(format!("only {seeds} non-degenerate seed collisions")));
    }
    Ok(SuiteOutput {
        checks: vec![
            at_most("growth_violations", violations as f64, 0.0),
            at_least("growth_min_slack", min_slack, -TOLERANCES.growth),
            at_least("curvature_bound_excess", min_excess, -TOLERANCES.curvature),
            at_least("sharp_curvature_bound_relative_excess", min_sharp_excess, -TOLERANCES.curvature),
        ],
        results: json!({
            "seeds": seeds,
            "collisions_per_trace": s.collisions,
            "degenerate_skipped": degenerate,
            "violations": violations,
            "min_slack": min_slack,
            "min_curvature_excess": min_excess,
            "min_sharp_relative_excess": min_sharp_excess,
        }),
        events: Some(seg.events),
        trace: first_trace,
        ..Default::default()
    })
}

fn suite_lemma310(cfg: &ResolvedConfig) -> Result<SuiteOutput> {
    let p = cfg.params();
    let s = cfg.settings();
    let a = s.a.expect("resolved");
    let bound = lemma_3_10_bound(a, &cfg.masses);
    let mut worst: f64 = 0.0;
    let mut excess = f64::NEG_INFINITY;
    let mut draws = 0usize;
    for run in 0..cfg.runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed.wrapping_add(run as u64));
        let x0 = (0..MAX_ATTEMPTS)
            .map(|_| generate_state_with(p, &mut rng))
            .find(|x| x.as_ref().map_or(true, |x| max_relative_speed(x, p) <= a))
            .ok_or_else(|| Error::HypothesisUnmet(format!("no state with relative speeds ≤ {a} in {MAX_ATTEMPTS} draws")))??;
        draws += 1;
        let seg = simulate(p, &x0, Stop::Collisions(s.collisions))?;
        for k in 0..seg.events.len() {
            let speed = max_relative_speed(&seg.post_state(p, k)?, p);
            worst = worst.max(speed);
            excess = excess.max(speed - bound);
        }
    }
    Ok(SuiteOutput {
        checks: vec![at_most("spread_bound_excess", excess, TOLERANCES.spread)],
        results: json!({
            "a": a,
            "bound": bound,
            "runs": draws,
            "max_relative_speed": worst,
        }),
        ..Default::default()
    })
}

fn suite_cor312(cfg: &ResolvedConfig) -> Result<SuiteOutput> {
    let p = cfg.params();
    let s = cfg.settings();
    let g = g_threshold(&cfg.masses);
    let mut counterexamples = 0;
    let mut unconnected = 0;
    let mut min_best = f64::INFINITY;
    let mut f_bound_excess = f64::NEG_INFINITY;
    let mut prefix_lengths = Vec::new();
    for run in 0..cfg.runs() {
        let x0 = generate_state(p, s.seed.wrapping_add(run as u64))?;
        let seg = simulate(p, &x0, Stop::Collisions(s.collisions))?;
        let seq = CollisionSequence::from_events(p.n, &seg.events)?;
        let Some(prefix) = seq.first_connected_prefix() else {
            unconnected += 1;
            continue;
        };
        let trimmed = &seg.events[..prefix.k];
        let best = trimmed.iter().map(|e| e.rel_speed).fold(0.0, f64::max);
        min_best = min_best.min(best);
        if best < g {
            counterexamples += 1;
        }
        // with a = largest collision speed, every relative speed stays below f(a)
        let f = f_bound(best, &cfg.masses);
        let mut top = max_relative_speed(&x0, p);
        for k in 0..prefix.k {
            top = top.max(max_relative_speed(&seg.post_state(p, k)?, p));
        }
        f_bound_excess = f_bound_excess.max(top - f);
        prefix_lengths.push(prefix.k);
    }
    let code = (unconnected > 0).then_some(EXIT_UNMET).filter(|_| counterexamples == 0);
    Ok(SuiteOutput {
        checks: vec![
            at_most("fast_collision_counterexamples", counterexamples as f64, 0.0),
            at_least("min_max_rel_speed_over_g", min_best / g, 1.0),
            at_most("f_bound_excess", f_bound_excess, TOLERANCES.f_bound),
        ],
        results: json!({
            "g_threshold": g,
            "segments": prefix_lengths.len(),
            "never_connected": unconnected,
            "counterexamples": counterexamples,
            "min_max_rel_speed": min_best,
            "prefix_lengths": prefix_lengths,
        }),
        code,
        ..Default::default()
    })
}

fn suite_certificate(cfg: &ResolvedConfig) -> Result<SuiteOutput> {
    let p = cfg.params();
    let s = cfg.settings();
    let x0 = generate_state(p, s.seed)?;
    let opts = CertificateOptions { budget: s.collisions, selection: s.selection, richness_window: s.richness_window };
    let exp = expansion_certificate(p, &x0, s.l, &opts)?;
    let con = contraction_certificate(p, &x0, s.l, &opts)?;
    let dual = expansion_certificate(p, &x0.time_reverse(), s.l, &opts)?;
    let ve = verify_certificate(p, &exp)?;
    let vc = verify_certificate(p, &con)?;
    let duality = (con.ratio * dual.ratio - 1.0).abs();
    Ok(SuiteOutput {
        checks: vec![
            Check { name: "expansion_verified".into(), passed: ve.passed, value: ve.ratio, limit: s.l },
            Check { name: "contraction_verified".into(), passed: vc.passed, value: vc.ratio, limit: 1.0 / s.l },
            at_most("duality", duality, TOLERANCES.duality),
        ],
        results: json!({
            "expansion": { "t": exp.t, "ratio": exp.ratio, "event_index": exp.event_index, "verification": ve },
            "contraction": { "t": con.t, "ratio": con.ratio, "event_index": con.event_index, "verification": vc },
            "duality_error": duality,
            "g_threshold": exp.g_threshold,
        }),
        certificates: Some(vec![exp, con]),
        ..Default::default()
    })
}

fn suite_estimates(cfg: &ResolvedConfig) -> Result<SuiteOutput> {
    let ms = &cfg.masses;
    let f1 = f_bound(1.0, ms);
    let g = g_threshold(ms);
    let g_bis = g_threshold_bisection(ms);
    let limit = ms.total().powf(-0.5);
    Ok(SuiteOutput {
        checks: vec![
            Check { name: "f_at_g_below_limit".into(), passed: f_bound(g, ms) < limit, value: f_bound(g, ms), limit },
            at_most("bisection_agreement", (g - g_bis).abs() / g, 1e-12),
        ],
        results: json!({
            "masses": ms.masses(),
            "f1": f1,
            "g_threshold": g,
            "g_bisection": g_bis,
            "spread_factor": ms.spread_factor(),
        }),
        ..Default::default()
    })
}

#[derive(Debug, Parser)]
#[command(name = "hardball", version, about = "Hard-ball billiards on the torus: simulation, tangent dynamics and certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate an orbit and check conservation laws.
    Simulate(RunArgs),
    /// Check monotonicity of Q along random tangent vectors.
    VerifyQ(RunArgs),
    /// Check linear growth of flat seeds and the post-collision curvature bound.
    VerifyProp35(RunArgs),
    /// Check the relative-speed spread bound on seeded runs.
    VerifyLemma310(RunArgs),
    /// Check that connected segments contain a collision at speed ≥ G.
    VerifyCor312(RunArgs),
    /// Find and re-verify expansion and contraction certificates.
    Certificate(RunArgs),
    /// Print f(1), G and the spread factor for a mass list.
    Estimates(EstimateArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[arg(long, required_unless_present = "masses")]
    config: Option<PathBuf>,
    /// Comma-separated masses, used instead of a config file.
    #[arg(long, value_delimiter = ',', conflicts_with = "config")]
    masses: Option<Vec<f64>>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    quiet: bool,
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    ExperimentConfig::from_toml(&text)
}

/// Parses `args`, runs the experiment and returns the process exit code.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
        }
    };
    let (kind, config, output, seed, quiet) = match cli.command {
        Command::Estimates(a) => {
            let config = match (a.config, a.masses) {
                (Some(path), _) => load(&path),
                (None, Some(masses)) => Ok(ExperimentConfig {
                    system: SystemConfig { nu: None, radius: None, masses, tolerances: ToleranceSet::default() },
                    experiment: ExperimentSettings { output_dir: Some(PathBuf::from("hardball-out")), ..Default::default() },
                }),
                (None, None) => unreachable!("clap requires one of them"),
            };
            (Kind::Estimates, config, a.output, a.seed, a.quiet)
        }
        Command::Simulate(a) => (Kind::Simulate, load(&a.config), a.output, a.seed, a.quiet),
        Command::VerifyQ(a) => (Kind::VerifyQ, load(&a.config), a.output, a.seed, a.quiet),
        Command::VerifyProp35(a) => (Kind::VerifyProp35, load(&a.config), a.output, a.seed, a.quiet),
        Command::VerifyLemma310(a) => (Kind::VerifyLemma310, load(&a.config), a.output, a.seed, a.quiet),
        Command::VerifyCor312(a) => (Kind::VerifyCor312, load(&a.config), a.output, a.seed, a.quiet),
        Command::Certificate(a) => (Kind::Certificate, load(&a.config), a.output, a.seed, a.quiet),
    };
    let resolved = match config.and_then(|c| c.resolve(kind, seed, output)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("hardball: {e}");
            return EXIT_CONFIG;
        }
    };
    match run(&resolved) {
        Ok(report) => {
            if !quiet {
                for c in &report.checks {
                    let tag = if c.passed { "PASS" } else { "FAIL" };
                    println!("{tag} {} = {:e} (limit {:e})", c.name, c.value, c.limit);
                }
                if let Some(e) = &report.error {
                    println!("error: {e}");
                }
                println!("{} -> {}", report.status, resolved.output_dir().display());
            }
            report.exit_code
        }
        Err(e) => {
            eprintln!("hardball: {e}");
            exit_code_for(&e).max(EXIT_VIOLATION)
        }
    }
}
