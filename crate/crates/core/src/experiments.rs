//! Parameterized sweeps: tunneling dynamics under a sinusoidal drive,
//! single-passage transition probability versus adiabaticity, two-passage
//! (Stückelberg) fringes with and without the Gaussian bath, FID, and a
//! numerical check of the Stokes phase. Plus finite-shot readout emulation.
//!
//! Sweep points run in parallel and are assembled in sweep order.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use rayon::prelude::*;

use crate::analysis::{fit_gaussian_decay, visibility_from_fringes};
use crate::analytic::{
    self, adiabaticity_from_sweep, lz_probability, lz_probability_from_adiabaticity,
    lzs_probability, stokes_phase_for, stueckelberg_phase, SPLITTER_GUARD,
};
use crate::error::{Error, Result};
use crate::hamiltonian::TwoLevelHamiltonian;
use crate::noise::{
    ensemble_average_stream, gaussian_decay, simulate_fid, simulate_fid_ensemble, t2_star,
    visibility_decay_oracle, EnsembleSpec, GaussianBath,
};
use crate::propagator::{dressed_population, dressed_state, evolve, propagate, StepperConfig};
use crate::qcore::{Frequency, Level, StateVector, Time, Waveform};

/// Diabatic margin on each side of a crossing, in units of Δ.
pub const DEFAULT_WINDOW: f64 = 20.0;

/// Offset mixed into the master seed for readout draws, keeping them
/// independent of the bath samples drawn from the same seed.
const READOUT_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub sweep_name: String,
    pub x_label: String,
    columns: Vec<String>,
    rows: Vec<(f64, Vec<f64>)>,
    pub metadata: BTreeMap<String, String>,
    /// Scalars derived from the whole sweep (fitted visibility, β, …).
    pub summary: BTreeMap<String, f64>,
}

impl ExperimentResult {
    pub fn new(sweep_name: &str, x_label: &str, columns: &[&str]) -> Self {
        ExperimentResult {
            sweep_name: sweep_name.to_string(),
            x_label: x_label.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            metadata: BTreeMap::new(),
            summary: BTreeMap::new(),
        }
    }

    pub fn push_row(&mut self, x: f64, values: Vec<f64>) -> Result<()> {
        if values.len() != self.columns.len() {
            return Err(Error::Result(format!(
                "row has {} values for {} columns",
                values.len(),
                self.columns.len()
            )));
        }
        if let Some(&(last, _)) = self.rows.last() {
            if !(x > last) {
                return Err(Error::Result(format!(
                    "x must increase strictly: {x} after {last}"
                )));
            }
        }
        self.rows.push((x, values));
        Ok(())
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[(f64, Vec<f64>)] {
        &self.rows
    }

    pub fn xs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.0).collect()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r.1[j]).collect())
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }

    /// Append a column computed from each row.
    pub fn add_column(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.rows.len() {
            return Err(Error::Result(format!(
                "column `{name}` has {} values for {} rows",
                values.len(),
                self.rows.len()
            )));
        }
        self.columns.push(name.to_string());
        for (row, v) in self.rows.iter_mut().zip(values) {
            row.1.push(v);
        }
        Ok(())
    }
}

pub fn describe_stepper(cfg: &StepperConfig) -> String {
    format!(
        "dt_max={} substep_refinement={} tolerance={} record_stride={}",
        cfg.dt_max.value(),
        cfg.substep_refinement,
        cfg.tolerance,
        cfg.record_stride
    )
}

pub fn describe_ensemble(spec: &EnsembleSpec) -> String {
    match spec {
        EnsembleSpec::MonteCarlo { n_samples, seed } => {
            format!("monte-carlo n_samples={n_samples} seed={seed}")
        }
        EnsembleSpec::GaussHermite { order } => format!("gauss-hermite order={order}"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadoutModel {
    pub n_cycles: u64,
    pub contrast: f64,
    pub baseline: f64,
}

impl Default for ReadoutModel {
    fn default() -> Self {
        ReadoutModel {
            n_cycles: 100_000,
            contrast: 1.0,
            baseline: 0.0,
        }
    }
}

impl ReadoutModel {
    pub fn validate(&self) -> Result<()> {
        if self.n_cycles < 1 {
            return Err(Error::invalid("n_cycles", "n_cycles must be >= 1"));
        }
        if !(self.contrast > 0.0 && self.contrast <= 1.0) {
            return Err(Error::invalid("contrast", "contrast must be in (0, 1]"));
        }
        if !(self.baseline >= 0.0) || self.baseline + self.contrast > 1.0 {
            return Err(Error::invalid(
                "baseline",
                "need baseline >= 0 and baseline + contrast <= 1",
            ));
        }
        Ok(())
    }
}

/// Estimate of `p` from `n_cycles` shots and its binomial standard error.
pub fn apply_readout(p: f64, model: &ReadoutModel, seed: u64) -> Result<(f64, f64)> {
    apply_readout_stream(p, model, seed, 0)
}

pub fn apply_readout_stream(
    p: f64,
    model: &ReadoutModel,
    seed: u64,
    stream: u64,
) -> Result<(f64, f64)> {
    model.validate()?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(
            "p",
            format!("probability must be in [0, 1], got {p}"),
        ));
    }
    let q = (model.baseline + model.contrast * p).clamp(0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(READOUT_SEED_OFFSET));
    rng.set_stream(stream);
    let n = model.n_cycles;
    let k = Binomial::new(n, q)
        .map_err(|e| Error::invalid("p", e.to_string()))?
        .sample(&mut rng);
    let q_hat = k as f64 / n as f64;
    let estimate = (q_hat - model.baseline) / model.contrast;
    let stderr = (q_hat * (1.0 - q_hat) / n as f64).sqrt() / model.contrast;
    Ok((estimate, stderr))
}

/// Add `<column>_readout` and `<column>_readout_stderr`, one readout
/// stream per row.
pub fn add_readout_columns(
    result: &mut ExperimentResult,
    column: &str,
    model: &ReadoutModel,
    seed: u64,
) -> Result<()> {
    let ps = result
        .column(column)
        .ok_or_else(|| Error::Result(format!("no column `{column}`")))?;
    let draws = ps
        .iter()
        .enumerate()
        .map(|(k, &p)| apply_readout_stream(p.clamp(0.0, 1.0), model, seed, k as u64))
        .collect::<Result<Vec<_>>>()?;
    result.add_column(
        &format!("{column}_readout"),
        draws.iter().map(|d| d.0).collect(),
    )?;
    result.add_column(
        &format!("{column}_readout_stderr"),
        draws.iter().map(|d| d.1).collect(),
    )?;
    result.metadata.insert(
        "readout".into(),
        format!(
            "n_cycles={} contrast={} baseline={}",
            model.n_cycles, model.contrast, model.baseline
        ),
    );
    Ok(())
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("{name} must be > 0, got {v}")))
    }
}

fn timestamp() -> Option<String> {
    std::env::var("SOURCE_DATE_EPOCH").ok()
}

fn stamp(mut r: ExperimentResult, stepper: &StepperConfig) -> ExperimentResult {
    r.metadata
        .insert("stepper".into(), describe_stepper(stepper));
    if let Some(ts) = timestamp() {
        r.metadata.insert("timestamp".into(), ts);
    }
    r
}

// ---------------------------------------------------------------------------
// Tunneling dynamics under ε(t) = ε·cos(2πwt)

#[derive(Debug, Clone, PartialEq)]
pub struct LzDynamicsSpec {
    pub delta: Frequency,
    pub amplitude: Frequency,
    pub epsilon0: Frequency,
    /// Drive frequencies w, MHz.
    pub frequencies: Vec<f64>,
    /// Length of each run in drive periods.
    pub cycles: f64,
    pub samples_per_cycle: usize,
    pub stepper: StepperConfig,
}

/// P₀ on a grid of drive phase (x = t·w, in cycles) for each w, starting in
/// |0⟩ at the drive maximum. Column `p0_<i>` belongs to `frequencies[i]`;
/// the summary holds each run's adiabaticity and its minimum P₀ over every
/// integration step.
pub fn run_lz_dynamics(spec: &LzDynamicsSpec) -> Result<ExperimentResult> {
    spec.stepper.validate()?;
    check_positive("amplitude", spec.amplitude.value())?;
    check_positive("cycles", spec.cycles)?;
    if spec.samples_per_cycle < 1 {
        return Err(Error::invalid(
            "samples_per_cycle",
            "need at least one sample per cycle",
        ));
    }
    if spec.frequencies.is_empty() {
        return Err(Error::invalid(
            "frequencies",
            "need at least one drive frequency",
        ));
    }
    for &w in &spec.frequencies {
        check_positive("frequency", w)?;
    }
    let n_samples = (spec.cycles * spec.samples_per_cycle as f64).round() as usize;
    let grid: Vec<f64> = (0..=n_samples)
        .map(|k| k as f64 / spec.samples_per_cycle as f64)
        .collect();

    let runs = spec
        .frequencies
        .par_iter()
        .map(|&w| {
            let drive = Waveform::sinusoid(spec.amplitude.value(), w, 0.0)?;
            let h = TwoLevelHamiltonian::new(spec.delta, spec.epsilon0, drive)?;
            let mut s = StateVector::ground();
            let mut p0 = vec![1.0];
            let mut min_p0: f64 = 1.0;
            for pair in grid.windows(2) {
                let (a, b) = (pair[0] / w, pair[1] / w);
                let traj = propagate(&h, &s, Time::us(a), Time::us(b), &spec.stepper)?;
                min_p0 = traj
                    .populations(Level::Zero)
                    .iter()
                    .copied()
                    .fold(min_p0, f64::min);
                s = traj.final_state();
                p0.push(s.population(Level::Zero));
            }
            Ok((p0, min_p0))
        })
        .collect::<Result<Vec<_>>>()?;

    let names: Vec<String> = (0..spec.frequencies.len())
        .map(|i| format!("p0_{i}"))
        .collect();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut out = ExperimentResult::new("lz-dynamics", "cycles", &name_refs);
    for (k, &x) in grid.iter().enumerate() {
        out.push_row(x, runs.iter().map(|r| r.0[k]).collect())?;
    }
    for (i, (&w, run)) in spec.frequencies.iter().zip(&runs).enumerate() {
        let drive = Waveform::sinusoid(spec.amplitude.value(), w, 0.0)?;
        if let Ok(d) = analytic::adiabaticity(
            spec.delta,
            &drive,
            spec.epsilon0,
            analytic::AdiabaticityConvention::SweepRate,
        ) {
            out.summary.insert(format!("delta_{i}"), d);
        }
        out.summary.insert(format!("w_{i}"), w);
        out.summary.insert(format!("min_p0_{i}"), run.1);
    }
    let out = out
        .with_meta("delta", spec.delta.value())
        .with_meta("amplitude", spec.amplitude.value())
        .with_meta("epsilon0", spec.epsilon0.value())
        .with_meta(
            "waveform",
            format!(
                "sinusoid amplitude={} frequencies={:?}",
                spec.amplitude.value(),
                spec.frequencies
            ),
        );
    Ok(stamp(out, &spec.stepper))
}

// ---------------------------------------------------------------------------
// Single passage

/// Dressed-state survival for one linear sweep through the crossing.
///
/// The system starts in the instantaneous eigenstate connected to |0⟩ a
/// distance `window·Δ` before the crossing and is read out in the same
/// diabatic branch `window·Δ` after it. Projecting on eigenstates rather
/// than bare levels removes the slowly decaying finite-window ringing.
pub fn simulate_single_passage(
    delta: Frequency,
    v: f64,
    window: f64,
    stepper: &StepperConfig,
) -> Result<f64> {
    check_positive("delta", delta.value())?;
    check_positive("velocity", v)?;
    check_positive("window", window)?;
    let h = TwoLevelHamiltonian::new(delta, Frequency::ZERO, Waveform::linear_ramp(v, 0.0)?)?;
    let half = window * delta.value() / v;
    let (t0, t1) = (Time::us(-half), Time::us(half));
    let s0 = dressed_state(&h, t0, Level::Zero);
    let s1 = evolve(&h, &s0, t0, t1, stepper)?.state;
    Ok(dressed_population(&h, t1, &s1, Level::Zero))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PtSweepSpec {
    pub delta: Frequency,
    /// Sweep velocities, MHz/µs.
    pub velocities: Vec<f64>,
    pub window: f64,
    pub stepper: StepperConfig,
}

/// Simulated versus analytic P_T with x = δ (ascending).
pub fn run_pt_sweep(spec: &PtSweepSpec) -> Result<ExperimentResult> {
    spec.stepper.validate()?;
    check_positive("delta", spec.delta.value())?;
    if spec.window < DEFAULT_WINDOW {
        return Err(Error::invalid(
            "window",
            format!("window must be >= {DEFAULT_WINDOW} gaps"),
        ));
    }
    if spec.velocities.is_empty() {
        return Err(Error::invalid("velocities", "need at least one velocity"));
    }
    let mut vs = spec.velocities.clone();
    for &v in &vs {
        check_positive("velocity", v)?;
    }
    // δ ∝ 1/v: descending velocity gives ascending δ
    vs.sort_by(|a, b| b.total_cmp(a));
    let rows = vs
        .par_iter()
        .map(|&v| {
            let d = adiabaticity_from_sweep(spec.delta, v);
            let sim = simulate_single_passage(spec.delta, v, spec.window, &spec.stepper)?;
            let exact = lz_probability(spec.delta, v)?;
            Ok((d, vec![sim, exact, (sim - exact).abs() / exact, v]))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = ExperimentResult::new(
        "pt-sweep",
        "delta",
        &["p_sim", "p_analytic", "rel_dev", "velocity"],
    );
    for (d, vals) in rows {
        out.push_row(d, vals)?;
    }
    let out = out
        .with_meta("delta_gap", spec.delta.value())
        .with_meta("window", spec.window)
        .with_meta("waveform", "linear-ramp t_origin=0");
    Ok(stamp(out, &spec.stepper))
}

/// Sweep velocity for a given adiabaticity at gap Δ.
pub fn velocity_for(delta_gap: Frequency, adiabaticity: f64) -> f64 {
    analytic::sweep_rate_for(delta_gap, adiabaticity)
}

// ---------------------------------------------------------------------------
// Two passages

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub delta: Frequency,
    pub p_t: f64,
    /// The same splitter measured by one propagation.
    pub p_t_simulated: f64,
}

/// Gap Δ giving single-passage `target` at sweep rate `v`: bisection on the
/// analytic formula, then one propagation as a check.
pub fn calibrate_gap(
    v: f64,
    target: f64,
    window: f64,
    stepper: &StepperConfig,
) -> Result<Calibration> {
    check_positive("velocity", v)?;
    if !(target > SPLITTER_GUARD && target < 1.0 - SPLITTER_GUARD) {
        return Err(Error::DegenerateSplitter { p_t: target });
    }
    let p = |g: f64| lz_probability(Frequency::mhz(g), v).expect("v > 0 checked");
    let (mut lo, mut hi) = (0.0, 1.0);
    while p(hi) > target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if p(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let delta = Frequency::mhz(0.5 * (lo + hi));
    let p_t = p(delta.value());
    let p_t_simulated = simulate_single_passage(delta, v, window, stepper)?;
    if !(p_t_simulated > SPLITTER_GUARD && p_t_simulated < 1.0 - SPLITTER_GUARD) {
        return Err(Error::DegenerateSplitter { p_t: p_t_simulated });
    }
    if !(0.4..=0.6).contains(&p_t_simulated) {
        log::warn!("calibrated splitter P_T = {p_t_simulated:.4} is far from balanced");
    }
    Ok(Calibration {
        delta,
        p_t,
        p_t_simulated,
    })
}

/// Out-and-back triangle through the crossing: from `−window·Δ` up to `peak`
/// and back at speed `v`, so the crossings at ε₀ are `2(peak − ε₀)/v` apart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleDrive {
    pub velocity: f64,
    pub start: f64,
    pub peak: f64,
}

impl TriangleDrive {
    /// Triangle whose crossings at ε₀ = 0 are `tau` apart.
    pub fn for_duration(delta: Frequency, velocity: f64, tau: f64, window: f64) -> Self {
        TriangleDrive {
            velocity,
            start: -window * delta.value(),
            peak: 0.5 * velocity * tau,
        }
    }

    pub fn waveform(&self) -> Result<Waveform> {
        Waveform::triangle(self.start, self.peak, self.velocity)
    }

    pub fn duration(&self) -> f64 {
        2.0 * (self.peak - self.start) / self.velocity
    }
}

/// Transition probability after a double passage: start in the eigenstate
/// connected to |0⟩ at `t0` and measure the population that left that
/// branch by `t1`.
pub fn simulate_double_passage(
    h: &TwoLevelHamiltonian,
    t0: Time,
    t1: Time,
    stepper: &StepperConfig,
) -> Result<f64> {
    let s0 = dressed_state(h, t0, Level::Zero);
    let s1 = evolve(h, &s0, t0, t1, stepper)?.state;
    Ok(1.0 - dressed_population(h, t1, &s1, Level::Zero))
}

#[derive(Debug, Clone, PartialEq)]
pub enum StueckelbergMode {
    /// Fringes versus ε₀ for one drive.
    Detuning { epsilon0: Vec<f64> },
    /// Visibility versus crossing separation τ; each τ gets its own ε₀ scan
    /// of `points` samples covering `fringes` periods around ε₀ = 0.
    Duration {
        taus: Vec<f64>,
        points: usize,
        fringes: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum DoublePassageDrive {
    /// Triangle at speed `velocity` and peak set by `tau` (detuning mode) or
    /// by each swept τ (duration mode).
    Triangle { velocity: f64, tau: f64 },
    /// Arbitrary drive over `[t0, t1]`; detuning mode only.
    Custom {
        waveform: Waveform,
        t0: f64,
        t1: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StueckelbergSpec {
    /// Fixed gap; `None` calibrates Δ to `target_p_t` (triangle drives).
    pub delta: Option<Frequency>,
    pub target_p_t: f64,
    pub drive: DoublePassageDrive,
    pub window: f64,
    pub mode: StueckelbergMode,
    pub bath: GaussianBath,
    pub ensemble: EnsembleSpec,
    pub stepper: StepperConfig,
}

fn check_sorted(name: &'static str, xs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::invalid(name, "sweep list is empty"));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) || xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid(
            name,
            "sweep values must be finite and strictly increasing",
        ));
    }
    Ok(())
}

/// Ensemble-averaged P for one drive and crossing position.
fn averaged_double_passage(
    base: &TwoLevelHamiltonian,
    t0: f64,
    t1: f64,
    spec: &StueckelbergSpec,
    stream: u64,
) -> Result<(f64, Option<f64>)> {
    let avg = ensemble_average_stream(
        |b| {
            simulate_double_passage(
                &base.with_bias(b),
                Time::us(t0),
                Time::us(t1),
                &spec.stepper,
            )
        },
        &spec.bath,
        &spec.ensemble,
        stream,
    )?;
    Ok((avg.mean, avg.stderr))
}

/// Stückelberg fringes (detuning mode) or visibility decay (duration mode).
pub fn run_stueckelberg(spec: &StueckelbergSpec) -> Result<ExperimentResult> {
    spec.stepper.validate()?;
    spec.ensemble.validate()?;
    check_positive("window", spec.window)?;

    let (delta, p_t, p_t_sim) = match (&spec.delta, &spec.drive) {
        (Some(d), drive) => {
            check_positive("delta", d.value())?;
            let p_sim = match drive {
                DoublePassageDrive::Triangle { velocity, .. } => {
                    simulate_single_passage(*d, *velocity, spec.window, &spec.stepper)?
                }
                DoublePassageDrive::Custom { .. } => f64::NAN,
            };
            let p = match drive {
                DoublePassageDrive::Triangle { velocity, .. } => lz_probability(*d, *velocity)?,
                DoublePassageDrive::Custom { .. } => f64::NAN,
            };
            (*d, p, p_sim)
        }
        (None, DoublePassageDrive::Triangle { velocity, .. }) => {
            let c = calibrate_gap(*velocity, spec.target_p_t, spec.window, &spec.stepper)?;
            (c.delta, c.p_t, c.p_t_simulated)
        }
        (None, DoublePassageDrive::Custom { .. }) => {
            return Err(Error::invalid(
                "delta",
                "a custom drive needs an explicit delta",
            ));
        }
    };

    let out = match &spec.mode {
        StueckelbergMode::Detuning { epsilon0 } => detuning_sweep(spec, delta, epsilon0)?,
        StueckelbergMode::Duration {
            taus,
            points,
            fringes,
        } => {
            let velocity = match spec.drive {
                DoublePassageDrive::Triangle { velocity, .. } => velocity,
                DoublePassageDrive::Custom { .. } => {
                    return Err(Error::invalid(
                        "drive",
                        "duration sweeps need a triangle drive",
                    ));
                }
            };
            duration_sweep(spec, delta, velocity, p_t, taus, *points, *fringes)?
        }
    };
    let mut out = out
        .with_meta("delta", delta.value())
        .with_meta("beta", spec.bath.beta.value())
        .with_meta("ensemble", describe_ensemble(&spec.ensemble))
        .with_meta("window", spec.window);
    out.summary.insert("delta".into(), delta.value());
    out.summary.insert("p_t".into(), p_t);
    out.summary.insert("p_t_simulated".into(), p_t_sim);

    if let StueckelbergMode::Detuning { .. } = spec.mode {
        let p_ref = if p_t.is_finite() { p_t } else { p_t_sim };
        if p_ref.is_finite() {
            if let Ok((v, fit)) =
                visibility_from_fringes(&out.xs(), &out.column("p").unwrap(), p_ref)
            {
                out.summary.insert("visibility".into(), v.value);
                out.summary.insert("visibility_stderr".into(), v.stderr);
                out.summary
                    .insert("fringe_frequency".into(), fit.value("frequency"));
            }
        }
    }
    Ok(stamp(out, &spec.stepper))
}

fn detuning_sweep(
    spec: &StueckelbergSpec,
    delta: Frequency,
    epsilon0: &[f64],
) -> Result<ExperimentResult> {
    check_sorted("epsilon0", epsilon0)?;
    let (waveform, t0, t1) = match &spec.drive {
        DoublePassageDrive::Triangle { velocity, tau } => {
            check_positive("velocity", *velocity)?;
            check_positive("tau", *tau)?;
            let tri = TriangleDrive::for_duration(delta, *velocity, *tau, spec.window);
            (tri.waveform()?, 0.0, tri.duration())
        }
        DoublePassageDrive::Custom { waveform, t0, t1 } => {
            if !(t1 > t0) {
                return Err(Error::invalid("t1", "need t1 > t0"));
            }
            (waveform.clone(), *t0, *t1)
        }
    };
    let base = TwoLevelHamiltonian::new(delta, Frequency::ZERO, waveform.clone())?;
    let rows = epsilon0
        .par_iter()
        .enumerate()
        .map(|(k, &e0)| {
            let h = base.with_epsilon0(Frequency::mhz(e0));
            let pred = analytic::predict_double_passage(&h, Time::us(t0), Time::us(t1))?;
            let (p, se) = averaged_double_passage(&h, t0, t1, spec, k as u64)?;
            let mut vals = vec![p, pred.p, pred.theta12, pred.p_t];
            if let Some(se) = se {
                vals.push(se);
            }
            Ok((e0, vals))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cols = vec!["p", "p_analytic", "theta12", "p_t_analytic"];
    if spec.ensemble.is_monte_carlo() {
        cols.push("p_stderr");
    }
    let mut out = ExperimentResult::new("lzs", "epsilon0", &cols);
    for (x, vals) in rows {
        out.push_row(x, vals)?;
    }
    Ok(out.with_meta("waveform", format!("{waveform} window=[{t0}, {t1}]")))
}

fn duration_sweep(
    spec: &StueckelbergSpec,
    delta: Frequency,
    velocity: f64,
    p_t: f64,
    taus: &[f64],
    points: usize,
    fringes: f64,
) -> Result<ExperimentResult> {
    check_sorted("taus", taus)?;
    check_positive("velocity", velocity)?;
    check_positive("fringes", fringes)?;
    if points < 8 {
        return Err(Error::invalid(
            "points",
            "a fringe scan needs at least 8 points",
        ));
    }
    for &tau in taus {
        check_positive("tau", tau)?;
    }
    let rows = taus
        .par_iter()
        .enumerate()
        .map(|(i, &tau)| {
            let tri = TriangleDrive::for_duration(delta, velocity, tau, spec.window);
            let base = TwoLevelHamiltonian::new(delta, Frequency::ZERO, tri.waveform()?)?;
            // fringe period in ε₀ is 1/τ
            let half_span = 0.5 * fringes / tau;
            let scan: Vec<f64> = (0..points)
                .map(|j| -half_span + 2.0 * half_span * j as f64 / (points - 1) as f64)
                .collect();
            let ps = scan
                .par_iter()
                .enumerate()
                .map(|(j, &e0)| {
                    let h = base.with_epsilon0(Frequency::mhz(e0));
                    let stream = ((i as u64) << 32) | j as u64;
                    averaged_double_passage(&h, 0.0, tri.duration(), spec, stream).map(|r| r.0)
                })
                .collect::<Result<Vec<_>>>()?;
            let (v, fit) = visibility_from_fringes(&scan, &ps, p_t)?;
            Ok((
                tau,
                vec![
                    v.value,
                    v.stderr,
                    visibility_decay_oracle(&spec.bath, Time::us(tau)),
                    fit.value("frequency"),
                    fit.value("offset"),
                ],
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = ExperimentResult::new(
        "visibility-decay",
        "tau",
        &[
            "visibility",
            "visibility_stderr",
            "oracle",
            "fringe_frequency",
            "fringe_offset",
        ],
    );
    for (x, vals) in rows {
        out.push_row(x, vals)?;
    }
    let t2 = t2_star(&spec.bath);
    if t2.is_finite() {
        out.summary.insert("t2_star".into(), t2);
    }
    Ok(out
        .with_meta(
            "waveform",
            format!(
                "triangle velocity={velocity} start={}",
                -spec.window * delta.value()
            ),
        )
        .with_meta("scan", format!("points={points} fringes={fringes}")))
}

// ---------------------------------------------------------------------------
// FID

#[derive(Debug, Clone, PartialEq)]
pub struct FidSpec {
    pub bath: GaussianBath,
    pub times: Vec<f64>,
    pub ensemble: EnsembleSpec,
    /// Standard deviation of additive Gaussian noise on the fitted signal.
    pub noise: f64,
    pub seed: u64,
}

/// Closed-form and ensemble FID with a Gaussian-decay fit of the (optionally
/// noisy) closed-form signal.
pub fn run_fid(spec: &FidSpec) -> Result<ExperimentResult> {
    if !(spec.noise >= 0.0) {
        return Err(Error::invalid("noise", "noise must be >= 0"));
    }
    let grid: Vec<Time> = spec.times.iter().map(|&t| Time::us(t)).collect();
    let closed = simulate_fid(&spec.bath, &grid)?;
    let ens = simulate_fid_ensemble(&spec.bath, &grid, &spec.ensemble)?;
    let measured: Vec<f64> = if spec.noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let d = Normal::new(0.0, spec.noise).map_err(|e| Error::invalid("noise", e.to_string()))?;
        closed.iter().map(|s| s + d.sample(&mut rng)).collect()
    } else {
        closed.clone()
    };
    let mut cols = vec!["signal", "ensemble", "measured"];
    if spec.ensemble.is_monte_carlo() {
        cols.push("ensemble_stderr");
    }
    let mut out = ExperimentResult::new("fid", "t", &cols);
    for (k, &t) in spec.times.iter().enumerate() {
        let mut vals = vec![closed[k], ens[k].mean, measured[k]];
        if let Some(se) = ens[k].stderr {
            vals.push(se);
        }
        out.push_row(t, vals)?;
    }
    let fit = fit_gaussian_decay(&spec.times, &measured)?;
    out.summary.insert("beta_fit".into(), fit.value("beta"));
    out.summary
        .insert("beta_fit_stderr".into(), fit.stderr("beta"));
    if let Some(t2) = fit.t2_star() {
        out.summary.insert("t2_star_fit".into(), t2.value);
    }
    let t2 = t2_star(&spec.bath);
    if t2.is_finite() {
        out.summary.insert("t2_star".into(), t2);
    }
    let mut out = out
        .with_meta("beta", spec.bath.beta.value())
        .with_meta("ensemble", describe_ensemble(&spec.ensemble))
        .with_meta("noise", spec.noise)
        .with_meta("seed", spec.seed);
    if let Some(ts) = timestamp() {
        out.metadata.insert("timestamp".into(), ts);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Stokes phase from full propagation

#[derive(Debug, Clone, PartialEq)]
pub struct StokesSpec {
    /// Adiabaticities δ (the exp(−πδ/2) convention), ascending.
    pub adiabaticities: Vec<f64>,
    pub delta: Frequency,
    pub window: f64,
    /// Interference phase points per δ, spread over two fringes.
    pub phase_points: usize,
    pub stepper: StepperConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StokesValidation {
    pub adiabaticity: f64,
    pub p_t: f64,
    pub theta12: Vec<f64>,
    pub p_sim: Vec<f64>,
    pub p_analytic: Vec<f64>,
    /// Φ_S recovered from the simulated probabilities.
    pub phi_s_numeric: f64,
    pub phi_s_analytic: f64,
}

impl StokesValidation {
    pub fn max_abs_error(&self) -> f64 {
        self.p_sim
            .iter()
            .zip(&self.p_analytic)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Double passages at one δ over `phase_points` triangle peaks whose
/// interference phases span two fringes, with the Stokes phase recovered by
/// least squares against `4P_T(1 − P_T)·sin²(θ₁₂/2 + Φ_S)`.
pub fn validate_stokes(
    adiabaticity: f64,
    delta: Frequency,
    window: f64,
    phase_points: usize,
    stepper: &StepperConfig,
) -> Result<StokesValidation> {
    check_positive("adiabaticity", adiabaticity)?;
    check_positive("delta", delta.value())?;
    if phase_points < 2 {
        return Err(Error::invalid(
            "phase_points",
            "need at least two phase points",
        ));
    }
    let v = velocity_for(delta, adiabaticity);
    let p_t = lz_probability_from_adiabaticity(adiabaticity);
    // θ₁₂/2 ≈ π·peak²/v far from the gap; start the peaks ten gaps out
    let phase0 = PI * (10.0 * delta.value()).powi(2) / v;
    let peaks: Vec<f64> = (0..phase_points)
        .map(|k| {
            let phase = phase0 + TAU * k as f64 / (phase_points - 1) as f64;
            (phase * v / PI).sqrt()
        })
        .collect();
    let start = -window * delta.value();
    let runs = peaks
        .par_iter()
        .map(|&peak| {
            let tri = TriangleDrive {
                velocity: v,
                start,
                peak,
            };
            let h = TwoLevelHamiltonian::new(delta, Frequency::ZERO, tri.waveform()?)?;
            let p = simulate_double_passage(&h, Time::ZERO, Time::us(tri.duration()), stepper)?;
            let pred = analytic::predict_double_passage(&h, Time::ZERO, Time::us(tri.duration()))?;
            Ok((pred.theta12, p, pred.p))
        })
        .collect::<Result<Vec<_>>>()?;
    let theta12: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let p_sim: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let p_analytic: Vec<f64> = runs.iter().map(|r| r.2).collect();

    let ssr = |phi: f64| -> f64 {
        theta12
            .iter()
            .zip(&p_sim)
            .map(|(&th, &p)| (p - lzs_probability(p_t, stueckelberg_phase(th, phi))).powi(2))
            .sum()
    };
    // sin² fixes Φ_S modulo π: coarse scan, then golden-section refinement
    let n_scan = 2000;
    let (mut best, mut best_val) = (0.0, f64::INFINITY);
    for k in 0..n_scan {
        let phi = -PI / 2.0 + PI * k as f64 / n_scan as f64;
        let val = ssr(phi);
        if val < best_val {
            best = phi;
            best_val = val;
        }
    }
    let step = PI / n_scan as f64;
    let (mut a, mut b) = (best - step, best + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if ssr(c) < ssr(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let phi_s_analytic = stokes_phase_for(adiabaticity)?;
    // report the branch nearest the closed form
    let mut phi_s_numeric = 0.5 * (a + b);
    phi_s_numeric += PI * ((phi_s_analytic - phi_s_numeric) / PI).round();
    Ok(StokesValidation {
        adiabaticity,
        p_t,
        theta12,
        p_sim,
        p_analytic,
        phi_s_numeric,
        phi_s_analytic,
    })
}

pub fn run_stokes_validate(spec: &StokesSpec) -> Result<ExperimentResult> {
    spec.stepper.validate()?;
    check_sorted("adiabaticities", &spec.adiabaticities)?;
    let rows = spec
        .adiabaticities
        .iter()
        .map(|&d| validate_stokes(d, spec.delta, spec.window, spec.phase_points, &spec.stepper))
        .collect::<Result<Vec<_>>>()?;
    let mut out = ExperimentResult::new(
        "stokes-validate",
        "delta",
        &[
            "p_t",
            "stokes_analytic",
            "stokes_numeric",
            "stokes_dev",
            "max_p_dev",
        ],
    );
    for r in rows {
        out.push_row(
            r.adiabaticity,
            vec![
                r.p_t,
                r.phi_s_analytic,
                r.phi_s_numeric,
                r.phi_s_numeric - r.phi_s_analytic,
                r.max_abs_error(),
            ],
        )?;
    }
    let out = out
        .with_meta("delta_gap", spec.delta.value())
        .with_meta("window", spec.window)
        .with_meta("phase_points", spec.phase_points);
    Ok(stamp(out, &spec.stepper))
}

/// First-order expectation for the noisy fringe visibility at τ.
pub fn expected_visibility(beta: f64, tau: f64) -> f64 {
    gaussian_decay(beta, tau)
}
