//! Least-squares fits for Stückelberg fringes and free-induction decay.

mod lm;

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2, TAU};

use nalgebra::{Matrix3, Vector3};

use crate::analytic::SPLITTER_GUARD;
use crate::error::{Error, Result};
use crate::experiments::ExperimentResult;

pub use lm::{levenberg_marquardt, LmOutcome, MAX_ITERATIONS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: BTreeMap<&'static str, Estimate>,
    pub residual_rms: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    /// Fitted value of `name`. Panics on a name the model does not have.
    pub fn value(&self, name: &str) -> f64 {
        self.params[name].value
    }

    pub fn stderr(&self, name: &str) -> f64 {
        self.params[name].stderr
    }

    /// T₂* = √2/(2πβ) for a decay fit, with its propagated standard error.
    pub fn t2_star(&self) -> Option<Estimate> {
        let beta = self.params.get("beta")?;
        let t2 = SQRT_2 / (TAU * beta.value);
        Some(Estimate {
            value: t2,
            stderr: t2 * beta.stderr / beta.value,
        })
    }

    fn from_outcome(names: &[&'static str], out: &LmOutcome, n: usize) -> Self {
        let params = names
            .iter()
            .zip(out.params.iter().zip(&out.stderr))
            .map(|(&k, (&value, &stderr))| (k, Estimate { value, stderr }))
            .collect();
        FitResult {
            params,
            residual_rms: (out.ssr / n as f64).sqrt(),
            converged: true,
            iterations: out.iterations,
        }
    }
}

const COSINE_MIN_POINTS: usize = 8;
/// Frequency-grid oversampling relative to the 1/span resolution.
const SCAN_OVERSAMPLE: f64 = 8.0;

fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Linear least squares for `c + a·cos(ωx) + b·sin(ωx)`; returns (a, b, c, ssr).
fn linear_cosine(xs: &[f64], ys: &[f64], f: f64) -> Option<(f64, f64, f64, f64)> {
    let mut m = Matrix3::zeros();
    let mut v = Vector3::zeros();
    for (&x, &y) in xs.iter().zip(ys) {
        let (s, c) = (TAU * f * x).sin_cos();
        let row = Vector3::new(c, s, 1.0);
        m += row * row.transpose();
        v += row * y;
    }
    let sol = m.lu().solve(&v)?;
    let ssr = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let (s, c) = (TAU * f * x).sin_cos();
            (y - sol[0] * c - sol[1] * s - sol[2]).powi(2)
        })
        .sum();
    Some((sol[0], sol[1], sol[2], ssr))
}

/// Fit `offset + amplitude·cos(2π·frequency·x + phase)`.
///
/// The starting frequency comes from a scan of the three-parameter linear
/// fit over a grid finer than the record's spectral resolution, which keeps
/// the refinement out of the cosine fit's local minima. Amplitude is
/// reported ≥ 0 and the phase in (−π, π].
pub fn fit_cosine(xs: &[f64], ys: &[f64]) -> Result<FitResult> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("ys", "xs and ys differ in length"));
    }
    let n = xs.len();
    if n < COSINE_MIN_POINTS {
        return Err(Error::InsufficientData {
            needed: COSINE_MIN_POINTS,
            got: n,
        });
    }
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 0.0) {
        return Err(Error::invalid("xs", "abscissae must span a nonzero range"));
    }
    let mean_y = ys.iter().sum::<f64>() / n as f64;
    let sigma_y = (ys.iter().map(|y| (y - mean_y).powi(2)).sum::<f64>() / n as f64).sqrt();

    // fit in centered coordinates so phase and frequency decouple
    let x0 = 0.5 * (lo + hi);
    let xc: Vec<f64> = xs.iter().map(|x| x - x0).collect();

    let f_min = 0.5 / span;
    let f_max = 0.5 * (n - 1) as f64 / span;
    let df = 1.0 / (SCAN_OVERSAMPLE * span);
    let steps = ((f_max - f_min) / df).ceil() as usize;
    let mut best: Option<(f64, f64, f64, f64, f64)> = None;
    for k in 0..=steps {
        let f = f_min + k as f64 * df;
        if let Some((a, b, c, ssr)) = linear_cosine(&xc, ys, f) {
            if best.is_none_or(|bst| ssr < bst.4) {
                best = Some((f, a, b, c, ssr));
            }
        }
    }
    let (f0, a, b, c, _) = best.ok_or_else(|| Error::FitDiverged {
        iterations: 0,
        reason: "frequency scan found no solvable point".into(),
    })?;

    let finish = |amp: f64,
                  freq: f64,
                  phase_c: f64,
                  offset: f64,
                  se: [f64; 4],
                  rms: f64,
                  iterations: usize| {
        let (amp, phase_c) = if amp < 0.0 {
            (-amp, phase_c + PI)
        } else {
            (amp, phase_c)
        };
        let phase = wrap_phase(phase_c - TAU * freq * x0);
        let names = ["amplitude", "frequency", "phase", "offset"];
        let vals = [amp, freq, phase, offset];
        FitResult {
            params: names
                .iter()
                .zip(vals.iter().zip(se))
                .map(|(&k, (&value, stderr))| (k, Estimate { value, stderr }))
                .collect(),
            residual_rms: rms,
            converged: true,
            iterations,
        }
    };

    if ys.iter().all(|&y| y == ys[0]) {
        // flat data carries no frequency or phase information: hold both
        return Ok(finish(0.0, f0, 0.0, ys[0], [0.0; 4], 0.0, 0));
    }

    let amp0 = a.hypot(b);
    let phase0 = (-b).atan2(a);
    let model = |p: &[f64], x: f64| {
        let arg = TAU * p[1] * x + p[2];
        let (s, c) = arg.sin_cos();
        (
            p[3] + p[0] * c,
            vec![c, -p[0] * s * TAU * x, -p[0] * s, 1.0],
        )
    };
    match levenberg_marquardt(&xc, ys, &[amp0, f0, phase0, c], model) {
        Ok(out) => {
            let p = &out.params;
            let se = [out.stderr[0], out.stderr[1], out.stderr[2], out.stderr[3]];
            let rms = (out.ssr / n as f64).sqrt();
            Ok(finish(p[0], p[1], p[2], p[3], se, rms, out.iterations))
        }
        // a vanishing amplitude leaves frequency and phase unidentifiable;
        // report the offset-only fit
        Err(Error::FitDiverged { .. }) if amp0 < 1e-9 * sigma_y.max(mean_y.abs()) => {
            let se = sigma_y / (n as f64).sqrt();
            Ok(finish(
                0.0,
                f0,
                0.0,
                mean_y,
                [0.0, 0.0, 0.0, se],
                sigma_y,
                0,
            ))
        }
        Err(e) => Err(e),
    }
}

const DECAY_MIN_POINTS: usize = 6;

fn check_decay_input(ts: &[f64], ss: &[f64]) -> Result<()> {
    if ts.len() != ss.len() {
        return Err(Error::invalid("ss", "ts and ss differ in length"));
    }
    if ts.len() < DECAY_MIN_POINTS {
        return Err(Error::InsufficientData {
            needed: DECAY_MIN_POINTS,
            got: ts.len(),
        });
    }
    if ts.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::invalid("ts", "times must be >= 0"));
    }
    Ok(())
}

/// β estimate from `−ln S = 2π²β²t²` on the well-conditioned points.
fn beta_guess(ts: &[f64], ss: &[f64], scale: f64) -> f64 {
    let est: Vec<f64> = ts
        .iter()
        .zip(ss)
        .filter(|(&t, &s)| t > 0.0 && s / scale > 0.05 && s / scale < 0.95)
        .map(|(&t, &s)| (-(s / scale).ln() / 2.0).sqrt() / (PI * t))
        .collect();
    if est.is_empty() {
        let t_max = ts.iter().copied().fold(0.0, f64::max);
        0.1 / (PI * t_max.max(1e-12))
    } else {
        est.iter().sum::<f64>() / est.len() as f64
    }
}

/// Fit `S(t) = exp(−2π²β²t²)`; params `{beta}`, with β ≥ 0.
pub fn fit_gaussian_decay(ts: &[f64], ss: &[f64]) -> Result<FitResult> {
    check_decay_input(ts, ss)?;
    let model = |p: &[f64], t: f64| {
        let e = (-2.0 * (PI * p[0] * t).powi(2)).exp();
        (e, vec![-4.0 * PI * PI * p[0] * t * t * e])
    };
    let out = levenberg_marquardt(ts, ss, &[beta_guess(ts, ss, 1.0)], model)?;
    let mut fit = FitResult::from_outcome(&["beta"], &out, ts.len());
    fit.params.get_mut("beta").unwrap().value = out.params[0].abs();
    Ok(fit)
}

/// Fit `S(t) = amplitude·exp(−2π²β²t²) + offset`.
pub fn fit_gaussian_decay_scaled(ts: &[f64], ss: &[f64]) -> Result<FitResult> {
    check_decay_input(ts, ss)?;
    let s0 = ss.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let model = |p: &[f64], t: f64| {
        let e = (-2.0 * (PI * p[0] * t).powi(2)).exp();
        (
            p[1] * e + p[2],
            vec![-4.0 * PI * PI * p[0] * t * t * p[1] * e, e, 1.0],
        )
    };
    let p0 = [beta_guess(ts, ss, s0), s0, 0.0];
    let out = levenberg_marquardt(ts, ss, &p0, model)?;
    let mut fit = FitResult::from_outcome(&["beta", "amplitude", "offset"], &out, ts.len());
    fit.params.get_mut("beta").unwrap().value = out.params[0].abs();
    Ok(fit)
}

/// Fringe visibility from sampled `P` values: `2·amplitude / (4·P_T(1 − P_T))`.
pub fn visibility_from_fringes(xs: &[f64], ps: &[f64], p_t: f64) -> Result<(Estimate, FitResult)> {
    if !(p_t > SPLITTER_GUARD && p_t < 1.0 - SPLITTER_GUARD) {
        return Err(Error::DegenerateSplitter { p_t });
    }
    let fit = fit_cosine(xs, ps)?;
    let norm = 4.0 * p_t * (1.0 - p_t);
    let v = Estimate {
        value: 2.0 * fit.value("amplitude") / norm,
        stderr: 2.0 * fit.stderr("amplitude") / norm,
    };
    Ok((v, fit))
}

/// Visibility of the `column` oscillation of a sweep result.
pub fn extract_visibility(
    oscillation: &ExperimentResult,
    column: &str,
    p_t: f64,
) -> Result<Estimate> {
    let ps = oscillation
        .column(column)
        .ok_or_else(|| Error::Result(format!("no column `{column}`")))?;
    visibility_from_fringes(&oscillation.xs(), &ps, p_t).map(|(v, _)| v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn grid(n: usize, a: f64, b: f64) -> Vec<f64> {
        (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect()
    }

    fn cosine(xs: &[f64], amp: f64, f: f64, ph: f64, off: f64) -> Vec<f64> {
        xs.iter()
            .map(|x| off + amp * (TAU * f * x + ph).cos())
            .collect()
    }

    fn noisy(ys: &[f64], sigma: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, sigma).unwrap();
        ys.iter().map(|y| y + d.sample(&mut rng)).collect()
    }

    #[test]
    fn exact_cosine_is_recovered() {
        let xs = grid(40, 0.0, 3.0);
        let ys = cosine(&xs, 0.5, 1.3, 0.4, 0.5);
        let fit = fit_cosine(&xs, &ys).unwrap();
        assert!((fit.value("amplitude") - 0.5).abs() < 1e-8);
        assert!((fit.value("frequency") - 1.3).abs() < 1e-8);
        assert!((fit.value("phase") - 0.4).abs() < 1e-8);
        assert!(fit.residual_rms < 1e-9);
        assert!(fit.converged);
    }

    #[test]
    fn noisy_cosine_amplitude_within_three_sigma() {
        let xs = grid(60, 0.0, 4.0);
        let ys = noisy(&cosine(&xs, 0.5, 0.8, -1.0, 0.5), 0.01, 11);
        let fit = fit_cosine(&xs, &ys).unwrap();
        let se = fit.stderr("amplitude");
        assert!(se > 0.0 && se.is_finite());
        assert!((fit.value("amplitude") - 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn constant_data_gives_zero_amplitude() {
        let xs = grid(20, 0.0, 2.0);
        let fit = fit_cosine(&xs, &[0.3; 20]).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.value("amplitude"), 0.0);
        assert_eq!(fit.value("offset"), 0.3);
        assert!(fit.params.values().all(|e| e.stderr.is_finite()));

        let ys = noisy(&[0.3; 20], 0.01, 5);
        let fit = fit_cosine(&xs, &ys).unwrap();
        assert!(fit.value("amplitude") < 0.02);
        assert!(fit.residual_rms < 0.015);
    }

    #[test]
    fn cosine_input_validation() {
        assert!(matches!(
            fit_cosine(&[0.0, 1.0, 2.0], &[1.0, 0.0, 1.0]),
            Err(Error::InsufficientData { needed: 8, got: 3 })
        ));
    }

    #[test]
    fn gaussian_decay_examples() {
        let ts = grid(30, 0.0, 10.0);
        let ss: Vec<f64> = ts
            .iter()
            .map(|&t| crate::noise::gaussian_decay(0.056, t))
            .collect();
        let fit = fit_gaussian_decay(&ts, &ss).unwrap();
        assert!((fit.value("beta") - 0.056).abs() < 1e-6);
        assert!((fit.t2_star().unwrap().value - 4.0191).abs() < 1e-3);

        let flat = fit_gaussian_decay(&ts, &[1.0; 30]).unwrap();
        assert!(flat.value("beta") < 1e-6);

        let noisy_ss = noisy(&ss, 0.01, 3);
        let fit = fit_gaussian_decay(&ts, &noisy_ss).unwrap();
        assert!((fit.value("beta") - 0.056).abs() < 3.0 * fit.stderr("beta"));

        let scaled: Vec<f64> = ss.iter().map(|s| 0.8 * s + 0.1).collect();
        let fit = fit_gaussian_decay_scaled(&ts, &scaled).unwrap();
        assert!((fit.value("beta") - 0.056).abs() < 1e-8);
        assert!((fit.value("amplitude") - 0.8).abs() < 1e-8);
        assert!((fit.value("offset") - 0.1).abs() < 1e-8);

        assert!(fit_gaussian_decay(&ts[..4], &ss[..4]).is_err());
    }

    #[test]
    fn visibility_examples() {
        let xs = grid(24, 0.0, 2.0);
        let ps = cosine(&xs, 0.5, 1.0, 0.3, 0.5);
        let (v, _) = visibility_from_fringes(&xs, &ps, 0.5).unwrap();
        assert!((v.value - 1.0).abs() < 1e-8);
        let (v, _) = visibility_from_fringes(&xs, &[0.2; 24], 0.5).unwrap();
        assert_eq!(v.value, 0.0);
        assert!(matches!(
            visibility_from_fringes(&xs, &ps, 0.0),
            Err(Error::DegenerateSplitter { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn cosine_round_trip(amp in 0.05..2.0f64, periods in 1.2..6.0f64, ph in -3.0..3.0f64, off in -1.0..1.0f64) {
            let xs = grid(64, 0.0, 1.0);
            let ys = cosine(&xs, amp, periods, ph, off);
            let fit = fit_cosine(&xs, &ys).unwrap();
            prop_assert!((fit.value("amplitude") / amp - 1.0).abs() < 1e-6);
            prop_assert!((fit.value("frequency") / periods - 1.0).abs() < 1e-6);
            prop_assert!((fit.value("offset") - off).abs() < 1e-6 * (1.0 + off.abs()));
        }

        #[test]
        fn cosine_fit_ignores_grid_phase(shift in 0.0..1.0f64) {
            let xs = grid(48, 0.0, 2.5);
            let a = fit_cosine(&xs, &cosine(&xs, 0.4, 1.7, 0.0, 0.5)).unwrap();
            let b = fit_cosine(&xs, &cosine(&xs, 0.4, 1.7, TAU * shift, 0.5)).unwrap();
            prop_assert!((a.value("amplitude") - b.value("amplitude")).abs() < 1e-8);
            prop_assert!((a.value("frequency") - b.value("frequency")).abs() < 1e-8);
        }

        #[test]
        fn decay_round_trip(beta in 0.01..0.3f64) {
            let t2 = SQRT_2 / (TAU * beta);
            let ts = grid(25, 0.0, 2.5 * t2);
            let ss: Vec<f64> = ts.iter().map(|&t| crate::noise::gaussian_decay(beta, t)).collect();
            let fit = fit_gaussian_decay(&ts, &ss).unwrap();
            prop_assert!((fit.value("beta") / beta - 1.0).abs() < 1e-6);
        }
    }
}
