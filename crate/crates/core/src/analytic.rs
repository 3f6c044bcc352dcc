//! Closed-form Landau-Zener-Stückelberg theory.
//!
//! Unit convention: gaps and sweep rates are given in MHz and MHz/µs, while
//! the adiabaticity parameter δ = Δ²/v is the dimensionless one of the ħ = 1
//! angular problem, δ = 2π·Δ²/v for linear-frequency inputs. With that δ the
//! single-passage survival probability is `P_T = exp(−πδ/2)`.
//!
//! Two passages through the same crossing give a transition probability
//! `P = 4·P_T·(1 − P_T)·sin²Φ` with `Φ = θ₁₂/2 + Φ_S`, where θ₁₂ is the
//! adiabatic phase accumulated between the crossings (in radians) and Φ_S the
//! Stokes phase evaluated at δ/4.

use std::f64::consts::{FRAC_PI_4, PI, TAU};

use crate::error::{Error, Result};
use crate::hamiltonian::TwoLevelHamiltonian;
use crate::qcore::{Frequency, Time, Waveform};
use crate::quadrature;
use crate::special::arg_gamma_one_minus_i;

/// Guard band on P_T inside which the visibility is defined.
pub const SPLITTER_GUARD: f64 = 1e-6;

/// Crossing times are located to this accuracy (µs).
pub const CROSSING_TOLERANCE: f64 = 1e-12;

/// δ for a gap `delta_gap` swept at `v` MHz/µs.
pub fn adiabaticity_from_sweep(delta_gap: Frequency, v: f64) -> f64 {
    TAU * delta_gap.value().powi(2) / v.abs()
}

/// Sweep rate (MHz/µs) that gives adiabaticity `delta` for gap `delta_gap`.
pub fn sweep_rate_for(delta_gap: Frequency, delta: f64) -> f64 {
    TAU * delta_gap.value().powi(2) / delta
}

/// `exp(−πδ/2)`.
pub fn lz_probability_from_adiabaticity(delta: f64) -> f64 {
    (-0.5 * PI * delta).exp()
}

/// Single-passage probability of staying in the initial diabatic state.
pub fn lz_probability(delta_gap: Frequency, v: f64) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::Domain(format!(
            "sweep velocity must be > 0, got {v}"
        )));
    }
    if delta_gap.value() < 0.0 {
        return Err(Error::Domain("gap must be >= 0".into()));
    }
    Ok(lz_probability_from_adiabaticity(adiabaticity_from_sweep(
        delta_gap, v,
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdiabaticityConvention {
    /// δ from the drive slope at the first crossing.
    SweepRate,
    /// `Δ²/(ε·w)` for a sinusoid of amplitude ε and frequency w. Equal to
    /// `SweepRate` when ε₀ = 0.
    SinusoidCaption,
}

pub fn adiabaticity(
    delta_gap: Frequency,
    drive: &Waveform,
    epsilon0: Frequency,
    convention: AdiabaticityConvention,
) -> Result<f64> {
    let level = epsilon0.value();
    match convention {
        AdiabaticityConvention::SweepRate => {
            let (t0, t1) = search_window(drive, level);
            let t = *drive_crossings(drive, level, t0, t1)
                .first()
                .ok_or(Error::NoCrossing { level })?;
            let slope = drive.derivative(Time::us(t));
            if slope == 0.0 {
                return Err(Error::NoCrossing { level });
            }
            Ok(adiabaticity_from_sweep(delta_gap, slope))
        }
        AdiabaticityConvention::SinusoidCaption => match drive {
            Waveform::Sinusoid {
                amplitude,
                frequency,
                ..
            } => {
                if level.abs() >= amplitude.value() {
                    return Err(Error::NoCrossing { level });
                }
                Ok(delta_gap.value().powi(2) / (amplitude.value() * frequency.value()))
            }
            _ => Err(Error::Domain(
                "caption convention applies to sinusoidal drives only".into(),
            )),
        },
    }
}

fn search_window(drive: &Waveform, level: f64) -> (f64, f64) {
    match drive {
        Waveform::Sinusoid { frequency, .. } => {
            let f = frequency.value();
            if f > 0.0 {
                (0.0, 1.0 / f)
            } else {
                (0.0, 1.0)
            }
        }
        Waveform::LinearRamp { velocity, t_origin } => {
            let t = t_origin.value() + level / velocity;
            (t - 1.0, t + 1.0)
        }
        Waveform::PiecewiseLinear { nodes } => {
            (nodes[0].0.value(), nodes[nodes.len() - 1].0.value())
        }
    }
}

/// Times in `[t0, t1]` where the drive equals `level`, in increasing order.
pub fn drive_crossings(drive: &Waveform, level: f64, t0: f64, t1: f64) -> Vec<f64> {
    let g = |t: f64| drive.value_at(t) - level;
    let mut pts = vec![t0];
    pts.extend(drive.breakpoints(t0, t1));
    pts.push(t1);
    let mut roots: Vec<f64> = Vec::new();
    let push = |t: f64, roots: &mut Vec<f64>| {
        if roots
            .last()
            .is_none_or(|&r| t - r > 1e3 * CROSSING_TOLERANCE)
        {
            roots.push(t);
        }
    };
    for w in pts.windows(2) {
        let (mut a, mut b) = (w[0], w[1]);
        let (ga, gb) = (g(a), g(b));
        if ga == 0.0 {
            push(a, &mut roots);
            continue;
        }
        if gb == 0.0 || ga.signum() == gb.signum() {
            continue;
        }
        for _ in 0..200 {
            if b - a <= CROSSING_TOLERANCE {
                break;
            }
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if g(m).signum() == ga.signum() {
                a = m;
            } else {
                b = m;
            }
        }
        push(0.5 * (a + b), &mut roots);
    }
    if g(t1) == 0.0 {
        push(t1, &mut roots);
    }
    roots
}

/// Crossing times of `h` (where `ε(t) = ε₀ + b`) inside `[t0, t1]`.
pub fn crossing_times(h: &TwoLevelHamiltonian, t0: Time, t1: Time) -> Vec<f64> {
    drive_crossings(&h.drive, h.crossing_level(), t0.value(), t1.value())
}

/// Adiabatic phase `2π·∫ E01 dt` between `t1` and `t2`, in radians.
pub fn theta12(h: &TwoLevelHamiltonian, t1: Time, t2: Time) -> Result<f64> {
    let (a, b) = (t1.value(), t2.value());
    if !(b > a) {
        return Err(Error::invalid("t2", "need t2 > t1"));
    }
    let mut breaks = h.drive.breakpoints(a, b);
    breaks.extend(crossing_times(h, t1, t2));
    let area = quadrature::integrate(|t| h.gap_at(t), a, b, &breaks, 1e-11);
    Ok(TAU * area)
}

/// Stokes phase `π/4 + δ(ln δ − 1) + arg Γ(1 − iδ)` at adiabaticity `delta_san`
/// in the δ/4 convention.
pub fn stokes_phase(delta_san: f64) -> Result<f64> {
    if !(delta_san >= 0.0) || !delta_san.is_finite() {
        return Err(Error::Domain(format!(
            "Stokes adiabaticity must be >= 0, got {delta_san}"
        )));
    }
    if delta_san == 0.0 {
        return Ok(FRAC_PI_4);
    }
    Ok(FRAC_PI_4 + delta_san * (delta_san.ln() - 1.0) + arg_gamma_one_minus_i(delta_san))
}

/// Stokes phase for a passage with adiabaticity δ (the `exp(−πδ/2)` convention).
pub fn stokes_phase_for(delta: f64) -> Result<f64> {
    stokes_phase(delta / 4.0)
}

/// Total interference phase `θ₁₂/2 + Φ_S`.
pub fn stueckelberg_phase(theta12: f64, phi_s: f64) -> f64 {
    0.5 * theta12 + phi_s
}

/// `4·P_T·(1 − P_T)·sin²φ`.
pub fn lzs_probability(p_t: f64, phi: f64) -> f64 {
    4.0 * p_t * (1.0 - p_t) * phi.sin().powi(2)
}

/// `P / (4·P_T·(1 − P_T))`.
pub fn visibility(p: f64, p_t: f64) -> Result<f64> {
    if !(p_t > SPLITTER_GUARD && p_t < 1.0 - SPLITTER_GUARD) {
        return Err(Error::DegenerateSplitter { p_t });
    }
    Ok(p / (4.0 * p_t * (1.0 - p_t)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LzsPrediction {
    pub p_t: f64,
    pub theta12: f64,
    pub phi_s: f64,
    /// Transition probability after both passages.
    pub p: f64,
}

/// Adiabatic-impulse prediction for a drive that crosses exactly twice in
/// `[t0, t1]`. The splitter is characterized by the slope at the first
/// crossing.
pub fn predict_double_passage(
    h: &TwoLevelHamiltonian,
    t0: Time,
    t1: Time,
) -> Result<LzsPrediction> {
    let crossings = crossing_times(h, t0, t1);
    if crossings.len() != 2 {
        return Err(Error::Domain(format!(
            "double passage needs exactly two crossings, found {}",
            crossings.len()
        )));
    }
    let slope = h.drive.derivative(Time::us(crossings[0]));
    if slope == 0.0 {
        return Err(Error::NoCrossing {
            level: h.crossing_level(),
        });
    }
    let delta = adiabaticity_from_sweep(h.delta, slope);
    let p_t = lz_probability_from_adiabaticity(delta);
    let theta = theta12(h, Time::us(crossings[0]), Time::us(crossings[1]))?;
    let phi_s = stokes_phase_for(delta)?;
    Ok(LzsPrediction {
        p_t,
        theta12: theta,
        phi_s,
        p: lzs_probability(p_t, stueckelberg_phase(theta, phi_s)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mhz(v: f64) -> Frequency {
        Frequency::mhz(v)
    }

    #[test]
    fn lz_probability_examples() {
        assert_eq!(lz_probability(mhz(0.0), 3.0).unwrap(), 1.0);
        let half = 2.0 / PI * 2f64.ln();
        assert!((lz_probability_from_adiabaticity(half) - 0.5).abs() < 1e-15);
        assert!((lz_probability_from_adiabaticity(2.0) - 0.043_213_918_263_772_25).abs() < 1e-15);
        // Δ = 1 MHz, v chosen for δ = 2
        let v = sweep_rate_for(mhz(1.0), 2.0);
        assert!((lz_probability(mhz(1.0), v).unwrap() - (-PI).exp()).abs() < 1e-15);
        assert!(matches!(
            lz_probability(mhz(1.0), 0.0),
            Err(Error::Domain(_))
        ));
        assert!(lz_probability(mhz(1.0), -1.0).is_err());
    }

    #[test]
    fn adiabaticity_conventions() {
        let ramp = Waveform::linear_ramp(4.0, 0.0).unwrap();
        let d = adiabaticity(mhz(0.5), &ramp, mhz(1.3), AdiabaticityConvention::SweepRate).unwrap();
        assert!((d - TAU * 0.25 / 4.0).abs() < 1e-14);

        // max cosine slope 2π·ε·w makes the two conventions coincide at ε₀ = 0
        let s = Waveform::sinusoid(1.5, 0.002, 0.0).unwrap();
        let by_slope =
            adiabaticity(mhz(0.11), &s, mhz(0.0), AdiabaticityConvention::SweepRate).unwrap();
        let caption = adiabaticity(
            mhz(0.11),
            &s,
            mhz(0.0),
            AdiabaticityConvention::SinusoidCaption,
        )
        .unwrap();
        assert!((caption - 0.11f64.powi(2) / (1.5 * 0.002)).abs() < 1e-12);
        assert!((by_slope - caption).abs() < 1e-9 * caption);

        let err = adiabaticity(mhz(0.1), &s, mhz(2.0), AdiabaticityConvention::SweepRate);
        assert!(matches!(err, Err(Error::NoCrossing { .. })));
        let err = adiabaticity(
            mhz(0.1),
            &s,
            mhz(2.0),
            AdiabaticityConvention::SinusoidCaption,
        );
        assert!(matches!(err, Err(Error::NoCrossing { .. })));
    }

    #[test]
    fn caption_values_span_both_regimes() {
        // ε = 1.5 MHz, Δ = 0.11 MHz: kHz drive rates cover δ ≪ 1 to δ ≫ 1
        let d = |w: f64| {
            let s = Waveform::sinusoid(1.5, w, 0.0).unwrap();
            adiabaticity(
                mhz(0.11),
                &s,
                mhz(0.0),
                AdiabaticityConvention::SinusoidCaption,
            )
            .unwrap()
        };
        assert!(d(0.2) < 0.05);
        assert!(d(0.0004) > 20.0);
    }

    #[test]
    fn crossings_found_to_tolerance() {
        let s = Waveform::sinusoid(2.0, 0.5, 0.3).unwrap();
        let roots = drive_crossings(&s, 0.7, 0.0, 5.0);
        assert_eq!(roots.len(), 5);
        for r in roots {
            assert!((s.value_at(r) - 0.7).abs() < 1e-10);
        }
        let tri = Waveform::triangle(-10.0, 10.0, 5.0).unwrap();
        let roots = drive_crossings(&tri, 0.0, 0.0, 8.0);
        assert_eq!(roots.len(), 2);
        assert!((roots[0] - 2.0).abs() < 1e-12 && (roots[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn theta12_examples() {
        let flat =
            TwoLevelHamiltonian::new(mhz(1.0), mhz(0.0), Waveform::constant(0.0).unwrap()).unwrap();
        assert!((theta12(&flat, Time::ZERO, Time::us(1.0)).unwrap() - TAU).abs() < 1e-9 * TAU);

        // Δ = 0, ramp through the crossing: |v t| over ±T gives v·T²
        let (v, t) = (3.0, 1.7);
        let ramp =
            TwoLevelHamiltonian::new(mhz(0.0), mhz(0.0), Waveform::linear_ramp(v, 0.0).unwrap())
                .unwrap();
        let got = theta12(&ramp, Time::us(-t), Time::us(t)).unwrap();
        assert!((got - TAU * v * t * t).abs() < 1e-9 * got);

        let pythagorean =
            TwoLevelHamiltonian::new(mhz(3.0), mhz(-4.0), Waveform::constant(0.0).unwrap())
                .unwrap();
        let got = theta12(&pythagorean, Time::ZERO, Time::us(1.0)).unwrap();
        assert!((got - 10.0 * PI).abs() < 1e-9 * got);
    }

    #[test]
    fn stokes_phase_limits_and_reference_values() {
        assert_eq!(stokes_phase(0.0).unwrap(), FRAC_PI_4);
        assert!((stokes_phase(1e-9).unwrap() - FRAC_PI_4).abs() < 1e-7);
        // high-precision reference values
        for (d, want) in [
            (0.01, 0.735_118_217_521_685_452),
            (0.1, 0.512_462_594_514_763_449),
            (1.0, 0.087_038_483_864_981_508),
            (3.0, 0.027_884_258_333_164_183),
        ] {
            assert!((stokes_phase(d).unwrap() - want).abs() < 1e-10, "δ' = {d}");
        }
        assert!(stokes_phase(-0.1).is_err());
    }

    #[test]
    fn lzs_probability_and_visibility_examples() {
        assert!((lzs_probability(0.5, PI / 2.0) - 1.0).abs() < 1e-15);
        assert_eq!(lzs_probability(0.3, 0.0), 0.0);
        assert!((lzs_probability(0.2, PI / 4.0) - 0.32).abs() < 1e-15);
        assert!((visibility(0.32, 0.2).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(visibility(1.0, 0.5).unwrap(), 1.0);
        assert!(matches!(
            visibility(0.1, 0.0),
            Err(Error::DegenerateSplitter { .. })
        ));
        assert!(visibility(0.1, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn lz_probability_monotone(gap in 0.01..3.0f64, v in 0.1..50.0f64, bump in 1.001..2.0f64) {
            let p = lz_probability(mhz(gap), v).unwrap();
            prop_assert!(lz_probability(mhz(gap * bump), v).unwrap() <= p);
            prop_assert!(lz_probability(mhz(gap), v * bump).unwrap() >= p);
        }

        #[test]
        fn lzs_probability_periodic_and_bounded(p_t in 0.0..1.0f64, phi in -10.0..10.0f64) {
            let p = lzs_probability(p_t, phi);
            prop_assert!(p <= 4.0 * p_t * (1.0 - p_t) + 1e-12);
            prop_assert!((p - lzs_probability(p_t, phi + TAU)).abs() < 1e-12);
        }

        #[test]
        fn theta12_is_additive(delta in 0.05..2.0f64, split in 0.1..0.9f64) {
            let h = TwoLevelHamiltonian::new(
                mhz(delta),
                mhz(0.4),
                Waveform::sinusoid(3.0, 0.35, 0.2).unwrap(),
            ).unwrap();
            let (a, c) = (0.1, 4.3);
            let b = a + split * (c - a);
            let whole = theta12(&h, Time::us(a), Time::us(c)).unwrap();
            let parts = theta12(&h, Time::us(a), Time::us(b)).unwrap() + theta12(&h, Time::us(b), Time::us(c)).unwrap();
            prop_assert!((whole - parts).abs() < 1e-8 * whole);
        }
    }
}
