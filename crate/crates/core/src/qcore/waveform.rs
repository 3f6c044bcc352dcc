use std::f64::consts::{PI, TAU};
use std::fmt;

use super::units::{Frequency, Time};
use crate::error::{Error, Result};

/// Time-dependent detuning drive ε(t).
#[derive(Debug, Clone, PartialEq)]
pub enum Waveform {
    /// `ε(t) = amplitude·cos(2π·frequency·t + phase)`.
    Sinusoid {
        amplitude: Frequency,
        frequency: Frequency,
        phase: f64,
    },
    /// `ε(t) = velocity·(t − t_origin)`, velocity in MHz/µs.
    LinearRamp { velocity: f64, t_origin: Time },
    /// Linear interpolation between `(time, value)` nodes, clamped outside.
    PiecewiseLinear { nodes: Vec<(Time, Frequency)> },
}

impl Waveform {
    pub fn sinusoid(amplitude: f64, frequency: f64, phase: f64) -> Result<Self> {
        let w = Waveform::Sinusoid {
            amplitude: Frequency::try_mhz(amplitude)?,
            frequency: Frequency::try_mhz(frequency)?,
            phase,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn linear_ramp(velocity: f64, t_origin: f64) -> Result<Self> {
        let w = Waveform::LinearRamp {
            velocity,
            t_origin: Time::try_us(t_origin)?,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn piecewise(nodes: &[(f64, f64)]) -> Result<Self> {
        let nodes = nodes
            .iter()
            .map(|&(t, e)| Ok((Time::try_us(t)?, Frequency::try_mhz(e)?)))
            .collect::<Result<Vec<_>>>()?;
        let w = Waveform::PiecewiseLinear { nodes };
        w.validate()?;
        Ok(w)
    }

    /// Symmetric out-and-back ramp starting and ending at `start`, turning at
    /// `peak` after `(peak − start)/velocity`.
    pub fn triangle(start: f64, peak: f64, velocity: f64) -> Result<Self> {
        if !(velocity > 0.0) || !(peak > start) {
            return Err(Error::invalid(
                "triangle",
                format!("need velocity > 0 and peak > start, got v={velocity}, start={start}, peak={peak}"),
            ));
        }
        let t_turn = (peak - start) / velocity;
        Waveform::piecewise(&[(0.0, start), (t_turn, peak), (2.0 * t_turn, start)])
    }

    /// A drive that stays at `level` forever.
    pub fn constant(level: f64) -> Result<Self> {
        Waveform::piecewise(&[(0.0, level)])
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Waveform::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => {
                if amplitude.value() < 0.0 {
                    return Err(Error::invalid(
                        "amplitude",
                        "sinusoid amplitude must be >= 0",
                    ));
                }
                if !phase.is_finite() {
                    return Err(Error::invalid("phase", "must be finite"));
                }
                if frequency.value() < 0.0 {
                    return Err(Error::invalid(
                        "frequency",
                        "sinusoid frequency must be >= 0",
                    ));
                }
            }
            Waveform::LinearRamp { velocity, .. } => {
                if !velocity.is_finite() || *velocity == 0.0 {
                    return Err(Error::invalid(
                        "velocity",
                        "ramp velocity must be finite and nonzero",
                    ));
                }
            }
            Waveform::PiecewiseLinear { nodes } => {
                if nodes.is_empty() {
                    return Err(Error::invalid(
                        "nodes",
                        "piecewise drive needs at least one node",
                    ));
                }
                if nodes.windows(2).any(|w| w[1].0.value() <= w[0].0.value()) {
                    return Err(Error::invalid(
                        "nodes",
                        "node times must be strictly increasing",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: Time) -> Frequency {
        Frequency::mhz(self.value_at(t.value()))
    }

    /// `ε(t)` in MHz for `t` in µs.
    pub fn value_at(&self, t: f64) -> f64 {
        match self {
            Waveform::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => amplitude.value() * (TAU * frequency.value() * t + phase).cos(),
            Waveform::LinearRamp { velocity, t_origin } => velocity * (t - t_origin.value()),
            Waveform::PiecewiseLinear { nodes } => {
                let (first, last) = (nodes[0], nodes[nodes.len() - 1]);
                if t <= first.0.value() {
                    return first.1.value();
                }
                if t >= last.0.value() {
                    return last.1.value();
                }
                let i = segment_index(nodes, t);
                let (t0, e0) = (nodes[i].0.value(), nodes[i].1.value());
                let (t1, e1) = (nodes[i + 1].0.value(), nodes[i + 1].1.value());
                if t == t0 {
                    return e0;
                }
                e0 + (e1 - e0) * (t - t0) / (t1 - t0)
            }
        }
    }

    /// Analytic `dε/dt` in MHz/µs. At a piecewise node the right-hand slope
    /// is returned; outside the node range the drive is flat.
    pub fn derivative(&self, t: Time) -> f64 {
        let t = t.value();
        match self {
            Waveform::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => {
                let w = TAU * frequency.value();
                -amplitude.value() * w * (w * t + phase).sin()
            }
            Waveform::LinearRamp { velocity, .. } => *velocity,
            Waveform::PiecewiseLinear { nodes } => {
                if nodes.len() < 2
                    || t < nodes[0].0.value()
                    || t >= nodes[nodes.len() - 1].0.value()
                {
                    return 0.0;
                }
                let i = segment_index(nodes, t);
                (nodes[i + 1].1.value() - nodes[i].1.value())
                    / (nodes[i + 1].0.value() - nodes[i].0.value())
            }
        }
    }

    /// Oscillation frequency carried by the drive itself (MHz); zero for ramps.
    pub fn frequency_content(&self) -> f64 {
        match self {
            Waveform::Sinusoid { frequency, .. } => frequency.value(),
            _ => 0.0,
        }
    }

    /// Times in `(t0, t1)` that split the drive into monotone pieces: node
    /// times for piecewise drives, extrema for sinusoids.
    pub fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut out = Vec::new();
        match self {
            Waveform::PiecewiseLinear { nodes } => {
                out.extend(
                    nodes
                        .iter()
                        .map(|n| n.0.value())
                        .filter(|&t| t > t0 && t < t1),
                );
            }
            Waveform::Sinusoid {
                frequency, phase, ..
            } => {
                let f = frequency.value();
                if f > 0.0 {
                    // extrema where 2πft + phase = kπ
                    let k0 = ((TAU * f * t0 + phase) / PI).floor() as i64 + 1;
                    let mut k = k0;
                    loop {
                        let t = (k as f64 * PI - phase) / (TAU * f);
                        if t >= t1 {
                            break;
                        }
                        if t > t0 {
                            out.push(t);
                        }
                        k += 1;
                    }
                }
            }
            Waveform::LinearRamp { .. } => {}
        }
        out
    }

    /// The same drive played backwards over `[t0, t1]`: `ε'(s) = ε(t0 + t1 − s)`.
    pub fn time_reversed(&self, t0: f64, t1: f64) -> Waveform {
        let span = t0 + t1;
        match self {
            Waveform::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => Waveform::Sinusoid {
                amplitude: *amplitude,
                frequency: *frequency,
                phase: -(TAU * frequency.value() * span + phase),
            },
            Waveform::LinearRamp { velocity, t_origin } => Waveform::LinearRamp {
                velocity: -velocity,
                t_origin: Time::us(span - t_origin.value()),
            },
            Waveform::PiecewiseLinear { nodes } => Waveform::PiecewiseLinear {
                nodes: nodes
                    .iter()
                    .rev()
                    .map(|&(t, e)| (Time::us(span - t.value()), e))
                    .collect(),
            },
        }
    }
}

fn segment_index(nodes: &[(Time, Frequency)], t: f64) -> usize {
    // last node with time <= t, capped so that i + 1 is valid
    let idx = nodes.partition_point(|n| n.0.value() <= t);
    idx.saturating_sub(1).min(nodes.len() - 2)
}

pub fn waveform_eval(w: &Waveform, t: Time) -> Frequency {
    w.eval(t)
}

pub fn waveform_derivative(w: &Waveform, t: Time) -> f64 {
    w.derivative(t)
}

impl fmt::Display for Waveform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Waveform::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => write!(
                f,
                "sinusoid(amplitude={:e},frequency={:e},phase={:e})",
                amplitude.value(),
                frequency.value(),
                phase
            ),
            Waveform::LinearRamp { velocity, t_origin } => {
                write!(
                    f,
                    "ramp(velocity={:e},t_origin={:e})",
                    velocity,
                    t_origin.value()
                )
            }
            Waveform::PiecewiseLinear { nodes } => {
                write!(f, "piecewise(")?;
                for (i, (t, e)) in nodes.iter().enumerate() {
                    if i > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "{:e}:{:e}", t.value(), e.value())?;
                }
                write!(f, ")")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn eval_examples() {
        let s = Waveform::sinusoid(1.5, 0.5, 0.0).unwrap();
        assert_eq!(s.eval(Time::ZERO).value(), 1.5);
        let r = Waveform::linear_ramp(2.0, 0.0).unwrap();
        assert_eq!(r.eval(Time::ZERO).value(), 0.0);
        let p = Waveform::piecewise(&[(0.0, 0.0), (1.0, 4.0)]).unwrap();
        assert_eq!(p.eval(Time::us(0.5)).value(), 2.0);
    }

    #[test]
    fn derivative_examples() {
        let r = Waveform::linear_ramp(2.0, 0.0).unwrap();
        assert_eq!(r.derivative(Time::us(-7.0)), 2.0);
        let s = Waveform::sinusoid(1.5, 0.5, 0.0).unwrap();
        assert_eq!(s.derivative(Time::ZERO), 0.0);
        let slow = Waveform::sinusoid(1.5, 0.002, 0.0).unwrap();
        let expected = -TAU * 0.002 * 1.5;
        assert!((slow.derivative(Time::us(125.0)) - expected).abs() < 1e-15);
        assert!((expected + 0.01885).abs() < 1e-5);
    }

    #[test]
    fn piecewise_clamps_and_uses_right_hand_slope() {
        let p = Waveform::piecewise(&[(0.0, 1.0), (1.0, 3.0), (3.0, -1.0)]).unwrap();
        assert_eq!(p.value_at(-5.0), 1.0);
        assert_eq!(p.value_at(10.0), -1.0);
        assert_eq!(p.derivative(Time::us(1.0)), -2.0);
        assert_eq!(p.derivative(Time::us(0.0)), 2.0);
        assert_eq!(p.derivative(Time::us(3.0)), 0.0);
        assert_eq!(p.derivative(Time::us(-1.0)), 0.0);
    }

    #[test]
    fn invariants_rejected() {
        assert!(Waveform::sinusoid(-1.0, 1.0, 0.0).is_err());
        assert!(Waveform::linear_ramp(0.0, 0.0).is_err());
        assert!(Waveform::piecewise(&[(0.0, 1.0), (0.0, 2.0)]).is_err());
        assert!(Waveform::piecewise(&[]).is_err());
    }

    #[test]
    fn sinusoid_breakpoints_are_extrema() {
        let s = Waveform::sinusoid(1.0, 0.25, 0.3).unwrap();
        let bps = s.breakpoints(0.0, 10.0);
        assert!(!bps.is_empty());
        for t in bps {
            assert!(s.derivative(Time::us(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn time_reversal_mirrors_values() {
        for w in [
            Waveform::sinusoid(1.2, 0.7, 0.4).unwrap(),
            Waveform::linear_ramp(3.0, 0.5).unwrap(),
            Waveform::triangle(-2.0, 5.0, 4.0).unwrap(),
        ] {
            let r = w.time_reversed(0.2, 2.0);
            for k in 0..=20 {
                let s = 0.2 + 1.8 * k as f64 / 20.0;
                assert!((r.value_at(s) - w.value_at(2.2 - s)).abs() < 1e-12);
            }
        }
    }

    fn central_difference(w: &Waveform, t: f64) -> f64 {
        let h = 1e-4;
        (w.value_at(t + h) - w.value_at(t - h)) / (2.0 * h)
    }

    proptest! {
        #[test]
        fn sinusoid_derivative_matches_finite_difference(
            amp in 0.1..5.0f64, freq in 0.01..2.0f64, phase in -3.0..3.0f64, t in -10.0..10.0f64
        ) {
            let w = Waveform::sinusoid(amp, freq, phase).unwrap();
            let exact = w.derivative(Time::us(t));
            let fd = central_difference(&w, t);
            // relative to the slope scale; the O(h²) truncation is far below this
            let scale = amp * TAU * freq;
            prop_assert!((exact - fd).abs() <= 1e-6 * scale);
        }

        #[test]
        fn ramp_derivative_matches_finite_difference(v in -50.0..50.0f64, t0 in -5.0..5.0f64, t in -10.0..10.0f64) {
            prop_assume!(v.abs() > 1e-3);
            let w = Waveform::linear_ramp(v, t0).unwrap();
            let fd = central_difference(&w, t);
            prop_assert!((w.derivative(Time::us(t)) - fd).abs() <= 1e-6 * v.abs());
        }

        #[test]
        fn piecewise_exact_at_nodes_and_continuous(
            values in proptest::collection::vec(-10.0..10.0f64, 2..8),
            frac in 0.0..1.0f64
        ) {
            let nodes: Vec<(f64, f64)> = values.iter().enumerate().map(|(i, &v)| (i as f64 * 0.7, v)).collect();
            let w = Waveform::piecewise(&nodes).unwrap();
            for &(t, v) in &nodes {
                prop_assert_eq!(w.value_at(t), v);
            }
            // interior point of the first segment, away from the kinks
            let t = 0.7 * (0.05 + 0.9 * frac);
            let fd = central_difference(&w, t);
            prop_assert!((w.derivative(Time::us(t)) - fd).abs() <= 1e-6 * (1.0 + fd.abs()));
            let eps = 1e-9;
            for &(t, _) in &nodes[1..nodes.len() - 1] {
                prop_assert!((w.value_at(t - eps) - w.value_at(t + eps)).abs() < 1e-6);
            }
        }
    }
}
