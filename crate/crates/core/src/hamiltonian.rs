//! The driven two-level (Landau-Zener) Hamiltonian
//! `H = −(Δ/2)σx − ((ε(t) − ε₀ − b)/2)σz` and its construction from NV-center
//! parameters in the frame rotating at the microwave carrier.

use crate::error::{Error, Result};
use crate::qcore::{Frequency, PauliOperator, Time, Waveform};

#[derive(Debug, Clone, PartialEq)]
pub struct TwoLevelHamiltonian {
    /// Minimum gap Δ at the avoided crossing.
    pub delta: Frequency,
    /// Crossing position ε₀.
    pub epsilon0: Frequency,
    pub drive: Waveform,
    /// Static shift b of the |1⟩ level (quasistatic bath field).
    pub bias: Frequency,
}

impl TwoLevelHamiltonian {
    pub fn new(delta: Frequency, epsilon0: Frequency, drive: Waveform) -> Result<Self> {
        if !(delta.value() >= 0.0) {
            return Err(Error::invalid("delta", "delta must be >= 0"));
        }
        drive.validate()?;
        Ok(TwoLevelHamiltonian {
            delta,
            epsilon0,
            drive,
            bias: Frequency::ZERO,
        })
    }

    pub fn with_bias(&self, bias: Frequency) -> Self {
        TwoLevelHamiltonian {
            bias,
            ..self.clone()
        }
    }

    pub fn with_drive(&self, drive: Waveform) -> Self {
        TwoLevelHamiltonian {
            drive,
            ..self.clone()
        }
    }

    pub fn with_epsilon0(&self, epsilon0: Frequency) -> Self {
        TwoLevelHamiltonian {
            epsilon0,
            ..self.clone()
        }
    }

    /// The drive level at which the diabatic energies cross, `ε₀ + b`.
    pub fn crossing_level(&self) -> f64 {
        self.epsilon0.value() + self.bias.value()
    }

    /// `ε(t) − ε₀ − b` in MHz.
    pub fn detuning_at(&self, t: f64) -> f64 {
        self.drive.value_at(t) - self.crossing_level()
    }

    /// Adiabatic gap in MHz at `t` (µs).
    pub fn gap_at(&self, t: f64) -> f64 {
        self.delta.value().hypot(self.detuning_at(t))
    }

    /// `H(t)` in rad/µs at `t` (µs).
    pub fn operator_at(&self, t: f64) -> PauliOperator {
        PauliOperator::new(
            0.0,
            -self.delta.angular(),
            0.0,
            -std::f64::consts::TAU * self.detuning_at(t),
        )
    }
}

pub fn lz_hamiltonian_at(h: &TwoLevelHamiltonian, t: Time) -> PauliOperator {
    h.operator_at(t.value())
}

/// Energy difference between the instantaneous eigenstates,
/// `√(Δ² + (ε(t) − ε₀ − b)²)`.
pub fn adiabatic_gap(h: &TwoLevelHamiltonian, t: Time) -> Frequency {
    Frequency::mhz(h.gap_at(t.value()))
}

/// Electron gyromagnetic ratio in MHz/G.
pub const GAMMA_E_MHZ_PER_GAUSS: f64 = 2.8025;

/// NV-center ground-state parameters and microwave drive.
#[derive(Debug, Clone, PartialEq)]
pub struct NvParameters {
    /// Zero-field (crystal) splitting D.
    pub d: Frequency,
    /// Static field along the NV axis, Gauss.
    pub b_z_field: f64,
    /// ¹⁴N hyperfine coupling A_z.
    pub a_hyperfine: Frequency,
    /// MHz per Gauss.
    pub gamma_e: f64,
    pub mw_frequency: Frequency,
    /// Microwave Rabi strength, which becomes Δ in the rotating frame.
    pub mw_rabi: Frequency,
}

impl Default for NvParameters {
    fn default() -> Self {
        NvParameters {
            d: Frequency::mhz(2870.0),
            b_z_field: 5.0,
            a_hyperfine: Frequency::mhz(2.18),
            gamma_e: GAMMA_E_MHZ_PER_GAUSS,
            mw_frequency: Frequency::mhz(2870.0 + 5.0 * GAMMA_E_MHZ_PER_GAUSS),
            mw_rabi: Frequency::mhz(0.1),
        }
    }
}

impl NvParameters {
    /// m_e = 0 → +1 transition frequency for the m_I = 0 nuclear line.
    pub fn transition_frequency(&self) -> Frequency {
        Frequency::mhz(self.d.value() + self.gamma_e * self.b_z_field)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d.value() > 0.0) {
            return Err(Error::invalid("d", "crystal splitting must be > 0"));
        }
        if !(self.mw_rabi.value() > 0.0) {
            return Err(Error::invalid("mw_rabi", "microwave strength must be > 0"));
        }
        if !self.b_z_field.is_finite() || !self.gamma_e.is_finite() {
            return Err(Error::invalid(
                "b_z_field",
                "field and gyromagnetic ratio must be finite",
            ));
        }
        if !(self.a_hyperfine.value() > 0.0) {
            return Err(Error::invalid(
                "a_hyperfine",
                "hyperfine coupling must be > 0",
            ));
        }
        let limit = self.a_hyperfine.value() / 4.0;
        if self.mw_rabi.value() > limit {
            return Err(Error::SelectivityViolation {
                rabi: self.mw_rabi.value(),
                limit,
            });
        }
        if self.mw_rabi.value() > self.a_hyperfine.value() / 10.0 {
            log::warn!(
                "microwave strength {} is above A/10 = {} MHz; hyperfine selectivity is marginal",
                self.mw_rabi,
                self.a_hyperfine.value() / 10.0
            );
        }
        Ok(())
    }
}

/// Rotating-frame reduction onto {|0⟩_e|0⟩_I, |+1⟩_e|0⟩_I}.
///
/// Returns Δ = microwave strength and ε₀ = carrier − transition frequency, with
/// a zero drive attached; callers substitute the actual ε(t).
pub fn nv_reduce(p: &NvParameters) -> Result<TwoLevelHamiltonian> {
    p.validate()?;
    let epsilon0 = p.mw_frequency - p.transition_frequency();
    TwoLevelHamiltonian::new(p.mw_rabi, epsilon0, Waveform::constant(0.0)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn still(delta: f64, eps0: f64) -> TwoLevelHamiltonian {
        TwoLevelHamiltonian::new(
            Frequency::mhz(delta),
            Frequency::mhz(eps0),
            Waveform::constant(0.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn operator_examples() {
        let h = lz_hamiltonian_at(&still(1.0, 0.0), Time::us(3.3));
        assert!((h.hx + 2.0 * PI).abs() < 1e-15);
        assert_eq!(h.hz, 0.0);

        let ramp = TwoLevelHamiltonian::new(
            Frequency::mhz(0.5),
            Frequency::mhz(2.0),
            Waveform::linear_ramp(1.0, 0.0).unwrap(),
        )
        .unwrap();
        let h = lz_hamiltonian_at(&ramp, Time::us(2.0));
        assert_eq!(h.hz, 0.0);
        assert!((h.hx + PI).abs() < 1e-15);

        let biased = still(0.5, 0.0).with_bias(Frequency::mhz(0.1));
        let h = lz_hamiltonian_at(&biased, Time::ZERO);
        assert!((h.hz - 0.2 * PI).abs() < 1e-15);
    }

    #[test]
    fn gap_examples() {
        let ramp = TwoLevelHamiltonian::new(
            Frequency::mhz(0.7),
            Frequency::mhz(2.0),
            Waveform::linear_ramp(1.0, 0.0).unwrap(),
        )
        .unwrap();
        assert!((adiabatic_gap(&ramp, Time::us(2.0)).value() - 0.7).abs() < 1e-15);
        assert_eq!(adiabatic_gap(&still(0.0, -3.0), Time::ZERO).value(), 3.0);
        assert_eq!(adiabatic_gap(&still(3.0, -4.0), Time::ZERO).value(), 5.0);
    }

    #[test]
    fn pauli_splitting_equals_angular_gap() {
        let h = TwoLevelHamiltonian::new(
            Frequency::mhz(0.37),
            Frequency::mhz(0.2),
            Waveform::sinusoid(1.5, 0.3, 0.1).unwrap(),
        )
        .unwrap()
        .with_bias(Frequency::mhz(-0.05));
        for k in 0..200 {
            let t = 0.037 * k as f64;
            let op = h.operator_at(t);
            let (lo, hi) = op.eigenvalues();
            // dense-matrix eigenvalues through the characteristic polynomial
            let m = op.to_matrix();
            let tr = (m[0][0] + m[1][1]).re;
            let det = (m[0][0] * m[1][1] - m[0][1] * m[1][0]).re;
            let dense_gap = (tr * tr - 4.0 * det).sqrt();
            let expected = 2.0 * PI * h.gap_at(t);
            assert!(((hi - lo) - expected).abs() <= 1e-10 * expected);
            assert!((dense_gap - expected).abs() <= 1e-10 * expected);
        }
    }

    #[test]
    fn bias_is_an_epsilon0_shift() {
        let drive = Waveform::sinusoid(2.0, 0.4, 0.0).unwrap();
        let a = TwoLevelHamiltonian::new(Frequency::mhz(0.3), Frequency::mhz(0.25), drive.clone())
            .unwrap()
            .with_bias(Frequency::mhz(0.125));
        let b =
            TwoLevelHamiltonian::new(Frequency::mhz(0.3), Frequency::mhz(0.375), drive).unwrap();
        for k in 0..100 {
            let t = 0.1 * k as f64;
            assert_eq!(a.operator_at(t), b.operator_at(t));
        }
    }

    fn nv(mw: f64, rabi: f64) -> NvParameters {
        NvParameters {
            mw_frequency: Frequency::mhz(mw),
            mw_rabi: Frequency::mhz(rabi),
            ..NvParameters::default()
        }
    }

    #[test]
    fn nv_reduction_examples() {
        let resonant = nv_reduce(&nv(2884.0125, 0.1)).unwrap();
        assert!(resonant.epsilon0.value().abs() < 1e-9);
        assert_eq!(resonant.delta.value(), 0.1);

        let f01 = NvParameters::default().transition_frequency().value();
        let above = nv_reduce(&nv(f01 + 1.0, 0.1)).unwrap();
        assert!((above.epsilon0.value() - 1.0).abs() < 1e-9);

        match nv_reduce(&nv(f01, 1.0)) {
            Err(Error::SelectivityViolation { rabi, limit }) => {
                assert_eq!(rabi, 1.0);
                assert!((limit - 0.545).abs() < 1e-12);
            }
            other => panic!("expected selectivity violation, got {other:?}"),
        }
    }

    #[test]
    fn epsilon0_has_unit_slope_in_carrier() {
        let base = nv_reduce(&nv(2880.0, 0.1)).unwrap().epsilon0.value();
        for k in 1..20 {
            let df = 0.37 * k as f64;
            let e = nv_reduce(&nv(2880.0 + df, 0.1)).unwrap().epsilon0.value();
            assert!(((e - base) - df).abs() < 1e-9);
        }
    }
}
