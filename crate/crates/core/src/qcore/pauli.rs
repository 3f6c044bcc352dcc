use num_complex::Complex64;

use super::state::{Level, StateVector};

/// Hermitian 2×2 operator `H = h0·I + (hx·σx + hy·σy + hz·σz)/2`.
///
/// Coefficients are angular (rad/µs), so `|h|` is the eigenvalue splitting.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PauliOperator {
    pub h0: f64,
    pub hx: f64,
    pub hy: f64,
    pub hz: f64,
}

impl PauliOperator {
    pub fn new(h0: f64, hx: f64, hy: f64, hz: f64) -> Self {
        PauliOperator { h0, hx, hy, hz }
    }

    /// `|h|`, the difference of the two eigenvalues.
    pub fn splitting(&self) -> f64 {
        (self.hx * self.hx + self.hy * self.hy + self.hz * self.hz).sqrt()
    }

    pub fn eigenvalues(&self) -> (f64, f64) {
        let half = 0.5 * self.splitting();
        (self.h0 - half, self.h0 + half)
    }

    pub fn negated(&self) -> Self {
        PauliOperator::new(-self.h0, -self.hx, -self.hy, -self.hz)
    }

    /// Dense matrix, row major.
    pub fn to_matrix(&self) -> [[Complex64; 2]; 2] {
        let c = |re: f64, im: f64| Complex64::new(re, im);
        [
            [
                c(self.h0 + 0.5 * self.hz, 0.0),
                c(0.5 * self.hx, -0.5 * self.hy),
            ],
            [
                c(0.5 * self.hx, 0.5 * self.hy),
                c(self.h0 - 0.5 * self.hz, 0.0),
            ],
        ]
    }

    pub fn apply(&self, s: &StateVector) -> StateVector {
        let m = self.to_matrix();
        StateVector::new(
            m[0][0] * s.a0 + m[0][1] * s.a1,
            m[1][0] * s.a0 + m[1][1] * s.a1,
        )
    }

    /// Instantaneous eigenstate with the larger overlap on `level`.
    ///
    /// Far from an avoided crossing this is the eigenstate adiabatically
    /// connected to the diabatic state `level`. Falls back to the basis state
    /// when the operator is proportional to the identity.
    pub fn dressed_state(&self, level: Level) -> StateVector {
        let n = self.splitting();
        if n == 0.0 {
            return StateVector::basis(level);
        }
        // h = n (sinθ cosφ, sinθ sinφ, cosθ)
        let cos_theta = (self.hz / n).clamp(-1.0, 1.0);
        let half_cos = (0.5 * (1.0 + cos_theta)).sqrt();
        let half_sin = (0.5 * (1.0 - cos_theta)).sqrt();
        let phase = Complex64::from_polar(1.0, self.hy.atan2(self.hx));
        let upper = StateVector::new(Complex64::new(half_cos, 0.0), phase * half_sin);
        let lower = StateVector::new(-phase.conj() * half_sin, Complex64::new(half_cos, 0.0));
        let pick_upper = match level {
            Level::Zero => cos_theta >= 0.0,
            Level::One => cos_theta < 0.0,
        };
        if pick_upper {
            upper
        } else {
            lower
        }
    }
}
