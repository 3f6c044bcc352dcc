//! Linear-frequency units. Frequencies are in MHz and times in µs, so every
//! frequency-time product is a dimensionless cycle count.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use crate::error::{Error, Result};

/// A linear frequency (or energy divided by h) in MHz.
#[derive(Debug, Clone, Copy, Default, PartialEq, PartialOrd)]
pub struct Frequency(f64);

impl Frequency {
    pub const ZERO: Frequency = Frequency(0.0);

    /// # Panics
    /// If `value` is not finite. Use [`Frequency::try_mhz`] for untrusted input.
    pub fn mhz(value: f64) -> Self {
        assert!(value.is_finite(), "frequency must be finite, got {value}");
        Frequency(value)
    }

    pub fn try_mhz(value: f64) -> Result<Self> {
        if value.is_finite() {
            Ok(Frequency(value))
        } else {
            Err(Error::invalid(
                "frequency",
                format!("{value} is not finite"),
            ))
        }
    }

    pub fn khz(value: f64) -> Self {
        Self::mhz(value * 1e-3)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Angular frequency in rad/µs.
    pub fn angular(self) -> f64 {
        std::f64::consts::TAU * self.0
    }

    pub fn abs(self) -> Self {
        Frequency(self.0.abs())
    }
}

impl Add for Frequency {
    type Output = Frequency;
    fn add(self, rhs: Frequency) -> Frequency {
        Frequency(self.0 + rhs.0)
    }
}

impl Sub for Frequency {
    type Output = Frequency;
    fn sub(self, rhs: Frequency) -> Frequency {
        Frequency(self.0 - rhs.0)
    }
}

impl Neg for Frequency {
    type Output = Frequency;
    fn neg(self) -> Frequency {
        Frequency(-self.0)
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} MHz", self.0)
    }
}

/// A time coordinate or duration in µs.
#[derive(Debug, Clone, Copy, Default, PartialEq, PartialOrd)]
pub struct Time(f64);

impl Time {
    pub const ZERO: Time = Time(0.0);

    /// # Panics
    /// If `value` is not finite.
    pub fn us(value: f64) -> Self {
        assert!(value.is_finite(), "time must be finite, got {value}");
        Time(value)
    }

    pub fn try_us(value: f64) -> Result<Self> {
        if value.is_finite() {
            Ok(Time(value))
        } else {
            Err(Error::invalid("time", format!("{value} is not finite")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Add for Time {
    type Output = Time;
    fn add(self, rhs: Time) -> Time {
        Time(self.0 + rhs.0)
    }
}

impl Sub for Time {
    type Output = Time;
    fn sub(self, rhs: Time) -> Time {
        Time(self.0 - rhs.0)
    }
}

impl fmt::Display for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} us", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(Frequency::try_mhz(f64::NAN).is_err());
        assert!(Time::try_us(f64::INFINITY).is_err());
        assert_eq!(Frequency::try_mhz(1.5).unwrap().value(), 1.5);
    }

    #[test]
    fn khz_conversion() {
        assert!((Frequency::khz(56.0).value() - 0.056).abs() < 1e-15);
    }
}
