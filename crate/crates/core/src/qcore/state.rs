use num_complex::Complex64;

/// Basis level of the two-level system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    Zero,
    One,
}

/// Pure state `a0|0⟩ + a1|1⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector {
    pub a0: Complex64,
    pub a1: Complex64,
}

impl StateVector {
    pub fn new(a0: Complex64, a1: Complex64) -> Self {
        StateVector { a0, a1 }
    }

    pub fn ground() -> Self {
        Self::basis(Level::Zero)
    }

    pub fn basis(level: Level) -> Self {
        let (one, zero) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        match level {
            Level::Zero => StateVector::new(one, zero),
            Level::One => StateVector::new(zero, one),
        }
    }

    pub fn amplitude(&self, level: Level) -> Complex64 {
        match level {
            Level::Zero => self.a0,
            Level::One => self.a1,
        }
    }

    /// `|a_level|²`.
    pub fn population(&self, level: Level) -> f64 {
        self.amplitude(level).norm_sqr()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.a0.norm_sqr() + self.a1.norm_sqr()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm_sqr().sqrt();
        StateVector::new(self.a0 / n, self.a1 / n)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.a0.conj() * other.a0 + self.a1.conj() * other.a1
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// Euclidean distance between the amplitude vectors (phase sensitive).
    pub fn distance(&self, other: &StateVector) -> f64 {
        ((self.a0 - other.a0).norm_sqr() + (self.a1 - other.a1).norm_sqr()).sqrt()
    }
}

/// Population of `level` in a normalized state.
pub fn state_population(s: &StateVector, level: Level) -> f64 {
    s.population(level)
}
