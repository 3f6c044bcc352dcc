//! Quasistatic Gaussian bath: one static bias b per shot, b ~ N(0, β²).
//!
//! Averages over the bath are taken either with Gauss-Hermite quadrature
//! (deterministic, the default) or with seeded Monte Carlo sampling. Each
//! member run is independent and may execute on any rayon worker; results
//! are reduced in sample order so the average never depends on scheduling.

use std::f64::consts::{PI, SQRT_2};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::qcore::{Frequency, Time};
use crate::quadrature::gaussian_expectation_rule;

pub const DEFAULT_HERMITE_ORDER: usize = 40;
pub const MAX_HERMITE_ORDER: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBath {
    /// Standard deviation of the bias, MHz.
    pub beta: Frequency,
}

impl GaussianBath {
    pub fn new(beta: Frequency) -> Result<Self> {
        if !(beta.value() >= 0.0) {
            return Err(Error::invalid("beta", "beta must be >= 0"));
        }
        Ok(GaussianBath { beta })
    }

    pub fn noiseless() -> Self {
        GaussianBath {
            beta: Frequency::ZERO,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleSpec {
    MonteCarlo { n_samples: usize, seed: u64 },
    GaussHermite { order: usize },
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        EnsembleSpec::GaussHermite {
            order: DEFAULT_HERMITE_ORDER,
        }
    }
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EnsembleSpec::MonteCarlo { n_samples, .. } if n_samples < 1 => {
                Err(Error::invalid("n_samples", "n_samples must be >= 1"))
            }
            EnsembleSpec::GaussHermite { order } if !(1..=MAX_HERMITE_ORDER).contains(&order) => {
                Err(Error::invalid(
                    "order",
                    format!("order must be in [1, {MAX_HERMITE_ORDER}], got {order}"),
                ))
            }
            _ => Ok(()),
        }
    }

    pub fn is_monte_carlo(&self) -> bool {
        matches!(self, EnsembleSpec::MonteCarlo { .. })
    }
}

/// Biases and weights for `spec`, Monte Carlo draws on stream 0.
pub fn sample_bias(bath: &GaussianBath, spec: &EnsembleSpec) -> Result<Vec<(Frequency, f64)>> {
    sample_bias_stream(bath, spec, 0)
}

/// As [`sample_bias`], drawing Monte Carlo samples from ChaCha stream
/// `stream` of the seed. Sweeps give each point its own stream index so the
/// draws for a point do not depend on how many points precede it or on
/// which worker runs it.
pub fn sample_bias_stream(
    bath: &GaussianBath,
    spec: &EnsembleSpec,
    stream: u64,
) -> Result<Vec<(Frequency, f64)>> {
    spec.validate()?;
    let beta = bath.beta.value();
    Ok(match *spec {
        EnsembleSpec::MonteCarlo { n_samples, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            let w = 1.0 / n_samples as f64;
            (0..n_samples)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let b = if beta == 0.0 { 0.0 } else { beta * z };
                    (Frequency::mhz(b), w)
                })
                .collect()
        }
        EnsembleSpec::GaussHermite { order } => gaussian_expectation_rule(order, beta)
            .into_iter()
            .map(|(b, w)| (Frequency::mhz(b), w))
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Averaged {
    pub mean: f64,
    /// Standard error of the mean; Monte Carlo only.
    pub stderr: Option<f64>,
}

/// Weighted mean of a scalar observable over the bath.
pub fn ensemble_average<F>(run: F, bath: &GaussianBath, spec: &EnsembleSpec) -> Result<Averaged>
where
    F: Fn(Frequency) -> Result<f64> + Sync,
{
    ensemble_average_stream(run, bath, spec, 0)
}

/// [`ensemble_average`] drawing Monte Carlo biases from stream `stream`.
pub fn ensemble_average_stream<F>(
    run: F,
    bath: &GaussianBath,
    spec: &EnsembleSpec,
    stream: u64,
) -> Result<Averaged>
where
    F: Fn(Frequency) -> Result<f64> + Sync,
{
    let out = ensemble_average_many(|b| run(b).map(|v| vec![v]), bath, spec, stream)?;
    Ok(out[0])
}

/// Component-wise weighted mean of a vector observable (e.g. a population
/// trajectory on a fixed time grid), drawing from stream `stream`.
pub fn ensemble_average_many<F>(
    run: F,
    bath: &GaussianBath,
    spec: &EnsembleSpec,
    stream: u64,
) -> Result<Vec<Averaged>>
where
    F: Fn(Frequency) -> Result<Vec<f64>> + Sync,
{
    let samples = sample_bias_stream(bath, spec, stream)?;
    let values: Vec<Result<Vec<f64>>> = if bath.beta.value() == 0.0 {
        // every member sees b = 0 exactly; one run stands for all of them
        let v = run(Frequency::ZERO);
        samples.iter().map(|_| v.clone()).collect()
    } else {
        samples.par_iter().map(|&(b, _)| run(b)).collect()
    };
    let mut rows = Vec::with_capacity(values.len());
    for (v, &(b, _)) in values.into_iter().zip(&samples) {
        rows.push(v.map_err(|e| Error::Ensemble {
            bias: b.value(),
            source: Box::new(e),
        })?);
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::Domain(
            "ensemble members returned observables of different length".into(),
        ));
    }
    Ok((0..width)
        .map(|j| {
            // offsets from the first member keep a constant observable exact
            let reference = rows[0][j];
            let mut acc = 0.0;
            for (row, &(_, w)) in rows.iter().zip(&samples) {
                acc += w * (row[j] - reference);
            }
            let mean = reference + acc;
            let stderr = spec
                .is_monte_carlo()
                .then(|| standard_error(rows.iter().map(|r| r[j]), mean));
            Averaged { mean, stderr }
        })
        .collect())
}

fn standard_error(xs: impl ExactSizeIterator<Item = f64>, mean: f64) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let ss: f64 = xs.map(|x| (x - mean).powi(2)).sum();
    (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
}

/// `exp(−2π²β²t²)`.
pub fn gaussian_decay(beta: f64, t: f64) -> f64 {
    (-2.0 * (PI * beta * t).powi(2)).exp()
}

/// T₂* = √2/(2πβ) in µs; infinite without noise.
pub fn t2_star(bath: &GaussianBath) -> f64 {
    let beta = bath.beta.value();
    if beta == 0.0 {
        f64::INFINITY
    } else {
        SQRT_2 / (2.0 * PI * beta)
    }
}

fn check_grid(t_grid: &[Time]) -> Result<()> {
    if t_grid.iter().any(|t| !(t.value() >= 0.0)) {
        return Err(Error::invalid("t_grid", "times must be >= 0"));
    }
    if t_grid.windows(2).any(|w| !(w[1].value() > w[0].value())) {
        return Err(Error::invalid(
            "t_grid",
            "times must be strictly increasing",
        ));
    }
    Ok(())
}

/// Free-induction decay `S(t) = ⟨cos(2π·b·t)⟩` in closed form.
pub fn simulate_fid(bath: &GaussianBath, t_grid: &[Time]) -> Result<Vec<f64>> {
    check_grid(t_grid)?;
    Ok(t_grid
        .iter()
        .map(|t| gaussian_decay(bath.beta.value(), t.value()))
        .collect())
}

/// The same signal averaged member by member over the bath.
pub fn simulate_fid_ensemble(
    bath: &GaussianBath,
    t_grid: &[Time],
    spec: &EnsembleSpec,
) -> Result<Vec<Averaged>> {
    check_grid(t_grid)?;
    ensemble_average_many(
        |b| {
            Ok(t_grid
                .iter()
                .map(|t| (2.0 * PI * b.value() * t.value()).cos())
                .collect())
        },
        bath,
        spec,
        0,
    )
}

/// First-order LZS visibility after a crossing-to-crossing time `tau`: the
/// bias adds `2π·b·τ` to θ₁₂, so the fringe contrast decays like the FID.
pub fn visibility_decay_oracle(bath: &GaussianBath, tau: Time) -> f64 {
    gaussian_decay(bath.beta.value(), tau.value())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bath(beta: f64) -> GaussianBath {
        GaussianBath::new(Frequency::mhz(beta)).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(EnsembleSpec::MonteCarlo {
            n_samples: 0,
            seed: 1
        }
        .validate()
        .is_err());
        assert!(EnsembleSpec::GaussHermite { order: 0 }.validate().is_err());
        assert!(EnsembleSpec::GaussHermite { order: 129 }
            .validate()
            .is_err());
        assert!(EnsembleSpec::default().validate().is_ok());
        assert!(GaussianBath::new(Frequency::mhz(-0.1)).is_err());
    }

    #[test]
    fn zero_beta_gives_zero_biases() {
        for spec in [
            EnsembleSpec::MonteCarlo {
                n_samples: 50,
                seed: 3,
            },
            EnsembleSpec::GaussHermite { order: 7 },
        ] {
            for (b, _) in sample_bias(&bath(0.0), &spec).unwrap() {
                assert_eq!(b.value(), 0.0);
            }
        }
    }

    #[test]
    fn monte_carlo_std_matches_beta() {
        let spec = EnsembleSpec::MonteCarlo {
            n_samples: 100_000,
            seed: 2024,
        };
        let s = sample_bias(&bath(0.056), &spec).unwrap();
        let n = s.len() as f64;
        let mean = s.iter().map(|x| x.0.value()).sum::<f64>() / n;
        let var = s.iter().map(|x| (x.0.value() - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var.sqrt() / 0.056 - 1.0).abs() < 0.01);
    }

    #[test]
    fn hermite_second_moment_is_exact() {
        let s = sample_bias(&bath(0.056), &EnsembleSpec::GaussHermite { order: 20 }).unwrap();
        let m2: f64 = s.iter().map(|(b, w)| w * b.value().powi(2)).sum();
        assert!((m2 / 0.056f64.powi(2) - 1.0).abs() < 1e-12);
        let wsum: f64 = s.iter().map(|x| x.1).sum();
        assert!((wsum - 1.0).abs() < 1e-14);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let spec = EnsembleSpec::MonteCarlo {
            n_samples: 64,
            seed: 9,
        };
        let a = sample_bias_stream(&bath(1.0), &spec, 5).unwrap();
        assert_eq!(a, sample_bias_stream(&bath(1.0), &spec, 5).unwrap());
        assert_ne!(a, sample_bias_stream(&bath(1.0), &spec, 6).unwrap());
    }

    #[test]
    fn constant_run_is_exact() {
        let c = 0.123_456_789_012_345_6;
        for spec in [
            EnsembleSpec::MonteCarlo {
                n_samples: 1000,
                seed: 1,
            },
            EnsembleSpec::GaussHermite { order: 40 },
        ] {
            let avg = ensemble_average(|_| Ok(c), &bath(0.3), &spec).unwrap();
            assert_eq!(avg.mean, c);
            if spec.is_monte_carlo() {
                assert_eq!(avg.stderr, Some(0.0));
            }
        }
    }

    #[test]
    fn cosine_average_is_gaussian_characteristic_function() {
        let beta = 0.056;
        let b = bath(beta);
        // 2πβt up to 4
        for k in 0..=20 {
            let t = 4.0 / (2.0 * PI * beta) * k as f64 / 20.0;
            let want = gaussian_decay(beta, t);
            let run = |x: Frequency| Ok((2.0 * PI * x.value() * t).cos());
            let gh = ensemble_average(run, &b, &EnsembleSpec::GaussHermite { order: 40 }).unwrap();
            assert!((gh.mean - want).abs() < 1e-6, "t = {t}");
            let mc = ensemble_average(
                run,
                &b,
                &EnsembleSpec::MonteCarlo {
                    n_samples: 10_000,
                    seed: k,
                },
            )
            .unwrap();
            let se = mc.stderr.unwrap();
            assert!(
                (mc.mean - want).abs() <= 3.0 * se + 1e-12,
                "t = {t}: {} vs {want} ± {se}",
                mc.mean
            );
        }
    }

    #[test]
    fn member_errors_name_the_bias() {
        let spec = EnsembleSpec::GaussHermite { order: 5 };
        let err = ensemble_average(
            |b| {
                if b.value() > 0.0 {
                    Err(Error::StepUnderflow { dt: 1e-10, t: 0.0 })
                } else {
                    Ok(1.0)
                }
            },
            &bath(1.0),
            &spec,
        )
        .unwrap_err();
        match &err {
            Error::Ensemble { bias, .. } => assert!(*bias > 0.0),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.is_numerical());
    }

    #[test]
    fn fid_examples() {
        let b = bath(0.056);
        let t2 = t2_star(&b);
        assert!((t2 - 4.019).abs() < 1e-3);
        let s = simulate_fid(&b, &[Time::ZERO, Time::us(t2)]).unwrap();
        assert_eq!(s[0], 1.0);
        assert!((s[1] - (-1f64).exp()).abs() < 1e-14);
        assert!(simulate_fid(&b, &[Time::us(1.0), Time::us(0.5)]).is_err());
        assert_eq!(t2_star(&GaussianBath::noiseless()), f64::INFINITY);
    }

    #[test]
    fn fid_ensemble_matches_closed_form() {
        let b = bath(0.056);
        let grid: Vec<Time> = (0..30).map(|k| Time::us(0.4 * k as f64)).collect();
        let closed = simulate_fid(&b, &grid).unwrap();
        let ens = simulate_fid_ensemble(&b, &grid, &EnsembleSpec::default()).unwrap();
        for (c, e) in closed.iter().zip(&ens) {
            assert!((c - e.mean).abs() < 1e-9);
        }
        assert_eq!(visibility_decay_oracle(&b, Time::ZERO), 1.0);
        assert!((visibility_decay_oracle(&b, Time::us(t2_star(&b))) - (-1f64).exp()).abs() < 1e-14);
    }
}
