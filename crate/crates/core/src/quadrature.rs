//! One-dimensional quadrature: adaptive Simpson on finite intervals and
//! Gauss-Hermite rules for Gaussian expectations.

use std::f64::consts::PI;

const MAX_DEPTH: u32 = 48;

/// `∫_a^b f` to roughly `rel_tol` relative accuracy, splitting at `breaks`
/// so no kink of the integrand straddles a panel.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], rel_tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut pts = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&t| t > a && t < b).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    pts.extend(inner);
    pts.push(b);

    // coarse pass to set an absolute tolerance
    let coarse: f64 = pts
        .windows(2)
        .map(|w| composite_simpson(&f, w[0], w[1], 64))
        .sum();
    let abs_tol = rel_tol * coarse.abs().max(f64::MIN_POSITIVE);
    let span = b - a;
    pts.windows(2)
        .map(|w| {
            let share = abs_tol * (w[1] - w[0]) / span;
            let (fa, fm, fb) = (f(w[0]), f(0.5 * (w[0] + w[1])), f(w[1]));
            let whole = (w[1] - w[0]) / 6.0 * (fa + 4.0 * fm + fb);
            simpson_step(&f, w[0], w[1], fa, fm, fb, whole, share, MAX_DEPTH)
        })
        .sum()
}

fn composite_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / (2 * panels) as f64;
    let mut sum = f(a) + f(b);
    for k in 1..2 * panels {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + h * k as f64);
    }
    sum * h / 3.0
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Nodes and weights of the `n`-point rule for `∫ e^{−x²} f(x) dx`.
///
/// Newton iteration on the orthonormal Hermite recurrence; nodes are
/// returned in descending order and weights sum to √π.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
    const PIM4: f64 = 0.751_125_544_464_942_5; // π^(-1/4)
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (PIM4, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let step = p1 / pp;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Gauss-Hermite rule for `E[f(X)]`, `X ~ N(0, σ²)`: abscissas `√2·σ·x_k`,
/// weights normalized to sum to one.
pub fn gaussian_expectation_rule(n: usize, sigma: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_hermite(n);
    let total: f64 = w.iter().sum();
    debug_assert!((total - PI.sqrt()).abs() < 1e-10);
    x.iter()
        .zip(&w)
        .map(|(&xk, &wk)| (std::f64::consts::SQRT_2 * sigma * xk, wk / total))
        .collect()
}
