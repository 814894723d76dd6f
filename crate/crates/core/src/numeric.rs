//! Small numeric helpers shared by the crate and its validation suite.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

/// One standard normal draw from a type-erased generator.
pub fn standard_normal(rng: &mut dyn RngCore) -> f64 {
    StandardNormal.sample(rng)
}

/// One U[0, 1) draw from a type-erased generator.
pub fn uniform01(rng: &mut dyn RngCore) -> f64 {
    rand::distr::StandardUniform.sample(rng)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` with relative
/// tolerance `rel_tol`.
///
/// Used as an independent oracle for the closed-form noise-level integral:
/// it never sees the closed form, only the integrand. The per-node error
/// budget is floored at the f64 resolution of the integral's own
/// magnitude, so unattainable tolerances degrade to machine precision
/// instead of exploding the recursion tree.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        floor: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol.max(floor) {
            left + right + delta / 15.0
        } else {
            let child = (0.5 * tol).max(floor);
            recurse(f, a, fa, m, fm, left, lm, flm, child, floor, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, child, floor, depth - 1)
        }
    }

    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    let scale = whole.abs().max(f64::MIN_POSITIVE);
    let tol = rel_tol * scale;
    let floor = 1e-16 * scale;
    recurse(f, a, fa, b, fb, whole, m, fm, tol, floor, 28)
}

/// log(sum_i exp(x_i)) without overflow.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log-density of N(x; mu, var) in one dimension.
pub fn log_normal_pdf(x: f64, mu: f64, var: f64) -> f64 {
    let d = x - mu;
    -0.5 * (d * d / var + var.ln() + core::f64::consts::TAU.ln())
}

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Squared Euclidean norm.
pub fn norm_sq(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn simpson_polynomial_exact() {
        // Simpson integrates cubics exactly.
        let v = adaptive_simpson(&|x| x * x * x - 2.0 * x + 1.0, -1.0, 3.0, 1e-12);
        assert_relative_eq!(v, 16.0, max_relative = 1e-12);
    }

    #[test]
    fn simpson_exponential() {
        let v = adaptive_simpson(&|x| x.exp(), 0.0, 2.0, 1e-12);
        assert_relative_eq!(v, 2f64.exp() - 1.0, max_relative = 1e-10);
    }

    #[test]
    fn log_sum_exp_matches_naive_and_survives_extremes() {
        let xs = [-1.0, 0.5, 2.0];
        let naive: f64 = xs.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert_relative_eq!(log_sum_exp(&xs), naive, max_relative = 1e-14);
        // Would underflow naively.
        let far = [-1200.0, -1201.0];
        assert_relative_eq!(
            log_sum_exp(&far),
            -1200.0 + (1.0 + (-1.0f64).exp()).ln(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn normal_pdf_normalizes() {
        let total = adaptive_simpson(&|x| log_normal_pdf(x, 0.3, 2.0).exp(), -20.0, 20.0, 1e-12);
        assert_relative_eq!(total, 1.0, max_relative = 1e-9);
    }
}
