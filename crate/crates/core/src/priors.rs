//! Plug-and-play score priors.
//!
//! A [`ScorePrior`] answers two queries at any noise level sigma > 0: the
//! MMSE denoiser E[x0 | x0 + sigma*n = z] and the score of the noise-
//! perturbed marginal, grad_z log p_sigma(z). The two are linked by
//! Tweedie's identity, score = (denoise(z, sigma) - z) / sigma^2, which the
//! analytic priors satisfy exactly and the tests enforce.
//!
//! Two analytic priors (Gaussian, isotropic-mixture) provide exact ground
//! truth; [`DenoiserPrior`] adapts a trained network; [`ScaledPrior`] maps a
//! prior for m onto the push-forward prior of c*m, which is what a source
//! scaled to a target interference level follows.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::RngCore;

use crate::dsm::DenoiserNetwork;
use crate::error::{DigError, Result};
use crate::numeric::{log_normal_pdf, log_sum_exp, standard_normal, uniform01};

/// Prior over signals in R^n exposing denoising and score queries at any
/// noise level.
///
/// Implementations are immutable after construction and safe to share
/// across concurrent chains; `sample` takes the caller's generator.
pub trait ScorePrior: Send + Sync {
    /// Signal length n.
    fn dim(&self) -> usize;

    /// True when `score` is the exact analytic gradient rather than a
    /// learned approximation.
    fn has_exact_score(&self) -> bool;

    /// MMSE denoiser E[x0 | x0 + sigma*n = z], sigma > 0.
    fn denoise(&self, z: &[f64], sigma: f64) -> Result<Vec<f64>>;

    /// Score grad_z log p_sigma(z), sigma > 0.
    fn score(&self, z: &[f64], sigma: f64) -> Result<Vec<f64>>;

    /// One draw from the clean-signal distribution. Learned priors cannot
    /// sample directly; use `sde::sample_unconditional` for those.
    fn sample(&self, rng: &mut dyn RngCore) -> Result<Vec<f64>>;
}

fn check_query(dim: usize, z: &[f64], sigma: f64) -> Result<()> {
    if z.len() != dim {
        return Err(DigError::DimensionMismatch {
            expected: dim,
            got: z.len(),
        });
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(DigError::Domain(format!(
            "sigma must be positive and finite, got {sigma}"
        )));
    }
    Ok(())
}

/// Isotropic Gaussian prior N(mean, var * I).
#[derive(Debug, Clone)]
pub struct GaussianPrior {
    mean: Vec<f64>,
    var: f64,
}

impl GaussianPrior {
    pub fn new(mean: Vec<f64>, var: f64) -> Result<Self> {
        if mean.is_empty() {
            return Err(DigError::InvalidArgument("mean must be non-empty".into()));
        }
        if !(var > 0.0) || !var.is_finite() {
            return Err(DigError::InvalidArgument(format!(
                "var must be positive, got {var}"
            )));
        }
        Ok(Self { mean, var })
    }

    pub fn scalar(mean: f64, var: f64) -> Result<Self> {
        Self::new(vec![mean], var)
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn var(&self) -> f64 {
        self.var
    }

    /// The same prior expressed as a one-component mixture.
    pub fn as_gmm(&self) -> GmmPrior {
        GmmPrior::new(vec![1.0], vec![self.mean.clone()], self.var)
            .expect("a Gaussian is a valid one-component mixture")
    }

    /// log p_sigma(z); sigma = 0 gives the clean-signal density.
    pub fn log_density(&self, z: &[f64], sigma: f64) -> Result<f64> {
        if z.len() != self.mean.len() {
            return Err(DigError::DimensionMismatch {
                expected: self.mean.len(),
                got: z.len(),
            });
        }
        let var = self.var + sigma * sigma;
        Ok(z.iter()
            .zip(&self.mean)
            .map(|(&zi, &mi)| log_normal_pdf(zi, mi, var))
            .sum())
    }
}

impl ScorePrior for GaussianPrior {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn has_exact_score(&self) -> bool {
        true
    }

    fn denoise(&self, z: &[f64], sigma: f64) -> Result<Vec<f64>> {
        check_query(self.dim(), z, sigma)?;
        let shrink = self.var / (self.var + sigma * sigma);
        Ok(z.iter()
            .zip(&self.mean)
            .map(|(&zi, &mi)| mi + shrink * (zi - mi))
            .collect())
    }

    fn score(&self, z: &[f64], sigma: f64) -> Result<Vec<f64>> {
        check_query(self.dim(), z, sigma)?;
        let var = self.var + sigma * sigma;
        Ok(z.iter().zip(&self.mean).map(|(&zi, &mi)| (mi - zi) / var).collect())
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let sd = self.var.sqrt();
        Ok(self
            .mean
            .iter()
            .map(|&mi| mi + sd * standard_normal(rng))
            .collect())
    }
}

/// Mixture of isotropic Gaussians with a shared component variance.
///
/// Keeps every closed form short while staying genuinely non-Gaussian,
/// which is all the oracle tests need. All responsibility arithmetic runs
/// through log-sum-exp: small sigma with distant means underflows a naive
/// softmax.
#[derive(Debug, Clone)]
pub struct GmmPrior {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    component_var: f64,
    dim: usize,
}

impl GmmPrior {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, component_var: f64) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() {
            return Err(DigError::InvalidArgument(
                "weights and means must be non-empty and of equal length".into(),
            ));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(DigError::InvalidArgument(
                "mixture weights must be strictly positive".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(DigError::InvalidArgument(format!(
                "mixture weights must sum to 1 within 1e-12, got {total}"
            )));
        }
        if !(component_var > 0.0) || !component_var.is_finite() {
            return Err(DigError::InvalidArgument(format!(
                "component_var must be positive, got {component_var}"
            )));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().any(|m| m.len() != dim) {
            return Err(DigError::InvalidArgument(
                "component means must share a non-zero length".into(),
            ));
        }
        Ok(Self {
            weights,
            means,
            component_var,
            dim,
        })
    }

    pub fn scalar(weights: &[f64], means: &[f64], component_var: f64) -> Result<Self> {
        Self::new(
            weights.to_vec(),
            means.iter().map(|&m| vec![m]).collect(),
            component_var,
        )
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn component_var(&self) -> f64 {
        self.component_var
    }

    /// Posterior component responsibilities at noise level sigma >= 0.
    pub fn responsibilities(&self, z: &[f64], sigma: f64) -> Result<Vec<f64>> {
        let logs = self.log_joint_terms(z, sigma)?;
        let norm = log_sum_exp(&logs);
        Ok(logs.iter().map(|l| (l - norm).exp()).collect())
    }

    /// log p_sigma(z); sigma = 0 gives the clean-signal density.
    pub fn log_density(&self, z: &[f64], sigma: f64) -> Result<f64> {
        Ok(log_sum_exp(&self.log_joint_terms(z, sigma)?))
    }

    fn log_joint_terms(&self, z: &[f64], sigma: f64) -> Result<Vec<f64>> {
        if z.len() != self.dim {
            return Err(DigError::DimensionMismatch {
                expected: self.dim,
                got: z.len(),
            });
        }
        if sigma < 0.0 || !sigma.is_finite() {
            return Err(DigError::Domain(format!("sigma must be >= 0, got {sigma}")));
        }
        let var = self.component_var + sigma * sigma;
        Ok(self
            .weights
            .iter()
            .zip(&self.means)
            .map(|(&w, m)| {
                w.ln()
                    + z.iter()
                        .zip(m)
                        .map(|(&zi, &mi)| log_normal_pdf(zi, mi, var))
                        .sum::<f64>()
            })
            .collect())
    }
}

impl ScorePrior for GmmPrior {
    fn dim(&self) -> usize {
        self.dim
    }

    fn has_exact_score(&self) -> bool {
        true
    }

    fn denoise(&self, z: &[f64], sigma: f64) -> Result<Vec<f64>> {
        check_query(self.dim, z, sigma)?;
        let resp = self.responsibilities(z, sigma)?;
        let shrink = self.component_var / (self.component_var + sigma * sigma);
        let mut out = vec![0.0; self.dim];
        for (r, m) in resp.iter().zip(&self.means) {
            for i in 0..self.dim {
                // Component posterior mean, responsibility-weighted.
                out[i] += r * (m[i] + shrink * (z[i] - m[i]));
            }
        }
        Ok(out)
    }

    fn score(&self, z: &[f64], sigma: f64) -> Result<Vec<f64>> {
        check_query(self.dim, z, sigma)?;
        let resp = self.responsibilities(z, sigma)?;
        let var = self.component_var + sigma * sigma;
        let mut out = vec![0.0; self.dim];
        for (r, m) in resp.iter().zip(&self.means) {
            for i in 0..self.dim {
                out[i] += r * (m[i] - z[i]) / var;
            }
        }
        Ok(out)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let u: f64 = uniform01(rng);
        let mut acc = 0.0;
        let mut idx = self.weights.len() - 1;
        for (j, &w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                idx = j;
                break;
            }
        }
        let sd = self.component_var.sqrt();
        Ok(self.means[idx]
            .iter()
            .map(|&mi| mi + sd * standard_normal(rng))
            .collect())
    }
}

/// Prior of the scaled source c * m when `inner` is the prior of m.
///
/// Exact change of variables: if z = c*m + sigma*eps then z/c is m observed
/// at noise level sigma/c, so
/// denoise_c(z, sigma) = c * denoise(z/c, sigma/c) and
/// score_c(z, sigma) = score(z/c, sigma/c) / c.
#[derive(Debug, Clone)]
pub struct ScaledPrior<P: ScorePrior> {
    inner: P,
    scale: f64,
}

impl<P: ScorePrior> ScaledPrior<P> {
    pub fn new(inner: P, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(DigError::InvalidArgument(format!(
                "scale must be positive, got {scale}"
            )));
        }
        Ok(Self { inner, scale })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: ScorePrior> ScorePrior for ScaledPrior<P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn has_exact_score(&self) -> bool {
        self.inner.has_exact_score()
    }

    fn denoise(&self, z: &[f64], sigma: f64) -> Result<Vec<f64>> {
        check_query(self.dim(), z, sigma)?;
        let c = self.scale;
        let inner_z: Vec<f64> = z.iter().map(|&x| x / c).collect();
        let d = self.inner.denoise(&inner_z, sigma / c)?;
        Ok(d.into_iter().map(|x| c * x).collect())
    }

    fn score(&self, z: &[f64], sigma: f64) -> Result<Vec<f64>> {
        check_query(self.dim(), z, sigma)?;
        let c = self.scale;
        let inner_z: Vec<f64> = z.iter().map(|&x| x / c).collect();
        let s = self.inner.score(&inner_z, sigma / c)?;
        Ok(s.into_iter().map(|x| x / c).collect())
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let m = self.inner.sample(rng)?;
        Ok(m.into_iter().map(|x| self.scale * x).collect())
    }
}

/// A trained denoising network used as a plug-and-play prior.
///
/// Queries outside the trained sigma range are clamped into it and counted
/// rather than rejected: Gibbs residuals occasionally land slightly outside
/// the trained support and a hard failure would kill a long chain. Both
/// `denoise` and `score` use the clamped level, so Tweedie's identity holds
/// at the level the network actually saw.
pub struct DenoiserPrior {
    net: DenoiserNetwork,
    clamp_warnings: AtomicU64,
}

impl DenoiserPrior {
    pub fn new(net: DenoiserNetwork) -> Self {
        Self {
            net,
            clamp_warnings: AtomicU64::new(0),
        }
    }

    /// Trained noise-level range [sigma_min, sigma_max].
    pub fn sigma_range(&self) -> (f64, f64) {
        self.net.sigma_range()
    }

    /// Number of queries that fell outside the trained sigma range so far.
    pub fn clamp_warnings(&self) -> u64 {
        self.clamp_warnings.load(Ordering::Relaxed)
    }

    pub fn network(&self) -> &DenoiserNetwork {
        &self.net
    }

    fn effective_sigma(&self, sigma: f64) -> f64 {
        let (lo, hi) = self.net.sigma_range();
        if sigma < lo || sigma > hi {
            self.clamp_warnings.fetch_add(1, Ordering::Relaxed);
            sigma.clamp(lo, hi)
        } else {
            sigma
        }
    }
}

impl ScorePrior for DenoiserPrior {
    fn dim(&self) -> usize {
        self.net.signal_len()
    }

    fn has_exact_score(&self) -> bool {
        false
    }

    fn denoise(&self, z: &[f64], sigma: f64) -> Result<Vec<f64>> {
        check_query(self.dim(), z, sigma)?;
        self.net.forward(z, self.effective_sigma(sigma))
    }

    fn score(&self, z: &[f64], sigma: f64) -> Result<Vec<f64>> {
        check_query(self.dim(), z, sigma)?;
        let s = self.effective_sigma(sigma);
        let d = self.net.forward(z, s)?;
        Ok(d.iter().zip(z).map(|(&di, &zi)| (di - zi) / (s * s)).collect())
    }

    fn sample(&self, _rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        Err(DigError::InvalidArgument(
            "a learned prior has no direct sampler; run sde::sample_unconditional".into(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{adaptive_simpson, mean, variance};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn standard_normal_vec(n: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        (0..n).map(|_| standard_normal(rng)).collect()
    }

    fn sym_gmm() -> GmmPrior {
        GmmPrior::scalar(&[0.5, 0.5], &[-1.0, 1.0], 0.25).unwrap()
    }

    #[test]
    fn gaussian_denoise_matches_posterior_mean_and_quadrature() {
        let p = GaussianPrior::scalar(0.0, 1.0).unwrap();
        let d = p.denoise(&[2.0], 1.0).unwrap();
        assert_relative_eq!(d[0], 1.0, max_relative = 1e-14);

        // Independent oracle: E[x | z] by 1-D quadrature of x p(x) p(z|x).
        let z = 2.0;
        let joint = |x: f64| (-(x * x) / 2.0).exp() * (-((z - x) * (z - x)) / 2.0).exp();
        let num = adaptive_simpson(&|x| x * joint(x), -12.0, 14.0, 1e-12);
        let den = adaptive_simpson(&joint, -12.0, 14.0, 1e-12);
        assert_relative_eq!(d[0], num / den, max_relative = 1e-9);
    }

    #[test]
    fn denoise_is_near_identity_at_vanishing_noise() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let gauss = GaussianPrior::scalar(0.4, 1.0).unwrap();
        let gmm = sym_gmm();
        for _ in 0..50 {
            let zg = gauss.sample(&mut rng).unwrap();
            let zm = gmm.sample(&mut rng).unwrap();
            let sigma = 1e-3;
            assert_abs_diff_eq!(gauss.denoise(&zg, sigma).unwrap()[0], zg[0], epsilon = 1e-4);
            assert_abs_diff_eq!(gmm.denoise(&zm, sigma).unwrap()[0], zm[0], epsilon = 1e-4);
        }
    }

    #[test]
    fn symmetric_mixture_denoises_origin_to_origin() {
        let d = sym_gmm().denoise(&[0.0], 0.5).unwrap();
        assert_abs_diff_eq!(d[0], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn gaussian_score_matches_closed_form_and_finite_difference() {
        let p = GaussianPrior::scalar(0.0, 1.0).unwrap();
        let s = p.score(&[2.0], 1.0).unwrap();
        assert_relative_eq!(s[0], -1.0, max_relative = 1e-14);

        let h = 1e-6;
        let fd = (p.log_density(&[2.0 + h], 1.0).unwrap() - p.log_density(&[2.0 - h], 1.0).unwrap())
            / (2.0 * h);
        assert_abs_diff_eq!(s[0], fd, epsilon = 1e-8);
    }

    #[test]
    fn score_vanishes_at_symmetric_mode_centers() {
        let p = GaussianPrior::scalar(0.7, 2.0).unwrap();
        assert_abs_diff_eq!(p.score(&[0.7], 0.3).unwrap()[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sym_gmm().score(&[0.0], 0.5).unwrap()[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn gmm_score_matches_finite_difference_pin() {
        let p = sym_gmm();
        let s = p.score(&[1.0], 0.5).unwrap()[0];
        // Pinned from the finite-difference oracle.
        assert_abs_diff_eq!(s, -0.0719448398483662, epsilon = 1e-12);
        let h = 1e-6;
        let fd = (p.log_density(&[1.0 + h], 0.5).unwrap() - p.log_density(&[1.0 - h], 0.5).unwrap())
            / (2.0 * h);
        assert_abs_diff_eq!(s, fd, epsilon = 1e-5);
    }

    #[test]
    fn tweedie_identity_holds_for_analytic_priors() {
        let gauss = GaussianPrior::new(vec![0.3, -0.2], 0.8).unwrap();
        let gmm = GmmPrior::new(
            vec![0.2, 0.5, 0.3],
            vec![vec![-1.0, 0.0], vec![0.5, 0.5], vec![1.5, -1.0]],
            0.3,
        )
        .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let z: Vec<f64> = standard_normal_vec(2, &mut rng).iter().map(|e| 2.0 * e).collect();
            let sigma = 10f64.powf(rand::Rng::random_range(&mut rng, -2.0..1.0));
            for prior in [&gauss as &dyn ScorePrior, &gmm] {
                let score = prior.score(&z, sigma).unwrap();
                let den = prior.denoise(&z, sigma).unwrap();
                for i in 0..2 {
                    let tweedie = (den[i] - z[i]) / (sigma * sigma);
                    assert_abs_diff_eq!(score[i], tweedie, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn responsibilities_normalize_even_far_from_support() {
        let p = GmmPrior::scalar(&[0.25, 0.25, 0.5], &[-30.0, 0.0, 30.0], 0.01).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..200 {
            let z = 60.0 * (rand::Rng::random::<f64>(&mut rng) - 0.5);
            let sigma = 10f64.powf(rand::Rng::random_range(&mut rng, -3.0..1.5));
            let r = p.responsibilities(&[z], sigma).unwrap();
            assert!(r.iter().all(|&x| x.is_finite() && x >= 0.0));
            assert_abs_diff_eq!(r.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn sigma_domain_is_enforced() {
        let p = GaussianPrior::scalar(0.0, 1.0).unwrap();
        assert!(matches!(p.denoise(&[0.0], 0.0), Err(DigError::Domain(_))));
        assert!(matches!(p.score(&[0.0], -1.0), Err(DigError::Domain(_))));
        assert!(matches!(
            p.denoise(&[0.0, 1.0], 1.0),
            Err(DigError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn invalid_mixture_parameters_rejected() {
        assert!(GmmPrior::scalar(&[0.6, 0.5], &[0.0, 1.0], 0.1).is_err());
        assert!(GmmPrior::scalar(&[0.5, 0.5], &[0.0, 1.0], 0.0).is_err());
        assert!(GmmPrior::scalar(&[1.0, 0.0], &[0.0, 1.0], 0.1).is_err());
        assert!(GaussianPrior::scalar(0.0, 0.0).is_err());
    }

    #[test]
    fn gaussian_sampling_moments() {
        let p = GaussianPrior::scalar(0.0, 1.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let draws: Vec<f64> = (0..100_000).map(|_| p.sample(&mut rng).unwrap()[0]).collect();
        // CLT bound 3 sigma / sqrt(N) ~ 0.0095; the contract allows 0.02.
        assert!(mean(&draws).abs() < 0.02);
        assert_relative_eq!(variance(&draws), 1.0, max_relative = 0.02);
    }

    #[test]
    fn mixture_sampling_component_frequencies() {
        // Components far apart so the sign identifies the component.
        let p = GmmPrior::scalar(&[0.3, 0.7], &[-3.0, 3.0], 0.01).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let n = 100_000;
        let positive = (0..n)
            .filter(|_| p.sample(&mut rng).unwrap()[0] > 0.0)
            .count();
        assert_abs_diff_eq!(positive as f64 / n as f64, 0.7, epsilon = 0.01);
    }

    #[test]
    fn degenerate_gaussian_collapses_to_its_mean() {
        let p = GaussianPrior::scalar(2.5, 1e-12).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_abs_diff_eq!(p.sample(&mut rng).unwrap()[0], 2.5, epsilon = 1e-5);
        }
    }

    #[test]
    fn noisy_marginal_matches_analytic_mixture_density() {
        // p_sigma of a GMM is the same GMM with component variance
        // tau^2 + sigma^2; chi-square test at the 1% level.
        let p = GmmPrior::scalar(&[0.4, 0.6], &[-1.0, 1.0], 0.25).unwrap();
        let sigma = 0.7;
        let mut rng = ChaCha12Rng::seed_from_u64(100);
        let n = 100_000usize;
        let draws: Vec<f64> = (0..n)
            .map(|_| p.sample(&mut rng).unwrap()[0] + sigma * standard_normal(&mut rng))
            .collect();

        let bins = 60usize;
        let (lo, hi) = (-4.0, 4.0);
        let width = (hi - lo) / bins as f64;
        let mut observed = vec![0f64; bins];
        for &d in &draws {
            let idx = (((d - lo) / width).floor() as i64).clamp(0, bins as i64 - 1) as usize;
            observed[idx] += 1.0;
        }
        let density = |x: f64| p.log_density(&[x], sigma).unwrap().exp();
        let mut chi2 = 0.0;
        for (b, &obs) in observed.iter().enumerate() {
            let mut a = lo + b as f64 * width;
            let mut c = a + width;
            // Edge bins absorb the tails.
            if b == 0 {
                a = -30.0;
            }
            if b == bins - 1 {
                c = 30.0;
            }
            let expected = n as f64 * adaptive_simpson(&density, a, c, 1e-10);
            chi2 += (obs - expected) * (obs - expected) / expected;
        }
        // Wilson-Hilferty critical value for chi-square(df) at 1%.
        let df = (bins - 1) as f64;
        let crit = df * (1.0 - 2.0 / (9.0 * df) + 2.3263479 * (2.0 / (9.0 * df)).sqrt()).powi(3);
        assert!(chi2 < crit, "chi2 = {chi2:.1} >= crit = {crit:.1}");
    }

    #[test]
    fn scaled_gaussian_equals_analytic_push_forward() {
        let inner = GaussianPrior::scalar(0.4, 0.9).unwrap();
        let c = 25.0;
        let scaled = ScaledPrior::new(inner, c).unwrap();
        let direct = GaussianPrior::scalar(c * 0.4, c * c * 0.9).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        for _ in 0..200 {
            let z = 40.0 * (rand::Rng::random::<f64>(&mut rng) - 0.5);
            let sigma = 10f64.powf(rand::Rng::random_range(&mut rng, -2.0..1.5));
            assert_relative_eq!(
                scaled.denoise(&[z], sigma).unwrap()[0],
                direct.denoise(&[z], sigma).unwrap()[0],
                max_relative = 1e-11
            );
            assert_abs_diff_eq!(
                scaled.score(&[z], sigma).unwrap()[0],
                direct.score(&[z], sigma).unwrap()[0],
                epsilon = 1e-12
            );
        }
    }
}
