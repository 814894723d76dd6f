//! Runtime validation suite: re-runs the oracle checks (schedule algebra,
//! Tweedie identity, sampling distributions, Gibbs stationarity and
//! convergence) against the analytic priors and reports pass/fail with the
//! measured statistics.
//!
//! The individual experiments are public so test suites can drive them at
//! their own sizes; `run_validation` composes them with pinned thresholds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numeric::{adaptive_simpson, mean, variance};
use crate::oracles::{
    gaussian_posterior, gmm_grid_density, joint_gmm_grid, tilted_grid_posterior, tv_distance,
};
use crate::priors::{GaussianPrior, GmmPrior, ScorePrior};
use crate::sampler::{gibbs_sweep, run_dig, ChainState, DigConfig, MixtureObservation};
use crate::sde::{sample_unconditional, SolverConfig};
use crate::schedule::NoiseSchedule;

/// One validation check with its measured statistic and pinned threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    /// Measured statistic (smaller is better for every check here).
    pub statistic: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckResult {
    fn gauge(name: &str, statistic: f64, threshold: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            pass: statistic <= threshold && statistic.is_finite(),
            statistic,
            threshold,
            detail,
        }
    }
}

/// Machine-readable validation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub seed: u64,
    pub quick: bool,
    pub sabotaged: bool,
    pub checks: Vec<CheckResult>,
}

/// Options for [`run_validation`].
#[derive(Debug, Clone, Copy)]
pub struct ValidateOptions {
    /// Skip the chain-level checks and shrink the sampling sizes.
    pub quick: bool,
    /// Test hook: flip the score sign inside the sampling checks. The TV
    /// checks must then fail, proving the harness can detect a broken
    /// score.
    pub sabotage_score: bool,
    pub seed: u64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            quick: false,
            sabotage_score: false,
            seed: 0,
        }
    }
}

/// The reference mixture prior used across the sampling checks.
pub fn reference_gmm() -> GmmPrior {
    GmmPrior::scalar(&[0.5, 0.5], &[-1.0, 1.0], 0.25).expect("valid reference mixture")
}

/// The second prior of the two-source convergence check.
pub fn reference_gmm_b() -> GmmPrior {
    GmmPrior::scalar(&[0.35, 0.65], &[-0.8, 0.6], 0.2).expect("valid reference mixture")
}

pub fn reference_schedule() -> NoiseSchedule {
    NoiseSchedule::new(15.0, 2.0).expect("valid reference schedule")
}

/// Score-sign-flipping wrapper: the sabotage hook.
struct SignFlipped<P: ScorePrior>(P);

impl<P: ScorePrior> ScorePrior for SignFlipped<P> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn has_exact_score(&self) -> bool {
        false
    }
    fn denoise(&self, z: &[f64], sigma: f64) -> Result<Vec<f64>> {
        // Tweedie-consistent with the flipped score.
        let s = self.score(z, sigma)?;
        Ok(z.iter().zip(s).map(|(&zi, si)| zi + sigma * sigma * si).collect())
    }
    fn score(&self, z: &[f64], sigma: f64) -> Result<Vec<f64>> {
        Ok(self.0.score(z, sigma)?.into_iter().map(|v| -v).collect())
    }
    fn sample(&self, rng: &mut dyn rand::RngCore) -> Result<Vec<f64>> {
        self.0.sample(rng)
    }
}

fn maybe_sabotaged(prior: GmmPrior, sabotage: bool) -> Box<dyn ScorePrior> {
    if sabotage {
        Box::new(SignFlipped(prior))
    } else {
        Box::new(prior)
    }
}

/// Max round-trip error |t_of_sigma(sigma_of_t(t)) - t| over random t.
pub fn schedule_roundtrip_error(probes: usize, seed: u64) -> Result<f64> {
    let sched = reference_schedule();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let t: f64 = rng.random::<f64>() * sched.t_max();
        let back = sched.t_of_sigma(sched.sigma_of_t(t)?)?;
        worst = worst.max((back - t).abs());
    }
    Ok(worst)
}

/// Max relative gap between closed-form sigma(t) and adaptive quadrature
/// of g^2 over random t.
pub fn schedule_quadrature_error(probes: usize, seed: u64) -> Result<f64> {
    let sched = reference_schedule();
    let alpha = sched.alpha();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let t: f64 = 1e-6 + rng.random::<f64>() * (sched.t_max() - 1e-6);
        let oracle = adaptive_simpson(&|s| (2.0 * s * alpha.ln()).exp(), 0.0, t, 1e-13).sqrt();
        let got = sched.sigma_of_t(t)?;
        worst = worst.max((got - oracle).abs() / oracle);
    }
    Ok(worst)
}

/// Max gap between the analytic score and a central finite difference of
/// log p_sigma over random scalar probes (Gaussian and mixture priors).
pub fn tweedie_fd_error(probes: usize, seed: u64) -> Result<f64> {
    let gauss = GaussianPrior::scalar(0.3, 0.8)?;
    let gmm = reference_gmm();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for i in 0..probes {
        let z = 6.0 * (rng.random::<f64>() - 0.5);
        let sigma = 10f64.powf(rng.random_range(-1.0..0.7));
        let (score, fd) = if i % 2 == 0 {
            let s = gauss.score(&[z], sigma)?[0];
            let fd = (gauss.log_density(&[z + h], sigma)? - gauss.log_density(&[z - h], sigma)?)
                / (2.0 * h);
            (s, fd)
        } else {
            let s = gmm.score(&[z], sigma)?[0];
            let fd =
                (gmm.log_density(&[z + h], sigma)? - gmm.log_density(&[z - h], sigma)?) / (2.0 * h);
            (s, fd)
        };
        worst = worst.max((score - fd).abs());
    }
    Ok(worst)
}

/// TV distance between unconditional solver draws from the reference
/// mixture prior and its analytic density (100 bins on [-4, 4]).
pub fn unconditional_tv_experiment(
    draws: usize,
    steps: usize,
    seed: u64,
    sabotage: bool,
) -> Result<f64> {
    let sched = reference_schedule();
    let prior = maybe_sabotaged(reference_gmm(), sabotage);
    let cfg = SolverConfig::with_steps(steps);
    let samples: Vec<f64> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            Ok(sample_unconditional(&*prior, &sched, &cfg, &mut rng)?[0])
        })
        .collect::<Result<Vec<f64>>>()?;
    let density = gmm_grid_density(&reference_gmm(), 0.0)?;
    Ok(tv_distance(&samples, &density, 100)?.tv)
}

/// TV distance between conditional draws (residual r, noise sigma_v) and
/// the tilted grid posterior of the reference mixture.
pub fn conditional_tv_experiment(
    sigma_v: f64,
    r: f64,
    draws: usize,
    steps: usize,
    seed: u64,
    sabotage: bool,
) -> Result<f64> {
    let sched = reference_schedule();
    let prior = maybe_sabotaged(reference_gmm(), sabotage);
    let cfg = SolverConfig::with_steps(steps);
    let samples: Vec<f64> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            Ok(crate::sampler::conditional_draw(&*prior, &sched, sigma_v, &[r], &cfg, &mut rng)?[0])
        })
        .collect::<Result<Vec<f64>>>()?;
    let density = tilted_grid_posterior(&reference_gmm(), r, sigma_v)?;
    Ok(tv_distance(&samples, &density, 60)?.tv)
}

/// Mean and variance of conjugate conditional draws for the Gaussian(0, 1)
/// prior with sigma_v = 1 and residual r = 2 (exact posterior N(1, 1/2)).
pub fn conditional_conjugate_moments(draws: usize, steps: usize, seed: u64) -> Result<(f64, f64)> {
    let sched = reference_schedule();
    let prior = GaussianPrior::scalar(0.0, 1.0)?;
    let cfg = SolverConfig::with_steps(steps);
    let samples: Vec<f64> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            Ok(crate::sampler::conditional_draw(&prior, &sched, 1.0, &[2.0], &cfg, &mut rng)?[0])
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((mean(&samples), variance(&samples)))
}

/// Pooled first and second moments after applying one Gibbs sweep to exact
/// posterior draws of the two-source Gaussian case (tau^2 = 1, 1;
/// sigma_v = 1; y = 3).
pub struct StationarityStats {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
    /// Exact posterior moments for reference.
    pub exact_mean: [f64; 2],
    pub exact_cov: [[f64; 2]; 2],
}

pub fn stationarity_experiment(chains: usize, steps: usize, seed: u64) -> Result<StationarityStats> {
    let sched = reference_schedule();
    let exact = gaussian_posterior(&[0.0, 0.0], &[1.0, 1.0], 1.0, 3.0)?;
    let obs = MixtureObservation::new(vec![3.0], 1.0, 2)?;
    let cfg = DigConfig {
        solver: SolverConfig::with_steps(steps),
        ..DigConfig::default()
    };

    let states: Vec<(f64, f64)> = (0..chains)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let start = exact.sample(&mut rng);
            let state = ChainState {
                index: 0,
                sources: vec![vec![start[0]], vec![start[1]]],
            };
            let priors: Vec<Box<dyn ScorePrior>> = vec![
                Box::new(GaussianPrior::scalar(0.0, 1.0)?),
                Box::new(GaussianPrior::scalar(0.0, 1.0)?),
            ];
            let swept = gibbs_sweep(&priors, &sched, &obs, &state, &cfg, &mut rng)?;
            Ok((swept.sources[0][0], swept.sources[1][0]))
        })
        .collect::<Result<Vec<_>>>()?;

    let s1: Vec<f64> = states.iter().map(|s| s.0).collect();
    let s2: Vec<f64> = states.iter().map(|s| s.1).collect();
    let (m1, m2) = (mean(&s1), mean(&s2));
    let n = states.len() as f64;
    let cov12 = s1
        .iter()
        .zip(&s2)
        .map(|(a, b)| (a - m1) * (b - m2))
        .sum::<f64>()
        / (n - 1.0);
    Ok(StationarityStats {
        mean: [m1, m2],
        cov: [[variance(&s1), cov12], [cov12, variance(&s2)]],
        exact_mean: [exact.mean[0], exact.mean[1]],
        exact_cov: [
            [exact.cov[0][0], exact.cov[0][1]],
            [exact.cov[1][0], exact.cov[1][1]],
        ],
    })
}

/// Pooled-marginal TV of s1 against the brute-force joint oracle for the
/// two-source scalar mixture case, at a given sweep count.
pub fn theorem1_experiment(
    sweeps: usize,
    chains: usize,
    solver_steps: usize,
    seed: u64,
) -> Result<f64> {
    let sched = reference_schedule();
    let (y_hat, sigma_v) = (0.75, 0.5);
    let cfg = DigConfig {
        iterations: sweeps,
        burn_in: None,
        solver: SolverConfig::with_steps(solver_steps),
        ..DigConfig::default()
    };
    let obs = MixtureObservation::new(vec![y_hat], sigma_v, 2)?;

    let pooled: Vec<f64> = (0..chains)
        .into_par_iter()
        .map(|c| {
            let priors: Vec<Box<dyn ScorePrior>> =
                vec![Box::new(reference_gmm()), Box::new(reference_gmm_b())];
            let chain = run_dig(&priors, &sched, &obs, &cfg, seed.wrapping_add(c as u64))?;
            Ok(chain
                .post_burn_in()
                .iter()
                .map(|s| s.sources[0][0])
                .collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?
        .into_iter()
        .flatten()
        .collect();

    let joint = joint_gmm_grid(&reference_gmm(), &reference_gmm_b(), y_hat, sigma_v)?;
    let marginal = joint.marginal(0)?;
    Ok(tv_distance(&pooled, &marginal, 50)?.tv)
}

/// Run the validation suite. Thresholds are the acceptance thresholds;
/// quick mode drops the chain-level checks and shrinks sampling sizes.
pub fn run_validation(opts: &ValidateOptions) -> Result<ValidationReport> {
    let mut checks = Vec::new();
    let seed = opts.seed;

    let sched = reference_schedule();
    checks.push(CheckResult::gauge(
        "schedule_roundtrip",
        schedule_roundtrip_error(1000, seed)?,
        1e-10 * sched.t_max(),
        "max |t_of_sigma(sigma_of_t(t)) - t| over 1000 random t".into(),
    ));
    checks.push(CheckResult::gauge(
        "schedule_quadrature",
        schedule_quadrature_error(100, seed)?,
        1e-8,
        "max relative gap between closed-form sigma and adaptive quadrature".into(),
    ));
    checks.push(CheckResult::gauge(
        "tweedie_finite_difference",
        tweedie_fd_error(1000, seed)?,
        1e-5,
        "max |score - central FD of log p_sigma| over 1000 scalar probes".into(),
    ));

    let (uncond_draws, uncond_steps) = if opts.quick { (10_000, 200) } else { (20_000, 400) };
    checks.push(CheckResult::gauge(
        "unconditional_tv",
        unconditional_tv_experiment(uncond_draws, uncond_steps, seed, opts.sabotage_score)?,
        0.05,
        format!("TV vs analytic mixture density, {uncond_draws} draws, {uncond_steps} steps"),
    ));

    if !opts.quick {
        let tv = conditional_tv_experiment(0.5, 0.8, 10_000, 200, seed, opts.sabotage_score)?;
        checks.push(CheckResult::gauge(
            "conditional_tv",
            tv,
            0.05,
            "TV vs tilted grid posterior, sigma_v = 0.5, r = 0.8".into(),
        ));

        let (m, v) = conditional_conjugate_moments(10_000, 200, seed)?;
        let se_mean = 3.0 * (0.5f64 / 10_000.0).sqrt() + 0.01;
        let se_var = 3.0 * 0.5 * (2.0f64 / 10_000.0).sqrt() + 0.01;
        checks.push(CheckResult::gauge(
            "conditional_conjugate_mean",
            (m - 1.0).abs(),
            se_mean,
            format!("conjugate posterior mean (measured {m:.4})"),
        ));
        checks.push(CheckResult::gauge(
            "conditional_conjugate_var",
            (v - 0.5).abs(),
            se_var,
            format!("conjugate posterior variance (measured {v:.4})"),
        ));

        let st = stationarity_experiment(10_000, 200, seed)?;
        let mean_err = (st.mean[0] - st.exact_mean[0])
            .abs()
            .max((st.mean[1] - st.exact_mean[1]).abs());
        let mut cov_rel = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                cov_rel = cov_rel.max((st.cov[i][j] - st.exact_cov[i][j]).abs() / st.exact_cov[i][j].abs());
            }
        }
        checks.push(CheckResult::gauge(
            "gibbs_stationarity_mean",
            mean_err,
            0.03,
            "one sweep from exact posterior draws: max mean drift".into(),
        ));
        checks.push(CheckResult::gauge(
            "gibbs_stationarity_cov",
            cov_rel,
            0.07,
            "one sweep from exact posterior draws: max relative covariance drift".into(),
        ));

        let tv200 = theorem1_experiment(200, 100, 200, seed)?;
        let tv10 = theorem1_experiment(10, 100, 200, seed.wrapping_add(977))?;
        checks.push(CheckResult::gauge(
            "consistency_tv_n200",
            tv200,
            0.07,
            "pooled DiG marginal of s1 vs joint-grid oracle at N = 200".into(),
        ));
        checks.push(CheckResult::gauge(
            "consistency_tv_decreasing",
            tv200,
            tv10,
            format!("TV at N = 200 must not exceed TV at N = 10 ({tv10:.4})"),
        ));
    }

    Ok(ValidationReport {
        passed: checks.iter().all(|c| c.pass),
        seed,
        quick: opts.quick,
        sabotaged: opts.sabotage_score,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes_and_serializes() {
        let report = run_validation(&ValidateOptions {
            quick: true,
            sabotage_score: false,
            seed: 3,
        })
        .unwrap();
        assert!(report.passed, "checks failed: {:?}", report.checks);
        // Schema round trip.
        let text = serde_json::to_string(&report).unwrap();
        let back: ValidationReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back.checks.len(), report.checks.len());
    }

    #[test]
    fn sabotaged_score_is_caught_by_the_tv_check() {
        let report = run_validation(&ValidateOptions {
            quick: true,
            sabotage_score: true,
            seed: 3,
        })
        .unwrap();
        assert!(!report.passed);
        let tv = report
            .checks
            .iter()
            .find(|c| c.name == "unconditional_tv")
            .unwrap();
        assert!(!tv.pass, "sign-flipped score must break the TV check");
        // The analytic checks are untouched by the sabotage hook.
        assert!(report.checks.iter().any(|c| c.name == "tweedie_finite_difference" && c.pass));
    }
}
