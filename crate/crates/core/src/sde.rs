//! Reverse-time SDE simulation by Euler-Maruyama.
//!
//! Running d x = -g^2(t) score(x, sigma(t)) dt + g(t) dw backward from
//! t_start to 0 turns a state distributed like the noisy marginal at
//! t_start into a draw from the clean-signal law. Full runs from t = T
//! give unconditional samples; partial runs from t_v with
//! sigma(t_v) = sigma_v realize the conditional draws inside the Gibbs
//! sampler.
//!
//! The score, g and sigma are all evaluated at the left endpoint of each
//! interval. The grid's final interval lands exactly on t = 0, so the
//! singular score at zero noise is never queried.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{DigError, Result};
use crate::numeric::standard_normal;
use crate::priors::ScorePrior;
use crate::schedule::{GridSpacing, NoiseSchedule};

/// Discretization settings for a reverse-time run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Number of Euler-Maruyama intervals M.
    pub steps: usize,
    pub spacing: GridSpacing,
}

impl Default for SolverConfig {
    /// Default for conditional draws, which start well below T.
    fn default() -> Self {
        Self {
            steps: 200,
            spacing: GridSpacing::default(),
        }
    }
}

impl SolverConfig {
    /// Heavier default for full runs from t = T.
    pub fn unconditional() -> Self {
        Self {
            steps: 400,
            spacing: GridSpacing::default(),
        }
    }

    pub fn with_steps(steps: usize) -> Self {
        Self {
            steps,
            ..Self::default()
        }
    }
}

/// A completed reverse run with its per-grid-point states.
#[derive(Debug, Clone)]
pub struct SdeRun {
    pub t_start: f64,
    /// (t_i, state at t_i) for every grid point, in grid order; the first
    /// entry is the start state, the last is the state at t = 0.
    pub trace: Vec<(f64, Vec<f64>)>,
}

impl SdeRun {
    pub fn final_state(&self) -> &[f64] {
        &self.trace.last().expect("trace is never empty").1
    }
}

/// One Euler-Maruyama update from `t_i` down to `t_next` with caller-
/// supplied noise, so unit tests can pin single steps exactly:
///
/// x' = x + g^2(t_i) * score(x, sigma(t_i)) * h + g(t_i) * sqrt(h) * eps,
/// h = t_i - t_next.
pub fn em_step(
    prior: &dyn ScorePrior,
    sched: &NoiseSchedule,
    x: &[f64],
    t_i: f64,
    t_next: f64,
    eps: &[f64],
) -> Result<Vec<f64>> {
    if eps.len() != x.len() {
        return Err(DigError::DimensionMismatch {
            expected: x.len(),
            got: eps.len(),
        });
    }
    let h = t_i - t_next;
    if h < 0.0 || t_next < 0.0 {
        return Err(DigError::Domain(format!(
            "need t_i >= t_next >= 0, got {t_i} -> {t_next}"
        )));
    }
    if h == 0.0 {
        return Ok(x.to_vec());
    }
    let sigma = sched.sigma_of_t(t_i)?;
    if sigma == 0.0 {
        return Err(DigError::DegenerateStep { t: t_i });
    }
    let g = sched.g_of_t(t_i)?;
    let score = prior.score(x, sigma)?;
    let diff = g * h.sqrt();
    Ok(x.iter()
        .zip(score.iter().zip(eps))
        .map(|(&xi, (&si, &ei))| xi + g * g * si * h + diff * ei)
        .collect())
}

/// Chain [`em_step`] over a solver grid from `t_start` down to 0 and
/// return the state at t = 0. Deterministic given the generator state.
pub fn simulate_reverse(
    prior: &dyn ScorePrior,
    sched: &NoiseSchedule,
    x_start: &[f64],
    t_start: f64,
    cfg: &SolverConfig,
    rng: &mut dyn RngCore,
) -> Result<Vec<f64>> {
    let mut x = check_start(prior, x_start)?;
    let grid = sched.make_grid(t_start, cfg.steps, cfg.spacing)?;
    let mut eps = vec![0.0; x.len()];
    for (t_i, t_next) in grid.intervals() {
        for e in &mut eps {
            *e = standard_normal(rng);
        }
        x = em_step(prior, sched, &x, t_i, t_next, &eps)?;
    }
    Ok(x)
}

/// As [`simulate_reverse`], but records the state at every grid point.
pub fn simulate_reverse_traced(
    prior: &dyn ScorePrior,
    sched: &NoiseSchedule,
    x_start: &[f64],
    t_start: f64,
    cfg: &SolverConfig,
    rng: &mut dyn RngCore,
) -> Result<SdeRun> {
    let mut x = check_start(prior, x_start)?;
    let grid = sched.make_grid(t_start, cfg.steps, cfg.spacing)?;
    let mut trace = Vec::with_capacity(grid.points().len());
    trace.push((t_start, x.clone()));
    let mut eps = vec![0.0; x.len()];
    for (t_i, t_next) in grid.intervals() {
        for e in &mut eps {
            *e = standard_normal(rng);
        }
        x = em_step(prior, sched, &x, t_i, t_next, &eps)?;
        trace.push((t_next, x.clone()));
    }
    Ok(SdeRun { t_start, trace })
}

/// Approximate draw from the clean-signal law: start at
/// x ~ N(0, sigma(T)^2 I) and run the full reverse process.
pub fn sample_unconditional(
    prior: &dyn ScorePrior,
    sched: &NoiseSchedule,
    cfg: &SolverConfig,
    rng: &mut dyn RngCore,
) -> Result<Vec<f64>> {
    let sigma_max = sched.sigma_max();
    let x_start: Vec<f64> = (0..prior.dim())
        .map(|_| sigma_max * standard_normal(rng))
        .collect();
    simulate_reverse(prior, sched, &x_start, sched.t_max(), cfg, rng)
}

/// Trace dump: one row per grid point with columns t, sigma(t), x[0..n).
pub fn write_trace_csv(
    run: &SdeRun,
    sched: &NoiseSchedule,
    out: &mut impl std::io::Write,
) -> Result<()> {
    let n = run.final_state().len();
    let header: Vec<String> = ["t".into(), "sigma".into()]
        .into_iter()
        .chain((0..n).map(|i| format!("x{i}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for (t, state) in &run.trace {
        let sigma = sched.sigma_of_t(*t)?;
        let mut row = format!("{t},{sigma}");
        for v in state {
            row.push(',');
            row.push_str(&v.to_string());
        }
        writeln!(out, "{row}")?;
    }
    Ok(())
}

fn check_start(prior: &dyn ScorePrior, x_start: &[f64]) -> Result<Vec<f64>> {
    if x_start.len() != prior.dim() {
        return Err(DigError::DimensionMismatch {
            expected: prior.dim(),
            got: x_start.len(),
        });
    }
    Ok(x_start.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{mean, variance};
    use crate::priors::GaussianPrior;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// Improper flat prior: zero score, identity denoiser. Under it the
    /// reverse SDE is pure diffusion.
    struct FlatPrior(usize);

    impl ScorePrior for FlatPrior {
        fn dim(&self) -> usize {
            self.0
        }
        fn has_exact_score(&self) -> bool {
            true
        }
        fn denoise(&self, z: &[f64], _sigma: f64) -> crate::error::Result<Vec<f64>> {
            Ok(z.to_vec())
        }
        fn score(&self, z: &[f64], _sigma: f64) -> crate::error::Result<Vec<f64>> {
            Ok(vec![0.0; z.len()])
        }
        fn sample(&self, _rng: &mut dyn RngCore) -> crate::error::Result<Vec<f64>> {
            Ok(vec![0.0; self.0])
        }
    }

    fn sched15() -> NoiseSchedule {
        NoiseSchedule::new(15.0, 2.0).unwrap()
    }

    #[test]
    fn zero_interval_returns_input_unchanged() {
        let prior = GaussianPrior::scalar(0.0, 1.0).unwrap();
        let x = vec![1.25];
        let out = em_step(&prior, &sched15(), &x, 0.5, 0.5, &[0.0]).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn single_step_matches_hand_composed_value() {
        // eps = 0, Gaussian(0, 1), alpha = 15, t 0.5 -> 0.4, x = 1:
        // x + 15 * (-1 / (1 + sigma(0.5)^2)) * 0.1 with sigma(0.5)^2 pinned
        // from the quadrature oracle as 2.58488561148199.
        let prior = GaussianPrior::scalar(0.0, 1.0).unwrap();
        let out = em_step(&prior, &sched15(), &[1.0], 0.5, 0.4, &[0.0]).unwrap();
        assert_relative_eq!(out[0], 0.58157660729936, max_relative = 1e-12);
    }

    #[test]
    fn degenerate_and_inverted_steps_are_rejected() {
        let prior = GaussianPrior::scalar(0.0, 1.0).unwrap();
        assert!(matches!(
            em_step(&prior, &sched15(), &[1.0], 0.0, -0.1, &[0.0]),
            Err(DigError::Domain(_))
        ));
        assert!(matches!(
            em_step(&prior, &sched15(), &[1.0], 0.3, 0.4, &[0.0]),
            Err(DigError::Domain(_))
        ));
    }

    #[test]
    fn flat_prior_accumulates_exactly_the_injected_noise() {
        // With zero score the update is x += g(t_i) sqrt(h_i) eps_i; feed
        // eps = 1 and check the deterministic accumulation.
        let sched = sched15();
        let prior = FlatPrior(1);
        let grid = sched.make_grid(1.0, 8, GridSpacing::UniformT).unwrap();
        let mut x = vec![0.5];
        let mut expected = 0.5;
        for (t_i, t_next) in grid.intervals() {
            x = em_step(&prior, &sched, &x, t_i, t_next, &[1.0]).unwrap();
            expected += sched.g_of_t(t_i).unwrap() * (t_i - t_next).sqrt();
        }
        assert_relative_eq!(x[0], expected, max_relative = 1e-12);
    }

    #[test]
    fn flat_prior_noise_variance_matches_the_analytic_sum() {
        let sched = sched15();
        let prior = FlatPrior(1);
        let cfg = SolverConfig {
            steps: 16,
            spacing: GridSpacing::UniformT,
        };
        let grid = sched.make_grid(0.8, 16, GridSpacing::UniformT).unwrap();
        let analytic: f64 = grid
            .intervals()
            .map(|(t_i, t_next)| {
                let g = sched.g_of_t(t_i).unwrap();
                g * g * (t_i - t_next)
            })
            .sum();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let finals: Vec<f64> = (0..20_000)
            .map(|_| simulate_reverse(&prior, &sched, &[0.0], 0.8, &cfg, &mut rng).unwrap()[0])
            .collect();
        assert_relative_eq!(variance(&finals), analytic, max_relative = 0.05);
    }

    #[test]
    fn one_tiny_step_is_a_denoising_move() {
        let sched = sched15();
        let prior = GaussianPrior::scalar(0.0, 1.0).unwrap();
        let t_start = sched.t_of_sigma(1e-3).unwrap();
        let cfg = SolverConfig {
            steps: 1,
            spacing: GridSpacing::UniformT,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let x_start = [2.0];
        let out = simulate_reverse(&prior, &sched, &x_start, t_start, &cfg, &mut rng).unwrap();
        let denoised = prior.denoise(&x_start, 1e-3).unwrap();
        assert_abs_diff_eq!(out[0], denoised[0], epsilon = 1e-2);
    }

    #[test]
    fn unconditional_gaussian_sampling_recovers_prior_moments() {
        let sched = sched15();
        let prior = GaussianPrior::scalar(0.0, 1.0).unwrap();
        let cfg = SolverConfig::unconditional();
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let draws: Vec<f64> = (0..10_000)
            .map(|_| sample_unconditional(&prior, &sched, &cfg, &mut rng).unwrap()[0])
            .collect();
        assert!(mean(&draws).abs() < 0.05, "mean {}", mean(&draws));
        assert_relative_eq!(variance(&draws), 1.0, max_relative = 0.05);
    }

    #[test]
    fn interior_marginals_and_step_halving() {
        // From the exact start law N(0, tau^2 + sigma(T)^2) the state at
        // grid time t must stay N(0, tau^2 + sigma(t)^2); halving the step
        // must not worsen the final-moment error beyond Monte Carlo noise.
        let sched = sched15();
        let prior = GaussianPrior::scalar(0.0, 1.0).unwrap();
        let n_runs = 10_000;

        let run_with = |steps: usize, seed: u64| -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
            let cfg = SolverConfig {
                steps,
                spacing: GridSpacing::default(),
            };
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let start_sd = (1.0 + sched.sigma_max() * sched.sigma_max()).sqrt();
            // Probe three interior grid indices spread across the run.
            let probes = [steps / 4, steps / 2, 3 * steps / 4];
            let mut probe_vals: Vec<Vec<f64>> = vec![Vec::new(); probes.len()];
            let mut finals = Vec::with_capacity(n_runs);
            let mut probe_times = vec![0.0; probes.len()];
            for _ in 0..n_runs {
                let x0 = [start_sd * standard_normal(&mut rng)];
                let run = simulate_reverse_traced(&prior, &sched, &x0, sched.t_max(), &cfg, &mut rng)
                    .unwrap();
                for (pi, &idx) in probes.iter().enumerate() {
                    probe_times[pi] = run.trace[idx].0;
                    probe_vals[pi].push(run.trace[idx].1[0]);
                }
                finals.push(run.final_state()[0]);
            }
            (probe_times, probe_vals, finals)
        };

        let (times, probe_vals, finals_400) = run_with(400, 7);
        for (t, vals) in times.iter().zip(&probe_vals) {
            let sigma = sched.sigma_of_t(*t).unwrap();
            let want = 1.0 + sigma * sigma;
            assert_relative_eq!(variance(vals), want, max_relative = 0.05);
        }
        assert_relative_eq!(variance(&finals_400), 1.0, max_relative = 0.05);

        let (_, _, finals_200) = run_with(200, 8);
        let err_400 = (variance(&finals_400) - 1.0).abs();
        let err_200 = (variance(&finals_200) - 1.0).abs();
        // Monte Carlo slack: sd of a variance estimate is ~ var*sqrt(2/N).
        let mc = 3.0 * (2.0 / n_runs as f64).sqrt();
        assert!(
            err_400 <= err_200 + mc,
            "halving steps worsened the error: {err_400} vs {err_200}"
        );
    }

    #[test]
    fn near_point_mass_prior_collapses_draws() {
        let sched = sched15();
        let prior = GaussianPrior::scalar(2.0, 1e-6).unwrap();
        let cfg = SolverConfig::unconditional();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for _ in 0..50 {
            let draw = sample_unconditional(&prior, &sched, &cfg, &mut rng).unwrap();
            assert_abs_diff_eq!(draw[0], 2.0, epsilon = 0.01);
        }
    }

    #[test]
    fn fixed_seed_reproduces_trajectories_bit_for_bit() {
        let sched = sched15();
        let prior = GaussianPrior::new(vec![0.0, 1.0], 0.5).unwrap();
        let cfg = SolverConfig::with_steps(50);
        let run = |seed| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            simulate_reverse(&prior, &sched, &[3.0, -1.0], 0.7, &cfg, &mut rng).unwrap()
        };
        assert_eq!(run(123), run(123));
        assert_ne!(run(123), run(124));
    }

    #[test]
    fn trace_timestamps_match_the_grid() {
        let sched = sched15();
        let prior = GaussianPrior::scalar(0.0, 1.0).unwrap();
        let cfg = SolverConfig::with_steps(10);
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let run = simulate_reverse_traced(&prior, &sched, &[1.0], 0.9, &cfg, &mut rng).unwrap();
        let grid = sched.make_grid(0.9, 10, cfg.spacing).unwrap();
        let times: Vec<f64> = run.trace.iter().map(|(t, _)| *t).collect();
        assert_eq!(times, grid.points());

        let mut buf = Vec::new();
        write_trace_csv(&run, &sched, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,sigma,x0\n"));
        assert_eq!(text.lines().count(), grid.points().len() + 1);
    }
}
