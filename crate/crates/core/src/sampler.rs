//! Gibbs sampling over sources with conditional draws realized by partial
//! reverse diffusion.
//!
//! For the additive observation y = sum_k s_k + v with v ~ N(0, sigma_v^2 I),
//! the conditional law of source k given everything else depends on the
//! data only through the residual r_k = y - sum_{j != k} s_j, and equals the
//! law of s_k given s_k + sigma_v * n = r_k. That conditional is exactly what
//! a reverse-time diffusion run started at state r_k from time t_v with
//! sigma(t_v) = sigma_v produces, so each Gibbs update is one partial SDE
//! simulation under the source's own prior.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{DigError, Result};
use crate::priors::ScorePrior;
use crate::schedule::NoiseSchedule;
use crate::sde::{simulate_reverse, SolverConfig};

/// The inverse-problem instance: observed mixture, noise level, source count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureObservation {
    pub y_hat: Vec<f64>,
    pub sigma_v: f64,
    pub num_sources: usize,
}

impl MixtureObservation {
    pub fn new(y_hat: Vec<f64>, sigma_v: f64, num_sources: usize) -> Result<Self> {
        if y_hat.is_empty() {
            return Err(DigError::InvalidArgument("y_hat must be non-empty".into()));
        }
        if num_sources == 0 {
            return Err(DigError::InvalidArgument("need at least one source".into()));
        }
        if !sigma_v.is_finite() || sigma_v < 0.0 {
            return Err(DigError::InvalidArgument(format!(
                "sigma_v must be finite and >= 0, got {sigma_v}"
            )));
        }
        Ok(Self {
            y_hat,
            sigma_v,
            num_sources,
        })
    }

    /// Noiseless separation is out of scope (add epsilon-noise instead),
    /// and sigma_v beyond sigma(T) has no matching diffusion time.
    pub fn validate_against(&self, sched: &NoiseSchedule) -> Result<()> {
        if self.sigma_v == 0.0 {
            return Err(DigError::InvalidArgument(
                "sigma_v = 0 is unsupported: the conditional draw degenerates; \
                 add epsilon-noise to the observation"
                    .into(),
            ));
        }
        if self.sigma_v > sched.sigma_max() {
            return Err(DigError::ScheduleHorizon {
                sigma: self.sigma_v,
                sigma_max: sched.sigma_max(),
            });
        }
        Ok(())
    }
}

/// Current Gibbs iterate: one vector per source.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    /// Sweep index; 0 is the initializer state.
    pub index: usize,
    pub sources: Vec<Vec<f64>>,
}

/// Ordered record of sweeps plus burn-in metadata.
#[derive(Debug, Clone)]
pub struct PosteriorChain {
    /// State after each sweep, indices 1..=N.
    pub sweeps: Vec<ChainState>,
    pub burn_in: usize,
    pub seed: u64,
    pub config_fingerprint: String,
}

impl PosteriorChain {
    /// States retained after discarding burn-in.
    pub fn post_burn_in(&self) -> &[ChainState] {
        &self.sweeps[self.burn_in..]
    }

    pub fn num_sources(&self) -> usize {
        self.sweeps.first().map_or(0, |s| s.sources.len())
    }
}

/// How the chain is seeded at sweep 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Initializer {
    Zeros,
    /// Independent draws from each prior (analytic priors only).
    PriorDraw,
    /// s_k = y / K; keeps the initial residuals small.
    #[default]
    EqualSplit,
}

/// Within-sweep update order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScanOrder {
    /// Ascending k, matching the nested-loop sampler literally.
    #[default]
    Ascending,
    /// Fresh uniform permutation each sweep.
    RandomScan,
}

/// Chain-level configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DigConfig {
    /// Number of sweeps N.
    pub iterations: usize,
    /// Sweeps to discard; `None` means 20% of N.
    pub burn_in: Option<usize>,
    /// Solver settings for every conditional draw.
    pub solver: SolverConfig,
    pub initializer: Initializer,
    pub scan: ScanOrder,
}

impl Default for DigConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            burn_in: None,
            solver: SolverConfig::default(),
            initializer: Initializer::default(),
            scan: ScanOrder::default(),
        }
    }
}

impl DigConfig {
    pub fn effective_burn_in(&self) -> usize {
        self.burn_in
            .unwrap_or_else(|| (self.iterations as f64 * 0.2).floor() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(DigError::InvalidArgument("iterations must be >= 1".into()));
        }
        if self.effective_burn_in() >= self.iterations {
            return Err(DigError::InvalidArgument(format!(
                "burn_in {} must be smaller than iterations {}",
                self.effective_burn_in(),
                self.iterations
            )));
        }
        if self.solver.steps == 0 {
            return Err(DigError::InvalidArgument("solver steps must be >= 1".into()));
        }
        Ok(())
    }

    /// Short digest of the serialized config, recorded on every chain.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        let mut out = String::with_capacity(16);
        for b in &digest[..8] {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }
}

/// Residual r_k = y - sum_{j != k} s_j for 0-based source index k.
pub fn residual(obs: &MixtureObservation, state: &ChainState, k: usize) -> Vec<f64> {
    residual_of(&obs.y_hat, &state.sources, k)
}

fn residual_of(y: &[f64], sources: &[Vec<f64>], k: usize) -> Vec<f64> {
    let mut r = y.to_vec();
    for (j, s) in sources.iter().enumerate() {
        if j != k {
            for (ri, si) in r.iter_mut().zip(s) {
                *ri -= si;
            }
        }
    }
    r
}

/// One conditional draw: start the source's reverse SDE at the residual,
/// at the time t_v where the schedule noise level equals sigma_v, and run
/// it down to zero.
pub fn conditional_draw(
    prior: &dyn ScorePrior,
    sched: &NoiseSchedule,
    sigma_v: f64,
    r: &[f64],
    solver: &SolverConfig,
    rng: &mut dyn RngCore,
) -> Result<Vec<f64>> {
    if sigma_v == 0.0 {
        return Err(DigError::InvalidArgument(
            "sigma_v = 0 is unsupported: the conditional draw degenerates".into(),
        ));
    }
    let t_v = sched.t_of_sigma(sigma_v)?;
    simulate_reverse(prior, sched, r, t_v, solver, rng)
}

/// One full sweep: refresh every source once through its conditional draw.
pub fn gibbs_sweep(
    priors: &[Box<dyn ScorePrior>],
    sched: &NoiseSchedule,
    obs: &MixtureObservation,
    state: &ChainState,
    cfg: &DigConfig,
    rng: &mut dyn RngCore,
) -> Result<ChainState> {
    check_setup(priors, obs, Some(state))?;
    let k_total = priors.len();
    let order: Vec<usize> = match cfg.scan {
        ScanOrder::Ascending => (0..k_total).collect(),
        ScanOrder::RandomScan => {
            let mut idx: Vec<usize> = (0..k_total).collect();
            for i in (1..k_total).rev() {
                let j = rng.random_range(0..=i);
                idx.swap(i, j);
            }
            idx
        }
    };

    let mut sources = state.sources.clone();
    for k in order {
        let r = residual_of(&obs.y_hat, &sources, k);
        sources[k] = conditional_draw(&*priors[k], sched, obs.sigma_v, &r, &cfg.solver, rng)?;
        audit_residual_identity(&obs.y_hat, &sources, k, &r);
    }
    Ok(ChainState {
        index: state.index + 1,
        sources,
    })
}

/// r_k + sum_{j != k} s_j must reproduce y; catches bookkeeping bugs in the
/// sweep at negligible cost.
fn audit_residual_identity(y: &[f64], sources: &[Vec<f64>], k: usize, r: &[f64]) {
    for i in 0..y.len() {
        let mut total = r[i];
        for (j, s) in sources.iter().enumerate() {
            if j != k {
                total += s[i];
            }
        }
        let scale = 1.0 + y[i].abs() + sources.iter().map(|s| s[i].abs()).sum::<f64>();
        debug_assert!(
            (total - y[i]).abs() <= 1e-12 * scale,
            "residual identity violated at entry {i}: {total} vs {}",
            y[i]
        );
    }
}

/// Run the full sampler: N sweeps from the configured initializer,
/// recording the state after every sweep. Deterministic given `seed`.
pub fn run_dig(
    priors: &[Box<dyn ScorePrior>],
    sched: &NoiseSchedule,
    obs: &MixtureObservation,
    cfg: &DigConfig,
    seed: u64,
) -> Result<PosteriorChain> {
    cfg.validate()?;
    obs.validate_against(sched)?;
    check_setup(priors, obs, None)?;

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut state = init_state(priors, obs, cfg.initializer, &mut rng)?;
    let mut sweeps = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        state = gibbs_sweep(priors, sched, obs, &state, cfg, &mut rng)?;
        sweeps.push(state.clone());
    }
    Ok(PosteriorChain {
        sweeps,
        burn_in: cfg.effective_burn_in(),
        seed,
        config_fingerprint: cfg.fingerprint(),
    })
}

pub(crate) fn init_state(
    priors: &[Box<dyn ScorePrior>],
    obs: &MixtureObservation,
    initializer: Initializer,
    rng: &mut dyn RngCore,
) -> Result<ChainState> {
    let n = obs.y_hat.len();
    let k_total = priors.len();
    let sources = match initializer {
        Initializer::Zeros => vec![vec![0.0; n]; k_total],
        Initializer::EqualSplit => {
            let split: Vec<f64> = obs.y_hat.iter().map(|y| y / k_total as f64).collect();
            vec![split; k_total]
        }
        Initializer::PriorDraw => priors
            .iter()
            .map(|p| p.sample(rng))
            .collect::<Result<Vec<_>>>()?,
    };
    Ok(ChainState { index: 0, sources })
}

/// Posterior-mean estimate: per-source average of the last `n_samples`
/// post-burn-in states.
pub fn mmse_estimate(chain: &PosteriorChain, n_samples: usize) -> Result<Vec<Vec<f64>>> {
    let post = chain.post_burn_in();
    if n_samples == 0 {
        return Err(DigError::InvalidArgument("n_samples must be >= 1".into()));
    }
    if n_samples > post.len() {
        return Err(DigError::InsufficientSamples {
            requested: n_samples,
            available: post.len(),
        });
    }
    average_states(&post[post.len() - n_samples..])
}

/// Posterior-mean estimate from `n_samples` states thinned evenly across
/// the post-burn-in range (always including the final state).
pub fn mmse_estimate_thinned(chain: &PosteriorChain, n_samples: usize) -> Result<Vec<Vec<f64>>> {
    let post = chain.post_burn_in();
    if n_samples == 0 {
        return Err(DigError::InvalidArgument("n_samples must be >= 1".into()));
    }
    if n_samples > post.len() {
        return Err(DigError::InsufficientSamples {
            requested: n_samples,
            available: post.len(),
        });
    }
    if n_samples == 1 {
        return average_states(&post[post.len() - 1..]);
    }
    let picked: Vec<ChainState> = (0..n_samples)
        .map(|j| post[(post.len() - 1) * j / (n_samples - 1)].clone())
        .collect();
    average_states(&picked)
}

fn average_states(states: &[ChainState]) -> Result<Vec<Vec<f64>>> {
    let k_total = states[0].sources.len();
    let n = states[0].sources[0].len();
    let mut out = vec![vec![0.0; n]; k_total];
    for st in states {
        for (acc, s) in out.iter_mut().zip(&st.sources) {
            for (a, v) in acc.iter_mut().zip(s) {
                *a += v;
            }
        }
    }
    let scale = 1.0 / states.len() as f64;
    for acc in &mut out {
        for a in acc.iter_mut() {
            *a *= scale;
        }
    }
    Ok(out)
}

/// Chain dump for one source: rows = sweeps, columns = signal entries.
pub fn write_chain_source_csv(
    chain: &PosteriorChain,
    k: usize,
    out: &mut impl std::io::Write,
) -> Result<()> {
    for st in &chain.sweeps {
        let row: Vec<String> = st.sources[k].iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

fn check_setup(
    priors: &[Box<dyn ScorePrior>],
    obs: &MixtureObservation,
    state: Option<&ChainState>,
) -> Result<()> {
    if priors.len() != obs.num_sources {
        return Err(DigError::InvalidArgument(format!(
            "{} priors for {} sources",
            priors.len(),
            obs.num_sources
        )));
    }
    let n = obs.y_hat.len();
    for p in priors {
        if p.dim() != n {
            return Err(DigError::DimensionMismatch {
                expected: n,
                got: p.dim(),
            });
        }
    }
    if let Some(st) = state {
        if st.sources.len() != priors.len() || st.sources.iter().any(|s| s.len() != n) {
            return Err(DigError::InvalidArgument(
                "chain state does not match the observation".into(),
            ));
        }
    }
    Ok(())
}
