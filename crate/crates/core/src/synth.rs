//! Synthetic benchmark signals: quasi-periodic heartbeat pulse trains,
//! piecewise-constant motion (velocity) profiles with sigmoidal
//! transitions, SIR/SNR-controlled mixing and evaluation metrics.
//!
//! Ratio conventions (emitted in every mix manifest so results are
//! self-describing): SIR = 10 log10(||s||^2 / ||i_scaled||^2) on total
//! energies, SNR = 10 log10(||s||^2 / (n sigma_v^2)) against the
//! per-sample noise variance.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DigError, Result};
use crate::numeric::{norm_sq, standard_normal, uniform01};

/// Quasi-periodic pulse-train parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeartbeatSpec {
    /// Signal length in samples.
    pub n: usize,
    /// Samples per second.
    pub sample_rate: f64,
    /// Beats per second; each inter-beat interval draws its own rate.
    pub rate_range: (f64, f64),
    /// Pulse width in seconds, drawn per pulse.
    pub pulse_width_range: (f64, f64),
    /// Relative amplitude jitter per pulse (0 = identical amplitudes).
    pub amplitude_jitter: f64,
    /// Dataset-level seed; item i derives its own stream.
    pub seed: u64,
}

impl HeartbeatSpec {
    /// 10-second clips at 100 samples/s.
    pub fn full() -> Self {
        Self {
            n: 1000,
            sample_rate: 100.0,
            rate_range: (0.9, 1.5),
            pulse_width_range: (0.05, 0.10),
            amplitude_jitter: 0.2,
            seed: 0,
        }
    }

    /// Desk-scale preset for fast CI.
    pub fn desk() -> Self {
        Self {
            n: 128,
            sample_rate: 32.0,
            rate_range: (1.0, 1.6),
            pulse_width_range: (0.08, 0.14),
            amplitude_jitter: 0.2,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || !(self.sample_rate > 0.0) {
            return Err(DigError::InvalidArgument(
                "heartbeat spec needs n > 0 and a positive sample rate".into(),
            ));
        }
        if !(self.rate_range.0 > 0.0 && self.rate_range.1 >= self.rate_range.0) {
            return Err(DigError::InvalidArgument("bad rate range".into()));
        }
        if !(self.pulse_width_range.0 > 0.0 && self.pulse_width_range.1 >= self.pulse_width_range.0)
        {
            return Err(DigError::InvalidArgument("bad pulse width range".into()));
        }
        if !(0.0..1.0).contains(&self.amplitude_jitter) {
            return Err(DigError::InvalidArgument(
                "amplitude jitter must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

impl Default for HeartbeatSpec {
    fn default() -> Self {
        Self::full()
    }
}

/// Piecewise-constant velocity profile parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MotionSpec {
    pub n: usize,
    /// Inclusive range for the number of constant-velocity segments.
    pub segments_range: (usize, usize),
    /// Per-segment amplitude magnitude range; signs are random.
    pub amplitude_range: (f64, f64),
    /// Logistic slope per sample at segment transitions.
    pub transition_sharpness: f64,
    pub seed: u64,
}

impl MotionSpec {
    pub fn full() -> Self {
        Self {
            n: 1000,
            segments_range: (2, 6),
            amplitude_range: (0.5, 2.0),
            transition_sharpness: 0.15,
            seed: 0,
        }
    }

    pub fn desk() -> Self {
        Self {
            n: 128,
            segments_range: (2, 5),
            amplitude_range: (0.5, 2.0),
            transition_sharpness: 0.5,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(DigError::InvalidArgument("motion spec needs n > 0".into()));
        }
        if self.segments_range.0 == 0 || self.segments_range.1 < self.segments_range.0 {
            return Err(DigError::InvalidArgument("bad segments range".into()));
        }
        if !(self.amplitude_range.0 > 0.0 && self.amplitude_range.1 >= self.amplitude_range.0) {
            return Err(DigError::InvalidArgument("bad amplitude range".into()));
        }
        if !(self.transition_sharpness > 0.0) {
            return Err(DigError::InvalidArgument(
                "transition sharpness must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl Default for MotionSpec {
    fn default() -> Self {
        Self::full()
    }
}

/// Mixing parameters; both ratios are met exactly by construction.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MixSpec {
    pub sir_db: f64,
    pub snr_db: f64,
    pub seed: u64,
}

/// One Gaussian-derivative pulse, peak-normalized to amplitude 1.
fn pulse(x: f64) -> f64 {
    x * (-0.5 * x * x).exp() * std::f64::consts::E.sqrt()
}

/// One quasi-periodic heartbeat-like signal: Gaussian-derivative pulses at
/// beat times driven by per-interval rate draws, zero-mean.
pub fn gen_heartbeat(spec: &HeartbeatSpec, rng: &mut dyn RngCore) -> Vec<f64> {
    spec.validate().expect("heartbeat spec validated by caller");
    let duration = spec.n as f64 / spec.sample_rate;
    let uniform = |rng: &mut dyn RngCore, lo: f64, hi: f64| -> f64 {
        let u: f64 = uniform01(rng);
        lo + u * (hi - lo)
    };

    // Beats cover [-period, duration + period] so edges carry pulses too.
    let mut beats: Vec<(f64, f64, f64)> = Vec::new(); // (time, width, amplitude)
    let first_period = 1.0 / spec.rate_range.0;
    let mut t = -first_period + uniform(rng, 0.0, first_period);
    while t < duration + first_period {
        let width = uniform(rng, spec.pulse_width_range.0, spec.pulse_width_range.1);
        let amp = 1.0 + spec.amplitude_jitter * uniform(rng, -1.0, 1.0);
        beats.push((t, width, amp));
        let rate = uniform(rng, spec.rate_range.0, spec.rate_range.1);
        t += 1.0 / rate;
    }

    let mut signal = vec![0.0; spec.n];
    for (i, s) in signal.iter_mut().enumerate() {
        let ti = i as f64 / spec.sample_rate;
        for &(tb, w, a) in &beats {
            let x = (ti - tb) / w;
            if x.abs() < 8.0 {
                *s += a * pulse(x);
            }
        }
    }
    let m = signal.iter().sum::<f64>() / spec.n as f64;
    signal.iter_mut().for_each(|s| *s -= m);
    signal
}

pub(crate) struct MotionDraw {
    pub(crate) signal: Vec<f64>,
    #[allow(dead_code)] // read by the sharpness-limit test
    pub(crate) levels: Vec<f64>,
    /// Interior transition centers, in samples.
    #[allow(dead_code)]
    pub(crate) boundaries: Vec<f64>,
}

pub(crate) fn motion_profile(spec: &MotionSpec, rng: &mut dyn RngCore) -> MotionDraw {
    spec.validate().expect("motion spec validated by caller");
    let uniform = |rng: &mut dyn RngCore, lo: f64, hi: f64| -> f64 {
        let u: f64 = uniform01(rng);
        lo + u * (hi - lo)
    };
    let segments = if spec.segments_range.0 == spec.segments_range.1 {
        spec.segments_range.0
    } else {
        rng.random_range(spec.segments_range.0..=spec.segments_range.1)
    };
    let levels: Vec<f64> = (0..segments)
        .map(|_| {
            let mag = uniform(rng, spec.amplitude_range.0, spec.amplitude_range.1);
            let sign = if rng.random_range(0..2u8) == 0 { -1.0 } else { 1.0 };
            sign * mag
        })
        .collect();
    let mut boundaries: Vec<f64> = (0..segments.saturating_sub(1))
        .map(|_| uniform(rng, 0.0, spec.n as f64))
        .collect();
    boundaries.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let k = spec.transition_sharpness;
    let signal = (0..spec.n)
        .map(|i| {
            let ti = i as f64;
            let mut v = levels[0];
            for (seg, &b) in boundaries.iter().enumerate() {
                let step = levels[seg + 1] - levels[seg];
                v += step / (1.0 + (-k * (ti - b)).exp());
            }
            v
        })
        .collect();
    MotionDraw {
        signal,
        levels,
        boundaries,
    }
}

/// One motion-artifact signal: a sum of sigmoid-smoothed velocity steps.
pub fn gen_motion(spec: &MotionSpec, rng: &mut dyn RngCore) -> Vec<f64> {
    motion_profile(spec, rng).signal
}

/// Scale a dataset to unit pooled standard deviation, in place.
/// Returns the divisor that was applied.
pub fn normalize_dataset(signals: &mut [Vec<f64>]) -> f64 {
    let count: usize = signals.iter().map(|s| s.len()).sum();
    assert!(count > 0, "cannot normalize an empty dataset");
    let mean: f64 = signals.iter().flatten().sum::<f64>() / count as f64;
    let var: f64 = signals
        .iter()
        .flatten()
        .map(|&x| (x - mean) * (x - mean))
        .sum::<f64>()
        / count as f64;
    let sd = var.sqrt();
    assert!(sd > 0.0, "cannot normalize a constant dataset");
    for s in signals.iter_mut() {
        for x in s.iter_mut() {
            *x /= sd;
        }
    }
    sd
}

/// A generated, normalized training corpus.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub signals: Vec<Vec<f64>>,
    /// Pooled standard deviation divided out during normalization.
    pub scale: f64,
}

fn item_rng(seed: u64, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Generate `count` heartbeat signals and normalize the corpus.
pub fn gen_heartbeat_dataset(spec: &HeartbeatSpec, count: usize) -> Result<Dataset> {
    spec.validate()?;
    if count == 0 {
        return Err(DigError::InvalidArgument("count must be >= 1".into()));
    }
    let mut signals: Vec<Vec<f64>> = (0..count)
        .map(|i| gen_heartbeat(spec, &mut item_rng(spec.seed, i as u64)))
        .collect();
    let scale = normalize_dataset(&mut signals);
    Ok(Dataset { signals, scale })
}

/// Generate `count` motion signals and normalize the corpus.
pub fn gen_motion_dataset(spec: &MotionSpec, count: usize) -> Result<Dataset> {
    spec.validate()?;
    if count == 0 {
        return Err(DigError::InvalidArgument("count must be >= 1".into()));
    }
    let mut signals: Vec<Vec<f64>> = (0..count)
        .map(|i| gen_motion(spec, &mut item_rng(spec.seed, i as u64)))
        .collect();
    let scale = normalize_dataset(&mut signals);
    Ok(Dataset { signals, scale })
}

/// A mixed observation with its ground truth and scaling metadata.
#[derive(Debug, Clone)]
pub struct MixOutcome {
    pub y_hat: Vec<f64>,
    /// Observational noise level implied by the target SNR.
    pub sigma_v: f64,
    /// Factor applied to the interference to meet the target SIR.
    pub interference_scale: f64,
    /// Ground truth signal of interest (unscaled).
    pub signal: Vec<f64>,
    /// Ground truth interference, already scaled.
    pub interference: Vec<f64>,
}

/// Mix signal + scaled interference + Gaussian noise at exact SIR/SNR.
pub fn mix(
    signal: &[f64],
    interference: &[f64],
    spec: &MixSpec,
    rng: &mut dyn RngCore,
) -> Result<MixOutcome> {
    if signal.len() != interference.len() {
        return Err(DigError::LengthMismatch {
            a: signal.len(),
            b: interference.len(),
        });
    }
    if signal.is_empty() {
        return Err(DigError::InvalidArgument("signals must be non-empty".into()));
    }
    let es = norm_sq(signal);
    let ei = norm_sq(interference);
    if es == 0.0 {
        return Err(DigError::ZeroEnergy("signal"));
    }
    if ei == 0.0 {
        return Err(DigError::ZeroEnergy("interference"));
    }
    let scale = (es / (ei * 10f64.powf(spec.sir_db / 10.0))).sqrt();
    let sigma_v = (es / (signal.len() as f64 * 10f64.powf(spec.snr_db / 10.0))).sqrt();
    let interference_scaled: Vec<f64> = interference.iter().map(|&x| scale * x).collect();
    let y_hat: Vec<f64> = signal
        .iter()
        .zip(&interference_scaled)
        .map(|(&s, &i)| s + i + sigma_v * standard_normal(rng))
        .collect();
    Ok(MixOutcome {
        y_hat,
        sigma_v,
        interference_scale: scale,
        signal: signal.to_vec(),
        interference: interference_scaled,
    })
}

/// Achieved SIR in dB, recomputed from emitted components.
pub fn achieved_sir_db(outcome: &MixOutcome) -> f64 {
    10.0 * (norm_sq(&outcome.signal) / norm_sq(&outcome.interference)).log10()
}

/// Achieved SNR in dB implied by the emitted sigma_v.
pub fn achieved_snr_db(outcome: &MixOutcome) -> f64 {
    let n = outcome.signal.len() as f64;
    10.0 * (norm_sq(&outcome.signal) / (n * outcome.sigma_v * outcome.sigma_v)).log10()
}

/// Mean squared error (1/n) sum (est - truth)^2.
pub fn mse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(DigError::LengthMismatch {
            a: estimate.len(),
            b: truth.len(),
        });
    }
    if estimate.is_empty() {
        return Err(DigError::InvalidArgument("signals must be non-empty".into()));
    }
    Ok(estimate
        .iter()
        .zip(truth)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>()
        / estimate.len() as f64)
}

/// Manifest emitted next to every dataset CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub kind: String,
    pub count: usize,
    pub seed: u64,
    /// Pooled standard deviation divided out during normalization.
    pub scale: f64,
    pub file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heartbeat: Option<HeartbeatSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub motion: Option<MotionSpec>,
}

/// Manifest emitted next to every mixture CSV; ties the observation to its
/// ground-truth files and records the conventions used.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixManifest {
    pub sir_db: f64,
    pub snr_db: f64,
    pub seed: u64,
    pub count: usize,
    pub n: usize,
    /// Per-row observational noise level.
    pub sigma_v: Vec<f64>,
    /// Per-row interference scaling factor.
    pub interference_scale: Vec<f64>,
    pub mixture_file: String,
    pub signal_file: String,
    pub interference_file: String,
    /// Ratio conventions, spelled out so results are self-describing.
    pub conventions: String,
}

pub const RATIO_CONVENTIONS: &str = "SIR = 10 log10(||s||^2/||i_scaled||^2); \
SNR = 10 log10(||s||^2/(n sigma_v^2))";

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn fixed_rate_and_zero_jitter_give_an_exactly_periodic_train() {
        let spec = HeartbeatSpec {
            n: 256,
            sample_rate: 32.0,
            rate_range: (1.0, 1.0), // period = exactly 32 samples
            pulse_width_range: (0.1, 0.1),
            amplitude_jitter: 0.0,
            seed: 0,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let s = gen_heartbeat(&spec, &mut rng);
        // Autocorrelation peak over candidate lags must sit at the period
        // within one sample.
        let autocorr = |lag: usize| -> f64 {
            (0..s.len() - lag).map(|i| s[i] * s[i + lag]).sum::<f64>()
        };
        let (mut best_lag, mut best) = (0, f64::NEG_INFINITY);
        for lag in 16..=64 {
            let c = autocorr(lag);
            if c > best {
                best = c;
                best_lag = lag;
            }
        }
        assert!(
            (best_lag as i64 - 32).unsigned_abs() <= 1,
            "autocorrelation peak at lag {best_lag}, expected 32"
        );
    }

    #[test]
    fn generators_are_seed_deterministic() {
        let hb = HeartbeatSpec::desk();
        let mo = MotionSpec::desk();
        let a = gen_heartbeat(&hb, &mut ChaCha12Rng::seed_from_u64(7));
        let b = gen_heartbeat(&hb, &mut ChaCha12Rng::seed_from_u64(7));
        assert_eq!(a, b);
        let c = gen_motion(&mo, &mut ChaCha12Rng::seed_from_u64(7));
        let d = gen_motion(&mo, &mut ChaCha12Rng::seed_from_u64(7));
        assert_eq!(c, d);
        // Dataset generation is deterministic end to end.
        let d1 = gen_heartbeat_dataset(&hb, 8).unwrap();
        let d2 = gen_heartbeat_dataset(&hb, 8).unwrap();
        assert_eq!(d1.signals, d2.signals);
        assert_eq!(d1.scale, d2.scale);
    }

    #[test]
    fn normalized_corpus_has_unit_pooled_std() {
        let ds = gen_heartbeat_dataset(&HeartbeatSpec::desk(), 2000).unwrap();
        let count: usize = ds.signals.iter().map(|s| s.len()).sum();
        let mean: f64 = ds.signals.iter().flatten().sum::<f64>() / count as f64;
        let var: f64 = ds
            .signals
            .iter()
            .flatten()
            .map(|&x| (x - mean) * (x - mean))
            .sum::<f64>()
            / count as f64;
        let sd = var.sqrt();
        assert!((0.98..=1.02).contains(&sd), "pooled std {sd}");
        assert_abs_diff_eq!(sd, 1.0, epsilon = 1e-9);

        let dm = gen_motion_dataset(&MotionSpec::desk(), 500).unwrap();
        let count: usize = dm.signals.iter().map(|s| s.len()).sum();
        let mean: f64 = dm.signals.iter().flatten().sum::<f64>() / count as f64;
        let var: f64 = dm
            .signals
            .iter()
            .flatten()
            .map(|&x| (x - mean) * (x - mean))
            .sum::<f64>()
            / count as f64;
        assert_abs_diff_eq!(var.sqrt(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn single_segment_motion_is_constant() {
        let spec = MotionSpec {
            segments_range: (1, 1),
            ..MotionSpec::desk()
        };
        let s = gen_motion(&spec, &mut ChaCha12Rng::seed_from_u64(5));
        let spread = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - s.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread <= 1e-12, "constant profile expected, spread {spread}");
    }

    #[test]
    fn extreme_sharpness_converges_to_hard_steps() {
        let spec = MotionSpec {
            n: 200,
            segments_range: (3, 3),
            amplitude_range: (0.5, 2.0),
            transition_sharpness: 1e6,
            seed: 0,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let draw = motion_profile(&spec, &mut rng);
        for (i, &v) in draw.signal.iter().enumerate() {
            let ti = i as f64;
            // Skip samples within one sample of a jump.
            if draw.boundaries.iter().any(|&b| (ti - b).abs() <= 1.0) {
                continue;
            }
            let seg = draw.boundaries.iter().filter(|&&b| b < ti).count();
            assert!(
                (v - draw.levels[seg]).abs() <= 1e-3,
                "sample {i} = {v}, expected level {}",
                draw.levels[seg]
            );
        }
    }

    #[test]
    fn mix_meets_the_requested_ratios_exactly() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let hb = gen_heartbeat(&HeartbeatSpec::desk(), &mut rng);
        let mo = gen_motion(&MotionSpec::desk(), &mut rng);

        // SIR = 0 dB: equal energies.
        let spec = MixSpec {
            sir_db: 0.0,
            snr_db: 13.0,
            seed: 0,
        };
        let out = mix(&hb, &mo, &spec, &mut ChaCha12Rng::seed_from_u64(1)).unwrap();
        assert_relative_eq!(norm_sq(&out.interference), norm_sq(&hb), max_relative = 1e-12);

        // SIR = -20 dB: interference energy 100x the signal energy.
        let spec = MixSpec {
            sir_db: -20.0,
            snr_db: 13.0,
            seed: 0,
        };
        let out = mix(&hb, &mo, &spec, &mut ChaCha12Rng::seed_from_u64(1)).unwrap();
        assert_relative_eq!(
            norm_sq(&out.interference),
            100.0 * norm_sq(&hb),
            max_relative = 1e-12
        );

        // Recomputed ratios match the targets to 1e-9 dB.
        assert_abs_diff_eq!(achieved_sir_db(&out), -20.0, epsilon = 1e-9);
        assert_abs_diff_eq!(achieved_snr_db(&out), 13.0, epsilon = 1e-9);
    }

    #[test]
    fn mixes_regenerate_bit_identically() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let hb = gen_heartbeat(&HeartbeatSpec::desk(), &mut rng);
        let mo = gen_motion(&MotionSpec::desk(), &mut rng);
        let spec = MixSpec {
            sir_db: -20.1,
            snr_db: 13.2,
            seed: 99,
        };
        let a = mix(&hb, &mo, &spec, &mut ChaCha12Rng::seed_from_u64(spec.seed)).unwrap();
        let b = mix(&hb, &mo, &spec, &mut ChaCha12Rng::seed_from_u64(spec.seed)).unwrap();
        assert_eq!(a.y_hat, b.y_hat);
        assert_eq!(a.sigma_v, b.sigma_v);
    }

    #[test]
    fn zero_energy_inputs_are_rejected() {
        let spec = MixSpec {
            sir_db: 0.0,
            snr_db: 10.0,
            seed: 0,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        assert!(matches!(
            mix(&[0.0; 8], &[1.0; 8], &spec, &mut rng),
            Err(DigError::ZeroEnergy("signal"))
        ));
        assert!(matches!(
            mix(&[1.0; 8], &[0.0; 8], &spec, &mut rng),
            Err(DigError::ZeroEnergy("interference"))
        ));
        assert!(matches!(
            mix(&[1.0; 8], &[1.0; 7], &spec, &mut rng),
            Err(DigError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn mse_basics_and_cross_check() {
        let a = vec![1.0, 2.0, 3.0];
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let shifted: Vec<f64> = a.iter().map(|x| x + 0.5).collect();
        assert_abs_diff_eq!(mse(&shifted, &a).unwrap(), 0.25, epsilon = 1e-15);
        assert!(mse(&a, &[1.0]).is_err());

        // Independent two-pass computation on a random pair.
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let x: Vec<f64> = (0..64).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let y: Vec<f64> = (0..64).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let n = x.len() as f64;
        let two_pass = {
            let mx2: f64 = x.iter().map(|v| v * v).sum::<f64>() / n;
            let my2: f64 = y.iter().map(|v| v * v).sum::<f64>() / n;
            let mxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / n;
            mx2 - 2.0 * mxy + my2
        };
        assert_relative_eq!(mse(&x, &y).unwrap(), two_pass, max_relative = 1e-12);
    }
}
