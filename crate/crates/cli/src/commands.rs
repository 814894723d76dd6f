//! Subcommand implementations. Validation happens up front and maps to
//! exit code 1; anything failing after compute has started maps to 2.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use dig_core::csvio::{read_signals_csv, write_atomic, write_signals_csv, write_signals_to};
use dig_core::dsm::{self, Optimizer, TrainConfig};
use dig_core::sampler::{self, MixtureObservation};
use dig_core::synth::{
    self, DatasetManifest, HeartbeatSpec, MixManifest, MixSpec, MotionSpec, RATIO_CONVENTIONS,
};
use dig_core::validate::{run_validation, ValidateOptions};

use crate::config::{Instance, RunConfig, SampleMode};
use crate::{
    CliError, EvalArgs, PlotDataArgs, SeparateArgs, SynthArgs, SynthKind, TrainArgs, ValidateArgs,
};

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Deterministic per-(instance, chain) seed derivation (splitmix64 over
/// the packed indices).
fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut x = base
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    std::fs::create_dir_all(&args.out).map_err(usage)?;
    match args.kind {
        SynthKind::Heartbeat | SynthKind::Motion => synth_dataset(args),
        SynthKind::Mix => synth_mix(args),
    }
}

fn synth_dataset(args: &SynthArgs) -> Result<(), CliError> {
    if args.count == 0 {
        return Err(CliError::Usage("--count must be >= 1".into()));
    }
    let (kind, signals, scale, hb, mo) = match args.kind {
        SynthKind::Heartbeat => {
            let mut spec = if args.desk {
                HeartbeatSpec::desk()
            } else {
                HeartbeatSpec::full()
            };
            spec.seed = args.seed;
            if let Some(n) = args.len {
                spec.n = n;
            }
            if let Some(sr) = args.sample_rate {
                spec.sample_rate = sr;
            }
            let ds = synth::gen_heartbeat_dataset(&spec, args.count).map_err(usage)?;
            ("heartbeat", ds.signals, ds.scale, Some(spec), None)
        }
        SynthKind::Motion => {
            let mut spec = if args.desk {
                MotionSpec::desk()
            } else {
                MotionSpec::full()
            };
            spec.seed = args.seed;
            if let Some(n) = args.len {
                spec.n = n;
            }
            let ds = synth::gen_motion_dataset(&spec, args.count).map_err(usage)?;
            ("motion", ds.signals, ds.scale, None, Some(spec))
        }
        SynthKind::Mix => unreachable!(),
    };

    let data_name = format!("{kind}.csv");
    write_signals_csv(&args.out.join(&data_name), &signals).map_err(runtime)?;
    let manifest = DatasetManifest {
        kind: kind.into(),
        count: args.count,
        seed: args.seed,
        scale,
        file: data_name,
        heartbeat: hb,
        motion: mo,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(runtime)?;
    write_atomic(&args.out.join(format!("{kind}_manifest.json")), text.as_bytes())
        .map_err(runtime)?;
    println!(
        "wrote {count} {kind} signals to {out}",
        count = args.count,
        out = args.out.display()
    );
    Ok(())
}

fn synth_mix(args: &SynthArgs) -> Result<(), CliError> {
    let signal_path = args
        .signal
        .as_ref()
        .ok_or_else(|| CliError::Usage("--kind mix requires --signal".into()))?;
    let interference_path = args
        .interference
        .as_ref()
        .ok_or_else(|| CliError::Usage("--kind mix requires --interference".into()))?;
    let sir = args
        .sir
        .ok_or_else(|| CliError::Usage("--kind mix requires --sir".into()))?;
    let snr = args
        .snr
        .ok_or_else(|| CliError::Usage("--kind mix requires --snr".into()))?;

    let signals = read_signals_csv(signal_path).map_err(usage)?;
    let interferences = read_signals_csv(interference_path).map_err(usage)?;
    let count = match args.count {
        0 => signals.len().min(interferences.len()),
        c => {
            if c > signals.len() || c > interferences.len() {
                return Err(CliError::Usage(format!(
                    "--count {c} exceeds available rows ({} signals, {} interferences)",
                    signals.len(),
                    interferences.len()
                )));
            }
            c
        }
    };

    let spec = MixSpec {
        sir_db: sir,
        snr_db: snr,
        seed: args.seed,
    };
    let mut mixtures = Vec::with_capacity(count);
    let mut truth_s = Vec::with_capacity(count);
    let mut truth_i = Vec::with_capacity(count);
    let mut sigma_v = Vec::with_capacity(count);
    let mut scales = Vec::with_capacity(count);
    for row in 0..count {
        let mut rng = ChaCha12Rng::seed_from_u64(args.seed);
        rng.set_stream(row as u64);
        let out = synth::mix(&signals[row], &interferences[row], &spec, &mut rng)
            .map_err(runtime)?;
        mixtures.push(out.y_hat);
        truth_s.push(out.signal);
        truth_i.push(out.interference);
        sigma_v.push(out.sigma_v);
        scales.push(out.interference_scale);
    }

    write_signals_csv(&args.out.join("mixture.csv"), &mixtures).map_err(runtime)?;
    write_signals_csv(&args.out.join("truth_signal.csv"), &truth_s).map_err(runtime)?;
    write_signals_csv(&args.out.join("truth_interference.csv"), &truth_i).map_err(runtime)?;
    let manifest = MixManifest {
        sir_db: sir,
        snr_db: snr,
        seed: args.seed,
        count,
        n: mixtures[0].len(),
        sigma_v,
        interference_scale: scales,
        mixture_file: "mixture.csv".into(),
        signal_file: "truth_signal.csv".into(),
        interference_file: "truth_interference.csv".into(),
        conventions: RATIO_CONVENTIONS.into(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(runtime)?;
    write_atomic(&args.out.join("mix_manifest.json"), text.as_bytes()).map_err(runtime)?;
    println!("wrote {count} mixes to {}", args.out.display());
    Ok(())
}

pub fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let cfg = TrainConfig {
        widths: args.widths.clone(),
        sigma_min: args.sigma_min,
        sigma_max: args.sigma_max,
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.learning_rate,
        optimizer: if args.adam {
            Optimizer::adam()
        } else {
            Optimizer::Sgd
        },
        holdout_fraction: args.holdout_fraction,
        seed: args.seed,
    };
    cfg.validate().map_err(usage)?;
    let data = read_signals_csv(&args.data).map_err(usage)?;

    let outcome = dsm::train(&data, &cfg).map_err(runtime)?;
    dsm::save_model(&outcome.network, &args.out).map_err(runtime)?;
    println!(
        "trained on {} signals: holdout loss {:.6}, predict-zero baseline {:.6}; model -> {}",
        data.len(),
        outcome.holdout_loss,
        outcome.baseline_loss,
        args.out.display()
    );
    Ok(())
}

/// Manifest written next to the separation outputs.
#[derive(Debug, Serialize, Deserialize)]
struct SeparateManifest {
    seed: u64,
    burn_in: usize,
    instances: usize,
    num_sources: usize,
    config: RunConfig,
    config_fingerprint: String,
    /// Wall-clock timings; only populated with --timings so default runs
    /// stay byte-identical across repetitions.
    timings: Option<Timings>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Timings {
    total_ms: u128,
    per_instance_ms: Vec<u128>,
}

pub fn cmd_separate(args: &SeparateArgs) -> Result<(), CliError> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.out_dir = Some(out.clone());
    }
    let out_dir = config
        .out_dir
        .clone()
        .ok_or_else(|| CliError::Usage("no output directory (config.out_dir or --out)".into()))?;

    // Full validation pass before any compute or file output.
    let sched = config.schedule()?;
    let instances = config.instances()?;
    let n = instances[0].y.len();
    let priors = config.build_priors(n)?;
    let dig_cfg = config.dig.to_dig_config();
    dig_cfg.validate().map_err(usage)?;
    if config.dig.posterior_samples == 0 {
        return Err(CliError::Usage("posterior_samples must be >= 1".into()));
    }
    if matches!(config.dig.sample_mode, SampleMode::Thinned)
        && config.dig.posterior_samples > dig_cfg.iterations - dig_cfg.effective_burn_in()
    {
        return Err(CliError::Usage(format!(
            "posterior_samples {} exceeds retained sweeps {}",
            config.dig.posterior_samples,
            dig_cfg.iterations - dig_cfg.effective_burn_in()
        )));
    }
    for inst in &instances {
        MixtureObservation::new(inst.y.clone(), inst.sigma_v, priors.len())
            .and_then(|obs| obs.validate_against(&sched))
            .map_err(usage)?;
    }

    std::fs::create_dir_all(&out_dir).map_err(runtime)?;
    let started = Instant::now();
    let k_total = priors.len();

    struct InstanceResult {
        estimate: Vec<Vec<f64>>,
        chain_csv: Option<Vec<Vec<u8>>>,
        elapsed_ms: u128,
    }

    let dump_chains = args.dump_chains || instances.len() == 1;
    let run_instance = |inst: &Instance| -> Result<InstanceResult, CliError> {
        let t0 = Instant::now();
        let obs = MixtureObservation::new(inst.y.clone(), inst.sigma_v, k_total).map_err(usage)?;
        let priors = config.build_priors(n)?; // per-worker copy
        let estimate = match config.dig.sample_mode {
            SampleMode::Thinned => {
                let chain = sampler::run_dig(
                    &priors,
                    &sched,
                    &obs,
                    &dig_cfg,
                    derive_seed(config.seed, inst.index as u64, 0),
                )
                .map_err(runtime)?;
                let est = sampler::mmse_estimate_thinned(&chain, config.dig.posterior_samples)
                    .map_err(runtime)?;
                if dump_chains {
                    let mut dumps = Vec::with_capacity(k_total);
                    for k in 0..k_total {
                        let mut buf = Vec::new();
                        sampler::write_chain_source_csv(&chain, k, &mut buf).map_err(runtime)?;
                        dumps.push(buf);
                    }
                    return Ok(InstanceResult {
                        estimate: est,
                        chain_csv: Some(dumps),
                        elapsed_ms: t0.elapsed().as_millis(),
                    });
                }
                est
            }
            SampleMode::IndependentChains => {
                let mut acc = vec![vec![0.0; n]; k_total];
                for c in 0..config.dig.posterior_samples {
                    let chain = sampler::run_dig(
                        &priors,
                        &sched,
                        &obs,
                        &dig_cfg,
                        derive_seed(config.seed, inst.index as u64, c as u64 + 1),
                    )
                    .map_err(runtime)?;
                    let last = &chain.sweeps.last().expect("non-empty chain").sources;
                    for (a, s) in acc.iter_mut().zip(last) {
                        for (ai, si) in a.iter_mut().zip(s) {
                            *ai += si / config.dig.posterior_samples as f64;
                        }
                    }
                }
                acc
            }
        };
        Ok(InstanceResult {
            estimate,
            chain_csv: None,
            elapsed_ms: t0.elapsed().as_millis(),
        })
    };

    let results: Vec<InstanceResult> = instances
        .par_iter()
        .map(run_instance)
        .collect::<Result<Vec<_>, CliError>>()?;

    // Per-source estimate files: one row per instance.
    for k in 0..k_total {
        let rows: Vec<Vec<f64>> = results.iter().map(|r| r.estimate[k].clone()).collect();
        write_signals_csv(&out_dir.join(format!("estimate_source{k}.csv")), &rows)
            .map_err(runtime)?;
    }
    for (inst, r) in instances.iter().zip(&results) {
        if let Some(dumps) = &r.chain_csv {
            for (k, dump) in dumps.iter().enumerate() {
                write_atomic(
                    &out_dir.join(format!("chain_inst{}_source{k}.csv", inst.index)),
                    dump,
                )
                .map_err(runtime)?;
            }
        }
    }

    let manifest = SeparateManifest {
        seed: config.seed,
        burn_in: dig_cfg.effective_burn_in(),
        instances: instances.len(),
        num_sources: k_total,
        config_fingerprint: dig_cfg.fingerprint(),
        config,
        timings: args.timings.then(|| Timings {
            total_ms: started.elapsed().as_millis(),
            per_instance_ms: results.iter().map(|r| r.elapsed_ms).collect(),
        }),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(runtime)?;
    write_atomic(&out_dir.join("manifest.json"), text.as_bytes()).map_err(runtime)?;
    println!(
        "separated {} instance(s) into {} source estimate file(s) under {}",
        instances.len(),
        k_total,
        out_dir.display()
    );
    Ok(())
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<(), CliError> {
    let report = run_validation(&ValidateOptions {
        quick: args.quick,
        sabotage_score: args.sabotage_score,
        seed: args.seed,
    })
    .map_err(runtime)?;
    let text = serde_json::to_string_pretty(&report).map_err(runtime)?;
    if let Some(out) = &args.out {
        write_atomic(out, text.as_bytes()).map_err(runtime)?;
    }
    println!("{text}");
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "{} of {} validation checks failed",
            report.checks.iter().filter(|c| !c.pass).count(),
            report.checks.len()
        )))
    }
}

pub fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let estimates = read_signals_csv(&args.estimates).map_err(usage)?;
    let truth = read_signals_csv(&args.truth).map_err(usage)?;
    if estimates.len() != truth.len() {
        return Err(CliError::Usage(format!(
            "{} estimate rows vs {} truth rows",
            estimates.len(),
            truth.len()
        )));
    }
    let mut rows = Vec::with_capacity(estimates.len());
    for (i, (est, tr)) in estimates.iter().zip(&truth).enumerate() {
        rows.push((i, synth::mse(est, tr).map_err(usage)?));
    }
    let aggregate = rows.iter().map(|(_, m)| m).sum::<f64>() / rows.len() as f64;

    let mut buf = String::from("index,mse\n");
    for (i, m) in &rows {
        buf.push_str(&format!("{i},{m}\n"));
    }
    buf.push_str(&format!("mean,{aggregate}\n"));
    write_atomic(&args.out, buf.as_bytes()).map_err(runtime)?;
    println!("mean mse over {} rows: {aggregate}", rows.len());
    Ok(())
}

pub fn cmd_plotdata(args: &PlotDataArgs) -> Result<(), CliError> {
    let pick = |path: &Path| -> Result<Vec<f64>, CliError> {
        let rows = read_signals_csv(path).map_err(usage)?;
        let row = args.row.unwrap_or(0);
        rows.get(row)
            .cloned()
            .ok_or_else(|| CliError::Usage(format!("row {row} out of range in {}", path.display())))
    };
    let estimate = pick(&args.estimate)?;
    let truth = pick(&args.truth)?;
    if estimate.len() != truth.len() {
        return Err(CliError::Usage(format!(
            "estimate length {} vs truth length {}",
            estimate.len(),
            truth.len()
        )));
    }
    let mut buf = String::from("index,truth,estimate,residual\n");
    for (i, (e, t)) in estimate.iter().zip(&truth).enumerate() {
        buf.push_str(&format!("{i},{t},{e},{}\n", t - e));
    }
    write_atomic(&args.out, buf.as_bytes()).map_err(runtime)?;
    println!("wrote plot data for {} samples to {}", truth.len(), args.out.display());
    Ok(())
}

/// Build the worker pool once, before any parallel section runs.
pub fn install_workers(workers: Option<usize>) -> Result<(), CliError> {
    if let Some(w) = workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Usage(format!("worker pool: {e}")))?;
    }
    Ok(())
}

#[allow(unused_imports)]
use std::io::Write as _;
