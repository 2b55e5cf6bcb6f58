//! Experiment harness around the pulse stream library: synthetic
//! generation, measurement, recovery, Monte Carlo sweeps, and ingestion of
//! external signals. Every command is driven by explicit seeds and emits a
//! JSON manifest echo so runs are reproducible bit for bit.

use pulsecs::io;
use pulsecs::recovery::{
    am_exhaustive, block_cosamp, cosamp, iterative_support_estimation, oracle_decoder,
    RecoveryConfig, RecoveryResult,
};
use pulsecs::sampling::{add_noise, gaussian_matrix, SamplingMatrix};
use pulsecs::signal_model::{Dist, Domain, ImpulseResponse, PulseModel};
use pulsecs::Error;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::time::Instant;

pub type Result<T> = std::result::Result<T, Error>;

/// Derived-seed tweaks so the instance, measurement matrix, and noise
/// streams of one trial never alias.
const PHI_SEED_XOR: u64 = 0x9e37_79b9_7f4a_7c15;
const NOISE_SEED_XOR: u64 = 0x6a09_e667_f3bc_c908;

/// Exit code contract: 0 success, 1 invalid configuration, 2 I/O failure.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } | Error::Parse { .. } => 2,
        _ => 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Alg1,
    Alg2,
    Cosamp,
    Block,
    Oracle,
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Algo::Alg1 => "alg1",
            Algo::Alg2 => "alg2",
            Algo::Cosamp => "cosamp",
            Algo::Block => "block",
            Algo::Oracle => "oracle",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Algo {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alg1" => Ok(Algo::Alg1),
            "alg2" => Ok(Algo::Alg2),
            "cosamp" => Ok(Algo::Cosamp),
            "block" => Ok(Algo::Block),
            "oracle" => Ok(Algo::Oracle),
            _ => Err(Error::InvalidInput(format!(
                "unknown algorithm {s:?} (expected alg1|alg2|cosamp|block|oracle)"
            ))),
        }
    }
}

/// Model geometry as given on the command line. For `dims == 2` the domain
/// is an n-by-n grid and `f` must be a perfect square (the pulse patch is
/// sqrt(f) on a side).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: usize,
    pub dims: usize,
    pub s: usize,
    pub f: usize,
    pub delta: usize,
}

impl ModelParams {
    pub fn model(&self) -> Result<PulseModel> {
        let domain = match self.dims {
            1 => Domain::line(self.n)?,
            2 => Domain::grid(self.n, self.n)?,
            d => {
                return Err(Error::InvalidInput(format!(
                    "dims must be 1 or 2, got {d}"
                )))
            }
        };
        PulseModel::new(domain, self.s, self.f, self.delta)
    }
}

/// Named parameter sets matching the experiments the harness replicates.
pub fn preset(name: &str) -> Option<ModelParams> {
    let p = |n, dims, s, f, delta| ModelParams { n, dims, s, f, delta };
    match name {
        "fig1_caption" => Some(p(1024, 1, 6, 11, 85)),
        "fig1_text" => Some(p(1024, 1, 8, 11, 64)),
        "fig4_noisy" => Some(p(1024, 1, 9, 11, 56)),
        "fig5_2d" => Some(p(64, 2, 7, 25, 16)),
        "neuronal_like" => Some(p(1024, 1, 9, 11, 56)),
        "astro_like" => Some(p(4096, 1, 3, 120, 128)),
        _ => None,
    }
}

/// On-disk manifest for a pipeline directory (generate -> measure ->
/// recover all read and extend it).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(flatten)]
    pub params: ModelParams,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub snr_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub phi_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub noise_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub algo: Option<Algo>,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_manifest(dir: &Path, m: &Manifest) -> Result<()> {
    let path = dir.join("manifest.json");
    let body = serde_json::to_string_pretty(m).expect("manifest serializes");
    std::fs::write(&path, body + "\n").map_err(|e| io_err(&path, e))
}

fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        msg: e.to_string(),
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_signal(dir: &Path, name: &str, values: &[f64], domain: &Domain) -> Result<()> {
    let path = dir.join(name);
    if domain.dims() >= 2 {
        io::write_dense_shaped(&path, values, domain.shape())
    } else {
        io::write_dense(&path, values)
    }
}

/// Generate a ground-truth instance into `out`: signal, spikes, pulse,
/// manifest.
pub fn cmd_generate(params: &ModelParams, seed: u64, out: &Path) -> Result<()> {
    let model = params.model()?;
    ensure_dir(out)?;
    let inst = pulsecs::signal_model::random_instance(
        &model,
        Dist::StandardNormal,
        Dist::StandardNormal,
        seed,
    )?;
    write_signal(out, "signal.txt", &inst.signal, model.domain())?;
    io::write_sparse(&out.join("spikes.csv"), &inst.spikes)?;
    io::write_dense(&out.join("pulse.txt"), inst.pulse.coefficients())?;
    write_manifest(
        out,
        &Manifest {
            params: *params,
            seed,
            m: None,
            snr_db: None,
            phi_seed: None,
            noise_seed: None,
            algo: None,
        },
    )
}

/// Measure the generated signal in `out` with an M x N Gaussian matrix,
/// optionally adding noise at an exact SNR.
pub fn cmd_measure(out: &Path, m: usize, snr_db: Option<f64>, seed: u64) -> Result<()> {
    let mut manifest = read_manifest(out)?;
    let model = manifest.params.model()?;
    let n = model.domain().size();
    if m == 0 || m > n {
        return Err(Error::InvalidInput(format!(
            "need 1 <= M <= N, got M={m}, N={n}"
        )));
    }
    let z = io::read_dense(&out.join("signal.txt"))?;
    if z.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "signal has {} entries, manifest says N={n}",
            z.len()
        )));
    }
    let phi_seed = seed ^ PHI_SEED_XOR;
    let phi = gaussian_matrix(m, n, phi_seed)?;
    let mut y = phi.apply(&z)?;
    let noise_seed = if let Some(snr) = snr_db {
        let ns = seed ^ NOISE_SEED_XOR;
        y = add_noise(&y, snr, ns)?;
        Some(ns)
    } else {
        None
    };
    io::write_dense(&out.join("measurements.txt"), &y)?;
    manifest.m = Some(m);
    manifest.snr_db = snr_db;
    manifest.phi_seed = Some(phi_seed);
    manifest.noise_seed = noise_seed;
    write_manifest(out, &manifest)
}

/// One recovery outcome; normalized_mse is `||z - z_hat||^2 / ||z||^2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub algorithm: Algo,
    pub normalized_mse: f64,
    pub residual_final: f64,
    pub iterations: usize,
    pub wall_time: f64,
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn normalized_mse(z: &[f64], z_hat: &[f64]) -> f64 {
    let num: f64 = z.iter().zip(z_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    num / norm_sq(z)
}

/// Residual threshold relative to ||y||: the exact noise fraction when the
/// SNR is known, a tight floor when noiseless.
pub fn residual_tol_for(snr_db: Option<f64>) -> f64 {
    match snr_db {
        Some(snr) => 1.0 / (1.0 + 10f64.powf(snr / 10.0)).sqrt(),
        None => 1e-9,
    }
}

pub struct RecoveryOutput {
    pub z_hat: Vec<f64>,
    /// Unit-norm pulse estimate; absent for the flat-sparsity baselines.
    pub pulse_hat: Option<Vec<f64>>,
    pub residual_final: f64,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
}

fn from_result(r: RecoveryResult) -> RecoveryOutput {
    RecoveryOutput {
        z_hat: r.z_hat,
        pulse_hat: Some(r.h_hat.coefficients().to_vec()),
        residual_final: r.residual_history.last().copied().unwrap_or(0.0),
        iterations: r.iterations,
        residual_history: r.residual_history,
    }
}

/// Dispatch one recovery. `true_pulse` is required by the oracle decoder.
pub fn run_recovery(
    algo: Algo,
    y: &[f64],
    phi: &SamplingMatrix,
    model: &PulseModel,
    true_pulse: Option<&ImpulseResponse>,
    cfg: &RecoveryConfig,
) -> Result<RecoveryOutput> {
    match algo {
        Algo::Alg1 => Ok(from_result(am_exhaustive(y, phi, model, cfg)?)),
        Algo::Alg2 => Ok(from_result(iterative_support_estimation(y, phi, model, cfg)?)),
        Algo::Oracle => {
            let h = true_pulse.ok_or_else(|| {
                Error::InvalidInput("oracle decoder needs the true pulse".into())
            })?;
            Ok(from_result(oracle_decoder(y, phi, h, model, cfg)?))
        }
        Algo::Cosamp | Algo::Block => {
            let x = if algo == Algo::Cosamp {
                cosamp(y, phi, model.total_sparsity(), cfg)?
            } else {
                block_cosamp(y, phi, model.spikes(), model.pulse_len(), cfg)?
            };
            let r: f64 = {
                let mx = phi.apply(&x)?;
                y.iter()
                    .zip(&mx)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            };
            Ok(RecoveryOutput {
                z_hat: x,
                pulse_hat: None,
                residual_final: r,
                iterations: cfg.max_outer_iters,
                residual_history: vec![r],
            })
        }
    }
}

/// Recover from the measurements in `out` and write the estimate, the
/// pulse estimate when there is one, the residual history, and a trial
/// record.
pub fn cmd_recover(out: &Path, algo: Algo) -> Result<TrialRecord> {
    let mut manifest = read_manifest(out)?;
    let model = manifest.params.model()?;
    let n = model.domain().size();
    let m = manifest
        .m
        .ok_or_else(|| Error::InvalidInput("run measure before recover".into()))?;
    let phi_seed = manifest
        .phi_seed
        .ok_or_else(|| Error::InvalidInput("manifest lacks phi_seed".into()))?;
    let z = io::read_dense(&out.join("signal.txt"))?;
    let y = io::read_dense(&out.join("measurements.txt"))?;
    let phi = gaussian_matrix(m, n, phi_seed)?;
    let true_pulse = if algo == Algo::Oracle {
        let coeffs = io::read_dense(&out.join("pulse.txt"))?;
        Some(ImpulseResponse::new(
            coeffs,
            model.pulse_patch_shape(),
            model.domain().clone(),
        )?)
    } else {
        None
    };
    let cfg = RecoveryConfig {
        residual_tol: residual_tol_for(manifest.snr_db),
        ..Default::default()
    };
    let start = Instant::now();
    let rec = run_recovery(algo, &y, &phi, &model, true_pulse.as_ref(), &cfg)?;
    let wall = start.elapsed().as_secs_f64();

    write_signal(out, "recovered.txt", &rec.z_hat, model.domain())?;
    if let Some(h) = &rec.pulse_hat {
        io::write_dense(&out.join("pulse_hat.txt"), h)?;
    }
    io::write_dense(&out.join("residual_history.txt"), &rec.residual_history)?;
    let record = TrialRecord {
        seed: manifest.seed,
        algorithm: algo,
        normalized_mse: normalized_mse(&z, &rec.z_hat),
        residual_final: rec.residual_final,
        iterations: rec.iterations,
        wall_time: wall,
    };
    let tp = out.join("trial.json");
    std::fs::write(
        &tp,
        serde_json::to_string_pretty(&record).expect("record serializes") + "\n",
    )
    .map_err(|e| io_err(&tp, e))?;
    manifest.algo = Some(algo);
    write_manifest(out, &manifest)?;
    Ok(record)
}

/// One fully in-memory trial: generate, measure, recover.
pub fn run_trial(
    model: &PulseModel,
    m: usize,
    snr_db: Option<f64>,
    algo: Algo,
    trial_seed: u64,
) -> Result<TrialRecord> {
    let inst = pulsecs::signal_model::random_instance(
        model,
        Dist::StandardNormal,
        Dist::StandardNormal,
        trial_seed,
    )?;
    let phi = gaussian_matrix(m, model.domain().size(), trial_seed ^ PHI_SEED_XOR)?;
    let mut y = phi.apply(&inst.signal)?;
    if let Some(snr) = snr_db {
        y = add_noise(&y, snr, trial_seed ^ NOISE_SEED_XOR)?;
    }
    let cfg = RecoveryConfig {
        residual_tol: residual_tol_for(snr_db),
        ..Default::default()
    };
    let start = Instant::now();
    let rec = run_recovery(algo, &y, &phi, model, Some(&inst.pulse), &cfg)?;
    Ok(TrialRecord {
        seed: trial_seed,
        algorithm: algo,
        normalized_mse: normalized_mse(&inst.signal, &rec.z_hat),
        residual_final: rec.residual_final,
        iterations: rec.iterations,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Aggregate of one (ratio, algorithm) Monte Carlo cell.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub mk_ratio: f64,
    pub m: usize,
    pub algorithm: Algo,
    pub mean_mse: Option<f64>,
    pub stderr: Option<f64>,
    pub trials: usize,
    pub note: String,
}

/// Run `trials` independent trials per algorithm at every M/K ratio
/// (M = round(ratio * S * F)). Ratios with M > N produce a warning row.
/// Trial t uses derived seed `seed ^ t`, so each trial is independent of
/// the others' presence.
pub fn sweep(
    params: &ModelParams,
    ratios: &[f64],
    algos: &[Algo],
    trials: usize,
    seed: u64,
    snr_db: Option<f64>,
) -> Result<Vec<SweepRow>> {
    let model = params.model()?;
    if trials == 0 {
        return Err(Error::InvalidInput("need at least one trial".into()));
    }
    let k = params.s * params.f;
    let n = model.domain().size();
    let mut rows = Vec::new();
    for &ratio in ratios {
        let m = (ratio * k as f64).round() as usize;
        for &algo in algos {
            if m == 0 || m > n {
                rows.push(SweepRow {
                    mk_ratio: ratio,
                    m,
                    algorithm: algo,
                    mean_mse: None,
                    stderr: None,
                    trials: 0,
                    note: format!("skipped: M={m} outside 1..={n}"),
                });
                continue;
            }
            let mut records: Vec<TrialRecord> = (0..trials as u64)
                .into_par_iter()
                .map(|t| run_trial(&model, m, snr_db, algo, seed ^ t))
                .collect::<Result<_>>()?;
            records.sort_by_key(|r| r.seed);
            let mses: Vec<f64> = records.iter().map(|r| r.normalized_mse).collect();
            let mean = mses.iter().sum::<f64>() / mses.len() as f64;
            let var = mses.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (mses.len().max(2) - 1) as f64;
            rows.push(SweepRow {
                mk_ratio: ratio,
                m,
                algorithm: algo,
                mean_mse: Some(mean),
                stderr: Some((var / mses.len() as f64).sqrt()),
                trials,
                note: String::new(),
            });
        }
    }
    Ok(rows)
}

/// Run a Monte Carlo sweep and write `montecarlo.csv` plus a manifest echo.
pub fn cmd_montecarlo(
    params: &ModelParams,
    ratios: &[f64],
    algos: &[Algo],
    trials: usize,
    seed: u64,
    snr_db: Option<f64>,
    out: &Path,
) -> Result<()> {
    let rows = sweep(params, ratios, algos, trials, seed, snr_db)?;
    ensure_dir(out)?;
    let mut csv = String::from("mk_ratio,m,algorithm,mean_mse,stderr,trials,note\n");
    for r in &rows {
        let mean = r.mean_mse.map(io::format_float).unwrap_or_default();
        let se = r.stderr.map(io::format_float).unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            io::format_float(r.mk_ratio),
            r.m,
            r.algorithm,
            mean,
            se,
            r.trials,
            r.note
        ));
    }
    let cp = out.join("montecarlo.csv");
    std::fs::write(&cp, csv).map_err(|e| io_err(&cp, e))?;
    let echo = serde_json::json!({
        "params": params,
        "ratios": ratios,
        "algos": algos,
        "trials": trials,
        "seed": seed,
        "snr_db": snr_db,
    });
    let mp = out.join("montecarlo_manifest.json");
    std::fs::write(&mp, serde_json::to_string_pretty(&echo).unwrap() + "\n")
        .map_err(|e| io_err(&mp, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestFormat {
    CsvDense,
    CsvSparse,
}

impl std::str::FromStr for IngestFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv_dense" => Ok(IngestFormat::CsvDense),
            "csv_sparse" => Ok(IngestFormat::CsvSparse),
            _ => Err(Error::InvalidInput(format!(
                "unknown format {s:?} (expected csv_dense|csv_sparse)"
            ))),
        }
    }
}

/// Ingest an external signal, measure it with a seeded Gaussian matrix,
/// recover, and emit the estimates (including the unit-norm pulse estimate
/// when the algorithm produces one).
#[allow(clippy::too_many_arguments)]
pub fn cmd_ingest(
    input: &Path,
    format: IngestFormat,
    params: &ModelParams,
    m: usize,
    snr_db: Option<f64>,
    seed: u64,
    algo: Algo,
    out: &Path,
) -> Result<TrialRecord> {
    let model = params.model()?;
    let domain = model.domain().clone();
    let z = match format {
        IngestFormat::CsvDense => {
            let v = io::read_dense(input)?;
            if v.len() != domain.size() {
                return Err(Error::DimensionMismatch(format!(
                    "ingested signal has {} entries, model domain has {}",
                    v.len(),
                    domain.size()
                )));
            }
            v
        }
        IngestFormat::CsvSparse => io::read_sparse(input, &domain)?.to_dense(),
    };
    if algo == Algo::Oracle {
        return Err(Error::InvalidInput(
            "the oracle decoder needs ground truth and cannot run on ingested data".into(),
        ));
    }
    let n = domain.size();
    if m == 0 || m > n {
        return Err(Error::InvalidInput(format!(
            "need 1 <= M <= N, got M={m}, N={n}"
        )));
    }
    ensure_dir(out)?;
    let phi = gaussian_matrix(m, n, seed ^ PHI_SEED_XOR)?;
    let mut y = phi.apply(&z)?;
    if let Some(snr) = snr_db {
        y = add_noise(&y, snr, seed ^ NOISE_SEED_XOR)?;
    }
    let cfg = RecoveryConfig {
        residual_tol: residual_tol_for(snr_db),
        ..Default::default()
    };
    let start = Instant::now();
    let rec = run_recovery(algo, &y, &phi, &model, None, &cfg)?;
    let wall = start.elapsed().as_secs_f64();
    write_signal(out, "signal.txt", &z, &domain)?;
    io::write_dense(&out.join("measurements.txt"), &y)?;
    write_signal(out, "recovered.txt", &rec.z_hat, &domain)?;
    if let Some(h) = &rec.pulse_hat {
        io::write_dense(&out.join("pulse_hat.txt"), h)?;
    }
    io::write_dense(&out.join("residual_history.txt"), &rec.residual_history)?;
    let record = TrialRecord {
        seed,
        algorithm: algo,
        normalized_mse: normalized_mse(&z, &rec.z_hat),
        residual_final: rec.residual_final,
        iterations: rec.iterations,
        wall_time: wall,
    };
    let tp = out.join("trial.json");
    std::fs::write(
        &tp,
        serde_json::to_string_pretty(&record).expect("record serializes") + "\n",
    )
    .map_err(|e| io_err(&tp, e))?;
    write_manifest(
        out,
        &Manifest {
            params: *params,
            seed,
            m: Some(m),
            snr_db,
            phi_seed: Some(seed ^ PHI_SEED_XOR),
            noise_seed: snr_db.map(|_| seed ^ NOISE_SEED_XOR),
            algo: Some(algo),
        },
    )?;
    Ok(record)
}
