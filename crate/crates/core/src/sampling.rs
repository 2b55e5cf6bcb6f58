//! Random measurement operators and empirical isometry probing.
//!
//! Matrices are fully determined by `(M, N, seed)` and are regenerated from
//! those three values rather than serialized. The generator is pinned:
//! entries come from `ChaCha8Rng::seed_from_u64(seed)` driving a standard
//! normal sampler in row-major order, scaled by `1/sqrt(M)` so that
//! `E||Phi z||^2 = ||z||^2`.

use nalgebra::DMatrix;
use num_traits::ToPrimitive;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::signal_model::{count_supports, random_instance, Dist, PulseModel};

/// Dense M x N measurement operator.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingMatrix {
    rows: usize,
    cols: usize,
    seed: Option<u64>,
    entries: DMatrix<f64>,
}

impl SamplingMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Seed-free N x N identity, for Nyquist-rate paths and tests.
    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            seed: None,
            entries: DMatrix::identity(n, n),
        }
    }

    /// Wrap explicit entries (test-only paths, e.g. orthonormal matrices).
    pub fn from_entries(entries: DMatrix<f64>) -> Self {
        Self {
            rows: entries.nrows(),
            cols: entries.ncols(),
            seed: None,
            entries,
        }
    }

    /// `y = Phi z`, exact dense product.
    pub fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "measure: signal length {} vs matrix width {}",
                z.len(),
                self.cols
            )));
        }
        let mut out = vec![0.0; self.rows];
        for r in 0..self.rows {
            let mut acc = 0.0;
            for c in 0..self.cols {
                acc += self.entries[(r, c)] * z[c];
            }
            out[r] = acc;
        }
        Ok(out)
    }

    /// `Phi^T v`.
    pub fn apply_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "transpose measure: length {} vs matrix height {}",
                v.len(),
                self.rows
            )));
        }
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let vr = v[r];
            if vr == 0.0 {
                continue;
            }
            for c in 0..self.cols {
                out[c] += self.entries[(r, c)] * vr;
            }
        }
        Ok(out)
    }

    /// Column `c` of the matrix.
    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.entries[(r, c)]).collect()
    }
}

/// I.i.d. Gaussian matrix with variance 1/M, deterministic in `(m, n, seed)`.
pub fn gaussian_matrix(m: usize, n: usize, seed: u64) -> Result<SamplingMatrix> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidInput("matrix dimensions must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (m as f64).sqrt();
    let mut entries = DMatrix::zeros(m, n);
    for r in 0..m {
        for c in 0..n {
            let g: f64 = StandardNormal.sample(&mut rng);
            entries[(r, c)] = scale * g;
        }
    }
    Ok(SamplingMatrix {
        rows: m,
        cols: n,
        seed: Some(seed),
        entries,
    })
}

/// +-1/sqrt(M) Bernoulli matrix behind the same interface. Not used by the
/// acceptance experiments.
pub fn bernoulli_matrix(m: usize, n: usize, seed: u64) -> Result<SamplingMatrix> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidInput("matrix dimensions must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (m as f64).sqrt();
    let mut entries = DMatrix::zeros(m, n);
    for r in 0..m {
        for c in 0..n {
            entries[(r, c)] = if rng.random::<bool>() { scale } else { -scale };
        }
    }
    Ok(SamplingMatrix {
        rows: m,
        cols: n,
        seed: Some(seed),
        entries,
    })
}

/// `measure(Phi, z) = Phi z`.
pub fn measure(phi: &SamplingMatrix, z: &[f64]) -> Result<Vec<f64>> {
    phi.apply(z)
}

/// Add Gaussian noise rescaled so the output hits the target SNR exactly:
/// `10 log10(||y||^2 / ||n||^2) = snr_db`. An infinite `snr_db` returns `y`
/// unchanged.
pub fn add_noise(y: &[f64], snr_db: f64, seed: u64) -> Result<Vec<f64>> {
    if snr_db.is_infinite() && snr_db > 0.0 {
        return Ok(y.to_vec());
    }
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if ny == 0.0 {
        return Err(Error::InvalidInput(
            "cannot target a finite SNR against a zero signal".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..y.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let nraw = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nraw == 0.0 {
        return Err(Error::InvalidInput("degenerate noise draw".into()));
    }
    let target_noise_norm = ny / 10.0_f64.powf(snr_db / 20.0);
    let scale = target_noise_norm / nraw;
    Ok(y.iter().zip(&raw).map(|(a, b)| a + scale * b).collect())
}

/// Worst observed pairwise distortion over sampled model instances.
#[derive(Debug, Clone)]
pub struct IsometryReport {
    pub delta_hat: f64,
    pub num_pairs: usize,
    pub model: PulseModel,
}

/// Probe `max | ||Phi(z1 - z2)||^2 / ||z1 - z2||^2 - 1 |` over `num_pairs`
/// random instance pairs. A sampled lower bound on the true distortion,
/// purely diagnostic.
pub fn empirical_isometry(
    phi: &SamplingMatrix,
    model: &PulseModel,
    num_pairs: usize,
    seed: u64,
) -> Result<IsometryReport> {
    if phi.cols() != model.domain().size() {
        return Err(Error::DimensionMismatch(
            "matrix width vs model domain size".into(),
        ));
    }
    let mut delta_hat = 0.0_f64;
    for pair in 0..num_pairs as u64 {
        let z1 = random_instance(model, Dist::StandardNormal, Dist::StandardNormal, seed ^ (2 * pair))?;
        let z2 = random_instance(
            model,
            Dist::StandardNormal,
            Dist::StandardNormal,
            seed ^ (2 * pair + 1),
        )?;
        let diff: Vec<f64> = z1
            .signal
            .iter()
            .zip(&z2.signal)
            .map(|(a, b)| a - b)
            .collect();
        let nd2: f64 = diff.iter().map(|v| v * v).sum();
        if nd2 == 0.0 {
            continue;
        }
        let md = phi.apply(&diff)?;
        let nm2: f64 = md.iter().map(|v| v * v).sum();
        delta_hat = delta_hat.max((nm2 / nd2 - 1.0).abs());
    }
    Ok(IsometryReport {
        delta_hat,
        num_pairs,
        model: model.clone(),
    })
}

/// Indicative measurement-count bound
/// `c * (1/delta) * ((S+F) ln(1/delta) + ln(L_S * L_F) + t)` with `L_F = 1`
/// for the disjoint model.
pub fn measurement_bound(model: &PulseModel, delta: f64, t: f64, c: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&delta) || delta == 0.0 {
        return Err(Error::InvalidInput("delta must lie in (0, 1)".into()));
    }
    if t < 0.0 || c <= 0.0 {
        return Err(Error::InvalidInput("require t >= 0 and c > 0".into()));
    }
    let n = model.domain().size();
    let ls = count_supports(n, model.spikes(), model.delta());
    let ln_ls = ln_big(&ls)?;
    let sf = (model.spikes() + model.pulse_len()) as f64;
    Ok(c * (1.0 / delta) * (sf * (1.0 / delta).ln() + ln_ls + t))
}

fn ln_big(x: &num_bigint::BigUint) -> Result<f64> {
    use num_traits::Zero;
    if x.is_zero() {
        return Err(Error::InvalidModel(
            "no admissible supports: packing infeasible".into(),
        ));
    }
    match x.to_f64() {
        Some(v) if v.is_finite() => Ok(v.ln()),
        _ => {
            let bits = x.bits();
            let shift = bits.saturating_sub(53);
            let top = (x >> shift).to_f64().unwrap_or(f64::MAX);
            Ok(top.ln() + shift as f64 * std::f64::consts::LN_2)
        }
    }
}
