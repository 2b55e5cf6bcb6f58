//! Recovery of pulse streams from compressive measurements.
//!
//! Two primary routes: alternating minimization over exhaustively enumerated
//! spike supports, and the faster iterative support estimation that keeps a
//! running support estimate pruned to the model. CoSaMP and a block-sparse
//! CoSaMP variant serve as baselines, and an oracle decoder recovers only
//! the spike stream with the true pulse known. Anchor-pulse analysis covers
//! the fixed point of alternating minimization under pulse-shape mismatch at
//! Nyquist rate.
//!
//! All returned estimates carry a unit-norm pulse whose first nonzero
//! coefficient is positive; the reciprocal scale lives in the spike
//! amplitudes. This removes the inherent (a*h, x/a) ambiguity.

use crate::error::{Error, Result};
use crate::linop::{
    least_squares, solve_dense, CirculantOperator, ColumnRestriction, DEFAULT_RANK_TOL,
};
use crate::model_approx::prune_to_model;
use crate::sampling::SamplingMatrix;
use crate::signal_model::{
    circular_convolve, enumerate_supports, enumeration_count, Domain, ImpulseResponse, PulseModel,
    SpikeStream, Support,
};
use nalgebra::{DMatrix, DVector};
use num_traits::ToPrimitive;

/// Relative residual-change tolerance for inner loops.
const REL_CHANGE_TOL: f64 = 1e-6;
/// Relative slack when enforcing monotone residuals.
const MONOTONE_SLACK: f64 = 1e-12;
/// Default cap on the number of enumerable supports for exhaustive search.
pub const DEFAULT_SUPPORT_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Halting {
    /// Stop only when the residual drops below the threshold.
    ResidualBelowEps,
    /// Additionally stop when the relative residual change stagnates.
    RelativeChange,
    /// Run the full iteration budget.
    MaxIters,
}

#[derive(Debug, Clone, Copy)]
pub struct RecoveryConfig {
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    /// Residual threshold, relative to the measurement norm.
    pub residual_tol: f64,
    pub halting: Halting,
    pub rank_tol: f64,
    /// Pulse-initialization restarts for iterative support estimation; the
    /// best-residual run wins, with early exit once the threshold is met.
    pub restarts: usize,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            max_outer_iters: 50,
            max_inner_iters: 20,
            residual_tol: 1e-9,
            halting: Halting::RelativeChange,
            rank_tol: DEFAULT_RANK_TOL,
            restarts: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecoveryStatus {
    Converged,
    MaxIters,
    IntegralityFlag,
}

#[derive(Debug, Clone)]
pub struct RecoveryResult {
    pub z_hat: Vec<f64>,
    pub x_hat: SpikeStream,
    pub h_hat: ImpulseResponse,
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub status: RecoveryStatus,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn residual_norm(y: &[f64], phi: &SamplingMatrix, z: &[f64]) -> Result<f64> {
    let mz = phi.apply(z)?;
    Ok(y.iter()
        .zip(&mz)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// One inner alternating-minimization pass on a fixed spike support.
#[derive(Debug, Clone)]
pub struct AmInnerResult {
    pub spikes: SpikeStream,
    pub pulse: ImpulseResponse,
    pub residual: f64,
    pub residual_history: Vec<f64>,
    pub rank_deficient: bool,
}

/// Alternate least-squares updates of the spike amplitudes (pulse fixed) and
/// the pulse coefficients (spikes fixed) on the support `sigma`, starting
/// from `h_init`. The pulse is renormalized to unit norm after every update
/// with the scale folded into the amplitudes. An update that increases the
/// residual (beyond a 1e-12 relative slack) is rejected and iteration halts,
/// so the recorded history is nonincreasing.
pub fn am_inner(
    y: &[f64],
    phi: &SamplingMatrix,
    sigma: &Support,
    h_init: &ImpulseResponse,
    cfg: &RecoveryConfig,
) -> Result<AmInnerResult> {
    let domain = sigma.domain().clone();
    if h_init.domain() != &domain {
        return Err(Error::DomainMismatch("pulse vs support domain".into()));
    }
    if y.len() != phi.rows() || phi.cols() != domain.size() {
        return Err(Error::DimensionMismatch("measurements vs operator".into()));
    }
    let ny = norm(y);
    let patch = h_init.patch_shape().to_vec();

    let mut pulse = h_init.clone();
    let mut spikes = SpikeStream::new(sigma.clone(), vec![0.0; sigma.len()])?;
    let mut z = vec![0.0; domain.size()];
    let mut res = ny;
    let mut history = Vec::new();
    let mut rank_deficient = false;

    for iter in 0..cfg.max_inner_iters {
        // spike amplitudes for the current pulse
        let spike_dict = ColumnRestriction::spike_dictionary(&pulse, Some(phi), sigma)?;
        let rep_x = least_squares(&spike_dict, y, cfg.rank_tol)?;
        rank_deficient |= rep_x.rank_deficient;
        let mut new_spikes = SpikeStream::new(sigma.clone(), rep_x.coefficients)?;

        // pulse coefficients for the new spikes
        let x_dense = new_spikes.to_dense();
        let pulse_dict = ColumnRestriction::pulse_dictionary(&x_dense, &domain, Some(phi), &patch)?;
        let rep_h = least_squares(&pulse_dict, y, cfg.rank_tol)?;
        rank_deficient |= rep_h.rank_deficient;
        let mut new_pulse = ImpulseResponse::new(rep_h.coefficients, patch.clone(), domain.clone())?;

        if new_pulse.norm() == 0.0 {
            // degenerate impulse update (e.g. y = 0): keep the previous pulse
            let new_z = circular_convolve(&new_spikes.to_dense(), &pulse.to_dense(), &domain)?;
            let new_res = residual_norm(y, phi, &new_z)?;
            if new_res <= res * (1.0 + MONOTONE_SLACK) {
                spikes = new_spikes;
                z = new_z;
                res = new_res;
                history.push(res);
            }
            break;
        }

        let scale = new_pulse.normalize()?;
        let sign = new_pulse.fix_sign();
        new_spikes.scale(scale * sign);

        let new_z = circular_convolve(&new_spikes.to_dense(), &new_pulse.to_dense(), &domain)?;
        let new_res = residual_norm(y, phi, &new_z)?;

        if iter > 0 && new_res > res * (1.0 + MONOTONE_SLACK) {
            break; // reject the increase, keep the previous iterate
        }
        let prev = res;
        spikes = new_spikes;
        pulse = new_pulse;
        z = new_z;
        res = new_res;
        history.push(res);

        if res <= cfg.residual_tol * ny {
            break;
        }
        if iter > 0 && (prev - res).abs() <= REL_CHANGE_TOL * prev.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    let _ = z;
    Ok(AmInnerResult {
        spikes,
        pulse,
        residual: res,
        residual_history: history,
        rank_deficient,
    })
}

fn assemble(
    spikes: SpikeStream,
    pulse: ImpulseResponse,
    history: Vec<f64>,
    iterations: usize,
    status: RecoveryStatus,
) -> Result<RecoveryResult> {
    let domain = pulse.domain().clone();
    let z_hat = circular_convolve(&spikes.to_dense(), &pulse.to_dense(), &domain)?;
    Ok(RecoveryResult {
        z_hat,
        x_hat: spikes,
        h_hat: pulse,
        residual_history: history,
        iterations,
        status,
    })
}

/// Alternating minimization with exhaustive support search: run [`am_inner`]
/// for every admissible support, return the first candidate whose residual
/// drops below the threshold, else the best residual seen. 1D domains only;
/// the support count must not exceed `support_cap` (use
/// [`iterative_support_estimation`] beyond that).
pub fn am_exhaustive(
    y: &[f64],
    phi: &SamplingMatrix,
    model: &PulseModel,
    cfg: &RecoveryConfig,
) -> Result<RecoveryResult> {
    am_exhaustive_capped(y, phi, model, cfg, DEFAULT_SUPPORT_CAP)
}

pub fn am_exhaustive_capped(
    y: &[f64],
    phi: &SamplingMatrix,
    model: &PulseModel,
    cfg: &RecoveryConfig,
    support_cap: u64,
) -> Result<RecoveryResult> {
    let domain = model.domain();
    if domain.dims() != 1 {
        return Err(Error::InvalidInput(
            "exhaustive search enumerates 1D supports only".into(),
        ));
    }
    let n = domain.size();
    let count = enumeration_count(n, model.spikes(), model.delta());
    if count.to_u64().map_or(true, |c| c > support_cap) {
        return Err(Error::TooLarge(format!(
            "{count} candidate supports exceed the cap of {support_cap}; \
             use iterative support estimation instead"
        )));
    }
    let ny = norm(y);
    let h0 = ImpulseResponse::flat(model.pulse_patch_shape(), domain.clone())?;
    if ny == 0.0 {
        let spikes = SpikeStream::new(Support::empty(domain.clone()), vec![])?;
        return assemble(spikes, h0, vec![0.0], 0, RecoveryStatus::Converged);
    }

    let mut best: Option<AmInnerResult> = None;
    let mut tried = 0usize;
    let mut early = false;
    for sigma in enumerate_supports(n, model.spikes(), model.delta()) {
        tried += 1;
        let inner = am_inner(y, phi, &sigma, &h0, cfg)?;
        let better = best.as_ref().map_or(true, |b| inner.residual < b.residual);
        let hit = inner.residual < cfg.residual_tol * ny;
        if better {
            best = Some(inner);
        }
        if hit {
            early = true;
            break;
        }
    }
    let best = best.ok_or_else(|| Error::InvalidModel("no admissible supports".into()))?;
    let status = if early {
        RecoveryStatus::Converged
    } else {
        RecoveryStatus::MaxIters
    };
    assemble(best.spikes, best.pulse, best.residual_history, tried, status)
}

/// Cross-correlation `C(g)^T v` without materializing the circulant:
/// entry j is the inner product of the j-shifted generator with `v`.
fn circulant_transpose_apply(
    offsets: &[(usize, f64)],
    v: &[f64],
    domain: &Domain,
) -> Vec<f64> {
    let n = domain.size();
    let mut out = vec![0.0; n];
    for j in 0..n {
        let mut acc = 0.0;
        for &(off, g) in offsets {
            acc += g * v[domain.wrap_add(j, off)];
        }
        out[j] = acc;
    }
    out
}

/// Iterative support estimation: keep a model-pruned support estimate,
/// refresh it each iteration from the proxy `(Phi H)^T (y - Phi z)`, merge
/// with the previous support, least-squares on the merged columns, prune,
/// then refit the pulse. Returns the best iterate seen with the full
/// residual history.
pub fn iterative_support_estimation(
    y: &[f64],
    phi: &SamplingMatrix,
    model: &PulseModel,
    cfg: &RecoveryConfig,
) -> Result<RecoveryResult> {
    let ny = norm(y);
    let mut best: Option<RecoveryResult> = None;
    for r in 0..cfg.restarts.max(1) {
        // restart 0 is the flat pulse; later restarts perturb the
        // initialization to escape misaligned fixed points
        let init = if r == 0 {
            ImpulseResponse::flat(model.pulse_patch_shape(), model.domain().clone())?
        } else {
            random_unit_pulse(model, 0xa5c3_1df2_u64 + r as u64)?
        };
        let out = run_support_estimation(y, phi, model, cfg, None, Some(init))?;
        let res = out
            .residual_history
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let better = best.as_ref().map_or(true, |b| {
            res < b
                .residual_history
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min)
        });
        if better {
            best = Some(out);
        }
        if res <= cfg.residual_tol * ny {
            break;
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Deterministic random unit-norm patch pulse for restart initialization.
fn random_unit_pulse(model: &PulseModel, seed: u64) -> Result<ImpulseResponse> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let f = model.pulse_len();
    let coeffs: Vec<f64> = (0..f).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let mut pulse = ImpulseResponse::new(
        coeffs,
        model.pulse_patch_shape(),
        model.domain().clone(),
    )?;
    pulse.normalize()?;
    pulse.fix_sign();
    Ok(pulse)
}

/// Spike-only half of the iterative loop with the pulse pinned to `h_true`
/// (never updated).
pub fn oracle_decoder(
    y: &[f64],
    phi: &SamplingMatrix,
    h_true: &ImpulseResponse,
    model: &PulseModel,
    cfg: &RecoveryConfig,
) -> Result<RecoveryResult> {
    if (h_true.norm() - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidInput("oracle pulse must have unit norm".into()));
    }
    run_support_estimation(y, phi, model, cfg, Some(h_true), None)
}

fn run_support_estimation(
    y: &[f64],
    phi: &SamplingMatrix,
    model: &PulseModel,
    cfg: &RecoveryConfig,
    fixed_pulse: Option<&ImpulseResponse>,
    init_pulse: Option<ImpulseResponse>,
) -> Result<RecoveryResult> {
    let domain = model.domain().clone();
    if y.len() != phi.rows() || phi.cols() != domain.size() {
        return Err(Error::DimensionMismatch("measurements vs operator".into()));
    }
    let patch = model.pulse_patch_shape();
    let spikes_max = model.spikes();
    let delta = model.delta();

    let mut pulse = match (fixed_pulse, init_pulse) {
        (Some(h), _) => h.clone(),
        (None, Some(h)) => h,
        (None, None) => ImpulseResponse::flat(patch.clone(), domain.clone())?,
    };
    let mut spikes = SpikeStream::new(Support::empty(domain.clone()), vec![])?;
    let ny = norm(y);
    if ny == 0.0 {
        return assemble(spikes, pulse, vec![0.0], 0, RecoveryStatus::Converged);
    }

    let mut history = Vec::new();
    let mut best: Option<(f64, SpikeStream, ImpulseResponse)> = None;
    let mut prev_res = ny;
    let mut status = RecoveryStatus::MaxIters;
    let mut iterations = 0;

    for iter in 0..cfg.max_outer_iters {
        iterations = iter + 1;

        // proxy e = (Phi H)^T (y - Phi z)
        let z = circular_convolve(&spikes.to_dense(), &pulse.to_dense(), &domain)?;
        let mz = phi.apply(&z)?;
        let r: Vec<f64> = y.iter().zip(&mz).map(|(a, b)| a - b).collect();
        let back = phi.apply_transpose(&r)?;
        let offsets = pulse.offsets();
        let e = circulant_transpose_apply(&offsets, &back, &domain);

        // support refresh: model-prune the proxy, merge with the old support
        let omega = prune_to_model(&e, &domain, spikes_max, delta)?;
        let merged = omega.support().union(spikes.support())?;

        // least-squares on the merged columns, then prune back to the model
        let spike_dict = ColumnRestriction::spike_dictionary(&pulse, Some(phi), &merged)?;
        let rep = least_squares(&spike_dict, y, cfg.rank_tol)?;
        let mut x_dense = vec![0.0; domain.size()];
        for (&j, &v) in merged.indices().iter().zip(&rep.coefficients) {
            x_dense[j] = v;
        }
        spikes = prune_to_model(&x_dense, &domain, spikes_max, delta)?;
        // amplitude refit on the pruned support: the merged fit can carry
        // huge cancelling coefficients on correlated columns, and pruning
        // keeps them; the separated support is well conditioned
        if !spikes.support().is_empty() {
            let dict = ColumnRestriction::spike_dictionary(&pulse, Some(phi), spikes.support())?;
            let rep = least_squares(&dict, y, cfg.rank_tol)?;
            spikes = SpikeStream::new(spikes.support().clone(), rep.coefficients)?;
        }

        // pulse refit (skipped for the oracle decoder)
        if fixed_pulse.is_none() && spikes.values().iter().any(|&v| v != 0.0) {
            refit_pulse_realigned(&mut spikes, &mut pulse, &domain, &patch, phi, y, cfg.rank_tol)?;
        }

        let z = circular_convolve(&spikes.to_dense(), &pulse.to_dense(), &domain)?;
        let res = residual_norm(y, phi, &z)?;
        history.push(res);
        if best.as_ref().map_or(true, |(b, _, _)| res < *b) {
            best = Some((res, spikes.clone(), pulse.clone()));
        }

        if res <= cfg.residual_tol * ny {
            status = RecoveryStatus::Converged;
            break;
        }
        if cfg.halting == Halting::RelativeChange
            && (prev_res - res).abs() <= REL_CHANGE_TOL * prev_res.max(f64::MIN_POSITIVE)
        {
            status = RecoveryStatus::Converged;
            break;
        }
        prev_res = res;
    }

    let (_, best_spikes, best_pulse) = best.expect("at least one iterate");
    assemble(best_spikes, best_pulse, history, iterations, status)
}

/// Pulse refit over a window extended by up to F-1 cells behind the anchor
/// on every axis. The best length-F subwindow by energy becomes the new
/// anchored pulse and the spikes absorb the alignment shift. Without this,
/// a support estimate that is off by a common circular shift is a fixed
/// point of the plain anchored refit: the pulse energy piles up displaced
/// inside the patch and the residual stagnates.
fn refit_pulse_realigned(
    spikes: &mut SpikeStream,
    pulse: &mut ImpulseResponse,
    domain: &Domain,
    patch: &[usize],
    phi: &SamplingMatrix,
    y: &[f64],
    rank_tol: f64,
) -> Result<()> {
    let shape = domain.shape().to_vec();
    let dims = shape.len();
    // per-axis extension behind and ahead of the anchor, clamped so the
    // window fits the domain
    let ext: Vec<usize> = (0..dims)
        .map(|a| (patch[a] - 1).min(shape[a] - patch[a]))
        .collect();
    let fwd: Vec<usize> = (0..dims)
        .map(|a| (patch[a] - 1).min(shape[a] - patch[a] - ext[a]))
        .collect();
    let window: Vec<usize> = (0..dims).map(|a| ext[a] + patch[a] + fwd[a]).collect();
    let wdom = Domain::new(window.clone())?;

    let columns: Vec<usize> = (0..wdom.size())
        .map(|p| {
            let m = wdom.to_multi(p);
            let actual: Vec<usize> = (0..dims)
                .map(|a| (m[a] + shape[a] - ext[a]) % shape[a])
                .collect();
            domain.from_multi(&actual)
        })
        .collect();
    let dict = ColumnRestriction::new(
        CirculantOperator::new(spikes.to_dense(), domain.clone())?,
        Some(phi),
        columns,
    )?;
    let c = least_squares(&dict, y, rank_tol)?.coefficients;
    if c.iter().all(|&v| v == 0.0) {
        return Ok(());
    }

    // best anchor per energy; ties prefer the smallest total shift
    let pdom = Domain::new(patch.to_vec())?;
    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    let mut anchor = vec![0usize; dims];
    loop {
        let energy: f64 = (0..pdom.size())
            .map(|k| {
                let km = pdom.to_multi(k);
                let wm: Vec<usize> = (0..dims).map(|a| anchor[a] + km[a]).collect();
                let v = c[wdom.from_multi(&wm)];
                v * v
            })
            .sum();
        let shift_mag: usize = (0..dims).map(|a| ext[a].abs_diff(anchor[a])).sum();
        let better = match &best {
            Some((be, bs, _)) => energy > *be || (energy == *be && shift_mag < *bs),
            None => true,
        };
        if better {
            best = Some((energy, shift_mag, anchor.clone()));
        }
        // advance the anchor over [0, ext + fwd] per axis
        let mut a = dims;
        loop {
            if a == 0 {
                break;
            }
            a -= 1;
            if anchor[a] < ext[a] + fwd[a] {
                anchor[a] += 1;
                break;
            }
            anchor[a] = 0;
        }
        if anchor.iter().all(|&v| v == 0) {
            break;
        }
    }
    let (_, _, anchor) = best.expect("at least one anchor");

    let coeffs: Vec<f64> = (0..pdom.size())
        .map(|k| {
            let km = pdom.to_multi(k);
            let wm: Vec<usize> = (0..dims).map(|a| anchor[a] + km[a]).collect();
            c[wdom.from_multi(&wm)]
        })
        .collect();
    let mut new_pulse = ImpulseResponse::new(coeffs, patch.to_vec(), domain.clone())?;
    if new_pulse.norm() == 0.0 {
        return Ok(());
    }
    let scale = new_pulse.normalize()?;
    let sign = new_pulse.fix_sign();

    // spikes absorb the window shift of anchor - ext per axis
    let mut pairs: Vec<(usize, f64)> = spikes
        .support()
        .indices()
        .iter()
        .zip(spikes.values())
        .map(|(&j, &v)| {
            let m = domain.to_multi(j);
            let shifted: Vec<usize> = (0..dims)
                .map(|a| (m[a] + anchor[a] + shape[a] - ext[a]) % shape[a])
                .collect();
            (domain.from_multi(&shifted), v * scale * sign)
        })
        .collect();
    pairs.sort_unstable_by_key(|&(i, _)| i);
    let (indices, values): (Vec<usize>, Vec<f64>) = pairs.into_iter().unzip();
    *spikes = SpikeStream::new(Support::new(indices, domain.clone())?, values)?;
    *pulse = new_pulse;
    Ok(())
}

/// Standard CoSaMP baseline with target sparsity `k` in the identity basis.
pub fn cosamp(
    y: &[f64],
    phi: &SamplingMatrix,
    k: usize,
    cfg: &RecoveryConfig,
) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidInput("CoSaMP requires K >= 1".into()));
    }
    cosamp_generic(y, phi, cfg, |proxy| top_indices(proxy, 2 * k), |b| top_indices(b, k))
}

/// Block-sparse CoSaMP baseline: selection and pruning pick the best
/// disjoint length-`f` circular blocks by energy (2S blocks when selecting,
/// S when pruning), matching a structured-sparsity decoder that knows the
/// block size and count.
pub fn block_cosamp(
    y: &[f64],
    phi: &SamplingMatrix,
    s: usize,
    f: usize,
    cfg: &RecoveryConfig,
) -> Result<Vec<f64>> {
    let n = phi.cols();
    if s == 0 || f == 0 || s * f > n {
        return Err(Error::InvalidInput("require S >= 1, F >= 1, S*F <= N".into()));
    }
    cosamp_generic(
        y,
        phi,
        cfg,
        |proxy| block_support(proxy, n, 2 * s, f),
        |b| block_support(b, n, s, f),
    )
}

fn cosamp_generic(
    y: &[f64],
    phi: &SamplingMatrix,
    cfg: &RecoveryConfig,
    select: impl Fn(&[f64]) -> Vec<usize>,
    prune: impl Fn(&[f64]) -> Vec<usize>,
) -> Result<Vec<f64>> {
    let n = phi.cols();
    if y.len() != phi.rows() {
        return Err(Error::DimensionMismatch("measurements vs operator".into()));
    }
    let ny = norm(y);
    let mut x = vec![0.0; n];
    let mut support: Vec<usize> = Vec::new();
    let mut r = y.to_vec();
    let mut prev_res = ny;
    for iter in 0..cfg.max_outer_iters {
        let proxy = phi.apply_transpose(&r)?;
        let mut merged = select(&proxy);
        merged.extend_from_slice(&support);
        merged.sort_unstable();
        merged.dedup();

        // min-norm least squares on the merged columns
        let mut a = DMatrix::zeros(phi.rows(), merged.len());
        for (c, &j) in merged.iter().enumerate() {
            for (rr, v) in phi.column(j).into_iter().enumerate() {
                a[(rr, c)] = v;
            }
        }
        let rep = solve_dense(&a, &DVector::from_column_slice(y), cfg.rank_tol)?;
        let mut b = vec![0.0; n];
        for (&j, &v) in merged.iter().zip(&rep.coefficients) {
            b[j] = v;
        }

        support = prune(&b);
        x = vec![0.0; n];
        for &j in &support {
            x[j] = b[j];
        }

        let mx = phi.apply(&x)?;
        r = y.iter().zip(&mx).map(|(a, b)| a - b).collect();
        let res = norm(&r);
        if res <= cfg.residual_tol * ny {
            break;
        }
        if iter > 0 && (prev_res - res).abs() <= REL_CHANGE_TOL * prev_res.max(f64::MIN_POSITIVE) {
            break;
        }
        prev_res = res;
    }
    Ok(x)
}

/// Indices of the `k` largest magnitudes, ties to the lowest index.
fn top_indices(v: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| {
        v[b].abs()
            .partial_cmp(&v[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut out: Vec<usize> = idx
        .into_iter()
        .take(k)
        .filter(|&i| v[i] != 0.0)
        .collect();
    out.sort_unstable();
    out
}

/// Union of the cells of the `count` best disjoint length-`f` circular
/// blocks by squared energy, greedy, ties to the lowest block start.
fn block_support(v: &[f64], n: usize, count: usize, f: usize) -> Vec<usize> {
    let c: Vec<f64> = v.iter().map(|x| x * x).collect();
    let mut energy: Vec<f64> = (0..n)
        .map(|j| (0..f).map(|o| c[(j + o) % n]).sum())
        .collect();
    let mut cells = Vec::new();
    for _ in 0..count {
        let mut best: Option<(f64, usize)> = None;
        for (j, &e) in energy.iter().enumerate() {
            if e > 0.0 {
                match best {
                    Some((bv, _)) if e <= bv => {}
                    _ => best = Some((e, j)),
                }
            }
        }
        let Some((_, j)) = best else { break };
        for o in 0..f {
            cells.push((j + o) % n);
        }
        // block starts within distance < f of j overlap it; disable them
        for d in 0..(2 * f - 1) {
            let start = (j + n + d + 1 - f) % n;
            energy[start] = 0.0;
        }
    }
    cells.sort_unstable();
    cells.dedup();
    cells
}

/// Right-hand side of the anchor-pulse identity: with `c_i = <h_i, h_ref>`,
/// returns `sum c_i a_i^2 h_i / sum c_i^2 a_i^2`.
pub fn anchor_pulse_closed_form(
    pulses: &[Vec<f64>],
    amplitudes: &[f64],
    h_ref: &[f64],
) -> Result<Vec<f64>> {
    let f = h_ref.len();
    if pulses.is_empty() || pulses.len() != amplitudes.len() {
        return Err(Error::DimensionMismatch("pulses vs amplitudes".into()));
    }
    if pulses.iter().any(|p| p.len() != f) {
        return Err(Error::DimensionMismatch("pulse lengths vs reference".into()));
    }
    let mut num = vec![0.0; f];
    let mut den = 0.0;
    for (p, &a) in pulses.iter().zip(amplitudes) {
        let ci: f64 = p.iter().zip(h_ref).map(|(x, y)| x * y).sum();
        for (nk, &pk) in num.iter_mut().zip(p) {
            *nk += ci * a * a * pk;
        }
        den += ci * ci * a * a;
    }
    if den == 0.0 {
        return Err(Error::InvalidInput(
            "anchor pulse undefined: all weighted projections vanish".into(),
        ));
    }
    Ok(num.iter().map(|v| v / den).collect())
}

#[derive(Debug, Clone)]
pub struct AnchorResult {
    pub pulse: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Iterate the Nyquist-rate closed-form alternating updates until the pulse
/// estimate stops moving; the converged iterate satisfies the anchor-pulse
/// identity self-consistently. `shifts` must be separated by at least the
/// pulse length so the shifted columns never overlap.
pub fn anchor_pulse_fixed_point(
    pulses: &[Vec<f64>],
    amplitudes: &[f64],
    shifts: &Support,
    h_init: &[f64],
    cfg: &RecoveryConfig,
) -> Result<AnchorResult> {
    let f = h_init.len();
    if pulses.len() != shifts.len() {
        return Err(Error::DimensionMismatch("pulses vs shifts".into()));
    }
    let domain = shifts.domain();
    let idx = shifts.indices();
    for i in 0..idx.len() {
        for j in (i + 1)..idx.len() {
            if domain.conflicts(idx[i], idx[j], f) {
                return Err(Error::InvalidInput(
                    "shifts violate the non-overlap separation condition".into(),
                ));
            }
        }
    }
    let mut h = h_init.to_vec();
    let nh = norm(&h);
    if nh == 0.0 {
        return Err(Error::InvalidInput("zero initial pulse".into()));
    }
    for v in &mut h {
        *v /= nh;
    }
    for iter in 0..cfg.max_inner_iters {
        let raw = anchor_pulse_closed_form(pulses, amplitudes, &h)?;
        let nr = norm(&raw);
        if nr == 0.0 {
            return Err(Error::InvalidInput("anchor update collapsed to zero".into()));
        }
        let next: Vec<f64> = raw.iter().map(|v| v / nr).collect();
        let step = h
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        h = next;
        if step < 1e-10 {
            return Ok(AnchorResult {
                pulse: h,
                converged: true,
                iterations: iter + 1,
            });
        }
    }
    Ok(AnchorResult {
        pulse: h,
        converged: false,
        iterations: cfg.max_inner_iters,
    })
}
