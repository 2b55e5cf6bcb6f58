//! Pulse-stream signal model: circular domains, spike supports, concentrated
//! impulse responses, circular convolution, and admissible-support machinery.
//!
//! A pulse stream is `z = x * h` where `x` is an S-sparse spike stream, `h` is
//! a concentrated length-F pulse anchored at the domain origin, and `*` is
//! circular convolution. The disjoint model additionally requires every pair
//! of spikes to be circularly separated by at least `delta >= F`.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// A 1D or 2D circular index domain. All index arithmetic wraps per axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Domain {
    shape: Vec<usize>,
}

impl Domain {
    pub fn new(shape: Vec<usize>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&s| s == 0) {
            return Err(Error::InvalidInput(format!(
                "domain shape entries must be >= 1, got {shape:?}"
            )));
        }
        Ok(Self { shape })
    }

    /// 1D domain of length `n`.
    pub fn line(n: usize) -> Result<Self> {
        Self::new(vec![n])
    }

    /// 2D row-major domain.
    pub fn grid(rows: usize, cols: usize) -> Result<Self> {
        Self::new(vec![rows, cols])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dims(&self) -> usize {
        self.shape.len()
    }

    /// Total number of cells N.
    pub fn size(&self) -> usize {
        self.shape.iter().product()
    }

    /// Decompose a linear index into per-axis coordinates (row-major).
    pub fn to_multi(&self, idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims()];
        let mut rem = idx;
        for ax in (0..self.dims()).rev() {
            out[ax] = rem % self.shape[ax];
            rem /= self.shape[ax];
        }
        out
    }

    pub fn from_multi(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for ax in 0..self.dims() {
            idx = idx * self.shape[ax] + multi[ax];
        }
        idx
    }

    /// Circular per-axis sum of two linear indices.
    #[inline]
    pub fn wrap_add(&self, a: usize, b: usize) -> usize {
        match self.shape.len() {
            1 => (a + b) % self.shape[0],
            2 => {
                let c = self.shape[1];
                let (ar, ac) = (a / c, a % c);
                let (br, bc) = (b / c, b % c);
                ((ar + br) % self.shape[0]) * c + (ac + bc) % c
            }
            _ => {
                let am = self.to_multi(a);
                let bm = self.to_multi(b);
                let sum: Vec<usize> = am
                    .iter()
                    .zip(&bm)
                    .zip(&self.shape)
                    .map(|((&x, &y), &s)| (x + y) % s)
                    .collect();
                self.from_multi(&sum)
            }
        }
    }

    /// Circular per-axis difference `a - b` of two linear indices.
    #[inline]
    pub fn wrap_sub(&self, a: usize, b: usize) -> usize {
        match self.shape.len() {
            1 => (a + self.shape[0] - b) % self.shape[0],
            2 => {
                let c = self.shape[1];
                let (ar, ac) = (a / c, a % c);
                let (br, bc) = (b / c, b % c);
                ((ar + self.shape[0] - br) % self.shape[0]) * c + (ac + c - bc) % c
            }
            _ => {
                let am = self.to_multi(a);
                let bm = self.to_multi(b);
                let diff: Vec<usize> = am
                    .iter()
                    .zip(&bm)
                    .zip(&self.shape)
                    .map(|((&x, &y), &s)| (x + s - y) % s)
                    .collect();
                self.from_multi(&diff)
            }
        }
    }

    /// Circular distance along one axis.
    #[inline]
    fn axis_dist(&self, ax: usize, a: usize, b: usize) -> usize {
        let d = a.abs_diff(b);
        d.min(self.shape[ax] - d)
    }

    /// Two indices conflict under separation `delta` when every axis distance
    /// is below `delta` (i.e. both lie inside a common delta-side hypercube).
    pub fn conflicts(&self, a: usize, b: usize, delta: usize) -> bool {
        let am = self.to_multi(a);
        let bm = self.to_multi(b);
        (0..self.dims()).all(|ax| self.axis_dist(ax, am[ax], bm[ax]) < delta)
    }
}

/// A strictly sorted set of domain indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Support {
    indices: Vec<usize>,
    domain: Domain,
}

impl Support {
    pub fn new(mut indices: Vec<usize>, domain: Domain) -> Result<Self> {
        indices.sort_unstable();
        let n = domain.size();
        if indices.iter().any(|&i| i >= n) {
            return Err(Error::InvalidInput(format!(
                "support index out of range for domain of size {n}"
            )));
        }
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("duplicate support index".into()));
        }
        Ok(Self { indices, domain })
    }

    pub fn empty(domain: Domain) -> Self {
        Self {
            indices: Vec::new(),
            domain,
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.indices.binary_search(&idx).is_ok()
    }

    /// Sorted union of two supports over the same domain.
    pub fn union(&self, other: &Support) -> Result<Support> {
        if self.domain != other.domain {
            return Err(Error::DomainMismatch("support union".into()));
        }
        let mut merged = self.indices.clone();
        merged.extend_from_slice(&other.indices);
        merged.sort_unstable();
        merged.dedup();
        Ok(Support {
            indices: merged,
            domain: self.domain.clone(),
        })
    }
}

/// Sparse spike stream: amplitudes on a support.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeStream {
    support: Support,
    values: Vec<f64>,
}

impl SpikeStream {
    pub fn new(support: Support, values: Vec<f64>) -> Result<Self> {
        if support.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "support has {} indices but {} values supplied",
                support.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite spike amplitude".into()));
        }
        Ok(Self { support, values })
    }

    /// Build from a dense vector, keeping the nonzero entries.
    pub fn from_dense(x: &[f64], domain: Domain) -> Result<Self> {
        if x.len() != domain.size() {
            return Err(Error::DimensionMismatch("dense vector vs domain".into()));
        }
        let mut idx = Vec::new();
        let mut vals = Vec::new();
        for (i, &v) in x.iter().enumerate() {
            if v != 0.0 {
                idx.push(i);
                vals.push(v);
            }
        }
        Self::new(Support::new(idx, domain)?, vals)
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn domain(&self) -> &Domain {
        self.support.domain()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.domain().size()];
        for (&i, &v) in self.support.indices().iter().zip(&self.values) {
            out[i] = v;
        }
        out
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }
}

/// Concentrated pulse shape: a dense patch anchored at the domain origin.
///
/// In 1D the patch is the first `F` indices; in 2D it is the origin-anchored
/// `side x side` hypercube (row-major coefficients).
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    coefficients: Vec<f64>,
    patch_shape: Vec<usize>,
    domain: Domain,
}

impl ImpulseResponse {
    pub fn new(coefficients: Vec<f64>, patch_shape: Vec<usize>, domain: Domain) -> Result<Self> {
        if patch_shape.len() != domain.dims() {
            return Err(Error::DimensionMismatch(
                "pulse patch dimensionality vs domain".into(),
            ));
        }
        if patch_shape
            .iter()
            .zip(domain.shape())
            .any(|(&p, &d)| p == 0 || p > d)
        {
            return Err(Error::InvalidInput(format!(
                "pulse patch shape {patch_shape:?} does not fit domain {:?}",
                domain.shape()
            )));
        }
        if coefficients.len() != patch_shape.iter().product::<usize>() {
            return Err(Error::DimensionMismatch(
                "pulse coefficient count vs patch shape".into(),
            ));
        }
        if coefficients.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite pulse coefficient".into()));
        }
        Ok(Self {
            coefficients,
            patch_shape,
            domain,
        })
    }

    /// 1D pulse occupying the first `coefficients.len()` indices.
    pub fn new_1d(coefficients: Vec<f64>, domain: Domain) -> Result<Self> {
        let f = coefficients.len();
        Self::new(coefficients, vec![f], domain)
    }

    /// Flat initialization `(1,...,1)/sqrt(F)` over a patch.
    pub fn flat(patch_shape: Vec<usize>, domain: Domain) -> Result<Self> {
        let f: usize = patch_shape.iter().product();
        let v = 1.0 / (f as f64).sqrt();
        Self::new(vec![v; f], patch_shape, domain)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn patch_shape(&self) -> &[usize] {
        &self.patch_shape
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Total pulse size F.
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.coefficients.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Patch entries as (domain linear offset, coefficient) pairs in
    /// row-major patch order. Offsets compose with `Domain::wrap_add`.
    pub fn offsets(&self) -> Vec<(usize, f64)> {
        let patch = Domain {
            shape: self.patch_shape.clone(),
        };
        (0..self.coefficients.len())
            .map(|p| {
                let multi = patch.to_multi(p);
                (self.domain.from_multi(&multi), self.coefficients[p])
            })
            .collect()
    }

    /// Domain linear offsets of the patch cells, row-major patch order.
    pub fn patch_offsets(patch_shape: &[usize], domain: &Domain) -> Vec<usize> {
        let patch = Domain {
            shape: patch_shape.to_vec(),
        };
        (0..patch.size())
            .map(|p| domain.from_multi(&patch.to_multi(p)))
            .collect()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.domain.size()];
        for (off, v) in self.offsets() {
            out[off] = v;
        }
        out
    }

    /// Divide by the Euclidean norm; errors on a zero pulse.
    pub fn normalize(&mut self) -> Result<f64> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::InvalidInput("cannot normalize zero pulse".into()));
        }
        for v in &mut self.coefficients {
            *v /= n;
        }
        Ok(n)
    }

    /// Flip signs so the first nonzero coefficient is positive.
    /// Returns -1.0 when a flip occurred, 1.0 otherwise.
    pub fn fix_sign(&mut self) -> f64 {
        match self.coefficients.iter().find(|v| **v != 0.0) {
            Some(v) if *v < 0.0 => {
                for c in &mut self.coefficients {
                    *c = -*c;
                }
                -1.0
            }
            _ => 1.0,
        }
    }
}

/// The disjoint pulse stream model M(S, F, delta).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PulseModel {
    domain: Domain,
    spikes: usize,
    pulse_side: usize,
    delta: usize,
}

impl PulseModel {
    /// `pulse_len` is the total pulse size F; for multi-dimensional domains it
    /// must be a perfect power (`side^dims`) describing a hypercube patch.
    pub fn new(domain: Domain, spikes: usize, pulse_len: usize, delta: usize) -> Result<Self> {
        if spikes == 0 || pulse_len == 0 || delta == 0 {
            return Err(Error::InvalidModel("S, F, delta must all be >= 1".into()));
        }
        let dims = domain.dims() as u32;
        let side = (pulse_len as f64).powf(1.0 / dims as f64).round() as usize;
        if side.checked_pow(dims).map_or(true, |p| p != pulse_len) {
            return Err(Error::InvalidModel(format!(
                "pulse size {pulse_len} is not a {dims}-dimensional hypercube"
            )));
        }
        if delta < side {
            return Err(Error::InvalidModel(format!(
                "separation delta={delta} must be at least the pulse side {side}"
            )));
        }
        if spikes * delta > domain.size() {
            return Err(Error::InvalidModel(format!(
                "packing infeasible: S*delta = {} exceeds N = {}",
                spikes * delta,
                domain.size()
            )));
        }
        if domain.shape().iter().any(|&s| s < delta) {
            return Err(Error::InvalidModel(
                "delta exceeds a domain axis length".into(),
            ));
        }
        Ok(Self {
            domain,
            spikes,
            pulse_side: side,
            delta,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn spikes(&self) -> usize {
        self.spikes
    }

    /// Total pulse size F.
    pub fn pulse_len(&self) -> usize {
        self.pulse_side.pow(self.domain.dims() as u32)
    }

    /// Per-axis pulse patch side length.
    pub fn pulse_side(&self) -> usize {
        self.pulse_side
    }

    pub fn pulse_patch_shape(&self) -> Vec<usize> {
        vec![self.pulse_side; self.domain.dims()]
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    /// Maximum total sparsity K = S*F of signals in the model.
    pub fn total_sparsity(&self) -> usize {
        self.spikes * self.pulse_len()
    }
}

/// Circular convolution `z[k] = sum_j x[j] h[(k-j) mod shape]`.
///
/// Terms are accumulated in a symmetric order so the result is bit-identical
/// under argument swap: for each output cell, the pair of cross terms
/// `x[a]h[b]` and `x[b]h[a]` is reduced first and the pair sums are added in
/// a fixed key order.
pub fn circular_convolve(x: &[f64], h: &[f64], domain: &Domain) -> Result<Vec<f64>> {
    let n = domain.size();
    if x.len() != n || h.len() != n {
        return Err(Error::DomainMismatch(format!(
            "circular_convolve: lengths {} and {} vs domain size {n}",
            x.len(),
            h.len()
        )));
    }
    let nzx: Vec<usize> = (0..n).filter(|&j| x[j] != 0.0).collect();
    let nzh: Vec<usize> = (0..n).filter(|&i| h[i] != 0.0).collect();

    // (output index, unordered pair key, term value)
    let mut terms: Vec<(usize, usize, usize, f64)> =
        Vec::with_capacity(nzx.len() * nzh.len());
    for &j in &nzx {
        for &i in &nzh {
            let k = domain.wrap_add(j, i);
            terms.push((k, j.min(i), j.max(i), x[j] * h[i]));
        }
    }
    terms.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));

    let mut z = vec![0.0; n];
    let mut t = 0;
    while t < terms.len() {
        let (k, a, b, v) = terms[t];
        // Cross terms x[a]h[b] and x[b]h[a] share the key (k, a, b);
        // their two-way sum is order-insensitive bitwise.
        if t + 1 < terms.len() {
            let (k2, a2, b2, v2) = terms[t + 1];
            if (k2, a2, b2) == (k, a, b) {
                z[k] += v + v2;
                t += 2;
                continue;
            }
        }
        z[k] += v;
        t += 1;
    }
    Ok(z)
}

/// Circularly shift a dense vector by the multi-index of `shift`.
pub fn circular_shift(x: &[f64], domain: &Domain, shift: usize) -> Vec<f64> {
    let n = domain.size();
    let mut out = vec![0.0; n];
    for j in 0..n {
        if x[j] != 0.0 {
            out[domain.wrap_add(j, shift)] = x[j];
        }
    }
    out
}

/// True iff `support` has at most S spikes, all pairwise circularly separated
/// by at least delta (per-axis hypercube rule in 2D).
pub fn is_in_model(support: &Support, model: &PulseModel) -> bool {
    if support.domain() != model.domain() {
        return false;
    }
    let idx = support.indices();
    if idx.len() > model.spikes() {
        return false;
    }
    for i in 0..idx.len() {
        for j in (i + 1)..idx.len() {
            if model.domain().conflicts(idx[i], idx[j], model.delta()) {
                return false;
            }
        }
    }
    true
}

/// Per-anchor count of delta-separated supports of cardinality S in a
/// length-N domain: `binomial(N - S*delta + S - 1, S - 1)`, exactly. This is
/// the subspace-count figure used in the measurement bound; the full
/// circular enumeration has [`enumeration_count`] members (larger by a
/// factor of N/S).
pub fn count_supports(n: usize, s: usize, delta: usize) -> BigUint {
    assert!(s >= 1 && delta >= 1);
    if s * delta > n {
        return BigUint::zero();
    }
    binomial(n - s * delta + s - 1, s - 1)
}

/// Exact cardinality of [`enumerate_supports`]: the number of ways to place
/// S points on a circle of N cells with all circular gaps at least delta,
/// `(N/S) * binomial(N - S*delta + S - 1, S - 1)`.
pub fn enumeration_count(n: usize, s: usize, delta: usize) -> BigUint {
    count_supports(n, s, delta) * BigUint::from(n) / BigUint::from(s)
}

fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// Lazily yields every circularly delta-separated support of cardinality
/// exactly S over a 1D domain of length N, in lexicographic order.
pub struct SupportIter {
    n: usize,
    s: usize,
    delta: usize,
    domain: Domain,
    current: Option<Vec<usize>>,
    started: bool,
}

/// See [`SupportIter`]. Empty stream when packing is infeasible.
pub fn enumerate_supports(n: usize, s: usize, delta: usize) -> SupportIter {
    let domain = Domain::line(n.max(1)).expect("positive length");
    let feasible = n > 0 && s >= 1 && delta >= 1 && s * delta <= n;
    let current = if feasible {
        Some((0..s).map(|k| k * delta).collect())
    } else {
        None
    };
    SupportIter {
        n,
        s,
        delta,
        domain,
        current,
        started: false,
    }
}

impl SupportIter {
    /// A sorted index list is admissible iff consecutive linear gaps are
    /// >= delta and the wrap gap satisfies `last <= first + n - delta`.
    /// Incrementing position `p` keeps a feasible tail iff the minimal tail
    /// (delta-spaced) still fits both the wrap bound and the domain end.
    fn advance(&mut self) -> bool {
        let cur = self.current.as_mut().expect("advance on live iterator");
        let (s, n, delta) = (self.s, self.n, self.delta);
        for p in (0..s).rev() {
            let v = cur[p] + 1;
            let last_min = v + (s - 1 - p) * delta;
            let feasible = if p == 0 {
                last_min <= n - 1
            } else {
                last_min <= (n - 1).min(cur[0] + n - delta)
            };
            if feasible {
                cur[p] = v;
                for q in (p + 1)..s {
                    cur[q] = cur[q - 1] + delta;
                }
                return true;
            }
        }
        false
    }
}

impl Iterator for SupportIter {
    type Item = Support;

    fn next(&mut self) -> Option<Support> {
        self.current.as_ref()?;
        if self.started {
            if !self.advance() {
                self.current = None;
                return None;
            }
        } else {
            self.started = true;
        }
        let idx = self.current.as_ref().unwrap().clone();
        Some(Support {
            indices: idx,
            domain: self.domain.clone(),
        })
    }
}

/// Amplitude / pulse coefficient distribution specs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dist {
    StandardNormal,
    /// Uniform on {-1, +1}.
    Rademacher,
    Uniform {
        lo: f64,
        hi: f64,
    },
}

impl Dist {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Dist::StandardNormal => StandardNormal.sample(rng),
            Dist::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Dist::Uniform { lo, hi } => rng.random_range(*lo..*hi),
        }
    }
}

/// A generated ground-truth instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub spikes: SpikeStream,
    pub pulse: ImpulseResponse,
    pub signal: Vec<f64>,
    /// False when the rejection-sampling cap was hit and the support came
    /// from the sequential gap-placement fallback.
    pub uniform_support: bool,
}

/// Draw a random model instance. The support is uniform over admissible
/// configurations via rejection sampling (gap-placement fallback for tight
/// packings); the pulse is normalized to unit Euclidean norm. Deterministic
/// for a fixed seed (ChaCha8 keyed by `seed`).
pub fn random_instance(
    model: &PulseModel,
    amplitude_dist: Dist,
    pulse_dist: Dist,
    seed: u64,
) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.domain().size();
    let s = model.spikes();

    let mut uniform = true;
    let mut support = None;
    let cap = 10 * s * n;
    for _ in 0..cap {
        let mut idx: Vec<usize> = sample_indices(&mut rng, n, s).into_iter().collect();
        idx.sort_unstable();
        let cand = Support {
            indices: idx,
            domain: model.domain().clone(),
        };
        if is_in_model(&cand, model) {
            support = Some(cand);
            break;
        }
    }
    let support = match support {
        Some(sup) => sup,
        None => {
            uniform = false;
            gap_placement_support(model, &mut rng)?
        }
    };

    let values: Vec<f64> = (0..s).map(|_| amplitude_dist.sample(&mut rng)).collect();
    let spikes = SpikeStream::new(support, values)?;

    let f = model.pulse_len();
    let coeffs: Vec<f64> = (0..f).map(|_| pulse_dist.sample(&mut rng)).collect();
    let mut pulse = ImpulseResponse::new(coeffs, model.pulse_patch_shape(), model.domain().clone())?;
    pulse.normalize()?;
    pulse.fix_sign();

    let signal = circular_convolve(&spikes.to_dense(), &pulse.to_dense(), model.domain())?;
    Ok(Instance {
        spikes,
        pulse,
        signal,
        uniform_support: uniform,
    })
}

/// Fallback support construction for packings too tight for rejection
/// sampling: spikes placed with gaps >= delta (1D) or on a delta grid with a
/// random circular offset (2D+). Not uniform over configurations.
fn gap_placement_support<R: Rng>(model: &PulseModel, rng: &mut R) -> Result<Support> {
    let domain = model.domain();
    let s = model.spikes();
    let delta = model.delta();
    if domain.dims() == 1 {
        let n = domain.size();
        let extra = n - s * delta;
        let mut offsets: Vec<usize> = (0..s).map(|_| rng.random_range(0..=extra)).collect();
        offsets.sort_unstable();
        let rot = rng.random_range(0..n);
        let indices: Vec<usize> = (0..s).map(|k| (k * delta + offsets[k] + rot) % n).collect();
        let support = Support::new(indices, domain.clone())?;
        if !is_in_model(&support, model) {
            return Err(Error::InstanceGeneration(
                "gap placement produced an inadmissible support".into(),
            ));
        }
        Ok(support)
    } else {
        let cells_per_axis: Vec<usize> = domain.shape().iter().map(|&sh| sh / delta).collect();
        let num_cells: usize = cells_per_axis.iter().product();
        if num_cells < s {
            return Err(Error::InstanceGeneration(format!(
                "cannot place {s} spikes on a delta={delta} grid of {num_cells} cells"
            )));
        }
        let rot: Vec<usize> = domain.shape().iter().map(|&sh| rng.random_range(0..sh)).collect();
        let cell_domain = Domain {
            shape: cells_per_axis.clone(),
        };
        let cells = sample_indices(rng, num_cells, s);
        let mut indices = Vec::with_capacity(s);
        for cell in cells {
            let multi = cell_domain.to_multi(cell);
            let pos: Vec<usize> = multi
                .iter()
                .zip(&rot)
                .zip(domain.shape())
                .map(|((&c, &r), &sh)| (c * delta + r) % sh)
                .collect();
            indices.push(domain.from_multi(&pos));
        }
        let support = Support::new(indices, domain.clone())?;
        if !is_in_model(&support, model) {
            return Err(Error::InstanceGeneration(
                "grid placement produced an inadmissible support".into(),
            ));
        }
        Ok(support)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Domain {
        Domain::line(n).unwrap()
    }

    #[test]
    fn convolve_unit_impulse_is_identity() {
        let d = line(8);
        let mut x = vec![0.0; 8];
        x[0] = 1.0;
        let h = vec![0.3, -1.2, 0.0, 4.5, 0.0, 0.0, 2.0, -0.7];
        assert_eq!(circular_convolve(&x, &h, &d).unwrap(), h);
    }

    #[test]
    fn convolve_hand_example() {
        let d = line(6);
        let x = vec![1.0, 0.0, 0.0, 2.0, 0.0, 0.0];
        let h = vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(
            circular_convolve(&x, &h, &d).unwrap(),
            vec![1.0, 1.0, 0.0, 2.0, 2.0, 0.0]
        );
    }

    #[test]
    fn convolve_wraparound() {
        let d = line(6);
        let mut x = vec![0.0; 6];
        x[5] = 1.0;
        let h = vec![1.0, 2.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(
            circular_convolve(&x, &h, &d).unwrap(),
            vec![2.0, 0.0, 0.0, 0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn convolve_rejects_domain_mismatch() {
        let d = line(6);
        assert!(circular_convolve(&[1.0; 5], &[1.0; 6], &d).is_err());
    }

    #[test]
    fn membership_boundary_cases() {
        let d = line(10);
        let model = PulseModel::new(d.clone(), 2, 3, 5).unwrap();
        let sep = Support::new(vec![0, 5], d.clone()).unwrap();
        assert!(is_in_model(&sep, &model));
        let wrapped = Support::new(vec![0, 9], d.clone()).unwrap();
        assert!(!is_in_model(&wrapped, &model));
        let single = Support::new(vec![3], d).unwrap();
        assert!(is_in_model(&single, &model));
    }

    #[test]
    fn count_supports_formula() {
        assert_eq!(count_supports(10, 2, 3), BigUint::from(5u32));
        assert_eq!(count_supports(10, 1, 10), BigUint::from(1u32));
        assert_eq!(count_supports(12, 3, 4), BigUint::from(1u32));
        assert_eq!(count_supports(5, 3, 2), BigUint::from(0u32));
    }

    #[test]
    fn enumerate_small_cases() {
        let got: Vec<Vec<usize>> = enumerate_supports(5, 2, 2)
            .map(|s| s.indices().to_vec())
            .collect();
        assert_eq!(
            got,
            vec![vec![0, 2], vec![0, 3], vec![1, 3], vec![1, 4], vec![2, 4]]
        );

        let singles: Vec<Vec<usize>> = enumerate_supports(4, 1, 1)
            .map(|s| s.indices().to_vec())
            .collect();
        assert_eq!(singles, vec![vec![0], vec![1], vec![2], vec![3]]);

        let triples: Vec<Vec<usize>> = enumerate_supports(6, 3, 2)
            .map(|s| s.indices().to_vec())
            .collect();
        assert_eq!(triples, vec![vec![0, 2, 4], vec![1, 3, 5]]);
    }

    #[test]
    fn enumerate_matches_brute_force() {
        for n in 4..=12 {
            for s in 1..=3usize {
                for delta in 1..=n {
                    if s * delta > n {
                        continue;
                    }
                    let d = line(n);
                    let model = PulseModel::new(d.clone(), s, 1, delta).unwrap();
                    let mut brute = Vec::new();
                    for mask in 0u32..(1 << n) {
                        if mask.count_ones() as usize != s {
                            continue;
                        }
                        let comb: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
                        let sup = Support::new(comb.clone(), d.clone()).unwrap();
                        if is_in_model(&sup, &model) {
                            brute.push(comb);
                        }
                    }
                    brute.sort();
                    let got: Vec<Vec<usize>> = enumerate_supports(n, s, delta)
                        .map(|s| s.indices().to_vec())
                        .collect();
                    assert_eq!(got, brute, "n={n} s={s} delta={delta}");
                }
            }
        }
    }

    #[test]
    fn random_instance_valid_and_deterministic() {
        let d = line(1024);
        let model = PulseModel::new(d, 8, 11, 64).unwrap();
        let a = random_instance(&model, Dist::StandardNormal, Dist::StandardNormal, 1).unwrap();
        assert!(is_in_model(a.spikes.support(), &model));
        assert!((a.pulse.norm() - 1.0).abs() < 1e-12);
        let nonzeros = a.signal.iter().filter(|v| **v != 0.0).count();
        assert!(nonzeros <= model.total_sparsity());

        let b = random_instance(&model, Dist::StandardNormal, Dist::StandardNormal, 1).unwrap();
        assert_eq!(a.spikes, b.spikes);
        assert_eq!(a.pulse, b.pulse);
        assert_eq!(a.signal, b.signal);
    }

    #[test]
    fn random_instance_tight_packing_falls_back() {
        let d = line(12);
        let model = PulseModel::new(d, 3, 4, 4).unwrap();
        // only one admissible configuration family; fallback may trigger but
        // the result must still be admissible
        let inst = random_instance(&model, Dist::StandardNormal, Dist::StandardNormal, 7).unwrap();
        assert!(is_in_model(inst.spikes.support(), &model));
    }

    #[test]
    fn random_instance_2d() {
        let d = Domain::grid(16, 16).unwrap();
        let model = PulseModel::new(d, 3, 9, 5).unwrap();
        let inst = random_instance(&model, Dist::StandardNormal, Dist::StandardNormal, 3).unwrap();
        assert!(is_in_model(inst.spikes.support(), &model));
        assert!((inst.pulse.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wrap_arithmetic_2d() {
        let d = Domain::grid(4, 6).unwrap();
        // (3,5) + (2,3) = (1,2)
        let a = d.from_multi(&[3, 5]);
        let b = d.from_multi(&[2, 3]);
        assert_eq!(d.wrap_add(a, b), d.from_multi(&[1, 2]));
        assert_eq!(d.wrap_sub(d.from_multi(&[1, 2]), b), a);
    }

    #[test]
    fn conflicts_2d_hypercube_rule() {
        let d = Domain::grid(10, 10).unwrap();
        let a = d.from_multi(&[0, 0]);
        let near = d.from_multi(&[2, 9]); // axis dists 2 and 1
        let far = d.from_multi(&[5, 1]); // axis dists 5 and 1
        assert!(d.conflicts(a, near, 3));
        assert!(!d.conflicts(a, far, 3));
    }
}
