//! Best separation-constrained approximation: given per-coefficient energies,
//! pick at most S indices with at most one index in any circular window of
//! `delta` consecutive positions, maximizing the captured energy.
//!
//! Three routes are provided: an exact dynamic program (the production path),
//! a dense-simplex LP relaxation of the binary integer program (a diagnostic
//! of the relaxation's integrality), and an exhaustive oracle for small N.

use crate::error::{Error, Result};
use crate::signal_model::{enumerate_supports, Domain, SpikeStream, Support};

/// Rounding threshold for LP solutions.
pub const EPS_INT: f64 = 1e-6;

const EPS_LP: f64 = 1e-9;

/// Energy-maximization problem over a circular 1D index set.
#[derive(Debug, Clone)]
pub struct ApproxProblem {
    energies: Vec<f64>,
    spikes: usize,
    delta: usize,
}

impl ApproxProblem {
    pub fn new(energies: Vec<f64>, spikes: usize, delta: usize) -> Result<Self> {
        let n = energies.len();
        if n == 0 || delta == 0 {
            return Err(Error::InvalidInput("empty problem".into()));
        }
        if energies.iter().any(|&e| !(e >= 0.0) || !e.is_finite()) {
            return Err(Error::InvalidInput(
                "energies must be finite and nonnegative".into(),
            ));
        }
        if spikes * delta > n {
            return Err(Error::InvalidModel(format!(
                "S*delta = {} exceeds N = {n}",
                spikes * delta
            )));
        }
        Ok(Self {
            energies,
            spikes,
            delta,
        })
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn spikes(&self) -> usize {
        self.spikes
    }

    pub fn delta(&self) -> usize {
        self.delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Dp,
    Lp,
    Brute,
}

#[derive(Debug, Clone)]
pub struct ApproxSolution {
    pub support: Support,
    pub objective: f64,
    pub method: Method,
}

/// Sum energies in ascending index order. Used by every route so that equal
/// supports produce bit-identical objectives.
fn objective_of(c: &[f64], indices: &[usize]) -> f64 {
    indices.iter().fold(0.0, |acc, &i| acc + c[i])
}

/// Exact maximizer via dynamic programming.
///
/// The circular constraint is removed by conditioning on the (unique, if any)
/// selected index among the first `delta - 1` positions; each case reduces to
/// a linear-chain selection with gaps >= delta on an interval, solved by a
/// suffix DP. Ties break to the lexicographically smallest support.
pub fn best_approx_dp(p: &ApproxProblem) -> ApproxSolution {
    let n = p.len();
    let c = p.energies();
    let delta = p.delta();
    let s = p.spikes();

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut consider = |indices: Vec<usize>| {
        let obj = objective_of(c, &indices);
        match &best {
            Some((bo, bi)) if obj < *bo || (obj == *bo && *bi <= indices) => {}
            _ => best = Some((obj, indices)),
        }
    };

    // case: no selection among positions [0, delta-2]
    if n >= delta {
        consider(chain_select(c, delta - 1, n - 1, delta, s));
    } else {
        consider(Vec::new());
    }

    // case: selection fixed at position q in [0, delta-2]
    for q in 0..delta.saturating_sub(1) {
        if s == 0 || q >= n {
            break;
        }
        let mut indices = vec![q];
        let lo = q + delta;
        let hi = (q + n).saturating_sub(delta);
        if lo <= hi && s > 1 {
            indices.extend(chain_select(c, lo, hi, delta, s - 1));
        }
        consider(indices);
    }

    let (objective, indices) = best.unwrap_or((0.0, Vec::new()));
    ApproxSolution {
        support: Support::new(indices, Domain::line(n).expect("n >= 1"))
            .expect("dp support is valid"),
        objective,
        method: Method::Dp,
    }
}

/// Maximize the sum of `c` over at most `budget` positions in `[lo, hi]`
/// with consecutive selections at least `delta` apart. Returns the chosen
/// indices, lexicographically smallest among optima (preferring fewer
/// zero-objective picks only when everything remaining is zero).
fn chain_select(c: &[f64], lo: usize, hi: usize, delta: usize, budget: usize) -> Vec<usize> {
    if lo > hi || budget == 0 {
        return Vec::new();
    }
    let len = hi - lo + 1;
    let cols = budget + 1;
    // suffix values: g[(i - lo) * cols + j] = best sum choosing <= j from i..=hi
    let mut g = vec![0.0_f64; (len + 1) * cols];
    let val = |g: &[f64], i: usize, j: usize| -> f64 {
        if i > hi {
            0.0
        } else {
            g[(i - lo) * cols + j]
        }
    };
    for i in (lo..=hi).rev() {
        for j in 1..cols {
            let skip = val(&g, i + 1, j);
            let take = c[i] + val(&g, i + delta, j - 1);
            g[(i - lo) * cols + j] = if take > skip { take } else { skip };
        }
    }
    let mut out = Vec::new();
    let mut i = lo;
    let mut j = budget;
    while i <= hi && j > 0 {
        let skip = val(&g, i + 1, j);
        let take = c[i] + val(&g, i + delta, j - 1);
        if take > skip || (take == skip && take > 0.0) {
            out.push(i);
            i += delta;
            j -= 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Exhaustive maximization over all admissible supports of cardinality
/// `0..=S`. Ground truth for small N (<= 24 enforced).
pub fn best_approx_brute(p: &ApproxProblem) -> Result<ApproxSolution> {
    let n = p.len();
    if n > 24 {
        return Err(Error::TooLarge(format!(
            "brute-force approximation limited to N <= 24, got {n}"
        )));
    }
    let c = p.energies();
    let mut best_obj = 0.0_f64;
    let mut best_idx: Vec<usize> = Vec::new();
    for card in 1..=p.spikes() {
        if card * p.delta() > n {
            break;
        }
        for sup in enumerate_supports(n, card, p.delta()) {
            let obj = objective_of(c, sup.indices());
            if obj > best_obj || (obj == best_obj && sup.indices().to_vec() < best_idx) {
                best_obj = obj;
                best_idx = sup.indices().to_vec();
            }
        }
    }
    Ok(ApproxSolution {
        support: Support::new(best_idx, Domain::line(n)?)?,
        objective: best_obj,
        method: Method::Brute,
    })
}

/// LP relaxation of the binary integer program `max c^T s, W s <= u,
/// 0 <= s <= 1`, where `W` stacks the cardinality row and the N circular
/// window rows. Solved with a dense simplex (Bland's rule). Entries within
/// [`EPS_INT`] of {0, 1} are rounded; anything else is surfaced as an
/// integrality violation rather than silently rounded.
pub fn best_approx_lp(p: &ApproxProblem) -> Result<ApproxSolution> {
    let n = p.len();
    let c = p.energies();
    let delta = p.delta();

    // rows: 1 cardinality + n windows + n upper bounds
    let mcon = 2 * n + 1;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(mcon);
    let mut rhs: Vec<f64> = Vec::with_capacity(mcon);
    rows.push(vec![1.0; n]);
    rhs.push(p.spikes() as f64);
    for j in 0..n {
        let mut row = vec![0.0; n];
        for k in 0..delta {
            row[(j + k) % n] = 1.0;
        }
        rows.push(row);
        rhs.push(1.0);
    }
    for i in 0..n {
        let mut row = vec![0.0; n];
        row[i] = 1.0;
        rows.push(row);
        rhs.push(1.0);
    }

    let s = simplex_maximize(c, &rows, &rhs)?;

    let mut indices = Vec::new();
    let mut max_frac = 0.0_f64;
    for (i, &v) in s.iter().enumerate() {
        if v >= 1.0 - EPS_INT {
            indices.push(i);
        } else if v > EPS_INT {
            max_frac = max_frac.max(v.min(1.0 - v));
        }
    }
    if max_frac > 0.0 {
        return Err(Error::IntegralityViolation {
            max_frac,
            solution: s,
        });
    }
    let objective = objective_of(c, &indices);
    Ok(ApproxSolution {
        support: Support::new(indices, Domain::line(n)?)?,
        objective,
        method: Method::Lp,
    })
}

/// Dense tableau simplex for `max c^T x, A x <= b, x >= 0` with `b >= 0`.
fn simplex_maximize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = c.len();
    let m = a.len();
    let width = n + m + 1; // structural + slacks + rhs
    let mut tab: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    for (row, &bi) in a.iter().zip(b) {
        let mut t = vec![0.0; width];
        t[..n].copy_from_slice(row);
        t[width - 1] = bi;
        tab.push(t);
    }
    for (i, t) in tab.iter_mut().enumerate() {
        t[n + i] = 1.0;
    }
    let mut obj = vec![0.0; width];
    for (j, &cj) in c.iter().enumerate() {
        obj[j] = -cj;
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    let max_pivots = 50 * (n + m);
    for _ in 0..max_pivots {
        // Bland: first column with negative reduced cost
        let enter = match (0..n + m).find(|&j| obj[j] < -EPS_LP) {
            Some(j) => j,
            None => {
                let mut x = vec![0.0; n];
                for (i, &bv) in basis.iter().enumerate() {
                    if bv < n {
                        x[bv] = tab[i][width - 1];
                    }
                }
                return Ok(x);
            }
        };
        // ratio test, ties to smallest basis variable (Bland)
        let mut leave: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for i in 0..m {
            let aij = tab[i][enter];
            if aij > EPS_LP {
                let ratio = tab[i][width - 1] / aij;
                if ratio < best_ratio - EPS_LP
                    || (ratio < best_ratio + EPS_LP
                        && leave.map_or(true, |l| basis[i] < basis[l]))
                {
                    best_ratio = ratio;
                    leave = Some(i);
                }
            }
        }
        let leave = leave.ok_or_else(|| {
            Error::InvalidInput("LP relaxation unbounded (malformed constraints)".into())
        })?;
        // pivot
        let piv = tab[leave][enter];
        for v in tab[leave].iter_mut() {
            *v /= piv;
        }
        for i in 0..m {
            if i != leave {
                let factor = tab[i][enter];
                if factor != 0.0 {
                    for j in 0..width {
                        tab[i][j] -= factor * tab[leave][j];
                    }
                }
            }
        }
        let factor = obj[enter];
        if factor != 0.0 {
            for j in 0..width {
                obj[j] -= factor * tab[leave][j];
            }
        }
        basis[leave] = enter;
    }
    Err(Error::InvalidInput(
        "LP simplex failed to converge (pivot cap reached)".into(),
    ))
}

/// Greedy disjoint-hypercube selection for multi-dimensional domains: an
/// approximation used where the exact DP applies only to 1D.
pub fn best_approx_greedy(
    c: &[f64],
    domain: &Domain,
    spikes: usize,
    delta: usize,
) -> Result<Vec<usize>> {
    if c.len() != domain.size() {
        return Err(Error::DimensionMismatch("energies vs domain size".into()));
    }
    let mut blocked = vec![false; c.len()];
    let mut picked = Vec::new();
    for _ in 0..spikes {
        let mut best: Option<(f64, usize)> = None;
        for (i, &v) in c.iter().enumerate() {
            if blocked[i] || v <= 0.0 {
                continue;
            }
            match best {
                Some((bv, _)) if v <= bv => {}
                _ => best = Some((v, i)),
            }
        }
        let Some((_, idx)) = best else { break };
        picked.push(idx);
        for i in 0..c.len() {
            if !blocked[i] && domain.conflicts(idx, i, delta) {
                blocked[i] = true;
            }
        }
    }
    picked.sort_unstable();
    Ok(picked)
}

/// Project a dense vector onto the model: run the exact DP (1D) or the
/// greedy hypercube selector (2D+) on the squared entries and keep the
/// winning coefficients.
pub fn prune_to_model(
    x: &[f64],
    domain: &Domain,
    spikes: usize,
    delta: usize,
) -> Result<SpikeStream> {
    if x.len() != domain.size() {
        return Err(Error::DimensionMismatch("vector vs domain size".into()));
    }
    let c: Vec<f64> = x.iter().map(|v| v * v).collect();
    let raw = if domain.dims() == 1 {
        let p = ApproxProblem::new(c, spikes, delta)?;
        best_approx_dp(&p).support.indices().to_vec()
    } else {
        best_approx_greedy(&c, domain, spikes, delta)?
    };
    // drop zero-amplitude picks so pruning is idempotent on sparse views
    let indices: Vec<usize> = raw.into_iter().filter(|&i| x[i] != 0.0).collect();
    let values: Vec<f64> = indices.iter().map(|&i| x[i]).collect();
    SpikeStream::new(Support::new(indices, domain.clone())?, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dp_hand_example() {
        let p = ApproxProblem::new(vec![9.0, 1.0, 16.0, 1.0, 25.0], 2, 2).unwrap();
        let sol = best_approx_dp(&p);
        assert_eq!(sol.support.indices(), &[2, 4]);
        assert_eq!(sol.objective, 41.0);
    }

    #[test]
    fn dp_single_spike_ties_to_lowest_index() {
        let p = ApproxProblem::new(vec![3.0, 7.0, 7.0, 1.0], 1, 2).unwrap();
        let sol = best_approx_dp(&p);
        assert_eq!(sol.support.indices(), &[1]);

        let p0 = ApproxProblem::new(vec![5.0, 5.0, 5.0, 5.0], 1, 1).unwrap();
        assert_eq!(best_approx_dp(&p0).support.indices(), &[0]);
    }

    #[test]
    fn dp_all_zero_returns_empty() {
        let p = ApproxProblem::new(vec![0.0; 6], 2, 2).unwrap();
        let sol = best_approx_dp(&p);
        assert!(sol.support.is_empty());
        assert_eq!(sol.objective, 0.0);
    }

    #[test]
    fn brute_delta_one_is_top_s() {
        let p = ApproxProblem::new(vec![1.0, 9.0, 2.0, 8.0, 3.0], 2, 1).unwrap();
        let sol = best_approx_brute(&p).unwrap();
        assert_eq!(sol.support.indices(), &[1, 3]);
        assert_eq!(sol.objective, 17.0);
    }

    #[test]
    fn brute_rejects_large_n() {
        let p = ApproxProblem::new(vec![1.0; 32], 2, 4).unwrap();
        assert!(best_approx_brute(&p).is_err());
    }

    #[test]
    fn dp_matches_brute_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..300 {
            let n = rng.random_range(3..=16);
            let s = rng.random_range(1..=3usize);
            let max_delta = n / s;
            if max_delta == 0 {
                continue;
            }
            let delta = rng.random_range(1..=max_delta);
            let c: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let p = ApproxProblem::new(c, s, delta).unwrap();
            let dp = best_approx_dp(&p);
            let brute = best_approx_brute(&p).unwrap();
            assert_eq!(
                dp.objective, brute.objective,
                "n={n} s={s} delta={delta} dp={:?} brute={:?}",
                dp.support.indices(),
                brute.support.indices()
            );
        }
    }

    #[test]
    fn lp_matches_dp_on_example() {
        let p = ApproxProblem::new(vec![9.0, 1.0, 16.0, 1.0, 25.0], 2, 2).unwrap();
        let lp = best_approx_lp(&p).unwrap();
        assert_eq!(lp.support.indices(), &[2, 4]);
        assert_eq!(lp.objective, 41.0);
    }

    #[test]
    fn lp_matches_dp_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c: Vec<f64> = (0..12).map(|_| rng.random::<f64>()).collect();
        let p = ApproxProblem::new(c, 3, 4).unwrap();
        let dp = best_approx_dp(&p);
        let lp = best_approx_lp(&p).unwrap();
        assert!((dp.objective - lp.objective).abs() < 1e-9);
    }

    #[test]
    fn prune_projects_and_is_idempotent() {
        let d = Domain::line(5).unwrap();
        let x = vec![3.0, 1.0, 4.0, 1.0, 5.0];
        let pr = prune_to_model(&x, &d, 2, 2).unwrap();
        assert_eq!(pr.support().indices(), &[2, 4]);
        assert_eq!(pr.values(), &[4.0, 5.0]);

        let again = prune_to_model(&pr.to_dense(), &d, 2, 2).unwrap();
        assert_eq!(again, pr);
    }

    #[test]
    fn prune_in_model_unchanged() {
        let d = Domain::line(8).unwrap();
        let mut x = vec![0.0; 8];
        x[1] = 2.0;
        x[5] = -3.0;
        let pr = prune_to_model(&x, &d, 2, 3).unwrap();
        assert_eq!(pr.to_dense(), x);
    }

    #[test]
    fn prune_optimality_small() {
        // ||x - prune(x)|| <= ||x - x|_sigma|| for every admissible sigma
        let d = Domain::line(10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..10).map(|_| rng.random::<f64>() - 0.5).collect();
        let pr = prune_to_model(&x, &d, 2, 3).unwrap().to_dense();
        let err: f64 = x.iter().zip(&pr).map(|(a, b)| (a - b) * (a - b)).sum();
        for sup in enumerate_supports(10, 2, 3) {
            let mut masked = vec![0.0; 10];
            for &i in sup.indices() {
                masked[i] = x[i];
            }
            let e2: f64 = x.iter().zip(&masked).map(|(a, b)| (a - b) * (a - b)).sum();
            assert!(err <= e2 + 1e-12);
        }
    }

    #[test]
    fn greedy_2d_blocks_conflicts() {
        let d = Domain::grid(6, 6).unwrap();
        let mut c = vec![0.0; 36];
        c[d.from_multi(&[1, 1])] = 9.0;
        c[d.from_multi(&[1, 2])] = 8.0; // conflicts with the first pick
        c[d.from_multi(&[4, 4])] = 5.0;
        let got = best_approx_greedy(&c, &d, 2, 3).unwrap();
        assert_eq!(got, vec![d.from_multi(&[1, 1]), d.from_multi(&[4, 4])]);
    }
}
