//! Circulant operators, column-restricted dictionaries, and least-squares
//! solving.
//!
//! The recovery algorithms repeatedly build small dictionaries of the form
//! `(Phi C(g))_cols`: the measurement operator applied to a subset of the
//! columns of the circulant matrix generated by `g`. Columns are materialized
//! on demand (the restrictions are at most `max(S, F)` wide) and solved with
//! an SVD, which yields the minimum-norm minimizer on rank deficiency.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sampling::SamplingMatrix;
use crate::signal_model::{circular_convolve, Domain, ImpulseResponse, Support};

/// Relative rank tolerance used when none is supplied.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// The circulant matrix C(g): column j is `g` circularly shifted by j.
/// Applying it to `x` equals `circular_convolve(g, x)`.
#[derive(Debug, Clone)]
pub struct CirculantOperator {
    generator: Vec<f64>,
    domain: Domain,
}

impl CirculantOperator {
    pub fn new(generator: Vec<f64>, domain: Domain) -> Result<Self> {
        if generator.len() != domain.size() {
            return Err(Error::DomainMismatch(
                "circulant generator length vs domain size".into(),
            ));
        }
        Ok(Self { generator, domain })
    }

    pub fn generator(&self) -> &[f64] {
        &self.generator
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        circular_convolve(&self.generator, x, &self.domain)
    }

    /// Column `j`: the generator circularly shifted by `j`, exactly.
    pub fn column(&self, j: usize) -> Vec<f64> {
        crate::signal_model::circular_shift(&self.generator, &self.domain, j)
    }
}

/// A circulant operator restricted to a set of columns, optionally composed
/// with a sampling matrix: the dictionaries `(Phi H)_sigma` and `(Phi X)_f`.
#[derive(Debug, Clone)]
pub struct ColumnRestriction<'a> {
    operator: CirculantOperator,
    phi: Option<&'a SamplingMatrix>,
    columns: Vec<usize>,
}

impl<'a> ColumnRestriction<'a> {
    pub fn new(
        operator: CirculantOperator,
        phi: Option<&'a SamplingMatrix>,
        columns: Vec<usize>,
    ) -> Result<Self> {
        let n = operator.domain().size();
        if columns.iter().any(|&c| c >= n) {
            return Err(Error::InvalidInput("restriction column out of range".into()));
        }
        if let Some(m) = phi {
            if m.cols() != n {
                return Err(Error::DimensionMismatch(
                    "sampling matrix width vs circulant size".into(),
                ));
            }
        }
        Ok(Self {
            operator,
            phi,
            columns,
        })
    }

    /// Restriction to a spike support ("(Phi H)_sigma").
    pub fn spike_dictionary(
        pulse: &ImpulseResponse,
        phi: Option<&'a SamplingMatrix>,
        support: &Support,
    ) -> Result<Self> {
        if pulse.domain() != support.domain() {
            return Err(Error::DomainMismatch("pulse vs support domain".into()));
        }
        Self::new(
            CirculantOperator::new(pulse.to_dense(), pulse.domain().clone())?,
            phi,
            support.indices().to_vec(),
        )
    }

    /// Restriction to the origin-anchored pulse patch ("(Phi X)_f").
    pub fn pulse_dictionary(
        spikes_dense: &[f64],
        domain: &Domain,
        phi: Option<&'a SamplingMatrix>,
        patch_shape: &[usize],
    ) -> Result<Self> {
        let columns = ImpulseResponse::patch_offsets(patch_shape, domain);
        Self::new(
            CirculantOperator::new(spikes_dense.to_vec(), domain.clone())?,
            phi,
            columns,
        )
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    pub fn output_dim(&self) -> usize {
        match self.phi {
            Some(m) => m.rows(),
            None => self.operator.domain().size(),
        }
    }

    /// Materialize the implied output_dim x |columns| matrix.
    pub fn materialize(&self) -> DMatrix<f64> {
        let rows = self.output_dim();
        let mut mat = DMatrix::zeros(rows, self.columns.len());
        for (c, &j) in self.columns.iter().enumerate() {
            let col = self.operator.column(j);
            match self.phi {
                Some(phi) => {
                    let v = phi.apply(&col).expect("dimensions checked at build");
                    for (r, &x) in v.iter().enumerate() {
                        mat[(r, c)] = x;
                    }
                }
                None => {
                    for (r, &x) in col.iter().enumerate() {
                        mat[(r, c)] = x;
                    }
                }
            }
        }
        mat
    }

    /// Apply the restriction to a coefficient vector without forming the
    /// full N x N circulant.
    pub fn apply(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        if coeffs.len() != self.columns.len() {
            return Err(Error::DimensionMismatch(format!(
                "restriction expects {} coefficients, got {}",
                self.columns.len(),
                coeffs.len()
            )));
        }
        let domain = self.operator.domain().clone();
        let mut spikes = vec![0.0; domain.size()];
        for (&j, &c) in self.columns.iter().zip(coeffs) {
            spikes[j] += c;
        }
        let full = circular_convolve(self.operator.generator(), &spikes, &domain)?;
        match self.phi {
            Some(phi) => phi.apply(&full),
            None => Ok(full),
        }
    }

    /// Transpose application: `A^T v`, entry per retained column.
    pub fn apply_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.output_dim() {
            return Err(Error::DimensionMismatch(
                "transpose input length vs output dimension".into(),
            ));
        }
        let back: Vec<f64> = match self.phi {
            Some(phi) => phi.apply_transpose(v)?,
            None => v.to_vec(),
        };
        let mut out = Vec::with_capacity(self.columns.len());
        for &j in &self.columns {
            let col = self.operator.column(j);
            out.push(col.iter().zip(&back).map(|(a, b)| a * b).sum());
        }
        Ok(out)
    }
}

/// Outcome of a least-squares solve against a restricted dictionary.
#[derive(Debug, Clone)]
pub struct LeastSquaresReport {
    pub coefficients: Vec<f64>,
    pub residual_norm: f64,
    pub rank_deficient: bool,
}

/// Minimize `||y - A c||_2` over the materialized restriction `A`.
///
/// Singular values below `tol` times the largest are truncated, giving the
/// minimum-norm minimizer and setting `rank_deficient`.
pub fn least_squares(r: &ColumnRestriction, y: &[f64], tol: f64) -> Result<LeastSquaresReport> {
    if y.len() != r.output_dim() {
        return Err(Error::DimensionMismatch(
            "least_squares: observation length vs dictionary rows".into(),
        ));
    }
    let ncols = r.columns().len();
    let yv = DVector::from_column_slice(y);
    if ncols == 0 {
        return Ok(LeastSquaresReport {
            coefficients: vec![],
            residual_norm: yv.norm(),
            rank_deficient: false,
        });
    }
    let a = r.materialize();
    solve_dense(&a, &yv, tol)
}

/// SVD least-squares on an explicit dense matrix.
pub fn solve_dense(a: &DMatrix<f64>, y: &DVector<f64>, tol: f64) -> Result<LeastSquaresReport> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let eps = tol * smax;
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > eps && s > 0.0)
        .count();
    let rank_deficient = rank < a.ncols().min(a.nrows());
    let c = svd
        .solve(y, eps)
        .map_err(|e| Error::InvalidInput(format!("SVD solve failed: {e}")))?;
    let residual_norm = (y - a * &c).norm();
    Ok(LeastSquaresReport {
        coefficients: c.as_slice().to_vec(),
        residual_norm,
        rank_deficient,
    })
}

/// Closed-form pseudo-inverse application for quasi-Toeplitz systems:
/// `(1/||h||^2) (H_sigma)^T y`, valid when the support is delta-separated
/// with delta at least the pulse extent so the shifted columns never overlap.
pub fn quasi_toeplitz_pinv_apply(
    h: &ImpulseResponse,
    support: &Support,
    y: &[f64],
) -> Result<Vec<f64>> {
    let domain = h.domain();
    if support.domain() != domain {
        return Err(Error::DomainMismatch("pulse vs support domain".into()));
    }
    if y.len() != domain.size() {
        return Err(Error::DimensionMismatch(
            "observation length vs domain size".into(),
        ));
    }
    let side = *h.patch_shape().iter().max().unwrap_or(&1);
    let idx = support.indices();
    for i in 0..idx.len() {
        for j in (i + 1)..idx.len() {
            if domain.conflicts(idx[i], idx[j], side) {
                return Err(Error::InvalidInput(
                    "support violates the quasi-Toeplitz separation condition".into(),
                ));
            }
        }
    }
    let nh2 = h.norm().powi(2);
    if nh2 == 0.0 {
        return Err(Error::InvalidInput("zero pulse has no pseudo-inverse".into()));
    }
    let offsets = h.offsets();
    let mut out = Vec::with_capacity(idx.len());
    for &j in idx {
        let mut acc = 0.0;
        for &(off, v) in &offsets {
            acc += v * y[domain.wrap_add(j, off)];
        }
        out.push(acc / nh2);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_model::Domain;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line(n: usize) -> Domain {
        Domain::line(n).unwrap()
    }

    #[test]
    fn single_column_restriction_is_shifted_generator() {
        let d = line(6);
        let h = ImpulseResponse::new_1d(vec![1.0, 2.0, 0.5], d.clone()).unwrap();
        let sup = Support::new(vec![0], d.clone()).unwrap();
        let r = ColumnRestriction::spike_dictionary(&h, None, &sup).unwrap();
        assert_eq!(r.apply(&[1.0]).unwrap(), h.to_dense());

        let sup3 = Support::new(vec![3], d).unwrap();
        let r3 = ColumnRestriction::spike_dictionary(&h, None, &sup3).unwrap();
        assert_eq!(
            r3.apply(&[1.0]).unwrap(),
            vec![0.0, 0.0, 0.0, 1.0, 2.0, 0.5]
        );
    }

    #[test]
    fn restriction_matches_convolution_example() {
        let d = line(6);
        let h = ImpulseResponse::new_1d(vec![1.0, 1.0], d.clone()).unwrap();
        let sup = Support::new(vec![0, 3], d).unwrap();
        let r = ColumnRestriction::spike_dictionary(&h, None, &sup).unwrap();
        assert_eq!(
            r.apply(&[1.0, 2.0]).unwrap(),
            vec![1.0, 1.0, 0.0, 2.0, 2.0, 0.0]
        );
        assert_eq!(r.apply(&[0.0, 0.0]).unwrap(), vec![0.0; 6]);
    }

    #[test]
    fn least_squares_identity_and_span() {
        let d = line(4);
        let h = ImpulseResponse::new_1d(vec![1.0], d.clone()).unwrap();
        let sup = Support::new(vec![0, 1, 2, 3], d.clone()).unwrap();
        let r = ColumnRestriction::spike_dictionary(&h, None, &sup).unwrap();
        let y = [0.5, -1.0, 2.0, 0.0];
        let rep = least_squares(&r, &y, DEFAULT_RANK_TOL).unwrap();
        assert_relative_eq!(rep.coefficients[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(rep.coefficients[1], -1.0, epsilon = 1e-12);
        assert!(rep.residual_norm < 1e-12);

        let h2 = ImpulseResponse::new_1d(vec![1.0, 2.0, -1.0], d.clone()).unwrap();
        let sup2 = Support::new(vec![1], d).unwrap();
        let r2 = ColumnRestriction::spike_dictionary(&h2, None, &sup2).unwrap();
        let c = r2.apply(&[3.0]).unwrap();
        let rep2 = least_squares(&r2, &c, DEFAULT_RANK_TOL).unwrap();
        assert_relative_eq!(rep2.coefficients[0], 3.0, epsilon = 1e-10);
        assert!(rep2.residual_norm < 1e-10);
    }

    #[test]
    fn least_squares_zero_columns() {
        let d = line(4);
        let h = ImpulseResponse::new_1d(vec![1.0], d.clone()).unwrap();
        let sup = Support::empty(d);
        let r = ColumnRestriction::spike_dictionary(&h, None, &sup).unwrap();
        let y = [3.0, 4.0, 0.0, 0.0];
        let rep = least_squares(&r, &y, DEFAULT_RANK_TOL).unwrap();
        assert!(rep.coefficients.is_empty());
        assert_relative_eq!(rep.residual_norm, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn least_squares_matches_normal_equations_oracle() {
        use crate::sampling::gaussian_matrix;
        let phi = gaussian_matrix(4, 4, 42).unwrap();
        let d = line(4);
        let h = ImpulseResponse::new_1d(vec![1.0], d.clone()).unwrap();
        let sup = Support::new(vec![0, 2], d).unwrap();
        let r = ColumnRestriction::spike_dictionary(&h, Some(&phi), &sup).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y: Vec<f64> = (0..4).map(|_| rng.random::<f64>() - 0.5).collect();

        let a = r.materialize();
        let ata = a.transpose() * &a;
        let aty = a.transpose() * DVector::from_column_slice(&y);
        let oracle = ata.lu().solve(&aty).unwrap();

        let rep = least_squares(&r, &y, DEFAULT_RANK_TOL).unwrap();
        for i in 0..2 {
            assert_relative_eq!(rep.coefficients[i], oracle[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn quasi_toeplitz_closed_form() {
        let d = line(6);
        let s = 1.0 / 2.0_f64.sqrt();
        let h = ImpulseResponse::new_1d(vec![s, s], d.clone()).unwrap();
        let sup = Support::new(vec![0, 3], d.clone()).unwrap();
        let y = vec![1.0, 1.0, 0.0, 2.0, 2.0, 0.0];

        let got = quasi_toeplitz_pinv_apply(&h, &sup, &y).unwrap();
        let r = ColumnRestriction::spike_dictionary(&h, None, &sup).unwrap();
        let rep = least_squares(&r, &y, DEFAULT_RANK_TOL).unwrap();
        for i in 0..2 {
            assert_relative_eq!(got[i], rep.coefficients[i], epsilon = 1e-10);
        }

        // scaled unit column
        let y2 = r.apply(&[0.0, 4.5]).unwrap();
        let got2 = quasi_toeplitz_pinv_apply(&h, &sup, &y2).unwrap();
        assert_relative_eq!(got2[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(got2[1], 4.5, epsilon = 1e-12);

        assert_eq!(
            quasi_toeplitz_pinv_apply(&h, &sup, &[0.0; 6]).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn quasi_toeplitz_rejects_overlapping_support() {
        let d = line(6);
        let h = ImpulseResponse::new_1d(vec![1.0, 1.0, 1.0], d.clone()).unwrap();
        let sup = Support::new(vec![0, 2], d).unwrap();
        assert!(quasi_toeplitz_pinv_apply(&h, &sup, &[0.0; 6]).is_err());
    }

    #[test]
    fn adjoint_consistency() {
        use crate::sampling::gaussian_matrix;
        let phi = gaussian_matrix(5, 8, 3).unwrap();
        let d = line(8);
        let h = ImpulseResponse::new_1d(vec![0.2, -1.0, 0.7], d.clone()).unwrap();
        let sup = Support::new(vec![1, 4, 6], d).unwrap();
        let r = ColumnRestriction::spike_dictionary(&h, Some(&phi), &sup).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..3).map(|_| rng.random::<f64>() - 0.5).collect();
        let v: Vec<f64> = (0..5).map(|_| rng.random::<f64>() - 0.5).collect();
        let ax = r.apply(&x).unwrap();
        let atv = r.apply_transpose(&v).unwrap();
        let lhs: f64 = ax.iter().zip(&v).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&atv).map(|(a, b)| a * b).sum();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
    }
}
