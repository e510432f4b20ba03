//! Gaussian targets `V(x) = (x - m)' P (x - m) / 2` with precision `P`.
//!
//! The eigendecomposition of `P` is cached at construction; it powers the
//! exact samplers for the target and for the ULA-stationary law, whose
//! covariance in the eigenbasis is `diag(1 / (a_i (1 - h a_i / 2)))` for
//! precision eigenvalues `a_i`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::graph::InteractionGraph;

use super::{Potential, PotentialError};

/// Precision matrix representation; diagonal forms skip the dense
/// eigendecomposition and keep all operations O(d).
#[derive(Debug, Clone)]
pub enum Precision {
    ScaledIdentity(f64),
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

#[derive(Debug, Clone)]
pub struct GaussianPotential {
    mean: Vec<f64>,
    precision: Precision,
    graph: InteractionGraph,
    /// Eigenvalues of the precision, ascending for the diagonal forms,
    /// eigensolver order for dense.
    precision_eigvals: Vec<f64>,
    /// Eigenvector matrix `U` with `P = U diag(eigvals) U'`; `None` means
    /// the identity (diagonal precisions).
    eigvecs: Option<DMatrix<f64>>,
    alpha: f64,
    beta: f64,
}

impl GaussianPotential {
    /// Standard Gaussian `N(0, I_d)`.
    pub fn standard(d: usize) -> Self {
        Self::scaled_identity(d, 1.0).expect("unit precision is valid")
    }

    /// `N(0, I_d / c)` with precision `c * I`.
    pub fn scaled_identity(d: usize, c: f64) -> Result<Self, PotentialError> {
        if d == 0 {
            return Err(PotentialError::InvalidParameter("d must be >= 1".into()));
        }
        if !(c > 0.0) {
            return Err(PotentialError::InvalidParameter(format!(
                "precision scale must be positive, got {c}"
            )));
        }
        Ok(Self {
            mean: vec![0.0; d],
            precision: Precision::ScaledIdentity(c),
            graph: InteractionGraph::from_edges(d, &[]).expect("d >= 1"),
            precision_eigvals: vec![c; d],
            eigvecs: None,
            alpha: c,
            beta: c,
        })
    }

    pub fn diagonal(mean: Vec<f64>, diag: Vec<f64>) -> Result<Self, PotentialError> {
        let d = diag.len();
        if d == 0 || mean.len() != d {
            return Err(PotentialError::DimensionMismatch {
                expected: d,
                got: mean.len(),
            });
        }
        if let Some(&bad) = diag.iter().find(|&&v| !(v > 0.0) || !v.is_finite()) {
            return Err(PotentialError::InvalidParameter(format!(
                "precision diagonal entries must be positive, got {bad}"
            )));
        }
        let alpha = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        let beta = diag.iter().cloned().fold(0.0, f64::max);
        Ok(Self {
            mean,
            graph: InteractionGraph::from_edges(d, &[]).expect("d >= 1"),
            precision_eigvals: diag.clone(),
            precision: Precision::Diagonal(diag),
            eigvecs: None,
            alpha,
            beta,
        })
    }

    /// Dense symmetric positive-definite precision. The interaction graph
    /// is read off the exact nonzero pattern.
    pub fn dense(mean: Vec<f64>, precision: DMatrix<f64>) -> Result<Self, PotentialError> {
        let d = precision.nrows();
        if d == 0 || precision.ncols() != d || mean.len() != d {
            return Err(PotentialError::DimensionMismatch {
                expected: d,
                got: mean.len(),
            });
        }
        let scale = precision.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..d {
            for j in 0..i {
                if (precision[(i, j)] - precision[(j, i)]).abs() > 1e-10 * scale.max(1.0) {
                    return Err(PotentialError::InvalidParameter(
                        "precision matrix is not symmetric".into(),
                    ));
                }
            }
        }
        let mut edges = Vec::new();
        for i in 0..d {
            for j in (i + 1)..d {
                if precision[(i, j)] != 0.0 {
                    edges.push((i, j));
                }
            }
        }
        let graph = InteractionGraph::from_edges(d, &edges).expect("indices in range");
        let eig = SymmetricEigen::new(precision.clone());
        let eigvals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
        let alpha = eigvals.iter().cloned().fold(f64::INFINITY, f64::min);
        let beta = eigvals.iter().cloned().fold(0.0f64, f64::max);
        if !(alpha > 0.0) {
            return Err(PotentialError::InvalidParameter(format!(
                "precision matrix is not positive definite (lambda_min = {alpha})"
            )));
        }
        Ok(Self {
            mean,
            precision: Precision::Dense(precision),
            graph,
            precision_eigvals: eigvals,
            eigvecs: Some(eig.eigenvectors),
            alpha,
            beta,
        })
    }

    /// Gaussian with the tridiagonal precision `tridiag(-1, 2 + lam, -1)`
    /// (the discrete Dirichlet Laplacian plus a constant mass term),
    /// the free-field reference measure of the lattice examples.
    pub fn free_field(d: usize, lam: f64) -> Result<Self, PotentialError> {
        if d == 0 {
            return Err(PotentialError::InvalidParameter("d must be >= 1".into()));
        }
        if !(lam > 0.0) {
            return Err(PotentialError::InvalidParameter(format!(
                "mass term must be positive, got {lam}"
            )));
        }
        let mut m = DMatrix::zeros(d, d);
        for i in 0..d {
            m[(i, i)] = 2.0 + lam;
            if i + 1 < d {
                m[(i, i + 1)] = -1.0;
                m[(i + 1, i)] = -1.0;
            }
        }
        Self::dense(vec![0.0; d], m)
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn precision(&self) -> &Precision {
        &self.precision
    }

    /// Eigenvalues of the precision matrix.
    pub fn precision_eigvals(&self) -> &[f64] {
        &self.precision_eigvals
    }

    /// Applies the eigenvector matrix `U` (identity for diagonal forms).
    pub fn eigvecs_apply(&self, v: &[f64], out: &mut [f64]) {
        match &self.eigvecs {
            None => out.copy_from_slice(v),
            Some(u) => {
                let r = u * DVector::from_column_slice(v);
                out.copy_from_slice(r.as_slice());
            }
        }
    }

    /// Applies `U'`.
    pub fn eigvecs_t_apply(&self, v: &[f64], out: &mut [f64]) {
        match &self.eigvecs {
            None => out.copy_from_slice(v),
            Some(u) => {
                let r = u.transpose() * DVector::from_column_slice(v);
                out.copy_from_slice(r.as_slice());
            }
        }
    }

    fn precision_apply(&self, v: &[f64], out: &mut [f64]) {
        match &self.precision {
            Precision::ScaledIdentity(c) => {
                for (o, x) in out.iter_mut().zip(v) {
                    *o = c * x;
                }
            }
            Precision::Diagonal(diag) => {
                for i in 0..v.len() {
                    out[i] = diag[i] * v[i];
                }
            }
            Precision::Dense(m) => {
                let r = m * DVector::from_column_slice(v);
                out.copy_from_slice(r.as_slice());
            }
        }
    }

    /// Target covariance `Sigma = P^{-1}` as a dense matrix.
    pub fn sigma_dense(&self) -> DMatrix<f64> {
        self.eigen_function_dense(|a| 1.0 / a)
    }

    /// ULA-stationary covariance at step `h`:
    /// `Sigma_inf = Sigma (I - (h/2) Sigma^{-1})^{-1}`, i.e. eigenvalues
    /// `1 / (a (1 - h a / 2))` in the precision eigenbasis.
    pub fn sigma_inf_dense(&self, h: f64) -> Result<DMatrix<f64>, PotentialError> {
        self.check_sigma_inf_exists(h)?;
        Ok(self.eigen_function_dense(|a| 1.0 / (a * (1.0 - 0.5 * h * a))))
    }

    /// Per-eigencoordinate standard deviations of the target.
    pub fn sigma_sqrt_eigvals(&self) -> Vec<f64> {
        self.precision_eigvals.iter().map(|a| (1.0 / a).sqrt()).collect()
    }

    /// Per-eigencoordinate standard deviations of the ULA-stationary law.
    pub fn sigma_inf_sqrt_eigvals(&self, h: f64) -> Result<Vec<f64>, PotentialError> {
        self.check_sigma_inf_exists(h)?;
        Ok(self
            .precision_eigvals
            .iter()
            .map(|a| (1.0 / (a * (1.0 - 0.5 * h * a))).sqrt())
            .collect())
    }

    /// The stationary covariance degenerates when `h >= 2 / a_max`, i.e.
    /// `h >= 2 lambda_min(Sigma)`; never reached under `h <= 1/beta` but
    /// guarded regardless.
    fn check_sigma_inf_exists(&self, h: f64) -> Result<(), PotentialError> {
        if !(h >= 0.0) {
            return Err(PotentialError::InvalidParameter(format!(
                "step size must be nonnegative, got {h}"
            )));
        }
        if h >= 2.0 / self.beta {
            return Err(PotentialError::InvalidParameter(format!(
                "stationary covariance singular: h = {h} >= 2 lambda_min(Sigma) = {}",
                2.0 / self.beta
            )));
        }
        Ok(())
    }

    /// `U f(diag) U'` for a scalar function of the precision eigenvalues.
    fn eigen_function_dense(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let d = self.dim();
        match &self.eigvecs {
            None => DMatrix::from_diagonal(&DVector::from_iterator(
                d,
                self.precision_eigvals.iter().map(|&a| f(a)),
            )),
            Some(u) => {
                let diag = DMatrix::from_diagonal(&DVector::from_iterator(
                    d,
                    self.precision_eigvals.iter().map(|&a| f(a)),
                ));
                u * diag * u.transpose()
            }
        }
    }

    /// Applies `Sigma^{1/2} - Sigma_inf^{1/2}` to `v`; the operator whose
    /// max-norm second moment over standard normals gives the Gaussian
    /// coupling upper bound.
    pub fn sqrt_bias_apply(&self, h: f64, v: &[f64], out: &mut [f64]) -> Result<(), PotentialError> {
        self.check_sigma_inf_exists(h)?;
        let d = self.dim();
        let mut work = vec![0.0; d];
        self.eigvecs_t_apply(v, &mut work);
        for (w, &a) in work.iter_mut().zip(&self.precision_eigvals) {
            let s = (1.0 / a).sqrt();
            let s_inf = (1.0 / (a * (1.0 - 0.5 * h * a))).sqrt();
            *w *= s - s_inf;
        }
        self.eigvecs_apply(&work, out);
        Ok(())
    }
}

impl Potential for GaussianPotential {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn as_gaussian(&self) -> Option<&GaussianPotential> {
        Some(self)
    }

    fn alpha(&self) -> f64 {
        self.alpha
    }

    fn beta(&self) -> f64 {
        self.beta
    }

    fn graph(&self) -> &InteractionGraph {
        &self.graph
    }

    fn value(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let centered: Vec<f64> = (0..d).map(|i| x[i] - self.mean[i]).collect();
        let mut px = vec![0.0; d];
        self.precision_apply(&centered, &mut px);
        0.5 * centered.iter().zip(&px).map(|(c, p)| c * p).sum::<f64>()
    }

    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let centered: Vec<f64> = (0..d).map(|i| x[i] - self.mean[i]).collect();
        self.precision_apply(&centered, out);
    }

    fn hessian_apply_into(&self, _x: &[f64], v: &[f64], out: &mut [f64]) {
        self.precision_apply(v, out);
    }

    fn laplacian(&self, _x: &[f64]) -> f64 {
        match &self.precision {
            Precision::ScaledIdentity(c) => c * self.dim() as f64,
            Precision::Diagonal(diag) => diag.iter().sum(),
            Precision::Dense(m) => m.diagonal().iter().sum(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_spd(d: usize, rng: &mut StdRng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
        let sym = &a * a.transpose();
        sym + DMatrix::identity(d, d) * 0.5
    }

    #[test]
    fn identity_precision_grad_is_x() {
        let p = GaussianPotential::standard(3);
        let x = [1.0, -2.0, 0.5];
        assert_eq!(p.grad(&x).unwrap(), vec![1.0, -2.0, 0.5]);
        assert_eq!(p.alpha(), 1.0);
        assert_eq!(p.beta(), 1.0);
    }

    #[test]
    fn dense_matches_quadratic_form() {
        let mut rng = StdRng::seed_from_u64(7);
        let m = random_spd(5, &mut rng);
        let mean = vec![0.3, -0.1, 0.0, 2.0, -1.5];
        let p = GaussianPotential::dense(mean.clone(), m.clone()).unwrap();
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let c = DVector::from_iterator(5, x.iter().zip(&mean).map(|(a, b)| a - b));
        let expect = 0.5 * (c.transpose() * &m * &c)[(0, 0)];
        assert!((p.value(&x) - expect).abs() < 1e-12);
        let grad = p.grad(&x).unwrap();
        let eg = &m * &c;
        for i in 0..5 {
            assert!((grad[i] - eg[i]).abs() < 1e-12);
        }
        assert!((p.laplacian(&x) - m.trace()).abs() < 1e-12);
    }

    #[test]
    fn sigma_inf_matches_fixed_point_iteration() {
        // Oracle: Sigma_inf is the fixed point of the one-step ULA
        // covariance recursion S <- (I - hP) S (I - hP) + 2h I.
        let mut rng = StdRng::seed_from_u64(13);
        let prec = random_spd(6, &mut rng);
        let p = GaussianPotential::dense(vec![0.0; 6], prec.clone()).unwrap();
        let h = 0.4 / p.beta();
        let step = DMatrix::identity(6, 6) - &prec * h;
        let mut s = DMatrix::<f64>::identity(6, 6);
        for _ in 0..20_000 {
            s = &step * &s * &step + DMatrix::identity(6, 6) * (2.0 * h);
        }
        let sigma_inf = p.sigma_inf_dense(h).unwrap();
        let err = (&sigma_inf - &s).norm() / s.norm();
        assert!(err < 1e-10, "fixed point mismatch: {err}");
    }

    #[test]
    fn sigma_inf_matches_resolvent_formula() {
        // Dense-algebra oracle: Sigma (I - (h/2) Sigma^{-1})^{-1}.
        let mut rng = StdRng::seed_from_u64(99);
        let prec = random_spd(8, &mut rng);
        let p = GaussianPotential::dense(vec![0.0; 8], prec.clone()).unwrap();
        let h = 0.7 / p.beta();
        let sigma = prec.clone().try_inverse().unwrap();
        let inner = DMatrix::identity(8, 8) - &prec * (0.5 * h);
        let expect = &sigma * inner.try_inverse().unwrap();
        let got = p.sigma_inf_dense(h).unwrap();
        assert!((&got - &expect).norm() < 1e-12 * expect.norm());
    }

    #[test]
    fn sigma_inf_small_step_limit() {
        let p = GaussianPotential::diagonal(vec![0.0; 3], vec![0.5, 1.0, 2.0]).unwrap();
        let sigma = p.sigma_dense();
        let sigma_inf = p.sigma_inf_dense(1e-8).unwrap();
        let rel = (&sigma_inf - &sigma).norm() / sigma.norm();
        assert!(rel < 1e-7, "h -> 0 limit violated: {rel}");
    }

    #[test]
    fn one_dimensional_variance_fixed_point() {
        let p = GaussianPotential::standard(1);
        let sigma_inf = p.sigma_inf_dense(0.1).unwrap();
        assert!((sigma_inf[(0, 0)] - 1.0 / 0.95).abs() < 1e-14);
    }

    #[test]
    fn sigma_inf_singularity_guarded() {
        let p = GaussianPotential::standard(1);
        assert!(p.sigma_inf_dense(2.0).is_err());
        assert!(p.sigma_inf_dense(1.9999).is_ok());
    }

    #[test]
    fn free_field_graph_is_path() {
        let p = GaussianPotential::free_field(6, 1.0).unwrap();
        assert_eq!(p.graph().neighbors(0), &[0, 1]);
        assert_eq!(p.graph().neighbors(3), &[2, 3, 4]);
        // eigenvalues 3 - 2 cos(k pi / (d+1)) lie strictly inside (lam, lam + 4)
        assert!(p.alpha() > 1.0);
        assert!(p.beta() < 5.0);
    }

    #[test]
    fn non_spd_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]); // eigvals 3, -1
        assert!(GaussianPotential::dense(vec![0.0; 2], m).is_err());
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.5, 1.0]); // asymmetric
        assert!(GaussianPotential::dense(vec![0.0; 2], m).is_err());
    }

    #[test]
    fn non_finite_input_rejected() {
        let p = GaussianPotential::standard(2);
        assert!(p.grad(&[f64::NAN, 0.0]).is_err());
        assert!(p.grad(&[1.0]).is_err());
    }

    #[test]
    fn sqrt_bias_apply_one_dimensional() {
        let p = GaussianPotential::standard(1);
        let mut out = [0.0];
        p.sqrt_bias_apply(0.1, &[1.0], &mut out).unwrap();
        let expect = 1.0 - (1.0f64 / 0.95).sqrt();
        assert!((out[0] - expect).abs() < 1e-15);
    }
}
