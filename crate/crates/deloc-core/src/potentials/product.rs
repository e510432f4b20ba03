//! Product potentials `V(x) = sum_i v_i(x_i)` built from the scalar
//! catalog; the Hessian is diagonal and the interaction graph edgeless.

use crate::graph::InteractionGraph;

use super::scalar::Scalar1d;
use super::{Potential, PotentialError};

#[derive(Debug, Clone)]
pub struct ProductPotential {
    components: Vec<Scalar1d>,
    graph: InteractionGraph,
    alpha: f64,
    beta: f64,
}

impl ProductPotential {
    pub fn new(components: Vec<Scalar1d>) -> Result<Self, PotentialError> {
        let d = components.len();
        if d == 0 {
            return Err(PotentialError::InvalidParameter(
                "product potential needs at least one component".into(),
            ));
        }
        let alpha = components.iter().map(Scalar1d::alpha).fold(f64::INFINITY, f64::min);
        let beta = components.iter().map(Scalar1d::beta).fold(0.0f64, f64::max);
        Ok(Self {
            components,
            graph: InteractionGraph::from_edges(d, &[]).expect("d >= 1"),
            alpha,
            beta,
        })
    }

    /// `d` i.i.d. copies of one scalar component.
    pub fn iid(d: usize, component: Scalar1d) -> Result<Self, PotentialError> {
        if d == 0 {
            return Err(PotentialError::InvalidParameter("d must be >= 1".into()));
        }
        Self::new(vec![component; d])
    }

    /// Standard Gaussian as a product of unit quadratics.
    pub fn standard_gaussian(d: usize) -> Self {
        Self::iid(d, Scalar1d::quadratic(1.0, 0.0).expect("unit quadratic"))
            .expect("d >= 1 checked by caller tests")
    }

    /// Standard Gaussian with the first `n_mix` coordinates replaced by a
    /// two-component normal mixture; the non-Gaussian perturbation lives
    /// on a fixed coordinate block so its size can be dialed.
    pub fn perturbed_gaussian(
        d: usize,
        n_mix: usize,
        p: f64,
        mu1: f64,
        mu2: f64,
    ) -> Result<Self, PotentialError> {
        if n_mix > d {
            return Err(PotentialError::InvalidParameter(format!(
                "n_mix = {n_mix} exceeds d = {d}"
            )));
        }
        let mix = Scalar1d::gaussian_mixture(p, mu1, mu2)?;
        let quad = Scalar1d::quadratic(1.0, 0.0)?;
        let mut components = vec![mix; n_mix];
        components.resize(d, quad);
        Self::new(components)
    }

    pub fn components(&self) -> &[Scalar1d] {
        &self.components
    }

    /// True iff every coordinate law can be sampled exactly.
    pub fn exactly_sampleable(&self) -> bool {
        self.components.iter().all(Scalar1d::exactly_sampleable)
    }
}

impl Potential for ProductPotential {
    fn dim(&self) -> usize {
        self.components.len()
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
        self.components.iter().zip(x).map(|(c, &t)| c.value(t)).sum()
    }

    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        for ((o, c), &t) in out.iter_mut().zip(&self.components).zip(x) {
            *o = c.d1(t);
        }
    }

    fn hessian_apply_into(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        for i in 0..x.len() {
            out[i] = self.components[i].d2(x[i]) * v[i];
        }
    }

    fn laplacian(&self, x: &[f64]) -> f64 {
        self.components.iter().zip(x).map(|(c, &t)| c.d2(t)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_gaussian_matches_half_norm_squared() {
        let p = ProductPotential::standard_gaussian(4);
        let x = [1.0, -1.0, 2.0, 0.0];
        assert!((p.value(&x) - 3.0).abs() < 1e-15);
        assert_eq!(p.grad(&x).unwrap(), x.to_vec());
        assert_eq!(p.laplacian(&x), 4.0);
        assert!(p.exactly_sampleable());
    }

    #[test]
    fn perturbed_gaussian_bounds_and_block() {
        let p = ProductPotential::perturbed_gaussian(8, 3, 0.3, 0.7, -0.3).unwrap();
        assert_eq!(p.dim(), 8);
        // mixture convexity margin 1 - 0.3*w1*w2*(mu1-mu2)^2 dips below 1
        assert!(p.alpha() < 1.0 && p.alpha() > 0.0);
        assert!(p.beta() >= 1.0);
        assert!(p.exactly_sampleable());
        // coordinates past the block behave as unit quadratics
        let x = [0.0; 8];
        let mut v = [0.0; 8];
        v[7] = 1.0;
        let hv = p.hessian_apply(&x, &v).unwrap();
        assert_eq!(hv[7], 1.0);
    }

    #[test]
    fn hessian_is_diagonal() {
        let p = ProductPotential::perturbed_gaussian(3, 1, 0.3, 0.7, -0.3).unwrap();
        let x = [0.4, -0.2, 1.0];
        let h = p.hessian_dense(&x);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(h[(i, j)], 0.0);
                }
            }
        }
        assert_eq!(p.graph().max_degree(), 0);
    }

    #[test]
    fn grad_matches_finite_differences() {
        let p = ProductPotential::perturbed_gaussian(3, 2, 0.3, 0.7, -0.3).unwrap();
        let x = [0.3, -0.8, 1.2];
        let g = p.grad(&x).unwrap();
        let eps = 1e-6;
        for i in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += eps;
            xm[i] -= eps;
            let fd = (p.value(&xp) - p.value(&xm)) / (2.0 * eps);
            assert!((g[i] - fd).abs() < 1e-5, "coord {i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn oversized_mixture_block_rejected() {
        assert!(ProductPotential::perturbed_gaussian(2, 3, 0.3, 0.7, -0.3).is_err());
        assert!(ProductPotential::new(vec![]).is_err());
    }
}
