//! Householder rotation mixing all coordinates, and the rotated product
//! potential used as the dense-graph counterexample: one step of mixing
//! turns independent per-coordinate bias into a single amplified
//! coordinate.

use nalgebra::DMatrix;

use crate::graph::InteractionGraph;

use super::product::ProductPotential;
use super::scalar::Scalar1d;
use super::{Potential, PotentialError};

/// The symmetric orthogonal involution `Q = I - 2 u u' / |u|^2` with
/// `u = e_1 - w`, `w = (1/sqrt(d)) 1`.
///
/// Key identities: `Q e_1 = w`, `Q w = e_1`, hence `Q (delta 1) =
/// delta sqrt(d) e_1` exactly; row 0 of `Q` is `w`. For `d = 1` the map
/// degenerates to the identity.
#[derive(Debug, Clone)]
pub struct HouseholderRotation {
    d: usize,
    u: Vec<f64>,
    /// `2 / |u|^2`; zero encodes the identity map.
    coef: f64,
}

impl HouseholderRotation {
    pub fn new(d: usize) -> Result<Self, PotentialError> {
        if d == 0 {
            return Err(PotentialError::InvalidParameter("d must be >= 1".into()));
        }
        if d == 1 {
            return Ok(Self {
                d,
                u: vec![0.0],
                coef: 0.0,
            });
        }
        let w = 1.0 / (d as f64).sqrt();
        let mut u = vec![-w; d];
        u[0] = 1.0 - w;
        let norm_sq: f64 = u.iter().map(|v| v * v).sum();
        Ok(Self {
            d,
            u,
            coef: 2.0 / norm_sq,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Applies `Q` in place, O(d).
    pub fn apply_in_place(&self, v: &mut [f64]) {
        debug_assert_eq!(v.len(), self.d);
        if self.coef == 0.0 {
            return;
        }
        let dot: f64 = self.u.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        let scale = self.coef * dot;
        for (vi, ui) in v.iter_mut().zip(&self.u) {
            *vi -= scale * ui;
        }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        self.apply_in_place(&mut out);
        out
    }

    /// Dense matrix form, for diagnostics and tests.
    pub fn dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::identity(self.d, self.d);
        for j in 0..self.d {
            for i in 0..self.d {
                m[(i, j)] -= self.coef * self.u[i] * self.u[j];
            }
        }
        m
    }
}

/// Product of i.i.d. scalar mixtures conjugated by the Householder
/// rotation: `V(x) = V_prod(Q x)`.
///
/// The target is the pushforward of the product mixture law under `Q`
/// (which is its own inverse), so exact sampling stays available while the
/// Hessian `Q H_prod(Qx) Q` is dense: the interaction graph is complete.
#[derive(Debug, Clone)]
pub struct RotatedMixturePotential {
    base: ProductPotential,
    rotation: HouseholderRotation,
    graph: InteractionGraph,
}

impl RotatedMixturePotential {
    pub fn new(d: usize, p: f64, mu1: f64, mu2: f64) -> Result<Self, PotentialError> {
        let mix = Scalar1d::gaussian_mixture(p, mu1, mu2)?;
        let base = ProductPotential::iid(d, mix)?;
        Ok(Self {
            base,
            rotation: HouseholderRotation::new(d)?,
            graph: InteractionGraph::complete(d),
        })
    }

    pub fn base(&self) -> &ProductPotential {
        &self.base
    }

    pub fn rotation(&self) -> &HouseholderRotation {
        &self.rotation
    }
}

impl Potential for RotatedMixturePotential {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    // Orthogonal conjugation preserves the Hessian spectrum.
    fn alpha(&self) -> f64 {
        self.base.alpha()
    }

    fn beta(&self) -> f64 {
        self.base.beta()
    }

    fn graph(&self) -> &InteractionGraph {
        &self.graph
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.base.value(&self.rotation.apply(x))
    }

    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        // grad = Q' grad V_prod(Q x), and Q' = Q.
        let qx = self.rotation.apply(x);
        self.base.grad_into(&qx, out);
        self.rotation.apply_in_place(out);
    }

    fn hessian_apply_into(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let qx = self.rotation.apply(x);
        let qv = self.rotation.apply(v);
        self.base.hessian_apply_into(&qx, &qv, out);
        self.rotation.apply_in_place(out);
    }

    fn laplacian(&self, x: &[f64]) -> f64 {
        // trace is invariant under the conjugation
        self.base.laplacian(&self.rotation.apply(x))
    }
}
