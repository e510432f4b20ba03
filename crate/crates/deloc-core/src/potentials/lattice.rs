//! Lattice potentials: scalar node terms coupled by quadratic edge terms,
//!
//! `V(x) = sum_i v_i(x_i) + (1/2) sum_{i ~ j} (x_i - x_j)^2`.
//!
//! The Hessian is `diag(v_i''(x_i)) + L` with `L` the graph Laplacian, so
//! its sparsity pattern is exactly the interaction graph and the convexity
//! window follows from `0 <= L <= 2 max_deg`.

use crate::graph::InteractionGraph;

use super::scalar::{Scalar1d, QUARTIC_REG_CURVATURE_MAX};
use super::{Potential, PotentialError};

#[derive(Debug, Clone)]
pub struct LatticePerturbedPotential {
    graph: InteractionGraph,
    nodes: Vec<Scalar1d>,
    alpha: f64,
    beta: f64,
}

impl LatticePerturbedPotential {
    /// Generic constructor with the graph-Laplacian convexity window
    /// `[min_i alpha_i, max_i beta_i + 2 max_deg]`.
    pub fn new(graph: InteractionGraph, nodes: Vec<Scalar1d>) -> Result<Self, PotentialError> {
        if nodes.len() != graph.d() {
            return Err(PotentialError::DimensionMismatch {
                expected: graph.d(),
                got: nodes.len(),
            });
        }
        let alpha = nodes.iter().map(Scalar1d::alpha).fold(f64::INFINITY, f64::min);
        let beta = nodes.iter().map(Scalar1d::beta).fold(0.0f64, f64::max)
            + 2.0 * graph.max_degree() as f64;
        Self::with_certified_bounds(graph, nodes, alpha, beta)
    }

    /// Constructor with caller-certified spectral bounds, for families where
    /// a sharper window than the generic Laplacian one is provable. The
    /// caller asserts `alpha I <= Hessian(x) <= beta I` for all `x`.
    pub fn with_certified_bounds(
        graph: InteractionGraph,
        nodes: Vec<Scalar1d>,
        alpha: f64,
        beta: f64,
    ) -> Result<Self, PotentialError> {
        if nodes.len() != graph.d() {
            return Err(PotentialError::DimensionMismatch {
                expected: graph.d(),
                got: nodes.len(),
            });
        }
        if !(alpha > 0.0) || !(beta >= alpha) || !beta.is_finite() {
            return Err(PotentialError::InvalidParameter(format!(
                "need 0 < alpha <= beta, got alpha = {alpha}, beta = {beta}"
            )));
        }
        Ok(Self {
            graph,
            nodes,
            alpha,
            beta,
        })
    }

    pub fn nodes(&self) -> &[Scalar1d] {
        &self.nodes
    }
}

impl Potential for LatticePerturbedPotential {
    fn dim(&self) -> usize {
        self.nodes.len()
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
        let node_sum: f64 = self.nodes.iter().zip(x).map(|(v, &t)| v.value(t)).sum();
        let edge_sum: f64 = self
            .graph
            .edges()
            .iter()
            .map(|&(i, j)| {
                let diff = x[i] - x[j];
                0.5 * diff * diff
            })
            .sum();
        node_sum + edge_sum
    }

    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..x.len() {
            // d/dx_i of the edge terms: deg_i x_i - sum of neighbor values.
            let mut acc = self.nodes[i].d1(x[i]) + self.graph.degree(i) as f64 * x[i];
            for &j in self.graph.neighbors(i) {
                if j != i {
                    acc -= x[j];
                }
            }
            out[i] = acc;
        }
    }

    fn hessian_apply_into(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        for i in 0..x.len() {
            let mut acc = (self.nodes[i].d2(x[i]) + self.graph.degree(i) as f64) * v[i];
            for &j in self.graph.neighbors(i) {
                if j != i {
                    acc -= v[j];
                }
            }
            out[i] = acc;
        }
    }

    fn laplacian(&self, x: &[f64]) -> f64 {
        self.nodes
            .iter()
            .zip(x)
            .enumerate()
            .map(|(i, (v, &t))| v.d2(t) + self.graph.degree(i) as f64)
            .sum()
    }
}

/// Local curvature profile of the tridiagonal family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSpec {
    /// `lambda(t) = alpha`: the Hessian is the constant matrix
    /// `tridiag(-1, 2 + alpha, -1)` and the target is Gaussian.
    Constant { alpha: f64 },
    /// `lambda(t) = alpha + c * phi(t)` with `phi` the bounded curvature
    /// bump of the regularized-quartic node term, `0 <= phi <= 2.5`.
    QuarticVar { alpha: f64, c: f64 },
}

impl LambdaSpec {
    pub fn alpha(&self) -> f64 {
        match *self {
            Self::Constant { alpha } => alpha,
            Self::QuarticVar { alpha, .. } => alpha,
        }
    }

    pub fn c(&self) -> f64 {
        match *self {
            Self::Constant { .. } => 0.0,
            Self::QuarticVar { c, .. } => c,
        }
    }
}

/// Chain potential whose Hessian is exactly `tridiag(-1, 2 + lambda(x_i), -1)`.
///
/// Built on the path graph; node `i` gets curvature `lambda(x_i) + 2 - deg_i`
/// so that the edge terms top the diagonal back up to `2 + lambda(x_i)` at
/// every node, including the boundary. Certified window
/// `[alpha, alpha + 2.5 c + 4]` via Gershgorin on the tridiagonal form.
pub fn tridiagonal_example(
    d: usize,
    spec: LambdaSpec,
) -> Result<LatticePerturbedPotential, PotentialError> {
    if d == 0 {
        return Err(PotentialError::InvalidParameter("d must be >= 1".into()));
    }
    let alpha = spec.alpha();
    let c = spec.c();
    if !(alpha > 0.0) {
        return Err(PotentialError::InvalidParameter(format!(
            "lambda floor must be positive, got {alpha}"
        )));
    }
    if !(c >= 0.0) || !c.is_finite() {
        return Err(PotentialError::InvalidParameter(format!(
            "curvature amplitude must be nonnegative, got {c}"
        )));
    }
    let graph = InteractionGraph::path(d);
    let nodes: Result<Vec<Scalar1d>, _> = (0..d)
        .map(|i| {
            let a_i = alpha + (2 - graph.degree(i)) as f64;
            if c == 0.0 {
                Scalar1d::quadratic(a_i, 0.0)
            } else {
                Scalar1d::quartic_reg(a_i, c)
            }
        })
        .collect();
    let beta = alpha + QUARTIC_REG_CURVATURE_MAX * c + 4.0;
    LatticePerturbedPotential::with_certified_bounds(graph, nodes?, alpha, beta)
}
