//! Random time-varying undirected communication networks: per-step graph
//! sampling, Laplacians, the mean-graph connectivity audit, and the Laplacian
//! pseudo-inverse.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};

use crate::error::{Error, Result};

const CONNECTIVITY_FLOOR: f64 = 1e-10;

/// An i.i.d. distribution over undirected graphs on a fixed agent set.
///
/// The primary family activates each base edge independently with its own
/// probability; a finite mixture of fixed graphs is also supported.
#[derive(Debug, Clone)]
pub enum GraphDistribution {
    /// Independent Bernoulli activation of base edges `(i, j, p)`.
    Bernoulli {
        num_agents: usize,
        edges: Vec<(usize, usize, f64)>,
    },
    /// Draw one of the fixed edge sets with the given probabilities.
    Mixture {
        num_agents: usize,
        components: Vec<(f64, Vec<(usize, usize)>)>,
    },
}

impl GraphDistribution {
    /// Bernoulli family with a shared activation probability.
    pub fn uniform(num_agents: usize, edges: &[(usize, usize)], p: f64) -> Result<Self> {
        Self::bernoulli(
            num_agents,
            edges.iter().map(|&(i, j)| (i, j, p)).collect(),
        )
    }

    pub fn bernoulli(num_agents: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        if num_agents == 0 {
            return Err(Error::DomainError("graph needs at least one agent".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for &(i, j, p) in &edges {
            if i == j {
                return Err(Error::DomainError(format!("self-loop at node {i}")));
            }
            if i >= num_agents || j >= num_agents {
                return Err(Error::DomainError(format!(
                    "edge ({i},{j}) out of range for {num_agents} agents"
                )));
            }
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::DomainError(format!(
                    "edge probability {p} outside (0,1]"
                )));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(Error::DomainError(format!("duplicate edge ({i},{j})")));
            }
        }
        Ok(Self::Bernoulli { num_agents, edges })
    }

    pub fn mixture(num_agents: usize, components: Vec<(f64, Vec<(usize, usize)>)>) -> Result<Self> {
        if num_agents == 0 || components.is_empty() {
            return Err(Error::DomainError(
                "mixture needs agents and at least one component".into(),
            ));
        }
        let total: f64 = components.iter().map(|(w, _)| *w).sum();
        if (total - 1.0).abs() > 1e-12 || components.iter().any(|(w, _)| *w < 0.0) {
            return Err(Error::DomainError(
                "mixture weights must be nonnegative and sum to 1".into(),
            ));
        }
        for (_, edges) in &components {
            for &(i, j) in edges {
                if i == j || i >= num_agents || j >= num_agents {
                    return Err(Error::DomainError(format!("bad mixture edge ({i},{j})")));
                }
            }
        }
        Ok(Self::Mixture {
            num_agents,
            components,
        })
    }

    pub fn num_agents(&self) -> usize {
        match self {
            Self::Bernoulli { num_agents, .. } | Self::Mixture { num_agents, .. } => *num_agents,
        }
    }
}

/// A concrete graph Laplacian L = H - W. Constructed edge-by-edge so that
/// L 1 = 0 holds exactly.
#[derive(Debug, Clone)]
pub struct LaplacianView {
    laplacian: DMatrix<f64>,
}

impl LaplacianView {
    pub fn from_weighted_edges(num_agents: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut l = DMatrix::zeros(num_agents, num_agents);
        for &(i, j, w) in edges {
            l[(i, i)] += w;
            l[(j, j)] += w;
            l[(i, j)] -= w;
            l[(j, i)] -= w;
        }
        Self { laplacian: l }
    }

    pub fn from_edges(num_agents: usize, edges: &[(usize, usize)]) -> Self {
        let weighted: Vec<_> = edges.iter().map(|&(i, j)| (i, j, 1.0)).collect();
        Self::from_weighted_edges(num_agents, &weighted)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    pub fn num_agents(&self) -> usize {
        self.laplacian.nrows()
    }

    /// Second-smallest eigenvalue. A single node is connected by convention
    /// (there is no second eigenvalue), reported as +inf.
    pub fn algebraic_connectivity(&self) -> f64 {
        let n = self.num_agents();
        if n == 1 {
            return f64::INFINITY;
        }
        let mut eigs: Vec<f64> = self
            .laplacian
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        eigs.sort_by(|a, b| a.total_cmp(b));
        eigs[1]
    }

    /// Block row action (L w)_i = |N_i| w_i - sum_{j in N_i} w_j for stacked
    /// block vectors of width `block_dim`.
    pub fn block_row_apply(&self, x: &DVector<f64>, block_dim: usize, out: &mut DVector<f64>) {
        let n = self.num_agents();
        debug_assert_eq!(x.len(), n * block_dim);
        debug_assert_eq!(out.len(), n * block_dim);
        out.fill(0.0);
        for i in 0..n {
            for j in 0..n {
                let w = self.laplacian[(i, j)];
                if w != 0.0 {
                    let src = x.rows(j * block_dim, block_dim);
                    let mut dst = out.rows_mut(i * block_dim, block_dim);
                    dst.axpy(w, &src, 1.0);
                }
            }
        }
    }
}

/// One i.i.d. draw from the distribution. Repeated calls with the same seed
/// sequence are bit-reproducible; edges are visited in declaration order.
pub fn sample_graph<R: Rng>(dist: &GraphDistribution, rng: &mut R) -> LaplacianView {
    match dist {
        GraphDistribution::Bernoulli { num_agents, edges } => {
            let mut active = Vec::with_capacity(edges.len());
            for &(i, j, p) in edges {
                let u: f64 = rng.random();
                if u < p {
                    active.push((i, j));
                }
            }
            LaplacianView::from_edges(*num_agents, &active)
        }
        GraphDistribution::Mixture {
            num_agents,
            components,
        } => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (w, edges) in components {
                acc += w;
                if u < acc {
                    return LaplacianView::from_edges(*num_agents, edges);
                }
            }
            let (_, edges) = components.last().expect("nonempty mixture");
            LaplacianView::from_edges(*num_agents, edges)
        }
    }
}

/// Expected Laplacian, in closed form from the edge probabilities.
pub fn mean_laplacian(dist: &GraphDistribution) -> LaplacianView {
    match dist {
        GraphDistribution::Bernoulli { num_agents, edges } => {
            LaplacianView::from_weighted_edges(*num_agents, edges)
        }
        GraphDistribution::Mixture {
            num_agents,
            components,
        } => {
            let mut weighted = Vec::new();
            for (w, edges) in components {
                for &(i, j) in edges {
                    weighted.push((i, j, *w));
                }
            }
            LaplacianView::from_weighted_edges(*num_agents, &weighted)
        }
    }
}

/// Checks the mean connectivity assumption and returns lambda_2 of the mean
/// Laplacian.
pub fn assert_mean_connectivity(dist: &GraphDistribution) -> Result<f64> {
    let lambda2 = mean_laplacian(dist).algebraic_connectivity();
    if lambda2 > CONNECTIVITY_FLOOR {
        Ok(lambda2)
    } else {
        Err(Error::NotConnected(lambda2))
    }
}

/// Moore-Penrose pseudo-inverse of a connected graph Laplacian via
/// (L + 1 1T / N)^{-1} - 1 1T / N.
pub fn laplacian_pseudoinverse(view: &LaplacianView) -> Result<DMatrix<f64>> {
    let n = view.num_agents();
    let lambda2 = view.algebraic_connectivity();
    if !(lambda2 > CONNECTIVITY_FLOOR) {
        return Err(Error::NotConnected(lambda2));
    }
    let ones = DMatrix::from_element(n, n, 1.0 / n as f64);
    let inner = view.matrix() + &ones;
    let inv = inner
        .try_inverse()
        .ok_or(Error::NotConnected(lambda2))?;
    Ok(inv - ones)
}

/// The Kronecker product L (x) I_q applied block-sparsely; dense
/// materialization is reserved for small problems.
#[derive(Debug, Clone)]
pub struct BlockLaplacian {
    matrix: DMatrix<f64>,
    block_dim: usize,
}

/// Largest problem (N*q) for which `to_dense` will materialize the
/// Kronecker product.
pub const DENSE_BLOCK_LIMIT: usize = 512;

impl BlockLaplacian {
    pub fn new(matrix: DMatrix<f64>, block_dim: usize) -> Result<Self> {
        if block_dim == 0 {
            return Err(Error::DomainError("block dimension must be >= 1".into()));
        }
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "block operator base must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { matrix, block_dim })
    }

    pub fn base(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows() * self.block_dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.len());
        self.apply_to(x, &mut out);
        out
    }

    pub fn apply_to(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        let n = self.matrix.nrows();
        let q = self.block_dim;
        assert_eq!(x.len(), n * q, "stacked vector length mismatch");
        out.fill(0.0);
        for i in 0..n {
            for j in 0..n {
                let w = self.matrix[(i, j)];
                if w != 0.0 {
                    let src = x.rows(j * q, q);
                    let mut dst = out.rows_mut(i * q, q);
                    dst.axpy(w, &src, 1.0);
                }
            }
        }
    }

    /// xT (L (x) I_q) x without forming the product.
    pub fn quadratic_form(&self, x: &DVector<f64>) -> f64 {
        self.apply(x).dot(x)
    }

    /// Dense Kronecker product, only for desk-scale problems.
    pub fn to_dense(&self) -> DMatrix<f64> {
        assert!(
            self.len() <= DENSE_BLOCK_LIMIT,
            "refusing to materialize a {0}x{0} block operator",
            self.len()
        );
        self.matrix
            .kronecker(&DMatrix::identity(self.block_dim, self.block_dim))
    }
}

/// L (x) I_q for the given Laplacian.
pub fn stacked_laplacian(view: &LaplacianView, block_dim: usize) -> Result<BlockLaplacian> {
    BlockLaplacian::new(view.matrix().clone(), block_dim)
}
