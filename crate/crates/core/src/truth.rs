//! Population-level ground truth: partial-correlation weights of a
//! covariance matrix, the covariance implied by the linear signal model
//! `x = Wx + ε`, synthetic data and community-structured test graphs.

use nalgebra::{DMatrix, DVector};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Dataset, WeightedGraph};

/// Smallest singular value of `I − W`, relative to the largest, below which
/// the model counts as singular.
pub const INVERTIBILITY_TOL: f64 = 1e-8;

/// Minimum eigenvalue of a covariance, relative to the largest, required
/// for it to count as positive definite.
pub const SPD_TOL: f64 = 1e-12;

/// Per-node innovation standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    sigmas: DVector<f64>,
}

impl NoiseSpec {
    pub fn new(sigmas: DVector<f64>) -> Result<Self> {
        if let Some(i) = sigmas.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "noise standard deviation of node {} must be positive",
                i + 1
            )));
        }
        Ok(Self { sigmas })
    }

    pub fn unit(p: usize) -> Self {
        Self {
            sigmas: DVector::from_element(p, 1.0),
        }
    }

    /// Draws each innovation variance uniformly from `(0, 1]`.
    pub fn random_variances<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Self {
        let sigmas = DVector::from_fn(p, |_, _| (1.0 - rng.random::<f64>()).sqrt());
        Self { sigmas }
    }

    pub fn sigmas(&self) -> &DVector<f64> {
        &self.sigmas
    }

    pub fn variances(&self) -> DVector<f64> {
        self.sigmas.map(|s| s * s)
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }
}

fn check_spd(cov: &DMatrix<f64>) -> Result<()> {
    if !cov.is_square() || cov.nrows() < 2 {
        return Err(Error::NotSpd);
    }
    let scale = cov.amax();
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::NotSpd);
    }
    if (cov - cov.transpose()).amax() > 1e-12 * scale {
        return Err(Error::NotSpd);
    }
    let eig = cov.clone().symmetric_eigenvalues();
    if eig.min() <= SPD_TOL * eig.max() {
        return Err(Error::NotSpd);
    }
    Ok(())
}

/// Partial-correlation weights `w_ij = −Θ_ij / Θ_ii` with `Θ = Σ⁻¹`.
///
/// These are the coefficients of the best linear predictor of `x_i` from
/// all other nodes, which coincide with the covariance ratio of the two
/// innovations left after partialling out every remaining node.
pub fn true_weights_from_covariance(cov: &DMatrix<f64>) -> Result<WeightedGraph> {
    check_spd(cov)?;
    let chol = cov.clone().cholesky().ok_or(Error::NotSpd)?;
    let precision = chol.inverse();
    let p = cov.nrows();
    let weights = DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            0.0
        } else {
            -precision[(i, j)] / precision[(i, i)]
        }
    });
    WeightedGraph::new(weights)
}

/// Partial-correlation weights computed pair by pair: both innovations
/// are formed by regressing out the remaining `P − 2` nodes, then
/// `w_ij = Cov[x̃_i, x̃_j] / Var[x̃_j]`.
///
/// `O(P⁵)`; used to cross-check [`true_weights_from_covariance`].
pub fn weights_by_partialling(cov: &DMatrix<f64>) -> Result<WeightedGraph> {
    check_spd(cov)?;
    let p = cov.nrows();
    let mut weights = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            if i == j {
                continue;
            }
            let rest: Vec<usize> = (0..p).filter(|&k| k != i && k != j).collect();
            let (cov_ij, var_j) = if rest.is_empty() {
                (cov[(i, j)], cov[(j, j)])
            } else {
                let s_rr = cov.select_rows(&rest).select_columns(&rest);
                let chol = s_rr.cholesky().ok_or(Error::NotSpd)?;
                let s_ri = cov.select_rows(&rest).column(i).into_owned();
                let s_rj = cov.select_rows(&rest).column(j).into_owned();
                let a_i = chol.solve(&s_ri);
                let a_j = chol.solve(&s_rj);
                // Cov[x_i - a_iᵀx_r, x_j - a_jᵀx_r] collapses because a_j solves the normal equations
                (cov[(i, j)] - a_i.dot(&s_rj), cov[(j, j)] - a_j.dot(&s_rj))
            };
            weights[(i, j)] = cov_ij / var_j;
        }
    }
    WeightedGraph::new(weights)
}

/// `(I − W)⁻¹`, rejecting near-singular models.
pub fn model_inverse(w: &WeightedGraph) -> Result<DMatrix<f64>> {
    let p = w.num_nodes();
    let a = DMatrix::identity(p, p) - w.weights();
    let sv = a.clone().singular_values();
    if !(sv.min() >= INVERTIBILITY_TOL * sv.max()) {
        return Err(Error::SingularModel);
    }
    a.try_inverse().ok_or(Error::SingularModel)
}

/// Exact covariance `(I−W)⁻¹ diag(σ²) (I−W)⁻ᵀ` of data drawn by
/// [`generate_synthetic`].
pub fn population_covariance(w: &WeightedGraph, noise: &NoiseSpec) -> Result<DMatrix<f64>> {
    check_noise_dims(w, noise)?;
    let m = model_inverse(w)?;
    let scaled = &m * DMatrix::from_diagonal(&noise.variances());
    let cov = &scaled * m.transpose();
    Ok((&cov + cov.transpose()) * 0.5)
}

/// Partial-correlation graph of the distribution generated by `(w, noise)`.
///
/// With independent innovations this differs from `w` itself whenever
/// `w ≠ 0`: the generating weights are not, in general, the coefficients
/// of the best linear predictor of each node from the others.
pub fn partial_correlation_graph(w: &WeightedGraph, noise: &NoiseSpec) -> Result<WeightedGraph> {
    true_weights_from_covariance(&population_covariance(w, noise)?)
}

fn check_noise_dims(w: &WeightedGraph, noise: &NoiseSpec) -> Result<()> {
    if noise.len() != w.num_nodes() {
        return Err(Error::DimensionMismatch {
            expected: w.num_nodes(),
            found: noise.len(),
            context: "noise specification length",
        });
    }
    Ok(())
}

/// Draws `n` snapshots `x = (I−W)⁻¹ε` with independent Gaussian
/// innovations, deterministically from `seed`.
pub fn generate_synthetic(w: &WeightedGraph, noise: &NoiseSpec, n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_synthetic_with(w, noise, n, &mut rng)
}

/// [`generate_synthetic`] driven by a caller-owned generator.
pub fn generate_synthetic_with<R: Rng + ?Sized>(
    w: &WeightedGraph,
    noise: &NoiseSpec,
    n: usize,
    rng: &mut R,
) -> Result<Dataset> {
    check_noise_dims(w, noise)?;
    if n == 0 {
        return Err(Error::InvalidConfig("sample count must be at least 1".into()));
    }
    let m = model_inverse(w)?;
    let p = w.num_nodes();
    let sigmas = noise.sigmas();
    let mut eps = DMatrix::zeros(n, p);
    for r in 0..n {
        for c in 0..p {
            let z: f64 = StandardNormal.sample(rng);
            eps[(r, c)] = sigmas[c] * z;
        }
    }
    Dataset::new(eps * m.transpose())
}

/// Parameters of a block-structured random graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommunitySpec {
    /// Number of nodes in each community, in node order.
    pub blocks: Vec<usize>,
    /// Magnitude range `[lo, hi]` of edge weights; signs are random.
    #[serde(default = "CommunitySpec::default_weight_range")]
    pub weight_range: (f64, f64),
    /// Directed edges between distinct communities.
    pub inter_edges: usize,
    pub seed: u64,
    #[serde(default = "CommunitySpec::default_max_retries")]
    pub max_retries: usize,
}

impl CommunitySpec {
    fn default_weight_range() -> (f64, f64) {
        (0.2, 0.6)
    }

    fn default_max_retries() -> usize {
        100
    }

    /// Two dense communities of five nodes joined by two directed edges.
    pub fn two_communities(seed: u64) -> Self {
        Self {
            blocks: vec![5, 5],
            weight_range: Self::default_weight_range(),
            inter_edges: 2,
            seed,
            max_retries: Self::default_max_retries(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.blocks.iter().sum()
    }

    /// Block label of every node.
    pub fn membership(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .enumerate()
            .flat_map(|(b, &size)| std::iter::repeat_n(b, size))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() || self.blocks.contains(&0) {
            return Err(Error::InvalidConfig("block sizes must be at least 1".into()));
        }
        if self.num_nodes() < 2 {
            return Err(Error::InvalidConfig("a graph needs at least 2 nodes".into()));
        }
        let (lo, hi) = self.weight_range;
        if !(0.0 <= lo && lo <= hi && hi < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "weight range [{lo}, {hi}] must satisfy 0 <= lo <= hi < 1"
            )));
        }
        let n = self.num_nodes();
        let intra: usize = self.blocks.iter().map(|b| b * b).sum();
        let inter_pairs = n * n - intra;
        if self.inter_edges > inter_pairs {
            return Err(Error::InvalidConfig(format!(
                "{} inter-community edges requested but only {inter_pairs} pairs exist",
                self.inter_edges
            )));
        }
        Ok(())
    }
}

fn random_weight<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    let magnitude = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    if rng.random::<bool>() {
        magnitude
    } else {
        -magnitude
    }
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(w: &DMatrix<f64>) -> f64 {
    w.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Draws a graph with every intra-community link present and
/// `inter_edges` directed links between communities, retrying until the
/// spectral radius of `W` is below 1 (which also makes `I − W` invertible).
pub fn make_community_graph(spec: &CommunitySpec) -> Result<WeightedGraph> {
    spec.validate()?;
    let p = spec.num_nodes();
    let label = spec.membership();
    let inter_pairs: Vec<(usize, usize)> = (0..p)
        .flat_map(|i| (0..p).map(move |j| (i, j)))
        .filter(|&(i, j)| label[i] != label[j])
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for _ in 0..spec.max_retries.max(1) {
        let mut weights = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                if i != j && label[i] == label[j] {
                    weights[(i, j)] = random_weight(&mut rng, spec.weight_range);
                }
            }
        }
        for &(i, j) in inter_pairs.choose_multiple(&mut rng, spec.inter_edges) {
            weights[(i, j)] = random_weight(&mut rng, spec.weight_range);
        }
        let graph = WeightedGraph::new(weights)?;
        if spectral_radius(graph.weights()) < 1.0 && model_inverse(&graph).is_ok() {
            return Ok(graph);
        }
    }
    Err(Error::UnstableGraph(spec.max_retries.max(1)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_spd(p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(p, p) * 0.1
    }

    #[test]
    fn identity_covariance_has_no_links() {
        let w = true_weights_from_covariance(&DMatrix::identity(5, 5)).unwrap();
        assert!(w.weights().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn two_node_weights_are_covariance_ratios() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 1.0]);
        for w in [
            true_weights_from_covariance(&cov).unwrap(),
            weights_by_partialling(&cov).unwrap(),
        ] {
            assert!((w.get(0, 1) - 0.6).abs() < 1e-12);
            assert!((w.get(1, 0) - 0.6).abs() < 1e-12);
        }
        // unequal variances: w_ij = cov / var_j
        let cov = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]);
        let w = true_weights_from_covariance(&cov).unwrap();
        assert!((w.get(0, 1) - 0.5).abs() < 1e-12);
        assert!((w.get(1, 0) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn precision_and_partialling_paths_agree() {
        for seed in 0..10 {
            let cov = random_spd(6, seed);
            let a = true_weights_from_covariance(&cov).unwrap();
            let b = weights_by_partialling(&cov).unwrap();
            assert!((a.weights() - b.weights()).amax() < 1e-8, "seed {seed}");
        }
    }

    #[test]
    fn singular_covariance_is_rejected() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(true_weights_from_covariance(&cov), Err(Error::NotSpd)));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.1, 1.0]);
        assert!(matches!(true_weights_from_covariance(&asym), Err(Error::NotSpd)));
    }

    #[test]
    fn population_covariance_of_empty_graph() {
        let w = WeightedGraph::zeros(3).unwrap();
        assert_eq!(population_covariance(&w, &NoiseSpec::unit(3)).unwrap(), DMatrix::identity(3, 3));
        let w = WeightedGraph::zeros(2).unwrap();
        let noise = NoiseSpec::new(DVector::from_vec(vec![1.0, 2.0])).unwrap();
        let cov = population_covariance(&w, &noise).unwrap();
        assert_eq!(cov, DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0])));
    }

    #[test]
    fn singular_model_is_rejected() {
        // I - W = [[1, -1], [-1, 1]] is singular
        let w = WeightedGraph::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert!(matches!(
            population_covariance(&w, &NoiseSpec::unit(2)),
            Err(Error::SingularModel)
        ));
        assert!(matches!(
            generate_synthetic(&w, &NoiseSpec::unit(2), 5, 0),
            Err(Error::SingularModel)
        ));
    }

    #[test]
    fn generating_weights_differ_from_partial_correlations() {
        // x1 = a x2 + e1, x2 = e2: regressing x2 on x1 is not zero
        let a = 0.5;
        let w = WeightedGraph::new(DMatrix::from_row_slice(2, 2, &[0.0, a, 0.0, 0.0])).unwrap();
        let pc = partial_correlation_graph(&w, &NoiseSpec::unit(2)).unwrap();
        assert!((pc.get(0, 1) - a).abs() < 1e-12);
        assert!((pc.get(1, 0) - a / (a * a + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn partial_correlation_residuals_are_uncorrelated() {
        let g = make_community_graph(&CommunitySpec::two_communities(4)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noise = NoiseSpec::random_variances(10, &mut rng);
        let cov = population_covariance(&g, &noise).unwrap();
        let pc = true_weights_from_covariance(&cov).unwrap();
        // Cov[x, ε_i] with ε_i = x_i - Σ_j w_ij x_j is Σ (e_i - w_i)
        let resid = DMatrix::identity(10, 10) - pc.weights();
        let cross = &cov * resid.transpose();
        for i in 0..10 {
            for k in 0..10 {
                if k != i {
                    assert!(cross[(k, i)].abs() < 1e-10 * cov.amax(), "({k},{i})");
                }
            }
        }
    }

    #[test]
    fn synthetic_data_is_deterministic() {
        let g = make_community_graph(&CommunitySpec::two_communities(1)).unwrap();
        let noise = NoiseSpec::unit(10);
        let a = generate_synthetic(&g, &noise, 50, 42).unwrap();
        let b = generate_synthetic(&g, &noise, 50, 42).unwrap();
        let c = generate_synthetic(&g, &noise, 50, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn white_noise_sample_covariance_is_identity() {
        let w = WeightedGraph::zeros(4).unwrap();
        let d = generate_synthetic(&w, &NoiseSpec::unit(4), 100_000, 7).unwrap();
        let x = d.samples();
        let cov = x.tr_mul(x) / x.nrows() as f64;
        let eye = DMatrix::<f64>::identity(4, 4);
        assert!((&cov - &eye).norm() / eye.norm() < 0.05);
        // 5-sigma bound on the sample mean
        for j in 0..4 {
            let mean = x.column(j).mean();
            assert!(mean.abs() < 5.0 / (x.nrows() as f64).sqrt());
        }
    }

    #[test]
    fn community_sample_covariance_matches_population() {
        let g = make_community_graph(&CommunitySpec::two_communities(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = NoiseSpec::random_variances(10, &mut rng);
        let pop = population_covariance(&g, &noise).unwrap();
        let d = generate_synthetic(&g, &noise, 100_000, 8).unwrap();
        let x = d.samples();
        let cov = x.tr_mul(x) / x.nrows() as f64;
        assert!((&cov - &pop).norm() / pop.norm() < 0.05);
    }

    #[test]
    fn community_graph_structure() {
        for seed in 0..20 {
            let spec = CommunitySpec::two_communities(seed);
            let g = make_community_graph(&spec).unwrap();
            let label = spec.membership();
            let mut outside = 0;
            for i in 0..10 {
                for j in 0..10 {
                    let w = g.get(i, j);
                    if i == j {
                        assert_eq!(w, 0.0);
                    } else if label[i] == label[j] {
                        assert!((0.2..=0.6).contains(&w.abs()));
                    } else if w != 0.0 {
                        outside += 1;
                    }
                }
            }
            assert_eq!(outside, 2);
            assert!(model_inverse(&g).is_ok());
        }
    }

    #[test]
    fn singleton_blocks_without_inter_edges_give_zero_graph() {
        let spec = CommunitySpec {
            blocks: vec![1, 1],
            inter_edges: 0,
            ..CommunitySpec::two_communities(0)
        };
        let g = make_community_graph(&spec).unwrap();
        assert_eq!(g, WeightedGraph::zeros(2).unwrap());
    }

    #[test]
    fn near_unit_cycles_exhaust_retries() {
        // a 2-node block with |w| ≈ 1 sits on the unit circle only when both signs agree
        let outcomes: Vec<_> = (0..32)
            .map(|seed| {
                make_community_graph(&CommunitySpec {
                    blocks: vec![2],
                    weight_range: (1.0 - 1e-10, 1.0 - 1e-10),
                    inter_edges: 0,
                    seed,
                    max_retries: 1,
                })
            })
            .collect();
        assert!(outcomes.iter().any(|r| matches!(r, Err(Error::UnstableGraph(1)))));
        assert!(outcomes.iter().any(|r| r.is_ok()));
    }

    #[test]
    fn invalid_weight_range_is_rejected() {
        let bad = CommunitySpec {
            weight_range: (0.5, 1.5),
            ..CommunitySpec::two_communities(0)
        };
        assert!(matches!(make_community_graph(&bad), Err(Error::InvalidConfig(_))));
    }
}
