//! Hyperparameter-free sparse regression of every node on all others.
//!
//! Row `i` of the learned graph minimizes the weighted square-root Lasso
//!
//! ```text
//! ‖x_i − X₋ᵢ w‖₂ + Σ_{j≠i} (‖x_j‖₂ / √N) |w_j|
//! ```
//!
//! by cyclic coordinate descent. Every step only touches the Gram matrix
//! held in [`SuffStats`], so one sweep costs `O(P²)` regardless of `N`, and
//! the online learner absorbs a new snapshot with a rank-one update followed
//! by warm-started sweeps.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{offdiag_to_full, Dataset, WeightedGraph};
use crate::stats::SuffStats;

/// Relative slack granted to the residual-energy radicand before it is
/// considered negative rather than rounding noise.
const RADICAND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stop once a full sweep lowers the objective by less than this
    /// fraction (and the optimality certificate holds).
    pub tol: f64,
    pub max_sweeps: usize,
    /// Residual norm below which the fit counts as exact. `None` uses
    /// `1e-12 · ‖x_i‖`. The floor is never taken below the rounding noise of
    /// the Gram-based residual.
    pub residual_floor: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_sweeps: 1000,
            residual_floor: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidConfig(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_sweeps == 0 {
            return Err(Error::InvalidConfig("max_sweeps must be at least 1".into()));
        }
        if let Some(floor) = self.residual_floor {
            if !(floor >= 0.0 && floor.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "residual_floor must be non-negative, got {floor}"
                )));
            }
        }
        Ok(())
    }

    fn floor_for(&self, target_energy: f64) -> f64 {
        self.residual_floor
            .unwrap_or_else(|| 1e-12 * target_energy.sqrt())
    }
}

/// Per-node solver report, emitted as one JSON line per node by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDiagnostics {
    /// 1-based node number.
    pub node: usize,
    pub sweeps: usize,
    pub objective: f64,
    /// Largest excess of a subgradient optimality condition over its
    /// tolerance; zero when the certificate holds.
    pub certificate_residual: f64,
    pub certificate_holds: bool,
    pub converged: bool,
    /// Every sweep lowered (or kept) the objective.
    pub monotone: bool,
    pub nnz: usize,
}

/// Result of one per-node solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSolveState {
    node: usize,
    /// Full-length weights with a structural zero at `node`.
    weights: DVector<f64>,
    objective: f64,
    diagnostics: NodeDiagnostics,
}

impl NodeSolveState {
    pub fn node(&self) -> usize {
        self.node
    }

    /// Weights on the other `P − 1` nodes, in node order.
    pub fn weights(&self) -> DVector<f64> {
        let p = self.weights.len();
        DVector::from_fn(p - 1, |k, _| self.weights[offdiag_to_full(self.node, k)])
    }

    /// Weights over all `P` nodes; entry `node` is zero.
    pub fn full_weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn diagnostics(&self) -> &NodeDiagnostics {
        &self.diagnostics
    }
}

/// Penalty weight `‖x_j‖₂ / √N` of every column.
pub fn penalty_weights(stats: &SuffStats) -> DVector<f64> {
    let n = stats.num_samples().max(1) as f64;
    stats.column_norms_sq().map(|g| (g.max(0.0) / n).sqrt())
}

fn check_node(stats: &SuffStats, node: usize) -> Result<()> {
    if node >= stats.num_nodes() {
        return Err(Error::DimensionMismatch {
            expected: stats.num_nodes(),
            found: node + 1,
            context: "node index",
        });
    }
    Ok(())
}

fn expand(node: usize, p: usize, weights: &DVector<f64>) -> Result<DVector<f64>> {
    if weights.len() + 1 != p {
        return Err(Error::DimensionMismatch {
            expected: p - 1,
            found: weights.len(),
            context: "weight vector length",
        });
    }
    let mut full = DVector::zeros(p);
    for (k, w) in weights.iter().enumerate() {
        full[offdiag_to_full(node, k)] = *w;
    }
    Ok(full)
}

/// Residual energy `‖x_i − X w‖²` of a full-length weight vector with
/// `w[i] = 0`, given `gw = G w`.
fn residual_energy(gram: &DMatrix<f64>, node: usize, w: &DVector<f64>, gw: &DVector<f64>) -> f64 {
    gram[(node, node)] - 2.0 * gram.column(node).dot(w) + w.dot(gw)
}

/// Size of the rounding noise in `√(residual energy)` when the energy is
/// assembled from Gram entries: the radicand carries an absolute error of
/// order `P·ε·(√κ + Σ|w_j|·‖x_j‖)²`.
fn rounding_floor(gram: &DMatrix<f64>, node: usize, w: &DVector<f64>) -> f64 {
    let p = w.len() as f64;
    let scale = gram[(node, node)].max(0.0).sqrt()
        + w.iter()
            .enumerate()
            .map(|(j, wj)| wj.abs() * gram[(j, j)].max(0.0).sqrt())
            .sum::<f64>();
    (16.0 * p * f64::EPSILON).sqrt() * scale
}

fn objective_full(gram: &DMatrix<f64>, lambda: &DVector<f64>, node: usize, w: &DVector<f64>) -> f64 {
    let gw = gram * w;
    let r = residual_energy(gram, node, w, &gw);
    r.max(0.0).sqrt() + lambda.component_mul(&w.abs()).sum()
}

/// Square-root Lasso objective of node `node` at `weights` (length P−1),
/// evaluated from statistics alone. The radicand is clamped at zero.
pub fn sqrt_lasso_objective(stats: &SuffStats, node: usize, weights: &DVector<f64>) -> Result<f64> {
    check_node(stats, node)?;
    let w = expand(node, stats.num_nodes(), weights)?;
    Ok(objective_full(stats.gram(), &penalty_weights(stats), node, &w))
}

/// Minimizer of `√(a w² − 2b w + c) + λ|w|` over scalar `w`.
///
/// Zero whenever `|b| ≤ λ√c` (which always holds once `λ² ≥ a`); otherwise
/// the stationary point on the side of `sign(b)`.
pub fn coordinate_update(a: f64, b: f64, c: f64, lambda: f64) -> Result<f64> {
    let invalid = || Error::InvalidQuadratic { a, b, c };
    if !(a > 0.0 && a.is_finite() && b.is_finite() && c.is_finite()) {
        return Err(invalid());
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidConfig(format!("penalty must be non-negative, got {lambda}")));
    }
    let fit = b * b / a;
    if c - fit < -RADICAND_SLACK * (c.abs() + fit) {
        return Err(invalid());
    }
    Ok(scalar_minimizer(a, b, c, lambda))
}

#[inline]
fn scalar_minimizer(a: f64, b: f64, c: f64, lambda: f64) -> f64 {
    if b == 0.0 {
        return 0.0;
    }
    let fit = b * b / a;
    let excess = (c - fit).max(0.0);
    let c = fit + excess;
    let lambda_sq = lambda * lambda;
    if lambda_sq >= a || b.abs() <= lambda * c.sqrt() {
        return 0.0;
    }
    let shift = lambda * (excess / (a * (a - lambda_sq))).sqrt();
    b.signum() * (b.abs() / a - shift).max(0.0)
}

struct Certificate {
    residual: f64,
    holds: bool,
}

fn certificate(
    gram: &DMatrix<f64>,
    lambda: &DVector<f64>,
    node: usize,
    w: &DVector<f64>,
    gw: &DVector<f64>,
    residual_norm: f64,
    floor: f64,
) -> Certificate {
    if residual_norm <= floor {
        // exact fit: the smooth part has no gradient to certify
        return Certificate { residual: 0.0, holds: true };
    }
    // slack is relative to λ_j so certification is unaffected by
    // rescaling the data or any column
    let mut worst: f64 = 0.0;
    for j in 0..w.len() {
        if j == node || gram[(j, j)] <= 0.0 {
            continue;
        }
        let grad = (gw[j] - gram[(j, node)]) / residual_norm;
        let excess = if w[j] != 0.0 {
            (grad + lambda[j] * w[j].signum()).abs() - (1e-6 + 1e-9) * lambda[j]
        } else {
            grad.abs() - lambda[j] * (1.0 + 1e-6)
        };
        worst = worst.max(excess);
    }
    Certificate {
        residual: worst,
        holds: worst <= 0.0,
    }
}

/// Solves node `node` by cyclic coordinate descent, starting from `warm`
/// (length P−1) or from zero.
pub fn spice_solve_node(
    stats: &SuffStats,
    node: usize,
    cfg: &SolverConfig,
    warm: Option<&DVector<f64>>,
) -> Result<NodeSolveState> {
    let p = stats.num_nodes();
    let order: Vec<usize> = (0..p).filter(|&j| j != node).collect();
    solve_with_order(stats, node, cfg, warm.map(|w| expand(node, p, w)).transpose()?, &order)
}

/// [`spice_solve_node`] with an explicit coordinate visiting order given
/// as a permutation of `0..P−1` (positions in the off-diagonal row).
pub fn spice_solve_node_ordered(
    stats: &SuffStats,
    node: usize,
    cfg: &SolverConfig,
    warm: Option<&DVector<f64>>,
    order: &[usize],
) -> Result<NodeSolveState> {
    check_node(stats, node)?;
    let p = stats.num_nodes();
    let mut seen = vec![false; p - 1];
    for &k in order {
        if k >= p - 1 || std::mem::replace(&mut seen[k], true) {
            return Err(Error::InvalidConfig("coordinate order must be a permutation".into()));
        }
    }
    if order.len() != p - 1 {
        return Err(Error::InvalidConfig("coordinate order must be a permutation".into()));
    }
    let full_order: Vec<usize> = order.iter().map(|&k| offdiag_to_full(node, k)).collect();
    solve_with_order(stats, node, cfg, warm.map(|w| expand(node, p, w)).transpose()?, &full_order)
}

fn solve_with_order(
    stats: &SuffStats,
    node: usize,
    cfg: &SolverConfig,
    warm: Option<DVector<f64>>,
    order: &[usize],
) -> Result<NodeSolveState> {
    cfg.validate()?;
    check_node(stats, node)?;
    if stats.num_samples() == 0 {
        return Err(Error::InvalidConfig("cannot solve without samples".into()));
    }
    let p = stats.num_nodes();
    let gram = stats.gram();
    let lambda = penalty_weights(stats);
    let kappa = gram[(node, node)];
    let floor = cfg.floor_for(kappa);

    let mut w = warm.unwrap_or_else(|| DVector::zeros(p));
    w[node] = 0.0;
    for j in 0..p {
        if gram[(j, j)] <= 0.0 {
            w[j] = 0.0;
        }
    }

    if kappa <= 0.0 {
        return Ok(NodeSolveState {
            node,
            weights: DVector::zeros(p),
            objective: 0.0,
            diagnostics: NodeDiagnostics {
                node: node + 1,
                sweeps: 0,
                objective: 0.0,
                certificate_residual: 0.0,
                certificate_holds: true,
                converged: true,
                monotone: true,
                nnz: 0,
            },
        });
    }

    let mut gw = gram * &w;
    let mut energy = residual_energy(gram, node, &w, &gw);
    let mut objective = energy.max(0.0).sqrt() + lambda.component_mul(&w.abs()).sum();
    let mut sweeps = 0;
    let mut converged = false;
    let mut monotone = true;

    let polish_every = p.max(10);
    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        let signs_before = sign_pattern(&w);
        for &j in order {
            let a = gram[(j, j)];
            if a <= 0.0 {
                continue;
            }
            let old = w[j];
            let b = gram[(j, node)] - (gw[j] - a * old);
            let c = energy - a * old * old + 2.0 * b * old;
            let new = scalar_minimizer(a, b, c, lambda[j]);
            if new != old {
                let delta = new - old;
                gw.axpy(delta, &gram.column(j), 1.0);
                w[j] = new;
                energy = a * new * new - 2.0 * b * new + c;
            }
        }
        // refresh to keep accumulated rounding out of the stopping rule
        gw = gram * &w;
        energy = residual_energy(gram, node, &w, &gw);
        let next = energy.max(0.0).sqrt() + lambda.component_mul(&w.abs()).sum();
        let noise = rounding_floor(gram, node, &w);
        if next > objective * (1.0 + 1e-12) + noise {
            monotone = false;
        }
        let decrease = (objective - next) / objective.max(f64::MIN_POSITIVE);
        objective = next;
        let signs_stable = sign_pattern(&w) == signs_before;
        let try_polish = decrease < cfg.tol || (signs_stable && sweeps % polish_every == 0);
        if try_polish {
            if let Some((pw, pgw, pe, pobj)) = polish(gram, &lambda, node, &w, floor) {
                if pobj <= objective + rounding_floor(gram, node, &w) {
                    w = pw;
                    gw = pgw;
                    energy = pe;
                    objective = pobj.min(objective);
                }
            }
        }
        if try_polish {
            let floor = floor.max(rounding_floor(gram, node, &w));
            let cert = certificate(gram, &lambda, node, &w, &gw, energy.max(0.0).sqrt(), floor);
            if cert.holds {
                converged = true;
                break;
            }
        }
    }
    debug_assert!(monotone, "objective increased during a sweep");

    let floor = floor.max(rounding_floor(gram, node, &w));
    let cert = certificate(gram, &lambda, node, &w, &gw, energy.max(0.0).sqrt(), floor);
    let nnz = w.iter().filter(|v| **v != 0.0).count();
    Ok(NodeSolveState {
        node,
        weights: w,
        objective,
        diagnostics: NodeDiagnostics {
            node: node + 1,
            sweeps,
            objective,
            certificate_residual: cert.residual,
            certificate_holds: cert.holds,
            converged,
            monotone,
            nnz,
        },
    })
}

fn sign_pattern(w: &DVector<f64>) -> Vec<i8> {
    w.iter().map(|&v| if v > 0.0 { 1 } else if v < 0.0 { -1 } else { 0 }).collect()
}

/// Target point on the face given by the support and signs of `w`.
///
/// With `u = G_SS⁻¹ρ_S`, `v = G_SS⁻¹(λ∘s)_S`, `q = (λ∘s)ᵀv` and
/// `e = κ − ρᵀu`, the face objective along `u − t·v` is
/// `√(e + q·t²) + (λ∘s)ᵀu − q·t`, which decreases in `t`. For `q < 1` its
/// stationary point `t² = e/(1 − q)` is the face minimizer; otherwise the
/// objective is unbounded along the ray and a point below `bound` is
/// returned instead.
fn face_target(
    gram: &DMatrix<f64>,
    lambda: &DVector<f64>,
    node: usize,
    w: &DVector<f64>,
    support: &[usize],
    floor: f64,
    bound: f64,
) -> Option<DVector<f64>> {
    let g_ss = gram.select_rows(support).select_columns(support);
    let chol = g_ss.cholesky()?;
    let rho = DVector::from_iterator(support.len(), support.iter().map(|&j| gram[(j, node)]));
    let ls = DVector::from_iterator(support.len(), support.iter().map(|&j| lambda[j] * w[j].signum()));
    let u = chol.solve(&rho);
    let v = chol.solve(&ls);
    let q = ls.dot(&v);
    let e = gram[(node, node)] - rho.dot(&u);
    if !(e > 0.0 && q > 0.0) {
        return None;
    }
    let t = if q < 1.0 {
        (e / (1.0 - q)).sqrt()
    } else {
        let base = ls.dot(&u);
        let face = |t: f64| (e + q * t * t).sqrt() + base - q * t;
        let mut t = (e / q).sqrt();
        let mut tries = 0;
        while face(t) >= bound {
            t *= 2.0;
            tries += 1;
            if tries > 200 {
                return None;
            }
        }
        t
    };
    if !(t > floor) {
        return None;
    }
    let mut cand = DVector::zeros(w.len());
    for (k, &j) in support.iter().enumerate() {
        cand[j] = u[k] - t * v[k];
    }
    Some(cand)
}

/// Active-set refinement of a coordinate-descent iterate. Moves toward the
/// face target, stopping at the first sign change and dropping that
/// coordinate, until the target keeps every sign. The face objective is
/// convex and lower at the target, so every step lowers the objective.
fn polish(
    gram: &DMatrix<f64>,
    lambda: &DVector<f64>,
    node: usize,
    w: &DVector<f64>,
    floor: f64,
) -> Option<(DVector<f64>, DVector<f64>, f64, f64)> {
    let mut cur = w.clone();
    let mut moved = false;
    for _ in 0..=2 * w.len() {
        let support: Vec<usize> = (0..cur.len()).filter(|&j| cur[j] != 0.0).collect();
        if support.is_empty() {
            break;
        }
        let bound = objective_full(gram, lambda, node, &cur);
        let Some(cand) = face_target(gram, lambda, node, &cur, &support, floor, bound) else {
            break;
        };
        moved = true;
        let mut step = 1.0;
        let mut blocking = None;
        for &j in &support {
            if cand[j].signum() != cur[j].signum() || cand[j] == 0.0 {
                let alpha = cur[j] / (cur[j] - cand[j]);
                if alpha < step {
                    step = alpha;
                    blocking = Some(j);
                }
            }
        }
        match blocking {
            None => {
                cur = cand;
                break;
            }
            Some(b) => {
                for &j in &support {
                    cur[j] += step * (cand[j] - cur[j]);
                }
                cur[b] = 0.0;
            }
        }
    }
    if !moved {
        return None;
    }
    let gw = gram * &cur;
    let energy = residual_energy(gram, node, &cur, &gw);
    let obj = energy.max(0.0).sqrt() + lambda.component_mul(&cur.abs()).sum();
    Some((cur, gw, energy, obj))
}

fn assemble(states: &[NodeSolveState]) -> Result<WeightedGraph> {
    let p = states.len();
    let mut weights = DMatrix::zeros(p, p);
    for s in states {
        weights.set_row(s.node, &s.weights.transpose());
    }
    WeightedGraph::new(weights)
}

/// Solves every node from cold starts on shared statistics.
pub fn spice_solve_all(stats: &SuffStats, cfg: &SolverConfig) -> Result<Vec<NodeSolveState>> {
    (0..stats.num_nodes())
        .into_par_iter()
        .map(|i| spice_solve_node(stats, i, cfg, None))
        .collect()
}

/// Learns the sparse graph of a dataset together with per-node diagnostics.
pub fn spice_learn_graph_with_diagnostics(
    data: &Dataset,
    cfg: &SolverConfig,
) -> Result<(WeightedGraph, Vec<NodeDiagnostics>)> {
    if data.num_samples() == 0 {
        return Err(Error::InvalidConfig("dataset has no samples".into()));
    }
    let stats = SuffStats::from_dataset(data);
    let states = spice_solve_all(&stats, cfg)?;
    let graph = assemble(&states)?;
    Ok((graph, states.into_iter().map(|s| s.diagnostics).collect()))
}

/// Learns the sparse graph of a dataset.
pub fn spice_learn_graph(data: &Dataset, cfg: &SolverConfig) -> Result<WeightedGraph> {
    spice_learn_graph_with_diagnostics(data, cfg).map(|(g, _)| g)
}

/// Streaming learner: statistics plus the current solution of every node.
#[derive(Debug, Clone)]
pub struct OnlineSpice {
    stats: SuffStats,
    states: Vec<Option<NodeSolveState>>,
    cfg: SolverConfig,
}

impl OnlineSpice {
    pub fn new(p: usize, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        if p < 2 {
            return Err(Error::TooFewNodes);
        }
        Ok(Self {
            stats: SuffStats::empty(p),
            states: vec![None; p],
            cfg,
        })
    }

    /// Absorbs one snapshot: rank-one statistics update, then warm-started
    /// sweeps on every node in parallel.
    pub fn update(&mut self, x_new: &DVector<f64>) -> Result<()> {
        self.stats.rank_one_update(x_new)?;
        let stats = &self.stats;
        let cfg = &self.cfg;
        let next: Result<Vec<_>> = self
            .states
            .par_iter()
            .enumerate()
            .map(|(i, prev)| {
                let warm = prev.as_ref().map(|s| s.weights.clone());
                let order: Vec<usize> = (0..stats.num_nodes()).filter(|&j| j != i).collect();
                solve_with_order(stats, i, cfg, warm, &order).map(Some)
            })
            .collect();
        self.states = next?;
        Ok(())
    }

    pub fn stats(&self) -> &SuffStats {
        &self.stats
    }

    pub fn num_samples(&self) -> usize {
        self.stats.num_samples()
    }

    /// Current per-node states; empty before the first snapshot.
    pub fn states(&self) -> Vec<&NodeSolveState> {
        self.states.iter().flatten().collect()
    }

    /// The current graph estimate (zero before the first snapshot).
    pub fn graph(&self) -> Result<WeightedGraph> {
        let p = self.stats.num_nodes();
        let mut weights = DMatrix::zeros(p, p);
        for s in self.states.iter().flatten() {
            weights.set_row(s.node, &s.weights.transpose());
        }
        WeightedGraph::new(weights)
    }
}

/// Posterior-mean weights `(X₋ᵢᵀX₋ᵢ + σ² diag(π)⁻¹)⁻¹ X₋ᵢᵀxᵢ` for prior
/// variances `pi` (length P−1) and noise variance `sigma2`.
pub fn ridge_estimate(
    stats: &SuffStats,
    node: usize,
    pi: &DVector<f64>,
    sigma2: f64,
) -> Result<DVector<f64>> {
    check_node(stats, node)?;
    let p = stats.num_nodes();
    if pi.len() + 1 != p {
        return Err(Error::DimensionMismatch {
            expected: p - 1,
            found: pi.len(),
            context: "prior variance vector length",
        });
    }
    if pi.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidConfig("prior variances must be positive".into()));
    }
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidConfig(format!("noise variance must be non-negative, got {sigma2}")));
    }
    let mut system = stats.gram_without(node);
    for k in 0..p - 1 {
        system[(k, k)] += sigma2 / pi[k];
    }
    let rhs = stats.cross(node);
    let chol = system.cholesky().ok_or(Error::SingularSystem)?;
    let w = chol.solve(&rhs);
    if w.iter().all(|v| v.is_finite()) {
        Ok(w)
    } else {
        Err(Error::SingularSystem)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stats_of(rows: usize, cols: usize, data: &[f64]) -> SuffStats {
        SuffStats::from_dataset(&Dataset::new(DMatrix::from_row_slice(rows, cols, data)).unwrap())
    }

    fn random_data(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
        let mix = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rng.random_range(-0.4..0.4) });
        Dataset::new(z * mix).unwrap()
    }

    #[test]
    fn objective_at_zero_is_target_norm() {
        let s = stats_of(3, 3, &[1.0, 2.0, 0.5, -1.0, 0.0, 2.0, 3.0, 1.0, 1.0]);
        let obj = sqrt_lasso_objective(&s, 0, &DVector::zeros(2)).unwrap();
        assert!((obj - 11.0_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn objective_exact_fit_leaves_penalty() {
        // x1 = (1, 0), x2 = (1, 0), w = 1 fits exactly
        let s = stats_of(2, 2, &[1.0, 1.0, 0.0, 0.0]);
        let obj = sqrt_lasso_objective(&s, 0, &DVector::from_element(1, 1.0)).unwrap();
        assert!((obj - 1.0 / 2.0_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn objective_matches_raw_data() {
        let d = random_data(40, 5, 1);
        let s = SuffStats::from_dataset(&d);
        let x = d.samples();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for i in 0..5 {
            let w = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
            let cols: Vec<usize> = (0..5).filter(|&j| j != i).collect();
            let xm = x.select_columns(&cols);
            let resid = x.column(i) - &xm * &w;
            let n = 40.0_f64;
            let penalty: f64 = cols
                .iter()
                .zip(w.iter())
                .map(|(&j, wj)| x.column(j).norm() / n.sqrt() * wj.abs())
                .sum();
            let direct = resid.norm() + penalty;
            let via_stats = sqrt_lasso_objective(&s, i, &w).unwrap();
            assert!((direct - via_stats).abs() <= 1e-10 * direct);
        }
    }

    #[test]
    fn objective_rejects_wrong_length() {
        let s = stats_of(1, 3, &[1.0, 2.0, 3.0]);
        assert!(matches!(
            sqrt_lasso_objective(&s, 0, &DVector::zeros(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn coordinate_update_closed_forms() {
        assert_eq!(coordinate_update(2.0, 3.0, 5.0, 0.0).unwrap(), 1.5);
        for lambda in [0.0, 0.3, 1.0, 10.0] {
            assert_eq!(coordinate_update(2.0, 0.0, 5.0, lambda).unwrap(), 0.0);
        }
        // λ² ≥ a forces zero
        assert_eq!(coordinate_update(1.0, 0.9, 1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn coordinate_update_rejects_bad_quadratics() {
        assert!(matches!(coordinate_update(0.0, 1.0, 1.0, 0.1), Err(Error::InvalidQuadratic { .. })));
        assert!(matches!(coordinate_update(1.0, 2.0, 1.0, 0.1), Err(Error::InvalidQuadratic { .. })));
        assert!(coordinate_update(1.0, 1.0, 1.0 - 1e-15, 0.1).is_ok());
    }

    #[test]
    fn coordinate_update_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let a: f64 = rng.random_range(0.1..5.0);
            let b: f64 = rng.random_range(-3.0..3.0);
            let c = b * b / a + rng.random_range(0.0..2.0);
            let lambda = rng.random_range(0.0..a.sqrt());
            let w = coordinate_update(a, b, c, lambda).unwrap();
            let h = |w: f64| (a * w * w - 2.0 * b * w + c).max(0.0).sqrt() + lambda * w.abs();
            let eps = 1e-6 * (1.0 + w.abs());
            assert!(h(w) <= h(w + eps) + 1e-12 && h(w) <= h(w - eps) + 1e-12);
        }
    }

    #[test]
    fn orthogonal_target_gives_zero_row() {
        // column 0 orthogonal to columns 1 and 2
        let s = stats_of(4, 3, &[1.0, 1.0, 0.0, -1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, -1.0]);
        let st = spice_solve_node(&s, 0, &SolverConfig::default(), None).unwrap();
        assert!(st.weights().iter().all(|w| *w == 0.0));
        assert!(st.diagnostics().certificate_holds);
    }

    #[test]
    fn two_node_problem_matches_scalar_update() {
        let d = random_data(30, 2, 9);
        let s = SuffStats::from_dataset(&d);
        let g = s.gram();
        let lambda = (g[(1, 1)] / 30.0).sqrt();
        let expected = coordinate_update(g[(1, 1)], g[(1, 0)], g[(0, 0)], lambda).unwrap();
        let st = spice_solve_node(&s, 0, &SolverConfig::default(), None).unwrap();
        assert!((st.weights()[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn zero_target_returns_immediately() {
        let s = stats_of(2, 3, &[0.0, 1.0, 2.0, 0.0, 3.0, -1.0]);
        let st = spice_solve_node(&s, 0, &SolverConfig::default(), None).unwrap();
        assert_eq!(st.diagnostics().sweeps, 0);
        assert_eq!(st.weights(), DVector::zeros(2));
    }

    #[test]
    fn zero_norm_columns_are_pinned() {
        let s = stats_of(3, 3, &[1.0, 0.0, 1.1, 2.0, 0.0, 1.9, -1.0, 0.0, -1.2]);
        let warm = DVector::from_vec(vec![5.0, 0.0]);
        let st = spice_solve_node(&s, 0, &SolverConfig::default(), Some(&warm)).unwrap();
        assert_eq!(st.weights()[0], 0.0);
        assert!(st.weights()[1] > 0.0);
    }

    #[test]
    fn sweeps_are_monotone_and_certified() {
        for seed in 0..10 {
            let d = random_data(60, 6, seed);
            let s = SuffStats::from_dataset(&d);
            for i in 0..6 {
                let st = spice_solve_node(&s, i, &SolverConfig::default(), None).unwrap();
                let diag = st.diagnostics();
                assert!(diag.monotone && diag.converged && diag.certificate_holds, "{diag:?}");
                let obj = sqrt_lasso_objective(&s, i, &st.weights()).unwrap();
                assert!((obj - st.objective()).abs() <= 1e-10 * obj);
            }
        }
    }

    #[test]
    fn coordinate_order_does_not_matter() {
        let d = random_data(50, 6, 4);
        let s = SuffStats::from_dataset(&d);
        let cfg = SolverConfig::default();
        for i in 0..6 {
            let fwd = spice_solve_node(&s, i, &cfg, None).unwrap();
            let rev = spice_solve_node_ordered(&s, i, &cfg, None, &[4, 3, 2, 1, 0]).unwrap();
            let mixed = spice_solve_node_ordered(&s, i, &cfg, None, &[2, 0, 4, 1, 3]).unwrap();
            for other in [rev, mixed] {
                assert!((fwd.objective() - other.objective()).abs() <= 1e-6 * fwd.objective());
            }
        }
        assert!(spice_solve_node_ordered(&s, 0, &cfg, None, &[0, 0, 1, 2, 3]).is_err());
        assert!(spice_solve_node_ordered(&s, 0, &cfg, None, &[0, 1, 2]).is_err());
    }

    #[test]
    fn single_snapshot_is_well_defined() {
        let d = Dataset::new(DMatrix::from_row_slice(1, 4, &[1.0, -2.0, 0.5, 3.0])).unwrap();
        let s = SuffStats::from_dataset(&d);
        for i in 0..4 {
            let st = spice_solve_node(&s, i, &SolverConfig::default(), None).unwrap();
            let at_zero = sqrt_lasso_objective(&s, i, &DVector::zeros(3)).unwrap();
            assert!(st.objective() <= at_zero);
            assert!(st.weights().iter().all(|w| w.is_finite()));
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let s = stats_of(1, 2, &[1.0, 2.0]);
        for cfg in [
            SolverConfig { tol: 0.0, ..Default::default() },
            SolverConfig { max_sweeps: 0, ..Default::default() },
            SolverConfig { residual_floor: Some(-1.0), ..Default::default() },
        ] {
            assert!(matches!(spice_solve_node(&s, 0, &cfg, None), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn ridge_limits() {
        let d = random_data(40, 4, 6);
        let s = SuffStats::from_dataset(&d);
        for i in 0..4 {
            let ls = s.gram_without(i).cholesky().unwrap().solve(&s.cross(i));
            let r0 = ridge_estimate(&s, i, &DVector::from_element(3, 1.0), 0.0).unwrap();
            assert!((&r0 - &ls).amax() < 1e-10);
            let wide = ridge_estimate(&s, i, &DVector::from_element(3, 1e12), 1.0).unwrap();
            assert!((&wide - &ls).amax() < 1e-4);
            let narrow = ridge_estimate(&s, i, &DVector::from_element(3, 1e-12), 1.0).unwrap();
            assert!(narrow.amax() < 1e-6);
        }
    }

    #[test]
    fn ridge_singular_gram() {
        let s = stats_of(1, 3, &[1.0, 2.0, 3.0]);
        assert!(matches!(
            ridge_estimate(&s, 0, &DVector::from_element(2, 1.0), 0.0),
            Err(Error::SingularSystem)
        ));
        assert!(ridge_estimate(&s, 0, &DVector::from_element(2, 1.0), 0.5).is_ok());
    }

    #[test]
    fn online_matches_batch_on_small_stream() {
        let d = random_data(200, 5, 8);
        let cfg = SolverConfig::default();
        let mut online = OnlineSpice::new(5, cfg).unwrap();
        assert_eq!(online.graph().unwrap(), WeightedGraph::zeros(5).unwrap());
        for n in 0..200 {
            online.update(&d.snapshot(n)).unwrap();
        }
        let batch = spice_learn_graph(&d, &cfg).unwrap();
        assert!((online.graph().unwrap().weights() - batch.weights()).amax() < 1e-4);
        assert!(matches!(
            online.update(&DVector::zeros(4)),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
