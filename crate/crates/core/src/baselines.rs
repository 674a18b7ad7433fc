//! Reference estimators: unpenalized least squares and fixed kernel graphs
//! built from node geometry.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{Dataset, WeightedGraph};
use crate::stats::SuffStats;

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Eigenvalues of a Gram matrix below this fraction of the largest are
/// dropped by the least-squares pseudo-inverse.
pub const LS_PINV_CUTOFF: f64 = 1e-10;

/// Least-squares graph plus the rows whose normal equations were singular
/// and solved in the minimum-norm sense.
#[derive(Debug, Clone, PartialEq)]
pub struct LsFit {
    pub graph: WeightedGraph,
    /// 0-based rows that needed the pseudo-inverse.
    pub singular_rows: Vec<usize>,
}

fn pinv_solve(gram: DMatrix<f64>, rhs: &DVector<f64>) -> (DVector<f64>, bool) {
    let eig = gram.symmetric_eigen();
    let top = eig.eigenvalues.amax();
    let cutoff = LS_PINV_CUTOFF * top;
    let mut singular = !(top > 0.0);
    let proj = eig.eigenvectors.tr_mul(rhs);
    let mut scaled = DVector::zeros(proj.len());
    for k in 0..proj.len() {
        let ev = eig.eigenvalues[k];
        if ev > cutoff && top > 0.0 {
            scaled[k] = proj[k] / ev;
        } else {
            singular = true;
        }
    }
    (&eig.eigenvectors * scaled, singular)
}

/// Row-wise least squares on the other nodes, minimum-norm when the Gram
/// matrix is (numerically) singular.
pub fn ls_learn_graph_with_diagnostics(data: &Dataset) -> Result<LsFit> {
    let p = data.num_nodes();
    if p < 2 {
        return Err(Error::TooFewNodes);
    }
    let stats = SuffStats::from_dataset(data);
    let rows: Vec<(DVector<f64>, bool)> = (0..p)
        .into_par_iter()
        .map(|i| pinv_solve(stats.gram_without(i), &stats.cross(i)))
        .collect();
    let singular_rows = rows
        .iter()
        .enumerate()
        .filter_map(|(i, (_, s))| s.then_some(i))
        .collect();
    let rows: Vec<DVector<f64>> = rows.into_iter().map(|(w, _)| w).collect();
    Ok(LsFit {
        graph: WeightedGraph::from_offdiag_rows(&rows)?,
        singular_rows,
    })
}

pub fn ls_learn_graph(data: &Dataset) -> Result<WeightedGraph> {
    ls_learn_graph_with_diagnostics(data).map(|fit| fit.graph)
}

/// Latitude/longitude in degrees for every node.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoCoordinates {
    names: Vec<String>,
    lat_lon: Vec<(f64, f64)>,
}

impl GeoCoordinates {
    pub fn new(names: Vec<String>, lat_lon: Vec<(f64, f64)>) -> Result<Self> {
        if names.len() != lat_lon.len() {
            return Err(Error::DimensionMismatch {
                expected: lat_lon.len(),
                found: names.len(),
                context: "coordinate names",
            });
        }
        for (k, &(lat, lon)) in lat_lon.iter().enumerate() {
            if !((-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon)) {
                return Err(Error::InvalidConfig(format!(
                    "node {}: ({lat}, {lon}) is not a valid latitude/longitude",
                    k + 1
                )));
            }
        }
        Ok(Self { names, lat_lon })
    }

    pub fn from_degrees(lat_lon: Vec<(f64, f64)>) -> Result<Self> {
        let names = (1..=lat_lon.len()).map(|k| k.to_string()).collect();
        Self::new(names, lat_lon)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.lat_lon.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lat_lon.is_empty()
    }

    pub fn lat_lon(&self) -> &[(f64, f64)] {
        &self.lat_lon
    }
}

/// Great-circle distance in kilometres (haversine).
pub fn haversine_km((lat1, lon1): (f64, f64), (lat2, lon2): (f64, f64)) -> f64 {
    let (phi1, phi2) = (lat1.to_radians(), lat2.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (lon2 - lon1).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// One feature vector per node, all of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVectors {
    rows: DMatrix<f64>,
}

impl FeatureVectors {
    /// `rows` holds node `j`'s vector in row `j`.
    pub fn new(rows: DMatrix<f64>) -> Result<Self> {
        if let Some(k) = rows.iter().position(|v| !v.is_finite()) {
            let n = rows.nrows();
            return Err(Error::NonFinite(k % n, k / n));
        }
        Ok(Self { rows })
    }

    pub fn num_nodes(&self) -> usize {
        self.rows.nrows()
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }
}

/// `w_ij = exp(−d²_ij / Σ_{k≠l} d²_kl)` off the diagonal. The normalizer
/// sums over ordered pairs, so every unordered pair is counted twice.
pub fn kernel_graph(dist_sq: &DMatrix<f64>) -> Result<WeightedGraph> {
    let p = dist_sq.nrows();
    if p < 2 {
        return Err(Error::TooFewNodes);
    }
    let mut total = 0.0;
    for i in 0..p {
        for j in 0..p {
            if i != j {
                total += dist_sq[(i, j)];
            }
        }
    }
    if !(total > 0.0) {
        return Err(Error::DegenerateGeometry);
    }
    let weights = DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            0.0
        } else {
            (-dist_sq[(i, j)] / total).exp()
        }
    });
    WeightedGraph::new(weights)
}

pub fn geodesic_graph(coords: &GeoCoordinates) -> Result<WeightedGraph> {
    let p = coords.len();
    if p < 2 {
        return Err(Error::TooFewNodes);
    }
    let ll = coords.lat_lon();
    let dist_sq = DMatrix::from_fn(p, p, |i, j| haversine_km(ll[i], ll[j]).powi(2));
    kernel_graph(&dist_sq)
}

pub fn diffusion_graph(feats: &FeatureVectors) -> Result<WeightedGraph> {
    let p = feats.num_nodes();
    if p < 2 {
        return Err(Error::TooFewNodes);
    }
    let r = feats.rows();
    let dist_sq = DMatrix::from_fn(p, p, |i, j| (r.row(i) - r.row(j)).norm_squared());
    kernel_graph(&dist_sq)
}
