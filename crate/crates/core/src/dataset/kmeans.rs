//! Lloyd's k-means on per-record summary vectors.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DatasetError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub max_iter: usize,
    /// Independent initializations; the lowest-SSE run is kept.
    pub restarts: usize,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams {
            k: 3,
            max_iter: 100,
            restarts: 10,
        }
    }
}

/// A cluster of cohort records. `members` are indices into the cohort.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: usize,
    pub centroid: Vec<f64>,
    pub members: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub clusters: Vec<Cluster>,
    pub sse: f64,
    pub iterations: usize,
    /// SSE after every assignment step of the kept run.
    pub sse_trace: Vec<f64>,
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lower index.
pub(crate) fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

fn mean_of(points: &[Vec<f64>], members: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; points[0].len()];
    for &m in members {
        for (o, x) in out.iter_mut().zip(&points[m]) {
            *o += x;
        }
    }
    let n = members.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

fn sse_of(points: &[Vec<f64>], assign: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(assign)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum()
}

/// Clusters `points` into at most `k` groups.
///
/// Degenerate inputs: fewer points than `k` gives one singleton per point;
/// fewer distinct points than `k` clusters the distinct values only.
/// Clusters are returned ordered by their first member, with ids `0..`.
pub fn cluster_cohort<R: Rng + ?Sized>(
    points: &[Vec<f64>],
    params: &KMeansParams,
    rng: &mut R,
) -> Result<KMeansResult, DatasetError> {
    if points.is_empty() {
        return Err(DatasetError::Contract("cannot cluster an empty cohort".into()));
    }
    if params.k == 0 {
        return Err(DatasetError::Contract("k must be at least 1".into()));
    }
    let dim = points[0].len();
    if dim == 0 {
        return Err(DatasetError::Dimension);
    }
    if points.iter().any(|p| p.len() != dim) {
        return Err(DatasetError::Contract("embedding dimensions differ within a cohort".into()));
    }

    let n = points.len();
    if n < params.k {
        let clusters = (0..n)
            .map(|i| Cluster {
                id: i,
                centroid: points[i].clone(),
                members: vec![i],
            })
            .collect();
        return Ok(KMeansResult {
            clusters,
            sse: 0.0,
            iterations: 0,
            sse_trace: vec![0.0],
        });
    }

    let mut distinct: Vec<usize> = Vec::new();
    for i in 0..n {
        if !distinct.iter().any(|&j| points[j] == points[i]) {
            distinct.push(i);
        }
    }
    let k = params.k.min(distinct.len());

    let mut best: Option<KMeansResult> = None;
    for _ in 0..params.restarts.max(1) {
        let init: Vec<Vec<f64>> = index::sample(rng, distinct.len(), k)
            .into_iter()
            .map(|i| points[distinct[i]].clone())
            .collect();
        let run = lloyd(points, init, params.max_iter);
        if best.as_ref().is_none_or(|b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iter: usize) -> KMeansResult {
    let k = centroids.len();
    let mut assign: Vec<usize> = vec![usize::MAX; points.len()];
    let mut trace = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iter.max(1) {
        iterations += 1;
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        let changed = next != assign;
        assign = next;

        // an emptied cluster takes the point farthest from its centroid
        for c in 0..k {
            if assign.contains(&c) {
                continue;
            }
            let mut sizes = vec![0usize; k];
            assign.iter().for_each(|&a| sizes[a] += 1);
            let far = (0..points.len())
                .filter(|&i| sizes[assign[i]] > 1)
                .max_by(|&a, &b| {
                    let da = sq_dist(&points[a], &centroids[assign[a]]);
                    let db = sq_dist(&points[b], &centroids[assign[b]]);
                    da.total_cmp(&db).then(b.cmp(&a))
                });
            if let Some(i) = far {
                assign[i] = c;
                centroids[c] = points[i].clone();
            }
        }
        trace.push(sse_of(points, &assign, &centroids));

        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<usize> = (0..points.len()).filter(|&i| assign[i] == c).collect();
            if !members.is_empty() {
                *centroid = mean_of(points, &members);
            }
        }
        if !changed {
            break;
        }
    }

    let sse = sse_of(points, &assign, &centroids);
    let mut clusters: Vec<Cluster> = (0..k)
        .map(|c| Cluster {
            id: c,
            centroid: centroids[c].clone(),
            members: (0..points.len()).filter(|&i| assign[i] == c).collect(),
        })
        .filter(|c| !c.members.is_empty())
        .collect();
    clusters.sort_by_key(|c| c.members[0]);
    for (i, c) in clusters.iter_mut().enumerate() {
        c.id = i;
    }
    KMeansResult {
        clusters,
        sse,
        iterations,
        sse_trace: trace,
    }
}
