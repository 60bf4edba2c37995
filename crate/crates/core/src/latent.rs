//! PCA of hidden states, cluster-quality scores, and node-removal curves.
//!
//! Davies-Bouldin is reported in its usual orientation: lower means better
//! separated clusters. Silhouette and Calinski-Harabasz grow with separation.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infotheory::NodeOrdering;
use crate::recnet::{TraceTensor, HIDDEN};
use crate::taskgen::{Concept, ConceptLabels};

/// Nodes removed at most in a removal curve (two always survive).
pub const MAX_REMOVED: usize = HIDDEN - 2;

#[derive(Clone, Debug, PartialEq)]
pub struct Pca2 {
    pub projected: Vec<[f64; 2]>,
    /// `dims × 2`: column `j` is the `j`-th principal direction.
    pub components: Vec<[f64; 2]>,
    pub explained_variance: [f64; 2],
}

/// Projects `rows × dims` points (row-major) onto their top two principal axes.
/// Each axis is signed so its largest-magnitude entry is positive.
pub fn pca2(points: &[f64], dims: usize) -> Result<Pca2> {
    if dims < 2 {
        return Err(Error::invalid(format!("PCA needs at least 2 dimensions, got {dims}")));
    }
    if !points.len().is_multiple_of(dims) {
        return Err(Error::invalid("point buffer is not a whole number of rows"));
    }
    let rows = points.len() / dims;
    if rows < 3 {
        return Err(Error::invalid(format!("PCA needs at least 3 points, got {rows}")));
    }
    let mut mean = vec![0.0; dims];
    for r in 0..rows {
        for (m, &v) in mean.iter_mut().zip(&points[r * dims..(r + 1) * dims]) {
            *m += v / rows as f64;
        }
    }
    let centered = DMatrix::from_fn(rows, dims, |r, c| points[r * dims + c] - mean[c]);
    let cov = (centered.transpose() * &centered) / (rows - 1) as f64;
    if cov.trace() <= 0.0 {
        return Err(Error::DegenerateData("points have zero total variance".into()));
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dims).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut components = vec![[0.0; 2]; dims];
    let mut explained_variance = [0.0; 2];
    for j in 0..2 {
        let col = eig.eigenvectors.column(order[j]);
        let mut pivot = 0;
        for i in 1..dims {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..dims {
            components[i][j] = sign * col[i];
        }
        explained_variance[j] = eig.eigenvalues[order[j]].max(0.0);
    }
    let projected = (0..rows)
        .map(|r| {
            let mut p = [0.0; 2];
            for (j, pj) in p.iter_mut().enumerate() {
                *pj = (0..dims).map(|c| centered[(r, c)] * components[c][j]).sum();
            }
            p
        })
        .collect();
    Ok(Pca2 {
        projected,
        components,
        explained_variance,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterScores {
    pub silhouette: f64,
    pub davies_bouldin: f64,
    pub calinski_harabasz: f64,
}

impl ClusterScores {
    pub const NAN: ClusterScores = ClusterScores {
        silhouette: f64::NAN,
        davies_bouldin: f64::NAN,
        calinski_harabasz: f64::NAN,
    };
}

fn dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn group(labels: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut distinct: Vec<usize> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::invalid("cluster scores need at least two label values"));
    }
    let idx = labels.iter().map(|l| distinct.binary_search(l).expect("label present")).collect();
    let mut sizes = vec![0; distinct.len()];
    for &i in &idx {
        sizes[i] += 1;
    }
    Ok((idx, sizes))
}

/// Mean silhouette over all points. Points in singleton clusters score 0.
pub fn silhouette(points: &[[f64; 2]], labels: &[usize]) -> Result<f64> {
    if points.len() != labels.len() {
        return Err(Error::invalid("one label per point required"));
    }
    let (idx, sizes) = group(labels)?;
    let k = sizes.len();
    let total: f64 = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let mut sums = vec![0.0; k];
            for (j, p) in points.iter().enumerate() {
                sums[idx[j]] += dist(&points[i], p);
            }
            let own = idx[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m == 0.0 {
                0.0
            } else {
                (b - a) / m
            }
        })
        .sum();
    Ok(total / points.len() as f64)
}

/// Silhouette, Davies-Bouldin and Calinski-Harabasz scores of a labeling.
pub fn cluster_scores(points: &[[f64; 2]], labels: &[usize]) -> Result<ClusterScores> {
    let sil = silhouette(points, labels)?;
    let (idx, sizes) = group(labels)?;
    let k = sizes.len();
    let n = points.len();

    let mut centroids = vec![[0.0; 2]; k];
    for (p, &c) in points.iter().zip(&idx) {
        centroids[c][0] += p[0] / sizes[c] as f64;
        centroids[c][1] += p[1] / sizes[c] as f64;
    }
    let mut overall = [0.0; 2];
    for p in points {
        overall[0] += p[0] / n as f64;
        overall[1] += p[1] / n as f64;
    }

    let mut spread = vec![0.0; k];
    let mut within = 0.0;
    for (p, &c) in points.iter().zip(&idx) {
        let d = dist(p, &centroids[c]);
        spread[c] += d / sizes[c] as f64;
        within += d * d;
    }
    let between: f64 = (0..k).map(|c| sizes[c] as f64 * dist(&centroids[c], &overall).powi(2)).sum();

    let mut centroid_dist = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            centroid_dist[i][j] = dist(&centroids[i], &centroids[j]);
        }
    }
    let davies_bouldin = if spread.iter().all(|&s| s == 0.0)
        || centroid_dist.iter().flatten().all(|&d| d == 0.0)
    {
        0.0
    } else {
        (0..k)
            .map(|i| {
                (0..k)
                    .filter(|&j| j != i)
                    .map(|j| {
                        let d = centroid_dist[i][j];
                        if d == 0.0 {
                            0.0
                        } else {
                            (spread[i] + spread[j]) / d
                        }
                    })
                    .fold(0.0, f64::max)
            })
            .sum::<f64>()
            / k as f64
    };
    let calinski_harabasz = if within == 0.0 {
        1.0
    } else {
        (between / (k - 1) as f64) / (within / (n - k) as f64)
    };
    Ok(ClusterScores {
        silhouette: sil,
        davies_bouldin,
        calinski_harabasz,
    })
}

/// Binary labels (0/1) of one concept.
pub fn concept_labels(labels: &[ConceptLabels], concept: Concept) -> Vec<usize> {
    labels.iter().map(|l| usize::from(l.get(concept) > 0)).collect()
}

/// Label-combination index (0..8) of each episode.
pub fn state_labels(labels: &[ConceptLabels]) -> Vec<usize> {
    labels.iter().map(ConceptLabels::state).collect()
}

/// Hidden states at step `time` restricted to the nodes not in `removed`.
pub fn surviving_states(trace: &TraceTensor, time: usize, removed: &[usize]) -> (Vec<f64>, usize) {
    let keep: Vec<usize> = (0..HIDDEN).filter(|n| !removed.contains(n)).collect();
    let mut out = Vec::with_capacity(trace.episodes * keep.len());
    for e in 0..trace.episodes {
        let h = trace.hidden_at(e, time);
        out.extend(keep.iter().map(|&n| h[n]));
    }
    (out, keep.len())
}

/// PCA of the surviving nodes, scored against `labels`. Degenerate projections
/// (no variance left) score NaN.
pub fn projected_scores(trace: &TraceTensor, time: usize, removed: &[usize], labels: &[usize]) -> Result<ClusterScores> {
    let (states, dims) = surviving_states(trace, time, removed);
    match pca2(&states, dims) {
        Ok(p) => cluster_scores(&p.projected, labels),
        Err(Error::DegenerateData(_)) => Ok(ClusterScores::NAN),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemovalRow {
    pub removed: usize,
    pub scores: ClusterScores,
}

/// Scores after removing the first `m` nodes of `order`, for `m = 0..=10`.
pub fn removal_curve_with_order(
    trace: &TraceTensor,
    time: usize,
    labels: &[ConceptLabels],
    order: &[usize],
    concept: Concept,
) -> Result<Vec<RemovalRow>> {
    if time >= trace.steps || labels.len() != trace.episodes {
        return Err(Error::invalid("removal curve needs a step inside the trace and one label per episode"));
    }
    if order.len() < MAX_REMOVED {
        return Err(Error::invalid("removal order is too short"));
    }
    let target = concept_labels(labels, concept);
    (0..=MAX_REMOVED)
        .map(|m| {
            Ok(RemovalRow {
                removed: m,
                scores: projected_scores(trace, time, &order[..m], &target)?,
            })
        })
        .collect()
}

/// Removal curve following the greedy order, least relaying node first.
pub fn removal_curve(
    trace: &TraceTensor,
    time: usize,
    labels: &[ConceptLabels],
    ordering: &NodeOrdering,
    concept: Concept,
) -> Result<Vec<RemovalRow>> {
    removal_curve_with_order(trace, time, labels, &ordering.removal_order, concept)
}

/// Uniformly random node permutations, reproducible from `seed`.
pub fn random_orders(n_samples: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_samples)
        .map(|_| {
            let mut o: Vec<usize> = (0..HIDDEN).collect();
            o.shuffle(&mut rng);
            o
        })
        .collect()
}

/// Removal curves under random orders, averaged per removal count (NaN rows skipped).
pub fn random_removal_baseline(
    trace: &TraceTensor,
    time: usize,
    labels: &[ConceptLabels],
    concept: Concept,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<RemovalRow>> {
    if n_samples == 0 {
        return Err(Error::invalid("need at least one random order"));
    }
    let curves = random_orders(n_samples, seed)
        .par_iter()
        .map(|order| removal_curve_with_order(trace, time, labels, order, concept))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..=MAX_REMOVED)
        .map(|m| {
            let valid: Vec<&ClusterScores> = curves
                .iter()
                .map(|c| &c[m].scores)
                .filter(|s| s.silhouette.is_finite())
                .collect();
            let mean = |f: fn(&ClusterScores) -> f64| valid.iter().map(|s| f(s)).sum::<f64>() / valid.len() as f64;
            let scores = if valid.is_empty() {
                ClusterScores::NAN
            } else {
                ClusterScores {
                    silhouette: mean(|s| s.silhouette),
                    davies_bouldin: mean(|s| s.davies_bouldin),
                    calinski_harabasz: mean(|s| s.calinski_harabasz),
                }
            };
            RemovalRow { removed: m, scores }
        })
        .collect())
}

/// Mean silhouette over `n_perm` random relabelings of the same points.
pub fn shuffled_silhouette(points: &[[f64; 2]], labels: &[usize], n_perm: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let perms: Vec<Vec<usize>> = (0..n_perm)
        .map(|_| {
            let mut l = labels.to_vec();
            l.shuffle(&mut rng);
            l
        })
        .collect();
    let total = perms.iter().map(|l| silhouette(points, l)).sum::<Result<f64>>()?;
    Ok(total / n_perm as f64)
}

/// Appends `concept,removed,order_kind,silhouette,davies_bouldin,calinski_harabasz` rows.
pub fn write_removal_rows<W: Write>(
    w: &mut csv::Writer<W>,
    concept: Concept,
    order_kind: &str,
    rows: &[RemovalRow],
) -> Result<()> {
    for r in rows {
        w.write_record([
            concept.to_string(),
            r.removed.to_string(),
            order_kind.to_string(),
            r.scores.silhouette.to_string(),
            r.scores.davies_bouldin.to_string(),
            r.scores.calinski_harabasz.to_string(),
        ])?;
    }
    Ok(())
}

pub const REMOVAL_HEADER: [&str; 6] = [
    "concept",
    "removed",
    "order_kind",
    "silhouette",
    "davies_bouldin",
    "calinski_harabasz",
];

/// 2-D point dump `episode_id,pc1,pc2,state_label`.
pub fn write_points_csv<W: Write>(pca: &Pca2, labels: &[ConceptLabels], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["episode_id", "pc1", "pc2", "state_label"])?;
    for (i, (p, l)) in pca.projected.iter().zip(labels).enumerate() {
        w.write_record([i.to_string(), p[0].to_string(), p[1].to_string(), l.state().to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<points csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_aligned_components() {
        // var(x) = 4 * var(y), zero covariance
        let pts = [2.0, 1.0, -2.0, 1.0, 2.0, -1.0, -2.0, -1.0];
        let p = pca2(&pts, 2).unwrap();
        assert!((p.components[0][0].abs() - 1.0).abs() < 1e-12);
        assert!(p.components[1][0].abs() < 1e-12);
        assert!((p.components[1][1].abs() - 1.0).abs() < 1e-12);
        assert!(p.explained_variance[0] > p.explained_variance[1]);
    }

    #[test]
    fn duplicated_columns_double_variance() {
        let base = [3.0, 0.5, -1.0, 0.2, 0.0, -0.9, -2.0, 0.1, 0.7, 0.3];
        let dup: Vec<f64> = base.chunks(2).flat_map(|r| [r[0], r[1], r[0], r[1]]).collect();
        let a = pca2(&base, 2).unwrap();
        let b = pca2(&dup, 4).unwrap();
        for j in 0..2 {
            assert!((b.explained_variance[j] - 2.0 * a.explained_variance[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn pca_errors() {
        assert!(matches!(pca2(&[1.0, 2.0, 3.0], 1), Err(Error::InvalidArgument(_))));
        assert!(matches!(pca2(&[1.0; 8], 2), Err(Error::DegenerateData(_))));
        assert!(pca2(&[1.0, 2.0, 3.0, 4.0], 2).is_err());
    }

    #[test]
    fn separated_clusters() {
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            let e = i as f64 * 1e-3;
            pts.push([e, -e]);
            labels.push(0);
            pts.push([100.0 + e, 100.0 - e]);
            labels.push(1);
        }
        let s = cluster_scores(&pts, &labels).unwrap();
        assert!(s.silhouette > 0.999);
        assert!(s.davies_bouldin < 1e-3);
        assert!(s.calinski_harabasz > 1e6);
    }

    #[test]
    fn single_class_rejected() {
        assert!(cluster_scores(&[[0.0, 0.0], [1.0, 1.0]], &[1, 1]).is_err());
    }

    #[test]
    fn random_labels_on_one_blob() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pts: Vec<[f64; 2]> = (0..400)
            .map(|_| [rand::Rng::gen_range(&mut rng, -1.0..1.0), rand::Rng::gen_range(&mut rng, -1.0..1.0)])
            .collect();
        let labels: Vec<usize> = (0..400).map(|_| rand::Rng::gen_range(&mut rng, 0..2)).collect();
        assert!(silhouette(&pts, &labels).unwrap().abs() < 0.05);
    }

    #[test]
    fn random_orders_are_permutations() {
        for o in random_orders(5, 3) {
            let mut s = o.clone();
            s.sort();
            assert_eq!(s, (0..HIDDEN).collect::<Vec<_>>());
        }
        assert_eq!(random_orders(3, 9), random_orders(3, 9));
    }
}
