//! Fast Point Feature Histograms (33-dimensional) over a radius
//! neighborhood, used to seed global registration correspondences.

use nalgebra::Vector3;

use super::kdtree::KdTree;
use super::PointCloud;

pub const FPFH_BINS: usize = 11;
pub const FPFH_DIM: usize = 3 * FPFH_BINS;

/// Compute per-point FPFH descriptors. The cloud must carry normals.
pub fn fpfh_features(cloud: &PointCloud, tree: &KdTree, radius: f64) -> Vec<[f64; FPFH_DIM]> {
    let normals = cloud
        .normals
        .as_ref()
        .expect("fpfh_features requires normals");
    let n = cloud.len();
    let mut neighborhoods: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    for (i, p) in cloud.points.iter().enumerate() {
        let mut nb: Vec<(usize, f64)> = tree
            .within_radius(p, radius)
            .into_iter()
            .filter(|&j| j != i)
            .map(|j| (j, (cloud.points[j] - p).norm()))
            .collect();
        nb.sort_by(|a, b| a.0.cmp(&b.0));
        neighborhoods.push(nb);
    }

    // Simplified point feature histograms.
    let mut spfh = vec![[0.0f64; FPFH_DIM]; n];
    for i in 0..n {
        let nb = &neighborhoods[i];
        if nb.is_empty() {
            continue;
        }
        let mut used = 0usize;
        for &(j, dist) in nb {
            if let Some((alpha, phi, theta)) =
                pair_features(&cloud.points[i], &normals[i], &cloud.points[j], &normals[j], dist)
            {
                spfh[i][bin_unit(alpha)] += 1.0;
                spfh[i][FPFH_BINS + bin_unit(phi)] += 1.0;
                spfh[i][2 * FPFH_BINS + bin_angle(theta)] += 1.0;
                used += 1;
            }
        }
        if used > 0 {
            for v in spfh[i].iter_mut() {
                *v /= used as f64;
            }
        }
    }

    // Weighted neighbor pooling.
    let mut fpfh = vec![[0.0f64; FPFH_DIM]; n];
    for i in 0..n {
        let nb = &neighborhoods[i];
        let mut acc = spfh[i];
        if !nb.is_empty() {
            let k = nb.len() as f64;
            for &(j, dist) in nb {
                let w = 1.0 / dist.max(1e-9) / k;
                for b in 0..FPFH_DIM {
                    acc[b] += w * spfh[j][b];
                }
            }
        }
        // Per-block normalization for scale invariance across densities.
        for block in 0..3 {
            let s: f64 = acc[block * FPFH_BINS..(block + 1) * FPFH_BINS].iter().sum();
            if s > 1e-12 {
                for v in acc[block * FPFH_BINS..(block + 1) * FPFH_BINS].iter_mut() {
                    *v /= s;
                }
            }
        }
        fpfh[i] = acc;
    }
    fpfh
}

/// Darboux-frame pair features (alpha, phi, theta).
fn pair_features(
    p: &Vector3<f64>,
    np: &Vector3<f64>,
    q: &Vector3<f64>,
    nq: &Vector3<f64>,
    dist: f64,
) -> Option<(f64, f64, f64)> {
    if dist < 1e-9 {
        return None;
    }
    let d = (q - p) / dist;
    let u = *np;
    let v_raw = d.cross(&u);
    let v_norm = v_raw.norm();
    if v_norm < 1e-9 {
        return None;
    }
    let v = v_raw / v_norm;
    let w = u.cross(&v);
    let alpha = v.dot(nq);
    let phi = u.dot(&d);
    let theta = w.dot(nq).atan2(u.dot(nq));
    Some((alpha, phi, theta))
}

fn bin_unit(value: f64) -> usize {
    // [-1, 1] -> [0, FPFH_BINS)
    let t = ((value + 1.0) / 2.0).clamp(0.0, 1.0);
    ((t * FPFH_BINS as f64) as usize).min(FPFH_BINS - 1)
}

fn bin_angle(value: f64) -> usize {
    let t = ((value + std::f64::consts::PI) / (2.0 * std::f64::consts::PI)).clamp(0.0, 1.0);
    ((t * FPFH_BINS as f64) as usize).min(FPFH_BINS - 1)
}

pub fn feature_distance_sq(a: &[f64; FPFH_DIM], b: &[f64; FPFH_DIM]) -> f64 {
    let mut s = 0.0;
    for i in 0..FPFH_DIM {
        let d = a[i] - b[i];
        s += d * d;
    }
    s
}
