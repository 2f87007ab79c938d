//! Fast-Global-Registration-style coarse alignment: FPFH correspondences,
//! reciprocity and tuple-test filtering, then graduated non-convexity over
//! a scaled Geman-McClure objective. Consumes no initial guess.

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fpfh::{feature_distance_sq, fpfh_features, FPFH_DIM};
use super::kdtree::KdTree;
use super::{evaluate_alignment, PointCloud, RegistrationError, RegistrationParams, RegistrationResult};
use crate::geometry::{compose, RigidTransform};

const MIN_CORRESPONDENCES: usize = 4;

/// Global rigid alignment of `source` onto `target`. Both clouds must
/// carry normals (FPFH needs them).
pub fn coarse_register(
    source: &PointCloud,
    target: &PointCloud,
    params: &RegistrationParams,
) -> Result<RegistrationResult, RegistrationError> {
    let source_tree = KdTree::build(&source.points);
    let target_tree = KdTree::build(&target.points);
    let source_feats = fpfh_features(source, &source_tree, params.fpfh_radius);
    let target_feats = fpfh_features(target, &target_tree, params.fpfh_radius);

    let correspondences = match_features(&source_feats, &target_feats);
    let correspondences = tuple_filter(
        &correspondences,
        &source.points,
        &target.points,
        params.fgr_tuple_ratio,
        params.fgr_tuple_attempts,
        params.seed,
    );
    if correspondences.len() < MIN_CORRESPONDENCES {
        return Err(RegistrationError::NoCorrespondences {
            found: correspondences.len(),
            min: MIN_CORRESPONDENCES,
        });
    }

    let transform = optimize_gnc(&correspondences, &source.points, &target.points, params);
    let (fitness, inlier_rmse) = evaluate_alignment(
        source,
        &target_tree,
        &transform,
        params.fgr_max_correspondence_distance,
    );
    Ok(RegistrationResult {
        transform,
        fitness,
        inlier_rmse,
        iterations: params.fgr_iterations,
        converged: true,
    })
}

/// Reciprocal nearest neighbors in descriptor space.
fn match_features(
    source_feats: &[[f64; FPFH_DIM]],
    target_feats: &[[f64; FPFH_DIM]],
) -> Vec<(usize, usize)> {
    let nearest = |from: &[[f64; FPFH_DIM]], to: &[[f64; FPFH_DIM]]| -> Vec<usize> {
        from.iter()
            .map(|f| {
                let mut best = (0usize, f64::INFINITY);
                for (j, g) in to.iter().enumerate() {
                    let d = feature_distance_sq(f, g);
                    if d < best.1 {
                        best = (j, d);
                    }
                }
                best.0
            })
            .collect()
    };
    let s_to_t = nearest(source_feats, target_feats);
    let t_to_s = nearest(target_feats, source_feats);
    s_to_t
        .iter()
        .enumerate()
        .filter(|(i, &j)| t_to_s[j] == *i)
        .map(|(i, &j)| (i, j))
        .collect()
}

/// Keep correspondences that appear in at least one length-consistent
/// random triple: all three edge-length ratios within [ratio, 1/ratio].
fn tuple_filter(
    correspondences: &[(usize, usize)],
    source: &[Vector3<f64>],
    target: &[Vector3<f64>],
    ratio: f64,
    attempts: usize,
    seed: u64,
) -> Vec<(usize, usize)> {
    let n = correspondences.len();
    if n < 3 {
        return correspondences.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; n];
    let inv_ratio = 1.0 / ratio;
    for _ in 0..attempts {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        let c = rng.gen_range(0..n);
        if a == b || b == c || a == c {
            continue;
        }
        let ok = [(a, b), (b, c), (a, c)].iter().all(|&(x, y)| {
            let (sx, tx) = correspondences[x];
            let (sy, ty) = correspondences[y];
            let ds = (source[sx] - source[sy]).norm();
            let dt = (target[tx] - target[ty]).norm();
            if dt < 1e-9 {
                return false;
            }
            let r = ds / dt;
            r > ratio && r < inv_ratio
        });
        if ok {
            keep[a] = true;
            keep[b] = true;
            keep[c] = true;
        }
    }
    correspondences
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(c, _)| *c)
        .collect()
}

/// Graduated non-convexity on the scaled Geman-McClure cost with fixed
/// correspondences; mu anneals from the squared target diameter down to
/// the squared correspondence distance bound.
fn optimize_gnc(
    correspondences: &[(usize, usize)],
    source: &[Vector3<f64>],
    target: &[Vector3<f64>],
    params: &RegistrationParams,
) -> RigidTransform {
    let mut min = Vector3::repeat(f64::INFINITY);
    let mut max = Vector3::repeat(f64::NEG_INFINITY);
    for p in target {
        min = min.inf(p);
        max = max.sup(p);
    }
    let diameter = (max - min).norm().max(params.fgr_max_correspondence_distance);
    let delta_sq = params.fgr_max_correspondence_distance.powi(2);
    let mut mu = diameter * diameter;
    let mut transform = RigidTransform::identity();

    for iter in 0..params.fgr_iterations {
        if iter > 0 && iter % 4 == 0 && mu > delta_sq {
            mu = (mu / params.fgr_division_factor).max(delta_sq);
        }
        let mut h = Matrix6::<f64>::zeros();
        let mut g = Vector6::<f64>::zeros();
        for &(si, ti) in correspondences {
            let p = transform.apply(&source[si]);
            let r = p - target[ti];
            let weight = (mu / (mu + r.norm_squared())).powi(2);
            // J = [-skew(p) | I] for a left-multiplied twist (omega, v).
            let sk = skew(&p);
            let jr = -sk; // rotational block
            let mut j = nalgebra::Matrix3x6::<f64>::zeros();
            j.fixed_view_mut::<3, 3>(0, 0).copy_from(&jr);
            j.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
            h += weight * j.transpose() * j;
            g += weight * j.transpose() * r;
        }
        // Light damping keeps the solve well-posed near degeneracy.
        for i in 0..6 {
            h[(i, i)] += 1e-9;
        }
        let Some(step) = h.cholesky().map(|c| c.solve(&(-g))) else {
            break;
        };
        let omega = Vector3::new(step[0], step[1], step[2]);
        let v = Vector3::new(step[3], step[4], step[5]);
        let delta = RigidTransform::new(
            nalgebra::UnitQuaternion::from_scaled_axis(omega),
            v,
        );
        transform = compose(&delta, &transform);
        if omega.norm() < 1e-12 && v.norm() < 1e-12 && mu <= delta_sq {
            break;
        }
    }
    transform
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}
