//! Minimal 3D kd-tree for nearest-neighbor, k-NN and radius queries.
//!
//! Built per registration call over the working cloud; indices are internal
//! and never serialized. Median-split layout: each subtree occupies a
//! contiguous index range with its node at the middle.

use nalgebra::Vector3;

pub struct KdTree {
    points: Vec<Vector3<f64>>,
    order: Vec<u32>,
}

impl KdTree {
    pub fn build(points: &[Vector3<f64>]) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let points = points.to_vec();
        build_recursive(&points, &mut order, 0);
        Self { points, order }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index and squared distance of the nearest point.
    pub fn nearest(&self, query: &Vector3<f64>) -> Option<(usize, f64)> {
        if self.order.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_recursive(query, 0, self.order.len(), 0, &mut best);
        Some(best)
    }

    /// Indices of all points within `radius`, unordered but deterministic.
    pub fn within_radius(&self, query: &Vector3<f64>, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.order.is_empty() {
            self.radius_recursive(query, radius * radius, 0, self.order.len(), 0, &mut out);
        }
        out
    }

    /// The k nearest points as (index, squared distance), ascending.
    pub fn k_nearest(&self, query: &Vector3<f64>, k: usize) -> Vec<(usize, f64)> {
        let mut heap: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if !self.order.is_empty() && k > 0 {
            self.knn_recursive(query, k, 0, self.order.len(), 0, &mut heap);
        }
        heap.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        heap.into_iter().map(|(d, i)| (i, d)).collect()
    }

    fn nearest_recursive(
        &self,
        query: &Vector3<f64>,
        lo: usize,
        hi: usize,
        depth: usize,
        best: &mut (usize, f64),
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid] as usize;
        let p = &self.points[idx];
        let d2 = (p - query).norm_squared();
        if d2 < best.1 || (d2 == best.1 && idx < best.0) {
            *best = (idx, d2);
        }
        let axis = depth % 3;
        let delta = query[axis] - p[axis];
        let (near, far) = if delta < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.nearest_recursive(query, near.0, near.1, depth + 1, best);
        if delta * delta <= best.1 {
            self.nearest_recursive(query, far.0, far.1, depth + 1, best);
        }
    }

    fn radius_recursive(
        &self,
        query: &Vector3<f64>,
        r2: f64,
        lo: usize,
        hi: usize,
        depth: usize,
        out: &mut Vec<usize>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid] as usize;
        let p = &self.points[idx];
        if (p - query).norm_squared() <= r2 {
            out.push(idx);
        }
        let axis = depth % 3;
        let delta = query[axis] - p[axis];
        let (near, far) = if delta < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.radius_recursive(query, r2, near.0, near.1, depth + 1, out);
        if delta * delta <= r2 {
            self.radius_recursive(query, r2, far.0, far.1, depth + 1, out);
        }
    }

    fn knn_recursive(
        &self,
        query: &Vector3<f64>,
        k: usize,
        lo: usize,
        hi: usize,
        depth: usize,
        heap: &mut Vec<(f64, usize)>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid] as usize;
        let p = &self.points[idx];
        let d2 = (p - query).norm_squared();
        if heap.len() < k {
            heap.push((d2, idx));
            heap.sort_by(|a, b| b.0.total_cmp(&a.0)); // max-first
        } else if d2 < heap[0].0 {
            heap[0] = (d2, idx);
            heap.sort_by(|a, b| b.0.total_cmp(&a.0));
        }
        let axis = depth % 3;
        let delta = query[axis] - p[axis];
        let (near, far) = if delta < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.knn_recursive(query, k, near.0, near.1, depth + 1, heap);
        let bound = if heap.len() < k {
            f64::INFINITY
        } else {
            heap[0].0
        };
        if delta * delta <= bound {
            self.knn_recursive(query, k, far.0, far.1, depth + 1, heap);
        }
    }
}

fn build_recursive(points: &[Vector3<f64>], order: &mut [u32], depth: usize) {
    if order.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][axis]
            .total_cmp(&points[b as usize][axis])
            .then(a.cmp(&b))
    });
    let (left, rest) = order.split_at_mut(mid);
    build_recursive(points, left, depth + 1);
    build_recursive(points, &mut rest[1..], depth + 1);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, seed: u64) -> Vec<Vector3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect()
    }

    #[test]
    fn queries_match_brute_force() {
        let pts = random_cloud(500, 1);
        let tree = KdTree::build(&pts);
        let queries = random_cloud(50, 2);
        for q in &queries {
            let (ni, nd) = tree.nearest(q).unwrap();
            let brute = pts
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - q).norm_squared().total_cmp(&(b.1 - q).norm_squared()))
                .unwrap()
                .0;
            assert_eq!(ni, brute);
            assert!((nd - (pts[brute] - q).norm_squared()).abs() < 1e-15);

            let mut inside: Vec<usize> = pts
                .iter()
                .enumerate()
                .filter(|(_, p)| (*p - q).norm_squared() <= 0.09)
                .map(|(i, _)| i)
                .collect();
            let mut got = tree.within_radius(q, 0.3);
            inside.sort_unstable();
            got.sort_unstable();
            assert_eq!(got, inside);

            let knn = tree.k_nearest(q, 7);
            let mut brute_all: Vec<(usize, f64)> = pts
                .iter()
                .enumerate()
                .map(|(i, p)| (i, (p - q).norm_squared()))
                .collect();
            brute_all.sort_by(|a, b| a.1.total_cmp(&b.1));
            for (a, b) in knn.iter().zip(&brute_all[..7]) {
                assert!((a.1 - b.1).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn empty_and_singleton() {
        let tree = KdTree::build(&[]);
        assert!(tree.nearest(&Vector3::zeros()).is_none());
        let tree = KdTree::build(&[Vector3::new(1.0, 0.0, 0.0)]);
        assert_eq!(tree.nearest(&Vector3::zeros()).unwrap().0, 0);
        assert_eq!(tree.k_nearest(&Vector3::zeros(), 5).len(), 1);
    }
}
