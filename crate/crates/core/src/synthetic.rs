//! Deterministic synthetic point clouds used by tests and experiments.

use rand::Rng;

use crate::rng;

/// Left endpoints of the `levels`-th stage of the two-map Cantor set on
/// `[0, 1]` with contraction ratio `ratio`.
pub fn cantor_1d(ratio: f64, levels: u32) -> Vec<f64> {
    let mut pts = vec![0.0];
    let mut scale = 1.0;
    for _ in 0..levels {
        let shift = scale * (1.0 - ratio);
        pts = pts.iter().flat_map(|&x| [x, x + shift]).collect();
        scale *= ratio;
    }
    pts
}

/// Product of three Cantor sets of dimension `delta / 3` each, mapped into
/// `[-1, 1]^3`, with `2^levels` points per axis.
pub fn product_cantor(delta: f64, levels: u32) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = cantor_1d(2f64.powf(-3.0 / delta), levels).iter().map(|x| 2.0 * x - 1.0).collect();
    let mut out = Vec::with_capacity(axis.len().pow(3));
    for &x in &axis {
        for &y in &axis {
            for &z in &axis {
                out.push(vec![x, y, z]);
            }
        }
    }
    out
}

/// `count` equispaced points `k / count` on coordinate `axis` of R^dim.
pub fn segment(count: usize, dim: usize, axis: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|k| {
            let mut p = vec![0.0; dim];
            p[axis] = k as f64 / count as f64;
            p
        })
        .collect()
}

/// Uniform random points in the cube of half-width `half` about `center`.
pub fn uniform_cube(count: usize, center: &[f64], half: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::stream(seed, 0);
    (0..count)
        .map(|_| center.iter().map(|c| c + r.gen_range(-half..half)).collect())
        .collect()
}
