//! Small numerical helpers shared across modules.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Pairwise sum in a fixed tree order; result depends only on the slice order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 16;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Elementwise pairwise reduction of equally sized vectors.
pub fn pairwise_sum_vecs(parts: &[Vec<f64>]) -> Vec<f64> {
    match parts.len() {
        0 => Vec::new(),
        1 => parts[0].clone(),
        n => {
            let mid = n / 2;
            let mut left = pairwise_sum_vecs(&parts[..mid]);
            let right = pairwise_sum_vecs(&parts[mid..]);
            for (l, r) in left.iter_mut().zip(right) {
                *l += r;
            }
            left
        }
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Gauss–Legendre nodes and weights on `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = mid - half * z;
        nodes[n - 1 - i] = mid + half * z;
        weights[i] = half * w;
        weights[n - 1 - i] = half * w;
    }
    (nodes, weights)
}

type Rule = Arc<(Vec<f64>, Vec<f64>)>;

/// Gauss rule for the weight `e^{-z²/2}` with `m` nodes, returned as nodes
/// and "flat" weights `W_k = λ_k e^{z_k²/2}` so that `Σ W_k g(z_k) ≈ ∫ g`.
///
/// The flat weights are the reciprocal Christoffel sums `1 / Σ_{j<m} h_j(z_k)²`
/// of the orthonormal Hermite functions, which never underflow.
pub fn gauss_hermite_flat(m: usize) -> Arc<(Vec<f64>, Vec<f64>)> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Rule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().expect("rule cache poisoned").get(&m) {
        return Arc::clone(rule);
    }
    let rule = Arc::new(build_gauss_hermite_flat(m));
    cache
        .lock()
        .expect("rule cache poisoned")
        .insert(m, Arc::clone(&rule));
    rule
}

fn build_gauss_hermite_flat(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1, "gauss rule needs at least one node");
    // Jacobi matrix of the probabilists' Hermite polynomials.
    let mut jac = DMatrix::<f64>::zeros(m, m);
    for k in 1..m {
        let off = (k as f64).sqrt();
        jac[(k - 1, k)] = off;
        jac[(k, k - 1)] = off;
    }
    let mut nodes: Vec<f64> = jac.symmetric_eigen().eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    // Newton polish on h_m, using h_m' = -z/2 h_m + √m h_{m-1}.
    for z in nodes.iter_mut() {
        for _ in 0..3 {
            let h = crate::hermite::hermite_funcs_upto(m, *z);
            let d = -0.5 * *z * h[m] + (m as f64).sqrt() * h[m - 1];
            if d == 0.0 {
                break;
            }
            let step = h[m] / d;
            *z -= step;
            if step.abs() < 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
    }
    // Symmetrize.
    for i in 0..m / 2 {
        let v = 0.5 * (nodes[m - 1 - i] - nodes[i]);
        nodes[i] = -v;
        nodes[m - 1 - i] = v;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    let weights = nodes
        .iter()
        .map(|&z| {
            let h = crate::hermite::hermite_funcs_upto(m - 1, z);
            1.0 / compensated_sum(h.iter().map(|v| v * v))
        })
        .collect();
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(5, -1.0, 2.0);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((integral - (2f64.powi(9) + 1.0) / 9.0).abs() < 1e-12);
    }

    #[test]
    fn flat_hermite_weights_integrate_gaussian_moments() {
        let rule = gauss_hermite_flat(20);
        let (z, w) = (&rule.0, &rule.1);
        let two_pi_sqrt = (2.0 * std::f64::consts::PI).sqrt();
        let m0: f64 = z.iter().zip(w).map(|(z, w)| w * (-z * z / 2.0).exp()).sum();
        let m4: f64 = z
            .iter()
            .zip(w)
            .map(|(z, w)| w * z.powi(4) * (-z * z / 2.0).exp())
            .sum();
        assert!((m0 - two_pi_sqrt).abs() < 1e-13);
        assert!((m4 - 3.0 * two_pi_sqrt).abs() < 1e-12);
    }

    #[test]
    fn pairwise_sum_matches_plain_sum() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
        assert!((compensated_sum(v.iter().copied()) - 499_500.0).abs() < 1e-9);
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(0.5)).collect();
        assert!((log_log_slope(&xs, &ys) - 0.5).abs() < 1e-12);
    }
}
