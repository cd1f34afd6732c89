//! Hermite polynomials and orthonormal Hermite functions in the
//! probabilists' convention, with `h_n(x) = (√(2π) n!)^{-1/2} e^{-x²/4} H_n(x)`.
//!
//! Everything here is evaluated through normalized three-term recurrences;
//! neither `n!` nor the unnormalized `H_n` is ever formed for large `n`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::coeffs::CoeffTensor;
use crate::error::{invalid, Error, Result};
use crate::numeric::gauss_hermite_flat;

/// `(2π)^{-1/4}`, the value of `h_0(0)`.
pub const H0_AT_ZERO: f64 = 0.631_618_777_746_065_5;

const RESCALE_ABOVE: f64 = 1e150;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(entries: Vec<usize>) -> Self {
        Self(entries)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    pub fn uniform(dim: usize, level: usize) -> Self {
        Self(vec![level; dim])
    }

    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut e = vec![0; dim];
        e[axis] = 1;
        Self(e)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `|β| = Σ β_i`.
    pub fn order(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn entries(&self) -> &[usize] {
        &self.0
    }

    /// Componentwise `self ≤ other`.
    pub fn le(&self, other: &MultiIndex) -> bool {
        self.dim() == other.dim() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }
}

impl From<Vec<usize>> for MultiIndex {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

/// Which finite Hermite system is in play: dimension, box level and the
/// quadrature used to move between point values and coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub dim: usize,
    pub level: usize,
    pub quad_nodes: usize,
    pub quad_halfwidth: f64,
    /// Largest admissible orthonormality defect of the quadrature.
    pub tol: f64,
}

impl BasisSpec {
    /// Default quadrature for box level `level`: `2N + 66` Gauss nodes and the
    /// window `L = max(12, √(2(4N+d)) + 4)`.
    pub fn new(dim: usize, level: usize) -> Self {
        let halfwidth = ((2.0 * (4 * level + dim) as f64).sqrt() + 4.0).max(12.0);
        Self {
            dim,
            level,
            quad_nodes: 2 * level + 66,
            quad_halfwidth: halfwidth,
            tol: 1e-9,
        }
    }

    pub fn with_quadrature(mut self, nodes: usize, halfwidth: f64) -> Self {
        self.quad_nodes = nodes;
        self.quad_halfwidth = halfwidth;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    /// Same quadrature, different box level.
    pub fn at_level(&self, level: usize) -> Self {
        let mut s = self.clone();
        s.level = level;
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return invalid("dimension must be positive");
        }
        if self.quad_nodes < 1 {
            return invalid("quadrature needs at least one node");
        }
        if !(self.quad_halfwidth.is_finite() && self.quad_halfwidth > 0.0) {
            return invalid(format!("quadrature halfwidth {} must be positive", self.quad_halfwidth));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return invalid("tolerance must be positive");
        }
        Ok(())
    }
}

/// One-dimensional rule; `d`-dimensional integrals use its tensor product.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `g(x) = p(x) e^{-((x-c)/s)²/2}` is integrated exactly for `deg p ≤ exactness_degree`.
    pub exactness_degree: usize,
}

impl QuadRule {
    /// Gauss rule for `e^{-((x - center)/scale)²/2}` with flat weights,
    /// restricted to `|x| ≤ window`.
    pub fn gaussian(m: usize, center: f64, scale: f64, window: f64) -> Self {
        let base = gauss_hermite_flat(m);
        let mut nodes = Vec::with_capacity(m);
        let mut weights = Vec::with_capacity(m);
        for (&z, &w) in base.0.iter().zip(&base.1) {
            let x = center + scale * z;
            if x.abs() <= window {
                nodes.push(x);
                weights.push(scale * w);
            }
        }
        Self {
            nodes,
            weights,
            exactness_degree: 2 * m - 1,
        }
    }

    /// The analysis rule attached to a basis spec.
    pub fn standard(spec: &BasisSpec) -> Self {
        Self::gaussian(spec.quad_nodes, 0.0, 1.0, spec.quad_halfwidth)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// `max |G - I|` for the Gram matrix of `h_0..h_level` under this rule.
    pub fn gram_defect(&self, level: usize) -> f64 {
        let table: Vec<Vec<f64>> = self.nodes.iter().map(|&x| hermite_funcs_upto(level, x)).collect();
        let mut defect = 0.0_f64;
        for m in 0..=level {
            for n in m..=level {
                let g: f64 = table
                    .iter()
                    .zip(&self.weights)
                    .map(|(h, w)| w * h[m] * h[n])
                    .sum();
                let target = if m == n { 1.0 } else { 0.0 };
                defect = defect.max((g - target).abs());
            }
        }
        defect
    }
}

fn check_finite(x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        invalid(format!("non-finite argument {x}"))
    }
}

/// Probabilists' Hermite polynomial `H_n(x)`.
pub fn hermite_poly(n: usize, x: f64) -> Result<f64> {
    check_finite(x)?;
    let (mut prev, mut cur) = (1.0, x);
    if n == 0 {
        return Ok(1.0);
    }
    for k in 1..n {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Orthonormal Hermite function `h_n(x)`.
pub fn hermite_func(n: usize, x: f64) -> Result<f64> {
    check_finite(x)?;
    Ok(hermite_funcs_upto(n, x)[n])
}

/// `[h_0(x), …, h_n(x)]` by the normalized recurrence
/// `h_{k+1} = (x h_k − √k h_{k−1}) / √(k+1)`.
///
/// The Gaussian factor is carried as a separate log-scale so that large `|x|`
/// neither underflows `h_0` nor overflows the intermediate values.
pub fn hermite_funcs_upto(n: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    hermite_walk(n, x, |_, h| out.push(h));
    out
}

/// `Σ_k a_k h_k(x)` without materializing the table.
pub fn hermite_dot(a: &[f64], x: f64) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let mut s = 0.0;
    hermite_walk(a.len() - 1, x, |k, h| s += a[k] * h);
    s
}

fn sqrt_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| (0..=SQRT_TABLE_LEN).map(|k| (k as f64).sqrt()).collect())
}

const SQRT_TABLE_LEN: usize = 4096;

/// Feeds `(k, h_k(x))` for `k = 0..=n` to `visit`.
fn hermite_walk(n: usize, x: f64, mut visit: impl FnMut(usize, f64)) {
    let roots = sqrt_table();
    let root = |k: usize| if k <= SQRT_TABLE_LEN { roots[k] } else { (k as f64).sqrt() };
    let mut log_scale = -0.25 * x * x;
    let mut factor = log_scale.exp();
    let mut prev = 0.0;
    let mut cur = H0_AT_ZERO;
    visit(0, cur * factor);
    for k in 0..n {
        let next = (x * cur - root(k) * prev) / root(k + 1);
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE_ABOVE {
            prev /= RESCALE_ABOVE;
            cur /= RESCALE_ABOVE;
            log_scale += RESCALE_ABOVE.ln();
            factor = log_scale.exp();
        }
        visit(k + 1, cur * factor);
    }
}

/// Derivatives `[h_0'(x), …, h_n'(x)]` from `h_k' = (√k h_{k−1} − √(k+1) h_{k+1}) / 2`.
pub fn hermite_func_derivs_upto(n: usize, x: f64) -> Vec<f64> {
    let h = hermite_funcs_upto(n + 1, x);
    (0..=n)
        .map(|k| {
            let down = if k > 0 { (k as f64).sqrt() * h[k - 1] } else { 0.0 };
            0.5 * (down - ((k + 1) as f64).sqrt() * h[k + 1])
        })
        .collect()
}

/// Tensor Hermite function `h_β(x) = Π h_{β_i}(x_i)`.
pub fn hermite_tensor(beta: &MultiIndex, x: &[f64]) -> Result<f64> {
    if beta.dim() != x.len() {
        return invalid(format!(
            "multi-index has dimension {} but point has dimension {}",
            beta.dim(),
            x.len()
        ));
    }
    let mut prod = 1.0;
    for (&b, &xi) in beta.entries().iter().zip(x) {
        prod *= hermite_func(b, xi)?;
    }
    Ok(prod)
}

fn check_axis(a: &CoeffTensor, axis: usize) -> Result<()> {
    if axis >= a.dim() {
        return invalid(format!("axis {axis} out of range for dimension {}", a.dim()));
    }
    Ok(())
}

/// Coefficients of `∂_axis f` from those of `f`; the level grows by one.
pub fn ladder_derivative(a: &CoeffTensor, axis: usize) -> Result<CoeffTensor> {
    check_axis(a, axis)?;
    Ok(apply_ladder(a, axis, |m, lower, upper| {
        0.5 * (((m + 1) as f64).sqrt() * upper - (m as f64).sqrt() * lower)
    }))
}

/// Coefficients of `x_axis · f` from those of `f`; the level grows by one.
pub fn ladder_multiply_x(a: &CoeffTensor, axis: usize) -> Result<CoeffTensor> {
    check_axis(a, axis)?;
    Ok(apply_ladder(a, axis, |m, lower, upper| {
        ((m + 1) as f64).sqrt() * upper + (m as f64).sqrt() * lower
    }))
}

/// `b_m = rule(m, a_{m−1}, a_{m+1})` along one axis of a box tensor, output box level `N + 1`.
fn apply_ladder(a: &CoeffTensor, axis: usize, rule: impl Fn(usize, f64, f64) -> f64) -> CoeffTensor {
    let level = a.level();
    let mut out = CoeffTensor::zeros(a.dim(), level + 1);
    let dim = a.dim();
    let mut idx = vec![0usize; dim];
    for flat in 0..out.len() {
        out.unflatten_into(flat, &mut idx);
        let m = idx[axis];
        let mut fetch = |mm: Option<usize>| -> f64 {
            match mm {
                Some(v) if v <= level && idx.iter().enumerate().all(|(i, &e)| i == axis || e <= level) => {
                    let saved = idx[axis];
                    idx[axis] = v;
                    let val = a.get(&idx);
                    idx[axis] = saved;
                    val
                }
                _ => 0.0,
            }
        };
        let lower = fetch(m.checked_sub(1));
        let upper = fetch(Some(m + 1));
        out.values_mut()[flat] = rule(m, lower, upper);
    }
    out
}

/// Builds and validates the analysis rule of `spec`.
pub fn build_quadrature(spec: &BasisSpec) -> Result<QuadRule> {
    spec.validate()?;
    let rule = QuadRule::standard(spec);
    let defect = tensor_defect(&rule, spec);
    if !(defect <= spec.tol) {
        return Err(Error::QuadratureInsufficient { defect, tol: spec.tol });
    }
    Ok(rule)
}

/// Bound `(1 + δ)^d − 1` on the tensor Gram defect from the 1-D defect `δ`.
pub fn tensor_defect(rule: &QuadRule, spec: &BasisSpec) -> f64 {
    (1.0 + rule.gram_defect(spec.level)).powi(spec.dim as i32) - 1.0
}

/// Worst `|ladder-predicted h_n'(x) − central difference|` over `n ≤ level`
/// and 41 points of `[−6, 6]`, one entry per step.
pub fn ladder_fd_errors(level: usize, steps: &[f64]) -> Result<Vec<f64>> {
    if let Some(s) = steps.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return invalid(format!("finite-difference step {s} must be positive"));
    }
    let derivs: Vec<CoeffTensor> = (0..=level)
        .map(|n| ladder_derivative(&CoeffTensor::unit(1, n, &[n]), 0))
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = (0..41).map(|i| -6.0 + 0.3 * i as f64).collect();
    Ok(steps
        .iter()
        .map(|&step| {
            let mut worst = 0.0_f64;
            for &x in &xs {
                let (hi, lo) = (hermite_funcs_upto(level, x + step), hermite_funcs_upto(level, x - step));
                for (n, d) in derivs.iter().enumerate() {
                    let fd = (hi[n] - lo[n]) / (2.0 * step);
                    worst = worst.max((hermite_dot(d.values(), x) - fd).abs());
                }
            }
            worst
        })
        .collect())
}
