//! Truncated Hermite coefficient sequences: the spaces `s_d` and `s'_d`
//! restricted to a box `{0..N}^d`, together with the analysis map
//! `φ ↦ (∫ φ h_β)`, box partial-sum synthesis, the seminorms `|·|_n`, the dual
//! norms `‖·‖_{-n}` and the coefficient pairing.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::hermite::{hermite_funcs_upto, BasisSpec, MultiIndex, QuadRule};
use crate::numeric::compensated_sum;

/// Real coefficients indexed by the box `{0..level}^dim`, stored in
/// lexicographic order (first component most significant).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffTensor {
    dim: usize,
    level: usize,
    values: Vec<f64>,
}

impl CoeffTensor {
    pub fn zeros(dim: usize, level: usize) -> Self {
        let len = (level + 1).pow(dim as u32);
        Self { dim, level, values: vec![0.0; len] }
    }

    pub fn from_values(dim: usize, level: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return invalid("dimension must be positive");
        }
        let len = (level + 1).pow(dim as u32);
        if values.len() != len {
            return invalid(format!("expected {len} coefficients for box level {level} in dimension {dim}, got {}", values.len()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return invalid(format!("non-finite coefficient {v}"));
        }
        Ok(Self { dim, level, values })
    }

    /// Unit vector at `index` inside the box of the given level.
    pub fn unit(dim: usize, level: usize, index: &[usize]) -> Self {
        let mut t = Self::zeros(dim, level);
        t.set(index, 1.0);
        t
    }

    /// Tensor with entries `f(β)`.
    pub fn from_fn(dim: usize, level: usize, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = Self::zeros(dim, level);
        let mut idx = vec![0; dim];
        for flat in 0..t.values.len() {
            t.unflatten_into(flat, &mut idx);
            t.values[flat] = f(&idx);
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn flatten(&self, index: &[usize]) -> usize {
        index.iter().fold(0, |acc, &i| acc * (self.level + 1) + i)
    }

    pub fn unflatten_into(&self, mut flat: usize, index: &mut [usize]) {
        for slot in index.iter_mut().rev() {
            *slot = flat % (self.level + 1);
            flat /= self.level + 1;
        }
    }

    pub fn multi_index(&self, flat: usize) -> MultiIndex {
        let mut idx = vec![0; self.dim];
        self.unflatten_into(flat, &mut idx);
        MultiIndex::new(idx)
    }

    /// Entry at `index`; zero outside the stored box.
    pub fn get(&self, index: &[usize]) -> f64 {
        if index.iter().any(|&i| i > self.level) {
            return 0.0;
        }
        self.values[self.flatten(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let flat = self.flatten(index);
        self.values[flat] = value;
    }

    /// Re-boxed copy at `level`, truncating or zero-padding.
    pub fn resized(&self, level: usize) -> CoeffTensor {
        CoeffTensor::from_fn(self.dim, level, |idx| self.get(idx))
    }

    /// Keeps the entries with `β ≤ (level,…,level)` and zeroes the rest, box unchanged.
    pub fn box_partial(&self, level: usize) -> CoeffTensor {
        let mut out = self.clone();
        let mut idx = vec![0; self.dim];
        for flat in 0..out.values.len() {
            self.unflatten_into(flat, &mut idx);
            if idx.iter().any(|&i| i > level) {
                out.values[flat] = 0.0;
            }
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> CoeffTensor {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// `self + factor · other`, on the larger of the two boxes.
    pub fn add_scaled(&self, factor: f64, other: &CoeffTensor) -> Result<CoeffTensor> {
        if self.dim != other.dim {
            return invalid(format!("dimension mismatch {} vs {}", self.dim, other.dim));
        }
        let level = self.level.max(other.level);
        let a = if self.level == level { self.clone() } else { self.resized(level) };
        let b = if other.level == level { other.clone() } else { other.resized(level) };
        let values = a.values.iter().zip(&b.values).map(|(x, y)| x + factor * y).collect();
        Ok(CoeffTensor { dim: self.dim, level, values })
    }

    pub fn max_abs_diff(&self, other: &CoeffTensor) -> Result<f64> {
        let d = self.add_scaled(-1.0, other)?;
        Ok(d.values.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `|β|` of each stored entry, in storage order.
    fn orders(&self) -> impl Iterator<Item = usize> + '_ {
        let mut idx = vec![0; self.dim];
        (0..self.values.len()).map(move |flat| {
            self.unflatten_into(flat, &mut idx);
            idx.iter().sum()
        })
    }

    /// Writes the coefficient CSV: header `beta_1,…,beta_d,value`, lexicographic rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.dim).map(|i| format!("beta_{i}")).collect();
        header.push("value".into());
        w.write_record(&header)?;
        let mut idx = vec![0; self.dim];
        for (flat, v) in self.values.iter().enumerate() {
            self.unflatten_into(flat, &mut idx);
            let mut row: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
            row.push(format!("{v:e}"));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the coefficient CSV; the rows must cover a full box exactly once.
    pub fn read_csv<R: Read>(reader: R) -> Result<CoeffTensor> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        let dim = headers.len().saturating_sub(1);
        if dim == 0 || headers.get(dim) != Some("value") {
            return invalid("coefficient CSV header must be beta_1,…,beta_d,value");
        }
        for (i, h) in headers.iter().take(dim).enumerate() {
            if h != format!("beta_{}", i + 1) {
                return invalid(format!("unexpected header column {h}"));
            }
        }
        let mut rows: Vec<(Vec<usize>, f64)> = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let mut idx = Vec::with_capacity(dim);
            for field in rec.iter().take(dim) {
                idx.push(field.trim().parse::<usize>().map_err(|e| {
                    crate::Error::InvalidInput(format!("bad index {field:?}: {e}"))
                })?);
            }
            let value_field = rec.get(dim).unwrap_or("");
            let value: f64 = value_field
                .trim()
                .parse()
                .map_err(|e| crate::Error::InvalidInput(format!("bad value {value_field:?}: {e}")))?;
            rows.push((idx, value));
        }
        if rows.is_empty() {
            return invalid("coefficient CSV has no rows");
        }
        let level = rows.iter().flat_map(|(i, _)| i.iter().copied()).max().unwrap_or(0);
        let mut out = CoeffTensor::zeros(dim, level);
        let mut seen = vec![false; out.len()];
        for (idx, v) in rows {
            let flat = out.flatten(&idx);
            if seen[flat] {
                return invalid(format!("duplicate index {idx:?}"));
            }
            seen[flat] = true;
            if !v.is_finite() {
                return invalid(format!("non-finite coefficient at {idx:?}"));
            }
            out.values[flat] = v;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return invalid(format!("index {:?} missing from the box", out.multi_index(missing).entries()));
        }
        Ok(out)
    }
}

/// Nodes and weights along one axis of a tensor-product grid.
#[derive(Debug, Clone)]
pub struct AxisGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl From<QuadRule> for AxisGrid {
    fn from(rule: QuadRule) -> Self {
        Self { nodes: rule.nodes, weights: rule.weights }
    }
}

/// Shape-preserving contraction of one axis of a row-major tensor with a
/// dense `rows × cols` matrix.
fn contract_axis(data: &[f64], shape: &[usize], axis: usize, matrix: &[f64], rows: usize) -> (Vec<f64>, Vec<usize>) {
    let cols = shape[axis];
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = vec![0.0; outer * rows * inner];
    for o in 0..outer {
        for j in 0..rows {
            let dst = &mut out[(o * rows + j) * inner..(o * rows + j + 1) * inner];
            for i in 0..cols {
                let a = matrix[j * cols + i];
                if a == 0.0 {
                    continue;
                }
                let src = &data[(o * cols + i) * inner..(o * cols + i + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
    }
    let mut new_shape = shape.to_vec();
    new_shape[axis] = rows;
    (out, new_shape)
}

/// Row-major `(level+1) × nodes` table of `h_j(x_q)`.
pub fn hermite_table(level: usize, nodes: &[f64]) -> Vec<f64> {
    let m = nodes.len();
    let mut table = vec![0.0; (level + 1) * m];
    for (q, &x) in nodes.iter().enumerate() {
        for (j, h) in hermite_funcs_upto(level, x).into_iter().enumerate() {
            table[j * m + q] = h;
        }
    }
    table
}

/// Coefficients `Σ_q W_q v_q h_β(x_q)` of values sampled on a tensor grid.
pub fn analyze_grid(values: &[f64], axes: &[AxisGrid], level: usize) -> Result<CoeffTensor> {
    GridAnalyzer::new(axes, level).apply(values)
}

/// Weighted Hermite tables of a fixed grid, for repeated analysis.
#[derive(Debug, Clone)]
pub struct GridAnalyzer {
    tables: Vec<Vec<f64>>,
    sizes: Vec<usize>,
    level: usize,
}

impl GridAnalyzer {
    pub fn new(axes: &[AxisGrid], level: usize) -> Self {
        let tables = axes
            .iter()
            .map(|grid| {
                let mut table = hermite_table(level, &grid.nodes);
                let m = grid.nodes.len();
                for j in 0..=level {
                    for q in 0..m {
                        table[j * m + q] *= grid.weights[q];
                    }
                }
                table
            })
            .collect();
        Self { tables, sizes: axes.iter().map(|a| a.nodes.len()).collect(), level }
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn apply(&self, values: &[f64]) -> Result<CoeffTensor> {
        if values.len() != self.sizes.iter().product::<usize>() {
            return invalid("grid value count does not match the grid shape");
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return invalid(format!("non-finite sample {v}"));
        }
        let mut shape = self.sizes.clone();
        let mut data = values.to_vec();
        for (axis, table) in self.tables.iter().enumerate() {
            let (d, s) = contract_axis(&data, &shape, axis, table, self.level + 1);
            data = d;
            shape = s;
        }
        CoeffTensor::from_values(self.sizes.len(), self.level, data)
    }
}

/// Applies a `(level+1) × (level+1)` row-major matrix along one axis.
pub fn apply_axis(a: &CoeffTensor, axis: usize, matrix: &[f64]) -> Result<CoeffTensor> {
    let n = a.level + 1;
    if axis >= a.dim || matrix.len() != n * n {
        return invalid("axis matrix does not match the tensor");
    }
    let shape = vec![n; a.dim];
    let (values, _) = contract_axis(&a.values, &shape, axis, matrix, n);
    Ok(CoeffTensor { dim: a.dim, level: a.level, values })
}

/// Values of the level-`a.level()` partial sum on a tensor grid.
pub fn synthesize_grid(a: &CoeffTensor, axes: &[&[f64]]) -> Vec<f64> {
    let mut shape = vec![a.level + 1; a.dim];
    let mut data = a.values.clone();
    for (axis, nodes) in axes.iter().enumerate() {
        let m = nodes.len();
        let table = hermite_table(a.level, nodes);
        // transpose into m × (level+1)
        let mut t = vec![0.0; m * (a.level + 1)];
        for j in 0..=a.level {
            for q in 0..m {
                t[q * (a.level + 1) + j] = table[j * m + q];
            }
        }
        let (d, s) = contract_axis(&data, &shape, axis, &t, m);
        data = d;
        shape = s;
    }
    data
}

/// Tensor-grid points in row-major order.
pub fn grid_points(axes: &[&[f64]]) -> Vec<Vec<f64>> {
    let total: usize = axes.iter().map(|a| a.len()).product();
    let mut pts = Vec::with_capacity(total);
    let mut idx = vec![0usize; axes.len()];
    for _ in 0..total {
        pts.push(idx.iter().zip(axes).map(|(&i, a)| a[i]).collect());
        for k in (0..axes.len()).rev() {
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
    pts
}

/// Tensor-grid weights in row-major order.
pub fn grid_weights(axes: &[AxisGrid]) -> Vec<f64> {
    let ws: Vec<&[f64]> = axes.iter().map(|a| a.weights.as_slice()).collect();
    grid_points(&ws).into_iter().map(|w| w.iter().product()).collect()
}

/// The analysis map: `a_β = Σ_k w_k f(x_k) h_β(x_k)` over the tensor rule of `spec`.
pub fn analyze<F>(f: F, spec: &BasisSpec) -> Result<CoeffTensor>
where
    F: Fn(&[f64]) -> f64,
{
    spec.validate()?;
    let rule: AxisGrid = QuadRule::standard(spec).into();
    let axes = vec![rule; spec.dim];
    let nodes: Vec<&[f64]> = axes.iter().map(|a| a.nodes.as_slice()).collect();
    let values: Vec<f64> = grid_points(&nodes).iter().map(|p| f(p)).collect();
    analyze_grid(&values, &axes, spec.level)
}

/// Box partial sum `Σ_{γ ≤ level} a_γ h_γ(x)`.
pub fn synthesize(a: &CoeffTensor, x: &[f64], level: &MultiIndex) -> Result<f64> {
    if x.len() != a.dim || level.dim() != a.dim {
        return invalid("dimension mismatch in synthesis");
    }
    if level.entries().iter().any(|&l| l > a.level) {
        return invalid(format!("level {:?} exceeds stored box {}", level.entries(), a.level));
    }
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return invalid(format!("non-finite point coordinate {v}"));
    }
    let tables: Vec<Vec<f64>> = x.iter().map(|&xi| hermite_funcs_upto(a.level, xi)).collect();
    let mut idx = vec![0; a.dim];
    let mut terms = Vec::new();
    for (flat, &c) in a.values.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        a.unflatten_into(flat, &mut idx);
        if idx.iter().zip(level.entries()).any(|(i, l)| i > l) {
            continue;
        }
        let basis: f64 = idx.iter().enumerate().map(|(ax, &i)| tables[ax][i]).product();
        terms.push(c * basis);
    }
    Ok(compensated_sum(terms))
}

/// Full-box synthesis at one point.
pub fn evaluate(a: &CoeffTensor, x: &[f64]) -> Result<f64> {
    synthesize(a, x, &MultiIndex::uniform(a.dim, a.level))
}

fn weight_power(order: usize, dim: usize, exponent: i32) -> f64 {
    ((2 * order + dim) as f64).powi(exponent)
}

/// `|a|_n = (Σ_β (2|β|+d)^{2n} a_β²)^{1/2}`.
pub fn seminorm(a: &CoeffTensor, n: i64) -> Result<f64> {
    if n < 0 {
        return invalid(format!("seminorm order {n} must be nonnegative"));
    }
    let e = 2 * n as i32;
    let terms = a.orders().zip(&a.values).map(|(o, v)| weight_power(o, a.dim, e) * v * v);
    Ok(compensated_sum(terms.collect::<Vec<_>>()).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualNorm {
    pub value: f64,
    /// Norm over the sub-box of each level `0..=N`.
    pub partial: Vec<f64>,
}

/// `‖b‖_{-n} = (Σ_β (2|β|+d)^{-2n} b_β²)^{1/2}` with its box-level partial sums.
pub fn dual_norm(b: &CoeffTensor, n: i64) -> Result<DualNorm> {
    if n < 1 {
        return invalid(format!("dual norm order {n} must be at least 1"));
    }
    let e = -2 * n as i32;
    let mut per_level = vec![Vec::new(); b.level + 1];
    let mut idx = vec![0; b.dim];
    for (flat, v) in b.values.iter().enumerate() {
        b.unflatten_into(flat, &mut idx);
        let order: usize = idx.iter().sum();
        let box_level = *idx.iter().max().unwrap_or(&0);
        per_level[box_level].push(weight_power(order, b.dim, e) * v * v);
    }
    let mut partial = Vec::with_capacity(b.level + 1);
    let mut acc = Vec::new();
    for terms in per_level {
        acc.extend(terms);
        partial.push(compensated_sum(acc.iter().copied()).sqrt());
    }
    Ok(DualNorm { value: *partial.last().unwrap_or(&0.0), partial })
}

/// `⟨b, a⟩ = Σ_β b_β a_β`.
pub fn pairing(b: &CoeffTensor, a: &CoeffTensor) -> Result<f64> {
    if b.dim != a.dim || b.level != a.level {
        return invalid(format!(
            "pairing needs matching boxes: (d={}, N={}) vs (d={}, N={})",
            b.dim, b.level, a.dim, a.level
        ));
    }
    Ok(compensated_sum(b.values.iter().zip(&a.values).map(|(x, y)| x * y)))
}

/// Polynomial growth bound `|b_β| ≤ C (2|β|+d)^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthProfile {
    pub c: f64,
    pub m: u32,
    /// Outer-half over inner-half bound ratio at the chosen `m`.
    pub residual: f64,
}

pub const DEFAULT_PLATEAU_FACTOR: f64 = 1.5;
const MAX_GROWTH_ORDER: u32 = 64;

/// Smallest `m` for which the bound `max |b_β|(2|β|+d)^{-m}` over the outer half
/// of the order range is within `factor` of the inner half.
pub fn growth_order(b: &CoeffTensor, factor: f64) -> Result<GrowthProfile> {
    if b.is_empty() {
        return invalid("empty tensor");
    }
    if b.max_abs() == 0.0 {
        return Ok(GrowthProfile { c: 0.0, m: 0, residual: 0.0 });
    }
    let orders: Vec<usize> = b.orders().collect();
    let max_order = *orders.iter().max().unwrap_or(&0);
    let split = max_order / 2;
    let bound = |m: u32, pick: &dyn Fn(usize) -> bool| -> f64 {
        orders
            .iter()
            .zip(&b.values)
            .filter(|(o, _)| pick(**o))
            .map(|(&o, v)| v.abs() * weight_power(o, b.dim, -(m as i32)))
            .fold(0.0_f64, f64::max)
    };
    let mut chosen = MAX_GROWTH_ORDER;
    let mut residual = f64::INFINITY;
    for m in 0..=MAX_GROWTH_ORDER {
        let inner = bound(m, &|o| o <= split);
        let outer = bound(m, &|o| o > split);
        let ratio = if max_order == 0 { 0.0 } else if inner > 0.0 { outer / inner } else if outer > 0.0 { f64::INFINITY } else { 0.0 };
        if ratio <= factor {
            chosen = m;
            residual = ratio;
            break;
        }
    }
    let c = bound(chosen, &|_| true);
    Ok(GrowthProfile { c, m: chosen, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::{hermite_func, H0_AT_ZERO};

    fn gaussian(x: &[f64]) -> f64 {
        (-0.5 * x.iter().map(|v| v * v).sum::<f64>()).exp()
    }

    #[test]
    fn analyze_basis_function_gives_unit_vector() {
        let spec = BasisSpec::new(1, 8);
        let a = analyze(|x| hermite_func(5, x[0]).unwrap(), &spec).unwrap();
        let target = CoeffTensor::unit(1, 8, &[5]);
        assert!(a.max_abs_diff(&target).unwrap() < 1e-9);
        let z = analyze(|_| 0.0, &spec).unwrap();
        assert_eq!(z.max_abs(), 0.0);
        assert!(analyze(|_| f64::NAN, &spec).is_err());
    }

    #[test]
    fn analyze_quarter_gaussian_is_scaled_h0() {
        let spec = BasisSpec::new(1, 10);
        let a = analyze(|x| (-x[0] * x[0] / 4.0).exp(), &spec).unwrap();
        let c0 = (2.0 * std::f64::consts::PI).powf(0.25);
        assert!((a.get(&[0]) - c0).abs() < 1e-12);
        assert!(a.values()[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn synthesis_examples() {
        let u = CoeffTensor::unit(1, 0, &[0]);
        let v = synthesize(&u, &[0.0], &MultiIndex::new(vec![0])).unwrap();
        assert!((v - H0_AT_ZERO).abs() < 1e-15);
        assert_eq!(evaluate(&CoeffTensor::zeros(1, 5), &[0.3]).unwrap(), 0.0);
        assert!(synthesize(&u, &[0.0], &MultiIndex::new(vec![1])).is_err());
    }

    #[test]
    fn synthesis_self_convergence_for_gaussian() {
        let mut prev = f64::INFINITY;
        for level in [10, 20, 30, 40] {
            let a = analyze(gaussian, &BasisSpec::new(1, level)).unwrap();
            let err = (0..=80)
                .map(|i| -8.0 + 0.2 * i as f64)
                .map(|x| (evaluate(&a, &[x]).unwrap() - gaussian(&[x])).abs())
                .fold(0.0_f64, f64::max);
            assert!(err < prev, "level {level}: {err} !< {prev}");
            prev = err;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn seminorm_examples() {
        let a = CoeffTensor::unit(1, 5, &[3]);
        assert_eq!(seminorm(&a, 2).unwrap(), 49.0);
        assert_eq!(seminorm(&CoeffTensor::zeros(2, 3), 3).unwrap(), 0.0);
        let b = CoeffTensor::unit(2, 2, &[1, 1]);
        assert_eq!(seminorm(&b, 1).unwrap(), 6.0);
        assert!(seminorm(&a, -1).is_err());
    }

    #[test]
    fn dual_norm_examples() {
        let a = CoeffTensor::unit(1, 5, &[3]);
        assert!((dual_norm(&a, 1).unwrap().value - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(dual_norm(&CoeffTensor::zeros(1, 4), 1).unwrap().value, 0.0);
        assert!(dual_norm(&a, 0).is_err());
    }

    #[test]
    fn dirac_dual_norm_partial_sums_settle() {
        let level = 400;
        let b = CoeffTensor::from_values(1, level, hermite_funcs_upto(level, 0.0)).unwrap();
        let p = dual_norm(&b, 1).unwrap().partial;
        let inc = |lo: usize, hi: usize| p[hi] - p[lo];
        assert!(inc(100, 200) > inc(200, 300));
        assert!(inc(200, 300) > inc(300, 400));
        assert!(inc(300, 400) < 1e-3);
    }

    #[test]
    fn pairing_examples() {
        let u = CoeffTensor::unit(1, 4, &[2]);
        assert_eq!(pairing(&u, &u).unwrap(), 1.0);
        assert_eq!(pairing(&u, &CoeffTensor::zeros(1, 4)).unwrap(), 0.0);
        assert!(pairing(&u, &CoeffTensor::zeros(1, 5)).is_err());

        let spec = BasisSpec::new(1, 64);
        let dirac = CoeffTensor::from_values(1, 64, hermite_funcs_upto(64, 0.0)).unwrap();
        let phi = analyze(gaussian, &spec).unwrap();
        assert!((pairing(&dirac, &phi).unwrap() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn parseval_against_direct_quadrature() {
        let spec = BasisSpec::new(1, 40);
        let f = |x: &[f64]| (-x[0] * x[0] / 2.0).exp() * (1.0 + x[0]);
        let g = |x: &[f64]| (-x[0] * x[0] / 3.0).exp() * x[0].cos();
        let lhs = pairing(&analyze(f, &spec).unwrap(), &analyze(g, &spec).unwrap()).unwrap();
        let rule = QuadRule::gaussian(400, 0.0, 1.0, 40.0);
        let rhs = rule.integrate(|x| f(&[x]) * g(&[x]));
        assert!((lhs - rhs).abs() < 1e-8, "{lhs} vs {rhs}");
    }

    #[test]
    fn analysis_is_isometric_on_basis_functions() {
        let spec = BasisSpec::new(1, 12);
        for beta in [0usize, 3, 7] {
            let a = analyze(|x| hermite_func(beta, x[0]).unwrap(), &spec).unwrap();
            for n in 0..4 {
                let expected = ((2 * beta + 1) as f64).powi(n as i32);
                assert!((seminorm(&a, n).unwrap() - expected).abs() < 1e-8 * expected);
            }
        }
    }

    #[test]
    fn round_trip_through_synthesis() {
        let spec = BasisSpec::new(2, 8);
        let a = CoeffTensor::from_fn(2, 8, |i| if i[0] <= 4 && i[1] <= 4 { 1.0 / (1 + i[0] + 2 * i[1]) as f64 } else { 0.0 });
        let back = analyze(|x| evaluate(&a, x).unwrap(), &spec).unwrap();
        assert!(back.max_abs_diff(&a).unwrap() < 1e-9);
    }

    #[test]
    fn growth_order_examples() {
        let b = CoeffTensor::from_fn(1, 30, |i| ((2 * i[0] + 1) as f64).powi(3));
        let g = growth_order(&b, DEFAULT_PLATEAU_FACTOR).unwrap();
        assert_eq!(g.m, 3);
        assert!((g.c - 1.0).abs() < 1e-12);

        let dirac = CoeffTensor::from_values(1, 60, hermite_funcs_upto(60, 0.0)).unwrap();
        let g = growth_order(&dirac, DEFAULT_PLATEAU_FACTOR).unwrap();
        assert_eq!(g.m, 0);
        assert!((g.c - H0_AT_ZERO).abs() < 1e-15);

        let mut last_c = f64::INFINITY;
        for level in [10, 20, 40] {
            let a = analyze(gaussian, &BasisSpec::new(1, level)).unwrap();
            let tail = a.box_partial(level).add_scaled(-1.0, &a.box_partial(level / 2)).unwrap();
            let g = growth_order(&a, DEFAULT_PLATEAU_FACTOR).unwrap();
            assert_eq!(g.m, 0);
            let gt = growth_order(&tail, DEFAULT_PLATEAU_FACTOR).unwrap();
            assert!(gt.c < last_c);
            last_c = gt.c;
        }
        let z = growth_order(&CoeffTensor::zeros(1, 3), 1.5).unwrap();
        assert_eq!((z.c, z.m), (0.0, 0));
    }

    #[test]
    fn bound_holds_on_every_index() {
        let b = CoeffTensor::from_fn(2, 6, |i| ((i[0] * 7 + i[1] * 3) % 5) as f64 - 2.0);
        let g = growth_order(&b, DEFAULT_PLATEAU_FACTOR).unwrap();
        for (flat, v) in b.values().iter().enumerate() {
            let o = b.multi_index(flat).order();
            assert!(v.abs() <= g.c * ((2 * o + 2) as f64).powi(g.m as i32) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn csv_round_trip_and_duplicate_rejection() {
        let a = CoeffTensor::from_fn(2, 2, |i| i[0] as f64 - 0.5 * i[1] as f64);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("beta_1,beta_2,value\n0,0,"));
        assert_eq!(CoeffTensor::read_csv(buf.as_slice()).unwrap(), a);

        let dup = "beta_1,value\n0,1.0\n1,2.0\n1,3.0\n";
        assert!(CoeffTensor::read_csv(dup.as_bytes()).is_err());
        let gap = "beta_1,value\n0,1.0\n2,3.0\n";
        assert!(CoeffTensor::read_csv(gap.as_bytes()).is_err());
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn seminorms_are_monotone_in_order(vals in proptest::collection::vec(-10.0f64..10.0, 16), n in 0i64..5) {
            let a = CoeffTensor::from_values(2, 3, vals).unwrap();
            prop_assert!(seminorm(&a, n).unwrap() <= seminorm(&a, n + 1).unwrap() * (1.0 + 1e-14));
        }

        #[test]
        fn pairing_is_bilinear(a in proptest::collection::vec(-5.0f64..5.0, 9), b in proptest::collection::vec(-5.0f64..5.0, 9), s in -3.0f64..3.0) {
            let a = CoeffTensor::from_values(1, 8, a).unwrap();
            let b = CoeffTensor::from_values(1, 8, b).unwrap();
            let lhs = pairing(&a.scaled(s), &b).unwrap();
            let rhs = s * pairing(&a, &b).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
        }

        #[test]
        fn pairing_is_bounded_by_dual_seminorms(a in proptest::collection::vec(-5.0f64..5.0, 25), b in proptest::collection::vec(-5.0f64..5.0, 25), n in 1i64..4) {
            let a = CoeffTensor::from_values(2, 4, a).unwrap();
            let b = CoeffTensor::from_values(2, 4, b).unwrap();
            let lhs = pairing(&a, &b).unwrap().abs();
            prop_assert!(lhs <= seminorm(&a, n).unwrap() * dual_norm(&b, n).unwrap().value * (1.0 + 1e-12));
        }

        #[test]
        fn grid_analysis_inverts_synthesis(vals in proptest::collection::vec(-3.0f64..3.0, 13)) {
            let a = CoeffTensor::from_values(1, 12, vals).unwrap();
            let spec = BasisSpec::new(1, 12);
            let axes: Vec<AxisGrid> = vec![QuadRule::standard(&spec).into()];
            let back = analyze_grid(&synthesize_grid(&a, &[axes[0].nodes.as_slice()]), &axes, 12).unwrap();
            prop_assert!(back.max_abs_diff(&a).unwrap() < 1e-12);
        }

        #[test]
        fn csv_round_trip(vals in proptest::collection::vec(-1e6f64..1e6, 16)) {
            let a = CoeffTensor::from_values(2, 3, vals).unwrap();
            let mut buf = Vec::new();
            a.write_csv(&mut buf).unwrap();
            prop_assert_eq!(CoeffTensor::read_csv(buf.as_slice()).unwrap(), a);
        }
    }
}
