//! Path simulation, pathwise integrals of translated representatives and
//! residual checks of the Itô formula.
//!
//! For a continuous semimartingale `X` and a time-dependent representative
//! `f`, the residual
//!
//! ```text
//! R = τ_{X_t} f_t − τ_{X_0} f_0 − ∫ ∂_s τ_{X_s} f_s ds + Σ_i ∫ ∂_i τ_{X_s} f_s dX^i
//!     − ½ Σ_ij ∫ ∂_ij τ_{X_s} f_s d⟨X^i, X^j⟩
//! ```
//!
//! vanishes in the continuum limit. `∂_i` acts on the argument of `f`, so
//! `∂/∂x_i (τ_x f) = −∂_i τ_x f`, which is where the plus sign before the
//! `dX` integral comes from. All integrals here are left-point sums.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::{analyze, evaluate, grid_points, grid_weights, pairing, seminorm, synthesize_grid, AxisGrid, CoeffTensor};
use crate::error::{invalid, Error, Result};
use crate::genfunc::{embed, translate_coeffs, DistributionSpec, GenFuncRep, TestFunction, TimeClass};
use crate::hermite::{ladder_derivative, BasisSpec, QuadRule};
use crate::numeric::{compensated_sum, log_log_slope, pairwise_sum};

/// Uniform grid `t_k = kΔt`, `k = 0..=steps`, on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return invalid(format!("horizon {horizon} must be positive"));
        }
        if steps == 0 {
            return invalid("time grid needs at least one step");
        }
        Ok(Self { horizon, steps })
    }

    /// Grid with step `dt`; `T/dt` must be an integer up to rounding.
    pub fn with_step(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return invalid(format!("step {dt} must be positive"));
        }
        let k = (horizon / dt).round();
        if k < 1.0 || ((k * dt - horizon).abs() > 1e-9 * horizon) {
            return invalid(format!("step {dt} does not divide horizon {horizon}"));
        }
        Self::new(horizon, k as usize)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// `t_k`, with `t_K = T` exactly.
    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    /// Index of the grid time `t`, if `t` is on the grid.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = (t / self.dt()).round();
        if k < 0.0 || k as usize > self.steps || (k * self.dt() - t).abs() > 1e-9 * self.horizon {
            return invalid(format!("time {t} is not on the grid"));
        }
        Ok(k as usize)
    }
}

/// Scalar finite-variation process sampled on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FvPart {
    pub values: Vec<f64>,
    /// Running total variation `|V|_{t_k}`.
    pub total_variation: Vec<f64>,
}

impl FvPart {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("finite-variation samples must be finite");
        }
        let mut tv = Vec::with_capacity(values.len());
        let mut acc = 0.0;
        tv.push(0.0);
        for w in values.windows(2) {
            acc += (w[1] - w[0]).abs();
            tv.push(acc);
        }
        tv.truncate(values.len());
        Ok(Self { values, total_variation: tv })
    }
}

/// Which quadratic covariation enters the second-order Itô term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bracket {
    /// Increment products `ΔX^i ΔX^j`.
    Realized,
    /// The model bracket `σσᵀ Δt` of the simulating scheme.
    Model,
}

/// One sampled path of a `d`-dimensional process.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    grid: TimeGrid,
    dim: usize,
    /// `(steps + 1) × dim`, row-major.
    values: Vec<f64>,
    /// `steps × dim × dim`.
    realized_cov: Vec<f64>,
    model_cov: Vec<f64>,
    pub fv_part: Option<FvPart>,
}

impl Path {
    /// Path from sampled values; the model bracket is set to zero (finite variation).
    pub fn from_values(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.len() != (grid.steps + 1) * dim {
            return invalid("path values do not match grid and dimension");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("path values must be finite");
        }
        let mut realized = vec![0.0; grid.steps * dim * dim];
        for k in 0..grid.steps {
            let a = &values[k * dim..(k + 1) * dim];
            let b = &values[(k + 1) * dim..(k + 2) * dim];
            for i in 0..dim {
                for j in 0..dim {
                    realized[(k * dim + i) * dim + j] = (b[i] - a[i]) * (b[j] - a[j]);
                }
            }
        }
        let model = vec![0.0; realized.len()];
        Ok(Self { grid, dim, values, realized_cov: realized, model_cov: model, fv_part: None })
    }

    /// Path sampled from a function of time.
    pub fn deterministic(grid: TimeGrid, dim: usize, x: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let values = (0..=grid.steps).flat_map(|k| x(grid.time(k))).collect();
        Self::from_values(grid, dim, values)
    }

    /// The path that stays at `x0`.
    pub fn constant(grid: TimeGrid, x0: &[f64]) -> Result<Self> {
        Self::deterministic(grid, x0.len(), |_| x0.to_vec())
    }

    pub fn with_fv(mut self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.grid.steps + 1 {
            return invalid("finite-variation samples must match the grid");
        }
        self.fv_part = Some(FvPart::new(values)?);
        Ok(self)
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn increment(&self, k: usize) -> Vec<f64> {
        let (a, b) = (self.point(k), self.point(k + 1));
        b.iter().zip(a).map(|(b, a)| b - a).collect()
    }

    /// Bracket increment matrix for step `k`, row-major.
    pub fn bracket(&self, k: usize, kind: Bracket) -> &[f64] {
        let d2 = self.dim * self.dim;
        let src = match kind {
            Bracket::Realized => &self.realized_cov,
            Bracket::Model => &self.model_cov,
        };
        &src[k * d2..(k + 1) * d2]
    }

    /// `Σ_k` of the bracket increments up to step `k_end`.
    pub fn accumulated_bracket(&self, k_end: usize, kind: Bracket) -> Vec<f64> {
        let d2 = self.dim * self.dim;
        (0..d2)
            .map(|e| compensated_sum((0..k_end).map(|k| self.bracket(k, kind)[e])))
            .collect()
    }

    /// Every `factor`-th sample, with brackets summed over merged steps.
    pub fn coarsen(&self, factor: usize) -> Result<Path> {
        if factor == 0 || !self.grid.steps.is_multiple_of(factor) {
            return invalid(format!("factor {factor} does not divide {} steps", self.grid.steps));
        }
        let grid = TimeGrid::new(self.grid.horizon, self.grid.steps / factor)?;
        let values: Vec<f64> = (0..=grid.steps).flat_map(|k| self.point(k * factor).to_vec()).collect();
        let mut out = Path::from_values(grid, self.dim, values)?;
        let d2 = self.dim * self.dim;
        for k in 0..grid.steps {
            for e in 0..d2 {
                out.model_cov[k * d2 + e] = (0..factor).map(|j| self.model_cov[(k * factor + j) * d2 + e]).sum();
            }
        }
        if let Some(fv) = &self.fv_part {
            out.fv_part = Some(FvPart::new((0..=grid.steps).map(|k| fv.values[k * factor]).collect())?);
        }
        Ok(out)
    }
}

/// A reproducible set of paths.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub paths: Vec<Path>,
    pub seed: u64,
    pub scheme: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMeta {
    pub seed: u64,
    pub scheme: String,
    pub d: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    pub count: usize,
}

impl PathEnsemble {
    pub fn meta(&self) -> EnsembleMeta {
        let first = &self.paths[0];
        EnsembleMeta {
            seed: self.seed,
            scheme: self.scheme.clone(),
            d: first.dim,
            horizon: first.grid.horizon,
            dt: first.grid.dt(),
            count: self.paths.len(),
        }
    }
}

/// Per-path generator: stream `index` of the ChaCha8 generator seeded by `seed`.
pub fn path_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub type Drift<'a> = dyn Fn(f64, &[f64]) -> Vec<f64> + Sync + 'a;
/// Returns `σ(t, x)` as a row-major `d × d` matrix.
pub type Diffusion<'a> = dyn Fn(f64, &[f64]) -> Vec<f64> + Sync + 'a;

/// Euler–Maruyama paths of `dX = b dt + σ dB`.
pub fn simulate_ito(
    dim: usize,
    grid: TimeGrid,
    drift: &Drift<'_>,
    diffusion: &Diffusion<'_>,
    x0: &[f64],
    count: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    if count == 0 {
        return invalid("path count must be positive");
    }
    if dim == 0 || x0.len() != dim {
        return invalid("initial point does not match dimension");
    }
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let paths = (0..count)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(seed, p);
            let mut values = Vec::with_capacity((grid.steps + 1) * dim);
            let mut model = Vec::with_capacity(grid.steps * dim * dim);
            values.extend_from_slice(x0);
            let mut x = x0.to_vec();
            let mut db = vec![0.0; dim];
            for k in 0..grid.steps {
                let t = grid.time(k);
                for v in db.iter_mut() {
                    *v = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
                }
                let b = drift(t, &x);
                let s = diffusion(t, &x);
                if b.len() != dim || s.len() != dim * dim {
                    return invalid("drift or diffusion has the wrong shape");
                }
                for i in 0..dim {
                    for j in 0..dim {
                        let c: f64 = (0..dim).map(|l| s[i * dim + l] * s[j * dim + l]).sum();
                        model.push(c * dt);
                    }
                }
                for i in 0..dim {
                    x[i] += b[i] * dt + (0..dim).map(|l| s[i * dim + l] * db[l]).sum::<f64>();
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::SimulationDiverged { path: p, step: k + 1 });
                }
                values.extend_from_slice(&x);
            }
            let mut path = Path::from_values(grid, dim, values)?;
            path.model_cov = model;
            Ok(path)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PathEnsemble { paths, seed, scheme: "euler-maruyama".into() })
}

/// Standard Brownian paths started at the origin.
pub fn simulate_bm(dim: usize, grid: TimeGrid, count: usize, seed: u64) -> Result<PathEnsemble> {
    let identity = move |_: f64, _: &[f64]| -> Vec<f64> {
        (0..dim * dim).map(|e| if e / dim == e % dim { 1.0 } else { 0.0 }).collect()
    };
    let zero = move |_: f64, _: &[f64]| vec![0.0; dim];
    let mut ens = simulate_ito(dim, grid, &zero, &identity, &vec![0.0; dim], count, seed)?;
    ens.scheme = "brownian".into();
    Ok(ens)
}

fn check_path(f: &GenFuncRep, path: &Path, t: f64) -> Result<usize> {
    if f.dim() != path.dim {
        return invalid(format!("element dimension {} does not match path dimension {}", f.dim(), path.dim));
    }
    path.grid.index_of(t)
}

fn derivative(a: &CoeffTensor, axes: &[usize]) -> Result<CoeffTensor> {
    let mut out = a.clone();
    for &axis in axes {
        out = ladder_derivative(&out, axis)?;
    }
    Ok(out)
}

/// Left-point Bochner–Stieltjes sum `Σ_k τ_{X_{t_k}} f_{t_k} (V_{t_{k+1}} − V_{t_k})`.
pub fn stieltjes_integral(f: &GenFuncRep, path: &Path, t: f64) -> Result<GenFuncRep> {
    let k_end = check_path(f, path, t)?;
    let Some(fv) = &path.fv_part else {
        return invalid("path carries no finite-variation part");
    };
    let mut acc = CoeffTensor::zeros(f.dim(), f.level());
    for k in 0..k_end {
        let dv = fv.values[k + 1] - fv.values[k];
        if dv == 0.0 {
            continue;
        }
        let moved = translate_coeffs(&f.at(path.grid.time(k)), path.point(k), f.spec())?;
        acc = acc.add_scaled(dv, &moved)?;
    }
    Ok(GenFuncRep::from_coeffs(f.spec(), acc))
}

/// `(|∫ τ_{X_s} f dV|_n, Σ_k |τ_{X_{t_k}} f|_n |ΔV_k|)`.
pub fn check_triangle_bound(f: &GenFuncRep, path: &Path, n: i64, t: f64) -> Result<(f64, f64)> {
    let integral = stieltjes_integral(f, path, t)?;
    let fv = path.fv_part.as_ref().expect("checked by stieltjes_integral");
    let k_end = path.grid.index_of(t)?;
    let mut terms = Vec::with_capacity(k_end);
    for k in 0..k_end {
        let dv = (fv.values[k + 1] - fv.values[k]).abs();
        if dv == 0.0 {
            continue;
        }
        let moved = translate_coeffs(&f.at(path.grid.time(k)), path.point(k), f.spec())?;
        terms.push(seminorm(&moved, n)? * dv);
    }
    Ok((seminorm(integral.coeffs(), n)?, compensated_sum(terms)))
}

/// Where the integrand of the `dX` sum is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalRule {
    /// `X_{t_k}`: the Itô sum.
    #[default]
    Left,
    /// `(X_{t_k} + X_{t_{k+1}})/2`: a Stratonovich-type sum, kept as a diagnostic.
    Midpoint,
}

/// Left-point sum `Σ_i Σ_k (∂_i τ_{X_{t_k}} f) ΔX^i_k`, re-expanded each step.
pub fn ito_integral(f: &GenFuncRep, path: &Path, t: f64) -> Result<GenFuncRep> {
    ito_integral_with(f, path, t, EvalRule::Left)
}

pub fn ito_integral_with(f: &GenFuncRep, path: &Path, t: f64, rule: EvalRule) -> Result<GenFuncRep> {
    let k_end = check_path(f, path, t)?;
    let d = f.dim();
    let mut acc = CoeffTensor::zeros(d, f.level() + 1);
    for k in 0..k_end {
        let dx = path.increment(k);
        if dx.iter().all(|&v| v == 0.0) {
            continue;
        }
        let (x, s) = eval_point(path, k, rule);
        let slice = f.at(s);
        for (i, &dxi) in dx.iter().enumerate() {
            let moved = translate_coeffs(&ladder_derivative(&slice, i)?, &x, f.spec())?;
            acc = acc.add_scaled(dxi, &moved)?;
        }
    }
    Ok(GenFuncRep::from_coeffs(f.spec(), acc))
}

fn eval_point(path: &Path, k: usize, rule: EvalRule) -> (Vec<f64>, f64) {
    match rule {
        EvalRule::Left => (path.point(k).to_vec(), path.grid.time(k)),
        EvalRule::Midpoint => {
            let x = path.point(k).iter().zip(path.point(k + 1)).map(|(a, b)| 0.5 * (a + b)).collect();
            (x, path.grid.time(k) + 0.5 * path.grid.dt())
        }
    }
}

/// Residual options for the Itô checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidualOptions {
    pub bracket: Bracket,
    pub rule: EvalRule,
}

impl Default for ResidualOptions {
    fn default() -> Self {
        Self { bracket: Bracket::Realized, rule: EvalRule::Left }
    }
}

impl ResidualOptions {
    pub fn model() -> Self {
        Self { bracket: Bracket::Model, rule: EvalRule::Left }
    }
}

/// Residual tensor at level `N + 2`, computed entirely in coefficient space.
pub fn ito_residual_tensor(f: &GenFuncRep, path: &Path, t: f64, opts: ResidualOptions) -> Result<CoeffTensor> {
    let k_end = check_path(f, path, t)?;
    let d = f.dim();
    let top = f.level() + 2;
    let spec = f.spec();
    let grid = path.grid;
    let mut acc = translate_coeffs(&f.at(grid.time(k_end)), path.point(k_end), spec)?
        .add_scaled(-1.0, &translate_coeffs(&f.at(0.0), path.point(0), spec)?)?
        .resized(top);
    let dt = grid.dt();
    for k in 0..k_end {
        let x = path.point(k);
        let s = grid.time(k);
        let slice = f.at(s);
        if f.class() != TimeClass::Static {
            acc = acc.add_scaled(-dt, &translate_coeffs(&f.rate_at(s), x, spec)?)?;
        }
        let c = path.bracket(k, opts.bracket);
        for i in 0..d {
            for j in 0..d {
                let cij = c[i * d + j];
                if cij != 0.0 {
                    let moved = translate_coeffs(&derivative(&slice, &[i, j])?, x, spec)?;
                    acc = acc.add_scaled(-0.5 * cij, &moved)?;
                }
            }
        }
    }
    acc = acc.add_scaled(1.0, ito_integral_with(f, path, t, opts.rule)?.coeffs())?;
    Ok(acc)
}

/// A scalar read-out of a spatial representative: a point value or a pairing.
#[derive(Debug, Clone)]
pub enum Functional {
    Point(Vec<f64>),
    Pairing(TestFunction),
}

impl Functional {
    pub fn id(&self) -> String {
        match self {
            Functional::Point(y) => {
                let parts: Vec<String> = y.iter().map(|v| v.to_string()).collect();
                format!("point({})", parts.join(";"))
            }
            Functional::Pairing(phi) => format!("pair:{}", phi.name),
        }
    }

    /// Applies the functional to a coefficient tensor.
    pub fn apply(&self, a: &CoeffTensor, spec: &BasisSpec) -> Result<f64> {
        match self {
            Functional::Point(y) => evaluate(a, y),
            Functional::Pairing(phi) => {
                let s = spec.at_level(a.level());
                pairing(a, &analyze(|x| phi.eval(x), &s)?)
            }
        }
    }
}

/// A representative reduced to what one functional needs.
#[derive(Debug, Clone)]
enum Repr {
    Coeffs(CoeffTensor),
    /// Quadrature weight times value at each grid node.
    Nodes(Vec<f64>),
}

#[derive(Debug, Clone)]
struct Jet {
    value: Repr,
    grad: Vec<Repr>,
    hess: Vec<Repr>,
    rate: Option<Repr>,
}

#[derive(Debug, Clone)]
enum Kernel {
    /// Hermite tables at `y − x`, one per axis.
    Tables(Vec<Vec<f64>>),
    /// `φ(z_q + x)` over the grid.
    Nodes(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct JetValues<'a> {
    value: f64,
    grad: &'a [f64],
    hess: &'a [f64],
    rate: f64,
}

/// Fast evaluation of `x ↦ ℓ(τ_x g)` for `g ∈ {f, ∂_i f, ∂_ij f, ∂_t f}`.
///
/// Point functionals synthesize `g(y − x)` directly. Pairings use
/// `⟨τ_x g, φ⟩ = ∫ g(z) φ(z + x) dz` on the Gauss grid of the element, which is
/// the coefficient pairing of `g` with `τ_{−x}φ` and needs no re-expansion.
#[derive(Clone)]
pub struct ItoProbe {
    dim: usize,
    class: TimeClass,
    times: Vec<f64>,
    explicit_rates: bool,
    jets: Vec<Jet>,
    functional: Functional,
    top_level: usize,
    grid: Vec<f64>,
}

impl std::fmt::Debug for ItoProbe {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ItoProbe").field("functional", &self.functional.id()).field("dim", &self.dim).finish()
    }
}

impl ItoProbe {
    pub fn new(f: &GenFuncRep, functional: Functional) -> Result<Self> {
        let d = f.dim();
        if let Functional::Point(y) = &functional {
            if y.len() != d {
                return invalid("evaluation point has the wrong dimension");
            }
        }
        let spec = f.spec();
        let axes: Vec<AxisGrid> = (0..d).map(|_| QuadRule::standard(spec).into()).collect();
        let nodes: Vec<&[f64]> = axes.iter().map(|a| a.nodes.as_slice()).collect();
        let weights = grid_weights(&axes);
        let grid: Vec<f64> = match functional {
            Functional::Pairing(_) => grid_points(&nodes).into_iter().flatten().collect(),
            Functional::Point(_) => Vec::new(),
        };
        let reduce = |a: CoeffTensor| -> Repr {
            match functional {
                Functional::Point(_) => Repr::Coeffs(a),
                Functional::Pairing(_) => {
                    let v = synthesize_grid(&a, &nodes);
                    Repr::Nodes(v.iter().zip(&weights).map(|(v, w)| v * w).collect())
                }
            }
        };
        let jet_of = |a: &CoeffTensor, rate: Option<&CoeffTensor>| -> Result<Jet> {
            let grad = (0..d).map(|i| derivative(a, &[i]).map(&reduce)).collect::<Result<Vec<_>>>()?;
            let mut hess = Vec::with_capacity(d * d);
            for i in 0..d {
                for j in 0..d {
                    hess.push(reduce(derivative(a, &[i, j])?));
                }
            }
            Ok(Jet { value: reduce(a.clone()), grad, hess, rate: rate.map(|r| reduce(r.clone())) })
        };
        let rates = f.rates();
        let jets = f
            .slices()
            .iter()
            .enumerate()
            .map(|(k, a)| jet_of(a, rates.get(k)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dim: d,
            class: f.class(),
            times: f.times().to_vec(),
            explicit_rates: !rates.is_empty(),
            jets,
            functional,
            top_level: f.level() + 2,
            grid,
        })
    }

    pub fn functional(&self) -> &Functional {
        &self.functional
    }

    fn kernel(&self, x: &[f64]) -> Kernel {
        match &self.functional {
            Functional::Point(y) => Kernel::Tables(
                y.iter().zip(x).map(|(y, x)| crate::hermite::hermite_funcs_upto(self.top_level, y - x)).collect(),
            ),
            Functional::Pairing(phi) => {
                let d = self.dim;
                let mut buf = vec![0.0; d];
                Kernel::Nodes(
                    self.grid
                        .chunks(d)
                        .map(|z| {
                            for i in 0..d {
                                buf[i] = z[i] + x[i];
                            }
                            phi.eval(&buf)
                        })
                        .collect(),
                )
            }
        }
    }

    fn apply(kernel: &Kernel, repr: &Repr) -> f64 {
        match (kernel, repr) {
            (Kernel::Nodes(phi), Repr::Nodes(g)) => phi.iter().zip(g).map(|(a, b)| a * b).sum(),
            (Kernel::Tables(tables), Repr::Coeffs(a)) => {
                let mut idx = vec![0; a.dim()];
                let mut s = 0.0;
                for (flat, &c) in a.values().iter().enumerate() {
                    if c == 0.0 {
                        continue;
                    }
                    a.unflatten_into(flat, &mut idx);
                    s += c * idx.iter().enumerate().map(|(ax, &i)| tables[ax][i]).product::<f64>();
                }
                s
            }
            _ => unreachable!("kernel and representation come from the same functional"),
        }
    }

    fn jet_values(&self, jet: &Jet, kernel: &Kernel, out: &mut [f64]) -> (f64, Option<f64>) {
        let d = self.dim;
        for (i, g) in jet.grad.iter().enumerate() {
            out[i] = Self::apply(kernel, g);
        }
        for (e, h) in jet.hess.iter().enumerate() {
            out[d + e] = Self::apply(kernel, h);
        }
        (Self::apply(kernel, &jet.value), jet.rate.as_ref().map(|r| Self::apply(kernel, r)))
    }

    /// `ℓ(τ_x f_t)` only.
    pub fn value(&self, x: &[f64], t: f64) -> f64 {
        let kernel = self.kernel(x);
        if self.jets.len() == 1 {
            return Self::apply(&kernel, &self.jets[0].value);
        }
        let (k, s) = self.locate(t);
        (1.0 - s) * Self::apply(&kernel, &self.jets[k].value) + s * Self::apply(&kernel, &self.jets[k + 1].value)
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.times.len();
        let k = match self.times.iter().rposition(|&s| s <= t) {
            None => 0,
            Some(k) => k.min(n - 2),
        };
        let frac = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        (k, frac.clamp(0.0, 1.0))
    }

    fn values_at<'b>(&self, x: &[f64], t: f64, buf: &'b mut [f64], tmp: &mut [f64]) -> JetValues<'b> {
        let d = self.dim;
        let kernel = self.kernel(x);
        if self.class == TimeClass::Static || self.jets.len() == 1 {
            let (v, _) = self.jet_values(&self.jets[0], &kernel, buf);
            let (grad, hess) = buf.split_at(d);
            return JetValues { value: v, grad, hess, rate: 0.0 };
        }
        let (k, s) = self.locate(t);
        let (v0, r0) = self.jet_values(&self.jets[k], &kernel, buf);
        let (v1, r1) = self.jet_values(&self.jets[k + 1], &kernel, tmp);
        for (a, b) in buf.iter_mut().zip(tmp.iter()) {
            *a = (1.0 - s) * *a + s * b;
        }
        let rate = if self.explicit_rates {
            (1.0 - s) * r0.unwrap_or(0.0) + s * r1.unwrap_or(0.0)
        } else {
            (v1 - v0) / (self.times[k + 1] - self.times[k])
        };
        let (grad, hess) = buf.split_at(d);
        JetValues { value: (1.0 - s) * v0 + s * v1, grad, hess, rate }
    }

    /// Scalar Itô residual of one path up to grid index `k_end`.
    pub fn residual(&self, path: &Path, k_end: usize, opts: ResidualOptions) -> Result<f64> {
        let d = self.dim;
        if path.dim != d {
            return invalid("path dimension does not match the element");
        }
        if k_end > path.grid.steps {
            return invalid("end index beyond the path");
        }
        let grid = path.grid;
        let dt = grid.dt();
        let mut buf = vec![0.0; d + d * d];
        let mut tmp = vec![0.0; d + d * d];
        let mut terms = Vec::with_capacity(3 * k_end + 2);
        terms.push(self.value(path.point(k_end), grid.time(k_end)));
        terms.push(-self.value(path.point(0), 0.0));
        for k in 0..k_end {
            let dx = path.increment(k);
            let c = path.bracket(k, opts.bracket);
            let jv = self.values_at(path.point(k), grid.time(k), &mut buf, &mut tmp);
            terms.push(-jv.rate * dt);
            let mut second = 0.0;
            for e in 0..d * d {
                second += jv.hess[e] * c[e];
            }
            terms.push(-0.5 * second);
            let mut first: f64 = jv.grad.iter().zip(&dx).map(|(g, v)| g * v).sum();
            if opts.rule == EvalRule::Midpoint {
                let (xm, tm) = eval_point(path, k, EvalRule::Midpoint);
                let jm = self.values_at(&xm, tm, &mut buf, &mut tmp);
                first = jm.grad.iter().zip(&dx).map(|(g, v)| g * v).sum();
            }
            terms.push(first);
        }
        let r = compensated_sum(terms);
        if !r.is_finite() {
            return invalid("non-finite residual");
        }
        Ok(r)
    }
}

/// Residuals of one path, one per functional.
pub fn ito_residual(
    f: &GenFuncRep,
    path: &Path,
    t: f64,
    functionals: &[Functional],
    opts: ResidualOptions,
) -> Result<Vec<f64>> {
    let k_end = check_path(f, path, t)?;
    functionals
        .iter()
        .map(|l| ItoProbe::new(f, l.clone())?.residual(path, k_end, opts))
        .collect()
}

/// Residuals for every path of an ensemble, in path order.
pub fn ensemble_residuals(probe: &ItoProbe, paths: &[Path], t: f64, opts: ResidualOptions) -> Result<Vec<f64>> {
    paths
        .par_iter()
        .map(|p| probe.residual(p, p.grid.index_of(t)?, opts))
        .collect()
}

/// Root mean square with a fixed summation order.
pub fn rms(values: &[f64]) -> f64 {
    let sq: Vec<f64> = values.iter().map(|v| v * v).collect();
    (pairwise_sum(&sq) / values.len() as f64).sqrt()
}

/// Weak-form residual for `ι(T)` at truncation `level`, paired with `φ`.
pub fn ustunel_weak_residual(
    t_dist: &DistributionSpec,
    path: &Path,
    phi: &TestFunction,
    t: f64,
    level: usize,
    opts: ResidualOptions,
) -> Result<f64> {
    let f = embed(t_dist, &BasisSpec::new(path.dim, level))?;
    let k_end = check_path(&f, path, t)?;
    ItoProbe::new(&f, Functional::Pairing(phi.clone()))?.residual(path, k_end, opts)
}

/// One line of an Itô convergence table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItoRow {
    pub dt: f64,
    pub functional_id: String,
    pub rms_residual: f64,
    pub n_paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItoReport {
    pub rows: Vec<ItoRow>,
    /// Log-log slope of RMS residual against `Δt`, per functional.
    pub fitted_order: Vec<(String, f64)>,
}

impl ItoReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["dt", "functional_id", "rms_residual", "n_paths", "seed"])?;
        for r in &self.rows {
            w.write_record([
                format!("{:e}", r.dt),
                r.functional_id.clone(),
                format!("{:e}", r.rms_residual),
                r.n_paths.to_string(),
                r.seed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn order(&self, functional_id: &str) -> Option<f64> {
        self.fitted_order.iter().find(|(id, _)| id == functional_id).map(|(_, s)| *s)
    }
}

/// Brownian ensemble on the finest step, coarsened to every other step in `dts`.
pub fn nested_bm(dim: usize, horizon: f64, dts: &[f64], count: usize, seed: u64) -> Result<Vec<PathEnsemble>> {
    let finest = dts.iter().copied().fold(f64::INFINITY, f64::min);
    if dts.is_empty() || !finest.is_finite() {
        return invalid("need at least one step size");
    }
    let base = simulate_bm(dim, TimeGrid::with_step(horizon, finest)?, count, seed)?;
    dts.iter()
        .map(|&dt| {
            let factor = (dt / finest).round() as usize;
            if factor == 0 || ((factor as f64) * finest - dt).abs() > 1e-9 * dt {
                return invalid(format!("step {dt} is not a multiple of {finest}"));
            }
            let paths = base.paths.iter().map(|p| p.coarsen(factor)).collect::<Result<Vec<_>>>()?;
            Ok(PathEnsemble { paths, seed, scheme: base.scheme.clone() })
        })
        .collect()
}

/// RMS Itô residual over Brownian paths at `t = horizon` for each step size.
pub fn ito_convergence(
    f: &GenFuncRep,
    functionals: &[Functional],
    horizon: f64,
    dts: &[f64],
    count: usize,
    seed: u64,
    opts: ResidualOptions,
) -> Result<ItoReport> {
    let ensembles = nested_bm(f.dim(), horizon, dts, count, seed)?;
    let mut rows = Vec::new();
    let mut fitted = Vec::new();
    for l in functionals {
        let probe = ItoProbe::new(f, l.clone())?;
        let mut ys = Vec::with_capacity(dts.len());
        for (ens, &dt) in ensembles.iter().zip(dts) {
            let r = rms(&ensemble_residuals(&probe, &ens.paths, horizon, opts)?);
            ys.push(r);
            rows.push(ItoRow { dt, functional_id: l.id(), rms_residual: r, n_paths: count, seed });
        }
        fitted.push((l.id(), log_log_slope(dts, &ys)));
    }
    Ok(ItoReport { rows, fitted_order: fitted })
}

/// Weak-form residuals of one distribution over nested levels and step sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakStudy {
    pub levels: Vec<usize>,
    pub dts: Vec<f64>,
    /// `rms[i][j]`: RMS residual over paths at `levels[i]`, `dts[j]`.
    pub rms: Vec<Vec<f64>>,
    /// `level_gaps[j][i]`: RMS over paths of the change from `levels[i]` to `levels[i + 1]` at `dts[j]`.
    pub level_gaps: Vec<Vec<f64>>,
    pub report: ItoReport,
}

impl WeakStudy {
    /// Successive level gaps shrink at every step size.
    pub fn stabilizes(&self) -> bool {
        self.level_gaps.iter().all(|g| g.windows(2).all(|w| w[1] < w[0]))
    }

    /// Fitted Δt-slope at the finest level.
    pub fn order(&self) -> f64 {
        self.report.fitted_order.last().map_or(f64::NAN, |(_, s)| *s)
    }
}

/// Runs the weak residual of `T` against `φ` for every level on the same nested
/// Brownian ensemble. Report ids read `weak:N=<level>:pair:<φ>`.
#[allow(clippy::too_many_arguments)]
pub fn weak_level_study(
    t_dist: &DistributionSpec,
    dim: usize,
    phi: &TestFunction,
    levels: &[usize],
    horizon: f64,
    dts: &[f64],
    count: usize,
    seed: u64,
    opts: ResidualOptions,
) -> Result<WeakStudy> {
    if levels.is_empty() {
        return invalid("weak study needs at least one level");
    }
    let ensembles = nested_bm(dim, horizon, dts, count, seed)?;
    let mut per_level = Vec::with_capacity(levels.len());
    let mut rows = Vec::new();
    let mut fitted = Vec::new();
    for &level in levels {
        let f = embed(t_dist, &BasisSpec::new(dim, level))?;
        let probe = ItoProbe::new(&f, Functional::Pairing(phi.clone()))?;
        let id = format!("weak:N={level}:pair:{}", phi.name);
        let residuals = ensembles
            .iter()
            .map(|ens| ensemble_residuals(&probe, &ens.paths, horizon, opts))
            .collect::<Result<Vec<_>>>()?;
        let ys: Vec<f64> = residuals.iter().map(|r| rms(r)).collect();
        for (&dt, &r) in dts.iter().zip(&ys) {
            rows.push(ItoRow { dt, functional_id: id.clone(), rms_residual: r, n_paths: count, seed });
        }
        fitted.push((id, log_log_slope(dts, &ys)));
        per_level.push(residuals);
    }
    let rms_table = per_level.iter().map(|r| r.iter().map(|v| rms(v)).collect()).collect();
    let level_gaps = (0..dts.len())
        .map(|j| {
            per_level
                .windows(2)
                .map(|w| {
                    let diff: Vec<f64> = w[1][j].iter().zip(&w[0][j]).map(|(a, b)| a - b).collect();
                    rms(&diff)
                })
                .collect()
        })
        .collect();
    Ok(WeakStudy {
        levels: levels.to_vec(),
        dts: dts.to_vec(),
        rms: rms_table,
        level_gaps,
        report: ItoReport { rows, fitted_order: fitted },
    })
}
