//! Generalized functions as families of Hermite partial sums.
//!
//! A [`GenFuncRep`] stores one coefficient tensor at its maximal box level;
//! the representative family `(f_β)` is the set of its box partial sums. The
//! embedding of a tempered distribution `T` stores `T(h_γ)`, so `ι(T) = [T_β]`
//! with `T_β = Σ_{γ≤β} T(h_γ) h_γ`. Time-dependent elements carry one tensor per
//! node of a time grid and are linear in `t` between nodes.

use std::fmt;
use std::fs::File;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coeffs::{self, analyze, analyze_grid, pairing, seminorm, synthesize_grid, AxisGrid, CoeffTensor};
use crate::error::{invalid, Result};
use crate::hermite::{
    build_quadrature, hermite_func_derivs_upto, hermite_funcs_upto, ladder_derivative, BasisSpec, MultiIndex,
    QuadRule,
};

pub type Evaluable = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A named test function on `ℝ^d`.
#[derive(Clone)]
pub struct TestFunction {
    pub name: String,
    f: Evaluable,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction").field("name", &self.name).finish()
    }
}

impl TestFunction {
    pub fn new(name: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), f: Arc::new(f) }
    }

    /// `e^{-|x - c|²/(2v)}`.
    pub fn gaussian(center: Vec<f64>, variance: f64) -> Self {
        let c: Vec<String> = center.iter().map(|v| v.to_string()).collect();
        let name = format!("gauss(c={};v={variance})", c.join(";"));
        Self::new(name, move |x| {
            let r2: f64 = x.iter().zip(&center).map(|(a, c)| (a - c) * (a - c)).sum();
            (-r2 / (2.0 * variance)).exp()
        })
    }

    /// `e^{-|x|²/2}` in `d` dimensions.
    pub fn standard_gaussian(dim: usize) -> Self {
        let mut t = Self::gaussian(vec![0.0; dim], 1.0);
        t.name = "gauss".into();
        t
    }

    /// Smooth bump equal to 1 on `|x_i| ≤ inner` and vanishing for `|x_i| ≥ outer`, per axis.
    pub fn plateau(inner: f64, outer: f64) -> Self {
        let step = move |r: f64| -> f64 {
            let r = r.abs();
            if r <= inner {
                1.0
            } else if r >= outer {
                0.0
            } else {
                let s = (r - inner) / (outer - inner);
                let a = (-1.0 / (1.0 - s)).exp();
                let b = (-1.0 / s).exp();
                a / (a + b)
            }
        };
        Self::new(format!("plateau({inner};{outer})"), move |x| x.iter().map(|&v| step(v)).product())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    pub fn evaluable(&self) -> Evaluable {
        Arc::clone(&self.f)
    }
}

/// A tempered distribution given by a finite recipe.
#[derive(Debug, Clone)]
pub enum DistributionSpec {
    Dirac(Vec<f64>),
    DiracDerivative { point: Vec<f64>, axis: usize },
    Sampled(TestFunction),
    Coefficients(CoeffTensor),
    Combination(Vec<(f64, DistributionSpec)>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeClass {
    Static,
    C0,
    C1,
}

/// Representative of an element of `H(ℝ^d)`, `H^0_T` or `H^1_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct GenFuncRep {
    spec: BasisSpec,
    class: TimeClass,
    times: Vec<f64>,
    slices: Vec<CoeffTensor>,
    /// Explicit `∂_t` representative per node; empty means "slope of the interpolant".
    rates: Vec<CoeffTensor>,
}

impl GenFuncRep {
    pub fn from_coeffs(spec: &BasisSpec, coeffs: CoeffTensor) -> Self {
        let spec = spec.at_level(coeffs.level());
        Self { spec, class: TimeClass::Static, times: Vec::new(), slices: vec![coeffs], rates: Vec::new() }
    }

    pub fn zero(spec: &BasisSpec) -> Self {
        Self::from_coeffs(spec, CoeffTensor::zeros(spec.dim, spec.level))
    }

    /// Time-indexed element; `rates`, if given, must match `slices` one to one.
    pub fn time_dependent(
        spec: &BasisSpec,
        class: TimeClass,
        times: Vec<f64>,
        slices: Vec<CoeffTensor>,
        rates: Option<Vec<CoeffTensor>>,
    ) -> Result<Self> {
        if class == TimeClass::Static {
            return invalid("static elements carry no time grid");
        }
        if times.is_empty() || times.len() != slices.len() {
            return invalid("time grid and slices must be nonempty and of equal length");
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return invalid("time grid must be finite and strictly increasing");
        }
        let level = slices[0].level();
        if slices.iter().any(|s| s.level() != level || s.dim() != spec.dim) {
            return invalid("all slices must share one box");
        }
        let rates = rates.unwrap_or_default();
        if !rates.is_empty() {
            if class != TimeClass::C1 {
                return invalid("time derivatives are only carried by C1 elements");
            }
            if rates.len() != slices.len() || rates.iter().any(|r| r.level() != level) {
                return invalid("rates must match slices");
            }
        }
        Ok(Self { spec: spec.at_level(level), class, times, slices, rates })
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn class(&self) -> TimeClass {
        self.class
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn slices(&self) -> &[CoeffTensor] {
        &self.slices
    }

    /// Explicit `∂_t` tensors, one per node, when the element carries them.
    pub fn rates(&self) -> &[CoeffTensor] {
        &self.rates
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn level(&self) -> usize {
        self.slices[0].level()
    }

    /// Spatial coefficients of a static element (first slice otherwise).
    pub fn coeffs(&self) -> &CoeffTensor {
        &self.slices[0]
    }

    /// Bracketing node index and fraction for `t`, clamped to the grid.
    pub(crate) fn locate(&self, t: f64) -> (usize, f64) {
        let k = match self.times.iter().rposition(|&s| s <= t) {
            None => 0,
            Some(k) if k + 1 >= self.times.len() => self.times.len().saturating_sub(2),
            Some(k) => k,
        };
        if self.times.len() < 2 {
            return (0, 0.0);
        }
        let frac = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        (k, frac.clamp(0.0, 1.0))
    }

    /// Spatial representative at time `t` (piecewise-linear in `t`).
    pub fn at(&self, t: f64) -> CoeffTensor {
        if self.class == TimeClass::Static || self.slices.len() == 1 {
            return self.slices[0].clone();
        }
        let (k, s) = self.locate(t);
        lerp(&self.slices[k], &self.slices[k + 1], s)
    }

    /// `∂_t` representative at time `t`.
    pub fn rate_at(&self, t: f64) -> CoeffTensor {
        match self.class {
            TimeClass::Static => CoeffTensor::zeros(self.dim(), self.level()),
            _ if !self.rates.is_empty() => {
                if self.rates.len() == 1 {
                    return self.rates[0].clone();
                }
                let (k, s) = self.locate(t);
                lerp(&self.rates[k], &self.rates[k + 1], s)
            }
            _ => {
                if self.slices.len() < 2 {
                    return CoeffTensor::zeros(self.dim(), self.level());
                }
                let (k, _) = self.locate(t);
                let dt = self.times[k + 1] - self.times[k];
                self.slices[k + 1]
                    .add_scaled(-1.0, &self.slices[k])
                    .expect("slices share a box")
                    .scaled(1.0 / dt)
            }
        }
    }

    /// Applies a spatial operation to every slice and rate.
    pub fn map_spatial(&self, op: impl Fn(&CoeffTensor) -> Result<CoeffTensor>) -> Result<GenFuncRep> {
        let slices = self.slices.iter().map(&op).collect::<Result<Vec<_>>>()?;
        let rates = self.rates.iter().map(&op).collect::<Result<Vec<_>>>()?;
        let level = slices[0].level();
        Ok(GenFuncRep { spec: self.spec.at_level(level), class: self.class, times: self.times.clone(), slices, rates })
    }

    pub fn scaled(&self, factor: f64) -> GenFuncRep {
        self.map_spatial(|c| Ok(c.scaled(factor))).expect("scaling cannot fail")
    }

    /// `self + factor · other` for static elements.
    pub fn add_scaled(&self, factor: f64, other: &GenFuncRep) -> Result<GenFuncRep> {
        if self.class != TimeClass::Static || other.class != TimeClass::Static {
            return invalid("sums are only formed for static elements");
        }
        let c = self.coeffs().add_scaled(factor, other.coeffs())?;
        Ok(GenFuncRep::from_coeffs(&self.spec, c))
    }

    /// Truncation to a smaller (or zero-padded larger) box.
    pub fn truncated(&self, level: usize) -> GenFuncRep {
        self.map_spatial(|c| Ok(c.resized(level))).expect("resizing cannot fail")
    }

    /// Writes `<stem>.json` and one coefficient CSV per stored time.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let meta = Sidecar {
            dim: self.dim(),
            level: self.level(),
            time_class: self.class,
            time_grid: self.times.clone(),
        };
        serde_json::to_writer_pretty(File::create(dir.join(format!("{stem}.json")))?, &meta)?;
        if self.class == TimeClass::Static {
            self.slices[0].write_csv(File::create(dir.join(format!("{stem}.csv")))?)?;
        } else {
            for (k, s) in self.slices.iter().enumerate() {
                s.write_csv(File::create(dir.join(format!("{stem}_{k}.csv")))?)?;
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<GenFuncRep> {
        let meta: Sidecar = serde_json::from_reader(File::open(dir.join(format!("{stem}.json")))?)?;
        let spec = BasisSpec::new(meta.dim, meta.level);
        let read = |name: String| -> Result<CoeffTensor> {
            let t = CoeffTensor::read_csv(File::open(dir.join(name))?)?;
            if t.dim() != meta.dim || t.level() != meta.level {
                return invalid("coefficient file does not match its sidecar");
            }
            Ok(t)
        };
        match meta.time_class {
            TimeClass::Static => Ok(GenFuncRep::from_coeffs(&spec, read(format!("{stem}.csv"))?)),
            class => {
                let slices = (0..meta.time_grid.len())
                    .map(|k| read(format!("{stem}_{k}.csv")))
                    .collect::<Result<Vec<_>>>()?;
                GenFuncRep::time_dependent(&spec, class, meta.time_grid, slices, None)
            }
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    dim: usize,
    level: usize,
    time_class: TimeClass,
    time_grid: Vec<f64>,
}

fn lerp(a: &CoeffTensor, b: &CoeffTensor, s: f64) -> CoeffTensor {
    let mut out = a.scaled(1.0 - s);
    for (o, v) in out.values_mut().iter_mut().zip(b.values()) {
        *o += s * v;
    }
    out
}

fn check_point(point: &[f64], spec: &BasisSpec) -> Result<()> {
    if point.len() != spec.dim {
        return invalid(format!("point has dimension {} but basis has {}", point.len(), spec.dim));
    }
    if point.iter().any(|v| !v.is_finite() || v.abs() > spec.quad_halfwidth) {
        return invalid(format!("point {point:?} lies outside the window ±{}", spec.quad_halfwidth));
    }
    Ok(())
}

fn embed_coeffs(t: &DistributionSpec, spec: &BasisSpec) -> Result<CoeffTensor> {
    let n = spec.level;
    match t {
        DistributionSpec::Dirac(point) => {
            check_point(point, spec)?;
            let tables: Vec<Vec<f64>> = point.iter().map(|&x| hermite_funcs_upto(n, x)).collect();
            Ok(CoeffTensor::from_fn(spec.dim, n, |idx| idx.iter().enumerate().map(|(a, &i)| tables[a][i]).product()))
        }
        DistributionSpec::DiracDerivative { point, axis } => {
            check_point(point, spec)?;
            if *axis >= spec.dim {
                return invalid(format!("axis {axis} out of range for dimension {}", spec.dim));
            }
            let tables: Vec<Vec<f64>> = point
                .iter()
                .enumerate()
                .map(|(a, &x)| if a == *axis { hermite_func_derivs_upto(n, x) } else { hermite_funcs_upto(n, x) })
                .collect();
            // (∂δ)(h) = −∂h(x₀)
            Ok(CoeffTensor::from_fn(spec.dim, n, |idx| {
                -idx.iter().enumerate().map(|(a, &i)| tables[a][i]).product::<f64>()
            }))
        }
        DistributionSpec::Sampled(f) => analyze(|x| f.eval(x), spec),
        DistributionSpec::Coefficients(c) => {
            if c.dim() != spec.dim {
                return invalid("coefficient list dimension does not match the basis");
            }
            Ok(c.resized(spec.level))
        }
        DistributionSpec::Combination(parts) => {
            let mut acc = CoeffTensor::zeros(spec.dim, n);
            for (w, part) in parts {
                acc = acc.add_scaled(*w, &embed_coeffs(part, spec)?)?;
            }
            Ok(acc)
        }
    }
}

/// The embedding `ι(T) = [T_β]`: stores `T(h_γ)` for `γ` in the box of `spec`.
pub fn embed(t: &DistributionSpec, spec: &BasisSpec) -> Result<GenFuncRep> {
    spec.validate()?;
    let coeffs = embed_coeffs(t, spec)?;
    Ok(GenFuncRep::from_coeffs(spec, coeffs))
}

fn check_same_space(f: &GenFuncRep, g: &GenFuncRep) -> Result<()> {
    if f.dim() != g.dim() || f.level() != g.level() {
        return invalid(format!(
            "operands live in different spaces: (d={}, N={}) vs (d={}, N={})",
            f.dim(),
            f.level(),
            g.dim(),
            g.level()
        ));
    }
    Ok(())
}

fn multiply_coeffs(a: &CoeffTensor, b: &CoeffTensor, spec: &BasisSpec) -> Result<CoeffTensor> {
    let out_level = 2 * a.level();
    // f_N g_N h_γ is a polynomial of degree ≤ 4N times e^{-3y²/4}.
    let rule: AxisGrid = QuadRule::gaussian(spec.quad_nodes, 0.0, (2.0_f64 / 3.0).sqrt(), spec.quad_halfwidth).into();
    let axes = vec![rule; a.dim()];
    let nodes: Vec<&[f64]> = axes.iter().map(|r| r.nodes.as_slice()).collect();
    let fa = synthesize_grid(a, &nodes);
    let fb = synthesize_grid(b, &nodes);
    let prod: Vec<f64> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    analyze_grid(&prod, &axes, out_level)
}

/// Representative-wise product re-expanded at level `2N`.
pub fn multiply(f: &GenFuncRep, g: &GenFuncRep) -> Result<GenFuncRep> {
    check_same_space(f, g)?;
    let out_spec = f.spec.at_level(2 * f.level());
    build_quadrature(&out_spec)?;
    match (f.class, g.class) {
        (TimeClass::Static, TimeClass::Static) => {
            Ok(GenFuncRep::from_coeffs(&out_spec, multiply_coeffs(f.coeffs(), g.coeffs(), &f.spec)?))
        }
        _ => {
            if f.times != g.times {
                return invalid("time-dependent products need a shared time grid");
            }
            let slices = f
                .slices
                .iter()
                .zip(&g.slices)
                .map(|(a, b)| multiply_coeffs(a, b, &f.spec))
                .collect::<Result<Vec<_>>>()?;
            let class = if f.class == TimeClass::C0 || g.class == TimeClass::C0 { TimeClass::C0 } else { TimeClass::C1 };
            GenFuncRep::time_dependent(&out_spec, class, f.times.clone(), slices, None)
        }
    }
}

/// `∂^α` applied to every representative; the level grows by `|α|`.
pub fn differentiate(f: &GenFuncRep, alpha: &MultiIndex) -> Result<GenFuncRep> {
    if alpha.dim() != f.dim() {
        return invalid("multi-index dimension does not match");
    }
    f.map_spatial(|c| {
        let mut out = c.clone();
        for (axis, &k) in alpha.entries().iter().enumerate() {
            for _ in 0..k {
                out = ladder_derivative(&out, axis)?;
            }
        }
        Ok(out)
    })
}

/// Coefficients of `τ_x f_N` at level `N`.
///
/// Along each axis the integrand `f_N(y − x) h_γ(y)` is a polynomial times
/// `e^{-(y − x/2)²/2}`, so a Gauss rule centred at `x/2` is exact.
pub fn translate_coeffs(a: &CoeffTensor, shift: &[f64], spec: &BasisSpec) -> Result<CoeffTensor> {
    if shift.len() != a.dim() {
        return invalid("shift dimension does not match");
    }
    let norm = shift.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !norm.is_finite() || norm > spec.quad_halfwidth {
        return invalid(format!("shift {shift:?} too large for window ±{}", spec.quad_halfwidth));
    }
    if shift.iter().all(|&s| s == 0.0) {
        return Ok(a.clone());
    }
    let m = spec.quad_nodes.max(a.level() + 1);
    let axes: Vec<AxisGrid> = shift
        .iter()
        .map(|&s| QuadRule::gaussian(m, 0.5 * s, 1.0, spec.quad_halfwidth + s.abs()).into())
        .collect();
    let shifted: Vec<Vec<f64>> = axes
        .iter()
        .zip(shift)
        .map(|(r, &s)| r.nodes.iter().map(|y| y - s).collect())
        .collect();
    let nodes: Vec<&[f64]> = shifted.iter().map(|v| v.as_slice()).collect();
    let values = synthesize_grid(a, &nodes);
    analyze_grid(&values, &axes, a.level())
}

/// `τ_x [f_β] = [τ_x f_β]`, re-expanded at the same level.
pub fn translate(f: &GenFuncRep, shift: &[f64]) -> Result<GenFuncRep> {
    f.map_spatial(|c| translate_coeffs(c, shift, &f.spec))
}

/// Outcome of an association check over a list of box levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssociationReport {
    pub levels: Vec<usize>,
    pub tests: Vec<String>,
    /// `gaps[i][j]` = `|∫(f_β − g_β) φ_j|` at `levels[i]`.
    pub gaps: Vec<Vec<f64>>,
    pub tol: f64,
    pub verdict: bool,
}

pub const DEFAULT_ASSOCIATION_TOL: f64 = 1e-4;
/// Gaps below this are treated as converged when judging the trend.
const GAP_FLOOR: f64 = 1e-12;

impl AssociationReport {
    pub fn final_gaps(&self) -> &[f64] {
        self.gaps.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn gap_sequence(&self, test: usize) -> Vec<f64> {
        self.gaps.iter().map(|row| row[test]).collect()
    }

    /// Every gap strictly below its predecessor.
    pub fn strictly_decreasing(&self, test: usize) -> bool {
        self.gap_sequence(test).windows(2).all(|w| w[1] < w[0])
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["level", "test_id", "gap"])?;
        for (level, row) in self.levels.iter().zip(&self.gaps) {
            for (name, gap) in self.tests.iter().zip(row) {
                w.write_record([level.to_string(), name.clone(), format!("{gap:e}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Gaps for the box partial sums of two fixed elements.
pub fn associated(
    f: &GenFuncRep,
    g: &GenFuncRep,
    tests: &[TestFunction],
    levels: &[usize],
    tol: f64,
) -> Result<AssociationReport> {
    if f.dim() != g.dim() {
        return invalid("association of elements in different dimensions");
    }
    let top = levels.iter().copied().max().unwrap_or(0);
    let (fc, gc) = (f.coeffs().resized(top.max(f.level())), g.coeffs().resized(top.max(g.level())));
    associated_families(
        |level| Ok(fc.box_partial(level).resized(level)),
        |level| Ok(gc.box_partial(level).resized(level)),
        f.dim(),
        tests,
        levels,
        tol,
    )
}

/// Gaps `|∫(f_β − g_β) φ|` where the representatives at each level are built
/// by the supplied closures, e.g. `f_β = τ_x ι(T)_β` against `g_β = ι(τ_x T)_β`.
pub fn associated_families(
    f: impl Fn(usize) -> Result<CoeffTensor>,
    g: impl Fn(usize) -> Result<CoeffTensor>,
    dim: usize,
    tests: &[TestFunction],
    levels: &[usize],
    tol: f64,
) -> Result<AssociationReport> {
    if tests.is_empty() {
        return invalid("association needs at least one test function");
    }
    if levels.is_empty() {
        return invalid("association needs at least one level");
    }
    let top = levels.iter().copied().max().expect("nonempty");
    let spec = BasisSpec::new(dim, top);
    let test_coeffs = tests
        .iter()
        .map(|t| analyze(|x| t.eval(x), &spec))
        .collect::<Result<Vec<_>>>()?;
    let gaps: Vec<Vec<f64>> = levels
        .iter()
        .map(|&level| {
            let diff = f(level)?.resized(level).add_scaled(-1.0, &g(level)?.resized(level))?;
            test_coeffs
                .iter()
                .map(|phi| pairing(&diff, &phi.resized(level)).map(f64::abs))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let verdict = (0..tests.len()).all(|j| {
        let seq: Vec<f64> = gaps.iter().map(|row| row[j]).collect();
        let last = seq[seq.len() - 1];
        let settling = seq.len() < 2 || last <= seq[seq.len() - 2].max(GAP_FLOOR);
        settling && last < tol
    });
    Ok(AssociationReport {
        levels: levels.to_vec(),
        tests: tests.iter().map(|t| t.name.clone()).collect(),
        gaps,
        tol,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranslationBoundRow {
    pub shift: Vec<f64>,
    pub shifted_seminorm: f64,
    pub seminorm: f64,
    /// `|τ_x φ|_n / ((1 + |x|)^{2n} |φ|_n)`.
    pub ratio: f64,
}

/// Ratios of translated to untranslated seminorms against the `(1+|x|)^{2n}` envelope.
pub fn check_translation_bound(
    phi: &TestFunction,
    n: i64,
    shifts: &[Vec<f64>],
    spec: &BasisSpec,
) -> Result<Vec<TranslationBoundRow>> {
    let base = seminorm(&analyze(|x| phi.eval(x), spec)?, n)?;
    shifts
        .iter()
        .map(|shift| {
            if shift.len() != spec.dim || shift.iter().any(|v| !v.is_finite()) {
                return invalid(format!("bad shift {shift:?}"));
            }
            let shifted = analyze(
                |y| {
                    let z: Vec<f64> = y.iter().zip(shift).map(|(a, b)| a - b).collect();
                    phi.eval(&z)
                },
                spec,
            )?;
            let s = seminorm(&shifted, n)?;
            let r = shift.iter().map(|v| v * v).sum::<f64>().sqrt();
            Ok(TranslationBoundRow {
                shift: shift.clone(),
                shifted_seminorm: s,
                seminorm: base,
                ratio: s / ((1.0 + r).powi(2 * n as i32) * base),
            })
        })
        .collect()
}

/// Empirical `|φψ|_n / (|φ|_r |ψ|_s)` for the multiplication seminorm estimate.
pub fn multiplication_ratio(phi: &TestFunction, psi: &TestFunction, n: i64, r: i64, s: i64, spec: &BasisSpec) -> Result<f64> {
    let prod = analyze(|x| phi.eval(x) * psi.eval(x), spec)?;
    let a = analyze(|x| phi.eval(x), spec)?;
    let b = analyze(|x| psi.eval(x), spec)?;
    Ok(seminorm(&prod, n)? / (seminorm(&a, r)? * seminorm(&b, s)?))
}

/// `h[f] = [h f_β]` on a time grid; `h` returns `(h(t), h'(t))`.
pub fn scale_in_time(h: impl Fn(f64) -> (f64, f64), f: &GenFuncRep, times: &[f64]) -> Result<GenFuncRep> {
    if f.class != TimeClass::Static {
        return invalid("time scaling applies to static elements");
    }
    let (slices, rates): (Vec<_>, Vec<_>) = times
        .iter()
        .map(|&t| {
            let (v, dv) = h(t);
            (f.coeffs().scaled(v), f.coeffs().scaled(dv))
        })
        .unzip();
    GenFuncRep::time_dependent(&f.spec, TimeClass::C1, times.to_vec(), slices, Some(rates))
}

/// Pairing of the full stored box with a test function.
pub fn pair_with(f: &CoeffTensor, phi: &TestFunction, spec: &BasisSpec) -> Result<f64> {
    let s = spec.at_level(f.level());
    pairing(f, &coeffs::analyze(|x| phi.eval(x), &s)?)
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn translation_is_adjoint_to_its_inverse(
            a in proptest::collection::vec(-2.0f64..2.0, 17),
            b in proptest::collection::vec(-2.0f64..2.0, 17),
            s in -3.0f64..3.0,
        ) {
            let spec = BasisSpec::new(1, 16);
            let a = CoeffTensor::from_values(1, 16, a).unwrap();
            let b = CoeffTensor::from_values(1, 16, b).unwrap();
            let lhs = pairing(&translate_coeffs(&a, &[s], &spec).unwrap(), &b).unwrap();
            let rhs = pairing(&a, &translate_coeffs(&b, &[-s], &spec).unwrap()).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
        }

        #[test]
        fn zero_shift_is_identity(a in proptest::collection::vec(-2.0f64..2.0, 25)) {
            let spec = BasisSpec::new(2, 4);
            let a = CoeffTensor::from_values(2, 4, a).unwrap();
            prop_assert!(translate_coeffs(&a, &[0.0, 0.0], &spec).unwrap().max_abs_diff(&a).unwrap() < 1e-12);
        }

        #[test]
        fn association_gaps_are_symmetric(p in -1.0f64..1.0, q in -1.0f64..1.0) {
            let tests = [TestFunction::gaussian(vec![0.0], 3.0)];
            let dirac = |x: f64| move |level: usize| {
                embed(&DistributionSpec::Dirac(vec![x]), &BasisSpec::new(1, level)).map(|r| r.coeffs().clone())
            };
            let fg = associated_families(dirac(p), dirac(q), 1, &tests, &[4, 8], 1e-3).unwrap();
            let gf = associated_families(dirac(q), dirac(p), 1, &tests, &[4, 8], 1e-3).unwrap();
            prop_assert_eq!(fg.gaps, gf.gaps);
        }

        #[test]
        fn product_with_constant_term_scales(a in proptest::collection::vec(-2.0f64..2.0, 9), c in -3.0f64..3.0) {
            // multiplication is bilinear: (c f) g = c (f g)
            let spec = BasisSpec::new(1, 8);
            let f = GenFuncRep::from_coeffs(&spec, CoeffTensor::from_values(1, 8, a).unwrap());
            let g = embed(&DistributionSpec::Sampled(TestFunction::standard_gaussian(1)), &spec).unwrap();
            let lhs = multiply(&f.scaled(c), &g).unwrap();
            let rhs = multiply(&f, &g).unwrap().scaled(c);
            prop_assert!(lhs.coeffs().max_abs_diff(rhs.coeffs()).unwrap() < 1e-12 * (1.0 + rhs.coeffs().max_abs()));
        }
    }
}
