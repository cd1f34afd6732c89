//! The Cauchy problem `u_t = ½Δu + g`, `u(0) = f`, with distributional `f`.
//!
//! Two solvers are provided. [`solve_mc`] averages Brownian translations,
//! `u(t) = E[τ_{B_t} f] + E ∫₀ᵗ τ_{B_r} g(t − r) dr`, evaluating translated
//! partial sums on the quadrature grid. [`solve_spectral`] applies the heat
//! kernel in coefficient space, one axis at a time, after the substitution
//! `y = √t z` that turns the convolution into a standard-normal expectation.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::coeffs::{analyze, apply_axis, pairing, synthesize_grid, AxisGrid, CoeffTensor, GridAnalyzer};
use crate::error::{invalid, Result};
use crate::genfunc::{associated, embed, AssociationReport, DistributionSpec, GenFuncRep, TestFunction, TimeClass};
use crate::hermite::{hermite_dot, hermite_funcs_upto, ladder_derivative, BasisSpec, QuadRule};
use crate::numeric::{gauss_hermite_flat, gauss_legendre, pairwise_sum_vecs};
use crate::stochastic::path_rng;

/// Below this time the heat kernel is treated as the identity.
pub const MIN_KERNEL_TIME: f64 = 1e-6;

/// Paths per reduction chunk; fixed so sums do not depend on the thread count.
const CHUNK: usize = 1024;

#[derive(Debug, Clone)]
pub struct HeatProblem {
    pub initial: DistributionSpec,
    pub source: Option<GenFuncRep>,
    pub horizon: f64,
    pub dim: usize,
}

impl HeatProblem {
    pub fn new(initial: DistributionSpec, dim: usize, horizon: f64) -> Self {
        Self { initial, source: None, horizon, dim }
    }

    pub fn with_source(mut self, g: GenFuncRep) -> Self {
        self.source = Some(g);
        self
    }

    fn check(&self, spec: &BasisSpec, times: &[f64]) -> Result<()> {
        spec.validate()?;
        if spec.dim != self.dim {
            return invalid("basis dimension does not match the problem");
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return invalid("horizon must be positive");
        }
        if times.is_empty() {
            return invalid("no output times");
        }
        if let Some(t) = times.iter().find(|t| !(t.is_finite() && **t >= 0.0 && **t <= self.horizon * (1.0 + 1e-12))) {
            return invalid(format!("time {t} outside [0, {}]", self.horizon));
        }
        if let Some(g) = &self.source {
            if g.dim() != self.dim {
                return invalid("source dimension does not match the problem");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mc,
    Spectral,
}

/// Mean and standard error of a scalar Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

#[derive(Debug, Clone)]
pub struct HeatSolution {
    pub times: Vec<f64>,
    pub reps: Vec<GenFuncRep>,
    pub method: Method,
    /// Per-coefficient standard errors, one tensor per time (Monte Carlo only).
    pub mc_se: Option<Vec<CoeffTensor>>,
    /// `probe_stats[i][j]`: pairing of `u(times[i])` with probe `j`.
    pub probe_stats: Vec<Vec<Estimate>>,
    pub probes: Vec<TestFunction>,
    pub source: Option<GenFuncRep>,
    spec: BasisSpec,
}

impl HeatSolution {
    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn index_of(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
            .map_or_else(|| invalid(format!("time {t} is not stored")), Ok)
    }

    pub fn at(&self, t: f64) -> Result<&GenFuncRep> {
        Ok(&self.reps[self.index_of(t)?])
    }

    /// `⟨u(t), φ⟩` as a coefficient pairing at the solution level.
    pub fn pair(&self, t: f64, phi: &TestFunction) -> Result<f64> {
        let u = self.at(t)?;
        pairing(u.coeffs(), &analyze(|x| phi.eval(x), &self.spec.at_level(u.level()))?)
    }

    /// Writes one coefficient file per stored time plus a JSON sidecar each.
    pub fn save(&self, dir: &std::path::Path, stem: &str) -> Result<()> {
        for (k, u) in self.reps.iter().enumerate() {
            u.save(dir, &format!("{stem}_t{k}"))?;
        }
        Ok(())
    }
}

/// Options for the Monte Carlo solver.
#[derive(Debug, Clone)]
pub struct McOptions {
    /// Test functions whose pairings get their own standard errors.
    pub probes: Vec<TestFunction>,
    /// Left-point step of the source time integral.
    pub source_dt: f64,
}

impl Default for McOptions {
    fn default() -> Self {
        Self { probes: Vec::new(), source_dt: 1.0 / 64.0 }
    }
}

fn standard_axes(spec: &BasisSpec) -> Vec<AxisGrid> {
    (0..spec.dim).map(|_| QuadRule::standard(spec).into()).collect()
}

/// Values of `a`'s partial sum at `x_q − shift` over the tensor grid.
fn shifted_values(a: &CoeffTensor, axes: &[AxisGrid], shift: &[f64]) -> Vec<f64> {
    if a.dim() == 1 {
        return axes[0].nodes.iter().map(|x| hermite_dot(a.values(), x - shift[0])).collect();
    }
    let shifted: Vec<Vec<f64>> = axes
        .iter()
        .zip(shift)
        .map(|(ax, s)| ax.nodes.iter().map(|x| x - s).collect())
        .collect();
    let refs: Vec<&[f64]> = shifted.iter().map(|v| v.as_slice()).collect();
    synthesize_grid(a, &refs)
}

/// Sums of `v − shift` and `(v − shift)²`; shifting by the first sample keeps
/// the variance accurate when it is tiny next to the mean.
struct Moments {
    shift: Vec<f64>,
    sum: Vec<f64>,
    sumsq: Vec<f64>,
}

/// Accumulates per-sample coefficient tensors (plus probe pairings) chunk by chunk.
fn reduce_samples<F>(n: usize, len: usize, sample: F) -> Result<Moments>
where
    F: Fn(usize) -> Result<Vec<f64>> + Sync,
{
    let shift = sample(0)?;
    let chunks: Vec<(Vec<f64>, Vec<f64>)> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut s = vec![0.0; len];
            let mut q = vec![0.0; len];
            for k in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let v = sample(k)?;
                for (((s, q), v), m) in s.iter_mut().zip(q.iter_mut()).zip(&v).zip(&shift) {
                    let dv = v - m;
                    *s += dv;
                    *q += dv * dv;
                }
            }
            Ok((s, q))
        })
        .collect::<Result<Vec<_>>>()?;
    let (sums, sqs): (Vec<_>, Vec<_>) = chunks.into_iter().unzip();
    Ok(Moments { shift, sum: pairwise_sum_vecs(&sums), sumsq: pairwise_sum_vecs(&sqs) })
}

fn mean_and_se(m: &Moments, n: usize) -> (Vec<f64>, Vec<f64>) {
    let nf = n as f64;
    m.sum
        .iter()
        .zip(&m.sumsq)
        .zip(&m.shift)
        .map(|((s, q), shift)| {
            let centred = s / nf;
            let var = if n > 1 { ((q / nf - centred * centred) * nf / (nf - 1.0)).max(0.0) } else { 0.0 };
            (shift + centred, (var / nf).sqrt())
        })
        .unzip()
}

/// `E[τ_X f]` over the given samples, with per-coefficient standard errors.
pub fn expectation_translated(f: &GenFuncRep, samples: &[Vec<f64>]) -> Result<(GenFuncRep, CoeffTensor)> {
    if samples.is_empty() {
        return invalid("need at least one sample");
    }
    if samples.iter().any(|s| s.len() != f.dim() || s.iter().any(|v| !v.is_finite())) {
        return invalid("samples must be finite points of the right dimension");
    }
    let spec = f.spec();
    let axes = standard_axes(spec);
    let analyzer = GridAnalyzer::new(&axes, f.level());
    let len = f.coeffs().len();
    let m = reduce_samples(samples.len(), len, |k| {
        Ok(analyzer.apply(&shifted_values(f.coeffs(), &axes, &samples[k]))?.into_values())
    })?;
    let (mean, se) = mean_and_se(&m, samples.len());
    Ok((
        GenFuncRep::from_coeffs(spec, CoeffTensor::from_values(f.dim(), f.level(), mean)?),
        CoeffTensor::from_values(f.dim(), f.level(), se)?,
    ))
}

/// Monte Carlo solution `E[τ_{B_t} f] + E ∫₀ᵗ τ_{B_r} g(t − r) dr`.
///
/// Path `k` draws its Brownian increments from stream `k` of the run seed.
/// Without a source each output time costs one Gaussian increment; with a
/// source the path is stepped at `source_dt`, and output times must lie on
/// that grid.
pub fn solve_mc(
    p: &HeatProblem,
    spec: &BasisSpec,
    times: &[f64],
    n_paths: usize,
    seed: u64,
    opts: &McOptions,
) -> Result<HeatSolution> {
    p.check(spec, times)?;
    if n_paths == 0 {
        return invalid("path count must be positive");
    }
    let f = embed(&p.initial, spec)?;
    let d = spec.dim;
    let n = spec.level;
    let axes = standard_axes(spec);
    let analyzer = GridAnalyzer::new(&axes, n);
    let ncoef = f.coeffs().len();
    let probe_coeffs = opts
        .probes
        .iter()
        .map(|phi| analyze(|x| phi.eval(x), spec))
        .collect::<Result<Vec<_>>>()?;
    let width = ncoef + probe_coeffs.len();

    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

    let source = p.source.as_ref().map(|g| g.truncated(n));
    let step_plan = match &source {
        None => None,
        Some(_) => {
            let dt = opts.source_dt;
            if !(dt.is_finite() && dt > 0.0) {
                return invalid("source step must be positive");
            }
            let idx = times
                .iter()
                .map(|&t| {
                    let k = (t / dt).round();
                    if (k * dt - t).abs() > 1e-9 * t.max(1.0) {
                        invalid(format!("time {t} is not a multiple of the source step {dt}"))
                    } else {
                        Ok(k as usize)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Some((dt, idx))
        }
    };

    // Per path: one row of `width` entries per output time, in `times` order.
    let sample = |k: usize| -> Result<Vec<f64>> {
        let mut rng = path_rng(seed, k);
        let mut out = vec![0.0; times.len() * width];
        let emit = |slot: usize, values: &[f64], out: &mut Vec<f64>| -> Result<()> {
            let c = analyzer.apply(values)?;
            let row = &mut out[slot * width..(slot + 1) * width];
            row[..ncoef].copy_from_slice(c.values());
            for (j, phi) in probe_coeffs.iter().enumerate() {
                row[ncoef + j] = pairing(&c, phi)?;
            }
            Ok(())
        };
        match (&source, &step_plan) {
            (None, _) => {
                let mut b = vec![0.0; d];
                let mut t_prev = 0.0;
                for &slot in &order {
                    let t = times[slot];
                    let sd = (t - t_prev).max(0.0).sqrt();
                    for v in b.iter_mut() {
                        *v += sd * rng.sample::<f64, _>(StandardNormal);
                    }
                    t_prev = t;
                    emit(slot, &shifted_values(f.coeffs(), &axes, &b), &mut out)?;
                }
            }
            (Some(g), Some((dt, idx))) => {
                let k_max = idx.iter().copied().max().unwrap_or(0);
                let sd = dt.sqrt();
                let mut path = Vec::with_capacity((k_max + 1) * d);
                path.extend(std::iter::repeat_n(0.0, d));
                for s in 0..k_max {
                    for i in 0..d {
                        let prev = path[s * d + i];
                        path.push(prev + sd * rng.sample::<f64, _>(StandardNormal));
                    }
                }
                // a time-constant source shares one running integral across output times
                let mut running: Option<(usize, Vec<f64>)> = (g.class() == TimeClass::Static).then(|| (0, Vec::new()));
                for &slot in &order {
                    let kt = idx[slot];
                    let t = times[slot];
                    let b = &path[kt * d..(kt + 1) * d];
                    let mut values = shifted_values(f.coeffs(), &axes, b);
                    if let Some((done, acc)) = running.as_mut() {
                        acc.resize(values.len(), 0.0);
                        for s in *done..kt {
                            let gv = shifted_values(g.coeffs(), &axes, &path[s * d..(s + 1) * d]);
                            for (a, w) in acc.iter_mut().zip(&gv) {
                                *a += dt * w;
                            }
                        }
                        *done = kt;
                        for (v, a) in values.iter_mut().zip(acc.iter()) {
                            *v += a;
                        }
                        emit(slot, &values, &mut out)?;
                        continue;
                    }
                    for s in 0..kt {
                        let r = s as f64 * dt;
                        let gv = shifted_values(&g.at(t - r), &axes, &path[s * d..(s + 1) * d]);
                        for (v, w) in values.iter_mut().zip(&gv) {
                            *v += dt * w;
                        }
                    }
                    emit(slot, &values, &mut out)?;
                }
            }
            _ => unreachable!("step plan exists exactly when a source does"),
        }
        Ok(out)
    };
    let m = reduce_samples(n_paths, times.len() * width, sample)?;
    let (mean, se) = mean_and_se(&m, n_paths);

    let mut reps = Vec::with_capacity(times.len());
    let mut ses = Vec::with_capacity(times.len());
    let mut probe_stats = Vec::with_capacity(times.len());
    for (slot, &t) in times.iter().enumerate() {
        let row = &mean[slot * width..(slot + 1) * width];
        let row_se = &se[slot * width..(slot + 1) * width];
        if t == 0.0 {
            // B_0 = 0 and the source integral is empty
            reps.push(f.clone());
            ses.push(CoeffTensor::zeros(d, n));
            probe_stats.push(
                probe_coeffs
                    .iter()
                    .map(|phi| Ok(Estimate { mean: pairing(f.coeffs(), phi)?, se: 0.0 }))
                    .collect::<Result<Vec<_>>>()?,
            );
            continue;
        }
        reps.push(GenFuncRep::from_coeffs(spec, CoeffTensor::from_values(d, n, row[..ncoef].to_vec())?));
        ses.push(CoeffTensor::from_values(d, n, row_se[..ncoef].to_vec())?);
        probe_stats.push(
            (0..probe_coeffs.len())
                .map(|j| Estimate { mean: row[ncoef + j], se: row_se[ncoef + j] })
                .collect(),
        );
    }
    Ok(HeatSolution {
        times: times.to_vec(),
        reps,
        method: Method::Mc,
        mc_se: Some(ses),
        probe_stats,
        probes: opts.probes.clone(),
        source: p.source.clone(),
        spec: spec.clone(),
    })
}

/// Matrix of `G_t ∗` on the level-`level` coefficients of one axis, row-major
/// `[γ][k] = ⟨G_t ∗ h_k, h_γ⟩`.
pub fn heat_matrix(spec: &BasisSpec, t: f64) -> Result<Vec<f64>> {
    if !(t.is_finite() && t >= 0.0) {
        return invalid(format!("time {t} must be nonnegative"));
    }
    let n = spec.level;
    let size = n + 1;
    if t < MIN_KERNEL_TIME {
        return Ok((0..size * size).map(|e| if e / size == e % size { 1.0 } else { 0.0 }).collect());
    }
    let rule = QuadRule::standard(spec);
    let kernel = gauss_hermite_flat(spec.quad_nodes);
    let norm = (2.0 * std::f64::consts::PI).sqrt();
    let (zs, ws): (Vec<f64>, Vec<f64>) = kernel
        .0
        .iter()
        .zip(&kernel.1)
        .map(|(&z, &w)| (z, w * (-z * z / 2.0).exp() / norm))
        .filter(|(_, w)| *w > 0.0)
        .unzip();
    let st = t.sqrt();
    // conv[k][q] = (G_t ∗ h_k)(x_q) = Σ_j ω_j h_k(x_q − √t z_j)
    let m = rule.nodes.len();
    let mut conv = vec![0.0; size * m];
    for (q, &x) in rule.nodes.iter().enumerate() {
        for (&z, &w) in zs.iter().zip(&ws) {
            let h = hermite_funcs_upto(n, x - st * z);
            for k in 0..size {
                conv[k * m + q] += w * h[k];
            }
        }
    }
    let basis: Vec<Vec<f64>> = rule.nodes.iter().map(|&x| hermite_funcs_upto(n, x)).collect();
    let mut out = vec![0.0; size * size];
    for g in 0..size {
        for k in 0..size {
            out[g * size + k] = (0..m).map(|q| rule.weights[q] * basis[q][g] * conv[k * m + q]).sum();
        }
    }
    Ok(out)
}

fn apply_heat(a: &CoeffTensor, matrix: &[f64]) -> Result<CoeffTensor> {
    let mut out = a.clone();
    for axis in 0..a.dim() {
        out = apply_axis(&out, axis, matrix)?;
    }
    Ok(out)
}

/// Options for the deterministic solver.
#[derive(Debug, Clone, Copy)]
pub struct SpectralOptions {
    /// Gauss–Legendre nodes for the source time integral.
    pub source_nodes: usize,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self { source_nodes: 24 }
    }
}

/// Deterministic solution `G_t ∗ f_N + ∫₀ᵗ G_{t−s} ∗ g_N(s) ds` in coefficient space.
pub fn solve_spectral(p: &HeatProblem, spec: &BasisSpec, times: &[f64], opts: SpectralOptions) -> Result<HeatSolution> {
    p.check(spec, times)?;
    let f = embed(&p.initial, spec)?;
    let source = p.source.as_ref().map(|g| g.truncated(spec.level));
    let reps = times
        .par_iter()
        .map(|&t| {
            let mut u = apply_heat(f.coeffs(), &heat_matrix(spec, t)?)?;
            if let (Some(g), true) = (&source, t > 0.0) {
                let (ss, ws) = gauss_legendre(opts.source_nodes, 0.0, t);
                for (&s, &w) in ss.iter().zip(&ws) {
                    let moved = apply_heat(&g.at(s), &heat_matrix(spec, t - s)?)?;
                    u = u.add_scaled(w, &moved)?;
                }
            }
            Ok(GenFuncRep::from_coeffs(spec, u))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HeatSolution {
        times: times.to_vec(),
        reps,
        method: Method::Spectral,
        mc_se: None,
        probe_stats: Vec::new(),
        probes: Vec::new(),
        source: p.source.clone(),
        spec: spec.clone(),
    })
}

/// `|⟨∂_t u − ½Δu − g, φ⟩|` at a stored interior time, with a three-point
/// time derivative on the stored grid.
pub fn pde_residual(sol: &HeatSolution, phi: &TestFunction, t: f64) -> Result<f64> {
    let k = sol.index_of(t)?;
    if k == 0 || k + 1 >= sol.times.len() {
        return invalid(format!("time {t} is not interior to the stored grid"));
    }
    let (t0, t1, t2) = (sol.times[k - 1], sol.times[k], sol.times[k + 1]);
    if !(t0 < t1 && t1 < t2) {
        return invalid("stored times must be increasing around the residual time");
    }
    let (h1, h2) = (t1 - t0, t2 - t1);
    let u0 = sol.reps[k - 1].coeffs();
    let u1 = sol.reps[k].coeffs();
    let u2 = sol.reps[k + 1].coeffs();
    let dt = u0
        .scaled(-h2 / (h1 * (h1 + h2)))
        .add_scaled((h2 - h1) / (h1 * h2), u1)?
        .add_scaled(h1 / (h2 * (h1 + h2)), u2)?;
    let mut lap = CoeffTensor::zeros(u1.dim(), u1.level() + 2);
    for axis in 0..u1.dim() {
        lap = lap.add_scaled(1.0, &ladder_derivative(&ladder_derivative(u1, axis)?, axis)?)?;
    }
    let mut r = dt.add_scaled(-0.5, &lap)?;
    if let Some(g) = &sol.source {
        r = r.add_scaled(-1.0, &g.at(t))?;
    }
    let phi_c = analyze(|x| phi.eval(x), &sol.spec.at_level(r.level()))?;
    Ok(pairing(&r, &phi_c)?.abs())
}

/// Association of two solutions at every stored time.
pub fn uniqueness_probe(
    a: &HeatSolution,
    b: &HeatSolution,
    tests: &[TestFunction],
    levels: &[usize],
    tol: f64,
) -> Result<Vec<(f64, AssociationReport)>> {
    if a.times != b.times {
        return invalid("solutions are stored on different time grids");
    }
    a.times
        .iter()
        .zip(a.reps.iter().zip(&b.reps))
        .map(|(&t, (u, v))| Ok((t, associated(u, v, tests, levels, tol)?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatRow {
    pub t: f64,
    pub functional_id: String,
    pub mc_value: f64,
    pub mc_se: f64,
    pub spectral_value: f64,
    pub abs_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatReport {
    pub rows: Vec<HeatRow>,
}

impl HeatReport {
    /// Rows from a Monte Carlo solution with probes and a spectral solution on the same times.
    pub fn compare(mc: &HeatSolution, spectral: &HeatSolution) -> Result<HeatReport> {
        if mc.times != spectral.times {
            return invalid("solutions are stored on different time grids");
        }
        let mut rows = Vec::new();
        for (i, &t) in mc.times.iter().enumerate() {
            for (j, phi) in mc.probes.iter().enumerate() {
                let est = mc.probe_stats[i][j];
                let sv = spectral.pair(t, phi)?;
                rows.push(HeatRow {
                    t,
                    functional_id: format!("pair:{}", phi.name),
                    mc_value: est.mean,
                    mc_se: est.se,
                    spectral_value: sv,
                    abs_gap: (est.mean - sv).abs(),
                });
            }
        }
        Ok(HeatReport { rows })
    }

    /// Every gap within `sigmas · SE + tol`.
    pub fn passes(&self, sigmas: f64, tol: f64) -> bool {
        self.rows.iter().all(|r| r.abs_gap <= sigmas * r.mc_se + tol)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "functional_id", "mc_value", "mc_se", "spectral_value", "abs_gap"])?;
        for r in &self.rows {
            w.write_record([
                format!("{:e}", r.t),
                r.functional_id.clone(),
                format!("{:e}", r.mc_value),
                format!("{:e}", r.mc_se),
                format!("{:e}", r.spectral_value),
                format!("{:e}", r.abs_gap),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `∫ G_t(x) e^{-|x|²/2} dx = (1 + t)^{-d/2}`.
pub fn dirac_gaussian_pairing(t: f64, dim: usize) -> f64 {
    (1.0 + t).powf(-0.5 * dim as f64)
}

/// `(G_t ∗ e^{-x²/4})(x) = √(2/(2+t)) e^{-x²/(2(2+t))}` in one dimension.
pub fn heat_of_quarter_gaussian(t: f64, x: f64) -> f64 {
    (2.0 / (2.0 + t)).sqrt() * (-x * x / (2.0 * (2.0 + t))).exp()
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::coeffs::seminorm;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn heat_flow_is_linear_and_contracting(
            a in proptest::collection::vec(-2.0f64..2.0, 17),
            b in proptest::collection::vec(-2.0f64..2.0, 17),
            t in 0.0f64..2.0,
        ) {
            let spec = BasisSpec::new(1, 16);
            let (a, b) = (CoeffTensor::from_values(1, 16, a).unwrap(), CoeffTensor::from_values(1, 16, b).unwrap());
            let k = heat_matrix(&spec, t).unwrap();
            let flow = |c: &CoeffTensor| apply_axis(c, 0, &k).unwrap();
            let sum = flow(&a.add_scaled(1.0, &b).unwrap());
            let parts = flow(&a).add_scaled(1.0, &flow(&b)).unwrap();
            prop_assert!(sum.max_abs_diff(&parts).unwrap() < 1e-12);
            prop_assert!(seminorm(&flow(&a), 0).unwrap() <= seminorm(&a, 0).unwrap() * (1.0 + 1e-12));
        }
    }
}
