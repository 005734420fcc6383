//! Coefficient dynamics of a Bloch electron under a linear ramp k(t) = k0 + rate t.
//!
//! The state is expanded as |psi> = sum_n c_n |n(k(t))> and the truncated
//! equation c'_m = -i e_m c_m - sum_n <m|n'> c_n is integrated with
//! <m|n'> = (dk/dt).DkU[m][n] in the parallel-transport gauge. The integrator
//! works in the interaction picture a_m = c_m e^{i theta_m}, theta_m = int e_m dt.

use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;
use ode_solvers::{DVector, Dopri5, OutputType, System};
use rayon::prelude::*;
use serde::Serialize;

use crate::delta::{delta_closed_form_entry, Formulation};
use crate::elements::{default_dk, momentum_matrix, position_matrix, StateDerivative, VectorBlock};
use crate::error::{Error, Result};
use crate::solver::{check_wavevector, fix_gauge, is_degenerate, BlochModel, BlochSolution, Gauge, DEGENERACY_TOL};

pub const DEFAULT_RTOL: f64 = 1e-10;
pub const DEFAULT_ATOL: f64 = 1e-12;

/// Interpolation nodes per |b_1| of path length.
const NODES_PER_RECIPROCAL: f64 = 1024.0;
const MIN_INTERVALS: usize = 16;
const MAX_STEPS: u32 = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RampSpec {
    pub k0: Vector3<f64>,
    /// dk/dt.
    pub rate: Vector3<f64>,
    pub duration: f64,
    pub samples: usize,
}

impl RampSpec {
    /// Ramp covering k0 -> k1 at constant speed.
    pub fn between(k0: Vector3<f64>, k1: Vector3<f64>, speed: f64, samples: usize) -> Result<Self> {
        let length = (k1 - k0).norm();
        if !(speed > 0.0) || !speed.is_finite() || !(length > 0.0) {
            return Err(Error::InvalidArgument(
                "a ramp between two points needs distinct endpoints and a positive speed".into(),
            ));
        }
        Ok(Self {
            k0,
            rate: (k1 - k0) * (speed / length),
            duration: length / speed,
            samples,
        })
    }

    pub fn k_end(&self) -> Vector3<f64> {
        self.k0 + self.rate * self.duration
    }

    pub fn speed(&self) -> f64 {
        self.rate.norm()
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "ramp duration must be positive and finite, got {}",
                self.duration
            )));
        }
        if self.samples < 2 {
            return Err(Error::InvalidArgument("a ramp needs at least 2 samples".into()));
        }
        check_wavevector(&self.k0, dim)?;
        check_wavevector(&self.rate, dim)?;
        if !self.k_end().iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidArgument("ramp end point is not finite".into()));
        }
        Ok(())
    }

    /// Sample times j T / (samples - 1).
    pub fn times(&self) -> Vec<f64> {
        let m = (self.samples - 1) as f64;
        (0..self.samples).map(|j| self.duration * j as f64 / m).collect()
    }
}

#[derive(Debug, Clone)]
pub struct EvolveOptions {
    pub n_bands: usize,
    pub initial_band: usize,
    pub rtol: f64,
    pub atol: f64,
    /// Constant per-band phases applied to the first node before transport.
    pub phases: Option<Vec<f64>>,
    /// Finite-difference step for DkU; 1e-4 |b_1| when absent.
    pub dk: Option<f64>,
}

impl EvolveOptions {
    pub fn new(n_bands: usize, initial_band: usize) -> Self {
        Self {
            n_bands,
            initial_band,
            rtol: DEFAULT_RTOL,
            atol: DEFAULT_ATOL,
            phases: None,
            dk: None,
        }
    }
}

/// Numerator of the adiabaticity ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginKind {
    /// <m|H'|n> only.
    Standard,
    /// <m|H'|n> + Delta_{m,n}.
    Extended,
}

impl MarginKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MarginKind::Standard => "standard",
            MarginKind::Extended => "extended",
        }
    }
}

/// |(<m|H'|n> + Delta_{m,n}) / (e_n - e_m)| along a ramp, for pairs m < n.
#[derive(Debug, Clone)]
pub struct MarginTrace {
    pub formulation: Formulation,
    pub kind: MarginKind,
    pub times: Vec<f64>,
    pub pairs: Vec<(usize, usize)>,
    /// times x pairs, complex ratio before the modulus.
    pub amplitudes: Vec<Vec<Complex64>>,
    pub values: Vec<Vec<f64>>,
}

impl MarginTrace {
    pub fn max(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |a, &b| a.max(b))
    }

    /// Largest margin of `band` against any partner at sample `j`.
    pub fn band_max(&self, j: usize, band: usize) -> f64 {
        self.pairs
            .iter()
            .zip(&self.values[j])
            .filter(|((m, n), _)| *m == band || *n == band)
            .fold(0.0, |a, (_, &v)| a.max(v))
    }
}

#[derive(Debug, Clone)]
pub struct AdiabaticRun {
    pub ramp: RampSpec,
    pub initial_band: usize,
    pub times: Vec<f64>,
    pub k: Vec<Vector3<f64>>,
    /// times x bands.
    pub coefficients: Vec<Vec<Complex64>>,
    pub standard_margin: MarginTrace,
    pub extended_margin: MarginTrace,
    /// |c_m(T)|^2 for every band.
    pub final_populations: Vec<f64>,
    /// max over path nodes of |(e_n - e_m) DkU[m][n] + i (e_n - e_m) R[m][n] - Delta^H_{m,n}|.
    pub derivative_consistency: f64,
    pub n_steps: u32,
}

impl AdiabaticRun {
    pub fn n_bands(&self) -> usize {
        self.final_populations.len()
    }

    pub fn norm_drift(&self) -> f64 {
        self.coefficients
            .iter()
            .map(|c| (c.iter().map(|x| x.norm_sqr()).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Population that left the initial band.
    pub fn transition_probability(&self) -> f64 {
        self.final_populations
            .iter()
            .enumerate()
            .filter(|(m, _)| *m != self.initial_band)
            .map(|(_, p)| p)
            .sum()
    }
}

/// Band data on a uniform node grid along the straight path, parallel-transported from node 0.
#[derive(Debug, Clone)]
pub struct PathTable {
    k0: Vector3<f64>,
    /// Unit direction, zero for a static ramp.
    direction: Vector3<f64>,
    length: f64,
    intervals: usize,
    energies: Vec<Vec<f64>>,
    /// Antiderivative of the interpolated energies over s in [0, 1], per node.
    energy_integral: Vec<Vec<f64>>,
    /// Anti-Hermitian part of direction.DkU.
    coupling: Vec<DMatrix<Complex64>>,
    momentum: Vec<DMatrix<Complex64>>,
    position: Vec<DMatrix<Complex64>>,
    consistency: f64,
}

impl PathTable {
    pub fn build(model: &BlochModel, k0: Vector3<f64>, k1: Vector3<f64>, options: &EvolveOptions) -> Result<Self> {
        let n_bands = options.n_bands;
        let phases = options.phases.as_deref();
        let dim = model.dim();
        check_wavevector(&k0, dim)?;
        check_wavevector(&k1, dim)?;
        if n_bands == 0 || n_bands > model.basis().len() {
            return Err(Error::InvalidArgument(format!(
                "n_bands = {n_bands} outside 1..={}",
                model.basis().len()
            )));
        }
        let length = (k1 - k0).norm();
        let static_path = length == 0.0;
        let direction = if static_path {
            Vector3::zeros()
        } else {
            (k1 - k0) / length
        };
        let intervals = if static_path {
            3
        } else {
            let b1 = model.basis().lattice().reciprocal()[0].norm();
            ((length / b1 * NODES_PER_RECIPROCAL).ceil() as usize).max(MIN_INTERVALS)
        };
        let nodes: Vec<Vector3<f64>> = (0..=intervals)
            .map(|j| k0 + (k1 - k0) * (j as f64 / intervals as f64))
            .collect();

        let raw = nodes
            .par_iter()
            .map(|k| model.solve(k, n_bands))
            .collect::<Result<Vec<_>>>()?;
        let mut centers: Vec<BlochSolution> = Vec::with_capacity(raw.len());
        for (j, sol) in raw.into_iter().enumerate() {
            let sol = if j == 0 {
                match phases {
                    Some(ph) => sol.with_phases(ph),
                    None => sol,
                }
            } else {
                fix_gauge(&sol, Gauge::ParallelTransport(&centers[j - 1]))?
            };
            check_spectrum(&sol)?;
            centers.push(sol);
        }

        let step = options.dk.unwrap_or_else(|| default_dk(model));
        let per_node = centers
            .par_iter()
            .map(|c| node_data(model, c, &direction, step, static_path))
            .collect::<Result<Vec<_>>>()?;

        let energies: Vec<Vec<f64>> = centers.iter().map(|c| c.energies.clone()).collect();
        let energy_integral = cumulative_integral(&energies, intervals);
        let mut coupling = Vec::with_capacity(per_node.len());
        let mut momentum = Vec::with_capacity(per_node.len());
        let mut position = Vec::with_capacity(per_node.len());
        let mut consistency: f64 = 0.0;
        for d in per_node {
            coupling.push(d.coupling);
            momentum.push(d.momentum);
            position.push(d.position);
            consistency = consistency.max(d.consistency);
        }
        Ok(Self {
            k0,
            direction,
            length,
            intervals,
            energies,
            energy_integral,
            coupling,
            momentum,
            position,
            consistency,
        })
    }

    pub fn n_bands(&self) -> usize {
        self.energies[0].len()
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn nodes(&self) -> usize {
        self.intervals + 1
    }

    pub fn k_at(&self, s: f64) -> Vector3<f64> {
        self.k0 + self.direction * (s * self.length)
    }

    pub fn consistency(&self) -> f64 {
        self.consistency
    }

    fn stencil(&self, s: f64) -> (usize, [f64; 4]) {
        let x = s.clamp(0.0, 1.0) * self.intervals as f64;
        let j = (x.floor() as usize).min(self.intervals - 1);
        let base = j.saturating_sub(1).min(self.intervals - 3);
        (base, lagrange(x - (base + 1) as f64))
    }

    fn energy_phase(&self, s: f64) -> Vec<f64> {
        let x = s.clamp(0.0, 1.0) * self.intervals as f64;
        let j = (x.floor() as usize).min(self.intervals - 1);
        let base = j.saturating_sub(1).min(self.intervals - 3);
        let h = 1.0 / self.intervals as f64;
        let u0 = j as f64 - (base + 1) as f64;
        let u = x - (base + 1) as f64;
        let w0 = lagrange_integral(u0);
        let w = lagrange_integral(u);
        (0..self.n_bands())
            .map(|m| {
                let inc: f64 = (0..4).map(|l| (w[l] - w0[l]) * self.energies[base + l][m]).sum();
                self.energy_integral[j][m] + h * inc
            })
            .collect()
    }

    fn interpolate(&self, table: &[DMatrix<Complex64>], s: f64) -> DMatrix<Complex64> {
        let (base, w) = self.stencil(s);
        let mut out = &table[base] * Complex64::new(w[0], 0.0);
        for l in 1..4 {
            out += &table[base + l] * Complex64::new(w[l], 0.0);
        }
        out
    }

    fn energies_at(&self, s: f64) -> Vec<f64> {
        let (base, w) = self.stencil(s);
        (0..self.n_bands())
            .map(|m| (0..4).map(|l| w[l] * self.energies[base + l][m]).sum())
            .collect()
    }

    /// Margin trace at the given path fractions for a ramp of speed `speed`.
    pub fn margins(
        &self,
        times: &[f64],
        fractions: &[f64],
        speed: f64,
        formulation: Formulation,
        kind: MarginKind,
    ) -> MarginTrace {
        let n = self.n_bands();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|m| (m + 1..n).map(move |b| (m, b))).collect();
        let zero = Complex64::new(0.0, 0.0);
        let amplitudes: Vec<Vec<Complex64>> = fractions
            .iter()
            .map(|&s| {
                if matches!((formulation, kind), (Formulation::H, MarginKind::Standard)) {
                    // Parameter-free H has no time dependence.
                    return vec![zero; pairs.len()];
                }
                let e = self.energies_at(s);
                let p = self.interpolate(&self.momentum, s);
                let r = self.interpolate(&self.position, s);
                pairs
                    .iter()
                    .map(|&(m, b)| {
                        let de = e[b] - e[m];
                        // Delta^{H(k)} vanishes for cell-periodic states, so both H(k) margins coincide.
                        let mut num = p[(m, b)] / de;
                        if formulation == Formulation::H {
                            num += Complex64::new(0.0, 1.0) * r[(m, b)];
                        }
                        num * speed
                    })
                    .collect()
            })
            .collect();
        let values = amplitudes
            .iter()
            .map(|row| row.iter().map(|a| a.norm()).collect())
            .collect();
        MarginTrace {
            formulation,
            kind,
            times: times.to_vec(),
            pairs,
            amplitudes,
            values,
        }
    }
}

struct NodeData {
    coupling: DMatrix<Complex64>,
    momentum: DMatrix<Complex64>,
    position: DMatrix<Complex64>,
    consistency: f64,
}

fn node_data(
    model: &BlochModel,
    center: &BlochSolution,
    direction: &Vector3<f64>,
    step: f64,
    static_path: bool,
) -> Result<NodeData> {
    let n = center.n_bands();
    let p = momentum_matrix(center);
    let r = position_matrix(center);
    let along = |b: &VectorBlock| {
        let mut out = DMatrix::zeros(n, n);
        for (i, c) in b.components().iter().enumerate() {
            out += c * Complex64::new(direction[i], 0.0);
        }
        out
    };
    let momentum = along(&p);
    let position = along(&r);
    if static_path {
        return Ok(NodeData {
            coupling: DMatrix::zeros(n, n),
            momentum,
            position,
            consistency: 0.0,
        });
    }
    let deriv = StateDerivative::compute(model, center, &(direction * step))?;
    let i = Complex64::new(0.0, 1.0);
    let mut consistency: f64 = 0.0;
    for m in 0..n {
        for b in 0..n {
            if m == b {
                continue;
            }
            let delta = delta_closed_form_entry(&p, &r, &center.energies, m, b)?;
            let delta_dir: Complex64 = (0..3).map(|a| delta[a] * direction[a]).sum();
            let de = center.energies[b] - center.energies[m];
            let lhs = (deriv.dku[(m, b)] + i * position[(m, b)]) * de;
            consistency = consistency.max((lhs - delta_dir).norm());
        }
    }
    let d = &deriv.dku;
    let coupling = (d - d.adjoint()) * Complex64::new(0.5, 0.0);
    Ok(NodeData {
        coupling,
        momentum,
        position,
        consistency,
    })
}

fn check_spectrum(sol: &BlochSolution) -> Result<()> {
    for (a, w) in sol.energies.windows(2).enumerate() {
        if is_degenerate(w[0], w[1], DEGENERACY_TOL) {
            return Err(Error::Degenerate {
                a,
                b: a + 1,
                gap: (w[1] - w[0]).abs(),
                k: [sol.k.x, sol.k.y, sol.k.z],
            });
        }
    }
    Ok(())
}

/// Cubic Lagrange weights on nodes at u = -1, 0, 1, 2.
fn lagrange(u: f64) -> [f64; 4] {
    [
        -u * (u - 1.0) * (u - 2.0) / 6.0,
        (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0,
        -(u + 1.0) * u * (u - 2.0) / 2.0,
        (u + 1.0) * u * (u - 1.0) / 6.0,
    ]
}

/// Antiderivatives of `lagrange` vanishing at u = 0.
fn lagrange_integral(u: f64) -> [f64; 4] {
    let (u2, u3, u4) = (u * u, u * u * u, u * u * u * u);
    [
        -(u4 / 4.0 - u3 + u2) / 6.0,
        (u4 / 4.0 - 2.0 * u3 / 3.0 - u2 / 2.0 + 2.0 * u) / 2.0,
        -(u4 / 4.0 - u3 / 3.0 - u2) / 2.0,
        (u4 / 4.0 - u2 / 2.0) / 6.0,
    ]
}

fn cumulative_integral(energies: &[Vec<f64>], intervals: usize) -> Vec<Vec<f64>> {
    let n = energies[0].len();
    let h = 1.0 / intervals as f64;
    let mut out = vec![vec![0.0; n]; intervals + 1];
    for j in 0..intervals {
        let base = j.saturating_sub(1).min(intervals - 3);
        let u0 = j as f64 - (base + 1) as f64;
        let w0 = lagrange_integral(u0);
        let w1 = lagrange_integral(u0 + 1.0);
        for m in 0..n {
            let inc: f64 = (0..4).map(|l| (w1[l] - w0[l]) * energies[base + l][m]).sum();
            out[j + 1][m] = out[j][m] + h * inc;
        }
    }
    out
}

#[derive(Clone, Copy)]
struct Interaction<'a> {
    table: &'a PathTable,
    duration: f64,
    speed: f64,
}

impl Interaction<'_> {
    fn phases(&self, t: f64) -> Vec<f64> {
        let s = t / self.duration;
        self.table
            .energy_phase(s)
            .into_iter()
            .map(|p| p * self.duration)
            .collect()
    }
}

impl System<f64, DVector<f64>> for Interaction<'_> {
    fn system(&self, t: f64, y: &DVector<f64>, dy: &mut DVector<f64>) {
        let n = self.table.n_bands();
        if self.speed == 0.0 {
            dy.fill(0.0);
            return;
        }
        let s = t / self.duration;
        let d = self.table.interpolate(&self.table.coupling, s);
        let theta = self.phases(t);
        let rot: Vec<Complex64> = theta.iter().map(|&th| Complex64::from_polar(1.0, th)).collect();
        let a: Vec<Complex64> = (0..n).map(|m| Complex64::new(y[m], y[n + m])).collect();
        for m in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for b in 0..n {
                acc += d[(m, b)] * a[b] * rot[b].conj();
            }
            let da = -acc * rot[m] * self.speed;
            dy[m] = da.re;
            dy[n + m] = da.im;
        }
    }
}

/// Integrates the coefficient equation along `ramp`, starting in a single band.
pub fn evolve_coefficients(model: &BlochModel, ramp: &RampSpec, options: &EvolveOptions) -> Result<AdiabaticRun> {
    ramp.validate(model.dim())?;
    let table = PathTable::build(model, ramp.k0, ramp.k_end(), options)?;
    evolve_on(&table, ramp, options)
}

/// As [`evolve_coefficients`] on a precomputed path; `ramp` must trace the same segment.
pub fn evolve_on(table: &PathTable, ramp: &RampSpec, options: &EvolveOptions) -> Result<AdiabaticRun> {
    let n = table.n_bands();
    if options.initial_band >= n {
        return Err(Error::InvalidArgument(format!(
            "initial band {} outside 0..{n}",
            options.initial_band
        )));
    }
    if !(options.rtol > 0.0) || !(options.atol > 0.0) {
        return Err(Error::InvalidArgument("integrator tolerances must be positive".into()));
    }
    let length = ramp.speed() * ramp.duration;
    if (length - table.length).abs() > 1e-12 * (1.0 + table.length) {
        return Err(Error::InvalidArgument("ramp does not match the tabulated path".into()));
    }
    let times = ramp.times();
    let system = Interaction {
        table,
        duration: ramp.duration,
        speed: ramp.speed(),
    };
    let mut y0 = DVector::zeros(2 * n);
    y0[options.initial_band] = 1.0;

    // Each sample interval is integrated on its own so stored states carry the
    // full step accuracy rather than the lower-order interpolant.
    let mut ys = Vec::with_capacity(times.len());
    let mut n_steps = 0;
    let mut h = 0.0;
    ys.push(y0);
    for w in times.windows(2) {
        let y = ys.last().cloned().unwrap_or_default();
        if system.speed == 0.0 {
            ys.push(y);
            continue;
        }
        let mut stepper = Dopri5::from_param(
            system,
            w[0],
            w[1],
            w[1] - w[0],
            y,
            options.rtol,
            options.atol,
            0.9,
            0.04,
            0.2,
            10.0,
            w[1] - w[0],
            h,
            MAX_STEPS,
            1000,
            OutputType::Sparse,
        );
        let stats = stepper.integrate().map_err(|e| Error::Integration(e.to_string()))?;
        n_steps += stats.accepted_steps;
        let (xs, out) = (stepper.x_out(), stepper.y_out());
        match (xs.last(), out.last()) {
            (Some(&x), Some(y)) if (x - w[1]).abs() <= 1e-12 * w[1].abs().max(1.0) => ys.push(y.clone()),
            _ => return Err(Error::Integration(format!("integration stopped short of t = {}", w[1]))),
        }
        if xs.len() >= 2 {
            h = (xs[xs.len() - 1] - xs[xs.len() - 2]).min(w[1] - w[0]);
        }
    }
    let xs = &times;

    let fractions: Vec<f64> = times.iter().map(|t| t / ramp.duration).collect();
    let coefficients: Vec<Vec<Complex64>> = xs
        .iter()
        .zip(&ys)
        .take(times.len())
        .map(|(&t, y)| {
            let theta = system.phases(t);
            (0..n)
                .map(|m| Complex64::new(y[m], y[n + m]) * Complex64::from_polar(1.0, -theta[m]))
                .collect()
        })
        .collect();
    let final_populations = coefficients
        .last()
        .map(|c| c.iter().map(|x| x.norm_sqr()).collect())
        .unwrap_or_default();
    let speed = ramp.speed();
    Ok(AdiabaticRun {
        ramp: *ramp,
        initial_band: options.initial_band,
        k: fractions.iter().map(|&s| table.k_at(s)).collect(),
        standard_margin: table.margins(&times, &fractions, speed, Formulation::H, MarginKind::Standard),
        extended_margin: table.margins(&times, &fractions, speed, Formulation::H, MarginKind::Extended),
        times,
        coefficients,
        final_populations,
        derivative_consistency: table.consistency,
        n_steps,
    })
}

/// Margin traces of `ramp` in the chosen formulation.
pub fn adiabaticity_margin(
    model: &BlochModel,
    ramp: &RampSpec,
    n_bands: usize,
    formulation: Formulation,
    kind: MarginKind,
) -> Result<MarginTrace> {
    ramp.validate(model.dim())?;
    let table = PathTable::build(model, ramp.k0, ramp.k_end(), &EvolveOptions::new(n_bands, 0))?;
    let times = ramp.times();
    let fractions: Vec<f64> = times.iter().map(|t| t / ramp.duration).collect();
    Ok(table.margins(&times, &fractions, ramp.speed(), formulation, kind))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub rate: f64,
    pub duration: f64,
    pub transition_probability: f64,
    pub norm_drift: f64,
    pub final_populations: Vec<f64>,
}

/// Transition probability per ramp speed over the fixed segment k0 -> k1, sorted by speed.
pub fn rate_sweep(
    model: &BlochModel,
    k0: Vector3<f64>,
    k1: Vector3<f64>,
    rates: &[f64],
    samples: usize,
    options: &EvolveOptions,
) -> Result<Vec<SweepRow>> {
    if rates.len() < 2 {
        return Err(Error::InvalidArgument("a rate sweep needs at least 2 rates".into()));
    }
    let table = PathTable::build(model, k0, k1, options)?;
    let mut sorted = rates.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .par_iter()
        .map(|&rate| {
            let ramp = RampSpec::between(k0, k1, rate, samples)?;
            let run = evolve_on(&table, &ramp, options)?;
            Ok(SweepRow {
                rate,
                duration: ramp.duration,
                transition_probability: run.transition_probability(),
                norm_drift: run.norm_drift(),
                final_populations: run.final_populations,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests;
