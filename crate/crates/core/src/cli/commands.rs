use std::f64::consts::PI;

use nalgebra::Vector3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::bundled;
use super::config::RunConfig;
use super::error::CliError;
use super::report::{num, to_json, Check, Csv, Environment, Observation, Relation, SuiteReport, VerificationReport};
use crate::adiabatic::{
    adiabaticity_margin, evolve_coefficients, rate_sweep, EvolveOptions, MarginKind, RampSpec, SweepRow,
};
use crate::curvature::{
    curvature_field, curvature_wilson_loop, divergence_check, gauge_invariance_check, relative_rms, sum_rule_check,
    wilson_cube_fluxes, CurvatureField, KGrid, Method, Sites,
};
use crate::delta::Formulation;
use crate::delta::{
    delta_closed_form_for, delta_difference_identity, delta_surface_term, free_particle_identity_check,
    generalized_current, DeltaBlock, FreeParticleReport, Route,
};
use crate::elements::{
    default_dk, momentum_matrix, position_matrix, position_matrix_unit_cell, GradientStates, StateDerivative,
    VectorBlock,
};
use crate::model::{minimal_resolution, sample_unit_cell_grid};
use crate::quadrature::CellQuadrature;
use crate::solver::{band_structure, is_degenerate, BlochModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CommandKind {
    Bands,
    Curvature,
    DeltaVerify,
    FreeParticle,
    Adiabatic,
    VerifyAll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum MethodChoice {
    Wilson,
    Kubo,
    Corrected,
    #[default]
    All,
}

impl MethodChoice {
    fn methods(&self) -> Vec<Method> {
        match self {
            MethodChoice::Wilson => vec![Method::Wilson],
            MethodChoice::Kubo => vec![Method::Kubo],
            MethodChoice::Corrected => vec![Method::Corrected],
            MethodChoice::All => vec![Method::Wilson, Method::Kubo, Method::Corrected],
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub method: MethodChoice,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    /// Conjunction of every asserted check.
    pub pass: bool,
    pub checks: Vec<Check>,
    pub observations: Vec<Observation>,
    pub artifacts: Vec<Artifact>,
}

#[derive(Default)]
struct Section {
    checks: Vec<Check>,
    observations: Vec<Observation>,
    artifacts: Vec<Artifact>,
}

impl Section {
    fn extend(&mut self, other: Section) {
        self.checks.extend(other.checks);
        self.observations.extend(other.observations);
        self.artifacts.extend(other.artifacts);
    }

    fn artifact(&mut self, name: &str, contents: String) {
        self.artifacts.push(Artifact {
            name: name.into(),
            contents,
        });
    }

    fn into_outcome(self) -> Outcome {
        Outcome {
            pass: self.checks.iter().all(|c| c.pass),
            checks: self.checks,
            observations: self.observations,
            artifacts: self.artifacts,
        }
    }
}

/// Runs one command. `verify-all` without a configuration runs every bundled configuration.
pub fn run_command(cmd: CommandKind, cfg: Option<&RunConfig>, opts: &RunOptions) -> Result<Outcome, CliError> {
    if cmd == CommandKind::VerifyAll {
        let cfgs = match cfg {
            Some(c) => vec![c.clone()],
            None => bundled::configs()?,
        };
        let report = verify_all(&cfgs, opts)?;
        let name = cfgs
            .first()
            .map(|c| c.outputs.verification_report.clone())
            .unwrap_or_else(|| "verification_report.json".into());
        let mut section = Section::default();
        for s in &report.suites {
            section.checks.extend(s.checks.iter().cloned());
            section.observations.extend(s.observations.iter().cloned());
        }
        section.artifact(&name, to_json(&report));
        return Ok(section.into_outcome());
    }
    let cfg = cfg.ok_or_else(|| CliError::usage("this command needs --config"))?;
    if cmd == CommandKind::FreeParticle {
        return Ok(free_particle_section(cfg, true)?.into_outcome());
    }
    let model = cfg.build_model()?;
    let section = match cmd {
        CommandKind::Bands => bands_section(cfg, &model, true)?,
        CommandKind::Curvature => curvature_section(cfg, &model, opts.method)?,
        CommandKind::DeltaVerify => delta_section(cfg, &model, true)?,
        CommandKind::Adiabatic => adiabatic_section(cfg, &model, opts.seed, true)?,
        CommandKind::FreeParticle | CommandKind::VerifyAll => unreachable!(),
    };
    Ok(section.into_outcome())
}

/// One suite per configuration, covering every section the configuration describes.
pub fn verify_all(cfgs: &[RunConfig], opts: &RunOptions) -> Result<VerificationReport, CliError> {
    let mut suites = Vec::with_capacity(cfgs.len());
    for cfg in cfgs {
        log::info!("suite {}", cfg.name);
        let model = cfg.build_model()?;
        let mut s = Section::default();
        if cfg.k_path.is_some() {
            s.extend(bands_section(cfg, &model, false)?);
        }
        if cfg.free_particle.is_some() {
            s.extend(free_particle_section(cfg, false)?);
        }
        if !cfg.delta_points.is_empty() {
            s.extend(delta_section(cfg, &model, false)?);
        }
        if cfg.k_grid.is_some() && cfg.dimension >= 2 {
            s.extend(curvature_checks(cfg, &model, opts.seed)?);
        }
        if cfg.ramp.is_some() || cfg.sweep.is_some() {
            s.extend(adiabatic_section(cfg, &model, opts.seed, false)?);
        }
        suites.push(SuiteReport::new(
            &cfg.name,
            environment(cfg, &model),
            s.checks,
            s.observations,
        ));
    }
    Ok(VerificationReport::new(suites))
}

fn environment(cfg: &RunConfig, model: &BlochModel) -> Environment {
    Environment {
        dimension: cfg.dimension,
        e_cut: cfg.e_cut,
        basis_size: model.basis().len(),
        n_bands: cfg.n_bands,
        k_grid: cfg.k_grid.clone(),
        real_grid: cfg.grid_resolution,
        gauge: cfg.gauge.as_str().into(),
        dk: step(cfg, model),
    }
}

fn step(cfg: &RunConfig, model: &BlochModel) -> f64 {
    cfg.dk.unwrap_or_else(|| default_dk(model))
}

fn k_header(dim: usize) -> Vec<&'static str> {
    ["kx", "ky", "kz"][..dim].to_vec()
}

fn k_cells(k: &Vector3<f64>, dim: usize) -> Vec<String> {
    (0..dim).map(|i| num(k[i])).collect()
}

fn pairs(v: &Vector3<Complex64>, dim: usize) -> Vec<[f64; 2]> {
    (0..dim).map(|i| [v[i].re, v[i].im]).collect()
}

fn c_norm(v: &Vector3<Complex64>) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn missing(what: &str) -> CliError {
    CliError::usage(format!("the configuration has no {what} section"))
}

fn bands_section(cfg: &RunConfig, model: &BlochModel, emit: bool) -> Result<Section, CliError> {
    let path = cfg.k_path.as_ref().ok_or_else(|| missing("k_path"))?;
    let points = path.points();
    let table = band_structure(model, &points, cfg.n_bands)?;
    let dim = cfg.dimension;
    let mut s = Section::default();
    if emit {
        let mut header = vec!["point"];
        header.extend(k_header(dim));
        header.extend(["band", "energy"]);
        let mut csv = Csv::new(&header);
        for (i, (k, es)) in table.points.iter().zip(&table.energies).enumerate() {
            for (b, e) in es.iter().enumerate() {
                let mut row = vec![i.to_string()];
                row.extend(k_cells(k, dim));
                row.extend([b.to_string(), num(*e)]);
                csv.row(&row);
            }
        }
        s.artifact(&cfg.outputs.bands, csv.finish());
    }
    if model.potential().is_free() {
        // Lowest free band: min over the basis of |k + G|^2 / 2.
        let worst = table
            .points
            .iter()
            .zip(&table.energies)
            .map(|(k, es)| {
                let min = model
                    .basis()
                    .gvecs()
                    .iter()
                    .map(|g| 0.5 * (k + g).norm_squared())
                    .fold(f64::INFINITY, f64::min);
                (es[0] - min).abs() / min.max(1.0)
            })
            .fold(0.0, f64::max);
        s.checks.push(Check::below(
            "free-dispersion",
            "free particle: lowest band equals the smallest |k+G|^2/2",
            worst,
            1e-10,
        ));
    }
    Ok(s)
}

#[derive(Serialize)]
struct ComparisonPoint {
    k: Vec<f64>,
    masked: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    wilson: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kubo: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    corrected: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct ComparisonBand {
    band: usize,
    kubo_vs_wilson_relative_rms: Option<f64>,
    corrected_vs_wilson_relative_rms: Option<f64>,
    masked: usize,
    points: Vec<ComparisonPoint>,
}

#[derive(Serialize)]
struct Comparison {
    config: String,
    grid: Vec<usize>,
    n_bands: usize,
    /// Omega components per sample: z only in 2D, x y z in 3D.
    components: Vec<String>,
    methods: Vec<String>,
    bands: Vec<ComparisonBand>,
}

fn omega_components(o: &Vector3<f64>, dim: usize) -> Vec<f64> {
    if dim == 2 {
        vec![o.z]
    } else {
        vec![o.x, o.y, o.z]
    }
}

fn curvature_grid(cfg: &RunConfig, model: &BlochModel) -> Result<KGrid, CliError> {
    if cfg.dimension < 2 {
        return Err(CliError::usage("curvature needs a 2D or 3D lattice"));
    }
    let counts = cfg.k_grid.as_ref().ok_or_else(|| missing("k_grid"))?;
    Ok(KGrid::new(model.basis().lattice(), counts)?)
}

fn field(
    cfg: &RunConfig,
    model: &BlochModel,
    grid: &KGrid,
    band: usize,
    method: Method,
) -> Result<CurvatureField, CliError> {
    Ok(match method {
        Method::Wilson => curvature_wilson_loop(model, grid, band)?,
        m => curvature_field(model, grid, band, cfg.n_bands, m, Sites::Centers)?,
    })
}

fn curvature_section(cfg: &RunConfig, model: &BlochModel, choice: MethodChoice) -> Result<Section, CliError> {
    let grid = curvature_grid(cfg, model)?;
    let dim = cfg.dimension;
    let methods = choice.methods();
    let mut header = k_header(dim);
    header.extend(["band", "method"]);
    if dim == 3 {
        header.extend(["omega_x", "omega_y"]);
    }
    header.push("omega_z");
    let mut csv = Csv::new(&header);
    let mut bands = Vec::new();
    let sites = grid.centers();
    for &band in &cfg.bands {
        let fields = methods
            .iter()
            .map(|&m| field(cfg, model, &grid, band, m))
            .collect::<Result<Vec<_>, _>>()?;
        let get = |m: Method| fields.iter().find(|f| f.method == m);
        let mut points = Vec::with_capacity(sites.len());
        let mut masked = 0;
        for (i, k) in sites.iter().enumerate() {
            for f in &fields {
                let mut row = k_cells(k, dim);
                row.extend([band.to_string(), f.method.as_str().into()]);
                row.extend(omega_components(&f.omega[i], dim).into_iter().map(num));
                csv.row(&row);
            }
            let m = fields.iter().any(|f| f.masked[i]);
            masked += usize::from(m);
            points.push(ComparisonPoint {
                k: (0..dim).map(|a| k[a]).collect(),
                masked: m,
                wilson: get(Method::Wilson).map(|f| omega_components(&f.omega[i], dim)),
                kubo: get(Method::Kubo).map(|f| omega_components(&f.omega[i], dim)),
                corrected: get(Method::Corrected).map(|f| omega_components(&f.omega[i], dim)),
            });
        }
        let vs_wilson = |m: Method| match (get(m), get(Method::Wilson)) {
            (Some(a), Some(w)) => Some(relative_rms(a, w)),
            _ => None,
        };
        bands.push(ComparisonBand {
            band,
            kubo_vs_wilson_relative_rms: vs_wilson(Method::Kubo),
            corrected_vs_wilson_relative_rms: vs_wilson(Method::Corrected),
            masked,
            points,
        });
    }
    let comparison = Comparison {
        config: cfg.name.clone(),
        grid: grid.counts().to_vec(),
        n_bands: cfg.n_bands,
        components: if dim == 2 {
            vec!["omega_z".into()]
        } else {
            vec!["omega_x".into(), "omega_y".into(), "omega_z".into()]
        },
        methods: methods.iter().map(|m| m.as_str().into()).collect(),
        bands,
    };
    let mut s = Section::default();
    for b in &comparison.bands {
        if let Some(v) = b.kubo_vs_wilson_relative_rms {
            s.observations.push(Observation::new(
                &format!("kubo-vs-wilson-band-{}", b.band),
                "relative RMS of the standard sum over states against plaquette Wilson loops",
                v,
            ));
        }
        if let Some(v) = b.corrected_vs_wilson_relative_rms {
            s.observations.push(Observation::new(
                &format!("corrected-vs-wilson-band-{}", b.band),
                "relative RMS of the corrected sum over states against plaquette Wilson loops",
                v,
            ));
        }
    }
    s.artifact(&cfg.outputs.curvature, csv.finish());
    s.artifact(&cfg.outputs.comparison, to_json(&comparison));
    Ok(s)
}

fn random_k(model: &BlochModel, rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let mut k = Vector3::zeros();
    for b in model.basis().lattice().reciprocal() {
        k += b * rng.random_range(-0.5..0.5);
    }
    k
}

fn curvature_checks(cfg: &RunConfig, model: &BlochModel, seed: u64) -> Result<Section, CliError> {
    let grid = curvature_grid(cfg, model)?;
    let mut s = Section::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_small = cfg.n_bands.min(8);

    let mut worst = [0.0_f64; 2];
    for _ in 0..16 {
        let sol = model.solve(&random_k(model, &mut rng), n_small)?;
        for (w, m) in worst.iter_mut().zip([Method::Kubo, Method::Corrected]) {
            *w = w.max(sum_rule_check(&sol, m)?.relative);
        }
    }
    s.checks.push(Check::below(
        "sum-rule-kubo",
        "sum over all retained bands of the standard sum-over-states curvature vanishes",
        worst[0],
        1e-12,
    ));
    s.checks.push(Check::below(
        "sum-rule-corrected",
        "sum over all retained bands of the corrected sum-over-states curvature vanishes",
        worst[1],
        1e-12,
    ));

    let (da, db) = (grid.step(0), grid.step(1));
    let mut gauge = [0.0_f64; 4];
    for _ in 0..8 {
        let k = random_k(model, &mut rng);
        for j in 0..5 {
            let r = gauge_invariance_check(model, &k, &da, &db, n_small, &cfg.bands, seed.wrapping_add(j))?;
            gauge[0] = gauge[0].max(r.kubo);
            gauge[1] = gauge[1].max(r.corrected);
            gauge[2] = gauge[2].max(r.wilson);
            gauge[3] = gauge[3].max(r.wilson_curvature);
        }
    }
    let anchor = "curvature unchanged under random per-band phases";
    s.checks.push(Check::below("gauge-kubo", anchor, gauge[0], 1e-12));
    s.checks.push(Check::below("gauge-corrected", anchor, gauge[1], 1e-12));
    s.checks.push(Check::below(
        "gauge-wilson",
        "plaquette Berry phase unchanged under random per-corner, per-band phases",
        gauge[2],
        1e-14,
    ));
    s.observations.push(Observation::new(
        "gauge-wilson-curvature",
        "largest change of the Wilson curvature (phase / plaquette area)",
        gauge[3],
    ));

    for &band in &cfg.bands {
        if cfg.dimension == 2 {
            let wilson = curvature_wilson_loop(model, &grid, band)?;
            let area = grid.plaquette_area(0, 1);
            let total: f64 = wilson.omega.iter().map(|o| o.z * area).sum::<f64>() / (2.0 * PI);
            s.checks.push(Check::below(
                &format!("chern-integer-band-{band}"),
                "plaquette fluxes over the zone sum to 2 pi times an integer",
                (total - total.round()).abs(),
                1e-6,
            ));
            s.observations.push(Observation::new(
                &format!("chern-number-band-{band}"),
                "Brillouin-zone integral of the curvature / 2 pi",
                total.round(),
            ));
            let kubo = curvature_field(model, &grid, band, cfg.n_bands, Method::Kubo, Sites::Centers)?;
            s.checks.push(Check::below(
                &format!("kubo-vs-wilson-band-{band}"),
                "standard sum over states reproduces the plaquette Wilson-loop curvature",
                relative_rms(&kubo, &wilson),
                1e-3,
            ));
            let mut errors = Vec::new();
            let mut n = 8;
            while n <= cfg.n_bands {
                let f = curvature_field(model, &grid, band, n, Method::Kubo, Sites::Centers)?;
                errors.push(relative_rms(&f, &wilson));
                n *= 2;
            }
            for (j, e) in errors.iter().enumerate() {
                s.observations.push(Observation::new(
                    &format!("kubo-vs-wilson-band-{band}-n{}", 8 << j),
                    "relative RMS against Wilson loops at a reduced band count",
                    *e,
                ));
            }
            if errors.len() >= 2 {
                s.checks.push(Check::new(
                    &format!("kubo-truncation-monotone-band-{band}"),
                    "Kubo/Wilson disagreement shrinks each time the band count doubles from 8",
                    errors.windows(2).filter(|w| w[1] >= w[0]).count() as f64,
                    0.0,
                    Relation::AtMost,
                ));
            }
            let corrected = curvature_field(model, &grid, band, cfg.n_bands, Method::Corrected, Sites::Centers)?;
            s.observations.push(Observation::new(
                &format!("corrected-vs-wilson-band-{band}"),
                "relative RMS of the corrected sum over states against plaquette Wilson loops",
                relative_rms(&corrected, &wilson),
            ));
        } else {
            let flux = wilson_cube_fluxes(model, &grid, band)?;
            s.checks.push(Check::below(
                &format!("cube-flux-integer-band-{band}"),
                "Wilson flux out of every closed cube is a multiple of 2 pi",
                flux.max_integer_residual,
                1e-6,
            ));
            s.checks.push(Check::new(
                &format!("cube-flux-zero-band-{band}"),
                "cubes away from degeneracies enclose no net flux",
                flux.nonzero_unmasked as f64,
                0.0,
                Relation::AtMost,
            ));
            s.observations.push(Observation::new(
                &format!("cube-flux-masked-band-{band}"),
                "cubes touching a degeneracy",
                flux.masked as f64,
            ));
            let kubo = curvature_field(model, &grid, band, cfg.n_bands, Method::Kubo, Sites::Points)?;
            let div = divergence_check(&kubo)?;
            s.checks.push(Check::below(
                &format!("kubo-divergence-band-{band}"),
                "finite-difference divergence of the sum-over-states curvature, relative to max|Omega| |b1|",
                div.ratio,
                1e-3,
            ));
        }
    }
    Ok(s)
}

#[derive(Serialize)]
struct DeltaPair {
    row: usize,
    col: usize,
    closed_form: Vec<[f64; 2]>,
    route: Vec<[f64; 2]>,
    relative: f64,
    delta_hk: Vec<[f64; 2]>,
}

#[derive(Serialize)]
struct DeltaPoint {
    k: Vec<f64>,
    energies: Vec<f64>,
    pairs: Vec<DeltaPair>,
    max_relative: f64,
    boundary_max: f64,
    identity_max_relative: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    position_grid_residual: Option<f64>,
}

#[derive(Serialize)]
struct DeltaReport {
    config: String,
    route: Route,
    dk: f64,
    n_bands: usize,
    points: Vec<DeltaPoint>,
    checks: Vec<Check>,
    pass: bool,
}

const DIVERGENCE_PANELS: usize = 8;
const DIVERGENCE_DEGREE: usize = 16;

fn delta_section(cfg: &RunConfig, model: &BlochModel, emit: bool) -> Result<Section, CliError> {
    if cfg.delta_points.is_empty() {
        return Err(missing("delta"));
    }
    let dim = cfg.dimension;
    let dk = step(cfg, model);
    let nb = cfg.delta_bands;
    let tol = cfg.tolerances;
    let route = if dim == 1 { Route::Surface } else { Route::Divergence };
    let grid = match cfg.grid_resolution {
        Some(n) => Some(sample_unit_cell_grid(model.basis(), n)?),
        None => None,
    };
    let gl = if dim > 1 {
        Some(CellQuadrature::gauss_legendre(
            model.basis().lattice(),
            DIVERGENCE_PANELS,
            DIVERGENCE_DEGREE,
        )?)
    } else {
        None
    };
    let uniform = if dim > 1 {
        let n = cfg.grid_resolution.unwrap_or_else(|| minimal_resolution(model.basis()));
        Some(CellQuadrature::uniform(&sample_unit_cell_grid(model.basis(), n)?))
    } else {
        None
    };

    let mut points = Vec::with_capacity(cfg.delta_points.len());
    for k in &cfg.delta_points {
        let sol = model.solve(k, nb)?;
        let e = &sol.energies;
        let closed = delta_closed_form_for(&sol)?;
        let p = momentum_matrix(&sol);
        let r = position_matrix(&sol);
        let usable = |a: usize, b: usize| a != b && !is_degenerate(e[a], e[b], tol.degeneracy);
        let (dh, dhk, boundary_max) = if dim == 1 {
            let st = StateDerivative::compute(model, &sol, &Vector3::new(dk, 0.0, 0.0))?;
            let h = delta_surface_term(&st, Formulation::H)?;
            let hk = delta_surface_term(&st, Formulation::Hk)?;
            let bmax = hk
                .terms
                .as_ref()
                .map(|ts| ts.iter().flat_map(|t| t.iter().map(|z| z.norm())).fold(0.0, f64::max))
                .unwrap_or(0.0);
            (h.block, hk.block, bmax)
        } else {
            let grads = GradientStates::compute(model, &sol, dk)?;
            let mut vh = VectorBlock::zeros(dim, nb);
            let mut vhk = VectorBlock::zeros(dim, nb);
            let mut valid = vec![vec![false; nb]; nb];
            let mut bmax: f64 = 0.0;
            for a in 0..nb {
                for b in 0..nb {
                    if !usable(a, b) {
                        continue;
                    }
                    let jh = generalized_current(
                        &grads,
                        a,
                        b,
                        Formulation::H,
                        gl.as_ref().unwrap_or_else(|| unreachable!()),
                    )?;
                    let jk = generalized_current(
                        &grads,
                        a,
                        b,
                        Formulation::Hk,
                        uniform.as_ref().unwrap_or_else(|| unreachable!()),
                    )?;
                    let x = jk.divergence_integral();
                    bmax = bmax.max(c_norm(&x));
                    vh.set(a, b, &jh.divergence_integral());
                    vhk.set(a, b, &x);
                    valid[a][b] = true;
                }
            }
            let block = |values: VectorBlock, formulation: Formulation| DeltaBlock {
                k: sol.k,
                formulation,
                route: Route::Divergence,
                values,
                valid: valid.clone(),
            };
            (block(vh, Formulation::H), block(vhk, Formulation::Hk), bmax)
        };
        let mut pairs_out = Vec::new();
        let mut max_rel: f64 = 0.0;
        for a in 0..nb {
            for b in 0..nb {
                if !usable(a, b) {
                    continue;
                }
                let (Some(c), Some(d), Some(dk_)) = (closed.get(a, b), dh.get(a, b), dhk.get(a, b)) else {
                    continue;
                };
                let rel = c_norm(&(d - c)) / c_norm(&c).max(c_norm(&d)).max(f64::MIN_POSITIVE);
                max_rel = max_rel.max(rel);
                pairs_out.push(DeltaPair {
                    row: a,
                    col: b,
                    closed_form: pairs(&c, dim),
                    route: pairs(&d, dim),
                    relative: rel,
                    delta_hk: pairs(&dk_, dim),
                });
            }
        }
        let identity = delta_difference_identity(&dh, &dhk, &p, &r, e);
        let position_grid_residual = match &grid {
            Some(g) => {
                let rg = position_matrix_unit_cell(&sol, g)?;
                let mut worst: f64 = 0.0;
                for (x, y) in rg.components().iter().zip(r.components()) {
                    worst = worst.max(crate::solver::max_abs(&(x - y)));
                }
                Some(worst)
            }
            None => None,
        };
        points.push(DeltaPoint {
            k: (0..dim).map(|i| k[i]).collect(),
            energies: e.clone(),
            pairs: pairs_out,
            max_relative: max_rel,
            boundary_max,
            identity_max_relative: identity.max_relative,
            position_grid_residual,
        });
    }
    let fold = |f: &dyn Fn(&DeltaPoint) -> f64| points.iter().map(f).fold(0.0, f64::max);
    let route_anchor = if dim == 1 {
        "closed form P + i(e_n - e_n')<r> agrees with the boundary evaluation of the correction term"
    } else {
        "closed form P + i(e_n - e_n')<r> agrees with the cell integral of the generalized-current divergence"
    };
    let mut checks = vec![
        Check::below(
            "delta-route-agreement",
            route_anchor,
            fold(&|p| p.max_relative),
            tol.identity,
        ),
        Check::below(
            "delta-hk-boundary",
            "every boundary term of the correction for cell-periodic states vanishes",
            fold(&|p| p.boundary_max),
            tol.boundary,
        ),
        Check::below(
            "delta-difference-identity",
            "Delta^H - Delta^H(k) = <p> + i(e_n - e_n')<r>",
            fold(&|p| p.identity_max_relative),
            tol.identity,
        ),
    ];
    if grid.is_some() {
        checks.push(Check::below(
            "position-grid",
            "unit-cell position elements: real-space quadrature equals the analytic moments",
            fold(&|p| p.position_grid_residual.unwrap_or(0.0)),
            tol.identity,
        ));
    }
    let mut s = Section::default();
    if emit {
        let report = DeltaReport {
            config: cfg.name.clone(),
            route,
            dk,
            n_bands: nb,
            pass: checks.iter().all(|c| c.pass),
            checks: checks.clone(),
            points,
        };
        s.artifact(&cfg.outputs.delta_report, to_json(&report));
    }
    s.checks = checks;
    Ok(s)
}

#[derive(Serialize)]
struct FreeParticleOutput {
    config: String,
    box_length: f64,
    rows: Vec<FreeParticleReport>,
    pass: bool,
}

fn free_particle_section(cfg: &RunConfig, emit: bool) -> Result<Section, CliError> {
    let (length, pairs) = cfg.free_particle.as_ref().ok_or_else(|| missing("free_particle"))?;
    let rows = pairs
        .iter()
        .map(|(k, kp)| free_particle_identity_check(cfg.dimension, *length, k, kp))
        .collect::<crate::Result<Vec<_>>>()?;
    let agreement = rows.iter().map(|r| r.max_relative_difference).fold(0.0, f64::max);
    let first = rows.iter().map(|r| r.first_term).fold(0.0, f64::max);
    let mut s = Section::default();
    s.checks.push(Check::below(
        "free-particle-agreement",
        "free particle in a box: <k'|grad_k|k> from the position integral equals Delta/(e_k - e_k')",
        agreement,
        1e-10,
    ));
    s.checks.push(Check::below(
        "free-particle-orthonormality",
        "free particle in a box: the orthonormality term vanishes for k != k'",
        first,
        1e-12,
    ));
    s.checks.push(Check::new(
        "free-particle-rows",
        "every free-particle row passes",
        rows.iter().filter(|r| !r.passed).count() as f64,
        0.0,
        Relation::AtMost,
    ));
    if emit {
        let out = FreeParticleOutput {
            config: cfg.name.clone(),
            box_length: *length,
            pass: s.checks.iter().all(|c| c.pass),
            rows,
        };
        s.artifact(&cfg.outputs.free_particle_report, to_json(&out));
    }
    Ok(s)
}

#[derive(Serialize)]
struct AdiabaticReport {
    config: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    run: Option<RunSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<Vec<SweepRow>>,
    checks: Vec<Check>,
    pass: bool,
}

#[derive(Serialize)]
struct RunSummary {
    k0: Vec<f64>,
    rate: Vec<f64>,
    duration: f64,
    samples: usize,
    n_bands: usize,
    initial_band: usize,
    final_populations: Vec<f64>,
    transition_probability: f64,
    norm_drift: f64,
    derivative_consistency: f64,
    max_standard_margin: f64,
    max_extended_margin: f64,
    max_hk_margin: f64,
    gauge_robustness: f64,
}

fn adiabatic_section(cfg: &RunConfig, model: &BlochModel, seed: u64, emit: bool) -> Result<Section, CliError> {
    if cfg.ramp.is_none() && cfg.sweep.is_none() {
        return Err(missing("ramp"));
    }
    let dim = cfg.dimension;
    let mut s = Section::default();
    let mut checks = Vec::new();
    let mut summary = None;
    if let Some(r) = &cfg.ramp {
        let ramp = RampSpec {
            k0: r.k0,
            rate: r.rate,
            duration: r.duration,
            samples: r.samples,
        };
        let mut opts = EvolveOptions::new(r.n_bands, r.initial_band);
        opts.dk = cfg.dk;
        let run = evolve_coefficients(model, &ramp, &opts)?;
        let hk = adiabaticity_margin(model, &ramp, r.n_bands, Formulation::Hk, MarginKind::Standard)?;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut twisted = opts.clone();
        twisted.phases = Some((0..r.n_bands).map(|_| rng.random_range(-PI..PI)).collect());
        let other = evolve_coefficients(model, &ramp, &twisted)?;
        let gauge_robustness = run
            .coefficients
            .iter()
            .zip(&other.coefficients)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x.norm() - y.norm()).abs()))
            .fold(0.0, f64::max);

        checks.push(Check::below(
            "norm-conservation",
            "sum_n |c_n|^2 stays 1 along the ramp",
            run.norm_drift(),
            1e-8,
        ));
        checks.push(Check::new(
            "standard-margin-zero",
            "parameter-free H: <m|dH/dt|n> = 0, so the ordinary adiabaticity ratio vanishes",
            run.standard_margin.max(),
            0.0,
            Relation::AtMost,
        ));
        if ramp.speed() > 0.0 {
            let weakest = (0..run.times.len())
                .map(|j| run.extended_margin.band_max(j, r.initial_band))
                .fold(f64::INFINITY, f64::min);
            checks.push(Check::new(
                "extended-margin-positive",
                "adding the correction term gives a nonzero adiabaticity ratio",
                weakest,
                0.0,
                Relation::Above,
            ));
            checks.push(Check::below(
                "derivative-consistency",
                "(e_n - e_m)(<u_m|d_k u_n> + i<r>_mn) equals Delta^H_mn along the ramp",
                run.derivative_consistency,
                1e-6,
            ));
        }
        checks.push(Check::below(
            "gauge-robustness",
            "populations unchanged by constant per-band phases",
            gauge_robustness,
            1e-8,
        ));

        if emit {
            let mut csv = Csv::new(&[
                "t",
                "band",
                "re_c",
                "im_c",
                "abs2_c",
                "margin_standard",
                "margin_extended",
                "margin_hk",
            ]);
            for (j, (t, cs)) in run.times.iter().zip(&run.coefficients).enumerate() {
                for (b, c) in cs.iter().enumerate() {
                    csv.row(&[
                        num(*t),
                        b.to_string(),
                        num(c.re),
                        num(c.im),
                        num(c.norm_sqr()),
                        num(run.standard_margin.band_max(j, b)),
                        num(run.extended_margin.band_max(j, b)),
                        num(hk.band_max(j, b)),
                    ]);
                }
            }
            s.artifact(&cfg.outputs.trajectory, csv.finish());
        }
        summary = Some(RunSummary {
            k0: (0..dim).map(|i| r.k0[i]).collect(),
            rate: (0..dim).map(|i| r.rate[i]).collect(),
            duration: r.duration,
            samples: r.samples,
            n_bands: r.n_bands,
            initial_band: r.initial_band,
            transition_probability: run.transition_probability(),
            norm_drift: run.norm_drift(),
            derivative_consistency: run.derivative_consistency,
            max_standard_margin: run.standard_margin.max(),
            max_extended_margin: run.extended_margin.max(),
            max_hk_margin: hk.max(),
            gauge_robustness,
            final_populations: run.final_populations,
        });
    }
    let mut sweep_rows = None;
    if let Some(sw) = &cfg.sweep {
        let (n_bands, band) = cfg
            .ramp
            .as_ref()
            .map(|r| (r.n_bands, r.initial_band))
            .unwrap_or((cfg.n_bands.min(4), 0));
        let mut opts = EvolveOptions::new(n_bands, band);
        opts.dk = cfg.dk;
        let rows = rate_sweep(model, sw.k0, sw.k1, &sw.rates, sw.samples, &opts)?;
        let violations = rows
            .windows(2)
            .filter(|w| w[0].rate < w[1].rate && w[0].transition_probability >= w[1].transition_probability)
            .count();
        checks.push(Check::new(
            "sweep-monotone",
            "halving the ramp rate lowers the transition probability",
            violations as f64,
            0.0,
            Relation::AtMost,
        ));
        checks.push(Check::below(
            "sweep-slowest",
            "transition probability at the slowest configured rate",
            rows.first().map(|r| r.transition_probability).unwrap_or(f64::INFINITY),
            1e-6,
        ));
        sweep_rows = Some(rows);
    }
    if emit {
        let report = AdiabaticReport {
            config: cfg.name.clone(),
            run: summary,
            sweep: sweep_rows,
            pass: checks.iter().all(|c| c.pass),
            checks: checks.clone(),
        };
        s.artifact(&cfg.outputs.adiabatic_report, to_json(&report));
    }
    s.checks = checks;
    Ok(s)
}
