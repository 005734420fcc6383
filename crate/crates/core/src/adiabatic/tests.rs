use super::*;
use crate::presets;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn kx(x: f64) -> Vector3<f64> {
    Vector3::new(x, 0.0, 0.0)
}

// i dc/dt = H(k(t)) c on the full plane-wave basis.
struct Direct<'a> {
    model: &'a BlochModel,
    ramp: RampSpec,
}

impl System<f64, DVector<f64>> for Direct<'_> {
    fn system(&self, t: f64, y: &DVector<f64>, dy: &mut DVector<f64>) {
        let n = y.len() / 2;
        let h = self.model.hamiltonian(&(self.ramp.k0 + self.ramp.rate * t)).unwrap();
        for r in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..n {
                acc += h[(r, c)] * Complex64::new(y[c], y[n + c]);
            }
            let d = acc * Complex64::new(0.0, -1.0);
            dy[r] = d.re;
            dy[n + r] = d.im;
        }
    }
}

fn direct_populations(model: &BlochModel, ramp: &RampSpec, band: usize, n_bands: usize) -> Vec<f64> {
    let start = model.solve(&ramp.k0, n_bands).unwrap();
    let dim = start.coeffs.nrows();
    let mut y0 = DVector::zeros(2 * dim);
    for g in 0..dim {
        y0[g] = start.coeffs[(g, band)].re;
        y0[dim + g] = start.coeffs[(g, band)].im;
    }
    let system = Direct { model, ramp: *ramp };
    let mut stepper = Dopri5::from_param(
        system,
        0.0,
        ramp.duration,
        ramp.duration,
        y0,
        1e-13,
        1e-14,
        0.9,
        0.04,
        0.2,
        10.0,
        0.01,
        0.0,
        u32::MAX,
        1000,
        OutputType::Sparse,
    );
    stepper.integrate().unwrap();
    let y = stepper.y_out().last().unwrap();
    let psi = DVector::from_fn(dim, |g, _| Complex64::new(y[g], y[dim + g]));
    let end = model.solve(&ramp.k_end(), n_bands).unwrap();
    (0..n_bands)
        .map(|m| end.coeffs.column(m).dotc(&psi).norm_sqr())
        .collect()
}

#[test]
fn static_ramp_is_stationary() {
    let model = presets::mathieu(0.1, 200.0).unwrap();
    let ramp = RampSpec {
        k0: kx(0.2 * PI),
        rate: Vector3::zeros(),
        duration: 37.0,
        samples: 11,
    };
    let run = evolve_coefficients(&model, &ramp, &EvolveOptions::new(4, 0)).unwrap();
    let e0 = model.solve(&ramp.k0, 4).unwrap().energies[0];
    for (t, c) in run.times.iter().zip(&run.coefficients) {
        assert!((c[0].norm_sqr() - 1.0).abs() < 1e-10);
        let expected = Complex64::from_polar(1.0, -e0 * t);
        assert!((c[0] - expected).norm() < 1e-9, "t = {t}: {} vs {expected}", c[0]);
        assert!(c[1..].iter().all(|x| x.norm() == 0.0));
    }
    assert_eq!(run.standard_margin.max(), 0.0);
    assert_eq!(run.extended_margin.max(), 0.0);
}

#[test]
fn matches_direct_plane_wave_evolution() {
    let model = presets::mathieu(0.1, 100.0).unwrap();
    let n = model.basis().len();
    let ramp = RampSpec::between(kx(0.1 * PI), kx(0.8 * PI), 0.25, 5).unwrap();
    let run = evolve_coefficients(&model, &ramp, &EvolveOptions::new(n, 0)).unwrap();
    let oracle = direct_populations(&model, &ramp, 0, n);
    assert!(
        oracle[1] > 1e-8,
        "oracle transition too small to compare: {:e}",
        oracle[1]
    );
    for m in 0..n {
        let d = (run.final_populations[m] - oracle[m]).abs();
        assert!(
            d < 1e-9 + 1e-6 * oracle[m],
            "band {m}: {:e} vs {:e}",
            run.final_populations[m],
            oracle[m]
        );
    }
}

#[test]
fn slow_ramp_across_half_zone() {
    let model = presets::mathieu(0.1, 200.0).unwrap();
    let ramp = RampSpec {
        k0: kx(-0.5 * PI),
        rate: kx(PI / 1e4),
        duration: 1e4,
        samples: 101,
    };
    let run = evolve_coefficients(&model, &ramp, &EvolveOptions::new(4, 0)).unwrap();
    assert!(1.0 - run.final_populations[0] < 1e-3);
    assert!(run.transition_probability() < 1e-3);
    assert!(run.norm_drift() < 1e-8, "drift {:e}", run.norm_drift());
    assert!((run.times[100] - 1e4).abs() < 1e-9);
}

#[test]
fn norm_is_conserved_on_fast_ramp() {
    let model = presets::mathieu(0.4, 200.0).unwrap();
    let ramp = RampSpec::between(kx(0.1 * PI), kx(1.9 * PI), 2.0, 41).unwrap();
    let run = evolve_coefficients(&model, &ramp, &EvolveOptions::new(4, 0)).unwrap();
    assert!(run.transition_probability() > 1e-3);
    assert!(run.norm_drift() < 1e-8, "drift {:e}", run.norm_drift());
}

#[test]
fn margins_standard_extended_and_formulations() {
    let model = presets::mathieu(0.1, 200.0).unwrap();
    let ramp = RampSpec::between(kx(0.1 * PI), kx(0.8 * PI), 0.1, 9).unwrap();
    let std_h = adiabaticity_margin(&model, &ramp, 4, Formulation::H, MarginKind::Standard).unwrap();
    let ext_h = adiabaticity_margin(&model, &ramp, 4, Formulation::H, MarginKind::Extended).unwrap();
    let std_hk = adiabaticity_margin(&model, &ramp, 4, Formulation::Hk, MarginKind::Standard).unwrap();
    assert_eq!(std_h.max(), 0.0);
    assert!(ext_h.values.iter().all(|row| row[0] > 1e-6));

    // The two numerators differ by i (e_n - e_m) R, i.e. by rate.R after division.
    let table = PathTable::build(&model, ramp.k0, ramp.k_end(), &EvolveOptions::new(4, 0)).unwrap();
    for (j, t) in ext_h.times.iter().enumerate() {
        let s = t / ramp.duration;
        let k = table.k_at(s);
        let sol = model.solve(&k, 4).unwrap();
        let r = position_matrix(&sol);
        for (p, &(m, n)) in ext_h.pairs.iter().enumerate() {
            let diff = (ext_h.amplitudes[j][p] - std_hk.amplitudes[j][p]).norm();
            let oracle = (r.component(0)[(m, n)] * ramp.speed()).norm();
            assert!(
                (diff - oracle).abs() < 1e-6 * oracle.max(1e-3),
                "t = {t}, ({m},{n}): {diff} vs {oracle}"
            );
        }
    }
}

#[test]
fn margins_are_linear_in_rate() {
    let model = presets::mathieu(0.1, 200.0).unwrap();
    let (k0, k1) = (kx(0.1 * PI), kx(0.8 * PI));
    let slow = RampSpec::between(k0, k1, 0.1, 9).unwrap();
    let fast = RampSpec::between(k0, k1, 0.2, 9).unwrap();
    for f in [Formulation::H, Formulation::Hk] {
        let a = adiabaticity_margin(&model, &slow, 4, f, MarginKind::Extended).unwrap();
        let b = adiabaticity_margin(&model, &fast, 4, f, MarginKind::Extended).unwrap();
        for (ra, rb) in a.values.iter().zip(&b.values) {
            for (x, y) in ra.iter().zip(rb) {
                assert!((2.0 * x - y).abs() <= 1e-12 * y.abs());
            }
        }
    }
}

#[test]
fn derivative_matches_closed_form_delta_along_path() {
    let model = presets::mathieu(0.1, 200.0).unwrap();
    let table = PathTable::build(&model, kx(0.1 * PI), kx(0.9 * PI), &EvolveOptions::new(4, 0)).unwrap();
    assert!(table.consistency() < 1e-6, "residual {:e}", table.consistency());
}

#[test]
fn rate_sweep_is_monotone_and_deterministic() {
    let model = presets::mathieu(0.1, 200.0).unwrap();
    let (k0, k1) = (kx(0.1 * PI), kx(0.8 * PI));
    let opts = EvolveOptions::new(4, 0);
    let rows = rate_sweep(&model, k0, k1, &[0.05, 0.4, 0.1, 0.2], 3, &opts).unwrap();
    let rates: Vec<f64> = rows.iter().map(|r| r.rate).collect();
    assert_eq!(rates, vec![0.05, 0.1, 0.2, 0.4]);
    for w in rows.windows(2) {
        assert!(w[0].transition_probability < w[1].transition_probability, "{w:?}");
    }
    assert!(rows[0].transition_probability < 1e-6);

    let dup = rate_sweep(&model, k0, k1, &[0.2, 0.2], 3, &opts).unwrap();
    assert_eq!(dup[0], dup[1]);
}

#[test]
fn populations_do_not_depend_on_phase_convention() {
    let model = presets::mathieu(0.1, 200.0).unwrap();
    let ramp = RampSpec::between(kx(0.1 * PI), kx(0.8 * PI), 0.3, 21).unwrap();
    let base = evolve_coefficients(&model, &ramp, &EvolveOptions::new(4, 0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut opts = EvolveOptions::new(4, 0);
    opts.phases = Some((0..4).map(|_| rng.random_range(0.0..2.0 * PI)).collect());
    let turned = evolve_coefficients(&model, &ramp, &opts).unwrap();
    for (a, b) in base.coefficients.iter().zip(&turned.coefficients) {
        for (x, y) in a.iter().zip(b) {
            assert!((x.norm() - y.norm()).abs() < 1e-8);
        }
    }
}

#[test]
fn rejects_bad_ramps() {
    let model = presets::mathieu(0.1, 200.0).unwrap();
    let mut ramp = RampSpec::between(kx(0.1), kx(0.5), 0.1, 5).unwrap();
    ramp.duration = 0.0;
    assert!(evolve_coefficients(&model, &ramp, &EvolveOptions::new(4, 0)).is_err());
    let ramp = RampSpec::between(kx(0.1), kx(0.5), 0.1, 1).unwrap();
    assert!(evolve_coefficients(&model, &ramp, &EvolveOptions::new(4, 0)).is_err());
    let ramp = RampSpec::between(kx(0.1), kx(0.5), 0.1, 5).unwrap();
    assert!(evolve_coefficients(&model, &ramp, &EvolveOptions::new(4, 4)).is_err());
    assert!(rate_sweep(&model, kx(0.1), kx(0.5), &[0.1], 3, &EvolveOptions::new(4, 0)).is_err());
    let mut ramp = RampSpec::between(kx(0.1), kx(0.5), 0.1, 5).unwrap();
    ramp.rate.y = 1.0;
    assert!(evolve_coefficients(&model, &ramp, &EvolveOptions::new(4, 0)).is_err());
}
