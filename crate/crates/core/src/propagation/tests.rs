use super::*;
use crate::linalg::hermiticity_defect;
use crate::liouvillian::assemble_generator;
use crate::model::{five_state_example, RunConfig};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn toy(n: i32) -> (SystemModel, RunConfig, FloquetGenerator, HarmonicStack) {
    let (m, run) = five_state_example();
    let run = run.with_truncation(-n, n);
    let gen = assemble_generator(build_parts(&m).unwrap(), -n, n, m.drive.omega_c).unwrap();
    let init = HarmonicStack::from_density(&run.initial_density(m.dim()), -n, n).unwrap();
    (m, run, gen, init)
}

/// Fields off, no jumps: every coherence only rotates or dephases.
fn field_free() -> SystemModel {
    let (mut m, _) = five_state_example();
    m = m.with_probe_scale(0.0).with_coupling_scale(0.0);
    m.channels.clear();
    for s in m.states.iter_mut() {
        s.gamma_total = 0.0;
    }
    m
}

#[test]
fn uniform_times_cover_the_interval() {
    assert_eq!(uniform_times(1.0, 0.25), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    assert_eq!(uniform_times(1.1, 0.5), vec![0.0, 0.5, 1.0, 1.1]);
    assert_eq!(uniform_times(0.0, 0.5), vec![0.0]);
}

#[test]
fn zero_generator_keeps_the_initial_stack() {
    let mut m = field_free();
    for s in m.states.iter_mut() {
        if s.detuning_p.is_some() {
            s.detuning_p = Some(0.0);
        }
    }
    let gen = assemble_generator(build_parts(&m).unwrap(), 0, 0, m.drive.omega_c).unwrap();
    let run = RunConfig::defaults_for(&m);
    let init = HarmonicStack::from_density(&run.initial_density(5), 0, 0).unwrap();
    let traj = integrate_harmonics(&gen, &init, &uniform_times(3.0, 1.0), 1e-9).unwrap();
    assert_eq!(traj.len(), 4);
    for s in &traj.samples {
        assert_eq!(s.as_slice(), init.as_slice());
    }
    assert!(detect_steady_state(&traj, Some(2.0), 1e-6).is_ok());
}

#[test]
fn tightened_tolerance_agrees_within_ten_tol() {
    let (_, _, gen, init) = toy(6);
    let tol = 1e-8;
    let a = integrate_harmonics(&gen, &init, &[5.0], tol).unwrap();
    let b = integrate_harmonics(&gen, &init, &[5.0], tol / 64.0).unwrap();
    let (x, y) = (a.last().unwrap(), b.last().unwrap());
    let diff = x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
    assert!(diff < 10.0 * tol * y.max_abs(), "diff {diff}");
    assert!(b.stats.accepted > a.stats.accepted);
}

#[test]
fn harmonic_and_direct_paths_agree_early() {
    // the strong coupling spreads r_N well past |N| = 30 during transients
    let (m, run, gen, init) = toy(80);
    let times = uniform_times(1.0, 0.25);
    let traj = integrate_harmonics(&gen, &init, &times, 1e-10).unwrap();
    let direct = integrate_full_lindblad(&m, &run.initial_density(5), &times, 1e-10).unwrap();
    for (s, (t, rho)) in traj.samples.iter().zip(&direct) {
        let r = reconstruct_time_domain(s, *t, m.drive.omega_c);
        for i in 0..5 {
            for j in 0..5 {
                assert!((r[(i, j)] - rho[(i, j)]).norm() < 1e-7, "t = {t}, ({i},{j}) {} vs {}", r[(i, j)], rho[(i, j)]);
            }
        }
    }
}

#[test]
fn full_lindblad_keeps_trace_and_hermiticity() {
    let (m, run) = five_state_example();
    let out = integrate_full_lindblad(&m, &run.initial_density(5), &uniform_times(5.0, 0.5), 1e-9).unwrap();
    for (_, rho) in &out {
        assert!((crate::linalg::trace(rho) - c(1.0, 0.0)).norm() < 1e-10);
        assert!(hermiticity_defect(rho) < 1e-10);
    }
}

#[test]
fn decay_of_an_isolated_excited_state() {
    let (mut m, _) = five_state_example();
    m = m.with_probe_scale(0.0).with_coupling_scale(0.0);
    let gamma = m.gamma(1);
    let mut rho0 = Mat::<Complex64>::zeros(5, 5);
    rho0[(1, 1)] = c(1.0, 0.0);
    let times = uniform_times(1.0, 0.1);
    let lind = integrate_full_lindblad(&m, &rho0, &times, 1e-10).unwrap();
    let vn = integrate_von_neumann_complex_h(&m, &rho0, &times, 1e-10).unwrap();
    for ((t, a), (_, b)) in lind.iter().zip(&vn) {
        let exact = (-gamma * t).exp();
        assert!((a[(1, 1)].re - exact).abs() < 1e-9);
        assert!((b[(1, 1)].re - exact).abs() < 1e-9);
        // the jump refills state 0 only in the master equation
        assert!((a[(0, 0)].re - (1.0 - exact)).abs() < 1e-9);
        assert!(b[(0, 0)].norm() < 1e-15);
    }
}

#[test]
fn complex_energy_path_without_decay_keeps_trace() {
    let (mut m, run) = five_state_example();
    m.channels.clear();
    for s in m.states.iter_mut() {
        s.gamma_total = 0.0;
    }
    let out = integrate_von_neumann_complex_h(&m, &run.initial_density(5), &uniform_times(3.0, 0.5), 1e-10).unwrap();
    for (_, rho) in &out {
        assert!((crate::linalg::trace(rho) - c(1.0, 0.0)).norm() < 1e-9);
    }
}

#[test]
fn complex_energy_trace_never_grows_without_fields() {
    let m = five_state_example().0.with_probe_scale(0.0).with_coupling_scale(0.0);
    let mut rho0 = Mat::<Complex64>::zeros(5, 5);
    for (i, p) in [0.1, 0.3, 0.2, 0.25, 0.15].iter().enumerate() {
        rho0[(i, i)] = c(*p, 0.0);
    }
    rho0[(1, 2)] = c(0.05, 0.02);
    rho0[(2, 1)] = c(0.05, -0.02);
    let out = integrate_von_neumann_complex_h(&m, &rho0, &uniform_times(2.0, 0.05), 1e-10).unwrap();
    for w in out.windows(2) {
        assert!(crate::linalg::trace(&w[1].1).re <= crate::linalg::trace(&w[0].1).re + 1e-15);
    }
}

#[test]
fn transient_trajectory_is_not_steady() {
    let (_, run, gen, init) = toy(30);
    let traj = integrate_harmonics(&gen, &init, &uniform_times(0.5, 0.01), run.ode_tol).unwrap();
    match detect_steady_state(&traj, None, run.steady_tol) {
        Err(Error::NotConverged { drift, .. }) => assert!(drift > 1e-2),
        other => panic!("expected NotConverged, got {other:?}"),
    }
}

#[test]
fn steady_stack_repeats_after_two_coupling_periods() {
    let (m, _, gen, init) = toy(8);
    let traj = integrate_harmonics(&gen, &init, &[30.0], 1e-9).unwrap();
    let s = traj.last().unwrap();
    let period = 2.0 * TAU / m.drive.omega_c;
    let a = reconstruct_time_domain(s, 3.7, m.drive.omega_c);
    let b = reconstruct_time_domain(s, 3.7 + period, m.drive.omega_c);
    for i in 0..5 {
        for j in 0..5 {
            assert!((a[(i, j)] - b[(i, j)]).norm() < 1e-12);
        }
    }
}

#[test]
fn field_free_eigen_evolution_is_elementwise() {
    let mut m = field_free();
    m.dephasing.gamma_extra.insert((1, 0), 0.4);
    m.dephasing.gamma_extra.insert((3, 0), 1.2);
    let parts = build_parts(&m).unwrap();
    let l0 = parts.l0.to_dense();
    let gen = assemble_generator(parts, 0, 0, m.drive.omega_c).unwrap();
    let rho0 = Mat::from_fn(5, 5, |i, j| c(1.0 / (1.0 + i as f64 + j as f64), 0.1 * (i as f64 - j as f64)));
    let init = HarmonicStack::from_density(&rho0, 0, 0).unwrap();
    let sys = generator_eigensystem(&gen, &init).unwrap();
    let mut diag: Vec<Complex64> = (0..25).map(|k| l0[(k, k)]).collect();
    diag.sort_by(|a, b| crate::linalg::eigen::cmp_complex(*a, *b));
    assert_eq!(sys.eigenvalues, diag);
    let traj = eigen_evolve(&gen, &init, &[0.0, 1.5]).unwrap();
    let s = &traj.samples[1];
    for i in 0..5 {
        for j in 0..5 {
            let k = i * 5 + j;
            let exact = rho0[(i, j)] * (l0[(k, k)] * 1.5).exp();
            assert!((s.get(i, j, 0) - exact).norm() < 1e-14);
        }
    }
    // populations do not move: five zero modes
    assert_eq!(sys.steady_modes.len(), 5);
}

#[test]
fn eigenmode_initial_condition_evolves_as_single_exponential() {
    let (_, _, gen, _) = toy(2);
    let zero = HarmonicStack::zeros(5, -2, 2);
    let sys = generator_eigensystem(&gen, &zero).unwrap();
    let k = sys.eigenvalues.len() / 2;
    let data: Vec<Complex64> = (0..gen.dim()).map(|r| sys.right[(r, k)]).collect();
    let init = HarmonicStack::from_vec(5, -2, 2, 0.0, data.clone()).unwrap();
    let t = 0.8;
    let traj = eigen_evolve(&gen, &init, &[t]).unwrap();
    let w = sys.eigenvalues[k];
    for (r, v) in traj.samples[0].as_slice().iter().enumerate() {
        assert!((v - data[r] * (w * t).exp()).norm() < 1e-8);
    }
}

#[test]
fn eigen_evolution_matches_integration() {
    let (_, _, gen, init) = toy(4);
    let sys = generator_eigensystem(&gen, &init).unwrap();
    assert!(sys.residual < 1e-6);
    assert!(sys.eigenvalues.iter().all(|w| w.re < 1e-9));
    assert!(!sys.steady_modes.is_empty());
    let times = [10.0, 200.0];
    let a = eigen_evolve(&gen, &init, &times).unwrap();
    let b = integrate_harmonics(&gen, &init, &times, 1e-10).unwrap();
    for (x, y) in a.samples.iter().zip(&b.samples) {
        let diff = x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-6, "t = {}: {diff}", x.time);
    }
}

#[test]
fn eigen_evolution_respects_its_cap() {
    let (_, _, gen, init) = toy(30);
    assert_eq!(gen.dim(), 1525);
    let (m, _) = five_state_example();
    let big = assemble_generator(build_parts(&m).unwrap(), -90, 90, m.drive.omega_c).unwrap();
    let init_big = HarmonicStack::zeros(5, -90, 90);
    assert!(matches!(eigen_evolve(&big, &init_big, &[1.0]), Err(Error::Capacity { .. })));
    let _ = init;
}

#[test]
fn mismatched_stack_is_rejected() {
    let (_, _, gen, _) = toy(3);
    let wrong = HarmonicStack::zeros(5, -2, 3);
    assert!(matches!(integrate_harmonics(&gen, &wrong, &[1.0], 1e-8), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn csv_exports() {
    let (m, run, gen, init) = toy(2);
    let traj = integrate_harmonics(&gen, &init, &[0.0, 0.1], 1e-8).unwrap();
    let mut buf = Vec::new();
    write_trajectory_csv(&mut buf, &traj, ComponentFilter { max_abs_n: Some(1), lower_triangle: true }).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some(HARMONIC_CSV_HEADER));
    assert_eq!(text.lines().count(), 1 + 2 * 3 * 15);
    let dens = integrate_full_lindblad(&m, &run.initial_density(5), &[0.0, 0.1], 1e-8).unwrap();
    let mut buf = Vec::new();
    write_density_csv(&mut buf, &dens).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 2 * 25);
}
