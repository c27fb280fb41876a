use floquet_core::liouvillian::{assemble_generator, build_parts, FloquetGenerator};
use floquet_core::model::{five_state_example, load_config_with_overrides, FIVE_STATE_CONFIG};
use floquet_core::propagation::{integrate_full_lindblad, integrate_harmonics, reconstruct_time_domain, uniform_times, HarmonicStack};
use floquet_core::Complex64;
use proptest::prelude::*;
use std::f64::consts::TAU;

const N: i32 = 3;

fn small_generator() -> FloquetGenerator {
    let (m, _) = five_state_example();
    assemble_generator(build_parts(&m).unwrap(), -N, N, m.drive.omega_c).unwrap()
}

fn stack_from(values: &[(f64, f64)]) -> HarmonicStack {
    let data = values.iter().map(|&(re, im)| Complex64::new(re, im)).collect();
    HarmonicStack::from_vec(5, -N, N, 0.0, data).unwrap()
}

/// Random stack with Hermitian r_0 and r_{-N} = r_N†.
fn physical_stack(values: &[(f64, f64)]) -> HarmonicStack {
    let mut s = HarmonicStack::zeros(5, -N, N);
    let mut k = 0;
    for n in 0..=N {
        for i in 0..5 {
            for j in 0..5 {
                if n == 0 && j < i {
                    continue;
                }
                let (re, im) = values[k];
                k += 1;
                let v = if n == 0 && i == j { Complex64::new(re, 0.0) } else { Complex64::new(re, im) };
                s.set(i, j, n, v);
                s.set(j, i, -n, v.conj());
            }
        }
    }
    s
}

fn entries() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), (2 * N as usize + 1) * 25)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generator_is_linear(x in entries(), y in entries(), a in (-3.0f64..3.0, -3.0f64..3.0), b in (-3.0f64..3.0, -3.0f64..3.0)) {
        let gen = small_generator();
        let (a, b) = (Complex64::new(a.0, a.1), Complex64::new(b.0, b.1));
        let (sx, sy) = (stack_from(&x), stack_from(&y));
        let combo: Vec<(f64, f64)> = x.iter().zip(&y).map(|(p, q)| {
            let v = a * Complex64::new(p.0, p.1) + b * Complex64::new(q.0, q.1);
            (v.re, v.im)
        }).collect();
        let lhs = gen.apply(&stack_from(&combo)).unwrap();
        let (gx, gy) = (gen.apply(&sx).unwrap(), gen.apply(&sy).unwrap());
        let scale = lhs.max_abs().max(gx.max_abs() * a.norm()).max(gy.max_abs() * b.norm());
        for ((l, p), q) in lhs.as_slice().iter().zip(gx.as_slice()).zip(gy.as_slice()) {
            prop_assert!((l - (a * p + b * q)).norm() <= 1e-13 * scale);
        }
    }

    #[test]
    fn zeroth_harmonic_trace_is_conserved(x in entries()) {
        let gen = small_generator();
        let s = physical_stack(&x);
        let d = gen.apply(&s).unwrap();
        let tr: Complex64 = (0..5).map(|i| d.get(i, i, 0)).sum();
        prop_assert!(tr.norm() < 1e-12 * s.max_abs() * (s.as_slice().len() as f64).sqrt());
    }

    #[test]
    fn frequencies_are_stored_in_angular_units(det in -20.0f64..20.0, rate in 0.0f64..10.0, rabi in -15.0f64..15.0, wc in 0.1f64..5.0) {
        let set = [
            ("states.3.detuning_p", det),
            ("states.3.gamma_total", rate),
            ("drive.rabi_c.1.3", rabi),
            ("drive.omega_c", wc),
        ];
        let overrides: Vec<(String, String)> = set.iter().map(|(k, v)| (k.to_string(), format!("{v:e}"))).collect();
        let (m, _) = load_config_with_overrides(FIVE_STATE_CONFIG, &overrides).unwrap();
        let close = |got: f64, ghz: f64| (got - TAU * ghz).abs() <= 1e-15 * (TAU * ghz).abs().max(1e-300);
        prop_assert!(close(m.states[3].detuning_p.unwrap(), det));
        prop_assert!(close(m.states[3].gamma_total, rate));
        prop_assert!(close(m.drive.rabi_c[(1, 3)].re, rabi));
        prop_assert!(close(m.drive.omega_c, wc));
    }
}

#[test]
fn harmonic_reconstruction_tracks_full_lindblad_over_five_ns() {
    let (m, run) = five_state_example();
    let n = 80;
    let gen = assemble_generator(build_parts(&m).unwrap(), -n, n, m.drive.omega_c).unwrap();
    let init = HarmonicStack::from_density(&run.initial_density(5), -n, n).unwrap();
    let times = uniform_times(5.0, 0.25);
    let traj = integrate_harmonics(&gen, &init, &times, 1e-10).unwrap();
    let direct = integrate_full_lindblad(&m, &run.initial_density(5), &times, 1e-11).unwrap();
    let mut worst: f64 = 0.0;
    for (s, (_, rho)) in traj.samples.iter().zip(&direct) {
        let r = reconstruct_time_domain(s, s.time, m.drive.omega_c);
        for i in 0..5 {
            for j in 0..5 {
                worst = worst.max((r[(i, j)] - rho[(i, j)]).norm());
            }
        }
    }
    assert!(worst < 1e-6, "max deviation {worst}");
}
