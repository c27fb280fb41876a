use serde::Serialize;

use super::{Group, RunConfig, SystemModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    Indexing,
    Group,
    Unit,
    RateConsistency,
    Topology,
    Population,
    Truncation,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub subject: String,
    pub message: String,
}

/// Every violated invariant; empty iff the model is admissible.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    pub fn merge(mut self, other: ValidationReport) -> Self {
        self.violations.extend(other.violations);
        self
    }

    fn push(&mut self, kind: ViolationKind, subject: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation { kind, subject: subject.into(), message: message.into() });
    }
}

const RATE_REL_TOL: f64 = 1e-12;

pub fn validate_model(model: &SystemModel) -> ValidationReport {
    let mut r = ValidationReport::default();
    let n = model.dim();

    for (pos, s) in model.states.iter().enumerate() {
        let subject = format!("states.{}", s.index);
        if s.index != pos {
            r.push(ViolationKind::Indexing, &subject, format!("state at position {pos} carries index {}", s.index));
        }
        if !(s.gamma_total >= 0.0) || !s.gamma_total.is_finite() {
            r.push(ViolationKind::Unit, &subject, "gamma_total must be finite and non-negative");
        }
        match s.group {
            Group::A => {
                if s.detuning_p.is_some() || s.delta_omega.is_none() {
                    r.push(ViolationKind::Group, &subject, "group-A states carry delta_omega only");
                }
                if s.gamma_total != 0.0 {
                    r.push(ViolationKind::Group, &subject, "group-A states do not decay");
                }
            }
            Group::B => {
                if s.delta_omega.is_some() || s.detuning_p.is_none() {
                    r.push(ViolationKind::Group, &subject, "group-B states carry detuning_p only");
                }
            }
        }
    }
    if model.group_a().is_empty() {
        r.push(ViolationKind::Group, "states", "no group-A state");
    }
    if model.group_b().is_empty() {
        r.push(ViolationKind::Group, "states", "no group-B state");
    }

    for c in &model.channels {
        let subject = format!("channels.{}.{}", c.from, c.to);
        if c.from >= n || c.to >= n {
            r.push(ViolationKind::Indexing, &subject, "state index out of range");
            continue;
        }
        if c.from == c.to {
            r.push(ViolationKind::Topology, &subject, "a channel must connect two distinct states");
        }
        if !(c.rate >= 0.0) || !c.rate.is_finite() {
            r.push(ViolationKind::Unit, &subject, "rate must be finite and non-negative");
        }
        if model.states[c.from].group == Group::A && c.rate != 0.0 {
            r.push(ViolationKind::Topology, &subject, "relaxation out of group A is not modelled");
        }
    }
    for s in &model.states {
        let sum: f64 = model.channels.iter().filter(|c| c.from == s.index).map(|c| c.rate).sum();
        let scale = sum.abs().max(s.gamma_total.abs());
        if (sum - s.gamma_total).abs() > RATE_REL_TOL * scale {
            r.push(
                ViolationKind::RateConsistency,
                format!("states.{}", s.index),
                format!("gamma_total = {} but outgoing channels sum to {}", s.gamma_total, sum),
            );
        }
    }

    let d = &model.drive;
    if !(d.omega_c > 0.0) || !d.omega_c.is_finite() {
        r.push(ViolationKind::Unit, "drive.omega_c", "coupling frequency must be positive");
    }
    if d.rabi_p.nrows() != n || d.rabi_p.ncols() != n || d.rabi_c.nrows() != n || d.rabi_c.ncols() != n {
        r.push(ViolationKind::Indexing, "drive", "Rabi matrices must be N×N");
    } else {
        for i in 0..n {
            for j in 0..n {
                let gi = model.states[i].group;
                let gj = model.states[j].group;
                if d.rabi_p[(i, j)].norm() != 0.0 && gi == gj {
                    r.push(ViolationKind::Topology, format!("drive.rabi_p.{i}.{j}"), "probe couples A to B only");
                }
                if d.rabi_c[(i, j)].norm() != 0.0 && (gi == Group::A || gj == Group::A) {
                    r.push(ViolationKind::Topology, format!("drive.rabi_c.{i}.{j}"), "coupling acts within group B only");
                }
            }
        }
    }
    for &(i, j) in d.dipole_scale.keys() {
        if i >= n || j >= n || model.states[i].group != Group::B || model.states[j].group != Group::A {
            r.push(ViolationKind::Topology, format!("drive.dipole_scale.{i}.{j}"), "keys are (i in B, j in A)");
        }
    }
    for (&(i, j), &g) in &model.dephasing.gamma_extra {
        let subject = format!("dephasing.gamma_extra.{i}.{j}");
        if i >= n || j >= n || model.states[i].group != Group::B || model.states[j].group != Group::A {
            r.push(ViolationKind::Topology, &subject, "keys are (i in B, j in A)");
        }
        if !(g >= 0.0) || !g.is_finite() {
            r.push(ViolationKind::Unit, &subject, "rate must be finite and non-negative");
        }
    }
    r
}

pub fn validate_run(run: &RunConfig, model: &SystemModel) -> ValidationReport {
    let mut r = ValidationReport::default();
    if !(run.n_min <= 0 && 0 <= run.n_max) {
        r.push(ViolationKind::Truncation, "run", format!("need n_min <= 0 <= n_max, got [{}, {}]", run.n_min, run.n_max));
    }
    for (name, x) in [("t_end", run.t_end), ("ode_tol", run.ode_tol), ("steady_tol", run.steady_tol), ("sample_stride", run.sample_stride)] {
        if !(x > 0.0) || !x.is_finite() {
            r.push(ViolationKind::Unit, format!("run.{name}"), "must be positive");
        }
    }
    let mut total = 0.0;
    for (&i, &p) in &run.initial_populations {
        let subject = format!("run.initial_populations.{i}");
        if i >= model.dim() || model.states[i].group != Group::A {
            r.push(ViolationKind::Population, &subject, "only group-A states may be initially populated");
        }
        if !(0.0..=1.0).contains(&p) {
            r.push(ViolationKind::Population, &subject, "population must lie in [0, 1]");
        }
        total += p;
    }
    if (total - 1.0).abs() > 1e-12 {
        r.push(ViolationKind::Population, "run.initial_populations", format!("populations sum to {total}, not 1"));
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::five_state_example;
    use num_complex::Complex64;

    #[test]
    fn five_state_model_is_admissible() {
        let (m, run) = five_state_example();
        assert_eq!(validate_model(&m), ValidationReport::default());
        assert!(validate_run(&run, &m).is_empty());
    }

    #[test]
    fn inconsistent_total_rate_is_flagged() {
        let (mut m, _) = five_state_example();
        m.states[1].gamma_total *= 1.01;
        let r = validate_model(&m);
        assert!(r.has(ViolationKind::RateConsistency));
        assert_eq!(r.violations.len(), 1);
    }

    #[test]
    fn coupling_an_a_state_is_flagged() {
        let (mut m, _) = five_state_example();
        m.drive.rabi_c[(0, 3)] = Complex64::new(1.0, 0.0);
        assert!(validate_model(&m).has(ViolationKind::Topology));
    }

    #[test]
    fn bad_run_parameters_are_flagged() {
        let (m, mut run) = five_state_example();
        run.n_min = 2;
        run.initial_populations.insert(3, 0.5);
        let r = validate_run(&run, &m);
        assert!(r.has(ViolationKind::Truncation));
        assert!(r.has(ViolationKind::Population));
    }
}
