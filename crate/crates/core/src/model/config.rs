//! TOML configuration documents.
//!
//! ```toml
//! [states.0]            # one table per state, keyed by index
//! group = "A"
//! delta_omega = 0.0     # GHz
//! [states.1]
//! group = "B"
//! detuning_p = 0.4      # GHz, at omega_p0
//! gamma_total = 3.6     # GHz, defaults to the channel sum
//! [channels]
//! 1.0 = 3.6             # from.to = rate (GHz)
//! [drive]
//! omega_c = 1.0         # GHz
//! omega_p0 = 100000.0   # GHz
//! [drive.rabi_p]
//! 1.0 = 10.0            # i.j = Omega (GHz), number or [re, im]
//! [drive.rabi_c]
//! 1.3 = 9.0
//! [drive.dipole_scale]
//! 1.0 = 1e-5            # i.j, dimensionless
//! [dephasing.gamma_extra]
//! 1.0 = 0.0             # i.j (GHz)
//! [run]
//! n_min = -30
//! [run.initial_populations]
//! 0 = 1.0
//! ```
//!
//! Rabi matrices may instead be given as `[drive.dipoles]` (i.j, e·a₀)
//! together with `drive.probe_amplitude` / `drive.coupling_amplitude`
//! (V/m); explicit `rabi_p` / `rabi_c` tables take precedence. For any
//! matrix entry given only as (i, j), the (j, i) entry is its conjugate.

use std::collections::BTreeMap;

use faer::Mat;
use num_complex::Complex64;
use toml::{Table, Value};

use super::{
    rabi_from_dipoles, CollapseChannel, DephasingSpec, DriveConfig, Group, RunConfig, StateSpec, SystemModel, GHZ,
};
use crate::error::{Error, Result};

/// Parse a configuration document.
pub fn load_config(text: &str) -> Result<(SystemModel, RunConfig)> {
    load_config_with_overrides(text, &[])
}

/// Parse a configuration document and apply `key=value` overrides, given as
/// (dotted path, value) pairs, before interpretation.
pub fn load_config_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<(SystemModel, RunConfig)> {
    let mut table: Table = toml::from_str(text).map_err(|e| Error::schema("<document>", e.to_string()))?;
    for (key, value) in overrides {
        apply_override(&mut table, key, value)?;
    }
    interpret(&table)
}

/// Split `drive.rabi_c.1.3=9.0` into its path and value.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::InvalidArgument(format!("override `{s}` is not of the form key=value")))?;
    let k = k.trim();
    if k.is_empty() || k.split('.').any(str::is_empty) {
        return Err(Error::InvalidArgument(format!("override key `{k}` is malformed")));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

/// Set the value at a dotted path, creating intermediate tables.
///
/// The value is read as a TOML value (`9.0`, `[1.0, 2.0]`, `{}`, `"A"`);
/// anything that does not parse is taken as a bare string. Whether the key
/// is known is decided by the schema check that follows.
pub fn apply_override(table: &mut Table, key: &str, value: &str) -> Result<()> {
    let parsed = toml::from_str::<Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(value.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let (last, parents) = parts.split_last().expect("non-empty key");
    let mut cur = table;
    for (depth, p) in parents.iter().enumerate() {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => {
                return Err(Error::schema(parts[..=depth].join("."), "override descends into a non-table value"));
            }
        };
    }
    cur.insert(last.to_string(), parsed);
    Ok(())
}

fn interpret(root: &Table) -> Result<(SystemModel, RunConfig)> {
    check_keys(root, "", &["states", "channels", "drive", "dephasing", "run"])?;

    let states = parse_states(get_table(root, "states", "states")?.ok_or_else(|| Error::schema("states", "missing section"))?)?;
    let n = states.len();
    let groups: Vec<_> = states.iter().map(|s| s.group).collect();
    let group_of = |i: usize| groups[i];

    let mut channels = Vec::new();
    if let Some(t) = get_table(root, "channels", "channels")? {
        for ((from, to), v, path) in pairs(t, "channels", n)? {
            let rate = as_f64(v, &path)?;
            nonnegative(rate, &path)?;
            channels.push(CollapseChannel { from, to, rate: rate * GHZ });
        }
    }

    let mut states = states;
    for s in states.iter_mut() {
        if s.gamma_total.is_nan() {
            s.gamma_total = channels.iter().filter(|c| c.from == s.index).map(|c| c.rate).sum();
        }
    }

    let drive_t = get_table(root, "drive", "drive")?.ok_or_else(|| Error::schema("drive", "missing section"))?;
    let drive = parse_drive(drive_t, n, &group_of)?;

    let mut dephasing = DephasingSpec::default();
    if let Some(t) = get_table(root, "dephasing", "dephasing")? {
        check_keys(t, "dephasing", &["gamma_extra"])?;
        if let Some(g) = get_table(t, "gamma_extra", "dephasing.gamma_extra")? {
            for ((i, j), v, path) in pairs(g, "dephasing.gamma_extra", n)? {
                let rate = as_f64(v, &path)?;
                nonnegative(rate, &path)?;
                if !(group_of(i) == Group::B && group_of(j) == Group::A) {
                    return Err(Error::Topology(format!("{path}: dephasing must pair a B state with an A state")));
                }
                dephasing.gamma_extra.insert((i, j), rate * GHZ);
            }
        }
    }

    let model = SystemModel { states, channels, drive, dephasing };
    let run = parse_run(get_table(root, "run", "run")?, &model)?;
    Ok((model, run))
}

fn parse_states(t: &Table) -> Result<Vec<StateSpec>> {
    let mut by_index = BTreeMap::new();
    for (k, v) in t {
        let path = format!("states.{k}");
        let index: usize = k.parse().map_err(|_| Error::schema(&path, "state keys must be non-negative integers"))?;
        let st = v.as_table().ok_or_else(|| Error::schema(&path, "expected a table"))?;
        check_keys(st, &path, &["group", "delta_omega", "detuning_p", "gamma_total"])?;
        let group = match st.get("group").and_then(Value::as_str) {
            Some("A") | Some("a") => Group::A,
            Some("B") | Some("b") => Group::B,
            Some(other) => return Err(Error::schema(format!("{path}.group"), format!("unknown group `{other}`"))),
            None => return Err(Error::schema(format!("{path}.group"), "missing string value")),
        };
        let delta_omega = opt_f64(st, "delta_omega", &path)?.map(|x| x * GHZ);
        let detuning_p = opt_f64(st, "detuning_p", &path)?.map(|x| x * GHZ);
        let gamma = opt_f64(st, "gamma_total", &path)?;
        if let Some(g) = gamma {
            nonnegative(g, &format!("{path}.gamma_total"))?;
        }
        let spec = match group {
            Group::A => {
                if detuning_p.is_some() {
                    return Err(Error::schema(format!("{path}.detuning_p"), "group-A states take delta_omega, not detuning_p"));
                }
                StateSpec {
                    index,
                    group,
                    delta_omega: Some(delta_omega.unwrap_or(0.0)),
                    detuning_p: None,
                    gamma_total: gamma.unwrap_or(0.0) * GHZ,
                }
            }
            Group::B => {
                if delta_omega.is_some() {
                    return Err(Error::schema(format!("{path}.delta_omega"), "group-B states take detuning_p, not delta_omega"));
                }
                let detuning_p =
                    detuning_p.ok_or_else(|| Error::schema(format!("{path}.detuning_p"), "missing for a group-B state"))?;
                StateSpec {
                    index,
                    group,
                    delta_omega: None,
                    detuning_p: Some(detuning_p),
                    // NaN marks "derive from channels"
                    gamma_total: gamma.map(|g| g * GHZ).unwrap_or(f64::NAN),
                }
            }
        };
        by_index.insert(index, spec);
    }
    if by_index.is_empty() {
        return Err(Error::schema("states", "at least one state is required"));
    }
    for (expected, &index) in by_index.keys().enumerate() {
        if index != expected {
            return Err(Error::schema("states", format!("state indices must be 0..N without gaps; missing {expected}")));
        }
    }
    Ok(by_index.into_values().collect())
}

fn parse_drive(t: &Table, n: usize, group_of: &dyn Fn(usize) -> Group) -> Result<DriveConfig> {
    check_keys(
        t,
        "drive",
        &["omega_c", "omega_p0", "rabi_p", "rabi_c", "dipole_scale", "dipoles", "probe_amplitude", "coupling_amplitude"],
    )?;
    let omega_c = req_f64(t, "omega_c", "drive")?;
    if !(omega_c > 0.0) || !omega_c.is_finite() {
        return Err(Error::Unit { path: "drive.omega_c".into(), message: "coupling frequency must be positive".into() });
    }
    let omega_p0 = req_f64(t, "omega_p0", "drive")?;
    if !omega_p0.is_finite() || omega_p0 <= 0.0 {
        return Err(Error::Unit { path: "drive.omega_p0".into(), message: "probe frequency must be positive".into() });
    }

    let dipoles = match get_table(t, "dipoles", "drive.dipoles")? {
        Some(d) => Some(hermitian_from_pairs(d, "drive.dipoles", n, 1.0)?),
        None => None,
    };
    let amplitude = |key: &str| -> Result<Option<Complex64>> {
        t.get(key).map(|v| as_complex(v, &format!("drive.{key}"))).transpose()
    };

    let rabi_p = match get_table(t, "rabi_p", "drive.rabi_p")? {
        Some(r) => hermitian_from_pairs(r, "drive.rabi_p", n, GHZ)?,
        None => match (&dipoles, amplitude("probe_amplitude")?) {
            (Some(d), Some(e)) => masked(&rabi_from_dipoles(d, e), |i, j| group_of(i) != group_of(j)),
            _ => Mat::zeros(n, n),
        },
    };
    let rabi_c = match get_table(t, "rabi_c", "drive.rabi_c")? {
        Some(r) => hermitian_from_pairs(r, "drive.rabi_c", n, GHZ)?,
        None => match (&dipoles, amplitude("coupling_amplitude")?) {
            (Some(d), Some(e)) => masked(&rabi_from_dipoles(d, e), |i, j| group_of(i) == Group::B && group_of(j) == Group::B),
            _ => Mat::zeros(n, n),
        },
    };

    for i in 0..n {
        for j in 0..n {
            let zero = Complex64::new(0.0, 0.0);
            if rabi_p[(i, j)] != zero && group_of(i) == group_of(j) {
                return Err(Error::Topology(format!("drive.rabi_p.{i}.{j}: the probe only couples group A to group B")));
            }
            if rabi_c[(i, j)] != zero && (group_of(i) == Group::A || group_of(j) == Group::A) {
                return Err(Error::Topology(format!("drive.rabi_c.{i}.{j}: the coupling field acts within group B only")));
            }
        }
    }

    let mut dipole_scale = BTreeMap::new();
    if let Some(d) = get_table(t, "dipole_scale", "drive.dipole_scale")? {
        for ((i, j), v, path) in pairs(d, "drive.dipole_scale", n)? {
            if !(group_of(i) == Group::B && group_of(j) == Group::A) {
                return Err(Error::Topology(format!("{path}: dipole scales are keyed (i in B).(j in A)")));
            }
            dipole_scale.insert((i, j), as_f64(v, &path)?);
        }
    }

    Ok(DriveConfig { omega_c: omega_c * GHZ, omega_p0: omega_p0 * GHZ, rabi_p, rabi_c, dipole_scale })
}

fn parse_run(t: Option<&Table>, model: &SystemModel) -> Result<RunConfig> {
    let mut run = RunConfig::defaults_for(model);
    let Some(t) = t else { return Ok(run) };
    check_keys(t, "run", &["n_min", "n_max", "t_end", "ode_tol", "steady_tol", "initial_populations", "sample_stride"])?;
    if let Some(v) = t.get("n_min") {
        run.n_min = as_i32(v, "run.n_min")?;
    }
    if let Some(v) = t.get("n_max") {
        run.n_max = as_i32(v, "run.n_max")?;
    }
    for (key, slot) in [
        ("t_end", &mut run.t_end),
        ("ode_tol", &mut run.ode_tol),
        ("steady_tol", &mut run.steady_tol),
        ("sample_stride", &mut run.sample_stride),
    ] {
        if let Some(v) = t.get(key) {
            let path = format!("run.{key}");
            let x = as_f64(v, &path)?;
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::Unit { path, message: "must be positive".into() });
            }
            *slot = x;
        }
    }
    if let Some(p) = get_table(t, "initial_populations", "run.initial_populations")? {
        run.initial_populations.clear();
        for (k, v) in p {
            let path = format!("run.initial_populations.{k}");
            let i: usize = k.parse().map_err(|_| Error::schema(&path, "keys must be state indices"))?;
            if i >= model.dim() {
                return Err(Error::schema(&path, "state index out of range"));
            }
            run.initial_populations.insert(i, as_f64(v, &path)?);
        }
    }
    Ok(run)
}

/// Serialise a model back into a configuration document (GHz units).
///
/// Matrices are written entry by entry, including conjugate partners, so
/// reloading reproduces the model exactly up to rounding of the 2π factor.
pub fn to_config_string(model: &SystemModel, run: &RunConfig) -> String {
    let mut root = Table::new();

    let mut states = Table::new();
    for s in &model.states {
        let mut st = Table::new();
        match s.group {
            Group::A => {
                st.insert("group".into(), Value::String("A".into()));
                st.insert("delta_omega".into(), Value::Float(s.delta_omega.unwrap_or(0.0) / GHZ));
            }
            Group::B => {
                st.insert("group".into(), Value::String("B".into()));
                st.insert("detuning_p".into(), Value::Float(s.detuning_p.unwrap_or(0.0) / GHZ));
            }
        }
        st.insert("gamma_total".into(), Value::Float(s.gamma_total / GHZ));
        states.insert(s.index.to_string(), Value::Table(st));
    }
    root.insert("states".into(), Value::Table(states));

    let mut channels = Table::new();
    for c in &model.channels {
        insert_pair(&mut channels, c.from, c.to, Value::Float(c.rate / GHZ));
    }
    root.insert("channels".into(), Value::Table(channels));

    let d = &model.drive;
    let mut drive = Table::new();
    drive.insert("omega_c".into(), Value::Float(d.omega_c / GHZ));
    drive.insert("omega_p0".into(), Value::Float(d.omega_p0 / GHZ));
    drive.insert("rabi_p".into(), Value::Table(matrix_table(&d.rabi_p, 1.0 / GHZ)));
    drive.insert("rabi_c".into(), Value::Table(matrix_table(&d.rabi_c, 1.0 / GHZ)));
    let mut scale = Table::new();
    for (&(i, j), &g) in &d.dipole_scale {
        insert_pair(&mut scale, i, j, Value::Float(g));
    }
    drive.insert("dipole_scale".into(), Value::Table(scale));
    root.insert("drive".into(), Value::Table(drive));

    let mut gamma_extra = Table::new();
    for (&(i, j), &g) in &model.dephasing.gamma_extra {
        insert_pair(&mut gamma_extra, i, j, Value::Float(g / GHZ));
    }
    let mut dephasing = Table::new();
    dephasing.insert("gamma_extra".into(), Value::Table(gamma_extra));
    root.insert("dephasing".into(), Value::Table(dephasing));

    let mut r = Table::new();
    r.insert("n_min".into(), Value::Integer(run.n_min as i64));
    r.insert("n_max".into(), Value::Integer(run.n_max as i64));
    r.insert("t_end".into(), Value::Float(run.t_end));
    r.insert("ode_tol".into(), Value::Float(run.ode_tol));
    r.insert("steady_tol".into(), Value::Float(run.steady_tol));
    r.insert("sample_stride".into(), Value::Float(run.sample_stride));
    let mut pops = Table::new();
    for (&i, &p) in &run.initial_populations {
        pops.insert(i.to_string(), Value::Float(p));
    }
    r.insert("initial_populations".into(), Value::Table(pops));
    root.insert("run".into(), Value::Table(r));

    toml::to_string(&root).expect("tables of numbers always serialise")
}

fn matrix_table(m: &Mat<Complex64>, factor: f64) -> Table {
    let mut t = Table::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)] * factor;
            if z.re != 0.0 || z.im != 0.0 {
                let v = if z.im == 0.0 {
                    Value::Float(z.re)
                } else {
                    Value::Array(vec![Value::Float(z.re), Value::Float(z.im)])
                };
                insert_pair(&mut t, i, j, v);
            }
        }
    }
    t
}

fn insert_pair(t: &mut Table, i: usize, j: usize, v: Value) {
    let inner = t.entry(i.to_string()).or_insert_with(|| Value::Table(Table::new()));
    if let Value::Table(inner) = inner {
        inner.insert(j.to_string(), v);
    }
}

/// Flatten a `{i = {j = value}}` table (or `"i.j" = value`) into index pairs.
fn pairs<'a>(t: &'a Table, path: &str, n: usize) -> Result<Vec<((usize, usize), &'a Value, String)>> {
    let mut out = Vec::new();
    let index = |s: &str, p: &str| -> Result<usize> {
        let i: usize = s.parse().map_err(|_| Error::schema(p, "expected a state index"))?;
        if i >= n {
            return Err(Error::schema(p, format!("state index {i} out of range (N = {n})")));
        }
        Ok(i)
    };
    for (k, v) in t {
        if let Some((a, b)) = k.split_once('.') {
            let p = format!("{path}.{k}");
            out.push(((index(a, &p)?, index(b, &p)?), v, p));
            continue;
        }
        let p = format!("{path}.{k}");
        let i = index(k, &p)?;
        let inner = v.as_table().ok_or_else(|| Error::schema(&p, "expected entries keyed i.j"))?;
        for (k2, v2) in inner {
            let p2 = format!("{p}.{k2}");
            out.push(((i, index(k2, &p2)?), v2, p2));
        }
    }
    Ok(out)
}

fn hermitian_from_pairs(t: &Table, path: &str, n: usize, factor: f64) -> Result<Mat<Complex64>> {
    let mut m = Mat::<Complex64>::zeros(n, n);
    let mut explicit = vec![false; n * n];
    let entries = pairs(t, path, n)?;
    for ((i, j), v, p) in &entries {
        m[(*i, *j)] = as_complex(v, p)? * factor;
        explicit[i * n + j] = true;
    }
    for ((i, j), _, _) in &entries {
        if !explicit[j * n + i] {
            m[(*j, *i)] = m[(*i, *j)].conj();
        }
    }
    Ok(m)
}

fn masked(m: &Mat<Complex64>, keep: impl Fn(usize, usize) -> bool) -> Mat<Complex64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| if keep(i, j) { m[(i, j)] } else { Complex64::new(0.0, 0.0) })
}

fn check_keys(t: &Table, path: &str, allowed: &[&str]) -> Result<()> {
    for k in t.keys() {
        if !allowed.contains(&k.as_str()) {
            let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
            return Err(Error::schema(p, "unknown key"));
        }
    }
    Ok(())
}

fn get_table<'a>(t: &'a Table, key: &str, path: &str) -> Result<Option<&'a Table>> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::Table(inner)) => Ok(Some(inner)),
        Some(_) => Err(Error::schema(path, "expected a table")),
    }
}

fn as_f64(v: &Value, path: &str) -> Result<f64> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(Error::schema(path, "expected a number")),
    }
}

fn as_i32(v: &Value, path: &str) -> Result<i32> {
    match v {
        Value::Integer(i) => i32::try_from(*i).map_err(|_| Error::schema(path, "integer out of range")),
        _ => Err(Error::schema(path, "expected an integer")),
    }
}

fn as_complex(v: &Value, path: &str) -> Result<Complex64> {
    match v {
        Value::Array(a) if a.len() == 2 => Ok(Complex64::new(as_f64(&a[0], path)?, as_f64(&a[1], path)?)),
        Value::Array(_) => Err(Error::schema(path, "complex values are [re, im]")),
        other => Ok(Complex64::new(as_f64(other, path)?, 0.0)),
    }
}

fn opt_f64(t: &Table, key: &str, path: &str) -> Result<Option<f64>> {
    t.get(key).map(|v| as_f64(v, &format!("{path}.{key}"))).transpose()
}

fn req_f64(t: &Table, key: &str, path: &str) -> Result<f64> {
    opt_f64(t, key, path)?.ok_or_else(|| Error::schema(format!("{path}.{key}"), "missing"))
}

fn nonnegative(x: f64, path: &str) -> Result<()> {
    if x < 0.0 || !x.is_finite() {
        return Err(Error::Unit { path: path.to_string(), message: format!("rate must be finite and non-negative, got {x}") });
    }
    Ok(())
}
