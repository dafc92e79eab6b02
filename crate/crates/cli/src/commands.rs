use std::f64::consts::PI;
use std::fmt;

use anyhow::{Context, Result};
use phasegate_core::evolution::PropagationConfig;
use phasegate_core::gates::{
    basis_states, canonical_form, design_u1, design_u2, extract_with_basis, fidelity, leakage, report, GateDesign,
    GateKind, GateReport, Setup, IDLE_EPS, TEMPLATE_THRESHOLD,
};
use phasegate_core::grid::build_grid;
use phasegate_core::spectrum::{
    eps_grid, find_avoided_crossing, perturbative_eps, solve_2d, sweep, Crossing, LevelTrack, SolverOptions,
};
use phasegate_core::{DerivedScales, Error, ParameterSource, PulseSchedule, RunConfig, ScheduleOverrides};
use serde::Serialize;
use serde_json::json;

use crate::output::{Header, OutDir};
use crate::{Common, GateArg, ScheduleArgs, SweepArgs};

const LEVELS: usize = 6;
const ENTROPY_LEVELS: [usize; 4] = [1, 3, 4, 5];
const CROSSING_PAIRS: [(usize, usize); 3] = [(1, 2), (3, 4), (4, 5)];
const MAX_TRACE_ROWS: usize = 2000;

/// Bad flags or inputs, reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<Error>() {
        Some(
            Error::InvalidParameter { .. }
            | Error::Unachievable { .. }
            | Error::OutOfRegime { .. }
            | Error::Domain { .. }
            | Error::Configuration(_),
        ) => 2,
        Some(Error::TemplateMismatch { .. }) => 4,
        Some(Error::Io(_)) | None => 1,
        Some(_) => 3,
    }
}

/// Resolve the config file and flag overrides into one configuration.
fn run_config(common: &Common, default_ns: f64) -> Result<RunConfig> {
    let Some(path) = &common.config else {
        let mut cfg = RunConfig::level_count(common.ns.unwrap_or(default_ns), common.zeta.unwrap_or(0.01));
        cfg.j0 = common.j0;
        return Ok(cfg);
    };
    let mut cfg = RunConfig::load(path).with_context(|| format!("reading {}", path.display()))?;
    match &mut cfg.source {
        ParameterSource::LevelCount { ns, zeta } => {
            if let Some(v) = common.ns {
                *ns = v;
            }
            if let Some(v) = common.zeta {
                *zeta = v;
            }
        }
        ParameterSource::Physical { .. } => {
            if common.zeta.is_some() {
                return Err(usage("--zeta conflicts with a physical config; zeta follows from the capacitances"));
            }
            if common.ns.is_some() {
                cfg.target_ns = common.ns;
            }
        }
    }
    if common.j0.is_some() {
        cfg.j0 = common.j0;
    }
    if cfg.j0.is_some() && cfg.target_ns.is_some() && matches!(cfg.source, ParameterSource::Physical { .. }) {
        return Err(usage("give either j0 or ns for a physical device, not both"));
    }
    Ok(cfg)
}

fn scales_for(cfg: &RunConfig, common: &Common) -> Result<DerivedScales> {
    let scales = cfg.scales()?;
    match (scales.plasma_energy, common.plasma_ghz) {
        (None, Some(ghz)) => Ok(scales.with_plasma_frequency(ghz * 1e9)?),
        _ => Ok(scales),
    }
}

fn params_echo(cfg: &RunConfig, scales: &DerivedScales, common: &Common) -> serde_json::Value {
    json!({
        "config": cfg,
        "scales": scales,
        "plasma_frequency_ghz": scales.plasma_frequency().map(|f| f * 1e-9),
        "grid_points": common.grid,
    })
}

fn eps_list(sweep: &SweepArgs) -> Result<Vec<f64>> {
    let mut list = match &sweep.eps {
        Some(v) => v.clone(),
        None => eps_grid(sweep.eps_start, sweep.eps_stop, sweep.eps_step),
    };
    if list.is_empty() {
        return Err(usage("the detuning sweep is empty"));
    }
    if list.iter().any(|e| !e.is_finite()) {
        return Err(usage("detunings must be finite"));
    }
    list.sort_by(f64::total_cmp);
    list.dedup();
    Ok(list)
}

fn range(list: &[f64]) -> (f64, f64) {
    (list[0], list[list.len() - 1])
}

#[derive(Serialize)]
struct CrossingRecord {
    levels: (usize, usize),
    eps_star: f64,
    gap: f64,
    refined: bool,
}

/// Interior sampled minima of each gap, refined by golden section.
fn crossings(track: &LevelTrack, scales: &DerivedScales, common: &Common) -> Result<Vec<CrossingRecord>> {
    let eps = track.eps_values();
    let mut out = Vec::new();
    for (a, b) in CROSSING_PAIRS {
        let gaps: Vec<f64> = track.slices.iter().map(|s| s.gap(a, b)).collect();
        for i in 1..gaps.len().saturating_sub(1) {
            if !(gaps[i] < gaps[i - 1] && gaps[i] <= gaps[i + 1]) {
                continue;
            }
            let grid = build_grid(scales, (eps[i - 1], eps[i + 1]), common.grid)?;
            let record = match find_avoided_crossing((a, b), (eps[i - 1], eps[i + 1]), scales, &grid, &SolverOptions::default()) {
                Ok(Crossing { eps_star, gap, .. }) => CrossingRecord { levels: (a, b), eps_star, gap, refined: true },
                Err(Error::NoInteriorMinimum { .. }) => CrossingRecord {
                    levels: (a, b),
                    eps_star: eps[i],
                    gap: gaps[i],
                    refined: false,
                },
                Err(e) => return Err(e.into()),
            };
            out.push(record);
        }
    }
    Ok(out)
}

/// Largest level shift when three sweep points are re-solved on a doubled grid.
fn grid_doubling(list: &[f64], scales: &DerivedScales, common: &Common) -> Result<serde_json::Value> {
    let picks = [list[0], list[list.len() / 2], list[list.len() - 1]];
    let coarse = build_grid(scales, range(list), common.grid)?;
    let fine = build_grid(scales, range(list), 2 * common.grid)?;
    let opts = SolverOptions::default();
    let mut worst = 0.0f64;
    for e in picks {
        let a = solve_2d(e, scales, &coarse, LEVELS, &opts)?;
        let b = solve_2d(e, scales, &fine, LEVELS, &opts)?;
        for (x, y) in a.energies.iter().zip(&b.energies) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(json!({ "grid_points": 2 * common.grid, "eps": picks, "max_abs_energy_change": worst }))
}

pub fn spectrum(common: &Common, sweep_args: &SweepArgs) -> Result<()> {
    let list = eps_list(sweep_args)?;
    let cfg = run_config(common, 4.0)?;
    let scales = scales_for(&cfg, common)?;
    let header = Header::new("spectrum", params_echo(&cfg, &scales, common));
    let grid = build_grid(&scales, range(&list), common.grid)?;
    let track = sweep(&list, &scales, &grid, LEVELS, &SolverOptions::default())?;
    let out = OutDir::create(&common.out)?;
    let rows: Vec<Vec<f64>> = track
        .slices
        .iter()
        .map(|s| std::iter::once(s.eps).chain(s.energies.iter().copied()).collect())
        .collect();
    let path = out.csv("spectrum.csv", &header, &["eps", "E0", "E1", "E2", "E3", "E4", "E5"], &rows)?;
    let found = crossings(&track, &scales, common)?;
    let (minus, plus) = perturbative_eps(scales.ns);
    let mut body = json!({
        "crossings": found,
        "perturbative_eps": [minus, plus],
    });
    if common.check_convergence {
        body["convergence"] = grid_doubling(&list, &scales, common)?;
    }
    let cpath = out.json("crossings.json", &header, &body)?;
    println!("{}\n{}", path.display(), cpath.display());
    Ok(())
}

pub fn entangle(common: &Common, sweep_args: &SweepArgs) -> Result<()> {
    let list = eps_list(sweep_args)?;
    let cfg = run_config(common, 4.0)?;
    let scales = scales_for(&cfg, common)?;
    let header = Header::new("entangle", params_echo(&cfg, &scales, common));
    let grid = build_grid(&scales, range(&list), common.grid)?;
    let track = sweep(&list, &scales, &grid, LEVELS, &SolverOptions::default())?;
    let mut slices = track.slices.clone();
    // The 4-5 crossing rarely falls on a sweep point; add it.
    for c in crossings(&track, &scales, common)? {
        if c.levels == (4, 5) && c.refined && !slices.iter().any(|s| s.eps == c.eps_star) {
            slices.push(solve_2d(c.eps_star, &scales, &grid, LEVELS, &SolverOptions::default())?);
        }
    }
    slices.sort_by(|a, b| a.eps.total_cmp(&b.eps));
    let mut rows = Vec::with_capacity(slices.len());
    for s in &slices {
        let mut row = vec![s.eps];
        for n in ENTROPY_LEVELS {
            row.push(s.entropy(n)?);
        }
        rows.push(row);
    }
    let out = OutDir::create(&common.out)?;
    let path = out.csv("entanglement.csv", &header, &["eps", "S1", "S3", "S4", "S5"], &rows)?;
    println!("{}", path.display());
    Ok(())
}

fn default_ns(kind: GateArg) -> f64 {
    match kind {
        GateArg::U1 => 4.0,
        GateArg::U2 => 5.16,
    }
}

fn overrides(args: &ScheduleArgs, cfg: &RunConfig) -> ScheduleOverrides {
    cfg.schedule.merged(ScheduleOverrides {
        eps_a: args.eps_a,
        eps_b: args.eps_b,
        tau_r: args.tau_r,
        tau_i: args.tau_i,
        ramp_shape: args.ramp.map(Into::into),
    })
}

fn apply(schedule: PulseSchedule, o: &ScheduleOverrides) -> Result<PulseSchedule> {
    let mut s = schedule;
    s.eps_a = o.eps_a.unwrap_or(s.eps_a);
    s.eps_b = o.eps_b.unwrap_or(s.eps_b);
    s.ramp_time = o.tau_r.unwrap_or(s.ramp_time);
    s.interaction_time = o.tau_i.unwrap_or(s.interaction_time);
    s.ramp_shape = o.ramp_shape.unwrap_or(s.ramp_shape);
    s.validate()?;
    Ok(s)
}

/// Grid wide enough for the idle point, the symmetric point and the schedule.
fn setup_for(scales: &DerivedScales, schedule: Option<&PulseSchedule>, points: usize) -> Result<Setup> {
    let (mut lo, mut hi) = (IDLE_EPS, 0.0f64);
    if let Some(s) = schedule {
        let (a, b) = s.eps_range();
        lo = lo.min(a);
        hi = hi.max(b);
    }
    let setup = Setup::new(*scales, points)?;
    Ok(setup.with_grid(build_grid(scales, (lo, hi), points)?))
}

fn gate_kind(kind: GateArg) -> GateKind {
    match kind {
        GateArg::U1 => GateKind::ControlledPhase,
        GateArg::U2 => GateKind::Swaplike,
    }
}

fn run_design(kind: GateArg, setup: &Setup, k: u32) -> Result<GateDesign> {
    Ok(match kind {
        GateArg::U1 => design_u1(setup)?,
        GateArg::U2 => design_u2(setup, k)?,
    })
}

/// Times in `1/w0` and, when the energy unit is known, in nanoseconds.
fn durations(schedule: &PulseSchedule, scales: &DerivedScales) -> serde_json::Value {
    let ns = |t: f64| scales.plasma_angular_frequency().map(|w| t / w * 1e9);
    json!({
        "tau_r": schedule.ramp_time,
        "tau_i": schedule.interaction_time,
        "gate": schedule.gate_duration(),
        "tau_r_ns": ns(schedule.ramp_time),
        "tau_i_ns": ns(schedule.interaction_time),
        "gate_ns": ns(schedule.gate_duration()),
    })
}

pub fn design(kind: GateArg, common: &Common, args: &ScheduleArgs) -> Result<()> {
    let cfg = run_config(common, default_ns(kind))?;
    let scales = scales_for(&cfg, common)?;
    let header = Header::new("design", params_echo(&cfg, &scales, common));
    let setup = setup_for(&scales, None, common.grid)?;
    let designed = run_design(kind, &setup, args.k)?;
    let schedule = apply(designed.schedule, &overrides(args, &cfg))?;
    let body = json!({
        "design": designed,
        "schedule": schedule,
        "durations": durations(&schedule, &scales),
        "k": matches!(kind, GateArg::U2).then_some(args.k),
    });
    let out = OutDir::create(&common.out)?;
    let path = out.json("schedule.json", &header, &body)?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct GateOutput<'a> {
    report: &'a GateReport,
    phi_over_pi: Option<f64>,
    theta1_over_pi: Option<f64>,
    theta2_over_pi: Option<f64>,
    rms_residual: f64,
    template_threshold: f64,
    propagation_dt: f64,
    steps: usize,
    durations: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    convergence: Option<serde_json::Value>,
}

pub fn gate(kind: GateArg, common: &Common, args: &ScheduleArgs, dt: f64) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(usage(format!("--dt must be positive, got {dt}")));
    }
    let cfg = run_config(common, default_ns(kind))?;
    let scales = scales_for(&cfg, common)?;
    let o = overrides(args, &cfg);
    let base = setup_for(&scales, None, common.grid)?;
    let schedule = if o.eps_b.is_some() && o.tau_i.is_some() {
        let a = o.eps_a.unwrap_or(IDLE_EPS);
        let b = o.eps_b.unwrap_or_default();
        apply(PulseSchedule::new(a, b, phasegate_core::gates::DEFAULT_RAMP, 0.0)?, &o)?
    } else {
        apply(run_design(kind, &base, args.k)?.schedule, &o)?
    };
    let setup = setup_for(&scales, Some(&schedule), common.grid)?;
    let mut echo = params_echo(&cfg, &scales, common);
    echo["schedule"] = json!(schedule);
    echo["dt"] = json!(dt);
    let header = Header::new("gate", echo);
    let out = OutDir::create(&common.out)?;

    let basis = basis_states(&setup, schedule.eps_a)?;
    let prop = PropagationConfig::default().with_dt(dt);
    let ex = extract_with_basis(&schedule, &setup, &prop, &basis)?;
    let gk = gate_kind(kind);
    let rep = report(&ex.matrix, gk, &schedule, &scales);
    let canon = canonical_form(&ex.matrix, gk);

    let convergence = if common.check_convergence {
        let half = extract_with_basis(&schedule, &setup, &prop.with_dt(0.5 * dt), &basis)?;
        let c = canonical_form(&half.matrix, gk);
        let f = fidelity(&c.matrix, &c.target());
        Some(json!({
            "dt": 0.5 * dt,
            "fidelity": f,
            "leakage": leakage(&half.matrix),
            "fidelity_change": (f - rep.fidelity).abs(),
        }))
    } else {
        None
    };

    let traj = &ex.trajectories;
    let body = GateOutput {
        report: &rep,
        phi_over_pi: rep.phi.map(|x| x / PI),
        theta1_over_pi: rep.theta1.map(|x| x / PI),
        theta2_over_pi: rep.theta2.map(|x| x / PI),
        rms_residual: canon.rms_residual(),
        template_threshold: TEMPLATE_THRESHOLD,
        propagation_dt: traj[0].dt,
        steps: traj[0].steps,
        durations: durations(&schedule, &scales),
        convergence,
    };

    let mut rows = Vec::new();
    for r in 0..4 {
        let mut row = vec![r as f64];
        for c in 0..4 {
            row.push(ex.matrix[(r, c)].re);
            row.push(ex.matrix[(r, c)].im);
        }
        rows.push(row);
    }
    let mut cols = vec!["row".to_string()];
    for c in 0..4 {
        cols.push(format!("re{c}"));
        cols.push(format!("im{c}"));
    }
    let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
    out.csv("matrix.csv", &header, &cols, &rows)?;

    let stride = traj[0].times.len().div_ceil(MAX_TRACE_ROWS).max(1);
    let mut trace = Vec::new();
    for i in (0..traj[0].times.len()).step_by(stride) {
        let t = traj[0].times[i];
        let mut row = vec![t, schedule.epsilon_at(t.min(schedule.total_duration()))?];
        for run in traj {
            for m in 0..4 {
                row.push(run.amplitudes[m][i].norm_sqr());
            }
        }
        trace.push(row);
    }
    let mut tcols = vec!["t".to_string(), "eps".to_string()];
    for n in 0..4 {
        for m in 0..4 {
            tcols.push(format!("p{m}_from{n}"));
        }
    }
    let tcols: Vec<&str> = tcols.iter().map(String::as_str).collect();
    out.csv("trajectory.csv", &header, &tcols, &trace)?;

    if canon.rms_residual() > TEMPLATE_THRESHOLD {
        out.json("diagnostic.json", &header, &body)?;
        return Err(Error::TemplateMismatch {
            residual: canon.rms_residual(),
            threshold: TEMPLATE_THRESHOLD,
        }
        .into());
    }
    let path = out.json("report.json", &header, &body)?;
    println!("{}", path.display());
    println!(
        "F = {:.4}  L = {:.4}{}",
        rep.fidelity,
        rep.leakage,
        match gk {
            GateKind::ControlledPhase => format!("  phi/pi = {:.4}", rep.phi.unwrap_or(f64::NAN) / PI),
            GateKind::Swaplike => format!(
                "  theta1/pi = {:.4}  theta2/pi = {:.4}",
                rep.theta1.unwrap_or(f64::NAN) / PI,
                rep.theta2.unwrap_or(f64::NAN) / PI
            ),
        }
    );
    Ok(())
}
