//! The `fermi` command line: one subcommand per experiment, a shared JSON
//! config, CSV tables and a JSON summary per run.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::billiard::{Billiard, Checkpoint, TraceWriter};
use crate::charts::Charts;
use crate::config::{RunConfig, Setup};
use crate::curves::{complexity_scan, growth_statistics, ComplexityConfig, GrowthConfig, GrowthConstants, Stepper};
use crate::error::{Error, Result};
use crate::fit::loglog;
use crate::hyperbolic::{
    complexity_delta0, dg_matrices, eigen, expansion_rates, verify_cone_invariance, InvarianceConfig,
};
use crate::io::{write_atomic, Csv};
use crate::maps::{calibrate_vstar, validate_normal_forms, MapId};
use crate::model::{drift_rate, Side};
use crate::stats::{
    bernoulli_walk, drift_estimate, escape_curve, increment_summary, itinerary_stats, iota, max_log_increment,
    moment_check, never_below, run_ensemble, AccelConstants, Dynamics, InitMode, NhatMode, OrbitRecord,
};

#[derive(Debug, Parser)]
#[command(name = "fermi", version, about = "Switching-billiard Fermi accelerator experiments")]
pub struct Cli {
    /// JSON run configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (falls back to FERMI_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Leave the timestamp out of output headers.
    #[arg(long, global = true)]
    pub no_timestamp: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Event-by-event trace of the exact billiard.
    Simulate,
    /// Normal forms against the exact dynamics, with log-log slopes.
    ValidateNormalForms,
    /// Common unstable cone, expansion rates and an invariance check.
    ConeReport,
    /// Curve complexity and growth-lemma tail statistics.
    CurveGrowth,
    /// Orbit ensemble with per-orbit series.
    Ensemble,
    /// Mean log-energy gain per revolution and the Bernoulli reference walk.
    Drift,
    /// Route-sign patterns against the product law.
    Itinerary,
    /// Exponential moment of the delayed log-energy gain.
    Moment,
    /// Escape fractions and their fit, plus the exact-dynamics check.
    Escape,
    /// Smallest energy with normal-form error below tolerance.
    CalibrateVstar,
    /// Phase tables of the adiabatic charts.
    DumpCharts,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::ValidateNormalForms => "validate-normal-forms",
            Command::ConeReport => "cone-report",
            Command::CurveGrowth => "curve-growth",
            Command::Ensemble => "ensemble",
            Command::Drift => "drift",
            Command::Itinerary => "itinerary",
            Command::Moment => "moment",
            Command::Escape => "escape",
            Command::CalibrateVstar => "calibrate-vstar",
            Command::DumpCharts => "dump-charts",
        }
    }
}

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Exit code for an error: configuration problems give 2, the rest 3.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Profile(_) | Error::Bounds { .. } | Error::Domain(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

/// Files of one run, kept in memory until the run has succeeded.
pub struct Outputs {
    header: Vec<String>,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new(cmd: Command, cfg: &RunConfig, timestamp: bool) -> Outputs {
        let mut header = vec![
            format!("fermi {} {}", cmd.name(), env!("CARGO_PKG_VERSION")),
            format!("config: {}", cfg.to_json()),
            format!("rng: {}", crate::RNG_NAME),
        ];
        if timestamp {
            let secs = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            header.push(format!("timestamp: {secs}"));
        }
        Outputs { header, files: Vec::new() }
    }

    fn header_text(&self) -> String {
        self.header.join("\n")
    }

    fn csv(&mut self, name: &str, mut table: Csv) {
        table.comment(&self.header_text());
        self.files.push((name.to_string(), table.render().into_bytes()));
    }

    fn summary<T: Serialize>(&mut self, cmd: Command, cfg: &RunConfig, result: &T) {
        let mut doc = json!({
            "command": cmd.name(),
            "config": cfg,
            "rng": crate::RNG_NAME,
            "result": result,
        });
        if let Some(ts) = self.header.iter().find_map(|h| h.strip_prefix("timestamp: ")) {
            doc["timestamp"] = Value::from(ts.parse::<u64>().unwrap_or(0));
        }
        let mut text = serde_json::to_string_pretty(&doc).expect("summary serialises");
        text.push('\n');
        self.files.push((format!("{}.json", cmd.name()), text.into_bytes()));
    }

    fn raw(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn names(&self) -> Vec<&str> {
        self.files.iter().map(|f| f.0.as_str()).collect()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        for (name, bytes) in &self.files {
            write_atomic(&dir.join(name), bytes)?;
        }
        Ok(())
    }
}

pub fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn init_threads(cli: &Cli) -> Result<()> {
    let n = match cli.threads {
        Some(n) => Some(n),
        None => match std::env::var("FERMI_THREADS") {
            Ok(s) => Some(s.trim().parse().map_err(|_| Error::Config(format!("FERMI_THREADS = {s:?} is not a count")))?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Runs `cli` and returns the exit code.
pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("fermi {}: {e}", cli.command.name());
            exit_code(&e)
        }
    }
}

/// Runs the subcommand and writes its outputs; nothing is written on error.
pub fn execute(cli: &Cli) -> Result<Outputs> {
    let cfg = load_config(cli)?;
    init_threads(cli)?;
    let setup = cfg.setup()?;
    let mut out = Outputs::new(cli.command, &cfg, !cli.no_timestamp);
    let summary = match cli.command {
        Command::Simulate => simulate(&cfg, &setup, &mut out)?,
        Command::ValidateNormalForms => validate(&cfg, &setup, &mut out)?,
        Command::ConeReport => cone_report(&cfg, &setup, &mut out)?,
        Command::CurveGrowth => curve_growth(&cfg, &setup, &mut out)?,
        Command::Ensemble => ensemble(&cfg, &setup, &mut out)?,
        Command::Drift => drift(&cfg, &setup, &mut out)?,
        Command::Itinerary => itinerary(&cfg, &setup, &mut out)?,
        Command::Moment => moment(&cfg, &setup, &mut out)?,
        Command::Escape => escape(&cfg, &setup, &mut out)?,
        Command::CalibrateVstar => calibrate(&cfg, &setup, &mut out)?,
        Command::DumpCharts => dump_charts(&cfg, &setup, &mut out)?,
    };
    out.summary(cli.command, &cfg, &summary);
    out.write(&cli.out)?;
    Ok(out)
}

fn pattern_name(p: &[i8]) -> String {
    p.iter().map(|&x| if x > 0 { '+' } else { '-' }).collect()
}

fn simulate(cfg: &RunConfig, setup: &Setup, out: &mut Outputs) -> Result<Value> {
    let sec = &cfg.simulate;
    let b = Billiard::new(&setup.params);
    let mut s = b.on_floor(sec.t0, sec.v)?;
    let mut w = TraceWriter::new(Vec::new(), &out.header_text())?;
    let mut min_gap = f64::INFINITY;
    let mut last_t = s.t;
    for _ in 0..sec.events {
        let (ev, next) = b.next_collision(&s)?;
        w.row(&ev)?;
        min_gap = min_gap.min(ev.t - last_t);
        last_t = ev.t;
        s = next;
    }
    out.raw("trace.csv", w.into_inner());
    let mut bytes = Vec::new();
    Checkpoint { state: s, events: sec.events as u64 }.write(&mut bytes)?;
    out.raw("checkpoint.bin", bytes);
    Ok(json!({
        "events": sec.events,
        "t_end": s.t,
        "v_end": s.v,
        "chamber_end": s.chamber.name(),
        "min_gap": min_gap,
    }))
}

fn validate(cfg: &RunConfig, setup: &Setup, out: &mut Outputs) -> Result<Value> {
    let sec = &cfg.validate;
    let charts = Charts::new(&setup.params);
    let rows = validate_normal_forms(&setup.nf(), &charts, &sec.levels, sec.samples, cfg.seed);
    let mut slopes = Vec::new();
    let mut table = Csv::new(&["H", "map_id", "err_first", "err_second", "err_second_displayed", "mismatches", "slope"]);
    for id in MapId::ALL {
        let r: Vec<_> = rows.iter().filter(|r| r.map == id).collect();
        let errs: Vec<f64> = r.iter().map(|r| r.err()).collect();
        let shown: Vec<f64> = r.iter().map(|r| r.err_first.max(r.err_second_displayed)).collect();
        let slope = loglog(&sec.levels, &errs).slope;
        for row in &r {
            table.row(vec![
                row.level.into(),
                id.name().into(),
                row.err_first.into(),
                row.err_second.into(),
                row.err_second_displayed.into(),
                row.mismatches.into(),
                slope.into(),
            ]);
        }
        slopes.push(json!({
            "map": id.name(),
            "slope": slope,
            "displayed_slope": loglog(&sec.levels, &shown).slope,
            "mismatches": r.iter().map(|r| r.mismatches).sum::<usize>(),
        }));
    }
    out.csv("normal_forms.csv", table);
    Ok(json!({ "levels": sec.levels, "samples": sec.samples, "maps": slopes }))
}

fn calibrate(cfg: &RunConfig, setup: &Setup, out: &mut Outputs) -> Result<Value> {
    let sec = &cfg.calibrate;
    let charts = Charts::new(&setup.params);
    let cal = calibrate_vstar(&setup.nf(), &charts, &sec.levels, sec.samples, sec.tol, cfg.seed);
    let mut table = Csv::new(&["H", "relative_err", "mismatches"]);
    for l in &cal.levels {
        table.row(vec![l.level.into(), l.relative_err.into(), l.mismatches.into()]);
    }
    out.csv("vstar.csv", table);
    Ok(serde_json::to_value(&cal).expect("serialises"))
}

fn cone_report(cfg: &RunConfig, setup: &Setup, out: &mut Outputs) -> Result<Value> {
    let (params, consts) = (&setup.params, &setup.consts);
    let mats = dg_matrices(params, consts);
    let mut table = Csv::new(&["part", "a", "b", "c", "d", "det", "trace", "lambda_u"]);
    for (part, m) in &mats {
        let lu = eigen(m).map_or(f64::NAN, |e| e.lambda_u);
        table.row(vec![
            part.name().into(),
            m.a.into(),
            m.b.into(),
            m.c.into(),
            m.d.into(),
            m.det().into(),
            m.trace().into(),
            lu.into(),
        ]);
    }
    out.csv("dg_matrices.csv", table);
    let cone = setup.cone.ok_or_else(|| {
        Error::ConeConstructionFailed(format!("no common cone for this profile (|fdot2| = {})", params.fdot2.abs()))
    })?;
    let rates = expansion_rates(&cone, params, consts);
    let v = cfg.thresholds.v_star;
    let (h_min, h_max) = cfg.cone.h_range.unwrap_or((v, 10.0 * v));
    let inv = InvarianceConfig { samples: cfg.cone.samples, h_min, h_max, seed: cfg.seed };
    let report = verify_cone_invariance(&cone, &setup.nf(), &inv, cfg.cone.full_p);
    let mut table = Csv::new(&["map_id", "lambda", "big_lambda", "min_stretch_sampled"]);
    for r in &rates.per_map {
        let sampled = report.per_map_min.iter().find(|m| m.0 == r.map).map_or(f64::NAN, |m| m.1);
        table.row(vec![r.map.name().into(), r.lambda.into(), r.big_lambda.into(), sampled.into()]);
    }
    out.csv("cone_rates.csv", table);
    Ok(json!({
        "cone": cone,
        "rates": rates,
        "invariance": { "config": inv, "full_p": cfg.cone.full_p, "report": report },
    }))
}

fn curve_growth(cfg: &RunConfig, setup: &Setup, out: &mut Outputs) -> Result<Value> {
    let g = &cfg.growth;
    let v = cfg.thresholds.v_star;
    let h_range = g.h_range.unwrap_or((10.0 * v, 40.0 * v));
    let st = Stepper::new(setup.nf(), Some(setup.modcfg));
    let ccfg = setup.curve_config();
    let mut complexity = Value::Null;
    let mut delta0 = f64::NAN;
    if let Some(cone) = &setup.cone {
        let rates = expansion_rates(cone, &setup.params, &setup.consts);
        delta0 = complexity_delta0(cone, &setup.params, &rates);
        let run = ComplexityConfig { delta0, trials: g.complexity_trials, h_range, seed: cfg.seed };
        let rep = complexity_scan(&st, &ccfg, &run)?;
        let mut table = Csv::new(&["pieces", "count"]);
        for (i, c) in rep.histogram.iter().enumerate() {
            table.row(vec![(i + 1).into(), (*c).into()]);
        }
        out.csv("complexity.csv", table);
        complexity = serde_json::to_value(&rep).expect("serialises");
    }
    let theta1 = cfg.theta1(setup);
    let run = GrowthConfig {
        curves: g.curves,
        points: g.points,
        trajectories: g.trajectories,
        horizon: g.horizon,
        n0: g.n0,
        theta1,
        epochs: g.epochs.clone(),
        h_range,
        seed: cfg.seed,
        floor: g.floor,
    };
    let rep = growth_statistics(&st, &ccfg, &run)?;
    let mut table = Csv::new(&["kind", "N", "mass", "fitted"]);
    for (n, &m) in rep.nbar_pmf[..g.horizon].iter().enumerate() {
        let n = n + 1;
        let fit = rep.nbar_fit.b * rep.nbar_fit.theta.powi(n as i32);
        table.row(vec!["nbar".into(), n.into(), m.into(), fit.into()]);
    }
    for (i, &m) in rep.nhat_pmf[..g.horizon].iter().enumerate() {
        let n = g.n0 + 1 + i;
        let fit = rep.nhat_fit.b * rep.nhat_fit.theta.powi(i as i32 + 1);
        table.row(vec!["nhat".into(), n.into(), m.into(), fit.into()]);
    }
    out.csv("growth_tails.csv", table);
    let mut table = Csv::new(&["epochs", "mean_rate", "q99_rate"]);
    for e in &rep.epochs {
        table.row(vec![e.n.into(), e.mean.into(), e.q99.into()]);
    }
    out.csv("growth_epochs.csv", table);
    let constants = GrowthConstants::new(delta0, g.kappa1, 1.0, setup.lambda_min).with_tails(&rep);
    Ok(json!({ "complexity": complexity, "growth": rep, "constants": constants, "run": run }))
}

fn run_configured(cfg: &RunConfig, setup: &Setup) -> Result<Vec<OrbitRecord>> {
    let ec = cfg.ensemble_config(setup);
    ec.validate(&setup.modcfg)?;
    run_ensemble(&ec, &setup.ensemble())
}

fn termination_counts(records: &[OrbitRecord]) -> Value {
    let mut m = serde_json::Map::new();
    for r in records {
        let k = serde_json::to_value(r.termination).expect("serialises");
        let k = k.as_str().unwrap_or("").to_string();
        let e = m.entry(k).or_insert(Value::from(0u64));
        *e = Value::from(e.as_u64().unwrap_or(0) + 1);
    }
    Value::Object(m)
}

fn ensemble(cfg: &RunConfig, setup: &Setup, out: &mut Outputs) -> Result<Value> {
    let records = run_configured(cfg, setup)?;
    let mut orbits = Csv::new(&["index", "sigma0", "z0", "revolutions", "termination", "nhat", "log_gain"]);
    let mut series = Csv::new(&["index", "n", "route", "log_energy"]);
    for r in &records {
        let term = serde_json::to_value(r.termination).expect("serialises");
        orbits.row(vec![
            r.index.into(),
            r.sigma0.into(),
            r.z0.into(),
            r.revolutions().into(),
            term.as_str().unwrap_or("").into(),
            r.nhat.map_or(-1, |n| n as i64).into(),
            (r.log_energy[r.revolutions()] - r.log_energy[0]).into(),
        ]);
        for (n, &l) in r.log_energy.iter().enumerate() {
            let route = if n == 0 { 0 } else { r.itinerary[n - 1] as i64 };
            series.row(vec![r.index.into(), n.into(), route.into(), l.into()]);
        }
    }
    out.csv("orbits.csv", orbits);
    out.csv("series.csv", series);
    let (inc, se) = increment_summary(&records);
    Ok(json!({
        "orbits": records.len(),
        "terminations": termination_counts(&records),
        "mean_increment": inc,
        "increment_se": se,
        "max_abs_increment": max_log_increment(&records),
    }))
}

fn drift(cfg: &RunConfig, setup: &Setup, out: &mut Outputs) -> Result<Value> {
    let records = run_configured(cfg, setup)?;
    let n0 = cfg.ensemble.n0;
    let d = drift_estimate(&records, n0, cfg.seed)?;
    let (p, t) = (&setup.params, &cfg.thresholds);
    let e = drift_rate(p.f1, p.f2).ok();
    let walk = bernoulli_walk(t.ell, p.f1, p.f2, n0, cfg.stats.walks, cfg.stats.walk_r, cfg.seed);
    let mut table = Csv::new(&["n", "empirical", "hoeffding"]);
    for tp in &walk.tail {
        table.row(vec![tp.n.into(), tp.empirical.into(), tp.hoeffding.into()]);
    }
    out.csv("walk_tail.csv", table);
    let (inc, se) = increment_summary(&records);
    Ok(json!({
        "drift": d,
        "e_rate": e,
        "relative_gap": e.map(|e| (d.mean - e) / e),
        "hard_floor": e.map(|e| e / 3.0),
        "mean_increment": inc,
        "increment_se": se,
        "max_abs_increment": max_log_increment(&records),
        "walk": { "h": walk.h, "empirical_mean": walk.empirical_mean, "r": walk.r, "tail": walk.tail },
    }))
}

fn itinerary(cfg: &RunConfig, setup: &Setup, out: &mut Outputs) -> Result<Value> {
    let records = run_configured(cfg, setup)?;
    let s = itinerary_stats(&records, cfg.stats.itinerary_depth, setup.params.f2)?;
    let mut table = Csv::new(&["pattern", "empirical", "predicted"]);
    for r in &s.rows {
        table.row(vec![pattern_name(&r.pattern).into(), r.empirical.into(), r.predicted.into()]);
    }
    out.csv("itinerary.csv", table);
    Ok(serde_json::to_value(&s).expect("serialises"))
}

fn moment(cfg: &RunConfig, setup: &Setup, out: &mut Outputs) -> Result<Value> {
    let records = run_configured(cfg, setup)?;
    let n0 = cfg.ensemble.n0;
    let kappa = cfg.stats.eta / n0 as f64;
    let m = moment_check(&records, kappa, n0, cfg.seed)?;
    let mut table = Csv::new(&["nhat", "count"]);
    let mut hist = std::collections::BTreeMap::<i64, usize>::new();
    for r in &records {
        *hist.entry(r.nhat.map_or(-1, |n| n as i64)).or_default() += 1;
    }
    for (n, c) in hist {
        table.row(vec![n.into(), c.into()]);
    }
    out.csv("nhat.csv", table);
    Ok(json!({
        "kappa": kappa,
        "eta": cfg.stats.eta,
        "moment": m,
        "below_one": m.hi < 1.0,
    }))
}

fn escape(cfg: &RunConfig, setup: &Setup, out: &mut Outputs) -> Result<Value> {
    let sec = &cfg.escape;
    let v = cfg.thresholds.v_star;
    let mut ec = cfg.ensemble_config(setup);
    ec.n_orbits = sec.n_orbits;
    ec.horizon = sec.horizon;
    ec.v_range = sec.v_range.unwrap_or((v, 4.0 * v));
    ec.nhat = NhatMode::Off;
    ec.validate(&setup.modcfg)?;
    let ens = setup.ensemble();
    let records = run_ensemble(&ec, &ens)?;
    let n0 = cfg.ensemble.n0.min(sec.horizon);
    let d = drift_estimate(&records, n0, cfg.seed)?;
    let alpha = sec.alpha.unwrap_or(d.mean / 2.0);
    let curve = escape_curve(&records, alpha, &sec.ts);
    let fraction = crate::stats::escape_fraction(&records, alpha, sec.t);
    let mut table = Csv::new(&["T", "fraction", "log_complement"]);
    for (&t, &f) in curve.ts.iter().zip(&curve.fractions) {
        table.row(vec![t.into(), f.into(), (1.0 - f).ln().into()]);
    }
    out.csv("escape.csv", table);

    let p = &setup.params;
    let m = &setup.modcfg;
    let mut exact = Value::Null;
    if sec.exact_orbits > 0 {
        let mut xc = crate::stats::EnsembleConfig::new(
            cfg.seed,
            sec.exact_orbits,
            (sec.exact_v_range.0 * m.v0, sec.exact_v_range.1 * m.v0),
            sec.exact_horizon,
            Dynamics::Exact,
        );
        xc.init = InitMode::Uniform;
        xc.energy_cap = Some(sec.exact_cap * m.v0);
        xc.validate(m)?;
        let xr = run_ensemble(&xc, &ens)?;
        let mut table = Csv::new(&["index", "z0", "revolutions", "termination", "min_log_energy"]);
        for r in &xr {
            let term = serde_json::to_value(r.termination).expect("serialises");
            let lo = r.log_energy.iter().copied().fold(f64::INFINITY, f64::min);
            table.row(vec![
                r.index.into(),
                r.z0.into(),
                r.revolutions().into(),
                term.as_str().unwrap_or("").into(),
                lo.into(),
            ]);
        }
        out.csv("escape_exact.csv", table);
        exact = json!({
            "orbits": xr.len(),
            "never_below_v0": never_below(&xr, m.v0),
            "terminations": termination_counts(&xr),
        });
    }
    let d_down = m.ell * (1.0 - p.f2) / (1.0 - p.f1);
    let kappa = cfg.stats.eta / cfg.ensemble.n0 as f64;
    let mom = moment_check(&records, kappa, n0, cfg.seed).ok();
    let consts = mom.as_ref().map(|mo| AccelConstants::from_measurements(kappa, mo, &curve, n0, d.mean));
    Ok(json!({
        "drift": d,
        "alpha": alpha,
        "t": sec.t,
        "fraction": fraction,
        "curve": curve,
        "exact": exact,
        "iota_one_revolution": iota(v, m.v0, d_down, 1),
        "constants": consts,
    }))
}

fn dump_charts(cfg: &RunConfig, setup: &Setup, out: &mut Outputs) -> Result<Value> {
    let charts = Charts::new(&setup.params);
    let n = cfg.dump.grid.max(2);
    let mut table = Csv::new(&["t", "f", "theta", "zeta", "phase_upper", "phase_lower"]);
    for i in 0..n {
        let t = 2.0 * i as f64 / (n - 1) as f64;
        table.row(vec![
            t.into(),
            setup.params.profile.value(t).into(),
            charts.theta(t).into(),
            charts.zeta(t).into(),
            charts.phase(Side::Upper, t).into(),
            charts.phase(Side::Lower, t).into(),
        ]);
    }
    out.csv("charts.csv", table);
    let p = &setup.params;
    Ok(json!({
        "grid": n,
        "l_star": p.l_star,
        "m_star": p.m_star,
        "theta_star": [p.theta1_star, p.theta2_star],
        "zeta_star": [p.zeta1_star, p.zeta2_star],
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_errors_map_to_two() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Numerical("x".into())), 3);
    }
}
