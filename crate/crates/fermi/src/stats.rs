//! Orbit ensembles and the statistics built on them: drift, itineraries,
//! the moment estimate, the Bernoulli reference walk and escape fractions.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::billiard::Billiard;
use crate::charts::{Strip, StripPoint};
use crate::curves::{random_curve, CurveConfig, Stepper, UnstableCurve};
use crate::error::{Error, Result};
use crate::fit::{fit_line, mean, quantile, std_dev};
use crate::hyperbolic::{norm, ConeSpec};
use crate::maps::{ModifiedSystemConfig, NormalForm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    Exact,
    NormalFormP,
    ModifiedP0,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// `(sigma, H)` uniform in `[0,2) x [V1,V2]`.
    Uniform,
    /// A fresh random long curve per orbit, point uniform on it.
    LongCurves,
    /// One long curve centred at `(sigma, h)`, shared by all orbits.
    Curve { sigma: f64, h: f64 },
}

/// How the delayed time `N-hat` is measured along an orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NhatMode {
    Off,
    /// Revolutions after `N0` until a tangent vector, unit at `N0`, has
    /// grown by the factor taking length `theta1/100` to `theta1/2`.
    Tangent,
    /// Short curve of length `theta1/100` tracked around the orbit.
    Curve,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub seed: u64,
    pub n_orbits: usize,
    /// `[V1, V2]` for the initial `H`.
    pub v_range: (f64, f64),
    /// Revolutions per orbit.
    pub horizon: usize,
    pub dynamics: Dynamics,
    pub init: InitMode,
    /// Escape-test rate.
    pub alpha: f64,
    /// Escape-test start.
    pub t_escape: usize,
    /// Long-curve size, used for initial curves and `N-hat`.
    pub theta1: f64,
    pub n0: usize,
    pub nhat: NhatMode,
    /// Normal-form runs: `H` above this is scaled down by `1e-6`, the
    /// factor being kept in the log-energy series.
    pub renormalize_above: Option<f64>,
    /// Orbits above this energy stop early with `EnergyCap`.
    pub energy_cap: Option<f64>,
}

impl EnsembleConfig {
    pub fn new(seed: u64, n_orbits: usize, v_range: (f64, f64), horizon: usize, dynamics: Dynamics) -> EnsembleConfig {
        EnsembleConfig {
            seed,
            n_orbits,
            v_range,
            horizon,
            dynamics,
            init: InitMode::Uniform,
            alpha: 0.0,
            t_escape: 1,
            theta1: 1e-3,
            n0: 1,
            nhat: NhatMode::Off,
            renormalize_above: Some(1e12),
            energy_cap: None,
        }
    }

    pub fn validate(&self, modcfg: &ModifiedSystemConfig) -> Result<()> {
        let (v1, v2) = self.v_range;
        if !(v1 >= modcfg.v_star && v2 >= v1) {
            return Err(Error::Config(format!("v_range [{v1}, {v2}] must lie above V* = {}", modcfg.v_star)));
        }
        if self.n_orbits == 0 || self.horizon == 0 {
            return Err(Error::Config("need n_orbits > 0 and horizon > 0".into()));
        }
        if let Some(r) = self.renormalize_above {
            if r * 1e-6 <= modcfg.v0 {
                return Err(Error::Config(format!("renormalize_above = {r} lands below V0 after scaling")));
            }
        }
        if self.dynamics == Dynamics::Exact && self.nhat != NhatMode::Off {
            return Err(Error::Config("N-hat needs normal-form dynamics".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    AbortedEdge,
    FellBelowThreshold,
    EnergyCap,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrbitRecord {
    pub index: usize,
    pub sigma0: f64,
    pub z0: f64,
    /// `+1` for a lower revolution.
    pub itinerary: Vec<i8>,
    /// `ln z_n`, `n = 0..=itinerary.len()`.
    pub log_energy: Vec<f64>,
    pub termination: Termination,
    pub nhat: Option<usize>,
}

impl OrbitRecord {
    pub fn revolutions(&self) -> usize {
        self.itinerary.len()
    }
}

/// What an ensemble runs on.
#[derive(Debug, Clone)]
pub struct EnsembleSetup {
    pub nf: NormalForm,
    pub modcfg: ModifiedSystemConfig,
    pub cone: Option<ConeSpec>,
}

impl EnsembleSetup {
    fn stepper(&self, dynamics: Dynamics) -> Stepper {
        let m = (dynamics == Dynamics::ModifiedP0).then_some(self.modcfg);
        Stepper::new(self.nf.clone(), m)
    }
}

fn initial_curve<R: Rng>(rng: &mut R, cfg: &EnsembleConfig, cone: Option<&ConeSpec>) -> UnstableCurve {
    match cfg.init {
        InitMode::Curve { sigma, h } => {
            let dir = cone.map_or([0.0, 1.0], |c| c.direction(0.5));
            UnstableCurve::centred(Strip::R1, [sigma, h], dir, cfg.theta1)
        }
        _ => {
            let len = cfg.theta1 * rng.gen_range(0.5..1.0);
            random_curve(rng, cfg.v_range, cone, len)
        }
    }
}

fn initial_point<R: Rng>(rng: &mut R, cfg: &EnsembleConfig, setup: &EnsembleSetup, st: &Stepper) -> StripPoint {
    match cfg.init {
        InitMode::Uniform => {
            StripPoint::new(Strip::R1, rng.gen_range(0.0..2.0), rng.gen_range(cfg.v_range.0..=cfg.v_range.1))
        }
        _ => {
            let c = initial_curve(rng, cfg, setup.cone.as_ref());
            let p = c.point_at(st, rng.gen_range(0.0..1.0));
            StripPoint::new(Strip::R1, p.first.rem_euclid(2.0), p.second)
        }
    }
}

/// Runs every orbit; results are in index order and depend only on
/// `(seed, index)`.
pub fn run_ensemble(cfg: &EnsembleConfig, setup: &EnsembleSetup) -> Result<Vec<OrbitRecord>> {
    cfg.validate(&setup.modcfg)?;
    let st = setup.stepper(cfg.dynamics);
    Ok((0..cfg.n_orbits).into_par_iter().map(|i| run_orbit(i, cfg, setup, &st)).collect())
}

fn run_orbit(index: usize, cfg: &EnsembleConfig, setup: &EnsembleSetup, st: &Stepper) -> OrbitRecord {
    let mut rng = crate::rng(cfg.seed, index as u64);
    let p0 = initial_point(&mut rng, cfg, setup, st);
    let mut rec = OrbitRecord {
        index,
        sigma0: p0.first,
        z0: p0.second,
        itinerary: Vec::with_capacity(cfg.horizon),
        log_energy: vec![p0.second.ln()],
        termination: Termination::Completed,
        nhat: None,
    };
    match cfg.dynamics {
        Dynamics::Exact => exact_orbit(&mut rec, p0, cfg, setup),
        _ => normal_form_orbit(&mut rec, p0, cfg, setup, st),
    }
    if cfg.nhat == NhatMode::Curve {
        rec.nhat = curve_nhat(p0, cfg, setup, st).ok();
    }
    rec
}

/// Expansion taking a curve of length `theta1/100` to `theta1/2`.
const TANGENT_GROWTH: f64 = 50.0;

fn normal_form_orbit(rec: &mut OrbitRecord, p0: StripPoint, cfg: &EnsembleConfig, setup: &EnsembleSetup, st: &Stepper) {
    let v_star = setup.modcfg.v_star;
    let mut p = p0;
    let mut shift = 0.0;
    let dir = setup.cone.map_or([0.0, 1.0], |c| c.direction(0.5));
    let mut tangent = dir;
    for n in 1..=cfg.horizon {
        let mut sign = 0;
        for _ in 0..2 {
            let key = match st.key(&p) {
                Ok(k) => k,
                Err(_) => {
                    rec.termination = Termination::AbortedEdge;
                    return;
                }
            };
            if cfg.nhat == NhatMode::Tangent && rec.nhat.is_none() {
                tangent = st.jacobian(key, &p).apply(tangent);
            }
            sign += key.route_sign();
            p = st.eval(key, &p);
        }
        p = StripPoint::new(Strip::R1, p.first.rem_euclid(2.0), p.second);
        rec.itinerary.push(sign);
        rec.log_energy.push(p.second.ln() + shift);
        if cfg.nhat == NhatMode::Tangent && rec.nhat.is_none() {
            let l = norm(tangent);
            if n > cfg.n0 && l >= TANGENT_GROWTH {
                rec.nhat = Some(n);
            } else if n <= cfg.n0 {
                tangent = [tangent[0] / l, tangent[1] / l];
            }
        }
        if p.second < v_star {
            rec.termination = Termination::FellBelowThreshold;
            return;
        }
        if cfg.energy_cap.is_some_and(|c| p.second.ln() + shift > c.ln()) {
            rec.termination = Termination::EnergyCap;
            return;
        }
        if let Some(r) = cfg.renormalize_above {
            while p.second > r {
                p = StripPoint::new(Strip::R1, p.first, p.second * 1e-6);
                shift += 1e6f64.ln();
            }
        }
    }
}

fn exact_orbit(rec: &mut OrbitRecord, p0: StripPoint, cfg: &EnsembleConfig, setup: &EnsembleSetup) {
    let b = Billiard::new(&setup.nf.params);
    let pr = &setup.nf.params;
    let (mut t, mut v) = (pr.t1_star + p0.first / (2.0 * p0.second), 2.0 * p0.second);
    for _ in 0..cfg.horizon {
        let r = match b.exact_revolution(t, v) {
            Ok(r) => r,
            Err(_) => {
                rec.termination = Termination::AbortedEdge;
                return;
            }
        };
        (t, v) = (r.t_out, r.v_out);
        let z = 0.5 * v;
        rec.itinerary.push(if r.route.is_lower() { 1 } else { -1 });
        rec.log_energy.push(z.ln());
        if z < setup.modcfg.v_star {
            rec.termination = Termination::FellBelowThreshold;
            return;
        }
        if cfg.energy_cap.is_some_and(|c| z > c) {
            rec.termination = Termination::EnergyCap;
            return;
        }
    }
}

/// `N-hat` from a short curve tracked around the orbit's starting point.
fn curve_nhat(p0: StripPoint, cfg: &EnsembleConfig, setup: &EnsembleSetup, st: &Stepper) -> Result<usize> {
    let ccfg = CurveConfig { cone: setup.cone, ..Default::default() };
    let dir = setup.cone.map_or([0.0, 1.0], |c| c.direction(0.5));
    let (mut c, mut s) = (UnstableCurve::centred(Strip::R1, [p0.first, p0.second], dir, cfg.theta1 / 100.0), 0.5);
    for n in 1..=cfg.n0 + 20 {
        (c, s) = c.track(st, &ccfg, s)?;
        if n > cfg.n0 && c.origin.length() >= 0.5 * cfg.theta1 {
            return Ok(n);
        }
    }
    Err(Error::Numerical("tracked curve stayed short".into()))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Interval {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

/// Percentile bootstrap 95% interval of the mean.
pub fn bootstrap_mean(xs: &[f64], resamples: usize, seed: u64) -> Interval {
    let m = mean(xs);
    let mut rng = crate::rng(seed, u64::MAX);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            let mut acc = 0.0;
            for _ in 0..xs.len() {
                acc += xs[rng.gen_range(0..xs.len())];
            }
            acc / xs.len() as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    Interval { mean: m, lo: quantile(&means, 0.025), hi: quantile(&means, 0.975), n: xs.len() }
}

fn enough(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Numerical(format!("only {n} completed records")));
    }
    Ok(())
}

/// Mean of `(ln z_N0 - ln z_0) / N0` over records reaching `N0`.
pub fn drift_estimate(records: &[OrbitRecord], n0: usize, seed: u64) -> Result<Interval> {
    let xs: Vec<f64> = records
        .iter()
        .filter(|r| r.revolutions() >= n0)
        .map(|r| (r.log_energy[n0] - r.log_energy[0]) / n0 as f64)
        .collect();
    enough(xs.len())?;
    Ok(bootstrap_mean(&xs, 1000, seed))
}

/// Per-revolution log increments over all records.
pub fn log_increments(records: &[OrbitRecord]) -> Vec<f64> {
    records.iter().flat_map(|r| r.log_energy.windows(2).map(|w| w[1] - w[0])).collect()
}

/// Largest `|ln z_{n+1} - ln z_n|`.
pub fn max_log_increment(records: &[OrbitRecord]) -> f64 {
    log_increments(records).into_iter().map(f64::abs).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct TailPoint {
    pub n: usize,
    /// Fraction of walks with sum below `(h - r) n`.
    pub empirical: f64,
    pub hoeffding: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BernoulliWalk {
    /// Expected `ln d`, i.e. drift plus `ln ell`.
    pub h: f64,
    pub empirical_mean: f64,
    pub r: f64,
    pub tail: Vec<TailPoint>,
    /// Final sums `ln lambda_N - ln lambda_0`.
    pub finals: Vec<f64>,
}

/// I.i.d. walk with `d = ell f2/f1` (probability `f2`) and
/// `d = ell (1-f2)/(1-f1)` otherwise.
pub fn bernoulli_walk(ell: f64, f1: f64, f2: f64, n: usize, n_walks: usize, r: f64, seed: u64) -> BernoulliWalk {
    let up = (ell * f2 / f1).ln();
    let down = (ell * (1.0 - f2) / (1.0 - f1)).ln();
    let h = f2 * up + (1.0 - f2) * down;
    let checkpoints: Vec<usize> = [1, 2, 5].iter().flat_map(|&m| [m, 10 * m, 100 * m, 1000 * m]).filter(|&k| k <= n).collect();
    let mut checkpoints = checkpoints;
    checkpoints.sort_unstable();
    let paths: Vec<(Vec<bool>, f64)> = (0..n_walks)
        .into_par_iter()
        .map(|w| {
            let mut rng = crate::rng(seed, w as u64);
            let mut sum = 0.0;
            let mut below = Vec::with_capacity(checkpoints.len());
            let mut next = 0;
            for k in 1..=n {
                sum += if rng.gen_bool(f2) { up } else { down };
                if next < checkpoints.len() && checkpoints[next] == k {
                    below.push(sum < (h - r) * k as f64);
                    next += 1;
                }
            }
            (below, sum)
        })
        .collect();
    let tail = checkpoints
        .iter()
        .enumerate()
        .map(|(j, &k)| TailPoint {
            n: k,
            empirical: paths.iter().filter(|p| p.0[j]).count() as f64 / n_walks as f64,
            hoeffding: (-2.0 * k as f64 * r * r).exp(),
        })
        .collect();
    let finals: Vec<f64> = paths.into_iter().map(|p| p.1).collect();
    BernoulliWalk { h, empirical_mean: mean(&finals) / n as f64, r, tail, finals }
}

#[derive(Debug, Clone, Serialize)]
pub struct PatternRow {
    pub pattern: Vec<i8>,
    pub empirical: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ItineraryStats {
    pub depth: usize,
    pub samples: usize,
    pub rows: Vec<PatternRow>,
    pub tv: f64,
}

/// Frequencies of the first `depth` route signs against the product law with `q(+1) = f2`.
pub fn itinerary_stats(records: &[OrbitRecord], depth: usize, f2: f64) -> Result<ItineraryStats> {
    if depth == 0 || depth > 6 {
        return Err(Error::Config(format!("depth {depth} outside 1..=6")));
    }
    let pats: Vec<&[i8]> = records.iter().filter(|r| r.revolutions() >= depth).map(|r| &r.itinerary[..depth]).collect();
    enough(pats.len())?;
    let mut rows = Vec::new();
    let mut tv = 0.0;
    for code in 0..(1usize << depth) {
        let pattern: Vec<i8> = (0..depth).map(|i| if code >> (depth - 1 - i) & 1 == 1 { 1 } else { -1 }).collect();
        let predicted: f64 = pattern.iter().map(|&x| if x == 1 { f2 } else { 1.0 - f2 }).product();
        let empirical = pats.iter().filter(|p| **p == pattern.as_slice()).count() as f64 / pats.len() as f64;
        tv += (empirical - predicted).abs();
        rows.push(PatternRow { pattern, empirical, predicted });
    }
    Ok(ItineraryStats { depth, samples: pats.len(), rows, tv: 0.5 * tv })
}

/// Sample mean of `exp(-kappa Delta)`, `Delta = ln z_{N-hat} - ln z_0`.
/// Records without `N-hat` use `N0 + 1`.
pub fn moment_check(records: &[OrbitRecord], kappa: f64, n0: usize, seed: u64) -> Result<Interval> {
    let xs: Vec<f64> = records
        .iter()
        .filter_map(|r| {
            let n = r.nhat.unwrap_or(n0 + 1);
            (r.revolutions() >= n).then(|| (-kappa * (r.log_energy[n] - r.log_energy[0])).exp())
        })
        .collect();
    enough(xs.len())?;
    Ok(bootstrap_mean(&xs, 1000, seed))
}

/// Fraction of records with `z_n >= e^{alpha n} z_0` for every `n` in `[t, end]`.
/// Records ending early count as failures unless they stopped at the energy
/// cap while on track.
pub fn escape_fraction(records: &[OrbitRecord], alpha: f64, t: usize) -> f64 {
    let ok = records
        .iter()
        .filter(|r| {
            let on_track = r.log_energy.iter().enumerate().skip(t).all(|(n, &l)| l - r.log_energy[0] >= alpha * n as f64);
            on_track
                && match r.termination {
                    Termination::Completed => r.revolutions() >= t,
                    Termination::EnergyCap => true,
                    _ => false,
                }
        })
        .count();
    ok as f64 / records.len().max(1) as f64
}

/// Fraction of records whose energy never drops below `v0`.
pub fn never_below(records: &[OrbitRecord], v0: f64) -> f64 {
    let l0 = v0.ln();
    let ok = records
        .iter()
        .filter(|r| r.termination != Termination::AbortedEdge)
        .filter(|r| r.termination != Termination::FellBelowThreshold && r.log_energy.iter().all(|&l| l >= l0))
        .count();
    ok as f64 / records.iter().filter(|r| r.termination != Termination::AbortedEdge).count().max(1) as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct EscapeCurve {
    pub alpha: f64,
    pub ts: Vec<usize>,
    pub fractions: Vec<f64>,
    /// Fit of `ln(1 - fraction)` against `T`.
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn escape_curve(records: &[OrbitRecord], alpha: f64, ts: &[usize]) -> EscapeCurve {
    let fractions: Vec<f64> = ts.iter().map(|&t| escape_fraction(records, alpha, t)).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        ts.iter().zip(&fractions).filter(|(_, &f)| f < 1.0).map(|(&t, &f)| (t as f64, (1.0 - f).ln())).unzip();
    let (slope, intercept, r2) = if xs.len() >= 2 {
        let f = fit_line(&xs, &ys);
        (f.slope, f.intercept, f.r2)
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };
    EscapeCurve { alpha, ts: ts.to_vec(), fractions, slope, intercept, r2 }
}

/// `iota` with `V0 (1/d)^N = V* iota^N`, `d = ell (1-f2)/(1-f1)`.
pub fn iota(v_star: f64, v0: f64, d: f64, n: usize) -> f64 {
    (v0 / v_star).powf(1.0 / n as f64) / d
}

#[derive(Debug, Clone, Serialize)]
pub struct AccelConstants {
    pub kappa: f64,
    pub theta_hat: f64,
    pub alpha: f64,
    pub beta: f64,
    pub n0: usize,
    pub e_rate: f64,
}

impl AccelConstants {
    /// `beta` is minus the fitted slope of `ln(1 - fraction)`.
    pub fn from_measurements(kappa: f64, moment: &Interval, escape: &EscapeCurve, n0: usize, e_rate: f64) -> AccelConstants {
        AccelConstants { kappa, theta_hat: moment.mean, alpha: escape.alpha, beta: -escape.slope, n0, e_rate }
    }
}

/// Standard error of the mean per-revolution increment.
pub fn increment_summary(records: &[OrbitRecord]) -> (f64, f64) {
    let xs = log_increments(records);
    (mean(&xs), std_dev(&xs) / (xs.len() as f64).sqrt())
}
