//! Unstable curves pushed through the half maps, cut at region boundaries.
//!
//! A curve is a parameter interval `[s_lo, s_hi]` of a straight initial
//! segment together with the branch keys applied to it so far. Points are
//! recomputed exactly by replaying the keys; the measure of a piece is its
//! parameter length times the length of the initial segment, so cutting
//! conserves measure exactly.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::charts::{Strip, StripPoint};
use crate::error::{Error, Result};
use crate::fit::{fit_line, mean, quantile, LineFit};
use crate::hyperbolic::{dg_matrix, norm, numeric_jacobian, ConeSpec, Mat2, Vec2};
use crate::maps::{MapId, ModifiedSystemConfig, NormalForm, Order, SignedClass};

/// Which branch of which map a point is sent through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum StepKey {
    Map(MapId, i64),
    /// Forced lower entry of the modified system: short-entry branch and the
    /// multiple of 2 removed from `rho`.
    Forced(i64, i64),
}

impl StepKey {
    pub fn target(self) -> Strip {
        match self {
            StepKey::Map(id, _) => id.target(),
            StepKey::Forced(..) => Strip::R2Minus,
        }
    }

    /// +1 for the lower (accelerating) entry, -1 for the upper one; 0 for exits.
    pub fn route_sign(self) -> i8 {
        match self {
            StepKey::Map(MapId::U12, _) => -1,
            StepKey::Map(MapId::Ll12 | MapId::Ls12, _) | StepKey::Forced(..) => 1,
            _ => 0,
        }
    }
}

/// Point dynamics of `P` (no modification) or `P0`.
#[derive(Debug, Clone)]
pub struct Stepper {
    pub nf: NormalForm,
    pub modified: Option<ModifiedSystemConfig>,
}

impl Stepper {
    pub fn new(nf: NormalForm, modified: Option<ModifiedSystemConfig>) -> Stepper {
        Stepper { nf, modified }
    }

    pub fn key(&self, p: &StripPoint) -> Result<StepKey> {
        if let (Strip::R1, Some(cfg)) = (p.strip, &self.modified) {
            if self.nf.is_forced(p, cfg)? {
                let k = self.nf.branch(MapId::Ls12, p);
                let (rho, _) = self.nf.eval_on(MapId::Ls12, k, p.first, p.second, Order::GOnly);
                return Ok(StepKey::Forced(k, rho.div_euclid(2.0) as i64));
            }
        }
        let (id, k) = self.nf.select(p)?;
        Ok(StepKey::Map(id, k))
    }

    pub fn eval(&self, key: StepKey, p: &StripPoint) -> StripPoint {
        match key {
            StepKey::Map(id, k) => {
                let (a, b) = self.nf.eval_on(id, k, p.first, p.second, self.nf.order);
                StripPoint::new(id.target(), a, b)
            }
            StepKey::Forced(k, j) => {
                let (rho, _) = self.nf.eval_on(MapId::Ls12, k, p.first, p.second, Order::GOnly);
                let rho = rho - 2.0 * j as f64;
                let jj = self.nf.params.f2 * p.second + self.nf.consts.kappa_l * (rho - 1.0);
                StripPoint::new(Strip::R2Minus, rho, jj)
            }
        }
    }

    pub fn jacobian(&self, key: StepKey, p: &StripPoint) -> Mat2 {
        match key {
            StepKey::Forced(..) => dg_matrix(MapId::Ls12, &self.nf.params, &self.nf.consts),
            StepKey::Map(id, _) if self.nf.order == Order::GOnly => dg_matrix(id, &self.nf.params, &self.nf.consts),
            StepKey::Map(id, k) => numeric_jacobian(&self.nf, id, k, p.first, p.second, self.nf.order),
        }
    }

    /// Wrapped-coordinate slope `c` of a strip.
    pub fn span(&self, strip: Strip) -> f64 {
        let pr = &self.nf.params;
        match strip {
            Strip::R1 => pr.entry_span(),
            Strip::R2Plus => pr.exit_span_upper(),
            Strip::R2Minus => pr.exit_span_lower(),
        }
    }

    /// Step size between two points of one strip, in wrapped units.
    fn gap(&self, a: &StripPoint, b: &StripPoint) -> f64 {
        let c = self.span(a.strip);
        let du = c * (b.second - a.second) - (b.first - a.first);
        du.abs().max((b.first - a.first).abs())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveConfig {
    /// Largest wrapped-coordinate change between consecutive samples.
    pub max_seg: f64,
    /// Budget on samples per scan.
    pub max_vertices: usize,
    /// Checked on every chord when set.
    pub cone: Option<ConeSpec>,
}

impl Default for CurveConfig {
    fn default() -> Self {
        CurveConfig { max_seg: 0.05, max_vertices: 1_000_000, cone: None }
    }
}

/// Initial polyline, parametrised by arc-length fraction in `[0,1]`.
#[derive(Debug, Clone)]
pub struct Origin {
    pub strip: Strip,
    pub pts: Vec<Vec2>,
    cum: Vec<f64>,
    length: f64,
}

impl Origin {
    pub fn polyline(strip: Strip, pts: Vec<Vec2>) -> Origin {
        let mut cum = vec![0.0];
        for w in pts.windows(2) {
            cum.push(cum.last().unwrap() + norm([w[1][0] - w[0][0], w[1][1] - w[0][1]]));
        }
        let length = *cum.last().unwrap();
        for c in cum.iter_mut() {
            *c /= length;
        }
        Origin { strip, pts, cum, length }
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let i = self.cum.partition_point(|&c| c <= s).clamp(1, self.cum.len() - 1);
        let (c0, c1) = (self.cum[i - 1], self.cum[i]);
        (i, if c1 > c0 { (s - c0) / (c1 - c0) } else { 0.0 })
    }

    pub fn point(&self, s: f64) -> StripPoint {
        let (i, t) = self.locate(s);
        let (a, b) = (self.pts[i - 1], self.pts[i]);
        StripPoint::new(self.strip, a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]))
    }

    /// Unit tangent at parameter `s`.
    pub fn tangent(&self, s: f64) -> Vec2 {
        let (i, _) = self.locate(s);
        let (a, b) = (self.pts[i - 1], self.pts[i]);
        let d = [b[0] - a[0], b[1] - a[1]];
        let l = norm(d);
        [d[0] / l, d[1] / l]
    }
}

#[derive(Debug, Clone)]
pub struct UnstableCurve {
    pub origin: Arc<Origin>,
    pub history: Vec<StepKey>,
    pub strip: Strip,
    pub s_lo: f64,
    pub s_hi: f64,
}

struct Scan<K> {
    /// Parameter of each change and the key on its far side.
    cuts: Vec<(f64, K)>,
    length: f64,
    samples: Vec<(f64, StripPoint)>,
}

impl UnstableCurve {
    /// Straight segment from `a` to `b` on `strip`.
    pub fn segment(strip: Strip, a: Vec2, b: Vec2) -> UnstableCurve {
        UnstableCurve { origin: Arc::new(Origin::polyline(strip, vec![a, b])), history: Vec::new(), strip, s_lo: 0.0, s_hi: 1.0 }
    }

    /// Segment of length `len` centred at `c` along the unit vector `dir`.
    pub fn centred(strip: Strip, c: Vec2, dir: Vec2, len: f64) -> UnstableCurve {
        let h = 0.5 * len;
        UnstableCurve::segment(strip, [c[0] - h * dir[0], c[1] - h * dir[1]], [c[0] + h * dir[0], c[1] + h * dir[1]])
    }

    pub fn measure(&self) -> f64 {
        (self.s_hi - self.s_lo) * self.origin.length()
    }

    pub fn point_at(&self, st: &Stepper, s: f64) -> StripPoint {
        let mut p = self.origin.point(s);
        for &k in &self.history {
            p = st.eval(k, &p);
        }
        p
    }

    /// Image of the initial unit tangent at parameter `s`.
    pub fn tangent_at(&self, st: &Stepper, s: f64) -> Vec2 {
        let mut p = self.origin.point(s);
        let mut v = self.origin.tangent(s);
        for &k in &self.history {
            v = st.jacobian(k, &p).apply(v);
            p = st.eval(k, &p);
        }
        v
    }

    fn sub(&self, s_lo: f64, s_hi: f64) -> UnstableCurve {
        UnstableCurve { origin: self.origin.clone(), history: self.history.clone(), strip: self.strip, s_lo, s_hi }
    }

    fn check_chord(&self, cfg: &CurveConfig, a: &StripPoint, b: &StripPoint) -> Result<()> {
        let Some(cone) = &cfg.cone else { return Ok(()) };
        let d = [b.first - a.first, b.second - a.second];
        let scale = a.first.abs().max(a.second.abs()).max(1.0);
        if norm(d) > 1e-7 * scale && !cone.contains(d) {
            return Err(Error::ConeViolation(format!(
                "chord ({:.3e}, {:.3e}) at ({}, {}) on {:?} after {} steps",
                d[0],
                d[1],
                a.first,
                a.second,
                a.strip,
                self.history.len()
            )));
        }
        Ok(())
    }

    /// Marches from `from` towards `to`, recording where `keyf` changes.
    fn scan<K: Copy + PartialEq>(
        &self,
        st: &Stepper,
        cfg: &CurveConfig,
        from: f64,
        to: f64,
        keyf: &dyn Fn(&StripPoint) -> Result<K>,
        first_only: bool,
        keep_samples: bool,
    ) -> Result<Scan<K>> {
        let mut out = Scan { cuts: Vec::new(), length: 0.0, samples: Vec::new() };
        let mut p = self.point_at(st, from);
        if keep_samples {
            out.samples.push((from, p));
        }
        if from == to {
            return Ok(out);
        }
        let dir = (to - from).signum();
        let span = (to - from).abs();
        let q = self.point_at(st, to);
        let rate = st.gap(&p, &q) / span;
        let mut ds = if rate > 0.0 { (cfg.max_seg / rate).min(span) } else { span };
        let mut key = keyf(&p)?;
        let mut s = from;
        let mut count = 0usize;
        loop {
            let mut sn = if dir > 0.0 { (s + ds).min(to) } else { (s - ds).max(to) };
            let mut pn = self.point_at(st, sn);
            while st.gap(&p, &pn) > 2.0 * cfg.max_seg {
                let half = s + dir * 0.5 * (sn - s).abs();
                if half == s || half == sn {
                    // parameter resolution exhausted
                    break;
                }
                sn = half;
                ds = (sn - s).abs();
                pn = self.point_at(st, sn);
            }
            if sn == s {
                sn = to;
                pn = self.point_at(st, sn);
            }
            count += 1;
            if count > cfg.max_vertices {
                return Err(Error::RefinementOverflow(cfg.max_vertices));
            }
            let kn = keyf(&pn)?;
            if kn != key {
                let (mut lo, mut hi) = (s, sn);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid == lo || mid == hi {
                        break;
                    }
                    if keyf(&self.point_at(st, mid))? == key {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let pc = self.point_at(st, hi);
                let kc = keyf(&pc)?;
                self.check_chord(cfg, &p, &pc)?;
                out.length += norm([pc.first - p.first, pc.second - p.second]);
                out.cuts.push((hi, kc));
                if keep_samples {
                    out.samples.push((hi, pc));
                }
                if first_only {
                    return Ok(out);
                }
                key = kc;
                s = hi;
                p = pc;
                if s == to {
                    break;
                }
                continue;
            }
            self.check_chord(cfg, &p, &pn)?;
            out.length += norm([pn.first - p.first, pn.second - p.second]);
            if keep_samples {
                out.samples.push((sn, pn));
            }
            s = sn;
            p = pn;
            if s == to {
                break;
            }
        }
        Ok(out)
    }

    /// Arc length of the current image.
    pub fn length(&self, st: &Stepper, cfg: &CurveConfig) -> Result<f64> {
        let none = |_: &StripPoint| Ok(());
        Ok(self.scan(st, cfg, self.s_lo, self.s_hi, &none, false, false)?.length)
    }

    /// Samples `(s, point)` no further apart than `max_seg` in wrapped units.
    pub fn vertices(&self, st: &Stepper, cfg: &CurveConfig) -> Result<Vec<(f64, StripPoint)>> {
        let none = |_: &StripPoint| Ok(());
        Ok(self.scan(st, cfg, self.s_lo, self.s_hi, &none, false, true)?.samples)
    }

    /// Splits the curve where the branch key changes.
    pub fn cut(&self, st: &Stepper, cfg: &CurveConfig) -> Result<Vec<(StepKey, UnstableCurve)>> {
        let keyf = |p: &StripPoint| st.key(p);
        let scan = self.scan(st, cfg, self.s_lo, self.s_hi, &keyf, false, false)?;
        let mut out = Vec::new();
        let mut start = self.s_lo;
        let mut key = st.key(&self.point_at(st, self.s_lo))?;
        for (s, k) in scan.cuts {
            if s > start {
                out.push((key, self.sub(start, s)));
            }
            start = s;
            key = k;
        }
        if self.s_hi > start || out.is_empty() {
            out.push((key, self.sub(start, self.s_hi)));
        }
        Ok(out)
    }

    /// Splits by an arbitrary piecewise-constant label; returns `(label, measure)` runs.
    pub fn split_measure<K: Copy + PartialEq>(
        &self,
        st: &Stepper,
        cfg: &CurveConfig,
        keyf: &dyn Fn(&StripPoint) -> Result<K>,
    ) -> Result<Vec<(K, f64)>> {
        let scan = self.scan(st, cfg, self.s_lo, self.s_hi, keyf, false, false)?;
        let len = self.origin.length();
        let mut out = Vec::new();
        let mut start = self.s_lo;
        let mut key = keyf(&self.point_at(st, self.s_lo))?;
        for (s, k) in scan.cuts {
            out.push((key, (s - start) * len));
            start = s;
            key = k;
        }
        out.push((key, (self.s_hi - start) * len));
        Ok(out)
    }

    fn advance(mut self, key: StepKey) -> UnstableCurve {
        self.history.push(key);
        self.strip = key.target();
        self
    }

    /// One half map applied to every piece.
    pub fn half_step(&self, st: &Stepper, cfg: &CurveConfig) -> Result<Vec<UnstableCurve>> {
        Ok(self.cut(st, cfg)?.into_iter().map(|(k, c)| c.advance(k)).collect())
    }

    /// One revolution from R1 back to R1.
    pub fn revolution(&self, st: &Stepper, cfg: &CurveConfig) -> Result<Vec<UnstableCurve>> {
        if self.strip != Strip::R1 {
            return Err(Error::Domain("revolutions start on R1".into()));
        }
        let mut out = Vec::new();
        for c in self.half_step(st, cfg)? {
            out.extend(c.half_step(st, cfg)?);
        }
        Ok(out)
    }

    /// The piece containing parameter `s` after one half map.
    pub fn half_step_at(&self, st: &Stepper, cfg: &CurveConfig, s: f64) -> Result<UnstableCurve> {
        let keyf = |p: &StripPoint| st.key(p);
        let key = st.key(&self.point_at(st, s))?;
        let right = self.scan(st, cfg, s, self.s_hi, &keyf, true, false)?;
        let left = self.scan(st, cfg, s, self.s_lo, &keyf, true, false)?;
        let hi = right.cuts.first().map_or(self.s_hi, |c| c.0);
        let lo = left.cuts.first().map_or(self.s_lo, |c| c.0);
        Ok(self.sub(lo, hi).advance(key))
    }

    /// The piece containing parameter `s` after one revolution.
    pub fn revolution_at(&self, st: &Stepper, cfg: &CurveConfig, s: f64) -> Result<UnstableCurve> {
        self.half_step_at(st, cfg, s)?.half_step_at(st, cfg, s)
    }

    /// Replaces the image by a sampled polyline with a fresh history.
    /// Returns the new curve and the parameter of `s` on it.
    pub fn rebase(&self, st: &Stepper, cfg: &CurveConfig, s: f64) -> Result<(UnstableCurve, f64)> {
        let v = self.vertices(st, cfg)?;
        let origin = Origin::polyline(self.strip, v.iter().map(|(_, p)| [p.first, p.second]).collect());
        let i = v.partition_point(|x| x.0 <= s).clamp(1, v.len() - 1);
        let (s0, s1) = (v[i - 1].0, v[i].0);
        let t = if s1 > s0 { ((s - s0) / (s1 - s0)).clamp(0.0, 1.0) } else { 0.0 };
        let t = origin.cum[i - 1] + t * (origin.cum[i] - origin.cum[i - 1]);
        let c = UnstableCurve { origin: Arc::new(origin), history: Vec::new(), strip: self.strip, s_lo: 0.0, s_hi: 1.0 };
        Ok((c, t))
    }

    /// One revolution of the piece containing `s`, rebased.
    pub fn track(&self, st: &Stepper, cfg: &CurveConfig, s: f64) -> Result<(UnstableCurve, f64)> {
        self.revolution_at(st, cfg, s)?.rebase(st, cfg, s)
    }

    /// The chunk of length in `[theta1/2, theta1]` containing `s`, when the
    /// curve is at least `theta1/2` long; otherwise the curve itself.
    pub fn chunk_at(&self, st: &Stepper, cfg: &CurveConfig, s: f64, theta1: f64) -> Result<UnstableCurve> {
        let v = self.vertices(st, cfg)?;
        let mut cum = vec![0.0];
        for w in v.windows(2) {
            let d = norm([w[1].1.first - w[0].1.first, w[1].1.second - w[0].1.second]);
            cum.push(cum.last().unwrap() + d);
        }
        let total = *cum.last().unwrap();
        if total <= theta1 {
            return Ok(self.clone());
        }
        let m = (total / theta1).ceil();
        let param = |target: f64| -> f64 {
            let i = cum.partition_point(|&c| c < target).clamp(1, cum.len() - 1);
            let (c0, c1) = (cum[i - 1], cum[i]);
            let f = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
            v[i - 1].0 + f * (v[i].0 - v[i - 1].0)
        };
        let mut lo = self.s_lo;
        for j in 1..=m as usize {
            let hi = if j == m as usize { self.s_hi } else { param(total * j as f64 / m) };
            if s <= hi {
                return Ok(self.sub(lo, hi));
            }
            lo = hi;
        }
        Ok(self.sub(lo, self.s_hi))
    }
}

/// Pieces of `curve` after `revolutions` revolutions.
pub fn push_forward(
    curve: &UnstableCurve,
    revolutions: usize,
    st: &Stepper,
    cfg: &CurveConfig,
) -> Result<Vec<UnstableCurve>> {
    let mut cur = vec![curve.clone()];
    for _ in 0..revolutions {
        let mut next = Vec::new();
        for c in &cur {
            next.extend(c.revolution(st, cfg)?);
        }
        cur = next;
    }
    Ok(cur)
}

/// Random straight curve on R1 through a uniform point, tangent uniform in the cone.
pub fn random_curve<R: Rng>(rng: &mut R, h_range: (f64, f64), cone: Option<&ConeSpec>, len: f64) -> UnstableCurve {
    let c = [rng.gen_range(0.0..2.0), rng.gen_range(h_range.0..h_range.1)];
    let dir = match cone {
        Some(k) => k.direction(rng.gen_range(0.0..=1.0)),
        None => [0.0, 1.0],
    };
    UnstableCurve::centred(Strip::R1, c, dir, len)
}

#[derive(Debug, Clone, Serialize)]
pub struct ComplexityConfig {
    pub delta0: f64,
    pub trials: usize,
    pub h_range: (f64, f64),
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComplexityReport {
    pub delta0: f64,
    pub trials: usize,
    /// `histogram[i]` counts curves cut into `i + 1` pieces.
    pub histogram: Vec<usize>,
    pub max_pieces: usize,
}

/// Pieces per revolution of random curves shorter than `delta0`.
pub fn complexity_scan(st: &Stepper, cfg: &CurveConfig, run: &ComplexityConfig) -> Result<ComplexityReport> {
    let counts: Vec<usize> = (0..run.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = crate::rng(run.seed, i as u64);
            let len = run.delta0 * rng.gen_range(0.5..1.0);
            let c = random_curve(&mut rng, run.h_range, cfg.cone.as_ref(), len);
            Ok(c.revolution(st, cfg)?.len())
        })
        .collect::<Result<_>>()?;
    let max_pieces = counts.iter().copied().max().unwrap_or(0);
    let mut histogram = vec![0; max_pieces];
    for c in counts {
        histogram[c - 1] += 1;
    }
    Ok(ComplexityReport { delta0: run.delta0, trials: run.trials, histogram, max_pieces })
}

/// Sup ratio of the expansion of the curve's tangent over each piece of
/// its image after `revolutions` revolutions; at least 1.
pub fn distortion_estimate(curve: &UnstableCurve, revolutions: usize, st: &Stepper, cfg: &CurveConfig) -> Result<f64> {
    let mut k: f64 = 1.0;
    for piece in push_forward(curve, revolutions, st, cfg)? {
        let mut ss: Vec<f64> = piece.vertices(st, cfg)?.into_iter().map(|v| v.0).collect();
        if ss.len() < 17 {
            ss = (0..=16).map(|i| piece.s_lo + (piece.s_hi - piece.s_lo) * i as f64 / 16.0).collect();
        }
        let js: Vec<f64> = ss.iter().map(|&s| norm(piece.tangent_at(st, s))).collect();
        let hi = js.iter().copied().fold(0.0, f64::max);
        let lo = js.iter().copied().fold(f64::INFINITY, f64::min);
        k = k.max(hi / lo);
    }
    Ok(k)
}

#[derive(Debug, Clone, Serialize)]
pub struct RouteProportions {
    pub s_plus: f64,
    pub s_minus: f64,
    pub components: usize,
    /// Length over vertical extent.
    pub projection_ratio: f64,
    /// Fewer than two components crossed; the fractions are not meaningful.
    pub too_short: bool,
}

/// Measure-weighted fractions of a curve on R1 in `S+1` and `S-1`.
pub fn route_proportions(curve: &UnstableCurve, st: &Stepper, cfg: &CurveConfig, v_star: f64) -> Result<RouteProportions> {
    let nf = &st.nf;
    let keyf = |p: &StripPoint| {
        let (r, s) = nf.classify(p, v_star)?;
        Ok((r.component, s))
    };
    let runs = curve.split_measure(st, cfg, &keyf)?;
    let total: f64 = runs.iter().map(|r| r.1).sum();
    let plus: f64 = runs.iter().filter(|r| r.0 .1 == SignedClass::Accelerating).map(|r| r.1).sum();
    let mut comps: Vec<i64> = runs.iter().map(|r| r.0 .0).collect();
    comps.dedup();
    let a = curve.point_at(st, curve.s_lo);
    let b = curve.point_at(st, curve.s_hi);
    let len = curve.length(st, cfg)?;
    Ok(RouteProportions {
        s_plus: plus / total,
        s_minus: 1.0 - plus / total,
        components: comps.len(),
        projection_ratio: len / (b.second - a.second).abs(),
        too_short: comps.len() < 3,
    })
}

/// Measure-weighted frequencies of the first `depth` route signs of points
/// on the curve, estimated on `samples` stratified points.
pub fn itinerary_measure(curve: &UnstableCurve, depth: usize, samples: usize, st: &Stepper) -> Result<Vec<(Vec<i8>, f64)>> {
    let mut counts = std::collections::BTreeMap::<Vec<i8>, usize>::new();
    for i in 0..samples {
        let s = curve.s_lo + (curve.s_hi - curve.s_lo) * (i as f64 + 0.5) / samples as f64;
        let mut p = curve.point_at(st, s);
        let mut pat = Vec::with_capacity(depth);
        for _ in 0..depth {
            let k = st.key(&p)?;
            pat.push(k.route_sign());
            p = st.eval(k, &p);
            let k2 = st.key(&p)?;
            p = st.eval(k2, &p);
        }
        *counts.entry(pat).or_default() += 1;
    }
    Ok(counts.into_iter().map(|(k, c)| (k, c as f64 / samples as f64)).collect())
}

/// Total variation distance of pattern frequencies from the Bernoulli product with `q(+1) = f2`.
pub fn tv_to_bernoulli(freqs: &[(Vec<i8>, f64)], depth: usize, f2: f64) -> f64 {
    let mut tv = 0.0;
    for code in 0..(1usize << depth) {
        let pat: Vec<i8> = (0..depth).map(|i| if code >> (depth - 1 - i) & 1 == 1 { 1 } else { -1 }).collect();
        let q: f64 = pat.iter().map(|&x| if x == 1 { f2 } else { 1.0 - f2 }).product();
        let e = freqs.iter().find(|f| f.0 == pat).map_or(0.0, |f| f.1);
        tv += (e - q).abs();
    }
    0.5 * tv
}

/// Measure of the curve split by the first revolution `N >= 1` at which the
/// piece containing each point is at least `theta1/2` long. Entry `N - 1`
/// holds the fraction with that first hit; the last entry is the fraction
/// still short after `horizon` revolutions.
pub fn first_hit_distribution(
    curve: &UnstableCurve,
    theta1: f64,
    horizon: usize,
    st: &Stepper,
    cfg: &CurveConfig,
) -> Result<Vec<f64>> {
    let total = curve.measure();
    let mut pmf = vec![0.0; horizon + 1];
    let mut active = vec![curve.clone()];
    for n in 1..=horizon {
        let mut next = Vec::new();
        for c in &active {
            for piece in c.revolution(st, cfg)? {
                if piece.length(st, cfg)? >= 0.5 * theta1 {
                    pmf[n - 1] += piece.measure() / total;
                } else {
                    next.push(piece);
                }
            }
        }
        if next.len() > cfg.max_vertices {
            return Err(Error::RefinementOverflow(cfg.max_vertices));
        }
        active = next;
        if active.is_empty() {
            break;
        }
    }
    pmf[horizon] = active.iter().map(|c| c.measure()).sum::<f64>() / total;
    Ok(pmf)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TailFit {
    /// Fitted geometric ratio.
    pub theta: f64,
    /// Fitted prefactor.
    pub b: f64,
    pub r2: f64,
    pub points: usize,
}

/// Fits `ln pmf(N) = ln b + N ln theta` over entries above `floor`.
pub fn geometric_tail(ns: &[f64], pmf: &[f64], floor: f64) -> TailFit {
    let (xs, ys): (Vec<f64>, Vec<f64>) = ns.iter().zip(pmf).filter(|(_, &p)| p > floor).map(|(&n, &p)| (n, p.ln())).unzip();
    if xs.len() < 2 {
        return TailFit { theta: f64::NAN, b: f64::NAN, r2: f64::NAN, points: xs.len() };
    }
    let LineFit { slope, intercept, r2 } = fit_line(&xs, &ys);
    TailFit { theta: slope.exp(), b: intercept.exp(), r2, points: xs.len() }
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthConfig {
    pub curves: usize,
    /// Points for the delayed-time law.
    pub points: usize,
    /// Points followed through the iterated delayed times.
    pub trajectories: usize,
    pub horizon: usize,
    pub n0: usize,
    pub theta1: f64,
    pub epochs: Vec<usize>,
    pub h_range: (f64, f64),
    pub seed: u64,
    /// Masses below this are ignored by the tail fits.
    pub floor: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochQuantile {
    pub n: usize,
    pub mean: f64,
    pub q99: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    pub nbar_pmf: Vec<f64>,
    pub nbar_fit: TailFit,
    /// `nhat_pmf[i]` is the mass of `N-hat = n0 + 1 + i`.
    pub nhat_pmf: Vec<f64>,
    pub nhat_fit: TailFit,
    pub epochs: Vec<EpochQuantile>,
    pub a_hat: f64,
    pub theta5_hat: f64,
}

fn long_curve<R: Rng>(rng: &mut R, cfg: &GrowthConfig, cone: Option<&ConeSpec>) -> UnstableCurve {
    let len = cfg.theta1 * rng.gen_range(0.5..1.0);
    random_curve(rng, cfg.h_range, cone, len)
}

/// Delayed hitting time of one point: `n0` revolutions, then revolutions
/// until its piece is long. Returns the time and the long chunk reached,
/// rebased, with the point's parameter on it.
fn delayed_hit(
    curve: &UnstableCurve,
    s: f64,
    n0: usize,
    theta1: f64,
    limit: usize,
    st: &Stepper,
    cfg: &CurveConfig,
) -> Result<(usize, UnstableCurve, f64)> {
    let (mut c, mut s) = (curve.clone(), s);
    for n in 1..=limit {
        (c, s) = c.track(st, cfg, s)?;
        if n > n0 && c.origin.length() >= 0.5 * theta1 {
            let chunk = c.chunk_at(st, cfg, s, theta1)?;
            return chunk.rebase(st, cfg, s).map(|(r, t)| (n, r, t));
        }
    }
    Err(Error::Numerical(format!("point did not reach a long curve within {limit} revolutions")))
}

/// First-hit, delayed-hit and iterated delayed-hit statistics on random long curves.
pub fn growth_statistics(st: &Stepper, cfg: &CurveConfig, run: &GrowthConfig) -> Result<GrowthReport> {
    let cone = cfg.cone.as_ref();
    let width = run.horizon + 1;
    let add = |mut a: Vec<f64>, b: Vec<f64>| {
        a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        a
    };
    let sum_pmfs = |n: usize, f: &(dyn Fn(usize) -> Result<Vec<f64>> + Sync)| -> Result<Vec<f64>> {
        let total = (0..n).into_par_iter().map(f).try_reduce(|| vec![0.0; width], |a, b| Ok(add(a, b)))?;
        Ok(total.into_iter().map(|x| x / n.max(1) as f64).collect())
    };
    let nbar_pmf = sum_pmfs(run.curves, &|i| {
        let mut rng = crate::rng(run.seed, i as u64);
        let c = long_curve(&mut rng, run, cone);
        first_hit_distribution(&c, run.theta1, run.horizon, st, cfg)
    })?;
    let ns: Vec<f64> = (1..=run.horizon).map(|n| n as f64).collect();
    let nbar_fit = geometric_tail(&ns, &nbar_pmf[..run.horizon], run.floor);

    // law of the delayed time on the long piece reached after n0 revolutions
    let nhat_pmf = sum_pmfs(run.points, &|i| {
        let mut rng = crate::rng(run.seed ^ 0x5bd1e995, i as u64);
        let c = long_curve(&mut rng, run, cone);
        let (mut piece, mut sp) = (c, rng.gen_range(0.0..1.0));
        for _ in 0..run.n0 {
            (piece, sp) = piece.track(st, cfg, sp)?;
        }
        let piece = piece.chunk_at(st, cfg, sp, run.theta1)?;
        let (based, _) = piece.rebase(st, cfg, sp)?;
        first_hit_distribution(&based, run.theta1, run.horizon, st, cfg)
    })?;
    let nhat_fit = geometric_tail(&ns, &nhat_pmf[..run.horizon], run.floor);

    // iterated delayed times along single trajectories
    let limit = run.n0 + run.horizon;
    let max_epochs = run.epochs.iter().copied().max().unwrap_or(1).max(1);
    let per_point: Vec<Vec<usize>> = (0..run.trajectories)
        .into_par_iter()
        .map(|i| {
            let mut rng = crate::rng(run.seed ^ 0x2545f491, i as u64);
            let (mut cur, mut t) = (long_curve(&mut rng, run, cone), rng.gen_range(0.0..1.0));
            let mut times = Vec::with_capacity(max_epochs);
            for _ in 0..max_epochs {
                let (n, next, tn) = delayed_hit(&cur, t, run.n0, run.theta1, limit, st, cfg)?;
                times.push(n);
                cur = next;
                t = tn;
            }
            Ok(times)
        })
        .collect::<Result<_>>()?;
    let mut epochs = Vec::new();
    for &n in &run.epochs {
        let r: Vec<f64> = per_point.iter().map(|p| p[..n].iter().sum::<usize>() as f64 / n as f64).collect();
        epochs.push(EpochQuantile { n, mean: mean(&r), q99: quantile(&r, 0.99) });
    }
    let a_hat = epochs.last().map_or(f64::NAN, |e| e.q99);
    let mut theta5_hat: f64 = 0.0;
    for &n in &run.epochs {
        let over = per_point.iter().filter(|p| p[..n].iter().sum::<usize>() as f64 > a_hat * n as f64).count();
        let frac = over as f64 / per_point.len() as f64;
        if frac > 0.0 {
            theta5_hat = theta5_hat.max(frac.powf(1.0 / n as f64));
        }
    }
    Ok(GrowthReport { nbar_pmf, nbar_fit, nhat_pmf, nhat_fit, epochs, a_hat, theta5_hat })
}

/// The constants of the growth lemmas that can be measured or follow from measured ones.
#[derive(Debug, Clone, Serialize)]
pub struct GrowthConstants {
    pub delta0: f64,
    pub kappa1: f64,
    pub k_dist: f64,
    pub lambda_min: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub theta4: f64,
    pub theta5: f64,
    pub c2: f64,
    pub c3: f64,
    pub b: f64,
    pub b1: f64,
    pub b2: f64,
    pub a: f64,
    pub eps0: f64,
}

impl GrowthConstants {
    /// Constants fixed by complexity, distortion and expansion; the tail
    /// constants stay NaN until filled from a `GrowthReport`.
    pub fn new(delta0: f64, kappa1: f64, k_dist: f64, lambda_min: f64) -> GrowthConstants {
        let k2 = k_dist * k_dist;
        let theta1 = kappa1 * k2 / lambda_min;
        let c2 = 2.0 * k2 / (delta0 * (1.0 - theta1));
        let c3 = 1.0 + c2;
        let theta2 = theta1.sqrt();
        let b1 = 1.0;
        GrowthConstants {
            delta0,
            kappa1,
            k_dist,
            lambda_min,
            theta1,
            theta2,
            theta3: theta2 * (1.0 + c3 * k2 * b1),
            theta4: f64::NAN,
            theta5: f64::NAN,
            c2,
            c3,
            b: f64::NAN,
            b1,
            b2: f64::NAN,
            a: f64::NAN,
            eps0: theta1,
        }
    }

    pub fn with_tails(mut self, r: &GrowthReport) -> GrowthConstants {
        self.theta4 = r.nbar_fit.theta.max(r.nhat_fit.theta);
        self.b2 = r.nbar_fit.b;
        self.b = 3.0 * self.b2;
        self.a = r.a_hat;
        self.theta5 = r.theta5_hat;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    fn stepper(order: Order) -> Stepper {
        Stepper::new(NormalForm::new(&ModelParams::default_model()).with_order(order), None)
    }

    #[test]
    fn short_curve_inside_one_component() {
        let st = stepper(Order::GPlusH);
        let nf = &st.nf;
        // wrapped u = c h - sigma in the middle of U_en
        let h = 1000.0;
        let (_, u) = crate::maps::wrap2(nf.params.entry_span(), h, 0.0);
        let sigma = (u - 1.0).rem_euclid(2.0);
        let c = UnstableCurve::centred(Strip::R1, [sigma, h], [0.0, 1.0], 1e-3);
        let out = c.half_step(&st, &CurveConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].strip, Strip::R2Plus);
    }

    #[test]
    fn cutting_conserves_measure() {
        let st = stepper(Order::GPlusH);
        let cfg = CurveConfig::default();
        let c = UnstableCurve::segment(Strip::R1, [0.3, 1000.0], [0.31, 1003.0]);
        let pieces = push_forward(&c, 2, &st, &cfg).unwrap();
        assert!(pieces.len() > 4);
        let m: f64 = pieces.iter().map(|p| p.measure()).sum();
        assert!((m - c.measure()).abs() <= 1e-8 * c.measure());
    }

    #[test]
    fn cut_points_sit_on_region_edges() {
        let st = stepper(Order::GPlusH);
        let cfg = CurveConfig::default();
        let c = UnstableCurve::segment(Strip::R1, [0.3, 1000.0], [0.31, 1003.0]);
        let pieces = c.cut(&st, &cfg).unwrap();
        let f2 = st.nf.params.f2;
        for (_, p) in &pieces[1..] {
            let q = p.point_at(&st, p.s_lo);
            let (_, u) = crate::maps::wrap2(st.nf.params.entry_span(), q.second, q.first);
            let d = [u, (u - f2).abs(), (u - 2.0 + f2).abs(), 2.0 - u].into_iter().fold(f64::INFINITY, f64::min);
            assert!(d < 1e-9, "{u}");
        }
    }

    #[test]
    fn linear_dynamics_have_no_distortion() {
        let st = stepper(Order::GOnly);
        let c = UnstableCurve::centred(Strip::R1, [0.7, 1000.0], [0.0, 1.0], 0.01);
        let k = distortion_estimate(&c, 1, &st, &CurveConfig::default()).unwrap();
        assert!((k - 1.0).abs() < 1e-10, "{k}");
    }

    #[test]
    fn tv_of_exact_product_is_zero() {
        let f2 = 0.6;
        let freqs: Vec<(Vec<i8>, f64)> = vec![
            (vec![1, 1], f2 * f2),
            (vec![1, -1], f2 * (1.0 - f2)),
            (vec![-1, 1], f2 * (1.0 - f2)),
            (vec![-1, -1], (1.0 - f2) * (1.0 - f2)),
        ];
        assert!(tv_to_bernoulli(&freqs, 2, f2) < 1e-15);
    }
}
