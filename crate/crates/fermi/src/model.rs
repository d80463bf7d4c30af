//! Slit motion profiles and the scalar constants derived from them.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const PERIOD: f64 = 2.0;

/// `amp * sin(pi * omega * t + phase)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wave {
    pub amp: f64,
    pub omega: f64,
    pub phase: f64,
}

/// One smooth piece of the profile on `[start, end)`, written in absolute time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Piece {
    pub start: f64,
    pub end: f64,
    #[serde(default)]
    pub poly: Vec<f64>,
    #[serde(default)]
    pub waves: Vec<Wave>,
}

/// Value, velocity and acceleration of a function at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub f: f64,
    pub df: f64,
    pub ddf: f64,
}

impl Jet {
    pub fn new(f: f64, df: f64, ddf: f64) -> Jet {
        Jet { f, df, ddf }
    }

    pub fn neg(self) -> Jet {
        Jet::new(-self.f, -self.df, -self.ddf)
    }
}

impl Piece {
    fn eval(&self, t: f64) -> Jet {
        let mut f = 0.0;
        let mut df = 0.0;
        let mut ddf = 0.0;
        for &c in self.poly.iter().rev() {
            ddf = ddf * t + 2.0 * df;
            df = df * t + f;
            f = f * t + c;
        }
        for w in &self.waves {
            let k = PI * w.omega;
            let (s, co) = (k * t + w.phase).sin_cos();
            f += w.amp * s;
            df += w.amp * k * co;
            ddf -= w.amp * k * k * s;
        }
        Jet { f, df, ddf }
    }

    fn speed_bound(&self) -> f64 {
        let a = self.start.abs().max(self.end.abs()).max(1.0);
        let mut b = 0.0;
        for (k, &c) in self.poly.iter().enumerate().skip(1) {
            b += k as f64 * c.abs() * a.powi(k as i32 - 1);
        }
        for w in &self.waves {
            b += (w.amp * PI * w.omega).abs();
        }
        b
    }
}

/// A 2-periodic, piecewise smooth slit height `f(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlitProfile {
    pieces: Vec<Piece>,
}

fn reduce(t: f64) -> f64 {
    let r = t.rem_euclid(PERIOD);
    if r >= PERIOD {
        0.0
    } else {
        r
    }
}

impl SlitProfile {
    /// Validates that the pieces tile `[0,2)` and that `f` is continuous,
    /// including across `t = 2 ~ 0`.
    pub fn new(pieces: Vec<Piece>) -> Result<SlitProfile> {
        if pieces.is_empty() {
            return Err(Error::Profile("no pieces".into()));
        }
        if pieces[0].start != 0.0 || pieces[pieces.len() - 1].end != PERIOD {
            return Err(Error::Profile("pieces must cover [0, 2)".into()));
        }
        for p in &pieces {
            if !(p.end > p.start) {
                return Err(Error::Profile(format!("empty piece [{}, {})", p.start, p.end)));
            }
            if p.poly.is_empty() && p.waves.is_empty() {
                return Err(Error::Profile("piece has no terms".into()));
            }
            let finite = p.poly.iter().all(|c| c.is_finite())
                && p.waves.iter().all(|w| w.amp.is_finite() && w.omega.is_finite() && w.phase.is_finite());
            if !finite {
                return Err(Error::Profile("non-finite coefficient".into()));
            }
        }
        for w in pieces.windows(2) {
            if w[0].end != w[1].start {
                return Err(Error::Profile(format!("gap or overlap at t = {}", w[0].end)));
            }
            let a = w[0].eval(w[0].end).f;
            let b = w[1].eval(w[1].start).f;
            if (a - b).abs() > 1e-9 {
                return Err(Error::Profile(format!("f discontinuous at t = {} ({a} vs {b})", w[0].end)));
            }
        }
        let a = pieces[pieces.len() - 1].eval(PERIOD).f;
        let b = pieces[0].eval(0.0).f;
        if (a - b).abs() > 1e-9 {
            return Err(Error::Profile(format!("f(2-) = {a} differs from f(0+) = {b}")));
        }
        Ok(SlitProfile { pieces })
    }

    pub fn constant(h: f64) -> SlitProfile {
        SlitProfile {
            pieces: vec![Piece { start: 0.0, end: PERIOD, poly: vec![h], waves: vec![] }],
        }
    }

    /// `h0 + a * sin(pi * omega * t + phi0)` on `[0,2)`, extended periodically.
    pub fn sine(h0: f64, a: f64, omega: f64, phi0: f64) -> Result<SlitProfile> {
        SlitProfile::new(vec![Piece {
            start: 0.0,
            end: PERIOD,
            poly: vec![h0],
            waves: vec![Wave { amp: a, omega, phase: phi0 }],
        }])
    }

    /// `0.5 + 0.2 cos(17 pi (t - 1))`; with `lambda = 0.5`, `x0 = 25/102`
    /// this gives `f1 = 0.4`, `f2 = 0.6`.
    pub fn default_profile() -> SlitProfile {
        SlitProfile::sine(0.5, 0.2, DEFAULT_OMEGA, default_phase(DEFAULT_OMEGA)).unwrap()
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    fn piece_at(&self, r: f64) -> &Piece {
        let i = self.pieces.partition_point(|p| p.end <= r);
        &self.pieces[i.min(self.pieces.len() - 1)]
    }

    /// Right limits at piece boundaries.
    pub fn eval(&self, t: f64) -> Jet {
        let r = reduce(t);
        self.piece_at(r).eval(r)
    }

    /// Left limits at piece boundaries (and `f(2-)` at `t = 0`).
    pub fn eval_left(&self, t: f64) -> Jet {
        let mut r = reduce(t);
        if r == 0.0 {
            r = PERIOD;
        }
        let i = self.pieces.partition_point(|p| p.end < r);
        self.pieces[i.min(self.pieces.len() - 1)].eval(r)
    }

    pub fn eval_side(&self, t: f64, left: bool) -> Jet {
        if left {
            self.eval_left(t)
        } else {
            self.eval(t)
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.eval(t).f
    }

    /// `fdot(0+) - fdot(2-)`.
    pub fn derivative_jump(&self) -> f64 {
        self.eval(0.0).df - self.eval_left(0.0).df
    }

    /// Interior piece boundaries in `(0,2)`.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.pieces.iter().skip(1).map(|p| p.start).collect()
    }

    pub fn max_speed(&self) -> f64 {
        self.pieces.iter().map(|p| p.speed_bound()).fold(0.0, f64::max)
    }

    /// Dense sampling with a Lipschitz margin between samples.
    pub fn check_bounds(&self, c: f64) -> Result<()> {
        if !(c > 0.0 && c < 0.5) {
            return Err(Error::Domain(format!("c = {c} outside (0, 1/2)")));
        }
        let n = 10_000;
        let h = PERIOD / n as f64;
        let mut bad = Vec::new();
        for p in &self.pieces {
            let d = p.speed_bound();
            let m = ((p.end - p.start) / h).ceil().max(1.0) as usize;
            let step = (p.end - p.start) / m as f64;
            let mut prev = p.eval(p.start).f;
            for k in 1..=m {
                let t = p.start + step * k as f64;
                let cur = p.eval(t).f;
                let lo = prev.min(cur) - 0.5 * d * step;
                let hi = prev.max(cur) + 0.5 * d * step;
                if lo < c || hi > 1.0 - c {
                    let a = t - step;
                    // refine before reporting
                    let ok = (0..=64).all(|j| {
                        let v = p.eval(a + step * j as f64 / 64.0).f;
                        v >= c && v <= 1.0 - c
                    });
                    if !ok || lo < c - d * step || hi > 1.0 - c + d * step {
                        bad.push(a);
                    }
                }
                prev = cur;
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Bounds { c, times: bad })
        }
    }
}

pub const DEFAULT_OMEGA: f64 = 17.0;
pub const DEFAULT_LAMBDA: f64 = 0.5;
pub const DEFAULT_X0: f64 = 25.0 / 102.0;

/// Phase making `0.5 + 0.2 sin(pi omega t + phi0)` equal `0.5 + 0.2 cos(pi omega (t - 1))`.
pub fn default_phase(omega: f64) -> f64 {
    PI / 2.0 - PI * omega
}

/// Adaptive Simpson rule with absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    // a few fixed panels first so oscillatory integrands are not undersampled
    let panels = 16;
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for i in 0..panels {
        let x0 = a + h * i as f64;
        let x1 = if i + 1 == panels { b } else { x0 + h };
        let xm = 0.5 * (x0 + x1);
        let (f0, fm, f1) = (f(x0), f(xm), f(x1));
        let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
        total += simpson_step(f, x0, x1, f0, fm, f1, whole, tol / panels as f64, 48);
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

pub const QUAD_TOL: f64 = 1e-12;

/// All scalars derived from a profile and the horizontal data.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub profile: SlitProfile,
    pub lambda_slit: f64,
    pub x0: f64,
    pub c_bound: f64,
    pub t1_star: f64,
    pub t2_star: f64,
    pub f1: f64,
    pub f2: f64,
    pub fdot1: f64,
    pub fdot2: f64,
    pub fddot1: f64,
    pub fddot2: f64,
    pub l_star: f64,
    pub m_star: f64,
    pub theta1_star: f64,
    pub theta2_star: f64,
    pub zeta1_star: f64,
    pub zeta2_star: f64,
}

/// Which side of the slit the vertical motion is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `l = 1 - f` in the left chamber, `1` on the right.
    Upper,
    /// `m = -f` in the left chamber, `-1` on the right.
    Lower,
}

impl ModelParams {
    pub fn derive(profile: &SlitProfile, lambda_slit: f64, x0: f64, c_bound: f64) -> Result<ModelParams> {
        if !(0.0 < x0 && x0 < lambda_slit && lambda_slit < 1.0) {
            return Err(Error::Domain(format!("need 0 < x0 < lambda < 1, got x0 = {x0}, lambda = {lambda_slit}")));
        }
        profile.check_bounds(c_bound)?;
        let t1 = lambda_slit - x0;
        let t2 = PERIOD - lambda_slit - x0;
        let j1 = profile.eval_left(t1);
        let j2 = profile.eval(t2);
        let mut p = ModelParams {
            profile: profile.clone(),
            lambda_slit,
            x0,
            c_bound,
            t1_star: t1,
            t2_star: t2,
            f1: j1.f,
            f2: j2.f,
            fdot1: j1.df,
            fdot2: j2.df,
            fddot1: j1.ddf,
            fddot2: j2.ddf,
            l_star: 0.0,
            m_star: 0.0,
            theta1_star: 0.0,
            theta2_star: 0.0,
            zeta1_star: 0.0,
            zeta2_star: 0.0,
        };
        let a_l = p.chamber_integral(Side::Upper, 0.0, t1);
        let b_l = p.chamber_integral(Side::Upper, t2, PERIOD);
        p.l_star = a_l + (t2 - t1) + b_l;
        p.theta1_star = 2.0 * a_l / p.l_star;
        p.theta2_star = 2.0 * (a_l + (t2 - t1)) / p.l_star;
        let a_m = p.chamber_integral(Side::Lower, 0.0, t1);
        let b_m = p.chamber_integral(Side::Lower, t2, PERIOD);
        p.m_star = a_m + (t2 - t1) + b_m;
        p.zeta1_star = 2.0 * a_m / p.m_star;
        p.zeta2_star = 2.0 * (a_m + (t2 - t1)) / p.m_star;
        Ok(p)
    }

    pub fn default_model() -> ModelParams {
        ModelParams::derive(&SlitProfile::default_profile(), DEFAULT_LAMBDA, DEFAULT_X0, 0.05).unwrap()
    }

    /// Member of the default family at another integer frequency
    /// `omega = 1 (mod 4)`: same amplitude and `lambda`, `x0` picked near the
    /// default so that still `f1 = 0.4`, `f2 = 0.6`.
    pub fn resonant(omega: f64) -> Result<ModelParams> {
        if omega < 1.0 || omega.fract() != 0.0 || (omega as i64) % 4 != 1 {
            return Err(Error::Domain(format!("resonant family needs integer omega = 1 mod 4, got {omega}")));
        }
        let i = ((DEFAULT_X0 * omega - 1.0 / 6.0) / 2.0).round().max(0.0);
        let x0 = (1.0 / 6.0 + 2.0 * i) / omega;
        let profile = SlitProfile::sine(0.5, 0.2, omega, default_phase(omega))?;
        ModelParams::derive(&profile, DEFAULT_LAMBDA, x0, 0.05)
    }

    /// True when the reduced time lies in the left-chamber phase `[t2, t1 + 2)`.
    /// `0.5 + amplitude sin(omega pi t + phi)` at odd integer `omega`, with the
    /// default `lambda`, `x0` and `phi` chosen so that `f(t1*) = f1`. Odd
    /// `omega` puts `t2* = t1* + 1` half a period later, so `f2 = 1 - f1`.
    pub fn symmetric_heights(omega: f64, amplitude: f64, f1: f64) -> Result<ModelParams> {
        if omega < 1.0 || omega.fract() != 0.0 || (omega as i64) % 2 != 1 {
            return Err(Error::Domain(format!("need odd integer omega, got {omega}")));
        }
        let s = (0.5 - f1) / amplitude;
        if !(amplitude > 0.0 && s.abs() < 1.0) {
            return Err(Error::Domain(format!("f1 = {f1} out of reach of amplitude {amplitude}")));
        }
        let t1 = DEFAULT_LAMBDA - DEFAULT_X0;
        let phi = -s.asin() - omega * PI * t1;
        let profile = SlitProfile::sine(0.5, amplitude, omega, phi)?;
        ModelParams::derive(&profile, DEFAULT_LAMBDA, DEFAULT_X0, 0.05)
    }

    pub fn in_left_phase(&self, t: f64) -> bool {
        let r = reduce(t);
        r < self.t1_star || r >= self.t2_star
    }

    /// Jet of `l` (upper) or `m` (lower) at `t`.
    pub fn gap_jet(&self, side: Side, t: f64) -> Jet {
        if self.in_left_phase(t) {
            let j = self.profile.eval(t);
            match side {
                Side::Upper => Jet::new(1.0 - j.f, -j.df, -j.ddf),
                Side::Lower => j.neg(),
            }
        } else {
            match side {
                Side::Upper => Jet::new(1.0, 0.0, 0.0),
                Side::Lower => Jet::new(-1.0, 0.0, 0.0),
            }
        }
    }

    /// `int_a^b gap^-2` over a stretch lying inside the left-chamber phase,
    /// split at profile breakpoints.
    pub fn chamber_integral(&self, side: Side, a: f64, b: f64) -> f64 {
        let mut cuts = vec![a];
        cuts.extend(self.profile.breakpoints().into_iter().filter(|&x| x > a && x < b));
        cuts.push(b);
        let g = |t: f64| {
            let f = self.profile.value(t);
            let d = match side {
                Side::Upper => 1.0 - f,
                Side::Lower => f,
            };
            1.0 / (d * d)
        };
        cuts.windows(2).map(|w| integrate(&g, w[0], w[1], QUAD_TOL / (cuts.len() as f64))).sum()
    }

    pub fn l1(&self) -> f64 {
        1.0 - self.f1
    }

    pub fn l2(&self) -> f64 {
        1.0 - self.f2
    }

    /// `L (theta2 - theta1)`; equal to `2 (t2 - t1)`.
    pub fn entry_span(&self) -> f64 {
        2.0 * (self.t2_star - self.t1_star)
    }

    /// `L (2 + theta1 - theta2)`.
    pub fn exit_span_upper(&self) -> f64 {
        2.0 * (self.l_star - (self.t2_star - self.t1_star))
    }

    /// `M (2 + zeta1 - zeta2)`.
    pub fn exit_span_lower(&self) -> f64 {
        2.0 * (self.m_star - (self.t2_star - self.t1_star))
    }
}

/// Constants of the half-revolution normal forms.
///
/// The `*_derived` fields are the constant terms that actually close the
/// expansion to second order; the others follow the displayed formulas.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct NormalFormConstants {
    pub delta1: f64,
    pub delta2: f64,
    pub delta1_p: f64,
    pub delta2_p: f64,
    pub delta1_pp: f64,
    pub delta2_pp: f64,
    pub kappa_l: f64,
    pub kappa_l_p: f64,
    pub kappa_l_pp: f64,
    pub kappa_s_p: f64,
    pub kappa_s_pp: f64,
    pub chi_l: f64,
    pub chi_l_p: f64,
    pub chi_l_pp: f64,
    pub chi_s_p: f64,
    pub chi_s_pp: f64,
    pub delta1_pp_derived: f64,
    pub delta2_pp_derived: f64,
    pub chi_s_pp_derived: f64,
}

/// `(Delta, Delta', Delta'', corrected constant)` from one-sided jets of `l`.
fn delta_terms(lm: Jet, lp: Jet) -> (f64, f64, f64, f64) {
    let d = 0.5 * (lp.f / lm.f) * (lm.f * lp.df - lp.f * lm.df);
    let cross = lm.f * lp.ddf - lp.f * lm.ddf;
    let dp = 0.125 * lp.f * lp.f * cross;
    let dpp = lm.f * lp.f * cross / 24.0;
    let corrected = -lm.f * lm.f * lp.f * lp.f * cross / 24.0;
    (d, dp, dpp, corrected)
}

impl NormalFormConstants {
    pub fn new(p: &ModelParams) -> NormalFormConstants {
        let one = Jet::new(1.0, 0.0, 0.0);
        let j1 = Jet::new(p.f1, p.fdot1, p.fddot1);
        let j2 = Jet::new(p.f2, p.fdot2, p.fddot2);
        let l1m = Jet::new(1.0 - j1.f, -j1.df, -j1.ddf);
        let l2p = Jet::new(1.0 - j2.f, -j2.df, -j2.ddf);
        let (delta1, delta1_p, delta1_pp, delta1_pp_derived) = delta_terms(l1m, one);
        let (delta2, delta2_p, delta2_pp, delta2_pp_derived) = delta_terms(one, l2p);

        let mp = j2.neg();
        let kappa_l = 0.5 * mp.f * mp.df;
        let kappa_l_p = mp.f * mp.f * mp.ddf / 24.0;
        let kappa_l_pp = mp.f * mp.f * mp.ddf / 8.0;
        let kappa_s_p = mp.f * mp.f * mp.ddf / 8.0;
        let kappa_s_pp = -mp.f * mp.f * mp.ddf / 24.0;

        let mm = j1.neg();
        let chi_l = -0.5 * mm.df / mm.f;
        let chi_l_p = mm.ddf * (1.0 - mm.f * mm.f / 3.0) / 8.0;
        let chi_l_pp = -mm.ddf / 4.0;
        let chi_s_p = mm.ddf / 4.0;
        let chi_s_pp = mm.f * (mm.f * mm.f * mm.ddf - 3.0 * mm.ddf) / 24.0;
        let chi_s_pp_derived = (mm.f * mm.f * mm.ddf - 3.0 * mm.ddf) / 24.0;

        NormalFormConstants {
            delta1,
            delta2,
            delta1_p,
            delta2_p,
            delta1_pp,
            delta2_pp,
            kappa_l,
            kappa_l_p,
            kappa_l_pp,
            kappa_s_p,
            kappa_s_pp,
            chi_l,
            chi_l_p,
            chi_l_pp,
            chi_s_p,
            chi_s_pp,
            delta1_pp_derived,
            delta2_pp_derived,
            chi_s_pp_derived,
        }
    }

    pub fn all(&self) -> [f64; 19] {
        [
            self.delta1,
            self.delta2,
            self.delta1_p,
            self.delta2_p,
            self.delta1_pp,
            self.delta2_pp,
            self.kappa_l,
            self.kappa_l_p,
            self.kappa_l_pp,
            self.kappa_s_p,
            self.kappa_s_pp,
            self.chi_l,
            self.chi_l_p,
            self.chi_l_pp,
            self.chi_s_p,
            self.chi_s_pp,
            self.delta1_pp_derived,
            self.delta2_pp_derived,
            self.chi_s_pp_derived,
        ]
    }
}

/// Kullback-Leibler drift `(1-f2) ln((1-f2)/(1-f1)) + f2 ln(f2/f1)`.
pub fn drift_rate(f1: f64, f2: f64) -> Result<f64> {
    if !(f1 > 0.0 && f1 < 1.0 && f2 > 0.0 && f2 < 1.0) {
        return Err(Error::Domain(format!("heights must lie in (0,1): f1 = {f1}, f2 = {f2}")));
    }
    let e = (1.0 - f2) * ((1.0 - f2) / (1.0 - f1)).ln() + f2 * (f2 / f1).ln();
    Ok(e.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_family_contains_default() {
        let d = ModelParams::default_model();
        let p = ModelParams::symmetric_heights(17.0, 0.2, 0.4).unwrap();
        assert!((p.f1 - d.f1).abs() < 1e-12 && (p.f2 - d.f2).abs() < 1e-12);
        assert!((p.fdot1 - d.fdot1).abs() < 1e-9 && (p.fdot2 - d.fdot2).abs() < 1e-9);
        let q = ModelParams::symmetric_heights(17.0, 0.4, 0.2).unwrap();
        assert!((q.f1 - 0.2).abs() < 1e-12 && (q.f2 - 0.8).abs() < 1e-12);
        assert!(ModelParams::symmetric_heights(18.0, 0.2, 0.4).is_err());
    }

    #[test]
    fn constant_profile_is_static() {
        let p = SlitProfile::constant(0.5);
        assert_eq!(p.eval(1.7), Jet::new(0.5, 0.0, 0.0));
    }

    #[test]
    fn default_profile_matches_finite_differences() {
        let p = SlitProfile::default_profile();
        let t = 0.3;
        let h = 1e-5;
        let j = p.eval(t);
        let direct = 0.5 + 0.2 * (17.0 * PI * (t - 1.0)).cos();
        assert!((j.f - direct).abs() < 1e-14);
        let fd = (p.value(t + h) - p.value(t - h)) / (2.0 * h);
        let fdd = (p.value(t + h) - 2.0 * j.f + p.value(t - h)) / (h * h);
        assert!((j.df - fd).abs() < 1e-6 * j.df.abs().max(1.0));
        assert!((j.ddf - fdd).abs() < 1e-6 * j.ddf.abs().max(1.0) * 1e2);
    }

    #[test]
    fn switch_times() {
        let m = ModelParams::derive(&SlitProfile::constant(0.5), 0.5, 0.25, 0.1).unwrap();
        assert!((m.t1_star - 0.25).abs() < 1e-15);
        assert!((m.t2_star - 1.25).abs() < 1e-15);
    }

    #[test]
    fn constant_profile_integrals() {
        let m = ModelParams::derive(&SlitProfile::constant(0.5), 0.5, 0.25, 0.1).unwrap();
        assert!((m.l_star - 5.0).abs() < 1e-12);
        assert!((m.theta1_star - 0.4).abs() < 1e-12);
        assert!((m.m_star - 5.0).abs() < 1e-12);
    }

    #[test]
    fn default_switch_heights() {
        let m = ModelParams::default_model();
        assert!((m.f1 - 0.4).abs() < 1e-12);
        assert!((m.f2 - 0.6).abs() < 1e-12);
        assert!(m.fdot2 < 0.0 && m.fdot1 > 0.0);
        assert!((m.fdot1.abs() - 0.2 * PI * 17.0 * 3f64.sqrt() / 2.0).abs() < 1e-9);
    }

    #[test]
    fn static_constants_vanish() {
        let m = ModelParams::derive(&SlitProfile::constant(0.5), 0.5, 0.25, 0.1).unwrap();
        let c = NormalFormConstants::new(&m);
        assert!(c.all().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn kappa_l_direct() {
        let m = ModelParams::default_model();
        let c = NormalFormConstants::new(&m);
        let mp = -m.f2;
        let mpd = -m.fdot2;
        assert!((c.kappa_l - 0.5 * mp * mpd).abs() < 1e-12);
        assert!((c.kappa_l - 0.5 * m.f2 * m.fdot2).abs() < 1e-12);
        assert_eq!(c.kappa_l.signum(), m.fdot2.signum());
    }

    #[test]
    fn delta1_two_formulas() {
        let m = ModelParams::default_model();
        let c = NormalFormConstants::new(&m);
        let l1 = 1.0 - m.f1;
        let l1d = -m.fdot1;
        assert!((c.delta1 - (-0.5 * l1d / l1)).abs() < 1e-12);
    }

    #[test]
    fn corrected_constant_terms() {
        let m = ModelParams::default_model();
        let c = NormalFormConstants::new(&m);
        let l2 = m.l2();
        assert!((c.delta2_pp_derived - (-l2 * l2 * (-m.fddot2) / 24.0)).abs() < 1e-12);
        let l1 = m.l1();
        assert!((c.delta1_pp_derived - (l1 * l1 * (-m.fddot1) / 24.0)).abs() < 1e-12);
    }

    #[test]
    fn drift_values() {
        assert_eq!(drift_rate(0.5, 0.5).unwrap(), 0.0);
        let e = drift_rate(0.4, 0.6).unwrap();
        let a = 0.4 * (0.4f64 / 0.6).ln();
        let b = 0.6 * (0.6f64 / 0.4).ln();
        assert!((e - (a + b)).abs() < 1e-15);
        assert!((e - 0.2 * 1.5f64.ln()).abs() < 1e-15);
        assert!((drift_rate(0.6, 0.4).unwrap() - e).abs() < 1e-15);
        assert!(drift_rate(0.0, 0.5).is_err());
    }

    #[test]
    fn bounds_violation_lists_times() {
        let p = SlitProfile::sine(0.5, 0.45, 3.0, 0.0).unwrap();
        match p.check_bounds(0.1) {
            Err(Error::Bounds { times, .. }) => assert!(!times.is_empty()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn jump_profile_one_sided() {
        let omega = 29.0 / 3.0;
        let p = SlitProfile::sine(0.5, 0.2, omega, 0.3).unwrap_err();
        let _ = p;
        // continuity requires sin(phi) = sin(2 pi omega + phi)
        let phi = PI / 2.0 - PI * omega;
        let p = SlitProfile::sine(0.5, 0.2, omega, phi).unwrap();
        assert!(p.derivative_jump().abs() > 1.0);
        assert_eq!(p.eval(0.0).f, p.eval(2.0).f);
    }
}
