//! Adiabatic coordinates `(theta, I)`, `(zeta, J)`, `(theta, H)` and the
//! strip variables near the chamber switches.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{integrate, ModelParams, Side, PERIOD};

pub const TABLE_NODES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chart {
    /// Upper-left chamber and right chamber measured from the ceiling, `v > 0`.
    U,
    /// Lower-left chamber, `v < 0`.
    L,
    /// Right chamber floor, `v > 0`.
    F,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdiabaticPoint {
    pub chart: Chart,
    pub angle: f64,
    pub action: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strip {
    R1,
    R2Plus,
    R2Minus,
}

/// `(sigma, H)` on R1, `(tau, I)` on R2+, `(rho, J)` on R2-.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripPoint {
    pub strip: Strip,
    pub first: f64,
    pub second: f64,
}

impl StripPoint {
    pub fn new(strip: Strip, first: f64, second: f64) -> StripPoint {
        StripPoint { strip, first, second }
    }
}

/// Cumulative integral of `g` at Chebyshev nodes of one smooth stretch.
#[derive(Debug, Clone)]
struct Segment {
    nodes: Vec<f64>,
    cum: Vec<f64>,
    deriv: Vec<f64>,
    linear: Option<f64>,
}

impl Segment {
    fn build<G: Fn(f64) -> f64>(g: &G, a: f64, b: f64, n: usize) -> Segment {
        let mut nodes: Vec<f64> = (0..n)
            .map(|k| 0.5 * (a + b) - 0.5 * (b - a) * (PI * k as f64 / (n - 1) as f64).cos())
            .collect();
        nodes[0] = a;
        nodes[n - 1] = b;
        let deriv: Vec<f64> = nodes.iter().map(|&x| g(x)).collect();
        let mut cum = Vec::with_capacity(n);
        let mut acc = 0.0;
        cum.push(0.0);
        for w in nodes.windows(2) {
            acc += integrate(g, w[0], w[1], 1e-15);
            cum.push(acc);
        }
        Segment { nodes, cum, deriv, linear: None }
    }

    fn linear(a: f64, b: f64, slope: f64) -> Segment {
        Segment { nodes: vec![a, b], cum: vec![0.0, slope * (b - a)], deriv: vec![slope, slope], linear: Some(slope) }
    }

    fn start(&self) -> f64 {
        self.nodes[0]
    }

    fn end(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    fn total(&self) -> f64 {
        self.cum[self.cum.len() - 1]
    }

    fn hermite(&self, i: usize, x: f64) -> f64 {
        let (x0, x1) = (self.nodes[i], self.nodes[i + 1]);
        let h = x1 - x0;
        let s = (x - x0) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.cum[i] + h10 * h * self.deriv[i] + h01 * self.cum[i + 1] + h11 * h * self.deriv[i + 1]
    }

    fn eval(&self, x: f64) -> f64 {
        if let Some(k) = self.linear {
            return k * (x - self.start());
        }
        let i = self.nodes.partition_point(|&n| n <= x).clamp(1, self.nodes.len() - 1) - 1;
        self.hermite(i, x)
    }

    fn invert(&self, q: f64) -> f64 {
        if let Some(k) = self.linear {
            return self.start() + q / k;
        }
        let i = self.cum.partition_point(|&c| c <= q).clamp(1, self.cum.len() - 1) - 1;
        let (mut lo, mut hi) = (self.nodes[i], self.nodes[i + 1]);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.hermite(i, mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Monotone table of the rescaled phase over one period.
#[derive(Debug, Clone)]
struct PhaseTable {
    segments: Vec<Segment>,
    offsets: Vec<f64>,
    scale: f64,
}

impl PhaseTable {
    fn build(p: &ModelParams, side: Side, nodes: usize) -> PhaseTable {
        let g = |t: f64| {
            let f = p.profile.value(t);
            let d = match side {
                Side::Upper => 1.0 - f,
                Side::Lower => f,
            };
            1.0 / (d * d)
        };
        let mut cuts = vec![0.0];
        let bps = p.profile.breakpoints();
        cuts.extend(bps.iter().copied().filter(|&x| x < p.t1_star));
        cuts.push(p.t1_star);
        let mut segments: Vec<Segment> = cuts.windows(2).map(|w| Segment::build(&g, w[0], w[1], nodes)).collect();
        segments.push(Segment::linear(p.t1_star, p.t2_star, 1.0));
        let mut cuts = vec![p.t2_star];
        cuts.extend(bps.iter().copied().filter(|&x| x > p.t2_star));
        cuts.push(PERIOD);
        segments.extend(cuts.windows(2).map(|w| Segment::build(&g, w[0], w[1], nodes)));
        let mut offsets = Vec::with_capacity(segments.len() + 1);
        let mut acc = 0.0;
        for s in &segments {
            offsets.push(acc);
            acc += s.total();
        }
        offsets.push(acc);
        let norm = match side {
            Side::Upper => p.l_star,
            Side::Lower => p.m_star,
        };
        PhaseTable { segments, offsets, scale: 2.0 / norm }
    }

    /// Phase of a reduced time `r` in `[0,2)`.
    fn eval(&self, r: f64) -> f64 {
        let i = self.segments.partition_point(|s| s.end() <= r).min(self.segments.len() - 1);
        self.scale * (self.offsets[i] + self.segments[i].eval(r))
    }

    fn invert(&self, angle: f64) -> f64 {
        let q = angle / self.scale;
        let i = self.offsets[1..].partition_point(|&o| o <= q).min(self.segments.len() - 1);
        self.segments[i].invert(q - self.offsets[i])
    }

    fn end_value(&self) -> f64 {
        self.scale * self.offsets[self.offsets.len() - 1]
    }
}

/// Cached phase tables plus the model they were built from.
#[derive(Debug, Clone)]
pub struct Charts {
    pub params: ModelParams,
    upper: PhaseTable,
    lower: PhaseTable,
}

fn split(t: f64) -> (f64, f64) {
    let n = (t / PERIOD).floor();
    let mut r = t - n * PERIOD;
    let mut n = n;
    if r >= PERIOD {
        r -= PERIOD;
        n += 1.0;
    }
    (n, r)
}

impl Charts {
    pub fn new(params: &ModelParams) -> Charts {
        Charts::with_nodes(params, TABLE_NODES)
    }

    pub fn with_nodes(params: &ModelParams, nodes: usize) -> Charts {
        Charts {
            params: params.clone(),
            upper: PhaseTable::build(params, Side::Upper, nodes),
            lower: PhaseTable::build(params, Side::Lower, nodes),
        }
    }

    fn table(&self, side: Side) -> &PhaseTable {
        match side {
            Side::Upper => &self.upper,
            Side::Lower => &self.lower,
        }
    }

    /// Unreduced phase: `theta(t + 2) = theta(t) + 2`.
    pub fn phase(&self, side: Side, t: f64) -> f64 {
        let (n, r) = split(t);
        2.0 * n + self.table(side).eval(r)
    }

    pub fn theta(&self, t: f64) -> f64 {
        self.phase(Side::Upper, t)
    }

    pub fn zeta(&self, t: f64) -> f64 {
        self.phase(Side::Lower, t)
    }

    /// Table value at the end of the period; equals 2 up to quadrature error.
    pub fn period_phase(&self, side: Side) -> f64 {
        self.table(side).end_value()
    }

    /// Reduced time in `[0,2)` with the given phase (reduced mod 2).
    pub fn phase_inverse(&self, side: Side, angle: f64) -> f64 {
        let a = angle.rem_euclid(2.0);
        self.table(side).invert(a)
    }

    pub fn to_adiabatic(&self, t: f64, v: f64, chart: Chart) -> Result<AdiabaticPoint> {
        let p = &self.params;
        match chart {
            Chart::F => {
                if !(v > 0.0) {
                    return Err(Error::Domain(format!("chart F needs v > 0, got {v}")));
                }
                Ok(AdiabaticPoint { chart, angle: self.theta(t).rem_euclid(2.0), action: p.l_star * v / 2.0 })
            }
            Chart::U => {
                if !(v > 0.0) {
                    return Err(Error::Domain(format!("chart U needs v > 0, got {v}")));
                }
                let l = p.gap_jet(Side::Upper, t);
                let i = 0.5 * p.l_star * (l.f * v + l.f * l.df + l.f * l.f * l.ddf / (3.0 * v));
                Ok(AdiabaticPoint { chart, angle: self.theta(t).rem_euclid(2.0), action: i })
            }
            Chart::L => {
                if !(v < 0.0) {
                    return Err(Error::Domain(format!("chart L needs v < 0, got {v}")));
                }
                let m = p.gap_jet(Side::Lower, t);
                let j = 0.5 * p.m_star * (m.f * v + m.f * m.df + m.f * m.f * m.ddf / (3.0 * v));
                Ok(AdiabaticPoint { chart, angle: self.zeta(t).rem_euclid(2.0), action: j })
            }
        }
    }

    /// Inverse of [`Charts::to_adiabatic`]; `t` is returned in `[0,2)`.
    pub fn from_adiabatic(&self, a: AdiabaticPoint) -> Result<(f64, f64)> {
        let p = &self.params;
        if !(a.action > 0.0) {
            return Err(Error::Domain(format!("action must be positive, got {}", a.action)));
        }
        match a.chart {
            Chart::F => {
                let t = self.phase_inverse(Side::Upper, a.angle);
                Ok((t, 2.0 * a.action / p.l_star))
            }
            Chart::U => {
                let t = self.phase_inverse(Side::Upper, a.angle);
                let v = solve_action(p.gap_jet(Side::Upper, t), 2.0 * a.action / p.l_star)?;
                Ok((t, v))
            }
            Chart::L => {
                let t = self.phase_inverse(Side::Lower, a.angle);
                let v = solve_action(p.gap_jet(Side::Lower, t), 2.0 * a.action / p.m_star)?;
                Ok((t, v))
            }
        }
    }

    pub fn to_strip(&self, a: AdiabaticPoint, strip: Strip) -> Result<StripPoint> {
        let p = &self.params;
        let (phase0, norm) = match (a.chart, strip) {
            (Chart::F, Strip::R1) => (p.theta1_star, p.l_star),
            (Chart::U, Strip::R2Plus) => (p.theta2_star, p.l_star),
            (Chart::L, Strip::R2Minus) => (p.zeta2_star, p.m_star),
            _ => return Err(Error::Domain(format!("chart {:?} does not carry strip {:?}", a.chart, strip))),
        };
        let d = (a.angle - phase0).rem_euclid(2.0);
        Ok(StripPoint { strip, first: a.action * d, second: a.action / norm })
    }

    pub fn from_strip(&self, s: StripPoint) -> AdiabaticPoint {
        let p = &self.params;
        let (chart, phase0, norm) = match s.strip {
            Strip::R1 => (Chart::F, p.theta1_star, p.l_star),
            Strip::R2Plus => (Chart::U, p.theta2_star, p.l_star),
            Strip::R2Minus => (Chart::L, p.zeta2_star, p.m_star),
        };
        let action = s.second * norm;
        AdiabaticPoint { chart, angle: (phase0 + s.first / action).rem_euclid(2.0), action }
    }

    /// Collision `(t, v)` represented by a strip point.
    pub fn strip_to_collision(&self, s: StripPoint) -> Result<(f64, f64)> {
        let p = &self.params;
        match s.strip {
            // exact on the floor: sigma = v (t - t1), H = v / 2
            Strip::R1 => {
                let v = 2.0 * s.second;
                Ok((p.t1_star + s.first / v, v))
            }
            _ => self.from_adiabatic(self.from_strip(s)),
        }
    }

    pub fn collision_to_strip(&self, t: f64, v: f64, strip: Strip) -> Result<StripPoint> {
        let p = &self.params;
        match strip {
            Strip::R1 => {
                let (_, r) = split(t);
                Ok(StripPoint::new(Strip::R1, v * (r - p.t1_star), v / 2.0))
            }
            Strip::R2Plus => self.to_strip(self.to_adiabatic(t, v, Chart::U)?, strip),
            Strip::R2Minus => self.to_strip(self.to_adiabatic(t, v, Chart::L)?, strip),
        }
    }
}

/// Solves `g v + g gdot + g^2 gddot / (3 v) = q` for the root near `q / g`.
fn solve_action(g: crate::model::Jet, q: f64) -> Result<f64> {
    let mut v = q / g.f;
    for _ in 0..30 {
        let r = g.f * v + g.f * g.df + g.f * g.f * g.ddf / (3.0 * v) - q;
        let dr = g.f - g.f * g.f * g.ddf / (3.0 * v * v);
        let dv = r / dr;
        v -= dv;
        if dv.abs() <= 1e-15 * v.abs() {
            return Ok(v);
        }
    }
    Err(Error::Numerical(format!("action inversion did not converge (q = {q})")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SlitProfile;

    fn static_charts() -> Charts {
        Charts::new(&ModelParams::derive(&SlitProfile::constant(0.5), 0.5, 0.25, 0.1).unwrap())
    }

    #[test]
    fn static_theta_table() {
        let c = static_charts();
        assert!((c.theta(0.25) - 0.4).abs() < 1e-12);
        assert!((c.theta(2.0) - 2.0).abs() < 1e-12);
        let a = c.to_adiabatic(0.25, 50.0, Chart::U).unwrap();
        assert!((a.angle - 0.4).abs() < 1e-12);
    }

    #[test]
    fn floor_chart_is_linear() {
        let c = Charts::new(&ModelParams::default_model());
        let a = c.to_adiabatic(0.7, 100.0, Chart::F).unwrap();
        assert!((a.action - c.params.l_star * 50.0).abs() < 1e-9);
        assert!((a.angle - c.theta(0.7)).abs() < 1e-15);
        let (t, v) = c.from_adiabatic(a).unwrap();
        assert!((t - 0.7).abs() < 1e-12 && (v - 100.0).abs() < 1e-12);
    }

    #[test]
    fn wrong_sign_rejected() {
        let c = static_charts();
        assert!(c.to_adiabatic(0.1, -5.0, Chart::U).is_err());
        assert!(c.to_adiabatic(0.1, 5.0, Chart::L).is_err());
    }

    #[test]
    fn phase_tables_increase() {
        let c = Charts::new(&ModelParams::default_model());
        for side in [Side::Upper, Side::Lower] {
            let mut prev = c.phase(side, 0.0);
            for k in 1..=4000 {
                let x = c.phase(side, k as f64 * 5e-4);
                assert!(x > prev);
                prev = x;
            }
            assert!((c.period_phase(side) - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn strip_examples() {
        let c = Charts::new(&ModelParams::default_model());
        let p = &c.params;
        let a = AdiabaticPoint { chart: Chart::F, angle: p.theta1_star, action: 700.0 };
        assert_eq!(c.to_strip(a, Strip::R1).unwrap().first, 0.0);
        let a = AdiabaticPoint { chart: Chart::F, angle: p.theta1_star + 0.002, action: 500.0 };
        let s = c.to_strip(a, Strip::R1).unwrap();
        assert!((s.first - 1.0).abs() < 1e-9);
        assert!((s.second - 500.0 / p.l_star).abs() < 1e-12);
        assert!(c.to_strip(a, Strip::R2Minus).is_err());
    }

    #[test]
    fn residual_shrinks_with_action() {
        let c = Charts::new(&ModelParams::default_model());
        let t = 1.6;
        let lead = |action: f64| {
            let a = AdiabaticPoint { chart: Chart::U, angle: c.theta(t).rem_euclid(2.0), action };
            let (_, v) = c.from_adiabatic(a).unwrap();
            let l = c.params.gap_jet(Side::Upper, t);
            (v - (2.0 * action / c.params.l_star - l.f * l.df) / l.f).abs()
        };
        let r1 = lead(1e3);
        let r2 = lead(2e3);
        assert!(r2 < 0.6 * r1, "{r1} {r2}");
    }
}
