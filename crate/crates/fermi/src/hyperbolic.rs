//! Linearised half maps, their eigenstructure and a common unstable cone.
//!
//! Tangent vectors are `(d first, d second)` on a strip. A cone is stored as
//! an interval of inverse slopes `d first / d second` around the vertical.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::{point_with_wrapped, wrapped_range, MapId, NormalForm, Order};
use crate::model::{ModelParams, NormalFormConstants};

pub type Vec2 = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Mat2 {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Mat2 {
        Mat2 { a, b, c, d }
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    pub fn apply(&self, v: Vec2) -> Vec2 {
        [self.a * v[0] + self.b * v[1], self.c * v[0] + self.d * v[1]]
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        Mat2::new(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }
}

pub fn norm(v: Vec2) -> f64 {
    v[0].hypot(v[1])
}

fn unit(v: Vec2) -> Vec2 {
    let n = norm(v);
    [v[0] / n, v[1] / n]
}

/// Angle between two lines (unsigned directions), in `[0, pi/2]`.
pub fn line_angle(u: Vec2, v: Vec2) -> f64 {
    let c = (u[0] * v[0] + u[1] * v[1]).abs() / (norm(u) * norm(v));
    c.min(1.0).acos()
}

/// The four distinct linear parts; both lower entries share `L12`, both lower exits `L21`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum LinearPart {
    U12,
    U21,
    L12,
    L21,
}

impl LinearPart {
    pub const ALL: [LinearPart; 4] = [LinearPart::U12, LinearPart::U21, LinearPart::L12, LinearPart::L21];

    pub fn of(id: MapId) -> LinearPart {
        match id {
            MapId::U12 => LinearPart::U12,
            MapId::U21 => LinearPart::U21,
            MapId::Ll12 | MapId::Ls12 => LinearPart::L12,
            MapId::Ll21 | MapId::Ls21 => LinearPart::L21,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LinearPart::U12 => "G12U",
            LinearPart::U21 => "G21U",
            LinearPart::L12 => "G12L",
            LinearPart::L21 => "G21L",
        }
    }
}

/// Derivative of the linear part of map `id`.
pub fn dg_matrix(id: MapId, params: &ModelParams, consts: &NormalFormConstants) -> Mat2 {
    match LinearPart::of(id) {
        LinearPart::U12 => {
            let l2 = params.l2();
            let s = params.entry_span();
            let d = consts.delta2;
            Mat2::new(1.0 / l2, -s / l2, d / l2, l2 - d * s / l2)
        }
        LinearPart::U21 => {
            let l1 = params.l1();
            let s = params.exit_span_upper();
            let d = consts.delta1;
            Mat2::new(l1, -s * l1, d * l1, 1.0 / l1 - d * s * l1)
        }
        LinearPart::L12 => {
            let f2 = params.f2;
            let s = params.entry_span();
            let k = consts.kappa_l;
            Mat2::new(1.0 / f2, -s / f2, k / f2, f2 - k * s / f2)
        }
        LinearPart::L21 => {
            let f1 = params.f1;
            let s = params.exit_span_lower();
            let x = consts.chi_l;
            Mat2::new(f1, -s * f1, x * f1, 1.0 / f1 - x * s * f1)
        }
    }
}

/// Representative map for each linear part.
pub fn representative(part: LinearPart) -> MapId {
    match part {
        LinearPart::U12 => MapId::U12,
        LinearPart::U21 => MapId::U21,
        LinearPart::L12 => MapId::Ls12,
        LinearPart::L21 => MapId::Ls21,
    }
}

pub fn dg_matrices(params: &ModelParams, consts: &NormalFormConstants) -> [(LinearPart, Mat2); 4] {
    LinearPart::ALL.map(|p| (p, dg_matrix(representative(p), params, consts)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Eigen {
    /// Modulus of the expanding eigenvalue, `> 1`.
    pub lambda_u: f64,
    pub e_u: Vec2,
    pub e_s: Vec2,
}

fn eigvec(m: &Mat2, mu: f64) -> Vec2 {
    let v1 = [m.b, mu - m.a];
    let v2 = [mu - m.d, m.c];
    let v = if norm(v1) >= norm(v2) { v1 } else { v2 };
    let v = unit(v);
    if v[1] < 0.0 || (v[1] == 0.0 && v[0] < 0.0) {
        [-v[0], -v[1]]
    } else {
        v
    }
}

/// Eigen decomposition of a unimodular hyperbolic matrix.
pub fn eigen(m: &Mat2) -> Result<Eigen> {
    let t = m.trace();
    if !(t.abs() > 2.0) {
        return Err(Error::NotHyperbolic(t));
    }
    let det = m.det();
    let disc = (t * t - 4.0 * det).max(0.0).sqrt();
    let big = 0.5 * (t.abs() + disc);
    let mu_u = big.copysign(t);
    let mu_s = det / mu_u;
    Ok(Eigen { lambda_u: big, e_u: eigvec(m, mu_u), e_s: eigvec(m, mu_s) })
}

/// Lower bound on the stretch inside the gauge-`k` cone of a matrix with unstable eigenvalue `lambda`.
pub fn expansion_bound(k: f64, lambda: f64) -> f64 {
    (k * lambda - 1.0 / lambda) / (k + 1.0)
}

/// Inverse slope `d first / d second`; infinite for horizontal vectors.
pub fn inverse_slope(v: Vec2) -> f64 {
    if v[1] == 0.0 {
        f64::INFINITY
    } else {
        v[0] / v[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConeSpec {
    /// Inverse slopes bounding the cone, `inv_lo < 0 < inv_hi`.
    pub inv_lo: f64,
    pub inv_hi: f64,
    /// Bounding slopes `d second / d first`: `1 / inv_lo` (negative) and `1 / inv_hi` (positive).
    pub slope_low: f64,
    pub slope_high: f64,
    pub gauge: f64,
    /// Smallest angle between the cone and any stable eigendirection.
    pub stable_margin: f64,
}

impl ConeSpec {
    pub fn from_inverse(inv_lo: f64, inv_hi: f64, gauge: f64) -> ConeSpec {
        ConeSpec { inv_lo, inv_hi, slope_low: 1.0 / inv_lo, slope_high: 1.0 / inv_hi, gauge, stable_margin: 0.0 }
    }

    pub fn contains(&self, v: Vec2) -> bool {
        if v[1] == 0.0 {
            return false;
        }
        let q = v[0] / v[1];
        q >= self.inv_lo && q <= self.inv_hi
    }

    /// Unit direction at fraction `s` in `[0,1]` of the cone's angular width, pointing up.
    pub fn direction(&self, s: f64) -> Vec2 {
        let a0 = self.inv_lo.atan();
        let a1 = self.inv_hi.atan();
        let a = a0 + s * (a1 - a0);
        [a.sin(), a.cos()]
    }

    /// Angle between a line and the cone (0 when inside).
    pub fn angle_outside(&self, v: Vec2) -> f64 {
        if self.contains(v) {
            return 0.0;
        }
        line_angle(v, self.direction(0.0)).min(line_angle(v, self.direction(1.0)))
    }
}

/// Directions of the gauge-`k` cone of one matrix as an inverse-slope set.
enum DirSet {
    Inside(f64, f64),
    /// Complement of the open interval; the cone contains the horizontal.
    Outside(f64, f64),
}

fn gauge_cone(e: &Eigen, k: f64) -> DirSet {
    let p = [k * e.e_u[0] + e.e_s[0], k * e.e_u[1] + e.e_s[1]];
    let m = [k * e.e_u[0] - e.e_s[0], k * e.e_u[1] - e.e_s[1]];
    let (qp, qm, qu) = (inverse_slope(p), inverse_slope(m), inverse_slope(e.e_u));
    let (lo, hi) = if qp < qm { (qp, qm) } else { (qm, qp) };
    if qu > lo && qu < hi {
        DirSet::Inside(lo, hi)
    } else {
        DirSet::Outside(lo, hi)
    }
}

pub const CONE_CHECK_DIRECTIONS: usize = 360;

fn intersect(eigs: &[(LinearPart, Eigen)], k: f64) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (_, e) in eigs {
        match gauge_cone(e, k) {
            DirSet::Inside(a, b) => {
                lo = lo.max(a);
                hi = hi.min(b);
            }
            DirSet::Outside(a, b) => {
                if 0.0 <= a {
                    hi = hi.min(a);
                } else if 0.0 >= b {
                    lo = lo.max(b);
                } else {
                    return None;
                }
            }
        }
    }
    (lo < 0.0 && hi > 0.0 && lo.is_finite() && hi.is_finite()).then_some((lo, hi))
}

/// First matrix that maps some direction of `cone` out of it, if any.
pub fn linear_invariance_failure(cone: &ConeSpec, mats: &[(LinearPart, Mat2)]) -> Option<LinearPart> {
    for (part, m) in mats {
        for i in 0..=CONE_CHECK_DIRECTIONS {
            let v = cone.direction(i as f64 / CONE_CHECK_DIRECTIONS as f64);
            if !cone.contains(m.apply(v)) {
                return Some(*part);
            }
        }
    }
    None
}

pub const MAX_GAUGE: u32 = 64;

/// Common invariant unstable cone of the four linear parts.
///
/// The gauge is the smallest integer `k >= 2` for which the intersection of
/// the per-matrix cones contains the vertical and every unstable direction,
/// excludes every stable direction, and is mapped into itself.
pub fn common_cone(params: &ModelParams, consts: &NormalFormConstants) -> Result<ConeSpec> {
    let mats = dg_matrices(params, consts);
    let mut eigs = Vec::new();
    for (part, m) in &mats {
        match eigen(m) {
            Ok(e) => eigs.push((*part, e)),
            Err(_) => {
                return Err(Error::ConeConstructionFailed(format!("{} is not hyperbolic (trace {})", part.name(), m.trace())))
            }
        }
    }
    let mut last = String::from("no gauge tried");
    for k in 2..=MAX_GAUGE {
        let k = k as f64;
        let Some((lo, hi)) = intersect(&eigs, k) else {
            last = format!("empty intersection at gauge {k}");
            continue;
        };
        let mut cone = ConeSpec::from_inverse(lo, hi, k);
        if let Some((p, _)) = eigs.iter().find(|(_, e)| !cone.contains(e.e_u)) {
            last = format!("{} unstable direction outside at gauge {k}", p.name());
            continue;
        }
        if let Some((p, _)) = eigs.iter().find(|(_, e)| cone.contains(e.e_s)) {
            last = format!("{} stable direction inside at gauge {k}", p.name());
            continue;
        }
        if let Some(p) = linear_invariance_failure(&cone, &mats) {
            last = format!("{} not invariant at gauge {k}", p.name());
            continue;
        }
        cone.stable_margin = eigs.iter().map(|(_, e)| cone.angle_outside(e.e_s)).fold(f64::INFINITY, f64::min);
        return Ok(cone);
    }
    Err(Error::ConeConstructionFailed(last))
}

/// Minimal and maximal stretch of `m` over the cone directions.
pub fn cone_stretch(cone: &ConeSpec, m: &Mat2) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for i in 0..=CONE_CHECK_DIRECTIONS {
        let v = cone.direction(i as f64 / CONE_CHECK_DIRECTIONS as f64);
        let s = norm(m.apply(v));
        lo = lo.min(s);
        hi = hi.max(s);
    }
    (lo, hi)
}

#[derive(Debug, Clone, Serialize)]
pub struct MapRate {
    pub map: MapId,
    pub lambda: f64,
    pub big_lambda: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpansionRates {
    pub per_map: Vec<MapRate>,
    pub lambda_f: f64,
    pub big_lambda_f: f64,
}

impl ExpansionRates {
    pub fn get(&self, id: MapId) -> &MapRate {
        self.per_map.iter().find(|r| r.map == id).unwrap()
    }
}

/// Linear expansion rates inside `cone` for the six maps and the revolution.
pub fn expansion_rates(cone: &ConeSpec, params: &ModelParams, consts: &NormalFormConstants) -> ExpansionRates {
    let per_map: Vec<MapRate> = MapId::ALL
        .iter()
        .map(|&id| {
            let (lambda, big_lambda) = cone_stretch(cone, &dg_matrix(id, params, consts));
            MapRate { map: id, lambda, big_lambda }
        })
        .collect();
    let r = |id| per_map.iter().find(|m: &&MapRate| m.map == id).unwrap();
    let lambda_f = (r(MapId::U12).lambda * r(MapId::U21).lambda).min(r(MapId::Ls12).lambda * r(MapId::Ls21).lambda);
    let big_lambda_f =
        (r(MapId::U12).big_lambda * r(MapId::U21).big_lambda).max(r(MapId::Ls12).big_lambda * r(MapId::Ls21).big_lambda);
    ExpansionRates { per_map, lambda_f, big_lambda_f }
}

/// Shortest distance between neighbouring singularity lines `c second - first = const`,
/// `width` apart in the wrapped coordinate, along any cone direction.
pub fn line_spacing(cone: &ConeSpec, c: f64, width: f64) -> f64 {
    (0..=CONE_CHECK_DIRECTIONS)
        .map(|i| {
            let q = cone.inv_lo + (cone.inv_hi - cone.inv_lo) * i as f64 / CONE_CHECK_DIRECTIONS as f64;
            width * (1.0 + q * q).sqrt() / (c - q).abs()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Largest curve length that meets at most one singularity line in each
/// strip during a revolution, shrunk by `0.99`.
pub fn complexity_delta0(cone: &ConeSpec, params: &ModelParams, rates: &ExpansionRates) -> f64 {
    let f2 = params.f2;
    let d1 = line_spacing(cone, params.entry_span(), f2.min(2.0 - 2.0 * f2));
    let d2 = line_spacing(cone, params.exit_span_lower(), 1.0).min(line_spacing(cone, params.exit_span_upper(), 2.0));
    let big = [MapId::U12, MapId::Ls12, MapId::Ll12].iter().map(|&id| rates.get(id).big_lambda).fold(0.0, f64::max);
    0.99 * d1.min(d2 / big)
}

/// Length bound from expansion alone: `0.99 / max Lambda` over the maps into the second strip.
pub fn expansion_delta0(rates: &ExpansionRates) -> f64 {
    let big = [MapId::U12, MapId::Ls12, MapId::Ll12].iter().map(|&id| rates.get(id).big_lambda).fold(0.0, f64::max);
    0.99 / big
}

/// Smaller expanding eigenvalue of the two linear revolutions
/// (upper `U21 U12`, lower `L21 L12`). Needs no cone.
pub fn revolution_eigen_floor(params: &ModelParams, consts: &NormalFormConstants) -> Result<f64> {
    let m = |p| dg_matrix(representative(p), params, consts);
    let upper = eigen(&m(LinearPart::U21).mul(&m(LinearPart::U12)))?;
    let lower = eigen(&m(LinearPart::L21).mul(&m(LinearPart::L12)))?;
    Ok(upper.lambda_u.min(lower.lambda_u))
}

/// Central-difference Jacobian of map `id` on branch `k`.
///
/// The branch is held fixed, so the stencil never crosses a singularity line:
/// `eval_on` continues the branch smoothly past its edges.
pub fn numeric_jacobian(nf: &NormalForm, id: MapId, k: i64, first: f64, second: f64, order: Order) -> Mat2 {
    let h1 = 1e-6 * first.abs().max(1.0);
    let h2 = 1e-6 * second.abs().max(1.0);
    let fp = nf.eval_on(id, k, first + h1, second, order);
    let fm = nf.eval_on(id, k, first - h1, second, order);
    let sp = nf.eval_on(id, k, first, second + h2, order);
    let sm = nf.eval_on(id, k, first, second - h2, order);
    Mat2::new(
        (fp.0 - fm.0) / (2.0 * h1),
        (sp.0 - sm.0) / (2.0 * h2),
        (fp.1 - fm.1) / (2.0 * h1),
        (sp.1 - sm.1) / (2.0 * h2),
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceConfig {
    pub samples: usize,
    pub h_min: f64,
    pub h_max: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub samples: usize,
    pub violations: usize,
    pub min_stretch: f64,
    pub max_stretch: f64,
    /// Minimal stretch seen per map, in `MapId::ALL` order.
    pub per_map_min: Vec<(MapId, f64)>,
    pub worst_violation: Option<(MapId, f64, f64)>,
}

/// Monte Carlo check that every half map sends cone vectors into the cone and stretches them.
pub fn verify_cone_invariance(
    cone: &ConeSpec,
    nf: &NormalForm,
    cfg: &InvarianceConfig,
    use_full_p: bool,
) -> InvarianceReport {
    let order = if use_full_p { Order::GPlusH } else { Order::GOnly };
    let chunk = 1000;
    let chunks = cfg.samples.div_ceil(chunk);
    let parts: Vec<_> = (0..chunks)
        .into_par_iter()
        .map(|ci| {
            let mut rng = crate::rng(cfg.seed, ci as u64);
            let n = chunk.min(cfg.samples - ci * chunk);
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let id = MapId::ALL[rng.gen_range(0..MapId::ALL.len())];
                let h = rng.gen_range(cfg.h_min..cfg.h_max);
                let (lo, hi) = wrapped_range(id, &nf.params);
                let p = point_with_wrapped(id, &nf.params, h, rng.gen_range(lo..hi));
                let k = nf.branch(id, &p);
                let j = numeric_jacobian(nf, id, k, p.first, p.second, order);
                let v = cone.direction(rng.gen_range(0.0..=1.0));
                let w = j.apply(v);
                out.push((id, p.first, p.second, cone.contains(w), norm(w)));
            }
            out
        })
        .collect();
    let mut rep = InvarianceReport {
        samples: 0,
        violations: 0,
        min_stretch: f64::INFINITY,
        max_stretch: 0.0,
        per_map_min: MapId::ALL.iter().map(|&m| (m, f64::INFINITY)).collect(),
        worst_violation: None,
    };
    for (id, first, second, inside, s) in parts.into_iter().flatten() {
        rep.samples += 1;
        if !inside {
            rep.violations += 1;
            if rep.worst_violation.map_or(true, |w| second < w.2) {
                rep.worst_violation = Some((id, first, second));
            }
        }
        rep.min_stretch = rep.min_stretch.min(s);
        rep.max_stretch = rep.max_stretch.max(s);
        let slot = rep.per_map_min.iter_mut().find(|e| e.0 == id).unwrap();
        slot.1 = slot.1.min(s);
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_oracles() {
        let e = eigen(&Mat2::new(1.0, 1.0, 1000.0, 1001.0)).unwrap();
        assert!((e.lambda_u - 1001.999).abs() < 1e-3);
        assert!(line_angle(e.e_u, [0.0, 1.0]) < 0.002);
        assert!(line_angle(e.e_s, [-1.0, 1.0]) < 0.002);

        let e = eigen(&Mat2::new(2.0, 0.0, 0.0, 0.5)).unwrap();
        assert_eq!(e.lambda_u, 2.0);
        assert!(line_angle(e.e_u, [1.0, 0.0]) < 1e-15);
        assert!(line_angle(e.e_s, [0.0, 1.0]) < 1e-15);

        assert!(matches!(eigen(&Mat2::new(1.0, 1.0, 0.0, 1.0)), Err(Error::NotHyperbolic(_))));
    }

    #[test]
    fn negative_trace_uses_modulus() {
        let e = eigen(&Mat2::new(-3.0, 1.0, -1.0, 0.0)).unwrap();
        assert!(e.lambda_u > 1.0);
        let m = Mat2::new(-3.0, 1.0, -1.0, 0.0);
        let w = m.apply(e.e_u);
        assert!((norm(w) - e.lambda_u).abs() < 1e-12);
    }

    #[test]
    fn expansion_bound_example() {
        assert!((expansion_bound(3.0, 10.0) - 7.475).abs() < 1e-12);
    }

    #[test]
    fn default_determinants() {
        let p = ModelParams::default_model();
        let c = NormalFormConstants::new(&p);
        for (_, m) in dg_matrices(&p, &c) {
            assert!((m.det() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn static_slit_is_a_shear() {
        let p = ModelParams::derive(&crate::model::SlitProfile::constant(0.5), 0.5, 0.25, 0.05).unwrap();
        let c = NormalFormConstants::new(&p);
        let m = dg_matrix(MapId::Ls12, &p, &c);
        assert_eq!(m.c, 0.0);
        assert!((m.a - 2.0).abs() < 1e-15 && (m.d - 0.5).abs() < 1e-15);
        let e = eigen(&m).unwrap();
        assert!((e.lambda_u - 2.0).abs() < 1e-12);
    }

    #[test]
    fn finite_difference_matches_linear_part() {
        let p = ModelParams::default_model();
        let c = NormalFormConstants::new(&p);
        let nf = NormalForm::new(&p);
        let mut rng = crate::rng(3, 0);
        for _ in 0..1000 {
            let id = MapId::ALL[rng.gen_range(0..6)];
            let h = rng.gen_range(100.0..2000.0);
            let (lo, hi) = wrapped_range(id, &p);
            let q = point_with_wrapped(id, &p, h, rng.gen_range(lo..hi));
            let k = nf.branch(id, &q);
            let j = numeric_jacobian(&nf, id, k, q.first, q.second, Order::GOnly);
            let m = dg_matrix(id, &p, &c);
            for (x, y) in [(j.a, m.a), (j.b, m.b), (j.c, m.c), (j.d, m.d)] {
                assert!((x - y).abs() <= 1e-6 * y.abs().max(1.0), "{id:?} {x} {y}");
            }
        }
    }

    #[test]
    fn small_frequency_has_no_cone() {
        let p = ModelParams::resonant(1.0).unwrap();
        let c = NormalFormConstants::new(&p);
        assert!(matches!(common_cone(&p, &c), Err(Error::ConeConstructionFailed(_))));
    }
}
