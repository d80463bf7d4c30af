//! Normal-form half-revolution maps, the phase-cylinder classifier and the
//! revolution maps `P`, `P0`.

use serde::Serialize;

use crate::charts::{Strip, StripPoint};
use crate::error::{Error, Result};
use crate::model::{ModelParams, NormalFormConstants};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum MapId {
    U12,
    U21,
    Ll12,
    Ls12,
    Ll21,
    Ls21,
}

impl MapId {
    pub const ALL: [MapId; 6] = [MapId::U12, MapId::U21, MapId::Ll12, MapId::Ls12, MapId::Ll21, MapId::Ls21];

    pub fn name(self) -> &'static str {
        match self {
            MapId::U12 => "U12",
            MapId::U21 => "U21",
            MapId::Ll12 => "Ll12",
            MapId::Ls12 => "Ls12",
            MapId::Ll21 => "Ll21",
            MapId::Ls21 => "Ls21",
        }
    }

    pub fn source(self) -> Strip {
        match self {
            MapId::U12 | MapId::Ll12 | MapId::Ls12 => Strip::R1,
            MapId::U21 => Strip::R2Plus,
            MapId::Ll21 | MapId::Ls21 => Strip::R2Minus,
        }
    }

    pub fn target(self) -> Strip {
        match self {
            MapId::U12 => Strip::R2Plus,
            MapId::Ll12 | MapId::Ls12 => Strip::R2Minus,
            _ => Strip::R1,
        }
    }

    /// Leading-order energy factor `second_out / second_in`.
    pub fn energy_factor(self, p: &ModelParams) -> f64 {
        match self {
            MapId::U12 => p.l2(),
            MapId::U21 => 1.0 / p.l1(),
            MapId::Ll12 | MapId::Ls12 => p.f2,
            MapId::Ll21 | MapId::Ls21 => 1.0 / p.f1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Order {
    GOnly,
    #[default]
    GPlusH,
}

/// Which constant terms the `H` parts use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HTerms {
    /// Constant terms that close the expansion to second order.
    #[default]
    Derived,
    /// The formulas exactly as displayed.
    Displayed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum RegionTag {
    UEn,
    LEnLong,
    LEnShort,
    LExLong,
    LExShort,
}

impl RegionTag {
    pub fn name(self) -> &'static str {
        match self {
            RegionTag::UEn => "U_en",
            RegionTag::LEnLong => "L_en_long",
            RegionTag::LEnShort => "L_en_short",
            RegionTag::LExLong => "L_ex_long",
            RegionTag::LExShort => "L_ex_short",
        }
    }

    pub fn map(self) -> MapId {
        match self {
            RegionTag::UEn => MapId::U12,
            RegionTag::LEnLong => MapId::Ll12,
            RegionTag::LEnShort => MapId::Ls12,
            RegionTag::LExLong => MapId::Ll21,
            RegionTag::LExShort => MapId::Ls21,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub tag: RegionTag,
    /// `floor(X / 2)` of the wrapped quantity `X`.
    pub component: i64,
    pub ambiguous: bool,
    /// The wrapped value `u` or `w` in `[0,2)`.
    pub wrapped: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum SignedClass {
    Accelerating,
    Decelerating,
}

impl SignedClass {
    pub fn sign(self) -> i8 {
        match self {
            SignedClass::Accelerating => 1,
            SignedClass::Decelerating => -1,
        }
    }
}

/// `floor((c h - s) / 2)` and `{c h - s}_2` with the product kept in
/// double-double so the fractional part survives large `h`.
pub fn wrap2(c: f64, h: f64, s: f64) -> (i64, f64) {
    let p = c * h;
    let e = c.mul_add(h, -p);
    let mut k = ((p - s) / 2.0).floor();
    let mut r = ((p - 2.0 * k) - s) + e;
    while r < 0.0 {
        r += 2.0;
        k -= 1.0;
    }
    while r >= 2.0 {
        r -= 2.0;
        k += 1.0;
    }
    (k as i64, r)
}

/// `c h - s - 2k` for a fixed branch `k`.
pub fn unwrap_on(c: f64, h: f64, s: f64, k: i64) -> f64 {
    let p = c * h;
    let e = c.mul_add(h, -p);
    ((p - 2.0 * k as f64) - s) + e
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Route {
    Upper,
    /// entry long, exit long
    LongLong,
    LongShort,
    ShortLong,
    ShortShort,
}

impl Route {
    pub fn name(self) -> &'static str {
        match self {
            Route::Upper => "U21.U12",
            Route::LongLong => "Ll21.Ll12",
            Route::LongShort => "Ls21.Ll12",
            Route::ShortLong => "Ll21.Ls12",
            Route::ShortShort => "Ls21.Ls12",
        }
    }

    pub fn is_lower(self) -> bool {
        self != Route::Upper
    }

    fn from_maps(entry: MapId, exit: MapId) -> Route {
        match (entry, exit) {
            (MapId::U12, _) => Route::Upper,
            (MapId::Ll12, MapId::Ll21) => Route::LongLong,
            (MapId::Ll12, _) => Route::LongShort,
            (_, MapId::Ll21) => Route::ShortLong,
            _ => Route::ShortShort,
        }
    }

    pub fn matches(self, r: crate::billiard::ExactRoute) -> bool {
        use crate::billiard::ExactRoute as E;
        matches!(
            (self, r),
            (Route::Upper, E::Upper)
                | (Route::LongLong, E::LowerLongLong)
                | (Route::LongShort, E::LowerLongShort)
                | (Route::ShortLong, E::LowerShortLong)
                | (Route::ShortShort, E::LowerShortShort)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteRecord {
    pub route: Route,
    pub entry: MapId,
    pub exit: MapId,
    /// Entry replaced by the forced lower route of `P0`.
    pub forced: bool,
    pub ambiguous: bool,
}

impl RouteRecord {
    /// `+1` for a lower (accelerating) route.
    pub fn itinerary(&self) -> i8 {
        if self.route.is_lower() {
            1
        } else {
            -1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModifiedSystemConfig {
    pub v_star: f64,
    pub v0: f64,
    pub ell: f64,
}

impl ModifiedSystemConfig {
    pub fn new(v_star: f64, v0: f64, ell: f64) -> ModifiedSystemConfig {
        ModifiedSystemConfig { v_star, v0, ell }
    }

    pub fn validate(&self, p: &ModelParams) -> Result<()> {
        if !(self.v_star >= 1.0 && self.v0 > self.v_star) {
            return Err(Error::Domain(format!("need 1 <= V* < V0, got V* = {}, V0 = {}", self.v_star, self.v0)));
        }
        if !(self.ell > 0.0 && self.ell < 1.0) {
            return Err(Error::Domain(format!("ell = {} outside (0,1)", self.ell)));
        }
        if !(self.ell * p.f2 / p.f1 > 1.0 && self.ell * p.l2() / p.l1() < 1.0) {
            return Err(Error::Domain(format!("ell = {} does not separate the route factors", self.ell)));
        }
        Ok(())
    }
}

pub const AMBIGUITY_WIDTH: f64 = 10.0;

/// Normal-form dynamics bound to one model.
#[derive(Debug, Clone)]
pub struct NormalForm {
    pub params: ModelParams,
    pub consts: NormalFormConstants,
    pub order: Order,
    pub terms: HTerms,
}

impl NormalForm {
    pub fn new(params: &ModelParams) -> NormalForm {
        NormalForm { params: params.clone(), consts: NormalFormConstants::new(params), order: Order::GPlusH, terms: HTerms::Derived }
    }

    pub fn with_order(mut self, order: Order) -> NormalForm {
        self.order = order;
        self
    }

    pub fn with_terms(mut self, terms: HTerms) -> NormalForm {
        self.terms = terms;
        self
    }

    /// Region of a point on R1 or R2-; R2+ has no choice and is rejected.
    pub fn region(&self, p: &StripPoint) -> Result<Region> {
        let pr = &self.params;
        let band = AMBIGUITY_WIDTH / p.second;
        match p.strip {
            Strip::R1 => {
                let (k, u) = wrap2(pr.entry_span(), p.second, p.first);
                let f2 = pr.f2;
                let tag = if u < f2 {
                    RegionTag::LEnShort
                } else if u > 2.0 - f2 {
                    RegionTag::LEnLong
                } else {
                    RegionTag::UEn
                };
                let d = [u, (u - f2).abs(), (u - 2.0 + f2).abs(), 2.0 - u].into_iter().fold(f64::INFINITY, f64::min);
                Ok(Region { tag, component: k, ambiguous: d < band, wrapped: u })
            }
            Strip::R2Minus => {
                let (k, w) = wrap2(pr.exit_span_lower(), p.second, p.first);
                let tag = if w < 1.0 { RegionTag::LExShort } else { RegionTag::LExLong };
                let d = w.min((w - 1.0).abs()).min(2.0 - w);
                Ok(Region { tag, component: k, ambiguous: d < band, wrapped: w })
            }
            Strip::R2Plus => Err(Error::Domain("R2+ carries no route choice".into())),
        }
    }

    pub fn classify(&self, p: &StripPoint, v_star: f64) -> Result<(Region, SignedClass)> {
        let r = self.region(p)?;
        let s = if r.tag == RegionTag::UEn && self.component_floor(r.component) > v_star {
            SignedClass::Decelerating
        } else {
            SignedClass::Accelerating
        };
        Ok((r, s))
    }

    /// Lowest energy of the R1 component `k` of `U_en`.
    pub fn component_floor(&self, k: i64) -> f64 {
        (2.0 * k as f64 + self.params.f2) / self.params.entry_span()
    }

    /// Highest energy of the R1 component `k` of `U_en` (`sigma = 2`).
    pub fn component_ceiling(&self, k: i64) -> f64 {
        (2.0 * k as f64 + 2.0 - self.params.f2 + 2.0) / self.params.entry_span()
    }

    /// Branch index used by a map: `floor(X/2)` on R1 and R2+, `floor(X)` on R2-.
    pub fn branch(&self, id: MapId, p: &StripPoint) -> i64 {
        let pr = &self.params;
        match id.source() {
            Strip::R1 => wrap2(pr.entry_span(), p.second, p.first).0,
            Strip::R2Plus => wrap2(pr.exit_span_upper(), p.second, p.first).0,
            Strip::R2Minus => {
                let (k, w) = wrap2(pr.exit_span_lower(), p.second, p.first);
                2 * k + (w >= 1.0) as i64
            }
        }
    }

    /// The map to apply at `p` and its branch.
    pub fn select(&self, p: &StripPoint) -> Result<(MapId, i64)> {
        let id = match p.strip {
            Strip::R2Plus => MapId::U21,
            _ => self.region(p)?.tag.map(),
        };
        Ok((id, self.branch(id, p)))
    }

    /// Evaluates map `id` on branch `k`, continuing smoothly past its edges.
    pub fn eval_on(&self, id: MapId, k: i64, first: f64, second: f64, order: Order) -> (f64, f64) {
        let pr = &self.params;
        let c = &self.consts;
        let h_on = order == Order::GPlusH;
        let derived = self.terms == HTerms::Derived;
        match id {
            MapId::U12 | MapId::Ll12 | MapId::Ls12 => {
                let u = unwrap_on(pr.entry_span(), second, first, k);
                let f2 = pr.f2;
                if id == MapId::U12 {
                    let l2 = pr.l2();
                    let tau = -u / l2 + (2.0 - f2) / l2;
                    let mut i = l2 * second + c.delta2 * (tau - 1.0);
                    if h_on {
                        let k0 = if derived { c.delta2_pp_derived } else { c.delta2_pp };
                        i += (c.delta2_p * (tau - 1.0).powi(2) + k0) / second;
                    }
                    (tau, i)
                } else {
                    let rho = if id == MapId::Ll12 { -u / f2 + (f2 + 2.0) / f2 } else { -u / f2 + 1.0 };
                    let mut j = f2 * second + c.kappa_l * (rho - 1.0);
                    if h_on {
                        if id == MapId::Ls12 || derived {
                            j += (-c.kappa_s_p * (rho - 1.0).powi(2) - c.kappa_s_pp) / second;
                        } else {
                            j += (c.kappa_l_p * (rho - 1.0) - c.kappa_l_pp * (rho - 1.0).powi(3)) / second;
                        }
                    }
                    (rho, j)
                }
            }
            MapId::U21 => {
                let w = unwrap_on(pr.exit_span_upper(), second, first, k);
                let l1 = pr.l1();
                let sigma = -l1 * w + 2.0 - pr.f1;
                let mut h = second / l1 + c.delta1 * (sigma - 1.0);
                if h_on {
                    let k0 = if derived { c.delta1_pp_derived } else { c.delta1_pp };
                    h += (c.delta1_p * (sigma - 1.0).powi(2) + k0) / second;
                }
                (sigma, h)
            }
            MapId::Ll21 | MapId::Ls21 => {
                let kk = k.div_euclid(2);
                let w = unwrap_on(pr.exit_span_lower(), second, first, kk);
                let f1 = pr.f1;
                if id == MapId::Ll21 {
                    let sigma = -f1 * w + 2.0 + f1;
                    let mut h = second / f1 + c.chi_l * (sigma - 2.0);
                    if h_on {
                        h += (c.chi_l_p + c.chi_l_pp * (sigma - 1.0) - 0.5 * c.chi_l_pp * (sigma - 1.0).powi(2)) / second;
                    }
                    (sigma, h)
                } else {
                    let sigma = -f1 * w + f1;
                    let mut h = second / f1 + c.chi_l * sigma;
                    if h_on {
                        let k0 = if derived { c.chi_s_pp_derived } else { c.chi_s_pp };
                        h += (c.chi_s_p * (sigma - 1.0) + 0.5 * c.chi_s_p * (sigma - 1.0).powi(2) - k0) / second;
                    }
                    (sigma, h)
                }
            }
        }
    }

    /// Applies map `id` at `p`; the classifier must agree with `id`.
    pub fn apply_half_map(&self, id: MapId, p: &StripPoint) -> Result<StripPoint> {
        self.apply_half_map_order(id, p, self.order)
    }

    pub fn apply_half_map_order(&self, id: MapId, p: &StripPoint, order: Order) -> Result<StripPoint> {
        if p.strip != id.source() {
            return Err(Error::RegionMismatch { requested: id.name().into(), found: format!("{:?}", p.strip) });
        }
        if p.strip != Strip::R2Plus {
            let r = self.region(p)?;
            if r.tag.map() != id {
                return Err(Error::RegionMismatch { requested: id.name().into(), found: r.tag.name().into() });
            }
        }
        let k = self.branch(id, p);
        let (a, b) = self.eval_on(id, k, p.first, p.second, order);
        Ok(StripPoint::new(id.target(), a, b))
    }

    /// One revolution `R1 -> R1`.
    pub fn apply_p(&self, p: &StripPoint) -> Result<(StripPoint, RouteRecord)> {
        if p.strip != Strip::R1 {
            return Err(Error::Domain("revolution maps start on R1".into()));
        }
        let r = self.region(p)?;
        let entry = r.tag.map();
        let mid = self.apply_half_map(entry, p)?;
        let (exit, amb2) = match mid.strip {
            Strip::R2Plus => (MapId::U21, false),
            _ => {
                let r2 = self.region(&mid)?;
                (r2.tag.map(), r2.ambiguous)
            }
        };
        let out = self.apply_half_map(exit, &mid)?;
        Ok((out, RouteRecord { route: Route::from_maps(entry, exit), entry, exit, forced: false, ambiguous: r.ambiguous || amb2 }))
    }

    /// True when `p` lies in a `U_en` component entirely below `V0`.
    pub fn is_forced(&self, p: &StripPoint, cfg: &ModifiedSystemConfig) -> Result<bool> {
        let r = self.region(p)?;
        Ok(r.tag == RegionTag::UEn && self.component_ceiling(r.component) < cfg.v0)
    }

    /// Forced lower entry: linear short-entry map with `rho` reduced mod 2.
    pub fn forced_entry(&self, p: &StripPoint) -> StripPoint {
        let k = self.branch(MapId::Ls12, p);
        let (rho, _) = self.eval_on(MapId::Ls12, k, p.first, p.second, Order::GOnly);
        let rho = rho.rem_euclid(2.0);
        let j = self.params.f2 * p.second + self.consts.kappa_l * (rho - 1.0);
        StripPoint::new(Strip::R2Minus, rho, j)
    }

    /// The modified revolution map `P0`.
    pub fn apply_p0(&self, p: &StripPoint, cfg: &ModifiedSystemConfig) -> Result<(StripPoint, RouteRecord)> {
        if p.strip != Strip::R1 {
            return Err(Error::Domain("revolution maps start on R1".into()));
        }
        if !self.is_forced(p, cfg)? {
            return self.apply_p(p);
        }
        let mid = self.forced_entry(p);
        let r2 = self.region(&mid)?;
        let exit = r2.tag.map();
        let out = self.apply_half_map(exit, &mid)?;
        Ok((out, RouteRecord { route: Route::from_maps(MapId::Ls12, exit), entry: MapId::Ls12, exit, forced: true, ambiguous: r2.ambiguous }))
    }
}

pub fn classify(p: &StripPoint, params: &ModelParams, v_star: f64) -> Result<(Region, SignedClass)> {
    NormalForm::new(params).classify(p, v_star)
}

pub fn apply_half_map(
    id: MapId,
    p: &StripPoint,
    params: &ModelParams,
    consts: &NormalFormConstants,
    order: Order,
) -> Result<StripPoint> {
    let nf = NormalForm { params: params.clone(), consts: *consts, order, terms: HTerms::Derived };
    nf.apply_half_map(id, p)
}

#[derive(Debug, Clone, Serialize)]
pub struct HalfRouteBound {
    pub map: MapId,
    pub samples: usize,
    /// Smallest `D` with `|y1 - factor y0| <= D` over the sample.
    pub d_fit: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyBoundReport {
    pub per_map: Vec<HalfRouteBound>,
    pub lower_revolutions: usize,
    pub upper_revolutions: usize,
    pub r1_violations: usize,
    pub r2_violations: usize,
    /// Worst `|ln z1 - ln z0|` seen, against `ln(f2 / (ell f1))`.
    pub max_log_step: f64,
    pub log_step_bound: f64,
}

/// Fits the affine energy envelopes per half route and checks the
/// multiplicative revolution bounds on R1 samples above `V*`.
pub fn energy_bound_report(nf: &NormalForm, samples: &[StripPoint], cfg: &ModifiedSystemConfig) -> EnergyBoundReport {
    let p = &nf.params;
    let mut d = std::collections::BTreeMap::<&str, (MapId, usize, f64)>::new();
    let mut rep = EnergyBoundReport {
        per_map: Vec::new(),
        lower_revolutions: 0,
        upper_revolutions: 0,
        r1_violations: 0,
        r2_violations: 0,
        max_log_step: 0.0,
        log_step_bound: (p.f2 / (cfg.ell * p.f1)).ln().max((p.l1() / (cfg.ell * p.l2())).ln()),
    };
    let mut note = |id: MapId, y0: f64, y1: f64| {
        let e = d.entry(id.name()).or_insert((id, 0, 0.0));
        e.1 += 1;
        e.2 = e.2.max((y1 - id.energy_factor(p) * y0).abs());
    };
    for s in samples.iter().filter(|s| s.second > cfg.v_star) {
        let Ok((out, rec)) = nf.apply_p(s) else { continue };
        if let Ok(mid) = nf.apply_half_map(rec.entry, s) {
            note(rec.entry, s.second, mid.second);
            note(rec.exit, mid.second, out.second);
        }
        let ratio = out.second / s.second;
        rep.max_log_step = rep.max_log_step.max(ratio.ln().abs());
        if rec.route.is_lower() {
            rep.lower_revolutions += 1;
            let g = p.f2 / p.f1;
            if ratio < cfg.ell * g || ratio > g / cfg.ell {
                rep.r1_violations += 1;
            }
        } else {
            rep.upper_revolutions += 1;
            let g = p.l2() / p.l1();
            if ratio < cfg.ell * g || ratio > g / cfg.ell {
                rep.r2_violations += 1;
            }
        }
    }
    rep.per_map = d.into_values().map(|(map, samples, d_fit)| HalfRouteBound { map, samples, d_fit }).collect();
    rep
}

/// Interval of the wrapped value `u` (R1) or `w` (R2) on which `id` applies.
pub fn wrapped_range(id: MapId, p: &ModelParams) -> (f64, f64) {
    match id {
        MapId::U12 => (p.f2, 2.0 - p.f2),
        MapId::Ll12 => (2.0 - p.f2, 2.0),
        MapId::Ls12 => (0.0, p.f2),
        MapId::U21 => (0.0, 2.0),
        MapId::Ll21 => (1.0, 2.0),
        MapId::Ls21 => (0.0, 1.0),
    }
}

/// Coefficient `c` of the wrapped quantity `c * second - first` on the source strip.
pub fn wrap_span(id: MapId, p: &ModelParams) -> f64 {
    match id.source() {
        Strip::R1 => p.entry_span(),
        Strip::R2Plus => p.exit_span_upper(),
        Strip::R2Minus => p.exit_span_lower(),
    }
}

/// Point on the source strip of `id` at energy `second` whose wrapped value is `wrapped`.
pub fn point_with_wrapped(id: MapId, p: &ModelParams, second: f64, wrapped: f64) -> StripPoint {
    let c = wrap_span(id, p);
    let (_, base) = wrap2(c, second, 0.0);
    StripPoint::new(id.source(), (base - wrapped).rem_euclid(2.0), second)
}

/// Random point in the domain of `id`, at least `margin` (in wrapped units) from its edges.
pub fn sample_domain<R: rand::Rng>(id: MapId, p: &ModelParams, second: f64, margin: f64, rng: &mut R) -> StripPoint {
    let (lo, hi) = wrapped_range(id, p);
    let w = rng.gen_range(lo + margin..hi - margin);
    point_with_wrapped(id, p, second, w)
}

/// Exact half revolution from a strip point, transported back through the charts.
pub fn exact_half_map(
    id: MapId,
    p: &StripPoint,
    charts: &crate::charts::Charts,
    billiard: &crate::billiard::Billiard,
) -> Result<StripPoint> {
    use crate::billiard::Surface;
    let (t, v) = charts.strip_to_collision(*p)?;
    match id.source() {
        Strip::R1 => {
            let ev = billiard.exact_entry(t, v)?;
            let want = if id == MapId::U12 { Surface::SlitTop } else { Surface::SlitBottom };
            if ev.surface != want {
                return Err(Error::RegionMismatch { requested: id.name().into(), found: ev.surface.name().into() });
            }
            charts.collision_to_strip(ev.t, ev.v_after, id.target())
        }
        _ => {
            let ev = billiard.exact_exit(t, v)?;
            charts.collision_to_strip(ev.t, ev.v_after, Strip::R1)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationRow {
    pub level: f64,
    pub map: MapId,
    pub samples: usize,
    pub err_first: f64,
    pub err_second: f64,
    /// Same statistics for the displayed constant terms.
    pub err_second_displayed: f64,
    pub mismatches: usize,
}

impl ValidationRow {
    pub fn err(&self) -> f64 {
        self.err_first.max(self.err_second)
    }

    /// Error relative to the coordinate scales: 2 for the first, the level for the second.
    pub fn relative_err(&self) -> f64 {
        if self.mismatches > 0 || self.samples == 0 {
            return f64::INFINITY;
        }
        (self.err_first / 2.0).max(self.err_second / self.level)
    }
}

/// Max discrepancy between the normal forms and the exact dynamics at each energy level.
pub fn validate_normal_forms(
    nf: &NormalForm,
    charts: &crate::charts::Charts,
    levels: &[f64],
    samples: usize,
    seed: u64,
) -> Vec<ValidationRow> {
    use rayon::prelude::*;
    let billiard = crate::billiard::Billiard::new(&nf.params);
    let shown = nf.clone().with_terms(HTerms::Displayed);
    let mut jobs = Vec::new();
    for (li, &level) in levels.iter().enumerate() {
        for (mi, &id) in MapId::ALL.iter().enumerate() {
            jobs.push((li, level, mi, id));
        }
    }
    jobs.par_iter()
        .map(|&(li, level, mi, id)| {
            let mut rng = crate::rng(seed, (li * 16 + mi) as u64);
            let mut row = ValidationRow {
                level,
                map: id,
                samples: 0,
                err_first: 0.0,
                err_second: 0.0,
                err_second_displayed: 0.0,
                mismatches: 0,
            };
            let (lo, hi) = wrapped_range(id, &nf.params);
            let margin = (AMBIGUITY_WIDTH / level).min(0.25 * (hi - lo));
            for _ in 0..samples {
                let p = sample_domain(id, &nf.params, level, margin, &mut rng);
                let k = nf.branch(id, &p);
                let (a, b) = nf.eval_on(id, k, p.first, p.second, Order::GPlusH);
                let (_, bd) = shown.eval_on(id, k, p.first, p.second, Order::GPlusH);
                match exact_half_map(id, &p, charts, &billiard) {
                    Ok(e) => {
                        row.samples += 1;
                        row.err_first = row.err_first.max((a - e.first).abs());
                        row.err_second = row.err_second.max((b - e.second).abs());
                        row.err_second_displayed = row.err_second_displayed.max((bd - e.second).abs());
                    }
                    Err(_) => row.mismatches += 1,
                }
            }
            row
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct VStarLevel {
    pub level: f64,
    /// Worst relative error over the six maps.
    pub relative_err: f64,
    pub mismatches: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct VStarCalibration {
    pub tolerance: f64,
    pub levels: Vec<VStarLevel>,
    /// Smallest level from which every higher level passes.
    pub v_star: Option<f64>,
}

/// Smallest energy level above which the normal forms are within `tol` relative error.
pub fn calibrate_vstar(
    nf: &NormalForm,
    charts: &crate::charts::Charts,
    levels: &[f64],
    samples: usize,
    tol: f64,
    seed: u64,
) -> VStarCalibration {
    let rows = validate_normal_forms(nf, charts, levels, samples, seed);
    let mut out: Vec<VStarLevel> = levels
        .iter()
        .map(|&level| {
            let r: Vec<_> = rows.iter().filter(|r| r.level == level).collect();
            VStarLevel {
                level,
                relative_err: r.iter().map(|r| r.relative_err()).fold(0.0, f64::max),
                mismatches: r.iter().map(|r| r.mismatches).sum(),
            }
        })
        .collect();
    out.sort_by(|a, b| a.level.total_cmp(&b.level));
    let mut v_star = None;
    for l in out.iter().rev() {
        if l.relative_err < tol {
            v_star = Some(l.level);
        } else {
            break;
        }
    }
    VStarCalibration { tolerance: tol, levels: out, v_star }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SlitProfile;

    #[test]
    fn classifier_examples() {
        let nf = NormalForm::new(&ModelParams::default_model());
        let c = nf.params.entry_span();
        let h = 1000.0 / c;
        // sigma chosen so that u hits the target: u = c h - sigma mod 2
        for (u, tag) in [(0.3, RegionTag::LEnShort), (1.0, RegionTag::UEn), (1.5, RegionTag::LEnLong)] {
            let sigma = (1000.0f64 - u).rem_euclid(2.0);
            let r = nf.region(&StripPoint::new(Strip::R1, sigma, h)).unwrap();
            assert_eq!(r.tag, tag);
            assert!((r.wrapped - u).abs() < 1e-9);
        }
        assert!(nf.region(&StripPoint::new(Strip::R2Plus, 1.0, h)).is_err());
    }

    #[test]
    fn wrap_keeps_fraction_at_large_energy() {
        let c = 0.9876543210987654;
        let h = 1.0e9 + 0.123;
        let (k, r) = wrap2(c, h, 0.5);
        assert!((0.0..2.0).contains(&r));
        let x = 2.0 * k as f64 + r + 0.5;
        assert!((x - c * h).abs() < 1e-6);
    }

    #[test]
    fn static_upper_map_exact() {
        let m = ModelParams::derive(&SlitProfile::constant(0.4), 0.5, 0.25, 0.1).unwrap();
        let nf = NormalForm::new(&m);
        let h = 777.0;
        // u = 1 gives tau = 1
        let sigma = (m.entry_span() * h - 1.0).rem_euclid(2.0);
        let out = nf.apply_half_map(MapId::U12, &StripPoint::new(Strip::R1, sigma, h)).unwrap();
        assert!((out.first - 1.0).abs() < 1e-9);
        assert!((out.second - 0.6 * h).abs() < 1e-9);
    }

    #[test]
    fn region_mismatch_is_reported() {
        let nf = NormalForm::new(&ModelParams::default_model());
        let h = 1000.0 / nf.params.entry_span();
        let sigma = (1000.0f64 - 0.3).rem_euclid(2.0);
        match nf.apply_half_map(MapId::U12, &StripPoint::new(Strip::R1, sigma, h)) {
            Err(Error::RegionMismatch { requested, found }) => {
                assert_eq!(requested, "U12");
                assert_eq!(found, "L_en_short");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn h_part_only_moves_second_coordinate() {
        let nf = NormalForm::new(&ModelParams::default_model());
        let h = 1000.0;
        for sigma in [0.1, 0.7, 1.3, 1.9] {
            let p = StripPoint::new(Strip::R1, sigma, h);
            let (id, _) = nf.select(&p).unwrap();
            let a = nf.apply_half_map_order(id, &p, Order::GOnly).unwrap();
            let b = nf.apply_half_map_order(id, &p, Order::GPlusH).unwrap();
            assert_eq!(a.first, b.first);
            assert!((a.second - b.second).abs() < 100.0 / h);
        }
    }

    #[test]
    fn p0_matches_p_above_threshold() {
        let nf = NormalForm::new(&ModelParams::default_model());
        let cfg = ModifiedSystemConfig::new(50.0, 500.0, 0.99);
        for i in 0..200 {
            let p = StripPoint::new(Strip::R1, (i as f64 * 0.0137) % 2.0, 600.0 + i as f64 * 3.3);
            let a = nf.apply_p(&p).unwrap();
            let b = nf.apply_p0(&p, &cfg).unwrap();
            assert_eq!(a.0, b.0);
        }
    }

    #[test]
    fn forced_entry_scales_energy_by_f2() {
        let nf = NormalForm::new(&ModelParams::default_model());
        let cfg = ModifiedSystemConfig::new(20.0, 400.0, 0.99);
        let h = 200.0;
        let c = nf.params.entry_span();
        let sigma = (c * h - 1.0).rem_euclid(2.0);
        let p = StripPoint::new(Strip::R1, sigma, h);
        assert!(nf.is_forced(&p, &cfg).unwrap());
        let mid = nf.forced_entry(&p);
        assert!((mid.second / h - 0.6).abs() < 0.1);
        let (_, rec) = nf.apply_p0(&p, &cfg).unwrap();
        assert!(rec.forced && rec.route.is_lower());
    }
}
