//! JSON run configuration shared by every subcommand. Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::curves::CurveConfig;
use crate::error::{Error, Result};
use crate::hyperbolic::{common_cone, expansion_rates, revolution_eigen_floor, ConeSpec};
use crate::maps::{ModifiedSystemConfig, NormalForm};
use crate::model::{ModelParams, NormalFormConstants, Piece, SlitProfile, DEFAULT_LAMBDA, DEFAULT_X0};
use crate::stats::{Dynamics, EnsembleConfig, EnsembleSetup, InitMode, NhatMode};

/// Frequency of the large-frequency profile (first member of the resonant
/// family with a common invariant cone is 41).
pub const LARGE_OMEGA: f64 = 49.0;
/// Calibrated thresholds (1% relative normal-form error).
pub const DEFAULT_V_STAR: f64 = 64.0;
pub const LARGE_OMEGA_V_STAR: f64 = 256.0;
pub const DESK_V_STAR: f64 = 1024.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    /// `omega = 17`, `f1 = 0.4`, `f2 = 0.6`.
    #[default]
    Default,
    /// Same heights at another `omega = 1 (mod 4)`.
    Resonant { omega: f64 },
    /// Odd `omega`, `f2 = 1 - f1`.
    Symmetric { omega: f64, amplitude: f64, f1: f64 },
    /// `h0 + A sin(omega pi t + phi0)` with the `model` section.
    Sine {
        h0: f64,
        #[serde(rename = "A")]
        amplitude: f64,
        omega: f64,
        phi0: f64,
    },
    /// Piecewise profile on `[0, 2)` with the `model` section.
    Pieces { pieces: Vec<Piece> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub lambda: f64,
    pub x0: f64,
    pub c_bound: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { lambda: DEFAULT_LAMBDA, x0: DEFAULT_X0, c_bound: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub v_star: f64,
    /// Defaults to `10 v_star`.
    pub v0: Option<f64>,
    pub ell: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { v_star: DEFAULT_V_STAR, v0: None, ell: 0.99 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    /// Start on the right floor at this time and speed.
    pub t0: f64,
    pub v: f64,
    pub events: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection { t0: 0.3, v: 200.0, events: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSection {
    pub levels: Vec<f64>,
    pub samples: usize,
}

impl Default for ValidateSection {
    fn default() -> Self {
        ValidateSection { levels: vec![250.0, 500.0, 1000.0], samples: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateSection {
    pub levels: Vec<f64>,
    pub samples: usize,
    pub tol: f64,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        CalibrateSection { levels: (0..10).map(|j| 4.0 * 2f64.powi(j)).collect(), samples: 200, tol: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConeSection {
    pub samples: usize,
    /// Defaults to `[v_star, 10 v_star]`.
    pub h_range: Option<(f64, f64)>,
    pub full_p: bool,
}

impl Default for ConeSection {
    fn default() -> Self {
        ConeSection { samples: 100_000, h_range: None, full_p: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrowthSection {
    pub complexity_trials: usize,
    pub curves: usize,
    pub points: usize,
    pub trajectories: usize,
    pub horizon: usize,
    pub n0: usize,
    pub kappa1: f64,
    pub epochs: Vec<usize>,
    pub floor: f64,
    /// Defaults to `[10 v_star, 40 v_star]`.
    pub h_range: Option<(f64, f64)>,
}

impl Default for GrowthSection {
    fn default() -> Self {
        GrowthSection {
            complexity_trials: 1000,
            curves: 1_000_000,
            points: 20_000,
            trajectories: 1000,
            horizon: 12,
            n0: 5,
            kappa1: 4.0,
            epochs: vec![1, 2, 4, 6, 10],
            floor: 1e-15,
            h_range: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub n_orbits: usize,
    /// Defaults to `[10 v_star, 40 v_star]`.
    pub v_range: Option<(f64, f64)>,
    pub horizon: usize,
    pub dynamics: Dynamics,
    pub init: InitMode,
    /// Defaults to `kappa1 / lambda_min`.
    pub theta1: Option<f64>,
    pub n0: usize,
    pub nhat: NhatMode,
    pub renormalize_above: Option<f64>,
    pub energy_cap: Option<f64>,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection {
            n_orbits: 10_000,
            v_range: None,
            horizon: 51,
            dynamics: Dynamics::ModifiedP0,
            init: InitMode::LongCurves,
            theta1: None,
            n0: 50,
            nhat: NhatMode::Tangent,
            renormalize_above: Some(1e12),
            energy_cap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsSection {
    pub itinerary_depth: usize,
    /// `kappa = eta / n0`.
    pub eta: f64,
    pub walks: usize,
    pub walk_r: f64,
}

impl Default for StatsSection {
    fn default() -> Self {
        StatsSection { itinerary_depth: 3, eta: 1.0, walks: 100_000, walk_r: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EscapeSection {
    pub horizon: usize,
    pub t: usize,
    pub ts: Vec<usize>,
    /// Defaults to half the measured drift.
    pub alpha: Option<f64>,
    pub n_orbits: usize,
    /// Defaults to `[v_star, 4 v_star]`.
    pub v_range: Option<(f64, f64)>,
    pub exact_orbits: usize,
    pub exact_horizon: usize,
    /// In units of `V0`.
    pub exact_v_range: (f64, f64),
    /// In units of `V0`.
    pub exact_cap: f64,
}

impl Default for EscapeSection {
    fn default() -> Self {
        EscapeSection {
            horizon: 200,
            t: 20,
            ts: vec![5, 10, 15, 20, 25],
            alpha: None,
            n_orbits: 4000,
            v_range: None,
            exact_orbits: 0,
            exact_horizon: 6,
            exact_v_range: (5.0, 10.0),
            exact_cap: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DumpSection {
    pub grid: usize,
}

impl Default for DumpSection {
    fn default() -> Self {
        DumpSection { grid: 401 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub profile: ProfileSpec,
    pub model: Option<ModelSection>,
    pub thresholds: Thresholds,
    pub simulate: SimulateSection,
    pub validate: ValidateSection,
    pub calibrate: CalibrateSection,
    pub cone: ConeSection,
    pub growth: GrowthSection,
    pub ensemble: EnsembleSection,
    pub stats: StatsSection,
    pub escape: EscapeSection,
    pub dump: DumpSection,
}

/// Model, thresholds and derived objects of one configuration.
#[derive(Debug, Clone)]
pub struct Setup {
    pub params: ModelParams,
    pub consts: NormalFormConstants,
    pub modcfg: ModifiedSystemConfig,
    pub cone: Option<ConeSpec>,
    /// Smallest per-revolution expansion: from the cone when there is one,
    /// else from the linear revolutions' eigenvalues.
    pub lambda_min: f64,
}

impl Setup {
    pub fn nf(&self) -> NormalForm {
        NormalForm::new(&self.params)
    }

    pub fn ensemble(&self) -> EnsembleSetup {
        EnsembleSetup { nf: self.nf(), modcfg: self.modcfg, cone: self.cone }
    }

    pub fn curve_config(&self) -> CurveConfig {
        CurveConfig { cone: self.cone, ..Default::default() }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    /// The large-frequency profile with its calibrated threshold.
    pub fn large_omega() -> RunConfig {
        RunConfig {
            profile: ProfileSpec::Resonant { omega: LARGE_OMEGA },
            thresholds: Thresholds { v_star: LARGE_OMEGA_V_STAR, ..Default::default() },
            ..Default::default()
        }
    }

    /// `omega = 17`, `f1 = 0.2`, `f2 = 0.8`, `V0 = 4 V*`.
    pub fn desk() -> RunConfig {
        RunConfig {
            profile: ProfileSpec::Symmetric { omega: 17.0, amplitude: 0.4, f1: 0.2 },
            thresholds: Thresholds { v_star: DESK_V_STAR, v0: Some(4.0 * DESK_V_STAR), ell: 0.99 },
            ..Default::default()
        }
    }

    /// `f1 = f2 = 0.5` at the large frequency, unmodified dynamics.
    pub fn null_control() -> RunConfig {
        let mut c = RunConfig::large_omega();
        c.profile = ProfileSpec::Symmetric { omega: LARGE_OMEGA, amplitude: 0.2, f1: 0.5 };
        c.ensemble.dynamics = Dynamics::NormalFormP;
        c.ensemble.init = InitMode::Uniform;
        c
    }

    pub fn params(&self) -> Result<ModelParams> {
        if self.model.is_some() && !matches!(self.profile, ProfileSpec::Sine { .. } | ProfileSpec::Pieces { .. }) {
            return Err(Error::Config("the model section only applies to sine and pieces profiles".into()));
        }
        let m = self.model.clone().unwrap_or_default();
        match self.profile {
            ProfileSpec::Default => Ok(ModelParams::default_model()),
            ProfileSpec::Resonant { omega } => ModelParams::resonant(omega),
            ProfileSpec::Symmetric { omega, amplitude, f1 } => ModelParams::symmetric_heights(omega, amplitude, f1),
            ProfileSpec::Sine { h0, amplitude, omega, phi0 } => {
                ModelParams::derive(&SlitProfile::sine(h0, amplitude, omega, phi0)?, m.lambda, m.x0, m.c_bound)
            }
            ProfileSpec::Pieces { ref pieces } => {
                ModelParams::derive(&SlitProfile::new(pieces.clone())?, m.lambda, m.x0, m.c_bound)
            }
        }
    }

    pub fn modified(&self) -> ModifiedSystemConfig {
        let t = &self.thresholds;
        ModifiedSystemConfig::new(t.v_star, t.v0.unwrap_or(10.0 * t.v_star), t.ell)
    }

    /// Builds the model and the cone. A missing cone is not an error; the
    /// modified-system thresholds are checked only when `f1 != f2`.
    pub fn setup(&self) -> Result<Setup> {
        let params = self.params()?;
        let consts = NormalFormConstants::new(&params);
        let modcfg = self.modified();
        if (params.f1 - params.f2).abs() > 1e-9 {
            modcfg.validate(&params).map_err(|e| Error::Config(e.to_string()))?;
        }
        let cone = common_cone(&params, &consts).ok();
        let lambda_min = match &cone {
            Some(c) => expansion_rates(c, &params, &consts).lambda_f,
            None => revolution_eigen_floor(&params, &consts).unwrap_or(f64::NAN),
        };
        Ok(Setup { params, consts, modcfg, cone, lambda_min })
    }

    /// `kappa1 / lambda_min`, the long-curve size.
    pub fn theta1(&self, setup: &Setup) -> f64 {
        self.ensemble.theta1.unwrap_or(self.growth.kappa1 / setup.lambda_min)
    }

    pub fn ensemble_config(&self, setup: &Setup) -> EnsembleConfig {
        let e = &self.ensemble;
        let v = self.thresholds.v_star;
        EnsembleConfig {
            seed: self.seed,
            n_orbits: e.n_orbits,
            v_range: e.v_range.unwrap_or((10.0 * v, 40.0 * v)),
            horizon: e.horizon,
            dynamics: e.dynamics,
            init: e.init,
            alpha: self.escape.alpha.unwrap_or(0.0),
            t_escape: self.escape.t,
            theta1: self.theta1(setup),
            n0: e.n0,
            nhat: e.nhat,
            renormalize_above: e.renormalize_above,
            energy_cap: e.energy_cap,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json(r#"{"seed": 3, "colour": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"ensemble": {"n_orbits": 3, "orbits": 1}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"profile": {"kind": "resonant", "omega": 49, "x": 1}}"#).is_err());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c = RunConfig::from_json(r#"{"seed": 9, "profile": {"kind": "resonant", "omega": 49}}"#).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.ensemble, EnsembleSection::default());
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn model_section_needs_sine_profile() {
        let c = RunConfig { model: Some(ModelSection::default()), ..Default::default() };
        assert!(c.params().is_err());
    }
}
