//! TOML scenario files.
//!
//! Keys carry their unit in the name (`altitude_km`, `flight_path_angle_deg`)
//! and are converted to SI radians/metres here, at the boundary. Every
//! section and key is optional; omitted values fall back to the built-in
//! Mars scenario, which is also shipped as `scenarios/mars_default.toml`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::EntryState;
use crate::guidance::GuidanceConfig;
use crate::models::{DispersionSet, PlanetModel, VehicleModel, World};
use crate::montecarlo::{BatchOptions, DispersionSpec, Interval};
use crate::reference::{ReferenceProfile, ReferenceSpec};
use crate::sim::{GuidanceMode, RunConfig};
use crate::{Error, Result};

/// The default scenario as shipped.
pub const DEFAULT_SCENARIO_TOML: &str = include_str!("../../../scenarios/mars_default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanetSection {
    pub mu_m3_s2: f64,
    pub radius_km: f64,
    pub rho0_kg_m3: f64,
    pub scale_height_km: f64,
}

impl Default for PlanetSection {
    fn default() -> Self {
        let p = PlanetModel::MARS;
        PlanetSection {
            mu_m3_s2: p.mu,
            radius_km: p.r_ref / 1000.0,
            rho0_kg_m3: p.rho0,
            scale_height_km: p.h_s / 1000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleSection {
    pub mass_kg: f64,
    pub area_m2: f64,
    pub ballistic_coefficient_kg_m2: f64,
    pub lift_to_drag: f64,
}

impl Default for VehicleSection {
    fn default() -> Self {
        VehicleSection {
            mass_kg: 992.0,
            area_m2: 16.0,
            ballistic_coefficient_kg_m2: 115.0,
            lift_to_drag: 0.18,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    pub altitude_km: f64,
    pub velocity_km_s: f64,
    pub flight_path_angle_deg: f64,
    pub heading_deg: f64,
    pub latitude_deg: f64,
    pub longitude_deg: f64,
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection {
            altitude_km: 126.1,
            velocity_km_s: 6.75,
            flight_path_angle_deg: -14.4,
            heading_deg: 90.0,
            latitude_deg: 0.0,
            longitude_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerminalSection {
    pub velocity_m_s: f64,
    pub altitude_km: f64,
    /// Downrange the reference search aims for.
    pub downrange_km: f64,
}

impl Default for TerminalSection {
    fn default() -> Self {
        TerminalSection {
            velocity_m_s: 503.0,
            altitude_km: 10.0,
            downrange_km: 723.32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainsSection {
    pub a: f64,
    pub b: f64,
    pub eps0: f64,
    pub g0_floor_m_s4: f64,
}

impl Default for GainsSection {
    fn default() -> Self {
        let g = GuidanceConfig::default();
        GainsSection {
            a: g.a,
            b: g.b,
            eps0: g.eps0,
            g0_floor_m_s4: g.g0_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObserverSection {
    pub l1: f64,
    pub l2: f64,
    pub eps: f64,
}

impl Default for ObserverSection {
    fn default() -> Self {
        let g = GuidanceConfig::default();
        ObserverSection {
            l1: g.l1,
            l2: g.l2,
            eps: g.eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSection {
    pub dt_s: f64,
    pub max_time_s: f64,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        IntegratorSection {
            dt_s: crate::sim::DEFAULT_DT,
            max_time_s: 1000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceSection {
    pub switch_time_s: f64,
    pub ramp_s: f64,
    pub smoothing_window: usize,
}

impl Default for ReferenceSection {
    fn default() -> Self {
        ReferenceSection {
            switch_time_s: 60.0,
            ramp_s: 20.0,
            smoothing_window: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementSection {
    pub drag_noise_std_m_s2: f64,
    pub seed: u64,
}

impl Default for MeasurementSection {
    fn default() -> Self {
        MeasurementSection {
            drag_noise_std_m_s2: 0.0,
            seed: 0,
        }
    }
}

/// Batch settings; the gains replace the nominal ones for dispersed runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloSection {
    pub runs: usize,
    pub seed: u64,
    pub a: f64,
    pub b: f64,
    pub eps0: f64,
    pub eps: f64,
    pub mass_frac: [f64; 2],
    pub density_frac: [f64; 2],
    pub cl_frac: [f64; 2],
    pub cd_frac: [f64; 2],
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        let d = DispersionSpec::default();
        let pair = |iv: Interval| [iv.lo, iv.hi];
        MonteCarloSection {
            runs: 1000,
            seed: 2024,
            a: 20.0,
            b: 5.0,
            eps0: 20.0,
            eps: 0.45,
            mass_frac: pair(d.mass),
            density_frac: pair(d.density),
            cl_frac: pair(d.cl),
            cd_frac: pair(d.cd),
        }
    }
}

/// Input files, relative to the scenario file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilesSection {
    pub profile: Option<PathBuf>,
    pub delta_samples: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub planet: PlanetSection,
    pub vehicle: VehicleSection,
    pub initial: InitialSection,
    pub terminal: TerminalSection,
    pub guidance: GainsSection,
    pub observer: ObserverSection,
    pub integrator: IntegratorSection,
    pub reference: ReferenceSection,
    pub measurement: MeasurementSection,
    pub montecarlo: MonteCarloSection,
    pub files: FilesSection,
}

impl ScenarioConfig {
    /// Parses `text`; relative file paths are resolved against `base_dir`
    /// and must exist.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for p in [&mut cfg.files.profile, &mut cfg.files.delta_samples]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
            if !p.is_file() {
                return Err(Error::Config(format!("referenced file {} does not exist", p.display())));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        self.world().map_err(wrap)?;
        self.initial_state().validate().map_err(wrap)?;
        self.guidance().validate().map_err(wrap)?;
        self.mc_guidance().validate().map_err(wrap)?;
        self.dispersion_spec().validate().map_err(wrap)?;
        let t = &self.terminal;
        let i = &self.integrator;
        if !(t.velocity_m_s > 0.0 && t.downrange_km > 0.0 && i.dt_s > 0.0 && i.max_time_s > 0.0) {
            return Err(Error::Config(
                "terminal velocity, downrange, dt_s and max_time_s must be positive".into(),
            ));
        }
        if !(self.measurement.drag_noise_std_m_s2 >= 0.0) {
            return Err(Error::Config("drag_noise_std_m_s2 must be non-negative".into()));
        }
        Ok(())
    }

    pub fn world(&self) -> Result<World> {
        let p = &self.planet;
        let planet = PlanetModel {
            mu: p.mu_m3_s2,
            r_ref: p.radius_km * 1000.0,
            rho0: p.rho0_kg_m3,
            h_s: p.scale_height_km * 1000.0,
        };
        planet.validate()?;
        let v = &self.vehicle;
        let vehicle =
            VehicleModel::from_ballistic(v.mass_kg, v.area_m2, v.ballistic_coefficient_kg_m2, v.lift_to_drag)?;
        Ok(World { planet, vehicle })
    }

    pub fn initial_state(&self) -> EntryState {
        let i = &self.initial;
        EntryState {
            r: (self.planet.radius_km + i.altitude_km) * 1000.0,
            lon: i.longitude_deg.to_radians(),
            lat: i.latitude_deg.to_radians(),
            v: i.velocity_km_s * 1000.0,
            gamma: i.flight_path_angle_deg.to_radians(),
            chi: i.heading_deg.to_radians(),
        }
    }

    pub fn guidance(&self) -> GuidanceConfig {
        GuidanceConfig {
            a: self.guidance.a,
            b: self.guidance.b,
            eps0: self.guidance.eps0,
            l1: self.observer.l1,
            l2: self.observer.l2,
            eps: self.observer.eps,
            g0_floor: self.guidance.g0_floor_m_s4,
        }
    }

    pub fn mc_guidance(&self) -> GuidanceConfig {
        let m = &self.montecarlo;
        GuidanceConfig {
            a: m.a,
            b: m.b,
            eps0: m.eps0,
            eps: m.eps,
            ..self.guidance()
        }
    }

    pub fn dispersion_spec(&self) -> DispersionSpec {
        let m = &self.montecarlo;
        let iv = |p: [f64; 2]| Interval::new(p[0], p[1]);
        DispersionSpec {
            mass: iv(m.mass_frac),
            density: iv(m.density_frac),
            cl: iv(m.cl_frac),
            cd: iv(m.cd_frac),
        }
    }

    pub fn batch_options(&self, collect_delta: bool) -> BatchOptions {
        BatchOptions {
            n_runs: self.montecarlo.runs,
            master_seed: self.montecarlo.seed,
            collect_delta,
        }
    }

    pub fn reference_spec(&self) -> Result<ReferenceSpec> {
        Ok(ReferenceSpec {
            world: self.world()?,
            initial: self.initial_state(),
            v_f: self.terminal.velocity_m_s,
            h_f: self.terminal.altitude_km * 1000.0,
            s_desired: self.terminal.downrange_km * 1000.0,
            dt: self.integrator.dt_s,
            max_time: self.integrator.max_time_s,
            switch_time: self.reference.switch_time_s,
            ramp: self.reference.ramp_s,
            smoothing_window: self.reference.smoothing_window,
        })
    }

    /// Nominal-gain run against `profile`.
    pub fn run_config(&self, mode: GuidanceMode, profile: Arc<ReferenceProfile>) -> Result<RunConfig> {
        let noise = self.measurement.drag_noise_std_m_s2;
        Ok(RunConfig {
            mode,
            world: self.world()?,
            dispersions: DispersionSet::NOMINAL,
            guidance: self.guidance(),
            profile,
            initial: self.initial_state(),
            t0: 0.0,
            dt: self.integrator.dt_s,
            max_time: self.integrator.max_time_s,
            v_f: self.terminal.velocity_m_s,
            h_f: self.terminal.altitude_km * 1000.0,
            noise_std: (noise > 0.0).then_some(noise),
            seed: self.measurement.seed,
            log_every: 1,
        })
    }

    /// Output-feedback run with the batch gains, used as the batch template.
    pub fn mc_run_config(&self, profile: Arc<ReferenceProfile>) -> Result<RunConfig> {
        Ok(RunConfig {
            guidance: self.mc_guidance(),
            ..self.run_config(GuidanceMode::OutputFeedback, profile)?
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_scenario_equals_builtin_default() {
        let cfg = ScenarioConfig::from_toml_str(DEFAULT_SCENARIO_TOML, Path::new(".")).unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
    }

    #[test]
    fn unit_conversion_at_boundary() {
        let cfg = ScenarioConfig::default();
        let s = cfg.initial_state();
        assert!((s.r - (3_397_000.0 + 126_100.0)).abs() < 1e-6);
        assert_eq!(s.v, 6750.0);
        assert!((s.gamma.to_degrees() + 14.4).abs() < 1e-12);
        let spec = cfg.reference_spec().unwrap();
        assert!((spec.s_desired - 723_320.0).abs() < 1e-6);
        assert_eq!(spec.h_f, 10_000.0);
    }

    #[test]
    fn partial_file_falls_back_to_defaults() {
        let cfg = ScenarioConfig::from_toml_str("[guidance]\na = 1.0\nb = 1.0\n", Path::new(".")).unwrap();
        assert_eq!(cfg.guidance().a, 1.0);
        assert_eq!(cfg.observer, ObserverSection::default());
    }

    #[test]
    fn unknown_keys_and_missing_files_rejected() {
        assert!(ScenarioConfig::from_toml_str("[initial]\naltitude = 3\n", Path::new(".")).is_err());
        let missing = "[files]\nprofile = \"no/such/profile.csv\"\n";
        assert!(matches!(
            ScenarioConfig::from_toml_str(missing, Path::new(".")),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn mc_gains_override_nominal() {
        let g = ScenarioConfig::default().mc_guidance();
        assert_eq!((g.a, g.b, g.eps0, g.eps), (20.0, 5.0, 20.0, 0.45));
        assert_eq!((g.l1, g.l2), (2.0, 1.0));
    }
}
