//! Run configuration: one JSON document with a section per subcommand.
//!
//! Rates are given as `Hz/2π` (a value of `122e3` means `Γ = 2π·122 kHz`)
//! and angles in degrees; both are converted to angular SI units here.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sqm_core::{Bloch, ImperfectionParams, MeasChannel};

use crate::error::CliError;

/// Unit convention recorded in every manifest.
pub const UNITS: &str = "rates in Hz/2pi (angular rate = 2*pi*value), angles in degrees, times in seconds";

/// Environment variable that overrides the output directory.
pub const OUTPUT_DIR_ENV: &str = "SQM_OUTPUT_DIR";

pub fn hz(v: f64) -> f64 {
    TAU * v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub delta_deg: f64,
    pub gamma_hz_2pi: f64,
    pub eta: f64,
    #[serde(default)]
    pub dephasing_only: bool,
}

impl ChannelConfig {
    pub fn to_channel(&self) -> Result<MeasChannel, CliError> {
        let delta = self.delta_deg.to_radians();
        let gamma = hz(self.gamma_hz_2pi);
        let ch = if self.dephasing_only {
            MeasChannel::dephasing(delta, gamma)?
        } else {
            MeasChannel::new(delta, gamma, self.eta)?
        };
        Ok(ch)
    }

    pub fn from_channel(ch: &MeasChannel) -> Self {
        ChannelConfig {
            delta_deg: ch.delta.to_degrees(),
            gamma_hz_2pi: ch.gamma / TAU,
            eta: ch.eta,
            dephasing_only: ch.dephasing_only,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImperfectionConfig {
    pub rabi_detuning_hz_2pi: f64,
    pub lo_leak_hz_2pi: Vec<f64>,
    pub coherent_b_hz_2pi: f64,
    pub t1_s: Option<f64>,
    pub ringup_kappa_hz_2pi: Option<f64>,
}

impl ImperfectionConfig {
    pub fn to_params(&self) -> ImperfectionParams {
        ImperfectionParams {
            rabi_detuning_rate: hz(self.rabi_detuning_hz_2pi),
            lo_leak_rate: self.lo_leak_hz_2pi.iter().map(|&v| hz(v)).collect(),
            coherent_b_rate: hz(self.coherent_b_hz_2pi),
            t1: self.t1_s,
            ringup_kappa: self.ringup_kappa_hz_2pi.map(hz),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub initial: [f64; 3],
    pub duration_s: f64,
    /// Output (record) step.
    pub dt_s: f64,
    /// Internal steps per output step.
    pub decimation: usize,
    pub n_traj: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig { initial: [-1.0, 0.0, 0.0], duration_s: 1e-6, dt_s: 16e-9, decimation: 4, n_traj: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    /// Record CSV; its JSON sidecar sits next to it with extension `.json`.
    pub record: Option<PathBuf>,
    pub initial: [f64; 3],
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { record: None, initial: [-1.0, 0.0, 0.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum InitialConfig {
    Point([f64; 3]),
    /// Isotropic in-plane Gaussian of this width, truncated to the disk.
    Gaussian(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistributionsConfig {
    pub initial: InitialConfig,
    pub times_s: Vec<f64>,
    pub n_traj: usize,
    pub dt_s: f64,
    /// Histogram bins per axis.
    pub bins: usize,
    /// Histogram over the ball instead of the `xy` plane.
    pub ball: bool,
    pub pde: bool,
    pub dt_pde_s: f64,
    pub pde_nr: usize,
    pub pde_nphi: usize,
}

impl Default for DistributionsConfig {
    fn default() -> Self {
        DistributionsConfig {
            initial: InitialConfig::Gaussian(0.2),
            times_s: vec![0.256e-6, 0.512e-6, 1.024e-6],
            n_traj: 100_000,
            dt_s: 4e-9,
            bins: 101,
            ball: false,
            pde: true,
            dt_pde_s: 2e-9,
            pde_nr: 200,
            pde_nphi: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionConfig {
    pub ring_inner: f64,
    pub ring_outer: f64,
    pub start_radius: f64,
    pub start_angle_deg: f64,
    pub times_s: Vec<f64>,
    pub n_traj: usize,
    pub dt_s: f64,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig {
            ring_inner: 0.86,
            ring_outer: 0.92,
            start_radius: 0.89,
            start_angle_deg: 45.0,
            times_s: (0..=10).map(|k| k as f64 * 80e-9).collect(),
            n_traj: 20_000,
            dt_s: 4e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisturbanceConfig {
    pub dt_s: f64,
    pub sphere_n_theta: usize,
    pub sphere_n_phi: usize,
    pub disk_n: usize,
    pub ball_n: usize,
}

impl Default for DisturbanceConfig {
    fn default() -> Self {
        DisturbanceConfig { dt_s: 64e-9, sphere_n_theta: 61, sphere_n_phi: 120, disk_n: 101, ball_n: 31 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MleConfig {
    /// Transfer-map CSV to analyse instead of simulating preparations.
    pub maps: Option<PathBuf>,
    pub preparations: Vec<[f64; 3]>,
    pub n_traj: usize,
    pub duration_s: f64,
    pub dt_s: f64,
    /// Points per axis of the confidence-region grid.
    pub region_grid: usize,
    pub write_maps: bool,
}

impl Default for MleConfig {
    fn default() -> Self {
        let levels = [-0.6, -0.2, 0.2, 0.6];
        let preparations = levels.iter().flat_map(|&x| levels.iter().map(move |&y| [x, y, 0.0])).collect();
        MleConfig {
            maps: None,
            preparations,
            n_traj: 2000,
            duration_s: 1e-6,
            dt_s: 16e-9,
            region_grid: 61,
            write_maps: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateConfig {
    pub tau_s: f64,
    pub dt_s: f64,
    pub n_records: usize,
    pub ramsey_times_s: Vec<f64>,
    pub ramsey_n_traj: usize,
    pub ramsey_dt_s: f64,
    pub tomography: bool,
    pub tomo_initial: [f64; 3],
    pub tomo_n_traj: usize,
    pub tomo_duration_s: f64,
    pub tomo_dt_s: f64,
    pub tomo_voxels: usize,
    pub tomo_min_count: usize,
    /// Factor applied to every filter rate, to model miscalibration.
    pub tomo_filter_gamma_scale: f64,
    pub readout_fidelity: f64,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        CalibrateConfig {
            tau_s: 1e-6,
            dt_s: 4e-9,
            n_records: 10_000,
            ramsey_times_s: (0..=25).map(|k| k as f64 * 0.16e-6).collect(),
            ramsey_n_traj: 5000,
            ramsey_dt_s: 4e-9,
            tomography: true,
            tomo_initial: [-1.0, 0.0, 0.0],
            tomo_n_traj: 100_000,
            tomo_duration_s: 1e-6,
            tomo_dt_s: 16e-9,
            tomo_voxels: 15,
            tomo_min_count: 30,
            tomo_filter_gamma_scale: 1.0,
            readout_fidelity: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub chi_hz_2pi: f64,
    pub kappa_hz_2pi: f64,
    /// Target rate; fixes `n̄₀ = Γκ/(2χ²)`.
    pub gamma_hz_2pi: f64,
    pub delta_deg: f64,
    pub fock_dim: usize,
    pub eta: f64,
    pub duration_s: f64,
    pub dt_s: f64,
    pub ringup: bool,
    pub ringup_duration_s: f64,
    pub ringup_window_s: f64,
    pub lo_leak: Option<f64>,
    /// Joint trajectories compared against the effective filter; 0 skips.
    pub compare_traj: usize,
    pub compare_duration_s: f64,
    pub record_dt_s: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            chi_hz_2pi: 0.18e6,
            kappa_hz_2pi: 7.2e6,
            gamma_hz_2pi: 122e3,
            delta_deg: 45.0,
            fock_dim: 40,
            eta: 0.41,
            duration_s: 2e-6,
            dt_s: sqm_core::cavity::DEFAULT_DT,
            ringup: true,
            ringup_duration_s: 0.3e-6,
            ringup_window_s: 10e-9,
            lo_leak: Some(0.01),
            compare_traj: 4,
            compare_duration_s: 1e-6,
            record_dt_s: 2e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcceptanceConfig {
    /// Criterion ids to run; empty runs all.
    pub only: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub channels: Vec<ChannelConfig>,
    pub imperfections: ImperfectionConfig,
    pub simulate: SimulateConfig,
    pub filter: FilterConfig,
    pub distributions: DistributionsConfig,
    pub diffusion: DiffusionConfig,
    pub disturbance: DisturbanceConfig,
    pub mle: MleConfig,
    pub calibrate: CalibrateConfig,
    pub oracle: OracleConfig,
    pub acceptance: AcceptanceConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 1,
            output_dir: PathBuf::from("sqm-out"),
            channels: vec![
                ChannelConfig { delta_deg: 0.0, gamma_hz_2pi: 122e3, eta: 0.41, dephasing_only: false },
                ChannelConfig { delta_deg: 90.0, gamma_hz_2pi: 122e3, eta: 0.49, dephasing_only: false },
            ],
            imperfections: ImperfectionConfig::default(),
            simulate: SimulateConfig::default(),
            filter: FilterConfig::default(),
            distributions: DistributionsConfig::default(),
            diffusion: DiffusionConfig::default(),
            disturbance: DisturbanceConfig::default(),
            mle: MleConfig::default(),
            calibrate: CalibrateConfig::default(),
            oracle: OracleConfig::default(),
            acceptance: AcceptanceConfig::default(),
        }
    }
}

impl Config {
    /// Defaults, then the file (if any), then `path=value` overrides.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut value = serde_json::to_value(Config::default()).expect("default config serializes");
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let user: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            merge(&mut value, user);
        }
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn channels(&self) -> Result<Vec<MeasChannel>, CliError> {
        self.channels.iter().map(ChannelConfig::to_channel).collect()
    }
}

pub fn bloch(v: [f64; 3]) -> Bloch {
    Bloch::new(v[0], v[1], v[2])
}

/// Objects whose keys all exist in `base` merge leafwise; anything else
/// (scalars, arrays, a different enum variant) replaces the default.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) if p.keys().all(|k| b.contains_key(k)) => {
            for (k, v) in p {
                merge(b.get_mut(&k).expect("key checked"), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Apply `a.b.c=value`. The value is parsed as JSON, falling back to a
/// string. Array elements are addressed by index.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not of the form path=value")))?;
    let new: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for key in path.split('.') {
        node = match node {
            Value::Object(map) => map
                .get_mut(key)
                .ok_or_else(|| CliError::Config(format!("unknown config key `{path}`")))?,
            Value::Array(items) => {
                let i: usize = key
                    .parse()
                    .map_err(|_| CliError::Config(format!("`{key}` in `{path}` is not an index")))?;
                items.get_mut(i).ok_or_else(|| CliError::Config(format!("index {i} out of range in `{path}`")))?
            }
            _ => return Err(CliError::Config(format!("`{path}` descends into a scalar"))),
        };
    }
    *node = new;
    Ok(())
}
