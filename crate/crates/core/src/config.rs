//! Flat `key = value` configuration files.
//!
//! One assignment per line; `#` starts a comment; blank lines are ignored.
//! Lists are comma-separated. Keys not present keep their defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::experiment::ExperimentConfig;
use crate::geometry::RoomBox;
use crate::optimizer::MethodId;

/// Values taken from the command line; each one wins over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub users: Option<usize>,
    pub oris_elements: Option<usize>,
    pub snr_db: Option<Vec<f64>>,
    pub trials: Option<usize>,
    pub methods: Option<Vec<MethodId>>,
    pub output: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.users {
            cfg.users = v;
            cfg.users_sweep = vec![v];
        }
        if let Some(v) = self.oris_elements {
            cfg.oris_elements = v;
            cfg.oris_sweep = vec![v];
        }
        if let Some(v) = &self.snr_db {
            cfg.snr_db = v.clone();
        }
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        if let Some(v) = &self.methods {
            cfg.methods = v.clone();
        }
        if let Some(v) = &self.output {
            cfg.output = Some(v.clone());
        }
    }
}

/// Every key the parser accepts.
pub const KEYS: &[&str] = &[
    "room_width",
    "room_length",
    "room_height",
    "led_rows",
    "led_cols",
    "led_spacing",
    "oris_elements",
    "oris_wall",
    "oris_spacing",
    "oris_center_height",
    "users",
    "workplane_height",
    "pd_area",
    "lambert_order",
    "fov_semi_angle_deg",
    "filter_gain",
    "concentrator_gain",
    "oris_reflectivity",
    "nlos_receiver_fov",
    "snr_db",
    "trials",
    "methods",
    "seed",
    "output",
    "trial_log",
    "step_size",
    "max_iterations",
    "relative_tolerance",
    "projection_alternations",
    "projection_tolerance",
    "outer_max_iterations",
    "outer_plateau_db",
    "element_scoring",
    "baseline_alignment",
    "sinr_averaging",
    "snr_reference",
    "oris_sweep",
    "users_sweep",
];

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {raw:?}")))
}

fn list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>> {
    if raw.trim().is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',').map(|item| value(key, item.trim())).collect()
}

fn flag(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {raw:?}"))),
    }
}

/// Parse a comma-separated method list such as `proposed,zf`.
pub fn parse_methods(raw: &str) -> Result<Vec<MethodId>> {
    list("methods", raw)
}

/// Re-tag a module error so the message names the offending key.
fn keyed(key: &str, e: Error) -> Error {
    match e {
        Error::Config(msg) if msg.starts_with(key) => Error::Config(msg),
        Error::Config(msg) | Error::Geometry(msg) => Error::Config(format!("{key}: {msg}")),
        other => other,
    }
}

fn assign(cfg: &mut ExperimentConfig, room: &mut [f64; 3], key: &str, raw: &str) -> Result<()> {
    let a = &mut cfg.alternation;
    match key {
        "room_width" => room[0] = value(key, raw)?,
        "room_length" => room[1] = value(key, raw)?,
        "room_height" => room[2] = value(key, raw)?,
        "led_rows" => cfg.led_rows = value(key, raw)?,
        "led_cols" => cfg.led_cols = value(key, raw)?,
        "led_spacing" => cfg.led_spacing_m = value(key, raw)?,
        "oris_elements" => cfg.oris_elements = value(key, raw)?,
        "oris_wall" => cfg.oris_wall = raw.parse().map_err(|e| keyed(key, e))?,
        "oris_spacing" => cfg.oris_spacing_m = value(key, raw)?,
        "oris_center_height" => cfg.oris_center_height_m = value(key, raw)?,
        "users" => cfg.users = value(key, raw)?,
        "workplane_height" => cfg.workplane_height_m = value(key, raw)?,
        "pd_area" => cfg.optical.pd_area_m2 = value(key, raw)?,
        "lambert_order" => cfg.optical.lambert_order = value(key, raw)?,
        "fov_semi_angle_deg" => cfg.optical.fov_semi_angle_rad = value::<f64>(key, raw)?.to_radians(),
        "filter_gain" => cfg.optical.filter_gain = value(key, raw)?,
        "concentrator_gain" => cfg.optical.concentrator_gain = value(key, raw)?,
        "oris_reflectivity" => cfg.optical.oris_reflectivity = value(key, raw)?,
        "nlos_receiver_fov" => cfg.optical.nlos_receiver_fov = flag(key, raw)?,
        "snr_db" => cfg.snr_db = list(key, raw)?,
        "trials" => cfg.trials = value(key, raw)?,
        "methods" => cfg.methods = list(key, raw).map_err(|e| keyed(key, e))?,
        "seed" => cfg.seed = value(key, raw)?,
        "output" => cfg.output = Some(PathBuf::from(raw)),
        "trial_log" => cfg.trial_log = Some(PathBuf::from(raw)),
        "step_size" => a.ascent.step_size = value(key, raw)?,
        "max_iterations" => a.ascent.max_iterations = value(key, raw)?,
        "relative_tolerance" => a.ascent.relative_tolerance = value(key, raw)?,
        "projection_alternations" => a.ascent.projection_alternations = value(key, raw)?,
        "projection_tolerance" => a.ascent.projection_tolerance = value(key, raw)?,
        "outer_max_iterations" => a.max_outer_iterations = value(key, raw)?,
        "outer_plateau_db" => a.plateau_db = value(key, raw)?,
        "element_scoring" => a.scoring = raw.parse().map_err(|e| keyed(key, e))?,
        "baseline_alignment" => a.baseline_alignment = raw.parse().map_err(|e| keyed(key, e))?,
        "sinr_averaging" => cfg.averaging = raw.parse().map_err(|e| keyed(key, e))?,
        "snr_reference" => cfg.snr_reference = raw.parse().map_err(|e| keyed(key, e))?,
        "oris_sweep" => cfg.oris_sweep = list(key, raw)?,
        "users_sweep" => cfg.users_sweep = list(key, raw)?,
        _ => return Err(Error::Config(format!("unknown key {key:?}"))),
    }
    Ok(())
}

/// Prefix a validation message with the config key it concerns, when one
/// can be identified.
fn name_key(e: Error) -> Error {
    let Error::Config(msg) = e else { return e };
    if KEYS.iter().any(|k| msg.starts_with(k)) {
        return Error::Config(msg);
    }
    match KEYS.iter().find(|k| msg.contains(*k)) {
        Some(k) => Error::Config(format!("{k}: {msg}")),
        None => Error::Config(msg),
    }
}

/// Parse configuration text on top of the defaults, then apply overrides
/// and validate.
pub fn parse_config_str(text: &str, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut room = [cfg.room.width_m, cfg.room.length_m, cfg.room.height_m];
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, raw)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {}: expected `key = value`", n + 1)));
        };
        let (key, raw) = (key.trim(), raw.trim());
        assign(&mut cfg, &mut room, key, raw)?;
    }
    cfg.room = RoomBox::new(room[0], room[1], room[2]).map_err(|e| keyed("room_width", e))?;
    overrides.apply(&mut cfg);
    cfg.validate().map_err(name_key)?;
    Ok(cfg)
}

/// Read and parse a config file; `None` means defaults plus overrides.
pub fn parse_config(path: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig> {
    let text = match path {
        Some(p) => {
            std::fs::read_to_string(p).map_err(|e| Error::Config(format!("config file {}: {e}", p.display())))?
        }
        None => String::new(),
    };
    parse_config_str(&text, overrides)
}
