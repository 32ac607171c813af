//! Run configuration: flat `section.key = value` text files with defaults
//! for the TEAM-28 levitation benchmark (20 A at 50 Hz, 0.107 kg plate,
//! 0.2 ms steps).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::ConfigError;
use crate::fem::MaterialMap;
use crate::mesh::{DeformBox, Geometry};
use crate::sim::{MechParams, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Full,
    RomDeform,
    RomRemesh,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::RomDeform => "rom-deform",
            Mode::RomRemesh => "rom-remesh",
        }
    }
}

/// Movement handling of the full-order model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Movement {
    Deform,
    Remesh,
}

impl Movement {
    pub fn as_str(self) -> &'static str {
        match self {
            Movement::Deform => "deform",
            Movement::Remesh => "remesh",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub geometry: Geometry,
    pub deform_box: DeformBox,
    pub materials: MaterialMap,
    pub amplitude: f64,
    pub frequency: f64,
    pub mech: MechParams,
    pub time: TimeGrid,
    pub mode: Mode,
    pub movement: Movement,
    /// Snapshot window, 1-based inclusive step indices into the full run.
    pub window_start: usize,
    pub window_end: usize,
    pub stride: usize,
    pub eps: Option<f64>,
    pub rank: Option<usize>,
    /// Characteristic mesh length (m).
    pub density: f64,
    pub out_dir: Option<PathBuf>,
    /// Used only by synthetic tests.
    pub rng_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            geometry: Geometry::default(),
            deform_box: DeformBox::default(),
            materials: MaterialMap::default(),
            amplitude: 20.0,
            frequency: 50.0,
            mech: MechParams::default(),
            time: TimeGrid::default(),
            mode: Mode::Full,
            movement: Movement::Deform,
            window_start: 1,
            window_end: 800,
            stride: 1,
            eps: Some(1.0e-5),
            rank: None,
            density: 8.0e-3,
            out_dir: None,
            rng_seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let field_err = |field: &str, message: String| ConfigError::Validation {
            field: field.into(),
            message,
        };
        self.geometry
            .validate(&self.deform_box)
            .map_err(|e| field_err("geometry", e.to_string()))?;
        if self.amplitude < 0.0 {
            return Err(field_err("source.amplitude", "must be >= 0".into()));
        }
        if self.frequency <= 0.0 {
            return Err(field_err("source.frequency", "must be > 0".into()));
        }
        if self.mech.mass <= 0.0 {
            return Err(field_err("mech.m", "must be > 0".into()));
        }
        if self.mech.friction < 0.0 || self.mech.stiffness < 0.0 {
            return Err(field_err("mech", "friction and stiffness must be >= 0".into()));
        }
        if self.time.dt <= 0.0 || self.time.steps_per_period == 0 || self.time.periods == 0 {
            return Err(field_err("time", "dt, steps_per_period, periods must be positive".into()));
        }
        let period = self.time.dt * self.time.steps_per_period as f64;
        if (period * self.frequency - 1.0).abs() > 1e-9 {
            return Err(field_err(
                "time.steps_per_period",
                format!(
                    "dt * steps_per_period = {period} must equal one period 1/f = {}",
                    1.0 / self.frequency
                ),
            ));
        }
        if let Some(eps) = self.eps {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(field_err("mor.eps", format!("{eps} outside (0, 1)")));
            }
        }
        if self.density <= 0.0 {
            return Err(field_err("mesh.density", "must be > 0".into()));
        }
        match self.mode {
            Mode::Full => {}
            Mode::RomDeform => {
                if self.eps.is_none() && self.rank.is_none() {
                    return Err(field_err("mor", "rom-deform needs mor.eps or mor.rank".into()));
                }
                if self.window_end < self.window_start {
                    return Err(field_err("mor.window", "empty snapshot window".into()));
                }
            }
            Mode::RomRemesh => {
                if self.eps.is_none() {
                    return Err(field_err("mor.eps", "rom-remesh needs mor.eps".into()));
                }
                if self.window_end < self.window_start {
                    return Err(field_err("mor.window", "empty snapshot window".into()));
                }
            }
        }
        if self.stride == 0 {
            return Err(field_err("mor.stride", "must be >= 1".into()));
        }
        Ok(())
    }

    pub fn write_string(&self) -> String {
        let mut s = String::new();
        let g = &self.geometry;
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let f = |x: f64| format!("{x:.17e}");
        kv("run.mode", self.mode.as_str().into());
        kv("run.movement", self.movement.as_str().into());
        kv("geometry.plate_radius", f(g.plate_radius));
        kv("geometry.plate_thickness", f(g.plate_thickness));
        kv("geometry.plate_initial_clearance", f(g.plate_initial_clearance));
        kv("geometry.mesh_reference_clearance", f(g.mesh_reference_clearance));
        kv("geometry.domain_truncation_radius", f(g.domain_truncation_radius));
        kv("geometry.coil_inner.r_inner", f(g.coil_inner.r_inner));
        kv("geometry.coil_inner.r_outer", f(g.coil_inner.r_outer));
        kv("geometry.coil_inner.z_bottom", f(g.coil_inner.z_bottom));
        kv("geometry.coil_inner.z_top", f(g.coil_inner.z_top));
        kv("geometry.coil_inner.turns", g.coil_inner.turns.to_string());
        kv("geometry.coil_outer.r_inner", f(g.coil_outer.r_inner));
        kv("geometry.coil_outer.r_outer", f(g.coil_outer.r_outer));
        kv("geometry.coil_outer.z_bottom", f(g.coil_outer.z_bottom));
        kv("geometry.coil_outer.z_top", f(g.coil_outer.z_top));
        kv("geometry.coil_outer.turns", g.coil_outer.turns.to_string());
        kv("box.y_min", f(self.deform_box.y_min));
        kv("box.y_max", f(self.deform_box.y_max));
        kv("box.x_extent", f(self.deform_box.x_extent));
        kv("box.reference_position", f(self.deform_box.reference_position));
        kv("box.margin", f(self.deform_box.margin));
        kv("material.conductivity", f(self.materials.plate_conductivity));
        kv("material.reluctivity", f(self.materials.reluctivity));
        kv("source.amplitude", f(self.amplitude));
        kv("source.frequency", f(self.frequency));
        kv("mech.m", f(self.mech.mass));
        kv("mech.xi", f(self.mech.friction));
        kv("mech.k", f(self.mech.stiffness));
        kv("mech.g", f(self.mech.gravity));
        kv("time.dt", f(self.time.dt));
        kv("time.steps_per_period", self.time.steps_per_period.to_string());
        kv("time.periods", self.time.periods.to_string());
        kv("mor.window_start", self.window_start.to_string());
        kv("mor.window_end", self.window_end.to_string());
        kv("mor.stride", self.stride.to_string());
        if let Some(eps) = self.eps {
            kv("mor.eps", f(eps));
        }
        if let Some(rank) = self.rank {
            kv("mor.rank", rank.to_string());
        }
        kv("mesh.density", f(self.density));
        if let Some(dir) = &self.out_dir {
            kv("output.dir", dir.display().to_string());
        }
        kv("rng.seed", self.rng_seed.to_string());
        s
    }

    pub fn write_file(&self, path: &Path) -> Result<(), ConfigError> {
        std::fs::write(path, self.write_string())?;
        Ok(())
    }
}

pub fn parse_config(path: &Path) -> Result<SimConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<SimConfig, ConfigError> {
    let mut cfg = SimConfig::default();
    // eps/rank revert to "unset" so a config can select either truncation.
    cfg.eps = None;
    let mut saw_eps = false;
    let mut saw_rank = false;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or(ConfigError::Parse {
            line,
            message: format!("expected `key = value`, got `{content}`"),
        })?;
        let key = key.trim();
        let value = value.trim();
        let perr = |message: String| ConfigError::Parse { line, message };
        let fval = || -> Result<f64, ConfigError> {
            value
                .parse()
                .map_err(|_| perr(format!("bad float `{value}` for `{key}`")))
        };
        let uval = || -> Result<u64, ConfigError> {
            value
                .parse()
                .map_err(|_| perr(format!("bad integer `{value}` for `{key}`")))
        };
        match key {
            "run.mode" => {
                cfg.mode = match value {
                    "full" => Mode::Full,
                    "rom-deform" => Mode::RomDeform,
                    "rom-remesh" => Mode::RomRemesh,
                    other => return Err(perr(format!("unknown mode `{other}`"))),
                }
            }
            "run.movement" => {
                cfg.movement = match value {
                    "deform" => Movement::Deform,
                    "remesh" => Movement::Remesh,
                    other => return Err(perr(format!("unknown movement `{other}`"))),
                }
            }
            "geometry.plate_radius" => cfg.geometry.plate_radius = fval()?,
            "geometry.plate_thickness" => cfg.geometry.plate_thickness = fval()?,
            "geometry.plate_initial_clearance" => cfg.geometry.plate_initial_clearance = fval()?,
            "geometry.mesh_reference_clearance" => cfg.geometry.mesh_reference_clearance = fval()?,
            "geometry.domain_truncation_radius" => cfg.geometry.domain_truncation_radius = fval()?,
            "geometry.coil_inner.r_inner" => cfg.geometry.coil_inner.r_inner = fval()?,
            "geometry.coil_inner.r_outer" => cfg.geometry.coil_inner.r_outer = fval()?,
            "geometry.coil_inner.z_bottom" => cfg.geometry.coil_inner.z_bottom = fval()?,
            "geometry.coil_inner.z_top" => cfg.geometry.coil_inner.z_top = fval()?,
            "geometry.coil_inner.turns" => cfg.geometry.coil_inner.turns = uval()? as u32,
            "geometry.coil_outer.r_inner" => cfg.geometry.coil_outer.r_inner = fval()?,
            "geometry.coil_outer.r_outer" => cfg.geometry.coil_outer.r_outer = fval()?,
            "geometry.coil_outer.z_bottom" => cfg.geometry.coil_outer.z_bottom = fval()?,
            "geometry.coil_outer.z_top" => cfg.geometry.coil_outer.z_top = fval()?,
            "geometry.coil_outer.turns" => cfg.geometry.coil_outer.turns = uval()? as u32,
            "box.y_min" => cfg.deform_box.y_min = fval()?,
            "box.y_max" => cfg.deform_box.y_max = fval()?,
            "box.x_extent" => cfg.deform_box.x_extent = fval()?,
            "box.reference_position" => cfg.deform_box.reference_position = fval()?,
            "box.margin" => cfg.deform_box.margin = fval()?,
            "material.conductivity" => cfg.materials.plate_conductivity = fval()?,
            "material.reluctivity" => cfg.materials.reluctivity = fval()?,
            "source.amplitude" => cfg.amplitude = fval()?,
            "source.frequency" => cfg.frequency = fval()?,
            "mech.m" => cfg.mech.mass = fval()?,
            "mech.xi" => cfg.mech.friction = fval()?,
            "mech.k" => cfg.mech.stiffness = fval()?,
            "mech.g" => cfg.mech.gravity = fval()?,
            "time.dt" => cfg.time.dt = fval()?,
            "time.steps_per_period" => cfg.time.steps_per_period = uval()? as usize,
            "time.periods" => cfg.time.periods = uval()? as usize,
            "mor.window_start" => cfg.window_start = uval()? as usize,
            "mor.window_end" => cfg.window_end = uval()? as usize,
            "mor.stride" => cfg.stride = uval()? as usize,
            "mor.eps" => {
                cfg.eps = Some(fval()?);
                saw_eps = true;
            }
            "mor.rank" => {
                cfg.rank = Some(uval()? as usize);
                saw_rank = true;
            }
            "mesh.density" => cfg.density = fval()?,
            "output.dir" => cfg.out_dir = Some(PathBuf::from(value)),
            "rng.seed" => cfg.rng_seed = uval()?,
            other => {
                return Err(perr(format!("unknown key `{other}`")));
            }
        }
    }
    if !saw_eps && !saw_rank {
        cfg.eps = SimConfig::default().eps;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_benchmark_defaults() {
        let cfg = parse_config_str("run.mode = full\n").unwrap();
        assert_eq!(cfg.mode, Mode::Full);
        assert_eq!(cfg.materials.plate_conductivity, 3.47e7);
        assert_eq!(cfg.mech.mass, 0.107);
        assert_eq!(cfg.time.dt, 2.0e-4);
        assert_eq!(cfg.amplitude, 20.0);
        assert_eq!(cfg.frequency, 50.0);
        assert_eq!(cfg.geometry.coil_inner.turns, 960);
        assert_eq!(cfg.geometry.coil_outer.turns, 576);
    }

    #[test]
    fn out_of_range_eps_rejected() {
        let err = parse_config_str("mor.eps = 1.5\n").unwrap_err();
        assert!(matches!(err, ConfigError::Validation { .. }));
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        let err = parse_config_str("run.mode = full\nbogus.key = 1\n").unwrap_err();
        match err {
            ConfigError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = parse_config(Path::new("/nonexistent/team28.cfg")).unwrap_err();
        assert!(matches!(err, ConfigError::Io(_)));
    }

    #[test]
    fn roundtrip_write_parse() {
        let mut cfg = SimConfig::default();
        cfg.mode = Mode::RomDeform;
        cfg.rank = Some(12);
        cfg.eps = Some(1.0e-7);
        cfg.deform_box.x_extent = 0.130;
        cfg.density = 11.0e-3;
        cfg.out_dir = Some(PathBuf::from("/tmp/levipod-out"));
        let text = cfg.write_string();
        let back = parse_config_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn time_grid_must_tile_the_period() {
        let err = parse_config_str("time.dt = 3e-4\n").unwrap_err();
        assert!(matches!(err, ConfigError::Validation { .. }));
    }
}
