//! Scene files: a schema-versioned TOML document describing geometry,
//! materials, numerical parameters, load cases and outputs. Every dimensional
//! field carries its unit in the key name.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::constitutive::{ConstitutiveModel, EquivalentStrain, Material, StressState};
use crate::dynamics::{cfl_limit, ArtificialViscosity, Rayleigh, Simulation, SolverParams};
use crate::error::{Error, Result};
use crate::excitation::{
    Accelerogram, BaseDrive, BoundaryKind, ExcitationSignal, PreloadParams, STANDARD_GRAVITY,
};
use crate::lattice::{fill_polygon, tag_boundary, ParticleSet, RegionPolygon};
use crate::springs::BondLength;
use crate::tensor::Vec2;

pub const SCHEMA_VERSION: u32 = 1;

fn default_spacing() -> f64 {
    0.5
}
fn default_dt() -> f64 {
    5e-6
}
fn default_t_end() -> f64 {
    10.0
}
fn default_cfl() -> f64 {
    0.3
}
fn default_eta1() -> f64 {
    1.0
}
fn default_eta2() -> f64 {
    2.0
}
fn default_visc_eps() -> f64 {
    0.01
}
fn default_alpha() -> f64 {
    1.616
}
fn default_beta() -> f64 {
    0.0008
}
fn default_g() -> f64 {
    STANDARD_GRAVITY
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    #[serde(default = "default_spacing")]
    pub spacing_m: f64,
    /// Defaults to 0.9 × spacing when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothing_length_m: Option<f64>,
    #[serde(default = "default_dt")]
    pub dt_s: f64,
    #[serde(default = "default_t_end")]
    pub t_end_s: f64,
    #[serde(default = "default_cfl")]
    pub cfl_number: f64,
    #[serde(default = "default_eta1")]
    pub eta1: f64,
    #[serde(default = "default_eta2")]
    pub eta2: f64,
    #[serde(default = "default_visc_eps")]
    pub viscosity_epsilon: f64,
    #[serde(default = "default_alpha")]
    pub rayleigh_alpha_per_s: f64,
    #[serde(default = "default_beta")]
    pub rayleigh_beta_s: f64,
    #[serde(default = "default_g")]
    pub g_m_per_s2: f64,
    #[serde(default)]
    pub stress_state: StressState,
    #[serde(default)]
    pub equivalent_strain: EquivalentStrain,
    #[serde(default)]
    pub bond_length: BondLength,
    #[serde(default = "default_true")]
    pub fracture: bool,
}

impl Default for Numerics {
    fn default() -> Self {
        toml::from_str("").expect("all numerics fields have defaults")
    }
}

impl Numerics {
    pub fn smoothing_length(&self) -> f64 {
        self.smoothing_length_m.unwrap_or(0.9 * self.spacing_m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Preload {
    /// Gravity acts as a body force (and a static preload is computed first).
    pub gravity: bool,
    pub relax_damping_per_s: f64,
    #[serde(rename = "ke_tolerance_J_per_kg")]
    pub ke_tolerance_j_per_kg: f64,
    pub max_steps: u64,
    pub window: usize,
}

impl Default for Preload {
    fn default() -> Self {
        let p = PreloadParams::default();
        Self {
            gravity: true,
            relax_damping_per_s: p.damping,
            ke_tolerance_j_per_kg: p.ke_tolerance,
            max_steps: p.max_steps,
            window: p.window,
        }
    }
}

impl Preload {
    pub fn params(&self) -> PreloadParams {
        PreloadParams {
            damping: self.relax_damping_per_s,
            ke_tolerance: self.ke_tolerance_j_per_kg,
            max_steps: self.max_steps,
            window: self.window,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundarySpec {
    /// When false no particle is kinematically driven.
    pub enabled: bool,
    pub base_region: String,
    pub band_m: f64,
    pub lateral: bool,
    pub kind: BoundaryKind,
}

impl Default for BoundarySpec {
    fn default() -> Self {
        Self {
            enabled: true,
            base_region: "foundation".into(),
            band_m: 1.0,
            lateral: true,
            kind: BoundaryKind::PrescribedMotion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LoadCase {
    None,
    Sinusoid {
        amplitude_g: f64,
        period_s: f64,
        direction: [f64; 2],
    },
    Accelerogram {
        /// Path relative to the scene file.
        file: PathBuf,
        #[serde(default = "default_one")]
        scale: f64,
    },
}

fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    pub name: String,
    pub position_m: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub snapshot_interval_s: f64,
    pub formats: Vec<SnapshotFormat>,
    pub log_interval_steps: u64,
    pub crack_threshold: f64,
    pub probes: Vec<Probe>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            snapshot_interval_s: 0.5,
            formats: vec![SnapshotFormat::Csv, SnapshotFormat::Vtk],
            log_interval_steps: 1000,
            crack_threshold: 0.5,
            probes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotFormat {
    Csv,
    Vtk,
}

/// Geometry used by crack post-processing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Analysis {
    pub dam_region: String,
    /// Elevation of the dam–foundation interface.
    pub interface_y_m: f64,
    pub dam_height_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub preload: Preload,
    pub materials: Vec<Material>,
    pub regions: Vec<RegionPolygon>,
    #[serde(default)]
    pub boundary: BoundarySpec,
    pub load_case: String,
    pub load_cases: BTreeMap<String, LoadCase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<Analysis>,
    #[serde(default)]
    pub output: OutputSpec,
    /// Directory the scene was loaded from; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn parse_error(path: &Path, text: &str, e: toml::de::Error) -> Error {
    let line = e.span().map_or(0, |s| line_of(text, s.start));
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: e.message().to_string(),
    }
}

/// Resolves `key` (dotted path or unique leaf name) within a TOML table.
fn resolve_key(root: &toml::Table, key: &str) -> Result<Vec<String>> {
    if key.contains('.') {
        let parts: Vec<String> = key.split('.').map(str::to_string).collect();
        let mut node = root;
        for (k, part) in parts.iter().enumerate() {
            match node.get(part) {
                Some(toml::Value::Table(t)) if k + 1 < parts.len() => node = t,
                Some(v) if k + 1 == parts.len() && !v.is_table() => return Ok(parts),
                _ => return Err(Error::Config(format!("unknown scene key '{key}'"))),
            }
        }
        return Err(Error::Config(format!("scene key '{key}' is a table")));
    }
    let mut hits = Vec::new();
    fn walk(t: &toml::Table, prefix: &mut Vec<String>, key: &str, hits: &mut Vec<Vec<String>>) {
        for (k, v) in t {
            prefix.push(k.clone());
            match v {
                toml::Value::Table(sub) => walk(sub, prefix, key, hits),
                _ if k == key => hits.push(prefix.clone()),
                _ => {}
            }
            prefix.pop();
        }
    }
    walk(root, &mut Vec::new(), key, &mut hits);
    match hits.len() {
        1 => Ok(hits.pop().unwrap()),
        0 => Err(Error::Config(format!("unknown scene key '{key}'"))),
        _ => Err(Error::Config(format!(
            "ambiguous scene key '{key}': {}",
            hits.iter().map(|h| h.join(".")).collect::<Vec<_>>().join(", ")
        ))),
    }
}

fn parse_override_value(raw: &str, existing: &toml::Value) -> toml::Value {
    let parsed = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    match (existing, parsed) {
        (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
        (_, v) => v,
    }
}

/// Applies `key=value` overrides to a serialized scene.
pub fn apply_overrides(root: &mut toml::Table, overrides: &[(String, String)]) -> Result<()> {
    for (key, raw) in overrides {
        let path = resolve_key(root, key)?;
        let mut node = &mut *root;
        for part in &path[..path.len() - 1] {
            node = node
                .get_mut(part)
                .and_then(toml::Value::as_table_mut)
                .expect("resolved path");
        }
        let leaf = path.last().unwrap();
        let value = parse_override_value(raw, &node[leaf]);
        node.insert(leaf.clone(), value);
    }
    Ok(())
}

impl Scene {
    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self> {
        let mut scene: Scene = toml::from_str(text).map_err(|e| parse_error(path, text, e))?;
        scene.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        scene.fill_defaults();
        Ok(scene)
    }

    fn fill_defaults(&mut self) {
        if self.numerics.smoothing_length_m.is_none() {
            let h = 0.9 * self.numerics.spacing_m;
            info!("smoothing_length_m not given; using 0.9 × spacing = {h} m");
            self.numerics.smoothing_length_m = Some(h);
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scene serializes")
    }

    pub fn with_overrides(&self, overrides: &[(String, String)]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut table = toml::Table::try_from(self).expect("scene serializes");
        apply_overrides(&mut table, overrides)?;
        let text = toml::to_string(&table).expect("table serializes");
        let mut scene = Scene::from_toml_str(&text, Path::new("<overrides>"))?;
        scene.base_dir = self.base_dir.clone();
        Ok(scene)
    }

    pub fn material_index(&self, id: &str) -> Option<usize> {
        self.materials.iter().position(|m| m.id == id)
    }

    pub fn smoothing_length(&self) -> f64 {
        self.numerics.smoothing_length()
    }

    /// CFL limit of the initial (resting) configuration.
    pub fn initial_cfl_limit(&self) -> f64 {
        let c_max = self
            .regions
            .iter()
            .filter_map(|r| self.material_index(&r.material))
            .map(|m| self.materials[m].sound_speed())
            .fold(0.0, f64::max);
        cfl_limit(self.smoothing_length(), c_max, 0.0, self.numerics.cfl_number)
    }

    pub fn step_count(&self) -> u64 {
        (self.numerics.t_end_s / self.numerics.dt_s).round() as u64
    }

    /// Checks every invariant; returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return cfg(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let n = &self.numerics;
        if !(n.spacing_m > 0.0) {
            return cfg("numerics.spacing_m must be positive".into());
        }
        let ratio = self.smoothing_length() / n.spacing_m;
        if !(0.8..=2.0).contains(&ratio) {
            return cfg(format!(
                "smoothing_length_m / spacing_m = {ratio:.3} outside [0.8, 2.0]"
            ));
        }
        if !(n.dt_s > 0.0) || !(n.t_end_s >= 0.0) {
            return cfg("numerics.dt_s must be positive and t_end_s non-negative".into());
        }
        if !(n.cfl_number > 0.0) {
            return cfg("numerics.cfl_number must be positive".into());
        }
        if n.eta1 < 0.0 || n.eta2 < 0.0 || n.viscosity_epsilon <= 0.0 {
            return cfg("artificial viscosity coefficients must be non-negative".into());
        }
        if n.rayleigh_alpha_per_s < 0.0 || n.rayleigh_beta_s < 0.0 {
            return cfg("Rayleigh coefficients must be non-negative".into());
        }
        if !(n.g_m_per_s2 > 0.0) {
            return cfg("numerics.g_m_per_s2 must be positive".into());
        }
        let mut warnings = Vec::new();
        for (k, m) in self.materials.iter().enumerate() {
            if self.materials[..k].iter().any(|o| o.id == m.id) {
                return cfg(format!("duplicate material id '{}'", m.id));
            }
            warnings.extend(m.validate()?);
        }
        if self.regions.is_empty() {
            return cfg("scene has no regions".into());
        }
        for r in &self.regions {
            if self.material_index(&r.material).is_none() {
                return cfg(format!(
                    "region '{}' references unknown material '{}'",
                    r.label, r.material
                ));
            }
            r.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        let limit = self.initial_cfl_limit();
        if n.dt_s > limit {
            return cfg(format!(
                "dt_s = {:.3e} s exceeds cfl_limit = {limit:.3e} s",
                n.dt_s
            ));
        }
        if self.boundary.enabled && !(self.boundary.band_m >= n.spacing_m) {
            return cfg(format!(
                "boundary.band_m = {} must be at least spacing_m = {}",
                self.boundary.band_m, n.spacing_m
            ));
        }
        let Some(case) = self.load_cases.get(&self.load_case) else {
            return cfg(format!("load_case '{}' is not defined", self.load_case));
        };
        if let LoadCase::Sinusoid { period_s, .. } = case {
            if !(*period_s > 0.0) {
                return cfg("sinusoid period_s must be positive".into());
            }
        }
        let p = &self.preload;
        if !(p.relax_damping_per_s > 0.0) || !(p.ke_tolerance_j_per_kg > 0.0) || p.window == 0 {
            return cfg("preload parameters must be positive".into());
        }
        let o = &self.output;
        if !(o.snapshot_interval_s > 0.0) || o.log_interval_steps == 0 {
            return cfg("output intervals must be positive".into());
        }
        if !(o.crack_threshold > 0.0 && o.crack_threshold <= 1.0) {
            return cfg("output.crack_threshold must lie in (0, 1]".into());
        }
        if let Some(a) = &self.analysis {
            if !self.regions.iter().any(|r| r.label == a.dam_region) {
                return cfg(format!("analysis.dam_region '{}' is not a region", a.dam_region));
            }
        }
        Ok(warnings)
    }

    pub fn excitation(&self) -> Result<ExcitationSignal> {
        let case = self
            .load_cases
            .get(&self.load_case)
            .ok_or_else(|| Error::Config(format!("load_case '{}' is not defined", self.load_case)))?;
        Ok(match case {
            LoadCase::None => ExcitationSignal::None,
            LoadCase::Sinusoid {
                amplitude_g,
                period_s,
                direction,
            } => ExcitationSignal::sinusoid(
                *amplitude_g,
                *period_s,
                Vec2::new(direction[0], direction[1]),
            )?,
            LoadCase::Accelerogram { file, scale } => {
                let path = self.base_dir.join(file);
                let mut rec = Accelerogram::load(&path)?;
                for a in rec.horizontal.iter_mut() {
                    *a *= scale;
                }
                if let Some(v) = rec.vertical.as_mut() {
                    for a in v.iter_mut() {
                        *a *= scale;
                    }
                }
                ExcitationSignal::Accelerogram(rec)
            }
        })
    }

    pub fn build_particles(&self) -> Result<ParticleSet> {
        let spacing = self.numerics.spacing_m;
        let mut set = ParticleSet::default();
        for r in &self.regions {
            let m = self.material_index(&r.material).ok_or_else(|| {
                Error::Config(format!("unknown material '{}'", r.material))
            })?;
            set.extend(fill_polygon(r, spacing, &self.materials[m], m)?);
        }
        if self.boundary.enabled {
            tag_boundary(
                &mut set,
                self.boundary.band_m,
                &self.boundary.base_region,
                self.boundary.lateral,
            )?;
        }
        Ok(set)
    }

    pub fn solver_params(&self) -> SolverParams {
        let n = &self.numerics;
        SolverParams {
            dt: n.dt_s,
            cfl_number: n.cfl_number,
            viscosity: ArtificialViscosity {
                eta1: n.eta1,
                eta2: n.eta2,
                epsilon: n.viscosity_epsilon,
            },
            rayleigh: Rayleigh {
                alpha: n.rayleigh_alpha_per_s,
                beta: n.rayleigh_beta_s,
            },
            gravity: if self.preload.gravity {
                Vec2::new(0.0, -n.g_m_per_s2)
            } else {
                Vec2::zeros()
            },
            model: ConstitutiveModel {
                stress_state: n.stress_state,
                equivalent_strain: n.equivalent_strain,
            },
            freeze_damage: false,
            fracture: n.fracture,
            bond_length: n.bond_length,
        }
    }

    pub fn build_simulation(&self) -> Result<Simulation> {
        let particles = self.build_particles()?;
        let drive = BaseDrive::new(self.excitation()?, self.boundary.kind, self.numerics.g_m_per_s2);
        Simulation::new(
            particles,
            self.materials.clone(),
            self.smoothing_length(),
            self.solver_params(),
            drive,
        )
    }
}

/// Reads, parses and validates a scene file.
pub fn load_scene(path: &Path) -> Result<Scene> {
    load_scene_with_overrides(path, &[])
}

pub fn load_scene_with_overrides(path: &Path, overrides: &[(String, String)]) -> Result<Scene> {
    if !path.exists() {
        return Err(Error::SceneNotFound(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let scene = Scene::from_toml_str(&text, path)?.with_overrides(overrides)?;
    for w in scene.validate()? {
        log::warn!("{w}");
    }
    Ok(scene)
}

/// Scenes and data files shipped with the crate.
pub mod canonical {
    pub const KOYNA: &str = include_str!("../scenes/koyna.scene");
    pub const KOYNA_COARSE: &str = include_str!("../scenes/koyna-coarse.scene");
    pub const BAR_WAVE: &str = include_str!("../scenes/bar-wave.scene");
    pub const PLATE_TENSION: &str = include_str!("../scenes/plate-tension.scene");
    pub const KOYNA_LIKE_ACCELEROGRAM: &str = include_str!("../scenes/koyna-like-accelerogram.csv");
    pub const ACCELEROGRAM_FILE: &str = "koyna-like-accelerogram.csv";

    pub const NAMES: [&str; 4] = ["koyna", "koyna-coarse", "bar-wave", "plate-tension"];

    pub fn get(name: &str) -> Option<&'static str> {
        match name.trim_end_matches(".scene") {
            "koyna" => Some(KOYNA),
            "koyna-coarse" => Some(KOYNA_COARSE),
            "bar-wave" => Some(BAR_WAVE),
            "plate-tension" => Some(PLATE_TENSION),
            _ => None,
        }
    }

    /// Directory holding the shipped scene files in a source checkout.
    pub fn source_dir() -> std::path::PathBuf {
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("scenes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
name = "mini"
load_case = "still"

[[materials]]
id = "concrete"
E_Pa = 31.03e9
nu = 0.2
rho0_kg_per_m3 = 2643.0
ft_Pa = 3.19e6
fc_Pa = 31.9e6
Gf_N_per_m = 100.0
eps0 = 1e-4
hc_m = 0.5

[[regions]]
label = "dam"
material = "concrete"
vertices_m = [[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0]]

[load_cases.still]
kind = "none"
"#;

    fn mini() -> Scene {
        Scene::from_toml_str(MINIMAL, Path::new("mini.scene")).unwrap()
    }

    #[test]
    fn defaults_are_filled() {
        let s = mini();
        assert_eq!(s.numerics.spacing_m, 0.5);
        assert_eq!(s.numerics.smoothing_length_m, Some(0.45));
        assert_eq!(s.numerics.dt_s, 5e-6);
        assert_eq!(s.numerics.t_end_s, 10.0);
        assert_eq!((s.numerics.eta1, s.numerics.eta2), (1.0, 2.0));
        assert_eq!(s.numerics.rayleigh_alpha_per_s, 1.616);
        assert_eq!(s.numerics.rayleigh_beta_s, 0.0008);
        assert!(s.validate().unwrap().is_empty());
    }

    #[test]
    fn large_dt_fails_cfl() {
        let s = mini()
            .with_overrides(&[("dt_s".into(), "1e-3".into())])
            .unwrap();
        let err = s.validate().unwrap_err().to_string();
        assert!(err.contains("cfl_limit"), "{err}");
    }

    #[test]
    fn overrides_resolve_dotted_and_bare_keys() {
        let s = mini()
            .with_overrides(&[
                ("numerics.t_end_s".into(), "3".into()),
                ("eta2".into(), "1.5".into()),
                ("load_case".into(), "still".into()),
            ])
            .unwrap();
        assert_eq!(s.numerics.t_end_s, 3.0);
        assert_eq!(s.numerics.eta2, 1.5);
        assert!(mini().with_overrides(&[("no_such_key".into(), "1".into())]).is_err());
    }

    #[test]
    fn parse_error_reports_line() {
        let bad = MINIMAL.replace("nu = 0.2", "nu = \"x\"");
        match Scene::from_toml_str(&bad, Path::new("bad.scene")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 9),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_material_rejected() {
        let bad = MINIMAL.replace("material = \"concrete\"", "material = \"steel\"");
        let s = Scene::from_toml_str(&bad, Path::new("bad.scene")).unwrap();
        assert!(s.validate().unwrap_err().to_string().contains("steel"));
    }

    #[test]
    fn serialize_round_trip() {
        let s = mini();
        let again = Scene::from_toml_str(&s.to_toml_string(), Path::new("mini.scene")).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn missing_file_is_reported() {
        assert!(matches!(
            load_scene(Path::new("/nonexistent/x.scene")),
            Err(Error::SceneNotFound(_))
        ));
    }
}
