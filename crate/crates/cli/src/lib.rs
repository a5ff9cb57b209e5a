//! Command implementations behind the `sphdam` binary.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sphdam::excitation::{gravity_preload, PreloadReport};
use sphdam::output::{write_file, CrackProfile, Snapshot, TimeSeriesLog};
use sphdam::scene::{canonical, load_scene_with_overrides, Scene, SnapshotFormat};
use sphdam::{Error, ErrorClass, Simulation};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_NUMERICAL: i32 = 5;

/// Runs longer than this many steps need explicit confirmation.
pub const CONFIRM_STEPS: u64 = 500_000;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";

/// Maps an error chain to the documented exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(e) => match e.class() {
            ErrorClass::Config => EXIT_CONFIG,
            ErrorClass::Io => EXIT_IO,
            ErrorClass::Numerical => EXIT_NUMERICAL,
        },
        None => EXIT_OTHER,
    }
}

/// Parses `key=value`.
pub fn parse_override(s: &str) -> std::result::Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(format!("expected key=value, got '{s}'")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scene: PathBuf,
    pub output_dir: PathBuf,
    pub overrides: Vec<(String, String)>,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    pub checkpoint_every_steps: Option<u64>,
    pub resume: bool,
    /// Wall-clock interval of progress lines on stderr; `None` disables them.
    pub progress_every: Option<Duration>,
    /// Stop after this many transient steps, leaving a checkpoint behind as
    /// if the process had been killed.
    pub stop_after_steps: Option<u64>,
}

impl RunManifest {
    pub fn new(scene: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            scene: scene.into(),
            output_dir: output_dir.into(),
            overrides: Vec::new(),
            threads: None,
            checkpoint_every_steps: None,
            resume: false,
            progress_every: None,
            stop_after_steps: None,
        }
    }
}

pub struct ValidationReport {
    pub scene: Scene,
    pub region_counts: Vec<(String, usize)>,
    pub boundary_count: usize,
    pub total_mass: f64,
    pub cfl_limit: f64,
    pub steps: u64,
    pub warnings: Vec<String>,
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = &self.scene;
        writeln!(f, "scene '{}' is valid", s.name)?;
        for (label, n) in &self.region_counts {
            writeln!(f, "  region {label}: {n} particles")?;
        }
        let total: usize = self.region_counts.iter().map(|(_, n)| n).sum();
        writeln!(f, "  total: {total} particles ({} kinematically driven)", self.boundary_count)?;
        writeln!(f, "  total mass: {:.6e} kg per m thickness", self.total_mass)?;
        writeln!(
            f,
            "  spacing {} m, smoothing length {} m",
            s.numerics.spacing_m,
            s.smoothing_length()
        )?;
        writeln!(
            f,
            "  dt {:.3e} s <= CFL limit {:.3e} s",
            s.numerics.dt_s, self.cfl_limit
        )?;
        writeln!(
            f,
            "  {} steps for {} s (load case '{}')",
            self.steps, s.numerics.t_end_s, s.load_case
        )?;
        for w in &self.warnings {
            writeln!(f, "  warning: {w}")?;
        }
        Ok(())
    }
}

pub fn cmd_validate(path: &Path, overrides: &[(String, String)]) -> Result<ValidationReport> {
    let scene = load_scene_with_overrides(path, overrides)?;
    let warnings = scene.validate()?;
    let particles = scene.build_particles()?;
    let region_counts = particles
        .region_labels
        .iter()
        .map(|l| (l.clone(), particles.count_in_region(l)))
        .collect();
    // Constructing the excitation checks that accelerogram files load.
    scene.excitation()?;
    Ok(ValidationReport {
        cfl_limit: scene.initial_cfl_limit(),
        steps: scene.step_count(),
        region_counts,
        boundary_count: particles.boundary_count(),
        total_mass: particles.total_mass(),
        warnings,
        scene,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureEvent {
    pub step: u64,
    pub time_s: f64,
    /// Reference-configuration midpoints of every bond that failed during this step.
    pub positions_m: Vec<[f64; 2]>,
}

/// Order in which bonds failed, kept across checkpoints.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CrackHistory {
    pub first_failure: Option<FailureEvent>,
    pub first_base_failure: Option<FailureEvent>,
    pub first_neck_failure: Option<FailureEvent>,
    failed: Vec<bool>,
    count: usize,
}

/// Failure milestones of a run, as reported in the run summary.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CrackEvents {
    pub first_failure: Option<FailureEvent>,
    pub first_base_failure: Option<FailureEvent>,
    pub first_neck_failure: Option<FailureEvent>,
    pub failed_bonds: usize,
}

impl CrackHistory {
    pub fn events(&self) -> CrackEvents {
        CrackEvents {
            first_failure: self.first_failure.clone(),
            first_base_failure: self.first_base_failure.clone(),
            first_neck_failure: self.first_neck_failure.clone(),
            failed_bonds: self.count,
        }
    }

    fn observe(&mut self, sim: &Simulation, scene: &Scene) {
        let bonds = &sim.network.bonds;
        if self.failed.len() != bonds.len() {
            self.failed = bonds.iter().map(|b| b.is_failed()).collect();
            self.count = self.failed.iter().filter(|&&f| f).count();
            return;
        }
        let now = sim.network.failed_count();
        if now == self.count {
            return;
        }
        self.count = now;
        let mut fresh = Vec::new();
        for (k, b) in bonds.iter().enumerate() {
            if b.is_failed() && !self.failed[k] {
                self.failed[k] = true;
                let m = b.midpoint(&sim.particles.position);
                fresh.push([m.x, m.y]);
            }
        }
        let event = |pts: Vec<[f64; 2]>| FailureEvent {
            step: sim.state.step,
            time_s: sim.state.time,
            positions_m: pts,
        };
        if self.first_failure.is_none() {
            self.first_failure = Some(event(fresh.clone()));
        }
        if let Some(a) = &scene.analysis {
            let band = 2.0 * scene.numerics.spacing_m;
            let base: Vec<_> = fresh
                .iter()
                .copied()
                .filter(|p| (p[1] - a.interface_y_m).abs() <= band)
                .collect();
            if self.first_base_failure.is_none() && !base.is_empty() {
                self.first_base_failure = Some(event(base));
            }
            let floor = a.interface_y_m + 0.6 * a.dam_height_m;
            let neck: Vec<_> = fresh.iter().copied().filter(|p| p[1] > floor).collect();
            if self.first_neck_failure.is_none() && !neck.is_empty() {
                self.first_neck_failure = Some(event(neck));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Checkpoint {
    sim: Simulation,
    log: TimeSeriesLog,
    history: CrackHistory,
    preload: Option<PreloadReport>,
    snapshots: Vec<PathBuf>,
    scene_toml: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scene: String,
    pub load_case: String,
    pub steps: u64,
    pub time_s: f64,
    pub preload: Option<PreloadReport>,
    pub history: CrackEvents,
    pub crack_profile: CrackProfile,
    pub snapshots: Vec<PathBuf>,
    pub final_snapshot: PathBuf,
    /// Set when the run stopped early on request.
    pub interrupted: bool,
    #[serde(rename = "energy_residual_J_per_m")]
    pub energy_residual_j_per_m: f64,
    #[serde(rename = "external_work_J_per_m")]
    pub external_work_j_per_m: f64,
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    program: &'static str,
    version: &'static str,
    scene_path: &'a Path,
    overrides: &'a [(String, String)],
    threads: usize,
    wall_time_s: f64,
    parameters: &'a Scene,
    summary: &'a RunSummary,
}

fn snapshot_stem(step: u64) -> String {
    format!("snap_{step:09}")
}

fn snapshot_dir(out: &Path) -> PathBuf {
    out.join("snapshots")
}

fn write_snapshot(sim: &Simulation, scene: &Scene, out: &Path, stem: &str) -> Result<PathBuf> {
    let vtk = scene.output.formats.contains(&SnapshotFormat::Vtk);
    let snap = Snapshot::capture(sim, scene.analysis.as_ref());
    Ok(snap.write(&snapshot_dir(out), stem, vtk)?)
}

fn save_checkpoint(out: &Path, cp: &Checkpoint) -> Result<()> {
    let path = out.join(CHECKPOINT_FILE);
    let tmp = out.join(format!("{CHECKPOINT_FILE}.tmp"));
    let text = serde_json::to_string(cp).context("serializing checkpoint")?;
    write_file(&tmp, &text)?;
    std::fs::rename(&tmp, &path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    Ok(())
}

fn load_checkpoint(out: &Path) -> Result<Checkpoint> {
    let path = out.join(CHECKPOINT_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Io { path: path.clone(), source: e })?;
    let mut cp: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| Error::DataCorruption(format!("{}: {e}", path.display())))?;
    cp.sim.rebuild_neighbors()?;
    Ok(cp)
}

/// Runs the preload (when gravity is on) and the transient, writing
/// snapshots, the time-series log, the crack profile and run metadata.
pub fn cmd_run(manifest: &RunManifest) -> Result<RunSummary> {
    match manifest.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .context("building thread pool")?;
            pool.install(|| run_inner(manifest))
        }
        None => run_inner(manifest),
    }
}

fn run_inner(manifest: &RunManifest) -> Result<RunSummary> {
    let wall = Instant::now();
    let scene = load_scene_with_overrides(&manifest.scene, &manifest.overrides)?;
    let out = &manifest.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
    let total_steps = scene.step_count();
    let dt = scene.numerics.dt_s;
    let snap_every = ((scene.output.snapshot_interval_s / dt).round() as u64).max(1);
    let log_every = scene.output.log_interval_steps;

    let mut cp = if manifest.resume {
        let cp = load_checkpoint(out)?;
        if cp.scene_toml != scene.to_toml_string() {
            bail!(Error::Config(
                "checkpoint was written for a different scene or overrides".into()
            ));
        }
        log::info!("resuming at step {}", cp.sim.state.step);
        cp
    } else {
        let mut sim = scene.build_simulation()?;
        let preload = if scene.preload.gravity {
            let report = gravity_preload(&mut sim, &scene.preload.params())?;
            log::info!(
                "preload converged after {} steps (KE/M = {:.3e} J/kg)",
                report.steps,
                report.ke_per_mass
            );
            Some(report)
        } else {
            None
        };
        let mut log = TimeSeriesLog::new(&sim, &scene.output.probes)?;
        log.record(&sim);
        let mut history = CrackHistory::default();
        history.observe(&sim, &scene);
        let first = write_snapshot(&sim, &scene, out, &snapshot_stem(0))?;
        Checkpoint {
            sim,
            log,
            history,
            preload,
            snapshots: vec![first],
            scene_toml: scene.to_toml_string(),
        }
    };

    let log_path = out.join("timeseries.csv");
    let mut last_progress = Instant::now();
    let start_step = cp.sim.state.step;
    let mut interrupted = false;
    while cp.sim.state.step < total_steps {
        if let Err(e) = cp.sim.step() {
            let stem = format!("emergency_{:09}", cp.sim.state.step);
            let saved = write_snapshot(&cp.sim, &scene, out, &stem);
            let note = match saved {
                Ok(p) => format!("emergency snapshot written to {}", p.display()),
                Err(w) => format!("emergency snapshot failed: {w}"),
            };
            return Err(anyhow::Error::new(e).context(note));
        }
        let step = cp.sim.state.step;
        cp.history.observe(&cp.sim, &scene);
        if step % log_every == 0 || step == total_steps {
            cp.log.record(&cp.sim);
        }
        if step % snap_every == 0 || step == total_steps {
            cp.snapshots
                .push(write_snapshot(&cp.sim, &scene, out, &snapshot_stem(step))?);
        }
        if let Some(every) = manifest.progress_every {
            if last_progress.elapsed() >= every {
                last_progress = Instant::now();
                eprintln!(
                    "step {step}/{total_steps}  t = {:.4} s  KE = {:.4e} J/m  failed bonds = {}",
                    cp.sim.state.time,
                    cp.sim.kinetic_energy(),
                    cp.sim.network.failed_count()
                );
            }
        }
        let stop = manifest
            .stop_after_steps
            .is_some_and(|n| step - start_step >= n && step < total_steps);
        let periodic = manifest
            .checkpoint_every_steps
            .is_some_and(|n| n > 0 && step % n == 0);
        if stop || periodic {
            save_checkpoint(out, &cp)?;
        }
        if stop {
            interrupted = true;
            break;
        }
    }
    write_file(&log_path, &cp.log.to_csv())?;

    let sim = &cp.sim;
    let profile = CrackProfile::from_simulation(sim, scene.output.crack_threshold, scene.analysis.as_ref())?;
    let text = serde_json::to_string_pretty(&profile).context("serializing crack profile")?;
    write_file(&out.join("crack_profile.json"), &text)?;
    let budget = sim.energy_budget();
    let summary = RunSummary {
        scene: scene.name.clone(),
        load_case: scene.load_case.clone(),
        steps: sim.state.step,
        time_s: sim.state.time,
        preload: cp.preload.clone(),
        history: cp.history.events(),
        crack_profile: profile,
        snapshots: cp.snapshots.clone(),
        final_snapshot: cp.snapshots.last().cloned().unwrap_or_default(),
        interrupted,
        energy_residual_j_per_m: budget.residual(),
        external_work_j_per_m: budget.external,
    };
    let meta = RunMetadata {
        program: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        scene_path: &manifest.scene,
        overrides: &manifest.overrides,
        threads: rayon::current_num_threads(),
        wall_time_s: wall.elapsed().as_secs_f64(),
        parameters: &scene,
        summary: &summary,
    };
    let text = serde_json::to_string_pretty(&meta).context("serializing run metadata")?;
    write_file(&out.join("run.json"), &text)?;
    Ok(summary)
}

/// One row of the post-processing table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostRow {
    pub file: PathBuf,
    pub time_s: f64,
    pub step: u64,
    #[serde(rename = "dam_s_max_Pa")]
    pub dam_s_max_pa: f64,
    #[serde(rename = "dam_s_min_Pa")]
    pub dam_s_min_pa: f64,
    pub failed_bonds: usize,
    pub damaged_particles: usize,
    pub base_extent_m: Option<f64>,
    pub neck_elevation_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostReport {
    pub rows: Vec<PostRow>,
    pub final_profile: CrackProfile,
}

impl PostReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "file,time_s,step,dam_s_max_Pa,dam_s_min_Pa,failed_bonds,damaged_particles,base_extent_m,neck_elevation_m\n",
        );
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6e}"));
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:.16e},{},{:.16e},{:.16e},{},{},{},{}",
                r.file.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned()),
                r.time_s,
                r.step,
                r.dam_s_max_pa,
                r.dam_s_min_pa,
                r.failed_bonds,
                r.damaged_particles,
                opt(r.base_extent_m),
                opt(r.neck_elevation_m)
            );
        }
        s
    }
}

/// Lists the snapshot tables (`*.csv` other than bond sidecars) in `dir`,
/// sorted by file name.
pub fn snapshot_tables(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries =
        std::fs::read_dir(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.ends_with(".csv") && !name.ends_with(".bonds.csv") && name.starts_with("snap_")
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Principal-stress extrema over the dam and crack metrics for every
/// snapshot in `dir` (or in its `snapshots/` subdirectory).
pub fn cmd_postprocess(dir: &Path, threshold: f64) -> Result<PostReport> {
    let mut files = snapshot_tables(dir)?;
    if files.is_empty() && snapshot_dir(dir).is_dir() {
        files = snapshot_tables(&snapshot_dir(dir))?;
    }
    if files.is_empty() {
        bail!(Error::Config(format!("no snapshots found in {}", dir.display())));
    }
    let mut rows = Vec::new();
    let mut final_profile = None;
    for f in files {
        let snap = Snapshot::read(&f)?;
        let dam = snap.analysis.as_ref().map(|a| a.dam_region.clone());
        let in_dam = |r: &str| dam.as_deref().is_none_or(|d| d == r);
        let (mut smax, mut smin) = (f64::NEG_INFINITY, f64::INFINITY);
        for p in snap.particles.iter().filter(|p| in_dam(&p.region)) {
            smax = smax.max(p.s_max);
            smin = smin.min(p.s_min);
        }
        let profile = snap.crack_profile(threshold)?;
        rows.push(PostRow {
            file: f.clone(),
            time_s: snap.time,
            step: snap.step,
            dam_s_max_pa: smax,
            dam_s_min_pa: smin,
            failed_bonds: profile.failed_count(),
            damaged_particles: profile.damaged_particles.len(),
            base_extent_m: profile.base_extent_m,
            neck_elevation_m: profile.neck_elevation_m,
        });
        final_profile = Some(profile);
    }
    Ok(PostReport {
        rows,
        final_profile: final_profile.ok_or_else(|| anyhow!("no snapshots"))?,
    })
}

/// Writes the named canonical scene (and any data file it references) into
/// `dir`, returning the scene path.
pub fn cmd_scene(name: &str, dir: &Path, force: bool) -> Result<PathBuf> {
    let text = canonical::get(name).ok_or_else(|| {
        Error::Config(format!(
            "unknown scene '{name}'; available: {}",
            canonical::NAMES.join(", ")
        ))
    })?;
    std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
    let path = dir.join(format!("{}.scene", name.trim_end_matches(".scene")));
    let mut files = vec![(path.clone(), text)];
    if text.contains(canonical::ACCELEROGRAM_FILE) {
        files.push((
            dir.join(canonical::ACCELEROGRAM_FILE),
            canonical::KOYNA_LIKE_ACCELEROGRAM,
        ));
    }
    for (p, contents) in files {
        if p.exists() && !force {
            bail!(Error::Config(format!(
                "{} exists; pass --force to overwrite",
                p.display()
            )));
        }
        let mut f = std::fs::File::create(&p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
        f.write_all(contents.as_bytes())
            .map_err(|e| Error::Io { path: p.clone(), source: e })?;
    }
    Ok(path)
}
