//! Snapshots (CSV table and legacy VTK), crack profiles and the time-series log.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::Simulation;
use crate::error::{Error, Result};
use crate::neighbors::build_grid;
use crate::scene::{Analysis, Probe};
use crate::tensor::{Sym2, Vec2};

/// One particle row of a snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleRecord {
    pub position: Vec2,
    /// Initial (reference) position; crack metrics are measured here.
    pub reference: Vec2,
    pub velocity: Vec2,
    pub density: f64,
    /// Effective (damaged) stress.
    pub stress: Sym2,
    pub s_max: f64,
    pub s_min: f64,
    pub damage: f64,
    pub connectivity_damage: f64,
    pub region: String,
    pub boundary: bool,
}

/// A bond that has lost at least part of its stiffness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BondRecord {
    pub i: usize,
    pub j: usize,
    pub f: f64,
    pub midpoint: Vec2,
    pub reference_midpoint: Vec2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub step: u64,
    pub spacing: f64,
    pub analysis: Option<Analysis>,
    pub particles: Vec<ParticleRecord>,
    /// Bonds with f < 1.
    pub bonds: Vec<BondRecord>,
}

const CSV_HEADER: &str = "x_m,y_m,x0_m,y0_m,vx_m_per_s,vy_m_per_s,density_kg_per_m3,sxx_Pa,syy_Pa,sxy_Pa,\
s_max_Pa,s_min_Pa,damage,connectivity_damage,region,boundary";
const BOND_HEADER: &str = "i,j,f,mid_x_m,mid_y_m,mid_x0_m,mid_y0_m";

fn num(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.16e}");
}

impl Snapshot {
    pub fn capture(sim: &Simulation, analysis: Option<&Analysis>) -> Self {
        let conn = sim.network.connectivity_damage_all();
        let st = &sim.state;
        let particles = (0..sim.len())
            .map(|i| {
                let stress = sim.effective_stress(i);
                let (s_max, s_min) = stress.principal();
                ParticleRecord {
                    position: st.position[i],
                    reference: sim.particles.position[i],
                    velocity: st.velocity[i],
                    density: st.density[i],
                    stress,
                    s_max,
                    s_min,
                    damage: st.points[i].damage.d,
                    connectivity_damage: conn[i],
                    region: sim.particles.region_labels[sim.particles.region[i]].clone(),
                    boundary: sim.particles.boundary[i],
                }
            })
            .collect();
        let bonds = sim
            .network
            .bonds
            .iter()
            .filter(|b| b.f < 1.0)
            .map(|b| BondRecord {
                i: b.i,
                j: b.j,
                f: b.f,
                midpoint: b.midpoint(&st.position),
                reference_midpoint: b.midpoint(&sim.particles.position),
            })
            .collect();
        Snapshot {
            time: st.time,
            step: st.step,
            spacing: sim.particles.spacing,
            analysis: analysis.cloned(),
            particles,
            bonds,
        }
    }

    fn meta_line(&self) -> String {
        let mut s = format!(
            "# time_s={:.16e} step={} spacing_m={:.16e}",
            self.time, self.step, self.spacing
        );
        if let Some(a) = &self.analysis {
            let _ = write!(
                s,
                " dam_region={} interface_y_m={:.16e} dam_height_m={:.16e}",
                a.dam_region, a.interface_y_m, a.dam_height_m
            );
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.particles.len() * 300);
        out.push_str(&self.meta_line());
        out.push('\n');
        out.push_str(CSV_HEADER);
        out.push('\n');
        for p in &self.particles {
            for v in [
                p.position.x,
                p.position.y,
                p.reference.x,
                p.reference.y,
                p.velocity.x,
                p.velocity.y,
                p.density,
                p.stress.xx,
                p.stress.yy,
                p.stress.xy,
                p.s_max,
                p.s_min,
                p.damage,
                p.connectivity_damage,
            ] {
                num(&mut out, v);
                out.push(',');
            }
            let _ = writeln!(out, "{},{}", p.region, u8::from(p.boundary));
        }
        out
    }

    pub fn bonds_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(BOND_HEADER);
        out.push('\n');
        for b in &self.bonds {
            let _ = write!(out, "{},{},", b.i, b.j);
            num(&mut out, b.f);
            out.push(',');
            num(&mut out, b.midpoint.x);
            out.push(',');
            num(&mut out, b.midpoint.y);
            out.push(',');
            num(&mut out, b.reference_midpoint.x);
            out.push(',');
            num(&mut out, b.reference_midpoint.y);
            out.push('\n');
        }
        out
    }

    pub fn to_vtk(&self) -> String {
        let n = self.particles.len();
        let mut out = String::with_capacity(n * 400);
        let _ = writeln!(out, "# vtk DataFile Version 3.0");
        let _ = writeln!(out, "sphdam snapshot time_s={:.16e} step={}", self.time, self.step);
        let _ = writeln!(out, "ASCII\nDATASET UNSTRUCTURED_GRID\nPOINTS {n} double");
        for p in &self.particles {
            let _ = writeln!(out, "{:.16e} {:.16e} 0", p.position.x, p.position.y);
        }
        let _ = writeln!(out, "CELLS {n} {}", 2 * n);
        for i in 0..n {
            let _ = writeln!(out, "1 {i}");
        }
        let _ = writeln!(out, "CELL_TYPES {n}");
        for _ in 0..n {
            out.push_str("1\n");
        }
        let _ = writeln!(out, "POINT_DATA {n}");
        let _ = writeln!(out, "VECTORS velocity double");
        for p in &self.particles {
            let _ = writeln!(out, "{:.16e} {:.16e} 0", p.velocity.x, p.velocity.y);
        }
        let mut regions: Vec<&str> = Vec::new();
        for p in &self.particles {
            if !regions.contains(&p.region.as_str()) {
                regions.push(&p.region);
            }
        }
        type Field = fn(&ParticleRecord) -> f64;
        let scalars: [(&str, Field); 10] = [
            ("density", |p| p.density),
            ("sxx", |p| p.stress.xx),
            ("syy", |p| p.stress.yy),
            ("sxy", |p| p.stress.xy),
            ("s_max", |p| p.s_max),
            ("s_min", |p| p.s_min),
            ("damage", |p| p.damage),
            ("connectivity_damage", |p| p.connectivity_damage),
            ("boundary", |p| f64::from(u8::from(p.boundary))),
            ("region", |_| 0.0),
        ];
        for (name, field) in scalars {
            let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for p in &self.particles {
                let v = if name == "region" {
                    regions.iter().position(|r| *r == p.region).unwrap() as f64
                } else {
                    field(p)
                };
                let _ = writeln!(out, "{v:.16e}");
            }
        }
        out
    }

    /// Writes `<stem>.csv`, `<stem>.bonds.csv` and optionally `<stem>.vtk`
    /// into `dir`, returning the table path.
    pub fn write(&self, dir: &Path, stem: &str, vtk: bool) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let table = dir.join(format!("{stem}.csv"));
        write_file(&table, &self.to_csv())?;
        write_file(&dir.join(format!("{stem}.bonds.csv")), &self.bonds_csv())?;
        if vtk {
            write_file(&dir.join(format!("{stem}.vtk")), &self.to_vtk())?;
        }
        Ok(table)
    }

    /// Reads a table written by [`Snapshot::write`], with its bond sidecar if present.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut snap = Self::parse_csv(&text, path)?;
        let sidecar = bonds_path(path);
        if sidecar.exists() {
            let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
            snap.bonds = parse_bonds(&text, &sidecar)?;
        }
        Ok(snap)
    }

    pub fn parse_csv(text: &str, path: &Path) -> Result<Self> {
        let perr = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        let (_, meta) = lines.next().ok_or_else(|| perr(1, "empty snapshot".into()))?;
        let meta = meta
            .strip_prefix('#')
            .ok_or_else(|| perr(1, "missing metadata line".into()))?;
        let mut time = None;
        let mut step = None;
        let mut spacing = None;
        let (mut dam_region, mut iface, mut height) = (None, None, None);
        for kv in meta.split_whitespace() {
            let Some((k, v)) = kv.split_once('=') else { continue };
            let f = || v.parse::<f64>().map_err(|e| perr(1, format!("{k}: {e}")));
            match k {
                "time_s" => time = Some(f()?),
                "step" => step = Some(v.parse::<u64>().map_err(|e| perr(1, format!("step: {e}")))?),
                "spacing_m" => spacing = Some(f()?),
                "dam_region" => dam_region = Some(v.to_string()),
                "interface_y_m" => iface = Some(f()?),
                "dam_height_m" => height = Some(f()?),
                _ => {}
            }
        }
        let analysis = match (dam_region, iface, height) {
            (Some(dam_region), Some(interface_y_m), Some(dam_height_m)) => Some(Analysis {
                dam_region,
                interface_y_m,
                dam_height_m,
            }),
            _ => None,
        };
        match lines.next() {
            Some((_, h)) if h.trim() == CSV_HEADER => {}
            _ => return Err(perr(2, "unexpected column header".into())),
        }
        let mut particles = Vec::new();
        for (k, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 16 {
                return Err(perr(k + 1, format!("expected 16 columns, got {}", cols.len())));
            }
            let mut v = [0.0; 14];
            for (slot, c) in v.iter_mut().zip(&cols) {
                *slot = c
                    .parse()
                    .map_err(|e| perr(k + 1, format!("bad number '{c}': {e}")))?;
            }
            particles.push(ParticleRecord {
                position: Vec2::new(v[0], v[1]),
                reference: Vec2::new(v[2], v[3]),
                velocity: Vec2::new(v[4], v[5]),
                density: v[6],
                stress: Sym2::new(v[7], v[8], v[9]),
                s_max: v[10],
                s_min: v[11],
                damage: v[12],
                connectivity_damage: v[13],
                region: cols[14].to_string(),
                boundary: cols[15].trim() == "1",
            });
        }
        Ok(Snapshot {
            time: time.ok_or_else(|| perr(1, "missing time_s".into()))?,
            step: step.ok_or_else(|| perr(1, "missing step".into()))?,
            spacing: spacing.ok_or_else(|| perr(1, "missing spacing_m".into()))?,
            analysis,
            particles,
            bonds: Vec::new(),
        })
    }

    /// Reference-configuration midpoints of the fully failed bonds.
    pub fn failed_midpoints(&self) -> Vec<Vec2> {
        self.bonds
            .iter()
            .filter(|b| b.f == 0.0)
            .map(|b| b.reference_midpoint)
            .collect()
    }

    pub fn crack_profile(&self, threshold: f64) -> Result<CrackProfile> {
        let positions: Vec<Vec2> = self.particles.iter().map(|p| p.reference).collect();
        let conn: Vec<f64> = self.particles.iter().map(|p| p.connectivity_damage).collect();
        let regions: Vec<&str> = self.particles.iter().map(|p| p.region.as_str()).collect();
        CrackProfile::from_parts(
            &self.failed_midpoints(),
            &positions,
            &conn,
            &regions,
            threshold,
            self.spacing,
            self.analysis.as_ref(),
        )
    }
}

pub fn bonds_path(table: &Path) -> PathBuf {
    let stem = table.file_stem().and_then(|s| s.to_str()).unwrap_or("snapshot");
    table.with_file_name(format!("{stem}.bonds.csv"))
}

fn parse_bonds(text: &str, path: &Path) -> Result<Vec<BondRecord>> {
    let perr = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let c: Vec<&str> = line.split(',').collect();
        if c.len() != 7 {
            return Err(perr(k + 1, format!("expected 7 columns, got {}", c.len())));
        }
        let idx = |s: &str| s.parse::<usize>().map_err(|e| perr(k + 1, e.to_string()));
        let f = |s: &str| s.parse::<f64>().map_err(|e| perr(k + 1, e.to_string()));
        out.push(BondRecord {
            i: idx(c[0])?,
            j: idx(c[1])?,
            f: f(c[2])?,
            midpoint: Vec2::new(f(c[3])?, f(c[4])?),
            reference_midpoint: Vec2::new(f(c[5])?, f(c[6])?),
        });
    }
    Ok(out)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Failed bonds and heavily damaged particles, with summary metrics.
///
/// All coordinates refer to the initial (reference) configuration, so the
/// metrics can only grow as bonds fail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrackProfile {
    pub threshold: f64,
    pub failed_bonds: Vec<[f64; 2]>,
    /// Indices of particles whose connectivity damage reaches the threshold.
    pub damaged_particles: Vec<usize>,
    /// Per region: `[x_min, y_min, x_max, y_max]` of the damaged particles.
    pub bounding_boxes: Vec<(String, [f64; 4])>,
    /// Horizontal extent of failed bonds near the dam–foundation interface.
    pub base_extent_m: Option<f64>,
    /// Mean elevation of the largest failed-bond cluster in the upper dam.
    pub neck_elevation_m: Option<f64>,
}

impl CrackProfile {
    pub fn failed_count(&self) -> usize {
        self.failed_bonds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.failed_bonds.is_empty() && self.damaged_particles.is_empty()
    }

    pub fn from_parts(
        failed: &[Vec2],
        positions: &[Vec2],
        connectivity_damage: &[f64],
        regions: &[&str],
        threshold: f64,
        spacing: f64,
        analysis: Option<&Analysis>,
    ) -> Result<Self> {
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "crack threshold {threshold} outside (0, 1]"
            )));
        }
        let damaged_particles: Vec<usize> = (0..positions.len())
            .filter(|&i| connectivity_damage[i] >= threshold)
            .collect();
        let mut bounding_boxes: Vec<(String, [f64; 4])> = Vec::new();
        for &i in &damaged_particles {
            let p = positions[i];
            match bounding_boxes.iter_mut().find(|(r, _)| r == regions[i]) {
                Some((_, b)) => {
                    *b = [b[0].min(p.x), b[1].min(p.y), b[2].max(p.x), b[3].max(p.y)];
                }
                None => bounding_boxes.push((regions[i].to_string(), [p.x, p.y, p.x, p.y])),
            }
        }
        let (mut base_extent_m, mut neck_elevation_m) = (None, None);
        if let Some(a) = analysis {
            base_extent_m = Some(base_extent(failed, a.interface_y_m, spacing));
            let neck_floor = a.interface_y_m + 0.6 * a.dam_height_m;
            let upper: Vec<Vec2> = failed.iter().copied().filter(|p| p.y > neck_floor).collect();
            neck_elevation_m = largest_cluster(&upper, 2.0 * spacing)?
                .map(|c| c.iter().map(|&k| upper[k].y).sum::<f64>() / c.len() as f64);
        }
        Ok(CrackProfile {
            threshold,
            failed_bonds: failed.iter().map(|p| [p.x, p.y]).collect(),
            damaged_particles,
            bounding_boxes,
            base_extent_m,
            neck_elevation_m,
        })
    }

    pub fn from_simulation(
        sim: &Simulation,
        threshold: f64,
        analysis: Option<&Analysis>,
    ) -> Result<Self> {
        let positions = &sim.particles.position;
        let failed: Vec<Vec2> = sim
            .network
            .bonds
            .iter()
            .filter(|b| b.is_failed())
            .map(|b| b.midpoint(positions))
            .collect();
        let labels = &sim.particles.region_labels;
        let regions: Vec<&str> = sim.particles.region.iter().map(|&r| labels[r].as_str()).collect();
        Self::from_parts(
            &failed,
            positions,
            &sim.network.connectivity_damage_all(),
            &regions,
            threshold,
            sim.particles.spacing,
            analysis,
        )
    }
}

/// Extent in x of the failed-bond midpoints within two spacings of the interface.
pub fn base_extent(failed: &[Vec2], interface_y: f64, spacing: f64) -> f64 {
    let band = 2.0 * spacing;
    let (lo, hi) = failed
        .iter()
        .filter(|p| (p.y - interface_y).abs() <= band)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.x), hi.max(p.x))
        });
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}

/// Single-linkage clustering; returns the members of the largest cluster
/// (ties go to the cluster containing the lowest index).
pub fn largest_cluster(points: &[Vec2], radius: f64) -> Result<Option<Vec<usize>>> {
    if points.is_empty() {
        return Ok(None);
    }
    let nl = build_grid(points, radius, radius)?;
    let mut parent: Vec<usize> = (0..points.len()).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for (i, j) in nl.pairs() {
        let (a, b) = (root(&mut parent, i), root(&mut parent, j));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let roots: Vec<usize> = (0..points.len()).map(|i| root(&mut parent, i)).collect();
    let mut sizes = vec![0usize; points.len()];
    for &r in &roots {
        sizes[r] += 1;
    }
    let best = (0..points.len())
        .max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a)))
        .unwrap();
    Ok(Some((0..points.len()).filter(|&i| roots[i] == best).collect()))
}

/// Records probe displacements and global energies at a fixed step interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesLog {
    pub probes: Vec<(String, usize, [f64; 2])>,
    pub rows: Vec<Vec<f64>>,
}

impl TimeSeriesLog {
    /// Attaches each probe to its nearest particle, which must lie within
    /// one spacing of the probe.
    pub fn new(sim: &Simulation, probes: &[Probe]) -> Result<Self> {
        let spacing = sim.particles.spacing;
        let mut attached = Vec::new();
        for p in probes {
            let at = Vec2::new(p.position_m[0], p.position_m[1]);
            let nearest = sim
                .state
                .position
                .iter()
                .enumerate()
                .map(|(i, x)| (i, (x - at).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match nearest {
                Some((i, d)) if d <= spacing => {
                    let x0 = sim.state.position[i];
                    attached.push((p.name.clone(), i, [x0.x, x0.y]));
                }
                _ => {
                    return Err(Error::Config(format!(
                        "probe '{}' at ({}, {}) lies outside the domain",
                        p.name, at.x, at.y
                    )))
                }
            }
        }
        Ok(Self {
            probes: attached,
            rows: Vec::new(),
        })
    }

    pub fn header(&self) -> String {
        let mut h = String::from("time_s,step");
        for (name, _, _) in &self.probes {
            let _ = write!(h, ",{name}_dx_m,{name}_dy_m");
        }
        h.push_str(
            ",kinetic_J_per_m,strain_J_per_m,dissipated_J_per_m,damage_dissipated_J_per_m,\
external_work_J_per_m,max_damage,failed_bonds",
        );
        h
    }

    /// Appends a record for the current state and returns it.
    pub fn record(&mut self, sim: &Simulation) -> &[f64] {
        let b = sim.energy_budget();
        let mut row = vec![sim.state.time, sim.state.step as f64];
        for (_, i, x0) in &self.probes {
            let x = sim.state.position[*i];
            row.push(x.x - x0[0]);
            row.push(x.y - x0[1]);
        }
        row.extend([
            sim.kinetic_energy(),
            sim.strain_energy(),
            b.damage + b.viscous + b.damping,
            b.damage,
            b.external,
            sim.max_damage(),
            sim.network.failed_count() as f64,
        ]);
        self.rows.push(row);
        self.rows.last().unwrap()
    }

    pub fn format_row(row: &[f64]) -> String {
        let mut s = String::new();
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                s.push(',');
            }
            if k == 1 || k + 1 == row.len() {
                let _ = write!(s, "{}", *v as u64);
            } else {
                num(&mut s, *v);
            }
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for r in &self.rows {
            out.push_str(&Self::format_row(r));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_extent_of_horizontal_line() {
        let pts: Vec<Vec2> = (0..21).map(|k| Vec2::new(5.0 + 0.5 * k as f64, 0.25)).collect();
        assert!((base_extent(&pts, 0.0, 0.5) - 10.0).abs() <= 0.5);
        assert_eq!(base_extent(&[], 0.0, 0.5), 0.0);
    }

    #[test]
    fn clusters_split_beyond_radius() {
        let mut pts: Vec<Vec2> = (0..5).map(|k| Vec2::new(k as f64, 0.0)).collect();
        pts.extend((0..3).map(|k| Vec2::new(100.0 + k as f64, 0.0)));
        let c = largest_cluster(&pts, 2.0).unwrap().unwrap();
        assert_eq!(c, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn threshold_outside_range_rejected() {
        assert!(CrackProfile::from_parts(&[], &[], &[], &[], 0.0, 1.0, None).is_err());
        assert!(CrackProfile::from_parts(&[], &[], &[], &[], 1.5, 1.0, None).is_err());
    }
}
