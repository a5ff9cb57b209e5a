use std::path::Path;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sphdam::constitutive::Material;
use sphdam::dynamics::SolverParams;
use sphdam::excitation::BaseDrive;
use sphdam::lattice::{fill_polygon, ParticleSet, RegionPolygon};
use sphdam::output::{CrackProfile, Snapshot, TimeSeriesLog};
use sphdam::scene::{canonical, Analysis, Probe, Scene};
use sphdam::tensor::{Sym2, Vec2};
use sphdam::{Error, Simulation};

fn two_region_block() -> Simulation {
    let mat = Material::koyna_concrete();
    let dam = RegionPolygon::new("dam", "concrete", &[[0.0, 0.0], [20.0, 0.0], [20.0, 5.0], [0.0, 5.0]]);
    let rock = RegionPolygon::new(
        "foundation",
        "concrete",
        &[[-2.0, -3.0], [22.0, -3.0], [22.0, 0.0], [-2.0, 0.0]],
    );
    let mut ps: ParticleSet = fill_polygon(&rock, 0.5, &mat, 0).unwrap();
    ps.extend(fill_polygon(&dam, 0.5, &mat, 0).unwrap());
    Simulation::new(ps, vec![mat], 0.45, SolverParams::default(), BaseDrive::fixed()).unwrap()
}

fn analysis() -> Analysis {
    Analysis {
        dam_region: "dam".into(),
        interface_y_m: 0.0,
        dam_height_m: 5.0,
    }
}

fn scrambled() -> Simulation {
    let mut s = two_region_block();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..s.len() {
        s.state.position[i] += Vec2::new(rng.random_range(-1e-3..1e-3), rng.random_range(-1e-3..1e-3));
        s.state.velocity[i] = Vec2::new(rng.random_range(-1.0..1.0), rng.random::<f64>() * 1e-7);
        s.state.density[i] *= 1.0 + rng.random_range(-1e-4..1e-4);
        s.state.points[i].stress = Sym2::new(rng.random_range(-1e7..1e7), rng.random(), -1.0 / 3.0);
        s.state.points[i].damage.d = rng.random_range(0.0..0.9);
    }
    for b in s.network.bonds.iter_mut().step_by(7) {
        b.f = rng.random_range(0.0..1.0);
    }
    s.network.bonds[3].f = 0.0;
    s.state.time = 0.1 + 0.2;
    s.state.step = 60_000;
    s
}

#[test]
fn snapshot_table_round_trips_exactly() {
    let snap = Snapshot::capture(&scrambled(), Some(&analysis()));
    let text = snap.to_csv();
    let mut back = Snapshot::parse_csv(&text, Path::new("mem.csv")).unwrap();
    assert!(back.bonds.is_empty());
    back.bonds = snap.bonds.clone();
    assert_eq!(back, snap);
}

#[test]
fn snapshot_files_round_trip_with_bonds() {
    let dir = tempfile::tempdir().unwrap();
    let snap = Snapshot::capture(&scrambled(), Some(&analysis()));
    let path = snap.write(dir.path(), "snap", true).unwrap();
    assert_eq!(Snapshot::read(&path).unwrap(), snap);
    let vtk = std::fs::read_to_string(dir.path().join("snap.vtk")).unwrap();
    assert!(vtk.starts_with("# vtk DataFile Version"));
    assert!(vtk.contains(&format!("POINTS {} double", snap.particles.len())));
    // Identical state, identical bytes.
    let again = Snapshot::capture(&scrambled(), Some(&analysis()));
    assert_eq!(again.to_csv(), snap.to_csv());
    assert_eq!(again.to_vtk(), snap.to_vtk());
}

#[test]
fn zero_stress_gives_zero_principal_stresses() {
    let snap = Snapshot::capture(&two_region_block(), None);
    assert!(snap.particles.iter().all(|p| p.s_max == 0.0 && p.s_min == 0.0));
}

#[test]
fn principal_stress_example() {
    let mut s = two_region_block();
    s.state.points[0].stress = Sym2::new(2.0e6, 0.0, 1.0e6);
    let p = &Snapshot::capture(&s, None).particles[0];
    assert!((p.s_max - (1.0 + 2f64.sqrt()) * 1e6).abs() < 1e-6);
    assert!((p.s_min - (1.0 - 2f64.sqrt()) * 1e6).abs() < 1e-6);
}

#[test]
fn intact_network_has_empty_crack_profile() {
    let s = two_region_block();
    let profile = CrackProfile::from_simulation(&s, 0.5, Some(&analysis())).unwrap();
    assert!(profile.is_empty());
    assert_eq!(profile.base_extent_m, Some(0.0));
    assert_eq!(profile.neck_elevation_m, None);
}

/// Severs every bond crossing the dam–foundation interface for x in [4, 14].
fn severed_base() -> Simulation {
    let mut s = two_region_block();
    let pairs: Vec<(usize, usize)> = s
        .network
        .bonds
        .iter()
        .filter(|b| {
            let (pi, pj) = (s.state.position[b.i], s.state.position[b.j]);
            pi.y * pj.y < 0.0 && pi.x.min(pj.x) >= 4.0 && pi.x.max(pj.x) <= 14.0
        })
        .map(|b| (b.i, b.j))
        .collect();
    for (i, j) in pairs {
        assert!(s.network.sever(i, j));
    }
    s
}

#[test]
fn severed_base_line_reports_its_length() {
    let s = severed_base();
    let profile = CrackProfile::from_simulation(&s, 0.5, Some(&analysis())).unwrap();
    let extent = profile.base_extent_m.unwrap();
    assert!((extent - 10.0).abs() <= 0.5, "extent {extent}");
    assert!(profile.neck_elevation_m.is_none());

    let snap = Snapshot::capture(&s, Some(&analysis()));
    assert_eq!(snap.crack_profile(0.5).unwrap(), profile);
}

#[test]
fn full_threshold_lists_only_isolated_particles() {
    let mut s = two_region_block();
    let lonely = s.len() / 2;
    let partners: Vec<usize> = s.network.incident(lonely).iter().map(|&(j, _)| j).collect();
    for j in &partners {
        s.network.sever(lonely, *j);
    }
    let half = partners[0];
    let profile = CrackProfile::from_simulation(&s, 1.0, None).unwrap();
    assert_eq!(profile.damaged_particles, vec![lonely]);
    assert!(s.network.connectivity_damage(half) > 0.0);
    assert!(CrackProfile::from_simulation(&s, 0.0, None).is_err());
    assert!(CrackProfile::from_simulation(&s, 1.5, None).is_err());
}

#[test]
fn probes_outside_the_domain_are_rejected() {
    let s = two_region_block();
    let far = Probe {
        name: "far".into(),
        position_m: [100.0, 100.0],
    };
    assert!(matches!(TimeSeriesLog::new(&s, &[far]), Err(Error::Config(_))));
}

#[test]
fn probe_at_rest_records_zero_displacement() {
    let mut s = two_region_block();
    let crest = Probe {
        name: "crest".into(),
        position_m: [10.0, 4.75],
    };
    let mut log = TimeSeriesLog::new(&s, &[crest]).unwrap();
    log.record(&s);
    for _ in 0..5 {
        s.run_steps(20).unwrap();
        log.record(&s);
    }
    assert!(log.header().starts_with("time_s,step,crest_dx_m,crest_dy_m,"));
    for row in &log.rows {
        assert_eq!(row[2], 0.0);
        assert_eq!(row[3], 0.0);
    }
    assert_eq!(log.to_csv().lines().count(), 1 + log.rows.len());
}

fn canonical_scene(name: &str) -> Scene {
    Scene::from_toml_str(canonical::get(name).unwrap(), Path::new(name)).unwrap()
}

#[test]
fn shipped_koyna_scene_uses_published_numerics() {
    let s = canonical_scene("koyna");
    let n = &s.numerics;
    assert_eq!(n.spacing_m, 0.5);
    assert_eq!(s.smoothing_length(), 0.45);
    assert_eq!(n.dt_s, 5e-6);
    assert_eq!(n.t_end_s, 10.0);
    assert_eq!((n.eta1, n.eta2), (1.0, 2.0));
    assert_eq!((n.rayleigh_alpha_per_s, n.rayleigh_beta_s), (1.616, 0.0008));
    assert!(s.load_cases.contains_key("sinusoid"));
    assert!(s.load_cases.contains_key("earthquake"));
    let concrete = &s.materials[s.material_index("concrete").unwrap()];
    assert_eq!(concrete.young, 31.03e9);
    assert_eq!(concrete.gf, 100.0);
    assert!(s.validate().is_ok());
}

#[test]
fn canonical_scenes_round_trip() {
    for name in canonical::NAMES {
        let s = canonical_scene(name);
        let again = Scene::from_toml_str(&s.to_toml_string(), Path::new(name)).unwrap();
        assert_eq!(again, s, "{name}");
    }
}

proptest! {
    #[test]
    fn scene_overrides_round_trip(
        dt in 1e-7f64..3e-5,
        t_end in 0.0f64..20.0,
        alpha in 0.0f64..10.0,
        eps0 in 1e-5f64..1e-3,
        interval in 0.01f64..2.0,
    ) {
        let base = canonical_scene("plate-tension");
        let sets: Vec<(String, String)> = [
            ("numerics.dt_s", dt),
            ("t_end_s", t_end),
            ("rayleigh_alpha_per_s", alpha),
            ("snapshot_interval_s", interval),
        ]
        .iter()
        .map(|(k, v)| (k.to_string(), format!("{v:e}")))
        .collect();
        let mut s = base.with_overrides(&sets).unwrap();
        s.materials[0].eps0 = eps0;
        prop_assert_eq!(s.numerics.dt_s, dt);
        prop_assert_eq!(s.numerics.t_end_s, t_end);
        let again = Scene::from_toml_str(&s.to_toml_string(), Path::new("p")).unwrap();
        prop_assert_eq!(again, s);
    }
}
