//! Initial particle configuration: square-lattice filling of closed polygons.

use serde::{Deserialize, Serialize};

use crate::constitutive::Material;
use crate::error::{Error, Result};
use crate::tensor::Vec2;

/// Closed polygon (implicitly closed: the last vertex connects to the first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPolygon {
    pub label: String,
    pub material: String,
    #[serde(rename = "vertices_m")]
    pub vertices: Vec<[f64; 2]>,
}

impl RegionPolygon {
    pub fn new(label: &str, material: &str, vertices: &[[f64; 2]]) -> Self {
        Self {
            label: label.to_string(),
            material: material.to_string(),
            vertices: vertices.to_vec(),
        }
    }

    /// Signed shoelace area (positive for counter-clockwise vertex order).
    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        let mut acc = 0.0;
        for k in 0..n {
            let [x0, y0] = self.vertices[k];
            let [x1, y1] = self.vertices[(k + 1) % n];
            acc += x0 * y1 - x1 * y0;
        }
        0.5 * acc
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.vertices {
            for a in 0..2 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        (lo, hi)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if n < 3 {
            return Err(Error::InvalidArgument(format!(
                "region '{}' needs at least 3 vertices, got {n}",
                self.label
            )));
        }
        if self.vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "region '{}' has non-finite vertex coordinates",
                self.label
            )));
        }
        for a in 0..n {
            for b in (a + 1)..n {
                let adjacent = b == a + 1 || (a == 0 && b == n - 1);
                if adjacent {
                    continue;
                }
                let (p0, p1) = (self.vertices[a], self.vertices[(a + 1) % n]);
                let (q0, q1) = (self.vertices[b], self.vertices[(b + 1) % n]);
                if segments_intersect(p0, p1, q0, q1) {
                    return Err(Error::InvalidArgument(format!(
                        "region '{}' is self-intersecting (edges {a} and {b})",
                        self.label
                    )));
                }
            }
        }
        Ok(())
    }

    /// Point-in-polygon test with points on an edge counted as inside.
    pub fn contains(&self, p: [f64; 2], tol: f64) -> bool {
        let n = self.vertices.len();
        let mut inside = false;
        for k in 0..n {
            let a = self.vertices[k];
            let b = self.vertices[(k + 1) % n];
            if point_segment_distance(p, a, b) <= tol {
                return true;
            }
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x_cross = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                if p[0] < x_cross {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn segments_intersect(p0: [f64; 2], p1: [f64; 2], q0: [f64; 2], q1: [f64; 2]) -> bool {
    let d1 = cross(q0, q1, p0);
    let d2 = cross(q0, q1, p1);
    let d3 = cross(p0, p1, q0);
    let d4 = cross(p0, p1, q1);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |a: [f64; 2], b: [f64; 2], p: [f64; 2]| point_segment_distance(p, a, b) == 0.0;
    (d1 == 0.0 && on(q0, q1, p0))
        || (d2 == 0.0 && on(q0, q1, p1))
        || (d3 == 0.0 && on(p0, p1, q0))
        || (d4 == 0.0 && on(p0, p1, q1))
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let d = [ap[0] - t * ab[0], ap[1] - t * ab[1]];
    d[0].hypot(d[1])
}

/// Per-particle arrays (structure of arrays). Volumes and masses are per unit
/// out-of-plane thickness.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParticleSet {
    pub spacing: f64,
    pub position: Vec<Vec2>,
    pub velocity: Vec<Vec2>,
    pub mass: Vec<f64>,
    pub volume: Vec<f64>,
    pub density: Vec<f64>,
    pub material: Vec<usize>,
    pub region: Vec<usize>,
    pub boundary: Vec<bool>,
    pub region_labels: Vec<String>,
}

impl ParticleSet {
    pub fn len(&self) -> usize {
        self.position.len()
    }

    pub fn is_empty(&self) -> bool {
        self.position.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn region_index(&self, label: &str) -> Option<usize> {
        self.region_labels.iter().position(|l| l == label)
    }

    pub fn count_in_region(&self, label: &str) -> usize {
        match self.region_index(label) {
            Some(r) => self.region.iter().filter(|&&x| x == r).count(),
            None => 0,
        }
    }

    pub fn boundary_count(&self) -> usize {
        self.boundary.iter().filter(|&&b| b).count()
    }

    /// Appends another set; region labels are merged by name.
    pub fn extend(&mut self, other: ParticleSet) {
        if self.is_empty() && self.region_labels.is_empty() {
            self.spacing = other.spacing;
        }
        let remap: Vec<usize> = other
            .region_labels
            .iter()
            .map(|l| match self.region_index(l) {
                Some(r) => r,
                None => {
                    self.region_labels.push(l.clone());
                    self.region_labels.len() - 1
                }
            })
            .collect();
        self.position.extend(other.position);
        self.velocity.extend(other.velocity);
        self.mass.extend(other.mass);
        self.volume.extend(other.volume);
        self.density.extend(other.density);
        self.material.extend(other.material);
        self.region.extend(other.region.into_iter().map(|r| remap[r]));
        self.boundary.extend(other.boundary);
    }
}

/// Fills `region` with particles on a square lattice of the given spacing.
///
/// The lattice origin is the bounding-box minimum plus `spacing / 2`; sites are
/// emitted row by row (increasing y, then increasing x).
pub fn fill_polygon(
    region: &RegionPolygon,
    spacing: f64,
    material: &Material,
    material_index: usize,
) -> Result<ParticleSet> {
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "lattice spacing must be positive, got {spacing}"
        )));
    }
    region.validate()?;
    let area = region.area();
    if area < spacing * spacing {
        return Err(Error::EmptyRegion {
            label: region.label.clone(),
            area,
            min: spacing * spacing,
        });
    }

    let (lo, hi) = region.bounding_box();
    let tol = 1e-9 * spacing;
    let nx = ((hi[0] - lo[0] - 0.5 * spacing + tol) / spacing).floor() as i64 + 1;
    let ny = ((hi[1] - lo[1] - 0.5 * spacing + tol) / spacing).floor() as i64 + 1;

    let mass = material.rho0 * spacing * spacing;
    let mut set = ParticleSet {
        spacing,
        region_labels: vec![region.label.clone()],
        ..Default::default()
    };
    for j in 0..ny.max(0) {
        let y = lo[1] + (j as f64 + 0.5) * spacing;
        for i in 0..nx.max(0) {
            let x = lo[0] + (i as f64 + 0.5) * spacing;
            if region.contains([x, y], tol) {
                set.position.push(Vec2::new(x, y));
                set.velocity.push(Vec2::zeros());
                set.mass.push(mass);
                set.volume.push(spacing * spacing);
                set.density.push(material.rho0);
                set.material.push(material_index);
                set.region.push(0);
                set.boundary.push(false);
            }
        }
    }
    if set.is_empty() {
        return Err(Error::EmptyRegion {
            label: region.label.clone(),
            area,
            min: spacing * spacing,
        });
    }
    Ok(set)
}

/// Flags the particles that will be kinematically driven.
///
/// With a `base_region` present (normally "foundation"), every particle of
/// that region within `band` of its bottom edge is flagged, plus, when
/// `lateral` is set, those within `band` of its left and right edges. Without
/// one, only the lowest particle row of the whole set is flagged.
/// Returns the number of flagged particles.
pub fn tag_boundary(
    particles: &mut ParticleSet,
    band: f64,
    base_region: &str,
    lateral: bool,
) -> Result<usize> {
    let spacing = particles.spacing;
    if !(band >= spacing) {
        return Err(Error::InvalidArgument(format!(
            "boundary band {band} m must be at least the particle spacing {spacing} m"
        )));
    }
    let tol = 1e-9 * spacing;
    match particles.region_index(base_region) {
        Some(r) => {
            let members = || (0..particles.len()).filter(|&i| particles.region[i] == r);
            let mut lo = [f64::INFINITY; 2];
            let mut hi = [f64::NEG_INFINITY; 2];
            for i in members() {
                let p = particles.position[i];
                lo = [lo[0].min(p.x), lo[1].min(p.y)];
                hi = [hi[0].max(p.x), hi[1].max(p.y)];
            }
            // Particle centres sit half a spacing inside the region edges.
            let bottom = lo[1] - 0.5 * spacing;
            let left = lo[0] - 0.5 * spacing;
            let right = hi[0] + 0.5 * spacing;
            let flagged: Vec<usize> = members()
                .filter(|&i| {
                    let p = particles.position[i];
                    p.y - bottom <= band + tol
                        || (lateral && (p.x - left <= band + tol || right - p.x <= band + tol))
                })
                .collect();
            for &i in &flagged {
                particles.boundary[i] = true;
            }
        }
        None => {
            let y_min = particles
                .position
                .iter()
                .map(|p| p.y)
                .fold(f64::INFINITY, f64::min);
            for i in 0..particles.len() {
                if particles.position[i].y - y_min <= 0.5 * spacing {
                    particles.boundary[i] = true;
                }
            }
        }
    }
    Ok(particles.boundary_count())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn concrete() -> Material {
        Material::koyna_concrete()
    }

    fn rect(label: &str, x0: f64, y0: f64, w: f64, hgt: f64) -> RegionPolygon {
        RegionPolygon::new(
            label,
            "concrete",
            &[[x0, y0], [x0 + w, y0], [x0 + w, y0 + hgt], [x0, y0 + hgt]],
        )
    }

    #[test]
    fn unit_square_gives_four_particles() {
        let set = fill_polygon(&rect("sq", 0.0, 0.0, 1.0, 1.0), 0.5, &concrete(), 0).unwrap();
        assert_eq!(set.len(), 4);
        assert_eq!(set.position[0], Vec2::new(0.25, 0.25));
        assert_eq!(set.position[3], Vec2::new(0.75, 0.75));
        let m = concrete().rho0 * 0.25;
        assert!(set.mass.iter().all(|&x| x == m));
        assert!(set.density.iter().all(|&d| d == concrete().rho0));
    }

    #[test]
    fn degenerate_polygon_is_rejected() {
        let tiny = rect("tiny", 0.0, 0.0, 0.3, 0.3);
        assert!(matches!(
            fill_polygon(&tiny, 0.5, &concrete(), 0),
            Err(Error::EmptyRegion { .. })
        ));
        let two = RegionPolygon::new("line", "c", &[[0.0, 0.0], [1.0, 0.0]]);
        assert!(fill_polygon(&two, 0.5, &concrete(), 0).is_err());
        let bowtie = RegionPolygon::new("bow", "c", &[[0.0, 0.0], [2.0, 2.0], [2.0, 0.0], [0.0, 2.0]]);
        assert!(matches!(bowtie.validate(), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn boundary_points_are_included() {
        let tri = RegionPolygon::new("tri", "c", &[[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]]);
        assert!(tri.contains([2.0, 2.0], 1e-12));
        assert!(tri.contains([0.0, 1.0], 1e-12));
        assert!(!tri.contains([2.1, 2.1], 1e-12));
    }

    #[test]
    fn foundation_bottom_two_rows_flagged() {
        let mut set =
            fill_polygon(&rect("foundation", 0.0, 0.0, 140.0, 30.0), 0.5, &concrete(), 0).unwrap();
        let n = tag_boundary(&mut set, 1.0, "foundation", false).unwrap();
        assert_eq!(n, 2 * 280);
        for i in 0..set.len() {
            assert_eq!(set.boundary[i], set.position[i].y < 1.0);
        }
    }

    #[test]
    fn lateral_edges_flagged_when_requested() {
        let mut set =
            fill_polygon(&rect("foundation", 0.0, 0.0, 10.0, 5.0), 0.5, &concrete(), 0).unwrap();
        let n = tag_boundary(&mut set, 1.0, "foundation", true).unwrap();
        // 20 columns × 10 rows; bottom 2 rows plus 2 columns on each side.
        assert_eq!(n, 2 * 20 + 8 * 4);
    }

    #[test]
    fn band_below_spacing_is_rejected() {
        let mut set = fill_polygon(&rect("foundation", 0.0, 0.0, 2.0, 2.0), 0.5, &concrete(), 0).unwrap();
        assert!(matches!(
            tag_boundary(&mut set, 0.25, "foundation", false),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn dam_only_flags_bottom_row() {
        let mut set = fill_polygon(&rect("dam", 0.0, 0.0, 5.0, 3.0), 0.5, &concrete(), 0).unwrap();
        let n = tag_boundary(&mut set, 1.0, "foundation", true).unwrap();
        assert_eq!(n, 10);
        for i in 0..set.len() {
            assert_eq!(set.boundary[i], set.position[i].y == 0.25);
        }
    }

    #[test]
    fn extend_merges_labels() {
        let mut a = fill_polygon(&rect("dam", 0.0, 0.0, 1.0, 1.0), 0.5, &concrete(), 0).unwrap();
        let b = fill_polygon(&rect("foundation", 0.0, -1.0, 1.0, 1.0), 0.5, &concrete(), 1).unwrap();
        a.extend(b);
        assert_eq!(a.len(), 8);
        assert_eq!(a.count_in_region("dam"), 4);
        assert_eq!(a.count_in_region("foundation"), 4);
        assert_eq!(a.material[7], 1);
    }
}
