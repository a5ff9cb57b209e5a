//! Pseudo-spring network: every initially neighboring pair is joined by a
//! virtual bond whose interaction factor `f ∈ [0, 1]` degrades with the bond's
//! tensile strain history and drops to zero, permanently, on full failure.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constitutive::{damage_with_length, Material, MAX_DAMAGE};
use crate::error::{Error, Result};
use crate::neighbors::NeighborList;
use crate::tensor::Vec2;

/// Which length regularizes a bond's softening branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BondLength {
    #[default]
    RestLength,
    Characteristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    pub rest_length: f64,
    pub f: f64,
    pub kappa: f64,
    /// Index of the material whose fracture constants govern this bond.
    pub material: usize,
}

impl Bond {
    pub fn is_failed(&self) -> bool {
        self.f == 0.0
    }

    pub fn midpoint(&self, positions: &[Vec2]) -> Vec2 {
        (positions[self.i] + positions[self.j]) * 0.5
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpringNetwork {
    pub bonds: Vec<Bond>,
    pub length_mode: BondLength,
    offsets: Vec<usize>,
    /// (other particle, bond index), sorted by other particle.
    adjacency: Vec<(usize, usize)>,
}

/// The material with the lower peak stress `E·ε₀` (ties broken by `G_f`).
fn weaker(materials: &[Material], a: usize, b: usize) -> usize {
    let key = |m: &Material| (m.young * m.eps0, m.gf);
    let (ka, kb) = (key(&materials[a]), key(&materials[b]));
    if kb.partial_cmp(&ka) == Some(std::cmp::Ordering::Less) {
        b
    } else {
        a
    }
}

pub fn init_network(
    positions: &[Vec2],
    neighbors: &NeighborList,
    materials: &[Material],
    particle_material: &[usize],
    length_mode: BondLength,
) -> SpringNetwork {
    let bonds: Vec<Bond> = neighbors
        .pairs()
        .map(|(i, j)| Bond {
            i,
            j,
            rest_length: (positions[i] - positions[j]).norm(),
            f: 1.0,
            kappa: 0.0,
            material: weaker(materials, particle_material[i], particle_material[j]),
        })
        .collect();

    let n = positions.len();
    let mut lists: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (b, bond) in bonds.iter().enumerate() {
        lists[bond.i].push((bond.j, b));
        lists[bond.j].push((bond.i, b));
    }
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    let mut adjacency = Vec::with_capacity(2 * bonds.len());
    for mut l in lists {
        l.sort_unstable();
        adjacency.extend(l);
        offsets.push(adjacency.len());
    }
    SpringNetwork {
        bonds,
        length_mode,
        offsets,
        adjacency,
    }
}

impl SpringNetwork {
    pub fn particle_count(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    /// Bonds incident to particle `i` as (other particle, bond index).
    pub fn incident(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn bond_between(&self, i: usize, j: usize) -> Option<&Bond> {
        if i >= self.particle_count() {
            return None;
        }
        let inc = self.incident(i);
        inc.binary_search_by_key(&j, |&(other, _)| other)
            .ok()
            .map(|k| &self.bonds[inc[k].1])
    }

    pub fn interaction_factor(&self, i: usize, j: usize) -> f64 {
        self.bond_between(i, j).map_or(0.0, |b| b.f)
    }

    pub fn failed_count(&self) -> usize {
        self.bonds.iter().filter(|b| b.is_failed()).count()
    }

    /// `1 − Σf / n₀` over the bonds initially incident to `i`; zero for
    /// particles that never had bonds.
    pub fn connectivity_damage(&self, i: usize) -> f64 {
        let inc = self.incident(i);
        if inc.is_empty() {
            return 0.0;
        }
        let sum: f64 = inc.iter().map(|&(_, b)| self.bonds[b].f).sum();
        (1.0 - sum / inc.len() as f64).clamp(0.0, 1.0)
    }

    pub fn connectivity_damage_all(&self) -> Vec<f64> {
        (0..self.particle_count())
            .map(|i| self.connectivity_damage(i))
            .collect()
    }

    /// Severs a bond outright (test fixtures and constructed crack inputs).
    pub fn sever(&mut self, i: usize, j: usize) -> bool {
        let inc = self.incident(i);
        match inc.binary_search_by_key(&j, |&(other, _)| other) {
            Ok(k) => {
                let b = inc[k].1;
                self.bonds[b].f = 0.0;
                self.bonds[b].kappa = f64::INFINITY;
                true
            }
            Err(_) => false,
        }
    }
}

/// Updates bond strain histories and interaction factors from current positions.
pub fn update_bonds(
    network: &mut SpringNetwork,
    positions: &[Vec2],
    materials: &[Material],
) -> Result<()> {
    let mode = network.length_mode;
    let bad = network.bonds.par_iter_mut().find_map_any(|bond| {
        if bond.is_failed() {
            return None;
        }
        let d = positions[bond.i] - positions[bond.j];
        let len = d.norm();
        if !len.is_finite() {
            return Some(bond.i);
        }
        let strain = (len - bond.rest_length) / bond.rest_length;
        if strain > bond.kappa {
            bond.kappa = strain;
            let mat = &materials[bond.material];
            let ell = match mode {
                BondLength::RestLength => bond.rest_length,
                BondLength::Characteristic => mat.hc,
            };
            let d = damage_with_length(bond.kappa, mat, ell);
            bond.f = if d >= MAX_DAMAGE { 0.0 } else { 1.0 - d };
        }
        None
    });
    match bad {
        Some(i) => Err(Error::NumericalBlowup {
            step: 0,
            particle: i,
            what: "non-finite bond length".into(),
        }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neighbors::brute_force;

    fn mats() -> Vec<Material> {
        vec![Material::koyna_concrete()]
    }

    fn pair(dist: f64) -> (Vec<Vec2>, SpringNetwork) {
        let pos = vec![Vec2::new(0.0, 0.0), Vec2::new(dist, 0.0)];
        let nl = brute_force(&pos, 0.9).unwrap();
        let net = init_network(&pos, &nl, &mats(), &[0, 0], BondLength::RestLength);
        (pos, net)
    }

    #[test]
    fn two_particles_one_bond() {
        let (_, net) = pair(0.5);
        assert_eq!(net.bonds.len(), 1);
        assert_eq!(net.bonds[0].rest_length, 0.5);
        assert_eq!(net.interaction_factor(0, 1), 1.0);
        assert_eq!(net.interaction_factor(1, 0), 1.0);
    }

    #[test]
    fn interior_lattice_particle_has_eight_bonds() {
        let mut pos = Vec::new();
        for j in 0..5 {
            for i in 0..5 {
                pos.push(Vec2::new(0.5 * i as f64, 0.5 * j as f64));
            }
        }
        pos.push(Vec2::new(100.0, 100.0));
        let nl = brute_force(&pos, 0.9).unwrap();
        let net = init_network(&pos, &nl, &mats(), &vec![0; pos.len()], BondLength::RestLength);
        assert_eq!(net.incident(12).len(), 8);
        assert_eq!(net.incident(25).len(), 0);
        assert_eq!(net.connectivity_damage(25), 0.0);
        assert_eq!(net.interaction_factor(0, 24), 0.0);
    }

    #[test]
    fn stretch_to_initiation_keeps_full_factor() {
        let (mut pos, mut net) = pair(0.5);
        pos[1].x = 0.5 * (1.0 + 1e-4);
        update_bonds(&mut net, &pos, &mats()).unwrap();
        assert!((net.bonds[0].kappa - 1e-4).abs() < 1e-15);
        assert_eq!(net.bonds[0].f, 1.0);
    }

    #[test]
    fn stretch_to_twice_initiation() {
        let (mut pos, mut net) = pair(0.5);
        pos[1].x = 0.5 * (1.0 + 2e-4);
        update_bonds(&mut net, &pos, &mats()).unwrap();
        assert!((net.bonds[0].f - 0.5 * (-1.5515f64).exp()).abs() < 1e-9);
        assert!((net.bonds[0].f - 0.1060).abs() < 1e-4);
    }

    #[test]
    fn compression_never_damages() {
        let (mut pos, mut net) = pair(0.5);
        pos[1].x = 0.3;
        update_bonds(&mut net, &pos, &mats()).unwrap();
        assert_eq!(net.bonds[0].kappa, 0.0);
        assert_eq!(net.bonds[0].f, 1.0);
    }

    #[test]
    fn failure_is_permanent() {
        let (mut pos, mut net) = pair(0.5);
        pos[1].x = 0.6;
        update_bonds(&mut net, &pos, &mats()).unwrap();
        assert_eq!(net.interaction_factor(0, 1), 0.0);
        assert_eq!(net.failed_count(), 1);
        pos[1].x = 0.5;
        update_bonds(&mut net, &pos, &mats()).unwrap();
        assert_eq!(net.interaction_factor(0, 1), 0.0);
        assert_eq!(net.connectivity_damage(0), 1.0);
    }

    #[test]
    fn interface_bonds_use_weaker_material() {
        let mut rock = Material::koyna_concrete();
        rock.id = "rock".into();
        rock.eps0 = 5e-4;
        let materials = vec![rock, Material::koyna_concrete()];
        let pos = vec![Vec2::new(0.0, 0.0), Vec2::new(0.5, 0.0), Vec2::new(1.0, 0.0)];
        let nl = brute_force(&pos, 0.9).unwrap();
        let net = init_network(&pos, &nl, &materials, &[0, 0, 1], BondLength::RestLength);
        assert_eq!(net.bond_between(0, 1).unwrap().material, 0);
        assert_eq!(net.bond_between(1, 2).unwrap().material, 1);
    }

    #[test]
    fn non_finite_positions_rejected() {
        let (mut pos, mut net) = pair(0.5);
        pos[1].x = f64::NAN;
        assert!(matches!(
            update_bonds(&mut net, &pos, &mats()),
            Err(Error::NumericalBlowup { .. })
        ));
    }
}
