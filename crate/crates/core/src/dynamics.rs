//! Discrete SPH conservation laws for a damaged elastic solid and the explicit
//! kick-drift-kick integrator.
//!
//! Pair sums, with `f_ij` the pseudo-spring interaction factor:
//!
//! ```text
//! dρ_i/dt = Σ_j f_ij m_j (v_i − v_j)·∇_i W_ij
//! dv_i/dt = Σ_j m_j [f_ij (σ_i/ρ_i² + σ_j/ρ_j²) − Π_ij I]·∇_i W_ij
//! de_i/dt = −½ Σ_j m_j (v_i − v_j)·[f_ij (σ_i/ρ_i² + σ_j/ρ_j²) − Π_ij I]·∇_i W_ij
//! ```
//!
//! Every sum is a gather over the neighbors of `i`, so particles can be
//! processed in parallel without changing a single bit of the result.

use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constitutive::{stress_update, ConstitutiveModel, Material, MaterialPoint};
use crate::error::{Error, Result};
use crate::excitation::BaseDrive;
use crate::kernel::CubicSpline;
use crate::lattice::ParticleSet;
use crate::neighbors::{build_grid, NeighborList};
use crate::springs::{init_network, update_bonds, BondLength, SpringNetwork};
use crate::tensor::{spin, Sym2, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArtificialViscosity {
    pub eta1: f64,
    pub eta2: f64,
    /// Regularizes `|x_ij|²` in the denominator as `ε h²`.
    pub epsilon: f64,
}

impl Default for ArtificialViscosity {
    fn default() -> Self {
        Self {
            eta1: 1.0,
            eta2: 2.0,
            epsilon: 0.01,
        }
    }
}

/// Monaghan viscosity `Π_ij` for separation `dx = x_i − x_j` and relative
/// velocity `dv = v_i − v_j`; zero unless the pair is approaching.
pub fn artificial_viscosity(
    dx: Vec2,
    dv: Vec2,
    h: f64,
    visc: &ArtificialViscosity,
    c_bar: f64,
    rho_bar: f64,
) -> f64 {
    let vx = dv.dot(&dx);
    if vx >= 0.0 {
        return 0.0;
    }
    let mu = h * vx / (dx.norm_squared() + visc.epsilon * h * h);
    (-visc.eta1 * c_bar * mu + visc.eta2 * mu * mu) / rho_bar
}

/// Rayleigh damping: `alpha` acts on velocity, `beta` adds the viscous stress
/// `β (1 − D) C : ε̇`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Rayleigh {
    #[serde(rename = "alpha_per_s")]
    pub alpha: f64,
    #[serde(rename = "beta_s")]
    pub beta: f64,
}

impl Rayleigh {
    /// Mass-proportional damping acceleration.
    pub fn acceleration(&self, v: Vec2) -> Vec2 {
        -self.alpha * v
    }
}

pub fn rayleigh_damping(velocity: &[Vec2], alpha: f64) -> Vec<Vec2> {
    velocity.iter().map(|v| -alpha * v).collect()
}

/// `C · h / (c_max + v_max)`.
pub fn cfl_limit(h: f64, c_max: f64, v_max: f64, cfl_number: f64) -> f64 {
    cfl_number * h / (c_max + v_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub dt: f64,
    pub cfl_number: f64,
    pub viscosity: ArtificialViscosity,
    pub rayleigh: Rayleigh,
    pub gravity: Vec2,
    pub model: ConstitutiveModel,
    /// Bond and particle damage histories are held fixed.
    pub freeze_damage: bool,
    /// When false the pseudo-spring factors stay at 1 for the whole run.
    pub fracture: bool,
    pub bond_length: BondLength,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            dt: 5e-6,
            cfl_number: 0.3,
            viscosity: ArtificialViscosity::default(),
            rayleigh: Rayleigh::default(),
            gravity: Vec2::zeros(),
            model: ConstitutiveModel::default(),
            freeze_damage: false,
            fracture: true,
            bond_length: BondLength::RestLength,
        }
    }
}

/// Specific energies (J/kg) integrated from the energy equation, split by origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SpecificEnergy {
    pub stress: f64,
    pub damping: f64,
    pub viscous: f64,
}

impl SpecificEnergy {
    pub fn total(&self) -> f64 {
        self.stress + self.damping + self.viscous
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub position: Vec<Vec2>,
    pub velocity: Vec<Vec2>,
    pub density: Vec<f64>,
    pub points: Vec<MaterialPoint>,
    pub energy: Vec<SpecificEnergy>,
    /// Stiffness-proportional Rayleigh stress.
    pub damping_stress: Vec<Sym2>,
    pub acceleration: Vec<Vec2>,
    pub step: u64,
    pub time: f64,
}

/// Global energy accounting since the last reset. All quantities in J per
/// metre of thickness.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub kinetic0: f64,
    pub strain0: f64,
    /// Work done on the material by the elastic stress field.
    pub stress_work: f64,
    pub damage: f64,
    pub viscous: f64,
    pub damping_mass: f64,
    pub damping_stiffness: f64,
    /// Work by gravity and by the kinematic constraint on driven particles.
    pub external: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBudget {
    pub kinetic: f64,
    pub strain: f64,
    pub damage: f64,
    pub viscous: f64,
    pub damping: f64,
    pub external: f64,
    pub stress_work: f64,
}

impl EnergyBudget {
    /// `ΔKE + ΔΨ + dissipation − W_ext`.
    pub fn residual(&self) -> f64 {
        self.kinetic + self.strain + self.damage + self.viscous + self.damping - self.external
    }
}

/// Per-particle split of the acceleration, kept for trapezoidal work sums.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
struct ForceParts {
    stress: Vec2,
    damping_stress: Vec2,
    viscous: Vec2,
    mass_damping: Vec2,
    gravity: Vec2,
    constraint: Vec2,
}

#[derive(Debug, Clone, Copy, Default)]
struct PairRates {
    stress: Vec2,
    damping_stress: Vec2,
    viscous: Vec2,
    de: SpecificEnergy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub particles: ParticleSet,
    pub materials: Vec<Material>,
    pub params: SolverParams,
    pub drive: BaseDrive,
    pub state: StateVector,
    pub network: SpringNetwork,
    pub ledger: EnergyLedger,
    h: f64,
    #[serde(skip)]
    neighbors: NeighborList,
    parts: Vec<ForceParts>,
}

impl Simulation {
    pub fn new(
        particles: ParticleSet,
        materials: Vec<Material>,
        h: f64,
        params: SolverParams,
        drive: BaseDrive,
    ) -> Result<Self> {
        CubicSpline::new(h)?;
        if particles.is_empty() {
            return Err(Error::Config("simulation has no particles".into()));
        }
        if let Some(&m) = particles.material.iter().find(|&&m| m >= materials.len()) {
            return Err(Error::Config(format!("particle references unknown material index {m}")));
        }
        let n = particles.len();
        let neighbors = build_grid(&particles.position, 2.0 * h, 2.0 * h)?;
        let network = init_network(
            &particles.position,
            &neighbors,
            &materials,
            &particles.material,
            params.bond_length,
        );
        let state = StateVector {
            position: particles.position.clone(),
            velocity: particles.velocity.clone(),
            density: particles.density.clone(),
            points: vec![MaterialPoint::default(); n],
            energy: vec![SpecificEnergy::default(); n],
            damping_stress: vec![Sym2::ZERO; n],
            acceleration: vec![Vec2::zeros(); n],
            step: 0,
            time: 0.0,
        };
        let mut sim = Self {
            particles,
            materials,
            params,
            drive,
            state,
            network,
            ledger: EnergyLedger::default(),
            h,
            neighbors,
            parts: vec![ForceParts::default(); n],
        };
        let dt_max = sim.cfl_limit();
        if sim.params.dt > dt_max {
            return Err(Error::CflViolation {
                dt: sim.params.dt,
                limit: dt_max,
            });
        }
        sim.refresh_accelerations()?;
        sim.reset_ledger();
        Ok(sim)
    }

    pub fn kernel(&self) -> CubicSpline {
        CubicSpline::new(self.h).expect("validated at construction")
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn neighbors(&self) -> &NeighborList {
        &self.neighbors
    }

    /// Rebuilds derived data that is not serialized (after deserialization).
    pub fn rebuild_neighbors(&mut self) -> Result<()> {
        self.neighbors = build_grid(&self.state.position, 2.0 * self.h, 2.0 * self.h)?;
        Ok(())
    }

    pub fn max_sound_speed(&self) -> f64 {
        let mut used = vec![false; self.materials.len()];
        for &m in &self.particles.material {
            used[m] = true;
        }
        self.materials
            .iter()
            .zip(used)
            .filter(|(_, u)| *u)
            .map(|(m, _)| m.sound_speed())
            .fold(0.0, f64::max)
    }

    pub fn max_speed(&self) -> f64 {
        self.state
            .velocity
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    pub fn cfl_limit(&self) -> f64 {
        cfl_limit(
            self.h,
            self.max_sound_speed(),
            self.max_speed(),
            self.params.cfl_number,
        )
    }

    pub fn effective_stress(&self, i: usize) -> Sym2 {
        self.state.points[i].effective_stress()
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.particles
            .mass
            .iter()
            .zip(&self.state.velocity)
            .map(|(m, v)| 0.5 * m * v.norm_squared())
            .sum()
    }

    pub fn strain_energy(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                self.particles.mass[i] / self.state.density[i]
                    * self.state.points[i].strain_energy_density()
            })
            .sum()
    }

    pub fn linear_momentum(&self) -> Vec2 {
        self.particles
            .mass
            .iter()
            .zip(&self.state.velocity)
            .fold(Vec2::zeros(), |acc, (m, v)| acc + v * *m)
    }

    pub fn max_damage(&self) -> f64 {
        self.state
            .points
            .iter()
            .map(|p| p.damage.d)
            .fold(0.0, f64::max)
    }

    pub fn reset_ledger(&mut self) {
        self.ledger = EnergyLedger {
            kinetic0: self.kinetic_energy(),
            strain0: self.strain_energy(),
            ..Default::default()
        };
    }

    pub fn energy_budget(&self) -> EnergyBudget {
        let l = &self.ledger;
        EnergyBudget {
            kinetic: self.kinetic_energy() - l.kinetic0,
            strain: self.strain_energy() - l.strain0,
            damage: l.damage,
            viscous: l.viscous,
            damping: l.damping_mass + l.damping_stiffness,
            external: l.external,
            stress_work: l.stress_work,
        }
    }

    /// Interaction factor lookups for the current neighbors of `i`, aligned
    /// with `self.neighbors.neighbors(i)`.
    fn for_each_pair(&self, i: usize, mut visit: impl FnMut(usize, f64)) {
        let incident = self.network.incident(i);
        let mut k = 0;
        for &j in self.neighbors.neighbors(i) {
            while k < incident.len() && incident[k].0 < j {
                k += 1;
            }
            let f = if self.params.fracture {
                match incident.get(k) {
                    Some(&(other, b)) if other == j => self.network.bonds[b].f,
                    _ => 0.0,
                }
            } else if incident.get(k).is_some_and(|&(other, _)| other == j) {
                1.0
            } else {
                0.0
            };
            visit(j, f);
        }
    }

    /// Continuity right-hand side and velocity gradient
    /// `L_i = Σ_j f_ij (m_j/ρ_i)(v_j − v_i) ⊗ ∇_i W_ij` per particle.
    fn strain_pass(&self) -> Vec<(f64, Matrix2<f64>)> {
        let kernel = self.kernel();
        let s = &self.state;
        let mass = &self.particles.mass;
        (0..self.len())
            .into_par_iter()
            .map(|i| {
                let mut drho = 0.0;
                let mut grad = Matrix2::zeros();
                self.for_each_pair(i, |j, f| {
                    if f == 0.0 {
                        return;
                    }
                    let g = kernel.gradient(s.position[i] - s.position[j]);
                    let dv = s.velocity[i] - s.velocity[j];
                    drho += f * mass[j] * dv.dot(&g);
                    grad -= (f * mass[j] / s.density[i]) * dv * g.transpose();
                });
                (drho, grad)
            })
            .collect()
    }

    fn force_pass(&self) -> Vec<PairRates> {
        let kernel = self.kernel();
        let s = &self.state;
        let mass = &self.particles.mass;
        let visc = self.params.viscosity;
        let sound: Vec<f64> = self.materials.iter().map(Material::sound_speed).collect();
        let scaled: Vec<(Sym2, Sym2)> = (0..self.len())
            .map(|i| {
                let inv = 1.0 / (s.density[i] * s.density[i]);
                (
                    s.points[i].effective_stress().scale(inv),
                    s.damping_stress[i].scale(inv),
                )
            })
            .collect();
        (0..self.len())
            .into_par_iter()
            .map(|i| {
                let mut out = PairRates::default();
                let ci = sound[self.particles.material[i]];
                self.for_each_pair(i, |j, f| {
                    let dx = s.position[i] - s.position[j];
                    let g = kernel.gradient(dx);
                    let dv = s.velocity[i] - s.velocity[j];
                    let mj = mass[j];
                    if f != 0.0 {
                        let ts = scaled[i].0.add(&scaled[j].0).mul_vec(&g) * f;
                        let tb = scaled[i].1.add(&scaled[j].1).mul_vec(&g) * f;
                        out.stress += ts * mj;
                        out.damping_stress += tb * mj;
                        out.de.stress -= 0.5 * mj * dv.dot(&ts);
                        out.de.damping -= 0.5 * mj * dv.dot(&tb);
                    }
                    let c_bar = 0.5 * (ci + sound[self.particles.material[j]]);
                    let rho_bar = 0.5 * (s.density[i] + s.density[j]);
                    let pi = artificial_viscosity(dx, dv, self.h, &visc, c_bar, rho_bar);
                    if pi != 0.0 {
                        out.viscous -= g * (mj * pi);
                        out.de.viscous += 0.5 * mj * pi * dv.dot(&g);
                    }
                });
                out
            })
            .collect()
    }

    /// Continuity-equation density rate for every particle.
    pub fn continuity_rhs(&self) -> Vec<f64> {
        self.strain_pass().into_iter().map(|(d, _)| d).collect()
    }

    /// Bond-weighted SPH velocity gradient `L_i` per particle.
    pub fn velocity_gradients(&self) -> Vec<Matrix2<f64>> {
        self.strain_pass().into_iter().map(|(_, l)| l).collect()
    }

    /// Internal (stress + Rayleigh stress + viscosity) accelerations.
    pub fn momentum_rhs(&self) -> Vec<Vec2> {
        self.force_pass()
            .into_iter()
            .map(|r| r.stress + r.damping_stress + r.viscous)
            .collect()
    }

    pub fn energy_rhs(&self) -> Vec<f64> {
        self.force_pass().into_iter().map(|r| r.de.total()).collect()
    }

    /// Recomputes accelerations for the current state without advancing time.
    pub fn refresh_accelerations(&mut self) -> Result<()> {
        let rates = self.force_pass();
        let parts = self.assemble(&rates, &self.state.velocity.clone())?;
        self.parts = parts;
        Ok(())
    }

    /// Combines pair sums with body forces and the base drive into the total
    /// acceleration stored in the state. Returns the per-part split.
    fn assemble(&mut self, rates: &[PairRates], v_damp: &[Vec2]) -> Result<Vec<ForceParts>> {
        let t = self.state.time;
        let base = self.drive.boundary_acceleration(t);
        let g = self.params.gravity;
        let ray = self.params.rayleigh;
        let mut parts = Vec::with_capacity(self.len());
        for (i, r) in rates.iter().enumerate() {
            let internal = r.stress + r.damping_stress + r.viscous;
            let mut p = ForceParts {
                stress: r.stress,
                damping_stress: r.damping_stress,
                viscous: r.viscous,
                gravity: g,
                ..Default::default()
            };
            let total = if self.particles.boundary[i] {
                p.constraint = base - internal - g;
                base
            } else {
                p.mass_damping = ray.acceleration(v_damp[i]);
                internal + g + p.mass_damping
            };
            if !total.x.is_finite() || !total.y.is_finite() {
                return Err(Error::NumericalBlowup {
                    step: self.state.step,
                    particle: i,
                    what: "non-finite acceleration".into(),
                });
            }
            self.state.acceleration[i] = total;
            parts.push(p);
        }
        Ok(parts)
    }

    /// One kick-drift-kick step of size `params.dt`.
    pub fn step(&mut self) -> Result<()> {
        let dt = self.params.dt;
        let half = 0.5 * dt;
        let step = self.state.step;

        for (v, a) in self.state.velocity.iter_mut().zip(&self.state.acceleration) {
            *v += a * half;
        }
        let v_max = self.max_speed();
        let limit = cfl_limit(self.h, self.max_sound_speed(), v_max, self.params.cfl_number);
        if dt > limit {
            return Err(Error::CflViolation { dt, limit });
        }
        for (x, v) in self.state.position.iter_mut().zip(&self.state.velocity) {
            *x += v * dt;
        }
        if let Some(i) = self
            .state
            .position
            .iter()
            .position(|p| !p.x.is_finite() || !p.y.is_finite())
        {
            return Err(Error::NumericalBlowup {
                step,
                particle: i,
                what: "non-finite position".into(),
            });
        }
        self.neighbors = build_grid(&self.state.position, 2.0 * self.h, 2.0 * self.h)?;

        // Density, stress and damage from the mid-step velocity field.
        let rates = self.strain_pass();
        let model = self.params.model;
        let freeze = self.params.freeze_damage;
        let beta = self.params.rayleigh.beta;
        let materials = &self.materials;
        let mass = &self.particles.mass;
        let mat_of = &self.particles.material;
        let damage_work: Result<Vec<f64>> = self
            .state
            .points
            .par_iter_mut()
            .zip(self.state.density.par_iter_mut())
            .zip(self.state.damping_stress.par_iter_mut())
            .zip(rates.par_iter())
            .enumerate()
            .map(|(i, (((point, rho), visc_stress), (drho, grad)))| {
                *rho += dt * drho;
                if !(*rho > 0.0) {
                    return Err(Error::NumericalBlowup {
                        step,
                        particle: i,
                        what: format!("non-positive density {rho}"),
                    });
                }
                let mat = &materials[mat_of[i]];
                let rate = Sym2::sym_part(grad);
                let d_before = point.damage.d;
                stress_update(&rate, spin(grad), dt, point, mat, &model, freeze, i).map_err(
                    |e| match e {
                        Error::NumericalBlowup { particle, what, .. } => {
                            Error::NumericalBlowup { step, particle, what }
                        }
                        other => other,
                    },
                )?;
                *visc_stress = if beta > 0.0 {
                    model.elastic(&rate, mat).scale(beta * (1.0 - point.damage.d))
                } else {
                    Sym2::ZERO
                };
                let dd = point.damage.d - d_before;
                Ok(if dd > 0.0 {
                    mass[i] / *rho * 0.5 * point.stress.ddot(&point.strain) * dd
                } else {
                    0.0
                })
            })
            .collect();
        self.ledger.damage += damage_work?.iter().sum::<f64>();

        if self.params.fracture && !freeze {
            update_bonds(&mut self.network, &self.state.position, &self.materials).map_err(
                |e| match e {
                    Error::NumericalBlowup { particle, what, .. } => {
                        Error::NumericalBlowup { step, particle, what }
                    }
                    other => other,
                },
            )?;
        }

        self.state.step += 1;
        self.state.time = self.state.step as f64 * dt;

        let pair_rates = self.force_pass();
        let v_half = self.state.velocity.clone();
        let parts = self.assemble(&pair_rates, &v_half)?;

        for (e, r) in self.state.energy.iter_mut().zip(&pair_rates) {
            e.stress += dt * r.de.stress;
            e.damping += dt * r.de.damping;
            e.viscous += dt * r.de.viscous;
        }

        // Trapezoidal work of each force family over the step, in index order.
        let (mut w_stress, mut w_beta, mut w_visc, mut w_alpha, mut w_ext) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..self.len() {
            let v = v_half[i] * (self.particles.mass[i] * half);
            let (p0, p1) = (&self.parts[i], &parts[i]);
            w_stress += v.dot(&(p0.stress + p1.stress));
            w_beta += v.dot(&(p0.damping_stress + p1.damping_stress));
            w_visc += v.dot(&(p0.viscous + p1.viscous));
            w_alpha += v.dot(&(p0.mass_damping + p1.mass_damping));
            w_ext += v.dot(&(p0.gravity + p1.gravity + p0.constraint + p1.constraint));
        }
        self.ledger.stress_work -= w_stress;
        self.ledger.damping_stiffness -= w_beta;
        self.ledger.viscous -= w_visc;
        self.ledger.damping_mass -= w_alpha;
        self.ledger.external += w_ext;
        self.parts = parts;

        for (v, a) in self.state.velocity.iter_mut().zip(&self.state.acceleration) {
            *v += a * half;
        }
        Ok(())
    }

    pub fn run_steps(&mut self, n: u64) -> Result<()> {
        for _ in 0..n {
            self.step()?;
        }
        Ok(())
    }

    /// Overwrites the rest state after a preload: velocities and clocks are
    /// zeroed, the stress field is kept.
    pub fn restart_clock(&mut self) -> Result<()> {
        for v in &mut self.state.velocity {
            *v = Vec2::zeros();
        }
        for e in &mut self.state.energy {
            *e = SpecificEnergy::default();
        }
        self.state.step = 0;
        self.state.time = 0.0;
        self.refresh_accelerations()?;
        self.reset_ledger();
        Ok(())
    }
}
