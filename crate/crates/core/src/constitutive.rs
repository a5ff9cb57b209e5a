//! Linear elasticity in rate form with an exponential-softening isotropic
//! damage law.
//!
//! Damage as a function of the equivalent strain history `κ`:
//!
//! ```text
//! D(κ) = 0                                        κ ≤ ε₀
//! D(κ) = 1 − (ε₀/κ) exp(−(E ε₀ h_c / G_f)(κ − ε₀))   κ > ε₀
//! ```
//!
//! so that under uniaxial tension the effective stress `(1 − D) E ε` softens
//! exponentially from the peak `E ε₀` and dissipates `G_f / h_c` per unit
//! volume.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Sym2;

/// Upper clamp on `D`; `1 − D` never reaches exactly zero.
pub const MAX_DAMAGE: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub id: String,
    #[serde(rename = "E_Pa")]
    pub young: f64,
    pub nu: f64,
    #[serde(rename = "rho0_kg_per_m3")]
    pub rho0: f64,
    /// Tensile strength (only cross-checked against `E·ε₀`).
    #[serde(rename = "ft_Pa")]
    pub ft: f64,
    /// Compressive strength (informational; feeds the modified von Mises ratio).
    #[serde(rename = "fc_Pa")]
    pub fc: f64,
    /// Fracture energy per unit crack area.
    #[serde(rename = "Gf_N_per_m")]
    pub gf: f64,
    /// Damage initiation strain.
    pub eps0: f64,
    /// Characteristic length regularizing the softening branch.
    #[serde(rename = "hc_m")]
    pub hc: f64,
}

impl Material {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: &str,
        young: f64,
        nu: f64,
        rho0: f64,
        ft: f64,
        fc: f64,
        gf: f64,
        eps0: f64,
        hc: f64,
    ) -> Self {
        Self {
            id: id.to_string(),
            young,
            nu,
            rho0,
            ft,
            fc,
            gf,
            eps0,
            hc,
        }
    }

    /// Concrete of the Koyna dam section at 0.5 m resolution.
    pub fn koyna_concrete() -> Self {
        Self::new("concrete", 31.03e9, 0.2, 2643.0, 3.19e6, 31.9e6, 100.0, 1e-4, 0.5)
    }

    pub fn sound_speed(&self) -> f64 {
        (self.young / self.rho0).sqrt()
    }

    /// Exponent coefficient `E ε₀ ℓ / G_f` of the softening branch for length `ℓ`.
    pub fn softening_rate(&self, length: f64) -> f64 {
        self.young * self.eps0 * length / self.gf
    }

    /// Checks hard invariants; returns soft warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let bad = |what: &str| Err(Error::Config(format!("material '{}': {what}", self.id)));
        if !(self.young > 0.0) {
            return bad("E_Pa must be positive");
        }
        if !(0.0..0.5).contains(&self.nu) {
            return bad("nu must lie in [0, 0.5)");
        }
        if !(self.rho0 > 0.0) {
            return bad("rho0_kg_per_m3 must be positive");
        }
        if !(self.gf > 0.0) {
            return bad("Gf_N_per_m must be positive");
        }
        if !(self.eps0 > 0.0) {
            return bad("eps0 must be positive");
        }
        if !(self.hc > 0.0) {
            return bad("hc_m must be positive");
        }
        let mut warnings = Vec::new();
        let peak = self.young * self.eps0;
        if self.ft > 0.0 && ((peak - self.ft) / self.ft).abs() > 0.1 {
            warnings.push(format!(
                "material '{}': E·eps0 = {:.4e} Pa differs from ft = {:.4e} Pa by more than 10%",
                self.id, peak, self.ft
            ));
        }
        Ok(warnings)
    }
}

/// Damage for equivalent strain `eps` using the material's `h_c`.
pub fn damage(eps: f64, mat: &Material) -> f64 {
    damage_with_length(eps, mat, mat.hc)
}

/// Damage law with an explicit regularization length.
pub fn damage_with_length(eps: f64, mat: &Material, length: f64) -> f64 {
    if eps <= mat.eps0 {
        return 0.0;
    }
    let k = mat.softening_rate(length);
    let d = 1.0 - (mat.eps0 / eps) * (-k * (eps - mat.eps0)).exp();
    d.clamp(0.0, MAX_DAMAGE)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StressState {
    #[default]
    PlaneStress,
    PlaneStrain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquivalentStrain {
    /// Largest positive principal strain.
    #[default]
    Principal,
    /// Modified von Mises with ratio `fc / ft`.
    ModifiedVonMises,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConstitutiveModel {
    pub stress_state: StressState,
    pub equivalent_strain: EquivalentStrain,
}

/// `max(0, largest principal strain)`.
pub fn equivalent_strain(strain: &Sym2) -> f64 {
    strain.principal().0.max(0.0)
}

fn modified_von_mises(strain: &Sym2, mat: &Material, state: StressState) -> f64 {
    let nu = mat.nu;
    let ezz = match state {
        StressState::PlaneStress => -nu / (1.0 - nu) * strain.trace(),
        StressState::PlaneStrain => 0.0,
    };
    let k = if mat.ft > 0.0 && mat.fc > 0.0 {
        mat.fc / mat.ft
    } else {
        10.0
    };
    let i1 = strain.trace() + ezz;
    let mean = i1 / 3.0;
    let (dxx, dyy, dzz) = (strain.xx - mean, strain.yy - mean, ezz - mean);
    let j2 = 0.5 * (dxx * dxx + dyy * dyy + dzz * dzz) + strain.xy * strain.xy;
    let a = (k - 1.0) / (1.0 - 2.0 * nu);
    let eq = a * i1 / (2.0 * k)
        + (a * a * i1 * i1 + 12.0 * k * j2 / ((1.0 + nu) * (1.0 + nu))).sqrt() / (2.0 * k);
    eq.max(0.0)
}

impl ConstitutiveModel {
    pub fn equivalent_strain(&self, strain: &Sym2, mat: &Material) -> f64 {
        match self.equivalent_strain {
            EquivalentStrain::Principal => equivalent_strain(strain),
            EquivalentStrain::ModifiedVonMises => modified_von_mises(strain, mat, self.stress_state),
        }
    }

    /// Undamaged elastic stress for a strain (or stress rate for a strain rate).
    pub fn elastic(&self, strain: &Sym2, mat: &Material) -> Sym2 {
        let (e, nu) = (mat.young, mat.nu);
        match self.stress_state {
            StressState::PlaneStress => {
                let c = e / (1.0 - nu * nu);
                Sym2::new(
                    c * (strain.xx + nu * strain.yy),
                    c * (strain.yy + nu * strain.xx),
                    c * (1.0 - nu) * strain.xy,
                )
            }
            StressState::PlaneStrain => {
                let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
                let mu = e / (2.0 * (1.0 + nu));
                let tr = strain.trace();
                Sym2::new(
                    lambda * tr + 2.0 * mu * strain.xx,
                    lambda * tr + 2.0 * mu * strain.yy,
                    2.0 * mu * strain.xy,
                )
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DamageState {
    pub kappa: f64,
    pub d: f64,
}

/// Per-particle constitutive history.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MaterialPoint {
    /// Undamaged (elastic predictor) Cauchy stress.
    pub stress: Sym2,
    /// Accumulated co-rotated strain.
    pub strain: Sym2,
    pub damage: DamageState,
}

impl MaterialPoint {
    pub fn effective_stress(&self) -> Sym2 {
        self.stress.scale(1.0 - self.damage.d)
    }

    /// Recoverable strain energy density `½ (1 − D) σ : ε`.
    pub fn strain_energy_density(&self) -> f64 {
        0.5 * (1.0 - self.damage.d) * self.stress.ddot(&self.strain)
    }
}

/// Advances one material point by `dt` under strain rate `rate` and spin
/// `spin` (`W_xy`), returning the effective stress `(1 − D) σ`.
///
/// With `freeze_damage` the history variable is left untouched.
#[allow(clippy::too_many_arguments)]
pub fn stress_update(
    rate: &Sym2,
    spin: f64,
    dt: f64,
    point: &mut MaterialPoint,
    mat: &Material,
    model: &ConstitutiveModel,
    freeze_damage: bool,
    particle: usize,
) -> Result<Sym2> {
    if !rate.is_finite() || !spin.is_finite() || !dt.is_finite() {
        return Err(Error::NumericalBlowup {
            step: 0,
            particle,
            what: "non-finite strain rate".into(),
        });
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let sigma_rate = model.elastic(rate, mat).add(&point.stress.jaumann(spin));
    let strain_rate = rate.add(&point.strain.jaumann(spin));
    point.stress = point.stress.add(&sigma_rate.scale(dt));
    point.strain = point.strain.add(&strain_rate.scale(dt));
    if !point.stress.is_finite() {
        return Err(Error::NumericalBlowup {
            step: 0,
            particle,
            what: "non-finite stress".into(),
        });
    }
    if !freeze_damage {
        let eq = model.equivalent_strain(&point.strain, mat);
        if eq > point.damage.kappa {
            point.damage.kappa = eq;
            point.damage.d = damage(point.damage.kappa, mat);
        }
    }
    Ok(point.effective_stress())
}
