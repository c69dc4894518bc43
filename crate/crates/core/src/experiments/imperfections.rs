//! Classical mixtures modelling the known experimental imperfections.

use crate::error::{Error, Result};
use crate::model::SystemParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImperfectionModel {
    /// Fraction of recorded events produced by atoms that entered the cavity
    /// already in g.
    pub p_enter_g: f64,
    /// Additive detection background, clamped so probabilities stay ≤ 1.
    pub background_floor: f64,
    /// Multiplies the Ramsey fringe contrast.
    pub ramsey_contrast: f64,
    /// Poisson mean of the number of atoms per sequence (≥ 3 dropped).
    pub mean_atoms: f64,
    /// Thermal occupation of the baths during the run; realized by
    /// rerunning the dynamics with this n_th.
    pub thermal_growth: f64,
}

impl Default for ImperfectionModel {
    fn default() -> Self {
        Self::identity()
    }
}

impl ImperfectionModel {
    pub fn identity() -> Self {
        ImperfectionModel {
            p_enter_g: 0.0,
            background_floor: 0.0,
            ramsey_contrast: 1.0,
            mean_atoms: 0.0,
            thermal_growth: 0.0,
        }
    }

    /// The magnitudes quoted for the experiment: 20% g-entry events, an 8%
    /// detection floor and a one-photon residual thermal field. Contrast
    /// and atom number are not quoted and stay ideal.
    pub fn nominal() -> Self {
        ImperfectionModel {
            p_enter_g: 0.20,
            background_floor: 0.08,
            thermal_growth: 1.0,
            ..Self::identity()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &'static str, x: f64| {
            if (0.0..=1.0).contains(&x) {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("{x} not in [0, 1]")))
            }
        };
        unit("p_enter_g", self.p_enter_g)?;
        unit("background_floor", self.background_floor)?;
        unit("ramsey_contrast", self.ramsey_contrast)?;
        if self.ramsey_contrast == 0.0 {
            return Err(Error::invalid("ramsey_contrast", "must be > 0"));
        }
        if !(self.mean_atoms >= 0.0 && self.mean_atoms.is_finite()) {
            return Err(Error::invalid("mean_atoms", "must be finite and ≥ 0"));
        }
        if !(self.thermal_growth >= 0.0 && self.thermal_growth.is_finite()) {
            return Err(Error::invalid("thermal_growth", "must be finite and ≥ 0"));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    /// Relative weights of one- and two-atom sequences among sequences with
    /// at least one atom.
    pub fn atom_count_weights(&self) -> (f64, f64) {
        let mu = self.mean_atoms;
        if mu == 0.0 {
            return (1.0, 0.0);
        }
        let (p1, p2) = (mu, 0.5 * mu * mu);
        (p1 / (p1 + p2), p2 / (p1 + p2))
    }

    pub(crate) fn floor(&self, p: f64) -> f64 {
        (p + self.background_floor).clamp(0.0, 1.0)
    }

    pub(crate) fn grown(&self, params: &SystemParams) -> SystemParams {
        if self.thermal_growth > 0.0 {
            params.with_thermal(self.thermal_growth, self.thermal_growth)
        } else {
            *params
        }
    }
}

/// Results that can be recomputed as classical mixtures over imperfect
/// realizations of their protocol.
pub trait ApplyImperfections: Sized {
    fn apply_imperfections(&self, model: &ImperfectionModel) -> Result<Self>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(ImperfectionModel::identity().validate().is_ok());
        assert!(ImperfectionModel::nominal().validate().is_ok());
        let bad = ImperfectionModel {
            p_enter_g: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ImperfectionModel {
            ramsey_contrast: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn atom_weights() {
        assert_eq!(ImperfectionModel::identity().atom_count_weights(), (1.0, 0.0));
        let m = ImperfectionModel {
            mean_atoms: 0.2,
            ..Default::default()
        };
        let (w1, w2) = m.atom_count_weights();
        assert!((w1 + w2 - 1.0).abs() < 1e-15);
        assert!((w2 / w1 - 0.1).abs() < 1e-15);
    }

    #[test]
    fn floor_is_clamped() {
        let m = ImperfectionModel {
            background_floor: 0.08,
            ..Default::default()
        };
        assert_eq!(m.floor(0.0), 0.08);
        assert_eq!(m.floor(0.97), 1.0);
    }
}
