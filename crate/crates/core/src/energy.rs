//! The critical action `J(u) = 1/2 |curl u|^2 - 1/6 |u|_6^6` and its shifted
//! variant `J_lambda(u) = J(u) + lambda/2 |u|_2^2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::grid::Staggering;
use crate::ops::curl_edges;
use crate::quadrature::power_integral;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// `|curl u|_2^2`
    pub curl_energy: f64,
    pub l2_sq: f64,
    /// `|u|_6^6`
    pub l6_6: f64,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "J_lambda")]
    pub j_lambda: Option<f64>,
}

impl EnergyReport {
    pub fn from_parts(curl_energy: f64, l2_sq: f64, l6_6: f64, lambda: Option<f64>) -> Self {
        let j = 0.5 * curl_energy - l6_6 / 6.0;
        Self {
            curl_energy,
            l2_sq,
            l6_6,
            j,
            j_lambda: lambda.map(|l| j + 0.5 * l * l2_sq),
        }
    }
}

/// All energy terms of an edge field in one pass over its data.
pub fn energy(u: &VectorField, lambda: Option<f64>) -> Result<EnergyReport> {
    if u.staggering() != Staggering::Edge {
        return Err(Error::InvalidField("energies are defined for edge fields".into()));
    }
    u.validate()?;
    Ok(energy_unchecked(u, lambda))
}

pub(crate) fn energy_unchecked(u: &VectorField, lambda: Option<f64>) -> EnergyReport {
    let c = curl_edges(u);
    EnergyReport::from_parts(c.norm_l2_sq(), u.norm_l2_sq(), power_integral(u, 6.0), lambda)
}

/// `|curl u|_2^2`.
pub fn curl_energy(u: &VectorField) -> f64 {
    curl_edges(u).norm_l2_sq()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn zero_field_has_zero_energy() {
        let g = GridSpec::cube(1.0, 4).unwrap();
        let e = energy(&VectorField::zeros(&g, Staggering::Edge), Some(-1.0)).unwrap();
        assert_eq!((e.curl_energy, e.l2_sq, e.l6_6, e.j, e.j_lambda), (0.0, 0.0, 0.0, 0.0, Some(0.0)));
    }

    #[test]
    fn action_on_balanced_field() {
        let e = EnergyReport::from_parts(9.0, 1.0, 9.0, None);
        assert!((e.j - 3.0).abs() < 1e-15);
    }

    #[test]
    fn shifted_action_adds_mass_term() {
        let g = GridSpec::cube(2.0, 6).unwrap();
        let u = VectorField::random(&g, 9);
        let e = energy(&u, Some(-1.0)).unwrap();
        assert_eq!(e.j_lambda.unwrap(), e.j - 0.5 * e.l2_sq);
    }

    #[test]
    fn action_along_a_ray() {
        let g = GridSpec::cube(1.0, 5).unwrap();
        let u = VectorField::random(&g, 2);
        let e = energy(&u, None).unwrap();
        for t in [0.3, 1.0, 1.7] {
            let et = energy(&u.scaled(t), None).unwrap();
            let expected = 0.5 * t * t * e.curl_energy - t.powi(6) / 6.0 * e.l6_6;
            assert!((et.j - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn face_fields_are_rejected() {
        let g = GridSpec::cube(1.0, 4).unwrap();
        assert!(energy(&VectorField::zeros(&g, Staggering::Face), None).is_err());
    }
}
