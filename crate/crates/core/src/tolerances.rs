use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every numerical threshold used by the functionals, the certificate and
/// the solver. Reports embed the instance that produced them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub gap_tol: f64,
    pub quad_tol: f64,
    pub coin_tol: f64,
    pub root_tol: f64,
    pub fp_tol: f64,
    pub x_tol: f64,
    pub mass_tol: f64,
    pub prune_tol: f64,
    pub merge_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            gap_tol: 1e-8,
            quad_tol: 1e-11,
            coin_tol: 1e-7,
            root_tol: 1e-12,
            fp_tol: 1e-12,
            x_tol: 1e-12,
            mass_tol: 1e-10,
            prune_tol: 1e-9,
            merge_tol: 1e-7,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("gap_tol", self.gap_tol),
            ("quad_tol", self.quad_tol),
            ("coin_tol", self.coin_tol),
            ("root_tol", self.root_tol),
            ("fp_tol", self.fp_tol),
            ("x_tol", self.x_tol),
            ("mass_tol", self.mass_tol),
            ("prune_tol", self.prune_tol),
            ("merge_tol", self.merge_tol),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_partial_json_fills_in() {
        Tolerances::default().validate().unwrap();
        let t: Tolerances = serde_json::from_str(r#"{"gap_tol":1e-6}"#).unwrap();
        assert_eq!(t.gap_tol, 1e-6);
        assert_eq!(t.coin_tol, 1e-7);
        assert!(serde_json::from_str::<Tolerances>(r#"{"nope":1}"#).is_err());
        let bad = Tolerances {
            quad_tol: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
