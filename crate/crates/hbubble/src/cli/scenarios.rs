//! Shipped experiment scenarios for the multiplicity runs.

use nalgebra::Vector3;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{gaussian_bump, linear_combination, radial_well_default, CurvatureField};
use crate::melnikov::ScanBox;

/// The five shipped experiment families: one bubble from a single bump, three
/// bubbles from a convex positive well, two bubbles from a two-sign pair, and
/// the large-`H0` variants of the latter two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Thm1,
    Thm2,
    Thm3,
    Remark2,
    Remark3,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Thm1 => "thm1",
            Scenario::Thm2 => "thm2",
            Scenario::Thm3 => "thm3",
            Scenario::Remark2 => "remark2",
            Scenario::Remark3 => "remark3",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "thm1" => Ok(Scenario::Thm1),
            "thm2" => Ok(Scenario::Thm2),
            "thm3" => Ok(Scenario::Thm3),
            "remark2" => Ok(Scenario::Remark2),
            "remark3" => Ok(Scenario::Remark3),
            other => Err(Error::InvalidParameter(format!(
                "unknown scenario `{other}` (thm1|thm2|thm3|remark2|remark3)"
            ))),
        }
    }

    /// The shipped perturbation field.
    ///
    /// The three-bubble scenarios use the convex radial well plus a wide,
    /// low-amplitude off-axis bump. A purely radial field makes the reduced
    /// functional exactly rotation invariant, so its global minimum would be a
    /// degenerate sphere of critical points instead of the isolated
    /// max/min/saddle triple the experiment certifies; the breaker keeps the
    /// convexity and positivity hypotheses intact (checker-verified) while
    /// isolating the extrema.
    pub fn field(&self) -> CurvatureField {
        match self {
            Scenario::Thm1 => gaussian_bump(1.0, Vector3::zeros(), 1.0).expect("valid"),
            Scenario::Thm2 | Scenario::Remark2 => linear_combination(vec![
                (1.0, radial_well_default()),
                (
                    1.0,
                    gaussian_bump(1.2, Vector3::new(3.0, 1.0, 0.0), 4.0).expect("valid"),
                ),
            ])
            .expect("nonempty"),
            Scenario::Thm3 | Scenario::Remark3 => linear_combination(vec![
                (
                    1.0,
                    gaussian_bump(1.0, Vector3::new(3.0, 0.0, 0.0), 1.0).expect("valid"),
                ),
                (
                    -1.0,
                    gaussian_bump(1.0, Vector3::new(-3.0, 0.0, 0.0), 1.0).expect("valid"),
                ),
            ])
            .expect("nonempty"),
        }
    }

    /// Perturbation size used by the shipped configs. The three-bubble runs
    /// use a smaller `eps` so the critical points of the reduced functional
    /// track the landscape extrema through the sign flip of `eps`.
    pub fn default_eps(&self) -> f64 {
        match self {
            Scenario::Thm2 | Scenario::Remark2 => 1e-4,
            _ => 1e-2,
        }
    }

    pub fn default_box(&self) -> ScanBox {
        match self {
            Scenario::Thm1 => ScanBox::cube(3.0),
            Scenario::Thm2 | Scenario::Remark2 => ScanBox::cube(6.0),
            Scenario::Thm3 | Scenario::Remark3 => ScanBox::cube(6.0),
        }
    }

    /// Centers witnessing the two-sign hypothesis, where applicable.
    pub fn h5_points(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        match self {
            Scenario::Thm3 | Scenario::Remark3 => Some((
                Vector3::new(3.0, 0.0, 0.0),
                Vector3::new(-3.0, 0.0, 0.0),
            )),
            _ => None,
        }
    }

    /// Minimum number of bubbles the scenario certifies.
    pub fn expected_count(&self) -> usize {
        match self {
            Scenario::Thm1 => 1,
            Scenario::Thm2 | Scenario::Remark2 => 3,
            Scenario::Thm3 | Scenario::Remark3 => 2,
        }
    }

    /// Whether the scenario sweeps `h0` instead of using the configured value.
    pub fn sweeps_h0(&self) -> bool {
        matches!(self, Scenario::Remark2 | Scenario::Remark3)
    }
}
