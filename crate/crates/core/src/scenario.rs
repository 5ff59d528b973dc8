//! Scenario files and the builtin scenarios.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::calculus::{ConvexFunction, InvarianceOptions, KahlerPotential};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::flow::DEFAULT_TRUNCATION;
use crate::model::{LocalModel, ModelPoint};

/// Per-check tolerances; every field has a default so scenario files only
/// list overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub invariance: f64,
    pub oracle: f64,
    pub moment_identity: f64,
    pub bracket: f64,
    pub series: f64,
    pub laws: f64,
    pub block_det: f64,
    pub j_square: f64,
    pub symmetry: f64,
    pub type_11: f64,
    pub transition: f64,
    pub linearity: f64,
    pub lagrangian: f64,
    pub kahler_gap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            invariance: 1e-10,
            oracle: 1e-6,
            moment_identity: 1e-8,
            bracket: 1e-8,
            series: 1e-9,
            laws: 1e-9,
            block_det: 1e-9,
            j_square: 1e-9,
            symmetry: 1e-10,
            type_11: 1e-8,
            transition: 1e-9,
            linearity: 1e-12,
            lagrangian: 1e-9,
            kahler_gap: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
}

fn default_truncation() -> usize {
    DEFAULT_TRUNCATION
}

fn default_group_samples() -> usize {
    16
}

/// A point as a list of `[re, im]` pairs, torus coordinates first.
pub type RawPoint = Vec<[f64; 2]>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub model: LocalModel,
    #[serde(with = "potential_string")]
    pub rho: ScalarField,
    #[serde(with = "convex_string")]
    pub phi: ScalarField,
    pub points: Vec<RawPoint>,
    pub t_grid: Vec<f64>,
    #[serde(default = "default_truncation")]
    pub truncation: usize,
    #[serde(default = "default_group_samples")]
    pub group_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "outputs_empty")]
    pub outputs: Outputs,
}

fn outputs_empty(o: &Outputs) -> bool {
    o.report.is_none() && o.csv.is_none()
}

macro_rules! field_string {
    ($name:ident, $ctor:ident) => {
        mod $name {
            use crate::field::ScalarField;
            use serde::{Deserialize, Deserializer, Serializer};

            pub fn serialize<S: Serializer>(f: &ScalarField, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(f)
            }

            pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ScalarField, D::Error> {
                let src = String::deserialize(d)?;
                ScalarField::$ctor(&src).map_err(serde::de::Error::custom)
            }
        }
    };
}

field_string!(potential_string, potential);
field_string!(convex_string, convex);

/// Default seed for the invariance group samples.
pub const DEFAULT_SEED: u64 = 0x5eed;

/// Everything a scenario needs at run time, validated.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub potential: KahlerPotential,
    pub phi: ConvexFunction,
    pub points: Vec<ModelPoint>,
    pub seed: u64,
}

impl Scenario {
    pub fn from_json(src: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(src).map_err(|e| Error::Parse {
            position: e.column(),
            message: e.to_string(),
        })?;
        s.validate_shape()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    fn validate_shape(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::DimensionMismatch("scenario has no points".into()));
        }
        if self.t_grid.is_empty() {
            return Err(Error::DimensionMismatch("scenario has an empty t grid".into()));
        }
        if let Some(t) = self.t_grid.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
            return Err(Error::DimensionMismatch(format!("t = {t} is not a finite nonnegative time")));
        }
        if self.t_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::DimensionMismatch("t grid must be strictly increasing".into()));
        }
        if self.truncation == 0 {
            return Err(Error::InvalidOrder(0));
        }
        Ok(())
    }

    pub fn model_points(&self) -> Result<Vec<ModelPoint>> {
        self.points
            .iter()
            .map(|raw| {
                let coords: Vec<Complex64> = raw.iter().map(|[re, im]| Complex64::new(*re, *im)).collect();
                ModelPoint::from_coords(&self.model, &coords)
            })
            .collect()
    }

    /// Builds the potential (running the invariance gate) and the convex
    /// function. `seed` overrides the scenario seed.
    pub fn prepare(&self, seed: Option<u64>) -> Result<Prepared> {
        self.validate_shape()?;
        let points = self.model_points()?;
        let seed = seed.or(self.seed).unwrap_or(DEFAULT_SEED);
        let opts = InvarianceOptions {
            group_samples: self.group_samples,
            tol: self.tolerances.invariance,
            seed,
        };
        let potential = KahlerPotential::new(&self.model, self.rho.clone(), &points, opts)?;
        let phi = ConvexFunction::new(&self.model, self.phi.clone())?;
        Ok(Prepared {
            potential,
            phi,
            points,
            seed,
        })
    }
}

/// Series truncation used by the builtins; large enough for `t * rate` in the
/// hundreds.
pub const BUILTIN_TRUNCATION: usize = 1000;

fn builtin(
    name: &str,
    model: LocalModel,
    rho: &str,
    phi: &str,
    points: Vec<RawPoint>,
    t_grid: Vec<f64>,
) -> Scenario {
    Scenario {
        name: name.to_string(),
        model,
        rho: ScalarField::potential(rho).expect("builtin potential parses"),
        phi: ScalarField::convex(phi).expect("builtin convex function parses"),
        points,
        t_grid,
        truncation: BUILTIN_TRUNCATION,
        group_samples: default_group_samples(),
        seed: None,
        tolerances: Tolerances::default(),
        outputs: Outputs::default(),
    }
}

pub fn list_builtins() -> Vec<&'static str> {
    vec!["cylinder", "weighted-c2", "mixed-tc-c"]
}

pub fn builtin_scenario(name: &str) -> Result<Scenario> {
    let e = std::f64::consts::E;
    let s = match name {
        "cylinder" => builtin(
            name,
            LocalModel::new(1, 0, 0, vec![]).expect("valid model"),
            "y1^2",
            "mu1^2/2",
            vec![
                vec![[e, 0.0]],
                vec![[1.5 * 0.4f64.cos(), 1.5 * 0.4f64.sin()]],
            ],
            vec![0.0, 1.0, 10.0, 100.0],
        ),
        "weighted-c2" => builtin(
            name,
            LocalModel::new(1, 1, 2, vec![vec![1, 2]]).expect("valid model"),
            "z1*zb1 + z2*zb2",
            "mu1^2/2",
            vec![
                vec![[0.5, 0.0], [0.5, 0.0]],
                vec![[0.6, 0.3], [0.2, -0.4]],
                vec![[1.0, 0.0], [0.0, 0.0]],
                vec![[0.0, 0.0], [0.0, 0.0]],
            ],
            vec![0.0, 1.0, 5.0, 10.0, 100.0],
        ),
        "mixed-tc-c" => builtin(
            name,
            LocalModel::new(2, 1, 1, vec![vec![3]]).expect("valid model"),
            "y1^2 + exp(y1)*z1*zb1",
            "mu1^2/2 + mu2^2/2 + mu1*mu2/4",
            vec![
                vec![[0.3f64.exp() * 0.5f64.cos(), 0.3f64.exp() * 0.5f64.sin()], [0.4, 0.2]],
                vec![[1.2, 0.0], [0.0, 0.5]],
                vec![[1.0, 0.0], [0.0, 0.0]],
            ],
            vec![0.0, 1.0, 5.0, 10.0, 100.0],
        ),
        other => return Err(Error::UnknownScenario(other.to_string())),
    };
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_listed_and_prepare() {
        let names = list_builtins();
        for want in ["cylinder", "weighted-c2", "mixed-tc-c"] {
            assert!(names.contains(&want));
        }
        for name in names {
            let s = builtin_scenario(name).unwrap();
            let prepared = s.prepare(None).unwrap();
            assert_eq!(prepared.points.len(), s.points.len());
            assert_eq!(prepared.seed, DEFAULT_SEED);
        }
        assert!(matches!(builtin_scenario("torus"), Err(Error::UnknownScenario(_))));
    }

    #[test]
    fn json_round_trip_is_stable() {
        for name in list_builtins() {
            let s = builtin_scenario(name).unwrap();
            let once = s.to_json();
            let parsed = Scenario::from_json(&once).unwrap();
            assert_eq!(parsed, s);
            assert_eq!(parsed.to_json(), once);
        }
    }

    #[test]
    fn minimal_file_uses_defaults() {
        let src = r#"{"model": {"n": 1, "k": 0, "r": 0, "B": []},
                      "rho": "y1 * y1", "phi": "mu1^2 / 2",
                      "points": [[[2.0, 0.0]]], "t_grid": [0, 1]}"#;
        let s = Scenario::from_json(src).unwrap();
        assert_eq!(s.truncation, DEFAULT_TRUNCATION);
        assert_eq!(s.tolerances, Tolerances::default());
        let again = Scenario::from_json(&s.to_json()).unwrap();
        assert_eq!(again.to_json(), s.to_json());
    }

    #[test]
    fn bad_files_are_rejected() {
        assert!(matches!(Scenario::from_json("{"), Err(Error::Parse { .. })));
        let unsorted = r#"{"model": {"n": 1, "k": 0, "r": 0, "B": []}, "rho": "y1^2",
                           "phi": "mu1^2", "points": [[[2.0, 0.0]]], "t_grid": [1, 0]}"#;
        assert!(Scenario::from_json(unsorted).is_err());
        let wrong_kind = r#"{"model": {"n": 1, "k": 0, "r": 0, "B": []}, "rho": "mu1",
                             "phi": "mu1^2", "points": [[[2.0, 0.0]]], "t_grid": [0]}"#;
        assert!(Scenario::from_json(wrong_kind).is_err());
    }

    #[test]
    fn non_invariant_potential_fails_to_prepare() {
        let src = r#"{"model": {"n": 1, "k": 1, "r": 2, "B": [[1, 2]]},
                      "rho": "(z1 + zb1)/2", "phi": "mu1^2/2",
                      "points": [[[1.0, 0.0], [0.0, 0.0]]], "t_grid": [0]}"#;
        let s = Scenario::from_json(src).unwrap();
        assert!(matches!(s.prepare(None), Err(Error::NonInvariantPotential { .. })));
    }
}
