//! JSON model description files.
//!
//! ```json
//! {
//!   "nu": 1, "site_dim": 1, "space": "euclidean", "range": 1,
//!   "onsite": {"kind": "polynomial", "coeffs": [0, 0, 0.5, 0, 0.25]},
//!   "terms": [{"offsets": [[0], [1]], "coeffs": [0, 0, 0.25]}]
//! }
//! ```
//!
//! `space` is `"euclidean"` or `{"torus": {"period": [6.283185307179586]}}`.
//! On-site `kind` is `polynomial` (coefficients of `q^k`) or `cosine`
//! (amplitudes of `1 - cos(h q)`, `h = 1, 2, ...`). Term `kind` defaults to
//! `difference` (polynomial in `q_1 - q_0`); `cosine` takes amplitudes in
//! `coeffs`; `multinomial` takes `monomials: [{coef, powers}]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Body, InteractionTerm, LatticeModel, Monomial, PotentialSpec, Site, Space};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub nu: usize,
    pub site_dim: usize,
    pub space: Space,
    pub onsite: OnsiteFile,
    #[serde(default)]
    pub terms: Vec<TermFile>,
    pub range: i64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OnsiteFile {
    pub kind: String,
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermFile {
    pub offsets: Vec<Site>,
    #[serde(default = "default_kind")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coeffs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monomials: Option<Vec<Monomial>>,
}

fn default_kind() -> String {
    "difference".into()
}

impl ModelFile {
    pub fn into_model(self) -> Result<LatticeModel> {
        let onsite = match self.onsite.kind.as_str() {
            "polynomial" => PotentialSpec::Polynomial {
                coeffs: self.onsite.coeffs,
            },
            "cosine" => PotentialSpec::Cosine {
                amplitudes: self.onsite.coeffs,
            },
            other => return Err(Error::Format(format!("unknown on-site kind `{other}`"))),
        };
        let mut terms = Vec::with_capacity(self.terms.len());
        for t in self.terms {
            for o in &t.offsets {
                if o.len() != self.nu {
                    return Err(Error::Format(format!("offset {o:?} does not have {} entries", self.nu)));
                }
                if o.iter().any(|x| x.abs() > self.range) {
                    return Err(Error::OffsetOutOfRange {
                        offset: o.clone(),
                        range: self.range,
                    });
                }
            }
            let body = match t.kind.as_str() {
                "difference" => Body::Difference { coeffs: t.coeffs },
                "cosine" => Body::Cosine { amplitudes: t.coeffs },
                "multinomial" => Body::Multinomial {
                    monomials: t
                        .monomials
                        .ok_or_else(|| Error::Format("multinomial term without `monomials`".into()))?,
                },
                other => return Err(Error::Format(format!("unknown term kind `{other}`"))),
            };
            terms.push(InteractionTerm::new(t.offsets, body));
        }
        LatticeModel::new(self.nu, self.site_dim, self.space, onsite, terms, self.range)
    }

    pub fn from_model(model: &LatticeModel) -> Self {
        let onsite = match model.onsite() {
            PotentialSpec::Polynomial { coeffs } => OnsiteFile {
                kind: "polynomial".into(),
                coeffs: coeffs.clone(),
            },
            PotentialSpec::Cosine { amplitudes } => OnsiteFile {
                kind: "cosine".into(),
                coeffs: amplitudes.clone(),
            },
        };
        let terms = model
            .terms()
            .iter()
            .map(|t| match &t.body {
                Body::Difference { coeffs } => TermFile {
                    offsets: t.offsets.clone(),
                    kind: "difference".into(),
                    coeffs: coeffs.clone(),
                    monomials: None,
                },
                Body::Cosine { amplitudes } => TermFile {
                    offsets: t.offsets.clone(),
                    kind: "cosine".into(),
                    coeffs: amplitudes.clone(),
                    monomials: None,
                },
                Body::Multinomial { monomials } => TermFile {
                    offsets: t.offsets.clone(),
                    kind: "multinomial".into(),
                    coeffs: vec![],
                    monomials: Some(monomials.clone()),
                },
            })
            .collect();
        ModelFile {
            nu: model.nu(),
            site_dim: model.site_dim(),
            space: model.space().clone(),
            onsite,
            terms,
            range: model.range(),
        }
    }
}

pub fn parse_model(json: &str) -> Result<LatticeModel> {
    let file: ModelFile = serde_json::from_str(json)?;
    file.into_model()
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LatticeModel> {
    let text = std::fs::read_to_string(path)?;
    parse_model(&text)
}

pub fn model_to_json(model: &LatticeModel) -> String {
    serde_json::to_string_pretty(&ModelFile::from_model(model)).expect("model file serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reference;

    #[test]
    fn reference_models_roundtrip() {
        for m in reference::all() {
            let back = parse_model(&model_to_json(&m)).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn loader_rejects_out_of_range_offsets() {
        let json = r#"{"nu":1,"site_dim":1,"space":"euclidean","range":1,
            "onsite":{"kind":"polynomial","coeffs":[0,0,0.5]},
            "terms":[{"offsets":[[0],[2]],"coeffs":[0,0,0.25]}]}"#;
        assert!(matches!(parse_model(json), Err(Error::OffsetOutOfRange { .. })));
    }

    #[test]
    fn parses_torus_and_default_term_kind() {
        let json = r#"{"nu":1,"site_dim":1,"space":{"torus":{"period":[6.283185307179586]}},"range":1,
            "onsite":{"kind":"cosine","coeffs":[1.0]},
            "terms":[{"offsets":[[0],[1]],"kind":"cosine","coeffs":[0.5]}]}"#;
        assert_eq!(parse_model(json).unwrap(), reference::rotator_chain());
        let json = r#"{"nu":1,"site_dim":1,"space":"euclidean","range":1,
            "onsite":{"kind":"polynomial","coeffs":[0,0,0.5]},
            "terms":[{"offsets":[[1],[0]],"coeffs":[0,0,0.25]}]}"#;
        assert_eq!(parse_model(json).unwrap(), reference::harmonic_chain());
    }

    #[test]
    fn shipped_model_files_match_reference() {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("models");
        for name in reference::NAMES {
            let m = load_model(dir.join(format!("{name}.json"))).unwrap();
            assert_eq!(m, reference::by_name(name).unwrap(), "{name}");
        }
    }
}
