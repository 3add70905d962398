//! Per-building prediction files.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::argmax_labels;
use crate::mesh::{Building, PartLabel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupPrediction {
    pub name: String,
    pub label: String,
    pub probabilities: Vec<f64>,
}

/// Label and class distribution for every subgroup of one building.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub building: String,
    pub subgroups: Vec<SubgroupPrediction>,
}

impl Predictions {
    pub fn from_probabilities(id: &str, building: &Building, probs: &Array2<f64>) -> Result<Self> {
        if probs.nrows() != building.subgroups.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} probability rows for {} subgroups",
                probs.nrows(),
                building.subgroups.len()
            )));
        }
        let labels = argmax_labels(probs);
        Ok(Predictions {
            building: id.to_string(),
            subgroups: building
                .subgroups
                .iter()
                .zip(labels)
                .zip(probs.rows())
                .map(|((sg, l), row)| SubgroupPrediction {
                    name: sg.name.clone(),
                    label: l.name().to_string(),
                    probabilities: row.to_vec(),
                })
                .collect(),
        })
    }

    pub fn labels(&self) -> Result<Vec<PartLabel>> {
        self.subgroups
            .iter()
            .map(|s| {
                PartLabel::parse_optional(&s.label)?
                    .ok_or_else(|| Error::Validation(format!("subgroup `{}` has no predicted label", s.name)))
            })
            .collect()
    }

    /// Prediction for each subgroup of `building`, matched by name; subgroups
    /// without a prediction get `None`.
    pub fn aligned_to(&self, building: &Building) -> Result<Vec<Option<PartLabel>>> {
        let by_name: std::collections::HashMap<&str, &SubgroupPrediction> =
            self.subgroups.iter().map(|s| (s.name.as_str(), s)).collect();
        let mut out = Vec::with_capacity(building.subgroups.len());
        let mut missing = 0;
        for sg in &building.subgroups {
            match by_name.get(sg.name.as_str()) {
                Some(p) => out.push(PartLabel::parse_optional(&p.label)?),
                None => {
                    missing += 1;
                    out.push(None);
                }
            }
        }
        if missing > 0 {
            log::warn!("{}: {missing} subgroups have no prediction and count as wrong", self.building);
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}
