//! Area-weighted part IoU, shape IoU and accuracy.
//!
//! Elements whose ground truth is unlabeled are dropped before any sum. A
//! missing prediction counts as wrong for every label.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Building, PartLabel};
use crate::NUM_LABELS;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    c: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.c += (self.sum - t) + v;
        } else {
            self.c += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// Evaluated elements of one shape (triangles, subgroups or points).
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeEval {
    pub id: String,
    pub predicted: Vec<Option<PartLabel>>,
    pub truth: Vec<Option<PartLabel>>,
    pub areas: Vec<f64>,
}

impl ShapeEval {
    pub fn new(
        id: impl Into<String>,
        predicted: Vec<Option<PartLabel>>,
        truth: Vec<Option<PartLabel>>,
        areas: Vec<f64>,
    ) -> Result<Self> {
        let id = id.into();
        if predicted.len() != truth.len() || truth.len() != areas.len() {
            return Err(Error::Metric(format!(
                "shape {id}: {} predictions, {} labels, {} areas",
                predicted.len(),
                truth.len(),
                areas.len()
            )));
        }
        if let Some(a) = areas.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(Error::Metric(format!("shape {id}: invalid area {a}")));
        }
        Ok(ShapeEval {
            id,
            predicted,
            truth,
            areas,
        })
    }

    /// Unit weights, as used by the point track.
    pub fn points(id: impl Into<String>, predicted: Vec<Option<PartLabel>>, truth: Vec<Option<PartLabel>>) -> Result<Self> {
        let n = truth.len();
        Self::new(id, predicted, truth, vec![1.0; n])
    }

    /// Mesh track: one element per triangle, weighted by face area.
    pub fn mesh(id: impl Into<String>, building: &Building, triangle_predictions: Vec<Option<PartLabel>>) -> Result<Self> {
        let areas = (0..building.triangles.len()).map(|t| building.triangle_area(t)).collect();
        Self::new(id, triangle_predictions, building.triangle_labels(), areas)
    }

    /// Mesh track from per-subgroup predictions.
    pub fn mesh_from_subgroups(id: impl Into<String>, building: &Building, subgroup_predictions: &[Option<PartLabel>]) -> Result<Self> {
        if subgroup_predictions.len() != building.subgroups.len() {
            return Err(Error::Metric(format!(
                "{} subgroup predictions for {} subgroups",
                subgroup_predictions.len(),
                building.subgroups.len()
            )));
        }
        let owners = building.triangle_owners();
        let pred = owners.iter().map(|&g| subgroup_predictions[g]).collect();
        Self::mesh(id, building, pred)
    }

    fn labeled(&self) -> impl Iterator<Item = (Option<PartLabel>, PartLabel, f64)> + '_ {
        self.truth
            .iter()
            .zip(&self.predicted)
            .zip(&self.areas)
            .filter_map(|((t, p), a)| t.map(|t| (*p, t, *a)))
    }

    fn num_labeled(&self) -> usize {
        self.truth.iter().filter(|t| t.is_some()).count()
    }
}

/// Intersection and union areas per label.
#[derive(Debug, Clone, Default)]
struct Overlap {
    inter: Vec<CompensatedSum>,
    union: Vec<CompensatedSum>,
}

impl Overlap {
    fn new() -> Self {
        Overlap {
            inter: vec![CompensatedSum::default(); NUM_LABELS],
            union: vec![CompensatedSum::default(); NUM_LABELS],
        }
    }

    fn add(&mut self, pred: Option<PartLabel>, truth: PartLabel, area: f64) {
        let t = truth.index();
        self.union[t].add(area);
        match pred {
            Some(p) if p == truth => self.inter[t].add(area),
            Some(p) => self.union[p.index()].add(area),
            None => {}
        }
    }

    /// IoU per label; `None` where the union is empty.
    fn ious(&self) -> Vec<Option<f64>> {
        (0..NUM_LABELS)
            .map(|l| {
                let u = self.union[l].value();
                (u > 0.0).then(|| (self.inter[l].value() / u).clamp(0.0, 1.0))
            })
            .collect()
    }
}

fn mean_present(ious: &[Option<f64>]) -> Option<f64> {
    let mut s = CompensatedSum::default();
    let mut n = 0;
    for v in ious.iter().flatten() {
        s.add(*v);
        n += 1;
    }
    (n > 0).then(|| s.value() / n as f64)
}

fn ensure_labeled(shapes: &[ShapeEval]) -> Result<()> {
    if shapes.iter().all(|s| s.num_labeled() == 0) {
        return Err(Error::Metric("no labeled ground truth to evaluate".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartIou {
    /// IoU per label index; `None` for labels absent from truth and predictions.
    pub per_label: Vec<Option<f64>>,
    /// Mean over labels with a non-empty union.
    pub mean: f64,
    /// Mean over all 31 labels, absent ones counting as 0.
    pub mean_all_labels: f64,
}

pub fn part_iou(shapes: &[ShapeEval]) -> Result<PartIou> {
    ensure_labeled(shapes)?;
    let mut o = Overlap::new();
    for s in shapes {
        for (p, t, a) in s.labeled() {
            o.add(p, t, a);
        }
    }
    let per_label = o.ious();
    let mean = mean_present(&per_label).unwrap_or(0.0);
    let mut all = CompensatedSum::default();
    per_label.iter().flatten().for_each(|v| all.add(*v));
    Ok(PartIou {
        per_label,
        mean,
        mean_all_labels: all.value() / NUM_LABELS as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeIou {
    pub per_shape: Vec<(String, f64)>,
    pub mean: f64,
}

/// Shapes without labeled elements are skipped.
pub fn shape_iou(shapes: &[ShapeEval]) -> Result<ShapeIou> {
    ensure_labeled(shapes)?;
    let mut per_shape = Vec::new();
    for s in shapes {
        if s.num_labeled() == 0 {
            log::warn!("shape {} has no labeled elements; skipped in shape IoU", s.id);
            continue;
        }
        let mut o = Overlap::new();
        for (p, t, a) in s.labeled() {
            o.add(p, t, a);
        }
        // A label with zero-area support still belongs to L_s.
        let mut present = [false; NUM_LABELS];
        for (p, t, _) in s.labeled() {
            present[t.index()] = true;
            if let Some(p) = p {
                present[p.index()] = true;
            }
        }
        let ious = o.ious();
        let mut sum = CompensatedSum::default();
        let mut n = 0;
        for l in 0..NUM_LABELS {
            if present[l] {
                sum.add(ious[l].unwrap_or(0.0));
                n += 1;
            }
        }
        per_shape.push((s.id.clone(), sum.value() / n as f64));
    }
    let mut total = CompensatedSum::default();
    per_shape.iter().for_each(|(_, v)| total.add(*v));
    let mean = total.value() / per_shape.len() as f64;
    Ok(ShapeIou { per_shape, mean })
}

/// Area-weighted fraction of correctly labeled elements.
pub fn accuracy(shapes: &[ShapeEval]) -> Result<f64> {
    ensure_labeled(shapes)?;
    let mut hit = CompensatedSum::default();
    let mut total = CompensatedSum::default();
    for s in shapes {
        for (p, t, a) in s.labeled() {
            total.add(a);
            if p == Some(t) {
                hit.add(a);
            }
        }
    }
    let total = total.value();
    if total <= 0.0 {
        return Err(Error::Metric("evaluated area is zero".into()));
    }
    Ok((hit.value() / total).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Track {
    Mesh,
    Point,
}

impl std::str::FromStr for Track {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mesh" => Ok(Track::Mesh),
            "point" => Ok(Track::Point),
            _ => Err(Error::Config(format!("unknown track `{s}` (expected mesh or point)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub track: Track,
    pub part: PartIou,
    pub shape: ShapeIou,
    pub accuracy: f64,
    pub elements: usize,
    pub evaluated_area: f64,
    /// Labels left out of the mean because nothing was predicted or annotated with them.
    pub excluded_labels: Vec<String>,
}

pub fn evaluate(track: Track, shapes: &[ShapeEval]) -> Result<MetricReport> {
    let part = part_iou(shapes)?;
    let shape = shape_iou(shapes)?;
    let accuracy = accuracy(shapes)?;
    let mut area = CompensatedSum::default();
    let mut elements = 0;
    for s in shapes {
        for (_, _, a) in s.labeled() {
            area.add(a);
            elements += 1;
        }
    }
    let excluded_labels = part
        .per_label
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_none())
        .map(|(l, _)| PartLabel::ALL[l].name().to_string())
        .collect();
    Ok(MetricReport {
        track,
        part,
        shape,
        accuracy,
        elements,
        evaluated_area: area.value(),
        excluded_labels,
    })
}

/// Point track: every element has unit weight.
pub fn point_track_metrics(shapes: &[ShapeEval]) -> Result<MetricReport> {
    let unit: Vec<ShapeEval> = shapes
        .iter()
        .map(|s| ShapeEval {
            areas: vec![1.0; s.areas.len()],
            ..s.clone()
        })
        .collect();
    evaluate(Track::Point, &unit)
}

impl MetricReport {
    /// Per-label table followed by the summary values.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let track = match self.track {
            Track::Mesh => "mesh",
            Track::Point => "point",
        };
        let _ = writeln!(out, "track: {track}");
        let _ = writeln!(out, "{:<16} {:>8}", "label", "IoU");
        for (l, v) in self.part.per_label.iter().enumerate() {
            let cell = v.map_or_else(|| "-".to_string(), |v| format!("{:.2}", 100.0 * v));
            let _ = writeln!(out, "{:<16} {:>8}", PartLabel::ALL[l].name(), cell);
        }
        let _ = writeln!(out, "part IoU            {:.2}", 100.0 * self.part.mean);
        let _ = writeln!(out, "part IoU (all 31)   {:.2}", 100.0 * self.part.mean_all_labels);
        let _ = writeln!(out, "shape IoU           {:.2}", 100.0 * self.shape.mean);
        let _ = writeln!(out, "accuracy            {:.2}", 100.0 * self.accuracy);
        let _ = writeln!(out, "elements            {}", self.elements);
        let _ = writeln!(out, "evaluated area      {}", self.evaluated_area);
        out
    }

    /// `key=value` lines.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "part_iou={}", self.part.mean);
        let _ = writeln!(out, "part_iou_all_labels={}", self.part.mean_all_labels);
        let _ = writeln!(out, "shape_iou={}", self.shape.mean);
        let _ = writeln!(out, "accuracy={}", self.accuracy);
        let _ = writeln!(out, "elements={}", self.elements);
        let _ = writeln!(out, "evaluated_area={}", self.evaluated_area);
        let _ = writeln!(out, "shapes={}", self.shape.per_shape.len());
        let _ = writeln!(out, "excluded_labels={}", self.excluded_labels.join(","));
        for (l, v) in self.part.per_label.iter().enumerate() {
            if let Some(v) = v {
                let _ = writeln!(out, "iou.{}={}", PartLabel::ALL[l].name(), v);
            }
        }
        for (id, v) in &self.shape.per_shape {
            let _ = writeln!(out, "shape_iou.{id}={v}");
        }
        out
    }
}
