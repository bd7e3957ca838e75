//! Prompt granularity: a prompt is quantitative when it carries at least one
//! number bound to a unit or a named parameter, qualitative otherwise.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Qualitative,
    Quantitative,
}

impl std::fmt::Display for Granularity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Granularity::Qualitative => "qualitative",
            Granularity::Quantitative => "quantitative",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantityKind {
    Angle,
    Speed,
    Duration,
    Coordinate,
    JointValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub kind: QuantityKind,
    pub value: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GranularityLabel {
    pub label: Granularity,
    pub quantities: Vec<Quantity>,
}

impl GranularityLabel {
    pub fn is_qualitative(&self) -> bool {
        self.label == Granularity::Qualitative
    }
}

pub(crate) const NUM: &str = r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:e[-+]?\d+)?";

fn scanner() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let pattern = format!(
            r"(?x)
            pos(?:i)?tion_[xyz]\s*=\s*(?P<coord>{NUM})
          | speed\s+of\s+(?P<speed_of>{NUM})(?:\s*m/s)?
          | (?P<turn>{NUM})\s*(?:degrees?|deg|°)\s*(?:per\s+second|/s)
          | (?P<deg>{NUM})\s*(?:degrees?\b|deg\b|°)
          | (?P<rad>{NUM})\s*(?:radians?\b|rad\b)
          | (?P<mps>{NUM})\s*m/s
          | (?P<secs>{NUM})\s*(?:seconds?\b|secs?\b|s\b)
          | (?:joints?|j[0-6])\s+to\s+(?P<joint>{NUM})
            "
        );
        Regex::new(&pattern).expect("granularity scanner compiles")
    })
}

/// Lower-cases, unescapes `\_` and collapses whitespace.
pub(crate) fn normalize(text: &str) -> String {
    text.replace("\\_", "_")
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn classify_granularity(prompt: &str) -> GranularityLabel {
    let text = normalize(prompt);
    let mut quantities = Vec::new();
    for caps in scanner().captures_iter(&text) {
        let groups = [
            ("coord", QuantityKind::Coordinate, "m"),
            ("speed_of", QuantityKind::Speed, "m/s"),
            ("turn", QuantityKind::Speed, "deg/s"),
            ("deg", QuantityKind::Angle, "deg"),
            ("rad", QuantityKind::Angle, "rad"),
            ("mps", QuantityKind::Speed, "m/s"),
            ("secs", QuantityKind::Duration, "s"),
            ("joint", QuantityKind::JointValue, "rad"),
        ];
        for (group, kind, unit) in groups {
            if let Some(m) = caps.name(group) {
                if let Ok(value) = m.as_str().parse::<f64>() {
                    quantities.push(Quantity {
                        kind,
                        value,
                        unit: unit.to_string(),
                    });
                }
                break;
            }
        }
    }
    let label = if quantities.is_empty() {
        Granularity::Qualitative
    } else {
        Granularity::Quantitative
    };
    GranularityLabel { label, quantities }
}
