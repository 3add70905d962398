use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Index written in binary files for subgroups or elements without ground truth.
pub const UNLABELED_INDEX: u8 = 255;

/// Name used for the unlabeled sentinel in text files.
pub const UNLABELED_NAME: &str = "unlabeled";

macro_rules! part_labels {
    ($($variant:ident => $name:literal),+ $(,)?) => {
        /// Exterior part labels. Indices follow the dataset's label table and are stable.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        #[repr(u8)]
        pub enum PartLabel {
            $($variant),+
        }

        impl PartLabel {
            pub const ALL: [PartLabel; crate::NUM_LABELS] = [$(PartLabel::$variant),+];

            pub fn name(self) -> &'static str {
                match self {
                    $(PartLabel::$variant => $name),+
                }
            }
        }
    };
}

part_labels! {
    Window => "window",
    Plant => "plant",
    Wall => "wall",
    Roof => "roof",
    Banister => "banister",
    Vehicle => "vehicle",
    Door => "door",
    Fence => "fence",
    Furniture => "furniture",
    Column => "column",
    Beam => "beam",
    Tower => "tower",
    Stairs => "stairs",
    Shutters => "shutters",
    Ground => "ground",
    Garage => "garage",
    Parapet => "parapet",
    Balcony => "balcony",
    Floor => "floor",
    Buttress => "buttress",
    Dome => "dome",
    Path => "path",
    Ceiling => "ceiling",
    Chimney => "chimney",
    Gate => "gate",
    Lighting => "lighting",
    Dormer => "dormer",
    Pool => "pool",
    Road => "road",
    Arch => "arch",
    Awning => "awning",
}

impl PartLabel {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<PartLabel> {
        PartLabel::ALL.get(index).copied()
    }

    /// Decodes a binary label byte; [`UNLABELED_INDEX`] maps to `None`.
    pub fn from_byte(byte: u8) -> Result<Option<PartLabel>> {
        if byte == UNLABELED_INDEX {
            return Ok(None);
        }
        PartLabel::from_index(byte as usize)
            .map(Some)
            .ok_or_else(|| Error::Format(format!("label index {byte} out of range")))
    }

    pub fn to_byte(label: Option<PartLabel>) -> u8 {
        label.map_or(UNLABELED_INDEX, |l| l as u8)
    }

    /// Parses a label name; `"unlabeled"` yields `None`.
    pub fn parse_optional(s: &str) -> Result<Option<PartLabel>> {
        if s.eq_ignore_ascii_case(UNLABELED_NAME) {
            Ok(None)
        } else {
            s.parse().map(Some)
        }
    }
}

impl fmt::Display for PartLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PartLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        PartLabel::ALL
            .iter()
            .copied()
            .find(|l| l.name() == lower)
            .ok_or_else(|| Error::Validation(format!("unknown part label `{s}`")))
    }
}

impl Serialize for PartLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for PartLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
