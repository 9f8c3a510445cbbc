//! Anatomical labels attached to plans and recordings.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LabelError {
    #[error("unknown vertebra \"{0}\", expected one of C2..C7")]
    Vertebra(String),
    #[error("unknown side \"{0}\", expected \"left\" or \"right\"")]
    Side(String),
}

/// Cervical vertebrae reachable by the drilling protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Vertebra {
    C2,
    C3,
    C4,
    C5,
    C6,
    C7,
}

impl Vertebra {
    pub const ALL: [Vertebra; 6] = [
        Vertebra::C2,
        Vertebra::C3,
        Vertebra::C4,
        Vertebra::C5,
        Vertebra::C6,
        Vertebra::C7,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Vertebra::C2 => "C2",
            Vertebra::C3 => "C3",
            Vertebra::C4 => "C4",
            Vertebra::C5 => "C5",
            Vertebra::C6 => "C6",
            Vertebra::C7 => "C7",
        }
    }
}

impl fmt::Display for Vertebra {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Vertebra {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Vertebra::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| LabelError::Vertebra(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn as_str(&self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Side {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            _ => Err(LabelError::Side(s.to_string())),
        }
    }
}

macro_rules! string_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let raw = String::deserialize(d)?;
                raw.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(Vertebra);
string_serde!(Side);
