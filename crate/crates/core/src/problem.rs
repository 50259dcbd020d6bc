use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The three combinatorial problems handled by the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    MaxCut,
    StableSet,
    Coloring,
}

impl Problem {
    pub const ALL: [Problem; 3] = [Problem::MaxCut, Problem::StableSet, Problem::Coloring];

    /// Index of the vertex block inside the SDP matrix: the stable set and
    /// coloring relaxations border `X` with one extra row and column.
    pub fn vertex_offset(self) -> usize {
        match self {
            Problem::MaxCut => 0,
            Problem::StableSet | Problem::Coloring => 1,
        }
    }

    /// Converts an internal (maximization) value to the user-facing bound.
    /// Coloring is solved as `max -t`, so its bound is the negated value.
    pub fn user_bound(self, value: f64) -> f64 {
        match self {
            Problem::Coloring => -value,
            _ => value,
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Problem::MaxCut => "maxcut",
            Problem::StableSet => "stableset",
            Problem::Coloring => "coloring",
        })
    }
}

impl FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "maxcut" | "max-cut" | "mc" => Ok(Problem::MaxCut),
            "stableset" | "stable-set" | "ss" => Ok(Problem::StableSet),
            "coloring" | "colouring" | "col" => Ok(Problem::Coloring),
            other => Err(Error::Config(format!("unknown problem `{other}`"))),
        }
    }
}
