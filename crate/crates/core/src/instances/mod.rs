//! MILP data model, the four benchmark generators and the instance file format.

mod cauction;
mod cfl;
pub mod hexfloat;
mod indset;
mod io;
mod model;
mod setcover;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cauction::{generate_cauction, generate_cauction_with, CauctionConfig};
pub use cfl::{generate_cfl, generate_cfl_with, CflConfig, CflLayout};
pub use indset::{barabasi_albert, clique_edge_cover, generate_indset, indset_from_graph, Graph};
pub use io::{from_text, load_instance, save_instance, to_text, FORMAT_VERSION};
pub use model::{InstanceBuilder, MilpInstance, RngSeed, SparseRows};
pub use setcover::generate_set_cover;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("infeasible construction: {0}")]
    InfeasibleConstruction(String),
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported instance format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Default set-cover density and cost range.
pub const SET_COVER_DENSITY: f64 = 0.05;
pub const SET_COVER_MAX_COST: u32 = 100;
/// Default total-capacity / total-demand ratio for facility location.
pub const CFL_RATIO: f64 = 5.0;
/// Default preferential-attachment affinity for independent set graphs.
pub const INDSET_AFFINITY: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    SetCover,
    Cauction,
    Cfl,
    Indset,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::SetCover,
        Family::Cauction,
        Family::Cfl,
        Family::Indset,
    ];
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::SetCover => "setcover",
            Family::Cauction => "cauction",
            Family::Cfl => "cfl",
            Family::Indset => "indset",
        })
    }
}

impl FromStr for Family {
    type Err = InstanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "setcover" => Ok(Family::SetCover),
            "cauction" => Ok(Family::Cauction),
            "cfl" => Ok(Family::Cfl),
            "indset" => Ok(Family::Indset),
            other => Err(InstanceError::InvalidParameter(format!(
                "unknown family '{other}'"
            ))),
        }
    }
}

/// Fully specified generator parameters for one family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum GeneratorParams {
    #[serde(rename = "setcover")]
    SetCover {
        rows: usize,
        cols: usize,
        density: f64,
        max_cost: u32,
    },
    Cauction {
        items: usize,
        bids: usize,
    },
    Cfl {
        customers: usize,
        facilities: usize,
        ratio: f64,
    },
    Indset {
        nodes: usize,
        affinity: usize,
    },
}

impl GeneratorParams {
    pub fn family(&self) -> Family {
        match self {
            GeneratorParams::SetCover { .. } => Family::SetCover,
            GeneratorParams::Cauction { .. } => Family::Cauction,
            GeneratorParams::Cfl { .. } => Family::Cfl,
            GeneratorParams::Indset { .. } => Family::Indset,
        }
    }

    pub fn generate(&self, seed: RngSeed) -> Result<MilpInstance, InstanceError> {
        match *self {
            GeneratorParams::SetCover {
                rows,
                cols,
                density,
                max_cost,
            } => generate_set_cover(rows, cols, density, max_cost, seed),
            GeneratorParams::Cauction { items, bids } => generate_cauction(items, bids, seed),
            GeneratorParams::Cfl {
                customers,
                facilities,
                ratio,
            } => generate_cfl(customers, facilities, ratio, seed),
            GeneratorParams::Indset { nodes, affinity } => generate_indset(nodes, affinity, seed),
        }
    }

    /// Builds parameters from a two-number size `a x b`: rows x cols, items x bids,
    /// customers x facilities, or nodes x affinity.
    pub fn from_dims(family: Family, a: usize, b: usize) -> Self {
        match family {
            Family::SetCover => GeneratorParams::SetCover {
                rows: a,
                cols: b,
                density: SET_COVER_DENSITY,
                max_cost: SET_COVER_MAX_COST,
            },
            Family::Cauction => GeneratorParams::Cauction { items: a, bids: b },
            Family::Cfl => GeneratorParams::Cfl {
                customers: a,
                facilities: b,
                ratio: CFL_RATIO,
            },
            Family::Indset => GeneratorParams::Indset {
                nodes: a,
                affinity: b,
            },
        }
    }

    /// Named size presets. `easy`, `medium` and `hard` are the full benchmark sizes;
    /// `desk` and `desk2x` are the laptop-scale training and transfer sizes; `bench`
    /// is the laptop-scale evaluation size, large enough to need branching.
    /// Anything else is parsed as `AxB`.
    pub fn preset(family: Family, size: &str) -> Result<Self, InstanceError> {
        let dims = match (family, size) {
            (Family::SetCover, "easy") => (500, 1000),
            (Family::SetCover, "medium") => (1000, 1000),
            (Family::SetCover, "hard") => (2000, 1000),
            (Family::SetCover, "desk") => (100, 200),
            (Family::SetCover, "desk2x") => (200, 200),
            (Family::SetCover, "bench") => (250, 500),
            (Family::Cauction, "easy") => (100, 500),
            (Family::Cauction, "medium") => (200, 1000),
            (Family::Cauction, "hard") => (300, 1500),
            (Family::Cauction, "desk") => (40, 150),
            (Family::Cauction, "desk2x") => (80, 300),
            (Family::Cauction, "bench") => (80, 300),
            (Family::Cfl, "easy") => (100, 100),
            (Family::Cfl, "medium") => (200, 100),
            (Family::Cfl, "hard") => (400, 100),
            (Family::Cfl, "desk") => (20, 10),
            (Family::Cfl, "desk2x") => (40, 10),
            (Family::Cfl, "bench") => (15, 30),
            (Family::Indset, "easy") => (500, INDSET_AFFINITY),
            (Family::Indset, "medium") => (1000, INDSET_AFFINITY),
            (Family::Indset, "hard") => (1500, INDSET_AFFINITY),
            (Family::Indset, "desk") => (120, INDSET_AFFINITY),
            (Family::Indset, "desk2x") => (240, INDSET_AFFINITY),
            (Family::Indset, "bench") => (150, INDSET_AFFINITY),
            (_, custom) => {
                let parsed = custom
                    .split_once(['x', 'X'])
                    .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)));
                parsed.ok_or_else(|| {
                    InstanceError::InvalidParameter(format!(
                        "size '{custom}' is neither a preset nor AxB"
                    ))
                })?
            }
        };
        Ok(Self::from_dims(family, dims.0, dims.1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_benchmark_sizes() {
        let p = GeneratorParams::preset(Family::SetCover, "easy").unwrap();
        assert!(matches!(
            p,
            GeneratorParams::SetCover {
                rows: 500,
                cols: 1000,
                ..
            }
        ));
        let p = GeneratorParams::preset(Family::Indset, "hard").unwrap();
        assert_eq!(
            p,
            GeneratorParams::Indset {
                nodes: 1500,
                affinity: 4
            }
        );
        let p = GeneratorParams::preset(Family::Cauction, "7x9").unwrap();
        assert_eq!(p, GeneratorParams::Cauction { items: 7, bids: 9 });
        assert!(GeneratorParams::preset(Family::Cfl, "big").is_err());
    }

    #[test]
    fn seeds_derive_distinct_streams() {
        let s = RngSeed(42);
        assert_ne!(s.derive(0), s.derive(1));
        assert_eq!(s.derive(3), RngSeed(42).derive(3));
    }
}
