use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{GridShape, Matrix};

/// Which adjacency a graph layer builds. One tag per ablation row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Fixed 4-neighbour grid adjacency with self loops.
    Classic,
    /// Channel attention only.
    Channel,
    /// Spatial attention only.
    Spatial,
    /// Channel and spatial attention.
    ChannelSpatial,
    /// Channel attention plus boundary-fused spatial weights.
    Boundary,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Classic,
        Variant::Channel,
        Variant::Spatial,
        Variant::ChannelSpatial,
        Variant::Boundary,
    ];

    pub fn uses_channel_attention(self) -> bool {
        matches!(
            self,
            Variant::Channel | Variant::ChannelSpatial | Variant::Boundary
        )
    }

    pub fn uses_spatial_attention(self) -> bool {
        matches!(self, Variant::Spatial | Variant::ChannelSpatial)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Classic => "classic",
            Variant::Channel => "channel",
            Variant::Spatial => "spatial",
            Variant::ChannelSpatial => "channel_spatial",
            Variant::Boundary => "boundary",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown variant `{s}`")))
    }
}

/// Region features `R_s`: one `C`-dimensional vertex per grid position.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexEmbeddings {
    map: Matrix,
    grid: GridShape,
}

impl VertexEmbeddings {
    pub fn new(map: Matrix, grid: GridShape) -> Result<Self> {
        if map.rows() != grid.len() {
            return Err(Error::shape(
                "VertexEmbeddings",
                map.shape(),
                (grid.len(), map.cols()),
            ));
        }
        if !map.is_finite() {
            return Err(Error::NonFinite {
                tensor: "vertex embeddings".into(),
            });
        }
        Ok(Self { map, grid })
    }

    pub fn map(&self) -> &Matrix {
        &self.map
    }

    pub fn into_map(self) -> Matrix {
        self.map
    }

    pub fn grid(&self) -> GridShape {
        self.grid
    }

    pub fn vertices(&self) -> usize {
        self.map.rows()
    }

    pub fn channels(&self) -> usize {
        self.map.cols()
    }
}

/// Predicted boundary probabilities `B_s`, an `N × 1` column in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryMap {
    map: Matrix,
}

impl BoundaryMap {
    pub fn new(map: Matrix) -> Result<Self> {
        if map.cols() != 1 {
            return Err(Error::shape("BoundaryMap", map.shape(), (map.rows(), 1)));
        }
        if let Some(v) = map.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain {
                op: "BoundaryMap",
                detail: format!("entry {v} outside [0, 1]"),
            });
        }
        Ok(Self { map })
    }

    pub fn map(&self) -> &Matrix {
        &self.map
    }

    pub fn vertices(&self) -> usize {
        self.map.rows()
    }
}
