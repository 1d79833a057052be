use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The computational unit a node implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellType {
    Simple,
    #[serde(rename = "delta")]
    DeltaRnn,
    Gru,
    Lstm,
    Mgu,
    Ugrnn,
}

impl CellType {
    pub const ALL: [CellType; 6] =
        [CellType::Simple, CellType::DeltaRnn, CellType::Gru, CellType::Lstm, CellType::Mgu, CellType::Ugrnn];

    /// Memory cells only (everything except the simple neuron).
    pub const MEMORY: [CellType; 5] =
        [CellType::DeltaRnn, CellType::Gru, CellType::Lstm, CellType::Mgu, CellType::Ugrnn];

    pub fn param_count(self) -> usize {
        match self {
            CellType::Simple => 1,
            CellType::DeltaRnn => 6,
            CellType::Lstm => 12,
            CellType::Gru => 9,
            CellType::Mgu => 6,
            CellType::Ugrnn => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CellType::Simple => "simple",
            CellType::DeltaRnn => "delta",
            CellType::Gru => "gru",
            CellType::Lstm => "lstm",
            CellType::Mgu => "mgu",
            CellType::Ugrnn => "ugrnn",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            CellType::Simple => 0,
            CellType::DeltaRnn => 1,
            CellType::Gru => 2,
            CellType::Lstm => 3,
            CellType::Mgu => 4,
            CellType::Ugrnn => 5,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<CellType> {
        CellType::ALL.into_iter().find(|c| c.code() == code)
    }
}

impl fmt::Display for CellType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CellType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "simple" => Ok(CellType::Simple),
            "delta" | "delta_rnn" | "delta-rnn" => Ok(CellType::DeltaRnn),
            "gru" => Ok(CellType::Gru),
            "lstm" => Ok(CellType::Lstm),
            "mgu" => Ok(CellType::Mgu),
            "ugrnn" => Ok(CellType::Ugrnn),
            other => Err(format!("unknown cell type `{other}`")),
        }
    }
}

/// Per-node learnable parameters, tagged by cell type.
///
/// Gated cells store one block of `[input scale, recurrent scale, bias]` per
/// gate. The input scale multiplies the node's weighted feed-forward sum and
/// the recurrent scale multiplies its weighted recurrent sum, so the effective
/// per-gate edge weights are `scale * edge_weight`. Index constants for each
/// layout live in [`crate::cells`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CellParams {
    /// `[bias]`
    Simple([f64; 1]),
    /// `[alpha, beta1, beta2, gate bias b_j, m, bias]`
    DeltaRnn([f64; 6]),
    /// gate blocks `z, r, s~`
    Gru([f64; 9]),
    /// gate blocks `f, i, c~, o`
    Lstm([f64; 12]),
    /// gate blocks `f, s~`
    Mgu([f64; 6]),
    /// gate blocks `c, g`
    Ugrnn([f64; 6]),
}

impl CellParams {
    pub fn zeros(cell: CellType) -> Self {
        match cell {
            CellType::Simple => CellParams::Simple([0.0; 1]),
            CellType::DeltaRnn => CellParams::DeltaRnn([0.0; 6]),
            CellType::Gru => CellParams::Gru([0.0; 9]),
            CellType::Lstm => CellParams::Lstm([0.0; 12]),
            CellType::Mgu => CellParams::Mgu([0.0; 6]),
            CellType::Ugrnn => CellParams::Ugrnn([0.0; 6]),
        }
    }

    /// Builds a block from a flat slice; `None` when the length does not match.
    pub fn from_slice(cell: CellType, values: &[f64]) -> Option<Self> {
        if values.len() != cell.param_count() {
            return None;
        }
        let mut params = CellParams::zeros(cell);
        params.as_mut_slice().copy_from_slice(values);
        Some(params)
    }

    pub fn from_fn(cell: CellType, mut f: impl FnMut(usize) -> f64) -> Self {
        let mut params = CellParams::zeros(cell);
        for (i, v) in params.as_mut_slice().iter_mut().enumerate() {
            *v = f(i);
        }
        params
    }

    pub fn cell_type(&self) -> CellType {
        match self {
            CellParams::Simple(_) => CellType::Simple,
            CellParams::DeltaRnn(_) => CellType::DeltaRnn,
            CellParams::Gru(_) => CellType::Gru,
            CellParams::Lstm(_) => CellType::Lstm,
            CellParams::Mgu(_) => CellType::Mgu,
            CellParams::Ugrnn(_) => CellType::Ugrnn,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        match self {
            CellParams::Simple(p) => p,
            CellParams::DeltaRnn(p) => p,
            CellParams::Gru(p) => p,
            CellParams::Lstm(p) => p,
            CellParams::Mgu(p) => p,
            CellParams::Ugrnn(p) => p,
        }
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        match self {
            CellParams::Simple(p) => p,
            CellParams::DeltaRnn(p) => p,
            CellParams::Gru(p) => p,
            CellParams::Lstm(p) => p,
            CellParams::Mgu(p) => p,
            CellParams::Ugrnn(p) => p,
        }
    }

    pub fn len(&self) -> usize {
        self.as_slice().len()
    }

    pub fn is_empty(&self) -> bool {
        self.as_slice().is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|v| v.is_finite())
    }
}
