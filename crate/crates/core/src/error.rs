use thiserror::Error;

use crate::belief::CellId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("cell {cell} out of range for a belief over {cells} cells")]
    CellOutOfRange { cell: CellId, cells: usize },

    #[error("observation z={value} on cell {cell} has zero probability under the current belief")]
    DegenerateEvidence { cell: CellId, value: bool },

    #[error("down-dating cell {cell} would leave [0,1]; the observation was never incorporated")]
    InconsistentLedger { cell: CellId },

    #[error("slot space has {slots} slots, above the enumeration cap of {cap}")]
    EnumerationLimit { slots: usize, cap: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("contract violated: {0}")]
    Contract(String),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
