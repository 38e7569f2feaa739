use thiserror::Error;

use crate::cost_model::CostError;
use crate::folding::FoldingError;
use crate::nas_search::SearchError;
use crate::pareto::ParetoError;
use crate::roofline::RooflineError;
use crate::search_space::SpaceError;

/// Crate-wide error.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Roofline(#[from] RooflineError),
    #[error(transparent)]
    Folding(#[from] FoldingError),
    #[error(transparent)]
    Pareto(#[from] ParetoError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Search(#[from] SearchError),
    /// Malformed input file content.
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Whether the failure came from the filesystem rather than from the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Space(SpaceError::Io { .. }))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
