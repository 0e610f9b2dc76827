use thiserror::Error;

/// Any error raised by this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Store(#[from] crate::embedding_store::StoreError),
    #[error(transparent)]
    Catalog(#[from] crate::attribute_catalog::CatalogError),
    #[error(transparent)]
    Scoring(#[from] crate::consolidation::ScoringError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Analysis(#[from] crate::analysis::AnalysisError),
    #[error(transparent)]
    Synth(#[from] crate::synthgen::SynthError),
}
