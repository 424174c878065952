pub mod analyze;
pub mod export;
pub mod factcheck;
pub mod fit;
pub mod ingest;
pub mod social;
