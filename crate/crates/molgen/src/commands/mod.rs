pub mod evaluate;
pub mod ingest;
pub mod optimize;
pub mod reconstruct;
pub mod sample;
pub mod train;
