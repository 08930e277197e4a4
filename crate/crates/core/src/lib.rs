pub mod channels;
pub mod coherence;
pub mod error;
pub mod io;
pub mod linalg;
pub mod report;
pub mod tolerance;
pub mod spectral;
pub mod structure;
pub mod zoo;
