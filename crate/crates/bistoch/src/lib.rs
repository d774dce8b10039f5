//! File formats, model persistence and the command line for `bistoch-core`.

pub mod cli;
pub mod io;
pub mod model;

pub use cli::{run, CliError};
pub use io::{load_affinity, load_measure, load_points, Format, IoError};
pub use model::{load_model, save_model, EmbeddingDefaults};
