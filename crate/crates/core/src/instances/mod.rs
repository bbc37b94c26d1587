//! Random instance generation and the instance file formats.

mod format;
mod generator;

pub use format::{load, read_binary, read_json, save, write_binary, write_json, FileHeader, FORMAT_VERSION, MAGIC};
pub use generator::{generate, GeneratorSpec};
