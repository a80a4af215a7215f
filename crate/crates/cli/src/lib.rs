//! File formats, the command set, the property-check runner and the timing
//! harness behind the `axiscomp` binary.

pub mod bench;
pub mod check;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod tensor_file;

pub use commands::{run, Cli, Outcome};
pub use error::{CliError, CliResult};
pub use manifest::{Backend, ElementsFile, Manifest};
pub use tensor_file::TensorFile;
