//! Config parsing, CSV/JSON/SVG output and the command-line front end.

pub mod cli;
pub mod config;
pub mod output;
pub mod plot;

pub use cli::main_with_args;
pub use config::{parse_config, parse_config_with, ConfigDocument, Overrides};
pub use output::{log_to_csv, parse_csv, read_csv, read_json, write_csv, write_json};
pub use plot::{emit_plot, render_plot, PlotKind};
