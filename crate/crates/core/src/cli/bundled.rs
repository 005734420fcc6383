//! Configurations shipped with the binary; `verify-all` runs them when no file is given.

use super::config::{parse_config, RunConfig};
use super::error::CliError;

pub const BUNDLED: [(&str, &str); 5] = [
    ("free_1d", include_str!("../../configs/free_1d.json")),
    ("free_3d", include_str!("../../configs/free_3d.json")),
    ("mathieu_1d", include_str!("../../configs/mathieu_1d.json")),
    ("square_broken_2d", include_str!("../../configs/square_broken_2d.json")),
    ("cubic_broken_3d", include_str!("../../configs/cubic_broken_3d.json")),
];

pub fn configs() -> Result<Vec<RunConfig>, CliError> {
    BUNDLED.iter().map(|(_, text)| parse_config(text)).collect()
}

pub fn by_name(name: &str) -> Option<Result<RunConfig, CliError>> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| parse_config(text))
}
