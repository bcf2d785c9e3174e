use std::fmt::Write as _;

use super::Scenario;
use crate::error::{Result, WstabError};

/// A scenario shipped with the library, stored as TOML source.
#[derive(Debug, Clone, Copy)]
pub struct Builtin {
    pub name: &'static str,
    pub source: &'static str,
}

macro_rules! builtins {
    ($($name:literal),* $(,)?) => {
        &[$(Builtin { name: $name, source: include_str!(concat!("builtins/", $name, ".toml")) }),*]
    };
}

const BUILTINS: &[Builtin] = builtins![
    "paper-ex-3.9-threshold",
    "paper-product-cylinder",
    "paper-Mr-k-minus-2",
    "gaussian-hemisphere",
    "cone-log-convex-cap",
    "quadratic-disk-area-bound",
    "hemisphere-inflation",
    "quadratic-slice-foliation",
    "unit-sphere",
    "perturbed-hemisphere",
];

pub fn builtins() -> &'static [Builtin] {
    BUILTINS
}

pub fn builtin_source(name: &str) -> Result<&'static str> {
    BUILTINS
        .iter()
        .find(|b| b.name == name)
        .map(|b| b.source)
        .ok_or_else(|| {
            WstabError::Config(format!(
                "unknown builtin scenario `{name}` (see `wstab list`)"
            ))
        })
}

pub fn builtin(name: &str) -> Result<Scenario> {
    Scenario::from_toml_str(builtin_source(name)?)
}

/// One line per builtin: name, then its description.
pub fn list_text() -> String {
    let width = BUILTINS.iter().map(|b| b.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for b in BUILTINS {
        let description = builtin(b.name).map(|sc| sc.description).unwrap_or_default();
        let _ = writeln!(s, "{:width$}  {description}", b.name);
    }
    s
}
