//! Scenarios shipped with the binary; the JSON lives in `scenarios/` at the
//! repository root so it can be copied and edited.

use crate::config::ScenarioConfig;
use crate::CliError;

pub struct Bundled {
    pub name: &'static str,
    pub json: &'static str,
    /// Runs whose densities stay free of nodes, where the field and wave
    /// engines are expected to agree.
    pub smooth: bool,
}

macro_rules! bundled {
    ($name:literal, $smooth:expr) => {
        Bundled {
            name: $name,
            json: include_str!(concat!("../../../scenarios/", $name, ".json")),
            smooth: $smooth,
        }
    };
}

pub const BUNDLED: &[Bundled] = &[
    bundled!("free-packet", true),
    bundled!("ho-ground", true),
    bundled!("ho-coherent", true),
    bundled!("double-well", false),
    bundled!("barrier", false),
    bundled!("classical-hybrid", false),
    bundled!("arrow-demo", false),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|b| b.name)
}

pub fn bundled(name: &str) -> Option<Result<ScenarioConfig, CliError>> {
    BUNDLED.iter().find(|b| b.name == name).map(|b| ScenarioConfig::from_json(b.json))
}
