use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BaseStation, GenerationRanges, MarketParams, MsuProfile, Scenario};
use crate::Result;

/// On-disk layout of a scenario: TOML with one `[[msus]]` table per user and
/// one `[[base_stations]]` table per BS. The optional `[ranges]` table keeps
/// the generator configuration that produced the instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub seed: u64,
    pub params: MarketParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranges: Option<GenerationRanges>,
    pub msus: Vec<MsuProfile>,
    pub base_stations: Vec<BaseStation>,
}

impl ScenarioFile {
    pub fn new(scenario: &Scenario, ranges: Option<GenerationRanges>) -> Self {
        Self {
            seed: scenario.seed,
            params: scenario.params,
            ranges,
            msus: scenario.msus.clone(),
            base_stations: scenario.bss.clone(),
        }
    }

    pub fn into_scenario(self) -> Scenario {
        Scenario {
            params: self.params,
            msus: self.msus,
            bss: self.base_stations,
            seed: self.seed,
        }
    }
}

pub fn save_scenario(
    path: impl AsRef<Path>,
    scenario: &Scenario,
    ranges: Option<&GenerationRanges>,
) -> Result<()> {
    let file = ScenarioFile::new(scenario, ranges.cloned());
    fs::write(path, toml::to_string(&file)?)?;
    Ok(())
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioFile> {
    let text = fs::read_to_string(path)?;
    Ok(toml::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::generate_scenario;

    #[test]
    fn toml_round_trip_is_exact() {
        let ranges = GenerationRanges::default();
        let s = generate_scenario(11, 12, 3, &ranges).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.toml");
        save_scenario(&path, &s, Some(&ranges)).unwrap();
        let back = load_scenario(&path).unwrap();
        assert_eq!(back.ranges.as_ref(), Some(&ranges));
        assert_eq!(back.into_scenario(), s);
    }

    #[test]
    fn field_names_carry_units() {
        let s = generate_scenario(1, 1, 1, &GenerationRanges::default()).unwrap();
        let text = toml::to_string(&ScenarioFile::new(&s, None)).unwrap();
        for key in ["tx_power_w", "interference_w", "position_m", "b0_w_per_hz"] {
            assert!(text.contains(key), "missing {key}");
        }
    }

    #[test]
    fn partial_ranges_table_uses_defaults() {
        let r: GenerationRanges = toml::from_str("alpha = [20.0, 25.0]\n").unwrap();
        assert_eq!(r.alpha.lo(), 20.0);
        assert_eq!(r.beta, GenerationRanges::default().beta);
    }
}
