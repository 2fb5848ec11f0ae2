use std::collections::BTreeMap;

use super::EmitError;
use crate::config::OsLabel;

pub const DEFAULT_KEY: &str = "_default";

const BUNDLED: &str = include_str!("../../data/personalities.json");

/// OS label → HoneyD personality (an nmap fingerprint name), with an
/// optional fallback for labels that have no entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersonalityMap {
    pub entries: BTreeMap<OsLabel, String>,
    pub default: Option<String>,
}

impl Default for PersonalityMap {
    fn default() -> Self {
        PersonalityMap::from_json(BUNDLED).expect("bundled personality map is valid")
    }
}

fn check_personality(key: &str, value: &str) -> Result<(), EmitError> {
    if value.is_empty() || value.contains(['"', '\n', '\r']) {
        return Err(EmitError::InvalidPersonalityMap(format!(
            "personality for {key:?} must be non-empty without quotes or line breaks"
        )));
    }
    Ok(())
}

impl PersonalityMap {
    /// Parses `{"<label name>": "<personality>", ..., "_default": "..."}`.
    pub fn from_json(text: &str) -> Result<Self, EmitError> {
        let raw: BTreeMap<String, String> =
            serde_json::from_str(text).map_err(|e| EmitError::InvalidPersonalityMap(e.to_string()))?;
        let mut map = PersonalityMap {
            entries: BTreeMap::new(),
            default: None,
        };
        for (key, value) in raw {
            check_personality(&key, &value)?;
            if key == DEFAULT_KEY {
                map.default = Some(value);
            } else {
                let label: OsLabel = key.parse().map_err(EmitError::InvalidPersonalityMap)?;
                map.entries.insert(label, value);
            }
        }
        Ok(map)
    }

    pub fn to_json(&self) -> String {
        let mut raw: BTreeMap<&str, &str> = self.entries.iter().map(|(k, v)| (k.name(), v.as_str())).collect();
        if let Some(d) = &self.default {
            raw.insert(DEFAULT_KEY, d);
        }
        serde_json::to_string_pretty(&raw).expect("string map serializes") + "\n"
    }

    pub fn lookup(&self, label: OsLabel) -> Result<&str, EmitError> {
        self.entries
            .get(&label)
            .or(self.default.as_ref())
            .map(String::as_str)
            .ok_or(EmitError::UnknownPersonality(label))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_map_covers_every_known_label() {
        let map = PersonalityMap::default();
        for label in OsLabel::KNOWN {
            assert!(map.entries.contains_key(&label), "{label}");
        }
        assert_eq!(map.lookup(OsLabel::MikrotikRouterOs).unwrap(), "MikroTik RouterOS 2.9.46");
        assert_eq!(map.lookup(OsLabel::WindowsServer).unwrap(), "Microsoft Windows Server 2008 R2");
        assert_eq!(map.lookup(OsLabel::Other).unwrap(), "Linux 2.6.32 - 3.10");
        assert_eq!(PersonalityMap::from_json(&map.to_json()).unwrap(), map);
    }

    #[test]
    fn missing_label_without_default() {
        let map = PersonalityMap::from_json(r#"{"Linux": "Linux 5.4"}"#).unwrap();
        assert_eq!(map.lookup(OsLabel::Linux).unwrap(), "Linux 5.4");
        assert!(matches!(map.lookup(OsLabel::Qts), Err(EmitError::UnknownPersonality(OsLabel::Qts))));
        assert!(PersonalityMap::from_json(r#"{"Plan 9": "x"}"#).is_err());
        assert!(PersonalityMap::from_json(r#"{"Linux": "bad \" quote"}"#).is_err());
    }
}
