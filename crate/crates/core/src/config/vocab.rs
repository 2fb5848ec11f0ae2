use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{ConfigError, DeviceConfig};

/// Number of port columns in the matrix encoding.
pub const PORT_SLOTS: usize = 30;
/// Rows per half of a matrix column; bounds every symbol index.
pub const HALF_ROWS: usize = 32;
/// Index for a closed port or an absent symbol.
pub const ABSENT_INDEX: u8 = 0;
/// Index shared by every out-of-vocabulary symbol.
pub const OTHER_INDEX: u8 = 1;
/// Token decoded from [`OTHER_INDEX`].
pub const OTHER_TOKEN: &str = "<other>";

const FIRST_SYMBOL: u8 = 2;
const SYMBOL_SLOTS: usize = HALF_ROWS - FIRST_SYMBOL as usize;

/// Injective assignment of symbols to indices `2..32`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SymbolIndex {
    slots: Vec<Option<String>>,
    lookup: HashMap<String, u8>,
}

impl SymbolIndex {
    /// Assigns indices 2, 3, ... in the order given; symbols past the 30th
    /// are left out and will encode as [`OTHER_INDEX`].
    pub fn from_ranked<I, S>(ranked: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut index = SymbolIndex {
            slots: vec![None; SYMBOL_SLOTS],
            lookup: HashMap::new(),
        };
        for (slot, symbol) in ranked.into_iter().take(SYMBOL_SLOTS).enumerate() {
            let symbol = symbol.into();
            index.lookup.insert(symbol.clone(), slot as u8 + FIRST_SYMBOL);
            index.slots[slot] = Some(symbol);
        }
        index
    }

    fn from_map(map: BTreeMap<String, u8>) -> Result<Self, String> {
        let mut index = SymbolIndex {
            slots: vec![None; SYMBOL_SLOTS],
            lookup: HashMap::new(),
        };
        for (symbol, i) in map {
            if !(FIRST_SYMBOL as usize..HALF_ROWS).contains(&(i as usize)) {
                return Err(format!("index {i} for {symbol:?} outside 2..31"));
            }
            let slot = &mut index.slots[(i - FIRST_SYMBOL) as usize];
            if slot.is_some() {
                return Err(format!("index {i} assigned twice"));
            }
            *slot = Some(symbol.clone());
            index.lookup.insert(symbol, i);
        }
        Ok(index)
    }

    /// Index for a symbol: its slot, or [`OTHER_INDEX`] when unknown.
    pub fn index_of(&self, symbol: &str) -> u8 {
        self.lookup.get(symbol).copied().unwrap_or(OTHER_INDEX)
    }

    /// Index for an optional symbol, [`ABSENT_INDEX`] for `None`.
    pub fn index_of_opt(&self, symbol: Option<&str>) -> u8 {
        symbol.map_or(ABSENT_INDEX, |s| self.index_of(s))
    }

    /// Symbol at an index. `None` for the absent sentinel; [`OTHER_TOKEN`]
    /// for the overflow index and for unassigned slots.
    pub fn symbol(&self, index: u8) -> Option<&str> {
        match index {
            ABSENT_INDEX => None,
            OTHER_INDEX => Some(OTHER_TOKEN),
            i => Some(
                self.slots
                    .get((i - FIRST_SYMBOL) as usize)
                    .and_then(|s| s.as_deref())
                    .unwrap_or(OTHER_TOKEN),
            ),
        }
    }

    pub fn contains(&self, symbol: &str) -> bool {
        self.lookup.contains_key(symbol)
    }

    pub fn len(&self) -> usize {
        self.lookup.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lookup.is_empty()
    }

    pub fn to_map(&self) -> BTreeMap<String, u8> {
        self.lookup.iter().map(|(s, &i)| (s.clone(), i)).collect()
    }
}

impl Serialize for SymbolIndex {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_map().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SymbolIndex {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<String, u8>::deserialize(deserializer)?;
        SymbolIndex::from_map(map).map_err(serde::de::Error::custom)
    }
}

/// Column and row assignments for the matrix encoding.
///
/// `ports` always has [`PORT_SLOTS`] distinct entries; only the first
/// `active_ports` are real. The rest are placeholders that always encode as
/// closed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub ports: Vec<u16>,
    pub active_ports: usize,
    pub service_index: SymbolIndex,
    pub cpe_index: SymbolIndex,
    pub os_index: SymbolIndex,
    pub build_index: SymbolIndex,
    pub version_index: SymbolIndex,
}

impl Vocabulary {
    /// Port column slot (0-based among the 30 port columns) for an active port.
    pub fn port_slot(&self, port: u16) -> Option<usize> {
        self.ports[..self.active_ports].iter().position(|&p| p == port)
    }

    pub fn is_active_slot(&self, slot: usize) -> bool {
        slot < self.active_ports
    }

    pub fn active(&self) -> &[u16] {
        &self.ports[..self.active_ports]
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.ports.len() != PORT_SLOTS {
            return Err(ConfigError::InvalidVocabulary(format!(
                "expected {PORT_SLOTS} ports, found {}",
                self.ports.len()
            )));
        }
        if self.active_ports > PORT_SLOTS {
            return Err(ConfigError::InvalidVocabulary("active_ports exceeds 30".into()));
        }
        let distinct: HashSet<u16> = self.ports.iter().copied().collect();
        if distinct.len() != PORT_SLOTS || distinct.contains(&0) {
            return Err(ConfigError::InvalidVocabulary(
                "ports must be 30 distinct non-zero numbers".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let vocab: Vocabulary = serde_json::from_str(text)
            .map_err(|e| ConfigError::InvalidVocabulary(e.to_string()))?;
        vocab.validate()?;
        Ok(vocab)
    }
}

/// Coarse version token derived from a build string: the part before the
/// first `.`, e.g. `"10"` for `"10.0.17763"`. Builds without a dot have none.
pub fn version_token(os_build: Option<&str>) -> Option<&str> {
    let build = os_build?;
    let (major, _) = build.split_once('.')?;
    let major = major.trim();
    (!major.is_empty()).then_some(major)
}

fn ranked(counts: HashMap<&str, usize>) -> Vec<&str> {
    let mut items: Vec<(&str, usize)> = counts.into_iter().collect();
    items.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    items.into_iter().map(|(s, _)| s).collect()
}

/// Builds the vocabulary: the `port_budget` most frequent open ports (ties by
/// ascending port), then symbol maps filled by descending frequency (ties
/// lexicographic). Service and CPE frequencies count only services on the
/// selected ports. The result does not depend on corpus order.
pub fn build_vocabulary(
    corpus: &[DeviceConfig],
    port_budget: usize,
) -> Result<Vocabulary, ConfigError> {
    if corpus.is_empty() {
        return Err(ConfigError::EmptyCorpus);
    }
    if port_budget > PORT_SLOTS {
        return Err(ConfigError::InvalidVocabulary(format!(
            "port budget {port_budget} exceeds {PORT_SLOTS}"
        )));
    }

    let mut port_counts: HashMap<u16, usize> = HashMap::new();
    for config in corpus {
        for s in &config.services {
            *port_counts.entry(s.port).or_default() += 1;
        }
    }
    let mut ports: Vec<(u16, usize)> = port_counts.iter().map(|(&p, &c)| (p, c)).collect();
    ports.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut ports: Vec<u16> = ports.into_iter().take(port_budget).map(|(p, _)| p).collect();
    let active_ports = ports.len();
    // placeholders count down from the top of the port range
    let mut candidate = u16::MAX;
    while ports.len() < PORT_SLOTS {
        if !ports.contains(&candidate) {
            ports.push(candidate);
        }
        candidate -= 1;
    }
    let active: HashSet<u16> = ports[..active_ports].iter().copied().collect();

    let mut services = HashMap::new();
    let mut cpes = HashMap::new();
    let mut oses = HashMap::new();
    let mut builds = HashMap::new();
    let mut versions = HashMap::new();
    for config in corpus {
        if !config.os_family.is_empty() {
            *oses.entry(config.os_family.as_str()).or_default() += 1;
        }
        if let Some(b) = config.os_build.as_deref() {
            *builds.entry(b).or_default() += 1;
        }
        if let Some(v) = version_token(config.os_build.as_deref()) {
            *versions.entry(v).or_default() += 1;
        }
        for s in config.services.iter().filter(|s| active.contains(&s.port)) {
            *services.entry(s.module.as_str()).or_default() += 1;
            if let Some(c) = s.cpe.as_deref() {
                *cpes.entry(c).or_default() += 1;
            }
        }
    }

    Ok(Vocabulary {
        ports,
        active_ports,
        service_index: SymbolIndex::from_ranked(ranked(services)),
        cpe_index: SymbolIndex::from_ranked(ranked(cpes)),
        os_index: SymbolIndex::from_ranked(ranked(oses)),
        build_index: SymbolIndex::from_ranked(ranked(builds)),
        version_index: SymbolIndex::from_ranked(ranked(versions)),
    })
}

/// Mean per-device share of services that sit on an active vocabulary port
/// and have an in-vocabulary service name. Devices without services count
/// as fully covered.
pub fn coverage_fraction(corpus: &[DeviceConfig], vocab: &Vocabulary) -> f64 {
    if corpus.is_empty() {
        return 1.0;
    }
    let total: f64 = corpus
        .iter()
        .map(|config| {
            if config.services.is_empty() {
                return 1.0;
            }
            let covered = config
                .services
                .iter()
                .filter(|s| {
                    vocab.port_slot(s.port).is_some() && vocab.service_index.contains(&s.module)
                })
                .count();
            covered as f64 / config.services.len() as f64
        })
        .sum();
    total / corpus.len() as f64
}
