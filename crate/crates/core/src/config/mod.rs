//! Device configuration model: ingestion of Shodan-style records, OS and
//! device-type labeling, encoding vocabularies and synthetic corpora.

mod labels;
mod record;
mod synth;
mod vocab;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use labels::{
    assign_device_types, assign_os_label, label_histogram, DeviceType, DeviceTypeLabels, OsLabel,
};
pub use record::{parse_corpus, parse_record, write_corpus};
pub use synth::{default_prototypes, separable_prototypes, synth_corpus, CorpusSpec};
pub use vocab::{
    build_vocabulary, coverage_fraction, version_token, SymbolIndex, Vocabulary, ABSENT_INDEX,
    HALF_ROWS, OTHER_INDEX, OTHER_TOKEN, PORT_SLOTS,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("duplicate port {0} in record")]
    DuplicatePort(u16),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// One open port together with the service Shodan saw on it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ServiceEntry {
    pub port: u16,
    pub module: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpe: Option<String>,
}

impl ServiceEntry {
    pub fn new(port: u16, module: impl Into<String>, cpe: Option<&str>) -> Self {
        ServiceEntry {
            port,
            module: module.into(),
            cpe: cpe.map(str::to_owned),
        }
    }
}

/// A single device: operating system plus the services on its open ports.
///
/// Services are kept sorted by port and a port appears at most once; use
/// [`DeviceConfig::new`] or [`parse_record`] to get a normalized value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeviceConfig {
    #[serde(rename = "os")]
    pub os_family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub os_build: Option<String>,
    pub services: Vec<ServiceEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
}

impl DeviceConfig {
    /// Builds a config, sorting services by port. Fails on a repeated port,
    /// port 0, or an empty module name.
    pub fn new(
        os_family: impl Into<String>,
        os_build: Option<&str>,
        mut services: Vec<ServiceEntry>,
    ) -> Result<Self, ConfigError> {
        for s in &services {
            if s.port == 0 {
                return Err(ConfigError::MalformedRecord("port 0 is not a valid port".into()));
            }
            if s.module.is_empty() {
                return Err(ConfigError::MalformedRecord(format!(
                    "empty module name on port {}",
                    s.port
                )));
            }
        }
        services.sort_by_key(|s| s.port);
        if let Some(w) = services.windows(2).find(|w| w[0].port == w[1].port) {
            return Err(ConfigError::DuplicatePort(w[0].port));
        }
        Ok(DeviceConfig {
            os_family: os_family.into(),
            os_build: os_build.map(str::to_owned),
            services,
            source_id: None,
        })
    }

    pub fn with_source_id(mut self, id: impl Into<String>) -> Self {
        self.source_id = Some(id.into());
        self
    }

    pub fn service_on(&self, port: u16) -> Option<&ServiceEntry> {
        self.services
            .binary_search_by_key(&port, |s| s.port)
            .ok()
            .map(|i| &self.services[i])
    }

    pub fn os_label(&self) -> OsLabel {
        assign_os_label(self)
    }

    pub fn device_types(&self) -> DeviceTypeLabels {
        assign_device_types(self)
    }
}
