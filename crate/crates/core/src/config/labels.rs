use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DeviceConfig;

/// Operating-system class used by the OS-conditional model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OsLabel {
    MikrotikRouterOs,
    WindowsServer,
    Windows,
    DiskStationManager,
    SonicOs,
    Linux,
    Ubuntu,
    SynologyRouterManager,
    Debian,
    Qts,
    /// Matched none of the known labels.
    Other,
}

impl OsLabel {
    /// The ten conditioning classes, in class-index order.
    pub const KNOWN: [OsLabel; 10] = [
        OsLabel::MikrotikRouterOs,
        OsLabel::WindowsServer,
        OsLabel::Windows,
        OsLabel::DiskStationManager,
        OsLabel::SonicOs,
        OsLabel::Linux,
        OsLabel::Ubuntu,
        OsLabel::SynologyRouterManager,
        OsLabel::Debian,
        OsLabel::Qts,
    ];

    pub const ALL: [OsLabel; 11] = [
        OsLabel::MikrotikRouterOs,
        OsLabel::WindowsServer,
        OsLabel::Windows,
        OsLabel::DiskStationManager,
        OsLabel::SonicOs,
        OsLabel::Linux,
        OsLabel::Ubuntu,
        OsLabel::SynologyRouterManager,
        OsLabel::Debian,
        OsLabel::Qts,
        OsLabel::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OsLabel::MikrotikRouterOs => "MikroTik RouterOS",
            OsLabel::WindowsServer => "Windows Server",
            OsLabel::Windows => "Windows",
            OsLabel::DiskStationManager => "DiskStation Manager",
            OsLabel::SonicOs => "SonicOS",
            OsLabel::Linux => "Linux",
            OsLabel::Ubuntu => "Ubuntu",
            OsLabel::SynologyRouterManager => "Synology Router Manager",
            OsLabel::Debian => "Debian",
            OsLabel::Qts => "QTS",
            OsLabel::Other => "Other",
        }
    }

    /// Class index in `0..10`, `None` for [`OsLabel::Other`].
    pub fn class_index(self) -> Option<usize> {
        OsLabel::KNOWN.iter().position(|&l| l == self)
    }

    pub fn from_class_index(index: usize) -> Option<OsLabel> {
        OsLabel::KNOWN.get(index).copied()
    }
}

impl fmt::Display for OsLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OsLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim();
        OsLabel::ALL
            .iter()
            .copied()
            .find(|l| l.name().eq_ignore_ascii_case(wanted))
            .ok_or_else(|| format!("unknown OS label {s:?}"))
    }
}

/// Case-insensitive longest-substring match of the OS family against the
/// known label names. Never fails; unmatched devices get [`OsLabel::Other`].
pub fn assign_os_label(config: &DeviceConfig) -> OsLabel {
    let os = config.os_family.to_lowercase();
    OsLabel::KNOWN
        .iter()
        .copied()
        .filter(|l| os.contains(&l.name().to_lowercase()))
        .max_by_key(|l| l.name().len())
        .unwrap_or(OsLabel::Other)
}

pub fn label_histogram(corpus: &[DeviceConfig]) -> BTreeMap<OsLabel, usize> {
    let mut hist: BTreeMap<OsLabel, usize> = OsLabel::ALL.iter().map(|&l| (l, 0)).collect();
    for config in corpus {
        *hist.entry(assign_os_label(config)).or_default() += 1;
    }
    hist
}

/// Functional category of a device, derived from its service module names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DeviceType {
    FileSharing,
    RemoteAccess,
    Webserver,
    Mailserver,
    Database,
    Dns,
    Vpn,
    Router,
    Management,
}

impl DeviceType {
    /// Flag-bit order.
    pub const ALL: [DeviceType; 9] = [
        DeviceType::FileSharing,
        DeviceType::RemoteAccess,
        DeviceType::Webserver,
        DeviceType::Mailserver,
        DeviceType::Database,
        DeviceType::Dns,
        DeviceType::Vpn,
        DeviceType::Router,
        DeviceType::Management,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DeviceType::FileSharing => "file sharing",
            DeviceType::RemoteAccess => "remote access",
            DeviceType::Webserver => "webserver",
            DeviceType::Mailserver => "mailserver",
            DeviceType::Database => "database",
            DeviceType::Dns => "dns",
            DeviceType::Vpn => "vpn",
            DeviceType::Router => "router",
            DeviceType::Management => "management",
        }
    }

    /// Module-name substrings that put a device into this category.
    pub fn substrings(self) -> &'static [&'static str] {
        match self {
            DeviceType::FileSharing => &["smb", "ftp"],
            DeviceType::RemoteAccess => &["telnet", "ssh", "rdp"],
            DeviceType::Webserver => &["http"],
            DeviceType::Mailserver => &["imap", "pop3", "smtp"],
            DeviceType::Database => &["sql"],
            DeviceType::Dns => &["dns"],
            DeviceType::Vpn => &["pptp", "l2tp", "openvpn"],
            DeviceType::Router => &["router"],
            DeviceType::Management => &["ldap", "snmp", "ntp", "kerberos"],
        }
    }

    fn bit(self) -> u16 {
        1 << DeviceType::ALL.iter().position(|&t| t == self).unwrap()
    }
}

impl FromStr for DeviceType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().replace(['_', '-'], " ");
        DeviceType::ALL
            .iter()
            .copied()
            .find(|t| t.name().eq_ignore_ascii_case(&wanted))
            .ok_or_else(|| format!("unknown device type {s:?}"))
    }
}

/// A (possibly empty) set of device-type flags.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeviceTypeLabels(u16);

impl DeviceTypeLabels {
    pub fn empty() -> Self {
        DeviceTypeLabels(0)
    }

    pub fn from_types(types: &[DeviceType]) -> Self {
        DeviceTypeLabels(types.iter().fold(0, |acc, t| acc | t.bit()))
    }

    /// Builds the set from a 9-element flag vector; entries above 0.5 are set.
    pub fn from_flags(flags: &[f64]) -> Self {
        DeviceTypeLabels::from_types(
            &DeviceType::ALL
                .iter()
                .zip(flags)
                .filter(|(_, &f)| f > 0.5)
                .map(|(&t, _)| t)
                .collect::<Vec<_>>(),
        )
    }

    pub fn contains(self, t: DeviceType) -> bool {
        self.0 & t.bit() != 0
    }

    pub fn insert(&mut self, t: DeviceType) {
        self.0 |= t.bit();
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_subset(self, other: DeviceTypeLabels) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = DeviceType> {
        DeviceType::ALL.into_iter().filter(move |&t| self.contains(t))
    }

    /// 0/1 vector in flag-bit order.
    pub fn to_flags(self) -> [f64; 9] {
        let mut flags = [0.0; 9];
        for (i, t) in DeviceType::ALL.iter().enumerate() {
            if self.contains(*t) {
                flags[i] = 1.0;
            }
        }
        flags
    }
}

impl fmt::Display for DeviceTypeLabels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.iter().map(DeviceType::name).collect();
        write!(f, "{{{}}}", names.join(", "))
    }
}

pub fn assign_device_types(config: &DeviceConfig) -> DeviceTypeLabels {
    let mut labels = DeviceTypeLabels::empty();
    for service in &config.services {
        let module = service.module.to_lowercase();
        for t in DeviceType::ALL {
            if t.substrings().iter().any(|s| module.contains(s)) {
                labels.insert(t);
            }
        }
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::super::ServiceEntry;
    use super::*;

    fn device(os: &str, modules: &[&str]) -> DeviceConfig {
        let services = modules
            .iter()
            .enumerate()
            .map(|(i, m)| ServiceEntry::new(1000 + i as u16, *m, None))
            .collect();
        DeviceConfig::new(os, None, services).unwrap()
    }

    #[test]
    fn os_examples() {
        assert_eq!(assign_os_label(&device("Ubuntu 20.04", &[])), OsLabel::Ubuntu);
        assert_eq!(
            assign_os_label(&device("Windows Server 2019", &[])),
            OsLabel::WindowsServer
        );
        assert_eq!(assign_os_label(&device("FreeBSD", &[])), OsLabel::Other);
        assert_eq!(
            assign_os_label(&device("mikrotik routeros 6.48", &[])),
            OsLabel::MikrotikRouterOs
        );
        assert_eq!(assign_os_label(&device("", &[])), OsLabel::Other);
    }

    #[test]
    fn longest_match_by_enumeration() {
        // every label whose name is a substring of "Windows Server 2019"
        let os = "windows server 2019";
        let matching: Vec<OsLabel> = OsLabel::KNOWN
            .iter()
            .copied()
            .filter(|l| os.contains(&l.name().to_lowercase()))
            .collect();
        assert_eq!(matching, vec![OsLabel::WindowsServer, OsLabel::Windows]);
        assert!(OsLabel::WindowsServer.name().len() > OsLabel::Windows.name().len());
        assert_eq!(
            assign_os_label(&device("Windows Server 2019", &[])),
            OsLabel::WindowsServer
        );
    }

    #[test]
    fn label_names_parse_back() {
        for l in OsLabel::ALL {
            assert_eq!(l.name().parse::<OsLabel>().unwrap(), l);
        }
        assert_eq!("windows server".parse::<OsLabel>().unwrap(), OsLabel::WindowsServer);
        for t in DeviceType::ALL {
            assert_eq!(t.name().parse::<DeviceType>().unwrap(), t);
        }
        assert_eq!("file_sharing".parse::<DeviceType>().unwrap(), DeviceType::FileSharing);
    }

    #[test]
    fn device_type_examples() {
        assert_eq!(
            assign_device_types(&device("x", &["http"])),
            DeviceTypeLabels::from_types(&[DeviceType::Webserver])
        );
        assert_eq!(
            assign_device_types(&device("x", &["http", "ftp"])),
            DeviceTypeLabels::from_types(&[DeviceType::Webserver, DeviceType::FileSharing])
        );
        assert!(assign_device_types(&device("x", &[])).is_empty());
        // "https" contains "http"; "mysql" contains "sql"; "dns-udp" contains "dns"
        let labels = assign_device_types(&device("x", &["HTTPS", "mysql", "dns-udp"]));
        assert!(labels.contains(DeviceType::Webserver));
        assert!(labels.contains(DeviceType::Database));
        assert!(labels.contains(DeviceType::Dns));
        assert_eq!(labels.len(), 3);
    }

    #[test]
    fn flags_round_trip() {
        let labels = DeviceTypeLabels::from_types(&[DeviceType::Vpn, DeviceType::Router]);
        assert_eq!(DeviceTypeLabels::from_flags(&labels.to_flags()), labels);
        assert_eq!(labels.to_string(), "{vpn, router}");
    }

    #[test]
    fn histogram() {
        let hist = label_histogram(&[]);
        assert_eq!(hist.len(), 11);
        assert!(hist.values().all(|&c| c == 0));

        let corpus: Vec<_> = (0..5).map(|_| device("Ubuntu", &[])).collect();
        let hist = label_histogram(&corpus);
        assert_eq!(hist[&OsLabel::Ubuntu], 5);
        assert_eq!(hist.values().sum::<usize>(), 5);
    }

    #[test]
    fn reference_label_counts_sum_to_corpus_size() {
        let counts = [
            119478, 104584, 50391, 49609, 25489, 9781, 8960, 3616, 5391, 1674,
        ];
        assert_eq!(counts.iter().sum::<usize>(), 378973);
    }
}
