use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ConfigError, DeviceConfig, ServiceEntry};

/// A weighted mixture of prototype devices. Sampled devices copy a prototype
/// and, with probability `noise_rate`, get one service's module swapped for
/// another module seen among the prototypes.
#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub prototypes: Vec<(DeviceConfig, f64)>,
    pub noise_rate: f64,
    pub seed: u64,
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.prototypes.is_empty() {
            return Err(ConfigError::InvalidSpec("no prototypes".into()));
        }
        if self.prototypes.iter().any(|(_, w)| !w.is_finite() || *w < 0.0) {
            return Err(ConfigError::InvalidSpec("weights must be finite and non-negative".into()));
        }
        let sum: f64 = self.prototypes.iter().map(|(_, w)| w).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ConfigError::InvalidSpec(format!("weights sum to {sum}, not 1")));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(ConfigError::InvalidSpec(format!(
                "noise rate {} outside [0, 1]",
                self.noise_rate
            )));
        }
        Ok(())
    }

    /// Uniform weights over the given prototypes.
    pub fn uniform(prototypes: Vec<DeviceConfig>, noise_rate: f64, seed: u64) -> Self {
        let w = 1.0 / prototypes.len() as f64;
        CorpusSpec {
            prototypes: prototypes.into_iter().map(|p| (p, w)).collect(),
            noise_rate,
            seed,
        }
    }
}

pub fn synth_corpus(spec: &CorpusSpec, n: usize) -> Result<Vec<DeviceConfig>, ConfigError> {
    spec.validate()?;
    if n == 0 {
        return Err(ConfigError::InvalidSpec("n must be at least 1".into()));
    }
    let weights = WeightedIndex::new(spec.prototypes.iter().map(|(_, w)| *w))
        .map_err(|e| ConfigError::InvalidSpec(e.to_string()))?;
    let mut pool: Vec<&str> = spec
        .prototypes
        .iter()
        .flat_map(|(p, _)| p.services.iter().map(|s| s.module.as_str()))
        .collect();
    pool.sort_unstable();
    pool.dedup();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut corpus = Vec::with_capacity(n);
    for i in 0..n {
        let mut device = spec.prototypes[weights.sample(&mut rng)].0.clone();
        if rng.random_bool(spec.noise_rate) && !device.services.is_empty() && pool.len() > 1 {
            let victim = rng.random_range(0..device.services.len());
            let current = device.services[victim].module.clone();
            let choices: Vec<&str> = pool.iter().copied().filter(|m| *m != current).collect();
            let entry = &mut device.services[victim];
            entry.module = choices[rng.random_range(0..choices.len())].to_owned();
            entry.cpe = None;
        }
        device.source_id = Some(format!("synth-{i}"));
        corpus.push(device);
    }
    Ok(corpus)
}

fn proto(os: &str, build: Option<&str>, services: &[(u16, &str, Option<&str>)]) -> DeviceConfig {
    DeviceConfig::new(
        os,
        build,
        services
            .iter()
            .map(|&(p, m, c)| ServiceEntry::new(p, m, c))
            .collect(),
    )
    .expect("prototype is well formed")
}

/// Twenty hand-written prototypes, two per OS label, weighted roughly like
/// a Shodan sweep (router and Windows heavy, NAS and Debian light).
pub fn default_prototypes() -> Vec<(DeviceConfig, f64)> {
    let protos = vec![
        (proto("MikroTik RouterOS", Some("6.48.6"), &[
            (8291, "mikrotik-routeros", Some("cpe:/o:mikrotik:routeros")),
            (8728, "mikrotik-routeros-api", None),
            (22, "ssh", None),
            (23, "telnet", None),
        ]), 18.0),
        (proto("MikroTik RouterOS", Some("7.1.5"), &[
            (8291, "mikrotik-routeros", Some("cpe:/o:mikrotik:routeros")),
            (80, "http", Some("cpe:/a:mikrotik:webfig")),
            (1723, "pptp", None),
            (2000, "mikrotik-bw", None),
        ]), 14.0),
        (proto("Windows Server 2019", Some("10.0.17763"), &[
            (135, "msrpc", Some("cpe:/o:microsoft:windows")),
            (139, "netbios", None),
            (445, "smb", Some("cpe:/o:microsoft:windows")),
        ]), 16.0),
        (proto("Windows Server 2012 R2", Some("6.3.9600"), &[
            (3389, "rdp", Some("cpe:/a:microsoft:remote_desktop_protocol")),
            (80, "http", Some("cpe:/a:microsoft:iis:8.5")),
            (443, "https", Some("cpe:/a:microsoft:iis:8.5")),
            (1433, "mssql", Some("cpe:/a:microsoft:sql_server")),
            (5985, "http", None),
        ]), 12.0),
        (proto("Windows 10", Some("10.0.19041"), &[
            (135, "msrpc", None),
            (445, "smb", Some("cpe:/o:microsoft:windows")),
            (3389, "rdp", None),
        ]), 8.0),
        (proto("Windows 7", Some("6.1.7601"), &[
            (139, "netbios", None),
            (445, "smb", Some("cpe:/o:microsoft:windows")),
        ]), 5.0),
        (proto("Synology DiskStation Manager", Some("7.0"), &[
            (5000, "http", Some("cpe:/a:synology:diskstation_manager")),
            (5001, "https", Some("cpe:/a:synology:diskstation_manager")),
            (21, "ftp", None),
        ]), 7.0),
        (proto("Synology DiskStation Manager", Some("6.2"), &[
            (5000, "http", Some("cpe:/a:synology:diskstation_manager")),
            (5001, "https", None),
            (445, "smb", None),
            (22, "ssh", None),
        ]), 6.0),
        (proto("SonicOS", Some("6.5.4"), &[
            (443, "https", Some("cpe:/o:sonicwall:sonicos")),
            (4433, "https", Some("cpe:/o:sonicwall:sonicos")),
        ]), 4.0),
        (proto("SonicOS", Some("7.0.1"), &[
            (80, "http", None),
            (443, "https", Some("cpe:/o:sonicwall:sonicos")),
            (8443, "https", None),
        ]), 3.0),
        (proto("Linux 3.x", None, &[
            (22, "ssh", Some("cpe:/a:openbsd:openssh")),
            (80, "http", Some("cpe:/a:apache:http_server")),
        ]), 2.0),
        (proto("Linux 4.x", None, &[
            (161, "snmp", None),
            (9100, "printer", None),
            (80, "http", None),
        ]), 1.5),
        (proto("Ubuntu 20.04", Some("20.04"), &[
            (22, "ssh", Some("cpe:/a:openbsd:openssh:8.2p1")),
            (80, "http", Some("cpe:/a:nginx:nginx")),
            (443, "https", Some("cpe:/a:nginx:nginx")),
        ]), 2.0),
        (proto("Ubuntu 18.04", Some("18.04"), &[
            (22, "ssh", Some("cpe:/a:openbsd:openssh:7.6p1")),
            (3306, "mysql", Some("cpe:/a:mysql:mysql")),
            (25, "smtp", Some("cpe:/a:postfix:postfix")),
        ]), 1.5),
        (proto("Synology Router Manager", Some("1.2"), &[
            (8000, "http", None),
            (8001, "https", None),
            (53, "dns-udp", None),
        ]), 1.0),
        (proto("Synology Router Manager", Some("1.3"), &[
            (80, "http", None),
            (443, "https", None),
            (53, "dns-tcp", None),
        ]), 0.8),
        (proto("Debian 10", Some("10.9"), &[
            (22, "ssh", Some("cpe:/a:openbsd:openssh:7.9p1")),
            (25, "smtp", Some("cpe:/a:exim:exim")),
            (110, "pop3", Some("cpe:/a:dovecot:dovecot")),
        ]), 1.2),
        (proto("Debian 11", Some("11.2"), &[
            (22, "ssh", Some("cpe:/a:openbsd:openssh:8.4p1")),
            (123, "ntp", None),
            (53, "dns-udp", Some("cpe:/a:isc:bind")),
        ]), 0.8),
        (proto("QTS", Some("4.5.4"), &[
            (8080, "http", Some("cpe:/a:qnap:qts")),
            (443, "https", None),
            (21, "ftp", None),
        ]), 0.5),
        (proto("QTS", Some("5.0.1"), &[
            (8080, "http", Some("cpe:/a:qnap:qts")),
            (8081, "http", None),
            (445, "smb", None),
        ]), 0.4),
    ];
    let total: f64 = protos.iter().map(|(_, w)| w).sum();
    protos.into_iter().map(|(p, w)| (p, w / total)).collect()
}

/// Two prototypes per OS label in which no port is shared between labels,
/// so the label is recoverable from the services alone. Weights are
/// uniform.
pub fn separable_prototypes() -> Vec<(DeviceConfig, f64)> {
    let labels: [(&str, [(u16, &str); 3]); 10] = [
        ("MikroTik RouterOS", [(8291, "mikrotik-routeros"), (8728, "mikrotik-routeros-api"), (2000, "mikrotik-bw")]),
        ("Windows Server 2019", [(135, "msrpc"), (445, "smb"), (5985, "winrm")]),
        ("Windows 10", [(139, "netbios"), (3389, "rdp"), (5357, "wsdapi")]),
        ("Synology DiskStation Manager", [(5000, "http"), (5001, "https"), (6690, "cloudstation")]),
        ("SonicOS", [(4433, "https"), (8443, "https"), (60443, "https")]),
        ("Linux 4.x", [(161, "snmp"), (9100, "printer"), (515, "lpd")]),
        ("Ubuntu 20.04", [(22, "ssh"), (3306, "mysql"), (6379, "redis")]),
        ("Synology Router Manager", [(8000, "http"), (8001, "https"), (53, "dns-tcp")]),
        ("Debian 11", [(25, "smtp"), (110, "pop3"), (143, "imap")]),
        ("QTS", [(8080, "http"), (8081, "http"), (21, "ftp")]),
    ];
    let w = 1.0 / (2 * labels.len()) as f64;
    labels
        .iter()
        .flat_map(|(os, s)| {
            [
                (proto(os, None, &[(s[0].0, s[0].1, None), (s[1].0, s[1].1, None)]), w),
                (proto(os, None, &[(s[0].0, s[0].1, None), (s[2].0, s[2].1, None)]), w),
            ]
        })
        .collect()
}
