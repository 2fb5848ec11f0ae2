//! Compile device configurations into HoneyD low-interaction honeypot
//! configuration files.

mod grammar;
mod personality;

use std::fmt::Write as _;
use std::net::Ipv4Addr;

use ipnet::Ipv4Net;
use thiserror::Error;

use crate::config::{DeviceConfig, OsLabel, Vocabulary};
use crate::encoding::{decode, ConfigMatrix};

pub use grammar::{validate_honeyd, HoneydSummary};
pub use personality::{PersonalityMap, DEFAULT_KEY};

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("no personality for {0} and no default")]
    UnknownPersonality(OsLabel),
    #[error("invalid template name {0:?}")]
    InvalidTemplateName(String),
    #[error("address pool {pool} has {available} usable addresses, {needed} needed")]
    PoolExhausted { pool: Ipv4Net, available: usize, needed: usize },
    #[error("invalid address pool: {0}")]
    InvalidPool(String),
    #[error("invalid personality map: {0}")]
    InvalidPersonalityMap(String),
    #[error("honeyd grammar error on line {line}: {message}")]
    Grammar { line: usize, message: String },
}

/// Renders one decoy template:
///
/// ```text
/// create <name>
/// set <name> personality "<personality>"
/// set <name> default tcp action reset
/// add <name> tcp port <P> open
/// ```
///
/// with one `add` line per service in ascending port order.
pub fn to_honeyd(config: &DeviceConfig, pmap: &PersonalityMap, name: &str) -> Result<String, EmitError> {
    if !grammar::is_valid_name(name) {
        return Err(EmitError::InvalidTemplateName(name.to_owned()));
    }
    let personality = pmap.lookup(config.os_label())?;
    let mut ports: Vec<u16> = config.services.iter().map(|s| s.port).collect();
    ports.sort_unstable();
    ports.dedup();
    let mut out = String::new();
    writeln!(out, "create {name}").unwrap();
    writeln!(out, "set {name} personality \"{personality}\"").unwrap();
    writeln!(out, "set {name} default tcp action reset").unwrap();
    for port in ports {
        writeln!(out, "add {name} tcp port {port} open").unwrap();
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoy {
    pub name: String,
    pub config: DeviceConfig,
    pub address: Ipv4Addr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoyFleet {
    pub decoys: Vec<Decoy>,
    pub address_pool: Ipv4Net,
}

impl DecoyFleet {
    /// The whole configuration file: each template followed by its `bind`
    /// line.
    pub fn render(&self, pmap: &PersonalityMap) -> Result<String, EmitError> {
        let mut out = String::new();
        for d in &self.decoys {
            out.push_str(&to_honeyd(&d.config, pmap, &d.name)?);
            writeln!(out, "bind {} {}", d.address, d.name).unwrap();
        }
        Ok(out)
    }
}

pub fn parse_pool(cidr: &str) -> Result<Ipv4Net, EmitError> {
    cidr.trim()
        .parse()
        .map_err(|e| EmitError::InvalidPool(format!("{cidr:?}: {e}")))
}

/// Host addresses of the pool in ascending order. Network and broadcast
/// addresses are skipped except for /31 and /32.
pub fn pool_addresses(pool: Ipv4Net) -> impl Iterator<Item = Ipv4Addr> {
    pool.hosts()
}

fn pool_size(pool: Ipv4Net) -> usize {
    match pool.prefix_len() {
        32 => 1,
        31 => 2,
        p => (1usize << (32 - p)) - 2,
    }
}

pub fn template_name(index: usize) -> String {
    format!("decoy{index:04}")
}

/// Decodes every matrix and pairs it with a sequential template name
/// (`decoy0000`, `decoy0001`, …) and the next free pool address, then
/// renders the fleet.
pub fn build_fleet(
    samples: &[ConfigMatrix],
    vocab: &Vocabulary,
    pmap: &PersonalityMap,
    pool: Ipv4Net,
) -> Result<(DecoyFleet, String), EmitError> {
    let pool = pool.trunc();
    let available = pool_size(pool);
    if samples.len() > available {
        return Err(EmitError::PoolExhausted {
            pool,
            available,
            needed: samples.len(),
        });
    }
    let decoys = samples
        .iter()
        .zip(pool_addresses(pool))
        .enumerate()
        .map(|(i, (m, address))| Decoy {
            name: template_name(i),
            config: decode(m, vocab),
            address,
        })
        .collect();
    let fleet = DecoyFleet {
        decoys,
        address_pool: pool,
    };
    let text = fleet.render(pmap)?;
    Ok((fleet, text))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ServiceEntry;

    fn windows_server() -> DeviceConfig {
        DeviceConfig::new(
            "Windows Server 2008 R2",
            None,
            vec![
                ServiceEntry::new(445, "smb", None),
                ServiceEntry::new(135, "msrpc", None),
                ServiceEntry::new(139, "netbios", None),
            ],
        )
        .unwrap()
    }

    #[test]
    fn template_layout() {
        let text = to_honeyd(&windows_server(), &PersonalityMap::default(), "ws").unwrap();
        assert_eq!(
            text,
            "create ws\n\
             set ws personality \"Microsoft Windows Server 2008 R2\"\n\
             set ws default tcp action reset\n\
             add ws tcp port 135 open\n\
             add ws tcp port 139 open\n\
             add ws tcp port 445 open\n"
        );
        assert!(validate_honeyd(&text).is_ok());
    }

    #[test]
    fn rejects_bad_names_and_missing_personality() {
        let pmap = PersonalityMap::default();
        for bad in ["", "9x", "a b", "a\"b", "x\n"] {
            assert!(matches!(
                to_honeyd(&windows_server(), &pmap, bad),
                Err(EmitError::InvalidTemplateName(_))
            ));
        }
        let empty = PersonalityMap::from_json("{}").unwrap();
        assert!(matches!(
            to_honeyd(&windows_server(), &empty, "a"),
            Err(EmitError::UnknownPersonality(OsLabel::WindowsServer))
        ));
    }

    #[test]
    fn pool_sizes() {
        assert_eq!(pool_size(parse_pool("10.0.0.0/24").unwrap()), 254);
        assert_eq!(pool_size(parse_pool("10.0.0.7/32").unwrap()), 1);
        assert_eq!(pool_size(parse_pool("10.0.0.6/31").unwrap()), 2);
        for p in ["10.0.0.0/24", "10.0.0.7/32", "10.0.0.6/31", "192.168.4.0/22"] {
            let net = parse_pool(p).unwrap();
            assert_eq!(pool_addresses(net).count(), pool_size(net), "{p}");
        }
        assert!(parse_pool("10.0.0.0/33").is_err());
        assert!(parse_pool("fe80::/64").is_err());
    }
}
