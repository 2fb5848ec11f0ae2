use std::collections::{BTreeSet, HashMap, HashSet};
use std::net::Ipv4Addr;

use super::EmitError;

/// What a validated configuration declares.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HoneydSummary {
    pub templates: usize,
    pub open_ports: usize,
    pub binds: usize,
}

/// Whitespace-separated words, with `"..."` as a single word.
fn tokenize(line: &str) -> Result<Vec<&str>, String> {
    let mut tokens = Vec::new();
    let mut rest = line.trim_start_matches(' ');
    while !rest.is_empty() {
        if let Some(stripped) = rest.strip_prefix('"') {
            let end = stripped.find('"').ok_or("unterminated string")?;
            tokens.push(&rest[..end + 2]);
            rest = &stripped[end + 1..];
            if !(rest.is_empty() || rest.starts_with(' ')) {
                return Err("string must be followed by a space".into());
            }
        } else {
            let end = rest.find(' ').unwrap_or(rest.len());
            tokens.push(&rest[..end]);
            rest = &rest[end..];
        }
        rest = rest.trim_start_matches(' ');
    }
    Ok(tokens)
}

pub(crate) fn is_valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Checks text against the subset of the HoneyD configuration grammar this
/// crate emits: `create`, `set … personality`, `set … default <proto>
/// action <action>`, `add … <proto> port <n> <action>` and `bind`, with LF
/// line endings, `#` comments and blank lines. Templates must be created
/// before use, ports may not repeat within a template, and addresses may
/// not be bound twice.
pub fn validate_honeyd(text: &str) -> Result<HoneydSummary, EmitError> {
    if text.contains('\r') {
        return Err(EmitError::Grammar { line: 0, message: "carriage return found".into() });
    }
    if !text.is_empty() && !text.ends_with('\n') {
        return Err(EmitError::Grammar { line: 0, message: "missing final newline".into() });
    }
    let mut summary = HoneydSummary::default();
    let mut ports: HashMap<&str, BTreeSet<u16>> = HashMap::new();
    let mut bound: HashSet<Ipv4Addr> = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let fail = |message: String| EmitError::Grammar { line: i + 1, message };
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let tokens = tokenize(line).map_err(fail)?;
        let known = |name: &str| {
            if ports.contains_key(name) {
                Ok(())
            } else {
                Err(fail(format!("template {name:?} used before create")))
            }
        };
        match tokens.as_slice() {
            ["create", name] => {
                if !is_valid_name(name) {
                    return Err(fail(format!("bad template name {name:?}")));
                }
                if ports.insert(name, BTreeSet::new()).is_some() {
                    return Err(fail(format!("template {name:?} created twice")));
                }
                summary.templates += 1;
            }
            ["set", name, "personality", p] if p.len() >= 2 && p.starts_with('"') => known(name)?,
            ["set", name, "default", "tcp" | "udp" | "icmp", "action", "reset" | "open" | "block" | "closed"] => {
                known(name)?
            }
            ["add", name, "tcp" | "udp", "port", port, "open" | "reset" | "block" | "closed"] => {
                known(name)?;
                let port: u16 = port
                    .parse()
                    .ok()
                    .filter(|&p| p > 0)
                    .ok_or_else(|| fail(format!("bad port {port:?}")))?;
                if !ports.get_mut(name).expect("known").insert(port) {
                    return Err(fail(format!("port {port} added twice to {name:?}")));
                }
                summary.open_ports += 1;
            }
            ["bind", addr, name] => {
                known(name)?;
                let addr: Ipv4Addr = addr.parse().map_err(|_| fail(format!("bad address {addr:?}")))?;
                if !bound.insert(addr) {
                    return Err(fail(format!("address {addr} bound twice")));
                }
                summary.binds += 1;
            }
            _ => return Err(fail(format!("unrecognized statement {line:?}"))),
        }
    }
    Ok(summary)
}
