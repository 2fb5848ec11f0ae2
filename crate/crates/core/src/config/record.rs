use std::io::{BufRead, Write};

use serde_json::Value;

use super::{ConfigError, DeviceConfig, ServiceEntry};

/// Parses one JSON record of the form
/// `{"os": .., "os_build": .., "services": [{"port", "module", "cpe"}]}`.
///
/// Unknown fields are ignored. A missing or null `os` becomes the empty
/// string. Optional fields that are present but unusable (a numeric build, a
/// CPE that is neither a string nor a list of strings) are dropped. The
/// module may also be given Shodan-style as `_shodan.module`.
pub fn parse_record(json_text: &str) -> Result<DeviceConfig, ConfigError> {
    let value: Value = serde_json::from_str(json_text)
        .map_err(|e| ConfigError::MalformedRecord(format!("invalid JSON: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| ConfigError::MalformedRecord("record is not a JSON object".into()))?;

    let os_family = match obj.get("os") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.trim().to_owned(),
        Some(other) => {
            return Err(ConfigError::MalformedRecord(format!(
                "os must be a string, got {other}"
            )))
        }
    };
    let os_build = obj
        .get("os_build")
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|s| !s.is_empty());

    let services = obj
        .get("services")
        .and_then(Value::as_array)
        .ok_or_else(|| ConfigError::MalformedRecord("missing services list".into()))?
        .iter()
        .map(parse_service)
        .collect::<Result<Vec<_>, _>>()?;

    let mut config = DeviceConfig::new(os_family, os_build, services)?;
    config.source_id = obj.get("source_id").and_then(Value::as_str).map(str::to_owned);
    Ok(config)
}

fn parse_service(value: &Value) -> Result<ServiceEntry, ConfigError> {
    let obj = value
        .as_object()
        .ok_or_else(|| ConfigError::MalformedRecord("service entry is not an object".into()))?;
    let port = obj
        .get("port")
        .and_then(Value::as_u64)
        .filter(|p| (1..=65535).contains(p))
        .ok_or_else(|| {
            ConfigError::MalformedRecord(format!(
                "service port missing or out of range: {:?}",
                obj.get("port")
            ))
        })? as u16;
    let module = obj
        .get("module")
        .or_else(|| obj.get("_shodan").and_then(|s| s.get("module")))
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|m| !m.is_empty())
        .ok_or_else(|| ConfigError::MalformedRecord(format!("missing module on port {port}")))?;
    let cpe = match obj.get("cpe") {
        Some(Value::String(s)) => Some(s.as_str()),
        Some(Value::Array(items)) => items.iter().find_map(Value::as_str),
        _ => None,
    }
    .map(str::trim)
    .filter(|s| !s.is_empty());
    Ok(ServiceEntry::new(port, module, cpe))
}

/// Reads a JSON Lines corpus. Blank lines are skipped; errors carry the
/// 1-based line number.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Vec<DeviceConfig>, ConfigError> {
    let mut corpus = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let config = parse_record(&line).map_err(|e| match e {
            ConfigError::MalformedRecord(msg) => {
                ConfigError::MalformedRecord(format!("line {}: {msg}", i + 1))
            }
            other => other,
        })?;
        corpus.push(config);
    }
    Ok(corpus)
}

/// Writes configs as JSON Lines in the same schema [`parse_record`] reads.
pub fn write_corpus<W: Write>(mut writer: W, corpus: &[DeviceConfig]) -> Result<(), ConfigError> {
    for config in corpus {
        let line = serde_json::to_string(config)
            .map_err(|e| ConfigError::MalformedRecord(e.to_string()))?;
        writeln!(writer, "{line}")?;
    }
    writer.flush()?;
    Ok(())
}
