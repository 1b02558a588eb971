use serde::{Deserialize, Serialize};

use crate::error::{invalid, CliError, CliResult};

pub const TOOL: &str = "lz-landscape";

/// Header of every output file. Replaying it reruns the same computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub seed: Option<u64>,
    pub timestamp: String,
    pub parameters: serde_json::Value,
}

impl RunManifest {
    pub fn new<P: Serialize>(subcommand: &str, seed: Option<u64>, timestamp: &str, params: &P) -> Self {
        Self {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            seed,
            timestamp: timestamp.into(),
            parameters: serde_json::to_value(params).expect("parameters serialize"),
        }
    }

    pub fn parameters<P: for<'de> Deserialize<'de>>(&self) -> CliResult<P> {
        serde_json::from_value(self.parameters.clone())
            .map_err(|e| invalid(format!("manifest parameters for `{}`: {e}", self.subcommand)))
    }

    pub fn csv_line(&self) -> String {
        format!(
            "# manifest: {}",
            serde_json::to_string(self).expect("manifest serializes")
        )
    }

    /// Recovers the manifest from a CSV or JSON output file.
    pub fn extract(text: &str) -> CliResult<Self> {
        if let Some(rest) = text.strip_prefix("# manifest: ") {
            let line = rest.lines().next().unwrap_or_default();
            return serde_json::from_str(line).map_err(|e| invalid(format!("malformed manifest line: {e}")));
        }
        #[derive(Deserialize)]
        struct Wrapped {
            manifest: RunManifest,
        }
        serde_json::from_str::<Wrapped>(text)
            .map(|w| w.manifest)
            .map_err(|e| invalid(format!("no run manifest found: {e}")))
    }
}

/// ISO-8601 UTC time of the run: explicit override, then `SOURCE_DATE_EPOCH`, then the clock.
pub fn resolve_timestamp(explicit: Option<&str>) -> Result<String, CliError> {
    if let Some(t) = explicit {
        return Ok(t.to_string());
    }
    let when = match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(s) => {
            let secs: i64 = s
                .trim()
                .parse()
                .map_err(|_| invalid(format!("SOURCE_DATE_EPOCH is not an integer: {s}")))?;
            chrono::DateTime::from_timestamp(secs, 0).ok_or_else(|| invalid("SOURCE_DATE_EPOCH out of range"))?
        }
        Err(_) => chrono::Utc::now(),
    };
    Ok(when.to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_through_both_formats() {
        let m = RunManifest::new("qsl", None, "2020-01-01T00:00:00Z", &serde_json::json!({"delta": 1.0}));
        let csv = format!("{}\nx,y\n", m.csv_line());
        assert_eq!(RunManifest::extract(&csv).unwrap(), m);
        let json = serde_json::json!({"manifest": m, "t_qsl": 1.5}).to_string();
        assert_eq!(RunManifest::extract(&json).unwrap(), m);
        assert!(RunManifest::extract("a,b\n1,2\n").is_err());
    }

    #[test]
    fn explicit_timestamp_wins() {
        assert_eq!(resolve_timestamp(Some("T")).unwrap(), "T");
    }
}
