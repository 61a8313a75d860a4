//! Single TOML configuration consumed by every subcommand.
//!
//! Relative paths inside the file resolve against the config file's own
//! directory, so a deployment directory can be moved or mounted elsewhere
//! without rewriting it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rvtee_core::taint::TaintConfig;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub store: StoreSection,
    pub bridge: BridgeSection,
    pub monitor: MonitorSection,
    pub taint: TaintSection,
    /// Directory the config file lives in; all relative paths resolve here.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreSection {
    /// Holds the device state, seal log, registry, and the monitored logs.
    pub state_dir: String,
    /// Stand-in for the forensic node: receives the pristine key copy.
    pub forensic_dir: String,
    /// Keystream length in octets.
    pub key_length: u64,
    /// Octets burned per seal.
    pub chunk_size: u64,
}

impl Default for StoreSection {
    fn default() -> StoreSection {
        StoreSection {
            state_dir: "state".into(),
            forensic_dir: "forensic".into(),
            key_length: 2 * 1024 * 1024,
            chunk_size: 32,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BridgeSection {
    /// `host:port`, a socket path, or `unix:<path>`.
    pub endpoint: String,
}

impl Default for BridgeSection {
    fn default() -> BridgeSection {
        BridgeSection {
            endpoint: "127.0.0.1:7177".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorSection {
    pub property_spec: String,
    pub event_log_id: u64,
    pub verdict_log_id: u64,
    /// Heartbeat verdicts every N accepted events; 0 disables.
    pub heartbeat_every: u64,
}

impl Default for MonitorSection {
    fn default() -> MonitorSection {
        MonitorSection {
            property_spec: "properties.rvp".into(),
            event_log_id: 1,
            verdict_log_id: 2,
            heartbeat_every: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaintSection {
    pub patterns: String,
    pub window_size: usize,
    pub stride: usize,
    pub coarse_threshold: f64,
    pub max_edit_distance: usize,
    pub qgram_size: usize,
}

impl Default for TaintSection {
    fn default() -> TaintSection {
        let defaults = TaintConfig::default();
        TaintSection {
            patterns: "patterns.tsv".into(),
            window_size: defaults.window_size,
            stride: defaults.stride,
            coarse_threshold: defaults.coarse_threshold,
            max_edit_distance: defaults.max_edit_distance,
            qgram_size: defaults.qgram_size,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let mut config: Config =
            toml::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))?;
        config.base_dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<(), String> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| format!("cannot serialize config: {e}"))?;
        std::fs::write(path, text)
            .map_err(|e| format!("cannot write config {}: {e}", path.display()))
    }

    fn resolve(&self, p: &str) -> PathBuf {
        let path = Path::new(p);
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn state_dir(&self) -> PathBuf {
        self.resolve(&self.store.state_dir)
    }

    pub fn forensic_dir(&self) -> PathBuf {
        self.resolve(&self.store.forensic_dir)
    }

    pub fn device_path(&self) -> PathBuf {
        self.state_dir().join("device.state")
    }

    pub fn seal_log_path(&self) -> PathBuf {
        self.state_dir().join("seal.log")
    }

    pub fn registry_path(&self) -> PathBuf {
        self.state_dir().join("registry.tsv")
    }

    pub fn event_log_path(&self) -> PathBuf {
        self.state_dir().join("events.log")
    }

    pub fn verdict_log_path(&self) -> PathBuf {
        self.state_dir().join("verdicts.log")
    }

    pub fn safe_copy_path(&self) -> PathBuf {
        self.forensic_dir().join("key.safecopy")
    }

    pub fn property_spec_path(&self) -> PathBuf {
        self.resolve(&self.monitor.property_spec)
    }

    pub fn patterns_path(&self) -> PathBuf {
        self.resolve(&self.taint.patterns)
    }

    pub fn taint_config(&self) -> TaintConfig {
        TaintConfig {
            window_size: self.taint.window_size,
            stride: self.taint.stride,
            coarse_threshold: self.taint.coarse_threshold,
            max_edit_distance: self.taint.max_edit_distance,
            qgram_size: self.taint.qgram_size,
        }
    }

    pub fn heartbeat_every(&self) -> Option<u64> {
        match self.monitor.heartbeat_every {
            0 => None,
            n => Some(n),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_resolve_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rvtee.toml");
        let mut config = Config::default();
        config.store.key_length = 4096;
        config.save(&path).unwrap();
        let loaded = Config::load(&path).unwrap();
        assert_eq!(loaded.store.key_length, 4096);
        assert_eq!(loaded.store.chunk_size, 32);
        assert_eq!(loaded.device_path(), dir.path().join("state/device.state"));
        assert_eq!(
            loaded.safe_copy_path(),
            dir.path().join("forensic/key.safecopy")
        );
        assert_eq!(loaded.heartbeat_every(), None);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rvtee.toml");
        std::fs::write(&path, "[store]\nkey_lenght = 1024\n").unwrap();
        let err = Config::load(&path).unwrap_err();
        assert!(err.contains("key_lenght"), "unhelpful error: {err}");
    }

    #[test]
    fn absolute_paths_pass_through() {
        let mut config = Config::default();
        config.base_dir = PathBuf::from("/etc/rvtee");
        config.store.state_dir = "/var/lib/rvtee".into();
        assert_eq!(config.state_dir(), PathBuf::from("/var/lib/rvtee"));
        assert_eq!(config.forensic_dir(), PathBuf::from("/etc/rvtee/forensic"));
    }
}
