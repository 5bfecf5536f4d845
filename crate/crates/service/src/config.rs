use std::path::{Path, PathBuf};

use annoloop::esegraph::ExpandConfig;
use annoloop::featurize::FeaturizeConfig;
use annoloop::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub corpus_dir: PathBuf,
    pub session_dir: PathBuf,
    /// When set, every request must carry `Authorization: Bearer <token>`.
    pub token: Option<String>,
    pub featurize: FeaturizeConfig,
    pub expand: ExpandConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            host: "127.0.0.1".into(),
            port: 8080,
            corpus_dir: "corpora".into(),
            session_dir: "sessions".into(),
            token: None,
            featurize: FeaturizeConfig::default(),
            expand: ExpandConfig::default(),
        }
    }
}

impl ServiceConfig {
    /// Reads an optional JSON file, then applies `ANNOLOOP_*` overrides.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                    path: p.to_path_buf(),
                    source: e,
                })?;
                serde_json::from_str(&text)?
            }
            None => ServiceConfig::default(),
        };
        config.apply_env(|k| std::env::var(k).ok())?;
        Ok(config)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(v) = var("ANNOLOOP_HOST") {
            self.host = v;
        }
        if let Some(v) = var("ANNOLOOP_PORT") {
            self.port = v
                .parse()
                .map_err(|_| Error::Config(format!("ANNOLOOP_PORT `{v}` is not a port number")))?;
        }
        if let Some(v) = var("ANNOLOOP_CORPUS_DIR") {
            self.corpus_dir = v.into();
        }
        if let Some(v) = var("ANNOLOOP_SESSION_DIR") {
            self.session_dir = v.into();
        }
        if let Some(v) = var("ANNOLOOP_TOKEN") {
            self.token = Some(v).filter(|t| !t.is_empty());
        }
        Ok(())
    }
}
