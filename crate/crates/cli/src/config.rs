use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use ruleforge_core::llm::LlmConfig;
use ruleforge_core::trainer::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    #[default]
    Http,
    Replay,
}

/// File locations a config may set; flags take precedence.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub fixture: Option<PathBuf>,
    pub transcript: Option<PathBuf>,
    /// Template name (`rule`, `repair_output`, ...) to a text file replacing
    /// the built-in prompt.
    pub templates: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub llm: LlmConfig,
    pub train: TrainConfig,
    pub transport: TransportKind,
    pub paths: Paths,
}

impl AppConfig {
    /// Reads the config file, resolving relative paths against its directory,
    /// and loads any template files it names.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: AppConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let p = &mut cfg.paths;
        for slot in [&mut p.data, &mut p.rules, &mut p.out, &mut p.report, &mut p.fixture, &mut p.transcript] {
            if let Some(rel) = slot.as_mut() {
                *rel = base.join(&*rel);
            }
        }
        for file in p.templates.values_mut() {
            *file = base.join(&*file);
        }
        cfg.load_templates()?;
        Ok(cfg)
    }

    fn load_templates(&mut self) -> Result<()> {
        for (name, file) in &self.paths.templates {
            let text = fs::read_to_string(file).with_context(|| format!("template {name}: {}", file.display()))?;
            let t = &mut self.train.templates;
            let slot = match name.as_str() {
                "rule" => &mut t.rule,
                "repair_output" => &mut t.repair_output,
                "repair_error" => &mut t.repair_error,
                "sample" => &mut t.sample,
                "sample_example" => &mut t.sample_example,
                "direct" => &mut t.direct,
                other => bail!("unknown template {other:?}"),
            };
            *slot = text;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.llm.validate()?;
        self.train.validate()?;
        Ok(())
    }
}
