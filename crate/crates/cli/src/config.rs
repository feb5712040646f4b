use std::path::{Path, PathBuf};

use addrmatch::bm25::Bm25Params;
use addrmatch::matcher::PipelineConfig;
use addrmatch::reranker::{CategoryBands, ComponentWeights, GateConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzerPaths {
    pub stoplist: Option<PathBuf>,
    pub abbreviations: Option<PathBuf>,
}

/// The JSON config file. Every section is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub analyzer: AnalyzerPaths,
    pub bm25: Bm25Params,
    pub gate: GateConfig,
    pub weights: ComponentWeights,
    pub bands: CategoryBands,
    pub k: usize,
}

impl Default for Config {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Config {
            analyzer: AnalyzerPaths::default(),
            bm25: p.bm25,
            gate: p.gate,
            weights: p.weights,
            bands: p.bands,
            k: p.k,
        }
    }
}

/// Flag values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub stoplist: Option<PathBuf>,
    pub abbreviations: Option<PathBuf>,
    pub k1: Option<f64>,
    pub b: Option<f64>,
    pub k3: Option<f64>,
    pub threshold: Option<f64>,
    pub k: Option<usize>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        // Relative table paths are resolved against the config file's directory.
        let mut cfg: Config = serde_json::from_str(&text)
            .map_err(|e| CliError::input(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.analyzer.stoplist, &mut cfg.analyzer.abbreviations]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(p) = &o.stoplist {
            self.analyzer.stoplist = Some(p.clone());
        }
        if let Some(p) = &o.abbreviations {
            self.analyzer.abbreviations = Some(p.clone());
        }
        if let Some(v) = o.k1 {
            self.bm25.k1 = v;
        }
        if let Some(v) = o.b {
            self.bm25.b = v;
        }
        if let Some(v) = o.k3 {
            self.bm25.k3 = v;
        }
        if let Some(v) = o.threshold {
            self.gate.threshold = v;
        }
        if let Some(v) = o.k {
            self.k = v;
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            bm25: self.bm25,
            gate: self.gate,
            weights: self.weights,
            bands: self.bands,
            k: self.k,
        }
    }
}
