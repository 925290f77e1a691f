use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// Everything a pipeline run needs, loaded from a TOML file. Relative paths
/// are resolved against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus_dir: PathBuf,
    pub metadata_path: PathBuf,
    pub output_dir: PathBuf,

    /// Half-width in sentences of the training context window.
    #[serde(default = "default_train_window")]
    pub train_window: usize,
    /// Sentences per book-inference window.
    #[serde(default = "default_book_window")]
    pub book_window_sentences: usize,
    /// Windows per segment when `segment_k` is unset.
    #[serde(default = "default_ratio")]
    pub segment_ratio: f64,
    /// Explicit segment count; overrides the ratio when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_k: Option<usize>,

    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_dedup")]
    pub dedup_threshold: f64,
    #[serde(default)]
    pub seed: u64,

    /// Optional per-window hour-score import, replacing the trained model
    /// during segmentation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_scores_path: Option<PathBuf>,
}

fn default_train_window() -> usize {
    3
}

fn default_book_window() -> usize {
    7
}

fn default_ratio() -> f64 {
    8.0
}

fn default_alpha() -> f64 {
    1.0
}

fn default_dedup() -> f64 {
    0.8
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config: PipelineConfig =
            toml::from_str(&raw).with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(base) = path.parent() {
            config.resolve_relative(base);
        }
        config.validate()?;
        Ok(config)
    }

    fn resolve_relative(&mut self, base: &Path) {
        for p in [
            &mut self.corpus_dir,
            &mut self.metadata_path,
            &mut self.output_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&p);
            }
        }
        if let Some(p) = &mut self.external_scores_path {
            if p.is_relative() {
                *p = base.join(&p);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_window == 0 {
            bail!("train_window must be at least 1");
        }
        if self.book_window_sentences == 0 {
            bail!("book_window_sentences must be at least 1");
        }
        if !(self.segment_ratio > 0.0) {
            bail!("segment_ratio must be positive");
        }
        if self.segment_k == Some(0) {
            bail!("segment_k must be at least 1");
        }
        if !(self.alpha > 0.0) {
            bail!("alpha must be positive");
        }
        if !(0.0..=1.0).contains(&self.dedup_threshold) {
            bail!("dedup_threshold must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_losslessly() {
        let config = PipelineConfig {
            corpus_dir: PathBuf::from("/corpus"),
            metadata_path: PathBuf::from("/corpus/metadata.tsv"),
            output_dir: PathBuf::from("/out"),
            train_window: 3,
            book_window_sentences: 7,
            segment_ratio: 8.0,
            segment_k: Some(4),
            alpha: 0.5,
            dedup_threshold: 0.8,
            seed: 99,
            external_scores_path: Some(PathBuf::from("/scores.tsv")),
        };
        let text = config.to_toml();
        let back: PipelineConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn defaults_fill_in() {
        let config: PipelineConfig = toml::from_str(
            "corpus_dir = \"c\"\nmetadata_path = \"m.tsv\"\noutput_dir = \"o\"\n",
        )
        .unwrap();
        assert_eq!(config.train_window, 3);
        assert_eq!(config.book_window_sentences, 7);
        assert_eq!(config.segment_ratio, 8.0);
        assert_eq!(config.segment_k, None);
        assert_eq!(config.alpha, 1.0);
        assert_eq!(config.dedup_threshold, 0.8);
        assert_eq!(config.seed, 0);
    }

    #[test]
    fn rejects_out_of_range() {
        let mut config: PipelineConfig = toml::from_str(
            "corpus_dir = \"c\"\nmetadata_path = \"m.tsv\"\noutput_dir = \"o\"\n",
        )
        .unwrap();
        config.dedup_threshold = 1.5;
        assert!(config.validate().is_err());
        config.dedup_threshold = 0.8;
        config.alpha = 0.0;
        assert!(config.validate().is_err());
    }
}
