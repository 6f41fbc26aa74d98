use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assembly::Variant;
use crate::corpus::WindowLayout;
use crate::error::{Error, Result};
use crate::retrieval::RetrieverKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    /// Scripted responses, with an extractive responder for anything
    /// unscripted. Needs no network.
    #[default]
    Mock,
    /// OpenAI-compatible chat endpoint configured from the environment.
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    #[default]
    Hashing,
    Http,
}

fn default_work_dir() -> PathBuf {
    PathBuf::from("work")
}
fn default_n_max() -> usize {
    3
}
fn default_variants() -> Vec<Variant> {
    vec![Variant::Qc, Variant::QcAsm, Variant::RawArticle]
}
fn default_model() -> String {
    "gpt-3.5-turbo".into()
}
fn default_max_tokens() -> u32 {
    2048
}
fn default_retry_limit() -> u32 {
    4
}
fn default_concurrency() -> usize {
    4
}
fn default_dimension() -> usize {
    crate::retrieval::HASHING_DIMENSION
}
fn default_embedder_input() -> usize {
    512
}
fn default_k1() -> f64 {
    1.2
}
fn default_b() -> f64 {
    0.75
}
fn default_ks() -> Vec<usize> {
    vec![1, 10]
}
fn default_k() -> usize {
    100
}
fn default_top_k() -> usize {
    10
}
fn default_budget() -> usize {
    2048
}
fn default_generator_model() -> String {
    "gpt-3.5-turbo".into()
}

/// Flat TOML run configuration. Relative paths resolve against the
/// directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    #[serde(default)]
    pub queries: Option<PathBuf>,
    #[serde(default)]
    pub qrels: Option<PathBuf>,
    /// JSONL gold answers for generation scoring.
    #[serde(default)]
    pub answers: Option<PathBuf>,
    #[serde(default = "default_work_dir")]
    pub work_dir: PathBuf,

    #[serde(default = "default_n_max")]
    pub n_max: usize,
    /// Window order for per-n variants, or the upper order for assembled
    /// ones. Unset means 1 for per-n and `n_max` for assembled variants.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    /// Variant searched, evaluated and used for RAG. Defaults to the first
    /// of `variants`.
    #[serde(default)]
    pub variant: Option<Variant>,
    #[serde(default)]
    pub window_layout: WindowLayout,

    #[serde(default)]
    pub provider: ProviderKind,
    /// JSON object mapping prompt substrings to canned responses.
    #[serde(default)]
    pub mock_script: Option<PathBuf>,
    #[serde(default)]
    pub prompts_dir: Option<PathBuf>,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub system_prompt: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_retry_limit")]
    pub retry_limit: u32,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default)]
    pub full_article_context: bool,
    #[serde(default)]
    pub per_window_fallback: bool,

    #[serde(default)]
    pub retriever: RetrieverKind,
    #[serde(default)]
    pub embedder: EmbedderKind,
    #[serde(default)]
    pub embedding_model: Option<String>,
    #[serde(default = "default_dimension")]
    pub embedding_dimension: usize,
    #[serde(default = "default_embedder_input")]
    pub embedder_max_tokens: usize,
    #[serde(default = "default_k1")]
    pub k1: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default)]
    pub stopwords: Vec<String>,

    /// Metric cutoffs.
    #[serde(default = "default_ks")]
    pub ks: Vec<usize>,
    /// Hits kept per query in run files.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Hits expanded into RAG context.
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    /// RAG context budget in estimated tokens.
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_generator_model")]
    pub generator_model: String,
}

impl PipelineConfig {
    /// Defaults for everything but the corpus path.
    pub fn new(corpus: impl Into<PathBuf>) -> Self {
        let mut c: PipelineConfig = toml::from_str("corpus = \"\"").expect("defaults parse");
        c.corpus = corpus.into();
        c
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Makes relative paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus);
        fix(&mut self.work_dir);
        for p in [
            &mut self.queries,
            &mut self.qrels,
            &mut self.answers,
            &mut self.mock_script,
            &mut self.prompts_dir,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=5).contains(&self.n_max) {
            return Err(Error::Config(format!("n_max must be in 1..=5, got {}", self.n_max)));
        }
        if let Some(n) = self.n {
            if n < 1 || n > self.n_max {
                return Err(Error::Config(format!("n must be in 1..={}, got {n}", self.n_max)));
            }
        }
        if self.variants.is_empty() {
            return Err(Error::Config("variants must not be empty".into()));
        }
        if let Some(v) = self.variant {
            if !self.variants.contains(&v) {
                return Err(Error::Config(format!("variant {v} is not among the built variants")));
            }
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::Config("ks must be non-empty and every cutoff >= 1".into()));
        }
        if self.k == 0 || self.top_k == 0 {
            return Err(Error::Config("k and top_k must be >= 1".into()));
        }
        if self.concurrency == 0 {
            return Err(Error::Config("concurrency must be >= 1".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::Config("temperature must be a non-negative number".into()));
        }
        if self.k1 < 0.0 || !(0.0..=1.0).contains(&self.b) {
            return Err(Error::Config("k1 must be >= 0 and b in [0, 1]".into()));
        }
        if self.embedding_dimension == 0 || self.embedder_max_tokens == 0 {
            return Err(Error::Config("embedding dimension and input limit must be positive".into()));
        }
        Ok(())
    }

    /// The variant searched and evaluated.
    pub fn search_variant(&self) -> Variant {
        self.variant.unwrap_or(self.variants[0])
    }

    /// Window order (per-n variants) or upper order (assembled variants)
    /// used for `variant`.
    pub fn order_for(&self, variant: Variant) -> Option<usize> {
        if variant == Variant::RawArticle {
            None
        } else if variant.is_per_n() {
            Some(self.n.unwrap_or(1))
        } else {
            Some(self.n.unwrap_or(self.n_max))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = PipelineConfig::parse("corpus = \"c.jsonl\"").unwrap();
        assert_eq!(c.n_max, 3);
        assert_eq!(c.top_k, 10);
        assert_eq!(c.budget, 2048);
        assert_eq!(c.k1, 1.2);
        assert_eq!(c.provider, ProviderKind::Mock);
        assert_eq!(c, PipelineConfig::new("c.jsonl"));
        assert_eq!(c.order_for(Variant::Qc), Some(1));
        assert_eq!(c.order_for(Variant::QcAsm), Some(3));
        assert_eq!(c.order_for(Variant::RawArticle), None);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "corpus = \"c\"\nn_max = 0",
            "corpus = \"c\"\nn_max = 6",
            "corpus = \"c\"\nn = 4",
            "corpus = \"c\"\nvariants = []",
            "corpus = \"c\"\nvariants = [\"QC\"]\nvariant = \"QA\"",
            "corpus = \"c\"\nks = [0]",
            "corpus = \"c\"\nunknown_key = 1",
            "corpus = \"c\"\nretriever = \"fuzzy\"",
            "n_max = 3",
        ] {
            assert!(matches!(PipelineConfig::parse(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn variants_parse_by_name() {
        let c = PipelineConfig::parse(
            "corpus = \"c\"\nvariants = [\"QA\", \"QCA_ASM\", \"RAW_ARTICLE\"]\nretriever = \"dense\"",
        )
        .unwrap();
        assert_eq!(c.variants, [Variant::Qa, Variant::QcaAsm, Variant::RawArticle]);
        assert_eq!(c.retriever, RetrieverKind::Dense);
    }

    #[test]
    fn relative_paths_follow_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ski.toml");
        std::fs::write(&path, "corpus = \"data/c.jsonl\"\nqrels = \"/abs/q.tsv\"").unwrap();
        let c = PipelineConfig::load(&path).unwrap();
        assert_eq!(c.corpus, dir.path().join("data/c.jsonl"));
        assert_eq!(c.qrels.as_deref(), Some(Path::new("/abs/q.tsv")));
        assert_eq!(c.work_dir, dir.path().join("work"));
    }
}
