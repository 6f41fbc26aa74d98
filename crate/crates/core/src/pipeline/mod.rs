//! Stage orchestration: ingest, synthesize, assemble, index, search, RAG,
//! evaluate and export.
//!
//! Every stage writes into a directory under the work dir named after a
//! digest of the settings that determine its output, so changing a setting
//! never clobbers earlier results and re-running a stage with the same
//! settings reuses them. Synthesis is resumable per (document, n) batch.

mod config;
mod offline;

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{
    assemble_qc_articles, assemble_union_qa, assemble_union_qc, assemble_union_qca, build_c,
    build_c_asm, build_q, build_qa, build_qc, build_qca, build_raw_articles, RepresentationSet,
    Variant,
};
use crate::corpus::{
    corpus_fingerprint, load_corpus, load_queries, segment, windows_with_layout, ContextWindow,
    Document, Query, Sentence,
};
use crate::digest::{sha256_hex, Digester};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_generation, evaluate_retrieval, load_answers, MetricsReport, Qrels};
use crate::export::{export_cpt, export_manifest, export_sft, ExportManifest};
use crate::llm::{
    CachedProvider, CompletionRequest, HttpProvider, HttpProviderConfig, Provider,
};
use crate::retrieval::{
    build_dense_index, build_sparse_index, consolidate_snippets, doc_level_collapse, write_run,
    Bm25Params, ConsolidatedContext, DenseIndex, Embedder, HashingEmbedder, HttpEmbedder,
    RetrievalResult, Retriever, RetrieverKind, SnippetSource, SparseIndex,
};
use crate::synthesis::{
    PromptTemplate, SynthesisRecord, SynthesisSettings, Synthesizer, TemplateName,
};

pub use config::{EmbedderKind, PipelineConfig, ProviderKind};
pub use offline::{extractive_question, extractive_response, offline_provider, prompt_paragraphs};

pub const RAG_INSTRUCTION: &str = "Respond to questions with concise and to-the-point answers. \
No explanation is needed. Keep your response within 20 words.";
pub const RAG_TEMPERATURE: f64 = 1.0;
pub const RAG_TOP_K: u32 = 50;
pub const RAG_MAX_TOKENS: u32 = 40;

const CONTEXT_HEADER: &str = "\n\nContext:\n";
const QUESTION_HEADER: &str = "\n\nQuestion: ";

/// Instruction, blank line, `Context:` block, blank line, question line,
/// `Answer:` line. An empty context leaves the block empty.
pub fn rag_prompt(question: &str, context: &str) -> String {
    format!("{RAG_INSTRUCTION}{CONTEXT_HEADER}{context}{QUESTION_HEADER}{question}\nAnswer:")
}

/// The context block of a prompt built by [`rag_prompt`].
pub(crate) fn rag_prompt_context(prompt: &str) -> Option<&str> {
    let rest = prompt.strip_prefix(RAG_INSTRUCTION)?.strip_prefix(CONTEXT_HEADER)?;
    Some(&rest[..rest.rfind(QUESTION_HEADER)?])
}

/// File-stem name of a representation set: `QC-1`, `QC_ASM-3`,
/// `RAW_ARTICLE`. For assembled variants the number is the highest window
/// order included.
pub fn set_key(variant: Variant, order: Option<usize>) -> String {
    match order {
        Some(n) if variant != Variant::RawArticle => format!("{}-{n}", variant.as_str()),
        _ => variant.as_str().to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub documents: usize,
    pub sentences: usize,
    /// Window count per order n.
    pub windows: BTreeMap<usize, usize>,
    pub corpus_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisSummary {
    pub batches: usize,
    /// Batches found on disk and not regenerated.
    pub reused: usize,
    pub questions: usize,
    pub qa_pairs: usize,
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblySummary {
    /// Set key to item count.
    pub sets: BTreeMap<String, usize>,
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSummary {
    pub key: String,
    pub kind: RetrieverKind,
    pub items: usize,
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RagAnswer {
    pub query_id: String,
    pub query: String,
    /// The generator's text, verbatim.
    pub answer: String,
    pub context: ConsolidatedContext,
    pub generator_id: String,
    /// Set when retrieval produced no usable context and the generator saw
    /// the question alone.
    pub no_context: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportSummary {
    pub manifest: ExportManifest,
    pub files: Vec<PathBuf>,
}

/// One (document, n) synthesis result as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SynthesisBatch {
    doc_id: String,
    n: usize,
    questions: Vec<SynthesisRecord>,
    qa_pairs: Vec<SynthesisRecord>,
}

/// Removes the lock file when dropped.
struct WorkDirLock(PathBuf);

impl WorkDirLock {
    fn acquire(work_dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(work_dir).map_err(|e| Error::io(work_dir, e))?;
        let path = work_dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(WorkDirLock(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(path)),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for WorkDirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

fn write_atomic(path: &Path, body: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(body).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = serde_json::to_vec_pretty(value)?;
    body.push(b'\n');
    write_atomic(path, &body)
}

fn write_jsonl<T: Serialize>(path: &Path, values: &[T]) -> Result<()> {
    let mut body = Vec::new();
    for v in values {
        serde_json::to_writer(&mut body, v)?;
        body.push(b'\n');
    }
    write_atomic(path, &body)
}

fn short(digest: &str) -> &str {
    &digest[..16]
}

/// An opened work directory plus the loaded corpus.
pub struct Pipeline {
    config: PipelineConfig,
    documents: Vec<Document>,
    sentences: Vec<Vec<Sentence>>,
    fingerprint: String,
    provider: CachedProvider<Box<dyn Provider>>,
    script_digest: String,
    questions_template: PromptTemplate,
    qa_template: PromptTemplate,
    _lock: WorkDirLock,
}

impl Pipeline {
    /// Validates the config, locks the work dir, loads and segments the
    /// corpus and sets up the provider.
    pub fn open(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let lock = WorkDirLock::acquire(&config.work_dir)?;
        let documents = load_corpus(&config.corpus)?;
        let sentences = documents.iter().map(segment).collect::<Result<Vec<_>>>()?;
        let fingerprint = corpus_fingerprint(&documents);
        let (inner, script_digest): (Box<dyn Provider>, String) = match config.provider {
            ProviderKind::Mock => {
                let script: BTreeMap<String, String> = match &config.mock_script {
                    Some(path) => {
                        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
                        serde_json::from_slice(&bytes).map_err(|e| {
                            Error::Config(format!("{}: {e}", path.display()))
                        })?
                    }
                    None => BTreeMap::new(),
                };
                let digest = sha256_hex(&serde_json::to_vec(&script)?);
                (Box::new(offline_provider(script)), digest)
            }
            ProviderKind::Http => {
                let mut http = HttpProviderConfig::from_env()?;
                http.retry.max_retries = config.retry_limit;
                http.max_in_flight = config.concurrency;
                (Box::new(HttpProvider::new(http)), String::new())
            }
        };
        let provider = CachedProvider::new(inner, config.work_dir.join("cache"));
        let (questions_template, qa_template) = match &config.prompts_dir {
            Some(dir) => (
                PromptTemplate::load(TemplateName::FineGrainedQuestions, dir)?,
                PromptTemplate::load(TemplateName::InterleavedQa, dir)?,
            ),
            None => (
                PromptTemplate::fine_grained_questions(),
                PromptTemplate::interleaved_qa(),
            ),
        };
        Ok(Pipeline {
            config,
            documents,
            sentences,
            fingerprint,
            provider,
            script_digest,
            questions_template,
            qa_template,
            _lock: lock,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn corpus_fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn provider_id(&self) -> &str {
        self.provider.id()
    }

    fn windows(&self, doc: usize, n: usize) -> Result<Vec<ContextWindow>> {
        windows_with_layout(&self.sentences[doc], n, self.config.window_layout)
    }

    fn stage_dir(&self, stage: &str, digest: &str) -> PathBuf {
        self.config.work_dir.join(format!("{stage}-{}", short(digest)))
    }

    fn ingest_digest(&self) -> String {
        Digester::new("ingest")
            .field(&self.fingerprint)
            .field(&self.config.n_max.to_string())
            .field(&format!("{:?}", self.config.window_layout))
            .finish()
    }

    fn synthesis_digest(&self) -> String {
        let c = &self.config;
        Digester::new("synthesis")
            .field(&self.ingest_digest())
            .field(self.provider.id())
            .field(&self.script_digest)
            .field(&c.model)
            .field(&c.system_prompt)
            .field(&c.temperature.to_bits().to_string())
            .field(&c.max_tokens.to_string())
            .field(&self.questions_template.digest())
            .field(&self.qa_template.digest())
            .field(&c.full_article_context.to_string())
            .field(&c.per_window_fallback.to_string())
            .finish()
    }

    fn assembly_digest(&self) -> String {
        Digester::new("assembly").field(&self.synthesis_digest()).finish()
    }

    fn index_digest(&self) -> Result<String> {
        let c = &self.config;
        let mut d = Digester::new("index");
        d.field(&self.assembly_digest());
        match c.retriever {
            RetrieverKind::Sparse => {
                d.field("sparse")
                    .field(&c.k1.to_bits().to_string())
                    .field(&c.b.to_bits().to_string());
                for s in &c.stopwords {
                    d.field(s);
                }
            }
            RetrieverKind::Dense => {
                d.field("dense").field(&self.embedder()?.id());
            }
        }
        Ok(d.finish())
    }

    pub fn ingest_dir(&self) -> PathBuf {
        self.stage_dir("ingest", &self.ingest_digest())
    }

    pub fn synthesis_dir(&self) -> PathBuf {
        self.stage_dir("synthesis", &self.synthesis_digest())
    }

    pub fn assembly_dir(&self) -> PathBuf {
        self.stage_dir("assembly", &self.assembly_digest())
    }

    pub fn index_dir(&self, key: &str) -> Result<PathBuf> {
        Ok(self.stage_dir("index", &self.index_digest()?).join(key))
    }

    fn query_stage_dir(&self, stage: &str, extra: &[&str]) -> Result<PathBuf> {
        let mut d = Digester::new(stage);
        d.field(&self.index_digest()?);
        for e in extra {
            d.field(e);
        }
        Ok(self.stage_dir(stage, &d.finish()))
    }

    pub fn runs_dir(&self) -> Result<PathBuf> {
        self.query_stage_dir("runs", &[&self.config.k.to_string()])
    }

    pub fn rag_dir(&self) -> Result<PathBuf> {
        let c = &self.config;
        self.query_stage_dir(
            "rag",
            &[
                &c.top_k.to_string(),
                &c.budget.to_string(),
                &c.generator_model,
                self.provider.id(),
                &self.script_digest,
            ],
        )
    }

    pub fn export_dir(&self) -> PathBuf {
        self.stage_dir("export", &self.assembly_digest())
    }

    /// Segments every document and materializes windows for n = 1..=n_max.
    pub fn run_ingest(&self) -> Result<IngestSummary> {
        let dir = self.ingest_dir();
        let mut counts = BTreeMap::new();
        for n in 1..=self.config.n_max {
            let mut all = Vec::new();
            for doc in 0..self.documents.len() {
                all.extend(self.windows(doc, n)?);
            }
            counts.insert(n, all.len());
            write_jsonl(&dir.join(format!("windows-n{n}.jsonl")), &all)?;
        }
        let sentences: Vec<&Sentence> = self.sentences.iter().flatten().collect();
        write_jsonl(&dir.join("sentences.jsonl"), &sentences)?;
        let summary = IngestSummary {
            documents: self.documents.len(),
            sentences: sentences.len(),
            windows: counts,
            corpus_fingerprint: self.fingerprint.clone(),
        };
        write_json(&dir.join("summary.json"), &summary)?;
        Ok(summary)
    }

    fn batch_path(&self, dir: &Path, doc_id: &str, n: usize) -> PathBuf {
        let name = &sha256_hex(doc_id.as_bytes())[..16];
        dir.join("batches").join(format!("{name}-n{n}.json"))
    }

    fn read_batch(&self, path: &Path, doc_id: &str, n: usize, expected: usize) -> Option<SynthesisBatch> {
        let bytes = std::fs::read(path).ok()?;
        let batch: SynthesisBatch = serde_json::from_slice(&bytes).ok()?;
        (batch.doc_id == doc_id
            && batch.n == n
            && batch.questions.len() == expected
            && batch.qa_pairs.len() == expected)
            .then_some(batch)
    }

    fn synthesis_settings(&self) -> SynthesisSettings {
        let c = &self.config;
        SynthesisSettings {
            model: c.model.clone(),
            system_prompt: c.system_prompt.clone(),
            temperature: c.temperature,
            max_tokens: c.max_tokens,
            include_full_article: c.full_article_context,
            per_window_fallback: c.per_window_fallback,
            ..SynthesisSettings::default()
        }
    }

    /// Generates questions and QA pairs for every (document, n) batch not
    /// already on disk.
    pub fn run_synthesize(&self) -> Result<SynthesisSummary> {
        let dir = self.synthesis_dir();
        let synth = Synthesizer::new(&self.provider, self.synthesis_settings())
            .with_templates(self.questions_template.clone(), self.qa_template.clone());
        let jobs: Vec<(usize, usize)> = (0..self.documents.len())
            .flat_map(|d| (1..=self.config.n_max).map(move |n| (d, n)))
            .collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.concurrency)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        let outcomes: Vec<Result<(bool, usize, usize)>> = pool.install(|| {
            jobs.par_iter()
                .map(|&(d, n)| {
                    let doc = &self.documents[d];
                    let windows = self.windows(d, n)?;
                    let path = self.batch_path(&dir, &doc.id, n);
                    if self.read_batch(&path, &doc.id, n, windows.len()).is_some() {
                        return Ok((true, windows.len(), windows.len()));
                    }
                    let questions = synth.questions(&windows, Some(doc))?;
                    let pairs = synth.qa_pairs(&windows, Some(doc))?;
                    let batch = SynthesisBatch {
                        doc_id: doc.id.clone(),
                        n,
                        questions: questions.iter().map(SynthesisRecord::from).collect(),
                        qa_pairs: pairs.iter().map(SynthesisRecord::from).collect(),
                    };
                    write_json(&path, &batch)?;
                    Ok((false, questions.len(), pairs.len()))
                })
                .collect()
        });
        let mut summary = SynthesisSummary {
            batches: jobs.len(),
            reused: 0,
            questions: 0,
            qa_pairs: 0,
            dir,
        };
        for outcome in outcomes {
            let (reused, q, a) = outcome?;
            summary.reused += reused as usize;
            summary.questions += q;
            summary.qa_pairs += a;
        }
        Ok(summary)
    }

    fn load_batches(&self, n: usize) -> Result<(Vec<SynthesisRecord>, Vec<SynthesisRecord>, Vec<ContextWindow>)> {
        let dir = self.synthesis_dir();
        let mut questions = Vec::new();
        let mut pairs = Vec::new();
        let mut windows = Vec::new();
        for (d, doc) in self.documents.iter().enumerate() {
            let w = self.windows(d, n)?;
            let path = self.batch_path(&dir, &doc.id, n);
            let batch = self.read_batch(&path, &doc.id, n, w.len()).ok_or_else(|| {
                Error::Config(format!(
                    "no synthesis output for `{}` n={n} at {}; run synthesize first",
                    doc.id,
                    path.display()
                ))
            })?;
            questions.extend(batch.questions);
            pairs.extend(batch.qa_pairs);
            windows.extend(w);
        }
        Ok((questions, pairs, windows))
    }

    /// Builds every configured variant from stored synthesis output.
    pub fn run_assemble(&self) -> Result<AssemblySummary> {
        let dir = self.assembly_dir();
        let cap = self.synthesis_settings().answer_word_cap;
        let mut per_n: BTreeMap<Variant, BTreeMap<usize, RepresentationSet>> = BTreeMap::new();
        let mut windows_per_n = BTreeMap::new();
        let wanted = &self.config.variants;
        let needs = |base: Variant, asm: &[Variant]| {
            wanted.contains(&base) || asm.iter().any(|v| wanted.contains(v))
        };
        for n in 1..=self.config.n_max {
            let (q_records, qa_records, windows) = self.load_batches(n)?;
            let questions: Vec<_> = q_records.iter().map(SynthesisRecord::to_question).collect();
            let pairs = qa_records
                .iter()
                .map(|r| r.to_pair(cap))
                .collect::<Result<Vec<_>>>()?;
            let mut built = Vec::new();
            if needs(Variant::Q, &[]) {
                built.push(build_q(&questions)?);
            }
            if needs(Variant::Qc, &[Variant::QcAsm, Variant::QcPairsAsm]) {
                built.push(build_qc(&questions, &windows)?);
            }
            if needs(Variant::Qa, &[Variant::QaAsm]) {
                built.push(build_qa(&pairs)?);
            }
            if needs(Variant::Qca, &[Variant::QcaAsm]) {
                built.push(build_qca(&pairs, &windows)?);
            }
            if needs(Variant::C, &[]) {
                built.push(build_c(&windows)?);
            }
            for set in built {
                per_n.entry(set.variant).or_default().insert(n, set);
            }
            windows_per_n.insert(n, windows);
        }

        let mut sets: Vec<(String, RepresentationSet)> = Vec::new();
        for &variant in wanted {
            let order = self.config.order_for(variant);
            let up_to = order.unwrap_or(self.config.n_max);
            let group = |v: Variant| per_n.get(&v).cloned().unwrap_or_default();
            if variant.is_per_n() {
                for (n, set) in group(variant) {
                    sets.push((set_key(variant, Some(n)), set));
                }
                continue;
            }
            let set = match variant {
                Variant::QcAsm => assemble_qc_articles(&group(Variant::Qc), up_to, None)?,
                Variant::QcPairsAsm => assemble_union_qc(&group(Variant::Qc), up_to)?,
                Variant::QaAsm => assemble_union_qa(&group(Variant::Qa), up_to)?,
                Variant::QcaAsm => assemble_union_qca(&group(Variant::Qca), up_to)?,
                Variant::CAsm => build_c_asm(&windows_per_n, up_to)?,
                Variant::RawArticle => build_raw_articles(&self.documents)?,
                other => unreachable!("{other} is per-n"),
            };
            sets.push((set_key(variant, order), set));
        }

        let mut summary = AssemblySummary {
            sets: BTreeMap::new(),
            dir: dir.clone(),
        };
        for (key, set) in sets {
            let set = set.with_fingerprint(self.fingerprint.clone());
            set.save(&dir.join(format!("{key}.jsonl")))?;
            summary.sets.insert(key, set.len());
        }
        Ok(summary)
    }

    /// Loads a set written by [`Pipeline::run_assemble`].
    pub fn load_set(&self, variant: Variant, order: Option<usize>) -> Result<RepresentationSet> {
        let key = set_key(variant, order);
        let path = self.assembly_dir().join(format!("{key}.jsonl"));
        if !path.exists() {
            return Err(Error::Config(format!(
                "representation set {key} not found at {}; run assemble with it among the variants",
                path.display()
            )));
        }
        RepresentationSet::load(&path)
    }

    pub fn embedder(&self) -> Result<Box<dyn Embedder>> {
        let c = &self.config;
        Ok(match c.embedder {
            EmbedderKind::Hashing => {
                Box::new(HashingEmbedder::new(c.embedding_dimension, c.embedder_max_tokens)?)
            }
            EmbedderKind::Http => {
                let model = c.embedding_model.clone().ok_or_else(|| {
                    Error::Config("embedder = \"http\" needs embedding_model".into())
                })?;
                let mut http = HttpProviderConfig::from_env()?;
                http.retry.max_retries = c.retry_limit;
                http.max_in_flight = c.concurrency;
                Box::new(
                    HttpEmbedder::new(http, model, c.embedding_dimension)
                        .with_max_input_tokens(c.embedder_max_tokens),
                )
            }
        })
    }

    fn bm25_params(&self) -> Bm25Params {
        Bm25Params {
            k1: self.config.k1,
            b: self.config.b,
            stopwords: self.config.stopwords.iter().cloned().collect(),
        }
    }

    /// Builds and saves the configured index type over one set.
    pub fn run_index(&self, variant: Variant, order: Option<usize>) -> Result<IndexSummary> {
        let key = set_key(variant, order);
        let set = self.load_set(variant, order)?;
        let dir = self.index_dir(&key)?;
        match self.config.retriever {
            RetrieverKind::Sparse => build_sparse_index(&set, self.bm25_params()).save(&dir)?,
            RetrieverKind::Dense => build_dense_index(&set, self.embedder()?.as_ref())?.save(&dir)?,
        }
        Ok(IndexSummary {
            key,
            kind: self.config.retriever,
            items: set.len(),
            dir,
        })
    }

    pub fn load_retriever(&self, variant: Variant, order: Option<usize>) -> Result<Retriever> {
        let key = set_key(variant, order);
        let dir = self.index_dir(&key)?;
        if !dir.join("manifest.json").exists() {
            return Err(Error::Config(format!(
                "no {:?} index for {key} at {}; run index first",
                self.config.retriever,
                dir.display()
            )));
        }
        Ok(match self.config.retriever {
            RetrieverKind::Sparse => Retriever::Sparse(SparseIndex::load(&dir)?),
            RetrieverKind::Dense => Retriever::Dense {
                index: DenseIndex::load(&dir)?,
                embedder: self.embedder()?,
            },
        })
    }

    pub fn queries(&self) -> Result<Vec<Query>> {
        let path = self
            .config
            .queries
            .as_ref()
            .ok_or_else(|| Error::Config("no queries file configured".into()))?;
        load_queries(path)
    }

    /// Searches every configured query, collapses hits to documents and
    /// writes a TREC run file.
    pub fn run_search(&self, variant: Variant, order: Option<usize>) -> Result<(Vec<RetrievalResult>, PathBuf)> {
        let key = set_key(variant, order);
        let retriever = self.load_retriever(variant, order)?;
        let results = self
            .queries()?
            .iter()
            .map(|q| Ok(doc_level_collapse(&retriever.search(&q.id, &q.text, self.config.k)?)))
            .collect::<Result<Vec<_>>>()?;
        let path = self.runs_dir()?.join(format!("{key}.trec"));
        let mut body = Vec::new();
        write_run(&mut body, &results, &format!("ski-{key}")).map_err(|e| Error::io(&path, e))?;
        write_atomic(&path, &body)?;
        Ok((results, path))
    }

    fn snippet_source(&self, set: &RepresentationSet) -> SnippetSource {
        let mut source = SnippetSource::new();
        source.add_set(set);
        for (doc, sentences) in self.documents.iter().zip(&self.sentences) {
            source.add_sentences(&doc.id, sentences.clone());
        }
        source
    }

    fn answer_with(
        &self,
        retriever: &Retriever,
        source: &SnippetSource,
        query_id: &str,
        query: &str,
    ) -> Result<RagAnswer> {
        let result = retriever.search(query_id, query, self.config.top_k)?;
        let context = consolidate_snippets(source, &result, self.config.top_k, self.config.budget)?;
        let no_context = context.is_empty();
        let request = CompletionRequest {
            model: self.config.generator_model.clone(),
            system_prompt: String::new(),
            user_prompt: rag_prompt(query, &context.text()),
            temperature: RAG_TEMPERATURE,
            max_tokens: RAG_MAX_TOKENS,
            top_k: Some(RAG_TOP_K),
        };
        let response = self.provider.complete(&request)?;
        Ok(RagAnswer {
            query_id: query_id.to_string(),
            query: query.to_string(),
            answer: response.text,
            context,
            generator_id: response.provider_id,
            no_context,
        })
    }

    /// Retrieval, snippet consolidation and one generator call.
    pub fn run_rag(&self, variant: Variant, order: Option<usize>, query_id: &str, query: &str) -> Result<RagAnswer> {
        let retriever = self.load_retriever(variant, order)?;
        let source = self.snippet_source(&self.load_set(variant, order)?);
        self.answer_with(&retriever, &source, query_id, query)
    }

    /// Answers every configured query and stores the answers as JSONL.
    pub fn run_rag_all(&self, variant: Variant, order: Option<usize>) -> Result<(Vec<RagAnswer>, PathBuf)> {
        let key = set_key(variant, order);
        let retriever = self.load_retriever(variant, order)?;
        let source = self.snippet_source(&self.load_set(variant, order)?);
        let queries = self.queries()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.concurrency)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        let answers = pool.install(|| {
            queries
                .par_iter()
                .map(|q| self.answer_with(&retriever, &source, &q.id, &q.text))
                .collect::<Result<Vec<_>>>()
        })?;
        let path = self.rag_dir()?.join(format!("{key}.jsonl"));
        write_jsonl(&path, &answers)?;
        Ok((answers, path))
    }

    fn metrics_dir(&self) -> Result<PathBuf> {
        let mut d = Digester::new("metrics");
        // The directory name already carries the rag digest; hashing the
        // full path would tie metric dirs to where the work dir lives.
        let rag = self.rag_dir()?;
        let rag_name = rag.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        d.field(&rag_name).field(&self.config.k.to_string());
        for k in &self.config.ks {
            d.field(&k.to_string());
        }
        Ok(self.stage_dir("metrics", &d.finish()))
    }

    /// nDCG@k and Recall@k of the configured queries against the qrels.
    pub fn run_eval_retrieval(&self, variant: Variant, order: Option<usize>) -> Result<MetricsReport> {
        let qrels_path = self
            .config
            .qrels
            .as_ref()
            .ok_or_else(|| Error::Config("no qrels file configured".into()))?;
        let qrels = Qrels::load(qrels_path)?;
        let (results, _) = self.run_search(variant, order)?;
        let report = evaluate_retrieval(&results, &qrels, &self.config.ks)?;
        report.save(&self.metrics_dir()?, &format!("{}-retrieval", set_key(variant, order)))?;
        Ok(report)
    }

    /// Token F1 of RAG answers against the configured gold answers. Uses
    /// stored answers when present, otherwise runs RAG first.
    pub fn run_eval_generation(&self, variant: Variant, order: Option<usize>) -> Result<MetricsReport> {
        let answers_path = self
            .config
            .answers
            .as_ref()
            .ok_or_else(|| Error::Config("no answers file configured".into()))?;
        let golds = load_answers(answers_path)?;
        let key = set_key(variant, order);
        let stored = self.rag_dir()?.join(format!("{key}.jsonl"));
        let answers: Vec<RagAnswer> = if stored.exists() {
            read_jsonl(&stored)?
        } else {
            self.run_rag_all(variant, order)?.0
        };
        let predictions: BTreeMap<String, String> = answers
            .into_iter()
            .map(|a| (a.query_id, a.answer))
            .collect();
        let report = evaluate_generation(&predictions, &golds)?;
        report.save(&self.metrics_dir()?, &format!("{key}-generation"))?;
        Ok(report)
    }

    /// Writes SFT and CPT files for every exportable configured set, plus a
    /// manifest.
    pub fn run_export(&self) -> Result<ExportSummary> {
        let dir = self.export_dir();
        let mut files = Vec::new();
        let mut exported = Vec::new();
        for &variant in &self.config.variants {
            let orders: Vec<Option<usize>> = if variant.is_per_n() {
                (1..=self.config.n_max).map(Some).collect()
            } else {
                vec![self.config.order_for(variant)]
            };
            for order in orders {
                let key = set_key(variant, order);
                let set = self.load_set(variant, order)?;
                let mut any = false;
                if sft_exportable(variant) {
                    let path = dir.join(format!("{key}.sft.json"));
                    export_sft(&set, &path)?;
                    files.push(path);
                    any = true;
                }
                if cpt_exportable(variant) {
                    let path = dir.join(format!("{key}.cpt.jsonl"));
                    export_cpt(&set, &path)?;
                    files.push(path);
                    any = true;
                }
                if any {
                    exported.push((key, set));
                }
            }
        }
        let sets: Vec<&RepresentationSet> = exported.iter().map(|(_, s)| s).collect();
        let templates = [&self.questions_template, &self.qa_template];
        let path = dir.join("manifest.json");
        let mut manifest = export_manifest(&sets, &templates, self.provider.id(), &path)?;
        // Per-n sets share a variant name; record counts by set key instead.
        manifest.counts = exported.iter().map(|(k, s)| (k.clone(), s.len())).collect();
        write_json(&path, &manifest)?;
        files.push(path);
        Ok(ExportSummary { manifest, files })
    }

    /// Every stage in order for the configured search variant. Evaluation
    /// stages run only when their inputs are configured.
    pub fn run_all(&self) -> Result<RunAllSummary> {
        let ingest = self.run_ingest()?;
        let synthesis = self.run_synthesize()?;
        let assembly = self.run_assemble()?;
        let variant = self.config.search_variant();
        let order = self.config.order_for(variant);
        let index = self.run_index(variant, order)?;
        let retrieval = match (&self.config.queries, &self.config.qrels) {
            (Some(_), Some(_)) => Some(self.run_eval_retrieval(variant, order)?),
            _ => None,
        };
        let generation = match (&self.config.queries, &self.config.answers) {
            (Some(_), Some(_)) => {
                self.run_rag_all(variant, order)?;
                Some(self.run_eval_generation(variant, order)?)
            }
            _ => None,
        };
        let export = self.run_export()?;
        Ok(RunAllSummary {
            ingest,
            synthesis,
            assembly,
            index,
            retrieval,
            generation,
            export,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAllSummary {
    pub ingest: IngestSummary,
    pub synthesis: SynthesisSummary,
    pub assembly: AssemblySummary,
    pub index: IndexSummary,
    pub retrieval: Option<MetricsReport>,
    pub generation: Option<MetricsReport>,
    pub export: ExportSummary,
}

fn sft_exportable(v: Variant) -> bool {
    matches!(
        v,
        Variant::Qa | Variant::Qca | Variant::Qc | Variant::QaAsm | Variant::QcaAsm | Variant::QcPairsAsm
    )
}

fn cpt_exportable(v: Variant) -> bool {
    sft_exportable(v) || matches!(v, Variant::C | Variant::CAsm)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rag_prompt_layout() {
        let p = rag_prompt("Who?", "Some context.");
        assert_eq!(
            p,
            format!("{RAG_INSTRUCTION}\n\nContext:\nSome context.\n\nQuestion: Who?\nAnswer:")
        );
        assert_eq!(rag_prompt_context(&p), Some("Some context."));
        assert_eq!(rag_prompt_context(&rag_prompt("Q?", "")), Some(""));
        assert_eq!(rag_prompt_context("other"), None);
    }

    #[test]
    fn set_keys() {
        assert_eq!(set_key(Variant::Qc, Some(2)), "QC-2");
        assert_eq!(set_key(Variant::QcAsm, Some(3)), "QC_ASM-3");
        assert_eq!(set_key(Variant::RawArticle, None), "RAW_ARTICLE");
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let a = WorkDirLock::acquire(dir.path()).unwrap();
        assert!(matches!(WorkDirLock::acquire(dir.path()), Err(Error::Locked(_))));
        drop(a);
        assert!(WorkDirLock::acquire(dir.path()).is_ok());
    }
}
