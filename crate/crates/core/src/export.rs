//! Training-file export: instruction records for SFT, plain text records
//! for CPT, and a manifest describing how they were produced.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assembly::{Representation, RepresentationSet, Variant};
use crate::error::{Error, Result};
use crate::synthesis::PromptTemplate;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SFTRecord {
    pub instruction: String,
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CPTRecord {
    pub text: String,
}

fn required<'a>(item: &'a Representation, field: Option<&'a String>, name: &str) -> Result<&'a str> {
    match field {
        Some(v) if !v.trim().is_empty() => Ok(v),
        _ => Err(Error::MissingField {
            id: item.id.clone(),
            message: format!("{} item has no {name}", item.variant),
        }),
    }
}

/// Maps one item to an instruction record. QA puts the answer in `output`,
/// QCA additionally puts the context in `input`, QC puts the context in
/// `output`.
pub fn sft_record(item: &Representation) -> Result<SFTRecord> {
    let question = required(item, item.question.as_ref(), "question")?.to_string();
    let (input, output) = match item.variant {
        Variant::Qa | Variant::QaAsm => (String::new(), required(item, item.answer.as_ref(), "answer")?),
        Variant::Qca | Variant::QcaAsm => (
            required(item, item.context.as_ref(), "context")?.to_string(),
            required(item, item.answer.as_ref(), "answer")?,
        ),
        Variant::Qc | Variant::QcPairsAsm => {
            (String::new(), required(item, item.context.as_ref(), "context")?)
        }
        other => {
            return Err(Error::InvalidArgument(format!("{other} items cannot be exported for SFT")))
        }
    };
    Ok(SFTRecord {
        instruction: question,
        input,
        output: output.to_string(),
    })
}

/// Maps one item to a plain-text record.
pub fn cpt_record(item: &Representation) -> Result<CPTRecord> {
    let text = match item.variant {
        Variant::Qa | Variant::QaAsm | Variant::Qca | Variant::QcaAsm => format!(
            "Question: {}\n\nAnswer: {}",
            required(item, item.question.as_ref(), "question")?,
            required(item, item.answer.as_ref(), "answer")?
        ),
        Variant::Qc | Variant::QcPairsAsm => format!(
            "Question: {}\n\nContext: {}",
            required(item, item.question.as_ref(), "question")?,
            required(item, item.context.as_ref(), "context")?
        ),
        Variant::C | Variant::CAsm => item.text.clone(),
        other => {
            return Err(Error::InvalidArgument(format!("{other} items cannot be exported for CPT")))
        }
    };
    Ok(CPTRecord { text })
}

fn check_variant(set: &RepresentationSet, allowed: &[Variant], what: &str) -> Result<()> {
    if allowed.contains(&set.variant) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{} sets cannot be exported for {what}",
            set.variant
        )))
    }
}

pub fn sft_records(set: &RepresentationSet) -> Result<Vec<SFTRecord>> {
    use Variant::*;
    check_variant(set, &[Qa, Qca, Qc, QaAsm, QcaAsm, QcPairsAsm], "SFT")?;
    set.items.iter().map(sft_record).collect()
}

pub fn cpt_records(set: &RepresentationSet) -> Result<Vec<CPTRecord>> {
    use Variant::*;
    check_variant(set, &[Qa, Qca, Qc, C, CAsm, QaAsm, QcaAsm, QcPairsAsm], "CPT")?;
    set.items.iter().map(cpt_record).collect()
}

/// Writes a pretty-printed JSON array of instruction records. Nothing is
/// written if any item fails to map.
pub fn export_sft(set: &RepresentationSet, path: &Path) -> Result<usize> {
    let records = sft_records(set)?;
    let mut body = serde_json::to_vec_pretty(&records)?;
    body.push(b'\n');
    write_file(path, &body)?;
    Ok(records.len())
}

/// Writes one `{"text": ...}` object per line.
pub fn export_cpt(set: &RepresentationSet, path: &Path) -> Result<usize> {
    let records = cpt_records(set)?;
    let mut body = Vec::new();
    for r in &records {
        serde_json::to_writer(&mut body, r)?;
        body.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    write_file(path, &body)?;
    Ok(records.len())
}

fn write_file(path: &Path, body: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub corpus_fingerprint: String,
    pub provider_id: String,
    /// Template name to digest.
    pub template_digests: BTreeMap<String, String>,
    /// Variant name to item count.
    pub counts: BTreeMap<String, usize>,
}

/// Records counts, corpus fingerprint, template digests and provider id for
/// a group of exported sets, and writes them as JSON to `path`.
pub fn export_manifest(
    sets: &[&RepresentationSet],
    templates: &[&PromptTemplate],
    provider_id: &str,
    path: &Path,
) -> Result<ExportManifest> {
    let mut fingerprint: Option<&str> = None;
    for set in sets.iter().filter(|s| !s.corpus_fingerprint.is_empty()) {
        match fingerprint {
            Some(f) if f != set.corpus_fingerprint => {
                return Err(Error::Invariant(format!(
                    "sets come from different corpora ({f} vs {})",
                    set.corpus_fingerprint
                )))
            }
            _ => fingerprint = Some(&set.corpus_fingerprint),
        }
    }
    let manifest = ExportManifest {
        corpus_fingerprint: fingerprint.unwrap_or_default().to_string(),
        provider_id: provider_id.to_string(),
        template_digests: templates
            .iter()
            .map(|t| (t.name().as_str().to_string(), t.digest()))
            .collect(),
        counts: sets
            .iter()
            .map(|s| (s.variant.as_str().to_string(), s.len()))
            .collect(),
    };
    let mut body = serde_json::to_vec_pretty(&manifest)?;
    body.push(b'\n');
    write_file(path, &body)?;
    Ok(manifest)
}
