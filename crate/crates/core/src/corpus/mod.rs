//! Multilingual XML corpus ingestion: parsing, entity repair, cross-language
//! alignment and train/validation/test splits.

mod repair;
mod split;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use quick_xml::escape::resolve_predefined_entity;
use quick_xml::events::{BytesStart, Event};
use quick_xml::{Reader, XmlVersion};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

pub use repair::{repair_encoding, InvalidRepairEntry, RepairTable, MAX_NAME_LEN, MIN_NAME_LEN};
pub use split::{make_split, split_sizes, SplitAssignment, MIN_SPLIT_DOCS};

/// Element names that delimit one document.
pub const DOCUMENT_ELEMENTS: &[&str] = &["TEI.2", "doc", "document"];
/// Attributes tried, in order, for the document id.
pub const ID_ATTRIBUTES: &[&str] = &["n", "id"];
/// Subtree whose text is metadata rather than body text.
pub const HEADER_ELEMENT: &str = "teiHeader";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}:{column}: malformed XML: {message}")]
    Xml {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}:{line}: <{element}> has none of the id attributes {ID_ATTRIBUTES:?}")]
    MissingId { path: String, line: usize, element: String },
    #[error("{path}: no documents found")]
    NoDocuments { path: String },
    #[error("duplicate document id {id:?}{}", language.as_ref().map(|l| format!(" in language {l}")).unwrap_or_default())]
    DuplicateId { language: Option<String>, id: String },
    #[error("alignment needs at least two languages, got {0}")]
    TooFewLanguages(usize),
    #[error("language {0} supplied twice")]
    DuplicateLanguage(String),
    #[error("no document is shared by all languages (per-language counts: {counts})")]
    EmptyIntersection { counts: String },
    #[error("a split needs at least {MIN_SPLIT_DOCS} documents, got {0}")]
    TooFewForSplit(usize),
    #[error("{path}: {message}")]
    Json { path: String, message: String },
    #[error("language directory {0} does not exist")]
    MissingLanguageDir(String),
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// One document in one language. Serializes as a corpus JSONL line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    #[serde(rename = "id")]
    pub doc_id: String,
    #[serde(rename = "lang")]
    pub language: String,
    pub text: String,
}

/// Collapses whitespace runs to single spaces and trims both ends.
pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedFile {
    pub records: Vec<DocumentRecord>,
    /// Entity-like tokens that the repair table did not know.
    pub unknown_entities: BTreeMap<String, usize>,
}

/// Parses one corpus file with the default repair table.
pub fn parse_corpus_file(path: impl AsRef<Path>, language: &str) -> Result<Vec<DocumentRecord>> {
    Ok(parse_corpus_file_with(path, language, &RepairTable::default())?.records)
}

pub fn parse_corpus_file_with(path: impl AsRef<Path>, language: &str, table: &RepairTable) -> Result<ParsedFile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| CorpusError::io(path, e))?;
    let source = String::from_utf8(bytes).map_err(|e| {
        let (line, column) = line_column(&String::from_utf8_lossy(e.as_bytes()), e.utf8_error().valid_up_to());
        CorpusError::Xml {
            path: path.display().to_string(),
            line,
            column,
            message: "invalid UTF-8".into(),
        }
    })?;
    parse_corpus_str(&source, &path.display().to_string(), language, table)
}

struct OpenDocument {
    id: String,
    depth: usize,
    text: String,
}

/// Parses corpus XML held in memory; `origin` labels errors.
pub fn parse_corpus_str(source: &str, origin: &str, language: &str, table: &RepairTable) -> Result<ParsedFile> {
    let mut reader = Reader::from_str(source);
    reader.config_mut().allow_dangling_amp = true;

    let xml_error = |pos: usize, message: String| {
        let (line, column) = line_column(source, pos);
        CorpusError::Xml {
            path: origin.to_string(),
            line,
            column,
            message,
        }
    };

    let mut parsed = ParsedFile::default();
    let mut open: Vec<String> = Vec::new();
    let mut doc: Option<OpenDocument> = None;
    let mut header_depth: Option<usize> = None;

    let finish = |doc: OpenDocument, parsed: &mut ParsedFile| {
        let repaired = table.repair(&doc.text, &mut parsed.unknown_entities);
        parsed.records.push(DocumentRecord {
            doc_id: doc.id,
            language: language.to_string(),
            text: normalize_whitespace(&repaired),
        });
    };

    loop {
        let start_pos = reader.buffer_position() as usize;
        let event = reader
            .read_event()
            .map_err(|e| xml_error(reader.error_position() as usize, e.to_string()))?;
        let in_body = doc.is_some() && header_depth.is_none();
        match event {
            Event::Start(e) => {
                let name = e.name().as_ref().to_string();
                if doc.is_none() && DOCUMENT_ELEMENTS.contains(&name.as_str()) {
                    let id = document_id(&e).map_err(|m| xml_error(start_pos, m))?;
                    let id = id.ok_or_else(|| CorpusError::MissingId {
                        path: origin.to_string(),
                        line: line_column(source, start_pos).0,
                        element: name.clone(),
                    })?;
                    doc = Some(OpenDocument {
                        id,
                        depth: open.len(),
                        text: String::new(),
                    });
                } else if doc.is_some() && header_depth.is_none() && name == HEADER_ELEMENT {
                    header_depth = Some(open.len());
                } else if in_body {
                    push_break(doc.as_mut());
                }
                open.push(name);
            }
            Event::Empty(e) => {
                let name = e.name().as_ref().to_string();
                if doc.is_none() && DOCUMENT_ELEMENTS.contains(&name.as_str()) {
                    let id = document_id(&e).map_err(|m| xml_error(start_pos, m))?;
                    let id = id.ok_or_else(|| CorpusError::MissingId {
                        path: origin.to_string(),
                        line: line_column(source, start_pos).0,
                        element: name.clone(),
                    })?;
                    finish(
                        OpenDocument {
                            id,
                            depth: open.len(),
                            text: String::new(),
                        },
                        &mut parsed,
                    );
                } else if in_body {
                    push_break(doc.as_mut());
                }
            }
            Event::End(_) => {
                open.pop();
                let depth = open.len();
                if header_depth == Some(depth) {
                    header_depth = None;
                } else if doc.as_ref().is_some_and(|d| d.depth == depth) {
                    finish(doc.take().expect("open document"), &mut parsed);
                } else if in_body {
                    push_break(doc.as_mut());
                }
            }
            Event::Text(t) if in_body => {
                doc.as_mut().expect("open document").text.push_str(&t.xml10_content());
            }
            Event::CData(t) if in_body => {
                doc.as_mut().expect("open document").text.push_str(&t.xml10_content());
            }
            Event::GeneralRef(r) if in_body => {
                let text = &mut doc.as_mut().expect("open document").text;
                match r.resolve_char_ref() {
                    Ok(Some(c)) => text.push(c),
                    Ok(None) => match resolve_predefined_entity(&r) {
                        Some(s) => text.push_str(s),
                        None => {
                            text.push('&');
                            text.push_str(&r);
                            text.push(';');
                        }
                    },
                    Err(e) => return Err(xml_error(start_pos, e.to_string())),
                }
            }
            Event::Eof => {
                if let Some(name) = open.last() {
                    return Err(xml_error(source.len(), format!("unexpected end of file inside <{name}>")));
                }
                break;
            }
            _ => {}
        }
    }
    if parsed.records.is_empty() {
        return Err(CorpusError::NoDocuments {
            path: origin.to_string(),
        });
    }
    Ok(parsed)
}

fn push_break(doc: Option<&mut OpenDocument>) {
    if let Some(d) = doc {
        d.text.push(' ');
    }
}

fn document_id(e: &BytesStart<'_>) -> std::result::Result<Option<String>, String> {
    for key in ID_ATTRIBUTES {
        if let Some(attr) = e.try_get_attribute(key).map_err(|err| err.to_string())? {
            let value = attr.normalized_value(XmlVersion::Implicit1_0).map_err(|err| err.to_string())?;
            let value = value.trim();
            if !value.is_empty() {
                return Ok(Some(value.to_string()));
            }
        }
    }
    Ok(None)
}

/// 1-based line and column (in characters) of byte offset `pos`.
fn line_column(source: &str, pos: usize) -> (usize, usize) {
    let mut pos = pos.min(source.len());
    while !source.is_char_boundary(pos) {
        pos -= 1;
    }
    let before = &source[..pos];
    let line = before.matches('\n').count() + 1;
    let line_start = before.rfind('\n').map_or(0, |i| i + 1);
    (line, before[line_start..].chars().count() + 1)
}

/// Documents present in every language, with texts in `doc_ids` order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedCorpus {
    languages: Vec<String>,
    doc_ids: Vec<String>,
    texts: HashMap<String, Vec<String>>,
}

impl AlignedCorpus {
    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn texts(&self, language: &str) -> Option<&[String]> {
        self.texts.get(language).map(Vec::as_slice)
    }

    pub fn text(&self, language: &str, doc_id: &str) -> Option<&str> {
        let i = self.doc_ids.binary_search_by(|d| d.as_str().cmp(doc_id)).ok()?;
        self.texts.get(language).map(|t| t[i].as_str())
    }

    pub fn records(&self, language: &str) -> Option<Vec<DocumentRecord>> {
        let texts = self.texts.get(language)?;
        Some(
            self.doc_ids
                .iter()
                .zip(texts)
                .map(|(id, text)| DocumentRecord {
                    doc_id: id.clone(),
                    language: language.to_string(),
                    text: text.clone(),
                })
                .collect(),
        )
    }
}

/// Keeps the documents whose id occurs in every language; ids come out
/// sorted.
pub fn align_languages(per_language: &[(String, Vec<DocumentRecord>)]) -> Result<AlignedCorpus> {
    if per_language.len() < 2 {
        return Err(CorpusError::TooFewLanguages(per_language.len()));
    }
    let mut by_lang: Vec<HashMap<&str, &str>> = Vec::with_capacity(per_language.len());
    let mut seen_langs = HashSet::new();
    for (lang, records) in per_language {
        if !seen_langs.insert(lang.as_str()) {
            return Err(CorpusError::DuplicateLanguage(lang.clone()));
        }
        let mut map = HashMap::with_capacity(records.len());
        for r in records {
            if map.insert(r.doc_id.as_str(), r.text.as_str()).is_some() {
                return Err(CorpusError::DuplicateId {
                    language: Some(lang.clone()),
                    id: r.doc_id.clone(),
                });
            }
        }
        by_lang.push(map);
    }

    let mut doc_ids: Vec<String> = by_lang[0]
        .keys()
        .filter(|id| by_lang[1..].iter().all(|m| m.contains_key(*id)))
        .map(|id| id.to_string())
        .collect();
    doc_ids.sort();
    if doc_ids.is_empty() {
        let counts = per_language
            .iter()
            .map(|(l, r)| format!("{l}={}", r.len()))
            .collect::<Vec<_>>()
            .join(", ");
        return Err(CorpusError::EmptyIntersection { counts });
    }

    let texts = per_language
        .iter()
        .zip(&by_lang)
        .map(|((lang, _), map)| {
            let t = doc_ids.iter().map(|id| map[id.as_str()].to_string()).collect();
            (lang.clone(), t)
        })
        .collect();
    Ok(AlignedCorpus {
        languages: per_language.iter().map(|(l, _)| l.clone()).collect(),
        doc_ids,
        texts,
    })
}

pub fn write_corpus_jsonl(records: &[DocumentRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(out, "{line}").map_err(|e| CorpusError::io(path, e))?;
    }
    out.flush().map_err(|e| CorpusError::io(path, e))
}

pub fn read_corpus_jsonl(path: impl AsRef<Path>) -> Result<Vec<DocumentRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| CorpusError::Json {
            path: format!("{}:{}", path.display(), i + 1),
            message: e.to_string(),
        })?);
    }
    Ok(records)
}

/// Every `*.xml` file under `dir`, in sorted path order.
pub fn corpus_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut files = Vec::new();
    for entry in WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(dir).to_path_buf();
            CorpusError::io(&path, e.into())
        })?;
        let is_xml = entry.path().extension().is_some_and(|x| x.eq_ignore_ascii_case("xml"));
        if entry.file_type().is_file() && is_xml {
            files.push(entry.into_path());
        }
    }
    Ok(files)
}

/// Parses every XML file under `dir` in parallel and concatenates the
/// records in file order.
pub fn load_language_dir(dir: impl AsRef<Path>, language: &str, table: &RepairTable) -> Result<ParsedFile> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(CorpusError::MissingLanguageDir(dir.display().to_string()));
    }
    let parsed: Vec<ParsedFile> = corpus_files(dir)?
        .par_iter()
        .map(|f| parse_corpus_file_with(f, language, table))
        .collect::<Result<_>>()?;
    let mut all = ParsedFile::default();
    for p in parsed {
        all.records.extend(p.records);
        for (k, v) in p.unknown_entities {
            *all.unknown_entities.entry(k).or_default() += v;
        }
    }
    Ok(all)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepSummary {
    /// Documents parsed per language, in the requested order.
    pub parsed: Vec<(String, usize)>,
    pub aligned: usize,
    pub split: (usize, usize, usize),
    pub unknown_entities: BTreeMap<String, usize>,
}

/// Reads `corpus_dir/<lang>/**/*.xml` for each language, aligns, splits and
/// writes `<lang>.jsonl` files plus `splits.json` into `out_dir`.
pub fn prepare_corpus(
    corpus_dir: impl AsRef<Path>,
    languages: &[String],
    seed: u64,
    out_dir: impl AsRef<Path>,
    table: &RepairTable,
) -> Result<PrepSummary> {
    let corpus_dir = corpus_dir.as_ref();
    let out_dir = out_dir.as_ref();
    let mut per_language = Vec::with_capacity(languages.len());
    let mut unknown = BTreeMap::new();
    for lang in languages {
        let parsed = load_language_dir(corpus_dir.join(lang), lang, table)?;
        for (k, v) in parsed.unknown_entities {
            *unknown.entry(k).or_default() += v;
        }
        per_language.push((lang.clone(), parsed.records));
    }
    if !unknown.is_empty() {
        log::warn!(
            "{} distinct unknown entity-like tokens left unrepaired ({} occurrences)",
            unknown.len(),
            unknown.values().sum::<usize>()
        );
    }
    let corpus = align_languages(&per_language)?;
    let split = make_split(corpus.doc_ids(), seed)?;

    fs::create_dir_all(out_dir).map_err(|e| CorpusError::io(out_dir, e))?;
    for lang in languages {
        let records = corpus.records(lang).expect("aligned language");
        write_corpus_jsonl(&records, out_dir.join(format!("{lang}.jsonl")))?;
    }
    split.write(out_dir.join("splits.json"))?;

    Ok(PrepSummary {
        parsed: per_language.iter().map(|(l, r)| (l.clone(), r.len())).collect(),
        aligned: corpus.len(),
        split: (split.train.len(), split.val.len(), split.test.len()),
        unknown_entities: unknown,
    })
}
