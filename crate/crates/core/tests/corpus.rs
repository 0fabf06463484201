use std::fs;
use std::path::Path;

use tldr_core::corpus::{prepare_corpus, read_corpus_jsonl, CorpusError, RepairTable, SplitAssignment};

fn doc(id: &str, body: &str) -> String {
    format!("<TEI.2 n=\"{id}\"><teiHeader><title>header {id}</title></teiHeader><text><p>{body}</p></text></TEI.2>")
}

fn write_lang(root: &Path, lang: &str, files: &[(&str, Vec<String>)]) {
    for (name, docs) in files {
        let path = root.join(lang).join(name);
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, format!("<corpus>{}</corpus>", docs.concat())).unwrap();
    }
}

fn toy_corpus(root: &Path) {
    let ids_en: Vec<String> = (0..12).map(|i| format!("D{i:02}")).collect();
    write_lang(
        root,
        "en",
        &[
            ("a.xml", ids_en[..6].iter().map(|id| doc(id, &format!("english {id}"))).collect()),
            ("sub/b.xml", ids_en[6..].iter().map(|id| doc(id, &format!("english {id}"))).collect()),
        ],
    );
    // fr lacks D03, de lacks D07 and has an extra D99
    let fr: Vec<String> = ids_en
        .iter()
        .filter(|id| *id != "D03")
        .map(|id| doc(id, &format!("fran%ccedil;ais {id}")))
        .collect();
    write_lang(root, "fr", &[("fr.xml", fr)]);
    let mut de: Vec<String> = ids_en
        .iter()
        .filter(|id| *id != "D07")
        .map(|id| doc(id, &format!("deutsch   {id} &szlig; %bogus;")))
        .collect();
    de.push(doc("D99", "extra"));
    write_lang(root, "de", &[("de.xml", de)]);
}

fn langs(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

#[test]
fn three_languages_are_aligned_on_the_exact_intersection() {
    let dir = tempfile::tempdir().unwrap();
    toy_corpus(&dir.path().join("corpus"));
    let out = dir.path().join("prepared");
    let summary = prepare_corpus(
        dir.path().join("corpus"),
        &langs(&["en", "fr", "de"]),
        11,
        &out,
        &RepairTable::default(),
    )
    .unwrap();
    assert_eq!(
        summary.parsed,
        vec![("en".into(), 12), ("fr".into(), 11), ("de".into(), 12)]
    );
    assert_eq!(summary.aligned, 10);
    assert_eq!(summary.split, (6, 2, 2));
    assert_eq!(summary.unknown_entities.get("%bogus"), Some(&11));

    let expected: Vec<String> = (0..12)
        .filter(|i| *i != 3 && *i != 7)
        .map(|i| format!("D{i:02}"))
        .collect();
    for lang in ["en", "fr", "de"] {
        let records = read_corpus_jsonl(out.join(format!("{lang}.jsonl"))).unwrap();
        let ids: Vec<&str> = records.iter().map(|r| r.doc_id.as_str()).collect();
        assert_eq!(ids, expected, "{lang}");
        assert!(records.iter().all(|r| r.language == lang));
        assert!(records.iter().all(|r| !r.text.contains("header")));
    }
    let fr = read_corpus_jsonl(out.join("fr.jsonl")).unwrap();
    assert_eq!(fr[0].text, "français D00");
    let de = read_corpus_jsonl(out.join("de.jsonl")).unwrap();
    assert_eq!(de[0].text, "deutsch D00 ß %bogus;");

    let split = SplitAssignment::read(out.join("splits.json")).unwrap();
    assert_eq!(split.seed, 11);
    let mut all: Vec<String> = [split.train.clone(), split.val.clone(), split.test.clone()].concat();
    all.sort();
    assert_eq!(all, expected);
}

#[test]
fn preparation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    toy_corpus(&dir.path().join("corpus"));
    let run = |name: &str| {
        let out = dir.path().join(name);
        prepare_corpus(dir.path().join("corpus"), &langs(&["en", "de"]), 3, &out, &RepairTable::default()).unwrap();
        ["en.jsonl", "de.jsonl", "splits.json"].map(|f| fs::read(out.join(f)).unwrap())
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn missing_language_directory_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    toy_corpus(&dir.path().join("corpus"));
    let err = prepare_corpus(
        dir.path().join("corpus"),
        &langs(&["en", "nl"]),
        1,
        dir.path().join("out"),
        &RepairTable::default(),
    )
    .unwrap_err();
    assert!(matches!(err, CorpusError::MissingLanguageDir { .. }), "{err}");
}

#[test]
fn malformed_xml_reports_its_location() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("corpus");
    toy_corpus(&root);
    fs::write(root.join("fr").join("broken.xml"), "<corpus>\n<TEI.2 n=\"X\"><p>open</q></TEI.2></corpus>").unwrap();
    let err = prepare_corpus(&root, &langs(&["en", "fr"]), 1, dir.path().join("out"), &RepairTable::default())
        .unwrap_err();
    match err {
        CorpusError::Xml { path, line, .. } => {
            assert!(path.ends_with("broken.xml"));
            assert_eq!(line, 2);
        }
        other => panic!("unexpected {other}"),
    }
}
