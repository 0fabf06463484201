use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tldr_core::eval::RetrievalReport;
use tldr_core::mappers::Method;
use tldr_core::store::read_embeddings;

fn tldr(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tldr"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn synth(dir: &Path) {
    ok(&tldr(
        &[
            "synth", "--docs", "150", "--latent-dim", "8", "--embed-dim", "32", "--seed", "3", "--out-x",
            "en.tldr", "--out-y", "fr.tldr", "--lang-x", "en", "--lang-y", "fr", "--split-out", "splits.json",
        ],
        dir,
    ));
}

#[test]
fn synth_fit_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    let en = read_embeddings(d.join("en.tldr")).unwrap();
    assert_eq!((en.n_docs(), en.dim(), en.language()), (150, 32, "en"));

    for (method, dim) in [("lca", Some("16")), ("lcc", Some("8")), ("none", None)] {
        let model = format!("{method}.tldm");
        let mut args = vec![
            "fit", "--method", method, "--source", "en.tldr", "--target", "fr.tldr", "--split", "splits.json",
            "--model-out", &model,
        ];
        if let Some(dim) = dim {
            args.extend(["--dim", dim]);
        }
        ok(&tldr(&args, d));
        let report_path = format!("{method}.json");
        let stdout = ok(&tldr(
            &[
                "eval", "--model", &model, "--source", "en.tldr", "--target", "fr.tldr", "--split", "splits.json",
                "--report", &report_path,
            ],
            d,
        ));
        assert!(stdout.contains("mate retrieval rate"));
        let report: RetrievalReport = serde_json::from_str(&fs::read_to_string(d.join(&report_path)).unwrap()).unwrap();
        assert_eq!(report.pair, ("en".to_string(), "fr".to_string()));
        assert_eq!(report.method, method.parse::<Method>().unwrap());
        assert_eq!(report.dim, dim.map(|s| s.parse().unwrap()));
        assert_eq!(report.n_queries, 30);
        match method {
            "lca" => assert_eq!(report.mate_retrieval_rate, 1.0),
            "lcc" => assert!(report.mate_retrieval_rate >= 0.8, "{}", report.mate_retrieval_rate),
            _ => assert!(report.mate_retrieval_rate < 0.5, "{}", report.mate_retrieval_rate),
        }
    }
}

#[test]
fn fit_requires_a_dimension_for_linear_methods() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let out = tldr(
        &["fit", "--method", "lcc", "--source", "en.tldr", "--target", "fr.tldr", "--split", "splits.json", "--model-out", "m"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--dim"));
}

fn write_config(dir: &Path, dims: &str) {
    let config = format!(
        r#"{{
  "languages": ["en", "fr"],
  "embedding_files": {{"synthetic": {{"en": "en.tldr", "fr": "fr.tldr"}}}},
  "methods": ["lca", "lcc", "none"],
  "dims": {dims},
  "split_path": "splits.json",
  "output_dir": "out"
}}"#
    );
    fs::write(dir.join("experiment.json"), config).unwrap();
}

#[test]
fn sweep_writes_tables_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    write_config(d, "[4, 8]");
    let stdout = ok(&tldr(&["sweep", "--config", "experiment.json", "--workers", "2"], d));
    assert!(stdout.contains("10 cells: 10 computed, 0 reused, 0 failed"), "{stdout}");
    let table = fs::read_to_string(d.join("out/table.csv")).unwrap();
    assert_eq!(table.lines().next(), Some("model,mapping,mrr,mate_rate"));
    assert_eq!(table.lines().count(), 4);
    let sweep = fs::read_to_string(d.join("out/sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 3 * 2);

    let stdout = ok(&tldr(&["sweep", "--config", "experiment.json"], d));
    assert!(stdout.contains("0 computed, 10 reused"), "{stdout}");
    let stdout = ok(&tldr(&["sweep", "--config", "experiment.json", "--force"], d));
    assert!(stdout.contains("10 computed, 0 reused"), "{stdout}");
    assert_eq!(fs::read_to_string(d.join("out/table.csv")).unwrap(), table);
}

#[test]
fn sweep_exits_nonzero_when_a_cell_fails() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    write_config(d, "[4, 5000]");
    let out = tldr(&["sweep", "--config", "experiment.json"], d);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("dim=5000"), "{stderr}");
    assert!(d.join("out/table.csv").exists());
}

#[test]
fn prep_writes_aligned_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for (lang, ids) in [("en", ["a", "b", "c", "d", "e", "f"]), ("ro", ["f", "e", "d", "c", "b", "a"])] {
        fs::create_dir_all(d.join("corpus").join(lang)).unwrap();
        let docs: String = ids
            .iter()
            .map(|id| format!("<TEI.2 n=\"{id}\"><p>{lang} %icirc; {id}</p></TEI.2>"))
            .collect();
        fs::write(d.join("corpus").join(lang).join("part.xml"), format!("<c>{docs}</c>")).unwrap();
    }
    let stdout = ok(&tldr(
        &["prep", "--corpus-dir", "corpus", "--languages", "en,ro", "--seed", "5", "--out-dir", "prepared"],
        d,
    ));
    assert!(stdout.contains("aligned 6 documents; split train=3 val=1 test=2"), "{stdout}");
    let ro = fs::read_to_string(d.join("prepared/ro.jsonl")).unwrap();
    assert_eq!(ro.lines().next(), Some(r#"{"id":"a","lang":"ro","text":"ro î a"}"#));
    assert!(d.join("prepared/splits.json").exists());
}
