//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits nonzero when any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};

use tldr_core::corpus::{
    align_languages, make_split, parse_corpus_str, repair_encoding, split_sizes, DocumentRecord, RepairTable,
};
use tldr_core::eval::{evaluate_pair, mate_retrieval_rate, reciprocal_ranks, RetrievalScores, SimilarityMatrix};
use tldr_core::experiment::{aggregate, emit_outputs, run_grid, write_synthetic_workspace, RunOptions};
use tldr_core::linalg::{least_squares, truncated_svd, DenseMatrix};
use tldr_core::mappers::{fit_lca, fit_lcc, fit_nca, MapperModel, Method};
use tldr_core::nn::{FeedForwardNet, TrainConfig};
use tldr_core::rng::SeededRng;
use tldr_core::store::{generate_synthetic_pair, SyntheticSpec};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct Split {
    x_train: DenseMatrix,
    y_train: DenseMatrix,
    x_val: DenseMatrix,
    y_val: DenseMatrix,
    x_test: DenseMatrix,
    y_test: DenseMatrix,
}

fn synthetic_split(spec: &SyntheticSpec) -> Split {
    let pair = generate_synthetic_pair(spec).unwrap();
    let split = make_split(pair.x.doc_ids(), spec.seed).unwrap();
    let rows = |ids: &[String]| (pair.x.rows_for_ids(ids).unwrap(), pair.y.rows_for_ids(ids).unwrap());
    let (x_train, y_train) = rows(&split.train);
    let (x_val, y_val) = rows(&split.val);
    let (x_test, y_test) = rows(&split.test);
    Split {
        x_train,
        y_train,
        x_val,
        y_val,
        x_test,
        y_test,
    }
}

fn scores(model: MapperModel, s: &Split) -> RetrievalScores {
    evaluate_pair(&model, &s.x_test, &s.y_test).unwrap()
}

fn perfect_recovery() -> Outcome {
    let start = Instant::now();
    let s = synthetic_split(&SyntheticSpec::new(600, 64, 768, 0.0, 42));
    let mut parts = vec![format!("test={}", s.x_test.rows())];
    let mut ok = s.x_test.rows() == 120;
    for n_basis in [64, 128, 360] {
        let r = scores(MapperModel::Lca(fit_lca(&s.x_train, &s.y_train, n_basis).unwrap()), &s);
        ok &= r.mate_retrieval_rate >= 0.999 && r.mean_reciprocal_rank >= 0.999;
        parts.push(format!(
            "LCA[{n_basis}] rate={:.4} mrr={:.4}",
            r.mate_retrieval_rate, r.mean_reciprocal_rank
        ));
    }
    let r = scores(MapperModel::Lcc(fit_lcc(&s.x_train, &s.y_train, 64).unwrap()), &s);
    ok &= r.mate_retrieval_rate >= 0.99;
    parts.push(format!("LCC[64] rate={:.4}", r.mate_retrieval_rate));
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(60);
    parts.push(format!("{:.1}s", elapsed.as_secs_f64()));
    check(ok, parts.join(", "))
}

fn noisy_recovery() -> Outcome {
    let (mut lca, mut lcc) = (0.0, 0.0);
    let seeds = 1..=5u64;
    for seed in seeds.clone() {
        let clean = generate_synthetic_pair(&SyntheticSpec::new(600, 64, 768, 0.0, seed)).unwrap();
        let k = clean.x.dim() as f64;
        let mean_norm = (0..clean.x.n_docs())
            .map(|i| clean.x.row(i).iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt())
            .sum::<f64>()
            / clean.x.n_docs() as f64;
        let sigma = 0.01 * mean_norm / k.sqrt();
        let s = synthetic_split(&SyntheticSpec::new(600, 64, 768, sigma, seed));
        lca += scores(MapperModel::Lca(fit_lca(&s.x_train, &s.y_train, 64).unwrap()), &s).mate_retrieval_rate;
        lcc += scores(MapperModel::Lcc(fit_lcc(&s.x_train, &s.y_train, 64).unwrap()), &s).mate_retrieval_rate;
    }
    let n = seeds.count() as f64;
    let (lca, lcc) = (lca / n, lcc / n);
    check(
        lca >= 0.95 && lcc >= 0.95,
        format!("mean over seeds 1..5: LCA[64]={lca:.4} LCC[64]={lcc:.4}"),
    )
}

fn gradient_check() -> f64 {
    let mut rng = SeededRng::new(11);
    let net = FeedForwardNet::glorot(4, 6, 3, &mut rng);
    let x = DenseMatrix::from_fn(5, 4, |_, _| 2.0 * rng.normal());
    let y = DenseMatrix::from_fn(5, 3, |_, _| rng.normal());
    let (_, g) = net.loss_and_gradients(&x, &y, 1.0).unwrap();
    let params = |n: &FeedForwardNet| {
        [
            n.w1().as_slice().to_vec(),
            n.b1().to_vec(),
            n.w2().as_slice().to_vec(),
            n.b2().to_vec(),
        ]
    };
    let rebuild = |p: &[Vec<f64>; 4]| {
        FeedForwardNet::new(
            DenseMatrix::new(6, 4, p[0].clone()).unwrap(),
            p[1].clone(),
            DenseMatrix::new(3, 6, p[2].clone()).unwrap(),
            p[3].clone(),
        )
        .unwrap()
    };
    let analytic = [g.w1.as_slice(), &g.b1, g.w2.as_slice(), &g.b2];
    let base = params(&net);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (block, grads) in analytic.iter().enumerate() {
        for (i, &a) in grads.iter().enumerate() {
            let loss_at = |step: f64| {
                let mut p = base.clone();
                p[block][i] += step;
                rebuild(&p).loss(&x, &y, 1.0).unwrap()
            };
            let numeric = (loss_at(h) - loss_at(-h)) / (2.0 * h);
            worst = worst.max((numeric - a).abs() / (numeric.abs() + a.abs()).max(1e-8));
        }
    }
    worst
}

fn nca_sanity() -> Outcome {
    let grad_err = gradient_check();
    let start = Instant::now();
    let s = synthetic_split(&SyntheticSpec::new(600, 64, 768, 0.0, 42));
    let model = fit_nca(&s.x_train, &s.y_train, &s.x_val, &s.y_val, &TrainConfig::default()).unwrap();
    let r = scores(MapperModel::Nca(model), &s);
    let elapsed = start.elapsed();
    check(
        r.mate_retrieval_rate >= 0.80 && elapsed < Duration::from_secs(300) && grad_err <= 1e-4,
        format!(
            "rate={:.4} mrr={:.4} in {:.1}s, gradient max rel err={grad_err:.2e}",
            r.mate_retrieval_rate,
            r.mean_reciprocal_rank,
            elapsed.as_secs_f64()
        ),
    )
}

fn baseline_separation() -> Outcome {
    let s = synthetic_split(&SyntheticSpec::new(500, 64, 768, 0.0, 42));
    let none = scores(MapperModel::None { input_dim: 768 }, &s);
    let lca = scores(MapperModel::Lca(fit_lca(&s.x_train, &s.y_train, 64).unwrap()), &s);
    check(
        s.x_test.rows() == 100 && none.mate_retrieval_rate <= 0.10 && lca.mate_retrieval_rate > none.mate_retrieval_rate,
        format!(
            "{} test docs: NONE rate={:.4}, LCA rate={:.4}",
            s.x_test.rows(),
            none.mate_retrieval_rate,
            lca.mate_retrieval_rate
        ),
    )
}

/// Independent double-loop oracle: rate with ties to the lowest index, rank
/// counting strictly greater entries, reciprocal sum smallest term first.
fn oracle_metrics(v: &[Vec<f64>]) -> (f64, f64) {
    let n = v.len();
    let mut hits = 0;
    let mut recips = Vec::with_capacity(n);
    for (d, row) in v.iter().enumerate() {
        let mut best = 0;
        for j in 1..n {
            if row[j] > row[best] {
                best = j;
            }
        }
        if best == d {
            hits += 1;
        }
        let rank = 1 + row.iter().filter(|&&x| x > row[d]).count();
        recips.push(rank);
    }
    recips.sort_by(|a, b| b.cmp(a));
    let total: f64 = recips.iter().map(|&r| 1.0 / r as f64).sum();
    (hits as f64 / n as f64, total / n as f64)
}

fn similarity(rows: &[Vec<f64>]) -> SimilarityMatrix {
    SimilarityMatrix::from_values(DenseMatrix::from_rows(rows).unwrap()).unwrap()
}

fn metric_oracles() -> Outcome {
    let mut rng = SeededRng::new(2024);
    let mut mismatches = 0;
    for trial in 0..50 {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| {
                (0..20)
                    .map(|_| {
                        // coarse grid on half the trials to force ties
                        let v = 2.0 * rng.next_f64() - 1.0;
                        if trial % 2 == 0 { (v * 4.0).round() / 4.0 } else { v }
                    })
                    .collect()
            })
            .collect();
        let s = similarity(&rows);
        let (rate, mrr) = oracle_metrics(&rows);
        if mate_retrieval_rate(&s).unwrap() != rate || reciprocal_ranks(&s).unwrap().mean_reciprocal_rank != mrr {
            mismatches += 1;
        }
    }
    let hand = similarity(&[vec![0.5, 0.9, 0.1], vec![0.2, 0.8, 0.1], vec![0.9, 0.2, 0.3]]);
    let rate = mate_retrieval_rate(&hand).unwrap();
    let mrr = reciprocal_ranks(&hand).unwrap().mean_reciprocal_rank;
    check(
        mismatches == 0 && rate == 1.0 / 3.0 && mrr == 2.0 / 3.0,
        format!("50 random 20x20: {mismatches} mismatches; hand matrix rate={rate} mrr={mrr}"),
    )
}

fn linalg_oracles() -> Outcome {
    let mut rng = SeededRng::new(77);
    let mut worst_ls: f64 = 0.0;
    for _ in 0..100 {
        let (m, n) = (10 + rng.below(30) as usize, 2 + rng.below(8) as usize);
        let a = DenseMatrix::from_fn(m, n, |_, _| rng.normal());
        let b: Vec<f64> = (0..m).map(|_| rng.normal()).collect();
        let x = least_squares(&a, &b).unwrap();
        let na = DMatrix::from_row_slice(m, n, a.as_slice());
        let nb = DVector::from_column_slice(&b);
        let reference = (na.transpose() * &na).cholesky().unwrap().solve(&(na.transpose() * nb));
        let diff = x.iter().zip(reference.iter()).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        worst_ls = worst_ls.max(diff / reference.norm());
    }
    let mut worst_svd: f64 = 0.0;
    for _ in 0..20 {
        let a = DenseMatrix::from_fn(20, 10, |_, _| rng.normal());
        let rank = 1 + rng.below(9) as usize;
        let approx = truncated_svd(&a, rank).unwrap().reconstruct();
        let residual = a.sub(&approx).unwrap().frobenius_norm();
        let mut sv: Vec<f64> = DMatrix::from_row_slice(20, 10, a.as_slice()).singular_values().iter().copied().collect();
        sv.sort_by(|p, q| q.total_cmp(p));
        let optimal = sv[rank..].iter().map(|s| s * s).sum::<f64>().sqrt();
        worst_svd = worst_svd.max((residual - optimal).abs() / optimal);
    }
    check(
        worst_ls <= 1e-8 && worst_svd <= 1e-8,
        format!("least squares max rel err={worst_ls:.2e} (100 systems), truncated SVD residual max rel err={worst_svd:.2e} (20 matrices)"),
    )
}

fn metrics_of(rows: &[Vec<f64>]) -> (f64, f64) {
    let s = similarity(rows);
    (
        mate_retrieval_rate(&s).unwrap(),
        reciprocal_ranks(&s).unwrap().mean_reciprocal_rank,
    )
}

fn invariance_suite() -> Outcome {
    let mut runner = TestRunner::new_with_rng(
        PropConfig {
            cases: 256,
            failure_persistence: None,
            ..PropConfig::default()
        },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    let matrix = (2usize..16).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec(-1.0f64..=1.0, n), n),
            prop::collection::vec(0u32..8, n),
            Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
        )
    });
    let metrics = runner.run(&matrix, |(rows, shifts, perm)| {
        let base = metrics_of(&rows);
        // powers of two keep every product exact
        let scaled: Vec<Vec<f64>> = rows
            .iter()
            .zip(&shifts)
            .map(|(r, &s)| r.iter().map(|v| v / f64::from(1u32 << s)).collect())
            .collect();
        prop_assert_eq!(metrics_of(&scaled), base);
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| perm.iter().map(|&j| rows[i][j]).collect()).collect();
        let (rate, mrr) = metrics_of(&permuted);
        prop_assert_eq!(mrr, base.1);
        prop_assert!(base.1 >= base.0);
        prop_assert!(mrr >= rate);
        Ok(())
    });

    // rescaling embedding rows leaves cosine retrieval unchanged
    let s = synthetic_split(&SyntheticSpec::new(200, 8, 32, 0.05, 3));
    let mut rng = SeededRng::new(4);
    let factors: Vec<f64> = (0..s.x_test.rows()).map(|_| 0.1 + 10.0 * rng.next_f64()).collect();
    let scaled = DenseMatrix::from_fn(s.x_test.rows(), s.x_test.cols(), |i, j| factors[i] * s.x_test[(i, j)]);
    let plain = evaluate_pair(&MapperModel::None { input_dim: 32 }, &s.x_test, &s.y_test).unwrap();
    let rescaled = evaluate_pair(&MapperModel::None { input_dim: 32 }, &scaled, &s.y_test).unwrap();
    let embed_ok = plain == rescaled;

    let mut split_failures = 0;
    for draw in 0..1000u64 {
        let mut rng = SeededRng::new(draw);
        let n = 5 + rng.below(400) as usize;
        let seed = rng.next_u64();
        let ids: Vec<String> = (0..n).map(|i| format!("id{i}")).collect();
        let sp = make_split(&ids, seed).unwrap();
        let mut all: Vec<&String> = sp.train.iter().chain(&sp.val).chain(&sp.test).collect();
        all.sort();
        all.dedup();
        let sizes = (sp.train.len(), sp.val.len(), sp.test.len());
        if all.len() != n || sizes != split_sizes(n) || sp != make_split(&ids, seed).unwrap() {
            split_failures += 1;
        }
    }
    check(
        metrics.is_ok() && embed_ok && split_failures == 0,
        format!(
            "metric properties: {}, embedding rescale: {}, split draws failed: {split_failures}/1000",
            match &metrics {
                Ok(()) => "256 cases ok".to_string(),
                Err(e) => e.to_string(),
            },
            if embed_ok { "equal" } else { "differs" }
        ),
    )
}

fn determinism() -> Outcome {
    let spec = SyntheticSpec::new(300, 16, 96, 0.01, 5);
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let ws = write_synthetic_workspace(&spec, dir.path(), Method::ALL.to_vec(), Some(vec![4, 16, 64])).unwrap();
        let out = run_grid(&ws.config, RunOptions::default()).unwrap();
        assert!(out.failures.is_empty(), "{:?}", out.failures);
        let (table, series) = aggregate(&out.reports).unwrap();
        emit_outputs(&table, &series, &out.reports, &ws.config.output_dir).unwrap();
        (fs::read(ws.config.output_dir.join("table.csv")).unwrap(), out.reports.len())
    };
    let (a, n) = run();
    let (b, _) = run();
    check(
        a == b && n == 2 * (3 + 3 + 1 + 1),
        format!("{n} cells, table.csv {} bytes, identical: {}", a.len(), a == b),
    )
}

fn corpus_prep() -> Outcome {
    let mut runner = TestRunner::new_with_rng(
        PropConfig {
            cases: 512,
            failure_persistence: None,
            ..PropConfig::default()
        },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    let text = prop::collection::vec(
        prop_oneof![
            Just("%eacute;".to_string()),
            Just("%szlig".to_string()),
            Just("&Auml;".to_string()),
            Just("%%".to_string()),
            Just("&amp".to_string()),
            "[a-zA-Z%&; ]{0,6}",
            "\\PC{0,4}",
        ],
        0..12,
    )
    .prop_map(|parts| parts.concat());
    let idempotent = runner.run(&text, |raw| {
        let once = repair_encoding(&raw);
        prop_assert_eq!(repair_encoding(&once), once);
        Ok(())
    });

    let table = RepairTable::default();
    let doc = |id: &str| format!("<TEI.2 n=\"{id}\"><p>text {id}</p></TEI.2>");
    let file = |ids: &[&str]| format!("<body>{}</body>", ids.iter().map(|i| doc(i)).collect::<String>());
    let langs: Vec<(String, Vec<DocumentRecord>)> = [
        ("en", vec!["a", "b", "c", "d", "e"]),
        ("fr", vec!["e", "c", "a", "z"]),
        ("ro", vec!["c", "a", "e", "b", "y"]),
    ]
    .into_iter()
    .map(|(l, ids)| (l.to_string(), parse_corpus_str(&file(&ids), l, l, &table).unwrap().records))
    .collect();
    let aligned = align_languages(&langs).unwrap();
    let alignment_ok = aligned.doc_ids() == ["a", "c", "e"];

    let ids: Vec<String> = (0..6538).map(|i| format!("3{i:09}")).collect();
    let sp = make_split(&ids, 0).unwrap();
    let sizes = (sp.train.len(), sp.val.len(), sp.test.len());
    let sizes_ok = sizes == (3922, 1307, 1309) && split_sizes(6538) == sizes;

    check(
        idempotent.is_ok() && alignment_ok && sizes_ok,
        format!(
            "repair idempotence: {}, toy intersection {:?}, 6538-doc split {sizes:?}",
            match &idempotent {
                Ok(()) => "512 cases ok".to_string(),
                Err(e) => e.to_string(),
            },
            aligned.doc_ids()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("synthetic perfect recovery", perfect_recovery),
        ("synthetic noisy recovery", noisy_recovery),
        ("NCA sanity", nca_sanity),
        ("baseline separation", baseline_separation),
        ("metric oracles", metric_oracles),
        ("linear-algebra oracles", linalg_oracles),
        ("invariance suite", invariance_suite),
        ("determinism", determinism),
        ("corpus prep", corpus_prep),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = BTreeMap::new();
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                println!("FAIL  {name}: {detail}");
                failed.insert(name, detail);
            }
        }
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("{} criterion(s) failed", failed.len());
        ExitCode::FAILURE
    }
}
