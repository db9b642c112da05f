//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.
//!
//! Criteria that need the full `r8` and `webkb` files look for them in
//! `$VSMQUANT_DATA`, then `$VSMQUANT_CACHE`, then the workspace `data/`
//! directory.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vsmquant::classify::linear::{linear_fit, BinaryProblem, LinearConfig, LinearKind};
use vsmquant::classify::{knn_fit, knn_predict, knn_predict_exhaustive, ClassifierKind};
use vsmquant::corpus::{load_corpus, make_folds, parse_corpus, Corpus, CorpusFormat, FoldPlan};
use vsmquant::eval::{
    compute_metrics, error_reduction, run_cv, ConfusionMatrix, ExperimentReport, PipelineConfig,
    Variant,
};
use vsmquant::lsa::fit_svd;
use vsmquant::quant::{
    dequantize_value, quantize_value, Bitwidth, QuantizedMatrix, PACKED_HEADER_LEN,
};
use vsmquant::vsm::IdfMode;
use vsmquant::{DenseMatrix, Features, SparseMatrix};

type Outcome = Result<String, String>;

fn workspace_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn mini() -> Corpus {
    parse_corpus(include_str!("../../../data/mini8.txt")).unwrap()
}

fn find_dataset(file: &str) -> Option<PathBuf> {
    let mut dirs: Vec<PathBuf> = ["VSMQUANT_DATA", "VSMQUANT_CACHE"]
        .iter()
        .filter_map(|v| std::env::var_os(v).map(PathBuf::from))
        .collect();
    dirs.push(workspace_dir().join("data"));
    dirs.into_iter().map(|d| d.join(file)).find(|p| p.is_file())
}

fn dataset(name: &str) -> Result<Corpus, String> {
    let file = format!("{name}-stemmed.txt");
    let path = find_dataset(&file).ok_or_else(|| {
        format!("dataset {file} not found (set VSMQUANT_DATA or run `vsmquant fetch`)")
    })?;
    load_corpus(&path, CorpusFormat::CachopoLines).map_err(|e| format!("{}: {e}", path.display()))
}

fn cv(corpus: &Corpus, config: &PipelineConfig, folds: &FoldPlan) -> Result<ExperimentReport, String> {
    run_cv(corpus, config, folds).map_err(|e| format!("{:?} {}: {e}", config.variant, config.classifier))
}

fn quantizer_bound() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut xs: Vec<f64> = (0..100_000).map(|_| rng.random_range(0.0..=1.0)).collect();
    xs.extend([0.0, 1.0]);
    xs.sort_by(f64::total_cmp);
    for bits in 1..=16 {
        let b = Bitwidth::new(bits).unwrap();
        let step = 1.0 / b.max_value() as f64;
        let mut prev = 0;
        for &x in &xs {
            let q = quantize_value(x, b);
            let d = dequantize_value(q, b) - x;
            if !(0.0..step).contains(&d) {
                return Err(format!("b={bits} x={x}: overshoot {d} outside [0, {step})"));
            }
            if q < prev {
                return Err(format!("b={bits} x={x}: not monotone"));
            }
            if quantize_value(dequantize_value(q, b), b) != q {
                return Err(format!("b={bits} x={x}: not idempotent"));
            }
            prev = q;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 5.0 {
        return Err(format!("took {secs:.2} s"));
    }
    Ok(format!("{} values x 16 widths in {secs:.2} s", xs.len()))
}

/// Fold-by-fold prediction equality between variant 1 and variant 2 at 16 bits.
fn sixteen_bit_identical(corpus: &Corpus) -> Result<usize, String> {
    let folds = make_folds(corpus, 5, 0).map_err(|e| e.to_string())?;
    let mut compared = 0;
    for clf in ClassifierKind::ALL {
        let base = cv(corpus, &PipelineConfig::new(Variant::Tfidf, clf), &folds)?;
        let q = cv(corpus, &PipelineConfig::new(Variant::Quant, clf).with_bits(16), &folds)?;
        for (a, b) in base.folds.iter().zip(&q.folds) {
            if a.predictions != b.predictions {
                let diff = a.predictions.iter().zip(&b.predictions).filter(|(x, y)| x != y).count();
                return Err(format!("{clf} fold {}: {diff} predictions differ", a.fold));
            }
            compared += 1;
        }
    }
    Ok(compared)
}

fn sixteen_bit_lossless() -> Outcome {
    let on_mini = sixteen_bit_identical(&mini()).map_err(|e| format!("mini8: {e}"))?;
    let r8 = dataset("r8").map_err(|e| format!("mini8 identical on {on_mini} runs; r8: {e}"))?;
    let on_r8 = sixteen_bit_identical(&r8).map_err(|e| format!("r8: {e}"))?;
    Ok(format!("identical on mini8 ({on_mini} runs) and r8 ({on_r8} runs)"))
}

fn four_bit_safe() -> Outcome {
    let mut lines = Vec::new();
    for name in ["webkb", "r8"] {
        let corpus = dataset(name)?;
        let folds = make_folds(&corpus, 5, 0).map_err(|e| e.to_string())?;
        for clf in ClassifierKind::ALL {
            let base = cv(&corpus, &PipelineConfig::new(Variant::Tfidf, clf), &folds)?;
            let q = cv(&corpus, &PipelineConfig::new(Variant::Quant, clf).with_bits(4), &folds)?;
            let (f1, f4) = (base.mean.macro_f1, q.mean.macro_f1);
            if f4 < f1 - 0.01 {
                return Err(format!("{name} {clf}: b=4 {f4:.4} < tfidf {f1:.4} - 0.01"));
            }
            lines.push(format!("{name}/{clf} {f1:.4}->{f4:.4}"));
        }
    }
    Ok(lines.join(", "))
}

fn table_reproduction() -> Outcome {
    let r8 = dataset("r8")?;
    let webkb = dataset("webkb")?;
    let mut svm = PipelineConfig::new(Variant::Tfidf, ClassifierKind::Svm);
    svm.idf_mode = IdfMode::Smoothed;
    let mut lr = PipelineConfig::new(Variant::Tfidf, ClassifierKind::Logistic);
    lr.idf_mode = IdfMode::Smoothed;
    let acc = 100.0 * cv(&r8, &svm, &make_folds(&r8, 5, 0).unwrap())?.mean.micro_accuracy;
    let f1 = 100.0 * cv(&webkb, &lr, &make_folds(&webkb, 5, 0).unwrap())?.mean.macro_f1;
    let detail = format!("r8 svm micro {acc:.2} (97.69 +- 2.0), webkb logistic macro {f1:.2} (92.44 +- 3.0)");
    if (acc - 97.69).abs() <= 2.0 && (f1 - 92.44).abs() <= 3.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn quantize_before_svd() -> Outcome {
    let corpus = dataset("webkb")?;
    let folds = make_folds(&corpus, 5, 0).map_err(|e| e.to_string())?;
    let bits = [16, 8, 7, 6, 5, 4, 3, 2, 1];
    let k = 100;
    let mut reductions = Vec::new();
    let mut lines = Vec::new();
    for clf in ClassifierKind::ALL {
        let svd = cv(&corpus, &PipelineConfig::new(Variant::Svd, clf).with_k(k), &folds)?;
        let mut best = f64::NEG_INFINITY;
        for b in bits {
            let before = PipelineConfig::new(Variant::QuantSvd, clf).with_bits(b).with_k(k);
            best = best.max(cv(&corpus, &before, &folds)?.mean.macro_f1);
            let after = PipelineConfig::new(Variant::SvdQuant, clf).with_bits(b).with_k(k);
            let after = cv(&corpus, &after, &folds)?;
            reductions.push(error_reduction(svd.mean.error, after.mean.error).map_err(|e| e.to_string())?);
        }
        if best < svd.mean.macro_f1 {
            return Err(format!("{clf}: best quant-svd {best:.4} < svd {:.4}", svd.mean.macro_f1));
        }
        lines.push(format!("{clf} {:.4}<={best:.4}", svd.mean.macro_f1));
    }
    let mean = reductions.iter().sum::<f64>() / reductions.len() as f64;
    if mean > 0.0 {
        return Err(format!("svd-quant mean error reduction {mean:.4} > 0"));
    }
    Ok(format!("{}; svd-quant mean error reduction {mean:.4}", lines.join(", ")))
}

fn svd_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_err: f64 = 0.0;
    let mut worst_orth: f64 = 0.0;
    for trial in 0..50 {
        let m = rng.random_range(2..=20);
        let n = rng.random_range(2..=20);
        let rows: Vec<Vec<(u32, f64)>> = (0..m)
            .map(|_| {
                (0..n as u32)
                    .filter_map(|j| rng.random_bool(0.6).then(|| (j, rng.random_range(0.0..1.0))))
                    .collect()
            })
            .collect();
        let a = SparseMatrix::from_rows(n, &rows);
        let dense = a.to_dense();
        let oracle = DMatrix::from_row_slice(m, n, dense.as_slice()).singular_values();
        let mut sigma: Vec<f64> = oracle.iter().copied().collect();
        sigma.sort_by(|x, y| y.total_cmp(x));
        let rank = sigma.iter().filter(|&&s| s > 1e-10 * sigma[0].max(1.0)).count();
        if rank == 0 {
            continue;
        }
        let k = rng.random_range(1..=rank);
        let model = fit_svd(&a, k).map_err(|e| format!("trial {trial}: {e}"))?;
        let v = model.components();
        let z = model.project(&a).unwrap();
        let mut err = 0.0;
        for i in 0..m {
            for j in 0..n {
                let r: f64 = (0..k).map(|c| z.get(i, c) * v.get(c, j)).sum();
                err += (dense.get(i, j) - r).powi(2);
            }
        }
        let discarded: f64 = sigma[k..].iter().map(|s| s * s).sum();
        let total: f64 = sigma.iter().map(|s| s * s).sum();
        let rel = (err - discarded).abs() / discarded.max(1e-12 * total);
        worst_err = worst_err.max(rel);
        for p in 0..k {
            for q in 0..k {
                let dot: f64 = (0..n).map(|j| v.get(p, j) * v.get(q, j)).sum();
                worst_orth = worst_orth.max((dot - if p == q { 1.0 } else { 0.0 }).abs());
            }
        }
        if rel > 1e-8 || worst_orth > 1e-8 {
            return Err(format!(
                "trial {trial} ({m}x{n}, k={k}): reconstruction rel {rel:e}, orthonormality {worst_orth:e}"
            ));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 10.0 {
        return Err(format!("took {secs:.2} s"));
    }
    Ok(format!("worst reconstruction rel {worst_err:.1e}, orthonormality {worst_orth:.1e}, {secs:.2} s"))
}

fn brute_force_metrics(truth: &[usize], pred: &[usize], n_classes: usize) -> (Vec<f64>, f64, f64) {
    let mut f1s = Vec::new();
    let mut present = Vec::new();
    for c in 0..n_classes {
        let tp = truth.iter().zip(pred).filter(|(t, p)| **t == c && **p == c).count();
        let fp = truth.iter().zip(pred).filter(|(t, p)| **t != c && **p == c).count();
        let fn_ = truth.iter().zip(pred).filter(|(t, p)| **t == c && **p != c).count();
        let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        f1s.push(f1);
        if truth.contains(&c) {
            present.push(f1);
        }
    }
    let macro_f1 = present.iter().sum::<f64>() / present.len() as f64;
    let correct = truth.iter().zip(pred).filter(|(t, p)| t == p).count();
    (f1s, macro_f1, correct as f64 / truth.len() as f64)
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut zero_division = 0;
    for case in 0..1000 {
        let n_classes = rng.random_range(1..=10);
        let n = rng.random_range(1..=200);
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..n_classes)).collect();
        let pred: Vec<usize> = truth
            .iter()
            .map(|&t| if rng.random_bool(0.5) { t } else { rng.random_range(0..n_classes) })
            .collect();
        let cm = ConfusionMatrix::from_predictions(&truth, &pred, n_classes).map_err(|e| e.to_string())?;
        let m = compute_metrics(&cm).map_err(|e| e.to_string())?;
        let (f1s, macro_f1, micro) = brute_force_metrics(&truth, &pred, n_classes);
        let got: Vec<f64> = m.per_class.iter().map(|c| c.f1).collect();
        if got != f1s || m.macro_f1 != macro_f1 || m.micro_accuracy != micro {
            return Err(format!("case {case}: metrics differ from recount"));
        }
        zero_division += (0..n_classes).filter(|c| !pred.contains(c)).count();
    }
    Ok(format!("1000 cases exact, {zero_division} empty-prediction classes"))
}

fn linear_numerics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_fd: f64 = 0.0;
    for trial in 0..100 {
        let x = Features::Dense(DenseMatrix::from_fn(5, 4, |_, _| rng.random_range(-1.0..1.0)));
        let problem = BinaryProblem {
            x: &x,
            y: (0..5).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect(),
            omega: (0..5).map(|_| rng.random_range(0.5..3.0)).collect(),
            lambda: rng.random_range(0.1..2.0),
        };
        let params: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (_, grad) = problem.logistic_value_and_gradient(&params);
        let h = 1e-6;
        let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(1e-12);
        for j in 0..params.len() {
            let mut p = params.clone();
            p[j] += h;
            let fp = problem.logistic_value_and_gradient(&p).0;
            p[j] -= 2.0 * h;
            let fm = problem.logistic_value_and_gradient(&p).0;
            let rel = ((fp - fm) / (2.0 * h) - grad[j]).abs() / scale;
            worst_fd = worst_fd.max(rel);
            if rel > 1e-5 {
                return Err(format!("trial {trial} coordinate {j}: relative gradient error {rel:e}"));
            }
        }
    }
    let mut epochs = 0;
    for trial in 0..30 {
        let n = rng.random_range(6..40);
        let f = rng.random_range(2..8);
        let x = Features::Dense(DenseMatrix::from_fn(n, f, |_, _| rng.random_range(-1.0..1.0)));
        let labels: Vec<usize> = (0..n).map(|i| (i + trial) % 3).collect();
        for kind in [LinearKind::Logistic, LinearKind::Svm] {
            let config = LinearConfig {
                kind,
                class_weighting: trial % 2 == 1,
                seed: trial as u64,
                ..LinearConfig::default()
            };
            let (_, report) = linear_fit(&x, &labels, 3, &config).map_err(|e| e.to_string())?;
            for c in &report.classes {
                epochs += c.trace.len();
                if let Some(w) = c.trace.windows(2).find(|w| w[1] > w[0] + 1e-12) {
                    return Err(format!("{kind:?} trial {trial} class {}: {} -> {}", c.class, w[0], w[1]));
                }
            }
        }
    }
    Ok(format!("worst gradient error {worst_fd:.1e}, {epochs} monotone epochs"))
}

fn knn_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut queries = 0;
    for problem in 0..200 {
        let n = rng.random_range(1..=50);
        let f = rng.random_range(1..=6);
        let n_classes = rng.random_range(1..=4);
        // small integer weights force similarity and vote ties
        let row = |rng: &mut ChaCha8Rng| -> Vec<(u32, f64)> {
            (0..f as u32)
                .filter_map(|j| rng.random_bool(0.5).then(|| (j, rng.random_range(1..=2) as f64)))
                .collect()
        };
        let train: Vec<_> = (0..n).map(|_| row(&mut rng)).collect();
        let test: Vec<_> = (0..rng.random_range(1..=20)).map(|_| row(&mut rng)).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..n_classes)).collect();
        let n_classes = labels.iter().max().unwrap() + 1;
        let train = SparseMatrix::from_rows(f, &train);
        let test = SparseMatrix::from_rows(f, &test);
        queries += test.n_rows();
        for k in [1, 5] {
            for dense in [false, true] {
                let (tr, te) = if dense {
                    (Features::Dense(train.to_dense()), Features::Dense(test.to_dense()))
                } else {
                    (Features::Sparse(train.clone()), Features::Sparse(test.clone()))
                };
                let model = knn_fit(tr, &labels, n_classes, k).map_err(|e| e.to_string())?;
                let fast = knn_predict(&model, &te).map_err(|e| e.to_string())?;
                let slow = knn_predict_exhaustive(&model, &te).map_err(|e| e.to_string())?;
                if fast != slow {
                    return Err(format!("problem {problem} k={k} dense={dense}: predictions differ"));
                }
            }
        }
    }
    Ok(format!("200 problems, {queries} queries, k in {{1, 5}}, sparse and dense"))
}

fn pack_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut total_entries = 0;
    for case in 0..1000 {
        let bits = (case % 16) as u32 + 1;
        let b = Bitwidth::new(bits).unwrap();
        let n_rows = rng.random_range(0..=30);
        let n_cols = rng.random_range(1..=40usize);
        let density = rng.random_range(0.0..1.0);
        let rows: Vec<Vec<(u32, u64)>> = (0..n_rows)
            .map(|_| {
                (0..n_cols as u32)
                    .filter_map(|c| {
                        rng.random_bool(density).then(|| (c, rng.random_range(0..=b.max_value())))
                    })
                    .collect()
            })
            .collect();
        let qm = QuantizedMatrix::from_rows(b, n_cols, &rows).map_err(|e| e.to_string())?;
        let bytes = qm.pack();
        let entries = qm.entry_count();
        total_entries += entries;
        let payload = (entries * bits as usize).div_ceil(8);
        let structure = 4 * n_rows + 4 * entries;
        if bytes.len() != PACKED_HEADER_LEN + structure + payload {
            return Err(format!(
                "case {case}: {} bytes, expected header {PACKED_HEADER_LEN} + structure {structure} + payload {payload}",
                bytes.len()
            ));
        }
        if qm.codes().to_le_bytes().len() != payload {
            return Err(format!("case {case}: code payload is not ceil(entries*b/8)"));
        }
        let back = QuantizedMatrix::unpack(&bytes).map_err(|e| format!("case {case}: {e}"))?;
        if back != qm || back.pack() != bytes {
            return Err(format!("case {case}: round trip differs"));
        }
    }
    Ok(format!("1000 matrices, {total_entries} codes, b in 1..=16"))
}

const SWEEP_MANIFEST: &str = r#"{
  "datasets": { "mini8": { "path": "mini8.txt", "documents": 480, "classes": 8 } },
  "grid": {
    "variants": ["tfidf", "quant", "quant-svd", "svd", "svd-quant"],
    "classifiers": ["knn1", "knn5", "logistic", "svm"],
    "bits": [4, 1],
    "ks": [20]
  },
  "seeds": [0, 1],
  "n_folds": 5
}"#;

/// Columns other than the two timing columns.
fn metric_columns(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| l.split(',').take(10).collect::<Vec<_>>().join(","))
        .collect()
}

fn sweep_once(dir: &Path) -> Result<String, String> {
    let out = dir.join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_vsmquant"))
        .arg("sweep")
        .arg("--manifest")
        .arg(dir.join("manifest.json"))
        .arg("--out")
        .arg(&out)
        .arg("--jobs")
        .arg("2")
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(format!(
            "sweep exited with {}: {}",
            status.status,
            String::from_utf8_lossy(&status.stderr)
        ));
    }
    std::fs::read_to_string(out.join("sweep.csv")).map_err(|e| e.to_string())
}

fn end_to_end_determinism() -> Outcome {
    let mut runs = Vec::new();
    let mut dirs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        std::fs::write(dir.path().join("manifest.json"), SWEEP_MANIFEST).unwrap();
        std::fs::copy(workspace_dir().join("data/mini8.txt"), dir.path().join("mini8.txt"))
            .map_err(|e| e.to_string())?;
        runs.push(sweep_once(dir.path())?);
        dirs.push(dir);
    }
    let (a, b) = (metric_columns(&runs[0]), metric_columns(&runs[1]));
    if a.len() < 2 {
        return Err("sweep produced no rows".into());
    }
    if a != b {
        let line = a.iter().zip(&b).position(|(x, y)| x != y).unwrap_or(a.len().min(b.len()));
        return Err(format!("metric columns differ at line {}", line + 1));
    }
    Ok(format!("{} rows byte-identical across two fresh sweeps", a.len() - 1))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("quantizer bound", quantizer_bound),
        ("16-bit losslessness", sixteen_bit_lossless),
        ("4-bit safety", four_bit_safe),
        ("table reproduction", table_reproduction),
        ("quantize-before-svd dominance", quantize_before_svd),
        ("svd oracle", svd_oracle),
        ("metric oracle", metric_oracle),
        ("linear numerics", linear_numerics),
        ("knn oracle", knn_oracle),
        ("pack round trip", pack_round_trip),
        ("end-to-end determinism", end_to_end_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| (*s).to_owned()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} [{secs:.1} s]: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} [{secs:.1} s]: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
