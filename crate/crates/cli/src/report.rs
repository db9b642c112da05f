//! Tables and charts built from a result store.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use vsmquant::classify::ClassifierKind;
use vsmquant::eval::{error_reduction, mean_std, write_atomic, ExperimentReport, Variant};

use crate::svg::{bar_chart, line_chart, Chart, Series};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Key {
    variant: Variant,
    classifier: ClassifierKind,
    bits: Option<u32>,
    k: Option<usize>,
}

/// Fold-mean scores, averaged again over seeds.
#[derive(Debug, Clone, Copy, Default)]
struct Cell {
    macro_f1: f64,
    micro_accuracy: f64,
    train_s: f64,
    test_s: f64,
}

impl Cell {
    fn macro_error(&self) -> f64 {
        1.0 - self.macro_f1
    }

    fn micro_error(&self) -> f64 {
        1.0 - self.micro_accuracy
    }
}

type Table = BTreeMap<String, BTreeMap<Key, Cell>>;

fn aggregate(reports: &[&ExperimentReport]) -> Table {
    let mut sums: BTreeMap<String, BTreeMap<Key, (Cell, usize)>> = BTreeMap::new();
    for r in reports {
        let c = &r.config;
        let key = Key {
            variant: c.variant,
            classifier: c.classifier,
            bits: c.bits,
            k: c.k,
        };
        let (cell, n) = sums
            .entry(r.dataset.clone())
            .or_default()
            .entry(key)
            .or_default();
        cell.macro_f1 += r.mean.macro_f1;
        cell.micro_accuracy += r.mean.micro_accuracy;
        cell.train_s += r.mean.train_seconds;
        cell.test_s += r.mean.test_seconds;
        *n += 1;
    }
    sums.into_iter()
        .map(|(d, cells)| {
            let cells = cells
                .into_iter()
                .map(|(k, (c, n))| {
                    let n = n as f64;
                    (
                        k,
                        Cell {
                            macro_f1: c.macro_f1 / n,
                            micro_accuracy: c.micro_accuracy / n,
                            train_s: c.train_s / n,
                            test_s: c.test_s / n,
                        },
                    )
                })
                .collect();
            (d, cells)
        })
        .collect()
}

fn fmt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn to_csv(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(std::io::Error::from)?;
    for r in rows {
        w.write_record(r).map_err(std::io::Error::from)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.into_error()))
}

struct Emitter<'a> {
    dir: &'a Path,
    written: Vec<PathBuf>,
}

impl Emitter<'_> {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.written.push(path);
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        let bytes = to_csv(header, rows)?;
        self.write(name, &bytes)
    }

    /// Writes `<stem>.svg` and `<stem>.csv` holding exactly the plotted values.
    fn chart(&mut self, stem: &str, chart: &Chart, bars: bool) -> Result<(), CliError> {
        let svg = if bars { bar_chart(chart) } else { line_chart(chart) };
        self.write(&format!("{stem}.svg"), svg.as_bytes())?;
        let with_errors = chart.series.iter().any(|s| s.errors.is_some());
        let mut header = vec![chart.x_label.clone()];
        for s in &chart.series {
            header.push(s.name.clone());
            if with_errors {
                header.push(format!("{}_std", s.name));
            }
        }
        let rows: Vec<Vec<String>> = chart
            .categories
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let mut row = vec![c.clone()];
                for s in &chart.series {
                    row.push(fmt(s.values[i]));
                    if with_errors {
                        row.push(fmt(s.errors.as_ref().and_then(|e| e[i])));
                    }
                }
                row
            })
            .collect();
        self.csv(&format!("{stem}.csv"), &header, &rows)
    }
}

fn classifiers(table: &Table) -> Vec<ClassifierKind> {
    let set: BTreeSet<ClassifierKind> = table
        .values()
        .flat_map(|cells| cells.keys().map(|k| k.classifier))
        .collect();
    set.into_iter().collect()
}

fn bits_of(table: &Table, variant: Variant) -> Vec<u32> {
    let set: BTreeSet<u32> = table
        .values()
        .flat_map(|cells| cells.keys().filter(|k| k.variant == variant).filter_map(|k| k.bits))
        .collect();
    set.into_iter().collect()
}

fn ks_of(table: &Table, variant: Variant) -> Vec<usize> {
    let set: BTreeSet<usize> = table
        .values()
        .flat_map(|cells| cells.keys().filter(|k| k.variant == variant).filter_map(|k| k.k))
        .collect();
    set.into_iter().collect()
}

fn get(cells: &BTreeMap<Key, Cell>, variant: Variant, clf: ClassifierKind, bits: Option<u32>, k: Option<usize>) -> Option<Cell> {
    cells
        .get(&Key {
            variant,
            classifier: clf,
            bits,
            k,
        })
        .copied()
}

/// Best macro F1 among the cells of one variant, with its `(bits, k)`.
fn best(cells: &BTreeMap<Key, Cell>, variant: Variant, clf: ClassifierKind) -> Option<(Cell, Option<u32>, Option<usize>)> {
    cells
        .iter()
        .filter(|(k, _)| k.variant == variant && k.classifier == clf)
        .fold(None, |acc: Option<(Cell, Option<u32>, Option<usize>)>, (k, c)| match acc {
            Some((b, _, _)) if b.macro_f1 >= c.macro_f1 => acc,
            _ => Some((*c, k.bits, k.k)),
        })
}

fn bit_categories(bits: &[u32]) -> Vec<String> {
    bits.iter().map(u32::to_string).chain(["none".to_owned()]).collect()
}

fn error_vs_bits(em: &mut Emitter<'_>, table: &Table) -> Result<(), CliError> {
    let bits = bits_of(table, Variant::Quant);
    let clfs = classifiers(table);
    let series_for = |cells: &BTreeMap<Key, Cell>, clf: ClassifierKind| -> Vec<Option<f64>> {
        bits.iter()
            .map(|&b| get(cells, Variant::Quant, clf, Some(b), None).map(|c| c.macro_error()))
            .chain([get(cells, Variant::Tfidf, clf, None, None).map(|c| c.macro_error())])
            .collect()
    };
    for (dataset, cells) in table {
        let chart = Chart {
            title: format!("Error vs precision bits: {dataset}"),
            x_label: "bits".into(),
            y_label: "error (1 - macro F1)".into(),
            categories: bit_categories(&bits),
            series: clfs
                .iter()
                .map(|&clf| Series {
                    name: clf.to_string(),
                    values: series_for(cells, clf),
                    errors: None,
                })
                .collect(),
        };
        em.chart(&format!("error_vs_bits_{dataset}"), &chart, false)?;
    }
    for &clf in &clfs {
        let chart = Chart {
            title: format!("Error vs precision bits: {clf}"),
            x_label: "bits".into(),
            y_label: "error (1 - macro F1)".into(),
            categories: bit_categories(&bits),
            series: table
                .iter()
                .map(|(dataset, cells)| Series {
                    name: dataset.clone(),
                    values: series_for(cells, clf),
                    errors: None,
                })
                .collect(),
        };
        em.chart(&format!("error_vs_bits_{clf}"), &chart, false)?;
    }
    Ok(())
}

/// Mean and std over datasets (and ranks, for SVD variants) of the error
/// reduction of `variant` at each bit width against its reference.
fn reduction_chart(
    table: &Table,
    variant: Variant,
    reference: Variant,
    micro: bool,
    title: &str,
) -> Chart {
    let bits = bits_of(table, variant);
    let ks: Vec<Option<usize>> = if variant.uses_svd() {
        ks_of(table, variant).into_iter().map(Some).collect()
    } else {
        vec![None]
    };
    let err = |c: Cell| if micro { c.micro_error() } else { c.macro_error() };
    let series = classifiers(table)
        .into_iter()
        .map(|clf| {
            let stats: Vec<(Option<f64>, Option<f64>)> = bits
                .iter()
                .map(|&b| {
                    let mut values = Vec::new();
                    for cells in table.values() {
                        for &k in &ks {
                            let new = get(cells, variant, clf, Some(b), k);
                            let refc = get(cells, reference, clf, None, k);
                            if let (Some(new), Some(refc)) = (new, refc) {
                                if let Ok(r) = error_reduction(err(refc), err(new)) {
                                    values.push(r);
                                }
                            }
                        }
                    }
                    if values.is_empty() {
                        (None, None)
                    } else {
                        let (m, s) = mean_std(&values);
                        (Some(m), Some(s))
                    }
                })
                .collect();
            Series {
                name: clf.to_string(),
                values: stats.iter().map(|s| s.0).collect(),
                errors: Some(stats.iter().map(|s| s.1).collect()),
            }
        })
        .collect();
    Chart {
        title: title.to_owned(),
        x_label: "bits".into(),
        y_label: "error reduction".into(),
        categories: bits.iter().map(u32::to_string).collect(),
        series,
    }
}

fn comparison_bars(em: &mut Emitter<'_>, table: &Table) -> Result<(), CliError> {
    let clfs = classifiers(table);
    let mut categories = Vec::new();
    let mut fig4: [Vec<Option<f64>>; 3] = Default::default();
    let mut fig5: [Vec<Option<f64>>; 2] = Default::default();
    let mut rows4 = Vec::new();
    let mut rows5 = Vec::new();
    for (dataset, cells) in table {
        for &clf in &clfs {
            categories.push(format!("{dataset}/{clf}"));
            let tfidf = get(cells, Variant::Tfidf, clf, None, None);
            let bq = best(cells, Variant::Quant, clf);
            let bs = best(cells, Variant::Svd, clf);
            let bqs = best(cells, Variant::QuantSvd, clf);
            fig4[0].push(tfidf.map(|c| c.macro_f1));
            fig4[1].push(bq.map(|c| c.0.macro_f1));
            fig4[2].push(bs.map(|c| c.0.macro_f1));
            fig5[0].push(bs.map(|c| c.0.macro_f1));
            fig5[1].push(bqs.map(|c| c.0.macro_f1));
            rows4.push(vec![
                dataset.clone(),
                clf.to_string(),
                fmt(tfidf.map(|c| c.macro_f1)),
                fmt(bq.map(|c| c.0.macro_f1)),
                bq.and_then(|c| c.1).map(|b| b.to_string()).unwrap_or_default(),
                fmt(bs.map(|c| c.0.macro_f1)),
                bs.and_then(|c| c.2).map(|k| k.to_string()).unwrap_or_default(),
            ]);
            rows5.push(vec![
                dataset.clone(),
                clf.to_string(),
                fmt(bs.map(|c| c.0.macro_f1)),
                bs.and_then(|c| c.2).map(|k| k.to_string()).unwrap_or_default(),
                fmt(bqs.map(|c| c.0.macro_f1)),
                bqs.and_then(|c| c.1).map(|b| b.to_string()).unwrap_or_default(),
                bqs.and_then(|c| c.2).map(|k| k.to_string()).unwrap_or_default(),
            ]);
        }
    }
    let names4 = ["tfidf", "best quant", "best svd"];
    let chart4 = Chart {
        title: "Macro F1: TF-IDF, best precision reduction, best SVD".into(),
        x_label: "dataset/classifier".into(),
        y_label: "macro F1".into(),
        categories: categories.clone(),
        series: names4
            .iter()
            .zip(fig4)
            .map(|(n, values)| Series {
                name: (*n).into(),
                values,
                errors: None,
            })
            .collect(),
    };
    em.write("best_variants.svg", bar_chart(&chart4).as_bytes())?;
    let h = |s: &[&str]| s.iter().map(|x| (*x).to_owned()).collect::<Vec<_>>();
    em.csv(
        "best_variants.csv",
        &h(&["dataset", "classifier", "tfidf", "best_quant", "best_quant_b", "best_svd", "best_svd_k"]),
        &rows4,
    )?;
    let names5 = ["best svd", "best quant+svd"];
    let chart5 = Chart {
        title: "Macro F1: SVD with and without precision reduction before it".into(),
        x_label: "dataset/classifier".into(),
        y_label: "macro F1".into(),
        categories,
        series: names5
            .iter()
            .zip(fig5)
            .map(|(n, values)| Series {
                name: (*n).into(),
                values,
                errors: None,
            })
            .collect(),
    };
    em.write("quant_before_svd.svg", bar_chart(&chart5).as_bytes())?;
    em.csv(
        "quant_before_svd.csv",
        &h(&["dataset", "classifier", "best_svd", "best_svd_k", "best_quant_svd", "best_quant_svd_b", "best_quant_svd_k"]),
        &rows5,
    )
}

fn score_tables(em: &mut Emitter<'_>, table: &Table) -> Result<(), CliError> {
    let datasets: Vec<String> = table.keys().cloned().collect();
    for (name, pick) in [
        ("macro_f1_table.csv", (|c: Cell| c.macro_f1) as fn(Cell) -> f64),
        ("micro_accuracy_table.csv", |c: Cell| c.micro_accuracy),
    ] {
        let mut header = vec!["classifier".to_owned(), "selection".to_owned()];
        header.extend(datasets.iter().cloned());
        let mut rows = Vec::new();
        let mut best_row: Vec<Option<f64>> = vec![None; datasets.len()];
        for clf in classifiers(table) {
            let mut tfidf_row = vec![clf.to_string(), "tfidf".to_owned()];
            let mut best_any = vec![clf.to_string(), "best".to_owned()];
            for (i, cells) in table.values().enumerate() {
                let v1 = get(cells, Variant::Tfidf, clf, None, None).map(pick);
                tfidf_row.push(fmt(v1));
                let b = cells
                    .iter()
                    .filter(|(k, _)| k.classifier == clf)
                    .map(|(_, c)| pick(*c))
                    .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
                best_any.push(fmt(b));
                if let Some(b) = b {
                    best_row[i] = Some(best_row[i].map_or(b, |m| m.max(b)));
                }
            }
            rows.push(tfidf_row);
            rows.push(best_any);
        }
        let mut last = vec!["all".to_owned(), "best".to_owned()];
        last.extend(best_row.into_iter().map(fmt));
        rows.push(last);
        em.csv(name, &header, &rows)?;
    }
    Ok(())
}

fn timing_table(em: &mut Emitter<'_>, table: &Table) -> Result<(), CliError> {
    let datasets: Vec<String> = table.keys().cloned().collect();
    let mut header = vec!["classifier".to_owned(), "variant".to_owned()];
    header.extend(datasets.iter().map(|d| format!("train_s_{d}")));
    header.extend(datasets.iter().map(|d| format!("test_s_{d}")));
    let mut rows = Vec::new();
    let svd_ks = ks_of(table, Variant::Svd);
    for clf in classifiers(table) {
        let mut variants = vec![("no svd".to_owned(), Variant::Tfidf, None)];
        variants.extend(svd_ks.iter().map(|&k| (format!("svd({k})"), Variant::Svd, Some(k))));
        for (label, variant, k) in variants {
            let cells: Vec<Option<Cell>> =
                table.values().map(|c| get(c, variant, clf, None, k)).collect();
            if cells.iter().all(Option::is_none) {
                continue;
            }
            let mut row = vec![clf.to_string(), label];
            row.extend(cells.iter().map(|c| fmt(c.map(|c| c.train_s))));
            row.extend(cells.iter().map(|c| fmt(c.map(|c| c.test_s))));
            rows.push(row);
        }
    }
    em.csv("timing_table.csv", &header, &rows)
}

fn generate_one(dir: &Path, reports: &[&ExperimentReport]) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir)?;
    let table = aggregate(reports);
    let mut em = Emitter {
        dir,
        written: Vec::new(),
    };
    error_vs_bits(&mut em, &table)?;
    for (stem, micro, title) in [
        ("error_reduction_macro", false, "Error reduction vs bits (macro), reference: TF-IDF"),
        ("error_reduction_micro", true, "Error reduction vs bits (micro), reference: TF-IDF"),
    ] {
        let chart = reduction_chart(&table, Variant::Quant, Variant::Tfidf, micro, title);
        em.chart(stem, &chart, false)?;
    }
    let chart = reduction_chart(
        &table,
        Variant::SvdQuant,
        Variant::Svd,
        false,
        "Error reduction vs bits, reduction after SVD, reference: SVD",
    );
    em.chart("error_reduction_svd_quant", &chart, false)?;
    comparison_bars(&mut em, &table)?;
    score_tables(&mut em, &table)?;
    timing_table(&mut em, &table)?;
    Ok(em.written)
}

/// Emits every chart and table. Uniform and class-weighted runs are kept
/// apart, in `uniform/` and `weighted/` when the store holds both.
pub fn generate(reports: &[ExperimentReport], out: &Path) -> Result<Vec<PathBuf>, CliError> {
    if reports.is_empty() {
        return Err(CliError::EmptyStore);
    }
    let (weighted, uniform): (Vec<&ExperimentReport>, Vec<&ExperimentReport>) =
        reports.iter().partition(|r| r.config.class_weighting);
    match (weighted.is_empty(), uniform.is_empty()) {
        (true, _) => generate_one(out, &uniform),
        (_, true) => generate_one(out, &weighted),
        _ => {
            let mut files = generate_one(&out.join("uniform"), &uniform)?;
            files.extend(generate_one(&out.join("weighted"), &weighted)?);
            Ok(files)
        }
    }
}
