//! CSV and JSON outputs of an evaluation run.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CombinedFit, ModelSummary};
use crate::pipeline::{CombinedGrid, EvaluationRun};
use crate::stats::StabilityReport;

pub const SUMMARY_HEADER: [&str; 4] = ["model", "mean_rho", "stdev_rho", "n_categories"];
pub const BETA_HEADER: [&str; 6] = [
    "category",
    "beta_language",
    "beta_vision",
    "r_squared",
    "rho_predicted",
    "supercategory",
];
pub const STABILITY_HEADER: [&str; 2] = ["trial", "rho"];
pub const UNASSIGNED: &str = "Unassigned";

/// Recognized supercategory labels.
pub const SUPERCATEGORIES: [&str; 8] = [
    "Environment",
    "Abstract",
    "Vehicle",
    "Man-Made Miscellaneous",
    "Plant",
    "Animal",
    "Man-Made Tool",
    "Garment",
];

/// Four decimals. `{:.4}` rounds half to even on the exact binary value;
/// negative zero prints as `0.0000`.
pub fn fmt4(x: f64) -> String {
    let s = format!("{x:.4}");
    if s == "-0.0000" {
        "0.0000".to_owned()
    } else {
        s
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Schema(format!("{}: {other:?}", path.display())),
    }
}

fn finish(path: &Path, mut w: csv::Writer<fs::File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_summary_table(summaries: &[ModelSummary], path: &Path) -> Result<()> {
    if summaries.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut rows: Vec<&ModelSummary> = summaries.iter().collect();
    rows.sort_by(|a, b| a.model_id.cmp(&b.model_id));
    let mut w = csv_writer(path)?;
    w.write_record(SUMMARY_HEADER)
        .map_err(|e| csv_err(path, e))?;
    for s in rows {
        w.write_record([
            s.model_id.clone(),
            fmt4(s.mean_rho),
            fmt4(s.stdev_rho),
            s.n_categories.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Sorts ids by descending marginal mean; ids with no values go last, ties
/// by id.
fn order_by_marginal(ids: &[String], marginal: impl Fn(&str) -> Option<f64>) -> Vec<String> {
    let mut keyed: Vec<(Option<f64>, &String)> = ids.iter().map(|id| (marginal(id), id)).collect();
    keyed.sort_by(|(ma, a), (mb, b)| match (ma, mb) {
        (Some(x), Some(y)) => y.total_cmp(x).then_with(|| a.cmp(b)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.cmp(b),
    });
    keyed.into_iter().map(|(_, id)| id.clone()).collect()
}

/// Row and column order used by [`write_grid_matrix`].
pub fn grid_order(grid: &CombinedGrid) -> (Vec<String>, Vec<String>) {
    let rows = order_by_marginal(&grid.language_models, |l| {
        mean(
            grid.cells
                .iter()
                .filter(|c| c.language == l)
                .filter_map(|c| c.mean_rho),
        )
    });
    let cols = order_by_marginal(&grid.vision_models, |v| {
        mean(
            grid.cells
                .iter()
                .filter(|c| c.vision == v)
                .filter_map(|c| c.mean_rho),
        )
    });
    (rows, cols)
}

/// Matrix of cell mean rhos: language models down, vision models across.
pub fn write_grid_matrix(grid: &CombinedGrid, path: &Path) -> Result<()> {
    if grid.language_models.is_empty() || grid.vision_models.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (rows, cols) = grid_order(grid);
    let mut w = csv_writer(path)?;
    let mut header = vec!["language_model".to_owned()];
    header.extend(cols.iter().cloned());
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for l in &rows {
        let mut record = vec![l.clone()];
        for v in &cols {
            let cell = grid
                .cell(l, v)
                .and_then(|c| c.mean_rho)
                .map(fmt4)
                .unwrap_or_default();
            record.push(cell);
        }
        w.write_record(&record).map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

/// Category -> supercategory label.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SupercategoryMap(BTreeMap<String, String>);

#[derive(Deserialize)]
struct SupercategoryRow {
    category: String,
    supercategory: String,
}

impl SupercategoryMap {
    pub fn from_pairs<I, A, B>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        let mut map = BTreeMap::new();
        for (c, s) in pairs {
            let (c, s): (String, String) = (c.into().trim().to_owned(), s.into().trim().to_owned());
            if !SUPERCATEGORIES.contains(&s.as_str()) && s != UNASSIGNED {
                return Err(Error::Schema(format!(
                    "unknown supercategory `{s}` for `{c}`"
                )));
            }
            if map.insert(c.clone(), s).is_some() {
                return Err(Error::Schema(format!(
                    "duplicate supercategory row for `{c}`"
                )));
            }
        }
        Ok(SupercategoryMap(map))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::Reader::from_reader(file);
        let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
        if header.iter().collect::<Vec<_>>() != ["category", "supercategory"] {
            return Err(Error::Parse {
                line: 1,
                message: "expected header category,supercategory".into(),
            });
        }
        let mut pairs = Vec::new();
        for row in reader.deserialize::<SupercategoryRow>() {
            let row = row.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            pairs.push((row.category, row.supercategory));
        }
        SupercategoryMap::from_pairs(pairs)
    }

    pub fn get(&self, category: &str) -> &str {
        self.0.get(category).map_or(UNASSIGNED, String::as_str)
    }
}

pub fn write_beta_weights(
    fits: &[CombinedFit],
    supercategories: &SupercategoryMap,
    path: &Path,
) -> Result<()> {
    if fits.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut w = csv_writer(path)?;
    w.write_record(BETA_HEADER).map_err(|e| csv_err(path, e))?;
    for f in fits {
        w.write_record([
            f.category.clone(),
            fmt4(f.beta_language),
            fmt4(f.beta_vision),
            fmt4(f.r_squared),
            fmt4(f.rho_predicted),
            supercategories.get(&f.category).to_owned(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

/// One summary line for a stability study.
pub fn stability_summary_line(report: &StabilityReport) -> String {
    format!(
        "min={} max={} mean={} multi_image_rho={}",
        fmt4(report.min),
        fmt4(report.max),
        fmt4(report.mean),
        fmt4(report.multi_image_rho)
    )
}

/// `trial,rho` rows. The summary line goes to a sibling `.summary` file so
/// the CSV stays rectangular.
pub fn write_stability(report: &StabilityReport, path: &Path) -> Result<PathBuf> {
    let mut w = csv_writer(path)?;
    w.write_record(STABILITY_HEADER)
        .map_err(|e| csv_err(path, e))?;
    for (i, rho) in report.rhos.iter().enumerate() {
        w.write_record([i.to_string(), fmt4(*rho)])
            .map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)?;
    let summary = path.with_extension("summary.txt");
    let mut line = stability_summary_line(report);
    line.push('\n');
    fs::write(&summary, line).map_err(|e| Error::io(&summary, e))?;
    Ok(summary)
}

#[derive(Serialize)]
struct Manifest<'a> {
    run_id: &'a str,
    seed: u64,
    config: &'a str,
    input_digests: &'a BTreeMap<String, String>,
    outputs: Vec<String>,
    warnings: Vec<String>,
}

/// Run provenance: config snapshot, seed, and input digests. No wall-clock
/// fields, so reruns produce identical bytes.
pub fn write_manifest(run: &EvaluationRun, outputs: &[String], path: &Path) -> Result<()> {
    let manifest = Manifest {
        run_id: &run.run_id,
        seed: run.seed,
        config: &run.config_snapshot,
        input_digests: &run.input_digests,
        outputs: outputs.to_vec(),
        warnings: run.warnings.iter().map(ToString::to_string).collect(),
    };
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(&mut file, &manifest)
        .map_err(|e| Error::Schema(format!("manifest: {e}")))?;
    file.write_all(b"\n").map_err(|e| Error::io(path, e))
}

/// File-system safe form of a model id.
pub fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes every table the run has data for and returns the relative paths
/// written, manifest last.
pub fn write_run_outputs(
    run: &EvaluationRun,
    supercategories: &SupercategoryMap,
    dir: &Path,
) -> Result<Vec<String>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let tables = [
        ("text_summary.csv", run.text_summaries()),
        ("vision_summary.csv", run.vision_summaries()),
        ("clip_summary.csv", run.clip_summaries()),
    ];
    for (name, summaries) in tables {
        if !summaries.is_empty() {
            write_summary_table(&summaries, &dir.join(name))?;
            written.push(name.to_owned());
        }
    }
    if !run.grid.is_empty() {
        write_grid_matrix(&run.grid, &dir.join("combined_grid.csv"))?;
        written.push("combined_grid.csv".to_owned());
        for cell in run.grid.cells.iter().filter(|c| !c.fits.is_empty()) {
            let name = format!(
                "beta_weights/{}__{}.csv",
                sanitize(&cell.language),
                sanitize(&cell.vision)
            );
            write_beta_weights(&cell.fits, supercategories, &dir.join(&name))?;
            written.push(name);
        }
    }
    write_manifest(run, &written, &dir.join("manifest.json"))?;
    written.push("manifest.json".to_owned());
    Ok(written)
}
