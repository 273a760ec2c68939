use std::fs;
use std::path::{Path, PathBuf};

use super::metrics::{
    avg_min_distance, correlation_matrix, min_distance_distribution, min_distances,
    nearest_neighbor_counts, DistanceHistogram, ModelTag, SampleSet,
};
use super::pca::{pca_fit_project, Pca};
use super::svg::{bar_chart, histogram_chart, scatter_chart, Series};
use super::tsne::{tsne_embed, TsneConfig, TsneResult};
use super::EvalError;

pub const METRICS_HEADER: &str = "model,samples,avg_min_distance,nn_wins,nn_ties,reference_count";

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub pca_components: usize,
    /// `None` skips the embedding.
    pub tsne: Option<TsneConfig>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            pca_components: 2,
            tsne: Some(TsneConfig::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelMetrics {
    pub tag: ModelTag,
    pub samples: usize,
    pub avg_min_distance: f64,
    pub nn_wins: usize,
    /// Per reference row, distance to this model's closest sample.
    pub min_distances: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub reference_count: usize,
    pub nn_ties: usize,
    pub models: Vec<ModelMetrics>,
    pub histogram: DistanceHistogram,
    pub pca: Pca,
    /// Model tag of every row of the combined matrix fed to PCA and t-SNE.
    pub labels: Vec<ModelTag>,
    pub tsne: Option<TsneResult>,
    /// Column correlations of the reference and of each model's samples.
    pub correlations: Vec<(String, Vec<Vec<f64>>)>,
}

impl MetricsReport {
    pub fn model(&self, tag: ModelTag) -> Option<&ModelMetrics> {
        self.models.iter().find(|m| m.tag == tag)
    }

    pub fn table(&self) -> MetricsTable {
        MetricsTable {
            reference_count: self.reference_count,
            nn_ties: self.nn_ties,
            rows: self
                .models
                .iter()
                .map(|m| MetricsRow {
                    tag: m.tag,
                    samples: m.samples,
                    avg_min_distance: m.avg_min_distance,
                    nn_wins: m.nn_wins,
                })
                .collect(),
        }
    }
}

/// Scalar part of a report, as stored in `metrics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub reference_count: usize,
    pub nn_ties: usize,
    pub rows: Vec<MetricsRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub tag: ModelTag,
    pub samples: usize,
    pub avg_min_distance: f64,
    pub nn_wins: usize,
}

pub fn build_report(
    sets: &[SampleSet],
    reference: &[Vec<f64>],
    opts: &ReportOptions,
) -> Result<MetricsReport, EvalError> {
    let mut ordered: Vec<&SampleSet> = sets.iter().collect();
    ordered.sort_by_key(|s| s.tag);
    let owned: Vec<SampleSet> = ordered.iter().map(|s| (*s).clone()).collect();
    let nn = nearest_neighbor_counts(&owned, reference)?;
    let mut models = Vec::with_capacity(owned.len());
    for s in &owned {
        models.push(ModelMetrics {
            tag: s.tag,
            samples: s.rows.len(),
            avg_min_distance: avg_min_distance(&s.rows, reference)?,
            nn_wins: nn.get(s.tag),
            min_distances: min_distances(&s.rows, reference)?,
        });
    }
    let per_model: Vec<(ModelTag, Vec<f64>)> = models
        .iter()
        .map(|m| (m.tag, m.min_distances.clone()))
        .collect();
    let histogram = min_distance_distribution(&per_model)?;

    let mut combined = Vec::new();
    let mut labels = Vec::new();
    for s in &owned {
        combined.extend(s.rows.iter().cloned());
        labels.extend(std::iter::repeat_n(s.tag, s.rows.len()));
    }
    let pca = pca_fit_project(&combined, opts.pca_components)?;
    let tsne = opts
        .tsne
        .as_ref()
        .map(|cfg| tsne_embed(&combined, cfg))
        .transpose()?;

    let mut correlations = vec![("reference".to_string(), correlation_matrix(reference)?)];
    for s in &owned {
        correlations.push((s.tag.as_str().to_string(), correlation_matrix(&s.rows)?));
    }
    Ok(MetricsReport {
        reference_count: reference.len(),
        nn_ties: nn.ties,
        models,
        histogram,
        pca,
        labels,
        tsne,
        correlations,
    })
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_metrics_csv(t: &MetricsTable) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in &t.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.tag,
            r.samples,
            num(r.avg_min_distance),
            r.nn_wins,
            t.nn_ties,
            t.reference_count
        ));
    }
    out
}

pub fn parse_metrics_csv(text: &str) -> Result<MetricsTable, EvalError> {
    let err = |line: usize, detail: String| EvalError::Parse { line, detail };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == METRICS_HEADER => {}
        _ => return Err(err(1, format!("expected header `{METRICS_HEADER}`"))),
    }
    let mut rows = Vec::new();
    let mut shared: Option<(usize, usize)> = None;
    for (i, line) in lines {
        let ln = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(err(ln, format!("expected 6 fields, found {}", f.len())));
        }
        let tag =
            ModelTag::parse(f[0]).ok_or_else(|| err(ln, format!("unknown model `{}`", f[0])))?;
        let int = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| err(ln, format!("`{s}`: {e}")))
        };
        let avg = f[2]
            .parse::<f64>()
            .map_err(|e| err(ln, format!("`{}`: {e}", f[2])))?;
        let pair = (int(f[4])?, int(f[5])?);
        if shared.is_some_and(|s| s != pair) {
            return Err(err(
                ln,
                "nn_ties/reference_count differ between rows".into(),
            ));
        }
        shared = Some(pair);
        rows.push(MetricsRow {
            tag,
            samples: int(f[1])?,
            avg_min_distance: avg,
            nn_wins: int(f[3])?,
        });
    }
    let (nn_ties, reference_count) = shared.ok_or_else(|| err(2, "no model rows".into()))?;
    Ok(MetricsTable {
        reference_count,
        nn_ties,
        rows,
    })
}

fn put(dir: &Path, name: &str, body: String, written: &mut Vec<PathBuf>) -> Result<(), EvalError> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    written.push(path);
    Ok(())
}

/// Writes every CSV artifact of the report into `dir`.
pub fn write_report_csvs(report: &MetricsReport, dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    fs::create_dir_all(dir).map_err(|source| EvalError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut written = Vec::new();
    put(
        dir,
        "metrics.csv",
        write_metrics_csv(&report.table()),
        &mut written,
    )?;

    for m in &report.models {
        let mut s = String::from("reference_index,min_distance\n");
        for (i, d) in m.min_distances.iter().enumerate() {
            s.push_str(&format!("{i},{}\n", num(*d)));
        }
        put(
            dir,
            &format!("min_distances_{}.csv", m.tag),
            s,
            &mut written,
        )?;
    }

    let h = &report.histogram;
    let mut s = String::from("bin,lower,upper");
    for (t, _) in &h.counts {
        s.push_str(&format!(",{t}"));
    }
    s.push('\n');
    for b in 0..h.edges.len() - 1 {
        s.push_str(&format!("{b},{},{}", num(h.edges[b]), num(h.edges[b + 1])));
        for (_, c) in &h.counts {
            s.push_str(&format!(",{}", c[b]));
        }
        s.push('\n');
    }
    put(dir, "distance_histogram.csv", s, &mut written)?;

    let k = report.pca.components.len();
    let mut s = String::from("row,model");
    (0..k).for_each(|c| s.push_str(&format!(",pc{}", c + 1)));
    s.push('\n');
    for (i, (c, t)) in report.pca.coords.iter().zip(&report.labels).enumerate() {
        s.push_str(&format!("{i},{t}"));
        c.iter().for_each(|v| s.push_str(&format!(",{}", num(*v))));
        s.push('\n');
    }
    put(dir, "pca_coords.csv", s, &mut written)?;

    let d = report.pca.mean.len();
    let mut s = String::from("component,explained_variance,explained_ratio");
    (0..d).for_each(|j| s.push_str(&format!(",w{j}")));
    s.push('\n');
    for c in 0..k {
        s.push_str(&format!(
            "{},{},{}",
            c + 1,
            num(report.pca.explained_variance[c]),
            num(report.pca.explained_ratio[c])
        ));
        report.pca.components[c]
            .iter()
            .for_each(|v| s.push_str(&format!(",{}", num(*v))));
        s.push('\n');
    }
    put(dir, "pca_components.csv", s, &mut written)?;

    if let Some(t) = &report.tsne {
        let mut s = String::from("row,model,x,y\n");
        for (i, (c, tag)) in t.coords.iter().zip(&report.labels).enumerate() {
            s.push_str(&format!("{i},{tag},{},{}\n", num(c[0]), num(c[1])));
        }
        put(dir, "tsne_coords.csv", s, &mut written)?;
        let mut s = String::from("iteration,kl\n");
        for (it, kl) in &t.kl_history {
            s.push_str(&format!("{it},{}\n", num(*kl)));
        }
        put(dir, "tsne_kl.csv", s, &mut written)?;
    }

    for (name, m) in &report.correlations {
        let mut s = String::from("dim");
        (0..m.len()).for_each(|j| s.push_str(&format!(",d{j}")));
        s.push('\n');
        for (i, row) in m.iter().enumerate() {
            s.push_str(&format!("d{i}"));
            row.iter()
                .for_each(|v| s.push_str(&format!(",{}", num(*v))));
            s.push('\n');
        }
        put(dir, &format!("correlation_{name}.csv"), s, &mut written)?;
    }
    Ok(written)
}

fn read_csv(path: &Path) -> Result<Option<Vec<Vec<String>>>, EvalError> {
    match fs::read_to_string(path) {
        Ok(text) => Ok(Some(
            text.lines()
                .skip(1)
                .filter(|l| !l.trim().is_empty())
                .map(|l| l.split(',').map(str::to_string).collect())
                .collect(),
        )),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(source) => Err(EvalError::Io {
            path: path.display().to_string(),
            source,
        }),
    }
}

fn parse_f(s: &str, file: &str, line: usize) -> Result<f64, EvalError> {
    s.parse().map_err(|e| EvalError::Parse {
        line,
        detail: format!("{file}: `{s}`: {e}"),
    })
}

fn scatter_from(rows: &[Vec<String>], file: &str) -> Result<Vec<Series>, EvalError> {
    let mut series: Vec<Series> = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        if r.len() < 4 {
            continue;
        }
        let p = (parse_f(&r[2], file, i + 2)?, parse_f(&r[3], file, i + 2)?);
        match series.iter_mut().find(|s| s.label == r[1]) {
            Some(s) => s.points.push(p),
            None => series.push(Series {
                label: r[1].clone(),
                points: vec![p],
            }),
        }
    }
    Ok(series)
}

/// Renders SVG plots from the CSV artifacts already present in `dir`.
pub fn render_plots(dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    let mut written = Vec::new();
    let metrics_path = dir.join("metrics.csv");
    let text = fs::read_to_string(&metrics_path).map_err(|source| EvalError::Io {
        path: metrics_path.display().to_string(),
        source,
    })?;
    let table = parse_metrics_csv(&text)?;
    let avg: Vec<(String, f64)> = table
        .rows
        .iter()
        .map(|r| (r.tag.to_string(), r.avg_min_distance))
        .collect();
    put(
        dir,
        "avg_min_distance.svg",
        bar_chart("Average minimum distance to reference", "distance", &avg),
        &mut written,
    )?;
    let wins: Vec<(String, f64)> = table
        .rows
        .iter()
        .map(|r| (r.tag.to_string(), r.nn_wins as f64))
        .collect();
    let title = format!(
        "Nearest-neighbour wins over {} reference vectors",
        table.reference_count
    );
    put(
        dir,
        "nn_wins.svg",
        bar_chart(&title, "wins", &wins),
        &mut written,
    )?;

    if let Some(rows) = read_csv(&dir.join("distance_histogram.csv"))? {
        let tags: Vec<String> = table.rows.iter().map(|r| r.tag.to_string()).collect();
        let mut edges = Vec::new();
        let mut counts: Vec<(String, Vec<usize>)> =
            tags.iter().map(|t| (t.clone(), Vec::new())).collect();
        for (i, r) in rows.iter().enumerate() {
            if edges.is_empty() {
                edges.push(parse_f(&r[1], "distance_histogram.csv", i + 2)?);
            }
            edges.push(parse_f(&r[2], "distance_histogram.csv", i + 2)?);
            for (k, c) in counts.iter_mut().enumerate() {
                let v = r.get(3 + k).and_then(|s| s.parse().ok()).unwrap_or(0);
                c.1.push(v);
            }
        }
        put(
            dir,
            "min_distance_histogram.svg",
            histogram_chart(
                "Distribution of minimum distances",
                "min distance",
                &edges,
                &counts,
            ),
            &mut written,
        )?;
    }
    if let Some(rows) = read_csv(&dir.join("pca_coords.csv"))? {
        let series = scatter_from(&rows, "pca_coords.csv")?;
        put(
            dir,
            "pca.svg",
            scatter_chart("PCA of generated latents", "PC1", "PC2", &series),
            &mut written,
        )?;
    }
    if let Some(rows) = read_csv(&dir.join("tsne_coords.csv"))? {
        let series = scatter_from(&rows, "tsne_coords.csv")?;
        put(
            dir,
            "tsne.svg",
            scatter_chart("t-SNE of generated latents", "dim 1", "dim 2", &series),
            &mut written,
        )?;
    }
    Ok(written)
}

/// CSV artifacts followed by the plots rendered from them.
pub fn write_report(report: &MetricsReport, dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    let mut written = write_report_csvs(report, dir)?;
    written.extend(render_plots(dir)?);
    Ok(written)
}
