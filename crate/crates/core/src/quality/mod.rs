//! Dataset quality metrics: central moment discrepancy and average
//! pairwise similarity over sentence embeddings, plus entity coverage and
//! frequency against a lexicon.
//!
//! Embeddings are read from files or fetched from an HTTP endpoint; no
//! encoder runs in-process.

mod aps;
mod cmd;
mod coverage;
mod embed;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use aps::{avg_pairwise_similarity, ApsMode};
pub use cmd::{cmd, Bounds, CmdResult, AUTO_BOUNDS_EPS, DEFAULT_CMD_ORDER};
pub use coverage::{entity_coverage, entity_frequency, Coverage, EntityMatcher, FrequencyRow, Match};
pub use embed::{
    align, embed_from_file, load_texts, load_vectors, EmbeddingEndpoint, EmbeddingEndpointConfig, EmbeddingSet, ProviderKind,
    TextItem,
};

#[derive(Debug, thiserror::Error)]
pub enum QualityError {
    #[error("{0} is empty")]
    Empty(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("degenerate bounds on dimension {dim}: [{lo}, {hi}]")]
    DegenerateBounds { dim: usize, lo: f64, hi: f64 },
    #[error("zero vector for record {0}")]
    ZeroVector(String),
    #[error("empty support: no lexicon entity matched")]
    EmptySupport,
    #[error("no embedding for {} record(s): {}", .0.len(), .0.join(", "))]
    MissingVectors(Vec<String>),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Data(String),
    #[error("embedding endpoint: {0}")]
    Transport(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl QualityError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), message: e.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub cmd_order: usize,
    pub bounds: Bounds,
    pub aps: ApsMode,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self { cmd_order: DEFAULT_CMD_ORDER, bounds: Bounds::Auto, aps: ApsMode::AllPairs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub distinct_matched: usize,
    pub lexicon_size: usize,
    pub fraction: f64,
    pub total_matches: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub config: AnalyzeConfig,
    pub dataset_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_size: Option<usize>,
    /// Dataset against reference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cmd: Option<CmdResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_aps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_coverage: Option<CoverageSummary>,
    /// Entity id → share of all matches.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub frequency: BTreeMap<String, f64>,
    #[serde(skip)]
    pub frequency_rows: Vec<FrequencyRow>,
}

#[derive(Default)]
pub struct AnalyzeInputs<'a> {
    pub dataset: &'a [TextItem],
    pub reference: Option<&'a [TextItem]>,
    pub dataset_embeddings: Option<&'a EmbeddingSet>,
    pub reference_embeddings: Option<&'a EmbeddingSet>,
    pub matcher: Option<&'a EntityMatcher>,
}

/// Computes whichever metrics the inputs allow: APS needs embeddings, CMD
/// needs embeddings for both sides, coverage needs a matcher.
pub fn analyze(config: &AnalyzeConfig, inputs: &AnalyzeInputs<'_>) -> Result<QualityReport, QualityError> {
    let aps_of = |e: &EmbeddingSet| -> Result<Option<f64>, QualityError> {
        if e.len() < 2 {
            log::warn!("fewer than two vectors, skipping APS");
            return Ok(None);
        }
        avg_pairwise_similarity(&e.ids, &e.vectors, config.aps).map(Some)
    };
    let aps = inputs.dataset_embeddings.map(aps_of).transpose()?.flatten();
    let reference_aps = inputs.reference_embeddings.map(aps_of).transpose()?.flatten();
    let cmd = match (inputs.dataset_embeddings, inputs.reference_embeddings) {
        (Some(x), Some(y)) => Some(cmd(&x.vectors, &y.vectors, config.cmd_order, &config.bounds)?),
        _ => None,
    };
    let (entity_coverage, frequency_rows) = match inputs.matcher {
        None => (None, Vec::new()),
        Some(m) => {
            let texts: Vec<&str> = inputs.dataset.iter().map(|t| t.text.as_str()).collect();
            let c = entity_coverage(&texts, m);
            let rows = match entity_frequency(&c) {
                Ok(r) => r,
                Err(QualityError::EmptySupport) => {
                    log::warn!("no lexicon entity matched the dataset");
                    Vec::new()
                }
                Err(e) => return Err(e),
            };
            let summary = CoverageSummary {
                distinct_matched: c.distinct_matched(),
                lexicon_size: c.lexicon_size,
                fraction: c.fraction(),
                total_matches: c.total_matches(),
            };
            (Some(summary), rows)
        }
    };
    Ok(QualityReport {
        config: config.clone(),
        dataset_size: inputs.dataset.len(),
        reference_size: inputs.reference.map(<[_]>::len),
        cmd,
        aps,
        reference_aps,
        entity_coverage,
        frequency: frequency_rows.iter().map(|r| (r.entity_id.clone(), r.frequency)).collect(),
        frequency_rows,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportPaths {
    pub report: PathBuf,
    pub frequency_csv: PathBuf,
    pub cmd_csv: PathBuf,
}

/// Writes `quality_report.json`, `frequency.csv` and `cmd_terms.csv`.
/// `names` maps entity ids to display names for the frequency table.
pub fn write_report(report: &QualityReport, names: Option<&EntityMatcher>, dir: &Path) -> Result<ReportPaths, QualityError> {
    std::fs::create_dir_all(dir).map_err(|e| QualityError::io(dir, e))?;
    let paths = ReportPaths {
        report: dir.join("quality_report.json"),
        frequency_csv: dir.join("frequency.csv"),
        cmd_csv: dir.join("cmd_terms.csv"),
    };
    let json = serde_json::to_string_pretty(report).expect("report serializes") + "\n";
    std::fs::write(&paths.report, json).map_err(|e| QualityError::io(&paths.report, e))?;

    let csv_err = |p: &Path| {
        let p = p.to_path_buf();
        move |e: csv::Error| QualityError::Io { path: p, message: e.to_string() }
    };
    let mut w = csv::Writer::from_path(&paths.frequency_csv).map_err(csv_err(&paths.frequency_csv))?;
    w.write_record(["rank", "entity_id", "name", "count", "frequency"]).map_err(csv_err(&paths.frequency_csv))?;
    for r in &report.frequency_rows {
        let name = names.and_then(|m| m.display_name(&r.entity_id)).unwrap_or_default();
        w.write_record([r.rank.to_string(), r.entity_id.clone(), name.to_string(), r.count.to_string(), r.frequency.to_string()])
            .map_err(csv_err(&paths.frequency_csv))?;
    }
    w.flush().map_err(|e| QualityError::io(&paths.frequency_csv, e))?;

    let mut w = csv::Writer::from_path(&paths.cmd_csv).map_err(csv_err(&paths.cmd_csv))?;
    w.write_record(["order", "term"]).map_err(csv_err(&paths.cmd_csv))?;
    if let Some(c) = &report.cmd {
        for (k, t) in c.terms.iter().enumerate() {
            w.write_record([(k + 1).to_string(), t.to_string()]).map_err(csv_err(&paths.cmd_csv))?;
        }
    }
    w.flush().map_err(|e| QualityError::io(&paths.cmd_csv, e))?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::EntityLexicon;

    fn items(texts: &[&str]) -> Vec<TextItem> {
        texts.iter().enumerate().map(|(i, t)| TextItem { id: format!("r{i}"), text: t.to_string() }).collect()
    }

    #[test]
    fn self_comparison_and_outputs() {
        let data = items(&["stroke after sepsis", "stroke again", "nothing"]);
        let emb = EmbeddingSet::new(
            data.iter().map(|t| t.id.clone()).collect(),
            vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.0, 1.0]],
            ProviderKind::File,
            "m",
        )
        .unwrap();
        let lex = EntityLexicon::from_names([("stroke", "D1"), ("sepsis", "D2"), ("asthma", "D3")]);
        let matcher = EntityMatcher::new(&lex);
        let inputs = AnalyzeInputs {
            dataset: &data,
            reference: Some(&data),
            dataset_embeddings: Some(&emb),
            reference_embeddings: Some(&emb),
            matcher: Some(&matcher),
        };
        let r = analyze(&AnalyzeConfig::default(), &inputs).unwrap();
        assert_eq!(r.cmd.as_ref().unwrap().total, 0.0);
        let cov = r.entity_coverage.as_ref().unwrap();
        assert_eq!((cov.distinct_matched, cov.lexicon_size, cov.total_matches), (2, 3, 3));
        assert!((r.frequency.values().sum::<f64>() - 1.0).abs() < 1e-9);
        let c = r.cmd.as_ref().unwrap();
        assert_eq!(c.total, c.terms.iter().sum::<f64>());

        let dir = tempfile::tempdir().unwrap();
        let p = write_report(&r, Some(&matcher), dir.path()).unwrap();
        let back: QualityReport = serde_json::from_str(&std::fs::read_to_string(&p.report).unwrap()).unwrap();
        assert_eq!(back.frequency, r.frequency);
        let freq = std::fs::read_to_string(&p.frequency_csv).unwrap();
        assert!(freq.starts_with("rank,entity_id,name,count,frequency\n1,D1,stroke,2,"));
        assert_eq!(std::fs::read_to_string(&p.cmd_csv).unwrap().lines().count(), 6);
    }
}
