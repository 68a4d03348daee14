use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::describe::{describe, DescriptiveStats};
use super::io::{write_atomic, IoError};
use super::plot::{build_table, PlotKind};
use crate::fitting::{FamilyKind, FitConfig, FitError, FitResult};
use crate::gof::{FamilyRefit, GofReport, StatKind};
use crate::model::DistributionModel;
use crate::sample::{sub_seed, Sample};
use crate::selection::{vuong, SelectionReport, VuongResult};
use crate::tail::{select_xmin, TailConfig, TailScan};

/// Settings for a full analysis. Read from TOML `key = value` text; any
/// key left out keeps its default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub seed: u64,
    pub replicates: usize,
    pub tests: Vec<StatKind>,
    pub em_restarts: usize,
    pub em_max_iter: usize,
    pub n_floor: usize,
    pub max_candidates: usize,
    /// Fixed power-law cutoff; when absent it is chosen by the KS scan.
    pub x_min: Option<f64>,
    /// Apply the Schwarz correction to the Vuong statistic.
    pub schwarz: bool,
    pub plot_points: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        let tail = TailConfig::default();
        let em = crate::fitting::EmConfig::default();
        Self {
            seed: 1,
            replicates: 350,
            tests: StatKind::ALL.to_vec(),
            em_restarts: em.restarts,
            em_max_iter: em.max_iter,
            n_floor: tail.n_floor,
            max_candidates: tail.max_candidates,
            x_min: None,
            schwarz: false,
            plot_points: super::plot::GRID_POINTS,
        }
    }
}

impl ReportConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, IoError> {
        toml::from_str(text).map_err(|e| IoError::Config(format!("invalid config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }

    pub fn fit_config(&self) -> FitConfig {
        let mut c = FitConfig::default();
        c.em.restarts = self.em_restarts;
        c.em.max_iter = self.em_max_iter;
        c
    }

    pub fn tail_config(&self) -> TailConfig {
        TailConfig {
            n_floor: self.n_floor,
            max_candidates: self.max_candidates,
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 over the sorted values' bit patterns.
pub fn sample_digest(sample: &Sample) -> String {
    let mut h = Sha256::new();
    for v in sample.values() {
        h.update(v.to_bits().to_le_bytes());
    }
    hex(&h.finalize())
}

/// Outcome of one pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Stage<T> {
    Ok { value: T },
    Failed { error: String },
    Skipped { reason: String },
}

impl<T> Stage<T> {
    pub fn value(&self) -> Option<&T> {
        match self {
            Stage::Ok { value } => Some(value),
            _ => None,
        }
    }

    fn from_result<E: std::fmt::Display>(r: Result<T, E>) -> Self {
        match r {
            Ok(value) => Stage::Ok { value },
            Err(e) => Stage::Failed {
                error: e.to_string(),
            },
        }
    }

    fn skipped(reason: impl Into<String>) -> Self {
        Stage::Skipped {
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Named<T> {
    pub name: String,
    #[serde(flatten)]
    pub stage: Stage<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputInfo {
    pub label: String,
    pub rows_read: usize,
    pub rows_rejected: usize,
    pub values_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub config_hash: String,
    /// Seconds since the Unix epoch; the only field that differs between
    /// otherwise identical runs.
    pub timestamp: u64,
    pub version: String,
    pub input: InputInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub describe: Stage<DescriptiveStats>,
    pub fits: Vec<Named<FitResult>>,
    pub gof: Vec<Named<Vec<GofReport>>>,
    pub selection: Stage<SelectionReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailChoice {
    pub x_min: f64,
    pub tail_n: usize,
    /// `scan` or `config`.
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<TailScan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotArtifact {
    pub name: String,
    pub kind: PlotKind,
    pub empirical_tsv: String,
    pub models_tsv: String,
    pub svg: String,
    pub series: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub metadata: RunMetadata,
    pub config: ReportConfig,
    pub full: Section,
    pub tail_selection: Stage<TailChoice>,
    pub tail: Section,
    pub vuong: Stage<VuongResult>,
    pub plots: Stage<Vec<PlotArtifact>>,
}

/// File contents produced alongside the JSON report.
#[derive(Debug, Clone)]
pub struct RenderedFile {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone)]
pub struct ReportOutput {
    pub report: AnalysisReport,
    pub files: Vec<RenderedFile>,
}

// Fixed stream indices so that adding a stage never shifts another's seed.
const STREAM_FIT: u64 = 100;
const STREAM_GOF_FULL: u64 = 1000;
const STREAM_GOF_TAIL: u64 = 2000;

fn fit_kind(
    kind: FamilyKind,
    sample: &Sample,
    config: &FitConfig,
    seed: u64,
) -> Result<FitResult, FitError> {
    match kind.fit(sample, config, seed) {
        Err(FitError::NoInteriorOptimum { best }) => {
            let mut best = *best;
            best.diagnostics
                .warnings
                .push("no interior optimum; the best boundary point is reported".into());
            Ok(best)
        }
        other => other,
    }
}

fn run_section(
    sample: &Sample,
    kinds: &[FamilyKind],
    config: &ReportConfig,
    gof_stream: u64,
) -> Section {
    let fit_config = config.fit_config();
    let fits: Vec<Named<FitResult>> = kinds
        .par_iter()
        .enumerate()
        .map(|(i, &kind)| Named {
            name: kind.name(),
            stage: Stage::from_result(fit_kind(
                kind,
                sample,
                &fit_config,
                sub_seed(config.seed, STREAM_FIT + gof_stream + i as u64),
            )),
        })
        .collect();

    let gof = fits
        .par_iter()
        .enumerate()
        .map(|(i, named)| {
            let stage = match &named.stage {
                _ if config.tests.is_empty() => Stage::skipped("no tests configured"),
                Stage::Ok { value } => {
                    let kind = FamilyKind::of(&value.model);
                    let mut refit = FamilyRefit::new(kind);
                    refit.observed = fit_config.clone();
                    refit.observed.std_errors = false;
                    Stage::from_result(refit.pvalues(
                        sample,
                        &value.model,
                        &config.tests,
                        config.replicates,
                        sub_seed(config.seed, gof_stream + i as u64),
                    ))
                }
                _ => Stage::skipped("fit failed"),
            };
            Named {
                name: named.name.clone(),
                stage,
            }
        })
        .collect();

    let ok_fits: Vec<FitResult> = fits
        .iter()
        .filter_map(|f| f.stage.value().cloned())
        .collect();
    let selection = if ok_fits.is_empty() {
        Stage::skipped("no successful fits")
    } else {
        Stage::from_result(SelectionReport::from_fits(sample.len(), &ok_fits))
    };
    Section {
        describe: Stage::from_result(describe(sample)),
        fits,
        gof,
        selection,
    }
}

fn skipped_section(reason: &str) -> Section {
    Section {
        describe: Stage::skipped(reason),
        fits: Vec::new(),
        gof: Vec::new(),
        selection: Stage::skipped(reason),
    }
}

fn fitted_models(section: &Section) -> Vec<(String, DistributionModel)> {
    section
        .fits
        .iter()
        .filter_map(|f| f.stage.value().map(|v| (f.name.clone(), v.model.clone())))
        .collect()
}

/// Runs the whole protocol on an in-memory sample. Pure apart from the
/// timestamp; files are returned rather than written.
pub fn run_report(sample: &Sample, input: InputInfo, config: &ReportConfig) -> ReportOutput {
    let full = run_section(
        sample,
        &[
            FamilyKind::Stexp,
            FamilyKind::Lognormal,
            FamilyKind::Mixture { m: 2 },
            FamilyKind::Mixture { m: 3 },
        ],
        config,
        STREAM_GOF_FULL,
    );

    let tail_selection: Stage<TailChoice> =
        match config.x_min {
            Some(x_min) => {
                let tail_n = sample.values().iter().filter(|&&v| v >= x_min).count();
                Stage::Ok {
                    value: TailChoice {
                        x_min,
                        tail_n,
                        source: "config".into(),
                        scan: None,
                    },
                }
            }
            None => Stage::from_result(select_xmin(sample, &config.tail_config()).map(|scan| {
                TailChoice {
                    x_min: scan.chosen_xmin,
                    tail_n: scan.tail_n,
                    source: "scan".into(),
                    scan: Some(scan),
                }
            })),
        };

    let tail_sample = tail_selection.value().and_then(|c| sample.tail(c.x_min));
    let (tail, vuong_stage) = match (&tail_selection, &tail_sample) {
        (Stage::Ok { value: choice }, Some(ts)) => {
            let section = run_section(
                ts,
                &[
                    FamilyKind::Pareto {
                        x_min: choice.x_min,
                    },
                    FamilyKind::TruncLognormal {
                        x_min: choice.x_min,
                    },
                ],
                config,
                STREAM_GOF_TAIL,
            );
            let models = fitted_models(&section);
            let v = if models.len() == 2 {
                Stage::from_result(vuong(&models[0].1, &models[1].1, ts, config.schwarz))
            } else {
                Stage::skipped("both tail fits are required")
            };
            (section, v)
        }
        (Stage::Ok { .. }, None) => (
            skipped_section("no observations at or above x_min"),
            Stage::skipped("empty tail"),
        ),
        _ => (
            skipped_section("cutoff selection failed"),
            Stage::skipped("cutoff selection failed"),
        ),
    };

    let mut files = Vec::new();
    let mut artifacts = Vec::new();
    let mut plot_set = vec![("full", sample, fitted_models(&full))];
    if let Some(ts) = &tail_sample {
        plot_set.push(("tail", ts, fitted_models(&tail)));
    }
    for (label, s, models) in plot_set {
        for kind in [PlotKind::Rank, PlotKind::Corank] {
            let kind_name = match kind {
                PlotKind::Rank => "rank",
                PlotKind::Corank => "corank",
            };
            let name = format!("{kind_name}_{label}");
            let table = build_table(kind, s, &models, config.plot_points);
            let empirical_tsv = format!("{name}_empirical.tsv");
            let models_tsv = format!("{name}_models.tsv");
            let svg = format!("{name}.svg");
            files.push(RenderedFile {
                name: empirical_tsv.clone(),
                contents: table.empirical_tsv(),
            });
            files.push(RenderedFile {
                name: models_tsv.clone(),
                contents: table.models_tsv(),
            });
            files.push(RenderedFile {
                name: svg.clone(),
                contents: table.to_svg(
                    &format!("{kind_name} plot, {label} sample"),
                    &empirical_tsv,
                    &models_tsv,
                ),
            });
            let mut series = vec!["empirical".to_string()];
            series.extend(models.iter().map(|m| m.0.clone()));
            artifacts.push(PlotArtifact {
                name,
                kind,
                empirical_tsv,
                models_tsv,
                svg,
                series,
            });
        }
    }

    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let report = AnalysisReport {
        metadata: RunMetadata {
            seed: config.seed,
            config_hash: config.hash(),
            timestamp,
            version: env!("CARGO_PKG_VERSION").to_string(),
            input,
        },
        config: config.clone(),
        full,
        tail_selection,
        tail,
        vuong: vuong_stage,
        plots: Stage::Ok { value: artifacts },
    };
    ReportOutput { report, files }
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl ReportOutput {
    /// Writes `report.json` and the plot files into `dir`, each atomically.
    pub fn write_to(&self, dir: &Path) -> Result<(), IoError> {
        for f in &self.files {
            write_atomic(&dir.join(&f.name), f.contents.as_bytes())?;
        }
        write_atomic(&dir.join("report.json"), self.report.to_json().as_bytes())
    }
}
