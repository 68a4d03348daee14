//! Data ingestion, descriptive statistics, plot emission and the full
//! analysis run.

mod describe;
mod io;
mod plot;
mod report;

pub use describe::{describe, DescribeError, DescriptiveStats};
pub use io::{load_csv, write_atomic, write_csv, ColumnSelector, IoError, LoadedSample, RowReject};
pub use plot::{corank_plot_data, rank_plot_data, Curve, PlotKind, PlotTable, GRID_POINTS};
pub use report::{
    run_report, sample_digest, AnalysisReport, InputInfo, Named, PlotArtifact, RenderedFile,
    ReportConfig, ReportOutput, RunMetadata, Section, Stage, TailChoice,
};
