//! Command-line interface. The binary is a thin wrapper around [`execute`].

use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::entity_model::{load_dataset, CaseId, DatasetFormat, RejectReason, ResolutionLabel};
use crate::evaluate::{emit_report, pareto_frontier, roc_sweep, threshold_sweep, ReportFormat};
use crate::pipeline::{
    enrich, run_pipeline_with, score_case, CaseStatus, Clock, Engine, MetricsFile, PipelineError, ReviewDesk,
    ReviewError, RunConfig, METRICS_FILE,
};
use crate::review_api::{serve, CaseSummary};
use crate::similarity;

#[derive(Debug, Parser)]
#[command(name = "ermatch", version, about = "Resolve declared company names against official registries")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Process a dataset and write a run directory
    Run(RunArgs),
    /// Sweep accept thresholds for each similarity metric
    Calibrate(CalibrateArgs),
    /// Inspect and decide queued cases
    #[command(subcommand)]
    Review(ReviewCommand),
    /// Print the metrics of a finished run
    Report(ReportArgs),
    /// Serve the review API for a run directory
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input dataset (overrides the config)
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output run directory (overrides the config)
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Registry store directory (overrides the config; defaults to <out-dir>/registry)
    #[arg(long)]
    pub registry: Option<PathBuf>,
    /// Deciding backend; repeat for an ensemble
    #[arg(long = "backend")]
    pub backends: Vec<String>,
    /// Seed for the oversampled training file
    #[arg(long)]
    pub seed: Option<u64>,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path).map_err(PipelineError::from)?,
            None => {
                let (Some(input), Some(out_dir)) = (&self.input, &self.out_dir) else {
                    return Err(CliError::Usage("run needs --config, or both --input and --out-dir".into()));
                };
                let registry = self.registry.clone().unwrap_or_else(|| out_dir.join("registry"));
                RunConfig::new(input, out_dir, registry)
            }
        };
        if let Some(i) = self.input {
            cfg.input = i;
        }
        if let Some(o) = self.out_dir {
            cfg.out_dir = o;
        }
        if let Some(r) = self.registry {
            cfg.registry = r;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.select_backends(&self.backends);
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ReviewCommand {
    /// List queued cases
    List {
        #[arg(long)]
        run_dir: PathBuf,
        /// pending or resolved
        #[arg(long)]
        status: Option<CaseStatus>,
    },
    /// Show one case with its audit trail
    Show {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long = "case")]
        case_id: String,
    },
    /// Accept or reject a pending case
    Decide {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long = "case")]
        case_id: String,
        /// Accepted or Rejected
        #[arg(long)]
        decision: ResolutionLabel,
        #[arg(long)]
        reviewer: String,
        /// NameMismatch, LegalFormMismatch, IdentifierMismatch, MissingReference or Other
        #[arg(long)]
        reason: Option<String>,
        /// Text for an Other reason
        #[arg(long)]
        reason_text: Option<String>,
    },
    /// Return a resolved case to the queue
    Reprocess {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long = "case")]
        case_id: String,
        #[arg(long)]
        reviewer: String,
    },
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub run_dir: PathBuf,
    /// csv, markdown or json
    #[arg(long, default_value = "markdown")]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub run_dir: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: IpAddr,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Review(#[from] ReviewError),
    #[error("{0}")]
    Other(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn parse_reason(kind: Option<String>, text: Option<String>) -> Result<Option<RejectReason>, CliError> {
    match (kind.as_deref(), text) {
        (None, None) => Ok(None),
        (None, Some(_)) => Err(CliError::Usage("--reason-text needs --reason Other".into())),
        (Some("Other"), Some(t)) => RejectReason::other(t).map(Some).map_err(|e| CliError::Usage(e.to_string())),
        (Some("Other"), None) => Err(CliError::Usage("--reason Other needs --reason-text".into())),
        (Some(k), None) if RejectReason::KINDS.contains(&k) => {
            Ok(Some(k.parse().map_err(|e: crate::entity_model::ModelError| CliError::Usage(e.to_string()))?))
        }
        (Some(k), _) => Err(CliError::Usage(format!(
            "unknown reason {k:?} (expected one of {})",
            RejectReason::KINDS.join(", ")
        ))),
    }
}

fn print_json<T: serde::Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    writeln!(out, "{}", serde_json::to_string_pretty(value).expect("serializable"))?;
    Ok(())
}

/// Runs one command, writing its normal output to `out`.
pub fn execute(cli: Cli, clock: Box<dyn Clock>, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.into_config()?;
            let report = run_pipeline_with(&cfg, clock.as_ref())?;
            writeln!(
                out,
                "{} cases: {} accepted, {} rejected, {} doubtful ({} registry hits, {} enqueued, {} errors)",
                report.cases_total,
                report.resolved.accepted,
                report.resolved.rejected,
                report.resolved.doubtful,
                report.registry_hits.len(),
                report.enqueued.len(),
                report.errors.len()
            )?;
            if !report.metrics.is_empty() {
                out.write_all(emit_report(&report.metrics, ReportFormat::Markdown).expect("rows present").as_bytes())?;
            }
            writeln!(out, "results in {}", cfg.out_dir.display())?;
        }
        Command::Calibrate(args) => calibrate(args, out)?,
        Command::Review(cmd) => review(cmd, clock, out)?,
        Command::Report(args) => {
            let metrics = load_metrics(&args.run_dir)?;
            if args.format == "json" {
                print_json(out, &metrics)?;
            } else {
                let format: ReportFormat = args.format.parse().map_err(CliError::Usage)?;
                let text = emit_report(&metrics.rows, format).map_err(|e| CliError::Other(e.to_string()))?;
                out.write_all(text.as_bytes())?;
            }
        }
        Command::Serve(args) => {
            let desk = ReviewDesk::open(&args.run_dir, clock)?;
            let addr = SocketAddr::new(args.bind, args.port);
            writeln!(out, "serving {} on http://{addr}", args.run_dir.display())?;
            out.flush()?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(&args.run_dir, addr, desk))
                .map_err(|e| CliError::Other(e.to_string()))?;
        }
    }
    Ok(())
}

fn load_metrics(run_dir: &Path) -> Result<MetricsFile, CliError> {
    let path = run_dir.join(METRICS_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|_| CliError::Other(format!("{} has no metrics (was ground truth present?)", run_dir.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

fn review(cmd: ReviewCommand, clock: Box<dyn Clock>, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        ReviewCommand::List { run_dir, status } => {
            let mut desk = ReviewDesk::open(&run_dir, clock)?;
            let queue = desk.queue()?;
            for e in queue.list(status) {
                let c = &e.case;
                let min = c.scores.values().copied().reduce(f64::min);
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}",
                    c.case_id,
                    serde_json::to_value(e.status).expect("serializable").as_str().unwrap_or_default(),
                    c.record.company_name,
                    c.reference.official_name.as_deref().unwrap_or("-"),
                    min.map(|m| format!("{m:.3}")).unwrap_or_else(|| "-".into())
                )?;
            }
        }
        ReviewCommand::Show { run_dir, case_id } => {
            let mut desk = ReviewDesk::open(&run_dir, clock)?;
            let id = CaseId(case_id);
            let entry = desk.queue()?.get(&id).ok_or(ReviewError::NotFound(id))?;
            print_json(out, &CaseSummary::from_entry(entry, true))?;
        }
        ReviewCommand::Decide {
            run_dir,
            case_id,
            decision,
            reviewer,
            reason,
            reason_text,
        } => {
            let reason = parse_reason(reason, reason_text)?;
            let mut desk = ReviewDesk::open(&run_dir, clock)?;
            let entry = desk.apply_review_decision(&CaseId(case_id), decision, &reviewer, reason)?;
            print_json(out, &CaseSummary::from_entry(&entry, true))?;
        }
        ReviewCommand::Reprocess {
            run_dir,
            case_id,
            reviewer,
        } => {
            let mut desk = ReviewDesk::open(&run_dir, clock)?;
            let entry = desk.reprocess_case(&CaseId(case_id), &reviewer)?;
            print_json(out, &CaseSummary::from_entry(&entry, true))?;
        }
    }
    Ok(())
}

fn calibrate(args: CalibrateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = match (&args.config, &args.input) {
        (Some(c), _) => RunConfig::load(c).map_err(PipelineError::from)?,
        (None, Some(i)) => RunConfig::new(i, "", ""),
        (None, None) => return Err(CliError::Usage("calibrate needs --config or --input".into())),
    };
    if let Some(i) = args.input {
        cfg.input = i;
    }
    let engine = Engine::from_config(&cfg).map_err(PipelineError::from)?;
    let client = cfg.reference_client().map_err(PipelineError::from)?;
    let mut cases = load_dataset(&cfg.input, DatasetFormat::Auto).map_err(PipelineError::from)?;
    for case in &mut cases {
        if let Err(e) = enrich(case, client.as_ref()) {
            log::warn!("{}: {e}", case.case_id);
        }
        score_case(case, &engine);
    }
    for metric in [similarity::LEVENSHTEIN, similarity::COSINE, similarity::JACCARD] {
        let scored: Vec<(f64, bool)> = cases
            .iter()
            .filter_map(|c| {
                let truth = match c.ground_truth? {
                    ResolutionLabel::Accepted => true,
                    ResolutionLabel::Rejected => false,
                    ResolutionLabel::Doubtful => return None,
                };
                Some((*c.scores.get(metric)?, truth))
            })
            .collect();
        writeln!(out, "{metric}: {} labeled cases with a reference", scored.len())?;
        match roc_sweep(&scored) {
            Ok(curve) => writeln!(out, "  roc auc {:.4}", curve.auc)?,
            Err(e) => {
                writeln!(out, "  {e}")?;
                continue;
            }
        }
        writeln!(out, "  threshold  accuracy  tpr     fpr")?;
        for p in pareto_frontier(&threshold_sweep(&scored)) {
            writeln!(out, "  {:<9.4}  {:<8.4}  {:<6.4}  {:.4}", p.threshold, p.accuracy, p.tpr, p.fpr)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reasons_from_flags() {
        assert_eq!(parse_reason(None, None).unwrap(), None);
        assert_eq!(
            parse_reason(Some("MissingReference".into()), None).unwrap(),
            Some(RejectReason::MissingReference)
        );
        assert_eq!(
            parse_reason(Some("Other".into()), Some("duplicate filing".into())).unwrap(),
            Some(RejectReason::Other("duplicate filing".into()))
        );
        assert!(parse_reason(Some("Other".into()), None).is_err());
        assert!(parse_reason(Some("Bogus".into()), None).is_err());
        assert!(parse_reason(None, Some("x".into())).is_err());
    }

    #[test]
    fn parses_commands() {
        let cli = Cli::try_parse_from([
            "ermatch", "review", "decide", "--run-dir", "out", "--case", "c1", "--decision", "Rejected", "--reviewer",
            "jr", "--reason", "MissingReference",
        ])
        .unwrap();
        assert!(matches!(cli.command, Command::Review(ReviewCommand::Decide { .. })));
        let cli = Cli::try_parse_from(["ermatch", "run", "--input", "a.csv", "--out-dir", "o", "--backend", "cosine"]).unwrap();
        let Command::Run(args) = cli.command else { panic!() };
        let cfg = args.into_config().unwrap();
        assert_eq!(cfg.registry, PathBuf::from("o/registry"));
        assert_eq!(cfg.effective_decision(), vec!["cosine"]);
        assert!(Cli::try_parse_from(["ermatch", "serve", "--run-dir", "o", "--bind", "nope"]).is_err());
    }
}
