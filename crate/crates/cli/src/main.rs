use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Deserialize;

use activepoly::imaging::LANDMARKS_FILE;
use activepoly::metrics::{read_labels, MetricRow};
use activepoly::motion::{peak_motion_frame, SegmentLabel};
use activepoly::phantom::write_sequence;
use activepoly::report::{read_report, write_overlay, ReportFormat};
use activepoly::{
    emit_report, evaluate_batch, generate_phantom, load_sequence, process_echo, render_overlay, EchoReport,
    EchoSequence, Error, PhantomConfig, PhantomTruth, PipelineConfig,
};

const EXIT_VALIDATION: u8 = 2;
const EXIT_UNPROCESSABLE: u8 = 3;

#[derive(Parser)]
#[command(name = "activepoly", version, about = "LV wall motion analysis and MI detection with active polynomials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze one echo directory, or every echo directory inside it.
    Analyze {
        echo_dir: PathBuf,
        /// Pipeline configuration JSON; missing fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "reports")]
        out: PathBuf,
        /// Also write end-diastole and peak-motion overlays.
        #[arg(long)]
        overlay: bool,
        /// Infarction threshold on the displacement ratio.
        #[arg(long)]
        threshold: Option<f64>,
        /// Snake iterations per frame.
        #[arg(long)]
        iters: Option<usize>,
        /// Regularization for both ridge and active polynomial fits.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Render a synthetic echo (or a JSON array of them) with ground truth.
    Phantom {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a directory of reports against a labels file.
    Evaluate { reports_dir: PathBuf, labels: PathBuf },
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Unprocessable { .. } => EXIT_UNPROCESSABLE,
                Error::Validation(_) | Error::Ingestion { .. } => EXIT_VALIDATION,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Analyze {
            echo_dir,
            config,
            out,
            overlay,
            threshold,
            iters,
            lambda,
        } => load_config(config.as_deref(), threshold, iters, lambda)
            .and_then(|cfg| analyze(&echo_dir, &cfg, &out, overlay)),
        Command::Phantom { config, out } => phantom(&config, &out).map(|_| 0),
        Command::Evaluate { reports_dir, labels } => evaluate(&reports_dir, &labels).map(|_| 0),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn load_config(
    path: Option<&Path>,
    threshold: Option<f64>,
    iters: Option<usize>,
    lambda: Option<f64>,
) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Validation(format!("{}: {e}", p.display())))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(t) = threshold {
        cfg.threshold = t;
    }
    if let Some(n) = iters {
        cfg.chanvese.iterations = n;
    }
    if let Some(l) = lambda {
        cfg.lambda_rp = l;
        cfg.lambda_ap = l;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// An echo directory holds the landmarks sidecar; anything else is taken
/// as a folder of echo directories.
fn echo_dirs(root: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if root.join(LANDMARKS_FILE).is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let entries = fs::read_dir(root).map_err(|e| Error::Ingestion {
        path: root.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(LANDMARKS_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Ingestion {
            path: root.to_path_buf(),
            reason: format!("no {LANDMARKS_FILE} here or in any subdirectory"),
        }
        .into());
    }
    Ok(dirs)
}

fn analyze(root: &Path, cfg: &PipelineConfig, out: &Path, overlay: bool) -> anyhow::Result<u8> {
    let dirs = echo_dirs(root)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let results: Vec<(PathBuf, anyhow::Result<()>)> = dirs
        .par_iter()
        .map(|dir| (dir.clone(), analyze_one(dir, cfg, out, overlay)))
        .collect();
    let single = results.len() == 1;
    let mut code = 0;
    for (dir, result) in results {
        if let Err(e) = result {
            if single {
                return Err(e);
            }
            eprintln!("{}: {e:#}", dir.display());
            code = code.max(exit_code_for(&e));
        }
    }
    Ok(code)
}

fn analyze_one(dir: &Path, cfg: &PipelineConfig, out: &Path, overlay: bool) -> anyhow::Result<()> {
    let seq = load_sequence(dir, &dir.join(LANDMARKS_FILE))?;
    let report = process_echo(&seq, cfg)?;
    for f in &report.failures {
        eprintln!("{}: frame {} skipped: {}", report.id, f.frame, f.reason);
    }
    // curves are useful even when the echo cannot be diagnosed
    emit_report(&report, out, &[ReportFormat::Csv])?;
    let diagnosis = report.require_diagnosis()?;
    emit_report(&report, out, &[ReportFormat::Json])?;
    if overlay {
        write_overlays(&seq, &report, out)?;
    }
    let infarcted: Vec<u8> = diagnosis
        .verdicts
        .iter()
        .filter(|v| v.label == SegmentLabel::Infarcted)
        .map(|v| v.segment_id)
        .collect();
    println!(
        "{}: {} (gate {}, LVEF {:.3}, infarcted segments {:?})",
        report.id,
        serde_json::to_value(diagnosis.echo_label)?.as_str().unwrap_or("?"),
        serde_json::to_value(diagnosis.gate)?.as_str().unwrap_or("?"),
        diagnosis.lvef,
        infarcted
    );
    Ok(())
}

fn write_overlays(seq: &EchoSequence, report: &EchoReport, out: &Path) -> anyhow::Result<()> {
    let Some(ed) = report.models.first() else {
        return Ok(());
    };
    let ed_img = render_overlay(&seq.frames()[ed.frame_index], ed, None);
    write_overlay(&ed_img, &out.join(format!("{}.overlay_ed.png", report.id)))?;
    if report.curves.is_empty() {
        return Ok(());
    }
    let peak = &report.models[peak_motion_frame(&report.curves)];
    let img = render_overlay(&seq.frames()[peak.frame_index], peak, Some(ed));
    write_overlay(&img, &out.join(format!("{}.overlay_peak.png", report.id)))?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PhantomInput {
    One(PhantomConfig),
    Many(Vec<PhantomConfig>),
}

/// Labels in the evaluation format; frozen segments are graded akinetic.
fn truth_labels(truth: &PhantomTruth) -> serde_json::Value {
    let segments: BTreeMap<String, u8> = (1..=7u8)
        .map(|s| {
            let grade = match truth.segment_labels.get(&s) {
                Some(SegmentLabel::Infarcted) => 3,
                _ => 1,
            };
            (s.to_string(), grade)
        })
        .collect();
    serde_json::json!({ "segments": segments, "echo": truth.echo_label })
}

fn phantom(config: &Path, out: &Path) -> anyhow::Result<()> {
    let text = fs::read_to_string(config).map_err(|e| Error::Ingestion {
        path: config.to_path_buf(),
        reason: e.to_string(),
    })?;
    let input: PhantomInput =
        serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", config.display())))?;
    let (configs, nested) = match input {
        PhantomInput::One(c) => (vec![c], false),
        PhantomInput::Many(cs) => (cs, true),
    };
    let mut labels = serde_json::Map::new();
    for cfg in &configs {
        if labels.contains_key(&cfg.id) {
            bail!(Error::Validation(format!("duplicate phantom id {:?}", cfg.id)));
        }
        let (seq, truth) = generate_phantom(cfg)?;
        let dir = if nested { out.join(&cfg.id) } else { out.to_path_buf() };
        write_sequence(&seq, &truth, &dir)?;
        println!(
            "{}: {} frames, LVEF {:.3}, {}, infarcted segments {:?}",
            cfg.id,
            seq.len(),
            truth.true_lvef,
            serde_json::to_value(truth.echo_label)?.as_str().unwrap_or("?"),
            truth.infarcted_segments()
        );
        labels.insert(cfg.id.clone(), truth_labels(&truth));
    }
    let path = out.join("labels.json");
    fs::write(&path, serde_json::to_string_pretty(&labels)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
}

fn table_row(name: &str, row: &MetricRow) -> String {
    let (c, m) = (&row.counts, &row.metrics);
    format!(
        "{name:<8} {:>4} {:>4} {:>4} {:>4}  {:>6} {:>6} {:>6} {:>6} {:>6} {:>6}",
        c.tp,
        c.tn,
        c.fp,
        c.fn_,
        fmt_metric(m.accuracy),
        fmt_metric(m.sensitivity),
        fmt_metric(m.specificity),
        fmt_metric(m.precision),
        fmt_metric(m.f1),
        fmt_metric(m.far)
    )
}

fn evaluate(reports_dir: &Path, labels_path: &Path) -> anyhow::Result<()> {
    let labels = read_labels(labels_path)?;
    let entries = fs::read_dir(reports_dir).map_err(|e| Error::Ingestion {
        path: reports_dir.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_str().is_some_and(|s| s.ends_with(".report.json")))
        .collect();
    paths.sort();
    let reports = paths.iter().map(|p| read_report(p)).collect::<Result<Vec<_>, _>>()?;
    let eval = evaluate_batch(&reports, &labels)?;
    let header = format!(
        "{:<8} {:>4} {:>4} {:>4} {:>4}  {:>6} {:>6} {:>6} {:>6} {:>6} {:>6}",
        "", "TP", "TN", "FP", "FN", "Acc", "Sen", "Spe", "Ppr", "F1", "FAR"
    );
    println!("{} echos\n\nper segment\n{header}", reports.len());
    for (seg, row) in &eval.per_segment {
        println!("{}", table_row(&format!("seg{seg}"), row));
    }
    println!("{}", table_row("pooled", &eval.pooled));
    println!("\nper echo\n{header}\n{}", table_row("echo", &eval.per_echo));
    Ok(())
}
