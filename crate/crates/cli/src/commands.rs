use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use icegnn::data::{
    decode_dataset, filter_dataset, generate_synthetic, ingest_dir, record_region_hash,
    save_dataset, DatasetManifest, EchogramRecord,
};
use icegnn::graph::{
    apply_feature_normalization, assemble_sequence, HaversineMode, TemporalGraphSequence,
};
use icegnn::models::{load_checkpoint, save_checkpoint, Checkpoint};
use icegnn::training::{evaluate_rmse, loss_curve_csv, run_trials, RmseReport, TrialSummary};
use icegnn::verify::{run_all, VerifyOptions};
use icegnn::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::plot::{bar_chart, loss_chart, Series};
use crate::{EvalArgs, IngestArgs, ReportArgs, SynthArgs, TrainArgs, VerifyArgs};

pub const SUMMARY_FILE: &str = "summary.json";

/// `summary.json`: the aggregate, the configuration that produced it and the
/// dataset it ran on.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: RunConfig,
    pub dataset_hash: String,
    pub summary: TrialSummary,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| io(path, e))
}

fn io(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn required(value: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    value.ok_or_else(|| Error::Config(format!("{flag} is required (flag, environment or config)")))
}

fn save(out: &Path, records: &[EchogramRecord], manifest: &DatasetManifest) -> Result<()> {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
    }
    save_dataset(out, records, manifest)
}

pub fn synth(args: SynthArgs) -> Result<u8> {
    let mut cfg = RunConfig::load(args.config.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.synthetic.seed = seed;
    }
    cfg.synthetic.validate()?;
    let out = required(args.out.or(cfg.paths.out.clone()), "--out")?;
    let records = generate_synthetic(&cfg.synthetic)?;
    let (kept, manifest) = filter_dataset(records, cfg.synthetic.n_shallow + cfg.synthetic.n_deep)?;
    save(&out, &kept, &manifest)?;
    println!(
        "wrote {} records to {} (sha256 {})",
        manifest.record_count,
        out.display(),
        manifest.content_hash
    );
    Ok(0)
}

pub fn ingest(args: IngestArgs) -> Result<u8> {
    let cfg = RunConfig::load(args.config.config.as_deref())?;
    let out = required(args.out.or(cfg.paths.out.clone()), "--out")?;
    let min_layers = args.min_layers.unwrap_or(cfg.min_layers);
    let outcome = ingest_dir(&args.masks, &args.tracks, min_layers)?;
    save(&out, &outcome.accepted, &outcome.manifest)?;
    let total = outcome.manifest.entries.len();
    println!(
        "accepted {} of {total} echograms into {} (sha256 {})",
        outcome.accepted.len(),
        out.display(),
        outcome.manifest.content_hash
    );
    Ok(0)
}

/// Records and the content hash of their container.
fn read_dataset(path: &Path) -> Result<(Vec<EchogramRecord>, String)> {
    let bytes = std::fs::read(path).map_err(|e| io(path, e))?;
    let records = decode_dataset(&bytes)?;
    let hash = record_region_hash(&bytes).expect("decoded container has a trailer");
    Ok((records, hash))
}

fn assemble(records: &[EchogramRecord], cfg: &RunConfig) -> Result<Vec<TemporalGraphSequence>> {
    let seq_cfg = cfg.sequence_config();
    records
        .iter()
        .map(|r| assemble_sequence(r, &seq_cfg))
        .collect()
}

/// Table-1 layout: model and mean ± std of the total RMSE, then the per-layer
/// breakdown.
pub fn summary_table(summaries: &[&TrialSummary]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<12} {:>18}", "Model", "Total RMSE (px)");
    for s in summaries {
        let _ = writeln!(
            out,
            "{:<12} {:>18}",
            s.model.title(),
            format!("{:.3} ± {:.3}", s.total_rmse_mean, s.total_rmse_std)
        );
    }
    out.push('\n');
    let _ = write!(out, "{:<6}", "Year");
    for s in summaries {
        let _ = write!(out, " {:>18}", s.model.title());
    }
    out.push('\n');
    let years = summaries
        .first()
        .map(|s| s.target_years.clone())
        .unwrap_or_default();
    for (k, year) in years.iter().enumerate() {
        let _ = write!(out, "{year:<6}");
        for s in summaries {
            let cell = format!("{:.3} ± {:.3}", s.per_layer_mean[k], s.per_layer_std[k]);
            let _ = write!(out, " {cell:>18}");
        }
        out.push('\n');
    }
    out
}

fn per_layer_chart(summaries: &[&TrialSummary]) -> String {
    let years: Vec<String> = summaries
        .first()
        .map(|s| s.target_years.iter().map(|y| y.to_string()).collect())
        .unwrap_or_default();
    let series: Vec<Series<'_>> = summaries
        .iter()
        .map(|s| Series {
            label: s.model.title(),
            values: &s.per_layer_mean,
            errors: Some(&s.per_layer_std),
        })
        .collect();
    bar_chart("Per-layer RMSE", "RMSE (px)", &years, &series)
}

pub fn train(args: TrainArgs) -> Result<u8> {
    let mut cfg = RunConfig::load(args.config.config.as_deref())?;
    if let Some(m) = args.model {
        cfg.model = m;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(h) = args.haversine_mode {
        cfg.haversine_mode = h;
    }
    cfg.parallel |= args.parallel;
    if let Some(d) = args.dataset {
        cfg.paths.dataset = Some(d);
    }
    if let Some(o) = args.out {
        cfg.paths.out = Some(o);
    }
    let dataset = required(cfg.paths.dataset.clone(), "--dataset")?;
    let out = required(cfg.paths.out.clone(), "--out")?;
    let mut exp = cfg.experiment()?;
    exp.fault = args.inject_fault.map(Into::into);

    let (records, dataset_hash) = read_dataset(&dataset)?;
    let data = assemble(&records, &cfg)?;
    log::info!(
        "training {} on {} sequences: {} trials, {} epochs",
        cfg.model.title(),
        data.len(),
        cfg.trials,
        cfg.epochs
    );
    let (summary, outcomes) = run_trials(&data, &exp, cfg.trials, cfg.seed, cfg.parallel)?;

    std::fs::create_dir_all(&out).map_err(|e| io(&out, e))?;
    let echo = cfg.echo();
    write(&out.join("config.toml"), echo.to_toml())?;
    for o in &outcomes {
        let i = o.report.trial;
        let mut extra = BTreeMap::new();
        extra.insert("trial".to_string(), i.to_string());
        extra.insert("seed".to_string(), o.report.seed.to_string());
        extra.insert("split_hash".to_string(), o.report.split_hash.clone());
        extra.insert("dataset_hash".to_string(), dataset_hash.clone());
        extra.insert("haversine_mode".to_string(), cfg.haversine_mode.to_string());
        let ck = Checkpoint {
            model: o.model.clone(),
            stats: o.stats.clone(),
            extra,
        };
        save_checkpoint(&out.join(format!("trial-{i}.ckpt")), &ck)?;
        let report = serde_json::to_string_pretty(&o.report).expect("report serializes");
        write(&out.join(format!("trial-{i}.json")), report + "\n")?;
        write(
            &out.join(format!("loss-{i}.csv")),
            loss_curve_csv(&o.report.loss_curve),
        )?;
    }
    let run = RunSummary {
        config: echo,
        dataset_hash,
        summary,
    };
    let json = serde_json::to_string_pretty(&run).expect("summary serializes");
    write(&out.join(SUMMARY_FILE), json + "\n")?;
    let table = summary_table(&[&run.summary]);
    write(&out.join("summary.txt"), &table)?;
    write(
        &out.join("rmse_per_layer.svg"),
        per_layer_chart(&[&run.summary]),
    )?;
    let labels: Vec<String> = run
        .summary
        .trials
        .iter()
        .map(|t| format!("trial {}", t.trial))
        .collect();
    let curves: Vec<Series<'_>> = run
        .summary
        .trials
        .iter()
        .zip(&labels)
        .map(|(t, l)| Series {
            label: l,
            values: &t.loss_curve,
            errors: None,
        })
        .collect();
    let title = format!("{} training loss", run.summary.model.title());
    write(&out.join("loss_curves.svg"), loss_chart(&title, &curves))?;
    print!("{table}");
    Ok(0)
}

#[derive(Serialize)]
struct EvalResult<'a> {
    model: icegnn::models::ModelKind,
    dataset_hash: String,
    sequences: usize,
    rmse: &'a RmseReport,
}

pub fn eval(args: EvalArgs) -> Result<u8> {
    let cfg = RunConfig::load(args.config.config.as_deref())?;
    let dataset = required(args.dataset.or(cfg.paths.dataset.clone()), "--dataset")?;
    let ck = load_checkpoint(&args.checkpoint)?;
    let mut run = cfg.clone();
    if let Some(mode) = ck.extra.get("haversine_mode") {
        run.haversine_mode = mode.parse::<HaversineMode>()?;
    }
    run.synthetic.n_shallow = ck.model.config().time_steps;
    run.synthetic.n_deep = ck.model.config().outputs;
    let (records, dataset_hash) = read_dataset(&dataset)?;
    let seqs = assemble(&records, &run)?
        .iter()
        .map(|s| apply_feature_normalization(s, &ck.stats))
        .collect::<Result<Vec<_>>>()?;
    let rmse = evaluate_rmse(&ck.model, &seqs, &ck.stats)?;
    let result = EvalResult {
        model: ck.model.kind(),
        dataset_hash,
        sequences: seqs.len(),
        rmse: &rmse,
    };
    let json = serde_json::to_string_pretty(&result).expect("eval serializes") + "\n";
    match args.out {
        Some(p) => write(&p, json)?,
        None => print!("{json}"),
    }
    Ok(0)
}

pub fn verify(args: VerifyArgs) -> Result<u8> {
    if args.seeds == 0 {
        return Err(Error::Config("--seeds must be positive".into()));
    }
    let opts = VerifyOptions {
        seeds: args.seeds,
        fault: args.inject_fault.map(Into::into),
        ..VerifyOptions::default()
    };
    let results = run_all(&opts);
    for r in &results {
        println!(
            "{:<4} {:<22} checks {:>5}  max error {:.3e}  tolerance {:.0e}  {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.suite,
            r.checks,
            r.max_error,
            r.tolerance,
            r.worst
        );
    }
    if let Some(p) = args.out {
        let json = serde_json::to_string_pretty(&results).expect("results serialize");
        write(&p, json + "\n")?;
    }
    Ok(if results.iter().all(|r| r.passed) {
        0
    } else {
        1
    })
}

pub fn report(args: ReportArgs) -> Result<u8> {
    let mut runs = Vec::with_capacity(args.runs.len());
    for dir in &args.runs {
        let path = dir.join(SUMMARY_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| io(&path, e))?;
        let run: RunSummary = serde_json::from_str(&text).map_err(|e| Error::Parse {
            offset: 0,
            reason: format!("{}: {e}", path.display()),
        })?;
        runs.push(run);
    }
    let summaries: Vec<&TrialSummary> = runs.iter().map(|r| &r.summary).collect();
    if summaries
        .windows(2)
        .any(|w| w[0].target_years != w[1].target_years)
    {
        return Err(Error::InvalidArgument(
            "runs disagree on target years".into(),
        ));
    }
    let table = summary_table(&summaries);
    write(&args.out.join("table.txt"), &table)?;
    write(
        &args.out.join("rmse_per_layer.svg"),
        per_layer_chart(&summaries),
    )?;
    let curves: Vec<(String, Vec<f64>)> = runs
        .iter()
        .map(|r| (r.summary.model.title().to_string(), mean_curve(&r.summary)))
        .collect();
    let series: Vec<Series<'_>> = curves
        .iter()
        .map(|(l, v)| Series {
            label: l,
            values: v,
            errors: None,
        })
        .collect();
    write(
        &args.out.join("loss_curves.svg"),
        loss_chart("Mean training loss", &series),
    )?;
    print!("{table}");
    Ok(0)
}

fn mean_curve(s: &TrialSummary) -> Vec<f64> {
    let len = s
        .trials
        .iter()
        .map(|t| t.loss_curve.len())
        .min()
        .unwrap_or(0);
    (0..len)
        .map(|e| s.trials.iter().map(|t| t.loss_curve[e]).sum::<f64>() / s.trials.len() as f64)
        .collect()
}
