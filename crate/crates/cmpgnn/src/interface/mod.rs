//! File formats, result emission, and the experiment entry points the CLI
//! drives.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod emit;

use std::io::Write;
use std::path::{Path, PathBuf};

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{expand_sweep, parse_config, CsbmConfig, DomainConfig, ExperimentConfig};
pub use dataset::{load_dataset, write_dataset, DatasetBundle};
pub use emit::{emit_results, read_metrics_jsonl, read_summary, SummaryDoc, PRNG_NAME};

use crate::bridger::stream_rng;
use crate::csbm::generate_domain;
use crate::error::{Error, Result};
use crate::graphstore::{combine, symmetric_normalize, DomainTag, Graph};
use crate::metrics::{accuracy, auroc, center_distance, domain_similarity};
use crate::model::{classify_plain, encoder_forward_plain, predicted_classes};
use crate::numkernel::DenseMatrix;
use crate::trainer::{fit_with, variant, RunSummary};

const TAG_CSBM: u64 = 9;
const TARGET_SEED_SALT: u64 = 0x9e3779b97f4a7c15;

/// Load or generate one domain's graph.
pub fn materialize_domain(domain: &DomainConfig, which: DomainTag) -> Result<Graph> {
    if let Some(bundle) = &domain.dataset {
        return load_dataset(bundle, which);
    }
    if let Some(csbm) = &domain.csbm {
        let spec = csbm.to_spec()?;
        let role = match which {
            DomainTag::Source => 0,
            DomainTag::Target => 1,
        };
        let mut rng = stream_rng(spec.seed, 0, role, TAG_CSBM);
        return generate_domain(&spec, which, &mut rng);
    }
    Err(Error::Validation(format!(
        "[{}] needs exactly one of `dataset` or `csbm`",
        which
    )))
}

/// Apply a CLI seed override: the training seed, and the generator seeds of
/// any CSBM domains (target salted so the domains stay independent).
pub fn apply_seed_override(config: &mut ExperimentConfig, seed: u64) {
    config.train.seed = seed;
    if let Some(csbm) = &mut config.source.csbm {
        csbm.seed = seed;
    }
    if let Some(csbm) = &mut config.target.csbm {
        csbm.seed = seed ^ TARGET_SEED_SALT;
    }
}

/// Read a config: TOML normally, or the `config` object embedded in a
/// previously emitted `summary.json`.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        if let Ok(doc) = serde_json::from_str::<SummaryDoc>(&text) {
            doc.config.validate()?;
            return Ok(doc.config);
        }
        let config: ExperimentConfig = serde_json::from_str(&text)?;
        config.validate()?;
        return Ok(config);
    }
    parse_config(&text)
}

/// Run one training experiment: stream `metrics.jsonl` as epochs finish,
/// checkpoint on schedule, then emit the summary, embeddings, edge log, and
/// a final checkpoint.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let source = materialize_domain(&config.source, DomainTag::Source)?;
    let target = materialize_domain(&config.target, DomainTag::Target)?;

    let metrics_path = out_dir.join("metrics.jsonl");
    let mut metrics_file = std::io::BufWriter::new(std::fs::File::create(&metrics_path)?);
    let every = config.train.checkpoint_every;
    let result = fit_with(source, target, &config.train, |state| {
        let record = state.history.last().expect("epoch just ran");
        emit::append_metrics_line(&mut metrics_file, record)?;
        if every > 0 && state.epoch % every == 0 {
            save_checkpoint(
                &state.params,
                config.train.seed,
                &out_dir.join(format!("checkpoint_epoch{}.txt", state.epoch)),
            )?;
        }
        Ok(())
    })?;
    metrics_file.flush()?;
    drop(metrics_file);

    save_checkpoint(
        &result.params,
        config.train.seed,
        &out_dir.join("checkpoint_final.txt"),
    )?;
    emit_results(config, &result, out_dir)?;
    Ok(result.summary)
}

/// Generate the configured CSBM domains as dataset files under `out_dir`.
pub fn run_generate(config: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    for (domain, which) in [
        (&config.source, DomainTag::Source),
        (&config.target, DomainTag::Target),
    ] {
        if domain.csbm.is_none() {
            return Err(Error::Validation(format!(
                "generate needs a csbm section for the {} domain",
                which
            )));
        }
        let graph = materialize_domain(domain, which)?;
        write_dataset(&graph, out_dir, &which.to_string())?;
    }
    Ok(())
}

/// Run every registered training variant on the same config and seed, one
/// output directory per variant.
pub fn run_ablate(
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<Vec<(&'static str, RunSummary)>> {
    let mut summaries = Vec::new();
    for v in variant::registry() {
        let mut run = config.clone();
        run.train.ablation = v.name().into();
        run.run_label = format!("{}_{}", config.run_label, v.name());
        let summary = run_experiment(&run, &out_dir.join(v.name()))?;
        summaries.push((v.name(), summary));
    }
    Ok(summaries)
}

/// Expand the sweep grid and run each combination, one directory per run.
pub fn run_sweep(config: &ExperimentConfig, out_dir: &Path) -> Result<Vec<(String, RunSummary)>> {
    let mut summaries = Vec::new();
    for run in expand_sweep(config) {
        let summary = run_experiment(&run, &out_dir.join(&run.run_label))?;
        summaries.push((run.run_label.clone(), summary));
    }
    Ok(summaries)
}

/// Evaluate a checkpoint on the configured datasets: encoder forward on the
/// block-diagonal combined graph, then classification metrics. Informational
/// only; paper-reported numbers for external datasets have no pass/fail
/// tolerance here.
pub fn run_evaluate(checkpoint_path: &Path, config: &ExperimentConfig) -> Result<serde_json::Value> {
    let (params, seed) = load_checkpoint(checkpoint_path)?;
    let source = materialize_domain(&config.source, DomainTag::Source)?;
    let target = materialize_domain(&config.target, DomainTag::Target)?;
    let norm_s = symmetric_normalize(source.adjacency())?;
    let norm_t = symmetric_normalize(target.adjacency())?;
    let h_s = encoder_forward_plain(&params, &norm_s, source.features())?;
    let h_t = encoder_forward_plain(&params, &norm_t, target.features())?;

    let combined = combine(source, target)?;
    let norm_c = symmetric_normalize(combined.adjacency())?;
    let h_c = encoder_forward_plain(&params, &norm_c, combined.features())?;
    let n_s = combined.source().node_count();
    let n_t = combined.target().node_count();
    let h_ct = DenseMatrix::from_vec(
        n_t,
        h_c.cols(),
        (n_s..n_s + n_t)
            .flat_map(|r| h_c.row(r).iter().copied())
            .collect(),
    )?;
    let probs_ct = classify_plain(&params, &h_ct)?;
    let predicted = predicted_classes(&probs_ct);

    let target_labels = combined.target().labels();
    let target_accuracy = target_labels
        .map(|t| accuracy(&predicted, t))
        .transpose()?;
    let target_auroc = match target_labels {
        Some(t) if probs_ct.cols() == 2 => {
            let scores: Vec<f64> = (0..n_t).map(|r| probs_ct.get(r, 1)).collect();
            let labels: Vec<bool> = t.iter().map(|&l| l == 1).collect();
            auroc(&scores, &labels).ok()
        }
        _ => None,
    };
    let classes = combined.source().num_classes().unwrap_or(0);
    let centers = match combined.source().labels() {
        Some(s) => center_distance(&h_s, s, &h_t, &predicted, classes)?,
        None => Vec::new(),
    };
    let (domain_sim, _) = domain_similarity(&h_s, &h_t, combined.inserted_edges(), &h_c);

    Ok(serde_json::json!({
        "checkpoint": checkpoint_path.display().to_string(),
        "checkpoint_seed": seed,
        "target_accuracy": target_accuracy,
        "target_auroc": target_auroc,
        "center_distance": centers,
        "domain_similarity": domain_sim,
    }))
}

/// Resolve the output directory: a CLI override wins, then the config.
pub fn resolve_out_dir(config: &ExperimentConfig, cli_out: Option<PathBuf>) -> Result<PathBuf> {
    cli_out
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| {
            Error::Validation("no output directory (pass --out or set output_dir)".into())
        })
}

/// Write a short human-readable line per run to `w`.
pub fn print_summaries(
    w: &mut impl Write,
    summaries: &[(impl AsRef<str>, RunSummary)],
) -> Result<()> {
    for (name, summary) in summaries {
        let acc = summary
            .final_metrics
            .as_ref()
            .and_then(|m| m.target_accuracy)
            .map(|a| format!("{:.4}", a))
            .unwrap_or_else(|| "n/a".into());
        let best = summary
            .best_metrics
            .as_ref()
            .and_then(|m| m.target_accuracy)
            .map(|a| format!("{:.4}", a))
            .unwrap_or_else(|| "n/a".into());
        writeln!(
            w,
            "{}: final target accuracy {}, best {} (epoch {:?})",
            name.as_ref(),
            acc,
            best,
            summary.best_epoch
        )?;
    }
    Ok(())
}
