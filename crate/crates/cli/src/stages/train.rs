use emotrans_core::{seed, FeatureSequence, UtteranceManifest};
use emotrans_mtetr::train::EpochRecord;
use emotrans_mtetr::{checkpoint, make_frame_targets, train, Mtetr, TrainExample, TrainReport};

use crate::clients::Clients;
use crate::common::{ensure_dir, load_manifests, load_trimmed, par_map, split_of, trimmed_segments, write_json,
    write_text, TrimRecord, TRAIN};
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};

/// Trimmed audio of `m` run through the feature extractor.
pub fn features_for(
    cfg: &PipelineConfig,
    clients: &Clients,
    m: &UtteranceManifest,
) -> CliResult<(TrimRecord, FeatureSequence)> {
    let (rec, audio) = load_trimmed(cfg, &m.id)?;
    let f = clients.features.extract(&audio)?;
    if f.dim() != cfg.mtetr.feature_dim {
        return Err(CliError::Validation(format!(
            "`{}`: extractor returned {} channels, mtetr.feature_dim is {}",
            m.id,
            f.dim(),
            cfg.mtetr.feature_dim
        )));
    }
    if (f.frame_rate() - cfg.mtetr.frame_rate).abs() > 1e-9 {
        return Err(CliError::Validation(format!(
            "`{}`: extractor runs at {} fps, mtetr.frame_rate is {}",
            m.id,
            f.frame_rate(),
            cfg.mtetr.frame_rate
        )));
    }
    Ok((rec, f))
}

pub fn example_for(cfg: &PipelineConfig, clients: &Clients, m: &UtteranceManifest) -> CliResult<TrainExample> {
    let (rec, f) = features_for(cfg, clients, m)?;
    let segs = trimmed_segments(m, &rec.alignment, f.len(), f.frame_rate())?;
    let targets = make_frame_targets(&segs, f.frame_rate(), f.len(), cfg.mtetr.dilation_frames)?;
    Ok(TrainExample::new(f, targets)?)
}

pub fn model_seed(cfg: &PipelineConfig) -> u64 {
    seed::derive_seed(cfg.seed, "mtetr", 0)
}

pub fn run(cfg: &PipelineConfig, clients: &Clients) -> CliResult<TrainReport> {
    let manifests: Vec<UtteranceManifest> = load_manifests(&cfg.manifests_path())?
        .into_iter()
        .filter(|m| split_of(m) == TRAIN)
        .collect();
    if manifests.is_empty() {
        return Err(CliError::Validation("no training utterances in the manifest".into()));
    }
    let data = par_map(cfg.parallelism, &manifests, |m| example_for(cfg, clients, m))?;
    let model = Mtetr::new(cfg.mtetr.model(), model_seed(cfg))?;
    let report = train(&model, &data, &cfg.mtetr.train(model_seed(cfg)))?;

    let dir = cfg.checkpoint_dir();
    ensure_dir(&dir)?;
    let metadata = serde_json::json!({
        "seed": cfg.seed,
        "utterances": data.len(),
        "frame_rate": cfg.mtetr.frame_rate,
        "config_hash": cfg.hash()?,
    });
    checkpoint::save(&model, &cfg.checkpoint_path(), metadata)?;
    let mut log = String::new();
    for r in &report.history {
        log.push_str(&serde_json::to_string::<EpochRecord>(r)?);
        log.push('\n');
    }
    write_text(&dir.join("loss.jsonl"), &log)?;
    write_json(&dir.join("train-report.json"), &report)?;
    println!(
        "trained on {} utterances for {} epochs (final loss {:.4}) -> {}",
        data.len(),
        report.history.len(),
        report.history.last().map_or(f64::NAN, |r| r.loss),
        cfg.checkpoint_path().display()
    );
    Ok(report)
}
