use std::path::Path;

use emotrans_core::metrics::{dataset_stats, DatasetStats};

use crate::common::{load_manifests, write_json, write_text};
use crate::config::PipelineConfig;
use crate::error::CliResult;

pub fn run(cfg: &PipelineConfig, manifest: Option<&Path>) -> CliResult<DatasetStats> {
    let path = manifest.map_or_else(|| cfg.manifests_path(), Path::to_path_buf);
    let stats = dataset_stats(&load_manifests(&path)?)?;
    write_json(&cfg.paths.run_dir.join("stats.json"), &stats)?;
    let text = stats.render_text();
    write_text(&cfg.paths.run_dir.join("stats.txt"), &text)?;
    print!("{text}");
    Ok(stats)
}
