//! `scvae ace` — average covariate effects with bootstrap intervals.

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Result};
use scvae_core::infer::{self, AceEstimate};
use scvae_core::rng::{stream_rng, Stream};

use crate::config::load_config;
use crate::manifest::{self, Manifest, ARTIFACT_VERSION};
use crate::{commands, io};

fn parse_patterns(spec: &str) -> Result<Vec<(u8, u8)>> {
    match spec {
        "all" => Ok(vec![(1, 1), (1, 0), (0, 1), (0, 0)]),
        "11" => Ok(vec![(1, 1)]),
        "10" => Ok(vec![(1, 0)]),
        "01" => Ok(vec![(0, 1)]),
        "00" => Ok(vec![(0, 0)]),
        other => bail!("bad pattern `{other}` (expected 11, 10, 01, 00, or all)"),
    }
}

/// Runs the command: reads the covariate spec, computes one effect row per
/// (level, pattern) for categorical covariates or per (grid value, pattern)
/// for continuous ones, and writes `ace.csv` plus the manifest.
pub fn run(
    checkpoint_path: &Path,
    data_path: &Path,
    config_path: &Path,
    out_dir: &Path,
) -> Result<()> {
    let started = Instant::now();
    std::fs::create_dir_all(out_dir)?;
    let mut cfg = load_config(config_path)?;

    let covariate = match cfg.take_raw("covariate") {
        Some(c) => c,
        None => bail!("{}: missing required key `covariate`", config_path.display()),
    };
    let kind = cfg.take_raw_or("kind", "categorical");
    let pattern_spec = cfg.take_raw_or("pattern", "11");
    let samples = cfg.take_or("samples", 200usize)?;
    let bootstrap = cfg.take_or("bootstrap", 500usize)?;
    let seed = cfg.take_or("seed", 0u64)?;
    let patterns = parse_patterns(&pattern_spec)?;

    let (ckpt, data) = commands::load_for_prediction(checkpoint_path, data_path)?;
    let mut rows: Vec<AceEstimate> = Vec::new();
    match kind.as_str() {
        "categorical" => {
            let levels: Vec<f64> = cfg.take_list_or("levels", &[])?;
            if levels.is_empty() {
                bail!(
                    "{}: categorical effects need `levels` (comma-separated values)",
                    config_path.display()
                );
            }
            let reference: f64 = cfg.require("reference", "number")?;
            cfg.ensure_empty()?;
            for &level in &levels {
                for &pattern in &patterns {
                    // Fresh streams per call: every contrast sees identical
                    // noise and resample draws, so rows are comparable and
                    // pattern effects sum to zero exactly.
                    let mut eps_rng = stream_rng(seed, Stream::Eps);
                    let mut boot_rng = stream_rng(seed, Stream::Bootstrap);
                    rows.push(infer::ace_categorical(
                        &data,
                        &ckpt.params,
                        &covariate,
                        level,
                        reference,
                        pattern,
                        samples,
                        bootstrap,
                        &mut eps_rng,
                        &mut boot_rng,
                    )?);
                }
            }
        }
        "continuous" => {
            let grid: Vec<f64> = cfg.take_list_or("grid", &[])?;
            if grid.is_empty() {
                bail!(
                    "{}: continuous effects need `grid` (comma-separated values)",
                    config_path.display()
                );
            }
            cfg.ensure_empty()?;
            for &pattern in &patterns {
                let mut eps_rng = stream_rng(seed, Stream::Eps);
                let mut boot_rng = stream_rng(seed, Stream::Bootstrap);
                rows.extend(infer::ace_curve(
                    &data,
                    &ckpt.params,
                    &covariate,
                    &grid,
                    pattern,
                    samples,
                    bootstrap,
                    &mut eps_rng,
                    &mut boot_rng,
                )?);
            }
        }
        other => bail!("unknown covariate kind `{other}` (categorical or continuous)"),
    }

    io::write_ace(&out_dir.join("ace.csv"), &rows)?;
    let inputs = vec![
        manifest::file_digest(&config_path.display().to_string(), config_path)?,
        manifest::file_digest(&checkpoint_path.display().to_string(), checkpoint_path)?,
        manifest::file_digest(&data_path.display().to_string(), data_path)?,
    ];
    let outputs = commands::output_digests(out_dir, &["ace.csv"])?;
    manifest::write_manifest(
        out_dir,
        &Manifest {
            artifact_version: ARTIFACT_VERSION,
            command: "ace".into(),
            seed,
            config: cfg.resolved().clone(),
            inputs,
            outputs,
            wall_seconds: started.elapsed().as_secs_f64(),
        },
    )?;
    println!(
        "ace: {} effect row(s) for `{covariate}` written to {}",
        rows.len(),
        out_dir.display()
    );
    Ok(())
}
