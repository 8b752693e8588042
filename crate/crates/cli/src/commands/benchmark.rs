//! `scvae benchmark` — the variant-comparison sweep over configuration
//! cells and seeds.

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Result};
use scvae_core::baseline::{benchmark_report, Variant};
use scvae_core::model::ModelConfig;
use scvae_core::sim::SimConfig;
use scvae_core::train::{run_ablation, AblationGrid, TrainConfig};

use crate::config::load_config;
use crate::manifest::{self, Manifest, ARTIFACT_VERSION};
use crate::{commands, io};

/// Runs the command: builds the grid from the config, runs every (cell,
/// seed, variant) fit, and writes `results.csv`, `failures.csv`,
/// `summary.csv`, and the manifest.
pub fn run(config_path: &Path, out_dir: &Path) -> Result<()> {
    let started = Instant::now();
    std::fs::create_dir_all(out_dir)?;
    let mut cfg = load_config(config_path)?;
    let mut inputs = vec![manifest::file_digest(
        &config_path.display().to_string(),
        config_path,
    )?];

    // Sweep axes; an empty list pins the axis at the base value below.
    let seeds: Vec<u64> = cfg.take_list_or("seeds", &[1u64, 2, 3])?;
    let lambda_grid: Vec<f64> = cfg.take_list_or("lambda_grid", &[])?;
    let n_grid: Vec<usize> = cfg.take_list_or("n_grid", &[])?;
    let alpha_grid: Vec<f64> = cfg.take_list_or("alpha_grid", &[])?;
    let noise_grid: Vec<f64> = cfg.take_list_or("noise_grid", &[])?;
    let variant_names: Vec<String> = cfg.take_list_or(
        "variants",
        &[
            "logistic".to_string(),
            "independent_nn".to_string(),
            "vae_no_copula".to_string(),
            "vae_copula".to_string(),
        ],
    )?;
    let mut variants = Vec::new();
    for name in &variant_names {
        match Variant::parse(name) {
            Some(v) => variants.push(v),
            None => bail!(
                "unknown variant `{name}` (logistic, independent_nn, vae_no_copula, vae_copula)"
            ),
        }
    }
    let jobs = cfg.take_or("jobs", 1usize)?;
    if jobs == 0 {
        bail!("jobs must be at least 1");
    }

    // Base synthetic-data configuration.
    let n = cfg.take_or("n", 5000usize)?;
    let d = cfg.take_or("d", 3usize)?;
    let p = cfg.take_or("p", 10usize)?;
    let rho = cfg.take_or("rho", 0.9f64)?;
    let alpha = cfg.take_or("alpha", 2.0f64)?;
    let sigma2_z = cfg.take_or("sigma2_z", 1.0f64)?;
    let sigma2_x = cfg.take_or("sigma2_x", 1.0f64)?;
    let noise_sigma2 = cfg.take_or("noise_sigma2", 0.0f64)?;
    let graph = commands::parse_graph_spec(&mut cfg, rho, &mut inputs)?;
    let sim_base = SimConfig {
        n,
        d,
        p,
        rho,
        alpha_true: alpha,
        sigma2_z,
        sigma2_x,
        noise_sigma2,
        seed: 0,
        graph,
    };

    // Base model configuration (the full-model variant's settings).
    let latent_dim = cfg.take_or("latent_dim", 3usize)?;
    let encoder_hidden = cfg.take_list_or("encoder_hidden", &[32usize, 16])?;
    let decoder_hidden = cfg.take_list_or("decoder_hidden", &[16usize, 32])?;
    let predictor_hidden = cfg.take_list_or("predictor_hidden", &[8usize, 4])?;
    let recon_weight = cfg.take_or("recon_weight", 1.0f64)?;
    let tau_init = cfg.take_or("tau_init", 1.0f64)?;
    let alpha_init = cfg.take_or("alpha_init", 1.5f64)?;
    let prior_z_variance = cfg.take_or("prior_z_variance", 1.0f64)?;
    let model_base = ModelConfig {
        p,
        d: latent_dim,
        encoder_hidden,
        decoder_hidden,
        predictor_hidden,
        recon_weight_init: recon_weight,
        tau_init,
        alpha_init,
        prior_z_variance,
        alpha_fixed_at_one: false,
    };

    // Base training configuration.
    let batch_size = cfg.take_or("batch_size", 256usize)?;
    let max_epochs = cfg.take_or("max_epochs", 300usize)?;
    let patience = cfg.take_or("patience", 20usize)?;
    let validation_fraction = cfg.take_or("validation_fraction", 0.1f64)?;
    let learning_rate = cfg.take_or("learning_rate", 1e-3f64)?;
    let train_fraction = cfg.take_or("train_fraction", 0.8f64)?;
    let holdout_regions: Option<usize> = cfg.take_opt("holdout_regions")?;
    let warmup = cfg.take_or("warmup", 50usize)?;
    let warmup_ramp = cfg.take_or("warmup_ramp", 25usize)?;
    cfg.ensure_empty()?;
    let train_base = TrainConfig {
        batch_size,
        max_epochs,
        patience,
        validation_fraction,
        learning_rate,
        seed: 0,
        recon_weight: None,
        train_fraction,
        holdout_regions,
        warmup_epochs: warmup,
        warmup_ramp_epochs: warmup_ramp,
    };

    let grid = AblationGrid {
        lambda: lambda_grid,
        n: n_grid,
        alpha: alpha_grid,
        noise: noise_grid,
        seeds: seeds.clone(),
        variants,
        sim_base,
        model_base,
        train_base,
    };
    // `jobs` caps worker fan-out; the current runner executes serially.
    let clock_zero = Instant::now();
    let mut clock = move || clock_zero.elapsed().as_secs_f64();
    let rows = run_ablation(&grid, &mut clock);

    io::write_results(&out_dir.join("results.csv"), &rows)?;
    io::write_failures(&out_dir.join("failures.csv"), &rows)?;
    let summary = benchmark_report(&rows)?;
    io::write_summary(&out_dir.join("summary.csv"), &summary)?;

    let outputs = commands::output_digests(
        out_dir,
        &["results.csv", "failures.csv", "summary.csv"],
    )?;
    manifest::write_manifest(
        out_dir,
        &Manifest {
            artifact_version: ARTIFACT_VERSION,
            command: "benchmark".into(),
            seed: seeds.first().copied().unwrap_or(0),
            config: cfg.resolved().clone(),
            inputs,
            outputs,
            wall_seconds: started.elapsed().as_secs_f64(),
        },
    )?;
    let failures = rows.iter().filter(|r| r.error.is_some()).count();
    println!(
        "benchmark: {} row(s), {} failure(s), written to {}",
        rows.len(),
        failures,
        out_dir.display()
    );
    Ok(())
}
