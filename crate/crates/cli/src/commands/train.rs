//! `scvae train` — fit the model on a dataset CSV plus an adjacency file.

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Result};
use scvae_core::graph::SpatialGraph;
use scvae_core::model::ModelConfig;
use scvae_core::train::{self, TrainConfig};

use crate::checkpoint::{self, Checkpoint, FORMAT_VERSION};
use crate::config::load_config;
use crate::manifest::{self, Manifest, ARTIFACT_VERSION};
use crate::{commands, io};

/// Runs the command: reads data and adjacency, standardizes, fits, and
/// writes `checkpoint.json`, `history.csv`, `latent.csv`, and the manifest.
/// Prints the fitted τ, α, λ, and the best validation loss.
pub fn run(
    config_path: &Path,
    data_path: &Path,
    adjacency_path: &Path,
    out_dir: &Path,
) -> Result<()> {
    let started = Instant::now();
    std::fs::create_dir_all(out_dir)?;
    let mut cfg = load_config(config_path)?;

    let seed = cfg.take_or("seed", 0u64)?;
    let latent_dim = cfg.take_or("latent_dim", 5usize)?;
    let encoder_hidden = cfg.take_list_or("encoder_hidden", &[60usize, 30, 20, 10])?;
    let decoder_hidden = cfg.take_list_or("decoder_hidden", &[10usize, 20, 30, 60])?;
    let predictor_hidden = cfg.take_list_or("predictor_hidden", &[10usize, 5, 3])?;
    let recon_weight = cfg.take_or("recon_weight", 1.0f64)?;
    let tau_init = cfg.take_or("tau_init", 1.0f64)?;
    let alpha_init = cfg.take_or("alpha_init", 1.5f64)?;
    let prior_z_variance = cfg.take_or("prior_z_variance", 1.0f64)?;
    let alpha_fixed_one = cfg.take_bool_or("alpha_fixed_one", false)?;
    let rho = cfg.take_or("rho", 0.9f64)?;
    let batch_size = cfg.take_or("batch_size", 256usize)?;
    let max_epochs = cfg.take_or("max_epochs", 300usize)?;
    let patience = cfg.take_or("patience", 20usize)?;
    let validation_fraction = cfg.take_or("validation_fraction", 0.1f64)?;
    let learning_rate = cfg.take_or("learning_rate", 1e-3f64)?;
    let warmup = cfg.take_or("warmup", 50usize)?;
    let warmup_ramp = cfg.take_or("warmup_ramp", 25usize)?;
    cfg.ensure_empty()?;

    let mut data = io::read_dataset(data_path)?;
    let (l, edges) = io::read_adjacency(adjacency_path)?;
    if data.n_regions > l {
        bail!(
            "{}: region index {} out of range: {} declares only {} regions",
            data_path.display(),
            data.n_regions - 1,
            adjacency_path.display(),
            l
        );
    }
    data.n_regions = l;
    let graph = SpatialGraph::new(l, &edges, rho)?;

    let standardization = data.standardize_in_place();
    let model_config = ModelConfig {
        p: data.p(),
        d: latent_dim,
        encoder_hidden,
        decoder_hidden,
        predictor_hidden,
        recon_weight_init: recon_weight,
        tau_init,
        alpha_init,
        prior_z_variance,
        alpha_fixed_at_one: alpha_fixed_one,
    };
    let train_config = TrainConfig {
        batch_size,
        max_epochs,
        patience,
        validation_fraction,
        learning_rate,
        seed,
        recon_weight: None,
        warmup_epochs: warmup,
        warmup_ramp_epochs: warmup_ramp,
        ..TrainConfig::default()
    };
    let (params, history) = train::fit(&data, &graph, &model_config, &train_config)?;

    let ckpt = Checkpoint {
        format_version: FORMAT_VERSION,
        seed,
        rho,
        feature_names: data.feature_names.clone(),
        standardization: Some(standardization),
        params,
    };
    checkpoint::save(&out_dir.join("checkpoint.json"), &ckpt)?;
    io::write_history(&out_dir.join("history.csv"), &history.rows)?;
    io::write_latent(
        &out_dir.join("latent.csv"),
        &ckpt.params.mu_table,
        graph.len(),
        latent_dim,
    )?;

    let inputs = vec![
        manifest::file_digest(&config_path.display().to_string(), config_path)?,
        manifest::file_digest(&data_path.display().to_string(), data_path)?,
        manifest::file_digest(&adjacency_path.display().to_string(), adjacency_path)?,
    ];
    let outputs =
        commands::output_digests(out_dir, &["checkpoint.json", "history.csv", "latent.csv"])?;
    manifest::write_manifest(
        out_dir,
        &Manifest {
            artifact_version: ARTIFACT_VERSION,
            command: "train".into(),
            seed,
            config: cfg.resolved().clone(),
            inputs,
            outputs,
            wall_seconds: started.elapsed().as_secs_f64(),
        },
    )?;
    println!(
        "train: tau={} alpha={} lambda={} best_validation_loss={} epochs={}",
        ckpt.params.tau(),
        ckpt.params.alpha(),
        ckpt.params.recon_weight,
        history.best_validation_loss,
        history.stopped_epoch
    );
    Ok(())
}
