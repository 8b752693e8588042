//! `scvae simulate` — generate a synthetic dataset with known ground truth.

use std::path::Path;
use std::time::Instant;

use anyhow::Result;
use scvae_core::rng::{stream_rng, Stream};
use scvae_core::sim::{self, SimConfig};
use serde::Serialize;

use crate::config::load_config;
use crate::manifest::{self, Manifest, ARTIFACT_VERSION};
use crate::{commands, io};

#[derive(Serialize)]
struct InjectedSummary {
    column: String,
    delta: f64,
    true_ace: [f64; 4],
}

/// The generator-side truth that is not per-observation: coefficient
/// vectors, the loading matrix, region means, and the injected-effect
/// summary when one was requested.
#[derive(Serialize)]
struct Coefficients {
    alpha_true: f64,
    beta11: Vec<f64>,
    beta12: Vec<f64>,
    beta2: Vec<f64>,
    /// p rows of d loadings each.
    loading: Vec<Vec<f64>>,
    /// L rows of d region means each.
    mu: Vec<Vec<f64>>,
    injected: Option<InjectedSummary>,
}

/// Runs the command: reads the config, generates, writes `dataset.csv`,
/// `ground_truth.csv`, `coefficients.json`, `adjacency.txt`, and the
/// manifest.
pub fn run(config_path: &Path, out_dir: &Path) -> Result<()> {
    let started = Instant::now();
    std::fs::create_dir_all(out_dir)?;
    let mut cfg = load_config(config_path)?;
    let mut inputs = vec![manifest::file_digest(
        &config_path.display().to_string(),
        config_path,
    )?];

    let seed: u64 = cfg.require("seed", "integer")?;
    let n: usize = cfg.require("n", "integer")?;
    let d = cfg.take_or("d", 3usize)?;
    let p = cfg.take_or("p", 10usize)?;
    let rho = cfg.take_or("rho", 0.9f64)?;
    let alpha = cfg.take_or("alpha", 2.0f64)?;
    let sigma2_z = cfg.take_or("sigma2_z", 1.0f64)?;
    let sigma2_x = cfg.take_or("sigma2_x", 1.0f64)?;
    let noise_sigma2 = cfg.take_or("noise_sigma2", 0.0f64)?;
    let graph = commands::parse_graph_spec(&mut cfg, rho, &mut inputs)?;
    let inject_delta: Option<f64> = cfg.take_opt("inject_delta")?;
    cfg.ensure_empty()?;

    let sim_config = SimConfig {
        n,
        d,
        p,
        rho,
        alpha_true: alpha,
        sigma2_z,
        sigma2_x,
        noise_sigma2,
        seed,
        graph,
    };
    let (mut data, truth) = sim::generate(&sim_config)?;
    let mut injected = None;
    if let Some(delta) = inject_delta {
        // Assignment draws come from the bootstrap stream so the base
        // generator output is untouched by the injection.
        let mut rng = stream_rng(seed, Stream::Bootstrap);
        let (with_effect, effect) = sim::inject_known_effect(&data, &truth, delta, &mut rng)?;
        data = with_effect;
        injected = Some(InjectedSummary {
            column: effect.column,
            delta: effect.delta,
            true_ace: effect.true_ace,
        });
    }

    io::write_dataset(&out_dir.join("dataset.csv"), &data)?;
    io::write_ground_truth(&out_dir.join("ground_truth.csv"), &data, &truth, d)?;
    io::write_adjacency(&out_dir.join("adjacency.txt"), &truth.graph)?;
    let coefficients = Coefficients {
        alpha_true: truth.alpha_true,
        beta11: truth.beta11.clone(),
        beta12: truth.beta12.clone(),
        beta2: truth.beta2.clone(),
        loading: (0..p)
            .map(|j| truth.loading[j * d..(j + 1) * d].to_vec())
            .collect(),
        mu: (0..truth.graph.len())
            .map(|j| truth.mu[j * d..(j + 1) * d].to_vec())
            .collect(),
        injected,
    };
    let mut text = serde_json::to_string_pretty(&coefficients)?;
    text.push('\n');
    std::fs::write(out_dir.join("coefficients.json"), text)?;

    let outputs = commands::output_digests(
        out_dir,
        &[
            "dataset.csv",
            "ground_truth.csv",
            "adjacency.txt",
            "coefficients.json",
        ],
    )?;
    manifest::write_manifest(
        out_dir,
        &Manifest {
            artifact_version: ARTIFACT_VERSION,
            command: "simulate".into(),
            seed,
            config: cfg.resolved().clone(),
            inputs,
            outputs,
            wall_seconds: started.elapsed().as_secs_f64(),
        },
    )?;
    println!(
        "simulate: wrote {} observations over {} regions to {}",
        data.n(),
        truth.graph.len(),
        out_dir.display()
    );
    Ok(())
}
