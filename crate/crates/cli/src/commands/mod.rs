//! The five commands. Each is an ordinary function over paths and flags so
//! tests can drive them in-process; the binary in `main.rs` is a thin
//! argument-parsing shell around these.

pub mod ace;
pub mod benchmark;
pub mod predict;
pub mod simulate;
pub mod train;

use std::path::Path;

use anyhow::{bail, Context, Result};
use scvae_core::data::Dataset;
use scvae_core::graph::SpatialGraph;
use scvae_core::sim::GraphSpec;

use crate::checkpoint::Checkpoint;
use crate::config::ConfigMap;
use crate::manifest::FileDigest;
use crate::{checkpoint, io, manifest};

/// Parses the shared graph keys (`graph` = `grid`|`geometric`|`file` plus
/// the kind's parameters) into a generator graph spec. A `file` graph is
/// read immediately and recorded as an input digest.
fn parse_graph_spec(
    cfg: &mut ConfigMap,
    rho: f64,
    inputs: &mut Vec<FileDigest>,
) -> Result<GraphSpec> {
    let kind = cfg.take_raw_or("graph", "grid");
    match kind.as_str() {
        "grid" => {
            let rows = cfg.take_or("grid_rows", 8usize)?;
            let cols = cfg.take_or("grid_cols", 8usize)?;
            Ok(GraphSpec::Grid { rows, cols })
        }
        "geometric" => {
            let regions = cfg.take_or("regions", 64usize)?;
            let radius = cfg.take_or("radius", 0.35f64)?;
            Ok(GraphSpec::Geometric { regions, radius })
        }
        "file" => {
            let adjacency = cfg
                .take_raw("adjacency")
                .context("graph=file requires key `adjacency`")?;
            let path = Path::new(&adjacency);
            let (l, edges) = io::read_adjacency(path)?;
            inputs.push(manifest::file_digest(&adjacency, path)?);
            let graph = SpatialGraph::new(l, &edges, rho)
                .with_context(|| format!("{adjacency}: invalid adjacency"))?;
            Ok(GraphSpec::Explicit(graph))
        }
        other => bail!("unknown graph kind `{other}` (expected grid, geometric, or file)"),
    }
}

/// Loads a checkpoint and a dataset together: verifies the column names
/// match the checkpoint's expectations, then applies the checkpoint's
/// standardization to the data.
fn load_for_prediction(
    checkpoint_path: &Path,
    data_path: &Path,
) -> Result<(Checkpoint, Dataset)> {
    let ckpt = checkpoint::load(checkpoint_path)?;
    let mut data = io::read_dataset(data_path)?;
    if data.feature_names != ckpt.feature_names {
        bail!(
            "{}: columns {:?} do not match the checkpoint's features {:?}",
            data_path.display(),
            data.feature_names,
            ckpt.feature_names
        );
    }
    if let Some(st) = &ckpt.standardization {
        data.apply_standardization(st);
    }
    Ok((ckpt, data))
}

/// Digests the named outputs of a run directory.
fn output_digests(dir: &Path, names: &[&str]) -> Result<Vec<FileDigest>> {
    names
        .iter()
        .map(|name| manifest::file_digest(name, &dir.join(name)))
        .collect()
}
