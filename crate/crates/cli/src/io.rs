//! File formats: the dataset CSV (`region_id,y1,y2,<features...>`), the
//! adjacency edge list, and writers for every table the commands emit.
//! Floats are printed with Rust's shortest round-trip formatting, so a
//! write → read cycle reproduces each value exactly.

use std::fs::File;
use std::path::Path;

use anyhow::{bail, Context, Result};
use scvae_core::baseline::SummaryRow;
use scvae_core::data::Dataset;
use scvae_core::graph::SpatialGraph;
use scvae_core::infer::{AceEstimate, JointPrediction, RegionRow};
use scvae_core::sim::GroundTruth;
use scvae_core::train::{AblationRow, HistoryRow};

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_else(|| "NA".to_string())
}

fn open_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file =
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(csv::Writer::from_writer(file))
}

/// Reads a dataset CSV. The header must start with `region_id,y1,y2`; every
/// remaining column is a covariate. Errors name the offending file line.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr
        .headers()
        .with_context(|| format!("{}: cannot read header", path.display()))?
        .clone();
    let fixed = ["region_id", "y1", "y2"];
    if headers.len() < 3 {
        bail!(
            "{}: header must start with `region_id,y1,y2`, found {} column(s)",
            path.display(),
            headers.len()
        );
    }
    for (i, want) in fixed.iter().enumerate() {
        if &headers[i] != *want {
            bail!(
                "{}: header column {} must be `{}`, found `{}`",
                path.display(),
                i + 1,
                want,
                &headers[i]
            );
        }
    }
    let feature_names: Vec<String> = headers.iter().skip(3).map(|s| s.to_string()).collect();
    let p = feature_names.len();

    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut region = Vec::new();
    for record in rdr.records() {
        let record = record.with_context(|| format!("{}: malformed CSV row", path.display()))?;
        let line = record
            .position()
            .map(|pos| pos.line())
            .unwrap_or_default();
        if record.len() != 3 + p {
            bail!(
                "{}: row at line {line}: expected {} fields, found {}",
                path.display(),
                3 + p,
                record.len()
            );
        }
        let reg: usize = record[0].trim().parse().map_err(|_| {
            anyhow::anyhow!(
                "{}: row at line {line}: bad region_id `{}`",
                path.display(),
                &record[0]
            )
        })?;
        let mut pair = [0u8; 2];
        for (slot, field) in pair.iter_mut().zip([&record[1], &record[2]]) {
            *slot = match field.trim() {
                "0" => 0,
                "1" => 1,
                other => bail!(
                    "{}: row at line {line}: outcome must be 0 or 1, found `{other}`",
                    path.display()
                ),
            };
        }
        for j in 0..p {
            let field = record[3 + j].trim();
            let v: f64 = field.parse().map_err(|_| {
                anyhow::anyhow!(
                    "{}: row at line {line}: bad value `{field}` in column `{}`",
                    path.display(),
                    feature_names[j]
                )
            })?;
            if !v.is_finite() {
                bail!(
                    "{}: row at line {line}: non-finite value in column `{}`",
                    path.display(),
                    feature_names[j]
                );
            }
            x.push(v);
        }
        y.push(pair);
        region.push(reg);
    }
    if y.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    let n_regions = region.iter().copied().max().unwrap_or(0) + 1;
    Dataset::new(x, y, region, n_regions, feature_names)
        .with_context(|| format!("{}: invalid dataset", path.display()))
}

/// Writes a dataset CSV in the schema [`read_dataset`] accepts.
pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = open_writer(path)?;
    let mut header = vec![
        "region_id".to_string(),
        "y1".to_string(),
        "y2".to_string(),
    ];
    header.extend(data.feature_names.iter().cloned());
    w.write_record(&header)?;
    for i in 0..data.n() {
        let mut rec = vec![
            data.region[i].to_string(),
            data.y[i][0].to_string(),
            data.y[i][1].to_string(),
        ];
        rec.extend(data.x_row(i).iter().map(|&v| fmt(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an adjacency file: optional `L=<count>` line, then one `a b` edge
/// per line (whitespace-separated, 0-based); `#` comments allowed. Without
/// an `L=` line the region count is the largest endpoint + 1.
pub fn read_adjacency(path: &Path) -> Result<(usize, Vec<(usize, usize)>)> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut declared: Option<usize> = None;
    let mut edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("L=") {
            if declared.is_some() || !edges.is_empty() {
                bail!(
                    "{}:{line_no}: `L=` must appear once, before any edge",
                    path.display()
                );
            }
            declared = Some(rest.trim().parse().map_err(|_| {
                anyhow::anyhow!("{}:{line_no}: bad region count `{rest}`", path.display())
            })?);
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            bail!(
                "{}:{line_no}: expected `a b` edge, found `{line}`",
                path.display()
            );
        };
        let a: usize = a.parse().map_err(|_| {
            anyhow::anyhow!("{}:{line_no}: bad region index `{a}`", path.display())
        })?;
        let b: usize = b.parse().map_err(|_| {
            anyhow::anyhow!("{}:{line_no}: bad region index `{b}`", path.display())
        })?;
        edges.push((a, b));
    }
    let l = match declared {
        Some(l) => l,
        None => edges
            .iter()
            .map(|&(a, b)| a.max(b) + 1)
            .max()
            .unwrap_or(0),
    };
    Ok((l, edges))
}

/// Writes a graph as an adjacency file [`read_adjacency`] accepts.
pub fn write_adjacency(path: &Path, graph: &SpatialGraph) -> Result<()> {
    let mut text = format!("L={}\n", graph.len());
    for &(a, b) in graph.edges() {
        text.push_str(&format!("{a} {b}\n"));
    }
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Writes the generator's ground truth table:
/// `obs_id,region,z_1..z_d,pi1,pi2,eta1,eta2`. Regions come from the
/// companion dataset (the truth struct stores per-observation arrays only).
pub fn write_ground_truth(
    path: &Path,
    data: &Dataset,
    truth: &GroundTruth,
    d: usize,
) -> Result<()> {
    let mut w = open_writer(path)?;
    let mut header = vec!["obs_id".to_string(), "region".to_string()];
    header.extend((1..=d).map(|k| format!("z_{k}")));
    header.extend(["pi1", "pi2", "eta1", "eta2"].map(String::from));
    w.write_record(&header)?;
    let n = truth.pi.len();
    for i in 0..n {
        let mut rec = vec![i.to_string(), data.region[i].to_string()];
        rec.extend(truth.z[i * d..(i + 1) * d].iter().map(|&v| fmt(v)));
        rec.push(fmt(truth.pi[i][0]));
        rec.push(fmt(truth.pi[i][1]));
        rec.push(fmt(truth.eta[i][0]));
        rec.push(fmt(truth.eta[i][1]));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the per-epoch training history:
/// `epoch,loss,recon_y,recon_x,kl_z,kl_mu,tau,alpha`.
pub fn write_history(path: &Path, rows: &[HistoryRow]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record([
        "epoch", "loss", "recon_y", "recon_x", "kl_z", "kl_mu", "tau", "alpha",
    ])?;
    for r in rows {
        w.write_record([
            r.epoch.to_string(),
            fmt(r.loss),
            fmt(r.recon_y),
            fmt(r.recon_x),
            fmt(r.kl_z),
            fmt(r.kl_mu),
            fmt(r.tau),
            fmt(r.alpha),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the fitted region means: `region_id,mu_1..mu_d`.
pub fn write_latent(path: &Path, mu_table: &[f64], l: usize, d: usize) -> Result<()> {
    let mut w = open_writer(path)?;
    let mut header = vec!["region_id".to_string()];
    header.extend((1..=d).map(|k| format!("mu_{k}")));
    w.write_record(&header)?;
    for j in 0..l {
        let mut rec = vec![j.to_string()];
        rec.extend(mu_table[j * d..(j + 1) * d].iter().map(|&v| fmt(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes per-observation predictions with a cells-sum audit column.
pub fn write_predictions(
    path: &Path,
    data: &Dataset,
    preds: &[JointPrediction],
) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record([
        "obs_id",
        "region_id",
        "p11",
        "p10",
        "p01",
        "p00",
        "p1",
        "p2",
        "p1_given_2",
        "p2_given_1",
        "p1_given_not2",
        "p2_given_not1",
        "cells_sum",
    ])?;
    for (i, p) in preds.iter().enumerate() {
        let sum = p.cells.p11 + p.cells.p10 + p.cells.p01 + p.cells.p00;
        w.write_record([
            i.to_string(),
            data.region[i].to_string(),
            fmt(p.cells.p11),
            fmt(p.cells.p10),
            fmt(p.cells.p01),
            fmt(p.cells.p00),
            fmt(p.p1),
            fmt(p.p2),
            fmt(p.c1_given_2),
            fmt(p.c2_given_1),
            fmt(p.c1_given_not2),
            fmt(p.c2_given_not1),
            fmt(sum),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the per-region aggregate table.
pub fn write_region_table(path: &Path, rows: &[RegionRow]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record([
        "region_id",
        "n_obs",
        "p11",
        "p10",
        "p01",
        "p00",
        "p1",
        "p2",
        "p1_given_2",
        "p2_given_1",
        "p1_given_not2",
        "p2_given_not1",
    ])?;
    for r in rows {
        w.write_record([
            r.region_id.to_string(),
            r.n_obs.to_string(),
            fmt(r.p11),
            fmt(r.p10),
            fmt(r.p01),
            fmt(r.p00),
            fmt(r.p1),
            fmt(r.p2),
            fmt(r.p1_given_2),
            fmt(r.p2_given_1),
            fmt(r.p1_given_not2),
            fmt(r.p2_given_not1),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes effect estimates: `covariate,contrast,pattern,ace,lo,hi,reject`.
pub fn write_ace(path: &Path, rows: &[AceEstimate]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(["covariate", "contrast", "pattern", "ace", "lo", "hi", "reject"])?;
    for r in rows {
        w.write_record([
            r.covariate.clone(),
            r.contrast.clone(),
            format!("{}{}", r.pattern.0, r.pattern.1),
            fmt(r.estimate),
            fmt(r.lower),
            fmt(r.upper),
            r.reject_null.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes raw sweep results:
/// `cell_id,variant,seed,auc_y1,auc_y2,alpha_hat,tau_hat,seconds`.
pub fn write_results(path: &Path, rows: &[AblationRow]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record([
        "cell_id", "variant", "seed", "auc_y1", "auc_y2", "alpha_hat", "tau_hat", "seconds",
    ])?;
    for r in rows {
        w.write_record([
            r.cell_id.clone(),
            r.variant.clone(),
            r.seed.to_string(),
            fmt_opt(r.auc_y1),
            fmt_opt(r.auc_y2),
            fmt_opt(r.alpha_hat),
            fmt_opt(r.tau_hat),
            fmt(r.seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the per-cell summary:
/// `cell_id,variant,outcome,n_seeds,median_auc,q1_auc,q3_auc,sign_test_p_vs_copula`.
pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record([
        "cell_id",
        "variant",
        "outcome",
        "n_seeds",
        "median_auc",
        "q1_auc",
        "q3_auc",
        "sign_test_p_vs_copula",
    ])?;
    for r in rows {
        w.write_record([
            r.cell_id.clone(),
            r.variant.clone(),
            r.outcome.to_string(),
            r.n_seeds.to_string(),
            fmt(r.median_auc),
            fmt(r.q1_auc),
            fmt(r.q3_auc),
            fmt_opt(r.sign_test_p_vs_copula),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes failed sweep rows: `cell_id,variant,seed,error`.
pub fn write_failures(path: &Path, rows: &[AblationRow]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(["cell_id", "variant", "seed", "error"])?;
    for r in rows {
        if let Some(err) = &r.error {
            w.write_record([
                r.cell_id.clone(),
                r.variant.clone(),
                r.seed.to_string(),
                err.clone(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn dataset_round_trip_is_lossless() {
        let data = Dataset::new(
            vec![0.1, -1.0 / 3.0, 1e-17, 2.5e300, 0.30000000000000004, -7.125],
            vec![[0, 1], [1, 0]],
            vec![2, 0],
            3,
            vec!["a".into(), "b".into(), "c".into()],
        )
        .unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_dataset(&path, &data).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back.x, data.x);
        assert_eq!(back.y, data.y);
        assert_eq!(back.region, data.region);
        assert_eq!(back.n_regions, 3);
        assert_eq!(back.feature_names, data.feature_names);
    }

    #[test]
    fn dataset_errors_name_rows() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "region_id,y1,y2,f\n0,0,1,1.5\n1,2,0,0.5\n").unwrap();
        let err = read_dataset(&path).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert!(err.to_string().contains("0 or 1"), "{err}");

        std::fs::write(&path, "region_id,y1,y2,f\n0,0,1,oops\n").unwrap();
        let err = read_dataset(&path).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(err.to_string().contains("column `f`"), "{err}");

        std::fs::write(&path, "region,y1,y2,f\n0,0,1,1.0\n").unwrap();
        let err = read_dataset(&path).unwrap_err();
        assert!(err.to_string().contains("region_id"), "{err}");

        std::fs::write(&path, "region_id,y1,y2,f\n").unwrap();
        let err = read_dataset(&path).unwrap_err();
        assert!(err.to_string().contains("no data rows"), "{err}");
    }

    #[test]
    fn adjacency_round_trip_and_errors() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("adj.txt");
        let graph = SpatialGraph::grid(2, 3, 0.9).unwrap();
        write_adjacency(&path, &graph).unwrap();
        let (l, edges) = read_adjacency(&path).unwrap();
        assert_eq!(l, 6);
        assert_eq!(edges, graph.edges());

        std::fs::write(&path, "# comment\n0 1\n1 2\n").unwrap();
        let (l, edges) = read_adjacency(&path).unwrap();
        assert_eq!(l, 3);
        assert_eq!(edges.len(), 2);

        std::fs::write(&path, "0 1\nL=5\n").unwrap();
        let err = read_adjacency(&path).unwrap_err();
        assert!(err.to_string().contains(":2"), "{err}");

        std::fs::write(&path, "0 1 2\n").unwrap();
        let err = read_adjacency(&path).unwrap_err();
        assert!(err.to_string().contains("expected `a b` edge"), "{err}");
    }
}
