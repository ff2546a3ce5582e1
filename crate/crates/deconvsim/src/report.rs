//! CSV and JSON report emission.
//!
//! Per-layer CSV columns:
//!
//! `network,layer,dims,Nc,Nm,I,K,S,cycles_total,cycles_compute,cycles_stall,mac_count,utilization,gops_valid,gops_effective,sparsity,bound_class`
//!
//! `I` is the input extent per axis joined with `x` (`D x H x W` for 3D).
//! Each network is followed by a summary row whose `layer` is `total` and
//! whose shape columns are empty. Floats use fixed precision so equal runs
//! give byte-identical files.

use std::io::Write;

use deconv_core::metrics::{Assumptions, LayerReport, NetworkSummary};
use deconv_core::oracle::sparsity;
use deconv_core::{AccelConfig, NetworkDescriptor};
use serde::Serialize;

use crate::runner::{NetworkRun, OracleCheck};

pub const CSV_HEADER: [&str; 17] = [
    "network",
    "layer",
    "dims",
    "Nc",
    "Nm",
    "I",
    "K",
    "S",
    "cycles_total",
    "cycles_compute",
    "cycles_stall",
    "mac_count",
    "utilization",
    "gops_valid",
    "gops_effective",
    "sparsity",
    "bound_class",
];

pub const SUMMARY_LAYER: &str = "total";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

fn ratio(x: f64) -> String {
    format!("{x:.6}")
}

fn gops(x: f64) -> String {
    format!("{x:.3}")
}

fn layer_row(r: &LayerReport) -> Vec<String> {
    vec![
        r.network.clone(),
        r.layer.clone(),
        r.dims.to_string(),
        r.in_channels.to_string(),
        r.out_channels.to_string(),
        r.in_size.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("x"),
        r.kernel.to_string(),
        r.stride.to_string(),
        r.cycles_total.to_string(),
        r.cycles_compute.to_string(),
        r.cycles_stall.to_string(),
        r.mac_count.to_string(),
        ratio(r.utilization),
        gops(r.gops_valid),
        gops(r.gops_effective),
        ratio(r.sparsity),
        r.bound_class.to_string(),
    ]
}

fn summary_row(s: &NetworkSummary) -> Vec<String> {
    vec![
        s.network.clone(),
        SUMMARY_LAYER.into(),
        s.dims.to_string(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        s.cycles_total.to_string(),
        s.cycles_compute.to_string(),
        s.cycles_stall.to_string(),
        s.mac_count.to_string(),
        ratio(s.utilization),
        gops(s.gops_valid),
        gops(s.gops_effective),
        ratio(s.sparsity),
        s.bound_class.to_string(),
    ]
}

pub fn write_csv<W: Write>(runs: &[NetworkRun], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for run in runs {
        for r in &run.layers {
            w.write_record(layer_row(r))?;
        }
        w.write_record(summary_row(&run.summary))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Series<'a> {
    /// `(layer, sparsity)` pairs.
    sparsity: Vec<(&'a str, f64)>,
    /// `(layer, utilization)` pairs.
    utilization: Vec<(&'a str, f64)>,
}

#[derive(Serialize)]
struct NetworkJson<'a> {
    network: &'a str,
    dims: u32,
    config: &'a AccelConfig,
    assumptions: &'a Assumptions,
    layers: &'a [LayerReport],
    summary: &'a NetworkSummary,
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    oracle: &'a [OracleCheck],
    series: Series<'a>,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    networks: Vec<NetworkJson<'a>>,
}

pub fn write_json<W: Write>(runs: &[NetworkRun], mut out: W) -> std::io::Result<()> {
    let doc = ReportJson {
        networks: runs
            .iter()
            .map(|run| NetworkJson {
                network: &run.network.name,
                dims: run.network.dims.count(),
                config: &run.config,
                assumptions: &run.assumptions,
                layers: &run.layers,
                summary: &run.summary,
                oracle: &run.oracle,
                series: Series {
                    sparsity: run.layers.iter().map(|l| (l.layer.as_str(), l.sparsity)).collect(),
                    utilization: run.layers.iter().map(|l| (l.layer.as_str(), l.utilization)).collect(),
                },
            })
            .collect(),
    };
    serde_json::to_writer_pretty(&mut out, &doc)?;
    out.write_all(b"\n")
}

pub fn write_report<W: Write>(runs: &[NetworkRun], format: Format, out: W) -> std::io::Result<()> {
    match format {
        Format::Json => write_json(runs, out),
        Format::Csv => write_csv(runs, out).map_err(std::io::Error::other),
    }
}

/// Two-column `layer,sparsity` series; layers are labelled `network/layer`.
pub fn write_sparsity_csv<W: Write>(nets: &[NetworkDescriptor], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["layer", "sparsity"])?;
    for net in nets {
        for l in &net.layers {
            w.write_record([format!("{}/{}", net.name, l.name), ratio(sparsity(l))])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub const COMPARISON_HEADER: [&str; 10] = [
    "param",
    "value",
    "network",
    "cycles_total",
    "cycles_stall",
    "utilization",
    "gops_valid",
    "gops_effective",
    "bound_class",
    "memory_bound_layers",
];

/// One row per `(value, network)` from the network summaries.
pub fn write_comparison<W: Write>(param: &str, rows: &[(String, Vec<NetworkRun>)], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COMPARISON_HEADER)?;
    for (value, runs) in rows {
        for run in runs {
            let s = &run.summary;
            let memory = run
                .layers
                .iter()
                .filter(|l| l.bound_class == deconv_core::metrics::BoundClass::Memory)
                .count();
            w.write_record([
                param.to_string(),
                value.clone(),
                s.network.clone(),
                s.cycles_total.to_string(),
                s.cycles_stall.to_string(),
                ratio(s.utilization),
                gops(s.gops_valid),
                gops(s.gops_effective),
                s.bound_class.to_string(),
                memory.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_is_header_only() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", CSV_HEADER.join(",")));
    }
}
