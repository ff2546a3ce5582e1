//! Runs networks through the model and collects reports.

use deconv_core::config::{validate_config, ConfigViolation};
use deconv_core::mesh::TraceEvent;
use deconv_core::metrics::{summarize, Assumptions, LayerReport, NetworkSummary};
use deconv_core::oracle::deconv_scatter_add;
use deconv_core::schedule::{map_block_to_mesh, tile_layer, BlockMapping, TileSchedule};
use deconv_core::sim::{estimate_layer, simulate_layer};
use deconv_core::{AccelConfig, Arith, Fidelity, LayerDescriptor, NetworkDescriptor, SimOptions};
use rayon::prelude::*;
use serde::Serialize;

use crate::tensors::layer_operands;

pub const THREADS_ENV: &str = "DECONVSIM_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    pub seed: u64,
    /// Simulate on seeded data and compare every layer against the
    /// scatter-add oracle.
    pub check_oracle: bool,
    pub sim: SimOptions,
}

impl RunOptions {
    /// Functional simulation is needed for oracle checks, traces and the
    /// per-cycle mesh; otherwise the timing model alone is used.
    fn needs_data(&self) -> bool {
        self.check_oracle || self.sim.trace || self.sim.fidelity == Fidelity::Cycle
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration rejected:\n  {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n  "))]
    Config(Vec<ConfigViolation>),
    #[error("{layer}: {source}")]
    Sim {
        layer: String,
        #[source]
        source: deconv_core::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OracleCheck {
    pub layer: String,
    pub elements: usize,
    pub mismatches: usize,
}

#[derive(Debug, Clone)]
pub struct NetworkRun {
    pub network: NetworkDescriptor,
    pub config: AccelConfig,
    pub layers: Vec<LayerReport>,
    pub summary: NetworkSummary,
    pub assumptions: Assumptions,
    pub oracle: Vec<OracleCheck>,
    /// `(layer name, events)` for traced layers.
    pub traces: Vec<(String, Vec<TraceEvent>)>,
}

impl NetworkRun {
    pub fn oracle_mismatches(&self) -> usize {
        self.oracle.iter().map(|c| c.mismatches).sum()
    }
}

/// Every problem running `net` on `cfg`, across all layers.
pub fn check_config(net: &NetworkDescriptor, cfg: &AccelConfig) -> Vec<ConfigViolation> {
    let mut out = validate_config(cfg, None);
    if out.is_empty() {
        for layer in &net.layers {
            out.extend(validate_config(cfg, Some(layer)));
        }
    }
    out
}

struct LayerOutcome {
    report: LayerReport,
    oracle: Option<OracleCheck>,
    trace: Vec<TraceEvent>,
}

fn run_layer(
    net: &str,
    index: usize,
    layer: &LayerDescriptor,
    cfg: &AccelConfig,
    opts: &RunOptions,
) -> Result<LayerOutcome, RunError> {
    let err = |source| RunError::Sim {
        layer: layer.name.clone(),
        source,
    };
    if !opts.needs_data() {
        let stats = estimate_layer(layer, cfg, &opts.sim).map_err(err)?;
        return Ok(LayerOutcome {
            report: LayerReport::new(net, layer, &stats, cfg).map_err(err)?,
            oracle: None,
            trace: Vec::new(),
        });
    }
    let fx = cfg.fx();
    let arith = Arith::Fixed(fx);
    let (input, weights) = layer_operands(layer, &fx, opts.seed, index as u64);
    let out = simulate_layer(layer, cfg, &input, &weights, arith, &opts.sim).map_err(err)?;
    let oracle = if opts.check_oracle {
        let expected = deconv_scatter_add(&input, &weights, layer, arith).map_err(err)?;
        let mismatches = expected
            .data()
            .iter()
            .zip(out.output.data())
            .filter(|(a, b)| a != b)
            .count();
        Some(OracleCheck {
            layer: layer.name.clone(),
            elements: expected.len(),
            mismatches: mismatches + expected.len().abs_diff(out.output.len()),
        })
    } else {
        None
    };
    Ok(LayerOutcome {
        report: LayerReport::new(net, layer, &out.stats, cfg).map_err(err)?,
        oracle,
        trace: out.trace,
    })
}

pub fn run_network(net: &NetworkDescriptor, cfg: &AccelConfig, opts: &RunOptions) -> Result<NetworkRun, RunError> {
    let violations = check_config(net, cfg);
    if !violations.is_empty() {
        return Err(RunError::Config(violations));
    }
    let run = |(i, l): (usize, &LayerDescriptor)| run_layer(&net.name, i, l, cfg, opts);
    // Functional runs hold whole feature maps; keep those one layer at a time.
    let outcomes: Vec<LayerOutcome> = if opts.needs_data() {
        net.layers.iter().enumerate().map(run).collect::<Result<_, _>>()?
    } else {
        net.layers.par_iter().enumerate().map(run).collect::<Result<_, _>>()?
    };
    let mut layers = Vec::with_capacity(outcomes.len());
    let mut oracle = Vec::new();
    let mut traces = Vec::new();
    for (o, l) in outcomes.into_iter().zip(&net.layers) {
        layers.push(o.report);
        oracle.extend(o.oracle);
        if opts.sim.trace {
            traces.push((l.name.clone(), o.trace));
        }
    }
    Ok(NetworkRun {
        summary: summarize(&net.name, net.dims, &layers, cfg),
        assumptions: Assumptions::new(cfg, opts.sim.overlap_add_cycles, &net.layers),
        network: net.clone(),
        config: cfg.clone(),
        layers,
        oracle,
        traces,
    })
}

/// Thread pool for fan-out, sized by `DECONVSIM_THREADS` when set.
pub fn thread_pool() -> rayon::ThreadPool {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
}

/// Runs independent jobs on `pool`; results keep the order of `jobs`.
pub fn run_all(
    pool: &rayon::ThreadPool,
    jobs: &[(NetworkDescriptor, AccelConfig)],
    opts: &RunOptions,
) -> Vec<Result<NetworkRun, RunError>> {
    pool.install(|| jobs.par_iter().map(|(n, c)| run_network(n, c, opts)).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct ScheduleDump {
    pub network: String,
    pub layer: String,
    pub schedule: TileSchedule,
    /// PE assignments of the first tiles only; the full list grows with
    /// every tile of the layer.
    pub assignments: Vec<BlockMapping>,
}

pub fn schedule_dump(net: &NetworkDescriptor, cfg: &AccelConfig, mapped_tiles: usize) -> Vec<ScheduleDump> {
    net.layers
        .iter()
        .map(|layer| {
            let schedule = tile_layer(layer, cfg);
            let assignments = schedule
                .iter()
                .take(mapped_tiles)
                .map(|t| map_block_to_mesh(t, cfg, layer.dims))
                .collect();
            ScheduleDump {
                network: net.name.clone(),
                layer: layer.name.clone(),
                schedule,
                assignments,
            }
        })
        .collect()
}
