//! The three commands behind the binary: fusion-demo, simulate, montecarlo.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use covfuse::scenario::{
    compare_methods, config_hash, monte_carlo, simulate_table, Method, SarConfig,
};
use sha2::{Digest, Sha256};

use crate::demo::{run_demo, DemoConfig};
use crate::output::{
    finalize_manifest, fmt_f64, prepare_out_dir, resolve_out_dir, write_csv, RunManifest,
};
use crate::CliError;

/// What a command produced: the emitted files plus any failed internal
/// assertions (exit code 0 iff none failed).
#[derive(Debug, Clone)]
pub struct CommandReport {
    pub out_dir: PathBuf,
    pub artifacts: Vec<PathBuf>,
    pub failures: Vec<String>,
}

impl CommandReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

fn load_json<T: serde::de::DeserializeOwned + Default>(
    path: Option<&Path>,
) -> Result<(T, Option<String>), CliError> {
    match path {
        None => Ok((T::default(), None)),
        Some(p) => {
            let text = fs::read_to_string(p)?;
            let value = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            Ok((value, Some(p.display().to_string())))
        }
    }
}

fn hash_str(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Write `failures.json` (a machine-readable list) when assertions failed.
fn record_failures(out: &Path, failures: &[String]) -> Result<Option<PathBuf>, CliError> {
    if failures.is_empty() {
        return Ok(None);
    }
    let path = out.join("failures.json");
    fs::write(
        &path,
        serde_json::to_string_pretty(failures).expect("strings serialize"),
    )?;
    Ok(Some(path))
}

#[derive(Debug, Clone)]
pub struct FusionDemoOpts {
    /// ω rows per method, including the trace-optimal row.
    pub omega_grid: usize,
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub force: bool,
}

pub fn cmd_fusion_demo(opts: &FusionDemoOpts) -> Result<CommandReport, CliError> {
    let (cfg, config_path) = load_json::<DemoConfig>(opts.config.as_deref())?;
    let cfg_hash = hash_str(&serde_json::to_string(&cfg).expect("config serializes"));
    let out = resolve_out_dir(opts.out.clone())?;
    prepare_out_dir(&out, &cfg_hash, opts.force)?;
    let (rows, summary) = run_demo(&cfg, opts.omega_grid)?;

    let bounds_csv = out.join("bounds.csv");
    write_csv(
        &bounds_csv,
        &[
            "method",
            "omega1",
            "omega2",
            "b11",
            "b12",
            "b22",
            "trace",
            "is_optimal",
        ],
        rows.iter().map(|r| {
            vec![
                r.method.to_string(),
                fmt_f64(r.omega[0]),
                fmt_f64(r.omega[1]),
                fmt_f64(r.bound.get(0, 0)),
                fmt_f64(r.bound.get(0, 1)),
                fmt_f64(r.bound.get(1, 1)),
                fmt_f64(r.trace),
                (r.is_optimal as u8).to_string(),
            ]
        }),
    )?;

    let mut failures = Vec::new();
    if !summary.ordering_holds() {
        failures.push(format!(
            "trace ordering violated: ESCI {} vs SCI {} vs CI {}",
            summary.trace_esci, summary.trace_sci, summary.trace_ci
        ));
    }
    let summary_path = out.join("summary.txt");
    fs::write(
        &summary_path,
        format!(
            "trace-optimal bounds\nCI   trace: {}\nSCI  trace: {}\nESCI trace: {}\nordering trace(ESCI) <= trace(SCI) <= trace(CI): {}\n",
            fmt_f64(summary.trace_ci),
            fmt_f64(summary.trace_sci),
            fmt_f64(summary.trace_esci),
            if summary.ordering_holds() { "holds" } else { "VIOLATED" }
        ),
    )?;

    let mut artifacts = vec![bounds_csv, summary_path];
    if let Some(p) = record_failures(&out, &failures)? {
        artifacts.push(p);
    }
    let manifest = RunManifest {
        command: "fusion-demo".into(),
        config_path,
        config_hash: cfg_hash,
        seed: None,
        out_dir: out.display().to_string(),
        artifacts: BTreeMap::new(),
    };
    finalize_manifest(&out, manifest, &artifacts)?;
    Ok(CommandReport {
        out_dir: out,
        artifacts,
        failures,
    })
}

#[derive(Debug, Clone)]
pub struct SimulateOpts {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub force: bool,
}

pub fn cmd_simulate(opts: &SimulateOpts) -> Result<CommandReport, CliError> {
    let (cfg, config_path) = load_json::<SarConfig>(opts.config.as_deref())?;
    let cfg_hash = config_hash(&cfg);
    let out = resolve_out_dir(opts.out.clone())?;
    prepare_out_dir(&out, &cfg_hash, opts.force)?;
    let records = simulate_table(&cfg)?;
    let states_csv = out.join("states.csv");
    write_csv(
        &states_csv,
        &[
            "run",
            "iter",
            "agent",
            "component",
            "mean",
            "bound_diag",
            "truth",
        ],
        records.iter().map(|r| {
            vec![
                r.run.to_string(),
                r.iter.to_string(),
                r.agent.to_string(),
                r.component.to_string(),
                fmt_f64(r.mean),
                fmt_f64(r.bound_diag),
                fmt_f64(r.truth),
            ]
        }),
    )?;
    let artifacts = vec![states_csv];
    let manifest = RunManifest {
        command: "simulate".into(),
        config_path,
        config_hash: cfg_hash,
        seed: Some(cfg.seed),
        out_dir: out.display().to_string(),
        artifacts: BTreeMap::new(),
    };
    finalize_manifest(&out, manifest, &artifacts)?;
    Ok(CommandReport {
        out_dir: out,
        artifacts,
        failures: Vec::new(),
    })
}

#[derive(Debug, Clone)]
pub struct MontecarloOpts {
    pub config: Option<PathBuf>,
    pub runs: Option<usize>,
    /// Reference method for the reduction table.
    pub compare: Option<Method>,
    /// Rayon worker threads; 0 keeps the global default.
    pub threads: usize,
    pub out: Option<PathBuf>,
    pub force: bool,
}

pub fn cmd_montecarlo(opts: &MontecarloOpts) -> Result<CommandReport, CliError> {
    let (mut cfg, config_path) = load_json::<SarConfig>(opts.config.as_deref())?;
    if let Some(runs) = opts.runs {
        cfg.runs = runs;
    }
    let cfg_hash = config_hash(&cfg);
    let out = resolve_out_dir(opts.out.clone())?;
    prepare_out_dir(&out, &cfg_hash, opts.force)?;

    let work = || -> Result<_, CliError> {
        let mc = monte_carlo(&cfg)?;
        let reduction = match opts.compare {
            None => None,
            Some(reference_method) => {
                let reference = SarConfig {
                    method: reference_method,
                    ..cfg.clone()
                };
                Some(compare_methods(&reference, &cfg)?)
            }
        };
        Ok((mc, reduction))
    };
    let (mc, reduction) = if opts.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.threads)
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
        pool.install(work)?
    } else {
        work()?
    };

    let curves_csv = out.join("curves.csv");
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for agent in 0..mc.n_agents {
        for iter in 1..=mc.horizon {
            for c in 0..mc.state_dim {
                let i = mc.idx(agent, iter, c);
                rows.push(vec![
                    agent.to_string(),
                    iter.to_string(),
                    c.to_string(),
                    fmt_f64(mc.bound[i]),
                    fmt_f64(mc.mse[i]),
                    fmt_f64(mc.stderr[i]),
                ]);
                if mc.mse[i] > mc.bound[i] + 3.0 * mc.stderr[i] {
                    failures.push(format!(
                        "conservativeness violated at agent {agent} iter {iter} component {c}: mse {} > bound {} + 3*stderr {}",
                        mc.mse[i], mc.bound[i], mc.stderr[i]
                    ));
                }
            }
        }
    }
    write_csv(
        &curves_csv,
        &["agent", "iter", "component", "bound", "mse", "mc_stderr"],
        rows.into_iter(),
    )?;
    let mut artifacts = vec![curves_csv];

    if let Some(table) = reduction {
        let reduction_csv = out.join("reduction.csv");
        let mut rows = Vec::new();
        for agent in 0..table.n_agents {
            for c in 0..table.state_dim {
                let i = agent * table.state_dim + c;
                rows.push(vec![
                    agent.to_string(),
                    c.to_string(),
                    fmt_f64(table.reference_bound[i]),
                    fmt_f64(table.candidate_bound[i]),
                    fmt_f64(table.reduction_pct[i]),
                ]);
            }
        }
        write_csv(
            &reduction_csv,
            &[
                "agent",
                "component",
                "reference_bound",
                "candidate_bound",
                "reduction_pct",
            ],
            rows.into_iter(),
        )?;
        artifacts.push(reduction_csv);
    }

    if let Some(p) = record_failures(&out, &failures)? {
        artifacts.push(p);
    }
    let manifest = RunManifest {
        command: "montecarlo".into(),
        config_path,
        config_hash: cfg_hash,
        seed: Some(cfg.seed),
        out_dir: out.display().to_string(),
        artifacts: BTreeMap::new(),
    };
    finalize_manifest(&out, manifest, &artifacts)?;
    Ok(CommandReport {
        out_dir: out,
        artifacts,
        failures,
    })
}
