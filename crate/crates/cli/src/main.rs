use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ptcb_core::crb::estimate_twirl_fidelity;
use ptcb_core::interleaved::{combined_fidelity, fidelity_interval};
use ptcb_core::noise::sample_noise_ensemble;
use ptcb_core::ptcb::SegmentTable;
use ptcb_core::ptm::process_fidelity;
use ptcb_core::{
    estimate_fidelity, load_config, run_sweep, summarize, Error, ExperimentConfig, PairSource, Result, SweepPlan,
    SweepRow, TransferMatrix,
};

mod output;

use output::{write_csv, write_json, OutDir};

#[derive(Parser, Debug)]
#[command(name = "ptcb", version, about = "Character-benchmarking simulations on Pauli transfer matrices")]
struct Cli {
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the target-gate fidelity with the Pauli-twirl protocol.
    RunPtcb {
        #[arg(long)]
        config: PathBuf,
        /// Also write every sampled sequence to sequences.csv.
        #[arg(long)]
        sequences: bool,
    },
    /// Measure the Pauli eigenvalues and fidelity of the twirl-gate noise.
    RunCrb {
        #[arg(long)]
        config: PathBuf,
    },
    /// Bound the target fidelity from the combined and twirl-gate fidelities.
    Interleave {
        /// Run both protocols from this configuration.
        #[arg(long, conflicts_with_all = ["ptcb_summary", "crb_summary"])]
        config: Option<PathBuf>,
        /// summary.json of a previous run-ptcb.
        #[arg(long)]
        ptcb_summary: Option<PathBuf>,
        /// summary.json of a previous run-crb.
        #[arg(long)]
        crb_summary: Option<PathBuf>,
        /// Combined fidelity; overrides the summaries.
        #[arg(long)]
        combined: Option<f64>,
        /// Twirl-gate fidelity; overrides the summaries.
        #[arg(long)]
        twirl: Option<f64>,
        /// Hilbert-space dimension.
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Draw calibrated channels from the noise ensemble.
    SampleNoise {
        /// Takes the qubit count and ensemble settings from here.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        count: usize,
    },
    /// Run a parameter sweep over the noise ensemble.
    RunSweep {
        #[arg(long)]
        plan: PathBuf,
    },
    /// Group sweep rows into per-kind series files.
    EmitPlotdata {
        /// rows.csv written by run-sweep.
        #[arg(long)]
        rows: PathBuf,
    },
    /// Write a transfer matrix in the dump format read by `ptm-file` noise.
    DumpPtm {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Which::Ideal)]
        which: Which,
    },
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Which {
    Ideal,
    Noise,
    Effective,
    TwirlNoise,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot start {threads} worker threads: {e}");
            return ExitCode::from(3);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let out = || OutDir::new(cli.out.clone().unwrap_or_else(|| PathBuf::from("ptcb-out")));
    match &cli.command {
        Command::RunPtcb { config, sequences } => run_ptcb(&experiment(config, cli.seed)?, *sequences, &out()?),
        Command::RunCrb { config } => run_crb(&experiment(config, cli.seed)?, &out()?),
        Command::Interleave {
            config,
            ptcb_summary,
            crb_summary,
            combined,
            twirl,
            dim,
        } => {
            let inputs = match config {
                Some(path) => interleave_inputs_from_run(&experiment(path, cli.seed)?)?,
                None => interleave_inputs_from_summaries(ptcb_summary.as_deref(), crb_summary.as_deref())?,
            };
            let combined = combined.or(inputs.combined).ok_or_else(|| missing("combined"))?;
            let twirl = twirl.or(inputs.twirl).unwrap_or(1.0);
            let dim = dim.or(inputs.dim).ok_or_else(|| missing("dim"))?;
            let interval = fidelity_interval(combined, twirl, dim)?;
            println!(
                "F in [{}, {}]  width {}  E {}  branch {:?}",
                interval.lower,
                interval.upper,
                interval.width(),
                interval.e_bound,
                interval.branch
            );
            if let Some(dir) = &cli.out {
                let summary = serde_json::json!({
                    "combined": combined,
                    "twirl": twirl,
                    "dim": dim,
                    "interval": interval,
                    "inputs": inputs.echo,
                });
                write_json(&OutDir::new(dir.clone())?.path("summary.json"), &summary)?;
            }
            Ok(())
        }
        Command::SampleNoise { config, count } => {
            let mut cfg = match config {
                Some(path) => load_config::<ExperimentConfig>(path)?,
                None => ExperimentConfig::default(),
            };
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            sample_noise(&cfg, *count, &out()?)
        }
        Command::RunSweep { plan } => {
            let mut plan: SweepPlan = load_config(plan)?;
            if let Some(seed) = cli.seed {
                plan.seed = seed;
            }
            let rows = run_sweep(&plan)?;
            let dir = out()?;
            write_csv(&dir.path("rows.csv"), &rows)?;
            let failures = rows.iter().filter(|r| !r.error.is_empty()).count();
            write_json(
                &dir.path("summary.json"),
                &serde_json::json!({ "plan": plan, "rows": rows.len(), "failures": failures }),
            )?;
            Ok(())
        }
        Command::EmitPlotdata { rows } => {
            let mut reader = csv::Reader::from_path(rows).map_err(|e| Error::config("--rows", e.to_string()))?;
            let rows = reader
                .deserialize::<SweepRow>()
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    what: "sweep rows",
                    reason: e.to_string(),
                })?;
            let series = summarize(&rows);
            let dir = out()?;
            let mut kinds: Vec<_> = series.iter().map(|s| s.kind).collect();
            kinds.dedup();
            for kind in kinds {
                let name = serde_json::to_value(kind).expect("kind serializes");
                let points: Vec<_> = series.iter().filter(|s| s.kind == kind).collect();
                write_csv(&dir.path(&format!("series-{}.csv", name.as_str().unwrap_or("sweep"))), &points)?;
            }
            Ok(())
        }
        Command::DumpPtm { config, which } => {
            let mut cfg = match config {
                Some(path) => load_config::<ExperimentConfig>(path)?,
                None => ExperimentConfig::default(),
            };
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let model = cfg.resolve()?.model;
            let matrix = match which {
                Which::Ideal => model.ideal.clone(),
                Which::Noise => model.ideal.transpose().compose(&model.noisy)?,
                Which::Effective => model.effective(),
                Which::TwirlNoise => model
                    .twirl_noise
                    .clone()
                    .ok_or_else(|| Error::config("pauli_noise", "not set"))?,
            };
            match &cli.out {
                Some(dir) => {
                    let path = OutDir::new(dir.clone())?.path("ptm.txt");
                    matrix.write_dump(std::io::BufWriter::new(std::fs::File::create(path)?))
                }
                None => matrix.write_dump(std::io::stdout().lock()),
            }
        }
    }
}

fn missing(flag: &str) -> Error {
    Error::config(format!("--{flag}"), "not given and not found in a summary")
}

fn experiment(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = load_config(path)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run_ptcb(cfg: &ExperimentConfig, sequences: bool, dir: &OutDir) -> Result<()> {
    let resolved = cfg.resolve()?;
    let mut estimator = resolved.estimator.clone();
    if let PairSource::Protocol(settings) = &mut estimator.source {
        settings.record = sequences;
    }
    let est = estimate_fidelity(&resolved.model, &estimator, cfg.seed)?;
    write_csv(&dir.path("pairs.csv"), &output::pair_rows(&est))?;
    write_csv(&dir.path("records.csv"), &output::depth_rows(&est))?;
    if sequences {
        write_csv(&dir.path("sequences.csv"), &output::sequence_rows(&est))?;
    }
    let segments = SegmentTable::new(&resolved.model.ideal)?.len();
    let failures: Vec<_> = est
        .failures
        .iter()
        .map(|(p, q, e)| serde_json::json!({ "p": p.to_string(), "q": q.to_string(), "error": e }))
        .collect();
    let summary = serde_json::json!({
        "config": cfg,
        "num_qubits": resolved.n,
        "segments": segments,
        "pairs": est.terms.len(),
        "estimate": est.estimate,
        "exact": est.exact,
        "estimated_infidelity": 1.0 - est.estimate,
        "actual_infidelity": 1.0 - est.exact,
        "discrepancy": est.exact - est.estimate,
        "clamped": est.clamped,
        "failures": failures,
    });
    write_json(&dir.path("summary.json"), &summary)
}

fn run_crb(cfg: &ExperimentConfig, dir: &OutDir) -> Result<()> {
    let resolved = cfg.resolve()?;
    let noise = twirl_noise(&resolved.model.twirl_noise)?;
    let twirl = estimate_twirl_fidelity(noise, &cfg.spam, &resolved.crb, resolved.q_selection, cfg.seed)?;
    write_csv(&dir.path("eigenvalues.csv"), &output::eigenvalue_rows(&twirl, noise))?;
    write_csv(&dir.path("records.csv"), &output::crb_depth_rows(&twirl))?;
    let summary = serde_json::json!({
        "config": cfg,
        "num_qubits": resolved.n,
        "estimate": twirl.estimate,
        "exact": process_fidelity(noise),
    });
    write_json(&dir.path("summary.json"), &summary)
}

fn twirl_noise(noise: &Option<TransferMatrix>) -> Result<&TransferMatrix> {
    noise
        .as_ref()
        .ok_or_else(|| Error::config("pauli_noise", "required for Pauli-group benchmarking"))
}

#[derive(Default)]
struct InterleaveInputs {
    combined: Option<f64>,
    twirl: Option<f64>,
    dim: Option<usize>,
    echo: serde_json::Value,
}

fn interleave_inputs_from_run(cfg: &ExperimentConfig) -> Result<InterleaveInputs> {
    let resolved = cfg.resolve()?;
    twirl_noise(&resolved.model.twirl_noise)?;
    let c = combined_fidelity(
        &resolved.model,
        &resolved.estimator,
        &resolved.crb,
        resolved.q_selection,
        cfg.seed,
    )?;
    Ok(InterleaveInputs {
        combined: Some(c.combined_estimate),
        twirl: Some(c.twirl_estimate),
        dim: Some(1usize << resolved.n),
        echo: serde_json::json!({ "config": cfg, "fidelities": c, "target_exact": resolved.model.exact_fidelity() }),
    })
}

fn interleave_inputs_from_summaries(ptcb: Option<&Path>, crb: Option<&Path>) -> Result<InterleaveInputs> {
    let read = |path: &Path| -> Result<serde_json::Value> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            what: "run summary",
            reason: e.to_string(),
        })
    };
    let mut inputs = InterleaveInputs::default();
    let mut echo = serde_json::Map::new();
    if let Some(path) = ptcb {
        let s = read(path)?;
        inputs.combined = s["estimate"].as_f64();
        inputs.dim = s["num_qubits"].as_u64().map(|n| 1usize << n);
        echo.insert("ptcb_summary".into(), path.display().to_string().into());
    }
    if let Some(path) = crb {
        let s = read(path)?;
        inputs.twirl = s["estimate"].as_f64();
        echo.insert("crb_summary".into(), path.display().to_string().into());
    }
    inputs.echo = echo.into();
    Ok(inputs)
}

fn sample_noise(cfg: &ExperimentConfig, count: usize, dir: &OutDir) -> Result<()> {
    let n = cfg.gate.num_qubits();
    cfg.ensemble
        .validate()
        .map_err(|e| Error::config("ensemble", e.to_string()))?;
    let members = sample_noise_ensemble(count, n, &cfg.ensemble, cfg.seed)?;
    write_csv(&dir.path("noise.csv"), &output::noise_rows(&members))?;
    write_json(
        &dir.path("summary.json"),
        &serde_json::json!({ "num_qubits": n, "count": count, "seed": cfg.seed, "ensemble": cfg.ensemble }),
    )
}
