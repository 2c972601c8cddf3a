use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use iamp::dataset::{build_samples, read_dataset, write_dataset, DatasetConfig};
use iamp::evaluate::evaluate;
use iamp::run::{load_input, run_comparison, run_prediction, Input, RunConfig, ScenarioConfig};
use iamp::scenario::generate_scenario;
use iamp::store::{load_model, read_json, save_map, save_matrices, save_model, write_json};
use iamp::tracks::write_tracks;
use iamp_core::accel::{infer, train, FeatureVector, TrainConfig, FEATURE_LEN, PROFILE_LEN};
use iamp_core::markov::{compute_transition_matrices, Discretization};
use iamp_core::predict::Mode;

#[derive(Parser)]
#[command(version, about = "Interaction-aware motion prediction toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Baseline,
    Hybrid,
    /// Baseline then hybrid on the same seeds.
    Both,
}

#[derive(clap::Args)]
struct InputArgs {
    /// Map JSON; required with --tracks.
    #[arg(long, requires = "tracks")]
    map: Option<PathBuf>,
    /// Track CSV (sidecar JSON next to it).
    #[arg(long, requires = "map", conflicts_with = "scenario")]
    tracks: Option<PathBuf>,
    /// Generate a synthetic scene instead of reading tracks.
    #[arg(long)]
    scenario: Option<String>,
}

impl InputArgs {
    fn input(&self) -> Result<Input> {
        match (&self.map, &self.tracks, &self.scenario) {
            (Some(map), Some(tracks), None) => Ok(Input::Tracks {
                map: map.clone(),
                tracks: tracks.clone(),
            }),
            (None, None, Some(name)) => Ok(Input::Scenario(name.clone())),
            _ => bail!("give either --map and --tracks, or --scenario"),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compute the transition matrices for a discretization.
    Precompute {
        /// Discretization JSON; defaults apply to missing fields.
        #[arg(long)]
        disc: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        samples_per_cell: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Fit the acceleration model to a dataset CSV.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Dump the profiles a model predicts for the rows of a dataset CSV.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Build a training CSV from tracks or generated scenes.
    MakeDataset {
        #[command(flatten)]
        input: InputArgs,
        /// First generator seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Generated scenes, with consecutive seeds.
        #[arg(long, default_value_t = 1)]
        count: u64,
        /// Frames between samples.
        #[arg(long, default_value_t = 2)]
        stride: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run the prediction pipeline and write a report directory.
    Predict {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_enum, default_value = "baseline")]
        mode: ModeArg,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Precomputed matrices; computed on the fly when absent.
        #[arg(long)]
        matrices: Option<PathBuf>,
        /// Discretization JSON, checked against --matrices.
        #[arg(long)]
        disc: Option<PathBuf>,
        /// Full run configuration JSON; the flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        repeats: Option<usize>,
        /// Prediction horizon, s.
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(short, long)]
        output: PathBuf,
        /// Draw the grid snapshot.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Print the metric table of one or more report directories.
    Evaluate {
        #[arg(long, required = true)]
        report: Vec<PathBuf>,
    },
    /// Write a synthetic map, tracks and metadata.
    ScenarioGen {
        #[arg(long)]
        name: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn read_disc(path: Option<&Path>) -> Result<Option<Discretization>> {
    let Some(path) = path else { return Ok(None) };
    let value: serde_json::Value = read_json(path)?;
    let mut merged = serde_json::to_value(Discretization::default())?;
    if let (Some(base), Some(over)) = (merged.as_object_mut(), value.as_object()) {
        base.extend(over.clone());
    } else {
        bail!("{}: expected a JSON object", path.display());
    }
    Ok(Some(serde_json::from_value(merged).with_context(|| format!("{}", path.display()))?))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Precompute {
            disc,
            samples_per_cell,
            output,
        } => {
            let disc = read_disc(disc.as_deref())?.unwrap_or_default();
            let m = compute_transition_matrices(&disc, samples_per_cell)?;
            save_matrices(&output, &m)?;
            log::info!("{} states, {} + {} nonzeros", disc.n_states(), m.step.nnz(), m.interval.nnz());
        }
        Command::Train {
            data,
            epochs,
            seed,
            learning_rate,
            batch_size,
            output,
        } => {
            let samples = read_dataset(&data)?;
            let mut cfg = TrainConfig {
                epochs,
                seed,
                ..TrainConfig::default()
            };
            if let Some(lr) = learning_rate {
                cfg.learning_rate = lr;
            }
            if let Some(b) = batch_size {
                cfg.batch_size = b;
            }
            let model = train(&samples, &cfg)?;
            if let Some(loss) = model.meta.as_ref().and_then(|m| m.losses.last()) {
                println!("trained on {} samples, final loss {loss:.5}", samples.len());
            }
            save_model(&output, &model)?;
        }
        Command::Infer { model, data, output } => {
            let model = load_model(&model)?;
            let mut r = csv::Reader::from_path(&data)?;
            let mut w = csv::Writer::from_path(&output)?;
            w.write_record((0..PROFILE_LEN).map(|i| format!("a{i}")))?;
            for rec in r.records() {
                let rec = rec?;
                if rec.len() < FEATURE_LEN {
                    bail!("{}: rows need at least {FEATURE_LEN} feature columns", data.display());
                }
                let x = rec
                    .iter()
                    .take(FEATURE_LEN)
                    .map(|f| f.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()?;
                let profile = infer(&model, &FeatureVector(x))?;
                w.write_record(profile.0.iter().map(|a| a.to_string()))?;
            }
            w.flush()?;
        }
        Command::MakeDataset {
            input,
            seed,
            count,
            stride,
            output,
        } => {
            let cfg = DatasetConfig {
                stride,
                ..DatasetConfig::default()
            };
            let input = input.input()?;
            let seeds = match input {
                Input::Scenario(_) => (seed..seed + count).collect(),
                Input::Tracks { .. } => vec![seed],
            };
            let mut samples = Vec::new();
            for s in seeds {
                let (map, data) = load_input(&input, s)?;
                samples.extend(build_samples(&map, &data, &cfg)?);
            }
            println!("{} samples", samples.len());
            write_dataset(&output, &samples)?;
        }
        Command::Predict {
            input,
            mode,
            model,
            matrices,
            disc,
            config,
            seed,
            repeats,
            horizon,
            output,
            svg,
        } => {
            let mut run: RunConfig = match &config {
                Some(p) => read_json(p)?,
                None => RunConfig::default(),
            };
            run.seed = seed.unwrap_or(run.seed);
            run.repeats = repeats.unwrap_or(run.repeats);
            run.horizon = horizon.unwrap_or(run.horizon);
            run.mode = match mode {
                ModeArg::Baseline | ModeArg::Both => Mode::Baseline,
                ModeArg::Hybrid => Mode::Hybrid,
            };
            let mut sc = ScenarioConfig::new(input.input()?, run);
            sc.matrices = matrices;
            sc.disc = read_disc(disc.as_deref())?;
            sc.model = model;
            sc.output = Some(output.clone());
            sc.svg = svg;
            match mode {
                ModeArg::Both => {
                    run_comparison(&sc)?;
                }
                _ => {
                    run_prediction(&sc)?;
                }
            }
            print!("{}", evaluate(&output)?);
        }
        Command::Evaluate { report } => {
            for dir in &report {
                print!("{}", evaluate(dir)?);
            }
        }
        Command::ScenarioGen { name, seed, output } => {
            let s = generate_scenario(&name, seed)?;
            fs::create_dir_all(&output).with_context(|| format!("{}", output.display()))?;
            save_map(&output.join("map.json"), &s.map)?;
            write_tracks(&output.join("tracks.csv"), &s.tracks)?;
            write_json(&output.join("meta.json"), &s.meta)?;
            let n: usize = s.tracks.recordings.iter().map(|r| r.tracks.len()).sum();
            println!("{name} (seed {seed}): {n} tracks written to {}", output.display());
        }
    }
    Ok(())
}
