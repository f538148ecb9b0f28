use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use surrobench::dataset::{ecdf, noise_stats, Dataset, SplitSpec};
use surrobench::gbtree::BoostParams;
use surrobench::harness::{
    run_benchmark_suite, run_datafit_eval, run_loo_eval, run_paramfree_sweep, run_smoothing_experiment,
    run_topology_sweep, ExperimentReport, FitMetrics, RunDir,
};
use surrobench::io::{write_csv, write_json};
use surrobench::optimizers::{Objective, OptimizerConfig, OptimizerKind, OracleObjective, SurrogateObjective};
use surrobench::rng::substream;
use surrobench::searchspace::{enumerate_genotypes, space_counts, validate, Operation};
use surrobench::surrogate::{fit_benchmark, FitOptions, SurrogateBenchmark};
use surrobench::synth::{generate_dataset, generate_repeats, sample_distinct, OracleParams, SyntheticOracle};
use surrobench::{Genotype, SpaceConfig};

/// Surrogate benchmark engine for cell-based architecture search.
#[derive(Parser, Debug)]
#[command(name = "surrobench", version)]
struct Cli {
    /// Root seed; every random draw derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Root directory for run artifacts.
    #[arg(long, global = true, env = "SURROBENCH_OUT", default_value = "runs")]
    out: PathBuf,
    /// Worker threads for parallel folds and seeds (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SpaceArgs {
    /// Intermediate nodes per cell.
    #[arg(long, default_value_t = 4)]
    n_intermediate: usize,
    /// Comma-separated operation names; defaults to all seven.
    #[arg(long, value_delimiter = ',')]
    ops: Vec<Operation>,
}

impl SpaceArgs {
    fn config(&self) -> Result<SpaceConfig> {
        if self.ops.is_empty() && self.n_intermediate == 4 {
            return Ok(SpaceConfig::default());
        }
        let ops = if self.ops.is_empty() { SpaceConfig::default().ops } else { self.ops.clone() };
        Ok(SpaceConfig::reduced(self.n_intermediate, &ops)?)
    }
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
enum Profile {
    Lgb,
    Xgb,
}

#[derive(Args, Debug, Clone, Serialize)]
struct BoostArgs {
    #[arg(long, value_enum, default_value = "lgb")]
    profile: Profile,
    /// Override the profile's number of boosting rounds.
    #[arg(long)]
    n_rounds: Option<usize>,
}

impl BoostArgs {
    fn params(&self, seed: u64) -> BoostParams {
        let mut p = match self.profile {
            Profile::Lgb => BoostParams::lgb_profile(),
            Profile::Xgb => BoostParams::xgb_profile(),
        };
        if let Some(n) = self.n_rounds {
            p.n_rounds = n;
        }
        p.seed = seed;
        p
    }
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Command {
    /// Build a synthetic oracle and collect optimizer-generated records.
    SynthGen {
        #[command(flatten)]
        space: SpaceArgs,
        /// Optimizer budgets, e.g. `RS:20000,RE:3000`.
        #[arg(long, value_delimiter = ',', default_value = "RS:2000")]
        mix: Vec<String>,
        #[arg(long, default_value_t = 1.7e-3)]
        noise_std: f64,
        /// Also evaluate this many distinct genotypes `--n-seeds` times.
        #[arg(long, default_value_t = 0)]
        n_repeat_genotypes: usize,
        #[arg(long, default_value_t = 5)]
        n_seeds: usize,
    },
    /// Fit a surrogate benchmark on a dataset.
    Fit {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        boost: BoostArgs,
        /// Ensemble members.
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// Score a saved model on a dataset, or run the train/val/test protocol
    /// when no model is given.
    Eval {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        boost: BoostArgs,
    },
    /// Leave-one-optimizer-out evaluation.
    Loo {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        boost: BoostArgs,
    },
    /// Predicted error as edges are replaced by parameter-free ops.
    SweepParamfree {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 200)]
        n_genotypes: usize,
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
        ratios: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
    },
    /// Every cell topology with random op sets, truth vs prediction.
    SweepTopology {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        oracle: PathBuf,
        #[arg(long, default_value_t = 10)]
        n_op_sets: usize,
    },
    /// Surrogate vs. tabular error against held-out seeds.
    Smoothing {
        #[arg(long)]
        oracle: PathBuf,
        /// Distinct genotypes; 0 enumerates the whole space.
        #[arg(long, default_value_t = 0)]
        n_genotypes: usize,
        #[arg(long, default_value_t = 3)]
        n_seeds: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        rotate: bool,
        #[command(flatten)]
        boost: BoostArgs,
    },
    /// Run optimizers against a surrogate model or the oracle.
    RunOpt {
        /// Comma-separated optimizer names (RS, RE, DE, TPE, BANANAS, LS).
        #[arg(long, value_delimiter = ',', default_value = "RS")]
        optimizers: Vec<OptimizerKind>,
        #[arg(long, conflicts_with = "oracle", required_unless_present = "oracle")]
        model: Option<PathBuf>,
        #[arg(long)]
        oracle: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        budget: usize,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        /// Sample observed accuracies instead of using predicted means.
        #[arg(long, action = clap::ArgAction::Set, default_value_t = true)]
        noise: bool,
    },
    /// Print the prediction for one genotype as JSON.
    Query {
        #[arg(long)]
        model: PathBuf,
        /// Genotype JSON file.
        #[arg(long)]
        genotype: PathBuf,
        #[arg(long, action = clap::ArgAction::Set, default_value_t = false)]
        noise: bool,
    },
    /// Print exact search space sizes.
    CountSpace {
        #[command(flatten)]
        space: SpaceArgs,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SynthGen { .. } => "synth-gen",
            Command::Fit { .. } => "fit",
            Command::Eval { .. } => "eval",
            Command::Loo { .. } => "loo",
            Command::SweepParamfree { .. } => "sweep-paramfree",
            Command::SweepTopology { .. } => "sweep-topology",
            Command::Smoothing { .. } => "smoothing",
            Command::RunOpt { .. } => "run-opt",
            Command::Query { .. } => "query",
            Command::CountSpace { .. } => "count-space",
        }
    }
}

/// Echoed into every run directory as `config.json`.
#[derive(Serialize)]
struct RunConfig<'a> {
    seed: u64,
    #[serde(flatten)]
    command: &'a Command,
}

fn load_model(path: &Path) -> Result<SurrogateBenchmark> {
    SurrogateBenchmark::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn load_oracle(path: &Path) -> Result<SyntheticOracle> {
    SyntheticOracle::load(path).with_context(|| format!("loading oracle {}", path.display()))
}

fn load_data(path: &Path, space: &SpaceConfig) -> Result<Dataset> {
    Dataset::load_jsonl(path, space).with_context(|| format!("loading dataset {}", path.display()))
}

fn parse_mix(mix: &[String]) -> Result<Vec<(OptimizerKind, usize)>> {
    mix.iter()
        .map(|item| {
            let (name, n) = item.split_once(':').with_context(|| format!("mix entry {item:?} is not NAME:COUNT"))?;
            Ok((name.parse().map_err(anyhow::Error::msg)?, n.parse().with_context(|| format!("bad count in {item:?}"))?))
        })
        .collect()
}

fn finish<R: Serialize>(dir: &RunDir, name: &str, seed: u64, artifacts: Vec<String>, report: R) -> Result<()> {
    ExperimentReport {
        name: name.to_owned(),
        config_hash: dir.config_hash.clone(),
        seeds: vec![seed],
        artifacts,
        report,
    }
    .write(dir)?;
    println!("{}", dir.path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    let cmd = &cli.command;
    // commands that only print skip the run directory
    let run_dir = || RunDir::create(&cli.out, cmd.name(), &RunConfig { seed, command: cmd });
    match cmd {
        Command::CountSpace { space } => {
            let c = space_counts(&space.config()?);
            println!("topologies_per_cell {}", c.topologies_per_cell);
            println!("genotypes_per_cell {}", c.genotypes_per_cell);
            println!("total {}", c.total);
        }
        Command::Query { model, genotype, noise } => {
            let b = load_model(model)?;
            let text = std::fs::read_to_string(genotype).with_context(|| format!("reading {}", genotype.display()))?;
            let g = Genotype::from_json(&text)?;
            validate(&g, b.space())?;
            let q = b.query(&g, *noise, &mut substream(seed, "query", 0));
            println!("{}", serde_json::to_string(&q)?);
        }
        Command::SynthGen { space, mix, noise_std, n_repeat_genotypes, n_seeds } => {
            let space = space.config()?;
            let params = OracleParams { noise_std: *noise_std, ..OracleParams::with_seed(seed) };
            let oracle = SyntheticOracle::new(&space, params);
            let dir = run_dir()?;
            oracle.save(&dir.file("oracle.json"))?;
            let ds = generate_dataset(&oracle, &parse_mix(mix)?, &OptimizerConfig::default(), seed)?;
            ds.save_jsonl(&dir.file("dataset.jsonl"))?;
            let accs = ds.val_accs(&(0..ds.len()).collect::<Vec<_>>());
            ecdf(&accs)?.write_csv(&dir.file("val_acc_ecdf.csv"))?;
            let mut artifacts = vec!["oracle.json".to_owned(), "dataset.jsonl".into(), "val_acc_ecdf.csv".into()];
            let mut mean_repeat_std = None;
            if *n_repeat_genotypes > 0 {
                let gs = sample_distinct(&space, *n_repeat_genotypes, seed);
                let rep = generate_repeats(&oracle, &gs, *n_seeds, "repeat", seed)?;
                rep.save_jsonl(&dir.file("repeats.jsonl"))?;
                mean_repeat_std = noise_stats(&rep).mean_std;
                artifacts.push("repeats.jsonl".into());
            }
            #[derive(Serialize)]
            struct Summary {
                n_records: usize,
                n_genotypes: usize,
                tags: Vec<String>,
                mean_repeat_std: Option<f64>,
            }
            let summary = Summary {
                n_records: ds.len(),
                n_genotypes: ds.genotypes().len(),
                tags: ds.tags(),
                mean_repeat_std,
            };
            finish(&dir, cmd.name(), seed, artifacts, summary)?;
        }
        Command::Fit { space, data, boost, k } => {
            let space = space.config()?;
            let ds = load_data(data, &space)?;
            let opts = FitOptions { k: *k, seed, ..FitOptions::default() };
            let b = fit_benchmark(&ds, &space, &boost.params(seed), &opts)?;
            let dir = run_dir()?;
            b.save(&dir.file("model.json"))?;
            finish(&dir, cmd.name(), seed, vec!["model.json".into()], &b.hyperparameters)?;
        }
        Command::Eval { space, data, model, boost } => {
            let space = space.config()?;
            let ds = load_data(data, &space)?;
            let dir = run_dir()?;
            match model {
                Some(m) => {
                    let b = load_model(m)?;
                    let truth: Vec<f64> = ds.records().iter().map(|r| r.val_acc).collect();
                    let pred: Vec<f64> = ds.records().iter().map(|r| b.predictive(&r.genotype).mean).collect();
                    finish(&dir, cmd.name(), seed, vec![], FitMetrics::compute(&truth, &pred)?)?;
                }
                None => {
                    let report = run_datafit_eval(&ds, &space, &boost.params(seed), &SplitSpec::standard(seed))?;
                    finish(&dir, cmd.name(), seed, vec![], report)?;
                }
            }
        }
        Command::Loo { space, data, boost } => {
            let space = space.config()?;
            let ds = load_data(data, &space)?;
            let rows = run_loo_eval(&ds, &space, &boost.params(seed), seed)?;
            let dir = run_dir()?;
            write_csv(
                &dir.file("loo.csv"),
                &["left_out", "n_train", "n_val", "n_held_out", "r2", "kendall_tau", "sparse_kendall_tau"],
                rows.iter().map(|r| {
                    [
                        r.left_out.clone(),
                        r.n_train.to_string(),
                        r.n_val.to_string(),
                        r.n_held_out.to_string(),
                        r.r2.to_string(),
                        r.kendall_tau.to_string(),
                        r.sparse_kendall_tau.to_string(),
                    ]
                }),
            )?;
            finish(&dir, cmd.name(), seed, vec!["loo.csv".into()], rows)?;
        }
        Command::SweepParamfree { model, n_genotypes, ratios, repeats } => {
            let b = load_model(model)?;
            let gs = sample_distinct(b.space(), *n_genotypes, seed);
            let ops: Vec<Operation> = b.space().ops.iter().copied().filter(|o| o.is_parameter_free()).collect();
            if ops.is_empty() {
                bail!("the model's space has no parameter-free operations");
            }
            let report = run_paramfree_sweep(&b, &gs, ratios, &ops, *repeats, seed)?;
            let dir = run_dir()?;
            report.write_csv(&dir.file("paramfree.csv"))?;
            finish(&dir, cmd.name(), seed, vec!["paramfree.csv".into()], &report.summary)?;
        }
        Command::SweepTopology { model, oracle, n_op_sets } => {
            let b = load_model(model)?;
            let oracle = load_oracle(oracle)?;
            if oracle.space != *b.space() {
                bail!("model and oracle use different search spaces");
            }
            let report = run_topology_sweep(&b, &oracle, *n_op_sets, seed)?;
            let dir = run_dir()?;
            write_csv(
                &dir.file("topology.csv"),
                &["topology_index", "op_set", "depth", "true_acc", "predicted_acc"],
                report.rows.iter().map(|r| {
                    [
                        r.topology_index.to_string(),
                        r.op_set.to_string(),
                        r.depth.to_string(),
                        r.true_acc.to_string(),
                        r.predicted_acc.to_string(),
                    ]
                }),
            )?;
            finish(&dir, cmd.name(), seed, vec!["topology.csv".into()], (&report.truth_source, &report.per_depth))?;
        }
        Command::Smoothing { oracle, n_genotypes, n_seeds, k, rotate, boost } => {
            let oracle = load_oracle(oracle)?;
            let gs: Vec<Genotype> = if *n_genotypes == 0 {
                enumerate_genotypes(&oracle.space)?.collect()
            } else {
                sample_distinct(&oracle.space, *n_genotypes, seed)
            };
            let opts = FitOptions { k: *k, seed, ..FitOptions::default() };
            let report = run_smoothing_experiment(&oracle, &gs, *n_seeds, &boost.params(seed), &opts, *rotate, seed)?;
            let dir = run_dir()?;
            finish(&dir, cmd.name(), seed, vec![], report)?;
        }
        Command::RunOpt { optimizers, model, oracle, budget, repeats, noise } => {
            let bench;
            let orc;
            let obj: Box<dyn Objective> = match (model, oracle) {
                (Some(m), _) => {
                    bench = load_model(m)?;
                    Box::new(SurrogateObjective::new(&bench, *noise))
                }
                (None, Some(o)) => {
                    orc = load_oracle(o)?;
                    Box::new(if *noise { OracleObjective::noisy(&orc) } else { OracleObjective::exact(&orc) })
                }
                (None, None) => bail!("run-opt needs --model or --oracle"),
            };
            let report =
                run_benchmark_suite(obj.as_ref(), optimizers, &OptimizerConfig::default(), *budget, *repeats, seed);
            let dir = run_dir()?;
            let artifacts = report.write_csvs(&dir.path)?;
            let finals: Vec<(String, Vec<f64>)> =
                optimizers.iter().map(|&k| (k.name().to_owned(), report.final_incumbents(k))).collect();
            write_json(&dir.file("final_incumbents.json"), &finals)?;
            finish(&dir, cmd.name(), seed, artifacts, finals)?;
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
