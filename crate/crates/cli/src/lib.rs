//! `ivrl` subcommands: train, eval, sweep, plot.
//!
//! Exit codes: 0 success, 1 invalid input or configuration (nothing was
//! run), 2 failure while running.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use ivrl_core::config::{CriticConfig, ExperimentConfig, OUTPUT_DIR_ENV};
use ivrl_core::critic::Personality;
use ivrl_core::env::BattleEnv;
use ivrl_core::harness::{evaluate, learner_dims, load_checkpoint, train_with, RunConfig};
use ivrl_core::learners::{Algorithm, Networks};
use ivrl_core::metrics::{
    read_csv, render_chart, to_csv, Metric, MetricsRecord, Series, DEFAULT_SMOOTHING_WINDOW,
};
use ivrl_core::Error;

#[derive(Debug, Parser)]
#[command(name = "ivrl", version, about = "Innate-value driven multi-agent RL workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one learner and write its metrics CSV and checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; overrides the environment and the file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Greedy evaluation of a checkpoint; prints one CSV record.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train every (algorithm, personality, seed) combination.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "coward,neutral,reckless")]
        personalities: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "qmix,iql,qtran")]
        algorithms: Vec<String>,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One SVG chart per algorithm overlaying the personalities.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        metric: String,
        /// Directory for the charts.
        #[arg(long)]
        out: PathBuf,
        /// Moving-average window in evaluations; 0 disables smoothing.
        #[arg(long, default_value_t = DEFAULT_SMOOTHING_WINDOW)]
        smooth: usize,
    },
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn invalid(message: impl Into<String>) -> CliError {
    CliError {
        code: 1,
        message: message.into(),
    }
}

fn invalid_err(e: Error) -> CliError {
    invalid(e.to_string())
}

fn runtime(e: Error) -> CliError {
    CliError {
        code: 2,
        message: e.to_string(),
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    ExperimentConfig::load(path).map_err(invalid_err)
}

fn resolve_output(config: &mut ExperimentConfig, out: Option<PathBuf>) {
    if let Some(dir) = out {
        config.run.output_dir = dir;
    } else if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
        config.run.output_dir = PathBuf::from(dir);
    }
}

fn run_training(run: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let summary = train_with(run, |r| {
        eprintln!(
            "[{}] step {:>7}  won {:.3}  dead allies {:.3}  dead enemies {:.3}",
            run.file_stem(),
            r.step,
            r.battle_won_mean,
            r.dead_allies_mean,
            r.dead_enemies_mean
        );
    })
    .map_err(runtime)?;
    writeln!(stdout, "{}", summary.metrics_path.display())
        .and_then(|_| writeln!(stdout, "{}", summary.checkpoint_path.display()))
        .map_err(|e| invalid(format!("cannot write to standard output: {e}")))
}

fn parse_list<T>(items: &[String], what: &str) -> Result<Vec<T>, CliError>
where
    T: std::str::FromStr<Err = Error>,
{
    if items.is_empty() {
        return Err(invalid(format!("--{what} must not be empty")));
    }
    items.iter().map(|s| s.parse().map_err(invalid_err)).collect()
}

/// Output file stem parts: `{algorithm}_{personality}_seed{seed}`.
fn parse_stem(stem: &str) -> Option<(String, String, u64)> {
    let (rest, seed) = stem.rsplit_once("_seed")?;
    let (alg, personality) = rest.split_once('_')?;
    Some((alg.to_string(), personality.to_string(), seed.parse().ok()?))
}

/// Mean over seeds of the k-th evaluation, for k up to the shortest run.
fn average_runs(runs: &[Vec<MetricsRecord>]) -> Vec<MetricsRecord> {
    let len = runs.iter().map(Vec::len).min().unwrap_or(0);
    let n = runs.len() as f64;
    (0..len)
        .map(|k| {
            let at = |f: fn(&MetricsRecord) -> f64| runs.iter().map(|r| f(&r[k])).sum::<f64>() / n;
            MetricsRecord {
                step: (runs.iter().map(|r| r[k].step as f64).sum::<f64>() / n).round() as u64,
                battle_won_mean: at(|r| r.battle_won_mean),
                dead_allies_mean: at(|r| r.dead_allies_mean),
                dead_enemies_mean: at(|r| r.dead_enemies_mean),
                mean_innate_return: at(|r| r.mean_innate_return),
                n_episodes: runs.iter().map(|r| r[k].n_episodes).sum(),
            }
        })
        .collect()
}

fn plot(input: &Path, metric: &str, out: &Path, smooth: usize, stdout: &mut dyn Write) -> Result<(), CliError> {
    let metric: Metric = metric.parse().map_err(invalid_err)?;
    let entries = fs::read_dir(input)
        .map_err(|e| invalid(format!("cannot read {}: {e}", input.display())))?;
    // algorithm -> personality -> runs
    let mut runs: BTreeMap<String, BTreeMap<String, Vec<Vec<MetricsRecord>>>> = BTreeMap::new();
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    for path in paths {
        let Some((alg, personality, _)) = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(parse_stem)
        else {
            continue;
        };
        let records = read_csv(&path).map_err(invalid_err)?;
        runs.entry(alg).or_default().entry(personality).or_default().push(records);
    }
    if runs.is_empty() {
        return Err(invalid(format!("no metrics CSV files in {}", input.display())));
    }
    fs::create_dir_all(out).map_err(|e| invalid(format!("cannot create {}: {e}", out.display())))?;
    let order = |name: &str| {
        Personality::PRESETS
            .iter()
            .position(|p| p.name() == name)
            .unwrap_or(Personality::PRESETS.len())
    };
    for (alg, by_personality) in runs {
        let mut names: Vec<&String> = by_personality.keys().collect();
        names.sort_by_key(|n| (order(n), n.to_string()));
        let series: Vec<Series> = names
            .into_iter()
            .map(|name| Series {
                label: name.clone(),
                records: average_runs(&by_personality[name]),
            })
            .collect();
        let path = out.join(format!("{alg}_{metric}.svg"));
        let smoothing = (smooth > 0).then_some(smooth);
        render_chart(&format!("{metric} ({alg})"), &series, metric, smoothing, &path)
            .map_err(runtime)?;
        writeln!(stdout, "{}", path.display()).map_err(|e| invalid(e.to_string()))?;
    }
    Ok(())
}

/// Runs one parsed command, writing machine-readable output to `stdout`.
pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config, seed, out } => {
            let mut experiment = load_config(&config)?;
            if let Some(seed) = seed {
                experiment.run.seed = seed;
            }
            resolve_output(&mut experiment, out);
            let run = experiment.run_config().map_err(invalid_err)?;
            run_training(&run, stdout)
        }
        Command::Eval {
            config,
            checkpoint,
            episodes,
            seed,
        } => {
            let experiment = load_config(&config)?;
            let run = experiment.run_config().map_err(invalid_err)?;
            if episodes == 0 {
                return Err(invalid("--episodes must be at least 1"));
            }
            let ck = load_checkpoint(&checkpoint).map_err(invalid_err)?;
            let step = ck.step;
            let networks = Networks::from_parts(&run.learner, &learner_dims(&run.scenario), ck.networks)
                .map_err(|e| invalid(format!("{}: {e}", checkpoint.display())))?;
            let env = BattleEnv::new(run.scenario.clone()).map_err(invalid_err)?;
            let record = evaluate(
                &env,
                &networks.agent,
                &run.profiles(),
                episodes,
                seed.unwrap_or(run.seed),
                step,
                run.eval_threads,
            )
            .map_err(runtime)?;
            stdout
                .write_all(to_csv(&[record]).as_bytes())
                .map_err(|e| invalid(format!("cannot write to standard output: {e}")))
        }
        Command::Sweep {
            config,
            personalities,
            algorithms,
            seeds,
            out,
        } => {
            let mut experiment = load_config(&config)?;
            resolve_output(&mut experiment, out);
            let personalities: Vec<Personality> = parse_list(&personalities, "personalities")?;
            let algorithms: Vec<Algorithm> = parse_list(&algorithms, "algorithms")?;
            if seeds.is_empty() {
                return Err(invalid("--seeds must not be empty"));
            }
            let mut runs = Vec::new();
            for &algorithm in &algorithms {
                for &personality in &personalities {
                    if personality == Personality::Custom {
                        return Err(invalid("--personalities: `custom` has no preset weights"));
                    }
                    for &seed in &seeds {
                        let mut cell = experiment.clone();
                        cell.learner.algorithm = algorithm;
                        cell.critic = CriticConfig {
                            personality: Some(personality),
                            weights: None,
                        };
                        cell.run.seed = seed;
                        runs.push(cell.run_config().map_err(invalid_err)?);
                    }
                }
            }
            for run in &runs {
                run_training(run, stdout)?;
            }
            Ok(())
        }
        Command::Plot {
            input,
            metric,
            out,
            smooth,
        } => plot(&input, &metric, &out, smooth, stdout),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    Ok(())
                }
                _ => Err(invalid(e.to_string().trim_end().to_string())),
            };
        }
    };
    execute(cli, stdout)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stems() {
        assert_eq!(
            parse_stem("qmix_neutral_seed12"),
            Some(("qmix".into(), "neutral".into(), 12))
        );
        assert_eq!(parse_stem("notes"), None);
        assert_eq!(parse_stem("qmix_neutral_seedx"), None);
    }

    #[test]
    fn averaging_truncates_to_the_shortest_run() {
        let rec = |step, won| MetricsRecord {
            step,
            battle_won_mean: won,
            dead_allies_mean: 1.0,
            dead_enemies_mean: 2.0,
            mean_innate_return: 0.0,
            n_episodes: 4,
        };
        let avg = average_runs(&[vec![rec(0, 0.0), rec(10, 1.0)], vec![rec(0, 0.5)]]);
        assert_eq!(avg.len(), 1);
        assert_eq!(avg[0].battle_won_mean, 0.25);
        assert_eq!(avg[0].n_episodes, 8);
    }
}
