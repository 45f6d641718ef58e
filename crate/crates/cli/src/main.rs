use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use shopsim_core::catalog::{load_catalog, Catalog};
use shopsim_core::chat::{ChatClient, ChatConfig};
use shopsim_core::env::Environment;
use shopsim_core::generate::{generate_catalog, GenerationSpec, Vocabulary};
use shopsim_core::replay::{replay, rescore};
use shopsim_core::reward::RewardSelector;
use shopsim_core::tasks::{generate_tasks, split_tasks, validate_task, Scenario, Task, TaskGenConfig, TaskSet};
use shopsim_core::trace::{load_dir, EpisodeTrace};
use shopsim_eval::annotate::{annotate_errors, Classifier, LlmClassifier};
use shopsim_eval::policy::{LlmPolicyFactory, NoisyOracleFactory, OracleFactory, PolicyFactory, RandomFactory};
use shopsim_eval::report::{metrics_csv, step_histogram_csv, text_table};
use shopsim_eval::{
    collect_rollouts, export_sft, run_evaluation, write_groups, write_results, MetricsTable, RunOptions, SftFilter,
    ShopperBackend, DEFAULT_PARALLELISM,
};
use shopsim_gateway::{GatewayConfig, GatewayState};

#[derive(Parser)]
#[command(name = "shopsim", version, about = "Text shopping simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    #[command(subcommand)]
    Catalog(CatalogCmd),
    #[command(subcommand)]
    Tasks(TasksCmd),
    /// Run the HTTP session service.
    Serve {
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        tasks: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print a trace's recorded reward; with --catalog and --tasks, also
    /// re-score its purchase and compare.
    Score {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, requires = "tasks")]
        catalog: Option<PathBuf>,
        #[arg(long, requires = "catalog")]
        tasks: Option<PathBuf>,
    },
    /// Re-run a trace's actions and compare observations and rewards.
    Replay {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        trace: Vec<PathBuf>,
    },
    #[command(subcommand)]
    Eval(EvalCmd),
}

#[derive(Subcommand)]
enum CatalogCmd {
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        domains: usize,
        #[arg(long, default_value_t = 2)]
        first: usize,
        #[arg(long, default_value_t = 2)]
        fine: usize,
        #[arg(long, default_value_t = 120)]
        per_fine: usize,
        #[arg(long)]
        out: PathBuf,
    },
    Validate {
        #[arg(long)]
        catalog: PathBuf,
    },
}

#[derive(Subcommand)]
enum TasksCmd {
    Generate {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0.5)]
        personalized: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Domain-stratified split into `train.jsonl` and `test.jsonl`.
    Split {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    Validate {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        tasks: PathBuf,
    },
}

#[derive(Args)]
struct World {
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long)]
    tasks: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// oracle, random, noisy:<epsilon> or llm.
    #[arg(long, default_value = "oracle")]
    policy: String,
    /// Chat backend config for the llm policy (TOML; SHOPSIM_AGENT_* overrides).
    #[arg(long)]
    agent_config: Option<PathBuf>,
    /// scripted or llm.
    #[arg(long, default_value = "scripted")]
    shopper: String,
    /// Chat backend config for the llm shopper (TOML; SHOPSIM_SHOPPER_* overrides).
    #[arg(long)]
    shopper_config: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_PARALLELISM)]
    parallelism: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    step_limit: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Evaluate a policy over every task of the chosen scenarios.
    Run {
        #[command(flatten)]
        world: World,
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated scenario names, or `all`.
        #[arg(long, default_value = "all")]
        scenarios: String,
    },
    /// Grouped rollouts for advantage estimation.
    Rollouts {
        #[command(flatten)]
        world: World,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "single_turn")]
        scenario: Scenario,
        #[arg(long, default_value_t = 8)]
        group_size: usize,
        /// Number of tasks to use.
        #[arg(long, default_value_t = 32)]
        limit: usize,
        /// loose, strict or success.
        #[arg(long, default_value = "loose")]
        selector: RewardSelector,
    },
    /// Per-step chat examples from successful traces.
    ExportSft {
        #[arg(long)]
        traces: PathBuf,
        /// `success` or `strict:<threshold>`.
        #[arg(long, default_value = "success")]
        filter: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label trace errors with rule detectors and an optional chat classifier.
    Annotate {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        tasks: Option<PathBuf>,
        #[arg(long)]
        classifier_config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics table from persisted traces.
    Report {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        histogram: Option<PathBuf>,
    },
}

fn load_world(world: &World) -> Result<(Environment, TaskSet)> {
    let catalog = load_catalog(&world.catalog).with_context(|| format!("loading {}", world.catalog.display()))?;
    let tasks = TaskSet::load(&world.tasks).with_context(|| format!("loading {}", world.tasks.display()))?;
    Ok((Environment::new(catalog)?, tasks))
}

fn policy_factory(run: &RunArgs) -> Result<Box<dyn PolicyFactory>> {
    Ok(match run.policy.as_str() {
        "oracle" => Box::new(OracleFactory),
        "random" => Box::new(RandomFactory),
        "llm" => {
            let config = ChatConfig::load(run.agent_config.as_deref(), "SHOPSIM_AGENT")?;
            Box::new(LlmPolicyFactory { client: ChatClient::http(config)? })
        }
        other => match other.strip_prefix("noisy:").map(str::parse::<f64>) {
            Some(Ok(epsilon)) if (0.0..=1.0).contains(&epsilon) => Box::new(NoisyOracleFactory { epsilon }),
            _ => bail!("unknown policy {other:?}; use oracle, random, noisy:<epsilon> or llm"),
        },
    })
}

fn run_options(run: &RunArgs) -> Result<RunOptions> {
    let shopper = match run.shopper.as_str() {
        "scripted" => ShopperBackend::default(),
        "llm" => ShopperBackend::Llm(ChatConfig::load(run.shopper_config.as_deref(), "SHOPSIM_SHOPPER")?),
        other => bail!("unknown shopper backend {other:?}"),
    };
    Ok(RunOptions {
        parallelism: run.parallelism,
        base_seed: run.seed,
        shopper,
        trace_dir: Some(run.out.join("traces")),
        step_limit: run.step_limit,
    })
}

fn parse_scenarios(s: &str) -> Result<Vec<Scenario>> {
    if s == "all" {
        return Ok(Scenario::ALL.to_vec());
    }
    s.split(',').map(|x| x.trim().parse().map_err(anyhow::Error::msg)).collect()
}

fn load_traces(dir: &Path) -> Result<Vec<EpisodeTrace>> {
    let traces: Vec<EpisodeTrace> = load_dir(dir)?.into_iter().map(|(_, t)| t).collect();
    if traces.is_empty() {
        bail!("no traces under {}", dir.display());
    }
    Ok(traces)
}

fn subset(set: &TaskSet, tasks: Vec<Task>) -> TaskSet {
    let profiles = set
        .profiles
        .iter()
        .filter(|(id, _)| tasks.iter().any(|t| t.profile_ref.as_deref() == Some(id.as_str())))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    TaskSet { tasks, profiles }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn catalog_cmd(cmd: CatalogCmd) -> Result<()> {
    match cmd {
        CatalogCmd::Generate { seed, domains, first, fine, per_fine, out } => {
            let catalog = generate_catalog(seed, &GenerationSpec::new(domains, first, fine, per_fine))?;
            catalog.save(&out)?;
            println!("wrote {} products to {}", catalog.len(), out.display());
        }
        CatalogCmd::Validate { catalog } => {
            validate_catalog(load_catalog(&catalog)?)?;
        }
    }
    Ok(())
}

/// Loading already checks every product; this also builds the index.
fn validate_catalog(catalog: Catalog) -> Result<()> {
    let (name, products, fine) = (catalog.manifest().name.clone(), catalog.len(), catalog.tree().fine_categories().count());
    let env = Environment::new(catalog)?;
    println!("{name}: {products} products in {fine} fine categories, {} indexed", env.index().document_count());
    Ok(())
}

fn tasks_cmd(cmd: TasksCmd) -> Result<()> {
    match cmd {
        TasksCmd::Generate { catalog, seed, count, personalized, out } => {
            let c = load_catalog(&catalog)?;
            let config = TaskGenConfig { personalized_fraction: personalized, vocabulary: Vocabulary::default() };
            let set = generate_tasks(&c, seed, count, &config)?;
            set.save(&out)?;
            println!("wrote {} tasks ({} profiles) to {}", set.len(), set.profiles.len(), out.display());
        }
        TasksCmd::Split { tasks, ratio, seed, out_dir } => {
            let set = TaskSet::load(&tasks)?;
            let (train, test) = split_tasks(&set.tasks, ratio, seed)?;
            let (n_train, n_test) = (train.len(), test.len());
            subset(&set, train).save(&out_dir.join("train.jsonl"))?;
            subset(&set, test).save(&out_dir.join("test.jsonl"))?;
            println!("train {n_train}, test {n_test}");
        }
        TasksCmd::Validate { catalog, tasks } => {
            let c = load_catalog(&catalog)?;
            let set = TaskSet::load(&tasks)?;
            let failures: Vec<String> =
                set.tasks.iter().filter_map(|t| validate_task(&c, &set, t).err().map(|e| e.to_string())).collect();
            for f in &failures {
                eprintln!("{f}");
            }
            if !failures.is_empty() {
                bail!("{} of {} tasks invalid", failures.len(), set.len());
            }
            println!("{} tasks valid", set.len());
        }
    }
    Ok(())
}

fn serve(catalog: Option<PathBuf>, tasks: Option<PathBuf>, port: Option<u16>, config: Option<PathBuf>) -> Result<()> {
    let mut cfg = GatewayConfig::load(config.as_deref())?;
    cfg.catalog = catalog.or(cfg.catalog);
    cfg.tasks = tasks.or(cfg.tasks);
    cfg.port = port.unwrap_or(cfg.port);
    let catalog = load_catalog(cfg.catalog.as_deref().context("no catalog given")?)?;
    let tasks = TaskSet::load(cfg.tasks.as_deref().context("no task file given")?)?;
    let addr = format!("{}:{}", cfg.host, cfg.port);
    let state = GatewayState::new(cfg, catalog, tasks);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        shopsim_gateway::serve(listener, state, shutdown).await?;
        Ok(())
    })
}

fn score(trace: PathBuf, catalog: Option<PathBuf>, tasks: Option<PathBuf>) -> Result<bool> {
    let t = EpisodeTrace::load(&trace)?;
    let recorded = t.reward().cloned().context("trace is not terminal")?;
    println!("recorded: {}", serde_json::to_string(&recorded)?);
    if let (Some(catalog), Some(tasks)) = (catalog, tasks) {
        let (env, set) = load_world(&World { catalog, tasks })?;
        let fresh = rescore(&env, &set, &t)?;
        println!("rescored: {}", serde_json::to_string(&fresh)?);
        if fresh != recorded {
            eprintln!("rescored reward differs from the recorded one");
            return Ok(false);
        }
    }
    Ok(true)
}

fn replay_cmd(world: World, traces: Vec<PathBuf>) -> Result<bool> {
    let (env, set) = load_world(&world)?;
    let mut ok = true;
    for path in traces {
        let report = replay(&env, &set, &EpisodeTrace::load(&path)?)?;
        if report.matches() {
            println!("{}: reproduced", path.display());
        } else {
            ok = false;
            println!(
                "{}: diverged at observation {:?}, recorded {:?}, replayed {:?}",
                path.display(),
                report.first_divergence,
                report.recorded_reward.map(|r| r.r_loose),
                report.replayed_reward.map(|r| r.r_loose)
            );
        }
    }
    Ok(ok)
}

fn eval_cmd(cmd: EvalCmd) -> Result<()> {
    match cmd {
        EvalCmd::Run { world, run, scenarios } => {
            let (env, set) = load_world(&world)?;
            let factory = policy_factory(&run)?;
            let eval = run_evaluation(&env, &set, &parse_scenarios(&scenarios)?, factory.as_ref(), &run_options(&run)?)?;
            write_results(&run.out.join("results.jsonl"), &eval.episodes)?;
            write(&run.out.join("metrics.json"), &serde_json::to_string_pretty(&eval.metrics)?)?;
            write(&run.out.join("metrics.csv"), &metrics_csv(&eval.metrics))?;
            print!("{}", text_table(&eval.metrics));
        }
        EvalCmd::Rollouts { world, run, scenario, group_size, limit, selector } => {
            let (env, set) = load_world(&world)?;
            let factory = policy_factory(&run)?;
            let selected: Vec<&Task> = set.for_scenario(scenario).take(limit).collect();
            let got = collect_rollouts(&env, &set, &selected, scenario, factory.as_ref(), group_size, selector, &run_options(&run)?)?;
            write_groups(&run.out.join("groups.jsonl"), &got.groups)?;
            println!(
                "{} groups, {} traces, {} groups without variation",
                got.groups.len(),
                got.episodes.len(),
                got.identical_groups
            );
        }
        EvalCmd::ExportSft { traces, filter, out } => {
            let filter = match filter.as_str() {
                "success" => SftFilter::Success,
                other => match other.strip_prefix("strict:").map(str::parse::<f64>) {
                    Some(Ok(t)) => SftFilter::StrictAtLeast(t),
                    _ => bail!("unknown filter {other:?}; use success or strict:<threshold>"),
                },
            };
            let data = export_sft(&load_traces(&traces)?, filter);
            data.save(&out)?;
            println!("{} records from {} of {} traces", data.records.len(), data.traces_used.len(), data.traces_seen);
        }
        EvalCmd::Annotate { traces, tasks, classifier_config, out } => {
            let traces = load_traces(&traces)?;
            let set = tasks.map(|p| TaskSet::load(&p)).transpose()?;
            let classifier = match classifier_config {
                Some(p) => Some(LlmClassifier { client: ChatClient::http(ChatConfig::load(Some(&p), "SHOPSIM_CLASSIFIER")?)? }),
                None => None,
            };
            let report =
                annotate_errors(&traces, set.as_ref(), &Vocabulary::default(), classifier.as_ref().map(|c| c as &dyn Classifier));
            let mut lines = String::new();
            for a in &report.annotations {
                lines.push_str(&serde_json::to_string(a)?);
                lines.push('\n');
            }
            write(&out, &lines)?;
            for e in &report.classifier_errors {
                eprintln!("classifier: {e}");
            }
            println!("{} annotations over {} traces", report.annotations.len(), report.traces);
        }
        EvalCmd::Report { traces, csv, histogram } => {
            let table = MetricsTable::from_traces(&load_traces(&traces)?).map_err(anyhow::Error::msg)?;
            print!("{}", text_table(&table));
            if let Some(p) = csv {
                write(&p, &metrics_csv(&table))?;
            }
            if let Some(p) = histogram {
                write(&p, &step_histogram_csv(&table))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let result = match Cli::parse().command {
        Command::Catalog(c) => catalog_cmd(c).map(|_| true),
        Command::Tasks(c) => tasks_cmd(c).map(|_| true),
        Command::Serve { catalog, tasks, port, config } => serve(catalog, tasks, port, config).map(|_| true),
        Command::Score { trace, catalog, tasks } => score(trace, catalog, tasks),
        Command::Replay { catalog, tasks, trace } => replay_cmd(World { catalog, tasks }, trace),
        Command::Eval(c) => eval_cmd(c).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
