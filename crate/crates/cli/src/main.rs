//! covnet: learn Gaussian Bayesian-network structures from expression-style
//! data, adjusting for exogenous covariates, and reproduce the associated
//! simulation studies.

mod errors;
mod io;
mod report;

use std::env;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use covnet_core::{
    build_bgecm_transform, build_residual_transform, dag_log_score, edge_accuracy,
    edge_accuracy_directed, hill_climb, moralize, posterior_b, posterior_gamma, posterior_psi,
    transform_dataset, undirected_to_dot, CovariateMatrix, Dag, Dataset, GraphPrior, Hyperparams,
    InitStrategy, MetricKind, MetricSpec, SearchConfig,
};
use nalgebra::DMatrix;

use errors::CliError;
use report::{AccuracyReport, ConfigEcho, Report};

#[derive(Parser)]
#[command(
    name = "covnet",
    version,
    about = "Bayesian-network structure learning with exogenous-covariate adjustment"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a network from data and write edge list, moral graph, and report
    Learn(LearnArgs),
    /// Score a supplied graph against data
    Score(ScoreArgs),
    /// Posterior parameter summaries for a supplied graph
    Posterior(PosteriorArgs),
    /// Generate one of the benchmark simulation studies
    Simulate(SimulateArgs),
    /// Moralize an edge list and emit DOT
    Moralize(MoralizeArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricChoice {
    Bge,
    Bgecm,
    Residual,
}

impl MetricChoice {
    fn as_str(self) -> &'static str {
        match self {
            Self::Bge => "bge",
            Self::Bgecm => "bgecm",
            Self::Residual => "residual",
        }
    }
}

#[derive(Args)]
struct MetricArgs {
    /// Score metric: bge, bgecm, or residual
    #[arg(long, value_enum)]
    metric: MetricChoice,

    /// Covariates CSV, rows aligned 1:1 with the data rows
    #[arg(long)]
    covariates: Option<PathBuf>,

    /// Prior precision
    #[arg(long, default_value_t = 1.0)]
    tau: f64,

    /// Prior degrees of freedom
    #[arg(long, default_value_t = 2.0)]
    delta: f64,

    /// Covariate-effect precision (bgecm)
    #[arg(long, default_value_t = 1.0)]
    upsilon: f64,

    /// Mean-center columns before bge scoring (the default)
    #[arg(long, overrides_with = "no_center")]
    center: bool,

    /// Disable mean-centering for bge
    #[arg(long, overrides_with = "center")]
    no_center: bool,
}

struct PreparedMetric {
    spec: MetricSpec,
    covariate_names: Option<Vec<String>>,
    hp: Hyperparams,
}

impl MetricArgs {
    fn center(&self) -> bool {
        !self.no_center
    }

    fn prepare(&self, data: &Dataset) -> Result<PreparedMetric, CliError> {
        let hp = Hyperparams::new(self.tau, self.delta, self.upsilon)?;
        let (spec, covariate_names) = match self.metric {
            MetricChoice::Bge => {
                if self.covariates.is_some() {
                    return Err(CliError::Constraint(
                        "--metric bge takes no --covariates".into(),
                    ));
                }
                let spec = if self.center() {
                    MetricSpec::bge()
                } else {
                    MetricSpec::bge_uncentered()
                };
                (spec, None)
            }
            MetricChoice::Bgecm | MetricChoice::Residual => {
                let path = self.covariates.as_ref().ok_or_else(|| {
                    CliError::Constraint(format!(
                        "--metric {} requires --covariates",
                        self.metric.as_str()
                    ))
                })?;
                let (names, q) = io::read_covariates(path)?;
                if q.n() != data.n() {
                    return Err(CliError::Constraint(format!(
                        "covariates have {} rows but the data has {} samples",
                        q.n(),
                        data.n()
                    )));
                }
                if !q.spans_intercept() {
                    eprintln!(
                        "covnet: warning: covariate columns do not span an intercept; \
                         per-sample means are not absorbed by the transform"
                    );
                }
                let spec = match self.metric {
                    MetricChoice::Bgecm => MetricSpec::bgecm(q),
                    _ => MetricSpec::residual(q),
                };
                (spec, Some(names))
            }
        };
        Ok(PreparedMetric {
            spec,
            covariate_names,
            hp,
        })
    }

    fn config_echo(
        &self,
        data: &Path,
        search: Option<&SearchArgs>,
        edge_kappa: Option<f64>,
        graph: Option<&Path>,
    ) -> ConfigEcho {
        ConfigEcho {
            metric: self.metric.as_str().to_string(),
            data: data.display().to_string(),
            covariates: self.covariates.as_ref().map(|p| p.display().to_string()),
            tau: self.tau,
            delta: self.delta,
            upsilon: self.upsilon,
            center: self.center(),
            max_parents: search.map(|s| s.max_parents),
            restarts: search.map(|s| s.restarts),
            max_iterations: search.map(|s| s.max_iterations),
            seed: search.map(|s| s.seed),
            edge_kappa,
            graph: graph.map(|p| p.display().to_string()),
        }
    }
}

#[derive(Args)]
struct SearchArgs {
    /// Parent-set size bound
    #[arg(long, default_value_t = 4)]
    max_parents: usize,

    /// Additional random restarts beyond the first climb
    #[arg(long, default_value_t = 10)]
    restarts: usize,

    /// Seed driving all randomness
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Iteration bound per climb
    #[arg(long, default_value_t = 500)]
    max_iterations: usize,
}

impl SearchArgs {
    fn to_config(&self) -> SearchConfig {
        SearchConfig {
            max_parents: self.max_parents,
            restarts: self.restarts,
            seed: self.seed,
            max_iterations: self.max_iterations,
            init: InitStrategy::Empty,
        }
    }
}

#[derive(Args)]
struct LearnArgs {
    /// Data CSV: header row of variable names, one row per sample
    #[arg(long)]
    data: PathBuf,

    #[command(flatten)]
    metric: MetricArgs,

    #[command(flatten)]
    search: SearchArgs,

    /// Per-edge prior penalty in (0, 1]; 1 means a uniform graph prior.
    /// Defaults to 1/(p-1), the edge-inclusion prior with probability 1/p.
    #[arg(long)]
    edge_kappa: Option<f64>,

    /// True-graph edge list; adds an accuracy block to the report
    #[arg(long)]
    truth: Option<PathBuf>,

    /// Compare directed edges instead of skeletons in the accuracy block
    #[arg(long, requires = "truth")]
    directed: bool,

    /// Directory for edges.csv, moral.dot, report.json, stdev.csv
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    data: PathBuf,

    #[command(flatten)]
    metric: MetricArgs,

    /// Edge list of the graph to score
    #[arg(long)]
    graph: PathBuf,

    /// Report destination (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PosteriorArgs {
    #[arg(long)]
    data: PathBuf,

    #[command(flatten)]
    metric: MetricArgs,

    /// Edge list of the conditioning graph
    #[arg(long)]
    graph: PathBuf,

    /// CSV destination (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Which benchmark protocol to generate
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    example: u8,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value_t = 10)]
    replicates: usize,

    /// Directory for data_repNN.csv, covariates.csv, truth_edges.csv
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct MoralizeArgs {
    /// Edge list to moralize
    #[arg(long)]
    graph: PathBuf,

    /// Full node list as comma-separated names (inferred from the edge list
    /// when omitted)
    #[arg(long, value_delimiter = ',')]
    names: Option<Vec<String>>,

    /// DOT destination (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn init_threads() {
    if let Ok(value) = env::var("COVNET_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}

fn main() -> ExitCode {
    init_threads();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(64);
        }
    };
    let result = match cli.command {
        Command::Learn(args) => run_learn(args),
        Command::Score(args) => run_score(args),
        Command::Posterior(args) => run_posterior(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Moralize(args) => run_moralize(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("covnet: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => io::write_text(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Per-variable standard deviations and, when covariates are present,
/// residual standard errors after projecting the covariates out.
fn write_stdev_csv(
    path: &Path,
    data: &Dataset,
    covariates: Option<&CovariateMatrix>,
) -> Result<(), CliError> {
    let n = data.n();
    let residual_sds: Option<Vec<f64>> = match covariates {
        Some(q) => {
            let t = build_residual_transform(q)?;
            let projected = t.matrix().transpose() * data.values();
            let dof = (n - q.m()) as f64;
            Some(
                (0..data.p())
                    .map(|i| (projected.column(i).norm_squared() / dof).sqrt())
                    .collect(),
            )
        }
        None => None,
    };
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["variable", "sd", "residual_sd"])?;
    for i in 0..data.p() {
        let col = data.column(i);
        let mean = col.mean();
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
        let resid = residual_sds
            .as_ref()
            .map(|r| format!("{}", r[i]))
            .unwrap_or_default();
        wtr.write_record([data.names()[i].as_str(), &format!("{sd}"), &resid])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Search prior: κ = 1/(p−1) unless overridden, i.e. independent edge
/// inclusion with probability 1/p.
fn learn_prior(p: usize, edge_kappa: Option<f64>) -> Result<GraphPrior, CliError> {
    let kappa = match edge_kappa {
        Some(k) => k,
        None => 1.0 / (p.max(2) as f64 - 1.0),
    };
    if kappa == 1.0 {
        Ok(GraphPrior::Uniform)
    } else {
        Ok(GraphPrior::edge_penalty(kappa)?)
    }
}

fn run_learn(args: LearnArgs) -> Result<(), CliError> {
    let data = io::read_dataset(&args.data)?;
    let prepared = args.metric.prepare(&data)?;
    let cfg = args.search.to_config();
    let prior = learn_prior(data.p(), args.edge_kappa)?;
    let network = hill_climb(&data, &prepared.spec, &prepared.hp, prior, &cfg)?;

    let accuracy = match &args.truth {
        Some(path) => {
            let truth = io::read_edge_list(path, data.names())?;
            let acc = if args.directed {
                edge_accuracy_directed(&network.dag, &truth)?
            } else {
                edge_accuracy(&network.dag, &truth)?
            };
            Some(AccuracyReport::new(acc, args.directed))
        }
        None => None,
    };

    std::fs::create_dir_all(&args.out_dir)?;
    let edges_path = args.out_dir.join("edges.csv");
    let moral_path = args.out_dir.join("moral.dot");
    let report_path = args.out_dir.join("report.json");
    let stdev_path = args.out_dir.join("stdev.csv");

    io::write_edge_list(&edges_path, &network.dag, data.names())?;
    let moral = moralize(&network.dag);
    io::write_text(&moral_path, &undirected_to_dot(&moral, data.names())?)?;
    write_stdev_csv(&stdev_path, &data, prepared.spec.covariates())?;

    let effective_kappa = match prior {
        GraphPrior::Uniform => 1.0,
        GraphPrior::EdgePenalty { kappa } => kappa,
    };
    let config =
        args.metric
            .config_echo(&args.data, Some(&args.search), Some(effective_kappa), None);
    let log_prior = prior.log_prior(network.dag.edge_count());
    let report = Report::new("learn", config, data.names(), &network, log_prior, accuracy);
    io::write_text(&report_path, &report.to_json()?)?;

    println!(
        "learned {} edges over {} variables (total log score {:.6}); wrote {}, {}, {}, {}",
        network.dag.edge_count(),
        data.p(),
        network.total_log_score,
        edges_path.display(),
        moral_path.display(),
        report_path.display(),
        stdev_path.display(),
    );
    Ok(())
}

fn run_score(args: ScoreArgs) -> Result<(), CliError> {
    let data = io::read_dataset(&args.data)?;
    let prepared = args.metric.prepare(&data)?;
    let dag = io::read_edge_list(&args.graph, data.names())?;
    let network = dag_log_score(&dag, &data, &prepared.spec, &prepared.hp, GraphPrior::Uniform)?;
    let config = args
        .metric
        .config_echo(&args.data, None, None, Some(&args.graph));
    let log_prior = GraphPrior::Uniform.log_prior(network.dag.edge_count());
    let report = Report::new("score", config, data.names(), &network, log_prior, None);
    write_or_print(args.out.as_deref(), &report.to_json()?)
}

/// One posterior CSV row per reported quantity.
struct PosteriorRow {
    node: String,
    param: &'static str,
    index: String,
    value: String,
}

fn posterior_rows(
    data: &Dataset,
    dag: &Dag,
    prepared: &PreparedMetric,
) -> Result<Vec<PosteriorRow>, CliError> {
    let hp = &prepared.hp;
    // bgecm works on raw data with the whitening matrix J inside the
    // formulas; bge and residual use the same prepared data as scoring with
    // J = I.
    let (working, j, q_opt): (Dataset, DMatrix<f64>, Option<&CovariateMatrix>) =
        match prepared.spec.kind() {
            MetricKind::Bge => {
                let mut values = data.values().clone();
                if prepared.spec.center() {
                    for mut col in values.column_iter_mut() {
                        let mean = col.mean();
                        col.add_scalar_mut(-mean);
                    }
                }
                let n = values.nrows();
                (
                    Dataset::new(values, data.names().to_vec())?,
                    DMatrix::identity(n, n),
                    None,
                )
            }
            MetricKind::Bgecm => {
                let q = prepared.spec.covariates().expect("validated");
                let t = build_bgecm_transform(q, hp.upsilon)?;
                (data.clone(), t.j, Some(q))
            }
            MetricKind::Residual => {
                let q = prepared.spec.covariates().expect("validated");
                let t = build_residual_transform(q)?;
                let reduced = transform_dataset(data, &t.matrix().transpose())?;
                let n = reduced.n();
                (reduced, DMatrix::identity(n, n), None)
            }
        };

    let parent_sets = dag.parent_sets();
    let mut rows = Vec::new();
    for node in 0..data.p() {
        let name = data.names()[node].clone();
        let parents = &parent_sets[node];
        let y = working.column(node).into_owned();
        let x = DMatrix::from_fn(working.n(), parents.len(), |r, c| {
            working.values()[(r, parents[c])]
        });

        let (gamma_mean, _) = posterior_gamma(&y, &x, &j, hp.tau)?;
        for (idx, &parent) in parents.iter().enumerate() {
            rows.push(PosteriorRow {
                node: name.clone(),
                param: "gamma",
                index: data.names()[parent].clone(),
                value: format!("{}", gamma_mean[idx]),
            });
        }

        if let Some(q) = q_opt {
            let (b_mean, _) = posterior_b(&y, &x, q, hp.tau, hp.upsilon)?;
            let q_names = prepared.covariate_names.as_deref().unwrap_or(&[]);
            for idx in 0..b_mean.len() {
                let label = q_names
                    .get(idx)
                    .cloned()
                    .unwrap_or_else(|| format!("q{}", idx + 1));
                rows.push(PosteriorRow {
                    node: name.clone(),
                    param: "b",
                    index: label,
                    value: format!("{}", b_mean[idx]),
                });
            }
        }

        let (shape, rate) = posterior_psi(&y, &x, &j, hp.tau, hp.delta)?;
        let mean = if shape > 1.0 {
            format!("{}", rate / (shape - 1.0))
        } else {
            String::new()
        };
        for (param, value) in [
            ("psi_shape", format!("{shape}")),
            ("psi_rate", format!("{rate}")),
            ("psi_mean", mean),
        ] {
            rows.push(PosteriorRow {
                node: name.clone(),
                param,
                index: String::new(),
                value,
            });
        }
    }
    Ok(rows)
}

fn run_posterior(args: PosteriorArgs) -> Result<(), CliError> {
    let data = io::read_dataset(&args.data)?;
    let prepared = args.metric.prepare(&data)?;
    let dag = io::read_edge_list(&args.graph, data.names())?;
    let rows = posterior_rows(&data, &dag, &prepared)?;

    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["node", "param", "index", "value"])
        .map_err(CliError::from)?;
    for row in rows {
        wtr.write_record([row.node.as_str(), row.param, row.index.as_str(), &row.value])
            .map_err(CliError::from)?;
    }
    let bytes = wtr
        .into_inner()
        .map_err(|e| CliError::Io(e.to_string()))?;
    let text = String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))?;
    write_or_print(args.out.as_deref(), &text)
}

fn run_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let outputs = match args.example {
        1 => covnet_core::gen_example1(args.seed, args.replicates)?,
        _ => covnet_core::gen_example2(args.seed, args.replicates)?,
    };
    std::fs::create_dir_all(&args.out_dir)?;

    let first = &outputs[0];
    let q_names: Vec<String> = (1..=first.covariates.m()).map(|i| format!("q{i}")).collect();
    io::write_matrix_csv(
        &args.out_dir.join("covariates.csv"),
        &q_names,
        first.covariates.values(),
    )?;
    io::write_edge_list(
        &args.out_dir.join("truth_edges.csv"),
        &first.truth,
        first.data.names(),
    )?;
    for (idx, sim) in outputs.iter().enumerate() {
        let path = args.out_dir.join(format!("data_rep{:02}.csv", idx + 1));
        io::write_matrix_csv(&path, sim.data.names(), sim.data.values())?;
    }
    println!(
        "wrote {} replicates of protocol {} to {}",
        outputs.len(),
        args.example,
        args.out_dir.display()
    );
    Ok(())
}

fn run_moralize(args: MoralizeArgs) -> Result<(), CliError> {
    let pairs = io::read_edge_pairs(&args.graph)?;
    let names: Vec<String> = match args.names {
        Some(names) => names,
        None => infer_node_names(&pairs),
    };
    let mut seen = std::collections::BTreeSet::new();
    for name in &names {
        if !seen.insert(name.as_str()) {
            return Err(CliError::Constraint(format!("duplicate node name {name:?}")));
        }
    }
    let mut edges = Vec::with_capacity(pairs.len());
    for (from, to) in &pairs {
        let u = names.iter().position(|n| n == from).ok_or_else(|| {
            CliError::Constraint(format!("edge endpoint {from:?} is not in the node list"))
        })?;
        let v = names.iter().position(|n| n == to).ok_or_else(|| {
            CliError::Constraint(format!("edge endpoint {to:?} is not in the node list"))
        })?;
        edges.push((u, v));
    }
    let dag = Dag::new(names.len(), edges)?;
    let text = undirected_to_dot(&moralize(&dag), &names)?;
    write_or_print(args.out.as_deref(), &text)
}

/// Node list inferred from an edge list: 1..max for all-numeric ids,
/// otherwise the sorted distinct names.
fn infer_node_names(pairs: &[(String, String)]) -> Vec<String> {
    let mut tokens: Vec<&str> = pairs
        .iter()
        .flat_map(|(a, b)| [a.as_str(), b.as_str()])
        .collect();
    tokens.sort_unstable();
    tokens.dedup();
    let numeric: Option<Vec<usize>> = tokens.iter().map(|t| t.parse::<usize>().ok()).collect();
    match numeric {
        Some(ids) if ids.iter().all(|&id| id >= 1) => {
            let max = ids.iter().copied().max().unwrap_or(0);
            (1..=max).map(|i| i.to_string()).collect()
        }
        _ => tokens.iter().map(|t| t.to_string()).collect(),
    }
}
