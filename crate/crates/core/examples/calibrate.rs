//! Scratch calibration harness (not part of the deliverable surface):
//! sweeps edge-penalty strengths over the two simulation protocols.

use std::time::Instant;

use covnet_core::{
    edge_accuracy, gen_example1, gen_example2, hill_climb, GraphPrior, Hyperparams, MetricSpec,
    SearchConfig, SimOutput,
};

fn run_config(
    sims: &[SimOutput],
    metric_for: impl Fn(&SimOutput) -> MetricSpec,
    hp: &Hyperparams,
    prior: GraphPrior,
    label: &str,
) {
    let cfg = SearchConfig::default();
    let start = Instant::now();
    let mut corrects = Vec::new();
    let mut spurious = Vec::new();
    for sim in sims {
        let metric = metric_for(sim);
        let best = hill_climb(&sim.data, &metric, hp, prior, &cfg).unwrap();
        let acc = edge_accuracy(&best.dag, &sim.truth).unwrap();
        corrects.push(acc.correct as f64);
        spurious.push(acc.spurious as f64);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!(
        "{label}: correct {:.2} spurious {:.2} ({:.1?} per run, replicates {:?} spurious {:?})",
        mean(&corrects),
        mean(&spurious),
        start.elapsed() / sims.len() as u32,
        corrects.iter().map(|&c| c as i64).collect::<Vec<_>>(),
        spurious.iter().map(|&c| c as i64).collect::<Vec<_>>(),
    );
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(String::as_str).unwrap_or("ex2");
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let reps: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(10);

    match which {
        "ex2" => {
            let sims = gen_example2(seed, reps).unwrap();
            for log_kappa in [0.0f64, -2.944438979166441, -3.0] {
                let prior = if log_kappa == 0.0 {
                    GraphPrior::Uniform
                } else {
                    GraphPrior::EdgePenalty {
                        kappa: log_kappa.exp(),
                    }
                };
                let hp = Hyperparams::default();
                run_config(
                    &sims,
                    |s| MetricSpec::bgecm(s.covariates.clone()),
                    &hp,
                    prior,
                    &format!("ex2 bgecm seed={seed} logk={log_kappa}"),
                );
                run_config(
                    &sims,
                    |s| MetricSpec::residual(s.covariates.clone()),
                    &hp,
                    prior,
                    &format!("ex2 resid seed={seed} logk={log_kappa}"),
                );
            }
        }
        "ex1" => {
            let sims = gen_example1(seed, reps).unwrap();
            for log_kappa in [-3.5f64, -4.0, -4.5, -5.0] {
                let prior = GraphPrior::EdgePenalty {
                    kappa: log_kappa.exp(),
                };
                let hp = Hyperparams::default();
                run_config(
                    &sims,
                    |s| MetricSpec::bgecm(s.covariates.clone()),
                    &hp,
                    prior,
                    &format!("ex1 bgecm ups=1 seed={seed} logk={log_kappa}"),
                );
            }
        }
        "ex1full" => {
            let sims = gen_example1(seed, reps).unwrap();
            let log_kappa: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(-4.0);
            let prior = GraphPrior::EdgePenalty {
                kappa: log_kappa.exp(),
            };
            run_config(
                &sims,
                |_| MetricSpec::bge(),
                &Hyperparams::default(),
                prior,
                &format!("ex1 bge logk={log_kappa}"),
            );
            for ups in [0.01, 1.0, 1000.0] {
                let hp = Hyperparams::new(1.0, 2.0, ups).unwrap();
                run_config(
                    &sims,
                    |s| MetricSpec::bgecm(s.covariates.clone()),
                    &hp,
                    prior,
                    &format!("ex1 bgecm ups={ups} logk={log_kappa}"),
                );
            }
            run_config(
                &sims,
                |s| MetricSpec::residual(s.covariates.clone()),
                &Hyperparams::default(),
                prior,
                &format!("ex1 resid logk={log_kappa}"),
            );
        }
        other => eprintln!("unknown mode {other}"),
    }
}
