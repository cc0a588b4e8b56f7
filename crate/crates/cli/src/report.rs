//! JSON run reports. Field order is fixed by the struct definitions, so two
//! runs with the same inputs produce byte-identical files except for the
//! timestamp line.

use std::time::{SystemTime, UNIX_EPOCH};

use covnet_core::{EdgeAccuracy, ScoredNetwork};
use serde::Serialize;

#[derive(Serialize)]
pub struct ConfigEcho {
    pub metric: String,
    pub data: String,
    pub covariates: Option<String>,
    pub tau: f64,
    pub delta: f64,
    pub upsilon: f64,
    pub center: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_parents: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub restarts: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edge_kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph: Option<String>,
}

#[derive(Serialize)]
pub struct FamilyReport {
    pub node: String,
    pub parents: Vec<String>,
    pub log_ml: f64,
}

#[derive(Serialize)]
pub struct AccuracyReport {
    pub comparison: &'static str,
    pub correct: usize,
    pub spurious: usize,
    pub missing: usize,
}

impl AccuracyReport {
    pub fn new(acc: EdgeAccuracy, directed: bool) -> Self {
        Self {
            comparison: if directed { "directed" } else { "skeleton" },
            correct: acc.correct,
            spurious: acc.spurious,
            missing: acc.missing,
        }
    }
}

#[derive(Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub timestamp_unix: u64,
    pub config: ConfigEcho,
    pub variables: Vec<String>,
    pub edges: Vec<[String; 2]>,
    pub total_log_score: f64,
    pub log_graph_prior: f64,
    pub family_scores: Vec<FamilyReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<AccuracyReport>,
}

impl Report {
    pub fn new(
        command: &'static str,
        config: ConfigEcho,
        names: &[String],
        network: &ScoredNetwork,
        log_graph_prior: f64,
        accuracy: Option<AccuracyReport>,
    ) -> Self {
        let edges = network
            .dag
            .edges()
            .map(|(u, v)| [names[u].clone(), names[v].clone()])
            .collect();
        let family_scores = network
            .family_scores
            .iter()
            .map(|f| FamilyReport {
                node: names[f.node].clone(),
                parents: f.parent_set.iter().map(|&u| names[u].clone()).collect(),
                log_ml: f.log_ml,
            })
            .collect();
        Self {
            tool: "covnet",
            version: env!("CARGO_PKG_VERSION"),
            command,
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            config,
            variables: names.to_vec(),
            edges,
            total_log_score: network.total_log_score,
            log_graph_prior,
            family_scores,
            accuracy,
        }
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }
}
