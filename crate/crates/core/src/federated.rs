//! Federated averaging simulation with optional ROC-AUC attention.
//!
//! Each round: sample participants, run local training on every sampled
//! agent, keep the best `ceil(P * m)` by local ROC-AUC, and replace the
//! global model with the instance-weighted mean of the kept updates.
//! `P = 1.0` is plain federated averaging.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::centralized::model_seed;
use crate::error::{Error, Result};
use crate::gower::GowerMatrix;
use crate::metrics::{self, MetricsReport};
use crate::nn::{self, ModelParameters, OptimizerState, SCORE_THRESHOLD};
use crate::seed::{derive_seed, derived_rng, TAG_CLIENT, TAG_SAMPLE};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ServerUpdate {
    /// Global weights become the weighted client mean.
    #[default]
    Replace,
    /// `global + server_lr * (mean - global)`
    ServerSgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GfConfig {
    pub run_name: String,
    pub node_number: usize,
    pub training_dataset_size: usize,
    pub test_dataset_size: usize,
    pub balance_dataset: bool,
    pub total_rounds: usize,
    pub nodes_per_round: usize,
    pub local_epochs_per_round: usize,
    pub server_learning_rate: f64,
    pub client_learning_rate: f64,
    pub training_batch_size: usize,
    pub test_batch_size: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention_proportion: Option<f64>,
    #[serde(default)]
    pub server_update: ServerUpdate,
}

impl GfConfig {
    pub fn attention(&self) -> f64 {
        self.attention_proportion.unwrap_or(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("node_number", self.node_number),
            ("training_dataset_size", self.training_dataset_size),
            ("total_rounds", self.total_rounds),
            ("nodes_per_round", self.nodes_per_round),
            ("training_batch_size", self.training_batch_size),
            ("test_batch_size", self.test_batch_size),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name}: must be at least 1")));
            }
        }
        if self.nodes_per_round > self.node_number {
            return Err(Error::Config(format!(
                "nodes_per_round: {} exceeds node_number {}",
                self.nodes_per_round, self.node_number
            )));
        }
        for (name, lr) in [
            ("server_learning_rate", self.server_learning_rate),
            ("client_learning_rate", self.client_learning_rate),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{name}: must be positive, got {lr}")));
            }
        }
        let p = self.attention();
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Config(format!(
                "attention_proportion: must be in (0, 1], got {p}"
            )));
        }
        Ok(())
    }
}

/// One agent's local matrices, both `M` columns wide.
#[derive(Debug, Clone)]
pub struct AgentMatrices {
    pub agent_id: usize,
    pub train: GowerMatrix,
    pub test: GowerMatrix,
}

#[derive(Debug, Clone)]
pub struct ServerState {
    pub global: ModelParameters,
    pub round: usize,
}

pub fn initialize(input_dim: usize, seed: u64) -> Result<ServerState> {
    Ok(ServerState {
        global: nn::init_model(input_dim, model_seed(seed))?,
        round: 0,
    })
}

/// Uniform sample without replacement from a stream keyed on
/// `(master_seed, round)`, sorted ascending.
pub fn sample_clients(round: usize, node_number: usize, nodes_per_round: usize, master_seed: u64) -> Vec<usize> {
    let amount = nodes_per_round.min(node_number);
    let mut rng = derived_rng(&[master_seed, TAG_SAMPLE, round as u64]);
    let mut ids = index::sample(&mut rng, node_number, amount).into_vec();
    ids.sort_unstable();
    ids
}

pub fn client_epoch_seed(master_seed: u64, round: usize, agent_id: usize, local_epoch: usize) -> u64 {
    derive_seed(&[
        master_seed,
        TAG_CLIENT,
        round as u64,
        agent_id as u64,
        local_epoch as u64,
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientResult {
    pub agent_id: usize,
    pub params: ModelParameters,
    pub n_train_instances: usize,
    pub local_train_loss: Option<f64>,
    pub local_auc: f64,
    /// Local test set was empty or single-class; `local_auc` is 0.5.
    pub auc_degenerate: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct LocalTraining {
    pub local_epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub eval_batch: usize,
}

/// Local training from a copy of `global`. The agent's Adam state persists
/// across rounds in `optimizer`.
pub fn client_update(
    global: &ModelParameters,
    agent: &AgentMatrices,
    optimizer: &mut OptimizerState,
    training: LocalTraining,
    round: usize,
    master_seed: u64,
) -> Result<ClientResult> {
    if agent.train.cols() != global.input_dim() {
        return Err(Error::Shape(format!(
            "agent {} train width {} does not match model input {}",
            agent.agent_id,
            agent.train.cols(),
            global.input_dim()
        )));
    }
    let mut params = global.clone();
    let mut loss_sum = 0.0;
    for epoch in 0..training.local_epochs {
        loss_sum += nn::train_epoch(
            &mut params,
            optimizer,
            &agent.train,
            training.batch_size,
            training.learning_rate,
            client_epoch_seed(master_seed, round, agent.agent_id, epoch),
        )?;
    }
    let local_train_loss = (training.local_epochs > 0).then(|| loss_sum / training.local_epochs as f64);

    let (local_auc, auc_degenerate) = if agent.test.is_empty() {
        (0.5, true)
    } else {
        let scores = nn::predict_matrix(&params, &agent.test, training.eval_batch)?;
        match metrics::roc_auc(&scores, agent.test.row_labels()) {
            Ok(a) => (a, false),
            Err(Error::Data(_)) => (0.5, true),
            Err(e) => return Err(e),
        }
    };
    Ok(ClientResult {
        agent_id: agent.agent_id,
        params,
        n_train_instances: agent.train.rows(),
        local_train_loss,
        local_auc,
        auc_degenerate,
    })
}

/// Number of results kept: `ceil(p * m)`, at least one.
pub fn attention_count(m: usize, p: f64) -> usize {
    // the epsilon absorbs products like 0.7 * 10 = 7.000000000000001
    (((p * m as f64) - 1e-9).ceil() as usize).clamp(1, m.max(1))
}

/// Keeps the results with the greatest local AUC (ties to the lower id),
/// returned in ascending id order.
pub fn select_attention(mut results: Vec<ClientResult>, p: f64) -> Vec<ClientResult> {
    let keep = attention_count(results.len(), p);
    results.sort_by(|a, b| {
        b.local_auc
            .total_cmp(&a.local_auc)
            .then(a.agent_id.cmp(&b.agent_id))
    });
    results.truncate(keep);
    results.sort_by_key(|r| r.agent_id);
    results
}

/// `n_i / sum(n)` for each result, in the given order.
pub fn aggregation_weights(selected: &[ClientResult]) -> Result<Vec<f64>> {
    let total: usize = selected.iter().map(|r| r.n_train_instances).sum();
    if total == 0 {
        return Err(Error::InvalidArgument("total aggregation weight is zero".into()));
    }
    Ok(selected
        .iter()
        .map(|r| r.n_train_instances as f64 / total as f64)
        .collect())
}

/// Instance-weighted mean of the selected client parameters, accumulated
/// in ascending agent order as `anchor + sum w_i (x_i - anchor)` so that
/// identical inputs reproduce themselves exactly.
pub fn aggregate_fedavg(
    selected: &[ClientResult],
    current_global: &ModelParameters,
    mode: ServerUpdate,
    server_learning_rate: f64,
) -> Result<ModelParameters> {
    if selected.is_empty() {
        return Err(Error::InvalidArgument("no client results to aggregate".into()));
    }
    let mut ordered: Vec<&ClientResult> = selected.iter().collect();
    ordered.sort_by_key(|r| r.agent_id);
    if ordered
        .iter()
        .any(|r| !r.params.same_shape(current_global))
    {
        return Err(Error::Shape("client parameters differ in shape".into()));
    }
    let owned: Vec<ClientResult> = ordered.iter().map(|r| (*r).clone()).collect();
    let weights = aggregation_weights(&owned)?;

    let anchor = &ordered[0].params;
    let mut mean = anchor.clone();
    for (r, &w) in ordered.iter().zip(&weights).skip(1) {
        mean.add_scaled(&r.params.sub(anchor)?, w)?;
    }
    match mode {
        ServerUpdate::Replace => Ok(mean),
        ServerUpdate::ServerSgd => {
            let mut next = current_global.clone();
            next.add_scaled(&mean.sub(current_global)?, server_learning_rate)?;
            Ok(next)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    /// 1-based.
    pub round: usize,
    pub sampled: Vec<usize>,
    pub selected: Vec<usize>,
    pub agg_train_loss: Option<f64>,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMetrics {
    pub agent_id: usize,
    pub n_train: usize,
    pub report: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct GfOutcome {
    pub global: ModelParameters,
    pub rounds: Vec<RoundReport>,
    pub agent_metrics: Vec<AgentMetrics>,
}

fn check_agents(config: &GfConfig, agents: &[AgentMatrices]) -> Result<usize> {
    if agents.len() != config.node_number {
        return Err(Error::Config(format!(
            "node_number is {} but {} agents were supplied",
            config.node_number,
            agents.len()
        )));
    }
    let width = agents[0].train.cols();
    for (i, a) in agents.iter().enumerate() {
        if a.agent_id != i {
            return Err(Error::InvalidArgument(format!(
                "agents must be ordered by id; position {i} holds agent {}",
                a.agent_id
            )));
        }
        if a.train.is_empty() {
            return Err(Error::Data(format!("agent {i} has no training rows")));
        }
        if a.train.cols() != width || (!a.test.is_empty() && a.test.cols() != width) {
            return Err(Error::Shape(format!(
                "agent {i} matrices are not {width} columns wide"
            )));
        }
    }
    Ok(width)
}

pub fn run_gf(config: &GfConfig, agents: &[AgentMatrices]) -> Result<GfOutcome> {
    config.validate()?;
    let width = check_agents(config, agents)?;
    let mut server = initialize(width, config.seed)?;
    let mut optimizers: Vec<OptimizerState> =
        agents.iter().map(|_| OptimizerState::new(&server.global)).collect();
    let training = LocalTraining {
        local_epochs: config.local_epochs_per_round,
        learning_rate: config.client_learning_rate,
        batch_size: config.training_batch_size,
        eval_batch: config.test_batch_size,
    };
    let tests: Vec<&GowerMatrix> = agents
        .iter()
        .map(|a| &a.test)
        .filter(|t| !t.is_empty())
        .collect();
    let validation = if tests.is_empty() {
        None
    } else {
        Some(GowerMatrix::stack(&tests)?)
    };

    let mut rounds = Vec::with_capacity(config.total_rounds);
    for round in 0..config.total_rounds {
        let sampled = sample_clients(round, config.node_number, config.nodes_per_round, config.seed);
        let mut jobs: Vec<(usize, OptimizerState)> = sampled
            .iter()
            .map(|&id| (id, optimizers[id].clone()))
            .collect();
        let global = &server.global;
        let results: Vec<ClientResult> = jobs
            .par_iter_mut()
            .map(|(id, opt)| client_update(global, &agents[*id], opt, training, round, config.seed))
            .collect::<Result<_>>()?;
        for (id, opt) in jobs {
            optimizers[id] = opt;
        }

        let selected = select_attention(results, config.attention());
        let weights = aggregation_weights(&selected)?;
        let agg_train_loss = selected
            .iter()
            .zip(&weights)
            .map(|(r, w)| r.local_train_loss.map(|l| l * w))
            .sum::<Option<f64>>();
        server.global = aggregate_fedavg(
            &selected,
            &server.global,
            config.server_update,
            config.server_learning_rate,
        )?;
        server.round = round + 1;
        let val_loss = validation
            .as_ref()
            .map(|v| nn::matrix_loss(&server.global, v, config.test_batch_size))
            .transpose()?;
        rounds.push(RoundReport {
            round: round + 1,
            sampled,
            selected: selected.iter().map(|r| r.agent_id).collect(),
            agg_train_loss,
            val_loss,
        });
    }

    let agent_metrics = agents
        .iter()
        .map(|a| {
            if a.test.is_empty() {
                return Err(Error::Data(format!("agent {} has no test rows", a.agent_id)));
            }
            let scores = nn::predict_matrix(&server.global, &a.test, config.test_batch_size)?;
            Ok(AgentMetrics {
                agent_id: a.agent_id,
                n_train: a.train.rows(),
                report: MetricsReport::from_scores(&scores, a.test.row_labels(), SCORE_THRESHOLD)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GfOutcome {
        global: server.global,
        rounds,
        agent_metrics,
    })
}
