//! Monte Carlo comparison of recruitment strategies on synthetic
//! populations.
//!
//! Model assumptions (not empirical claims):
//!
//! * each site falls in one category per moderator, drawn independently
//!   with the configured probabilities;
//! * impact is `mean + Σ impact_effect(category) + Normal(0, noise_sd²)`;
//! * attractiveness is `size_coefficient · size + Σ propensity_effect(category)
//!   + Normal(0, noise_sd²)`, with `size ~ LogNormal(ln size_median, size_log_sd)`;
//! * recruiters approach sites in descending attractiveness. Under the
//!   deterministic response model every approached site agrees; under the
//!   stochastic one a site agrees with probability `logistic(attractiveness)`.
//!
//! When impact effects and propensity effects point the same way, taking
//! the most attractive sites over-samples high-impact categories. The quota
//! strategy walks the same ordering through an admission ledger whose plan
//! is built from the population's realized shares.

mod population;
mod strategy;

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use population::{generate_population, Population, SyntheticSite};
pub use strategy::{
    evaluate, plan_for_population, run_purposive, run_quota, run_simple_random, QuotaOutcome,
    Sample, SampleMetrics,
};

use crate::ledger::LedgerError;
use crate::plan::PlanError;
use crate::survey::SurveyError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("quota plan is infeasible: {0}")]
    InfeasiblePlan(String),
    #[error("cannot evaluate an empty sample")]
    EmptySample,
    #[error("site {0} is not in the population")]
    NotInPopulation(usize),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

impl From<SurveyError> for SimError {
    fn from(e: SurveyError) -> Self {
        SimError::Plan(PlanError::Estimates(e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCategory {
    pub label: String,
    pub probability: f64,
    /// Added to the impact of sites in this category.
    #[serde(default)]
    pub impact_effect: f64,
    /// Added to the attractiveness of sites in this category.
    #[serde(default)]
    pub propensity_effect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimModerator {
    pub name: String,
    pub categories: Vec<SimCategory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactModel {
    pub mean: f64,
    pub noise_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub size_coefficient: f64,
    pub size_median: f64,
    pub size_log_sd: f64,
    pub noise_sd: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseModel {
    #[default]
    Deterministic,
    Stochastic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub population_size: usize,
    pub moderators: Vec<SimModerator>,
    pub impact: ImpactModel,
    pub propensity: PropensityModel,
    pub total_target: u32,
    pub slack: f64,
    pub replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub response: ResponseModel,
    /// Worker threads; all cores when absent. Results do not depend on it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        if self.total_target == 0 {
            return bad("total_target must be at least 1".into());
        }
        if self.population_size < self.total_target as usize {
            return bad(format!(
                "population_size {} is smaller than total_target {}",
                self.population_size, self.total_target
            ));
        }
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if !(self.slack.is_finite() && self.slack >= 0.0) {
            return bad(format!("slack must be finite and non-negative, got {}", self.slack));
        }
        if self.moderators.is_empty() {
            return bad("at least one moderator is required".into());
        }
        for m in &self.moderators {
            if m.categories.len() < 2 {
                return bad(format!("moderator `{}` needs at least 2 categories", m.name));
            }
            if m.categories.iter().any(|c| !(0.0..=1.0).contains(&c.probability)) {
                return bad(format!("moderator `{}` has a probability outside [0, 1]", m.name));
            }
            let sum: f64 = m.categories.iter().map(|c| c.probability).sum();
            if (sum - 1.0).abs() > 1e-9 {
                return bad(format!("probabilities of `{}` sum to {sum}, not 1", m.name));
            }
        }
        let non_negative = [
            ("impact.noise_sd", self.impact.noise_sd),
            ("propensity.noise_sd", self.propensity.noise_sd),
            ("propensity.size_log_sd", self.propensity.size_log_sd),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and non-negative"));
            }
        }
        if !(self.propensity.size_median.is_finite() && self.propensity.size_median > 0.0) {
            return bad("propensity.size_median must be positive".into());
        }
        Ok(())
    }
}

/// Random stream for one replication: the master seed selects the key and
/// the replication index selects the ChaCha stream.
pub fn replication_rng(master_seed: u64, replication: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replication as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Purposive,
    Quota,
    SimpleRandom,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Purposive, Strategy::Quota, Strategy::SimpleRandom];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Purposive => "purposive",
            Strategy::Quota => "quota",
            Strategy::SimpleRandom => "simple_random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRecord {
    pub strategy: Strategy,
    pub sample_size: usize,
    pub bias: f64,
    pub max_deviation: f64,
    pub mean_deviation: f64,
    pub rejections: usize,
    pub shortfall: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub population_mean_impact: f64,
    pub strategies: Vec<StrategyRecord>,
}

impl ReplicationRecord {
    pub fn get(&self, strategy: Strategy) -> &StrategyRecord {
        self.strategies
            .iter()
            .find(|s| s.strategy == strategy)
            .expect("every replication records every strategy")
    }
}

/// Runs every strategy on one freshly drawn population.
pub fn run_replication(config: &SimConfig, replication: usize) -> Result<ReplicationRecord, SimError> {
    let mut rng = replication_rng(config.seed, replication);
    let population = generate_population(config, &mut rng)?;
    let total = config.total_target as usize;

    let purposive = run_purposive(&population, total);
    let plan = plan_for_population(&population, config.total_target, config.slack)?;
    let quota = run_quota(&population, &plan)?;
    let random = run_simple_random(&population, total, &mut rng);

    let record = |strategy, sample: &Sample, rejections, shortfall| -> Result<StrategyRecord, SimError> {
        let m = evaluate(sample, &population)?;
        Ok(StrategyRecord {
            strategy,
            sample_size: sample.len(),
            bias: m.bias,
            max_deviation: m.max_deviation,
            mean_deviation: m.mean_deviation,
            rejections,
            shortfall,
        })
    };
    Ok(ReplicationRecord {
        replication,
        population_mean_impact: population.mean_impact(),
        strategies: vec![
            record(Strategy::Purposive, &purposive, 0, total - purposive.len())?,
            record(Strategy::Quota, &quota.sample, quota.rejections, quota.shortfall)?,
            record(Strategy::SimpleRandom, &random, 0, total - random.len())?,
        ],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub mean_bias: f64,
    /// Standard deviation of the per-replication bias over √R.
    pub bias_mc_se: f64,
    pub mean_max_deviation: f64,
    pub max_max_deviation: f64,
    pub mean_mean_deviation: f64,
    pub total_rejections: usize,
    pub replications_short: usize,
}

/// Paired comparison of purposive and quota bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasComparison {
    /// Mean over replications of (purposive bias − quota bias).
    pub mean_difference: f64,
    pub difference_mc_se: f64,
    /// |mean purposive bias| − |mean quota bias|.
    pub abs_bias_reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub replications: usize,
    pub seed: u64,
    pub total_target: u32,
    pub slack: f64,
    pub strategies: Vec<StrategySummary>,
    pub comparison: BiasComparison,
    #[serde(skip)]
    pub records: Vec<ReplicationRecord>,
}

impl SimResult {
    pub fn summary(&self, strategy: Strategy) -> &StrategySummary {
        self.strategies
            .iter()
            .find(|s| s.strategy == strategy)
            .expect("every strategy is summarized")
    }

    /// Per-replication CSV: rep, strategy, bias, max_deviation, rejections,
    /// shortfall.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["rep", "strategy", "bias", "max_deviation", "rejections", "shortfall"])?;
        for rec in &self.records {
            for s in &rec.strategies {
                w.write_record([
                    rec.replication.to_string(),
                    s.strategy.name().to_owned(),
                    s.bias.to_string(),
                    s.max_deviation.to_string(),
                    s.rejections.to_string(),
                    s.shortfall.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Aggregates replication records, in replication order.
pub fn summarize(config: &SimConfig, records: Vec<ReplicationRecord>) -> SimResult {
    let strategies = Strategy::ALL
        .iter()
        .map(|&strategy| {
            let rows: Vec<&StrategyRecord> = records.iter().map(|r| r.get(strategy)).collect();
            let biases: Vec<f64> = rows.iter().map(|r| r.bias).collect();
            let (mean_bias, bias_mc_se) = mean_and_se(&biases);
            let n = rows.len() as f64;
            StrategySummary {
                strategy,
                mean_bias,
                bias_mc_se,
                mean_max_deviation: rows.iter().map(|r| r.max_deviation).sum::<f64>() / n,
                max_max_deviation: rows.iter().map(|r| r.max_deviation).fold(0.0, f64::max),
                mean_mean_deviation: rows.iter().map(|r| r.mean_deviation).sum::<f64>() / n,
                total_rejections: rows.iter().map(|r| r.rejections).sum(),
                replications_short: rows.iter().filter(|r| r.shortfall > 0).count(),
            }
        })
        .collect::<Vec<_>>();

    let diffs: Vec<f64> = records
        .iter()
        .map(|r| r.get(Strategy::Purposive).bias - r.get(Strategy::Quota).bias)
        .collect();
    let (mean_difference, difference_mc_se) = mean_and_se(&diffs);
    let abs_bias_reduction = strategies[0].mean_bias.abs() - strategies[1].mean_bias.abs();

    SimResult {
        replications: records.len(),
        seed: config.seed,
        total_target: config.total_target,
        slack: config.slack,
        strategies,
        comparison: BiasComparison {
            mean_difference,
            difference_mc_se,
            abs_bias_reduction,
        },
        records,
    }
}

/// Runs all replications, in parallel when the config allows. Each
/// replication depends only on (config, master seed, index), and records
/// are reduced in index order, so the thread count never changes the
/// result.
pub fn run_experiment(config: &SimConfig) -> Result<SimResult, SimError> {
    config.validate()?;
    let run = || -> Result<Vec<ReplicationRecord>, SimError> {
        (0..config.replications)
            .into_par_iter()
            .map(|r| run_replication(config, r))
            .collect()
    };
    let records = match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| SimError::ThreadPool(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    Ok(summarize(config, records))
}
