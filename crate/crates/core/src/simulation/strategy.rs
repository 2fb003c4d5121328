use chrono::{DateTime, Utc};
use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Population, SimError};
use crate::ledger::{CandidateSite, RecruitmentLedger, Verdict};
use crate::plan::{build_plan, check_feasibility, QuotaPlan, Slack};
use crate::survey::{ModeratorSpec, PopulationEstimates};

/// Indices of recruited sites, in recruitment order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub sites: Vec<usize>,
}

impl Sample {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sorted(&self) -> Vec<usize> {
        let mut s = self.sites.clone();
        s.sort_unstable();
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotaOutcome {
    pub sample: Sample,
    pub rejections: usize,
    /// Sites short of `J` when the stream ran out.
    pub shortfall: usize,
}

/// Top `total` willing sites by attractiveness.
pub fn run_purposive(population: &Population, total: usize) -> Sample {
    Sample {
        sites: population
            .recruitment_order()
            .into_iter()
            .filter(|&i| population.sites[i].agrees)
            .take(total)
            .collect(),
    }
}

/// Simple random sample of `total` sites from the whole population.
pub fn run_simple_random(population: &Population, total: usize, rng: &mut ChaCha8Rng) -> Sample {
    let total = total.min(population.len());
    Sample {
        sites: index::sample(rng, population.len(), total).into_vec(),
    }
}

/// Quota plan whose estimates are the population's realized shares.
pub fn plan_for_population(population: &Population, total: u32, delta: f64) -> Result<QuotaPlan, SimError> {
    let shares = population.shares();
    let moderators = population
        .moderator_names
        .iter()
        .zip(&population.labels)
        .zip(shares)
        .map(|((name, labels), shares)| {
            let levels: Vec<&str> = labels.iter().map(String::as_str).collect();
            (ModeratorSpec::categorical(name, name, &levels), shares)
        })
        .collect();
    let estimates = PopulationEstimates::from_shares(moderators)?;
    Ok(build_plan(&estimates, total, &Slack::uniform(delta))?)
}

pub(crate) fn candidate(population: &Population, index: usize) -> CandidateSite {
    let site = &population.sites[index];
    let mut candidate = CandidateSite::new(&index.to_string());
    for (m, &c) in site.profile.iter().enumerate() {
        candidate = candidate.level(&population.moderator_names[m], &population.labels[m][c]);
    }
    candidate
}

/// Walks the purposive ordering, offering each willing site to a fresh
/// admission ledger, until `J` sites are accepted or the stream runs out.
pub fn run_quota(population: &Population, plan: &QuotaPlan) -> Result<QuotaOutcome, SimError> {
    let report = check_feasibility(plan);
    if !report.feasible {
        return Err(SimError::InfeasiblePlan(
            report
                .moderators
                .iter()
                .filter(|m| !m.pass)
                .map(|m| format!("{}: limits sum to {} < {}", m.moderator, m.sum_of_limits, m.total_target))
                .collect::<Vec<_>>()
                .join("; "),
        ));
    }
    let total = plan.total_target as usize;
    let time = DateTime::<Utc>::UNIX_EPOCH;
    let mut ledger = RecruitmentLedger::new(plan.clone());
    let mut sites = Vec::with_capacity(total);
    let mut rejections = 0;
    for i in population.recruitment_order() {
        if sites.len() == total {
            break;
        }
        if !population.sites[i].agrees {
            continue;
        }
        match ledger.admit_at(&candidate(population, i), time)?.verdict {
            Verdict::Accepted => sites.push(i),
            Verdict::Rejected => rejections += 1,
        }
    }
    Ok(QuotaOutcome {
        shortfall: total - sites.len(),
        sample: Sample { sites },
        rejections,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    /// Mean sample impact minus mean population impact.
    pub bias: f64,
    /// |sample share − population share| per moderator and category.
    pub deviations: Vec<Vec<f64>>,
    pub max_deviation: f64,
    pub mean_deviation: f64,
}

/// Bias and composition deviation of a sample relative to its population.
pub fn evaluate(sample: &Sample, population: &Population) -> Result<SampleMetrics, SimError> {
    if sample.is_empty() {
        return Err(SimError::EmptySample);
    }
    let sites = sample.sorted();
    if let Some(&bad) = sites.iter().find(|&&i| i >= population.len()) {
        return Err(SimError::NotInPopulation(bad));
    }
    let n = sites.len() as f64;
    let sample_mean = sites.iter().map(|&i| population.sites[i].impact).sum::<f64>() / n;
    let bias = sample_mean - population.mean_impact();

    let pop_shares = population.shares();
    let deviations: Vec<Vec<f64>> = pop_shares
        .iter()
        .enumerate()
        .map(|(m, shares)| {
            let mut counts = vec![0usize; shares.len()];
            for &i in &sites {
                counts[population.sites[i].profile[m]] += 1;
            }
            counts
                .iter()
                .zip(shares)
                .map(|(&c, &p)| (c as f64 / n - p).abs())
                .collect()
        })
        .collect();
    let flat: Vec<f64> = deviations.iter().flatten().copied().collect();
    let max_deviation = flat.iter().copied().fold(0.0, f64::max);
    let mean_deviation = flat.iter().sum::<f64>() / flat.len() as f64;
    Ok(SampleMetrics {
        bias,
        deviations,
        max_deviation,
        mean_deviation,
    })
}
