use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use super::{ResponseModel, SimConfig, SimError};

/// One synthetic site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSite {
    /// Category index per moderator.
    pub profile: Vec<usize>,
    /// Site-level impact of the intervention.
    pub impact: f64,
    /// Recruitment attractiveness; recruiters approach sites in
    /// descending order.
    pub attractiveness: f64,
    pub size: f64,
    /// Whether the site agrees to participate when approached.
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub moderator_names: Vec<String>,
    /// Category labels per moderator.
    pub labels: Vec<Vec<String>>,
    pub sites: Vec<SyntheticSite>,
}

impl Population {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Realized share of each category, per moderator.
    pub fn shares(&self) -> Vec<Vec<f64>> {
        let n = self.sites.len() as f64;
        self.labels
            .iter()
            .enumerate()
            .map(|(m, labels)| {
                let mut counts = vec![0usize; labels.len()];
                for site in &self.sites {
                    counts[site.profile[m]] += 1;
                }
                counts.into_iter().map(|c| c as f64 / n).collect()
            })
            .collect()
    }

    pub fn mean_impact(&self) -> f64 {
        self.sites.iter().map(|s| s.impact).sum::<f64>() / self.sites.len() as f64
    }

    /// Site indices in the order recruiters approach them: attractiveness
    /// descending, ties by index.
    pub fn recruitment_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.sites.len()).collect();
        order.sort_by(|&a, &b| {
            self.sites[b]
                .attractiveness
                .total_cmp(&self.sites[a].attractiveness)
                .then(a.cmp(&b))
        });
        order
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Draws a population of `config.population_size` sites.
///
/// For each site, in index order: one category per moderator, size, impact
/// noise, attractiveness noise, and (stochastic response only) the
/// participation draw.
pub fn generate_population(config: &SimConfig, rng: &mut ChaCha8Rng) -> Result<Population, SimError> {
    config.validate()?;
    let pickers: Vec<WeightedIndex<f64>> = config
        .moderators
        .iter()
        .map(|m| {
            WeightedIndex::new(m.categories.iter().map(|c| c.probability))
                .map_err(|e| SimError::InvalidConfig(format!("moderator `{}`: {e}", m.name)))
        })
        .collect::<Result<_, _>>()?;
    let invalid = |what: &str, e: &dyn std::fmt::Display| SimError::InvalidConfig(format!("{what}: {e}"));
    let size_dist = LogNormal::new(config.propensity.size_median.ln(), config.propensity.size_log_sd)
        .map_err(|e| invalid("size distribution", &e))?;
    let impact_noise =
        Normal::new(0.0, config.impact.noise_sd).map_err(|e| invalid("impact noise", &e))?;
    let propensity_noise =
        Normal::new(0.0, config.propensity.noise_sd).map_err(|e| invalid("propensity noise", &e))?;

    let sites = (0..config.population_size)
        .map(|_| {
            let profile: Vec<usize> = pickers.iter().map(|p| p.sample(rng)).collect();
            let size = size_dist.sample(rng);
            let mut impact = config.impact.mean + impact_noise.sample(rng);
            let mut attractiveness = config.propensity.size_coefficient * size + propensity_noise.sample(rng);
            for (m, &c) in profile.iter().enumerate() {
                let cat = &config.moderators[m].categories[c];
                impact += cat.impact_effect;
                attractiveness += cat.propensity_effect;
            }
            let agrees = match config.response {
                ResponseModel::Deterministic => true,
                ResponseModel::Stochastic => rng.random_bool(logistic(attractiveness)),
            };
            SyntheticSite {
                profile,
                impact,
                attractiveness,
                size,
                agrees,
            }
        })
        .collect();

    Ok(Population {
        moderator_names: config.moderators.iter().map(|m| m.name.clone()).collect(),
        labels: config
            .moderators
            .iter()
            .map(|m| m.categories.iter().map(|c| c.label.clone()).collect())
            .collect(),
        sites,
    })
}
