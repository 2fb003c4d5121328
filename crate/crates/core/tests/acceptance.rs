//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.
//!
//! Run with `cargo test -p sitequota --test acceptance`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sitequota::ledger::{parse_events, CandidateSite, LedgerError, RecruitmentLedger, Verdict};
use sitequota::plan::{build_plan, check_feasibility, QuotaPlan, Slack};
use sitequota::simulation::{
    evaluate, generate_population, plan_for_population, replication_rng, run_experiment, run_purposive,
    run_quota, ImpactModel, Population, PropensityModel, ResponseModel, SimCategory, SimConfig, SimModerator,
    Strategy, SyntheticSite,
};
use sitequota::survey::{
    estimate, weighted_quantile_thresholds, EstimateOptions, ModeratorSpec, PopulationEstimates, Response,
    SurveyDataset, SurveyError, SurveyRecord, SurveySchema, SurveyVariable, VariableKind,
};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

// ---------------------------------------------------------------------------
// Worked examples

fn check_plan(shares: Vec<(ModeratorSpec, Vec<f64>)>, total: u32, targets: &[f64], limits: &[u32]) -> Outcome {
    let estimates = PopulationEstimates::from_shares(shares).map_err(|e| e.to_string())?;
    let plan = build_plan(&estimates, total, &Slack::uniform(0.05)).map_err(|e| e.to_string())?;
    ensure!(plan.targets() == targets, "targets {:?} != {:?}", plan.targets(), targets);
    ensure!(plan.limits() == limits, "limits {:?} != {:?}", plan.limits(), limits);
    ensure!(check_feasibility(&plan).feasible, "plan infeasible");
    Ok(format!("targets {:?}, limits {:?}", plan.targets(), plan.limits()))
}

fn example_one() -> Outcome {
    check_plan(
        vec![
            (
                ModeratorSpec::categorical("math_quartile", "math_quartile", &["Q1", "Q2", "Q3", "Q4"]),
                vec![0.25; 4],
            ),
            (ModeratorSpec::categorical("looping", "looping", &["yes", "no"]), vec![0.16, 0.84]),
        ],
        40,
        &[10.0, 10.0, 10.0, 10.0, 6.4, 33.6],
        &[12, 12, 12, 12, 8, 35],
    )
}

fn example_two() -> Outcome {
    check_plan(
        vec![
            (ModeratorSpec::categorical("esl", "esl", &["some", "none"]), vec![0.82, 0.18]),
            (ModeratorSpec::categorical("regular", "regular", &["some", "none"]), vec![0.37, 0.63]),
        ],
        80,
        &[65.6, 14.4, 29.6, 50.4],
        &[69, 18, 33, 54],
    )
}

// ---------------------------------------------------------------------------
// Ledger safety

fn random_plan(rng: &mut ChaCha8Rng) -> Arc<QuotaPlan> {
    let moderators = rng.random_range(1..=3);
    let shares = (0..moderators)
        .map(|m| {
            let k = rng.random_range(2..=4);
            let labels: Vec<String> = (0..k).map(|c| format!("c{c}")).collect();
            let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
            let mut weights: Vec<u32> = (0..k).map(|_| rng.random_range(0..=5)).collect();
            if weights.iter().all(|&w| w == 0) {
                weights[0] = 1;
            }
            let sum: u32 = weights.iter().sum();
            let name = format!("m{m}");
            (
                ModeratorSpec::categorical(&name, &name, &refs),
                weights.iter().map(|&w| f64::from(w) / f64::from(sum)).collect(),
            )
        })
        .collect();
    let estimates = PopulationEstimates::from_shares(shares).unwrap();
    let total = rng.random_range(1..=25);
    let delta = *[0.0, 0.01, 0.05, 0.1, 0.25].choose(rng).unwrap();
    Arc::new(build_plan(&estimates, total, &Slack::uniform(delta)).unwrap())
}

fn ledger_sequence(rng: &mut ChaCha8Rng, seq_index: usize) -> Result<usize, String> {
    let plan = random_plan(rng);
    ensure!(check_feasibility(&plan).feasible, "sequence {seq_index}: random plan infeasible");
    let ranges: Vec<_> = (0..plan.moderators.len()).map(|m| plan.moderator_range(m)).collect();
    let mut ledger = RecruitmentLedger::new(plan.clone());

    // Independent bookkeeping.
    let mut accepted: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut ever_accepted: BTreeSet<String> = BTreeSet::new();
    let mut proposed: Vec<String> = Vec::new();
    let mut next_id = 0;
    let steps = rng.random_range(1..=60);

    let counts = |accepted: &BTreeMap<String, Vec<usize>>| {
        let mut t = vec![0u32; plan.categories.len()];
        for idx in accepted.values() {
            for &i in idx {
                t[i] += 1;
            }
        }
        t
    };

    for step in 0..steps {
        let ctx = |msg: String| format!("sequence {seq_index} step {step}: {msg}");
        let before = ledger.tallies().to_vec();
        if rng.random_bool(0.75) {
            let id = if !proposed.is_empty() && rng.random_bool(0.1) {
                proposed.choose(rng).unwrap().clone()
            } else {
                next_id += 1;
                format!("site{next_id}")
            };
            let indices: Vec<usize> = ranges.iter().map(|r| rng.random_range(r.clone())).collect();
            let mut site = CandidateSite::new(&id);
            for &i in &indices {
                site = site.level(&plan.categories[i].moderator, &plan.categories[i].label);
            }
            proposed.push(id.clone());
            let result = ledger.admit(&site);
            if ever_accepted.contains(&id) {
                ensure!(
                    matches!(result, Err(LedgerError::DuplicateSite(_))),
                    "{}",
                    ctx(format!("re-proposal of {id} not refused: {result:?}"))
                );
                ensure!(ledger.tallies() == before, "{}", ctx("refusal changed tallies".into()));
                continue;
            }
            let decision = result.map_err(|e| ctx(e.to_string()))?;
            let fits = indices.iter().all(|&i| before[i] < plan.categories[i].limit);
            let room = (accepted.len() as u32) < plan.total_target;
            let expected = if fits && room {
                Verdict::Accepted
            } else {
                Verdict::Rejected
            };
            ensure!(decision.verdict == expected, "{}", ctx(format!("verdict {:?} != oracle {expected:?}", decision.verdict)));
            let mut want = before.clone();
            if expected == Verdict::Accepted {
                for &i in &indices {
                    want[i] += 1;
                }
                accepted.insert(id.clone(), indices.clone());
                ever_accepted.insert(id);
                let changed = want.iter().zip(&before).filter(|(a, b)| a != b).count();
                ensure!(changed == plan.moderators.len(), "{}", ctx("accept did not touch exactly m tallies".into()));
            }
            ensure!(ledger.tallies() == want, "{}", ctx(format!("tallies {:?} != {want:?}", ledger.tallies())));
            let after: Vec<u32> = decision.tallies_after.iter().map(|t| t.tally).collect();
            ensure!(after == want, "{}", ctx("decision tallies_after disagree".into()));
        } else if let Some(id) = accepted.keys().nth(rng.random_range(0..accepted.len().max(1))).cloned() {
            ledger.withdraw(&id).map_err(|e| ctx(e.to_string()))?;
            let indices = accepted.remove(&id).unwrap();
            let mut want = before.clone();
            for &i in &indices {
                want[i] -= 1;
            }
            ensure!(ledger.tallies() == want, "{}", ctx("withdrawal did not free exactly m tallies".into()));
        } else {
            ensure!(
                matches!(ledger.withdraw("nobody"), Err(LedgerError::UnknownSite(_))),
                "{}",
                ctx("withdrawal of unknown site accepted".into())
            );
        }
        for (i, c) in plan.categories.iter().enumerate() {
            ensure!(ledger.tallies()[i] <= c.limit, "{}", ctx(format!("T > L at {}", c.category_ref())));
        }
        ensure!(ledger.tallies() == counts(&accepted), "{}", ctx("tallies differ from recount".into()));
        ensure!(ledger.accepted_count() as u32 <= plan.total_target, "{}", ctx("more than J accepted".into()));
    }

    let mut log = Vec::new();
    for event in ledger.events() {
        serde_json::to_writer(&mut log, event).unwrap();
        log.push(b'\n');
    }
    let events = parse_events(log.as_slice()).map_err(|e| e.to_string())?;
    let replayed = RecruitmentLedger::replay(plan, events).map_err(|e| format!("sequence {seq_index}: {e}"))?;
    ensure!(replayed == ledger, "sequence {seq_index}: replay differs from live state");
    ensure!(
        serde_json::to_string(&replayed.snapshot()).unwrap() == serde_json::to_string(&ledger.snapshot()).unwrap(),
        "sequence {seq_index}: snapshot serialization differs"
    );
    Ok(ledger.events().len())
}

fn ledger_safety() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20_190_501);
    let mut events = 0;
    for i in 0..10_000 {
        events += ledger_sequence(&mut rng, i)?;
    }
    Ok(format!("10000 sequences, {events} events, all replays identical"))
}

// ---------------------------------------------------------------------------
// Estimator oracle

/// Weights are multiples of 1/8, so every partial sum is exact in f64
/// whatever the summation order.
fn random_dataset(rng: &mut ChaCha8Rng) -> SurveyDataset {
    let n = rng.random_range(1..=50);
    let levels = ["a", "b", "c"];
    let distinct = rng.random_range(1..=12);
    let records = (0..n)
        .map(|i| {
            let mut values = BTreeMap::new();
            let level = if rng.random_bool(0.1) {
                Response::Missing
            } else {
                Response::Level(levels.choose(rng).unwrap().to_string())
            };
            values.insert("cat".to_owned(), level);
            let x = if rng.random_bool(0.1) {
                Response::Missing
            } else {
                Response::Number(f64::from(rng.random_range(0..distinct)) * 2.5 - 4.0)
            };
            values.insert("x".to_owned(), x);
            SurveyRecord {
                id: i.to_string(),
                weight: f64::from(rng.random_range(1..=80)) / 8.0,
                values,
            }
        })
        .collect();
    let schema = SurveySchema {
        weight_column: "w".into(),
        id_column: None,
        variables: vec![
            SurveyVariable {
                name: "cat".into(),
                kind: VariableKind::Categorical,
            },
            SurveyVariable {
                name: "x".into(),
                kind: VariableKind::Continuous,
            },
        ],
        eligibility_filter: None,
    };
    SurveyDataset::from_records(schema, records)
}

#[derive(Debug, PartialEq)]
enum OracleQuantiles {
    Thresholds(Vec<f64>),
    TooFewRecords,
    TooFewDistinct,
}

/// Lower weighted quantiles by a linear scan over the weighted ECDF, in
/// integer units of 1/8.
fn oracle_thresholds(ds: &SurveyDataset, k: usize) -> OracleQuantiles {
    let points: Vec<(f64, u64)> = ds
        .records
        .iter()
        .filter_map(|r| r.value("x").as_number().map(|v| (v, (r.weight * 8.0) as u64)))
        .collect();
    if points.len() < k {
        return OracleQuantiles::TooFewRecords;
    }
    let mut values: Vec<f64> = points.iter().map(|p| p.0).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    if values.len() < k {
        return OracleQuantiles::TooFewDistinct;
    }
    let total: u64 = points.iter().map(|p| p.1).sum();
    let mut cuts: Vec<f64> = Vec::new();
    for q in 1..k as u64 {
        // Smallest v with k × cumweight(v) ≥ q × W.
        let cut = values
            .iter()
            .copied()
            .find(|&v| {
                let cum: u64 = points.iter().filter(|p| p.0 <= v).map(|p| p.1).sum();
                cum * k as u64 >= q * total
            })
            .unwrap();
        if cut > values[0] && cuts.last().is_none_or(|&last| cut > last) {
            cuts.push(cut);
        }
    }
    if cuts.is_empty() {
        OracleQuantiles::TooFewDistinct
    } else {
        OracleQuantiles::Thresholds(cuts)
    }
}

/// Weighted shares by direct summation; `category` maps a response to a
/// category index or `None` for missing.
fn oracle_shares(ds: &SurveyDataset, k: usize, category: impl Fn(&SurveyRecord) -> Option<usize>) -> Option<Vec<f64>> {
    let mut mass = vec![0.0; k];
    let mut total = 0.0;
    for r in &ds.records {
        if let Some(c) = category(r) {
            mass[c] += r.weight;
            total += r.weight;
        }
    }
    (total > 0.0).then(|| mass.iter().map(|m| m / total).collect())
}

fn library_thresholds(ds: &SurveyDataset, k: usize) -> OracleQuantiles {
    match weighted_quantile_thresholds(ds, "x", k) {
        Ok(t) => OracleQuantiles::Thresholds(t.values),
        Err(SurveyError::TooFewRecords { .. }) => OracleQuantiles::TooFewRecords,
        Err(SurveyError::TooFewDistinct { .. }) => OracleQuantiles::TooFewDistinct,
        Err(e) => panic!("unexpected error {e}"),
    }
}

fn scaled(ds: &SurveyDataset, factor: f64) -> SurveyDataset {
    let mut out = ds.clone();
    for r in &mut out.records {
        r.weight *= factor;
    }
    out
}

fn estimator_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7_2019);
    let options = EstimateOptions { strict: true };
    let cat_spec = ModeratorSpec::categorical("cat", "cat", &["a", "b", "c"]);
    let (mut threshold_sets, mut share_sets, mut errors) = (0, 0, 0);
    for d in 0..1000 {
        let ds = random_dataset(&mut rng);
        let k = rng.random_range(2..=4);

        let expected = oracle_thresholds(&ds, k);
        let got = library_thresholds(&ds, k);
        ensure!(got == expected, "dataset {d}, k={k}: thresholds {got:?} != oracle {expected:?}");

        let power = 2f64.powi(rng.random_range(-6..=6));
        let odd = rng.random_range(0.1..10.0);
        for factor in [power, odd] {
            let again = library_thresholds(&scaled(&ds, factor), k);
            ensure!(again == got, "dataset {d}: thresholds not invariant to weights × {factor}");
        }

        let oracle_cat = oracle_shares(&ds, 3, |r| match r.value("cat") {
            Response::Level(l) => Some(["a", "b", "c"].iter().position(|x| x == l).unwrap()),
            _ => None,
        });
        let mut specs = vec![cat_spec.clone()];
        let mut oracle = vec![oracle_cat];
        if let OracleQuantiles::Thresholds(cuts) = &expected {
            specs.push(ModeratorSpec::with_thresholds("x", "x", cuts.clone()));
            oracle.push(oracle_shares(&ds, cuts.len() + 1, |r| {
                r.value("x").as_number().map(|v| cuts.iter().filter(|&&t| t <= v).count())
            }));
            threshold_sets += 1;
        }
        for (spec, oracle) in specs.iter().zip(&oracle) {
            let got = estimate(&ds, std::slice::from_ref(spec), options);
            match (got, oracle) {
                (Ok(est), Some(want)) => {
                    let shares = est.moderators[0].shares();
                    ensure!(&shares == want, "dataset {d} `{}`: shares {shares:?} != oracle {want:?}", spec.name);
                    let exact = estimate(&scaled(&ds, power), std::slice::from_ref(spec), options).unwrap();
                    ensure!(
                        exact.moderators[0].shares() == shares,
                        "dataset {d}: shares change under weights × {power}"
                    );
                    let approx = estimate(&scaled(&ds, odd), std::slice::from_ref(spec), options).unwrap();
                    for (a, b) in approx.moderators[0].shares().iter().zip(&shares) {
                        ensure!((a - b).abs() <= 1e-12, "dataset {d}: shares drift under weights × {odd}");
                    }
                    share_sets += 1;
                }
                (Err(SurveyError::NoResponses(_)), None) => errors += 1,
                (got, want) => return Err(format!("dataset {d} `{}`: {got:?} vs oracle {want:?}", spec.name)),
            }
        }
    }
    Ok(format!(
        "1000 datasets: {share_sets} share vectors and {threshold_sets} threshold sets exact, {errors} empty moderators agreed"
    ))
}

// ---------------------------------------------------------------------------
// Simulation

fn confounded_config() -> SimConfig {
    let cat = |label: &str, probability, impact_effect, propensity_effect| SimCategory {
        label: label.into(),
        probability,
        impact_effect,
        propensity_effect,
    };
    SimConfig {
        population_size: 2000,
        moderators: vec![
            SimModerator {
                name: "urban".into(),
                categories: vec![cat("yes", 0.3, 1.0, 1.5), cat("no", 0.7, 0.0, 0.0)],
            },
            SimModerator {
                name: "disadvantaged".into(),
                categories: vec![cat("yes", 0.4, 0.5, 1.0), cat("no", 0.6, 0.0, 0.0)],
            },
        ],
        impact: ImpactModel {
            mean: 0.0,
            noise_sd: 0.5,
        },
        propensity: PropensityModel {
            size_coefficient: 0.5,
            size_median: 1.0,
            size_log_sd: 0.5,
            noise_sd: 0.5,
        },
        total_target: 40,
        slack: 0.05,
        replications: 500,
        seed: 20_190_501,
        response: ResponseModel::Deterministic,
        threads: None,
    }
}

fn simulation_bias_ordering() -> Outcome {
    let config = confounded_config();
    let result = run_experiment(&config).map_err(|e| e.to_string())?;
    let p = result.summary(Strategy::Purposive);
    let q = result.summary(Strategy::Quota);
    let cmp = &result.comparison;
    ensure!(
        p.mean_bias.abs() > 4.0 * p.bias_mc_se,
        "purposive bias {} not > 4 SE ({})",
        p.mean_bias,
        p.bias_mc_se
    );
    ensure!(
        q.mean_bias.abs() < p.mean_bias.abs(),
        "quota |bias| {} not below purposive {}",
        q.mean_bias.abs(),
        p.mean_bias.abs()
    );
    ensure!(
        cmp.abs_bias_reduction > 2.0 * cmp.difference_mc_se,
        "gap {} not > 2 SE of difference ({})",
        cmp.abs_bias_reduction,
        cmp.difference_mc_se
    );
    let bound = config.slack + 1.0 / f64::from(config.total_target);
    let mut reached = 0;
    for rec in &result.records {
        let quota = rec.get(Strategy::Quota);
        if quota.shortfall == 0 {
            reached += 1;
            ensure!(
                quota.max_deviation <= bound + 1e-12,
                "replication {}: max deviation {} > {bound}",
                rec.replication,
                quota.max_deviation
            );
        }
    }
    Ok(format!(
        "purposive bias {:.4} (SE {:.4}), quota bias {:.4} (SE {:.4}), gap {:.4} (SE of difference {:.4}); {reached}/{} reached J within δ+1/J",
        p.mean_bias, p.bias_mc_se, q.mean_bias, q.bias_mc_se, cmp.abs_bias_reduction, cmp.difference_mc_se,
        result.replications
    ))
}

// ---------------------------------------------------------------------------
// Small-instance oracle

/// Site `a` is approached before site `b`.
fn before(pop: &Population, a: usize, b: usize) -> bool {
    let (sa, sb) = (pop.sites[a].attractiveness, pop.sites[b].attractiveness);
    sa > sb || (sa == sb && a < b)
}

fn oracle_mean(pop: &Population, set: &[usize]) -> f64 {
    let mut sorted = set.to_vec();
    sorted.sort_unstable();
    let sample = sorted.iter().map(|&i| pop.sites[i].impact).sum::<f64>() / sorted.len() as f64;
    sample - pop.sites.iter().map(|s| s.impact).sum::<f64>() / pop.len() as f64
}

fn members(mask: u32, n: usize) -> Vec<usize> {
    (0..n).filter(|i| mask & (1 << i) != 0).collect()
}

fn check_instance(pop: &Population, plan: &QuotaPlan, tag: &str) -> Result<(), String> {
    let n = pop.len();
    let j = plan.total_target as usize;

    // Purposive: the unique J-subset whose members all precede all
    // non-members.
    let dominant: Vec<u32> = (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == j)
        .filter(|&m| {
            let inside = members(m, n);
            let outside = members(!m & ((1 << n) - 1), n);
            inside.iter().all(|&a| outside.iter().all(|&b| before(pop, a, b)))
        })
        .collect();
    ensure!(dominant.len() == 1, "{tag}: {} dominant subsets", dominant.len());
    let want = members(dominant[0], n);
    let got = run_purposive(pop, j);
    ensure!(got.sorted() == want, "{tag}: purposive {:?} != oracle {want:?}", got.sorted());
    let m = evaluate(&got, pop).map_err(|e| e.to_string())?;
    ensure!(m.bias == oracle_mean(pop, &want), "{tag}: purposive bias differs");

    // Quota: among subsets that respect every limit and J, the greatest in
    // approach order (lexicographic on membership of the first-approached
    // site, then the second, ...).
    let rank: Vec<usize> = (0..n).map(|i| (0..n).filter(|&o| before(pop, o, i)).count()).collect();
    let mut by_rank = vec![0; n];
    for (i, &r) in rank.iter().enumerate() {
        by_rank[r] = i;
    }
    let category = |i: usize, m: usize| {
        let range = plan.moderator_range(m);
        range.start + pop.sites[i].profile[m]
    };
    let respects = |set: &[usize]| {
        if set.len() > j {
            return false;
        }
        let mut t = vec![0u32; plan.categories.len()];
        for &i in set {
            for m in 0..plan.moderators.len() {
                t[category(i, m)] += 1;
            }
        }
        t.iter().zip(&plan.categories).all(|(t, c)| *t <= c.limit)
    };
    let key = |mask: u32| -> Vec<bool> { by_rank.iter().map(|&i| mask & (1 << i) != 0).collect() };
    let best = (0u32..1 << n)
        .filter(|&m| respects(&members(m, n)))
        .max_by(|&a, &b| key(a).cmp(&key(b)))
        .unwrap();
    let want = members(best, n);
    let outcome = run_quota(pop, plan).map_err(|e| format!("{tag}: {e}"))?;
    ensure!(
        outcome.sample.sorted() == want,
        "{tag}: quota {:?} != oracle {want:?}",
        outcome.sample.sorted()
    );
    ensure!(outcome.shortfall == j - want.len(), "{tag}: shortfall differs");
    // Rejections: sites approached before the J-th acceptance (or all of
    // them) that are not in the sample.
    let last = if want.len() == j {
        want.iter().map(|&i| rank[i]).max().unwrap()
    } else {
        n - 1
    };
    let rejected = (0..=last).filter(|&r| best & (1 << by_rank[r]) == 0).count();
    ensure!(outcome.rejections == rejected, "{tag}: {} rejections != oracle {rejected}", outcome.rejections);
    if !want.is_empty() {
        let m = evaluate(&outcome.sample, pop).map_err(|e| e.to_string())?;
        ensure!(m.bias == oracle_mean(pop, &want), "{tag}: quota bias differs");
    }
    Ok(())
}

fn deterministic_config(n: usize, j: u32, rng: &mut ChaCha8Rng) -> SimConfig {
    let cat = |label: &str, p: f64, rng: &mut ChaCha8Rng| SimCategory {
        label: label.into(),
        probability: p,
        impact_effect: f64::from(rng.random_range(-2..=4)),
        propensity_effect: f64::from(rng.random_range(0..=3)),
    };
    SimConfig {
        population_size: n,
        moderators: vec![
            SimModerator {
                name: "a".into(),
                categories: vec![cat("x", 0.5, rng), cat("y", 0.5, rng)],
            },
            SimModerator {
                name: "b".into(),
                categories: vec![cat("p", 0.3, rng), cat("q", 0.3, rng), cat("r", 0.4, rng)],
            },
        ],
        impact: ImpactModel {
            mean: 1.0,
            noise_sd: 0.0,
        },
        propensity: PropensityModel {
            size_coefficient: 0.0,
            size_median: 1.0,
            size_log_sd: 0.0,
            noise_sd: 0.0,
        },
        total_target: j,
        slack: 0.05,
        replications: 1,
        seed: rng.random(),
        response: ResponseModel::Deterministic,
        threads: None,
    }
}

/// Random integer attractiveness (with ties) and impacts.
fn hand_population(n: usize, rng: &mut ChaCha8Rng) -> Population {
    Population {
        moderator_names: vec!["a".into(), "b".into()],
        labels: vec![vec!["x".into(), "y".into()], vec!["p".into(), "q".into(), "r".into()]],
        sites: (0..n)
            .map(|_| SyntheticSite {
                profile: vec![rng.random_range(0..2), rng.random_range(0..3)],
                impact: f64::from(rng.random_range(-5..=5)),
                attractiveness: f64::from(rng.random_range(0..=4)),
                size: 1.0,
                agrees: true,
            })
            .collect(),
    }
}

fn small_instance_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut instances = 0;
    for n in 1..=12usize {
        for j in 1..=n as u32 {
            for variant in 0..2 {
                let pop = if variant == 0 {
                    let config = deterministic_config(n, j, &mut rng);
                    generate_population(&config, &mut replication_rng(config.seed, 0)).map_err(|e| e.to_string())?
                } else {
                    hand_population(n, &mut rng)
                };
                let delta = *[0.0, 0.05, 0.2].choose(&mut rng).unwrap();
                let mut plan = plan_for_population(&pop, j, delta).map_err(|e| e.to_string())?;
                let tag = format!("N={n} J={j} variant {variant}");
                check_instance(&pop, &plan, &tag)?;
                // Looser, uneven limits.
                for c in &mut plan.categories {
                    c.limit += rng.random_range(0..=2);
                }
                check_instance(&pop, &plan, &format!("{tag} (loosened)"))?;
                instances += 2;
            }
        }
    }
    Ok(format!("{instances} instances, N ≤ 12, all J ≤ N: purposive and quota match enumeration"))
}

// ---------------------------------------------------------------------------
// Service durability

fn service_durability() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    common::durability_session(dir.path())?;
    Ok("3 admits, 1 rejection, 1 withdrawal, SIGKILL, restart: /status and /events identical; /whatif left /events unchanged".into())
}

// ---------------------------------------------------------------------------

struct Criterion {
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion {
            name: "Example-1 golden",
            limit: Duration::from_secs(1),
            run: example_one,
        },
        Criterion {
            name: "Example-2 golden",
            limit: Duration::from_secs(1),
            run: example_two,
        },
        Criterion {
            name: "Ledger safety property",
            limit: Duration::from_secs(30),
            run: ledger_safety,
        },
        Criterion {
            name: "Estimator oracle equivalence",
            limit: Duration::from_secs(10),
            run: estimator_oracle,
        },
        Criterion {
            name: "Simulation bias ordering",
            limit: Duration::from_secs(60),
            run: simulation_bias_ordering,
        },
        Criterion {
            name: "Small-instance simulator oracle",
            limit: Duration::from_secs(5),
            run: small_instance_oracle,
        },
        Criterion {
            name: "Service durability",
            limit: Duration::from_secs(10),
            run: service_durability,
        },
    ];
    let total = criteria.len();
    let mut failed = 0;
    for (i, c) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(c.run).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > c.limit => Err(format!("took {elapsed:.2?}, limit {:?} ({detail})", c.limit)),
            other => other,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(e) => {
                failed += 1;
                ("FAIL", e)
            }
        };
        println!(
            "{tag} [{}/{total}] {} ({:.2?} of {:?}): {detail}",
            i + 1,
            c.name,
            elapsed,
            c.limit
        );
    }
    println!("acceptance: {} passed, {failed} failed", total - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
