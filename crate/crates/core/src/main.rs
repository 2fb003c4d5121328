use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use sitequota::ledger::{CandidateSite, EventLog, LockMode, RecruitmentLedger};
use sitequota::plan::{build_plan, check_feasibility, load_plan_file, save_plan, QuotaPlan, Slack};
use sitequota::service::{serve, ServiceConfig, WithdrawalAck};
use sitequota::simulation::{run_experiment, SimConfig};
use sitequota::survey::{estimate, load_survey, EstimateOptions, EstimationConfig, PopulationEstimates, SurveyError};
use sitequota::{Error, ErrorClass};

#[derive(Parser)]
#[command(name = "sitequota", version, about = "Survey-informed quota limits for site recruitment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Weighted category shares from survey microdata.
    Estimate {
        #[arg(long)]
        survey: PathBuf,
        /// Estimation config: survey schema plus moderator specs.
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Targets and limits for a study of `--total` sites.
    Plan {
        #[arg(long)]
        estimates: PathBuf,
        #[arg(long)]
        total: u32,
        #[arg(long, default_value_t = sitequota::plan::DEFAULT_SLACK)]
        slack: f64,
        /// Per-moderator slack, as MODERATOR=DELTA. Repeatable.
        #[arg(long = "slack-override", value_parser = parse_override)]
        slack_overrides: Vec<(String, f64)>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Adjudicate a site and record the outcome.
    Admit {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        site: PathBuf,
    },
    /// Adjudicate a site without recording anything.
    Whatif {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        site: PathBuf,
    },
    /// Progress against the plan.
    Status {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Withdraw an accepted site.
    Withdraw {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        id: String,
    },
    /// Validate the event log and print the final tallies.
    Replay {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        log: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare recruitment strategies on synthetic populations.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-replication metrics as CSV.
        #[arg(long)]
        replications_csv: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn parse_override(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected MODERATOR=DELTA, got `{s}`"))?;
    let delta = value
        .parse::<f64>()
        .map_err(|e| format!("slack for `{name}`: {e}"))?;
    Ok((name.to_owned(), delta))
}

/// Failures outside the library's error types.
enum Failure {
    Lib(Error),
    Input { path: PathBuf, message: String, class: ErrorClass },
    Infeasible(String),
}

impl<E: Into<Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Lib(e.into())
    }
}

impl Failure {
    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Failure::Input {
            path: path.to_owned(),
            message: e.to_string(),
            class: ErrorClass::Io,
        }
    }

    fn invalid(path: &Path, e: impl std::fmt::Display) -> Self {
        Failure::Input {
            path: path.to_owned(),
            message: e.to_string(),
            class: ErrorClass::Validation,
        }
    }

    fn class(&self) -> ErrorClass {
        match self {
            Failure::Lib(e) => e.class(),
            Failure::Input { class, .. } => *class,
            Failure::Infeasible(_) => ErrorClass::Domain,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Lib(e) => e.to_string(),
            Failure::Input { path, message, .. } => format!("{}: {message}", path.display()),
            Failure::Infeasible(m) => m.clone(),
        }
    }
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Validation => 3,
        ErrorClass::Domain => 4,
        ErrorClass::Io => 5,
    }
}

fn class_name(class: ErrorClass) -> &'static str {
    match class {
        ErrorClass::Validation => "validation",
        ErrorClass::Domain => "domain",
        ErrorClass::Io => "io",
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Failure::invalid(path, e))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    let mut text = contents.to_owned();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Failure::io(path, e))
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn load_plan(path: &Path) -> Result<QuotaPlan, Failure> {
    let (plan, warnings) = load_plan_file(path)?;
    warn_all(&warnings);
    Ok(plan)
}

fn open_ledger(plan: &Path, log: &Path, mode: LockMode) -> Result<(RecruitmentLedger, EventLog), Failure> {
    let plan = load_plan(plan)?;
    let log = EventLog::open(log, mode)?;
    let ledger = RecruitmentLedger::replay(plan, log.read()?)?;
    Ok((ledger, log))
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Estimate { survey, schema, out } => {
            let config: EstimationConfig = read_json(&schema)?;
            config
                .schema
                .validate()
                .map_err(|e| Failure::invalid(&schema, e))?;
            let dataset = load_survey(&survey, &config.schema)?;
            let estimates = estimate(
                &dataset,
                &config.moderators,
                EstimateOptions {
                    strict: config.strict,
                },
            )?;
            warn_all(&estimates.warnings);
            write_file(&out, &serde_json::to_string_pretty(&estimates).expect("serializable"))
        }
        Command::Plan {
            estimates,
            total,
            slack,
            slack_overrides,
            out,
        } => {
            let doc: PopulationEstimates = read_json(&estimates)?;
            doc.validate().map_err(|e: SurveyError| Failure::invalid(&estimates, e))?;
            let slack = slack_overrides
                .into_iter()
                .fold(Slack::uniform(slack), |s, (m, d)| s.with_override(&m, d));
            let plan = build_plan(&doc, total, &slack)?;
            let report = check_feasibility(&plan);
            eprintln!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
            if !report.feasible {
                return Err(Failure::Infeasible("plan is infeasible; not written".into()));
            }
            write_file(&out, &save_plan(&plan))
        }
        Command::Admit { plan, log, site } => {
            let site: CandidateSite = read_json(&site)?;
            let (mut ledger, mut log) = open_ledger(&plan, &log, LockMode::Write)?;
            let (event, decision) = ledger.prepare_admit(&site, chrono::Utc::now())?;
            log.append(&event)?;
            ledger.apply(event)?;
            print_json(&decision);
            Ok(())
        }
        Command::Whatif { plan, log, site } => {
            let site: CandidateSite = read_json(&site)?;
            let (ledger, _log) = open_ledger(&plan, &log, LockMode::Read)?;
            print_json(&ledger.what_if(&site)?);
            Ok(())
        }
        Command::Status { plan, log, json } => {
            let (ledger, _log) = open_ledger(&plan, &log, LockMode::Read)?;
            let report = ledger.status();
            if json {
                print_json(&report);
            } else {
                print!("{}", report.to_table());
            }
            Ok(())
        }
        Command::Withdraw { plan, log, id } => {
            let (mut ledger, mut log) = open_ledger(&plan, &log, LockMode::Write)?;
            let event = ledger.prepare_withdraw(&id, chrono::Utc::now())?;
            let ack = WithdrawalAck {
                site_id: id,
                seq: event.seq,
                profile: event.profile.clone(),
            };
            log.append(&event)?;
            ledger.apply(event)?;
            print_json(&ack);
            Ok(())
        }
        Command::Replay { plan, log } => {
            let (ledger, _log) = open_ledger(&plan, &log, LockMode::Read)?;
            print_json(&ledger.snapshot());
            Ok(())
        }
        Command::Serve { config } => {
            let config = ServiceConfig::load(&config)?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::io(Path::new("runtime"), e))?;
            runtime.block_on(serve(&config, |addr, state| {
                warn_all(&state.warnings);
                println!("listening on http://{addr}");
                let _ = std::io::stdout().flush();
            }))?;
            Ok(())
        }
        Command::Simulate {
            config,
            out,
            replications_csv,
            threads,
        } => {
            let mut sim: SimConfig = read_json(&config)?;
            if threads.is_some() {
                sim.threads = threads;
            }
            let result = run_experiment(&sim)?;
            write_file(&out, &serde_json::to_string_pretty(&result).expect("serializable"))?;
            if let Some(path) = replications_csv {
                let file = std::fs::File::create(&path).map_err(|e| Failure::io(&path, e))?;
                result
                    .write_csv(file)
                    .map_err(|e| Failure::io(&path, e))?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let class = failure.class();
            eprintln!(
                "{}",
                serde_json::json!({ "error": class_name(class), "message": failure.message() })
            );
            ExitCode::from(exit_code(class))
        }
    }
}
