use std::fmt::Write as _;
use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use matchkit_core::audit::{self, AuditCheck, AuditOptions, ProfileSpace, Rule, DEFAULT_BUDGET};
use matchkit_core::domain::{check_tree_single_peaked, is_rich, satisfies_rotation, satisfies_td, DomainPair, Verdict};
use matchkit_core::error::Error;
use matchkit_core::io;
use matchkit_core::model::{Profile, Side};
use matchkit_core::replication::oracle::{rule_existence_oracle, OracleOptions, OracleOutcome, Requirement};
use matchkit_core::replication::theorems::{verify_theorem, Claim, Status, TheoremConfig, TreeChoice};
use matchkit_core::trees::enumerate_maximal_single_peaked;
use matchkit_core::{da, par};

mod report;

use report::{emit, Format, InputDigest, RunReport};

#[derive(Parser, Debug)]
#[command(
    name = "matchkit",
    version,
    about = "Two-sided matching: deferred acceptance, stable sets, domain checks and incentive audits"
)]
struct Cli {
    /// Output format.
    #[arg(long, value_enum, global = true, default_value_t = Format::Human)]
    format: Format,
    /// Seed for every sampled sweep.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Include wall time in the report.
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Deferred acceptance from one side.
    Da {
        #[arg(long)]
        profile: String,
        #[arg(long, value_enum)]
        side: SideArg,
    },
    /// Every stable matching of a profile.
    StableSet {
        #[arg(long)]
        profile: String,
    },
    /// The preferences single-peaked on a tree.
    SpEnum {
        #[arg(long)]
        tree: String,
        #[arg(long)]
        count_only: bool,
    },
    /// Domain properties with witnesses.
    CheckDomain {
        #[arg(long)]
        domain: String,
        /// Comma-separated subset of rich, anon, td, rotation, sp.
        #[arg(long, value_delimiter = ',', default_value = "rich,anon,td,rotation,sp")]
        props: Vec<Property>,
    },
    /// Exhaustive incentive audit of a rule over a domain.
    Audit(AuditArgs),
    /// Runs the constructive and exhaustive checks for one claim or all of them.
    Replicate {
        /// A claim id, or `all`.
        #[arg(long)]
        claim: String,
        #[arg(long)]
        n: Option<usize>,
        /// `path`, `star`, `fork` or a tree file.
        #[arg(long)]
        tree: Option<String>,
        /// Samples per sampled sweep.
        #[arg(long, default_value_t = 16)]
        samples: usize,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u128,
    },
    /// Searches for a stable rule with the required property.
    SearchRule {
        #[arg(long)]
        domain: String,
        #[arg(long, value_enum)]
        require: RequireArg,
        /// Restrict the space to the profiles of a table file (its matchings are ignored).
        #[arg(long)]
        profiles: Option<String>,
        /// Add every single-report neighbour of the restricted profiles.
        #[arg(long, requires = "profiles")]
        neighbors: bool,
        /// Write the rule found as a table file.
        #[arg(long)]
        emit_table: Option<String>,
        #[arg(long, default_value_t = matchkit_core::replication::oracle::DEFAULT_PROFILE_CAP)]
        profile_cap: u128,
    },
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[arg(long)]
    domain: String,
    /// `mpda`, `wpda` or `table:FILE`.
    #[arg(long)]
    rule: String,
    #[arg(long, value_enum)]
    check: CheckArg,
    /// Largest coalition for group checks; defaults to every agent.
    #[arg(long)]
    max_coalition: Option<usize>,
    /// Stop at the first witness.
    #[arg(long, conflicts_with = "all")]
    first: bool,
    /// Report every witness (the default).
    #[arg(long)]
    all: bool,
    /// Audit only the profiles a table rule lists.
    #[arg(long)]
    table_profiles_only: bool,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u128,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SideArg {
    Men,
    Women,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Property {
    Rich,
    Anon,
    Td,
    Rotation,
    Sp,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CheckArg {
    Sp,
    Wgsp,
    Gsp,
    Nonbossy,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RequireArg {
    Sp,
    Nonbossy,
}

/// A command's outcome before rendering.
struct Outcome {
    results: Value,
    human: String,
    /// A refuted claim, a failed property or a witness was found.
    finding: bool,
    sampled: bool,
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Budget(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        if e.is_budget() {
            Failure::Budget(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

struct Inputs(Vec<InputDigest>);

impl Inputs {
    fn read(&mut self, path: &str) -> Result<String, Failure> {
        let bytes = fs::read(path).map_err(|e| Failure::Input(format!("{path}: {e}")))?;
        self.0.push(InputDigest::of(path, &bytes));
        String::from_utf8(bytes).map_err(|e| Failure::Input(format!("{path}: {e}")))
    }

    fn parse<T>(&mut self, path: &str, f: impl FnOnce(&str) -> matchkit_core::Result<T>) -> Result<T, Failure> {
        let text = self.read(path)?;
        f(&text).map_err(|e| match e {
            e if e.is_budget() => Failure::Budget(e.to_string()),
            e => Failure::Input(format!("{path}: {e}")),
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command: Vec<String> = std::env::args().skip(1).collect();
    let start = Instant::now();
    let mut inputs = Inputs(Vec::new());
    let outcome = par::with_threads(cli.jobs, || run(&cli, &mut inputs));
    match outcome {
        Ok(out) => {
            let report = RunReport {
                command,
                inputs: inputs.0,
                results: out.results,
                seed: out.sampled.then_some(cli.seed),
                wall_time_ms: cli.timing.then(|| start.elapsed().as_millis() as u64),
                human: out.human,
            };
            print!("{}", emit(&report, cli.format));
            if out.finding {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Budget(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: &Cli, inputs: &mut Inputs) -> Result<Outcome, Failure> {
    match &cli.command {
        Command::Da { profile, side } => {
            let p = inputs.parse(profile, io::parse_profile)?;
            let side = match side {
                SideArg::Men => Side::Men,
                SideArg::Women => Side::Women,
            };
            let mu = da::deferred_acceptance(&p, side);
            Ok(Outcome {
                results: json!({ "proposers": side.to_string(), "matching": mu.to_pair_strings() }),
                human: format!("{}\n", report::matching_line(&mu)),
                finding: false,
                sampled: false,
            })
        }
        Command::StableSet { profile } => {
            let p = inputs.parse(profile, io::parse_profile)?;
            let set = da::enumerate_stable(&p)?;
            let mut human = String::new();
            for mu in &set.matchings {
                let _ = writeln!(human, "{}", report::matching_line(mu));
            }
            Ok(Outcome {
                results: json!({
                    "profile_digest": set.profile_digest,
                    "count": set.len(),
                    "matchings": set.matchings.iter().map(|m| m.to_pair_strings()).collect::<Vec<_>>(),
                }),
                human,
                finding: false,
                sampled: false,
            })
        }
        Command::SpEnum { tree, count_only } => {
            let t = inputs.parse(tree, io::parse_tree)?;
            let prefs = enumerate_maximal_single_peaked(&t);
            let rankings: Vec<Vec<String>> = prefs
                .iter()
                .map(|p| p.ranking().map(|x| t.label(x).to_string()).collect())
                .collect();
            let human = if *count_only {
                format!("{}\n", prefs.len())
            } else {
                rankings.iter().map(|r| r.join(" ") + "\n").collect()
            };
            let results = if *count_only {
                json!({ "count": prefs.len() })
            } else {
                json!({ "count": prefs.len(), "preferences": rankings })
            };
            Ok(Outcome {
                results,
                human,
                finding: false,
                sampled: false,
            })
        }
        Command::CheckDomain { domain, props } => check_domain(inputs, domain, props),
        Command::Audit(args) => run_audit(inputs, args),
        Command::Replicate {
            claim,
            n,
            tree,
            samples,
            budget,
        } => replicate(inputs, cli.seed, claim, *n, tree.as_deref(), *samples, *budget),
        Command::SearchRule {
            domain,
            require,
            profiles,
            neighbors,
            emit_table,
            profile_cap,
        } => search_rule(
            inputs,
            domain,
            *require,
            profiles.as_deref(),
            *neighbors,
            emit_table.as_deref(),
            *profile_cap,
        ),
    }
}

fn verdict_json(v: &Verdict, names: &[String]) -> (bool, Value, String) {
    match v {
        Verdict::Holds => (true, Value::Null, "holds".into()),
        Verdict::Violated(w) => {
            let text = w.describe(names);
            let instances: Vec<Value> = w
                .instances
                .iter()
                .map(|i| {
                    json!({
                        "pattern": i.pattern.iter().map(|&x| names[x].clone()).collect::<Vec<_>>(),
                        "preference": i.pref.ranking().map(|x| names[x].clone()).collect::<Vec<_>>(),
                    })
                })
                .collect();
            let doc = json!({
                "kind": w.kind.to_string(),
                "elements": w.elements.iter().map(|&x| names[x].clone()).collect::<Vec<_>>(),
                "instances": instances,
            });
            (false, doc, format!("violated: {text}"))
        }
    }
}

fn check_domain(inputs: &mut Inputs, path: &str, props: &[Property]) -> Result<Outcome, Failure> {
    let parsed = inputs.parse(path, io::parse_domain)?;
    let pair = &parsed.pair;
    let n = pair.n();
    let mut results = Vec::new();
    let mut human = String::new();
    let mut finding = false;
    let mut push = |name: &str, side: Option<Side>, holds: Option<bool>, witness: Value, text: String| {
        if holds == Some(false) {
            finding = true;
        }
        let label = match side {
            Some(s) => format!("{name} ({s})"),
            None => name.to_string(),
        };
        let _ = writeln!(human, "{label}: {text}");
        results.push(json!({
            "property": name,
            "side": side.map(|s| s.to_string()),
            "verdict": match holds { Some(true) => "holds", Some(false) => "violated", None => "unavailable" },
            "witness": witness,
        }));
    };
    let mut seen = Vec::new();
    for &prop in props {
        if seen.contains(&prop) {
            continue;
        }
        seen.push(prop);
        match prop {
            Property::Rich => {
                for side in [Side::Men, Side::Women] {
                    let r = is_rich(pair.set(side));
                    let names = side.other().labels(n);
                    let missing: Vec<String> = r.missing_tops.iter().map(|&x| names[x].clone()).collect();
                    let text = if r.is_rich() {
                        "holds".to_string()
                    } else {
                        format!("violated: no preference tops {}", missing.join(", "))
                    };
                    push(
                        "rich",
                        Some(side),
                        Some(r.is_rich()),
                        json!({ "missing_tops": missing }),
                        text,
                    );
                }
            }
            Property::Anon => {
                for side in [Side::Men, Side::Women] {
                    match parsed.anonymity.iter().find(|f| f.side == side) {
                        None => push("anon", Some(side), Some(true), Value::Null, "holds".into()),
                        Some(f) => push(
                            "anon",
                            Some(side),
                            Some(false),
                            json!({ "agents": [f.first_agent, f.differing_agent] }),
                            format!(
                                "violated: {} and {} have different sets",
                                f.first_agent, f.differing_agent
                            ),
                        ),
                    }
                }
            }
            Property::Td | Property::Rotation => {
                let name = if prop == Property::Td { "td" } else { "rotation" };
                for side in [Side::Men, Side::Women] {
                    let set = pair.set(side);
                    let v = if prop == Property::Td {
                        satisfies_td(set)
                    } else {
                        satisfies_rotation(set)
                    };
                    let (holds, w, text) = verdict_json(&v, &side.other().labels(n));
                    push(name, Some(side), Some(holds), w, text);
                }
            }
            Property::Sp => {
                if pair.tree_w().is_none() && pair.tree_m().is_none() {
                    push("sp", None, None, Value::Null, "unavailable: no trees given".into());
                    continue;
                }
                let violations = check_tree_single_peaked(pair)?;
                let docs: Vec<Value> = violations
                    .iter()
                    .map(|v| json!({ "side": v.owners.to_string(), "preference": v.pref.labels(v.owners.other()) }))
                    .collect();
                let text = match violations.first() {
                    None => "holds".to_string(),
                    Some(v) => format!(
                        "violated: {} preference {} is not single-peaked ({} in total)",
                        v.owners,
                        v.pref.render_side(v.owners.other()),
                        violations.len()
                    ),
                };
                push("sp", None, Some(violations.is_empty()), json!(docs), text);
            }
        }
    }
    Ok(Outcome {
        results: json!({ "n": n, "properties": results }),
        human,
        finding,
        sampled: false,
    })
}

fn parse_rule(inputs: &mut Inputs, spec: &str) -> Result<Rule, Failure> {
    match spec {
        "mpda" => Ok(Rule::MenProposing),
        "wpda" => Ok(Rule::WomenProposing),
        s => match s.strip_prefix("table:") {
            Some(path) => Ok(Rule::Table(inputs.parse(path, io::parse_table_rule)?)),
            None => Err(Failure::Input(format!(
                "unknown rule \"{s}\" (expected mpda, wpda or table:FILE)"
            ))),
        },
    }
}

fn run_audit(inputs: &mut Inputs, args: &AuditArgs) -> Result<Outcome, Failure> {
    let pair = inputs.parse(&args.domain, |t| io::parse_domain(t)?.into_anonymous())?;
    let rule = parse_rule(inputs, &args.rule)?;
    let n = pair.n();
    let k = args.max_coalition.unwrap_or(audit::default_max_coalition(n));
    if !(1..=2 * n).contains(&k) {
        return Err(Failure::Input(format!(
            "--max-coalition must be between 1 and {}",
            2 * n
        )));
    }
    let check = match args.check {
        CheckArg::Sp => AuditCheck::StrategyProofness,
        CheckArg::Wgsp => AuditCheck::WeakGroup { max_coalition: k },
        CheckArg::Gsp => AuditCheck::StrongGroup { max_coalition: k },
        CheckArg::Nonbossy => AuditCheck::NonBossiness,
    };
    let space = match (&rule, args.table_profiles_only) {
        (Rule::Table(t), true) => {
            let listed: Vec<Profile> = t.entries().map(|(p, _)| p).collect();
            ProfileSpace::restricted(&pair, &listed)?
        }
        (_, true) => return Err(Failure::Input("--table-profiles-only needs a table rule".into())),
        _ => ProfileSpace::full(&pair),
    };
    let opts = AuditOptions {
        budget: args.budget,
        stop_at_first: args.first,
    };
    let r = audit::audit(&rule, &space, check, opts)?;
    Ok(Outcome {
        results: serde_json::to_value(report::AuditDoc::of(&r)).expect("audit docs serialize"),
        human: report::human_audit(&r),
        finding: !r.witnesses.is_empty(),
        sampled: false,
    })
}

fn tree_choice(inputs: &mut Inputs, arg: Option<&str>) -> Result<Option<TreeChoice>, Failure> {
    Ok(match arg {
        None => None,
        Some("path") => Some(TreeChoice::Path),
        Some("star") => Some(TreeChoice::Star),
        Some("fork") => Some(TreeChoice::Fork),
        Some(path) => Some(TreeChoice::Custom(inputs.parse(path, io::parse_tree)?)),
    })
}

fn replicate(
    inputs: &mut Inputs,
    seed: u64,
    claim: &str,
    n: Option<usize>,
    tree: Option<&str>,
    samples: usize,
    budget: u128,
) -> Result<Outcome, Failure> {
    let claims: Vec<Claim> = if claim == "all" {
        Claim::ALL.to_vec()
    } else {
        vec![claim.parse::<Claim>()?]
    };
    let config = TheoremConfig {
        n,
        tree: tree_choice(inputs, tree)?,
        seed,
        samples,
        audit: AuditOptions {
            budget,
            stop_at_first: false,
        },
        ..TheoremConfig::default()
    };
    let mut reports = Vec::new();
    for c in claims {
        reports.push(verify_theorem(c, &config)?);
    }
    let human = reports.iter().map(report::human_theorem).collect::<Vec<_>>().join("\n");
    Ok(Outcome {
        finding: reports.iter().any(|r| r.status == Status::Refuted),
        sampled: reports.iter().any(|r| r.seed.is_some()),
        results: serde_json::to_value(&reports).expect("theorem reports serialize"),
        human,
    })
}

fn search_rule(
    inputs: &mut Inputs,
    domain: &str,
    require: RequireArg,
    profiles: Option<&str>,
    neighbors: bool,
    emit_table: Option<&str>,
    profile_cap: u128,
) -> Result<Outcome, Failure> {
    let pair: DomainPair = inputs.parse(domain, |t| io::parse_domain(t)?.into_anonymous())?;
    let mut space = match profiles {
        None => ProfileSpace::full(&pair),
        Some(path) => {
            let table = inputs.parse(path, io::parse_table_rule)?;
            let listed: Vec<Profile> = table.entries().map(|(p, _)| p).collect();
            ProfileSpace::restricted(&pair, &listed)?
        }
    };
    if neighbors {
        space = space.with_unilateral_neighbors();
    }
    let requirement = match require {
        RequireArg::Sp => Requirement::StableStrategyProof,
        RequireArg::Nonbossy => Requirement::StableNonBossy,
    };
    let opts = OracleOptions {
        profile_cap,
        ..OracleOptions::default()
    };
    let r = rule_existence_oracle(&space, requirement, opts)?;
    let mut human = format!(
        "{} over {} profiles ({} links, {} forced): ",
        r.requirement, r.profiles, r.links, r.forced
    );
    let results = match &r.outcome {
        OracleOutcome::Exists(table) => {
            let doc = io::table_rule_to_doc(table);
            if let Some(path) = emit_table {
                fs::write(path, io::to_json(&doc)).map_err(|e| Failure::Input(format!("{path}: {e}")))?;
                let _ = writeln!(human, "rule exists, written to {path}");
            } else {
                let _ = writeln!(human, "rule exists ({} entries)", table.len());
            }
            json!({
                "requirement": r.requirement.to_string(),
                "profiles": r.profiles,
                "links": r.links,
                "forced": r.forced,
                "outcome": "exists",
                "table": doc,
            })
        }
        OracleOutcome::Impossible(trace) => {
            let _ = writeln!(
                human,
                "impossible ({} decisions, {} wipeouts{})",
                trace.decisions,
                trace.wipeouts,
                if trace.truncated { ", trace truncated" } else { "" }
            );
            json!({
                "requirement": r.requirement.to_string(),
                "profiles": r.profiles,
                "links": r.links,
                "forced": r.forced,
                "outcome": "impossible",
                "trace": trace,
            })
        }
    };
    Ok(Outcome {
        finding: !r.outcome.exists(),
        results,
        human,
        sampled: false,
    })
}
