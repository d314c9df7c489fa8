//! `rotor`: command-line driver for rotor-router experiments.
//!
//! Every subcommand prints a JSON report (or writes it with `--output`).
//! Exit codes: 0 ok, 1 a checked property failed, 2 bad input, 3 word not
//! realizable.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use rotor_core::acceptance::run_all;
use rotor_core::escape::{
    first_violation, is_escape_branch, is_escape_tree, simulate, synthesize_branch,
    synthesize_tree, BinaryWord, ConfigDescriptor, EscapeError,
};
use rotor_core::graph::{DirectedMultigraph, GraphError, GraphFile, RotorConfiguration};
use rotor_core::group::{order_of_generator, verify_isomorphism, GroupError};
use rotor_core::tree::{
    aggregate, aggregate_modified, alternation_experiment, ball_size, build_tree,
    escape_bits, exit_measure_experiment, hitting_probabilities, modified_ball_count,
    random_acyclic_wired, recurrence_experiment, root_order, run_chips_infinite, uniform_rotors,
    Arena, LazyTreeConfig, TreeError, TreeSpec, TreeVariant, ROOT,
};
use rotor_core::walk::{route_to_sink, WalkError};

#[derive(Parser)]
#[command(name = "rotor", version, about = "Rotor-router walks, aggregation and escape sequences")]
struct Cli {
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rotor-router aggregation on the infinite d-regular tree.
    Aggregate(AggregateArgs),
    /// Rotor-router group versus sandpile group on a graph file or wired tree.
    Group(GroupArgs),
    /// Escape-sequence checks, synthesis and simulation.
    #[command(subcommand)]
    Escape(EscapeCommand),
    /// Route (a^n-1)/(a-1) chips from the root of the finite tree to its leaves.
    ExitMeasure(ExitMeasureArgs),
    /// Exact exit distribution of random walk from the root of the finite tree.
    Hitting(TreeArgs),
    /// 2^n-1 chips on the ternary branch Y_n with every rotor in direction 1.
    Alternation(HeightArgs),
    /// n-1 chips on the branch Y_n with every rotor in direction d-1.
    Recurrence(TreeArgs),
    /// Route one chip to the sink of a graph file.
    Walk(WalkArgs),
    /// Run the whole acceptance suite and print one line per criterion.
    VerifyAll,
}

#[derive(Args)]
struct AggregateArgs {
    /// Tree degree; taken from the config file when one is given.
    #[arg(long)]
    d: Option<u8>,
    /// Number of chips.
    #[arg(long, conflicts_with = "radius", required_unless_present = "radius")]
    chips: Option<u64>,
    /// Run exactly b_ρ chips (c_ρ with --modified).
    #[arg(long)]
    radius: Option<usize>,
    /// LazyTreeConfig JSON file; defaults to every rotor in direction 1.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also stop chips that return to the origin.
    #[arg(long)]
    modified: bool,
    /// Write a DOT snapshot of the materialized region.
    #[arg(long)]
    dot: Option<PathBuf>,
}

#[derive(Args)]
struct GroupArgs {
    /// Graph JSON file.
    #[arg(required_unless_present = "wired", conflicts_with = "wired")]
    graph: Option<PathBuf>,
    /// Wired tree with degree d and height n.
    #[arg(long, num_args = 2, value_names = ["D", "N"])]
    wired: Option<Vec<usize>>,
}

#[derive(Args)]
struct ArenaFlags {
    /// Single principal branch.
    #[arg(long, conflicts_with = "tree")]
    branch: bool,
    /// Whole ternary tree (the default).
    #[arg(long)]
    tree: bool,
}

impl ArenaFlags {
    fn arena(&self) -> Arena {
        if self.branch {
            Arena::Branch
        } else {
            Arena::FullTree
        }
    }
}

#[derive(Subcommand)]
enum EscapeCommand {
    /// Decide whether a word is an escape sequence.
    Check {
        word: String,
        #[command(flatten)]
        arena: ArenaFlags,
    },
    /// Build a configuration realizing a word and write it as a LazyTreeConfig.
    Synthesize {
        word: String,
        #[command(flatten)]
        arena: ArenaFlags,
        /// Where to write the configuration.
        #[arg(long)]
        config_out: Option<PathBuf>,
    },
    /// Run chips from the origin and print the escape word.
    Simulate {
        /// LazyTreeConfig or descriptor JSON file.
        #[arg(long)]
        config: PathBuf,
        /// Number of chips.
        #[arg(long)]
        m: u64,
        #[command(flatten)]
        arena: ArenaFlags,
        /// Write a DOT snapshot of the materialized region.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TreeArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    n: usize,
}

#[derive(Args)]
struct HeightArgs {
    #[arg(long)]
    n: usize,
}

#[derive(Args)]
struct ExitMeasureArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    n: usize,
    /// Seed for a random acyclic starting configuration.
    #[arg(long, default_value_t = 0, conflicts_with = "rotors")]
    seed: u64,
    /// Starting rotors on the wired tree as `{name: index}` JSON.
    #[arg(long)]
    rotors: Option<PathBuf>,
    /// Write the step trace as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct WalkArgs {
    /// Graph JSON file.
    graph: PathBuf,
    /// Vertex the chip starts at.
    #[arg(long)]
    start: String,
    /// Starting rotors as `{name: index}` JSON; defaults to all zero.
    #[arg(long)]
    rotors: Option<PathBuf>,
    /// Write the step trace as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Input(String),
    Failure(String),
    NotRealizable(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Failure(_) => 1,
            CliError::Input(_) => 2,
            CliError::NotRealizable(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Failure(m) | CliError::NotRealizable(m) => m,
        }
    }
}

impl From<TreeError> for CliError {
    fn from(e: TreeError) -> Self {
        match e {
            TreeError::StepBudgetExceeded(_) | TreeError::Walk(WalkError::StepBudgetExceeded(_)) => {
                CliError::Failure(e.to_string())
            }
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<EscapeError> for CliError {
    fn from(e: EscapeError) -> Self {
        match e {
            EscapeError::NotRealizable(_) => CliError::NotRealizable(e.to_string()),
            EscapeError::Tree(t) => t.into(),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<WalkError> for CliError {
    fn from(e: WalkError) -> Self {
        match e {
            WalkError::StepBudgetExceeded(_) => CliError::Failure(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<GroupError> for CliError {
    fn from(e: GroupError) -> Self {
        match e {
            GroupError::Graph(g) => g.into(),
            GroupError::Walk(w) => w.into(),
            _ => CliError::Failure(e.to_string()),
        }
    }
}

/// A finished command: the JSON report, extra files to write, and whether
/// every checked property held.
struct Report {
    body: Value,
    files: Vec<(PathBuf, String)>,
    ok: bool,
}

impl Report {
    fn new(body: impl Serialize, ok: bool) -> Self {
        Report {
            body: serde_json::to_value(body).expect("reports serialize"),
            files: Vec::new(),
            ok,
        }
    }

    fn with_file(mut self, path: Option<&PathBuf>, contents: impl FnOnce() -> String) -> Self {
        if let Some(p) = path {
            self.files.push((p.clone(), contents()));
        }
        self
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read(path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_graph(path: &Path) -> Result<DirectedMultigraph, CliError> {
    let file: GraphFile = parse_json(path)?;
    Ok(DirectedMultigraph::from_file(&file)?)
}

fn load_rotors(g: &DirectedMultigraph, path: &Path) -> Result<RotorConfiguration, CliError> {
    let named: BTreeMap<String, usize> = parse_json(path)?;
    Ok(RotorConfiguration::from_named(g, &named)?)
}

fn load_config(path: &Path) -> Result<LazyTreeConfig, CliError> {
    LazyTreeConfig::from_json(&read(path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn parse_word(word: &str) -> Result<BinaryWord, CliError> {
    word.parse::<BinaryWord>().map_err(|e| CliError::Input(e.to_string()))
}

fn arena_name(arena: Arena) -> &'static str {
    match arena {
        Arena::FullTree => "tree",
        Arena::Branch => "branch",
    }
}

fn cmd_aggregate(args: &AggregateArgs) -> Result<Report, CliError> {
    let config = match &args.config {
        Some(path) => {
            let c = load_config(path)?;
            if let Some(d) = args.d.filter(|&d| d != c.degree()) {
                return Err(CliError::Input(format!(
                    "--d {d} disagrees with config degree {}",
                    c.degree()
                )));
            }
            c
        }
        None => LazyTreeConfig::uniform(args.d.unwrap_or(3), 1)?,
    };
    let d = config.degree() as usize;
    let chips = match (args.chips, args.radius) {
        (Some(c), _) => c,
        (None, Some(rho)) if args.modified => modified_ball_count(d, rho),
        (None, Some(rho)) => ball_size(d, rho),
        (None, None) => unreachable!("clap requires one of --chips and --radius"),
    };
    let (state, body, ok) = if args.modified {
        let run = aggregate_modified(&config, chips)?;
        let ok = run.holds();
        let body = json!({
            "d": d,
            "modified": true,
            "chips": chips,
            "cluster_size": run.state.occupied_count(),
            "max_depth": run.state.max_depth(),
            "balls": run.ball_checks,
            "stops": run.stops.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
            "verdict": ok,
        });
        (run.state, body, ok)
    } else {
        let run = aggregate(&config, chips)?;
        let ok = run.holds();
        let body = json!({
            "d": d,
            "modified": false,
            "chips": chips,
            "cluster_size": run.state.occupied_count(),
            "max_depth": run.state.max_depth(),
            "balls": run.ball_checks,
            "inner_radius": run.state.inner_radius(),
            "sandwich_ok": run.sandwich_ok,
            "verdict": ok,
        });
        (run.state, body, ok)
    };
    Ok(Report::new(body, ok).with_file(args.dot.as_ref(), || state.to_dot()))
}

fn cmd_group(args: &GroupArgs) -> Result<Report, CliError> {
    let (g, wired) = match (&args.graph, &args.wired) {
        (Some(path), _) => (load_graph(path)?, None),
        (None, Some(dn)) => {
            let (d, n) = (dn[0], dn[1]);
            (build_tree(TreeSpec::new(d, n, TreeVariant::Wired))?, Some((d, n)))
        }
        (None, None) => unreachable!("clap requires a graph or --wired"),
    };
    let report = verify_isomorphism(&g)?;
    let mut ok = report.all_ok();
    let mut body = serde_json::to_value(&report).expect("report serializes");
    if let Some((d, n)) = wired {
        let root = g.vertex(ROOT).expect("wired tree has a root");
        let order = order_of_generator(&g, root, &uniform_rotors(&g, d, d))?;
        let expected = root_order(d, n);
        ok &= order == expected;
        body["root_order"] = json!(order);
        body["expected_root_order"] = json!(expected);
    }
    body["verdict"] = json!(ok);
    Ok(Report::new(body, ok))
}

fn cmd_escape(cmd: &EscapeCommand) -> Result<Report, CliError> {
    match cmd {
        EscapeCommand::Check { word, arena } => {
            let a = parse_word(word)?;
            let body = match arena.arena() {
                Arena::Branch => json!({
                    "word": a,
                    "arena": "branch",
                    "valid": is_escape_branch(&a),
                    "violation": first_violation(&a),
                }),
                Arena::FullTree => {
                    let residues: Vec<Value> = (1..=3)
                        .map(|j| {
                            let r = a.residue(j, 3);
                            json!({"residue": j, "word": r, "violation": first_violation(&r)})
                        })
                        .collect();
                    json!({
                        "word": a,
                        "arena": "tree",
                        "valid": is_escape_tree(&a),
                        "residues": residues,
                    })
                }
            };
            Ok(Report::new(body, true))
        }
        EscapeCommand::Synthesize {
            word,
            arena,
            config_out,
        } => {
            let a = parse_word(word)?;
            let (config, descriptor) = match arena.arena() {
                Arena::Branch => {
                    let desc = synthesize_branch(&a)?;
                    (desc.branch_config()?, Some(desc))
                }
                Arena::FullTree => (synthesize_tree(&a)?, None),
            };
            let realized = simulate(&config, arena.arena(), a.len())?;
            let ok = realized == a;
            let config_json: Value = serde_json::from_str(&config.to_json()).expect("config is JSON");
            let body = json!({
                "word": a,
                "arena": arena_name(arena.arena()),
                "descriptor": descriptor,
                "config": config_json,
                "realized": realized,
                "verdict": ok,
            });
            Ok(Report::new(body, ok).with_file(config_out.as_ref(), || config.to_json() + "\n"))
        }
        EscapeCommand::Simulate {
            config,
            m,
            arena,
            dot,
        } => {
            let text = read(config)?;
            let value: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Input(format!("{}: {e}", config.display())))?;
            let (cfg, arena) = if value.get("rule").is_some() {
                let desc: ConfigDescriptor = serde_json::from_value(value)
                    .map_err(|e| CliError::Input(format!("{}: {e}", config.display())))?;
                (desc.branch_config()?, Arena::Branch)
            } else {
                (load_config(config)?, arena.arena())
            };
            let (out, tree) = run_chips_infinite(&cfg, arena, *m)?;
            let word = escape_bits(&out);
            let returns = word.bytes().filter(|&b| b == b'0').count();
            let body = json!({
                "arena": arena_name(arena),
                "m": m,
                "word": word,
                "escapes": out.len() - returns,
                "returns": returns,
            });
            Ok(Report::new(body, true).with_file(dot.as_ref(), || tree.to_dot()))
        }
    }
}

fn cmd_exit_measure(args: &ExitMeasureArgs) -> Result<Report, CliError> {
    let wired = build_tree(TreeSpec::new(args.d, args.n, TreeVariant::Wired))?;
    let t0 = match &args.rotors {
        Some(path) => load_rotors(&wired, path)?,
        None => random_acyclic_wired(&wired, args.d, &mut ChaCha8Rng::seed_from_u64(args.seed)),
    };
    let out = exit_measure_experiment(args.d, args.n, &t0, args.csv.is_some())?;
    let ok = out.holds();
    let hat = build_tree(TreeSpec::new(args.d, args.n, TreeVariant::Hat))?;
    let body = json!({
        "d": args.d,
        "n": args.n,
        "chips": out.chips,
        "initial_rotors": t0.to_named(&wired),
        "leaf_counts": out.leaf_counts,
        "origin_count": out.origin_count,
        "expected_origin_count": out.expected_origin_count(),
        "rotors_restored": out.rotors_restored,
        "verdict": ok,
    });
    let log = out.log;
    Ok(Report::new(body, ok).with_file(args.csv.as_ref(), || {
        log.map(|l| l.to_csv(&hat)).unwrap_or_default()
    }))
}

fn cmd_hitting(args: &TreeArgs) -> Result<Report, CliError> {
    let h = hitting_probabilities(args.d, args.n)?;
    let ok = h.matches_closed_forms() && h.total().to_string() == "1";
    let body = json!({
        "d": args.d,
        "n": args.n,
        "to_origin": h.to_origin.to_string(),
        "to_origin_closed_form": h.origin_closed_form().to_string(),
        "to_leaf": h.to_leaf.values().next().map(|p| p.to_string()),
        "to_leaf_closed_form": h.leaf_closed_form().to_string(),
        "leaves": h.to_leaf.len(),
        "total": h.total().to_string(),
        "verdict": ok,
    });
    Ok(Report::new(body, ok))
}

fn cmd_walk(args: &WalkArgs) -> Result<Report, CliError> {
    let g = load_graph(&args.graph)?;
    let start = g.vertex_or_err(&args.start)?;
    let t = match &args.rotors {
        Some(path) => load_rotors(&g, path)?,
        None => RotorConfiguration::zero(&g),
    };
    let (final_rotors, trace) = route_to_sink(&g, &t, start)?;
    let body = json!({
        "start": g.name(trace.start),
        "stop": g.name(trace.stop),
        "steps": trace.steps.len(),
        "initial_rotors": t.to_named(&g),
        "final_rotors": final_rotors.to_named(&g),
    });
    Ok(Report::new(body, true).with_file(args.csv.as_ref(), || trace.to_csv(&g)))
}

fn with_verdict(outcome: &impl Serialize, ok: bool) -> Report {
    let mut body = serde_json::to_value(outcome).expect("outcomes serialize");
    body["verdict"] = json!(ok);
    Report::new(body, ok)
}

fn run(cli: &Cli) -> Result<Report, CliError> {
    match &cli.command {
        Command::Aggregate(a) => cmd_aggregate(a),
        Command::Group(a) => cmd_group(a),
        Command::Escape(c) => cmd_escape(c),
        Command::ExitMeasure(a) => cmd_exit_measure(a),
        Command::Hitting(a) => cmd_hitting(a),
        Command::Alternation(a) => {
            let out = alternation_experiment(a.n)?;
            Ok(with_verdict(&out, out.holds()))
        }
        Command::Recurrence(a) => {
            let out = recurrence_experiment(a.d, a.n)?;
            Ok(with_verdict(&out, out.holds()))
        }
        Command::Walk(a) => cmd_walk(a),
        Command::VerifyAll => {
            let reports = run_all();
            for r in &reports {
                eprintln!("{}", r.line());
            }
            let ok = reports.iter().all(|r| r.ok());
            let rows: Vec<Value> = reports
                .iter()
                .map(|r| json!({"id": r.id, "name": r.name, "passed": r.ok(), "detail": r.detail}))
                .collect();
            Ok(Report::new(json!({ "criteria": rows, "verdict": ok }), ok))
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(&cli).and_then(|report| {
        let text = serde_json::to_string_pretty(&report.body).expect("reports serialize") + "\n";
        for (path, contents) in &report.files {
            write_file(path, contents)?;
        }
        match &cli.output {
            Some(path) => write_file(path, &text)?,
            None => print!("{text}"),
        }
        Ok(report.ok)
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: a checked property did not hold");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
