//! Command-line front end: protocol and table files in, verdicts and
//! artifacts out. Exit codes follow one contract everywhere: 0 all checks
//! pass, 1 a verdict went red, 2 malformed input, 3 a degenerate
//! mathematical condition (named on stderr).

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::constructions::{boost_majority, coupled_draw, embed_single, naive_xor};
use crate::costs::{gamma_cost, theta_cost};
use crate::decompose::{
    audit_tree, ed_means, finalize_leaf, recursive_decompose, select_good_leaf, tree_csv,
    SelectThresholds,
};
use crate::io::{
    bernoulli_table, function_from_file, input_noisy, noisy_single, protocol_from_file,
    protocol_to_file, read_json, table_from_file, uniform_mu, write_json,
};
use crate::protocol::{information_cost, output_stats, validate_standard, FunctionTable, Kind, Protocol};
use crate::rational::{format_rat, parse_rat, rat};
use crate::report::VerdictReport;
use crate::suites::{control_verdict, negative_controls, run_all, Control};
use crate::table::JointTable;
use crate::{Error, Result};

#[derive(Parser)]
#[command(name = "xorlab", version, about = "Exact information costs, decompositions, and audits for XOR protocols")]
pub struct Cli {
    /// Numerical tolerance for floating-point comparisons.
    #[arg(long, global = true, default_value_t = crate::DEFAULT_TOL, value_name = "TOL")]
    pub tol: f64,
    /// Override α for the decomposition, e.g. 31/50.
    #[arg(long, global = true, value_name = "RAT")]
    pub alpha: Option<String>,
    /// Seed for generated fixtures and coupled sampling.
    #[arg(long, global = true, default_value_t = crate::gen::DEFAULT_SEED, value_name = "SEED")]
    pub seed: u64,
    /// Directory for JSON and CSV artifacts.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Largest joint table the run is allowed to materialize.
    #[arg(long, global = true, default_value_t = crate::DEFAULT_ENTRY_BUDGET, value_name = "N")]
    pub max_entries: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Information cost, output statistics, and θ/γ against a reference input.
    Ic(IcArgs),
    /// Recursive binary decomposition with the full audit and leaf selection.
    Decompose(DecomposeArgs),
    /// Seeded verification suites plus the negative controls.
    Verify(VerifyArgs),
    /// Embed each coordinate of a protocol as a protocol of its own.
    Embed(EmbedArgs),
    /// The n-fold XOR power of a base protocol.
    Naive(NaiveArgs),
    /// Majority vote over repeated runs on shared inputs.
    Boost(BoostArgs),
    /// Coupled sampling from two single-variable tables.
    Couple(CoupleArgs),
}

/// Where the working protocol comes from: a file or a built-in family,
/// raised to the n-fold XOR power when n ≥ 2.
#[derive(Args)]
struct SourceArgs {
    /// Protocol file (JSON).
    #[arg(long, value_name = "FILE", conflicts_with = "builder")]
    protocol: Option<PathBuf>,
    /// Built-in protocol family when no file is given.
    #[arg(long, value_enum, value_name = "NAME")]
    builder: Option<Builder>,
    /// Noise rate for the builders.
    #[arg(long, value_name = "RAT", default_value = "1/20")]
    noise: String,
    /// Copies in the XOR power; 1 leaves the base untouched.
    #[arg(short = 'n', long, default_value_t = 1)]
    n: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Builder {
    /// AND of uniform inputs with a noisy answer round.
    Naive,
    /// Both inputs announced through symbol-flip noise, then answered.
    PerCoordinateNoisy,
}

#[derive(Args)]
struct IcArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Reference input table; the protocol's own marginal when omitted.
    #[arg(long, value_name = "FILE")]
    mu: Option<PathBuf>,
    /// Function for output statistics; builders imply AND.
    #[arg(long, value_name = "FILE")]
    function: Option<PathBuf>,
}

#[derive(Args)]
struct DecomposeArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Function table; AND when omitted.
    #[arg(long, value_name = "FILE")]
    function: Option<PathBuf>,
    /// Reference input table; the protocol's own marginal when omitted.
    #[arg(long, value_name = "FILE")]
    mu: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Run one corrupted fixture raw; failing is its expected outcome.
    #[arg(long, value_enum, value_name = "NAME")]
    negative_control: Option<ControlArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ControlArg {
    ChiTamper,
    DiagonalJoint,
    KernelRowSum,
    Masquerade,
    MissingSupport,
}

impl From<ControlArg> for Control {
    fn from(c: ControlArg) -> Control {
        match c {
            ControlArg::ChiTamper => Control::ChiTamper,
            ControlArg::DiagonalJoint => Control::DiagonalJoint,
            ControlArg::KernelRowSum => Control::KernelRowSum,
            ControlArg::Masquerade => Control::Masquerade,
            ControlArg::MissingSupport => Control::MissingSupport,
        }
    }
}

#[derive(Args)]
struct EmbedArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Function table; AND when omitted.
    #[arg(long, value_name = "FILE")]
    function: Option<PathBuf>,
}

#[derive(Args)]
struct NaiveArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Function for output statistics; AND when omitted.
    #[arg(long, value_name = "FILE")]
    function: Option<PathBuf>,
}

#[derive(Args)]
struct BoostArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Odd number of repetitions.
    #[arg(short = 't', long, default_value_t = 3)]
    copies: usize,
    /// Function for output statistics; AND when omitted.
    #[arg(long, value_name = "FILE")]
    function: Option<PathBuf>,
}

#[derive(Args)]
struct CoupleArgs {
    /// First single-variable table; Bernoulli(1/2) when omitted.
    #[arg(long, value_name = "FILE")]
    mu: Option<PathBuf>,
    /// Second single-variable table; Bernoulli(1/4) when omitted.
    #[arg(long, value_name = "FILE")]
    nu: Option<PathBuf>,
    /// Number of coupled draws.
    #[arg(long, default_value_t = 100_000)]
    draws: u64,
}

/// Runs the parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    if !cli.tol.is_finite() || cli.tol <= 0.0 {
        eprintln!("error: tolerance must be positive");
        return 2;
    }
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::DegenerateConditioning { .. }
                | Error::NoQualifyingLeaf { .. }
                | Error::DisadvantageTooLarge(_) => 3,
                _ => 2,
            }
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Ic(a) => cmd_ic(cli, a),
        Command::Decompose(a) => cmd_decompose(cli, a),
        Command::Verify(a) => cmd_verify(cli, a),
        Command::Embed(a) => cmd_embed(cli, a),
        Command::Naive(a) => cmd_naive(cli, a),
        Command::Boost(a) => cmd_boost(cli, a),
        Command::Couple(a) => cmd_couple(cli, a),
    }
}

fn load_base(src: &SourceArgs) -> Result<Protocol> {
    match (&src.protocol, src.builder) {
        (Some(path), _) => protocol_from_file(&read_json(path)?),
        (None, Some(b)) => {
            let rate = parse_rat(&src.noise)?;
            match b {
                Builder::Naive => noisy_single(rate),
                Builder::PerCoordinateNoisy => {
                    input_noisy(&FunctionTable::and(), uniform_mu(&["0", "1"], &["0", "1"]), rate)
                }
            }
        }
        (None, None) => Err(Error::InvalidInput("pass --protocol FILE or --builder NAME".into())),
    }
}

fn load_source(src: &SourceArgs, max_entries: usize) -> Result<Protocol> {
    let base = load_base(src)?;
    let p = if src.n >= 2 { naive_xor(&base, src.n)? } else { base };
    guard_entries(&p, max_entries)?;
    Ok(p)
}

fn guard_entries(p: &Protocol, budget: usize) -> Result<()> {
    let entries = p.joint().entry_count();
    if entries > budget {
        return Err(Error::EntryBudget { entries, budget });
    }
    Ok(())
}

fn load_function(path: &Option<PathBuf>) -> Result<FunctionTable> {
    match path {
        Some(p) => function_from_file(&read_json(p)?),
        None => Ok(FunctionTable::and()),
    }
}

fn load_mu(path: &Option<PathBuf>, p: &Protocol) -> Result<JointTable> {
    match path {
        Some(f) => table_from_file(&read_json(f)?),
        None => Ok(p.input_marginal()),
    }
}

fn write_artifact<T: Serialize>(dir: &PathBuf, name: &str, value: &T) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    write_json(&path, value)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn report_code(rep: &VerdictReport) -> i32 {
    if rep.pass {
        0
    } else {
        1
    }
}

#[derive(Serialize)]
struct IcReport {
    ic: f64,
    theta: f64,
    gamma: f64,
    gamma_alice: f64,
    gamma_bob: f64,
    error: Option<String>,
    advantage: Option<String>,
}

fn cmd_ic(cli: &Cli, a: &IcArgs) -> Result<i32> {
    let p = load_source(&a.source, cli.max_entries)?;
    let mu = load_mu(&a.mu, &p)?;
    if p.kind() == Kind::Standard {
        let v = validate_standard(&p);
        if !v.pass {
            print!("{}", v.lines());
            return Ok(1);
        }
    }
    let ic = information_cost(&p);
    let theta = theta_cost(&p, &mu)?;
    let gamma = gamma_cost(&p, &mu)?;
    println!("ic {ic}");
    println!("theta {theta}");
    println!("gamma {} alice {} bob {}", gamma.total, gamma.alice, gamma.bob);

    // A builder source answers AND by construction; a file source needs
    // the function spelled out before stats mean anything.
    let f = match (&a.function, a.source.builder) {
        (Some(path), _) => Some(function_from_file(&read_json(path)?)?),
        (None, Some(_)) => Some(FunctionTable::and()),
        (None, None) => None,
    };
    let stats = f.map(|f| output_stats(&p, &f)).transpose()?;
    if let Some(s) = &stats {
        println!("error {}", format_rat(&s.error));
        println!("advantage {}", format_rat(&s.advantage));
    }

    if let Some(dir) = &cli.out {
        let report = IcReport {
            ic,
            theta,
            gamma: gamma.total,
            gamma_alice: gamma.alice,
            gamma_bob: gamma.bob,
            error: stats.as_ref().map(|s| format_rat(&s.error)),
            advantage: stats.as_ref().map(|s| format_rat(&s.advantage)),
        };
        write_artifact(dir, "ic.json", &report)?;
    }
    Ok(0)
}

fn cmd_decompose(cli: &Cli, a: &DecomposeArgs) -> Result<i32> {
    let p = load_source(&a.source, cli.max_entries)?;
    let f = load_function(&a.function)?;
    let mu = load_mu(&a.mu, &p)?;
    let alpha = cli.alpha.as_deref().map(parse_rat).transpose()?;
    let tree = recursive_decompose(&p, &f, &mu, alpha, cli.max_entries, cli.tol)?;
    let audit = audit_tree(&tree, cli.tol)?;
    let (ed_eps, ed_theta, ed_gamma) = ed_means(&tree);
    println!("nodes {}", tree.nodes.len());
    println!("alpha {}", format_rat(&tree.config.alpha));
    println!("root eps {} ic {}", format_rat(&tree.root().eps), tree.root().info_cost);
    println!("ed eps {} theta {} gamma {}", format_rat(&ed_eps), ed_theta, ed_gamma);

    let leaf = select_good_leaf(&tree, &SelectThresholds::default())?;
    let fin = finalize_leaf(&tree, &leaf.s, cli.tol)?;
    println!("leaf {}", leaf.s);
    println!("leaf error {} ic {}", format_rat(&fin.audit.error_eta), fin.audit.ic_eta);

    let pass = audit.pass && fin.report.pass;
    if !pass {
        let mut first = audit.failures();
        first.extend(fin.report.failures());
        println!("audit fails: {} item(s), first {}", first.len(), first[0]);
    }

    match &cli.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let csv_path = dir.join("tree.csv");
            std::fs::write(&csv_path, tree_csv(&tree))?;
            println!("wrote {}", csv_path.display());
            write_artifact(dir, "audit.json", &audit)?;
            write_artifact(dir, "leaf.json", &fin.report)?;
        }
        None => {
            print!("{}", tree_csv(&tree));
            print!("{}", audit.lines());
            print!("{}", fin.report.lines());
        }
    }
    Ok(if pass { 0 } else { 1 })
}

fn cmd_verify(cli: &Cli, a: &VerifyArgs) -> Result<i32> {
    if let Some(c) = a.negative_control {
        let rep = control_verdict(c.into(), cli.tol)?.finish();
        print!("{}", rep.lines());
        return Ok(report_code(&rep));
    }
    let mut rep = run_all(cli.seed, cli.tol)?;
    rep.absorb(negative_controls()?);
    let rep = rep.finish();
    print!("{}", rep.lines());
    let failures = rep.failures();
    if failures.is_empty() {
        println!("verify: {} checks pass", rep.items.len());
    } else {
        println!(
            "verify: {} of {} checks fail, first {}",
            failures.len(),
            rep.items.len(),
            failures[0]
        );
    }
    if let Some(dir) = &cli.out {
        write_artifact(dir, "verify.json", &rep)?;
    }
    Ok(report_code(&rep))
}

fn cmd_embed(cli: &Cli, a: &EmbedArgs) -> Result<i32> {
    let p = load_source(&a.source, cli.max_entries)?;
    let f = load_function(&a.function)?;
    let e = embed_single(&p, &f)?;
    for (j, err) in e.errors.iter().enumerate() {
        println!("coordinate {j} error {} ic {}", format_rat(err), e.ic_per_j[j]);
    }
    println!("base error {} ic {}", format_rat(&e.error_p), e.ic_p);
    if let Some(ic) = e.ic_mixture {
        println!("mixture ic {ic}");
    }
    print!("{}", e.report.lines());
    if let Some(dir) = &cli.out {
        for (j, q) in e.per_j.iter().enumerate() {
            write_artifact(dir, &format!("embed_{j}.json"), &protocol_to_file(q))?;
        }
        write_artifact(dir, "embed_report.json", &e.report)?;
    }
    Ok(report_code(&e.report))
}

fn cmd_naive(cli: &Cli, a: &NaiveArgs) -> Result<i32> {
    let base = load_base(&a.source)?;
    let p = naive_xor(&base, a.source.n)?;
    guard_entries(&p, cli.max_entries)?;
    let f = load_function(&a.function)?;
    let stats = output_stats(&p, &f)?;
    println!("ic {}", information_cost(&p));
    println!("error {}", format_rat(&stats.error));
    println!("advantage {}", format_rat(&stats.advantage));
    if let Some(dir) = &cli.out {
        write_artifact(dir, "naive.json", &protocol_to_file(&p))?;
    }
    Ok(0)
}

fn cmd_boost(cli: &Cli, a: &BoostArgs) -> Result<i32> {
    let p = load_source(&a.source, cli.max_entries)?;
    let b = boost_majority(&p, a.copies)?;
    guard_entries(&b, cli.max_entries)?;
    let f = load_function(&a.function)?;
    let stats = output_stats(&b, &f)?;
    let base_stats = output_stats(&p, &f)?;
    println!("copies {}", a.copies);
    println!("ic {} base {}", information_cost(&b), information_cost(&p));
    println!(
        "error {} base {}",
        format_rat(&stats.error),
        format_rat(&base_stats.error)
    );
    if let Some(dir) = &cli.out {
        write_artifact(dir, "boost.json", &protocol_to_file(&b))?;
    }
    Ok(0)
}

fn cmd_couple(cli: &Cli, a: &CoupleArgs) -> Result<i32> {
    let mu = match &a.mu {
        Some(path) => table_from_file(&read_json(path)?)?,
        None => bernoulli_table("b", rat(1, 2))?,
    };
    let nu = match &a.nu {
        Some(path) => table_from_file(&read_json(path)?)?,
        None => bernoulli_table("b", rat(1, 4))?,
    };
    let r = coupled_draw(&mu, &nu, cli.seed, a.draws)?;
    println!("tv {}", format_rat(&r.tv));
    println!("exact mismatch {}", format_rat(&r.exact));
    println!("draws {} mismatches {} empirical {}", r.draws, r.mismatches, r.empirical);
    println!("sigma {} z {}", r.sigma, r.z_score);
    println!("counts mu {:?} nu {:?}", r.counts_mu, r.counts_nu);
    if let Some(dir) = &cli.out {
        let report = serde_json::json!({
            "tv": format_rat(&r.tv),
            "exact": format_rat(&r.exact),
            "draws": r.draws,
            "mismatches": r.mismatches,
            "empirical": r.empirical,
            "sigma": r.sigma,
            "z_score": r.z_score,
            "seed": r.seed,
            "counts_mu": r.counts_mu,
            "counts_nu": r.counts_nu,
        });
        write_artifact(dir, "couple.json", &report)?;
    }
    Ok(if r.z_score.abs() <= 5.0 { 0 } else { 1 })
}
