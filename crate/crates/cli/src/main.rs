//! `kadrid`: tables and simulations for the random-id Kademlia model.
//!
//! Data goes to stdout (or `--output`), progress and timing to stderr. Every
//! run first prints its resolved settings as `# key=value` lines.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{parser::ValueSource, ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use kademlia_rid::experiments::harness::{brute_force_comparison, fmt_sig, BruteRow};
use kademlia_rid::experiments::{
    convergence_study, goodness_experiment, oracle_comparison, run_search_experiment, ExperimentConfig, StartMode,
    TargetMode, TrieSource,
};
use kademlia_rid::idspace::default_dim;
use kademlia_rid::theory::{harmonic, mu, DEFAULT_TOL};
use kademlia_rid::BucketMode;

const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "kadrid", version, about = "Random-id Kademlia lookup simulator")]
struct Cli {
    /// Worker threads (0 = one per core). Output does not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Master seed; a fresh one is drawn and printed when omitted.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Flat key=value file supplying defaults; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Write data to this file instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// 1/mu_k and ln2/H_k for k = 1..kmax.
    MuTable {
        #[arg(long, default_value_t = 10)]
        kmax: u32,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// One search per trial; per-trial CSV and a JSON summary.
    Simulate(SimulateArgs),
    /// Slope of mean T against log2 n.
    Converge {
        #[arg(long, value_parser = parse_n_list, default_value = "2^14,2^17,2^20")]
        n_list: NList,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 2000)]
        trials: usize,
        #[arg(long, default_value = "without")]
        mode: BucketMode,
        /// Allowed absolute deviation of the slope from 1/mu_k.
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
    },
    /// Fraction of bad tries per n.
    Goodness {
        #[arg(long, value_parser = parse_n_list, default_value = "2^14,2^16,2^18,2^20")]
        n_list: NList,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value = "random")]
        source: TrieSource,
        /// Largest allowed bad fraction at the largest n.
        #[arg(long, default_value_t = 0.05)]
        max_bad: f64,
    },
    /// Level-chain search against the renewal stopping time.
    OracleCompare {
        #[arg(long, default_value_t = 30)]
        jmax: u32,
        #[arg(long, default_value_t = 3)]
        k: u32,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Simulated mean T against exact enumeration on tiny instances.
    BruteCheck {
        /// Comma-separated n:d:k triples.
        #[arg(long, value_parser = parse_grid, default_value = "4:3:1,8:4:1,8:4:2")]
        grid: Grid,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
    },
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_parser = parse_count)]
    n: usize,
    /// Id length in bits; defaults to clamp(2 ceil(log2 n), 64, 512).
    #[arg(long)]
    d: Option<u32>,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value = "without")]
    mode: BucketMode,
    #[arg(long, default_value = "ones")]
    target: TargetMode,
    #[arg(long, default_value = "node0")]
    start: StartMode,
    #[arg(long, default_value = "random")]
    source: TrieSource,
    /// One trie for all trials.
    #[arg(long)]
    fixed_trie: bool,
    /// Write the per-trial CSV here; stdout otherwise.
    #[arg(long)]
    csv: Option<PathBuf>,
}

type NList = Vec<usize>;
type Grid = Vec<(usize, u32, usize)>;

/// Accepts a plain integer or `2^e`.
fn parse_count(s: &str) -> Result<usize, String> {
    let s = s.trim();
    if let Some((base, exp)) = s.split_once('^') {
        let base: usize = base.trim().parse().map_err(|e| format!("{s:?}: {e}"))?;
        let exp: u32 = exp.trim().parse().map_err(|e| format!("{s:?}: {e}"))?;
        base.checked_pow(exp).ok_or_else(|| format!("{s:?} overflows"))
    } else {
        s.parse().map_err(|e| format!("{s:?}: {e}"))
    }
}

fn parse_n_list(s: &str) -> Result<NList, String> {
    s.split(',').map(parse_count).collect()
}

fn parse_grid(s: &str) -> Result<Grid, String> {
    s.split(',')
        .map(|cell| {
            let parts: Vec<&str> = cell.trim().split(':').collect();
            match parts[..] {
                [n, d, k] => Ok((
                    parse_count(n)?,
                    d.parse().map_err(|e| format!("{cell:?}: {e}"))?,
                    parse_count(k)?,
                )),
                _ => Err(format!("{cell:?} is not n:d:k")),
            }
        })
        .collect()
}

fn list_text(ns: &[usize]) -> String {
    ns.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

/// Parses `key=value` lines; `#` starts a comment.
fn read_config_file(path: &PathBuf) -> Result<Vec<(String, String)>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("{}:{}: expected key=value", path.display(), no + 1))?;
        out.push((k.trim().replace('_', "-"), v.trim().to_string()));
    }
    Ok(out)
}

fn config_path(args: &[String]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Parses the command line, using values from the config file for options that
/// were not given as flags.
fn parse_cli(args: Vec<String>) -> Result<Cli, clap::Error> {
    let matches = Cli::command().try_get_matches_from(&args)?;
    let Some(path) = config_path(&args) else {
        return Cli::from_arg_matches(&matches);
    };
    let entries = read_config_file(&path).map_err(|e| Cli::command().error(clap::error::ErrorKind::Io, e))?;
    let (sub_name, sub_matches) = matches.subcommand().expect("subcommand is required");
    let cmd = Cli::command();
    let ids_of = |c: &clap::Command| -> Vec<String> { c.get_arguments().map(|a| a.get_id().to_string()).collect() };
    let sub_ids = ids_of(cmd.find_subcommand(sub_name).expect("parsed subcommand exists"));
    let any_ids: Vec<String> = cmd.get_subcommands().flat_map(ids_of).chain(ids_of(&cmd)).collect();
    let mut extra: Vec<String> = Vec::new();
    for (key, value) in entries {
        let id = key.replace('-', "_");
        let known_global = matches!(id.as_str(), "threads" | "seed" | "output");
        if !known_global && !sub_ids.contains(&id) {
            if any_ids.contains(&id) {
                // an option of another subcommand
                continue;
            }
            return Err(Cli::command().error(
                clap::error::ErrorKind::UnknownArgument,
                format!("unknown config key {key:?}"),
            ));
        }
        let source = if known_global { matches.value_source(&id) } else { sub_matches.value_source(&id) };
        if source == Some(ValueSource::CommandLine) {
            continue;
        }
        if id == "fixed_trie" {
            if value == "true" {
                extra.push(format!("--{key}"));
            }
        } else {
            extra.push(format!("--{key}={value}"));
        }
    }
    let mut full = args.clone();
    full.extend(extra);
    let matches: ArgMatches = Cli::command().try_get_matches_from(&full)?;
    Cli::from_arg_matches(&matches)
}

struct Out {
    text: String,
}

impl Out {
    fn echo(&mut self, key: &str, value: impl std::fmt::Display) {
        writeln!(self.text, "# {key}={value}").unwrap();
    }

    fn line(&mut self, s: impl AsRef<str>) {
        self.text.push_str(s.as_ref());
        self.text.push('\n');
    }
}

fn verdict(out: &mut Out, pass: bool) -> u8 {
    out.line(if pass { "result=PASS" } else { "result=FAIL" });
    if pass {
        0
    } else {
        EXIT_FAIL
    }
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("no --seed given, using {s}");
        s
    })
}

fn run(cli: Cli, out: &mut Out) -> Result<u8, String> {
    let threads = cli.threads;
    eprintln!("threads={threads}");
    let e = |x: kademlia_rid::Error| x.to_string();
    match cli.command {
        Command::MuTable { kmax, tol } => {
            out.echo("command", "mu-table");
            out.echo("kmax", kmax);
            out.echo("tol", format!("{tol:e}"));
            if kmax == 0 {
                return Err("kmax must be positive".into());
            }
            out.line("k,inv_mu,ln2_over_Hk");
            for k in 1..=kmax {
                let m = mu(k, tol).map_err(e)?;
                out.line(format!("{k},{:.10},{:.10}", 1.0 / m.mu, std::f64::consts::LN_2 / harmonic(k)));
            }
            Ok(0)
        }
        Command::Simulate(a) => {
            let seed = resolve_seed(cli.seed);
            let config = ExperimentConfig {
                n: a.n,
                d: a.d.unwrap_or_else(|| default_dim(a.n)),
                k: a.k,
                trials: a.trials,
                seed,
                mode: a.mode,
                source: a.source,
                target: a.target,
                start: a.start,
                fixed_trie: a.fixed_trie,
            };
            out.echo("command", "simulate");
            for (key, value) in config.describe() {
                out.echo(key, value);
            }
            let s = run_search_experiment(&config, threads).map_err(e)?;
            match a.csv {
                Some(path) => {
                    fs::write(&path, s.to_csv()).map_err(|err| format!("cannot write {}: {err}", path.display()))?;
                    out.echo("csv", path.display());
                }
                None => out.text.push_str(&s.to_csv()),
            }
            out.text.push_str(&s.to_json());
            Ok(0)
        }
        Command::Converge { n_list, k, trials, mode, tolerance } => {
            let seed = resolve_seed(cli.seed);
            let base = ExperimentConfig { mode, ..ExperimentConfig::new(n_list[0], k, trials, seed) };
            let target = 1.0 / mu(k as u32, DEFAULT_TOL).map_err(e)?.mu;
            out.echo("command", "converge");
            out.echo("n_list", list_text(&n_list));
            out.echo("k", k);
            out.echo("trials", trials);
            out.echo("seed", seed);
            out.echo("mode", mode.name());
            out.echo("target_slope", format!("{target:.10}"));
            out.echo("tolerance", tolerance);
            let r = convergence_study(&n_list, &base, threads).map_err(e)?;
            out.line("n,log2_n,mean_T,se");
            for p in &r.points {
                out.line(format!("{},{},{},{}", p.n, fmt_sig(p.log2_n), fmt_sig(p.mean), fmt_sig(p.se)));
            }
            out.line(format!("slope={} se={} intercept={}", fmt_sig(r.fit.slope), fmt_sig(r.fit.se), fmt_sig(r.fit.intercept)));
            Ok(verdict(out, (r.fit.slope - target).abs() <= tolerance))
        }
        Command::Goodness { n_list, trials, source, max_bad } => {
            let seed = resolve_seed(cli.seed);
            out.echo("command", "goodness");
            out.echo("n_list", list_text(&n_list));
            out.echo("trials", trials);
            out.echo("seed", seed);
            out.echo("source", source.name());
            out.echo("max_bad", max_bad);
            let pts = goodness_experiment(&n_list, trials, seed, source, threads).map_err(e)?;
            out.line("n,trials,bad,fraction,ci_low,ci_high");
            for p in &pts {
                out.line(format!(
                    "{},{},{},{},{},{}",
                    p.n,
                    p.trials,
                    p.bad,
                    fmt_sig(p.fraction),
                    fmt_sig(p.ci.0),
                    fmt_sig(p.ci.1)
                ));
            }
            let largest = pts.iter().max_by_key(|p| p.n).expect("non-empty n list");
            Ok(verdict(out, largest.fraction <= max_bad))
        }
        Command::OracleCompare { jmax, k, samples } => {
            let seed = resolve_seed(cli.seed);
            out.echo("command", "oracle-compare");
            out.echo("jmax", jmax);
            out.echo("k", k);
            out.echo("samples", samples);
            out.echo("seed", seed);
            out.echo("min_p_value", 0.01);
            out.echo("max_abs_z", 3);
            let r = oracle_comparison(jmax, k, samples, seed).map_err(e)?;
            out.line(format!(
                "chi_square={} dof={} p_value={}",
                fmt_sig(r.chi_square.statistic),
                r.chi_square.dof,
                fmt_sig(r.chi_square.p_value)
            ));
            out.line(format!(
                "mean_chain={} mean_renewal={} pooled_se={} z={}",
                fmt_sig(r.mean_chain),
                fmt_sig(r.mean_renewal),
                fmt_sig(r.pooled_se),
                fmt_sig(r.z)
            ));
            Ok(verdict(out, r.chi_square.p_value > 0.01 && r.z.abs() <= 3.0))
        }
        Command::BruteCheck { grid, trials } => {
            let seed = resolve_seed(cli.seed);
            out.echo("command", "brute-check");
            let cells: Vec<String> = grid.iter().map(|(n, d, k)| format!("{n}:{d}:{k}")).collect();
            out.echo("grid", cells.join(","));
            out.echo("trials", trials);
            out.echo("seed", seed);
            out.echo("max_abs_z", 3);
            let rows: Vec<BruteRow> = brute_force_comparison(&grid, trials, seed, threads).map_err(e)?;
            out.line("n,d,k,exact,mean,se,z,pass");
            let mut all = true;
            for r in &rows {
                let pass = r.z <= 3.0;
                all &= pass;
                out.line(format!(
                    "{},{},{},{},{},{},{},{}",
                    r.n,
                    r.d,
                    r.k,
                    fmt_sig(r.exact),
                    fmt_sig(r.mean),
                    fmt_sig(r.se),
                    fmt_sig(r.z),
                    pass
                ));
            }
            Ok(verdict(out, all))
        }
    }
}

fn main() -> ExitCode {
    let cli = match parse_cli(std::env::args().collect()) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(if err.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let output = cli.output.clone();
    let started = Instant::now();
    let mut out = Out { text: String::new() };
    let code = match run(cli, &mut out) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match output {
        Some(path) => {
            if let Err(err) = fs::write(&path, &out.text) {
                eprintln!("error: cannot write {}: {err}", path.display());
                return ExitCode::from(EXIT_USAGE);
            }
        }
        None => print!("{}", out.text),
    }
    eprintln!("elapsed {:.2} s", started.elapsed().as_secs_f64());
    ExitCode::from(code)
}
