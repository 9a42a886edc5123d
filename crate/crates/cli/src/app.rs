//! Argument parsing and command dispatch for the `sofa` binary.
//!
//! Exit codes: 0 success, 2 input error, 3 verification failure,
//! 4 integrity error.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sofa_core::analysis::{leakage_monte_carlo, leakage_probability, LeakageQuery};
use sofa_core::firewall::Layout;
use sofa_core::ges::CltConfig;
use sofa_core::matcher::Matcher;
use sofa_core::obfuscate::{BasicSchemeConfig, ObfuscationOptions};
use sofa_core::rules::{parse_acl, AclRule};
use sofa_core::{Action, Backend, Execution, OpCounter, PacketHeader, RandomSource, Scheme};

use crate::bench::{self, BenchPlan, CSV_HEADER};
use crate::format;
use crate::packets::{parse_packets, DecisionLine};
use crate::pipeline::{self, BuildConfig, Mode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;
pub const EXIT_INTEGRITY: i32 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "sofa",
    version,
    about = "Obfuscated firewall compilation and filtering"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compile an ACL file into an obfuscated firewall file.
    Obfuscate(ObfuscateArgs),
    /// Run packets through an obfuscated firewall.
    Filter(FilterArgs),
    /// Compare obfuscated decisions with the plaintext rules.
    Verify(VerifyArgs),
    /// Probability that two basic-scheme rules share a unit.
    Leakage(LeakageArgs),
    /// Time obfuscation and filtering per scheme, as CSV.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum BackendArg {
    Transparent,
    Clt,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Standard,
    Extended,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Standard => Mode::Standard,
            ModeArg::Extended => Mode::Extended,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct EncodingArgs {
    #[arg(long, value_enum, default_value = "transparent")]
    pub backend: BackendArg,
    #[arg(long, default_value_t = 12)]
    pub lambda: u32,
    /// clt: zero-test slack bits.
    #[arg(long)]
    pub nu: Option<u32>,
    /// clt: bit length of each secret prime.
    #[arg(long)]
    pub eta: Option<u32>,
    /// clt: number of secret primes.
    #[arg(long)]
    pub primes: Option<usize>,
    /// clt: bit length of each plaintext modulus.
    #[arg(long)]
    pub message_bits: Option<u32>,
    /// clt: fresh noise bits.
    #[arg(long)]
    pub noise_bits: Option<u32>,
}

impl EncodingArgs {
    pub fn backend(&self) -> Backend {
        match self.backend {
            BackendArg::Transparent => Backend::Transparent,
            BackendArg::Clt => {
                let d = CltConfig::default();
                Backend::Clt(CltConfig {
                    nu: self.nu.unwrap_or(d.nu),
                    eta: self.eta,
                    primes: self.primes,
                    alpha_bits: self.message_bits.unwrap_or(d.alpha_bits),
                    rho_noise: self.noise_bits.unwrap_or(d.rho_noise),
                    ..d
                })
            }
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct SchemeArgs {
    /// naive, basic, blocking, dnc (= dnc/naive) or dnc/basic.
    #[arg(long, default_value = "basic")]
    pub scheme: String,
    #[arg(long, value_enum, default_value = "standard")]
    pub mode: ModeArg,
    /// basic: equal-ratio unit count (default 2n).
    #[arg(long = "M")]
    pub m: Option<usize>,
    /// basic: unequal-ratio unit count (default 2n).
    #[arg(long = "N")]
    pub n: Option<usize>,
    /// dnc: number of parts.
    #[arg(long, default_value_t = 4)]
    pub parts: usize,
    /// dnc: let the last part take the remainder bits.
    #[arg(long)]
    pub allow_remainder: bool,
    /// Action for packets no rule matches.
    #[arg(long, default_value = "deny")]
    pub default_action: String,
    /// blocking: cap on the summed field domain sizes.
    #[arg(long, default_value_t = sofa_core::obfuscate::DEFAULT_BLOCK_CAP)]
    pub block_cap: u64,
    #[command(flatten)]
    pub encoding: EncodingArgs,
}

#[derive(Args, Debug)]
pub struct ObfuscateArgs {
    #[arg(long)]
    pub rules: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Build without the thread pool.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Args, Debug)]
pub struct FilterArgs {
    #[arg(long)]
    pub firewall: PathBuf,
    #[arg(long)]
    pub packets: PathBuf,
    /// Decisions file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Leave matched rule indices out of the decisions.
    #[arg(long)]
    pub hide_rule_index: bool,
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub rules: PathBuf,
    #[arg(long)]
    pub firewall: PathBuf,
    /// Packets file (JSONL).
    #[arg(long, conflicts_with_all = ["exhaustive_bits", "random"])]
    pub packets: Option<PathBuf>,
    /// Every value of the top B source-address bits.
    #[arg(long, value_name = "B", conflicts_with = "random")]
    pub exhaustive_bits: Option<u32>,
    /// Seeded random packets, half drawn to hit some rule.
    #[arg(long, value_name = "COUNT")]
    pub random: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Args, Debug)]
pub struct LeakageArgs {
    #[arg(long = "M")]
    pub m: usize,
    #[arg(long = "N")]
    pub n_units: usize,
    #[arg(long)]
    pub w1: usize,
    #[arg(long)]
    pub w2: usize,
    #[arg(long)]
    pub n: usize,
    /// Also run a Monte Carlo estimate with this many trials.
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "basic,dnc,blocking")]
    pub schemes: Vec<String>,
    #[arg(long)]
    pub rules: PathBuf,
    /// Packets per filtering run.
    #[arg(long, default_value_t = 100)]
    pub packets: usize,
    /// Rule-count prefixes of the rule file to build (default: all rules).
    #[arg(long, value_delimiter = ',')]
    pub rule_counts: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub repeat: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "standard")]
    pub mode: ModeArg,
    #[arg(long)]
    pub sequential: bool,
    #[command(flatten)]
    pub encoding: EncodingArgs,
}

/// A failed command: message plus exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

fn input(message: impl ToString) -> Failure {
    Failure {
        code: EXIT_INPUT,
        message: message.to_string(),
    }
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Obfuscate(a) => obfuscate(a),
        Command::Filter(a) => filter(a),
        Command::Verify(a) => verify(a),
        Command::Leakage(a) => leakage(a),
        Command::Bench(a) => run_bench(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn read_acl(path: &Path) -> Result<Vec<AclRule>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    parse_acl(&text).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn load_firewall(path: &Path) -> Result<sofa_core::ObfuscatedFirewall, Failure> {
    format::load(path).map_err(|e| Failure {
        code: if e.is_integrity() {
            EXIT_INTEGRITY
        } else {
            EXIT_INPUT
        },
        message: format!("{}: {e}", path.display()),
    })
}

pub fn build_config(s: &SchemeArgs, execution: Execution) -> Result<BuildConfig, Failure> {
    let scheme: Scheme = s.scheme.parse().map_err(input)?;
    let default_action: Action = s.default_action.parse().map_err(input)?;
    let options = ObfuscationOptions {
        lambda: s.encoding.lambda,
        backend: s.encoding.backend(),
        default_action,
        execution,
        block_cap: s.block_cap,
        allow_remainder: s.allow_remainder,
    };
    let mode: Mode = s.mode.into();
    let mut cfg = BuildConfig::new(scheme, mode, options);
    cfg.parts = s.parts;
    if s.m.is_some() || s.n.is_some() {
        let width = match scheme {
            Scheme::Dnc(_) if s.parts > 0 => mode.bits().width() / s.parts,
            _ => mode.bits().width(),
        };
        let d = BasicSchemeConfig::for_width(width);
        cfg.basic = Some(BasicSchemeConfig {
            m: s.m.unwrap_or(d.m),
            n: s.n.unwrap_or(d.n),
        });
    }
    Ok(cfg)
}

fn obfuscate(a: ObfuscateArgs) -> Result<(), Failure> {
    let acl = read_acl(&a.rules)?;
    let cfg = build_config(&a.scheme, execution(a.sequential))?;
    println!("seed: {}", a.seed);
    let counter = OpCounter::new();
    let start = Instant::now();
    let fw = pipeline::build_firewall(&acl, &cfg, &RandomSource::new(a.seed), Some(&counter))
        .map_err(input)?;
    let elapsed = start.elapsed();
    format::save(&fw, &a.out).map_err(input)?;
    let ops = counter.snapshot();
    println!(
        "scheme: {}  rules: {}  kappa: {:?}  elapsed: {:.3}s",
        fw.scheme,
        fw.rules.len(),
        fw.kappas(),
        elapsed.as_secs_f64()
    );
    println!(
        "ops: samp={} encode={} re_rand={} mul={}",
        ops.samp, ops.encode, ops.re_rand, ops.mul
    );
    println!("wrote {}", a.out.display());
    Ok(())
}

fn filter(a: FilterArgs) -> Result<(), Failure> {
    let fw = load_firewall(&a.firewall)?;
    let text = fs::read_to_string(&a.packets)
        .map_err(|e| input(format!("{}: {e}", a.packets.display())))?;
    let parsed = parse_packets(&text);
    let good: Vec<(usize, PacketHeader)> = parsed
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.as_ref().ok().map(|p| (i, *p)))
        .collect();
    let headers: Vec<PacketHeader> = good.iter().map(|&(_, p)| p).collect();
    let decisions = Matcher::new().filter_packets(&fw, &headers, execution(a.sequential));
    let mut lines: Vec<Option<DecisionLine>> = vec![None; parsed.len()];
    for (&(i, _), d) in good.iter().zip(decisions) {
        lines[i] = Some(match d {
            Ok(d) => {
                let rule = if a.hide_rule_index { None } else { d.rule };
                DecisionLine::decided(i, &d.action.to_string(), rule)
            }
            Err(e) => DecisionLine::failed(i, e.to_string()),
        });
    }
    let mut out = String::new();
    for (i, line) in lines.into_iter().enumerate() {
        let line = line.unwrap_or_else(|| {
            let err = parsed[i].as_ref().err().cloned().unwrap_or_default();
            eprintln!("warning: packet {i}: {err}");
            DecisionLine::failed(i, err)
        });
        let _ = writeln!(out, "{}", line.to_line());
    }
    match &a.out {
        Some(path) => {
            fs::write(path, out).map_err(|e| input(format!("{}: {e}", path.display())))?
        }
        None => std::io::stdout().write_all(out.as_bytes()).map_err(input)?,
    }
    Ok(())
}

fn verify(a: VerifyArgs) -> Result<(), Failure> {
    let acl = read_acl(&a.rules)?;
    let fw = load_firewall(&a.firewall)?;
    if acl.len() != fw.rules.len() {
        return Err(input(format!(
            "rules file has {} rules but the firewall has {}",
            acl.len(),
            fw.rules.len()
        )));
    }
    if let Some(r) = (0..acl.len()).find(|&r| acl[r].action.kind != fw.rules[r].action.kind) {
        return Err(input(format!(
            "rule {r}: action differs between rules file and firewall"
        )));
    }
    if let Layout::Bits(sofa_core::BitMode::Raw(_)) = fw.layout {
        return Err(input("raw bit layouts have no ACL form"));
    }
    let plain = pipeline::plain_rules(&acl, &fw.layout).map_err(input)?;
    println!("seed: {}", a.seed);
    let packets: Vec<PacketHeader> = if let Some(path) = &a.packets {
        let text =
            fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
        parse_packets(&text)
            .into_iter()
            .enumerate()
            .map(|(i, p)| p.map_err(|e| input(format!("packet {i}: {e}"))))
            .collect::<Result<_, _>>()?
    } else if let Some(bits) = a.exhaustive_bits {
        if bits > 24 {
            return Err(input("--exhaustive-bits is limited to 24"));
        }
        pipeline::exhaustive_packets(bits)
    } else {
        let count = a.random.unwrap_or(10_000);
        pipeline::random_packets(
            &acl,
            count,
            &mut RandomSource::new(a.seed).fork("verify-packets", 0),
        )
    };
    let decisions = Matcher::new().filter_packets(&fw, &packets, execution(a.sequential));
    let mut disagreements = Vec::new();
    for (i, (p, d)) in packets.iter().zip(decisions).enumerate() {
        let d = d.map_err(|e| Failure {
            code: EXIT_INTEGRITY,
            message: format!("packet {i}: {e}"),
        })?;
        let want = pipeline::oracle_decision(&plain, &fw.layout, p, &fw.default_action);
        if d != want {
            disagreements.push((i, d, want));
        }
    }
    println!(
        "agreement: {}/{}  disagreements: {}",
        packets.len() - disagreements.len(),
        packets.len(),
        disagreements.len()
    );
    for (i, got, want) in disagreements.iter().take(20) {
        println!(
            "  packet {i}: obfuscated {} (rule {:?}), oracle {} (rule {:?})",
            got.action, got.rule, want.action, want.rule
        );
    }
    if disagreements.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_VERIFY,
            message: format!("{} disagreements", disagreements.len()),
        })
    }
}

fn leakage(a: LeakageArgs) -> Result<(), Failure> {
    let q = LeakageQuery::new(a.m, a.n_units, a.w1, a.w2, a.n).map_err(input)?;
    let p = leakage_probability(&q);
    let mut line = serde_json::json!({
        "M": a.m, "N": a.n_units, "w1": a.w1, "w2": a.w2, "n": a.n,
        "closed_form": p,
    });
    if let Some(trials) = a.trials {
        let est = leakage_monte_carlo(&q, trials, &RandomSource::new(a.seed)).map_err(input)?;
        line["monte_carlo"] = serde_json::json!({
            "mean": est.mean, "stderr": est.stderr, "trials": est.trials, "seed": a.seed,
        });
    }
    println!("{line}");
    Ok(())
}

fn run_bench(a: BenchArgs) -> Result<(), Failure> {
    let acl = read_acl(&a.rules)?;
    let exec = execution(a.sequential);
    let configs = a
        .schemes
        .iter()
        .map(|s| {
            let scheme_args = SchemeArgs {
                scheme: s.clone(),
                mode: a.mode,
                m: None,
                n: None,
                parts: 4,
                allow_remainder: false,
                default_action: "deny".into(),
                block_cap: sofa_core::obfuscate::DEFAULT_BLOCK_CAP,
                encoding: a.encoding.clone(),
            };
            build_config(&scheme_args, exec)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rule_counts = if a.rule_counts.is_empty() {
        vec![acl.len()]
    } else {
        a.rule_counts.clone()
    };
    let plan = BenchPlan {
        acl: &acl,
        configs,
        rule_counts,
        packets: a.packets,
        repeat: a.repeat,
        seed: a.seed,
        execution: exec,
    };
    let records = bench::run(&plan).map_err(input)?;
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for r in &records {
        csv.push_str(&r.csv());
        csv.push('\n');
    }
    match &a.out {
        Some(path) => {
            fs::write(path, &csv).map_err(|e| input(format!("{}: {e}", path.display())))?
        }
        None => print!("{csv}"),
    }
    Ok(())
}
