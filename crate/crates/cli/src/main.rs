use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use hsa_core::audit::{
    attack_collusion_set, exact_audit, DEFAULT_AUDIT_BUDGET, DEFAULT_ENUMERATION_CAP,
};
use hsa_core::rates::{rate_table, write_rate_csv};
use hsa_core::scheme::build_insecure_baseline;
use hsa_core::{
    audit_with, build_baseline, build_scheme, infeasibility_attack, measure_rates, run_round,
    sample_round, CoefficientScheme, HsaConfig, HsaError, RateRow, RoundInputs, Verdict,
};

const DEFAULT_SEED: u64 = 20240607;

mod exit {
    pub const OK: u8 = 0;
    pub const FAILURE: u8 = 1;
    pub const DOMAIN: u8 = 2;
    pub const INFEASIBLE: u8 = 3;
    pub const CORRUPT: u8 = 4;
    pub const INSECURE: u8 = 5;
    pub const BUDGET: u8 = 6;
}

/// Hierarchical secure aggregation toolkit.
#[derive(Parser)]
#[command(name = "hsa", version, about)]
struct Cli {
    /// Emit machine-readable JSON instead of human-readable text.
    #[arg(long, global = true)]
    json: bool,
    /// Indent JSON output.
    #[arg(long, global = true)]
    pretty: bool,
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct Shape {
    /// Number of relays.
    #[arg(long = "U")]
    u: usize,
    /// Users per relay.
    #[arg(long = "V")]
    v: usize,
    /// Maximum number of colluding users.
    #[arg(long = "T")]
    t: usize,
}

impl Shape {
    fn config(self) -> hsa_core::Result<HsaConfig> {
        HsaConfig::new(self.u, self.v, self.t)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Optimal and baseline rates as CSV (or JSON).
    Rates(RatesArgs),
    /// Build a coefficient scheme and save it as JSON.
    Build(BuildArgs),
    /// Run one aggregation round on a saved scheme.
    Simulate(SimulateArgs),
    /// Rank-audit a saved scheme, optionally with the exact oracle.
    Audit(AuditArgs),
    /// Replay the collusion attack that breaks every scheme at T = (U-1)V.
    Attack(AttackArgs),
    /// Optimal source key rate next to the baseline.
    Compare(Shape),
}

#[derive(Args)]
struct RatesArgs {
    #[arg(long = "U", required_unless_present = "sweep")]
    u: Option<usize>,
    #[arg(long = "V", required_unless_present = "sweep")]
    v: Option<usize>,
    #[arg(long = "T", required_unless_present = "sweep")]
    t: Option<usize>,
    /// Grid ranges, e.g. `--sweep U=2..4 V=1..3 T=0..6`.
    #[arg(long, num_args = 3, value_parser = parse_range, conflicts_with_all = ["u", "v", "t"])]
    sweep: Option<Vec<(char, RangeInclusive<usize>)>>,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    shape: Shape,
    /// Starting prime for the field search.
    #[arg(long)]
    q: Option<u64>,
    /// Use the identity-plus-parity baseline instead of the optimal scheme.
    #[arg(long)]
    baseline: bool,
    /// Build a baseline matrix even past the feasibility boundary.
    #[arg(long)]
    force_infeasible: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scheme: PathBuf,
    /// Input length in symbols.
    #[arg(long = "L", default_value_t = 1)]
    l: usize,
    /// Write the full transcript here.
    #[arg(long)]
    transcript: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    scheme: PathBuf,
    /// Also run the exact independence oracle.
    #[arg(long)]
    exact: bool,
    /// Cap on tuples enumerated per exact check.
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
    q_cap: u128,
    /// Cap on rank checks.
    #[arg(long, default_value_t = DEFAULT_AUDIT_BUDGET)]
    budget: u128,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    scheme: PathBuf,
    #[arg(long, default_value_t = 100)]
    rounds: u64,
    #[arg(long = "L", default_value_t = 1)]
    l: usize,
    /// Set every input to zero.
    #[arg(long)]
    zero_inputs: bool,
}

fn parse_range(s: &str) -> Result<(char, RangeInclusive<usize>), String> {
    let (name, range) = s.split_once('=').ok_or("expected NAME=a..b")?;
    let name = match name.trim() {
        "U" => 'U',
        "V" => 'V',
        "T" => 'T',
        other => return Err(format!("unknown sweep variable {other:?}")),
    };
    let (lo, hi) = range.split_once("..").ok_or("expected a..b")?;
    let lo: usize = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: usize = hi
        .trim()
        .trim_start_matches('=')
        .parse()
        .map_err(|e| format!("{e}"))?;
    if lo > hi {
        return Err(format!("empty range {lo}..{hi}"));
    }
    Ok((name, lo..=hi))
}

struct Output {
    json: bool,
    pretty: bool,
}

impl Output {
    fn json<T: Serialize>(&self, value: &T) -> anyhow::Result<String> {
        Ok(if self.pretty {
            serde_json::to_string_pretty(value)?
        } else {
            serde_json::to_string(value)?
        })
    }
}

fn load_scheme(path: &Path) -> anyhow::Result<CoefficientScheme> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    CoefficientScheme::from_json(&text)
        .with_context(|| format!("loading scheme {}", path.display()))
}

fn cmd_rates(args: RatesArgs, out: &Output) -> anyhow::Result<u8> {
    let rows = match args.sweep {
        Some(ranges) => {
            let get = |n: char| {
                ranges
                    .iter()
                    .find(|(k, _)| *k == n)
                    .map(|(_, r)| r.clone())
                    .with_context(|| format!("--sweep needs a range for {n}"))
            };
            rate_table(get('U')?, get('V')?, get('T')?)?
        }
        None => {
            let (u, v, t) = (
                args.u.unwrap_or(0),
                args.v.unwrap_or(0),
                args.t.unwrap_or(0),
            );
            vec![RateRow::for_config(&HsaConfig::new(u, v, t)?)?]
        }
    };
    let mut buf = Vec::new();
    if out.json {
        buf.extend(out.json(&rows)?.into_bytes());
        buf.push(b'\n');
    } else {
        write_rate_csv(&rows, &mut buf)?;
    }
    match args.out {
        Some(path) => {
            fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{}", String::from_utf8(buf)?),
    }
    Ok(exit::OK)
}

fn cmd_build(args: BuildArgs, out: &Output) -> anyhow::Result<u8> {
    let cfg = args.shape.config()?;
    let scheme = if args.force_infeasible {
        build_insecure_baseline(&cfg, args.q)?
    } else if args.baseline {
        build_baseline(&cfg, args.q)?
    } else {
        build_scheme(&cfg, args.q)?
    };
    fs::write(&args.out, scheme.to_json(true)? + "\n")
        .with_context(|| format!("writing {}", args.out.display()))?;
    let summary = json!({
        "kind": scheme.kind().as_str(),
        "q": scheme.field().q(),
        "gamma": scheme.params().gamma,
        "n_source": scheme.n_source(),
        "label": scheme.label(),
        "out": args.out.display().to_string(),
    });
    if out.json {
        println!("{}", out.json(&summary)?);
    } else {
        let gamma = scheme
            .params()
            .gamma
            .map_or("-".to_string(), |g| g.to_string());
        println!(
            "{} scheme for {cfg}: q={} gamma={gamma} n_source={} -> {}",
            scheme.kind().as_str(),
            scheme.field().q(),
            scheme.n_source(),
            args.out.display()
        );
        if let Some(label) = scheme.label() {
            println!("label: {label}");
        }
    }
    Ok(exit::OK)
}

fn cmd_simulate(args: SimulateArgs, seed: u64, out: &Output) -> anyhow::Result<u8> {
    let scheme = load_scheme(&args.scheme)?;
    let round = sample_round(&scheme, args.l, seed)?;
    let transcript = run_round(&scheme, &round.inputs, &round.keys)?;
    let truth = round.inputs.total(&scheme);
    let rates = measure_rates(&transcript);
    if let Some(path) = &args.transcript {
        fs::write(path, transcript.to_json(&scheme, true)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let correct = transcript.decoded == truth;
    if out.json {
        let report = json!({
            "scheme_ref": scheme.descriptor(),
            "L": args.l,
            "seed": seed,
            "decoded": transcript.decoded,
            "truth": truth,
            "correct": correct,
            "rates": {
                "R_X": rates.r_x(), "R_Y": rates.r_y(), "R_Z": rates.r_z(), "R_Zsigma": rates.r_z_sigma(),
            },
        });
        println!("{}", out.json(&report)?);
    } else {
        println!("scheme:  {}", scheme.descriptor());
        println!("decoded: {:?}", transcript.decoded);
        println!("truth:   {truth:?}");
        println!(
            "rates:   R_X={} R_Y={} R_Z={} R_Zsigma={}",
            rates.r_x(),
            rates.r_y(),
            rates.r_z(),
            rates.r_z_sigma()
        );
    }
    Ok(if correct { exit::OK } else { exit::CORRUPT })
}

fn cmd_audit(args: AuditArgs, out: &Output) -> anyhow::Result<u8> {
    let scheme = load_scheme(&args.scheme)?;
    let report = audit_with(&scheme, scheme.cfg().t, args.budget)?;
    let exact = if args.exact {
        Some(exact_audit(&scheme, args.q_cap)?)
    } else {
        None
    };
    let exact_ok = exact
        .as_ref()
        .is_none_or(|checks| checks.iter().all(|c| c.verdict.is_independent()));
    if out.json {
        let mut value = serde_json::to_value(&report)?;
        if let Some(checks) = &exact {
            value["exact"] = serde_json::to_value(checks)?;
            value["exact_ok"] = json!(exact_ok);
        }
        println!("{}", out.json(&value)?);
    } else {
        println!("scheme:    {}", scheme.descriptor());
        println!("checks:    {}", report.checks_performed);
        println!("relay_ok:  {}", report.relay_ok);
        println!("server_ok: {}", report.server_ok);
        for v in &report.violations {
            let relay = v
                .relay
                .map_or("server".to_string(), |u| format!("relay {u}"));
            let members: Vec<String> = v
                .collusion
                .members()
                .iter()
                .map(|w| format!("({w})"))
                .collect();
            println!(
                "violation: {relay} colluding with {{{}}} rank {} < {}",
                members.join(" "),
                v.observed_rank,
                v.required_rank
            );
        }
        if let Some(checks) = &exact {
            let failed: Vec<_> = checks
                .iter()
                .filter(|c| !c.verdict.is_independent())
                .collect();
            println!(
                "exact:     {}/{} checks independent",
                checks.len() - failed.len(),
                checks.len()
            );
            for c in failed {
                if let Verdict::Dependent { witness } = &c.verdict {
                    println!(
                        "dependent: {:?} colluding with {:?}: view {:?} inputs {:?}",
                        c.mode,
                        c.collusion.members(),
                        witness.view,
                        witness.inputs
                    );
                }
            }
        }
    }
    Ok(if report.is_clean() && exact_ok {
        exit::OK
    } else {
        exit::INSECURE
    })
}

fn cmd_attack(args: AttackArgs, seed: u64, out: &Output) -> anyhow::Result<u8> {
    let scheme = load_scheme(&args.scheme)?;
    if args.rounds == 0 {
        bail!(HsaError::InvalidArgument(
            "--rounds must be at least 1".into()
        ));
    }
    let mut successes = 0u64;
    let mut last_recovered = Vec::new();
    for r in 0..args.rounds {
        let mut round = sample_round(&scheme, args.l, seed.wrapping_add(r))?;
        if args.zero_inputs {
            round.inputs = RoundInputs {
                w: vec![vec![0; args.l]; scheme.cfg().users()],
                ..round.inputs
            };
        }
        let transcript = run_round(&scheme, &round.inputs, &round.keys)?;
        let outcome = infeasibility_attack(&scheme, &transcript);
        successes += u64::from(outcome.success);
        last_recovered = outcome.recovered;
    }
    let colluders = attack_collusion_set(scheme.cfg());
    if out.json {
        let report = json!({
            "scheme_ref": scheme.descriptor(),
            "colluders": colluders,
            "rounds": args.rounds,
            "successes": successes,
            "success_rate": successes as f64 / args.rounds as f64,
            "last_recovered": last_recovered,
        });
        println!("{}", out.json(&report)?);
    } else {
        println!("scheme:    {}", scheme.descriptor());
        println!(
            "colluders: relay 1 with {} users of clusters 2..={}",
            colluders.len(),
            scheme.cfg().u
        );
        println!("recovered: {successes}/{} rounds", args.rounds);
        println!("last:      {last_recovered:?}");
    }
    Ok(exit::OK)
}

fn cmd_compare(shape: Shape, out: &Output) -> anyhow::Result<u8> {
    let cfg = shape.config()?;
    cfg.ensure_feasible()?;
    let row = RateRow::for_config(&cfg)?;
    let optimal = row.r_z_sigma.context("feasible row without a rate")?;
    let gap = row.gap().context("feasible row without a gap")?;
    if out.json {
        let value = json!({
            "U": cfg.u, "V": cfg.v, "T": cfg.t,
            "optimal": optimal,
            "baseline": row.baseline,
            "gap": gap,
            "active_branch": row.active_branch,
        });
        println!("{}", out.json(&value)?);
    } else {
        println!(
            "{:>3} {:>3} {:>3} {:>8} {:>9} {:>4}",
            "U", "V", "T", "optimal", "baseline", "gap"
        );
        println!(
            "{:>3} {:>3} {:>3} {:>8} {:>9} {:>4}",
            cfg.u, cfg.v, cfg.t, optimal, row.baseline, gap
        );
    }
    Ok(exit::OK)
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    let Some(hsa) = err.chain().find_map(|e| e.downcast_ref::<HsaError>()) else {
        return exit::FAILURE;
    };
    match hsa {
        HsaError::InvalidConfig(_)
        | HsaError::InvalidArgument(_)
        | HsaError::NotPrime(_)
        | HsaError::ModulusTooLarge(_)
        | HsaError::SearchExhausted { .. } => exit::DOMAIN,
        HsaError::Infeasible { .. } => exit::INFEASIBLE,
        HsaError::Format(_)
        | HsaError::CorrectnessViolation(_)
        | HsaError::DimensionMismatch(_)
        | HsaError::NotSquare { .. }
        | HsaError::ZeroInverse => exit::CORRUPT,
        HsaError::BudgetExceeded { .. } => exit::BUDGET,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = Output {
        json: cli.json,
        pretty: cli.pretty,
    };
    let result = match cli.command {
        Command::Rates(a) => cmd_rates(a, &out),
        Command::Build(a) => cmd_build(a, &out),
        Command::Simulate(a) => cmd_simulate(a, cli.seed, &out),
        Command::Audit(a) => cmd_audit(a, &out),
        Command::Attack(a) => cmd_attack(a, cli.seed, &out),
        Command::Compare(s) => cmd_compare(s, &out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
