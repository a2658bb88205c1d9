//! Command-line front end: simulate, analyze, stabilize, PLOB curves and
//! parameter optimization, all file-based and replayable.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use tfqkd::analysis::{analyze_tally, plob_skc0, AnalysisConfig, TallyAnalysis};
use tfqkd::channel::PhaseNoiseModel;
use tfqkd::optimizer::{optimize, SearchSpace};
use tfqkd::params::{
    load_link, load_params, save_params, validate_with_tolerance, LinkConfig,
    SNS_CONSTRAINT_DEFAULT_TOL,
};
use tfqkd::protocol::{ez_before_aopp, load_tally, run_simulation, xqber, XClass};
use tfqkd::stabilizer::{
    compensation_histogram, estimate_frequency_offset, residual_std, simulate_lock, PidConfig,
};
use tfqkd::Error;

const FIXTURE_DIR_ENV: &str = "TFQKD_FIXTURE_DIR";

#[derive(Parser)]
#[command(name = "tfqkd", version, about = "Twin-field QKD simulation and analysis toolkit")]
struct Cli {
    /// RNG seed for stochastic commands.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Source-constraint tolerance used when validating parameters.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Subcommand)]
enum Command {
    /// Run the decoy/pairing/key-rate pipeline on a detection tally.
    Analyze {
        #[arg(long)]
        tally: PathBuf,
        #[arg(long)]
        params: PathBuf,
        /// JSON file with externally certified {"n1_prime", "e1ph_prime"}.
        #[arg(long)]
        aopp_external: Option<PathBuf>,
        /// Total link attenuation in dB for the PLOB benchmark column.
        #[arg(long)]
        total_db: Option<f64>,
        /// Report output path (JSON).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo protocol run producing a tally file.
    Simulate {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        link: PathBuf,
        #[arg(long)]
        n_slots: u64,
        #[arg(long, default_value_t = 0.968)]
        visibility: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Phase-lock simulation producing a compensation trace CSV.
    Stabilize {
        /// Phase-noise model JSON ({"delta_nu_hz", "fibre_rate_std_hz", ...}).
        #[arg(long)]
        noise: PathBuf,
        /// PID configuration JSON; defaults to the calibrated gains.
        #[arg(long)]
        pid: Option<PathBuf>,
        #[arg(long)]
        duration_s: f64,
        /// Also write a compensation-rate histogram CSV with this bin width.
        #[arg(long)]
        histogram_bin_hz: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeaterless bound curve over fibre lengths.
    Plob {
        /// Comma-separated lengths in km (alternative to --start/--stop).
        #[arg(long)]
        lengths: Option<String>,
        #[arg(long)]
        start_km: Option<f64>,
        #[arg(long)]
        stop_km: Option<f64>,
        #[arg(long, default_value_t = 10.0)]
        step_km: f64,
        #[arg(long, default_value_t = 0.168)]
        coeff_db_per_km: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Source-parameter search for a given link.
    Optimize {
        #[arg(long)]
        link: PathBuf,
        /// Search-space JSON; defaults to the built-in space.
        #[arg(long)]
        space: Option<PathBuf>,
        #[arg(long)]
        n_tot: u64,
        #[arg(long)]
        out: PathBuf,
        /// Objective-trace CSV path (default: <out> with .trace.csv).
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    inputs: Vec<String>,
    seed: u64,
    version: String,
    timestamp_unix_s: u64,
    /// Output path -> SHA-256 of its bytes.
    outputs: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct ExternalAopp {
    n1_prime: f64,
    e1ph_prime: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 = validation / input problem, 3 = degenerate analysis.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Degenerate(_)
        | Error::ZeroDenominator(_)
        | Error::MissingRate(_)
        | Error::NoConvergence(_)
        | Error::TraceTooShort { .. } => 3,
        _ => 2,
    }
}

/// Fall back to the fixture directory for inputs that do not resolve as given.
fn resolve(path: &Path) -> PathBuf {
    if path.exists() {
        return path.to_path_buf();
    }
    if let Ok(dir) = std::env::var(FIXTURE_DIR_ENV) {
        let candidate = Path::new(&dir).join(path);
        if candidate.exists() {
            return candidate;
        }
    }
    path.to_path_buf()
}

fn run(cli: &Cli) -> tfqkd::Result<()> {
    match &cli.command {
        Command::Analyze { tally, params, aopp_external, total_db, out } => {
            cmd_analyze(cli, tally, params, aopp_external.as_deref(), *total_db, out.as_deref())
        }
        Command::Simulate { params, link, n_slots, visibility, out } => {
            cmd_simulate(cli, params, link, *n_slots, *visibility, out)
        }
        Command::Stabilize { noise, pid, duration_s, histogram_bin_hz, out } => {
            cmd_stabilize(cli, noise, pid.as_deref(), *duration_s, *histogram_bin_hz, out)
        }
        Command::Plob { lengths, start_km, stop_km, step_km, coeff_db_per_km, out } => {
            cmd_plob(cli, lengths.as_deref(), *start_km, *stop_km, *step_km, *coeff_db_per_km, out)
        }
        Command::Optimize { link, space, n_tot, out, trace_out } => {
            cmd_optimize(cli, link, space.as_deref(), *n_tot, out, trace_out.as_deref())
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> tfqkd::Result<T> {
    let path = resolve(path);
    let text = std::fs::read_to_string(&path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

fn write_output(path: &Path, bytes: &[u8], outputs: &mut BTreeMap<String, String>) -> tfqkd::Result<()> {
    std::fs::write(path, bytes)?;
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest: String = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    outputs.insert(path.display().to_string(), digest);
    Ok(())
}

fn write_manifest(
    cli: &Cli,
    command: &str,
    inputs: &[&Path],
    outputs: BTreeMap<String, String>,
    anchor: &Path,
) -> tfqkd::Result<()> {
    let manifest = RunManifest {
        command: command.to_string(),
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        seed: cli.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default().as_secs(),
        outputs,
    };
    let path = anchor.with_extension("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(path, text)?;
    Ok(())
}

fn validate_params(cli: &Cli, params: &tfqkd::params::ProtocolParams) -> tfqkd::Result<()> {
    let tol = cli.tolerance.unwrap_or(SNS_CONSTRAINT_DEFAULT_TOL);
    let report = validate_with_tolerance(params, tol);
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if !report.violations.is_empty() {
        return Err(Error::InvalidInput(report.violations.join("; ")));
    }
    Ok(())
}

fn print_report(cli: &Cli, analysis: &TallyAnalysis) {
    match cli.format {
        Format::Json => {
            println!("{}", serde_json::to_string_pretty(&analysis.report).expect("serializes"))
        }
        Format::Table => {
            let r = &analysis.report;
            println!("{:<24} {:.4e}", "SKR (bit/signal)", r.skr_per_signal);
            println!("{:<24} {:.2}", "SKR (bit/s)", r.skr_per_second);
            println!("{:<24} {:.2}%", "E_z before pairing", analysis.ez_before * 100.0);
            println!("{:<24} {:.2}%", "e_z after pairing", r.ez_prime * 100.0);
            println!("{:<24} {:.4e}", "n1 lower bound", analysis.bounds.n1_lower);
            println!("{:<24} {:.4}", "e1ph upper bound", analysis.bounds.e1ph_upper);
            let source = format!("{:?}", r.n1_prime_source).to_lowercase();
            println!("{:<24} {:.4e} ({source})", "n1' after pairing", r.n1_prime);
            if let (Some(skc0), Some(ratio)) = (r.skc0_per_signal, r.ratio_skr_skc0) {
                println!("{:<24} {:.4e}", "SKC0 (bit/signal)", skc0);
                println!("{:<24} {:.2}", "SKR / SKC0", ratio);
            }
        }
    }
}

fn cmd_analyze(
    cli: &Cli,
    tally_path: &Path,
    params_path: &Path,
    external_path: Option<&Path>,
    total_db: Option<f64>,
    out: Option<&Path>,
) -> tfqkd::Result<()> {
    let mut tally = load_tally(resolve(tally_path))?;
    let params = load_params(resolve(params_path))?;
    validate_params(cli, &params)?;
    if tally.total_sent() == 0 && tally.n_tot > 0 {
        eprintln!("note: sent counts reconstructed from the selection probabilities");
        tally.derive_sent_counts(&params);
    }
    let mut cfg = AnalysisConfig { total_attenuation_db: total_db, ..AnalysisConfig::default() };
    if let Some(path) = external_path {
        let ext: ExternalAopp = read_json(path)?;
        cfg.external_after_aopp = Some((ext.n1_prime, ext.e1ph_prime));
    }
    let analysis = analyze_tally(&tally, &params, &cfg)?;
    print_report(cli, &analysis);
    if let Some(out) = out {
        let mut outputs = BTreeMap::new();
        let json = serde_json::to_string_pretty(&analysis.report).expect("serializes");
        write_output(out, json.as_bytes(), &mut outputs)?;
        let mut inputs = vec![tally_path, params_path];
        inputs.extend(external_path);
        write_manifest(cli, "analyze", &inputs, outputs, out)?;
    }
    Ok(())
}

fn cmd_simulate(
    cli: &Cli,
    params_path: &Path,
    link_path: &Path,
    n_slots: u64,
    visibility: f64,
    out: &Path,
) -> tfqkd::Result<()> {
    let params = load_params(resolve(params_path))?;
    let link = load_link(resolve(link_path))?;
    validate_params(cli, &params)?;
    if !(0.0..=1.0).contains(&visibility) {
        return Err(Error::InvalidInput(format!("visibility {visibility} outside [0, 1]")));
    }
    if n_slots == 0 {
        eprintln!("warning: n_slots = 0, writing an empty tally");
    }
    let tally = run_simulation(&params, &link, visibility, n_slots, cli.seed);
    let mut outputs = BTreeMap::new();
    let json = tfqkd::protocol::tally_to_json(&tally);
    write_output(out, json.as_bytes(), &mut outputs)?;

    let summary = serde_json::json!({
        "n_slots": tally.n_tot,
        "ez_before_aopp": ez_before_aopp(&tally).ok(),
        "qber_x11": xqber(&tally, XClass::X11).ok(),
        "qber_x22": xqber(&tally, XClass::X22).ok(),
    });
    match cli.format {
        Format::Json => println!("{summary}"),
        Format::Table => {
            println!("{:<24} {}", "slots", tally.n_tot);
            if let Ok(ez) = ez_before_aopp(&tally) {
                println!("{:<24} {:.2}%", "E_z before pairing", ez * 100.0);
            }
            if let Ok(q) = xqber(&tally, XClass::X11) {
                println!("{:<24} {:.2}%", "QBER (X11)", q * 100.0);
            }
        }
    }
    write_manifest(cli, "simulate", &[params_path, link_path], outputs, out)?;
    Ok(())
}

fn cmd_stabilize(
    cli: &Cli,
    noise_path: &Path,
    pid_path: Option<&Path>,
    duration_s: f64,
    histogram_bin_hz: Option<f64>,
    out: &Path,
) -> tfqkd::Result<()> {
    let noise: PhaseNoiseModel = read_json(noise_path)?;
    let pid: PidConfig = match pid_path {
        Some(path) => read_json(path)?,
        None => PidConfig::default(),
    };
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(cli.seed);
    let trace = simulate_lock(&noise, &pid, duration_s, &mut rng)?;
    let mut outputs = BTreeMap::new();
    write_output(out, trace.to_csv().as_bytes(), &mut outputs)?;
    if let Some(bin) = histogram_bin_hz {
        let hist = compensation_histogram(&trace, bin, 0.01)?;
        let path = out.with_extension("hist.csv");
        write_output(&path, hist.to_csv().as_bytes(), &mut outputs)?;
    }
    let offset = estimate_frequency_offset(&trace, (duration_s / 2.0).min(0.1));
    let summary = serde_json::json!({
        "duration_s": duration_s,
        "residual_std_rad": residual_std(&trace),
        "frequency_offset_hz": offset.ok(),
    });
    let summary_path = out.with_extension("summary.json");
    write_output(&summary_path, summary.to_string().as_bytes(), &mut outputs)?;
    match cli.format {
        Format::Json => println!("{summary}"),
        Format::Table => {
            println!("{:<24} {:.4} rad", "residual std", residual_std(&trace));
            if let Ok(hz) = estimate_frequency_offset(&trace, (duration_s / 2.0).min(0.1)) {
                println!("{:<24} {:.1} Hz", "offset estimate", hz);
            }
        }
    }
    let mut inputs = vec![noise_path];
    inputs.extend(pid_path);
    write_manifest(cli, "stabilize", &inputs, outputs, out)?;
    Ok(())
}

fn cmd_plob(
    _cli: &Cli,
    lengths: Option<&str>,
    start_km: Option<f64>,
    stop_km: Option<f64>,
    step_km: f64,
    coeff: f64,
    out: &Path,
) -> tfqkd::Result<()> {
    let lengths: Vec<f64> = match (lengths, start_km, stop_km) {
        (Some(list), _, _) => list
            .split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|e| Error::InvalidInput(format!(
                    "bad length '{s}': {e}"
                )))
            })
            .collect::<tfqkd::Result<_>>()?,
        (None, Some(start), Some(stop)) => {
            if step_km <= 0.0 || stop < start {
                return Err(Error::InvalidInput("need start <= stop and positive step".into()));
            }
            let n = ((stop - start) / step_km).floor() as usize + 1;
            (0..n).map(|i| start + i as f64 * step_km).collect()
        }
        _ => return Err(Error::InvalidInput("give --lengths or --start-km/--stop-km".into())),
    };
    if lengths.iter().any(|&l| l < 0.0) || coeff < 0.0 {
        return Err(Error::InvalidInput("lengths and coefficient must be nonnegative".into()));
    }
    let mut csv = String::from("length_km,total_db,skc0_per_signal\n");
    for &l in &lengths {
        let skc0 = plob_skc0(l, coeff);
        // 0 km means a lossless channel: unbounded capacity sentinel.
        let value = if skc0.is_finite() { format!("{skc0:.8e}") } else { "inf".to_string() };
        csv.push_str(&format!("{:.4},{:.4},{}\n", l, l * coeff, value));
    }
    let mut outputs = BTreeMap::new();
    write_output(out, csv.as_bytes(), &mut outputs)?;
    write_manifest(_cli, "plob", &[], outputs, out)?;
    Ok(())
}

fn cmd_optimize(
    cli: &Cli,
    link_path: &Path,
    space_path: Option<&Path>,
    n_tot: u64,
    out: &Path,
    trace_out: Option<&Path>,
) -> tfqkd::Result<()> {
    let link: LinkConfig = load_link(resolve(link_path))?;
    let space: SearchSpace = match space_path {
        Some(path) => read_json(path)?,
        None => SearchSpace::default(),
    };
    let outcome = optimize(&link, &space, n_tot)?;
    let mut outputs = BTreeMap::new();
    save_params(&outcome.params, out)?;
    let bytes = std::fs::read(out)?;
    write_output(out, &bytes, &mut outputs)?;
    let trace_path = trace_out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.with_extension("trace.csv"));
    write_output(&trace_path, outcome.trace_csv().as_bytes(), &mut outputs)?;
    match cli.format {
        Format::Json => println!(
            "{}",
            serde_json::json!({
                "objective": outcome.objective,
                "grid_objective": outcome.grid_objective,
                "evaluations": outcome.evaluations,
            })
        ),
        Format::Table => {
            println!("{:<24} {:.4e}", "objective (bit/signal)", outcome.objective);
            println!("{:<24} {}", "evaluations", outcome.evaluations);
        }
    }
    let mut inputs = vec![link_path];
    inputs.extend(space_path);
    write_manifest(cli, "optimize", &inputs, outputs, out)?;
    Ok(())
}
