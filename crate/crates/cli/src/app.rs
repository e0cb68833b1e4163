use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use peer_ar::simulate::{run_mc, Comparator, Dgp, McConfig, McResult, Network};
use peer_ar::{
    ar_no_fe, default_peer_structure, tsls_peer_test, ArOptions, FeStatistics, IvSpec, Panel,
    PeerStructure, TestResult, Variant,
};

use crate::io::{load_adjacency, load_panel, load_peers, LoadOptions};
use crate::rolling::{rolling_ar, RollingSpec, WindowOutcome};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "peer-ar", version, about = "Anderson-Rubin tests for peer effects in panel data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the AR test on a panel CSV.
    Test(TestArgs),
    /// Run a Monte Carlo experiment and write one CSV row per test variant.
    Simulate(SimulateArgs),
    /// Rolling-window p-values of the fixed-effects test.
    Rolling(RollingArgs),
    /// TSLS t-test of a homogeneous peer effect under a given adjacency matrix.
    Tsls(TslsArgs),
}

#[derive(Debug, Args)]
struct PanelArgs {
    /// Long-format CSV with columns unit, time, y, x1..xL.
    csv: PathBuf,
    #[arg(long, default_value = "unit")]
    unit_col: String,
    #[arg(long, default_value = "time")]
    time_col: String,
    #[arg(long, default_value = "y")]
    y_col: String,
    /// Comma-separated regressor columns (default: every x<k> column).
    #[arg(long, value_delimiter = ',')]
    x: Option<Vec<String>>,
    /// Order periods numerically rather than lexically.
    #[arg(long)]
    time_numeric: bool,
    /// Compute y from box-score columns (three_pt, two_pt, ft, reb, stl,
    /// blk, mfg, mft, to, mins).
    #[arg(long)]
    wins_produced: bool,
}

impl PanelArgs {
    fn load(&self) -> Result<Panel, CliError> {
        load_panel(
            &self.csv,
            &LoadOptions {
                unit_col: self.unit_col.clone(),
                time_col: self.time_col.clone(),
                y_col: self.y_col.clone(),
                x_cols: self.x.clone(),
                time_numeric: self.time_numeric,
                wins_produced: self.wins_produced,
            },
        )
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum IvArg {
    Full,
    Summed,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    Jl,
    Din,
    Ag,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Jl => Variant::FeJl,
            VariantArg::Din => Variant::FeDin,
            VariantArg::Ag => Variant::FeAg,
        }
    }
}

#[derive(Debug, Args)]
struct TestSpecArgs {
    /// Instrument layout; by default Full when it leaves fewer instruments
    /// than observations, Summed otherwise.
    #[arg(long, value_enum)]
    iv: Option<IvArg>,
    #[arg(long, value_enum, default_value = "jl")]
    variant: VariantArg,
    #[arg(long, default_value_t = 0.05)]
    level: f64,
    /// CSV of directed pairs (unit, peer) by unit label; default: everyone.
    #[arg(long)]
    peers: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TestArgs {
    #[command(flatten)]
    panel: PanelArgs,
    #[command(flatten)]
    spec: TestSpecArgs,
    /// Include individual and time fixed effects (default).
    #[arg(long, overrides_with = "no_fe")]
    fe: bool,
    /// Jackknife statistic without fixed effects.
    #[arg(long)]
    no_fe: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DgpArg {
    Normal,
    Lognormal,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NetworkArg {
    Fixed,
    Uniform,
    Circular,
    None,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MisspecArg {
    None,
    RowNormalized,
    Circle,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 30)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    t: usize,
    #[arg(long, default_value_t = 5000)]
    reps: usize,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    rho: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    beta: f64,
    /// Share of ordered dyads with a nonzero coefficient.
    #[arg(long, default_value_t = 0.3)]
    nd: f64,
    #[arg(long, value_enum, default_value = "normal")]
    dgp: DgpArg,
    #[arg(long, value_enum, default_value = "fixed")]
    network: NetworkArg,
    /// Ring offset of the true circular network.
    #[arg(long, default_value_t = 1)]
    m_true: usize,
    /// Adjacency used by the TSLS comparator.
    #[arg(long, value_enum, default_value = "none")]
    misspec: MisspecArg,
    /// Ring offset of the comparator circle.
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long, default_value_t = 0.05)]
    level: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl SimulateArgs {
    fn config(&self) -> McConfig {
        McConfig {
            n: self.n,
            t: self.t,
            reps: self.reps,
            rho: self.rho,
            beta: self.beta,
            nd: self.nd,
            dgp: match self.dgp {
                DgpArg::Normal => Dgp::Normal,
                DgpArg::Lognormal => Dgp::LogNormal,
            },
            network: match self.network {
                NetworkArg::Fixed => Network::RandomGraphFixedRho,
                NetworkArg::Uniform => Network::RandomGraphUniformRho,
                NetworkArg::Circular => Network::Circular { m_true: self.m_true },
                NetworkArg::None => Network::None,
            },
            misspec: match self.misspec {
                MisspecArg::None => None,
                MisspecArg::RowNormalized => Some(Comparator::RowNormalizedIndicator),
                MisspecArg::Circle => Some(Comparator::CircleNeighbor { m: self.m }),
            },
            level: self.level,
            seed: self.seed,
            keep_log: false,
        }
    }
}

#[derive(Debug, Args)]
struct RollingArgs {
    #[command(flatten)]
    panel: PanelArgs,
    #[command(flatten)]
    spec: TestSpecArgs,
    #[arg(long, default_value_t = 50)]
    window: usize,
    #[arg(long, default_value_t = 1)]
    step: usize,
    #[arg(long)]
    json: bool,
    /// Output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TslsArgs {
    #[command(flatten)]
    panel: PanelArgs,
    /// n x n CSV grid without header, rows in the panel's unit order.
    #[arg(long)]
    adjacency: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    level: f64,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Serialize)]
struct TestReport {
    variant: String,
    iv: String,
    n: usize,
    t: usize,
    n_obs: usize,
    n_star: usize,
    statistic: f64,
    quad_form: f64,
    k_star: usize,
    l: usize,
    lambda: f64,
    phi_hat: f64,
    sigma2_hat: f64,
    kappa_hat: Option<f64>,
    p_normal: f64,
    p_chisq: Option<f64>,
    chisq_statistic: Option<f64>,
    chisq_critical: Option<f64>,
    level: f64,
    decision: String,
    max_leverage: f64,
    warnings: Vec<String>,
}

impl TestReport {
    fn new(p: &Panel, iv: &str, r: &TestResult, mut warnings: Vec<String>) -> Self {
        warnings.extend(r.warnings.iter().cloned());
        Self {
            variant: r.variant.to_string(),
            iv: iv.to_string(),
            n: p.n,
            t: p.t,
            n_obs: r.n_obs,
            n_star: r.n_star,
            statistic: r.statistic,
            quad_form: r.quad_form,
            k_star: r.k,
            l: r.l,
            lambda: r.lambda,
            phi_hat: r.phi_hat,
            sigma2_hat: r.sigma2_hat,
            kappa_hat: r.kurtosis_hat,
            p_normal: r.p_normal,
            p_chisq: r.p_chisq,
            chisq_statistic: r.chisq.map(|c| c.transformed),
            chisq_critical: r.chisq.map(|c| c.critical),
            level: r.level,
            decision: decision(r.reject()),
            max_leverage: r.max_leverage,
            warnings,
        }
    }
}

#[derive(Debug, Serialize)]
struct TslsReport {
    rho_hat: f64,
    se_rho: f64,
    t_stat: f64,
    p_value: f64,
    beta_hat: Vec<f64>,
    level: f64,
    decision: String,
}

#[derive(Debug, Serialize)]
struct RollingRow {
    start: usize,
    end: usize,
    status: &'static str,
    statistic: Option<f64>,
    p_chisq: Option<f64>,
    k_star: Option<usize>,
    reason: Option<String>,
}

fn decision(reject: bool) -> String {
    if reject { "reject" } else { "fail to reject" }.to_string()
}

/// Renders a flat JSON object as `key: value` lines with the same numbers.
fn human(value: &Value) -> String {
    let mut out = String::new();
    if let Value::Object(map) = value {
        for (k, v) in map {
            let text = match v {
                Value::Null => "NA".to_string(),
                Value::String(s) => s.clone(),
                Value::Number(num) => match num.as_u64() {
                    Some(u) => u.to_string(),
                    None => num.as_f64().map_or_else(|| num.to_string(), |f| f.to_string()),
                },
                Value::Array(items) if items.is_empty() => "none".to_string(),
                Value::Array(items) => items
                    .iter()
                    .map(|i| match i {
                        Value::String(s) => s.clone(),
                        Value::Number(num) => num
                            .as_f64()
                            .map_or_else(|| num.to_string(), |f| f.to_string()),
                        other => other.to_string(),
                    })
                    .collect::<Vec<_>>()
                    .join("; "),
                other => other.to_string(),
            };
            out.push_str(&format!("{k}: {text}\n"));
        }
    }
    out
}

fn emit<T: Serialize>(report: &T, json: bool) -> Result<(), CliError> {
    let value = serde_json::to_value(report)?;
    let mut stdout = std::io::stdout().lock();
    if json {
        writeln!(stdout, "{}", serde_json::to_string_pretty(&value)?)?;
    } else {
        write!(stdout, "{}", human(&value))?;
    }
    Ok(())
}

fn peers_for(p: &Panel, path: Option<&Path>) -> Result<PeerStructure, CliError> {
    match path {
        Some(path) => load_peers(path, p),
        None => Ok(default_peer_structure(p.n)?),
    }
}

/// Full when `L·|dyads| + L` stays below the effective sample size,
/// Summed otherwise.
fn choose_iv(arg: Option<IvArg>, p: &Panel, peers: &PeerStructure, fe: bool) -> (IvSpec, String, Vec<String>) {
    match arg {
        Some(IvArg::Full) => (IvSpec::Full, "full".into(), Vec::new()),
        Some(IvArg::Summed) => (IvSpec::Summed, "summed".into(), Vec::new()),
        None => {
            let l = p.n_regressors();
            let size = if fe { p.n_star() } else { p.n_obs() };
            if l * peers.n_dyads() + l < size {
                (IvSpec::Full, "full".into(), Vec::new())
            } else {
                let msg = format!(
                    "full instrument set ({} columns) is not below the sample size {size}; using summed",
                    l * peers.n_dyads() + l
                );
                eprintln!("note: {msg}");
                (IvSpec::Summed, "summed".into(), vec![msg])
            }
        }
    }
}

fn check_level(level: f64) -> Result<(), CliError> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("level {level} outside (0, 1)")))
    }
}

fn run_test(args: &TestArgs) -> Result<(), CliError> {
    check_level(args.spec.level)?;
    let p = args.panel.load()?;
    let peers = peers_for(&p, args.spec.peers.as_deref())?;
    let fe = !args.no_fe;
    let (iv, iv_name, notes) = choose_iv(args.spec.iv, &p, &peers, fe);
    let result = if fe {
        let opts = ArOptions {
            level: args.spec.level,
            ..ArOptions::default()
        };
        let stats = FeStatistics::compute(&p, &peers, &iv, &opts)?;
        stats.result(args.spec.variant.into())?
    } else {
        let mut r = ar_no_fe(&p, &peers, &iv)?;
        r.level = args.spec.level;
        r.reject_normal = r.p_normal <= args.spec.level;
        r
    };
    emit(&TestReport::new(&p, &iv_name, &result, notes), args.json)
}

fn run_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let cfg = args.config();
    let res: McResult = run_mc(&cfg)?;
    let sink: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(std::fs::File::create(path)?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(McResult::csv_header())?;
    for row in res.csv_rows(&cfg) {
        w.write_record(&row)?;
    }
    w.flush()?;
    eprintln!(
        "completed {} replications ({} failed)",
        res.completed, res.failures
    );
    Ok(())
}

fn run_rolling(args: &RollingArgs) -> Result<(), CliError> {
    check_level(args.spec.level)?;
    let p = args.panel.load()?;
    let peers = peers_for(&p, args.spec.peers.as_deref())?;
    let spec = RollingSpec {
        window: args.window,
        step: args.step,
    };
    spec.validate(p.t)?;
    let window_panel = p.periods(0, spec.window)?;
    let (iv, _, _) = choose_iv(args.spec.iv, &window_panel, &peers, true);
    let points = rolling_ar(&p, &peers, spec, &iv, args.spec.variant.into())?;
    let rows: Vec<RollingRow> = points
        .into_iter()
        .map(|pt| match pt.outcome {
            WindowOutcome::Tested {
                statistic,
                p_chisq,
                k_star,
            } => RollingRow {
                start: pt.start,
                end: pt.end,
                status: "tested",
                statistic: Some(statistic),
                p_chisq: Some(p_chisq),
                k_star: Some(k_star),
                reason: None,
            },
            WindowOutcome::Skipped { reason } => RollingRow {
                start: pt.start,
                end: pt.end,
                status: "skipped",
                statistic: None,
                p_chisq: None,
                k_star: None,
                reason: Some(reason),
            },
        })
        .collect();
    let sink: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(std::fs::File::create(path)?),
        None => Box::new(std::io::stdout()),
    };
    if args.json {
        let mut sink = sink;
        writeln!(sink, "{}", serde_json::to_string_pretty(&rows)?)?;
    } else {
        let mut w = csv::Writer::from_writer(sink);
        for row in &rows {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn run_tsls(args: &TslsArgs) -> Result<(), CliError> {
    check_level(args.level)?;
    let p = args.panel.load()?;
    let w = load_adjacency(&args.adjacency)?;
    let r = tsls_peer_test(&p, &w)?;
    emit(
        &TslsReport {
            rho_hat: r.rho_hat,
            se_rho: r.se_rho,
            t_stat: r.t_stat,
            p_value: r.p_value,
            beta_hat: r.beta_hat,
            level: args.level,
            decision: decision(r.p_value <= args.level),
        },
        args.json,
    )
}

/// Parses `argv` (program name first) and runs the subcommand. Returns the
/// process exit code: 0 on success, 2 on invalid input, 3 on numerical
/// failure.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match &cli.command {
        Command::Test(a) => run_test(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Rolling(a) => run_rolling(a),
        Command::Tsls(a) => run_tsls(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn human_lines_follow_json_fields() {
        let v = serde_json::json!({"statistic": 0.1234567890123, "k_star": 20, "p_chisq": null, "warnings": []});
        let text = human(&v);
        assert!(text.contains("statistic: 0.1234567890123\n"));
        assert!(text.contains("k_star: 20\n"));
        assert!(text.contains("p_chisq: NA\n"));
        assert!(text.contains("warnings: none\n"));
    }

    #[test]
    fn usage_errors_exit_with_two() {
        assert_eq!(run_cli(["peer-ar", "test"]), 2);
        assert_eq!(run_cli(["peer-ar", "bogus"]), 2);
        assert_eq!(run_cli(["peer-ar", "--help"]), 0);
    }
}
