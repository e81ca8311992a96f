//! Argument parsing, dispatch and report output for the `rigidlab` binary.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rigidlab::field::parse_rational;
use rigidlab::hadamard::{materialize_hadamard, HadamardSpec};
use rigidlab::oracles::{brute_force_rigidity, cross_validate, min_rank_within, OracleBudget};
use rigidlab::pipelines::{
    high_error_nonrigidity, sym_and_nonrigidity, valiant_nonrigidity, NonRigidityParams, RigidityReport,
    SymmetricFunctionSpec,
};
use rigidlab::reductions::{
    corrupted_sylvester, ip2_rsr, planted_cells, planted_truth_table_factors, rigidity_to_prob_rank, rsr_prob_rank,
    simulate_protocol,
};
use rigidlab::sampler::{
    eq_sampler, estimate_error, ip2, ip2_exact_circuit, ip2_pair_gates, leq_sampler, ltf_ltf_sign_sampler, ltf_sampler,
    search_top_layer, ErrorReport, EstimateMode, LTFSpec, ProbMatrixSampler,
};
use rigidlab::seed::derive_seed;
use rigidlab::{Budget, FieldSpec};
use serde::Serialize;
use serde_json::{json, Value};

pub const ARTIFACT: &str = "rigidlab";
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Version of the report layout documented under `docs/schemas`.
pub const REPORT_SCHEMA: u32 = 1;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] rigidlab::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(rigidlab::Error::Budget { .. }) => EXIT_BUDGET,
            CliError::Core(rigidlab::Error::Invariant(_)) => EXIT_INVARIANT,
            CliError::Core(_) => EXIT_USAGE,
            CliError::Io { .. } => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug, Clone, Serialize)]
#[command(name = "rigidlab", version, about = "Rigidity and probabilistic-rank experiments with exact arithmetic")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Default)]
pub struct OutputArgs {
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Add wall-clock time to the report (makes it non-reproducible).
    #[arg(long, global = true)]
    pub timing: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

fn field_arg(s: &str) -> Result<FieldSpec, String> {
    FieldSpec::from_str(s).map_err(|e| e.to_string())
}

fn rational_arg(s: &str) -> Result<String, String> {
    parse_rational(s).map(|_| s.trim().to_string()).map_err(|e| e.to_string())
}

fn weights_text(s: &str) -> Result<String, String> {
    weights_arg(s).map(|_| s.to_string())
}

fn weights_arg(s: &str) -> Result<Vec<i64>, String> {
    s.split(',').map(|w| w.trim().parse::<i64>().map_err(|_| format!("'{w}' is not an integer weight"))).collect()
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Materialize H_n and report its rank.
    Hadamard(HadamardArgs),
    /// Low-error non-rigidity of H_n by window interpolation and line corrections.
    Valiant(ValiantArgs),
    /// High-error non-rigidity of H_n from a shifted parity polynomial.
    HighError(HighErrorArgs),
    /// Non-rigidity of f(|x AND y|) for a symmetric f.
    SymAnd(SymAndArgs),
    /// Error of a probabilistic-rank sampler.
    ProbRank(ProbRankArgs),
    /// Probabilistic rank of H_n from a corrupted factorization by random shifts.
    Equivalence(EquivalenceArgs),
    /// Probabilistic rank of IP2 through its four-query self-reduction.
    Rsr(RsrArgs),
    /// Shared-randomness protocol runs of a sampler.
    Protocol(ProtocolArgs),
    /// Brute-force rigidity of H_n.
    Oracle(OracleArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct HadamardArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_parser = field_arg, default_value = "F3")]
    pub field: FieldSpec,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ValiantArgs {
    #[arg(long)]
    pub n: usize,
    /// Strictly between 0 and 1/2; decimals and fractions are exact.
    #[arg(long, value_parser = rational_arg, required_unless_present = "full_window")]
    pub eps: Option<String>,
    #[arg(long, value_parser = field_arg, default_value = "F3")]
    pub field: FieldSpec,
    /// Interpolate over every overlap instead (zero error).
    #[arg(long, conflicts_with = "eps")]
    pub full_window: bool,
    /// Recorded only; the construction is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct HighErrorArgs {
    #[arg(long)]
    pub n: usize,
    /// Target error 1/r.
    #[arg(long)]
    pub rank_target: u64,
    #[arg(long, value_parser = field_arg, default_value = "F3")]
    pub field: FieldSpec,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub trials: u64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SymAndArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub rank_target: u64,
    #[arg(long, value_parser = field_arg, default_value = "F3")]
    pub field: FieldSpec,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// parity, majority, constant:<c>, or values:<v0,...,vn>.
    #[arg(long, default_value = "parity")]
    pub function: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Eq,
    Leq,
    Lt,
    Ltf,
    LtfLtf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CircuitKind {
    /// One gate per nonempty subset of the n positions.
    Ip2Exact,
    /// Four gates on 2+2 bits, top layer found by search.
    Ip2Pair,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SamplerArgs {
    #[arg(long, value_enum)]
    pub sampler: SamplerKind,
    /// Input bits per side (eq, leq, lt, and the ip2-exact circuit).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_parser = rational_arg, default_value = "1/4")]
    pub eps: String,
    /// Defaults to F3, or Q for the sign sampler.
    #[arg(long, value_parser = field_arg)]
    pub field: Option<FieldSpec>,
    /// Comma-separated integers, e.g. `1,2,-1`.
    #[arg(long, value_parser = weights_text, allow_hyphen_values = true)]
    pub x_weights: Option<String>,
    #[arg(long, value_parser = weights_text, allow_hyphen_values = true)]
    pub y_weights: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<i64>,
    #[arg(long, value_enum, default_value_t = CircuitKind::Ip2Pair)]
    pub circuit: CircuitKind,
    /// Count a zero sign-sampler output as false.
    #[arg(long)]
    pub zero_is_false: bool,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ProbRankArgs {
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub trials: u64,
    /// Average over the whole randomness domain instead of sampling.
    #[arg(long)]
    pub exhaustive: bool,
    #[arg(long, default_value_t = 1e-6)]
    pub delta: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EquivalenceArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_parser = field_arg, default_value = "F3")]
    pub field: FieldSpec,
    /// Number of corrupted entries, placed from the seed.
    #[arg(long, default_value_t = 3)]
    pub corrupt: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Monte-Carlo trials; all shift pairs are enumerated when omitted.
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long, default_value_t = 1e-6)]
    pub delta: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct RsrArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_parser = field_arg, default_value = "F3")]
    pub field: FieldSpec,
    /// Number of flipped truth-table entries, placed from the seed.
    #[arg(long, default_value_t = 2)]
    pub planted: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub trials: u64,
    #[arg(long, default_value_t = 1e-6)]
    pub delta: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ProtocolArgs {
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long)]
    pub x: usize,
    #[arg(long)]
    pub y: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub trials: u64,
    /// Also write one JSON trace per line to this file.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct OracleArgs {
    /// Brute-force H_n; only n <= 2 is feasible.
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_parser = field_arg, default_value = "F3")]
    pub field: FieldSpec,
    /// Report the rigidity at this rank.
    #[arg(long)]
    pub rank_target: Option<usize>,
    /// Report the least rank within this many edits.
    #[arg(long)]
    pub edits: Option<usize>,
    /// Check both oracles against each other over their full ranges.
    #[arg(long)]
    pub cross_validate: bool,
}

/// Parsed command line plus the entry budget taken from the environment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub cli: Cli,
    pub budget: Budget,
}

/// Parses `argv` (program name first). `budget_env` is the value of
/// `RIGIDLAB_BUDGET`, if set.
pub fn parse_config<I, T>(argv: I, budget_env: Option<&str>) -> Result<ExperimentConfig, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    let budget = match budget_env {
        Some(v) => Budget::new(rigidlab::budget::parse_budget(v).map_err(|e| {
            clap::Error::raw(
                clap::error::ErrorKind::ValueValidation,
                format!("{}: {e}\n", rigidlab::budget::BUDGET_ENV),
            )
        })?),
        None => Budget::default(),
    };
    Ok(ExperimentConfig { cli, budget })
}

/// A command's result: the JSON payload and its CSV table (header first).
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub command: String,
    pub config: Value,
    pub payload: Value,
    pub csv: Vec<Vec<String>>,
    pub wall_time_ms: Option<f64>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Value {
        let mut v = json!({
            "artifact": ARTIFACT,
            "version": ARTIFACT_VERSION,
            "schema": REPORT_SCHEMA,
            "command": self.command,
            "config": self.config,
            "payload": self.payload,
        });
        if let Some(ms) = self.wall_time_ms {
            v["wall_time_ms"] = json!(ms);
        }
        v
    }

    /// Pretty JSON with keys in sorted order.
    pub fn render_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json()).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn render_csv(&self) -> String {
        let mut s = String::new();
        for row in &self.csv {
            let cells: Vec<String> = row.iter().map(|c| csv_cell(c)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.render_json(),
            Format::Csv => self.render_csv(),
        }
    }
}

fn csv_cell(c: &str) -> String {
    if c.contains([',', '"', '\n']) {
        format!("\"{}\"", c.replace('"', "\"\""))
    } else {
        c.to_string()
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn row<I: IntoIterator<Item = T>, T: ToString>(cells: I) -> Vec<String> {
    cells.into_iter().map(|c| c.to_string()).collect()
}

/// Runs the configured command. The report is a pure function of the
/// config except for the optional wall time.
pub fn run(config: &ExperimentConfig) -> CliResult<ExperimentReport> {
    let start = Instant::now();
    let budget = &config.budget;
    let echo = to_value(&config.cli.command);
    let name = echo["command"].as_str().unwrap_or_default().to_string();
    let (payload, csv) = match &config.cli.command {
        Command::Hadamard(a) => hadamard(a, budget)?,
        Command::Valiant(a) => valiant(a, budget)?,
        Command::HighError(a) => high_error(a, budget)?,
        Command::SymAnd(a) => sym_and(a, budget)?,
        Command::ProbRank(a) => prob_rank(a, budget)?,
        Command::Equivalence(a) => equivalence(a, budget)?,
        Command::Rsr(a) => rsr(a, budget)?,
        Command::Protocol(a) => protocol(a)?,
        Command::Oracle(a) => oracle(a)?,
    };
    let wall_time_ms = config.cli.output.timing.then(|| start.elapsed().as_secs_f64() * 1e3);
    Ok(ExperimentReport { command: name, config: echo, payload, csv, wall_time_ms })
}

type Output = (Value, Vec<Vec<String>>);

fn hadamard(a: &HadamardArgs, budget: &Budget) -> CliResult<Output> {
    let spec = HadamardSpec::new(a.n, a.field)?;
    let h = materialize_hadamard(&spec, budget)?;
    let payload = json!({ "n": a.n, "field": a.field, "dim": spec.dim(), "rank": h.rank(), "matrix": h });
    let csv = h.to_csv().lines().map(|l| l.split(',').map(str::to_string).collect()).collect();
    Ok((payload, csv))
}

fn rigidity_csv(r: &RigidityReport) -> Vec<Vec<String>> {
    let mut t = vec![row(["row_diffs", "rows"])];
    for [d, c] in r.row_diff_histogram.iter().flatten() {
        t.push(row([d, c]));
    }
    t
}

fn valiant(a: &ValiantArgs, budget: &Budget) -> CliResult<Output> {
    let params = match &a.eps {
        Some(e) if !a.full_window => NonRigidityParams::new(a.n, parse_rational(e)?, a.field)?,
        _ => NonRigidityParams::full_window(a.n, a.field)?,
    };
    let (_, r) = valiant_nonrigidity(&params, budget)?;
    Ok((to_value(&r), rigidity_csv(&r)))
}

fn high_error(a: &HighErrorArgs, budget: &Budget) -> CliResult<Output> {
    if a.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let mut runs = Vec::new();
    let mut csv = vec![row(["trial", "seed", "monomials", "realized_rank", "total_diffs", "max_row_diffs"])];
    for t in 0..a.trials {
        let seed = derive_seed(a.seed, "high-error", t);
        let (_, r) = high_error_nonrigidity(a.n, a.rank_target, a.field, seed, budget)?;
        let opt = |v: Option<u64>| v.map_or(String::new(), |v| v.to_string());
        csv.push(vec![
            t.to_string(),
            seed.to_string(),
            r.monomials.to_string(),
            r.realized_rank.map_or(String::new(), |v| v.to_string()),
            opt(r.total_diffs),
            opt(r.max_row_diffs),
        ]);
        runs.push((seed, r));
    }
    let diffs: Vec<u64> = runs.iter().filter_map(|(_, r)| r.total_diffs).collect();
    let mean = (diffs.len() == runs.len()).then(|| diffs.iter().sum::<u64>() as f64 / diffs.len() as f64);
    let payload = json!({
        "n": a.n,
        "rank_target": a.rank_target,
        "field": a.field,
        "per_seed_total_diffs": runs.iter().map(|(s, r)| json!({ "seed": s, "total_diffs": r.total_diffs })).collect::<Vec<_>>(),
        "mean_total_diffs": mean,
        "runs": runs.iter().map(|(_, r)| to_value(r)).collect::<Vec<_>>(),
    });
    Ok((payload, csv))
}

fn parse_function(n: usize, s: &str) -> CliResult<SymmetricFunctionSpec> {
    let bad = || CliError::Usage(format!("unknown --function '{s}' (parity, majority, constant:<c>, values:<v0,...>)"));
    match s {
        "parity" => Ok(SymmetricFunctionSpec::parity(n)),
        "majority" => Ok(SymmetricFunctionSpec::majority(n)),
        _ => {
            if let Some(c) = s.strip_prefix("constant:") {
                Ok(SymmetricFunctionSpec::constant(n, c.trim().parse().map_err(|_| bad())?))
            } else if let Some(v) = s.strip_prefix("values:") {
                Ok(SymmetricFunctionSpec::new(n, weights_arg(v).map_err(CliError::Usage)?)?)
            } else {
                Err(bad())
            }
        }
    }
}

fn sym_and(a: &SymAndArgs, budget: &Budget) -> CliResult<Output> {
    let spec = parse_function(a.n, &a.function)?;
    let (_, r) = sym_and_nonrigidity(&spec, a.rank_target, a.field, a.seed, budget)?;
    Ok((to_value(&r), rigidity_csv(&r)))
}

fn need_n(a: &SamplerArgs) -> CliResult<usize> {
    a.n.ok_or_else(|| CliError::Usage(format!("--n is required for the {:?} sampler", a.sampler)))
}

fn build_sampler(a: &SamplerArgs) -> CliResult<ProbMatrixSampler> {
    let eps = parse_rational(&a.eps)?;
    let field =
        a.field.unwrap_or(if a.sampler == SamplerKind::LtfLtf { FieldSpec::Rationals } else { FieldSpec::prime(3)? });
    Ok(match a.sampler {
        SamplerKind::Eq => eq_sampler(need_n(a)?, &eps, field)?,
        SamplerKind::Leq => leq_sampler(need_n(a)?, &eps, field, false)?,
        SamplerKind::Lt => leq_sampler(need_n(a)?, &eps, field, true)?,
        SamplerKind::Ltf => {
            let (Some(x), Some(y), Some(t)) = (&a.x_weights, &a.y_weights, a.threshold) else {
                return Err(CliError::Usage("the ltf sampler needs --x-weights, --y-weights and --threshold".into()));
            };
            let spec = LTFSpec {
                x_weights: weights_arg(x).map_err(CliError::Usage)?,
                y_weights: weights_arg(y).map_err(CliError::Usage)?,
                threshold: t,
            };
            ltf_sampler(&spec, &eps, field)?
        }
        SamplerKind::LtfLtf => {
            let circuit = match a.circuit {
                CircuitKind::Ip2Exact => ip2_exact_circuit(need_n(a)?)?,
                CircuitKind::Ip2Pair => search_top_layer(&ip2_pair_gates(), ip2, 4)
                    .ok_or_else(|| rigidlab::Error::Invariant("no top layer found for the pair gates".into()))?,
            };
            ltf_ltf_sign_sampler(&circuit, &eps, field, !a.zero_is_false)?
        }
    })
}

fn error_csv(r: &ErrorReport) -> Vec<Vec<String>> {
    if r.trials.is_empty() {
        let mut t = vec![row(["row", "col", "error"])];
        for i in 0..r.rows {
            for j in 0..r.cols {
                t.push(row([i.to_string(), j.to_string(), r.entry_error(i, j).to_string()]));
            }
        }
        t
    } else {
        let mut t = vec![row(["trial", "seed", "terms", "disagreements"])];
        t.extend(r.trials.iter().map(|s| row([s.trial, s.seed, s.terms as u64, s.disagreements as u64])));
        t
    }
}

fn estimate(
    s: &ProbMatrixSampler,
    exhaustive: bool,
    trials: u64,
    seed: u64,
    delta: f64,
    budget: &Budget,
) -> CliResult<ErrorReport> {
    let mode = if exhaustive { EstimateMode::Exhaustive } else { EstimateMode::MonteCarlo };
    Ok(estimate_error(s, mode, trials, seed, delta, budget)?)
}

fn prob_rank(a: &ProbRankArgs, budget: &Budget) -> CliResult<Output> {
    let s = build_sampler(&a.sampler)?;
    let r = estimate(&s, a.exhaustive, a.trials, a.seed, a.delta, budget)?;
    Ok((to_value(&r), error_csv(&r)))
}

fn equivalence(a: &EquivalenceArgs, budget: &Budget) -> CliResult<Output> {
    let spec = HadamardSpec::new(a.n, a.field)?;
    let cells = planted_cells(spec.dim(), spec.dim(), a.corrupt, a.seed)?;
    let m = corrupted_sylvester(&spec, &cells)?;
    let s = rigidity_to_prob_rank(&m, None, budget)?;
    let r = estimate(&s, a.trials.is_none(), a.trials.unwrap_or(0), a.seed, a.delta, budget)?;
    let mut payload = to_value(&r);
    payload["corrupted_cells"] = to_value(&cells);
    Ok((payload, error_csv(&r)))
}

fn rsr(a: &RsrArgs, budget: &Budget) -> CliResult<Output> {
    let spec = ip2_rsr(a.n, a.field)?;
    let check = spec.check(budget)?;
    let cells = planted_cells(1 << a.n, 1 << a.n, a.planted, a.seed)?;
    let m = planted_truth_table_factors(&spec, &cells)?;
    let s = rsr_prob_rank(&spec, &m, None, budget)?;
    let r = estimate(&s, false, a.trials, a.seed, a.delta, budget)?;
    let mut payload = to_value(&r);
    payload["planted_cells"] = to_value(&cells);
    payload["input_rank"] = json!(m.term_count());
    payload["reduction_check"] = to_value(&check);
    Ok((payload, error_csv(&r)))
}

fn protocol(a: &ProtocolArgs) -> CliResult<Output> {
    let s = build_sampler(&a.sampler)?;
    if a.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let target = s.target(a.x.min(s.rows.saturating_sub(1)), a.y.min(s.cols.saturating_sub(1)));
    let mut traces = Vec::new();
    let mut csv = vec![row(["trial", "seed", "x", "y", "answer", "target", "bits", "correct"])];
    let mut correct = 0u64;
    for t in 0..a.trials {
        let seed = derive_seed(a.seed, "protocol", t);
        let tr = simulate_protocol(&s, a.x, a.y, seed)?;
        let ok = s.agreement.agrees(&tr.answer, &target);
        correct += ok as u64;
        csv.push(row([
            t.to_string(),
            seed.to_string(),
            a.x.to_string(),
            a.y.to_string(),
            tr.answer.to_string(),
            target.to_string(),
            tr.bits.to_string(),
            ok.to_string(),
        ]));
        traces.push(tr);
    }
    if let Some(path) = &a.trace {
        let mut lines = String::new();
        for tr in &traces {
            lines.push_str(&serde_json::to_string(tr).expect("traces serialize"));
            lines.push('\n');
        }
        write_atomically(path, &lines)?;
    }
    let payload = json!({
        "sampler": s.label,
        "claimed_rank": s.claimed_rank,
        "bits": traces.first().map(|t| t.bits),
        "target": target,
        "agreement_rate": correct as f64 / a.trials as f64,
        "traces": traces,
    });
    Ok((payload, csv))
}

fn oracle(a: &OracleArgs) -> CliResult<Output> {
    if a.rank_target.is_none() && a.edits.is_none() && !a.cross_validate {
        return Err(CliError::Usage("oracle needs --rank-target, --edits or --cross-validate".into()));
    }
    let spec = HadamardSpec::new(a.n, a.field)?;
    let h = materialize_hadamard(&spec, &Budget::default())?;
    let ob = OracleBudget::default();
    let mut payload = json!({ "matrix": format!("H_{}", a.n), "field": a.field, "rank": h.rank() });
    let mut csv = vec![row(["quantity", "argument", "value"])];
    if let Some(r) = a.rank_target {
        let v = brute_force_rigidity(&h, r, &ob)?;
        payload["rank_target"] = json!(r);
        payload["value"] = json!(v);
        csv.push(row(["rigidity".to_string(), r.to_string(), v.to_string()]));
    }
    if let Some(t) = a.edits {
        let v = min_rank_within(&h, t, &ob)?;
        payload["edits"] = json!(t);
        payload["min_rank"] = json!(v);
        csv.push(row(["min_rank".to_string(), t.to_string(), v.to_string()]));
    }
    if a.cross_validate {
        let c = cross_validate(&h, &ob)?;
        for (r, v) in c.rigidity.iter().enumerate() {
            csv.push(row(["rigidity".to_string(), r.to_string(), v.to_string()]));
        }
        for (t, v) in c.min_rank.iter().enumerate() {
            csv.push(row(["min_rank".to_string(), t.to_string(), v.to_string()]));
        }
        payload["cross_validation"] = to_value(&c);
    }
    Ok((payload, csv))
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory, so readers never see a partial report.
pub fn write_atomically(path: &Path, contents: &str) -> CliResult<()> {
    let io = |source| CliError::Io { path: path.display().to_string(), source };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents.as_bytes()).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Renders the report and writes it to `path`, or to standard output.
pub fn emit_report(report: &ExperimentReport, path: Option<&Path>, format: Format) -> CliResult<()> {
    let text = report.render(format);
    match path {
        Some(p) => write_atomically(p, &text),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|source| CliError::Io { path: "<stdout>".into(), source }),
    }
}
