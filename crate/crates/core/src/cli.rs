//! Command-line front end.
//!
//! Exit codes: 0 for success, a fair verdict or no admitted VoI; 2 for an
//! unfair verdict, admitted VoI or a failed reproduction; 1 for errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fairness::{corresponding_fair_utility, is_voi_fair, FairUtilityResult, UtilityFamily};
use crate::graph::{NodeId, NodeSet};
use crate::model_file::{load_model, Model};
use crate::policy::Policy;
use crate::policy_opt::{
    minimal_voi_input_set, optimal_policy, undesert, undesert_target, Backend, BackendKind, ANALYTIC_TOLERANCE,
};
use crate::reproduce::{reproduce_table, write_outputs, ReproduceConfig, Summary, TableId, TableReport};
use crate::sample::sample;
use crate::scenarios::{example, ExampleId};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FLAGGED: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "voifair", version, about = "Value-of-information fairness audits for decision models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Whether the graph admits VoI for the protected attribute given the inputs.
    CheckGraph {
        #[command(flatten)]
        model: ModelArgs,
        /// Decision inputs M (comma separated).
        #[arg(long, value_delimiter = ',')]
        inputs: Vec<String>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Whether the utility is VoI-fair relative to the essential features.
    CheckFairness {
        #[command(flatten)]
        model: ModelArgs,
        /// Essential features F (comma separated).
        #[arg(long, value_delimiter = ',')]
        essential: Vec<String>,
        #[command(flatten)]
        estimation: EstimationArgs,
        /// Margin tolerance of the analytic backend.
        #[arg(long, default_value_t = ANALYTIC_TOLERANCE)]
        eps: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// The closest fair utility in a parametric family (penalty method).
    FairUtility {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',')]
        essential: Vec<String>,
        /// JSON file `{"terms": ["indicator(D = 1) * S", ...]}`.
        #[arg(long)]
        family: PathBuf,
        /// Bound on the fairness penalty.
        #[arg(long, default_value_t = 1e-4)]
        eps: f64,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Reproduce a published table (T1, T2, T3, F3_aggregates or all).
    Reproduce {
        table: String,
        /// Replications; defaults to 100 (1 for T3).
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Directory for one CSV per table and summary.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample a dataset under a policy (uniformly random when no policy is given).
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        /// Policy JSON file.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        jobs: Option<usize>,
        /// CSV output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// A subset of the decision inputs on which every member has VoI.
    MinimalInputs {
        #[command(flatten)]
        model: ModelArgs,
        /// Starting inputs; the model's decision inputs when absent.
        #[arg(long, value_delimiter = ',')]
        inputs: Option<Vec<String>>,
        #[command(flatten)]
        estimation: EstimationArgs,
        #[arg(long, default_value_t = ANALYTIC_TOLERANCE)]
        eps: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Undesert by protected group under the optimal policy.
    Undesert {
        #[command(flatten)]
        model: ModelArgs,
        /// Policy inputs; the model's decision inputs when absent.
        #[arg(long, value_delimiter = ',')]
        inputs: Option<Vec<String>>,
        #[command(flatten)]
        estimation: EstimationArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Model JSON file, or `example:<id>` for a built-in example.
    #[arg(long)]
    model: String,
    /// Protected attribute; the model's when absent.
    #[arg(long)]
    protected: Option<String>,
}

#[derive(Args, Debug)]
struct EstimationArgs {
    #[arg(long, value_enum, default_value_t = BackendArg::Analytic)]
    backend: BackendArg,
    /// Monte Carlo sample size.
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Analytic,
    Mc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

impl EstimationArgs {
    fn backend(&self) -> Result<Backend> {
        match self.backend {
            BackendArg::Analytic => Ok(Backend::Analytic),
            BackendArg::Mc => {
                if self.n < 2 {
                    return Err(Error::InvalidParameter("--n must be at least 2".into()));
                }
                Ok(Backend::mc(self.n, self.seed))
            }
        }
    }
}

fn node_set(names: &[String]) -> NodeSet {
    names.iter().map(|s| s.trim()).filter(|s| !s.is_empty()).map(NodeId::new).collect()
}

fn load(args: &ModelArgs) -> Result<Model> {
    let mut model = match args.model.strip_prefix("example:") {
        Some(id) => {
            let spec = example(id.parse::<ExampleId>()?);
            Model { scm: spec.scm, utility: spec.utility }
        }
        None => load_model(Path::new(&args.model)).map_err(|e| Error::Validation(format!("{}: {e}", args.model)))?,
    };
    if let Some(s) = &args.protected {
        model.scm = model.scm.with_protected(s)?;
    }
    Ok(model)
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match jobs {
        None => f(),
        Some(0) => Err(Error::InvalidParameter("--jobs must be at least 1".into())),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(f),
    }
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn emit(out: &Option<PathBuf>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn no_csv(what: &str) -> Error {
    Error::InvalidParameter(format!("{what} has no CSV form; use --format json or text"))
}

fn csv_rows(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn set_text(s: &NodeSet) -> String {
    let v: Vec<&str> = s.iter().map(NodeId::as_str).collect();
    format!("{{{}}}", v.join(", "))
}

#[derive(Serialize)]
struct GraphReport {
    protected: String,
    inputs: NodeSet,
    admits_voi: bool,
}

#[derive(Serialize)]
struct FairUtilityReport {
    terms: Vec<String>,
    essential: NodeSet,
    #[serde(flatten)]
    result: FairUtilityResult,
}

#[derive(Serialize)]
struct GroupUndesert {
    s: f64,
    mean: f64,
    count: usize,
}

#[derive(Serialize)]
struct UndesertSummary {
    inputs: NodeSet,
    policy: Policy,
    backend: BackendKind,
    n: usize,
    seed: u64,
    mean: f64,
    groups: Vec<GroupUndesert>,
}

fn execute(cmd: Command, stdout: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::CheckGraph { model, inputs, output } => {
            let m = load(&model)?;
            let inputs = node_set(&inputs);
            let s = m.scm.protected().clone();
            m.scm.check_policy_inputs(&inputs)?;
            let admits = m.scm.induced_graph(&m.utility)?.admits_voi(&s, &inputs)?;
            let report = GraphReport { protected: s.to_string(), inputs: inputs.clone(), admits_voi: admits };
            let text = match output.format {
                Format::Json => json(&report)?,
                Format::Text => format!(
                    "{} {} VoI relative to {}\n",
                    s,
                    if admits { "admits" } else { "does not admit" },
                    set_text(&inputs)
                ),
                Format::Csv => return Err(no_csv("check-graph")),
            };
            emit(&output.out, &text, stdout)?;
            Ok(if admits { EXIT_FLAGGED } else { EXIT_OK })
        }
        Command::CheckFairness { model, essential, estimation, eps, output } => {
            let m = load(&model)?;
            let f = node_set(&essential);
            let backend = estimation.backend()?;
            let report = with_jobs(estimation.jobs, || is_voi_fair(&m.scm, &m.utility, &f, &backend, eps))?;
            let text = match output.format {
                Format::Json => json(&report)?,
                Format::Text => {
                    let mut t = format!(
                        "utility is {} relative to {} ({:?})\n",
                        if report.fair { "VoI-fair" } else { "not VoI-fair" },
                        set_text(&f),
                        report.path
                    );
                    if let Some(v) = &report.verdict {
                        t.push_str(&format!("margin {:.6e}, threshold {:.6e}\n", v.margin, v.tolerance));
                    }
                    t
                }
                Format::Csv => return Err(no_csv("check-fairness")),
            };
            emit(&output.out, &text, stdout)?;
            Ok(if report.fair { EXIT_OK } else { EXIT_FLAGGED })
        }
        Command::FairUtility { model, essential, family, eps, n, seed, jobs, output } => {
            let m = load(&model)?;
            let f = node_set(&essential);
            let text = std::fs::read_to_string(&family)
                .map_err(|e| Error::InvalidParameter(format!("{}: {e}", family.display())))?;
            let fam: UtilityFamily = serde_json::from_str(&text)?;
            let result = with_jobs(jobs, || corresponding_fair_utility(&m.scm, &m.utility, &f, &fam, n, seed, eps))?;
            let terms: Vec<String> = fam.terms().iter().map(|t| t.to_string()).collect();
            let text = match output.format {
                Format::Json => json(&FairUtilityReport { terms: terms.clone(), essential: f, result })?,
                Format::Csv => {
                    let rows: Vec<Vec<String>> =
                        terms.iter().zip(&result.w).map(|(t, w)| vec![t.clone(), w.to_string()]).collect();
                    csv_rows(&["term", "weight"], &rows)?
                }
                Format::Text => {
                    let mut t = String::new();
                    for (term, w) in terms.iter().zip(&result.w) {
                        t.push_str(&format!("{w:>14.6}  {term}\n"));
                    }
                    t.push_str(&format!(
                        "L1 = {:.3e}, L2 = {:.6}, K = {}, {} iterations\n",
                        result.l1, result.l2, result.penalty_k, result.iterations
                    ));
                    t
                }
            };
            emit(&output.out, &text, stdout)?;
            Ok(EXIT_OK)
        }
        Command::Reproduce { table, reps, seed, jobs, format, out } => {
            let tables: Vec<TableId> =
                if table.eq_ignore_ascii_case("all") { TableId::ALL.to_vec() } else { vec![table.parse()?] };
            let mut reports: Vec<TableReport> = Vec::new();
            for t in tables {
                let mut config = ReproduceConfig::new(reps.unwrap_or(t.default_replications()), seed);
                config.jobs = jobs;
                reports.push(reproduce_table(t, &config)?);
            }
            let summary = match &out {
                Some(dir) => write_outputs(&reports, dir)?,
                None => Summary { pass: reports.iter().all(|r| r.pass), tables: reports.clone() },
            };
            let text = match format {
                Format::Json => json(&summary)?,
                Format::Text => reports.iter().map(TableReport::to_text).collect::<Vec<_>>().join("\n"),
                Format::Csv => {
                    let mut buf = Vec::new();
                    for (i, r) in reports.iter().enumerate() {
                        let mut part = Vec::new();
                        r.write_csv(&mut part)?;
                        let s = String::from_utf8(part).expect("csv output is UTF-8");
                        buf.push(if i == 0 { s } else { s.lines().skip(1).map(|l| format!("{l}\n")).collect() });
                    }
                    buf.concat()
                }
            };
            stdout.write_all(text.as_bytes())?;
            Ok(if summary.pass { EXIT_OK } else { EXIT_FLAGGED })
        }
        Command::Simulate { model, policy, n, seed, jobs, out } => {
            let m = load(&model)?;
            let policy = match policy {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
                    let p: Policy = serde_json::from_str(&text)?;
                    Policy::new(p.inputs, p.rule, m.scm.domain().len())?
                }
                None => Policy::uniform(m.scm.domain().len()),
            };
            let data = with_jobs(jobs, || sample(&m.scm, &m.utility, &policy, n, seed))?;
            match out {
                Some(path) => data.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))?,
                None => data.write_csv(&mut *stdout)?,
            }
            Ok(EXIT_OK)
        }
        Command::MinimalInputs { model, inputs, estimation, eps, output } => {
            let m = load(&model)?;
            let od = inputs.map_or_else(|| m.scm.decision_inputs().clone(), |v| node_set(&v));
            let backend = estimation.backend()?;
            let r = with_jobs(estimation.jobs, || minimal_voi_input_set(&m.scm, &m.utility, &od, &backend, eps))?;
            let text = match output.format {
                Format::Json => json(&r)?,
                Format::Text => format!(
                    "minimal inputs {} (max EU {:.6}; with {}: {:.6})\n",
                    set_text(&r.inputs),
                    r.max_eu.value,
                    set_text(&od),
                    r.max_eu_full.value
                ),
                Format::Csv => {
                    let rows: Vec<Vec<String>> = r
                        .attempts
                        .iter()
                        .map(|a| {
                            vec![
                                a.node.to_string(),
                                set_text(&a.from),
                                a.verdict.margin.to_string(),
                                a.verdict.tolerance.to_string(),
                                a.removed.to_string(),
                            ]
                        })
                        .collect();
                    csv_rows(&["node", "from", "margin", "threshold", "removed"], &rows)?
                }
            };
            emit(&output.out, &text, stdout)?;
            Ok(EXIT_OK)
        }
        Command::Undesert { model, inputs, estimation, output } => {
            let m = load(&model)?;
            let h = inputs.map_or_else(|| m.scm.decision_inputs().clone(), |v| node_set(&v));
            let backend = estimation.backend()?;
            let uhat = undesert_target(&m.scm, &m.utility)?;
            let summary = with_jobs(estimation.jobs, || {
                let policy = optimal_policy(&m.scm, &m.utility, &h, &backend)?;
                let data = sample(&m.scm, &m.utility, &policy, estimation.n, estimation.seed)?;
                let r = undesert(&data, m.scm.decision().as_str(), m.scm.protected().as_str(), &uhat)?;
                Ok(UndesertSummary {
                    inputs: h.clone(),
                    policy,
                    backend: backend.kind(),
                    n: estimation.n,
                    seed: estimation.seed,
                    mean: r.mean,
                    groups: r
                        .group_means
                        .iter()
                        .map(|(s, mean, count)| GroupUndesert { s: *s, mean: *mean, count: *count })
                        .collect(),
                })
            })?;
            let text = match output.format {
                Format::Json => json(&summary)?,
                Format::Csv => {
                    let rows: Vec<Vec<String>> = summary
                        .groups
                        .iter()
                        .map(|g| vec![g.s.to_string(), g.mean.to_string(), g.count.to_string()])
                        .collect();
                    csv_rows(&["s", "mean_undesert", "count"], &rows)?
                }
                Format::Text => {
                    let mut t = format!("mean undesert {:.6}\n", summary.mean);
                    for g in &summary.groups {
                        t.push_str(&format!("  S = {}: {:.6} ({} rows)\n", g.s, g.mean, g.count));
                    }
                    t
                }
            };
            emit(&output.out, &text, stdout)?;
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code. Never panics on malformed input.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { stderr.write_all(text.as_bytes()) } else { stdout.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli.command, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_ERROR
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("voifair").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn graph_verdicts_map_to_exit_codes() {
        assert_eq!(call(&["check-graph", "--model", "example:parental_status", "--inputs", "A"]).0, EXIT_FLAGGED);
        assert_eq!(call(&["check-graph", "--model", "example:grade", "--inputs", "Effort"]).0, EXIT_OK);
        assert_eq!(call(&["check-graph", "--model", "example:nope"]).0, EXIT_ERROR);
        assert_eq!(call(&["check-graph"]).0, EXIT_ERROR);
        assert_eq!(call(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn fairness_verdicts() {
        let (code, out, _) = call(&["check-fairness", "--model", "example:medical", "--essential", "M"]);
        assert_eq!(code, EXIT_FLAGGED, "{out}");
        let (code, _, err) = call(&["check-fairness", "--model", "example:medical", "--essential", "S"]);
        assert_eq!(code, EXIT_ERROR);
        assert!(err.contains("overlap"), "{err}");
    }

    #[test]
    fn bad_flag_values_are_errors() {
        assert_eq!(call(&["check-fairness", "--model", "example:grade", "--backend", "exact"]).0, EXIT_ERROR);
        assert_eq!(call(&["reproduce", "T9"]).0, EXIT_ERROR);
        assert_eq!(call(&["simulate", "--model", "example:grade", "--n", "0"]).0, EXIT_ERROR);
        assert_eq!(call(&["simulate", "--model", "example:grade", "--jobs", "0"]).0, EXIT_ERROR);
    }
}
