//! The `pfa-extract` command line.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::abstraction::{fit_kmeans, pooled_vectors, ClusteringFunction, KMeansConfig};
use crate::datasets::{self, GroundTruthDpfa, LabelSource, SampleConfig};
use crate::error::Error;
use crate::evaluation::{auc, evaluate, predict_all, score_all};
use crate::exec::{with_jobs, Exec};
use crate::learner::{extract_pfa, LearnerConfig, MergeRule};
use crate::pfa::{read_pfa, write_pfa, Pfa};
use crate::selection::{select_model_with_progress, SelectionConfig};
use crate::trace_model::{
    read_abstract_traces, read_concrete_traces, write_abstract_traces, write_concrete_traces, AbstractTraceSet,
    ConcreteTraceSet,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "pfa-extract", version, about = "Extract probabilistic automata from classifier traces")]
struct Cli {
    /// Worker threads for batch work.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset.
    GenData(GenData),
    /// Cluster hidden vectors and write abstract traces.
    Abstract(Abstract),
    /// Learn a PFA from abstract traces.
    Learn(Learn),
    /// Grow K until the model reaches a fidelity target.
    Select(Select),
    /// Predict a label for every trace.
    Predict(Predict),
    /// Fidelity, accuracy and confusion counts.
    Eval(Eval),
    /// Adversarial scores and AUC.
    Detect(Detect),
    /// Write the model as Graphviz DOT.
    ExportDot(ExportDot),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Split {
    Train,
    Test,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Labels {
    Walk,
    MostLikely,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Rule {
    Flow,
    Ancestor,
}

impl From<Rule> for MergeRule {
    fn from(r: Rule) -> Self {
        match r {
            Rule::Flow => MergeRule::FlowConserving,
            Rule::Ancestor => MergeRule::AncestorPropagating,
        }
    }
}

#[derive(Args, Debug)]
struct GenData {
    /// tomita1..tomita7, bp or dpfa.
    #[arg(long)]
    task: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "train")]
    split: Split,
    /// Comma-separated string lengths (overrides the split's profile).
    #[arg(long, value_delimiter = ',')]
    lengths: Option<Vec<usize>>,
    #[arg(long)]
    samples_per_length: Option<usize>,
    /// Trace count for dpfa.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    max_len: usize,
    #[arg(long, value_enum, default_value = "walk")]
    labels: Labels,
    /// Sample from this model instead of the built-in reference automaton.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Write concrete traces with synthetic hidden vectors.
    #[arg(long)]
    concrete: bool,
    #[arg(long, default_value_t = 4)]
    dim: usize,
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
}

#[derive(Args, Debug)]
struct Abstract {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, required_unless_present = "apply")]
    k: Option<usize>,
    /// Where to save the fitted clustering.
    #[arg(long, conflicts_with = "apply")]
    centroids: Option<PathBuf>,
    /// Reuse a saved clustering instead of fitting one.
    #[arg(long)]
    apply: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Learn {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 64.0)]
    epsilon: f64,
    #[arg(long, value_enum, default_value = "flow")]
    merge_rule: Rule,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct Select {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    #[arg(long, default_value_t = 64.0)]
    epsilon: f64,
    /// Seconds.
    #[arg(long, default_value_t = 400.0)]
    timeout: f64,
    #[arg(long, default_value_t = 2)]
    k_start: usize,
    #[arg(long, default_value_t = 1)]
    k_step: usize,
    #[arg(long, default_value_t = 64)]
    k_max: usize,
    #[arg(long, value_enum, default_value = "flow")]
    merge_rule: Rule,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    centroids: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Predict {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    /// Defaults to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Eval {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    /// Print the report as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct Detect {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    benign: PathBuf,
    #[arg(long)]
    adv: PathBuf,
    /// Also flag each trace whose score falls below this.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args, Debug)]
struct ExportDot {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Usage(m),
            other => Failure::Data(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Runs the command line with the process's standard streams.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// `argv` excludes the program name.
pub fn run_with<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let args = std::iter::once(std::ffi::OsString::from("pfa-extract")).chain(argv.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    let jobs = cli.jobs;
    let result = if jobs == 0 {
        Err(usage("--jobs must be at least 1"))
    } else {
        let exec = if jobs == 1 { Exec::Sequential } else { Exec::default() };
        let mut buf_out = Vec::new();
        let mut buf_err = Vec::new();
        let r = with_jobs(jobs, || dispatch(cli, exec, &mut buf_out, &mut buf_err));
        let _ = out.write_all(&buf_out);
        let _ = err.write_all(&buf_err);
        r
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_DATA
        }
    }
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Data(Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Data(Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))))
}

fn read_concrete(path: &Path) -> CliResult<ConcreteTraceSet> {
    Ok(read_concrete_traces(open(path)?)?)
}

fn read_abstract(path: &Path) -> CliResult<AbstractTraceSet> {
    Ok(read_abstract_traces(open(path)?)?)
}

fn read_model(path: &Path) -> CliResult<Pfa> {
    Ok(read_pfa(open(path)?)?)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer(&mut w, value).map_err(|e| Failure::Data(Error::Io(e.into())))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Failure::Data(e.into()))
}

fn check_positive(name: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(usage(format!("--{name} must be a positive number")))
    }
}

fn dispatch(cli: Cli, exec: Exec, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let seed = cli.seed;
    let io = |e: std::io::Error| Failure::Data(e.into());
    match cli.command {
        Command::GenData(g) => gen_data(g, seed, exec, err),
        Command::Abstract(a) => {
            if a.k == Some(0) {
                return Err(usage("--k must be at least 1"));
            }
            let ts = read_concrete(&a.input)?;
            let cf: ClusteringFunction = match &a.apply {
                Some(p) => serde_json::from_reader(open(p)?)
                    .map_err(|e| Failure::Data(Error::Format { line: e.line(), message: e.to_string() }))?,
                None => {
                    let cfg = KMeansConfig { seed, exec, ..Default::default() };
                    fit_kmeans(&pooled_vectors(&ts), a.k.expect("required without --apply"), &cfg)?
                }
            };
            let abs = cf.abstract_all_with(&ts, exec)?;
            write_abstract_traces(&abs, create(&a.out)?)?;
            if let Some(p) = &a.centroids {
                write_json(&cf, p)?;
            }
            writeln!(err, "abstracted {} traces with K={} (inertia {:.6})", abs.len(), cf.k(), cf.inertia).map_err(io)?;
            Ok(())
        }
        Command::Learn(l) => {
            check_positive("epsilon", l.epsilon)?;
            let ts = read_abstract(&l.input)?;
            let cfg = LearnerConfig { epsilon: l.epsilon, merge_rule: l.merge_rule.into(), ..Default::default() };
            let p = extract_pfa(&ts, &cfg)?;
            write_pfa(&p, create(&l.out)?)?;
            writeln!(err, "learned {} states from {} traces", p.n_states(), ts.len()).map_err(io)?;
            Ok(())
        }
        Command::Select(s) => {
            check_positive("epsilon", s.epsilon)?;
            if !s.timeout.is_finite() || s.timeout < 0.0 {
                return Err(usage("--timeout must be a non-negative number of seconds"));
            }
            let ts = read_concrete(&s.input)?;
            let cfg = SelectionConfig {
                gamma_a: s.gamma,
                epsilon: s.epsilon,
                timeout: Duration::from_secs_f64(s.timeout),
                k_start: s.k_start,
                k_step: s.k_step,
                k_max: s.k_max,
                kmeans: KMeansConfig { seed, exec, ..Default::default() },
                learner: LearnerConfig { merge_rule: s.merge_rule.into(), ..Default::default() },
            };
            let mut log = Vec::new();
            let (pfa, cf, report) = select_model_with_progress(&ts, &cfg, |step| log.push(step.log_line()))?;
            for line in log {
                writeln!(err, "{line}").map_err(io)?;
            }
            write_pfa(&pfa, create(&s.out)?)?;
            if let Some(p) = &s.report {
                write_json(&report, p)?;
            }
            if let Some(p) = &s.centroids {
                write_json(&cf, p)?;
            }
            let last = report.history.last().map_or(0.0, |h| h.fidelity);
            writeln!(out, "chosen K {} fidelity {:.4} satisfied {}", report.chosen_k, last, report.satisfied).map_err(io)?;
            Ok(())
        }
        Command::Predict(pr) => {
            let model = read_model(&pr.model)?;
            let ts = read_abstract(&pr.input)?;
            if model.labels() != &ts.labels {
                return Err(Failure::Data(Error::LabelTable("trace labels differ from the model's labels".into())));
            }
            let preds = predict_all(&model.predictor(), &ts.traces, exec)?;
            #[derive(Serialize)]
            struct Row<'a> {
                id: &'a str,
                label: &'a str,
                distribution: BTreeMap<&'a str, f64>,
                misses: usize,
            }
            let mut text = Vec::new();
            for (t, p) in ts.traces.iter().zip(&preds) {
                let row = Row {
                    id: &t.id,
                    label: model.labels().name(p.label),
                    distribution: p.distribution.iter().map(|(l, v)| (model.labels().name(l), v)).collect(),
                    misses: p.misses,
                };
                serde_json::to_writer(&mut text, &row).map_err(|e| Failure::Data(Error::Io(e.into())))?;
                text.push(b'\n');
            }
            match &pr.out {
                Some(p) => {
                    let mut w = create(p)?;
                    w.write_all(&text).and_then(|_| w.flush()).map_err(io)?;
                }
                None => out.write_all(&text).map_err(io)?,
            }
            Ok(())
        }
        Command::Eval(e) => {
            let model = read_model(&e.model)?;
            let ts = read_abstract(&e.input)?;
            let report = evaluate(&model, &ts, exec)?;
            if e.json {
                let text = serde_json::to_string(&report).map_err(|e| Failure::Data(Error::Io(e.into())))?;
                writeln!(out, "{text}").map_err(io)?;
            } else {
                write!(out, "{}", report.table(model.labels())).map_err(io)?;
            }
            Ok(())
        }
        Command::Detect(d) => {
            let model = read_model(&d.model)?;
            let benign = read_abstract(&d.benign)?;
            let adv = read_abstract(&d.adv)?;
            for set in [&benign, &adv] {
                if model.labels() != &set.labels {
                    return Err(Failure::Data(Error::LabelTable("trace labels differ from the model's labels".into())));
                }
            }
            let b = score_all(&model, &benign.traces, exec)?;
            let a = score_all(&model, &adv.traces, exec)?;
            for (kind, set, scores) in [("benign", &benign, &b), ("adv", &adv, &a)] {
                for (t, s) in set.traces.iter().zip(scores.iter()) {
                    match d.threshold {
                        Some(th) => writeln!(out, "{kind}\t{}\t{s:.6}\t{}", t.id, if *s < th { "adversarial" } else { "benign" }),
                        None => writeln!(out, "{kind}\t{}\t{s:.6}", t.id),
                    }
                    .map_err(io)?;
                }
            }
            writeln!(out, "auc\t{:.6}", auc(&b, &a)?).map_err(io)?;
            Ok(())
        }
        Command::ExportDot(x) => {
            let model = read_model(&x.model)?;
            let mut w = create(&x.out)?;
            w.write_all(model.to_dot().as_bytes()).and_then(|_| w.flush()).map_err(io)?;
            Ok(())
        }
    }
}

fn gen_data(g: GenData, seed: u64, exec: Exec, err: &mut dyn Write) -> CliResult<()> {
    let io = |e: std::io::Error| Failure::Data(e.into());
    let task = g.task.as_str();
    if let Some(n) = task.strip_prefix("tomita") {
        let grammar: usize = n.parse().ok().filter(|g| (1..=7).contains(g)).ok_or_else(|| usage(format!("unknown task `{task}`")))?;
        let lengths = g.lengths.clone().unwrap_or_else(|| match g.split {
            Split::Train => datasets::TOMITA_TRAIN_LENGTHS.to_vec(),
            Split::Test => datasets::TOMITA_TEST_LENGTHS.to_vec(),
        });
        let d = datasets::gen_tomita(grammar, &lengths, g.samples_per_length.unwrap_or(200), seed)?;
        datasets::write_labeled(&d.strings, create(&g.out)?)?;
        report_balance(&d.balance, err).map_err(io)?;
        return Ok(());
    }
    match task {
        "bp" => {
            let lengths = g.lengths.clone().unwrap_or_else(|| (0..=15).chain([20, 25, 30]).collect());
            let d = datasets::gen_bp(&lengths, datasets::BP_MAX_DEPTH, g.samples_per_length.unwrap_or(100), seed)?;
            datasets::write_labeled(&d.strings, create(&g.out)?)?;
            report_balance(&d.balance, err).map_err(io)?;
            Ok(())
        }
        "dpfa" => {
            if g.concrete && (g.dim < 2 || g.noise.is_nan() || g.noise < 0.0) {
                return Err(usage("--dim must be at least 2 and --noise non-negative"));
            }
            let truth = match &g.truth {
                Some(p) => GroundTruthDpfa::new(read_model(p)?)?,
                None => datasets::reference_truth(),
            };
            let cfg = SampleConfig {
                n: g.n,
                max_len: g.max_len,
                seed,
                labels: match g.labels {
                    Labels::Walk => LabelSource::Walk,
                    Labels::MostLikely => LabelSource::MostLikely,
                },
                exec,
            };
            let ts = datasets::sample_dpfa(&truth, &cfg)?;
            if g.concrete {
                // cluster c sits on axis c mod dim, ten units out per wrap
                let centers: Vec<Vec<f64>> = (0..ts.k.max(1))
                    .map(|c| {
                        let mut v = vec![0.0; g.dim];
                        v[c % g.dim] = 10.0 * (1 + c / g.dim) as f64;
                        v
                    })
                    .collect();
                let ct = datasets::synthesize_hidden(&ts, &centers, g.noise, seed)?;
                write_concrete_traces(&ct, create(&g.out)?)?;
            } else {
                write_abstract_traces(&ts, create(&g.out)?)?;
            }
            writeln!(err, "sampled {} traces", ts.len()).map_err(io)?;
            Ok(())
        }
        other => Err(usage(format!("unknown task `{other}` (expected tomita1..tomita7, bp or dpfa)"))),
    }
}

fn report_balance(b: &datasets::Balance, err: &mut dyn Write) -> std::io::Result<()> {
    writeln!(err, "{} positive, {} negative", b.positives(), b.negatives())?;
    for (len, (p, n)) in &b.per_length {
        if p != n {
            writeln!(err, "length {len}: {p} positive, {n} negative")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = run_with(args.iter().copied(), &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn no_arguments_is_a_usage_error() {
        let (code, out, err) = call(&[]);
        assert_eq!(code, EXIT_USAGE);
        assert!(out.is_empty());
        assert!(err.contains("Usage"));
    }

    #[test]
    fn unknown_things() {
        assert_eq!(call(&["frobnicate"]).0, EXIT_USAGE);
        assert_eq!(call(&["learn", "--bogus"]).0, EXIT_USAGE);
        assert_eq!(call(&["gen-data", "--task", "tomita9", "--out", "/nonexistent/x"]).0, EXIT_USAGE);
        assert_eq!(call(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn missing_input_is_a_data_error() {
        let (code, _, err) = call(&["learn", "--in", "/nonexistent/t.atr", "--out", "/nonexistent/m.pfa"]);
        assert_eq!(code, EXIT_DATA);
        assert!(err.contains("/nonexistent/t.atr"));
    }
}
