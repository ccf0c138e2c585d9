//! `zbinfer`: device and event inference from encrypted Zigbee captures.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use zigbee_infer::addr::{fmt_short, parse_short};
use zigbee_infer::analysis::{Analysis, AnalysisConfig, Analyzer, DEFAULT_REPEAT_WINDOW};
use zigbee_infer::burst::DEFAULT_BURST_GAP;
use zigbee_infer::inference::{OuiTable, RuleSet};
use zigbee_infer::report::AnalysisReport;
use zigbee_infer::signature::{candidate_nodes, correlate, extract_signature, SignatureStore, Tolerance};
use zigbee_infer::synth::{capture_id_of_file, evaluate, generate, GroundTruth, Predictions, ScenarioConfig};

#[derive(Parser)]
#[command(name = "zbinfer", version, about = "Passive device and event inference over encrypted Zigbee captures")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug, -vvv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Map the network and identify command events.
    Analyze {
        capture: PathBuf,
        #[command(flatten)]
        opts: AnalysisOpts,
        /// Also correlate nodes against this signature store.
        #[arg(long)]
        store: Option<PathBuf>,
        /// Emit JSON (accepted by `evaluate` as predictions).
        #[arg(long)]
        json: bool,
        /// Include every segmented burst in the output.
        #[arg(long)]
        dump_bursts: bool,
        /// Write the report here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the inferred node map, optionally exporting it as CSV.
    Map {
        capture: PathBuf,
        #[command(flatten)]
        opts: AnalysisOpts,
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Reporting signature extraction and matching.
    #[command(subcommand)]
    Signatures(SignaturesCommand),
    /// Generate a labeled synthetic capture from a scenario file.
    Generate {
        config: PathBuf,
        /// Capture output path.
        #[arg(short, long)]
        out: PathBuf,
        /// Ground-truth output path.
        #[arg(short, long)]
        truth: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score `analyze --json` output against generator ground truth.
    Evaluate {
        predictions: PathBuf,
        truth: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand)]
enum SignaturesCommand {
    /// Extract the reporting signature of an idle node and append it to a store.
    Extract {
        capture: PathBuf,
        #[arg(long)]
        store: PathBuf,
        /// Device label for the new record.
        #[arg(long)]
        label: String,
        /// Node to extract; required when the capture has more than one candidate.
        #[arg(long, value_parser = parse_short)]
        node: Option<u16>,
        /// Hub the capture was taken with, kept as a hint in the record.
        #[arg(long)]
        hub: Option<String>,
        #[command(flatten)]
        opts: AnalysisOpts,
    },
    /// Correlate every node of a capture against a store.
    Match {
        capture: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        opts: AnalysisOpts,
    },
}

#[derive(Args, Clone)]
struct AnalysisOpts {
    /// Silence in seconds that closes a burst.
    #[arg(long, default_value_t = DEFAULT_BURST_GAP)]
    burst_gap: f64,
    /// Signed byte correction added to every application payload length.
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    len_offset: i32,
    /// Seconds within which an identical burst counts as a repeat.
    #[arg(long, default_value_t = DEFAULT_REPEAT_WINDOW)]
    repeat_window: f64,
    /// Reporting-interval tolerance as a fraction of the interval.
    #[arg(long, default_value_t = Tolerance::default().fraction)]
    tolerance: f64,
    /// Minimum reporting-interval tolerance in seconds.
    #[arg(long, default_value_t = Tolerance::default().floor)]
    tolerance_floor: f64,
    /// Inference rule file replacing the bundled rules.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// OUI table replacing the bundled one.
    #[arg(long)]
    oui: Option<PathBuf>,
}

impl AnalysisOpts {
    fn analyzer(&self) -> Result<Analyzer> {
        let non_negative = |v: f64| v >= 0.0 && !v.is_nan();
        if self.burst_gap.is_nan() || self.burst_gap <= 0.0 {
            bail!("--burst-gap must be positive");
        }
        if ![self.repeat_window, self.tolerance, self.tolerance_floor].into_iter().all(non_negative) {
            bail!("--repeat-window and tolerances must be non-negative");
        }
        let mut a = Analyzer::new(AnalysisConfig {
            burst_gap: self.burst_gap,
            len_offset: self.len_offset,
            repeat_window: self.repeat_window,
        });
        if let Some(p) = &self.rules {
            a.rules = RuleSet::load(p).with_context(|| format!("loading rules from {}", p.display()))?;
        }
        if let Some(p) = &self.oui {
            a.oui = OuiTable::load(p).with_context(|| format!("loading OUI table from {}", p.display()))?;
        }
        Ok(a)
    }

    fn tolerance(&self) -> Tolerance {
        Tolerance {
            floor: self.tolerance_floor,
            fraction: self.tolerance,
        }
    }
}

fn require_file(p: &Path) -> Result<()> {
    if !p.is_file() {
        bail!("{}: no such file", p.display());
    }
    Ok(())
}

fn run_analysis(capture: &Path, analyzer: &Analyzer) -> Result<(Analysis, String)> {
    let analysis = analyzer
        .analyze_path(capture)
        .with_context(|| format!("reading {}", capture.display()))?;
    let id = capture_id_of_file(capture).with_context(|| format!("hashing {}", capture.display()))?;
    log::info!(
        "{}: {} frames, {} bursts, {} identifications",
        capture.display(),
        analysis.frames_in,
        analysis.bursts.len(),
        analysis.identifications.len()
    );
    Ok((analysis, id))
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(out.flush()?)
        }
    }
}

fn load_store(path: &Path) -> Result<SignatureStore> {
    SignatureStore::load(path).with_context(|| format!("loading signature store {}", path.display()))
}

fn cmd_analyze(
    capture: &Path,
    opts: &AnalysisOpts,
    store: Option<&Path>,
    json: bool,
    dump_bursts: bool,
    output: Option<&Path>,
) -> Result<()> {
    require_file(capture)?;
    if let Some(s) = store {
        require_file(s)?;
    }
    let analyzer = opts.analyzer()?;
    let store = store.map(load_store).transpose()?;
    let (analysis, id) = run_analysis(capture, &analyzer)?;
    let corr = store.map(|s| correlate(&analysis, &s, &analyzer.oui, &opts.tolerance()));
    let report = AnalysisReport::new(id, &analysis, &analyzer.oui, corr, dump_bursts);
    let text = if json {
        serde_json::to_string_pretty(&report)? + "\n"
    } else {
        report.render_text()
    };
    emit(output, &text)
}

fn cmd_map(capture: &Path, opts: &AnalysisOpts, export: Option<&Path>) -> Result<()> {
    require_file(capture)?;
    let analyzer = opts.analyzer()?;
    let (analysis, _) = run_analysis(capture, &analyzer)?;
    match export {
        Some(p) => {
            let f = BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?);
            analysis.map.export(f)?;
        }
        None => analysis.map.export(std::io::stdout().lock())?,
    }
    eprintln!("{} nodes", analysis.map.len());
    Ok(())
}

fn cmd_extract(
    capture: &Path,
    store_path: &Path,
    label: &str,
    node: Option<u16>,
    hub: Option<&str>,
    opts: &AnalysisOpts,
) -> Result<()> {
    require_file(capture)?;
    let analyzer = opts.analyzer()?;
    let mut store = load_store(store_path)?;
    let (analysis, _) = run_analysis(capture, &analyzer)?;
    let node = match node {
        Some(n) => n,
        None => {
            let nodes = candidate_nodes(&analysis);
            match nodes[..] {
                [n] => n,
                [] => bail!("{}: no node carries application traffic", capture.display()),
                _ => bail!(
                    "{} candidate nodes ({}); pick one with --node",
                    nodes.len(),
                    nodes.iter().map(|&n| fmt_short(n)).collect::<Vec<_>>().join(", ")
                ),
            }
        }
    };
    let sig = extract_signature(&analysis, node, label, hub, &analyzer.oui, &opts.tolerance())?;
    println!("{} ({})", sig.label, fmt_short(node));
    for p in &sig.patterns {
        println!("  {p}");
    }
    store.add(sig)?;
    store.save(store_path)?;
    Ok(())
}

fn cmd_match(capture: &Path, store_path: &Path, json: bool, opts: &AnalysisOpts) -> Result<()> {
    require_file(capture)?;
    require_file(store_path)?;
    let analyzer = opts.analyzer()?;
    let store = load_store(store_path)?;
    let (analysis, id) = run_analysis(capture, &analyzer)?;
    let corr = correlate(&analysis, &store, &analyzer.oui, &opts.tolerance());
    if json {
        let pred = Predictions {
            capture_id: id,
            identifications: Vec::new(),
            signature_matches: corr.matches,
        };
        println!("{}", serde_json::to_string_pretty(&pred)?);
        return Ok(());
    }
    let mut report = AnalysisReport::new(id, &analysis, &analyzer.oui, Some(corr), false);
    report.identifications.clear();
    report.diagnostics.clear();
    println!("{} signature matches, {} collisions", report.signature_matches.len(), report.signature_collisions.len());
    let text = report.render_text();
    if let Some(i) = text.find("signature matches:") {
        print!("{}", &text[i..]);
    }
    Ok(())
}

fn cmd_generate(config: &Path, out: &Path, truth: &Path, seed: Option<u64>) -> Result<()> {
    require_file(config)?;
    let mut cfg = ScenarioConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let g = generate(&cfg)?;
    g.write(out, truth)
        .with_context(|| format!("writing {} and {}", out.display(), truth.display()))?;
    println!(
        "{} frames, {} events, {} nodes, capture {}",
        g.frames.len(),
        g.truth.events.len(),
        g.truth.nodes.len(),
        g.truth.capture_id
    );
    Ok(())
}

fn pct(r: Result<f64, zigbee_infer::synth::EvalError>) -> String {
    r.map_or_else(|_| "undefined".into(), |v| format!("{:.1}%", v * 100.0))
}

fn cmd_evaluate(predictions: &Path, truth: &Path, json: bool) -> Result<()> {
    require_file(predictions)?;
    require_file(truth)?;
    let pred: Predictions = serde_json::from_reader(BufReader::new(File::open(predictions)?))
        .with_context(|| format!("parsing predictions {}", predictions.display()))?;
    let truth = GroundTruth::load(truth).with_context(|| format!("loading truth {}", truth.display()))?;
    let report = evaluate(&pred, &truth)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(());
    }
    let m = report.events;
    println!(
        "events: TP {} FN {} FP {} TN {}  TPR {}  FNR {}  Accuracy {}",
        m.tp,
        m.fn_,
        m.fp,
        m.tn,
        pct(m.tpr()),
        pct(m.fnr()),
        pct(m.accuracy())
    );
    if let Some(s) = report.average_score {
        println!("average score: {s:.2}");
    }
    if let Some(s) = report.signatures {
        println!(
            "signatures: TP {} FN {} FP {}  TPR {}",
            s.tp,
            s.fn_,
            s.fp,
            pct(s.tpr())
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze {
            capture,
            opts,
            store,
            json,
            dump_bursts,
            output,
        } => cmd_analyze(&capture, &opts, store.as_deref(), json, dump_bursts, output.as_deref()),
        Command::Map { capture, opts, export } => cmd_map(&capture, &opts, export.as_deref()),
        Command::Signatures(SignaturesCommand::Extract {
            capture,
            store,
            label,
            node,
            hub,
            opts,
        }) => cmd_extract(&capture, &store, &label, node, hub.as_deref(), &opts),
        Command::Signatures(SignaturesCommand::Match {
            capture,
            store,
            json,
            opts,
        }) => cmd_match(&capture, &store, json, &opts),
        Command::Generate {
            config,
            out,
            truth,
            seed,
        } => cmd_generate(&config, &out, &truth, seed),
        Command::Evaluate {
            predictions,
            truth,
            json,
        } => cmd_evaluate(&predictions, &truth, json),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
