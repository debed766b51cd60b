mod args;

use anyhow::{Context, Result};
use clap::Parser;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;
use tempfile::NamedTempFile;

use args::{ClassifyArgs, Cli, Command, PredictArgs, ReportArgs, Scenario, SynthArgs, TraceArgs};
use dlacache::cachemodel::{classify, lru_oracle, write_classification_csv};
use dlacache::fmt::sig6;
use dlacache::predictor::{pipeline, write_predictions_csv};
use dlacache::report::read_predictions_report;
use dlacache::timings::{
    evaluate, load_timings_file, oracle_reference, synth_timings, DEFAULT_EXCLUDED,
};
use dlacache::trace::{generate_trace, write_trace_csv, AddressMap, KernelKind, Trace, TraceError};

/// Bad arguments; exits with status 1 rather than 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(e: impl std::fmt::Display) -> anyhow::Error {
    UsageError(e.to_string()).into()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Trace(a) => cmd_trace(&a),
        Command::Classify(a) => cmd_classify(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

fn build_trace(s: &Scenario) -> Result<Trace> {
    generate_trace(s.alg.into(), s.n, s.b, &AddressMap::packed(), &s.options()).map_err(|e| match e
    {
        TraceError::InvalidBlocking { .. } => usage(e),
        e => e.into(),
    })
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir)
        .with_context(|| format!("creating file in {}", dir.display()))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w)?;
        w.flush()?;
    }
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(fs::Permissions::from_mode(0o644))?;
    }
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn out_dir(dir: &Path) -> Result<&Path> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn cmd_trace(a: &TraceArgs) -> Result<()> {
    let trace = build_trace(&a.scenario)?;
    let dir = out_dir(&a.out)?;
    write_atomic(&dir.join("trace.json"), |w| {
        w.write_all(trace.to_json()?.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    })?;
    write_atomic(&dir.join("trace.csv"), |w| Ok(write_trace_csv(&trace, w)?))?;

    let copies = trace.count_kind(KernelKind::Copy);
    if copies > 0 {
        println!("invocations={} copy={}", trace.len(), copies);
    } else {
        println!("invocations={}", trace.len());
    }
    for (label, count) in trace.label_counts() {
        println!("{label}={count}");
    }
    Ok(())
}

fn cmd_classify(a: &ClassifyArgs) -> Result<()> {
    let config = a.cache.config();
    config.validate().map_err(usage)?;
    let policy = a.cache.policy();
    let trace = build_trace(&a.scenario)?;
    let classification = classify(&trace, &config, &policy);
    let oracle = lru_oracle(&trace, &config);
    let dir = out_dir(&a.out)?;
    write_atomic(&dir.join("classification.csv"), |w| {
        Ok(write_classification_csv(
            &trace,
            &classification,
            Some(&oracle),
            w,
        )?)
    })?;

    let (mut operands, mut in_cache, mut agree) = (0usize, 0usize, 0usize);
    for (inv, class) in trace.invocations.iter().zip(&classification.invocations) {
        if inv.kind == KernelKind::Copy {
            continue;
        }
        for op in &class.operands {
            operands += 1;
            in_cache += op.expected_in_cache() as usize;
            agree +=
                (op.expected_in_cache() == (oracle.hit(inv.index, op.ordinal) >= 0.5)) as usize;
        }
    }
    let agreement = if operands > 0 {
        agree as f64 / operands as f64
    } else {
        1.0
    };
    println!(
        "operands={operands} in_cache={in_cache} oracle_agreement={}",
        sig6(agreement)
    );
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let machine = a.machine();
    machine.validate().map_err(usage)?;
    let config = a.cache.config();
    config.validate().map_err(usage)?;
    let trace = build_trace(&a.scenario)?;
    let table = synth_timings(&trace, &machine)?;
    let oracle = lru_oracle(&trace, &config);
    let table = oracle_reference(&table, &trace, &oracle, config.line_size)?;
    let dir = out_dir(&a.out)?;
    write_atomic(&dir.join("timings.csv"), |w| Ok(table.write_csv(w)?))?;
    println!("timings={}", table.len());
    Ok(())
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let config = a.cache.config();
    config.validate().map_err(usage)?;
    let policy = a.cache.policy();
    let params = a.smooth.params();
    params.validate().map_err(usage)?;
    let trace = build_trace(&a.scenario)?;
    let timings = load_timings_file(&a.timings, Some(trace.len()))
        .with_context(|| format!("loading {}", a.timings.display()))?;
    let predictions = pipeline(&trace, &timings, &config, &policy, &params)?;
    let reference = timings.has_reference().then_some(&timings);

    let dir = out_dir(&a.out)?;
    write_atomic(&dir.join("predictions.csv"), |w| {
        Ok(write_predictions_csv(&predictions, reference, w)?)
    })?;
    match reference {
        Some(reference) => {
            let report = evaluate(&predictions, reference, &DEFAULT_EXCLUDED)?;
            write_atomic(&dir.join("error_report.json"), |w| {
                w.write_all(report.to_json().as_bytes())?;
                w.write_all(b"\n")?;
                Ok(())
            })?;
            println!(
                "predictions={} mean_abs_rel_error={} n_used={}",
                predictions.len(),
                sig6(report.mean_abs_rel_error),
                report.n_used
            );
        }
        None => println!("predictions={}", predictions.len()),
    }
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let path = a
        .predictions
        .clone()
        .unwrap_or_else(|| a.out.join("predictions.csv"));
    let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    let report = read_predictions_report(BufReader::new(file))
        .with_context(|| format!("reading {}", path.display()))?;
    let dir = out_dir(&a.out)?;
    for label in report.series.keys() {
        write_atomic(&dir.join(format!("{label}.csv")), |w| {
            Ok(report.write_series(label, w)?)
        })?;
    }
    println!("series={}", report.series.len());
    for (label, points) in &report.series {
        println!("{label}.csv={}", points.len());
    }
    Ok(())
}
