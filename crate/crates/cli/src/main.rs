mod args;
mod commands;
mod report;

use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::error::ErrorKind;
use clap::Parser;
use probe_oracle::{Execution, StudyConfig};

use crate::args::{Cli, Command, GlobalArgs};
use crate::report::{emit, write_manifest, InputError, Inputs, Run, UsageError};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    ExitCode::from(run(argv))
}

fn run(argv: Vec<String>) -> u8 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
        }
    };
    let command_name = argv.get(1).cloned().unwrap_or_default();
    match execute(&argv, cli) {
        Ok(()) => 0,
        Err(e) => {
            let code = classify(&e);
            eprintln!("error: {e:#}");
            if code == EXIT_USAGE {
                eprintln!("hint: run `probe-oracle {command_name} --help` for valid flags");
            }
            code
        }
    }
}

fn classify(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if cause.is::<InputError>() {
            return EXIT_DATA;
        }
        if let Some(err) = cause.downcast_ref::<probe_oracle::Error>() {
            return match err {
                probe_oracle::Error::InvalidArgument(_) => EXIT_USAGE,
                _ if err.is_data_error() => EXIT_DATA,
                _ => EXIT_INTERNAL,
            };
        }
    }
    EXIT_INTERNAL
}

fn thread_count(global: &GlobalArgs) -> Result<Option<usize>> {
    if let Some(n) = global.threads {
        return Ok(Some(n as usize));
    }
    match std::env::var("PROBE_ORACLE_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(UsageError(format!("PROBE_ORACLE_THREADS=`{v}` is not a positive integer; unset it or use --threads")).into()),
        },
        Err(_) => Ok(None),
    }
}

#[cfg(feature = "parallel")]
fn init_pool(threads: Option<usize>) -> Result<usize> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    builder.build_global()?;
    Ok(rayon::current_num_threads())
}

#[cfg(not(feature = "parallel"))]
fn init_pool(_threads: Option<usize>) -> Result<usize> {
    Ok(1)
}

fn execute(argv: &[String], cli: Cli) -> Result<()> {
    let started = Instant::now();
    let g = &cli.global;
    let threads = init_pool(thread_count(g)?)?;
    let cfg = StudyConfig {
        seed: g.seed,
        folds: g.folds as usize,
        control_draws: g.control_draws as usize,
        control_sigma_sq: g.control_sigma_sq,
        single_draw: g.single_draw,
        subset_cap: g.subset_cap,
        execution: Execution::Parallel,
        ..StudyConfig::default()
    };
    let json = g.json
        || g.out
            .as_deref()
            .is_some_and(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")));
    let mut inputs = Inputs::default();

    let mut synth_dir = None;
    let report = match &cli.command {
        Command::Probe {
            inputs: paths,
            samples_per_class,
            methods,
        } => commands::probe(&mut inputs, paths, *samples_per_class, methods.clone(), &cfg, json)?,
        Command::Regress { inputs: p, method, metric } => commands::regress(&mut inputs, p, *method, *metric, &cfg)?,
        Command::Anova {
            inputs: p,
            method,
            alpha,
            compress,
        } => commands::anova(&mut inputs, p, *method, *alpha, *compress)?,
        Command::OneLayer { inputs: p, method, alpha } => commands::one_layer(&mut inputs, p, *method, *alpha, &cfg)?,
        Command::Select { inputs: p, k, method } => commands::select(&mut inputs, p, *k, *method, &cfg)?,
        Command::AblateMethod { inputs: p, k } => commands::ablate_method(&mut inputs, p, *k, &cfg)?,
        Command::Mc { scores, features } => commands::mc(&mut inputs, scores, features, &cfg)?,
        Command::Fingerprint { probes, k, method } => commands::fingerprint(&mut inputs, probes, *k, *method, &cfg)?,
        Command::Summary { scores } => commands::summary(&mut inputs, scores)?,
        Command::Synth(cmd) => {
            let (report, dir) = commands::synth(cmd, &cfg)?;
            synth_dir = Some(dir);
            report
        }
    };

    let run = Run {
        argv,
        cfg: &cfg,
        threads,
        json,
        out: g.out.as_deref(),
        inputs: &inputs,
        started,
    };
    emit(&report, &run)?;
    if let Some(dir) = synth_dir {
        // the generated files get their own manifest beside them
        let outputs = match &report.body {
            report::Body::Table { table, .. } => table
                .rows
                .iter()
                .map(|r| serde_json::json!({ "path": dir.join(&r[0]).display().to_string(), "sha256": r[1] }))
                .collect(),
            report::Body::Raw { .. } => Vec::new(),
        };
        write_manifest(&report.command, &report.params, outputs, &run, Some(dir.join("manifest.json")))?;
    }
    Ok(())
}
