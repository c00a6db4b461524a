mod args;
mod commands;

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::Parser;
use serde_json::json;

use args::{Cli, Command};
use commands::{config_json, resolve_config, Run};

/// 1 for bad input or configuration, 2 for everything else.
fn exit_code_of(err: &anyhow::Error) -> u8 {
    let user = err.chain().any(|e| {
        e.downcast_ref::<fusedet::Error>()
            .is_some_and(fusedet::Error::is_user_error)
    });
    if user {
        1
    } else {
        2
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Synth(_) => "synth",
        Command::Propose(_) => "propose",
        Command::Train(_) => "train",
        Command::Detect(_) => "detect",
        Command::Evaluate(_) => "evaluate",
        Command::Benchmark(_) => "benchmark",
        Command::DumpFeatures(_) => "dump-features",
    }
}

fn out_dir(c: &Command) -> &Path {
    match c {
        Command::Synth(a) => &a.out.out_dir,
        Command::Propose(a) => &a.out.out_dir,
        Command::Train(a) => &a.out.out_dir,
        Command::Detect(a) => &a.out.out_dir,
        Command::Evaluate(a) => &a.out.out_dir,
        Command::Benchmark(a) => &a.out.out_dir,
        Command::DumpFeatures(a) => &a.out.out_dir,
    }
}

fn seed(c: &Command) -> Option<u64> {
    match c {
        Command::Synth(a) => Some(a.seed),
        Command::Train(a) => Some(a.seed),
        _ => None,
    }
}

fn dispatch(run: &mut Run, cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Synth(a) => commands::synth(run, a),
        Command::Propose(a) => commands::propose(run, a),
        Command::Train(a) => commands::train_cmd(run, a),
        Command::Detect(a) => commands::detect_cmd(run, a),
        Command::Evaluate(a) => commands::evaluate(run, a),
        Command::Benchmark(a) => commands::benchmark(run, a),
        Command::DumpFeatures(a) => commands::dump_features(run, a),
    }
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(fusedet::Error::Config("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let dir = out_dir(&cli.command).to_path_buf();
    fs::create_dir_all(&dir).map_err(|e| fusedet::Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    // a bad config still leaves a manifest behind, recording the defaults
    let (config, config_error) = match resolve_config(cli.preset, cli.config.as_deref()) {
        Ok(c) => (c, None),
        Err(e) => (resolve_config(cli.preset, None)?, Some(e)),
    };
    let mut run = Run::new(config, dir);
    let start = Instant::now();
    let result = match config_error {
        Some(e) => Err(e.into()),
        None => dispatch(&mut run, cli),
    };

    let manifest = json!({
        "command": command_name(&cli.command),
        "argv": std::env::args().collect::<Vec<_>>(),
        "version": env!("CARGO_PKG_VERSION"),
        "status": match &result { Ok(()) => "ok".to_string(), Err(e) => format!("error: {e:#}") },
        "seed": seed(&cli.command),
        "threads": cli.threads.unwrap_or_else(rayon::current_num_threads),
        "preset": format!("{:?}", cli.preset).to_lowercase(),
        "config_file": cli.config,
        "config": config_json(&run.config),
        "details": run.details,
        "outputs": run.outputs,
        "elapsed_s": start.elapsed().as_secs_f64(),
    });
    let path = run.out_dir.join("run.json");
    let text = serde_json::to_string_pretty(&manifest).context("serialising run manifest")?;
    fs::write(&path, text + "\n").map_err(|e| fusedet::Error::Io { path, source: e })?;
    result
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_of(&e))
        }
    }
}
