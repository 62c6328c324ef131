//! Command-line driver for the closed-loop benchmark scenarios.
//!
//! ```text
//! pcac run <config> [--out PATH] [--set key=value]...
//! pcac preset <name> [--steps N] [--out PATH] [--set key=value]...
//! pcac list-presets
//! ```
//!
//! Exit codes: 0 success, 2 configuration error, 3 simulation divergence.

use std::path::PathBuf;
use std::process::ExitCode;

use pcac::config::{self, ScenarioConfig, PRESET_NAMES};
use pcac::error::Error;
use pcac::scenario::{run_scenario, summary_path, write_log};

const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

fn usage() -> String {
    [
        "usage:",
        "  pcac run <config> [--out PATH] [--set key=value]...",
        "  pcac preset <name> [--steps N] [--out PATH] [--set key=value]...",
        "  pcac list-presets",
    ]
    .join("\n")
}

struct CommonArgs {
    out: Option<PathBuf>,
    sets: Vec<(String, String)>,
    steps: Option<usize>,
}

fn parse_common(args: &[String]) -> Result<CommonArgs, String> {
    let mut out = None;
    let mut sets = Vec::new();
    let mut steps = None;
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        match arg.as_str() {
            "--out" => {
                let v = it.next().ok_or("--out needs a path")?;
                out = Some(PathBuf::from(v));
            }
            "--steps" => {
                let v = it.next().ok_or("--steps needs a count")?;
                steps = Some(v.parse().map_err(|_| format!("bad step count '{v}'"))?);
            }
            "--set" => {
                let v = it.next().ok_or("--set needs key=value")?;
                let (k, val) =
                    v.split_once('=').ok_or_else(|| format!("bad override '{v}'"))?;
                sets.push((k.trim().to_string(), val.trim().to_string()));
            }
            other => return Err(format!("unexpected argument '{other}'")),
        }
    }
    Ok(CommonArgs { out, sets, steps })
}

fn apply_overrides(cfg: &mut ScenarioConfig, common: &CommonArgs) -> Result<(), Error> {
    if let Some(steps) = common.steps {
        cfg.n_steps = steps;
    }
    for (k, v) in &common.sets {
        cfg.apply_key(k, v)?;
    }
    cfg.validate()
}

fn execute(cfg: &ScenarioConfig, out: PathBuf) -> ExitCode {
    match run_scenario(cfg) {
        Ok(log) => {
            if let Err(e) = write_log(&log, &out) {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
            let s = log.summary();
            println!("wrote {} ({} rows) and {}", out.display(), log.rows.len(),
                summary_path(&out).display());
            println!("final_command_error       = {:.6e}", s.final_command_error);
            println!("rms_tracking_error_tail   = {:.6e}", s.rms_tracking_error_tail);
            match s.convergence_step {
                Some(k) => println!("convergence_step          = {k}"),
                None => println!("convergence_step          = null"),
            }
            ExitCode::SUCCESS
        }
        Err(run_err) => {
            eprintln!("error: {run_err}");
            if !run_err.partial.rows.is_empty() && write_log(&run_err.partial, &out).is_ok() {
                eprintln!("partial log written to {}", out.display());
            }
            ExitCode::from(EXIT_DIVERGED)
        }
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(cmd) = args.first() else {
        eprintln!("{}", usage());
        return ExitCode::from(EXIT_CONFIG);
    };

    match cmd.as_str() {
        "list-presets" => {
            for name in PRESET_NAMES {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
        "run" => {
            let Some(path) = args.get(1) else {
                eprintln!("{}", usage());
                return ExitCode::from(EXIT_CONFIG);
            };
            let common = match parse_common(&args[2..]) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}\n{}", usage());
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let mut cfg = match config::load_config(std::path::Path::new(path)) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            if let Err(e) = apply_overrides(&mut cfg, &common) {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_CONFIG);
            }
            let stem = std::path::Path::new(path)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "run".into());
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from(format!("{stem}.csv")));
            execute(&cfg, out)
        }
        "preset" => {
            let Some(name) = args.get(1) else {
                eprintln!("{}", usage());
                return ExitCode::from(EXIT_CONFIG);
            };
            let common = match parse_common(&args[2..]) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}\n{}", usage());
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let mut cfg = match config::preset_by_name(name) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            if let Err(e) = apply_overrides(&mut cfg, &common) {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_CONFIG);
            }
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from(format!("{name}.csv")));
            execute(&cfg, out)
        }
        other => {
            eprintln!("error: unknown command '{other}'\n{}", usage());
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
