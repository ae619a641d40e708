use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use ouq_cli::{exit_code, parse_problem_file, run, sweep, templates, RunFlags};

/// Sharp worst-case expectation bounds from moment, probability and support
/// information.
#[derive(Parser)]
#[command(name = "ouq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a JSON problem file.
    Solve {
        file: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Solve a named template; parameters are given as `--name value`.
    Template {
        name: String,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        args: Vec<String>,
    },
    /// Solve a template for several values of one parameter and print CSV.
    Sweep {
        template: String,
        #[arg(long)]
        param: String,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        values: Vec<String>,
        /// Hold another template parameter fixed, as `NAME=VALUE`.
        #[arg(long = "set", value_parser = parse_assignment, allow_hyphen_values = true)]
        set: Vec<(String, f64)>,
        /// Concurrent solves (default: hardware threads).
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// List templates and their parameters.
    Templates,
}

#[derive(Parser)]
#[command(name = "ouq template")]
struct FlagsOnly {
    #[command(flatten)]
    flags: RunFlags,
}

fn parse_assignment(s: &str) -> Result<(String, f64)> {
    let Some((k, v)) = s.split_once('=') else {
        bail!("expected NAME=VALUE, got '{s}'")
    };
    Ok((k.trim().to_string(), templates::parse_value(v)?))
}

/// Splits template arguments into parameter overrides and run flags.
fn split_template_args(
    t: &templates::Template,
    args: &[String],
) -> Result<(Vec<(String, f64)>, RunFlags)> {
    let mut overrides = Vec::new();
    let mut rest = vec!["ouq template".to_string()];
    let mut i = 0;
    while i < args.len() {
        let a = &args[i];
        let name = a.strip_prefix("--").unwrap_or("");
        let (key, inline) = match name.split_once('=') {
            Some((k, v)) => (k, Some(v.to_string())),
            None => (name, None),
        };
        if !key.is_empty() && t.params.iter().any(|(p, _)| *p == key) {
            let value = match inline {
                Some(v) => v,
                None => {
                    i += 1;
                    match args.get(i) {
                        Some(v) => v.clone(),
                        None => bail!("missing value for --{key}"),
                    }
                }
            };
            overrides.push((key.to_string(), templates::parse_value(&value)?));
        } else {
            rest.push(a.clone());
        }
        i += 1;
    }
    let flags = FlagsOnly::try_parse_from(rest)?.flags;
    Ok((overrides, flags))
}

fn print_report(report: &ouq_cli::RunReport) -> Result<ExitCode> {
    println!("{}", serde_json::to_string_pretty(report)?);
    match report.bound {
        Some(b) => eprintln!("status {} bound {b:.6}", report.status),
        None => eprintln!("status {}", report.status),
    }
    Ok(ExitCode::from(exit_code(report.status) as u8))
}

fn main_inner() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve { file, flags } => {
            let problem = parse_problem_file(&file)?;
            print_report(&run(&problem, &flags, (-10.0, 10.0))?)
        }
        Command::Template { name, args } => {
            let t = templates::find(&name)?;
            let (overrides, flags) = split_template_args(&t, &args)?;
            let problem = t.build(&overrides)?;
            print_report(&run(&problem, &flags, (t.lo, t.hi))?)
        }
        Command::Sweep {
            template,
            param,
            values,
            set,
            jobs,
            flags,
        } => {
            let values = values
                .iter()
                .map(|v| templates::parse_value(v))
                .collect::<Result<Vec<f64>>>()?;
            for line in sweep(&template, &param, &values, &set, &flags, jobs)? {
                println!("{line}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Templates => {
            for t in templates::templates() {
                let params: Vec<String> =
                    t.params.iter().map(|(k, v)| format!("--{k} {v}")).collect();
                println!(
                    "{:<14} {}\n{:<14} {}",
                    t.name,
                    t.about,
                    "",
                    params.join(" ")
                );
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match main_inner() {
        Ok(code) => code,
        Err(e) => {
            if let Some(ce) = e.downcast_ref::<clap::Error>() {
                let _ = ce.print();
                return ExitCode::from(1);
            }
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
