use nslab::cli::{cmd_experiment, cmd_forward, cmd_invert, CliError, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

const USAGE: &str = "usage: nslab forward|invert|experiment <name> --config <file> --out <dir>";

struct CliArgs {
    command: String,
    experiment: Option<String>,
    config: PathBuf,
    out: PathBuf,
}

fn parse_args(mut args: impl Iterator<Item = String>) -> Result<CliArgs, String> {
    let command = args.next().ok_or(USAGE)?;
    if !matches!(command.as_str(), "forward" | "invert" | "experiment") {
        return Err(format!("unknown command {command:?}\n{USAGE}"));
    }
    let mut experiment = None;
    let mut config = None;
    let mut out = None;
    let mut rest = args.peekable();
    if command == "experiment" {
        match rest.peek() {
            Some(name) if !name.starts_with("--") => experiment = rest.next(),
            _ => return Err(format!("experiment needs a name\n{USAGE}")),
        }
    }
    while let Some(arg) = rest.next() {
        match arg.as_str() {
            "--config" => config = rest.next().map(PathBuf::from),
            "--out" => out = rest.next().map(PathBuf::from),
            other => return Err(format!("unexpected argument {other:?}\n{USAGE}")),
        }
    }
    Ok(CliArgs {
        command,
        experiment,
        config: config.ok_or(format!("missing --config\n{USAGE}"))?,
        out: out.ok_or(format!("missing --out\n{USAGE}"))?,
    })
}

fn run(args: CliArgs) -> Result<(), CliError> {
    let config = RunConfig::load(&args.config)?;
    match args.command.as_str() {
        "forward" => cmd_forward(&config, &args.out),
        "invert" => cmd_invert(&config, &args.out),
        "experiment" => cmd_experiment(args.experiment.as_deref().unwrap(), &config, &args.out),
        _ => unreachable!(),
    }
}

fn main() -> ExitCode {
    let args = match parse_args(std::env::args().skip(1)) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("{msg}");
            return ExitCode::from(2);
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nslab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
