//! Command-line front end: dataset generation, Monte-Carlo coverage studies,
//! multi-round simulation and the acceptance suite.

pub mod acceptance;
pub mod commands;
pub mod config;
pub mod error;
pub mod table;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Arg, ArgMatches, Command};

use config::{arg, positive, ConfigFile, Resolver};
pub use error::CliError;

pub fn command() -> Command {
    let with = |cmd: Command, keys: &[&'static str]| keys.iter().fold(cmd, |c, k| c.arg(arg(k)));
    Command::new("taskcp")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Conformal intervals for task outputs of reconstructed measurements")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .env("TASKCP_CONFIG")
                .value_name("FILE")
                .global(true)
                .help("TOML file of settings (flat `key = value` pairs)"),
        )
        .arg(
            Arg::new("workers")
                .long("workers")
                .env("TASKCP_WORKERS")
                .value_name("N")
                .global(true)
                .help("Worker threads [default: all cores]; never changes results"),
        )
        .subcommand(with(
            Command::new("generate").about("Generate a synthetic dataset directory"),
            &[
                "seed",
                "n",
                "samples_p",
                "dim",
                "rounds",
                "rows",
                "noise_std",
                "prior_std",
                "task_weight_norm",
                "task_bias",
                "out",
            ],
        ))
        .subcommand(with(
            Command::new("montecarlo")
                .about("Repeated calibration/test splits per method and round"),
            &[
                "data",
                "method",
                "rounds",
                "alpha",
                "trials",
                "cal_fraction",
                "seed",
                "reduction",
                "size_edges",
                "samples_p",
                "p_sweep",
                "sweep_round",
                "out",
                "format",
            ],
        ))
        .subcommand(with(
            Command::new("multiround").about("Simulate the stop-when-narrow acquisition protocol"),
            &[
                "data",
                "method",
                "alpha",
                "tau",
                "trials",
                "cal_fraction",
                "seed",
                "group_size",
                "reduction",
                "samples_p",
                "out",
                "format",
            ],
        ))
        .subcommand(with(
            Command::new("validate").about("Run the acceptance suite on self-generated data"),
            &["seed", "trials", "out", "format"],
        ))
}

fn dispatch(name: &str, r: &mut Resolver, stdout: &mut dyn Write) -> Result<(), CliError> {
    match name {
        "generate" => commands::generate(r, stdout),
        "montecarlo" => commands::montecarlo(r, stdout),
        "multiround" => commands::multiround(r, stdout),
        "validate" => commands::validate(r, stdout),
        other => Err(CliError::Config(format!("unknown command {other}"))),
    }
}

fn load_file(matches: &ArgMatches) -> Result<ConfigFile, CliError> {
    match matches.get_one::<String>("config") {
        Some(path) => ConfigFile::load(&PathBuf::from(path)),
        None => Ok(ConfigFile::default()),
    }
}

/// Parse `args` (including the program name) and run the selected command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            return write!(stdout, "{}", e.render()).map_err(|e| CliError::io("stdout", e));
        }
        Err(e) if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            return Err(CliError::Config(e.render().to_string()));
        }
        Err(e) => return Err(CliError::Config(e.render().to_string())),
    };
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let file = load_file(sub)?;
    let mut resolver = Resolver::new(&file, sub);
    let workers: Option<usize> = resolver.optional("workers", positive)?;
    // Command output is buffered so the command itself can run on the pool.
    let mut buf = Vec::new();
    let result = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| CliError::Config(format!("workers: {e}")))?
            .install(|| dispatch(name, &mut resolver, &mut buf)),
        None => dispatch(name, &mut resolver, &mut buf),
    };
    stdout
        .write_all(&buf)
        .map_err(|e| CliError::io("stdout", e))?;
    result
}
