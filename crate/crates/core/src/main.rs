use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use fedgm::error::Error;
use fedgm::harness::{self, ExperimentConfig, PhaseError, KEYS};

fn cli() -> Command {
    let overrides = KEYS.iter().map(|&key| {
        Arg::new(key)
            .long(key)
            .value_name("VALUE")
            .help_heading("Config overrides")
    });
    Command::new("fedgm")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Federated graph learning experiments")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(
            Command::new("run")
                .about("Run an experiment over all configured seeds")
                .arg(
                    Arg::new("config")
                        .long("config")
                        .short('c')
                        .value_name("FILE")
                        .value_parser(clap::value_parser!(PathBuf))
                        .help("key = value config file; flags override it"),
                )
                .arg(
                    Arg::new("force")
                        .long("force")
                        .action(ArgAction::SetTrue)
                        .help("Reuse a non-empty output directory"),
                )
                .args(overrides),
        )
        .subcommand(
            Command::new("compare")
                .about("Tabulate the summaries of two or more run directories")
                .arg(
                    Arg::new("dirs")
                        .required(true)
                        .num_args(2..)
                        .value_parser(clap::value_parser!(PathBuf)),
                )
                .arg(
                    Arg::new("csv")
                        .long("csv")
                        .action(ArgAction::SetTrue)
                        .help("Print CSV instead of a table"),
                ),
        )
        .subcommand(
            Command::new("convert")
                .about("Convert a .content/.cites citation dataset to the graph format")
                .arg(
                    Arg::new("raw")
                        .required(true)
                        .value_parser(clap::value_parser!(PathBuf)),
                )
                .arg(
                    Arg::new("out")
                        .required(true)
                        .value_parser(clap::value_parser!(PathBuf)),
                ),
        )
}

fn tag(phase: &'static str) -> impl FnOnce(Error) -> PhaseError {
    move |source| PhaseError { phase, source }
}

fn run(m: &ArgMatches) -> Result<(), PhaseError> {
    let mut cfg = match m.get_one::<PathBuf>("config") {
        Some(path) => ExperimentConfig::from_file(path).map_err(tag("config"))?,
        None => ExperimentConfig::default(),
    };
    for &key in KEYS {
        if let Some(value) = m.get_one::<String>(key) {
            cfg.set(key, value).map_err(tag("config"))?;
        }
    }
    let report = harness::run(&cfg, m.get_flag("force"))?;
    let s = &report.summary;
    println!(
        "{} on {}: {:.2} ± {:.2} over {} seeds ({})",
        s.method,
        s.dataset,
        100.0 * s.mean,
        100.0 * s.std,
        s.finals.len(),
        report.output.display()
    );
    Ok(())
}

fn compare(m: &ArgMatches) -> Result<(), PhaseError> {
    let dirs: Vec<PathBuf> = m.get_many::<PathBuf>("dirs").into_iter().flatten().cloned().collect();
    let table = harness::compare(&dirs).map_err(tag("compare"))?;
    if m.get_flag("csv") {
        print!("{}", table.to_csv().map_err(tag("compare"))?);
    } else {
        print!("{}", table.to_text());
    }
    Ok(())
}

fn convert(m: &ArgMatches) -> Result<(), PhaseError> {
    let raw = m.get_one::<PathBuf>("raw").expect("required");
    let out = m.get_one::<PathBuf>("out").expect("required");
    let r = harness::convert_planetoid(raw, out).map_err(tag("convert"))?;
    println!(
        "N {} D {} C {} edges {} -> {}",
        r.nodes,
        r.features,
        r.classes,
        r.edges,
        out.display()
    );
    Ok(())
}

fn init_workers() -> Result<(), PhaseError> {
    let Ok(raw) = std::env::var("FEDGM_WORKERS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .map_err(|_| Error::Config(format!("FEDGM_WORKERS: not a count: '{raw}'")))
        .map_err(tag("config"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("FEDGM_WORKERS: {e}")))
        .map_err(tag("config"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let matches = cli().get_matches();
    let result = init_workers().and_then(|()| match matches.subcommand() {
        Some(("run", m)) => run(m),
        Some(("compare", m)) => compare(m),
        Some(("convert", m)) => convert(m),
        _ => unreachable!("subcommand_required"),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
