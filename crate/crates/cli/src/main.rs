mod args;
mod commands;
mod exit;
mod source;

use clap::Parser;

use args::{Cli, Command};
use exit::{Outcome, INTERNAL};

fn common(c: &Command) -> &args::Common {
    match c {
        Command::Classify(a) => &a.common,
        Command::Check(a) => &a.common,
        Command::Integrate(a) => &a.common,
        Command::Sweep(a) => &a.common,
    }
}

fn run(cli: &Cli) -> Result<i32, Outcome> {
    if let Some(j) = common(&cli.command).jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .map_err(|e| Outcome {
                code: INTERNAL,
                error: e.into(),
            })?;
    }
    match &cli.command {
        Command::Classify(a) => commands::cmd_classify(a),
        Command::Check(a) => commands::cmd_check(a),
        Command::Integrate(a) => commands::cmd_integrate(a),
        Command::Sweep(a) => commands::cmd_sweep(a),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GEOEXT_LOG", "warn")).init();
    let cli = Cli::parse();
    let code = match run(&cli) {
        Ok(c) => c,
        Err(o) => {
            eprintln!("error: {:#}", o.error);
            o.code
        }
    };
    std::process::exit(code);
}
