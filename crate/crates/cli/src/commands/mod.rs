mod account;
mod calibrate;
mod compare;
mod mia;
mod noise;
mod simulate;
mod verify;

use dpweights::SCHEMA_VERSION;
use serde_json::{json, Value};

use crate::args::{Cli, Command};
use crate::failure::CliResult;
use crate::output::Out;
use crate::resolve::Resolver;

pub struct Ctx {
    pub resolve: Resolver,
    pub out: Out,
    pub seed: u64,
}

pub fn run(cli: &Cli) -> CliResult {
    let resolve = Resolver::load(cli.global.config.as_deref())?;
    let seed = resolve.or(cli.global.seed, &["seed"], 0)?;
    let ctx = Ctx {
        resolve,
        out: Out {
            json: cli.global.json,
            quiet: cli.global.quiet,
        },
        seed,
    };
    match &cli.command {
        Command::Calibrate(a) => calibrate::run(a, &ctx),
        Command::Noise(a) => noise::run(a, &ctx),
        Command::Account(a) => account::run(a, &ctx),
        Command::Simulate(a) => simulate::run(a, &ctx),
        Command::Verify(a) => verify::run(a, &ctx),
        Command::Mia(a) => mia::run(a, &ctx),
        Command::Compare(a) => compare::run(a, &ctx),
    }
}

/// Report skeleton every subcommand starts from.
fn header(command: &str) -> serde_json::Map<String, Value> {
    let Value::Object(m) = json!({ "schema_version": SCHEMA_VERSION, "command": command }) else {
        unreachable!()
    };
    m
}
