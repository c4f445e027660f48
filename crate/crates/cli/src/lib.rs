//! The `vslide` command. Every subcommand writes one JSON document to
//! stdout (a table with `--pretty` where one makes sense) and diagnostics
//! to stderr. Exit codes: 0 ok, 1 usage, 2 data error, 3 I/O error.

mod bench;
mod config;
mod error;
mod info;
mod mip;
mod render;
mod scan;
mod serve;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::Value;

use vslide_core::Execution;

pub use config::ConfigFile;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "vslide", version, about = "Store, serve and render gigapixel microscope slides")]
pub struct Cli {
    /// JSON file with defaults for every subcommand; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Human-readable output instead of compact JSON.
    #[arg(long, global = true)]
    pretty: bool,

    /// Run data-parallel loops on one thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scan and write it through the slide proxy into a VSF file.
    ScanSim(scan::ScanSimArgs),
    /// Print the header and per-level chunk statistics of a VSF file.
    Info(info::InfoArgs),
    /// Render a viewport of a local file or a `vsp://host:port/slide` URL to PNG.
    Render(render::RenderArgs),
    /// Serve slides over VSP1 and, with --http, the HTTP gateway.
    Serve(serve::ServeArgs),
    /// Like `serve`, and also accept START_SCAN requests (needs --output-dir and --catalog).
    Manager(serve::ServeArgs),
    /// Compare layouts under sequential and random access.
    Bench(bench::BenchArgs),
    /// Add mip levels to a finalized VSF file.
    Mip(mip::MipArgs),
}

/// Shared state handed to every subcommand.
pub(crate) struct Ctx {
    pub config: ConfigFile,
    pub exec: Execution,
    pub pretty: bool,
}

/// Result of a subcommand: a JSON document and, optionally, a table for
/// `--pretty`.
pub(crate) struct Output {
    pub json: Value,
    pub table: Option<String>,
}

impl From<Value> for Output {
    fn from(json: Value) -> Self {
        Output { json, table: None }
    }
}

impl Ctx {
    pub fn emit(&self, out: &Output) {
        let text = match (&out.table, self.pretty) {
            (Some(t), true) => t.clone(),
            (None, true) => serde_json::to_string_pretty(&out.json).expect("json values serialize"),
            (_, false) => out.json.to_string(),
        };
        let mut stdout = std::io::stdout().lock();
        let _ = writeln!(stdout, "{text}");
        let _ = stdout.flush();
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("vslide: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let ctx = Ctx {
        config,
        exec: if cli.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        },
        pretty: cli.pretty,
    };
    let out = match cli.command {
        Command::ScanSim(a) => scan::run(&ctx, a)?,
        Command::Info(a) => info::run(&ctx, a)?,
        Command::Render(a) => render::run(&ctx, a)?,
        Command::Serve(a) => return serve::run(&ctx, a, "serve"),
        Command::Manager(a) => return serve::run(&ctx, a, "manager"),
        Command::Bench(a) => bench::run(&ctx, a)?,
        Command::Mip(a) => mip::run(&ctx, a)?,
    };
    ctx.emit(&out);
    Ok(())
}
