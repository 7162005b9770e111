//! One module per subcommand. Each returns a [`RunRecord`]; the dispatcher
//! writes the run manifest once the command has succeeded.

mod eval;
mod generate;
mod market;
mod report;
mod train;

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::cli::{Cli, Command};
use crate::config::{FileConfig, UsageError};
use crate::manifest::{FileDigest, RunManifest};

/// Settings shared by every subcommand.
pub struct Ctx {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub file: FileConfig,
}

pub fn run(cli: &Cli, start: Instant) -> anyhow::Result<()> {
    let (file, config_path) = FileConfig::load(cli.config.as_deref())?;
    let seed = cli.seed.or(file.seed).or(file.generate.map(|g| g.seed)).unwrap_or(0);
    let workers = cli.workers.or(file.workers).unwrap_or(1);
    if workers == 0 {
        return Err(UsageError("--workers must be at least 1".into()).into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(workers).build_global()?;
    std::fs::create_dir_all(&cli.out_dir)?;
    let ctx = Ctx { out_dir: cli.out_dir.clone(), seed, file };

    let mut record = match &cli.command {
        Command::Generate(a) => generate::run(&ctx, a)?,
        Command::Train(a) => train::run(&ctx, a)?,
        Command::Eval(a) => eval::run(&ctx, a)?,
        Command::Ingest(a) => market::ingest(&ctx, a)?,
        Command::Backtest(a) => market::backtest(&ctx, a)?,
        Command::Report(a) => report::run(&ctx, a)?,
    };
    record.inputs.extend(config_path);
    let digest = |paths: &[PathBuf]| paths.iter().map(|p| FileDigest::of(p)).collect::<anyhow::Result<Vec<_>>>();
    let manifest = RunManifest {
        command: cli.command.name().into(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        seed,
        workers,
        config: record.config,
        inputs: digest(&record.inputs)?,
        outputs: digest(&record.outputs)?,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    let path = manifest.write(&ctx.out_dir)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// Write rows as CSV with a header.
pub fn write_csv<S: AsRef<str>>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<S>>) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(AsRef::as_ref))?;
    }
    w.flush()?;
    Ok(())
}

/// All regular files under `dir`, sorted, for recording checkpoint contents.
pub fn files_under(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}
