//! Subcommand implementations. Each reads its inputs through [`Ctx`] so that
//! digests land in the manifest, and writes artifacts through the output
//! directory so that `--format` applies uniformly.

mod ablate;
mod data;
mod eval;
mod overlap;
mod prune;
mod spectrum;
mod train;

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use svlens_core::tensorstore::{read_checkpoint, read_tokens, MatrixRole, RoleTable, TensorMap, TokenStream};
use svlens_nets::data::LabeledData;

use crate::error::{CliError, Result};
use crate::output::{write_manifest, OutputDir, RunLog};
use crate::{Ablation, Cli, Command, GenData, MatrixFilterArgs};

pub struct Ctx<'a> {
    pub cli: &'a Cli,
    pub out: OutputDir,
    pub log: RunLog,
    pub table: RoleTable,
}

impl Ctx<'_> {
    /// The command config: defaults overlaid with the `--config` file.
    pub fn config<T: DeserializeOwned + Serialize + Default>(&mut self) -> Result<T> {
        let value = match &self.cli.config {
            None => T::default(),
            Some(path) => {
                self.log.input(path)?;
                let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
        };
        Ok(value)
    }

    /// Records the effective config in the manifest.
    pub fn record_config<T: Serialize>(&mut self, value: &T) -> Result<()> {
        self.log.config = serde_json::to_value(value)?;
        Ok(())
    }

    pub fn checkpoint(&mut self, path: &Path) -> Result<TensorMap> {
        self.log.input(path)?;
        Ok(read_checkpoint(path)?)
    }

    pub fn tokens(&mut self, path: &Path) -> Result<TokenStream> {
        self.log.input(path)?;
        Ok(read_tokens(path)?)
    }

    pub fn labeled(&mut self, path: &Path) -> Result<LabeledData> {
        self.log.input(path)?;
        Ok(LabeledData::read(path)?)
    }
}

/// Selection of matrices by role kind, block and name substring; empty
/// criteria admit everything.
pub fn admits(filter: &MatrixFilterArgs, name: &str, role: &MatrixRole) -> bool {
    (filter.kinds.is_empty() || filter.kinds.contains(&role.kind))
        && (filter.blocks.is_empty() || role.block.is_some_and(|b| filter.blocks.contains(&b)))
        && (filter.names.is_empty() || filter.names.iter().any(|n| name.contains(n.as_str())))
}

/// Matrices passing `filter`, ordered by (role, block, name).
pub fn select(map: &TensorMap, table: &RoleTable, filter: &MatrixFilterArgs) -> Vec<(String, MatrixRole)> {
    let mut out: Vec<(String, MatrixRole)> = map
        .matrices_with_roles(table)
        .filter(|(n, _, r)| admits(filter, n, r))
        .map(|(n, _, r)| (n.to_string(), r))
        .collect();
    out.sort_by(|a, b| (a.1.kind, a.1.block, &a.0).cmp(&(b.1.kind, b.1.block, &b.0)));
    out
}

fn dispatch(ctx: &mut Ctx) -> Result<()> {
    if let Some(path) = &ctx.cli.roles {
        ctx.log.input(path)?;
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        ctx.table = RoleTable::from_json(&text).map_err(|e| CliError::Config(format!("role table: {e}")))?;
    }
    let cli = ctx.cli;
    match &cli.command {
        Command::Spectrum(a) => spectrum::run(ctx, a),
        Command::Overlap(a) => overlap::run(ctx, a),
        Command::Prune(a) => prune::run(ctx, a),
        Command::TrainMlp(a) => train::mlp(ctx, a),
        Command::TrainLm(a) => train::lm(ctx, a),
        Command::Eval(a) => eval::run(ctx, a),
        Command::Ablate(Ablation::DecileSweep(a)) => ablate::decile_sweep(ctx, a),
        Command::Ablate(Ablation::FinetuneOrder(a)) => ablate::finetune_order(ctx, a),
        Command::Ablate(Ablation::Lazy) => ablate::lazy(ctx),
        Command::GenData(GenData::Clusters(a)) => data::clusters(ctx, a),
        Command::GenData(GenData::Language(a)) => data::language(ctx, a),
        Command::GenData(GenData::Gaussian(a)) => data::gaussian(ctx, a),
        Command::GenData(GenData::LmInit) => data::lm_init(ctx),
        Command::DumpActivations(a) => data::dump(ctx, a),
    }
}

/// Runs the parsed command and writes the manifest, marked partial when the
/// command failed.
pub fn execute(cli: &Cli, command_line: Vec<String>) -> Result<()> {
    let out = OutputDir::create(&cli.out, cli.format)?;
    let mut ctx = Ctx {
        cli,
        out,
        log: RunLog {
            command_line,
            ..RunLog::default()
        },
        table: RoleTable::default(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let result = pool.install(|| dispatch(&mut ctx));
    let manifest = ctx.log.manifest(&ctx.out, result.as_ref().err());
    write_manifest(&ctx.out, &manifest)?;
    result
}
