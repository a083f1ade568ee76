//! `viogeom` command-line front end.
//!
//! Every subcommand resolves one [`RunConfig`](vio_geom::io::config::RunConfig),
//! runs a fixed composition of library stages and reports a
//! [`CommandOutcome`] carrying an exit status and a key=value summary.

pub mod cli;
pub mod commands;
pub mod context;
pub mod outcome;
pub mod stages;

use std::path::Path;

pub use cli::{Cli, Command};
pub use outcome::{CommandOutcome, ExitStatus, Report, Summary};

use outcome::{AtStage, StageResult};

/// Result of a run: the outcome plus anything that must go to stdout
/// verbatim (the configuration for `config echo`).
pub struct RunOutput {
    pub outcome: CommandOutcome,
    pub payload: Option<String>,
}

fn dispatch(cli: &Cli) -> StageResult<(Report, Option<String>)> {
    let cfg = context::resolve_config(cli.config.as_deref(), cli.command.dataset().map(|p| p.as_path()), cli.seed)
        .at("config")?;
    let plain = |r: StageResult<Report>| r.map(|r| (r, None));
    match &cli.command {
        Command::Synth { out, layout } => {
            let mut cfg = cfg;
            if let Some(l) = layout {
                cfg.synth.layout = (*l).into();
            }
            plain(commands::synth(&cfg, &out.out))
        }
        Command::Supervise { dataset, out } => plain(commands::supervise_cmd(&cfg, dataset, &out.out)),
        Command::Preintegrate {
            dataset,
            out,
            labels,
            bias,
        } => plain(commands::preintegrate_cmd(&cfg, dataset, &out.out, &labels.labels, bias)),
        Command::UpdateBias { dataset, out, labels } => {
            plain(commands::update_bias_cmd(&cfg, dataset, &out.out, &labels.labels))
        }
        Command::Integrate { dataset, out, labels } => {
            plain(commands::integrate_cmd(&cfg, dataset, &out.out, &labels.labels))
        }
        Command::Eval { est, gt, times, out } => plain(commands::eval_cmd(&cfg, est, gt, times, &out.out)),
        Command::Degrade { dataset, out } => plain(commands::degrade_cmd(&cfg, dataset, &out.out)),
        Command::FlowCompare { a, b, .. } => plain(commands::flow_compare(a, b)),
        Command::Pipeline { dataset, out } => plain(commands::pipeline(&cfg, dataset, &out.out)),
        Command::Config { action } => commands::config(&cfg, action).map(|(r, p)| (r, Some(p))),
    }
}

fn write_summary(dir: &Path, command: &str, summary: &Summary) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{command}_summary.txt")), summary.to_text())
}

/// Runs a parsed command line on a pool of `--workers` threads.
pub fn run(cli: &Cli) -> RunOutput {
    let name = cli.command.name();
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cli.workers {
            b = b.num_threads(n);
        }
        b.build()
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            return RunOutput {
                outcome: CommandOutcome::failure(name, ExitStatus::Usage, "workers", &e.to_string()),
                payload: None,
            }
        }
    };
    let (result, payload) = match pool.install(|| dispatch(cli)) {
        Ok((r, p)) => (Ok(r), p),
        Err(e) => (Err(e), None),
    };
    let mut outcome = CommandOutcome::new(name, result);
    if let Some(dir) = cli.command.out_dir() {
        if let Err(e) = write_summary(dir, name, &outcome.summary) {
            outcome.notes.push(format!("could not write summary into {}: {e}", dir.display()));
        }
    }
    RunOutput { outcome, payload }
}
