//! Command-line front end.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_config, parse_methods, Overrides};
use crate::error::{Error, Result};
use crate::experiment::{emit_report, monte_carlo, sweep_oris, sweep_snr, trial_scene, ExperimentConfig, SinrReport};
use crate::validate::{format_table, run_suite};

#[derive(Debug, Parser)]
#[command(name = "oris-vlc", version, about = "ORIS-assisted multi-user MIMO VLC precoding simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte-Carlo run at the configured user count and ORIS size.
    Simulate(Common),
    /// SNR sweep for every user count in `users_sweep`.
    SweepSnr(Common),
    /// SNR sweep for every ORIS size in `oris_sweep`.
    SweepOris(Common),
    /// Run the numerical self-check suite.
    Validate,
    /// Write the channel gains of one seeded scene as CSV.
    DumpChannels {
        #[command(flatten)]
        common: Common,
        /// Trial index whose scene is dumped.
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
}

#[derive(Debug, Args, Default)]
pub struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub oris_elements: Option<usize>,
    /// Comma-separated SNR list in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub snr_db: Option<Vec<f64>>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Comma-separated methods: proposed, proposed_no_oris, zf, mmse.
    #[arg(long)]
    pub method: Option<String>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Common {
    pub fn overrides(&self) -> Result<Overrides> {
        Ok(Overrides {
            seed: self.seed,
            users: self.users,
            oris_elements: self.oris_elements,
            snr_db: self.snr_db.clone(),
            trials: self.trials,
            methods: self.method.as_deref().map(parse_methods).transpose()?,
            output: self.out.clone(),
        })
    }

    pub fn load(&self) -> Result<ExperimentConfig> {
        parse_config(self.config.as_deref(), &self.overrides()?)
    }
}

fn write_out(cfg: &ExperimentConfig, text: &str) -> Result<()> {
    match &cfg.output {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn summary(report: &SinrReport) -> String {
    let mut out = String::from("method            K   M    SNR dB   mean SINR dB   std dB\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{:<16} {:>2} {:>3} {:>9.2} {:>14.3} {:>8.3}\n",
            r.method.name(),
            r.users,
            r.oris_elements,
            r.snr_db,
            r.mean_sinr_db,
            r.std_sinr_db
        ));
    }
    out
}

fn finish(cfg: &ExperimentConfig, report: &SinrReport) -> Result<()> {
    match &cfg.output {
        Some(path) => {
            emit_report(report, path)?;
            eprint!("{}", summary(report));
        }
        None => write_out(cfg, &report.to_csv())?,
    }
    Ok(())
}

/// Runs one invocation; the caller maps errors to exit codes.
pub fn run_cli(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(common) => {
            let cfg = common.load()?;
            finish(&cfg, &monte_carlo(&cfg)?)
        }
        Command::SweepSnr(common) => {
            let cfg = common.load()?;
            finish(&cfg, &sweep_snr(&cfg)?)
        }
        Command::SweepOris(common) => {
            let cfg = common.load()?;
            finish(&cfg, &sweep_oris(&cfg)?)
        }
        Command::Validate => {
            let results = run_suite()?;
            print!("{}", format_table(&results));
            let failed = results.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                return Err(Error::Refused(format!("{failed} validation check(s) failed")));
            }
            Ok(())
        }
        Command::DumpChannels { common, trial } => {
            let cfg = common.load()?;
            let scene = trial_scene(&cfg, *trial)?;
            write_out(&cfg, &scene.channels.to_csv())
        }
    }
}

/// Parses the process arguments, runs, and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_cli(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::MethodId;

    fn parse(args: &[&str]) -> std::result::Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("oris-vlc").chain(args.iter().copied()))
    }

    #[test]
    fn flags_parse() {
        let cli =
            parse(&["simulate", "--seed", "7", "--snr-db", "0,5", "--method", "zf,mmse", "--users", "6"]).unwrap();
        let Command::Simulate(c) = cli.command else { panic!() };
        let o = c.overrides().unwrap();
        assert_eq!(o.seed, Some(7));
        assert_eq!(o.snr_db, Some(vec![0.0, 5.0]));
        assert_eq!(o.methods, Some(vec![MethodId::Zf, MethodId::Mmse]));
        assert_eq!(o.users, Some(6));
    }

    #[test]
    fn negative_snr_accepted() {
        let cli = parse(&["simulate", "--snr-db", "-5"]).unwrap();
        let Command::Simulate(c) = cli.command else { panic!() };
        assert_eq!(c.snr_db, Some(vec![-5.0]));
    }

    #[test]
    fn unknown_flag_rejected() {
        assert!(parse(&["simulate", "--colour", "blue"]).is_err());
        assert_eq!(main_with_args(["oris-vlc", "simulate", "--colour", "blue"]), 2);
    }

    #[test]
    fn bad_method_is_config_error() {
        assert_eq!(main_with_args(["oris-vlc", "simulate", "--method", "lsq", "--trials", "1"]), 2);
    }
}
