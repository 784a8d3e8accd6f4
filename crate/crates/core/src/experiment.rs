//! Monte-Carlo harness: seeded scenes, paired method comparison, SNR and
//! ORIS-size sweeps, and CSV / JSON-lines output.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::channel::{build_channels, los_gain, ChannelSet, OpticalParams};
use crate::error::{Error, Result};
use crate::geometry::{build_led_grid, build_oris_grid, sample_users, Luminaire, Receiver, RoomBox, Scene, Vec3, Wall};
use crate::metrics::{from_db, to_db, SinrVector};
use crate::optimizer::{run_method, AlternationConfig, MethodId};

/// Panel layout (rows, columns) for the supported ORIS sizes.
pub fn oris_layout(elements: usize) -> Result<(usize, usize)> {
    match elements {
        0 => Ok((0, 0)),
        24 => Ok((4, 6)),
        40 => Ok((5, 8)),
        64 => Ok((8, 8)),
        other => Err(Error::Config(format!("oris_elements must be one of 0, 24, 40, 64; got {other}"))),
    }
}

/// What the swept SNR is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SnrReference {
    /// Channels are divided by the LOS gain of the LED-to-work-plane link
    /// straight below the ceiling centre before σ² = 10^(−SNR/10) is applied.
    #[default]
    CoaxialLos,
    /// σ² = 10^(−SNR/10) against the raw channel gains.
    Transmit,
}

impl std::str::FromStr for SnrReference {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coaxial_los" => Ok(Self::CoaxialLos),
            "transmit" => Ok(Self::Transmit),
            other => Err(Error::Config(format!("snr_reference: unknown value {other:?}"))),
        }
    }
}

/// How per-trial mean SINRs are averaged across trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Averaging {
    #[default]
    Linear,
    Db,
}

impl std::str::FromStr for Averaging {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "db" => Ok(Self::Db),
            other => Err(Error::Config(format!("sinr_averaging: unknown value {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Trials on the rayon pool; identical to sequential without the
    /// `parallel` feature.
    #[default]
    Parallel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub room: RoomBox,
    pub led_rows: usize,
    pub led_cols: usize,
    pub led_spacing_m: f64,
    pub oris_elements: usize,
    pub oris_wall: Wall,
    pub oris_spacing_m: f64,
    pub oris_center_height_m: f64,
    pub users: usize,
    pub workplane_height_m: f64,
    /// The noise variance here is overwritten per swept SNR.
    pub optical: OpticalParams,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub methods: Vec<MethodId>,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub trial_log: Option<PathBuf>,
    pub alternation: AlternationConfig,
    pub snr_reference: SnrReference,
    pub averaging: Averaging,
    pub users_sweep: Vec<usize>,
    pub oris_sweep: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            room: RoomBox::default(),
            led_rows: 5,
            led_cols: 5,
            led_spacing_m: 0.5,
            oris_elements: 64,
            oris_wall: Wall::YMin,
            oris_spacing_m: 0.1,
            oris_center_height_m: 1.5,
            users: 4,
            workplane_height_m: 0.85,
            optical: OpticalParams::default(),
            snr_db: (0..=6).map(|i| 5.0 * i as f64).collect(),
            trials: 200,
            methods: MethodId::ALL.to_vec(),
            seed: 1,
            output: None,
            trial_log: None,
            alternation: AlternationConfig::default(),
            snr_reference: SnrReference::CoaxialLos,
            averaging: Averaging::Linear,
            users_sweep: vec![4, 6],
            oris_sweep: vec![24, 40, 64],
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.snr_db.is_empty() {
            return Err(Error::Config("snr_db must list at least one value".into()));
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("snr_db values must be finite".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods must list at least one method".into()));
        }
        if self.users == 0 || self.users_sweep.contains(&0) {
            return Err(Error::Config("users must be at least 1".into()));
        }
        oris_layout(self.oris_elements)?;
        for &m in &self.oris_sweep {
            oris_layout(m)?;
        }
        if !(self.workplane_height_m > 0.0 && self.workplane_height_m < self.room.height_m) {
            return Err(Error::Config(format!("workplane_height must lie in (0, {})", self.room.height_m)));
        }
        OpticalParams { noise_variance: 1.0, ..self.optical }.validate()?;
        self.alternation.ascent.validate()?;
        // layouts must fit the room
        build_led_grid(&self.room, self.led_rows, self.led_cols, self.led_spacing_m)?;
        let (rows, cols) = oris_layout(self.oris_elements)?;
        build_oris_grid(&self.room, self.oris_wall, rows, cols, self.oris_spacing_m, self.oris_center_height_m)?;
        Ok(())
    }

    pub fn with_users(&self, users: usize) -> Self {
        Self { users, ..self.clone() }
    }

    pub fn with_oris(&self, oris_elements: usize) -> Self {
        Self { oris_elements, ..self.clone() }
    }

    pub fn leds(&self) -> Result<Vec<Luminaire>> {
        build_led_grid(&self.room, self.led_rows, self.led_cols, self.led_spacing_m)
    }

    /// Channel scale that maps the configured SNR onto σ² = 10^(−SNR/10).
    pub fn reference_gain(&self) -> Result<f64> {
        match self.snr_reference {
            SnrReference::Transmit => Ok(1.0),
            SnrReference::CoaxialLos => {
                let led = Luminaire {
                    position: Vec3::new(self.room.width_m / 2.0, self.room.length_m / 2.0, self.room.height_m),
                    normal: Vec3::new(0.0, 0.0, -1.0),
                };
                let user = Receiver {
                    position: Vec3::new(self.room.width_m / 2.0, self.room.length_m / 2.0, self.workplane_height_m),
                    normal: Vec3::z(),
                };
                los_gain(&led, &user, &self.optical)
            }
        }
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `index` under `master`; independent of the trial count.
pub fn trial_seed(master: u64, index: usize) -> u64 {
    mix64(master ^ mix64(index as u64))
}

fn init_seed(trial_seed: u64) -> u64 {
    mix64(trial_seed ^ 0x7072_6563_6f64_6572)
}

pub fn noise_variance_for(snr_db: f64) -> f64 {
    from_db(-snr_db)
}

/// Scene and channels shared by every method in one trial.
#[derive(Debug, Clone)]
pub struct TrialScene {
    pub index: usize,
    pub seed: u64,
    pub scene: Scene,
    /// Channels already divided by the SNR reference gain.
    pub channels: ChannelSet,
}

pub fn trial_scene(cfg: &ExperimentConfig, index: usize) -> Result<TrialScene> {
    let seed = trial_seed(cfg.seed, index);
    let (rows, cols) = oris_layout(cfg.oris_elements)?;
    let oris = build_oris_grid(&cfg.room, cfg.oris_wall, rows, cols, cfg.oris_spacing_m, cfg.oris_center_height_m)?;
    let users = sample_users(&cfg.room, cfg.users, cfg.workplane_height_m, seed)?;
    let scene = Scene::new(cfg.room, cfg.leds()?, oris, users)?;
    let channels = build_channels(&scene, &cfg.optical)?.scaled(1.0 / cfg.reference_gain()?);
    Ok(TrialScene { index, seed, scene, channels })
}

fn method_on_scene(cfg: &ExperimentConfig, trial: &TrialScene, snr_db: f64, method: MethodId) -> Result<SinrVector> {
    let noise = noise_variance_for(snr_db);
    run_method(method, &trial.channels, noise, &cfg.alternation, init_seed(trial.seed)).map(|o| o.sinr)
}

fn wrap_trial(index: usize, seed: u64) -> impl FnOnce(Error) -> Error {
    move |e| Error::Trial { trial_index: index, seed, source: Box::new(e) }
}

/// Per-user linear SINRs of one method on one trial.
pub fn run_trial(cfg: &ExperimentConfig, snr_db: f64, method: MethodId, trial_index: usize) -> Result<SinrVector> {
    let seed = trial_seed(cfg.seed, trial_index);
    let trial = trial_scene(cfg, trial_index).map_err(wrap_trial(trial_index, seed))?;
    method_on_scene(cfg, &trial, snr_db, method).map_err(wrap_trial(trial_index, seed))
}

/// Every (SNR, method) result of one trial, SNR-major.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub index: usize,
    pub seed: u64,
    pub users: Vec<[f64; 3]>,
    pub results: Vec<(f64, MethodId, SinrVector)>,
}

fn run_full_trial(cfg: &ExperimentConfig, index: usize) -> Result<TrialRecord> {
    let seed = trial_seed(cfg.seed, index);
    let wrap = || wrap_trial(index, seed);
    let trial = trial_scene(cfg, index).map_err(wrap())?;
    let mut results = Vec::with_capacity(cfg.snr_db.len() * cfg.methods.len());
    for &snr in &cfg.snr_db {
        for &method in &cfg.methods {
            let sinr = method_on_scene(cfg, &trial, snr, method).map_err(wrap())?;
            results.push((snr, method, sinr));
        }
    }
    let users = trial.scene.users.iter().map(|u| [u.position.x, u.position.y, u.position.z]).collect();
    Ok(TrialRecord { index, seed, users, results })
}

#[cfg(feature = "parallel")]
fn collect_trials(cfg: &ExperimentConfig, execution: Execution) -> Result<Vec<TrialRecord>> {
    use rayon::prelude::*;
    match execution {
        Execution::Parallel => (0..cfg.trials).into_par_iter().map(|i| run_full_trial(cfg, i)).collect(),
        Execution::Sequential => (0..cfg.trials).map(|i| run_full_trial(cfg, i)).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn collect_trials(cfg: &ExperimentConfig, _execution: Execution) -> Result<Vec<TrialRecord>> {
    (0..cfg.trials).map(|i| run_full_trial(cfg, i)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: MethodId,
    pub users: usize,
    pub oris_elements: usize,
    pub snr_db: f64,
    pub mean_sinr_db: f64,
    pub std_sinr_db: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SinrReport {
    pub rows: Vec<ReportRow>,
}

pub const REPORT_HEADER: &str = "method,users,oris_elements,snr_db,mean_sinr_db,std_sinr_db,trials";

impl SinrReport {
    pub fn extend(&mut self, other: SinrReport) {
        self.rows.extend(other.rows);
    }

    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            (a.method, a.users, a.oris_elements)
                .cmp(&(b.method, b.users, b.oris_elements))
                .then(a.snr_db.total_cmp(&b.snr_db))
        });
    }

    pub fn find(&self, method: MethodId, users: usize, oris_elements: usize, snr_db: f64) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.users == users && r.oris_elements == oris_elements && r.snr_db == snr_db)
    }

    /// Rows sorted by (method, users, oris_elements, snr_db), six decimals.
    pub fn to_csv(&self) -> String {
        let mut sorted = self.clone();
        sorted.sort();
        let mut out = format!("{REPORT_HEADER}\n");
        for r in &sorted.rows {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{:.6},{:.6},{}",
                r.method, r.users, r.oris_elements, r.snr_db, r.mean_sinr_db, r.std_sinr_db, r.trials
            );
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(REPORT_HEADER) {
            return Err(Error::Config("report CSV header mismatch".into()));
        }
        let bad = |line: &str| Error::Config(format!("malformed report row {line:?}"));
        let rows = lines
            .filter(|l| !l.is_empty())
            .map(|line| {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 7 {
                    return Err(bad(line));
                }
                let num = |s: &str| s.parse::<f64>().map_err(|_| bad(line));
                let int = |s: &str| s.parse::<usize>().map_err(|_| bad(line));
                Ok(ReportRow {
                    method: f[0].parse()?,
                    users: int(f[1])?,
                    oris_elements: int(f[2])?,
                    snr_db: num(f[3])?,
                    mean_sinr_db: num(f[4])?,
                    std_sinr_db: num(f[5])?,
                    trials: int(f[6])?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { rows })
    }
}

fn aggregate(per_trial_linear: &[f64], averaging: Averaging) -> (f64, f64) {
    let n = per_trial_linear.len() as f64;
    let dbs: Vec<f64> = per_trial_linear.iter().map(|&s| to_db(s)).collect();
    let mean_db_values = dbs.iter().sum::<f64>() / n;
    let mean = match averaging {
        Averaging::Linear => to_db(per_trial_linear.iter().sum::<f64>() / n),
        Averaging::Db => mean_db_values,
    };
    let std = if dbs.len() < 2 {
        0.0
    } else {
        (dbs.iter().map(|d| (d - mean_db_values).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean, std)
}

#[derive(Serialize)]
struct TrialLogLine<'a> {
    trial_index: usize,
    seed: u64,
    users: &'a [[f64; 3]],
    snr_db: f64,
    method: &'a str,
    sinr_db: Vec<f64>,
}

fn write_trial_log(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for rec in records {
        for (snr, method, sinr) in &rec.results {
            let line = TrialLogLine {
                trial_index: rec.index,
                seed: rec.seed,
                users: &rec.users,
                snr_db: *snr,
                method: method.name(),
                sinr_db: sinr.db(),
            };
            serde_json::to_writer(&mut out, &line).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Trial records for every (SNR, method) pair of `cfg`.
pub fn run_trials(cfg: &ExperimentConfig, execution: Execution) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    collect_trials(cfg, execution)
}

pub fn monte_carlo(cfg: &ExperimentConfig) -> Result<SinrReport> {
    monte_carlo_with(cfg, Execution::default())
}

/// One report row per (method, SNR) at the configured (K, M).
pub fn monte_carlo_with(cfg: &ExperimentConfig, execution: Execution) -> Result<SinrReport> {
    let records = run_trials(cfg, execution)?;
    if let Some(path) = &cfg.trial_log {
        write_trial_log(path, &records)?;
    }
    let mut rows = Vec::new();
    for (slot, &snr) in cfg.snr_db.iter().enumerate() {
        for (mslot, &method) in cfg.methods.iter().enumerate() {
            let idx = slot * cfg.methods.len() + mslot;
            // records are in trial-index order, which fixes the summation order
            let per_trial: Vec<f64> = records.iter().map(|r| r.results[idx].2.mean()).collect();
            let (mean_sinr_db, std_sinr_db) = aggregate(&per_trial, cfg.averaging);
            rows.push(ReportRow {
                method,
                users: cfg.users,
                oris_elements: cfg.oris_elements,
                snr_db: snr,
                mean_sinr_db,
                std_sinr_db,
                trials: cfg.trials,
            });
        }
    }
    let mut report = SinrReport { rows };
    report.sort();
    Ok(report)
}

/// Monte-Carlo over every configured SNR for each user count in `users_sweep`.
pub fn sweep_snr(cfg: &ExperimentConfig) -> Result<SinrReport> {
    let mut report = SinrReport::default();
    for &k in &cfg.users_sweep {
        report.extend(monte_carlo(&cfg.with_users(k))?);
    }
    report.sort();
    Ok(report)
}

/// Monte-Carlo over every configured SNR for each panel size in `oris_sweep`.
pub fn sweep_oris(cfg: &ExperimentConfig) -> Result<SinrReport> {
    let mut report = SinrReport::default();
    for &m in &cfg.oris_sweep {
        report.extend(monte_carlo(&cfg.with_oris(m))?);
    }
    report.sort();
    Ok(report)
}

pub fn emit_report(report: &SinrReport, path: &Path) -> Result<()> {
    std::fs::write(path, report.to_csv())?;
    Ok(())
}
