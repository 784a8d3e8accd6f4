//! Alternating design of the alignment and the precoder, and dispatch of
//! the four compared methods.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::alignment::{greedy_alignment, AlignmentMatrix, ElementScoring};
use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::metrics::{sinr_vector, to_db, SinrVector};
use crate::precoding::{
    closed_form_gamma, g_objective, mmse_precoder, optimize_precoder, zf_precoder, AscentConfig, PrecodingMatrix,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MethodId {
    Proposed,
    ProposedNoOris,
    Zf,
    Mmse,
}

impl MethodId {
    pub const ALL: [MethodId; 4] = [MethodId::Proposed, MethodId::ProposedNoOris, MethodId::Zf, MethodId::Mmse];

    pub fn name(self) -> &'static str {
        match self {
            MethodId::Proposed => "proposed",
            MethodId::ProposedNoOris => "proposed_no_oris",
            MethodId::Zf => "zf",
            MethodId::Mmse => "mmse",
        }
    }
}

impl std::fmt::Display for MethodId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(MethodId::Proposed),
            "proposed_no_oris" | "no_oris" => Ok(MethodId::ProposedNoOris),
            "zf" => Ok(MethodId::Zf),
            "mmse" => Ok(MethodId::Mmse),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// Which alignment the ZF/MMSE baselines are evaluated with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BaselineAlignment {
    /// One greedy pass against the projected baseline precoder.
    #[default]
    Greedy,
    /// No ORIS contribution.
    LosOnly,
}

impl std::str::FromStr for BaselineAlignment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Self::Greedy),
            "los_only" => Ok(Self::LosOnly),
            other => Err(Error::Config(format!("baseline_alignment: unknown value {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlternationConfig {
    pub ascent: AscentConfig,
    pub max_outer_iterations: usize,
    /// Stop once an outer iteration gains less than this many dB.
    pub plateau_db: f64,
    pub scoring: ElementScoring,
    pub baseline_alignment: BaselineAlignment,
}

impl Default for AlternationConfig {
    fn default() -> Self {
        Self {
            ascent: AscentConfig::default(),
            max_outer_iterations: 50,
            plateau_db: 1e-4,
            scoring: ElementScoring::Isolated,
            baseline_alignment: BaselineAlignment::Greedy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterStep {
    pub mean_sinr_db: f64,
    /// Rows of F that changed relative to the previous iteration.
    pub alignment_changes: usize,
    /// Surrogate objective at the closed-form auxiliaries.
    pub objective: f64,
    /// False for a final iteration that failed to improve and was discarded.
    pub accepted: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AlternationTrace {
    pub steps: Vec<OuterStep>,
}

impl AlternationTrace {
    pub fn accepted(&self) -> impl Iterator<Item = &OuterStep> {
        self.steps.iter().filter(|s| s.accepted)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointDesign {
    pub precoder: PrecodingMatrix,
    pub alignment: AlignmentMatrix,
    pub trace: AlternationTrace,
}

/// Alternates greedy alignment and precoder ascent from `init` until the
/// alignment repeats, the mean SINR stops improving, or the iteration cap.
/// With `fixed_alignment` the alignment step is skipped and that matrix is
/// used throughout.
pub fn alternate(
    channels: &ChannelSet,
    noise_variance: f64,
    cfg: &AlternationConfig,
    init: PrecodingMatrix,
    fixed_alignment: Option<&AlignmentMatrix>,
) -> Result<JointDesign> {
    let mut current = init;
    let mut previous_alignment: Option<AlignmentMatrix> = None;
    let mut best: Option<(PrecodingMatrix, AlignmentMatrix, f64)> = None;
    let mut trace = AlternationTrace::default();

    for _ in 0..cfg.max_outer_iterations.max(1) {
        let alignment = match fixed_alignment {
            Some(f) => f.clone(),
            None => greedy_alignment(channels, &current, noise_variance, cfg.scoring)?.alignment,
        };
        if previous_alignment.as_ref() == Some(&alignment) {
            break;
        }
        let changes = previous_alignment.as_ref().map_or(alignment.num_elements(), |prev| alignment.changed_rows(prev));

        let effective = channels.effective_matrix(&alignment)?;
        let (precoder, _) = optimize_precoder(&effective, noise_variance, &cfg.ascent, &current)?;
        let sinr_db = sinr_vector(channels, &alignment, &precoder, noise_variance)?.mean_db();
        let gamma = closed_form_gamma(precoder.as_matrix(), &effective, noise_variance)?;
        let objective = g_objective(precoder.as_matrix(), &gamma, &effective, noise_variance)?;

        let gain = best.as_ref().map_or(f64::INFINITY, |(_, _, b)| sinr_db - b);
        let accepted = gain >= 0.0;
        trace.steps.push(OuterStep { mean_sinr_db: sinr_db, alignment_changes: changes, objective, accepted });
        if !accepted {
            break;
        }
        current = precoder.clone();
        best = Some((precoder, alignment.clone(), sinr_db));
        previous_alignment = Some(alignment);
        if gain < cfg.plateau_db {
            break;
        }
    }

    let (precoder, alignment, _) = best.expect("first outer iteration is always accepted");
    Ok(JointDesign { precoder, alignment, trace })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub precoder: PrecodingMatrix,
    pub alignment: AlignmentMatrix,
    pub sinr: SinrVector,
    /// Outer-loop trace for the alternating methods.
    pub trace: Option<AlternationTrace>,
}

/// Feasible random starting point drawn from `seed`.
pub fn initial_precoder(leds: usize, users: usize, seed: u64, cfg: &AscentConfig) -> Result<PrecodingMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PrecodingMatrix::random(leds, users, &mut rng, cfg.projection_alternations.max(1000), cfg.projection_tolerance)
}

pub fn run_method(
    method: MethodId,
    channels: &ChannelSet,
    noise_variance: f64,
    cfg: &AlternationConfig,
    seed: u64,
) -> Result<MethodOutcome> {
    let (nt, m, k) = (channels.num_leds(), channels.num_elements(), channels.num_users());
    match method {
        MethodId::Proposed | MethodId::ProposedNoOris => {
            let init = initial_precoder(nt, k, seed, &cfg.ascent)?;
            let zeros = AlignmentMatrix::unassigned(m, k);
            let fixed = (method == MethodId::ProposedNoOris).then_some(&zeros);
            let design = alternate(channels, noise_variance, cfg, init, fixed)?;
            let sinr = sinr_vector(channels, &design.alignment, &design.precoder, noise_variance)?;
            Ok(MethodOutcome {
                precoder: design.precoder,
                alignment: design.alignment,
                sinr,
                trace: Some(design.trace),
            })
        }
        MethodId::Zf | MethodId::Mmse => {
            let los = channels.effective_matrix(&AlignmentMatrix::unassigned(m, k))?;
            let baseline = if method == MethodId::Zf {
                zf_precoder(&los, &cfg.ascent)?
            } else {
                mmse_precoder(&los, noise_variance, &cfg.ascent)?
            };
            let alignment = match cfg.baseline_alignment {
                BaselineAlignment::Greedy => {
                    greedy_alignment(channels, &baseline.precoder, noise_variance, cfg.scoring)?.alignment
                }
                BaselineAlignment::LosOnly => AlignmentMatrix::unassigned(m, k),
            };
            let sinr = sinr_vector(channels, &alignment, &baseline.precoder, noise_variance)?;
            Ok(MethodOutcome { precoder: baseline.precoder, alignment, sinr, trace: None })
        }
    }
}

/// Mean SINR in dB of a method outcome.
pub fn outcome_db(outcome: &MethodOutcome) -> f64 {
    to_db(outcome.sinr.mean())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precoding::FEASIBILITY_TOLERANCE;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;

    fn random_channels(seed: u64, nt: usize, m: usize, k: usize) -> ChannelSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let los = (0..k).map(|_| DVector::from_fn(nt, |_, _| rng.random::<f64>())).collect();
        let nlos = (0..k).map(|_| DMatrix::from_fn(nt, m, |_, _| 0.2 * rng.random::<f64>())).collect();
        ChannelSet::new(los, nlos).unwrap()
    }

    #[test]
    fn method_names_round_trip() {
        for m in MethodId::ALL {
            assert_eq!(m.name().parse::<MethodId>().unwrap(), m);
        }
        assert!("ls".parse::<MethodId>().is_err());
    }

    #[test]
    fn no_elements_means_one_precoder_pass() {
        let ch = random_channels(1, 6, 0, 3);
        let init = initial_precoder(6, 3, 5, &AscentConfig::default()).unwrap();
        let d = alternate(&ch, 0.2, &AlternationConfig::default(), init, None).unwrap();
        assert_eq!(d.trace.steps.len(), 1);
        assert_eq!(d.alignment.num_elements(), 0);
    }

    #[test]
    fn single_user_converges_immediately() {
        let ch = random_channels(2, 5, 6, 1);
        let init = initial_precoder(5, 1, 5, &AscentConfig::default()).unwrap();
        let d = alternate(&ch, 0.2, &AlternationConfig::default(), init, None).unwrap();
        assert_eq!(d.alignment, AlignmentMatrix::all_to(6, 1, 0));
        assert_eq!(d.trace.steps.len(), 1);
    }

    #[test]
    fn outputs_are_feasible_and_monotone() {
        for seed in 0..8 {
            let ch = random_channels(seed, 6, 8, 3);
            let out = run_method(MethodId::Proposed, &ch, 0.2, &AlternationConfig::default(), seed).unwrap();
            assert!(out.precoder.is_feasible(FEASIBILITY_TOLERANCE));
            assert!(out.alignment.is_complete());
            let trace = out.trace.unwrap();
            let accepted: Vec<f64> = trace.accepted().map(|s| s.mean_sinr_db).collect();
            assert!(accepted.windows(2).all(|w| w[1] >= w[0] - 1e-6));
            assert!((out.sinr.mean_db() - accepted.last().unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn no_oris_matches_empty_panel() {
        let ch = random_channels(3, 6, 8, 3);
        let cfg = AlternationConfig::default();
        let a = run_method(MethodId::ProposedNoOris, &ch, 0.2, &cfg, 9).unwrap();
        let b = run_method(MethodId::Proposed, &ch.without_oris(), 0.2, &cfg, 9).unwrap();
        assert_eq!(a.sinr, b.sinr);
        assert_eq!(a.precoder, b.precoder);
    }

    #[test]
    fn baselines_are_feasible() {
        let ch = random_channels(4, 6, 8, 3);
        for method in [MethodId::Zf, MethodId::Mmse] {
            for baseline_alignment in [BaselineAlignment::Greedy, BaselineAlignment::LosOnly] {
                let cfg = AlternationConfig { baseline_alignment, ..Default::default() };
                let out = run_method(method, &ch, 0.2, &cfg, 0).unwrap();
                assert!(out.precoder.is_feasible(FEASIBILITY_TOLERANCE));
                assert!(out.trace.is_none());
                assert_eq!(out.alignment.is_complete(), baseline_alignment == BaselineAlignment::Greedy);
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let ch = random_channels(5, 6, 8, 3);
        let cfg = AlternationConfig::default();
        for method in MethodId::ALL {
            let a = run_method(method, &ch, 0.2, &cfg, 3).unwrap();
            let b = run_method(method, &ch, 0.2, &cfg, 3).unwrap();
            assert_eq!(a, b);
        }
    }
}
