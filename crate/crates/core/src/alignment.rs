//! ORIS element-to-user alignment: the binary matrix F, greedy round-robin
//! design, and exhaustive / random references.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::metrics::{mean_sinr, ElementScorer};
use crate::precoding::PrecodingMatrix;

/// Binary M × K matrix stored as the owner of each element. Rows are either
/// empty or hold exactly one 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AlignmentMatrix {
    owners: Vec<Option<usize>>,
    users: usize,
}

impl AlignmentMatrix {
    /// All-zero matrix; used for the LOS-only ablation.
    pub fn unassigned(elements: usize, users: usize) -> Self {
        Self { owners: vec![None; elements], users }
    }

    pub fn all_to(elements: usize, users: usize, user: usize) -> Self {
        assert!(user < users);
        Self { owners: vec![Some(user); elements], users }
    }

    /// Only element `r` is assigned, to `user`.
    pub fn single(elements: usize, users: usize, r: usize, user: usize) -> Self {
        let mut f = Self::unassigned(elements, users);
        f.owners[r] = Some(user);
        f
    }

    pub fn from_owners(owners: Vec<Option<usize>>, users: usize) -> Result<Self> {
        if let Some(bad) = owners.iter().flatten().find(|&&k| k >= users) {
            return Err(Error::Dimension(format!("owner {bad} out of range for K={users}")));
        }
        Ok(Self { owners, users })
    }

    /// Complete assignment from a per-element user list.
    pub fn from_assignment(assignment: &[usize], users: usize) -> Result<Self> {
        Self::from_owners(assignment.iter().map(|&k| Some(k)).collect(), users)
    }

    /// Each element independently to a uniformly drawn user.
    pub fn random(elements: usize, users: usize, seed: u64) -> Result<Self> {
        Self::random_with(elements, users, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn random_with<R: Rng + ?Sized>(elements: usize, users: usize, rng: &mut R) -> Result<Self> {
        if users == 0 {
            return Err(Error::Config("random alignment needs at least one user".into()));
        }
        Ok(Self { owners: (0..elements).map(|_| Some(rng.random_range(0..users))).collect(), users })
    }

    pub fn num_elements(&self) -> usize {
        self.owners.len()
    }

    pub fn num_users(&self) -> usize {
        self.users
    }

    pub fn owner(&self, r: usize) -> Option<usize> {
        self.owners[r]
    }

    pub fn owners(&self) -> &[Option<usize>] {
        &self.owners
    }

    pub fn get(&self, r: usize, k: usize) -> u8 {
        u8::from(self.owners[r] == Some(k))
    }

    /// Indices of the elements aligned with user `k`, ascending.
    pub fn elements_of(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.owners.iter().enumerate().filter(move |(_, o)| **o == Some(k)).map(|(r, _)| r)
    }

    /// Per-user counts M_k.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.users];
        for k in self.owners.iter().flatten() {
            counts[*k] += 1;
        }
        counts
    }

    /// Every element serves exactly one user.
    pub fn is_complete(&self) -> bool {
        self.owners.iter().all(Option::is_some)
    }

    /// Number of rows that differ from `other`.
    pub fn changed_rows(&self, other: &Self) -> usize {
        self.owners.iter().zip(&other.owners).filter(|(a, b)| a != b).count()
            + self.owners.len().abs_diff(other.owners.len())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.owners.len(), self.users, |r, k| f64::from(self.get(r, k)))
    }

    /// CSV dump `element_index,user_index`, one row per assigned element.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("element_index,user_index\n");
        for (r, k) in self.owners.iter().enumerate() {
            if let Some(k) = k {
                let _ = writeln!(out, "{r},{k}");
            }
        }
        out
    }
}

/// How a candidate element is scored during the greedy pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ElementScoring {
    /// LOS plus the candidate element alone.
    #[default]
    Isolated,
    /// LOS plus every element already granted to the user plus the candidate.
    Incremental,
}

impl std::str::FromStr for ElementScoring {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "isolated" => Ok(Self::Isolated),
            "incremental" => Ok(Self::Incremental),
            other => Err(Error::Config(format!("element_scoring: unknown value {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyOutcome {
    pub alignment: AlignmentMatrix,
    /// Number of candidate-SINR evaluations performed.
    pub evaluations: usize,
}

/// Round-robin greedy alignment: users take turns, each taking the
/// remaining element with the highest candidate SINR, until no element is
/// left. Ties go to the lowest element index.
pub fn greedy_alignment(
    channels: &ChannelSet,
    precoder: &PrecodingMatrix,
    noise_variance: f64,
    scoring: ElementScoring,
) -> Result<GreedyOutcome> {
    let m = channels.num_elements();
    let k_users = channels.num_users();
    let mut scorer = ElementScorer::new(channels, precoder, noise_variance)?;
    let mut remaining: Vec<usize> = (0..m).collect();
    let mut owners = vec![None; m];

    for turn in 0..m {
        let k = turn % k_users;
        let mut best_pos = 0;
        let mut best = f64::NEG_INFINITY;
        for (pos, &r) in remaining.iter().enumerate() {
            let s = scorer.score(k, r);
            // NaN never wins; strict > keeps the lowest index on ties
            if s > best {
                best = s;
                best_pos = pos;
            }
        }
        let chosen = remaining.remove(best_pos);
        owners[chosen] = Some(k);
        if scoring == ElementScoring::Incremental {
            scorer.absorb(k, chosen);
        }
    }

    Ok(GreedyOutcome { alignment: AlignmentMatrix { owners, users: k_users }, evaluations: scorer.evaluations() })
}

pub const EXHAUSTIVE_LIMIT: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveOutcome {
    pub alignment: AlignmentMatrix,
    pub mean_sinr: f64,
    pub evaluations: u64,
}

/// Enumerates all K^M complete alignments and keeps the best mean SINR;
/// ties keep the lexicographically smallest assignment.
pub fn exhaustive_alignment(
    channels: &ChannelSet,
    precoder: &PrecodingMatrix,
    noise_variance: f64,
    limit: u64,
) -> Result<ExhaustiveOutcome> {
    let m = channels.num_elements();
    let k_users = channels.num_users();
    let total = (k_users as u64)
        .checked_pow(m as u32)
        .filter(|&t| t <= limit)
        .ok_or_else(|| Error::Refused(format!("K^M = {k_users}^{m} exceeds the limit of {limit}")))?;

    let mut digits = vec![0usize; m];
    let mut best: Option<(Vec<usize>, f64)> = None;
    for _ in 0..total {
        let f = AlignmentMatrix::from_assignment(&digits, k_users)?;
        let s = mean_sinr(channels, &f, precoder, noise_variance)?;
        if best.as_ref().is_none_or(|(_, b)| s > *b) {
            best = Some((digits.clone(), s));
        }
        // odometer with the last element as the fastest digit
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < k_users {
                break;
            }
            *d = 0;
        }
    }
    let (assignment, mean_sinr) = best.expect("at least one alignment exists");
    Ok(ExhaustiveOutcome {
        alignment: AlignmentMatrix::from_assignment(&assignment, k_users)?,
        mean_sinr,
        evaluations: total,
    })
}
