//! Per-user SINR, mean SINR, and the single-element candidate SINR used
//! when scoring ORIS elements.

use nalgebra::{DMatrix, DVector};

use crate::alignment::AlignmentMatrix;
use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::precoding::PrecodingMatrix;

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Linear per-user SINRs.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrVector {
    linear: Vec<f64>,
}

impl SinrVector {
    pub fn from_linear(linear: Vec<f64>) -> Self {
        Self { linear }
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn db(&self) -> Vec<f64> {
        self.linear.iter().map(|&s| to_db(s)).collect()
    }

    pub fn len(&self) -> usize {
        self.linear.len()
    }

    pub fn is_empty(&self) -> bool {
        self.linear.is_empty()
    }

    /// Arithmetic mean in the linear domain.
    pub fn mean(&self) -> f64 {
        self.linear.iter().sum::<f64>() / self.linear.len() as f64
    }

    pub fn mean_db(&self) -> f64 {
        to_db(self.mean())
    }
}

fn check_noise(noise_variance: f64) -> Result<()> {
    if noise_variance >= 0.0 && noise_variance.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("noise variance must be nonnegative, got {noise_variance}")))
    }
}

/// K × K matrix with entry (k, j) = h_kᵀ p_j.
pub fn cross_gains(effective: &DMatrix<f64>, precoder: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if effective.nrows() != precoder.nrows() || effective.ncols() != precoder.ncols() {
        return Err(Error::Dimension(format!(
            "channels are {:?} but precoder is {:?}",
            effective.shape(),
            precoder.shape()
        )));
    }
    Ok(effective.tr_mul(precoder))
}

/// SINRs for composite channels given as the columns of `effective`.
/// A zero noise variance is accepted for limit checks.
pub fn sinr_from_effective(
    effective: &DMatrix<f64>,
    precoder: &DMatrix<f64>,
    noise_variance: f64,
) -> Result<SinrVector> {
    check_noise(noise_variance)?;
    let cross = cross_gains(effective, precoder)?;
    let k_users = cross.nrows();
    let linear = (0..k_users)
        .map(|k| {
            let signal = cross[(k, k)].powi(2);
            let interference: f64 = (0..k_users).filter(|&j| j != k).map(|j| cross[(k, j)].powi(2)).sum();
            signal / (interference + noise_variance)
        })
        .collect();
    Ok(SinrVector { linear })
}

pub fn sinr_vector(
    channels: &ChannelSet,
    alignment: &AlignmentMatrix,
    precoder: &PrecodingMatrix,
    noise_variance: f64,
) -> Result<SinrVector> {
    let effective = channels.effective_matrix(alignment)?;
    sinr_from_effective(&effective, precoder.as_matrix(), noise_variance)
}

pub fn sinr_user(
    channels: &ChannelSet,
    alignment: &AlignmentMatrix,
    precoder: &PrecodingMatrix,
    k: usize,
    noise_variance: f64,
) -> Result<f64> {
    check_noise(noise_variance)?;
    if k >= channels.num_users() {
        return Err(Error::Dimension(format!("user index {k} out of range")));
    }
    let p = precoder.as_matrix();
    if p.nrows() != channels.num_leds() || p.ncols() != channels.num_users() {
        return Err(Error::Dimension(format!("precoder shape {:?} does not match channels", p.shape())));
    }
    let h = channels.effective_channel(alignment, k)?;
    let row = h.transpose() * p;
    let signal = row[k].powi(2);
    let interference: f64 = row.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, v)| v * v).sum();
    Ok(signal / (interference + noise_variance))
}

pub fn mean_sinr(
    channels: &ChannelSet,
    alignment: &AlignmentMatrix,
    precoder: &PrecodingMatrix,
    noise_variance: f64,
) -> Result<f64> {
    Ok(sinr_vector(channels, alignment, precoder, noise_variance)?.mean())
}

/// The three-term expansion of ‖(h + g)ᵀp‖² for LOS projection `a = hᵀp` and
/// single-element projection `b = gᵀp`.
#[inline]
fn expanded_power(a: f64, b: f64) -> f64 {
    a * a + 2.0 * b * a + b * b
}

/// Candidate SINR of user k if it were served by element r alone on top of
/// its LOS channel.
pub fn sinr_element(
    channels: &ChannelSet,
    precoder: &PrecodingMatrix,
    k: usize,
    r: usize,
    noise_variance: f64,
) -> Result<f64> {
    check_noise(noise_variance)?;
    if k >= channels.num_users() || r >= channels.num_elements() {
        return Err(Error::Dimension(format!(
            "(user {k}, element {r}) out of range for K={} M={}",
            channels.num_users(),
            channels.num_elements()
        )));
    }
    let p = precoder.as_matrix();
    let los = channels.los(k);
    let via = channels.nlos(k).column(r);
    let mut numerator = 0.0;
    let mut denominator = noise_variance;
    for j in 0..p.ncols() {
        let pj = p.column(j);
        let term = expanded_power(los.dot(&pj), via.dot(&pj));
        if j == k {
            numerator = term;
        } else {
            denominator += term;
        }
    }
    Ok(numerator / denominator)
}

/// Precomputed projections for repeated element scoring against a fixed
/// precoder: `base[(k, j)] = h_kᵀ p_j` and `via[k][(r, j)] = [H_kᵀ p_j]_r`.
pub(crate) struct ElementScorer {
    base: DMatrix<f64>,
    via: Vec<DMatrix<f64>>,
    noise_variance: f64,
    evaluations: usize,
}

impl ElementScorer {
    pub(crate) fn new(channels: &ChannelSet, precoder: &PrecodingMatrix, noise_variance: f64) -> Result<Self> {
        check_noise(noise_variance)?;
        let p = precoder.as_matrix();
        if p.nrows() != channels.num_leds() || p.ncols() != channels.num_users() {
            return Err(Error::Dimension(format!("precoder shape {:?} does not match channels", p.shape())));
        }
        let k_users = channels.num_users();
        let mut base = DMatrix::zeros(k_users, k_users);
        let mut via = Vec::with_capacity(k_users);
        for k in 0..k_users {
            let row: DVector<f64> = p.tr_mul(channels.los(k));
            base.set_row(k, &row.transpose());
            via.push(channels.nlos(k).tr_mul(p));
        }
        Ok(Self { base, via, noise_variance, evaluations: 0 })
    }

    pub(crate) fn score(&mut self, k: usize, r: usize) -> f64 {
        self.evaluations += 1;
        let via = &self.via[k];
        let mut numerator = 0.0;
        let mut denominator = self.noise_variance;
        for j in 0..self.base.ncols() {
            let term = expanded_power(self.base[(k, j)], via[(r, j)]);
            if j == k {
                numerator = term;
            } else {
                denominator += term;
            }
        }
        numerator / denominator
    }

    /// Folds element r into user k's base channel.
    pub(crate) fn absorb(&mut self, k: usize, r: usize) {
        for j in 0..self.base.ncols() {
            self.base[(k, j)] += self.via[k][(r, j)];
        }
    }

    pub(crate) fn evaluations(&self) -> usize {
        self.evaluations
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, nt: usize, m: usize, k: usize) -> (ChannelSet, PrecodingMatrix) {
        let los = (0..k).map(|_| DVector::from_fn(nt, |_, _| rng.random::<f64>())).collect();
        let nlos = (0..k).map(|_| DMatrix::from_fn(nt, m, |_, _| 0.3 * rng.random::<f64>())).collect();
        let p = DMatrix::from_fn(nt, k, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        (ChannelSet::new(los, nlos).unwrap(), PrecodingMatrix::new_unchecked(p))
    }

    #[test]
    fn single_user_no_interference() {
        let ch = ChannelSet::new(vec![DVector::from_vec(vec![1.0, 0.0])], vec![DMatrix::zeros(2, 0)]).unwrap();
        let p = PrecodingMatrix::new_unchecked(DMatrix::from_vec(2, 1, vec![1.0, 0.5]));
        let s = sinr_user(&ch, &AlignmentMatrix::unassigned(0, 1), &p, 0, 0.1).unwrap();
        assert!((s - 10.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_precoder_zero_sinr() {
        let ch = ChannelSet::new(vec![DVector::from_vec(vec![1.0, 0.0])], vec![DMatrix::zeros(2, 0)]).unwrap();
        let p = PrecodingMatrix::new_unchecked(DMatrix::from_vec(2, 1, vec![0.0, 1.0]));
        assert_eq!(sinr_user(&ch, &AlignmentMatrix::unassigned(0, 1), &p, 0, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn two_user_brute_force() {
        // h1 = (1, 2), h2 = (0.5, 1); p1 = (1, -1), p2 = (0.5, 0.25)
        let ch = ChannelSet::new(
            vec![DVector::from_vec(vec![1.0, 2.0]), DVector::from_vec(vec![0.5, 1.0])],
            vec![DMatrix::zeros(2, 0), DMatrix::zeros(2, 0)],
        )
        .unwrap();
        let p = PrecodingMatrix::new_unchecked(DMatrix::from_vec(2, 2, vec![1.0, -1.0, 0.5, 0.25]));
        let f = AlignmentMatrix::unassigned(0, 2);
        let noise = 0.2;
        // h1ᵀp1 = -1, h1ᵀp2 = 1; h2ᵀp1 = -0.5, h2ᵀp2 = 0.5
        let s1 = 1.0 / (1.0 + noise);
        let s2 = 0.25 / (0.25 + noise);
        assert!((sinr_user(&ch, &f, &p, 0, noise).unwrap() - s1).abs() < 1e-15);
        assert!((sinr_user(&ch, &f, &p, 1, noise).unwrap() - s2).abs() < 1e-15);
        assert!((mean_sinr(&ch, &f, &p, noise).unwrap() - (s1 + s2) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn mean_of_known_values() {
        let v = SinrVector::from_linear(vec![4.0, 6.0]);
        assert_eq!(v.mean(), 5.0);
        let c = SinrVector::from_linear(vec![3.5; 5]);
        assert_eq!(c.mean(), 3.5);
        assert!((SinrVector::from_linear(vec![100.0]).mean_db() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn mean_matches_per_user_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let (ch, p) = random_instance(&mut rng, 6, 5, 3);
            let f = AlignmentMatrix::random_with(5, 3, &mut rng).unwrap();
            let sum: f64 = (0..3).map(|k| sinr_user(&ch, &f, &p, k, 0.3).unwrap()).sum();
            let mean = mean_sinr(&ch, &f, &p, 0.3).unwrap();
            assert!((mean - sum / 3.0).abs() <= 1e-12 * mean.max(1.0));
        }
    }

    #[test]
    fn element_zero_column_reduces_to_los() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (ch, p) = random_instance(&mut rng, 4, 3, 2);
        let mut nlos0 = ch.nlos(0).clone();
        nlos0.column_mut(1).fill(0.0);
        let ch = ChannelSet::new(vec![ch.los(0).clone(), ch.los(1).clone()], vec![nlos0, ch.nlos(1).clone()]).unwrap();
        let los_only = sinr_user(&ch, &AlignmentMatrix::unassigned(3, 2), &p, 0, 0.1).unwrap();
        let e = sinr_element(&ch, &p, 0, 1, 0.1).unwrap();
        assert!((e - los_only).abs() <= 1e-14 * los_only);
    }

    #[test]
    fn element_matches_single_element_alignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let (ch, p) = random_instance(&mut rng, 5, 6, 3);
            let k = rng.random_range(0..3);
            let r = rng.random_range(0..6);
            let f = AlignmentMatrix::single(6, 3, r, k);
            let a = sinr_element(&ch, &p, k, r, 0.05).unwrap();
            let b = sinr_user(&ch, &f, &p, k, 0.05).unwrap();
            assert!((a - b).abs() <= 1e-12 * b.max(1e-300), "{a} vs {b}");
        }
    }

    #[test]
    fn element_single_user_has_no_interference() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (ch, p) = random_instance(&mut rng, 3, 2, 1);
        let a = ch.los(0).dot(&p.as_matrix().column(0));
        let b = ch.nlos(0).column(1).dot(&p.as_matrix().column(0));
        let e = sinr_element(&ch, &p, 0, 1, 0.5).unwrap();
        assert!((e - (a + b).powi(2) / 0.5).abs() < 1e-12 * e);
    }

    #[test]
    fn element_index_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (ch, p) = random_instance(&mut rng, 3, 2, 2);
        assert!(matches!(sinr_element(&ch, &p, 0, 2, 0.5), Err(Error::Dimension(_))));
        assert!(matches!(sinr_element(&ch, &p, 2, 0, 0.5), Err(Error::Dimension(_))));
    }

    #[test]
    fn scorer_agrees_with_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (ch, p) = random_instance(&mut rng, 5, 7, 3);
        let mut scorer = ElementScorer::new(&ch, &p, 0.2).unwrap();
        for k in 0..3 {
            for r in 0..7 {
                let direct = sinr_element(&ch, &p, k, r, 0.2).unwrap();
                assert!((scorer.score(k, r) - direct).abs() <= 1e-12 * direct);
            }
        }
        assert_eq!(scorer.evaluations(), 21);
    }

    #[test]
    fn scale_invariance_at_zero_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (ch, p) = random_instance(&mut rng, 4, 3, 3);
        let f = AlignmentMatrix::random_with(3, 3, &mut rng).unwrap();
        let h = ch.effective_matrix(&f).unwrap();
        let base = sinr_from_effective(&h, p.as_matrix(), 0.0).unwrap();
        let scaled = sinr_from_effective(&h, &(p.as_matrix() * 3.0), 0.0).unwrap();
        for (a, b) in base.linear().iter().zip(scaled.linear()) {
            assert!((a - b).abs() <= 1e-12 * a);
        }
        // with noise the scaled precoder strictly gains
        let n1 = sinr_from_effective(&h, p.as_matrix(), 0.1).unwrap();
        let n3 = sinr_from_effective(&h, &(p.as_matrix() * 3.0), 0.1).unwrap();
        assert!(n3.mean() > n1.mean());
    }

    #[test]
    fn mean_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (ch, p) = random_instance(&mut rng, 4, 0, 3);
        let h = ch.effective_matrix(&AlignmentMatrix::unassigned(0, 3)).unwrap();
        let perm = [2usize, 0, 1];
        let hp = DMatrix::from_fn(4, 3, |i, c| h[(i, perm[c])]);
        let pp = DMatrix::from_fn(4, 3, |i, c| p.as_matrix()[(i, perm[c])]);
        let a = sinr_from_effective(&h, p.as_matrix(), 0.1).unwrap().mean();
        let b = sinr_from_effective(&hp, &pp, 0.1).unwrap().mean();
        assert!((a - b).abs() <= 1e-14 * a);
    }
}
