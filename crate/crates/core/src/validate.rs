//! Self-check suite run by the `validate` subcommand: numerical identities
//! on small synthetic instances that must hold on any correct build.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::alignment::{exhaustive_alignment, greedy_alignment, AlignmentMatrix, ElementScoring, EXHAUSTIVE_LIMIT};
use crate::channel::ChannelSet;
use crate::error::Result;
use crate::metrics::{sinr_element, sinr_from_effective, sinr_user};
use crate::precoding::{
    closed_form_gamma, constraint_residuals, g_objective, grad_gamma, grad_p, project_g1, project_g2,
    project_intersection, GammaVector, PrecodingMatrix,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Random nonnegative channels (uniform on [0, 1)) with `m` elements.
pub fn synthetic_channels<R: Rng + ?Sized>(rng: &mut R, leds: usize, elements: usize, users: usize) -> ChannelSet {
    let los = (0..users).map(|_| DVector::from_fn(leds, |_, _| rng.random::<f64>())).collect();
    let nlos = (0..users).map(|_| DMatrix::from_fn(leds, elements, |_, _| rng.random::<f64>())).collect();
    ChannelSet::new(los, nlos).expect("shapes are consistent")
}

/// Feasible precoder from a Gaussian start, projected to 1e-12.
pub fn synthetic_precoder<R: Rng + ?Sized>(rng: &mut R, leds: usize, users: usize) -> Result<PrecodingMatrix> {
    PrecodingMatrix::random(leds, users, rng, 1000, 1e-12)
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Central-difference gradient of g with respect to P.
pub fn finite_difference_p(
    p: &DMatrix<f64>,
    gamma: &GammaVector,
    h: &DMatrix<f64>,
    noise: f64,
    step: f64,
) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(p.nrows(), p.ncols());
    for i in 0..p.nrows() {
        for j in 0..p.ncols() {
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus[(i, j)] += step;
            minus[(i, j)] -= step;
            out[(i, j)] = (g_objective(&plus, gamma, h, noise)? - g_objective(&minus, gamma, h, noise)?) / (2.0 * step);
        }
    }
    Ok(out)
}

/// Central-difference gradient of g with respect to γ.
pub fn finite_difference_gamma(
    p: &DMatrix<f64>,
    gamma: &GammaVector,
    h: &DMatrix<f64>,
    noise: f64,
    step: f64,
) -> Result<GammaVector> {
    let mut out = GammaVector::zeros(gamma.len());
    for k in 0..gamma.len() {
        let mut plus = gamma.clone();
        let mut minus = gamma.clone();
        plus[k] += step;
        minus[k] -= step;
        out[k] = (g_objective(p, &plus, h, noise)? - g_objective(p, &minus, h, noise)?) / (2.0 * step);
    }
    Ok(out)
}

fn check_gradients(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let h = DMatrix::from_fn(8, 3, |_, _| rng.random::<f64>());
        let p = synthetic_precoder(&mut rng, 8, 3)?.into_inner();
        let gamma = GammaVector::from_fn(3, |_, _| rng.random_range(0.1..2.0));
        let noise = 0.1;
        let gp = grad_p(&p, &gamma, &h, noise)?;
        let fp = finite_difference_p(&p, &gamma, &h, noise, 1e-6)?;
        worst = worst.max((&gp - &fp).norm() / gp.norm());
        let gg = grad_gamma(&p, &gamma, &h, noise)?;
        let fg = finite_difference_gamma(&p, &gamma, &h, noise, 1e-6)?;
        worst = worst.max((&gg - &fg).norm() / gg.norm());
    }
    Ok(CheckResult {
        name: "gradient vs finite differences",
        passed: worst <= 1e-5,
        detail: format!("max relative error {worst:.2e} (bound 1e-5)"),
    })
}

fn check_gamma_identity(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let h = DMatrix::from_fn(8, 3, |_, _| rng.random::<f64>());
        let p = synthetic_precoder(&mut rng, 8, 3)?.into_inner();
        let noise = 0.1;
        let gamma = closed_form_gamma(&p, &h, noise)?;
        let g = g_objective(&p, &gamma, &h, noise)?;
        let sinr = sinr_from_effective(&h, &p, noise)?;
        worst = worst.max(relative(g, 3.0 * sinr.mean()));
    }
    Ok(CheckResult {
        name: "objective at optimal gamma equals K * mean SINR",
        passed: worst <= 1e-10,
        detail: format!("max relative error {worst:.2e} (bound 1e-10)"),
    })
}

fn check_projection(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_feasible: f64 = 0.0;
    let mut worst_idem: f64 = 0.0;
    let mut max_alt = 0;
    for _ in 0..100 {
        let raw = DMatrix::from_fn(25, 4, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let (p, report) = project_intersection(&raw, 200, 1e-12)?;
        let (r1, r2) = constraint_residuals(&p);
        worst_feasible = worst_feasible.max(r1.max(r2));
        max_alt = max_alt.max(report.alternations);
        let g1 = project_g1(&raw)?;
        let g2 = project_g2(&raw)?;
        worst_idem = worst_idem.max((project_g1(&g1)? - &g1).amax()).max((project_g2(&g2)? - &g2).amax());
    }
    Ok(CheckResult {
        name: "projection feasibility and idempotence",
        passed: worst_feasible <= 1e-9 && worst_idem <= 1e-12,
        detail: format!(
            "max residual {worst_feasible:.2e} after <= {max_alt} alternations; idempotence {worst_idem:.2e}"
        ),
    })
}

fn check_element_identity(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (nt, m, k) = (6, 5, 3);
        let ch = synthetic_channels(&mut rng, nt, m, k);
        let p = synthetic_precoder(&mut rng, nt, k)?;
        let user = rng.random_range(0..k);
        let r = rng.random_range(0..m);
        let noise = rng.random_range(0.01..1.0);
        let a = sinr_element(&ch, &p, user, r, noise)?;
        let b = sinr_user(&ch, &AlignmentMatrix::single(m, k, r, user), &p, user, noise)?;
        worst = worst.max(relative(a, b));
    }
    Ok(CheckResult {
        name: "candidate SINR equals single-element SINR",
        passed: worst <= 1e-12,
        detail: format!("max relative error {worst:.2e} (bound 1e-12)"),
    })
}

fn check_greedy_count(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ok = true;
    let mut seen = Vec::new();
    for m in [6, 24, 40] {
        let ch = synthetic_channels(&mut rng, 6, m, 3);
        let p = synthetic_precoder(&mut rng, 6, 3)?;
        let out = greedy_alignment(&ch, &p, 0.1, ElementScoring::Isolated)?;
        ok &= out.evaluations == m * (m + 1) / 2 && out.alignment.is_complete();
        seen.push(format!("M={m}: {}", out.evaluations));
    }
    Ok(CheckResult { name: "greedy evaluation count M(M+1)/2", passed: ok, detail: seen.join(", ") })
}

fn check_exhaustive_oracle(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = Vec::new();
    let mut ok = true;
    for _ in 0..20 {
        let ch = synthetic_channels(&mut rng, 6, 8, 2);
        let p = synthetic_precoder(&mut rng, 6, 2)?;
        let noise = 0.1;
        let greedy = greedy_alignment(&ch, &p, noise, ElementScoring::Isolated)?;
        let best = exhaustive_alignment(&ch, &p, noise, EXHAUSTIVE_LIMIT)?;
        let g = crate::metrics::mean_sinr(&ch, &greedy.alignment, &p, noise)?;
        ok &= g <= best.mean_sinr * (1.0 + 1e-12);
        ratios.push(g / best.mean_sinr);
    }
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(CheckResult {
        name: "exhaustive alignment bounds greedy",
        passed: ok,
        detail: format!("worst greedy/optimum ratio {min:.4}"),
    })
}

/// Runs every check with a fixed seed schedule.
pub fn run_suite() -> Result<Vec<CheckResult>> {
    Ok(vec![
        check_gradients(11)?,
        check_gamma_identity(12)?,
        check_projection(13)?,
        check_element_identity(14)?,
        check_greedy_count(15)?,
        check_exhaustive_oracle(16)?,
    ])
}

pub fn format_table(results: &[CheckResult]) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    results
        .iter()
        .map(|r| format!("{:<4}  {:<width$}  {}\n", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail))
        .collect()
}
