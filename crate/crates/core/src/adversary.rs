//! Attacks on the classifier and the statistics that quantify how much the
//! randomized encoders blunt them.
//!
//! Three families live here: gradient attacks on the attacker's circuit
//! `U(θ)` (with or without an encoder in between), gradient statistics at
//! `θ = 0` compared against the closed-form variances of [`crate::haar`],
//! and product-state perturbations used for the adversarial-risk and
//! concentration-of-measure experiments.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::pauli_matrix_element;
#[cfg(test)]
use crate::circuits::ParamCircuit;
use crate::classifier::{ClassifierModel, LossKind};
use crate::dataset::{generate_dataset, DatasetConfig};
use crate::defense::{haar_columns, sample_haar_unitary, Codebook, CodebookKind, EncodedLossContext};
use crate::error::{Error, Result};
use crate::haar::{self, BlockFactor, BlockLayout};
use crate::lanczos::LanczosConfig;
use crate::linalg::C64;
use crate::rng::{self, domain};
use crate::statevec::{mat2_adjoint, mat2_mul, Mat2, Pauli, StateVector};
use crate::stats::{self, Summary};

// ---------------------------------------------------------------------------
// Gradient attack

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub steps: usize,
    pub step_size: f64,
    /// Radius of the Euclidean ball the parameters are projected onto.
    pub budget: f64,
    /// Layers of the attacker's circuit.
    pub layers: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self { steps: 50, step_size: 0.1, budget: 0.5, layers: 2 }
    }
}

impl AttackConfig {
    fn validate(&self) -> Result<()> {
        if !(self.budget > 0.0 && self.step_size > 0.0 && self.layers >= 1) {
            return Err(Error::InvalidArgument("attack needs budget > 0, step size > 0 and at least one layer".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackOutcome {
    pub theta: Vec<f64>,
    /// Loss before the first step and after every step.
    pub trace: Vec<f64>,
    /// `‖∇L(θ₀)‖_∞`.
    pub first_gradient_norm: f64,
    pub clean_label: u8,
    pub attacked_label: u8,
}

impl AttackOutcome {
    pub fn flipped(&self) -> bool {
        self.clean_label != self.attacked_label
    }
}

/// Halvings tried before a step is abandoned.
const LINE_SEARCH_HALVINGS: usize = 8;

/// Projected gradient ascent on the attacker's parameters, starting from
/// `θ = 0`. A step that lowers the loss is retried with half the step size;
/// if no halving helps the parameters stay put, so the trace never
/// decreases.
pub fn gradient_attack(ctx: &EncodedLossContext, input: &StateVector, label: u8, cfg: &AttackConfig) -> Result<AttackOutcome> {
    cfg.validate()?;
    let mut theta = vec![0.0; ctx.param_count()];
    let clean_probs = ctx.probabilities(input, &theta)?;
    let (mut loss, mut grad) = ctx.loss_and_gradient(input, label, &theta)?;
    let first_gradient_norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let mut trace = vec![loss];
    for _ in 0..cfg.steps {
        let mut eta = cfg.step_size;
        let mut accepted = false;
        for _ in 0..=LINE_SEARCH_HALVINGS {
            let mut candidate: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t + eta * g).collect();
            project_ball(&mut candidate, cfg.budget);
            let (l, g) = ctx.loss_and_gradient(input, label, &candidate)?;
            if l >= loss {
                theta = candidate;
                loss = l;
                grad = g;
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        trace.push(loss);
        if !accepted && grad.iter().all(|g| *g == 0.0) {
            continue;
        }
    }
    let attacked_label = crate::classifier::predict_from_probs(ctx.probabilities(input, &theta)?);
    Ok(AttackOutcome {
        theta,
        trace,
        first_gradient_norm,
        clean_label: crate::classifier::predict_from_probs(clean_probs),
        attacked_label,
    })
}

fn project_ball(v: &mut [f64], radius: f64) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > radius {
        v.iter_mut().for_each(|x| *x *= radius / norm);
    }
}

// ---------------------------------------------------------------------------
// Gradient statistics at θ = 0

/// Where the fixed classifier comes from.
#[derive(Clone, Debug)]
pub enum ClassifierSource {
    /// Angles uniform on `[-π, π]`, drawn per `n` from the classifier stream.
    Random { layers: usize },
    Trained(Box<ClassifierModel>),
}

#[derive(Clone, Debug)]
pub struct GradStatsConfig {
    pub n_values: Vec<usize>,
    pub codebook: CodebookKind,
    pub samples: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub classifier: ClassifierSource,
    /// Distinct inputs; sample `i` uses input `i mod inputs`.
    pub inputs: usize,
    /// Layers of the attacker's circuit (every layer contributes the same
    /// gradients at `θ = 0`, see [`encoded_gradients_at_zero`]).
    pub adversary_layers: usize,
}

impl GradStatsConfig {
    pub fn new(n_values: Vec<usize>, codebook: CodebookKind, samples: usize, seed: u64) -> Self {
        Self {
            n_values,
            codebook,
            samples,
            seed,
            loss: LossKind::Kl,
            classifier: ClassifierSource::Random { layers: 10 },
            inputs: 10,
            adversary_layers: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamStat {
    pub qubit: usize,
    pub axis: char,
    /// 0: before the entangler, 1: after it.
    pub unit: usize,
    pub mean: f64,
    pub stderr: f64,
    pub variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradStatsRecord {
    pub n: usize,
    pub encoder: String,
    pub samples: usize,
    /// Parameter-averaged gradient, averaged over samples.
    pub mean: f64,
    pub mean_stderr: f64,
    /// Mean over parameters of `|per-parameter sample mean|`.
    pub mean_abs: f64,
    /// Mean over parameters of the per-parameter sample variance.
    pub variance: f64,
    pub variance_stderr: f64,
    /// Closed-form bound: the global-design bound or the block bound with
    /// `C₀` measured per input (averaged over inputs).
    pub thm_bound: f64,
    /// Closed-form exact variance averaged over inputs and parameters.
    pub thm_exact: f64,
    /// Largest `|T_J|` over block subsets, averaged over inputs (block
    /// encoders only).
    pub c0: Option<f64>,
    pub classifier: String,
    pub inputs: String,
    pub per_param: Vec<ParamStat>,
}

/// Data-register view of the loss at `θ = 0` for one input: `|ψ⟩` and
/// `|h⟩ = H_V|ψ⟩` where `H_V = L'(p_y) ⟨0|V† Π_y V|0⟩_anc`.
#[derive(Clone, Debug)]
pub struct LossProbe {
    pub psi: Vec<C64>,
    pub h: Vec<C64>,
}

impl LossProbe {
    pub fn new(model: &ClassifierModel, input: &StateVector, label: u8, loss: LossKind) -> Result<Self> {
        let mut s = model.output_state(input)?;
        let p_y = s.expectation(&model.label_projector(label))?;
        let slope = loss.slope(p_y.clamp(0.0, 1.0));
        let anc = model.ancilla();
        let mut amps = s.clone().into_amplitudes();
        for (i, a) in amps.iter_mut().enumerate() {
            if (i >> anc & 1) as u8 != label {
                *a = C64::new(0.0, 0.0);
            }
        }
        s = StateVector::from_raw(amps);
        model.circuit().apply_inverse(&mut s, model.params())?;
        let d = 1usize << model.n_data();
        let h = s.amplitudes()[..d].iter().map(|a| a * slope).collect();
        Ok(Self { psi: input.amplitudes().to_vec(), h })
    }
}

/// Gradient of the encoded loss at `θ = 0` for one layer of the attacker's
/// circuit, ordered as that layer's parameters: `(unit, qubit, X/Z)`.
///
/// With `φ = E|ψ⟩` and `χ = E|h⟩`, the parameter on qubit `q` with
/// generator `P` has gradient `2 Im⟨χ|P_q|φ⟩` before the entangler `W` and
/// `2 Im⟨Wχ|P_q|Wφ⟩` after it. All preceding layers are the identity at
/// `θ = 0`, so every layer repeats the same values.
pub fn encoded_gradients_at_zero(phi: &[C64], chi: &[C64]) -> Vec<f64> {
    let n = phi.len().trailing_zeros() as usize;
    let mut out = Vec::with_capacity(4 * n);
    let mut phi_s = StateVector::from_raw(phi.to_vec());
    let mut chi_s = StateVector::from_raw(chi.to_vec());
    for unit in 0..2 {
        if unit == 1 {
            for q in 0..n.saturating_sub(1) {
                phi_s.apply_cnot(q, q + 1);
                chi_s.apply_cnot(q, q + 1);
            }
        }
        for q in 0..n {
            for axis in [Pauli::X, Pauli::Z] {
                out.push(2.0 * pauli_matrix_element(chi_s.amplitudes(), phi_s.amplitudes(), q, axis).im);
            }
        }
    }
    out
}

/// Qubits on which `W† P_q W` acts, for `W` the CNOT chain
/// `(0,1), (1,2), …` applied in that order.
pub fn conjugated_support(n: usize, q: usize, axis: Pauli) -> Vec<bool> {
    let mut x = vec![false; n];
    let mut z = vec![false; n];
    match axis {
        Pauli::X => x[q] = true,
        Pauli::Z => z[q] = true,
        Pauli::Y => {
            x[q] = true;
            z[q] = true;
        }
        Pauli::I => {}
    }
    // W†PW = C_0 ⋯ C_{n-2} P C_{n-2} ⋯ C_0: innermost CNOT first
    for c in (0..n.saturating_sub(1)).rev() {
        let t = c + 1;
        x[t] ^= x[c];
        z[c] ^= z[t];
    }
    x.iter().zip(&z).map(|(a, b)| *a || *b).collect()
}

/// Inputs for one `n`: cluster-Ising ground states when `n ≥ 3`, otherwise
/// Gaussian random states.
fn grad_inputs(n: usize, count: usize, seed: u64) -> Result<(Vec<(StateVector, u8)>, String)> {
    if n >= 3 {
        let ds = generate_dataset(&DatasetConfig::new(n, count.max(2), seed), &LanczosConfig::default())?;
        let v = ds.samples.into_iter().take(count).map(|s| (s.state, s.label)).collect();
        Ok((v, "cluster-ising".into()))
    } else {
        let v = (0..count)
            .map(|i| {
                let mut r = rng::stream(seed, domain::INPUT, i as u64);
                (StateVector::random(n, &mut r), (i % 2) as u8)
            })
            .collect();
        Ok((v, "gaussian-random".into()))
    }
}

/// Gradient statistics of the encoded loss at `θ = 0` for every `n`,
/// with the closed-form variance and bound next to the empirical values.
pub fn grad_stats_experiment(cfg: &GradStatsConfig) -> Result<Vec<GradStatsRecord>> {
    if cfg.samples < 2 || cfg.inputs == 0 {
        return Err(Error::InvalidArgument("gradient statistics need at least 2 samples and 1 input".into()));
    }
    cfg.n_values.iter().map(|&n| grad_stats_for_n(cfg, n)).collect()
}

fn grad_stats_for_n(cfg: &GradStatsConfig, n: usize) -> Result<GradStatsRecord> {
    let codebook = match cfg.codebook {
        CodebookKind::BlockHaar { m, .. } => {
            if m == 0 || n % m != 0 {
                return Err(Error::InvalidArgument(format!("block size {m} does not divide n = {n}")));
            }
            Codebook::new(CodebookKind::BlockHaar { m, xi: n / m }, n)?
        }
        CodebookKind::GlobalHaar => Codebook::global_large(n),
        kind => Codebook::new(kind, n)?,
    };
    let (model, classifier_desc) = match &cfg.classifier {
        ClassifierSource::Random { layers } => {
            let mut r = rng::stream(cfg.seed, domain::CLASSIFIER, n as u64);
            (ClassifierModel::random(n, *layers, &mut r)?, format!("random-fixed(layers={layers})"))
        }
        ClassifierSource::Trained(m) => {
            if m.n_data() != n {
                return Err(Error::DimensionMismatch { expected: m.n_data(), found: n });
            }
            ((**m).clone(), format!("trained(layers={})", m.layers()))
        }
    };
    let (inputs, input_desc) = grad_inputs(n, cfg.inputs, cfg.seed)?;
    let probes: Vec<LossProbe> =
        inputs.iter().map(|(s, y)| LossProbe::new(&model, s, *y, cfg.loss)).collect::<Result<_>>()?;

    let d = 1usize << n;
    let params_per_layer = 4 * n;
    // closed forms, per input
    let mut exact = Vec::with_capacity(probes.len());
    let mut bound = Vec::with_capacity(probes.len());
    let mut c0s = Vec::new();
    for p in &probes {
        match codebook.kind() {
            CodebookKind::BlockHaar { m, xi } => {
                let layout = BlockLayout::new(m, xi)?;
                let terms = haar::block_trace_terms(layout, &p.psi, &p.h)?;
                let mut total = 0.0;
                for unit in 0..2 {
                    for q in 0..n {
                        for axis in [Pauli::X, Pauli::Z] {
                            let support = if unit == 0 {
                                (0..n).map(|k| k == q).collect()
                            } else {
                                conjugated_support(n, q, axis)
                            };
                            let factors: Vec<BlockFactor> = (0..xi)
                                .map(|j| BlockFactor::pauli(layout.block_dim(), !support[j * m..(j + 1) * m].iter().any(|b| *b)))
                                .collect();
                            total += haar::block_haar_variance(layout, &factors, &terms)?;
                        }
                    }
                }
                exact.push(total / params_per_layer as f64);
                let c0 = haar::c0(&terms);
                c0s.push(c0);
                bound.push(haar::thm2_variance_bound(m as u32, xi as u32, 1.0, c0));
            }
            _ => {
                // every generator is a Pauli string: Tr A² = d, Tr A = 0
                let v = haar::global_haar_variance(d as f64, 0.0, &p.psi, &p.h);
                exact.push(v.exact);
                bound.push(v.bound);
            }
        }
    }
    if !matches!(codebook.kind(), CodebookKind::GlobalHaar | CodebookKind::BlockHaar { .. }) {
        // no closed form for finite circuit families
        exact.iter_mut().chain(bound.iter_mut()).for_each(|x| *x = f64::NAN);
    }

    let grads: Vec<Vec<f64>> = (0..cfg.samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(cfg.seed, domain::ENCODER, ((n as u64) << 32) | i as u64);
            let p = &probes[i % probes.len()];
            let (phi, chi) = encode_pair(&codebook, p, &mut r)?;
            Ok(encoded_gradients_at_zero(&phi, &chi))
        })
        .collect::<Result<_>>()?;

    // exact and bound are averaged with the same input weights as the samples
    let weight = |v: &[f64]| (0..cfg.samples).map(|i| v[i % v.len()]).sum::<f64>() / cfg.samples as f64;
    let mut per_param = Vec::with_capacity(params_per_layer);
    for l in 0..params_per_layer {
        let column: Vec<f64> = grads.iter().map(|g| g[l]).collect();
        let s = Summary::of(&column);
        let (unit, rest) = (l / (2 * n), l % (2 * n));
        per_param.push(ParamStat {
            qubit: rest / 2,
            axis: if rest % 2 == 0 { 'X' } else { 'Z' },
            unit,
            mean: s.mean,
            stderr: s.stderr,
            variance: s.variance,
        });
    }
    let averaged: Vec<f64> = grads.iter().map(|g| stats::mean(g)).collect();
    let avg = Summary::of(&averaged);
    let means: Vec<f64> = per_param.iter().map(|p| p.mean).collect();
    let centered: Vec<f64> = grads
        .iter()
        .map(|g| g.iter().zip(&means).map(|(x, m)| (x - m) * (x - m)).sum::<f64>() / params_per_layer as f64)
        .collect();
    let spread = Summary::of(&centered);
    Ok(GradStatsRecord {
        n,
        encoder: codebook.kind().to_string(),
        samples: cfg.samples,
        mean: avg.mean,
        mean_stderr: avg.stderr,
        mean_abs: stats::mean(&means.iter().map(|m| m.abs()).collect::<Vec<_>>()),
        variance: stats::mean(&per_param.iter().map(|p| p.variance).collect::<Vec<_>>()),
        variance_stderr: spread.stderr,
        thm_bound: weight(&bound),
        thm_exact: weight(&exact),
        c0: if c0s.is_empty() { None } else { Some(weight(&c0s)) },
        classifier: classifier_desc,
        inputs: input_desc,
        per_param,
    })
}

/// `(E|ψ⟩, E|h⟩)` for one encoder draw. A global Haar encoder only matters
/// through its action on `span(ψ, h)`, so two exact Haar columns suffice.
fn encode_pair<R: Rng + ?Sized>(codebook: &Codebook, p: &LossProbe, rng: &mut R) -> Result<(Vec<C64>, Vec<C64>)> {
    match codebook.kind() {
        CodebookKind::GlobalHaar => {
            let d = p.psi.len();
            let cols = haar_columns(d, 2, rng);
            let overlap = crate::linalg::inner(&p.psi, &p.h);
            let perp: Vec<C64> = p.h.iter().zip(&p.psi).map(|(h, s)| h - overlap * s).collect();
            let perp_norm = crate::linalg::norm_sqr(&perp).sqrt();
            let phi = cols[0].clone();
            let chi = cols[0].iter().zip(&cols[1]).map(|(a, b)| overlap * a + b * perp_norm).collect();
            Ok((phi, chi))
        }
        _ => {
            let enc = codebook.sample(rng)?;
            let mut phi = StateVector::from_raw(p.psi.clone());
            let mut chi = StateVector::from_raw(p.h.clone());
            enc.encode(&mut phi)?;
            enc.encode(&mut chi)?;
            Ok((phi.into_amplitudes(), chi.into_amplitudes()))
        }
    }
}

// ---------------------------------------------------------------------------
// Product-state perturbations

/// A product input `⊗ g_i |0⟩` described by its single-qubit unitaries.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductStateSpec {
    pub factors: Vec<Mat2>,
}

/// Factors closer than this (after phase alignment) count as equal.
pub const FACTOR_TOL: f64 = 1e-9;

impl ProductStateSpec {
    pub fn new(factors: Vec<Mat2>) -> Result<Self> {
        for f in &factors {
            let dev = mat2_mul(&mat2_adjoint(f), f);
            let err: f64 = (0..2)
                .flat_map(|r| (0..2).map(move |c| (r, c)))
                .map(|(r, c)| (dev[r][c] - if r == c { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }).norm_sqr())
                .sum::<f64>()
                .sqrt();
            if err > 1e-10 {
                return Err(Error::NonUnitary { deficit: err });
            }
        }
        Ok(Self { factors })
    }

    /// Independent Haar factors.
    pub fn haar<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self { factors: (0..n).map(|_| haar_factor(rng)).collect() }
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn state(&self) -> StateVector {
        let mut amps = vec![C64::new(1.0, 0.0)];
        for g in &self.factors {
            let (a0, a1) = (g[0][0], g[1][0]);
            let mut next = Vec::with_capacity(amps.len() * 2);
            next.extend(amps.iter().map(|x| x * a0));
            next.extend(amps.iter().map(|x| x * a1));
            amps = next;
        }
        StateVector::from_raw(amps)
    }

    /// `|⟨0|g_i|0⟩|²` for each qubit.
    pub fn fidelities(&self) -> Vec<f64> {
        self.factors.iter().map(|g| g[0][0].norm_sqr()).collect()
    }
}

pub(crate) fn haar_factor<R: Rng + ?Sized>(rng: &mut R) -> Mat2 {
    let u = sample_haar_unitary(2, rng).expect("dimension 2 is within the cap");
    [[u[(0, 0)], u[(0, 1)]], [u[(1, 0)], u[(1, 1)]]]
}

/// `min_φ ‖a − e^{iφ} b‖_F`.
fn phase_aligned_distance(a: &Mat2, b: &Mat2) -> f64 {
    let mut overlap = C64::new(0.0, 0.0);
    let mut na = 0.0;
    let mut nb = 0.0;
    for r in 0..2 {
        for c in 0..2 {
            overlap += b[r][c].conj() * a[r][c];
            na += a[r][c].norm_sqr();
            nb += b[r][c].norm_sqr();
        }
    }
    (na + nb - 2.0 * overlap.norm()).max(0.0).sqrt()
}

/// Fraction of qubits whose factors differ.
pub fn hamming_distance(a: &ProductStateSpec, b: &ProductStateSpec) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let differ = a.factors.iter().zip(&b.factors).filter(|(x, y)| phase_aligned_distance(x, y) > FACTOR_TOL).count();
    Ok(differ as f64 / a.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalStrategy {
    /// Resample `⌊τn⌋` randomly chosen factors.
    Random,
    /// Replace factors one at a time, each time taking the candidate that
    /// raises the loss of the clean prediction most.
    Greedy,
}

/// Candidate factors tried per qubit and round by the greedy strategy.
pub const GREEDY_CANDIDATES: usize = 4;

/// Loss the greedy strategy maximizes: cross-entropy against the label the
/// model assigns to the unperturbed input.
fn attack_loss(model: &ClassifierModel, spec: &ProductStateSpec, target: u8) -> Result<f64> {
    Ok(LossKind::Kl.value(model.probabilities(&spec.state())?, target))
}

/// Replaces at most `⌊τn⌋` factors of `spec`.
pub fn local_unitary_attack<R: Rng + ?Sized>(
    spec: &ProductStateSpec,
    model: &ClassifierModel,
    tau: f64,
    strategy: LocalStrategy,
    rng: &mut R,
) -> Result<ProductStateSpec> {
    let n = spec.len();
    let k = (tau * n as f64 + 1e-12).floor() as usize;
    if k == 0 {
        return Err(Error::InvalidArgument(format!("τ = {tau} allows no replacement on {n} qubits")));
    }
    let k = k.min(n);
    let mut out = spec.clone();
    match strategy {
        LocalStrategy::Random => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            for &q in &idx[..k] {
                out.factors[q] = haar_factor(rng);
            }
        }
        LocalStrategy::Greedy => {
            let target = model.predict(&spec.state())?;
            let mut current = attack_loss(model, &out, target)?;
            let mut touched = vec![false; n];
            for _ in 0..k {
                let mut best: Option<(f64, usize, Mat2)> = None;
                for q in (0..n).filter(|&q| !touched[q]) {
                    for _ in 0..GREEDY_CANDIDATES {
                        let g = haar_factor(rng);
                        let mut trial = out.clone();
                        trial.factors[q] = g;
                        let l = attack_loss(model, &trial, target)?;
                        if best.as_ref().is_none_or(|b| l > b.0) {
                            best = Some((l, q, g));
                        }
                    }
                }
                match best {
                    Some((l, q, g)) if l > current => {
                        out.factors[q] = g;
                        touched[q] = true;
                        current = l;
                    }
                    _ => break,
                }
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Adversarial risk

/// Perturbation applied to each sampled input.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum RiskAttack {
    Identity,
    Local { tau: f64, strategy: LocalStrategy },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RiskEstimate {
    pub risk: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials: usize,
    pub flips: usize,
}

/// Fraction of Haar-product inputs whose predicted label changes under the
/// attack, with a Wilson 95% interval. `predict` may be any classifier;
/// `model` is what a greedy attack queries for losses.
pub fn adversarial_risk_estimate(
    predict: &(dyn Fn(&StateVector) -> Result<u8> + Sync),
    model: &ClassifierModel,
    n: usize,
    attack: RiskAttack,
    trials: usize,
    seed: u64,
) -> Result<RiskEstimate> {
    if trials == 0 {
        return Err(Error::InvalidArgument("risk estimate needs at least one trial".into()));
    }
    let flips: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, domain::RISK, i as u64);
            let spec = ProductStateSpec::haar(n, &mut r);
            let attacked = match attack {
                RiskAttack::Identity => spec.clone(),
                RiskAttack::Local { tau, strategy } => local_unitary_attack(&spec, model, tau, strategy, &mut r)?,
            };
            Ok(predict(&spec.state())? != predict(&attacked.state())?)
        })
        .collect::<Result<_>>()?;
    let count = flips.iter().filter(|f| **f).count();
    let (lo, hi) = stats::wilson_interval(count, trials);
    Ok(RiskEstimate { risk: count as f64 / trials as f64, ci_low: lo, ci_high: hi, trials, flips: count })
}

/// Smallest `τ` for which concentration of measure forces risk at least `R`
/// on a `K`-class classifier: `τ² = (1/n) min_{k≥2} ln[4k / (μ_k (1−R))]`,
/// with class measures sorted in descending order.
pub fn thm3_threshold(n: usize, measures: &[f64], r: f64) -> Result<f64> {
    if n == 0 || measures.len() < 2 {
        return Err(Error::InvalidArgument("threshold needs n >= 1 and at least two classes".into()));
    }
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidArgument(format!("target risk {r} outside (0, 1)")));
    }
    if measures.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::InvalidArgument("every class measure must be positive".into()));
    }
    if (measures.iter().sum::<f64>() - 1.0).abs() > 1e-9 || measures.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::InvalidArgument("class measures must be sorted descending and sum to 1".into()));
    }
    let best = measures
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, &mu)| (4.0 * (i + 1) as f64 / (mu * (1.0 - r))).ln())
        .fold(f64::INFINITY, f64::min);
    Ok((best / n as f64).sqrt())
}

// ---------------------------------------------------------------------------
// Concentration of measure

/// Real-valued score whose upper level set `{score ≥ threshold}` is probed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    /// `|⟨0|g_0|0⟩|²`.
    FirstQubitFidelity,
    /// Mean of `|⟨0|g_i|0⟩|²` over qubits.
    MeanFidelity,
}

impl Predicate {
    pub fn score(self, spec: &ProductStateSpec) -> f64 {
        let f = spec.fidelities();
        match self {
            Predicate::FirstQubitFidelity => f[0],
            Predicate::MeanFidelity => stats::mean(&f),
        }
    }

    /// Score of the discrete configuration `letters`, one alphabet index per
    /// qubit.
    fn score_letters(self, letters: &[usize]) -> f64 {
        let alphabet = pauli_alphabet();
        let f: Vec<f64> = letters.iter().map(|&a| alphabet[a][0][0].norm_sqr()).collect();
        match self {
            Predicate::FirstQubitFidelity => f[0],
            Predicate::MeanFidelity => stats::mean(&f),
        }
    }
}

/// The six single-qubit Pauli eigenstates `|0⟩, |1⟩, |+⟩, |−⟩, |+i⟩, |−i⟩`
/// as unitaries acting on `|0⟩`.
pub fn pauli_alphabet() -> [Mat2; 6] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let c = |re: f64, im: f64| C64::new(re, im);
    [
        [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]],
        [[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]],
        [[c(h, 0.0), c(h, 0.0)], [c(h, 0.0), c(-h, 0.0)]],
        [[c(h, 0.0), c(h, 0.0)], [c(-h, 0.0), c(h, 0.0)]],
        [[c(h, 0.0), c(0.0, h)], [c(0.0, h), c(h, 0.0)]],
        [[c(h, 0.0), c(0.0, -h)], [c(0.0, -h), c(h, 0.0)]],
    ]
}

/// Per-qubit measure the probe samples from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alphabet {
    /// Haar measure on each qubit.
    Haar,
    /// Uniform over [`pauli_alphabet`].
    PauliEigenstates,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationConfig {
    pub n: usize,
    pub tau: f64,
    pub samples: usize,
    pub predicate: Predicate,
    pub alphabet: Alphabet,
    /// Random candidate factors per qubit and greedy round, on top of the
    /// six Pauli eigenstates.
    pub candidates: usize,
    pub restarts: usize,
}

impl ConcentrationConfig {
    pub fn new(n: usize, tau: f64, samples: usize) -> Self {
        Self { n, tau, samples, predicate: Predicate::FirstQubitFidelity, alphabet: Alphabet::Haar, candidates: 4, restarts: 2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConcentrationResult {
    /// Median score of the samples; the probed set is `score ≥ threshold`.
    pub threshold: f64,
    pub set_measure: f64,
    pub set_stderr: f64,
    /// Fraction of samples from which the search reached the set with at
    /// most `⌊τn⌋` replacements (a lower estimate of the extension measure).
    pub extension_measure: f64,
    pub extension_stderr: f64,
    /// `1 − 2e^{−τ²n}`, valid for sets of measure at least 1/2.
    pub levy_bound: f64,
    /// `1 − 4e^{−τ²n}/μ(set)` from the two-step extension argument.
    pub extension_bound: f64,
}

/// Measures the level set of `cfg.predicate` at its median and its
/// `τ`-extension under the normalized Hamming distance.
pub fn concentration_probe(cfg: &ConcentrationConfig, seed: u64) -> Result<ConcentrationResult> {
    if cfg.n == 0 || cfg.samples < 2 || !(0.0..=1.0).contains(&cfg.tau) {
        return Err(Error::InvalidArgument("probe needs n >= 1, at least 2 samples and τ in [0, 1]".into()));
    }
    let specs: Vec<ProductStateSpec> = (0..cfg.samples)
        .map(|i| {
            let mut r = rng::stream(seed, domain::CONCENTRATION, i as u64);
            sample_spec(cfg.n, cfg.alphabet, &mut r)
        })
        .collect();
    let scores: Vec<f64> = specs.iter().map(|s| cfg.predicate.score(s)).collect();
    let threshold = stats::median(&scores);
    let inside: Vec<f64> = scores.iter().map(|&s| f64::from(u8::from(s >= threshold))).collect();
    let k = (cfg.tau * cfg.n as f64 + 1e-12).floor() as usize;
    let reached: Vec<f64> = specs
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let mut r = rng::stream(seed, domain::CONCENTRATION, (1 << 32) | i as u64);
            f64::from(u8::from(search_extension(spec, cfg, threshold, k, &mut r)))
        })
        .collect();
    let set = Summary::of(&inside);
    let ext = Summary::of(&reached);
    let decay = (-cfg.tau * cfg.tau * cfg.n as f64).exp();
    Ok(ConcentrationResult {
        threshold,
        set_measure: set.mean,
        set_stderr: set.stderr,
        extension_measure: ext.mean,
        extension_stderr: ext.stderr,
        levy_bound: 1.0 - 2.0 * decay,
        extension_bound: if set.mean > 0.0 { (1.0 - 4.0 * decay / set.mean).max(0.0) } else { 0.0 },
    })
}

fn sample_spec<R: Rng + ?Sized>(n: usize, alphabet: Alphabet, rng: &mut R) -> ProductStateSpec {
    match alphabet {
        Alphabet::Haar => ProductStateSpec::haar(n, rng),
        Alphabet::PauliEigenstates => {
            let letters = pauli_alphabet();
            ProductStateSpec { factors: (0..n).map(|_| letters[rng.random_range(0..6)]).collect() }
        }
    }
}

/// Greedy coordinate search for a point of the set within `k` replacements.
fn search_extension<R: Rng + ?Sized>(spec: &ProductStateSpec, cfg: &ConcentrationConfig, threshold: f64, k: usize, rng: &mut R) -> bool {
    if cfg.predicate.score(spec) >= threshold {
        return true;
    }
    let letters = pauli_alphabet();
    for _ in 0..cfg.restarts.max(1) {
        let mut cur = spec.clone();
        let mut touched = vec![false; cfg.n];
        for _ in 0..k {
            let mut best: Option<(f64, usize, Mat2)> = None;
            for q in (0..cfg.n).filter(|&q| !touched[q]) {
                let randoms: Vec<Mat2> = match cfg.alphabet {
                    Alphabet::Haar => (0..cfg.candidates).map(|_| haar_factor(rng)).collect(),
                    Alphabet::PauliEigenstates => Vec::new(),
                };
                for g in letters.iter().chain(&randoms) {
                    let mut trial = cur.clone();
                    trial.factors[q] = *g;
                    let s = cfg.predicate.score(&trial);
                    if best.as_ref().is_none_or(|b| s > b.0) {
                        best = Some((s, q, *g));
                    }
                }
            }
            let Some((s, q, g)) = best else { break };
            cur.factors[q] = g;
            touched[q] = true;
            if s >= threshold {
                return true;
            }
        }
    }
    false
}

/// Exact set and extension measures on the discrete product space
/// `{Pauli eigenstates}^n` under the uniform measure, by enumerating all
/// `6^n` configurations. The set is `score ≥ threshold`.
pub fn exhaustive_extension(n: usize, predicate: Predicate, threshold: f64, tau: f64) -> Result<(f64, f64)> {
    if n == 0 || n > 8 {
        return Err(Error::InvalidArgument("exhaustive enumeration supports 1 <= n <= 8".into()));
    }
    let total = 6usize.pow(n as u32);
    let decode = |mut idx: usize| {
        let mut v = vec![0usize; n];
        for x in v.iter_mut() {
            *x = idx % 6;
            idx /= 6;
        }
        v
    };
    let mut member: Vec<bool> = (0..total).map(|i| predicate.score_letters(&decode(i)) >= threshold).collect();
    let set = member.iter().filter(|m| **m).count() as f64 / total as f64;
    let k = (tau * n as f64 + 1e-12).floor() as usize;
    for _ in 0..k {
        let prev = member.clone();
        for (i, m) in member.iter_mut().enumerate() {
            if *m {
                continue;
            }
            let mut stride = 1;
            'outer: for _ in 0..n {
                let digit = (i / stride) % 6;
                for a in 0..6 {
                    if a != digit && prev[i - digit * stride + a * stride] {
                        *m = true;
                        break 'outer;
                    }
                }
                stride *= 6;
            }
        }
    }
    let ext = member.iter().filter(|m| **m).count() as f64 / total as f64;
    Ok((set, ext))
}
