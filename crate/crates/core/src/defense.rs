//! Randomized encoders shared by the data owner and the classifier, and the
//! loss an attacker sees when the input is encoded.
//!
//! An input `|ψ⟩` is sent as `E|ψ⟩`; the attacker applies `U(θ)` to what it
//! receives; the classifier decodes with `E†` before running `V(Θ)`. At
//! `θ = 0` the chain collapses to the clean classifier.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::circuits::{Circuit, ParamCircuit};
use crate::classifier::{ClassifierModel, LossKind};
use crate::error::{Error, Result};
use crate::haar::{batch_means, bootstrap_statistic, two_copy_twirl};
use crate::linalg::{CMatrix, C64};
use crate::statevec::StateVector;
use crate::stats::Summary;

/// Largest dense unitary sampled without an explicit opt-in (12 qubits).
pub const DENSE_CAP: usize = 4096;

/// Haar-random `d × d` unitary, `d ≤ DENSE_CAP`.
pub fn sample_haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<CMatrix> {
    sample_haar_unitary_with(d, false, rng)
}

/// As [`sample_haar_unitary`]; `allow_large` lifts the dimension cap.
///
/// Columns of a complex Ginibre matrix are orthonormalized in order
/// (Gram–Schmidt, which is QR with a positive real diagonal in `R`), so the
/// result is exactly Haar distributed.
pub fn sample_haar_unitary_with<R: Rng + ?Sized>(d: usize, allow_large: bool, rng: &mut R) -> Result<CMatrix> {
    if d == 0 {
        return Err(Error::InvalidArgument("unitary dimension must be positive".into()));
    }
    if d > DENSE_CAP && !allow_large {
        return Err(Error::DimensionTooLarge { dim: d, cap: DENSE_CAP });
    }
    let cols = haar_columns(d, d, rng);
    let mut u = CMatrix::zeros(d, d);
    for (c, col) in cols.iter().enumerate() {
        u.set_column(c, col);
    }
    Ok(u)
}

/// The first `k` columns of a Haar-random `d × d` unitary.
pub fn haar_columns<R: Rng + ?Sized>(d: usize, k: usize, rng: &mut R) -> Vec<Vec<C64>> {
    assert!(k <= d, "cannot draw more orthonormal columns than the dimension");
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(k);
    while cols.len() < k {
        let mut v: Vec<C64> = (0..d).map(|_| ginibre_entry(rng)).collect();
        // two passes keep the basis orthonormal to rounding
        for _ in 0..2 {
            for c in &cols {
                let proj: C64 = c.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                v.iter_mut().zip(c).for_each(|(x, a)| *x -= proj * a);
            }
        }
        let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-12 {
            // measure-zero event; redraw
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        cols.push(v);
    }
    cols
}

fn ginibre_entry<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `ξ` independent Haar unitaries on consecutive `m`-qubit blocks of an
/// `n`-qubit register.
pub fn sample_block_encoder<R: Rng + ?Sized>(n: usize, m: usize, xi: usize, rng: &mut R) -> Result<Vec<CMatrix>> {
    if m == 0 || m * xi != n {
        return Err(Error::InvalidArgument(format!("block encoder needs n = m*xi, got n={n}, m={m}, xi={xi}")));
    }
    (0..xi).map(|_| sample_haar_unitary(1 << m, rng)).collect()
}

/// Classifier-layout circuit on `n` qubits with angles uniform on `[-π, π]`.
pub fn sample_pvqc_encoder<R: Rng + ?Sized>(n: usize, depth: usize, rng: &mut R) -> Result<(ParamCircuit, Vec<f64>)> {
    let circuit = ParamCircuit::classifier(n, 0, depth)?;
    let params = (0..circuit.param_count()).map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)).collect();
    Ok((circuit, params))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum CodebookKind {
    GlobalHaar,
    BlockHaar { m: usize, xi: usize },
    Pvqc { depth: usize },
}

impl std::fmt::Display for CodebookKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CodebookKind::GlobalHaar => write!(f, "global-haar"),
            CodebookKind::BlockHaar { m, xi } => write!(f, "block-haar(m={m},xi={xi})"),
            CodebookKind::Pvqc { depth } => write!(f, "pvqc(depth={depth})"),
        }
    }
}

/// A distribution over encoders for an `n`-qubit register.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Codebook {
    kind: CodebookKind,
    n_qubits: usize,
    allow_large: bool,
}

impl Codebook {
    pub fn new(kind: CodebookKind, n_qubits: usize) -> Result<Self> {
        match kind {
            CodebookKind::BlockHaar { m, xi } if m == 0 || m * xi != n_qubits => {
                return Err(Error::InvalidArgument(format!("block codebook needs n = m*xi, got n={n_qubits}, m={m}, xi={xi}")));
            }
            CodebookKind::Pvqc { depth: 0 } => {
                return Err(Error::InvalidArgument("PVQC encoder needs depth >= 1".into()));
            }
            CodebookKind::GlobalHaar if n_qubits > 12 => {
                return Err(Error::DimensionTooLarge { dim: 1 << n_qubits, cap: DENSE_CAP });
            }
            _ => {}
        }
        if n_qubits == 0 {
            return Err(Error::InvalidArgument("codebook needs at least one qubit".into()));
        }
        Ok(Self { kind, n_qubits, allow_large: false })
    }

    /// Global Haar codebook above the dense cap, accepting the memory cost.
    pub fn global_large(n_qubits: usize) -> Self {
        Self { kind: CodebookKind::GlobalHaar, n_qubits, allow_large: true }
    }

    pub fn kind(&self) -> CodebookKind {
        self.kind
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Encoder> {
        let n = self.n_qubits;
        Ok(match self.kind {
            CodebookKind::GlobalHaar => Encoder::Dense(sample_haar_unitary_with(1 << n, self.allow_large, rng)?),
            CodebookKind::BlockHaar { m, xi } => Encoder::Blocks { m, factors: sample_block_encoder(n, m, xi, rng)? },
            CodebookKind::Pvqc { depth } => {
                let (circuit, params) = sample_pvqc_encoder(n, depth, rng)?;
                Encoder::Circuit(circuit.circuit().bind(&params)?)
            }
        })
    }
}

/// One encoder drawn from a codebook. Acts on the lowest `n_qubits`
/// qubits of whatever register it is applied to.
#[derive(Clone, Debug)]
pub enum Encoder {
    Dense(CMatrix),
    Blocks { m: usize, factors: Vec<CMatrix> },
    /// Parameter-free circuit.
    Circuit(Circuit),
}

impl Encoder {
    pub fn n_qubits(&self) -> usize {
        match self {
            Encoder::Dense(u) => u.rows().trailing_zeros() as usize,
            Encoder::Blocks { m, factors } => m * factors.len(),
            Encoder::Circuit(c) => c.n_qubits(),
        }
    }

    pub fn encode(&self, state: &mut StateVector) -> Result<()> {
        self.check(state)?;
        match self {
            Encoder::Dense(u) => state.apply_unitary_unchecked(&(0..self.n_qubits()).collect::<Vec<_>>(), u),
            Encoder::Blocks { m, factors } => {
                for (j, f) in factors.iter().enumerate() {
                    state.apply_unitary_unchecked(&(j * m..(j + 1) * m).collect::<Vec<_>>(), f);
                }
            }
            Encoder::Circuit(c) => c.apply_embedded(state, &[], false)?,
        }
        Ok(())
    }

    pub fn decode(&self, state: &mut StateVector) -> Result<()> {
        self.check(state)?;
        match self {
            Encoder::Dense(u) => state.apply_unitary_unchecked(&(0..self.n_qubits()).collect::<Vec<_>>(), &u.adjoint()),
            Encoder::Blocks { m, factors } => {
                for (j, f) in factors.iter().enumerate() {
                    state.apply_unitary_unchecked(&(j * m..(j + 1) * m).collect::<Vec<_>>(), &f.adjoint());
                }
            }
            Encoder::Circuit(c) => c.apply_embedded(state, &[], true)?,
        }
        Ok(())
    }

    /// The encoder as a parameter-free circuit on its own register.
    pub fn to_circuit(&self) -> Result<Circuit> {
        let n = self.n_qubits();
        match self {
            Encoder::Dense(u) => {
                let mut c = Circuit::new(n);
                c.push_unitary((0..n).collect(), u.clone())?;
                Ok(c)
            }
            Encoder::Blocks { m, factors } => {
                let mut c = Circuit::new(n);
                for (j, f) in factors.iter().enumerate() {
                    c.push_unitary((j * m..(j + 1) * m).collect(), f.clone())?;
                }
                Ok(c)
            }
            Encoder::Circuit(c) => Ok(c.clone()),
        }
    }

    pub fn to_dense(&self) -> Result<CMatrix> {
        match self {
            Encoder::Dense(u) => Ok(u.clone()),
            _ => self.to_circuit()?.unitary(&[]),
        }
    }

    fn check(&self, state: &StateVector) -> Result<()> {
        if state.n_qubits() < self.n_qubits() {
            return Err(Error::DimensionMismatch { expected: self.n_qubits(), found: state.n_qubits() });
        }
        Ok(())
    }
}

/// Distance of a sampler's two-copy twirl from the Haar twirl.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Deficit {
    pub deficit: f64,
    pub stderr: f64,
}

/// `‖(1/M) Σ (U⊗U) M₀ (U⊗U)† − ∫ (U⊗U) M₀ (U⊗U)† dU‖_F` over `samples`
/// draws of `sampler`, with a bootstrap error bar. The default probe is
/// `|0⟩⟨0| ⊗ |0⟩⟨0|`.
pub fn two_design_deficit<R: Rng + ?Sized>(
    mut sampler: impl FnMut(&mut R) -> CMatrix,
    d: usize,
    samples: usize,
    probe: Option<&CMatrix>,
    rng: &mut R,
) -> Result<Deficit> {
    let default_probe;
    let probe = match probe {
        Some(p) => p,
        None => {
            let mut p = CMatrix::zeros(d * d, d * d);
            p[(0, 0)] = C64::new(1.0, 0.0);
            default_probe = p;
            &default_probe
        }
    };
    let haar = two_copy_twirl(probe, d)?;
    let batches = batch_means(samples, rng, |r| {
        let u = sampler(r);
        let uu = u.kron(&u);
        uu.matmul(probe).matmul(&uu.adjoint())
    })?;
    if batches[0].rows() != d * d {
        return Err(Error::DimensionMismatch { expected: d, found: batches[0].rows().isqrt() });
    }
    let mean = crate::haar::average(&batches.iter().collect::<Vec<_>>());
    let replicates = bootstrap_statistic(&batches, rng, |m| m.distance(&haar));
    Ok(Deficit { deficit: mean.distance(&haar), stderr: Summary::of(&replicates).variance.sqrt() })
}

/// Everything needed to evaluate the loss an attacker sees: the encoder (or
/// none), the trained classifier, and the attacker's circuit on the data
/// register.
#[derive(Clone, Debug)]
pub struct EncodedLossContext {
    encoder: Option<Encoder>,
    model: ClassifierModel,
    adversary: ParamCircuit,
    loss: LossKind,
    /// `V(Θ) · E† · U(θ) · E` on data + ancilla, with `θ` the only parameters.
    composite: Circuit,
}

impl EncodedLossContext {
    pub fn new(encoder: Option<Encoder>, model: ClassifierModel, adversary: ParamCircuit, loss: LossKind) -> Result<Self> {
        let n = model.n_data();
        if adversary.n_qubits() != n {
            return Err(Error::DimensionMismatch { expected: n, found: adversary.n_qubits() });
        }
        let mut composite = Circuit::new(n + 1);
        let data: Vec<usize> = (0..n).collect();
        let enc_circuit = match &encoder {
            Some(e) => {
                if e.n_qubits() != n {
                    return Err(Error::DimensionMismatch { expected: n, found: e.n_qubits() });
                }
                Some(e.to_circuit()?)
            }
            None => None,
        };
        if let Some(c) = &enc_circuit {
            composite.append(c, &data)?;
        }
        composite.append(adversary.circuit(), &data)?;
        if let Some(c) = &enc_circuit {
            composite.append(&c.inverse()?, &data)?;
        }
        let all: Vec<usize> = (0..=n).collect();
        composite.append(&model.circuit().circuit().bind(model.params())?, &all)?;
        Ok(Self { encoder, model, adversary, loss, composite })
    }

    pub fn model(&self) -> &ClassifierModel {
        &self.model
    }

    pub fn adversary(&self) -> &ParamCircuit {
        &self.adversary
    }

    pub fn encoder(&self) -> Option<&Encoder> {
        self.encoder.as_ref()
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss
    }

    pub fn param_count(&self) -> usize {
        self.adversary.param_count()
    }

    /// Class probabilities after the attack `θ`.
    pub fn probabilities(&self, input: &StateVector, theta: &[f64]) -> Result<[f64; 2]> {
        let mut s = self.prepare(input)?;
        self.composite.apply(&mut s, theta)?;
        let (p0, p1) = s.ancilla_probs(self.model.ancilla())?;
        Ok([p0, p1])
    }

    pub fn loss(&self, input: &StateVector, label: u8, theta: &[f64]) -> Result<f64> {
        Ok(self.loss.value(self.probabilities(input, theta)?, label))
    }

    /// Loss and its gradient in `θ` (adjoint sweep through the composite
    /// circuit, chained through `dL/dp_y`).
    pub fn loss_and_gradient(&self, input: &StateVector, label: u8, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let s = self.prepare(input)?;
        let (p_y, mut grad) = self.composite.adjoint_gradient(&s, theta, &self.model.label_projector(label))?;
        self.chain(p_y, &mut grad);
        Ok((self.loss.value(probs_for(p_y, label), label), grad))
    }

    /// Same gradient by the parameter-shift rule on `p_y`.
    pub fn loss_and_shift_gradient(&self, input: &StateVector, label: u8, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let s = self.prepare(input)?;
        let obs = self.model.label_projector(label);
        let p_y = self.composite.expectation(&s, theta, &obs)?;
        let mut grad = self.composite.parameter_shift_gradient(&s, theta, &obs)?;
        self.chain(p_y, &mut grad);
        Ok((self.loss.value(probs_for(p_y, label), label), grad))
    }

    fn chain(&self, p_y: f64, grad: &mut [f64]) {
        let slope = self.loss.slope(p_y.clamp(0.0, 1.0));
        grad.iter_mut().for_each(|g| *g *= slope);
    }

    fn prepare(&self, input: &StateVector) -> Result<StateVector> {
        if input.n_qubits() != self.model.n_data() {
            return Err(Error::DimensionMismatch { expected: self.model.n_data(), found: input.n_qubits() });
        }
        Ok(input.with_zero_ancillas(1))
    }
}

fn probs_for(p_y: f64, label: u8) -> [f64; 2] {
    let p_y = p_y.clamp(0.0, 1.0);
    if label == 0 {
        [p_y, 1.0 - p_y]
    } else {
        [1.0 - p_y, p_y]
    }
}

/// `L(Θ, E; θ)` and `∂L/∂θ`.
pub fn encoded_loss_and_gradient(
    ctx: &EncodedLossContext,
    input: &StateVector,
    label: u8,
    theta: &[f64],
) -> Result<(f64, Vec<f64>)> {
    ctx.loss_and_gradient(input, label, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::pauli;
    use crate::rng::{domain, stream};
    use crate::statevec::fidelity;

    #[test]
    fn haar_samples_are_unitary() {
        let mut rng = stream(1, domain::ENCODER, 0);
        for d in [1, 2, 4, 8, 64] {
            assert!(sample_haar_unitary(d, &mut rng).unwrap().unitarity_deficit() < 1e-10);
        }
        assert!(matches!(sample_haar_unitary(8192, &mut rng), Err(Error::DimensionTooLarge { .. })));
    }

    #[test]
    fn first_moment_of_z_vanishes() {
        let mut rng = stream(2, domain::ENCODER, 0);
        let z = pauli::z();
        let mut acc = CMatrix::zeros(2, 2);
        let m = 100_000;
        for _ in 0..m {
            let u = sample_haar_unitary(2, &mut rng).unwrap();
            acc = &acc + &u.adjoint().matmul(&z).matmul(&u);
        }
        assert!(acc.scale(C64::new(1.0 / m as f64, 0.0)).frobenius_norm() < 5e-3);
    }

    /// Eigenvalue angles in `[0, 2π)` from nalgebra's complex Schur form.
    fn eigen_angles(u: &CMatrix) -> Vec<f64> {
        let d = u.rows();
        let m = nalgebra::DMatrix::from_fn(d, d, |r, c| u[(r, c)]);
        let eig = m.eigenvalues().expect("Schur form converges for unitary input");
        eig.iter().map(|z| z.arg().rem_euclid(2.0 * std::f64::consts::PI)).collect()
    }

    #[test]
    fn eigenvalue_angles_are_uniform() {
        let mut rng = stream(3, domain::ENCODER, 0);
        let bins = 16;
        let mut counts = vec![0usize; bins];
        for _ in 0..10_000 {
            let u = sample_haar_unitary(8, &mut rng).unwrap();
            for a in eigen_angles(&u) {
                counts[((a / (2.0 * std::f64::consts::PI) * bins as f64) as usize).min(bins - 1)] += 1;
            }
        }
        let total: usize = counts.iter().sum();
        let expected = total as f64 / bins as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 99th percentile of chi-squared with 15 degrees of freedom
        assert!(chi2 < 30.58, "chi2 = {chi2}");
    }

    #[test]
    fn block_encoder_round_trip_and_locality() {
        let mut rng = stream(4, domain::ENCODER, 0);
        let factors = sample_block_encoder(4, 2, 2, &mut rng).unwrap();
        let enc = Encoder::Blocks { m: 2, factors };
        let psi = StateVector::random(4, &mut rng);
        let mut s = psi.clone();
        enc.encode(&mut s).unwrap();
        enc.decode(&mut s).unwrap();
        assert!(1.0 - fidelity(&psi, &s).unwrap() < 1e-10);

        // only block 0 acts: the reduced state of qubits 2,3 of a product state is untouched
        let only_first = Encoder::Blocks { m: 2, factors: vec![sample_haar_unitary(4, &mut rng).unwrap()] };
        let product = StateVector::random(2, &mut rng).tensor(&StateVector::random(2, &mut rng));
        let mut t = product.clone();
        only_first.encode(&mut t).unwrap();
        let before = product.reduced_density(&[2, 3]).unwrap();
        let after = t.reduced_density(&[2, 3]).unwrap();
        assert!(before.distance(&after) < 1e-12);

        assert!(sample_block_encoder(5, 2, 2, &mut rng).is_err());
        assert!(Codebook::new(CodebookKind::BlockHaar { m: 2, xi: 3 }, 4).is_err());
    }

    #[test]
    fn single_qubit_blocks_form_local_encoder() {
        let mut rng = stream(5, domain::ENCODER, 0);
        let factors = sample_block_encoder(3, 1, 3, &mut rng).unwrap();
        assert_eq!(factors.len(), 3);
        assert!(factors.iter().all(|f| f.rows() == 2 && f.unitarity_deficit() < 1e-10));
    }

    #[test]
    fn pvqc_encoder_shape_and_inverse() {
        let mut rng = stream(6, domain::ENCODER, 0);
        let (circuit, params) = sample_pvqc_encoder(4, 4, &mut rng).unwrap();
        assert_eq!(params.len(), 64);
        let psi = StateVector::random(4, &mut rng);
        let mut s = psi.clone();
        circuit.apply(&mut s, &params).unwrap();
        circuit.apply_inverse(&mut s, &params).unwrap();
        assert!(1.0 - fidelity(&psi, &s).unwrap() < 1e-10);
    }

    #[test]
    fn every_codebook_round_trips() {
        let mut rng = stream(7, domain::ENCODER, 0);
        for kind in [CodebookKind::GlobalHaar, CodebookKind::BlockHaar { m: 2, xi: 2 }, CodebookKind::Pvqc { depth: 3 }] {
            let enc = Codebook::new(kind, 4).unwrap().sample(&mut rng).unwrap();
            assert!(enc.to_dense().unwrap().unitarity_deficit() < 1e-10);
            // on a larger register the extra qubit is a spectator
            let psi = StateVector::random(5, &mut rng);
            let mut s = psi.clone();
            enc.encode(&mut s).unwrap();
            enc.decode(&mut s).unwrap();
            assert!(1.0 - fidelity(&psi, &s).unwrap() < 1e-10, "{kind}");
        }
    }

    #[test]
    fn deficit_of_exact_haar_and_identity() {
        let mut rng = stream(8, domain::ENCODER, 0);
        let haar = two_design_deficit(|r| sample_haar_unitary(2, r).unwrap(), 2, 200_000, None, &mut rng).unwrap();
        assert!(haar.deficit < 5e-3 && haar.deficit >= 0.0, "{haar:?}");
        let ident = two_design_deficit(|_| CMatrix::identity(2), 2, 1000, None, &mut rng).unwrap();
        assert!((ident.deficit - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(ident.deficit > 0.1);
        assert!(matches!(
            two_design_deficit(|_| CMatrix::identity(2), 2, 99, None, &mut rng),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn deeper_pvqc_is_closer_to_two_design() {
        let mut rng = stream(9, domain::ENCODER, 0);
        let deficit = |depth: usize, rng: &mut crate::rng::Rng| {
            two_design_deficit(
                |r| {
                    let (c, p) = sample_pvqc_encoder(2, depth, r).unwrap();
                    c.circuit().unitary(&p).unwrap()
                },
                4,
                10_000,
                None,
                rng,
            )
            .unwrap()
            .deficit
        };
        let shallow = deficit(1, &mut rng);
        let deep = deficit(4, &mut rng);
        assert!(deep < shallow, "depth 4: {deep}, depth 1: {shallow}");
    }

    fn toy_context(encoder: Option<Encoder>, n: usize, seed: u64) -> EncodedLossContext {
        let mut rng = stream(seed, domain::CLASSIFIER, 0);
        let model = ClassifierModel::random(n, 2, &mut rng).unwrap();
        EncodedLossContext::new(encoder, model, ParamCircuit::adversarial(n, 2).unwrap(), LossKind::Kl).unwrap()
    }

    #[test]
    fn zero_attack_gives_clean_loss() {
        let mut rng = stream(10, domain::ENCODER, 0);
        let enc = Codebook::new(CodebookKind::GlobalHaar, 3).unwrap().sample(&mut rng).unwrap();
        let ctx = toy_context(Some(enc), 3, 1);
        let psi = StateVector::random(3, &mut rng);
        let theta = vec![0.0; ctx.param_count()];
        let (loss, _) = encoded_loss_and_gradient(&ctx, &psi, 1, &theta).unwrap();
        let clean = ctx.model().loss_and_gradient(&psi, 1, LossKind::Kl).unwrap().0;
        assert!((loss - clean).abs() < 1e-10);
    }

    #[test]
    fn identity_encoder_matches_unencoded() {
        let mut rng = stream(11, domain::ENCODER, 0);
        let plain = toy_context(None, 3, 2);
        let ident = toy_context(Some(Encoder::Dense(CMatrix::identity(8))), 3, 2);
        let psi = StateVector::random(3, &mut rng);
        let theta: Vec<f64> = (0..plain.param_count()).map(|_| rng.random_range(-0.3..0.3)).collect();
        let (la, ga) = plain.loss_and_gradient(&psi, 0, &theta).unwrap();
        let (lb, gb) = ident.loss_and_gradient(&psi, 0, &theta).unwrap();
        assert!((la - lb).abs() < 1e-12);
        assert!(ga.iter().zip(&gb).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn adjoint_and_shift_gradients_agree() {
        let mut rng = stream(12, domain::ENCODER, 0);
        let enc = Codebook::new(CodebookKind::BlockHaar { m: 1, xi: 3 }, 3).unwrap().sample(&mut rng).unwrap();
        let ctx = toy_context(Some(enc), 3, 3);
        let psi = StateVector::random(3, &mut rng);
        let theta: Vec<f64> = (0..ctx.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, a) = ctx.loss_and_gradient(&psi, 1, &theta).unwrap();
        let (_, b) = ctx.loss_and_shift_gradient(&psi, 1, &theta).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-10));
    }

    /// `i⟨ψ|E†U₋†[A_l, U₊†E H_V E†U₊]U₋E|ψ⟩` at `θ = 0`, with every operator
    /// dense on the data register and `H_V` the classifier observable
    /// compressed onto ancilla `|0⟩`.
    #[test]
    fn gradient_matches_commutator_form() {
        let n = 2;
        let mut rng = stream(13, domain::ENCODER, 0);
        let u_enc = sample_haar_unitary(4, &mut rng).unwrap();
        let ctx = toy_context(Some(Encoder::Dense(u_enc.clone())), n, 4);
        let psi = StateVector::random(n, &mut rng);
        let label = 0;
        let theta = vec![0.0; ctx.param_count()];
        let (_, grad) = ctx.loss_and_gradient(&psi, label, &theta).unwrap();

        // H_V on the data register
        let v = ctx.model().circuit().circuit().unitary(ctx.model().params()).unwrap();
        let proj = ctx.model().label_projector(label).to_dense();
        let full = v.adjoint().matmul(&proj).matmul(&v);
        let h_v = CMatrix::from_fn(4, 4, |r, c| full[(r, c)]);
        let p_y = ctx.model().probabilities(&psi).unwrap()[label as usize];
        let h_v = h_v.scale(C64::new(LossKind::Kl.slope(p_y), 0.0));

        let adv = ctx.adversary().circuit();
        let inside = u_enc.matmul(&h_v).matmul(&u_enc.adjoint());
        for (l, g) in grad.iter().enumerate() {
            // split U(θ=0) around rotation l: U₋ is everything before it
            let pos = adv.ops().iter().position(|op| matches!(op, crate::circuits::Op::Rot { param, .. } if *param == l)).unwrap();
            let mut before = Circuit::new(n);
            let mut after = Circuit::new(n);
            for (k, op) in adv.ops().iter().enumerate() {
                let target = if k < pos { &mut before } else { &mut after };
                match op {
                    crate::circuits::Op::Rot { .. } => {}
                    crate::circuits::Op::Cnot { control, target: t } => target.push_cnot(*control, *t).unwrap(),
                    _ => unreachable!(),
                }
            }
            let u_minus = before.unitary(&[]).unwrap();
            let u_plus = after.unitary(&[]).unwrap();
            let a_l = adv.generator(l).unwrap().to_dense();
            let x = u_plus.adjoint().matmul(&inside).matmul(&u_plus);
            let comm = &a_l.matmul(&x) - &x.matmul(&a_l);
            let op = u_enc.adjoint().matmul(&u_minus.adjoint()).matmul(&comm).matmul(&u_minus).matmul(&u_enc);
            let val = crate::linalg::inner(psi.amplitudes(), &op.matvec(psi.amplitudes())) * C64::new(0.0, 1.0);
            assert!(val.im.abs() < 1e-12);
            assert!((val.re - g).abs() < 1e-8, "param {l}: {} vs {g}", val.re);
        }
    }
}
