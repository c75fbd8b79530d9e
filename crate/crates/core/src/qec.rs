//! Error-correcting encoders hidden behind a random frame, local noise,
//! logical error rates, and the differential-privacy view of robustness.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{haar_factor, ProductStateSpec};
use crate::circuits::Circuit;
use crate::classifier::ClassifierModel;
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::rng::{self, domain};
use crate::statevec::{Mat2, Pauli, PauliString, StateVector};

/// Largest physical register simulated.
pub const MAX_PHYSICAL_QUBITS: usize = 14;

/// A logical qubit counts as changed when its recovered state has fidelity
/// below `1 − CHANGED_TOL` with the original.
pub const CHANGED_TOL: f64 = 1e-6;

/// Branches lighter than this are dropped during syndrome extraction.
const BRANCH_FLOOR: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeName {
    /// Bit-flip code `|0⟩ → |000⟩`, `|1⟩ → |111⟩`.
    Repetition3,
    /// The `[[5,1,3]]` code with stabilizers the cyclic shifts of `XZZXI`.
    Perfect5,
}

impl std::fmt::Display for CodeName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CodeName::Repetition3 => "repetition3",
            CodeName::Perfect5 => "perfect5",
        })
    }
}

/// One level of a stabilizer code with its encoder and lookup decoder.
#[derive(Clone, Debug)]
struct BaseCode {
    n0: usize,
    stabilizers: Vec<PauliString>,
    /// Maps `|b⟩|0…0⟩` (logical bit on qubit 0) to the codeword `|b_L⟩`.
    encoder: Circuit,
    /// Syndrome (bit `i` set when stabilizer `i` reads −1) → correction.
    table: HashMap<u64, PauliString>,
}

impl BaseCode {
    fn build(name: CodeName) -> Result<Self> {
        let (n0, stabilizers, errors, encoder) = match name {
            CodeName::Repetition3 => {
                let mut c = Circuit::new(3);
                c.push_cnot(0, 1)?;
                c.push_cnot(0, 2)?;
                let stabs = vec![PauliString::parse("ZZI")?, PauliString::parse("IZZ")?];
                (3, stabs, vec![Pauli::X], c)
            }
            CodeName::Perfect5 => {
                let stabs = ["XZZXI", "IXZZX", "XIXZZ", "ZXIXZ"].iter().map(|s| PauliString::parse(s)).collect::<Result<Vec<_>>>()?;
                let mut c = Circuit::new(5);
                c.push_unitary((0..5).collect(), codeword_unitary(&stabs, &PauliString::parse("XXXXX")?)?)?;
                (5, stabs, vec![Pauli::X, Pauli::Y, Pauli::Z], c)
            }
        };
        let mut table = HashMap::new();
        table.insert(0, PauliString::identity(n0));
        for q in 0..n0 {
            for &p in &errors {
                let e = PauliString::single(n0, q, p);
                table.entry(syndrome(&stabilizers, &e)).or_insert(e);
            }
        }
        Ok(Self { n0, stabilizers, encoder, table })
    }
}

/// Unitary whose first two columns are the codewords `|0_L⟩ ∝ Π(I+g)/2 |0…0⟩`
/// and `|1_L⟩ = X_L|0_L⟩`, completed to a basis by Gram–Schmidt.
fn codeword_unitary(stabs: &[PauliString], logical_x: &PauliString) -> Result<CMatrix> {
    let n = logical_x.len();
    let d = 1usize << n;
    let mut zero = vec![C64::new(0.0, 0.0); d];
    zero[0] = C64::new(1.0, 0.0);
    for g in stabs {
        let gv = g.apply_to(&zero);
        zero.iter_mut().zip(&gv).for_each(|(a, b)| *a = (*a + b) * 0.5);
    }
    let one = logical_x.apply_to(&zero);
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(d);
    let candidates = [zero, one].into_iter().chain((0..d).map(|i| {
        let mut e = vec![C64::new(0.0, 0.0); d];
        e[i] = C64::new(1.0, 0.0);
        e
    }));
    for mut v in candidates {
        for c in &cols {
            let ov = crate::linalg::inner(c, &v);
            v.iter_mut().zip(c).for_each(|(a, b)| *a -= ov * b);
        }
        let norm = crate::linalg::norm_sqr(&v).sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            cols.push(v);
        }
        if cols.len() == d {
            break;
        }
    }
    let mut u = CMatrix::zeros(d, d);
    for (j, c) in cols.iter().enumerate() {
        u.set_column(j, c);
    }
    Ok(u)
}

/// Syndrome bits of a Pauli error against a stabilizer list.
fn syndrome(stabs: &[PauliString], e: &PauliString) -> u64 {
    stabs.iter().enumerate().filter(|(_, g)| !g.commutes_with(e)).fold(0, |s, (i, _)| s | 1 << i)
}

/// A code concatenated `levels` times with itself. Each logical qubit
/// occupies `n0^levels` physical qubits.
#[derive(Clone, Debug)]
pub struct QecCode {
    name: CodeName,
    levels: usize,
    base: BaseCode,
}

impl PartialEq for QecCode {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.levels == other.levels
    }
}

/// Serializable description of a code.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeDescriptor {
    pub format_version: u32,
    pub name: CodeName,
    pub levels: usize,
}

impl CodeDescriptor {
    pub const FORMAT_VERSION: u32 = 1;
}

impl QecCode {
    pub fn new(name: CodeName, levels: usize) -> Result<Self> {
        if !(1..=2).contains(&levels) {
            return Err(Error::InvalidArgument(format!("{levels} concatenation levels; supported are 1 and 2")));
        }
        let base = BaseCode::build(name)?;
        let block = base.n0.pow(levels as u32);
        if block > MAX_PHYSICAL_QUBITS {
            return Err(Error::QubitCap { needed: block, cap: MAX_PHYSICAL_QUBITS });
        }
        Ok(Self { name, levels, base })
    }

    pub fn repetition3() -> Self {
        Self::new(CodeName::Repetition3, 1).expect("three qubits fit")
    }

    pub fn perfect5() -> Self {
        Self::new(CodeName::Perfect5, 1).expect("five qubits fit")
    }

    pub fn name(&self) -> CodeName {
        self.name
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Physical qubits per logical qubit at the base level.
    pub fn n0(&self) -> usize {
        self.base.n0
    }

    /// Physical qubits per logical qubit after concatenation.
    pub fn block_size(&self) -> usize {
        self.base.n0.pow(self.levels as u32)
    }

    /// Stabilizer generators of the base level.
    pub fn stabilizers(&self) -> &[PauliString] {
        &self.base.stabilizers
    }

    /// Correction the decoder applies for a base-level syndrome.
    pub fn recovery(&self, syndrome: u64) -> Result<&PauliString> {
        self.base.table.get(&syndrome).ok_or(Error::UnknownSyndrome(syndrome))
    }

    /// Base-level syndrome of a Pauli error on one block.
    pub fn syndrome_of(&self, error: &PauliString) -> Result<u64> {
        if error.len() != self.base.n0 {
            return Err(Error::DimensionMismatch { expected: self.base.n0, found: error.len() });
        }
        Ok(syndrome(&self.base.stabilizers, error))
    }

    /// Encoder of one logical block: logical qubit on qubit 0, the rest
    /// starting in `|0⟩`.
    pub fn block_encoder(&self) -> Result<Circuit> {
        let n0 = self.base.n0;
        if self.levels == 1 {
            return Ok(self.base.encoder.clone());
        }
        let mut c = Circuit::new(n0 * n0);
        c.append(&self.base.encoder, &(0..n0).map(|j| j * n0).collect::<Vec<_>>())?;
        for j in 0..n0 {
            c.append(&self.base.encoder, &(0..n0).map(|t| j * n0 + t).collect::<Vec<_>>())?;
        }
        Ok(c)
    }

    pub fn descriptor(&self) -> CodeDescriptor {
        CodeDescriptor { format_version: CodeDescriptor::FORMAT_VERSION, name: self.name, levels: self.levels }
    }

    pub fn from_descriptor(d: &CodeDescriptor) -> Result<Self> {
        if d.format_version != CodeDescriptor::FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported code descriptor version {}", d.format_version)));
        }
        Self::new(d.name, d.levels)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.descriptor())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_descriptor(&serde_json::from_str(s)?)
    }
}

/// `concatenate(code, 1)` is the base code itself.
pub fn concatenate(code: &QecCode, levels: usize) -> Result<QecCode> {
    QecCode::new(code.name, levels)
}

// ---------------------------------------------------------------------------
// Obfuscation frame

/// Random relabelling of the physical qubits followed by a Pauli on each.
/// Attack code only ever sees the framed register.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObfuscationFrame {
    /// Physical qubit `q` of the code is exposed as qubit `perm[q]`.
    pub perm: Vec<usize>,
    pub paulis: Vec<Pauli>,
    pub seed: u64,
}

impl ObfuscationFrame {
    pub fn identity(n: usize) -> Self {
        Self { perm: (0..n).collect(), paulis: vec![Pauli::I; n], seed: 0 }
    }

    pub fn random(n: usize, seed: u64, index: u64) -> Self {
        let mut r = rng::stream(seed, domain::FRAME, index);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);
        let paulis = (0..n).map(|_| [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z][r.random_range(0..4)]).collect();
        Self { perm, paulis, seed }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        let s = state.permute_qubits(&self.perm)?;
        Ok(StateVector::from_raw(PauliString::new(self.paulis.clone()).apply_to(s.amplitudes())))
    }

    pub fn undo(&self, state: &StateVector) -> Result<StateVector> {
        if state.n_qubits() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), found: state.n_qubits() });
        }
        let s = StateVector::from_raw(PauliString::new(self.paulis.clone()).apply_to(state.amplitudes()));
        let mut inv = vec![0; self.len()];
        for (q, &p) in self.perm.iter().enumerate() {
            inv[p] = q;
        }
        s.permute_qubits(&inv)
    }
}

// ---------------------------------------------------------------------------
// Encoding

/// Where logical qubit `i` starts before encoding: qubit `i · block`.
fn placement(k: usize, block: usize) -> Vec<usize> {
    let n = k * block;
    let mut perm = vec![0; n];
    let mut next = 0;
    for (q, p) in perm.iter_mut().enumerate() {
        if q < k {
            *p = q * block;
        } else {
            while next % block == 0 && next / block < k {
                next += 1;
            }
            *p = next;
            next += 1;
        }
    }
    perm
}

fn run_on(state: &mut StateVector, c: &Circuit, qubits: &[usize], inverse: bool) -> Result<()> {
    let mut full = Circuit::new(state.n_qubits());
    full.append(c, qubits)?;
    if inverse {
        full.apply_inverse(state, &[])
    } else {
        full.apply(state, &[])
    }
}

/// Encodes each logical qubit into its own block and applies the frame.
pub fn encode_logical(logical: &StateVector, code: &QecCode, frame: &ObfuscationFrame) -> Result<StateVector> {
    let k = logical.n_qubits();
    let block = code.block_size();
    let n = k * block;
    if n > MAX_PHYSICAL_QUBITS {
        return Err(Error::QubitCap { needed: n, cap: MAX_PHYSICAL_QUBITS });
    }
    if frame.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: frame.len() });
    }
    let mut s = logical.with_zero_ancillas(n - k).permute_qubits(&placement(k, block))?;
    let enc = code.block_encoder()?;
    for b in 0..k {
        run_on(&mut s, &enc, &(b * block..(b + 1) * block).collect::<Vec<_>>(), false)?;
    }
    frame.apply(&s)
}

// ---------------------------------------------------------------------------
// Noise

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum NoiseKind {
    /// `X` with probability `p`.
    BitFlip { p: f64 },
    /// `X`, `Y` or `Z` (uniformly) with probability `p`.
    Depolarizing { p: f64 },
    /// `exp(−iα n̂·σ)` with `α` uniform on `[0, max_angle]` and `n̂` uniform
    /// on the sphere.
    RandomUnitary { max_angle: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Placement {
    /// Every qubit is exposed to the channel independently.
    Iid,
    /// `⌊τ n⌋` uniformly chosen qubits are exposed.
    Fraction { tau: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub placement: Placement,
}

impl NoiseModel {
    pub fn iid(kind: NoiseKind) -> Self {
        Self { kind, placement: Placement::Iid }
    }

    pub fn fraction(kind: NoiseKind, tau: f64) -> Self {
        Self { kind, placement: Placement::Fraction { tau } }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            NoiseKind::BitFlip { p } | NoiseKind::Depolarizing { p } => (0.0..=1.0).contains(&p),
            NoiseKind::RandomUnitary { max_angle } => max_angle.is_finite() && max_angle >= 0.0,
        } && match self.placement {
            Placement::Iid => true,
            Placement::Fraction { tau } => (0.0..=1.0).contains(&tau),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid noise model {self:?}")))
        }
    }
}

/// Applies single-qubit noise; returns the new state and the qubits that
/// received a non-identity operation.
pub fn apply_local_noise<R: Rng + ?Sized>(state: &StateVector, model: &NoiseModel, rng: &mut R) -> Result<(StateVector, Vec<usize>)> {
    model.validate()?;
    let n = state.n_qubits();
    let targets: Vec<usize> = match model.placement {
        Placement::Iid => (0..n).collect(),
        Placement::Fraction { tau } => {
            let k = ((tau * n as f64) + 1e-12).floor() as usize;
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(rng);
            let mut chosen = all[..k.min(n)].to_vec();
            chosen.sort_unstable();
            chosen
        }
    };
    let mut out = state.clone();
    let mut hits = Vec::new();
    for q in targets {
        let gate: Option<Mat2> = match model.kind {
            NoiseKind::BitFlip { p } => (rng.random::<f64>() < p).then(|| Pauli::X.matrix()),
            NoiseKind::Depolarizing { p } => {
                (rng.random::<f64>() < p).then(|| [Pauli::X, Pauli::Y, Pauli::Z][rng.random_range(0..3)].matrix())
            }
            NoiseKind::RandomUnitary { max_angle } => Some(random_rotation(max_angle, rng)),
        };
        if let Some(g) = gate {
            out.apply_1q(q, &g);
            hits.push(q);
        }
    }
    Ok((out, hits))
}

fn random_rotation<R: Rng + ?Sized>(max_angle: f64, rng: &mut R) -> Mat2 {
    let alpha = rng.random::<f64>() * max_angle;
    let z: f64 = 2.0 * rng.random::<f64>() - 1.0;
    let phi = std::f64::consts::TAU * rng.random::<f64>();
    let r = (1.0 - z * z).max(0.0).sqrt();
    let (nx, ny) = (r * phi.cos(), r * phi.sin());
    let (c, s) = (alpha.cos(), alpha.sin());
    let i = C64::new(0.0, 1.0);
    [
        [C64::new(c, 0.0) - i * s * z, -i * s * C64::new(nx, -ny)],
        [-i * s * C64::new(nx, ny), C64::new(c, 0.0) + i * s * z],
    ]
}

// ---------------------------------------------------------------------------
// Decoding

/// How syndromes are read out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyndromeMode {
    /// Sample one outcome per stabilizer round.
    Projective,
    /// Keep every syndrome branch with its weight (the channel the decoder
    /// implements, without sampling noise).
    Coherent,
}

/// Weighted ensemble of pure states after decoding. Logical qubits occupy
/// the low qubits of each branch; the rest are the code's ancillas.
#[derive(Clone, Debug)]
pub struct Mixture {
    pub logical: usize,
    pub branches: Vec<(f64, StateVector)>,
}

impl Mixture {
    /// `⟨ψ|ρ_L|ψ⟩` for the logical reduced state `ρ_L`.
    pub fn fidelity(&self, psi: &StateVector) -> Result<f64> {
        if psi.n_qubits() != self.logical {
            return Err(Error::DimensionMismatch { expected: self.logical, found: psi.n_qubits() });
        }
        let dl = psi.dim();
        let mut f = 0.0;
        for (w, s) in &self.branches {
            for chunk in s.amplitudes().chunks(dl) {
                f += w * crate::linalg::inner(psi.amplitudes(), chunk).norm_sqr();
            }
        }
        Ok(f.min(1.0))
    }

    /// `⟨g|ρ_q|g⟩` for logical qubit `q` against the pure state `g|0⟩`.
    pub fn qubit_fidelity(&self, q: usize, g: &Mat2) -> Result<f64> {
        if q >= self.logical {
            return Err(Error::QubitOutOfRange { qubit: q, n_qubits: self.logical });
        }
        let v = [g[0][0], g[1][0]];
        let mut f = 0.0;
        for (w, s) in &self.branches {
            let rho = s.reduced_qubit(q)?;
            let mut acc = C64::new(0.0, 0.0);
            for a in 0..2 {
                for b in 0..2 {
                    acc += v[a].conj() * rho[a][b] * v[b];
                }
            }
            f += w * acc.re;
        }
        Ok(f.min(1.0))
    }

    /// Weighted classifier output on the logical register.
    pub fn probabilities(&self, model: &ClassifierModel) -> Result<[f64; 2]> {
        let mut p = [0.0; 2];
        let dl = 1usize << self.logical;
        for (w, s) in &self.branches {
            for chunk in s.amplitudes().chunks(dl) {
                let norm = crate::linalg::norm_sqr(chunk);
                if norm < BRANCH_FLOOR {
                    continue;
                }
                let piece = StateVector::from_raw(chunk.iter().map(|a| a / norm.sqrt()).collect());
                let q = model.probabilities(&piece)?;
                p[0] += w * norm * q[0];
                p[1] += w * norm * q[1];
            }
        }
        Ok(p)
    }
}

fn embed_pauli(p: &PauliString, qubits: &[usize], n: usize) -> PauliString {
    let mut v = vec![Pauli::I; n];
    for (k, &q) in qubits.iter().enumerate() {
        v[q] = p.paulis()[k];
    }
    let s = PauliString::new(v);
    if p.is_negative() {
        s.negated()
    } else {
        s
    }
}

/// Measures the base stabilizers on `qubits` and applies the table
/// correction in every kept branch.
fn correct_block<R: Rng + ?Sized>(
    branches: Vec<(f64, StateVector)>,
    code: &QecCode,
    qubits: &[usize],
    mode: SyndromeMode,
    rng: &mut R,
) -> Result<Vec<(f64, StateVector)>> {
    let n = branches.first().map_or(0, |b| b.1.n_qubits());
    let stabs: Vec<PauliString> = code.base.stabilizers.iter().map(|g| embed_pauli(g, qubits, n)).collect();
    let mut out = Vec::new();
    for (w, s) in branches {
        let mut parts: Vec<(u64, Vec<C64>)> = vec![(0, s.into_amplitudes())];
        for (i, g) in stabs.iter().enumerate() {
            let mut next = Vec::with_capacity(parts.len() * 2);
            for (syn, v) in parts {
                let gv = g.apply_to(&v);
                let plus: Vec<C64> = v.iter().zip(&gv).map(|(a, b)| (a + b) * 0.5).collect();
                let minus: Vec<C64> = v.iter().zip(&gv).map(|(a, b)| (a - b) * 0.5).collect();
                for (bit, part) in [(0u64, plus), (1u64, minus)] {
                    if crate::linalg::norm_sqr(&part) > BRANCH_FLOOR {
                        next.push((syn | bit << i, part));
                    }
                }
            }
            parts = next;
            if mode == SyndromeMode::Projective && parts.len() > 1 {
                let u: f64 = rng.random();
                let total: f64 = parts.iter().map(|p| crate::linalg::norm_sqr(&p.1)).sum();
                let mut acc = 0.0;
                let mut pick = parts.len() - 1;
                for (j, p) in parts.iter().enumerate() {
                    acc += crate::linalg::norm_sqr(&p.1) / total;
                    if u < acc {
                        pick = j;
                        break;
                    }
                }
                parts = vec![parts.swap_remove(pick)];
            }
        }
        let total: f64 = parts.iter().map(|p| crate::linalg::norm_sqr(&p.1)).sum();
        for (syn, v) in parts {
            let weight = crate::linalg::norm_sqr(&v);
            let fix = embed_pauli(code.recovery(syn)?, qubits, n);
            let fixed: Vec<C64> = fix.apply_to(&v).iter().map(|a| a / weight.sqrt()).collect();
            let share = if mode == SyndromeMode::Projective { 1.0 } else { weight / total };
            out.push((w * share, StateVector::from_raw(fixed)));
        }
    }
    Ok(out)
}

/// Undoes the frame, corrects each block (inner levels first), decodes, and
/// moves the logical qubits to the bottom of the register.
pub fn correct_and_decode<R: Rng + ?Sized>(
    state: &StateVector,
    code: &QecCode,
    frame: &ObfuscationFrame,
    mode: SyndromeMode,
    rng: &mut R,
) -> Result<Mixture> {
    let block = code.block_size();
    let n = state.n_qubits();
    if n % block != 0 {
        return Err(Error::InvalidArgument(format!("{n} qubits do not split into blocks of {block}")));
    }
    let k = n / block;
    let n0 = code.n0();
    let mut branches = vec![(1.0, frame.undo(state)?)];
    for b in 0..k {
        let start = b * block;
        // innermost blocks are contiguous runs of n0 qubits; each level up
        // takes the first qubit of every run below it
        let mut stride = 1;
        for _ in 0..code.levels {
            let groups = block / (stride * n0);
            for g in 0..groups {
                let qubits: Vec<usize> = (0..n0).map(|t| start + g * stride * n0 + t * stride).collect();
                branches = correct_block(branches, code, &qubits, mode, rng)?;
                for (_, s) in branches.iter_mut() {
                    run_on(s, &code.base.encoder, &qubits, true)?;
                }
            }
            stride *= n0;
        }
    }
    let mut inv = vec![0; n];
    for (q, &p) in placement(k, block).iter().enumerate() {
        inv[p] = q;
    }
    let branches = branches.into_iter().map(|(w, s)| Ok((w, s.permute_qubits(&inv)?))).collect::<Result<Vec<_>>>()?;
    Ok(Mixture { logical: k, branches })
}

// ---------------------------------------------------------------------------
// Logical error rate

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateEstimate {
    pub rate: f64,
    pub stderr: f64,
    pub trials: usize,
}

/// Minimum trials for a logical error rate.
pub const MIN_RATE_TRIALS: usize = 1000;

/// Fraction of trials in which a Haar-random logical qubit is not recovered
/// (fidelity below `1 − CHANGED_TOL`), with projective syndrome readout and
/// a fresh frame per trial.
pub fn logical_error_rate(code: &QecCode, noise: &NoiseModel, trials: usize, seed: u64) -> Result<RateEstimate> {
    if trials < MIN_RATE_TRIALS {
        return Err(Error::TooFewSamples { got: trials, min: MIN_RATE_TRIALS });
    }
    noise.validate()?;
    let block = code.block_size();
    let fails: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream(seed, domain::QEC, t as u64);
            let logical = ProductStateSpec::haar(1, &mut r).state();
            let frame = ObfuscationFrame::random(block, seed, t as u64);
            let phys = encode_logical(&logical, code, &frame)?;
            let (noisy, _) = apply_local_noise(&phys, noise, &mut r)?;
            let out = correct_and_decode(&noisy, code, &frame, SyndromeMode::Projective, &mut r)?;
            Ok(out.fidelity(&logical)? < 1.0 - CHANGED_TOL)
        })
        .collect::<Result<_>>()?;
    let count = fails.iter().filter(|f| **f).count();
    let rate = count as f64 / trials as f64;
    Ok(RateEstimate { rate, stderr: (rate * (1.0 - rate) / trials as f64).sqrt(), trials })
}

/// Majority-vote failure probability of a repetition code concatenated
/// `levels` times under independent bit flips.
pub fn repetition_failure(p: f64, levels: usize) -> f64 {
    (0..levels).fold(p, |q, _| 3.0 * q * q - 2.0 * q * q * q)
}

// ---------------------------------------------------------------------------
// Differential privacy

/// Classifier whose ancilla passes through a depolarizing layer before
/// readout, so each outcome has probability at least `floor`.
#[derive(Clone, Debug)]
pub struct NoisyClassifier {
    pub model: ClassifierModel,
    pub floor: f64,
}

impl NoisyClassifier {
    pub fn new(model: ClassifierModel, floor: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&floor) {
            return Err(Error::InvalidArgument(format!("output floor {floor} outside [0, 0.5)")));
        }
        Ok(Self { model, floor })
    }

    pub fn n_qubits(&self) -> usize {
        self.model.n_data()
    }

    fn floored(&self, p: [f64; 2]) -> [f64; 2] {
        let s = 1.0 - 2.0 * self.floor;
        [self.floor + s * p[0], self.floor + s * p[1]]
    }

    pub fn probabilities(&self, input: &StateVector) -> Result<[f64; 2]> {
        Ok(self.floored(self.model.probabilities(input)?))
    }

    pub fn mixture_probabilities(&self, m: &Mixture) -> Result<[f64; 2]> {
        Ok(self.floored(m.probabilities(&self.model)?))
    }
}

/// `max_y |ln(p_y / q_y)|`.
pub fn log_ratio(p: [f64; 2], q: [f64; 2]) -> Result<f64> {
    if p.iter().chain(&q).any(|&x| x <= 0.0) {
        return Err(Error::ZeroProbability);
    }
    Ok((p[0] / q[0]).ln().abs().max((p[1] / q[1]).ln().abs()))
}

/// Shannon entropy in nats.
pub fn entropy(p: [f64; 2]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DpEstimate {
    pub epsilon: f64,
    pub tau: f64,
    pub pairs: usize,
    /// Index of the pair that attains the maximum.
    pub worst_pair: usize,
    /// Outcome whose ratio attains the maximum.
    pub worst_outcome: u8,
}

/// Pair `i` of the nested construction: a Haar product input, a random
/// order of its qubits and a replacement factor per qubit. The neighbour at
/// distance `τ` replaces the first `⌊τn⌋` qubits in that order, so the
/// neighbourhoods grow with `τ` for a fixed seed.
#[derive(Clone, Debug)]
struct NestedPair {
    base: ProductStateSpec,
    order: Vec<usize>,
    replacements: Vec<Mat2>,
}

impl NestedPair {
    fn draw(n: usize, seed: u64, index: u64) -> Self {
        let mut r = rng::stream(seed, domain::QDP, index);
        let base = ProductStateSpec::haar(n, &mut r);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut r);
        let replacements = (0..n).map(|_| haar_factor(&mut r)).collect();
        Self { base, order, replacements }
    }

    fn neighbour(&self, tau: f64) -> ProductStateSpec {
        self.neighbourhood(tau).pop().expect("the neighbourhood holds the base point")
    }

    /// The base point followed by the neighbours replacing `1, 2, …, ⌊τn⌋`
    /// qubits.
    fn neighbourhood(&self, tau: f64) -> Vec<ProductStateSpec> {
        let n = self.base.len();
        let k = ((tau * n as f64) + 1e-12).floor() as usize;
        let mut s = self.base.clone();
        let mut out = vec![s.clone()];
        for &q in &self.order[..k.min(n)] {
            s.factors[q] = self.replacements[q];
            out.push(s.clone());
        }
        out
    }
}

fn validate_tau(tau: f64) -> Result<()> {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("distance {tau} outside [0, 1]")))
    }
}

/// Largest log-ratio of output probabilities over `pairs` product-state
/// pairs at normalized Hamming distance at most `τ`, from exact
/// probabilities.
pub fn qdp_epsilon_estimate(channel: &NoisyClassifier, tau: f64, pairs: usize, seed: u64) -> Result<DpEstimate> {
    validate_tau(tau)?;
    if pairs == 0 {
        return Err(Error::InvalidArgument("at least one pair is needed".into()));
    }
    let n = channel.n_qubits();
    let per_pair: Vec<(f64, u8)> = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let pair = NestedPair::draw(n, seed, i as u64);
            let p = channel.probabilities(&pair.base.state())?;
            let mut best = (0.0, 0u8);
            for sigma in pair.neighbourhood(tau) {
                let q = channel.probabilities(&sigma.state())?;
                let r = log_ratio(p, q).map_err(|_| {
                    Error::InvalidArgument("an output probability is zero; enable the noise floor (floor > 0)".into())
                })?;
                if r > best.0 {
                    best = (r, u8::from((p[1] / q[1]).ln().abs() > (p[0] / q[0]).ln().abs()));
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let (worst_pair, &(epsilon, worst_outcome)) =
        per_pair.iter().enumerate().max_by(|a, b| a.1 .0.total_cmp(&b.1 .0)).expect("pairs >= 1");
    Ok(DpEstimate { epsilon, tau, pairs, worst_pair, worst_outcome })
}

/// `1 − e^{−2ε²} E[e^{−H}]`.
pub fn qdp_risk_bound(epsilon: f64, entropy_expectation: f64) -> Result<f64> {
    if !(epsilon >= 0.0) || !(entropy_expectation > 0.0 && entropy_expectation <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need ε >= 0 and E[exp(-H)] in (0, 1], got {epsilon} and {entropy_expectation}"
        )));
    }
    Ok(1.0 - (-2.0 * epsilon * epsilon).exp() * entropy_expectation)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RiskBoundCheck {
    pub tau: f64,
    pub floor: f64,
    pub epsilon: f64,
    /// `E[e^{−H(Q(ρ))}]` over the sampled inputs.
    pub entropy_term: f64,
    /// Mean over inputs of the largest label-disagreement probability
    /// `1 − Σ p_y q_y` over the candidate perturbations.
    pub risk: f64,
    pub risk_stderr: f64,
    pub bound: f64,
}

/// Empirical adversarial risk next to the privacy bound, both from exact
/// output probabilities. Each input gets the nested perturbation at `τ` plus
/// `extra_candidates − 1` further random ones; `ε̂` is the largest ratio
/// over all of them.
pub fn risk_bound_check(channel: &NoisyClassifier, tau: f64, inputs: usize, candidates: usize, seed: u64) -> Result<RiskBoundCheck> {
    validate_tau(tau)?;
    if inputs < 2 || candidates == 0 {
        return Err(Error::InvalidArgument("need at least 2 inputs and 1 candidate".into()));
    }
    let n = channel.n_qubits();
    let rows: Vec<(f64, f64, f64)> = (0..inputs)
        .into_par_iter()
        .map(|i| {
            let mut eps: f64 = 0.0;
            let mut worst: f64 = 0.0;
            let base = NestedPair::draw(n, seed, i as u64).base;
            let p = channel.probabilities(&base.state())?;
            for c in 0..candidates {
                let pair = NestedPair::draw(n, seed, (((c + 1) as u64) << 32) | i as u64);
                let sigma = NestedPair { base: base.clone(), ..pair }.neighbour(tau);
                let q = channel.probabilities(&sigma.state())?;
                eps = eps.max(log_ratio(p, q)?);
                worst = worst.max(1.0 - p[0] * q[0] - p[1] * q[1]);
            }
            Ok((eps, worst, (-entropy(p)).exp()))
        })
        .collect::<Result<_>>()?;
    let epsilon = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let risks: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let s = crate::stats::Summary::of(&risks);
    let entropy_term = crate::stats::mean(&rows.iter().map(|r| r.2).collect::<Vec<_>>());
    Ok(RiskBoundCheck {
        tau,
        floor: channel.floor,
        epsilon,
        entropy_term,
        risk: s.mean,
        risk_stderr: s.stderr,
        bound: qdp_risk_bound(epsilon, entropy_term)?,
    })
}

// ---------------------------------------------------------------------------
// Privacy amplification through a hidden code

#[derive(Clone, Debug)]
pub struct Thm4Config {
    pub code: QecCode,
    /// Logical qubits, each in its own block.
    pub logical: usize,
    /// Per-physical-qubit bit-flip probability (expected physical distance).
    pub tau: f64,
    pub delta: f64,
    pub pairs: usize,
    /// Pairs per grid point when measuring the bare classifier's `ε(·)`.
    pub curve_pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Thm4Report {
    /// `n₀(n₀−1)τ²/δ`.
    pub distance_bound: f64,
    /// Measured `ε(τ')` of the bare classifier at `τ' = j/logical`.
    pub epsilon_curve: Vec<(f64, f64)>,
    /// `ε` interpolated at the distance bound.
    pub epsilon_at_bound: f64,
    /// Per pair: physical distance, logical distance, log-ratio of outputs.
    pub rows: Vec<(f64, f64, f64)>,
    pub satisfied: usize,
    pub failing_fraction: f64,
    pub failing_stderr: f64,
}

impl Thm4Report {
    /// Pairs whose logical distance is within `d` and whose log-ratio is
    /// within `ε(d)`.
    pub fn satisfied_within(&self, d: f64) -> usize {
        let eps = interpolate(&self.epsilon_curve, d);
        self.rows.iter().filter(|r| r.1 <= d + 1e-12 && r.2 <= eps + 1e-9).count()
    }
}

fn interpolate(curve: &[(f64, f64)], x: f64) -> f64 {
    for w in curve.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x <= x1 {
            return y0 + (y1 - y0) * ((x - x0) / (x1 - x0)).clamp(0.0, 1.0);
        }
    }
    curve.last().map_or(0.0, |c| c.1)
}

/// Encodes product logical inputs, flips each physical qubit with
/// probability `τ`, decodes both copies and compares logical distances and
/// classifier output ratios against `ε(n₀(n₀−1)τ²/δ)`.
pub fn verify_thm4(cfg: &Thm4Config, channel: &NoisyClassifier, seed: u64) -> Result<Thm4Report> {
    validate_tau(cfg.tau)?;
    if !(cfg.delta > 0.0 && cfg.delta < 1.0) || cfg.pairs == 0 || cfg.curve_pairs == 0 {
        return Err(Error::InvalidArgument("need δ in (0, 1) and at least one pair".into()));
    }
    if channel.n_qubits() != cfg.logical {
        return Err(Error::DimensionMismatch { expected: cfg.logical, found: channel.n_qubits() });
    }
    let n0 = cfg.code.n0() as f64;
    let distance_bound = n0 * (n0 - 1.0) * cfg.tau * cfg.tau / cfg.delta;
    let epsilon_curve = (0..=cfg.logical)
        .map(|j| {
            let t = j as f64 / cfg.logical as f64;
            Ok((t, qdp_epsilon_estimate(channel, t, cfg.curve_pairs, seed)?.epsilon))
        })
        .collect::<Result<Vec<_>>>()?;
    let epsilon_at_bound = interpolate(&epsilon_curve, distance_bound);
    let block = cfg.code.block_size();
    let n_phys = block * cfg.logical;
    let noise = NoiseModel::iid(NoiseKind::BitFlip { p: cfg.tau });
    let rows: Vec<(f64, f64, f64)> = (0..cfg.pairs)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, domain::QEC, (1 << 32) | i as u64);
            let spec = ProductStateSpec::haar(cfg.logical, &mut r);
            let frame = ObfuscationFrame::random(n_phys, seed, (1 << 32) | i as u64);
            let phys = encode_logical(&spec.state(), &cfg.code, &frame)?;
            let (noisy, hits) = apply_local_noise(&phys, &noise, &mut r)?;
            let clean = correct_and_decode(&phys, &cfg.code, &frame, SyndromeMode::Coherent, &mut r)?;
            let dirty = correct_and_decode(&noisy, &cfg.code, &frame, SyndromeMode::Coherent, &mut r)?;
            let mut changed = 0;
            for (q, g) in spec.factors.iter().enumerate() {
                if dirty.qubit_fidelity(q, g)? < 1.0 - CHANGED_TOL {
                    changed += 1;
                }
            }
            let ratio = log_ratio(channel.mixture_probabilities(&clean)?, channel.mixture_probabilities(&dirty)?)?;
            Ok((hits.len() as f64 / n_phys as f64, changed as f64 / cfg.logical as f64, ratio))
        })
        .collect::<Result<_>>()?;
    let mut report = Thm4Report {
        distance_bound,
        epsilon_curve,
        epsilon_at_bound,
        rows,
        satisfied: 0,
        failing_fraction: 0.0,
        failing_stderr: 0.0,
    };
    report.satisfied = report.satisfied_within(distance_bound);
    let f = 1.0 - report.satisfied as f64 / cfg.pairs as f64;
    report.failing_fraction = f;
    report.failing_stderr = (f * (1.0 - f) / cfg.pairs as f64).sqrt();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(i: u64) -> rng::Rng {
        rng::stream(99, domain::QEC, i)
    }

    #[test]
    fn repetition_encodes_basis_states() {
        let code = QecCode::repetition3();
        let id = ObfuscationFrame::identity(3);
        let s = encode_logical(&StateVector::zero(1), &code, &id).unwrap();
        assert!((s.amplitudes()[0].norm_sqr() - 1.0).abs() < 1e-15);
        let s = encode_logical(&StateVector::basis(1, 1).unwrap(), &code, &id).unwrap();
        assert!((s.amplitudes()[7].norm_sqr() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn perfect5_codewords_are_stabilized() {
        let code = QecCode::perfect5();
        let id = ObfuscationFrame::identity(5);
        for b in 0..2 {
            let s = encode_logical(&StateVector::basis(1, b).unwrap(), &code, &id).unwrap();
            for g in code.stabilizers() {
                assert!((g.expectation(s.amplitudes()) - 1.0).abs() < 1e-10, "{g}");
            }
            let zl = PauliString::parse("ZZZZZ").unwrap().expectation(s.amplitudes());
            assert!((zl - if b == 0 { 1.0 } else { -1.0 }).abs() < 1e-10);
        }
    }

    #[test]
    fn every_single_qubit_pauli_has_a_distinct_syndrome() {
        let code = QecCode::perfect5();
        let mut seen = std::collections::HashSet::new();
        for q in 0..5 {
            for p in [Pauli::X, Pauli::Y, Pauli::Z] {
                let s = code.syndrome_of(&PauliString::single(5, q, p)).unwrap();
                assert_ne!(s, 0);
                assert!(seen.insert(s));
            }
        }
        let rep = QecCode::repetition3();
        let xs: std::collections::HashSet<u64> =
            (0..3).map(|q| rep.syndrome_of(&PauliString::single(3, q, Pauli::X)).unwrap()).collect();
        assert_eq!(xs.len(), 3);
    }

    #[test]
    fn frames_round_trip() {
        let mut rr = r(0);
        let s = StateVector::random(5, &mut rr);
        let f = ObfuscationFrame::random(5, 3, 1);
        let back = f.undo(&f.apply(&s).unwrap()).unwrap();
        assert!((crate::statevec::fidelity(&s, &back).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn encode_decode_round_trips() {
        for code in [QecCode::repetition3(), QecCode::perfect5(), concatenate(&QecCode::repetition3(), 2).unwrap()] {
            for t in 0..20 {
                let mut rr = r(t);
                let k = if code.block_size() <= 5 { 2 } else { 1 };
                let logical = StateVector::random(k, &mut rr);
                let frame = ObfuscationFrame::random(k * code.block_size(), 4, t);
                let phys = encode_logical(&logical, &code, &frame).unwrap();
                for mode in [SyndromeMode::Coherent, SyndromeMode::Projective] {
                    let out = correct_and_decode(&phys, &code, &frame, mode, &mut rr).unwrap();
                    assert!(out.fidelity(&logical).unwrap() > 1.0 - 1e-10);
                }
            }
        }
    }

    #[test]
    fn perfect5_corrects_any_single_qubit_unitary() {
        let code = QecCode::perfect5();
        let id = ObfuscationFrame::identity(5);
        let mut rr = r(1);
        for q in 0..5 {
            for _ in 0..20 {
                let logical = StateVector::random(1, &mut rr);
                let mut phys = encode_logical(&logical, &code, &id).unwrap();
                phys.apply_1q(q, &haar_factor(&mut rr));
                for mode in [SyndromeMode::Coherent, SyndromeMode::Projective] {
                    let out = correct_and_decode(&phys, &code, &id, mode, &mut rr).unwrap();
                    assert!(out.fidelity(&logical).unwrap() > 1.0 - 1e-9);
                }
            }
        }
    }

    #[test]
    fn repetition_fails_on_two_flips() {
        let code = QecCode::repetition3();
        let id = ObfuscationFrame::identity(3);
        let logical = StateVector::zero(1);
        let mut phys = encode_logical(&logical, &code, &id).unwrap();
        phys.apply_1q(0, &Pauli::X.matrix());
        phys.apply_1q(2, &Pauli::X.matrix());
        let out = correct_and_decode(&phys, &code, &id, SyndromeMode::Coherent, &mut r(0)).unwrap();
        assert!(out.fidelity(&logical).unwrap() < 1e-12);
    }

    #[test]
    fn noise_examples() {
        let s = StateVector::zero(3);
        let (out, hits) = apply_local_noise(&s, &NoiseModel::iid(NoiseKind::BitFlip { p: 1.0 }), &mut r(0)).unwrap();
        assert_eq!(hits, vec![0, 1, 2]);
        assert!((out.amplitudes()[7].norm_sqr() - 1.0).abs() < 1e-15);
        let noisy = NoiseModel::fraction(NoiseKind::RandomUnitary { max_angle: 3.0 }, 0.0);
        let (out, hits) = apply_local_noise(&s, &noisy, &mut r(1)).unwrap();
        assert!(hits.is_empty());
        assert_eq!(out, s);
        assert!(NoiseModel::iid(NoiseKind::BitFlip { p: 1.5 }).validate().is_err());
    }

    #[test]
    fn random_unitary_noise_is_local() {
        let mut rr = r(2);
        let s = StateVector::random(5, &mut rr);
        let model = NoiseModel::fraction(NoiseKind::RandomUnitary { max_angle: std::f64::consts::PI }, 0.2);
        let (out, hits) = apply_local_noise(&s, &model, &mut rr).unwrap();
        assert_eq!(hits.len(), 1);
        for q in (0..5).filter(|q| *q != hits[0]) {
            let a = s.reduced_qubit(q).unwrap();
            let b = out.reduced_qubit(q).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    assert!((a[i][j] - b[i][j]).norm() < 1e-12);
                }
            }
        }
        let g = random_rotation(1.0, &mut rr);
        let prod = crate::statevec::mat2_mul(&crate::statevec::mat2_adjoint(&g), &g);
        assert!((prod[0][0] - C64::new(1.0, 0.0)).norm() < 1e-12 && prod[0][1].norm() < 1e-12);
    }

    #[test]
    fn concatenation_examples() {
        let base = QecCode::repetition3();
        assert_eq!(concatenate(&base, 1).unwrap(), base);
        assert_eq!(concatenate(&base, 2).unwrap().block_size(), 9);
        assert!(matches!(concatenate(&QecCode::perfect5(), 2), Err(Error::QubitCap { .. })));
        assert!((repetition_failure(0.1, 2) - 0.002_308_096).abs() < 1e-9);
        for p in [0.01, 0.1, 0.3, 0.45] {
            assert!(repetition_failure(p, 2) < repetition_failure(p, 1));
        }
    }

    #[test]
    fn level_two_corrects_one_flip_per_inner_block() {
        let code = concatenate(&QecCode::repetition3(), 2).unwrap();
        let id = ObfuscationFrame::identity(9);
        let logical = StateVector::random(1, &mut r(3));
        let mut phys = encode_logical(&logical, &code, &id).unwrap();
        for q in [1, 3, 8] {
            phys.apply_1q(q, &Pauli::X.matrix());
        }
        let out = correct_and_decode(&phys, &code, &id, SyndromeMode::Coherent, &mut r(0)).unwrap();
        assert!(out.fidelity(&logical).unwrap() > 1.0 - 1e-10);
        // two flips in each of two inner blocks break the outer majority
        let mut phys = encode_logical(&logical, &code, &id).unwrap();
        for q in [0, 1, 3, 4] {
            phys.apply_1q(q, &Pauli::X.matrix());
        }
        let out = correct_and_decode(&phys, &code, &id, SyndromeMode::Coherent, &mut r(0)).unwrap();
        assert!(out.fidelity(&logical).unwrap() < 1.0 - CHANGED_TOL);
    }

    #[test]
    fn descriptor_round_trip() {
        let code = concatenate(&QecCode::repetition3(), 2).unwrap();
        assert_eq!(QecCode::from_json(&code.to_json().unwrap()).unwrap(), code);
        assert!(QecCode::from_json(r#"{"format_version":1,"name":"perfect5","levels":3}"#).is_err());
        assert!(QecCode::from_json(r#"{"format_version":1,"name":"perfect5","levels":1,"x":0}"#).is_err());
    }

    #[test]
    fn rate_is_zero_for_single_errors_on_perfect5() {
        let noise = NoiseModel::fraction(NoiseKind::RandomUnitary { max_angle: std::f64::consts::PI }, 0.2);
        let est = logical_error_rate(&QecCode::perfect5(), &noise, 1000, 1).unwrap();
        assert_eq!(est.rate, 0.0);
        assert!(logical_error_rate(&QecCode::perfect5(), &noise, 999, 1).is_err());
    }

    #[test]
    fn dp_examples() {
        let model = ClassifierModel::random(3, 2, &mut r(5)).unwrap();
        let ch = NoisyClassifier::new(model.clone(), 0.1).unwrap();
        assert_eq!(qdp_epsilon_estimate(&ch, 0.0, 50, 1).unwrap().epsilon, 0.0);
        let mut last = 0.0;
        for tau in [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0] {
            let e = qdp_epsilon_estimate(&ch, tau, 200, 1).unwrap();
            assert!(e.epsilon >= last);
            assert!(e.epsilon <= 9f64.ln() + 1e-12);
            last = e.epsilon;
        }
        assert!(last > 0.0);
        // a classifier that reads a basis state deterministically has zero
        // outputs without the floor
        let parity = ClassifierModel::new(3, 1, vec![0.0; 16]).unwrap();
        let bare = NoisyClassifier::new(parity, 0.0).unwrap();
        assert!(log_ratio(bare.probabilities(&StateVector::zero(3)).unwrap(), [0.5, 0.5]).is_err());
    }

    #[test]
    fn risk_bound_examples() {
        assert_eq!(qdp_risk_bound(0.0, 1.0).unwrap(), 0.0);
        assert!((qdp_risk_bound(0.5, 1.0).unwrap() - (1.0 - (-0.5f64).exp())).abs() < 1e-15);
        assert!(qdp_risk_bound(3.0, 0.2).unwrap() <= 1.0);
        assert!(qdp_risk_bound(-1.0, 0.5).is_err());
        let ch = NoisyClassifier::new(ClassifierModel::random(3, 2, &mut r(6)).unwrap(), 0.05).unwrap();
        let c = risk_bound_check(&ch, 1.0 / 3.0, 200, 3, 2).unwrap();
        assert!(c.risk <= c.bound);
    }

    #[test]
    fn thm4_arithmetic_and_trivial_case() {
        let ch = NoisyClassifier::new(ClassifierModel::random(2, 2, &mut r(7)).unwrap(), 0.1).unwrap();
        let cfg = Thm4Config { code: QecCode::repetition3(), logical: 2, tau: 0.0, delta: 0.1, pairs: 50, curve_pairs: 20 };
        let rep = verify_thm4(&cfg, &ch, 1).unwrap();
        assert_eq!(rep.satisfied, 50);
        assert_eq!(rep.distance_bound, 0.0);
        let n0 = 5.0;
        assert!((n0 * (n0 - 1.0) * 0.01f64.powi(2) / 0.1 - 0.02).abs() < 1e-15);
    }
}
