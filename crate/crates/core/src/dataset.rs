//! Labelled ground states of the open-boundary cluster-Ising chain
//!
//! ```text
//! H(λ) = -Σ_{i=1}^{n-2} X_{i-1} Z_i X_{i+1} + λ Σ_{i=0}^{n-2} Y_i Y_{i+1}
//! ```
//!
//! which has a cluster phase for λ < 1 (label 0) and an antiferromagnetic
//! phase for λ > 1 (label 1). `H` is real in the computational basis, so
//! ground states are computed with real arithmetic.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lanczos::{self, LanczosConfig};
use crate::linalg::{C64, ZERO};
use crate::rng::{self, domain};
use crate::statevec::StateVector;

/// Largest chain handled by the ground-state solver (`2^14` amplitudes).
pub const MAX_QUBITS: usize = 14;
/// Two lowest Ritz values closer than this flag a sample as near-degenerate.
pub const DEGENERACY_GAP: f64 = 1e-6;
/// Offsets tried, in order, when a sample is flagged.
const LAMBDA_RETRY_OFFSETS: [f64; 3] = [0.0, 0.01, -0.01];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterIsing {
    pub n: usize,
    pub lambda: f64,
}

impl ClusterIsing {
    pub fn new(n: usize, lambda: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidArgument(format!("cluster-Ising chain needs n >= 3, got {n}")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("coupling must be finite and non-negative, got {lambda}")));
        }
        Ok(Self { n, lambda })
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    /// `out = H v` on real vectors.
    pub fn apply_real(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.dim());
        out.iter_mut().for_each(|x| *x = 0.0);
        for (b, &a) in v.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for i in 1..self.n - 1 {
                // -X_{i-1} Z_i X_{i+1}
                let sign = if b >> i & 1 == 1 { 1.0 } else { -1.0 };
                out[b ^ (0b101 << (i - 1))] += sign * a;
            }
            if self.lambda != 0.0 {
                for i in 0..self.n - 1 {
                    // Y_i Y_{i+1}|b> = -(-1)^{b_i + b_{i+1}} |b ^ 11<<i>
                    let parity = (b >> i & 1) ^ (b >> (i + 1) & 1);
                    let sign = if parity == 1 { 1.0 } else { -1.0 };
                    out[b ^ (0b11 << i)] += self.lambda * sign * a;
                }
            }
        }
    }

    /// `H v` for a complex state (unnormalized result).
    pub fn apply(&self, v: &StateVector) -> Result<Vec<C64>> {
        if v.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: v.dim() });
        }
        let re: Vec<f64> = v.amplitudes().iter().map(|a| a.re).collect();
        let im: Vec<f64> = v.amplitudes().iter().map(|a| a.im).collect();
        let mut hre = vec![0.0; self.dim()];
        let mut him = vec![0.0; self.dim()];
        self.apply_real(&re, &mut hre);
        self.apply_real(&im, &mut him);
        Ok(hre.into_iter().zip(him).map(|(r, i)| C64::new(r, i)).collect())
    }

    /// Ground state by matrix-free Lanczos started from a seeded random vector.
    pub fn ground_state<R: Rng + ?Sized>(&self, cfg: &LanczosConfig, rng: &mut R) -> Result<GroundState> {
        if self.n > MAX_QUBITS {
            return Err(Error::QubitCap { needed: self.n, cap: MAX_QUBITS });
        }
        let start: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        let pair = lanczos::lowest_eigenpair(self.dim(), |x, y| self.apply_real(x, y), start, cfg)?;
        let state = StateVector::normalized(pair.vector.iter().map(|&x| C64::new(x, 0.0)).collect())?;
        Ok(GroundState {
            energy: pair.value,
            state,
            residual: pair.residual,
            matvecs: pair.matvecs,
            near_degenerate: pair.ritz_gap < DEGENERACY_GAP,
        })
    }
}

#[derive(Clone, Debug)]
pub struct GroundState {
    pub energy: f64,
    pub state: StateVector,
    pub residual: f64,
    pub matvecs: usize,
    pub near_degenerate: bool,
}

/// Phase label: 0 for the cluster phase, 1 for the antiferromagnet.
pub fn phase_label(lambda: f64) -> u8 {
    u8::from(lambda > 1.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub state: StateVector,
    pub label: u8,
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub n: usize,
    pub count: usize,
    pub lambda_range: [f64; 2],
    pub margin: f64,
    pub seed: u64,
}

impl DatasetConfig {
    pub fn new(n: usize, count: usize, seed: u64) -> Self {
        Self { n, count, lambda_range: [0.0, 2.0], margin: 0.1, seed }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub n: usize,
    pub seed: u64,
    pub margin: f64,
    pub samples: Vec<LabeledSample>,
    /// Couplings of samples accepted despite a near-degenerate Ritz pair.
    pub flagged: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self.samples.iter().filter(|s| s.label == 1).count();
        [self.samples.len() - ones, ones]
    }

    /// Shuffled split; the first part holds `round(train_fraction · len)`
    /// samples.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..=1.0).contains(&train_fraction) {
            return Err(Error::InvalidArgument(format!("train fraction {train_fraction} outside [0, 1]")));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut rng::stream(seed, domain::SPLIT, 0));
        let k = (train_fraction * self.len() as f64).round() as usize;
        let part = |ids: &[usize]| Dataset {
            n: self.n,
            seed: self.seed,
            margin: self.margin,
            samples: ids.iter().map(|&i| self.samples[i].clone()).collect(),
            flagged: self.flagged.clone(),
        };
        Ok((part(&idx[..k]), part(&idx[k..])))
    }
}

/// Balanced dataset: `ceil(count/2)` cluster-phase and `floor(count/2)`
/// antiferromagnetic samples with λ uniform on the allowed part of the range,
/// in shuffled order. Sample `i` draws from its own random stream, so the
/// result does not depend on thread scheduling.
pub fn generate_dataset(cfg: &DatasetConfig, lanczos: &LanczosConfig) -> Result<Dataset> {
    if cfg.count < 2 {
        return Err(Error::InvalidArgument("a balanced dataset needs count >= 2".into()));
    }
    ClusterIsing::new(cfg.n, 0.0)?;
    if cfg.n > MAX_QUBITS {
        return Err(Error::QubitCap { needed: cfg.n, cap: MAX_QUBITS });
    }
    let [lo, hi] = cfg.lambda_range;
    let m = cfg.margin;
    let ranges = [(lo, 1.0 - m), (1.0 + m, hi)];
    if !(m >= 0.0 && lo >= 0.0 && ranges.iter().all(|(a, b)| a < b && b.is_finite())) {
        return Err(Error::InvalidArgument(format!("λ range {lo}..{hi} with margin {m} leaves an empty class")));
    }

    let mut labels: Vec<u8> = (0..cfg.count).map(|i| u8::from(i >= cfg.count.div_ceil(2))).collect();
    labels.shuffle(&mut rng::stream(cfg.seed, domain::DATASET, 1 << 39));

    let results: Vec<Result<(LabeledSample, bool)>> = labels
        .par_iter()
        .enumerate()
        .map(|(i, &label)| {
            let mut r = rng::stream(cfg.seed, domain::DATASET, i as u64);
            let (a, b) = ranges[label as usize];
            let lambda = r.random_range(a..b);
            sample_at(cfg.n, lambda, (a, b), lanczos, &mut r)
        })
        .collect();

    let mut samples = Vec::with_capacity(cfg.count);
    let mut flagged = Vec::new();
    for res in results {
        let (s, near_degenerate) = res?;
        if near_degenerate {
            flagged.push(s.lambda);
        }
        samples.push(s);
    }
    Ok(Dataset { n: cfg.n, seed: cfg.seed, margin: cfg.margin, samples, flagged })
}

/// Solves at `lambda`; if the spectrum looks degenerate, retries at nearby
/// couplings inside `allowed` and keeps the last attempt.
fn sample_at<R: Rng + ?Sized>(
    n: usize,
    lambda: f64,
    allowed: (f64, f64),
    lanczos: &LanczosConfig,
    rng: &mut R,
) -> Result<(LabeledSample, bool)> {
    let mut last = None;
    for offset in LAMBDA_RETRY_OFFSETS {
        let l = lambda + offset;
        if l < allowed.0 || l >= allowed.1 {
            continue;
        }
        let gs = ClusterIsing::new(n, l)?.ground_state(lanczos, rng)?;
        let done = !gs.near_degenerate;
        last = Some((LabeledSample { state: gs.state, label: phase_label(l), lambda: l }, gs.near_degenerate));
        if done {
            break;
        }
    }
    Ok(last.expect("the unperturbed coupling is always allowed"))
}

// ---------------------------------------------------------------------------
// Binary container

pub const MAGIC: [u8; 4] = *b"QADS";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 8 + 8;
/// Normalization slack accepted when decoding stored states.
const DECODE_NORM_TOL: f64 = 1e-9;

/// Little-endian layout: magic, version u32, n u32, count u64, seed u64,
/// margin f64, then per sample λ f64, label u8, `2^n` pairs of (re, im) f64.
pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let dim = 1usize << ds.n;
    let mut out = Vec::with_capacity(HEADER_LEN + ds.len() * record_len(dim));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(ds.n as u32).to_le_bytes());
    out.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    out.extend_from_slice(&ds.seed.to_le_bytes());
    out.extend_from_slice(&ds.margin.to_le_bytes());
    for s in &ds.samples {
        out.extend_from_slice(&s.lambda.to_le_bytes());
        out.push(s.label);
        for a in s.state.amplitudes() {
            out.extend_from_slice(&a.re.to_le_bytes());
            out.extend_from_slice(&a.im.to_le_bytes());
        }
    }
    out
}

fn record_len(dim: usize) -> usize {
    8 + 1 + 16 * dim
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos.checked_add(N).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("dataset file is truncated".into()))?;
        let out = self.bytes[self.pos..end].try_into().expect("length checked");
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take::<4>()? != MAGIC {
        return Err(Error::Format("not a dataset file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported dataset format version {version}")));
    }
    let n = r.u32()? as usize;
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::Format(format!("qubit count {n} outside 1..={MAX_QUBITS}")));
    }
    let count = r.u64()?;
    let seed = r.u64()?;
    let margin = r.f64()?;
    if !margin.is_finite() {
        return Err(Error::Format("margin is not finite".into()));
    }
    let dim = 1usize << n;
    let expected = usize::try_from(count)
        .ok()
        .and_then(|c| c.checked_mul(record_len(dim)))
        .and_then(|b| b.checked_add(HEADER_LEN));
    if expected != Some(bytes.len()) {
        return Err(Error::Format(format!(
            "file holds {} bytes but the header declares {count} records of {} bytes",
            bytes.len(),
            record_len(dim)
        )));
    }
    let mut samples = Vec::with_capacity(count as usize);
    for k in 0..count {
        let lambda = r.f64()?;
        let label = r.take::<1>()?[0];
        if !lambda.is_finite() || label > 1 {
            return Err(Error::Format(format!("record {k}: bad coupling {lambda} or label {label}")));
        }
        let mut amps = vec![ZERO; dim];
        for a in amps.iter_mut() {
            *a = C64::new(r.f64()?, r.f64()?);
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if !((norm - 1.0).abs() <= DECODE_NORM_TOL) {
            return Err(Error::Format(format!("record {k}: state norm² is {norm}")));
        }
        // stored amplitudes are kept bit-exact unless they need renormalizing
        let state = StateVector::from_amplitudes(amps.clone())
            .or_else(|_| StateVector::normalized(amps))
            .map_err(|e| Error::Format(format!("record {k}: {e}")))?;
        samples.push(LabeledSample { state, label, lambda });
    }
    Ok(Dataset { n, seed, margin, samples, flagged: Vec::new() })
}

/// JSON sidecar describing a dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMetadata {
    pub format_version: u32,
    pub n: usize,
    pub count: usize,
    pub seed: u64,
    pub margin: f64,
    pub lambda_range: [f64; 2],
    pub class_counts: [usize; 2],
    pub near_degenerate_lambdas: Vec<f64>,
    pub rng: String,
}

impl DatasetMetadata {
    pub fn describe(ds: &Dataset, cfg: &DatasetConfig) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            n: ds.n,
            count: ds.len(),
            seed: ds.seed,
            margin: ds.margin,
            lambda_range: cfg.lambda_range,
            class_counts: ds.class_counts(),
            near_degenerate_lambdas: ds.flagged.clone(),
            rng: rng::RNG_ALGORITHM.to_string(),
        }
    }
}
