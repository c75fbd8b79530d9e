//! Dense statevector engine.
//!
//! Qubit ordering is little-endian throughout the crate: qubit `q` is bit `q`
//! of the amplitude index, so `|q_{n-1} ... q_1 q_0>` has index
//! `sum_q q_q 2^q`. Ancilla and extra registers are appended as the *high*
//! qubits.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, C64, I, ONE, ZERO};

/// Tolerance on the norm of states accepted from callers.
pub const NORM_TOL: f64 = 1e-10;
/// Unitarity deficit above which a gate is rejected.
pub const UNITARITY_TOL: f64 = 1e-9;

pub type Mat2 = [[C64; 2]; 2];
pub type Mat4 = [[C64; 4]; 4];

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<C64>,
}

impl StateVector {
    /// `|0...0>`.
    pub fn zero(n_qubits: usize) -> Self {
        let mut amps = vec![ZERO; 1 << n_qubits];
        amps[0] = ONE;
        Self { n_qubits, amps }
    }

    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(Error::InvalidArgument(format!("basis index {index} >= 2^{n_qubits}")));
        }
        let mut amps = vec![ZERO; dim];
        amps[index] = ONE;
        Ok(Self { n_qubits, amps })
    }

    /// Wraps amplitudes that must already be normalized.
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        let n_qubits = qubits_for_dim(amps.len())?;
        let deficit = (linalg::norm_sqr(&amps) - 1.0).abs();
        if !(deficit <= NORM_TOL) {
            return Err(Error::NotNormalized { deficit });
        }
        Ok(Self { n_qubits, amps })
    }

    /// Wraps an arbitrary (possibly unnormalized) vector for internal
    /// kernels such as the adjoint sweep of gradient evaluation.
    pub(crate) fn from_raw(amps: Vec<C64>) -> Self {
        let n_qubits = amps.len().trailing_zeros() as usize;
        debug_assert_eq!(1usize << n_qubits, amps.len());
        Self { n_qubits, amps }
    }

    /// Normalizes `amps`; fails on a zero (or non-finite) vector.
    pub fn normalized(mut amps: Vec<C64>) -> Result<Self> {
        let n_qubits = qubits_for_dim(amps.len())?;
        let norm = linalg::norm_sqr(&amps).sqrt();
        if !(norm > 1e-300 && norm.is_finite()) {
            return Err(Error::Numerical("cannot normalize a zero or non-finite vector".into()));
        }
        amps.iter_mut().for_each(|a| *a /= norm);
        Ok(Self { n_qubits, amps })
    }

    /// Haar-random pure state.
    pub fn random<R: Rng + ?Sized>(n_qubits: usize, rng: &mut R) -> Self {
        let amps = (0..1usize << n_qubits)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        Self::normalized(amps).expect("gaussian vector is nonzero")
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        linalg::norm_sqr(&self.amps)
    }

    pub fn inner(&self, other: &Self) -> Result<C64> {
        self.check_dim(other.dim())?;
        Ok(linalg::inner(&self.amps, &other.amps))
    }

    /// `self ⊗ |0>^m`, the new qubits placed above the existing ones.
    pub fn with_zero_ancillas(&self, m: usize) -> Self {
        let mut amps = vec![ZERO; self.dim() << m];
        amps[..self.dim()].copy_from_slice(&self.amps);
        Self { n_qubits: self.n_qubits + m, amps }
    }

    /// `high ⊗ self`: `self` keeps the low qubits.
    pub fn tensor(&self, high: &Self) -> Self {
        let mut amps = Vec::with_capacity(self.dim() * high.dim());
        for &h in &high.amps {
            amps.extend(self.amps.iter().map(|&l| l * h));
        }
        Self { n_qubits: self.n_qubits + high.n_qubits, amps }
    }

    pub fn apply_gate(&mut self, gate: &Gate) -> Result<()> {
        gate.validate(self.n_qubits)?;
        match gate {
            Gate::Single { target, matrix } => self.apply_1q(*target, matrix),
            Gate::Two { qubits, matrix } => self.apply_2q(qubits[0], qubits[1], matrix),
        }
        Ok(())
    }

    /// Gate application without validation; `q < n` is the caller's job.
    pub(crate) fn apply_1q(&mut self, q: usize, m: &Mat2) {
        let stride = 1usize << q;
        for base in (0..self.amps.len()).step_by(stride << 1) {
            for i in base..base + stride {
                let a0 = self.amps[i];
                let a1 = self.amps[i + stride];
                self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[i + stride] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    /// Local basis index of the 4x4 matrix is `bit(q0) + 2 bit(q1)`.
    pub(crate) fn apply_2q(&mut self, q0: usize, q1: usize, m: &Mat4) {
        let m0 = 1usize << q0;
        let m1 = 1usize << q1;
        for i in 0..self.amps.len() {
            if i & (m0 | m1) != 0 {
                continue;
            }
            let idx = [i, i | m0, i | m1, i | m0 | m1];
            let v = idx.map(|k| self.amps[k]);
            for (r, &k) in idx.iter().enumerate() {
                self.amps[k] = m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2] + m[r][3] * v[3];
            }
        }
    }

    pub(crate) fn apply_cnot(&mut self, control: usize, target: usize) {
        let c = 1usize << control;
        let t = 1usize << target;
        for i in 0..self.amps.len() {
            if i & c != 0 && i & t == 0 {
                self.amps.swap(i, i | t);
            }
        }
    }

    /// `exp(-i theta P)` for a single-qubit Pauli `P`.
    pub(crate) fn apply_rotation(&mut self, q: usize, axis: Pauli, theta: f64) {
        if theta == 0.0 {
            return;
        }
        let (c, s) = (theta.cos(), theta.sin());
        let stride = 1usize << q;
        match axis {
            Pauli::I => {
                let ph = C64::new(c, -s);
                self.amps.iter_mut().for_each(|a| *a *= ph);
            }
            Pauli::Z => {
                let (lo, hi) = (C64::new(c, -s), C64::new(c, s));
                for (i, a) in self.amps.iter_mut().enumerate() {
                    *a *= if i & stride == 0 { lo } else { hi };
                }
            }
            Pauli::X => {
                // [[c, -is], [-is, c]]
                for base in (0..self.amps.len()).step_by(stride << 1) {
                    for i in base..base + stride {
                        let (a0, a1) = (self.amps[i], self.amps[i + stride]);
                        self.amps[i] = C64::new(c * a0.re + s * a1.im, c * a0.im - s * a1.re);
                        self.amps[i + stride] = C64::new(c * a1.re + s * a0.im, c * a1.im - s * a0.re);
                    }
                }
            }
            Pauli::Y => {
                // [[c, -s], [s, c]]
                for base in (0..self.amps.len()).step_by(stride << 1) {
                    for i in base..base + stride {
                        let (a0, a1) = (self.amps[i], self.amps[i + stride]);
                        self.amps[i] = a0 * c - a1 * s;
                        self.amps[i + stride] = a0 * s + a1 * c;
                    }
                }
            }
        }
    }

    /// Applies a dense unitary acting on `qubits` (its local basis index is
    /// `sum_k bit(qubits[k]) 2^k`).
    pub fn apply_unitary(&mut self, qubits: &[usize], u: &CMatrix) -> Result<()> {
        let k = qubits.len();
        if u.rows() != 1 << k || !u.is_square() {
            return Err(Error::DimensionMismatch { expected: 1 << k, found: u.rows() });
        }
        for (i, &q) in qubits.iter().enumerate() {
            if q >= self.n_qubits {
                return Err(Error::QubitOutOfRange { qubit: q, n_qubits: self.n_qubits });
            }
            if qubits[..i].contains(&q) {
                return Err(Error::SameQubit(q));
            }
        }
        self.apply_unitary_unchecked(qubits, u);
        Ok(())
    }

    pub(crate) fn apply_unitary_unchecked(&mut self, qubits: &[usize], u: &CMatrix) {
        let k = qubits.len();
        let local = 1usize << k;
        // whole-register fast path with the identity qubit order
        if k == self.n_qubits && qubits.iter().enumerate().all(|(i, &q)| i == q) {
            self.amps = u.matvec(&self.amps);
            return;
        }
        let mask: usize = qubits.iter().map(|&q| 1usize << q).sum();
        let offsets: Vec<usize> = (0..local)
            .map(|l| qubits.iter().enumerate().filter(|(b, _)| l >> b & 1 == 1).map(|(_, &q)| 1usize << q).sum())
            .collect();
        let mut buf = vec![ZERO; local];
        for base in 0..self.amps.len() {
            if base & mask != 0 {
                continue;
            }
            for (b, &off) in buf.iter_mut().zip(&offsets) {
                *b = self.amps[base | off];
            }
            for (r, &off) in offsets.iter().enumerate() {
                let row = u.row(r);
                self.amps[base | off] = row.iter().zip(&buf).fold(ZERO, |acc, (&x, &y)| acc + x * y);
            }
        }
    }

    /// In-place `P|psi>` for a Pauli string (phase and sign included).
    pub fn apply_pauli(&mut self, p: &PauliString) -> Result<()> {
        self.check_qubits(p.len())?;
        let out = p.apply_to(&self.amps);
        self.amps = out;
        Ok(())
    }

    pub fn expectation(&self, obs: &Observable) -> Result<f64> {
        let value = match obs {
            Observable::Pauli(p) => {
                self.check_qubits(p.len())?;
                p.expectation(&self.amps)
            }
            Observable::PauliSum(terms) => {
                let mut acc = 0.0;
                for (coef, p) in terms {
                    self.check_qubits(p.len())?;
                    acc += coef * p.expectation(&self.amps);
                }
                acc
            }
            Observable::Dense(m) => {
                self.check_dim(m.rows())?;
                let z = linalg::inner(&self.amps, &m.matvec(&self.amps));
                if z.im.abs() > 1e-10 {
                    return Err(Error::Numerical(format!("expectation has imaginary part {:.3e}", z.im)));
                }
                z.re
            }
        };
        Ok(value)
    }

    /// Computational-basis probabilities `(p0, p1)` of one qubit.
    pub fn ancilla_probs(&self, qubit: usize) -> Result<(f64, f64)> {
        if qubit >= self.n_qubits {
            return Err(Error::QubitOutOfRange { qubit, n_qubits: self.n_qubits });
        }
        let mask = 1usize << qubit;
        let mut p1 = 0.0;
        let mut total = 0.0;
        for (i, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            total += p;
            if i & mask != 0 {
                p1 += p;
            }
        }
        let p1 = (p1 / total).clamp(0.0, 1.0);
        Ok((1.0 - p1, p1))
    }

    /// Reduced density matrix of one qubit.
    pub fn reduced_qubit(&self, qubit: usize) -> Result<Mat2> {
        if qubit >= self.n_qubits {
            return Err(Error::QubitOutOfRange { qubit, n_qubits: self.n_qubits });
        }
        let mask = 1usize << qubit;
        let mut rho = [[ZERO; 2]; 2];
        for i in (0..self.amps.len()).filter(|i| i & mask == 0) {
            let a0 = self.amps[i];
            let a1 = self.amps[i | mask];
            rho[0][0] += a0 * a0.conj();
            rho[0][1] += a0 * a1.conj();
            rho[1][0] += a1 * a0.conj();
            rho[1][1] += a1 * a1.conj();
        }
        Ok(rho)
    }

    /// Reduced density matrix of a set of qubits (local index order as in
    /// [`apply_unitary`](Self::apply_unitary)).
    pub fn reduced_density(&self, qubits: &[usize]) -> Result<CMatrix> {
        for (i, &q) in qubits.iter().enumerate() {
            if q >= self.n_qubits {
                return Err(Error::QubitOutOfRange { qubit: q, n_qubits: self.n_qubits });
            }
            if qubits[..i].contains(&q) {
                return Err(Error::SameQubit(q));
            }
        }
        let local = 1usize << qubits.len();
        let mask: usize = qubits.iter().map(|&q| 1usize << q).sum();
        let offsets: Vec<usize> = (0..local)
            .map(|l| qubits.iter().enumerate().filter(|(b, _)| l >> b & 1 == 1).map(|(_, &q)| 1usize << q).sum())
            .collect();
        let mut rho = CMatrix::zeros(local, local);
        for base in (0..self.amps.len()).filter(|i| i & mask == 0) {
            for (r, &or) in offsets.iter().enumerate() {
                let ar = self.amps[base | or];
                if ar == ZERO {
                    continue;
                }
                for (c, &oc) in offsets.iter().enumerate() {
                    rho[(r, c)] += ar * self.amps[base | oc].conj();
                }
            }
        }
        Ok(rho)
    }

    /// Projects qubit `q` onto `|value>`; returns the branch probability and
    /// the renormalized post-measurement state (`None` if the branch is empty).
    pub fn project_qubit(&self, qubit: usize, value: bool) -> Result<(f64, Option<Self>)> {
        let (p0, p1) = self.ancilla_probs(qubit)?;
        let p = if value { p1 } else { p0 };
        if p < 1e-300 {
            return Ok((p, None));
        }
        let mask = 1usize << qubit;
        let amps = self
            .amps
            .iter()
            .enumerate()
            .map(|(i, &a)| if (i & mask != 0) == value { a } else { ZERO })
            .collect();
        Ok((p, Some(Self::normalized(amps)?)))
    }

    /// Relabels qubits: old qubit `q` becomes qubit `perm[q]`.
    pub fn permute_qubits(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n_qubits {
            return Err(Error::DimensionMismatch { expected: self.n_qubits, found: perm.len() });
        }
        let mut seen = vec![false; perm.len()];
        for &p in perm {
            if p >= perm.len() || seen[p] {
                return Err(Error::InvalidArgument(format!("{perm:?} is not a permutation")));
            }
            seen[p] = true;
        }
        let mut amps = vec![ZERO; self.dim()];
        for (i, &a) in self.amps.iter().enumerate() {
            let j: usize = perm.iter().enumerate().filter(|(q, _)| i >> q & 1 == 1).map(|(_, &p)| 1usize << p).sum();
            amps[j] = a;
        }
        Ok(Self { n_qubits: self.n_qubits, amps })
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: dim });
        }
        Ok(())
    }

    fn check_qubits(&self, n: usize) -> Result<()> {
        if n != self.n_qubits {
            return Err(Error::DimensionMismatch { expected: self.n_qubits, found: n });
        }
        Ok(())
    }
}

/// `|<a|b>|^2`.
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr().min(1.0))
}

pub(crate) fn qubits_for_dim(dim: usize) -> Result<usize> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(Error::InvalidArgument(format!("dimension {dim} is not a power of two")));
    }
    Ok(dim.trailing_zeros() as usize)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> Mat2 {
        match self {
            Pauli::I => [[ONE, ZERO], [ZERO, ONE]],
            Pauli::X => [[ZERO, ONE], [ONE, ZERO]],
            Pauli::Y => [[ZERO, -I], [I, ZERO]],
            Pauli::Z => [[ONE, ZERO], [ZERO, -ONE]],
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }
}

/// `exp(-i theta P)`.
pub fn rotation_matrix(axis: Pauli, theta: f64) -> Mat2 {
    let (s, c) = theta.sin_cos();
    let c = C64::new(c, 0.0);
    match axis {
        Pauli::I => [[C64::from_polar(1.0, -theta), ZERO], [ZERO, C64::from_polar(1.0, -theta)]],
        Pauli::X => [[c, C64::new(0.0, -s)], [C64::new(0.0, -s), c]],
        Pauli::Y => [[c, C64::new(-s, 0.0)], [C64::new(s, 0.0), c]],
        Pauli::Z => [[C64::from_polar(1.0, -theta), ZERO], [ZERO, C64::from_polar(1.0, theta)]],
    }
}

pub fn mat2_adjoint(m: &Mat2) -> Mat2 {
    [[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]]
}

pub fn mat2_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[ZERO; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            out[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
        }
    }
    out
}

pub fn mat2_to_cmatrix(m: &Mat2) -> CMatrix {
    CMatrix::from_rows(&[&m[0], &m[1]])
}

#[derive(Clone, Debug, PartialEq)]
pub enum Gate {
    Single { target: usize, matrix: Mat2 },
    /// Local basis index is `bit(qubits[0]) + 2 bit(qubits[1])`.
    Two { qubits: [usize; 2], matrix: Mat4 },
}

impl Gate {
    pub fn single(target: usize, matrix: Mat2) -> Self {
        Gate::Single { target, matrix }
    }

    pub fn x(q: usize) -> Self {
        Self::single(q, Pauli::X.matrix())
    }

    pub fn y(q: usize) -> Self {
        Self::single(q, Pauli::Y.matrix())
    }

    pub fn z(q: usize) -> Self {
        Self::single(q, Pauli::Z.matrix())
    }

    pub fn h(q: usize) -> Self {
        let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self::single(q, [[s, s], [s, -s]])
    }

    /// `exp(-i theta P)` on qubit `q`.
    pub fn rotation(q: usize, axis: Pauli, theta: f64) -> Self {
        Self::single(q, rotation_matrix(axis, theta))
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        let mut m = [[ZERO; 4]; 4];
        // local index = bit(control) + 2 bit(target)
        m[0][0] = ONE;
        m[2][2] = ONE;
        m[3][1] = ONE;
        m[1][3] = ONE;
        Gate::Two { qubits: [control, target], matrix: m }
    }

    pub fn adjoint(&self) -> Self {
        match self {
            Gate::Single { target, matrix } => Gate::Single { target: *target, matrix: mat2_adjoint(matrix) },
            Gate::Two { qubits, matrix } => {
                let mut m = [[ZERO; 4]; 4];
                for r in 0..4 {
                    for c in 0..4 {
                        m[r][c] = matrix[c][r].conj();
                    }
                }
                Gate::Two { qubits: *qubits, matrix: m }
            }
        }
    }

    pub fn to_cmatrix(&self) -> CMatrix {
        match self {
            Gate::Single { matrix, .. } => mat2_to_cmatrix(matrix),
            Gate::Two { matrix, .. } => CMatrix::from_fn(4, 4, |r, c| matrix[r][c]),
        }
    }

    fn validate(&self, n_qubits: usize) -> Result<()> {
        let check = |q: usize| {
            if q >= n_qubits {
                Err(Error::QubitOutOfRange { qubit: q, n_qubits })
            } else {
                Ok(())
            }
        };
        match self {
            Gate::Single { target, .. } => check(*target)?,
            Gate::Two { qubits, .. } => {
                check(qubits[0])?;
                check(qubits[1])?;
                if qubits[0] == qubits[1] {
                    return Err(Error::SameQubit(qubits[0]));
                }
            }
        }
        let deficit = self.to_cmatrix().unitarity_deficit();
        if deficit > UNITARITY_TOL {
            return Err(Error::NonUnitary { deficit });
        }
        Ok(())
    }
}

/// Tensor product of single-qubit Paulis with an overall sign.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliString {
    paulis: Vec<Pauli>,
    negative: bool,
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        Self { paulis: vec![Pauli::I; n], negative: false }
    }

    pub fn new(paulis: Vec<Pauli>) -> Self {
        Self { paulis, negative: false }
    }

    /// Single Pauli `p` on qubit `q` of `n`.
    pub fn single(n: usize, q: usize, p: Pauli) -> Self {
        let mut s = Self::identity(n);
        s.paulis[q] = p;
        s
    }

    /// Parses e.g. `"XZZXI"` or `"-ZZI"`. Character `k` is qubit `k`.
    pub fn parse(s: &str) -> Result<Self> {
        let (negative, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s.strip_prefix('+').unwrap_or(s)),
        };
        let paulis = body
            .chars()
            .map(|c| Pauli::from_char(c).ok_or_else(|| Error::Format(format!("bad Pauli letter {c:?}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { paulis, negative })
    }

    pub fn negated(mut self) -> Self {
        self.negative = !self.negative;
        self
    }

    pub fn len(&self) -> usize {
        self.paulis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paulis.is_empty()
    }

    pub fn paulis(&self) -> &[Pauli] {
        &self.paulis
    }

    pub fn is_negative(&self) -> bool {
        self.negative
    }

    pub fn weight(&self) -> usize {
        self.paulis.iter().filter(|&&p| p != Pauli::I).count()
    }

    fn masks(&self) -> (usize, usize, usize) {
        let mut x = 0;
        let mut z = 0;
        let mut ny = 0;
        for (q, p) in self.paulis.iter().enumerate() {
            match p {
                Pauli::I => {}
                Pauli::X => x |= 1 << q,
                Pauli::Z => z |= 1 << q,
                Pauli::Y => {
                    x |= 1 << q;
                    z |= 1 << q;
                    ny += 1;
                }
            }
        }
        (x, z, ny)
    }

    /// Global phase `i^{#Y}` times the sign.
    fn phase(&self, ny: usize) -> C64 {
        let base = [ONE, I, -ONE, -I][ny % 4];
        if self.negative {
            -base
        } else {
            base
        }
    }

    /// `P|v>` without materializing `P`: `P|i> = phase (-1)^{|i & z|} |i ^ x>`.
    pub fn apply_to(&self, v: &[C64]) -> Vec<C64> {
        let (x, z, ny) = self.masks();
        let phase = self.phase(ny);
        let mut out = vec![ZERO; v.len()];
        for (i, &a) in v.iter().enumerate() {
            let s = if (i & z).count_ones() % 2 == 1 { -phase } else { phase };
            out[i ^ x] = s * a;
        }
        out
    }

    /// `out += coef P|v>`.
    pub fn apply_add(&self, coef: f64, v: &[C64], out: &mut [C64]) {
        let (x, z, ny) = self.masks();
        let phase = self.phase(ny) * coef;
        for (i, &a) in v.iter().enumerate() {
            let s = if (i & z).count_ones() % 2 == 1 { -phase } else { phase };
            out[i ^ x] += s * a;
        }
    }

    /// Real part of `<v|P|v>` (the imaginary part vanishes for Hermitian `P`).
    pub fn expectation(&self, v: &[C64]) -> f64 {
        let (x, z, ny) = self.masks();
        let phase = self.phase(ny);
        let mut acc = ZERO;
        for (i, &a) in v.iter().enumerate() {
            let s = if (i & z).count_ones() % 2 == 1 { -phase } else { phase };
            acc += v[i ^ x].conj() * s * a;
        }
        acc.re
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::identity(1);
        for p in &self.paulis {
            m = mat2_to_cmatrix(&p.matrix()).kron(&m);
        }
        if self.negative {
            m = m.scale(-ONE);
        }
        m
    }

    /// Whether `self` and `other` commute.
    pub fn commutes_with(&self, other: &Self) -> bool {
        let anti = self
            .paulis
            .iter()
            .zip(&other.paulis)
            .filter(|(a, b)| **a != Pauli::I && **b != Pauli::I && a != b)
            .count();
        anti % 2 == 0
    }
}

impl std::fmt::Display for PauliString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.negative {
            f.write_str("-")?;
        }
        for p in &self.paulis {
            f.write_str(match p {
                Pauli::I => "I",
                Pauli::X => "X",
                Pauli::Y => "Y",
                Pauli::Z => "Z",
            })?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub enum Observable {
    Pauli(PauliString),
    PauliSum(Vec<(f64, PauliString)>),
    Dense(CMatrix),
}

impl Observable {
    pub fn dense(m: CMatrix) -> Result<Self> {
        let deficit = m.hermiticity_deficit();
        if deficit > 1e-12 {
            return Err(Error::NonHermitian { deficit });
        }
        Ok(Observable::Dense(m))
    }

    /// `|value><value|` on `qubit`, as `(I ± Z)/2`.
    pub fn projector(n: usize, qubit: usize, value: bool) -> Self {
        let sign = if value { -0.5 } else { 0.5 };
        Observable::PauliSum(vec![(0.5, PauliString::identity(n)), (sign, PauliString::single(n, qubit, Pauli::Z))])
    }

    pub fn n_qubits(&self) -> usize {
        match self {
            Observable::Pauli(p) => p.len(),
            Observable::PauliSum(terms) => terms.first().map_or(0, |(_, p)| p.len()),
            Observable::Dense(m) => m.rows().trailing_zeros() as usize,
        }
    }

    /// `O|v>` (unnormalized).
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        match self {
            Observable::Pauli(p) => p.apply_to(v),
            Observable::PauliSum(terms) => {
                let mut out = vec![ZERO; v.len()];
                for (coef, p) in terms {
                    p.apply_add(*coef, v, &mut out);
                }
                out
            }
            Observable::Dense(m) => m.matvec(v),
        }
    }

    pub fn to_dense(&self) -> CMatrix {
        match self {
            Observable::Pauli(p) => p.to_dense(),
            Observable::PauliSum(terms) => {
                let d = 1usize << self.n_qubits();
                terms.iter().fold(CMatrix::zeros(d, d), |acc, (c, p)| &acc + &p.to_dense().scale(C64::new(*c, 0.0)))
            }
            Observable::Dense(m) => m.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn close(a: C64, b: C64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn x_flips_qubit_zero() {
        let mut s = StateVector::zero(1);
        s.apply_gate(&Gate::x(0)).unwrap();
        assert!(close(s.amplitudes()[1], ONE));
    }

    #[test]
    fn hadamard_makes_plus() {
        let mut s = StateVector::zero(1);
        s.apply_gate(&Gate::h(0)).unwrap();
        for a in s.amplitudes() {
            assert!(close(*a, C64::new(FRAC_1_SQRT_2, 0.0)));
        }
    }

    #[test]
    fn cnot_truth_table() {
        // control qubit 0 set, target clear: index 0b01
        let mut s = StateVector::basis(2, 0b01).unwrap();
        s.apply_gate(&Gate::cnot(0, 1)).unwrap();
        assert!(close(s.amplitudes()[0b11], ONE));
        let mut s = StateVector::basis(2, 0b10).unwrap();
        s.apply_gate(&Gate::cnot(0, 1)).unwrap();
        assert!(close(s.amplitudes()[0b10], ONE));
    }

    #[test]
    fn gate_errors() {
        let mut s = StateVector::zero(2);
        assert!(matches!(s.apply_gate(&Gate::x(2)), Err(Error::QubitOutOfRange { .. })));
        assert!(matches!(s.apply_gate(&Gate::cnot(1, 1)), Err(Error::SameQubit(1))));
        let bad = Gate::single(0, [[ONE, ONE], [ZERO, ONE]]);
        assert!(matches!(s.apply_gate(&bad), Err(Error::NonUnitary { .. })));
    }

    #[test]
    fn z_expectations() {
        let z = Observable::Pauli(PauliString::single(1, 0, Pauli::Z));
        assert!((StateVector::zero(1).expectation(&z).unwrap() - 1.0).abs() < 1e-12);
        let mut plus = StateVector::zero(1);
        plus.apply_gate(&Gate::h(0)).unwrap();
        assert!(plus.expectation(&z).unwrap().abs() < 1e-12);
        assert!(matches!(StateVector::zero(2).expectation(&z), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn ancilla_probabilities() {
        assert_eq!(StateVector::zero(1).ancilla_probs(0).unwrap(), (1.0, 0.0));
        let mut plus = StateVector::zero(1);
        plus.apply_gate(&Gate::h(0)).unwrap();
        let (p0, p1) = plus.ancilla_probs(0).unwrap();
        assert!((p0 - 0.5).abs() < 1e-12 && (p1 - 0.5).abs() < 1e-12);
        let t = PI / 8.0;
        let s = StateVector::from_amplitudes(vec![C64::new(t.cos(), 0.0), C64::new(t.sin(), 0.0)]).unwrap();
        let (p0, p1) = s.ancilla_probs(0).unwrap();
        assert!((p0 - 0.853_553_390_593_273_8).abs() < 1e-12);
        assert!((p1 - 0.146_446_609_406_726_24).abs() < 1e-12);
        assert!(s.ancilla_probs(1).is_err());
    }

    #[test]
    fn fidelities() {
        let zero = StateVector::zero(1);
        let one = StateVector::basis(1, 1).unwrap();
        let mut plus = zero.clone();
        plus.apply_gate(&Gate::h(0)).unwrap();
        assert!((fidelity(&zero, &zero).unwrap() - 1.0).abs() < 1e-12);
        assert!(fidelity(&zero, &one).unwrap().abs() < 1e-12);
        assert!((fidelity(&zero, &plus).unwrap() - 0.5).abs() < 1e-12);
        assert!(fidelity(&zero, &StateVector::zero(2)).is_err());
    }

    #[test]
    fn rotation_convention_is_full_angle() {
        // exp(-i pi/2 X) = -iX
        let mut s = StateVector::zero(1);
        s.apply_rotation(0, Pauli::X, PI / 2.0);
        assert!(close(s.amplitudes()[1], -I));
    }

    #[test]
    fn rotation_kernels_match_dense_matrices() {
        let mut r = crate::rng::stream(3, 0, 0);
        let s = StateVector::random(3, &mut r);
        for axis in [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z] {
            for q in 0..3 {
                let mut fast = s.clone();
                let mut dense = s.clone();
                fast.apply_rotation(q, axis, 0.37);
                dense.apply_1q(q, &rotation_matrix(axis, 0.37));
                assert!(fast.amplitudes().iter().zip(dense.amplitudes()).all(|(a, b)| (a - b).norm() < 1e-14), "{axis:?} {q}");
            }
        }
    }

    #[test]
    fn permutation_moves_excitation() {
        let s = StateVector::basis(3, 0b001).unwrap();
        let p = s.permute_qubits(&[2, 0, 1]).unwrap();
        assert!(close(p.amplitudes()[0b100], ONE));
        assert!(s.permute_qubits(&[0, 0, 1]).is_err());
    }

    #[test]
    fn reduced_density_matches_single_qubit_path() {
        let mut r = rng::stream(3, 0, 0);
        let s = StateVector::random(3, &mut r);
        let a = s.reduced_qubit(1).unwrap();
        let b = s.reduced_density(&[1]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!(close(a[i][j], b[(i, j)]));
            }
        }
    }

    fn arb_pauli() -> impl Strategy<Value = Pauli> {
        prop_oneof![Just(Pauli::I), Just(Pauli::X), Just(Pauli::Y), Just(Pauli::Z)]
    }

    fn random_gate(n: usize, choice: u8, a: usize, b: usize, theta: f64) -> Gate {
        let a = a % n;
        let b = b % n;
        match choice % 5 {
            0 => Gate::h(a),
            1 => Gate::rotation(a, Pauli::X, theta),
            2 => Gate::rotation(a, Pauli::Y, theta),
            3 => Gate::rotation(a, Pauli::Z, theta),
            _ if a != b => Gate::cnot(a, b),
            _ => Gate::x(a),
        }
    }

    proptest! {
        #[test]
        fn gates_preserve_norm_and_invert(
            seed in 0u64..1000,
            ops in proptest::collection::vec((0u8..5, 0usize..6, 0usize..6, -3.0f64..3.0), 1..40),
        ) {
            let n = 4;
            let mut r = rng::stream(seed, 0, 0);
            let start = StateVector::random(n, &mut r);
            let mut s = start.clone();
            let gates: Vec<Gate> = ops.iter().map(|&(c, a, b, t)| random_gate(n, c, a, b, t)).collect();
            for g in &gates {
                s.apply_gate(g).unwrap();
            }
            prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-9);
            for g in gates.iter().rev() {
                s.apply_gate(&g.adjoint()).unwrap();
            }
            for (x, y) in s.amplitudes().iter().zip(start.amplitudes()) {
                prop_assert!((x - y).norm() < 1e-9);
            }
        }

        #[test]
        fn sparse_pauli_expectation_matches_dense(
            seed in 0u64..1000,
            letters in proptest::collection::vec(arb_pauli(), 1..=6),
            negative in any::<bool>(),
        ) {
            let n = letters.len();
            let mut p = PauliString::new(letters);
            if negative {
                p = p.negated();
            }
            let mut r = rng::stream(seed, 0, 1);
            let s = StateVector::random(n, &mut r);
            let sparse = s.expectation(&Observable::Pauli(p.clone())).unwrap();
            let dense = s.expectation(&Observable::dense(p.to_dense()).unwrap()).unwrap();
            prop_assert!((sparse - dense).abs() < 1e-10);
        }
    }
}
