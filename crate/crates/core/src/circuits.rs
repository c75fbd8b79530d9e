//! Layered parametrized circuits and their gradients.
//!
//! Every rotation is `exp(-i θ P)` with `P` a single-qubit Pauli, so the
//! generator of each parameter is a Pauli string with `Tr(P²) = 2^n`.
//! One layer applies, in order:
//!
//! 1. `X(θ_a)` then `Z(θ_b)` on every qubit,
//! 2. the CNOT chain `(0,1), (1,2), ..., (n-2,n-1)`,
//! 3. `X(θ_c)` then `Z(θ_d)` on every qubit,
//! 4. for adversarial circuits only, the same chain in reverse order, which
//!    undoes step 2 so that the all-zero parameter point is the identity.
//!
//! Parameter `((layer·2 + unit)·n + qubit)·2 + k` drives the `X` (k = 0) or
//! `Z` (k = 1) rotation of `unit` (0 before the chain, 1 after it).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::statevec::{Observable, Pauli, PauliString, StateVector};

/// Shift for the parameter-shift rule under the `exp(-iθP)` convention:
/// `dL/dθ = L(θ + π/4) - L(θ - π/4)`.
pub const SHIFT: f64 = std::f64::consts::FRAC_PI_4;

/// Default step of the central finite-difference cross-check.
pub const FD_STEP: f64 = 1e-6;

/// Largest register a serialized descriptor may declare.
const DESCRIPTOR_QUBIT_CAP: usize = 30;
const DESCRIPTOR_LAYER_CAP: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    /// `exp(-i params[param] axis)` on `qubit`.
    Rot { qubit: usize, axis: Pauli, param: usize },
    /// `exp(-i angle axis)` with a frozen angle.
    Fixed { qubit: usize, axis: Pauli, angle: f64 },
    Cnot { control: usize, target: usize },
    /// Fixed dense unitary; local index as in [`StateVector::apply_unitary`].
    Unitary { qubits: Vec<usize>, matrix: CMatrix },
}

/// A gate list over a fixed register with a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    param_count: usize,
    ops: Vec<Op>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Self { n_qubits, param_count: 0, ops: Vec::new() }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    pub fn ops(&self) -> &[Op] {
        &self.ops
    }

    /// Appends a rotation driven by a fresh parameter; returns its index.
    pub fn push_rotation(&mut self, qubit: usize, axis: Pauli) -> Result<usize> {
        self.check_qubit(qubit)?;
        let param = self.param_count;
        self.ops.push(Op::Rot { qubit, axis, param });
        self.param_count += 1;
        Ok(param)
    }

    pub fn push_cnot(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(Error::SameQubit(control));
        }
        self.ops.push(Op::Cnot { control, target });
        Ok(())
    }

    pub fn push_unitary(&mut self, qubits: Vec<usize>, matrix: CMatrix) -> Result<()> {
        for (i, &q) in qubits.iter().enumerate() {
            self.check_qubit(q)?;
            if qubits[..i].contains(&q) {
                return Err(Error::SameQubit(q));
            }
        }
        if !matrix.is_square() || matrix.rows() != 1 << qubits.len() {
            return Err(Error::DimensionMismatch { expected: 1 << qubits.len(), found: matrix.rows() });
        }
        let deficit = matrix.unitarity_deficit();
        if deficit > crate::statevec::UNITARITY_TOL {
            return Err(Error::NonUnitary { deficit });
        }
        self.ops.push(Op::Unitary { qubits, matrix });
        Ok(())
    }

    /// Appends `other`, mapping its qubit `q` to `qubit_map[q]` and its
    /// parameters to fresh indices after the current ones.
    pub fn append(&mut self, other: &Circuit, qubit_map: &[usize]) -> Result<()> {
        if qubit_map.len() != other.n_qubits {
            return Err(Error::DimensionMismatch { expected: other.n_qubits, found: qubit_map.len() });
        }
        for &q in qubit_map {
            self.check_qubit(q)?;
        }
        let offset = self.param_count;
        for op in &other.ops {
            self.ops.push(match op {
                Op::Rot { qubit, axis, param } => Op::Rot { qubit: qubit_map[*qubit], axis: *axis, param: param + offset },
                Op::Fixed { qubit, axis, angle } => Op::Fixed { qubit: qubit_map[*qubit], axis: *axis, angle: *angle },
                Op::Cnot { control, target } => Op::Cnot { control: qubit_map[*control], target: qubit_map[*target] },
                Op::Unitary { qubits, matrix } => {
                    Op::Unitary { qubits: qubits.iter().map(|&q| qubit_map[q]).collect(), matrix: matrix.clone() }
                }
            });
        }
        self.param_count += other.param_count;
        Ok(())
    }

    /// The same gates with every parameter frozen at `params`.
    pub fn bind(&self, params: &[f64]) -> Result<Circuit> {
        if params.len() != self.param_count {
            return Err(Error::ParamLength { expected: self.param_count, found: params.len() });
        }
        let ops = self
            .ops
            .iter()
            .map(|op| match op {
                Op::Rot { qubit, axis, param } => Op::Fixed { qubit: *qubit, axis: *axis, angle: params[*param] },
                other => other.clone(),
            })
            .collect();
        Ok(Circuit { n_qubits: self.n_qubits, param_count: 0, ops })
    }

    /// Inverse of a parameter-free circuit.
    pub fn inverse(&self) -> Result<Circuit> {
        if self.param_count != 0 {
            return Err(Error::InvalidArgument("bind the parameters before inverting a circuit".into()));
        }
        let ops = self
            .ops
            .iter()
            .rev()
            .map(|op| match op {
                Op::Fixed { qubit, axis, angle } => Op::Fixed { qubit: *qubit, axis: *axis, angle: -angle },
                Op::Unitary { qubits, matrix } => Op::Unitary { qubits: qubits.clone(), matrix: matrix.adjoint() },
                other => other.clone(),
            })
            .collect();
        Ok(Circuit { n_qubits: self.n_qubits, param_count: 0, ops })
    }

    /// Generator `P` of parameter `l` as a Pauli string on the register.
    pub fn generator(&self, l: usize) -> Result<PauliString> {
        self.ops
            .iter()
            .find_map(|op| match op {
                Op::Rot { qubit, axis, param } if *param == l => Some(PauliString::single(self.n_qubits, *qubit, *axis)),
                _ => None,
            })
            .ok_or_else(|| Error::InvalidArgument(format!("parameter {l} does not exist")))
    }

    pub fn cnot_count(&self) -> usize {
        self.ops.iter().filter(|op| matches!(op, Op::Cnot { .. })).count()
    }

    pub fn apply(&self, state: &mut StateVector, params: &[f64]) -> Result<()> {
        self.check_state(state, params)?;
        for op in &self.ops {
            apply_op(state, op, params, false);
        }
        Ok(())
    }

    /// Applies the circuit to the low qubits of a register that may carry
    /// extra high qubits.
    pub fn apply_embedded(&self, state: &mut StateVector, params: &[f64], inverse: bool) -> Result<()> {
        if params.len() != self.param_count {
            return Err(Error::ParamLength { expected: self.param_count, found: params.len() });
        }
        if state.n_qubits() < self.n_qubits {
            return Err(Error::DimensionMismatch { expected: self.n_qubits, found: state.n_qubits() });
        }
        if inverse {
            self.ops.iter().rev().for_each(|op| apply_op(state, op, params, true));
        } else {
            self.ops.iter().for_each(|op| apply_op(state, op, params, false));
        }
        Ok(())
    }

    /// Dense matrix of the circuit, built column by column.
    pub fn unitary(&self, params: &[f64]) -> Result<CMatrix> {
        let d = 1usize << self.n_qubits;
        let mut out = CMatrix::zeros(d, d);
        for col in 0..d {
            let mut s = StateVector::basis(self.n_qubits, col)?;
            self.apply(&mut s, params)?;
            out.set_column(col, s.amplitudes());
        }
        Ok(out)
    }

    /// Applies the inverse circuit `U(params)^dag`.
    pub fn apply_inverse(&self, state: &mut StateVector, params: &[f64]) -> Result<()> {
        self.check_state(state, params)?;
        for op in self.ops.iter().rev() {
            apply_op(state, op, params, true);
        }
        Ok(())
    }

    /// `<in| U^dag O U |in>`.
    pub fn expectation(&self, input: &StateVector, params: &[f64], obs: &Observable) -> Result<f64> {
        let mut s = input.clone();
        self.apply(&mut s, params)?;
        s.expectation(obs)
    }

    /// Exact gradient of [`expectation`](Self::expectation) by the
    /// parameter-shift rule, two circuit evaluations per parameter.
    pub fn parameter_shift_gradient(&self, input: &StateVector, params: &[f64], obs: &Observable) -> Result<Vec<f64>> {
        self.check_state(input, params)?;
        let mut shifted = params.to_vec();
        let mut grad = vec![0.0; self.param_count];
        for (l, g) in grad.iter_mut().enumerate() {
            let uses = self.ops.iter().filter(|op| matches!(op, Op::Rot { param, .. } if *param == l)).count();
            if uses != 1 {
                return Err(Error::InvalidArgument(format!(
                    "parameter-shift rule needs each parameter on exactly one rotation; parameter {l} drives {uses}"
                )));
            }
            shifted[l] = params[l] + SHIFT;
            let plus = self.expectation(input, &shifted, obs)?;
            shifted[l] = params[l] - SHIFT;
            let minus = self.expectation(input, &shifted, obs)?;
            shifted[l] = params[l];
            *g = plus - minus;
        }
        Ok(grad)
    }

    /// Value and full gradient of the expectation in one forward and one
    /// backward sweep (adjoint differentiation). Agrees with
    /// [`parameter_shift_gradient`](Self::parameter_shift_gradient) to
    /// rounding; used wherever gradients are needed in bulk.
    pub fn adjoint_gradient(&self, input: &StateVector, params: &[f64], obs: &Observable) -> Result<(f64, Vec<f64>)> {
        let mut psi = input.clone();
        self.apply(&mut psi, params)?;
        let value = psi.expectation(obs)?;
        let mut lambda = StateVector::from_raw(obs.apply(psi.amplitudes()));
        let mut grad = vec![0.0; self.param_count];
        for op in self.ops.iter().rev() {
            if let Op::Rot { qubit, axis, param } = op {
                // d/dθ <psi|O|psi> = 2 Im <lambda| P |psi_after>
                grad[*param] += 2.0 * pauli_matrix_element(lambda.amplitudes(), psi.amplitudes(), *qubit, *axis).im;
            }
            apply_op(&mut psi, op, params, true);
            apply_op(&mut lambda, op, params, true);
        }
        Ok((value, grad))
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q >= self.n_qubits {
            return Err(Error::QubitOutOfRange { qubit: q, n_qubits: self.n_qubits });
        }
        Ok(())
    }

    fn check_state(&self, state: &StateVector, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count {
            return Err(Error::ParamLength { expected: self.param_count, found: params.len() });
        }
        if state.n_qubits() != self.n_qubits {
            return Err(Error::DimensionMismatch { expected: self.n_qubits, found: state.n_qubits() });
        }
        Ok(())
    }
}

fn apply_op(state: &mut StateVector, op: &Op, params: &[f64], inverse: bool) {
    match op {
        Op::Rot { qubit, axis, param } => {
            let theta = if inverse { -params[*param] } else { params[*param] };
            state.apply_rotation(*qubit, *axis, theta);
        }
        Op::Fixed { qubit, axis, angle } => state.apply_rotation(*qubit, *axis, if inverse { -angle } else { *angle }),
        Op::Cnot { control, target } => state.apply_cnot(*control, *target),
        Op::Unitary { qubits, matrix } => {
            if inverse {
                state.apply_unitary_unchecked(qubits, &matrix.adjoint());
            } else {
                state.apply_unitary_unchecked(qubits, matrix);
            }
        }
    }
}

/// `<a| P_q |b>` for a single-qubit Pauli on qubit `q`.
pub(crate) fn pauli_matrix_element(a: &[C64], b: &[C64], q: usize, axis: Pauli) -> C64 {
    let mask = 1usize << q;
    let mut acc = C64::new(0.0, 0.0);
    match axis {
        Pauli::I => {
            for (x, y) in a.iter().zip(b) {
                acc += x.conj() * y;
            }
        }
        Pauli::Z => {
            for (i, (x, y)) in a.iter().zip(b).enumerate() {
                if i & mask == 0 {
                    acc += x.conj() * y;
                } else {
                    acc -= x.conj() * y;
                }
            }
        }
        Pauli::X => {
            for (i, x) in a.iter().enumerate() {
                acc += x.conj() * b[i ^ mask];
            }
        }
        Pauli::Y => {
            // Y|0> = i|1>, Y|1> = -i|0>
            for (i, x) in a.iter().enumerate() {
                let y = b[i ^ mask];
                let phase = if i & mask != 0 { C64::new(0.0, 1.0) } else { C64::new(0.0, -1.0) };
                acc += x.conj() * phase * y;
            }
        }
    }
    acc
}

/// Which family a layered circuit belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CircuitKind {
    Classifier,
    Adversarial,
}

/// A layered circuit in the rotation / chain / rotation layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamCircuit {
    kind: CircuitKind,
    layers: usize,
    circuit: Circuit,
}

impl ParamCircuit {
    /// Classifier over `n` data qubits plus `m` ancillas (qubits `n..n+m`).
    pub fn classifier(n: usize, m: usize, layers: usize) -> Result<Self> {
        if n == 0 || layers == 0 {
            return Err(Error::InvalidArgument("classifier needs n >= 1 and at least one layer".into()));
        }
        Ok(Self::layered(CircuitKind::Classifier, n + m, layers))
    }

    /// Adversarial circuit: identity at all-zero parameters.
    pub fn adversarial(n: usize, layers: usize) -> Result<Self> {
        if n == 0 || layers == 0 {
            return Err(Error::InvalidArgument("adversarial circuit needs n >= 1 and at least one layer".into()));
        }
        Ok(Self::layered(CircuitKind::Adversarial, n, layers))
    }

    fn layered(kind: CircuitKind, n_qubits: usize, layers: usize) -> Self {
        let mut c = Circuit::new(n_qubits);
        let rotations = |c: &mut Circuit| {
            for q in 0..n_qubits {
                c.push_rotation(q, Pauli::X).expect("qubit in range");
                c.push_rotation(q, Pauli::Z).expect("qubit in range");
            }
        };
        for _ in 0..layers {
            rotations(&mut c);
            for q in 0..n_qubits.saturating_sub(1) {
                c.push_cnot(q, q + 1).expect("qubit in range");
            }
            rotations(&mut c);
            if kind == CircuitKind::Adversarial {
                for q in (0..n_qubits.saturating_sub(1)).rev() {
                    c.push_cnot(q, q + 1).expect("qubit in range");
                }
            }
        }
        Self { kind, layers, circuit: c }
    }

    pub fn kind(&self) -> CircuitKind {
        self.kind
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn n_qubits(&self) -> usize {
        self.circuit.n_qubits
    }

    pub fn param_count(&self) -> usize {
        self.circuit.param_count
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn generator(&self, l: usize) -> Result<PauliString> {
        self.circuit.generator(l)
    }

    /// `(qubit, axis)` of every parameter, in parameter order.
    pub fn generators(&self) -> Vec<(usize, Pauli)> {
        let mut out = vec![(0, Pauli::I); self.param_count()];
        for op in &self.circuit.ops {
            if let Op::Rot { qubit, axis, param } = op {
                out[*param] = (*qubit, *axis);
            }
        }
        out
    }

    pub fn apply(&self, state: &mut StateVector, params: &[f64]) -> Result<()> {
        self.circuit.apply(state, params)
    }

    pub fn apply_inverse(&self, state: &mut StateVector, params: &[f64]) -> Result<()> {
        self.circuit.apply_inverse(state, params)
    }

    pub fn descriptor(&self) -> CircuitDescriptor {
        CircuitDescriptor {
            format_version: CircuitDescriptor::FORMAT_VERSION,
            kind: self.kind,
            n_qubits: self.n_qubits(),
            layers: self.layers,
            generators: Some(self.generators().iter().map(|&(q, a)| generator_tag(q, a)).collect()),
        }
    }

    pub fn from_descriptor(d: &CircuitDescriptor) -> Result<Self> {
        if d.format_version != CircuitDescriptor::FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported circuit descriptor version {}", d.format_version)));
        }
        if d.n_qubits == 0 || d.n_qubits > DESCRIPTOR_QUBIT_CAP {
            return Err(Error::Format(format!("descriptor qubit count {} outside 1..={DESCRIPTOR_QUBIT_CAP}", d.n_qubits)));
        }
        if d.layers == 0 || d.layers > DESCRIPTOR_LAYER_CAP {
            return Err(Error::Format(format!("descriptor layer count {} outside 1..={DESCRIPTOR_LAYER_CAP}", d.layers)));
        }
        let c = Self::layered(d.kind, d.n_qubits, d.layers);
        if let Some(tags) = &d.generators {
            let expected: Vec<String> = c.generators().iter().map(|&(q, a)| generator_tag(q, a)).collect();
            if *tags != expected {
                return Err(Error::Format("generator tags do not match the declared layout".into()));
            }
        }
        Ok(c)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.descriptor())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_descriptor(&serde_json::from_str(s)?)
    }
}

fn generator_tag(q: usize, a: Pauli) -> String {
    let letter = match a {
        Pauli::I => 'I',
        Pauli::X => 'X',
        Pauli::Y => 'Y',
        Pauli::Z => 'Z',
    };
    format!("{letter}{q}")
}

/// JSON form of a [`ParamCircuit`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitDescriptor {
    pub format_version: u32,
    pub kind: CircuitKind,
    pub n_qubits: usize,
    pub layers: usize,
    /// Optional per-parameter generator tags such as `"X3"`; checked on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generators: Option<Vec<String>>,
}

impl CircuitDescriptor {
    pub const FORMAT_VERSION: u32 = 1;
}

/// Central finite differences of an arbitrary scalar function.
pub fn finite_difference_gradient(params: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> Result<f64>) -> Result<Vec<f64>> {
    let mut p = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for l in 0..params.len() {
        p[l] = params[l] + step;
        let plus = f(&p)?;
        p[l] = params[l] - step;
        let minus = f(&p)?;
        p[l] = params[l];
        grad.push((plus - minus) / (2.0 * step));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{I, ONE, ZERO};
    use crate::rng;
    use rand::Rng as _;
    use std::f64::consts::PI;

    #[test]
    fn parameter_counts() {
        assert_eq!(ParamCircuit::classifier(8, 1, 10).unwrap().param_count(), 360);
        let single = ParamCircuit::classifier(1, 0, 1).unwrap();
        assert_eq!(single.param_count(), 4);
        assert_eq!(single.circuit().cnot_count(), 0);
        assert_eq!(ParamCircuit::classifier(4, 0, 4).unwrap().param_count(), 64);
        assert_eq!(ParamCircuit::adversarial(2, 1).unwrap().param_count(), 8);
    }

    #[test]
    fn classifier_entangler_spans_ancilla() {
        let c = ParamCircuit::classifier(3, 1, 1).unwrap();
        let pairs: Vec<_> = c
            .circuit()
            .ops()
            .iter()
            .filter_map(|op| match op {
                Op::Cnot { control, target } => Some((*control, *target)),
                _ => None,
            })
            .collect();
        assert_eq!(pairs, vec![(0, 1), (1, 2), (2, 3)]);
    }

    #[test]
    fn first_x_angle_acts_first() {
        let c = ParamCircuit::classifier(1, 0, 1).unwrap();
        let mut s = StateVector::zero(1);
        c.apply(&mut s, &[PI / 2.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((s.amplitudes()[1] - (-I)).norm() < 1e-12);
        let mut s = StateVector::zero(1);
        c.apply(&mut s, &[PI, 0.0, 0.0, 0.0]).unwrap();
        assert!((s.amplitudes()[0] - (-ONE)).norm() < 1e-12);
        assert!(s.amplitudes()[1].norm() < 1e-12);
    }

    #[test]
    fn zero_classifier_keeps_all_zero_state() {
        let c = ParamCircuit::classifier(4, 1, 3).unwrap();
        let mut s = StateVector::zero(5);
        c.apply(&mut s, &vec![0.0; c.param_count()]).unwrap();
        assert_eq!(s, StateVector::zero(5));
    }

    #[test]
    fn adversarial_zero_is_identity_on_basis() {
        let c = ParamCircuit::adversarial(4, 4).unwrap();
        let mut s = StateVector::basis(4, 0b1010).unwrap();
        c.apply(&mut s, &vec![0.0; c.param_count()]).unwrap();
        assert!((s.amplitudes()[0b1010] - ONE).norm() < 1e-12);
    }

    #[test]
    fn param_length_checked() {
        let c = ParamCircuit::classifier(2, 0, 1).unwrap();
        let mut s = StateVector::zero(2);
        assert!(matches!(c.apply(&mut s, &[0.0; 3]), Err(Error::ParamLength { expected: 8, found: 3 })));
    }

    #[test]
    fn shift_rule_on_single_rotation() {
        // L(θ) = <0|X(θ)^dag Z X(θ)|0> = cos 2θ
        let mut c = Circuit::new(1);
        c.push_rotation(0, Pauli::X).unwrap();
        let z = Observable::Pauli(PauliString::single(1, 0, Pauli::Z));
        let input = StateVector::zero(1);
        let g0 = c.parameter_shift_gradient(&input, &[0.0], &z).unwrap();
        assert!(g0[0].abs() < 1e-12);
        let g = c.parameter_shift_gradient(&input, &[PI / 8.0], &z).unwrap();
        assert!((g[0] + 2.0f64.sqrt()).abs() < 1e-12);
        let (_, ga) = c.adjoint_gradient(&input, &[PI / 8.0], &z).unwrap();
        assert!((ga[0] + 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn disjoint_parameter_has_zero_gradient() {
        let mut c = Circuit::new(2);
        c.push_rotation(0, Pauli::X).unwrap();
        c.push_rotation(1, Pauli::X).unwrap();
        let z0 = Observable::Pauli(PauliString::single(2, 0, Pauli::Z));
        let g = c.parameter_shift_gradient(&StateVector::zero(2), &[0.3, 0.7], &z0).unwrap();
        assert!(g[1].abs() < 1e-15);
    }

    #[test]
    fn descriptor_round_trip() {
        let c = ParamCircuit::adversarial(3, 2).unwrap();
        let back = ParamCircuit::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
        let mut d = c.descriptor();
        d.generators.as_mut().unwrap().swap(0, 1);
        assert!(ParamCircuit::from_descriptor(&d).is_err());
        assert!(ParamCircuit::from_json(r#"{"format_version":1,"kind":"classifier","n_qubits":2,"layers":1,"extra":0}"#).is_err());
    }

    #[test]
    fn pauli_matrix_elements_match_dense() {
        let mut r = rng::stream(5, 0, 0);
        let a = StateVector::random(3, &mut r);
        let b = StateVector::random(3, &mut r);
        for axis in [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z] {
            for q in 0..3 {
                let dense = PauliString::single(3, q, axis).to_dense();
                let expect = crate::linalg::inner(a.amplitudes(), &dense.matvec(b.amplitudes()));
                let got = pauli_matrix_element(a.amplitudes(), b.amplitudes(), q, axis);
                assert!((got - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn unitary_ops_round_trip() {
        let mut r = rng::stream(6, 0, 0);
        let mut c = Circuit::new(3);
        let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        c.push_unitary(vec![2], CMatrix::from_rows(&[&[h, h], &[h, -h]])).unwrap();
        c.push_rotation(1, Pauli::Y).unwrap();
        c.push_cnot(2, 0).unwrap();
        let input = StateVector::random(3, &mut r);
        let mut s = input.clone();
        let p = [r.random::<f64>()];
        c.apply(&mut s, &p).unwrap();
        c.apply_inverse(&mut s, &p).unwrap();
        for (x, y) in s.amplitudes().iter().zip(input.amplitudes()) {
            assert!((x - y).norm() < 1e-12);
        }
        assert!(c.push_unitary(vec![0], CMatrix::from_rows(&[&[ONE, ONE], &[ZERO, ONE]])).is_err());
    }
}
