//! First and second moments of the Haar measure in closed form, the exact
//! gradient variances they imply for randomly encoded losses, and Monte
//! Carlo estimators that check them.
//!
//! Conventions: every integral is over `U ~ Haar(d)` of `U† A U`
//! (first order) or `U† A U X U† B U` (second order). For tensor-product
//! encoders the block index `j` runs over consecutive groups of `m` qubits
//! with block 0 on the least significant qubits.

use rand::Rng;

use crate::defense::sample_haar_unitary;
use crate::error::{Error, Result};
use crate::linalg::{inner, norm_sqr, CMatrix, C64};

/// `∫ U† O U dU = Tr(O)/d · I`.
pub fn first_moment(o: &CMatrix) -> Result<CMatrix> {
    if !o.is_square() {
        return Err(Error::DimensionMismatch { expected: o.rows(), found: o.cols() });
    }
    let d = o.rows();
    Ok(CMatrix::identity(d).scale(o.trace() / d as f64))
}

/// `∫ U† A U X U† B U dU`.
pub fn second_moment(a: &CMatrix, b: &CMatrix, x: &CMatrix) -> Result<CMatrix> {
    let d = check_square_family(&[a, b, x])?;
    if d < 2 {
        return Err(Error::InvalidArgument("second moment needs d >= 2".into()));
    }
    let (c_tr, c_x) = second_moment_coefficients(a, b, d);
    Ok(&CMatrix::identity(d).scale(c_tr * x.trace()) + &x.scale(c_x))
}

/// Coefficients `(α, β)` with `∫ U†AUXU†BU = α Tr(X) I + β X`.
fn second_moment_coefficients(a: &CMatrix, b: &CMatrix, d: usize) -> (C64, C64) {
    let df = d as f64;
    let tab = a.trace_product(b);
    let ta_tb = a.trace() * b.trace();
    let denom = df * (df * df - 1.0);
    ((tab * df - ta_tb) / denom, (ta_tb * df - tab) / denom)
}

/// Second moment under a tensor product of independent Haar blocks,
/// `U = U_0 ⊗ U_1 ⊗ ...`, with `A = ⊗ A_j` and `B = ⊗ B_j`.
///
/// Each block is integrated in turn with the subspace formula
/// `[(d_j Tr(A_j B_j) − Tr A_j Tr B_j) Tr_j(X) ⊗ I_j + (d_j Tr A_j Tr B_j − Tr(A_j B_j)) X] / (d_j(d_j²−1))`.
pub fn block_second_moment(blocks: &[(CMatrix, CMatrix)], x: &CMatrix) -> Result<CMatrix> {
    let mut dims = Vec::with_capacity(blocks.len());
    for (a, b) in blocks {
        let dj = check_square_family(&[a, b])?;
        if dj < 2 {
            return Err(Error::InvalidArgument("every block needs dimension >= 2".into()));
        }
        dims.push(dj);
    }
    let total: usize = dims.iter().product();
    if !x.is_square() || x.rows() != total {
        return Err(Error::DimensionMismatch { expected: total, found: x.rows() });
    }
    let mut out = x.clone();
    for (j, (a, b)) in blocks.iter().enumerate() {
        let (c_tr, c_x) = second_moment_coefficients(a, b, dims[j]);
        let traced = out.partial_trace(&dims, j)?.embed_identity(&dims, j)?;
        out = &traced.scale(c_tr) + &out.scale(c_x);
    }
    Ok(out)
}

fn check_square_family(ms: &[&CMatrix]) -> Result<usize> {
    let d = ms[0].rows();
    for m in ms {
        if !m.is_square() {
            return Err(Error::DimensionMismatch { expected: m.rows(), found: m.cols() });
        }
        if m.rows() != d {
            return Err(Error::DimensionMismatch { expected: d, found: m.rows() });
        }
    }
    Ok(d)
}

/// Exact variance of `∂L = i⟨ψ|[U†AU, H]|ψ⟩` over a global 2-design, and the
/// looser bound `2 Tr(A²) Tr(ρH²)/(d²−1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlobalVariance {
    pub exact: f64,
    pub bound: f64,
}

/// Dense form: `a` is the generator, `psi` the input, `h` the observable.
pub fn thm1_variance_exact(a: &CMatrix, psi: &[C64], h: &CMatrix) -> Result<GlobalVariance> {
    let d = check_square_family(&[a, h])?;
    if psi.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: psi.len() });
    }
    let h_psi = h.matvec(psi);
    Ok(global_haar_variance(a.trace_product(a).re, a.trace().re, psi, &h_psi))
}

/// Same value from `Tr(A²)`, `Tr A`, `|ψ⟩` and `H|ψ⟩` only, in `O(d)`.
pub fn global_haar_variance(tr_a2: f64, tr_a: f64, psi: &[C64], h_psi: &[C64]) -> GlobalVariance {
    let d = psi.len() as f64;
    let h2 = norm_sqr(h_psi);
    let h1 = inner(psi, h_psi).re;
    let spread = (h2 - h1 * h1).max(0.0);
    GlobalVariance {
        exact: 2.0 / (d * (d * d - 1.0)) * (d * tr_a2 - tr_a * tr_a) * spread,
        bound: 2.0 * tr_a2 * h2 / (d * d - 1.0),
    }
}

/// Upper bound on the gradient variance under `ξ` independent Haar blocks
/// of `m` qubits: `Σcc' ((2^m+1)/(4^m−1))^ξ C₀`.
pub fn thm2_variance_bound(m: u32, xi: u32, cc_sum: f64, c0: f64) -> f64 {
    let dm = 2f64.powi(m as i32);
    cc_sum * ((dm + 1.0) / (dm * dm - 1.0)).powi(xi as i32) * c0
}

/// Block split of a register of `m·ξ` qubits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockLayout {
    pub m: usize,
    pub xi: usize,
}

impl BlockLayout {
    pub fn new(m: usize, xi: usize) -> Result<Self> {
        if m == 0 || xi == 0 {
            return Err(Error::InvalidArgument("block layout needs m >= 1 and xi >= 1".into()));
        }
        Ok(Self { m, xi })
    }

    pub fn n_qubits(&self) -> usize {
        self.m * self.xi
    }

    pub fn block_dim(&self) -> usize {
        1 << self.m
    }

    fn block_mask(&self, j: usize) -> usize {
        ((1usize << self.m) - 1) << (j * self.m)
    }
}

/// `T_J` for every subset `J` of blocks, indexed by the bitmask of `J`:
///
/// `T_J = Tr[(Tr_J ρ ⊗ I) HρH] + Tr[(Tr_J HρH ⊗ I) ρ] − Tr[(Tr_J ρH ⊗ I) ρH] − Tr[(Tr_J Hρ ⊗ I) Hρ]`
///
/// with `ρ = |ψ⟩⟨ψ|` and `h_psi = H|ψ⟩`.
pub fn block_trace_terms(layout: BlockLayout, psi: &[C64], h_psi: &[C64]) -> Result<Vec<f64>> {
    let d = 1usize << layout.n_qubits();
    for v in [psi, h_psi] {
        if v.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: v.len() });
        }
    }
    let terms = (0..1usize << layout.xi)
        .map(|subset| {
            let traced: usize = (0..layout.xi).filter(|j| subset >> j & 1 == 1).map(|j| layout.block_mask(j)).sum();
            let psi_m = split_matrix(psi, traced);
            let h_m = split_matrix(h_psi, traced);
            let direct = pair_trace(&psi_m, &psi_m, &h_m, &h_m);
            let crossed = pair_trace(&psi_m, &h_m, &psi_m, &h_m);
            2.0 * direct.re - 2.0 * crossed.re
        })
        .collect();
    Ok(terms)
}

/// `C₀ = max_J |T_J|`.
pub fn c0(terms: &[f64]) -> f64 {
    terms.iter().fold(0.0, |acc, t| acc.max(t.abs()))
}

/// Trace data of one block factor `A_j` of a product generator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockFactor {
    pub tr_a2: f64,
    pub tr_a: f64,
}

impl BlockFactor {
    /// Factor of a Pauli string restricted to a block of dimension `dim`.
    pub fn pauli(dim: usize, is_identity: bool) -> Self {
        let dim = dim as f64;
        Self { tr_a2: dim, tr_a: if is_identity { dim } else { 0.0 } }
    }
}

/// Exact gradient variance under independent Haar blocks for a product
/// generator `A = ⊗ A_j`:
///
/// `Var = (D²−1)^{−ξ} Σ_J Π_{j∈J} a_j Π_{j∉J} b_j T_J`
///
/// with `a_j = Tr(A_j²) − Tr²A_j/D` and `b_j = Tr²A_j − Tr(A_j²)/D`.
pub fn block_haar_variance(layout: BlockLayout, factors: &[BlockFactor], terms: &[f64]) -> Result<f64> {
    if factors.len() != layout.xi {
        return Err(Error::DimensionMismatch { expected: layout.xi, found: factors.len() });
    }
    if terms.len() != 1 << layout.xi {
        return Err(Error::DimensionMismatch { expected: 1 << layout.xi, found: terms.len() });
    }
    let dim = layout.block_dim() as f64;
    let a: Vec<f64> = factors.iter().map(|f| f.tr_a2 - f.tr_a * f.tr_a / dim).collect();
    let b: Vec<f64> = factors.iter().map(|f| f.tr_a * f.tr_a - f.tr_a2 / dim).collect();
    let mut total = 0.0;
    for (subset, t) in terms.iter().enumerate() {
        let weight: f64 = (0..layout.xi).map(|j| if subset >> j & 1 == 1 { a[j] } else { b[j] }).product();
        total += weight * t;
    }
    Ok(total / (dim * dim - 1.0).powi(layout.xi as i32))
}

/// Vector reshaped as a matrix with rows indexed by the bits in `traced`
/// and columns by the remaining bits.
struct Split {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

fn split_matrix(v: &[C64], traced: usize) -> Split {
    let d = v.len();
    let rows = 1usize << traced.count_ones();
    let cols = d / rows;
    let mut data = vec![C64::new(0.0, 0.0); d];
    for (i, &amp) in v.iter().enumerate() {
        let r = compress(i, traced);
        let c = compress(i, !traced & (d - 1));
        data[r * cols + c] = amp;
    }
    Split { rows, cols, data }
}

fn compress(i: usize, mask: usize) -> usize {
    let mut out = 0;
    let mut bit = 0;
    let mut m = mask;
    while m != 0 {
        let low = m & m.wrapping_neg();
        if i & low != 0 {
            out |= 1 << bit;
        }
        bit += 1;
        m ^= low;
    }
    out
}

/// `Tr[R(a,b) R(c,e)]` where `R(a,b) = Tr_J |a⟩⟨b|`, contracted over the
/// smaller side.
fn pair_trace(a: &Split, b: &Split, c: &Split, e: &Split) -> C64 {
    let (rows, cols) = (a.rows, a.cols);
    let zero = C64::new(0.0, 0.0);
    if rows <= cols {
        // Tr[G(a,e) G(c,b)] with G(u,v)_{jk} = Σ_x u_{jx} v*_{kx}
        let gram = |u: &Split, v: &Split| {
            let mut g = vec![zero; rows * rows];
            for j in 0..rows {
                for k in 0..rows {
                    let mut acc = zero;
                    for x in 0..cols {
                        acc += u.data[j * cols + x] * v.data[k * cols + x].conj();
                    }
                    g[j * rows + k] = acc;
                }
            }
            g
        };
        let g1 = gram(a, e);
        let g2 = gram(c, b);
        let mut acc = zero;
        for j in 0..rows {
            for k in 0..rows {
                acc += g1[j * rows + k] * g2[k * rows + j];
            }
        }
        acc
    } else {
        // R(u,v)_{xy} = Σ_j u_{jx} v*_{jy}
        let reduced = |u: &Split, v: &Split| {
            let mut r = vec![zero; cols * cols];
            for j in 0..rows {
                for x in 0..cols {
                    let ux = u.data[j * cols + x];
                    for y in 0..cols {
                        r[x * cols + y] += ux * v.data[j * cols + y].conj();
                    }
                }
            }
            r
        };
        let r1 = reduced(a, b);
        let r2 = reduced(c, e);
        let mut acc = zero;
        for x in 0..cols {
            for y in 0..cols {
                acc += r1[x * cols + y] * r2[y * cols + x];
            }
        }
        acc
    }
}

/// Monte Carlo estimate of a matrix-valued mean with a Frobenius-norm
/// standard error.
#[derive(Clone, Debug)]
pub struct MatrixEstimate {
    pub mean: CMatrix,
    /// Bootstrap RMS of `‖mean* − mean‖_F` over resampled batch means.
    pub stderr: f64,
}

/// Number of batch means the bootstrap resamples.
pub const BATCHES: usize = 50;
pub const BOOTSTRAP_REPLICATES: usize = 200;

/// Averages `f(rng)` over `samples` draws, keeping batch means so that the
/// error bar can be bootstrapped.
pub fn matrix_mean<R: Rng + ?Sized>(
    samples: usize,
    rng: &mut R,
    f: impl FnMut(&mut R) -> CMatrix,
) -> Result<MatrixEstimate> {
    let batches = batch_means(samples, rng, f)?;
    let mean = average(&batches.iter().collect::<Vec<_>>());
    let spread = bootstrap_statistic(&batches, rng, |m| m.distance(&mean));
    let rms = (spread.iter().map(|x| x * x).sum::<f64>() / spread.len() as f64).sqrt();
    Ok(MatrixEstimate { mean, stderr: rms })
}

/// `BATCHES` means of `f(rng)` over `samples` draws in total.
pub(crate) fn batch_means<R: Rng + ?Sized>(
    samples: usize,
    rng: &mut R,
    mut f: impl FnMut(&mut R) -> CMatrix,
) -> Result<Vec<CMatrix>> {
    if samples < BATCHES * 2 {
        return Err(Error::TooFewSamples { got: samples, min: BATCHES * 2 });
    }
    let mut batches: Vec<CMatrix> = Vec::with_capacity(BATCHES);
    for k in 0..BATCHES {
        let size = samples / BATCHES + usize::from(k < samples % BATCHES);
        let mut acc = f(rng);
        for _ in 1..size {
            acc = &acc + &f(rng);
        }
        batches.push(acc.scale(C64::new(1.0 / size as f64, 0.0)));
    }
    Ok(batches)
}

/// `statistic` of the mean of each bootstrap resample of `batches`.
pub(crate) fn bootstrap_statistic<R: Rng + ?Sized>(
    batches: &[CMatrix],
    rng: &mut R,
    statistic: impl Fn(&CMatrix) -> f64,
) -> Vec<f64> {
    (0..BOOTSTRAP_REPLICATES)
        .map(|_| {
            let pick: Vec<&CMatrix> = (0..batches.len()).map(|_| &batches[rng.random_range(0..batches.len())]).collect();
            statistic(&average(&pick))
        })
        .collect()
}

/// `∫ (U⊗U) M (U⊗U)† dU = α I + β S` on two copies of dimension `d`, where
/// `S` swaps the copies, `α = (Tr M − Tr(MS)/d)/(d²−1)` and
/// `β = (Tr(MS) − Tr M/d)/(d²−1)`.
pub fn two_copy_twirl(m: &CMatrix, d: usize) -> Result<CMatrix> {
    if !m.is_square() || m.rows() != d * d {
        return Err(Error::DimensionMismatch { expected: d * d, found: m.rows() });
    }
    if d < 2 {
        return Err(Error::InvalidArgument("two-copy twirl needs d >= 2".into()));
    }
    let swap = swap_operator(d);
    let df = d as f64;
    let tr_m = m.trace();
    let tr_ms = m.trace_product(&swap);
    let alpha = (tr_m - tr_ms / df) / (df * df - 1.0);
    let beta = (tr_ms - tr_m / df) / (df * df - 1.0);
    Ok(&CMatrix::identity(d * d).scale(alpha) + &swap.scale(beta))
}

/// Swap of two `d`-dimensional factors.
pub fn swap_operator(d: usize) -> CMatrix {
    let mut s = CMatrix::zeros(d * d, d * d);
    for a in 0..d {
        for b in 0..d {
            s[(b + d * a, a + d * b)] = C64::new(1.0, 0.0);
        }
    }
    s
}

pub(crate) fn average(ms: &[&CMatrix]) -> CMatrix {
    let mut acc = ms[0].clone();
    for m in &ms[1..] {
        acc = &acc + m;
    }
    acc.scale(C64::new(1.0 / ms.len() as f64, 0.0))
}

/// Monte Carlo counterpart of [`first_moment`].
pub fn mc_first_moment<R: Rng + ?Sized>(o: &CMatrix, samples: usize, rng: &mut R) -> Result<MatrixEstimate> {
    check_square_family(&[o])?;
    let d = o.rows();
    matrix_mean(samples, rng, |r| {
        let u = sample_haar_unitary(d, r).expect("dimension validated");
        u.adjoint().matmul(o).matmul(&u)
    })
}

/// Monte Carlo counterpart of [`second_moment`].
pub fn mc_second_moment<R: Rng + ?Sized>(
    a: &CMatrix,
    b: &CMatrix,
    x: &CMatrix,
    samples: usize,
    rng: &mut R,
) -> Result<MatrixEstimate> {
    let d = check_square_family(&[a, b, x])?;
    sample_haar_unitary(d, rng)?;
    matrix_mean(samples, rng, |r| {
        let u = sample_haar_unitary(d, r).expect("dimension validated");
        conjugated_product(&u, a, b, x)
    })
}

/// Monte Carlo counterpart of [`block_second_moment`]: one independent
/// Haar unitary per block.
pub fn mc_block_second_moment<R: Rng + ?Sized>(
    blocks: &[(CMatrix, CMatrix)],
    x: &CMatrix,
    samples: usize,
    rng: &mut R,
) -> Result<MatrixEstimate> {
    // validates shapes
    block_second_moment(blocks, x)?;
    let a = kron_all(blocks.iter().map(|(a, _)| a));
    let b = kron_all(blocks.iter().map(|(_, b)| b));
    matrix_mean(samples, rng, |r| {
        let u = kron_all(blocks.iter().map(|(a, _)| sample_haar_unitary(a.rows(), r).expect("validated")).collect::<Vec<_>>().iter());
        conjugated_product(&u, &a, &b, x)
    })
}

fn conjugated_product(u: &CMatrix, a: &CMatrix, b: &CMatrix, x: &CMatrix) -> CMatrix {
    let ud = u.adjoint();
    let ua = ud.matmul(a).matmul(u);
    let ub = ud.matmul(b).matmul(u);
    ua.matmul(x).matmul(&ub)
}

/// `F_0 ⊗ F_1 ⊗ ...` with factor 0 on the least significant digits.
pub fn kron_all<'a>(factors: impl Iterator<Item = &'a CMatrix>) -> CMatrix {
    let mut out = CMatrix::identity(1);
    for f in factors {
        out = f.kron(&out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::pauli;
    use crate::rng::{domain, stream};
    use crate::statevec::StateVector;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn ket0_projector(d: usize) -> CMatrix {
        let mut p = CMatrix::zeros(d, d);
        p[(0, 0)] = c(1.0);
        p
    }

    fn random_hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
        let g = CMatrix::from_fn(d, d, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        &g + &g.adjoint()
    }

    #[test]
    fn first_moment_examples() {
        assert!(first_moment(&pauli::z()).unwrap().frobenius_norm() < 1e-15);
        assert!(first_moment(&CMatrix::identity(4)).unwrap().distance(&CMatrix::identity(4)) < 1e-15);
        let half = first_moment(&ket0_projector(2)).unwrap();
        assert!(half.distance(&CMatrix::identity(2).scale(c(0.5))) < 1e-15);
        assert!(first_moment(&CMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn second_moment_of_z_on_ket0() {
        let z = pauli::z();
        let out = second_moment(&z, &z, &ket0_projector(2)).unwrap();
        assert!(out.distance(&CMatrix::from_real_diagonal(&[1.0 / 3.0, 2.0 / 3.0])) < 1e-15);
    }

    #[test]
    fn identity_insertions_leave_x_unchanged() {
        let mut rng = stream(1, domain::HAAR_MC, 0);
        for d in [2, 3, 4, 8] {
            let x = random_hermitian(d, &mut rng);
            let i = CMatrix::identity(d);
            assert!(second_moment(&i, &i, &x).unwrap().distance(&x) < 1e-12);
        }
        let x = random_hermitian(8, &mut rng);
        let blocks = vec![(CMatrix::identity(2), CMatrix::identity(2)), (CMatrix::identity(4), CMatrix::identity(4))];
        assert!(block_second_moment(&blocks, &x).unwrap().distance(&x) < 1e-12);
    }

    #[test]
    fn single_block_reduces_to_second_moment() {
        let mut rng = stream(2, domain::HAAR_MC, 0);
        let (a, b, x) = (random_hermitian(4, &mut rng), random_hermitian(4, &mut rng), random_hermitian(4, &mut rng));
        let one = block_second_moment(&[(a.clone(), b.clone())], &x).unwrap();
        assert!(one.distance(&second_moment(&a, &b, &x).unwrap()) < 1e-12);
    }

    #[test]
    fn second_moment_rejects_bad_shapes() {
        let one = CMatrix::identity(1);
        assert!(second_moment(&one, &one, &one).is_err());
        assert!(second_moment(&pauli::z(), &CMatrix::identity(4), &pauli::x()).is_err());
        let blocks = vec![(pauli::z(), pauli::z())];
        assert!(block_second_moment(&blocks, &CMatrix::identity(4)).is_err());
    }

    #[test]
    fn thm1_examples() {
        // A = Z⊗I, ψ = |00⟩, H = X⊗I: ⟨H⟩ = 0, ⟨H²⟩ = 1
        let a = CMatrix::embed_factor(&pauli::z(), &[2, 2], 0);
        let h = CMatrix::embed_factor(&pauli::x(), &[2, 2], 0);
        let psi = StateVector::zero(2);
        let v = thm1_variance_exact(&a, psi.amplitudes(), &h).unwrap();
        assert!((v.exact - 8.0 / 15.0).abs() < 1e-14);
        assert!(v.exact <= v.bound);
        let v = thm1_variance_exact(&CMatrix::identity(4), psi.amplitudes(), &h).unwrap();
        assert!(v.exact.abs() < 1e-14);
    }

    #[test]
    fn thm2_examples() {
        assert!((thm2_variance_bound(2, 2, 1.0, 4.0) - 4.0 / 9.0).abs() < 1e-15);
        assert!((thm2_variance_bound(1, 1, 1.0, 1.0) - 1.0).abs() < 1e-15);
        for xi in 1..8 {
            assert!(thm2_variance_bound(2, xi + 1, 1.0, 1.0) < thm2_variance_bound(2, xi, 1.0, 1.0));
        }
    }

    /// Exact variance of `i⟨ψ|[Ã, H]|ψ⟩` with `Ã = E†AE` through the dense
    /// block second moment.
    fn variance_via_moments(blocks: &[(CMatrix, CMatrix)], psi: &[C64], h: &CMatrix) -> f64 {
        let h_psi = h.matvec(psi);
        let term = |a: &[C64], b: &[C64], cc: &[C64], e: &[C64]| {
            let m = block_second_moment(blocks, &CMatrix::outer(b, cc)).unwrap();
            inner(a, &m.matvec(e))
        };
        let s = term(psi, &h_psi, psi, &h_psi) - term(psi, &h_psi, &h_psi, psi) * 2.0 + term(&h_psi, psi, &h_psi, psi);
        -s.re
    }

    #[test]
    fn block_variance_agrees_with_dense_moments() {
        let mut rng = stream(3, domain::HAAR_MC, 0);
        let layout = BlockLayout::new(2, 2).unwrap();
        let psi = StateVector::random(4, &mut rng);
        let h = random_hermitian(16, &mut rng);
        let terms = block_trace_terms(layout, psi.amplitudes(), &h.matvec(psi.amplitudes())).unwrap();
        assert!(terms[0].abs() < 1e-12);
        let z = CMatrix::embed_factor(&pauli::z(), &[2, 2], 1);
        let x = CMatrix::embed_factor(&pauli::x(), &[2, 2], 0);
        let cases = [
            (vec![(z.clone(), z.clone()), (CMatrix::identity(4), CMatrix::identity(4))], [false, true]),
            (vec![(CMatrix::identity(4), CMatrix::identity(4)), (x.clone(), x.clone())], [true, false]),
            (vec![(x.clone(), x.clone()), (z.clone(), z.clone())], [false, false]),
        ];
        for (blocks, identity) in cases {
            let factors: Vec<BlockFactor> = identity.iter().map(|&i| BlockFactor::pauli(4, i)).collect();
            let fast = block_haar_variance(layout, &factors, &terms).unwrap();
            let dense = variance_via_moments(&blocks, psi.amplitudes(), &h);
            assert!((fast - dense).abs() < 1e-10 * dense.abs().max(1.0), "{fast} vs {dense}");
        }
    }

    #[test]
    fn single_block_matches_global_formula() {
        let mut rng = stream(4, domain::HAAR_MC, 0);
        let layout = BlockLayout::new(3, 1).unwrap();
        let psi = StateVector::random(3, &mut rng);
        let h = random_hermitian(8, &mut rng);
        let h_psi = h.matvec(psi.amplitudes());
        let terms = block_trace_terms(layout, psi.amplitudes(), &h_psi).unwrap();
        let block = block_haar_variance(layout, &[BlockFactor::pauli(8, false)], &terms).unwrap();
        let global = global_haar_variance(8.0, 0.0, psi.amplitudes(), &h_psi);
        assert!((block - global.exact).abs() < 1e-12);
    }

    #[test]
    fn trace_terms_use_either_contraction_consistently() {
        // three blocks of one qubit: subsets hit both contraction branches
        let mut rng = stream(5, domain::HAAR_MC, 0);
        let layout = BlockLayout::new(1, 3).unwrap();
        let psi = StateVector::random(3, &mut rng);
        let h = random_hermitian(8, &mut rng);
        let h_psi = h.matvec(psi.amplitudes());
        let terms = block_trace_terms(layout, psi.amplitudes(), &h_psi).unwrap();
        let rho = CMatrix::outer(psi.amplitudes(), psi.amplitudes());
        let hrh = CMatrix::outer(&h_psi, &h_psi);
        let rh = CMatrix::outer(psi.amplitudes(), &h_psi);
        let hr = CMatrix::outer(&h_psi, psi.amplitudes());
        let dims = [2, 2, 2];
        let tr_embed = |m: &CMatrix, subset: usize| {
            let mut out = m.clone();
            for j in 0..3 {
                if subset >> j & 1 == 1 {
                    out = out.partial_trace(&dims, j).unwrap().embed_identity(&dims, j).unwrap();
                }
            }
            out
        };
        for (subset, t) in terms.iter().enumerate() {
            let dense = tr_embed(&rho, subset).trace_product(&hrh) + tr_embed(&hrh, subset).trace_product(&rho)
                - tr_embed(&rh, subset).trace_product(&rh)
                - tr_embed(&hr, subset).trace_product(&hr);
            assert!((dense.re - t).abs() < 1e-12 && dense.im.abs() < 1e-12);
        }
    }

    #[test]
    fn twirl_matches_monte_carlo() {
        let mut rng = stream(8, domain::HAAR_MC, 0);
        let m = random_hermitian(4, &mut rng);
        let exact = two_copy_twirl(&m, 2).unwrap();
        assert!((exact.trace() - m.trace()).norm() < 1e-12);
        let est = matrix_mean(50_000, &mut rng, |r| {
            let u = sample_haar_unitary(2, r).unwrap();
            let uu = u.kron(&u);
            uu.matmul(&m).matmul(&uu.adjoint())
        })
        .unwrap();
        assert!(est.mean.distance(&exact) < 4.0 * est.stderr);
    }

    #[test]
    fn first_moment_monte_carlo() {
        let mut rng = stream(6, domain::HAAR_MC, 0);
        let est = mc_first_moment(&pauli::z(), 100_000, &mut rng).unwrap();
        assert!(est.mean.frobenius_norm() < 5e-3);
    }

    #[test]
    fn block_moment_monte_carlo() {
        let mut rng = stream(7, domain::HAAR_MC, 0);
        let blocks = vec![(pauli::z(), pauli::z()), (pauli::x(), pauli::y())];
        let x = ket0_projector(4);
        let est = mc_block_second_moment(&blocks, &x, 200_000, &mut rng).unwrap();
        let exact = block_second_moment(&blocks, &x).unwrap();
        let err = est.mean.distance(&exact);
        assert!(err < 5e-3 && err < 4.0 * est.stderr, "{err} vs stderr {}", est.stderr);
    }
}
