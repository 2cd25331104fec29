//! Exact density-matrix simulation of up to three entangled pairs
//! (six qubits, 64-dimensional), used as ground truth for the label-level
//! modules and to verify the channel identities the protocol analysis
//! relies on: dark-Bell/bi-CNOT commutation, collective/dark commutation,
//! fidelity invariance of the dark Bell measurement, and the
//! outcome-averaged trash-measurement identity.
//!
//! Qubit layout: pair `p` owns qubits `2p` (Alice) and `2p+1` (Bob), with
//! qubit 0 the most significant bit of a basis index. A product of
//! per-pair Bell states is therefore a Kronecker product in pair order.

use crate::bell::{parity, Basis, BellLabel, CnotBasis, Parity};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use thiserror::Error;

type CMat = DMatrix<Complex64>;
type CVec = DVector<Complex64>;

/// Hermiticity and unit-trace tolerance for state validation.
pub const STATE_TOL: f64 = 1e-12;
/// States are accepted as positive semidefinite down to this eigenvalue.
pub const PSD_EIG_TOL: f64 = -1e-10;
/// Tolerance for the analytic channel identities the verifiers check.
pub const CHANNEL_TOL: f64 = 1e-10;

/// Largest pair count the oracle simulates. Every claim it verifies is a
/// statement about one two-pair group plus at most one environment pair.
pub const MAX_PAIRS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("pair count {0} outside 1..={MAX_PAIRS}")]
    PairCountUnsupported(usize),
    #[error("matrix dimension {got} does not match {want} for the pair count")]
    DimensionMismatch { got: usize, want: usize },
    #[error("matrix is not Hermitian (max asymmetry {0:e})")]
    NotHermitian(f64),
    #[error("trace {0} is not 1")]
    TraceNotOne(f64),
    #[error("matrix has negative eigenvalue {0:e}")]
    NotPositive(f64),
    #[error("pair index {index} out of range for {pairs} pairs")]
    PairIndexOutOfRange { index: usize, pairs: usize },
    #[error("control and destination pair must differ")]
    SamePair,
    #[error("keep set must be a non-empty subset of pair indices")]
    BadKeepSet,
}

/// Density matrix over `num_pairs` entangled pairs, validated Hermitian,
/// unit-trace, and positive semidefinite on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    pairs: usize,
    mat: CMat,
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

fn identity(dim: usize) -> CMat {
    CMat::identity(dim, dim)
}

/// Single-qubit ket of outcome `bit` in the given basis.
fn basis_ket(basis: Basis, bit: bool) -> CVec {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let (a, b) = match (basis, bit) {
        (Basis::Z, false) => (c(1.0), c(0.0)),
        (Basis::Z, true) => (c(0.0), c(1.0)),
        (Basis::X, false) => (c(s), c(s)),
        (Basis::X, true) => (c(s), c(-s)),
        (Basis::Y, false) => (c(s), Complex64::new(0.0, s)),
        (Basis::Y, true) => (c(s), Complex64::new(0.0, -s)),
    };
    CVec::from_vec(vec![a, b])
}

/// Four-dimensional ket of one Bell state, Alice's qubit most significant.
pub fn bell_ket(label: BellLabel) -> CVec {
    let s = c(std::f64::consts::FRAC_1_SQRT_2);
    let (i0, i1) = if label.flip { (1, 2) } else { (0, 3) };
    let mut v = CVec::zeros(4);
    v[i0] = s;
    v[i1] = if label.phase { -s } else { s };
    v
}

/// Product ket of per-pair Bell states.
pub fn bell_product_ket(labels: &[BellLabel]) -> CVec {
    let mut v = CVec::from_vec(vec![c(1.0)]);
    for &label in labels {
        v = v.kronecker(&bell_ket(label));
    }
    v
}

fn projector(ket: &CVec) -> CMat {
    ket * ket.adjoint()
}

/// Embeds a single-qubit operator at qubit `q` of an `nq`-qubit register.
fn embed_qubit_op(op: &CMat, q: usize, nq: usize) -> CMat {
    let left = identity(1 << q);
    let right = identity(1 << (nq - q - 1));
    kron(&kron(&left, op), &right)
}

/// Embeds a two-qubit (4x4) operator at the adjacent qubits of pair `p`.
fn embed_pair_op(op: &CMat, pair: usize, pairs: usize) -> CMat {
    let left = identity(1 << (2 * pair));
    let right = identity(1 << (2 * (pairs - pair - 1)));
    kron(&kron(&left, op), &right)
}

/// CNOT permutation matrix on `nq` qubits, qubit 0 most significant.
fn cnot_matrix(nq: usize, control: usize, target: usize) -> CMat {
    let dim = 1usize << nq;
    let cbit = nq - 1 - control;
    let tbit = nq - 1 - target;
    let mut m = CMat::zeros(dim, dim);
    for i in 0..dim {
        let j = if i >> cbit & 1 == 1 { i ^ (1 << tbit) } else { i };
        m[(j, i)] = c(1.0);
    }
    m
}

fn hadamard() -> CMat {
    let s = c(std::f64::consts::FRAC_1_SQRT_2);
    CMat::from_row_slice(2, 2, &[s, s, s, -s])
}

/// Change-of-basis matrix whose columns are the product Bell kets in
/// label-index order, pair 0 most significant.
fn bell_basis_matrix(pairs: usize) -> CMat {
    let dim = 4usize.pow(pairs as u32);
    let mut u = CMat::zeros(dim, dim);
    let mut labels = vec![BellLabel::PHI_PLUS; pairs];
    for col in 0..dim {
        let mut rest = col;
        for p in (0..pairs).rev() {
            labels[p] = BellLabel::from_byte((rest % 4) as u8).unwrap();
            rest /= 4;
        }
        u.set_column(col, &bell_product_ket(&labels));
    }
    u
}

/// Parity projector (4x4) of one pair in the given basis.
fn pair_parity_projector(basis: Basis, wanted: Parity) -> CMat {
    let mut p = CMat::zeros(4, 4);
    for label in BellLabel::ALL {
        if parity(label, basis) == wanted {
            p += projector(&bell_ket(label));
        }
    }
    p
}

fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

impl DenseState {
    /// Validates and wraps a density matrix.
    pub fn try_new(pairs: usize, mat: CMat) -> Result<Self, OracleError> {
        if pairs == 0 || pairs > MAX_PAIRS {
            return Err(OracleError::PairCountUnsupported(pairs));
        }
        let dim = 4usize.pow(pairs as u32);
        if mat.nrows() != dim || mat.ncols() != dim {
            return Err(OracleError::DimensionMismatch { got: mat.nrows(), want: dim });
        }
        let asym = max_abs(&(&mat - mat.adjoint()));
        if asym > STATE_TOL {
            return Err(OracleError::NotHermitian(asym));
        }
        let trace = mat.trace();
        if (trace.re - 1.0).abs() > STATE_TOL || trace.im.abs() > STATE_TOL {
            return Err(OracleError::TraceNotOne(trace.re));
        }
        let min_eig = mat
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_eig < PSD_EIG_TOL {
            return Err(OracleError::NotPositive(min_eig));
        }
        Ok(DenseState { pairs, mat })
    }

    fn wrap(pairs: usize, mat: CMat) -> Self {
        DenseState { pairs, mat }
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    /// Pure state from a ket, which must be normalized.
    pub fn from_ket(pairs: usize, ket: &CVec) -> Result<Self, OracleError> {
        DenseState::try_new(pairs, projector(ket))
    }

    /// Product of per-pair Bell states.
    pub fn bell_product(labels: &[BellLabel]) -> Result<Self, OracleError> {
        if labels.is_empty() || labels.len() > MAX_PAIRS {
            return Err(OracleError::PairCountUnsupported(labels.len()));
        }
        DenseState::from_ket(labels.len(), &bell_product_ket(labels))
    }

    /// Bell-diagonal mixture of the four states of a single pair.
    pub fn bell_diagonal(weights: [f64; 4]) -> Result<Self, OracleError> {
        let mut m = CMat::zeros(4, 4);
        for label in BellLabel::ALL {
            m += projector(&bell_ket(label)) * c(weights[label.index()]);
        }
        DenseState::try_new(1, m)
    }

    /// Haar-like random pure state: a normalized vector of independent
    /// standard complex Gaussians.
    pub fn random_pure<R: Rng + ?Sized>(pairs: usize, rng: &mut R) -> Self {
        let dim = 4usize.pow(pairs as u32);
        let mut v = CVec::zeros(dim);
        for entry in v.iter_mut() {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            *entry = Complex64::new(re, im);
        }
        let norm = v.norm();
        v /= c(norm);
        DenseState::wrap(pairs, projector(&v))
    }

    /// Random mixed state obtained by tracing an auxiliary pair out of a
    /// random pure state on `pairs + 1` pairs.
    pub fn random_mixed<R: Rng + ?Sized>(pairs: usize, rng: &mut R) -> Self {
        assert!(pairs < MAX_PAIRS, "auxiliary pair would exceed the size cap");
        let keep: Vec<usize> = (0..pairs).collect();
        DenseState::random_pure(pairs + 1, rng)
            .partial_trace(&keep)
            .expect("trace of a valid random state")
    }

    /// Overlap with the product of perfect pairs, <Phi| rho |Phi>.
    pub fn fidelity(&self) -> f64 {
        let phi = bell_product_ket(&vec![BellLabel::PHI_PLUS; self.pairs]);
        (phi.adjoint() * &self.mat * &phi)[(0, 0)].re
    }

    /// Bell measurement of every pair with the outcome discarded:
    /// projects onto the product-Bell-diagonal, removing all off-diagonal
    /// terms in the Bell basis.
    pub fn dark_bell_measure(&self) -> DenseState {
        let u = bell_basis_matrix(self.pairs);
        let in_bell = u.adjoint() * &self.mat * &u;
        let mut diag = CMat::zeros(self.dim(), self.dim());
        for i in 0..self.dim() {
            diag[(i, i)] = c(in_bell[(i, i)].re);
        }
        DenseState::wrap(self.pairs, &u * diag * u.adjoint())
    }

    /// Conjugates by the literal two-sided CNOT unitary: one CNOT on each
    /// party's qubits, control pair to destination pair; the X-basis
    /// variant is conjugated by Hadamards on all four involved qubits.
    pub fn apply_bicnot(
        &self,
        control_pair: usize,
        dest_pair: usize,
        basis: CnotBasis,
    ) -> Result<DenseState, OracleError> {
        self.check_pair(control_pair)?;
        self.check_pair(dest_pair)?;
        if control_pair == dest_pair {
            return Err(OracleError::SamePair);
        }
        let nq = 2 * self.pairs;
        let alice = cnot_matrix(nq, 2 * control_pair, 2 * dest_pair);
        let bob = cnot_matrix(nq, 2 * control_pair + 1, 2 * dest_pair + 1);
        let mut u = alice * bob;
        if basis == CnotBasis::X {
            let h = hadamard();
            let mut wall = identity(1 << nq);
            for q in [
                2 * control_pair,
                2 * control_pair + 1,
                2 * dest_pair,
                2 * dest_pair + 1,
            ] {
                wall = embed_qubit_op(&h, q, nq) * wall;
            }
            u = &wall * u * &wall;
        }
        Ok(DenseState::wrap(self.pairs, &u * &self.mat * u.adjoint()))
    }

    /// Two-outcome projective parity measurement of one pair in basis `w`.
    /// Returns both branches with their Born probabilities; a
    /// zero-probability branch carries probability 0 and the maximally
    /// mixed placeholder state.
    pub fn measure_collective(
        &self,
        pair: usize,
        w: Basis,
    ) -> Result<[(Parity, f64, DenseState); 2], OracleError> {
        self.check_pair(pair)?;
        let outcomes = [Parity::ZERO, Parity::ONE].map(|outcome| {
            let p = embed_pair_op(&pair_parity_projector(w, outcome), pair, self.pairs);
            let (prob, post) = self.project(&p);
            (outcome, prob, post)
        });
        Ok(outcomes)
    }

    /// Four-outcome local product measurement of one pair in basis `w`,
    /// outcomes ordered (a, b) = (0,0), (0,1), (1,0), (1,1). Its parity
    /// marginal (with the Y-basis convention flip) reproduces
    /// [`DenseState::measure_collective`] exactly.
    pub fn measure_local(
        &self,
        pair: usize,
        w: Basis,
    ) -> Result<[((bool, bool), f64, DenseState); 4], OracleError> {
        self.check_pair(pair)?;
        let outcomes = [(false, false), (false, true), (true, false), (true, true)].map(|(a, b)| {
            let op = kron(
                &projector(&basis_ket(w, a)),
                &projector(&basis_ket(w, b)),
            );
            let m = embed_pair_op(&op, pair, self.pairs);
            let (prob, post) = self.project(&m);
            ((a, b), prob, post)
        });
        Ok(outcomes)
    }

    /// Applies the outcome-averaged (unread) version of a projective
    /// measurement given its complete projector set.
    fn average_over(&self, projectors: &[CMat]) -> DenseState {
        let mut acc = CMat::zeros(self.dim(), self.dim());
        for p in projectors {
            acc += p * &self.mat * p;
        }
        DenseState::wrap(self.pairs, acc)
    }

    /// Outcome-averaged local measurement of one pair.
    pub fn average_local_measure(&self, pair: usize, w: Basis) -> Result<DenseState, OracleError> {
        self.check_pair(pair)?;
        let projectors: Vec<CMat> = [(false, false), (false, true), (true, false), (true, true)]
            .iter()
            .map(|&(a, b)| {
                let op = kron(&projector(&basis_ket(w, a)), &projector(&basis_ket(w, b)));
                embed_pair_op(&op, pair, self.pairs)
            })
            .collect();
        Ok(self.average_over(&projectors))
    }

    /// Outcome-averaged collective parity measurement of one pair.
    pub fn average_collective_measure(
        &self,
        pair: usize,
        w: Basis,
    ) -> Result<DenseState, OracleError> {
        self.check_pair(pair)?;
        let projectors: Vec<CMat> = [Parity::ZERO, Parity::ONE]
            .iter()
            .map(|&outcome| embed_pair_op(&pair_parity_projector(w, outcome), pair, self.pairs))
            .collect();
        Ok(self.average_over(&projectors))
    }

    /// Two-outcome projective measurement {|00><00|, 1 - |00><00|} of one
    /// pair. Unlike the parity measurements, its projectors are
    /// Bell-off-diagonal, so it fails to commute with the dark Bell
    /// measurement; it exists as the counterexample measurement for the
    /// checker's negative fixtures.
    pub fn measure_proj00(&self, pair: usize) -> Result<[(f64, DenseState); 2], OracleError> {
        self.check_pair(pair)?;
        let mut ket = CVec::zeros(4);
        ket[0] = c(1.0);
        let p00 = embed_pair_op(&projector(&ket), pair, self.pairs);
        let rest = identity(self.dim()) - &p00;
        Ok([p00, rest].map(|p| self.project(&p)))
    }

    /// Partial trace keeping the listed pairs (ascending order preserved).
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DenseState, OracleError> {
        let mut keep = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        if keep.is_empty() || keep.len() > self.pairs || *keep.last().unwrap() >= self.pairs {
            return Err(OracleError::BadKeepSet);
        }
        if keep.len() == self.pairs {
            return Ok(self.clone());
        }
        let traced: Vec<usize> = (0..self.pairs).filter(|p| !keep.contains(p)).collect();
        let out_pairs = keep.len();
        let out_dim = 4usize.pow(out_pairs as u32);
        let mut out = CMat::zeros(out_dim, out_dim);
        let digits = |index: usize| -> Vec<usize> {
            let mut d = vec![0; self.pairs];
            let mut rest = index;
            for p in (0..self.pairs).rev() {
                d[p] = rest % 4;
                rest /= 4;
            }
            d
        };
        let compose = |d: &[usize], set: &[usize]| -> usize {
            set.iter().fold(0, |acc, &p| acc * 4 + d[p])
        };
        for i in 0..self.dim() {
            let di = digits(i);
            for j in 0..self.dim() {
                let dj = digits(j);
                if compose(&di, &traced) == compose(&dj, &traced) {
                    out[(compose(&di, &keep), compose(&dj, &keep))] += self.mat[(i, j)];
                }
            }
        }
        Ok(DenseState::wrap(out_pairs, out))
    }

    /// Trace distance (half the trace norm of the difference).
    pub fn trace_distance(&self, other: &DenseState) -> f64 {
        let diff = &self.mat - &other.mat;
        0.5 * diff.symmetric_eigenvalues().iter().map(|e| e.abs()).sum::<f64>()
    }

    /// Largest absolute entry of the difference, a cheap metric for the
    /// exact channel identities.
    pub fn max_entry_distance(&self, other: &DenseState) -> f64 {
        max_abs(&(&self.mat - &other.mat))
    }

    /// Re-runs construction validation; all channels here preserve it.
    pub fn revalidate(&self) -> Result<(), OracleError> {
        DenseState::try_new(self.pairs, self.mat.clone()).map(|_| ())
    }

    fn check_pair(&self, pair: usize) -> Result<(), OracleError> {
        if pair >= self.pairs {
            return Err(OracleError::PairIndexOutOfRange { index: pair, pairs: self.pairs });
        }
        Ok(())
    }

    fn project(&self, projector: &CMat) -> (f64, DenseState) {
        let prob = (projector * &self.mat).trace().re.max(0.0);
        if prob < 1e-15 {
            let dim = self.dim();
            let placeholder = identity(dim) * c(1.0 / dim as f64);
            return (0.0, DenseState::wrap(self.pairs, placeholder));
        }
        let post = projector * &self.mat * projector / c(prob);
        (prob, DenseState::wrap(self.pairs, post))
    }
}

/// Outcome of one numeric verification claim, serialized as JSON by the
/// command-line frontend.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub claim: String,
    pub trials: usize,
    pub max_deviation: f64,
    pub pass: bool,
}

impl VerifyReport {
    fn new(claim: &str, trials: usize, max_deviation: f64) -> Self {
        VerifyReport {
            claim: claim.to_string(),
            trials,
            max_deviation,
            pass: max_deviation < CHANNEL_TOL,
        }
    }
}

fn commutation_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

/// Random two-pair states, alternating pure and mixed.
fn random_two_pair_states<R: Rng>(trials: usize, rng: &mut R) -> Vec<DenseState> {
    (0..trials)
        .map(|t| {
            if t % 2 == 0 {
                DenseState::random_pure(2, rng)
            } else {
                DenseState::random_mixed(2, rng)
            }
        })
        .collect()
}

/// Verifies, on random two-pair states, that (a) the two orderings of
/// bi-CNOT and dark Bell measurement agree once a dark measurement
/// terminates both, (b) collective parity measurements commute with the
/// dark Bell measurement in distribution and post-state, and (c) the dark
/// Bell measurement leaves the fidelity unchanged.
pub fn verify_commutation(trial_count: usize, seed: u64) -> Vec<VerifyReport> {
    let mut rng = commutation_rng(seed);
    let states = random_two_pair_states(trial_count, &mut rng);

    let mut dev_bicnot = 0.0f64;
    let mut dev_collective = 0.0f64;
    let mut dev_fidelity = 0.0f64;

    for rho in &states {
        let dark_first = rho.dark_bell_measure();
        for basis in [CnotBasis::Z, CnotBasis::X] {
            for (cp, dp) in [(0usize, 1usize), (1, 0)] {
                let lhs = dark_first.apply_bicnot(cp, dp, basis).unwrap().dark_bell_measure();
                let rhs = rho.apply_bicnot(cp, dp, basis).unwrap().dark_bell_measure();
                dev_bicnot = dev_bicnot.max(lhs.max_entry_distance(&rhs));
            }
        }
        for pair in 0..2 {
            for w in Basis::ALL {
                let before = dark_first.measure_collective(pair, w).unwrap();
                let after = rho.measure_collective(pair, w).unwrap();
                for ((_, p1, post1), (_, p2, post2)) in before.iter().zip(after.iter()) {
                    dev_collective = dev_collective.max((p1 - p2).abs());
                    if *p1 > 1e-9 && *p2 > 1e-9 {
                        let dark_post2 = post2.dark_bell_measure();
                        dev_collective =
                            dev_collective.max(post1.max_entry_distance(&dark_post2));
                    }
                }
            }
        }
        dev_fidelity = dev_fidelity.max((dark_first.fidelity() - rho.fidelity()).abs());
    }

    vec![
        VerifyReport::new(
            "bi-CNOT and dark Bell measurement commute (dark-terminated orderings)",
            trial_count,
            dev_bicnot,
        ),
        VerifyReport::new(
            "collective parity measurements commute with dark Bell measurement",
            trial_count,
            dev_collective,
        ),
        VerifyReport::new(
            "dark Bell measurement preserves fidelity",
            trial_count,
            dev_fidelity,
        ),
    ]
}

/// Verifies on random three-pair states (kept pair 0, trash pair 1,
/// environment pair 2) that the outcome-averaged measurement of the trash
/// pair leaves the kept pair's reduced state unchanged, for both local
/// product measurements and their collective coarse-graining.
pub fn verify_step4prime(trial_count: usize, seed: u64) -> Vec<VerifyReport> {
    let mut rng = commutation_rng(seed);

    let mut dev_local = 0.0f64;
    let mut dev_collective = 0.0f64;

    for t in 0..trial_count {
        let rho = if t % 4 == 3 {
            // Occasional rank-2 mixture for coverage beyond pure inputs.
            let a = DenseState::random_pure(3, &mut rng);
            let b = DenseState::random_pure(3, &mut rng);
            DenseState::wrap(3, a.matrix() * c(0.5) + b.matrix() * c(0.5))
        } else {
            DenseState::random_pure(3, &mut rng)
        };
        let kept_before = rho.partial_trace(&[0]).unwrap();
        for w in Basis::ALL {
            let kept_local = rho.average_local_measure(1, w).unwrap().partial_trace(&[0]).unwrap();
            dev_local = dev_local.max(kept_before.trace_distance(&kept_local));
            let kept_coll = rho
                .average_collective_measure(1, w)
                .unwrap()
                .partial_trace(&[0])
                .unwrap();
            dev_collective = dev_collective.max(kept_before.trace_distance(&kept_coll));
        }
    }

    vec![
        VerifyReport::new(
            "outcome-averaged local trash measurement preserves the kept reduced state",
            trial_count,
            dev_local,
        ),
        VerifyReport::new(
            "outcome-averaged collective trash measurement preserves the kept reduced state",
            trial_count,
            dev_collective,
        ),
    ]
}
