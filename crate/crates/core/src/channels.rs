//! Channels and generators: Kraus, superoperator and Choi representations,
//! complete-positivity checks, and the Schrödinger and Heisenberg actions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    self, apply_superop, c64, eigh, expm, identity, sandwich_superop, unvec, vec, C64, CMatrix,
    CVector, IM, ONE,
};
use crate::tolerance::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeKind {
    Discrete,
    Continuous,
}

/// A positive semidefinite, unit-trace matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Validates hermiticity, positivity and normalization against `tol`.
    pub fn new(matrix: CMatrix, tol: &Tolerances) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::dim("density matrix must be square and non-empty"));
        }
        if !linalg::all_finite(&matrix) {
            return Err(Error::invalid("density matrix has non-finite entries"));
        }
        let herm = linalg::hermiticity_defect(&matrix);
        if herm > tol.herm {
            return Err(Error::invalid(format!(
                "density matrix is not Hermitian (defect {herm:.3e})"
            )));
        }
        let matrix = linalg::hermitian_part(&matrix);
        let min = eigh(&matrix).min();
        if min < -tol.psd {
            return Err(Error::invalid(format!(
                "density matrix is not positive (eigenvalue {min:.3e})"
            )));
        }
        let tr = matrix.trace();
        if (tr - ONE).norm() > tol.trace {
            return Err(Error::invalid(format!(
                "density matrix trace {:.12} is not 1",
                tr.re
            )));
        }
        Ok(DensityMatrix { matrix })
    }

    /// Hermitize and rescale a nearly valid state, clamping tiny negative
    /// eigenvalues. Fails if positivity is violated beyond `tol.psd`.
    pub fn normalized(matrix: &CMatrix, tol: &Tolerances) -> Result<Self> {
        let h = linalg::hermitian_part(matrix);
        let tr = h.trace().re;
        if !(tr > 0.0) {
            return Err(Error::invalid("matrix has non-positive trace"));
        }
        let h = h / c64(tr, 0.0);
        let eig = eigh(&h);
        if eig.min() < -tol.psd {
            return Err(Error::invalid(format!(
                "matrix is not positive (eigenvalue {:.3e})",
                eig.min()
            )));
        }
        Ok(DensityMatrix { matrix: h })
    }

    pub fn pure(psi: &CVector) -> Self {
        let n = psi.norm();
        let v = psi / c64(n, 0.0);
        DensityMatrix {
            matrix: &v * v.adjoint(),
        }
    }

    /// `|k⟩⟨k|` on `ℂⁿ` (0-based).
    pub fn basis_state(n: usize, k: usize) -> Self {
        DensityMatrix {
            matrix: linalg::unit(n, k, k),
        }
    }

    pub fn maximally_mixed(n: usize) -> Self {
        DensityMatrix {
            matrix: identity(n) / c64(n as f64, 0.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }
}

/// Outcome of a complete-positivity and trace-preservation check.
///
/// For generators `cp` refers to conditional complete positivity and
/// `tp_defect` to `‖𝓛†(𝟙)‖_F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub cp: bool,
    pub tp: bool,
    pub min_choi_eig: f64,
    pub tp_defect: f64,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.cp && self.tp
    }
}

/// A semigroup given by its one-step channel or its generator.
pub trait Dynamics: Send + Sync {
    fn dim(&self) -> usize;

    /// The `N² × N²` matrix of the channel or generator.
    fn superop(&self) -> &CMatrix;

    fn time_kind(&self) -> TimeKind;

    fn verify(&self, tol: f64) -> VerificationReport;

    /// Unchecked Schrödinger-picture action.
    fn act(&self, x: &CMatrix) -> CMatrix {
        apply_superop(self.superop(), x)
    }

    /// Unchecked Heisenberg-picture action.
    fn act_adjoint(&self, a: &CMatrix) -> CMatrix {
        unvec(&(self.superop().adjoint() * vec(a)), a.nrows())
    }

    /// `T(X)` for a channel, `𝓛(X)` for a generator.
    fn apply(&self, x: &CMatrix) -> Result<CMatrix> {
        check_square(x, self.dim())?;
        Ok(self.act(x))
    }

    /// `T†(A)` with `Tr(T†(A) ρ) = Tr(A T(ρ))`.
    fn apply_adjoint(&self, a: &CMatrix) -> Result<CMatrix> {
        check_square(a, self.dim())?;
        Ok(self.act_adjoint(a))
    }

    /// Operator whose nullspace is the set of stationary matrices:
    /// `S − 𝟙` in discrete time, `𝓛` in continuous time.
    fn stationarity_operator(&self) -> CMatrix {
        match self.time_kind() {
            TimeKind::Discrete => self.superop() - identity(self.superop().nrows()),
            TimeKind::Continuous => self.superop().clone(),
        }
    }

    /// `‖T(X) − X‖_F` or `‖𝓛(X)‖_F`.
    fn stationarity_defect(&self, x: &CMatrix) -> f64 {
        let y = self.act(x);
        match self.time_kind() {
            TimeKind::Discrete => (y - x).norm(),
            TimeKind::Continuous => y.norm(),
        }
    }

    /// Whether `lambda` lies on the unit circle (discrete) or the imaginary
    /// axis (continuous) within `tol`.
    fn is_peripheral(&self, lambda: C64, tol: f64) -> bool {
        match self.time_kind() {
            TimeKind::Discrete => (lambda.norm() - 1.0).abs() <= tol,
            TimeKind::Continuous => lambda.re.abs() <= tol,
        }
    }

    /// Whether `lambda` is the stationary eigenvalue (1 or 0).
    fn is_stationary_eigenvalue(&self, lambda: C64, tol: f64) -> bool {
        match self.time_kind() {
            TimeKind::Discrete => (lambda - ONE).norm() <= tol,
            TimeKind::Continuous => lambda.norm() <= tol,
        }
    }

    /// Channel advancing the state by one time unit (`dt` for generators).
    fn step_channel(&self, dt: f64) -> Result<QuantumChannel>;
}

fn check_square(x: &CMatrix, n: usize) -> Result<()> {
    if x.nrows() != n || x.ncols() != n {
        return Err(Error::dim(format!(
            "expected a {n}×{n} matrix, got {}×{}",
            x.nrows(),
            x.ncols()
        )));
    }
    Ok(())
}

fn check_kraus_family(mats: &[CMatrix], what: &str) -> Result<usize> {
    let first = mats
        .first()
        .ok_or_else(|| Error::invalid(format!("empty {what} list")))?;
    let n = first.nrows();
    if n == 0 {
        return Err(Error::dim(format!("{what} matrices must be non-empty")));
    }
    for (k, m) in mats.iter().enumerate() {
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::dim(format!(
                "{what} {k} is {}×{}, expected {n}×{n}",
                m.nrows(),
                m.ncols()
            )));
        }
        if !linalg::all_finite(m) {
            return Err(Error::invalid(format!("{what} {k} has non-finite entries")));
        }
    }
    Ok(n)
}

/// `Σₖ conj(Kₖ) ⊗ Kₖ`, the superoperator of `ρ ↦ Σₖ Kₖ ρ Kₖ†`.
pub fn kraus_to_superop(kraus: &[CMatrix]) -> Result<CMatrix> {
    let n = check_kraus_family(kraus, "Kraus operator")?;
    let mut s = CMatrix::zeros(n * n, n * n);
    for k in kraus {
        s += sandwich_superop(k, &k.adjoint());
    }
    Ok(s)
}

/// Choi matrix `Σ_{ij} |i⟩⟨j| ⊗ T(|i⟩⟨j|)` of a superoperator.
pub fn choi_from_superop(s: &CMatrix) -> Result<CMatrix> {
    let n = superop_dim(s)?;
    let mut c = CMatrix::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            // column of S for vec(|i⟩⟨j|) is j·n + i
            let col = s.column(j * n + i);
            for b in 0..n {
                for a in 0..n {
                    c[(i * n + a, j * n + b)] = col[b * n + a];
                }
            }
        }
    }
    Ok(c)
}

/// Inverse of [`choi_from_superop`].
pub fn superop_from_choi(c: &CMatrix) -> Result<CMatrix> {
    let n = superop_dim(c)?;
    let mut s = CMatrix::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            for b in 0..n {
                for a in 0..n {
                    s[(b * n + a, j * n + i)] = c[(i * n + a, j * n + b)];
                }
            }
        }
    }
    Ok(s)
}

/// Kraus operators from the eigendecomposition of the Choi matrix.
///
/// Eigenvalues below `tol_psd` are discarded; an eigenvalue below
/// `−tol_psd` means the map is not completely positive.
pub fn kraus_from_superop(s: &CMatrix, tol_psd: f64) -> Result<Vec<CMatrix>> {
    let n = superop_dim(s)?;
    let c = choi_from_superop(s)?;
    if linalg::hermiticity_defect(&c) > 1e-8 * c.norm().max(1.0) {
        return Err(Error::NotCompletelyPositive(f64::NAN));
    }
    let eig = eigh(&c);
    if eig.min() < -tol_psd {
        return Err(Error::NotCompletelyPositive(eig.min()));
    }
    let mut kraus = Vec::new();
    for k in (0..eig.values.len()).rev() {
        let mu = eig.values[k];
        if mu <= tol_psd {
            continue;
        }
        let u = eig.vectors.column(k).into_owned();
        kraus.push(unvec(&u, n) * c64(mu.sqrt(), 0.0));
    }
    Ok(kraus)
}

fn superop_dim(s: &CMatrix) -> Result<usize> {
    if s.nrows() != s.ncols() {
        return Err(Error::dim("superoperator must be square"));
    }
    let n = linalg::exact_sqrt(s.nrows())
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::dim(format!("{} is not a perfect square", s.nrows())))?;
    if !linalg::all_finite(s) {
        return Err(Error::invalid("superoperator has non-finite entries"));
    }
    Ok(n)
}

/// A discrete-time channel, stored as a superoperator and (when the map is
/// completely positive) a Kraus family.
#[derive(Debug, Clone)]
pub struct QuantumChannel {
    dim: usize,
    kraus: Vec<CMatrix>,
    superop: CMatrix,
}

impl QuantumChannel {
    /// Trace preservation is not required here; see [`verify_cptp`].
    pub fn from_kraus(kraus: Vec<CMatrix>) -> Result<Self> {
        let superop = kraus_to_superop(&kraus)?;
        Ok(QuantumChannel {
            dim: kraus[0].nrows(),
            kraus,
            superop,
        })
    }

    /// Builds a channel from its superoperator. The Kraus family is
    /// extracted when the map is completely positive, otherwise left empty.
    pub fn from_superop(superop: CMatrix) -> Result<Self> {
        let dim = superop_dim(&superop)?;
        let kraus = kraus_from_superop(&superop, Tolerances::default().psd).unwrap_or_default();
        Ok(QuantumChannel {
            dim,
            kraus,
            superop,
        })
    }

    pub fn from_choi(choi: &CMatrix) -> Result<Self> {
        Self::from_superop(superop_from_choi(choi)?)
    }

    pub fn kraus(&self) -> &[CMatrix] {
        &self.kraus
    }

    pub fn choi(&self) -> CMatrix {
        choi_from_superop(&self.superop).expect("validated superoperator")
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn after(&self, first: &QuantumChannel) -> Result<QuantumChannel> {
        if self.dim != first.dim {
            return Err(Error::dim("composing channels of different dimension"));
        }
        Self::from_superop(&self.superop * &first.superop)
    }

    /// Superoperator of `T^t`.
    pub fn power(&self, t: u32) -> CMatrix {
        let mut acc = identity(self.superop.nrows());
        let mut base = self.superop.clone();
        let mut e = t;
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            base = &base * &base;
            e >>= 1;
        }
        acc
    }
}

impl Dynamics for QuantumChannel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn superop(&self) -> &CMatrix {
        &self.superop
    }

    fn time_kind(&self) -> TimeKind {
        TimeKind::Discrete
    }

    fn verify(&self, tol: f64) -> VerificationReport {
        verify_cptp(self, tol)
    }

    fn step_channel(&self, _dt: f64) -> Result<QuantumChannel> {
        Ok(self.clone())
    }
}

/// Complete positivity from the Choi spectrum, trace preservation from
/// `Σ Kₖ†Kₖ` (or `T†(𝟙)` when no Kraus family is stored).
pub fn verify_cptp(channel: &QuantumChannel, tol: f64) -> VerificationReport {
    let n = channel.dim;
    let choi = channel.choi();
    let herm = linalg::hermiticity_defect(&choi);
    let min_choi_eig = eigh(&choi).min();
    let gram = if channel.kraus.is_empty() {
        channel.act_adjoint(&identity(n))
    } else {
        channel
            .kraus
            .iter()
            .fold(CMatrix::zeros(n, n), |acc, k| acc + k.adjoint() * k)
    };
    let tp_defect = (gram - identity(n)).norm();
    VerificationReport {
        cp: herm <= tol && min_choi_eig >= -tol,
        tp: tp_defect <= tol,
        min_choi_eig,
        tp_defect,
    }
}

/// A GKS–Lindblad generator
/// `𝓛(ρ) = −i[H,ρ] + Σₖ (LₖρLₖ† − ½{Lₖ†Lₖ, ρ})`.
#[derive(Debug, Clone)]
pub struct LindbladGenerator {
    dim: usize,
    hamiltonian: CMatrix,
    jumps: Vec<CMatrix>,
    superop: CMatrix,
    explicit: bool,
}

impl LindbladGenerator {
    pub fn new(hamiltonian: CMatrix, jumps: Vec<CMatrix>, tol: &Tolerances) -> Result<Self> {
        let superop = lindblad_superop(&hamiltonian, &jumps, tol)?;
        Ok(LindbladGenerator {
            dim: hamiltonian.nrows(),
            hamiltonian,
            jumps,
            superop,
            explicit: true,
        })
    }

    /// A generator given only as a superoperator. No Hamiltonian or jump
    /// operators are recovered.
    pub fn from_superop(superop: CMatrix) -> Result<Self> {
        let dim = superop_dim(&superop)?;
        Ok(LindbladGenerator {
            dim,
            hamiltonian: CMatrix::zeros(dim, dim),
            jumps: vec![],
            superop,
            explicit: false,
        })
    }

    pub fn hamiltonian(&self) -> Option<&CMatrix> {
        self.explicit.then_some(&self.hamiltonian)
    }

    pub fn jumps(&self) -> &[CMatrix] {
        &self.jumps
    }

    pub fn has_explicit_form(&self) -> bool {
        self.explicit
    }
}

impl Dynamics for LindbladGenerator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn superop(&self) -> &CMatrix {
        &self.superop
    }

    fn time_kind(&self) -> TimeKind {
        TimeKind::Continuous
    }

    fn verify(&self, tol: f64) -> VerificationReport {
        verify_generator(self, tol)
    }

    fn step_channel(&self, dt: f64) -> Result<QuantumChannel> {
        exp_generator(self, dt)
    }
}

/// Superoperator of the GKS–Lindblad form.
pub fn lindblad_superop(h: &CMatrix, jumps: &[CMatrix], tol: &Tolerances) -> Result<CMatrix> {
    if h.nrows() != h.ncols() || h.nrows() == 0 {
        return Err(Error::dim("Hamiltonian must be square and non-empty"));
    }
    if !linalg::all_finite(h) {
        return Err(Error::invalid("Hamiltonian has non-finite entries"));
    }
    let n = h.nrows();
    let defect = linalg::hermiticity_defect(h);
    if defect > tol.herm {
        return Err(Error::invalid(format!(
            "Hamiltonian is not Hermitian (defect {defect:.3e})"
        )));
    }
    if !jumps.is_empty() && check_kraus_family(jumps, "jump operator")? != n {
        return Err(Error::dim("jump operators do not match the Hamiltonian"));
    }
    let id = identity(n);
    let mut s = (sandwich_superop(h, &id) - sandwich_superop(&id, h)) * (-IM);
    let half = c64(0.5, 0.0);
    for l in jumps {
        let ldl = l.adjoint() * l;
        s += sandwich_superop(l, &l.adjoint());
        s -= sandwich_superop(&ldl, &id) * half;
        s -= sandwich_superop(&id, &ldl) * half;
    }
    Ok(s)
}

/// Hermiticity preservation, trace annihilation, and conditional complete
/// positivity (Choi matrix positive on the complement of `|Ω⟩`).
pub fn verify_generator(gen: &LindbladGenerator, tol: f64) -> VerificationReport {
    let n = gen.dim;
    let tp_defect = gen.act_adjoint(&identity(n)).norm();
    let choi = choi_from_superop(&gen.superop).expect("validated superoperator");
    let herm = linalg::hermiticity_defect(&choi)
        + if gen.explicit {
            linalg::hermiticity_defect(&gen.hamiltonian)
        } else {
            0.0
        };
    let omega = vec(&identity(n)) / c64((n as f64).sqrt(), 0.0);
    let q = identity(n * n) - &omega * omega.adjoint();
    let perp = linalg::range_basis(&q, 1e-8);
    let min_choi_eig = eigh(&(perp.adjoint() * &choi * &perp)).min();
    VerificationReport {
        cp: herm <= tol && (n == 1 || min_choi_eig >= -tol),
        tp: tp_defect <= tol,
        min_choi_eig: if n == 1 { 0.0 } else { min_choi_eig },
        tp_defect,
    }
}

/// The channel `exp(t𝓛)`.
pub fn exp_generator(gen: &LindbladGenerator, t: f64) -> Result<QuantumChannel> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("evolution time {t} must be finite and ≥ 0")));
    }
    let scaled = &gen.superop * c64(t, 0.0);
    QuantumChannel::from_superop(expm(&scaled))
}

/// A channel or a generator.
#[derive(Debug, Clone)]
pub enum System {
    Channel(QuantumChannel),
    Generator(LindbladGenerator),
}

impl From<QuantumChannel> for System {
    fn from(c: QuantumChannel) -> Self {
        System::Channel(c)
    }
}

impl From<LindbladGenerator> for System {
    fn from(g: LindbladGenerator) -> Self {
        System::Generator(g)
    }
}

impl System {
    fn inner(&self) -> &dyn Dynamics {
        match self {
            System::Channel(c) => c,
            System::Generator(g) => g,
        }
    }

    pub fn as_channel(&self) -> Option<&QuantumChannel> {
        match self {
            System::Channel(c) => Some(c),
            System::Generator(_) => None,
        }
    }

    pub fn as_generator(&self) -> Option<&LindbladGenerator> {
        match self {
            System::Generator(g) => Some(g),
            System::Channel(_) => None,
        }
    }
}

impl Dynamics for System {
    fn dim(&self) -> usize {
        self.inner().dim()
    }

    fn superop(&self) -> &CMatrix {
        self.inner().superop()
    }

    fn time_kind(&self) -> TimeKind {
        self.inner().time_kind()
    }

    fn verify(&self, tol: f64) -> VerificationReport {
        self.inner().verify(tol)
    }

    fn step_channel(&self, dt: f64) -> Result<QuantumChannel> {
        self.inner().step_channel(dt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{unit, ZERO};

    fn pauli_z() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
    }

    fn dephasing_half() -> QuantumChannel {
        let s = c64(0.5f64.sqrt(), 0.0);
        QuantumChannel::from_kraus(vec![identity(2) * s, pauli_z() * s]).unwrap()
    }

    #[test]
    fn identity_kraus_gives_identity_superop() {
        let s = kraus_to_superop(&[identity(2)]).unwrap();
        assert_eq!(s, identity(4));
    }

    #[test]
    fn dephasing_half_superop_is_diagonal_projector() {
        // vec order (ρ00, ρ10, ρ01, ρ11): off-diagonals are annihilated
        let s = dephasing_half().superop().clone();
        let expected = CMatrix::from_diagonal(&CVector::from_vec(vec![ONE, ZERO, ZERO, ONE]));
        assert!((s - expected).norm() < 1e-15);
    }

    #[test]
    fn two_cycle_superop_permutes_populations() {
        let k = vec![unit(2, 1, 0), unit(2, 0, 1)];
        let s = kraus_to_superop(&k).unwrap();
        let mut expected = CMatrix::zeros(4, 4);
        expected[(3, 0)] = ONE;
        expected[(0, 3)] = ONE;
        assert_eq!(s, expected);
    }

    #[test]
    fn mismatched_kraus_rejected() {
        let err = kraus_to_superop(&[identity(2), identity(3)]).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn choi_of_identity_is_maximally_entangled() {
        let ch = QuantumChannel::from_kraus(vec![identity(2)]).unwrap();
        let c = ch.choi();
        let mut omega = CVector::zeros(4);
        omega[0] = ONE;
        omega[3] = ONE;
        // 2|Ω⟩⟨Ω| with |Ω⟩ = (|00⟩+|11⟩)/√2 equals (|00⟩+|11⟩)(⟨00|+⟨11|)
        assert!((c - &omega * omega.adjoint()).norm() < 1e-15);
    }

    #[test]
    fn choi_of_transpose_has_negative_eigenvalue() {
        let mut s = CMatrix::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                s[(i * 2 + j, j * 2 + i)] = ONE;
            }
        }
        let ch = QuantumChannel::from_superop(s).unwrap();
        assert!(ch.kraus().is_empty());
        let mut vals = eigh(&ch.choi()).values;
        vals.sort_by(f64::total_cmp);
        let expected = [-1.0, 1.0, 1.0, 1.0];
        for (v, e) in vals.iter().zip(expected) {
            assert!((v - e).abs() < 1e-12);
        }
        let r = verify_cptp(&ch, 1e-9);
        assert!(!r.cp && r.tp);
        assert!((r.min_choi_eig + 1.0).abs() < 1e-12);
    }

    #[test]
    fn choi_of_full_depolarizer() {
        // ρ ↦ Tr(ρ)𝟙/2 has superop vec(𝟙/2)·vec(𝟙)†
        let v = vec(&identity(2));
        let s = &v * v.adjoint() * c64(0.5, 0.0);
        let c = choi_from_superop(&s).unwrap();
        assert!((c - identity(4) * c64(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn choi_round_trip() {
        let ch = dephasing_half();
        let back = superop_from_choi(&ch.choi()).unwrap();
        assert!((back - ch.superop()).norm() < 1e-15);
    }

    #[test]
    fn doubled_identity_is_not_trace_preserving() {
        let ch = QuantumChannel::from_kraus(vec![identity(2), identity(2)]).unwrap();
        let r = verify_cptp(&ch, 1e-9);
        assert!(r.cp && !r.tp);
        assert!((r.tp_defect - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn apply_dephasing_to_plus_state() {
        let plus = CMatrix::from_element(2, 2, c64(0.5, 0.0));
        let out = dephasing_half().apply(&plus).unwrap();
        assert!((out - identity(2) * c64(0.5, 0.0)).norm() < 1e-15);
        assert!(dephasing_half().apply(&identity(3)).is_err());
    }

    #[test]
    fn adjoint_of_unitary_channel() {
        let u = CMatrix::from_row_slice(
            2,
            2,
            &[c64(0.6, 0.0), c64(0.0, 0.8), c64(0.0, 0.8), c64(0.6, 0.0)],
        );
        let ch = QuantumChannel::from_kraus(vec![u.clone()]).unwrap();
        let a = CMatrix::from_row_slice(2, 2, &[ONE, c64(0.3, 0.1), c64(-0.2, 0.0), c64(2.0, 0.0)]);
        let out = ch.apply_adjoint(&a).unwrap();
        assert!((out - u.adjoint() * &a * &u).norm() < 1e-14);
        assert!((ch.apply_adjoint(&identity(2)).unwrap() - identity(2)).norm() < 1e-14);
    }

    #[test]
    fn lindblad_hamiltonian_only_kills_identity() {
        let h = CMatrix::from_row_slice(2, 2, &[ONE, c64(0.2, -0.4), c64(0.2, 0.4), c64(-0.3, 0.0)]);
        let g = LindbladGenerator::new(h, vec![], &Tolerances::default()).unwrap();
        assert!(g.apply(&identity(2)).unwrap().norm() < 1e-14);
    }

    #[test]
    fn lindblad_amplitude_damping_ground_state_is_stationary() {
        let l = unit(2, 0, 1) * c64(0.7f64.sqrt(), 0.0);
        let g = LindbladGenerator::new(CMatrix::zeros(2, 2), vec![l], &Tolerances::default()).unwrap();
        assert!(g.apply(&unit(2, 0, 0)).unwrap().norm() < 1e-15);
        let r = g.verify(1e-9);
        assert!(r.cp && r.tp, "{r:?}");
    }

    #[test]
    fn lindblad_commutator_eigenvalue() {
        let omega = 1.7;
        let h = CMatrix::from_diagonal(&CVector::from_vec(vec![ZERO, c64(omega, 0.0)]));
        let g = LindbladGenerator::new(h, vec![], &Tolerances::default()).unwrap();
        let x = unit(2, 0, 1);
        let out = g.apply(&x).unwrap();
        assert!((out - &x * c64(0.0, omega)).norm() < 1e-14);
    }

    #[test]
    fn non_hermitian_hamiltonian_rejected() {
        let h = unit(2, 0, 1);
        assert!(LindbladGenerator::new(h, vec![], &Tolerances::default()).is_err());
    }

    #[test]
    fn exp_at_zero_is_identity_and_negative_time_rejected() {
        let l = unit(2, 0, 1);
        let g = LindbladGenerator::new(CMatrix::zeros(2, 2), vec![l], &Tolerances::default()).unwrap();
        let ch = exp_generator(&g, 0.0).unwrap();
        assert!((ch.superop() - identity(4)).norm() < 1e-15);
        assert!(exp_generator(&g, -1.0).is_err());
    }

    #[test]
    fn exp_of_damping_relaxes_to_ground_state() {
        let gamma: f64 = 0.8;
        let l = unit(2, 0, 1) * c64(gamma.sqrt(), 0.0);
        let g = LindbladGenerator::new(CMatrix::zeros(2, 2), vec![l], &Tolerances::default()).unwrap();
        let ch = exp_generator(&g, 50.0 / gamma).unwrap();
        let rho = CMatrix::from_row_slice(2, 2, &[c64(0.3, 0.0), c64(0.1, 0.2), c64(0.1, -0.2), c64(0.7, 0.0)]);
        let out = ch.apply(&rho).unwrap();
        assert!((out - unit(2, 0, 0)).norm() < 1e-9);
        assert!(ch.verify(1e-9).passed());
    }
}
