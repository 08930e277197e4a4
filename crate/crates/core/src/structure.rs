//! Structure of the state space: the decaying/recurrent split, enclosures,
//! the cut-off dual and its fixed-point algebra, and the canonical block
//! decomposition of the recurrent subspace into `𝒰ₖ` and `𝒳ℓ ≃ ℂ^m ⊗ 𝒱ℓ`.
//!
//! The decomposition reads the blocks off the fixed-point algebra `𝔄` of
//! the cut-off dual: minimal central projections of `𝔄` are the central
//! blocks, a block whose compressed algebra is one-dimensional is a `𝒰ₖ`,
//! and a block carrying `M_m ⊗ 𝟙` is an `𝒳ℓ` with `m` replicas.
//! [`minimal_enclosures_oracle`] recovers the central blocks independently
//! from long-time averages of random states.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::channels::{DensityMatrix, Dynamics, TimeKind};
use crate::error::{Error, Result};
use crate::io::{self, MatrixJson};
use crate::linalg::{
    self, c64, eigh, identity, unvec, vec, CMatrix, C64, ONE, ZERO,
};
use crate::spectral::{self, FixedSpace};
use crate::tolerance::Tolerances;
use crate::zoo::{self, ZooRng};

/// Relative tolerance for rank and closure decisions on the fixed-point
/// algebra, whose basis carries the error of a numerical nullspace.
pub const ALGEBRA_TOL: f64 = 1e-6;

/// Seed for the generic elements drawn by [`decompose_structure`].
pub const DEFAULT_SEED: u64 = 0x5eed;

/// Time step used by the oracle to sample a generator.
pub const ORACLE_DT: f64 = 0.7379;

/// Number of doublings in the oracle's long-time average.
pub const ORACLE_DOUBLINGS: u32 = 40;

const ORTHONORMAL_TOL: f64 = 1e-12;

fn real(x: f64) -> C64 {
    c64(x, 0.0)
}

/// A subspace of `ℂᴺ` given by orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: CMatrix,
    projector: CMatrix,
}

impl Subspace {
    /// Rejects columns that are not orthonormal within `1e-12`.
    pub fn from_orthonormal(basis: CMatrix) -> Result<Self> {
        let d = basis.ncols();
        let defect = (basis.adjoint() * &basis - identity(d)).norm();
        if defect > ORTHONORMAL_TOL * (d.max(1) as f64) {
            return Err(Error::invalid(format!(
                "subspace basis is not orthonormal (defect {defect:.3e})"
            )));
        }
        Ok(Self::trusted(basis))
    }

    fn trusted(basis: CMatrix) -> Self {
        let projector = &basis * basis.adjoint();
        Subspace { basis, projector }
    }

    /// Span of the columns of `cols`, dropping directions below
    /// `rel_tol · σ_max`.
    pub fn span(cols: &CMatrix, rel_tol: f64) -> Self {
        Self::trusted(linalg::range_basis(cols, rel_tol))
    }

    pub fn zero(n: usize) -> Self {
        Self::trusted(CMatrix::zeros(n, 0))
    }

    pub fn full(n: usize) -> Self {
        Self::trusted(identity(n))
    }

    /// `span{|k⟩ : k ∈ idx}` (0-based).
    pub fn coordinate(n: usize, idx: &[usize]) -> Self {
        Self::trusted(CMatrix::from_fn(n, idx.len(), |r, c| {
            if r == idx[c] {
                ONE
            } else {
                ZERO
            }
        }))
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &CMatrix {
        &self.basis
    }

    pub fn projector(&self) -> &CMatrix {
        &self.projector
    }

    pub fn complement(&self) -> Self {
        Self::trusted(linalg::orthogonal_complement(&self.basis))
    }

    /// `‖P_A P_B‖_F`; zero iff the subspaces are orthogonal.
    pub fn overlap(&self, other: &Subspace) -> f64 {
        (self.basis.adjoint() * &other.basis).norm()
    }

    /// `‖P_A − P_B‖_F`.
    pub fn distance(&self, other: &Subspace) -> f64 {
        (&self.projector - &other.projector).norm()
    }

    /// `‖X − P X P‖_F`: the part of `X` outside `M_V`.
    pub fn outside(&self, x: &CMatrix) -> f64 {
        (x - &self.projector * x * &self.projector).norm()
    }

    /// `W† X W` in subspace coordinates.
    pub fn compress(&self, x: &CMatrix) -> CMatrix {
        self.basis.adjoint() * x * &self.basis
    }

    /// `W X W†` in the ambient space.
    pub fn embed(&self, x: &CMatrix) -> CMatrix {
        &self.basis * x * self.basis.adjoint()
    }

    /// Centroid `Σᵢ i·Pᵢᵢ / d` used to order blocks deterministically.
    fn centroid(&self) -> f64 {
        let d = self.dim().max(1) as f64;
        (0..self.ambient_dim())
            .map(|i| i as f64 * self.projector[(i, i)].re)
            .sum::<f64>()
            / d
    }
}

#[derive(Serialize, Deserialize)]
struct SubspaceJson {
    ambient_dim: usize,
    dim: usize,
    basis: MatrixJson,
}

impl Serialize for Subspace {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SubspaceJson {
            ambient_dim: self.ambient_dim(),
            dim: self.dim(),
            basis: MatrixJson::from(&self.basis),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Subspace {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = SubspaceJson::deserialize(d)?;
        let basis = j.basis.to_matrix("subspace basis").map_err(D::Error::custom)?;
        if basis.shape() != (j.ambient_dim, j.dim) {
            return Err(D::Error::custom("subspace shape does not match its basis"));
        }
        Subspace::from_orthonormal(basis).map_err(D::Error::custom)
    }
}

fn ensure_verified(system: &dyn Dynamics, tol: &Tolerances) -> Result<()> {
    let report = system.verify(tol.psd.max(tol.trace));
    if !report.passed() {
        return Err(Error::Verification(format!(
            "cp = {}, tp = {} (min Choi eigenvalue {:.3e}, trace defect {:.3e})",
            report.cp, report.tp, report.min_choi_eig, report.tp_defect
        )));
    }
    Ok(())
}

/// `𝒟 ⊕ ℛ = ℂᴺ` together with the mean state whose support is `ℛ`.
#[derive(Debug, Clone)]
pub struct DecayingSplit {
    pub decaying: Subspace,
    pub recurrent: Subspace,
    /// Time average of `𝟙/N`.
    pub mean_state: DensityMatrix,
}

/// `ℛ` is the support of the time average of `𝟙/N` at relative rank
/// tolerance `tol.rank`; `𝒟` is its complement.
pub fn split_decaying(system: &dyn Dynamics, tol: &Tolerances) -> Result<DecayingSplit> {
    ensure_verified(system, tol)?;
    let n = system.dim();
    let mean_state = spectral::cesaro_mean_state(system, &DensityMatrix::maximally_mixed(n), tol)?;
    let eig = eigh(mean_state.matrix());
    let cut = tol.rank * eig.max();
    let recurrent = Subspace::trusted(eig.columns_where(|v| v >= cut));
    if recurrent.dim() == 0 {
        return Err(Error::structure("mean state has empty support"));
    }
    Ok(DecayingSplit {
        decaying: recurrent.complement(),
        recurrent,
        mean_state,
    })
}

/// Whether `M_V` is mapped into itself, with the largest leak
/// `max(‖Q T(E) Q‖, ‖Q T(E) P‖)` over matrix units `E = |vₐ⟩⟨v_b|`.
pub fn is_enclosure(system: &dyn Dynamics, v: &Subspace, tol: f64) -> Result<(bool, f64)> {
    let n = system.dim();
    if v.ambient_dim() != n {
        return Err(Error::dim("subspace does not live in the system's Hilbert space"));
    }
    let p = v.projector();
    let q = identity(n) - p;
    let mut leak: f64 = 0.0;
    for a in 0..v.dim() {
        for b in 0..v.dim() {
            let e = v.basis().column(a) * v.basis().column(b).adjoint();
            let y = system.act(&e);
            let qy = &q * y;
            leak = leak.max((&qy * &q).norm()).max((&qy * p).norm());
        }
    }
    Ok((leak <= tol, leak))
}

/// The Heisenberg-picture evolution compressed to an enclosure,
/// `𝒮(A) = W† T†(W A W†) W`, as a `d² × d²` superoperator.
#[derive(Debug, Clone)]
pub struct CutoffDual {
    pub dim: usize,
    pub superop: CMatrix,
    pub time_kind: TimeKind,
}

impl CutoffDual {
    pub fn apply(&self, a: &CMatrix) -> CMatrix {
        linalg::apply_superop(&self.superop, a)
    }

    pub fn stationarity_operator(&self) -> CMatrix {
        match self.time_kind {
            TimeKind::Discrete => &self.superop - identity(self.superop.nrows()),
            TimeKind::Continuous => self.superop.clone(),
        }
    }

    /// `‖𝒮(𝟙) − 𝟙‖_F` (or `‖𝒮(𝟙)‖_F` for generators).
    pub fn unitality_defect(&self) -> f64 {
        let one = identity(self.dim);
        let y = self.apply(&one);
        match self.time_kind {
            TimeKind::Discrete => (y - one).norm(),
            TimeKind::Continuous => y.norm(),
        }
    }
}

pub fn cutoff_dual(system: &dyn Dynamics, r: &Subspace, tol: &Tolerances) -> Result<CutoffDual> {
    let (ok, leak) = is_enclosure(system, r, tol.eig)?;
    if !ok {
        return Err(Error::invalid(format!(
            "subspace is not an enclosure (leakage {leak:.3e})"
        )));
    }
    let d = r.dim();
    let mut superop = CMatrix::zeros(d * d, d * d);
    for j in 0..d {
        for i in 0..d {
            let a = r.embed(&linalg::unit(d, i, j));
            let col = vec(&r.compress(&system.act_adjoint(&a)));
            superop.column_mut(j * d + i).copy_from(&col);
        }
    }
    Ok(CutoffDual {
        dim: d,
        superop,
        time_kind: system.time_kind(),
    })
}

/// Fixed points of the cut-off dual and whether they close under products.
#[derive(Debug, Clone)]
pub struct FixedPointAlgebra {
    pub space: FixedSpace,
    pub algebra_verified: bool,
    /// Largest distance of a tested product `AB` from the span.
    pub closure_defect: f64,
}

/// Products are tested for every basis pair up to 64 basis elements and
/// for 64 pairs of generic elements beyond that.
pub fn fixed_point_algebra(s: &CutoffDual, tol: &Tolerances) -> FixedPointAlgebra {
    let space = spectral::fixed_space_of(&s.stationarity_operator(), s.dim, tol);
    let k = space.dim();
    let mut defect: f64 = 0.0;
    if k <= 64 {
        for a in &space.basis {
            for b in &space.basis {
                defect = defect.max(space.distance(&(a * b)));
            }
        }
    } else {
        let mut rng = zoo::rng(DEFAULT_SEED);
        for _ in 0..64 {
            let a = generic_element(&space.basis, &mut rng, false);
            let b = generic_element(&space.basis, &mut rng, false);
            defect = defect.max(space.distance(&(&a * &b)) / (a.norm() * b.norm()));
        }
    }
    FixedPointAlgebra {
        algebra_verified: space.hermitian_closed && defect <= ALGEBRA_TOL,
        closure_defect: defect,
        space,
    }
}

/// `Σⱼ cⱼ Bⱼ` with standard normal coefficients (complex if `complex`).
fn generic_element(basis: &[CMatrix], rng: &mut ZooRng, complex: bool) -> CMatrix {
    let (r, c) = basis[0].shape();
    let mut g = CMatrix::zeros(r, c);
    for b in basis {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = if complex { rng.sample(StandardNormal) } else { 0.0 };
        g += b * c64(re, im);
    }
    g
}

/// Identifier of a block in a [`StructureDecomposition`]: `D`, `R`, `U1`,
/// `X1` or `X1.2` (replica 2 of `X1`), all 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockId {
    Decaying,
    Recurrent,
    U(usize),
    X(usize),
    Replica(usize, usize),
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockId::Decaying => write!(f, "D"),
            BlockId::Recurrent => write!(f, "R"),
            BlockId::U(k) => write!(f, "U{}", k + 1),
            BlockId::X(l) => write!(f, "X{}", l + 1),
            BlockId::Replica(l, a) => write!(f, "X{}.{}", l + 1, a + 1),
        }
    }
}

impl FromStr for BlockId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("invalid block identifier '{s}'"));
        let one_based = |t: &str| -> Result<usize> {
            t.parse::<usize>()
                .ok()
                .filter(|&k| k >= 1)
                .map(|k| k - 1)
                .ok_or_else(bad)
        };
        match s {
            "D" => return Ok(BlockId::Decaying),
            "R" => return Ok(BlockId::Recurrent),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix('U') {
            return Ok(BlockId::U(one_based(rest)?));
        }
        if let Some(rest) = s.strip_prefix('X') {
            return Ok(match rest.split_once('.') {
                Some((l, a)) => BlockId::Replica(one_based(l)?, one_based(a)?),
                None => BlockId::X(one_based(rest)?),
            });
        }
        Err(bad())
    }
}

impl Serialize for BlockId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BlockId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A minimal enclosure with a unique stationary state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UBlock {
    pub space: Subspace,
    #[serde(with = "io::density")]
    pub stationary: DensityMatrix,
}

/// A block `𝒳 ≃ ℂ^m ⊗ 𝒱` of `m` replicas of one minimal enclosure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct XBlock {
    pub space: Subspace,
    pub multiplicity: usize,
    pub factor_dim: usize,
    /// `N × factor_dim` isometries onto the replicas `𝒱_α`; the
    /// identification between replicas is `W_α W_β†`.
    #[serde(with = "io::cmatrix_vec")]
    pub replica_isometries: Vec<CMatrix>,
    /// Reference state on `𝒱` in the coordinates of the isometries.
    #[serde(with = "io::density")]
    pub tau: DensityMatrix,
}

impl XBlock {
    pub fn replica(&self, alpha: usize) -> Subspace {
        Subspace::trusted(self.replica_isometries[alpha].clone())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructureDecomposition {
    pub time_kind: TimeKind,
    pub decaying: Subspace,
    pub recurrent: Subspace,
    pub u_blocks: Vec<UBlock>,
    pub x_blocks: Vec<XBlock>,
    /// Time average of `𝟙/N`; its support is `ℛ`.
    #[serde(with = "io::density")]
    pub mean_state: DensityMatrix,
    pub fixed_algebra_dim: usize,
}

impl StructureDecomposition {
    pub fn dim(&self) -> usize {
        self.recurrent.ambient_dim()
    }

    /// `𝒰ₖ` and `𝒳ℓ` in order.
    pub fn central_blocks(&self) -> Vec<(BlockId, &Subspace)> {
        let us = self.u_blocks.iter().enumerate().map(|(k, b)| (BlockId::U(k), &b.space));
        let xs = self.x_blocks.iter().enumerate().map(|(l, b)| (BlockId::X(l), &b.space));
        us.chain(xs).collect()
    }

    /// Mutually orthogonal minimal enclosures spanning `ℛ`: each `𝒰ₖ` and
    /// each replica of each `𝒳ℓ`.
    pub fn enclosures(&self) -> Vec<(BlockId, Subspace)> {
        let mut out: Vec<(BlockId, Subspace)> = self
            .u_blocks
            .iter()
            .enumerate()
            .map(|(k, b)| (BlockId::U(k), b.space.clone()))
            .collect();
        for (l, x) in self.x_blocks.iter().enumerate() {
            for a in 0..x.multiplicity {
                out.push((BlockId::Replica(l, a), x.replica(a)));
            }
        }
        out
    }

    /// The central block containing an enclosure.
    pub fn central_of(id: BlockId) -> BlockId {
        match id {
            BlockId::Replica(l, _) => BlockId::X(l),
            other => other,
        }
    }

    pub fn subspace(&self, id: BlockId) -> Option<Subspace> {
        match id {
            BlockId::Decaying => Some(self.decaying.clone()),
            BlockId::Recurrent => Some(self.recurrent.clone()),
            BlockId::U(k) => self.u_blocks.get(k).map(|b| b.space.clone()),
            BlockId::X(l) => self.x_blocks.get(l).map(|b| b.space.clone()),
            BlockId::Replica(l, a) => self
                .x_blocks
                .get(l)
                .filter(|x| a < x.multiplicity)
                .map(|x| x.replica(a)),
        }
    }

    /// Real parameters of a stationary state, complexified:
    /// `Σₖ 1 + Σℓ m(ℓ)²`, which equals the fixed-space dimension on `ℛ`.
    pub fn stationary_parameter_count(&self) -> usize {
        self.u_blocks.len() + self.x_blocks.iter().map(|x| x.multiplicity.pow(2)).sum::<usize>()
    }

    /// `dim 𝒟 + Σ dim 𝒰ₖ + Σ m(ℓ)·dim 𝒱ℓ`.
    pub fn accounted_dim(&self) -> usize {
        self.decaying.dim()
            + self.u_blocks.iter().map(|b| b.space.dim()).sum::<usize>()
            + self
                .x_blocks
                .iter()
                .map(|x| x.multiplicity * x.factor_dim)
                .sum::<usize>()
    }
}

/// One minimal central projection of the fixed-point algebra, as an
/// isometry in `ℛ`-coordinates, with the algebra compressed to it.
struct CentralBlock {
    iso: CMatrix,
    algebra: Vec<CMatrix>,
}

fn central_blocks(algebra: &[CMatrix], rng: &mut ZooRng) -> Result<Vec<CentralBlock>> {
    let d = algebra[0].nrows();
    let k = algebra.len();
    // The center is the commutant of a few generic elements within 𝔄.
    let probes: Vec<CMatrix> = (0..4).map(|_| generic_element(algebra, rng, false)).collect();
    let mut m = CMatrix::zeros(probes.len() * d * d, k);
    for (j, b) in algebra.iter().enumerate() {
        for (i, g) in probes.iter().enumerate() {
            let c = vec(&linalg::commutator(b, g));
            m.view_mut((i * d * d, j), (d * d, 1)).copy_from(&c);
        }
    }
    let ns = linalg::nullspace(&m, ALGEBRA_TOL);
    let center: Vec<CMatrix> = ns
        .column_iter()
        .map(|c| {
            algebra
                .iter()
                .zip(c.iter())
                .fold(CMatrix::zeros(d, d), |acc, (b, &x)| acc + b * x)
        })
        .collect();
    let (center, _) = linalg::hermitian_basis(&center, Some(center.len()), ALGEBRA_TOL);
    if center.is_empty() {
        return Err(Error::structure("fixed-point algebra has a trivial center"));
    }
    let z = generic_element(&center, rng, false);
    let eig = eigh(&z);
    let scale = eig.values.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let clusters = linalg::cluster_sorted(&eig.values, 1e-7 * scale);
    if clusters.len() != center.len() {
        return Err(Error::structure(format!(
            "{} eigenvalue clusters for a {}-dimensional center",
            clusters.len(),
            center.len()
        )));
    }
    let space = FixedSpace {
        basis: algebra.to_vec(),
        hermitian_closed: true,
    };
    let mut out = Vec::with_capacity(clusters.len());
    for idx in clusters {
        let iso = linalg::select_columns(&eig.vectors, &idx);
        let p = &iso * iso.adjoint();
        let outside = space.distance(&p);
        let noncentral = algebra
            .iter()
            .map(|b| linalg::commutator(&p, b).norm())
            .fold(0.0, f64::max);
        if outside > ALGEBRA_TOL * (idx.len() as f64).sqrt() || noncentral > ALGEBRA_TOL {
            return Err(Error::structure(format!(
                "central projection check failed (distance {outside:.2e}, commutator {noncentral:.2e})"
            )));
        }
        let compressed: Vec<CMatrix> = algebra.iter().map(|b| iso.adjoint() * b * &iso).collect();
        let (block_algebra, _) = linalg::hermitian_basis(&compressed, None, ALGEBRA_TOL);
        out.push(CentralBlock {
            iso,
            algebra: block_algebra,
        });
    }
    Ok(out)
}

/// Replica isometries of a block whose algebra is `M_m ⊗ 𝟙_f`, in block
/// coordinates. `full` is the whole algebra in `ℛ`-coordinates and `iso`
/// embeds the block into `ℛ`.
fn replicas(
    block: &CentralBlock,
    m: usize,
    full: &FixedSpace,
    rng: &mut ZooRng,
) -> Result<Vec<CMatrix>> {
    let dk = block.iso.ncols();
    if dk % m != 0 {
        return Err(Error::structure(format!(
            "block of dimension {dk} cannot hold {m} equal replicas"
        )));
    }
    let f = dk / m;
    let h = generic_element(&block.algebra, rng, false);
    let eig = eigh(&h);
    let scale = eig.values.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let clusters = linalg::cluster_sorted(&eig.values, 1e-7 * scale);
    if clusters.len() != m || clusters.iter().any(|c| c.len() != f) {
        return Err(Error::structure(format!(
            "generic block element splits into clusters of sizes {:?}, expected {m} of size {f}",
            clusters.iter().map(Vec::len).collect::<Vec<_>>()
        )));
    }
    let vs: Vec<CMatrix> = clusters
        .iter()
        .map(|idx| linalg::select_columns(&eig.vectors, idx))
        .collect();
    let g = generic_element(&block.algebra, rng, true);
    let mut ws = Vec::with_capacity(m);
    for v in &vs {
        let (u, sv) = linalg::polar_unitary(&(v.adjoint() * &g * &vs[0]));
        let (hi, lo) = (sv[0], sv[sv.len() - 1]);
        if lo <= ALGEBRA_TOL * g.norm() || hi - lo > ALGEBRA_TOL * hi.max(1.0) * 1e2 {
            return Err(Error::structure(format!(
                "replica link is not proportional to an isometry (singular values {lo:.3e}..{hi:.3e})"
            )));
        }
        ws.push(v * u);
    }
    // The identifications W_α W_1† must themselves be fixed points.
    for w in &ws[1..] {
        let link = &block.iso * (w * ws[0].adjoint()) * block.iso.adjoint();
        let dist = full.distance(&link) / (f as f64).sqrt();
        if dist > ALGEBRA_TOL * 10.0 {
            return Err(Error::structure(format!(
                "replica identification leaves the fixed-point algebra (distance {dist:.3e})"
            )));
        }
    }
    Ok(ws)
}

/// The canonical decomposition of `ℛ`. Generic algebra elements are drawn
/// from `seed`; a failed consistency check is retried once with the next
/// seed.
pub fn decompose_structure(
    system: &dyn Dynamics,
    tol: &Tolerances,
    seed: u64,
) -> Result<StructureDecomposition> {
    let split = split_decaying(system, tol)?;
    let cut = cutoff_dual(system, &split.recurrent, tol)?;
    let fpa = fixed_point_algebra(&cut, tol);
    if !fpa.algebra_verified {
        return Err(Error::structure(format!(
            "fixed points of the cut-off dual do not form an algebra (closure defect {:.3e}, adjoint-closed {})",
            fpa.closure_defect, fpa.space.hermitian_closed
        )));
    }
    match decompose_with(system, &split, &fpa, seed) {
        Ok(sd) => Ok(sd),
        Err(Error::Structure(_)) => decompose_with(system, &split, &fpa, seed.wrapping_add(1)),
        Err(e) => Err(e),
    }
}

fn decompose_with(
    system: &dyn Dynamics,
    split: &DecayingSplit,
    fpa: &FixedPointAlgebra,
    seed: u64,
) -> Result<StructureDecomposition> {
    let mut rng = zoo::rng(seed);
    let tol = Tolerances::default();
    let w_r = split.recurrent.basis();
    let rho = split.mean_state.matrix();
    let mut u_blocks = Vec::new();
    let mut x_blocks = Vec::new();
    for block in central_blocks(&fpa.space.basis, &mut rng)? {
        let space = Subspace::trusted(w_r * &block.iso);
        let a = block.algebra.len();
        if a == 1 {
            let stationary = DensityMatrix::normalized(&(space.projector() * rho * space.projector()), &tol)
                .map_err(|e| Error::structure(format!("compressed mean state: {e}")))?;
            u_blocks.push(UBlock { space, stationary });
            continue;
        }
        let m = linalg::exact_sqrt(a).filter(|&m| m >= 2).ok_or_else(|| {
            Error::structure(format!(
                "block algebra of dimension {a} is not a full matrix algebra"
            ))
        })?;
        let ws = replicas(&block, m, &fpa.space, &mut rng)?;
        let replica_isometries: Vec<CMatrix> = ws.iter().map(|w| w_r * &block.iso * w).collect();
        let w1 = &replica_isometries[0];
        let tau = DensityMatrix::normalized(&(w1.adjoint() * rho * w1), &tol)
            .map_err(|e| Error::structure(format!("reference state: {e}")))?;
        x_blocks.push(XBlock {
            space,
            multiplicity: m,
            factor_dim: ws[0].ncols(),
            replica_isometries,
            tau,
        });
    }
    u_blocks.sort_by(|a, b| a.space.centroid().total_cmp(&b.space.centroid()));
    x_blocks.sort_by(|a, b| a.space.centroid().total_cmp(&b.space.centroid()));
    let sd = StructureDecomposition {
        time_kind: system.time_kind(),
        decaying: split.decaying.clone(),
        recurrent: split.recurrent.clone(),
        u_blocks,
        x_blocks,
        mean_state: split.mean_state.clone(),
        fixed_algebra_dim: fpa.space.dim(),
    };
    if sd.stationary_parameter_count() != sd.fixed_algebra_dim {
        return Err(Error::structure(format!(
            "blocks account for {} fixed-point dimensions, the algebra has {}",
            sd.stationary_parameter_count(),
            sd.fixed_algebra_dim
        )));
    }
    Ok(sd)
}

/// Coordinates of a stationary state in the canonical form
/// `ρ = Σₖ λₖ ρₖ + Σℓ μℓ Σ_{αβ} (σℓ)_{αβ} W_α τℓ W_β†`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CanonicalStationaryState {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    #[serde(with = "io::density_vec")]
    pub sigma: Vec<DensityMatrix>,
}

impl CanonicalStationaryState {
    /// Random weights on the simplex and random full-rank `σℓ`.
    pub fn random(sd: &StructureDecomposition, rng: &mut ZooRng) -> Self {
        let k = sd.u_blocks.len() + sd.x_blocks.len();
        let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.05).collect();
        let total: f64 = raw.iter().sum();
        let mut lambda: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let mu = lambda.split_off(sd.u_blocks.len());
        let sigma = sd
            .x_blocks
            .iter()
            .map(|x| zoo::random_density(rng, x.multiplicity))
            .collect();
        CanonicalStationaryState { lambda, mu, sigma }
    }
}

pub fn canonical_stationary(
    sd: &StructureDecomposition,
    coords: &CanonicalStationaryState,
) -> Result<DensityMatrix> {
    if coords.lambda.len() != sd.u_blocks.len()
        || coords.mu.len() != sd.x_blocks.len()
        || coords.sigma.len() != sd.x_blocks.len()
    {
        return Err(Error::dim(format!(
            "coordinates have {}/{}/{} entries for {} 𝒰 and {} 𝒳 blocks",
            coords.lambda.len(),
            coords.mu.len(),
            coords.sigma.len(),
            sd.u_blocks.len(),
            sd.x_blocks.len()
        )));
    }
    if coords.lambda.iter().chain(&coords.mu).any(|&w| !(w >= 0.0)) {
        return Err(Error::invalid("block weights must be non-negative"));
    }
    let total: f64 = coords.lambda.iter().chain(&coords.mu).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("block weights sum to {total}, not 1")));
    }
    let n = sd.dim();
    let mut rho = CMatrix::zeros(n, n);
    for (b, &l) in sd.u_blocks.iter().zip(&coords.lambda) {
        rho += b.stationary.matrix() * real(l);
    }
    for ((x, &mu), sigma) in sd.x_blocks.iter().zip(&coords.mu).zip(&coords.sigma) {
        if sigma.dim() != x.multiplicity {
            return Err(Error::dim(format!(
                "σ is {}×{} for multiplicity {}",
                sigma.dim(),
                sigma.dim(),
                x.multiplicity
            )));
        }
        for (a, wa) in x.replica_isometries.iter().enumerate() {
            for (b, wb) in x.replica_isometries.iter().enumerate() {
                let s = sigma.matrix()[(a, b)] * real(mu);
                rho += wa * x.tau.matrix() * wb.adjoint() * s;
            }
        }
    }
    DensityMatrix::normalized(&rho, &Tolerances::default())
}

/// Inverse of [`canonical_stationary`] for a stationary `ρ`.
pub fn stationary_coordinates(
    system: &dyn Dynamics,
    sd: &StructureDecomposition,
    rho: &DensityMatrix,
    tol: &Tolerances,
) -> Result<CanonicalStationaryState> {
    let n = sd.dim();
    if rho.dim() != n || system.dim() != n {
        return Err(Error::dim("state does not match the decomposition"));
    }
    let defect = system.stationarity_defect(rho.matrix());
    if defect > tol.eig.max(1e-9) {
        return Err(Error::invalid(format!("state is not stationary (defect {defect:.3e})")));
    }
    let r = rho.matrix();
    let mut blocks: Vec<Subspace> = vec![sd.decaying.clone()];
    blocks.extend(sd.central_blocks().into_iter().map(|(_, s)| s.clone()));
    for (i, a) in blocks.iter().enumerate() {
        for b in &blocks[i..] {
            let off = if std::ptr::eq(a, b) {
                if i == 0 {
                    (a.projector() * r * a.projector()).norm()
                } else {
                    continue;
                }
            } else {
                (a.projector() * r * b.projector()).norm()
            };
            if off > tol.eig.max(1e-9) {
                return Err(Error::structure(format!(
                    "stationary state has weight {off:.3e} outside the diagonal recurrent blocks"
                )));
            }
        }
    }
    let lambda = sd
        .u_blocks
        .iter()
        .map(|b| (b.space.projector() * r).trace().re)
        .collect();
    let mut mu = Vec::new();
    let mut sigma = Vec::new();
    for x in &sd.x_blocks {
        let m = x.multiplicity;
        let s = CMatrix::from_fn(m, m, |a, b| {
            (x.replica_isometries[a].adjoint() * r * &x.replica_isometries[b]).trace()
        });
        let weight = s.trace().re;
        mu.push(weight);
        sigma.push(if weight > 0.0 {
            DensityMatrix::normalized(&(s / real(weight)), tol)?
        } else {
            DensityMatrix::maximally_mixed(m)
        });
    }
    Ok(CanonicalStationaryState { lambda, mu, sigma })
}

/// Long-time average superoperator `lim (1/T) Σ_{t<T} Sᵗ`, by doubling.
fn long_time_average(system: &dyn Dynamics) -> Result<CMatrix> {
    let step = match system.time_kind() {
        TimeKind::Discrete => system.superop().clone(),
        TimeKind::Continuous => system.step_channel(ORACLE_DT)?.superop().clone(),
    };
    let mut avg = identity(step.nrows());
    let mut pow = step;
    for _ in 0..ORACLE_DOUBLINGS {
        avg = (&avg + &pow * &avg) * real(0.5);
        pow = &pow * &pow;
    }
    Ok(avg)
}

fn support(m: &CMatrix, rel: f64) -> CMatrix {
    let eig = eigh(m);
    let cut = rel * eig.max().max(0.0);
    eig.columns_where(|v| v > cut)
}

/// Shrinks the support of a stationary state until no partner state
/// compressed to it is linearly independent of it. The result spans a
/// minimal enclosure.
fn reduce_to_minimal(rho: &CMatrix, partners: &[CMatrix]) -> CMatrix {
    let mut s = support(rho, 1e-9);
    let mut r = s.adjoint() * rho * &s;
    loop {
        let mut changed = false;
        for sigma in partners {
            if s.ncols() <= 1 {
                return s;
            }
            let c = s.adjoint() * sigma * &s;
            let r_eig = eigh(&r);
            let r_half = linalg::spectral_fn(&r_eig, |x| x.max(0.0).sqrt());
            let r_inv_half = linalg::spectral_fn(&r_eig, |x| 1.0 / x.max(1e-300).sqrt());
            let k = &r_inv_half * &c * &r_inv_half;
            let ke = eigh(&k);
            let (lo, hi) = (ke.min(), ke.max());
            if hi <= 0.0 || hi - lo <= 1e-6 * hi {
                continue;
            }
            let keep = ke.columns_where(|x| x < hi * (1.0 - 1e-6));
            let new_r = &r - &c * real(1.0 / hi);
            let new_s = linalg::range_basis(&(&r_half * keep), 1e-12);
            let emb = &s * new_s;
            r = emb.adjoint() * (&s * new_r * s.adjoint()) * &emb;
            r = linalg::hermitian_part(&r);
            s = emb;
            changed = true;
        }
        if !changed {
            return s;
        }
    }
}

/// Central blocks recovered without the fixed-point algebra: random pure
/// states are averaged over `2⁴⁰` steps, each limit is reduced to a minimal
/// enclosure using the other limits, and minimal enclosures that overlap
/// non-orthogonally are merged. Individual replicas are not recovered.
pub fn minimal_enclosures_oracle(
    system: &dyn Dynamics,
    samples: usize,
    seed: u64,
) -> Result<Vec<Subspace>> {
    let n = system.dim();
    let avg = long_time_average(system)?;
    let mut rng = zoo::rng(seed);
    let limits: Vec<CMatrix> = (0..samples.max(1))
        .map(|_| {
            let psi = zoo::random_pure_state(&mut rng, n);
            linalg::hermitian_part(&unvec(&(&avg * vec(psi.matrix())), n))
        })
        .collect();
    let partners = &limits[..limits.len().min(2 * n * n + 4)];
    let minimal: Vec<CMatrix> = limits.iter().map(|l| reduce_to_minimal(l, partners)).collect();

    let k = minimal.len();
    let mut parent: Vec<usize> = (0..k).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..k {
        for j in i + 1..k {
            if (minimal[i].adjoint() * &minimal[j]).norm() > 1e-6 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..k {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    let mut blocks: Vec<Subspace> = groups
        .values()
        .map(|idx| {
            let cols: Vec<CMatrix> = idx.iter().map(|&i| minimal[i].clone()).collect();
            let total: usize = cols.iter().map(|c| c.ncols()).sum();
            let mut stacked = CMatrix::zeros(n, total);
            let mut at = 0;
            for c in &cols {
                stacked.view_mut((0, at), (n, c.ncols())).copy_from(c);
                at += c.ncols();
            }
            Subspace::span(&stacked, 1e-8)
        })
        .collect();
    blocks.sort_by(|a, b| a.centroid().total_cmp(&b.centroid()));
    Ok(blocks)
}
