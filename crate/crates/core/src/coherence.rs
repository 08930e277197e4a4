//! Coherence between enclosures: matrix blocks, stationary and rotating
//! coherence, rings of enclosures and the unitaries that relate different
//! splittings of an `𝒳` block.
//!
//! For two orthogonal subspaces `𝒱`, `𝒲` a matrix splits into the diagonal
//! blocks `P_V M P_V`, `P_W M P_W` and the coherence blocks
//! `C1 = P_V M P_W`, `C2 = P_W M P_V`. When `𝒱` and `𝒲` are enclosures the
//! dynamics maps each block into itself, so eigenmatrices can be attributed
//! to block pairs.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::channels::{DensityMatrix, Dynamics, TimeKind};
use crate::error::{Error, Result};
use crate::io;
use crate::linalg::{self, c64, eigh, identity, vec, CMatrix, C64, ONE};
use crate::spectral::EigenMode;
use crate::structure::{is_enclosure, BlockId, CutoffDual, StructureDecomposition, Subspace, UBlock};
use crate::tolerance::Tolerances;
use crate::zoo;

/// Largest `‖P_V P_W‖_F` accepted for subspaces treated as orthogonal.
pub const ORTHOGONALITY_TOL: f64 = 1e-8;

/// Fraction of an eigenspace's squared norm that may fall outside the
/// enclosure pairs it is attributed to.
pub const ATTRIBUTION_TOL: f64 = 1e-6;

/// `|λ − e^{2πiq/m}|` accepted when fitting a root of unity.
pub const ROOT_OF_UNITY_TOL: f64 = 1e-7;

/// Distance inside the unit disc (or left of the imaginary axis) required
/// of a coherence block without peripheral modes.
pub const DECAY_MARGIN: f64 = 1e-9;

/// Random matrices drawn per block pair by [`verify_block_preservation`].
pub const PRESERVATION_SAMPLES: usize = 3;

const ISOMETRY_TOL: f64 = 1e-6;
const MAPPING_TOL: f64 = 1e-8;
const COMMUTATION_SAMPLES: usize = 8;

fn real(x: f64) -> C64 {
    c64(x, 0.0)
}

fn check_pair(v: &Subspace, w: &Subspace) -> Result<()> {
    if v.ambient_dim() != w.ambient_dim() {
        return Err(Error::dim("subspaces live in different Hilbert spaces"));
    }
    let overlap = v.overlap(w);
    if overlap > ORTHOGONALITY_TOL {
        return Err(Error::invalid(format!(
            "subspaces are not orthogonal (‖P_V P_W‖ = {overlap:.3e})"
        )));
    }
    Ok(())
}

fn check_unit(z: C64) -> Result<()> {
    if (z.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("|z| = {} is not 1", z.norm())));
    }
    Ok(())
}

/// The four compressions of a matrix relative to orthogonal `𝒱`, `𝒲`.
#[derive(Debug, Clone)]
pub struct BlockDecomposition {
    pub vv: CMatrix,
    pub ww: CMatrix,
    /// `P_V M P_W`
    pub c1: CMatrix,
    /// `P_W M P_V`
    pub c2: CMatrix,
}

impl BlockDecomposition {
    /// `(P_V + P_W) M (P_V + P_W)`.
    pub fn reassemble(&self) -> CMatrix {
        &self.vv + &self.ww + &self.c1 + &self.c2
    }

    pub fn coherence_norm(&self) -> f64 {
        (self.c1.norm_squared() + self.c2.norm_squared()).sqrt()
    }
}

pub fn block_decompose(m: &CMatrix, v: &Subspace, w: &Subspace) -> Result<BlockDecomposition> {
    check_pair(v, w)?;
    let n = v.ambient_dim();
    if m.shape() != (n, n) {
        return Err(Error::dim(format!(
            "matrix is {}×{}, subspaces live in ℂ{n}",
            m.nrows(),
            m.ncols()
        )));
    }
    let (pv, pw) = (v.projector(), w.projector());
    Ok(BlockDecomposition {
        vv: pv * m * pv,
        ww: pw * m * pw,
        c1: pv * m * pw,
        c2: pw * m * pv,
    })
}

/// Which action a block map restricts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Picture {
    Schrodinger,
    Heisenberg,
}

/// Matrix of `Y ↦ B_V† T(B_V Y B_W†) B_W` on `dim 𝒱 × dim 𝒲` matrices
/// (column-stacked), where `B_V`, `B_W` are the subspace bases. With
/// `Picture::Heisenberg`, `T` is replaced by `T†`; for generators both
/// pictures use `𝓛` or `𝓛†`.
pub fn block_map(system: &dyn Dynamics, v: &Subspace, w: &Subspace, picture: Picture) -> Result<CMatrix> {
    let n = system.dim();
    if v.ambient_dim() != n || w.ambient_dim() != n {
        return Err(Error::dim("subspace does not live in the system's Hilbert space"));
    }
    let (dv, dw) = (v.dim(), w.dim());
    let mut m = CMatrix::zeros(dv * dw, dv * dw);
    for j in 0..dw {
        for i in 0..dv {
            let e = v.basis().column(i) * w.basis().column(j).adjoint();
            let y = match picture {
                Picture::Schrodinger => system.act(&e),
                Picture::Heisenberg => system.act_adjoint(&e),
            };
            let y = v.basis().adjoint() * y * w.basis();
            m.column_mut(j * dv + i).copy_from(&vec(&y));
        }
    }
    Ok(m)
}

/// Spectral radius (discrete) or spectral abscissa (continuous) of a block
/// map, with the eigenvalue attaining it.
fn dominant_eigenvalue(m: &CMatrix, kind: TimeKind) -> Result<(f64, C64)> {
    let key = |z: &C64| match kind {
        TimeKind::Discrete => z.norm(),
        TimeKind::Continuous => z.re,
    };
    let vals = linalg::eigenvalues(m)?;
    vals.iter()
        .copied()
        .max_by(|a, b| key(a).total_cmp(&key(b)))
        .map(|z| (key(&z), z))
        .ok_or_else(|| Error::invalid("empty block"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockCheckKind {
    /// `M_V → M_V`.
    Diagonal,
    /// `C1(V, W) → C1(V, W)`.
    Coherence,
    /// `C(𝒟, ℛ) → C(𝒟, ℛ) ⊕ M_ℛ`: only the `𝒟𝒟` part is a leak.
    DecayingCoherence,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockCheck {
    pub first: BlockId,
    pub second: BlockId,
    pub kind: BlockCheckKind,
    /// Largest leak over the sampled unit-norm inputs.
    pub leakage: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockPreservationReport {
    pub checks: Vec<BlockCheck>,
    pub max_leakage: f64,
    pub passed: bool,
}

/// Feeds random unit-norm matrices `X = P_a G P_b` through the dynamics and
/// measures what lands outside the allowed blocks: for every ordered pair
/// of distinct orthogonal blocks (central blocks and replicas), for every
/// diagonal block and for `(𝒟, ℛ)` in both orders.
pub fn verify_block_preservation(
    system: &dyn Dynamics,
    sd: &StructureDecomposition,
    tol: f64,
    seed: u64,
) -> Result<BlockPreservationReport> {
    if system.dim() != sd.dim() {
        return Err(Error::dim("decomposition does not match the system"));
    }
    let mut rng = zoo::rng(seed);
    let mut blocks: Vec<(BlockId, Subspace)> =
        sd.central_blocks().into_iter().map(|(id, s)| (id, s.clone())).collect();
    for (id, s) in sd.enclosures() {
        if matches!(id, BlockId::Replica(l, _) if sd.x_blocks[l].multiplicity > 1) {
            blocks.push((id, s));
        }
    }
    let mut sample = |a: &Subspace, b: &Subspace| -> CMatrix {
        let y = zoo::gaussian_matrix(&mut rng, a.dim(), b.dim());
        let x = a.basis() * &y * b.basis().adjoint();
        let norm = x.norm();
        x / real(norm)
    };

    let mut checks = Vec::new();
    let mut record = |first, second, kind, leakage: f64| {
        checks.push(BlockCheck {
            first,
            second,
            kind,
            leakage,
            passed: leakage <= tol,
        })
    };
    for (ia, b) in &blocks {
        for (ib, c) in &blocks {
            let kind = if ia == ib {
                BlockCheckKind::Diagonal
            } else if b.overlap(c) <= ORTHOGONALITY_TOL {
                BlockCheckKind::Coherence
            } else {
                continue;
            };
            let (pb, pc) = (b.projector(), c.projector());
            let leak = (0..PRESERVATION_SAMPLES)
                .map(|_| {
                    let y = system.act(&sample(b, c));
                    (&y - pb * &y * pc).norm()
                })
                .fold(0.0, f64::max);
            record(*ia, *ib, kind, leak);
        }
    }
    if sd.decaying.dim() > 0 {
        let (d, r) = (&sd.decaying, &sd.recurrent);
        let pd = d.projector();
        for (first, second, a, b) in [
            (BlockId::Decaying, BlockId::Recurrent, d, r),
            (BlockId::Recurrent, BlockId::Decaying, r, d),
        ] {
            let leak = (0..PRESERVATION_SAMPLES)
                .map(|_| {
                    let y = system.act(&sample(a, b));
                    (pd * y * pd).norm()
                })
                .fold(0.0, f64::max);
            record(first, second, BlockCheckKind::DecayingCoherence, leak);
        }
    }
    let max_leakage = checks.iter().map(|c| c.leakage).fold(0.0, f64::max);
    Ok(BlockPreservationReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
        max_leakage,
    })
}

/// The invariant observable in the `C1` block of two orthogonal minimal
/// enclosures, scaled to a partial isometry with `QQ† = P_V`, `Q†Q = P_W`.
///
/// The fixed space of the Heisenberg block map is at most one-dimensional;
/// a larger one is reported as a structural inconsistency, as is a fixed
/// point that is not proportional to an isometry. The phase is chosen so
/// that the largest entry of `Q` in subspace coordinates is real positive.
pub fn stationary_coherence(
    system: &dyn Dynamics,
    v: &Subspace,
    w: &Subspace,
    tol: &Tolerances,
) -> Result<Option<CMatrix>> {
    check_pair(v, w)?;
    for s in [v, w] {
        let (ok, leak) = is_enclosure(system, s, tol.eig)?;
        if !ok {
            return Err(Error::invalid(format!(
                "subspace is not an enclosure (leakage {leak:.3e})"
            )));
        }
    }
    let m = block_map(system, v, w, Picture::Heisenberg)?;
    let stat = match system.time_kind() {
        TimeKind::Discrete => &m - identity(m.nrows()),
        TimeKind::Continuous => m,
    };
    let ns = linalg::nullspace(&stat, tol.rank);
    match ns.ncols() {
        0 => return Ok(None),
        1 => {}
        k => {
            return Err(Error::structure(format!(
                "{k} independent stationary coherences between two minimal enclosures"
            )))
        }
    }
    let (dv, dw) = (v.dim(), w.dim());
    if dv != dw {
        return Err(Error::structure(format!(
            "stationary coherence between enclosures of dimensions {dv} and {dw}"
        )));
    }
    let mut y = CMatrix::from_iterator(dv, dw, ns.column(0).iter().copied());
    let peak = y.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or(ONE);
    y *= peak.conj() / real(peak.norm());
    y *= real((dv as f64).sqrt() / y.norm());
    let q = v.basis() * y * w.basis().adjoint();
    let defect = (&q * q.adjoint() - v.projector())
        .norm()
        .max((q.adjoint() * &q - w.projector()).norm());
    if defect > ISOMETRY_TOL {
        return Err(Error::structure(format!(
            "stationary coherence is not an isometry between the enclosures (defect {defect:.3e})"
        )));
    }
    Ok(Some(q))
}

/// Two orthogonal minimal enclosures joined by a stationary coherence `Q`,
/// and the sphere of enclosures `P(α, z)` they span.
#[derive(Debug, Clone, Serialize)]
pub struct RingSphere {
    v: Subspace,
    w: Subspace,
    #[serde(with = "io::cmatrix")]
    q: CMatrix,
}

/// `R_α = 𝟙 − 2P(α)` and `U_α = R_{α/2} R_0`.
#[derive(Debug, Clone)]
pub struct RingUnitaries {
    pub u: CMatrix,
    pub r: CMatrix,
}

impl RingSphere {
    /// Fails with a structural error when `𝒱` and `𝒲` carry no stationary
    /// coherence, i.e. are not in a ring.
    pub fn new(system: &dyn Dynamics, v: &Subspace, w: &Subspace, tol: &Tolerances) -> Result<Self> {
        let q = stationary_coherence(system, v, w, tol)?.ok_or_else(|| {
            Error::structure("no stationary coherence between the enclosures: they are not in a ring")
        })?;
        Ok(RingSphere {
            v: v.clone(),
            w: w.clone(),
            q,
        })
    }

    /// Checks `QQ† = P_V` and `Q†Q = P_W`.
    pub fn from_parts(v: Subspace, w: Subspace, q: CMatrix) -> Result<Self> {
        check_pair(&v, &w)?;
        let n = v.ambient_dim();
        if q.shape() != (n, n) {
            return Err(Error::dim("Q does not match the subspaces"));
        }
        let defect = (&q * q.adjoint() - v.projector())
            .norm()
            .max((q.adjoint() * &q - w.projector()).norm());
        if defect > ISOMETRY_TOL {
            return Err(Error::invalid(format!(
                "Q is not an isometry from 𝒲 onto 𝒱 (defect {defect:.3e})"
            )));
        }
        Ok(RingSphere { v, w, q })
    }

    pub fn v(&self) -> &Subspace {
        &self.v
    }

    pub fn w(&self) -> &Subspace {
        &self.w
    }

    pub fn q(&self) -> &CMatrix {
        &self.q
    }

    /// The same sphere with `Q` replaced by `zQ`, so that its ring
    /// (`z = 1`) passes through `P(α, z)`.
    pub fn rephased(&self, z: C64) -> Result<Self> {
        check_unit(z)?;
        Ok(RingSphere {
            v: self.v.clone(),
            w: self.w.clone(),
            q: &self.q * z,
        })
    }

    /// `cos²α P_V + z sinα cosα Q + z̄ sinα cosα Q† + sin²α P_W`.
    pub fn projector(&self, alpha: f64, z: C64) -> Result<CMatrix> {
        check_unit(z)?;
        Ok(self.p(alpha, z))
    }

    fn p(&self, alpha: f64, z: C64) -> CMatrix {
        let (s, c) = alpha.sin_cos();
        self.v.projector() * real(c * c)
            + &self.q * (z * s * c)
            + self.q.adjoint() * (z.conj() * s * c)
            + self.w.projector() * real(s * s)
    }

    pub fn reflection(&self, alpha: f64) -> CMatrix {
        identity(self.v.ambient_dim()) - self.p(alpha, ONE) * real(2.0)
    }

    /// `U_α` rotates the ring: `U_α P(β) U_α† = P(α + β)`.
    pub fn unitaries(&self, alpha: f64) -> RingUnitaries {
        RingUnitaries {
            u: self.reflection(alpha / 2.0) * self.reflection(0.0),
            r: self.reflection(alpha),
        }
    }
}

/// `‖P_R T†(A) P_R − A‖_F` (`‖P_R 𝓛†(A) P_R‖_F` for generators): how far an
/// observable supported in `ℛ` is from being invariant under the cut-off
/// dual.
pub fn cutoff_invariance_defect(system: &dyn Dynamics, r: &Subspace, a: &CMatrix) -> f64 {
    let y = r.compress(&system.act_adjoint(a));
    match system.time_kind() {
        TimeKind::Discrete => (y - r.compress(a)).norm(),
        TimeKind::Continuous => y.norm(),
    }
}

/// `‖T(UρU†) − U T(ρ) U†‖_F` (with `𝓛` for generators).
pub fn commutation_defect(system: &dyn Dynamics, u: &CMatrix, rho: &CMatrix) -> f64 {
    let ud = u.adjoint();
    (system.act(&(u * rho * &ud)) - u * system.act(rho) * &ud).norm()
}

/// Smallest eigenvalue of `𝒮(A†A) − 𝒮(A†)𝒮(A)`, which is non-negative for
/// a completely positive unital map.
pub fn kadison_gap(s: &CutoffDual, a: &CMatrix) -> Result<f64> {
    if s.time_kind == TimeKind::Continuous {
        return Err(Error::invalid(
            "the Kadison inequality concerns maps; use the cut-off dual of a step channel",
        ));
    }
    if a.shape() != (s.dim, s.dim) {
        return Err(Error::dim("observable does not match the cut-off dual"));
    }
    let ad = a.adjoint();
    let gap = s.apply(&(&ad * a)) - s.apply(&ad) * s.apply(a);
    Ok(eigh(&gap).min())
}

/// A unitary relating two splittings of one `𝒳` block into minimal
/// enclosures, with the checks it passed.
#[derive(Debug, Clone)]
pub struct Equivalence {
    pub unitary: CMatrix,
    /// `(index in A, index in B)` in processing order.
    pub pairing: Vec<(usize, usize)>,
    pub rings_used: usize,
    /// `max ‖U P_B U† − P_A‖_F` over the pairs.
    pub mapping_defect: f64,
    /// Largest [`commutation_defect`] over random states on `ℛ`.
    pub commutation_defect: f64,
}

/// Builds `U` with `U 𝓑ⱼ = 𝓐ᵢ` for paired enclosures as a product of ring
/// rotations: each still-mismatched `U𝓑ⱼ` spans a ring with `𝓐ᵢ`, and the
/// rotation of that ring taking it onto `𝓐ᵢ` is applied.
///
/// Enclosures are paired greedily by largest `‖P_A P_B‖_F`.
pub fn equivalence_unitary(
    system: &dyn Dynamics,
    sd: &StructureDecomposition,
    a: &[Subspace],
    b: &[Subspace],
    tol: &Tolerances,
    seed: u64,
) -> Result<Equivalence> {
    let n = sd.dim();
    if system.dim() != n {
        return Err(Error::dim("decomposition does not match the system"));
    }
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::structure(format!(
            "splittings have {} and {} enclosures",
            a.len(),
            b.len()
        )));
    }
    for (name, list) in [("A", a), ("B", b)] {
        for (k, s) in list.iter().enumerate() {
            if s.ambient_dim() != n {
                return Err(Error::dim(format!("splitting {name}, space {k}: wrong ambient dimension")));
            }
            let (ok, leak) = is_enclosure(system, s, tol.eig)?;
            if !ok {
                return Err(Error::structure(format!(
                    "splitting {name}, space {k} is not an enclosure (leakage {leak:.3e})"
                )));
            }
            for t in &list[..k] {
                if s.overlap(t) > ORTHOGONALITY_TOL {
                    return Err(Error::structure(format!(
                        "splitting {name} has non-orthogonal spaces"
                    )));
                }
            }
        }
    }

    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, sa) in a.iter().enumerate() {
        for (j, sb) in b.iter().enumerate() {
            candidates.push((sa.overlap(sb), i, j));
        }
    }
    candidates.sort_by(|x, y| y.0.total_cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let (mut used_a, mut used_b) = (vec![false; a.len()], vec![false; b.len()]);
    let mut pairing = Vec::new();
    for &(_, i, j) in &candidates {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            pairing.push((i, j));
        }
    }
    pairing.sort();

    let identical = pairing.iter().all(|&(i, j)| a[i].distance(&b[j]) <= MAPPING_TOL);
    if !identical {
        let l = sd
            .x_blocks
            .iter()
            .position(|x| x.space.outside(a[0].projector()) <= MAPPING_TOL)
            .ok_or_else(|| Error::structure("the splittings do not lie in one 𝒳 block"))?;
        let x = &sd.x_blocks[l];
        for s in a.iter().chain(b) {
            if x.space.outside(s.projector()) > MAPPING_TOL || s.dim() != x.factor_dim {
                return Err(Error::structure(format!(
                    "every space must be a minimal enclosure of dimension {} inside X{}",
                    x.factor_dim,
                    l + 1
                )));
            }
        }
        if a.len() != x.multiplicity {
            return Err(Error::structure(format!(
                "X{} splits into {} minimal enclosures, not {}",
                l + 1,
                x.multiplicity,
                a.len()
            )));
        }
    }

    let mut u = identity(n);
    let mut rings_used = 0;
    for &(i, j) in &pairing {
        if identical {
            break;
        }
        let target = &a[i];
        let moved = Subspace::span(&(&u * b[j].basis()), tol.rank);
        if target.distance(&moved) <= MAPPING_TOL {
            continue;
        }
        let d = target.dim();
        let rest = (identity(n) - target.projector()) * moved.basis();
        let w = Subspace::span(&rest, 1e-8);
        if w.dim() != d || moved.dim() != d {
            return Err(Error::structure(format!(
                "A{} and the image of B{} do not span a ring",
                i + 1,
                j + 1
            )));
        }
        let ring = RingSphere::new(system, target, &w, tol).map_err(|e| match e {
            Error::InvalidInput(m) => Error::structure(m),
            other => other,
        })?;
        let pb = moved.projector();
        let cos2 = ((target.projector() * pb).trace().re / d as f64).clamp(0.0, 1.0);
        let alpha = cos2.sqrt().acos();
        let cross = (ring.q().adjoint() * pb).trace() / real(d as f64);
        let z = if cross.norm() > 1e-12 { cross / real(cross.norm()) } else { ONE };
        let ring = ring.rephased(z)?;
        let off = (ring.p(alpha, ONE) - pb).norm();
        if off > MAPPING_TOL {
            return Err(Error::structure(format!(
                "the image of B{} is not on the sphere through A{} (distance {off:.3e})",
                j + 1,
                i + 1
            )));
        }
        u = ring.unitaries(-alpha).u * u;
        rings_used += 1;
    }

    let ud = u.adjoint();
    let mapping_defect = pairing
        .iter()
        .map(|&(i, j)| (&u * b[j].projector() * &ud - a[i].projector()).norm())
        .fold(0.0, f64::max);
    if mapping_defect > MAPPING_TOL {
        return Err(Error::structure(format!(
            "constructed unitary misses the target splitting by {mapping_defect:.3e}"
        )));
    }
    let mut rng = zoo::rng(seed);
    let commutation = (0..COMMUTATION_SAMPLES)
        .map(|_| {
            let rho = sd.recurrent.embed(zoo::random_density(&mut rng, sd.recurrent.dim()).matrix());
            commutation_defect(system, &u, &rho)
        })
        .fold(0.0, f64::max);
    if commutation > tol.eig {
        return Err(Error::structure(format!(
            "constructed unitary does not commute with the dynamics (defect {commutation:.3e})"
        )));
    }
    Ok(Equivalence {
        unitary: u,
        pairing,
        rings_used,
        mapping_defect,
        commutation_defect: commutation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    StationaryState,
    StationaryCoherence,
    RotatingCoherence,
    IntraEnclosureOscillation,
    DecayingCoherenceWitness,
}

impl ModeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModeKind::StationaryState => "stationary_state",
            ModeKind::StationaryCoherence => "stationary_coherence",
            ModeKind::RotatingCoherence => "rotating_coherence",
            ModeKind::IntraEnclosureOscillation => "intra_enclosure_oscillation",
            ModeKind::DecayingCoherenceWitness => "decaying_coherence_witness",
        }
    }
}

/// One peripheral eigenvalue restricted to one ordered pair of minimal
/// enclosures `(e, f)`, i.e. to the block `P_e M P_f`; or, for
/// `DecayingCoherenceWitness`, a pair whose coherence block has no
/// peripheral spectrum at all.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeClassification {
    pub kind: ModeKind,
    pub blocks: (BlockId, BlockId),
    #[serde(with = "io::complex")]
    pub eigenvalue: C64,
    /// `arg λ ∈ (−π, π]` in discrete time, `Im λ` in continuous time.
    pub frequency: f64,
    /// `(q, m)` with `λ = e^{2πiq/m}` and `m` minimal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_of_unity: Option<(u32, u32)>,
    /// Independent eigenmatrices supported in the block (0 for witnesses).
    pub multiplicity: usize,
    /// For witnesses: spectral radius (discrete) or abscissa (continuous)
    /// of the coherence block map.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay_bound: Option<f64>,
}

pub fn frequency(kind: TimeKind, lambda: C64) -> f64 {
    match kind {
        TimeKind::Discrete => {
            let f = lambda.arg();
            if f <= -PI {
                f + 2.0 * PI
            } else {
                f
            }
        }
        TimeKind::Continuous => lambda.im,
    }
}

/// Smallest `m ∈ 2..=max_m` with some `1 ≤ q < m` and
/// `|λ − e^{2πiq/m}| ≤ ROOT_OF_UNITY_TOL`.
pub fn fit_root_of_unity(lambda: C64, max_m: usize) -> Option<(u32, u32)> {
    (2..=max_m as u32).find_map(|m| {
        (1..m).find_map(|q| {
            let root = C64::from_polar(1.0, 2.0 * PI * q as f64 / m as f64);
            ((lambda - root).norm() <= ROOT_OF_UNITY_TOL).then_some((q, m))
        })
    })
}

fn same_x_block(e: BlockId, f: BlockId) -> bool {
    matches!((e, f), (BlockId::Replica(l, _), BlockId::Replica(k, _)) if l == k)
}

/// Attributes every peripheral eigenspace to the enclosure pairs `(e, f)`
/// of `sd.enclosures()` carrying its mass, classifies each piece, and adds
/// a witness for every unordered pair of enclosures whose coherence block
/// carries no peripheral mode.
///
/// Eigenvalues are grouped at `tol.cluster`. Pieces holding at most
/// `ATTRIBUTION_TOL` of the eigenspace's squared norm are ignored; mass
/// outside `ℛ` beyond that fraction is a structural error.
pub fn classify_modes(
    system: &dyn Dynamics,
    sd: &StructureDecomposition,
    modes: &[EigenMode],
    tol: &Tolerances,
) -> Result<Vec<ModeClassification>> {
    let n = sd.dim();
    if system.dim() != n {
        return Err(Error::dim("decomposition does not match the system"));
    }
    let kind = system.time_kind();
    for m in modes {
        if m.eigenmatrix.shape() != (n, n) {
            return Err(Error::dim("eigenmatrix does not match the system"));
        }
        if !system.is_peripheral(m.eigenvalue, tol.peripheral.max(tol.cluster)) {
            return Err(Error::invalid(format!(
                "eigenvalue {} is not peripheral",
                m.eigenvalue
            )));
        }
    }
    let enclosures = sd.enclosures();
    let values: Vec<C64> = modes.iter().map(|m| m.eigenvalue).collect();
    let mut out = Vec::new();
    let mut occupied: BTreeMap<(usize, usize), Vec<C64>> = BTreeMap::new();

    for cluster in linalg::cluster_complex(&values, tol.cluster) {
        let lambda = cluster.iter().map(|&k| values[k]).sum::<C64>() / real(cluster.len() as f64);
        let mats: Vec<&CMatrix> = cluster.iter().map(|&k| &modes[k].eigenmatrix).collect();
        let total: f64 = mats.iter().map(|m| m.norm_squared()).sum();
        let mut attributed = 0.0;
        for (ei, (e_id, e)) in enclosures.iter().enumerate() {
            for (fi, (f_id, f)) in enclosures.iter().enumerate() {
                let pieces: Vec<CMatrix> = mats
                    .iter()
                    .map(|m| e.basis().adjoint() * *m * f.basis())
                    .collect();
                let mass: f64 = pieces.iter().map(|p| p.norm_squared()).sum();
                attributed += mass;
                if mass <= ATTRIBUTION_TOL * total {
                    continue;
                }
                let stacked = CMatrix::from_columns(&pieces.iter().map(vec).collect::<Vec<_>>());
                let multiplicity = linalg::range_basis(&stacked, 1e-6).ncols();
                let stationary = system.is_stationary_eigenvalue(lambda, tol.cluster.max(tol.peripheral));
                let blocks = (*e_id, *f_id);
                let mut root_of_unity = None;
                let class = if stationary {
                    if ei == fi {
                        ModeKind::StationaryState
                    } else if same_x_block(*e_id, *f_id) {
                        ModeKind::StationaryCoherence
                    } else {
                        return Err(Error::structure(format!(
                            "stationary coherence between {e_id} and {f_id}, which lie in different central blocks"
                        )));
                    }
                } else if ei != fi {
                    ModeKind::RotatingCoherence
                } else if kind == TimeKind::Continuous {
                    return Err(Error::structure(format!(
                        "continuous-time oscillation with eigenvalue {lambda} inside the minimal enclosure {e_id}"
                    )));
                } else {
                    root_of_unity = Some(fit_root_of_unity(lambda, e.dim()).ok_or_else(|| {
                        Error::structure(format!(
                            "oscillation {lambda} inside {e_id} is not a root of unity of order ≤ {}",
                            e.dim()
                        ))
                    })?);
                    ModeKind::IntraEnclosureOscillation
                };
                if ei != fi {
                    occupied.entry((ei, fi)).or_default().push(lambda);
                }
                out.push(ModeClassification {
                    kind: class,
                    blocks,
                    eigenvalue: lambda,
                    frequency: frequency(kind, lambda),
                    root_of_unity,
                    multiplicity,
                    decay_bound: None,
                });
            }
        }
        let outside = total - attributed;
        if outside > ATTRIBUTION_TOL * total {
            return Err(Error::structure(format!(
                "peripheral eigenvalue {lambda} has {:.3e} of its weight outside ℛ",
                outside / total
            )));
        }
    }

    if kind == TimeKind::Continuous {
        for (&(ei, fi), lambdas) in &occupied {
            if lambdas.len() > 1 {
                return Err(Error::structure(format!(
                    "coherence block ({}, {}) carries {} distinct peripheral eigenvalues in continuous time",
                    enclosures[ei].0,
                    enclosures[fi].0,
                    lambdas.len()
                )));
            }
        }
    }

    for (ei, (e_id, e)) in enclosures.iter().enumerate() {
        for (fi, (f_id, f)) in enclosures.iter().enumerate().skip(ei + 1) {
            if occupied.contains_key(&(ei, fi)) || occupied.contains_key(&(fi, ei)) {
                continue;
            }
            let m = block_map(system, e, f, Picture::Schrodinger)?;
            let (bound, lambda) = dominant_eigenvalue(&m, kind)?;
            let decays = match kind {
                TimeKind::Discrete => bound < 1.0 - DECAY_MARGIN,
                TimeKind::Continuous => bound < -DECAY_MARGIN,
            };
            if !decays {
                return Err(Error::structure(format!(
                    "coherence block ({e_id}, {f_id}) has peripheral eigenvalue {lambda} missing from the mode list"
                )));
            }
            out.push(ModeClassification {
                kind: ModeKind::DecayingCoherenceWitness,
                blocks: (*e_id, *f_id),
                eigenvalue: lambda,
                frequency: frequency(kind, lambda),
                root_of_unity: None,
                multiplicity: 0,
                decay_bound: Some(bound),
            });
        }
    }
    Ok(out)
}

/// Largest off-diagonal modulus of `ρ_t`, compressed to `block` and written
/// in the eigenbasis of the block's stationary state, after `steps` steps of
/// length `dt` (`dt` is ignored in discrete time).
pub fn enclosure_dephasing(
    system: &dyn Dynamics,
    block: &UBlock,
    rho0: &DensityMatrix,
    steps: usize,
    dt: f64,
) -> Result<f64> {
    if rho0.dim() != system.dim() {
        return Err(Error::dim("state does not match the system"));
    }
    let step = match system.time_kind() {
        TimeKind::Discrete => system.step_channel(1.0)?,
        TimeKind::Continuous => system.step_channel(dt)?,
    };
    let mut rho = rho0.matrix().clone();
    for _ in 0..steps {
        rho = step.act(&rho);
    }
    let basis = eigh(&block.space.compress(block.stationary.matrix())).vectors;
    let c = basis.adjoint() * block.space.compress(&rho) * &basis;
    let mut worst: f64 = 0.0;
    for i in 0..c.nrows() {
        for j in 0..c.ncols() {
            if i != j {
                worst = worst.max(c[(i, j)].norm());
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::peripheral_modes;
    use crate::structure::{cutoff_dual, decompose_structure};
    use crate::zoo::{
        collapse_cascade, cyclic_shift, dephasing, depolarizing, direct_sum, hamiltonian_generator,
        random_cptp, replica, sudden_decay,
    };
    use crate::channels::QuantumChannel;
    use crate::linalg::unit;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn replica_channel() -> QuantumChannel {
        replica(2, &depolarizing(0.5).unwrap()).unwrap()
    }

    fn replica_ring() -> RingSphere {
        let ch = replica_channel();
        RingSphere::new(&ch, &Subspace::coordinate(4, &[0, 1]), &Subspace::coordinate(4, &[2, 3]), &tol())
            .unwrap()
    }

    fn dephasing3() -> QuantumChannel {
        QuantumChannel::from_kraus((0..3).map(|k| unit(3, k, k)).collect()).unwrap()
    }

    #[test]
    fn block_decompose_examples() {
        let v = Subspace::coordinate(3, &[0]);
        let w = Subspace::coordinate(3, &[1, 2]);
        let bd = block_decompose(v.projector(), &v, &w).unwrap();
        assert!((&bd.vv - v.projector()).norm() < 1e-15);
        assert!(bd.ww.norm() + bd.coherence_norm() < 1e-15);

        let x = unit(3, 0, 2);
        let bd = block_decompose(&x, &v, &w).unwrap();
        assert!((&bd.c1 - &x).norm() < 1e-15 && bd.c2.norm() == 0.0);

        let mut rng = zoo::rng(3);
        let h = zoo::random_hermitian(&mut rng, 3);
        let bd = block_decompose(&h, &v, &w).unwrap();
        assert!((&bd.c2 - bd.c1.adjoint()).norm() < 1e-14);
        assert!((bd.reassemble() - &h).norm() < 1e-14);

        let skew = Subspace::span(&CMatrix::from_column_slice(3, 1, &[ONE, ONE, c64(0.0, 0.0)]), 1e-12);
        assert!(block_decompose(&h, &v, &skew).is_err());
    }

    #[test]
    fn replica_blocks_are_preserved() {
        let ch = replica_channel();
        let sd = decompose_structure(&ch, &tol(), 1).unwrap();
        let rep = verify_block_preservation(&ch, &sd, 1e-10, 2).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.checks.iter().any(|c| c.kind == BlockCheckKind::Coherence));
    }

    #[test]
    fn dephasing_scales_coherence() {
        let p = 0.3;
        let ch = dephasing(p).unwrap();
        let x = unit(2, 0, 1);
        assert!((ch.act(&x) - &x * real(1.0 - 2.0 * p)).norm() < 1e-14);
        let sd = decompose_structure(&ch, &tol(), 1).unwrap();
        assert!(verify_block_preservation(&ch, &sd, 1e-12, 1).unwrap().passed);
    }

    #[test]
    fn sudden_decay_coherence_never_enters_decaying_block() {
        let ch = sudden_decay(&DensityMatrix::basis_state(2, 0)).unwrap();
        let sd = decompose_structure(&ch, &tol(), 1).unwrap();
        let rep = verify_block_preservation(&ch, &sd, 1e-12, 1).unwrap();
        let dr: Vec<_> = rep
            .checks
            .iter()
            .filter(|c| c.kind == BlockCheckKind::DecayingCoherence)
            .collect();
        assert_eq!(dr.len(), 2);
        assert!(dr.iter().all(|c| c.leakage < 1e-15));
        assert!(ch.act(&unit(2, 1, 0)).norm() < 1e-15);
    }

    #[test]
    fn replica_stationary_coherence() {
        let ring = replica_ring();
        // |0⟩⟨1| ⊗ 𝟙 in replica ⊗ factor coordinates
        let expected = unit(4, 0, 2) + unit(4, 1, 3);
        assert!((ring.q() - &expected).norm() < 1e-10, "{}", ring.q());
    }

    #[test]
    fn no_coherence_without_ring() {
        let ch = dephasing(0.3).unwrap();
        let q = stationary_coherence(&ch, &Subspace::coordinate(2, &[0]), &Subspace::coordinate(2, &[1]), &tol());
        assert!(q.unwrap().is_none());

        let sum = direct_sum(&cyclic_shift(3).unwrap(), &dephasing3()).unwrap();
        let cyc = Subspace::coordinate(6, &[0, 1, 2]);
        for k in 3..6 {
            let d = Subspace::coordinate(6, &[k]);
            let m = block_map(&sum, &cyc, &d, Picture::Schrodinger).unwrap();
            let (radius, _) = dominant_eigenvalue(&m, TimeKind::Discrete).unwrap();
            assert!(radius < 1.0 - 1e-9);
            assert!(matches!(
                stationary_coherence(&sum, &cyc, &d, &tol()),
                Ok(None) | Err(Error::Structure(_))
            ));
        }
    }

    #[test]
    fn stationary_coherence_rejects_non_enclosures() {
        let ch = replica_channel();
        let plus = Subspace::span(&CMatrix::from_column_slice(4, 1, &[ONE, ONE, ONE, ONE]), 1e-12);
        let q = stationary_coherence(&ch, &plus, &plus.complement(), &tol());
        assert!(matches!(q, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn ring_projector_examples() {
        let ring = replica_ring();
        let (pv, pw) = (ring.v().projector().clone(), ring.w().projector().clone());
        assert!((ring.projector(0.0, ONE).unwrap() - &pv).norm() < 1e-15);
        assert!((ring.projector(PI / 2.0, ONE).unwrap() - &pw).norm() < 1e-15);
        let half = (&pv + &pw + ring.q() + ring.q().adjoint()) * real(0.5);
        let p = ring.projector(PI / 4.0, ONE).unwrap();
        assert!((&p - &half).norm() < 1e-15);
        assert!((&p * &p - &p).norm() < 1e-14);
        let ch = replica_channel();
        assert!(cutoff_invariance_defect(&ch, &Subspace::full(4), &p) < 1e-12);
        assert!(ring.projector(0.3, c64(2.0, 0.0)).is_err());
    }

    #[test]
    fn ring_unitary_examples() {
        let ring = replica_ring();
        assert!((ring.unitaries(0.0).u - identity(4)).norm() < 1e-15);
        let r0 = ring.reflection(0.0);
        assert!((&r0 * &r0 - identity(4)).norm() < 1e-15);
        let u = ring.unitaries(PI / 2.0).u;
        let moved = &u * ring.projector(0.0, ONE).unwrap() * u.adjoint();
        assert!((moved - ring.w().projector()).norm() < 1e-14);
        let z = C64::from_polar(1.0, 0.7);
        let u = ring.rephased(z).unwrap().unitaries(0.4).u;
        let moved = &u * ring.projector(0.3, z).unwrap() * u.adjoint();
        assert!((moved - ring.projector(0.7, z).unwrap()).norm() < 1e-14);
    }

    #[test]
    fn equivalence_of_rotated_replicas() {
        let ch = replica_channel();
        let sd = decompose_structure(&ch, &tol(), 1).unwrap();
        let ring = replica_ring();
        let a = vec![ring.v().clone(), ring.w().clone()];
        let b = vec![
            Subspace::span(&ring.projector(PI / 4.0, ONE).unwrap(), 1e-10),
            Subspace::span(&ring.projector(3.0 * PI / 4.0, ONE).unwrap(), 1e-10),
        ];
        let eq = equivalence_unitary(&ch, &sd, &a, &b, &tol(), 5).unwrap();
        assert!(eq.mapping_defect < 1e-8);
        assert!(eq.commutation_defect < 1e-9);
        assert_eq!(eq.rings_used, 1);

        let same = equivalence_unitary(&ch, &sd, &a, &a, &tol(), 5).unwrap();
        assert_eq!(same.unitary, identity(4));
    }

    #[test]
    fn equivalence_fails_for_unique_splitting() {
        let ch = dephasing(0.3).unwrap();
        let sd = decompose_structure(&ch, &tol(), 1).unwrap();
        let a = vec![Subspace::coordinate(2, &[0]), Subspace::coordinate(2, &[1])];
        let h = CMatrix::from_column_slice(2, 1, &[ONE, ONE]);
        let plus = Subspace::span(&h, 1e-12);
        let b = vec![plus.clone(), plus.complement()];
        let err = equivalence_unitary(&ch, &sd, &a, &b, &tol(), 1).unwrap_err();
        assert!(matches!(err, Error::Structure(_)), "{err}");
    }

    #[test]
    fn roots_of_unity() {
        assert_eq!(fit_root_of_unity(C64::from_polar(1.0, -2.0 * PI / 3.0), 3), Some((2, 3)));
        assert_eq!(fit_root_of_unity(c64(-1.0, 0.0), 5), Some((1, 2)));
        assert_eq!(fit_root_of_unity(C64::from_polar(1.0, 2.0 * PI * 2.0 / 4.0), 4), Some((1, 2)));
        assert_eq!(fit_root_of_unity(C64::from_polar(1.0, 1.0), 6), None);
        assert_eq!(fit_root_of_unity(C64::from_polar(1.0, 2.0 * PI / 5.0), 4), None);
        assert!((frequency(TimeKind::Discrete, c64(-1.0, -0.0)) - PI).abs() < 1e-15);
    }

    #[test]
    fn classify_cyclic_shift() {
        let ch = cyclic_shift(3).unwrap();
        let sd = decompose_structure(&ch, &tol(), 1).unwrap();
        let modes = peripheral_modes(&ch, &tol()).unwrap();
        let cls = classify_modes(&ch, &sd, &modes, &tol()).unwrap();
        assert_eq!(cls.len(), 3);
        assert_eq!(cls.iter().filter(|c| c.kind == ModeKind::StationaryState).count(), 1);
        let mut roots: Vec<_> = cls.iter().filter_map(|c| c.root_of_unity).collect();
        roots.sort();
        assert_eq!(roots, vec![(1, 3), (2, 3)]);
        let down = cls
            .iter()
            .find(|c| (c.eigenvalue - C64::from_polar(1.0, -2.0 * PI / 3.0)).norm() < 1e-10)
            .unwrap();
        assert_eq!(down.kind, ModeKind::IntraEnclosureOscillation);
        assert!((down.frequency + 2.0 * PI / 3.0).abs() < 1e-10);
    }

    #[test]
    fn classify_cascade() {
        let ch = collapse_cascade(5, 3).unwrap();
        let sd = decompose_structure(&ch, &tol(), 1).unwrap();
        let modes = peripheral_modes(&ch, &tol()).unwrap();
        let cls = classify_modes(&ch, &sd, &modes, &tol()).unwrap();
        let osc: Vec<_> = cls
            .iter()
            .filter(|c| c.kind == ModeKind::IntraEnclosureOscillation)
            .collect();
        assert_eq!(osc.len(), 2);
        assert!(osc.iter().all(|c| c.root_of_unity.unwrap().1 == 3));
    }

    #[test]
    fn classify_hamiltonian_rotation() {
        let h = CMatrix::from_diagonal(&crate::linalg::CVector::from_vec(vec![real(0.0), ONE]));
        let gen = hamiltonian_generator(h).unwrap();
        let sd = decompose_structure(&gen, &tol(), 1).unwrap();
        let modes = peripheral_modes(&gen, &tol()).unwrap();
        let cls = classify_modes(&gen, &sd, &modes, &tol()).unwrap();
        let rot = cls
            .iter()
            .find(|c| c.kind == ModeKind::RotatingCoherence && (c.eigenvalue - c64(0.0, 1.0)).norm() < 1e-10)
            .unwrap();
        assert_eq!(rot.blocks, (BlockId::U(0), BlockId::U(1)));
        assert!((rot.frequency - 1.0).abs() < 1e-10);
        assert!(cls.iter().all(|c| c.kind != ModeKind::IntraEnclosureOscillation));
    }

    #[test]
    fn classify_replica_and_dephasing() {
        let ch = replica_channel();
        let sd = decompose_structure(&ch, &tol(), 1).unwrap();
        let cls = classify_modes(&ch, &sd, &peripheral_modes(&ch, &tol()).unwrap(), &tol()).unwrap();
        assert_eq!(cls.iter().filter(|c| c.kind == ModeKind::StationaryCoherence).count(), 2);
        assert_eq!(cls.iter().filter(|c| c.kind == ModeKind::StationaryState).count(), 2);

        let ch = dephasing(0.3).unwrap();
        let sd = decompose_structure(&ch, &tol(), 1).unwrap();
        let cls = classify_modes(&ch, &sd, &peripheral_modes(&ch, &tol()).unwrap(), &tol()).unwrap();
        let w: Vec<_> = cls
            .iter()
            .filter(|c| c.kind == ModeKind::DecayingCoherenceWitness)
            .collect();
        assert_eq!(w.len(), 1);
        assert!((w[0].decay_bound.unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn classification_serializes() {
        let c = ModeClassification {
            kind: ModeKind::IntraEnclosureOscillation,
            blocks: (BlockId::U(0), BlockId::U(0)),
            eigenvalue: c64(-0.5, 0.5),
            frequency: 2.0,
            root_of_unity: Some((1, 3)),
            multiplicity: 1,
            decay_bound: None,
        };
        let j = serde_json::to_value(&c).unwrap();
        assert_eq!(j["kind"], "intra_enclosure_oscillation");
        assert_eq!(j["blocks"][0], "U1");
        assert_eq!(j["root_of_unity"][1], 3);
        let back: ModeClassification = serde_json::from_value(j).unwrap();
        assert_eq!(back.root_of_unity, Some((1, 3)));
    }

    #[test]
    fn kadison_on_random_channels() {
        let mut rng = zoo::rng(9);
        for seed in 0..5 {
            let ch = random_cptp(3, 2, seed).unwrap();
            let cut = cutoff_dual(&ch, &Subspace::full(3), &tol()).unwrap();
            let a = zoo::gaussian_matrix(&mut rng, 3, 3);
            assert!(kadison_gap(&cut, &a).unwrap() >= -1e-12);
        }
    }

    #[test]
    fn dephasing_inside_random_enclosure() {
        let ch = random_cptp(3, 2, 4).unwrap();
        let sd = decompose_structure(&ch, &tol(), 1).unwrap();
        let block = &sd.u_blocks[0];
        let rho0 = DensityMatrix::basis_state(3, 0);
        assert!(enclosure_dephasing(&ch, block, &rho0, 400, 1.0).unwrap() < 1e-6);
    }
}
