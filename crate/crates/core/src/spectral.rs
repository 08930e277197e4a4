//! Superoperator eigenanalysis: fixed spaces, Cesàro means and peripheral
//! modes.
//!
//! Continuous-time systems are analyzed directly on the generator: the
//! kernel of `𝓛` plays the role of the fixed space and the imaginary axis
//! that of the unit circle.

use serde::{Deserialize, Serialize};

use crate::channels::{DensityMatrix, Dynamics, TimeKind};
use crate::error::{Error, Result};
use crate::linalg::{self, c64, eig_general, identity, unvec, vec, C64, CMatrix};
use crate::tolerance::Tolerances;

/// Eigenvector conditioning above which the spectral projector is replaced
/// by power averaging.
pub const PROJECTOR_CONDITION_LIMIT: f64 = 1e6;

/// Number of averaging steps used by the power-averaging fallback.
pub const CESARO_FALLBACK_STEPS: u32 = 1 << 14;

#[derive(Debug, Clone)]
pub struct EigenMode {
    pub eigenvalue: C64,
    /// Frobenius-normalized.
    pub eigenmatrix: CMatrix,
    pub residual: f64,
}

/// Orthonormal (Frobenius) basis of stationary matrices.
#[derive(Debug, Clone)]
pub struct FixedSpace {
    pub basis: Vec<CMatrix>,
    pub hermitian_closed: bool,
}

impl FixedSpace {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Frobenius distance from `x` to the span of the basis.
    pub fn distance(&self, x: &CMatrix) -> f64 {
        let mut r = x.clone();
        for b in &self.basis {
            let coeff = b.dotc(x);
            r -= b * coeff;
        }
        r.norm()
    }
}

/// Full eigendecomposition of a superoperator, unvectorized.
///
/// Discrete-time modes are sorted by descending modulus, continuous-time
/// modes by descending real part; ties are broken by the argument or the
/// imaginary part so the order is deterministic.
pub fn eig_superop(s: &CMatrix, kind: TimeKind, cluster_tol: f64) -> Result<Vec<EigenMode>> {
    let n = linalg::exact_sqrt(s.nrows())
        .filter(|_| s.is_square())
        .ok_or_else(|| Error::dim("superoperator dimension is not a perfect square"))?;
    let pairs = eig_general(s, cluster_tol)?;
    let mut modes: Vec<EigenMode> = pairs
        .into_iter()
        .map(|p| EigenMode {
            eigenvalue: p.value,
            eigenmatrix: unvec(&p.vector, n),
            residual: p.residual,
        })
        .collect();
    sort_modes(&mut modes, kind);
    Ok(modes)
}

fn sort_modes(modes: &mut [EigenMode], kind: TimeKind) {
    let key = |m: &EigenMode| -> (f64, f64) {
        let l = m.eigenvalue;
        match kind {
            TimeKind::Discrete => (-l.norm(), l.arg()),
            TimeKind::Continuous => (-l.re, l.im),
        }
    };
    modes.sort_by(|a, b| {
        let (ka, kb) = (key(a), key(b));
        // Moduli that agree to rounding are ordered by the secondary key.
        if (ka.0 - kb.0).abs() > 1e-12 {
            ka.0.total_cmp(&kb.0)
        } else {
            ka.1.total_cmp(&kb.1)
        }
    });
}

/// Fixed space of an operator given its stationarity operator (`S − 𝟙` or
/// `𝓛` on `n × n` matrices).
pub fn fixed_space_of(stationarity: &CMatrix, n: usize, tol: &Tolerances) -> FixedSpace {
    let ns = linalg::nullspace(stationarity, tol.rank);
    let mats: Vec<CMatrix> = ns
        .column_iter()
        .map(|c| unvec(&c.into_owned(), n))
        .collect();
    let k = mats.len();
    let (basis, next) = linalg::hermitian_basis(&mats, Some(k), tol.rank);
    FixedSpace {
        basis,
        hermitian_closed: next <= 1e-6,
    }
}

/// `{X : T(X) = X}` (or `ker 𝓛`) by singular-value thresholding.
pub fn fixed_space(system: &dyn Dynamics, tol: &Tolerances) -> Result<FixedSpace> {
    let fs = fixed_space_of(&system.stationarity_operator(), system.dim(), tol);
    if fs.dim() == 0 {
        return Err(Error::structure(
            "empty fixed space; a trace-preserving system always has a stationary state",
        ));
    }
    Ok(fs)
}

/// How a stationary projector was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectorMethod {
    Spectral,
    PowerAveraging,
}

/// Superoperator of the projection onto the stationary eigenspace along the
/// remaining spectral subspaces.
pub fn stationary_projector(
    system: &dyn Dynamics,
    tol: &Tolerances,
) -> Result<(CMatrix, ProjectorMethod)> {
    let f = system.stationarity_operator();
    let right = linalg::nullspace(&f, tol.rank);
    let left = linalg::nullspace(&f.adjoint(), tol.rank);
    if right.ncols() == 0 {
        return Err(Error::structure("empty fixed space"));
    }
    if right.ncols() == left.ncols() {
        let overlap = left.adjoint() * &right;
        let s = linalg::svd(&overlap);
        let smin = s.values.last().copied().unwrap_or(0.0);
        let cond = s.values[0] / smin;
        if smin > 0.0 && cond <= PROJECTOR_CONDITION_LIMIT {
            let inv = overlap
                .try_inverse()
                .ok_or_else(|| Error::Numerical("singular eigenvector overlap".into()))?;
            return Ok((&right * inv * left.adjoint(), ProjectorMethod::Spectral));
        }
    }
    Ok((power_average_superop(system, CESARO_FALLBACK_STEPS)?, ProjectorMethod::PowerAveraging))
}

/// `(1/T) Σ_{t<T} Sᵗ` for `T` rounded up to a power of two, by doubling.
/// Generators are sampled with unit time step.
pub fn power_average_superop(system: &dyn Dynamics, steps: u32) -> Result<CMatrix> {
    let step = system.step_channel(1.0)?;
    let s = step.superop();
    let d = s.nrows();
    let mut avg = identity(d);
    let mut pow = s.clone();
    let mut t = 1u32;
    while t < steps.max(1) {
        avg = (&avg + &pow * &avg) * c64(0.5, 0.0);
        pow = &pow * &pow;
        t *= 2;
    }
    Ok(avg)
}

/// Explicit running average `(1/T) Σ_{t<T} Tᵗ(X)`; generators advance by `dt`.
pub fn cesaro_average_iterative(
    system: &dyn Dynamics,
    x: &CMatrix,
    steps: usize,
    dt: f64,
) -> Result<CMatrix> {
    let n = system.dim();
    if x.shape() != (n, n) {
        return Err(Error::dim("initial matrix does not match the system"));
    }
    let step = system.step_channel(dt)?;
    let mut cur = x.clone();
    let mut acc = CMatrix::zeros(n, n);
    for _ in 0..steps.max(1) {
        acc += &cur;
        cur = step.act(&cur);
    }
    Ok(acc / c64(steps.max(1) as f64, 0.0))
}

/// Time-averaged state `ρ̄` reached from `ρ0`.
pub fn cesaro_mean_state(
    system: &dyn Dynamics,
    rho0: &DensityMatrix,
    tol: &Tolerances,
) -> Result<DensityMatrix> {
    if rho0.dim() != system.dim() {
        return Err(Error::dim("initial state does not match the system"));
    }
    let (p, _) = stationary_projector(system, tol)?;
    let mean = unvec(&(p * vec(rho0.matrix())), system.dim());
    DensityMatrix::normalized(&mean, tol).map_err(|e| {
        Error::structure(format!("projected mean state is not a state: {e}"))
    })
}

/// Heisenberg-picture mean `Ā`, dual to the mean state:
/// `Tr(Ā ρ) = Tr(A ρ̄)`.
pub fn mean_operator(system: &dyn Dynamics, a: &CMatrix, tol: &Tolerances) -> Result<CMatrix> {
    let n = system.dim();
    if a.shape() != (n, n) {
        return Err(Error::dim("observable does not match the system"));
    }
    let (p, _) = stationary_projector(system, tol)?;
    let ad = a.adjoint();
    Ok(unvec(&(p.adjoint() * vec(&ad)), n).adjoint())
}

/// Modes on the unit circle (discrete) or imaginary axis (continuous).
///
/// Bounded evolutions have a semisimple peripheral spectrum; a Jordan block
/// there, detected as `ker (S − λ)² ≠ ker (S − λ)`, is a structural error.
pub fn peripheral_modes(system: &dyn Dynamics, tol: &Tolerances) -> Result<Vec<EigenMode>> {
    let modes: Vec<EigenMode> = eig_superop(system.superop(), system.time_kind(), tol.cluster)?
        .into_iter()
        .filter(|m| system.is_peripheral(m.eigenvalue, tol.peripheral))
        .collect();
    let values: Vec<C64> = modes.iter().map(|m| m.eigenvalue).collect();
    let s = system.superop();
    for cluster in linalg::cluster_complex(&values, tol.cluster) {
        let lambda = cluster.iter().map(|&k| values[k]).sum::<C64>() / c64(cluster.len() as f64, 0.0);
        let shifted = s - identity(s.nrows()) * lambda;
        let first = linalg::nullspace(&shifted, tol.rank).ncols();
        let second = linalg::nullspace(&(&shifted * &shifted), tol.rank).ncols();
        if second > first {
            return Err(Error::structure(format!(
                "peripheral eigenvalue {lambda} is defective ({first} eigenvectors, generalized eigenspace of dimension ≥ {second})"
            )));
        }
    }
    Ok(modes)
}

/// Population `Tr(P_𝒟 ρ_t)` of the decaying subspace for `t = 0..=steps`.
/// `dt` is required for generators.
pub fn decay_profile(
    system: &dyn Dynamics,
    rho0: &DensityMatrix,
    p_decay: &CMatrix,
    steps: usize,
    dt: Option<f64>,
) -> Result<Vec<f64>> {
    let n = system.dim();
    if rho0.dim() != n || p_decay.shape() != (n, n) {
        return Err(Error::dim("state or projector does not match the system"));
    }
    let step = match system.time_kind() {
        TimeKind::Discrete => system.step_channel(1.0)?,
        TimeKind::Continuous => {
            let dt = dt.ok_or_else(|| Error::invalid("continuous systems need dt > 0"))?;
            if !(dt > 0.0) {
                return Err(Error::invalid("dt must be positive"));
            }
            system.step_channel(dt)?
        }
    };
    let mut rho = rho0.matrix().clone();
    let mut out = Vec::with_capacity(steps + 1);
    out.push((p_decay * &rho).trace().re);
    for _ in 0..steps {
        rho = step.act(&rho);
        out.push((p_decay * &rho).trace().re);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::QuantumChannel;
    use crate::linalg::{unit, ONE, ZERO};

    #[test]
    fn defective_peripheral_eigenvalue_is_rejected() {
        // Not a channel: a Jordan block at λ = 1 between vec(|0⟩⟨0|) and vec(|1⟩⟨1|).
        let mut s = identity(4);
        s[(0, 3)] = ONE;
        let map = QuantumChannel::from_superop(s).unwrap();
        let err = peripheral_modes(&map, &Tolerances::default()).unwrap_err();
        assert!(matches!(err, Error::Structure(_)), "{err}");
        assert!(peripheral_modes(&cycle(3), &Tolerances::default()).is_ok());
    }

    fn cycle(n: usize) -> QuantumChannel {
        QuantumChannel::from_kraus((0..n).map(|k| unit(n, (k + 1) % n, k)).collect()).unwrap()
    }

    fn dephasing(p: f64) -> QuantumChannel {
        let z = CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]);
        QuantumChannel::from_kraus(vec![
            identity(2) * c64((1.0 - p).sqrt(), 0.0),
            z * c64(p.sqrt(), 0.0),
        ])
        .unwrap()
    }

    #[test]
    fn identity_superop_has_fourfold_one() {
        let modes = eig_superop(&identity(4), TimeKind::Discrete, 1e-7).unwrap();
        assert_eq!(modes.len(), 4);
        assert!(modes.iter().all(|m| (m.eigenvalue - ONE).norm() < 1e-14));
    }

    #[test]
    fn cycle_three_spectrum() {
        let modes = eig_superop(cycle(3).superop(), TimeKind::Discrete, 1e-7).unwrap();
        let w = |q: f64| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * q / 3.0);
        for target in [ONE, w(1.0), w(-1.0)] {
            assert!(modes.iter().any(|m| (m.eigenvalue - target).norm() < 1e-12));
        }
        let zeros = modes.iter().filter(|m| m.eigenvalue.norm() < 1e-12).count();
        assert_eq!(zeros, 6);
    }

    #[test]
    fn dephasing_spectrum() {
        let modes = eig_superop(dephasing(0.3).superop(), TimeKind::Discrete, 1e-7).unwrap();
        let vals: Vec<f64> = modes.iter().map(|m| m.eigenvalue.re).collect();
        for (v, e) in vals.iter().zip([1.0, 1.0, 0.4, 0.4]) {
            assert!((v - e).abs() < 1e-12, "{vals:?}");
        }
    }

    #[test]
    fn fixed_space_dimensions() {
        let tol = Tolerances::default();
        let id = QuantumChannel::from_kraus(vec![identity(2)]).unwrap();
        assert_eq!(fixed_space(&id, &tol).unwrap().dim(), 4);
        let fs = fixed_space(&cycle(3), &tol).unwrap();
        assert_eq!(fs.dim(), 1);
        let expected = identity(3) / c64(3f64.sqrt(), 0.0);
        let b = &fs.basis[0];
        let phase = b.dotc(&expected);
        assert!((b * phase - &expected).norm() < 1e-10);
        assert!(fs.hermitian_closed);
    }

    #[test]
    fn mean_state_of_cycle() {
        let tol = Tolerances::default();
        let rho = cesaro_mean_state(&cycle(3), &DensityMatrix::basis_state(3, 0), &tol).unwrap();
        assert!((rho.matrix() - identity(3) / c64(3.0, 0.0)).norm() < 1e-12);
        let a = mean_operator(&cycle(3), &unit(3, 0, 0), &tol).unwrap();
        assert!((a - identity(3) / c64(3.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn iterative_average_agrees_with_projector() {
        let tol = Tolerances::default();
        let ch = cycle(3);
        let x = unit(3, 1, 1);
        let proj = cesaro_mean_state(&ch, &DensityMatrix::basis_state(3, 1), &tol).unwrap();
        let it = cesaro_average_iterative(&ch, &x, 3000, 1.0).unwrap();
        assert!((proj.matrix() - it).norm() < 1e-12);
    }

    #[test]
    fn power_average_approximates_projector() {
        let tol = Tolerances::default();
        let ch = dephasing(0.2);
        let (p, method) = stationary_projector(&ch, &tol).unwrap();
        assert_eq!(method, ProjectorMethod::Spectral);
        let avg = power_average_superop(&ch, CESARO_FALLBACK_STEPS).unwrap();
        assert!((p - avg).norm() < 1e-3);
    }

    #[test]
    fn decay_profile_requires_dt_for_generators() {
        use crate::channels::LindbladGenerator;
        let g = LindbladGenerator::new(CMatrix::zeros(2, 2), vec![unit(2, 0, 1)], &Tolerances::default())
            .unwrap();
        let rho = DensityMatrix::basis_state(2, 1);
        assert!(decay_profile(&g, &rho, &unit(2, 1, 1), 3, None).is_err());
        let prof = decay_profile(&g, &rho, &unit(2, 1, 1), 3, Some(0.5)).unwrap();
        for (t, v) in prof.iter().enumerate() {
            assert!((v - (-0.5 * t as f64).exp()).abs() < 1e-12);
        }
    }
}
