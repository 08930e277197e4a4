//! Constructors for the example channels and for seeded random systems.
//!
//! Documentation uses 1-based basis labels `|1⟩ … |n⟩`; storage is 0-based.
//! Random systems draw from ChaCha8 seeded with `seed_from_u64`, with
//! complex Gaussian entries whose real and imaginary parts are independent
//! `N(0, ½)` samples.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channels::{DensityMatrix, LindbladGenerator, QuantumChannel, System};
use crate::error::{Error, Result};
use crate::linalg::{self, c64, eigh, identity, unit, CMatrix, CVector, ONE, ZERO};
use crate::tolerance::Tolerances;

pub type ZooRng = ChaCha8Rng;

pub fn rng(seed: u64) -> ZooRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Complex Gaussian matrix with `E|zᵢⱼ|² = 1`.
pub fn gaussian_matrix(rng: &mut ZooRng, rows: usize, cols: usize) -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c64(re * s, im * s)
    })
}

pub fn random_pure_state(rng: &mut ZooRng, n: usize) -> DensityMatrix {
    let v = gaussian_matrix(rng, n, 1);
    DensityMatrix::pure(&CVector::from_column_slice(v.as_slice()))
}

/// Random full-rank state `GG†/Tr(GG†)`.
pub fn random_density(rng: &mut ZooRng, n: usize) -> DensityMatrix {
    let g = gaussian_matrix(rng, n, n);
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    DensityMatrix::normalized(&(m / c64(tr, 0.0)), &Tolerances::default())
        .expect("Gram matrix is a state")
}

pub fn random_hermitian(rng: &mut ZooRng, n: usize) -> CMatrix {
    linalg::hermitian_part(&gaussian_matrix(rng, n, n))
}

fn check_unit_interval(name: &str, x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::invalid(format!("{name} = {x} must lie in [0, 1]")));
    }
    Ok(())
}

fn real(x: f64) -> crate::linalg::C64 {
    c64(x, 0.0)
}

/// `ρ ↦ Σₖ |k+1⟩⟨k|ρ|k⟩⟨k+1|` with `|n+1⟩ ≡ |1⟩`.
pub fn cyclic_shift(n: usize) -> Result<QuantumChannel> {
    if n < 2 {
        return Err(Error::invalid(format!("cyclic shift needs n ≥ 2, got {n}")));
    }
    QuantumChannel::from_kraus((0..n).map(|k| unit(n, (k + 1) % n, k)).collect())
}

/// The collapse cascade on `ℂⁿ`:
///
/// ```text
/// ρ ↦ (Σ_{k=m}^{n} ⟨k|ρ|k⟩) |1⟩⟨1|
///   + Σ_{k=2}^{m−1} |k⟩⟨k−1|ρ|k−1⟩⟨k|
///   + ⟨m−1|ρ|m−1⟩/(n−m+1) · Σ_{k=m}^{n} |k⟩⟨k|
/// ```
///
/// For `m = 2` the middle sum is empty and the last term reads `⟨1|ρ|1⟩`.
/// Populations cycle with period `m` through `|1⟩ → … → |m−1⟩ → {|m⟩…|n⟩}`.
pub fn collapse_cascade(n: usize, m: usize) -> Result<QuantumChannel> {
    if m < 2 || m > n {
        return Err(Error::invalid(format!(
            "collapse cascade needs 2 ≤ m ≤ n, got n = {n}, m = {m}"
        )));
    }
    // 1-based labels below, shifted on storage.
    let mut kraus = Vec::new();
    for k in m..=n {
        kraus.push(unit(n, 0, k - 1));
    }
    for k in 2..m {
        kraus.push(unit(n, k - 1, k - 2));
    }
    let w = real(1.0 / ((n - m + 1) as f64).sqrt());
    for k in m..=n {
        kraus.push(unit(n, k - 1, m - 2) * w);
    }
    QuantumChannel::from_kraus(kraus)
}

/// `ρ ↦ Tr(ρ) ρ∞`, with Kraus operators `√pᵢ |vᵢ⟩⟨j|` from the spectral
/// decomposition `ρ∞ = Σ pᵢ |vᵢ⟩⟨vᵢ|`.
pub fn sudden_decay(rho_inf: &DensityMatrix) -> Result<QuantumChannel> {
    let n = rho_inf.dim();
    let eig = eigh(rho_inf.matrix());
    let mut kraus = Vec::new();
    for (i, &p) in eig.values.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let v = eig.vectors.column(i);
        for j in 0..n {
            let mut k = CMatrix::zeros(n, n);
            k.column_mut(j).copy_from(&(v * real(p.sqrt())));
            kraus.push(k);
        }
    }
    QuantumChannel::from_kraus(kraus)
}

pub fn amplitude_damping(gamma: f64) -> Result<QuantumChannel> {
    check_unit_interval("gamma", gamma)?;
    let k0 = CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, real((1.0 - gamma).sqrt())]);
    let k1 = unit(2, 0, 1) * real(gamma.sqrt());
    QuantumChannel::from_kraus(vec![k0, k1])
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, c64(0.0, -1.0), c64(0.0, 1.0), ZERO])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

/// `ρ ↦ (1−p)ρ + p ZρZ`; coherences shrink by `1 − 2p` per step.
pub fn dephasing(p: f64) -> Result<QuantumChannel> {
    check_unit_interval("p", p)?;
    QuantumChannel::from_kraus(vec![
        identity(2) * real((1.0 - p).sqrt()),
        pauli_z() * real(p.sqrt()),
    ])
}

/// `ρ ↦ (1−p)ρ + p Tr(ρ) 𝟙/2`.
pub fn depolarizing(p: f64) -> Result<QuantumChannel> {
    check_unit_interval("p", p)?;
    let q = real((p / 4.0).sqrt());
    QuantumChannel::from_kraus(vec![
        identity(2) * real((1.0 - 3.0 * p / 4.0).sqrt()),
        pauli_x() * q,
        pauli_y() * q,
        pauli_z() * q,
    ])
}

pub fn unitary_channel(u: CMatrix, tol: &Tolerances) -> Result<QuantumChannel> {
    if !u.is_square() {
        return Err(Error::dim("unitary must be square"));
    }
    let defect = (u.adjoint() * &u - identity(u.nrows())).norm();
    if defect > tol.herm {
        return Err(Error::invalid(format!("matrix is not unitary (defect {defect:.3e})")));
    }
    QuantumChannel::from_kraus(vec![u])
}

/// Transposition on `ℂⁿ`: positive and trace preserving but not completely
/// positive.
pub fn transpose_map(n: usize) -> Result<QuantumChannel> {
    let mut s = CMatrix::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            s[(i * n + j, j * n + i)] = ONE;
        }
    }
    QuantumChannel::from_superop(s)
}

pub fn hamiltonian_generator(h: CMatrix) -> Result<LindbladGenerator> {
    LindbladGenerator::new(h, vec![], &Tolerances::default())
}

/// Qubit with `H = diag(0, ω)` and decay `√γ |0⟩⟨1|`.
pub fn damped_qubit_generator(gamma: f64, omega: f64) -> Result<LindbladGenerator> {
    if !(gamma >= 0.0) {
        return Err(Error::invalid(format!("gamma = {gamma} must be ≥ 0")));
    }
    let h = CMatrix::from_diagonal(&CVector::from_vec(vec![ZERO, real(omega)]));
    LindbladGenerator::new(h, vec![unit(2, 0, 1) * real(gamma.sqrt())], &Tolerances::default())
}

/// Block-diagonal channel on `ℂ^{a} ⊕ ℂ^{b}` with Kraus operators
/// `Aₖ ⊕ Bₖ`, the shorter family padded with zero matrices.
///
/// Both summands are enclosures with their own dynamics; coherences between
/// them evolve as `X ↦ Σₖ Aₖ X Bₖ†`.
pub fn direct_sum(a: &QuantumChannel, b: &QuantumChannel) -> Result<QuantumChannel> {
    use crate::channels::Dynamics;
    if a.kraus().is_empty() || b.kraus().is_empty() {
        return Err(Error::invalid("direct sum needs Kraus representations"));
    }
    let (na, nb) = (a.dim(), b.dim());
    let len = a.kraus().len().max(b.kraus().len());
    let kraus = (0..len)
        .map(|k| {
            let mut m = CMatrix::zeros(na + nb, na + nb);
            if let Some(ka) = a.kraus().get(k) {
                m.view_mut((0, 0), (na, na)).copy_from(ka);
            }
            if let Some(kb) = b.kraus().get(k) {
                m.view_mut((na, na), (nb, nb)).copy_from(kb);
            }
            m
        })
        .collect();
    QuantumChannel::from_kraus(kraus)
}

/// `𝟙_m ⊗ T` on `ℂ^m ⊗ ℂⁿ`.
pub fn replica(m: usize, a: &QuantumChannel) -> Result<QuantumChannel> {
    if m == 0 {
        return Err(Error::invalid("replica count must be ≥ 1"));
    }
    if a.kraus().is_empty() {
        return Err(Error::invalid("replica needs a Kraus representation"));
    }
    QuantumChannel::from_kraus(a.kraus().iter().map(|k| identity(m).kronecker(k)).collect())
}

/// Kraus operators `Gₖ (Σ Gⱼ†Gⱼ)^{−1/2}` from complex Gaussian `Gₖ`.
pub fn random_cptp(dim: usize, n_kraus: usize, seed: u64) -> Result<QuantumChannel> {
    if dim == 0 || n_kraus == 0 {
        return Err(Error::invalid("random channel needs dim ≥ 1 and at least one Kraus operator"));
    }
    let mut r = rng(seed);
    let gs: Vec<CMatrix> = (0..n_kraus).map(|_| gaussian_matrix(&mut r, dim, dim)).collect();
    let gram = gs
        .iter()
        .fold(CMatrix::zeros(dim, dim), |acc, g| acc + g.adjoint() * g);
    let norm = linalg::inv_sqrt(&gram)?;
    QuantumChannel::from_kraus(gs.iter().map(|g| g * &norm).collect())
}

/// Random Hamiltonian and jump operators, each scaled by `1/√dim`.
pub fn random_lindblad(dim: usize, n_jumps: usize, seed: u64) -> Result<LindbladGenerator> {
    if dim == 0 {
        return Err(Error::invalid("random generator needs dim ≥ 1"));
    }
    let mut r = rng(seed);
    let scale = real(1.0 / (dim as f64).sqrt());
    let h = random_hermitian(&mut r, dim) * scale;
    let jumps = (0..n_jumps)
        .map(|_| gaussian_matrix(&mut r, dim, dim) * scale)
        .collect();
    LindbladGenerator::new(h, jumps, &Tolerances::default())
}

/// Named constructor with numeric parameters, as used by the CLI.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ZooSpec {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub seed: Option<u64>,
}

/// Constructor names accepted by [`build`], with their parameters.
pub const CONSTRUCTORS: &[(&str, &str)] = &[
    ("cyclic", "--n"),
    ("cascade", "--n --m"),
    ("sudden", "--dim [--k | --mixed 1]"),
    ("amplitude-damping", "--gamma"),
    ("dephasing", "--p"),
    ("depolarizing", "--p"),
    ("replica", "--m --p (replicated depolarizing channel)"),
    ("direct-sum-dephasing", "--p1 --p2"),
    ("transpose", "--dim"),
    ("hamiltonian-qubit", "--omega"),
    ("damped-qubit", "--gamma --omega"),
    ("random", "--dim --kraus --seed"),
    ("random-lindblad", "--dim --jumps --seed"),
];

impl ZooSpec {
    pub fn new(name: &str) -> Self {
        ZooSpec {
            name: name.to_string(),
            ..Default::default()
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    fn get(&self, key: &str) -> Result<f64> {
        self.params
            .get(key)
            .copied()
            .ok_or_else(|| Error::invalid(format!("{}: missing parameter --{key}", self.name)))
    }

    fn get_or(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    fn count(&self, key: &str) -> Result<usize> {
        let v = self.get(key)?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::invalid(format!("{}: --{key} must be a non-negative integer", self.name)));
        }
        Ok(v as usize)
    }

    fn seed(&self) -> u64 {
        self.seed
            .or_else(|| self.params.get("seed").map(|&s| s as u64))
            .unwrap_or(0)
    }
}

pub fn build(spec: &ZooSpec) -> Result<System> {
    let sys: System = match spec.name.as_str() {
        "cyclic" => cyclic_shift(spec.count("n")?)?.into(),
        "cascade" => collapse_cascade(spec.count("n")?, spec.count("m")?)?.into(),
        "sudden" => {
            let n = spec.count("dim")?;
            if n == 0 {
                return Err(Error::invalid("sudden: --dim must be ≥ 1"));
            }
            let rho = if spec.get_or("mixed", 0.0) != 0.0 {
                DensityMatrix::maximally_mixed(n)
            } else {
                let k = spec.get_or("k", 0.0) as usize;
                if k >= n {
                    return Err(Error::invalid("sudden: --k out of range"));
                }
                DensityMatrix::basis_state(n, k)
            };
            sudden_decay(&rho)?.into()
        }
        "amplitude-damping" => amplitude_damping(spec.get("gamma")?)?.into(),
        "dephasing" => dephasing(spec.get("p")?)?.into(),
        "depolarizing" => depolarizing(spec.get("p")?)?.into(),
        "replica" => replica(spec.count("m")?, &depolarizing(spec.get("p")?)?)?.into(),
        "direct-sum-dephasing" => {
            direct_sum(&dephasing(spec.get("p1")?)?, &dephasing(spec.get("p2")?)?)?.into()
        }
        "transpose" => transpose_map(spec.count("dim")?)?.into(),
        "hamiltonian-qubit" => {
            let h = CMatrix::from_diagonal(&CVector::from_vec(vec![ZERO, real(spec.get("omega")?)]));
            hamiltonian_generator(h)?.into()
        }
        "damped-qubit" => damped_qubit_generator(spec.get("gamma")?, spec.get("omega")?)?.into(),
        "random" => random_cptp(spec.count("dim")?, spec.count("kraus")?, spec.seed())?.into(),
        "random-lindblad" => {
            random_lindblad(spec.count("dim")?, spec.count("jumps")?, spec.seed())?.into()
        }
        other => {
            let names: Vec<&str> = CONSTRUCTORS.iter().map(|(n, _)| *n).collect();
            return Err(Error::invalid(format!(
                "unknown constructor '{other}'; available: {}",
                names.join(", ")
            )));
        }
    };
    Ok(sys)
}
