//! End-to-end analysis: verification, decomposition, mode classification
//! and the report they produce, plus state trajectories.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channels::{DensityMatrix, Dynamics, System, TimeKind, VerificationReport};
use crate::coherence::{self, BlockPreservationReport, ModeClassification, ModeKind};
use crate::error::{Error, Result};
use crate::io::{self, MatrixJson};
use crate::linalg::eigh;
use crate::spectral;
use crate::structure::{self, BlockId, StructureDecomposition, Subspace};
use crate::tolerance::Tolerances;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Largest dimension on which `--oracle` is run.
pub const ORACLE_MAX_DIM: usize = 6;

pub const DEFAULT_ORACLE_SAMPLES: usize = 500;

/// Largest per-projector distance at which the oracle agrees.
pub const ORACLE_AGREEMENT_TOL: f64 = 1e-6;

/// Slack allowed when checking that `Tr(P_𝒟 ρ_t)` never increases.
pub const MONOTONICITY_SLACK: f64 = 1e-10;

/// Wall-clock seconds per pipeline stage.
pub type Timings = BTreeMap<String, f64>;

/// `sha256:` followed by the hex digest of the input bytes.
pub fn digest(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub tol: Tolerances,
    pub seed: u64,
    pub oracle: bool,
    pub oracle_samples: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            tol: Tolerances::from_env(),
            seed: structure::DEFAULT_SEED,
            oracle: false,
            oracle_samples: DEFAULT_ORACLE_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XBlockSummary {
    pub multiplicity: usize,
    pub factor_dim: usize,
    /// Eigenvalues of `τ`, descending.
    pub tau_spectrum: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureSummary {
    pub decaying_dim: usize,
    pub recurrent_dim: usize,
    pub u_block_dims: Vec<usize>,
    pub x_blocks: Vec<XBlockSummary>,
    pub stationary_parameter_count: usize,
    pub fixed_algebra_dim: usize,
}

pub fn summarize(sd: &StructureDecomposition) -> StructureSummary {
    StructureSummary {
        decaying_dim: sd.decaying.dim(),
        recurrent_dim: sd.recurrent.dim(),
        u_block_dims: sd.u_blocks.iter().map(|b| b.space.dim()).collect(),
        x_blocks: sd
            .x_blocks
            .iter()
            .map(|x| XBlockSummary {
                multiplicity: x.multiplicity,
                factor_dim: x.factor_dim,
                tau_spectrum: eigh(x.tau.matrix()).values.into_iter().rev().collect(),
            })
            .collect(),
        stationary_parameter_count: sd.stationary_parameter_count(),
        fixed_algebra_dim: sd.fixed_algebra_dim,
    }
}

/// Agreement between the central blocks of the decomposition and those
/// found by [`structure::minimal_enclosures_oracle`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleDiagnostics {
    pub samples: usize,
    pub seed: u64,
    pub blocks_expected: usize,
    pub blocks_found: usize,
    /// For each central block, `‖P − P_oracle‖_F` to the nearest oracle block.
    pub distances: Vec<f64>,
    pub max_distance: f64,
    pub agrees: bool,
    /// The oracle's blocks, ordered by centroid.
    pub blocks: Vec<Subspace>,
}

pub fn oracle_diagnostics(
    system: &dyn Dynamics,
    sd: &StructureDecomposition,
    samples: usize,
    seed: u64,
) -> Result<OracleDiagnostics> {
    let blocks = structure::minimal_enclosures_oracle(system, samples, seed)?;
    let distances: Vec<f64> = sd
        .central_blocks()
        .iter()
        .map(|(_, s)| {
            blocks
                .iter()
                .map(|b| b.distance(s))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let max_distance = distances.iter().copied().fold(0.0, f64::max);
    let expected = distances.len();
    Ok(OracleDiagnostics {
        samples,
        seed,
        blocks_expected: expected,
        blocks_found: blocks.len(),
        agrees: blocks.len() == expected && max_distance <= ORACLE_AGREEMENT_TOL,
        distances,
        max_distance,
        blocks,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub input_digest: String,
    pub dim: usize,
    pub time_kind: TimeKind,
    pub verification: VerificationReport,
    pub summary: StructureSummary,
    pub structure: StructureDecomposition,
    #[serde(with = "pairs")]
    pub peripheral_eigenvalues: Vec<crate::linalg::C64>,
    pub modes: Vec<ModeClassification>,
    pub block_preservation: BlockPreservationReport,
    pub tolerances: Tolerances,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleDiagnostics>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub timings: Timings,
}

mod pairs {
    use crate::io::Pair;
    use crate::linalg::{c64, C64};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(zs: &[C64], s: S) -> Result<S::Ok, S::Error> {
        zs.iter().map(|z| [z.re, z.im]).collect::<Vec<Pair>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<C64>, D::Error> {
        Ok(Vec::<Pair>::deserialize(d)?.into_iter().map(|[re, im]| c64(re, im)).collect())
    }
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

fn timed<T>(timings: &mut Timings, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f();
    timings.insert(stage.to_string(), start.elapsed().as_secs_f64());
    out
}

/// Runs the whole pipeline on a parsed system. Verification failures are
/// returned as [`Error::Verification`].
pub fn analyze(system: &System, input_digest: String, opts: &AnalysisOptions) -> Result<AnalysisReport> {
    let tol = &opts.tol;
    let mut timings = Timings::new();
    let verification = timed(&mut timings, "verify", || Ok(system.verify(tol.psd.max(tol.trace))))?;
    if !verification.passed() {
        return Err(Error::Verification(format!(
            "cp = {}, tp = {} (min Choi eigenvalue {:.3e}, trace defect {:.3e})",
            verification.cp, verification.tp, verification.min_choi_eig, verification.tp_defect
        )));
    }
    let sd = timed(&mut timings, "structure", || {
        structure::decompose_structure(system, tol, opts.seed)
    })?;
    let modes = timed(&mut timings, "spectrum", || spectral::peripheral_modes(system, tol))?;
    let classes = timed(&mut timings, "classification", || {
        coherence::classify_modes(system, &sd, &modes, tol)
    })?;
    let block_preservation = timed(&mut timings, "block_preservation", || {
        coherence::verify_block_preservation(system, &sd, tol.eig, opts.seed)
    })?;
    let mut notes = Vec::new();
    let oracle = if !opts.oracle {
        None
    } else if system.dim() > ORACLE_MAX_DIM {
        notes.push(format!(
            "oracle skipped: dimension {} exceeds {ORACLE_MAX_DIM}",
            system.dim()
        ));
        None
    } else {
        Some(timed(&mut timings, "oracle", || {
            oracle_diagnostics(system, &sd, opts.oracle_samples, opts.seed)
        })?)
    };
    Ok(AnalysisReport {
        schema_version: REPORT_SCHEMA_VERSION,
        input_digest,
        dim: system.dim(),
        time_kind: system.time_kind(),
        verification,
        summary: summarize(&sd),
        peripheral_eigenvalues: modes.iter().map(|m| m.eigenvalue).collect(),
        structure: sd,
        modes: classes,
        block_preservation,
        tolerances: *tol,
        seed: opts.seed,
        oracle,
        notes,
        timings,
    })
}

/// Parses a channel file and analyzes it; the digest covers the raw text.
pub fn analyze_text(text: &str, opts: &AnalysisOptions) -> Result<AnalysisReport> {
    let system = io::parse_channel(text, &opts.tol)?;
    analyze(&system, digest(text.as_bytes()), opts)
}

/// Coherence between two distinct central blocks (or with `𝒟`), as shown in
/// the block diagram.
fn pair_symbol(report: &AnalysisReport, a: BlockId, b: BlockId) -> &'static str {
    if a == BlockId::Decaying || b == BlockId::Decaying {
        return "↓";
    }
    let central = StructureDecomposition::central_of;
    let mut symbol = "·";
    for m in &report.modes {
        let (e, f) = (central(m.blocks.0), central(m.blocks.1));
        if !((e == a && f == b) || (e == b && f == a)) {
            continue;
        }
        match m.kind {
            ModeKind::RotatingCoherence => symbol = "~",
            ModeKind::StationaryCoherence if symbol == "·" => symbol = "=",
            _ => {}
        }
    }
    symbol
}

/// Human-readable rendering. JSON is the authoritative format.
pub fn render_text(report: &AnalysisReport) -> String {
    let s = &report.summary;
    let mut out = String::new();
    let kind = match report.time_kind {
        TimeKind::Discrete => "discrete-time channel",
        TimeKind::Continuous => "continuous-time generator",
    };
    let _ = writeln!(out, "{kind} on C^{}  ({})", report.dim, report.input_digest);
    let v = &report.verification;
    let _ = writeln!(
        out,
        "verification: cp {}  tp {}  (min Choi eigenvalue {:.2e}, trace defect {:.2e})",
        v.cp, v.tp, v.min_choi_eig, v.tp_defect
    );
    let _ = writeln!(
        out,
        "splitting: dim D = {}, dim R = {}; {} U block(s), {} X block(s); stationary parameters {}",
        s.decaying_dim,
        s.recurrent_dim,
        s.u_block_dims.len(),
        s.x_blocks.len(),
        s.stationary_parameter_count
    );

    let mut labels: Vec<(BlockId, String)> = Vec::new();
    if s.decaying_dim > 0 {
        labels.push((BlockId::Decaying, format!("{}", s.decaying_dim)));
    }
    for (k, d) in s.u_block_dims.iter().enumerate() {
        labels.push((BlockId::U(k), format!("{d}")));
    }
    for (l, x) in s.x_blocks.iter().enumerate() {
        labels.push((BlockId::X(l), format!("{}x{}", x.multiplicity, x.factor_dim)));
    }
    let width = labels
        .iter()
        .map(|(id, d)| id.to_string().len().max(d.len() + 2))
        .max()
        .unwrap_or(1)
        + 2;
    let _ = writeln!(out, "\nblock diagram:");
    let _ = write!(out, "{:>width$}", "");
    for (id, _) in &labels {
        let _ = write!(out, "{:>width$}", id.to_string());
    }
    let _ = writeln!(out);
    for (a, dim) in &labels {
        let _ = write!(out, "{:>width$}", a.to_string());
        for (b, _) in &labels {
            let cell = if a == b {
                format!("[{dim}]")
            } else {
                pair_symbol(report, *a, *b).to_string()
            };
            let _ = write!(out, "{cell:>width$}");
        }
        let _ = writeln!(out);
    }
    let _ = writeln!(
        out,
        "  [n] diagonal block of dimension n, [mxd] m replicas of a d-dimensional enclosure;\n  ↓ coherence with D (decays), · decaying coherence, = stationary coherence, ~ rotating coherence"
    );

    for (l, x) in s.x_blocks.iter().enumerate() {
        let spectrum: Vec<String> = x.tau_spectrum.iter().map(|t| format!("{t:.6}")).collect();
        let _ = writeln!(out, "tau of X{}: [{}]", l + 1, spectrum.join(", "));
    }

    let _ = writeln!(out, "\nperipheral modes:");
    for m in &report.modes {
        let z = m.eigenvalue;
        let mut line = format!(
            "  {:<28} {:>4} {:<4}  lambda = {:+.6}{:+.6}i",
            m.kind.as_str(),
            m.blocks.0.to_string(),
            m.blocks.1.to_string(),
            z.re,
            z.im
        );
        if let Some((q, mm)) = m.root_of_unity {
            let _ = write!(line, "  (q, m) = ({q}, {mm})");
        }
        if let Some(b) = m.decay_bound {
            let _ = write!(line, "  bound {b:.6}");
        } else if m.kind == ModeKind::RotatingCoherence {
            let _ = write!(line, "  frequency {:.6}", m.frequency);
        }
        let _ = writeln!(out, "{line}");
    }
    let bp = &report.block_preservation;
    let _ = writeln!(
        out,
        "\nblock preservation: {} checks, max leakage {:.2e} ({})",
        bp.checks.len(),
        bp.max_leakage,
        if bp.passed { "ok" } else { "FAILED" }
    );
    if let Some(o) = &report.oracle {
        let _ = writeln!(
            out,
            "oracle: {} of {} blocks, max distance {:.2e} ({})",
            o.blocks_found,
            o.blocks_expected,
            o.max_distance,
            if o.agrees { "agrees" } else { "DISAGREES" }
        );
    }
    for n in &report.notes {
        let _ = writeln!(out, "note: {n}");
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub step: usize,
    pub time: f64,
    pub state: MatrixJson,
    /// `Tr(P_𝒟 ρ_t)`.
    pub decaying_population: f64,
    /// `‖P_a ρ_t P_b‖_F` for unordered pairs of distinct blocks, keyed `a|b`.
    pub coherence_norms: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub dim: usize,
    pub time_kind: TimeKind,
    pub dt: f64,
    pub steps: Vec<TrajectoryStep>,
}

/// `ρ_0, …, ρ_steps` with the decaying population and block coherences at
/// each step. The decaying population must not increase; a violation is a
/// structural error and nothing is returned.
pub fn evolve(
    system: &System,
    rho0: &DensityMatrix,
    steps: usize,
    dt: Option<f64>,
    tol: &Tolerances,
    seed: u64,
) -> Result<Trajectory> {
    let n = system.dim();
    if rho0.dim() != n {
        return Err(Error::dim(format!(
            "state is {}×{}, system acts on C^{n}",
            rho0.dim(),
            rho0.dim()
        )));
    }
    let dt = match system.time_kind() {
        TimeKind::Discrete => 1.0,
        TimeKind::Continuous => match dt {
            Some(x) if x > 0.0 && x.is_finite() => x,
            _ => return Err(Error::invalid("continuous-time evolution needs --dt > 0")),
        },
    };
    let sd = structure::decompose_structure(system, tol, seed)?;
    let mut blocks: Vec<(BlockId, Subspace)> = Vec::new();
    if sd.decaying.dim() > 0 {
        blocks.push((BlockId::Decaying, sd.decaying.clone()));
    }
    blocks.extend(sd.central_blocks().into_iter().map(|(id, s)| (id, s.clone())));

    let step = system.step_channel(dt)?;
    let pd = sd.decaying.projector();
    let mut rho = rho0.matrix().clone();
    let mut out = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        if k > 0 {
            rho = step.act(&rho);
        }
        let mut coherence_norms = BTreeMap::new();
        for (i, (a, sa)) in blocks.iter().enumerate() {
            for (b, sb) in &blocks[i + 1..] {
                let norm = (sa.projector() * &rho * sb.projector()).norm();
                coherence_norms.insert(format!("{a}|{b}"), norm);
            }
        }
        let population = (pd * &rho).trace().re;
        if let Some(prev) = out.last().map(|s: &TrajectoryStep| s.decaying_population) {
            if population > prev + MONOTONICITY_SLACK {
                return Err(Error::structure(format!(
                    "decaying population rose from {prev:.3e} to {population:.3e} at step {k}"
                )));
            }
        }
        out.push(TrajectoryStep {
            step: k,
            time: k as f64 * dt,
            state: MatrixJson::from(&rho),
            decaying_population: population,
            coherence_norms,
        });
    }
    Ok(Trajectory {
        dim: n,
        time_kind: system.time_kind(),
        dt,
        steps: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::channel_to_json;
    use crate::linalg::{c64, identity, CMatrix, ONE};
    use crate::zoo::{self, ZooSpec};

    fn opts() -> AnalysisOptions {
        AnalysisOptions {
            tol: Tolerances::default(),
            ..Default::default()
        }
    }

    fn report_for(spec: &ZooSpec) -> AnalysisReport {
        let system = zoo::build(spec).unwrap();
        let text = serde_json::to_string(&channel_to_json(&system)).unwrap();
        analyze_text(&text, &opts()).unwrap()
    }

    #[test]
    fn digest_is_sha256() {
        assert_eq!(
            digest(b"abc"),
            "sha256:ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn replica_report() {
        let r = report_for(&ZooSpec::new("replica").with("m", 2.0).with("p", 0.5));
        assert_eq!(r.summary.x_blocks.len(), 1);
        assert_eq!(r.summary.x_blocks[0].multiplicity, 2);
        assert_eq!(r.summary.stationary_parameter_count, 4);
        assert!(r.block_preservation.passed);
    }

    #[test]
    fn sudden_decay_report() {
        let r = report_for(&ZooSpec::new("sudden").with("dim", 2.0));
        assert_eq!(r.summary.decaying_dim, 1);
        assert_eq!(r.summary.u_block_dims, vec![1]);
    }

    #[test]
    fn cascade_report() {
        let r = report_for(&ZooSpec::new("cascade").with("n", 5.0).with("m", 3.0));
        assert_eq!(r.peripheral_eigenvalues.len(), 3);
        let mut roots: Vec<_> = r.modes.iter().filter_map(|m| m.root_of_unity).collect();
        roots.sort();
        assert_eq!(roots, vec![(1, 3), (2, 3)]);
        let text = render_text(&r);
        assert!(text.contains("intra_enclosure_oscillation"));
        assert!(text.contains("[5]"));
    }

    #[test]
    fn report_round_trips() {
        let mut spec = ZooSpec::new("random").with("dim", 3.0).with("kraus", 2.0);
        spec.seed = Some(3);
        let mut r = report_for(&spec);
        r.oracle = Some(oracle_diagnostics(&zoo::build(&spec).unwrap(), &r.structure, 50, 1).unwrap());
        let json = r.to_json();
        let back = AnalysisReport::from_json(&json).unwrap();
        assert_eq!(back.to_json(), json);
    }

    #[test]
    fn analysis_is_deterministic() {
        let spec = ZooSpec::new("replica").with("m", 2.0).with("p", 0.5);
        let mut a = report_for(&spec);
        let mut b = report_for(&spec);
        a.timings.clear();
        b.timings.clear();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn unverified_input_is_rejected() {
        let system = zoo::build(&ZooSpec::new("transpose").with("dim", 2.0)).unwrap();
        let err = analyze(&system, digest(b""), &opts()).unwrap_err();
        assert!(matches!(err, Error::Verification(_)));
    }

    #[test]
    fn evolve_examples() {
        let tol = Tolerances::default();
        let deph = crate::channels::System::from(zoo::dephasing(0.5).unwrap());
        let plus = DensityMatrix::new(CMatrix::from_element(2, 2, c64(0.5, 0.0)), &tol).unwrap();
        let tr = evolve(&deph, &plus, 1, None, &tol, 1).unwrap();
        let last = tr.steps[1].state.to_matrix("state").unwrap();
        assert!((last - identity(2) * c64(0.5, 0.0)).norm() < 1e-14);

        let cyc = crate::channels::System::from(zoo::cyclic_shift(3).unwrap());
        let one = DensityMatrix::basis_state(3, 1);
        let tr = evolve(&cyc, &one, 3, None, &tol, 1).unwrap();
        let back = tr.steps[3].state.to_matrix("state").unwrap();
        assert!((back - one.matrix()).norm() < 1e-14);

        let tr = evolve(&cyc, &one, 0, None, &tol, 1).unwrap();
        assert_eq!(tr.steps.len(), 1);
        assert_eq!(tr.steps[0].state.to_matrix("state").unwrap(), *one.matrix());

        let bad = DensityMatrix::basis_state(2, 0);
        assert!(matches!(evolve(&cyc, &bad, 1, None, &tol, 1), Err(Error::Dimension(_))));
    }

    #[test]
    fn evolve_tracks_decay() {
        let tol = Tolerances::default();
        let sys = zoo::build(&ZooSpec::new("amplitude-damping").with("gamma", 0.3)).unwrap();
        let rho = DensityMatrix::basis_state(2, 1);
        let tr = evolve(&sys, &rho, 5, None, &tol, 1).unwrap();
        let pops: Vec<f64> = tr.steps.iter().map(|s| s.decaying_population).collect();
        assert!((pops[0] - 1.0).abs() < 1e-12);
        assert!((pops[5] - 0.7f64.powi(5)).abs() < 1e-12);
        assert!(tr.steps[0].coherence_norms.contains_key("D|U1"));
        let _ = ONE;
    }
}
