//! Direct integration of `i dψ/dt = H(λ(t)) ψ` along the physical schedule.
//!
//! The integrator is the fourth-order commutator-free Magnus scheme
//!
//! ```text
//! ψ ← exp(−iΔt(α₁H₁ + α₂H₂)) exp(−iΔt(α₂H₁ + α₁H₂)) ψ,
//! α₁ = (3 − 2√3)/12,  α₂ = (3 + 2√3)/12,
//! ```
//!
//! with `H₁, H₂` at the two Gauss points of the step. Each factor is an exact exponential,
//! so the propagator is unitary up to rounding. Because the spectrum is constant along the
//! loop, the dynamical phase `e^{−iET}` is removed exactly.

use std::thread;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::frames::{chart_threshold, orthonormal_frame, select_chart, xi_degenerate, FrameOptions, LevelTarget};
use crate::holonomy::Holonomy;
use crate::linalg::{exp_i_hermitian, max_abs_diff, polar_unitary, unitarity_residual, CMatrix, C64, I};
use crate::model::{adiabaticity_ratio, eigen_decompose, LoopSpec, ModelSpec};
use crate::report::{complex_json, to_json_string, MatrixJson};

/// Leakage above which a run is flagged as not adiabatic enough.
pub const DEFAULT_LEAKAGE_TOL: f64 = 1e-2;

/// Integration steps per unit of `T·max|E|` when no step count is given.
pub const STEPS_PER_PHASE: f64 = 20.0;

/// Norm drift that makes the integrator refuse a result.
pub const NORM_DRIFT_TOL: f64 = 1e-8;

/// Discrepancies below this are treated as converged in sweeps.
pub const NOISE_FLOOR: f64 = 1e-9;

/// Evolved columns and optional snapshots `(t, Ψ(t))`.
#[derive(Clone, Debug)]
pub struct Evolution {
    pub columns: CMatrix,
    pub steps: usize,
    /// `max_a |‖ψ_a(T)‖ − ‖ψ_a(0)‖|`.
    pub norm_drift: f64,
    pub snapshots: Vec<(f64, CMatrix)>,
}

/// `max|E|` over the reference spectrum, the scale of the fastest dynamical phase.
pub fn hamiltonian_scale(model: &ModelSpec) -> Result<f64> {
    let spectrum = model.reference_spectrum(None)?;
    Ok(spectrum.data.levels.iter().map(|l| l.energy.abs()).fold(0.0, f64::max))
}

/// Default step count `max(loop samples, ⌈20·T·max|E|⌉)`.
pub fn default_steps(model: &ModelSpec, spec: &LoopSpec) -> Result<usize> {
    let scale = hamiltonian_scale(model)?;
    Ok(spec.sample_count().max((STEPS_PER_PHASE * spec.duration * scale).ceil() as usize))
}

/// Evolves every column of `initial` over `[0, T]` with `steps` equal time steps.
/// With `record_every = k > 0`, the state is stored every `k` steps and at `T`.
pub fn schrodinger_evolve(
    model: &ModelSpec,
    spec: &LoopSpec,
    initial: &CMatrix,
    steps: usize,
    record_every: usize,
) -> Result<Evolution> {
    let duration = spec.duration;
    if !(duration > 0.0) {
        return Err(Error::InvalidInput(format!("duration must be positive, got {duration}")));
    }
    if steps == 0 {
        return Err(Error::InvalidInput("need at least one time step".into()));
    }
    if initial.nrows() != model.dim() {
        return Err(Error::DimensionMismatch {
            what: "initial state".into(),
            expected: model.dim(),
            found: initial.nrows(),
        });
    }
    for (a, col) in initial.column_iter().enumerate() {
        if (col.norm() - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidInput(format!("initial column {a} has norm {}", col.norm())));
        }
    }
    let sqrt3 = 3f64.sqrt();
    let (c1, c2) = (0.5 - sqrt3 / 6.0, 0.5 + sqrt3 / 6.0);
    let (a1, a2) = ((3.0 - 2.0 * sqrt3) / 12.0, (3.0 + 2.0 * sqrt3) / 12.0);
    let dt = duration / steps as f64;
    let hamiltonian = |t: f64| model.evaluate(spec.point_at(t).as_slice());

    let mut psi = initial.clone();
    let mut snapshots = Vec::new();
    if record_every > 0 {
        snapshots.push((0.0, psi.clone()));
    }
    for k in 0..steps {
        let t = k as f64 * dt;
        let h1 = hamiltonian(t + c1 * dt)?;
        let h2 = hamiltonian(t + c2 * dt)?;
        let first = h1.scale(a2) + h2.scale(a1);
        let second = h1.scale(a1) + h2.scale(a2);
        psi = exp_i_hermitian(&second, -dt) * (exp_i_hermitian(&first, -dt) * psi);
        if record_every > 0 && ((k + 1) % record_every == 0 || k + 1 == steps) {
            snapshots.push(((k + 1) as f64 * dt, psi.clone()));
        }
    }
    let norm_drift =
        psi.column_iter().zip(initial.column_iter()).map(|(a, b)| (a.norm() - b.norm()).abs()).fold(0.0, f64::max);
    if norm_drift > NORM_DRIFT_TOL {
        return Err(Error::StepTooLarge { drift: norm_drift, suggested_steps: 2 * steps });
    }
    Ok(Evolution { columns: psi, steps, norm_drift, snapshots })
}

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub level: usize,
    pub duration: f64,
    pub steps: usize,
    /// `Ψ(T)`, one evolved column per initial frame vector.
    pub final_states: CMatrix,
    /// `‖Ψ(T) − Z₀Z₀†Ψ(T)‖_F`.
    pub leakage: f64,
    pub leakage_tol: f64,
    pub u: CMatrix,
    /// `e^{−iET}`.
    pub dynamical_phase: C64,
    /// `max|e^{iET}Z₀†Ψ − W|` with `W` the polar factor: the distance removed by unitarization.
    pub unitarization_distance: f64,
    pub norm_drift: f64,
    /// `Ω/ω_min` of the schedule, when available.
    pub adiabaticity_ratio: Option<f64>,
    /// Rows `(t, leakage, overlap_norm)` against the instantaneous eigenspace.
    pub trace: Vec<(f64, f64, f64)>,
}

#[derive(Serialize)]
struct OracleJson<'a> {
    level: usize,
    method: &'static str,
    steps: usize,
    #[serde(rename = "U")]
    u: MatrixJson,
    gamma_abelian: Option<f64>,
    unitarity_residual: f64,
    #[serde(rename = "T")]
    duration: f64,
    leakage: f64,
    flagged: bool,
    dynamical_phase: [f64; 2],
    unitarization_distance: f64,
    norm_drift: f64,
    adiabaticity_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    discrepancy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference: Option<&'a str>,
}

impl OracleResult {
    pub fn flagged(&self) -> bool {
        !(self.leakage <= self.leakage_tol)
    }

    pub fn gamma_abelian(&self) -> Option<f64> {
        (self.u.nrows() == 1).then(|| self.u[(0, 0)].arg())
    }

    /// `max|U_oracle − U_geometric|`.
    pub fn discrepancy(&self, geometric: &Holonomy) -> f64 {
        max_abs_diff(&self.u, &geometric.u)
    }

    /// JSON mirroring [`Holonomy::to_json`] plus leakage and `T`; with a reference holonomy the
    /// discrepancy to it is included.
    pub fn to_json(&self, reference: Option<&Holonomy>) -> String {
        to_json_string(&OracleJson {
            level: self.level,
            method: "oracle",
            steps: self.steps,
            u: MatrixJson::from_matrix(&self.u),
            gamma_abelian: self.gamma_abelian(),
            unitarity_residual: unitarity_residual(&self.u),
            duration: self.duration,
            leakage: self.leakage,
            flagged: self.flagged(),
            dynamical_phase: complex_json(self.dynamical_phase),
            unitarization_distance: self.unitarization_distance,
            norm_drift: self.norm_drift,
            adiabaticity_ratio: self.adiabaticity_ratio,
            discrepancy: reference.map(|h| self.discrepancy(h)),
            reference: reference.map(|h| h.method.as_str()),
        })
    }

    pub fn trace_csv(&self) -> String {
        let mut out = String::from("t,leakage,overlap_norm\n");
        for (t, leak, overlap) in &self.trace {
            out.push_str(&format!("{t:.12e},{leak:.12e},{overlap:.12e}\n"));
        }
        out
    }
}

/// `U = polar(e^{iET} Z₀†Ψ(T))ᵀ` together with the leakage out of the level.
pub fn extract_holonomy(
    evolved: &CMatrix,
    frame0: &CMatrix,
    energy: f64,
    duration: f64,
    leakage_tol: f64,
) -> Result<OracleResult> {
    if evolved.shape() != frame0.shape() {
        return Err(Error::DimensionMismatch {
            what: "evolved columns".into(),
            expected: frame0.ncols(),
            found: evolved.ncols(),
        });
    }
    let dynamical_phase = (-I * energy * duration).exp();
    let projected = frame0.adjoint() * evolved;
    let leakage = (evolved - frame0 * &projected).norm();
    let overlap = projected / dynamical_phase;
    let (w, _) = polar_unitary(&overlap);
    Ok(OracleResult {
        level: 0,
        duration,
        steps: 0,
        final_states: evolved.clone(),
        leakage,
        leakage_tol,
        unitarization_distance: max_abs_diff(&overlap, &w),
        u: w.transpose(),
        dynamical_phase,
        norm_drift: 0.0,
        adiabaticity_ratio: None,
        trace: Vec::new(),
    })
}

#[derive(Clone, Copy, Debug)]
pub struct OracleOptions {
    /// Integration steps; `None` uses [`default_steps`].
    pub steps: Option<usize>,
    pub leakage_tol: f64,
    /// Number of trace rows to record (0 disables the trace).
    pub trace_points: usize,
    pub frames: FrameOptions,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            steps: None,
            leakage_tol: DEFAULT_LEAKAGE_TOL,
            trace_points: 0,
            frames: FrameOptions::default(),
        }
    }
}

/// The frame at `λ₀` in the chart that [`crate::frames::frame_path`] starts with.
pub fn initial_frame(
    model: &ModelSpec,
    spec: &LoopSpec,
    level: usize,
    options: &FrameOptions,
) -> Result<(LevelTarget, CMatrix)> {
    let start = spec.point_at(0.0);
    let target = LevelTarget::at(model, &start, level, options.degeneracy_tol)?;
    let h = model.evaluate(start.as_slice())?;
    let threshold = chart_threshold(&h, target.energy, options.chart_threshold);
    let chart = select_chart(&h, target.energy, target.degeneracy, level, threshold)?;
    Ok((target, orthonormal_frame(&xi_degenerate(&h, target.energy, &chart)?).columns))
}

/// Starts the level's frame at `λ₀`, evolves it over the loop with duration `spec.duration`
/// and extracts the holonomy.
pub fn run_oracle(model: &ModelSpec, spec: &LoopSpec, level: usize, options: &OracleOptions) -> Result<OracleResult> {
    let adiabatic = adiabaticity_ratio(model, spec)?;
    let (target, frame0) = initial_frame(model, spec, level, &options.frames)?;
    let steps = match options.steps {
        Some(m) => m,
        None => default_steps(model, spec)?,
    };
    let record_every = if options.trace_points == 0 { 0 } else { steps.div_ceil(options.trace_points).max(1) };
    let evolution = schrodinger_evolve(model, spec, &frame0, steps, record_every)?;
    let mut result = extract_holonomy(&evolution.columns, &frame0, target.energy, spec.duration, options.leakage_tol)?;
    result.level = level;
    result.steps = steps;
    result.norm_drift = evolution.norm_drift;
    result.adiabaticity_ratio = Some(adiabatic.ratio);
    result.trace = evolution
        .snapshots
        .iter()
        .map(|(t, psi)| {
            let spectrum =
                eigen_decompose(&model.evaluate(spec.point_at(*t).as_slice())?, options.frames.degeneracy_tol);
            let inside = spectrum.projector(level) * psi;
            Ok((*t, (psi - &inside).norm(), inside.norm()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(result)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    #[serde(rename = "T")]
    pub duration: f64,
    pub steps: usize,
    pub discrepancy: f64,
    pub leakage: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// `p` in `discrepancy ∝ T^{−p}`, fitted over the rows above the noise floor.
    pub exponent: Option<f64>,
    /// False when fewer than two rows lie above the noise floor.
    pub exponent_reliable: bool,
    /// Discrepancy never increases by more than the noise floor from one `T` to the next.
    pub monotone: bool,
    pub noise_floor: f64,
}

impl SweepReport {
    pub fn from_rows(rows: Vec<SweepRow>, noise_floor: f64) -> Self {
        let monotone = rows.windows(2).all(|w| w[1].discrepancy <= w[0].discrepancy + noise_floor);
        let usable: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.discrepancy > 10.0 * noise_floor)
            .map(|r| (r.duration.ln(), r.discrepancy.ln()))
            .collect();
        let exponent_reliable = usable.len() >= 2 && usable.len() == rows.len();
        let exponent = (usable.len() >= 2).then(|| {
            let n = usable.len() as f64;
            let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
            let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
            let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
            -sxy / sxx
        });
        SweepReport { rows, exponent, exponent_reliable, monotone, noise_floor }
    }

    pub fn to_json(&self) -> String {
        to_json_string(self)
    }
}

/// Oracle discrepancy to `geometric` for every duration, one thread per duration.
pub fn convergence_sweep(
    model: &ModelSpec,
    spec: &LoopSpec,
    level: usize,
    durations: &[f64],
    geometric: &Holonomy,
    options: &OracleOptions,
) -> Result<SweepReport> {
    if durations.is_empty() || durations.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("sweep durations must be increasing".into()));
    }
    let results: Vec<Result<OracleResult>> = thread::scope(|scope| {
        let handles: Vec<_> = durations
            .iter()
            .map(|&t| {
                let spec = spec.with_duration(t);
                let options = OracleOptions { steps: None, trace_points: 0, ..*options };
                scope.spawn(move || run_oracle(model, &spec, level, &options))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("oracle thread panicked")).collect()
    });
    let rows = results
        .into_iter()
        .map(|r| {
            r.map(|o| SweepRow {
                duration: o.duration,
                steps: o.steps,
                discrepancy: o.discrepancy(geometric),
                leakage: o.leakage,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport::from_rows(rows, NOISE_FLOOR))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::holonomy::{holonomy, Method};
    use crate::linalg::{c, identity, wrap_phase};
    use crate::model::{pauli, spin_half, LoopShape};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI, TAU};

    fn still(point: Vec<f64>, duration: f64) -> LoopSpec {
        LoopSpec::new(LoopShape::Samples { points: vec![point; 4] }, 3, duration)
    }

    #[test]
    fn constant_field_gives_exact_phase() {
        let spec = still(vec![0.0, 0.0], TAU);
        let psi0 = CMatrix::from_column_slice(2, 1, &[c(1., 0.), c(0., 0.)]);
        let out = schrodinger_evolve(&spin_half(), &spec, &psi0, 100, 0).unwrap();
        assert!((out.columns[(0, 0)] - C64::from_polar(1.0, -PI)).norm() < 1e-13);
        assert!(out.columns[(1, 0)].norm() < 1e-15);
    }

    #[test]
    fn zero_hamiltonian_is_identity() {
        let model = ModelSpec::conjugated(CMatrix::zeros(2, 2), vec![pauli()[0].scale(0.5)]).unwrap();
        let spec =
            LoopSpec::new(LoopShape::Samples { points: vec![vec![0.0], vec![1.0], vec![0.5], vec![0.0]] }, 3, 3.0);
        let psi0 = CMatrix::from_column_slice(2, 1, &[c(0.6, 0.), c(0., 0.8)]);
        let out = schrodinger_evolve(&model, &spec, &psi0, 50, 0).unwrap();
        assert!(max_abs_diff(&out.columns, &psi0) < 1e-15);
    }

    #[test]
    fn integrator_is_fourth_order() {
        // Time-dependent field: compare against a fine reference.
        let spec = LoopSpec::new(LoopShape::SphereCircle { theta: 1.0, phi0: 0.0 }, 16, 5.0);
        let psi0 = CMatrix::from_column_slice(2, 1, &[c(1., 0.), c(0., 0.)]);
        let model = spin_half();
        let reference = schrodinger_evolve(&model, &spec, &psi0, 4000, 0).unwrap().columns;
        let err = |m| max_abs_diff(&schrodinger_evolve(&model, &spec, &psi0, m, 0).unwrap().columns, &reference);
        let ratio = err(20) / err(40);
        assert!(ratio > 14.0 && ratio < 18.0, "ratio {ratio}");
    }

    #[test]
    fn unnormalized_initial_state_is_rejected() {
        let psi0 = CMatrix::from_column_slice(2, 1, &[c(1., 0.), c(1., 0.)]);
        assert!(schrodinger_evolve(&spin_half(), &still(vec![0.0, 0.0], 1.0), &psi0, 10, 0).is_err());
        let psi0 = CMatrix::from_column_slice(2, 1, &[c(1., 0.), c(0., 0.)]);
        assert!(schrodinger_evolve(&spin_half(), &still(vec![0.0, 0.0], 0.0), &psi0, 10, 0).is_err());
    }

    #[test]
    fn trivial_loop_extracts_identity() {
        let spec = still(vec![0.7, 0.4], 37.0);
        for level in 0..2 {
            let out = run_oracle(&spin_half(), &spec, level, &OracleOptions::default()).unwrap();
            assert!((out.u[(0, 0)] - c(1.0, 0.0)).norm() < 1e-10);
            assert!(out.leakage < 1e-12);
        }
    }

    #[test]
    fn slow_equator_stays_in_level() {
        let spec = LoopSpec::new(LoopShape::SphereCircle { theta: FRAC_PI_2, phi0: 0.0 }, 2000, 2000.0);
        let out =
            run_oracle(&spin_half(), &spec, 1, &OracleOptions { trace_points: 50, ..Default::default() }).unwrap();
        // First-order adiabatic estimate: amplitude ≤ 2|⟨−|∂_t +⟩|/ω = 2 (φ̇ sinθ / 2) = 2π/T.
        assert!(out.leakage < TAU / 2000.0, "leakage {}", out.leakage);
        assert!(out.leakage.powi(2) < 1e-4);
        assert!(!out.flagged());
        // Exact solution in the frame co-rotating with the field: ψ(T) = R(T) exp(−i(H(θ, 0) − ωσ_z/2)T) ψ₀
        // with R(T) = exp(−iπσ_z) = −1 and ω = 2π/T.
        let omega = TAU / 2000.0;
        let rotating = spin_half().evaluate(&[FRAC_PI_2, 0.0]).unwrap() - pauli()[2].scale(omega / 2.0);
        let psi0 = initial_frame(&spin_half(), &spec, 1, &FrameOptions::default()).unwrap().1;
        let exact = -(exp_i_hermitian(&rotating, -2000.0) * psi0);
        assert!(max_abs_diff(&out.final_states, &exact) < 1e-8, "{}", max_abs_diff(&out.final_states, &exact));
        let csv = out.trace_csv();
        assert!(csv.starts_with("t,leakage,overlap_norm\n"));
        assert_eq!(csv.lines().count(), 52);
    }

    #[test]
    fn fast_loop_is_flagged() {
        let spec = LoopSpec::new(LoopShape::SphereCircle { theta: FRAC_PI_2, phi0: 0.0 }, 200, 2.0);
        let out = run_oracle(&spin_half(), &spec, 1, &OracleOptions::default()).unwrap();
        assert!(out.flagged());
        assert!(out.to_json(None).contains("\"flagged\":true"));
    }

    #[test]
    fn circle_phase_in_the_adiabatic_limit() {
        let spec = LoopSpec::new(LoopShape::SphereCircle { theta: FRAC_PI_3, phi0: 0.0 }, 1000, 1e4);
        let out = run_oracle(&spin_half(), &spec, 1, &OracleOptions::default()).unwrap();
        let gamma = out.gamma_abelian().unwrap();
        assert!(wrap_phase(gamma + PI / 2.0).abs() < 1e-3, "gamma {gamma}");
    }

    #[test]
    fn spin_half_sweep_halves() {
        let model = spin_half();
        let spec = LoopSpec::new(LoopShape::SphereCircle { theta: FRAC_PI_3, phi0: 0.0 }, 1000, 1.0);
        let geometric = holonomy(&model, &spec.sample().unwrap(), 1, Method::Pexp, &FrameOptions::default()).unwrap();
        let report =
            convergence_sweep(&model, &spec, 1, &[250.0, 500.0, 1000.0, 2000.0], &geometric, &OracleOptions::default())
                .unwrap();
        assert!(report.monotone);
        for w in report.rows.windows(2) {
            let ratio = w[0].discrepancy / w[1].discrepancy;
            assert!((ratio - 2.0).abs() < 0.3, "ratio {ratio}");
        }
        assert!(report.exponent_reliable);
        assert!((report.exponent.unwrap() - 1.0).abs() < 0.1);
    }

    #[test]
    fn sweep_floor_and_validation() {
        let rows = vec![
            SweepRow { duration: 1.0, steps: 1, discrepancy: 1e-12, leakage: 0.0 },
            SweepRow { duration: 2.0, steps: 1, discrepancy: 2e-12, leakage: 0.0 },
        ];
        let report = SweepReport::from_rows(rows, NOISE_FLOOR);
        assert!(report.monotone);
        assert!(!report.exponent_reliable);
        assert!(report.exponent.is_none());
        let h = Holonomy {
            u: identity(1),
            level: 0,
            loop_id: None,
            method: Method::Pexp,
            steps: 1,
            segments: 1,
            unitarity_residual: 0.0,
        };
        let spec = still(vec![0.0, 0.0], 1.0);
        assert!(convergence_sweep(&spin_half(), &spec, 0, &[2.0, 1.0], &h, &OracleOptions::default()).is_err());
    }

    #[test]
    fn level_crossing_propagates() {
        let model =
            ModelSpec::linear(2, None, vec![pauli()[2].clone()], vec![crate::model::Coefficient::Component(0)], 1)
                .unwrap();
        let spec =
            LoopSpec::new(LoopShape::Samples { points: vec![vec![1.0], vec![0.0], vec![-1.0], vec![1.0]] }, 3, 10.0);
        assert!(matches!(run_oracle(&model, &spec, 0, &OracleOptions::default()), Err(Error::LevelCrossing { .. })));
    }

    #[test]
    fn dynamical_phase_removal_is_exact() {
        let frame = CMatrix::from_column_slice(2, 1, &[c(0., 0.), c(1., 0.)]);
        let energy = 0.37;
        let duration = 123.0;
        let evolved = &frame * (-I * energy * duration).exp();
        let out = extract_holonomy(&evolved, &frame, energy, duration, DEFAULT_LEAKAGE_TOL).unwrap();
        assert!((out.u[(0, 0)] - c(1.0, 0.0)).norm() < 1e-12);
        assert_eq!(out.leakage, 0.0);
    }
}
