//! Berry phases and Wilczek–Zee holonomies along closed loops.
//!
//! Transport is carried out on the coefficient matrix `C` of a state `ψ = Z c` in the current
//! frame. Parallel transport `Z†dψ = 0` gives `dc = i Aᵀ dλ c`, so every step multiplies `C`
//! on the left by `exp(i Aᵀ(λ_mid)·Δλ)`. A chart switch at sample `k` applies `W†` with
//! `W = Z_old†Z_new`, and closing the loop applies `Z₀†Z_M`. The reported holonomy is the
//! transpose of the result (row convention, see the crate docs).

use std::f64::consts::TAU;

use nalgebra::{DVector, Vector3};
use serde::Serialize;

use crate::connection::{connection_closed_form, gauge_transform, ConnectionSample, DEFAULT_H_FD};
use crate::error::{Error, Result};
use crate::frames::{frame_path, xi_with_tangents, FrameOptions, FramePath, LevelTarget, PathPoint, SegmentBoundary};
use crate::linalg::{exp_i_hermitian, identity, max_abs_diff, polar_unitary, unitarity_residual, wrap_phase, CMatrix};
use crate::model::{LoopSamples, LoopShape, LoopSpec, ModelSpec, CLOSURE_TOL};
use crate::report::{to_json_string, MatrixJson};

/// Unitarity tolerance for reported holonomies.
pub const UNITARY_TOL: f64 = 1e-8;

/// Overlaps whose smallest singular value falls below this are treated as rank deficient.
pub const RANK_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Ordered product of midpoint exponentials of the connection.
    Pexp,
    /// Polar factor of the product of frame overlaps.
    Projector,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Pexp => "pexp",
            Method::Projector => "projector",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Holonomy {
    pub u: CMatrix,
    pub level: usize,
    pub loop_id: Option<String>,
    pub method: Method,
    pub steps: usize,
    pub segments: usize,
    pub unitarity_residual: f64,
}

#[derive(Serialize)]
struct HolonomyJson<'a> {
    level: usize,
    #[serde(rename = "loop", skip_serializing_if = "Option::is_none")]
    loop_id: Option<&'a str>,
    method: Method,
    steps: usize,
    segments: usize,
    #[serde(rename = "U")]
    u: MatrixJson,
    gamma_abelian: Option<f64>,
    unitarity_residual: f64,
}

impl Holonomy {
    fn new(u: CMatrix, level: usize, method: Method, steps: usize, segments: usize) -> Result<Self> {
        let unitarity_residual = unitarity_residual(&u);
        if !(unitarity_residual < UNITARY_TOL) {
            return Err(Error::NotUnitary { residual: unitarity_residual });
        }
        Ok(Holonomy { u, level, loop_id: None, method, steps, segments, unitarity_residual })
    }

    pub fn with_loop_id(mut self, id: impl Into<String>) -> Self {
        self.loop_id = Some(id.into());
        self
    }

    pub fn degeneracy(&self) -> usize {
        self.u.nrows()
    }

    /// `arg U` in `(−π, π]` for a nondegenerate level.
    pub fn gamma_abelian(&self) -> Option<f64> {
        (self.u.nrows() == 1).then(|| self.u[(0, 0)].arg())
    }

    pub fn to_json(&self) -> String {
        to_json_string(&HolonomyJson {
            level: self.level,
            loop_id: self.loop_id.as_deref(),
            method: self.method,
            steps: self.steps,
            segments: self.segments,
            u: MatrixJson::from_matrix(&self.u),
            gamma_abelian: self.gamma_abelian(),
            unitarity_residual: self.unitarity_residual,
        })
    }
}

/// One transport step: the connection at the parameter midpoint and the increment `Δλ`.
#[derive(Clone, Debug)]
pub struct TransportStep {
    pub connection: ConnectionSample,
    pub dlambda: DVector<f64>,
}

/// Frames, midpoint connections and chart overlaps along a sampled loop.
#[derive(Clone, Debug)]
pub struct TransportPath {
    pub level: LevelTarget,
    pub points: Vec<PathPoint>,
    pub steps: Vec<TransportStep>,
    pub boundaries: Vec<SegmentBoundary>,
    /// `Z₀† Z_M`: the closing overlap between the frames at the two ends of the loop.
    pub closing: CMatrix,
}

impl TransportPath {
    pub fn build(model: &ModelSpec, samples: &LoopSamples, level: usize, options: &FrameOptions) -> Result<Self> {
        let path = frame_path(model, samples, level, options)?;
        Self::from_frame_path(model, path)
    }

    /// Evaluates the connection at every step midpoint in the chart used for that step.
    pub fn from_frame_path(model: &ModelSpec, path: FramePath) -> Result<Self> {
        let FramePath { level, points, boundaries } = path;
        let steps = points
            .windows(2)
            .map(|pair| {
                let mid = (&pair[0].lambda + &pair[1].lambda) * 0.5;
                let (h, dh) = model.evaluate_with_derivatives(mid.as_slice())?;
                let (xi, dz) = xi_with_tangents(&h, &dh, level.energy, &pair[0].chart)?;
                Ok(TransportStep {
                    connection: connection_closed_form(&xi, &dz, &mid)?,
                    dlambda: &pair[1].lambda - &pair[0].lambda,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let first = &points[0].frame.columns;
        let last = &points.last().expect("nonempty").frame.columns;
        let closing = first.adjoint() * last;
        let gap = unitarity_residual(&closing);
        if gap > 1e-8 {
            return Err(Error::OpenLoop { gap });
        }
        Ok(TransportPath { level, points, steps, boundaries, closing })
    }

    pub fn degeneracy(&self) -> usize {
        self.level.degeneracy
    }

    pub fn segment_count(&self) -> usize {
        self.boundaries.len() + 1
    }

    /// Applies the frame rotation `z'_a = Σ_b G_ab z_b` to frames, connections and overlaps.
    pub fn gauge_transformed<F>(&self, gauge: F) -> Result<TransportPath>
    where
        F: Fn(&DVector<f64>) -> CMatrix,
    {
        let connections: Vec<ConnectionSample> = self.steps.iter().map(|s| s.connection.clone()).collect();
        let transformed = gauge_transform(&connections, &gauge, DEFAULT_H_FD)?;
        let steps = self
            .steps
            .iter()
            .zip(transformed)
            .map(|(s, connection)| TransportStep { connection, dlambda: s.dlambda.clone() })
            .collect();
        let gs: Vec<CMatrix> = self.points.iter().map(|p| gauge(&p.lambda)).collect();
        let points = self
            .points
            .iter()
            .zip(&gs)
            .map(|(p, g)| {
                let mut q = p.clone();
                q.frame.columns = &p.frame.columns * g.transpose();
                q
            })
            .collect();
        let boundaries = self
            .boundaries
            .iter()
            .map(|b| {
                let g = &gs[b.sample];
                SegmentBoundary { overlap: g.conjugate() * &b.overlap * g.transpose(), ..b.clone() }
            })
            .collect();
        let closing = gs[0].conjugate() * &self.closing * gs.last().expect("nonempty").transpose();
        Ok(TransportPath { level: self.level, points, steps, boundaries, closing })
    }
}

/// `U = Pexp(i∮A)` by the midpoint exponential product with chart overlaps inserted.
pub fn holonomy_pexp(path: &TransportPath) -> Result<Holonomy> {
    let d = path.degeneracy();
    let mut c = identity(d);
    let mut boundaries = path.boundaries.iter().peekable();
    for (k, step) in path.steps.iter().enumerate() {
        if k > 0 && path.points[k].chart != path.points[k - 1].chart {
            match boundaries.next_if(|b| b.sample == k) {
                Some(b) => c = b.overlap.adjoint() * c,
                None => return Err(Error::MissingOverlap(format!("chart change at sample {k} has no overlap"))),
            }
        }
        let generator = step.connection.contract(&step.dlambda).transpose();
        c = exp_i_hermitian(&generator, 1.0) * c;
    }
    if let Some(b) = boundaries.next() {
        return Err(Error::MissingOverlap(format!("overlap at sample {} does not match a chart change", b.sample)));
    }
    let m = &path.closing * c;
    Holonomy::new(m.transpose(), path.level.index, Method::Pexp, path.steps.len(), path.segment_count())
}

/// Polar factor of `Z₀†Z_{M−1} ⋯ Z₂†Z₁ Z₁†Z₀`, transposed to the row convention.
pub fn holonomy_projector(path: &TransportPath) -> Result<Holonomy> {
    let frames: Vec<&CMatrix> = path.points.iter().map(|p| &p.frame.columns).collect();
    let m = frames.len() - 1;
    let mut product = identity(path.degeneracy());
    for k in 0..m {
        let next = if k + 1 == m { frames[0] } else { frames[k + 1] };
        let overlap = next.adjoint() * frames[k];
        let (_, smallest) = polar_unitary(&overlap);
        if smallest < RANK_TOL {
            return Err(Error::RankDeficient { step: k, singular_value: smallest });
        }
        product = overlap * product;
    }
    let (u, _) = polar_unitary(&product);
    Holonomy::new(u.transpose(), path.level.index, Method::Projector, m, path.segment_count())
}

/// Holonomy of one level around a sampled loop.
pub fn holonomy(
    model: &ModelSpec,
    samples: &LoopSamples,
    level: usize,
    method: Method,
    options: &FrameOptions,
) -> Result<Holonomy> {
    let path = TransportPath::build(model, samples, level, options)?;
    match method {
        Method::Pexp => holonomy_pexp(&path),
        Method::Projector => holonomy_projector(&path),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BerryPhase {
    pub raw: f64,
    /// `raw` reduced to `(−π, π]`.
    pub wrapped: f64,
}

impl BerryPhase {
    fn from_raw(raw: f64) -> Self {
        BerryPhase { raw, wrapped: wrap_phase(raw) }
    }
}

/// `γ = ∮A` by the composite trapezoid rule over connection values at the loop samples.
pub fn berry_phase_abelian(nodes: &[ConnectionSample], samples: &LoopSamples) -> Result<BerryPhase> {
    if nodes.len() != samples.points.len() {
        return Err(Error::DimensionMismatch {
            what: "connection samples".into(),
            expected: samples.points.len(),
            found: nodes.len(),
        });
    }
    if nodes.iter().any(|n| n.degeneracy() != 1) {
        return Err(Error::InvalidInput("Berry phase needs a nondegenerate level".into()));
    }
    let gap = samples.closure_gap();
    if gap >= CLOSURE_TOL {
        return Err(Error::OpenLoop { gap });
    }
    let raw = nodes
        .windows(2)
        .zip(samples.points.windows(2))
        .map(|(a, p)| {
            let dl = &p[1] - &p[0];
            let left: f64 = a[0].abelian().iter().zip(dl.iter()).map(|(x, y)| x * y).sum();
            let right: f64 = a[1].abelian().iter().zip(dl.iter()).map(|(x, y)| x * y).sum();
            0.5 * (left + right)
        })
        .sum();
    Ok(BerryPhase::from_raw(raw))
}

/// Connection at every loop sample in one fixed chart, for [`berry_phase_abelian`].
pub fn node_connections(
    model: &ModelSpec,
    samples: &LoopSamples,
    level: &LevelTarget,
    chart: &crate::frames::Chart,
) -> Result<Vec<ConnectionSample>> {
    samples
        .points
        .iter()
        .map(|p| {
            let (h, dh) = model.evaluate_with_derivatives(p.as_slice())?;
            let (xi, dz) = xi_with_tangents(&h, &dh, level.energy, chart)?;
            connection_closed_form(&xi, &dz, p)
        })
        .collect()
}

fn unit_vector(point: &DVector<f64>) -> Result<Vector3<f64>> {
    match point.len() {
        2 => {
            let (theta, phi) = (point[0], point[1]);
            Ok(Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()))
        }
        3 => {
            let v = Vector3::new(point[0], point[1], point[2]);
            if (v.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("loop point {v:?} is not on the unit sphere")));
            }
            Ok(v)
        }
        n => Err(Error::InvalidInput(format!("a spherical loop needs (θ, φ) or unit 3-vectors, got {n} components"))),
    }
}

/// Solid angle enclosed by a loop on the sphere, in `[0, 4π)`.
///
/// Circles use `2π(1 − cos θ)`; other loops sum the signed triangles spanned by the north
/// pole and consecutive samples, which is the spherical-polygon excess of the polyline.
pub fn solid_angle(spec: &LoopSpec) -> Result<f64> {
    if let LoopShape::SphereCircle { theta, .. } = spec.shape {
        return Ok(TAU * (1.0 - theta.cos()));
    }
    solid_angle_of_samples(&spec.sample()?)
}

pub fn solid_angle_of_samples(samples: &LoopSamples) -> Result<f64> {
    let north = Vector3::z();
    let vectors = samples.points.iter().map(unit_vector).collect::<Result<Vec<_>>>()?;
    let total: f64 = vectors
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let numerator = north.dot(&a.cross(&b));
            let denominator = 1.0 + north.dot(&a) + a.dot(&b) + b.dot(&north);
            2.0 * numerator.atan2(denominator)
        })
        .sum();
    Ok(total.rem_euclid(2.0 * TAU))
}

/// Holonomy of loop 1 followed by loop 2; in the row convention this is `U₁·U₂`.
pub fn compose_loops(
    first: &Holonomy,
    second: &Holonomy,
    base_points: (&DVector<f64>, &DVector<f64>),
) -> Result<Holonomy> {
    if first.level != second.level || first.degeneracy() != second.degeneracy() {
        return Err(Error::BasePointMismatch("loops follow different levels".into()));
    }
    let gap = (base_points.0 - base_points.1).norm();
    if gap > CLOSURE_TOL {
        return Err(Error::BasePointMismatch(format!("base points differ by {gap:.3e}")));
    }
    let mut out = Holonomy::new(
        &first.u * &second.u,
        first.level,
        first.method,
        first.steps + second.steps,
        first.segments + second.segments,
    )?;
    out.loop_id = match (&first.loop_id, &second.loop_id) {
        (Some(a), Some(b)) => Some(format!("{a}+{b}")),
        _ => None,
    };
    Ok(out)
}

/// Holonomies at `M` and `M/2` samples and their largest entrywise difference.
pub fn step_halving(
    model: &ModelSpec,
    spec: &LoopSpec,
    level: usize,
    method: Method,
    options: &FrameOptions,
) -> Result<(Holonomy, Holonomy, f64)> {
    let m = spec.sample_count();
    let fine = holonomy(model, &spec.sample()?, level, method, options)?;
    let coarse = holonomy(model, &spec.with_samples((m / 2).max(3)).sample()?, level, method, options)?;
    let diff = max_abs_diff(&fine.u, &coarse.u);
    Ok((fine, coarse, diff))
}

/// `γ_+ + γ_−` reduced to `(−π, π]`; zero for the two spin-½ levels on any loop.
pub fn phase_pairing(gamma_plus: f64, gamma_minus: f64) -> f64 {
    wrap_phase(gamma_plus + gamma_minus)
}
