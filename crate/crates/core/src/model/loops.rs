use std::f64::consts::TAU;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{eigen_decompose, ModelSpec};

/// Sample count used by parametric loops that do not specify one.
pub const DEFAULT_SAMPLES: usize = 1000;

/// Closure tolerance for explicit sample lists.
pub const CLOSURE_TOL: f64 = 1e-12;

/// One component of a Fourier loop:
/// `λ(t) = mean + Σ_k cos[k] cos(2π(k+1)t/T) + sin[k] sin(2π(k+1)t/T)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FourierSeries {
    #[serde(default)]
    pub mean: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl FourierSeries {
    fn value(&self, x: f64) -> f64 {
        let harmonics = self.cos.iter().enumerate().map(|(k, a)| a * ((k + 1) as f64 * x).cos());
        let sines = self.sin.iter().enumerate().map(|(k, b)| b * ((k + 1) as f64 * x).sin());
        self.mean + harmonics.sum::<f64>() + sines.sum::<f64>()
    }

    /// Derivative with respect to the phase `x = 2πt/T`.
    fn phase_derivative(&self, x: f64) -> f64 {
        let harmonics = self.cos.iter().enumerate().map(|(k, a)| {
            let m = (k + 1) as f64;
            -a * m * (m * x).sin()
        });
        let sines = self.sin.iter().enumerate().map(|(k, b)| {
            let m = (k + 1) as f64;
            b * m * (m * x).cos()
        });
        harmonics.sum::<f64>() + sines.sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LoopShape {
    /// `λ = (θ, φ₀ + 2πt/T)`: a latitude circle traversed counterclockwise in φ.
    SphereCircle {
        theta: f64,
        #[serde(default)]
        phi0: f64,
    },
    Fourier {
        components: Vec<FourierSeries>,
    },
    /// Explicit closed polyline, uniform in time; the first point must equal the last.
    Samples {
        points: Vec<Vec<f64>>,
    },
}

/// A closed curve in parameter space.
///
/// Loop file: `{"kind":"sphere_circle","theta":1.0471975512,"phi0":0,"samples":2000,"duration":1000}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopSpec {
    #[serde(flatten)]
    pub shape: LoopShape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default = "default_duration")]
    pub duration: f64,
}

fn default_duration() -> f64 {
    1.0
}

/// Discretized loop: `M + 1` points uniform in time, first and last coincide.
#[derive(Clone, Debug, PartialEq)]
pub struct LoopSamples {
    pub times: Vec<f64>,
    pub points: Vec<DVector<f64>>,
    /// Per-component period for angle-like parameters.
    pub periods: Vec<Option<f64>>,
}

impl LoopSamples {
    pub fn new(times: Vec<f64>, points: Vec<DVector<f64>>, periods: Vec<Option<f64>>) -> Result<Self> {
        if times.len() != points.len() || points.len() < 2 {
            return Err(Error::InvalidInput("a loop needs matching times and at least two points".into()));
        }
        let samples = LoopSamples { times, points, periods };
        let gap = samples.closure_gap();
        if gap >= CLOSURE_TOL {
            return Err(Error::OpenLoop { gap });
        }
        Ok(samples)
    }

    /// Number of steps `M`.
    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// `λ_M − λ_0` with periodic components reduced to the nearest image.
    pub fn closure_gap(&self) -> f64 {
        let first = &self.points[0];
        let last = self.points.last().expect("nonempty");
        let mut total = 0.0;
        for (a, (x, y)) in first.iter().zip(last.iter()).enumerate() {
            let mut d = y - x;
            if let Some(Some(p)) = self.periods.get(a) {
                d -= p * (d / p).round();
            }
            total += d * d;
        }
        total.sqrt()
    }

    /// True when every sample is the same point, in which case the holonomy is trivial.
    pub fn is_degenerate(&self) -> bool {
        let first = &self.points[0];
        self.points.iter().all(|p| (p - first).norm() == 0.0)
    }

    /// The same curve traversed backwards.
    pub fn reversed(&self) -> LoopSamples {
        let total = *self.times.last().expect("nonempty");
        LoopSamples {
            times: self.times.iter().rev().map(|t| total - t).collect(),
            points: self.points.iter().rev().cloned().collect(),
            periods: self.periods.clone(),
        }
    }
}

impl LoopSpec {
    pub fn new(shape: LoopShape, samples: usize, duration: f64) -> Self {
        LoopSpec { shape, samples: Some(samples), duration }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let spec: LoopSpec = serde_json::from_str(text).map_err(Error::from_json)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        crate::report::to_json_string(self)
    }

    /// Same loop with a different sample count (ignored for explicit samples).
    pub fn with_samples(&self, samples: usize) -> Self {
        LoopSpec { samples: Some(samples), ..self.clone() }
    }

    pub fn with_duration(&self, duration: f64) -> Self {
        LoopSpec { duration, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::InvalidInput(format!("duration must be positive, got {}", self.duration)));
        }
        match &self.shape {
            LoopShape::SphereCircle { theta, phi0 } => {
                if !theta.is_finite() || !phi0.is_finite() {
                    return Err(Error::InvalidInput("sphere_circle angles must be finite".into()));
                }
            }
            LoopShape::Fourier { components } => {
                if components.is_empty() {
                    return Err(Error::InvalidInput("fourier loop needs at least one component".into()));
                }
            }
            LoopShape::Samples { points } => {
                let first = points.first().ok_or_else(|| Error::InvalidInput("empty sample list".into()))?;
                if let Some(bad) = points.iter().find(|p| p.len() != first.len()) {
                    return Err(Error::DimensionMismatch {
                        what: "loop sample".into(),
                        expected: first.len(),
                        found: bad.len(),
                    });
                }
                let last = points.last().expect("nonempty");
                let gap = first.iter().zip(last).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                if gap >= CLOSURE_TOL {
                    return Err(Error::OpenLoop { gap });
                }
            }
        }
        if self.sample_count() < 3 {
            return Err(Error::InvalidInput(format!("need at least 3 loop samples, got {}", self.sample_count())));
        }
        Ok(())
    }

    /// `M`, the number of steps.
    pub fn sample_count(&self) -> usize {
        match &self.shape {
            LoopShape::Samples { points } => points.len().saturating_sub(1),
            _ => self.samples.unwrap_or(DEFAULT_SAMPLES),
        }
    }

    pub fn dim(&self) -> usize {
        match &self.shape {
            LoopShape::SphereCircle { .. } => 2,
            LoopShape::Fourier { components } => components.len(),
            LoopShape::Samples { points } => points[0].len(),
        }
    }

    pub fn periods(&self) -> Vec<Option<f64>> {
        match &self.shape {
            LoopShape::SphereCircle { .. } => vec![None, Some(TAU)],
            _ => vec![None; self.dim()],
        }
    }

    /// `λ(t)`, continuous in `t ∈ [0, T]`.
    pub fn point_at(&self, t: f64) -> DVector<f64> {
        let x = TAU * t / self.duration;
        match &self.shape {
            LoopShape::SphereCircle { theta, phi0 } => DVector::from_vec(vec![*theta, phi0 + x]),
            LoopShape::Fourier { components } => {
                DVector::from_iterator(components.len(), components.iter().map(|c| c.value(x)))
            }
            LoopShape::Samples { points } => {
                let (k, frac) = self.segment(t, points.len() - 1);
                let a = DVector::from_column_slice(&points[k]);
                let b = DVector::from_column_slice(&points[k + 1]);
                &a + (&b - &a) * frac
            }
        }
    }

    /// `dλ/dt`; for explicit samples, the velocity of the segment containing `t`.
    pub fn velocity_at(&self, t: f64) -> DVector<f64> {
        let rate = TAU / self.duration;
        match &self.shape {
            LoopShape::SphereCircle { .. } => DVector::from_vec(vec![0.0, rate]),
            LoopShape::Fourier { components } => {
                let x = rate * t;
                DVector::from_iterator(components.len(), components.iter().map(|c| rate * c.phase_derivative(x)))
            }
            LoopShape::Samples { points } => {
                let m = points.len() - 1;
                let (k, _) = self.segment(t, m);
                let dt = self.duration / m as f64;
                (DVector::from_column_slice(&points[k + 1]) - DVector::from_column_slice(&points[k])) / dt
            }
        }
    }

    fn segment(&self, t: f64, m: usize) -> (usize, f64) {
        let s = (t / self.duration).clamp(0.0, 1.0) * m as f64;
        let k = (s.floor() as usize).min(m - 1);
        (k, s - k as f64)
    }

    /// Uniform-in-time discretization with `M + 1` points.
    pub fn sample(&self) -> Result<LoopSamples> {
        self.validate()?;
        let m = self.sample_count();
        let times: Vec<f64> = (0..=m).map(|k| self.duration * k as f64 / m as f64).collect();
        let points: Vec<DVector<f64>> = match &self.shape {
            LoopShape::Samples { points } => points.iter().map(|p| DVector::from_column_slice(p)).collect(),
            LoopShape::SphereCircle { .. } => times.iter().map(|&t| self.point_at(t)).collect(),
            LoopShape::Fourier { .. } => {
                let mut pts: Vec<_> = times[..m].iter().map(|&t| self.point_at(t)).collect();
                pts.push(pts[0].clone());
                pts
            }
        };
        LoopSamples::new(times, points, self.periods())
    }
}

/// Discretizes a loop; see [`LoopSpec::sample`].
pub fn sample_loop(spec: &LoopSpec) -> Result<LoopSamples> {
    spec.sample()
}

/// The loop used with the four-level model: a circle of radius 0.5 about `(0.7, 1.2)`.
pub fn four_level_loop(samples: usize, duration: f64) -> LoopSpec {
    LoopSpec::new(
        LoopShape::Fourier {
            components: vec![
                FourierSeries { mean: 0.7, cos: vec![0.5], sin: vec![] },
                FourierSeries { mean: 1.2, cos: vec![], sin: vec![0.5] },
            ],
        },
        samples,
        duration,
    )
}

#[derive(Clone, Debug, Serialize)]
pub struct AdiabaticityReport {
    /// `Ω / ω_min`.
    pub ratio: f64,
    /// `Ω = max_t ‖dλ/dt‖ / (2π)`, a proxy for the loop's characteristic frequency.
    pub omega: f64,
    /// Smallest level gap seen along the loop.
    pub gap_min: f64,
}

/// Ratio of the loop frequency proxy to the minimal level gap; `≪ 1` means adiabatic.
pub fn adiabaticity_ratio(model: &ModelSpec, spec: &LoopSpec) -> Result<AdiabaticityReport> {
    let samples = spec.sample()?;
    let mut reference = None;
    let mut gap_min = f64::INFINITY;
    for (k, point) in samples.points.iter().enumerate() {
        let h = model.evaluate(point.as_slice())?;
        let spectrum = eigen_decompose(&h, None);
        let reference = reference.get_or_insert_with(|| spectrum.data.clone());
        if !spectrum.data.same_pattern(reference) {
            let (values, _) = crate::linalg::hermitian_eigen(&h);
            let closest = values.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
            return Err(Error::LevelCrossing { sample: k, gap: closest });
        }
        gap_min = gap_min.min(spectrum.data.gap);
    }
    let speed = match &spec.shape {
        LoopShape::Samples { .. } => {
            samples.points.windows(2).map(|w| (&w[1] - &w[0]).norm()).fold(0.0, f64::max) * samples.steps() as f64
                / spec.duration
        }
        _ => samples.times.iter().map(|&t| spec.velocity_at(t).norm()).fold(0.0, f64::max),
    };
    let omega = speed / TAU;
    Ok(AdiabaticityReport { ratio: omega / gap_min, omega, gap_min })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{pauli, spin_half, Coefficient};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};

    #[test]
    fn equator_with_four_steps() {
        let spec = LoopSpec::new(LoopShape::SphereCircle { theta: FRAC_PI_2, phi0: 0.0 }, 4, 1.0);
        let s = sample_loop(&spec).unwrap();
        let phis: Vec<f64> = s.points.iter().map(|p| p[1]).collect();
        for (phi, expected) in phis.iter().zip([0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2, 2.0 * PI]) {
            assert!((phi - expected).abs() < 1e-15);
        }
        assert!(s.closure_gap() < 1e-12);
    }

    #[test]
    fn explicit_samples_pass_through() {
        let points = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.5, 0.5], vec![0.0, 1.0]];
        let spec = LoopSpec::new(LoopShape::Samples { points: points.clone() }, 0, 3.0);
        let s = spec.sample().unwrap();
        assert_eq!(s.steps(), 3);
        for (p, q) in s.points.iter().zip(&points) {
            assert_eq!(p.as_slice(), q.as_slice());
        }
        assert_eq!(s.times, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn open_sample_list_is_rejected() {
        let spec =
            LoopSpec::new(LoopShape::Samples { points: vec![vec![0.0], vec![1.0], vec![2.0], vec![0.5]] }, 0, 1.0);
        assert!(matches!(spec.sample(), Err(Error::OpenLoop { .. })));
    }

    #[test]
    fn fourier_ellipse_closes_exactly() {
        let spec = LoopSpec::new(
            LoopShape::Fourier {
                components: vec![
                    FourierSeries { mean: 1.0, cos: vec![2.0], sin: vec![] },
                    FourierSeries { mean: -1.0, cos: vec![], sin: vec![0.5] },
                ],
            },
            7,
            2.0,
        );
        let s = spec.sample().unwrap();
        assert_eq!(s.points[0], s.points[7]);
        for (t, p) in s.times.iter().zip(&s.points) {
            let x = TAU * t / 2.0;
            assert!((p[0] - (1.0 + 2.0 * x.cos())).abs() < 1e-14);
            assert!((p[1] - (-1.0 + 0.5 * x.sin())).abs() < 1e-14);
            // on the ellipse ((x−1)/2)² + ((y+1)/0.5)² = 1
            let r = ((p[0] - 1.0) / 2.0).powi(2) + ((p[1] + 1.0) / 0.5).powi(2);
            assert!((r - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn degenerate_loop_is_detected() {
        let spec = LoopSpec::new(LoopShape::Samples { points: vec![vec![0.3]; 5] }, 0, 1.0);
        assert!(spec.sample().unwrap().is_degenerate());
    }

    #[test]
    fn too_few_samples() {
        let spec = LoopSpec::new(LoopShape::SphereCircle { theta: 1.0, phi0: 0.0 }, 2, 1.0);
        assert!(matches!(spec.sample(), Err(Error::InvalidInput(_))));
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn loop_file_round_trip() {
        let text = r#"{"kind":"sphere_circle","theta":1.0471975512,"phi0":0,"samples":2000,"duration":1000}"#;
        let spec = LoopSpec::parse(text).unwrap();
        assert_eq!(spec.sample_count(), 2000);
        assert_eq!(spec.shape, LoopShape::SphereCircle { theta: 1.0471975512, phi0: 0.0 });
        assert_eq!(LoopSpec::parse(&spec.to_json()).unwrap(), spec);
    }

    #[test]
    fn reversed_loop_runs_backwards() {
        let s = four_level_loop(10, 2.0).sample().unwrap();
        let r = s.reversed();
        assert_eq!(r.points[0], s.points[10]);
        assert_eq!(r.points[3], s.points[7]);
        assert!((r.times[3] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn adiabaticity_ratio_scales_inversely_with_duration() {
        let spec = LoopSpec::new(LoopShape::SphereCircle { theta: FRAC_PI_3, phi0: 0.0 }, 200, 1000.0);
        let a = adiabaticity_ratio(&spin_half(), &spec).unwrap();
        // ‖dλ/dt‖ = 2π/T on a latitude circle in (θ, φ) coordinates, and ω_min = 1.
        assert!((a.ratio - 1e-3).abs() < 1e-12);
        assert!((a.gap_min - 1.0).abs() < 1e-12);
        let b = adiabaticity_ratio(&spin_half(), &spec.with_duration(2000.0)).unwrap();
        assert!((b.ratio - a.ratio / 2.0).abs() < 1e-15);
    }

    #[test]
    fn crossing_is_reported() {
        let [sx, _, sz] = pauli();
        let model =
            ModelSpec::linear(2, None, vec![sx, sz], vec![Coefficient::Component(0), Coefficient::Component(1)], 2)
                .unwrap();
        let points = vec![vec![1.0, 0.0], vec![0.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let spec = LoopSpec::new(LoopShape::Samples { points }, 0, 10.0);
        assert!(matches!(adiabaticity_ratio(&model, &spec), Err(Error::LevelCrossing { sample: 1, .. })));
    }
}
