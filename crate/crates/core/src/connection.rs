//! Berry and Wilczek–Zee connections.
//!
//! Components are stored as `A_ab = i⟨z_b|∂z_a⟩`, one Hermitian `d × d` matrix per control
//! parameter. Three evaluation routes are provided and must agree:
//!
//! - [`connection_abelian_closed`]: `A = (i/2)(ξ*dξ − ξ dξ*)/(1 + |ξ|²)` for `d = 1`;
//! - [`connection_frame`]: central differences of orthonormal frames;
//! - [`connection_closed_form`]: analytic differentiation of the Gram-matrix frames.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::frames::{frame_at, orthonormal_frame, xi_with_tangents, Chart, Frame, LevelTarget, Xi};
use crate::linalg::{hermitian_residual, hermitize, unitarity_residual, CMatrix, C64, I};
use crate::model::ModelSpec;

/// Default central-difference step.
pub const DEFAULT_H_FD: f64 = 1e-4;

/// Connection 1-form at one parameter point: `A = Σ_A components[A] dλ_A`.
#[derive(Clone, Debug)]
pub struct ConnectionSample {
    pub lambda: DVector<f64>,
    pub components: Vec<CMatrix>,
    /// `max|A − A†|` before Hermitization, a quality metric of the evaluation.
    pub skew_residual: f64,
}

impl ConnectionSample {
    fn from_raw(lambda: DVector<f64>, raw: Vec<CMatrix>) -> Self {
        let skew_residual = raw.iter().map(hermitian_residual).fold(0.0, f64::max);
        ConnectionSample { lambda, components: raw.iter().map(hermitize).collect(), skew_residual }
    }

    pub fn degeneracy(&self) -> usize {
        self.components.first().map_or(0, CMatrix::nrows)
    }

    /// `Σ_A A_A dλ_A`.
    pub fn contract(&self, dlambda: &DVector<f64>) -> CMatrix {
        let d = self.degeneracy();
        self.components.iter().zip(dlambda.iter()).fold(CMatrix::zeros(d, d), |acc, (a, &dl)| acc + a.scale(dl))
    }

    /// Real components for `d = 1`.
    pub fn abelian(&self) -> Vec<f64> {
        self.components.iter().map(|a| a[(0, 0)].re).collect()
    }

    /// Largest entrywise difference between two samples.
    pub fn max_diff(&self, other: &ConnectionSample) -> f64 {
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| crate::linalg::max_abs_diff(a, b))
            .fold(0.0, f64::max)
    }

    /// Average of two samples at the midpoint of their parameters.
    pub fn average(&self, other: &ConnectionSample) -> ConnectionSample {
        ConnectionSample {
            lambda: (&self.lambda + &other.lambda) * 0.5,
            components: self.components.iter().zip(&other.components).map(|(a, b)| (a + b).scale(0.5)).collect(),
            skew_residual: self.skew_residual.max(other.skew_residual),
        }
    }
}

/// `A = (i/2)(ξ*dξ − ξ dξ*)/(1 + |ξ|²) = −Im(ξ†dξ)/(1 + |ξ|²)` per component; `d = 1`.
pub fn connection_abelian_closed(xi: &Xi, dxi: &[CMatrix], lambda: &DVector<f64>) -> Result<ConnectionSample> {
    if xi.z.ncols() != 1 {
        return Err(Error::InvalidInput("closed abelian connection needs d = 1".into()));
    }
    let v = xi.z.column(0);
    let norm2 = 1.0 + v.norm_squared();
    let components = dxi
        .iter()
        .map(|dz| {
            let value = -v.dotc(&dz.column(0)).im / norm2;
            CMatrix::from_element(1, 1, C64::new(value, 0.0))
        })
        .collect();
    Ok(ConnectionSample { lambda: lambda.clone(), components, skew_residual: 0.0 })
}

/// `A_A[a, b] = i (Z† ∂_A Z)[b, a]` with `∂_A Z` from central differences of step `h_fd`.
/// `stencil[A] = (frame at λ + h e_A, frame at λ − h e_A)`; all frames must share a chart.
pub fn connection_frame(
    center: &Frame,
    stencil: &[(Frame, Frame)],
    h_fd: f64,
    lambda: &DVector<f64>,
) -> Result<ConnectionSample> {
    if stencil.iter().any(|(p, m)| p.chart != center.chart || m.chart != center.chart) {
        return Err(Error::InvalidInput("finite-difference stencil crosses a chart boundary".into()));
    }
    let z = &center.columns;
    let raw = stencil
        .iter()
        .map(|(plus, minus)| {
            let dz = (&plus.columns - &minus.columns).unscale(2.0 * h_fd);
            (z.adjoint() * dz).transpose() * I
        })
        .collect();
    Ok(ConnectionSample::from_raw(lambda.clone(), raw))
}

/// Connection from the Gram-matrix construction, differentiated analytically.
///
/// With homogeneous vectors `X = (Z; 1)`, `Γ = X†X = 1 + Z†Z = R†R` (so that the
/// leading minors give `det Γ_a = Π_{b≤a} R_bb²`) and frames `Q = X R⁻¹`:
///
/// ```text
/// S  = R⁻† dΓ R⁻¹,   dΓ = dZ†Z + Z†dZ
/// dR R⁻¹ = K,        K = strict upper part of S + diag(S)/2
/// dQ = dX R⁻¹ − Q K
/// A_ab = i ⟨z_b | dz_a⟩ = i (Q† dQ)_ba
/// ```
pub fn connection_closed_form(xi: &Xi, dxi: &[CMatrix], lambda: &DVector<f64>) -> Result<ConnectionSample> {
    let x = xi.homogeneous();
    let d = x.ncols();
    let gamma = x.adjoint() * &x;
    let r = gamma
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("Gram matrix is not positive definite".into()))?
        .l()
        .adjoint();
    let r_inv = r.clone().try_inverse().ok_or_else(|| Error::InvalidInput("singular Gram factor".into()))?;
    let q = &x * &r_inv;
    let raw = dxi
        .iter()
        .map(|dz| {
            let dx = xi.embed_tangent(dz);
            let dgamma = dx.adjoint() * &x + x.adjoint() * &dx;
            let s = r_inv.adjoint() * dgamma * &r_inv;
            let k = CMatrix::from_fn(d, d, |i, j| match i.cmp(&j) {
                std::cmp::Ordering::Less => s[(i, j)],
                std::cmp::Ordering::Equal => s[(i, j)].scale(0.5),
                std::cmp::Ordering::Greater => C64::new(0.0, 0.0),
            });
            let dq = &dx * &r_inv - &q * k;
            (q.adjoint() * dq).transpose() * I
        })
        .collect();
    Ok(ConnectionSample::from_raw(lambda.clone(), raw))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConnectionMethod {
    /// Analytic differentiation of the Gram-matrix frames.
    ClosedForm,
    /// `A = (i/2)(ξ*dξ − ξ dξ*)/(1 + |ξ|²)`, only for `d = 1`.
    AbelianClosed,
    /// Central differences of frames with the given step.
    FrameDifference { h_fd: f64 },
}

/// Connection of `level` at `λ` evaluated in `chart`.
pub fn connection_at(
    model: &ModelSpec,
    lambda: &DVector<f64>,
    level: &LevelTarget,
    chart: &Chart,
    method: ConnectionMethod,
) -> Result<ConnectionSample> {
    match method {
        ConnectionMethod::ClosedForm | ConnectionMethod::AbelianClosed => {
            let (h, dh) = model.evaluate_with_derivatives(lambda.as_slice())?;
            let (xi, dz) = xi_with_tangents(&h, &dh, level.energy, chart)?;
            if method == ConnectionMethod::ClosedForm {
                connection_closed_form(&xi, &dz, lambda)
            } else {
                connection_abelian_closed(&xi, &dz, lambda)
            }
        }
        ConnectionMethod::FrameDifference { h_fd } => {
            let center = frame_at(model, lambda.as_slice(), level, chart)?;
            let stencil = (0..lambda.len())
                .map(|a| {
                    let mut plus = lambda.clone();
                    let mut minus = lambda.clone();
                    plus[a] += h_fd;
                    minus[a] -= h_fd;
                    Ok((
                        frame_at(model, plus.as_slice(), level, chart)?,
                        frame_at(model, minus.as_slice(), level, chart)?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            connection_frame(&center, &stencil, h_fd, lambda)
        }
    }
}

/// Frame and connection from one Hamiltonian evaluation, for callers that need both.
pub fn frame_and_connection(
    model: &ModelSpec,
    lambda: &DVector<f64>,
    level: &LevelTarget,
    chart: &Chart,
) -> Result<(Frame, ConnectionSample)> {
    let (h, dh) = model.evaluate_with_derivatives(lambda.as_slice())?;
    let (xi, dz) = xi_with_tangents(&h, &dh, level.energy, chart)?;
    Ok((orthonormal_frame(&xi), connection_closed_form(&xi, &dz, lambda)?))
}

/// `A' = G A G† + i (∂G) G†` at every sample, with `∂G` from Richardson-extrapolated
/// central differences of step `h_fd`.
///
/// The gauge acts on frames as `z'_a = Σ_b G_ab z_b`.
pub fn gauge_transform<F>(path: &[ConnectionSample], gauge: F, h_fd: f64) -> Result<Vec<ConnectionSample>>
where
    F: Fn(&DVector<f64>) -> CMatrix,
{
    path.iter()
        .map(|sample| {
            let g = gauge(&sample.lambda);
            let residual = unitarity_residual(&g);
            if residual > 1e-10 {
                return Err(Error::NotUnitary { residual });
            }
            let raw = sample
                .components
                .iter()
                .enumerate()
                .map(|(a, comp)| {
                    let central = |h: f64| {
                        let mut plus = sample.lambda.clone();
                        let mut minus = sample.lambda.clone();
                        plus[a] += h;
                        minus[a] -= h;
                        (gauge(&plus) - gauge(&minus)).unscale(2.0 * h)
                    };
                    let dg = (central(h_fd / 2.0).scale(4.0) - central(h_fd)).unscale(3.0);
                    &g * comp * g.adjoint() + dg * g.adjoint() * I
                })
                .collect();
            Ok(ConnectionSample::from_raw(sample.lambda.clone(), raw))
        })
        .collect()
}

/// `F = log(1 + |z|²)`.
pub fn kahler_potential(z: &[C64]) -> f64 {
    z.iter().map(|w| w.norm_sqr()).sum::<f64>().ln_1p()
}

/// Fourth-order central first and second differences of `f` at 0.
fn d1(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (f(-2.0 * h) - 8.0 * f(-h) + 8.0 * f(h) - f(2.0 * h)) / (12.0 * h)
}

fn d2(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (-f(-2.0 * h) + 16.0 * f(-h) - 30.0 * f(0.0) + 16.0 * f(h) - f(2.0 * h)) / (12.0 * h * h)
}

/// The `du∧dv` component of the Kähler form `i∂∂̄F` pulled back along `ξ(u, v)`.
///
/// In real coordinates `ξ = x + iy`, `i∂∂̄F = ½ ΔF dx∧dy`. The Laplacian uses fourth-order
/// differences with a step proportional to `1 + |ξ|`, the scale on which `F` varies; the
/// Jacobian of the map uses fourth-order differences of step `h`.
pub fn kahler_two_form<P, M>(potential: P, map: M, u: f64, v: f64, h: f64) -> f64
where
    P: Fn(C64) -> f64,
    M: Fn(f64, f64) -> C64,
{
    let xi = map(u, v);
    let step = 1e-2 * (1.0 + xi.norm());
    let laplacian = d2(|s| potential(xi + s), step) + d2(|s| potential(xi + I * s), step);
    let du_re = d1(|s| map(u + s, v).re, h);
    let du_im = d1(|s| map(u + s, v).im, h);
    let dv_re = d1(|s| map(u, v + s).re, h);
    let dv_im = d1(|s| map(u, v + s).im, h);
    0.5 * laplacian * (du_re * dv_im - dv_re * du_im)
}

/// `∂_u A_v − ∂_v A_u` for an abelian connection given as `(A_u, A_v)`.
pub fn abelian_curvature<A>(connection: A, u: f64, v: f64, h: f64) -> f64
where
    A: Fn(f64, f64) -> (f64, f64),
{
    let du_av = (connection(u + h, v).1 - connection(u - h, v).1) / (2.0 * h);
    let dv_au = (connection(u, v + h).0 - connection(u, v - h).0) / (2.0 * h);
    du_av - dv_au
}

/// CSV with columns `t,A,a,b,re,im`, one row per sample, parameter and matrix entry.
pub fn connection_csv(samples: &[(f64, ConnectionSample)]) -> String {
    let mut out = String::from("t,A,a,b,re,im\n");
    for (t, sample) in samples {
        for (index, comp) in sample.components.iter().enumerate() {
            for a in 0..comp.nrows() {
                for b in 0..comp.ncols() {
                    let z = comp[(a, b)];
                    out.push_str(&format!("{t:.12e},{index},{a},{b},{:.12e},{:.12e}\n", z.re, z.im));
                }
            }
        }
    }
    out
}
