//! Eigenspace frames in homogeneous coordinates.
//!
//! For a level `E` of degeneracy `d`, a chart splits the rows of `H` into `n − d` kept rows
//! `K` and `d` dropped rows `D`. When `H⊥ − E = (H − E)[K, K]` is invertible, the vectors
//! `x_a` with `x_a[K] = ξ_a`, `x_a[D] = c_a` (the `a`-th standard basis vector) and
//!
//! ```text
//! (H⊥ − E) Z = h,    h = −H[K, D],    Z = [ξ_1 … ξ_d]
//! ```
//!
//! span the eigenspace. Orthonormal frames follow from the Gram matrices
//! `Γ_a = 1 + Z_a†Z_a` of the first `a` columns via the bordered-determinant formula.
//! Frames built this way are functions of `λ` alone, so they are smooth and single valued
//! inside one chart; [`frame_path`] switches charts where a minor becomes small.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{determinant, identity, max_abs, submatrix, CMatrix, C64};
use crate::model::{eigen_decompose, LoopSamples, ModelSpec};

/// Default relative chart threshold: a chart is valid while
/// `|det(H⊥ − E)| > 1e-6 · max|H − E|`.
pub const DEFAULT_CHART_THRESHOLD: f64 = 1e-6;

/// A choice of `n − d` kept rows/columns for one level.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Chart {
    pub level: usize,
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
}

impl Chart {
    pub fn new(level: usize, n: usize, kept: Vec<usize>) -> Self {
        let dropped = (0..n).filter(|r| !kept.contains(r)).collect();
        Chart { level, kept, dropped }
    }

    /// The default chart: keep the first `n − d` rows.
    pub fn leading(level: usize, n: usize, degeneracy: usize) -> Self {
        Chart::new(level, n, (0..n - degeneracy).collect())
    }

    pub fn dim(&self) -> usize {
        self.kept.len() + self.dropped.len()
    }

    pub fn degeneracy(&self) -> usize {
        self.dropped.len()
    }

    /// Bitmask of the kept rows, used as a compact identifier in diagnostics.
    pub fn id(&self) -> u64 {
        self.kept.iter().fold(0, |acc, r| acc | (1 << r))
    }
}

/// Homogeneous coordinates `Z` of one level in one chart.
#[derive(Clone, Debug)]
pub struct Xi {
    /// `(n − d) × d`; column `a` is `ξ_a`.
    pub z: CMatrix,
    pub chart: Chart,
    pub energy: f64,
    /// `det(H⊥ − E)` for this chart.
    pub det: C64,
}

impl Xi {
    /// The `n × d` matrix of homogeneous vectors `x_a = (ξ_a, c_a)` in original row order.
    pub fn homogeneous(&self) -> CMatrix {
        let d = self.chart.degeneracy();
        let mut x = CMatrix::zeros(self.chart.dim(), d);
        for (r, &row) in self.chart.kept.iter().enumerate() {
            for a in 0..d {
                x[(row, a)] = self.z[(r, a)];
            }
        }
        for (a, &row) in self.chart.dropped.iter().enumerate() {
            x[(row, a)] = C64::new(1.0, 0.0);
        }
        x
    }

    /// Embeds per-parameter derivatives `∂Z` into `n × d` matrices (zero in dropped rows).
    pub fn embed_tangent(&self, dz: &CMatrix) -> CMatrix {
        let mut x = CMatrix::zeros(self.chart.dim(), self.chart.degeneracy());
        for (r, &row) in self.chart.kept.iter().enumerate() {
            for a in 0..dz.ncols() {
                x[(row, a)] = dz[(r, a)];
            }
        }
        x
    }
}

/// Orthonormal basis of one eigenspace, `n × d`.
#[derive(Clone, Debug)]
pub struct Frame {
    pub columns: CMatrix,
    pub chart: Chart,
}

/// Absolute chart threshold `rel · max|H − E|`.
pub fn chart_threshold(h: &CMatrix, energy: f64, rel: f64) -> f64 {
    rel * max_abs(&shifted(h, energy))
}

fn shifted(h: &CMatrix, energy: f64) -> CMatrix {
    h - identity(h.nrows()).scale(energy)
}

/// `det(H⊥ − E)` for a chart.
pub fn chart_determinant(h: &CMatrix, energy: f64, chart: &Chart) -> C64 {
    let k = &chart.kept;
    determinant(&(submatrix(h, k, k) - identity(k.len()).scale(energy)))
}

/// Lexicographic `k`-subsets of `0..n`.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for r in start..n {
            if n - r < k - current.len() {
                break;
            }
            current.push(r);
            rec(r + 1, n, k, current, out);
            current.pop();
        }
    }
    rec(0, n, k, &mut current, &mut out);
    out
}

/// Chart maximizing the smallest `|det(H⊥ − E)|` over the given Hamiltonians.
fn best_chart(hs: &[&CMatrix], energy: f64, degeneracy: usize, level: usize) -> (Chart, f64) {
    let n = hs[0].nrows();
    let mut best: Option<(Chart, f64)> = None;
    for kept in combinations(n, n - degeneracy) {
        let chart = Chart::new(level, n, kept);
        let score = hs.iter().map(|h| chart_determinant(h, energy, &chart).norm()).fold(f64::INFINITY, f64::min);
        if best.as_ref().is_none_or(|(_, s)| score > *s * (1.0 + 1e-9)) {
            best = Some((chart, score));
        }
    }
    best.expect("at least one subset")
}

/// Picks the row subset of size `n − d` with the largest `|det(H⊥ − E)|`, searching
/// subsets in lexicographic order (ties keep the first). `threshold` is absolute.
pub fn select_chart(h: &CMatrix, energy: f64, degeneracy: usize, level: usize, threshold: f64) -> Result<Chart> {
    if degeneracy == 0 || degeneracy > h.nrows() {
        return Err(Error::InvalidInput(format!("degeneracy {degeneracy} out of range")));
    }
    let (chart, score) = best_chart(&[h], energy, degeneracy, level);
    if score <= threshold {
        return Err(Error::NoValidChart { best: score, threshold });
    }
    Ok(chart)
}

/// Solves `(H⊥ − E) Z = −H[K, D]` and, for every `∂H/∂λ_A`, the tangent
/// `∂Z = (H⊥ − E)⁻¹ (−∂H[K, D] − ∂H[K, K] Z)` (the energy is constant on an isospectral family).
pub fn xi_with_tangents(h: &CMatrix, dh: &[CMatrix], energy: f64, chart: &Chart) -> Result<(Xi, Vec<CMatrix>)> {
    let k = &chart.kept;
    let dropped = &chart.dropped;
    if chart.dim() != h.nrows() {
        return Err(Error::DimensionMismatch { what: "chart".into(), expected: h.nrows(), found: chart.dim() });
    }
    let minor = submatrix(h, k, k) - identity(k.len()).scale(energy);
    let rhs = -submatrix(h, k, dropped);
    let lu = minor.clone().lu();
    let det = if k.is_empty() { C64::new(1.0, 0.0) } else { lu.determinant() };
    if det.norm() == 0.0 || !det.re.is_finite() {
        return Err(Error::ChartInvalid { det: det.norm() });
    }
    let z = if k.is_empty() {
        CMatrix::zeros(0, dropped.len())
    } else {
        lu.solve(&rhs).ok_or(Error::ChartInvalid { det: det.norm() })?
    };
    let tangents = dh
        .iter()
        .map(|d| {
            if k.is_empty() {
                return Ok(CMatrix::zeros(0, dropped.len()));
            }
            let rhs = -submatrix(d, k, dropped) - submatrix(d, k, k) * &z;
            lu.solve(&rhs).ok_or(Error::ChartInvalid { det: det.norm() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((Xi { z, chart: chart.clone(), energy, det }, tangents))
}

/// Homogeneous coordinates of a degenerate level.
pub fn xi_degenerate(h: &CMatrix, energy: f64, chart: &Chart) -> Result<Xi> {
    xi_with_tangents(h, &[], energy, chart).map(|(xi, _)| xi)
}

/// Homogeneous coordinates of a nondegenerate level: `ξ = (H⊥ − E)⁻¹ h`, `h_i = −H_{i,dropped}`.
pub fn xi_abelian(h: &CMatrix, energy: f64, chart: &Chart) -> Result<Xi> {
    if chart.degeneracy() != 1 {
        return Err(Error::InvalidInput(format!(
            "abelian coordinates need d = 1, chart has d = {}",
            chart.degeneracy()
        )));
    }
    xi_degenerate(h, energy, chart)
}

/// `Γ_a = 1 + Z_a†Z_a` for `a = 1..d`, where `Z_a` holds the first `a` columns.
pub fn gram_matrices(xi: &Xi) -> Vec<CMatrix> {
    let d = xi.z.ncols();
    (1..=d)
        .map(|a| {
            let za = xi.z.columns(0, a);
            identity(a) + za.adjoint() * za
        })
        .collect()
}

/// Orthonormal frame from the bordered-determinant formula
///
/// ```text
///            1       | Γ_{a−1}             x_1 |
/// z_a  ∝  ------- ·  |                    ⋮   |
///         det Γ_{a−1} | ⟨x_a|x_1⟩ … ⟨x_a|x_{a−1}⟩ x_a |
/// ```
///
/// expanded along the vector column, followed by explicit normalization.
pub fn orthonormal_frame(xi: &Xi) -> Frame {
    let x = xi.homogeneous();
    let gram = x.adjoint() * &x;
    let d = x.ncols();
    let mut columns = CMatrix::zeros(x.nrows(), d);
    for a in 0..d {
        let leading = determinant(&gram.view((0, 0), (a, a)).into_owned()).re;
        let mut z = x.column(a).into_owned();
        if a > 0 {
            z.fill(C64::new(0.0, 0.0));
            // Entry (i, j) of the bordered matrix is ⟨x_j|x_i⟩ = gram[(j, i)] for j < a.
            for i in 0..=a {
                let rows: Vec<usize> = (0..=a).filter(|&r| r != i).collect();
                let minor = CMatrix::from_fn(a, a, |r, j| gram[(j, rows[r])]);
                let sign = if (i + a) % 2 == 0 { 1.0 } else { -1.0 };
                z += x.column(i) * (determinant(&minor) * sign);
            }
            z.unscale_mut(leading);
        }
        let norm = z.norm();
        columns.set_column(a, &(z / C64::new(norm, 0.0)));
    }
    Frame { columns, chart: xi.chart.clone() }
}

/// Modified Gram–Schmidt on the columns of `x`, in order.
pub fn gram_schmidt(x: &CMatrix) -> CMatrix {
    let mut q = x.clone();
    for a in 0..q.ncols() {
        for b in 0..a {
            let qb = q.column(b).into_owned();
            let proj = qb.dotc(&q.column(a));
            q.column_mut(a).axpy(-proj, &qb, C64::new(1.0, 0.0));
        }
        let norm = q.column(a).norm();
        q.column_mut(a).unscale_mut(norm);
    }
    q
}

/// The level being followed: its index in the reference spectrum, energy and degeneracy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LevelTarget {
    pub index: usize,
    pub energy: f64,
    pub degeneracy: usize,
}

impl LevelTarget {
    /// Reads level `index` off the spectrum of `H(point)`.
    pub fn at(model: &ModelSpec, point: &DVector<f64>, index: usize, degeneracy_tol: Option<f64>) -> Result<Self> {
        let spectrum = eigen_decompose(&model.evaluate(point.as_slice())?, degeneracy_tol);
        let count = spectrum.data.levels.len();
        let level = spectrum.data.levels.get(index).ok_or(Error::NoSuchLevel { level: index, count })?;
        Ok(LevelTarget { index, energy: level.energy, degeneracy: level.degeneracy })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FrameOptions {
    /// Relative chart threshold, see [`DEFAULT_CHART_THRESHOLD`].
    pub chart_threshold: f64,
    pub degeneracy_tol: Option<f64>,
}

impl Default for FrameOptions {
    fn default() -> Self {
        FrameOptions { chart_threshold: DEFAULT_CHART_THRESHOLD, degeneracy_tol: None }
    }
}

/// Frame of `level` at `λ` in a given chart.
pub fn frame_at(model: &ModelSpec, lambda: &[f64], level: &LevelTarget, chart: &Chart) -> Result<Frame> {
    let h = model.evaluate(lambda)?;
    Ok(orthonormal_frame(&xi_degenerate(&h, level.energy, chart)?))
}

#[derive(Clone, Debug)]
pub struct PathPoint {
    pub t: f64,
    pub lambda: DVector<f64>,
    /// Chart used for the step leaving this sample (the last sample keeps the final chart).
    pub chart: Chart,
    pub frame: Frame,
    pub det: C64,
}

/// A chart change at `sample`; `overlap = frame_old† frame_new` at that sample.
#[derive(Clone, Debug)]
pub struct SegmentBoundary {
    pub sample: usize,
    pub from: Chart,
    pub to: Chart,
    pub overlap: CMatrix,
}

#[derive(Clone, Debug)]
pub struct FramePath {
    pub level: LevelTarget,
    pub points: Vec<PathPoint>,
    pub boundaries: Vec<SegmentBoundary>,
}

impl FramePath {
    pub fn segment_count(&self) -> usize {
        self.boundaries.len() + 1
    }

    /// Frames as plain matrices, one per sample.
    pub fn frames(&self) -> Vec<CMatrix> {
        self.points.iter().map(|p| p.frame.columns.clone()).collect()
    }

    /// Diagnostic CSV: `t,det_re,det_im,chart_id`.
    pub fn determinant_csv(&self) -> String {
        let mut out = String::from("t,det_re,det_im,chart_id\n");
        for p in &self.points {
            out.push_str(&format!("{:.12e},{:.12e},{:.12e},{}\n", p.t, p.det.re, p.det.im, p.chart.id()));
        }
        out
    }
}

/// Walks the loop keeping the current chart while `|det(H⊥ − E)|` stays above threshold at
/// the next sample; otherwise switches to the chart that is best at both ends of the step and
/// records the overlap between the two frames at the switch sample.
pub fn frame_path(model: &ModelSpec, samples: &LoopSamples, level: usize, options: &FrameOptions) -> Result<FramePath> {
    let target = LevelTarget::at(model, &samples.points[0], level, options.degeneracy_tol)?;
    let energy = target.energy;
    let d = target.degeneracy;
    let hs = samples.points.iter().map(|p| model.evaluate(p.as_slice())).collect::<Result<Vec<_>>>()?;
    let thresholds: Vec<f64> = hs.iter().map(|h| chart_threshold(h, energy, options.chart_threshold)).collect();

    let mut chart = select_chart(&hs[0], energy, d, level, thresholds[0])?;
    let mut points = Vec::with_capacity(hs.len());
    let mut boundaries = Vec::new();
    for k in 0..hs.len() {
        let mut xi = xi_degenerate(&hs[k], energy, &chart)?;
        if k + 1 < hs.len() && chart_determinant(&hs[k + 1], energy, &chart).norm() <= thresholds[k + 1] {
            let (next, score) = best_chart(&[&hs[k], &hs[k + 1]], energy, d, level);
            if score <= thresholds[k].max(thresholds[k + 1]) {
                return Err(Error::NoValidChart { best: score, threshold: thresholds[k + 1] });
            }
            let old = orthonormal_frame(&xi);
            xi = xi_degenerate(&hs[k], energy, &next)?;
            let new = orthonormal_frame(&xi);
            boundaries.push(SegmentBoundary {
                sample: k,
                from: chart.clone(),
                to: next.clone(),
                overlap: old.columns.adjoint() * &new.columns,
            });
            chart = next;
        }
        points.push(PathPoint {
            t: samples.times[k],
            lambda: samples.points[k].clone(),
            chart: chart.clone(),
            det: xi.det,
            frame: orthonormal_frame(&xi),
        });
    }
    Ok(FramePath { level: target, points, boundaries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, max_abs_diff, max_principal_angle, unitarity_residual};
    use crate::model::{four_level, four_level_loop, spin_half, LoopShape, LoopSpec};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn diag(values: &[f64]) -> CMatrix {
        CMatrix::from_diagonal(&DVector::from_iterator(values.len(), values.iter().map(|&v| c(v, 0.))))
    }

    fn spin_h(theta: f64, phi: f64) -> CMatrix {
        spin_half().evaluate(&[theta, phi]).unwrap()
    }

    #[test]
    fn chart_for_isolated_top_level() {
        let chart = select_chart(&diag(&[0., 0., 1.]), 1.0, 1, 0, 1e-9).unwrap();
        assert_eq!(chart.kept, vec![0, 1]);
        assert_eq!(chart.dropped, vec![2]);
    }

    #[test]
    fn chart_at_north_pole_drops_first_row() {
        let chart = select_chart(&spin_h(0.0, 0.0), 0.5, 1, 1, 1e-9).unwrap();
        assert_eq!(chart.kept, vec![1]);
    }

    #[test]
    fn leading_rows_work_for_four_level_model() {
        let model = four_level();
        let h = model.evaluate(&[0.9, 1.3]).unwrap();
        for energy in [1.0, -1.0] {
            let det = chart_determinant(&h, energy, &Chart::leading(0, 4, 2)).norm();
            assert!(det > chart_threshold(&h, energy, DEFAULT_CHART_THRESHOLD), "det {det}");
        }
    }

    #[test]
    fn xi_for_spin_half_levels() {
        let chart = Chart::leading(0, 2, 1);
        for &(theta, phi) in &[(0.4, 0.3), (1.9, -2.0), (FRAC_PI_2, 1.0)] {
            let h = spin_h(theta, phi);
            let up = xi_abelian(&h, 0.5, &chart).unwrap().z[(0, 0)];
            let down = xi_abelian(&h, -0.5, &chart).unwrap().z[(0, 0)];
            let expected_up = C64::from_polar(1.0 / (theta / 2.0).tan(), -phi);
            let expected_down = -C64::from_polar((theta / 2.0).tan(), -phi);
            assert!((up - expected_up).norm() < 1e-13);
            assert!((down - expected_down).norm() < 1e-13);
        }
        let trivial = xi_abelian(&diag(&[0., 1.]), 1.0, &chart).unwrap();
        assert_eq!(trivial.z[(0, 0)], c(0., 0.));
    }

    #[test]
    fn xi_solves_the_defining_system() {
        let h = four_level().evaluate(&[0.6, 0.8]).unwrap();
        for energy in [1.0, -1.0] {
            let xi = xi_degenerate(&h, energy, &Chart::leading(0, 4, 2)).unwrap();
            let x = xi.homogeneous();
            assert!(max_abs(&((&h - identity(4).scale(energy)) * &x)) < 1e-10);
        }
    }

    #[test]
    fn xi_zero_for_standard_eigenvectors() {
        let xi = xi_degenerate(&diag(&[0., 0., 1., 1.]), 1.0, &Chart::leading(1, 4, 2)).unwrap();
        assert!(max_abs(&xi.z) == 0.0);
        let frame = orthonormal_frame(&xi);
        assert!(max_abs_diff(&frame.columns, &identity(4).columns(2, 2).into_owned()) < 1e-15);
        for g in gram_matrices(&xi) {
            assert!(max_abs_diff(&g, &identity(g.nrows())) == 0.0);
        }
    }

    #[test]
    fn block_model_matches_direct_solve() {
        // H = [[A, B], [B†, D]] with A = 2·1 and a small coupling B; the low level sits near 0.
        let b = CMatrix::from_row_slice(2, 2, &[c(0.1, 0.02), c(0.0, 0.05), c(-0.03, 0.0), c(0.07, -0.01)]);
        let mut h = CMatrix::zeros(4, 4);
        h.view_mut((0, 0), (2, 2)).copy_from(&identity(2).scale(2.0));
        h.view_mut((0, 2), (2, 2)).copy_from(&b);
        h.view_mut((2, 0), (2, 2)).copy_from(&b.adjoint());
        h.view_mut((2, 2), (2, 2)).copy_from(&CMatrix::from_row_slice(
            2,
            2,
            &[c(0., 0.), c(0.01, 0.), c(0.01, 0.), c(0., 0.)],
        ));
        let spectrum = eigen_decompose(&h, None);
        let energy = spectrum.data.levels[0].energy;
        let xi = xi_abelian(&h, energy, &Chart::new(0, 4, vec![0, 1, 3])).unwrap();
        let direct = (submatrix(&h, &[0, 1, 3], &[0, 1, 3]) - identity(3).scale(energy))
            .lu()
            .solve(&-submatrix(&h, &[0, 1, 3], &[2]))
            .unwrap();
        assert!(max_abs_diff(&xi.z, &direct) < 1e-14);
        let frame = orthonormal_frame(&xi);
        assert!(max_principal_angle(&frame.columns, &spectrum.blocks[0]) < 1e-8);
    }

    #[test]
    fn gram_matrix_for_spin_half() {
        let theta = 1.1;
        let xi = xi_abelian(&spin_h(theta, 0.4), 0.5, &Chart::leading(1, 2, 1)).unwrap();
        let g = &gram_matrices(&xi)[0];
        assert!((g[(0, 0)].re - 1.0 / (theta / 2.0).sin().powi(2)).abs() < 1e-13);
    }

    #[test]
    fn gram_matrix_is_inner_product_of_homogeneous_vectors() {
        let z = CMatrix::from_row_slice(
            3,
            2,
            &[c(0.3, -0.1), c(1.2, 0.4), c(-0.5, 0.9), c(0.0, 0.2), c(0.7, 0.7), c(-1.1, 0.0)],
        );
        let xi = Xi { z, chart: Chart::new(0, 5, vec![0, 2, 4]), energy: 0.0, det: c(1., 0.) };
        let x = xi.homogeneous();
        let gammas = gram_matrices(&xi);
        assert!(max_abs_diff(&gammas[1], &(x.adjoint() * &x)) < 1e-15);
        assert!(max_abs_diff(&gammas[0], &(x.columns(0, 1).adjoint() * x.columns(0, 1))) < 1e-15);
        assert!(determinant(&gammas[1]).re > 0.0);
    }

    #[test]
    fn spin_half_frame_components() {
        let (theta, phi) = (0.8, 2.2);
        let xi = xi_abelian(&spin_h(theta, phi), 0.5, &Chart::leading(1, 2, 1)).unwrap();
        let z = orthonormal_frame(&xi).columns;
        assert!((z[(0, 0)] - C64::from_polar((theta / 2.0).cos(), -phi)).norm() < 1e-14);
        assert!((z[(1, 0)] - c((theta / 2.0).sin(), 0.)).norm() < 1e-14);
    }

    #[test]
    fn determinant_formula_equals_gram_schmidt() {
        let z = CMatrix::from_row_slice(
            3,
            3,
            &[
                c(0.3, -0.1),
                c(1.2, 0.4),
                c(0.1, 0.0),
                c(-0.5, 0.9),
                c(0.0, 0.2),
                c(0.4, -0.6),
                c(0.7, 0.7),
                c(-1.1, 0.0),
                c(0.2, 0.3),
            ],
        );
        let xi = Xi { z, chart: Chart::new(0, 6, vec![1, 3, 5]), energy: 0.0, det: c(1., 0.) };
        let frame = orthonormal_frame(&xi).columns;
        let gs = gram_schmidt(&xi.homogeneous());
        assert!(unitarity_residual(&frame) < 1e-12);
        for a in 0..3 {
            // same direction and positive relative scaling
            let overlap = frame.column(a).dotc(&gs.column(a));
            assert!((overlap - c(1.0, 0.0)).norm() < 1e-12, "column {a}: {overlap}");
        }
    }

    #[test]
    fn frames_match_reference_projector_and_are_chart_independent() {
        let model = four_level();
        let lambda = [0.35, 1.7];
        let h = model.evaluate(&lambda).unwrap();
        let spectrum = eigen_decompose(&h, None);
        for (level, data) in spectrum.data.levels.iter().enumerate() {
            let mut frames = Vec::new();
            for kept in combinations(4, 2) {
                let chart = Chart::new(level, 4, kept);
                if chart_determinant(&h, data.energy, &chart).norm() < 1e-3 {
                    continue;
                }
                let frame = frame_at(
                    &model,
                    &lambda,
                    &LevelTarget { index: level, energy: data.energy, degeneracy: 2 },
                    &chart,
                )
                .unwrap();
                assert!(unitarity_residual(&frame.columns) < 1e-12);
                assert!(max_abs(&((&h - identity(4).scale(data.energy)) * &frame.columns)) < 1e-10);
                assert!(max_abs_diff(&crate::linalg::projector(&frame.columns), &spectrum.projector(level)) < 1e-8);
                frames.push(frame.columns);
            }
            assert!(frames.len() >= 2);
            for other in &frames[1..] {
                assert!(unitarity_residual(&(frames[0].adjoint() * other)) < 1e-10);
            }
        }
    }

    #[test]
    fn equator_needs_one_chart() {
        let spec = LoopSpec::new(LoopShape::SphereCircle { theta: FRAC_PI_2, phi0: 0.0 }, 64, 1.0);
        let path = frame_path(&spin_half(), &spec.sample().unwrap(), 1, &FrameOptions::default()).unwrap();
        assert_eq!(path.segment_count(), 1);
        assert!(path.points.iter().all(|p| p.chart.kept == vec![0]));
        for p in &path.points {
            assert!((p.det - c(-0.5, 0.)).norm() < 1e-14);
        }
    }

    #[test]
    fn passing_the_pole_switches_chart() {
        // θ(t) = 1.6 + 1.6 cos(2πt) starts near π and reaches θ = 0 exactly at t = 1/2.
        let spec = LoopSpec::new(
            LoopShape::Fourier {
                components: vec![
                    crate::model::FourierSeries { mean: 1.6, cos: vec![1.6], sin: vec![] },
                    crate::model::FourierSeries { mean: 0.3, cos: vec![], sin: vec![0.4] },
                ],
            },
            64,
            1.0,
        );
        let path = frame_path(&spin_half(), &spec.sample().unwrap(), 1, &FrameOptions::default()).unwrap();
        assert!(!path.boundaries.is_empty());
        for b in &path.boundaries {
            assert!(unitarity_residual(&b.overlap) < 1e-10);
        }
    }

    #[test]
    fn four_level_loop_is_one_segment() {
        let samples = four_level_loop(400, 1.0).sample().unwrap();
        for level in 0..2 {
            let path = frame_path(&four_level(), &samples, level, &FrameOptions::default()).unwrap();
            assert_eq!(path.segment_count(), 1);
            let csv = path.determinant_csv();
            assert_eq!(csv.lines().count(), 402);
            assert!(csv.starts_with("t,det_re,det_im,chart_id\n"));
        }
    }

    #[test]
    fn unknown_level() {
        let samples = four_level_loop(10, 1.0).sample().unwrap();
        assert!(matches!(
            frame_path(&four_level(), &samples, 2, &FrameOptions::default()),
            Err(Error::NoSuchLevel { level: 2, count: 2 })
        ));
        let _ = PI;
    }
}
