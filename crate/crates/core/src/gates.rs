//! Root gates of su(n), their products and synthesis, and the bosonic realization.
//!
//! Indices are zero based in the API and one based in JSON. A gate sequence stands for
//!
//! ```text
//! U = exp(i Σ_k y_k H_k) · U_{α₁} U_{α₂} ⋯,   H_k = e_kk − e_{k+1,k+1},
//! U_α = exp(ζ e_ij − ζ* e_ji).
//! ```
//!
//! The Fock realization maps `e_ij ↦ a_i†a_j`, which is number conserving (a beam-splitter
//! type operator), on the sector of `n` modes holding `N` excitations.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{determinant, exp_i_hermitian, identity, max_abs_diff, unitarity_residual, CMatrix, C64, I};
use crate::report::to_json_string;

/// Largest Fock sector handled with dense matrices.
pub const SECTOR_CAP: usize = 10_000;

/// Tolerance on unitarity and on `det U = 1` for synthesis targets.
pub const SU_TOL: f64 = 1e-10;

/// Root system of `A_{n−1}`: positive roots `(i, j)` with `i < j`, in lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RootDatum {
    pub n: usize,
    pub positive_roots: Vec<(usize, usize)>,
}

impl RootDatum {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput(format!("su(n) needs n ≥ 2, got {n}")));
        }
        let positive_roots = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        Ok(RootDatum { n, positive_roots })
    }

    pub fn rank(&self) -> usize {
        self.n - 1
    }

    /// Elementary matrix `e_ij`.
    pub fn elementary(&self, i: usize, j: usize) -> CMatrix {
        let mut e = CMatrix::zeros(self.n, self.n);
        e[(i, j)] = C64::new(1.0, 0.0);
        e
    }

    /// `H_k = e_kk − e_{k+1,k+1}`.
    pub fn cartan(&self, k: usize) -> CMatrix {
        self.elementary(k, k) - self.elementary(k + 1, k + 1)
    }

    /// `α(H_k)` for the root `e_ij`: `[H_k, e_ij] = α(H_k) e_ij`.
    pub fn root_value(&self, k: usize, (i, j): (usize, usize)) -> i64 {
        let weight = |m: usize| i64::from(m == k) - i64::from(m == k + 1);
        weight(i) - weight(j)
    }
}

/// `n(n−1)/2`, checked against the enumerated roots.
pub fn positive_root_count(n: usize) -> Result<usize> {
    let count = n * (n - 1) / 2;
    let datum = RootDatum::new(n)?;
    assert_eq!(count, datum.positive_roots.len());
    Ok(count)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RootGate {
    pub i: usize,
    pub j: usize,
    pub zeta: C64,
}

impl RootGate {
    pub fn new(i: usize, j: usize, zeta: C64) -> Self {
        RootGate { i, j, zeta }
    }

    pub fn inverse(&self) -> Self {
        RootGate { zeta: -self.zeta, ..*self }
    }

    pub fn matrix(&self, n: usize) -> Result<CMatrix> {
        root_gate(n, self.i, self.j, self.zeta)
    }
}

fn check_pair(n: usize, i: usize, j: usize) -> Result<()> {
    if i >= j || j >= n {
        return Err(Error::IndexOutOfRange(format!("root ({}, {}) for n = {n}; need 1 ≤ i < j ≤ n", i + 1, j + 1)));
    }
    Ok(())
}

/// `exp(ζ e_ij − ζ* e_ji)`: with `ζ = r e^{iφ}` the `(i, j)` block is
/// `[[cos r, e^{iφ} sin r], [−e^{−iφ} sin r, cos r]]`.
pub fn root_gate(n: usize, i: usize, j: usize, zeta: C64) -> Result<CMatrix> {
    check_pair(n, i, j)?;
    let (r, phi) = zeta.to_polar();
    let mut u = identity(n);
    u[(i, i)] = C64::new(r.cos(), 0.0);
    u[(j, j)] = C64::new(r.cos(), 0.0);
    u[(i, j)] = C64::from_polar(r.sin(), phi);
    u[(j, i)] = -C64::from_polar(r.sin(), -phi);
    Ok(u)
}

/// `exp(i Σ_k y_k H_k)`: diagonal with phases `y_m − y_{m−1}` (`y_0 = y_n = 0`).
pub fn cartan_factor(n: usize, y: &[f64]) -> Result<CMatrix> {
    if y.len() + 1 != n {
        return Err(Error::DimensionMismatch { what: "Cartan parameters".into(), expected: n - 1, found: y.len() });
    }
    let at = |m: usize| if m < y.len() { y[m] } else { 0.0 };
    let before = |m: usize| if m == 0 { 0.0 } else { y[m - 1] };
    Ok(CMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |m, _| C64::from_polar(1.0, at(m) - before(m)))))
}

/// `exp(i Σ_k y_k H_k) · ∏ U_α` with the product in listed order.
pub fn generic_element(n: usize, y: &[f64], gates: &[RootGate]) -> Result<CMatrix> {
    let mut u = cartan_factor(n, y)?;
    for gate in gates {
        u *= gate.matrix(n)?;
    }
    Ok(u)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateSequence {
    pub n: usize,
    /// `y_1 … y_{n−1}`.
    pub cartan: Vec<f64>,
    pub gates: Vec<RootGate>,
}

#[derive(Serialize, Deserialize)]
struct GateJson {
    i: usize,
    j: usize,
    zeta: [f64; 2],
}

#[derive(Serialize, Deserialize)]
struct SequenceJson {
    n: usize,
    cartan: Vec<f64>,
    gates: Vec<GateJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    residual: Option<f64>,
}

impl GateSequence {
    pub fn reconstruct(&self) -> Result<CMatrix> {
        generic_element(self.n, &self.cartan, &self.gates)
    }

    /// `max|∏ − U_target|`.
    pub fn residual(&self, target: &CMatrix) -> Result<f64> {
        Ok(max_abs_diff(&self.reconstruct()?, target))
    }

    pub fn to_json(&self, residual: Option<f64>) -> String {
        to_json_string(&SequenceJson {
            n: self.n,
            cartan: self.cartan.clone(),
            gates: self
                .gates
                .iter()
                .map(|g| GateJson { i: g.i + 1, j: g.j + 1, zeta: [g.zeta.re, g.zeta.im] })
                .collect(),
            residual,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: SequenceJson = serde_json::from_str(text).map_err(Error::from_json)?;
        if raw.cartan.len() + 1 != raw.n {
            return Err(Error::DimensionMismatch {
                what: "Cartan parameters".into(),
                expected: raw.n.saturating_sub(1),
                found: raw.cartan.len(),
            });
        }
        let gates = raw
            .gates
            .iter()
            .map(|g| {
                if g.i == 0 || g.j == 0 {
                    return Err(Error::IndexOutOfRange("gate indices are one based".into()));
                }
                check_pair(raw.n, g.i - 1, g.j - 1)?;
                Ok(RootGate::new(g.i - 1, g.j - 1, C64::new(g.zeta[0], g.zeta[1])))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GateSequence { n: raw.n, cartan: raw.cartan, gates })
    }
}

/// Divides a unitary by an `n`-th root of its determinant.
pub fn normalize_to_su(u: &CMatrix) -> Result<CMatrix> {
    let residual = unitarity_residual(u);
    if !(residual < SU_TOL) {
        return Err(Error::NotUnitary { residual });
    }
    let det = determinant(u);
    Ok(u / C64::from_polar(1.0, det.arg() / u.nrows() as f64))
}

/// Writes `U = exp(i Σ y_k H_k) · U_{α₁} ⋯ U_{α_k}` by Givens elimination of `V = U†`.
///
/// Root gates `G` are applied to `V` from the left, column by column, each one zeroing
/// `V[j, c]` against the pivot `V[c, c]` for `j = n−1, …, c+1`. The gate that zeroes
/// `(a, b) = (V[c, c], V[j, c])` has `r = atan2(|b|, |a|) ∈ [0, π/2]` and `φ = arg a − arg b`.
/// What remains is a diagonal `D†` with unit determinant, so `U = D · G_k ⋯ G_1`.
pub fn decompose_su_n(target: &CMatrix, tol: f64) -> Result<GateSequence> {
    let n = target.nrows();
    if n != target.ncols() || n < 2 {
        return Err(Error::InvalidInput(format!("target must be square with n ≥ 2, got {}×{}", n, target.ncols())));
    }
    let residual = unitarity_residual(target);
    if !(residual < SU_TOL) {
        return Err(Error::NotUnitary { residual });
    }
    let det = determinant(target);
    if (det - C64::new(1.0, 0.0)).norm() > SU_TOL {
        return Err(Error::DeterminantNotOne { re: det.re, im: det.im });
    }
    let mut v = target.adjoint();
    let mut applied = Vec::new();
    for c in 0..n - 1 {
        for j in (c + 1..n).rev() {
            let (a, b) = (v[(c, c)], v[(j, c)]);
            if b.norm() <= f64::EPSILON * (a.norm() + b.norm()) {
                continue;
            }
            let r = b.norm().atan2(a.norm());
            let phi = if a.norm() == 0.0 { -b.arg() } else { a.arg() - b.arg() };
            let gate = RootGate::new(c, j, C64::from_polar(r, phi));
            v = gate.matrix(n)? * v;
            applied.push(gate);
        }
    }
    let phases: Vec<f64> = (0..n).map(|m| v[(m, m)].conj().arg()).collect();
    let cartan = phases[..n - 1]
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    applied.reverse();
    let sequence = GateSequence { n, cartan, gates: applied };
    let error = sequence.residual(target)?;
    if !(error < tol) {
        return Err(Error::InvalidInput(format!("reconstruction error {error:.3e} exceeds {tol:.3e}")));
    }
    Ok(sequence)
}

/// Occupation basis of `n` modes with `N` excitations, in descending lexicographic order.
#[derive(Clone, Debug)]
pub struct FockSector {
    pub modes: usize,
    pub excitations: usize,
    pub basis: Vec<Vec<usize>>,
    index: HashMap<Vec<usize>, usize>,
}

/// `C(N + n − 1, n − 1)`, saturating.
pub fn sector_dimension(modes: usize, excitations: usize) -> usize {
    let k = modes.saturating_sub(1);
    let mut value: u128 = 1;
    for m in 1..=k as u128 {
        value = value * (excitations as u128 + m) / m;
        if value > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    value as usize
}

impl FockSector {
    pub fn new(modes: usize, excitations: usize) -> Result<Self> {
        if modes < 2 || excitations < 1 {
            return Err(Error::InvalidInput(format!("need n ≥ 2 modes and N ≥ 1, got n = {modes}, N = {excitations}")));
        }
        let dim = sector_dimension(modes, excitations);
        if dim > SECTOR_CAP {
            return Err(Error::SectorTooLarge { dim, cap: SECTOR_CAP });
        }
        let mut basis = Vec::with_capacity(dim);
        let mut current = vec![0; modes];
        fn fill(mode: usize, left: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if mode + 1 == current.len() {
                current[mode] = left;
                out.push(current.clone());
                return;
            }
            for k in (0..=left).rev() {
                current[mode] = k;
                fill(mode + 1, left - k, current, out);
            }
        }
        fill(0, excitations, &mut current, &mut basis);
        let index = basis.iter().enumerate().map(|(k, s)| (s.clone(), k)).collect();
        Ok(FockSector { modes, excitations, basis, index })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn index_of(&self, occupation: &[usize]) -> Option<usize> {
        self.index.get(occupation).copied()
    }

    /// `a_i†a_j` on the sector.
    pub fn hop(&self, i: usize, j: usize) -> Result<CMatrix> {
        if i >= self.modes || j >= self.modes {
            return Err(Error::IndexOutOfRange(format!("mode ({}, {}) for {} modes", i + 1, j + 1, self.modes)));
        }
        let mut m = CMatrix::zeros(self.dim(), self.dim());
        for (col, state) in self.basis.iter().enumerate() {
            if i == j {
                m[(col, col)] = C64::new(state[i] as f64, 0.0);
            } else if state[j] > 0 {
                let mut next = state.clone();
                next[j] -= 1;
                next[i] += 1;
                let row = self.index[&next];
                m[(row, col)] = C64::new((((state[i] + 1) * state[j]) as f64).sqrt(), 0.0);
            }
        }
        Ok(m)
    }

    /// `ρ(X) = Σ_ij X_ij a_i†a_j` for an `n × n` matrix `X`.
    pub fn represent(&self, x: &CMatrix) -> Result<CMatrix> {
        if x.nrows() != self.modes || x.ncols() != self.modes {
            return Err(Error::DimensionMismatch {
                what: "algebra element".into(),
                expected: self.modes,
                found: x.nrows(),
            });
        }
        let mut out = CMatrix::zeros(self.dim(), self.dim());
        for i in 0..self.modes {
            for j in 0..self.modes {
                if x[(i, j)] != C64::new(0.0, 0.0) {
                    out += self.hop(i, j)? * x[(i, j)];
                }
            }
        }
        Ok(out)
    }

    /// Image of `U_α = exp(ζ e_ij − ζ* e_ji)`: `exp(ζ a_i†a_j − ζ* a_j†a_i)`.
    pub fn represent_gate(&self, gate: &RootGate) -> Result<CMatrix> {
        let generator = self.hop(gate.i, gate.j)? * gate.zeta - self.hop(gate.j, gate.i)? * gate.zeta.conj();
        Ok(exp_i_hermitian(&(generator * -I), 1.0))
    }

    /// Image of `exp(i Σ y_k H_k)`: diagonal with phases `Σ_k y_k (n_k − n_{k+1})`.
    pub fn cartan_exponential(&self, y: &[f64]) -> Result<CMatrix> {
        if y.len() + 1 != self.modes {
            return Err(Error::DimensionMismatch {
                what: "Cartan parameters".into(),
                expected: self.modes - 1,
                found: y.len(),
            });
        }
        Ok(CMatrix::from_diagonal(&nalgebra::DVector::from_fn(self.dim(), |s, _| {
            let state = &self.basis[s];
            let phase: f64 = y.iter().enumerate().map(|(k, yk)| yk * (state[k] as f64 - state[k + 1] as f64)).sum();
            C64::from_polar(1.0, phase)
        })))
    }

    /// Image of a whole gate sequence.
    pub fn represent_sequence(&self, sequence: &GateSequence) -> Result<CMatrix> {
        let mut u = self.cartan_exponential(&sequence.cartan)?;
        for gate in &sequence.gates {
            u *= self.represent_gate(gate)?;
        }
        Ok(u)
    }
}
