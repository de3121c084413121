//! Parametrized Hamiltonian families, loops in parameter space and spectral analysis.
//!
//! A model file is JSON:
//!
//! ```json
//! {"n": 2, "form": "conjugated",
//!  "h0": [[[0.5,0],[0,0]], [[0,0],[-0.5,0]]],
//!  "generators": [[[[0,0],[0,-0.5]], [[0,0.5],[0,0]]], [[[0.5,0],[0,0]], [[0,0],[-0.5,0]]]],
//!  "num_params": 2}
//! ```
//!
//! Complex entries are `[re, im]` pairs (bare reals are accepted), matrices are row-major.
//!
//! - `conjugated`: `H(λ) = V(λ) h0 V(λ)†` with `V(λ) = exp(−iλ_N G_N) ⋯ exp(−iλ_1 G_1)`.
//!   The first listed generator acts first on a state, i.e. it is the rightmost factor.
//!   One parameter per generator.
//! - `linear`: `H(λ) = h0 + Σ_k f_k(λ) G_k` where `h0` is optional and every `f_k` is drawn
//!   from a closed vocabulary, see [`Coefficient`].

mod loops;
mod spectrum;

pub use loops::{
    adiabaticity_ratio, four_level_loop, sample_loop, AdiabaticityReport, FourierSeries, LoopSamples, LoopShape,
    LoopSpec, CLOSURE_TOL, DEFAULT_SAMPLES,
};
pub use spectrum::{
    default_degeneracy_tol, eigen_decompose, isospectrality_check, IsospectralityReport, Level, SpectralData, Spectrum,
};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{exp_i_from_eigen, hermitian_eigen, hermitian_residual, identity, CMatrix, C64, I};
use crate::report::MatrixJson;

/// Hermiticity tolerance for model matrices.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    Conjugated,
    Linear,
}

/// Coefficient functions `f_k(λ)` for the linear form.
///
/// JSON: `{"constant": 0.5}`, `{"component": 0}`, `{"sin": 1}`, `{"cos": 1}`,
/// `{"product": [{"constant": 2}, {"sin": 0}]}`. Indices are zero-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coefficient {
    Constant(f64),
    Component(usize),
    Sin(usize),
    Cos(usize),
    Product(Vec<Coefficient>),
}

impl Coefficient {
    fn max_index(&self) -> Option<usize> {
        match self {
            Coefficient::Constant(_) => None,
            Coefficient::Component(k) | Coefficient::Sin(k) | Coefficient::Cos(k) => Some(*k),
            Coefficient::Product(fs) => fs.iter().filter_map(Coefficient::max_index).max(),
        }
    }

    pub fn value(&self, lambda: &[f64]) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Component(k) => lambda[*k],
            Coefficient::Sin(k) => lambda[*k].sin(),
            Coefficient::Cos(k) => lambda[*k].cos(),
            Coefficient::Product(fs) => fs.iter().map(|f| f.value(lambda)).product(),
        }
    }

    /// Gradient with respect to all parameters.
    pub fn gradient(&self, lambda: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; lambda.len()];
        match self {
            Coefficient::Constant(_) => {}
            Coefficient::Component(k) => grad[*k] = 1.0,
            Coefficient::Sin(k) => grad[*k] = lambda[*k].cos(),
            Coefficient::Cos(k) => grad[*k] = -lambda[*k].sin(),
            Coefficient::Product(fs) => {
                let values: Vec<f64> = fs.iter().map(|f| f.value(lambda)).collect();
                for (i, f) in fs.iter().enumerate() {
                    let others: f64 = values.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v).product();
                    for (g, d) in grad.iter_mut().zip(f.gradient(lambda)) {
                        *g += others * d;
                    }
                }
            }
        }
        grad
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    n: usize,
    form: Form,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    h0: Option<MatrixJson>,
    #[serde(default)]
    generators: Vec<MatrixJson>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    coefficients: Vec<Coefficient>,
    num_params: usize,
}

/// A validated Hamiltonian family. Immutable after construction.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    name: Option<String>,
    n: usize,
    form: Form,
    h0: Option<CMatrix>,
    generators: Vec<CMatrix>,
    coefficients: Vec<Coefficient>,
    num_params: usize,
    generator_eigen: Vec<(Vec<f64>, CMatrix)>,
}

fn check_hermitian(m: &CMatrix, what: String) -> Result<()> {
    let residual = hermitian_residual(m);
    if residual > HERMITIAN_TOL {
        return Err(Error::NotHermitian { what, residual });
    }
    Ok(())
}

impl ModelSpec {
    /// `H(λ) = V(λ) h0 V(λ)†`, one parameter per generator.
    pub fn conjugated(h0: CMatrix, generators: Vec<CMatrix>) -> Result<Self> {
        let num_params = generators.len();
        Self::build(None, h0.nrows(), Form::Conjugated, Some(h0), generators, Vec::new(), num_params)
    }

    /// `H(λ) = h0 + Σ f_k(λ) G_k`.
    pub fn linear(
        n: usize,
        h0: Option<CMatrix>,
        generators: Vec<CMatrix>,
        coefficients: Vec<Coefficient>,
        num_params: usize,
    ) -> Result<Self> {
        Self::build(None, n, Form::Linear, h0, generators, coefficients, num_params)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    fn build(
        name: Option<String>,
        n: usize,
        form: Form,
        h0: Option<CMatrix>,
        generators: Vec<CMatrix>,
        coefficients: Vec<Coefficient>,
        num_params: usize,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("model dimension n must be positive".into()));
        }
        let square = |m: &CMatrix, what: String| -> Result<()> {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch { what, expected: n, found: m.nrows().max(m.ncols()) });
            }
            Ok(())
        };
        if let Some(h0) = &h0 {
            square(h0, "h0".into())?;
            check_hermitian(h0, "h0".into())?;
        }
        for (k, g) in generators.iter().enumerate() {
            square(g, format!("generator {k}"))?;
            check_hermitian(g, format!("generator {k}"))?;
        }
        match form {
            Form::Conjugated => {
                if h0.is_none() {
                    return Err(Error::InvalidInput("conjugated form requires h0".into()));
                }
                if num_params != generators.len() {
                    return Err(Error::DimensionMismatch {
                        what: "num_params (one per generator)".into(),
                        expected: generators.len(),
                        found: num_params,
                    });
                }
            }
            Form::Linear => {
                if coefficients.len() != generators.len() {
                    return Err(Error::DimensionMismatch {
                        what: "coefficients (one per generator)".into(),
                        expected: generators.len(),
                        found: coefficients.len(),
                    });
                }
                if let Some(k) = coefficients.iter().filter_map(Coefficient::max_index).max() {
                    if k >= num_params {
                        return Err(Error::IndexOutOfRange(format!(
                            "coefficient refers to parameter {k} but num_params = {num_params}"
                        )));
                    }
                }
            }
        }
        let generator_eigen = match form {
            Form::Conjugated => generators.iter().map(hermitian_eigen).collect(),
            Form::Linear => Vec::new(),
        };
        Ok(ModelSpec { name, n, form, h0, generators, coefficients, num_params, generator_eigen })
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn form(&self) -> Form {
        self.form
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn h0(&self) -> Option<&CMatrix> {
        self.h0.as_ref()
    }

    pub fn generators(&self) -> &[CMatrix] {
        &self.generators
    }

    fn check_params(&self, lambda: &[f64]) -> Result<()> {
        if lambda.len() != self.num_params {
            return Err(Error::ParameterCount { expected: self.num_params, found: lambda.len() });
        }
        Ok(())
    }

    /// `exp(−iλ_k G_k)` for every generator, in listed order.
    fn factors(&self, lambda: &[f64]) -> Vec<CMatrix> {
        self.generator_eigen
            .iter()
            .zip(lambda)
            .map(|((values, vectors), &l)| exp_i_from_eigen(values, vectors, -l))
            .collect()
    }

    /// `V(λ)` for the conjugated form.
    pub fn conjugator(&self, lambda: &[f64]) -> Result<CMatrix> {
        self.check_params(lambda)?;
        if self.form != Form::Conjugated {
            return Err(Error::InvalidInput("only conjugated models have a conjugator".into()));
        }
        Ok(self.factors(lambda).iter().fold(identity(self.n), |v, f| f * v))
    }

    /// `H(λ)`.
    pub fn evaluate(&self, lambda: &[f64]) -> Result<CMatrix> {
        self.check_params(lambda)?;
        let h = match self.form {
            Form::Conjugated => {
                let v = self.conjugator(lambda)?;
                &v * self.h0.as_ref().expect("validated") * v.adjoint()
            }
            Form::Linear => {
                let mut h = self.h0.clone().unwrap_or_else(|| CMatrix::zeros(self.n, self.n));
                for (g, f) in self.generators.iter().zip(&self.coefficients) {
                    h += g.scale(f.value(lambda));
                }
                h
            }
        };
        Ok(crate::linalg::hermitize(&h))
    }

    /// `H(λ)` together with `∂H/∂λ_A` for every parameter, evaluated analytically.
    pub fn evaluate_with_derivatives(&self, lambda: &[f64]) -> Result<(CMatrix, Vec<CMatrix>)> {
        self.check_params(lambda)?;
        match self.form {
            Form::Conjugated => {
                let h0 = self.h0.as_ref().expect("validated");
                let factors = self.factors(lambda);
                let count = factors.len();
                // prefix[k] = F_k ⋯ F_1 (prefix[0] = 1), suffix[k] = F_N ⋯ F_{k+1}
                let mut prefix = Vec::with_capacity(count + 1);
                prefix.push(identity(self.n));
                for f in &factors {
                    let next = f * prefix.last().expect("nonempty");
                    prefix.push(next);
                }
                let mut suffix = vec![identity(self.n); count + 1];
                for k in (0..count).rev() {
                    suffix[k] = &suffix[k + 1] * &factors[k];
                }
                let v = &prefix[count];
                let h0_vdag = h0 * v.adjoint();
                let h = crate::linalg::hermitize(&(v * &h0_vdag));
                let derivatives = (0..count)
                    .map(|k| {
                        // ∂_k V = F_N ⋯ F_{k+1} (−i G_k) F_k ⋯ F_1
                        let dv = (&suffix[k + 1] * &self.generators[k] * &prefix[k + 1]) * (-I);
                        let x = dv * &h0_vdag;
                        &x + x.adjoint()
                    })
                    .collect();
                Ok((h, derivatives))
            }
            Form::Linear => {
                let h = self.evaluate(lambda)?;
                let mut derivatives = vec![CMatrix::zeros(self.n, self.n); self.num_params];
                for (g, f) in self.generators.iter().zip(&self.coefficients) {
                    for (d, df) in derivatives.iter_mut().zip(f.gradient(lambda)) {
                        if df != 0.0 {
                            *d += g.scale(df);
                        }
                    }
                }
                Ok((h, derivatives))
            }
        }
    }

    /// Spectrum at `λ = 0`, the reference for isospectrality checks.
    pub fn reference_spectrum(&self, degeneracy_tol: Option<f64>) -> Result<Spectrum> {
        let h = self.evaluate(&vec![0.0; self.num_params])?;
        Ok(eigen_decompose(&h, degeneracy_tol))
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            name: self.name.clone(),
            n: self.n,
            form: self.form,
            h0: self.h0.as_ref().map(MatrixJson::from_matrix),
            generators: self.generators.iter().map(MatrixJson::from_matrix).collect(),
            coefficients: self.coefficients.clone(),
            num_params: self.num_params,
        };
        crate::report::to_json_string(&file)
    }
}

/// Parses and validates a model file.
pub fn parse_model(text: &str) -> Result<ModelSpec> {
    let file: ModelFile = serde_json::from_str(text).map_err(Error::from_json)?;
    let n = file.n;
    let h0 = file.h0.as_ref().map(|m| m.to_matrix("h0", Some(n))).transpose()?;
    let generators = file
        .generators
        .iter()
        .enumerate()
        .map(|(k, m)| m.to_matrix(&format!("generator {k}"), Some(n)))
        .collect::<Result<Vec<_>>>()?;
    ModelSpec::build(file.name, n, file.form, h0, generators, file.coefficients, file.num_params)
}

/// `H(λ)` for a parameter vector.
pub fn evaluate_hamiltonian(model: &ModelSpec, lambda: &DVector<f64>) -> Result<CMatrix> {
    model.evaluate(lambda.as_slice())
}

/// Pauli matrices `[σ_x, σ_y, σ_z]`.
pub fn pauli() -> [CMatrix; 3] {
    let z = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    [
        CMatrix::from_row_slice(2, 2, &[z, one, one, z]),
        CMatrix::from_row_slice(2, 2, &[z, -I, I, z]),
        CMatrix::from_row_slice(2, 2, &[one, z, z, -one]),
    ]
}

/// Spin-½ in a unit field: `h0 = σ_z/2`, generators `σ_y/2, σ_z/2`, `λ = (θ, φ)`, so that
/// `H(θ, φ) = ½ [[cos θ, sin θ e^{−iφ}], [sin θ e^{iφ}, −cos θ]]`.
pub fn spin_half() -> ModelSpec {
    let [_, sy, sz] = pauli();
    ModelSpec::conjugated(sz.scale(0.5), vec![sy.scale(0.5), sz.scale(0.5)])
        .expect("valid model")
        .with_name("spin_half")
}

/// Four levels with spectrum `(−1, −1, +1, +1)`:
/// `h0 = σ_z⊗1`, generators `σ_x⊗1/2` and `σ_y⊗σ_x/2`.
pub fn four_level() -> ModelSpec {
    let [sx, sy, sz] = pauli();
    let one = identity(2);
    let h0 = sz.kronecker(&one);
    let g1 = sx.kronecker(&one).scale(0.5);
    let g2 = sy.kronecker(&sx).scale(0.5);
    ModelSpec::conjugated(h0, vec![g1, g2]).expect("valid model").with_name("four_level")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, max_abs_diff};

    const SPIN_HALF_JSON: &str = include_str!("../../data/spin_half.json");

    fn spin_h(theta: f64, phi: f64) -> CMatrix {
        CMatrix::from_row_slice(
            2,
            2,
            &[
                c(0.5 * theta.cos(), 0.),
                C64::from_polar(0.5 * theta.sin(), -phi),
                C64::from_polar(0.5 * theta.sin(), phi),
                c(-0.5 * theta.cos(), 0.),
            ],
        )
    }

    #[test]
    fn parse_spin_half_file() {
        let m = parse_model(SPIN_HALF_JSON).unwrap();
        assert_eq!(m.dim(), 2);
        assert_eq!(m.num_params(), 2);
        assert_eq!(m.form(), Form::Conjugated);
        let h = m.evaluate(&[0.0, 0.0]).unwrap();
        assert!(max_abs_diff(&h, m.h0().unwrap()) < 1e-15);
    }

    #[test]
    fn non_hermitian_h0_is_rejected() {
        let text = r#"{"n":2,"form":"conjugated","h0":[[1,[0,1]],[[0,1],-1]],"generators":[],"num_params":0}"#;
        assert!(matches!(parse_model(text), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn syntax_errors_report_position() {
        let err = parse_model("{\"n\": 2,\n \"form\": }").unwrap_err();
        match err {
            Error::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let text = r#"{"n":3,"form":"conjugated","h0":[[1,0],[0,1]],"generators":[],"num_params":0}"#;
        assert!(matches!(parse_model(text), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn four_level_reports_double_degeneracy() {
        let text = r#"{"n":4,"form":"conjugated","h0":[[1,0,0,0],[0,1,0,0],[0,0,-1,0],[0,0,0,-1]],"generators":[],"num_params":0}"#;
        let m = parse_model(text).unwrap();
        let spectrum = m.reference_spectrum(None).unwrap();
        let degeneracies: Vec<usize> = spectrum.data.levels.iter().map(|l| l.degeneracy).collect();
        assert_eq!(degeneracies, vec![2, 2]);
    }

    #[test]
    fn spin_half_closed_form() {
        let m = spin_half();
        for &(theta, phi) in &[(0.3, 1.1), (2.0, -0.4), (std::f64::consts::FRAC_PI_2, 3.0)] {
            let h = m.evaluate(&[theta, phi]).unwrap();
            assert!(max_abs_diff(&h, &spin_h(theta, phi)) < 1e-14);
        }
    }

    #[test]
    fn linear_form_evaluates() {
        let [sx, _, sz] = pauli();
        let m = ModelSpec::linear(
            2,
            None,
            vec![sx, sz.clone()],
            vec![Coefficient::Component(0), Coefficient::Component(1)],
            2,
        )
        .unwrap();
        assert!(max_abs_diff(&m.evaluate(&[0.0, 1.0]).unwrap(), &sz) < 1e-15);
        assert!(matches!(m.evaluate(&[1.0]), Err(Error::ParameterCount { expected: 2, found: 1 })));
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let [sx, sy, _] = pauli();
        let linear = ModelSpec::linear(
            2,
            None,
            vec![sx, sy],
            vec![
                Coefficient::Product(vec![Coefficient::Sin(0), Coefficient::Cos(1), Coefficient::Constant(0.7)]),
                Coefficient::Component(1),
            ],
            2,
        )
        .unwrap();
        for model in [spin_half(), four_level(), linear] {
            let lambda = [0.37, -1.21];
            let (_, derivs) = model.evaluate_with_derivatives(&lambda).unwrap();
            let h = 1e-5;
            for (a, d) in derivs.iter().enumerate() {
                let mut plus = lambda;
                let mut minus = lambda;
                plus[a] += h;
                minus[a] -= h;
                let fd = (model.evaluate(&plus).unwrap() - model.evaluate(&minus).unwrap()).unscale(2.0 * h);
                assert!(max_abs_diff(&fd, d) < 1e-9, "param {a}");
            }
        }
    }

    #[test]
    fn round_trip_through_json() {
        let m = four_level();
        let back = parse_model(&m.to_json()).unwrap();
        let lambda = [0.4, 0.9];
        assert!(max_abs_diff(&m.evaluate(&lambda).unwrap(), &back.evaluate(&lambda).unwrap()) < 1e-11);
    }
}
