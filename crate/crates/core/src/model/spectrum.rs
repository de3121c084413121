use serde::Serialize;

use crate::error::Result;
use crate::linalg::{hermitian_eigen, CMatrix};

use super::{LoopSamples, ModelSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Level {
    pub energy: f64,
    pub degeneracy: usize,
}

/// Levels in strictly increasing energy with their degeneracies.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralData {
    pub levels: Vec<Level>,
    /// Smallest gap between distinct levels, `+∞` for a single level.
    pub gap: f64,
}

impl SpectralData {
    pub fn dim(&self) -> usize {
        self.levels.iter().map(|l| l.degeneracy).sum()
    }

    pub fn same_pattern(&self, other: &SpectralData) -> bool {
        self.levels.len() == other.levels.len()
            && self.levels.iter().zip(&other.levels).all(|(a, b)| a.degeneracy == b.degeneracy)
    }

    /// Largest energy deviation between two spectra with the same pattern.
    pub fn max_deviation(&self, other: &SpectralData) -> f64 {
        self.levels.iter().zip(&other.levels).map(|(a, b)| (a.energy - b.energy).abs()).fold(0.0, f64::max)
    }
}

/// Spectral data with the reference eigensolver's orthonormal block per level.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub data: SpectralData,
    pub blocks: Vec<CMatrix>,
}

impl Spectrum {
    pub fn projector(&self, level: usize) -> CMatrix {
        crate::linalg::projector(&self.blocks[level])
    }
}

/// `1e-8 · max|E|`, or `1e-8` for the zero matrix.
pub fn default_degeneracy_tol(eigenvalues: &[f64]) -> f64 {
    let scale = eigenvalues.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
    1e-8 * if scale > 0.0 { scale } else { 1.0 }
}

/// Diagonalizes a Hermitian matrix and clusters eigenvalues into levels: consecutive
/// eigenvalues closer than `degeneracy_tol` share a level.
pub fn eigen_decompose(h: &CMatrix, degeneracy_tol: Option<f64>) -> Spectrum {
    let (values, vectors) = hermitian_eigen(h);
    let tol = degeneracy_tol.unwrap_or_else(|| default_degeneracy_tol(&values));
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (k, &v) in values.iter().enumerate() {
        match clusters.last_mut() {
            Some(cluster) if v - values[*cluster.last().expect("nonempty")] < tol => cluster.push(k),
            _ => clusters.push(vec![k]),
        }
    }
    let levels: Vec<Level> = clusters
        .iter()
        .map(|cluster| Level {
            energy: cluster.iter().map(|&k| values[k]).sum::<f64>() / cluster.len() as f64,
            degeneracy: cluster.len(),
        })
        .collect();
    let gap = levels.windows(2).map(|w| w[1].energy - w[0].energy).fold(f64::INFINITY, f64::min);
    let blocks = clusters.iter().map(|cluster| vectors.select_columns(cluster.iter())).collect();
    Spectrum { data: SpectralData { levels, gap }, blocks }
}

#[derive(Clone, Debug, Serialize)]
pub struct IsospectralityReport {
    pub passed: bool,
    pub max_deviation: f64,
    /// First failing sample and its deviation (`+∞` when the degeneracy pattern changed).
    pub first_failure: Option<(usize, f64)>,
    pub reference: SpectralData,
}

/// Evaluates the spectrum at every loop sample and compares with the first sample.
pub fn isospectrality_check(model: &ModelSpec, samples: &LoopSamples, tol: f64) -> Result<IsospectralityReport> {
    let mut reference = None;
    let mut max_deviation = 0.0_f64;
    let mut first_failure = None;
    for (k, point) in samples.points.iter().enumerate() {
        let data = eigen_decompose(&model.evaluate(point.as_slice())?, None).data;
        let reference = reference.get_or_insert_with(|| data.clone());
        let deviation = if data.same_pattern(reference) { data.max_deviation(reference) } else { f64::INFINITY };
        max_deviation = max_deviation.max(deviation);
        if deviation >= tol && first_failure.is_none() {
            first_failure = Some((k, deviation));
        }
    }
    let reference = match reference {
        Some(r) => r,
        None => model.reference_spectrum(None)?.data,
    };
    Ok(IsospectralityReport { passed: first_failure.is_none(), max_deviation, first_failure, reference })
}
