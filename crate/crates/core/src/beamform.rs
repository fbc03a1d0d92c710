//! MVDR beamforming on full arrays and selected subsets.

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};
use crate::scene::SpectralModel;
use nalgebra::DVector;
use num_complex::Complex64;

/// Per-microphone selection, boolean or relaxed in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionVector {
    values: DVector<f64>,
    boolean: bool,
}

impl SelectionVector {
    /// Boolean selection of the given microphone indices.
    pub fn from_indices(m: usize, indices: &[usize]) -> Result<Self> {
        let mut values = DVector::zeros(m);
        for &i in indices {
            if i >= m {
                return Err(Error::DimensionMismatch(format!(
                    "selection index {i} out of range for {m} microphones"
                )));
            }
            values[i] = 1.0;
        }
        Ok(Self {
            values,
            boolean: true,
        })
    }

    /// All-ones selection.
    pub fn full(m: usize) -> Self {
        Self {
            values: DVector::from_element(m, 1.0),
            boolean: true,
        }
    }

    /// Selection from arbitrary values in `[0, 1]`; detects boolean vectors.
    pub fn relaxed(values: DVector<f64>) -> Result<Self> {
        if values.iter().any(|&v| !((-1e-12..=1.0 + 1e-12).contains(&v))) {
            return Err(Error::BadParameter(
                "selection entries must lie in [0, 1]".into(),
            ));
        }
        let values = values.map(|v| v.clamp(0.0, 1.0));
        let boolean = values.iter().all(|&v| v == 0.0 || v == 1.0);
        Ok(Self { values, boolean })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.len() == 0
    }

    pub fn is_boolean(&self) -> bool {
        self.boolean
    }

    /// Number of strictly positive entries.
    pub fn cardinality(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    /// Selected index set; defined for boolean selections only.
    pub fn indices(&self) -> Result<Vec<usize>> {
        if !self.boolean {
            return Err(Error::NotBoolean);
        }
        Ok(self
            .values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1.0)
            .map(|(i, _)| i)
            .collect())
    }

    pub fn transmission_cost(&self, costs: &crate::scene::CostVector) -> f64 {
        self.values
            .iter()
            .zip(costs.c.iter())
            .map(|(&p, &c)| p * c)
            .sum()
    }
}

/// MVDR weights over a selected index set, `w = R^{-1} a / (a^H R^{-1} a)`.
#[derive(Debug, Clone)]
pub struct BeamformerWeights {
    pub weights: CVec,
    pub selected_indices: Vec<usize>,
}

fn boolean_indices(sel: &SelectionVector, m: usize) -> Result<Vec<usize>> {
    if sel.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "selection length {} != {m} microphones",
            sel.len()
        )));
    }
    let idx = sel.indices()?;
    if idx.is_empty() {
        return Err(Error::EmptySelection);
    }
    Ok(idx)
}

pub fn mvdr_weights(model: &SpectralModel, sel: &SelectionVector) -> Result<BeamformerWeights> {
    let idx = boolean_indices(sel, model.mic_count())?;
    let r_sub = linalg::submatrix(&model.r_nn, &idx);
    let a_sub = linalg::subvector(&model.steering, &idx);
    let z = linalg::chol_solve(&r_sub, &a_sub, "noise covariance submatrix")?;
    let denom = a_sub.dotc(&z).re;
    if !(denom > 0.0) {
        return Err(Error::SolverFailure(
            "nonpositive a^H R^{-1} a; covariance is not PD".into(),
        ));
    }
    let weights = z * Complex64::new(1.0 / denom, 0.0);
    Ok(BeamformerWeights {
        weights,
        selected_indices: idx,
    })
}

/// MVDR output noise power of a boolean selection, `(a^H R^{-1} a)^{-1}`.
pub fn output_noise_power(model: &SpectralModel, sel: &SelectionVector) -> Result<f64> {
    let idx = boolean_indices(sel, model.mic_count())?;
    let quad = SubsetEvaluator::new(&model.r_nn, &model.steering)?.quad(&idx)?;
    Ok(1.0 / quad)
}

/// MVDR output SNR of a boolean selection, `P_s a^H R^{-1} a`.
pub fn output_snr(model: &SpectralModel, sel: &SelectionVector) -> Result<f64> {
    let idx = boolean_indices(sel, model.mic_count())?;
    let quad = SubsetEvaluator::new(&model.r_nn, &model.steering)?.quad(&idx)?;
    Ok(model.target_psd * quad)
}

/// Selection-masked inverse noise covariance
/// `Q = G^{-1} - G^{-1} (G^{-1} + diag(p)/lambda)^{-1} G^{-1}`,
/// defined for relaxed selections as well as boolean ones.
pub fn selection_q(
    r_nn: &CMat,
    sel: &SelectionVector,
    lambda: f64,
    g: &CMat,
) -> Result<CMat> {
    let m = r_nn.nrows();
    if sel.len() != m || g.nrows() != m || g.ncols() != m {
        return Err(Error::DimensionMismatch(
            "selection_q: inconsistent dimensions".into(),
        ));
    }
    if !(lambda > 0.0) {
        return Err(Error::BadParameter(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let g_chol = nalgebra::Cholesky::new(g.clone())
        .ok_or_else(|| Error::NotPositiveDefinite("G in noise decomposition".into()))?;
    let residual = (r_nn - (CMat::identity(m, m) * Complex64::new(lambda, 0.0) + g)).norm();
    if residual > 1e-8 * (1.0 + r_nn.norm()) {
        return Err(Error::BadParameter(
            "lambda and G do not decompose the noise covariance".into(),
        ));
    }
    let ginv = g_chol.inverse();
    let mut m_p = ginv.clone();
    for i in 0..m {
        m_p[(i, i)] += Complex64::new(sel.values()[i] / lambda, 0.0);
    }
    let m_p_chol = nalgebra::Cholesky::new(m_p)
        .ok_or_else(|| Error::NotPositiveDefinite("G^{-1} + diag(p)/lambda".into()))?;
    let inner = m_p_chol.solve(&ginv);
    let q = &ginv - &ginv * inner;
    Ok(linalg::hermitize(&q))
}

/// Cached quadratic-form evaluations `a_S^H R_S^{-1} a_S` over index subsets,
/// with O(k^2) bordered extension to `S ∪ {j}`.
pub struct SubsetEvaluator<'a> {
    r_nn: &'a CMat,
    steering: &'a CVec,
}

/// Cholesky factor of one subset, reusable for bordered extensions.
pub struct SubsetFactor {
    pub indices: Vec<usize>,
    l: CMat,
    /// `L^{-1} a_S`.
    v: CVec,
    pub quad: f64,
}

impl<'a> SubsetEvaluator<'a> {
    pub fn new(r_nn: &'a CMat, steering: &'a CVec) -> Result<Self> {
        if r_nn.nrows() != r_nn.ncols() || r_nn.nrows() != steering.len() {
            return Err(Error::DimensionMismatch(
                "covariance and steering dimensions differ".into(),
            ));
        }
        Ok(Self { r_nn, steering })
    }

    pub fn factor(&self, indices: &[usize]) -> Result<SubsetFactor> {
        let k = indices.len();
        if k == 0 {
            return Ok(SubsetFactor {
                indices: Vec::new(),
                l: CMat::zeros(0, 0),
                v: CVec::zeros(0),
                quad: 0.0,
            });
        }
        let r_sub = linalg::submatrix(self.r_nn, indices);
        let chol = nalgebra::Cholesky::new(r_sub)
            .ok_or_else(|| Error::NotPositiveDefinite("noise covariance submatrix".into()))?;
        let l = chol.l();
        let a_sub = linalg::subvector(self.steering, indices);
        let v = l
            .solve_lower_triangular(&a_sub)
            .ok_or_else(|| Error::SolverFailure("triangular solve failed".into()))?;
        let quad = v.norm_squared();
        Ok(SubsetFactor {
            indices: indices.to_vec(),
            l,
            v,
            quad,
        })
    }

    pub fn quad(&self, indices: &[usize]) -> Result<f64> {
        Ok(self.factor(indices)?.quad)
    }

    /// Quadratic form of `S ∪ {j}` from the factor of `S`, without refactoring.
    pub fn extended_quad(&self, factor: &SubsetFactor, j: usize) -> Result<f64> {
        let k = factor.indices.len();
        let rho = self.r_nn[(j, j)].re;
        let aj = self.steering[j];
        if k == 0 {
            return Ok(aj.norm_sqr() / rho);
        }
        let r_col = CVec::from_fn(k, |r, _| self.r_nn[(factor.indices[r], j)]);
        let u = factor
            .l
            .solve_lower_triangular(&r_col)
            .ok_or_else(|| Error::SolverFailure("triangular solve failed".into()))?;
        let schur = rho - u.norm_squared();
        if !(schur > 0.0) {
            return Err(Error::NotPositiveDefinite(
                "bordered covariance submatrix".into(),
            ));
        }
        let cross = aj - u.dotc(&factor.v);
        Ok(factor.quad + cross.norm_sqr() / schur)
    }
}
