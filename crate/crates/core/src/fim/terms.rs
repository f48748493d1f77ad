use nalgebra::{DMatrix, DVector};

use super::{spd_inverse, FimTriple};
use crate::error::{Error, Result};
use crate::model::{measurement_jacobian, transition_jacobian, SystemModel};
use crate::moments::{
    measurement_moment_map_derivatives, propagate_measurement_moments, propagate_state_moments,
    state_moment_map_derivatives, GaussianBelief, MomentMapDerivatives, PropagatedMoments,
};

/// `D` terms as sample averages over true states: `states[r]` is a sample
/// of `x_k` and `next_states[r]` the paired sample of `x_{k+1}`.
///
/// ```text
/// D11 = E[F' Q^-1 F],  D12 = -E[F]' Q^-1,  D22 = Q^-1 + E[H' R^-1 H]
/// ```
pub fn true_fim_terms_mc<M: SystemModel + ?Sized>(
    model: &M,
    k: usize,
    states: &[DVector<f64>],
    next_states: &[DVector<f64>],
) -> Result<FimTriple> {
    if states.is_empty() || states.len() != next_states.len() {
        return Err(Error::invalid(format!(
            "true FIM terms need paired non-empty samples, got {} and {}",
            states.len(),
            next_states.len()
        )));
    }
    let n = model.state_dim();
    let q_inv = spd_inverse(&model.process_cov(k + 1))?;
    let r_inv = spd_inverse(&model.meas_cov(k + 1))?;
    let mut d11 = DMatrix::zeros(n, n);
    let mut f_sum = DMatrix::zeros(n, n);
    let mut hrh = DMatrix::zeros(n, n);
    // Sequential accumulation keeps the result independent of scheduling.
    for (x, x_next) in states.iter().zip(next_states) {
        let f = transition_jacobian(model, k + 1, x)?;
        let h = measurement_jacobian(model, k + 1, x_next)?;
        d11 += f.transpose() * &q_inv * &f;
        f_sum += f;
        hrh += h.transpose() * &r_inv * h;
    }
    let count = states.len() as f64;
    FimTriple::new(
        d11 / count,
        -(f_sum / count).transpose() * &q_inv,
        &q_inv + hrh / count,
    )
}

/// `D` terms with the model derivatives evaluated at point estimates of
/// `x_k` (transition) and `x_{k+1}` (measurement).
pub fn mean_only_terms<M: SystemModel + ?Sized>(
    model: &M,
    k: usize,
    state_estimate: &DVector<f64>,
    meas_estimate: &DVector<f64>,
) -> Result<FimTriple> {
    let q_inv = spd_inverse(&model.process_cov(k + 1))?;
    let r_inv = spd_inverse(&model.meas_cov(k + 1))?;
    let f = transition_jacobian(model, k + 1, state_estimate)?;
    let h = measurement_jacobian(model, k + 1, meas_estimate)?;
    FimTriple::new(
        f.transpose() * &q_inv * &f,
        -f.transpose() * &q_inv,
        &q_inv + h.transpose() * &r_inv * h,
    )
}

/// Everything the mean+covariance terms and their decomposition share.
pub(crate) struct MeanCovPieces {
    pub q: DMatrix<f64>,
    pub q_inv: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub r_inv: DMatrix<f64>,
    pub state: PropagatedMoments,
    pub state_derivs: MomentMapDerivatives,
    pub meas: PropagatedMoments,
    pub meas_derivs: MomentMapDerivatives,
    /// `(P^x)^-1`.
    pub px_inv: DMatrix<f64>,
    /// `(P^z)^-1`.
    pub pz_inv: DMatrix<f64>,
    /// `1/2 tr(Px^-1 dPx_i Px^-1 dPx_j)`.
    pub state_trace: DMatrix<f64>,
    /// `1/2 tr(Pz^-1 dPz_i Pz^-1 dPz_j)`.
    pub meas_trace: DMatrix<f64>,
}

fn trace_matrix(inv: &DMatrix<f64>, partials: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = partials.len();
    let weighted: Vec<DMatrix<f64>> = partials.iter().map(|p| inv * p).collect();
    let mut t = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = 0.5 * (&weighted[i] * &weighted[j]).trace();
            t[(i, j)] = v;
            t[(j, i)] = v;
        }
    }
    t
}

fn covariance_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    spd_inverse(m).map_err(|e| Error::numeric(what, e.to_string()))
}

impl MeanCovPieces {
    pub fn gather<M: SystemModel + ?Sized>(
        model: &M,
        k: usize,
        state_belief: &GaussianBelief,
        meas_belief: &GaussianBelief,
    ) -> Result<Self> {
        let n = model.state_dim();
        if state_belief.dim() != n || meas_belief.dim() != n {
            return Err(Error::invalid(
                "beliefs must have the model's state dimension",
            ));
        }
        let q = model.process_cov(k + 1);
        let r = model.meas_cov(k + 1);
        let state = propagate_state_moments(model, k + 1, state_belief)?;
        let state_derivs = state_moment_map_derivatives(model, k + 1, state_belief)?;
        let meas = propagate_measurement_moments(model, k + 1, meas_belief)?;
        let meas_derivs = measurement_moment_map_derivatives(model, k + 1, meas_belief)?;
        let px_inv = covariance_inverse(&state.cov, "propagated state covariance")?;
        let pz_inv = covariance_inverse(&meas.cov, "propagated measurement covariance")?;
        let state_trace = trace_matrix(&px_inv, &state_derivs.cov_partials);
        let meas_trace = trace_matrix(&pz_inv, &meas_derivs.cov_partials);
        Ok(Self {
            q_inv: spd_inverse(&q)?,
            r_inv: spd_inverse(&r)?,
            q,
            r,
            state,
            state_derivs,
            meas,
            meas_derivs,
            px_inv,
            pz_inv,
            state_trace,
            meas_trace,
        })
    }

    pub fn triple(&self) -> Result<FimTriple> {
        let g = &self.state_derivs.mean_jacobian;
        let gz = &self.meas_derivs.mean_jacobian;
        FimTriple::new(
            g.transpose() * &self.px_inv * g + &self.state_trace,
            -g.transpose() * &self.px_inv,
            &self.px_inv + gz.transpose() * &self.pz_inv * gz + &self.meas_trace,
        )
    }
}

/// `D` terms of the Gaussian transition and measurement densities whose
/// moments come from second-order propagation of the beliefs:
///
/// ```text
/// D11_ij = dmean_i' Px^-1 dmean_j + 1/2 tr(Px^-1 dPx_i Px^-1 dPx_j)
/// D12    = -dmean' Px^-1
/// D22    = Px^-1 + (measurement analogue of D11)
/// ```
///
/// `state_belief` is the belief on `x_k`, `meas_belief` the belief on
/// `x_{k+1}` used for the measurement channel.
pub fn mean_cov_terms<M: SystemModel + ?Sized>(
    model: &M,
    k: usize,
    state_belief: &GaussianBelief,
    meas_belief: &GaussianBelief,
) -> Result<FimTriple> {
    MeanCovPieces::gather(model, k, state_belief, meas_belief)?.triple()
}
