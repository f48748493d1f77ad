//! Split of the mean+covariance `D` terms into the mean-only part (starred
//! blocks) and a correction, and the matching split `J_{k+1} = Theta + Pi`.

use nalgebra::DMatrix;

use super::terms::MeanCovPieces;
use super::{fim_recursion_step, FimTriple};
use crate::error::{Error, Result};
use crate::linalg::{check_finite, condition_number, inverse, symmetrize, PSD_TOLERANCE};
use crate::model::SystemModel;
use crate::moments::GaussianBelief;

/// `Psi` is set to zero when `||spread|| < SINGULAR_SPREAD_RATIO * ||noise||`.
pub const SINGULAR_SPREAD_RATIO: f64 = 1e-12;

/// Condition number above which `Sigma11` is considered singular.
const SIGMA11_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedFim {
    pub sigma11_star: DMatrix<f64>,
    pub sigma11: DMatrix<f64>,
    pub sigma12_star: DMatrix<f64>,
    pub sigma12: DMatrix<f64>,
    pub sigma22_star: DMatrix<f64>,
    pub sigma22: DMatrix<f64>,
    /// `[Q spread_x^-1 Q + Q]^-1`, `n x n`.
    pub psi_x: DMatrix<f64>,
    /// `[R spread_z^-1 R + R]^-1`, `m x m`.
    pub psi_z: DMatrix<f64>,
}

impl DecomposedFim {
    /// The starred blocks alone, i.e. the mean-only terms.
    pub fn star_triple(&self) -> Result<FimTriple> {
        FimTriple::new(
            self.sigma11_star.clone(),
            self.sigma12_star.clone(),
            self.sigma22_star.clone(),
        )
    }

    /// Starred plus correction blocks.
    pub fn full_triple(&self) -> Result<FimTriple> {
        FimTriple::new(
            &self.sigma11_star + &self.sigma11,
            &self.sigma12_star + &self.sigma12,
            &self.sigma22_star + &self.sigma22,
        )
    }
}

/// `[N S^-1 N + N]^-1` for noise `N` and spread `S` (so that
/// `(S + N)^-1 = N^-1 - Psi`). Zero when `S` vanishes relative to `N`; when
/// `S` is singular but not negligible the identity's limit
/// `N^-1 - (S + N)^-1` is used.
fn psi(
    noise: &DMatrix<f64>,
    spread: &DMatrix<f64>,
    noise_inv: &DMatrix<f64>,
    total_inv: &DMatrix<f64>,
    what: &str,
) -> Result<DMatrix<f64>> {
    let n = noise.nrows();
    if spread.norm() < SINGULAR_SPREAD_RATIO * noise.norm() {
        return Ok(DMatrix::zeros(n, n));
    }
    let sym = symmetrize(spread);
    if let Some(chol) = nalgebra::Cholesky::new(sym.clone()) {
        let bracket = noise * chol.inverse() * noise + noise;
        return Ok(symmetrize(&inverse(&bracket, what)?));
    }
    let eig = sym.symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min < -PSD_TOLERANCE * eig.eigenvalues.amax().max(1.0) {
        return Err(Error::numeric(
            what,
            format!("spread covariance is indefinite (min eigenvalue {min:e})"),
        ));
    }
    Ok(symmetrize(&(noise_inv - total_inv)))
}

/// Starred (mean-only) and correction blocks of the mean+covariance terms:
///
/// ```text
/// S11* = F' Q^-1 F
/// S11  = T_x + B' Q^-1 F + G' (Q^-1 B - Psi_x G)
/// S12* = -F' Q^-1
/// S12  = G' Psi_x - B' Q^-1
/// S22* = Q^-1 + Fz' R^-1 Fz
/// S22  = T_z - Psi_x + Bz' R^-1 Fz + Gz' (R^-1 Bz - Psi_z Gz)
/// ```
///
/// with `F` the model Jacobian at the estimate, `B` the Jacobian of the
/// curvature mean term, `G = F + B` and `T` the trace terms; `z` marks the
/// measurement channel.
pub fn decompose_terms<M: SystemModel + ?Sized>(
    model: &M,
    k: usize,
    state_belief: &GaussianBelief,
    meas_belief: &GaussianBelief,
) -> Result<DecomposedFim> {
    decompose_pieces(&MeanCovPieces::gather(model, k, state_belief, meas_belief)?)
}

pub(crate) fn decompose_pieces(p: &MeanCovPieces) -> Result<DecomposedFim> {
    let psi_x = psi(
        &p.q,
        &p.state.spread_cov(),
        &p.q_inv,
        &p.px_inv,
        "state Psi",
    )?;
    let psi_z = psi(
        &p.r,
        &p.meas.spread_cov(),
        &p.r_inv,
        &p.pz_inv,
        "measurement Psi",
    )?;

    let f = &p.state_derivs.base_jacobian;
    let b = &p.state_derivs.curvature_mean_jacobian;
    let g = &p.state_derivs.mean_jacobian;
    let fz = &p.meas_derivs.base_jacobian;
    let bz = &p.meas_derivs.curvature_mean_jacobian;
    let gz = &p.meas_derivs.mean_jacobian;
    let qi = &p.q_inv;
    let ri = &p.r_inv;

    let sigma11_star = f.transpose() * qi * f;
    let sigma11 = &p.state_trace + b.transpose() * qi * f + g.transpose() * (qi * b - &psi_x * g);
    let sigma12_star = -f.transpose() * qi;
    let sigma12 = g.transpose() * &psi_x - b.transpose() * qi;
    let sigma22_star = qi + fz.transpose() * ri * fz;
    let sigma22 = &p.meas_trace - &psi_x
        + bz.transpose() * ri * fz
        + gz.transpose() * (ri * bz - &psi_z * gz);

    Ok(DecomposedFim {
        sigma11_star: symmetrize(&sigma11_star),
        sigma11: symmetrize(&sigma11),
        sigma12_star,
        sigma12,
        sigma22_star: symmetrize(&sigma22_star),
        sigma22: symmetrize(&sigma22),
        psi_x,
        psi_z,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionStep {
    pub j_next: DMatrix<f64>,
    /// Mean-only information `Theta` built on the same `J_k`.
    pub theta: DMatrix<f64>,
    pub pi: DMatrix<f64>,
    /// True when `Pi` came from `J_{k+1} - Theta` because `Sigma11` (or the
    /// `Phi` bracket) was singular.
    pub pi_fallback: bool,
}

/// `Phi` is evaluated as `(J + S11*)^-1 - (J + D11)^-1`, the inversion-lemma
/// form of its bracket definition; forming the bracket directly cancels
/// catastrophically when `J + D11` is small next to `J + S11*`.
fn printed_pi(
    dec: &DecomposedFim,
    a_inv: &DMatrix<f64>,
    full: &FimTriple,
    info_inv: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let s11 = &dec.sigma11;
    if s11.amax() == 0.0 || condition_number(s11) > SIGMA11_CONDITION_LIMIT {
        return Err(Error::numeric("Phi", "Sigma11 is singular"));
    }
    let phi = a_inv - info_inv;
    let pi = &dec.sigma22
        - full.d12.transpose() * info_inv * &dec.sigma12
        - (dec.sigma12.transpose() * info_inv - dec.sigma12_star.transpose() * phi)
            * &dec.sigma12_star;
    check_finite(&pi, "Pi")?;
    Ok(pi)
}

/// `J_{k+1} = Theta + Pi` with
///
/// ```text
/// Theta = S22* - S12*' (J + S11*)^-1 S12*
/// Pi    = S22 - D12' (J + D11)^-1 S12 - [S12' (J + D11)^-1 - S12*' Phi] S12*
/// Phi   = [(J + S11*) S11^-1 (J + S11*) + (J + S11*)]^-1
/// ```
///
/// If `S11` is singular (`Phi` undefined), `Pi = J_{k+1} - Theta` with
/// `J_{k+1}` from the plain recursion.
pub fn fim_via_decomposition(j: &DMatrix<f64>, dec: &DecomposedFim) -> Result<DecompositionStep> {
    if j.shape() != dec.sigma11_star.shape() {
        return Err(Error::invalid(
            "fim_via_decomposition: J has the wrong size",
        ));
    }
    let a = j + &dec.sigma11_star;
    let a_inv = inverse(&a, "J + Sigma11*")?;
    let theta = symmetrize(
        &(&dec.sigma22_star - dec.sigma12_star.transpose() * &a_inv * &dec.sigma12_star),
    );
    let full = dec.full_triple()?;

    let printed = inverse(&(j + &full.d11), "J + D11")
        .and_then(|info_inv| printed_pi(dec, &a_inv, &full, &info_inv));
    let (pi, pi_fallback) = match printed {
        Ok(pi) => (symmetrize(&pi), false),
        Err(_) => {
            let j_next = fim_recursion_step(j, &full)?;
            (symmetrize(&(&j_next - &theta)), true)
        }
    };
    Ok(DecompositionStep {
        j_next: symmetrize(&(&theta + &pi)),
        theta,
        pi,
        pi_fallback,
    })
}
