//! Degenerate flux maps and their algebra.
//!
//! `H_λ(ξ) = (|ξ| − ν)_+^λ ξ/|ξ|` vanishes on the whole ball `|ξ| ≤ ν`;
//! `V_p(ξ) = |ξ|^{(p−2)/2} ξ` is the usual p-Laplacian auxiliary map. The
//! regularized flux adds `ε|ξ|^{p−2}ξ` to `H_{p−1}` and is what the implicit
//! solver differentiates.
//!
//! Vectors are plain slices of any length `n ≥ 1`; the solver only ever
//! uses `n ≤ 2`, the inequality sweeps also use `n = 3`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent, degeneracy radius and regularization weight of the flux.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxParams {
    pub p: f64,
    pub nu: f64,
    pub epsilon: f64,
}

impl FluxParams {
    pub fn new(p: f64, nu: f64, epsilon: f64) -> Result<Self> {
        let params = Self { p, nu, epsilon };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        check_exponent(self.p)?;
        if !(self.nu.is_finite() && self.nu >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "degeneracy radius nu = {} must be finite and >= 0",
                self.nu
            )));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidParameter(format!(
                "epsilon = {} must lie in [0, 1]",
                self.epsilon
            )));
        }
        Ok(())
    }

    pub fn with_epsilon(self, epsilon: f64) -> Result<Self> {
        Self::new(self.p, self.nu, epsilon)
    }
}

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p >= 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("exponent p = {p} must satisfy p >= 2")))
    }
}

fn check_finite(xi: &[f64]) -> Result<()> {
    if xi.is_empty() {
        return Err(Error::RejectedInput("empty vector".into()));
    }
    if xi.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::RejectedInput(format!("non-finite component in {xi:?}")))
    }
}

pub(crate) fn norm(xi: &[f64]) -> f64 {
    xi.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Radial profile `(r − ν)_+^λ`. The positive part is taken before the power.
#[inline]
pub(crate) fn positive_part_pow(r: f64, nu: f64, lambda: f64) -> f64 {
    let excess = (r - nu).max(0.0);
    if excess == 0.0 {
        0.0
    } else {
        excess.powf(lambda)
    }
}

/// Writes `H_λ(ξ)` into `out` without validation.
#[inline]
pub(crate) fn h_lambda_into(xi: &[f64], lambda: f64, nu: f64, out: &mut [f64]) {
    let r = norm(xi);
    let profile = positive_part_pow(r, nu, lambda);
    if profile == 0.0 {
        out.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let scale = profile / r;
    for (o, x) in out.iter_mut().zip(xi) {
        *o = scale * x;
    }
}

/// `H_λ(ξ) = (|ξ| − ν)_+^λ ξ/|ξ|`, with `H_λ(0) = 0`.
pub fn h_lambda(xi: &[f64], lambda: f64, nu: f64) -> Result<Vec<f64>> {
    check_finite(xi)?;
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda = {lambda} must be > 0")));
    }
    if !(nu.is_finite() && nu >= 0.0) {
        return Err(Error::InvalidParameter(format!("nu = {nu} must be >= 0")));
    }
    let mut out = vec![0.0; xi.len()];
    h_lambda_into(xi, lambda, nu, &mut out);
    Ok(out)
}

/// `V_p(ξ) = |ξ|^{(p−2)/2} ξ`.
pub fn v_p(xi: &[f64], p: f64) -> Result<Vec<f64>> {
    check_finite(xi)?;
    check_exponent(p)?;
    Ok(power_map(xi, (p - 2.0) / 2.0))
}

/// `|ξ|^s ξ`, zero at the origin.
fn power_map(xi: &[f64], s: f64) -> Vec<f64> {
    let r = norm(xi);
    if r == 0.0 {
        return vec![0.0; xi.len()];
    }
    let scale = r.powf(s);
    xi.iter().map(|x| scale * x).collect()
}

/// Writes the regularized flux `H_{p−1}(ξ) + ε|ξ|^{p−2}ξ` into `out`.
#[inline]
pub(crate) fn regularized_flux_into(xi: &[f64], params: &FluxParams, out: &mut [f64]) {
    let r = norm(xi);
    let scale = flux_coefficient(r, params);
    for (o, x) in out.iter_mut().zip(xi) {
        *o = scale * x;
    }
}

/// Scalar diffusivity `κ(r)` with `flux(ξ) = κ(|ξ|) ξ`; the value at the
/// origin is the limit along any ray. Used for the lagged-coefficient
/// iteration as well.
#[inline]
pub(crate) fn flux_coefficient(r: f64, params: &FluxParams) -> f64 {
    let FluxParams { p, nu, epsilon } = *params;
    let h_part = if r == 0.0 {
        if nu == 0.0 && p == 2.0 {
            1.0
        } else {
            0.0
        }
    } else {
        positive_part_pow(r, nu, p - 1.0) / r
    };
    let eps_part = if epsilon == 0.0 {
        0.0
    } else if p == 2.0 {
        epsilon
    } else if r == 0.0 {
        0.0
    } else {
        epsilon * r.powf(p - 2.0)
    };
    h_part + eps_part
}

/// `H_{p−1}(ξ) + ε|ξ|^{p−2}ξ`; with `ε = 0` this is the degenerate flux.
pub fn regularized_flux(xi: &[f64], params: &FluxParams) -> Result<Vec<f64>> {
    check_finite(xi)?;
    params.validate()?;
    let mut out = vec![0.0; xi.len()];
    regularized_flux_into(xi, params, &mut out);
    Ok(out)
}

/// Writes the row-major `n × n` Jacobian of the regularized flux into `out`.
///
/// On the sphere `|ξ| = ν` with `p = 2` the degenerate part has a kink; the
/// inner (zero) branch is used there. Callers with `ε = 0` must go through
/// [`regularized_flux_jacobian`], which rejects those points.
pub(crate) fn regularized_flux_jacobian_into(xi: &[f64], params: &FluxParams, out: &mut [f64]) {
    let n = xi.len();
    let FluxParams { p, nu, epsilon } = *params;
    out.iter_mut().for_each(|v| *v = 0.0);
    let r = norm(xi);
    if r == 0.0 {
        let mut diag = 0.0;
        if nu == 0.0 && p == 2.0 {
            diag += 1.0;
        }
        if p == 2.0 {
            diag += epsilon;
        }
        for i in 0..n {
            out[i * n + i] = diag;
        }
        return;
    }
    // radial derivative `a` along e = ξ/r, tangential coefficient `b`
    let lambda = p - 1.0;
    let (mut a, mut b) = (0.0, 0.0);
    if r > nu {
        let excess = r - nu;
        a += if lambda == 1.0 {
            1.0
        } else {
            lambda * excess.powf(lambda - 1.0)
        };
        b += excess.powf(lambda) / r;
    }
    if epsilon > 0.0 {
        let rp = if p == 2.0 { 1.0 } else { r.powf(p - 2.0) };
        a += epsilon * (p - 1.0) * rp;
        b += epsilon * rp;
    }
    for i in 0..n {
        let ei = xi[i] / r;
        for j in 0..n {
            let ej = xi[j] / r;
            let delta = if i == j { 1.0 } else { 0.0 };
            out[i * n + j] = (a - b) * ei * ej + b * delta;
        }
    }
}

/// Exact Jacobian of [`regularized_flux`], row-major `n × n`.
///
/// With `ε = 0` the flux is not differentiable at `ξ = 0` or `|ξ| = ν`;
/// those points are rejected rather than given a one-sided value.
pub fn regularized_flux_jacobian(xi: &[f64], params: &FluxParams) -> Result<Vec<f64>> {
    check_finite(xi)?;
    params.validate()?;
    let r = norm(xi);
    if params.epsilon == 0.0 && (r == 0.0 || r == params.nu) {
        return Err(Error::SingularPoint { norm: r });
    }
    let n = xi.len();
    let mut out = vec![0.0; n * n];
    regularized_flux_jacobian_into(xi, params, &mut out);
    Ok(out)
}

/// Left and right side of one inequality instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapPair {
    pub lhs: f64,
    pub rhs: f64,
}

impl GapPair {
    /// Normalized slack of `lhs ≥ rhs`.
    pub fn slack_lower(&self) -> f64 {
        (self.lhs - self.rhs) / (1.0 + self.lhs.abs())
    }

    /// Normalized slack of `lhs ≤ rhs`.
    pub fn slack_upper(&self) -> f64 {
        (self.rhs - self.lhs) / (1.0 + self.rhs.abs())
    }
}

fn check_pair(xi: &[f64], eta: &[f64]) -> Result<()> {
    check_finite(xi)?;
    check_finite(eta)?;
    if xi.len() != eta.len() {
        return Err(Error::RejectedInput(format!(
            "dimension mismatch: {} vs {}",
            xi.len(),
            eta.len()
        )));
    }
    Ok(())
}

/// Monotonicity of `H_{p−1}`: `⟨H_{p−1}(ξ)−H_{p−1}(η), ξ−η⟩ ≥ (4/p²)|H_{p/2}(ξ)−H_{p/2}(η)|²`.
pub fn brasco_monotonicity_gap(xi: &[f64], eta: &[f64], p: f64, nu: f64) -> Result<GapPair> {
    check_pair(xi, eta)?;
    check_exponent(p)?;
    let hx = h_lambda(xi, p - 1.0, nu)?;
    let hy = h_lambda(eta, p - 1.0, nu)?;
    let gx = h_lambda(xi, p / 2.0, nu)?;
    let gy = h_lambda(eta, p / 2.0, nu)?;
    let lhs = dot(&diff(&hx, &hy), &diff(xi, eta));
    let dg = diff(&gx, &gy);
    let rhs = 4.0 / (p * p) * dot(&dg, &dg);
    Ok(GapPair { lhs, rhs })
}

/// Lipschitz-type bound for `H_{p−1}` in terms of `H_{p/2}`.
pub fn brasco_lipschitz_gap(xi: &[f64], eta: &[f64], p: f64, nu: f64) -> Result<GapPair> {
    check_pair(xi, eta)?;
    check_exponent(p)?;
    let hx = h_lambda(xi, p - 1.0, nu)?;
    let hy = h_lambda(eta, p - 1.0, nu)?;
    let gx = h_lambda(xi, p / 2.0, nu)?;
    let gy = h_lambda(eta, p / 2.0, nu)?;
    let lhs = norm(&diff(&hx, &hy));
    let s = (p - 2.0) / p;
    let rhs = (p - 1.0) * (norm(&gx).powf(s) + norm(&gy).powf(s)) * norm(&diff(&gx, &gy));
    Ok(GapPair { lhs, rhs })
}

/// Both `V_p` inequalities: `mono` is `|V_p(ξ)−V_p(η)|² ≤ (p²/4)⟨…⟩`, `lip` the
/// Lipschitz bound of `|ξ|^{p−2}ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LindGaps {
    pub mono: GapPair,
    pub lip: GapPair,
}

pub fn lind_gaps(xi: &[f64], eta: &[f64], p: f64) -> Result<LindGaps> {
    check_pair(xi, eta)?;
    check_exponent(p)?;
    let vx = power_map(xi, (p - 2.0) / 2.0);
    let vy = power_map(eta, (p - 2.0) / 2.0);
    let ax = power_map(xi, p - 2.0);
    let ay = power_map(eta, p - 2.0);
    let dv = diff(&vx, &vy);
    let dv_norm = norm(&dv);
    let mono = GapPair {
        lhs: dot(&dv, &dv),
        rhs: p * p / 4.0 * dot(&diff(&ax, &ay), &diff(xi, eta)),
    };
    let s = (p - 2.0) / 2.0;
    let lip = GapPair {
        lhs: norm(&diff(&ax, &ay)),
        rhs: (p - 1.0) * (norm(xi).powf(s) + norm(eta).powf(s)) * dv_norm,
    };
    Ok(LindGaps { mono, lip })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
    }

    #[test]
    fn h_lambda_examples() {
        assert_eq!(h_lambda(&[0.0, 0.0], 1.5, 1.0).unwrap(), vec![0.0, 0.0]);
        assert_eq!(h_lambda(&[0.5, 0.5], 2.0, 1.0).unwrap(), vec![0.0, 0.0]);
        assert_eq!(h_lambda(&[2.0, 0.0], 1.0, 1.0).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn h_lambda_rejects_non_finite() {
        assert!(matches!(
            h_lambda(&[f64::NAN, 0.0], 1.0, 1.0),
            Err(Error::RejectedInput(_))
        ));
        assert!(matches!(
            h_lambda(&[f64::INFINITY], 1.0, 1.0),
            Err(Error::RejectedInput(_))
        ));
        assert!(h_lambda(&[1.0], 0.0, 1.0).is_err());
    }

    #[test]
    fn v_p_examples() {
        assert_eq!(v_p(&[3.0, 4.0], 2.0).unwrap(), vec![3.0, 4.0]);
        assert_eq!(v_p(&[0.0, 0.0], 4.0).unwrap(), vec![0.0, 0.0]);
        assert!(close(&v_p(&[3.0, 4.0], 4.0).unwrap(), &[15.0, 20.0], 1e-14));
        assert!(v_p(&[1.0], 1.5).is_err());
    }

    #[test]
    fn regularized_flux_examples() {
        let p = FluxParams::new(2.0, 1.0, 0.0).unwrap();
        assert_eq!(regularized_flux(&[0.5, 0.0], &p).unwrap(), vec![0.0, 0.0]);
        let p = FluxParams::new(2.0, 1.0, 0.1).unwrap();
        assert!(close(&regularized_flux(&[0.5, 0.0], &p).unwrap(), &[0.05, 0.0], 1e-15));
        let p = FluxParams::new(3.0, 1.0, 0.0).unwrap();
        assert!(close(&regularized_flux(&[2.0, 0.0], &p).unwrap(), &[1.0, 0.0], 1e-15));
    }

    #[test]
    fn params_validation() {
        assert!(FluxParams::new(1.9, 1.0, 0.1).is_err());
        assert!(FluxParams::new(2.0, -1.0, 0.1).is_err());
        assert!(FluxParams::new(2.0, 1.0, 1.5).is_err());
        assert!(FluxParams::new(2.0, 0.0, 0.0).is_ok());
    }

    #[test]
    fn jacobian_examples() {
        let p = FluxParams::new(2.0, 1.0, 0.0).unwrap();
        let j = regularized_flux_jacobian(&[2.0, 0.0], &p).unwrap();
        assert!(close(&j, &[1.0, 0.0, 0.0, 0.5], 1e-15));
        let p = FluxParams::new(2.0, 1.0, 0.2).unwrap();
        let j = regularized_flux_jacobian(&[0.3, 0.4], &p).unwrap();
        assert!(close(&j, &[0.2, 0.0, 0.0, 0.2], 1e-15));
    }

    #[test]
    fn jacobian_matches_hand_derivative_by_finite_differences() {
        let params = FluxParams::new(2.0, 1.0, 0.0).unwrap();
        let xi = [2.0, 0.0];
        let step = 1e-6;
        let mut fd = [0.0; 4];
        for j in 0..2 {
            let mut plus = xi;
            let mut minus = xi;
            plus[j] += step;
            minus[j] -= step;
            let fp = regularized_flux(&plus, &params).unwrap();
            let fm = regularized_flux(&minus, &params).unwrap();
            for i in 0..2 {
                fd[i * 2 + j] = (fp[i] - fm[i]) / (2.0 * step);
            }
        }
        assert!(close(&fd, &[1.0, 0.0, 0.0, 0.5], 1e-8));
    }

    #[test]
    fn jacobian_singular_points_with_zero_epsilon() {
        let p = FluxParams::new(2.0, 1.0, 0.0).unwrap();
        assert!(matches!(
            regularized_flux_jacobian(&[1.0, 0.0], &p),
            Err(Error::SingularPoint { .. })
        ));
        assert!(matches!(
            regularized_flux_jacobian(&[0.0, 0.0], &p),
            Err(Error::SingularPoint { .. })
        ));
        let p = FluxParams::new(2.0, 1.0, 0.1).unwrap();
        assert!(regularized_flux_jacobian(&[1.0, 0.0], &p).is_ok());
    }

    #[test]
    fn brasco_examples() {
        let g = brasco_monotonicity_gap(&[5.0, 1.0], &[5.0, 1.0], 3.0, 0.5).unwrap();
        assert_eq!((g.lhs, g.rhs), (0.0, 0.0));
        let g = brasco_monotonicity_gap(&[0.2, 0.0], &[0.0, 0.3], 2.0, 1.0).unwrap();
        assert_eq!((g.lhs, g.rhs), (0.0, 0.0));
        let g = brasco_lipschitz_gap(&[1.0, 2.0], &[1.0, 2.0], 4.0, 0.5).unwrap();
        assert_eq!((g.lhs, g.rhs), (0.0, 0.0));
    }

    #[test]
    fn brasco_lipschitz_collapses_at_p2() {
        let xi = [3.0, -1.0];
        let eta = [-0.5, 2.5];
        let g = brasco_lipschitz_gap(&xi, &eta, 2.0, 0.5).unwrap();
        let h1x = h_lambda(&xi, 1.0, 0.5).unwrap();
        let h1y = h_lambda(&eta, 1.0, 0.5).unwrap();
        let d = norm(&diff(&h1x, &h1y));
        assert!((g.lhs - d).abs() < 1e-14);
        assert!((g.rhs - 2.0 * d).abs() < 1e-14);
    }

    #[test]
    fn lind_examples() {
        let g = lind_gaps(&[1.0, 2.0], &[1.0, 2.0], 3.5).unwrap();
        assert_eq!(
            [g.mono.lhs, g.mono.rhs, g.lip.lhs, g.lip.rhs],
            [0.0, 0.0, 0.0, 0.0]
        );
        let xi = [1.0, -2.0];
        let eta = [0.5, 3.0];
        let g = lind_gaps(&xi, &eta, 2.0).unwrap();
        let d = diff(&xi, &eta);
        assert!((g.mono.lhs - dot(&d, &d)).abs() < 1e-13);
        assert!((g.mono.rhs - dot(&d, &d)).abs() < 1e-13);
    }

    fn vec2() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-4.0f64..4.0, 2)
    }

    fn rotate(theta: f64, v: &[f64]) -> Vec<f64> {
        let (s, c) = theta.sin_cos();
        vec![c * v[0] - s * v[1], s * v[0] + c * v[1]]
    }

    proptest! {
        #[test]
        fn zero_inside_degeneracy_ball(v in vec2(), nu in 0.0f64..3.0, lambda in 0.5f64..4.0) {
            let r = norm(&v);
            let out = h_lambda(&v, lambda, nu).unwrap();
            if r <= nu {
                prop_assert!(out.iter().all(|x| x.to_bits() == 0));
            }
            let bound = positive_part_pow(r, nu, lambda);
            prop_assert!(norm(&out) <= bound * (1.0 + 1e-14) + 1e-300);
        }

        #[test]
        fn radial_symmetry(v in vec2(), theta in 0.0f64..6.3, nu in 0.0f64..2.0, p in 2.0f64..5.0, eps in 0.0f64..1.0) {
            let rv = rotate(theta, &v);
            let params = FluxParams::new(p, nu, eps).unwrap();
            let a = rotate(theta, &h_lambda(&v, p - 1.0, nu).unwrap());
            prop_assert!(close(&h_lambda(&rv, p - 1.0, nu).unwrap(), &a, 1e-12));
            let a = rotate(theta, &v_p(&v, p).unwrap());
            prop_assert!(close(&v_p(&rv, p).unwrap(), &a, 1e-12));
            let a = rotate(theta, &regularized_flux(&v, &params).unwrap());
            prop_assert!(close(&regularized_flux(&rv, &params).unwrap(), &a, 1e-12));
        }

        #[test]
        fn h_pminus1_is_power_of_h_half(v in vec2(), nu in 0.0f64..2.0, p in 2.01f64..5.0) {
            let half = h_lambda(&v, p / 2.0, nu).unwrap();
            let composed = power_map(&half, (p - 2.0) / p);
            prop_assert!(close(&h_lambda(&v, p - 1.0, nu).unwrap(), &composed, 1e-12));
            let sq: f64 = half.iter().map(|x| x * x).sum();
            let expected = positive_part_pow(norm(&v), nu, p);
            prop_assert!((sq - expected).abs() <= 1e-12 * (1.0 + expected));
        }

        #[test]
        fn jacobian_symmetric_psd(v in prop::collection::vec(-3.0f64..3.0, 1..4), nu in 0.0f64..2.0, p in 2.0f64..5.0, eps in 0.0f64..1.0) {
            let params = FluxParams::new(p, nu, eps).unwrap();
            if let Ok(j) = regularized_flux_jacobian(&v, &params) {
                let n = v.len();
                for i in 0..n {
                    for k in 0..n {
                        prop_assert!((j[i * n + k] - j[k * n + i]).abs() <= 1e-12 * (1.0 + j[i * n + k].abs()));
                    }
                }
                // quadratic form on the basis and on v itself
                let mut probes: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|k| if i == k { 1.0 } else { 0.0 }).collect()).collect();
                probes.push(v.clone());
                for w in probes {
                    let q: f64 = (0..n).map(|i| (0..n).map(|k| w[i] * j[i * n + k] * w[k]).sum::<f64>()).sum();
                    prop_assert!(q >= -1e-10);
                }
            }
        }
    }
}
