//! Double-well potentials, the exponent gate, and the derived constants.
//!
//! The transition energy scale is carried by two constants:
//!
//!   c_p = p / (p-1)^{(p-1)/p}
//!   sigma_p = c_p * |Wcal(b) - Wcal(a)|,   Wcal(t) = int_a^t W(r)^{(p-1)/p} dr
//!
//! where a, b are the wells of W. Wcal is evaluated by adaptive quadrature;
//! the integrand vanishes like |r - well|^{2(p-1)/p} at the wells, which is
//! C^1-smooth for p in (2,3), so the quadrature converges fast.

use crate::quad;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("wells must be distinct and ordered: got low {low}, high {high}")]
    DegenerateWells { low: f64, high: f64 },
    #[error("amplitude must be positive, got {0}")]
    NonPositiveAmplitude(f64),
    #[error("exponent p must lie in (2,3), got {0} (p = 2 needs the cross-check constructor)")]
    ExponentOutOfRange(f64),
    #[error("truncation level {m} must be at least the largest well magnitude {need}")]
    TruncationTooSmall { m: f64, need: f64 },
    #[error("quadrature did not converge: requested {requested:e}, achieved {achieved:e}")]
    QuadratureTolerance { requested: f64, achieved: f64 },
}

/// Shape of the well polynomial. Only the quartic form is implemented; the
/// enum keeps the shape an explicit part of the value rather than a comment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum WellForm {
    #[default]
    Quartic,
}

/// A non-negative potential vanishing exactly at two values:
/// W(t) = amplitude * (t - well_low)^2 * (t - well_high)^2.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DoubleWell {
    pub well_low: f64,
    pub well_high: f64,
    pub amplitude: f64,
    pub form: WellForm,
}

impl DoubleWell {
    pub fn new(well_low: f64, well_high: f64, amplitude: f64) -> Result<Self, PotentialError> {
        if !(well_low < well_high) {
            return Err(PotentialError::DegenerateWells { low: well_low, high: well_high });
        }
        if !(amplitude > 0.0) {
            return Err(PotentialError::NonPositiveAmplitude(amplitude));
        }
        Ok(Self { well_low, well_high, amplitude, form: WellForm::Quartic })
    }

    /// The standard symmetric wells at -1 and +1 with unit amplitude.
    pub fn quartic_pm1() -> Self {
        Self::new(-1.0, 1.0, 1.0).expect("valid wells")
    }

    /// Symmetric wells at -1 and +1 with a chosen amplitude.
    pub fn quartic_pm1_scaled(amplitude: f64) -> Result<Self, PotentialError> {
        Self::new(-1.0, 1.0, amplitude)
    }

    /// W(t).
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        let u = t - self.well_low;
        let v = t - self.well_high;
        self.amplitude * u * u * v * v
    }

    /// W'(t).
    #[inline]
    pub fn deriv(&self, t: f64) -> f64 {
        let u = t - self.well_low;
        let v = t - self.well_high;
        self.amplitude * 2.0 * u * v * (u + v)
    }

    /// Exact average of W over the value segment [u, v], in divided-difference
    /// form so nearly equal endpoints lose no precision. For u == v this is
    /// W(u) exactly.
    pub fn segment_average(&self, u: f64, v: f64) -> f64 {
        // W(t) = A (t^2 - s t + q)^2 with s = a + b, q = a b; expand the
        // antiderivative Q and evaluate (Q(v) - Q(u))/(v - u) through the
        // power-sum identities S_k = (v^k - u^k)/(v - u).
        let s = self.well_low + self.well_high;
        let q = self.well_low * self.well_high;
        let a = self.amplitude;
        // Q(t)/A = t^5/5 - s t^4/2 + (s^2 + 2q) t^3/3 - s q t^2 + q^2 t
        let c5 = 1.0 / 5.0;
        let c4 = -s / 2.0;
        let c3 = (s * s + 2.0 * q) / 3.0;
        let c2 = -s * q;
        let c1 = q * q;
        let s1 = 1.0;
        let s2 = u + v;
        let s3 = u * u + u * v + v * v;
        let s4 = (u * u + v * v) * (u + v);
        let u2 = u * u;
        let v2 = v * v;
        let s5 = u2 * u2 + u2 * u * v + u2 * v2 + u * v2 * v + v2 * v2;
        a * (c5 * s5 + c4 * s4 + c3 * s3 + c2 * s2 + c1 * s1)
    }

    /// Segment average together with its partial derivatives in the two
    /// endpoints. The divided-difference polynomial is smooth, so this stays
    /// well defined at u == v, where both partials equal W'(u) / 2.
    pub fn segment_average_grad(&self, u: f64, v: f64) -> (f64, f64, f64) {
        let s = self.well_low + self.well_high;
        let q = self.well_low * self.well_high;
        let a = self.amplitude;
        let coeffs = [q * q, -s * q, (s * s + 2.0 * q) / 3.0, -s / 2.0, 1.0 / 5.0];
        let mut val = 0.0;
        let mut du = 0.0;
        let mut dv = 0.0;
        // S_k = sum_{i+j=k-1} u^i v^j and its endpoint partials
        for (k, c) in coeffs.iter().enumerate().map(|(k, c)| (k + 1, c)) {
            for i in 0..k {
                let j = k - 1 - i;
                let ui = u.powi(i as i32);
                let vj = v.powi(j as i32);
                val += c * ui * vj;
                if i >= 1 {
                    du += c * i as f64 * u.powi(i as i32 - 1) * vj;
                }
                if j >= 1 {
                    dv += c * j as f64 * ui * v.powi(j as i32 - 1);
                }
            }
        }
        (a * val, a * du, a * dv)
    }

    /// Signed integral of W^{(p-1)/p} over the value segment [u, v].
    /// This is Wcal(v) - Wcal(u) for any antiderivative Wcal.
    pub fn wcal_segment(&self, u: f64, v: f64, p: f64, abs_tol: f64) -> f64 {
        if u == v {
            return 0.0;
        }
        let e = (p - 1.0) / p;
        quad::integrate(|t| self.eval(t).powf(e), u, v, abs_tol).value
    }
}

/// The exponent p of the gradient term. Valid range is (2, 3); the classical
/// p = 2 theory is reachable only through the cross-check constructor so it
/// cannot be picked by accident.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PExponent {
    value: f64,
    cross_check: bool,
}

impl PExponent {
    pub fn new(p: f64) -> Result<Self, PotentialError> {
        if !(p > 2.0 && p < 3.0) {
            return Err(PotentialError::ExponentOutOfRange(p));
        }
        Ok(Self { value: p, cross_check: false })
    }

    /// p = 2 for comparisons against the unweighted classical theory.
    pub fn cross_check() -> Self {
        Self { value: 2.0, cross_check: true }
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn is_cross_check(&self) -> bool {
        self.cross_check
    }

    /// Bulk weight exponent (p-2)/(p-1), in [0, 1/2) over the valid range.
    #[inline]
    pub fn bulk_weight_exponent(&self) -> f64 {
        (self.value - 2.0) / (self.value - 1.0)
    }

    /// Gradient weight exponent 2-p, in (-1, 0].
    #[inline]
    pub fn grad_weight_exponent(&self) -> f64 {
        2.0 - self.value
    }
}

/// Clamp level for the truncation argument. Requires m at least as large as
/// every well magnitude of the potentials it will be used with; beyond the
/// outer wells the quartic is increasing, so pointwise W(clamp(t)) <= W(t).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TruncationLevel {
    m: f64,
}

impl TruncationLevel {
    pub fn new(m: f64, potentials: &[&DoubleWell]) -> Result<Self, PotentialError> {
        let need = potentials
            .iter()
            .flat_map(|w| [w.well_low.abs(), w.well_high.abs()])
            .fold(0.0_f64, f64::max);
        if !(m >= need) {
            return Err(PotentialError::TruncationTooSmall { m, need });
        }
        Ok(Self { m })
    }

    #[inline]
    pub fn level(&self) -> f64 {
        self.m
    }

    #[inline]
    pub fn clamp(&self, t: f64) -> f64 {
        t.clamp(-self.m, self.m)
    }

    /// Whether clamping to [-m, m] can never raise the exact segment average
    /// of W. This needs min(W(-m), W(m)) >= max over [-m, m] of W; for
    /// symmetric quartic wells at +-w that is m >= sqrt(2) w. The discrete
    /// bulk term uses segment averages, so energy monotonicity under
    /// truncation is guaranteed only for levels passing this check; the
    /// pointwise terms (gradient, trace, total variation bound) are monotone
    /// for every valid level.
    pub fn bulk_average_monotone(&self, w: &DoubleWell) -> bool {
        let m = self.m;
        // interior maximum of the quartic over [-m, m]: critical points are
        // the wells and the midpoint barrier
        let mut inner_max = f64::max(w.eval(-m), w.eval(m));
        let mid = 0.5 * (w.well_low + w.well_high);
        for c in [w.well_low, w.well_high, mid] {
            if c >= -m && c <= m {
                inner_max = inner_max.max(w.eval(c));
            }
        }
        f64::min(w.eval(-m), w.eval(m)) >= inner_max - 1e-15 * inner_max.abs()
    }
}

/// c_p = p / (p-1)^{(p-1)/p}. Pure formula; callers gate the range.
pub fn constant_c_p(p: f64) -> f64 {
    assert!(p > 1.0, "c_p needs p > 1, got {p}");
    p / (p - 1.0).powf((p - 1.0) / p)
}

/// Wcal(t) = int_{well_low}^t W(r)^{(p-1)/p} dr with achieved-tolerance reporting.
pub fn antiderivative_w(
    w: &DoubleWell,
    p: &PExponent,
    t: f64,
    abs_tol: f64,
) -> Result<f64, PotentialError> {
    let e = (p.value() - 1.0) / p.value();
    let r = quad::integrate(|r| w.eval(r).powf(e), w.well_low, t, abs_tol);
    if !r.converged {
        return Err(PotentialError::QuadratureTolerance { requested: abs_tol, achieved: r.error });
    }
    Ok(r.value)
}

/// sigma_p = c_p * (Wcal(well_high) - Wcal(well_low)).
pub fn constant_sigma_p(w: &DoubleWell, p: &PExponent, abs_tol: f64) -> Result<f64, PotentialError> {
    let span = antiderivative_w(w, p, w.well_high, abs_tol)?;
    Ok(constant_c_p(p.value()) * span)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c_p_reference_values() {
        assert_eq!(constant_c_p(2.0), 2.0, "c_2 is exactly 2");
        assert!((constant_c_p(2.5) - 1.9601).abs() < 1e-4);
        assert!((constant_c_p(3.0) - 1.8899).abs() < 1e-4);
    }

    #[test]
    fn c_p_strictly_decreasing_on_2_3() {
        let mut prev = constant_c_p(2.0);
        for k in 1..=100 {
            let p = 2.0 + (k as f64) / 100.0;
            let c = constant_c_p(p);
            assert!(c < prev, "c_p must strictly decrease, failed at p = {p}");
            prev = c;
        }
    }

    #[test]
    fn sigma_2_is_eight_thirds() {
        // W = (1-t^2)^2, sqrt(W) = 1-t^2 on [-1,1], integral 4/3, c_2 = 2
        let w = DoubleWell::quartic_pm1();
        let p = PExponent::cross_check();
        let sigma = constant_sigma_p(&w, &p, 1e-12).unwrap();
        assert!((sigma - 8.0 / 3.0).abs() < 1e-10, "sigma_2 = {sigma}");
    }

    #[test]
    fn wcal_midpoint_value_p2() {
        // int_{-1}^{0} (1-t^2) dt = 2/3
        let w = DoubleWell::quartic_pm1();
        let p = PExponent::cross_check();
        let v = antiderivative_w(&w, &p, 0.0, 1e-12).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn segment_average_matches_quadrature() {
        let w = DoubleWell::new(-1.0, 1.3, 2.5).unwrap();
        for (u, v) in [(-0.7, 0.9), (1.3, 1.3001), (-2.0, 2.0), (0.1, 0.1)] {
            let exact = w.segment_average(u, v);
            let by_quad = if u == v {
                w.eval(u)
            } else {
                quad::integrate(|t| w.eval(t), u, v, 1e-13).value / (v - u)
            };
            assert!(
                (exact - by_quad).abs() <= 1e-10 * (1.0 + by_quad.abs()),
                "segment average mismatch on [{u},{v}]: {exact} vs {by_quad}"
            );
        }
    }

    #[test]
    fn segment_average_at_a_point_is_the_value() {
        let w = DoubleWell::quartic_pm1();
        assert_eq!(w.segment_average(0.0, 0.0), w.eval(0.0));
        assert!((w.segment_average(0.4, 0.4) - w.eval(0.4)).abs() < 1e-15);
    }

    #[test]
    fn segment_average_grad_matches_finite_differences() {
        let w = DoubleWell::new(-0.8, 1.2, 3.0).unwrap();
        let h = 1e-6;
        for (u, v) in [(-0.5, 0.9), (1.2, -0.3), (0.2, 0.2)] {
            let (a, du, dv) = w.segment_average_grad(u, v);
            assert!((a - w.segment_average(u, v)).abs() < 1e-12 * (1.0 + a.abs()));
            let fd_u = (w.segment_average(u + h, v) - w.segment_average(u - h, v)) / (2.0 * h);
            let fd_v = (w.segment_average(u, v + h) - w.segment_average(u, v - h)) / (2.0 * h);
            assert!((du - fd_u).abs() < 1e-5 * (1.0 + fd_u.abs()), "du {du} vs fd {fd_u}");
            assert!((dv - fd_v).abs() < 1e-5 * (1.0 + fd_v.abs()), "dv {dv} vs fd {fd_v}");
        }
        // at a point both partials are half the derivative
        let (_, du, dv) = w.segment_average_grad(0.3, 0.3);
        assert!((du + dv - w.deriv(0.3)).abs() < 1e-12);
        assert!((du - dv).abs() < 1e-12);
    }

    #[test]
    fn sigma_scales_with_amplitude_to_the_q_power() {
        // Wcal picks up amplitude^{(p-1)/p}
        let p = PExponent::new(2.5).unwrap();
        let w1 = DoubleWell::quartic_pm1();
        let wa = DoubleWell::quartic_pm1_scaled(7.3).unwrap();
        let s1 = constant_sigma_p(&w1, &p, 1e-12).unwrap();
        let sa = constant_sigma_p(&wa, &p, 1e-12).unwrap();
        let predicted = s1 * 7.3_f64.powf((2.5 - 1.0) / 2.5);
        assert!((sa - predicted).abs() < 1e-10 * predicted, "sa = {sa}, predicted {predicted}");
    }

    #[test]
    fn exponent_gate() {
        assert!(PExponent::new(2.0).is_err());
        assert!(PExponent::new(3.0).is_err());
        assert!(PExponent::new(3.1).is_err());
        assert!(PExponent::new(2.5).is_ok());
        assert_eq!(PExponent::cross_check().value(), 2.0);
    }

    #[test]
    fn truncation_level_gate_and_bulk_condition() {
        let w = DoubleWell::quartic_pm1();
        assert!(TruncationLevel::new(0.9, &[&w]).is_err());
        let t_low = TruncationLevel::new(1.05, &[&w]).unwrap();
        let t_ok = TruncationLevel::new(1.5, &[&w]).unwrap();
        // below sqrt(2) the clamp can raise a segment average of W
        assert!(!t_low.bulk_average_monotone(&w));
        assert!(t_ok.bulk_average_monotone(&w));
    }

    #[test]
    fn clamp_raising_counterexample_exists_below_sqrt2() {
        // the guard in bulk_average_monotone is not paranoia: clamping
        // [-1, 1.1] to [-1, 1.05] raises the average of W for wells +-1
        let w = DoubleWell::quartic_pm1();
        let lvl = TruncationLevel::new(1.05, &[&w]).unwrap();
        let before = w.segment_average(-1.0, 1.1);
        let after = w.segment_average(lvl.clamp(-1.0), lvl.clamp(1.1));
        assert!(after > before, "expected the clamp to raise the average: {after} vs {before}");
    }
}
