//! Output heads turning a branch's raw decoder outputs into an occupancy probability.

use serde::{Deserialize, Serialize};

use crate::nn::{sigmoid, softplus, Real};

/// Lower bound of the Gaussian scale `s`.
pub const EPS_SCALE: f64 = 0.01;
/// Lower bound of every Gaussian radius.
pub const EPS_RADIUS: f64 = 1e-3;
/// Initial radius targeted by the final-layer bias.
pub const INIT_RADIUS: f64 = 0.25;
/// The exponent is clamped here so single-precision values never underflow to zero.
const MIN_EXPONENT: f64 = -80.0;

/// Local point distribution predicted per branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    /// Scaled anisotropic Gaussian `(s, c, r) ∈ R⁷`.
    Gaussian,
    /// Scaled isotropic Gaussian `(s, c, r) ∈ R⁵`.
    Sphere,
    /// A single sigmoid probability per point.
    Point,
}

impl HeadKind {
    pub fn raw_len(self) -> usize {
        match self {
            HeadKind::Gaussian => 7,
            HeadKind::Sphere => 5,
            HeadKind::Point => 1,
        }
    }

    /// Offsets within a branch's raw block whose bias initializes the radius.
    pub fn radius_slots(self) -> &'static [usize] {
        match self {
            HeadKind::Gaussian => &[4, 5, 6],
            HeadKind::Sphere => &[4],
            HeadKind::Point => &[],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Gaussian => "gaussian",
            HeadKind::Sphere => "sphere",
            HeadKind::Point => "point",
        }
    }
}

impl std::str::FromStr for HeadKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "gaussian" => Ok(HeadKind::Gaussian),
            "sphere" => Ok(HeadKind::Sphere),
            "point" => Ok(HeadKind::Point),
            _ => Err(crate::Error::InvalidInput(format!("unknown head kind `{s}`"))),
        }
    }
}

/// One branch's Gaussian: scale, center and per-axis radii.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianParams<F> {
    pub s: F,
    pub c: [F; 3],
    pub r: [F; 3],
}

#[inline]
fn scale_map<F: Real>(raw: F) -> F {
    F::c(EPS_SCALE) + F::c(1.0 - EPS_SCALE) * sigmoid(raw)
}

#[inline]
fn radius_map<F: Real>(raw: F) -> F {
    F::c(EPS_RADIUS) + softplus(raw)
}

/// Maps a raw block (7 values for gaussian, 5 for sphere) to constrained parameters.
pub fn map_params<F: Real>(kind: HeadKind, raw: &[F]) -> GaussianParams<F> {
    match kind {
        HeadKind::Gaussian => GaussianParams {
            s: scale_map(raw[0]),
            c: [raw[1], raw[2], raw[3]],
            r: [radius_map(raw[4]), radius_map(raw[5]), radius_map(raw[6])],
        },
        HeadKind::Sphere => {
            let r = radius_map(raw[4]);
            GaussianParams {
                s: scale_map(raw[0]),
                c: [raw[1], raw[2], raw[3]],
                r: [r; 3],
            }
        }
        HeadKind::Point => panic!("point head has no Gaussian parameters"),
    }
}

#[inline]
#[allow(clippy::needless_range_loop)]
fn exponent<F: Real>(theta: &GaussianParams<F>, p: [F; 3]) -> F {
    let mut q = F::zero();
    for d in 0..3 {
        let t = theta.c[d] - p[d];
        q -= t * t / (F::c(2.0) * theta.r[d] * theta.r[d]);
    }
    q
}

/// `s · exp(Σ_d −(c_d − p_d)² / (2 r_d²))`.
pub fn gaussian_prob<F: Real>(theta: &GaussianParams<F>, p: [F; 3]) -> F {
    theta.s * exponent(theta, p).max(F::c(MIN_EXPONENT)).exp()
}

/// Probability of `p` under one branch's raw outputs.
pub fn head_eval<F: Real>(kind: HeadKind, raw: &[F], p: [F; 3]) -> F {
    match kind {
        HeadKind::Point => sigmoid(raw[0]),
        _ => gaussian_prob(&map_params(kind, raw), p),
    }
}

/// Writes `df · ∂f/∂raw` into `draw` given the forward value `f`.
pub fn head_backward<F: Real>(kind: HeadKind, raw: &[F], p: [F; 3], f: F, df: F, draw: &mut [F]) {
    if kind == HeadKind::Point {
        draw[0] = df * f * (F::one() - f);
        return;
    }
    let theta = map_params(kind, raw);
    let q = exponent(&theta, p);
    let clamped = q < F::c(MIN_EXPONENT);
    let e = q.max(F::c(MIN_EXPONENT)).exp();
    let sg = sigmoid(raw[0]);
    draw[0] = df * e * F::c(1.0 - EPS_SCALE) * sg * (F::one() - sg);
    if clamped {
        for v in &mut draw[1..] {
            *v = F::zero();
        }
        return;
    }
    let mut dr = [F::zero(); 3];
    for d in 0..3 {
        let t = theta.c[d] - p[d];
        let r2 = theta.r[d] * theta.r[d];
        draw[1 + d] = -df * f * t / r2;
        dr[d] = df * f * t * t / (r2 * theta.r[d]);
    }
    match kind {
        HeadKind::Gaussian => {
            for d in 0..3 {
                draw[4 + d] = dr[d] * sigmoid(raw[4 + d]);
            }
        }
        HeadKind::Sphere => draw[4] = (dr[0] + dr[1] + dr[2]) * sigmoid(raw[4]),
        HeadKind::Point => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw_from(theta_s: f64, c: [f64; 3], r: [f64; 3]) -> Vec<f64> {
        // inverse maps, for constructing heads with known parameters
        let s = (theta_s - EPS_SCALE) / (1.0 - EPS_SCALE);
        let mut raw = vec![(s / (1.0 - s)).ln()];
        raw.extend(c);
        raw.extend(r.iter().map(|&x| crate::nn::softplus_inv(x - EPS_RADIUS)));
        raw
    }

    #[test]
    fn peak_value_is_scale() {
        let raw = raw_from(0.7, [0.1, -0.2, 0.05], [0.3, 0.2, 0.1]);
        let f = head_eval(HeadKind::Gaussian, &raw, [0.1, -0.2, 0.05]);
        assert!((f - 0.7).abs() < 1e-12);
    }

    #[test]
    fn unit_gaussian_at_unit_offset() {
        let theta = GaussianParams {
            s: 1.0,
            c: [0.0; 3],
            r: [1.0; 3],
        };
        let f = gaussian_prob(&theta, [1.0, 0.0, 0.0]);
        assert!((f - (-0.5f64).exp()).abs() < 1e-15);
        assert!((f - 0.606531).abs() < 1e-6);
    }

    #[test]
    fn scale_map_limits() {
        assert!((scale_map(60.0f64) - 1.0).abs() < 1e-15);
        assert!((scale_map(-60.0f64) - EPS_SCALE).abs() < 1e-15);
        assert!(radius_map(-60.0f64) >= EPS_RADIUS);
    }

    fn check_grad(kind: HeadKind, raw: &[f64], p: [f64; 3]) {
        let f = head_eval(kind, raw, p);
        let mut draw = vec![0.0; raw.len()];
        head_backward(kind, raw, p, f, 1.0, &mut draw);
        for k in 0..raw.len() {
            let h = 1e-6;
            let mut a = raw.to_vec();
            a[k] += h;
            let mut b = raw.to_vec();
            b[k] -= h;
            let fd = (head_eval(kind, &a, p) - head_eval(kind, &b, p)) / (2.0 * h);
            assert!(
                (fd - draw[k]).abs() < 1e-7 * (1.0 + fd.abs()),
                "{kind:?} slot {k}: {fd} vs {}",
                draw[k]
            );
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        check_grad(
            HeadKind::Gaussian,
            &[0.3, 0.1, -0.1, 0.2, -1.0, -0.5, -1.5],
            [0.05, 0.1, 0.0],
        );
        check_grad(HeadKind::Sphere, &[-0.2, 0.1, -0.1, 0.2, -1.0], [0.2, -0.1, 0.1]);
        check_grad(HeadKind::Point, &[0.4], [0.0; 3]);
    }

    fn arb_raw() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-4.0f64..4.0, 7)
    }

    fn arb_point() -> impl Strategy<Value = [f64; 3]> {
        prop::array::uniform3(-0.6f64..0.6)
    }

    proptest! {
        #[test]
        fn field_range_is_unit_interval(raw in arb_raw(), p in arb_point()) {
            for kind in [HeadKind::Gaussian, HeadKind::Sphere] {
                let f = head_eval(kind, &raw, p);
                prop_assert!(f > 0.0 && f <= 1.0);
                let th = map_params(kind, &raw);
                prop_assert!(th.s > EPS_SCALE && th.s <= 1.0);
                prop_assert!(th.r.iter().all(|&r| r >= EPS_RADIUS));
            }
            let f = head_eval(HeadKind::Point, &raw, p);
            prop_assert!(f > 0.0 && f < 1.0);
        }

        #[test]
        fn symmetric_about_center(raw in arb_raw(), p in arb_point()) {
            let th = map_params(HeadKind::Gaussian, &raw);
            let mirror = [2.0 * th.c[0] - p[0], 2.0 * th.c[1] - p[1], 2.0 * th.c[2] - p[2]];
            let (a, b) = (gaussian_prob(&th, p), gaussian_prob(&th, mirror));
            prop_assert!((a - b).abs() <= 1e-12 * a.max(b).max(1e-300));
        }

        #[test]
        fn peak_at_center(raw in arb_raw(), delta in arb_point()) {
            let th = map_params(HeadKind::Gaussian, &raw);
            let moved = [th.c[0] + delta[0], th.c[1] + delta[1], th.c[2] + delta[2]];
            prop_assert!(gaussian_prob(&th, th.c) >= gaussian_prob(&th, moved));
        }

        #[test]
        fn monotone_along_each_axis(raw in arb_raw(), axis in 0usize..3, a in 0.0f64..0.3, b in 0.0f64..0.3) {
            let th = map_params(HeadKind::Gaussian, &raw);
            let (near, far) = if a <= b { (a, b) } else { (b, a) };
            let mut pn = th.c;
            pn[axis] += near;
            let mut pf = th.c;
            pf[axis] += far;
            prop_assert!(gaussian_prob(&th, pn) >= gaussian_prob(&th, pf));
        }
    }
}
