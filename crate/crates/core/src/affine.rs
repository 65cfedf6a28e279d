//! Decomposed affine transforms: `A = R·S·H` with Euler-angle rotation,
//! diagonal scaling and unit upper-triangular shear, plus the component
//! masks that switch parts of the decomposition off.

use std::fmt;
use std::str::FromStr;

use crate::{Error, Mat3, Result, Vec3};

/// Below this `|det|` a matrix is treated as singular.
pub const SINGULAR_DET: f64 = 1e-12;
/// Below this `|cos θy|` the Euler extraction is in gimbal lock.
pub const GIMBAL_COS: f64 = 1e-9;

/// Which of rotation, translation, scaling and shearing are enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CombinationMask {
    pub r_on: bool,
    pub t_on: bool,
    pub s_on: bool,
    pub h_on: bool,
}

impl CombinationMask {
    pub const T: Self = Self::new(false, true, false, false);
    pub const RT: Self = Self::new(true, true, false, false);
    pub const TS: Self = Self::new(false, true, true, false);
    pub const TH: Self = Self::new(false, true, false, true);
    pub const RTS: Self = Self::new(true, true, true, false);
    pub const RTH: Self = Self::new(true, true, false, true);
    pub const TSH: Self = Self::new(false, true, true, true);
    pub const RTSH: Self = Self::new(true, true, true, true);

    /// The eight masks with translation enabled.
    pub const LEGAL: [Self; 8] = [
        Self::T,
        Self::RT,
        Self::TS,
        Self::TH,
        Self::RTS,
        Self::RTH,
        Self::TSH,
        Self::RTSH,
    ];

    pub const fn new(r_on: bool, t_on: bool, s_on: bool, h_on: bool) -> Self {
        CombinationMask {
            r_on,
            t_on,
            s_on,
            h_on,
        }
    }

    /// Packed R,T,S,H flags, R in the most significant of the four bits.
    pub fn bits(self) -> u8 {
        (self.r_on as u8) << 3 | (self.t_on as u8) << 2 | (self.s_on as u8) << 1 | self.h_on as u8
    }

    pub fn from_bits(bits: u8) -> Option<Self> {
        (bits < 16).then(|| {
            Self::new(bits & 8 != 0, bits & 4 != 0, bits & 2 != 0, bits & 1 != 0)
        })
    }

    /// Four-character flag string in R,T,S,H order, e.g. `"1011"`.
    pub fn code(self) -> String {
        format!("{:04b}", self.bits())
    }

    /// Letters of the enabled components, e.g. `"RSH"`.
    pub fn name(self) -> String {
        [(self.r_on, 'R'), (self.t_on, 'T'), (self.s_on, 'S'), (self.h_on, 'H')]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, c)| *c)
            .collect()
    }

    pub fn enabled_count(self) -> u32 {
        self.bits().count_ones()
    }

    pub fn is_legal(self) -> bool {
        self.t_on
    }
}

impl fmt::Display for CombinationMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = self.name();
        f.write_str(if name.is_empty() { "-" } else { &name })
    }
}

impl FromStr for CombinationMask {
    type Err = Error;

    /// Accepts either a name (`"RTS"`) or a 4-bit code (`"1110"`).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.len() == 4 && s.chars().all(|c| c == '0' || c == '1') {
            return Ok(Self::from_bits(u8::from_str_radix(s, 2).unwrap()).unwrap());
        }
        let mut m = Self::new(false, false, false, false);
        for c in s.chars() {
            let flag = match c.to_ascii_uppercase() {
                'R' => &mut m.r_on,
                'T' => &mut m.t_on,
                'S' => &mut m.s_on,
                'H' => &mut m.h_on,
                _ => return Err(Error::Config(format!("bad combination mask {s:?}"))),
            };
            *flag = true;
        }
        Ok(m)
    }
}

/// Per-node motion in decomposed form. Disabled components hold zeros.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TransformParams {
    /// `(θx, θy, θz)` in radians, applied as `Rz·Ry·Rx`.
    pub euler: Vec3,
    pub translation: Vec3,
    /// `(sx − 1, sy − 1, sz − 1)`.
    pub scale_resid: Vec3,
    /// `(hxy, hxz, hyz)`.
    pub shear: Vec3,
}

impl TransformParams {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn is_finite(&self) -> bool {
        [self.euler, self.translation, self.scale_resid, self.shear]
            .iter()
            .all(|v| v.iter().all(|c| c.is_finite()))
    }
}

pub fn rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// `Rz(θz)·Ry(θy)·Rx(θx)`.
pub fn rotation_from_euler(euler: &Vec3) -> Mat3 {
    rot_z(euler.z) * rot_y(euler.y) * rot_x(euler.x)
}

pub fn scale_matrix(scale_resid: &Vec3) -> Mat3 {
    Mat3::from_diagonal(&scale_resid.add_scalar(1.0))
}

pub fn shear_matrix(shear: &Vec3) -> Mat3 {
    Mat3::new(1.0, shear.x, shear.y, 0.0, 1.0, shear.z, 0.0, 0.0, 1.0)
}

/// Linear part `R·S·H` of the transform.
pub fn compose(params: &TransformParams) -> Result<Mat3> {
    if let Some(&s) = params.scale_resid.iter().find(|&&s| 1.0 + s <= 0.0) {
        return Err(Error::NonPositiveScale(1.0 + s));
    }
    Ok(compose_unchecked(params))
}

pub(crate) fn compose_unchecked(params: &TransformParams) -> Mat3 {
    rotation_from_euler(&params.euler) * scale_matrix(&params.scale_resid) * shear_matrix(&params.shear)
}

/// Partial derivatives of `R·S·H` with respect to
/// `[θx, θy, θz, s'x, s'y, s'z, hxy, hxz, hyz]`.
pub(crate) fn compose_partials(params: &TransformParams) -> (Mat3, [Mat3; 9]) {
    let (sx, cx) = params.euler.x.sin_cos();
    let (sy, cy) = params.euler.y.sin_cos();
    let (sz, cz) = params.euler.z.sin_cos();
    let rx = Mat3::new(1.0, 0.0, 0.0, 0.0, cx, -sx, 0.0, sx, cx);
    let ry = Mat3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
    let rz = Mat3::new(cz, -sz, 0.0, sz, cz, 0.0, 0.0, 0.0, 1.0);
    let drx = Mat3::new(0.0, 0.0, 0.0, 0.0, -sx, -cx, 0.0, cx, -sx);
    let dry = Mat3::new(-sy, 0.0, cy, 0.0, 0.0, 0.0, -cy, 0.0, -sy);
    let drz = Mat3::new(-sz, -cz, 0.0, cz, -sz, 0.0, 0.0, 0.0, 0.0);
    let s = scale_matrix(&params.scale_resid);
    let h = shear_matrix(&params.shear);
    let sh = s * h;
    let r = rz * ry * rx;
    let rs = r * s;
    let unit = |i: usize, j: usize| {
        let mut m = Mat3::zeros();
        m[(i, j)] = 1.0;
        m
    };
    let a = r * sh;
    let d = [
        rz * ry * drx * sh,
        rz * dry * rx * sh,
        drz * ry * rx * sh,
        r * unit(0, 0) * h,
        r * unit(1, 1) * h,
        r * unit(2, 2) * h,
        rs * unit(0, 1),
        rs * unit(0, 2),
        rs * unit(1, 2),
    ];
    (a, d)
}

/// Output of [`decompose`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    /// Translation is always zero; `A` carries no translation.
    pub params: TransformParams,
    /// Set when `|cos θy| < 1e-9`; `θx` is then pinned to 0 and `θz` carries
    /// the remaining rotation about the collapsed axis.
    pub gimbal_lock: bool,
}

/// Factors `A = R·S·H` through an orthogonal × upper-triangular
/// factorization with positive diagonal.
pub fn decompose(a: &Mat3) -> Result<Decomposition> {
    let det = a.determinant();
    if !det.is_finite() || det <= 0.0 || det.abs() < SINGULAR_DET {
        return Err(Error::SingularMatrix(det));
    }

    // Gram-Schmidt with a second orthogonalization pass.
    let cols = [a.column(0).into_owned(), a.column(1).into_owned(), a.column(2).into_owned()];
    let mut q = [Vec3::zeros(); 3];
    let mut u = Mat3::zeros();
    for j in 0..3 {
        let mut v = cols[j];
        for _pass in 0..2 {
            for i in 0..j {
                let proj = q[i].dot(&v);
                u[(i, j)] += proj;
                v -= q[i] * proj;
            }
        }
        let norm = v.norm();
        if norm <= 0.0 {
            return Err(Error::SingularMatrix(det));
        }
        u[(j, j)] = norm;
        q[j] = v / norm;
    }
    let r = Mat3::from_columns(&q);

    let scale = Vec3::new(u[(0, 0)], u[(1, 1)], u[(2, 2)]);
    let shear = Vec3::new(u[(0, 1)] / scale.x, u[(0, 2)] / scale.x, u[(1, 2)] / scale.y);
    let (euler, gimbal_lock) = euler_from_rotation(&r);

    Ok(Decomposition {
        params: TransformParams {
            euler,
            translation: Vec3::zeros(),
            scale_resid: scale.add_scalar(-1.0),
            shear,
        },
        gimbal_lock,
    })
}

/// Principal-branch Euler angles of a rotation built as `Rz·Ry·Rx`,
/// with `θy ∈ [−π/2, π/2]`.
pub fn euler_from_rotation(r: &Mat3) -> (Vec3, bool) {
    let sy = (-r[(2, 0)]).clamp(-1.0, 1.0);
    let theta_y = sy.asin();
    if theta_y.cos().abs() < GIMBAL_COS {
        let theta_z = (-r[(0, 1)]).atan2(r[(1, 1)]);
        (Vec3::new(0.0, theta_y, theta_z), true)
    } else {
        let theta_x = r[(2, 1)].atan2(r[(2, 2)]);
        let theta_z = r[(1, 0)].atan2(r[(0, 0)]);
        (Vec3::new(theta_x, theta_y, theta_z), false)
    }
}

/// Replaces disabled components with their identity encodings.
pub fn mask_params(params: &TransformParams, mask: CombinationMask) -> TransformParams {
    TransformParams {
        euler: if mask.r_on { params.euler } else { Vec3::zeros() },
        translation: if mask.t_on { params.translation } else { Vec3::zeros() },
        scale_resid: if mask.s_on { params.scale_resid } else { Vec3::zeros() },
        shear: if mask.h_on { params.shear } else { Vec3::zeros() },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn matmul(a: &Mat3, b: &Mat3) -> Mat3 {
        let mut out = Mat3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                out[(i, j)] = (0..3).map(|k| a[(i, k)] * b[(k, j)]).sum();
            }
        }
        out
    }

    #[test]
    fn mask_codes_and_names() {
        let rsh = CombinationMask::new(true, false, true, true);
        assert_eq!(rsh.code(), "1011");
        assert_eq!(rsh.name(), "RSH");
        assert_eq!("1011".parse::<CombinationMask>().unwrap(), rsh);
        assert_eq!("RSH".parse::<CombinationMask>().unwrap(), rsh);
        let names: Vec<String> = CombinationMask::LEGAL.iter().map(|m| m.name()).collect();
        assert_eq!(names, ["T", "RT", "TS", "TH", "RTS", "RTH", "TSH", "RTSH"]);
        let legal: Vec<_> = (0..16u8)
            .filter_map(CombinationMask::from_bits)
            .filter(|m| m.is_legal())
            .collect();
        assert_eq!(legal.len(), 8);
        for m in legal {
            assert!(CombinationMask::LEGAL.contains(&m));
        }
    }

    #[test]
    fn euler_identity_and_quarter_turn() {
        assert_eq!(rotation_from_euler(&Vec3::zeros()), Mat3::identity());
        let r = rotation_from_euler(&Vec3::new(0.0, 0.0, FRAC_PI_2));
        let expect = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((r - expect).norm() < 1e-15);
    }

    #[test]
    fn compose_identity_and_scale() {
        assert_eq!(compose(&TransformParams::identity()).unwrap(), Mat3::identity());
        let p = TransformParams {
            scale_resid: Vec3::new(1.0, 0.0, 0.0),
            ..Default::default()
        };
        assert_eq!(compose(&p).unwrap(), Mat3::from_diagonal(&Vec3::new(2.0, 1.0, 1.0)));
        let bad = TransformParams {
            scale_resid: Vec3::new(0.0, -1.0, 0.0),
            ..Default::default()
        };
        assert!(matches!(compose(&bad), Err(Error::NonPositiveScale(_))));
    }

    #[test]
    fn decompose_identity() {
        let d = decompose(&Mat3::identity()).unwrap();
        assert_eq!(d.params, TransformParams::identity());
        assert!(!d.gimbal_lock);
    }

    #[test]
    fn decompose_rejects_reflection() {
        let m = Mat3::from_diagonal(&Vec3::new(-1.0, 1.0, 1.0));
        assert!(matches!(decompose(&m), Err(Error::SingularMatrix(_))));
        assert!(matches!(decompose(&Mat3::zeros()), Err(Error::SingularMatrix(_))));
    }

    #[test]
    fn gimbal_lock_is_flagged_and_reconstructs() {
        let p = TransformParams {
            euler: Vec3::new(0.3, FRAC_PI_2, -0.2),
            scale_resid: Vec3::new(0.1, -0.2, 0.3),
            shear: Vec3::new(0.05, -0.1, 0.2),
            ..Default::default()
        };
        let a = compose(&p).unwrap();
        let d = decompose(&a).unwrap();
        assert!(d.gimbal_lock);
        assert_eq!(d.params.euler.x, 0.0);
        assert!((compose(&d.params).unwrap() - a).norm() < 1e-9);
    }

    #[test]
    fn masked_rigid_transform_matches_hand_rolled() {
        let p = TransformParams {
            euler: Vec3::new(0.4, -0.3, 1.1),
            translation: Vec3::new(0.5, -1.0, 2.0),
            scale_resid: Vec3::new(0.3, 0.2, -0.1),
            shear: Vec3::new(0.2, 0.1, -0.3),
        };
        let m = mask_params(&p, CombinationMask::RT);
        let x = Vec3::new(0.7, -0.2, 1.3);
        let got = compose(&m).unwrap() * x + m.translation;
        // R x + t with each elementary rotation applied in turn
        let (sx, cx) = 0.4f64.sin_cos();
        let (sy, cy) = (-0.3f64).sin_cos();
        let (sz, cz) = 1.1f64.sin_cos();
        let v1 = Vec3::new(x.x, cx * x.y - sx * x.z, sx * x.y + cx * x.z);
        let v2 = Vec3::new(cy * v1.x + sy * v1.z, v1.y, -sy * v1.x + cy * v1.z);
        let v3 = Vec3::new(cz * v2.x - sz * v2.y, sz * v2.x + cz * v2.y, v2.z);
        let expect = v3 + Vec3::new(0.5, -1.0, 2.0);
        assert!((got - expect).norm() < 1e-12);
    }

    #[test]
    fn t_only_mask_gives_identity_linear_part() {
        let p = TransformParams {
            euler: Vec3::new(0.4, -0.3, 1.1),
            translation: Vec3::new(0.5, -1.0, 2.0),
            scale_resid: Vec3::new(0.3, 0.2, -0.1),
            shear: Vec3::new(0.2, 0.1, -0.3),
        };
        let m = mask_params(&p, CombinationMask::T);
        assert_eq!(m.translation, p.translation);
        assert_eq!(compose(&m).unwrap(), Mat3::identity());
        assert_eq!(mask_params(&p, CombinationMask::RTSH), p);
    }

    #[test]
    fn partials_match_finite_differences() {
        let p = TransformParams {
            euler: Vec3::new(0.4, -0.3, 1.1),
            translation: Vec3::zeros(),
            scale_resid: Vec3::new(0.3, 0.2, -0.1),
            shear: Vec3::new(0.2, 0.1, -0.3),
        };
        let (a, d) = compose_partials(&p);
        assert!((a - compose(&p).unwrap()).norm() < 1e-14);
        let h = 1e-6;
        for k in 0..9 {
            let bump = |delta: f64| {
                let mut q = p;
                let slot = match k / 3 {
                    0 => &mut q.euler,
                    1 => &mut q.scale_resid,
                    _ => &mut q.shear,
                };
                slot[k % 3] += delta;
                compose(&q).unwrap()
            };
            let fd = (bump(h) - bump(-h)) / (2.0 * h);
            assert!((fd - d[k]).norm() < 1e-8, "partial {k}");
        }
    }

    fn params_strategy() -> impl Strategy<Value = TransformParams> {
        (
            prop::array::uniform3(-3.1f64..3.1),
            -1.4f64..1.4,
            prop::array::uniform3(0.5f64..2.0),
            prop::array::uniform3(-1.0f64..1.0),
        )
            .prop_map(|(e, ey, s, h)| TransformParams {
                euler: Vec3::new(e[0], ey, e[2]),
                translation: Vec3::zeros(),
                scale_resid: Vec3::new(s[0] - 1.0, s[1] - 1.0, s[2] - 1.0),
                shear: Vec3::new(h[0], h[1], h[2]),
            })
    }

    proptest! {
        #[test]
        fn rotation_is_special_orthogonal(e in prop::array::uniform3(-10.0f64..10.0)) {
            let r = rotation_from_euler(&Vec3::new(e[0], e[1], e[2]));
            prop_assert!((r.transpose() * r - Mat3::identity()).norm() < 1e-12);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn compose_is_product_of_factors(p in params_strategy()) {
            let explicit = matmul(
                &matmul(&rotation_from_euler(&p.euler), &scale_matrix(&p.scale_resid)),
                &shear_matrix(&p.shear),
            );
            prop_assert!((compose(&p).unwrap() - explicit).norm() < 1e-12);
        }

        #[test]
        fn decompose_recovers_params(p in params_strategy()) {
            let a = compose(&p).unwrap();
            let d = decompose(&a).unwrap();
            prop_assert!(!d.gimbal_lock);
            prop_assert!((compose(&d.params).unwrap() - a).norm() < 1e-9);
            prop_assert!((d.params.euler - p.euler).norm() < 1e-9);
            prop_assert!((d.params.scale_resid - p.scale_resid).norm() < 1e-9);
            prop_assert!((d.params.shear - p.shear).norm() < 1e-9);
        }

        #[test]
        fn masking_is_idempotent(p in params_strategy(), bits in 0u8..16) {
            let m = CombinationMask::from_bits(bits).unwrap();
            let once = mask_params(&p, m);
            prop_assert_eq!(mask_params(&once, m), once);
        }
    }
}
