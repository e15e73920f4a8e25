//! Unit-quaternion representation of SU(2) propagators.
//!
//! A propagator is stored as q = (w, x, y, z) meaning U = w*I - i(x*sx + y*sy + z*sz)
//! with s* the Pauli matrices. The map sends quaternion multiplication to
//! operator composition, so time-ordered products reduce to Hamilton products.
//! Spin rotations generated by H = (delta*sz + wx*sx + wy*sy)/2 obey
//! dU/dt = -i H U; one step of length h about the instantaneous axis is
//! exp(-i h (w . s)/2) = (cos(|w|h/2), sin(|w|h/2) w_hat).

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Su2(pub [f64; 4]);

impl Su2 {
    pub const IDENTITY: Su2 = Su2([1.0, 0.0, 0.0, 0.0]);

    /// exp(-i angle (n . sigma)/2) for a unit axis n; rotation by `angle`
    /// about n on the Bloch sphere.
    pub fn from_axis_angle(n: [f64; 3], angle: f64) -> Su2 {
        let (s, c) = (0.5 * angle).sin_cos();
        Su2([c, s * n[0], s * n[1], s * n[2]])
    }

    /// One midpoint step: rotation vector (wx, wy, wz) applied for time h.
    /// Guards the sin(t)/t factor near zero rotation.
    #[inline]
    pub fn step(wx: f64, wy: f64, wz: f64, h: f64) -> Su2 {
        let wn = (wx * wx + wy * wy + wz * wz).sqrt();
        let th = 0.5 * wn * h;
        let c = th.cos();
        let sn = if wn > 1e-300 { th.sin() / wn } else { 0.5 * h };
        Su2([c, sn * wx, sn * wy, sn * wz])
    }

    pub fn rot_x(angle: f64) -> Su2 {
        Su2::from_axis_angle([1.0, 0.0, 0.0], angle)
    }

    pub fn rot_y(angle: f64) -> Su2 {
        Su2::from_axis_angle([0.0, 1.0, 0.0], angle)
    }

    pub fn rot_z(angle: f64) -> Su2 {
        Su2::from_axis_angle([0.0, 0.0, 1.0], angle)
    }

    /// Hamilton product; as operators, `self * rhs` applies `rhs` first.
    #[inline]
    #[must_use]
    pub fn mul(&self, rhs: &Su2) -> Su2 {
        let [a0, a1, a2, a3] = self.0;
        let [b0, b1, b2, b3] = rhs.0;
        Su2([
            a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
            a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
            a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
            a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
        ])
    }

    /// Adjoint (inverse for unit quaternions).
    #[must_use]
    pub fn conj(&self) -> Su2 {
        let [w, x, y, z] = self.0;
        Su2([w, -x, -y, -z])
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|q| q * q).sum()
    }

    /// |det U - 1|; for this parameterization det U = |q|^2, and U dag U =
    /// |q|^2 I, so the same number bounds the unitarity defect.
    pub fn det_error(&self) -> f64 {
        (self.norm_sq() - 1.0).abs()
    }

    /// Re Tr[other^dag self] / 2, the phase-sensitive gate overlap. Equals
    /// the quaternion dot product; 1 iff the two propagators are identical
    /// including global sign.
    pub fn overlap(&self, other: &Su2) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    /// The SO(3) matrix R with S' = R S describing how this propagator moves
    /// Bloch vectors.
    pub fn bloch_matrix(&self) -> [[f64; 3]; 3] {
        let [q0, q1, q2, q3] = self.0;
        [
            [
                q0 * q0 + q1 * q1 - q2 * q2 - q3 * q3,
                2.0 * (q1 * q2 - q0 * q3),
                2.0 * (q1 * q3 + q0 * q2),
            ],
            [
                2.0 * (q1 * q2 + q0 * q3),
                q0 * q0 - q1 * q1 + q2 * q2 - q3 * q3,
                2.0 * (q2 * q3 - q0 * q1),
            ],
            [
                2.0 * (q1 * q3 - q0 * q2),
                2.0 * (q2 * q3 + q0 * q1),
                q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3,
            ],
        ]
    }

    pub fn apply_bloch(&self, s: [f64; 3]) -> [f64; 3] {
        let r = self.bloch_matrix();
        [
            r[0][0] * s[0] + r[0][1] * s[1] + r[0][2] * s[2],
            r[1][0] * s[0] + r[1][1] * s[1] + r[1][2] * s[2],
            r[2][0] * s[0] + r[2][1] * s[1] + r[2][2] * s[2],
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn composition_matches_single_rotation() {
        let a = Su2::rot_x(0.3);
        let b = Su2::rot_x(0.5);
        let ab = a.mul(&b);
        let direct = Su2::rot_x(0.8);
        for i in 0..4 {
            assert_relative_eq!(ab.0[i], direct.0[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn unit_norm_and_overlap() {
        let u = Su2::from_axis_angle(
            [1.0 / 3f64.sqrt(), 1.0 / 3f64.sqrt(), 1.0 / 3f64.sqrt()],
            1.234,
        );
        assert!(u.det_error() < 1e-15);
        assert_relative_eq!(u.overlap(&u), 1.0, epsilon = 1e-15);
        // Global sign flips the overlap sign.
        let m = Su2([-u.0[0], -u.0[1], -u.0[2], -u.0[3]]);
        assert_relative_eq!(u.overlap(&m), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn step_small_rotation_limit() {
        // |w| -> 0 must reduce to identity with the sin factor guard intact.
        let s = Su2::step(0.0, 0.0, 0.0, 0.1);
        assert_eq!(s, Su2::IDENTITY);
        let s = Su2::step(1e-320, 0.0, 0.0, 0.1);
        assert!(s.det_error() < 1e-12);
    }

    #[test]
    fn bloch_action_matches_axis_angle() {
        // +pi/2 about y sends z -> x, so -z -> -x.
        let u = Su2::rot_y(std::f64::consts::FRAC_PI_2);
        let s = u.apply_bloch([0.0, 0.0, -0.5]);
        assert_relative_eq!(s[0], -0.5, epsilon = 1e-15);
        assert_relative_eq!(s[1], 0.0, epsilon = 1e-15);
        assert!(s[2].abs() < 1e-15);

        // pi about x flips z and y.
        let u = Su2::rot_x(std::f64::consts::PI);
        let s = u.apply_bloch([0.1, 0.2, 0.3]);
        assert_relative_eq!(s[0], 0.1, epsilon = 1e-15);
        assert_relative_eq!(s[1], -0.2, epsilon = 1e-15);
        assert_relative_eq!(s[2], -0.3, epsilon = 1e-15);
    }

    #[test]
    fn bloch_matrix_is_rotation() {
        let u = Su2::from_axis_angle([0.6, 0.0, 0.8], 2.1);
        let r = u.bloch_matrix();
        // Orthonormal rows.
        for i in 0..3 {
            let n: f64 = (0..3).map(|j| r[i][j] * r[i][j]).sum();
            assert_relative_eq!(n, 1.0, epsilon = 1e-14);
        }
        let dot01: f64 = (0..3).map(|j| r[0][j] * r[1][j]).sum();
        assert!(dot01.abs() < 1e-14);
    }

    #[test]
    fn y_rotation_overlaps() {
        // Overlap of U with the pi/2 y-rotation target reads (q0 + q2)/sqrt(2).
        let u = Su2::rot_y(std::f64::consts::FRAC_PI_2);
        let t = Su2::rot_y(std::f64::consts::FRAC_PI_2);
        assert_relative_eq!(u.overlap(&t), 1.0, epsilon = 1e-15);
        // And the pi target picks out q2.
        let t = Su2::rot_y(std::f64::consts::PI);
        assert_relative_eq!(t.0[2], 1.0, epsilon = 1e-15);
        assert_relative_eq!(Su2::rot_y(std::f64::consts::PI).overlap(&t), 1.0, epsilon = 1e-15);
    }
}
