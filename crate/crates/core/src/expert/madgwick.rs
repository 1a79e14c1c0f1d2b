//! Six-axis gradient-descent attitude filter.
//!
//! The quaternion `q = (q0, q1, q2, q3)` rotates body vectors into the earth
//! frame (Z-Y-X Euler convention). A level, stationary sensor reads
//! `accel = (0, 0, +g)`.

/// Unit quaternion `w + xi + yj + zk`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quaternion(pub [f64; 4]);

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion([1.0, 0.0, 0.0, 0.0]);

    /// From Z-Y-X Euler angles in radians.
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64) -> Self {
        let (sr, cr) = (0.5 * roll).sin_cos();
        let (sp, cp) = (0.5 * pitch).sin_cos();
        let (sy, cy) = (0.5 * yaw).sin_cos();
        Quaternion([
            cr * cp * cy + sr * sp * sy,
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy,
        ])
    }

    /// `(roll, pitch, yaw)` in radians.
    pub fn to_euler(&self) -> (f64, f64, f64) {
        let [q0, q1, q2, q3] = self.0;
        let roll = (q0 * q1 + q2 * q3).atan2(0.5 - q1 * q1 - q2 * q2);
        let pitch = (-2.0 * (q1 * q3 - q0 * q2)).clamp(-1.0, 1.0).asin();
        let yaw = (q1 * q2 + q0 * q3).atan2(0.5 - q2 * q2 - q3 * q3);
        (roll, pitch, yaw)
    }

    pub fn mul(&self, o: &Quaternion) -> Quaternion {
        let [a0, a1, a2, a3] = self.0;
        let [b0, b1, b2, b3] = o.0;
        Quaternion([
            a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
            a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
            a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
            a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
        ])
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn normalized(&self) -> Quaternion {
        let n = self.norm();
        Quaternion(self.0.map(|v| v / n))
    }
}

/// Filter state plus its correction gain.
#[derive(Clone, Debug, PartialEq)]
pub struct Madgwick {
    pub q: Quaternion,
    pub beta: f64,
}

impl Madgwick {
    pub fn new(beta: f64) -> Self {
        Self {
            q: Quaternion::IDENTITY,
            beta,
        }
    }

    pub fn with_orientation(beta: f64, q: Quaternion) -> Self {
        Self {
            q: q.normalized(),
            beta,
        }
    }

    /// One update with gyro in rad/s and accel in any unit. A zero accel
    /// vector skips the correction and only integrates the gyro.
    pub fn update(&mut self, gyro: [f64; 3], accel: [f64; 3], dt: f64) {
        let [q0, q1, q2, q3] = self.q.0;
        let [gx, gy, gz] = gyro;
        let mut q_dot = [
            0.5 * (-q1 * gx - q2 * gy - q3 * gz),
            0.5 * (q0 * gx + q2 * gz - q3 * gy),
            0.5 * (q0 * gy - q1 * gz + q3 * gx),
            0.5 * (q0 * gz + q1 * gy - q2 * gx),
        ];

        let a_norm = (accel[0] * accel[0] + accel[1] * accel[1] + accel[2] * accel[2]).sqrt();
        if a_norm > 0.0 && self.beta != 0.0 {
            let [ax, ay, az] = accel.map(|v| v / a_norm);
            // Objective: predicted gravity direction minus measured direction.
            let f = [
                2.0 * (q1 * q3 - q0 * q2) - ax,
                2.0 * (q0 * q1 + q2 * q3) - ay,
                2.0 * (0.5 - q1 * q1 - q2 * q2) - az,
            ];
            // Jacobian transposed times objective.
            let s = [
                -2.0 * q2 * f[0] + 2.0 * q1 * f[1],
                2.0 * q3 * f[0] + 2.0 * q0 * f[1] - 4.0 * q1 * f[2],
                -2.0 * q0 * f[0] + 2.0 * q3 * f[1] - 4.0 * q2 * f[2],
                2.0 * q1 * f[0] + 2.0 * q2 * f[1],
            ];
            let s_norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
            if s_norm > 0.0 {
                for (qd, sv) in q_dot.iter_mut().zip(s) {
                    *qd -= self.beta * sv / s_norm;
                }
            }
        }

        let mut q = self.q.0;
        for (v, d) in q.iter_mut().zip(q_dot) {
            *v += d * dt;
        }
        self.q = Quaternion(q).normalized();
    }

    /// `(roll, pitch)` in degrees.
    pub fn roll_pitch_deg(&self) -> (f64, f64) {
        let (r, p, _) = self.q.to_euler();
        (r.to_degrees(), p.to_degrees())
    }
}
