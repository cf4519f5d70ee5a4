use std::f64::consts::PI;

/// Robot pose in world meters; heading in radians, wrapped to `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: wrap_angle(heading),
        }
    }
}

/// Velocity command: linear `v` (m/s) and angular `w` (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AgentAction {
    pub v: f64,
    pub w: f64,
}

impl AgentAction {
    pub fn new(v: f64, w: f64) -> Self {
        Self { v, w }
    }

    pub fn clamped(self, v_max: f64, w_max: f64) -> Self {
        Self {
            v: self.v.clamp(0.0, v_max),
            w: self.w.clamp(-w_max, w_max),
        }
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Unicycle motion under a constant twist for `dt` seconds, integrated exactly.
pub fn integrate(pose: Pose, action: AgentAction, dt: f64) -> Pose {
    let Pose { x, y, heading: phi } = pose;
    let AgentAction { v, w } = action;
    if w.abs() < 1e-9 {
        return Pose::new(x + v * dt * phi.cos(), y + v * dt * phi.sin(), phi);
    }
    let phi1 = phi + w * dt;
    let r = v / w;
    Pose::new(
        x + r * (phi1.sin() - phi.sin()),
        y + r * (phi.cos() - phi1.cos()),
        phi1,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Pose, b: Pose, tol: f64) -> bool {
        (a.x - b.x).abs() < tol && (a.y - b.y).abs() < tol && wrap_angle(a.heading - b.heading).abs() < tol
    }

    #[test]
    fn straight_line() {
        let p = integrate(Pose::default(), AgentAction::new(1.0, 0.0), 0.1);
        assert!(close(p, Pose::new(0.1, 0.0, 0.0), 1e-12));
    }

    #[test]
    fn pure_rotation() {
        let p = integrate(Pose::default(), AgentAction::new(0.0, 1.0), 0.5);
        assert!(close(p, Pose::new(0.0, 0.0, 0.5), 1e-12));
    }

    #[test]
    fn quarter_circle() {
        let p = integrate(Pose::default(), AgentAction::new(1.0, 1.0), PI / 2.0);
        assert!(close(p, Pose::new(1.0, 1.0, PI / 2.0), 1e-12));
    }

    #[test]
    fn wrap_edges() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.0), 0.0);
    }
}
