//! Shortest forward-only paths of bounded curvature between two poses.

use std::f64::consts::TAU;

use crate::scene::Pose2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Seg {
    L,
    S,
    R,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DubinsPath {
    start: Pose2,
    rho: f64,
    segs: [Seg; 3],
    /// Segment lengths in units of `rho`.
    params: [f64; 3],
}

fn mod2pi(a: f64) -> f64 {
    a.rem_euclid(TAU)
}

impl DubinsPath {
    /// Shortest of the six candidate words from `a` to `b` with turning radius `rho`.
    pub fn shortest(a: Pose2, b: Pose2, rho: f64) -> Option<DubinsPath> {
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let d = dx.hypot(dy) / rho;
        let phi = if d > 0.0 { dy.atan2(dx) } else { 0.0 };
        let al = mod2pi(a.heading - phi);
        let be = mod2pi(b.heading - phi);
        let (sa, sb, ca, cb) = (al.sin(), be.sin(), al.cos(), be.cos());
        let cab = (al - be).cos();
        let mut words: Vec<([Seg; 3], [f64; 3])> = Vec::with_capacity(6);

        let p2 = 2.0 + d * d - 2.0 * cab + 2.0 * d * (sa - sb);
        if p2 >= 0.0 {
            let tmp = (cb - ca).atan2(d + sa - sb);
            words.push((
                [Seg::L, Seg::S, Seg::L],
                [mod2pi(-al + tmp), p2.sqrt(), mod2pi(be - tmp)],
            ));
        }
        let p2 = 2.0 + d * d - 2.0 * cab + 2.0 * d * (sb - sa);
        if p2 >= 0.0 {
            let tmp = (ca - cb).atan2(d - sa + sb);
            words.push((
                [Seg::R, Seg::S, Seg::R],
                [mod2pi(al - tmp), p2.sqrt(), mod2pi(-be + tmp)],
            ));
        }
        let p2 = -2.0 + d * d + 2.0 * cab + 2.0 * d * (sa + sb);
        if p2 >= 0.0 {
            let p = p2.sqrt();
            let tmp = (-ca - cb).atan2(d + sa + sb) - (-2.0f64).atan2(p);
            words.push((
                [Seg::L, Seg::S, Seg::R],
                [mod2pi(-al + tmp), p, mod2pi(-mod2pi(be) + tmp)],
            ));
        }
        let p2 = -2.0 + d * d + 2.0 * cab - 2.0 * d * (sa + sb);
        if p2 >= 0.0 {
            let p = p2.sqrt();
            let tmp = (ca + cb).atan2(d - sa - sb) - 2.0f64.atan2(p);
            words.push((
                [Seg::R, Seg::S, Seg::L],
                [mod2pi(al - tmp), p, mod2pi(be - tmp)],
            ));
        }
        let tmp = (6.0 - d * d + 2.0 * cab + 2.0 * d * (sa - sb)) / 8.0;
        if tmp.abs() <= 1.0 {
            let p = mod2pi(TAU - tmp.acos());
            let t = mod2pi(al - (ca - cb).atan2(d - sa + sb) + p / 2.0);
            words.push(([Seg::R, Seg::L, Seg::R], [t, p, mod2pi(al - be - t + p)]));
        }
        let tmp = (6.0 - d * d + 2.0 * cab + 2.0 * d * (sb - sa)) / 8.0;
        if tmp.abs() <= 1.0 {
            let p = mod2pi(TAU - tmp.acos());
            let t = mod2pi(-al - (ca - cb).atan2(d + sa - sb) + p / 2.0);
            words.push((
                [Seg::L, Seg::R, Seg::L],
                [t, p, mod2pi(mod2pi(be) - al - t + p)],
            ));
        }
        words
            .into_iter()
            .min_by(|x, y| x.1.iter().sum::<f64>().total_cmp(&y.1.iter().sum::<f64>()))
            .map(|(segs, params)| DubinsPath {
                start: a,
                rho,
                segs,
                params,
            })
    }

    pub fn length(&self) -> f64 {
        self.params.iter().sum::<f64>() * self.rho
    }

    /// Pose at arc length `s` (clamped to the path).
    pub fn sample(&self, s: f64) -> Pose2 {
        let mut t = (s / self.rho).clamp(0.0, self.params.iter().sum());
        let (mut x, mut y, mut h) = (0.0, 0.0, self.start.heading);
        for (seg, &len) in self.segs.iter().zip(&self.params) {
            let u = t.min(len);
            match seg {
                Seg::L => {
                    x += (h + u).sin() - h.sin();
                    y += -(h + u).cos() + h.cos();
                    h += u;
                }
                Seg::R => {
                    x += -(h - u).sin() + h.sin();
                    y += (h - u).cos() - h.cos();
                    h -= u;
                }
                Seg::S => {
                    x += h.cos() * u;
                    y += h.sin() * u;
                }
            }
            t -= u;
            if t <= 0.0 {
                break;
            }
        }
        Pose2::new(self.start.x + x * self.rho, self.start.y + y * self.rho, h)
    }

    /// Poses from start to end spaced at most `step` apart.
    pub fn poses(&self, step: f64) -> Vec<Pose2> {
        let len = self.length();
        let n = (len / step).ceil().max(1.0) as usize;
        (0..=n)
            .map(|i| self.sample(len * i as f64 / n as f64))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn close(a: Pose2, b: Pose2) -> bool {
        (a.x - b.x).abs() < 1e-6
            && (a.y - b.y).abs() < 1e-6
            && mod2pi(a.heading - b.heading + 1e-9) < 1e-6
    }

    #[test]
    fn straight_ahead() {
        let a = Pose2::new(0.0, 0.0, FRAC_PI_2);
        let b = Pose2::new(0.0, 10.0, FRAC_PI_2);
        let p = DubinsPath::shortest(a, b, 5.0).unwrap();
        assert!((p.length() - 10.0).abs() < 1e-9);
        assert!(close(p.sample(p.length()), b));
    }

    #[test]
    fn u_turn_reaches_goal() {
        let a = Pose2::new(0.0, 0.0, 0.0);
        let b = Pose2::new(0.0, 10.0, std::f64::consts::PI);
        let p = DubinsPath::shortest(a, b, 5.0).unwrap();
        assert!((p.length() - 5.0 * std::f64::consts::PI).abs() < 1e-9);
        assert!(close(p.sample(p.length()), b));
    }
}
