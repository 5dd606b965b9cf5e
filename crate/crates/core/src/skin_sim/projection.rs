//! Closest-point queries on axis-aligned ellipses and ellipsoids.
//!
//! Bisection on the Lagrange parameter following D. Eberly, "Distance from a
//! Point to an Ellipse, an Ellipsoid, or a Hyperellipsoid". Works for points
//! inside and outside the quadric.

const MAX_BISECTIONS: usize = 200;

fn robust_len2(a: f64, b: f64) -> f64 {
    a.hypot(b)
}

fn robust_len3(a: f64, b: f64, c: f64) -> f64 {
    a.hypot(b).hypot(c)
}

fn root_2d(r0: f64, z0: f64, z1: f64, g: f64) -> f64 {
    let n0 = r0 * z0;
    let mut s0 = z1 - 1.0;
    let mut s1 = if g < 0.0 { 0.0 } else { robust_len2(n0, z1) - 1.0 };
    let mut s = 0.0;
    for _ in 0..MAX_BISECTIONS {
        s = 0.5 * (s0 + s1);
        if s == s0 || s == s1 {
            break;
        }
        let ratio0 = n0 / (s + r0);
        let ratio1 = z1 / (s + 1.0);
        let g = ratio0 * ratio0 + ratio1 * ratio1 - 1.0;
        if g > 0.0 {
            s0 = s;
        } else if g < 0.0 {
            s1 = s;
        } else {
            break;
        }
    }
    s
}

fn root_3d(r0: f64, r1: f64, z0: f64, z1: f64, z2: f64, g: f64) -> f64 {
    let n0 = r0 * z0;
    let n1 = r1 * z1;
    let mut s0 = z2 - 1.0;
    let mut s1 = if g < 0.0 { 0.0 } else { robust_len3(n0, n1, z2) - 1.0 };
    let mut s = 0.0;
    for _ in 0..MAX_BISECTIONS {
        s = 0.5 * (s0 + s1);
        if s == s0 || s == s1 {
            break;
        }
        let ratio0 = n0 / (s + r0);
        let ratio1 = n1 / (s + r1);
        let ratio2 = z2 / (s + 1.0);
        let g = ratio0 * ratio0 + ratio1 * ratio1 + ratio2 * ratio2 - 1.0;
        if g > 0.0 {
            s0 = s;
        } else if g < 0.0 {
            s1 = s;
        } else {
            break;
        }
    }
    s
}

/// First-quadrant solver: requires `e0 >= e1 > 0`, `y0, y1 >= 0`.
fn ellipse_sorted(e0: f64, e1: f64, y0: f64, y1: f64) -> (f64, f64) {
    if y1 > 0.0 {
        if y0 > 0.0 {
            let z0 = y0 / e0;
            let z1 = y1 / e1;
            let g = z0 * z0 + z1 * z1 - 1.0;
            if g != 0.0 {
                let r0 = (e0 / e1) * (e0 / e1);
                let sbar = root_2d(r0, z0, z1, g);
                (r0 * y0 / (sbar + r0), y1 / (sbar + 1.0))
            } else {
                (y0, y1)
            }
        } else {
            (0.0, e1)
        }
    } else {
        let numer0 = e0 * y0;
        let denom0 = e0 * e0 - e1 * e1;
        if numer0 < denom0 {
            let xde0 = numer0 / denom0;
            (e0 * xde0, e1 * (1.0 - xde0 * xde0).max(0.0).sqrt())
        } else {
            (e0, 0.0)
        }
    }
}

/// First-octant solver: requires `e0 >= e1 >= e2 > 0`, all `y >= 0`.
fn ellipsoid_sorted(e: [f64; 3], y: [f64; 3]) -> [f64; 3] {
    let [e0, e1, e2] = e;
    let [y0, y1, y2] = y;
    if y2 > 0.0 {
        if y1 > 0.0 {
            if y0 > 0.0 {
                let z0 = y0 / e0;
                let z1 = y1 / e1;
                let z2 = y2 / e2;
                let g = z0 * z0 + z1 * z1 + z2 * z2 - 1.0;
                if g != 0.0 {
                    let r0 = (e0 / e2) * (e0 / e2);
                    let r1 = (e1 / e2) * (e1 / e2);
                    let sbar = root_3d(r0, r1, z0, z1, z2, g);
                    [
                        r0 * y0 / (sbar + r0),
                        r1 * y1 / (sbar + r1),
                        y2 / (sbar + 1.0),
                    ]
                } else {
                    y
                }
            } else {
                let (x1, x2) = ellipse_sorted(e1, e2, y1, y2);
                [0.0, x1, x2]
            }
        } else if y0 > 0.0 {
            let (x0, x2) = ellipse_sorted(e0, e2, y0, y2);
            [x0, 0.0, x2]
        } else {
            [0.0, 0.0, e2]
        }
    } else {
        let denom0 = e0 * e0 - e2 * e2;
        let denom1 = e1 * e1 - e2 * e2;
        let numer0 = e0 * y0;
        let numer1 = e1 * y1;
        if numer0 < denom0 && numer1 < denom1 {
            let xde0 = numer0 / denom0;
            let xde1 = numer1 / denom1;
            let discr = 1.0 - xde0 * xde0 - xde1 * xde1;
            if discr > 0.0 {
                return [e0 * xde0, e1 * xde1, e2 * discr.sqrt()];
            }
        }
        let (x0, x1) = ellipse_sorted(e0, e1, y0, y1);
        [x0, x1, 0.0]
    }
}

/// Closest point on the ellipse `(u/a)^2 + (v/b)^2 = 1` to `(u, v)`.
pub fn closest_on_ellipse(a: f64, b: f64, u: f64, v: f64) -> (f64, f64) {
    let (su, sv) = (u.signum(), v.signum());
    let (x0, x1) = if a >= b {
        ellipse_sorted(a, b, u.abs(), v.abs())
    } else {
        let (x1, x0) = ellipse_sorted(b, a, v.abs(), u.abs());
        (x0, x1)
    };
    (su * x0, sv * x1)
}

/// Closest point on the axis-aligned ellipsoid with semi-axes `e` to `y`.
pub fn closest_on_ellipsoid(e: [f64; 3], y: [f64; 3]) -> [f64; 3] {
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| e[j].total_cmp(&e[i]));
    let es = [e[order[0]], e[order[1]], e[order[2]]];
    let ys = [y[order[0]].abs(), y[order[1]].abs(), y[order[2]].abs()];
    let xs = ellipsoid_sorted(es, ys);
    let mut x = [0.0; 3];
    for (k, &axis) in order.iter().enumerate() {
        x[axis] = xs[k].copysign(y[axis]);
        if y[axis] == 0.0 {
            x[axis] = xs[k];
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ellipsoid_residual(e: [f64; 3], x: [f64; 3]) -> f64 {
        (x[0] / e[0]).powi(2) + (x[1] / e[1]).powi(2) + (x[2] / e[2]).powi(2) - 1.0
    }

    #[test]
    fn sphere_projection_is_radial() {
        let r = 0.007;
        for y in [[0.001, 0.002, -0.003], [0.02, -0.01, 0.0], [0.0, 0.0, 0.004]] {
            let x = closest_on_ellipsoid([r, r, r], y);
            let n = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
            for k in 0..3 {
                assert!((x[k] - r * y[k] / n).abs() < 1e-12, "{x:?} vs {y:?}");
            }
        }
    }

    #[test]
    fn ellipsoid_projection_is_stationary() {
        // The residual y - x must be parallel to the surface normal at x.
        let e = [0.009, 0.007, 0.005];
        for y in [[0.002, 0.001, 0.001], [0.012, 0.004, -0.006], [-0.001, 0.003, 0.0005]] {
            let x = closest_on_ellipsoid(e, y);
            assert!(ellipsoid_residual(e, x).abs() < 1e-12);
            let n = [x[0] / (e[0] * e[0]), x[1] / (e[1] * e[1]), x[2] / (e[2] * e[2])];
            let d = [y[0] - x[0], y[1] - x[1], y[2] - x[2]];
            let cross = [
                n[1] * d[2] - n[2] * d[1],
                n[2] * d[0] - n[0] * d[2],
                n[0] * d[1] - n[1] * d[0],
            ];
            let scale = (n.iter().map(|v| v * v).sum::<f64>() * d.iter().map(|v| v * v).sum::<f64>()).sqrt();
            let c = cross.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(c <= 1e-9 * scale.max(1e-30), "not stationary: {c} vs {scale}");
        }
    }

    #[test]
    fn ellipse_projection_handles_axes_and_order() {
        let (u, v) = closest_on_ellipse(0.004, 0.007, 0.0, 0.009);
        assert!((u - 0.0).abs() < 1e-15 && (v - 0.007).abs() < 1e-15);
        // Inside near the centre, the nearest boundary lies across the minor axis.
        let (u, v) = closest_on_ellipse(0.004, 0.007, 0.0, 0.001);
        assert!(u > 0.003 && v > 0.0 && ((u / 0.004).powi(2) + (v / 0.007).powi(2) - 1.0).abs() < 1e-12);
        let (u, v) = closest_on_ellipse(0.007, 0.007, -0.003, 0.004);
        assert!((u + 0.0042).abs() < 1e-12 && (v - 0.0056).abs() < 1e-12);
    }
}
