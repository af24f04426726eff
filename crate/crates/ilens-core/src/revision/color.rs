//! Hexcone RGB/HSV conversion with analytic Jacobians.
//!
//! The Jacobians follow the same branch decisions as the forward code
//! (argmax/argmin channel, hue sector), so reverse-mode sweeps through the
//! color stage stay consistent with the values actually computed. Both maps
//! are differentiable away from the achromatic axis and sector boundaries.

/// Hue is 0 for achromatic pixels by convention.
pub fn rgb_to_hsv(rgb: [f64; 3]) -> [f64; 3] {
    let (h, s, v, _, _) = rgb_to_hsv_branches(rgb);
    [h, s, v]
}

fn rgb_to_hsv_branches(rgb: [f64; 3]) -> (f64, f64, f64, usize, usize) {
    let [r, g, b] = rgb;
    // deterministic tie-breaks: first channel wins the max, first the min
    let max_c = if r >= g && r >= b {
        0
    } else if g >= b {
        1
    } else {
        2
    };
    let min_c = if r <= g && r <= b {
        0
    } else if g <= b {
        1
    } else {
        2
    };
    let max = rgb[max_c];
    let min = rgb[min_c];
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta > 0.0 {
        let h6 = match max_c {
            0 => ((g - b) / delta).rem_euclid(6.0),
            1 => (b - r) / delta + 2.0,
            _ => (r - g) / delta + 4.0,
        };
        (h6 / 6.0).rem_euclid(1.0)
    } else {
        0.0
    };
    (h, s, v, max_c, min_c)
}

/// Forward values plus the 3x3 Jacobian d(h,s,v)/d(r,g,b).
pub fn rgb_to_hsv_jacobian(rgb: [f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let (h, s, v, max_c, min_c) = rgb_to_hsv_branches(rgb);
    let max = rgb[max_c];
    let min = rgb[min_c];
    let delta = max - min;
    let mut jac = [[0.0; 3]; 3];

    // dv/d(max channel) = 1
    jac[2][max_c] = 1.0;

    if max > 0.0 && max_c != min_c {
        // s = 1 - min / max
        jac[1][max_c] += min / (max * max);
        jac[1][min_c] += -1.0 / max;
    }

    if delta > 0.0 {
        // h6 = num / delta + const; d delta/dx = [x = max] - [x = min]
        let (num, dnum): (f64, [f64; 3]) = match max_c {
            0 => (rgb[1] - rgb[2], [0.0, 1.0, -1.0]),
            1 => (rgb[2] - rgb[0], [-1.0, 0.0, 1.0]),
            _ => (rgb[0] - rgb[1], [1.0, -1.0, 0.0]),
        };
        for ch in 0..3 {
            let ddelta = (ch == max_c) as i32 as f64 - (ch == min_c) as i32 as f64;
            jac[0][ch] = (dnum[ch] * delta - num * ddelta) / (delta * delta) / 6.0;
        }
    }

    ([h, s, v], jac)
}

pub fn hsv_to_rgb(hsv: [f64; 3]) -> [f64; 3] {
    let (rgb, _) = hsv_to_rgb_jacobian(hsv);
    rgb
}

/// Forward values plus the 3x3 Jacobian d(r,g,b)/d(h,s,v).
pub fn hsv_to_rgb_jacobian(hsv: [f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let [h, s, v] = hsv;
    let h6 = (h - h.floor()) * 6.0;
    let sector = (h6.floor() as usize).min(5);
    let f = h6 - sector as f64;

    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));

    // rows are d/d(h,s,v) for each of the building blocks
    let dv_row = [0.0, 0.0, 1.0];
    let dp_row = [0.0, -v, 1.0 - s];
    let dq_row = [-6.0 * v * s, -v * f, 1.0 - s * f];
    let dt_row = [6.0 * v * s, -v * (1.0 - f), 1.0 - s * (1.0 - f)];

    let (rgb, rows) = match sector {
        0 => ([v, t, p], [dv_row, dt_row, dp_row]),
        1 => ([q, v, p], [dq_row, dv_row, dp_row]),
        2 => ([p, v, t], [dp_row, dv_row, dt_row]),
        3 => ([p, q, v], [dp_row, dq_row, dv_row]),
        4 => ([t, p, v], [dt_row, dp_row, dv_row]),
        _ => ([v, p, q], [dv_row, dp_row, dq_row]),
    };
    (rgb, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pure_red() {
        let [h, s, v] = rgb_to_hsv([1.0, 0.0, 0.0]);
        assert_eq!((h, s, v), (0.0, 1.0, 1.0));
    }

    #[test]
    fn grayscale_convention() {
        for g in [0.0, 0.25, 1.0] {
            let [h, s, v] = rgb_to_hsv([g, g, g]);
            assert_eq!(h, 0.0);
            assert_eq!(s, 0.0);
            assert_eq!(v, g);
        }
    }

    #[test]
    fn primaries_and_secondaries() {
        let cases: [([f64; 3], f64); 6] = [
            ([1.0, 0.0, 0.0], 0.0),
            ([1.0, 1.0, 0.0], 1.0 / 6.0),
            ([0.0, 1.0, 0.0], 2.0 / 6.0),
            ([0.0, 1.0, 1.0], 3.0 / 6.0),
            ([0.0, 0.0, 1.0], 4.0 / 6.0),
            ([1.0, 0.0, 1.0], 5.0 / 6.0),
        ];
        for (rgb, hue) in cases {
            let [h, s, v] = rgb_to_hsv(rgb);
            assert!((h - hue).abs() < 1e-12, "{rgb:?}");
            assert_eq!((s, v), (1.0, 1.0));
            let back = hsv_to_rgb([h, s, v]);
            for ch in 0..3 {
                assert!((back[ch] - rgb[ch]).abs() < 1e-12);
            }
        }
    }

    fn jacobian_fd_check(point: [f64; 3], forward: impl Fn([f64; 3]) -> [f64; 3], jac: [[f64; 3]; 3]) {
        let h = 1e-6;
        for j in 0..3 {
            let mut plus = point;
            plus[j] += h;
            let mut minus = point;
            minus[j] -= h;
            let (fp, fm) = (forward(plus), forward(minus));
            for i in 0..3 {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                assert!(
                    (jac[i][j] - fd).abs() < 1e-5,
                    "at {point:?} entry ({i},{j}): analytic {} vs fd {fd}",
                    jac[i][j]
                );
            }
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        // chromatic points away from sector boundaries and channel ties
        let rgb_points = [
            [0.8, 0.3, 0.1],
            [0.2, 0.9, 0.4],
            [0.15, 0.35, 0.75],
            [0.6, 0.1, 0.5],
            [0.33, 0.66, 0.11],
        ];
        for p in rgb_points {
            let (_, jac) = rgb_to_hsv_jacobian(p);
            jacobian_fd_check(p, rgb_to_hsv, jac);
        }
        let hsv_points = [
            [0.07, 0.5, 0.8],
            [0.23, 0.9, 0.4],
            [0.41, 0.3, 0.6],
            [0.58, 0.7, 0.9],
            [0.92, 0.6, 0.5],
        ];
        for p in hsv_points {
            let (_, jac) = hsv_to_rgb_jacobian(p);
            jacobian_fd_check(p, hsv_to_rgb, jac);
        }
    }

    proptest! {
        #[test]
        fn roundtrip_within_tolerance(r in 0.0f64..1.0, g in 0.0f64..1.0, b in 0.0f64..1.0) {
            let rgb = [r, g, b];
            let back = hsv_to_rgb(rgb_to_hsv(rgb));
            for ch in 0..3 {
                prop_assert!((back[ch] - rgb[ch]).abs() < 1e-6);
            }
        }

        #[test]
        fn hsv_outputs_in_range(r in 0.0f64..1.0, g in 0.0f64..1.0, b in 0.0f64..1.0) {
            let [h, s, v] = rgb_to_hsv([r, g, b]);
            prop_assert!((0.0..1.0).contains(&h) || h == 0.0);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
