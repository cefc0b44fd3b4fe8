use std::f64::consts::TAU;

use rc3d_core::Tensor;

use crate::farneback::FlowField;

/// HSV to RGB, all components in `[0, 1]`.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = h6.floor();
    let f = h6 - sector;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match sector as u8 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Hue of a flow vector, direction mapped onto `[0, 1)`.
pub fn flow_hue(u: f64, v: f64) -> f64 {
    (v.atan2(u) / TAU).rem_euclid(1.0)
}

/// `[3,H,W]` image: hue from direction, value from magnitude over the
/// frame's largest magnitude, full saturation.
pub fn flow_to_motion_image(flow: &FlowField) -> Tensor<f32> {
    let n = flow.width * flow.height;
    let mags = flow.magnitudes();
    let max = mags.iter().copied().fold(0.0f32, f32::max) as f64;
    let mut data = vec![0.0f32; 3 * n];
    if max > 0.0 {
        for i in 0..n {
            let value = (mags[i] as f64 / max).clamp(0.0, 1.0);
            let rgb = hsv_to_rgb(flow_hue(flow.u[i] as f64, flow.v[i] as f64), 1.0, value);
            for (c, x) in rgb.into_iter().enumerate() {
                data[c * n + i] = x as f32;
            }
        }
    }
    Tensor::new(&[3, flow.height, flow.width], data).expect("extents match")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(w: usize, h: usize, u: f32, v: f32) -> FlowField {
        FlowField {
            width: w,
            height: h,
            u: vec![u; w * h],
            v: vec![v; w * h],
        }
    }

    #[test]
    fn zero_flow_is_black() {
        assert!(flow_to_motion_image(&FlowField::zeros(4, 3)).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn uniform_flow_is_one_colour_at_full_value() {
        let img = flow_to_motion_image(&uniform(4, 3, 1.0, 0.0));
        let d = img.data();
        assert_eq!(&d[..12], &[1.0; 12]);
        assert!(d[12..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn opposite_directions_are_half_a_turn_apart() {
        for (u, v) in [(1.0, 0.0), (0.3, -2.0), (-1.0, 1.0)] {
            let d = (flow_hue(u, v) - flow_hue(-u, -v)).rem_euclid(1.0);
            assert!((d - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn primary_hues() {
        assert_eq!(hsv_to_rgb(0.0, 1.0, 1.0), [1.0, 0.0, 0.0]);
        assert_eq!(hsv_to_rgb(1.0 / 3.0, 1.0, 1.0), [0.0, 1.0, 0.0]);
        assert_eq!(hsv_to_rgb(0.5, 0.0, 0.5), [0.5, 0.5, 0.5]);
    }
}
