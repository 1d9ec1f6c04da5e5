use crate::error::Result;
use crate::params::{round_f32, Grads, ModelParams};

/// Plain SGD, `p <- p - lr * g`, after optional global-norm clipping.
/// Returns the gradient norm before clipping.
pub fn sgd_step(params: &mut ModelParams, grads: &Grads, learning_rate: f64, clip_norm: Option<f64>) -> Result<f64> {
    grads.check_aligned(params)?;
    let norm = grads.global_norm();
    let scale = match clip_norm {
        Some(c) if norm > c => c / norm,
        _ => 1.0,
    };
    let step = learning_rate * scale;
    for (i, g) in grads.tensors().enumerate() {
        let t = params.get_mut(crate::params::ParamId(i));
        for (p, &gi) in t.data.iter_mut().zip(g) {
            *p = round_f32(*p - step * gi);
        }
    }
    Ok(norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn scalar(p: f64) -> ModelParams {
        let mut m = ModelParams::new();
        m.insert("p", vec![1], vec![p]);
        m
    }

    #[test]
    fn zero_grads_or_zero_rate_leave_params() {
        let mut m = scalar(0.25);
        let g = m.zeros_like();
        sgd_step(&mut m, &g, 0.5, None).unwrap();
        assert_eq!(m.by_name("p").unwrap().data, [0.25]);
        let mut g = m.zeros_like();
        g.data[0][0] = 3.0;
        sgd_step(&mut m, &g, 0.0, None).unwrap();
        assert_eq!(m.by_name("p").unwrap().data, [0.25]);
    }

    #[test]
    fn single_step_arithmetic() {
        let mut m = scalar(1.0);
        let mut g = m.zeros_like();
        g.data[0][0] = 0.2;
        sgd_step(&mut m, &g, 0.5, None).unwrap();
        let p = m.by_name("p").unwrap().data[0];
        // stored at f32 precision
        assert_eq!(p, 0.9f32 as f64);
        assert!((p - 0.9).abs() < 1e-7);
    }

    #[test]
    fn clipping_rescales_to_threshold() {
        let mut m = ModelParams::new();
        m.insert("a", vec![2], vec![0.0, 0.0]);
        let mut g = m.zeros_like();
        g.data[0] = vec![3.0, 4.0];
        let norm = sgd_step(&mut m, &g, 1.0, Some(1.0)).unwrap();
        assert_eq!(norm, 5.0);
        let p = &m.by_name("a").unwrap().data;
        assert!((p[0] + 0.6).abs() < 1e-7 && (p[1] + 0.8).abs() < 1e-7);
    }

    #[test]
    fn misaligned_grads_are_rejected() {
        let mut m = scalar(1.0);
        let other = scalar(1.0);
        let mut g = other.zeros_like();
        g.data.push(vec![1.0]);
        assert!(matches!(sgd_step(&mut m, &g, 0.5, None), Err(Error::Integrity(_))));
    }
}
