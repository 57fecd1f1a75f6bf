use crate::error::{Error, Result};
use crate::net::{Hyper, ModelState};
use crate::tensor::DenseMatrix;

/// One Adam update with bias correction. Weight decay enters as an L2 term
/// added to the gradient before the moment updates.
pub fn adam_step(state: &mut ModelState, grads: &[DenseMatrix]) -> Result<()> {
    if grads.len() != state.weights.len() {
        return Err(Error::Config(format!(
            "{} gradients for {} weights",
            grads.len(),
            state.weights.len()
        )));
    }
    for (i, g) in grads.iter().enumerate() {
        if g.shape() != state.weights[i].shape() {
            return Err(Error::shape("adam_step", state.weights[i].shape(), g.shape()));
        }
        if !g.is_finite() {
            return Err(Error::NonFinite(format!(
                "gradient of `{}` at step {}",
                state.names[i],
                state.step + 1
            )));
        }
    }
    let h = state.hyper;
    let t = (state.step + 1) as i32;
    let bc1 = 1.0 - h.beta1.powi(t);
    let bc2 = 1.0 - h.beta2.powi(t);
    for (i, g) in grads.iter().enumerate() {
        update(
            state.weights[i].data_mut(),
            state.adam_m[i].data_mut(),
            state.adam_v[i].data_mut(),
            g.data(),
            &h,
            bc1,
            bc2,
        );
    }
    state.step += 1;
    Ok(())
}

fn update(w: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64], h: &Hyper, bc1: f64, bc2: f64) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx2") {
            // SAFETY: guarded by the runtime feature check above.
            unsafe { update_avx2(w, m, v, g, h, bc1, bc2) };
            return;
        }
    }
    update_generic(w, m, v, g, h, bc1, bc2);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn update_avx2(w: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64], h: &Hyper, bc1: f64, bc2: f64) {
    update_generic(w, m, v, g, h, bc1, bc2);
}

#[inline(always)]
fn update_generic(w: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64], h: &Hyper, bc1: f64, bc2: f64) {
    for (((w, m), v), &g) in w.iter_mut().zip(m).zip(v).zip(g) {
        let g = g + h.weight_decay * *w;
        *m = h.beta1 * *m + (1.0 - h.beta1) * g;
        *v = h.beta2 * *v + (1.0 - h.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *w -= h.lr * m_hat / (v_hat.sqrt() + h.eps_adam);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{ArchSpec, BlockSpec};

    fn scalar_state(w: f64, weight_decay: f64) -> ModelState {
        let arch = ArchSpec {
            model_id: None,
            input_dim: 1,
            output_dim: 1,
            first_layer_dim: 1,
            blocks: vec![BlockSpec::identity(&[1])],
            final_activation: false,
        };
        let weights = vec![DenseMatrix::from_vec(1, 1, vec![w]).unwrap(); 3];
        ModelState::from_weights(&arch, Hyper { weight_decay, ..Hyper::default() }, weights).unwrap()
    }

    fn grads(g: f64) -> Vec<DenseMatrix> {
        vec![DenseMatrix::from_vec(1, 1, vec![g]).unwrap(); 3]
    }

    #[test]
    fn zero_gradient_no_decay_leaves_weights() {
        let mut s = scalar_state(0.7, 0.0);
        adam_step(&mut s, &grads(0.0)).unwrap();
        assert!(s.weights.iter().all(|w| w.get(0, 0) == 0.7));
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = scalar_state(0.5, 0.0);
        adam_step(&mut s, &grads(1.0)).unwrap();
        // m̂ = 1, v̂ = 1, so Δ = -lr / (1 + eps).
        let expected = 0.5 - 0.001 / (1.0 + 1e-8);
        assert!((s.weights[0].get(0, 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn identical_inputs_identical_states() {
        let mut a = scalar_state(0.3, 0.0005);
        let mut b = a.clone();
        for k in 0..5 {
            adam_step(&mut a, &grads(0.1 * k as f64)).unwrap();
            adam_step(&mut b, &grads(0.1 * k as f64)).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_gradient_names_the_layer() {
        let mut s = scalar_state(0.3, 0.0);
        let mut g = grads(0.0);
        g[1].data_mut()[0] = f64::NAN;
        let err = adam_step(&mut s, &g).unwrap_err();
        assert!(err.to_string().contains("block0.layer0"), "{err}");
        assert_eq!(s.step, 0);
    }
}
