//! Dense tensors, reverse-mode differentiation, Adam, and gradient checking.

mod adam;
mod gradcheck;
mod graph;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::grad_check;
pub use graph::{softmax_into, Graph, NodeId, ParamGrads};
pub use tensor::{ParamId, ParamStore, Tensor};

/// Default global-norm clipping threshold.
pub const DEFAULT_CLIP_NORM: f64 = 5.0;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;
    use alloc::vec;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut g = Graph::new();
        let x = g.constant(1, 2, vec![0.0, 0.0]).unwrap();
        let y = g.softmax_rows(x);
        assert_eq!(g.value(y), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut g = Graph::new();
        let x = g.constant(2, 3, vec![1000.0, -3.0, 2.0, 0.1, 0.2, -50.0]).unwrap();
        let y = g.softmax_rows(x);
        for row in g.value(y).chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|p| *p >= 0.0));
        }
    }

    #[test]
    fn sigmoid_at_zero() {
        let mut g = Graph::new();
        let x = g.scalar_const(0.0);
        let y = g.sigmoid(x);
        assert_eq!(g.scalar(y), 0.5);
    }

    #[test]
    fn identity_matmul() {
        let mut g = Graph::new();
        let i = g.constant(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let a = g.constant(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let y = g.matmul(i, a).unwrap();
        assert_eq!(g.value(y), g.value(a));
    }

    #[test]
    fn matmul_shape_mismatch() {
        let mut g = Graph::new();
        let a = g.zeros(2, 3);
        let b = g.zeros(2, 3);
        assert!(matches!(g.matmul(a, b), Err(Error::Shape { .. })));
        assert!(g.matmul_t(a, b).is_ok());
    }

    #[test]
    fn sum_gives_unit_gradient() {
        let mut s = ParamStore::new();
        let a = s.insert("a", Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
        let mut g = Graph::new();
        let x = g.param(&s, a);
        let l = g.sum(x);
        g.backward(l, &mut s).unwrap();
        assert_eq!(s.get(a).grad(), &[1.0; 4]);
    }

    #[test]
    fn square_gradient_and_accumulation() {
        let mut s = ParamStore::new();
        let a = s.insert("x", Tensor::from_vec(&[1], vec![3.0]).unwrap()).unwrap();
        let mut g = Graph::new();
        let x = g.param(&s, a);
        let sq = g.mul(x, x).unwrap();
        let l = g.sum(sq);
        g.backward(l, &mut s).unwrap();
        assert_eq!(s.get(a).grad(), &[6.0]);
        g.backward(l, &mut s).unwrap();
        assert_eq!(s.get(a).grad(), &[12.0]);
        s.zero_grad();
        assert_eq!(s.get(a).grad(), &[0.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut s = ParamStore::new();
        let a = s.insert("a", Tensor::zeros(&[3])).unwrap();
        let mut g = Graph::new();
        let x = g.param(&s, a);
        assert!(matches!(g.backward(x, &mut s), Err(Error::Shape { .. })));
    }

    #[test]
    fn dropout_scales_survivors_and_is_off_in_inference() {
        let mut rng = crate::seeded_rng(3);
        let mut g = Graph::training();
        let x = g.constant(1, 1000, vec![1.0; 1000]).unwrap();
        let y = g.dropout(x, 0.25, &mut rng).unwrap();
        let v = g.value(y);
        assert!(v.iter().all(|&u| u == 0.0 || (u - 1.0 / 0.75).abs() < 1e-15));
        let dropped = v.iter().filter(|&&u| u == 0.0).count();
        assert!((150..350).contains(&dropped), "{dropped}");

        let mut g = Graph::new();
        let x = g.constant(1, 4, vec![1.0; 4]).unwrap();
        let y = g.dropout(x, 0.5, &mut rng).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn clipping_preserves_direction() {
        let mut s = ParamStore::new();
        let a = s.insert("a", Tensor::zeros(&[2])).unwrap();
        let b = s.insert("b", Tensor::zeros(&[1])).unwrap();
        s.get_mut(a).grad_mut().copy_from_slice(&[3.0, 4.0]);
        s.get_mut(b).grad_mut().copy_from_slice(&[12.0]);
        let norm = s.clip_grad_norm(&[a, b], DEFAULT_CLIP_NORM);
        assert!((norm - 13.0).abs() < 1e-12);
        let k = 5.0 / 13.0;
        assert!(close(s.get(a).grad(), &[3.0 * k, 4.0 * k], 1e-12));
        assert!(close(s.get(b).grad(), &[12.0 * k], 1e-12));
        assert!((s.grad_norm(&[a, b]) - 5.0).abs() < 1e-12);

        // below the threshold nothing changes
        s.clip_grad_norm(&[a, b], 100.0);
        assert!(close(s.get(a).grad(), &[3.0 * k, 4.0 * k], 1e-12));
    }

    #[test]
    fn params_are_stored_at_f32_precision() {
        let mut s = ParamStore::new();
        let a = s.insert("a", Tensor::from_vec(&[1], vec![0.1]).unwrap()).unwrap();
        assert_eq!(s.get(a).values()[0], 0.1f32 as f64);
    }

    #[test]
    fn log_softmax_matches_log_of_softmax() {
        let mut g = Graph::new();
        let x = g.constant(1, 4, vec![0.3, -1.2, 2.5, 0.0]).unwrap();
        let a = g.log_softmax_rows(x);
        let s = g.softmax_rows(x);
        let b = g.log(s);
        assert!(close(g.value(a), g.value(b), 1e-12));
    }
}
