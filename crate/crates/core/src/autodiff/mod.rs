//! Minimal reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] records operations as they are evaluated. Leaves created with
//! [`Graph::param`] receive gradients, leaves created with [`Graph::input`]
//! do not. After [`Graph::backward`], read gradients back with
//! [`Graph::grad`].
//!
//! ```
//! use tsc_core::autodiff::{Graph, Tensor};
//!
//! let mut g = Graph::<f64>::new();
//! let x = g.param(Tensor::scalar(3.0));
//! let y = g.mul(x, x).unwrap();
//! g.backward(y).unwrap();
//! assert_eq!(g.grad(x).unwrap().data(), &[6.0]);
//! ```

mod graph;
mod tensor;

pub use graph::{sigmoid, Graph, Var};
pub use tensor::{softmax_rows, Tensor};

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const STEP: f64 = 1e-4;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(
            shape.to_vec(),
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
    }

    /// Compares reverse-mode gradients of `build` against central differences
    /// for every element of every input.
    fn check(inputs: &[Tensor<f64>], tol: f64, build: impl Fn(&mut Graph<f64>, &[Var]) -> Var) {
        let mut g = Graph::new();
        let vars: Vec<_> = inputs.iter().map(|t| g.param(t.clone())).collect();
        let loss = build(&mut g, &vars);
        g.backward(loss).unwrap();
        let eval = |ins: &[Tensor<f64>]| {
            let mut g = Graph::new();
            let vars: Vec<_> = ins.iter().map(|t| g.param(t.clone())).collect();
            let out = build(&mut g, &vars);
            g.value(out).item().unwrap()
        };
        for (k, t) in inputs.iter().enumerate() {
            let analytic = g
                .grad(vars[k])
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(t.shape()));
            for e in 0..t.numel() {
                let mut plus = inputs.to_vec();
                plus[k].data_mut()[e] += STEP;
                let mut minus = inputs.to_vec();
                minus[k].data_mut()[e] -= STEP;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * STEP);
                let a = analytic.data()[e];
                assert!(
                    rel_err(a, numeric) < tol,
                    "input {k} elem {e}: analytic {a} numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn matmul_identity_and_dot() {
        let mut g = Graph::<f64>::new();
        let i = g.input(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
        let b = g.input(Tensor::from_rows(&[vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap());
        let out = g.matmul(i, b).unwrap();
        assert_eq!(g.value(out).data(), &[3.0, 4.0, 5.0, 6.0]);

        let a = g.input(Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap());
        let c = g.input(Tensor::from_rows(&[vec![3.0], vec![4.0]]).unwrap());
        let out = g.matmul(a, c).unwrap();
        assert_eq!(g.value(out).data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::<f64>::new();
        let a = g.input(Tensor::zeros(&[2, 3]));
        let b = g.input(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("matmul"), "{msg}");
    }

    #[test]
    fn matmul_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(&mut rng, &[3, 4]);
        let b = random(&mut rng, &[4, 2]);
        check(&[a, b], 1e-6, |g, v| {
            let m = g.matmul(v[0], v[1]).unwrap();
            g.sum(m)
        });
    }

    #[test]
    fn elementwise_values() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::vector(vec![-1.0, 0.0, 2.0]).unwrap());
        let r = g.relu(x);
        assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.0]);
        let z = g.input(Tensor::scalar(0.0));
        let s = g.sigmoid(z);
        assert_eq!(g.value(s).data(), &[0.5]);
        assert!(matches!(
            g.log(x),
            Err(crate::Error::Domain { op: "log", .. })
        ));
    }

    #[test]
    fn elementwise_gradients_at_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let x = random(&mut rng, &[2, 3]);
            let y = random(&mut rng, &[2, 3]);
            let pos = x.map(|v| v.abs() + 0.1);
            check(std::slice::from_ref(&x), 1e-6, |g, v| {
                let t = g.tanh(v[0]);
                g.sum(t)
            });
            check(std::slice::from_ref(&x), 1e-6, |g, v| {
                let t = g.sigmoid(v[0]);
                g.sum(t)
            });
            check(std::slice::from_ref(&x), 1e-6, |g, v| {
                let t = g.relu(v[0]);
                g.sum(t)
            });
            check(&[pos], 1e-6, |g, v| {
                let t = g.log(v[0]).unwrap();
                g.sum(t)
            });
            check(&[x.clone(), y.clone()], 1e-6, |g, v| {
                let t = g.mul(v[0], v[1]).unwrap();
                let s = g.sub(t, v[1]).unwrap();
                let a = g.add(s, v[0]).unwrap();
                let sc = g.scale(a, 1.7);
                let sh = g.add_scalar(sc, 0.3);
                let t = g.tanh(sh);
                g.mean(t)
            });
        }
    }

    #[test]
    fn softmax_family_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let x = random(&mut rng, &[3, 4]);
            let w = random(&mut rng, &[3, 4]);
            check(std::slice::from_ref(&x), 1e-6, |g, v| {
                let wv = g.input(w.clone());
                let s = g.softmax(v[0]).unwrap();
                let p = g.mul(s, wv).unwrap();
                g.sum(p)
            });
            check(std::slice::from_ref(&x), 1e-6, |g, v| {
                let wv = g.input(w.clone());
                let s = g.log_softmax(v[0]).unwrap();
                let p = g.mul(s, wv).unwrap();
                g.sum(p)
            });
            check(&[x], 1e-6, |g, v| {
                let s = g.log_softmax(v[0]).unwrap();
                let p = g.pick(s, &[0, 3, 1]).unwrap();
                g.mean(p)
            });
        }
    }

    #[test]
    fn structural_ops_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = random(&mut rng, &[4, 3]);
        let h = random(&mut rng, &[4, 2]);
        let bias = random(&mut rng, &[3]);
        let w = random(&mut rng, &[2, 6]);
        check(&[f, h, bias], 1e-6, |g, v| {
            let fb = g.add_row(v[0], v[2]).unwrap();
            let s = g.softmax(v[1]).unwrap();
            let o = g.outer_rows(fb, s).unwrap();
            let top = g.slice_rows(o, 1, 3).unwrap();
            let wv = g.input(w.clone());
            let p = g.mul(top, wv).unwrap();
            let c = g.clamp(p, -0.2, 0.2);
            let t = g.tanh(p);
            let a = g.add(c, t).unwrap();
            g.sum(a)
        });
    }

    #[test]
    fn softmax_rows_are_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&mut rng, &[8, 5]).map(|v| v * 50.0);
        let mut g = Graph::new();
        let xv = g.input(x);
        let s = g.softmax(xv).unwrap();
        for r in 0..8 {
            let row = g.value(s).row(r);
            assert!(row.iter().all(|&p| p >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let u = g.input(Tensor::from_rows(&[vec![0.0, 0.0, 0.0]]).unwrap());
        let su = g.softmax(u).unwrap();
        assert!(g
            .value(su)
            .data()
            .iter()
            .all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
        let big = g.input(Tensor::from_rows(&[vec![1000.0, 0.0]]).unwrap());
        let sb = g.softmax(big).unwrap();
        assert!((g.value(sb).data()[0] - 1.0).abs() < 1e-12);
        assert!(g.value(sb).is_finite());
    }

    #[test]
    fn grl_forward_and_backward() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0, 3.0]).unwrap());
        let r = g.grl(x, 1.0).unwrap();
        assert_eq!(g.value(r).data(), &[1.0, 2.0, 3.0]);

        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::vector(vec![0.5, -0.5]).unwrap());
        let r = g.grl(x, 1.0).unwrap();
        let s = g.sum(r);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[-1.0, -1.0]);
        assert!(g.grl(x, -0.1).is_err());
    }

    #[test]
    fn grl_gradient_is_negated_scaled_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let x = random(&mut rng, &[3, 2]);
            let w = random(&mut rng, &[2, 2]);
            let coeff: f64 = rng.random_range(0.0..3.0);
            let grad_at = |with_grl: bool| {
                let mut g = Graph::new();
                let xv = g.param(x.clone());
                let h = if with_grl {
                    g.grl(xv, coeff).unwrap()
                } else {
                    xv
                };
                let wv = g.input(w.clone());
                let m = g.matmul(h, wv).unwrap();
                let t = g.tanh(m);
                let l = g.mean(t);
                g.backward(l).unwrap();
                g.grad(xv).unwrap().clone()
            };
            let plain = grad_at(false);
            let reversed = grad_at(true);
            for (r, p) in reversed.data().iter().zip(plain.data()) {
                assert_eq!(*r, -coeff * p);
            }
        }
    }

    #[test]
    fn backward_basics() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0, 3.0]).unwrap());
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0, 1.0, 1.0]);
        assert_eq!(g.grad(s).unwrap().data(), &[1.0]);
        assert!(matches!(g.backward(x), Err(crate::Error::Contract(_))));
    }

    #[test]
    fn inputs_receive_no_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::vector(vec![1.0, 2.0]).unwrap());
        let w = g.param(Tensor::vector(vec![3.0, 4.0]).unwrap());
        let p = g.mul(x, w).unwrap();
        let s = g.sum(p);
        g.backward(s).unwrap();
        assert!(g.grad(x).is_none());
        assert_eq!(g.grad(w).unwrap().data(), &[1.0, 2.0]);
        assert!(g.depends_on(s, w));
        assert!(!g.depends_on(w, s));
    }

    #[test]
    fn identical_graphs_are_bitwise_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random(&mut rng, &[5, 3]);
        let w = random(&mut rng, &[3, 4]);
        let run = || {
            let mut g = Graph::new();
            let xv = g.input(x.clone());
            let wv = g.param(w.clone());
            let m = g.matmul(xv, wv).unwrap();
            let s = g.log_softmax(m).unwrap();
            let l = g.mean(s);
            g.backward(l).unwrap();
            (g.value(l).clone(), g.grad(wv).unwrap().clone())
        };
        let (a, b) = (run(), run());
        assert_eq!(a.0.data()[0].to_bits(), b.0.data()[0].to_bits());
        assert!(a
            .1
            .data()
            .iter()
            .zip(b.1.data())
            .all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn works_in_single_precision() {
        let mut g = Graph::<f32>::new();
        let x = g.param(Tensor::scalar(3.0f32));
        let y = g.mul(x, x).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[6.0f32]);
    }
}
