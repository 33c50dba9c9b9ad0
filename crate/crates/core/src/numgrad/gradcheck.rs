//! Central-finite-difference validation of reverse-mode gradients.

use super::graph::{Graph, NodeId};
use super::params::{Binding, ParamSet};

/// Compare the reverse-mode gradient of a scalar loss against central
/// differences, element by element over every parameter. Returns the maximum
/// relative error, with relative error defined as |a - n| / max(1, |a|, |n|).
///
/// The builder must be deterministic (fixed dropout masks, no fresh RNG
/// draws per call), since it is re-evaluated at perturbed points.
pub fn grad_check<F>(params: &mut ParamSet, build: F, eps: f64) -> f64
where
    F: Fn(&mut Graph, &Binding) -> NodeId,
{
    let analytic: Vec<Option<Vec<f64>>> = {
        let mut g = Graph::new();
        let bind = params.bind(&mut g, true);
        let loss = build(&mut g, &bind);
        let grads = g.backward(loss).expect("grad_check: non-finite forward");
        bind.collect(&grads)
            .into_iter()
            .map(|t| t.map(|t| t.data))
            .collect()
    };

    let eval = |params: &ParamSet| -> f64 {
        let mut g = Graph::new();
        let bind = params.bind(&mut g, false);
        let loss = build(&mut g, &bind);
        g.scalar(loss).expect("grad_check: non-finite at perturbed point")
    };

    let mut max_rel = 0.0f64;
    for pi in 0..params.len() {
        let n_elems = params.get(super::params::ParamId(pi)).numel();
        for k in 0..n_elems {
            let a = analytic[pi].as_ref().map_or(0.0, |g| g[k]);
            let id = super::params::ParamId(pi);
            let orig = params.get(id).data[k];
            params.get_mut(id).data[k] = orig + eps;
            let up = eval(params);
            params.get_mut(id).data[k] = orig - eps;
            let down = eval(params);
            params.get_mut(id).data[k] = orig;
            let n = (up - down) / (2.0 * eps);
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1.0);
            max_rel = max_rel.max(rel);
        }
    }
    max_rel
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numgrad::Tensor;

    #[test]
    fn quadratic_gradient_matches() {
        let mut params = ParamSet::new();
        let p = params.add("p", Tensor::row(&[3.0]));
        let err = grad_check(
            &mut params,
            |g, bind| {
                let x = bind.node(p);
                g.mul(x, x)
            },
            1e-5,
        );
        assert!(err <= 1e-8, "rel err {err}");
    }

    #[test]
    fn constant_function_zero_gradients() {
        let mut params = ParamSet::new();
        params.add("p", Tensor::row(&[1.0, -2.0]));
        let err = grad_check(
            &mut params,
            |g, _| g.constant(Tensor::new(1, 1, vec![7.0])),
            1e-5,
        );
        assert_eq!(err, 0.0);
    }

    #[test]
    fn composite_ops_gradcheck() {
        // exercise matmul, add_row, tanh, sigmoid, softmax, lse, slices, concat
        let mut params = ParamSet::new();
        let mut rng = {
            use rand::SeedableRng;
            rand_chacha::ChaCha8Rng::seed_from_u64(11)
        };
        let w = params.add("w", Tensor::rand_uniform(3, 4, -0.5, 0.5, &mut rng));
        let b = params.add("b", Tensor::rand_uniform(1, 4, -0.5, 0.5, &mut rng));
        let x = Tensor::rand_uniform(2, 3, -1.0, 1.0, &mut rng);
        let err = grad_check(
            &mut params,
            move |g, bind| {
                let xin = g.constant(x.clone());
                let xw = g.matmul(xin, bind.node(w));
                let a = g.add_row(xw, bind.node(b));
                let t = g.tanh(a);
                let s = g.sigmoid(a);
                let m = g.mul(t, s);
                let left = g.slice_cols(m, 0, 2);
                let right = g.slice_cols(m, 2, 4);
                let cat = g.concat_cols(&[left, right]);
                let soft = g.softmax_rows(cat);
                let ln = g.ln_clamp(soft, 1e-12);
                let lse = g.log_sum_exp_rows(a);
                let s1 = g.sum_all(ln);
                let s2 = g.sum_all(lse);
                g.add(s1, s2)
            },
            1e-5,
        );
        assert!(err <= 1e-4, "rel err {err}");
    }

    #[test]
    fn lstm_cell_gradcheck() {
        use crate::numgrad::nn::LstmCell;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let mut params = ParamSet::new();
        let cell = LstmCell::new(&mut params, "lstm", 3, 4, 0.3, &mut rng);
        let x = Tensor::rand_uniform(1, 3, -1.0, 1.0, &mut rng);
        let err = grad_check(
            &mut params,
            move |g, bind| {
                let xin = g.constant(x.clone());
                let h0 = g.constant(Tensor::zeros(1, 4));
                let c0 = g.constant(Tensor::zeros(1, 4));
                let (h1, c1) = cell.step(g, bind, xin, h0, c0);
                let (h2, _) = cell.step(g, bind, xin, h1, c1);
                g.sum_all(h2)
            },
            1e-5,
        );
        assert!(err <= 1e-4, "rel err {err}");
    }

    #[test]
    fn blstm_gradcheck() {
        use crate::numgrad::nn::Blstm;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let mut params = ParamSet::new();
        let blstm = Blstm::new(&mut params, "enc", 2, 3, 0.3, &mut rng);
        let x = Tensor::rand_uniform(3, 2, -1.0, 1.0, &mut rng);
        let err = grad_check(
            &mut params,
            move |g, bind| {
                let xin = g.constant(x.clone());
                let enc = blstm.encode(g, bind, xin);
                g.sum_all(enc)
            },
            1e-5,
        );
        assert!(err <= 1e-4, "rel err {err}");
    }
}
