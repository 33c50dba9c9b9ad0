//! The structured energy and its exact-inference companions. The energy of a
//! labeling y (one-hot rows or relaxed rows) given per-position unary scores
//! and a transition matrix is
//!
//!   E = -( sum_t sum_i y[t][i] * unary[t][i] + sum_{t>=2} y[t-1]^T W y[t] )
//!
//! The transition sum starts at the second position; there are no boundary
//! potentials.

use thiserror::Error;

use crate::numgrad::{log_sum_exp, Graph, NodeId, Tensor};

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("instance too large for brute force: L^n = {0:.3e} exceeds guard")]
    TooLarge(f64),
}

/// One-hot matrix for a discrete labeling.
pub fn one_hot(labels: &[usize], num_labels: usize) -> Tensor {
    let mut t = Tensor::zeros(labels.len(), num_labels);
    for (r, &l) in labels.iter().enumerate() {
        assert!(l < num_labels, "label index {l} out of range {num_labels}");
        t.set(r, l, 1.0);
    }
    t
}

/// Energy of a discrete labeling.
pub fn discrete_energy(unary: &Tensor, w: &Tensor, labels: &[usize]) -> f64 {
    assert_eq!(unary.rows, labels.len(), "labeling length mismatch");
    let mut score = 0.0;
    for (t, &l) in labels.iter().enumerate() {
        score += unary.get(t, l);
        if t > 0 {
            score += w.get(labels[t - 1], l);
        }
    }
    -score
}

/// Energy of a relaxed labeling (rows need not be one-hot).
pub fn relaxed_energy(unary: &Tensor, w: &Tensor, y: &Tensor) -> f64 {
    assert!(y.same_shape(unary), "relaxed labeling shape mismatch");
    let mut score = 0.0;
    for t in 0..y.rows {
        for i in 0..y.cols {
            score += y.get(t, i) * unary.get(t, i);
        }
        if t > 0 {
            for i in 0..w.rows {
                let p = y.get(t - 1, i);
                if p == 0.0 {
                    continue;
                }
                for j in 0..w.cols {
                    score += p * w.get(i, j) * y.get(t, j);
                }
            }
        }
    }
    -score
}

/// Graph node for the energy, differentiable w.r.t. unary, w, and y.
pub fn energy_node(g: &mut Graph, unary: NodeId, w: NodeId, y: NodeId) -> NodeId {
    let n = g.value(y).rows;
    let local = g.mul(y, unary);
    let mut total = g.sum_all(local);
    if n > 1 {
        let prev = g.slice_rows(y, 0, n - 1);
        let next = g.slice_rows(y, 1, n);
        let pw = g.matmul(prev, w);
        let pairwise = g.mul(pw, next);
        let trans = g.sum_all(pairwise);
        total = g.add(total, trans);
    }
    g.scale(total, -1.0)
}

/// Exact lowest-energy labeling via the Viterbi dynamic program, O(n L^2).
/// Ties are broken toward the lowest label index at each backtrack step.
/// The returned energy is recomputed with `discrete_energy` so it is
/// bit-comparable with the brute-force oracle.
pub fn viterbi(unary: &Tensor, w: &Tensor) -> (Vec<usize>, f64) {
    let (n, l) = (unary.rows, unary.cols);
    assert!(n >= 1, "viterbi on empty sequence");
    let mut delta = unary.row_slice(0).to_vec();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(n);
    for t in 1..n {
        let mut next = vec![f64::NEG_INFINITY; l];
        let mut ptr = vec![0usize; l];
        for j in 0..l {
            let mut best_i = 0;
            let mut best = delta[0] + w.get(0, j);
            for i in 1..l {
                let s = delta[i] + w.get(i, j);
                if s > best {
                    best = s;
                    best_i = i;
                }
            }
            next[j] = best + unary.get(t, j);
            ptr[j] = best_i;
        }
        back.push(ptr);
        delta = next;
    }
    let mut last = 0;
    for j in 1..l {
        if delta[j] > delta[last] {
            last = j;
        }
    }
    let mut labels = vec![0usize; n];
    labels[n - 1] = last;
    for t in (1..n).rev() {
        labels[t - 1] = back[t - 1][labels[t]];
    }
    let energy = discrete_energy(unary, w, &labels);
    (labels, energy)
}

const BRUTE_FORCE_GUARD: f64 = 1e7;

/// Exhaustive decode over all L^n labelings; the test oracle for `viterbi`.
/// Uses the same tie-break rule: among equal-energy labelings the one whose
/// reversed sequence is lexicographically smallest wins, which is exactly
/// what per-step lowest-index backtracking produces.
pub fn brute_force_decode(unary: &Tensor, w: &Tensor) -> Result<(Vec<usize>, f64), DecodeError> {
    let (n, l) = (unary.rows, unary.cols);
    let total = (l as f64).powi(n as i32);
    if total > BRUTE_FORCE_GUARD {
        return Err(DecodeError::TooLarge(total));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut labels = vec![0usize; n];
    loop {
        let e = discrete_energy(unary, w, &labels);
        let better = match &best {
            None => true,
            Some((be, bl)) => {
                e < *be
                    || (e == *be
                        && labels.iter().rev().cmp(bl.iter().rev()) == std::cmp::Ordering::Less)
            }
        };
        if better {
            best = Some((e, labels.clone()));
        }
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == n {
                let (e, lab) = best.unwrap();
                return Ok((lab, e));
            }
            labels[pos] += 1;
            if labels[pos] < l {
                break;
            }
            labels[pos] = 0;
            pos += 1;
        }
    }
}

/// Log partition function: log sum over all labelings of exp(-E), computed
/// with the forward recursion in log space.
pub fn log_partition(unary: &Tensor, w: &Tensor) -> f64 {
    let (n, l) = (unary.rows, unary.cols);
    assert!(n >= 1);
    let mut alpha = unary.row_slice(0).to_vec();
    let mut scratch = vec![0.0; l];
    for t in 1..n {
        let mut next = vec![0.0; l];
        for (j, slot) in next.iter_mut().enumerate() {
            for i in 0..l {
                scratch[i] = alpha[i] + w.get(i, j);
            }
            *slot = log_sum_exp(&scratch) + unary.get(t, j);
        }
        alpha = next;
    }
    log_sum_exp(&alpha)
}

/// Graph version of the forward recursion, differentiable w.r.t. unary and
/// w. Gradients come from differentiating through this graph rather than a
/// hand-coded forward-backward pass.
pub fn log_partition_node(g: &mut Graph, unary: NodeId, w: NodeId) -> NodeId {
    let n = g.value(unary).rows;
    let wt = g.transpose(w);
    let mut alpha = g.slice_rows(unary, 0, 1);
    for t in 1..n {
        let m = g.add_row(wt, alpha); // m[j][i] = w[i][j] + alpha[i]
        let lse = g.log_sum_exp_rows(m); // L x 1
        let lse_row = g.transpose(lse);
        let ut = g.slice_rows(unary, t, t + 1);
        alpha = g.add(lse_row, ut);
    }
    g.log_sum_exp_rows(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_instance() -> (Tensor, Tensor) {
        // n=2, L=2, unary=[[1,0],[0,2]], W=diag(0.5)
        let unary = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]);
        let w = Tensor::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.5]]);
        (unary, w)
    }

    #[test]
    fn zero_potentials_zero_energy() {
        let unary = Tensor::zeros(3, 4);
        let w = Tensor::zeros(4, 4);
        assert_eq!(discrete_energy(&unary, &w, &[0, 1, 2]), 0.0);
        let y = Tensor::filled(3, 4, 0.25);
        assert_eq!(relaxed_energy(&unary, &w, &y), 0.0);
    }

    #[test]
    fn tiny_instance_energies() {
        let (unary, w) = tiny_instance();
        // one-hot (0, 1): -(1 + 2 + W[0][1]) = -3.0
        assert_eq!(discrete_energy(&unary, &w, &[0, 1]), -3.0);
        // uniform rows: -(0.5 + 1.0 + 0.25) = -1.75
        let y = Tensor::filled(2, 2, 0.5);
        assert!((relaxed_energy(&unary, &w, &y) - (-1.75)).abs() < 1e-12);
    }

    #[test]
    fn relaxed_energy_matches_graph_node() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let n = 1 + (rand::Rng::gen_range(&mut rng, 0..5) as usize);
            let l = 2 + (rand::Rng::gen_range(&mut rng, 0..4) as usize);
            let unary = Tensor::rand_uniform(n, l, -2.0, 2.0, &mut rng);
            let w = Tensor::rand_uniform(l, l, -1.0, 1.0, &mut rng);
            let y = Tensor::rand_uniform(n, l, 0.0, 1.0, &mut rng);
            let direct = relaxed_energy(&unary, &w, &y);
            let mut g = Graph::new();
            let (u, wn, yn) = (
                g.constant(unary.clone()),
                g.constant(w.clone()),
                g.constant(y.clone()),
            );
            let e = energy_node(&mut g, u, wn, yn);
            assert!((g.scalar(e).unwrap() - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn one_hot_energy_matches_path_score_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let n = 1 + (rand::Rng::gen_range(&mut rng, 0..6) as usize);
            let l = 2 + (rand::Rng::gen_range(&mut rng, 0..4) as usize);
            let unary = Tensor::rand_uniform(n, l, -2.0, 2.0, &mut rng);
            let w = Tensor::rand_uniform(l, l, -1.0, 1.0, &mut rng);
            let labels: Vec<usize> = (0..n)
                .map(|_| rand::Rng::gen_range(&mut rng, 0..l))
                .collect();
            let via_relaxed = relaxed_energy(&unary, &w, &one_hot(&labels, l));
            let direct = discrete_energy(&unary, &w, &labels);
            assert!((via_relaxed - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn viterbi_zero_transitions_is_argmax() {
        let unary = Tensor::from_rows(&[vec![0.1, 0.9], vec![0.8, 0.2], vec![0.3, 0.7]]);
        let w = Tensor::zeros(2, 2);
        let (labels, _) = viterbi(&unary, &w);
        assert_eq!(labels, vec![1, 0, 1]);
    }

    #[test]
    fn viterbi_tiny_instance() {
        let (unary, w) = tiny_instance();
        let (labels, e) = viterbi(&unary, &w);
        assert_eq!(labels, vec![0, 1]);
        assert_eq!(e, -3.0);
    }

    #[test]
    fn viterbi_tie_break_all_zeros() {
        let unary = Tensor::zeros(4, 3);
        let w = Tensor::zeros(3, 3);
        let (labels, e) = viterbi(&unary, &w);
        assert_eq!(labels, vec![0, 0, 0, 0]);
        assert_eq!(e, 0.0);
    }

    #[test]
    fn brute_force_edge_cases() {
        let unary = Tensor::from_rows(&[vec![0.3, 0.9, 0.1]]);
        let w = Tensor::zeros(3, 3);
        let (labels, _) = brute_force_decode(&unary, &w).unwrap();
        assert_eq!(labels, vec![1]); // n=1: argmin of -unary row

        let unary1 = Tensor::from_rows(&[vec![0.5], vec![0.2]]);
        let w1 = Tensor::from_rows(&[vec![0.3]]);
        let (labels1, e1) = brute_force_decode(&unary1, &w1).unwrap();
        assert_eq!(labels1, vec![0, 0]); // L=1: the only labeling
        assert_eq!(e1, -1.0);
    }

    #[test]
    fn brute_force_guard() {
        let unary = Tensor::zeros(20, 10);
        let w = Tensor::zeros(10, 10);
        assert!(brute_force_decode(&unary, &w).is_err());
    }

    #[test]
    fn viterbi_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = 1 + (rand::Rng::gen_range(&mut rng, 0..7) as usize);
            let l = 2 + (rand::Rng::gen_range(&mut rng, 0..4) as usize);
            let unary = Tensor::rand_uniform(n, l, -2.0, 2.0, &mut rng);
            let w = Tensor::rand_uniform(l, l, -1.0, 1.0, &mut rng);
            let (vl, ve) = viterbi(&unary, &w);
            let (bl, be) = brute_force_decode(&unary, &w).unwrap();
            assert_eq!(vl, bl);
            assert_eq!(ve, be);
        }
    }

    #[test]
    fn log_partition_uniform() {
        let unary = Tensor::zeros(3, 4);
        let w = Tensor::zeros(4, 4);
        let expect = 3.0 * (4.0f64).ln();
        assert!((log_partition(&unary, &w) - expect).abs() < 1e-12);
    }

    #[test]
    fn log_partition_matches_enumeration() {
        let (unary, w) = tiny_instance();
        // paths: (0,0): 1+0+0.5=1.5; (0,1): 1+2+0=3.0; (1,0): 0+0+0=0;
        // (1,1): 0+2+0.5=2.5
        let expect = (1.5f64.exp() + 3.0f64.exp() + 1.0 + 2.5f64.exp()).ln();
        assert!((log_partition(&unary, &w) - expect).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let n = 1 + (rand::Rng::gen_range(&mut rng, 0..5) as usize);
            let l = 2 + (rand::Rng::gen_range(&mut rng, 0..4) as usize);
            let unary = Tensor::rand_uniform(n, l, -2.0, 2.0, &mut rng);
            let w = Tensor::rand_uniform(l, l, -1.0, 1.0, &mut rng);
            // brute-force log-sum over all paths
            let mut scores = Vec::new();
            let mut labels = vec![0usize; n];
            'outer: loop {
                scores.push(-discrete_energy(&unary, &w, &labels));
                let mut pos = 0;
                loop {
                    if pos == n {
                        break 'outer;
                    }
                    labels[pos] += 1;
                    if labels[pos] < l {
                        break;
                    }
                    labels[pos] = 0;
                    pos += 1;
                }
            }
            let expect = log_sum_exp(&scores);
            let got = log_partition(&unary, &w);
            assert!((got - expect).abs() <= 1e-6, "got {got}, expect {expect}");
            // every path is dominated by the sum
            for s in scores {
                assert!(got >= s - 1e-9);
            }
            // graph version agrees
            let mut g = Graph::new();
            let (u, wn) = (g.constant(unary.clone()), g.constant(w.clone()));
            let node = log_partition_node(&mut g, u, wn);
            assert!((g.scalar(node).unwrap() - expect).abs() <= 1e-6);
        }
    }

    #[test]
    fn log_partition_gradcheck() {
        use crate::numgrad::{grad_check, ParamSet};
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut params = ParamSet::new();
        let u = params.add("unary", Tensor::rand_uniform(3, 3, -1.0, 1.0, &mut rng));
        let w = params.add("w", Tensor::rand_uniform(3, 3, -1.0, 1.0, &mut rng));
        let err = grad_check(
            &mut params,
            move |g, bind| log_partition_node(g, bind.node(u), bind.node(w)),
            1e-5,
        );
        assert!(err <= 1e-4, "rel err {err}");
    }
}
