use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Sextuple-loop sliding window, independent of the im2col path.
fn naive_conv2d(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
    let (ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (co, k) = (w.shape()[0], w.shape()[2]);
    let half = (k / 2) as isize;
    let xa = |c: usize, y: isize, xx: isize| -> f64 {
        if y < 0 || xx < 0 || y >= h as isize || xx >= wd as isize {
            0.0
        } else {
            x.data()[(c * h + y as usize) * wd + xx as usize]
        }
    };
    let mut out = Tensor::zeros(&[co, h, wd]);
    for o in 0..co {
        for y in 0..h {
            for xx in 0..wd {
                let mut acc = b.data()[o];
                for c in 0..ci {
                    for dy in 0..k {
                        for dx in 0..k {
                            let wv = w.data()[((o * ci + c) * k + dy) * k + dx];
                            acc += wv * xa(c, y as isize + dy as isize - half, xx as isize + dx as isize - half);
                        }
                    }
                }
                out.data_mut()[(o * h + y) * wd + xx] = acc;
            }
        }
    }
    out
}

fn naive_conv1d(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
    let (ci, l) = (x.shape()[0], x.shape()[1]);
    let (co, k) = (w.shape()[0], w.shape()[2]);
    let half = (k / 2) as isize;
    let mut out = Tensor::zeros(&[co, l]);
    for o in 0..co {
        for t in 0..l {
            let mut acc = b.data()[o];
            for c in 0..ci {
                for j in 0..k {
                    let s = t as isize + j as isize - half;
                    if s >= 0 && s < l as isize {
                        acc += w.data()[(o * ci + c) * k + j] * x.data()[c * l + s as usize];
                    }
                }
            }
            out.data_mut()[o * l + t] = acc;
        }
    }
    out
}

fn max_abs_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn conv2d_identity_kernel_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&[3, 5, 4], &mut rng);
    let w = Tensor::from_fn(&[3, 3, 1, 1], |i| if i / 3 == i % 3 { 1.0 } else { 0.0 });
    let y = conv2d(&x, &w, &Tensor::zeros(&[3])).unwrap();
    assert_eq!(y, x);
}

#[test]
fn conv2d_zero_weights_gives_bias_planes() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(&[2, 4, 4], &mut rng);
    let b = Tensor::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap();
    let y = conv2d(&x, &Tensor::zeros(&[3, 2, 3, 3]), &b).unwrap();
    for c in 0..3 {
        assert!(y.data()[c * 16..(c + 1) * 16].iter().all(|&v| v == b.data()[c]));
    }
}

#[test]
fn conv2d_matches_sliding_window_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // 2×3×5×5 input read as two independent 3×5×5 samples
    for _ in 0..2 {
        let x = random(&[3, 5, 5], &mut rng);
        let w = random(&[4, 3, 3, 3], &mut rng);
        let b = random(&[4], &mut rng);
        let y = conv2d(&x, &w, &b).unwrap();
        assert!(max_abs_diff(&y, &naive_conv2d(&x, &w, &b)) < 1e-12);
    }
    let x = random(&[2, 7, 6], &mut rng);
    let w = random(&[3, 2, 5, 5], &mut rng);
    let b = random(&[3], &mut rng);
    assert!(max_abs_diff(&conv2d(&x, &w, &b).unwrap(), &naive_conv2d(&x, &w, &b)) < 1e-12);
}

#[test]
fn conv2d_rejects_bad_shapes() {
    let x = Tensor::<f64>::zeros(&[2, 4, 4]);
    let err = conv2d(&x, &Tensor::zeros(&[3, 1, 3, 3]), &Tensor::zeros(&[3])).unwrap_err();
    assert!(err.to_string().contains("input channels"), "{err}");
    assert!(conv2d(&x, &Tensor::zeros(&[3, 2, 2, 2]), &Tensor::zeros(&[3])).is_err());
    assert!(conv2d(&x, &Tensor::zeros(&[3, 2, 3, 3]), &Tensor::zeros(&[2])).is_err());
}

#[test]
fn conv1d_identity_and_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(&[2, 9], &mut rng);
    let w = Tensor::from_fn(&[2, 2, 1], |i| if i / 2 == i % 2 { 1.0 } else { 0.0 });
    assert_eq!(conv1d(&x, &w, &Tensor::zeros(&[2])).unwrap(), x);
    let b = Tensor::new(vec![2], vec![3.0, -2.0]).unwrap();
    let y = conv1d(&x, &Tensor::zeros(&[2, 2, 3]), &b).unwrap();
    assert!(y.data()[..9].iter().all(|&v| v == 3.0));
    assert!(y.data()[9..].iter().all(|&v| v == -2.0));
}

#[test]
fn conv1d_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(&[2, 64], &mut rng);
    let w = random(&[3, 2, 3], &mut rng);
    let b = random(&[3], &mut rng);
    let y = conv1d(&x, &w, &b).unwrap();
    assert!(max_abs_diff(&y, &naive_conv1d(&x, &w, &b)) < 1e-12);
}

#[test]
fn relu_cases() {
    let t = Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap();
    assert_eq!(relu(&t).data(), &[0.0, 0.0, 2.0]);
    let neg = Tensor::new(vec![4], vec![-1.0, -0.5, -3.0, -1e-9]).unwrap();
    assert!(relu(&neg).data().iter().all(|&v| v == 0.0));
    let pos = Tensor::new(vec![3], vec![1.0, 0.5, 3.0]).unwrap();
    assert_eq!(relu(&pos), pos);
}

#[test]
fn linear_node_adjoint_is_seed_times_input() {
    let mut g = Graph::<f64>::new();
    let w = g.input(Tensor::scalar(1.7));
    let x = g.input(Tensor::scalar(-0.3));
    let y = g.linear_combine(w, &[x]).unwrap();
    let adj = g.backward(y, &Tensor::scalar(2.5)).unwrap();
    assert!((adj.get(w).unwrap().data()[0] - 2.5 * -0.3).abs() < 1e-15);
    assert!((adj.get(x).unwrap().data()[0] - 2.5 * 1.7).abs() < 1e-15);
}

#[test]
fn backward_rejects_mismatched_seed() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::zeros(&[2, 3]));
    let y = g.relu(x).unwrap();
    assert!(g.backward(y, &Tensor::zeros(&[3, 2])).is_err());
}

struct Net {
    layers: Vec<(Tensor<f64>, Tensor<f64>)>,
}

fn random_net(rng: &mut ChaCha8Rng, widths: &[usize]) -> Net {
    let layers = widths
        .windows(2)
        .map(|p| (random(&[p[1], p[0], 3, 3], rng).scaled(0.5), random(&[p[1]], rng).scaled(0.1)))
        .collect();
    Net { layers }
}

/// Builds the 4-layer conv/ReLU stack; returns output and parameter ids.
fn build(g: &mut Graph<f64>, net: &Net, x: &Tensor<f64>) -> (NodeId, NodeId, Vec<(NodeId, NodeId)>) {
    let xin = g.input(x.clone());
    let mut h = xin;
    let mut params = Vec::new();
    let n = net.layers.len();
    for (i, (w, b)) in net.layers.iter().enumerate() {
        let wi = g.input(w.clone());
        let bi = g.input(b.clone());
        h = g.conv2d(h, wi, bi).unwrap();
        if i + 1 < n {
            h = g.relu(h).unwrap();
        }
        params.push((wi, bi));
    }
    (h, xin, params)
}

fn loss_of(net: &Net, x: &Tensor<f64>, seed: &Tensor<f64>) -> f64 {
    let mut g = Graph::new();
    let (out, _, _) = build(&mut g, net, x);
    g.value(out).dot(seed).unwrap()
}

#[test]
fn zero_seed_gives_zero_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let net = random_net(&mut rng, &[2, 3, 3, 3, 2]);
    let x = random(&[2, 5, 5], &mut rng);
    let mut g = Graph::new();
    let (out, xin, params) = build(&mut g, &net, &x);
    let adj = g.backward(out, &Tensor::zeros(&[2, 5, 5])).unwrap();
    for id in std::iter::once(xin).chain(params.iter().flat_map(|&(w, b)| [w, b])) {
        if let Some(t) = adj.get(id) {
            assert!(t.data().iter().all(|&v| v == 0.0));
        }
    }
}

#[test]
fn four_layer_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let net = random_net(&mut rng, &[2, 4, 4, 4, 2]);
    let x = random(&[2, 6, 6], &mut rng);
    let seed = random(&[2, 6, 6], &mut rng);
    let mut g = Graph::new();
    let (out, xin, params) = build(&mut g, &net, &x);
    let mut adj = g.backward(out, &seed).unwrap();

    let grad_x = adj.take_or_zeros(&g, xin);
    let grads: Vec<_> = params
        .iter()
        .map(|&(w, b)| (adj.take_or_zeros(&g, w), adj.take_or_zeros(&g, b)))
        .collect();

    let h = 1e-5;
    for trial in 0..5 {
        // random direction over all parameters and the input
        let dirs: Vec<(Tensor<f64>, Tensor<f64>)> = net
            .layers
            .iter()
            .map(|(w, b)| (random(w.shape(), &mut rng), random(b.shape(), &mut rng)))
            .collect();
        let dx = random(x.shape(), &mut rng);
        let perturbed = |s: f64| {
            let layers = net
                .layers
                .iter()
                .zip(&dirs)
                .map(|((w, b), (dw, db))| {
                    let mut w = w.clone();
                    let mut b = b.clone();
                    w.axpy(s, dw).unwrap();
                    b.axpy(s, db).unwrap();
                    (w, b)
                })
                .collect();
            let mut xx = x.clone();
            xx.axpy(s, &dx).unwrap();
            loss_of(&Net { layers }, &xx, &seed)
        };
        let fd = (perturbed(h) - perturbed(-h)) / (2.0 * h);
        let mut analytic = grad_x.dot(&dx).unwrap();
        for ((gw, gb), (dw, db)) in grads.iter().zip(&dirs) {
            analytic += gw.dot(dw).unwrap() + gb.dot(db).unwrap();
        }
        let rel = (fd - analytic).abs() / analytic.abs().max(1e-12);
        assert!(rel < 1e-5, "trial {trial}: fd {fd} analytic {analytic} rel {rel}");
    }
}

#[test]
fn conv_adjoint_consistency() {
    // <J^T u, v> == <u, J v> for the linear maps x -> conv(x) and w -> conv(w)
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let x = random(&[3, 5, 6], &mut rng);
        let w = random(&[2, 3, 3, 3], &mut rng);
        let zero_b = Tensor::zeros(&[2]);
        let u = random(&[2, 5, 6], &mut rng);
        let vx = random(x.shape(), &mut rng);
        let vw = random(w.shape(), &mut rng);

        let mut g = Graph::new();
        let xi = g.input(x.clone());
        let wi = g.input(w.clone());
        let bi = g.input(zero_b.clone());
        let y = g.conv2d(xi, wi, bi).unwrap();
        let adj = g.backward(y, &u).unwrap();

        let jx = conv2d(&vx, &w, &zero_b).unwrap();
        let lhs = adj.get(xi).unwrap().dot(&vx).unwrap();
        assert!((lhs - u.dot(&jx).unwrap()).abs() < 1e-10);

        let jw = conv2d(&x, &vw, &zero_b).unwrap();
        let lhs = adj.get(wi).unwrap().dot(&vw).unwrap();
        assert!((lhs - u.dot(&jw).unwrap()).abs() < 1e-10);
    }
    for _ in 0..10 {
        let x = random(&[2, 11], &mut rng);
        let w = random(&[3, 2, 3], &mut rng);
        let zero_b = Tensor::zeros(&[3]);
        let u = random(&[3, 11], &mut rng);
        let vx = random(x.shape(), &mut rng);
        let mut g = Graph::new();
        let xi = g.input(x.clone());
        let wi = g.input(w.clone());
        let bi = g.input(zero_b.clone());
        let y = g.conv1d(xi, wi, bi).unwrap();
        let adj = g.backward(y, &u).unwrap();
        let jx = conv1d(&vx, &w, &zero_b).unwrap();
        assert!((adj.get(xi).unwrap().dot(&vx).unwrap() - u.dot(&jx).unwrap()).abs() < 1e-10);
    }
}

#[test]
fn add_bias_and_relu_adjoints() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = random(&[3, 4], &mut rng);
    let b = random(&[3], &mut rng);
    let seed = random(&[3, 4], &mut rng);
    let mut g = Graph::new();
    let xi = g.input(x.clone());
    let bi = g.input(b.clone());
    let y = g.add_bias(xi, bi).unwrap();
    let r = g.relu(y).unwrap();
    let adj = g.backward(r, &seed).unwrap();
    let pre = g.value(y);
    for c in 0..3 {
        let expect: f64 = (0..4)
            .filter(|&j| pre.data()[c * 4 + j] > 0.0)
            .map(|j| seed.data()[c * 4 + j])
            .sum();
        assert!((adj.get(bi).unwrap().data()[c] - expect).abs() < 1e-14);
    }
}

#[test]
fn forward_is_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let net = random_net(&mut rng, &[4, 4, 4, 4, 4]);
    let x = random(&[4, 8, 8], &mut rng);
    let run = || {
        let mut g = Graph::new();
        let (out, _, _) = build(&mut g, &net, &x);
        g.value(out).clone()
    };
    let (a, b) = (run(), run());
    assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
}
