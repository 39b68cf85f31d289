use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wxvae_core::gradcheck::{check, GradCheckConfig};
use wxvae_core::tensor::{conv_output_extent, Graph, Tensor, Var};
use wxvae_core::Error;

/// Direct nested-loop cross-correlation, independent of the im2col path.
fn conv3_oracle(
    x: &Tensor<f64>,
    k: &Tensor<f64>,
    b: &[f64],
    stride: usize,
    pad: usize,
) -> Tensor<f64> {
    let xs = x.shape();
    let ks = k.shape();
    let (n, ci, d, h, w) = (xs[0], xs[1], xs[2], xs[3], xs[4]);
    let (co, kd, kh, kw) = (ks[0], ks[2], ks[3], ks[4]);
    let od = (d + 2 * pad - kd) / stride + 1;
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let xd = x.data();
    let kdat = k.data();
    let mut out = vec![0.0; n * co * od * oh * ow];
    for s in 0..n {
        for o in 0..co {
            for z in 0..od {
                for y in 0..oh {
                    for q in 0..ow {
                        let mut acc = b[o];
                        for c in 0..ci {
                            for a in 0..kd {
                                for bb in 0..kh {
                                    for e in 0..kw {
                                        let iz = (z * stride + a) as isize - pad as isize;
                                        let iy = (y * stride + bb) as isize - pad as isize;
                                        let iq = (q * stride + e) as isize - pad as isize;
                                        if iz < 0
                                            || iy < 0
                                            || iq < 0
                                            || iz >= d as isize
                                            || iy >= h as isize
                                            || iq >= w as isize
                                        {
                                            continue;
                                        }
                                        let xi = (((s * ci + c) * d + iz as usize) * h
                                            + iy as usize)
                                            * w
                                            + iq as usize;
                                        let ki = (((o * ci + c) * kd + a) * kh + bb) * kw + e;
                                        acc += xd[xi] * kdat[ki];
                                    }
                                }
                            }
                        }
                        out[(((s * co + o) * od + z) * oh + y) * ow + q] = acc;
                    }
                }
            }
        }
    }
    Tensor::new(&[n, co, od, oh, ow], out).unwrap()
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

fn run_conv(
    x: &Tensor<f64>,
    k: &Tensor<f64>,
    b: &Tensor<f64>,
    stride: usize,
    pad: usize,
) -> Tensor<f64> {
    let mut g = Graph::new();
    let (xv, kv, bv) = (
        g.constant(x.clone()),
        g.constant(k.clone()),
        g.constant(b.clone()),
    );
    let out = g.conv3(xv, kv, bv, stride, pad).unwrap();
    g.value(out).clone()
}

fn run_convt(
    x: &Tensor<f64>,
    k: &Tensor<f64>,
    b: &Tensor<f64>,
    stride: usize,
    pad: usize,
    op: usize,
) -> Tensor<f64> {
    let mut g = Graph::new();
    let (xv, kv, bv) = (
        g.constant(x.clone()),
        g.constant(k.clone()),
        g.constant(b.clone()),
    );
    let out = g.conv3_transpose(xv, kv, bv, stride, pad, op).unwrap();
    g.value(out).clone()
}

#[test]
fn conv3_identity_kernel_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = rand_tensor(&mut rng, &[2, 1, 3, 4, 5], -1.0, 1.0);
    let out = run_conv(
        &x,
        &Tensor::full(&[1, 1, 1, 1, 1], 1.0),
        &Tensor::zeros(&[1]),
        1,
        0,
    );
    assert_eq!(out, x);
}

#[test]
fn conv3_all_ones_cube() {
    let out = run_conv(
        &Tensor::full(&[1, 1, 2, 2, 2], 1.0),
        &Tensor::full(&[1, 1, 2, 2, 2], 1.0),
        &Tensor::zeros(&[1]),
        1,
        0,
    );
    let oracle = conv3_oracle(
        &Tensor::full(&[1, 1, 2, 2, 2], 1.0),
        &Tensor::full(&[1, 1, 2, 2, 2], 1.0),
        &[0.0],
        1,
        0,
    );
    assert_eq!(oracle.data(), &[8.0]);
    assert_eq!(out.shape(), &[1, 1, 1, 1, 1]);
    assert_eq!(out.data(), &[8.0]);
}

#[test]
fn conv3_stride2_shape() {
    let out = run_conv(
        &Tensor::zeros(&[1, 1, 32, 32, 32]),
        &Tensor::zeros(&[2, 1, 3, 3, 3]),
        &Tensor::zeros(&[2]),
        2,
        1,
    );
    assert_eq!(out.shape(), &[1, 2, 16, 16, 16]);
}

#[test]
fn conv3_matches_brute_force_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for &(stride, pad, dims) in &[
        (1, 0, [4, 5, 3]),
        (2, 1, [6, 5, 7]),
        (2, 0, [5, 5, 5]),
        (1, 1, [3, 4, 4]),
        (3, 2, [7, 6, 5]),
    ] {
        let x = rand_tensor(&mut rng, &[2, 3, dims[0], dims[1], dims[2]], -2.0, 2.0);
        let k = rand_tensor(&mut rng, &[4, 3, 3, 2, 3], -1.0, 1.0);
        let b = rand_tensor(&mut rng, &[4], -1.0, 1.0);
        let got = run_conv(&x, &k, &b, stride, pad);
        let want = conv3_oracle(&x, &k, b.data(), stride, pad);
        assert_eq!(got.shape(), want.shape());
        for (g, w) in got.data().iter().zip(want.data()) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }
}

#[test]
fn conv3_channel_mismatch_is_descriptive() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(Tensor::zeros(&[1, 2, 4, 4, 4]));
    let k = g.constant(Tensor::zeros(&[1, 3, 3, 3, 3]));
    let b = g.constant(Tensor::zeros(&[1]));
    let err = g.conv3(x, k, b, 1, 1).unwrap_err();
    let msg = format!("{err}");
    assert!(matches!(err, Error::Shape { .. }));
    assert!(
        msg.contains("2 channels") && msg.contains("expects 3"),
        "{msg}"
    );
    assert!(g.conv3_transpose(x, k, b, 2, 1, 1).is_err());
}

#[test]
fn conv3_transpose_scalar_kernel_scales_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = rand_tensor(&mut rng, &[1, 1, 3, 3, 4], -1.0, 1.0);
    let out = run_convt(
        &x,
        &Tensor::full(&[1, 1, 1, 1, 1], 2.5),
        &Tensor::zeros(&[1]),
        1,
        0,
        0,
    );
    assert_eq!(out, x.map(|v| 2.5 * v));
}

#[test]
fn conv3_transpose_shapes() {
    let x = Tensor::zeros(&[1, 2, 8, 8, 8]);
    let k = Tensor::zeros(&[2, 1, 3, 3, 3]);
    let b = Tensor::zeros(&[1]);
    assert_eq!(run_convt(&x, &k, &b, 2, 1, 0).shape(), &[1, 1, 15, 15, 15]);
    assert_eq!(run_convt(&x, &k, &b, 2, 1, 1).shape(), &[1, 1, 16, 16, 16]);
}

/// Inner-product identity `⟨conv3(x), y⟩ = ⟨x, conv3ᵀ(y)⟩` over random small shapes.
#[test]
fn conv_transpose_is_adjoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut trials = 0;
    while trials < 100 {
        let stride = rng.random_range(1..=3);
        let pad = rng.random_range(0..=2);
        let ks = [
            rng.random_range(1..=3),
            rng.random_range(1..=3),
            rng.random_range(1..=3),
        ];
        let dims: Vec<usize> = (0..3).map(|a| rng.random_range(ks[a].max(1)..=6)).collect();
        let (ci, co, n) = (
            rng.random_range(1..=3),
            rng.random_range(1..=3),
            rng.random_range(1..=2),
        );
        let x = rand_tensor(&mut rng, &[n, ci, dims[0], dims[1], dims[2]], -2.0, 2.0);
        let k = rand_tensor(&mut rng, &[co, ci, ks[0], ks[1], ks[2]], -1.0, 1.0);
        let cx = run_conv(&x, &k, &Tensor::zeros(&[co]), stride, pad);
        let y = rand_tensor(&mut rng, cx.shape(), -2.0, 2.0);
        // output_padding chosen so the transpose lands back on x's extent
        let ops: Vec<usize> = (0..3)
            .map(|a| dims[a] + 2 * pad - ((cx.shape()[2 + a] - 1) * stride + ks[a]))
            .collect();
        assert!(ops.iter().all(|&o| o < stride));
        if ops.iter().any(|&o| o != ops[0]) {
            // the op takes one output_padding; crop-free comparison needs equal values
            continue;
        }
        let kt = Tensor::new(&[co, ci, ks[0], ks[1], ks[2]], k.data().to_vec()).unwrap();
        let ty = run_convt(&y, &kt, &Tensor::zeros(&[ci]), stride, pad, ops[0]);
        assert_eq!(ty.shape(), x.shape());
        trials += 1;
        let lhs = cx.dot(&y).unwrap();
        let rhs = x.dot(&ty).unwrap();
        assert!(
            (lhs - rhs).abs() <= 1e-6 * lhs.abs().max(rhs.abs()).max(1e-12),
            "{lhs} vs {rhs}"
        );
    }
}

#[test]
fn dense_examples() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::new(&[1, 2], vec![1.0, 2.0]).unwrap());
    let w = g.constant(Tensor::new(&[2, 2], vec![1.0, 1.0, 1.0, -1.0]).unwrap());
    let b = g.constant(Tensor::zeros(&[2]));
    let y = g.dense(x, w, b).unwrap();
    assert_eq!(g.value(y).data(), &[3.0, -1.0]);

    let eye = g.constant(Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
    let y = g.dense(x, eye, b).unwrap();
    assert_eq!(g.value(y).data(), &[1.0, 2.0]);

    let xs = g.constant(Tensor::new(&[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
    let zw = g.constant(Tensor::zeros(&[2, 2]));
    let bb = g.constant(Tensor::new(&[2], vec![0.5, -0.25]).unwrap());
    let y = g.dense(xs, zw, bb).unwrap();
    assert_eq!(g.value(y).data(), &[0.5, -0.25, 0.5, -0.25, 0.5, -0.25]);

    let bad = g.constant(Tensor::zeros(&[2, 3]));
    let msg = format!("{}", g.dense(x, bad, b).unwrap_err());
    assert!(msg.contains("[1, 2]") && msg.contains("[2, 3]"), "{msg}");
}

#[test]
fn relu_examples() {
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::new(&[3], vec![-1.0, 0.0, 2.0]).unwrap());
    let y = g.relu(x);
    assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
    let neg = g.constant(Tensor::full(&[4], -3.0));
    let yn = g.relu(neg);
    assert!(g.value(yn).data().iter().all(|&v| v == 0.0));
    let s = g.sum(y);
    g.backward(s).unwrap();
    // subgradient at exactly zero is zero
    assert_eq!(g.grad(x).unwrap(), &[0.0, 0.0, 1.0]);

    let report = check(
        &[("x".into(), Tensor::new(&[2], vec![-1.0, 2.0]).unwrap())],
        GradCheckConfig::default(),
        |g, v| {
            let r = g.relu(v[0]);
            Ok(g.sum(r))
        },
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::new(&[2], vec![-1.0, 2.0]).unwrap());
    let r = g.relu(x);
    let s = g.sum(r);
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[0.0, 1.0]);
}

#[test]
fn backward_basics_and_contract() {
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::from_fn(&[2, 3], |i| i as f64));
    let s = g.sum(x);
    g.backward(s).unwrap();
    assert!(g.grad(x).unwrap().iter().all(|&v| v == 1.0));
    // second sweep without reset is an error
    assert!(matches!(g.backward(s), Err(Error::Backward(_))));
    g.zero_grad();
    g.backward(s).unwrap();

    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::new(&[1], vec![3.0]).unwrap());
    let sq = g.mul(x, x).unwrap();
    let l = g.sum(sq);
    g.backward(l).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[6.0]);

    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::zeros(&[2]));
    assert!(matches!(g.backward(x), Err(Error::Backward(_))));
}

#[test]
fn unused_leaf_gets_zero_gradient() {
    let mut g = Graph::<f32>::new();
    let a = g.param(Tensor::full(&[2], 1.0));
    let b = g.param(Tensor::full(&[3], 1.0));
    let s = g.sum(a);
    g.backward(s).unwrap();
    assert_eq!(g.grad(b).unwrap(), &[0.0, 0.0, 0.0]);
    let c = g.constant(Tensor::full(&[1], 1.0));
    assert!(g.grad(c).is_none());
}

/// Every differentiable op against central differences on inputs in [−2, 2].
#[test]
fn every_op_matches_finite_differences() {
    type Build = fn(&mut Graph<f64>, &[Var]) -> wxvae_core::Result<Var>;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cases: Vec<(&str, Vec<Vec<usize>>, Build)> = vec![
        (
            "conv3",
            vec![vec![2, 2, 5, 4, 5], vec![3, 2, 3, 3, 3], vec![3]],
            |g, v| {
                let y = g.conv3(v[0], v[1], v[2], 2, 1)?;
                let c = g.constant(Tensor::from_fn(g.shape(y), |i| (i % 5) as f64 - 2.0));
                let p = g.mul(y, c)?;
                Ok(g.sum(p))
            },
        ),
        (
            "conv3_transpose",
            vec![vec![2, 2, 3, 3, 2], vec![2, 3, 3, 3, 3], vec![3]],
            |g, v| {
                let y = g.conv3_transpose(v[0], v[1], v[2], 2, 1, 1)?;
                let c = g.constant(Tensor::from_fn(g.shape(y), |i| (i % 7) as f64 - 3.0));
                let p = g.mul(y, c)?;
                Ok(g.sum(p))
            },
        ),
        ("dense", vec![vec![3, 4], vec![5, 4], vec![5]], |g, v| {
            let y = g.dense(v[0], v[1], v[2])?;
            let c = g.constant(Tensor::from_fn(g.shape(y), |i| (i % 3) as f64 - 1.0));
            let p = g.mul(y, c)?;
            Ok(g.sum(p))
        }),
        ("softplus", vec![vec![6]], |g, v| {
            let y = g.softplus(v[0]);
            let p = g.mul(y, y)?;
            Ok(g.sum(p))
        }),
        ("exp_scale_sub", vec![vec![4], vec![4]], |g, v| {
            let e = g.exp(v[0]);
            let d = g.sub(e, v[1])?;
            let s = g.scale(d, 0.7);
            let p = g.mul(s, s)?;
            Ok(g.mean(p))
        }),
        ("reshape_add", vec![vec![2, 3], vec![6]], |g, v| {
            let r = g.reshape(v[0], &[6])?;
            let a = g.add(r, v[1])?;
            let p = g.mul(a, a)?;
            Ok(g.sum(p))
        }),
        ("mse", vec![vec![2, 5], vec![2, 5]], |g, v| {
            g.mse(v[0], v[1])
        }),
        ("kl_normal", vec![vec![3, 4], vec![3, 4]], |g, v| {
            g.kl_normal(v[0], v[1])
        }),
        ("reparameterize", vec![vec![2, 3], vec![2, 3]], |g, v| {
            let noise = Tensor::from_fn(&[2, 3], |i| (i as f64) * 0.3 - 0.8);
            let z = g.reparameterize(v[0], v[1], &noise)?;
            let p = g.mul(z, z)?;
            Ok(g.sum(p))
        }),
        ("clamp", vec![vec![8]], |g, v| {
            let c = g.clamp(v[0], -1.0, 1.0);
            let p = g.mul(c, v[0])?;
            Ok(g.sum(p))
        }),
    ];
    for (name, shapes, build) in cases {
        for _trial in 0..3 {
            let inputs: Vec<(String, Tensor<f64>)> = shapes
                .iter()
                .enumerate()
                .map(|(i, s)| (format!("{name}[{i}]"), rand_tensor(&mut rng, s, -2.0, 2.0)))
                .collect();
            let report = check(&inputs, GradCheckConfig::default(), build).unwrap();
            assert!(report.passed(), "{name}: {report:?}");
        }
    }
}

#[test]
fn ops_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x: Tensor<f32> = rand_tensor(&mut rng, &[2, 2, 6, 6, 6], -1.0, 1.0).cast();
    let k: Tensor<f32> = rand_tensor(&mut rng, &[3, 2, 3, 3, 3], -1.0, 1.0).cast();
    let run = || {
        let mut g = Graph::<f32>::new();
        let (xv, kv) = (g.param(x.clone()), g.param(k.clone()));
        let b = g.param(Tensor::zeros(&[3]));
        let y = g.conv3(xv, kv, b, 2, 1).unwrap();
        let l = g.mean(y);
        g.backward(l).unwrap();
        (
            g.value(y).clone(),
            g.grad(kv).unwrap().to_vec(),
            g.grad(xv).unwrap().to_vec(),
        )
    };
    let (a, b) = (run(), run());
    assert_eq!(
        a.0.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.0.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
    assert_eq!(conv_output_extent(6, 3, 2, 1), Some(3));
}
