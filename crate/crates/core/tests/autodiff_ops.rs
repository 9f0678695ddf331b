//! Operation-level checks against independent oracles: naive loop
//! convolutions, hand-evaluated gate formulas, closed forms, and central
//! finite differences.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use somnus::autodiff::{Graph, LstmWeights, Var};
use somnus::gradcheck::{gradcheck, GradcheckEntry};
use somnus::{Error, IdTensor, Real, Tensor};

fn rand_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn t(shape: &[usize], data: &[Real]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

/// Reduces any output to a scalar through a fixed random projection so
/// every output element contributes a distinct weight.
fn project(g: &mut Graph, out: Var, seed: u64) -> somnus::Result<Var> {
    let r = rand_tensor(g.shape(out), seed ^ 0xabcd);
    let r = g.constant(r);
    let m = g.mul(out, r)?;
    Ok(g.sum(m))
}

/// Six-loop reference correlation: out[b,o,y,x] = bias[o] + Σ w[o,c,i,j]·x[b,c,y·s+i−p,x·s+j−p].
fn naive_conv(x: &Tensor, w: &Tensor, b: &[Real], stride: usize, pad: usize) -> Tensor {
    let (bn, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (o, k) = (w.shape()[0], w.shape()[2]);
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    let mut out = Tensor::zeros(&[bn, o, oh, ow]);
    for bi in 0..bn {
        for oc in 0..o {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut s = b[oc];
                    for ic in 0..c {
                        for i in 0..k {
                            for j in 0..k {
                                let iy = (y * stride + i) as isize - pad as isize;
                                let ix = (xx * stride + j) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                s += w.data()[((oc * c + ic) * k + i) * k + j]
                                    * x.data()[((bi * c + ic) * h + iy as usize) * wd + ix as usize];
                            }
                        }
                    }
                    out.data_mut()[((bi * o + oc) * oh + y) * ow + xx] = s;
                }
            }
        }
    }
    out
}

fn dot(a: &Tensor, b: &Tensor) -> Real {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------- add

#[test]
fn add_examples() {
    let mut g = Graph::new();
    let a = g.input(t(&[2], &[1.0, 2.0]));
    let b = g.input(t(&[2], &[3.0, 4.0]));
    let s = g.add(a, b).unwrap();
    assert_eq!(g.value(s).data(), &[4.0, 6.0]);
    let z = g.constant(Tensor::zeros(&[2]));
    let same = g.add(a, z).unwrap();
    assert!(g.value(same).bits_eq(g.value(a)));
    let loss = g.sum(s);
    g.backward(loss).unwrap();
    assert_eq!(g.grad(a).unwrap(), &[1.0, 1.0]);
    assert_eq!(g.grad(b).unwrap(), &[1.0, 1.0]);
}

#[test]
fn add_shape_mismatch_names_both_shapes() {
    let mut g = Graph::new();
    let a = g.input(Tensor::zeros(&[2, 3]));
    let b = g.input(Tensor::zeros(&[3, 2]));
    match g.add(a, b) {
        Err(Error::ShapeMismatch { left, right, .. }) => {
            assert_eq!(left, vec![2, 3]);
            assert_eq!(right, vec![3, 2]);
        }
        other => panic!("expected shape mismatch, got {other:?}"),
    }
}

// ---------------------------------------------------------------- matmul

#[test]
fn matmul_examples() {
    let mut g = Graph::new();
    let eye = g.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let m = g.constant(t(&[2, 3], &[1.5, -2.0, 3.0, 0.25, 5.0, -6.0]));
    let p = g.matmul(eye, m).unwrap();
    assert_eq!(g.value(p), g.value(m));

    let a = g.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let ones = g.constant(t(&[2, 1], &[1.0, 1.0]));
    let p = g.matmul(a, ones).unwrap();
    assert_eq!(g.value(p).data(), &[3.0, 7.0]);

    assert!(matches!(g.matmul(a, m).map(|_| ()), Ok(())));
    assert!(matches!(g.matmul(m, a), Err(Error::ShapeMismatch { .. })));
}

#[test]
fn matmul_gradcheck() {
    let inputs = [rand_tensor(&[3, 4], 1), rand_tensor(&[4, 5], 2)];
    let report = gradcheck(&inputs, 1e-6, |g, v| {
        let p = g.matmul(v[0], v[1])?;
        project(g, p, 3)
    })
    .unwrap();
    assert!(report.passed, "{report:?}");
}

// ---------------------------------------------------------------- conv2d

#[test]
fn conv2d_identity_and_bias_only() {
    let x = rand_tensor(&[2, 1, 4, 4], 5);
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let w = g.constant(t(&[1, 1, 1, 1], &[1.0]));
    let b = g.constant(t(&[1], &[0.0]));
    let y = g.conv2d(xv, w, Some(b), 1, 0).unwrap();
    assert!(g.value(y).bits_eq(&x));

    let zero = g.constant(Tensor::zeros(&[1, 2, 5, 5]));
    let w = g.constant(rand_tensor(&[3, 2, 3, 3], 6));
    let c = g.constant(t(&[3], &[0.5, -1.0, 2.0]));
    let y = g.conv2d(zero, w, Some(c), 1, 1).unwrap();
    assert_eq!(g.shape(y), &[1, 3, 5, 5]);
    for (i, v) in g.value(y).data().iter().enumerate() {
        assert_eq!(*v, [0.5, -1.0, 2.0][i / 25]);
    }
}

#[test]
fn conv2d_matches_six_loop_reference() {
    for (stride, pad) in [(1, 0), (1, 1), (2, 1)] {
        let x = rand_tensor(&[1, 1, 5, 5], 11);
        let w = rand_tensor(&[2, 1, 3, 3], 12);
        let b = [0.3, -0.7];
        let reference = naive_conv(&x, &w, &b, stride, pad);
        let mut g = Graph::new();
        let (xv, wv, bv) = (g.constant(x), g.constant(w), g.constant(t(&[2], &b)));
        let y = g.conv2d(xv, wv, Some(bv), stride, pad).unwrap();
        assert_eq!(g.shape(y), reference.shape());
        assert!(g.value(y).max_abs_diff(&reference) < 1e-14);
    }
    // multi-channel, batched
    let x = rand_tensor(&[2, 3, 6, 6], 13);
    let w = rand_tensor(&[4, 3, 3, 3], 14);
    let b = [0.1, 0.2, 0.3, 0.4];
    let reference = naive_conv(&x, &w, &b, 1, 1);
    let mut g = Graph::new();
    let (xv, wv, bv) = (g.constant(x), g.constant(w), g.constant(t(&[4], &b)));
    let y = g.conv2d(xv, wv, Some(bv), 1, 1).unwrap();
    assert!(g.value(y).max_abs_diff(&reference) < 1e-13);
}

#[test]
fn conv2d_rejects_bad_geometry() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[1, 2, 32, 32]));
    let w = g.constant(Tensor::zeros(&[4, 2, 3, 3]));
    assert!(matches!(g.conv2d(x, w, None, 2, 1), Err(Error::Geometry { .. })));
    let w_bad = g.constant(Tensor::zeros(&[4, 3, 3, 3]));
    assert!(matches!(g.conv2d(x, w_bad, None, 1, 1), Err(Error::Geometry { .. })));
}

#[test]
fn conv2d_gradcheck() {
    let inputs = [rand_tensor(&[2, 2, 5, 5], 21), rand_tensor(&[3, 2, 3, 3], 22), rand_tensor(&[3], 23)];
    for (stride, pad) in [(1, 1), (2, 0)] {
        let report = gradcheck(&inputs, 1e-6, |g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), stride, pad)?;
            project(g, y, 24)
        })
        .unwrap();
        assert!(report.passed, "{report:?}");
    }
}

// ---------------------------------------------------------------- deconv2d

#[test]
fn deconv2d_hand_expansion() {
    let mut g = Graph::new();
    let x = g.constant(t(&[1, 1, 1, 1], &[2.5]));
    let w = g.constant(Tensor::full(&[1, 1, 2, 2], 1.0));
    let y = g.deconv2d(x, w, None, 2, 0).unwrap();
    assert_eq!(g.shape(y), &[1, 1, 2, 2]);
    assert_eq!(g.value(y).data(), &[2.5; 4]);

    let zero = g.constant(Tensor::zeros(&[1, 2, 3, 3]));
    let w = g.constant(rand_tensor(&[2, 3, 2, 2], 31));
    let b = g.constant(t(&[3], &[1.0, -2.0, 0.5]));
    let y = g.deconv2d(zero, w, Some(b), 2, 0).unwrap();
    assert_eq!(g.shape(y), &[1, 3, 6, 6]);
    for (i, v) in g.value(y).data().iter().enumerate() {
        assert_eq!(*v, [1.0, -2.0, 0.5][i / 36]);
    }
}

#[test]
fn deconv2d_output_size_and_errors() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[1, 2, 4, 4]));
    let w = g.constant(Tensor::zeros(&[2, 1, 3, 3]));
    // (4-1)*2 - 2*1 + 3 = 7
    let y = g.deconv2d(x, w, None, 2, 1).unwrap();
    assert_eq!(g.shape(y), &[1, 1, 7, 7]);
    let w_bad = g.constant(Tensor::zeros(&[3, 1, 3, 3]));
    assert!(matches!(g.deconv2d(x, w_bad, None, 2, 1), Err(Error::Geometry { .. })));
    let one = g.constant(Tensor::zeros(&[1, 2, 1, 1]));
    let w1 = g.constant(Tensor::zeros(&[2, 1, 1, 1]));
    assert!(matches!(g.deconv2d(one, w1, None, 1, 1), Err(Error::Geometry { .. })));
}

#[test]
fn deconv2d_is_adjoint_of_conv2d() {
    for (seed, stride, pad) in [(40, 1, 0), (41, 1, 1), (42, 2, 1), (43, 2, 0)] {
        let w = rand_tensor(&[3, 2, 3, 3], seed);
        // conv: 2 -> 3 channels on 7x7; deconv maps 3 -> 2 channels back.
        let x = rand_tensor(&[2, 2, 7, 7], seed + 100);
        let mut g = Graph::new();
        let (xv, wv) = (g.constant(x.clone()), g.constant(w));
        let cx = g.conv2d(xv, wv, None, stride, pad).unwrap();
        let y = rand_tensor(g.shape(cx), seed + 200);
        let yv = g.constant(y.clone());
        let dy = g.deconv2d(yv, wv, None, stride, pad).unwrap();
        assert_eq!(g.shape(dy), x.shape());
        let lhs = dot(g.value(cx), &y);
        let rhs = dot(&x, g.value(dy));
        assert!((lhs - rhs).abs() < 1e-10, "stride {stride} pad {pad}: {lhs} vs {rhs}");
    }
}

#[test]
fn deconv2d_gradcheck() {
    let inputs = [rand_tensor(&[2, 2, 3, 3], 51), rand_tensor(&[2, 3, 2, 2], 52), rand_tensor(&[3], 53)];
    for (stride, pad) in [(2, 0), (1, 0), (2, 1)] {
        let report = gradcheck(&inputs, 1e-6, |g, v| {
            let y = g.deconv2d(v[0], v[1], Some(v[2]), stride, pad)?;
            project(g, y, 54)
        })
        .unwrap();
        assert!(report.passed, "{report:?}");
    }
}

// ---------------------------------------------------------------- layer_norm

#[test]
fn layer_norm_constant_input_yields_bias() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::full(&[2, 3], 0.1));
    let gain = g.constant(t(&[3], &[2.0, 3.0, 4.0]));
    let bias = g.constant(t(&[3], &[0.5, -0.5, 1.5]));
    let y = g.layer_norm(x, gain, bias, 1e-5).unwrap();
    for row in g.value(y).data().chunks(3) {
        for (v, b) in row.iter().zip([0.5, -0.5, 1.5]) {
            assert!((v - b).abs() < 1e-12);
        }
    }
}

#[test]
fn layer_norm_standardizes_rows() {
    let x = rand_tensor(&[4, 50], 60);
    let mut g = Graph::new();
    let xv = g.constant(x);
    let gain = g.constant(Tensor::full(&[50], 1.0));
    let bias = g.constant(Tensor::zeros(&[50]));
    let y = g.layer_norm(xv, gain, bias, 0.0).unwrap();
    for row in g.value(y).data().chunks(50) {
        let mean = row.iter().sum::<Real>() / 50.0;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<Real>() / 50.0;
        assert!(mean.abs() < 1e-6);
        assert!((var.sqrt() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn layer_norm_shape_errors_and_gradcheck() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[2, 3]));
    let gain = g.constant(Tensor::zeros(&[4]));
    assert!(matches!(g.layer_norm(x, gain, gain, 1e-5), Err(Error::ShapeMismatch { .. })));

    let inputs = [rand_tensor(&[3, 2, 4], 61), rand_tensor(&[2, 4], 62), rand_tensor(&[2, 4], 63)];
    let report = gradcheck(&inputs, 1e-4, |g, v| {
        let y = g.layer_norm(v[0], v[1], v[2], 1e-5)?;
        project(g, y, 64)
    })
    .unwrap();
    assert!(report.passed, "{report:?}");
}

// ---------------------------------------------------------------- lstm_cell

fn lstm_vars(g: &mut Graph, wx: Tensor, wh: Tensor, b: Tensor) -> LstmWeights {
    LstmWeights {
        wx: g.constant(wx),
        wh: g.constant(wh),
        b: g.constant(b),
    }
}

#[test]
fn lstm_zero_weights_give_zero_hidden() {
    let mut g = Graph::new();
    let w = lstm_vars(&mut g, Tensor::zeros(&[3, 8]), Tensor::zeros(&[2, 8]), Tensor::zeros(&[8]));
    let x = g.constant(rand_tensor(&[4, 3], 70));
    let h = g.constant(Tensor::zeros(&[4, 2]));
    let c = g.constant(Tensor::zeros(&[4, 2]));
    let (h1, c1) = g.lstm_cell(x, h, c, &w).unwrap();
    assert!(g.value(h1).data().iter().all(|&v| v == 0.0));
    assert!(g.value(c1).data().iter().all(|&v| v == 0.0));
}

#[test]
fn lstm_saturated_gates_keep_cell() {
    // forget pre-activation +1000 -> 1, input pre-activation -1000 -> 0.
    let hidden = 2;
    let mut b = vec![0.0; 8];
    b[..hidden].fill(-1000.0);
    b[hidden..2 * hidden].fill(1000.0);
    let mut g = Graph::new();
    let w = lstm_vars(&mut g, rand_tensor(&[3, 8], 71), rand_tensor(&[2, 8], 72).clone(), t(&[8], &b));
    let x = g.constant(rand_tensor(&[2, 3], 73));
    let h = g.constant(rand_tensor(&[2, 2], 74).clone());
    let c_prev = rand_tensor(&[2, 2], 75);
    let c = g.constant(c_prev.clone());
    let (_, c1) = g.lstm_cell(x, h, c, &w).unwrap();
    assert!(g.value(c1).bits_eq(&c_prev));
}

#[test]
fn lstm_matches_scalar_gate_evaluation() {
    let (xdim, hdim, batch) = (3, 2, 2);
    let wx = rand_tensor(&[xdim, 4 * hdim], 80);
    let wh = rand_tensor(&[hdim, 4 * hdim], 81);
    let b = rand_tensor(&[4 * hdim], 82);
    let x = rand_tensor(&[batch, xdim], 83);
    let h = rand_tensor(&[batch, hdim], 84);
    let c = rand_tensor(&[batch, hdim], 85);

    let sig = |z: Real| 1.0 / (1.0 + (-z).exp());
    let mut want_h = vec![0.0; batch * hdim];
    let mut want_c = vec![0.0; batch * hdim];
    for n in 0..batch {
        for j in 0..hdim {
            let pre = |gate: usize| {
                let col = gate * hdim + j;
                let mut z = b.data()[col];
                for k in 0..xdim {
                    z += x.data()[n * xdim + k] * wx.data()[k * 4 * hdim + col];
                }
                for k in 0..hdim {
                    z += h.data()[n * hdim + k] * wh.data()[k * 4 * hdim + col];
                }
                z
            };
            let (i, f, gg, o) = (sig(pre(0)), sig(pre(1)), pre(2).tanh(), sig(pre(3)));
            let cn = f * c.data()[n * hdim + j] + i * gg;
            want_c[n * hdim + j] = cn;
            want_h[n * hdim + j] = o * cn.tanh();
        }
    }

    let mut g = Graph::new();
    let w = lstm_vars(&mut g, wx, wh, b);
    let (xv, hv, cv) = (g.constant(x), g.constant(h), g.constant(c));
    let (h1, c1) = g.lstm_cell(xv, hv, cv, &w).unwrap();
    assert!(g.value(h1).max_abs_diff(&t(&[batch, hdim], &want_h)) < 1e-12);
    assert!(g.value(c1).max_abs_diff(&t(&[batch, hdim], &want_c)) < 1e-12);
}

#[test]
fn lstm_dimension_mismatch() {
    let mut g = Graph::new();
    let w = lstm_vars(&mut g, Tensor::zeros(&[3, 8]), Tensor::zeros(&[2, 8]), Tensor::zeros(&[8]));
    let x = g.constant(Tensor::zeros(&[1, 3]));
    let h = g.constant(Tensor::zeros(&[1, 3]));
    assert!(g.lstm_cell(x, h, h, &w).is_err());
}

#[test]
fn lstm_gradcheck() {
    let inputs = [
        rand_tensor(&[2, 3], 90),
        rand_tensor(&[2, 2], 91),
        rand_tensor(&[2, 2], 92),
        rand_tensor(&[3, 8], 93),
        rand_tensor(&[2, 8], 94),
        rand_tensor(&[8], 95),
    ];
    let report = gradcheck(&inputs, 1e-4, |g, v| {
        let w = LstmWeights { wx: v[3], wh: v[4], b: v[5] };
        let (h, c) = g.lstm_cell(v[0], v[1], v[2], &w)?;
        let both = g.concat(&[h, c], 1)?;
        project(g, both, 96)
    })
    .unwrap();
    assert!(report.passed, "{report:?}");
}

// ---------------------------------------------------------------- softmax / argmax

#[test]
fn softmax_examples() {
    let mut g = Graph::new();
    let u = g.constant(Tensor::full(&[1, 4], 0.7));
    let s = g.softmax(u, 1).unwrap();
    assert!(g.value(s).data().iter().all(|&p| (p - 0.25).abs() < 1e-15));

    let l = g.constant(t(&[2], &[0.0, (3.0 as Real).ln()]));
    let s = g.softmax(l, 0).unwrap();
    assert!((g.value(s).data()[0] - 0.25).abs() < 1e-15);
    assert!((g.value(s).data()[1] - 0.75).abs() < 1e-15);

    let a = g.constant(t(&[1, 3], &[1.0, 2.5, -0.75]));
    let b = g.constant(t(&[1, 3], &[4.0, 5.5, 2.25]));
    let (sa, sb) = (g.softmax(a, 1).unwrap(), g.softmax(b, 1).unwrap());
    assert!(g.value(sa).bits_eq(g.value(sb)));
}

#[test]
fn softmax_gradcheck_on_inner_axis() {
    let inputs = [rand_tensor(&[2, 4, 3], 100)];
    let report = gradcheck(&inputs, 1e-6, |g, v| {
        let s = g.softmax(v[0], 1)?;
        project(g, s, 101)
    })
    .unwrap();
    assert!(report.passed, "{report:?}");
}

#[test]
fn argmax_examples_and_stop_gradient() {
    let mut g = Graph::new();
    let x = g.input(t(&[3], &[0.1, 0.7, 0.2]));
    assert_eq!(g.argmax(x, 0).unwrap().data(), &[1]);
    let tie = g.input(t(&[2], &[0.5, 0.5]));
    assert_eq!(g.argmax(tie, 0).unwrap().data(), &[0]);
    let empty_axis = g.input(t(&[2], &[0.5, 0.5]));
    assert!(g.argmax(empty_axis, 3).is_err());

    // logits -> argmax -> embedding lookup -> loss. Nothing reaches `logits`.
    let logits = g.input(rand_tensor(&[4, 5], 110));
    let ids = g.argmax(logits, 1).unwrap();
    let table = g.input(rand_tensor(&[5, 3], 111));
    let e = g.embedding(table, &ids).unwrap();
    let loss = g.sum(e);
    g.backward(loss).unwrap();
    assert!(g.grad(logits).is_none_or(|gr| gr.iter().all(|&v| v == 0.0)));
    assert!(g.grad(table).unwrap().iter().any(|&v| v != 0.0));
}

// ---------------------------------------------------------------- embedding

#[test]
fn embedding_examples() {
    let mut g = Graph::new();
    let table = g.input(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let zero = IdTensor::new(vec![1], vec![0]).unwrap();
    let e = g.embedding(table, &zero).unwrap();
    assert_eq!(g.value(e).data(), &[1.0, 2.0]);

    let rev = IdTensor::new(vec![2], vec![1, 0]).unwrap();
    let e = g.embedding(table, &rev).unwrap();
    assert_eq!(g.value(e).data(), &[3.0, 4.0, 1.0, 2.0]);

    let twice = IdTensor::new(vec![2], vec![1, 1]).unwrap();
    let e = g.embedding(table, &twice).unwrap();
    let loss = g.sum(e);
    g.backward(loss).unwrap();
    assert_eq!(g.grad(table).unwrap(), &[0.0, 0.0, 2.0, 2.0]);

    let bad = IdTensor::new(vec![3], vec![0, 1, 2]).unwrap();
    match g.embedding(table, &bad) {
        Err(Error::IndexOutOfRange { position, index, bound, .. }) => {
            assert_eq!((position, index, bound), (2, 2, 2));
        }
        other => panic!("{other:?}"),
    }
}

// ---------------------------------------------------------------- losses

#[test]
fn cross_entropy_examples() {
    let mut g = Graph::new();
    let sure = g.constant(t(&[2, 3], &[50.0, -50.0, -50.0, -50.0, -50.0, 50.0]));
    let l = g.cross_entropy(sure, &[0, 2]).unwrap();
    assert!(g.value(l).item() < 1e-12);

    let uniform = g.constant(Tensor::full(&[3, 4], 0.3));
    let l = g.cross_entropy(uniform, &[0, 1, 3]).unwrap();
    assert!((g.value(l).item() - (4.0 as Real).ln()).abs() < 1e-12);
    assert!((g.value(l).item() - 1.3863).abs() < 1e-4);

    assert!(matches!(g.cross_entropy(uniform, &[0, 4, 1]), Err(Error::IndexOutOfRange { .. })));

    let inputs = [rand_tensor(&[5, 4], 120)];
    let report = gradcheck(&inputs, 1e-5, |g, v| g.cross_entropy(v[0], &[0, 3, 2, 1, 3])).unwrap();
    assert!(report.passed, "{report:?}");
}

#[test]
fn mse_examples() {
    let mut g = Graph::new();
    let a = g.input(t(&[2], &[0.0, 0.0]));
    let b = g.input(t(&[2], &[2.0, 0.0]));
    let l = g.mse(a, b).unwrap();
    assert_eq!(g.value(l).item(), 2.0);
    let l2 = g.mse(b, a).unwrap();
    assert_eq!(g.value(l2).item(), 2.0);
    let l0 = g.mse(a, a).unwrap();
    assert_eq!(g.value(l0).item(), 0.0);
    let c = g.input(Tensor::zeros(&[3]));
    assert!(matches!(g.mse(a, c), Err(Error::ShapeMismatch { .. })));
}

// ---------------------------------------------------------------- backward

#[test]
fn backward_examples() {
    let x0 = rand_tensor(&[3, 2], 130);
    let mut g = Graph::new();
    let x = g.input(x0.clone());
    let s = g.sum(x);
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1.0; 6]);

    let mut g = Graph::new();
    let x = g.input(x0.clone());
    let sq = g.mul(x, x).unwrap();
    let s = g.sum(sq);
    g.backward(s).unwrap();
    for (gr, v) in g.grad(x).unwrap().iter().zip(x0.data()) {
        assert_eq!(*gr, 2.0 * v);
    }
}

#[test]
fn backward_rejects_non_scalar_and_accumulates() {
    let mut g = Graph::new();
    let x = g.input(t(&[2], &[1.0, 2.0]));
    assert!(matches!(g.backward(x), Err(Error::NonScalarLoss(_))));
    let s = g.sum(x);
    g.backward(s).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[2.0, 2.0]);
    g.zero_grad();
    assert!(g.grad(x).is_none());
}

#[test]
fn conv_norm_relu_dense_chain_gradcheck() {
    let inputs = [
        rand_tensor(&[2, 2, 4, 4], 140),
        rand_tensor(&[3, 2, 3, 3], 141),
        rand_tensor(&[3], 142),
        rand_tensor(&[3, 4, 4], 143),
        rand_tensor(&[3, 4, 4], 144),
        rand_tensor(&[48, 5], 145),
        rand_tensor(&[5], 146),
    ];
    let report = gradcheck(&inputs, 1e-4, |g, v| {
        let c = g.conv2d(v[0], v[1], Some(v[2]), 1, 1)?;
        let n = g.layer_norm(c, v[3], v[4], 1e-5)?;
        let r = g.relu(n);
        let flat = g.reshape(r, &[2, 48])?;
        let d = g.linear(flat, v[5], Some(v[6]))?;
        g.cross_entropy(d, &[1, 4])
    })
    .unwrap();
    assert!(report.passed, "{report:?}");
}

#[test]
fn shape_plumbing_gradcheck() {
    let inputs = [rand_tensor(&[2, 3, 4], 150), rand_tensor(&[2, 3, 4], 151), rand_tensor(&[2, 2, 4, 4], 152)];
    let report = gradcheck(&inputs, 1e-6, |g, v| {
        let s0 = g.select(v[0], 1, 2)?;
        let st = g.stack(&[s0, s0], 1)?;
        let sl = g.slice(v[1], 1, 1, 2)?;
        let cat = g.concat(&[st, sl], 2)?;
        let m = g.mean_axis(cat, 1)?;
        let p = g.avg_pool2d(v[2], 2)?;
        let pr = g.reshape(p, &[2, 8])?;
        let both = g.concat(&[m, pr], 1)?;
        let sc = g.scale(both, -1.5);
        let sg = g.sigmoid(sc);
        let th = g.tanh(sg);
        let mean = g.mean(th);
        let sub = g.sub(th, sg)?;
        let total = g.sum(sub);
        g.add(total, mean)
    })
    .unwrap();
    assert!(report.passed, "{report:?}");
}

// ---------------------------------------------------------------- gradcheck

#[test]
fn gradcheck_sum_of_squares_is_tight() {
    let inputs = [rand_tensor(&[4, 5], 160)];
    let report = gradcheck(&inputs, 1e-8, |g, v| {
        let sq = g.mul(v[0], v[0])?;
        Ok(g.sum(sq))
    })
    .unwrap();
    assert!(report.passed);
    assert!(report.max_rel_error() < 1e-8);
}

#[test]
fn gradcheck_flags_corrupted_gradient() {
    let x0 = rand_tensor(&[6], 170);
    let mut g = Graph::new();
    let x = g.input(x0.clone());
    let sq = g.mul(x, x).unwrap();
    let s = g.sum(sq);
    g.backward(s).unwrap();
    let corrupted: Vec<Real> = g.grad(x).unwrap().iter().map(|v| v * 1.01).collect();
    let numeric: Vec<Real> = x0.data().iter().map(|v| 2.0 * v).collect();
    let entry = GradcheckEntry::compare("x", &corrupted, &numeric, 1e-4);
    assert!(!entry.passed);
    let honest = GradcheckEntry::compare("x", g.grad(x).unwrap(), &numeric, 1e-4);
    assert!(honest.passed);
}

#[test]
fn evaluation_is_bit_deterministic() {
    let run = || {
        let mut g = Graph::new();
        let x = g.input(rand_tensor(&[2, 2, 5, 5], 180));
        let w = g.input(rand_tensor(&[3, 2, 3, 3], 181));
        let c = g.conv2d(x, w, None, 1, 1).unwrap();
        let r = g.relu(c);
        let s = g.sum(r);
        g.backward(s).unwrap();
        (g.value(r).clone(), g.grad(w).unwrap().to_vec())
    };
    let (a, ga) = run();
    let (b, gb) = run();
    assert!(a.bits_eq(&b));
    assert!(ga.iter().zip(&gb).all(|(x, y)| x.to_bits() == y.to_bits()));
}

// ---------------------------------------------------------------- properties

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn softmax_rows_are_distributions(seed in 0u64..10_000, rows in 1usize..5, cols in 1usize..7) {
        let mut g = Graph::new();
        let x = g.constant(rand_tensor(&[rows, cols], seed));
        let x = g.scale(x, 20.0);
        let s = g.softmax(x, 1).unwrap();
        for row in g.value(s).data().chunks(cols) {
            prop_assert!(row.iter().all(|&p| p > 0.0 && p <= 1.0));
            prop_assert!((row.iter().sum::<Real>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_ops_are_homogeneous(seed in 0u64..10_000, alpha in -3.0f64..3.0) {
        let alpha = alpha as Real;
        let x = rand_tensor(&[2, 2, 5, 5], seed);
        let w = rand_tensor(&[3, 2, 3, 3], seed + 1);
        let a = rand_tensor(&[3, 4], seed + 2);
        let b = rand_tensor(&[4, 2], seed + 3);
        let mut g = Graph::new();
        let (xv, wv, av, bv) = (g.constant(x), g.constant(w), g.constant(a), g.constant(b));
        let xs = g.scale(xv, alpha);
        let ws = g.scale(wv, alpha);
        let as_ = g.scale(av, alpha);
        let bs = g.scale(bv, alpha);

        let pairs = [
            (g.conv2d(xs, wv, None, 1, 1).unwrap(), g.conv2d(xv, wv, None, 1, 1).unwrap()),
            (g.conv2d(xv, ws, None, 2, 0).unwrap(), g.conv2d(xv, wv, None, 2, 0).unwrap()),
            (g.matmul(as_, bv).unwrap(), g.matmul(av, bv).unwrap()),
            (g.matmul(av, bs).unwrap(), g.matmul(av, bv).unwrap()),
            (g.add(as_, as_).unwrap(), g.add(av, av).unwrap()),
        ];
        for (scaled_in, plain) in pairs {
            let scaled_out = g.scale(plain, alpha);
            prop_assert!(g.value(scaled_in).max_abs_diff(g.value(scaled_out)) < 1e-12);
        }
        let cx = g.conv2d(xv, wv, None, 1, 1).unwrap();
        let cxs = g.scale(cx, alpha);
        let d_in = g.deconv2d(cxs, wv, None, 1, 1).unwrap();
        let d = g.deconv2d(cx, wv, None, 1, 1).unwrap();
        let d_out = g.scale(d, alpha);
        prop_assert!(g.value(d_in).max_abs_diff(g.value(d_out)) < 1e-12);
    }

    #[test]
    fn adjoint_identity_holds(seed in 0u64..10_000, stride in 1usize..3, pad in 0usize..2) {
        let w = rand_tensor(&[2, 3, 3, 3], seed);
        let x = rand_tensor(&[1, 3, 7, 7], seed + 7);
        let mut g = Graph::new();
        let (xv, wv) = (g.constant(x.clone()), g.constant(w));
        let cx = g.conv2d(xv, wv, None, stride, pad).unwrap();
        let y = rand_tensor(g.shape(cx), seed + 9);
        let yv = g.constant(y.clone());
        let dy = g.deconv2d(yv, wv, None, stride, pad).unwrap();
        prop_assert!((dot(g.value(cx), &y) - dot(&x, g.value(dy))).abs() < 1e-10);
    }
}

#[test]
fn every_op_passes_gradcheck_across_seeds() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (b, c, s) = (rng.gen_range(3..=5), rng.gen_range(3..=5), rng.gen_range(3..=5));
        let inputs = [
            rand_tensor(&[b, c, s, s], seed * 10),
            rand_tensor(&[c, c, 3, 3], seed * 10 + 1),
            rand_tensor(&[c], seed * 10 + 2),
            rand_tensor(&[c, s, s], seed * 10 + 3),
            rand_tensor(&[c, s, s], seed * 10 + 4),
            rand_tensor(&[c, 4 * c], seed * 10 + 5),
            rand_tensor(&[c, 4 * c], seed * 10 + 6),
            rand_tensor(&[4 * c], seed * 10 + 7),
            rand_tensor(&[c, c, 2, 2], seed * 10 + 8),
        ];
        let labels: Vec<usize> = (0..b).map(|i| i % c).collect();
        let report = gradcheck(&inputs, 1e-4, |g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), 1, 1)?;
            let y = g.layer_norm(y, v[3], v[4], 1e-5)?;
            let y = g.tanh(y);
            let up = g.deconv2d(y, v[8], Some(v[2]), 2, 0)?;
            let up = g.avg_pool2d(up, 2)?;
            let y = g.add(y, up)?;
            let y = g.avg_pool2d(y, 1)?;
            let pooled = g.mean_axis(y, 3)?;
            let pooled = g.mean_axis(pooled, 2)?;
            let h0 = g.sigmoid(pooled);
            let w = LstmWeights { wx: v[5], wh: v[6], b: v[7] };
            let (h, cell) = g.lstm_cell(pooled, h0, pooled, &w)?;
            let sm = g.softmax(cell, 1)?;
            let z = g.mul(h, sm)?;
            let sq = g.mse(z, pooled)?;
            let ce = g.cross_entropy(h, &labels)?;
            g.add(ce, sq)
        })
        .unwrap();
        assert!(report.passed, "seed {seed}: {report:?}");
    }
}
