//! Property tests: every kernel against a direct-summation oracle.

use layergauge_core::nn::{self, ConvParams, LrnParams};
use layergauge_core::Tensor;
use proptest::prelude::*;

fn tensor(shape: Vec<usize>) -> impl Strategy<Value = Tensor> {
    let n: usize = shape.iter().product();
    prop::collection::vec(-2.0f32..2.0, n).prop_map(move |d| Tensor::new(shape.clone(), d).unwrap())
}

#[derive(Debug, Clone)]
struct ConvCase {
    input: Tensor,
    weights: Tensor,
    bias: Tensor,
    params: ConvParams,
}

fn conv_case() -> impl Strategy<Value = ConvCase> {
    (1usize..=2, 1usize..=3, 1usize..=3, 1usize..=4, 0usize..=2, 1usize..=3)
        .prop_flat_map(|(groups, cg, fpg, k, pad, stride)| {
            let lo = k.saturating_sub(2 * pad).max(1);
            (Just((groups, cg, fpg, k, pad, stride)), lo..=12usize, lo..=12usize)
        })
        .prop_filter_map("output must tile", |((groups, cg, fpg, k, pad, stride), h, w)| {
            let (sh, sw) = (h + 2 * pad, w + 2 * pad);
            if sh < k || sw < k {
                return None;
            }
            // Trim the input so the stride tiles exactly.
            let h = h.checked_sub((sh - k) % stride)?;
            let w = w.checked_sub((sw - k) % stride)?;
            if h == 0 || w == 0 || h + 2 * pad < k || w + 2 * pad < k {
                return None;
            }
            Some((groups, cg, fpg, k, pad, stride, h, w))
        })
        .prop_flat_map(|(groups, cg, fpg, k, pad, stride, h, w)| {
            let f = groups * fpg;
            (
                tensor(vec![h, w, groups * cg]),
                tensor(vec![f, k, k, cg]),
                tensor(vec![f]),
                Just(ConvParams::new(stride, pad, groups)),
            )
        })
        .prop_map(|(input, weights, bias, params)| ConvCase {
            input,
            weights,
            bias,
            params,
        })
}

fn conv_oracle(c: &ConvCase) -> Vec<f64> {
    let s = c.input.shape();
    let (h, w, cin) = (s[0], s[1], s[2]);
    let ws = c.weights.shape();
    let (nf, kh, kw, cg) = (ws[0], ws[1], ws[2], ws[3]);
    let p = c.params;
    let oh = (h + 2 * p.padding - kh) / p.stride + 1;
    let ow = (w + 2 * p.padding - kw) / p.stride + 1;
    let mut out = Vec::with_capacity(oh * ow * nf);
    for oy in 0..oh {
        for ox in 0..ow {
            for f in 0..nf {
                let group = f / (nf / p.groups);
                let mut acc = c.bias.data()[f] as f64;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let iy = (oy * p.stride + ky) as i64 - p.padding as i64;
                        let ix = (ox * p.stride + kx) as i64 - p.padding as i64;
                        if iy < 0 || ix < 0 || iy >= h as i64 || ix >= w as i64 {
                            continue;
                        }
                        for ch in 0..cg {
                            let x = c.input.data()[(iy as usize * w + ix as usize) * cin + group * cg + ch];
                            let k = c.weights.data()[((f * kh + ky) * kw + kx) * cg + ch];
                            acc += x as f64 * k as f64;
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn conv_matches_oracle(c in conv_case()) {
        let y = nn::conv2d(&c.input, &c.weights, &c.bias, c.params).unwrap();
        let expected = conv_oracle(&c);
        prop_assert_eq!(y.len(), expected.len());
        for (a, e) in y.data().iter().zip(&expected) {
            prop_assert!((*a as f64 - e).abs() < 1e-5, "{} vs {}", a, e);
        }
    }

    #[test]
    fn maxpool_outputs_are_window_maxima(
        x in (3usize..=16, 3usize..=16, 1usize..=4).prop_flat_map(|(h, w, c)| tensor(vec![h, w, c])),
        window in 1usize..=3,
        stride in 1usize..=3,
    ) {
        let s = x.shape().to_vec();
        let y = nn::maxpool(&x, window, stride).unwrap();
        let (oh, ow, c) = (y.shape()[0], y.shape()[1], y.shape()[2]);
        prop_assert_eq!(oh, (s[0] - window) / stride + 1);
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut m = f32::NEG_INFINITY;
                    for yy in oy * stride..oy * stride + window {
                        for xx in ox * stride..ox * stride + window {
                            m = m.max(x.data()[(yy * s[1] + xx) * c + ch]);
                        }
                    }
                    let v = y.data()[(oy * ow + ox) * c + ch];
                    prop_assert_eq!(v, m);
                    prop_assert!(x.data().contains(&v));
                }
            }
        }
    }

    #[test]
    fn lrn_oracle_sign_and_bound(
        x in (1usize..=6, 1usize..=6, 1usize..=12).prop_flat_map(|(h, w, c)| tensor(vec![h, w, c])),
        r in 1usize..=3,
        k in 0.5f32..3.0,
        alpha in 0.0f32..0.5,
        beta in 0.25f32..1.0,
    ) {
        let p = LrnParams { depth_radius: r, k, alpha, beta };
        let y = nn::lrn(&x, p).unwrap();
        prop_assert_eq!(y.shape(), x.shape());
        let c = x.shape()[2];
        for (i, (&out, &inp)) in y.data().iter().zip(x.data()).enumerate() {
            let (pix, ch) = (i / c, i % c);
            let lo = ch.saturating_sub(r);
            let hi = (ch + r).min(c - 1);
            let sum: f64 = (lo..=hi).map(|j| (x.data()[pix * c + j] as f64).powi(2)).sum();
            let e = inp as f64 / (k as f64 + alpha as f64 * sum).powf(beta as f64);
            prop_assert!((out as f64 - e).abs() < 1e-5);
            prop_assert!(out == 0.0 || out.signum() == inp.signum());
            prop_assert!(out.abs() as f64 <= inp.abs() as f64 / (k as f64).powf(beta as f64) + 1e-6);
        }
    }

    #[test]
    fn fully_connected_matches_dot_oracle(
        (w, x, b) in (1usize..=16, 1usize..=16).prop_flat_map(|(r, c)| (tensor(vec![r, c]), tensor(vec![c]), tensor(vec![r])))
    ) {
        let y = nn::fully_connected(&x, &w, &b).unwrap();
        let cols = x.len();
        for (row, &out) in y.data().iter().enumerate() {
            let e: f64 = b.data()[row] as f64
                + (0..cols).map(|j| w.data()[row * cols + j] as f64 * x.data()[j] as f64).sum::<f64>();
            prop_assert!((out as f64 - e).abs() < 1e-5);
        }
    }

    #[test]
    fn relu_idempotent_and_shape_preserving(
        x in (1usize..=5, 1usize..=5, 1usize..=5).prop_flat_map(|(h, w, c)| tensor(vec![h, w, c]))
    ) {
        let y = nn::relu(&x);
        prop_assert_eq!(y.shape(), x.shape());
        prop_assert_eq!(nn::relu(&y), y.clone());
        prop_assert_eq!(nn::dropout_inference(&x), x);
    }
}
