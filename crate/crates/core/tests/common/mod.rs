//! Independent reference implementations used as test oracles. Each one is
//! written straight from the textbook definition, sharing no code with the
//! library.

#![allow(dead_code)]

use std::f64::consts::PI;

use rand::Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use exvo::data::{
    rate_hz_to_age, BAND_GAIN, BAND_HALF_WIDTH_HZ, BURST_MS, CARRIER_HZ, EMOTION_BAND_CENTERS_HZ,
};
use exvo::mtl::{build_mtl, mtl_loss, LossTerms, MtlConfig, MtlTarget};
use exvo::nn::{loss_cross_entropy, loss_cross_entropy_grad, LayerSpec, Network, Tensor};

// ---------------------------------------------------------------- metrics

/// Lin's coefficient from sample moments computed with explicit double loops.
pub fn ccc_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for i in 0..x.len() {
        sxx += (x[i] - mx).powi(2);
        syy += (y[i] - my).powi(2);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    let (sxx, syy, sxy) = (sxx / n, syy / n, sxy / n);
    let denom = sxx + syy + (mx - my).powi(2);
    if denom == 0.0 {
        return if x == y { 1.0 } else { 0.0 };
    }
    2.0 * sxy / denom
}

pub fn mae_oracle(x: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() {
        s += (x[i] - y[i]).abs();
    }
    s / x.len() as f64
}

/// Mean per-class recall over classes that occur in `truth`.
pub fn uar_oracle(pred: &[usize], truth: &[usize], n_classes: usize) -> f64 {
    let mut total = 0.0;
    let mut present = 0;
    for c in 0..n_classes {
        let support = truth.iter().filter(|&&t| t == c).count();
        if support == 0 {
            continue;
        }
        let hits = pred.iter().zip(truth).filter(|(&p, &t)| t == c && p == c).count();
        total += hits as f64 / support as f64;
        present += 1;
    }
    total / present as f64
}

pub fn war_oracle(pred: &[usize], truth: &[usize]) -> f64 {
    pred.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / pred.len() as f64
}

// ---------------------------------------------------------------- pooling

/// Per-dimension mean then population std, concatenated.
pub fn pool_oracle(frames: &[Vec<f64>]) -> Vec<f64> {
    let d = frames[0].len();
    let n = frames.len() as f64;
    let mut out = vec![0.0; 2 * d];
    for j in 0..d {
        let m = frames.iter().map(|f| f[j]).sum::<f64>() / n;
        let v = frames.iter().map(|f| (f[j] - m) * (f[j] - m)).sum::<f64>() / n;
        out[j] = m;
        out[d + j] = v.sqrt();
    }
    out
}

// ---------------------------------------------------------------- spectra

/// |X_k| for k = 0..=n/2 of `kernel` zero-padded to `n`, by direct summation.
pub fn dft_magnitude(kernel: &[f64], n: usize) -> Vec<f64> {
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in kernel.iter().enumerate() {
                let a = -2.0 * PI * (k * t) as f64 / n as f64;
                re += v * a.cos();
                im += v * a.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

// ---------------------------------------------------------------- ZFF

/// Reference zero-frequency filter: differencing, four running sums
/// (two double integrators), then two centered mean subtractions with
/// windows clipped at the signal edges.
pub fn zff_reference(x: &[f64], window: usize) -> Vec<f64> {
    let n = x.len();
    let mut y: Vec<f64> = (0..n).map(|i| x[i] - if i > 0 { x[i - 1] } else { 0.0 }).collect();
    for _ in 0..4 {
        let mut acc = 0.0;
        for v in y.iter_mut() {
            acc += *v;
            *v = acc;
        }
    }
    let half = window / 2;
    for _ in 0..2 {
        let src = y.clone();
        for i in 0..n {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            let mut s = 0.0;
            for v in &src[lo..=hi] {
                s += v;
            }
            y[i] = src[i] - s / (hi - lo + 1) as f64;
        }
    }
    y
}

/// Indices `i` where the signal goes from negative to non-negative.
pub fn positive_zero_crossings(y: &[f64]) -> Vec<usize> {
    (1..y.len()).filter(|&i| y[i - 1] < 0.0 && y[i] >= 0.0).collect()
}

// ---------------------------------------------------------------- gradients

/// Relative error `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Central-difference derivative of `f` at `x` along coordinate `i`.
pub fn central_diff(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

/// Random tensor with entries in (-1, 1).
pub fn random_tensor<R: Rng>(shape: &[usize], rng: &mut R) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Sum of `w[i] * out[i]`, a generic scalar loss with gradient `w`.
pub fn weighted_sum(net: &Network, x: &Tensor, w: &[f64]) -> f64 {
    net.predict(x).unwrap().data().iter().zip(w).map(|(a, b)| a * b).sum()
}

// ---------------------------------------------------------------- synth decoder

/// Labels recovered from a synthetic waveform.
#[derive(Debug, Clone)]
pub struct Decoded {
    pub country: usize,
    pub intensities: [f64; 10],
    pub age_years: f64,
}

fn spectrum(x: &[f64]) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Mean-square power of `x` between `lo` and `hi` Hz.
fn band_power(spec: &[Complex<f64>], fs: f64, lo: f64, hi: f64) -> f64 {
    let n = spec.len();
    let df = fs / n as f64;
    let k0 = (lo / df).ceil() as usize;
    let k1 = ((hi / df).floor() as usize).min(n / 2 - 1);
    // Positive and mirrored negative bins, scaled by Parseval.
    (k0..=k1).map(|k| 2.0 * spec[k].norm_sqr()).sum::<f64>() / (n as f64 * n as f64)
}

/// Inverts the generator. Each intensity comes from its band's RMS, the
/// country from the strongest carrier, and age from the burst period
/// (spacing of carrier-band envelope peaks).
pub fn decode_synth(x: &[f64], fs: f64) -> Decoded {
    let spec = spectrum(x);
    let margin = 15.0;
    let mut intensities = [0.0; 10];
    for (k, c) in EMOTION_BAND_CENTERS_HZ.iter().enumerate() {
        let p = band_power(&spec, fs, c - BAND_HALF_WIDTH_HZ - margin, c + BAND_HALF_WIDTH_HZ + margin);
        intensities[k] = p.sqrt() / BAND_GAIN;
    }
    let carrier_power: Vec<f64> = CARRIER_HZ
        .iter()
        .map(|&f| band_power(&spec, fs, f - 80.0, f + 80.0))
        .collect();
    let country = (0..carrier_power.len())
        .max_by(|&a, &b| carrier_power[a].total_cmp(&carrier_power[b]))
        .unwrap();

    // Envelope of the carrier band: mask the spectrum, invert, square.
    let f0 = CARRIER_HZ[country];
    let n = spec.len();
    let df = fs / n as f64;
    let mut masked = vec![Complex::new(0.0, 0.0); n];
    for k in 0..n {
        let f = if k <= n / 2 { k as f64 * df } else { (n - k) as f64 * df };
        if (f - f0).abs() < 150.0 {
            masked[k] = spec[k];
        }
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut masked);
    let power: Vec<f64> = masked.iter().map(|c| (c.re / n as f64).powi(2)).collect();
    // Smooth over a few carrier cycles, then take burst centers as the
    // dominant local maxima; the last burst may be cut short and is skipped.
    let smooth = (4.0 * fs / f0) as usize;
    let env: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(smooth / 2);
            let hi = (i + smooth / 2).min(n - 1);
            power[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    let top = env.iter().cloned().fold(0.0, f64::max);
    let burst = (BURST_MS * fs / 1000.0).round() as usize;
    let half = burst / 2;
    let peaks: Vec<usize> = (half..n.saturating_sub(half + 1))
        .filter(|&i| env[i] >= 0.5 * top && env[i - half..=i + half].iter().all(|&v| v <= env[i]))
        .collect();
    let period = (peaks[peaks.len() - 1] - peaks[0]) as f64 / (peaks.len() - 1) as f64;
    Decoded {
        country,
        intensities,
        age_years: rate_hz_to_age(fs / period),
    }
}

// ---------------------------------------------------------------- gradient checks

pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely.
pub const FD_FLOOR: f64 = 1e-6;

fn conv_len(len: usize, kernel: usize, stride: usize) -> usize {
    (len - kernel) / stride + 1
}

/// A small random stack. Variant `i` rotates through the activation kinds,
/// one or two convolutions, and an optional softmax head.
pub fn random_network<R: Rng>(i: usize, rng: &mut R) -> Network {
    let c_in = rng.gen_range(1..=2);
    let len = rng.gen_range(14..=30);
    let mut layers = Vec::new();
    let act = |j: usize, rng: &mut R| {
        if (i + j) % 2 == 0 {
            LayerSpec::Relu
        } else {
            LayerSpec::LeakyRelu {
                slope: rng.gen_range(0.01..0.3),
            }
        }
    };
    let (c1, k1, s1) = (rng.gen_range(1..=3), rng.gen_range(2..=5), rng.gen_range(1..=3));
    layers.push(LayerSpec::Conv1d {
        in_channels: c_in,
        out_channels: c1,
        kernel_len: k1,
        stride: s1,
    });
    layers.push(act(0, rng));
    let mut ch = c1;
    let mut l = conv_len(len, k1, s1);
    if i % 2 == 1 && l >= 3 {
        let (c2, k2) = (rng.gen_range(1..=3), rng.gen_range(2..=3));
        layers.push(LayerSpec::Conv1d {
            in_channels: c1,
            out_channels: c2,
            kernel_len: k2,
            stride: 1,
        });
        layers.push(act(1, rng));
        ch = c2;
        l = conv_len(l, k2, 1);
    }
    let d1 = rng.gen_range(2..=6);
    let d2 = rng.gen_range(2..=4);
    layers.push(LayerSpec::Dense {
        in_dim: ch * l,
        out_dim: d1,
    });
    layers.push(act(2, rng));
    layers.push(LayerSpec::Dense { in_dim: d1, out_dim: d2 });
    if i % 3 == 0 {
        layers.push(LayerSpec::Softmax);
    }
    let mut net = Network::new(vec![c_in, len], layers, rng).unwrap();
    // Non-zero biases so every parameter is exercised.
    for t in net.params_mut() {
        for v in t.data_mut() {
            if *v == 0.0 {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
    }
    net
}

/// Largest relative error between backprop and central differences over
/// every parameter and input element of `net`. Softmax outputs are scored
/// with cross-entropy, others with a random weighted sum.
pub fn network_gradcheck<R: Rng>(net: &Network, rng: &mut R) -> f64 {
    let x = random_tensor(net.input_shape(), rng);
    let out_len: usize = net.output_shape().iter().product();
    let softmax = matches!(net.layers().last(), Some(LayerSpec::Softmax));
    let class = rng.gen_range(0..out_len);
    let w: Vec<f64> = (0..out_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let loss = |n: &Network, x: &Tensor| -> f64 {
        if softmax {
            loss_cross_entropy(&n.predict(x).unwrap(), class).unwrap()
        } else {
            weighted_sum(n, x, &w)
        }
    };
    let cache = net.forward(&x).unwrap();
    let g = if softmax {
        loss_cross_entropy_grad(cache.output(), class).unwrap()
    } else {
        Tensor::new(net.output_shape().to_vec(), w.clone()).unwrap()
    };
    let (grads, dx) = net.backward(&cache, &g).unwrap();

    let mut worst = 0.0f64;
    for (k, gt) in grads.iter().enumerate() {
        for e in 0..gt.len() {
            let eval = |v: f64| {
                let mut n = net.clone();
                n.params_mut().nth(k).unwrap().data_mut()[e] = v;
                loss(&n, &x)
            };
            let v0 = net.params().iter().flatten().nth(k).unwrap().data()[e];
            let fd = (eval(v0 + FD_STEP) - eval(v0 - FD_STEP)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(gt.data()[e], fd, FD_FLOOR));
        }
    }
    for e in 0..x.len() {
        let mut f = |v: &[f64]| loss(net, &Tensor::new(x.shape().to_vec(), v.to_vec()).unwrap());
        let fd = central_diff(&mut f, x.data(), e, FD_STEP);
        worst = worst.max(rel_err(dx.data()[e], fd, FD_FLOOR));
    }
    worst
}

/// Same check for the combined multi-task loss of a small random model.
pub fn mtl_gradcheck<R: Rng>(terms: LossTerms, rng: &mut R) -> f64 {
    let input_dim = rng.gen_range(3..=8);
    let cfg = MtlConfig {
        hidden1: rng.gen_range(4..=8),
        hidden2: rng.gen_range(2..=4),
        leaky_slope: rng.gen_range(0.01..0.3),
        ..MtlConfig::default()
    };
    let mut model = build_mtl(&cfg, input_dim, rng).unwrap();
    for t in model.params_mut() {
        for v in t.data_mut() {
            if *v == 0.0 {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
    }
    let x: Vec<f64> = (0..input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut emotions = [0.0; 10];
    emotions.iter_mut().for_each(|e| *e = rng.gen_range(0.0..1.0));
    let target = MtlTarget {
        emotions,
        age_norm: rng.gen_range(-1.5..1.5),
        country: rng.gen_range(0..4),
    };
    let mut grads = model.zero_grads();
    model.accumulate_gradients(&x, &target, terms, &mut grads).unwrap();
    let analytic: Vec<Vec<f64>> = grads.iter().map(|t| t.data().to_vec()).collect();

    let mut worst = 0.0f64;
    for (k, gt) in analytic.iter().enumerate() {
        for e in 0..gt.len() {
            let eval = |delta: f64| {
                let mut m = model.clone();
                m.params_mut().nth(k).unwrap().data_mut()[e] += delta;
                mtl_loss(&m.forward(&x).unwrap(), &target, terms).unwrap()
            };
            let fd = (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(gt[e], fd, FD_FLOOR));
        }
    }
    worst
}

// ---------------------------------------------------------------- fixtures

/// `per_speaker` training records for each of `n_speakers` speakers.
pub fn speaker_records(n_speakers: usize, per_speaker: usize) -> Vec<exvo::data::LabelRecord> {
    (0..n_speakers * per_speaker)
        .map(|i| exvo::data::LabelRecord {
            utterance_id: format!("u{i:04}"),
            speaker_id: format!("s{:03}", i % n_speakers),
            split: exvo::data::Split::Train,
            country: i % 4,
            age_years: 18.0 + (i % 22) as f64,
            intensities: [0.5; 10],
        })
        .collect()
}

/// Network whose first layer is a convolution with the given kernels
/// (`out_channels x in_channels x kernel_len`, row-major).
pub fn conv_network(out_channels: usize, in_channels: usize, kernels: &[f64]) -> Network {
    let kernel_len = kernels.len() / (out_channels * in_channels);
    let mut net = Network::seeded(
        vec![in_channels, 4 * kernel_len],
        vec![LayerSpec::Conv1d {
            in_channels,
            out_channels,
            kernel_len,
            stride: 1,
        }],
        0,
    )
    .unwrap();
    net.params_mut().next().unwrap().data_mut().copy_from_slice(kernels);
    net
}

/// Examples an MTL model can fit exactly: the country is a one-hot block
/// of the features, emotions and age are affine in the remaining ones.
pub fn separable_examples<R: Rng>(n: usize, prefix: &str, rng: &mut R) -> Vec<exvo::mtl::MtlExample> {
    // Fixed mixing so every call describes the same task.
    let mix: Vec<[f64; 4]> = (0..10)
        .map(|k| {
            let w = [1.0 + (k % 4) as f64, 1.0 + (k % 3) as f64, 1.0 + (k % 2) as f64, 1.0 + (k % 5) as f64];
            let s: f64 = w.iter().sum();
            [w[0] / s, w[1] / s, w[2] / s, w[3] / s]
        })
        .collect();
    (0..n)
        .map(|i| {
            let country = i % 4;
            let z: [f64; 4] = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
            let mut features = vec![0.0; 4];
            features[country] = 1.0;
            features.extend_from_slice(&z);
            let emotions = std::array::from_fn(|k| (0..4).map(|j| mix[k][j] * z[j]).sum());
            exvo::mtl::MtlExample {
                utterance_id: format!("{prefix}{i:04}"),
                features,
                emotions,
                age_years: 18.0 + 21.0 * (0.5 * z[0] + 0.3 * z[1] + 0.2 * z[2]),
                country,
            }
        })
        .collect()
}

/// Records carrying the labels of `examples`.
pub fn records_of(examples: &[exvo::mtl::MtlExample], split: exvo::data::Split) -> Vec<exvo::data::LabelRecord> {
    examples
        .iter()
        .map(|e| exvo::data::LabelRecord {
            utterance_id: e.utterance_id.clone(),
            speaker_id: format!("spk_{}", e.utterance_id),
            split,
            country: e.country,
            age_years: e.age_years,
            intensities: e.emotions,
        })
        .collect()
}

/// Random but valid predictions for `ids`.
pub fn random_predictions<R: Rng>(ids: &[String], rng: &mut R) -> exvo::mtl::Predictions {
    ids.iter()
        .map(|id| {
            let raw: [f64; 4] = std::array::from_fn(|_| rng.gen_range(0.01..1.0));
            let s: f64 = raw.iter().sum();
            let p = exvo::mtl::MtlPrediction {
                emotions: std::array::from_fn(|_| rng.gen_range(0.0..1.0)),
                age_years: rng.gen_range(18.0..39.0),
                country_probs: raw.map(|v| v / s),
            };
            (id.clone(), p)
        })
        .collect()
}
