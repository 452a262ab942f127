use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{invalid, Result};
use crate::nn::{LayerSpec, Network};

pub const DEFAULT_N_FFT: usize = 512;

/// Summed magnitude response of the first convolution layer, peak-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterResponse {
    pub n_fft: usize,
    /// `n_fft / 2 + 1` bins in [0, 1].
    pub magnitude: Vec<f64>,
    pub bin_hz: Vec<f64>,
}

impl FilterResponse {
    /// `frequency_hz,magnitude` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("frequency_hz,magnitude\n");
        for (f, m) in self.bin_hz.iter().zip(&self.magnitude) {
            s.push_str(&format!("{f},{m}\n"));
        }
        s
    }
}

/// Zero-pads every first-layer kernel (all output and input channels) to
/// `n_fft`, sums the DFT magnitudes and scales the sum to a peak of 1.
pub fn cumulative_frequency_response(
    net: &Network,
    n_fft: usize,
    sample_rate_hz: u32,
) -> Result<FilterResponse> {
    let Some(&LayerSpec::Conv1d {
        in_channels,
        out_channels,
        kernel_len,
        ..
    }) = net.layers().first()
    else {
        return Err(invalid("first layer is not convolutional"));
    };
    if !n_fft.is_power_of_two() || n_fft < kernel_len {
        return Err(invalid(format!(
            "n_fft must be a power of two >= kernel length {kernel_len}, got {n_fft}"
        )));
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let n_bins = n_fft / 2 + 1;
    let mut total = vec![0.0; n_bins];
    let weights = net.params()[0][0].data();
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    for k in 0..out_channels * in_channels {
        let kern = &weights[k * kernel_len..(k + 1) * kernel_len];
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (b, &w) in buf.iter_mut().zip(kern) {
            b.re = w;
        }
        fft.process(&mut buf);
        for (t, c) in total.iter_mut().zip(&buf) {
            *t += c.norm();
        }
    }
    let peak = total.iter().copied().fold(0.0, f64::max);
    if peak > 0.0 {
        total.iter_mut().for_each(|v| *v /= peak);
    }
    let bin_hz = (0..n_bins)
        .map(|i| i as f64 * sample_rate_hz as f64 / n_fft as f64)
        .collect();
    Ok(FilterResponse {
        n_fft,
        magnitude: total,
        bin_hz,
    })
}
