use super::Waveform;
use crate::error::{invalid, Result};

/// Trend-removal window used when none is configured, in milliseconds.
pub const DEFAULT_TREND_WINDOW_MS: f64 = 10.0;

/// Number of samples in the centered trend-removal window.
///
/// The nominal length `round(ms * fs / 1000)` is widened to the next odd
/// number so the window is symmetric about its center sample; a symmetric
/// window is what removes polynomial trends exactly.
pub fn trend_window_samples(trend_window_ms: f64, sample_rate_hz: u32) -> usize {
    let nominal = (trend_window_ms * sample_rate_hz as f64 / 1000.0).round() as usize;
    2 * (nominal / 2) + 1
}

/// Zero-frequency filter.
///
/// First difference, two cascaded 0 Hz resonators
/// `y[n] = 2y[n-1] - y[n-2] + x[n]` with zero initial state, then two passes of
/// local-mean subtraction over a centered window (truncated at the edges).
/// Output length equals input length.
pub fn zff_filter(w: &Waveform, trend_window_ms: f64) -> Result<Waveform> {
    if w.is_empty() {
        return Err(invalid("zff_filter: empty signal"));
    }
    if !(trend_window_ms > 0.0) {
        return Err(invalid("zff_filter: trend window must be positive"));
    }
    let nominal = (trend_window_ms * w.sample_rate_hz() as f64 / 1000.0).round() as usize;
    if nominal < 3 {
        return Err(invalid(format!(
            "zff_filter: trend window of {trend_window_ms} ms is {nominal} samples, need at least 3"
        )));
    }
    let window = trend_window_samples(trend_window_ms, w.sample_rate_hz());
    if window > w.len() {
        return Err(invalid(format!(
            "zff_filter: trend window ({window} samples) longer than signal ({})",
            w.len()
        )));
    }

    let s = w.samples();
    let mut y = Vec::with_capacity(s.len());
    let mut prev = 0.0;
    for &v in s {
        y.push(v - prev);
        prev = v;
    }
    resonate(&mut y);
    resonate(&mut y);
    let half = window / 2;
    let y = remove_trend(&y, half);
    let y = remove_trend(&y, half);
    Waveform::new(y, w.sample_rate_hz())
}

fn resonate(x: &mut [f64]) {
    let (mut y1, mut y2) = (0.0, 0.0);
    for v in x.iter_mut() {
        let y = 2.0 * y1 - y2 + *v;
        y2 = y1;
        y1 = y;
        *v = y;
    }
}

/// Subtracts the mean over `[n - half, n + half]`, clipped to the signal.
///
/// Sums are taken directly per sample rather than with a running sum: the
/// resonator output grows polynomially and a running sum would cancel
/// catastrophically.
fn remove_trend(y: &[f64], half: usize) -> Vec<f64> {
    let n = y.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            let mean = y[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
            y[i] - mean
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave(s: Vec<f64>) -> Waveform {
        Waveform::new(s, 16_000).unwrap()
    }

    #[test]
    fn zero_in_zero_out() {
        let out = zff_filter(&wave(vec![0.0; 1000]), 10.0).unwrap();
        assert_eq!(out.len(), 1000);
        assert!(out.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_input_is_flattened() {
        let out = zff_filter(&wave(vec![0.5; 1600]), 10.0).unwrap();
        let w = trend_window_samples(10.0, 16_000);
        // Past the edges the residual is pure rounding noise.
        for &v in &out.samples()[w..out.len() - w] {
            assert!(v.abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn window_is_odd_and_centered() {
        assert_eq!(trend_window_samples(10.0, 16_000), 161);
        assert_eq!(trend_window_samples(0.1875, 16_000), 3);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(zff_filter(&wave(vec![]), 10.0).is_err());
        assert!(zff_filter(&wave(vec![1.0; 100]), 10.0).is_err());
        assert!(zff_filter(&wave(vec![1.0; 1000]), 0.1).is_err());
    }

    #[test]
    fn output_is_finite_for_long_noise() {
        let s: Vec<f64> = (0..16_000).map(|i| ((i * 7919) % 1000) as f64 / 500.0 - 1.0).collect();
        let out = zff_filter(&wave(s), 10.0).unwrap();
        assert!(out.samples().iter().all(|v| v.is_finite()));
    }
}
