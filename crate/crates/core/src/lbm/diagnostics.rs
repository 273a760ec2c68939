use rustfft::{num_complex::Complex, FftPlanner};

use super::DistributionField;

/// Sum of all populations with Neumaier compensation, in storage order.
pub fn total_mass(f: &DistributionField) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for &v in f.as_slice() {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Frequency (cycles per sample) of the strongest non-DC component of `series`.
///
/// The mean is removed and a Hann window applied; the peak bin is refined by
/// parabolic interpolation on log magnitudes.
pub fn dominant_frequency(series: &[f64]) -> Option<f64> {
    let n = series.len();
    if n < 8 {
        return None;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / (n - 1) as f64).cos();
            Complex::new((v - mean) * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mags: Vec<f64> = buf[..n / 2].iter().map(|c| c.norm()).collect();
    let (peak, &best) = mags
        .iter()
        .enumerate()
        .skip(1)
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    if best <= 0.0 {
        return None;
    }
    let mut offset = 0.0;
    if peak + 1 < mags.len() && mags[peak - 1] > 0.0 && mags[peak + 1] > 0.0 {
        let (a, b, c) = (mags[peak - 1].ln(), best.ln(), mags[peak + 1].ln());
        let denom = a - 2.0 * b + c;
        if denom.abs() > 1e-300 {
            offset = 0.5 * (a - c) / denom;
        }
    }
    Some((peak as f64 + offset) / n as f64)
}

/// `St = f * D / u` with `f` in cycles per time step.
pub fn strouhal_number(frequency: f64, diameter: f64, velocity: f64) -> f64 {
    frequency * diameter / velocity
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_a_pure_tone() {
        let f0 = 0.0173;
        let series: Vec<f64> = (0..4096)
            .map(|k| 3.0 + (2.0 * std::f64::consts::PI * f0 * k as f64).sin())
            .collect();
        let f = dominant_frequency(&series).unwrap();
        assert!((f - f0).abs() < 2e-5, "{f}");
    }

    #[test]
    fn compensated_sum_of_a_field() {
        let mut f = DistributionField::zeros(10, 10);
        f.as_mut_slice().fill(0.1);
        assert!((total_mass(&f) - 90.0).abs() < 1e-12);
    }
}
