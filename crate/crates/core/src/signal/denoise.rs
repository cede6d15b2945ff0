//! Denoisers an attacker (or the defense analysis) can run over a trace:
//! exact 1-D total-variation proximity and a truncated Gaussian filter.

use super::trace::SensorTrace;

/// Which denoiser to run; `Identity` passes the signal through.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Denoiser {
    #[serde(rename = "none")]
    Identity,
    Tv { lambda: f64 },
    GaussianFilter { sigma: f64 },
}

impl Denoiser {
    pub fn apply(&self, xs: &[f64]) -> Vec<f64> {
        match *self {
            Denoiser::Identity => xs.to_vec(),
            Denoiser::Tv { lambda } => tv_denoise(xs, lambda),
            Denoiser::GaussianFilter { sigma } => gaussian_filter(xs, sigma),
        }
    }

    /// Apply per axis, keeping rate and label.
    pub fn apply_trace(&self, trace: &SensorTrace) -> SensorTrace {
        if matches!(self, Denoiser::Identity) {
            return trace.clone();
        }
        let axes: Vec<Vec<f64>> = (0..3).map(|a| self.apply(&trace.axis(a))).collect();
        let samples = (0..trace.len())
            .map(|i| [axes[0][i], axes[1][i], axes[2][i]])
            .collect();
        SensorTrace::new(trace.sample_rate, samples, trace.subject_id.clone())
    }
}

/// Exact solution of min_u ½‖u−x‖² + λ·Σ|u_{i+1}−u_i| by a single forward
/// sweep that tracks the tube of admissible segment values and emits a
/// segment each time the tube pinches shut (a taut-string-style direct
/// method: O(n) memory, worst-case O(n²), linear in practice).
pub fn tv_denoise(xs: &[f64], lambda: f64) -> Vec<f64> {
    let n = xs.len();
    if n == 0 {
        return Vec::new();
    }
    if lambda <= 0.0 || n == 1 {
        return xs.to_vec();
    }
    let mut out = vec![0.0f64; n];
    // Current segment [k0..], candidate level bounds (vmin, vmax) with slack
    // accumulators (umin, umax), and the last indices where each bound was
    // tightened (km for the lower string, kp for the upper).
    let (mut k, mut k0, mut km, mut kp) = (0usize, 0usize, 0usize, 0usize);
    let mut vmin = xs[0] - lambda;
    let mut vmax = xs[0] + lambda;
    let mut umin = lambda;
    let mut umax = -lambda;
    loop {
        if k == n - 1 {
            if umin < 0.0 {
                // Lower string breaks at the boundary: emit at vmin, restart
                // after km with the upper string still alive.
                for v in &mut out[k0..=km] {
                    *v = vmin;
                }
                k = km + 1;
                k0 = k;
                km = k;
                vmin = xs[k];
                umin = lambda;
                umax = xs[k] + lambda - vmax;
            } else if umax > 0.0 {
                for v in &mut out[k0..=kp] {
                    *v = vmax;
                }
                k = kp + 1;
                k0 = k;
                kp = k;
                vmax = xs[k];
                umax = -lambda;
                umin = xs[k] - lambda - vmin;
            } else {
                // Strings meet: the tail is one flat segment at its mean.
                let level = vmin + umin / (k - k0 + 1) as f64;
                for v in &mut out[k0..n] {
                    *v = level;
                }
                return out;
            }
            continue;
        }
        if xs[k + 1] + umin < vmin - lambda {
            // Negative jump: the segment up to km is settled at vmin.
            for v in &mut out[k0..=km] {
                *v = vmin;
            }
            k = km + 1;
            k0 = k;
            km = k;
            kp = k;
            vmin = xs[k];
            vmax = xs[k] + 2.0 * lambda;
            umin = lambda;
            umax = -lambda;
        } else if xs[k + 1] + umax > vmax + lambda {
            // Positive jump, symmetric case.
            for v in &mut out[k0..=kp] {
                *v = vmax;
            }
            k = kp + 1;
            k0 = k;
            km = k;
            kp = k;
            vmin = xs[k] - 2.0 * lambda;
            vmax = xs[k];
            umin = lambda;
            umax = -lambda;
        } else {
            // No jump: absorb the sample and re-tighten the bounds.
            k += 1;
            umin += xs[k] - vmin;
            umax += xs[k] - vmax;
            if umin >= lambda {
                vmin += (umin - lambda) / (k - k0 + 1) as f64;
                umin = lambda;
                km = k;
            }
            if umax <= -lambda {
                vmax += (umax + lambda) / (k - k0 + 1) as f64;
                umax = -lambda;
                kp = k;
            }
        }
    }
}

/// Convolve with a truncated (±4σ) renormalized Gaussian kernel, reflecting
/// the signal at both edges. Reflection plus a normalized symmetric kernel
/// preserves the overall mean.
pub fn gaussian_filter(xs: &[f64], sigma: f64) -> Vec<f64> {
    let n = xs.len();
    if n == 0 || sigma <= 0.0 {
        return xs.to_vec();
    }
    let radius = (4.0 * sigma).ceil() as usize;
    let mut kernel = Vec::with_capacity(2 * radius + 1);
    for i in -(radius as isize)..=(radius as isize) {
        let z = i as f64 / sigma;
        kernel.push((-0.5 * z * z).exp());
    }
    let sum: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= sum;
    }
    (0..n)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(j, &w)| w * xs[reflect(i as isize + j as isize - radius as isize, n)])
                .sum()
        })
        .collect()
}

/// Mirror an out-of-range index back into [0, n): …, 1, 0 | 0, 1, …, n−1 | n−1, n−2, …
fn reflect(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}
