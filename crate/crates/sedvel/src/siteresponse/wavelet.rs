//! Ricker wavelets and flat-spectrum input ensembles.

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, numerical, Result};

use super::{next_pow2, AccelUnits, MotionRecord};

/// Fraction of 1/fc required before the wavelet center.
const LEAD: f64 = 1.2;
/// Fraction of 1/fc required after the wavelet center (the envelope is below
/// 1e-26 of the peak there).
const TAIL: f64 = 2.5;

/// Unit-peak Ricker wavelet `(1 - 2 pi^2 fc^2 tau^2) exp(-pi^2 fc^2 tau^2)`
/// centered at `t0` (snapped to the sample grid so the peak is exact).
pub fn ricker(fc: f64, dt: f64, duration: f64, t0: f64) -> Result<MotionRecord> {
    if !(fc > 0.0) {
        return Err(domain(format!("fc must be > 0, got {fc}")));
    }
    if dt > 1.0 / (20.0 * fc) {
        return Err(domain(format!(
            "under-resolved wavelet: dt = {dt} exceeds 1/(20 fc) = {}",
            1.0 / (20.0 * fc)
        )));
    }
    if t0 < LEAD / fc {
        return Err(domain(format!(
            "t0 = {t0} clips the wavelet; needs >= {LEAD}/fc = {}",
            LEAD / fc
        )));
    }
    if duration < t0 + TAIL / fc {
        return Err(domain(format!(
            "duration {duration} too short; needs >= t0 + {TAIL}/fc = {}",
            t0 + TAIL / fc
        )));
    }
    let n = (duration / dt).round() as usize;
    let t0 = (t0 / dt).round() * dt;
    let acc = (0..n)
        .map(|i| {
            let tau = i as f64 * dt - t0;
            let arg = std::f64::consts::PI.powi(2) * fc * fc * tau * tau;
            (1.0 - 2.0 * arg) * (-arg).exp()
        })
        .collect();
    MotionRecord::new(dt, acc, AccelUnits::MetersPerSecond2, format!("ricker_fc{fc:.4}"))
}

/// Continuous-time Fourier amplitude of the unit-peak Ricker wavelet.
pub fn ricker_spectrum(f: f64, fc: f64) -> f64 {
    let r = f / fc;
    2.0 / std::f64::consts::PI.sqrt() * r * r / fc * (-r * r).exp()
}

/// Ensemble of log-spaced Ricker wavelets whose summed spectra are flat.
///
/// Member amplitudes are solved by least squares on the analytic spectra so
/// the ensemble-mean Fourier amplitude varies by less than 3 dB across
/// [f_lo, f_hi]. All members share dt and duration (a power-of-two sample
/// count covering the slowest wavelet); centers sit at 1.25/fc.
pub fn ensemble_input(f_lo: f64, f_hi: f64, count: usize, dt: f64) -> Result<Vec<MotionRecord>> {
    if !(f_lo > 0.0) || !(f_hi > f_lo) {
        return Err(domain(format!(
            "need 0 < f_lo < f_hi, got [{f_lo}, {f_hi}]"
        )));
    }
    let decades = (f_hi / f_lo).log10();
    let needed = (8.0 * decades).ceil() as usize;
    if count < needed.max(2) {
        return Err(domain(format!(
            "{count} wavelets cannot cover {decades:.2} decades flatly; need >= {}",
            needed.max(2)
        )));
    }
    // Common duration: slowest wavelet needs (LEAD + TAIL)/f_lo seconds.
    let min_samples = ((LEAD + TAIL) / f_lo / dt).ceil() as usize;
    let n = next_pow2(min_samples.max(super::MIN_SAMPLES));
    let duration = n as f64 * dt;

    let fcs: Vec<f64> = (0..count)
        .map(|i| f_lo * (f_hi / f_lo).powf(i as f64 / (count - 1) as f64))
        .collect();

    // Least-squares weights on a log frequency grid.
    let n_grid = 256;
    let grid: Vec<f64> = (0..n_grid)
        .map(|i| f_lo * (f_hi / f_lo).powf(i as f64 / (n_grid - 1) as f64))
        .collect();
    let mut active: Vec<usize> = (0..count).collect();
    let mut weights = vec![0.0; count];
    for _ in 0..count {
        let a = DMatrix::from_fn(n_grid, active.len(), |r, c| {
            ricker_spectrum(grid[r], fcs[active[c]]) / active.len() as f64
        });
        let rhs = DVector::from_element(n_grid, 1.0);
        let normal = a.transpose() * &a;
        let atb = a.transpose() * rhs;
        let chol = normal
            .cholesky()
            .ok_or_else(|| numerical("ensemble weight system is singular".to_string()))?;
        let w = chol.solve(&atb);
        if let Some(neg) = (0..active.len()).find(|&i| w[i] <= 0.0) {
            // Drop non-positive members and re-solve.
            active.remove(neg);
            if active.len() < 2 {
                return Err(numerical(
                    "ensemble weight solve collapsed to fewer than 2 members".to_string(),
                ));
            }
            continue;
        }
        for (slot, &idx) in active.iter().enumerate() {
            weights[idx] = w[slot] / active.len() as f64;
        }
        break;
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Err(numerical("ensemble weights failed to converge".to_string()));
    }

    // Verify flatness of the achieved analytic mean spectrum.
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &f in &grid {
        let s: f64 = fcs
            .iter()
            .zip(&weights)
            .map(|(&fc, &w)| w * ricker_spectrum(f, fc))
            .sum();
        lo = lo.min(s);
        hi = hi.max(s);
    }
    let ripple_db = 20.0 * (hi / lo).log10();
    if !(ripple_db < 3.0) {
        return Err(numerical(format!(
            "ensemble mean spectrum varies by {ripple_db:.2} dB over [{f_lo}, {f_hi}]; \
             increase the wavelet count"
        )));
    }

    let mut members = Vec::with_capacity(count);
    for (&fc, &w) in fcs.iter().zip(&weights) {
        if w == 0.0 {
            continue;
        }
        let mut m = ricker(fc, dt, duration, 1.25 / fc)?;
        for a in &mut m.acc {
            *a *= w;
        }
        m.label = format!("ricker_fc{fc:.4}_w{w:.4}");
        members.push(m);
    }
    Ok(members)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use num_complex::Complex;

    fn fas_of(motion: &MotionRecord) -> Vec<(f64, f64)> {
        let n = next_pow2(motion.acc.len());
        let mut buf: Vec<Complex<f64>> =
            motion.acc.iter().map(|&a| Complex::new(a, 0.0)).collect();
        buf.resize(n, Complex::new(0.0, 0.0));
        rustfft::FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        (1..=n / 2)
            .map(|k| (k as f64 / (n as f64 * motion.dt), buf[k].norm() * motion.dt))
            .collect()
    }

    #[test]
    fn peak_and_zero_mean() {
        let m = ricker(2.0, 0.005, 10.24, 1.0).unwrap();
        let peak_idx = (1.0f64 / 0.005).round() as usize;
        assert_eq!(m.acc[peak_idx], 1.0);
        assert!(m.acc.iter().cloned().fold(0.0f64, f64::max) <= 1.0);
        let integral: f64 = m.acc.iter().sum::<f64>() * m.dt;
        assert!(integral.abs() <= 1e-6 * m.duration(), "integral {integral}");
    }

    #[test]
    fn spectrum_peaks_at_fc() {
        let fc = 1.5;
        let m = ricker(fc, 0.005, 20.48, 1.5).unwrap();
        let fas = fas_of(&m);
        let (f_peak, _) = fas
            .iter()
            .cloned()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        let df = fas[1].0 - fas[0].0;
        assert!((f_peak - fc).abs() <= df, "peak at {f_peak}, fc {fc}");
        // Matches the analytic spectrum at the peak within discretization.
        let analytic = ricker_spectrum(fc, fc);
        let measured = fas
            .iter()
            .map(|&(_, a)| a)
            .fold(0.0f64, f64::max);
        assert_relative_eq!(measured, analytic, max_relative = 0.01);
    }

    #[test]
    fn validation_errors() {
        assert!(ricker(0.0, 0.005, 10.0, 1.0).is_err());
        // dt too coarse for fc = 20 Hz: 1/(20 fc) = 0.0025.
        assert!(ricker(20.0, 0.004, 10.0, 1.0).is_err());
        // Duration too short.
        assert!(ricker(0.5, 0.005, 4.0, 2.5).is_err());
        // Clipped left tail.
        assert!(ricker(0.5, 0.005, 20.0, 1.0).is_err());
    }

    #[test]
    fn ensemble_mean_spectrum_is_flat() {
        let members = ensemble_input(0.1, 10.0, 20, 0.005).unwrap();
        assert!(members.len() >= 16);
        let n = members[0].acc.len();
        assert_eq!(n, 8192);
        for m in &members {
            assert_eq!(m.acc.len(), n);
        }
        // Sum the actual FFT amplitudes.
        let mut mean_fas: Vec<(f64, f64)> = fas_of(&members[0]);
        for m in &members[1..] {
            for (acc, (_, a)) in mean_fas.iter_mut().zip(fas_of(m)) {
                acc.1 += a;
            }
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for &(f, a) in &mean_fas {
            if f >= 0.1 && f <= 10.0 {
                lo = lo.min(a);
                hi = hi.max(a);
            }
        }
        let ripple_db = 20.0 * (hi / lo).log10();
        assert!(ripple_db < 3.0, "ripple {ripple_db:.2} dB");
    }

    #[test]
    fn ensemble_validation() {
        assert!(ensemble_input(1.0, 1.0, 20, 0.005).is_err());
        assert!(ensemble_input(0.1, 10.0, 7, 0.005).is_err());
    }

    #[test]
    fn analytic_spectrum_peak_location() {
        // d|A|/df = 0 at f = fc.
        let fc = 2.0;
        let up = ricker_spectrum(fc * 1.001, fc);
        let at = ricker_spectrum(fc, fc);
        let dn = ricker_spectrum(fc * 0.999, fc);
        assert!(at >= up && at >= dn);
        assert_abs_diff_eq!(at, 2.0 / std::f64::consts::PI.sqrt() / fc * (-1.0f64).exp(), epsilon = 1e-12);
    }
}
