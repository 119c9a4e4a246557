//! Transmitter and propagation impairments: Saleh-type HPA distortion, EVM
//! drive calibration, linear-convolution channel and AWGN.

use crate::channel::Cir;
use crate::error::{Error, Result};
use crate::numerics::{complex_gaussian, SeededRng, C64};

/// Saleh AM/AM and AM/PM amplifier with an input drive scale `g`.
///
/// With envelope `r = g |x|`: `A(r) = alpha_a r / (1 + beta_a r^2)` and
/// `Phi(r) = alpha_phi r^2 / (1 + beta_phi r^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HpaModel {
    pub alpha_a: f64,
    pub beta_a: f64,
    pub alpha_phi: f64,
    pub beta_phi: f64,
    pub drive_scale: f64,
}

impl Default for HpaModel {
    fn default() -> Self {
        Self {
            alpha_a: 1.96,
            beta_a: 0.99,
            alpha_phi: 2.53,
            beta_phi: 2.82,
            drive_scale: 1.0,
        }
    }
}

impl HpaModel {
    pub fn new(alpha_a: f64, beta_a: f64, alpha_phi: f64, beta_phi: f64, drive_scale: f64) -> Result<Self> {
        let model = Self {
            alpha_a,
            beta_a,
            alpha_phi,
            beta_phi,
            drive_scale,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let all = [self.alpha_a, self.beta_a, self.alpha_phi, self.beta_phi, self.drive_scale];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidInput(format!("HPA parameters must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn with_drive(self, drive_scale: f64) -> Self {
        Self { drive_scale, ..self }
    }

    pub fn amplitude(&self, r: f64) -> f64 {
        self.alpha_a * r / (1.0 + self.beta_a * r * r)
    }

    pub fn phase(&self, r: f64) -> f64 {
        self.alpha_phi * r * r / (1.0 + self.beta_phi * r * r)
    }

    /// Small-signal gain of the AM/AM curve.
    pub fn linear_gain(&self) -> f64 {
        self.alpha_a
    }

    /// Saturation point `(1 / sqrt(beta_a), alpha_a / (2 sqrt(beta_a)))`.
    pub fn saturation(&self) -> (f64, f64) {
        let r = 1.0 / self.beta_a.sqrt();
        (r, self.alpha_a / (2.0 * self.beta_a.sqrt()))
    }

    /// Distorted samples rescaled by `1 / (alpha_a g)`, so the small-signal
    /// path has unit gain whatever the drive level.
    pub fn transmit(&self, samples: &[C64]) -> Vec<C64> {
        let scale = 1.0 / (self.alpha_a * self.drive_scale);
        hpa_distort(samples, self).into_iter().map(|x| x * scale).collect()
    }
}

pub fn hpa_distort(samples: &[C64], model: &HpaModel) -> Vec<C64> {
    samples
        .iter()
        .map(|&x| {
            let mag = x.norm();
            if mag == 0.0 {
                return C64::new(0.0, 0.0);
            }
            let r = model.drive_scale * mag;
            C64::from_polar(model.amplitude(r), x.arg() + model.phase(r))
        })
        .collect()
}

/// Linear-region output for the same drive: `alpha_a g x`.
pub fn linear_reference(samples: &[C64], model: &HpaModel) -> Vec<C64> {
    let gain = model.alpha_a * model.drive_scale;
    samples.iter().map(|&x| x * gain).collect()
}

/// Error vector magnitude in percent.
pub fn evm(distorted: &[C64], linear_ref: &[C64]) -> Result<f64> {
    if distorted.len() != linear_ref.len() {
        return Err(Error::DimensionMismatch(format!(
            "EVM inputs have lengths {} and {}",
            distorted.len(),
            linear_ref.len()
        )));
    }
    let reference: f64 = linear_ref.iter().map(|r| r.norm_sqr()).sum();
    if reference == 0.0 {
        return Err(Error::ZeroReferenceEnergy);
    }
    let error: f64 = distorted
        .iter()
        .zip(linear_ref)
        .map(|(x, r)| (x - r).norm_sqr())
        .sum();
    Ok(100.0 * (error / reference).sqrt())
}

pub fn evm_at_drive(model: &HpaModel, drive_scale: f64, probe: &[C64]) -> Result<f64> {
    let m = model.with_drive(drive_scale);
    evm(&hpa_distort(probe, &m), &linear_reference(probe, &m))
}

pub const DRIVE_BRACKET: (f64, f64) = (1e-3, 1e3);
const MAX_BISECTION_STEPS: usize = 60;

/// Drive scale whose EVM on `probe` hits `target_evm` percent.
///
/// EVM is non-decreasing in the drive, so a log-domain bisection over
/// [`DRIVE_BRACKET`] converges.
pub fn calibrate_drive(model: &HpaModel, target_evm: f64, probe: &[C64]) -> Result<f64> {
    if !(target_evm > 0.0 && target_evm < 100.0) {
        return Err(Error::InvalidInput(format!(
            "EVM target {target_evm}% must lie in (0, 100)"
        )));
    }
    let (lo_g, hi_g) = DRIVE_BRACKET;
    let lo_evm = evm_at_drive(model, lo_g, probe)?;
    let hi_evm = evm_at_drive(model, hi_g, probe)?;
    if target_evm < lo_evm || target_evm > hi_evm {
        return Err(Error::CalibrationFailure {
            target: target_evm,
            min: lo_evm,
            max: hi_evm,
        });
    }
    let (mut lo, mut hi) = (lo_g.ln(), hi_g.ln());
    let mut best = (f64::INFINITY, lo_g);
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let g = mid.exp();
        let e = evm_at_drive(model, g, probe)?;
        if (e - target_evm).abs() < best.0 {
            best = ((e - target_evm).abs(), g);
        }
        if best.0 < 1e-6 {
            break;
        }
        if e < target_evm {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best.1)
}

/// Additive noise level for a target SNR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkNoise {
    pub snr_db: f64,
    pub variance: f64,
}

impl LinkNoise {
    /// `variance = mean |signal|^2 / 10^(snr_db / 10)`; an infinite SNR
    /// gives a noiseless link.
    pub fn for_signal(snr_db: f64, signal: &[C64]) -> Self {
        let power = if signal.is_empty() {
            0.0
        } else {
            signal.iter().map(|s| s.norm_sqr()).sum::<f64>() / signal.len() as f64
        };
        Self {
            snr_db,
            variance: power / 10f64.powf(snr_db / 10.0),
        }
    }

    pub fn noiseless() -> Self {
        Self {
            snr_db: f64::INFINITY,
            variance: 0.0,
        }
    }
}

/// Full linear convolution, length `x.len() + h.len() - 1`.
pub fn convolve(x: &[C64], h: &[C64]) -> Vec<C64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let mut out = vec![C64::new(0.0, 0.0); x.len() + h.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        for (l, &hl) in h.iter().enumerate() {
            out[i + l] += xi * hl;
        }
    }
    out
}

/// Segment `i` is convolved with `cirs[i]` and the outputs are overlap-added
/// at the segment's start offset, so each segment's tail spills into the
/// next one.
pub fn time_varying_convolve(segments: &[Vec<C64>], cirs: &[Cir]) -> Result<Vec<C64>> {
    if segments.len() != cirs.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} segments but {} channel responses",
            segments.len(),
            cirs.len()
        )));
    }
    let total: usize = segments.iter().map(Vec::len).sum();
    let max_l = cirs.iter().map(Cir::len).max().unwrap_or(1);
    let mut out = vec![C64::new(0.0, 0.0); total + max_l - 1];
    let mut offset = 0;
    for (seg, cir) in segments.iter().zip(cirs) {
        for (i, v) in convolve(seg, &cir.taps).into_iter().enumerate() {
            out[offset + i] += v;
        }
        offset += seg.len();
    }
    Ok(out)
}

pub fn add_noise(signal: &mut [C64], variance: f64, rng: &mut SeededRng) -> Result<()> {
    if variance == 0.0 {
        return Ok(());
    }
    let noise = complex_gaussian(rng, signal.len(), variance)?;
    signal.iter_mut().zip(noise).for_each(|(s, n)| *s += n);
    Ok(())
}

/// `y = x * h + n` for a stream of back-to-back blocks.
pub fn transmit_through_channel(
    stream: &[C64],
    h: &Cir,
    noise: &LinkNoise,
    rng: &mut SeededRng,
) -> Result<Vec<C64>> {
    let mut out = convolve(stream, &h.taps);
    add_noise(&mut out, noise.variance, rng)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::gen_rician_cir;
    use crate::waveform::{random_qpsk, zadoff_chu, Ofdm};
    use proptest::prelude::*;

    fn probe(seed: u64) -> Vec<C64> {
        let ofdm = Ofdm::new(64, 8).unwrap();
        let mut rng = SeededRng::new(seed);
        (0..10)
            .flat_map(|_| ofdm.modulate(&random_qpsk(&mut rng, 64)).unwrap().time_samples)
            .collect()
    }

    #[test]
    fn zero_input_zero_output() {
        let out = hpa_distort(&[C64::new(0.0, 0.0)], &HpaModel::default());
        assert_eq!(out[0], C64::new(0.0, 0.0));
    }

    #[test]
    fn unit_envelope_point() {
        let m = HpaModel::default();
        let out = hpa_distort(&[C64::new(1.0, 0.0)], &m)[0];
        // 1.96 / 1.99 and 2.53 / 3.82
        assert!((out.norm() - 0.984_924_623_115_578).abs() < 1e-12);
        assert!((out.arg() - 0.662_303_664_921_466).abs() < 1e-12);
    }

    #[test]
    fn small_signal_is_linear() {
        let m = HpaModel::default();
        let x = C64::from_polar(1e-6, 0.7);
        let out = hpa_distort(&[x], &m)[0];
        assert!(((out - x * 1.96).norm() / (x * 1.96).norm()) < 1e-5);
    }

    #[test]
    fn phase_shift_is_exactly_am_pm() {
        let m = HpaModel::default().with_drive(1.7);
        let xs = probe(3);
        let out = hpa_distort(&xs, &m);
        for (x, y) in xs.iter().zip(&out) {
            let expected = m.phase(1.7 * x.norm());
            let diff = (y * x.conj()).arg();
            assert!((diff - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn saturation_point() {
        let m = HpaModel::default();
        let (r, a) = m.saturation();
        assert!((r - 1.005_037_815_259_212).abs() < 1e-12);
        assert!((a - 0.984_937_058_954_028).abs() < 1e-12);
        // grid search oracle
        let (gr, ga) = (1..=40_000)
            .map(|i| i as f64 * 1e-4)
            .map(|r| (r, m.amplitude(r)))
            .fold((0.0, 0.0), |acc, p| if p.1 > acc.1 { p } else { acc });
        assert!((gr - r).abs() < 2e-4);
        assert!((ga - a).abs() < 1e-8);
    }

    #[test]
    fn invalid_model_rejected() {
        assert!(HpaModel::new(1.96, 0.99, 2.53, -1.0, 1.0).is_err());
        assert!(HpaModel::new(1.96, 0.99, 2.53, 2.82, 0.0).is_err());
    }

    #[test]
    fn evm_edge_cases() {
        let r = vec![C64::new(1.0, 1.0), C64::new(-0.5, 0.2)];
        assert_eq!(evm(&r, &r).unwrap(), 0.0);
        let zero = vec![C64::new(0.0, 0.0); 2];
        assert!((evm(&zero, &r).unwrap() - 100.0).abs() < 1e-12);
        assert!(matches!(evm(&r, &zero), Err(Error::ZeroReferenceEnergy)));
    }

    #[test]
    fn evm_monotone_in_drive() {
        let p = probe(5);
        let m = HpaModel::default();
        let grid: Vec<f64> = (0..=40).map(|i| 0.1 * 10f64.powf(i as f64 / 20.0)).collect();
        let evms: Vec<f64> = grid.iter().map(|&g| evm_at_drive(&m, g, &p).unwrap()).collect();
        assert!(evms.windows(2).all(|w| w[0] <= w[1] + 1e-12), "{evms:?}");
    }

    #[test]
    fn calibration_hits_targets() {
        let p = probe(7);
        let m = HpaModel::default();
        for target in [0.1, 45.0, 55.0, 65.0] {
            let g = calibrate_drive(&m, target, &p).unwrap();
            let achieved = evm_at_drive(&m, g, &p).unwrap();
            assert!((achieved - target).abs() <= 0.25, "target {target} got {achieved}");
        }
        let g_small = calibrate_drive(&m, 0.1, &p).unwrap();
        assert!(g_small < 0.1);
    }

    #[test]
    fn calibration_rejects_unreachable() {
        let p = probe(7);
        let m = HpaModel::default();
        assert!(calibrate_drive(&m, 100.0, &p).is_err());
        let err = calibrate_drive(&m, 1e-9, &p).unwrap_err();
        assert!(matches!(err, Error::CalibrationFailure { .. }));
    }

    #[test]
    fn transmit_has_unit_small_signal_gain() {
        let m = HpaModel::default().with_drive(1e-4);
        let p = probe(1);
        let out = m.transmit(&p);
        assert!(evm(&out, &p).unwrap() < 1e-4);
    }

    #[test]
    fn identity_and_impulse_channels() {
        let mut rng = SeededRng::new(2);
        let stream = probe(2);
        let mut taps = vec![C64::new(0.0, 0.0); 12];
        taps[0] = C64::new(1.0, 0.0);
        let out = transmit_through_channel(&stream, &Cir::new(taps).unwrap(), &LinkNoise::noiseless(), &mut rng).unwrap();
        assert_eq!(out.len(), stream.len() + 11);
        assert_eq!(&out[..stream.len()], &stream[..]);
        assert!(out[stream.len()..].iter().all(|v| v.norm() == 0.0));

        let h = gen_rician_cir(&mut rng, 12, 2.0, 0.2).unwrap();
        let out = transmit_through_channel(&[C64::new(1.0, 0.0)], &h, &LinkNoise::noiseless(), &mut rng).unwrap();
        assert_eq!(out, h.taps);
    }

    #[test]
    fn convolution_matches_direct_sum() {
        let mut rng = SeededRng::new(31);
        let x = complex_gaussian(&mut rng, 100, 1.0).unwrap();
        let h = gen_rician_cir(&mut rng, 12, 2.0, 0.2).unwrap();
        let y = convolve(&x, &h.taps);
        for n in 0..y.len() {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..=n {
                if k < x.len() && n - k < h.len() {
                    acc += h.taps[n - k] * x[k];
                }
            }
            assert!((acc - y[n]).norm() < 1e-12);
        }
    }

    #[test]
    fn noise_variance_matches_snr() {
        let stream = probe(4);
        let noise = LinkNoise::for_signal(10.0, &stream);
        let power = stream.iter().map(|s| s.norm_sqr()).sum::<f64>() / stream.len() as f64;
        assert!((noise.variance - power / 10.0).abs() < 1e-12);
        assert_eq!(LinkNoise::for_signal(f64::INFINITY, &stream).variance, 0.0);

        let mut rng = SeededRng::new(4);
        let zeros = vec![C64::new(0.0, 0.0); 50_000];
        let h = Cir::new(vec![C64::new(1.0, 0.0)]).unwrap();
        let noise = LinkNoise { snr_db: 0.0, variance: 0.5 };
        let out = transmit_through_channel(&zeros, &h, &noise, &mut rng).unwrap();
        let var = out.iter().map(|s| s.norm_sqr()).sum::<f64>() / out.len() as f64;
        assert!((var - 0.5).abs() < 0.02);
    }

    #[test]
    fn time_varying_convolution_overlap_adds() {
        let mut rng = SeededRng::new(8);
        let a = complex_gaussian(&mut rng, 20, 1.0).unwrap();
        let b = complex_gaussian(&mut rng, 20, 1.0).unwrap();
        let ha = gen_rician_cir(&mut rng, 6, 2.0, 0.2).unwrap();
        let hb = gen_rician_cir(&mut rng, 6, 2.0, 0.2).unwrap();
        let y = time_varying_convolve(&[a.clone(), b.clone()], &[ha.clone(), hb.clone()]).unwrap();
        let ya = convolve(&a, &ha.taps);
        let yb = convolve(&b, &hb.taps);
        for n in 0..y.len() {
            let mut expect = C64::new(0.0, 0.0);
            if n < ya.len() {
                expect += ya[n];
            }
            if n >= 20 && n - 20 < yb.len() {
                expect += yb[n - 20];
            }
            assert!((expect - y[n]).norm() < 1e-12);
        }
    }

    #[test]
    fn sufficient_cp_gives_circular_convolution() {
        let ofdm = Ofdm::new(64, 11).unwrap();
        let pilot = zadoff_chu(64, 1).unwrap();
        let mut rng = SeededRng::new(10);
        let h = gen_rician_cir(&mut rng, 12, 2.0, 0.2).unwrap();
        // a random block before the pilot supplies the inter-block tail
        let mut stream = ofdm.modulate(&random_qpsk(&mut rng, 64)).unwrap().time_samples;
        stream.extend(ofdm.modulate(&pilot.symbols).unwrap().time_samples);
        let rx = transmit_through_channel(&stream, &h, &LinkNoise::noiseless(), &mut rng).unwrap();
        let y = ofdm.demodulate(&rx[75..]).unwrap();
        let resp = h.frequency_response(64).unwrap();
        for k in 0..64 {
            assert!((y[k] - pilot.symbols[k] * resp[k]).norm() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn channel_is_linear(seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let mut rng = SeededRng::new(seed);
            let x1 = complex_gaussian(&mut rng, 40, 1.0).unwrap();
            let x2 = complex_gaussian(&mut rng, 40, 1.0).unwrap();
            let h = gen_rician_cir(&mut rng, 12, 2.0, 0.2).unwrap();
            let mix: Vec<C64> = x1.iter().zip(&x2).map(|(p, q)| p * a + q * b).collect();
            let quiet = LinkNoise::noiseless();
            let y = transmit_through_channel(&mix, &h, &quiet, &mut rng).unwrap();
            let y1 = transmit_through_channel(&x1, &h, &quiet, &mut rng).unwrap();
            let y2 = transmit_through_channel(&x2, &h, &quiet, &mut rng).unwrap();
            for n in 0..y.len() {
                prop_assert!((y[n] - (y1[n] * a + y2[n] * b)).norm() < 1e-12);
            }
        }
    }
}
