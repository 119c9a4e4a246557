//! Channel estimation chain: LS pre-estimation, link separation through the
//! inverse reflection matrix, and the ELM refinement network.

mod elm;
mod model_io;

pub use elm::{
    Activation, ElmConfig, ElmNetwork, LinkHead, OutputScaling, Standardization, TrainingSet,
};
pub use model_io::{read_model, write_model, MODEL_MAGIC, MODEL_VERSION};

use faer::Mat;

use crate::channel::RisReflectionMatrix;
use crate::error::{Error, Result};
use crate::numerics::{ComplexMatrix, C64};

const MIN_PILOT_MAGNITUDE: f64 = 1e-12;

/// Per-slot composite CFRs, `N x (M+1)`.
#[derive(Debug, Clone)]
pub struct LsEstimate {
    pub composite_cfr: ComplexMatrix,
}

/// `H_LS(m, n) = Y_p(m, n) / C(m)`; the same pilot is sent in every slot.
pub fn ls_estimate(rx_pilots_freq: &ComplexMatrix, pilot_freq: &[C64]) -> Result<LsEstimate> {
    let n = pilot_freq.len();
    if rx_pilots_freq.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "received pilots have {} rows, pilot has {n} bins",
            rx_pilots_freq.nrows()
        )));
    }
    if let Some((bin, c)) = pilot_freq
        .iter()
        .enumerate()
        .find(|(_, c)| c.norm() < MIN_PILOT_MAGNITUDE)
    {
        return Err(Error::IllConditionedPilot {
            bin,
            magnitude: c.norm(),
        });
    }
    let composite_cfr = Mat::from_fn(n, rx_pilots_freq.ncols(), |m, s| {
        rx_pilots_freq[(m, s)] / pilot_freq[m]
    });
    Ok(LsEstimate { composite_cfr })
}

/// Separated per-link CFRs; column 0 is the direct link, columns `1..=M`
/// the cascaded reflecting links.
#[derive(Debug, Clone)]
pub struct SeparatedCfrs {
    pub links: ComplexMatrix,
}

impl SeparatedCfrs {
    pub fn direct(&self) -> Vec<C64> {
        self.link(0)
    }

    pub fn reflecting(&self) -> ComplexMatrix {
        self.links
            .subcols(1, self.links.ncols() - 1)
            .to_owned()
    }

    pub fn link(&self, j: usize) -> Vec<C64> {
        self.links.col(j).iter().copied().collect()
    }

    pub fn n_links(&self) -> usize {
        self.links.ncols()
    }
}

/// `[h_TR, H_TRR] = H_LS theta^{-1}`.
pub fn separate_links(ls: &LsEstimate, theta: &RisReflectionMatrix) -> Result<SeparatedCfrs> {
    let inverse = theta.inverse()?;
    separate_links_with(ls, &inverse)
}

/// [`separate_links`] with a precomputed `theta^{-1}`.
pub fn separate_links_with(ls: &LsEstimate, theta_inverse: &ComplexMatrix) -> Result<SeparatedCfrs> {
    if ls.composite_cfr.ncols() != theta_inverse.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} pilot slots but reflection matrix of order {}",
            ls.composite_cfr.ncols(),
            theta_inverse.nrows()
        )));
    }
    Ok(SeparatedCfrs {
        links: &ls.composite_cfr * theta_inverse,
    })
}

pub fn normalize_sample(v: &[C64]) -> Result<Vec<C64>> {
    let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::DegenerateSample);
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// `||estimate - truth||^2 / ||truth||^2` over every entry.
pub fn nmse(estimate: &ComplexMatrix, truth: &ComplexMatrix) -> Result<f64> {
    if (estimate.nrows(), estimate.ncols()) != (truth.nrows(), truth.ncols()) {
        return Err(Error::DimensionMismatch(format!(
            "estimate is {}x{}, truth is {}x{}",
            estimate.nrows(),
            estimate.ncols(),
            truth.nrows(),
            truth.ncols()
        )));
    }
    let mut err = 0.0;
    let mut energy = 0.0;
    for j in 0..truth.ncols() {
        for i in 0..truth.nrows() {
            err += (estimate[(i, j)] - truth[(i, j)]).norm_sqr();
            energy += truth[(i, j)].norm_sqr();
        }
    }
    if energy == 0.0 {
        return Err(Error::UndefinedMetric);
    }
    Ok(err / energy)
}

/// Real parts followed by imaginary parts.
pub fn stack_real(v: &[C64]) -> Vec<f64> {
    v.iter().map(|x| x.re).chain(v.iter().map(|x| x.im)).collect()
}

pub fn unstack_real(v: &[f64]) -> Vec<C64> {
    let n = v.len() / 2;
    (0..n).map(|k| C64::new(v[k], v[n + k])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::build_theta;
    use crate::numerics::{complex_gaussian, frobenius_norm, SeededRng};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_cfrs(seed: u64, n: usize, links: usize) -> ComplexMatrix {
        let mut rng = SeededRng::new(seed);
        let v = complex_gaussian(&mut rng, n * links, 1.0).unwrap();
        Mat::from_fn(n, links, |i, j| v[j * n + i])
    }

    #[test]
    fn ls_self_division_and_zero() {
        let pilot: Vec<C64> = (0..8).map(|k| C64::from_polar(1.0, k as f64)).collect();
        let rx = Mat::from_fn(8, 3, |i, _| pilot[i]);
        let ls = ls_estimate(&rx, &pilot).unwrap();
        for j in 0..3 {
            for i in 0..8 {
                assert!((ls.composite_cfr[(i, j)] - c(1.0, 0.0)).norm() < 1e-15);
            }
        }
        let zero = ComplexMatrix::zeros(8, 3);
        let ls = ls_estimate(&zero, &pilot).unwrap();
        assert_eq!(frobenius_norm(&ls.composite_cfr), 0.0);
    }

    #[test]
    fn ls_rejects_vanishing_pilot_bin() {
        let mut pilot = vec![c(1.0, 0.0); 4];
        pilot[2] = c(1e-14, 0.0);
        let rx = ComplexMatrix::zeros(4, 2);
        assert!(matches!(
            ls_estimate(&rx, &pilot),
            Err(Error::IllConditionedPilot { bin: 2, .. })
        ));
    }

    #[test]
    fn separation_two_slot_closed_form() {
        // H_LS = [d + r, d - r] for theta = [[1, 1], [1, -1]]
        let d = c(0.4, -0.3);
        let r = c(-0.1, 0.9);
        let ls = LsEstimate {
            composite_cfr: Mat::from_fn(1, 2, |_, j| if j == 0 { d + r } else { d - r }),
        };
        let sep = separate_links(&ls, &build_theta(1).unwrap()).unwrap();
        assert!((sep.direct()[0] - d).norm() < 1e-15);
        assert!((sep.reflecting()[(0, 0)] - r).norm() < 1e-15);
    }

    #[test]
    fn separation_rejects_singular_theta() {
        let theta = RisReflectionMatrix::from_phase_vectors(vec![vec![c(1.0, 0.0)]; 2]).unwrap();
        let ls = LsEstimate {
            composite_cfr: ComplexMatrix::zeros(4, 2),
        };
        assert!(matches!(
            separate_links(&ls, &theta),
            Err(Error::SeparationFailure(_))
        ));
    }

    #[test]
    fn normalize_cases() {
        let out = normalize_sample(&[c(3.0, 0.0), c(0.0, 4.0)]).unwrap();
        assert!((out[0] - c(0.6, 0.0)).norm() < 1e-15);
        assert!((out[1] - c(0.0, 0.8)).norm() < 1e-15);
        let unit = vec![c(0.0, 1.0)];
        assert_eq!(normalize_sample(&unit).unwrap(), unit);
        assert!(matches!(
            normalize_sample(&[c(0.0, 0.0)]),
            Err(Error::DegenerateSample)
        ));
        let v = complex_gaussian(&mut SeededRng::new(1), 64, 3.0).unwrap();
        let n: f64 = normalize_sample(&v).unwrap().iter().map(|x| x.norm_sqr()).sum();
        assert!((n.sqrt() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nmse_cases() {
        let truth = random_cfrs(3, 16, 4);
        assert_eq!(nmse(&truth, &truth).unwrap(), 0.0);
        let zero = ComplexMatrix::zeros(16, 4);
        assert!((nmse(&zero, &truth).unwrap() - 1.0).abs() < 1e-15);
        let twice = Mat::from_fn(16, 4, |i, j| truth[(i, j)] * 2.0);
        assert!((nmse(&twice, &truth).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(nmse(&truth, &zero), Err(Error::UndefinedMetric)));
    }

    #[test]
    fn real_stacking_layout() {
        let v = vec![c(1.0, 2.0), c(3.0, 4.0)];
        assert_eq!(stack_real(&v), vec![1.0, 3.0, 2.0, 4.0]);
        assert_eq!(unstack_real(&stack_real(&v)), v);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn separation_round_trip(seed in any::<u64>(), m in 1usize..=16) {
            let theta = build_theta(m).unwrap();
            let h = random_cfrs(seed, 32, m + 1);
            let ls = LsEstimate { composite_cfr: &h * &theta.theta };
            let sep = separate_links(&ls, &theta).unwrap();
            let diff = frobenius_norm(&(&sep.links - &h)) / frobenius_norm(&h);
            prop_assert!(diff < 1e-9);
        }
    }
}
