//! Rician multipath links, the RIS cascade and the pilot-phase matrix.

use std::f64::consts::PI;

use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{complex_gaussian, singular_values, ComplexMatrix, SeededRng, C64};

const PHASE_TOLERANCE: f64 = 1e-9;

/// Channel impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct Cir {
    pub taps: Vec<C64>,
}

impl Cir {
    pub fn new(taps: Vec<C64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::InvalidDimension("CIR needs at least one tap".into()));
        }
        if taps.iter().any(|t| !(t.re.is_finite() && t.im.is_finite())) {
            return Err(Error::InvalidInput("CIR taps must be finite".into()));
        }
        Ok(Self { taps })
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            taps: vec![C64::new(0.0, 0.0); len.max(1)],
        }
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_sqr()).sum()
    }

    /// Per-subcarrier gain `H[k] = sum_l h_l exp(-j 2 pi k l / n)`, the
    /// quantity an LS pilot division recovers. Equals `sqrt(n) F_n h`.
    pub fn frequency_response(&self, n: usize) -> Result<Vec<C64>> {
        if self.len() > n {
            return Err(Error::InvalidDimension(format!(
                "CIR length {} exceeds DFT size {n}",
                self.len()
            )));
        }
        Ok((0..n)
            .map(|k| {
                self.taps
                    .iter()
                    .enumerate()
                    .map(|(l, &h)| {
                        let e = (k * l) % n;
                        h * C64::from_polar(1.0, -2.0 * PI * e as f64 / n as f64)
                    })
                    .sum()
            })
            .collect())
    }
}

/// Rician fading profile: K-factor on the first tap, exponential power-delay
/// profile `p_i ~ exp(-decay * i)` normalized to unit total power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RicianProfile {
    pub k_factor: f64,
    pub pdp_decay: f64,
}

impl Default for RicianProfile {
    fn default() -> Self {
        Self {
            k_factor: 2.0,
            pdp_decay: 0.2,
        }
    }
}

/// Draws one Rician CIR. The LOS component of tap 0 has deterministic
/// amplitude and a uniformly random phase.
pub fn gen_rician_cir(rng: &mut SeededRng, l: usize, k_factor: f64, pdp_decay: f64) -> Result<Cir> {
    if l == 0 {
        return Err(Error::InvalidDimension("CIR length must be >= 1".into()));
    }
    if !(k_factor >= 0.0) || !(pdp_decay >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "k_factor {k_factor} and pdp_decay {pdp_decay} must be >= 0"
        )));
    }
    let raw: Vec<f64> = (0..l).map(|i| (-pdp_decay * i as f64).exp()).collect();
    let total: f64 = raw.iter().sum();
    let (los_share, nlos_share) = if k_factor.is_infinite() {
        (1.0, 0.0)
    } else {
        (k_factor / (k_factor + 1.0), 1.0 / (k_factor + 1.0))
    };
    let los_phase = rng.random::<f64>() * 2.0 * PI;
    let scatter = complex_gaussian(rng, l, 1.0)?;
    let taps = raw
        .iter()
        .zip(scatter)
        .enumerate()
        .map(|(i, (&p, g))| {
            let amp = (p / total).sqrt();
            if i == 0 {
                amp * (los_share.sqrt() * C64::from_polar(1.0, los_phase) + nlos_share.sqrt() * g)
            } else {
                amp * g
            }
        })
        .collect();
    Cir::new(taps)
}

/// Hadamard product of the transmitter-RIS and RIS-receiver CIRs.
pub fn cascade(tx_ris: &Cir, ris_rx: &Cir) -> Result<Cir> {
    if tx_ris.len() != ris_rx.len() {
        return Err(Error::DimensionMismatch(format!(
            "cascade of CIRs with lengths {} and {}",
            tx_ris.len(),
            ris_rx.len()
        )));
    }
    Ok(Cir {
        taps: tx_ris.taps.iter().zip(&ris_rx.taps).map(|(a, b)| a * b).collect(),
    })
}

/// All links of one coherence interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub direct: Cir,
    pub tx_ris: Vec<Cir>,
    pub ris_rx: Vec<Cir>,
}

impl ChannelRealization {
    pub fn new(direct: Cir, tx_ris: Vec<Cir>, ris_rx: Vec<Cir>) -> Result<Self> {
        let l = direct.len();
        if tx_ris.len() != ris_rx.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} transmitter-RIS links but {} RIS-receiver links",
                tx_ris.len(),
                ris_rx.len()
            )));
        }
        if tx_ris.iter().chain(&ris_rx).any(|c| c.len() != l) {
            return Err(Error::DimensionMismatch(
                "all links must share the direct link's length".into(),
            ));
        }
        Ok(Self {
            direct,
            tx_ris,
            ris_rx,
        })
    }

    pub fn generate(
        rng: &mut SeededRng,
        n_paths: usize,
        n_subsurfaces: usize,
        profile: RicianProfile,
    ) -> Result<Self> {
        let draw = |rng: &mut SeededRng| {
            gen_rician_cir(rng, n_paths, profile.k_factor, profile.pdp_decay)
        };
        let direct = draw(rng)?;
        let mut tx_ris = Vec::with_capacity(n_subsurfaces);
        let mut ris_rx = Vec::with_capacity(n_subsurfaces);
        for _ in 0..n_subsurfaces {
            tx_ris.push(draw(rng)?);
            ris_rx.push(draw(rng)?);
        }
        Self::new(direct, tx_ris, ris_rx)
    }

    pub fn n_paths(&self) -> usize {
        self.direct.len()
    }

    pub fn n_subsurfaces(&self) -> usize {
        self.tx_ris.len()
    }

    /// `[h_TR, h_TRR,1, ..., h_TRR,M]`.
    pub fn link_cirs(&self) -> Result<Vec<Cir>> {
        let mut links = Vec::with_capacity(self.n_subsurfaces() + 1);
        links.push(self.direct.clone());
        for (a, b) in self.tx_ris.iter().zip(&self.ris_rx) {
            links.push(cascade(a, b)?);
        }
        Ok(links)
    }

    /// True per-link CFRs, `N x (M+1)`, column 0 the direct link.
    pub fn link_cfrs(&self, n: usize) -> Result<ComplexMatrix> {
        let links = self.link_cirs()?;
        let mut out = Mat::zeros(n, links.len());
        for (j, cir) in links.iter().enumerate() {
            for (k, v) in cir.frequency_response(n)?.into_iter().enumerate() {
                out[(k, j)] = v;
            }
        }
        Ok(out)
    }
}

/// `h_TR + sum_m phi_m (h_TR,m . h_RR,m)`.
pub fn composite_cir(real: &ChannelRealization, phases: &[C64]) -> Result<Cir> {
    if phases.len() != real.n_subsurfaces() {
        return Err(Error::DimensionMismatch(format!(
            "{} phases for {} sub-surfaces",
            phases.len(),
            real.n_subsurfaces()
        )));
    }
    if let Some((index, p)) = phases
        .iter()
        .enumerate()
        .find(|(_, p)| (p.norm() - 1.0).abs() > PHASE_TOLERANCE)
    {
        return Err(Error::InvalidPhase {
            index,
            magnitude: p.norm(),
        });
    }
    let mut taps = real.direct.taps.clone();
    for ((a, b), &phi) in real.tx_ris.iter().zip(&real.ris_rx).zip(phases) {
        for (t, (x, y)) in taps.iter_mut().zip(a.taps.iter().zip(&b.taps)) {
            *t += phi * x * y;
        }
    }
    Ok(Cir { taps })
}

/// Pilot-phase matrix: column `i` is `[1; phi^(i)]`.
#[derive(Debug, Clone)]
pub struct RisReflectionMatrix {
    pub theta: ComplexMatrix,
    pub phase_vectors: Vec<Vec<C64>>,
}

impl RisReflectionMatrix {
    /// Builds `theta` from `M + 1` phase vectors of length `M`.
    pub fn from_phase_vectors(phase_vectors: Vec<Vec<C64>>) -> Result<Self> {
        let slots = phase_vectors.len();
        if slots < 2 || phase_vectors.iter().any(|p| p.len() + 1 != slots) {
            return Err(Error::InvalidDimension(
                "need M + 1 phase vectors of length M, M >= 1".into(),
            ));
        }
        for p in &phase_vectors {
            if let Some((index, v)) = p
                .iter()
                .enumerate()
                .find(|(_, v)| (v.norm() - 1.0).abs() > PHASE_TOLERANCE)
            {
                return Err(Error::InvalidPhase {
                    index,
                    magnitude: v.norm(),
                });
            }
        }
        let theta = Mat::from_fn(slots, slots, |r, c| {
            if r == 0 {
                C64::new(1.0, 0.0)
            } else {
                phase_vectors[c][r - 1]
            }
        });
        Ok(Self {
            theta,
            phase_vectors,
        })
    }

    pub fn n_subsurfaces(&self) -> usize {
        self.phase_vectors.len() - 1
    }

    pub fn n_slots(&self) -> usize {
        self.phase_vectors.len()
    }

    /// `theta^{-1}`, refusing numerically singular configurations.
    pub fn inverse(&self) -> Result<ComplexMatrix> {
        let s = singular_values(&self.theta)?;
        let smax = s.first().copied().unwrap_or(0.0);
        let smin = s.last().copied().unwrap_or(0.0);
        if smax == 0.0 || smin <= 1e-12 * smax {
            return Err(Error::SeparationFailure(format!(
                "reflection matrix is singular (sigma_min / sigma_max = {:e})",
                if smax == 0.0 { 0.0 } else { smin / smax }
            )));
        }
        let lu = self.theta.partial_piv_lu();
        Ok(lu.inverse())
    }

    pub fn condition_number(&self) -> Result<f64> {
        let s = singular_values(&self.theta)?;
        Ok(s[0] / s[s.len() - 1])
    }
}

/// DFT phase patterns: `phi_k^(i) = exp(-j 2 pi k (i - 1) / (M + 1))`.
pub fn build_theta(m: usize) -> Result<RisReflectionMatrix> {
    if m == 0 {
        return Err(Error::InvalidDimension("need at least one sub-surface".into()));
    }
    let slots = m + 1;
    let phase_vectors = (0..slots)
        .map(|i| {
            (1..=m)
                .map(|k| {
                    let e = (k * i) % slots;
                    C64::from_polar(1.0, -2.0 * PI * e as f64 / slots as f64)
                })
                .collect()
        })
        .collect();
    RisReflectionMatrix::from_phase_vectors(phase_vectors)
}
