//! Pilot generation and OFDM block assembly.
//!
//! Blocks are built with a cyclic prefix that may be shorter than the channel,
//! and slots carry a pilot block followed by a QPSK data block.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{Dft, SeededRng, C64};

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Constant-modulus frequency-domain pilot.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotTone {
    pub symbols: Vec<C64>,
    pub root: usize,
}

impl PilotTone {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// Zadoff-Chu sequence of length `n`: `exp(-j pi u k^2 / n)` for even `n`,
/// `exp(-j pi u k (k + 1) / n)` for odd `n`.
pub fn zadoff_chu(n: usize, root: usize) -> Result<PilotTone> {
    if n == 0 || root == 0 || root >= n || gcd(root, n) != 1 {
        return Err(Error::InvalidRoot { n, root });
    }
    let symbols = (0..n)
        .map(|k| {
            // reduce the exponent mod 2n before converting to a float
            let k = k as u128;
            let q = if n % 2 == 0 { k * k } else { k * (k + 1) };
            let e = (root as u128 * q) % (2 * n as u128);
            C64::from_polar(1.0, -PI * e as f64 / n as f64)
        })
        .collect();
    Ok(PilotTone { symbols, root })
}

/// Unit-energy QPSK symbols `(+-1 +- j) / sqrt(2)`.
pub fn random_qpsk(rng: &mut SeededRng, n: usize) -> Vec<C64> {
    (0..n)
        .map(|_| {
            let bits: u8 = rng.random_range(0..4);
            let re = if bits & 1 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
            let im = if bits & 2 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
            C64::new(re, im)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfdmBlock {
    pub freq_symbols: Vec<C64>,
    /// `[cyclic prefix; IFFT output]`, length `N + cp_len`.
    pub time_samples: Vec<C64>,
    pub cp_len: usize,
}

/// OFDM modulator/demodulator for a fixed `(N, L_CP)` pair.
#[derive(Debug, Clone)]
pub struct Ofdm {
    dft: Dft,
    cp_len: usize,
}

impl Ofdm {
    pub fn new(n: usize, cp_len: usize) -> Result<Self> {
        let dft = Dft::new(n)?;
        if cp_len >= n {
            return Err(Error::InvalidCp { cp_len, n });
        }
        Ok(Self { dft, cp_len })
    }

    pub fn n(&self) -> usize {
        self.dft.len()
    }

    pub fn cp_len(&self) -> usize {
        self.cp_len
    }

    pub fn block_len(&self) -> usize {
        self.n() + self.cp_len
    }

    pub fn dft(&self) -> &Dft {
        &self.dft
    }

    pub fn modulate(&self, freq_symbols: &[C64]) -> Result<OfdmBlock> {
        let n = self.n();
        if freq_symbols.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "expected {n} frequency symbols, got {}",
                freq_symbols.len()
            )));
        }
        let body = self.dft.inverse(freq_symbols);
        let mut time_samples = Vec::with_capacity(n + self.cp_len);
        time_samples.extend_from_slice(&body[n - self.cp_len..]);
        time_samples.extend_from_slice(&body);
        Ok(OfdmBlock {
            freq_symbols: freq_symbols.to_vec(),
            time_samples,
            cp_len: self.cp_len,
        })
    }

    /// Drops the cyclic prefix and applies `F_N` to the next `N` samples.
    pub fn demodulate(&self, rx_samples: &[C64]) -> Result<Vec<C64>> {
        let needed = self.block_len();
        if rx_samples.len() < needed {
            return Err(Error::InvalidLength {
                needed,
                got: rx_samples.len(),
            });
        }
        Ok(self.dft.forward(&rx_samples[self.cp_len..needed]))
    }
}

pub fn ofdm_modulate(freq_symbols: &[C64], cp_len: usize) -> Result<OfdmBlock> {
    Ofdm::new(freq_symbols.len(), cp_len)?.modulate(freq_symbols)
}

pub fn remove_cp_and_demodulate(rx_samples: &[C64], n: usize, cp_len: usize) -> Result<Vec<C64>> {
    Ofdm::new(n, cp_len)?.demodulate(rx_samples)
}

/// One RIS training slot: pilot block first, data block second.
#[derive(Debug, Clone)]
pub struct SlotFrame {
    pub pilot_block: OfdmBlock,
    pub data_block: OfdmBlock,
    /// 1-based slot number, `1..=M+1`.
    pub slot_index: usize,
}

impl SlotFrame {
    pub fn new(
        ofdm: &Ofdm,
        pilot: &PilotTone,
        rng: &mut SeededRng,
        slot_index: usize,
    ) -> Result<Self> {
        let pilot_block = ofdm.modulate(&pilot.symbols)?;
        let data_block = ofdm.modulate(&random_qpsk(rng, ofdm.n()))?;
        Ok(Self {
            pilot_block,
            data_block,
            slot_index,
        })
    }

    /// Back-to-back time samples of both blocks.
    pub fn samples(&self) -> Vec<C64> {
        let mut out = self.pilot_block.time_samples.clone();
        out.extend_from_slice(&self.data_block.time_samples);
        out
    }

    pub fn len(&self) -> usize {
        self.pilot_block.time_samples.len() + self.data_block.time_samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
