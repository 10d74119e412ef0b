//! Gray-mapped square QAM with unit average power.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// A square `Q_M`-QAM constellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Qam {
    bits: u32,
}

impl Qam {
    /// `order` must be an even power of two (4, 16, 64, ...).
    pub fn new(order: u32) -> Result<Self> {
        if order < 4 || !order.is_power_of_two() || order.trailing_zeros() % 2 != 0 {
            return Err(Error::InvalidParameter(format!("{order}-QAM is not a square constellation")));
        }
        Ok(Self { bits: order.trailing_zeros() })
    }

    pub fn order(&self) -> u32 {
        1 << self.bits
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.bits
    }

    fn levels(&self) -> u32 {
        1 << (self.bits / 2)
    }

    /// Amplitude scale giving unit average power.
    fn scale(&self) -> f64 {
        let q = self.order() as f64;
        (3.0 / (2.0 * (q - 1.0))).sqrt()
    }

    fn axis_value(&self, gray: u32) -> f64 {
        let index = gray_decode(gray);
        (2.0 * index as f64 - (self.levels() - 1) as f64) * self.scale()
    }

    fn axis_decide(&self, v: f64) -> u32 {
        let l = self.levels();
        let idx = ((v / self.scale() + (l - 1) as f64) / 2.0).round();
        let idx = idx.clamp(0.0, (l - 1) as f64) as u32;
        idx ^ (idx >> 1)
    }

    /// Maps the low `bits_per_symbol` bits of `word` to a symbol.
    pub fn modulate(&self, word: u32) -> Complex64 {
        let half = self.bits / 2;
        let mask = (1 << half) - 1;
        Complex64::new(self.axis_value((word >> half) & mask), self.axis_value(word & mask))
    }

    /// Hard nearest-point decision, returning the bit word.
    pub fn demodulate(&self, z: Complex64) -> u32 {
        let half = self.bits / 2;
        (self.axis_decide(z.re) << half) | self.axis_decide(z.im)
    }

    /// Every constellation point, indexed by bit word.
    pub fn points(&self) -> Vec<Complex64> {
        (0..self.order()).map(|w| self.modulate(w)).collect()
    }
}

fn gray_decode(mut g: u32) -> u32 {
    let mut b = 0;
    while g != 0 {
        b ^= g;
        g >>= 1;
    }
    b
}

/// Modulates a symbol sequence from bit words.
pub fn qam_modulate(words: &[u32], qam: Qam) -> Vec<Complex64> {
    words.iter().map(|&w| qam.modulate(w)).collect()
}

/// Hard-decision demodulation of a symbol sequence.
pub fn qam_demodulate(symbols: &[Complex64], qam: Qam) -> Vec<u32> {
    symbols.iter().map(|&z| qam.demodulate(z)).collect()
}
