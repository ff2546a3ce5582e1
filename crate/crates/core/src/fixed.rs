//! Signed fixed-point words and the write-back rounding used by every
//! datapath in the crate.
//!
//! Activations and weights are `word_bits`-wide raw integers with
//! `frac_bits` fractional bits. A product therefore carries `2 * frac_bits`
//! fractional bits; sums of products live in an `accumulator_bits`-wide
//! register and are rounded half away from zero and saturated back to a word
//! on write-back.

use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FxFormat {
    pub word_bits: u32,
    pub frac_bits: u32,
    pub accumulator_bits: u32,
}

impl Default for FxFormat {
    fn default() -> Self {
        Self {
            word_bits: 16,
            frac_bits: 8,
            accumulator_bits: 48,
        }
    }
}

/// Result of quantizing real values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Quantized {
    pub raw: Vec<i64>,
    pub saturated: usize,
}

impl FxFormat {
    pub fn new(word_bits: u32, frac_bits: u32) -> Self {
        Self {
            word_bits,
            frac_bits,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (2..=32).contains(&self.word_bits)
            && self.frac_bits < self.word_bits
            && (32..=63).contains(&self.accumulator_bits)
            && self.accumulator_bits >= 2 * self.word_bits - 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidFormat {
                word_bits: self.word_bits,
                frac_bits: self.frac_bits,
                accumulator_bits: self.accumulator_bits,
            })
        }
    }

    pub fn word_max(&self) -> i64 {
        (1i64 << (self.word_bits - 1)) - 1
    }

    pub fn word_min(&self) -> i64 {
        -(1i64 << (self.word_bits - 1))
    }

    pub fn fits_word(&self, raw: i64) -> bool {
        (self.word_min()..=self.word_max()).contains(&raw)
    }

    pub fn fits_accumulator(&self, acc: i64) -> bool {
        let limit = 1i64 << (self.accumulator_bits - 1);
        (-limit..limit).contains(&acc)
    }

    /// Whether `terms` products of two full-scale words can be summed without
    /// leaving the accumulator range, whatever their values.
    pub fn accumulation_fits(&self, terms: u64) -> bool {
        let product = 1u128 << (2 * (self.word_bits - 1));
        (terms as u128).saturating_mul(product) < (1u128 << (self.accumulator_bits - 1))
    }

    /// Bits an accumulator needs so that `terms` full-scale products never overflow.
    pub fn required_accumulator_bits(&self, terms: u64) -> u32 {
        let mut bits = 2 * self.word_bits - 1;
        while (terms as u128).saturating_mul(1u128 << (2 * (self.word_bits - 1))) >= (1u128 << (bits - 1)) {
            bits += 1;
        }
        bits
    }

    /// Quantize one real value, returning the raw word and whether it saturated.
    pub fn quantize_value(&self, value: f64) -> (i64, bool) {
        if value.is_nan() {
            return (0, true);
        }
        let scaled = libm::round(value * (1u64 << self.frac_bits) as f64);
        if scaled > self.word_max() as f64 {
            (self.word_max(), true)
        } else if scaled < self.word_min() as f64 {
            (self.word_min(), true)
        } else {
            (scaled as i64, false)
        }
    }

    /// Round half away from zero to `frac_bits`, then saturate to the word.
    pub fn quantize(&self, values: &[f64]) -> Quantized {
        let mut saturated = 0;
        let raw = values
            .iter()
            .map(|&v| {
                let (q, sat) = self.quantize_value(v);
                saturated += usize::from(sat);
                q
            })
            .collect();
        Quantized { raw, saturated }
    }

    pub fn dequantize(&self, raw: i64) -> f64 {
        raw as f64 / (1u64 << self.frac_bits) as f64
    }

    /// Convert a sum of products (2·frac fractional bits) back to a word
    /// (frac fractional bits). Returns the word and whether it saturated.
    pub fn write_back(&self, acc: i64) -> (i64, bool) {
        let shift = self.frac_bits;
        let rounded = if shift == 0 {
            acc
        } else {
            let half = 1i64 << (shift - 1);
            if acc >= 0 {
                (acc + half) >> shift
            } else {
                -((-acc + half) >> shift)
            }
        };
        if rounded > self.word_max() {
            (self.word_max(), true)
        } else if rounded < self.word_min() {
            (self.word_min(), true)
        } else {
            (rounded, false)
        }
    }
}

/// Arithmetic mode shared by the oracles and the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Arith {
    /// Exact signed integer arithmetic; overflow of `i64` is an error.
    Integer,
    /// Raw fixed-point words, accumulator range checks and rounded,
    /// saturating write-back.
    Fixed(FxFormat),
}

impl Arith {
    /// Check that an operand tensor is representable in this mode.
    pub fn check_operands(&self, data: &[i64]) -> Result<()> {
        if let Arith::Fixed(fx) = self {
            if let Some(&bad) = data.iter().find(|&&v| !fx.fits_word(v)) {
                return Err(Error::OperandOutOfRange {
                    value: bad,
                    bits: fx.word_bits,
                });
            }
        }
        Ok(())
    }

    /// Static guarantee that summing `terms` products cannot overflow.
    pub fn check_accumulation(&self, terms: u64) -> Result<()> {
        match self {
            Arith::Integer => Ok(()),
            Arith::Fixed(fx) => {
                fx.validate()?;
                if fx.accumulation_fits(terms) {
                    Ok(())
                } else {
                    Err(Error::AccumulatorOverflow {
                        bits: fx.accumulator_bits,
                    })
                }
            }
        }
    }

    /// Final write-back of an accumulated value. Returns the stored value and
    /// whether it saturated.
    pub fn finish(&self, acc: i64) -> Result<(i64, bool)> {
        match self {
            Arith::Integer => Ok((acc, false)),
            Arith::Fixed(fx) => {
                if !fx.fits_accumulator(acc) {
                    return Err(Error::AccumulatorOverflow {
                        bits: fx.accumulator_bits,
                    });
                }
                Ok(fx.write_back(acc))
            }
        }
    }
}

/// True when any sum of at most `terms` products `x·w` fits in `i64`, so
/// accumulation loops can skip per-step overflow checks.
pub(crate) fn sums_cannot_overflow(x: &[i64], w: &[i64], terms: u64) -> bool {
    let peak = |v: &[i64]| v.iter().map(|a| a.unsigned_abs()).max().unwrap_or(0) as u128;
    peak(x)
        .checked_mul(peak(w))
        .and_then(|p| p.checked_mul(u128::from(terms)))
        .is_some_and(|b| b <= i64::MAX as u128)
}

/// `acc + a·b`, overflow-checked unless the caller has proven the bound.
#[inline(always)]
pub(crate) fn mac<const CHECKED: bool>(acc: i64, a: i64, b: i64) -> Result<i64> {
    if CHECKED {
        add(acc, mul(a, b)?)
    } else {
        Ok(acc + a * b)
    }
}

#[inline(always)]
pub(crate) fn sum<const CHECKED: bool>(a: i64, b: i64) -> Result<i64> {
    if CHECKED {
        add(a, b)
    } else {
        Ok(a + b)
    }
}

#[inline]
pub(crate) fn mul(a: i64, b: i64) -> Result<i64> {
    a.checked_mul(b).ok_or(Error::AccumulatorOverflow { bits: 64 })
}

#[inline]
pub(crate) fn add(a: i64, b: i64) -> Result<i64> {
    a.checked_add(b).ok_or(Error::AccumulatorOverflow { bits: 64 })
}
