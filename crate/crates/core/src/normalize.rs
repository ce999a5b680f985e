//! Per-channel affine normalization into [-1, 1], fit on training data and
//! reused unchanged on validation data (which may exceed the range; values are
//! not clipped).

use crate::error::{Error, Result};
use crate::field::Field;

/// Stored per-channel (min, max) of the training data.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChannelNormalizer {
    pub ranges: Vec<(f64, f64)>,
}

impl ChannelNormalizer {
    /// Fit the training-set min/max per channel.
    pub fn fit(fields: &[Field]) -> Result<Self> {
        let first = fields
            .first()
            .ok_or(Error::NotEnoughSamples { needed: 1, got: 0 })?;
        let c = first.c;
        let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); c];
        for field in fields {
            if field.c != c {
                return Err(Error::DimensionMismatch {
                    expected: c,
                    got: field.c,
                });
            }
            for p in 0..field.pixels() {
                for (ch, &v) in field.pixel(p).iter().enumerate() {
                    let (lo, hi) = &mut ranges[ch];
                    *lo = lo.min(v);
                    *hi = hi.max(v);
                }
            }
        }
        for (ch, &(lo, hi)) in ranges.iter().enumerate() {
            if !(lo < hi) {
                return Err(Error::ConstantChannel { channel: ch });
            }
        }
        Ok(Self { ranges })
    }

    pub fn channels(&self) -> usize {
        self.ranges.len()
    }

    /// Map a value of channel `ch` into the training range's [-1, 1] image.
    #[inline]
    pub fn apply_value(&self, ch: usize, v: f64) -> f64 {
        let (lo, hi) = self.ranges[ch];
        2.0 * (v - lo) / (hi - lo) - 1.0
    }

    #[inline]
    pub fn invert_value(&self, ch: usize, v: f64) -> f64 {
        let (lo, hi) = self.ranges[ch];
        (v + 1.0) * (hi - lo) / 2.0 + lo
    }

    pub fn apply(&self, field: &Field) -> Result<Field> {
        self.map(field, |ch, v| self.apply_value(ch, v))
    }

    pub fn invert(&self, field: &Field) -> Result<Field> {
        self.map(field, |ch, v| self.invert_value(ch, v))
    }

    fn map(&self, field: &Field, f: impl Fn(usize, f64) -> f64) -> Result<Field> {
        if field.c != self.channels() {
            return Err(Error::DimensionMismatch {
                expected: self.channels(),
                got: field.c,
            });
        }
        let mut out = field.clone();
        for p in 0..field.pixels() {
            for ch in 0..field.c {
                let idx = p * field.c + ch;
                out.data[idx] = f(ch, field.data[idx]);
            }
        }
        Ok(out)
    }
}
