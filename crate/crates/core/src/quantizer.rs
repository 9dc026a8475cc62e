//! Fixed-point pipeline between real-valued model vectors and the integer
//! domain the aggregation schemes operate on.
//!
//! A local model is clipped to `[theta_min, theta_max]`, quantized onto
//! `L` bits, multiplied by the node's integer weight (at most `W` bits), and
//! summed across `n` nodes. The sum therefore needs `M = L + W + ceil(log2 n)`
//! bits, which both schemes use as their plaintext slot width.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default ceiling on `M`, so sums fit a native `u64` word.
pub const DEFAULT_MAX_SUM_BITS: u32 = 63;

/// Largest `L` for which `2^L` scaling stays exact in `f64`.
pub const MAX_INPUT_BITS: u32 = 52;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantError {
    #[error("invalid clip range [{lo}, {hi}]")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("invalid quantization config: {0}")]
    InvalidConfig(String),
    #[error("weight {weight} does not fit in {bits} bits")]
    WeightOverflow { weight: u64, bits: u32 },
    #[error("weight must be positive")]
    ZeroWeight,
    #[error("expected a {expected}-bit vector, got {actual} bits")]
    BitWidthMismatch { expected: u32, actual: u32 },
    #[error("sum of weights is zero")]
    ZeroWeightSum,
    #[error("value {value} does not fit in {bits} bits")]
    ValueOverflow { value: u64, bits: u32 },
}

/// Bit budget and clip range for one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantConfig {
    input_bits: u32,
    weight_bits: u32,
    participants: usize,
    theta_min: f64,
    theta_max: f64,
    max_sum_bits: u32,
}

impl QuantConfig {
    pub fn new(
        input_bits: u32,
        weight_bits: u32,
        participants: usize,
        theta_min: f64,
        theta_max: f64,
    ) -> Result<Self, QuantError> {
        Self::with_sum_limit(
            input_bits,
            weight_bits,
            participants,
            theta_min,
            theta_max,
            DEFAULT_MAX_SUM_BITS,
        )
    }

    pub fn with_sum_limit(
        input_bits: u32,
        weight_bits: u32,
        participants: usize,
        theta_min: f64,
        theta_max: f64,
        max_sum_bits: u32,
    ) -> Result<Self, QuantError> {
        if !(theta_min.is_finite() && theta_max.is_finite() && theta_min < theta_max) {
            return Err(QuantError::InvalidRange {
                lo: theta_min,
                hi: theta_max,
            });
        }
        if input_bits == 0 || input_bits > MAX_INPUT_BITS {
            return Err(QuantError::InvalidConfig(format!(
                "L must be in 1..={MAX_INPUT_BITS}, got {input_bits}"
            )));
        }
        if weight_bits == 0 {
            return Err(QuantError::InvalidConfig("W must be at least 1".into()));
        }
        if participants < 2 {
            return Err(QuantError::InvalidConfig(format!(
                "need at least 2 participants, got {participants}"
            )));
        }
        let cfg = Self {
            input_bits,
            weight_bits,
            participants,
            theta_min,
            theta_max,
            max_sum_bits: max_sum_bits.min(64),
        };
        if cfg.sum_bits() > cfg.max_sum_bits {
            return Err(QuantError::InvalidConfig(format!(
                "M = {} exceeds the {}-bit limit",
                cfg.sum_bits(),
                cfg.max_sum_bits
            )));
        }
        Ok(cfg)
    }

    /// `L`
    pub fn input_bits(&self) -> u32 {
        self.input_bits
    }

    /// `W`
    pub fn weight_bits(&self) -> u32 {
        self.weight_bits
    }

    /// `n`
    pub fn participants(&self) -> usize {
        self.participants
    }

    pub fn theta_min(&self) -> f64 {
        self.theta_min
    }

    pub fn theta_max(&self) -> f64 {
        self.theta_max
    }

    /// `M = L + W + ceil(log2 n)`
    pub fn sum_bits(&self) -> u32 {
        self.input_bits + self.weight_bits + ceil_log2(self.participants)
    }

    /// One quantization step, `(theta_max - theta_min) / 2^L`.
    pub fn step(&self) -> f64 {
        (self.theta_max - self.theta_min) / 2f64.powi(self.input_bits as i32)
    }

    /// Same budget with a different participant count.
    pub fn for_participants(&self, participants: usize) -> Result<Self, QuantError> {
        Self::with_sum_limit(
            self.input_bits,
            self.weight_bits,
            participants,
            self.theta_min,
            self.theta_max,
            self.max_sum_bits,
        )
    }
}

pub(crate) fn ceil_log2(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

/// Integer vector whose entries all fit in `bit_width` bits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizedVector {
    values: Vec<u64>,
    bit_width: u32,
}

impl QuantizedVector {
    pub fn new(values: Vec<u64>, bit_width: u32) -> Result<Self, QuantError> {
        if bit_width < 64 {
            if let Some(&value) = values.iter().find(|&&v| v >> bit_width != 0) {
                return Err(QuantError::ValueOverflow {
                    value,
                    bits: bit_width,
                });
            }
        }
        Ok(Self { values, bit_width })
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<u64> {
        self.values
    }

    pub fn bit_width(&self) -> u32 {
        self.bit_width
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `min(max(x, lo), hi)`. NaN inputs saturate to `lo`.
pub fn clip(x: f64, lo: f64, hi: f64) -> Result<f64, QuantError> {
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(QuantError::InvalidRange { lo, hi });
    }
    Ok(x.max(lo).min(hi))
}

/// Uniform `L`-bit quantization with round-half-away-from-zero. The upper
/// clip bound would map to `2^L`; it is clamped to `2^L - 1`.
pub fn quantize(theta: &[f64], cfg: &QuantConfig) -> Result<QuantizedVector, QuantError> {
    let scale = 2f64.powi(cfg.input_bits as i32);
    let range = cfg.theta_max - cfg.theta_min;
    let top = (1u64 << cfg.input_bits) - 1;
    let values = theta
        .iter()
        .map(|&t| {
            let c = clip(t, cfg.theta_min, cfg.theta_max)?;
            let q = (scale * (c - cfg.theta_min) / range).round();
            Ok((q.max(0.0) as u64).min(top))
        })
        .collect::<Result<Vec<_>, QuantError>>()?;
    Ok(QuantizedVector {
        values,
        bit_width: cfg.input_bits,
    })
}

/// `x = Q(theta) * w`, widening the vector to `L + W` bits.
pub fn apply_weight(
    q: &QuantizedVector,
    weight: u64,
    cfg: &QuantConfig,
) -> Result<QuantizedVector, QuantError> {
    if weight == 0 {
        return Err(QuantError::ZeroWeight);
    }
    if weight >> cfg.weight_bits != 0 {
        return Err(QuantError::WeightOverflow {
            weight,
            bits: cfg.weight_bits,
        });
    }
    if q.bit_width != cfg.input_bits {
        return Err(QuantError::BitWidthMismatch {
            expected: cfg.input_bits,
            actual: q.bit_width,
        });
    }
    Ok(QuantizedVector {
        values: q.values.iter().map(|&v| v * weight).collect(),
        bit_width: cfg.input_bits + cfg.weight_bits,
    })
}

/// Maps an aggregated integer vector back to real parameters, dividing by
/// the weight sum in floating point before rescaling.
pub fn dequantize_aggregate(
    agg: &QuantizedVector,
    weight_sum: u64,
    cfg: &QuantConfig,
) -> Result<Vec<f64>, QuantError> {
    if weight_sum == 0 {
        return Err(QuantError::ZeroWeightSum);
    }
    let step = cfg.step();
    let s = weight_sum as f64;
    Ok(agg
        .values
        .iter()
        .map(|&x| (x as f64 / s) * step + cfg.theta_min)
        .collect())
}
