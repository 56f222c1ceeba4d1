//! Signed fixed-point binary encoding of the epigraph variable φ.
//!
//! The covering grid combines negative integer bits (weights −2^j), positive
//! fractional bits (weights step·2^k filling one unit, step a power of two
//! ≤ resolution), and positive integer bits (weights 2^j), so that every
//! value of [lo, hi] is approximated within one step.

use serde::Serialize;

use super::QuboError;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhiSpec {
    pub lo: f64,
    pub hi: f64,
    pub resolution: f64,
    /// Grid step, the largest power of two ≤ resolution.
    pub step: f64,
    /// Signed weight per bit: fractional ascending, then positive integers,
    /// then negative integers.
    pub weights: Vec<f64>,
    pub frac_bits: usize,
    pub int_bits: usize,
    pub neg_bits: usize,
}

impl PhiSpec {
    pub fn num_bits(&self) -> usize {
        self.weights.len()
    }

    pub fn decode(&self, bits: &[u8]) -> f64 {
        debug_assert_eq!(bits.len(), self.weights.len());
        self.weights.iter().zip(bits).map(|(w, &b)| w * b as f64).sum()
    }

    pub fn min_value(&self) -> f64 {
        self.weights.iter().filter(|w| **w < 0.0).sum()
    }

    pub fn max_value(&self) -> f64 {
        self.weights.iter().filter(|w| **w > 0.0).sum()
    }
}

/// Choose the bit layout covering [lo, hi] with decode error ≤ resolution.
pub fn encode_phi(lo: f64, hi: f64, resolution: f64, max_bits: usize) -> Result<PhiSpec, QuboError> {
    if !(lo < hi) || !(resolution > 0.0) {
        return Err(QuboError::InvalidArgument(
            "phi encoding needs lo < hi and positive resolution".into(),
        ));
    }
    let step = pow2_at_most(resolution);
    let frac_bits = if step >= 1.0 { 0 } else { (1.0 / step).log2().round() as usize };
    let neg_bits = if lo < 0.0 { ((-lo) + 1.0).log2().ceil() as usize } else { 0 };
    let mut int_bits = 0usize;
    let frac_span = if frac_bits > 0 { 1.0 - step } else { 0.0 };
    while ((1u64 << int_bits) - 1) as f64 + frac_span < hi {
        int_bits += 1;
        if int_bits > 62 {
            return Err(QuboError::EncodingTooWide { needed: int_bits, max: max_bits });
        }
    }
    let total = frac_bits + int_bits + neg_bits;
    if total > max_bits {
        return Err(QuboError::EncodingTooWide { needed: total, max: max_bits });
    }
    let mut weights = Vec::with_capacity(total);
    for k in 0..frac_bits {
        weights.push(step * (1u64 << k) as f64);
    }
    for j in 0..int_bits {
        weights.push((1u64 << j) as f64);
    }
    for j in 0..neg_bits {
        weights.push(-((1u64 << j) as f64));
    }
    Ok(PhiSpec { lo, hi, resolution, step, weights, frac_bits, int_bits, neg_bits })
}

fn pow2_at_most(x: f64) -> f64 {
    2f64.powi(x.log2().floor() as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn all_decodes(spec: &PhiSpec) -> Vec<f64> {
        let k = spec.num_bits();
        (0u32..1 << k)
            .map(|pat| {
                let bits: Vec<u8> = (0..k).map(|i| ((pat >> i) & 1) as u8).collect();
                spec.decode(&bits)
            })
            .collect()
    }

    #[test]
    fn unit_negative_range_quarter_resolution() {
        let spec = encode_phi(-1.0, 0.0, 0.25, 32).unwrap();
        let mut w = spec.weights.clone();
        w.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(w, vec![-1.0, 0.25, 0.5]);
        let decodes = all_decodes(&spec);
        assert_relative_eq!(spec.min_value(), -1.0);
        assert_relative_eq!(spec.max_value(), 0.75);
        // every target in [lo, hi] is within one resolution of a decode
        let mut t = spec.lo;
        while t <= spec.hi {
            let err = decodes.iter().map(|d| (d - t).abs()).fold(f64::INFINITY, f64::min);
            assert!(err <= 0.25 + 1e-12, "target {t} missed by {err}");
            t += 0.01;
        }
    }

    #[test]
    fn small_positive_integer_range() {
        let spec = encode_phi(0.0, 3.0, 1.0, 32).unwrap();
        assert_eq!(spec.weights, vec![1.0, 2.0]);
        let mut decodes = all_decodes(&spec);
        decodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(decodes, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn all_zero_bits_decode_to_zero() {
        let spec = encode_phi(-5.0, 2.0, 0.125, 32).unwrap();
        let zeros = vec![0u8; spec.num_bits()];
        assert_eq!(spec.decode(&zeros), 0.0);
    }

    #[test]
    fn non_power_of_two_resolution_rounds_down() {
        let spec = encode_phi(-1.0, 0.0, 0.2, 32).unwrap();
        assert_relative_eq!(spec.step, 0.125);
    }

    #[test]
    fn bit_budget_is_enforced() {
        match encode_phi(-1e6, 0.0, 1.0 / 1024.0, 16) {
            Err(QuboError::EncodingTooWide { needed, max: 16 }) => assert!(needed > 16),
            other => panic!("expected encoding-too-wide, got {other:?}"),
        }
        assert!(matches!(encode_phi(1.0, 0.0, 0.5, 8), Err(QuboError::InvalidArgument(_))));
    }

    #[test]
    fn coverage_property_across_ranges() {
        for (lo, hi, res) in [(-3.0, 0.0, 0.5), (-10.0, 2.0, 0.25), (0.0, 7.0, 2.0), (-0.5, 0.5, 0.0625)]
        {
            let spec = encode_phi(lo, hi, res, 48).unwrap();
            assert!(spec.min_value() <= lo + 1e-12);
            assert!(spec.max_value() >= hi - spec.resolution - 1e-12);
            let decodes = all_decodes(&spec);
            let mut t = lo;
            while t <= hi {
                let err = decodes.iter().map(|d| (d - t).abs()).fold(f64::INFINITY, f64::min);
                assert!(err <= res + 1e-12, "({lo},{hi},{res}) target {t} missed by {err}");
                t += (hi - lo) / 37.0;
            }
        }
    }
}
