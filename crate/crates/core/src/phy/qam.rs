//! Gray-labelled 16-QAM mapping and max-log soft demapping.

use num_complex::Complex32;

use crate::error::{check_bits, PhyError};

pub const BITS_PER_SYMBOL: usize = 4;

const SCALE: f32 = 0.316_227_77; // 1 / sqrt(10)

/// Axis level for a (sign bit, amplitude bit) pair: 0,0 → +1, 0,1 → +3.
fn level(sign: u8, amp: u8) -> f32 {
    let s = 1.0 - 2.0 * f32::from(sign);
    let a = 2.0 - (1.0 - 2.0 * f32::from(amp));
    s * a
}

/// Maps groups of four bits (b0 b1 b2 b3) to unit-energy 16-QAM symbols.
pub fn qam16_map(bits: &[u8]) -> Result<Vec<Complex32>, PhyError> {
    if bits.len() % BITS_PER_SYMBOL != 0 {
        return Err(PhyError::NotMultiple {
            what: "qam16_map bits",
            multiple: BITS_PER_SYMBOL,
            got: bits.len(),
        });
    }
    check_bits(bits)?;
    Ok(bits
        .chunks_exact(BITS_PER_SYMBOL)
        .map(|b| Complex32::new(level(b[0], b[2]) * SCALE, level(b[1], b[3]) * SCALE))
        .collect())
}

/// Max-log LLRs (sign bit, amplitude bit) for one PAM-4 axis.
///
/// `x` is the equalized coordinate in constellation units and `w` the weight
/// `|h|^2 / (10 σ²)` applied to squared distances.
fn axis_llrs(x: f32, w: f32) -> (f32, f32) {
    let d = |p: f32| (x - p) * (x - p);
    let (dm3, dm1, dp1, dp3) = (d(-3.0), d(-1.0), d(1.0), d(3.0));
    let sign = w * (dm3.min(dm1) - dp1.min(dp3));
    let amp = w * (dm3.min(dp3) - dm1.min(dp1));
    (sign, amp)
}

/// Max-log LLRs of the four bits carried by `y = h s + n`, `n ~ CN(0, noise_var)`.
pub fn qam16_demap(y: Complex32, h: Complex32, noise_var: f32) -> Result<[f32; 4], PhyError> {
    if !(noise_var > 0.0) {
        return Err(PhyError::InvalidParameter(format!(
            "noise variance {noise_var} must be positive"
        )));
    }
    let gain = h.norm_sqr();
    if gain == 0.0 {
        return Ok([0.0; 4]);
    }
    // |y - h s|^2 = |h|^2 |y/h - s|^2; split into the two PAM axes.
    let z = y * h.conj() / gain / SCALE;
    let w = gain * SCALE * SCALE / noise_var;
    let (l0, l2) = axis_llrs(z.re, w);
    let (l1, l3) = axis_llrs(z.im, w);
    Ok([l0, l1, l2, l3])
}
