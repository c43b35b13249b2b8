//! Arithmetic in GF(2^8) modulo x^8 + x^4 + x^3 + x + 1 (0x11B).
//!
//! Multiplication is a fixed eight-round shift-and-add with masked
//! reduction, so timing does not depend on operand values.

pub const POLY: u16 = 0x11B;

#[inline]
pub fn add(a: u8, b: u8) -> u8 {
    a ^ b
}

#[inline]
pub fn mul(mut a: u8, mut b: u8) -> u8 {
    let mut product = 0u8;
    for _ in 0..8 {
        product ^= a & 0u8.wrapping_sub(b & 1);
        let carry = 0u8.wrapping_sub(a >> 7);
        a = (a << 1) ^ (carry & (POLY as u8));
        b >>= 1;
    }
    product
}

/// Multiplicative inverse via a^254. Maps 0 to 0.
pub fn inv(a: u8) -> u8 {
    // 254 = 0b1111_1110
    let a2 = mul(a, a);
    let a4 = mul(a2, a2);
    let a8 = mul(a4, a4);
    let a16 = mul(a8, a8);
    let a32 = mul(a16, a16);
    let a64 = mul(a32, a32);
    let a128 = mul(a64, a64);
    mul(mul(mul(a128, a64), mul(a32, a16)), mul(mul(a8, a4), a2))
}

/// `a / b`; `b` must be nonzero.
pub fn div(a: u8, b: u8) -> u8 {
    debug_assert_ne!(b, 0, "division by zero in GF(256)");
    mul(a, inv(b))
}

/// Horner evaluation of `coeffs[0] + coeffs[1] x + ...` at `x`.
pub fn eval_poly(coeffs: &[u8], x: u8) -> u8 {
    coeffs.iter().rev().fold(0u8, |acc, &c| add(mul(acc, x), c))
}

/// Lagrange basis weights for interpolating at zero through `xs`.
/// `xs` must be distinct and nonzero.
pub fn lagrange_at_zero(xs: &[u8]) -> Vec<u8> {
    xs.iter()
        .enumerate()
        .map(|(i, &xi)| {
            xs.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .fold(1u8, |acc, (_, &xj)| mul(acc, div(xj, add(xj, xi))))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aes_known_products() {
        // FIPS-197 section 4.2 worked example.
        assert_eq!(mul(0x57, 0x83), 0xc1);
        assert_eq!(mul(0x57, 0x13), 0xfe);
        assert_eq!(inv(0x53), 0xca);
    }

    #[test]
    fn zero_and_one() {
        for a in 0..=255u8 {
            assert_eq!(mul(a, 0), 0);
            assert_eq!(mul(a, 1), a);
        }
        assert_eq!(inv(0), 0);
    }

    #[test]
    fn horner_matches_direct() {
        let coeffs = [7u8, 3, 0x1f];
        for x in 0..=255u8 {
            let direct = add(add(7, mul(3, x)), mul(0x1f, mul(x, x)));
            assert_eq!(eval_poly(&coeffs, x), direct);
        }
    }
}
