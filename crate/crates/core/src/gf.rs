//! Multiplication in GF(2^w) for the supported word widths.

/// Reduction polynomial for width `w`, including the leading term.
///
/// Widths 16 and 32 have no irreducible trinomial, so pentanomials are used.
pub const fn modulus(width: u32) -> u64 {
    match width {
        4 => 0b1_0011,
        8 => 0x11B,
        16 => 0x1_100B,
        32 => 0x1_0040_0007,
        _ => 0,
    }
}

/// Carry-less product of `a` and `b` reduced modulo [`modulus`].
pub fn mul(a: u64, b: u64, width: u32) -> u64 {
    let poly = modulus(width);
    let top = 1u64 << width;
    let mask = top - 1;
    let (mut a, mut b) = (a & mask, b & mask);
    let mut acc = 0u64;
    while b != 0 {
        if b & 1 == 1 {
            acc ^= a;
        }
        b >>= 1;
        a <<= 1;
        if a & top != 0 {
            a ^= poly;
        }
    }
    acc
}
