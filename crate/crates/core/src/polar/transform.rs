use crate::error::{Error, Result};

pub fn log2_exact(n: usize) -> Result<u32> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::pre(format!("length {n} is not a power of two")));
    }
    Ok(n.trailing_zeros())
}

/// Reverses the low `bits` bits of `i`.
#[inline]
pub fn bit_reverse(i: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        i.reverse_bits() >> (usize::BITS - bits)
    }
}

pub fn bit_reverse_permute<T: Copy>(x: &[T]) -> Vec<T> {
    let bits = x.len().trailing_zeros();
    (0..x.len()).map(|i| x[bit_reverse(i, bits)]).collect()
}

/// In-place `x <- x F^{(x)n}` over GF(2), `F = [[1,0],[1,1]]`, row-vector convention.
pub fn butterfly(x: &mut [u8]) {
    let n = x.len();
    let mut s = 1;
    while s < n {
        for block in x.chunks_mut(2 * s) {
            let (a, b) = block.split_at_mut(s);
            for (u, v) in a.iter_mut().zip(b.iter()) {
                *u ^= v;
            }
        }
        s *= 2;
    }
}

/// `x B_N F^{(x)n}`; its own inverse.
pub fn polar_transform(x: &[u8]) -> Result<Vec<u8>> {
    log2_exact(x.len())?;
    let mut y = bit_reverse_permute(x);
    butterfly(&mut y);
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::all_sequences;
    use rand::Rng;

    #[test]
    fn kernel() {
        assert_eq!(polar_transform(&[1, 1]).unwrap(), vec![0, 1]);
        assert_eq!(polar_transform(&[1, 0]).unwrap(), vec![1, 0]);
        assert_eq!(polar_transform(&[0, 1]).unwrap(), vec![1, 1]);
        assert_eq!(polar_transform(&[1]).unwrap(), vec![1]);
        assert_eq!(polar_transform(&[0; 8]).unwrap(), vec![0; 8]);
        assert!(polar_transform(&[0; 6]).is_err());
        assert!(polar_transform(&[]).is_err());
    }

    #[test]
    fn involution() {
        for x in all_sequences(4, 2) {
            assert_eq!(polar_transform(&polar_transform(&x).unwrap()).unwrap(), x);
        }
        let mut rng = crate::rng::derive_stream(0, "t", 0);
        for k in [3, 7, 12] {
            let x: Vec<u8> = (0..1 << k).map(|_| rng.gen_range(0..2)).collect();
            assert_eq!(polar_transform(&polar_transform(&x).unwrap()).unwrap(), x);
        }
    }

    #[test]
    fn matches_matrix_n4() {
        // rows of B_4 F^{(x)2}
        let g = [[1, 0, 0, 0], [1, 0, 1, 0], [1, 1, 0, 0], [1, 1, 1, 1]];
        for x in all_sequences(4, 2) {
            let mut u = [0u8; 4];
            for (i, &xi) in x.iter().enumerate() {
                for j in 0..4 {
                    u[j] ^= xi & g[i][j];
                }
            }
            assert_eq!(polar_transform(&x).unwrap(), u.to_vec());
        }
    }
}
