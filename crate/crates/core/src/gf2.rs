//! Dense bit-packed linear algebra over GF(2).

/// Number of 64-bit words needed for `n` bits.
pub fn words_for(n: usize) -> usize {
    n.div_ceil(64)
}

#[inline]
pub fn get_bit(words: &[u64], i: usize) -> bool {
    (words[i / 64] >> (i % 64)) & 1 == 1
}

#[inline]
pub fn set_bit(words: &mut [u64], i: usize) {
    words[i / 64] |= 1 << (i % 64);
}

#[inline]
pub fn flip_bit(words: &mut [u64], i: usize) {
    words[i / 64] ^= 1 << (i % 64);
}

#[inline]
pub fn xor_into(dst: &mut [u64], src: &[u64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d ^= s;
    }
}

/// Indices of the set bits in increasing order.
pub fn ones(words: &[u64]) -> impl Iterator<Item = usize> + '_ {
    words.iter().enumerate().flat_map(|(w, &word)| {
        let mut rest = word;
        std::iter::from_fn(move || {
            if rest == 0 {
                None
            } else {
                let b = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(w * 64 + b)
            }
        })
    })
}

/// Row-major binary matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gf2Matrix {
    rows: usize,
    cols: usize,
    data: Vec<Vec<u64>>,
}

impl Gf2Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Gf2Matrix {
            rows,
            cols,
            data: vec![vec![0; words_for(cols)]; rows],
        }
    }

    /// Builds a matrix whose row `r` has ones at `supports[r]`.
    pub fn from_supports(cols: usize, supports: &[Vec<usize>]) -> Self {
        let mut m = Gf2Matrix::zeros(supports.len(), cols);
        for (r, s) in supports.iter().enumerate() {
            for &c in s {
                assert!(c < cols, "column {c} out of range");
                set_bit(&mut m.data[r], c);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        get_bit(&self.data[r], c)
    }

    pub fn row_words(&self, r: usize) -> &[u64] {
        &self.data[r]
    }

    pub fn push_row(&mut self, support: &[usize]) {
        let mut row = vec![0; words_for(self.cols)];
        for &c in support {
            set_bit(&mut row, c);
        }
        self.data.push(row);
        self.rows += 1;
    }

    /// Reduced row echelon form; returns the pivot columns.
    fn rref(&mut self) -> Vec<usize> {
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..self.cols {
            if r == self.rows {
                break;
            }
            let Some(p) = (r..self.rows).find(|&i| get_bit(&self.data[i], c)) else {
                continue;
            };
            self.data.swap(r, p);
            let pivot_row = self.data[r].clone();
            for i in 0..self.rows {
                if i != r && get_bit(&self.data[i], c) {
                    xor_into(&mut self.data[i], &pivot_row);
                }
            }
            pivots.push(c);
            r += 1;
        }
        pivots
    }

    pub fn rank(&self) -> usize {
        self.clone().rref().len()
    }

    /// A basis of `{x : M x = 0}`, one packed vector per free column.
    pub fn null_space_basis(&self) -> Vec<Vec<u64>> {
        let mut red = self.clone();
        let pivots = red.rref();
        let mut is_pivot = vec![false; self.cols];
        for &p in &pivots {
            is_pivot[p] = true;
        }
        (0..self.cols)
            .filter(|&c| !is_pivot[c])
            .map(|free| {
                let mut x = vec![0; words_for(self.cols)];
                set_bit(&mut x, free);
                for (k, &p) in pivots.iter().enumerate() {
                    if get_bit(&red.data[k], free) {
                        set_bit(&mut x, p);
                    }
                }
                x
            })
            .collect()
    }

    /// `true` when `M x = 0`.
    pub fn annihilates(&self, x: &[u64]) -> bool {
        self.data.iter().all(|row| {
            row.iter()
                .zip(x)
                .map(|(a, b)| (a & b).count_ones())
                .sum::<u32>()
                % 2
                == 0
        })
    }

    /// Submatrix on the given rows and columns (in the given order).
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Gf2Matrix {
        let mut out = Gf2Matrix::zeros(rows.len(), cols.len());
        for (ri, &r) in rows.iter().enumerate() {
            for (ci, &c) in cols.iter().enumerate() {
                if self.get(r, c) {
                    set_bit(&mut out.data[ri], ci);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    /// Rank by brute force: the size of the row span is 2^rank.
    fn span_rank_oracle(m: &Gf2Matrix) -> usize {
        let mut span = std::collections::HashSet::new();
        span.insert(vec![0u64; words_for(m.cols())]);
        for r in 0..m.rows() {
            let row = m.row_words(r).to_vec();
            let existing: Vec<Vec<u64>> = span.iter().cloned().collect();
            for mut v in existing {
                xor_into(&mut v, &row);
                span.insert(v);
            }
        }
        span.len().trailing_zeros() as usize
    }

    #[test]
    fn single_parity_check() {
        let h = Gf2Matrix::from_supports(3, &[vec![0, 1, 2]]);
        assert_eq!(h.rank(), 1);
        let basis = h.null_space_basis();
        assert_eq!(basis.len(), 2);
        assert!(basis.iter().all(|b| h.annihilates(b)));
    }

    #[test]
    fn repetition_chain() {
        let h = Gf2Matrix::from_supports(3, &[vec![0, 1], vec![1, 2]]);
        assert_eq!(h.rank(), 2);
        let basis = h.null_space_basis();
        assert_eq!(basis.len(), 1);
        assert_eq!(ones(&basis[0]).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn dense_random_rank_matches_span_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let supports: Vec<Vec<usize>> = (0..10)
                .map(|_| (0..20).filter(|_| rng.random_bool(0.5)).collect())
                .collect();
            let h = Gf2Matrix::from_supports(20, &supports);
            assert_eq!(h.rank(), span_rank_oracle(&h));
        }
    }

    #[test]
    fn wide_matrix_crosses_word_boundary() {
        let supports: Vec<Vec<usize>> = (0..70).map(|i| vec![i, i + 1]).collect();
        let h = Gf2Matrix::from_supports(71, &supports);
        assert_eq!(h.rank(), 70);
        let basis = h.null_space_basis();
        assert_eq!(basis.len(), 1);
        assert_eq!(ones(&basis[0]).count(), 71);
    }

    proptest! {
        #[test]
        fn rank_nullity(rows in 1usize..9, cols in 1usize..14, seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let supports: Vec<Vec<usize>> = (0..rows)
                .map(|_| (0..cols).filter(|_| rng.random_bool(0.4)).collect())
                .collect();
            let h = Gf2Matrix::from_supports(cols, &supports);
            let basis = h.null_space_basis();
            prop_assert_eq!(basis.len() + h.rank(), cols);
            for b in &basis {
                prop_assert!(h.annihilates(b));
            }
        }

        #[test]
        fn deleting_rows_and_columns_never_raises_rank(seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let supports: Vec<Vec<usize>> = (0..8)
                .map(|_| (0..12).filter(|_| rng.random_bool(0.4)).collect())
                .collect();
            let h = Gf2Matrix::from_supports(12, &supports);
            let rows: Vec<usize> = (0..8).filter(|_| rng.random_bool(0.6)).collect();
            let cols: Vec<usize> = (0..12).filter(|_| rng.random_bool(0.6)).collect();
            prop_assert!(h.select(&rows, &cols).rank() <= h.rank());
        }
    }
}
