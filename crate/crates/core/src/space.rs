//! Mixed-radix indexing of finite product spaces.
//!
//! Joint distributions are stored as flat vectors over the product of their
//! variables' outcome alphabets. The canonical enumeration order is
//! lexicographic with the *last* variable varying fastest, so for two binary
//! variables the cells are `(0,0), (0,1), (1,0), (1,1)` at flat indices
//! `0..4`.

use alloc::vec::Vec;

/// Shape of a finite product space, with flat-index/coordinate conversion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductSpace {
    sizes: Vec<usize>,
    /// `strides[i]` = product of `sizes[i+1..]`; the last stride is 1.
    strides: Vec<usize>,
    len: usize,
}

impl ProductSpace {
    /// Builds the space with the given per-axis sizes.
    ///
    /// Panics if any size is zero or the total size overflows `usize`;
    /// use [`checked_product`] first when sizes come from untrusted input.
    pub fn new(sizes: &[usize]) -> Self {
        let len = checked_product(sizes).expect("product space size overflow or empty axis");
        let mut strides = alloc::vec![1usize; sizes.len()];
        for i in (0..sizes.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * sizes[i + 1];
        }
        ProductSpace {
            sizes: sizes.to_vec(),
            strides,
            len,
        }
    }

    /// Number of axes.
    pub fn rank(&self) -> usize {
        self.sizes.len()
    }

    /// Per-axis sizes.
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Total number of points (1 for the empty product).
    pub fn len(&self) -> usize {
        self.len
    }

    /// True iff the space has no points (never, by construction).
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Flat index of a coordinate tuple.
    pub fn index(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.sizes.len());
        let mut idx = 0usize;
        for (i, &c) in coords.iter().enumerate() {
            debug_assert!(c < self.sizes[i]);
            idx += c * self.strides[i];
        }
        idx
    }

    /// Coordinate tuple of a flat index.
    pub fn coords(&self, index: usize) -> Vec<usize> {
        debug_assert!(index < self.len || self.sizes.is_empty());
        let mut rem = index;
        let mut out = Vec::with_capacity(self.sizes.len());
        for &stride in &self.strides {
            out.push(rem / stride);
            rem %= stride;
        }
        out
    }

    /// Iterates all coordinate tuples in canonical (last-fastest) order.
    pub fn iter(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.len).map(|i| self.coords(i))
    }
}

/// Product of sizes, or `None` on overflow or a zero factor.
pub fn checked_product(sizes: &[usize]) -> Option<usize> {
    let mut acc: usize = 1;
    for &s in sizes {
        if s == 0 {
            return None;
        }
        acc = acc.checked_mul(s)?;
    }
    Some(acc)
}
