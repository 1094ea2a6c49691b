//! Orthonormal transforms for block groups: a separable 3D transform built
//! from a 2D DCT-II on each block slice and a 1D transform along the group
//! axis (Haar when the group size is a power of two, DCT-II otherwise).
//!
//! Both bases are materialized as dense orthonormal matrices, so the
//! inverse is exactly the transpose and Parseval holds to rounding error.

/// Dense orthonormal basis; rows are basis vectors.
#[derive(Clone, Debug)]
pub struct Orthonormal {
    n: usize,
    /// Row-major n x n forward matrix.
    m: Vec<f64>,
}

impl Orthonormal {
    /// Orthonormal DCT-II of size n.
    pub fn dct2(n: usize) -> Self {
        assert!(n >= 1);
        let mut m = vec![0.0; n * n];
        let norm0 = (1.0 / n as f64).sqrt();
        let norm = (2.0 / n as f64).sqrt();
        for k in 0..n {
            let scale = if k == 0 { norm0 } else { norm };
            for j in 0..n {
                m[k * n + j] = scale
                    * (std::f64::consts::PI * k as f64 * (2.0 * j as f64 + 1.0) / (2.0 * n as f64))
                        .cos();
            }
        }
        Self { n, m }
    }

    /// Orthonormal Haar basis of size n (n must be a power of two). Built
    /// recursively: H(2m) stacks H(m) applied to pairwise averages over
    /// pairwise differences, each scaled by 1/sqrt(2).
    pub fn haar(n: usize) -> Self {
        assert!(n.is_power_of_two(), "haar size must be a power of two");
        let mut m = vec![1.0];
        let mut size = 1;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        while size < n {
            let next = size * 2;
            let mut grown = vec![0.0; next * next];
            // Average rows: previous basis spread over pairs.
            for k in 0..size {
                for j in 0..size {
                    let v = m[k * size + j] * s;
                    grown[k * next + 2 * j] = v;
                    grown[k * next + 2 * j + 1] = v;
                }
            }
            // Detail rows: one difference per pair.
            for k in 0..size {
                grown[(size + k) * next + 2 * k] = s;
                grown[(size + k) * next + 2 * k + 1] = -s;
            }
            m = grown;
            size = next;
        }
        Self { n, m }
    }

    /// Haar when n is a power of two, DCT-II otherwise.
    pub fn for_group_axis(n: usize) -> Self {
        if n.is_power_of_two() {
            Self::haar(n)
        } else {
            Self::dct2(n)
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &[f64] {
        &self.m
    }

    /// y = M x.
    pub fn forward(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for (k, out) in y.iter_mut().enumerate() {
            let row = &self.m[k * self.n..(k + 1) * self.n];
            *out = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    /// x = M^T y (exact inverse by orthonormality).
    pub fn inverse(&self, y: &[f64], x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        x.fill(0.0);
        for (k, &v) in y.iter().enumerate() {
            let row = &self.m[k * self.n..(k + 1) * self.n];
            for (xi, &r) in x.iter_mut().zip(row) {
                *xi += r * v;
            }
        }
    }
}

/// Separable orthonormal transform of a block_size x block_size x
/// group_size stack, stored slice-major (slice index varies slowest).
#[derive(Clone, Debug)]
pub struct Transform3d {
    block_size: usize,
    group_size: usize,
    slice_basis: Orthonormal,
    axis_basis: Orthonormal,
}

impl Transform3d {
    pub fn new(block_size: usize, group_size: usize) -> Self {
        Self {
            block_size,
            group_size,
            slice_basis: Orthonormal::dct2(block_size),
            axis_basis: Orthonormal::for_group_axis(group_size),
        }
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    /// Coefficients per group.
    pub fn len(&self) -> usize {
        self.block_size * self.block_size * self.group_size
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Scratch buffer length required by forward/inverse.
    pub fn scratch_len(&self) -> usize {
        self.block_size * self.block_size + self.block_size + self.group_size.max(self.block_size)
    }

    /// 2D transform of each slice in place: X <- D X D^T (or the inverse).
    fn slices_2d(&self, stack: &mut [f64], scratch: &mut [f64], forward: bool) {
        let bs = self.block_size;
        let area = bs * bs;
        let (tmp, rest) = scratch.split_at_mut(area);
        let (vec_in, rest) = rest.split_at_mut(bs);
        let vec_out = &mut rest[..bs];
        for slice in stack.chunks_exact_mut(area) {
            // Rows.
            for (r, row) in slice.chunks_exact(bs).enumerate() {
                vec_in.copy_from_slice(row);
                if forward {
                    self.slice_basis.forward(vec_in, vec_out);
                } else {
                    self.slice_basis.inverse(vec_in, vec_out);
                }
                tmp[r * bs..(r + 1) * bs].copy_from_slice(vec_out);
            }
            // Columns.
            for c in 0..bs {
                for r in 0..bs {
                    vec_in[r] = tmp[r * bs + c];
                }
                if forward {
                    self.slice_basis.forward(vec_in, vec_out);
                } else {
                    self.slice_basis.inverse(vec_in, vec_out);
                }
                for r in 0..bs {
                    slice[r * bs + c] = vec_out[r];
                }
            }
        }
    }

    /// 1D transform along the group axis at every in-slice position.
    fn axis_1d(&self, stack: &mut [f64], scratch: &mut [f64], forward: bool) {
        let area = self.block_size * self.block_size;
        let c = self.group_size;
        let (vec_in, rest) = scratch.split_at_mut(c);
        let vec_out = &mut rest[..c];
        for rc in 0..area {
            for k in 0..c {
                vec_in[k] = stack[k * area + rc];
            }
            if forward {
                self.axis_basis.forward(vec_in, vec_out);
            } else {
                self.axis_basis.inverse(vec_in, vec_out);
            }
            for k in 0..c {
                stack[k * area + rc] = vec_out[k];
            }
        }
    }

    /// In-place forward transform of a stack (2D per slice, then 1D along
    /// the group axis).
    pub fn forward(&self, stack: &mut [f64], scratch: &mut [f64]) {
        debug_assert_eq!(stack.len(), self.len());
        self.slices_2d(stack, scratch, true);
        self.axis_1d(stack, scratch, true);
    }

    /// Exact inverse of [`Self::forward`].
    pub fn inverse(&self, coeffs: &mut [f64], scratch: &mut [f64]) {
        debug_assert_eq!(coeffs.len(), self.len());
        self.axis_1d(coeffs, scratch, false);
        self.slices_2d(coeffs, scratch, false);
    }
}
