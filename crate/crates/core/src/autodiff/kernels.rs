//! Dense loops shared by the forward and backward passes.

use crate::Real;

/// `c += a · b` with `a: m×k`, `b: k×n`.
pub(crate) fn mm_acc(a: &[Real], b: &[Real], c: &mut [Real], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for kk in 0..k {
            let aik = a[i * k + kk];
            let brow = &b[kk * n..(kk + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aik * bv;
            }
        }
    }
}

/// `c += aᵀ · b` with `a: k×m`, `b: k×n`.
pub(crate) fn mm_tn_acc(a: &[Real], b: &[Real], c: &mut [Real], k: usize, m: usize, n: usize) {
    for kk in 0..k {
        let brow = &b[kk * n..(kk + 1) * n];
        for i in 0..m {
            let aki = a[kk * m + i];
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aki * bv;
            }
        }
    }
}

/// `c += a · bᵀ` with `a: m×k`, `b: n×k`.
pub(crate) fn mm_nt_acc(a: &[Real], b: &[Real], c: &mut [Real], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut s = 0.0;
            for (&av, &bv) in arow.iter().zip(brow) {
                s += av * bv;
            }
            c[i * n + j] += s;
        }
    }
}

/// Geometry of a strided, zero-padded square-kernel correlation between an
/// image of `c×h×w` and an output grid of `oh×ow`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Geom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl Geom {
    pub fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    pub fn cols(&self) -> usize {
        self.oh * self.ow
    }

    #[inline]
    fn src(&self, o: usize, kk: usize, extent: usize) -> Option<usize> {
        let p = o * self.stride + kk;
        if p < self.pad || p - self.pad >= extent {
            None
        } else {
            Some(p - self.pad)
        }
    }
}

/// Output extent of a correlation, `None` when it is not a positive integer.
pub(crate) fn conv_out(size: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let span = size + 2 * pad;
    if stride == 0 || k == 0 || span < k || (span - k) % stride != 0 {
        return None;
    }
    Some((span - k) / stride + 1)
}

/// Output extent of a transposed correlation.
pub(crate) fn deconv_out(size: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || k == 0 || size == 0 {
        return None;
    }
    let full = (size - 1) * stride + k;
    full.checked_sub(2 * pad).filter(|&o| o > 0)
}

pub(crate) fn im2col(img: &[Real], g: &Geom, col: &mut [Real]) {
    let cols = g.cols();
    for c in 0..g.c {
        let plane = &img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for kh in 0..g.k {
            for kw in 0..g.k {
                let row = (c * g.k + kh) * g.k + kw;
                let dst = &mut col[row * cols..(row + 1) * cols];
                for oy in 0..g.oh {
                    let line = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    match g.src(oy, kh, g.h) {
                        None => line.fill(0.0),
                        Some(iy) => {
                            for (ox, v) in line.iter_mut().enumerate() {
                                *v = match g.src(ox, kw, g.w) {
                                    Some(ix) => plane[iy * g.w + ix],
                                    None => 0.0,
                                };
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-and-adds columns back into the image.
pub(crate) fn col2im(col: &[Real], g: &Geom, img: &mut [Real]) {
    let cols = g.cols();
    for c in 0..g.c {
        let plane = &mut img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for kh in 0..g.k {
            for kw in 0..g.k {
                let row = (c * g.k + kh) * g.k + kw;
                let src = &col[row * cols..(row + 1) * cols];
                for oy in 0..g.oh {
                    let Some(iy) = g.src(oy, kh, g.h) else { continue };
                    for ox in 0..g.ow {
                        if let Some(ix) = g.src(ox, kw, g.w) {
                            plane[iy * g.w + ix] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_extents() {
        assert_eq!(conv_out(5, 3, 1, 0), Some(3));
        assert_eq!(conv_out(32, 4, 2, 1), Some(16));
        assert_eq!(conv_out(32, 3, 2, 1), None);
        assert_eq!(conv_out(2, 3, 1, 0), None);
        assert_eq!(deconv_out(1, 2, 2, 0), Some(2));
        assert_eq!(deconv_out(8, 2, 2, 0), Some(16));
        assert_eq!(deconv_out(1, 1, 1, 1), None);
    }

    #[test]
    fn products_agree() {
        // a: 2x3, b: 3x2
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        let mut c = [0.0; 4];
        mm_acc(&a, &b, &mut c, 2, 3, 2);
        assert_eq!(c, [58.0, 64.0, 139.0, 154.0]);
        // aᵀ with a stored as 3x2 (k×m)
        let at = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0];
        let mut c2 = [0.0; 4];
        mm_tn_acc(&at, &b, &mut c2, 3, 2, 2);
        assert_eq!(c2, c);
        // bᵀ stored as 2x3 (n×k)
        let bt = [7.0, 9.0, 11.0, 8.0, 10.0, 12.0];
        let mut c3 = [0.0; 4];
        mm_nt_acc(&a, &bt, &mut c3, 2, 3, 2);
        assert_eq!(c3, c);
    }
}
