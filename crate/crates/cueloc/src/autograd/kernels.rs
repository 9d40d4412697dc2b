//! Slice micro-kernels for the convolution loops.
//!
//! The convolutions are expressed as row operations: a weighted input row is
//! added into an output row (forward / input gradient) or dotted against it
//! (kernel gradient). 1x1 convolutions additionally get register-blocked
//! channel-matmul kernels. All loops are written over iterator zips so the
//! compiler drops bounds checks and vectorizes; multiply-adds fuse into FMA
//! instructions when the target has them. Accumulation order is fixed, so
//! every run of the same binary produces bit-identical results.

use crate::Real;

/// Fused multiply-add when the hardware has it (single rounding), plain
/// multiply-add otherwise. `mul_add` without hardware support calls a slow
/// exact software routine, which we never want.
#[inline(always)]
fn fmadd(a: Real, b: Real, c: Real) -> Real {
    #[cfg(target_feature = "fma")]
    {
        a.mul_add(b, c)
    }
    #[cfg(not(target_feature = "fma"))]
    {
        a * b + c
    }
}

pub fn axpy(y: &mut [Real], a: Real, x: &[Real]) {
    assert_eq!(y.len(), x.len());
    for (d, &s) in y.iter_mut().zip(x) {
        *d = fmadd(a, s, *d);
    }
}

#[allow(clippy::too_many_arguments)]
pub fn axpy4(
    y: &mut [Real],
    a0: Real,
    x0: &[Real],
    a1: Real,
    x1: &[Real],
    a2: Real,
    x2: &[Real],
    a3: Real,
    x3: &[Real],
) {
    let n = y.len();
    assert!(x0.len() == n && x1.len() == n && x2.len() == n && x3.len() == n);
    for ((((d, &s0), &s1), &s2), &s3) in
        y.iter_mut().zip(x0).zip(x1).zip(x2).zip(x3)
    {
        *d = fmadd(a3, s3, fmadd(a2, s2, fmadd(a1, s1, fmadd(a0, s0, *d))));
    }
}

pub fn dot(x: &[Real], y: &[Real]) -> Real {
    assert_eq!(x.len(), y.len());
    let mut s = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        s = fmadd(a, b, s);
    }
    s
}

/// Four dot products sharing the left operand; partial sums accumulate into `acc`.
pub fn dot4_acc(
    acc: &mut [Real; 4],
    g: &[Real],
    x0: &[Real],
    x1: &[Real],
    x2: &[Real],
    x3: &[Real],
) {
    let n = g.len();
    assert!(x0.len() == n && x1.len() == n && x2.len() == n && x3.len() == n);
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for ((((&gv, &v0), &v1), &v2), &v3) in g.iter().zip(x0).zip(x1).zip(x2).zip(x3) {
        s0 = fmadd(gv, v0, s0);
        s1 = fmadd(gv, v1, s1);
        s2 = fmadd(gv, v2, s2);
        s3 = fmadd(gv, v3, s3);
    }
    acc[0] += s0;
    acc[1] += s1;
    acc[2] += s2;
    acc[3] += s3;
}

/// SIMD lane count the reduction kernels accumulate over.
const NB: usize = 8;
/// Spatial strip width for the channel matmuls: 4 output rows x 224 doubles
/// stay resident in L1 across the whole input-channel sweep.
const STRIP: usize = 224;

/// Split a 4-row block (rows of length `n`) into its rows.
fn four_rows(block: &mut [Real], n: usize) -> (&mut [Real], &mut [Real], &mut [Real], &mut [Real]) {
    debug_assert_eq!(block.len(), 4 * n);
    let (r0, rest) = block.split_at_mut(n);
    let (r1, rest) = rest.split_at_mut(n);
    let (r2, r3) = rest.split_at_mut(n);
    (r0, r1, r2, r3)
}

/// Shared core of the channel matmuls: `dst[m x n] += w[m x k] . src[k x n]`,
/// all row-major. `dst` must be pre-filled (bias or existing gradient).
fn matmul_core(dst: &mut [Real], w: &[Real], src: &[Real], m: usize, k: usize, n: usize) {
    assert_eq!(dst.len(), m * n);
    assert_eq!(w.len(), m * k);
    assert_eq!(src.len(), k * n);
    let mut blocks = dst.chunks_exact_mut(4 * n);
    let mut o = 0;
    for block in &mut blocks {
        let (w0, w1, w2, w3) = (
            &w[o * k..][..k],
            &w[(o + 1) * k..][..k],
            &w[(o + 2) * k..][..k],
            &w[(o + 3) * k..][..k],
        );
        let (r0, r1, r2, r3) = four_rows(block, n);
        let mut j = 0;
        while j < n {
            let sl = STRIP.min(n - j);
            let (d0, d1, d2, d3) = (
                &mut r0[j..j + sl],
                &mut r1[j..j + sl],
                &mut r2[j..j + sl],
                &mut r3[j..j + sl],
            );
            for (c, srow) in src.chunks_exact(n).enumerate() {
                let s = &srow[j..j + sl];
                axpy(d0, w0[c], s);
                axpy(d1, w1[c], s);
                axpy(d2, w2[c], s);
                axpy(d3, w3[c], s);
            }
            j += sl;
        }
        o += 4;
    }
    for (q, row) in blocks.into_remainder().chunks_exact_mut(n).enumerate() {
        let wr = &w[(o + q) * k..][..k];
        let mut j = 0;
        while j < n {
            let sl = STRIP.min(n - j);
            let d = &mut row[j..j + sl];
            for (c, srow) in src.chunks_exact(n).enumerate() {
                axpy(d, wr[c], &srow[j..j + sl]);
            }
            j += sl;
        }
    }
}

/// `dst[m x n] = w[m x k] . src[k x n] + bias[m]` (row-major). The
/// accumulation order over `k` matches the naive triple loop exactly; only
/// the element-level multiply-add may fuse.
pub fn matmul_bias_set(
    dst: &mut [Real],
    w: &[Real],
    src: &[Real],
    bias: &[Real],
    m: usize,
    k: usize,
    n: usize,
) {
    assert_eq!(dst.len(), m * n);
    assert_eq!(bias.len(), m);
    for (row, &b) in dst.chunks_exact_mut(n).zip(bias) {
        row.fill(b);
    }
    matmul_core(dst, w, src, m, k, n);
}

/// `dst[m x n] += w[m x k] . src[k x n]`.
pub fn matmul_acc(dst: &mut [Real], w: &[Real], src: &[Real], m: usize, k: usize, n: usize) {
    matmul_core(dst, w, src, m, k, n);
}

/// `d_w[m x k] += g[m x n] . src[k x n]^T`: every (output, input) channel
/// pair gets the dot product of its gradient row and input row. Lane sums
/// are reduced in a fixed order, so results are deterministic.
pub fn matmul_t_acc(d_w: &mut [Real], g: &[Real], src: &[Real], m: usize, k: usize, n: usize) {
    assert_eq!(d_w.len(), m * k);
    assert_eq!(g.len(), m * n);
    assert_eq!(src.len(), k * n);
    for (grow, dw_row) in g.chunks_exact(n).zip(d_w.chunks_exact_mut(k)) {
        let mut srows = src.chunks_exact(n);
        let mut dcols = dw_row.chunks_exact_mut(4);
        for dw4 in &mut dcols {
            let (s0, s1, s2, s3) = (
                srows.next().expect("k rows"),
                srows.next().expect("k rows"),
                srows.next().expect("k rows"),
                srows.next().expect("k rows"),
            );
            let mut lanes = [[0.0 as Real; NB]; 4];
            let mut gc = grow.chunks_exact(NB);
            let mut c0 = s0.chunks_exact(NB);
            let mut c1 = s1.chunks_exact(NB);
            let mut c2 = s2.chunks_exact(NB);
            let mut c3 = s3.chunks_exact(NB);
            for gv in &mut gc {
                let v0 = c0.next().expect("same length");
                let v1 = c1.next().expect("same length");
                let v2 = c2.next().expect("same length");
                let v3 = c3.next().expect("same length");
                for l in 0..NB {
                    lanes[0][l] = fmadd(gv[l], v0[l], lanes[0][l]);
                    lanes[1][l] = fmadd(gv[l], v1[l], lanes[1][l]);
                    lanes[2][l] = fmadd(gv[l], v2[l], lanes[2][l]);
                    lanes[3][l] = fmadd(gv[l], v3[l], lanes[3][l]);
                }
            }
            let mut tail = [0.0 as Real; 4];
            for (j, &gv) in gc.remainder().iter().enumerate() {
                let j = n - n % NB + j;
                tail[0] = fmadd(gv, s0[j], tail[0]);
                tail[1] = fmadd(gv, s1[j], tail[1]);
                tail[2] = fmadd(gv, s2[j], tail[2]);
                tail[3] = fmadd(gv, s3[j], tail[3]);
            }
            for (q, d) in dw4.iter_mut().enumerate() {
                let mut s = tail[q];
                for l in 0..NB {
                    s += lanes[q][l];
                }
                *d += s;
            }
        }
        for d in dcols.into_remainder() {
            let srow = srows.next().expect("k rows");
            let mut lanes = [0.0 as Real; NB];
            let mut tail = 0.0;
            for (gv, sv) in grow.chunks_exact(NB).zip(srow.chunks_exact(NB)) {
                for l in 0..NB {
                    lanes[l] = fmadd(gv[l], sv[l], lanes[l]);
                }
            }
            let cut = n - n % NB;
            for (&gv, &sv) in grow[cut..].iter().zip(&srow[cut..]) {
                tail = fmadd(gv, sv, tail);
            }
            let mut s = tail;
            for l in 0..NB {
                s += lanes[l];
            }
            *d += s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axpy4_matches_repeated_axpy() {
        let xs: Vec<Vec<Real>> = (0..4)
            .map(|k| (0..17).map(|j| (k * 17 + j) as Real * 0.25 - 3.0).collect())
            .collect();
        let ws = [0.5, -1.25, 2.0, 0.125];
        let mut a = vec![1.0; 17];
        let mut b = a.clone();
        for k in 0..4 {
            axpy(&mut a, ws[k], &xs[k]);
        }
        axpy4(&mut b, ws[0], &xs[0], ws[1], &xs[1], ws[2], &xs[2], ws[3], &xs[3]);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn dot4_matches_repeated_dot() {
        let g: Vec<Real> = (0..11).map(|j| j as Real * 0.5 - 2.0).collect();
        let xs: Vec<Vec<Real>> = (0..4)
            .map(|k| (0..11).map(|j| ((k + 1) * (j + 1)) as Real * 0.1).collect())
            .collect();
        let mut acc = [1.0, 2.0, 3.0, 4.0];
        dot4_acc(&mut acc, &g, &xs[0], &xs[1], &xs[2], &xs[3]);
        for k in 0..4 {
            let want = (k + 1) as Real + dot(&g, &xs[k]);
            assert!((acc[k] - want).abs() < 1e-12);
        }
    }

    fn filled(len: usize, scale: Real) -> Vec<Real> {
        (0..len).map(|i| ((i * 7 + 3) % 13) as Real * scale - 0.4).collect()
    }

    /// Dimensions straddling the 4-row, 8-lane, and strip block boundaries.
    const SIZES: [(usize, usize, usize); 7] = [
        (1, 1, 1),
        (4, 8, 16),
        (5, 9, 11),
        (3, 2, 7),
        (8, 144, 56),
        (6, 5, 23),
        (4, 3, 512),
    ];

    #[test]
    fn matmul_bias_set_matches_triple_loop() {
        for (m, k, n) in SIZES {
            let w = filled(m * k, 0.05);
            let src = filled(k * n, 0.11);
            let bias = filled(m, 0.3);
            let mut dst = vec![Real::NAN; m * n];
            matmul_bias_set(&mut dst, &w, &src, &bias, m, k, n);
            for o in 0..m {
                for j in 0..n {
                    let mut want = bias[o];
                    for c in 0..k {
                        want += w[o * k + c] * src[c * n + j];
                    }
                    assert!((dst[o * n + j] - want).abs() < 1e-12, "{m}x{k}x{n} at {o},{j}");
                }
            }
        }
    }

    #[test]
    fn matmul_acc_adds_on_top() {
        for (m, k, n) in SIZES {
            let w = filled(m * k, 0.07);
            let src = filled(k * n, 0.09);
            let mut dst = filled(m * n, 0.2);
            let base = dst.clone();
            matmul_acc(&mut dst, &w, &src, m, k, n);
            for o in 0..m {
                for j in 0..n {
                    let mut want = base[o * n + j];
                    for c in 0..k {
                        want += w[o * k + c] * src[c * n + j];
                    }
                    assert!((dst[o * n + j] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn matmul_t_acc_matches_dot_rows() {
        for (m, k, n) in SIZES {
            let g = filled(m * n, 0.04);
            let src = filled(k * n, 0.06);
            let mut d_w = filled(m * k, 0.5);
            let base = d_w.clone();
            matmul_t_acc(&mut d_w, &g, &src, m, k, n);
            for o in 0..m {
                for c in 0..k {
                    let want = base[o * k + c] + dot(&g[o * n..][..n], &src[c * n..][..n]);
                    assert!(
                        (d_w[o * k + c] - want).abs() < 1e-10,
                        "{m}x{k}x{n} at {o},{c}"
                    );
                }
            }
        }
    }
}
