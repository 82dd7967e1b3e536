//! Register-tiled same-size convolution for x86-64 with AVX2 and FMA.
//!
//! Each tile holds `R` output channels × `4V` consecutive positions of the
//! padded grid in registers while every input channel and tap streams
//! through, so the output is written once instead of once per tap.

/// Adds the K×K edge-clamped cross-correlation of `input` into `out`.
/// Returns false, leaving `out` untouched, when the CPU lacks the
/// instructions.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_accumulate(
    weight: &[f64],
    c_out: usize,
    c_in: usize,
    k: usize,
    input: &[f64],
    height: usize,
    width: usize,
    out: &mut [f64],
) -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        if is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma") {
            // SAFETY: the required features were detected above.
            unsafe { x86::conv(weight, c_out, c_in, k, input, height, width, out) };
            return true;
        }
    }
    let _ = (weight, c_out, c_in, k, input, height, width, out);
    false
}

#[cfg(target_arch = "x86_64")]
mod x86 {
    use std::arch::x86_64::*;

    const V: usize = 2;
    const TILE: usize = 4 * V;
    const ROWS: usize = 4;
    const CHUNK: usize = 16 * TILE;

    struct Layout<'a> {
        padded: &'a [f64],
        offsets: &'a [usize],
        c_in: usize,
        stride: usize,
        span: usize,
    }

    #[allow(clippy::too_many_arguments)]
    #[target_feature(enable = "avx2,fma")]
    pub(super) unsafe fn conv(
        weight: &[f64],
        c_out: usize,
        c_in: usize,
        k: usize,
        input: &[f64],
        height: usize,
        width: usize,
        out: &mut [f64],
    ) {
        let r = k / 2;
        let (hp, wp) = (height + 2 * r, width + 2 * r);
        let n = (height - 1) * wp + width;
        let span = n.div_ceil(TILE) * TILE;
        // room for the widest tap offset past the last tile
        let stride = span + (k - 1) * (wp + 1);
        let mut padded = vec![0.0; c_in * stride];
        for (src, dst) in input
            .chunks_exact(height * width)
            .zip(padded.chunks_exact_mut(stride))
        {
            for y in 0..hp {
                let sy = y.saturating_sub(r).min(height - 1);
                let row = &src[sy * width..(sy + 1) * width];
                let d = &mut dst[y * wp..(y + 1) * wp];
                d[..r].fill(row[0]);
                d[r..r + width].copy_from_slice(row);
                d[r + width..].fill(row[width - 1]);
            }
        }
        let area = k * k;
        let rows = ROWS;
        // weights regrouped per block of output rows, then input channel and
        // tap, so a tile's coefficients are adjacent and a block is contiguous
        let mut weights = Vec::with_capacity(c_out * c_in * area);
        let mut o0 = 0;
        while o0 < c_out {
            let block = rows.min(c_out - o0);
            for i in 0..c_in {
                for tap in 0..area {
                    for o in o0..o0 + block {
                        weights.push(weight[(o * c_in + i) * area + tap]);
                    }
                }
            }
            o0 += block;
        }
        let offsets: Vec<usize> = (0..area).map(|tap| (tap / k) * wp + tap % k).collect();
        let layout = Layout {
            padded: &padded,
            offsets: &offsets,
            c_in,
            stride,
            span,
        };
        let mut acc = vec![0.0; c_out * span];
        // a chunk of positions across all input planes stays cache resident
        // while every output block consumes it
        let mut start = 0;
        while start < span {
            let end = (start + CHUNK).min(span);
            let mut o0 = 0;
            while o0 < c_out {
                let block = rows.min(c_out - o0);
                let w = &weights[o0 * c_in * area..(o0 + block) * c_in * area];
                let a = &mut acc[o0 * span..(o0 + block) * span];
                match block {
                    6 => tiles::<6>(&layout, w, a, start, end),
                    5 => tiles::<5>(&layout, w, a, start, end),
                    4 => tiles::<4>(&layout, w, a, start, end),
                    3 => tiles::<3>(&layout, w, a, start, end),
                    2 => tiles::<2>(&layout, w, a, start, end),
                    _ => tiles::<1>(&layout, w, a, start, end),
                }
                o0 += block;
            }
            start = end;
        }
        let m = height * width;
        for (dst, src) in out.chunks_exact_mut(m).zip(acc.chunks_exact(span)) {
            for y in 0..height {
                for (d, s) in dst[y * width..(y + 1) * width]
                    .iter_mut()
                    .zip(&src[y * wp..y * wp + width])
                {
                    *d += s;
                }
            }
        }
    }

    #[target_feature(enable = "avx2,fma")]
    unsafe fn tiles<const R: usize>(
        l: &Layout,
        weights: &[f64],
        acc: &mut [f64],
        start: usize,
        end: usize,
    ) {
        let area = l.offsets.len();
        debug_assert!(
            weights.len() == R * l.c_in * area && acc.len() == R * l.span && end <= l.span
        );
        let mut j = start;
        while j < end {
            let mut sum = [[_mm256_setzero_pd(); V]; R];
            let mut c = weights.as_ptr();
            for i in 0..l.c_in {
                // SAFETY: j + TILE ≤ span and offsets ≤ (k−1)(wp+1), so every
                // read stays inside plane i of length `stride`; `c` walks the
                // R·C_in·K² block coefficients exactly once.
                let plane = l.padded.as_ptr().add(i * l.stride + j);
                for &off in l.offsets {
                    let src = plane.add(off);
                    let mut x = [_mm256_setzero_pd(); V];
                    for (v, xv) in x.iter_mut().enumerate() {
                        *xv = _mm256_loadu_pd(src.add(4 * v));
                    }
                    for (r, row) in sum.iter_mut().enumerate() {
                        let b = _mm256_broadcast_sd(&*c.add(r));
                        for (acc_v, &xv) in row.iter_mut().zip(&x) {
                            *acc_v = _mm256_fmadd_pd(b, xv, *acc_v);
                        }
                    }
                    c = c.add(R);
                }
            }
            for (r, row) in sum.iter().enumerate() {
                let dst = acc.as_mut_ptr().add(r * l.span + j);
                for (v, &s) in row.iter().enumerate() {
                    _mm256_storeu_pd(dst.add(4 * v), s);
                }
            }
            j += TILE;
        }
    }
}
