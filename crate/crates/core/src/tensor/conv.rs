use alloc::format;

use super::Scalar;
use crate::error::{shape_err, Result};

/// `floor((extent + 2·padding − kernel) / stride) + 1`, or `None` when the
/// kernel does not fit the padded extent or the stride is zero.
pub fn conv_output_extent(
    extent: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Option<usize> {
    let padded = extent + 2 * padding;
    if stride == 0 || kernel == 0 || kernel > padded {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// `(extent − 1)·stride − 2·padding + kernel + output_padding`, or `None` when
/// that is not positive or `output_padding ≥ stride`.
pub fn conv_transpose_output_extent(
    extent: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Option<usize> {
    if stride == 0 || kernel == 0 || extent == 0 || output_padding >= stride {
        return None;
    }
    let out = ((extent - 1) * stride + kernel + output_padding) as isize - 2 * padding as isize;
    (out > 0).then_some(out as usize)
}

/// Index mapping between a "big" grid (the input of a convolution, the output
/// of its transpose) and the "small" grid it is correlated onto.
///
/// `im2col` lays the big grid out as a `(channels·kvol) × small_len` matrix;
/// `col2im_add` is its exact adjoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub big: [usize; 3],
    pub small: [usize; 3],
    pub kernel: [usize; 3],
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn for_conv(
        channels: usize,
        input: [usize; 3],
        kernel: [usize; 3],
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let mut small = [0; 3];
        for a in 0..3 {
            small[a] = conv_output_extent(input[a], kernel[a], stride, padding).ok_or_else(|| {
                shape_err(
                    "conv3",
                    format!(
                        "kernel {kernel:?} with stride {stride} and padding {padding} does not fit input extent {input:?}"
                    ),
                )
            })?;
        }
        Ok(Self {
            channels,
            big: input,
            small,
            kernel,
            stride,
            padding,
        })
    }

    pub fn for_transpose(
        channels_out: usize,
        input: [usize; 3],
        kernel: [usize; 3],
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<Self> {
        let mut big = [0; 3];
        for a in 0..3 {
            big[a] = conv_transpose_output_extent(input[a], kernel[a], stride, padding, output_padding)
                .ok_or_else(|| {
                    shape_err(
                        "conv3_transpose",
                        format!(
                            "kernel {kernel:?}, stride {stride}, padding {padding}, output_padding {output_padding} invalid for input extent {input:?}"
                        ),
                    )
                })?;
        }
        let geom = Self {
            channels: channels_out,
            big,
            small: input,
            kernel,
            stride,
            padding,
        };
        debug_assert_eq!(
            Self::for_conv(channels_out, big, kernel, stride, padding).map(|g| g.small),
            Ok(input)
        );
        Ok(geom)
    }

    pub fn kernel_volume(&self) -> usize {
        self.kernel.iter().product()
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel_volume()
    }

    pub fn small_len(&self) -> usize {
        self.small.iter().product()
    }

    pub fn big_len(&self) -> usize {
        self.big.iter().product()
    }

    /// Small-grid index range along one axis whose tap `k` lands inside the big grid.
    fn valid(&self, axis: usize, k: usize) -> (usize, usize) {
        let (s, p) = (self.stride as isize, self.padding as isize);
        let n_big = self.big[axis] as isize;
        let k = k as isize;
        // need 0 <= o*s + k - p <= n_big - 1
        let lo = if p > k { (p - k + s - 1) / s } else { 0 };
        let hi_num = n_big - 1 + p - k;
        let hi = if hi_num < 0 {
            0
        } else {
            (hi_num / s + 1).min(self.small[axis] as isize)
        };
        (lo as usize, (hi.max(lo)) as usize)
    }

    /// Writes the `col_rows × small_len` patch matrix of one sample into `col`.
    pub fn im2col<T: Scalar>(&self, x: &[T], col: &mut [T]) {
        debug_assert_eq!(x.len(), self.channels * self.big_len());
        debug_assert_eq!(col.len(), self.col_rows() * self.small_len());
        col.fill(T::zero());
        self.walk(|x_idx, col_idx, len, step| {
            for i in 0..len {
                col[col_idx + i] = x[x_idx + i * step];
            }
        });
    }

    /// Adds the patch matrix `col` back onto the big grid `x`.
    pub fn col2im_add<T: Scalar>(&self, col: &[T], x: &mut [T]) {
        debug_assert_eq!(x.len(), self.channels * self.big_len());
        debug_assert_eq!(col.len(), self.col_rows() * self.small_len());
        self.walk(|x_idx, col_idx, len, step| {
            for i in 0..len {
                x[x_idx + i * step] += col[col_idx + i];
            }
        });
    }

    /// Visits every contiguous run of valid taps as `(x_start, col_start, len, x_step)`.
    fn walk(&self, mut visit: impl FnMut(usize, usize, usize, usize)) {
        let [bd, bh, bw] = self.big;
        let [sd, sh, sw] = self.small;
        let [kd_n, kh_n, kw_n] = self.kernel;
        let small_len = self.small_len();
        let (s, p) = (self.stride, self.padding);
        let mut row = 0;
        for c in 0..self.channels {
            let x_chan = c * bd * bh * bw;
            for kd in 0..kd_n {
                let (d_lo, d_hi) = self.valid(0, kd);
                for kh in 0..kh_n {
                    let (h_lo, h_hi) = self.valid(1, kh);
                    for kw in 0..kw_n {
                        let (w_lo, w_hi) = self.valid(2, kw);
                        let col_row = row * small_len;
                        row += 1;
                        if w_hi <= w_lo {
                            continue;
                        }
                        for od in d_lo..d_hi {
                            let id = od * s + kd - p;
                            for oh in h_lo..h_hi {
                                let ih = oh * s + kh - p;
                                let iw = w_lo * s + kw - p;
                                let x_idx = x_chan + (id * bh + ih) * bw + iw;
                                let col_idx = col_row + (od * sh + oh) * sw + w_lo;
                                visit(x_idx, col_idx, w_hi - w_lo, s);
                            }
                        }
                    }
                }
            }
        }
        debug_assert_eq!(row, self.col_rows());
        let _ = sd;
    }
}
