use alloc::vec::Vec;

use crate::{Error, Result, Scalar, Tensor};

/// Winning input offsets of a 2x2 max pool, plus the input shape.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolIndex {
    input_shape: Vec<usize>,
    argmax: Vec<u32>,
}

/// Non-overlapping 2x2 max pool with floor semantics (a trailing odd row or
/// column is dropped). Ties go to the first element in scan order.
pub fn maxpool2d<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, PoolIndex)> {
    let (b, c, h, w) = x.dims4()?;
    let (oh, ow) = (h / 2, w / 2);
    if oh == 0 || ow == 0 {
        return Err(Error::OutputEmpty(x.shape().to_vec()));
    }
    let mut y = Tensor::zeros(&[b, c, oh, ow]);
    let mut argmax = Vec::with_capacity(b * c * oh * ow);
    let src = x.data();
    let dst = y.data_mut();
    let mut o = 0;
    for plane in 0..b * c {
        let base = plane * h * w;
        for yy in 0..oh {
            for xx in 0..ow {
                let i0 = base + 2 * yy * w + 2 * xx;
                let mut best = i0;
                for cand in [i0 + 1, i0 + w, i0 + w + 1] {
                    if src[cand] > src[best] {
                        best = cand;
                    }
                }
                dst[o] = src[best];
                argmax.push(best as u32);
                o += 1;
            }
        }
    }
    Ok((y, PoolIndex { input_shape: x.shape().to_vec(), argmax }))
}

/// Routes each output gradient to the input element that won the max.
pub fn maxpool2d_backward<T: Scalar>(index: &PoolIndex, dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = Tensor::zeros(&index.input_shape);
    let d = dx.data_mut();
    for (&i, &g) in index.argmax.iter().zip(dy.data()) {
        d[i as usize] = d[i as usize] + g;
    }
    dx
}
