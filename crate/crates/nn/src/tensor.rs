//! Row-major dense tensor.

use crate::float::Float;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Float> Tensor<F> {
    pub fn new(shape: Vec<usize>, data: Vec<F>) -> Tensor<F> {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "tensor data does not match shape {shape:?}");
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor<F> {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![F::zero(); n],
        }
    }

    pub fn from_f32(shape: Vec<usize>, data: &[f32]) -> Tensor<F> {
        Tensor::new(shape, data.iter().map(|&x| F::of(x as f64)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    /// Row `i` of a 2-D tensor.
    pub fn row(&self, i: usize) -> &[F] {
        assert_eq!(self.shape.len(), 2);
        let w = self.shape[1];
        &self.data[i * w..(i + 1) * w]
    }

    /// Index of the largest value in each row of a 2-D tensor (first on ties).
    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.shape[0])
            .map(|i| {
                let r = self.row(i);
                let mut best = 0;
                for (j, &v) in r.iter().enumerate() {
                    if v > r[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

/// Numerically stable softmax over each row of `logits` (`n × k`).
pub fn softmax_rows<F: Float>(logits: &[F], k: usize) -> Vec<F> {
    let mut out = vec![F::zero(); logits.len()];
    for (src, dst) in logits.chunks_exact(k).zip(out.chunks_exact_mut(k)) {
        let m = src.iter().copied().fold(F::neg_infinity(), F::max);
        let mut s = F::zero();
        for (d, &x) in dst.iter_mut().zip(src) {
            *d = (x - m).exp();
            s += *d;
        }
        for d in dst.iter_mut() {
            *d /= s;
        }
    }
    out
}
