use std::f64::consts::PI;

use crate::autodiff::Tensor;
use crate::error::Result;

/// Rows of `x` ([P, d]) mapped to `[sin(2^k pi x), cos(2^k pi x)]` for
/// `k = 0..bands`, giving `[P, 2 * bands * d]`.
pub fn fourier_encode(x: &Tensor, bands: usize) -> Result<Tensor> {
    let (p, d) = x.dims2()?;
    let width = 2 * bands * d;
    let mut out = Vec::with_capacity(p * width);
    for i in 0..p {
        let row = x.row(i);
        for k in 0..bands {
            let f = (1u64 << k) as f64 * PI;
            out.extend(row.iter().map(|v| (f * v).sin()));
            out.extend(row.iter().map(|v| (f * v).cos()));
        }
    }
    Tensor::new(vec![p, width], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_and_half() {
        let z = fourier_encode(&Tensor::new(vec![1, 1], vec![0.0]).unwrap(), 2).unwrap();
        assert_eq!(z.data(), &[0.0, 1.0, 0.0, 1.0]);
        let h = fourier_encode(&Tensor::new(vec![1, 1], vec![0.5]).unwrap(), 1).unwrap();
        assert!((h.data()[0] - 1.0).abs() < 1e-15 && h.data()[1].abs() < 1e-15);
        let w = fourier_encode(&Tensor::zeros(vec![5, 3]), 4).unwrap();
        assert_eq!(w.shape(), &[5, 24]);
    }
}
