//! Iterative radix-2 FFT for power-of-two lengths.
//!
//! Only what circular cross correlation needs: an in-place complex
//! transform, its inverse, and a packing trick that gets the spectra of two
//! real sequences from a single complex transform.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Precomputed twiddles and bit-reversal table for one transform length.
#[derive(Debug, Clone)]
pub struct FftPlan {
    len: usize,
    twiddles: Vec<Complex64>,
    bitrev: Vec<usize>,
}

impl FftPlan {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::NonPowerOfTwoLength(len));
        }
        let bits = len.trailing_zeros();
        let bitrev = (0..len)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (usize::BITS - bits)
                }
            })
            .collect();
        // w^j = exp(-2 pi i j / len) for j < len/2
        let twiddles = (0..len / 2)
            .map(|j| Complex64::from_polar(1.0, -2.0 * PI * j as f64 / len as f64))
            .collect();
        Ok(Self {
            len,
            twiddles,
            bitrev,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// In-place forward transform, X[k] = sum_t x[t] exp(-2 pi i k t / n).
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.transform(buf, false);
    }

    /// In-place inverse transform, including the 1/n scale.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.transform(buf, true);
        let scale = 1.0 / self.len as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        assert_eq!(buf.len(), self.len, "buffer length does not match plan");
        let n = self.len;
        for i in 0..n {
            let j = self.bitrev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut half = 1;
        while half < n {
            let stride = n / (2 * half);
            for start in (0..n).step_by(2 * half) {
                for j in 0..half {
                    let mut w = self.twiddles[j * stride];
                    if inverse {
                        w = w.conj();
                    }
                    let a = buf[start + j];
                    let b = buf[start + j + half] * w;
                    buf[start + j] = a + b;
                    buf[start + j + half] = a - b;
                }
            }
            half *= 2;
        }
    }

    /// Spectrum of one real sequence.
    pub fn forward_real(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    /// Spectra of two real sequences from one complex transform of `x + i y`,
    /// split apart with conjugate symmetry:
    /// X[k] = (Z[k] + conj Z[-k]) / 2, Y[k] = (Z[k] - conj Z[-k]) / 2i.
    pub fn forward_real_pair(&self, x: &[f64], y: &[f64]) -> (Vec<Complex64>, Vec<Complex64>) {
        assert_eq!(x.len(), self.len);
        assert_eq!(y.len(), self.len);
        let mut z: Vec<Complex64> = x
            .iter()
            .zip(y)
            .map(|(&a, &b)| Complex64::new(a, b))
            .collect();
        self.forward(&mut z);
        let n = self.len;
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for k in 0..n {
            let zk = z[k];
            let zm = z[(n - k) % n].conj();
            xs.push((zk + zm) * 0.5);
            ys.push((zk - zm) * Complex64::new(0.0, -0.5));
        }
        (xs, ys)
    }
}
