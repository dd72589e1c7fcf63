use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::{Error, Result};

/// Dense `(batch, channels, height, width)` array, row-major with width
/// fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    dims: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Tensor4 {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn filled(dims: [usize; 4], value: f64) -> Self {
        Tensor4 {
            dims,
            data: vec![value; dims.iter().product()],
        }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<f64>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if data.len() != expected {
            return Err(Error::shape(alloc::format!(
                "{} values for dims {:?} (expected {})",
                data.len(),
                dims,
                expected
            )));
        }
        Ok(Tensor4 { dims, data })
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    pub fn channels(&self) -> usize {
        self.dims[1]
    }

    pub fn height(&self) -> usize {
        self.dims[2]
    }

    pub fn width(&self) -> usize {
        self.dims[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    fn plane_len(&self) -> usize {
        self.dims[2] * self.dims[3]
    }

    /// One `height × width` plane.
    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let len = self.plane_len();
        let start = (n * self.dims[1] + c) * len;
        &self.data[start..start + len]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let len = self.plane_len();
        let start = (n * self.dims[1] + c) * len;
        &mut self.data[start..start + len]
    }

    /// All channels of sample `n`, contiguous.
    pub fn sample(&self, n: usize) -> &[f64] {
        let len = self.dims[1] * self.plane_len();
        &self.data[n * len..(n + 1) * len]
    }

    fn offset(&self, idx: [usize; 4]) -> usize {
        debug_assert!(idx.iter().zip(self.dims.iter()).all(|(i, d)| i < d));
        ((idx[0] * self.dims[1] + idx[1]) * self.dims[2] + idx[2]) * self.dims[3] + idx[3]
    }

    pub fn dot(&self, other: &Tensor4) -> Result<f64> {
        self.check_same_dims(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor4 {
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub(crate) fn check_same_dims(&self, other: &Tensor4) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::shape(alloc::format!(
                "dims {:?} vs {:?}",
                self.dims,
                other.dims
            )));
        }
        Ok(())
    }
}

impl Index<[usize; 4]> for Tensor4 {
    type Output = f64;

    fn index(&self, idx: [usize; 4]) -> &f64 {
        &self.data[self.offset(idx)]
    }
}

impl IndexMut<[usize; 4]> for Tensor4 {
    fn index_mut(&mut self, idx: [usize; 4]) -> &mut f64 {
        let o = self.offset(idx);
        &mut self.data[o]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor4::from_vec([1, 2, 3, 4], vec![0.0; 24]).is_ok());
        assert!(matches!(
            Tensor4::from_vec([1, 2, 3, 4], vec![0.0; 23]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn indexing_is_row_major_width_fastest() {
        let t = Tensor4::from_vec([2, 2, 2, 3], (0..24).map(f64::from).collect()).unwrap();
        assert_eq!(t[[0, 0, 0, 1]], 1.0);
        assert_eq!(t[[0, 0, 1, 0]], 3.0);
        assert_eq!(t[[0, 1, 0, 0]], 6.0);
        assert_eq!(t[[1, 0, 0, 0]], 12.0);
        assert_eq!(t.plane(1, 1), &[18.0, 19.0, 20.0, 21.0, 22.0, 23.0]);
    }
}
