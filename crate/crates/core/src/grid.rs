//! Dense 3D grid storage with x-fastest linear layout.
//!
//! The linear index of voxel (x, y, z) is `(z * ny + y) * nx + x`, matching
//! the on-disk layout of the volume format (see `volume`).

/// Dense 3D array over `shape = [nx, ny, nz]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid3<T> {
    shape: [usize; 3],
    data: Vec<T>,
}

impl<T: Copy> Grid3<T> {
    pub fn new(shape: [usize; 3], fill: T) -> Self {
        let len = shape[0]
            .checked_mul(shape[1])
            .and_then(|v| v.checked_mul(shape[2]))
            .expect("grid shape overflows usize");
        Grid3 {
            shape,
            data: vec![fill; len],
        }
    }

    pub fn from_vec(shape: [usize; 3], data: Vec<T>) -> Self {
        assert_eq!(data.len(), shape[0] * shape[1] * shape[2]);
        Grid3 { shape, data }
    }

    #[inline]
    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.shape[0] && y < self.shape[1] && z < self.shape[2]);
        (z * self.shape[1] + y) * self.shape[0] + x
    }

    /// Inverse of `index`; returns (x, y, z).
    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let nx = self.shape[0];
        let ny = self.shape[1];
        let x = idx % nx;
        let y = (idx / nx) % ny;
        let z = idx / (nx * ny);
        (x, y, z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> T {
        self.data[self.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: T) {
        let i = self.index(x, y, z);
        self.data[i] = v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Mutable z-slabs (contiguous by layout), for slab-parallel passes.
    pub fn slabs_mut(&mut self) -> impl Iterator<Item = (usize, &mut [T])> {
        let slab = self.shape[0] * self.shape[1];
        self.data.chunks_mut(slab).enumerate()
    }
}

impl<T: Copy + PartialEq> Grid3<T> {
    /// Number of elements equal to `v`.
    pub fn count(&self, v: T) -> usize {
        self.data.iter().filter(|&&x| x == v).count()
    }
}
