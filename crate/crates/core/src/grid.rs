//! Uniform half-step-offset momentum grid over one Brillouin zone.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// `N` samples `k_j = -pi + (j + 1/2) 2pi/N`.
///
/// The offset keeps every sample away from `k = 0, ±pi`, and for the
/// harmonics accepted by [`KGrid::check_harmonic`] away from every zero of
/// `sin(n k)`. The grid is exactly antisymmetric: `k[N-1-j] == -k[j]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KGrid {
    count: usize,
}

impl KGrid {
    pub const MIN_POINTS: usize = 64;
    pub const DEFAULT_POINTS: usize = 4096;
    /// Upper bound for caller-driven refinement.
    pub const MAX_POINTS: usize = 1 << 20;

    pub fn new(count: usize) -> Result<Self> {
        if count < Self::MIN_POINTS {
            return Err(Error::InvalidGrid(format!(
                "grid needs at least {} points, got {count}",
                Self::MIN_POINTS
            )));
        }
        if count > Self::MAX_POINTS {
            return Err(Error::InvalidGrid(format!(
                "grid is capped at {} points, got {count}",
                Self::MAX_POINTS
            )));
        }
        Ok(Self { count })
    }

    /// Builds a grid and checks it against every harmonic in `harmonics`.
    pub fn for_harmonics(count: usize, harmonics: &[u32]) -> Result<Self> {
        let grid = Self::new(count)?;
        for &n in harmonics {
            grid.check_harmonic(n)?;
        }
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.count as f64
    }

    #[inline]
    pub fn k(&self, j: usize) -> f64 {
        debug_assert!(j < self.count);
        (2.0 * j as f64 + 1.0 - self.count as f64) * PI / self.count as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.count).map(|j| self.k(j)).collect()
    }

    /// Index of the sample at `-k[j]`.
    pub fn mirror_index(&self, j: usize) -> usize {
        self.count - 1 - j
    }

    /// Grid with twice as many points.
    pub fn refined(&self) -> Result<Self> {
        Self::new(self.count * 2)
    }

    /// `sin(n k_j) = 0` iff `N | n (2j+1)`. An odd multiple of `N / gcd(N, n)`
    /// exists exactly when that quotient is odd.
    pub fn check_harmonic(&self, n: u32) -> Result<()> {
        if n == 0 {
            return Ok(());
        }
        let n = n as usize;
        if 2 * n > self.count {
            return Err(Error::InvalidGrid(format!(
                "harmonic {n} needs at least {} points, grid has {}",
                2 * n,
                self.count
            )));
        }
        let q = self.count / gcd(self.count, n);
        if q % 2 == 1 {
            return Err(Error::InvalidGrid(format!(
                "grid of {} points samples a zero of sin({n} k); use a count with a larger power of two",
                self.count
            )));
        }
        Ok(())
    }
}

impl Default for KGrid {
    fn default() -> Self {
        Self {
            count: Self::DEFAULT_POINTS,
        }
    }
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}
