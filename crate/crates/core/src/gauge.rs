//! Branch-continuous gauge angles over the Brillouin zone and the integer
//! winding number they carry.
//!
//! The angle is read off the lower-band Bloch vector `b = -d/|d|` as half its
//! polar angle inside the model's plane. For planes containing `σ_z` this is
//! the lower-band mixing angle `θ₋(k)`; for the `xy` plane it is half the
//! relative phase between the two spinor components. Both are invisible to a
//! per-k phase of the eigenvector.
//!
//! The winding is computed twice: once by summing unwrapped steps (always an
//! integer multiple of π when unwrapping succeeds) and once by quadrature of
//! the skew-polarization integrand `dφ/dk`. The latter carries the residual.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::KGrid;
use crate::io::{fmt_real, write_rows};
use crate::models::{bloch_vector, BandPair, ModelSpec, Plane};

/// Winding residual above which the integer is rejected.
pub const MAX_WINDING_RESIDUAL: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleKind {
    /// Mixing angle θ₋(k); plane contains `σ_z`.
    ThetaBranch,
    /// Half relative phase (α − β)/2; `xy` plane.
    PhaseBranch,
}

impl AngleKind {
    pub fn for_plane(plane: Plane) -> Self {
        if plane.contains_z() {
            AngleKind::ThetaBranch
        } else {
            AngleKind::PhaseBranch
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AngleKind::ThetaBranch => "theta_branch",
            AngleKind::PhaseBranch => "phase_branch",
        }
    }
}

/// Gauge angle of a lower-band spinor, in `(-π/2, π/2]`.
pub fn raw_angle(plane: Plane, minus: &[num_complex::Complex64; 2]) -> f64 {
    let b = bloch_vector(minus);
    let (l, t) = plane.angle_axes();
    0.5 * b[t].atan2(b[l])
}

/// `dφ/dk` from the d-vector and its derivative (cartesian components).
pub fn angular_rate(plane: Plane, d: [f64; 3], d_prime: [f64; 3]) -> f64 {
    let (l, t) = plane.angle_axes();
    let norm_sq = d[l] * d[l] + d[t] * d[t];
    0.5 * (d[l] * d_prime[t] - d[t] * d_prime[l]) / norm_sq
}

/// Makes a sequence continuous by shifting each sample by a multiple of
/// `period` so that consecutive outputs differ by less than `period / 2`.
pub fn unwrap_sequence(raw: &[f64], period: f64) -> Result<Vec<f64>> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::InvalidInput(format!("unwrap period must be positive, got {period}")));
    }
    let mut out = Vec::with_capacity(raw.len());
    let Some(&first) = raw.first() else {
        return Ok(out);
    };
    if !first.is_finite() {
        return Err(Error::UnwrapFailure { index: 0, step: first });
    }
    out.push(first);
    for (j, w) in raw.windows(2).enumerate() {
        let step = wrap_step(w[1] - w[0], period);
        if step.is_nan() || step.abs() >= 0.5 * period {
            return Err(Error::UnwrapFailure { index: j + 1, step });
        }
        let prev = out[j];
        out.push(prev + step);
    }
    Ok(out)
}

/// Representative of `step` modulo `period` closest to zero.
fn wrap_step(step: f64, period: f64) -> f64 {
    step - period * (step / period).round()
}

/// Continuous gauge angles on a grid together with the eigen-data they came
/// from.
#[derive(Clone, Debug)]
pub struct AngleProfile {
    grid: KGrid,
    plane: Plane,
    kind: AngleKind,
    angles: Vec<f64>,
    rates: Vec<f64>,
    closure: f64,
    bands: Vec<BandPair>,
}

impl AngleProfile {
    /// Builds a profile from per-k eigenpairs and angular rates.
    ///
    /// The unwrapped step between neighbours (and across the `k = ±π` seam)
    /// must agree with the trapezoid integral of the rate to within π/4;
    /// larger disagreements mean the grid aliased a fast rotation.
    pub fn from_bands(
        grid: KGrid,
        plane: Plane,
        bands: Vec<BandPair>,
        rates: Vec<f64>,
    ) -> Result<Self> {
        let n = grid.len();
        if bands.len() != n || rates.len() != n {
            return Err(Error::InvalidInput(format!(
                "profile needs {n} samples, got {} bands and {} rates",
                bands.len(),
                rates.len()
            )));
        }
        let raw: Vec<f64> = bands.iter().map(|b| raw_angle(plane, &b.minus)).collect();
        let angles = unwrap_sequence(&raw, PI)?;
        let closure = wrap_step(angles[0] - angles[n - 1], PI);

        let h = grid.spacing();
        for j in 0..n {
            let next = (j + 1) % n;
            let step = if next == 0 { closure } else { angles[next] - angles[j] };
            let expected = 0.5 * h * (rates[j] + rates[next]);
            if step.abs() >= FRAC_PI_2 || (step - expected).abs() > FRAC_PI_4 {
                return Err(Error::UnwrapFailure { index: next, step });
            }
        }

        Ok(Self {
            grid,
            plane,
            kind: AngleKind::for_plane(plane),
            angles,
            rates,
            closure,
            bands,
        })
    }

    pub fn grid(&self) -> KGrid {
        self.grid
    }

    pub fn plane(&self) -> Plane {
        self.plane
    }

    pub fn kind(&self) -> AngleKind {
        self.kind
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn bands(&self) -> &[BandPair] {
        &self.bands
    }

    /// Step from the last sample back to the first, across `k = ±π`.
    pub fn closure(&self) -> f64 {
        self.closure
    }

    /// Total change of the angle around the closed zone.
    pub fn total_change(&self) -> f64 {
        self.angles[self.angles.len() - 1] - self.angles[0] + self.closure
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let kind = self.kind.as_str();
        let rows = self
            .angles
            .iter()
            .enumerate()
            .map(|(j, &a)| vec![fmt_real(self.grid.k(j)), fmt_real(a), kind.to_string()]);
        write_rows(w, &["k", "angle", "kind"], rows)
    }
}

/// Rejects d-vectors with weight outside `plane`.
pub(crate) fn check_in_plane(spec: &ModelSpec, d: [f64; 3], plane: Plane, k: f64) -> Result<()> {
    let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    for (axis, &c) in d.iter().enumerate() {
        if !plane.contains_axis(axis) && c.abs() > 1e-12 * norm {
            return Err(Error::InvalidInput(format!(
                "{spec} has a component along axis {axis} at k = {k}, outside plane {plane}"
            )));
        }
    }
    Ok(())
}

/// Gauge-angle profile of `spec` in its own plane.
pub fn angle_profile(spec: &ModelSpec, grid: KGrid) -> Result<AngleProfile> {
    angle_profile_in_plane(spec, grid, spec.plane())
}

/// Gauge-angle profile measured in `plane`, which must contain every nonzero
/// component of the model's d-vector.
pub fn angle_profile_in_plane(spec: &ModelSpec, grid: KGrid, plane: Plane) -> Result<AngleProfile> {
    spec.validate()?;
    if let Some(n) = spec.harmonic() {
        grid.check_harmonic(n)?;
    }
    let mut bands = Vec::with_capacity(grid.len());
    let mut rates = Vec::with_capacity(grid.len());
    for j in 0..grid.len() {
        let k = grid.k(j);
        let d = spec.d_vector(k);
        let dc = d.cartesian();
        check_in_plane(spec, dc, plane, k)?;
        bands.push(spec.bands(k)?);
        rates.push(angular_rate(plane, dc, spec.d_vector_derivative(k).cartesian()));
    }
    AngleProfile::from_bands(grid, plane, bands, rates)
}

/// Integer winding with its quadrature cross-check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Winding {
    pub value: i64,
    /// Skew-polarization integral in units of π.
    pub raw: f64,
    /// `|raw - value|`.
    pub residual: f64,
}

/// Winding number of a profile: total angle change over the zone divided by π.
///
/// The sign follows the angle orientation; the 1D QWZ family winds with sign
/// `-n`, SSH with `+n`.
pub fn winding_number(profile: &AngleProfile) -> Result<Winding> {
    winding_from_parts(profile.total_change(), profile.rates(), profile.grid().spacing())
}

pub(crate) fn winding_from_parts(total_change: f64, rates: &[f64], h: f64) -> Result<Winding> {
    let topo = (total_change / PI).round();
    let raw = rates.iter().sum::<f64>() * h / PI;
    let residual = (raw - topo).abs();
    if residual.is_nan() || residual >= MAX_WINDING_RESIDUAL {
        return Err(Error::NonIntegerWinding { raw, residual });
    }
    Ok(Winding {
        value: topo as i64,
        raw,
        residual,
    })
}

/// Retries on a doubled grid after unwrap or integer failures, up to
/// [`KGrid::MAX_POINTS`].
pub fn winding_number_adaptive(spec: &ModelSpec, start: KGrid) -> Result<(KGrid, Winding)> {
    let mut grid = start;
    loop {
        let attempt = angle_profile(spec, grid).and_then(|p| winding_number(&p));
        match attempt {
            Ok(w) => return Ok((grid, w)),
            Err(e @ (Error::UnwrapFailure { .. } | Error::NonIntegerWinding { .. })) => {
                if grid.len() * 2 > KGrid::MAX_POINTS {
                    return Err(e);
                }
                grid = grid.refined()?;
            }
            Err(e) => return Err(e),
        }
    }
}
