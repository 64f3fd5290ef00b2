//! Projection of the pre-quench lower band onto the post-quench bands.
//!
//! `|c₊(k)|² = |⟨ψ_f⁺(k)|ψ_i⁻(k)⟩|²` is computed either from numerically
//! diagonalized eigenvectors or from gauge angles. For two models in the same
//! Pauli plane the angle route reduces to `sin²(φ_i − φ_f)`; the general
//! two-band expression (valid for any pair) is [`general_overlap`].

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gauge::{angle_profile_in_plane, AngleKind, AngleProfile};
use crate::grid::KGrid;
use crate::io::{fmt_real, write_rows};
use crate::models::{inner, BandPair, ModelSpec, Plane};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapMethod {
    ClosedForm,
    DirectInnerProduct,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OverlapOptions {
    /// Compute cross-plane quenches anyway. The CP theorem does not cover
    /// them, so the resulting profile refuses exact counting.
    pub allow_cross_plane: bool,
}

/// `|c₊|²`, `|c₋|²` and the continuous angle difference on a grid.
#[derive(Clone, Debug)]
pub struct OverlapProfile {
    grid: KGrid,
    method: OverlapMethod,
    plane: Option<Plane>,
    c_plus_sq: Vec<f64>,
    c_minus_sq: Vec<f64>,
    delta_angle: Vec<f64>,
    delta_rate: Vec<f64>,
    delta_closure: f64,
}

impl OverlapProfile {
    pub fn grid(&self) -> KGrid {
        self.grid
    }

    pub fn method(&self) -> OverlapMethod {
        self.method
    }

    /// Shared plane of both models, `None` for an allowed cross-plane quench.
    pub fn plane(&self) -> Option<Plane> {
        self.plane
    }

    pub fn kind(&self) -> Option<AngleKind> {
        self.plane.map(AngleKind::for_plane)
    }

    pub fn c_plus_sq(&self) -> &[f64] {
        &self.c_plus_sq
    }

    pub fn c_minus_sq(&self) -> &[f64] {
        &self.c_minus_sq
    }

    /// `φ_i(k) − φ_f(k)`, continuous along the grid.
    pub fn delta_angle(&self) -> &[f64] {
        &self.delta_angle
    }

    /// `d(φ_i − φ_f)/dk`.
    pub fn delta_rate(&self) -> &[f64] {
        &self.delta_rate
    }

    /// Change of the angle difference across the `k = ±π` seam.
    pub fn delta_closure(&self) -> f64 {
        self.delta_closure
    }

    /// Total change of `φ_i − φ_f` around the zone.
    pub fn delta_total(&self) -> f64 {
        let n = self.delta_angle.len();
        self.delta_angle[n - 1] - self.delta_angle[0] + self.delta_closure
    }

    /// Copy with `c_plus_sq` replaced (and `c_minus_sq` kept complementary);
    /// used to probe detectors with corrupted data.
    pub fn with_c_plus_sq(&self, c_plus_sq: Vec<f64>) -> Result<Self> {
        if c_plus_sq.len() != self.grid.len() {
            return Err(Error::InvalidInput("sample count does not match grid".into()));
        }
        let c_minus_sq = c_plus_sq.iter().map(|p| 1.0 - p).collect();
        Ok(Self {
            c_plus_sq,
            c_minus_sq,
            ..self.clone()
        })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let rows = (0..self.grid.len()).map(|j| {
            vec![
                fmt_real(self.grid.k(j)),
                fmt_real(self.c_plus_sq[j]),
                fmt_real(self.c_minus_sq[j]),
                fmt_real(self.delta_angle[j]),
            ]
        });
        write_rows(w, &["k", "c_plus_sq", "c_minus_sq", "delta_angle"], rows)
    }
}

/// `(|⟨ψ_f⁺|ψ_i⁻⟩|², |⟨ψ_f⁻|ψ_i⁻⟩|²)`.
pub fn direct_overlap(initial: &BandPair, final_bands: &BandPair) -> (f64, f64) {
    (
        inner(&final_bands.plus, &initial.minus).norm_sqr(),
        inner(&final_bands.minus, &initial.minus).norm_sqr(),
    )
}

/// Direct overlaps at a single momentum.
pub fn overlap_at(spec_i: &ModelSpec, spec_f: &ModelSpec, k: f64) -> Result<(f64, f64)> {
    Ok(direct_overlap(&spec_i.bands(k)?, &spec_f.bands(k)?))
}

/// Upper-band spinor written as `(cos θ e^{iα}, sin θ e^{iβ})`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpinorAngles {
    /// θ in `[0, π/2]`.
    pub theta: f64,
    /// α − β.
    pub relative_phase: f64,
}

impl SpinorAngles {
    pub fn from_spinor(v: &[num_complex::Complex64; 2]) -> Self {
        let theta = v[1].norm().atan2(v[0].norm());
        let relative_phase = if v[0].norm() > 0.0 && v[1].norm() > 0.0 {
            v[0].arg() - v[1].arg()
        } else {
            0.0
        };
        Self {
            theta,
            relative_phase,
        }
    }
}

/// General two-band overlap
/// `sin²(θ_f − θ_i) + sin 2θ_f sin 2θ_i sin²(½[(α_i − β_i) − (α_f − β_f)])`,
/// with both states parametrized through their upper bands.
pub fn general_overlap(initial_upper: SpinorAngles, final_upper: SpinorAngles) -> f64 {
    let (ti, tf) = (initial_upper.theta, final_upper.theta);
    let half = 0.5 * (initial_upper.relative_phase - final_upper.relative_phase);
    (tf - ti).sin().powi(2) + (2.0 * tf).sin() * (2.0 * ti).sin() * half.sin().powi(2)
}

/// [`general_overlap`] evaluated from the models at one momentum.
pub fn general_overlap_at(spec_i: &ModelSpec, spec_f: &ModelSpec, k: f64) -> Result<f64> {
    let bi = spec_i.bands(k)?;
    let bf = spec_f.bands(k)?;
    Ok(general_overlap(
        SpinorAngles::from_spinor(&bi.plus),
        SpinorAngles::from_spinor(&bf.plus),
    ))
}

fn axes_used(spec: &ModelSpec, grid: KGrid) -> [bool; 3] {
    let mut max = [0.0f64; 3];
    for j in 0..grid.len() {
        let d = spec.d_vector(grid.k(j)).cartesian();
        for axis in 0..3 {
            max[axis] = max[axis].max(d[axis].abs());
        }
    }
    let scale = max.iter().cloned().fold(0.0, f64::max);
    [0, 1, 2].map(|a| max[a] > 1e-12 * scale)
}

/// Plane shared by both models. Different declared planes are reconciled when
/// one model only uses a single axis (e.g. `n = 0` QWZ, which is pure `σ_z`).
pub fn common_plane(spec_i: &ModelSpec, spec_f: &ModelSpec, grid: KGrid) -> Option<Plane> {
    let (pi, pf) = (spec_i.plane(), spec_f.plane());
    if pi == pf {
        return Some(pi);
    }
    let (ui, uf) = (axes_used(spec_i, grid), axes_used(spec_f, grid));
    let used = [0, 1, 2].map(|a| ui[a] || uf[a]);
    [pi, pf]
        .into_iter()
        .chain(Plane::ALL)
        .find(|p| (0..3).all(|a| !used[a] || p.contains_axis(a)))
}

/// Overlap from numerically diagonalized eigenvectors.
pub fn overlap_direct(spec_i: &ModelSpec, spec_f: &ModelSpec, grid: KGrid) -> Result<OverlapProfile> {
    overlap_direct_with(spec_i, spec_f, grid, OverlapOptions::default())
}

pub fn overlap_direct_with(
    spec_i: &ModelSpec,
    spec_f: &ModelSpec,
    grid: KGrid,
    opts: OverlapOptions,
) -> Result<OverlapProfile> {
    let (plane, prof_i, prof_f) = profiles(spec_i, spec_f, grid, opts)?;
    let (c_plus_sq, c_minus_sq) = prof_i
        .bands()
        .iter()
        .zip(prof_f.bands())
        .map(|(bi, bf)| direct_overlap(bi, bf))
        .unzip();
    assemble(grid, OverlapMethod::DirectInnerProduct, plane, &prof_i, &prof_f, c_plus_sq, c_minus_sq)
}

/// Overlap from gauge angles: `sin²(φ_i − φ_f)` for same-plane pairs, the
/// general expression for allowed cross-plane pairs.
pub fn overlap_closed_form(spec_i: &ModelSpec, spec_f: &ModelSpec, grid: KGrid) -> Result<OverlapProfile> {
    overlap_closed_form_with(spec_i, spec_f, grid, OverlapOptions::default())
}

pub fn overlap_closed_form_with(
    spec_i: &ModelSpec,
    spec_f: &ModelSpec,
    grid: KGrid,
    opts: OverlapOptions,
) -> Result<OverlapProfile> {
    let (plane, prof_i, prof_f) = profiles(spec_i, spec_f, grid, opts)?;
    let c_plus_sq: Vec<f64> = match plane {
        Some(_) => prof_i
            .angles()
            .iter()
            .zip(prof_f.angles())
            .map(|(a, b)| (a - b).sin().powi(2))
            .collect(),
        None => prof_i
            .bands()
            .iter()
            .zip(prof_f.bands())
            .map(|(bi, bf)| {
                general_overlap(SpinorAngles::from_spinor(&bi.plus), SpinorAngles::from_spinor(&bf.plus))
            })
            .collect(),
    };
    let c_minus_sq = c_plus_sq.iter().map(|p| 1.0 - p).collect();
    assemble(grid, OverlapMethod::ClosedForm, plane, &prof_i, &prof_f, c_plus_sq, c_minus_sq)
}

fn profiles(
    spec_i: &ModelSpec,
    spec_f: &ModelSpec,
    grid: KGrid,
    opts: OverlapOptions,
) -> Result<(Option<Plane>, AngleProfile, AngleProfile)> {
    match common_plane(spec_i, spec_f, grid) {
        Some(p) => Ok((
            Some(p),
            angle_profile_in_plane(spec_i, grid, p)?,
            angle_profile_in_plane(spec_f, grid, p)?,
        )),
        None if opts.allow_cross_plane => Ok((
            None,
            angle_profile_in_plane(spec_i, grid, spec_i.plane())?,
            angle_profile_in_plane(spec_f, grid, spec_f.plane())?,
        )),
        None => Err(Error::PlaneMismatch {
            initial: spec_i.plane(),
            final_plane: spec_f.plane(),
        }),
    }
}

fn assemble(
    grid: KGrid,
    method: OverlapMethod,
    plane: Option<Plane>,
    prof_i: &AngleProfile,
    prof_f: &AngleProfile,
    c_plus_sq: Vec<f64>,
    c_minus_sq: Vec<f64>,
) -> Result<OverlapProfile> {
    let delta_angle: Vec<f64> = prof_i
        .angles()
        .iter()
        .zip(prof_f.angles())
        .map(|(a, b)| a - b)
        .collect();
    if let Some((j, w)) = delta_angle
        .windows(2)
        .enumerate()
        .find(|(_, w)| (w[1] - w[0]).abs() >= FRAC_PI_2)
    {
        return Err(Error::UnwrapFailure {
            index: j + 1,
            step: w[1] - w[0],
        });
    }
    let delta_rate = prof_i
        .rates()
        .iter()
        .zip(prof_f.rates())
        .map(|(a, b)| a - b)
        .collect();
    Ok(OverlapProfile {
        grid,
        method,
        plane,
        c_plus_sq,
        c_minus_sq,
        delta_angle,
        delta_rate,
        delta_closure: prof_i.closure() - prof_f.closure(),
    })
}

/// `max_j |c₊²(k_j) − c₊²(−k_j)|` on the antisymmetric grid.
pub fn symmetry_check(profile: &OverlapProfile) -> f64 {
    let grid = profile.grid();
    let c = profile.c_plus_sq();
    (0..grid.len())
        .map(|j| (c[j] - c[grid.mirror_index(j)]).abs())
        .fold(0.0, f64::max)
}
