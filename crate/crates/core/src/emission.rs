//! Spontaneous-emission spectrum after a quench into a QWZ band, and its
//! inversion back to `|c₊|⁴`.
//!
//! Forward model (ħ and the global prefactor set to 1):
//! `I(k) = ω⁴ r₋₊² |c₊|⁴`, which simplifies to `K(k) |c₊|⁴` with
//! `K = (2n d_z t_so cos nk − 4n d_x t_s sin nk)²`.
//! Binning into ω superposes both roots `k₁ = −k₂` and carries the Jacobian
//! `|dk/dω|`, so the point density at frequency ω is
//! `I(ω) = 2 K(k₁) |c₊(k₁)|⁴ / |ω'(k₁)|`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::cp::{count_transitions, CpThresholds};
use crate::error::{Error, Result};
use crate::grid::KGrid;
use crate::io::{fmt_real, write_rows};
use crate::models::{ModelSpec, QwzParams};
use crate::numerics::{bisect, GaussLegendre};
use crate::overlap::{overlap_at, overlap_direct};

pub const DEFAULT_BINS: usize = 512;
/// Bisection tolerance on k.
pub const ROOT_TOL: f64 = 1e-10;
/// Bins whose kernel is below this fraction of the largest kernel are not
/// inverted.
pub const KERNEL_FLOOR: f64 = 1e-9;
const MASS_NODES: usize = 16;

fn qwz_params(spec_f: &ModelSpec) -> Result<QwzParams> {
    match spec_f {
        ModelSpec::Qwz(p) => Ok(*p),
        other => Err(Error::Unsupported(format!(
            "emission needs a QWZ final model, got {}",
            other.family_name()
        ))),
    }
}

/// Interband dipole element `r₋₊(k)` of the final QWZ band.
pub fn dipole_element(spec_f: &ModelSpec, k: f64) -> Result<f64> {
    let p = qwz_params(spec_f)?;
    let d = spec_f.d_vector(k);
    let (dx, dz) = (d.a, d.b);
    if dx.abs() < 1e-12 {
        return Err(Error::SingularK { k });
    }
    let omega = spec_f.gap_frequency(k)?;
    let n = p.n as f64;
    let nk = n * k;
    let numer = 2.0 * n * dx * dz * p.t_so * nk.cos() - 4.0 * n * dx * dx * p.t_s * nk.sin();
    Ok(numer / (omega * omega * dx.abs()))
}

/// `ω⁴ r₋₊²`, the factor multiplying `|c₊|⁴` in `I(k)`.
pub fn forward_kernel(spec_f: &ModelSpec, k: f64) -> Result<f64> {
    let p = qwz_params(spec_f)?;
    let d = spec_f.d_vector(k);
    spec_f.gap_frequency(k)?;
    let n = p.n as f64;
    let nk = n * k;
    Ok((2.0 * n * d.b * p.t_so * nk.cos() - 4.0 * n * d.a * p.t_s * nk.sin()).powi(2))
}

/// `I(k) = ω · ω³ r₋₊² · |c₊|⁴`.
pub fn intensity_k(spec_i: &ModelSpec, spec_f: &ModelSpec, k: f64) -> Result<f64> {
    let omega = spec_f.gap_frequency(k)?;
    let r = dipole_element(spec_f, k)?;
    let (c_plus_sq, _) = overlap_at(spec_i, spec_f, k)?;
    Ok(omega.powi(4) * r * r * c_plus_sq * c_plus_sq)
}

fn omega_prime(spec_f: &ModelSpec, k: f64) -> f64 {
    let d = spec_f.d_vector(k);
    let dp = spec_f.d_vector_derivative(k);
    2.0 * (d.a * dp.a + d.b * dp.b) / d.norm()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KSample {
    pub k: f64,
    pub omega: f64,
    pub r_minus_plus: f64,
    pub intensity: f64,
    pub c_plus_4: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OmegaBin {
    pub lo: f64,
    pub hi: f64,
    pub center: f64,
    /// `I(ω)` at the bin centre, both roots superposed.
    pub point_density: f64,
    /// `∫ I(ω) dω` over the bin, integrated in k on both branches.
    pub mass: f64,
}

impl OmegaBin {
    pub fn mean_density(&self) -> f64 {
        self.mass / (self.hi - self.lo)
    }
}

/// Emission spectrum of a quench into a single-minimum QWZ band.
#[derive(Clone, Debug, Serialize)]
pub struct EmissionSpectrum {
    pub k_samples: Vec<KSample>,
    pub bins: Vec<OmegaBin>,
    pub omega_min: f64,
    pub omega_max: f64,
    pub bin_width: f64,
    /// ω strictly monotone on `(0, π)`; spectra are only built when it holds.
    pub monotone: bool,
    /// `∫ I(k) dk` over the zone by the periodic midpoint rule on the grid.
    pub k_integral: f64,
}

impl EmissionSpectrum {
    /// `|Σ mass − ∫ I dk| / ∫ I dk` (absolute when the integral vanishes).
    pub fn conservation_error(&self) -> f64 {
        let total: f64 = self.bins.iter().map(|b| b.mass).sum();
        let diff = (total - self.k_integral).abs();
        if self.k_integral > 0.0 {
            diff / self.k_integral
        } else {
            diff
        }
    }

    pub fn peak_density(&self) -> f64 {
        self.bins.iter().map(|b| b.point_density).fold(0.0, f64::max)
    }

    pub fn write_k_csv<W: Write>(&self, w: W) -> Result<()> {
        let rows = self.k_samples.iter().map(|s| {
            vec![
                fmt_real(s.k),
                fmt_real(s.omega),
                fmt_real(s.r_minus_plus),
                fmt_real(s.intensity),
                fmt_real(s.c_plus_4),
            ]
        });
        write_rows(w, &["k", "omega", "r", "I", "c_plus_4"], rows)
    }
}

/// Checks that ω is strictly monotone on the positive half of the grid and
/// returns `(ω(0), ω(π))`.
pub fn monotonicity_certificate(spec_f: &ModelSpec, grid: KGrid) -> Result<(f64, f64)> {
    qwz_params(spec_f)?;
    let w0 = spec_f.gap_frequency(0.0)?;
    let wpi = spec_f.gap_frequency(std::f64::consts::PI)?;
    let half = grid.len() / 2;
    let mut omegas = vec![w0];
    for j in half..grid.len() {
        omegas.push(spec_f.gap_frequency(grid.k(j))?);
    }
    omegas.push(wpi);
    let increasing = omegas.windows(2).all(|w| w[1] > w[0]);
    let decreasing = omegas.windows(2).all(|w| w[1] < w[0]);
    if !(increasing || decreasing) {
        let extrema = omegas
            .windows(3)
            .filter(|w| (w[1] - w[0]) * (w[2] - w[1]) <= 0.0)
            .count();
        return Err(Error::MultiMinimum(format!(
            "{spec_f} has {extrema} interior extrema of omega on (0, pi)"
        )));
    }
    Ok((w0, wpi))
}

/// k on `[0, π]` with `ω(k) = omega`.
pub fn positive_root(spec_f: &ModelSpec, omega: f64) -> Result<f64> {
    let f = |k: f64| spec_f.gap_frequency(k).map(|w| w - omega).unwrap_or(f64::NAN);
    bisect(f, 0.0, std::f64::consts::PI, ROOT_TOL)
}

/// Spectrum of the quench `spec_i → spec_f`.
pub fn spectrum(spec_i: &ModelSpec, spec_f: &ModelSpec, grid: KGrid, n_bins: usize) -> Result<EmissionSpectrum> {
    // plane compatibility and gaps on the grid are checked here
    let profile = overlap_direct(spec_i, spec_f, grid)?;
    build_spectrum(spec_f, grid, n_bins, profile.c_plus_sq(), |k| {
        overlap_at(spec_i, spec_f, k).map(|(c, _)| c)
    })
}

/// Spectrum for a prescribed occupation `|c₊(k)|²`; the forward model used
/// by [`spectrum`] with the overlap replaced.
pub fn spectrum_from_occupation<F>(spec_f: &ModelSpec, grid: KGrid, n_bins: usize, c_plus_sq: F) -> Result<EmissionSpectrum>
where
    F: Fn(f64) -> f64 + Sync,
{
    let on_grid: Vec<f64> = grid.points().into_iter().map(&c_plus_sq).collect();
    build_spectrum(spec_f, grid, n_bins, &on_grid, |k| Ok(c_plus_sq(k)))
}

fn build_spectrum<F>(spec_f: &ModelSpec, grid: KGrid, n_bins: usize, c_on_grid: &[f64], c_plus_sq: F) -> Result<EmissionSpectrum>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    if n_bins == 0 {
        return Err(Error::InvalidInput("bins must be at least 1".into()));
    }
    let (w0, wpi) = monotonicity_certificate(spec_f, grid)?;
    let (omega_min, omega_max) = (w0.min(wpi), w0.max(wpi));
    let bin_width = (omega_max - omega_min) / n_bins as f64;

    let k_samples = (0..grid.len())
        .map(|j| {
            let k = grid.k(j);
            let omega = spec_f.gap_frequency(k)?;
            let r = dipole_element(spec_f, k)?;
            let c4 = c_on_grid[j] * c_on_grid[j];
            Ok(KSample {
                k,
                omega,
                r_minus_plus: r,
                intensity: omega.powi(4) * r * r * c4,
                c_plus_4: c4,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let k_integral = k_samples.iter().map(|s| s.intensity).sum::<f64>() * grid.spacing();

    let intensity = |k: f64| -> Result<f64> {
        let c = c_plus_sq(k)?;
        Ok(forward_kernel(spec_f, k)? * c * c)
    };
    let edge = |i: usize| -> Result<f64> {
        match i {
            0 => Ok(if w0 <= wpi { 0.0 } else { std::f64::consts::PI }),
            i if i == n_bins => Ok(if w0 <= wpi { std::f64::consts::PI } else { 0.0 }),
            i => positive_root(spec_f, omega_min + i as f64 * bin_width),
        }
    };
    let edges = (0..=n_bins).into_par_iter().map(edge).collect::<Result<Vec<_>>>()?;
    let gl = GaussLegendre::new(MASS_NODES);

    let bins = (0..n_bins)
        .into_par_iter()
        .map(|b| {
            let lo = omega_min + b as f64 * bin_width;
            let hi = if b + 1 == n_bins { omega_max } else { lo + bin_width };
            let center = 0.5 * (lo + hi);
            let (ka, kb) = (edges[b].min(edges[b + 1]), edges[b].max(edges[b + 1]));
            let mut err = None;
            let mut eval = |k: f64| {
                intensity(k).unwrap_or_else(|e| {
                    err.get_or_insert(e);
                    0.0
                })
            };
            let mass = gl.integrate(ka, kb, &mut eval) + gl.integrate(-kb, -ka, &mut eval);
            if let Some(e) = err {
                return Err(e);
            }
            let k1 = positive_root(spec_f, center)?;
            let point_density = intensity(k1)? / omega_prime(spec_f, k1).abs()
                + intensity(-k1)? / omega_prime(spec_f, -k1).abs();
            Ok(OmegaBin {
                lo,
                hi,
                center,
                point_density,
                mass,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(EmissionSpectrum {
        k_samples,
        bins,
        omega_min,
        omega_max,
        bin_width,
        monotone: true,
        k_integral,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InversionKernel {
    /// `c⁴ = I(ω) |ω'(k₁)| / (2 K(k₁))`, the exact inverse of the forward model.
    Consistent,
    /// Denominator `(4 d_x d_z t_so cos k₁ − 4 d_x² t_s sin k₁)²` taken
    /// literally, result scaled to unit maximum. Kept for comparison; it does
    /// not invert the forward model.
    Literal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RecoveredBin {
    pub omega: f64,
    pub k1: f64,
    pub point_density: f64,
    /// `None` where the kernel is too small to divide by.
    pub c_plus_4: Option<f64>,
}

/// Recovers `|c₊(ω)|⁴` bin by bin from the point densities.
pub fn invert_spectrum(spectrum: &EmissionSpectrum, spec_f: &ModelSpec, kernel: InversionKernel) -> Result<Vec<RecoveredBin>> {
    let p = qwz_params(spec_f)?;
    if !spectrum.monotone {
        return Err(Error::MultiMinimum("spectrum lacks a monotonicity certificate".into()));
    }
    let roots = spectrum
        .bins
        .par_iter()
        .map(|b| positive_root(spec_f, b.center))
        .collect::<Result<Vec<_>>>()?;
    let kernels = roots
        .iter()
        .map(|&k| forward_kernel(spec_f, k))
        .collect::<Result<Vec<_>>>()?;
    let k_max = kernels.iter().cloned().fold(0.0, f64::max);

    let mut out: Vec<RecoveredBin> = spectrum
        .bins
        .iter()
        .zip(roots.iter().zip(&kernels))
        .map(|(b, (&k1, &kern))| {
            let c_plus_4 = if kern <= KERNEL_FLOOR * k_max {
                None
            } else {
                let jac = 0.5 * omega_prime(spec_f, k1).abs();
                Some(match kernel {
                    InversionKernel::Consistent => b.point_density * jac / kern,
                    InversionKernel::Literal => {
                        let d = spec_f.d_vector(k1);
                        let den = 4.0 * d.a * d.b * p.t_so * k1.cos() - 4.0 * d.a * d.a * p.t_s * k1.sin();
                        b.point_density * jac * d.a * d.a / (den * den)
                    }
                })
            };
            RecoveredBin {
                omega: b.center,
                k1,
                point_density: b.point_density,
                c_plus_4,
            }
        })
        .collect();

    if kernel == InversionKernel::Literal {
        let max = out.iter().filter_map(|r| r.c_plus_4).fold(0.0, f64::max);
        if max > 0.0 {
            for r in &mut out {
                r.c_plus_4 = r.c_plus_4.map(|c| c / max);
            }
        }
    }
    Ok(out)
}

/// Number of 0 ↔ 1 transitions of the recovered `|c₊(ω)|⁴` in ω order,
/// skipping unconditioned bins. With a trivial final band this equals the
/// initial winding.
pub fn count_cp_spectrum(recovered: &[RecoveredBin], thresholds: &CpThresholds) -> u64 {
    let samples: Vec<f64> = recovered.iter().filter_map(|r| r.c_plus_4).collect();
    count_transitions(&samples, thresholds)
}

/// `omega,I,c_plus_4`; unconditioned bins leave `c_plus_4` empty.
pub fn write_omega_csv<W: Write>(w: W, recovered: &[RecoveredBin]) -> Result<()> {
    let rows = recovered.iter().map(|r| {
        vec![
            fmt_real(r.omega),
            fmt_real(r.point_density),
            r.c_plus_4.map(fmt_real).unwrap_or_default(),
        ]
    });
    write_rows(w, &["omega", "I", "c_plus_4"], rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn final_spec() -> ModelSpec {
        ModelSpec::qwz(5.0, 2.0, 1.0, 1).unwrap()
    }

    #[test]
    fn dipole_at_quarter_zone() {
        let r = dipole_element(&final_spec(), FRAC_PI_2).unwrap();
        // term by term: 2·1·1·5·1·cos(π/2) − 4·1·1²·2·sin(π/2), over ω²|d_x| = 104
        let numer = 2.0 * 5.0 * FRAC_PI_2.cos() - 8.0 * FRAC_PI_2.sin();
        assert!((r - numer / 104.0).abs() < 1e-15);
        assert!((r + 8.0 / 104.0).abs() < 1e-15);
    }

    #[test]
    fn dipole_parity_and_flat_harmonic() {
        // the |d_x| in the denominator makes r odd; r², which enters I, is even
        let s = final_spec();
        for &k in &[0.3, 1.1, 2.7] {
            let (a, b) = (dipole_element(&s, k).unwrap(), dipole_element(&s, -k).unwrap());
            assert!((a + b).abs() < 1e-15);
            assert!((a * a - b * b).abs() < 1e-15);
        }
        let flat = ModelSpec::qwz(5.0, 2.0, 1.0, 0).unwrap();
        assert!(matches!(dipole_element(&flat, 0.4), Err(Error::SingularK { .. })));
        assert_eq!(forward_kernel(&flat, 0.4).unwrap(), 0.0);
    }

    #[test]
    fn kernel_equals_omega4_r2() {
        let s = ModelSpec::qwz(5.0, 2.0, 1.3, 2).unwrap();
        for &k in &[-2.9, -0.4, 0.2, 1.7] {
            let w = s.gap_frequency(k).unwrap();
            let r = dipole_element(&s, k).unwrap();
            let kern = forward_kernel(&s, k).unwrap();
            assert!((w.powi(4) * r * r - kern).abs() < 1e-12 * kern.max(1.0));
        }
    }

    #[test]
    fn identity_quench_is_dark() {
        let s = final_spec();
        for &k in &[-1.0, 0.5, 3.0] {
            assert_eq!(intensity_k(&s, &s, k).unwrap(), 0.0);
        }
    }

    #[test]
    fn intensity_is_even() {
        let si = ModelSpec::qwz(1.0, 2.0, 1.0, 3).unwrap();
        let sf = final_spec();
        let grid = KGrid::new(512).unwrap();
        for j in 0..grid.len() {
            let k = grid.k(j);
            let a = intensity_k(&si, &sf, k).unwrap();
            let b = intensity_k(&si, &sf, -k).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.max(1e-12));
        }
    }

    #[test]
    fn omega_range_and_certificate() {
        let (w0, wpi) = monotonicity_certificate(&final_spec(), KGrid::default()).unwrap();
        assert!((w0 - 2.0).abs() < 1e-12 && (wpi - 18.0).abs() < 1e-12);
        // dense scan oracle
        let dense = KGrid::new(1 << 16).unwrap();
        let s = final_spec();
        let ws: Vec<f64> = dense.points().iter().map(|&k| s.gap_frequency(k).unwrap()).collect();
        let lo = ws.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ws.iter().cloned().fold(0.0, f64::max);
        assert!((lo - 2.0).abs() < 1e-6 && (hi - 18.0).abs() < 1e-6);
    }

    #[test]
    fn second_harmonic_has_several_minima() {
        for m in [1.0, 5.0] {
            let s = ModelSpec::qwz(m, 2.0, 1.0, 2).unwrap();
            assert!(matches!(
                monotonicity_certificate(&s, KGrid::default()),
                Err(Error::MultiMinimum(_))
            ));
        }
    }

    #[test]
    fn kernel_vanishes_where_cos_k_is_four_fifths() {
        let k = 0.8f64.acos();
        assert!(forward_kernel(&final_spec(), k).unwrap() < 1e-24);
    }

    #[test]
    fn dark_spectrum_inverts_to_zero() {
        let s = final_spec();
        let sp = spectrum_from_occupation(&s, KGrid::new(1024).unwrap(), 64, |_| 0.0).unwrap();
        let rec = invert_spectrum(&sp, &s, InversionKernel::Consistent).unwrap();
        assert!(rec.iter().all(|r| r.c_plus_4.is_none_or(|c| c == 0.0)));
        assert_eq!(count_cp_spectrum(&rec, &CpThresholds::default()), 0);
    }

    #[test]
    fn synthetic_occupation_is_recovered() {
        let s = final_spec();
        let occ = |k: f64| 0.5 * (1.0 + (2.0 * k).cos()) * 0.9;
        let sp = spectrum_from_occupation(&s, KGrid::new(2048).unwrap(), 256, occ).unwrap();
        let rec = invert_spectrum(&sp, &s, InversionKernel::Consistent).unwrap();
        for r in rec.iter().filter(|r| r.c_plus_4.is_some()) {
            let want = occ(r.k1).powi(2);
            let got = r.c_plus_4.unwrap();
            assert!((got - want).abs() <= 1e-8 * want.max(1e-3), "ω={} got {got} want {want}", r.omega);
        }
        assert!(sp.conservation_error() < 1e-6);
    }

    #[test]
    fn literal_denominator_fails_round_trip() {
        let s = final_spec();
        let occ = |k: f64| (0.5 * k).sin().powi(2);
        let sp = spectrum_from_occupation(&s, KGrid::new(2048).unwrap(), 256, occ).unwrap();
        let rec = invert_spectrum(&sp, &s, InversionKernel::Literal).unwrap();
        let worst = rec
            .iter()
            .filter_map(|r| r.c_plus_4.map(|c| (c - occ(r.k1).powi(2)).abs()))
            .fold(0.0, f64::max);
        assert!(worst > 1e-2, "{worst}");
    }

    #[test]
    fn bin_root_matches_quadratic() {
        // ω²/4 = t_so² (1 − c²) + (m − 2 t_s c)² solved for c = cos k
        let s = final_spec();
        for &w in &[2.5, 7.0, 12.25, 17.9] {
            let (a, b, c): (f64, f64, f64) = (16.0 - 1.0, -40.0, 1.0 + 25.0 - w * w / 4.0);
            let cosk = (-b - (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
            let k = positive_root(&s, w).unwrap();
            assert!((k - cosk.acos()).abs() < 1e-9, "{w}");
            assert!((0.0..=PI).contains(&k));
        }
    }
}
