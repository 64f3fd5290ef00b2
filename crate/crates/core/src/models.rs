//! Two-band Bloch model families, their d-vectors and exact 2x2 spectra.
//!
//! Every model is `H(k) = d_a(k) σ_a + d_b(k) σ_b` with exactly two Pauli
//! components allowed to be nonzero; the [`Plane`] names which two.

use std::f64::consts::PI;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `|d|^2` below which a point is treated as gapless.
pub const GAP_FLOOR: f64 = 1e-14;
/// Relative distance to a phase boundary that counts as critical.
pub const CRITICAL_REL_TOL: f64 = 1e-9;
/// Components with magnitude below this are skipped by the raw gauge fix.
const GAUGE_COMPONENT_FLOOR: f64 = 1e-8;

/// The pair of Pauli matrices a model is built from, as `(a, b)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    /// `d_a σ_x + d_b σ_z`
    Xz,
    /// `d_a σ_y + d_b σ_z`
    Yz,
    /// `d_a σ_x + d_b σ_y`
    Xy,
}

impl Plane {
    /// Cartesian axes (0 = x, 1 = y, 2 = z) of the `a` and `b` components.
    pub fn axes(self) -> (usize, usize) {
        match self {
            Plane::Xz => (0, 2),
            Plane::Yz => (1, 2),
            Plane::Xy => (0, 1),
        }
    }

    pub fn contains_z(self) -> bool {
        !matches!(self, Plane::Xy)
    }

    pub fn contains_axis(self, axis: usize) -> bool {
        let (a, b) = self.axes();
        a == axis || b == axis
    }

    /// Axes `(longitudinal, transverse)` used for gauge angles: the angle is
    /// half the polar angle of the Bloch vector measured from the
    /// longitudinal axis towards the transverse one.
    pub fn angle_axes(self) -> (usize, usize) {
        match self {
            Plane::Xz => (2, 0),
            Plane::Yz => (2, 1),
            Plane::Xy => (0, 1),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Plane::Xz => "xz",
            Plane::Yz => "yz",
            Plane::Xy => "xy",
        }
    }

    pub const ALL: [Plane; 3] = [Plane::Xz, Plane::Yz, Plane::Xy];
}

impl fmt::Display for Plane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Plane {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "xz" | "zx" => Ok(Plane::Xz),
            "yz" | "zy" => Ok(Plane::Yz),
            "xy" | "yx" => Ok(Plane::Xy),
            other => Err(Error::InvalidInput(format!("unknown plane {other:?}"))),
        }
    }
}

/// Two nonzero components of the d-vector plus the plane they live in.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DVector {
    pub a: f64,
    pub b: f64,
    pub plane: Plane,
}

impl DVector {
    pub fn new(a: f64, b: f64, plane: Plane) -> Self {
        Self { a, b, plane }
    }

    /// `(d_x, d_y, d_z)`.
    pub fn cartesian(&self) -> [f64; 3] {
        let mut out = [0.0; 3];
        let (ia, ib) = self.plane.axes();
        out[ia] = self.a;
        out[ib] = self.b;
        out
    }

    pub fn norm_sq(&self) -> f64 {
        self.a * self.a + self.b * self.b
    }

    pub fn norm(&self) -> f64 {
        self.a.hypot(self.b)
    }

    /// The 2x2 Bloch matrix `d · σ`, row major.
    pub fn matrix(&self) -> [[Complex64; 2]; 2] {
        let [x, y, z] = self.cartesian();
        [
            [Complex64::new(z, 0.0), Complex64::new(x, -y)],
            [Complex64::new(x, y), Complex64::new(-z, 0.0)],
        ]
    }
}

/// Eigenpairs of one Bloch matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandPair {
    pub e_plus: f64,
    pub e_minus: f64,
    pub plus: [Complex64; 2],
    pub minus: [Complex64; 2],
}

impl BandPair {
    /// `max ||H v - E v||` over both bands.
    pub fn residual(&self, d: &DVector) -> f64 {
        let h = d.matrix();
        let apply = |v: &[Complex64; 2], e: f64| {
            let r0 = h[0][0] * v[0] + h[0][1] * v[1] - v[0] * e;
            let r1 = h[1][0] * v[0] + h[1][1] * v[1] - v[1] * e;
            (r0.norm_sqr() + r1.norm_sqr()).sqrt()
        };
        apply(&self.plus, self.e_plus).max(apply(&self.minus, self.e_minus))
    }

    /// Multiplies both eigenvectors by independent phases.
    pub fn rephased(&self, phase_plus: f64, phase_minus: f64) -> Self {
        let up = Complex64::from_polar(1.0, phase_plus);
        let um = Complex64::from_polar(1.0, phase_minus);
        Self {
            plus: [self.plus[0] * up, self.plus[1] * up],
            minus: [self.minus[0] * um, self.minus[1] * um],
            ..*self
        }
    }
}

/// Bloch vector `(<σ_x>, <σ_y>, <σ_z>)` of a normalized spinor.
pub fn bloch_vector(v: &[Complex64; 2]) -> [f64; 3] {
    let c = v[0].conj() * v[1];
    [
        2.0 * c.re,
        2.0 * c.im,
        v[0].norm_sqr() - v[1].norm_sqr(),
    ]
}

/// `⟨u|v⟩`.
pub fn inner(u: &[Complex64; 2], v: &[Complex64; 2]) -> Complex64 {
    u[0].conj() * v[0] + u[1].conj() * v[1]
}

fn normalized_gauge_fixed(v: [Complex64; 2]) -> [Complex64; 2] {
    let norm = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    let mut out = [v[0] / norm, v[1] / norm];
    if let Some(i) = out.iter().position(|c| c.norm() > GAUGE_COMPONENT_FLOOR) {
        let phase = out[i].conj() / out[i].norm();
        out = [out[0] * phase, out[1] * phase];
        out[i].im = 0.0;
    }
    out
}

/// Closed-form eigensystem of `d · σ`.
///
/// Each eigenvector is taken from whichever of the two equivalent null-space
/// formulas has the larger norm, then normalized and rotated so that its first
/// component with magnitude above `1e-8` is real and positive.
pub fn eigensystem(d: &DVector) -> Result<BandPair> {
    let gap_sq = d.norm_sq();
    if gap_sq.is_nan() || gap_sq < GAP_FLOOR {
        return Err(Error::GaplessPoint { k: f64::NAN, gap_sq });
    }
    let [x, y, z] = d.cartesian();
    let e = gap_sq.sqrt();
    let off = Complex64::new(x, y); // d_x + i d_y

    let plus = if z >= 0.0 {
        [Complex64::new(z + e, 0.0), off]
    } else {
        [off.conj(), Complex64::new(e - z, 0.0)]
    };
    let minus = if z <= 0.0 {
        [Complex64::new(z - e, 0.0), off]
    } else {
        [off.conj(), Complex64::new(-e - z, 0.0)]
    };

    Ok(BandPair {
        e_plus: e,
        e_minus: -e,
        plus: normalized_gauge_fixed(plus),
        minus: normalized_gauge_fixed(minus),
    })
}

/// `ω = E_+ - E_- = 2|d|` with ħ = 1.
pub fn gap_frequency(d: &DVector) -> Result<f64> {
    let gap_sq = d.norm_sq();
    if gap_sq.is_nan() || gap_sq < GAP_FLOOR {
        return Err(Error::GaplessPoint { k: f64::NAN, gap_sq });
    }
    Ok(2.0 * gap_sq.sqrt())
}

/// 1D Qi-Wu-Zhang parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QwzParams {
    pub m: f64,
    pub t_s: f64,
    pub t_so: f64,
    pub n: u32,
}

/// Su-Schrieffer-Heeger parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SshParams {
    pub t1: f64,
    pub t2: f64,
    pub n: u32,
}

/// `d_z = m - 2 t_s cos(nk)`, `d_x = t_so sin(nk)`.
pub fn qwz_d_vector(p: &QwzParams, k: f64) -> DVector {
    let nk = p.n as f64 * k;
    DVector::new(p.t_so * nk.sin(), p.m - 2.0 * p.t_s * nk.cos(), Plane::Xz)
}

/// `d_x = t1 + t2 cos(nk)`, `d_y = t2 sin(nk)`.
pub fn ssh_d_vector(p: &SshParams, k: f64) -> DVector {
    let nk = p.n as f64 * k;
    DVector::new(p.t1 + p.t2 * nk.cos(), p.t2 * nk.sin(), Plane::Xy)
}

/// Samples of `(d_a, d_b)` on a strictly increasing grid spanning less than
/// one period; evaluated by periodic linear interpolation.
#[derive(Clone, Debug, PartialEq)]
pub struct DVectorTable {
    k: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl DVectorTable {
    pub fn new(k: Vec<f64>, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if k.len() < 2 || k.len() != a.len() || k.len() != b.len() {
            return Err(Error::InvalidModel(
                "tabulated d-vector needs at least two rows of equal length".into(),
            ));
        }
        if k.iter().chain(&a).chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("tabulated d-vector has non-finite entries".into()));
        }
        if k.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidModel("tabulated k must be strictly increasing".into()));
        }
        if k[k.len() - 1] - k[0] >= 2.0 * PI {
            return Err(Error::InvalidModel(
                "tabulated k must cover at most one period (last - first < 2pi)".into(),
            ));
        }
        Ok(Self { k, a, b })
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    pub fn eval(&self, k: f64) -> (f64, f64) {
        let k0 = self.k[0];
        let kk = k0 + (k - k0).rem_euclid(2.0 * PI);
        let last = self.k.len() - 1;
        // segment [k_i, k_{i+1}], with the seam segment [k_last, k0 + 2pi]
        let (i, j, lo, hi) = match self.k.partition_point(|&x| x <= kk) {
            0 => unreachable!("kk >= k0"),
            p if p <= last => (p - 1, p, self.k[p - 1], self.k[p]),
            _ => (last, 0, self.k[last], k0 + 2.0 * PI),
        };
        let t = (kk - lo) / (hi - lo);
        (
            self.a[i] + t * (self.a[j] - self.a[i]),
            self.b[i] + t * (self.b[j] - self.b[i]),
        )
    }

    /// Reads `k,d_a,d_b,plane` rows. All rows must name the same plane.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<(Self, Plane)> {
        #[derive(Deserialize)]
        struct Row {
            k: f64,
            d_a: f64,
            d_b: f64,
            plane: String,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = ["k", "d_a", "d_b", "plane"];
        if headers.iter().ne(expected.iter().copied()) {
            return Err(Error::InvalidInput(format!(
                "d-vector csv header must be `k,d_a,d_b,plane`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let (mut ks, mut a, mut b) = (Vec::new(), Vec::new(), Vec::new());
        let mut plane: Option<Plane> = None;
        for row in rdr.deserialize::<Row>() {
            let row = row?;
            let p: Plane = row.plane.parse()?;
            match plane {
                None => plane = Some(p),
                Some(q) if q != p => {
                    return Err(Error::InvalidModel(format!(
                        "rows mix planes {q} and {p}"
                    )))
                }
                _ => {}
            }
            ks.push(row.k);
            a.push(row.d_a);
            b.push(row.d_b);
        }
        let plane = plane.ok_or_else(|| Error::InvalidModel("empty d-vector table".into()))?;
        Ok((Self::new(ks, a, b)?, plane))
    }

    pub fn from_csv_path(path: &Path) -> Result<(Self, Plane)> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }
}

type DCallback = Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>;

/// Where a generic model gets its `(d_a, d_b)` from.
#[derive(Clone)]
pub enum DVectorSource {
    Tabulated(DVectorTable),
    Callback(DCallback),
}

impl fmt::Debug for DVectorSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DVectorSource::Tabulated(t) => write!(f, "Tabulated({} rows)", t.len()),
            DVectorSource::Callback(_) => f.write_str("Callback"),
        }
    }
}

/// A d-vector model given by samples or a closure.
#[derive(Clone, Debug)]
pub struct GenericModel {
    pub label: String,
    pub plane: Plane,
    pub source: DVectorSource,
}

impl GenericModel {
    pub fn tabulated(label: impl Into<String>, plane: Plane, table: DVectorTable) -> Self {
        Self {
            label: label.into(),
            plane,
            source: DVectorSource::Tabulated(table),
        }
    }

    /// The closure must be 2pi-periodic.
    pub fn from_fn<F>(label: impl Into<String>, plane: Plane, f: F) -> Self
    where
        F: Fn(f64) -> (f64, f64) + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            plane,
            source: DVectorSource::Callback(Arc::new(f)),
        }
    }

    fn eval(&self, k: f64) -> (f64, f64) {
        match &self.source {
            DVectorSource::Tabulated(t) => t.eval(k),
            DVectorSource::Callback(f) => f(k),
        }
    }
}

/// A parametrized two-band Bloch Hamiltonian.
#[derive(Clone, Debug)]
pub enum ModelSpec {
    Qwz(QwzParams),
    Ssh(SshParams),
    Generic(GenericModel),
}

impl ModelSpec {
    pub fn qwz(m: f64, t_s: f64, t_so: f64, n: u32) -> Result<Self> {
        let spec = ModelSpec::Qwz(QwzParams { m, t_s, t_so, n });
        spec.validate()?;
        Ok(spec)
    }

    pub fn ssh(t1: f64, t2: f64, n: u32) -> Result<Self> {
        let spec = ModelSpec::Ssh(SshParams { t1, t2, n });
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Qwz(p) => {
                if !(p.m.is_finite() && p.t_s.is_finite() && p.t_so.is_finite()) {
                    return Err(Error::InvalidModel("QWZ parameters must be finite".into()));
                }
                if p.t_s <= 0.0 || p.t_so <= 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "QWZ needs t_s > 0 and t_so > 0 (got t_s = {}, t_so = {})",
                        p.t_s, p.t_so
                    )));
                }
            }
            ModelSpec::Ssh(p) => {
                if !(p.t1.is_finite() && p.t2.is_finite()) {
                    return Err(Error::InvalidModel("SSH parameters must be finite".into()));
                }
                if p.t1 < 0.0 || p.t2 <= 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "SSH needs t1 >= 0 and t2 > 0 (got t1 = {}, t2 = {})",
                        p.t1, p.t2
                    )));
                }
            }
            ModelSpec::Generic(_) => {}
        }
        Ok(())
    }

    pub fn plane(&self) -> Plane {
        match self {
            ModelSpec::Qwz(_) => Plane::Xz,
            ModelSpec::Ssh(_) => Plane::Xy,
            ModelSpec::Generic(g) => g.plane,
        }
    }

    /// Harmonic index for the analytic families.
    pub fn harmonic(&self) -> Option<u32> {
        match self {
            ModelSpec::Qwz(p) => Some(p.n),
            ModelSpec::Ssh(p) => Some(p.n),
            ModelSpec::Generic(_) => None,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            ModelSpec::Qwz(_) => "qwz",
            ModelSpec::Ssh(_) => "ssh",
            ModelSpec::Generic(_) => "generic",
        }
    }

    pub fn d_vector(&self, k: f64) -> DVector {
        match self {
            ModelSpec::Qwz(p) => qwz_d_vector(p, k),
            ModelSpec::Ssh(p) => ssh_d_vector(p, k),
            ModelSpec::Generic(g) => {
                let (a, b) = g.eval(k);
                DVector::new(a, b, g.plane)
            }
        }
    }

    /// `d'(k)`: analytic for the named families, central differences
    /// otherwise.
    pub fn d_vector_derivative(&self, k: f64) -> DVector {
        match self {
            ModelSpec::Qwz(p) => {
                let n = p.n as f64;
                let nk = n * k;
                DVector::new(
                    n * p.t_so * nk.cos(),
                    2.0 * n * p.t_s * nk.sin(),
                    Plane::Xz,
                )
            }
            ModelSpec::Ssh(p) => {
                let n = p.n as f64;
                let nk = n * k;
                DVector::new(-n * p.t2 * nk.sin(), n * p.t2 * nk.cos(), Plane::Xy)
            }
            ModelSpec::Generic(g) => {
                let h = 1e-6;
                let (a1, b1) = g.eval(k + h);
                let (a0, b0) = g.eval(k - h);
                DVector::new((a1 - a0) / (2.0 * h), (b1 - b0) / (2.0 * h), g.plane)
            }
        }
    }

    /// Eigensystem at `k`, reporting the momentum on a gapless point.
    pub fn bands(&self, k: f64) -> Result<BandPair> {
        eigensystem(&self.d_vector(k)).map_err(|e| match e {
            Error::GaplessPoint { gap_sq, .. } => Error::GaplessPoint { k, gap_sq },
            other => other,
        })
    }

    pub fn gap_frequency(&self, k: f64) -> Result<f64> {
        gap_frequency(&self.d_vector(k)).map_err(|e| match e {
            Error::GaplessPoint { gap_sq, .. } => Error::GaplessPoint { k, gap_sq },
            other => other,
        })
    }

    /// Winding number from the phase diagram of the family.
    pub fn analytic_topological_number(&self) -> Result<i64> {
        self.validate()?;
        match self {
            ModelSpec::Qwz(p) => {
                let boundary = 2.0 * p.t_s;
                let critical = if p.n == 0 {
                    // d is the constant (0, m - 2 t_s)
                    (p.m - boundary).abs() <= CRITICAL_REL_TOL * boundary
                } else {
                    (p.m.abs() - boundary).abs() <= CRITICAL_REL_TOL * boundary
                };
                if critical {
                    return Err(Error::CriticalPoint(format!(
                        "QWZ with |m| = 2 t_s (m = {}, t_s = {})",
                        p.m, p.t_s
                    )));
                }
                Ok(if p.m.abs() < boundary { p.n as i64 } else { 0 })
            }
            ModelSpec::Ssh(p) => {
                if p.n > 0 && (p.t1 - p.t2).abs() <= CRITICAL_REL_TOL * p.t2 {
                    return Err(Error::CriticalPoint(format!(
                        "SSH with t1 = t2 = {}",
                        p.t2
                    )));
                }
                Ok(if p.t1 < p.t2 { p.n as i64 } else { 0 })
            }
            ModelSpec::Generic(g) => Err(Error::Unsupported(format!(
                "no analytic classification for generic model {:?}; use the numerical winding",
                g.label
            ))),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::Qwz(p) => write!(
                f,
                "qwz(m={}, t_s={}, t_so={}, n={})",
                p.m, p.t_s, p.t_so, p.n
            ),
            ModelSpec::Ssh(p) => write!(f, "ssh(t1={}, t2={}, n={})", p.t1, p.t2, p.n),
            ModelSpec::Generic(g) => write!(f, "generic({}, {})", g.label, g.plane),
        }
    }
}
