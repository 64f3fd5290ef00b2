//! Cold-atom readout: spin-resolved momentum densities with binomial shot
//! noise, and the pipeline from densities to the initial winding.
//!
//! The lattice realizes `H(q) = 2 t_so sin(nq) σ_y + (δ/2 − 2 t_s cos(nq)) σ_z`
//! with `q` in units of `1/a`.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cp::{count_cp, count_cp_peaks, infer_initial, CpReport, CpThresholds};
use crate::error::{Error, Result};
use crate::gauge::winding_number_adaptive;
use crate::grid::KGrid;
use crate::io::{fmt_real, write_rows};
use crate::models::{DVectorSource, GenericModel, ModelSpec, Plane, CRITICAL_REL_TOL};
use crate::overlap::overlap_direct;

/// Detuning of the fully polarized `|↓⟩` reference, in units of `t_s`.
pub const POLARIZED_DETUNING: f64 = 2.0e6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColdAtomSpec {
    /// Two-photon detuning δ; the mass term is `δ/2`.
    pub delta: f64,
    pub t_s: f64,
    pub t_so: f64,
    /// Lattice constant; momenta are measured in `1/a`.
    #[serde(default = "unit")]
    pub a: f64,
    #[serde(default = "one")]
    pub n: u32,
}

fn unit() -> f64 {
    1.0
}

fn one() -> u32 {
    1
}

impl ColdAtomSpec {
    pub fn new(delta: f64, t_s: f64, t_so: f64) -> Self {
        Self {
            delta,
            t_s,
            t_so,
            a: 1.0,
            n: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.delta, self.t_s, self.t_so, self.a].iter().all(|x| x.is_finite());
        if !finite || self.t_s <= 0.0 || self.t_so <= 0.0 || self.a <= 0.0 {
            return Err(Error::InvalidModel(format!(
                "cold-atom spec needs finite delta and t_s, t_so, a > 0, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn mass(&self) -> f64 {
        0.5 * self.delta
    }

    /// `n` when `|δ/2| < 2 t_s`, else 0.
    pub fn topological_number(&self) -> Result<i64> {
        self.validate()?;
        let boundary = 2.0 * self.t_s;
        if (self.mass().abs() - boundary).abs() <= CRITICAL_REL_TOL * boundary {
            return Err(Error::CriticalPoint(format!(
                "cold-atom lattice with |delta/2| = 2 t_s (delta = {})",
                self.delta
            )));
        }
        Ok(if self.mass().abs() < boundary { self.n as i64 } else { 0 })
    }

    /// The spin-polarized `|↓⟩` state as the lower band of a deeply trivial
    /// lattice with the same hoppings.
    pub fn polarized_down(&self) -> Self {
        Self {
            delta: POLARIZED_DETUNING * self.t_s,
            ..*self
        }
    }
}

/// The lattice Hamiltonian as a `yz`-plane model in `q`.
pub fn effective_model(spec: &ColdAtomSpec) -> Result<ModelSpec> {
    spec.validate()?;
    let s = *spec;
    let n = s.n as f64;
    let label = format!("coldatom(delta={}, t_s={}, t_so={}, n={})", s.delta, s.t_s, s.t_so, s.n);
    let f = move |q: f64| {
        let nq = n * q;
        (2.0 * s.t_so * nq.sin(), s.mass() - 2.0 * s.t_s * nq.cos())
    };
    Ok(ModelSpec::Generic(GenericModel {
        label,
        plane: Plane::Yz,
        source: DVectorSource::Callback(Arc::new(f)),
    }))
}

/// Winding magnitude of a model: analytic where the family is known,
/// numerical otherwise.
pub fn topological_number(spec: &ModelSpec, grid: KGrid) -> Result<i64> {
    match spec {
        ModelSpec::Generic(_) => Ok(winding_number_adaptive(spec, grid)?.1.value.abs()),
        _ => spec.analytic_topological_number(),
    }
}

/// Spin-resolved counts per momentum.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityProfile {
    pub q: Vec<f64>,
    pub n_up: Vec<u64>,
    pub n_down: Vec<u64>,
    pub shots: Vec<u64>,
    /// `None` for imported data.
    pub seed: Option<u64>,
}

impl DensityProfile {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let rows = (0..self.len()).map(|j| {
            vec![
                fmt_real(self.q[j]),
                self.n_up[j].to_string(),
                self.n_down[j].to_string(),
                self.shots[j].to_string(),
            ]
        });
        write_rows(w, &["q", "n_up", "n_down", "shots"], rows)
    }

    /// Reads `q,n_up,n_down,shots`. Rows must be ordered by `q` and satisfy
    /// `n_up + n_down = shots`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if header != ["q", "n_up", "n_down", "shots"] {
            return Err(Error::InvalidInput(format!(
                "density csv header must be q,n_up,n_down,shots, got {}",
                header.join(",")
            )));
        }
        let mut out = DensityProfile {
            q: Vec::new(),
            n_up: Vec::new(),
            n_down: Vec::new(),
            shots: Vec::new(),
            seed: None,
        };
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::InvalidInput(format!("density csv row {}: bad {what}", line + 2));
            let q: f64 = rec[0].parse().map_err(|_| bad("q"))?;
            let up: u64 = rec[1].parse().map_err(|_| bad("n_up"))?;
            let down: u64 = rec[2].parse().map_err(|_| bad("n_down"))?;
            let shots: u64 = rec[3].parse().map_err(|_| bad("shots"))?;
            if up + down != shots {
                return Err(bad("counts (n_up + n_down != shots)"));
            }
            if out.q.last().is_some_and(|&prev| q <= prev) {
                return Err(bad("ordering (q must increase)"));
            }
            out.q.push(q);
            out.n_up.push(up);
            out.n_down.push(down);
            out.shots.push(shots);
        }
        if out.is_empty() {
            return Err(Error::InvalidInput("density csv has no rows".into()));
        }
        Ok(out)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }
}

/// Draws `n_up ~ Binomial(shots, |c₊(q)|²)` independently at each grid point.
///
/// Point `j` uses its own ChaCha8 stream `j` under `seed`, so the result does
/// not depend on evaluation order.
pub fn synthesize_densities(
    spec_i: &ModelSpec,
    spec_f: &ModelSpec,
    grid: KGrid,
    shots: u64,
    seed: u64,
) -> Result<DensityProfile> {
    let profile = overlap_direct(spec_i, spec_f, grid)?;
    sample_densities(&grid.points(), profile.c_plus_sq(), shots, seed)
}

/// Binomial sampling of given occupations.
pub fn sample_densities(q: &[f64], c_plus_sq: &[f64], shots: u64, seed: u64) -> Result<DensityProfile> {
    if shots == 0 {
        return Err(Error::InvalidInput("shots must be at least 1".into()));
    }
    let n_up = c_plus_sq
        .par_iter()
        .enumerate()
        .map(|(j, &p)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            let dist = Binomial::new(shots, p.clamp(0.0, 1.0))
                .map_err(|e| Error::InvalidInput(format!("binomial at sample {j}: {e}")))?;
            Ok(dist.sample(&mut rng))
        })
        .collect::<Result<Vec<u64>>>()?;
    Ok(DensityProfile {
        q: q.to_vec(),
        n_down: n_up.iter().map(|u| shots - u).collect(),
        n_up,
        shots: vec![shots; q.len()],
        seed: Some(seed),
    })
}

/// `n_up / (n_up + n_down)` per point.
pub fn infer_overlap(densities: &DensityProfile) -> Result<Vec<f64>> {
    densities
        .n_up
        .iter()
        .zip(&densities.n_down)
        .enumerate()
        .map(|(index, (&up, &down))| {
            if up + down == 0 {
                Err(Error::ZeroShots { index })
            } else {
                Ok(up as f64 / (up + down) as f64)
            }
        })
        .collect()
}

/// Peak-counter report on measured densities.
///
/// `inferred_initial_candidates` come from the measured peak count.
pub fn report_from_densities(
    densities: &DensityProfile,
    nu_final: i64,
    nonnegative_family: bool,
    thresholds: &CpThresholds,
) -> Result<CpReport> {
    let estimate = infer_overlap(densities)?;
    let mut report = count_cp_peaks(&estimate, &densities.q, thresholds);
    report.inferred_initial_candidates = infer_initial(&report, nu_final, nonnegative_family);
    Ok(report)
}

/// Result of one emulated experiment.
#[derive(Clone, Debug, Serialize)]
pub struct ColdAtomRun {
    pub densities: DensityProfile,
    pub estimate: Vec<f64>,
    /// Peak count and flags from the noisy estimate; exact count and residual
    /// from the noise-free model. Candidates use the measured peak count.
    pub report: CpReport,
    pub nu_final: i64,
}

/// Densities → `|c₊|²` estimate → peak count → initial-winding candidates.
pub fn end_to_end(
    spec_i: &ModelSpec,
    spec_f: &ModelSpec,
    grid: KGrid,
    shots: u64,
    seed: u64,
    thresholds: &CpThresholds,
) -> Result<ColdAtomRun> {
    thresholds.validate()?;
    let nu_final = topological_number(spec_f, grid)?;
    // named families have n ≥ 0
    let nonnegative = !matches!(spec_i, ModelSpec::Generic(_));
    let profile = overlap_direct(spec_i, spec_f, grid)?;
    let densities = sample_densities(&grid.points(), profile.c_plus_sq(), shots, seed)?;
    let estimate = infer_overlap(&densities)?;
    let noisy = count_cp_peaks(&estimate, &densities.q, thresholds);
    let exact = count_cp(&profile, thresholds)?;
    let mut report = CpReport {
        exact_count: exact.exact_count,
        exact_residual: exact.exact_residual,
        peak_count: noisy.peak_count,
        false_cp_flags: noisy.false_cp_flags,
        methods_agree: None,
        inferred_initial_candidates: Default::default(),
    };
    report.methods_agree = Some(report.exact_count == report.peak_count);
    report.inferred_initial_candidates = infer_initial(
        &CpReport {
            peak_count: report.peak_count,
            ..CpReport::default()
        },
        nu_final,
        nonnegative,
    );
    Ok(ColdAtomRun {
        densities,
        estimate,
        report,
        nu_final,
    })
}

/// [`end_to_end`] for two lattice settings.
pub fn end_to_end_lattice(
    initial: &ColdAtomSpec,
    final_spec: &ColdAtomSpec,
    grid: KGrid,
    shots: u64,
    seed: u64,
    thresholds: &CpThresholds,
) -> Result<ColdAtomRun> {
    let nu_final = final_spec.topological_number()?;
    initial.topological_number()?;
    let si = effective_model(initial)?;
    let sf = effective_model(final_spec)?;
    let mut run = end_to_end(&si, &sf, grid, shots, seed, thresholds)?;
    // both lattices have n ≥ 0 by construction
    run.nu_final = nu_final;
    run.report.inferred_initial_candidates = infer_initial(
        &CpReport {
            peak_count: run.report.peak_count,
            ..CpReport::default()
        },
        nu_final,
        true,
    );
    Ok(run)
}
