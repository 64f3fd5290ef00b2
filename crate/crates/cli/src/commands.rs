use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use quench_winding::coldatom::{
    end_to_end, end_to_end_lattice, report_from_densities, topological_number, DensityProfile,
};
use quench_winding::cp::{count_cp, CpReport, CpThresholds};
use quench_winding::emission::{count_cp_spectrum, invert_spectrum, spectrum, write_omega_csv, InversionKernel};
use quench_winding::gauge::{angle_profile, winding_number_adaptive, Winding};
use quench_winding::io::{fmt_real, write_rows};
use quench_winding::overlap::{overlap_closed_form_with, overlap_direct_with, symmetry_check, OverlapOptions};
use quench_winding::{KGrid, ModelSpec};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{CliError, CliResult, ModelArg};
use crate::svg::line_chart;

pub struct Output {
    dir: PathBuf,
    svg: bool,
}

impl Output {
    pub fn new(dir: Option<PathBuf>, svg: bool) -> CliResult<Self> {
        let dir = dir.unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, svg })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn writer(&self, name: &str) -> CliResult<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.path(name))?))
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        let mut w = self.writer(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    fn chart(&self, name: &str, title: &str, x_label: &str, x: &[f64], series: &[(&str, &[f64])]) -> CliResult<()> {
        if self.svg {
            fs::write(self.path(name), line_chart(title, x_label, x, series))?;
        }
        Ok(())
    }
}

fn omega_range(spec: &ModelSpec, grid: KGrid) -> CliResult<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for k in grid.points().into_iter().chain([0.0, std::f64::consts::PI]) {
        let w = spec.gap_frequency(k)?;
        lo = lo.min(w);
        hi = hi.max(w);
    }
    Ok((lo, hi))
}

#[derive(Serialize)]
struct ModelSummary {
    model: String,
    plane: String,
    angle_kind: &'static str,
    grid_n: usize,
    analytic_winding: Option<i64>,
    winding: i64,
    angle_winding: Winding,
    omega_min: f64,
    omega_max: f64,
    agree: Option<bool>,
}

pub fn cmd_model(model: &ModelArg, grid: KGrid, out: &Output) -> CliResult<()> {
    let spec = model.spec()?;
    let analytic = match model {
        ModelArg::Lattice(c) => Some(c.topological_number()?),
        ModelArg::Spec(ModelSpec::Generic(_)) => None,
        ModelArg::Spec(s) => Some(s.analytic_topological_number()?),
    };
    let (used, w) = winding_number_adaptive(&spec, grid)?;
    let profile = angle_profile(&spec, used)?;
    let (omega_min, omega_max) = omega_range(&spec, used)?;

    let ks = used.points();
    let bands = profile.bands();
    let rows = (0..used.len()).map(|j| {
        vec![
            fmt_real(ks[j]),
            fmt_real(bands[j].e_plus),
            fmt_real(bands[j].e_minus),
            fmt_real(profile.angles()[j]),
        ]
    });
    write_rows(out.writer("model.csv")?, &["k", "E_plus", "E_minus", "angle"], rows)?;
    let e_plus: Vec<f64> = bands.iter().map(|b| b.e_plus).collect();
    let e_minus: Vec<f64> = bands.iter().map(|b| b.e_minus).collect();
    out.chart("bands.svg", &model.describe(), "k", &ks, &[("E+", &e_plus), ("E-", &e_minus)])?;
    out.chart("angle.svg", &model.describe(), "k", &ks, &[("angle", profile.angles())])?;

    let agree = analytic.map(|a| a == w.value.abs());
    out.json(
        "model.json",
        &ModelSummary {
            model: model.describe(),
            plane: spec.plane().to_string(),
            angle_kind: profile.kind().as_str(),
            grid_n: used.len(),
            analytic_winding: analytic,
            winding: w.value.abs(),
            angle_winding: w,
            omega_min,
            omega_max,
            agree,
        },
    )?;
    if agree == Some(false) {
        return Err(CliError::Disagreement(format!(
            "analytic winding {} but numerical winding {}",
            analytic.unwrap_or_default(),
            w.value.abs()
        )));
    }
    println!("{}: winding {} (residual {:.2e})", model.describe(), w.value.abs(), w.residual);
    Ok(())
}

fn family_number(arg: &ModelArg, spec: &ModelSpec, grid: KGrid) -> CliResult<i64> {
    match arg {
        ModelArg::Lattice(c) => Ok(c.topological_number()?),
        ModelArg::Spec(_) => Ok(topological_number(spec, grid)?),
    }
}

#[derive(Serialize)]
struct QuenchSummary {
    initial: String,
    #[serde(rename = "final")]
    final_model: String,
    grid_n: usize,
    plane: Option<String>,
    nu_initial: i64,
    nu_final: i64,
    expected_count: i64,
    closed_form_max_diff: f64,
    max_asymmetry: f64,
    report: CpReport,
}

pub fn cmd_quench(
    initial: &ModelArg,
    final_arg: &ModelArg,
    grid: KGrid,
    thresholds: &CpThresholds,
    allow_cross_plane: bool,
    out: &Output,
) -> CliResult<()> {
    let (si, sf) = (initial.spec()?, final_arg.spec()?);
    let opts = OverlapOptions { allow_cross_plane };
    let direct = overlap_direct_with(&si, &sf, grid, opts)?;
    let closed = overlap_closed_form_with(&si, &sf, grid, opts)?;
    let nu_i = family_number(initial, &si, grid)?;
    let nu_f = family_number(final_arg, &sf, grid)?;
    let nonnegative = !matches!(si, ModelSpec::Generic(_)) || matches!(initial, ModelArg::Lattice(_));
    let report = count_cp(&direct, thresholds)?.with_inferred(nu_f, nonnegative);

    direct.write_csv(out.writer("overlap.csv")?)?;
    let ks = grid.points();
    out.chart("overlap.svg", "|c+|^2", "k", &ks, &[("|c+|^2", direct.c_plus_sq())])?;

    let expected = (nu_i - nu_f).abs();
    let summary = QuenchSummary {
        initial: initial.describe(),
        final_model: final_arg.describe(),
        grid_n: grid.len(),
        plane: direct.plane().map(|p| p.to_string()),
        nu_initial: nu_i,
        nu_final: nu_f,
        expected_count: expected,
        closed_form_max_diff: direct
            .c_plus_sq()
            .iter()
            .zip(closed.c_plus_sq())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max),
        max_asymmetry: symmetry_check(&direct),
        report: report.clone(),
    };
    out.json("report.json", &summary)?;
    println!(
        "exact {:?}, peaks {:?}, false CP flags {}, candidates {:?}",
        report.exact_count,
        report.peak_count,
        report.false_cp_flags.len(),
        report.inferred_initial_candidates
    );
    if report.exact_count.is_some_and(|c| c as i64 != expected) {
        return Err(CliError::Disagreement(format!(
            "exact count {:?} differs from |nu_i - nu_f| = {expected}",
            report.exact_count
        )));
    }
    if report.methods_agree == Some(false) {
        return Err(CliError::Disagreement(format!(
            "peak counter found {:?} CPs, exact count {:?}",
            report.peak_count, report.exact_count
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct EmissionSummary {
    initial: String,
    #[serde(rename = "final")]
    final_model: String,
    grid_n: usize,
    bins: usize,
    omega_min: f64,
    omega_max: f64,
    conservation_error: f64,
    unconditioned_bins: usize,
    transitions: u64,
    nu_final: i64,
    n_initial_candidates: Vec<i64>,
    k_domain_count: Option<u64>,
    agree: bool,
}

pub fn cmd_emission(
    initial: &ModelArg,
    final_arg: &ModelArg,
    grid: KGrid,
    bins: usize,
    thresholds: &CpThresholds,
    out: &Output,
) -> CliResult<()> {
    let (si, sf) = (initial.spec()?, final_arg.spec()?);
    let sp = spectrum(&si, &sf, grid, bins)?;
    let rec = invert_spectrum(&sp, &sf, InversionKernel::Consistent)?;
    let transitions = count_cp_spectrum(&rec, thresholds);
    let profile = overlap_direct_with(&si, &sf, grid, OverlapOptions::default())?;
    let k_count = count_cp(&profile, thresholds)?.exact_count;
    let nu_f = family_number(final_arg, &sf, grid)?;
    let t = transitions as i64;
    let mut candidates: Vec<i64> = [nu_f + t, nu_f - t].into_iter().filter(|&c| c >= 0).collect();
    candidates.dedup();

    sp.write_k_csv(out.writer("emission_k.csv")?)?;
    write_omega_csv(out.writer("emission_omega.csv")?, &rec)?;
    let omegas: Vec<f64> = rec.iter().map(|r| r.omega).collect();
    let c4: Vec<f64> = rec.iter().map(|r| r.c_plus_4.unwrap_or(f64::NAN)).collect();
    out.chart("emission_omega.svg", "|c+(omega)|^4", "omega", &omegas, &[("|c+|^4", &c4)])?;

    let agree = k_count == Some(transitions);
    out.json(
        "emission.json",
        &EmissionSummary {
            initial: initial.describe(),
            final_model: final_arg.describe(),
            grid_n: grid.len(),
            bins,
            omega_min: sp.omega_min,
            omega_max: sp.omega_max,
            conservation_error: sp.conservation_error(),
            unconditioned_bins: rec.iter().filter(|r| r.c_plus_4.is_none()).count(),
            transitions,
            nu_final: nu_f,
            n_initial_candidates: candidates.clone(),
            k_domain_count: k_count,
            agree,
        },
    )?;
    println!(
        "omega in [{}, {}], {transitions} transitions, initial winding candidates {candidates:?}",
        sp.omega_min, sp.omega_max
    );
    if !agree {
        return Err(CliError::Disagreement(format!(
            "omega-domain transitions {transitions} but k-domain count {k_count:?}"
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct ColdAtomSummary {
    initial: Option<String>,
    #[serde(rename = "final")]
    final_model: String,
    shots: Option<u64>,
    seed: Option<u64>,
    points: usize,
    nu_final: i64,
    report: CpReport,
}

pub struct ColdAtomArgs<'a> {
    pub initial: Option<&'a ModelArg>,
    pub final_arg: &'a ModelArg,
    pub densities: Option<&'a Path>,
    pub grid: KGrid,
    pub shots: u64,
    pub seed: u64,
}

pub fn cmd_coldatom(a: ColdAtomArgs<'_>, thresholds: &CpThresholds, out: &Output) -> CliResult<()> {
    let sf = a.final_arg.spec()?;
    let (densities, estimate, report, nu_f) = if let Some(path) = a.densities {
        let d = DensityProfile::from_csv_path(path)?;
        let nu_f = family_number(a.final_arg, &sf, a.grid)?;
        let report = report_from_densities(&d, nu_f, true, thresholds)?;
        let est = quench_winding::coldatom::infer_overlap(&d)?;
        (d, est, report, nu_f)
    } else {
        let initial = a
            .initial
            .ok_or_else(|| CliError::Config("coldatom needs --initial, --polarized or --densities".into()))?;
        let run = match (initial, a.final_arg) {
            (ModelArg::Lattice(ci), ModelArg::Lattice(cf)) => end_to_end_lattice(ci, cf, a.grid, a.shots, a.seed, thresholds)?,
            _ => end_to_end(&initial.spec()?, &sf, a.grid, a.shots, a.seed, thresholds)?,
        };
        (run.densities, run.estimate, run.report, run.nu_final)
    };

    densities.write_csv(out.writer("densities.csv")?)?;
    let rows = densities
        .q
        .iter()
        .zip(&estimate)
        .map(|(q, c)| vec![fmt_real(*q), fmt_real(*c)]);
    write_rows(out.writer("estimate.csv")?, &["q", "c_plus_sq"], rows)?;
    out.chart("estimate.svg", "n_up / (n_up + n_down)", "q", &densities.q, &[("estimate", &estimate)])?;
    out.json(
        "report.json",
        &ColdAtomSummary {
            initial: a.initial.map(ModelArg::describe),
            final_model: a.final_arg.describe(),
            shots: a.densities.is_none().then_some(a.shots),
            seed: densities.seed,
            points: densities.len(),
            nu_final: nu_f,
            report: report.clone(),
        },
    )?;
    println!(
        "peaks {:?}, false CP flags {}, initial winding candidates {:?}",
        report.peak_count,
        report.false_cp_flags.len(),
        report.inferred_initial_candidates
    );
    Ok(())
}

pub struct SweepGrid {
    pub m: Vec<f64>,
    pub n: Vec<u32>,
    pub t_s: f64,
    pub t_so: Vec<f64>,
}

impl SweepGrid {
    pub fn default_grid() -> Self {
        Self {
            m: vec![1.0, 5.0],
            n: (0..5).collect(),
            t_s: 2.0,
            t_so: vec![0.5, 1.0, 3.0],
        }
    }
}

struct SweepRow {
    m1: f64,
    n1: u32,
    m2: f64,
    n2: u32,
    t_so: f64,
    expected: i64,
    exact: Option<u64>,
    peaks: Option<u64>,
    false_cps: usize,
}

/// Runs every (initial, final) pair of the grid. With `flag_false_cps` the
/// table gains a `false_cps` column and a row agrees as soon as the exact
/// count is right; otherwise both counters must match the expectation.
pub fn cmd_sweep(g: &SweepGrid, grid: KGrid, thresholds: &CpThresholds, flag_false_cps: bool, out: &Output) -> CliResult<()> {
    if g.m.is_empty() || g.n.is_empty() || g.t_so.is_empty() {
        return Err(CliError::Config("sweep grid is empty (need m, n and t_so values)".into()));
    }
    let mut cases = Vec::new();
    for &t_so in &g.t_so {
        for &m1 in &g.m {
            for &n1 in &g.n {
                for &m2 in &g.m {
                    for &n2 in &g.n {
                        cases.push((t_so, m1, n1, m2, n2));
                    }
                }
            }
        }
    }
    let rows = cases
        .par_iter()
        .map(|&(t_so, m1, n1, m2, n2)| -> CliResult<SweepRow> {
            let si = ModelSpec::qwz(m1, g.t_s, t_so, n1)?;
            let sf = ModelSpec::qwz(m2, g.t_s, t_so, n2)?;
            let expected = (si.analytic_topological_number()? - sf.analytic_topological_number()?).abs();
            let p = overlap_direct_with(&si, &sf, grid, OverlapOptions::default())?;
            let r = count_cp(&p, thresholds)?;
            Ok(SweepRow {
                m1,
                n1,
                m2,
                n2,
                t_so,
                expected,
                exact: r.exact_count,
                peaks: r.peak_count,
                false_cps: r.false_cp_flags.len(),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;

    let agree = |r: &SweepRow| {
        let exact_ok = r.exact == Some(r.expected as u64);
        exact_ok && (flag_false_cps || r.peaks == Some(r.expected as u64))
    };
    let mut header = vec!["m1", "n1", "m2", "n2", "t_so", "expected", "exact_count", "peak_count", "agree"];
    if flag_false_cps {
        header.push("false_cps");
    }
    let opt = |v: Option<u64>| v.map(|c| c.to_string()).unwrap_or_default();
    let table = rows.iter().map(|r| {
        let mut row = vec![
            fmt_real(r.m1),
            r.n1.to_string(),
            fmt_real(r.m2),
            r.n2.to_string(),
            fmt_real(r.t_so),
            r.expected.to_string(),
            opt(r.exact),
            opt(r.peaks),
            agree(r).to_string(),
        ];
        if flag_false_cps {
            row.push(r.false_cps.to_string());
        }
        row
    });
    write_rows(out.writer("sweep.csv")?, &header, table)?;

    let bad = rows.iter().filter(|r| !agree(r)).count();
    let flagged = rows.iter().filter(|r| r.false_cps > 0).count();
    println!("{} rows, {bad} disagreeing, {flagged} with false CP flags", rows.len());
    if bad > 0 {
        return Err(CliError::Disagreement(format!("{bad} sweep rows disagree")));
    }
    Ok(())
}
