use quench_winding::coldatom::{
    effective_model, end_to_end, end_to_end_lattice, infer_overlap, sample_densities, synthesize_densities,
    ColdAtomSpec, DensityProfile,
};
use quench_winding::cp::CpThresholds;
use quench_winding::overlap::overlap_direct;
use quench_winding::{KGrid, ModelSpec};
use rayon::prelude::*;

/// Lattice with the same Bloch magnitudes as `qwz(m, t_s, t_so, n)`.
fn lattice(m: f64, t_s: f64, t_so: f64, n: u32) -> ColdAtomSpec {
    ColdAtomSpec {
        delta: 2.0 * m,
        t_s,
        t_so: 0.5 * t_so,
        a: 1.0,
        n,
    }
}

#[test]
fn yz_lattice_and_xz_model_share_overlaps() {
    let grid = KGrid::new(1024).unwrap();
    for (m1, n1, m2, n2, t_so) in [(1.0, 3, 5.0, 1, 1.0), (1.0, 1, 1.0, 3, 0.5), (5.0, 2, 1.0, 4, 3.0), (1.0, 2, -1.0, 2, 1.0)] {
        let xz = overlap_direct(
            &ModelSpec::qwz(m1, 2.0, t_so, n1).unwrap(),
            &ModelSpec::qwz(m2, 2.0, t_so, n2).unwrap(),
            grid,
        )
        .unwrap();
        let yz = overlap_direct(
            &effective_model(&lattice(m1, 2.0, t_so, n1)).unwrap(),
            &effective_model(&lattice(m2, 2.0, t_so, n2)).unwrap(),
            grid,
        )
        .unwrap();
        for (a, b) in xz.c_plus_sq().iter().zip(yz.c_plus_sq()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn estimator_is_unbiased_with_binomial_spread() {
    let grid = KGrid::new(256).unwrap();
    let si = ModelSpec::qwz(1.0, 2.0, 1.0, 2).unwrap();
    let sf = ModelSpec::qwz(5.0, 2.0, 1.0, 1).unwrap();
    let p = overlap_direct(&si, &sf, grid).unwrap().c_plus_sq().to_vec();
    let (shots, seeds) = (1000u64, 400u64);
    let runs: Vec<Vec<f64>> = (0..seeds)
        .into_par_iter()
        .map(|s| infer_overlap(&synthesize_densities(&si, &sf, grid, shots, s).unwrap()).unwrap())
        .collect();
    let bound = 0.5 / (shots as f64).sqrt();
    for (j, &pj) in p.iter().enumerate() {
        let mean = runs.iter().map(|r| r[j]).sum::<f64>() / seeds as f64;
        let var = runs.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (seeds - 1) as f64;
        // five standard errors of the mean, for 256 points
        assert!((mean - pj).abs() <= 5.0 * bound / (seeds as f64).sqrt(), "j={j}: {mean} vs {pj}");
        assert!(var.sqrt() <= 1.2 * bound, "j={j}: sd {}", var.sqrt());
    }
}

#[test]
fn noisy_two_to_zero_shows_two_peaks() {
    let grid = KGrid::new(1024).unwrap();
    let si = ModelSpec::qwz(1.0, 2.0, 1.0, 2).unwrap();
    let sf = ModelSpec::qwz(5.0, 2.0, 1.0, 1).unwrap();
    let th = CpThresholds::default();
    let hits = (0..100u64)
        .into_par_iter()
        .filter(|&s| end_to_end(&si, &sf, grid, 1000, s, &th).unwrap().report.peak_count == Some(2))
        .count();
    assert!(hits >= 99, "{hits}/100");
}

#[test]
fn lattice_three_to_zero_infers_three() {
    let grid = KGrid::new(1024).unwrap();
    let th = CpThresholds::default();
    let run = end_to_end_lattice(&lattice(1.0, 2.0, 1.0, 3), &lattice(5.0, 2.0, 1.0, 1), grid, 1000, 3, &th).unwrap();
    assert_eq!(run.nu_final, 0);
    assert_eq!(run.report.exact_count, Some(3));
    assert_eq!(run.report.inferred_initial_candidates.iter().copied().collect::<Vec<_>>(), vec![3]);
}

#[test]
fn identity_quench_infers_the_final_number() {
    let grid = KGrid::new(1024).unwrap();
    let th = CpThresholds::default();
    let spec = lattice(1.0, 2.0, 1.0, 2);
    for shots in [1, 10, 1000] {
        let run = end_to_end_lattice(&spec, &spec, grid, shots, 9, &th).unwrap();
        assert!(run.densities.n_up.iter().all(|&u| u == 0));
        assert_eq!(run.report.inferred_initial_candidates.iter().copied().collect::<Vec<_>>(), vec![2]);
    }
}

#[test]
fn single_shot_data_is_reported_as_disagreeing() {
    let grid = KGrid::new(1024).unwrap();
    let si = ModelSpec::qwz(1.0, 2.0, 1.0, 3).unwrap();
    let sf = ModelSpec::qwz(5.0, 2.0, 1.0, 1).unwrap();
    let th = CpThresholds::default();
    let disagree = (0..50u64)
        .filter(|&s| end_to_end(&si, &sf, grid, 1, s, &th).unwrap().report.methods_agree == Some(false))
        .count();
    assert!(disagree >= 45, "{disagree}/50");
}

#[test]
fn polarized_state_into_a_nontrivial_lattice() {
    let grid = KGrid::new(1024).unwrap();
    let fin = lattice(1.0, 2.0, 1.0, 1);
    let run = end_to_end_lattice(&fin.polarized_down(), &fin, grid, 1000, 11, &CpThresholds::default()).unwrap();
    assert_eq!(run.report.exact_count, Some(1));
    assert_eq!(run.report.peak_count, Some(1));
    assert_eq!(run.report.inferred_initial_candidates.iter().copied().collect::<Vec<_>>(), vec![0, 2]);
}

#[test]
fn density_files_round_trip_and_are_reproducible() {
    let grid = KGrid::new(512).unwrap();
    let si = ModelSpec::qwz(1.0, 2.0, 0.5, 4).unwrap();
    let sf = ModelSpec::qwz(5.0, 2.0, 0.5, 1).unwrap();
    let write = |seed| {
        let d = synthesize_densities(&si, &sf, grid, 500, seed).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        (d, buf)
    };
    let (d, a) = write(5);
    let (_, b) = write(5);
    let (_, c) = write(6);
    assert_eq!(a, b);
    assert_ne!(a, c);
    let back = DensityProfile::from_csv_reader(a.as_slice()).unwrap();
    assert_eq!(back.n_up, d.n_up);
    assert_eq!(back.n_down, d.n_down);
    assert_eq!(back.q, d.q);
}

#[test]
fn sampling_is_independent_of_thread_count() {
    let p: Vec<f64> = (0..300).map(|j| (j as f64 / 300.0).powi(2)).collect();
    let q: Vec<f64> = (0..300).map(|j| j as f64).collect();
    let many = sample_densities(&q, &p, 1000, 17).unwrap();
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| sample_densities(&q, &p, 1000, 17).unwrap());
    assert_eq!(many, one);
}
