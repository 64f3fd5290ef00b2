use quench_winding::cp::{count_cp, CpThresholds};
use quench_winding::emission::{
    count_cp_spectrum, invert_spectrum, positive_root, spectrum, InversionKernel, DEFAULT_BINS,
};
use quench_winding::overlap::{overlap_at, overlap_direct};
use quench_winding::{Error, KGrid, ModelSpec};

fn pair(n1: u32) -> (ModelSpec, ModelSpec) {
    (ModelSpec::qwz(1.0, 2.0, 1.0, n1).unwrap(), ModelSpec::qwz(5.0, 2.0, 1.0, 1).unwrap())
}

/// cos k₁ from (ω/2)² = t_so² (1 − c²) + (m − 2 t_s c)², the root in [−1, 1].
fn cos_root(m: f64, t_s: f64, t_so: f64, omega: f64) -> f64 {
    let a = 4.0 * t_s * t_s - t_so * t_so;
    let b = -4.0 * m * t_s;
    let c = t_so * t_so + m * m - 0.25 * omega * omega;
    let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
    [(-b - disc) / (2.0 * a), (-b + disc) / (2.0 * a)]
        .into_iter()
        .find(|x| (-1.0 - 1e-12..=1.0 + 1e-12).contains(x))
        .expect("root inside the zone")
        .clamp(-1.0, 1.0)
}

#[test]
fn band_spans_two_to_eighteen() {
    let (si, sf) = pair(3);
    let sp = spectrum(&si, &sf, KGrid::new(4096).unwrap(), DEFAULT_BINS).unwrap();
    assert!((sp.omega_min - 2.0).abs() < 1e-9);
    assert!((sp.omega_max - 18.0).abs() < 1e-9);
    assert!(sp.monotone);
}

#[test]
fn roots_match_the_quadratic() {
    let (_, sf) = pair(1);
    for j in 1..200 {
        let omega = 2.0 + 16.0 * j as f64 / 200.0;
        let k = positive_root(&sf, omega).unwrap();
        let c = cos_root(5.0, 2.0, 1.0, omega);
        assert!((k - c.acos()).abs() < 1e-9, "omega={omega}");
    }
}

#[test]
fn binning_conserves_intensity_and_stays_nonnegative() {
    for n1 in 1..=4 {
        let (si, sf) = pair(n1);
        let sp = spectrum(&si, &sf, KGrid::new(4096).unwrap(), DEFAULT_BINS).unwrap();
        assert!(sp.conservation_error() < 1e-6, "n1={n1}: {}", sp.conservation_error());
        assert!(sp.k_samples.iter().all(|s| s.intensity >= 0.0));
        assert!(sp.bins.iter().all(|b| b.point_density >= 0.0 && b.mass >= 0.0));
        let rec = invert_spectrum(&sp, &sf, InversionKernel::Consistent).unwrap();
        for r in rec.iter().filter_map(|r| r.c_plus_4) {
            assert!((0.0..=1.0 + 1e-6).contains(&r), "{r}");
        }
    }
}

#[test]
fn inversion_reproduces_direct_occupation() {
    for n1 in 1..=3 {
        let (si, sf) = pair(n1);
        let sp = spectrum(&si, &sf, KGrid::new(4096).unwrap(), DEFAULT_BINS).unwrap();
        let rec = invert_spectrum(&sp, &sf, InversionKernel::Consistent).unwrap();
        let floor = 1e-9 * sp.peak_density();
        let mut checked = 0;
        for r in rec.iter().filter(|r| r.point_density >= floor) {
            let k1 = cos_root(5.0, 2.0, 1.0, r.omega).acos();
            let want = overlap_at(&si, &sf, k1).unwrap().0.powi(2);
            let got = r.c_plus_4.expect("conditioned bin");
            assert!((got - want).abs() <= 1e-6 * want.max(f64::MIN_POSITIVE), "n1={n1} omega={}: {got} vs {want}", r.omega);
            checked += 1;
        }
        assert!(checked > DEFAULT_BINS / 2);
    }
}

#[test]
fn literal_denominator_does_not_invert_the_forward_model() {
    let (si, sf) = pair(3);
    let sp = spectrum(&si, &sf, KGrid::new(4096).unwrap(), DEFAULT_BINS).unwrap();
    let rec = invert_spectrum(&sp, &sf, InversionKernel::Literal).unwrap();
    let worst = rec
        .iter()
        .filter_map(|r| {
            let want = overlap_at(&si, &sf, r.k1).unwrap().0.powi(2);
            r.c_plus_4.filter(|_| want > 1e-3).map(|got| (got - want).abs() / want)
        })
        .fold(0.0, f64::max);
    assert!(worst > 1e-2, "{worst}");
}

#[test]
fn emission_is_dark_where_the_dipole_kernel_vanishes() {
    let (si, sf) = pair(2);
    let sp = spectrum(&si, &sf, KGrid::new(4096).unwrap(), DEFAULT_BINS).unwrap();
    // the kernel of the final band vanishes where cos k = 0.8
    let omega_zero = 2.0 * (1.0f64 - 0.64 + (5.0 - 3.2f64).powi(2)).sqrt();
    let j = sp
        .bins
        .iter()
        .position(|b| (b.lo..b.hi).contains(&omega_zero))
        .unwrap();
    let peak = sp.peak_density();
    assert!(sp.bins[j].point_density < 1e-9 * peak, "{}", sp.bins[j].point_density / peak);
    assert!(sp.bins[j - 1].point_density > sp.bins[j].point_density);
    assert!(sp.bins[j + 1].point_density > sp.bins[j].point_density);
}

#[test]
fn omega_route_agrees_with_k_route() {
    let grid = KGrid::new(4096).unwrap();
    let th = CpThresholds::default();
    for n1 in 1..=4 {
        let (si, sf) = pair(n1);
        let sp = spectrum(&si, &sf, grid, DEFAULT_BINS).unwrap();
        let rec = invert_spectrum(&sp, &sf, InversionKernel::Consistent).unwrap();
        let omega = count_cp_spectrum(&rec, &th);
        let k = count_cp(&overlap_direct(&si, &sf, grid).unwrap(), &th).unwrap();
        assert_eq!(Some(omega), k.exact_count, "n1={n1}");
        assert_eq!(omega, n1 as u64);
    }
}

#[test]
fn non_monotone_final_band_is_refused() {
    let si = ModelSpec::qwz(1.0, 2.0, 1.0, 3).unwrap();
    let sf = ModelSpec::qwz(5.0, 2.0, 1.0, 2).unwrap();
    let e = spectrum(&si, &sf, KGrid::new(4096).unwrap(), DEFAULT_BINS).unwrap_err();
    assert!(matches!(e, Error::MultiMinimum(_)), "{e}");
}

#[test]
fn spectrum_files_are_reproducible() {
    let (si, sf) = pair(3);
    let grid = KGrid::new(1024).unwrap();
    let write = || {
        let sp = spectrum(&si, &sf, grid, 128).unwrap();
        let mut buf = Vec::new();
        sp.write_k_csv(&mut buf).unwrap();
        buf
    };
    assert_eq!(write(), write());
}
