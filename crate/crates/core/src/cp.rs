//! Complete-peak (CP) counting.
//!
//! A CP is an excursion of `|c₊|²` from 0 up to 1 and back to 0. Two counters
//! are provided: the exact one reads the winding of the angle difference, the
//! measurement-style one runs a hysteresis state machine over the samples.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gauge::winding_from_parts;
use crate::overlap::OverlapProfile;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CpThresholds {
    /// A sample at or above `1 - eps_hi` is high.
    pub eps_hi: f64,
    /// A sample at or below `eps_lo` is low.
    pub eps_lo: f64,
    /// Lower edge of the band in which a local maximum is suspicious.
    pub suspect_low: f64,
}

impl Default for CpThresholds {
    fn default() -> Self {
        Self {
            eps_hi: 0.02,
            eps_lo: 0.02,
            suspect_low: 0.5,
        }
    }
}

impl CpThresholds {
    pub fn validate(&self) -> Result<()> {
        let ok = self.eps_hi > 0.0
            && self.eps_lo > 0.0
            && self.eps_lo < 1.0 - self.eps_hi
            && self.suspect_low > self.eps_lo
            && self.suspect_low < 1.0 - self.eps_hi;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "thresholds need 0 < eps_lo < suspect_low < 1 - eps_hi, got {self:?}"
            )))
        }
    }

    fn is_high(&self, x: f64) -> bool {
        x >= 1.0 - self.eps_hi
    }

    fn is_low(&self, x: f64) -> bool {
        x <= self.eps_lo
    }
}

/// A near-unity local maximum that did not reach the high threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FalseCp {
    pub index: usize,
    /// `k` or `ω`, whichever axis the samples live on.
    pub location: f64,
    pub height: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CpReport {
    pub exact_count: Option<u64>,
    pub exact_residual: Option<f64>,
    pub peak_count: Option<u64>,
    pub false_cp_flags: Vec<FalseCp>,
    /// `None` unless both counters ran.
    pub methods_agree: Option<bool>,
    pub inferred_initial_candidates: BTreeSet<i64>,
}

impl CpReport {
    /// The CP count used for inference: exact if available, else peaks.
    pub fn count(&self) -> Option<u64> {
        self.exact_count.or(self.peak_count)
    }

    /// Fills `inferred_initial_candidates` from the final winding.
    pub fn with_inferred(mut self, nu_final: i64, nonnegative_family: bool) -> Self {
        self.inferred_initial_candidates = infer_initial(&self, nu_final, nonnegative_family);
        self
    }

    fn merge_agreement(&mut self) {
        self.methods_agree = match (self.exact_count, self.peak_count) {
            (Some(a), Some(b)) => Some(a == b),
            _ => None,
        };
    }
}

/// CP count from the winding of `φ_i − φ_f`: `|total change| / π`.
pub fn count_cp_exact(profile: &OverlapProfile) -> Result<CpReport> {
    if profile.plane().is_none() {
        return Err(Error::Unsupported(
            "exact CP counting needs both models in one Pauli plane".into(),
        ));
    }
    let w = winding_from_parts(
        profile.delta_total(),
        profile.delta_rate(),
        profile.grid().spacing(),
    )?;
    Ok(CpReport {
        exact_count: Some(w.value.unsigned_abs()),
        exact_residual: Some(w.residual),
        ..CpReport::default()
    })
}

/// Hysteresis CP count over periodic samples.
///
/// Starting from the first low sample, a CP is registered on every
/// low → high → low cycle. An excursion between two low samples that peaks
/// in `[suspect_low, 1 - eps_hi)` is reported as a false CP and not counted.
/// `locations` only labels the flags.
pub fn count_cp_peaks(samples: &[f64], locations: &[f64], thresholds: &CpThresholds) -> CpReport {
    let n = samples.len();
    let mut count = 0u64;
    if let Some(start) = samples.iter().position(|&x| thresholds.is_low(x)) {
        let mut high = false;
        for t in 1..=n {
            let x = samples[(start + t) % n];
            if !high && thresholds.is_high(x) {
                high = true;
            } else if high && thresholds.is_low(x) {
                high = false;
                count += 1;
            }
        }
    }
    CpReport {
        peak_count: Some(count),
        false_cp_flags: suspect_maxima(samples, locations, thresholds, true),
        ..CpReport::default()
    }
}

fn suspect_maxima(samples: &[f64], locations: &[f64], th: &CpThresholds, periodic: bool) -> Vec<FalseCp> {
    let n = samples.len();
    let lows: Vec<usize> = (0..n).filter(|&i| th.is_low(samples[i])).collect();
    if lows.is_empty() {
        return Vec::new();
    }
    // excursions strictly between consecutive low samples
    let mut runs: Vec<(usize, usize)> = lows.windows(2).map(|w| (w[0] + 1, w[1])).collect();
    if periodic {
        runs.push((lows[lows.len() - 1] + 1, lows[0] + n));
    }
    runs.into_iter()
        .filter(|(a, b)| b > a)
        .filter_map(|(a, b)| {
            let idx = (a..b).map(|t| t % n);
            let peak = idx.clone().max_by(|&i, &j| samples[i].total_cmp(&samples[j]))?;
            let reached_high = idx.clone().any(|i| th.is_high(samples[i]));
            let height = samples[peak];
            (!reached_high && height >= th.suspect_low).then(|| FalseCp {
                index: peak,
                location: locations.get(peak).copied().unwrap_or(peak as f64),
                height,
            })
        })
        .collect()
}

/// Both counters on one profile. The exact counter is skipped for
/// cross-plane profiles.
pub fn count_cp(profile: &OverlapProfile, thresholds: &CpThresholds) -> Result<CpReport> {
    let ks = profile.grid().points();
    let peaks = count_cp_peaks(profile.c_plus_sq(), &ks, thresholds);
    let mut report = if profile.plane().is_some() {
        count_cp_exact(profile)?
    } else {
        CpReport::default()
    };
    report.peak_count = peaks.peak_count;
    report.false_cp_flags = peaks.false_cp_flags;
    report.merge_agreement();
    Ok(report)
}

/// Initial winding numbers compatible with the CP count and `nu_final`.
///
/// The observable fixes only `|ν_i − ν_f|`, so both signs are returned;
/// `nonnegative_family` drops negative candidates.
pub fn infer_initial(report: &CpReport, nu_final: i64, nonnegative_family: bool) -> BTreeSet<i64> {
    let Some(delta) = report.count() else {
        return BTreeSet::new();
    };
    let delta = delta as i64;
    [nu_final + delta, nu_final - delta]
        .into_iter()
        .filter(|&c| !nonnegative_family || c >= 0)
        .collect()
}

/// Number of hysteresis transitions (low → high and high → low, each counted
/// once) along non-periodic samples. The state at the first threshold
/// reached is taken as the starting state, not as a transition.
pub fn count_transitions(samples: &[f64], thresholds: &CpThresholds) -> u64 {
    let mut state: Option<bool> = None;
    let mut transitions = 0;
    for &x in samples {
        let now = if thresholds.is_high(x) {
            Some(true)
        } else if thresholds.is_low(x) {
            Some(false)
        } else {
            None
        };
        if let Some(now) = now {
            if state.is_some_and(|s| s != now) {
                transitions += 1;
            }
            state = Some(now);
        }
    }
    transitions
}

/// Suspect maxima of non-periodic samples, as in [`count_cp_peaks`].
pub fn suspect_maxima_open(samples: &[f64], locations: &[f64], thresholds: &CpThresholds) -> Vec<FalseCp> {
    suspect_maxima(samples, locations, thresholds, false)
}
