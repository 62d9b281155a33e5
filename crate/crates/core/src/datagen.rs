//! Synthetic cohorts with a planted label signal and controllable
//! missingness.
//!
//! Each feature follows a stationary AR(1) process `x_t = 0.8 x_{t−1} + ε_t`,
//! `ε ~ N(0, 0.36)` (unit stationary variance), shifted by +5 so a raw 0 never
//! looks like a real measurement. Labels come from a logistic model on a
//! per-patient statistic of feature 0, with the intercept bisected until the
//! realized prevalence is on target.

use serde::{Deserialize, Serialize};

use crate::data::{default_feature_names, Dataset, Mask, PatientJourney};
use crate::error::{Error, Result};
use crate::numerics::{sigmoid, DenseMatrix, Rng};

pub const AR_COEF: f64 = 0.8;
pub const AR_NOISE_STD: f64 = 0.6;
pub const SHIFT: f64 = 5.0;
pub const PREVALENCE_TOL: f64 = 0.02;
const BISECTION_STEPS: usize = 100;
const MNAR_POS_FACTOR: f64 = 1.5;
const MNAR_NEG_FACTOR: f64 = 0.5;
const MAX_DROP: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Missingness {
    #[default]
    Mcar,
    Mnar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SignalMode {
    /// Mean of feature 0.
    #[default]
    Easy,
    /// Largest centred 3-step slope of feature 0.
    ShortTerm,
    /// First-quarter mean minus last-quarter mean of feature 0.
    LongRange,
}

impl std::str::FromStr for Missingness {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "mcar" => Ok(Missingness::Mcar),
            "mnar" => Ok(Missingness::Mnar),
            _ => Err(format!("unknown missingness `{s}` (expected mcar or mnar)")),
        }
    }
}

impl std::str::FromStr for SignalMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "easy" => Ok(SignalMode::Easy),
            "short_term" => Ok(SignalMode::ShortTerm),
            "long_range" => Ok(SignalMode::LongRange),
            _ => Err(format!("unknown signal mode `{s}` (expected easy, short_term or long_range)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n_patients: usize,
    pub n_features: usize,
    pub t_min: usize,
    pub t_max: usize,
    pub missing_rate: f64,
    pub missingness: Missingness,
    pub signal: SignalMode,
    pub prevalence: f64,
    /// Logistic slope on the cohort-standardized statistic.
    pub signal_strength: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_patients: 2000,
            n_features: 8,
            t_min: 16,
            t_max: 48,
            missing_rate: 0.5,
            missingness: Missingness::Mcar,
            signal: SignalMode::Easy,
            prevalence: 0.3,
            signal_strength: 4.0,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if self.n_patients == 0 || self.n_features == 0 {
            return bad("n_patients and n_features must be ≥ 1".into());
        }
        if self.t_min < 3 || self.t_max < self.t_min {
            return bad(format!("need 3 ≤ t_min ≤ t_max, got [{}, {}]", self.t_min, self.t_max));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad(format!("missing_rate must be in [0, 1), got {}", self.missing_rate));
        }
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return bad(format!("prevalence must be in (0, 1), got {}", self.prevalence));
        }
        if !self.signal_strength.is_finite() || self.signal_strength < 0.0 {
            return bad(format!("signal_strength must be finite and ≥ 0, got {}", self.signal_strength));
        }
        Ok(())
    }

    fn drop_probability(&self, label: u8) -> f64 {
        let factor = match (self.missingness, label) {
            (Missingness::Mcar, _) => 1.0,
            (Missingness::Mnar, 1) => MNAR_POS_FACTOR,
            (Missingness::Mnar, _) => MNAR_NEG_FACTOR,
        };
        (self.missing_rate * factor).clamp(0.0, MAX_DROP)
    }
}

/// `N × T` latent values, stationary from the first step.
fn latent_journey(rng: &mut Rng, n: usize, t: usize) -> DenseMatrix {
    let mut x = DenseMatrix::zeros(n, t);
    for f in 0..n {
        let mut prev = rng.standard_normal();
        for s in 0..t {
            if s > 0 {
                prev = AR_COEF * prev + rng.normal(0.0, AR_NOISE_STD);
            }
            x.set(f, s, prev + SHIFT);
        }
    }
    x
}

/// The label-driving statistic of one latent series.
pub fn signal_statistic(mode: SignalMode, series: &[f64]) -> f64 {
    let t = series.len();
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    match mode {
        SignalMode::Easy => mean(series),
        SignalMode::ShortTerm => (1..t - 1)
            .map(|s| (series[s + 1] - series[s - 1]) / 2.0)
            .fold(f64::NEG_INFINITY, f64::max),
        SignalMode::LongRange => {
            let q = (t / 4).max(1);
            mean(&series[..q]) - mean(&series[t - q..])
        }
    }
}

fn realized_prevalence(logits: &[f64], uniforms: &[f64], intercept: f64) -> f64 {
    let pos = logits
        .iter()
        .zip(uniforms)
        .filter(|(l, u)| **u < sigmoid(intercept + **l))
        .count();
    pos as f64 / logits.len() as f64
}

/// Bisects the intercept so the realized prevalence of
/// `u_i < σ(a + logit_i)` is within tolerance of the target.
fn calibrate_intercept(logits: &[f64], uniforms: &[f64], target: f64) -> Result<f64> {
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let p = realized_prevalence(logits, uniforms, mid);
        if (p - target).abs() <= PREVALENCE_TOL {
            return Ok(mid);
        }
        if p < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Calibration(format!(
        "no intercept gives prevalence {target} ± {PREVALENCE_TOL} over {} patients",
        logits.len()
    )))
}

pub fn generate(cfg: &GenConfig) -> Result<Dataset> {
    cfg.validate()?;
    let n = cfg.n_features;
    let mut latents = Vec::with_capacity(cfg.n_patients);
    let mut stats = Vec::with_capacity(cfg.n_patients);
    let mut uniforms = Vec::with_capacity(cfg.n_patients);
    for i in 0..cfg.n_patients {
        let mut rng = Rng::derive(cfg.seed, i as u64);
        let t = cfg.t_min + rng.below((cfg.t_max - cfg.t_min + 1) as u64) as usize;
        let x = latent_journey(&mut rng, n, t);
        stats.push(signal_statistic(cfg.signal, x.row(0)));
        uniforms.push(rng.next_f64());
        latents.push(x);
    }

    let m = stats.iter().sum::<f64>() / stats.len() as f64;
    let sd = (stats.iter().map(|s| (s - m).powi(2)).sum::<f64>() / stats.len() as f64).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    let logits: Vec<f64> = stats.iter().map(|s| cfg.signal_strength * (s - m) / sd).collect();
    let intercept = calibrate_intercept(&logits, &uniforms, cfg.prevalence)?;

    let width = cfg.n_patients.saturating_sub(1).to_string().len();
    let mut journeys = Vec::with_capacity(cfg.n_patients);
    for (i, x) in latents.into_iter().enumerate() {
        let label = u8::from(uniforms[i] < sigmoid(intercept + logits[i]));
        let drop = cfg.drop_probability(label);
        // separate stream so masks do not perturb the latent draws
        let mut rng = Rng::derive(cfg.seed ^ 0x4D15_5146, i as u64);
        let mut mask = Mask::new(n, x.cols(), true);
        for f in 0..n {
            for s in 0..x.cols() {
                if rng.next_f64() < drop {
                    mask.set(f, s, false);
                }
            }
        }
        journeys.push(PatientJourney::new(format!("p{i:0width$}"), label, x, mask, None)?);
    }
    Dataset::new(journeys, n, default_feature_names(n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMissingness {
    pub name: String,
    pub missing_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_patients: usize,
    pub n_features: usize,
    pub prevalence: f64,
    pub overall_missing_pct: f64,
    pub length: LengthStats,
    pub features: Vec<FeatureMissingness>,
}

impl DatasetSummary {
    pub fn to_markdown(&self) -> String {
        let l = &self.length;
        let mut out = format!(
            "Patients: {}\nFeatures: {}\nPrevalence: {:.4}\nLength: min {}, max {}, mean {:.2}, median {:.1}\nOverall missingness: {:.2}%\n\n",
            self.n_patients, self.n_features, self.prevalence, l.min, l.max, l.mean, l.median, self.overall_missing_pct
        );
        out.push_str("| Feature | Missingness (%) |\n|---|---|\n");
        for f in &self.features {
            out.push_str(&format!("| {} | {:.2} |\n", f.name, f.missing_pct));
        }
        out
    }
}

pub fn describe(ds: &Dataset) -> DatasetSummary {
    let n = ds.n_features();
    let mut missing = vec![0usize; n];
    let mut cells = 0usize;
    let mut lengths: Vec<usize> = Vec::with_capacity(ds.len());
    for j in ds.journeys() {
        lengths.push(j.len());
        cells += j.len();
        for (f, m) in missing.iter_mut().enumerate() {
            *m += j.mask().row(f).iter().filter(|o| !**o).count();
        }
    }
    let pct = |count: usize, total: usize| if total == 0 { 0.0 } else { 100.0 * count as f64 / total as f64 };
    lengths.sort_unstable();
    let k = lengths.len();
    let median = if k % 2 == 1 {
        lengths[k / 2] as f64
    } else {
        0.5 * (lengths[k / 2 - 1] + lengths[k / 2]) as f64
    };
    DatasetSummary {
        n_patients: ds.len(),
        n_features: n,
        prevalence: ds.positives() as f64 / ds.len() as f64,
        overall_missing_pct: pct(missing.iter().sum(), cells * n),
        length: LengthStats {
            min: lengths[0],
            max: lengths[k - 1],
            mean: cells as f64 / k as f64,
            median,
        },
        features: ds
            .feature_names()
            .iter()
            .zip(&missing)
            .map(|(name, &m)| FeatureMissingness {
                name: name.clone(),
                missing_pct: pct(m, cells),
            })
            .collect(),
    }
}
