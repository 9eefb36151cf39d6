//! Dispersed batches of closed-loop runs and their terminal-error statistics.
//!
//! Every run draws from its own ChaCha8 stream, selected by run index on a
//! generator seeded with the master seed, so the samples a run sees do not
//! depend on which thread executes it or in what order. Aggregation walks
//! the results in index order.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::drag_chain::{delta_diagnostic, DeltaSample};
use crate::models::DispersionSet;
use crate::sim::{run_closed_loop, GuidanceMode, RunConfig, RunSummary};
use crate::{Error, Result};

/// Closed fractional interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub const fn symmetric(half_width: f64) -> Self {
        Interval {
            lo: -half_width,
            hi: half_width,
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Interval {
            lo: self.lo * k,
            hi: self.hi * k,
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        // always consume one draw so zero-width intervals keep stream alignment
        let x: f64 = rng.random();
        self.lo + (self.hi - self.lo) * x
    }
}

/// Uniform dispersion ranges per parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionSpec {
    pub mass: Interval,
    pub density: Interval,
    pub cl: Interval,
    pub cd: Interval,
}

impl Default for DispersionSpec {
    fn default() -> Self {
        DispersionSpec {
            mass: Interval::symmetric(0.05),
            density: Interval::symmetric(0.20),
            cl: Interval::symmetric(0.30),
            cd: Interval::symmetric(0.30),
        }
    }
}

impl DispersionSpec {
    pub const ZERO: DispersionSpec = DispersionSpec {
        mass: Interval::new(0.0, 0.0),
        density: Interval::new(0.0, 0.0),
        cl: Interval::new(0.0, 0.0),
        cd: Interval::new(0.0, 0.0),
    };

    pub fn validate(&self) -> Result<()> {
        for (name, iv) in self.named() {
            if !(iv.lo.is_finite() && iv.hi.is_finite() && iv.lo <= iv.hi) {
                return Err(Error::InvalidParameter(format!(
                    "dispersion interval for {name} must satisfy lo <= hi, got [{}, {}]",
                    iv.lo, iv.hi
                )));
            }
            if iv.lo <= -1.0 {
                return Err(Error::InvalidParameter(format!(
                    "dispersion for {name} must stay above -100%, got {}",
                    iv.lo
                )));
            }
        }
        Ok(())
    }

    /// Every interval multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        DispersionSpec {
            mass: self.mass.scaled(k),
            density: self.density.scaled(k),
            cl: self.cl.scaled(k),
            cd: self.cd.scaled(k),
        }
    }

    fn named(&self) -> [(&'static str, Interval); 4] {
        [
            ("mass", self.mass),
            ("density", self.density),
            ("cl", self.cl),
            ("cd", self.cd),
        ]
    }
}

/// Substream for run `index` under `master_seed`.
pub fn run_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Draws mass, density, C_L, C_D in that order.
pub fn sample_dispersions<R: Rng>(spec: &DispersionSpec, rng: &mut R) -> DispersionSet {
    let dm_frac = spec.mass.sample(rng);
    let drho_frac = spec.density.sample(rng);
    let d_cl_frac = spec.cl.sample(rng);
    let d_cd_frac = spec.cd.sample(rng);
    DispersionSet {
        dm_frac,
        drho_frac,
        d_cl_frac,
        d_cd_frac,
    }
}

/// Minimum, maximum, average and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub minimum: f64,
    pub maximum: f64,
    pub average: f64,
    pub standard_deviation: f64,
}

impl MetricStats {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySamples);
        }
        let n = values.len() as f64;
        let average = values.iter().sum::<f64>() / n;
        let minimum = values.iter().copied().fold(f64::INFINITY, f64::min);
        let maximum = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let standard_deviation = if values.len() > 1 {
            (values.iter().map(|v| (v - average).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(MetricStats {
            minimum,
            maximum,
            // guards the ordering invariant against last-bit rounding
            average: average.clamp(minimum, maximum),
            standard_deviation,
        })
    }
}

/// Batch statistics over completed runs; errors in kilometres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCStats {
    pub runs: usize,
    pub completed: usize,
    pub failures: usize,
    pub failed_indices: Vec<usize>,
    pub non_finite_values: usize,
    pub downrange_error_km: Option<MetricStats>,
    pub altitude_error_km: Option<MetricStats>,
}

/// One batch member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub index: usize,
    pub dispersions: DispersionSet,
    pub summary: Option<RunSummary>,
    /// Set when the run aborted before reaching a terminal state.
    pub error: Option<String>,
    #[serde(skip)]
    pub delta_samples: Vec<DeltaSample>,
}

impl RunOutcome {
    /// Terminated with finite terminal errors.
    pub fn completed(&self) -> bool {
        self.summary
            .as_ref()
            .is_some_and(|s| s.terminated && s.downrange_error.is_finite() && s.altitude_error.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchOptions {
    pub n_runs: usize,
    pub master_seed: u64,
    /// Keep each run's Δ diagnostic for a later (l, d) fit.
    pub collect_delta: bool,
}

/// One run of the batch.
pub fn run_member(base: &RunConfig, spec: &DispersionSpec, opts: &BatchOptions, index: usize) -> RunOutcome {
    let mut rng = run_rng(opts.master_seed, index as u64);
    let dispersions = sample_dispersions(spec, &mut rng);
    let mut cfg = base.clone();
    cfg.mode = GuidanceMode::OutputFeedback;
    cfg.dispersions = dispersions;
    cfg.seed = rng.next_u64();
    match run_closed_loop(&cfg) {
        Ok((log, summary)) => {
            let delta_samples = if opts.collect_delta {
                delta_diagnostic(&log).unwrap_or_default()
            } else {
                Vec::new()
            };
            RunOutcome {
                index,
                dispersions,
                summary: Some(summary),
                error: None,
                delta_samples,
            }
        }
        Err(e) => RunOutcome {
            index,
            dispersions,
            summary: None,
            error: Some(e.to_string()),
            delta_samples: Vec::new(),
        },
    }
}

fn validate_batch(base: &RunConfig, spec: &DispersionSpec, opts: &BatchOptions) -> Result<()> {
    if opts.n_runs == 0 {
        return Err(Error::InvalidParameter("a batch needs at least one run".into()));
    }
    spec.validate()?;
    base.validate()
}

/// Runs the batch across the rayon pool.
#[cfg(feature = "parallel")]
pub fn run_batch(base: &RunConfig, spec: &DispersionSpec, opts: &BatchOptions) -> Result<(MCStats, Vec<RunOutcome>)> {
    use rayon::prelude::*;
    validate_batch(base, spec, opts)?;
    let outcomes: Vec<RunOutcome> = (0..opts.n_runs)
        .into_par_iter()
        .map(|i| run_member(base, spec, opts, i))
        .collect();
    Ok((aggregate(&outcomes)?, outcomes))
}

/// Without the `parallel` feature the batch runs on the calling thread.
#[cfg(not(feature = "parallel"))]
pub fn run_batch(base: &RunConfig, spec: &DispersionSpec, opts: &BatchOptions) -> Result<(MCStats, Vec<RunOutcome>)> {
    run_batch_sequential(base, spec, opts)
}

pub fn run_batch_sequential(
    base: &RunConfig,
    spec: &DispersionSpec,
    opts: &BatchOptions,
) -> Result<(MCStats, Vec<RunOutcome>)> {
    validate_batch(base, spec, opts)?;
    let outcomes: Vec<RunOutcome> = (0..opts.n_runs).map(|i| run_member(base, spec, opts, i)).collect();
    Ok((aggregate(&outcomes)?, outcomes))
}

/// Ordered reduction over run index.
pub fn aggregate(outcomes: &[RunOutcome]) -> Result<MCStats> {
    let mut downrange = Vec::with_capacity(outcomes.len());
    let mut altitude = Vec::with_capacity(outcomes.len());
    let mut failed_indices = Vec::new();
    let mut non_finite_values = 0;
    for o in outcomes {
        if let Some(s) = &o.summary {
            non_finite_values += [s.downrange_error, s.altitude_error, s.t_final, s.h_final, s.s_final]
                .iter()
                .filter(|v| !v.is_finite())
                .count();
        }
        if o.completed() {
            let s = o.summary.as_ref().expect("completed implies summary");
            downrange.push(s.downrange_error / 1000.0);
            altitude.push(s.altitude_error / 1000.0);
        } else {
            failed_indices.push(o.index);
        }
    }
    let stats = |v: &[f64]| {
        if v.is_empty() {
            Ok(None)
        } else {
            MetricStats::from_values(v).map(Some)
        }
    };
    Ok(MCStats {
        runs: outcomes.len(),
        completed: downrange.len(),
        failures: failed_indices.len(),
        failed_indices,
        non_finite_values,
        downrange_error_km: stats(&downrange)?,
        altitude_error_km: stats(&altitude)?,
    })
}

/// All Δ samples of a batch, concatenated in run order.
pub fn pooled_delta_samples(outcomes: &[RunOutcome]) -> Vec<DeltaSample> {
    outcomes.iter().flat_map(|o| o.delta_samples.iter().copied()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_spec_samples_stay_in_bounds() {
        let spec = DispersionSpec::default();
        let mut rng = run_rng(7, 0);
        for _ in 0..100_000 {
            let d = sample_dispersions(&spec, &mut rng);
            assert!(d.dm_frac.abs() <= 0.05);
            assert!(d.drho_frac.abs() <= 0.20);
            assert!(d.d_cl_frac.abs() <= 0.30);
            assert!(d.d_cd_frac.abs() <= 0.30);
        }
    }

    #[test]
    fn zero_width_gives_exact_zeros() {
        let mut rng = run_rng(1, 3);
        assert!(sample_dispersions(&DispersionSpec::ZERO, &mut rng).is_nominal());
    }

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let spec = DispersionSpec::default();
        let a = sample_dispersions(&spec, &mut run_rng(42, 5));
        let b = sample_dispersions(&spec, &mut run_rng(42, 5));
        let c = sample_dispersions(&spec, &mut run_rng(42, 6));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn inverted_interval_rejected() {
        let spec = DispersionSpec {
            cl: Interval::new(0.1, -0.1),
            ..DispersionSpec::default()
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn stats_of_known_values() {
        let s = MetricStats::from_values(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((s.minimum, s.maximum, s.average), (1.0, 4.0, 2.5));
        assert!((s.standard_deviation - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(MetricStats::from_values(&[3.0]).unwrap().standard_deviation, 0.0);
        assert!(MetricStats::from_values(&[]).is_err());
    }

    proptest! {
        #[test]
        fn stats_ordering(values in proptest::collection::vec(-1e4..1e4f64, 1..200)) {
            let s = MetricStats::from_values(&values).unwrap();
            prop_assert!(s.minimum <= s.average && s.average <= s.maximum);
            prop_assert!(s.standard_deviation >= 0.0);
        }

        #[test]
        fn samples_within_arbitrary_intervals(
            lo in -0.9..0.0f64, w in 0.0..1.5f64, seed in any::<u64>(), idx in 0u64..1000,
        ) {
            let iv = Interval::new(lo, lo + w);
            let spec = DispersionSpec { mass: iv, density: iv, cl: iv, cd: iv };
            let d = sample_dispersions(&spec, &mut run_rng(seed, idx));
            for x in [d.dm_frac, d.drho_frac, d.d_cl_frac, d.d_cd_frac] {
                prop_assert!(x >= iv.lo && x <= iv.hi);
            }
        }
    }
}
