use serde::Serialize;

use super::trial::{run_records, Controller, TrialRecord, TrialSetup};

/// Mean with its standard error (`None` for a single sample).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: Option<f64>,
}

impl Estimate {
    /// Accumulates in slice order so results are bit-reproducible.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let stderr = (xs.len() > 1).then(|| {
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        });
        Self { mean, stderr }
    }

    pub fn se(&self) -> f64 {
        self.stderr.unwrap_or(0.0)
    }
}

/// Aggregate of a batch of trials. Capped trials count as errors at the cap
/// length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialStats {
    pub n_trials: usize,
    pub seed: u64,
    pub accuracy: Estimate,
    pub steps: Estimate,
    pub switches: Estimate,
    pub total_cost: Estimate,
    pub errors: usize,
    pub capped: usize,
}

impl TrialStats {
    pub fn from_records(records: &[TrialRecord], seed: u64) -> Self {
        assert!(!records.is_empty(), "no trials to aggregate");
        let col = |f: &dyn Fn(&TrialRecord) -> f64| -> Estimate {
            let xs: Vec<f64> = records.iter().map(f).collect();
            Estimate::from_samples(&xs)
        };
        Self {
            n_trials: records.len(),
            seed,
            accuracy: col(&|r| if r.correct { 1.0 } else { 0.0 }),
            steps: col(&|r| r.steps as f64),
            switches: col(&|r| r.switches as f64),
            total_cost: col(&|r| r.total_cost),
            errors: records.iter().filter(|r| !r.correct && !r.capped).count(),
            capped: records.iter().filter(|r| r.capped).count(),
        }
    }

    pub fn correct(&self) -> usize {
        self.n_trials - self.errors - self.capped
    }
}

/// Runs a seeded batch with uniformly drawn targets.
pub fn run_batch(
    controller: &dyn Controller,
    setup: &TrialSetup,
    n_trials: usize,
    master_seed: u64,
) -> TrialStats {
    let records = run_records(controller, setup, n_trials.max(1), master_seed);
    TrialStats::from_records(&records, master_seed)
}

/// `|a - b|` in units of the combined standard error.
pub fn separation(a: &Estimate, b: &Estimate) -> f64 {
    let se = (a.se().powi(2) + b.se().powi(2)).sqrt();
    (a.mean - b.mean) / se
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sample_has_no_stderr() {
        let e = Estimate::from_samples(&[2.5]);
        assert_eq!(e.mean, 2.5);
        assert_eq!(e.stderr, None);
    }

    #[test]
    fn stderr_matches_formula() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        let var: f64 = (2.25 + 0.25 + 0.25 + 2.25) / 3.0;
        assert!((e.se() - (var / 4.0).sqrt()).abs() < 1e-15);
    }
}
