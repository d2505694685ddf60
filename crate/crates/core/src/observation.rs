//! Generative and recognition models for the two search tasks.
//!
//! Both tasks have three candidate target locations. In the simple task the
//! observer fixates one of them and receives one Bernoulli bit that favors 1
//! when the fixated patch is the target. In the peripheral task there are seven
//! fixation points (the three locations, the three edge midpoints and the
//! centre) and each step yields one bit per location, with a reliability that
//! depends on how far that location is from the fixation point.
//!
//! Observations are encoded as small integers: bit `d` holds the component for
//! location `d`. The simple task's alphabet is `{0, 1}`, the peripheral task's
//! the full cube `0..8`.

use rand::Rng;
use thiserror::Error;

use crate::grid::BeliefState;

pub const LOCATIONS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("target parameter beta1 = {0} must lie in (0.5, 1]")]
    BadBeta1(f64),
    #[error("acuity parameters {0:?} must satisfy 1 > b1 > b2 > b3 > b4 >= 0.5")]
    BadAcuity([f64; 4]),
    #[error("location {0} out of range")]
    BadLocation(usize),
    #[error("fixation {0} out of range")]
    BadFixation(usize),
    #[error("observation {0} outside the alphabet")]
    BadObservation(u8),
    #[error("belief has {0} entries, model has 3 locations")]
    BeliefSize(usize),
    #[error("observation {x} has zero probability under belief {belief:?} at fixation {fixation}")]
    IllPosedUpdate { belief: Vec<f64>, fixation: usize, x: u8 },
}

/// Observation symbol; bit `d` is the component reported for location `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Observation(pub u8);

impl Observation {
    pub fn bit(self, d: usize) -> bool {
        (self.0 >> d) & 1 == 1
    }
}

/// Simple task: Bernoulli(beta1) at the target, Bernoulli(1 - beta1) elsewhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimpleTaskModel {
    beta1: f64,
}

impl SimpleTaskModel {
    pub fn new(beta1: f64) -> Result<Self, ModelError> {
        if !(beta1 > 0.5 && beta1 <= 1.0) {
            return Err(ModelError::BadBeta1(beta1));
        }
        Ok(Self { beta1 })
    }

    pub fn beta1(&self) -> f64 {
        self.beta1
    }

    pub fn beta0(&self) -> f64 {
        1.0 - self.beta1
    }
}

/// Fixation points of the peripheral task, in action-index order.
pub const PERIPHERAL_FIXATIONS: [&str; 7] = ["l1", "l2", "l3", "l12", "l23", "l13", "l123"];

/// Acuity level (1..=4) of each location under each peripheral fixation.
const ACUITY_LEVELS: [[usize; 3]; 7] = [
    [1, 4, 4],
    [4, 1, 4],
    [4, 4, 1],
    [2, 2, 4],
    [4, 2, 2],
    [2, 4, 2],
    [3, 3, 3],
];

/// Peripheral task: three conditionally independent bits per step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeripheralTaskModel {
    betas: [f64; 4],
}

impl PeripheralTaskModel {
    pub fn new(betas: [f64; 4]) -> Result<Self, ModelError> {
        let [b1, b2, b3, b4] = betas;
        if !(1.0 > b1 && b1 > b2 && b2 > b3 && b3 > b4 && b4 >= 0.5) {
            return Err(ModelError::BadAcuity(betas));
        }
        Ok(Self { betas })
    }

    pub fn betas(&self) -> [f64; 4] {
        self.betas
    }

    /// Reliability of the bit for `location` when fixating `fixation`.
    pub fn acuity(&self, fixation: usize, location: usize) -> f64 {
        self.betas[ACUITY_LEVELS[fixation][location] - 1]
    }
}

/// Which declaration a stop makes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRule {
    /// Only the fixated location may be declared.
    FixatedLocation,
    /// Declare the most likely location from any fixation.
    MostLikely,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Simple,
    Peripheral,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Simple(SimpleTaskModel),
    Peripheral(PeripheralTaskModel),
}

/// One of the two observation models with its likelihood table cached.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskModel {
    kind: Kind,
    stop_rule: StopRule,
    // lik[(fixation * alphabet + x) * LOCATIONS + s]
    lik: Vec<f64>,
}

impl From<SimpleTaskModel> for TaskModel {
    fn from(m: SimpleTaskModel) -> Self {
        Self::build(Kind::Simple(m))
    }
}

impl From<PeripheralTaskModel> for TaskModel {
    fn from(m: PeripheralTaskModel) -> Self {
        Self::build(Kind::Peripheral(m))
    }
}

fn bernoulli(q: f64, x: bool) -> f64 {
    if x {
        q
    } else {
        1.0 - q
    }
}

impl TaskModel {
    pub fn simple(beta1: f64) -> Result<Self, ModelError> {
        Ok(SimpleTaskModel::new(beta1)?.into())
    }

    pub fn peripheral(betas: [f64; 4]) -> Result<Self, ModelError> {
        Ok(PeripheralTaskModel::new(betas)?.into())
    }

    fn build(kind: Kind) -> Self {
        let (fixations, alphabet) = match kind {
            Kind::Simple(_) => (3, 2),
            Kind::Peripheral(_) => (7, 8),
        };
        let mut lik = Vec::with_capacity(fixations * alphabet * LOCATIONS);
        for f in 0..fixations {
            for x in 0..alphabet {
                let obs = Observation(x as u8);
                for s in 0..LOCATIONS {
                    let v = match kind {
                        Kind::Simple(m) => {
                            let q = if s == f { m.beta1 } else { m.beta0() };
                            bernoulli(q, obs.bit(0))
                        }
                        Kind::Peripheral(m) => (0..LOCATIONS)
                            .map(|d| {
                                let a = m.acuity(f, d);
                                let q = if d == s { a } else { 1.0 - a };
                                bernoulli(q, obs.bit(d))
                            })
                            .product(),
                    };
                    lik.push(v);
                }
            }
        }
        let stop_rule = match kind {
            Kind::Simple(_) => StopRule::FixatedLocation,
            Kind::Peripheral(_) => StopRule::MostLikely,
        };
        Self { kind, stop_rule, lik }
    }

    /// Replaces the task's default stop rule.
    pub fn with_stop_rule(mut self, rule: StopRule) -> Self {
        self.stop_rule = rule;
        self
    }

    pub fn kind(&self) -> TaskKind {
        match self.kind {
            Kind::Simple(_) => TaskKind::Simple,
            Kind::Peripheral(_) => TaskKind::Peripheral,
        }
    }

    /// Target parameters: `[beta1]` or `[b1, b2, b3, b4]`.
    pub fn betas(&self) -> Vec<f64> {
        match self.kind {
            Kind::Simple(m) => vec![m.beta1],
            Kind::Peripheral(m) => m.betas.to_vec(),
        }
    }

    pub fn locations(&self) -> usize {
        LOCATIONS
    }

    pub fn fixations(&self) -> usize {
        match self.kind {
            Kind::Simple(_) => 3,
            Kind::Peripheral(_) => 7,
        }
    }

    pub fn alphabet(&self) -> usize {
        match self.kind {
            Kind::Simple(_) => 2,
            Kind::Peripheral(_) => 8,
        }
    }

    pub fn stop_rule(&self) -> StopRule {
        self.stop_rule
    }

    pub fn fixation_name(&self, fixation: usize) -> String {
        match self.kind {
            Kind::Simple(_) => format!("{}", fixation + 1),
            Kind::Peripheral(_) => PERIPHERAL_FIXATIONS[fixation].to_string(),
        }
    }

    /// The model is degenerate (some observation impossible under some target).
    pub fn has_zero_likelihoods(&self) -> bool {
        self.lik.iter().any(|&v| v == 0.0)
    }

    /// Relabeling of fixations induced by a relabeling of locations.
    pub fn fixation_permutation(&self, sigma: &[usize]) -> Vec<usize> {
        match self.kind {
            Kind::Simple(_) => sigma.to_vec(),
            Kind::Peripheral(_) => (0..7)
                .map(|f| {
                    let mut levels = [0usize; 3];
                    for d in 0..3 {
                        levels[sigma[d]] = ACUITY_LEVELS[f][d];
                    }
                    ACUITY_LEVELS.iter().position(|l| *l == levels).unwrap()
                })
                .collect(),
        }
    }

    #[inline]
    pub(crate) fn lik_row(&self, fixation: usize, x: usize) -> &[f64] {
        let o = (fixation * self.alphabet() + x) * LOCATIONS;
        &self.lik[o..o + LOCATIONS]
    }

    fn check(&self, s: Option<usize>, fixation: usize, x: Option<Observation>) -> Result<(), ModelError> {
        if let Some(s) = s {
            if s >= LOCATIONS {
                return Err(ModelError::BadLocation(s));
            }
        }
        if fixation >= self.fixations() {
            return Err(ModelError::BadFixation(fixation));
        }
        if let Some(x) = x {
            if x.0 as usize >= self.alphabet() {
                return Err(ModelError::BadObservation(x.0));
            }
        }
        Ok(())
    }

    /// `p(x | s, fixation)`.
    pub fn likelihood(&self, s: usize, fixation: usize, x: Observation) -> Result<f64, ModelError> {
        self.check(Some(s), fixation, Some(x))?;
        Ok(self.lik_row(fixation, x.0 as usize)[s])
    }

    /// One step of Bayes' rule.
    pub fn bayes_update(
        &self,
        p: &BeliefState,
        fixation: usize,
        x: Observation,
    ) -> Result<BeliefState, ModelError> {
        if p.k() != LOCATIONS {
            return Err(ModelError::BeliefSize(p.k()));
        }
        self.check(None, fixation, Some(x))?;
        let (post, _) = self.posterior(p.probs(), fixation, x.0 as usize);
        match post {
            Some(q) => Ok(BeliefState::new(q).expect("posterior is normalized")),
            None => Err(ModelError::IllPosedUpdate {
                belief: p.probs().to_vec(),
                fixation,
                x: x.0,
            }),
        }
    }

    /// Unchecked update on raw probabilities; also returns the evidence
    /// `P(x)`. `None` when the evidence is zero.
    pub(crate) fn posterior(&self, p: &[f64], fixation: usize, x: usize) -> (Option<Vec<f64>>, f64) {
        let row = self.lik_row(fixation, x);
        let joint: Vec<f64> = row.iter().zip(p).map(|(l, q)| l * q).collect();
        let evidence: f64 = joint.iter().sum();
        if evidence <= 0.0 {
            return (None, 0.0);
        }
        (Some(joint.into_iter().map(|v| v / evidence).collect()), evidence)
    }

    /// Predictive distribution of the next observation, indexed by symbol.
    pub fn predictive(&self, p: &BeliefState, fixation: usize) -> Result<Vec<f64>, ModelError> {
        if p.k() != LOCATIONS {
            return Err(ModelError::BeliefSize(p.k()));
        }
        self.check(None, fixation, None)?;
        Ok((0..self.alphabet())
            .map(|x| self.lik_row(fixation, x).iter().zip(p.probs()).map(|(l, q)| l * q).sum())
            .collect())
    }

    /// Draws `x ~ p(. | s, fixation)`.
    pub fn sample_observation<R: Rng + ?Sized>(
        &self,
        s: usize,
        fixation: usize,
        rng: &mut R,
    ) -> Result<Observation, ModelError> {
        self.check(Some(s), fixation, None)?;
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let last = self.alphabet() - 1;
        for x in 0..last {
            acc += self.lik_row(fixation, x)[s];
            if u < acc {
                return Ok(Observation(x as u8));
            }
        }
        Ok(Observation(last as u8))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::permutations;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn third() -> BeliefState {
        BeliefState::uniform(3)
    }

    #[test]
    fn parameter_validation() {
        assert!(SimpleTaskModel::new(0.5).is_err());
        assert!(SimpleTaskModel::new(1.0).is_ok());
        assert!(SimpleTaskModel::new(1.01).is_err());
        assert_eq!(SimpleTaskModel::new(0.9).unwrap().beta0(), 1.0 - 0.9);
        assert!(PeripheralTaskModel::new([0.62, 0.6, 0.55, 0.5]).is_ok());
        assert!(PeripheralTaskModel::new([0.62, 0.6, 0.6, 0.5]).is_err());
        assert!(PeripheralTaskModel::new([1.0, 0.6, 0.55, 0.5]).is_err());
        assert!(PeripheralTaskModel::new([0.62, 0.6, 0.55, 0.49]).is_err());
    }

    #[test]
    fn simple_likelihoods() {
        let m = TaskModel::simple(0.9).unwrap();
        assert_eq!(m.likelihood(0, 0, Observation(1)).unwrap(), 0.9);
        assert!((m.likelihood(1, 0, Observation(1)).unwrap() - 0.1).abs() < 1e-15);
        assert!(m.likelihood(3, 0, Observation(1)).is_err());
        assert!(m.likelihood(0, 3, Observation(1)).is_err());
        assert!(m.likelihood(0, 0, Observation(2)).is_err());
    }

    #[test]
    fn peripheral_likelihoods() {
        let m = TaskModel::peripheral([0.62, 0.6, 0.55, 0.5]).unwrap();
        // x = (1, 0, 0): bit 0 set.
        let v = m.likelihood(0, 0, Observation(0b001)).unwrap();
        assert!((v - 0.155).abs() < 1e-15);
        // s = 3, l12, x = (0, 0, 1)
        let v = m.likelihood(2, 3, Observation(0b100)).unwrap();
        assert!((v - 0.18).abs() < 1e-15);
        // brute-force normalization
        for f in 0..7 {
            for s in 0..3 {
                let total: f64 = (0..8).map(|x| m.likelihood(s, f, Observation(x)).unwrap()).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bayes_update_examples() {
        let m = TaskModel::simple(0.9).unwrap();
        let q = m.bayes_update(&third(), 0, Observation(1)).unwrap();
        for (a, b) in q.probs().iter().zip([9.0 / 11.0, 1.0 / 11.0, 1.0 / 11.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        let q = m.bayes_update(&third(), 0, Observation(0)).unwrap();
        for (a, b) in q.probs().iter().zip([1.0 / 19.0, 9.0 / 19.0, 9.0 / 19.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        let e1 = BeliefState::vertex(3, 0);
        for f in 0..3 {
            for x in 0..2 {
                assert_eq!(m.bayes_update(&e1, f, Observation(x)).unwrap(), e1);
            }
        }
    }

    #[test]
    fn ill_posed_update_at_certainty() {
        let m = TaskModel::simple(1.0).unwrap();
        // Certain the target is at 2 but fixating 1 produced a 1: impossible.
        let e2 = BeliefState::vertex(3, 1);
        assert!(matches!(
            m.bayes_update(&e2, 0, Observation(1)),
            Err(ModelError::IllPosedUpdate { .. })
        ));
    }

    #[test]
    fn predictive_examples() {
        let m = TaskModel::simple(0.9).unwrap();
        let pr = m.predictive(&third(), 0).unwrap();
        assert!((pr[1] - 1.1 / 3.0).abs() < 1e-15);
        assert!((pr.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let pm = TaskModel::peripheral([0.62, 0.6, 0.55, 0.5]).unwrap();
        for j in 0..3 {
            let e = BeliefState::vertex(3, j);
            for f in 0..7 {
                let pr = pm.predictive(&e, f).unwrap();
                for (x, v) in pr.iter().enumerate() {
                    assert_eq!(*v, pm.likelihood(j, f, Observation(x as u8)).unwrap());
                }
            }
        }
        // Fixating l1: components 2 and 3 carry no information.
        let p = BeliefState::new(vec![0.2, 0.5, 0.3]).unwrap();
        let pr = pm.predictive(&p, 0).unwrap();
        for bits in 0..4u8 {
            let marginal: f64 = (0..2u8).map(|b0| pr[(b0 | (bits << 1)) as usize]).sum();
            assert!((marginal - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling() {
        let m = TaskModel::simple(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_eq!(m.sample_observation(0, 0, &mut rng).unwrap(), Observation(1));
        }
        let m = TaskModel::simple(0.9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ones = (0..100_000)
            .filter(|_| m.sample_observation(0, 0, &mut rng).unwrap() == Observation(1))
            .count();
        assert!((ones as f64 / 1e5 - 0.9).abs() < 0.01);

        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| m.sample_observation(1, 2, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
    }

    #[test]
    fn fixation_automorphisms() {
        let pm = TaskModel::peripheral([0.62, 0.6, 0.55, 0.5]).unwrap();
        // swap targets 1 and 2: l1<->l2, l13<->l23, l12 and l123 fixed
        assert_eq!(pm.fixation_permutation(&[1, 0, 2]), vec![1, 0, 2, 3, 5, 4, 6]);
    }

    fn belief() -> impl Strategy<Value = BeliefState> {
        prop::collection::vec(0.001f64..1.0, 3).prop_map(|v| {
            let s: f64 = v.iter().sum();
            BeliefState::new(v.iter().map(|x| x / s).collect()).unwrap()
        })
    }

    fn models() -> Vec<TaskModel> {
        vec![
            TaskModel::simple(0.9).unwrap(),
            TaskModel::simple(0.7).unwrap(),
            TaskModel::peripheral([0.62, 0.6, 0.55, 0.5]).unwrap(),
            TaskModel::peripheral([0.9, 0.8, 0.7, 0.6]).unwrap(),
        ]
    }

    proptest! {
        #[test]
        fn likelihoods_normalize(which in 0usize..4, s in 0usize..3, f in 0usize..7) {
            let m = &models()[which];
            let f = f % m.fixations();
            let total: f64 = (0..m.alphabet())
                .map(|x| m.likelihood(s, f, Observation(x as u8)).unwrap())
                .sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn posterior_martingale(which in 0usize..4, p in belief(), f in 0usize..7) {
            let m = &models()[which];
            let f = f % m.fixations();
            let pr = m.predictive(&p, f).unwrap();
            prop_assert!((pr.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let mut mean = [0.0; 3];
            for (x, &px) in pr.iter().enumerate() {
                let q = m.bayes_update(&p, f, Observation(x as u8)).unwrap();
                prop_assert!((q.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for i in 0..3 {
                    mean[i] += px * q.probs()[i];
                }
            }
            for i in 0..3 {
                prop_assert!((mean[i] - p.probs()[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn simple_update_commutes_with_relabeling(p in belief(), f in 0usize..3, x in 0u8..2, which in 0usize..6) {
            let m = TaskModel::simple(0.8).unwrap();
            let sigma = &permutations(3)[which];
            let lhs = m.bayes_update(&p.permuted(sigma), sigma[f], Observation(x)).unwrap();
            let rhs = m.bayes_update(&p, f, Observation(x)).unwrap().permuted(sigma);
            for (a, b) in lhs.probs().iter().zip(rhs.probs()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn far_locations_keep_their_ratio(p in belief(), f in 0usize..3, x in 0u8..8) {
            let m = TaskModel::peripheral([0.62, 0.6, 0.55, 0.5]).unwrap();
            let q = m.bayes_update(&p, f, Observation(x)).unwrap();
            let (a, b) = ((f + 1) % 3, (f + 2) % 3);
            let before = p.probs()[a] / p.probs()[b];
            let after = q.probs()[a] / q.probs()[b];
            prop_assert!((before - after).abs() < 1e-9 * before.max(1.0));
        }
    }
}
