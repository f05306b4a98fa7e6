//! The bag-pair reduction of learning from label proportions to corrupted
//! sources.
//!
//! A pair of bags with label proportions `gamma+ > gamma-` is read as one
//! corrupted sample: members of the high-proportion bag get pseudo-label +1,
//! members of the low-proportion bag get -1. The pair then behaves exactly
//! like a sample drawn from a clean distribution with prior
//! `pi = (gamma+ + gamma-)/2` corrupted at rates
//! `rho+ = gamma-/(gamma- + gamma+)`, `rho- = (1 - gamma+)/(2 - gamma- - gamma+)`,
//! with cost weights `alpha = (1/(gamma+ + gamma-), 1/(2 - gamma+ - gamma-))`
//! targeting the balanced error rate.
//!
//! Bags are paired to maximize `sum (gamma_i - gamma_j)^2` by exact
//! maximum-weight perfect matching.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::loss::{CostPair, GammaPair, Label, NoiseRates};
use crate::matching;
use crate::seed;

/// A bag of unlabeled instances annotated with its fraction of class-+1
/// members. `hidden_labels` is present only in simulation mode and must
/// never reach the learner path.
#[derive(Clone, Debug, PartialEq)]
pub struct Bag {
    pub instances: DMatrix<f64>,
    pub gamma: f64,
    pub hidden_labels: Option<Vec<Label>>,
}

impl Bag {
    pub fn new(instances: DMatrix<f64>, gamma: f64) -> Result<Self> {
        if instances.nrows() == 0 {
            return Err(Error::InvalidData {
                path: "<bag>".into(),
                reason: "bag has no instances".into(),
            });
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidData {
                path: "<bag>".into(),
                reason: format!("label proportion {gamma} outside [0, 1]"),
            });
        }
        Ok(Bag {
            instances,
            gamma,
            hidden_labels: None,
        })
    }

    /// Builds a bag from labeled instances; gamma is the exact fraction of
    /// +1 labels.
    pub fn with_labels(instances: DMatrix<f64>, labels: Vec<Label>) -> Result<Self> {
        if instances.nrows() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} instances vs {} labels",
                instances.nrows(),
                labels.len()
            )));
        }
        if instances.nrows() == 0 {
            return Err(Error::InvalidData {
                path: "<bag>".into(),
                reason: "bag has no instances".into(),
            });
        }
        let pos = labels.iter().filter(|&&y| y == 1).count();
        let gamma = pos as f64 / labels.len() as f64;
        Ok(Bag {
            instances,
            gamma,
            hidden_labels: Some(labels),
        })
    }

    pub fn size(&self) -> usize {
        self.instances.nrows()
    }

    /// Count of hidden +1 labels, when available. Exact rational gamma is
    /// `(positive_count, size)`.
    pub fn positive_count(&self) -> Option<usize> {
        self.hidden_labels
            .as_ref()
            .map(|l| l.iter().filter(|&&y| y == 1).count())
    }

    /// Proportion equality, exact over hidden-label rationals when both
    /// sides carry them, else within 1e-12.
    pub fn gamma_eq(&self, other: &Bag) -> bool {
        match (self.positive_count(), other.positive_count()) {
            (Some(a), Some(b)) => a * other.size() == b * self.size(),
            _ => (self.gamma - other.gamma).abs() <= 1e-12,
        }
    }
}

/// A matched pair of bags, oriented so the positive bag has the larger
/// proportion (ties allowed only for pairs flagged zero-gap).
#[derive(Clone, Debug, PartialEq)]
pub struct BagPair {
    pub pos: Bag,
    pub neg: Bag,
}

impl BagPair {
    pub fn new(pos: Bag, neg: Bag) -> Result<Self> {
        if pos.gamma < neg.gamma {
            return Err(Error::InvalidGammaPair {
                gamma_plus: pos.gamma,
                gamma_minus: neg.gamma,
                reason: "positive bag must have the larger proportion",
            });
        }
        Ok(BagPair { pos, neg })
    }

    pub fn gamma_plus(&self) -> f64 {
        self.pos.gamma
    }

    pub fn gamma_minus(&self) -> f64 {
        self.neg.gamma
    }

    pub fn gamma_pair(&self) -> Result<GammaPair> {
        GammaPair::new(self.gamma_plus(), self.gamma_minus())
    }

    /// Total instance count n = n+ + n-.
    pub fn n(&self) -> usize {
        self.pos.size() + self.neg.size()
    }

    pub fn n_pos(&self) -> usize {
        self.pos.size()
    }

    pub fn n_neg(&self) -> usize {
        self.neg.size()
    }

    /// True when the proportions tie, making the pair useless for learning.
    pub fn zero_gap(&self) -> bool {
        self.pos.gamma_eq(&self.neg)
    }
}

/// The clean-distribution parameters equivalent to a bag pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairDerived {
    pub pi: f64,
    pub rho: NoiseRates,
    pub alpha: CostPair,
}

/// Maps bag proportions to the equivalent prior, noise rates, and costs.
pub fn derive(gamma: &GammaPair) -> PairDerived {
    let (gp, gm) = (gamma.plus(), gamma.minus());
    let s = gp + gm;
    let pi = s / 2.0;
    // gamma+ > gamma- >= 0 makes every divisor strictly positive and the
    // noise-rate sum strictly below one
    let rho = NoiseRates::new(gm / s, (1.0 - gp) / (2.0 - s))
        .expect("bag-pair noise rates are always admissible");
    let alpha = CostPair::new(1.0 / s, 1.0 / (2.0 - s))
        .expect("bag-pair costs are always positive");
    PairDerived { pi, rho, alpha }
}

/// `|(1 - rho- - rho+) - (gamma+ - gamma-) / ((gamma+ + gamma-)(2 - gamma+ - gamma-))|`,
/// which is zero in exact arithmetic.
pub fn noise_identity_residual(gamma: &GammaPair) -> f64 {
    let d = derive(gamma);
    let (gp, gm) = (gamma.plus(), gamma.minus());
    let rhs = (gp - gm) / ((gp + gm) * (2.0 - gp - gm));
    (d.rho.divisor() - rhs).abs()
}

/// A class-conditional distribution that can be sampled.
pub trait ClassSampler {
    fn dim(&self) -> usize;
    fn draw(&self, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<f64>;
}

/// One sampled bag pair plus the nominal proportions that generated it. Bag
/// `gamma` fields hold the exact empirical fractions.
#[derive(Clone, Debug)]
pub struct SampledBagPair {
    pub pair: BagPair,
    pub nominal: GammaPair,
}

/// Draws a bag pair from the paired-bag model: the positive bag holds
/// `m_pos` iid draws from `gamma+ P+ + (1 - gamma+) P-`, the negative bag
/// `m_neg` draws from `gamma- P+ + (1 - gamma-) P-`. Hidden labels record
/// the mixture component of each draw.
pub fn sample_bag_pair(
    p_plus: &dyn ClassSampler,
    p_minus: &dyn ClassSampler,
    gamma: &GammaPair,
    m_pos: usize,
    m_neg: usize,
    seed_value: u64,
) -> Result<SampledBagPair> {
    if m_pos == 0 || m_neg == 0 {
        return Err(Error::InvalidConfig("bag sizes must be positive".into()));
    }
    if p_plus.dim() != p_minus.dim() {
        return Err(Error::DimensionMismatch(format!(
            "class samplers disagree on dimension: {} vs {}",
            p_plus.dim(),
            p_minus.dim()
        )));
    }
    let mut rng = seed::rng(seed_value);
    let mut draw_bag = |m: usize, g: f64| -> Bag {
        let mut rows = Vec::with_capacity(m);
        let mut labels = Vec::with_capacity(m);
        for _ in 0..m {
            let from_plus = rng.gen_bool(g);
            labels.push(if from_plus { 1 } else { -1 });
            rows.push(if from_plus {
                p_plus.draw(&mut rng)
            } else {
                p_minus.draw(&mut rng)
            });
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let instances = DMatrix::from_row_slice(m, p_plus.dim(), &flat);
        Bag::with_labels(instances, labels).expect("sampled bag is well-formed")
    };
    let pos = draw_bag(m_pos, gamma.plus());
    let neg = draw_bag(m_neg, gamma.minus());
    Ok(SampledBagPair {
        pair: BagPair { pos, neg },
        nominal: *gamma,
    })
}

/// One draw from the label-flip construction.
#[derive(Clone, Debug, PartialEq)]
pub struct FlippedSample {
    pub x: Vec<f64>,
    /// True label (mixture component).
    pub y: Label,
    /// Observed noisy label.
    pub y_tilde: Label,
}

/// Draws `n` points from the equivalent corrupted distribution: `(X, Y)`
/// from the clean distribution with prior `derived.pi`, then `Y` flipped at
/// the derived noise rates. In law this equals the paired-bag model with
/// `Pr(Y_tilde = 1) = 1/2`.
pub fn sample_via_flip(
    p_plus: &dyn ClassSampler,
    p_minus: &dyn ClassSampler,
    derived: &PairDerived,
    n: usize,
    seed_value: u64,
) -> Result<Vec<FlippedSample>> {
    if p_plus.dim() != p_minus.dim() {
        return Err(Error::DimensionMismatch(format!(
            "class samplers disagree on dimension: {} vs {}",
            p_plus.dim(),
            p_minus.dim()
        )));
    }
    let mut rng = seed::rng(seed_value);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let y: Label = if rng.gen_bool(derived.pi) { 1 } else { -1 };
        let x = if y == 1 {
            p_plus.draw(&mut rng)
        } else {
            p_minus.draw(&mut rng)
        };
        let flip = rng.gen_bool(derived.rho.flip_probability(y));
        let y_tilde = if flip { -y } else { y };
        out.push(FlippedSample { x, y, y_tilde });
    }
    Ok(out)
}

/// How [`pair_bags`] treats bags of different sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SizePolicy {
    /// All bags must have the same size; edge weight `(gamma_i - gamma_j)^2`.
    Strict,
    /// Unequal sizes allowed; edge weight `(m_i + m_j)(gamma_i - gamma_j)^2`
    /// and the result carries a model-mismatch warning.
    Permissive,
}

/// The result of pairing bags.
#[derive(Clone, Debug)]
pub struct Pairing {
    /// Matched pairs, oriented so `gamma+ >= gamma-`, sorted by the smaller
    /// original bag index.
    pub pairs: Vec<BagPair>,
    /// Original bag indices as (positive, negative) per pair.
    pub indices: Vec<(usize, usize)>,
    /// Sum of edge weights of the chosen matching.
    pub objective: f64,
    /// Per-pair zero-gap flags; flagged pairs must be dropped before
    /// training.
    pub zero_gap: Vec<bool>,
    /// Set when unequal bag sizes were paired under the permissive policy,
    /// which leaves the equal-expected-size assumption of the pseudo-label
    /// model unmet.
    pub size_mismatch: bool,
}

impl Pairing {
    /// Pairs with a positive proportion gap, with their original indices.
    pub fn usable_pairs(&self) -> Vec<(usize, &BagPair)> {
        self.pairs
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.zero_gap[*i])
            .map(|(i, p)| (i, p))
            .collect()
    }
}

/// Integer scale for matching weights; gaps are in [0, 1] so squared gaps
/// survive with ~9 meaningful decimal digits after rounding.
const WEIGHT_SCALE: f64 = (1u64 << 32) as f64;

fn edge_weight(a: &Bag, b: &Bag, policy: SizePolicy) -> f64 {
    let gap = a.gamma - b.gamma;
    let base = gap * gap;
    match policy {
        SizePolicy::Strict => base,
        SizePolicy::Permissive => {
            if a.size() == b.size() {
                base
            } else {
                (a.size() + b.size()) as f64 * base
            }
        }
    }
}

fn orient_and_collect(bags: &[Bag], mates: &[(usize, usize)], policy: SizePolicy) -> Pairing {
    let mut pairs = Vec::with_capacity(mates.len());
    let mut indices = Vec::with_capacity(mates.len());
    let mut zero_gap = Vec::with_capacity(mates.len());
    let mut objective = 0.0;
    let mut size_mismatch = false;
    let mut sorted = mates.to_vec();
    sorted.sort_by_key(|&(i, j)| i.min(j));
    for (i, j) in sorted {
        objective += edge_weight(&bags[i], &bags[j], policy);
        if bags[i].size() != bags[j].size() {
            size_mismatch = true;
        }
        let tie = bags[i].gamma_eq(&bags[j]);
        // orient by proportion; on a tie the lower original index goes first
        let (pi, ni) = if tie {
            (i.min(j), i.max(j))
        } else if bags[i].gamma > bags[j].gamma {
            (i, j)
        } else {
            (j, i)
        };
        pairs.push(BagPair {
            pos: bags[pi].clone(),
            neg: bags[ni].clone(),
        });
        indices.push((pi, ni));
        zero_gap.push(tie);
    }
    Pairing {
        pairs,
        indices,
        objective,
        zero_gap,
        size_mismatch,
    }
}

/// Pairs an even number of bags into N disjoint pairs maximizing the sum of
/// edge weights, using exact maximum-weight perfect matching.
pub fn pair_bags(bags: &[Bag], policy: SizePolicy) -> Result<Pairing> {
    let m = bags.len();
    if m == 0 || m % 2 != 0 {
        return Err(Error::OddBagCount(m));
    }
    if policy == SizePolicy::Strict {
        for b in bags.iter().skip(1) {
            if b.size() != bags[0].size() {
                return Err(Error::UnequalBagSizes(bags[0].size(), b.size()));
            }
        }
    }
    let mut edges = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            let w = (edge_weight(&bags[i], &bags[j], policy) * WEIGHT_SCALE).round() as i64;
            edges.push((i, j, w));
        }
    }
    let mate = matching::max_weight_perfect_matching(m, &edges)?;
    let mut mates = Vec::with_capacity(m / 2);
    for (v, &u) in mate.iter().enumerate() {
        if v < u {
            mates.push((v, u));
        }
    }
    Ok(orient_and_collect(bags, &mates, policy))
}

/// Exhaustive pairing over all (2N - 1)!! perfect matchings; the oracle for
/// [`pair_bags`]. Restricted to 12 bags. Among equal-objective matchings
/// the lexicographically smallest pairing (by original indices) wins.
pub fn pair_bags_bruteforce(bags: &[Bag], policy: SizePolicy) -> Result<Pairing> {
    const MAX_BAGS: usize = 12;
    let m = bags.len();
    if m == 0 || m % 2 != 0 {
        return Err(Error::OddBagCount(m));
    }
    if m > MAX_BAGS {
        return Err(Error::TooManyBags(m, MAX_BAGS));
    }
    if policy == SizePolicy::Strict {
        for b in bags.iter().skip(1) {
            if b.size() != bags[0].size() {
                return Err(Error::UnequalBagSizes(bags[0].size(), b.size()));
            }
        }
    }

    fn enumerate(
        bags: &[Bag],
        policy: SizePolicy,
        used: &mut Vec<bool>,
        current: &mut Vec<(usize, usize)>,
        acc: f64,
        best: &mut Option<(f64, Vec<(usize, usize)>)>,
    ) {
        let first = (0..bags.len()).find(|&v| !used[v]);
        let Some(first) = first else {
            // enumeration order is lexicographic, so strict improvement
            // keeps the lex-smallest optimal pairing
            if best.as_ref().map_or(true, |(w, _)| acc > *w) {
                *best = Some((acc, current.clone()));
            }
            return;
        };
        used[first] = true;
        for j in (first + 1)..bags.len() {
            if used[j] {
                continue;
            }
            used[j] = true;
            current.push((first, j));
            enumerate(
                bags,
                policy,
                used,
                current,
                acc + edge_weight(&bags[first], &bags[j], policy),
                best,
            );
            current.pop();
            used[j] = false;
        }
        used[first] = false;
    }

    let mut used = vec![false; m];
    let mut current = Vec::new();
    let mut best = None;
    enumerate(bags, policy, &mut used, &mut current, 0.0, &mut best);
    let (_, mates) = best.expect("even bag count always admits a matching");
    Ok(orient_and_collect(bags, &mates, policy))
}
