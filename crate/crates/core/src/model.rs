//! Problem data: OLCPM and UPM instances, outcome distributions, contracts,
//! realizations, and the exact scalar types everything is computed over.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use std::cmp::Ordering;
use std::fmt;

use crate::error::Error;
use crate::matroid::MatroidOracle;

/// Exact scalar used throughout the deterministic paths.
pub type Rat = BigRational;

pub fn rat(num: i64, den: i64) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

pub fn rat_int(num: i64) -> Rat {
    Rat::from_integer(BigInt::from(num))
}

/// Parses `"p"` or `"p/q"` with a positive denominator.
pub fn parse_rat(text: &str) -> Result<Rat, Error> {
    let bad = || Error::InvalidDistribution(format!("cannot parse rational {text:?}"));
    let mut parts = text.splitn(2, '/');
    let num: BigInt = parts
        .next()
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(bad)?;
    match parts.next() {
        None => Ok(Rat::from_integer(num)),
        Some(den) => {
            let den: BigInt = den.trim().parse().map_err(|_| bad())?;
            if den <= BigInt::zero() {
                return Err(bad());
            }
            Ok(Rat::new(num, den))
        }
    }
}

/// Canonical `num/den` text (plain integer when the denominator is 1).
pub fn format_rat(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn rat_to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // Fall back on a scaled division for magnitudes beyond f64 integer range.
        let n = r.numer().to_f64().unwrap_or(f64::INFINITY);
        let d = r.denom().to_f64().unwrap_or(f64::INFINITY);
        n / d
    })
}

/// A rational extended with +∞ (the grade of a cost-0 element).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExtRat {
    Finite(Rat),
    PosInf,
}

impl ExtRat {
    pub fn finite(&self) -> Option<&Rat> {
        match self {
            ExtRat::Finite(r) => Some(r),
            ExtRat::PosInf => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, ExtRat::PosInf)
    }

    /// min(self, other) where +∞ loses to any finite value.
    pub fn min_with(&self, other: &Rat) -> Rat {
        match self {
            ExtRat::Finite(r) => r.clone().min(other.clone()),
            ExtRat::PosInf => other.clone(),
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        match self {
            ExtRat::Finite(r) => !r.is_negative(),
            ExtRat::PosInf => true,
        }
    }
}

impl PartialOrd for ExtRat {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp_ext(other))
    }
}

impl ExtRat {
    pub fn cmp_ext(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ExtRat::PosInf, ExtRat::PosInf) => Ordering::Equal,
            (ExtRat::PosInf, ExtRat::Finite(_)) => Ordering::Greater,
            (ExtRat::Finite(_), ExtRat::PosInf) => Ordering::Less,
            (ExtRat::Finite(a), ExtRat::Finite(b)) => a.cmp(b),
        }
    }
}

impl fmt::Display for ExtRat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtRat::Finite(r) => write!(f, "{}", format_rat(r)),
            ExtRat::PosInf => write!(f, "inf"),
        }
    }
}

/// Discrete outcome distribution, padded to the instance-wide support bound.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDistribution {
    /// (value, probability) pairs; probabilities sum to 1.
    pub outcomes: Vec<(Rat, Rat)>,
}

impl OutcomeDistribution {
    pub fn new(outcomes: Vec<(Rat, Rat)>) -> Self {
        OutcomeDistribution { outcomes }
    }

    pub fn two_point(value: Rat, prob: Rat) -> Self {
        let rest = Rat::one() - prob.clone();
        OutcomeDistribution {
            outcomes: vec![(value, prob), (Rat::zero(), rest)],
        }
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn expected_value(&self) -> Rat {
        self.outcomes
            .iter()
            .map(|(v, p)| v.clone() * p.clone())
            .sum()
    }

    fn violations(&self, who: &str, out: &mut Vec<String>) {
        let mut total = Rat::zero();
        for (k, (v, p)) in self.outcomes.iter().enumerate() {
            if v.is_negative() {
                out.push(format!("{who}: outcome {} has negative value", k + 1));
            }
            if p.is_negative() {
                out.push(format!("{who}: outcome {} has negative probability", k + 1));
            }
            total += p.clone();
        }
        if !total.is_one() {
            out.push(format!(
                "{who}: probabilities sum {} != 1",
                format_rat(&total)
            ));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElementSpec {
    pub cost: Rat,
    pub dist: OutcomeDistribution,
}

/// An optimal-linear-contract problem instance.
#[derive(Debug, Clone)]
pub struct OlcpmInstance {
    pub matroid: MatroidOracle,
    pub elements: Vec<ElementSpec>,
    /// Common support bound after padding.
    pub m: usize,
}

impl OlcpmInstance {
    /// Builds an instance, padding every distribution with zero-probability
    /// zero-value outcomes up to the longest support.
    pub fn new(matroid: MatroidOracle, elements: Vec<ElementSpec>) -> Self {
        let m = elements.iter().map(|e| e.dist.len()).max().unwrap_or(0);
        let mut elements = elements;
        for e in &mut elements {
            while e.dist.len() < m {
                e.dist.outcomes.push((Rat::zero(), Rat::zero()));
            }
        }
        OlcpmInstance {
            matroid,
            elements,
            m,
        }
    }

    pub fn n(&self) -> usize {
        self.elements.len()
    }

    pub fn validate(&self) -> Vec<String> {
        let mut out = self.matroid.validate();
        if self.matroid.n() != self.elements.len() {
            out.push(format!(
                "element count {} does not match ground set size {}",
                self.elements.len(),
                self.matroid.n()
            ));
        }
        for (i, e) in self.elements.iter().enumerate() {
            if e.cost.is_negative() {
                out.push(format!("element {i}: negative cost"));
            }
            if e.dist.len() != self.m {
                out.push(format!("element {i}: support not padded to m={}", self.m));
            }
            e.dist.violations(&format!("element {i}"), &mut out);
        }
        out
    }

    pub fn true_costs(&self) -> Vec<Rat> {
        self.elements.iter().map(|e| e.cost.clone()).collect()
    }

    /// Costs scaled by `1 - eps`.
    pub fn perturbed_costs(&self, eps: &Rat) -> Vec<Rat> {
        let factor = Rat::one() - eps.clone();
        self.elements
            .iter()
            .map(|e| e.cost.clone() * factor.clone())
            .collect()
    }
}

/// A transfer fraction α ∈ [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct LinearContract {
    pub alpha: Rat,
}

impl LinearContract {
    pub fn new(alpha: Rat) -> Result<Self, Error> {
        if alpha.is_negative() || alpha > Rat::one() {
            return Err(Error::InvalidDistribution(format!(
                "alpha {} outside [0,1]",
                format_rat(&alpha)
            )));
        }
        Ok(LinearContract { alpha })
    }
}

/// One point of the outcome sample space: an outcome index per element
/// (0-based internally).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Realization {
    pub outcome: Vec<usize>,
}

impl Realization {
    pub fn probability(&self, inst: &OlcpmInstance) -> Rat {
        self.outcome
            .iter()
            .enumerate()
            .map(|(i, &k)| inst.elements[i].dist.outcomes[k].1.clone())
            .product()
    }

    pub fn value<'a>(&self, inst: &'a OlcpmInstance, i: usize) -> &'a Rat {
        &inst.elements[i].dist.outcomes[self.outcome[i]].0
    }
}

/// Default cap on brute-force enumeration state counts.
pub const DEFAULT_ENUM_CAP: u64 = 2_000_000;

/// Iterates every realization with its exact probability. Errors when
/// `m^n` exceeds `cap`.
pub fn realization_iter(
    inst: &OlcpmInstance,
    cap: u64,
) -> Result<impl Iterator<Item = (Realization, Rat)> + '_, Error> {
    check_state_count(inst.m, inst.n(), cap)?;
    let n = inst.n();
    let mut counter = vec![0usize; n];
    let mut done = inst.m == 0 && n > 0;
    let mut first = true;
    Ok(std::iter::from_fn(move || {
        if done {
            return None;
        }
        if first {
            first = false;
        } else {
            // Odometer increment over outcome indices.
            let mut pos = n;
            loop {
                if pos == 0 {
                    done = true;
                    return None;
                }
                pos -= 1;
                counter[pos] += 1;
                if counter[pos] < inst.m {
                    break;
                }
                counter[pos] = 0;
            }
        }
        let r = Realization {
            outcome: counter.clone(),
        };
        let p = r.probability(inst);
        if n == 0 {
            done = true;
        }
        Some((r, p))
    }))
}

pub fn check_state_count(base: usize, exponent: usize, cap: u64) -> Result<(), Error> {
    let mut states: u64 = 1;
    for _ in 0..exponent {
        states = match states.checked_mul(base as u64) {
            Some(s) if s <= cap => s,
            _ => {
                return Err(Error::EnumerationInfeasible {
                    states: format!("{base}^{exponent}"),
                    cap,
                })
            }
        };
    }
    Ok(())
}

/// An unreliability problem instance: the chance that `special` stays
/// unspanned by the randomly existing other elements.
#[derive(Debug, Clone)]
pub struct UpmInstance {
    pub matroid: MatroidOracle,
    pub special: usize,
    /// Existence probability per element; the entry at `special` is unused.
    pub probs: Vec<Rat>,
}

impl UpmInstance {
    pub fn n(&self) -> usize {
        self.probs.len()
    }

    pub fn others(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n()).filter(move |&i| i != self.special)
    }

    pub fn validate(&self) -> Vec<String> {
        let mut out = self.matroid.validate();
        if self.matroid.n() != self.probs.len() {
            out.push(format!(
                "probability count {} does not match ground set size {}",
                self.probs.len(),
                self.matroid.n()
            ));
        }
        if self.special >= self.probs.len() {
            out.push(format!("special element {} out of range", self.special));
        }
        for i in self.others() {
            let p = &self.probs[i];
            if p.is_negative() || *p > Rat::one() {
                out.push(format!("element {i}: probability out of [0,1]"));
            }
        }
        out
    }
}

/// Validates either instance kind, returning violations as data.
pub fn validate_olcpm(inst: &OlcpmInstance) -> Vec<String> {
    inst.validate()
}

pub fn validate_upm(inst: &UpmInstance) -> Vec<String> {
    inst.validate()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half() -> Rat {
        rat(1, 2)
    }

    fn uniform(n: usize, r: usize) -> MatroidOracle {
        MatroidOracle::Uniform { n, rank: r }
    }

    fn coin(v: i64) -> OutcomeDistribution {
        OutcomeDistribution::new(vec![(rat_int(v), half()), (rat_int(0), half())])
    }

    #[test]
    fn validate_flags_bad_probability_sums() {
        let good = OlcpmInstance::new(
            uniform(1, 1),
            vec![ElementSpec {
                cost: rat_int(1),
                dist: coin(10),
            }],
        );
        assert!(good.validate().is_empty());

        let bad = OlcpmInstance::new(
            uniform(1, 1),
            vec![ElementSpec {
                cost: rat_int(1),
                dist: OutcomeDistribution::new(vec![
                    (rat_int(10), rat(1, 2)),
                    (rat_int(0), rat(1, 4)),
                ]),
            }],
        );
        let violations = bad.validate();
        assert!(violations.iter().any(|v| v.contains("sum 3/4")), "{violations:?}");
    }

    #[test]
    fn validate_flags_upm_probability_range() {
        let inst = UpmInstance {
            matroid: uniform(2, 1),
            special: 1,
            probs: vec![rat(5, 4), Rat::zero()],
        };
        let violations = inst.validate();
        assert!(violations.iter().any(|v| v.contains("out of [0,1]")));
    }

    #[test]
    fn realizations_enumerate_the_product_space() {
        let inst = OlcpmInstance::new(
            uniform(2, 1),
            vec![
                ElementSpec {
                    cost: rat_int(1),
                    dist: coin(10),
                },
                ElementSpec {
                    cost: rat_int(0),
                    dist: coin(4),
                },
            ],
        );
        let all: Vec<_> = realization_iter(&inst, DEFAULT_ENUM_CAP).unwrap().collect();
        assert_eq!(all.len(), 4);
        for (_, p) in &all {
            assert_eq!(*p, rat(1, 4));
        }
        let total: Rat = all.iter().map(|(_, p)| p.clone()).sum();
        assert!(total.is_one());
    }

    #[test]
    fn single_element_probabilities_carry_through() {
        let inst = OlcpmInstance::new(
            uniform(1, 1),
            vec![ElementSpec {
                cost: rat_int(0),
                dist: OutcomeDistribution::new(vec![
                    (rat_int(3), rat(1, 2)),
                    (rat_int(2), rat(1, 3)),
                    (rat_int(1), rat(1, 6)),
                ]),
            }],
        );
        let probs: Vec<Rat> = realization_iter(&inst, DEFAULT_ENUM_CAP)
            .unwrap()
            .map(|(_, p)| p)
            .collect();
        assert_eq!(probs, vec![rat(1, 2), rat(1, 3), rat(1, 6)]);
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let elems: Vec<ElementSpec> = (0..20)
            .map(|_| ElementSpec {
                cost: rat_int(0),
                dist: OutcomeDistribution::new(vec![
                    (rat_int(1), rat(1, 3)),
                    (rat_int(2), rat(1, 3)),
                    (rat_int(3), rat(1, 3)),
                ]),
            })
            .collect();
        let inst = OlcpmInstance::new(uniform(20, 5), elems);
        let err = realization_iter(&inst, DEFAULT_ENUM_CAP).err().unwrap();
        assert!(err.to_string().contains("3^20"));
    }

    #[test]
    fn rational_text_round_trips() {
        assert_eq!(parse_rat("3/6").unwrap(), half());
        assert_eq!(format_rat(&parse_rat("3/6").unwrap()), "1/2");
        assert_eq!(format_rat(&parse_rat("4").unwrap()), "4");
        assert!(parse_rat("1/0").is_err());
        assert!(parse_rat("1/-2").is_err());
    }
}
