//! The greedy probe/accept policy and exact utility evaluation.
//!
//! The agent repeatedly picks, among the elements that can still extend the
//! accepted set and currently carry a nonnegative value, the largest one
//! under the total order ≻ (value first; surrogates beat grades on equal
//! value; smaller index wins within a kind). An unprobed winner is probed
//! and accepted on the spot when its scaled realization meets its grade;
//! otherwise it stays in the pool at its surrogate value.

use num::{One, Zero};
use std::cmp::Ordering;

use crate::error::Error;
use crate::grades::{grade_at, perturbation_epsilon, surrogate};
use crate::model::{realization_iter, ExtRat, OlcpmInstance, Rat, Realization, DEFAULT_ENUM_CAP};

/// A candidate's standing in the ≻ order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prio {
    pub value: ExtRat,
    /// true when the value is a surrogate Y, false when it is a grade τ.
    pub is_surrogate: bool,
    /// The realized outcome value behind a surrogate (zero for grades).
    /// Surrogate ties can hide different realized values only when α = 0;
    /// the agent is then indifferent and the best response favors the
    /// principal, i.e. the larger realized value.
    pub tie_value: Rat,
    pub index: usize,
}

impl Ord for Prio {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .cmp_ext(&other.value)
            // On equal values a surrogate outranks a grade.
            .then(self.is_surrogate.cmp(&other.is_surrogate))
            // Among tied surrogates the larger realized value wins.
            .then(self.tie_value.cmp(&other.tie_value))
            // Then the smaller index.
            .then(other.index.cmp(&self.index))
    }
}

impl PartialOrd for Prio {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Record of one deterministic run.
#[derive(Debug, Clone)]
pub struct FrugalTrace {
    pub probe_order: Vec<usize>,
    pub returned: Vec<usize>,
    pub principal_reward: Rat,
    pub agent_payment: Rat,
    /// Σ over probed elements of the instance's true cost, regardless of the
    /// cost vector the policy ran under.
    pub probing_cost: Rat,
}

impl FrugalTrace {
    pub fn probed(&self) -> &[usize] {
        &self.probe_order
    }
}

/// Runs the policy on one realization. `cost_vector` drives the grades
/// (callers pass true or perturbed costs); the reported probing cost always
/// uses the instance's true costs.
pub fn run_frugal(
    inst: &OlcpmInstance,
    alpha: &Rat,
    realization: &Realization,
    cost_vector: &[Rat],
) -> FrugalTrace {
    let n = inst.n();
    let grades: Vec<ExtRat> = inst
        .elements
        .iter()
        .zip(cost_vector)
        .map(|(e, c)| grade_at(&e.dist, c, alpha))
        .collect();

    let mut surrogates: Vec<Option<Rat>> = vec![None; n];
    let mut accepted: Vec<usize> = Vec::new();
    let mut probe_order: Vec<usize> = Vec::new();

    loop {
        let mut best: Option<Prio> = None;
        for i in 0..n {
            if accepted.contains(&i) {
                continue;
            }
            let prio = match &surrogates[i] {
                Some(y) => Prio {
                    value: ExtRat::Finite(y.clone()),
                    is_surrogate: true,
                    tie_value: realization.value(inst, i).clone(),
                    index: i,
                },
                None => Prio {
                    value: grades[i].clone(),
                    is_surrogate: false,
                    tie_value: Rat::zero(),
                    index: i,
                },
            };
            if !prio.value.is_nonnegative() {
                continue;
            }
            let mut extended = accepted.clone();
            extended.push(i);
            if !inst.matroid.is_independent(&extended).unwrap_or(false) {
                continue;
            }
            match &best {
                Some(b) if *b >= prio => {}
                _ => best = Some(prio),
            }
        }
        let Some(top) = best else { break };
        let i = top.index;
        if top.is_surrogate {
            accepted.push(i);
        } else {
            probe_order.push(i);
            let x = realization.value(inst, i).clone();
            let ax = alpha.clone() * x;
            let meets_grade = match grades[i].finite() {
                Some(t) => ax >= *t,
                None => false,
            };
            if meets_grade {
                accepted.push(i);
            } else {
                surrogates[i] = Some(grades[i].min_with(&ax));
            }
        }
    }

    let reward: Rat = accepted
        .iter()
        .map(|&i| realization.value(inst, i).clone())
        .sum();
    let probing_cost: Rat = probe_order
        .iter()
        .map(|&i| inst.elements[i].cost.clone())
        .sum();
    FrugalTrace {
        agent_payment: alpha.clone() * reward.clone(),
        principal_reward: reward,
        probing_cost,
        probe_order,
        returned: accepted,
    }
}

/// Exact expected utilities at a contract α.
#[derive(Debug, Clone)]
pub struct UtilityReport {
    pub u_agent: Rat,
    pub u_principal: Rat,
    /// Expected probing cost under true costs.
    pub expected_cost: Rat,
    /// Expected total reward of the returned set.
    pub expected_reward: Rat,
    /// Conditional acceptance probabilities r_{i,k}.
    pub acceptance: Vec<Vec<Rat>>,
    /// The cost-perturbation scale the policy ran under.
    pub epsilon: Rat,
}

/// Evaluates the contract exactly by enumerating every realization; the
/// policy runs under perturbed costs c(1−ε) while utilities are reported
/// against true costs.
pub fn exact_utilities(
    inst: &OlcpmInstance,
    alpha: &Rat,
    cap: u64,
) -> Result<UtilityReport, Error> {
    let eps = perturbation_epsilon(inst, alpha);
    let perturbed = inst.perturbed_costs(&eps);

    let mut expected_reward = Rat::zero();
    let mut expected_cost = Rat::zero();
    let mut accept_mass = vec![vec![Rat::zero(); inst.m]; inst.n()];
    for (real, p) in realization_iter(inst, cap)? {
        if p.is_zero() {
            continue;
        }
        let trace = run_frugal(inst, alpha, &real, &perturbed);
        expected_reward += p.clone() * trace.principal_reward.clone();
        expected_cost += p.clone() * trace.probing_cost.clone();
        for &i in &trace.returned {
            accept_mass[i][real.outcome[i]] += p.clone();
        }
    }

    let acceptance = accept_mass
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            row.into_iter()
                .enumerate()
                .map(|(k, mass)| {
                    let p = &inst.elements[i].dist.outcomes[k].1;
                    if p.is_zero() {
                        Rat::zero()
                    } else {
                        mass / p.clone()
                    }
                })
                .collect()
        })
        .collect();

    let one = Rat::one();
    Ok(UtilityReport {
        u_agent: alpha.clone() * expected_reward.clone() - expected_cost.clone(),
        u_principal: (one - alpha.clone()) * expected_reward.clone(),
        expected_cost,
        expected_reward,
        acceptance,
        epsilon: eps,
    })
}

/// Pr[element i ends up in the returned set | X_i = v_{i,k}], exactly, by
/// enumerating every outcome of the other elements.
pub fn acceptance_prob_exact(
    inst: &OlcpmInstance,
    alpha: &Rat,
    i: usize,
    k: usize,
    cap: u64,
) -> Result<Rat, Error> {
    let n = inst.n();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, n });
    }
    if k >= inst.m {
        return Err(Error::IndexOutOfRange {
            index: k,
            n: inst.m,
        });
    }
    crate::model::check_state_count(inst.m, n.saturating_sub(1), cap)?;

    let eps = perturbation_epsilon(inst, alpha);
    let perturbed = inst.perturbed_costs(&eps);

    let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let mut counter = vec![0usize; others.len()];
    let mut total = Rat::zero();
    loop {
        let mut outcome = vec![0usize; n];
        outcome[i] = k;
        let mut p = Rat::one();
        for (slot, &j) in others.iter().enumerate() {
            outcome[j] = counter[slot];
            p *= inst.elements[j].dist.outcomes[counter[slot]].1.clone();
        }
        if !p.is_zero() {
            let real = Realization { outcome };
            let trace = run_frugal(inst, alpha, &real, &perturbed);
            if trace.returned.contains(&i) {
                total += p;
            }
        }
        // Advance the odometer over the other elements' outcomes.
        let mut pos = others.len();
        loop {
            if pos == 0 {
                return Ok(total);
            }
            pos -= 1;
            counter[pos] += 1;
            if counter[pos] < inst.m {
                break;
            }
            counter[pos] = 0;
        }
    }
}

/// E[max-weight independent set of surrogates] under the given cost vector,
/// by brute force over subsets — the agent-utility reference of choice for
/// small instances.
pub fn expected_best_surrogate_set(
    inst: &OlcpmInstance,
    alpha: &Rat,
    cost_vector: &[Rat],
) -> Result<Rat, Error> {
    let n = inst.n();
    let grades: Vec<ExtRat> = inst
        .elements
        .iter()
        .zip(cost_vector)
        .map(|(e, c)| grade_at(&e.dist, c, alpha))
        .collect();
    let mut total = Rat::zero();
    for (real, p) in realization_iter(inst, DEFAULT_ENUM_CAP)? {
        if p.is_zero() {
            continue;
        }
        let ys: Vec<Rat> = (0..n)
            .map(|i| surrogate(alpha, real.value(inst, i), &grades[i]))
            .collect();
        let mut best = Rat::zero();
        for mask in 0u64..(1u64 << n) {
            let set: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
            if !inst.matroid.is_independent(&set)? {
                continue;
            }
            let w: Rat = set.iter().map(|&i| ys[i].clone()).sum();
            if w > best {
                best = w;
            }
        }
        total += p * best;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matroid::MatroidOracle;
    use crate::model::{rat, rat_int, ElementSpec, OutcomeDistribution};

    fn instance_w() -> OlcpmInstance {
        OlcpmInstance::new(
            MatroidOracle::Uniform { n: 2, rank: 1 },
            vec![
                ElementSpec {
                    cost: rat_int(1),
                    dist: OutcomeDistribution::new(vec![
                        (rat_int(10), rat(1, 2)),
                        (rat_int(0), rat(1, 2)),
                    ]),
                },
                ElementSpec {
                    cost: rat_int(0),
                    dist: OutcomeDistribution::new(vec![
                        (rat_int(4), rat(1, 2)),
                        (rat_int(0), rat(1, 2)),
                    ]),
                },
            ],
        )
    }

    #[test]
    fn run_probes_in_grade_order_and_keeps_the_better_surrogate() {
        let inst = instance_w();
        let real = Realization { outcome: vec![1, 0] }; // X_0 = 0, X_1 = 4
        let trace = run_frugal(&inst, &rat(1, 2), &real, &inst.true_costs());
        assert_eq!(trace.probe_order, vec![1, 0]);
        assert_eq!(trace.returned, vec![1]);
        assert_eq!(trace.principal_reward, rat_int(4));
        assert_eq!(trace.agent_payment, rat_int(2));
        assert_eq!(trace.probing_cost, rat_int(1));
    }

    #[test]
    fn immediate_accept_fills_the_rank() {
        let inst = instance_w();
        let real = Realization { outcome: vec![0, 0] }; // X_0 = 10, X_1 = 4
        let trace = run_frugal(&inst, &rat(1, 2), &real, &inst.true_costs());
        assert_eq!(trace.returned, vec![0]);
        assert_eq!(trace.principal_reward, rat_int(10));
    }

    #[test]
    fn negative_grade_is_never_probed() {
        let inst = OlcpmInstance::new(
            MatroidOracle::Uniform { n: 1, rank: 1 },
            vec![ElementSpec {
                cost: rat_int(1),
                dist: OutcomeDistribution::new(vec![
                    (rat_int(10), rat(1, 2)),
                    (rat_int(0), rat(1, 2)),
                ]),
            }],
        );
        let real = Realization { outcome: vec![0] };
        let trace = run_frugal(&inst, &rat(1, 10), &real, &inst.true_costs());
        assert!(trace.probe_order.is_empty());
        assert!(trace.returned.is_empty());
        assert_eq!(trace.principal_reward, rat_int(0));
    }

    #[test]
    fn exact_utilities_at_one_half() {
        let report = exact_utilities(&instance_w(), &rat(1, 2), DEFAULT_ENUM_CAP).unwrap();
        assert_eq!(report.u_principal, rat_int(3));
        assert_eq!(report.u_agent, rat_int(2));
        assert_eq!(report.expected_cost, rat_int(1));
        assert_eq!(report.expected_reward, rat_int(6));
        assert_eq!(report.acceptance[0][0], rat_int(1));
        assert_eq!(report.acceptance[1][0], rat(1, 2));
        assert_eq!(report.acceptance[1][1], rat_int(0));
    }

    #[test]
    fn perturbation_breaks_the_tie_at_one_third() {
        let report = exact_utilities(&instance_w(), &rat(1, 3), DEFAULT_ENUM_CAP).unwrap();
        assert_eq!(report.expected_reward, rat_int(6));
        assert_eq!(report.u_principal, rat_int(4));
    }

    #[test]
    fn full_transfer_leaves_the_principal_nothing() {
        let report = exact_utilities(&instance_w(), &rat_int(1), DEFAULT_ENUM_CAP).unwrap();
        assert_eq!(report.u_principal, rat_int(0));
    }

    #[test]
    fn acceptance_probabilities_match_hand_counts() {
        let inst = instance_w();
        let a = rat(1, 2);
        assert_eq!(
            acceptance_prob_exact(&inst, &a, 0, 0, DEFAULT_ENUM_CAP).unwrap(),
            rat_int(1)
        );
        assert_eq!(
            acceptance_prob_exact(&inst, &a, 1, 0, DEFAULT_ENUM_CAP).unwrap(),
            rat(1, 2)
        );
        assert_eq!(
            acceptance_prob_exact(&inst, &a, 1, 1, DEFAULT_ENUM_CAP).unwrap(),
            rat_int(0)
        );
    }

    #[test]
    fn acceptance_aggregates_to_the_principal_utility() {
        let inst = instance_w();
        for a in [rat(1, 5), rat(1, 3), rat(1, 2), rat(3, 4)] {
            let report = exact_utilities(&inst, &a, DEFAULT_ENUM_CAP).unwrap();
            let mut agg = Rat::zero();
            for (i, e) in inst.elements.iter().enumerate() {
                for (k, (v, p)) in e.dist.outcomes.iter().enumerate() {
                    agg += v.clone() * p.clone() * report.acceptance[i][k].clone();
                }
            }
            assert_eq!((Rat::one() - a.clone()) * agg, report.u_principal);
        }
    }

    #[test]
    fn agent_utility_matches_the_best_surrogate_set() {
        // Under a common cost vector the policy's expected utility equals
        // E[max-weight independent surrogate set]; checked for true and
        // perturbed costs.
        let inst = instance_w();
        let a = rat(1, 2);

        let true_costs = inst.true_costs();
        let report = exact_utilities(&inst, &a, DEFAULT_ENUM_CAP).unwrap();
        let brute_true = expected_best_surrogate_set(&inst, &a, &true_costs).unwrap();
        assert_eq!(report.u_agent, brute_true);
        assert_eq!(brute_true, rat_int(2));

        let eps = crate::grades::perturbation_epsilon(&inst, &a);
        let perturbed = inst.perturbed_costs(&eps);
        let mut reward = Rat::zero();
        let mut cost = Rat::zero();
        for (real, p) in realization_iter(&inst, DEFAULT_ENUM_CAP).unwrap() {
            let t = run_frugal(&inst, &a, &real, &perturbed);
            reward += p.clone() * t.principal_reward;
            cost += p
                * t.probe_order
                    .iter()
                    .map(|&i| perturbed[i].clone())
                    .sum::<Rat>();
        }
        let perturbed_agent = a.clone() * reward - cost;
        let brute_perturbed = expected_best_surrogate_set(&inst, &a, &perturbed).unwrap();
        assert_eq!(perturbed_agent, brute_perturbed);
        assert_eq!(brute_perturbed, rat(5, 2));
    }

    #[test]
    fn lemma_style_identity_links_the_utilities() {
        let inst = instance_w();
        for a in [rat(1, 5), rat(1, 3), rat(1, 2), rat(2, 3)] {
            let report = exact_utilities(&inst, &a, DEFAULT_ENUM_CAP).unwrap();
            // U_P = ((1−α)/α)(αE[R] − E[cost] + E[cost]) reduces to
            // (1−α)E[R]; the interesting identity uses the perturbed agent
            // utility plus the matching perturbed cost.
            let eps = report.epsilon.clone();
            let perturbed = inst.perturbed_costs(&eps);
            let mut pcost = Rat::zero();
            for (real, p) in realization_iter(&inst, DEFAULT_ENUM_CAP).unwrap() {
                let t = run_frugal(&inst, &a, &real, &perturbed);
                pcost += p
                    * t.probe_order
                        .iter()
                        .map(|&i| perturbed[i].clone())
                        .sum::<Rat>();
            }
            let u_agent_pert = a.clone() * report.expected_reward.clone() - pcost.clone();
            let lhs = report.u_principal.clone();
            let rhs = (Rat::one() - a.clone()) / a.clone() * (u_agent_pert + pcost);
            assert_eq!(lhs, rhs, "alpha = {a}");
        }
    }

    #[test]
    fn returned_set_is_probed_and_independent() {
        let inst = instance_w();
        for a in [rat_int(0), rat(1, 5), rat(1, 2), rat_int(1)] {
            let eps = crate::grades::perturbation_epsilon(&inst, &a);
            let perturbed = inst.perturbed_costs(&eps);
            for (real, _) in realization_iter(&inst, DEFAULT_ENUM_CAP).unwrap() {
                let t = run_frugal(&inst, &a, &real, &perturbed);
                for i in &t.returned {
                    assert!(t.probe_order.contains(i));
                }
                assert!(inst.matroid.is_independent(&t.returned).unwrap());
            }
        }
    }
}
