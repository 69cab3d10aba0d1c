//! Optimal-contract search: exact argmax over critical values and the two
//! sampling-based drivers for the special cases.

use num::bigint::BigInt;
use num::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Error;
use crate::frugal::{exact_utilities, run_frugal};
use crate::grades::{critical_values, perturbation_epsilon};
use crate::model::{rat, rat_to_f64, OlcpmInstance, Rat, Realization};
use crate::sampler::{planned_budget, sample_acceptance, utility_from_acceptance, SampleConfig};

/// A principal-utility value from either pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum Utility {
    Exact(Rat),
    Sampled(f64),
}

impl Utility {
    pub fn as_f64(&self) -> f64 {
        match self {
            Utility::Exact(r) => rat_to_f64(r),
            Utility::Sampled(x) => *x,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ContractSolution {
    pub alpha_star: Rat,
    pub utility: Utility,
    pub method: String,
    /// Every evaluated (α, U_P), sorted by α.
    pub candidates: Vec<(Rat, Utility)>,
    /// Certified replication budget for the FPRAS methods (reported, not run).
    pub certified_budget: Option<BigInt>,
    pub mu: Option<Rat>,
}

impl ContractSolution {
    pub fn candidate_at(&self, alpha: &Rat) -> Option<&Utility> {
        self.candidates
            .iter()
            .find(|(a, _)| a == alpha)
            .map(|(_, u)| u)
    }
}

fn pick_argmax_exact(candidates: &[(Rat, Rat)]) -> (Rat, Rat) {
    // Ties break toward the smallest α; candidates come sorted ascending.
    let mut best = candidates[0].clone();
    for (a, u) in &candidates[1..] {
        if *u > best.1 {
            best = (a.clone(), u.clone());
        }
    }
    best
}

/// Exact optimum: evaluate every critical value and take the argmax.
pub fn solve_exact(inst: &OlcpmInstance, cap: u64) -> Result<ContractSolution, Error> {
    let crit = critical_values(inst);
    let evaluated: Vec<(Rat, Rat)> = crit
        .par_iter()
        .map(|a| exact_utilities(inst, a, cap).map(|r| (a.clone(), r.u_principal)))
        .collect::<Result<_, _>>()?;
    let (alpha_star, utility) = pick_argmax_exact(&evaluated);
    Ok(ContractSolution {
        alpha_star,
        utility: Utility::Exact(utility),
        method: "exact".into(),
        candidates: evaluated
            .into_iter()
            .map(|(a, u)| (a, Utility::Exact(u)))
            .collect(),
        certified_budget: None,
        mu: None,
    })
}

fn solve_by_sampling(
    inst: &OlcpmInstance,
    cfg: &SampleConfig,
    method: &str,
    mu: Rat,
) -> Result<ContractSolution, Error> {
    let crit = critical_values(inst);
    let mut candidates: Vec<(Rat, f64)> = Vec::with_capacity(crit.len());
    for a in &crit {
        let est = sample_acceptance(inst, a, cfg)?;
        candidates.push((a.clone(), utility_from_acceptance(inst, a, &est.rho)));
    }
    let mut best = candidates[0].clone();
    for (a, u) in &candidates[1..] {
        if *u > best.1 {
            best = (a.clone(), *u);
        }
    }
    Ok(ContractSolution {
        alpha_star: best.0,
        utility: Utility::Sampled(best.1),
        method: method.into(),
        candidates: candidates
            .into_iter()
            .map(|(a, u)| (a, Utility::Sampled(u)))
            .collect(),
        certified_budget: Some(planned_budget(&mu, inst.n(), inst.m)),
        mu: Some(mu),
    })
}

/// Largest per-element max_k v·p, used by the balance check.
fn peak_values(inst: &OlcpmInstance) -> Vec<Rat> {
    inst.elements
        .iter()
        .map(|e| {
            e.dist
                .outcomes
                .iter()
                .map(|(v, p)| v.clone() * p.clone())
                .max()
                .unwrap_or_else(Rat::zero)
        })
        .collect()
}

/// Sampling driver for balanced instances: every pair of (nonzero) peak
/// expected outcomes must be within a factor ω.
pub fn solve_fpras_balanced(
    inst: &OlcpmInstance,
    eps: &Rat,
    omega: &Rat,
    cfg: &SampleConfig,
) -> Result<ContractSolution, Error> {
    let peaks: Vec<Rat> = peak_values(inst)
        .into_iter()
        .filter(|x| x.is_positive())
        .collect();
    if let (Some(hi), Some(lo)) = (peaks.iter().max(), peaks.iter().min()) {
        let ratio = hi.clone() / lo.clone();
        if ratio > *omega {
            return Err(Error::BalanceViolated {
                ratio: ratio.to_string(),
                omega: omega.to_string(),
            });
        }
    }
    let n = inst.n() as i64;
    let m = inst.m as i64;
    let mu = eps.clone() / (rat(2, 1) * omega.clone())
        / Rat::from_integer(BigInt::from(160) * BigInt::from(m).pow(4) * BigInt::from(n).pow(4));
    solve_by_sampling(inst, cfg, "balanced", mu)
}

/// Sampling driver for the zero/value two-point special case.
pub fn solve_fpras_bounded_support(
    inst: &OlcpmInstance,
    eps: &Rat,
    cfg: &SampleConfig,
) -> Result<ContractSolution, Error> {
    if inst.m > 2 {
        return Err(Error::SupportShape(format!(
            "support bound m={} exceeds 2",
            inst.m
        )));
    }
    for (i, e) in inst.elements.iter().enumerate() {
        let nonzero = e
            .dist
            .outcomes
            .iter()
            .filter(|(v, p)| !v.is_zero() && !p.is_zero())
            .count();
        let has_zero = e
            .dist
            .outcomes
            .iter()
            .any(|(v, p)| v.is_zero() && !p.is_zero())
            || nonzero == 0;
        if nonzero > 1 || !has_zero {
            return Err(Error::SupportShape(format!(
                "element {i} is not a zero/value two-point distribution"
            )));
        }
    }
    let t_distinct = distinct_value_count(inst);
    let n = inst.n() as i64;
    let m = inst.m.max(1) as i64;
    // (ε/(2n)^T)·1/(160 m⁴ n⁴)·1/(2·80 n³ m³)
    let two_n_pow = Rat::from_integer(BigInt::from(2 * n).pow(t_distinct as u32));
    let mu = eps.clone() / two_n_pow
        / Rat::from_integer(BigInt::from(160) * BigInt::from(m).pow(4) * BigInt::from(n).pow(4))
        / Rat::from_integer(BigInt::from(160) * BigInt::from(n).pow(3) * BigInt::from(m).pow(3));
    solve_by_sampling(inst, cfg, "bounded-support", mu)
}

/// Number of distinct outcome values across the whole instance.
pub fn distinct_value_count(inst: &OlcpmInstance) -> usize {
    let mut values: Vec<&Rat> = inst
        .elements
        .iter()
        .flat_map(|e| e.dist.outcomes.iter().map(|(v, _)| v))
        .collect();
    values.sort();
    values.dedup();
    values.len()
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub alpha: Rat,
    pub u_principal: Utility,
    pub u_agent: Utility,
    pub expected_cost: Utility,
}

#[derive(Debug, Clone)]
pub enum SweepMode {
    Exact { cap: u64 },
    Sampled(SampleConfig),
}

/// One row per α: exact enumeration, or a seeded direct simulation of the
/// policy when sampling.
pub fn sweep(
    inst: &OlcpmInstance,
    alphas: &[Rat],
    mode: &SweepMode,
) -> Result<Vec<SweepRow>, Error> {
    let mut rows = Vec::with_capacity(alphas.len());
    for a in alphas {
        match mode {
            SweepMode::Exact { cap } => {
                let r = exact_utilities(inst, a, *cap)?;
                rows.push(SweepRow {
                    alpha: a.clone(),
                    u_principal: Utility::Exact(r.u_principal),
                    u_agent: Utility::Exact(r.u_agent),
                    expected_cost: Utility::Exact(r.expected_cost),
                });
            }
            SweepMode::Sampled(cfg) => {
                let (reward, cost, t) = simulate_mean(inst, a, cfg)?;
                let reward_f = rat_to_f64(&reward) / t as f64;
                let cost_f = rat_to_f64(&cost) / t as f64;
                let alpha_f = rat_to_f64(a);
                rows.push(SweepRow {
                    alpha: a.clone(),
                    u_principal: Utility::Sampled((1.0 - alpha_f) * reward_f),
                    u_agent: Utility::Sampled(alpha_f * reward_f - cost_f),
                    expected_cost: Utility::Sampled(cost_f),
                });
            }
        }
    }
    Ok(rows)
}

/// Seeded replications of the policy; exact rational accumulation keeps the
/// result independent of worker count.
fn simulate_mean(
    inst: &OlcpmInstance,
    alpha: &Rat,
    cfg: &SampleConfig,
) -> Result<(Rat, Rat, u64), Error> {
    let t = cfg.resolve_for(inst.n(), inst.m)?;
    let eps = perturbation_epsilon(inst, alpha);
    let perturbed = inst.perturbed_costs(&eps);
    let cumul: Vec<Vec<f64>> = inst
        .elements
        .iter()
        .map(|e| {
            let mut acc = 0.0;
            e.dist
                .outcomes
                .iter()
                .map(|(_, p)| {
                    acc += rat_to_f64(p);
                    acc
                })
                .collect()
        })
        .collect();
    let n = inst.n();
    let (reward, cost) = (0..t)
        .into_par_iter()
        .fold(
            || (Rat::zero(), Rat::zero()),
            |(mut rw, mut ct), rep| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(rep);
                let outcome: Vec<usize> = (0..n)
                    .map(|i| {
                        let u: f64 = rng.gen();
                        cumul[i]
                            .iter()
                            .position(|&c| u < c)
                            .unwrap_or(inst.m.saturating_sub(1))
                    })
                    .collect();
                let trace = run_frugal(inst, alpha, &Realization { outcome }, &perturbed);
                rw += trace.principal_reward;
                ct += trace.probing_cost;
                (rw, ct)
            },
        )
        .reduce(
            || (Rat::zero(), Rat::zero()),
            |(r1, c1), (r2, c2)| (r1 + r2, c1 + c2),
        );
    Ok((reward, cost, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matroid::MatroidOracle;
    use crate::model::{rat_int, ElementSpec, OutcomeDistribution, DEFAULT_ENUM_CAP};

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
    fn exact_solution_of_the_reference_instance() {
        let sol = solve_exact(&instance_w(), DEFAULT_ENUM_CAP).unwrap();
        assert_eq!(sol.alpha_star, rat(1, 3));
        assert_eq!(sol.utility, Utility::Exact(rat_int(4)));
        let alphas: Vec<Rat> = sol.candidates.iter().map(|(a, _)| a.clone()).collect();
        assert_eq!(alphas, vec![rat_int(0), rat(1, 5), rat(1, 3), rat_int(1)]);
        assert_eq!(
            sol.candidate_at(&rat_int(0)),
            Some(&Utility::Exact(rat_int(2)))
        );
        assert_eq!(
            sol.candidate_at(&rat_int(1)),
            Some(&Utility::Exact(rat_int(0)))
        );
    }

    #[test]
    fn single_element_optimum() {
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
        let sol = solve_exact(&inst, DEFAULT_ENUM_CAP).unwrap();
        assert_eq!(sol.alpha_star, rat(1, 5));
        assert_eq!(sol.utility, Utility::Exact(rat_int(4)));
    }

    #[test]
    fn all_zero_values_solve_to_zero() {
        let inst = OlcpmInstance::new(
            MatroidOracle::Uniform { n: 1, rank: 1 },
            vec![ElementSpec {
                cost: rat_int(0),
                dist: OutcomeDistribution::new(vec![(rat_int(0), rat_int(1))]),
            }],
        );
        let sol = solve_exact(&inst, DEFAULT_ENUM_CAP).unwrap();
        assert_eq!(sol.alpha_star, rat_int(0));
        assert_eq!(sol.utility, Utility::Exact(rat_int(0)));
    }

    #[test]
    fn balance_check_accepts_and_rejects() {
        let inst = instance_w();
        let cfg = SampleConfig::with_replications(5, 2_000);
        // Peaks are 5 and 2; ω = 5/2 passes.
        assert!(solve_fpras_balanced(&inst, &rat(1, 10), &rat(5, 2), &cfg).is_ok());
        let err = solve_fpras_balanced(&inst, &rat(1, 10), &rat_int(2), &cfg).unwrap_err();
        assert!(matches!(err, Error::BalanceViolated { .. }));
    }

    #[test]
    fn balanced_estimate_lands_near_the_exact_optimum() {
        let inst = instance_w();
        let cfg = SampleConfig::with_replications(11, 100_000);
        let sol = solve_fpras_balanced(&inst, &rat(1, 20), &rat(5, 2), &cfg).unwrap();
        assert_eq!(sol.alpha_star, rat(1, 3));
        assert!((sol.utility.as_f64() - 4.0).abs() <= 0.2);
        assert!(sol.certified_budget.is_some());
    }

    #[test]
    fn bounded_support_shape_is_enforced() {
        let bad = OlcpmInstance::new(
            MatroidOracle::Uniform { n: 1, rank: 1 },
            vec![ElementSpec {
                cost: rat_int(1),
                dist: OutcomeDistribution::new(vec![
                    (rat_int(3), rat(1, 3)),
                    (rat_int(2), rat(1, 3)),
                    (rat_int(0), rat(1, 3)),
                ]),
            }],
        );
        let cfg = SampleConfig::with_replications(1, 100);
        let err = solve_fpras_bounded_support(&bad, &rat(1, 10), &cfg).unwrap_err();
        assert!(matches!(err, Error::SupportShape(_)));
        assert_eq!(distinct_value_count(&instance_w()), 3);
    }

    #[test]
    fn bounded_support_tracks_exact_on_a_two_point_instance() {
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
        let cfg = SampleConfig::with_replications(13, 100_000);
        let sol = solve_fpras_bounded_support(&inst, &rat(1, 10), &cfg).unwrap();
        let exact = solve_exact(&inst, DEFAULT_ENUM_CAP).unwrap();
        assert_eq!(sol.alpha_star, exact.alpha_star);
        assert!((sol.utility.as_f64() - 4.0).abs() / 4.0 <= 0.05);
    }

    #[test]
    fn sweep_rows_match_exact_utilities() {
        let inst = instance_w();
        let alphas = vec![rat_int(0), rat(1, 3), rat(1, 2), rat_int(1)];
        let rows = sweep(&inst, &alphas, &SweepMode::Exact { cap: DEFAULT_ENUM_CAP }).unwrap();
        let expected = [rat_int(2), rat_int(4), rat_int(3), rat_int(0)];
        for (row, want) in rows.iter().zip(&expected) {
            assert_eq!(row.u_principal, Utility::Exact(want.clone()));
        }
        assert!(sweep(&inst, &[], &SweepMode::Exact { cap: DEFAULT_ENUM_CAP })
            .unwrap()
            .is_empty());
    }

    #[test]
    fn sampled_sweep_is_deterministic_and_close() {
        let inst = instance_w();
        let cfg = SampleConfig::with_replications(3, 50_000);
        let mode = SweepMode::Sampled(cfg);
        let a = [rat(1, 2)];
        let r1 = sweep(&inst, &a, &mode).unwrap();
        let r2 = sweep(&inst, &a, &mode).unwrap();
        match (&r1[0].u_principal, &r2[0].u_principal) {
            (Utility::Sampled(x), Utility::Sampled(y)) => {
                assert_eq!(x, y);
                assert!((x - 3.0).abs() < 0.1);
            }
            _ => panic!("expected sampled rows"),
        }
    }
}
