//! Seeded Monte Carlo estimation of acceptance probabilities.
//!
//! Instead of re-running the greedy policy per sample, each (element,
//! outcome) pair is tested against its blocking set: j blocks i either by
//! outranking i's grade with both its grade and surrogate, or by having its
//! grade sit strictly between i's grade and i's pinned surrogate while its
//! surrogate also beats that pinned surrogate. The pair is accepted when
//! the element is not spanned by its blockers.

use num::bigint::BigInt;
use num::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Error;
use crate::frugal::Prio;
use crate::grades::{grades_at, perturbation_epsilon, surrogate};
use crate::matroid::MatroidOracle;
use crate::model::{
    rat_to_f64, realization_iter, ExtRat, OlcpmInstance, Rat,
};

/// Default ceiling on replication counts; the theoretical budgets blow far
/// past it and need an explicit override.
pub const DEFAULT_REPLICATION_CAP: u64 = 100_000_000;

#[derive(Debug, Clone)]
pub struct SampleConfig {
    pub seed: u64,
    /// Explicit replication count; when absent, `mu` sets the budget.
    pub replications: Option<u64>,
    pub mu: Option<Rat>,
    /// Permits budgets above `cap`.
    pub allow_large: bool,
    pub cap: u64,
}

impl SampleConfig {
    pub fn with_replications(seed: u64, t: u64) -> Self {
        SampleConfig {
            seed,
            replications: Some(t),
            mu: None,
            allow_large: false,
            cap: DEFAULT_REPLICATION_CAP,
        }
    }

    /// The replication count this config asks for on the given instance.
    pub fn resolve(&self, inst: &OlcpmInstance) -> Result<u64, Error> {
        self.resolve_for(inst.n(), inst.m)
    }

    pub fn resolve_for(&self, n: usize, m: usize) -> Result<u64, Error> {
        let requested: BigInt = match (&self.replications, &self.mu) {
            (Some(t), _) => BigInt::from(*t),
            (None, Some(mu)) => planned_budget(mu, n, m),
            (None, None) => {
                return Err(Error::InfeasibleParams(
                    "sample config needs a replication count or an accuracy mu".into(),
                ))
            }
        };
        if requested < BigInt::one() {
            return Err(Error::InfeasibleParams(
                "replication count must be positive".into(),
            ));
        }
        if !self.allow_large && requested > BigInt::from(self.cap) {
            return Err(Error::ReplicationCapExceeded {
                requested: requested.to_string(),
                cap: self.cap,
            });
        }
        requested.to_u64().ok_or(Error::ReplicationCapExceeded {
            requested: requested.to_string(),
            cap: u64::MAX,
        })
    }
}

/// ⌈80 m³ n³ / μ⁴⌉ — the published budget; astronomically conservative at
/// desk scale, so it is reported rather than blindly run.
pub fn planned_budget(mu: &Rat, n: usize, m: usize) -> BigInt {
    let scale = Rat::from_integer(BigInt::from(80) * BigInt::from(m).pow(3) * BigInt::from(n).pow(3));
    let mu4 = mu.clone() * mu.clone() * mu.clone() * mu.clone();
    (scale / mu4).ceil().to_integer()
}

#[derive(Debug, Clone)]
pub struct AcceptanceEstimate {
    pub rho: Vec<Vec<f64>>,
    pub replications: u64,
    pub seed: u64,
}

/// The blocking-set acceptance test for element `i` pinned to outcome value
/// `v_pin`, against the other elements' realized surrogates.
///
/// Element `i` is considered for acceptance at the key K_i — its grade when
/// α·v_pin meets it (immediate acceptance on probing), otherwise its pinned
/// surrogate. An element j blocks exactly when its realized surrogate
/// outranks K_i under ≻: every such j is accepted (or already spanned)
/// before i's turn, and the span of all of them equals the span of the ones
/// actually accepted.
pub fn blocking_set_accepts(
    matroid: &MatroidOracle,
    grades: &[ExtRat],
    ys: &[Rat],
    values: &[Rat],
    i: usize,
    alpha: &Rat,
    v_pin: &Rat,
) -> Result<bool, Error> {
    if !grades[i].is_nonnegative() {
        return Ok(false);
    }
    let av = alpha.clone() * v_pin.clone();
    let immediate = matches!(grades[i].finite(), Some(t) if av >= *t);
    let key = if immediate {
        Prio {
            value: grades[i].clone(),
            is_surrogate: false,
            tie_value: Rat::zero(),
            index: i,
        }
    } else {
        Prio {
            value: ExtRat::Finite(grades[i].min_with(&av)),
            is_surrogate: true,
            tie_value: v_pin.clone(),
            index: i,
        }
    };
    let mut blockers = Vec::new();
    for (j, y) in ys.iter().enumerate() {
        if j == i {
            continue;
        }
        let y_j = Prio {
            value: ExtRat::Finite(y.clone()),
            is_surrogate: true,
            tie_value: values[j].clone(),
            index: j,
        };
        if y_j > key {
            blockers.push(j);
        }
    }
    Ok(!matroid.in_span(&blockers, i)?)
}

/// Estimates every ρ_{i,k} from `t` seeded replications. Identical configs
/// give bit-identical estimates regardless of worker count.
pub fn sample_acceptance(
    inst: &OlcpmInstance,
    alpha: &Rat,
    cfg: &SampleConfig,
) -> Result<AcceptanceEstimate, Error> {
    let t = cfg.resolve(inst)?;
    let n = inst.n();
    let m = inst.m;

    let eps = perturbation_epsilon(inst, alpha);
    let perturbed_inst = OlcpmInstance {
        matroid: inst.matroid.clone(),
        elements: inst
            .elements
            .iter()
            .zip(inst.perturbed_costs(&eps))
            .map(|(e, c)| crate::model::ElementSpec {
                cost: c,
                dist: e.dist.clone(),
            })
            .collect(),
        m,
    };
    let grades = grades_at(&perturbed_inst, alpha);

    // Pinned surrogates per (i, k).
    let mut pinned = vec![vec![Rat::zero(); m]; n];
    for i in 0..n {
        for k in 0..m {
            let v = &inst.elements[i].dist.outcomes[k].0;
            pinned[i][k] = surrogate(alpha, v, &grades[i]);
        }
    }

    // Float cumulative distributions for the draw.
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

    let counts: Vec<u64> = (0..t)
        .into_par_iter()
        .fold(
            || vec![0u64; n * m],
            |mut acc, rep| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(rep);
                let outcome: Vec<usize> = (0..n)
                    .map(|i| {
                        let u: f64 = rng.gen();
                        cumul[i]
                            .iter()
                            .position(|&c| u < c)
                            .unwrap_or(m.saturating_sub(1))
                    })
                    .collect();
                let ys: Vec<Rat> = (0..n).map(|i| pinned[i][outcome[i]].clone()).collect();
                let xs: Vec<Rat> = (0..n)
                    .map(|i| inst.elements[i].dist.outcomes[outcome[i]].0.clone())
                    .collect();
                for i in 0..n {
                    for k in 0..m {
                        let v = &inst.elements[i].dist.outcomes[k].0;
                        let ok =
                            blocking_set_accepts(&inst.matroid, &grades, &ys, &xs, i, alpha, v)
                                .unwrap_or(false);
                        if ok {
                            acc[i * m + k] += 1;
                        }
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; n * m],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );

    let rho = (0..n)
        .map(|i| {
            (0..m)
                .map(|k| counts[i * m + k] as f64 / t as f64)
                .collect()
        })
        .collect();
    Ok(AcceptanceEstimate {
        rho,
        replications: t,
        seed: cfg.seed,
    })
}

/// Exact acceptance probabilities through the same blocking-set test,
/// weighting every realization instead of sampling. Serves as the oracle
/// tying the sampler to the direct policy simulation.
pub fn acceptance_by_enumeration(
    inst: &OlcpmInstance,
    alpha: &Rat,
    cap: u64,
) -> Result<Vec<Vec<Rat>>, Error> {
    let n = inst.n();
    let m = inst.m;
    let eps = perturbation_epsilon(inst, alpha);
    let perturbed_inst = OlcpmInstance {
        matroid: inst.matroid.clone(),
        elements: inst
            .elements
            .iter()
            .zip(inst.perturbed_costs(&eps))
            .map(|(e, c)| crate::model::ElementSpec {
                cost: c,
                dist: e.dist.clone(),
            })
            .collect(),
        m,
    };
    let grades = grades_at(&perturbed_inst, alpha);

    let mut pinned = vec![vec![Rat::zero(); m]; n];
    for i in 0..n {
        for k in 0..m {
            let v = &inst.elements[i].dist.outcomes[k].0;
            pinned[i][k] = surrogate(alpha, v, &grades[i]);
        }
    }

    let mut rho = vec![vec![Rat::zero(); m]; n];
    for (real, p) in realization_iter(inst, cap)? {
        if p.is_zero() {
            continue;
        }
        let ys: Vec<Rat> = (0..n).map(|i| pinned[i][real.outcome[i]].clone()).collect();
        let xs: Vec<Rat> = (0..n)
            .map(|i| inst.elements[i].dist.outcomes[real.outcome[i]].0.clone())
            .collect();
        for i in 0..n {
            for k in 0..m {
                let v = &inst.elements[i].dist.outcomes[k].0;
                if blocking_set_accepts(&inst.matroid, &grades, &ys, &xs, i, alpha, v)? {
                    rho[i][k] += p.clone();
                }
            }
        }
    }
    Ok(rho)
}

/// (1−α)·Σ_{i,k} v_{i,k} p_{i,k} ρ_{i,k} in floats.
pub fn utility_from_acceptance(inst: &OlcpmInstance, alpha: &Rat, rho: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (i, e) in inst.elements.iter().enumerate() {
        for (k, (v, p)) in e.dist.outcomes.iter().enumerate() {
            total += rat_to_f64(v) * rat_to_f64(p) * rho[i][k];
        }
    }
    (1.0 - rat_to_f64(alpha)) * total
}
