//! Unreliability solvers and the two reductions tying unreliability to
//! optimal-contract search.

use num::bigint::BigInt;
use num::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;

use crate::error::Error;
use crate::frugal::{exact_utilities, Prio};
use crate::grades::{grades_at, perturbation_epsilon, surrogate};
use crate::model::{
    check_state_count, format_rat, rat, rat_to_f64, ElementSpec, ExtRat, OlcpmInstance,
    OutcomeDistribution, Rat, UpmInstance,
};
use crate::sampler::SampleConfig;
use crate::solver::{ContractSolution, Utility};

/// Exact unreliability by subset enumeration over the non-special elements.
pub fn upm_exact(inst: &UpmInstance, cap: u64) -> Result<Rat, Error> {
    let others: Vec<usize> = inst.others().collect();
    check_state_count(2, others.len(), cap)?;
    let one = Rat::one();
    let mut total = Rat::zero();
    for mask in 0u64..(1u64 << others.len()) {
        let mut weight = Rat::one();
        let mut subset = Vec::new();
        for (slot, &i) in others.iter().enumerate() {
            if mask >> slot & 1 == 1 {
                weight *= inst.probs[i].clone();
                subset.push(i);
            } else {
                weight *= one.clone() - inst.probs[i].clone();
            }
        }
        if weight.is_zero() {
            continue;
        }
        if !inst.matroid.in_span(&subset, inst.special)? {
            total += weight;
        }
    }
    Ok(total)
}

/// Uniform-matroid shortcut: the special element stays unspanned exactly
/// when fewer than `rank` others exist, so the answer is the low-order
/// coefficient mass of Π((1−p) + p·x).
pub fn upm_uniform_poly(inst: &UpmInstance) -> Result<Rat, Error> {
    let rank = match inst.matroid {
        crate::matroid::MatroidOracle::Uniform { rank, .. } => rank,
        _ => return Err(Error::NonUniformMatroid),
    };
    let one = Rat::one();
    let mut coeffs = vec![Rat::one()];
    for i in inst.others() {
        let p = &inst.probs[i];
        let mut next = vec![Rat::zero(); coeffs.len() + 1];
        for (d, c) in coeffs.iter().enumerate() {
            next[d] += c.clone() * (one.clone() - p.clone());
            next[d + 1] += c.clone() * p.clone();
        }
        coeffs = next;
    }
    Ok(coeffs.into_iter().take(rank).sum())
}

/// Seeded Monte Carlo baseline: the fraction of draws leaving the special
/// element unspanned.
pub fn upm_monte_carlo(inst: &UpmInstance, cfg: &SampleConfig) -> Result<f64, Error> {
    let t = cfg.resolve_for(inst.n(), 2)?;
    let others: Vec<usize> = inst.others().collect();
    let probs: Vec<f64> = others.iter().map(|&i| rat_to_f64(&inst.probs[i])).collect();
    let hits: u64 = (0..t)
        .into_par_iter()
        .fold(
            || 0u64,
            |acc, rep| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(rep);
                let subset: Vec<usize> = others
                    .iter()
                    .zip(&probs)
                    .filter_map(|(&i, &p)| {
                        let u: f64 = rng.gen();
                        (u < p).then_some(i)
                    })
                    .collect();
                match inst.matroid.in_span(&subset, inst.special) {
                    Ok(false) => acc + 1,
                    _ => acc,
                }
            },
        )
        .sum();
    Ok(hits as f64 / t as f64)
}

/// Acceptance probability of (i, k) recast as an unreliability question:
/// each other element exists exactly when its realized surrogate outranks
/// the key at which i is considered, and i is accepted when it stays
/// unspanned by the existing set.
pub struct AcceptanceReduction {
    /// Absent when τ_i < 0 and the probability is 0 outright.
    pub upm: Option<UpmInstance>,
    pub r: Rat,
}

pub fn olcpm_to_upm(
    inst: &OlcpmInstance,
    alpha: &Rat,
    i: usize,
    k: usize,
    cap: u64,
) -> Result<AcceptanceReduction, Error> {
    let n = inst.n();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, n });
    }
    if k >= inst.m {
        return Err(Error::IndexOutOfRange { index: k, n: inst.m });
    }
    let eps = perturbation_epsilon(inst, alpha);
    let perturbed = OlcpmInstance {
        matroid: inst.matroid.clone(),
        elements: inst
            .elements
            .iter()
            .zip(inst.perturbed_costs(&eps))
            .map(|(e, c)| ElementSpec {
                cost: c,
                dist: e.dist.clone(),
            })
            .collect(),
        m: inst.m,
    };
    let grades = grades_at(&perturbed, alpha);
    if !grades[i].is_nonnegative() {
        return Ok(AcceptanceReduction {
            upm: None,
            r: Rat::zero(),
        });
    }

    let v_pin = &inst.elements[i].dist.outcomes[k].0;
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

    // q_j = Pr over X_j that j's surrogate outranks the key.
    let mut probs = vec![Rat::zero(); n];
    for j in 0..n {
        if j == i {
            continue;
        }
        let mut q = Rat::zero();
        for (v, p) in &inst.elements[j].dist.outcomes {
            if p.is_zero() {
                continue;
            }
            let y = Prio {
                value: ExtRat::Finite(surrogate(alpha, v, &grades[j])),
                is_surrogate: true,
                tie_value: v.clone(),
                index: j,
            };
            if y > key {
                q += p.clone();
            }
        }
        probs[j] = q;
    }
    let upm = UpmInstance {
        matroid: inst.matroid.clone(),
        special: i,
        probs,
    };
    let r = upm_exact(&upm, cap)?;
    Ok(AcceptanceReduction { upm: Some(upm), r })
}

/// Rewrites the instance so every existence probability is at most δ:
/// certain elements are first lowered to 1 − ε/n, then any probability
/// above δ is split into a parallel chain of (δ, (p−δ)/(1−δ), …) copies.
/// The answer moves by at most ε upward.
pub fn upm_cleanup(inst: &UpmInstance, delta: &Rat, eps: &Rat) -> Result<UpmInstance, Error> {
    let n = inst.n();
    let one = Rat::one();
    let lowered: Vec<Rat> = (0..n)
        .map(|i| {
            if i != inst.special && inst.probs[i] == one {
                one.clone() - eps.clone() / Rat::from_integer(BigInt::from(n as i64))
            } else {
                inst.probs[i].clone()
            }
        })
        .collect();

    let mut chains: Vec<Vec<Rat>> = Vec::with_capacity(n);
    for (i, p) in lowered.iter().enumerate() {
        if i == inst.special || *p <= *delta {
            chains.push(vec![p.clone()]);
            continue;
        }
        let mut chain = Vec::new();
        let mut rest = p.clone();
        while rest > *delta {
            chain.push(delta.clone());
            rest = (rest - delta.clone()) / (one.clone() - delta.clone());
        }
        chain.push(rest);
        chains.push(chain);
    }

    let multiplicities: BTreeMap<usize, usize> =
        chains.iter().enumerate().map(|(i, c)| (i, c.len())).collect();
    let matroid = inst.matroid.parallel_extend(&multiplicities)?;

    // Copies are laid out in ascending base order.
    let mut probs = Vec::new();
    let mut special = 0;
    for (i, chain) in chains.iter().enumerate() {
        if i == inst.special {
            special = probs.len();
        }
        probs.extend(chain.iter().cloned());
    }
    Ok(UpmInstance {
        matroid,
        special,
        probs,
    })
}

/// Parameters of the unreliability-to-contract construction.
#[derive(Debug, Clone)]
pub struct ReductionParams {
    pub beta: Rat,
    pub eps: Rat,
    pub delta: Rat,
    pub xi: Rat,
}

fn pow_inv_eps(eps: &Rat, k: usize) -> Rat {
    // (1/ε)^k
    let inv = Rat::one() / eps.clone();
    num::pow::pow(inv, k)
}

/// (1/ε^n − 1)/(ε²(1/ε − 1)) — the δ headroom factor.
fn delta_factor(eps: &Rat, n: usize) -> Rat {
    let num = pow_inv_eps(eps, n) - Rat::one();
    let den = eps.clone() * eps.clone() * (Rat::one() / eps.clone() - Rat::one());
    num / den
}

/// 1 + (1/ε^n − 1)/(ε(1/ε − 1)) — the ξ headroom factor.
fn xi_factor(eps: &Rat, n: usize) -> Rat {
    let num = pow_inv_eps(eps, n) - Rat::one();
    let den = eps.clone() * (Rat::one() / eps.clone() - Rat::one());
    Rat::one() + num / den
}

impl ReductionParams {
    /// Violations of the construction's hypotheses for ground-set size n.
    pub fn violations(&self, n: usize) -> Vec<String> {
        let mut out = Vec::new();
        if self.beta.is_negative() || self.beta > Rat::one() {
            out.push(format!("beta {} outside [0,1]", format_rat(&self.beta)));
        }
        if !self.eps.is_positive() || self.eps >= rat(1, 2) {
            out.push(format!("eps {} outside (0,1/2)", format_rat(&self.eps)));
        } else {
            if !self.delta.is_positive() || self.delta >= Rat::one() {
                out.push(format!("delta {} outside (0,1)", format_rat(&self.delta)));
            } else {
                let lhs = self.delta.clone() * delta_factor(&self.eps, n);
                if lhs >= self.beta {
                    out.push(format!(
                        "delta*(1/eps^n-1)/(eps^2(1/eps-1)) = {} not below beta {}",
                        format_rat(&lhs),
                        format_rat(&self.beta)
                    ));
                }
            }
            if !self.xi.is_positive() {
                out.push(format!("xi {} not positive", format_rat(&self.xi)));
            } else {
                if n >= 2 && self.xi >= num::pow::pow(self.eps.clone(), n - 2) {
                    out.push(format!(
                        "xi {} not below eps^(n-2)",
                        format_rat(&self.xi)
                    ));
                }
                let lhs = self.xi.clone() * xi_factor(&self.eps, n);
                if lhs > self.eps {
                    out.push(format!(
                        "xi*(1+(1/eps^n-1)/(eps(1/eps-1))) = {} exceeds eps {}",
                        format_rat(&lhs),
                        format_rat(&self.eps)
                    ));
                }
            }
        }
        out
    }
}

/// Largest powers of 1/2 for δ and ξ meeting the construction's hypotheses.
pub fn choose_reduction_params(n: usize, beta: &Rat, eps: &Rat) -> ReductionParams {
    let half = rat(1, 2);
    let mut delta = half.clone();
    let dfac = delta_factor(eps, n);
    while delta.clone() * dfac.clone() >= *beta {
        delta *= half.clone();
    }
    let mut xi = half.clone();
    let xfac = xi_factor(eps, n);
    let eps_pow = if n >= 2 {
        num::pow::pow(eps.clone(), n - 2)
    } else {
        Rat::one()
    };
    while xi >= eps_pow || xi.clone() * xfac.clone() > *eps {
        xi *= half.clone();
    }
    ReductionParams {
        beta: beta.clone(),
        eps: eps.clone(),
        delta,
        xi,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum BuildMode {
    /// Full hypotheses: every p_i ∈ (0, δ].
    Strict,
    /// Only the structure: p_i ∈ (0, 1]; used by the search drivers, whose
    /// classification reads just U_P(0) and U_P(1−ξ).
    Relaxed,
}

/// The contract instance of the reduction. Non-special elements take roles
/// 1..n−1 in ascending ground order; role 1 is free (c=0) with value β/p_1,
/// role i pays (1/ε^{i−1}−1)p_i for value 1/ε^{i−1}; the special element
/// becomes a certain value 1/ξ at cost (1−ξ)/ξ.
fn build_reduction(
    inst: &UpmInstance,
    params: &ReductionParams,
    mode: BuildMode,
) -> Result<OlcpmInstance, Error> {
    let n = inst.n();
    if n < 2 {
        return Err(Error::InfeasibleParams(
            "reduction requires at least 2 elements".into(),
        ));
    }
    let problems = params.violations(n);
    if !problems.is_empty() {
        return Err(Error::InfeasibleParams(problems.join("; ")));
    }
    let mut role = 0usize;
    let mut elements = Vec::with_capacity(n);
    for idx in 0..n {
        if idx == inst.special {
            // Placeholder; filled below once all roles are known.
            elements.push(None);
            continue;
        }
        let p = inst.probs[idx].clone();
        match mode {
            BuildMode::Strict => {
                if !p.is_positive() || p > params.delta {
                    return Err(Error::InfeasibleParams(format!(
                        "element {idx}: probability {} outside (0, delta={}]",
                        format_rat(&p),
                        format_rat(&params.delta)
                    )));
                }
            }
            BuildMode::Relaxed => {
                if p.is_zero() {
                    // Inert: never realizes value, never probed.
                    elements.push(Some(ElementSpec {
                        cost: Rat::one(),
                        dist: OutcomeDistribution::new(vec![(Rat::zero(), Rat::one())]),
                    }));
                    continue;
                }
            }
        }
        role += 1;
        let (cost, value) = if role == 1 {
            (Rat::zero(), params.beta.clone() / p.clone())
        } else {
            let v = pow_inv_eps(&params.eps, role - 1);
            ((v.clone() - Rat::one()) * p.clone(), v)
        };
        elements.push(Some(ElementSpec {
            cost,
            dist: OutcomeDistribution::two_point(value, p),
        }));
    }
    let special_spec = ElementSpec {
        cost: (Rat::one() - params.xi.clone()) / params.xi.clone(),
        dist: OutcomeDistribution::two_point(Rat::one() / params.xi.clone(), Rat::one()),
    };
    let elements: Vec<ElementSpec> = elements
        .into_iter()
        .map(|e| e.unwrap_or_else(|| special_spec.clone()))
        .collect();
    Ok(OlcpmInstance::new(inst.matroid.clone(), elements))
}

/// The construction under its full hypotheses.
pub fn upm_to_olcpm(inst: &UpmInstance, params: &ReductionParams) -> Result<OlcpmInstance, Error> {
    build_reduction(inst, params, BuildMode::Strict)
}

/// Variant whose middle elements share the two-value support
/// {1/ε, 1/ε^{n−2}}: role i keeps its grade curve by splitting p_i into
/// (q_1, q_2) with q_1 + q_2 = p_i and q_1/ε + q_2/ε^{n−2} = p_i/ε^{i−1}.
pub fn upm_to_olcpm_bounded_support(
    inst: &UpmInstance,
    params: &ReductionParams,
) -> Result<OlcpmInstance, Error> {
    let n = inst.n();
    if n < 4 {
        return Err(Error::InfeasibleParams(
            "bounded-support reduction needs n >= 4 so the two support values differ".into(),
        ));
    }
    let base = build_reduction(inst, params, BuildMode::Strict)?;
    let lo = pow_inv_eps(&params.eps, 1);
    let hi = pow_inv_eps(&params.eps, n - 2);
    let mut role = 0usize;
    let mut elements = base.elements.clone();
    for idx in 0..n {
        if idx == inst.special {
            continue;
        }
        role += 1;
        if role == 1 || role == n - 1 {
            // Role 1 keeps β/p_1; role n−1 already sits on the high value.
            continue;
        }
        let p = inst.probs[idx].clone();
        let target = p.clone() * pow_inv_eps(&params.eps, role - 1);
        // Solve q1·lo + q2·hi = target, q1 + q2 = p.
        let q2 = (target - p.clone() * lo.clone()) / (hi.clone() - lo.clone());
        let q1 = p.clone() - q2.clone();
        if q1.is_negative() || q2.is_negative() {
            return Err(Error::NegativeSplit { index: idx });
        }
        let rest = Rat::one() - p;
        elements[idx] = ElementSpec {
            cost: elements[idx].cost.clone(),
            dist: OutcomeDistribution::new(vec![
                (hi.clone(), q2),
                (lo.clone(), q1),
                (Rat::zero(), rest),
            ]),
        };
    }
    Ok(OlcpmInstance::new(base.matroid, elements))
}

/// Reads U_P(0) and U_P(1−ξ) off an oracle solution, falling back to exact
/// evaluation when a candidate is missing.
fn utilities_at_endpoints(
    sol: &ContractSolution,
    olcpm: &OlcpmInstance,
    xi: &Rat,
    cap: u64,
) -> Result<(Rat, Rat), Error> {
    let probe = |alpha: Rat| -> Result<Rat, Error> {
        match sol.candidate_at(&alpha) {
            Some(Utility::Exact(u)) => Ok(u.clone()),
            _ => Ok(exact_utilities(olcpm, &alpha, cap)?.u_principal),
        }
    };
    let u0 = probe(Rat::zero())?;
    let u1 = probe(Rat::one() - xi.clone())?;
    Ok((u0, u1))
}

fn effective_probs(inst: &UpmInstance) -> Result<Vec<Rat>, Error> {
    // Loops never affect spanning, so their existence is irrelevant.
    let mut probs = inst.probs.clone();
    for i in inst.others() {
        if inst.matroid.in_span(&[], i)? {
            probs[i] = Rat::zero();
        }
    }
    Ok(probs)
}

/// Exact unreliability through a contract oracle: binary search the grid
/// {z/Λ} for the largest β whose constructed instance is optimized at 1−ξ
/// rather than at 0.
pub fn upm_via_olcpm<F>(inst: &UpmInstance, oracle: F, cap: u64) -> Result<Rat, Error>
where
    F: Fn(&OlcpmInstance) -> Result<ContractSolution, Error>,
{
    let ones: Vec<usize> = inst
        .others()
        .filter(|&i| inst.probs[i] == Rat::one())
        .collect();
    if inst.matroid.in_span(&ones, inst.special)? {
        return Ok(Rat::zero());
    }
    let probs = effective_probs(inst)?;
    let work = UpmInstance {
        matroid: inst.matroid.clone(),
        special: inst.special,
        probs,
    };
    if !work
        .others()
        .any(|i| work.probs[i].is_positive() && work.probs[i] < Rat::one())
    {
        // Existence is deterministic and the certain elements fail to span.
        return Ok(Rat::one());
    }

    let lambda: BigInt = work
        .others()
        .map(|i| work.probs[i].denom().clone())
        .product();
    let eps = Rat::new(BigInt::one(), BigInt::from(4) * lambda.clone());

    let keeps_high_type = |z: &BigInt| -> Result<bool, Error> {
        let beta = Rat::new(z.clone(), lambda.clone());
        let params = choose_reduction_params(work.n(), &beta, &eps);
        let olcpm = build_reduction(&work, &params, BuildMode::Relaxed)?;
        let sol = oracle(&olcpm)?;
        let (u0, u1) = utilities_at_endpoints(&sol, &olcpm, &params.xi, cap)?;
        Ok(u0 <= u1)
    };

    let mut lo = BigInt::one();
    let mut hi = lambda.clone();
    if !keeps_high_type(&lo)? {
        return Ok(Rat::zero());
    }
    while lo < hi {
        let mid: BigInt = (lo.clone() + hi.clone() + BigInt::one()) / BigInt::from(2);
        if keeps_high_type(&mid)? {
            lo = mid;
        } else {
            hi = mid - BigInt::one();
        }
    }
    Ok(Rat::new(lo, lambda))
}

/// Approximate variant over the geometric grid (1+ψ)^z/Λ; the returned
/// value is within a factor (1+ψ)² of the exact answer.
pub fn upm_via_olcpm_approx<F>(
    inst: &UpmInstance,
    psi: &Rat,
    oracle: F,
    cap: u64,
) -> Result<Rat, Error>
where
    F: Fn(&OlcpmInstance) -> Result<ContractSolution, Error>,
{
    if !psi.is_positive() {
        return Err(Error::InfeasibleParams("psi must be positive".into()));
    }
    let ones: Vec<usize> = inst
        .others()
        .filter(|&i| inst.probs[i] == Rat::one())
        .collect();
    if inst.matroid.in_span(&ones, inst.special)? {
        return Ok(Rat::zero());
    }
    let probs = effective_probs(inst)?;
    let work = UpmInstance {
        matroid: inst.matroid.clone(),
        special: inst.special,
        probs,
    };
    if !work
        .others()
        .any(|i| work.probs[i].is_positive() && work.probs[i] < Rat::one())
    {
        return Ok(Rat::one());
    }

    let lambda: BigInt = work
        .others()
        .map(|i| work.probs[i].denom().clone())
        .product();
    let lambda_rat = Rat::from_integer(lambda.clone());
    let eps = (psi.clone() / lambda_rat.clone()).min(rat(1, 4));

    // Grid values (1+ψ)^z/Λ clamped to 1, for z up to the first power ≥ Λ.
    let growth = Rat::one() + psi.clone();
    let mut grid = Vec::new();
    let mut cur = Rat::one() / lambda_rat.clone();
    loop {
        grid.push(cur.clone().min(Rat::one()));
        if cur >= Rat::one() {
            break;
        }
        cur *= growth.clone();
    }

    let keeps_high_type = |beta: &Rat| -> Result<bool, Error> {
        let params = choose_reduction_params(work.n(), beta, &eps);
        let olcpm = build_reduction(&work, &params, BuildMode::Relaxed)?;
        let sol = oracle(&olcpm)?;
        let (u0, u1) = utilities_at_endpoints(&sol, &olcpm, &params.xi, cap)?;
        Ok(u0 <= u1)
    };

    if !keeps_high_type(&grid[0])? {
        return Ok(Rat::zero());
    }
    let mut lo = 0usize;
    let mut hi = grid.len() - 1;
    while lo < hi {
        let mid = (lo + hi + 1) / 2;
        if keeps_high_type(&grid[mid])? {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    Ok(grid[lo].clone())
}
