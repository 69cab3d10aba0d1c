//! Grades and grade curves.
//!
//! The grade τ_i(α) of element i is the unique solution of
//! E[(α X_i − τ)⁺] = c_i, i.e. the per-probe payment threshold at which the
//! element's expected surplus exactly covers its cost. For c_i = 0 it is +∞.
//! As a function of α it is piecewise linear with at most m+1 segments, and
//! we build that curve exactly.

use num::{One, Signed, Zero};

use crate::model::{format_rat, ExtRat, OlcpmInstance, OutcomeDistribution, Rat};

/// Solves E[(α X − τ)⁺] = c for τ at a fixed α.
pub fn grade_at(dist: &OutcomeDistribution, cost: &Rat, alpha: &Rat) -> ExtRat {
    if cost.is_zero() {
        return ExtRat::PosInf;
    }
    // Scaled outcomes αv sorted descending; walk the prefix of outcomes that
    // lie above the candidate threshold.
    let mut scaled: Vec<(Rat, Rat)> = dist
        .outcomes
        .iter()
        .filter(|(_, p)| !p.is_zero())
        .map(|(v, p)| (alpha.clone() * v.clone(), p.clone()))
        .collect();
    scaled.sort_by(|a, b| b.0.cmp(&a.0));

    let mut mass = Rat::zero(); // Pr[αX ≥ current prefix floor]
    let mut weighted = Rat::zero(); // E[αX · 1{prefix}]
    let mut idx = 0;
    while idx < scaled.len() {
        // Absorb ties so the prefix floor strictly drops.
        let floor = scaled[idx].0.clone();
        while idx < scaled.len() && scaled[idx].0 == floor {
            mass += scaled[idx].1.clone();
            weighted += scaled[idx].0.clone() * scaled[idx].1.clone();
            idx += 1;
        }
        // With threshold τ ∈ [next_floor, floor], LHS = weighted − mass·τ.
        let tau = (weighted.clone() - cost.clone()) / mass.clone();
        let lower_ok = match scaled.get(idx) {
            Some((next_floor, _)) => tau >= *next_floor,
            None => true,
        };
        if tau <= floor && lower_ok {
            return ExtRat::Finite(tau);
        }
    }
    // All probabilities zero (degenerate); no finite solution.
    ExtRat::PosInf
}

/// min(αx, τ): the payment actually made when the element realizes x.
pub fn surrogate(alpha: &Rat, x: &Rat, tau: &ExtRat) -> Rat {
    let ax = alpha.clone() * x.clone();
    tau.min_with(&ax)
}

/// One affine piece τ(α) = slope·α + intercept on [lo, hi].
#[derive(Debug, Clone, PartialEq)]
pub struct GradeSegment {
    pub lo: Rat,
    pub hi: Rat,
    pub slope: Rat,
    pub intercept: Rat,
}

impl GradeSegment {
    pub fn eval(&self, alpha: &Rat) -> Rat {
        self.slope.clone() * alpha.clone() + self.intercept.clone()
    }
}

/// Piecewise-linear grade curve over α ∈ [0, 1]. `None` segments means the
/// grade is identically +∞ (zero cost).
#[derive(Debug, Clone, PartialEq)]
pub struct GradeCurve {
    pub segments: Vec<GradeSegment>,
}

impl GradeCurve {
    pub fn infinite(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn eval(&self, alpha: &Rat) -> ExtRat {
        if self.segments.is_empty() {
            return ExtRat::PosInf;
        }
        for seg in &self.segments {
            if *alpha >= seg.lo && *alpha <= seg.hi {
                return ExtRat::Finite(seg.eval(alpha));
            }
        }
        // α beyond the last breakpoint: extend the final segment.
        ExtRat::Finite(self.segments.last().unwrap().eval(alpha))
    }
}

/// Builds the exact grade curve on [0, 1].
///
/// Grouping the distinct values w_1 > … > w_d with probabilities q_t, the
/// piece where exactly the top s groups exceed τ is
/// τ = (α Σ_{t≤s} q_t w_t − c) / Q_s with Q_s = Σ_{t≤s} q_t, and the
/// breakpoint below which the active set grows from s−1 to s groups is
/// α*_s = c / Σ_{t<s} q_t (w_t − w_s). Breakpoints decrease in s, so the
/// curve starts at α = 0 on the all-groups piece.
pub fn grade_curve(dist: &OutcomeDistribution, cost: &Rat) -> GradeCurve {
    if cost.is_zero() {
        return GradeCurve { segments: vec![] };
    }
    // Distinct values, descending, with merged probabilities.
    let mut pairs: Vec<(Rat, Rat)> = dist
        .outcomes
        .iter()
        .filter(|(_, p)| !p.is_zero())
        .map(|(v, p)| (v.clone(), p.clone()))
        .collect();
    pairs.sort_by(|a, b| b.0.cmp(&a.0));
    let mut groups: Vec<(Rat, Rat)> = Vec::new();
    for (v, p) in pairs {
        match groups.last_mut() {
            Some((gv, gp)) if *gv == v => *gp += p,
            _ => groups.push((v, p)),
        }
    }
    if groups.is_empty() {
        return GradeCurve { segments: vec![] };
    }
    let d = groups.len();

    // Prefix sums over groups.
    let mut q_pref = Vec::with_capacity(d + 1);
    let mut qw_pref = Vec::with_capacity(d + 1);
    q_pref.push(Rat::zero());
    qw_pref.push(Rat::zero());
    for (w, q) in &groups {
        q_pref.push(q_pref.last().unwrap().clone() + q.clone());
        qw_pref.push(qw_pref.last().unwrap().clone() + q.clone() * w.clone());
    }

    // Breakpoints α*_s for s = 2..=d (entering piece s when α drops below).
    let breakpoint = |s: usize| -> Rat {
        let w_s = &groups[s - 1].0;
        let denom = qw_pref[s - 1].clone() - q_pref[s - 1].clone() * w_s.clone();
        cost.clone() / denom
    };

    let mut segments = Vec::new();
    let mut hi = Rat::one();
    // Walk s = 1..d; piece s is active on [α*_{s+1}, α*_s], clamped to [0,1].
    // Breakpoints decrease in s, so pieces whose lower end is still ≥ hi lie
    // entirely above α = 1 and are skipped.
    for s in 1..=d {
        let lo = if s == d { Rat::zero() } else { breakpoint(s + 1) };
        if lo >= hi {
            continue;
        }
        segments.push(GradeSegment {
            lo: lo.clone(),
            hi: hi.clone(),
            slope: qw_pref[s].clone() / q_pref[s].clone(),
            intercept: -cost.clone() / q_pref[s].clone(),
        });
        hi = lo;
        if hi.is_zero() {
            break;
        }
    }
    segments.reverse();
    GradeCurve { segments }
}

/// All grade curves of an instance, in element order.
pub fn grade_curves(inst: &OlcpmInstance) -> Vec<GradeCurve> {
    inst.elements
        .iter()
        .map(|e| grade_curve(&e.dist, &e.cost))
        .collect()
}

/// Grades of every element at α.
pub fn grades_at(inst: &OlcpmInstance, alpha: &Rat) -> Vec<ExtRat> {
    inst.elements
        .iter()
        .map(|e| grade_at(&e.dist, &e.cost, alpha))
        .collect()
}

/// The cost-perturbation scale ε(α) under which best responses are strict:
/// min of the smallest nonzero outcome probability and G / (2 C_max), where
/// G is the smallest positive gap between any scaled outcome value or finite
/// grade and any finite grade, and C_max = max over costly elements of
/// c_i / (its smallest nonzero outcome probability).
pub fn perturbation_epsilon(inst: &OlcpmInstance, alpha: &Rat) -> Rat {
    let grades = grades_at(inst, alpha);

    let mut p_min: Option<Rat> = None;
    let mut c_max: Option<Rat> = None;
    for e in &inst.elements {
        let mut elem_pmin: Option<Rat> = None;
        for (_, p) in &e.dist.outcomes {
            if !p.is_zero() {
                elem_pmin = Some(match elem_pmin {
                    Some(m) => m.min(p.clone()),
                    None => p.clone(),
                });
            }
        }
        if let Some(pm) = &elem_pmin {
            p_min = Some(match p_min {
                Some(m) => m.min(pm.clone()),
                None => pm.clone(),
            });
            if !e.cost.is_zero() {
                let ratio = e.cost.clone() / pm.clone();
                c_max = Some(match c_max {
                    Some(m) => m.max(ratio),
                    None => ratio,
                });
            }
        }
    }
    let p_min = p_min.unwrap_or_else(Rat::one);

    // Positive gaps that perturbation must not close: αv_{j,k} − τ_i over
    // positive-probability outcomes and τ_j − τ_i over finite grade pairs.
    let mut gap: Option<Rat> = None;
    let mut note_gap = |diff: Rat| {
        if diff.is_positive() {
            gap = Some(match gap.take() {
                Some(g) => g.min(diff),
                None => diff,
            });
        }
    };
    for tau in &grades {
        let t = match tau.finite() {
            Some(t) => t,
            None => continue,
        };
        // Perturbing costs raises grades; a strictly negative grade must
        // stay below zero, so its distance to zero is a protected gap.
        note_gap(-t.clone());
        for (j, e) in inst.elements.iter().enumerate() {
            for (v, p) in &e.dist.outcomes {
                if !p.is_zero() {
                    note_gap(alpha.clone() * v.clone() - t.clone());
                }
            }
            if let Some(u) = grades[j].finite() {
                note_gap(u.clone() - t.clone());
            }
        }
    }

    match (gap, c_max) {
        (Some(g), Some(c)) => {
            let half_gap = g / (c * Rat::from_integer(2.into()));
            p_min.min(half_gap)
        }
        _ => p_min,
    }
}

/// Exact critical values of α in [0, 1]: the endpoints plus every pairwise
/// intersection of the grade-curve pieces and the scaled value lines α·v.
pub fn critical_values(inst: &OlcpmInstance) -> Vec<Rat> {
    let curves = grade_curves(inst);
    let one = Rat::one();

    // Collect all affine pieces (slope, intercept, lo, hi) in play.
    let mut pieces: Vec<(Rat, Rat, Rat, Rat)> = Vec::new();
    for c in &curves {
        for s in &c.segments {
            pieces.push((s.slope.clone(), s.intercept.clone(), s.lo.clone(), s.hi.clone()));
        }
    }
    for e in &inst.elements {
        for (v, p) in &e.dist.outcomes {
            if !p.is_zero() {
                // Value line v·α, valid on all of [0,1].
                pieces.push((v.clone(), Rat::zero(), Rat::zero(), one.clone()));
            }
        }
    }
    // The zero line: grades crossing 0 flip the sign gate on acceptance
    // even when no zero-value outcome supplies the line.
    pieces.push((Rat::zero(), Rat::zero(), Rat::zero(), one.clone()));

    let mut out: Vec<Rat> = vec![Rat::zero(), one.clone()];
    for i in 0..pieces.len() {
        for j in (i + 1)..pieces.len() {
            let (sa, ia, loa, hia) = &pieces[i];
            let (sb, ib, lob, hib) = &pieces[j];
            if sa == sb {
                continue;
            }
            let alpha = (ib.clone() - ia.clone()) / (sa.clone() - sb.clone());
            if alpha.is_negative() || alpha > one {
                continue;
            }
            if alpha >= *loa && alpha <= *hia && alpha >= *lob && alpha <= *hib {
                out.push(alpha);
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Human-readable curve dump, one `[lo,hi] slope·α+intercept` per line.
pub fn describe_curve(curve: &GradeCurve) -> String {
    if curve.infinite() {
        return "inf".to_string();
    }
    curve
        .segments
        .iter()
        .map(|s| {
            format!(
                "[{},{}] {}*a+{}",
                format_rat(&s.lo),
                format_rat(&s.hi),
                format_rat(&s.slope),
                format_rat(&s.intercept)
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matroid::MatroidOracle;
    use crate::model::{rat, rat_int, ElementSpec};
    use num::Zero;

    fn coin_10() -> OutcomeDistribution {
        OutcomeDistribution::new(vec![(rat_int(10), rat(1, 2)), (rat_int(0), rat(1, 2))])
    }

    fn fin(e: &ExtRat) -> Rat {
        e.finite().unwrap().clone()
    }

    #[test]
    fn grade_solves_the_threshold_equation() {
        let c = rat_int(1);
        assert_eq!(fin(&grade_at(&coin_10(), &c, &rat_int(1))), rat_int(8));
        assert_eq!(fin(&grade_at(&coin_10(), &c, &rat(1, 10))), rat(-1, 2));
        assert_eq!(fin(&grade_at(&coin_10(), &c, &rat(1, 2))), rat_int(3));
        assert!(grade_at(&coin_10(), &Rat::zero(), &rat(1, 2)).is_infinite());
    }

    #[test]
    fn grade_can_sit_below_every_scaled_value() {
        // Deterministic value 1 with cost 100: τ = α − 100.
        let d = OutcomeDistribution::new(vec![(rat_int(1), rat_int(1))]);
        assert_eq!(fin(&grade_at(&d, &rat_int(100), &rat(1, 2))), rat(-199, 2));
    }

    #[test]
    fn curve_matches_pointwise_solves() {
        let c = rat_int(1);
        let curve = grade_curve(&coin_10(), &c);
        assert_eq!(curve.segments.len(), 2);
        // 5α − 1 on [0, 1/5], then 10α − 2 on [1/5, 1].
        assert_eq!(curve.segments[0].slope, rat_int(5));
        assert_eq!(curve.segments[0].intercept, rat_int(-1));
        assert_eq!(curve.segments[0].hi, rat(1, 5));
        assert_eq!(curve.segments[1].slope, rat_int(10));
        assert_eq!(curve.segments[1].intercept, rat_int(-2));
        for alpha in [rat_int(0), rat(1, 10), rat(1, 5), rat(1, 3), rat(1, 2), rat_int(1)] {
            assert_eq!(curve.eval(&alpha), grade_at(&coin_10(), &c, &alpha));
        }
    }

    #[test]
    fn three_outcome_curve_agrees_with_pointwise_solves_everywhere() {
        let d = OutcomeDistribution::new(vec![
            (rat_int(12), rat(1, 4)),
            (rat_int(5), rat(1, 4)),
            (rat_int(2), rat(1, 2)),
        ]);
        let c = rat(3, 2);
        let curve = grade_curve(&d, &c);
        assert!(curve.segments.len() <= 3);
        for num in 0..=40 {
            let alpha = rat(num, 40);
            assert_eq!(curve.eval(&alpha), grade_at(&d, &c, &alpha), "alpha={num}/40");
        }
        // Segments tile [0,1] without gaps.
        assert!(curve.segments[0].lo.is_zero());
        assert_eq!(*curve.segments.last().unwrap().hi.numer(), 1.into());
        for w in curve.segments.windows(2) {
            assert_eq!(w[0].hi, w[1].lo);
        }
    }

    #[test]
    fn surrogate_caps_the_scaled_value() {
        let tau = ExtRat::Finite(rat_int(3));
        assert_eq!(surrogate(&rat(1, 2), &rat_int(10), &tau), rat_int(3));
        assert_eq!(surrogate(&rat(1, 2), &rat_int(4), &tau), rat_int(2));
        assert_eq!(
            surrogate(&rat(1, 2), &rat_int(10), &ExtRat::PosInf),
            rat_int(5)
        );
    }

    fn instance_w() -> OlcpmInstance {
        OlcpmInstance::new(
            MatroidOracle::Uniform { n: 2, rank: 1 },
            vec![
                ElementSpec {
                    cost: rat_int(1),
                    dist: coin_10(),
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
    fn critical_values_of_the_reference_instance() {
        let crit = critical_values(&instance_w());
        assert_eq!(crit, vec![rat_int(0), rat(1, 5), rat(1, 3), rat_int(1)]);
    }

    #[test]
    fn perturbation_scale_at_one_half() {
        let eps = perturbation_epsilon(&instance_w(), &rat(1, 2));
        assert_eq!(eps, rat(1, 2));
    }

    #[test]
    fn perturbation_scale_shrinks_near_collisions() {
        // At α = 1/5 the grade of element 0 hits its own scaled zero value;
        // the collision is exact so the gap set excludes it, and the scale
        // stays governed by the remaining gaps.
        let eps = perturbation_epsilon(&instance_w(), &rat(1, 5));
        assert!(eps.is_positive());
        assert!(eps <= rat(1, 2));
    }
}
