//! Estimators for the long-run behavior of walks on horospheric products:
//! height drift, rate of escape, entropy growth, regularity of trajectories,
//! and boundary convergence statistics.
//!
//! All Monte Carlo ops fan a master seed out deterministically (walk `w` uses
//! a mixed sub-seed), so estimates are reproducible and two ops called with
//! the same seed see the same trajectory ensemble. Confidence radii are the
//! normal-approximation 95% half-widths, reported as 0 for fewer than two
//! samples.

use serde::Serialize;

use crate::mix;
use crate::product::{BoundarySide, HoroProduct, ProductVertex};
use crate::walk::{self, Kernel, WalkError};

/// Report-only score threshold used by [`regularity_check`] verdicts.
pub const DEFAULT_REGULARITY_THRESHOLD: f64 = 0.05;

/// Exact expected height increment of one kernel step at `v`.
pub fn expected_height_increment(
    g: &HoroProduct,
    kernel: &Kernel,
    v: &ProductVertex,
) -> Result<f64, WalkError> {
    let (probs, ups) = walk::step_probs(g, kernel, v)?;
    let up: f64 = probs[..ups].iter().sum();
    let down: f64 = probs[ups..].iter().sum();
    Ok(up - down)
}

fn mean_ci(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0);
    (mean, 1.96 * (var / m).sqrt())
}

/// Height drift of a kernel, estimated two ways.
#[derive(Clone, Debug, Serialize)]
pub struct DriftEstimate {
    /// Mean of `(height(X_n) - height(X_0)) / n` over the sampled walks.
    pub trajectory: f64,
    pub ci: f64,
    /// Mean of the exact expected height increment over every visited
    /// vertex. State-independent kernels make this exact, not an estimate.
    pub one_step: f64,
    pub num_walks: usize,
    pub n: usize,
    pub seed: u64,
}

pub fn drift_estimate(
    g: &HoroProduct,
    kernel: &Kernel,
    start: &ProductVertex,
    n: usize,
    num_walks: usize,
    seed: u64,
) -> Result<DriftEstimate, WalkError> {
    assert!(n >= 1 && num_walks >= 1);
    let mut finals = Vec::with_capacity(num_walks);
    // compensated summation: millions of visits would otherwise smear the
    // "exact on state-independent kernels" promise of `one_step`
    let mut inc_sum = 0.0;
    let mut carry = 0.0;
    let mut visited = 0usize;
    for w in 0..num_walks {
        let mut s = walk::StepSampler::new(g, kernel, start.clone(), mix::fold(seed, w as u64));
        for _ in 0..n {
            let y = expected_height_increment(g, kernel, s.current())? - carry;
            let t = inc_sum + y;
            carry = (t - inc_sum) - y;
            inc_sum = t;
            visited += 1;
            s.step()?;
        }
        finals.push((s.current().height() - start.height()) as f64 / n as f64);
    }
    let (trajectory, ci) = mean_ci(&finals);
    Ok(DriftEstimate {
        trajectory,
        ci,
        one_step: inc_sum / visited as f64,
        num_walks,
        n,
        seed,
    })
}

/// Rate of escape in the product metric.
#[derive(Clone, Debug, Serialize)]
pub struct SpeedEstimate {
    /// Mean of `d(X_0, X_n) / n` over the sampled walks.
    pub rate: f64,
    pub ci: f64,
    pub num_walks: usize,
    pub n: usize,
    pub seed: u64,
}

/// Uses the same seed fan-out as [`drift_estimate`], so calling both with
/// one seed measures the same trajectories and `rate >= |trajectory|` holds
/// walk by walk.
pub fn speed_estimate(
    g: &HoroProduct,
    kernel: &Kernel,
    start: &ProductVertex,
    n: usize,
    num_walks: usize,
    seed: u64,
) -> Result<SpeedEstimate, WalkError> {
    assert!(n >= 1 && num_walks >= 1);
    let mut rates = Vec::with_capacity(num_walks);
    for w in 0..num_walks {
        let mut s = walk::StepSampler::new(g, kernel, start.clone(), mix::fold(seed, w as u64));
        for _ in 0..n {
            s.step()?;
        }
        rates.push(g.product_distance(start, s.current()) as f64 / n as f64);
    }
    let (rate, ci) = mean_ci(&rates);
    Ok(SpeedEstimate {
        rate,
        ci,
        num_walks,
        n,
        seed,
    })
}

fn shannon(probs: impl Iterator<Item = f64>) -> f64 {
    // the + 0.0 turns the point-mass result -0.0 into plain zero
    -probs.filter(|&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>() + 0.0
}

/// Shannon entropies (nats) of the exact n-step laws from `start`, for
/// `n = 0..=n_max`.
pub fn entropy_sequence(
    g: &HoroProduct,
    kernel: &Kernel,
    start: &ProductVertex,
    n_max: usize,
    budget: usize,
) -> Result<Vec<f64>, WalkError> {
    let dp = walk::nstep_distribution(g, kernel, start, n_max, budget)?;
    Ok((0..=n_max)
        .map(|n| shannon(dp.distribution(n).map(|(_, p)| p)))
        .collect())
}

/// Entropy growth of a kernel: the exact entropy sequence plus two
/// estimates of its linear rate.
///
/// The increment estimator is the preferred one: increments decrease toward
/// the rate, while `H_n / n` approaches it from above much more slowly. The
/// sampled estimator averages `-log p^n(start, X_n) / n` over endpoints of
/// sampled walks and is an unbiased reading of `H_n / n`, so
/// `sampled_vs_exact_gap` is pure Monte Carlo noise while
/// `increment_vs_rate_gap` measures how far the sequence still is from its
/// limit at this `n_max`.
#[derive(Clone, Debug, Serialize)]
pub struct EntropyEstimate {
    /// `H_0..H_{n_max}`.
    pub entropies: Vec<f64>,
    /// Literal differences of consecutive entries of `entropies`.
    pub increments: Vec<f64>,
    pub last_increment: f64,
    /// `H_{n_max} / n_max`.
    pub exact_rate: f64,
    pub sampled: f64,
    pub sampled_ci: f64,
    pub sampled_vs_exact_gap: f64,
    pub increment_vs_rate_gap: f64,
    pub num_walks: usize,
    pub n_max: usize,
    pub seed: u64,
}

pub fn asymptotic_entropy_estimate(
    g: &HoroProduct,
    kernel: &Kernel,
    start: &ProductVertex,
    n_max: usize,
    num_walks: usize,
    seed: u64,
    budget: usize,
) -> Result<EntropyEstimate, WalkError> {
    assert!(n_max >= 1 && num_walks >= 1);
    let dp = walk::nstep_distribution(g, kernel, start, n_max, budget)?;
    let entropies: Vec<f64> = (0..=n_max)
        .map(|n| shannon(dp.distribution(n).map(|(_, p)| p)))
        .collect();
    let increments: Vec<f64> = entropies.windows(2).map(|w| w[1] - w[0]).collect();
    let last_increment = *increments.last().unwrap();
    let exact_rate = entropies[n_max] / n_max as f64;
    let mut logs = Vec::with_capacity(num_walks);
    for w in 0..num_walks {
        let path = walk::sample_path(g, kernel, start, n_max, mix::fold(seed, w as u64))?;
        let p = dp.prob_of(n_max, path.vertices().last().unwrap());
        debug_assert!(p > 0.0, "sampled endpoint outside the exact support");
        logs.push(-p.ln() / n_max as f64);
    }
    let (sampled, sampled_ci) = mean_ci(&logs);
    Ok(EntropyEstimate {
        sampled_vs_exact_gap: (sampled - exact_rate).abs(),
        increment_vs_rate_gap: (last_increment - exact_rate).abs(),
        entropies,
        increments,
        last_increment,
        exact_rate,
        sampled,
        sampled_ci,
        num_walks,
        n_max,
        seed,
    })
}

/// Entropy sequences averaged over independently seeded environments.
#[derive(Clone, Debug, Serialize)]
pub struct EnvEntropySummary {
    pub num_envs: usize,
    /// Termwise mean of the per-environment `H_0..H_{n_max}`.
    pub mean: Vec<f64>,
    /// Termwise sample standard deviation across environments.
    pub spread: Vec<f64>,
    pub mean_last_increment: f64,
    pub seed: u64,
}

/// Averages [`entropy_sequence`] over `num_envs` products built by `make`
/// from mixed sub-seeds of `seed`. Meaningful for randomly generated
/// environments, where the entropy of interest is an average over the
/// environment law rather than a single instance.
pub fn entropy_over_environments<F>(
    make: F,
    kernel: &Kernel,
    n_max: usize,
    num_envs: usize,
    seed: u64,
    budget: usize,
) -> Result<EnvEntropySummary, WalkError>
where
    F: Fn(u64) -> HoroProduct,
{
    assert!(n_max >= 1 && num_envs >= 1);
    let mut seqs = Vec::with_capacity(num_envs);
    for i in 0..num_envs {
        let g = make(mix::fold(seed, i as u64));
        let start = g.origin();
        seqs.push(entropy_sequence(&g, kernel, &start, n_max, budget)?);
    }
    let mut mean = vec![0.0; n_max + 1];
    let mut spread = vec![0.0; n_max + 1];
    for n in 0..=n_max {
        let col: Vec<f64> = seqs.iter().map(|s| s[n]).collect();
        let (m, _) = mean_ci(&col);
        mean[n] = m;
        if num_envs >= 2 {
            let var =
                col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (num_envs as f64 - 1.0);
            spread[n] = var.sqrt();
        }
    }
    Ok(EnvEntropySummary {
        num_envs,
        mean_last_increment: mean[n_max] - mean[n_max - 1],
        mean,
        spread,
        seed,
    })
}

/// Empirical regularity scores for an observed trajectory prefix.
///
/// Every score is an excess over what an exact unit-speed geodesic would
/// produce, maximized over the last half of the prefix and normalized by the
/// time index, so a monotone geodesic ray scores exactly zero at every
/// prefix length. Scores are diagnostics, not proofs: `consistent` compares
/// them against the report-only [`DEFAULT_REGULARITY_THRESHOLD`].
#[derive(Clone, Debug, Serialize)]
pub struct RegularityReport {
    /// `d(X_0, X_T) / T`, the empirical rate of escape of this prefix.
    pub lambda_hat: f64,
    /// `(height(X_T) - height(X_0)) / T`.
    pub height_slope: f64,
    /// Max of `d(X_t, ray[round(lambda * t)]) / t`; present when a candidate
    /// ray was supplied.
    pub ray_deviation: Option<f64>,
    /// Max of `(d(X_{t-1}, X_t) - 1) / t`: jumps beyond single edges.
    pub step_excess: f64,
    /// Max of `|height(X_t) - height(X_0) - height_slope * t| / t`.
    pub height_linearity: f64,
    /// Max of `(d_tree(left_0, left_t) - |height drop|) / t` for the left
    /// projections: how far they stray from a vertical tree geodesic.
    pub left_excess: f64,
    pub right_excess: f64,
    pub threshold: f64,
    pub consistent: bool,
}

/// Scores a vertex sequence against the profile of a regular trajectory:
/// linear height, single-edge steps, projections tracking vertical tree
/// geodesics, and (optionally) bounded deviation from a candidate geodesic
/// ray traversed at rate `lambda`.
pub fn regularity_check(
    g: &HoroProduct,
    seq: &[ProductVertex],
    candidate: Option<(&[ProductVertex], f64)>,
) -> RegularityReport {
    let t_last = seq.len().saturating_sub(1);
    if t_last == 0 {
        return RegularityReport {
            lambda_hat: 0.0,
            height_slope: 0.0,
            ray_deviation: candidate.map(|_| 0.0),
            step_excess: 0.0,
            height_linearity: 0.0,
            left_excess: 0.0,
            right_excess: 0.0,
            threshold: DEFAULT_REGULARITY_THRESHOLD,
            consistent: true,
        };
    }
    let lambda_hat = g.product_distance(&seq[0], &seq[t_last]) as f64 / t_last as f64;
    let height_slope = (seq[t_last].height() - seq[0].height()) as f64 / t_last as f64;
    let window = (t_last / 2).max(1);

    let mut step_excess: f64 = 0.0;
    let mut height_linearity: f64 = 0.0;
    let mut left_excess: f64 = 0.0;
    let mut right_excess: f64 = 0.0;
    let mut ray_deviation = candidate.map(|_| 0.0f64);
    for t in window..=t_last {
        let tf = t as f64;
        let d_step = g.product_distance(&seq[t - 1], &seq[t]) as f64;
        step_excess = step_excess.max((d_step - 1.0) / tf);
        let dh = (seq[t].height() - seq[0].height()) as f64;
        height_linearity = height_linearity.max((dh - height_slope * tf).abs() / tf);
        let dl = g.left_env().tree_distance(seq[0].left(), seq[t].left()) as f64;
        left_excess = left_excess.max((dl - dh.abs()) / tf);
        let dr = g.right_env().tree_distance(seq[0].right(), seq[t].right()) as f64;
        right_excess = right_excess.max((dr - dh.abs()) / tf);
        if let (Some(dev), Some((ray, lambda))) = (ray_deviation.as_mut(), candidate) {
            let idx = ((lambda * tf).round() as usize).min(ray.len() - 1);
            *dev = dev.max(g.product_distance(&seq[t], &ray[idx]) as f64 / tf);
        }
    }
    let threshold = DEFAULT_REGULARITY_THRESHOLD;
    let consistent = step_excess <= threshold
        && height_linearity <= threshold
        && left_excess <= threshold
        && right_excess <= threshold
        && ray_deviation.is_none_or(|d| d <= threshold);
    RegularityReport {
        lambda_hat,
        height_slope,
        ray_deviation,
        step_excess,
        height_linearity,
        left_excess,
        right_excess,
        threshold,
        consistent,
    }
}

/// One cylinder of the sampled hitting distribution: the first
/// `prefix_depth` descent indices of a limit end, with its side.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CylinderCount {
    pub side: BoundarySide,
    pub prefix: Vec<u32>,
    pub count: usize,
}

/// Where sampled walks converge on the boundary.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub num_walks: usize,
    pub n: usize,
    pub prefix_depth: usize,
    /// Fractions of all walks classified to each side at `prefix_depth`.
    pub upper_fraction: f64,
    pub lower_fraction: f64,
    pub unclassified_fraction: f64,
    /// Side predicted by the sign of the drift at `start`, if nonzero.
    pub expected_side: Option<BoundarySide>,
    /// Fraction of all walks matching `expected_side`; 0 when that is None.
    pub matching_fraction: f64,
    /// Mean stabilized end-prefix length over classified walks.
    pub mean_stabilized_prefix: f64,
    /// Sampled hitting distribution on depth-`prefix_depth` cylinders,
    /// sorted by side and prefix.
    pub hitting: Vec<CylinderCount>,
    pub seed: u64,
}

pub fn boundary_convergence_stats(
    g: &HoroProduct,
    kernel: &Kernel,
    start: &ProductVertex,
    n: usize,
    num_walks: usize,
    prefix_depth: usize,
    seed: u64,
) -> Result<ConvergenceReport, WalkError> {
    assert!(n >= 1 && num_walks >= 1);
    let drift = expected_height_increment(g, kernel, start)?;
    let expected_side = if drift > 1e-12 {
        Some(BoundarySide::Upper)
    } else if drift < -1e-12 {
        Some(BoundarySide::Lower)
    } else {
        None
    };
    let mut upper = 0usize;
    let mut lower = 0usize;
    let mut matching = 0usize;
    let mut prefix_total = 0usize;
    let mut cylinders: std::collections::HashMap<(BoundarySide, Vec<u32>), usize> =
        std::collections::HashMap::new();
    for w in 0..num_walks {
        let path = walk::sample_path(g, kernel, start, n, mix::fold(seed, w as u64))?;
        let Some((point, _)) = g.classify_limit(path.vertices(), prefix_depth) else {
            continue;
        };
        match point.side {
            BoundarySide::Upper => upper += 1,
            BoundarySide::Lower => lower += 1,
        }
        if Some(point.side) == expected_side {
            matching += 1;
        }
        prefix_total += point.end.prefix.len();
        let key = (point.side, point.end.prefix[..prefix_depth].to_vec());
        *cylinders.entry(key).or_insert(0) += 1;
    }
    let m = num_walks as f64;
    let classified = upper + lower;
    let mut hitting: Vec<CylinderCount> = cylinders
        .into_iter()
        .map(|((side, prefix), count)| CylinderCount {
            side,
            prefix,
            count,
        })
        .collect();
    hitting.sort_by(|a, b| {
        (a.side == BoundarySide::Lower, &a.prefix).cmp(&(b.side == BoundarySide::Lower, &b.prefix))
    });
    Ok(ConvergenceReport {
        num_walks,
        n,
        prefix_depth,
        upper_fraction: upper as f64 / m,
        lower_fraction: lower as f64 / m,
        unclassified_fraction: (num_walks - classified) as f64 / m,
        expected_side,
        matching_fraction: matching as f64 / m,
        mean_stabilized_prefix: if classified > 0 {
            prefix_total as f64 / classified as f64
        } else {
            0.0
        },
        hitting,
        seed,
    })
}

/// Everything the estimators can say about one kernel on one product.
#[derive(Clone, Debug, Serialize)]
pub struct EstimateReport {
    pub drift: DriftEstimate,
    pub speed: SpeedEstimate,
    pub entropy: Option<EntropyEstimate>,
    pub convergence: Option<ConvergenceReport>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::product::RayTarget;
    use crate::tree::{End, PointedTreeEnv};
    use crate::walk::DEFAULT_SUPPORT_BUDGET;
    use std::sync::Arc;

    fn dl(p: u32, q: u32) -> HoroProduct {
        HoroProduct::new(
            PointedTreeEnv::homogeneous(p, format!("t{p}")).unwrap(),
            PointedTreeEnv::homogeneous(q, format!("t{q}")).unwrap(),
        )
    }

    #[test]
    fn one_step_increment_matches_closed_forms() {
        let g22 = dl(2, 2);
        let g23 = dl(2, 3);
        let o22 = g22.origin();
        let o23 = g23.origin();
        assert!(expected_height_increment(&g22, &Kernel::Simple, &o22)
            .unwrap()
            .abs()
            < 1e-15);
        assert!(
            (expected_height_increment(&g23, &Kernel::Simple, &o23).unwrap() - 0.2).abs() < 1e-15
        );
        for u in [0.2, 0.5, 0.9] {
            let k = Kernel::height_biased(u);
            let got = expected_height_increment(&g23, &k, &o23).unwrap();
            assert!((got - (2.0 * u - 1.0)).abs() < 1e-12, "u={u}: {got}");
        }
        // away from the origin the law is unchanged on a homogeneous product
        let far: ProductVertex = "(0:[1,0]|2:[])".parse().unwrap();
        assert!(
            (expected_height_increment(&g23, &Kernel::Simple, &far).unwrap() - 0.2).abs() < 1e-15
        );
    }

    #[test]
    fn drift_and_speed_agree_with_theory_on_positive_drift() {
        let g = dl(2, 3);
        let o = g.origin();
        let d = drift_estimate(&g, &Kernel::Simple, &o, 2000, 50, 9).unwrap();
        assert!((d.one_step - 0.2).abs() < 1e-12, "one_step {}", d.one_step);
        assert!((d.trajectory - 0.2).abs() < 0.03, "trajectory {}", d.trajectory);
        assert!(d.ci > 0.0 && d.ci < 0.05);
        let s = speed_estimate(&g, &Kernel::Simple, &o, 2000, 50, 9).unwrap();
        assert!((s.rate - 0.2).abs() < 0.03, "rate {}", s.rate);
        // same seed means same paths, so speed dominates drift exactly
        assert!(s.rate >= d.trajectory.abs() - 1e-12);
    }

    #[test]
    fn bouncing_kernel_has_zero_speed_at_even_times() {
        let g = dl(2, 2);
        let o = g.origin();
        let a = g.neighbors(&o)[0].clone();
        let (o2, a2) = (o.clone(), a.clone());
        let k = Kernel::Custom(Arc::new(move |v, w| {
            f64::from((*v == o2 && *w == a2) || (*v == a2 && *w == o2))
        }));
        let d = drift_estimate(&g, &k, &o, 10, 4, 3).unwrap();
        assert_eq!(d.trajectory, 0.0);
        let s = speed_estimate(&g, &k, &o, 10, 4, 3).unwrap();
        assert_eq!(s.rate, 0.0);
        assert_eq!(s.ci, 0.0);
    }

    const H22: [f64; 12] = [
        1.386294, 2.252728, 2.945876, 3.473768, 3.934578, 4.326876, 4.682761, 5.002184, 5.298828,
        5.573004, 5.831446, 6.074451,
    ];
    const H23: [f64; 6] = [1.609438, 2.654251, 3.530503, 4.217953, 4.834981, 5.375141];

    #[test]
    fn entropy_sequence_matches_frozen_values() {
        let g = dl(2, 2);
        let o = g.origin();
        let h = entropy_sequence(&g, &Kernel::Simple, &o, 12, DEFAULT_SUPPORT_BUDGET).unwrap();
        assert_eq!(h[0], 0.0);
        assert!((h[1] - 4.0f64.ln()).abs() < 1e-12);
        for (n, want) in H22.iter().enumerate() {
            assert!((h[n + 1] - want).abs() < 1e-6, "H_{} = {}", n + 1, h[n + 1]);
        }
        for w in h.windows(3) {
            assert!(w[2] - w[1] <= w[1] - w[0] + 1e-9, "increments must decrease");
        }

        let g = dl(2, 3);
        let o = g.origin();
        let h = entropy_sequence(&g, &Kernel::Simple, &o, 6, DEFAULT_SUPPORT_BUDGET).unwrap();
        assert!((h[1] - 5.0f64.ln()).abs() < 1e-12);
        for (n, want) in H23.iter().enumerate() {
            assert!((h[n + 1] - want).abs() < 1e-6, "H_{} = {}", n + 1, h[n + 1]);
        }
    }

    #[test]
    fn entropy_sequence_is_deterministic() {
        let g = dl(2, 3);
        let o = g.origin();
        let a = entropy_sequence(&g, &Kernel::Simple, &o, 6, DEFAULT_SUPPORT_BUDGET).unwrap();
        let b = entropy_sequence(&g, &Kernel::Simple, &o, 6, DEFAULT_SUPPORT_BUDGET).unwrap();
        assert_eq!(a, b, "identical runs must agree bitwise");
    }

    #[test]
    fn deterministic_ascent_entropy_is_branching_rate() {
        let g = dl(2, 3);
        let o = g.origin();
        let k = Kernel::height_biased(1.0);
        let h = entropy_sequence(&g, &k, &o, 6, DEFAULT_SUPPORT_BUDGET).unwrap();
        for (n, hn) in h.iter().enumerate() {
            assert!((hn - n as f64 * 3.0f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn sampled_entropy_estimator_reads_the_exact_rate() {
        let g = dl(2, 3);
        let o = g.origin();
        let e = asymptotic_entropy_estimate(
            &g,
            &Kernel::Simple,
            &o,
            6,
            400,
            7,
            DEFAULT_SUPPORT_BUDGET,
        )
        .unwrap();
        assert_eq!(e.entropies.len(), 7);
        assert_eq!(e.increments.len(), 6);
        assert!((e.exact_rate - e.entropies[6] / 6.0).abs() < 1e-15);
        assert!(e.sampled_vs_exact_gap < 0.05, "gap {}", e.sampled_vs_exact_gap);
        assert!(e.sampled_ci > 0.0);
        assert!(e.last_increment > 0.1);
    }

    #[test]
    fn environment_averaging_reports_mean_and_spread() {
        // offspring 1..=3 with weights 1:2:1
        let law = [0.25, 0.5, 0.25];
        let make = |s: u64| {
            HoroProduct::new(
                PointedTreeEnv::galton_watson(&law, s, "gl").unwrap(),
                PointedTreeEnv::galton_watson(&law, s ^ 0x9e37, "gr").unwrap(),
            )
        };
        let out =
            entropy_over_environments(make, &Kernel::Simple, 4, 3, 11, DEFAULT_SUPPORT_BUDGET)
                .unwrap();
        assert_eq!(out.num_envs, 3);
        assert_eq!(out.mean.len(), 5);
        assert_eq!(out.mean[0], 0.0);
        assert!(out.mean[1] > 0.0);
        assert!(out.spread.iter().skip(1).any(|&s| s > 0.0));
        assert!((out.mean_last_increment - (out.mean[4] - out.mean[3])).abs() < 1e-15);
    }

    #[test]
    fn exact_ray_scores_zero_at_every_prefix_length() {
        let g = dl(2, 3);
        let o = g.origin();
        // monotone climbing ray: the turn is already at the start
        let target = RayTarget::Upper {
            via: o.left().clone(),
            end: End::below(o.right().clone()),
        };
        let ray = g.geodesic_ray(&o, &target, 40).unwrap();
        for len in 2..=ray.len() {
            let r = regularity_check(&g, &ray[..len], Some((&ray, 1.0)));
            assert_eq!(r.step_excess, 0.0);
            assert_eq!(r.height_linearity, 0.0);
            assert_eq!(r.left_excess, 0.0);
            assert_eq!(r.right_excess, 0.0);
            assert_eq!(r.ray_deviation, Some(0.0));
            assert_eq!(r.lambda_hat, 1.0);
            assert!(r.consistent);
        }
    }

    #[test]
    fn oscillating_heights_fail_the_linearity_check() {
        let g = dl(2, 2);
        let o = g.origin();
        let target = RayTarget::Upper {
            via: o.left().clone(),
            end: End::below(o.right().clone()),
        };
        let ray = g.geodesic_ray(&o, &target, 20).unwrap();
        // heights 0, 1, 0, 2, 0, 3, ...: growing oscillation
        let mut seq = Vec::new();
        for r in &ray[1..=20] {
            seq.push(o.clone());
            seq.push(r.clone());
        }
        let r = regularity_check(&g, &seq, None);
        assert!(!r.consistent);
        assert!(r.height_linearity > DEFAULT_REGULARITY_THRESHOLD);
        assert!(r.step_excess > DEFAULT_REGULARITY_THRESHOLD);
    }

    #[test]
    fn srw_trajectory_is_regular_against_its_detected_ray() {
        let g = dl(2, 3);
        let o = g.origin();
        let n = 10_000;
        let path = walk::sample_path(&g, &Kernel::Simple, &o, n, 5).unwrap();
        let (point, _) = g
            .classify_limit(path.vertices(), 3)
            .expect("drifting walk must classify");
        assert_eq!(point.side, BoundarySide::Upper);
        // candidate ray through the endpoint's direction: the detected
        // end's constant tail is only trustworthy to the stabilized depth,
        // while the walk itself pins the direction all the way down
        let endpoint = path.vertices().last().unwrap();
        let toward_end = crate::product::BoundaryPoint {
            side: point.side,
            end: End::below(endpoint.right().clone()),
        };
        let target = g.canonical_ray_target(&o, &toward_end);
        let ray = g.geodesic_ray(&o, &target, n / 3).unwrap();
        let r = regularity_check(&g, path.vertices(), Some((&ray, 0.2)));
        assert!((r.lambda_hat - 0.2).abs() < 0.05, "lambda {}", r.lambda_hat);
        assert!((r.height_slope - 0.2).abs() < 0.05);
        assert_eq!(r.step_excess, 0.0);
        assert!(r.height_linearity < DEFAULT_REGULARITY_THRESHOLD);
        assert!(r.left_excess < DEFAULT_REGULARITY_THRESHOLD);
        assert!(r.right_excess < DEFAULT_REGULARITY_THRESHOLD);
        let dev = r.ray_deviation.unwrap();
        assert!(dev < 0.15, "deviation {dev}");
    }

    #[test]
    fn convergence_stats_follow_the_drift_sign() {
        let g = dl(2, 3);
        let o = g.origin();
        let up = boundary_convergence_stats(&g, &Kernel::Simple, &o, 2000, 200, 5, 21).unwrap();
        assert_eq!(up.expected_side, Some(BoundarySide::Upper));
        assert!(up.upper_fraction >= 0.9, "upper {}", up.upper_fraction);
        assert_eq!(up.matching_fraction, up.upper_fraction);
        assert!(up.mean_stabilized_prefix >= 5.0);
        let total: usize = up.hitting.iter().map(|c| c.count).sum();
        assert_eq!(
            total,
            ((up.upper_fraction + up.lower_fraction) * 200.0).round() as usize
        );
        for c in &up.hitting {
            assert_eq!(c.prefix.len(), 5);
        }

        let down =
            boundary_convergence_stats(&g, &Kernel::height_biased(0.2), &o, 2000, 100, 5, 22)
                .unwrap();
        assert_eq!(down.expected_side, Some(BoundarySide::Lower));
        assert!(down.lower_fraction > down.upper_fraction);
    }

    #[test]
    fn zero_drift_walks_rarely_classify_deep() {
        let g = dl(2, 2);
        let o = g.origin();
        let r = boundary_convergence_stats(&g, &Kernel::Simple, &o, 2000, 100, 10, 4).unwrap();
        assert_eq!(r.expected_side, None);
        assert_eq!(r.matching_fraction, 0.0);
        assert!(
            r.upper_fraction + r.lower_fraction < 0.5,
            "classified {}",
            r.upper_fraction + r.lower_fraction
        );
    }

    #[test]
    fn reports_serialize_to_json() {
        let g = dl(2, 3);
        let o = g.origin();
        let drift = drift_estimate(&g, &Kernel::Simple, &o, 50, 4, 1).unwrap();
        let speed = speed_estimate(&g, &Kernel::Simple, &o, 50, 4, 1).unwrap();
        let entropy =
            asymptotic_entropy_estimate(&g, &Kernel::Simple, &o, 4, 20, 1, DEFAULT_SUPPORT_BUDGET)
                .ok();
        let convergence =
            boundary_convergence_stats(&g, &Kernel::Simple, &o, 200, 20, 2, 1).ok();
        let report = EstimateReport {
            drift,
            speed,
            entropy,
            convergence,
        };
        let js = serde_json::to_string(&report).unwrap();
        assert!(js.contains("\"trajectory\""));
        assert!(js.contains("\"entropies\""));
        assert!(js.contains("\"hitting\""));
    }
}
