//! Pure evaluation metrics.

use crate::error::{Error, Result};

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Metric(format!("length mismatch: {a} scores, {b} labels")));
    }
    if a == 0 {
        return Err(Error::Metric("no cases".into()));
    }
    Ok(())
}

/// Indices sorted by descending score, grouped into runs of equal scores.
fn tie_groups(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in idx {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Area under the ROC curve: the probability that a random positive scores
/// above a random negative, with ties counting one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores.len(), labels.len())?;
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric("AUC undefined: only one class present".into()));
    }
    // negatives ranked strictly below, accumulated from the bottom
    let mut below = 0usize;
    let mut credit = 0.0;
    for g in tie_groups(scores).iter().rev() {
        let p = g.iter().filter(|&&i| labels[i]).count();
        let n = g.len() - p;
        credit += p as f64 * (below as f64 + 0.5 * n as f64);
        below += n;
    }
    Ok(credit / (pos as f64 * neg as f64))
}

/// Average precision: `sum (R_i - R_{i-1}) P_i` over descending unique
/// thresholds.
pub fn auprc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores.len(), labels.len())?;
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 {
        return Err(Error::Metric("AUPRC undefined: no positives".into()));
    }
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut ap = 0.0;
    for g in tie_groups(scores) {
        let p = g.iter().filter(|&&i| labels[i]).count();
        tp += p;
        seen += g.len();
        ap += p as f64 * (tp as f64 / seen as f64);
    }
    // rounding can overshoot a perfect ranking
    Ok((ap / pos as f64).min(1.0))
}

pub const PROB_CLIP: f64 = 1e-12;

/// Mean binary cross-entropy with probabilities clipped to
/// `[1e-12, 1 - 1e-12]`.
pub fn mean_cross_entropy(probs: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(probs.len(), labels.len())?;
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / probs.len() as f64)
}

/// Median of the values; the mean of the two middle values for even counts.
pub fn median(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Metric("median of no values".into()));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Ok(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Median absolute error of predictions already in the target's units.
pub fn median_abs_error(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred.len(), truth.len())?;
    let errs: Vec<f64> = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).collect();
    median(&errs)
}

/// Median absolute error in days of log-day predictions.
pub fn median_abs_error_days(pred_logdays: &[f64], true_logdays: &[f64]) -> Result<f64> {
    let p: Vec<f64> = pred_logdays.iter().map(|v| v.exp()).collect();
    let t: Vec<f64> = true_logdays.iter().map(|v| v.exp()).collect();
    median_abs_error(&p, &t)
}

fn population_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// `1 - Var(true - pred) / Var(true)` with population variances.
pub fn explained_variance(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred.len(), truth.len())?;
    let vy = population_variance(truth);
    if !(vy > 0.0) {
        return Err(Error::Metric("explained variance undefined for constant targets".into()));
    }
    let resid: Vec<f64> = truth.iter().zip(pred).map(|(t, p)| t - p).collect();
    Ok(1.0 - population_variance(&resid) / vy)
}

/// Fraction of exact matches.
pub fn accuracy(pred: &[u32], truth: &[u32]) -> Result<f64> {
    check_lengths(pred.len(), truth.len())?;
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (mean, population_variance(xs).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(v: &[u8]) -> Vec<bool> {
        v.iter().map(|&x| x == 1).collect()
    }

    #[test]
    fn auc_pair_counting() {
        let auc = roc_auc(&[0.1, 0.4, 0.35, 0.8], &b(&[0, 0, 1, 1])).unwrap();
        assert!((auc - 0.75).abs() < 1e-15);
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &b(&[0, 0, 1, 1])).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.3; 5], &b(&[0, 1, 0, 1, 1])).unwrap(), 0.5);
        assert!(matches!(roc_auc(&[0.1, 0.2], &b(&[1, 1])), Err(Error::Metric(m)) if m.contains("AUC undefined")));
    }

    #[test]
    fn auprc_step_sum() {
        assert_eq!(auprc(&[0.9, 0.1], &b(&[0, 1])).unwrap(), 0.5);
        assert_eq!(auprc(&[0.9, 0.8, 0.2, 0.1], &b(&[1, 1, 0, 0])).unwrap(), 1.0);
        // ranks 1 and 3: (1/2)(1) + (1/2)(2/3)
        let ap = auprc(&[0.9, 0.5, 0.4, 0.1], &b(&[1, 0, 1, 0])).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
        assert!(auprc(&[0.1, 0.2], &b(&[0, 0])).is_err());
    }

    #[test]
    fn cross_entropy_values() {
        let ce = mean_cross_entropy(&[0.5, 0.5, 0.5], &b(&[0, 1, 1])).unwrap();
        assert!((ce - std::f64::consts::LN_2).abs() < 1e-15);
        let ce = mean_cross_entropy(&[1.0, 0.0], &b(&[1, 0])).unwrap();
        assert!(ce < 1e-11);
        let bad = mean_cross_entropy(&[0.0], &b(&[1])).unwrap();
        assert!((bad - 1e12f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn medae_and_ev() {
        assert_eq!(median_abs_error(&[3.5, 1.5, 2.0, 8.0], &[3.0, 1.0, 2.0, 7.0]).unwrap(), 0.5);
        assert_eq!(median(&[0.5, 0.5, 0.0, 1.0]).unwrap(), 0.5);
        assert_eq!(median(&[3.0, 1.0, 2.0]).unwrap(), 2.0);
        let logs = [0.1, 1.2, -0.3];
        assert_eq!(median_abs_error_days(&logs, &logs).unwrap(), 0.0);
        let d = median_abs_error_days(&[2f64.ln()], &[3f64.ln()]).unwrap();
        assert!((d - 1.0).abs() < 1e-14);

        let ev = explained_variance(&[2.5, 0.0, 2.0, 8.0], &[3.0, -0.5, 2.0, 7.0]).unwrap();
        assert!((ev - (1.0 - 0.3125 / 7.296875)).abs() < 1e-15);
        assert!((ev - 0.9572).abs() < 1e-4);
        let y = [1.0, 2.0, 4.0];
        assert_eq!(explained_variance(&y, &y).unwrap(), 1.0);
        assert!(explained_variance(&[7.0 / 3.0; 3], &y).unwrap().abs() < 1e-15);
        assert!(explained_variance(&y, &[2.0; 3]).is_err());
    }

    #[test]
    fn auprc_random_scores_near_prevalence() {
        use rand::Rng;
        let mut rng = crate::rng::rng(5);
        let n = 20000;
        let labels: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.2).collect();
        let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let prev = labels.iter().filter(|&&l| l).count() as f64 / n as f64;
        assert!((auprc(&scores, &labels).unwrap() - prev).abs() < 0.02);
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (2usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(-5.0f64..5.0, n),
                prop::collection::vec(any::<bool>(), n),
            )
        })
        .prop_filter("both classes", |(_, l)| l.iter().any(|&x| x) && l.iter().any(|&x| !x))
    }

    fn brute_auc(s: &[f64], l: &[bool]) -> f64 {
        let mut c = 0.0;
        let mut n = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if l[i] && !l[j] {
                    n += 1.0;
                    c += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
                }
            }
        }
        c / n
    }

    proptest! {
        #[test]
        fn auc_matches_pair_counting((s, l) in instance()) {
            // coarse rounding forces ties
            let s: Vec<f64> = s.iter().map(|x| x.round()).collect();
            prop_assert!((roc_auc(&s, &l).unwrap() - brute_auc(&s, &l)).abs() < 1e-12);
        }

        #[test]
        fn auc_monotone_invariant((s, l) in instance()) {
            let t: Vec<f64> = s.iter().map(|x| x.exp() * 3.0 + 1.0).collect();
            prop_assert!((roc_auc(&s, &l).unwrap() - roc_auc(&t, &l).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn auc_negation_complements((s, l) in instance()) {
            let mut u = s.clone();
            u.sort_by(f64::total_cmp);
            u.dedup();
            prop_assume!(u.len() == s.len());
            let neg: Vec<f64> = s.iter().map(|x| -x).collect();
            let sum = roc_auc(&s, &l).unwrap() + roc_auc(&neg, &l).unwrap();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }

        #[test]
        fn auprc_bounds((s, l) in instance()) {
            let ap = auprc(&s, &l).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&ap));
            // a perfect ranker scores 1, its reverse is minimal
            let perfect: Vec<f64> = l.iter().map(|&y| if y { 1.0 } else { 0.0 }).collect();
            let reversed: Vec<f64> = perfect.iter().map(|x| -x).collect();
            prop_assert!((auprc(&perfect, &l).unwrap() - 1.0).abs() < 1e-12);
            let mut distinct = s.clone();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            prop_assume!(distinct.len() == s.len());
            // break ties in the reversed ranking arbitrarily but strictly
            let rev: Vec<f64> = reversed.iter().enumerate().map(|(i, x)| x + 1e-9 * i as f64).collect();
            prop_assert!(auprc(&rev, &l).unwrap() <= ap + 1e-12);
        }

        #[test]
        fn ev_shift_invariant(y in prop::collection::vec(-5.0f64..5.0, 3..30), noise in prop::collection::vec(-1.0f64..1.0, 30), c in -10.0f64..10.0) {
            let p: Vec<f64> = y.iter().zip(&noise).map(|(a, b)| a + b).collect();
            prop_assume!(population_variance(&y) > 1e-3);
            let ys: Vec<f64> = y.iter().map(|v| v + c).collect();
            let ps: Vec<f64> = p.iter().map(|v| v + c).collect();
            let a = explained_variance(&p, &y).unwrap();
            let b = explained_variance(&ps, &ys).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn medae_permutation_and_robustness(e in prop::collection::vec(-3.0f64..3.0, 1..30), shift in 0.0f64..100.0) {
            let zeros = vec![0.0; e.len()];
            let m = median_abs_error(&e, &zeros).unwrap();
            let mut r = e.clone();
            r.reverse();
            prop_assert_eq!(m, median_abs_error(&r, &zeros).unwrap());
            // push the largest residual further out
            let mut idx: Vec<usize> = (0..e.len()).collect();
            idx.sort_by(|&a, &b| e[a].abs().total_cmp(&e[b].abs()));
            let top = *idx.last().unwrap();
            prop_assume!(e.len() >= 3);
            let mut f = e.clone();
            f[top] = f[top].signum() * (f[top].abs() + shift);
            prop_assert_eq!(m, median_abs_error(&f, &zeros).unwrap());
        }

        #[test]
        fn cross_entropy_permutation(p in prop::collection::vec(0.01f64..0.99, 1..20), l in prop::collection::vec(any::<bool>(), 20)) {
            let l = &l[..p.len()];
            let a = mean_cross_entropy(&p, l).unwrap();
            let (mut pr, mut lr) = (p.clone(), l.to_vec());
            pr.reverse();
            lr.reverse();
            prop_assert!((a - mean_cross_entropy(&pr, &lr).unwrap()).abs() < 1e-12);
        }
    }
}
