//! ROC, AUC and EER. Higher scores mean "more likely fake"; a sample whose
//! score equals the threshold counts as a fake decision.

use alloc::format;
use alloc::vec::Vec;

use crate::manifest::Label;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredSet {
    scores: Vec<f64>,
    labels: Vec<Label>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<Label>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!("{} scores for {} labels", scores.len(), labels.len())));
        }
        if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::InvalidConfig(format!("non-finite score {bad}")));
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    fn class_counts(&self) -> Result<(usize, usize)> {
        let fake = self.count(Label::Fake);
        let bona = self.len() - fake;
        if fake == 0 || bona == 0 {
            return Err(Error::SingleClass);
        }
        Ok((bona, fake))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores `>= threshold` are called fake; `+inf` for the origin.
    pub threshold: f64,
}

/// Origin first, then one point per distinct score in descending order; the
/// last point is always (1, 1).
pub fn roc_curve(set: &ScoredSet) -> Result<Vec<RocPoint>> {
    let (bona, fake) = set.class_counts()?;
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.sort_by(|&a, &b| set.scores[b].total_cmp(&set.scores[a]));
    let mut points = alloc::vec![RocPoint { fpr: 0.0, tpr: 0.0, threshold: f64::INFINITY }];
    let (mut fp, mut tp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = set.scores[order[i]];
        while i < order.len() && set.scores[order[i]] == t {
            match set.labels[order[i]] {
                Label::Fake => tp += 1,
                Label::Bonafide => fp += 1,
            }
            i += 1;
        }
        points.push(RocPoint { fpr: fp as f64 / bona as f64, tpr: tp as f64 / fake as f64, threshold: t });
    }
    Ok(points)
}

/// Trapezoidal area under the ROC, in percent.
pub fn auc(set: &ScoredSet) -> Result<f64> {
    let roc = roc_curve(set)?;
    let area: f64 = roc.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) * 0.5).sum();
    Ok(100.0 * area)
}

/// Equal error rate in percent and the threshold where it occurs.
pub fn eer(set: &ScoredSet) -> Result<(f64, f64)> {
    let roc = roc_curve(set)?;
    // Along the sweep FAR rises 0 -> 1 and FRR falls 1 -> 0, so a crossing exists.
    let gap = |p: &RocPoint| (1.0 - p.tpr) - p.fpr;
    let i = roc.iter().position(|p| gap(p) <= 0.0).expect("last ROC point has FRR 0");
    let cur = roc[i];
    if gap(&cur) == 0.0 || i == 0 {
        return Ok((100.0 * cur.fpr, cur.threshold));
    }
    let prev = roc[i - 1];
    let (g0, g1) = (gap(&prev), gap(&cur));
    let alpha = g0 / (g0 - g1);
    let rate = prev.fpr + alpha * (cur.fpr - prev.fpr);
    let threshold = if prev.threshold.is_finite() {
        prev.threshold + alpha * (cur.threshold - prev.threshold)
    } else {
        cur.threshold
    };
    Ok((100.0 * rate, threshold))
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub eer_percent: f64,
    pub auc_percent: f64,
    pub eer_threshold: f64,
    pub n_bonafide: usize,
    pub n_fake: usize,
}

pub fn evaluate(set: &ScoredSet) -> Result<EvalReport> {
    let (n_bonafide, n_fake) = set.class_counts()?;
    let (eer_percent, eer_threshold) = eer(set)?;
    Ok(EvalReport { eer_percent, auc_percent: auc(set)?, eer_threshold, n_bonafide, n_fake })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Label::{Bonafide as B, Fake as F};

    fn set(scores: &[f64], labels: &[Label]) -> ScoredSet {
        ScoredSet::new(scores.to_vec(), labels.to_vec()).unwrap()
    }

    fn pts(roc: &[RocPoint]) -> Vec<(f64, f64)> {
        roc.iter().map(|p| (p.fpr, p.tpr)).collect()
    }

    #[test]
    fn roc_examples() {
        assert_eq!(pts(&roc_curve(&set(&[0.9, 0.1], &[F, B])).unwrap()), [(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        assert_eq!(pts(&roc_curve(&set(&[0.3; 4], &[F, B, B, F])).unwrap()), [(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(roc_curve(&set(&[0.1, 0.2], &[F, F])), Err(Error::SingleClass));
    }

    /// Every candidate threshold (each score plus +inf), evaluated directly.
    fn brute_roc(s: &[f64], l: &[Label]) -> Vec<(f64, f64)> {
        let nb = l.iter().filter(|&&x| x == B).count() as f64;
        let nf = l.len() as f64 - nb;
        let mut ts: Vec<f64> = s.to_vec();
        ts.push(f64::INFINITY);
        ts.sort_by(|a, b| b.total_cmp(a));
        ts.dedup();
        ts.iter()
            .map(|&t| {
                let fp = s.iter().zip(l).filter(|(v, &y)| **v >= t && y == B).count() as f64;
                let tp = s.iter().zip(l).filter(|(v, &y)| **v >= t && y == F).count() as f64;
                (fp / nb, tp / nf)
            })
            .collect()
    }

    #[test]
    fn roc_matches_exhaustive_thresholds() {
        let s = [0.8, 0.4, 0.4, 0.1, 0.95, 0.3];
        let l = [F, B, F, B, F, B];
        assert_eq!(pts(&roc_curve(&set(&s, &l)).unwrap()), brute_roc(&s, &l));
    }

    #[test]
    fn separated_and_tied() {
        let sep = set(&[0.9, 0.8, 0.2, 0.1], &[F, F, B, B]);
        assert_eq!(auc(&sep).unwrap(), 100.0);
        assert_eq!(eer(&sep).unwrap().0, 0.0);
        let tied = set(&[0.5; 6], &[F, B, B, F, F, B]);
        assert_eq!(eer(&tied).unwrap(), (50.0, 0.5));
        assert_eq!(auc(&tied).unwrap(), 50.0);
    }

    #[test]
    fn eer_single_inversion_by_hand() {
        // Fakes 0.9 0.8 0.7 0.35, bonafides 0.6 0.3 0.2 0.1.
        // Sweep (FAR, FRR): inf (0,1); .9 (0,.75); .8 (0,.5); .7 (0,.25);
        // .6 (.25,.25) -> exact crossing at 25%, threshold 0.6.
        let s = set(&[0.9, 0.8, 0.7, 0.35, 0.6, 0.3, 0.2, 0.1], &[F, F, F, F, B, B, B, B]);
        let (e, t) = eer(&s).unwrap();
        assert!((e - 25.0).abs() < 1e-9);
        assert_eq!(t, 0.6);
    }

    #[test]
    fn eer_interpolated_by_hand() {
        // Fakes .9 .5, bonafides .7 .1. Sweep: .9 (0,.5); .7 (.5,.5) exact.
        // Shift to 3 bonafides to force interpolation:
        // fakes .9 .5, bonafides .7 .6 .1: .9 (0,.5); .7 (1/3,.5); .6 (2/3,.5)
        // First gap <= 0 is at .6: prev (1/3, .5) gap 1/6, cur (2/3, .5) gap -1/6.
        // alpha 1/2 -> EER = 1/2, threshold .65.
        let s = set(&[0.9, 0.5, 0.7, 0.6, 0.1], &[F, F, B, B, B]);
        let (e, t) = eer(&s).unwrap();
        assert!((e - 50.0).abs() < 1e-9, "{e}");
        assert!((t - 0.65).abs() < 1e-12);
    }

    #[test]
    fn chance_level_auc() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let n = 20_000;
        let s: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let l: Vec<Label> = (0..n).map(|_| if rng.random_bool(0.5) { F } else { B }).collect();
        let a = auc(&set(&s, &l)).unwrap();
        assert!((a - 50.0).abs() < 2.0, "{a}");
    }

    #[test]
    fn report_counts() {
        let r = evaluate(&set(&[0.9, 0.2, 0.3], &[F, B, B])).unwrap();
        assert_eq!((r.n_bonafide, r.n_fake), (2, 1));
        assert!(ScoredSet::new(alloc::vec![0.1], alloc::vec![]).is_err());
        assert!(ScoredSet::new(alloc::vec![f64::NAN], alloc::vec![B]).is_err());
    }

    fn mann_whitney(s: &[f64], l: &[Label]) -> f64 {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for (i, &a) in s.iter().enumerate() {
            for (j, &b) in s.iter().enumerate() {
                if l[i] == F && l[j] == B {
                    pairs += 1.0;
                    wins += if a > b { 1.0 } else if a == b { 0.5 } else { 0.0 };
                }
            }
        }
        100.0 * wins / pairs
    }

    fn arb_set() -> impl Strategy<Value = (Vec<f64>, Vec<Label>)> {
        (2usize..40).prop_flat_map(|n| {
            (
                proptest::collection::vec((0u8..12).prop_map(|k| k as f64 / 11.0), n),
                proptest::collection::vec(any::<bool>().prop_map(|f| if f { F } else { B }), n),
            )
        })
        .prop_filter("both classes", |(_, l)| l.contains(&F) && l.contains(&B))
    }

    proptest! {
        #[test]
        fn auc_equals_mann_whitney((s, l) in arb_set()) {
            let a = auc(&set(&s, &l)).unwrap();
            prop_assert!((a - mann_whitney(&s, &l)).abs() < 1e-9);
        }

        #[test]
        fn monotone_invariance((s, l) in arb_set()) {
            let base = set(&s, &l);
            let moved: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
            let moved = set(&moved, &l);
            prop_assert!((auc(&base).unwrap() - auc(&moved).unwrap()).abs() < 1e-9);
            prop_assert!((eer(&base).unwrap().0 - eer(&moved).unwrap().0).abs() < 1e-9);
        }

        #[test]
        fn label_flip_duality((s, l) in arb_set()) {
            // Swapping labels alone mirrors the AUC; also negating the
            // scores restores the original ranking, so nothing changes.
            let neg: Vec<f64> = s.iter().map(|v| -v).collect();
            let flipped: Vec<Label> = l.iter().map(|&y| if y == F { B } else { F }).collect();
            let a = set(&s, &l);
            let swapped = set(&s, &flipped);
            let both = set(&neg, &flipped);
            prop_assert!((auc(&a).unwrap() + auc(&swapped).unwrap() - 100.0).abs() < 1e-9);
            prop_assert!((auc(&a).unwrap() - auc(&both).unwrap()).abs() < 1e-9);
            prop_assert!((eer(&a).unwrap().0 - eer(&both).unwrap().0).abs() < 1e-9);
        }

        #[test]
        fn eer_bounds((s, l) in arb_set()) {
            let a = set(&s, &l);
            let e = eer(&a).unwrap().0;
            prop_assert!((0.0..=100.0).contains(&e));
            let roc = roc_curve(&a).unwrap();
            if roc.iter().all(|p| p.tpr >= p.fpr) {
                prop_assert!(e <= 50.0 + 1e-9);
            }
            let r = evaluate(&a).unwrap();
            prop_assert!((0.0..=100.0).contains(&r.auc_percent));
        }

        #[test]
        fn roc_is_monotone((s, l) in arb_set()) {
            let roc = roc_curve(&set(&s, &l)).unwrap();
            prop_assert_eq!(pts(&roc), brute_roc(&s, &l));
            for w in roc.windows(2) {
                prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
            }
            let last = roc.last().unwrap();
            prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        }
    }
}
