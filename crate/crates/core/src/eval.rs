//! Cosine scoring, rank-1 identification and k-fold verification.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{input, Result};
use crate::wpca::fit_wpca;

/// Cosine similarity plus a flag raised when either vector has zero norm (score 0).
pub fn cosine_with_flag(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<(f64, bool)> {
    if a.len() != b.len() {
        return Err(input(format!("cosine of lengths {} and {}", a.len(), b.len())));
    }
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok((0.0, true));
    }
    Ok(((a.dot(&b) / (na * nb)).clamp(-1.0, 1.0), false))
}

pub fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<f64> {
    cosine_with_flag(a, b).map(|(s, _)| s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Identification {
    /// Percent of probes whose nearest gallery entry shares their label.
    pub rank1: f64,
    /// Gallery row chosen for every probe.
    pub nearest: Vec<usize>,
}

/// Nearest-neighbour identification by cosine; ties go to the lowest gallery index.
pub fn rank1_identify<L: PartialEq + Sync>(
    gallery: &Array2<f64>,
    gallery_labels: &[L],
    probes: &Array2<f64>,
    probe_labels: &[L],
) -> Result<Identification> {
    if gallery.nrows() == 0 || probes.nrows() == 0 {
        return Err(input("gallery and probe sets must be nonempty"));
    }
    if gallery.nrows() != gallery_labels.len() || probes.nrows() != probe_labels.len() {
        return Err(input("label count does not match descriptor rows"));
    }
    if gallery.ncols() != probes.ncols() {
        return Err(input("gallery and probe descriptors differ in length"));
    }
    let nearest = (0..probes.nrows())
        .into_par_iter()
        .map(|i| {
            let p = probes.row(i);
            let mut best = (0usize, f64::NEG_INFINITY);
            for (g, row) in gallery.axis_iter(Axis(0)).enumerate() {
                let s = cosine(p, row)?;
                if s > best.1 {
                    best = (g, s);
                }
            }
            Ok(best.0)
        })
        .collect::<Result<Vec<_>>>()?;
    let correct = nearest
        .iter()
        .zip(probe_labels)
        .filter(|(&g, l)| gallery_labels[g] == **l)
        .count();
    Ok(Identification {
        rank1: 100.0 * correct as f64 / probes.nrows() as f64,
        nearest,
    })
}

/// Mean cosine over the four original/flipped pairings.
pub fn flip_score(
    a: ArrayView1<f64>,
    a_flip: ArrayView1<f64>,
    b: ArrayView1<f64>,
    b_flip: ArrayView1<f64>,
) -> Result<f64> {
    let s = cosine(a, b)? + cosine(a, b_flip)? + cosine(a_flip, b)? + cosine(a_flip, b_flip)?;
    Ok(s / 4.0)
}

/// Frame-averaged video score: `r` random frame pairs, each scored with
/// [`flip_score`], so `4 r` cosines in total. Rows are frames.
pub fn video_score(
    a: (&Array2<f64>, &Array2<f64>),
    b: (&Array2<f64>, &Array2<f64>),
    r: usize,
    seed: u64,
) -> Result<f64> {
    if r == 0 || a.0.nrows() == 0 || b.0.nrows() == 0 {
        return Err(input("video scoring needs frames and r >= 1"));
    }
    if a.0.dim() != a.1.dim() || b.0.dim() != b.1.dim() {
        return Err(input("flipped frames do not match originals"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..r {
        let i = rng.random_range(0..a.0.nrows());
        let j = rng.random_range(0..b.0.nrows());
        total += flip_score(a.0.row(i), a.1.row(i), b.0.row(j), b.1.row(j))?;
    }
    Ok(total / r as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Roc {
    /// Percent, ties between a positive and a negative count one half.
    pub auc: f64,
    /// Best accuracy percent over all candidate thresholds.
    pub acc: f64,
    /// Threshold achieving `acc`; pairs scoring strictly above it are called same.
    pub threshold: f64,
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, one point per distinct score.
    pub points: Vec<(f64, f64)>,
}

pub fn verify_roc(scores: &[(f64, bool)]) -> Result<Roc> {
    let pos = scores.iter().filter(|s| s.1).count();
    let neg = scores.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(input("ROC needs at least one positive and one negative pair"));
    }
    if scores.iter().any(|s| s.0.is_nan()) {
        return Err(input("NaN score"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Tie groups, ascending by score: (value, positives, negatives)
    let mut groups: Vec<(f64, u64, u64)> = Vec::new();
    for &(s, same) in &sorted {
        match groups.last_mut() {
            Some(g) if g.0 == s => {
                if same {
                    g.1 += 1
                } else {
                    g.2 += 1
                }
            }
            _ => groups.push((s, same as u64, (!same) as u64)),
        }
    }

    // Twice the trapezoid area in count units, exact in integers.
    let mut twice_area: u64 = 0;
    let mut neg_below: u64 = 0;
    for &(_, p, n) in &groups {
        twice_area += 2 * p * neg_below + p * n;
        neg_below += n;
    }
    let (pos, neg) = (pos as u64, neg as u64);
    let auc = 100.0 * twice_area as f64 / (2 * pos * neg) as f64;

    // Threshold sweep: start at -inf (everything called same), raise past each group.
    let total = (pos + neg) as f64;
    let mut tp = pos;
    let mut tn = 0u64;
    let mut best = ((tp + tn) as f64 / total, f64::NEG_INFINITY);
    for (idx, &(v, p, n)) in groups.iter().enumerate() {
        tp -= p;
        tn += n;
        let thr = match groups.get(idx + 1) {
            Some(next) => 0.5 * (v + next.0),
            None => f64::INFINITY,
        };
        let acc = (tp + tn) as f64 / total;
        if acc > best.0 {
            best = (acc, thr);
        }
    }

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    for &(_, p, n) in groups.iter().rev() {
        tp += p;
        fp += n;
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }

    Ok(Roc {
        auc,
        acc: 100.0 * best.0,
        threshold: best.1,
        points,
    })
}

/// Mean and population standard deviation, accumulated in one pass (Welford).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in values.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    (mean, (m2 / values.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pair {
    pub a: usize,
    pub b: usize,
    pub same: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Identification,
    Verification,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Identification => "identification",
            Task::Verification => "verification",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub auc: f64,
    pub acc: f64,
    pub threshold: f64,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub task: Task,
    pub rank1: Option<f64>,
    pub auc: Option<f64>,
    pub acc_mean: Option<f64>,
    pub acc_sd: Option<f64>,
    pub per_fold: Vec<FoldResult>,
    pub config_hash: String,
    /// Pooled ROC over all held-out folds (empty for identification).
    pub roc_points: Vec<(f64, f64)>,
}

impl EvalReport {
    pub fn identification(rank1: f64, config_hash: impl Into<String>) -> Self {
        Self {
            task: Task::Identification,
            rank1: Some(rank1),
            auc: None,
            acc_mean: None,
            acc_sd: None,
            per_fold: Vec::new(),
            config_hash: config_hash.into(),
            roc_points: Vec::new(),
        }
    }

    /// `key=value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "task={}", self.task.name());
        if let Some(r) = self.rank1 {
            let _ = writeln!(out, "rank1={r:.2}");
        }
        if let Some(a) = self.auc {
            let _ = writeln!(out, "auc={a:.2}");
        }
        if let (Some(m), Some(s)) = (self.acc_mean, self.acc_sd) {
            let _ = writeln!(out, "acc_mean={m:.2}");
            let _ = writeln!(out, "acc_sd={s:.2}");
        }
        if self.task == Task::Verification {
            let _ = writeln!(out, "folds={}", self.per_fold.len());
            let _ = writeln!(out, "threshold_selection=held_out_fold");
        }
        let _ = writeln!(out, "config_hash={}", self.config_hash);
        out
    }

    /// One row per fold: `fold,auc,acc,n_pairs`.
    pub fn folds_csv(&self) -> String {
        let mut out = String::from("fold,auc,acc,n_pairs\n");
        for f in &self.per_fold {
            let _ = writeln!(out, "{},{:.6},{:.6},{}", f.fold, f.auc, f.acc, f.n_pairs);
        }
        out
    }

    /// `fpr,tpr` per threshold of the pooled ROC.
    pub fn roc_csv(&self) -> String {
        let mut out = String::from("fpr,tpr\n");
        for (fpr, tpr) in &self.roc_points {
            let _ = writeln!(out, "{fpr:.8},{tpr:.8}");
        }
        out
    }
}

/// k-fold verification over pair lists.
///
/// `descriptors` and `flipped` hold one row per image (original and horizontally
/// flipped). For each fold, WPCA (when `q` is given) is fitted on the originals and
/// flips of every image referenced by the other folds, the held-out pairs are scored
/// with [`flip_score`], and the accuracy threshold is chosen on that held-out fold.
pub fn kfold_verify(
    descriptors: &Array2<f64>,
    flipped: &Array2<f64>,
    folds: &[Vec<Pair>],
    q: Option<usize>,
    config_hash: &str,
) -> Result<EvalReport> {
    if folds.len() < 2 {
        return Err(input("k-fold verification needs k >= 2"));
    }
    if descriptors.dim() != flipped.dim() {
        return Err(input("flipped descriptors do not match originals"));
    }
    if let Some(i) = folds.iter().position(Vec::is_empty) {
        return Err(input(format!("fold {} is empty", i + 1)));
    }
    let n = descriptors.nrows();
    if folds.iter().flatten().any(|p| p.a >= n || p.b >= n) {
        return Err(input("pair references a missing descriptor"));
    }

    let mut per_fold = Vec::with_capacity(folds.len());
    let mut pooled = Vec::new();
    for (k, held) in folds.iter().enumerate() {
        let (orig, flip) = match q {
            Some(q) => {
                let mut members: Vec<usize> = folds
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != k)
                    .flat_map(|(_, f)| f.iter().flat_map(|p| [p.a, p.b]))
                    .collect();
                members.sort_unstable();
                members.dedup();
                let mut train = descriptors.select(Axis(0), &members);
                train.append(Axis(0), flipped.select(Axis(0), &members).view()).expect("same width");
                let cap = q.min(train.nrows() - 1).min(train.ncols());
                let model = fit_wpca(&train, cap)?;
                (model.project_rows(descriptors)?, model.project_rows(flipped)?)
            }
            None => (descriptors.clone(), flipped.clone()),
        };
        let scores = held
            .iter()
            .map(|p| {
                let s = flip_score(orig.row(p.a), flip.row(p.a), orig.row(p.b), flip.row(p.b))?;
                Ok((s, p.same))
            })
            .collect::<Result<Vec<_>>>()?;
        let roc = verify_roc(&scores)?;
        per_fold.push(FoldResult {
            fold: k + 1,
            auc: roc.auc,
            acc: roc.acc,
            threshold: roc.threshold,
            n_pairs: held.len(),
        });
        pooled.extend(scores);
    }
    let accs: Vec<f64> = per_fold.iter().map(|f| f.acc).collect();
    let (acc_mean, acc_sd) = mean_sd(&accs);
    let roc = verify_roc(&pooled)?;
    Ok(EvalReport {
        task: Task::Verification,
        rank1: None,
        auc: Some(roc.auc),
        acc_mean: Some(acc_mean),
        acc_sd: Some(acc_sd),
        per_fold,
        config_hash: config_hash.to_string(),
        roc_points: roc.points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use proptest::prelude::*;

    #[test]
    fn cosine_basics() {
        let v = array![1.0, 2.0, -3.0];
        assert!((cosine(v.view(), v.view()).unwrap() - 1.0).abs() < 1e-12);
        let neg = -&v;
        assert!((cosine(v.view(), neg.view()).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(cosine(array![1.0, 0.0].view(), array![0.0, 1.0].view()).unwrap(), 0.0);
        let z = Array1::zeros(3);
        assert_eq!(cosine_with_flag(z.view(), v.view()).unwrap(), (0.0, true));
        assert!(cosine(v.view(), array![1.0].view()).is_err());
    }

    #[test]
    fn self_match_is_perfect() {
        let g = array![[1.0, 0.0, 0.2], [0.0, 1.0, 0.1], [0.3, 0.3, 1.0]];
        let labels = ["a", "b", "c"];
        let id = rank1_identify(&g, &labels, &g, &labels).unwrap();
        assert_eq!(id.rank1, 100.0);
        assert_eq!(id.nearest, vec![0, 1, 2]);
        assert!(rank1_identify(&Array2::zeros((0, 3)), &[] as &[&str], &g, &labels).is_err());
    }

    #[test]
    fn rank1_ties_pick_lowest_index() {
        let g = array![[1.0, 0.0], [2.0, 0.0]];
        let probes = array![[3.0, 0.0]];
        let id = rank1_identify(&g, &["x", "y"], &probes, &["y"]).unwrap();
        assert_eq!(id.nearest, vec![0]);
        assert_eq!(id.rank1, 0.0);
    }

    #[test]
    fn flip_score_cases() {
        let a = array![1.0, 2.0];
        let b = array![2.0, -1.0];
        assert!((flip_score(a.view(), a.view(), a.view(), a.view()).unwrap() - 1.0).abs() < 1e-12);
        let plain = cosine(a.view(), b.view()).unwrap();
        assert_eq!(flip_score(a.view(), a.view(), b.view(), b.view()).unwrap(), plain);

        let (a, af, b, bf) = (array![1.0, 0.0], array![1.0, 1.0], array![0.0, 1.0], array![-1.0, 1.0]);
        // cos(a,b)=0, cos(a,bf)=-1/sqrt2, cos(af,b)=1/sqrt2, cos(af,bf)=0
        let want = (0.0 - 0.5f64.sqrt() + 0.5f64.sqrt() + 0.0) / 4.0;
        assert!((flip_score(a.view(), af.view(), b.view(), bf.view()).unwrap() - want).abs() < 1e-12);
        let (a, af, b, bf) = (array![3.0, 4.0], array![4.0, 3.0], array![1.0, 0.0], array![0.0, 2.0]);
        let want = (0.6 + 0.8 + 0.8 + 0.6) / 4.0;
        assert!((flip_score(a.view(), af.view(), b.view(), bf.view()).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn roc_extremes() {
        let sep = [(0.9, true), (0.8, true), (0.1, false), (0.2, false)];
        let roc = verify_roc(&sep).unwrap();
        assert_eq!((roc.auc, roc.acc), (100.0, 100.0));
        assert!(roc.threshold > 0.2 && roc.threshold < 0.8);
        assert_eq!(roc.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(roc.points.last(), Some(&(1.0, 1.0)));

        let tied = [(0.5, true), (0.5, false), (0.5, true), (0.5, false)];
        assert_eq!(verify_roc(&tied).unwrap().auc, 50.0);
        assert!(verify_roc(&[(0.1, true)]).is_err());
    }

    fn pairwise_auc(scores: &[(f64, bool)]) -> f64 {
        let mut twice = 0u64;
        let mut pairs = 0u64;
        for &(sp, lp) in scores {
            if !lp {
                continue;
            }
            for &(sn, ln) in scores {
                if ln {
                    continue;
                }
                pairs += 1;
                if sp > sn {
                    twice += 2;
                } else if sp == sn {
                    twice += 1;
                }
            }
        }
        100.0 * twice as f64 / (2 * pairs) as f64
    }

    #[test]
    fn auc_six_pairs() {
        let s = [(0.3, true), (0.7, false), (0.7, true), (0.1, false), (0.9, true), (0.3, false)];
        // positives 0.3, 0.7, 0.9 vs negatives 0.7, 0.1, 0.3: 1.5 + 2.5 + 3 = 7 of 9
        let roc = verify_roc(&s).unwrap();
        assert_eq!(roc.auc, pairwise_auc(&s));
        assert_eq!(roc.auc, 100.0 * 14.0 / 18.0);
    }

    #[test]
    fn two_pass_sd() {
        let v = [97.5, 99.0, 98.25, 100.0, 96.0];
        let (m, sd) = mean_sd(&v);
        let mean = v.iter().sum::<f64>() / 5.0;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 5.0;
        assert!((m - mean).abs() < 1e-12);
        assert!((sd - var.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn kfold_trivially_separable() {
        // classes on orthogonal axes; same pairs within a class, different across
        let d = array![[1.0, 0.0], [1.0, 0.01], [0.0, 1.0], [0.01, 1.0]];
        let fold = vec![
            Pair { a: 0, b: 1, same: true },
            Pair { a: 2, b: 3, same: true },
            Pair { a: 0, b: 2, same: false },
            Pair { a: 1, b: 3, same: false },
        ];
        let report = kfold_verify(&d, &d, &[fold.clone(), fold], None, "h").unwrap();
        assert_eq!(report.per_fold.len(), 2);
        assert_eq!(report.acc_mean, Some(100.0));
        assert_eq!(report.acc_sd, Some(0.0));
        assert_eq!(report.auc, Some(100.0));
        assert!(report.to_text().contains("acc_mean=100.00"));
        assert!(kfold_verify(&d, &d, &[vec![], vec![]], None, "h").is_err());
    }

    #[test]
    fn video_score_degenerate() {
        let a = array![[1.0, 0.0], [1.0, 0.0]];
        let b = array![[0.0, 1.0]];
        assert_eq!(video_score((&a, &a), (&b, &b), 20, 1).unwrap(), 0.0);
        assert_eq!(video_score((&a, &a), (&a, &a), 20, 1).unwrap(), 1.0);
    }

    proptest! {
        #[test]
        fn auc_invariant_under_monotone_map(raw in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 2..40)) {
            prop_assume!(raw.iter().any(|s| s.1) && raw.iter().any(|s| !s.1));
            let a = verify_roc(&raw).unwrap().auc;
            let mapped: Vec<_> = raw.iter().map(|&(s, l)| (s.exp() * 3.0 + 1.0, l)).collect();
            prop_assert_eq!(a, verify_roc(&mapped).unwrap().auc);
            prop_assert_eq!(a, pairwise_auc(&raw));
        }

        #[test]
        fn cosine_symmetric_bounded(a in prop::collection::vec(-10.0f64..10.0, 4), b in prop::collection::vec(-10.0f64..10.0, 4)) {
            let (a, b) = (Array1::from(a), Array1::from(b));
            let ab = cosine(a.view(), b.view()).unwrap();
            prop_assert_eq!(ab, cosine(b.view(), a.view()).unwrap());
            prop_assert!((-1.0..=1.0).contains(&ab));
        }
    }
}
