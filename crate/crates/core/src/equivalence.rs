//! Tiered state-equivalence detection.
//!
//! Tier 0: byte-identical digests are equivalent, nothing is computed.
//! Tier 1: the visual metric triple, banded by thresholds. All three metrics
//! must sit in the equal band to merge; any single metric in the distinct
//! band splits. Anything else is ambiguous.
//! Tier 2: the semantic judge settles ambiguous pairs.
//!
//! The classifier wraps the cascade with a verdict cache (keyed on unordered
//! digest pairs, which makes symmetry structural) and a union-find over
//! digests. Once two states land in one class they stay there: a later
//! pairwise verdict that disagrees is logged and ignored, because the merged
//! graph needs a true partition.

use crate::judge::{Confidence, JudgeError, SemanticJudge};
use crate::metrics::{self, MetricError, VisualMetrics};
use crate::trace::{Digest, StateObservation};
use image::DynamicImage;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EquivalenceError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error("invalid thresholds: {0}")]
    Thresholds(String),
    #[error("failed to read image {path}: {source}")]
    ImageRead {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Equivalent,
    Distinct,
    Ambiguous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Tier0,
    Tier1,
    Tier2,
}

/// Outcome of comparing two observations, with the tier that settled it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceVerdict {
    pub decision: Decision,
    pub resolved_by: Tier,
    /// Present when Tier 1 actually ran.
    pub metrics: Option<VisualMetrics>,
    pub explanation: String,
    pub confidence: Confidence,
}

/// Tier-1 banding bounds. The equal band is conjunctive (all metrics must
/// agree) and the distinct band is disjunctive (any strongly-different metric
/// splits); the gap between them is the ambiguous band handed to Tier 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceThresholds {
    pub phash_equal_min: f64,
    pub ssim_equal_min: f64,
    pub pixel_ratio_equal_max: f64,
    pub phash_distinct_max: f64,
    pub ssim_distinct_max: f64,
    pub pixel_ratio_distinct_min: f64,
}

impl Default for EquivalenceThresholds {
    fn default() -> Self {
        EquivalenceThresholds {
            phash_equal_min: 0.95,
            ssim_equal_min: 0.98,
            pixel_ratio_equal_max: 0.01,
            phash_distinct_max: 0.80,
            ssim_distinct_max: 0.85,
            pixel_ratio_distinct_min: 0.15,
        }
    }
}

impl EquivalenceThresholds {
    /// The two bands must not overlap, otherwise a metric triple could be
    /// both equal and distinct.
    pub fn validate(&self) -> Result<(), EquivalenceError> {
        if self.phash_equal_min <= self.phash_distinct_max {
            return Err(EquivalenceError::Thresholds(format!(
                "phash_equal_min ({}) must exceed phash_distinct_max ({})",
                self.phash_equal_min, self.phash_distinct_max
            )));
        }
        if self.ssim_equal_min <= self.ssim_distinct_max {
            return Err(EquivalenceError::Thresholds(format!(
                "ssim_equal_min ({}) must exceed ssim_distinct_max ({})",
                self.ssim_equal_min, self.ssim_distinct_max
            )));
        }
        if self.pixel_ratio_equal_max >= self.pixel_ratio_distinct_min {
            return Err(EquivalenceError::Thresholds(format!(
                "pixel_ratio_equal_max ({}) must be below pixel_ratio_distinct_min ({})",
                self.pixel_ratio_equal_max, self.pixel_ratio_distinct_min
            )));
        }
        Ok(())
    }

    pub fn in_equal_band(&self, m: &VisualMetrics) -> bool {
        m.phash_similarity >= self.phash_equal_min
            && m.ssim >= self.ssim_equal_min
            && m.pixel_change_ratio <= self.pixel_ratio_equal_max
    }

    pub fn in_distinct_band(&self, m: &VisualMetrics) -> bool {
        m.phash_similarity <= self.phash_distinct_max
            || m.ssim <= self.ssim_distinct_max
            || m.pixel_change_ratio >= self.pixel_ratio_distinct_min
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, EquivalenceError> {
        let text = std::fs::read_to_string(path).map_err(|source| EquivalenceError::ImageRead {
            path: path.display().to_string(),
            source,
        })?;
        let th: EquivalenceThresholds = serde_json::from_str(&text)
            .map_err(|e| EquivalenceError::Thresholds(e.to_string()))?;
        th.validate()?;
        Ok(th)
    }
}

/// What to do when the judge itself fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JudgeFailurePolicy {
    /// Propagate the error; used while learning, where a wrong merge would
    /// corrupt the model.
    FailFast,
    /// Score the pair distinct; used while validating, where the worst case
    /// is an inspectable false FAIL.
    TreatAsDistinct,
}

/// Cascade behavior knobs for one phase (learning vs validation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierPolicy {
    pub on_judge_failure: JudgeFailurePolicy,
    /// Demote low-confidence "equivalent" judgments to distinct.
    pub demote_low_confidence: bool,
}

impl ClassifierPolicy {
    pub fn learning() -> Self {
        ClassifierPolicy {
            on_judge_failure: JudgeFailurePolicy::FailFast,
            demote_low_confidence: true,
        }
    }

    pub fn validation() -> Self {
        ClassifierPolicy {
            on_judge_failure: JudgeFailurePolicy::TreatAsDistinct,
            demote_low_confidence: false,
        }
    }
}

/// Counters exposed for tests and explainability.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassifierStats {
    pub tier0_hits: u64,
    pub tier1_resolutions: u64,
    pub judge_calls: u64,
    pub cache_hits: u64,
    pub class_hits: u64,
}

#[derive(Default)]
struct UnionFind {
    ids: HashMap<Digest, usize>,
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn intern(&mut self, d: Digest) -> usize {
        if let Some(&i) = self.ids.get(&d) {
            return i;
        }
        let i = self.parent.len();
        self.ids.insert(d, i);
        self.parent.push(i);
        self.rank.push(0);
        i
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

struct ClassifierState {
    uf: UnionFind,
    cache: HashMap<(Digest, Digest), EquivalenceVerdict>,
    images: HashMap<Digest, Arc<DynamicImage>>,
    stats: ClassifierStats,
}

/// Tiered classifier with pairwise-verdict caching and union-find merging.
///
/// Mutations (cache inserts, unions) are serialized behind one lock, so a
/// shared classifier may be queried from multiple threads.
pub struct EquivalenceClassifier {
    thresholds: EquivalenceThresholds,
    judge: Box<dyn SemanticJudge>,
    policy: ClassifierPolicy,
    state: Mutex<ClassifierState>,
}

impl EquivalenceClassifier {
    pub fn new(
        thresholds: EquivalenceThresholds,
        judge: Box<dyn SemanticJudge>,
        policy: ClassifierPolicy,
    ) -> Result<Self, EquivalenceError> {
        thresholds.validate()?;
        Ok(EquivalenceClassifier {
            thresholds,
            judge,
            policy,
            state: Mutex::new(ClassifierState {
                uf: UnionFind::default(),
                cache: HashMap::new(),
                images: HashMap::new(),
                stats: ClassifierStats::default(),
            }),
        })
    }

    pub fn thresholds(&self) -> &EquivalenceThresholds {
        &self.thresholds
    }

    pub fn stats(&self) -> ClassifierStats {
        self.state.lock().unwrap().stats
    }

    /// Pre-declare that a set of digests belongs to one class (used when
    /// seeding from a persisted model's class table).
    pub fn seed_class(&self, digests: &[Digest]) {
        let mut st = self.state.lock().unwrap();
        if let Some((&first, rest)) = digests.split_first() {
            let a = st.uf.intern(first);
            for &d in rest {
                let b = st.uf.intern(d);
                st.uf.union(a, b);
            }
        }
    }

    /// Pre-populate the decoded-image cache (used for model representatives).
    pub fn preload_image(&self, digest: Digest, image: DynamicImage) {
        self.state
            .lock()
            .unwrap()
            .images
            .insert(digest, Arc::new(image));
    }

    /// True when the two digests have already been merged into one class.
    pub fn same_class(&self, a: Digest, b: Digest) -> bool {
        let mut st = self.state.lock().unwrap();
        let (ia, ib) = (st.uf.intern(a), st.uf.intern(b));
        st.uf.find(ia) == st.uf.find(ib)
    }

    fn load_image(&self, obs: &StateObservation) -> Result<Arc<DynamicImage>, EquivalenceError> {
        if let Some(img) = self.state.lock().unwrap().images.get(&obs.digest) {
            return Ok(img.clone());
        }
        let bytes = obs
            .image
            .read_bytes()
            .map_err(|source| EquivalenceError::ImageRead {
                path: obs.image.describe(),
                source,
            })?;
        let img = Arc::new(metrics::decode_png(&bytes, &obs.image.describe())?);
        self.state
            .lock()
            .unwrap()
            .images
            .insert(obs.digest, img.clone());
        Ok(img)
    }

    fn tier1_with_images(
        &self,
        a: &StateObservation,
        b: &StateObservation,
    ) -> Result<EquivalenceVerdict, EquivalenceError> {
        let img_a = self.load_image(a)?;
        let img_b = self.load_image(b)?;
        let m = metrics::visual_metrics(&img_a, &img_b)?;
        Ok(band_verdict(&self.thresholds, m))
    }

    /// Full cascade: tier 0, cached verdicts, tier 1, then the judge.
    /// Equivalent outcomes union the two digests.
    pub fn states_equivalent(
        &self,
        a: &StateObservation,
        b: &StateObservation,
    ) -> Result<bool, EquivalenceError> {
        // Tier 0.
        if a.digest == b.digest {
            self.state.lock().unwrap().stats.tier0_hits += 1;
            return Ok(true);
        }

        let key = pair_key(a.digest, b.digest);
        {
            let mut st = self.state.lock().unwrap();
            let (ia, ib) = (st.uf.intern(a.digest), st.uf.intern(b.digest));
            if st.uf.find(ia) == st.uf.find(ib) {
                st.stats.class_hits += 1;
                if let Some(v) = st.cache.get(&key) {
                    if v.decision == Decision::Distinct {
                        log::warn!(
                            "pairwise verdict says distinct but {} and {} share a class; class wins",
                            a.digest.short(),
                            b.digest.short()
                        );
                    }
                }
                return Ok(true);
            }
            if let Some(v) = st.cache.get(&key) {
                let equivalent = v.decision == Decision::Equivalent;
                st.stats.cache_hits += 1;
                if equivalent {
                    st.uf.union(ia, ib);
                }
                return Ok(equivalent);
            }
        }

        // Tier 1.
        let t1 = self.tier1_with_images(a, b)?;
        let verdict = match t1.decision {
            Decision::Ambiguous => {
                // Tier 2.
                self.state.lock().unwrap().stats.judge_calls += 1;
                match self.judge.judge(a, b) {
                    Ok(judgment) => {
                        let mut equivalent = judgment.equivalent;
                        let mut explanation = judgment.explanation.clone();
                        if equivalent
                            && self.policy.demote_low_confidence
                            && judgment.confidence == Confidence::Low
                        {
                            log::warn!(
                                "demoting low-confidence equivalence of {} / {} to distinct",
                                a.digest.short(),
                                b.digest.short()
                            );
                            equivalent = false;
                            explanation =
                                format!("low-confidence equivalence demoted: {explanation}");
                        }
                        EquivalenceVerdict {
                            decision: if equivalent {
                                Decision::Equivalent
                            } else {
                                Decision::Distinct
                            },
                            resolved_by: Tier::Tier2,
                            metrics: t1.metrics,
                            explanation,
                            confidence: judgment.confidence,
                        }
                    }
                    Err(err) => match self.policy.on_judge_failure {
                        JudgeFailurePolicy::FailFast => return Err(err.into()),
                        JudgeFailurePolicy::TreatAsDistinct => {
                            log::warn!("judge failed ({err}); treating ambiguous pair as distinct");
                            EquivalenceVerdict {
                                decision: Decision::Distinct,
                                resolved_by: Tier::Tier2,
                                metrics: t1.metrics,
                                explanation: format!(
                                    "judge unavailable, ambiguous pair treated as distinct: {err}"
                                ),
                                confidence: Confidence::Low,
                            }
                        }
                    },
                }
            }
            _ => t1,
        };

        let equivalent = verdict.decision == Decision::Equivalent;
        let mut st = self.state.lock().unwrap();
        if verdict.resolved_by == Tier::Tier1 {
            st.stats.tier1_resolutions += 1;
        }
        st.cache.insert(key, verdict);
        if equivalent {
            let (ia, ib) = (st.uf.intern(a.digest), st.uf.intern(b.digest));
            st.uf.union(ia, ib);
        }
        Ok(equivalent)
    }

    /// The cached verdict for a pair, if one was computed.
    pub fn cached_verdict(&self, a: Digest, b: Digest) -> Option<EquivalenceVerdict> {
        self.state
            .lock()
            .unwrap()
            .cache
            .get(&pair_key(a, b))
            .cloned()
    }
}

fn pair_key(a: Digest, b: Digest) -> (Digest, Digest) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn band_verdict(th: &EquivalenceThresholds, m: VisualMetrics) -> EquivalenceVerdict {
    if th.in_equal_band(&m) {
        EquivalenceVerdict {
            decision: Decision::Equivalent,
            resolved_by: Tier::Tier1,
            metrics: Some(m),
            explanation: format!(
                "all metrics in the equal band (phash {:.4}, ssim {:.4}, pixel ratio {:.4})",
                m.phash_similarity, m.ssim, m.pixel_change_ratio
            ),
            confidence: Confidence::High,
        }
    } else if th.in_distinct_band(&m) {
        EquivalenceVerdict {
            decision: Decision::Distinct,
            resolved_by: Tier::Tier1,
            metrics: Some(m),
            explanation: format!(
                "at least one metric in the distinct band (phash {:.4}, ssim {:.4}, pixel ratio {:.4})",
                m.phash_similarity, m.ssim, m.pixel_change_ratio
            ),
            confidence: Confidence::High,
        }
    } else {
        EquivalenceVerdict {
            decision: Decision::Ambiguous,
            resolved_by: Tier::Tier1,
            metrics: Some(m),
            explanation: format!(
                "metrics between bands (phash {:.4}, ssim {:.4}, pixel ratio {:.4})",
                m.phash_similarity, m.ssim, m.pixel_change_ratio
            ),
            confidence: Confidence::Low,
        }
    }
}

/// Tier 0 + Tier 1 only: digest short-circuit, then metric banding. The
/// result may be ambiguous; the full cascade (`states_equivalent`) never is.
pub fn tier1_compare(
    a: &StateObservation,
    b: &StateObservation,
    th: &EquivalenceThresholds,
) -> Result<EquivalenceVerdict, EquivalenceError> {
    if a.digest == b.digest {
        return Ok(EquivalenceVerdict {
            decision: Decision::Equivalent,
            resolved_by: Tier::Tier0,
            metrics: None,
            explanation: "byte-identical images".into(),
            confidence: Confidence::High,
        });
    }
    let img_a = load_obs_image(a)?;
    let img_b = load_obs_image(b)?;
    let m = metrics::visual_metrics(&img_a, &img_b)?;
    Ok(band_verdict(th, m))
}

/// Convenience wrapper matching the cascade entry point as a free function.
pub fn states_equivalent(
    a: &StateObservation,
    b: &StateObservation,
    cls: &EquivalenceClassifier,
) -> Result<bool, EquivalenceError> {
    cls.states_equivalent(a, b)
}

fn load_obs_image(obs: &StateObservation) -> Result<DynamicImage, EquivalenceError> {
    let bytes = obs
        .image
        .read_bytes()
        .map_err(|source| EquivalenceError::ImageRead {
            path: obs.image.describe(),
            source,
        })?;
    Ok(metrics::decode_png(&bytes, &obs.image.describe())?)
}
