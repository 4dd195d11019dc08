//! Sample-level decoupling and batch-level reassembly.
//!
//! Every training sample is scored per modality by the KL divergence of its
//! unimodal prediction from the uniform distribution. The sample keeps only its
//! lowest-scoring (least separable) modality; the others are masked. Samples
//! are then grouped into one subset per retained modality, and batches are
//! drawn from a single subset at a time.

use std::collections::BTreeMap;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Modality, MultimodalDataset, NUM_MODALITIES};
use crate::error::{Error, Result};
use crate::model::{MultimodalModel, SampleView, UniMode};

/// Tolerance on `sum(p) == 1` accepted by [`kl_to_uniform`].
pub const DISTRIBUTION_TOL: f64 = 1e-9;

/// `KL(p || U)` in nats, with `0 ln 0 = 0`. Clamped below at 0 so rounding
/// cannot produce a negative score for a uniform input.
pub fn kl_to_uniform(p: &[f64]) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::validation("probs", "empty distribution"));
    }
    if p.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(Error::validation("probs", "entries must be finite and non-negative"));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > DISTRIBUTION_TOL {
        return Err(Error::validation("probs", format!("entries sum to {sum}, not 1")));
    }
    let m = p.len() as f64;
    let kl: f64 = p.iter().filter(|&&x| x > 0.0).map(|&x| x * (x * m).ln()).sum();
    Ok(kl.max(0.0))
}

/// Per-sample retained modality and the disjoint subsets it induces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub epoch: usize,
    /// `assignment[id]` is the retained modality index of sample `id`.
    pub assignment: Vec<usize>,
    /// `subsets[k]` lists the ids retaining modality `k`, ascending.
    pub subsets: Vec<Vec<usize>>,
    /// Scores the assignment was derived from, `scores[id][k]`.
    pub scores: Vec<Vec<f64>>,
}

impl Partition {
    /// Assigns each sample to its arg-min score; ties go to the lowest index.
    pub fn from_scores(scores: Vec<Vec<f64>>, num_modalities: usize, epoch: usize) -> Result<Self> {
        let mut subsets = vec![Vec::new(); num_modalities];
        let mut assignment = Vec::with_capacity(scores.len());
        for (id, row) in scores.iter().enumerate() {
            if row.len() != num_modalities {
                return Err(Error::Dimension { context: "partition scores", expected: num_modalities, actual: row.len() });
            }
            let mut best = 0;
            for k in 1..num_modalities {
                if row[k] < row[best] {
                    best = k;
                }
            }
            assignment.push(best);
            subsets[best].push(id);
        }
        Ok(Partition { epoch, assignment, subsets, scores })
    }

    /// Every sample retains `k`.
    pub fn uniform_assignment(n: usize, k: usize, num_modalities: usize, epoch: usize) -> Self {
        let mut subsets = vec![Vec::new(); num_modalities];
        subsets[k] = (0..n).collect();
        Partition { epoch, assignment: vec![k; n], subsets, scores: vec![vec![0.0; num_modalities]; n] }
    }

    pub fn num_modalities(&self) -> usize {
        self.subsets.len()
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn retained(&self, id: usize) -> Option<usize> {
        self.assignment.get(id).copied()
    }

    /// `|D^{m_k}|` per modality.
    pub fn counts(&self) -> Vec<usize> {
        self.subsets.iter().map(Vec::len).collect()
    }

    /// Mask flags implied by the assignment: everything but the retained
    /// modality is masked.
    pub fn masks(&self, id: usize) -> Option<[bool; NUM_MODALITIES]> {
        let k = self.retained(id)?;
        let mut m = [true; NUM_MODALITIES];
        m[k] = false;
        Some(m)
    }
}

/// Scores every sample of `dataset` under a read-only model snapshot and
/// retains each sample's least separable modality.
pub fn decouple(model: &MultimodalModel, dataset: &MultimodalDataset, mode: UniMode, epoch: usize) -> Result<Partition> {
    if dataset.is_empty() {
        return Err(Error::validation("dataset", "cannot decouple an empty dataset"));
    }
    let scores = score_samples(model, dataset, mode)?;
    Partition::from_scores(scores, NUM_MODALITIES, epoch)
}

/// `scores[id][k] = KL(p_id^k || U)`.
pub fn score_samples(model: &MultimodalModel, dataset: &MultimodalDataset, mode: UniMode) -> Result<Vec<Vec<f64>>> {
    let zeros = zero_inputs(dataset);
    dataset
        .samples
        .par_iter()
        .map(|s| {
            let view = SampleView::full(s);
            Modality::ALL.iter().map(|&m| kl_to_uniform(&model.unimodal_probs(&view, m, mode, &zeros)?)).collect::<Result<Vec<f64>>>()
        })
        .collect()
}

pub fn zero_inputs(dataset: &MultimodalDataset) -> [Vec<f64>; NUM_MODALITIES] {
    [vec![0.0; dataset.spec.dim_a], vec![0.0; dataset.spec.dim_v]]
}

/// A dataset presented with per-sample masks; stored inputs are untouched.
#[derive(Clone, Debug)]
pub struct MaskedView<'a> {
    dataset: &'a MultimodalDataset,
    masks: Vec<[bool; NUM_MODALITIES]>,
    zeros: [Vec<f64>; NUM_MODALITIES],
}

impl<'a> MaskedView<'a> {
    /// Presents each sample with only its own mask flags.
    pub fn unmasked(dataset: &'a MultimodalDataset) -> Self {
        MaskedView { dataset, masks: dataset.samples.iter().map(|s| s.masks()).collect(), zeros: zero_inputs(dataset) }
    }

    /// Adds the masks implied by `partition`. Masking an already-masked
    /// modality changes nothing.
    pub fn apply(mut self, partition: &Partition) -> Result<Self> {
        if partition.len() != self.dataset.len() {
            return Err(Error::Partition(format!("partition covers {} ids, dataset has {}", partition.len(), self.dataset.len())));
        }
        for (id, mask) in self.masks.iter_mut().enumerate() {
            let extra = partition.masks(id).ok_or_else(|| Error::Partition(format!("unknown id {id}")))?;
            for k in 0..NUM_MODALITIES {
                mask[k] |= extra[k];
            }
            if mask.iter().all(|&m| m) {
                return Err(Error::Partition(format!("sample {id} would have every modality masked")));
            }
        }
        Ok(self)
    }

    pub fn dataset(&self) -> &'a MultimodalDataset {
        self.dataset
    }

    pub fn len(&self) -> usize {
        self.dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dataset.is_empty()
    }

    pub fn masks(&self, id: usize) -> [bool; NUM_MODALITIES] {
        self.masks[id]
    }

    pub fn zeros(&self) -> &[Vec<f64>; NUM_MODALITIES] {
        &self.zeros
    }

    pub fn any_masked(&self) -> bool {
        self.masks.iter().any(|m| m.iter().any(|&x| x))
    }

    pub fn sample(&self, id: usize) -> Result<SampleView<'_>> {
        let s = self.dataset.get(id).ok_or_else(|| Error::Partition(format!("unknown id {id}")))?;
        Ok(SampleView::with_masks(s, self.masks[id], &self.zeros))
    }

    pub fn batch(&self, ids: &[usize]) -> Result<Vec<SampleView<'_>>> {
        ids.iter().map(|&id| self.sample(id)).collect()
    }
}

/// Convenience wrapper: the dataset viewed through `partition`'s masks.
pub fn apply_masks<'a>(dataset: &'a MultimodalDataset, partition: &Partition) -> Result<MaskedView<'a>> {
    MaskedView::unmasked(dataset).apply(partition)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderPolicy {
    /// All batches of subset 0, then subset 1, ...
    #[default]
    SequentialBySubset,
    /// Pure batches shuffled globally.
    InterleavedShuffled,
}

impl FromStr for OrderPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" | "sequential_by_subset" => Ok(OrderPolicy::SequentialBySubset),
            "interleaved" | "interleaved_shuffled" => Ok(OrderPolicy::InterleavedShuffled),
            other => Err(Error::validation("order_policy", format!("unknown policy `{other}` (sequential | interleaved)"))),
        }
    }
}

impl OrderPolicy {
    pub fn key(self) -> &'static str {
        match self {
            OrderPolicy::SequentialBySubset => "sequential",
            OrderPolicy::InterleavedShuffled => "interleaved",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    /// Source subset for pure batches; `None` for mixed batches.
    pub subset: Option<usize>,
    pub ids: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub batches: Vec<Batch>,
    pub batch_size: usize,
    pub order_policy: Option<OrderPolicy>,
}

impl BatchPlan {
    pub fn num_scheduled(&self) -> usize {
        self.batches.iter().map(|b| b.ids.len()).sum()
    }

    pub fn is_pure_tagged(&self) -> bool {
        !self.batches.is_empty() && self.batches.iter().all(|b| b.subset.is_some())
    }
}

/// Shuffles each subset with a seeded RNG and chunks it into pure batches.
pub fn build_batch_plan(partition: &Partition, batch_size: usize, policy: OrderPolicy, seed: u64) -> Result<BatchPlan> {
    if batch_size == 0 {
        return Err(Error::validation("batch_size", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut batches = Vec::new();
    for (k, subset) in partition.subsets.iter().enumerate() {
        if subset.is_empty() {
            log::warn!("epoch {}: subset {k} is empty and contributes no batches", partition.epoch);
            continue;
        }
        let mut ids = subset.clone();
        ids.shuffle(&mut rng);
        batches.extend(ids.chunks(batch_size).map(|c| Batch { subset: Some(k), ids: c.to_vec() }));
    }
    if policy == OrderPolicy::InterleavedShuffled {
        batches.shuffle(&mut rng);
    }
    Ok(BatchPlan { batches, batch_size, order_policy: Some(policy) })
}

/// Seeded shuffle of `0..n` chunked into untagged batches.
pub fn build_mixed_plan(n: usize, batch_size: usize, seed: u64) -> Result<BatchPlan> {
    if batch_size == 0 {
        return Err(Error::validation("batch_size", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng);
    let batches = ids.chunks(batch_size).map(|c| Batch { subset: None, ids: c.to_vec() }).collect();
    Ok(BatchPlan { batches, batch_size, order_policy: None })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub clauses: Vec<Clause>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.clauses.iter().all(|c| c.passed)
    }

    pub fn clause(&self, name: &str) -> Option<&Clause> {
        self.clauses.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &str, offenders: &[usize], what: &str) {
        let passed = offenders.is_empty();
        let detail = if passed { "ok".to_string() } else { format!("{what}: {offenders:?}") };
        self.clauses.push(Clause { name: name.to_string(), passed, detail });
    }
}

/// Checks disjointness, coverage, no-expansion and assignment consistency of a
/// partition over a dataset of `n` samples. Violations are reported, not raised.
pub fn verify_partition(partition: &Partition, n: usize) -> VerificationReport {
    let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
    for subset in &partition.subsets {
        for &id in subset {
            *seen.entry(id).or_default() += 1;
        }
    }
    let duplicated: Vec<usize> = seen.iter().filter(|(_, &c)| c > 1).map(|(&id, _)| id).collect();
    let missing: Vec<usize> = (0..n).filter(|id| !seen.contains_key(id)).collect();
    let unknown: Vec<usize> = seen.keys().copied().filter(|&id| id >= n).collect();
    let total: usize = partition.subsets.iter().map(Vec::len).sum();
    let inconsistent: Vec<usize> = (0..partition.assignment.len().max(n))
        .filter(|&id| match partition.assignment.get(id) {
            Some(&k) => {
                partition.subsets.get(k).is_none_or(|s| !s.contains(&id))
                    || partition.subsets.iter().enumerate().any(|(j, s)| j != k && s.contains(&id))
            }
            None => true,
        })
        .collect();

    let mut report = VerificationReport::default();
    report.push("disjoint", &duplicated, "ids in more than one subset (or repeated)");
    let mut coverage = missing.clone();
    coverage.extend(&unknown);
    report.push("coverage", &coverage, "ids missing from every subset or outside the dataset");
    let expansion = if total == n { vec![] } else { vec![total] };
    report.push("no_expansion", &expansion, &format!("sum of subset sizes differs from N = {n}"));
    report.push("assignment_consistent", &inconsistent, "assignment disagrees with subset membership");
    report
}

/// Checks batch purity against `partition` and that every id is scheduled
/// exactly once.
pub fn verify_batch_plan(plan: &BatchPlan, partition: &Partition) -> VerificationReport {
    let n = partition.len();
    let mut impure = Vec::new();
    let mut count = vec![0usize; n];
    let mut out_of_range = Vec::new();
    for (b, batch) in plan.batches.iter().enumerate() {
        let tag = batch.subset;
        let mut pure = tag.is_some();
        for &id in &batch.ids {
            match count.get_mut(id) {
                Some(c) => *c += 1,
                None => out_of_range.push(id),
            }
            pure &= partition.retained(id) == tag;
        }
        if !pure {
            impure.push(b);
        }
    }
    let mut not_once: Vec<usize> = count.iter().enumerate().filter(|(_, &c)| c != 1).map(|(id, _)| id).collect();
    not_once.extend(out_of_range);
    let oversized: Vec<usize> =
        plan.batches.iter().enumerate().filter(|(_, b)| b.ids.len() > plan.batch_size || b.ids.is_empty()).map(|(i, _)| i).collect();
    let mut undersized_per_subset = BTreeMap::<Option<usize>, usize>::new();
    for b in &plan.batches {
        if b.ids.len() < plan.batch_size {
            *undersized_per_subset.entry(b.subset).or_default() += 1;
        }
    }
    let many_small: Vec<usize> = undersized_per_subset.into_iter().filter(|&(_, c)| c > 1).map(|(k, _)| k.unwrap_or(usize::MAX)).collect();

    let mut report = VerificationReport::default();
    report.push("pure", &impure, "batches mixing subsets or untagged");
    report.push("exactly_once", &not_once, "ids not scheduled exactly once");
    report.push("batch_size", &oversized, "batches empty or above batch_size");
    report.push("one_undersized_per_subset", &many_small, "subsets with more than one short batch");
    report
}

#[derive(Serialize, Deserialize)]
struct PartitionRow {
    schema_version: String,
    epoch: usize,
    sample_id: usize,
    retained_modality: Modality,
    kl_audio: f64,
    kl_video: f64,
}

/// CSV with columns `schema_version,epoch,sample_id,retained_modality,kl_audio,kl_video`.
pub fn write_partitions_csv<W: Write>(partitions: &[Partition], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in partitions {
        for (id, &k) in p.assignment.iter().enumerate() {
            let row = PartitionRow {
                schema_version: crate::data::SCHEMA_VERSION.to_string(),
                epoch: p.epoch,
                sample_id: id,
                retained_modality: Modality::from_index(k).ok_or_else(|| Error::Partition(format!("modality index {k}")))?,
                kl_audio: p.scores[id][0],
                kl_video: p.scores[id][1],
            };
            w.serialize(row).map_err(csv_err)?;
        }
    }
    if partitions.is_empty() {
        w.write_record(["epoch", "sample_id", "retained_modality", "kl_audio", "kl_video"]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-epoch retained counts `(epoch, [audio, video])` from a partitions CSV.
pub fn read_partition_counts<R: std::io::Read>(input: R) -> Result<Vec<(usize, [usize; NUM_MODALITIES])>> {
    let mut r = csv::Reader::from_reader(input);
    let mut counts: BTreeMap<usize, [usize; NUM_MODALITIES]> = BTreeMap::new();
    for row in r.deserialize::<PartitionRow>() {
        let row = row.map_err(csv_err)?;
        crate::data::check_schema_version(&row.schema_version)?;
        counts.entry(row.epoch).or_default()[row.retained_modality.index()] += 1;
    }
    Ok(counts.into_iter().collect())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::validation("csv", format!("{other:?}")),
    }
}
