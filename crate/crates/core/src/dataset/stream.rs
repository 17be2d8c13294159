use std::collections::VecDeque;
use std::fs::File;
use std::io::BufReader;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use crossbeam_channel::{bounded, Receiver};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use super::{SceneRecord, Shard, ShardReader, StreamError, ViewRecord};
use crate::conditioning::{ConditioningError, SceneView};

/// How the per-scene pair count is drawn from the rate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairCountMode {
    /// `floor(rate)` plus one more with probability `frac(rate)`: mean
    /// exactly `rate`, variance below 1/4.
    #[default]
    StochasticRound,
    /// `Poisson(rate)`.
    Poisson,
}

impl PairCountMode {
    fn draw(self, rate: f64, rng: &mut impl Rng) -> usize {
        match self {
            PairCountMode::StochasticRound => {
                let whole = rate.floor();
                whole as usize + usize::from(rng.random::<f64>() < rate - whole)
            }
            PairCountMode::Poisson => {
                let d = Poisson::new(rate).expect("rate validated positive");
                let n: f64 = d.sample(rng);
                n as usize
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct StreamOptions {
    /// Expected pairs per scene.
    pub rate: f64,
    pub seed: u64,
    pub pair_count: PairCountMode,
    /// Upper bound on decoded scenes alive inside a parallel stream,
    /// counting the one the consumer is draining.
    pub scene_budget: usize,
    /// Epoch number mixed into the per-scene RNG so restarts draw fresh pairs.
    pub epoch: u64,
    pub gauge: Option<Arc<ResidentGauge>>,
}

impl Default for StreamOptions {
    fn default() -> Self {
        Self {
            rate: 1.0,
            seed: 0,
            pair_count: PairCountMode::default(),
            scene_budget: 16,
            epoch: 0,
            gauge: None,
        }
    }
}

impl StreamOptions {
    pub fn validate(&self) -> Result<(), StreamError> {
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(StreamError::InvalidOptions(format!("rate must be positive, got {}", self.rate)));
        }
        Ok(())
    }
}

/// Counts decoded scenes currently alive and the high-water mark.
#[derive(Debug, Default)]
pub struct ResidentGauge {
    current: AtomicUsize,
    peak: AtomicUsize,
}

impl ResidentGauge {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn current(&self) -> usize {
        self.current.load(Ordering::SeqCst)
    }

    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    fn enter(self: &Arc<Self>) -> GaugeGuard {
        let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        GaugeGuard(Arc::clone(self))
    }
}

#[derive(Debug)]
struct GaugeGuard(Arc<ResidentGauge>);

impl Drop for GaugeGuard {
    fn drop(&mut self) {
        self.0.current.fetch_sub(1, Ordering::SeqCst);
    }
}

#[derive(Debug)]
struct ResidentScene {
    record: SceneRecord,
    _guard: Option<GaugeGuard>,
}

/// An ordered view pair drawn from one scene. Cheap to clone; the scene
/// data is shared.
#[derive(Debug, Clone)]
pub struct PairSample {
    scene: Arc<ResidentScene>,
    shard_id: Arc<str>,
    scene_index: usize,
    input: usize,
    target: usize,
}

impl PairSample {
    pub fn scene(&self) -> &SceneRecord {
        &self.scene.record
    }

    pub fn scene_id(&self) -> &str {
        &self.scene.record.scene_id
    }

    pub fn shard_id(&self) -> &str {
        &self.shard_id
    }

    /// Position of the scene within its shard.
    pub fn scene_index(&self) -> usize {
        self.scene_index
    }

    pub fn input_index(&self) -> usize {
        self.input
    }

    pub fn target_index(&self) -> usize {
        self.target
    }

    pub fn input_view(&self) -> &ViewRecord {
        &self.scene.record.views[self.input]
    }

    pub fn target_view(&self) -> &ViewRecord {
        &self.scene.record.views[self.target]
    }

    /// `shard/scene/i-j`; unique within one pass over a shard set.
    pub fn sample_id(&self) -> String {
        format!("{}/{}/{}-{}", self.shard_id, self.scene_id(), self.input, self.target)
    }

    /// Payload bytes of the two views.
    pub fn byte_len(&self) -> usize {
        [self.input_view(), self.target_view()]
            .iter()
            .map(|v| v.image_png.len() + v.depth.byte_len() + 64)
            .sum()
    }

    pub fn scene_view(&self) -> Result<SceneView, ConditioningError> {
        self.scene.record.scene_view(self.input, self.target)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Per-scene RNG: depends only on the seed, the epoch and the scene's
/// position, so the set of pairs does not depend on scheduling.
fn scene_rng(opts: &StreamOptions, shard_id: &str, scene_index: usize) -> ChaCha8Rng {
    let mut h = splitmix(opts.seed);
    h = splitmix(h ^ opts.epoch);
    h = splitmix(h ^ fnv1a(shard_id));
    h = splitmix(h ^ scene_index as u64);
    ChaCha8Rng::seed_from_u64(h)
}

/// Maps `0..n(n−1)` onto ordered pairs `(i, j)` with `i ≠ j`.
fn pair_from_index(idx: usize, n: usize) -> (usize, usize) {
    let i = idx / (n - 1);
    let r = idx % (n - 1);
    (i, r + usize::from(r >= i))
}

fn pairs_for_scene(
    record: SceneRecord,
    shard_id: &Arc<str>,
    scene_index: usize,
    opts: &StreamOptions,
) -> Vec<PairSample> {
    let mut rng = scene_rng(opts, shard_id, scene_index);
    let n = record.views.len();
    let max_pairs = n * (n - 1);
    let count = opts.pair_count.draw(opts.rate, &mut rng).min(max_pairs);
    if count == 0 {
        return Vec::new();
    }
    let scene = Arc::new(ResidentScene {
        record,
        _guard: opts.gauge.as_ref().map(|g| g.enter()),
    });
    index::sample(&mut rng, max_pairs, count)
        .into_iter()
        .map(|idx| {
            let (input, target) = pair_from_index(idx, n);
            PairSample {
                scene: Arc::clone(&scene),
                shard_id: Arc::clone(shard_id),
                scene_index,
                input,
                target,
            }
        })
        .collect()
}

/// Sequential pair stream over one shard. Holds one decoded scene at a
/// time. Corrupt scenes surface as errors and are skipped; I/O failures end
/// the stream after being reported.
pub struct ShardStream {
    reader: ShardReader<BufReader<File>>,
    shard_id: Arc<str>,
    opts: StreamOptions,
    scene_index: usize,
    queue: VecDeque<PairSample>,
}

pub fn stream_shard(shard: &Shard, opts: StreamOptions) -> Result<ShardStream, StreamError> {
    opts.validate()?;
    let reader = shard.reader().map_err(|source| StreamError::Shard {
        shard_id: shard.shard_id.clone(),
        source,
    })?;
    Ok(ShardStream {
        reader,
        shard_id: Arc::from(shard.shard_id.as_str()),
        opts,
        scene_index: 0,
        queue: VecDeque::new(),
    })
}

impl ShardStream {
    /// Decodes the next scene and returns its batch of pairs.
    fn next_batch(&mut self) -> Option<Result<Vec<PairSample>, StreamError>> {
        let item = self.reader.next()?;
        let index = self.scene_index;
        self.scene_index += 1;
        Some(match item {
            Ok(record) => Ok(pairs_for_scene(record, &self.shard_id, index, &self.opts)),
            Err(source) => Err(StreamError::Shard {
                shard_id: self.shard_id.to_string(),
                source,
            }),
        })
    }
}

impl Iterator for ShardStream {
    type Item = Result<PairSample, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(s) = self.queue.pop_front() {
                return Some(Ok(s));
            }
            match self.next_batch()? {
                Ok(batch) => self.queue.extend(batch),
                Err(e) => return Some(Err(e)),
            }
        }
    }
}

type Batch = Result<Vec<PairSample>, StreamError>;

/// Pair stream fed by worker threads, each reading whole shards.
pub struct ParallelStream {
    rx: Option<Receiver<Batch>>,
    workers: Vec<JoinHandle<()>>,
    queue: VecDeque<PairSample>,
}

/// Streams `shards` with `workers` reader threads merged through a bounded
/// queue. With one worker the order equals the shards read back to back.
pub fn parallel_stream(shards: &[Shard], workers: usize, opts: StreamOptions) -> Result<ParallelStream, StreamError> {
    opts.validate()?;
    if workers == 0 {
        return Err(StreamError::InvalidOptions("workers must be at least 1".into()));
    }
    // Each worker holds one scene, the consumer drains one more.
    let capacity = opts
        .scene_budget
        .checked_sub(workers + 1)
        .filter(|&c| c >= 1)
        .ok_or_else(|| {
            StreamError::InvalidOptions(format!(
                "scene budget {} too small for {workers} workers (need at least {})",
                opts.scene_budget,
                workers + 2
            ))
        })?;
    let (tx, rx) = bounded::<Batch>(capacity);
    let shards: Arc<[Shard]> = shards.into();
    let next = Arc::new(AtomicUsize::new(0));
    let handles = (0..workers.min(shards.len()))
        .map(|_| {
            let (tx, shards, next, opts) = (tx.clone(), Arc::clone(&shards), Arc::clone(&next), opts.clone());
            std::thread::spawn(move || loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(shard) = shards.get(k) else { return };
                let mut stream = match stream_shard(shard, opts.clone()) {
                    Ok(s) => s,
                    Err(e) => {
                        if tx.send(Err(e)).is_err() {
                            return;
                        }
                        continue;
                    }
                };
                while let Some(batch) = stream.next_batch() {
                    if matches!(&batch, Ok(b) if b.is_empty()) {
                        continue;
                    }
                    if tx.send(batch).is_err() {
                        return;
                    }
                }
            })
        })
        .collect();
    Ok(ParallelStream {
        rx: Some(rx),
        workers: handles,
        queue: VecDeque::new(),
    })
}

impl Iterator for ParallelStream {
    type Item = Result<PairSample, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(s) = self.queue.pop_front() {
                return Some(Ok(s));
            }
            let rx = self.rx.as_ref()?;
            match rx.recv() {
                Ok(Ok(batch)) => self.queue.extend(batch),
                Ok(Err(e)) => return Some(Err(e)),
                Err(_) => {
                    self.rx = None;
                    let panicked = self.workers.drain(..).fold(false, |p, h| h.join().is_err() || p);
                    return panicked.then_some(Err(StreamError::WorkerPanicked));
                }
            }
        }
    }
}

impl Drop for ParallelStream {
    fn drop(&mut self) {
        // Disconnecting makes blocked workers fail their send and exit.
        self.rx = None;
        self.queue.clear();
        for h in self.workers.drain(..) {
            let _ = h.join();
        }
    }
}

pub type BoxedPairStream = Box<dyn Iterator<Item = Result<PairSample, StreamError>> + Send>;

/// Something that can be streamed from the start, repeatedly.
pub trait StreamSource: Send {
    fn open(&self, epoch: u64) -> Result<BoxedPairStream, StreamError>;
}

/// A list of shards streamed with a fixed number of workers.
#[derive(Debug, Clone)]
pub struct ShardSet {
    pub shards: Vec<Shard>,
    pub workers: usize,
    pub options: StreamOptions,
}

impl StreamSource for ShardSet {
    fn open(&self, epoch: u64) -> Result<BoxedPairStream, StreamError> {
        let opts = StreamOptions {
            epoch,
            ..self.options.clone()
        };
        Ok(Box::new(parallel_stream(&self.shards, self.workers, opts)?))
    }
}

/// Weighted random interleaving of several sources.
pub struct Mixture {
    sources: Vec<Box<dyn StreamSource>>,
    streams: Vec<Option<BoxedPairStream>>,
    epochs: Vec<u64>,
    weights: Vec<f64>,
    dist: Option<WeightedIndex<f64>>,
    rng: ChaCha8Rng,
    one_epoch: bool,
}

/// Draws each sample from source `s` with probability `weights[s]`.
/// Exhausted sources restart with the next epoch unless `one_epoch` is
/// set, in which case they drop out and the remaining weights renormalize.
pub fn mix_streams(
    sources: Vec<Box<dyn StreamSource>>,
    weights: &[f64],
    seed: u64,
    one_epoch: bool,
) -> Result<Mixture, StreamError> {
    if sources.is_empty() {
        return Err(StreamError::InvalidOptions("at least one stream required".into()));
    }
    if weights.len() != sources.len() {
        return Err(StreamError::InvalidOptions(format!(
            "{} weights for {} streams",
            weights.len(),
            sources.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(StreamError::InvalidOptions("weights must be finite and non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(StreamError::InvalidOptions(format!("weights sum to {total}, expected 1")));
    }
    let dist = WeightedIndex::new(weights).map_err(|e| StreamError::InvalidOptions(e.to_string()))?;
    let n = sources.len();
    Ok(Mixture {
        sources,
        streams: (0..n).map(|_| None).collect(),
        epochs: vec![0; n],
        weights: weights.to_vec(),
        dist: Some(dist),
        rng: ChaCha8Rng::seed_from_u64(splitmix(seed ^ 0x6d69_7874)),
        one_epoch,
    })
}

impl Mixture {
    /// Removes `s` from the draw; `false` once nothing is left.
    fn retire(&mut self, s: usize) -> bool {
        self.weights[s] = 0.0;
        self.streams[s] = None;
        self.dist = WeightedIndex::new(&self.weights).ok();
        self.dist.is_some()
    }

    fn pull(&mut self, s: usize) -> Option<Result<PairSample, StreamError>> {
        if self.streams[s].is_none() {
            match self.sources[s].open(self.epochs[s]) {
                Ok(stream) => self.streams[s] = Some(stream),
                Err(e) => return Some(Err(e)),
            }
        }
        self.streams[s].as_mut().and_then(Iterator::next)
    }
}

impl Iterator for Mixture {
    type Item = Result<PairSample, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let s = self.dist.as_ref()?.sample(&mut self.rng);
            if let Some(item) = self.pull(s) {
                return Some(item);
            }
            // Source exhausted.
            self.streams[s] = None;
            self.epochs[s] += 1;
            if self.one_epoch {
                self.retire(s);
                continue;
            }
            match self.pull(s) {
                Some(item) => return Some(item),
                None => {
                    self.retire(s);
                    return Some(Err(StreamError::EmptySource(s)));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::write_shard;
    use crate::testutil::synthetic_scene;
    use std::collections::{BTreeSet, HashMap};
    use std::path::Path;

    fn make_shards(dir: &Path, shards: usize, scenes: usize, views: usize, seed: u64) -> Vec<Shard> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..shards)
            .map(|k| {
                let scenes: Vec<_> = (0..scenes)
                    .map(|i| synthetic_scene(&format!("k{k}s{i}"), views, &mut rng))
                    .collect();
                write_shard(&scenes, &dir.join(format!("shard-{seed}-{k}.tar"))).unwrap()
            })
            .collect()
    }

    fn ids(it: impl Iterator<Item = Result<PairSample, StreamError>>) -> Vec<String> {
        it.map(|s| s.unwrap().sample_id()).collect()
    }

    #[test]
    fn pair_index_mapping_is_a_bijection() {
        for n in 2..7 {
            let pairs: BTreeSet<_> = (0..n * (n - 1)).map(|k| pair_from_index(k, n)).collect();
            assert_eq!(pairs.len(), n * (n - 1));
            assert!(pairs.iter().all(|&(i, j)| i != j && i < n && j < n));
        }
    }

    #[test]
    fn two_views_at_rate_one_give_one_pair() {
        let dir = tempfile::tempdir().unwrap();
        for seed in 0..20 {
            let shards = make_shards(dir.path(), 1, 1, 2, seed);
            let opts = StreamOptions {
                rate: 1.0,
                seed,
                ..Default::default()
            };
            let pairs: Vec<_> = stream_shard(&shards[0], opts).unwrap().map(Result::unwrap).collect();
            assert_eq!(pairs.len(), 1);
            let p = (pairs[0].input_index(), pairs[0].target_index());
            assert!(p == (0, 1) || p == (1, 0));
        }
    }

    #[test]
    fn pairs_are_distinct_and_capped() {
        let dir = tempfile::tempdir().unwrap();
        let shards = make_shards(dir.path(), 1, 20, 3, 9);
        let opts = StreamOptions {
            rate: 50.0,
            ..Default::default()
        };
        let mut per_scene: HashMap<String, BTreeSet<(usize, usize)>> = HashMap::new();
        let mut total = 0;
        for s in stream_shard(&shards[0], opts).unwrap() {
            let s = s.unwrap();
            assert_ne!(s.input_index(), s.target_index());
            per_scene
                .entry(s.scene_id().to_string())
                .or_default()
                .insert((s.input_index(), s.target_index()));
            total += 1;
        }
        assert_eq!(total, 20 * 6);
        assert!(per_scene.values().all(|p| p.len() == 6));
    }

    #[test]
    fn poisson_mode_mean_tracks_rate() {
        let dir = tempfile::tempdir().unwrap();
        let shards = make_shards(dir.path(), 1, 400, 6, 10);
        let opts = StreamOptions {
            rate: 3.0,
            pair_count: PairCountMode::Poisson,
            ..Default::default()
        };
        let n = stream_shard(&shards[0], opts).unwrap().count() as f64 / 400.0;
        // sd of the mean ≈ sqrt(3/400) ≈ 0.087
        assert!((n - 3.0).abs() < 0.35, "{n}");
    }

    #[test]
    fn deterministic_and_worker_independent() {
        let dir = tempfile::tempdir().unwrap();
        let shards = make_shards(dir.path(), 5, 8, 4, 11);
        let opts = StreamOptions {
            rate: 2.5,
            seed: 77,
            ..Default::default()
        };
        let a = ids(parallel_stream(&shards, 1, opts.clone()).unwrap());
        let b = ids(parallel_stream(&shards, 1, opts.clone()).unwrap());
        assert_eq!(a, b);
        let sequential: Vec<String> = shards
            .iter()
            .flat_map(|s| ids(stream_shard(s, opts.clone()).unwrap()))
            .collect();
        assert_eq!(a, sequential);
        let mut c = ids(parallel_stream(&shards, 4, opts.clone()).unwrap());
        let mut a_sorted = a.clone();
        a_sorted.sort();
        c.sort();
        assert_eq!(a_sorted, c);
        let other_seed = ids(parallel_stream(&shards, 1, StreamOptions { seed: 78, ..opts }).unwrap());
        assert_ne!(a, other_seed);
    }

    #[test]
    fn zero_shards_is_empty() {
        assert_eq!(parallel_stream(&[], 3, StreamOptions::default()).unwrap().count(), 0);
    }

    #[test]
    fn rejects_bad_options() {
        let bad_rate = StreamOptions {
            rate: 0.0,
            ..Default::default()
        };
        assert!(parallel_stream(&[], 1, bad_rate).is_err());
        assert!(parallel_stream(&[], 0, StreamOptions::default()).is_err());
        let tight = StreamOptions {
            scene_budget: 3,
            ..Default::default()
        };
        assert!(parallel_stream(&[], 2, tight).is_err());
    }

    #[test]
    fn resident_scenes_stay_within_budget() {
        let dir = tempfile::tempdir().unwrap();
        let shards = make_shards(dir.path(), 4, 30, 3, 12);
        let gauge = ResidentGauge::new();
        let opts = StreamOptions {
            rate: 2.0,
            scene_budget: 6,
            gauge: Some(Arc::clone(&gauge)),
            ..Default::default()
        };
        let n = parallel_stream(&shards, 3, opts).unwrap().count();
        assert!(n > 0);
        assert!(gauge.peak() <= 6, "peak {}", gauge.peak());
        assert_eq!(gauge.current(), 0);
    }

    #[test]
    fn corrupt_shard_reports_its_id_and_others_continue() {
        let dir = tempfile::tempdir().unwrap();
        let shards = make_shards(dir.path(), 3, 4, 3, 13);
        // Truncate shard 1 in the middle of its second scene.
        let cut = shards[1].manifest.scenes[1].offset + 700;
        let bytes = std::fs::read(&shards[1].path).unwrap();
        std::fs::write(&shards[1].path, &bytes[..cut as usize]).unwrap();
        let opts = StreamOptions {
            rate: 10.0,
            ..Default::default()
        };
        let items: Vec<_> = parallel_stream(&shards, 2, opts).unwrap().collect();
        let errors: Vec<_> = items.iter().filter_map(|r| r.as_ref().err()).collect();
        assert_eq!(errors.len(), 1);
        match errors[0] {
            StreamError::Shard { shard_id, source } => {
                assert_eq!(shard_id, &shards[1].shard_id);
                assert!(!source.is_recoverable());
            }
            other => panic!("{other:?}"),
        }
        let shard_ids: BTreeSet<_> = items
            .iter()
            .filter_map(|r| r.as_ref().ok())
            .map(|s| s.shard_id().to_string())
            .collect();
        assert_eq!(shard_ids.len(), 3);
    }

    struct Counting {
        shard: Shard,
        opened: Arc<AtomicUsize>,
    }

    impl StreamSource for Counting {
        fn open(&self, epoch: u64) -> Result<BoxedPairStream, StreamError> {
            self.opened.fetch_add(1, Ordering::SeqCst);
            let opts = StreamOptions {
                rate: 1.0,
                epoch,
                ..Default::default()
            };
            Ok(Box::new(stream_shard(&self.shard, opts)?))
        }
    }

    fn counting_sources(dir: &Path, n: usize) -> (Vec<Box<dyn StreamSource>>, Vec<Arc<AtomicUsize>>) {
        let shards = make_shards(dir, n, 3, 2, 14);
        let opened: Vec<_> = (0..n).map(|_| Arc::new(AtomicUsize::new(0))).collect();
        let sources = shards
            .into_iter()
            .zip(&opened)
            .map(|(shard, o)| {
                Box::new(Counting {
                    shard,
                    opened: Arc::clone(o),
                }) as Box<dyn StreamSource>
            })
            .collect();
        (sources, opened)
    }

    #[test]
    fn mixture_follows_weights_and_restarts() {
        let dir = tempfile::tempdir().unwrap();
        let (sources, opened) = counting_sources(dir.path(), 3);
        let names: Vec<String> = (0..3).map(|k| format!("shard-14-{k}")).collect();
        let mut counts = [0usize; 3];
        for s in mix_streams(sources, &[1.0 / 3.0; 3], 5, false).unwrap().take(30_000) {
            let s = s.unwrap();
            counts[names.iter().position(|n| n == s.shard_id()).unwrap()] += 1;
        }
        let sigma = (30_000.0_f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for c in counts {
            assert!((c as f64 - 10_000.0).abs() < 3.0 * sigma, "{counts:?}");
        }
        // Each source holds 3 pairs, so ~10k draws forced thousands of restarts.
        assert!(opened.iter().all(|o| o.load(Ordering::SeqCst) > 1000));
    }

    #[test]
    fn mixture_zero_weight_is_never_polled() {
        let dir = tempfile::tempdir().unwrap();
        let (sources, opened) = counting_sources(dir.path(), 2);
        let n = mix_streams(sources, &[1.0, 0.0], 1, false).unwrap().take(50).count();
        assert_eq!(n, 50);
        assert_eq!(opened[1].load(Ordering::SeqCst), 0);
    }

    #[test]
    fn single_stream_mixture_is_passthrough() {
        let dir = tempfile::tempdir().unwrap();
        let shards = make_shards(dir.path(), 1, 5, 3, 15);
        let direct = ids(stream_shard(&shards[0], StreamOptions::default()).unwrap());
        let set = ShardSet {
            shards,
            workers: 1,
            options: StreamOptions::default(),
        };
        let mixed = ids(mix_streams(vec![Box::new(set)], &[1.0], 3, true).unwrap());
        assert_eq!(direct, mixed);
    }

    #[test]
    fn mixture_validates_weights() {
        let dir = tempfile::tempdir().unwrap();
        let (sources, _) = counting_sources(dir.path(), 2);
        assert!(mix_streams(sources, &[0.5, 0.6], 0, false).is_err());
        assert!(mix_streams(Vec::new(), &[], 0, false).is_err());
    }
}
