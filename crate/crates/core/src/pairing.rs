//! Pair construction for Siamese training: positive/negative enumeration,
//! defense pairs, and a memory-bounded balanced reservoir over the negative
//! stream.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::signal::{
    inject_noise, spectrogram, Denoiser, NoiseSpec, SensorTrace, SignalError, SpectrogramImage,
    StftConfig,
};

/// Where a pooled sample came from. Obfuscation-defense samples never label
/// positive, no matter whose subject id they carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleOrigin {
    Genuine,
    DefenseNoised,
    DefenseDenoised,
}

/// Owns every spectrogram a training run can pair; pairs reference entries by
/// index so a pair is two words and a label.
#[derive(Debug, Clone, Default)]
pub struct SamplePool {
    entries: Vec<(SpectrogramImage, SampleOrigin)>,
}

impl SamplePool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, image: SpectrogramImage, origin: SampleOrigin) -> usize {
        self.entries.push((image, origin));
        self.entries.len() - 1
    }

    /// Spectrogram a whole trace and pool every image; returns the new ids in
    /// segment order.
    pub fn add_trace(
        &mut self,
        trace: &SensorTrace,
        cfg: &StftConfig,
        origin: SampleOrigin,
    ) -> Result<Vec<usize>, SignalError> {
        Ok(spectrogram(trace, cfg)?
            .into_iter()
            .map(|img| self.push(img, origin))
            .collect())
    }

    pub fn image(&self, id: usize) -> &SpectrogramImage {
        &self.entries[id].0
    }

    pub fn origin(&self, id: usize) -> SampleOrigin {
        self.entries[id].1
    }

    pub fn subject(&self, id: usize) -> &str {
        &self.entries[id].0.subject_id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The labeling rule: positive iff same subject and both sides genuine.
    pub fn label_for(&self, left: usize, right: usize) -> u8 {
        let genuine = self.origin(left) == SampleOrigin::Genuine
            && self.origin(right) == SampleOrigin::Genuine;
        (genuine && self.subject(left) == self.subject(right)) as u8
    }

    /// Human-readable audit id: subject:segment, with a defense marker.
    pub fn sample_id(&self, id: usize) -> String {
        let (img, origin) = &self.entries[id];
        let tag = match origin {
            SampleOrigin::Genuine => "",
            SampleOrigin::DefenseNoised => "+noise",
            SampleOrigin::DefenseDenoised => "+denoise",
        };
        format!("{}:{}{}", img.subject_id, img.segment_index, tag)
    }
}

/// One training pair: two pool ids and the similarity label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairRecord {
    pub left: usize,
    pub right: usize,
    /// 1 = similar, 0 = dissimilar.
    pub y: u8,
}

/// Lazily enumerate the r² positive pairs (owner × owner, self-pairs
/// included) and the n_s·r·s negative pairs (owner × each negative-class
/// sample).
pub fn enumerate_pairs<'a>(
    owner: &'a [usize],
    negative_classes: &'a [Vec<usize>],
) -> (
    impl Iterator<Item = PairRecord> + 'a,
    impl Iterator<Item = PairRecord> + 'a,
) {
    let positives = owner.iter().flat_map(move |&l| {
        owner.iter().map(move |&r| PairRecord { left: l, right: r, y: 1 })
    });
    let negatives = negative_classes.iter().flat_map(move |class| {
        owner.iter().flat_map(move |&l| {
            class.iter().map(move |&r| PairRecord { left: l, right: r, y: 0 })
        })
    });
    (positives, negatives)
}

/// Balanced sample reservoir: R positive slots and R negative slots (2R
/// total). Each half admits its first R records unconditionally; record T>R
/// replaces a uniformly random resident with probability R/T, leaving the
/// half a uniform random R-subset of its stream.
#[derive(Debug, Clone)]
pub struct ReservoirBuffer {
    capacity_r: usize,
    positives: Vec<PairRecord>,
    negatives: Vec<PairRecord>,
    seen_positives: u64,
    seen_negatives: u64,
    max_resident: usize,
    rng: ChaCha8Rng,
    seed: u64,
}

impl ReservoirBuffer {
    pub fn new(capacity_r: usize, seed: u64) -> Self {
        assert!(capacity_r >= 1, "reservoir capacity must be at least 1");
        Self {
            capacity_r,
            positives: Vec::new(),
            negatives: Vec::new(),
            seen_positives: 0,
            seen_negatives: 0,
            max_resident: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
        }
    }

    fn admit(
        slot: &mut Vec<PairRecord>,
        seen: &mut u64,
        capacity: usize,
        rng: &mut ChaCha8Rng,
        record: PairRecord,
    ) {
        *seen += 1;
        if slot.len() < capacity {
            slot.push(record);
        } else {
            // Draw u ~ U{0..T}; u < R both decides replacement (prob R/T) and
            // picks the victim uniformly.
            let u = rng.gen_range(0..*seen);
            if u < capacity as u64 {
                slot[u as usize] = record;
            }
        }
    }

    pub fn admit_positives(&mut self, stream: impl IntoIterator<Item = PairRecord>) {
        for rec in stream {
            debug_assert_eq!(rec.y, 1);
            Self::admit(
                &mut self.positives,
                &mut self.seen_positives,
                self.capacity_r,
                &mut self.rng,
                rec,
            );
            self.max_resident = self.max_resident.max(self.resident());
        }
    }

    pub fn admit_negatives(&mut self, stream: impl IntoIterator<Item = PairRecord>) {
        for rec in stream {
            debug_assert_eq!(rec.y, 0);
            Self::admit(
                &mut self.negatives,
                &mut self.seen_negatives,
                self.capacity_r,
                &mut self.rng,
                rec,
            );
            self.max_resident = self.max_resident.max(self.resident());
        }
    }

    pub fn positives(&self) -> &[PairRecord] {
        &self.positives
    }

    pub fn negatives(&self) -> &[PairRecord] {
        &self.negatives
    }

    /// Per-half slot capacity R; total capacity is 2R.
    pub fn capacity_r(&self) -> usize {
        self.capacity_r
    }

    pub fn resident(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    /// Peak resident pair count observed during fills (the memory bound).
    pub fn max_resident(&self) -> usize {
        self.max_resident
    }

    /// Total records offered across both halves.
    pub fn records_seen(&self) -> u64 {
        self.seen_positives + self.seen_negatives
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Audit dump: `left_id,right_id,y` per resident pair, positives first.
    pub fn write_csv(&self, pool: &SamplePool, path: &Path) -> Result<(), SignalError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["left_id", "right_id", "y"])?;
        for rec in self.positives.iter().chain(&self.negatives) {
            w.write_record([
                pool.sample_id(rec.left),
                pool.sample_id(rec.right),
                rec.y.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fill the negative half of a fresh reservoir from a stream.
pub fn reservoir_fill(
    stream: impl IntoIterator<Item = PairRecord>,
    capacity_r: usize,
    seed: u64,
) -> ReservoirBuffer {
    let mut buf = ReservoirBuffer::new(capacity_r, seed);
    buf.admit_negatives(stream);
    buf
}

/// Build obfuscation-defense negatives for one genuine trace whose images are
/// already pooled (`genuine_ids`, segment-aligned). Per noise spec: the pair
/// (genuine, noised) for every segment, then (genuine, denoised(noised)) for
/// every configured denoiser — all labeled dissimilar.
pub fn make_defense_pairs(
    pool: &mut SamplePool,
    genuine_trace: &SensorTrace,
    genuine_ids: &[usize],
    cfg: &StftConfig,
    noise_specs: &[NoiseSpec],
    denoisers: &[Denoiser],
) -> Result<Vec<PairRecord>, SignalError> {
    assert_eq!(
        genuine_ids.len(),
        cfg.image_count(genuine_trace.len()),
        "genuine_ids must cover the trace's segments"
    );
    let mut pairs = Vec::new();
    let pair_against = |pool: &mut SamplePool,
                            treated: &SensorTrace,
                            origin: SampleOrigin,
                            pairs: &mut Vec<PairRecord>|
     -> Result<(), SignalError> {
        let treated_ids = pool.add_trace(treated, cfg, origin)?;
        debug_assert_eq!(treated_ids.len(), genuine_ids.len());
        for (&g, &t) in genuine_ids.iter().zip(&treated_ids) {
            pairs.push(PairRecord { left: g, right: t, y: 0 });
        }
        Ok(())
    };
    for spec in noise_specs {
        let noised = inject_noise(genuine_trace, spec);
        pair_against(pool, &noised, SampleOrigin::DefenseNoised, &mut pairs)?;
        for den in denoisers {
            let denoised = den.apply_trace(&noised);
            pair_against(pool, &denoised, SampleOrigin::DefenseDenoised, &mut pairs)?;
        }
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{synth_gait, SyntheticSubjectSpec};
    use proptest::prelude::*;

    fn rec(left: usize, right: usize, y: u8) -> PairRecord {
        PairRecord { left, right, y }
    }

    #[test]
    fn pair_counts_match_the_budget() {
        let owner = [0, 1, 2];
        let classes = vec![vec![3, 4], vec![5, 6], vec![7, 8], vec![9, 10]];
        let (pos, neg) = enumerate_pairs(&owner, &classes);
        let pos: Vec<_> = pos.collect();
        let neg: Vec<_> = neg.collect();
        assert_eq!(pos.len(), 9); // r²
        assert_eq!(neg.len(), 24); // n_s·r·s
        assert!(pos.iter().all(|p| p.y == 1));
        assert!(neg.iter().all(|p| p.y == 0));
        assert!(pos.contains(&rec(1, 1, 1)), "self-pairs included");
    }

    #[test]
    fn degenerate_enumerations() {
        let (pos, neg) = enumerate_pairs(&[0, 1, 2], &[]);
        assert_eq!((pos.count(), neg.count()), (9, 0));
        let single = [vec![1]];
        let (pos, neg) = enumerate_pairs(&[7], &single);
        let pos: Vec<_> = pos.collect();
        assert_eq!(pos, vec![rec(7, 7, 1)]);
        assert_eq!(neg.count(), 1);
    }

    #[test]
    fn short_stream_is_kept_whole() {
        let stream: Vec<_> = (0..4).map(|i| rec(0, i, 0)).collect();
        let buf = reservoir_fill(stream.clone(), 4, 9);
        assert_eq!(buf.negatives(), &stream[..]);
        assert_eq!(buf.records_seen(), 4);
        let empty = reservoir_fill(std::iter::empty(), 4, 9);
        assert!(empty.negatives().is_empty());
    }

    #[test]
    fn fill_is_deterministic_per_seed() {
        let stream: Vec<_> = (0..100).map(|i| rec(0, i, 0)).collect();
        let a = reservoir_fill(stream.clone(), 8, 42);
        let b = reservoir_fill(stream.clone(), 8, 42);
        let c = reservoir_fill(stream, 8, 43);
        assert_eq!(a.negatives(), b.negatives());
        assert_ne!(a.negatives(), c.negatives());
    }

    /// Monte Carlo vs the uniform-subset oracle: every element of a length-5
    /// stream should land in an R=2 reservoir with frequency 2/5.
    #[test]
    fn reservoir_inclusion_is_uniform() {
        let n = 5usize;
        let r = 2usize;
        let trials = 20_000u32;
        let mut counts = vec![0u32; n];
        for t in 0..trials {
            let stream = (0..n).map(|i| rec(0, i, 0));
            let buf = reservoir_fill(stream, r, 1000 + t as u64);
            for p in buf.negatives() {
                counts[p.right] += 1;
            }
        }
        let expect = trials as f64 * r as f64 / n as f64;
        let mut chi2 = 0.0;
        for (i, &c) in counts.iter().enumerate() {
            let freq = c as f64 / trials as f64;
            assert!(
                (freq - r as f64 / n as f64).abs() < 0.02,
                "element {i}: inclusion {freq}"
            );
            chi2 += (c as f64 - expect) * (c as f64 - expect) / expect;
        }
        // 4 degrees of freedom; 13.28 is the 0.01 upper tail.
        assert!(chi2 < 13.28, "chi-square {chi2}");
    }

    #[test]
    fn memory_bound_holds_under_interleaved_fills() {
        let r = 16usize;
        let mut buf = ReservoirBuffer::new(r, 3);
        buf.admit_positives((0..r).map(|i| rec(i, i, 1)));
        buf.admit_negatives((0..500).map(|i| rec(0, i, 0)));
        buf.admit_negatives((0..500).map(|i| rec(1, i, 0)));
        assert_eq!(buf.resident(), 2 * r);
        assert_eq!(buf.max_resident(), 2 * r);
        assert_eq!(buf.records_seen(), (r + 1000) as u64);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// The reservoir never outgrows its half, keeps only stream members,
        /// and its instrumented peak respects the 2R bound.
        #[test]
        fn reservoir_respects_bounds(len in 0usize..300, r in 1usize..32, seed in 0u64..1000) {
            let buf = reservoir_fill((0..len).map(|i| rec(0, i, 0)), r, seed);
            prop_assert_eq!(buf.negatives().len(), len.min(r));
            prop_assert!(buf.max_resident() <= 2 * r);
            prop_assert!(buf.negatives().iter().all(|p| p.right < len));
            // No duplicate stream elements: each admitted at most once.
            let mut seen: Vec<_> = buf.negatives().iter().map(|p| p.right).collect();
            seen.sort_unstable();
            seen.dedup();
            prop_assert_eq!(seen.len(), buf.negatives().len());
        }
    }

    fn pooled_walker(seed: u64) -> (SamplePool, SensorTrace, Vec<usize>, StftConfig) {
        let cfg = StftConfig::default();
        let spec = SyntheticSubjectSpec::random("owner", seed);
        // Two images' worth of samples.
        let trace = synth_gait(&spec, 14.0, 50.0);
        let mut pool = SamplePool::new();
        let ids = pool.add_trace(&trace, &cfg, SampleOrigin::Genuine).unwrap();
        assert_eq!(ids.len(), 2);
        (pool, trace, ids, cfg)
    }

    #[test]
    fn defense_pairs_count_and_label() {
        let (mut pool, trace, ids, cfg) = pooled_walker(1);
        let specs = [NoiseSpec::gaussian(1.0, 50.0, 7)];
        let denoisers = [Denoiser::Tv { lambda: 0.5 }, Denoiser::GaussianFilter { sigma: 2.0 }];
        let pairs =
            make_defense_pairs(&mut pool, &trace, &ids, &cfg, &specs, &denoisers).unwrap();
        // Per genuine image: 1 noised + 2 denoised pairs.
        assert_eq!(pairs.len(), ids.len() * 3);
        for p in &pairs {
            assert_eq!(p.y, 0);
            // Same subject on both sides, yet the pool's rule still says 0.
            assert_eq!(pool.subject(p.left), pool.subject(p.right));
            assert_eq!(pool.label_for(p.left, p.right), 0);
        }
        let noised = pairs
            .iter()
            .filter(|p| pool.origin(p.right) == SampleOrigin::DefenseNoised)
            .count();
        assert_eq!(noised, ids.len());
    }

    #[test]
    fn no_treatments_no_pairs() {
        let (mut pool, trace, ids, cfg) = pooled_walker(2);
        let pairs = make_defense_pairs(&mut pool, &trace, &ids, &cfg, &[], &[]).unwrap();
        assert!(pairs.is_empty());
        assert_eq!(pool.len(), ids.len());
    }

    #[test]
    fn genuine_pairs_label_positive_only_within_subject() {
        let cfg = StftConfig::default();
        let mut pool = SamplePool::new();
        let a = synth_gait(&SyntheticSubjectSpec::random("alice", 3), 8.0, 50.0);
        let b = synth_gait(&SyntheticSubjectSpec::random("bob", 4), 8.0, 50.0);
        let ia = pool.add_trace(&a, &cfg, SampleOrigin::Genuine).unwrap();
        let ib = pool.add_trace(&b, &cfg, SampleOrigin::Genuine).unwrap();
        assert_eq!(pool.label_for(ia[0], ia[0]), 1);
        assert_eq!(pool.label_for(ia[0], ib[0]), 0);
    }

    #[test]
    fn audit_dump_lists_every_resident_pair() {
        let (mut pool, trace, ids, cfg) = pooled_walker(5);
        let specs = [NoiseSpec::gaussian(1.0, 50.0, 11)];
        let defense =
            make_defense_pairs(&mut pool, &trace, &ids, &cfg, &specs, &[]).unwrap();
        let (pos, _) = enumerate_pairs(&ids, &[]);
        let mut buf = ReservoirBuffer::new(4, 8);
        buf.admit_positives(pos);
        buf.admit_negatives(defense);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.csv");
        buf.write_csv(&pool, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("left_id,right_id,y"));
        let rows: Vec<_> = lines.collect();
        assert_eq!(rows.len(), buf.resident());
        assert!(rows.iter().any(|r| r.contains("+noise")));
    }
}
