//! Deterministic protocol primitives shared by tags, detectors, the owner,
//! and the provider: the public hash family, framed slotted ALOHA execution,
//! and the opaque sealed-location model standing in for public-key
//! encryption.

use std::collections::BTreeSet;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::rng::splitmix64;
use crate::world::Location;

/// Unique tag identifier. Held by the object owner; detector and provider
/// code paths never receive one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TagId(u64);

impl TagId {
    pub fn from_raw(value: u64) -> Self {
        TagId(value)
    }

    pub fn random(rng: &mut impl RngCore) -> Self {
        TagId(rng.next_u64())
    }
}

/// Per-round, per-broadcast pseudonym under which a dummy tag answers.
/// Collisions across a run are tolerated; they only add slot overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pseudonym(u64);

impl Pseudonym {
    pub fn from_raw(value: u64) -> Self {
        Pseudonym(value)
    }

    pub fn random(rng: &mut impl RngCore) -> Self {
        Pseudonym(rng.next_u64())
    }
}

/// A responder in one ALOHA frame: the lost tag under its real id, or a
/// dummy tag under a fresh pseudonym. Both hash identically on the air.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Replier {
    Tag(TagId),
    Dummy(Pseudonym),
}

impl Replier {
    fn key(self) -> u64 {
        match self {
            Replier::Tag(TagId(v)) => v,
            Replier::Dummy(Pseudonym(v)) => v,
        }
    }
}

/// The k publicly known hash functions, realized as one keyed 64-bit mix
/// with the function index folded into the key and the output reduced mod f.
#[derive(Debug, Clone, Copy)]
pub struct HashFamily {
    hash_count: usize,
    domain_seed: u64,
}

impl HashFamily {
    pub fn new(hash_count: usize, domain_seed: u64) -> Result<Self> {
        if hash_count == 0 {
            return Err(Error::invalid("hash_count must be at least 1"));
        }
        Ok(HashFamily {
            hash_count,
            domain_seed,
        })
    }

    pub fn hash_count(&self) -> usize {
        self.hash_count
    }

    /// Slot h_alpha(id || round_seed) mod f, for alpha in [1, k].
    pub fn slot(&self, id: Replier, round_seed: u64, alpha: usize, frame_len: usize) -> Result<usize> {
        if frame_len == 0 {
            return Err(Error::invalid("frame_len must be at least 1"));
        }
        if alpha == 0 || alpha > self.hash_count {
            return Err(Error::invalid(format!(
                "hash index {alpha} outside [1, {}]",
                self.hash_count
            )));
        }
        let mut h = splitmix64(self.domain_seed ^ splitmix64(alpha as u64));
        h = splitmix64(h ^ round_seed);
        h = splitmix64(h ^ id.key());
        Ok((h % frame_len as u64) as usize)
    }

    /// The distinct slots a responder answers in one frame.
    pub fn reply_slots(&self, id: Replier, round_seed: u64, frame_len: usize) -> Result<BTreeSet<usize>> {
        let mut slots = BTreeSet::new();
        for alpha in 1..=self.hash_count {
            slots.insert(self.slot(id, round_seed, alpha, frame_len)?);
        }
        Ok(slots)
    }
}

/// Request digest H(id || nonce) used by the pre-polling phase. Only a
/// holder of the matching id can recognize the request as its own.
pub fn request_digest(id: TagId, nonce: u64) -> u64 {
    const DIGEST_DOMAIN: u64 = 0x6469_6765_7374_3634;
    splitmix64(splitmix64(DIGEST_DOMAIN ^ nonce) ^ id.0)
}

/// Occupancy bit vector reported by one detector for one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameVector {
    words: Vec<u64>,
    len: usize,
}

impl FrameVector {
    pub fn zeroed(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::invalid("frame length must be at least 1"));
        }
        Ok(FrameVector {
            words: vec![0; len.div_ceil(64)],
            len,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn set(&mut self, index: usize) {
        assert!(index < self.len, "bit index {index} out of range {}", self.len);
        self.words[index / 64] |= 1 << (index % 64);
    }

    pub fn get(&self, index: usize) -> bool {
        assert!(index < self.len, "bit index {index} out of range {}", self.len);
        self.words[index / 64] >> (index % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// Bitwise OR with a frame of the same length.
    pub fn or(&self, other: &FrameVector) -> Result<FrameVector> {
        if self.len != other.len {
            return Err(Error::protocol(format!(
                "frame length mismatch: {} vs {}",
                self.len, other.len
            )));
        }
        let words = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| a | b)
            .collect();
        Ok(FrameVector {
            words,
            len: self.len,
        })
    }

    /// The frame restricted to the given slot indices, in order.
    pub fn mask(&self, positions: &[usize]) -> Result<FrameVector> {
        let mut out = FrameVector::zeroed(positions.len().max(1))?;
        if positions.is_empty() {
            return Err(Error::invalid("mask positions must be non-empty"));
        }
        for (y, &slot) in positions.iter().enumerate() {
            if slot >= self.len {
                return Err(Error::invalid(format!(
                    "mask position {slot} outside frame of length {}",
                    self.len
                )));
            }
            if self.get(slot) {
                out.set(y);
            }
        }
        Ok(out)
    }
}

/// One polling request. `positions` carries the sorted polled slot indices
/// for the advanced scheme and is absent for the basic scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PollRequest {
    pub round_seed: u64,
    pub frame_len: usize,
    pub positions: Option<Vec<usize>>,
}

impl PollRequest {
    pub fn full_frame(round_seed: u64, frame_len: usize) -> Result<Self> {
        if frame_len == 0 {
            return Err(Error::invalid("frame_len must be at least 1"));
        }
        Ok(PollRequest {
            round_seed,
            frame_len,
            positions: None,
        })
    }

    pub fn selected(round_seed: u64, frame_len: usize, positions: Vec<usize>) -> Result<Self> {
        if frame_len == 0 {
            return Err(Error::invalid("frame_len must be at least 1"));
        }
        if positions.is_empty() {
            return Err(Error::invalid("polled positions must be non-empty"));
        }
        for pair in positions.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::invalid("polled positions must be strictly increasing"));
            }
        }
        if *positions.last().unwrap() >= frame_len {
            return Err(Error::invalid(format!(
                "polled position {} outside frame of length {}",
                positions.last().unwrap(),
                frame_len
            )));
        }
        Ok(PollRequest {
            round_seed,
            frame_len,
            positions: Some(positions),
        })
    }
}

/// Communication and computation deltas from executing one frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FrameDelta {
    /// One-bit responses emitted, counted per (responder, slot) pair.
    pub responses: u64,
    /// Hash invocations performed by responders.
    pub hash_ops: u64,
}

/// Executes one full framed slotted ALOHA frame. Bit y is 1 iff at least one
/// responder replied in slot y; singleton and collision slots are not
/// distinguished.
pub fn run_frame(
    repliers: &[Replier],
    round_seed: u64,
    frame_len: usize,
    family: &HashFamily,
) -> Result<(FrameVector, FrameDelta)> {
    let mut frame = FrameVector::zeroed(frame_len)?;
    let mut delta = FrameDelta::default();
    for &replier in repliers {
        let slots = family.reply_slots(replier, round_seed, frame_len)?;
        delta.hash_ops += family.hash_count() as u64;
        delta.responses += slots.len() as u64;
        for slot in slots {
            frame.set(slot);
        }
    }
    Ok((frame, delta))
}

/// Executes one selectively polled frame. Responders compute their k slots,
/// then answer only in the polled positions that match; the result has one
/// bit per polled position.
pub fn run_selected_frame(
    repliers: &[Replier],
    request: &PollRequest,
    family: &HashFamily,
) -> Result<(FrameVector, FrameDelta)> {
    let positions = request
        .positions
        .as_deref()
        .ok_or_else(|| Error::invalid("selected frame requires polled positions"))?;
    let mut frame = FrameVector::zeroed(positions.len())?;
    let mut delta = FrameDelta::default();
    for &replier in repliers {
        let slots = family.reply_slots(replier, request.round_seed, request.frame_len)?;
        delta.hash_ops += family.hash_count() as u64;
        for slot in slots {
            if let Ok(y) = positions.binary_search(&slot) {
                frame.set(y);
                delta.responses += 1;
            }
        }
    }
    Ok((frame, delta))
}

/// Handle to the owner's decryption capability. Holding the value is the
/// capability; no other party can open sealed locations.
#[derive(Debug)]
pub struct OwnerKey {
    id: u64,
}

impl OwnerKey {
    pub fn generate(rng: &mut impl RngCore) -> Self {
        OwnerKey { id: rng.next_u64() }
    }

    pub fn id(&self) -> u64 {
        self.id
    }
}

/// A detector's location report sealed to the owner's key. The payload is
/// private to this module; the provider can hold and forward sealed values
/// but has no accessor for their contents.
#[derive(Debug, Clone, PartialEq)]
pub struct SealedLocation {
    key_id: u64,
    blind: u64,
    pseudonym: Pseudonym,
    location: Location,
}

impl SealedLocation {
    pub fn key_id(&self) -> u64 {
        self.key_id
    }
}

/// Seals a (pseudonym, location) payload to the owner's key. Sealing the
/// same payload twice yields distinct values.
pub fn seal_location(
    location: Location,
    pseudonym: Pseudonym,
    key: &OwnerKey,
    rng: &mut impl RngCore,
) -> SealedLocation {
    SealedLocation {
        key_id: key.id,
        blind: rng.next_u64(),
        pseudonym,
        location,
    }
}

/// Opens a sealed location with the owner key it was sealed to.
pub fn open_location(sealed: &SealedLocation, key: &OwnerKey) -> (Pseudonym, Location) {
    assert_eq!(
        sealed.key_id, key.id,
        "sealed location opened with a mismatched key"
    );
    (sealed.pseudonym, sealed.location)
}
