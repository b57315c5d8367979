//! The object owner's side of both schemes: issuing the initial request,
//! driving polling rounds, eliminating candidates, sizing the real-position
//! count under the chi-squared indistinguishability gate, terminating, and
//! turning retrieved locations into an estimate.

use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;

use crate::analysis;
use crate::error::{Error, Result};
use crate::numeric::chi_sq1_upper;
use crate::protocol::{
    open_location, request_digest, FrameVector, HashFamily, OwnerKey, Pseudonym, Replier,
    SealedLocation, TagId,
};
use crate::world::Location;

/// Which polling scheme the owner runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Full f-bit frames, elimination on every reply slot.
    Basic,
    /// Selective polling of omega positions with a tuned real/dummy split.
    Advanced,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Basic => "basic",
            Scheme::Advanced => "advanced",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basic" => Ok(Scheme::Basic),
            "advanced" => Ok(Scheme::Advanced),
            other => Err(Error::invalid(format!(
                "unknown scheme '{other}' (expected basic|advanced)"
            ))),
        }
    }
}

/// Protocol parameters the owner works from.
#[derive(Debug, Clone, Copy)]
pub struct OwnerParams {
    pub scheme: Scheme,
    pub frame_len: usize,
    pub hash_count: usize,
    /// Positions polled per round in the advanced scheme (omega).
    pub polled: usize,
    /// Gate threshold on the indistinguishability p-value.
    pub p_thre: f64,
    pub dummy_prob: f64,
    /// Publicly known average neighbor count (c), from the deployment
    /// density; the gate works from this, not from any private geometry.
    pub avg_neighbors: f64,
}

/// Decision of the stop rule after a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Stop,
}

/// The owner's evolving view of one object-finding run.
#[derive(Debug, Clone)]
pub struct OwnerState {
    params: OwnerParams,
    lost_id: TagId,
    candidates: BTreeSet<usize>,
    round: u32,
    /// Bit-one counts of the previous round's polled vectors, per surviving
    /// candidate. Only the most recent round is kept: the gate's observed
    /// window is the 2-omega concatenation of last round and next round.
    bit_counts: BTreeMap<usize, u32>,
    initial_bit_count: u32,
    stall: u32,
    clamped_gamma_rounds: u32,
}

/// Polled-position layout for one advanced round.
#[derive(Debug, Clone)]
pub struct PositionPlan {
    /// Number of real positions polled.
    pub gamma: usize,
    /// The real positions, a subset of the tag's reply slots this round.
    pub real_slots: Vec<usize>,
    /// All polled slot indices, strictly increasing, length omega.
    pub positions: Vec<usize>,
    /// Indices into `positions` that are real.
    pub real_indices: Vec<usize>,
    /// True when the gate returned less than one and the floor applied.
    pub clamped: bool,
}

impl OwnerState {
    pub fn new(params: OwnerParams, lost_id: TagId, detector_count: usize) -> Result<Self> {
        if params.frame_len == 0 {
            return Err(Error::invalid("frame_len must be at least 1"));
        }
        if params.hash_count == 0 {
            return Err(Error::invalid("hash_count must be at least 1"));
        }
        if params.scheme == Scheme::Advanced
            && (params.polled == 0 || params.polled > params.frame_len)
        {
            return Err(Error::invalid(format!(
                "polled positions {} must lie in [1, frame_len {}]",
                params.polled, params.frame_len
            )));
        }
        if !(0.0..=1.0).contains(&params.p_thre) {
            return Err(Error::invalid("p_thre must lie in [0, 1]"));
        }
        let p_prime = analysis::p1_prime(
            params.frame_len,
            params.hash_count,
            params.dummy_prob,
            params.avg_neighbors,
        );
        let initial_bit_count = (p_prime * params.polled as f64).ceil() as u32;
        Ok(OwnerState {
            params,
            lost_id,
            candidates: (0..detector_count).collect(),
            round: 0,
            bit_counts: BTreeMap::new(),
            initial_bit_count,
            stall: 0,
            clamped_gamma_rounds: 0,
        })
    }

    pub fn params(&self) -> &OwnerParams {
        &self.params
    }

    pub fn candidates(&self) -> &BTreeSet<usize> {
        &self.candidates
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn stall_rounds(&self) -> u32 {
        self.stall
    }

    pub fn clamped_gamma_rounds(&self) -> u32 {
        self.clamped_gamma_rounds
    }

    fn prev_ones(&self, detector: usize) -> u32 {
        self.bit_counts
            .get(&detector)
            .copied()
            .unwrap_or(self.initial_bit_count)
    }

    fn finish_round(&mut self, survivors: BTreeSet<usize>) {
        let changed = survivors != self.candidates;
        self.candidates = survivors;
        self.round += 1;
        if changed {
            self.stall = 0;
        } else {
            self.stall += 1;
        }
    }

    /// One basic-scheme round: a candidate survives only if its frame shows
    /// a one at every reply slot of the lost tag.
    pub fn basic_round(
        &mut self,
        family: &HashFamily,
        round_seed: u64,
        frames: &[FrameVector],
    ) -> Result<()> {
        for frame in frames {
            if frame.len() != self.params.frame_len {
                return Err(Error::protocol(format!(
                    "frame length {} does not match frame_len {}",
                    frame.len(),
                    self.params.frame_len
                )));
            }
        }
        let slots = family.reply_slots(Replier::Tag(self.lost_id), round_seed, self.params.frame_len)?;
        let survivors: BTreeSet<usize> = self
            .candidates
            .iter()
            .copied()
            .filter(|&i| {
                frames
                    .get(i)
                    .map(|frame| slots.iter().all(|&s| frame.get(s)))
                    .unwrap_or(false)
            })
            .collect();
        self.finish_round(survivors);
        Ok(())
    }

    /// The largest real-position count for one candidate that keeps the
    /// expected 2-omega window statistically indistinguishable from the
    /// no-tag distribution. Returns -1 when even zero real positions fail
    /// the gate; the caller floors the final choice at one.
    fn gate_gamma(&self, prev_ones: u32) -> Result<i64> {
        let p = &self.params;
        let omega = p.polled as f64;
        let window = 2.0 * omega;
        let p_prime =
            analysis::p1_prime(p.frame_len, p.hash_count, p.dummy_prob, p.avg_neighbors);
        if !(p_prime > 0.0 && p_prime < 1.0) {
            return Err(Error::invalid(format!(
                "expected one-probability {p_prime} must lie strictly inside (0, 1)"
            )));
        }
        let cap = p.hash_count.min(p.polled) as i64;
        let mut gamma: i64 = 0;
        let mut p_val = 1.0f64;
        while p_val > p.p_thre {
            let g = gamma as f64;
            let p_hat = p_prime * (omega - g) / omega + g / omega;
            let p_ob = (p_hat * omega + prev_ones as f64) / window;
            // Pearson statistic over the 2*omega observed bits. The
            // proportions expression alone is bounded near one p-value-wise
            // and would leave the gate inert at any practical threshold.
            let chi = window * proportions_chi_sq(p_ob, p_prime)?;
            p_val = chi_sq1_upper(chi);
            if p_val > p.p_thre {
                if gamma == cap {
                    return Ok(cap);
                }
                gamma += 1;
            } else {
                return Ok(gamma - 1);
            }
        }
        // reached only when p_thre >= 1: the sentinel exits before any probe
        Ok(gamma)
    }

    /// Chooses the polled positions for the next advanced round: the gate
    /// minimum over candidates, floored at one, capped by the hash count,
    /// omega, and the tag's distinct reply slots this round; padded with
    /// dummy positions drawn uniformly from the remaining slots.
    pub fn plan_positions(
        &mut self,
        family: &HashFamily,
        round_seed: u64,
        rng: &mut impl RngCore,
    ) -> Result<PositionPlan> {
        let p = self.params;
        if p.polled > p.frame_len {
            return Err(Error::invalid(format!(
                "polled positions {} exceed frame_len {}",
                p.polled, p.frame_len
            )));
        }
        let reply: Vec<usize> = family
            .reply_slots(Replier::Tag(self.lost_id), round_seed, p.frame_len)?
            .into_iter()
            .collect();
        let cap = p.hash_count.min(p.polled) as i64;
        let mut gamma_min = cap;
        for &i in &self.candidates {
            let g = self.gate_gamma(self.prev_ones(i))?;
            if g < gamma_min {
                gamma_min = g;
            }
        }
        let upper = cap.min(reply.len() as i64).max(1) as usize;
        let clamped = gamma_min < 1;
        if clamped {
            self.clamped_gamma_rounds += 1;
        }
        let gamma = (gamma_min.max(1) as usize).min(upper);

        // gamma real slots uniformly from the tag's distinct reply slots
        let mut pool = reply.clone();
        for i in 0..gamma {
            let j = i + (rng.next_u64() as usize) % (pool.len() - i);
            pool.swap(i, j);
        }
        let mut real_slots: Vec<usize> = pool[..gamma].to_vec();
        real_slots.sort_unstable();

        // dummy positions uniformly from the slots outside the real set
        let real_mask: Vec<bool> = {
            let mut mask = vec![false; p.frame_len];
            for &s in &real_slots {
                mask[s] = true;
            }
            mask
        };
        let mut complement: Vec<usize> = (0..p.frame_len).filter(|&s| !real_mask[s]).collect();
        let dummy_count = p.polled - gamma;
        for i in 0..dummy_count {
            let j = i + (rng.next_u64() as usize) % (complement.len() - i);
            complement.swap(i, j);
        }
        let mut positions: Vec<usize> = real_slots
            .iter()
            .copied()
            .chain(complement[..dummy_count].iter().copied())
            .collect();
        positions.sort_unstable();
        let real_indices: Vec<usize> = real_slots
            .iter()
            .map(|s| positions.binary_search(s).expect("real slot polled"))
            .collect();
        Ok(PositionPlan {
            gamma,
            real_slots,
            positions,
            real_indices,
            clamped,
        })
    }

    /// One advanced-scheme round: elimination looks only at the real
    /// positions; surviving candidates' bit counts feed the next gate.
    pub fn advanced_round(&mut self, frames: &[FrameVector], plan: &PositionPlan) -> Result<()> {
        for frame in frames {
            if frame.len() != plan.positions.len() {
                return Err(Error::protocol(format!(
                    "polled vector length {} does not match omega {}",
                    frame.len(),
                    plan.positions.len()
                )));
            }
        }
        let survivors: BTreeSet<usize> = self
            .candidates
            .iter()
            .copied()
            .filter(|&i| {
                frames
                    .get(i)
                    .map(|frame| plan.real_indices.iter().all(|&y| frame.get(y)))
                    .unwrap_or(false)
            })
            .collect();
        let mut counts = BTreeMap::new();
        for &i in &survivors {
            counts.insert(i, frames[i].count_ones());
        }
        self.bit_counts = counts;
        self.finish_round(survivors);
        Ok(())
    }

    /// Stop once a single candidate remains or the set has not changed for
    /// `stall_rounds` consecutive rounds.
    pub fn check_termination(&self, stall_rounds: u32) -> Decision {
        debug_assert!(stall_rounds >= 2);
        if self.candidates.len() <= 1 || self.stall >= stall_rounds {
            Decision::Stop
        } else {
            Decision::Continue
        }
    }
}

/// Chi-squared statistic of observed versus expected one-frequency, in the
/// printed two-term proportions form.
fn proportions_chi_sq(p_ob: f64, p_expected: f64) -> Result<f64> {
    if !(p_expected > 0.0 && p_expected < 1.0) {
        return Err(Error::invalid(format!(
            "expected frequency {p_expected} must lie strictly inside (0, 1)"
        )));
    }
    if !(0.0..=1.0).contains(&p_ob) {
        return Err(Error::invalid(format!(
            "observed frequency {p_ob} must lie in [0, 1]"
        )));
    }
    let delta = p_ob - p_expected;
    Ok(delta * delta / p_expected + delta * delta / (1.0 - p_expected))
}

/// P-value of the observed one-frequency against the expected one under a
/// one-degree-of-freedom chi-squared distribution, with the statistic in
/// its printed proportions form and the tail evaluated through
/// p = erfc(sqrt(chi^2 / 2)).
pub fn chi_square_p_value(p_ob: f64, p_expected: f64) -> Result<f64> {
    Ok(chi_sq1_upper(proportions_chi_sq(p_ob, p_expected)?))
}

/// The owner's broadcastable pre-polling request: a digest only the lost
/// tag can recognize, the nonce it was computed under, and the key handle
/// detectors seal their location reports to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InitialRequest {
    pub digest: u64,
    pub nonce: u64,
    pub key_id: u64,
}

pub fn initial_request(lost_id: TagId, key: &OwnerKey, rng: &mut impl RngCore) -> InitialRequest {
    let nonce = rng.next_u64();
    InitialRequest {
        digest: request_digest(lost_id, nonce),
        nonce,
        key_id: key.id(),
    }
}

impl InitialRequest {
    /// A tag recognizes the request by hashing its own id with the nonce.
    pub fn matches(&self, id: TagId) -> bool {
        request_digest(id, self.nonce) == self.digest
    }
}

/// What one retrieval interaction produced.
#[derive(Debug, Clone)]
pub struct RetrievalOutcome {
    /// Detector indices requested; this set is what the provider observes.
    pub requested: Vec<usize>,
    /// All opened payloads, candidates and decoys alike.
    pub opened: Vec<(Pseudonym, Location)>,
    /// Locations of the surviving candidates only.
    pub candidate_locations: Vec<Location>,
}

/// Fetches exactly `lambda` sealed locations: every remaining candidate
/// plus uniformly chosen excluded decoys, and opens them with the owner
/// key.
pub fn retrieve_locations(
    candidates: &BTreeSet<usize>,
    lambda: usize,
    sealed: &BTreeMap<usize, SealedLocation>,
    key: &OwnerKey,
    rng: &mut impl RngCore,
) -> Result<RetrievalOutcome> {
    if lambda < candidates.len() {
        return Err(Error::invalid(format!(
            "retrieval size {lambda} smaller than candidate set {}",
            candidates.len()
        )));
    }
    if lambda > sealed.len() {
        return Err(Error::invalid(format!(
            "retrieval size {lambda} exceeds available reports {}",
            sealed.len()
        )));
    }
    let mut excluded: Vec<usize> = sealed
        .keys()
        .copied()
        .filter(|d| !candidates.contains(d))
        .collect();
    let decoy_count = lambda - candidates.len();
    for i in 0..decoy_count {
        let j = i + (rng.next_u64() as usize) % (excluded.len() - i);
        excluded.swap(i, j);
    }
    let mut requested: Vec<usize> = candidates
        .iter()
        .copied()
        .chain(excluded[..decoy_count].iter().copied())
        .collect();
    requested.sort_unstable();
    let opened = requested
        .iter()
        .map(|d| open_location(&sealed[d], key))
        .collect();
    let candidate_locations = candidates
        .iter()
        .map(|d| open_location(&sealed[d], key).1)
        .collect();
    Ok(RetrievalOutcome {
        requested,
        opened,
        candidate_locations,
    })
}

/// The owner's final answer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocationEstimate {
    /// No candidate locations remained to estimate from.
    NotFound,
    /// Disk around the candidate centroid certain to contain the tag when
    /// every candidate truly covers it.
    Found { center: Location, radius: f64 },
}

/// Centroid of the candidate locations, with radius equal to the
/// transmission range plus the largest candidate distance from the
/// centroid.
pub fn estimate_location(candidate_locations: &[Location], range: f64) -> LocationEstimate {
    if candidate_locations.is_empty() {
        return LocationEstimate::NotFound;
    }
    let n = candidate_locations.len() as f64;
    let center = Location {
        x: candidate_locations.iter().map(|l| l.x).sum::<f64>() / n,
        y: candidate_locations.iter().map(|l| l.y).sum::<f64>() / n,
    };
    let spread = candidate_locations
        .iter()
        .map(|l| l.distance(&center))
        .fold(0.0, f64::max);
    LocationEstimate::Found {
        center,
        radius: range + spread,
    }
}
