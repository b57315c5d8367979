//! Full protocol runs: deploy, pre-polling, polling rounds until
//! termination, decoy-padded retrieval, location estimate, and the
//! provider's ranking over the collected trace. A run is a pure function of
//! (config, run seed).

use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;
use rayon::prelude::*;

use crate::adversary::{self, RankReport};
use crate::analysis::{self, LOCATION_REPORT_BITS};
use crate::error::Result;
use crate::harness::config::SimConfig;
use crate::owner::{self, Decision, LocationEstimate, OwnerParams, OwnerState, Scheme};
use crate::protocol::{
    run_frame, run_selected_frame, seal_location, FrameVector, HashFamily, OwnerKey, PollRequest,
    Pseudonym, Replier, SealedLocation, TagId,
};
use crate::rng::{label, run_seed, substream};
use crate::world::{self, Deployment, Location, WorldParams};

/// Cumulative overhead counters and outcome flags for one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Metrics {
    /// One-bit tag responses, counted per (tag, slot) pair.
    pub tag_comm_bits: u64,
    /// Hash invocations performed by tags, k per heard request.
    pub tag_hash_ops: u64,
    /// Bits from detectors to the provider: sealed location reports plus
    /// one frame-sized vector per detector per round.
    pub detector_comm_bits: u64,
    /// Messages the owner sent: initial request, one per polling round,
    /// and the retrieval request.
    pub owner_msgs: u64,
    /// Polling rounds executed.
    pub rounds: u32,
    /// Last round whose elimination changed the candidate set; the rounds
    /// after it only confirm the stall-based stop rule.
    pub settle_round: u32,
    /// Advanced rounds where the gate returned less than one real position
    /// and the floor of one applied.
    pub clamped_gamma_rounds: u32,
    pub terminal_candidates: usize,
    pub located: bool,
    pub fp_triggered: bool,
    pub round_cap_hit: bool,
}

/// Owner-side log line for one round, with that round's overhead deltas.
#[derive(Debug, Clone)]
pub struct RoundSummary {
    pub round: u32,
    pub gamma: Option<usize>,
    pub candidates_after: Vec<usize>,
    pub positions: Option<Vec<usize>>,
    pub tag_comm_bits_delta: u64,
    pub tag_hash_ops_delta: u64,
    pub detector_comm_bits_delta: u64,
}

/// Everything one run produced.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub run_seed: u64,
    pub scheme: Scheme,
    pub covering: BTreeSet<usize>,
    pub terminal_candidates: BTreeSet<usize>,
    pub estimate: LocationEstimate,
    pub tag_location: Option<Location>,
    /// Retrieval index set, as observed by the provider.
    pub requested: Vec<usize>,
    pub norm_rank_bit_ones: Option<f64>,
    pub norm_rank_p_value: Option<f64>,
    /// Ranks of every covering detector under the p-value strategy, for
    /// debugging the security metric; `norm_rank_p_value` is min/C of these.
    pub p_value_covering_ranks: Vec<usize>,
    pub rounds_log: Vec<RoundSummary>,
    pub metrics: Metrics,
}

/// Elects the dummy tags one broadcaster's request reaches. With
/// `homogeneous_c` set the election draws from exactly that many abstract
/// dummy-capable neighbors instead of the deployment geometry.
fn elect(
    config: &SimConfig,
    deployment: &Deployment,
    broadcaster: usize,
    rng: &mut impl RngCore,
) -> Result<Vec<Replier>> {
    use rand::Rng;
    match config.homogeneous_c {
        Some(c) => {
            let mut dummies = Vec::new();
            for _ in 0..c {
                if rng.random_bool(config.dummy_prob) {
                    dummies.push(Replier::Dummy(Pseudonym::random(rng)));
                } else {
                    let _ = rng.next_u64();
                }
            }
            Ok(dummies)
        }
        None => Ok(deployment
            .elect_dummies(broadcaster, config.dummy_prob, rng)?
            .members
            .into_iter()
            .map(|(_, pseudonym)| Replier::Dummy(pseudonym))
            .collect()),
    }
}

/// Executes one full run under the given run seed.
pub fn run_once(config: &SimConfig, run_seed: u64) -> Result<RunReport> {
    config.validate()?;

    let mut deploy_rng = substream(run_seed, &[label::DEPLOY]);
    let deployment = world::deploy(
        &WorldParams {
            detector_count: config.detectors,
            side: config.side,
            radius: config.radius,
            zone_size: config.zone_size,
            placement: config.placement,
            with_tag: !config.fp_mode,
        },
        &mut deploy_rng,
    )?;
    let detector_count = deployment.detector_count();

    let mut owner_rng = substream(run_seed, &[label::OWNER_SETUP]);
    let key = OwnerKey::generate(&mut owner_rng);
    let lost_id = match deployment.lost_tag() {
        Some((id, _)) => id,
        None => TagId::random(&mut owner_rng),
    };
    let request = owner::initial_request(lost_id, &key, &mut owner_rng);
    let mut metrics = Metrics {
        owner_msgs: 1,
        ..Metrics::default()
    };

    // Only the lost tag recognizes the pre-polling digest.
    if let Some((tag_id, _)) = deployment.lost_tag() {
        debug_assert!(request.matches(tag_id));
    }

    // Pre-polling: every detector seals its location to the owner key and
    // reports it to the provider, which buffers the sealed values.
    let mut sealed: BTreeMap<usize, SealedLocation> = BTreeMap::new();
    for d in 0..detector_count {
        let mut d_rng = substream(run_seed, &[label::DETECTOR_SETUP, d as u64]);
        let pseudonym = Pseudonym::random(&mut d_rng);
        sealed.insert(
            d,
            seal_location(deployment.location(d)?, pseudonym, &key, &mut d_rng),
        );
        metrics.detector_comm_bits += LOCATION_REPORT_BITS;
    }

    let covering: BTreeSet<usize> = deployment.covering_detectors().into_iter().collect();
    let family = HashFamily::new(config.hash_count, crate::rng::mix(run_seed, 0x4a5f))?;

    let owner_params = OwnerParams {
        scheme: config.scheme,
        frame_len: config.frame_len,
        hash_count: config.hash_count,
        polled: config.polled,
        p_thre: config.p_thre,
        dummy_prob: config.dummy_prob,
        avg_neighbors: config.avg_neighbors(),
    };
    let mut state = OwnerState::new(owner_params, lost_id, detector_count)?;

    let mut trace: Vec<Vec<FrameVector>> = Vec::new();
    let mut rounds_log: Vec<RoundSummary> = Vec::new();

    let max_rounds = config.fixed_rounds.unwrap_or(config.round_cap);
    if detector_count > 0 {
        for round in 1..=max_rounds {
            let seed_for_round = substream(run_seed, &[label::ROUND_SEED, round as u64]).next_u64();
            let plan = match config.scheme {
                Scheme::Basic => None,
                Scheme::Advanced => {
                    let mut plan_rng = substream(run_seed, &[label::PLAN, round as u64]);
                    Some(state.plan_positions(&family, seed_for_round, &mut plan_rng)?)
                }
            };
            metrics.owner_msgs += 1;

            let poll_request = match &plan {
                None => PollRequest::full_frame(seed_for_round, config.frame_len)?,
                Some(p) => {
                    PollRequest::selected(seed_for_round, config.frame_len, p.positions.clone())?
                }
            };

            let mut frames: Vec<FrameVector> = Vec::with_capacity(detector_count);
            let mut round_tag_bits = 0u64;
            let mut round_hash_ops = 0u64;
            let mut round_detector_bits = 0u64;
            for d in 0..detector_count {
                let mut election_rng =
                    substream(run_seed, &[label::ELECTION, round as u64, d as u64]);
                let mut repliers = elect(config, &deployment, d, &mut election_rng)?;
                if covering.contains(&d) {
                    repliers.push(Replier::Tag(lost_id));
                }
                let (frame, delta) = match &plan {
                    None => run_frame(&repliers, seed_for_round, config.frame_len, &family)?,
                    Some(_) => run_selected_frame(&repliers, &poll_request, &family)?,
                };
                round_tag_bits += delta.responses;
                round_hash_ops += delta.hash_ops;
                round_detector_bits += frame.len() as u64;
                frames.push(frame);
            }
            metrics.tag_comm_bits += round_tag_bits;
            metrics.tag_hash_ops += round_hash_ops;
            metrics.detector_comm_bits += round_detector_bits;

            match &plan {
                None => state.basic_round(&family, seed_for_round, &frames)?,
                Some(p) => state.advanced_round(&frames, p)?,
            }
            trace.push(frames);
            metrics.rounds = round;
            if state.stall_rounds() == 0 {
                metrics.settle_round = round;
            }
            rounds_log.push(RoundSummary {
                round,
                gamma: plan.as_ref().map(|p| p.gamma),
                candidates_after: state.candidates().iter().copied().collect(),
                positions: plan.as_ref().map(|p| p.positions.clone()),
                tag_comm_bits_delta: round_tag_bits,
                tag_hash_ops_delta: round_hash_ops,
                detector_comm_bits_delta: round_detector_bits,
            });

            if config.fixed_rounds.is_none() {
                if state.check_termination(config.stall_rounds) == Decision::Stop {
                    break;
                }
                if round == config.round_cap {
                    metrics.round_cap_hit = true;
                }
            }
        }
    }
    metrics.clamped_gamma_rounds = state.clamped_gamma_rounds();

    // Retrieval: all surviving candidates plus decoys, padded up to the
    // configured size and capped by the population.
    let terminal: BTreeSet<usize> = state.candidates().clone();
    let mut requested = Vec::new();
    let mut candidate_locations = Vec::new();
    if detector_count > 0 {
        let lambda = config
            .retrieval_size
            .max(terminal.len())
            .min(detector_count);
        let mut retrieval_rng = substream(run_seed, &[label::RETRIEVAL]);
        let outcome =
            owner::retrieve_locations(&terminal, lambda, &sealed, &key, &mut retrieval_rng)?;
        metrics.owner_msgs += 1;
        requested = outcome.requested;
        candidate_locations = outcome.candidate_locations;
    }
    let estimate = owner::estimate_location(&candidate_locations, config.radius);

    // Provider-side ranking over the collected trace.
    let mut provider_rng = substream(run_seed, &[label::PROVIDER]);
    let (norm_rank_bit_ones, norm_rank_p_value, p_value_covering_ranks) = if trace.is_empty() {
        (None, None, Vec::new())
    } else {
        let bit_ones: Option<RankReport> =
            adversary::rank_by_bit_ones(&trace, &mut provider_rng).ok();
        let expected = analysis::p1_prime(
            config.frame_len,
            config.hash_count,
            config.dummy_prob,
            config.avg_neighbors(),
        );
        let p_value: Option<RankReport> = if expected > 0.0 && expected < 1.0 {
            adversary::rank_by_p_value(&trace, expected, &mut provider_rng).ok()
        } else {
            None
        };
        let covering_ranks = p_value
            .as_ref()
            .map(|r| {
                let mut ranks: Vec<usize> =
                    covering.iter().filter_map(|&d| r.rank_of(d)).collect();
                ranks.sort_unstable();
                ranks
            })
            .unwrap_or_default();
        (
            bit_ones.and_then(|r| adversary::normalized_rank(&r, &covering)),
            p_value.and_then(|r| adversary::normalized_rank(&r, &covering)),
            covering_ranks,
        )
    };

    metrics.terminal_candidates = terminal.len();
    metrics.located = !covering.is_empty() && !terminal.is_disjoint(&covering);
    metrics.fp_triggered = config.fp_mode && !terminal.is_empty();

    Ok(RunReport {
        run_seed,
        scheme: config.scheme,
        covering,
        terminal_candidates: terminal,
        estimate,
        tag_location: deployment.lost_tag().map(|(_, loc)| loc),
        requested,
        norm_rank_bit_ones,
        norm_rank_p_value,
        p_value_covering_ranks,
        rounds_log,
        metrics,
    })
}

/// Runs all configured replicates in parallel; replicate r uses the seed
/// substream (config.seed, r), so results are independent of scheduling.
pub fn run_replicates(config: &SimConfig) -> Result<Vec<RunReport>> {
    (0..config.replicates)
        .into_par_iter()
        .map(|r| run_once(config, run_seed(config.seed, r as u64)))
        .collect()
}

/// Outcome of a false-positive experiment batch.
#[derive(Debug, Clone, Copy)]
pub struct FpSummary {
    pub runs: usize,
    pub triggered: usize,
    pub frequency: f64,
    /// Closed-form 1 - (1 - p_one^t)^C at the configured parameters.
    pub closed_form: f64,
}

/// Runs the false-positive experiment: no tag present, exactly `rounds`
/// polling rounds, counting runs where at least one detector survives.
pub fn fp_batch(base: &SimConfig, rounds: u32) -> Result<FpSummary> {
    let mut config = *base;
    config.fp_mode = true;
    config.fixed_rounds = Some(rounds);
    config.validate()?;
    let reports = run_replicates(&config)?;
    let triggered = reports.iter().filter(|r| r.metrics.fp_triggered).count();
    let mu = analysis::mu(config.frame_len, config.hash_count, config.mu_mode);
    let p_one = analysis::p_one(
        config.frame_len,
        config.hash_count,
        config.dummy_prob,
        config.avg_neighbors(),
        mu,
    );
    Ok(FpSummary {
        runs: reports.len(),
        triggered,
        frequency: triggered as f64 / reports.len() as f64,
        closed_form: analysis::false_positive_prob(p_one, rounds, config.detectors),
    })
}

/// One single-round homogenized object-security trial: detector 0 covers
/// the tag, every detector has exactly `c` dummy-capable neighbors electing
/// with probability q, and the provider ranks by bit-one counts. Returns
/// the rank of the covering detector, 1 = most suspected.
pub fn homogenized_rank_trial(
    detector_count: usize,
    frame_len: usize,
    hash_count: usize,
    q: f64,
    c: usize,
    trial_seed: u64,
) -> Result<usize> {
    use rand::Rng;
    let family = HashFamily::new(hash_count, crate::rng::mix(trial_seed, 0x7a1a))?;
    let mut owner_rng = substream(trial_seed, &[label::OWNER_SETUP]);
    let lost_id = TagId::random(&mut owner_rng);
    let round_seed = substream(trial_seed, &[label::ROUND_SEED, 1]).next_u64();
    let mut frames = Vec::with_capacity(detector_count);
    for d in 0..detector_count {
        let mut rng = substream(trial_seed, &[label::ELECTION, 1, d as u64]);
        let mut repliers = Vec::new();
        for _ in 0..c {
            if rng.random_bool(q) {
                repliers.push(Replier::Dummy(Pseudonym::random(&mut rng)));
            } else {
                let _ = rng.next_u64();
            }
        }
        if d == 0 {
            repliers.push(Replier::Tag(lost_id));
        }
        let (frame, _) = run_frame(&repliers, round_seed, frame_len, &family)?;
        frames.push(frame);
    }
    let mut provider_rng = substream(trial_seed, &[label::PROVIDER]);
    let report = adversary::rank_by_bit_ones(&[frames], &mut provider_rng)?;
    Ok(report.rank_of(0).expect("detector 0 is ranked"))
}
