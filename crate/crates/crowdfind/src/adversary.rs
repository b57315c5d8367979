//! The honest-but-curious provider's inference strategies. The provider
//! sees zones, polling requests, the per-round reported vectors, and the
//! retrieval index set; these functions work from the reported vectors
//! alone and never touch tag ids, locations, or pseudonym ownership.

use std::collections::BTreeSet;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::owner::chi_square_p_value;
use crate::protocol::FrameVector;

/// Ranking strategy the provider ran.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankStrategy {
    BitOnes,
    PValue,
}

/// Suspicion ordering over detectors. Rank 1 (`ranking[0]`) is the most
/// suspected detector.
#[derive(Debug, Clone)]
pub struct RankReport {
    pub strategy: RankStrategy,
    pub ranking: Vec<usize>,
}

impl RankReport {
    /// Rank of a detector, 1-based.
    pub fn rank_of(&self, detector: usize) -> Option<usize> {
        self.ranking.iter().position(|&d| d == detector).map(|p| p + 1)
    }
}

fn validate_rounds(per_round_frames: &[Vec<FrameVector>]) -> Result<usize> {
    let first = per_round_frames
        .first()
        .ok_or_else(|| Error::invalid("no polling rounds reported"))?;
    let detectors = first.len();
    if detectors == 0 {
        return Err(Error::invalid("no detectors reported"));
    }
    for round in per_round_frames {
        if round.len() != detectors {
            return Err(Error::protocol(
                "detector missing from a polling round".to_string(),
            ));
        }
    }
    Ok(detectors)
}

fn tie_breaks(count: usize, rng: &mut impl RngCore) -> Vec<u64> {
    (0..count).map(|_| rng.next_u64()).collect()
}

/// Ranks detectors by their total bit-one count across all reported rounds,
/// most ones first, ties broken uniformly at random.
pub fn rank_by_bit_ones(
    per_round_frames: &[Vec<FrameVector>],
    rng: &mut impl RngCore,
) -> Result<RankReport> {
    let detectors = validate_rounds(per_round_frames)?;
    let mut ones = vec![0u64; detectors];
    for round in per_round_frames {
        for (d, frame) in round.iter().enumerate() {
            ones[d] += frame.count_ones() as u64;
        }
    }
    let tb = tie_breaks(detectors, rng);
    let mut order: Vec<usize> = (0..detectors).collect();
    order.sort_by_key(|&d| (std::cmp::Reverse(ones[d]), tb[d]));
    Ok(RankReport {
        strategy: RankStrategy::BitOnes,
        ranking: order,
    })
}

/// Ranks detectors by the p-value of their observed one-frequency against
/// the expected no-tag frequency, smallest p-value first. A covering
/// detector can only show more ones than expected, so detectors with fewer
/// ones than expected are ranked after every detector at or above it.
pub fn rank_by_p_value(
    per_round_frames: &[Vec<FrameVector>],
    expected_one_prob: f64,
    rng: &mut impl RngCore,
) -> Result<RankReport> {
    if !(expected_one_prob > 0.0 && expected_one_prob < 1.0) {
        return Err(Error::invalid(
            "expected one-probability must lie strictly inside (0, 1)",
        ));
    }
    let detectors = validate_rounds(per_round_frames)?;
    let mut ones = vec![0u64; detectors];
    let mut bits = 0u64;
    for round in per_round_frames {
        bits += round[0].len() as u64;
        for (d, frame) in round.iter().enumerate() {
            ones[d] += frame.count_ones() as u64;
        }
    }
    let tb = tie_breaks(detectors, rng);
    let mut keyed: Vec<(u8, f64, u64, usize)> = Vec::with_capacity(detectors);
    for d in 0..detectors {
        let p_ob = ones[d] as f64 / bits as f64;
        let p_val = chi_square_p_value(p_ob, expected_one_prob)?;
        let side = if p_ob >= expected_one_prob { 0u8 } else { 1u8 };
        keyed.push((side, p_val, tb[d], d));
    }
    keyed.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(a.1.partial_cmp(&b.1).expect("p-values are finite"))
            .then(a.2.cmp(&b.2))
    });
    Ok(RankReport {
        strategy: RankStrategy::PValue,
        ranking: keyed.into_iter().map(|(_, _, _, d)| d).collect(),
    })
}

/// Best (smallest) rank among the detectors actually covering the tag,
/// divided by the detector count. `None` when no detector covers the tag,
/// as in the false-positive experiment.
pub fn normalized_rank(report: &RankReport, real_set: &BTreeSet<usize>) -> Option<f64> {
    if real_set.is_empty() {
        return None;
    }
    let best = real_set
        .iter()
        .filter_map(|&d| report.rank_of(d))
        .min()
        .expect("real detectors appear in the ranking");
    Some(best as f64 / report.ranking.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn frame_with_ones(len: usize, count: usize) -> FrameVector {
        let mut f = FrameVector::zeroed(len).unwrap();
        for y in 0..count {
            f.set(y);
        }
        f
    }

    #[test]
    fn all_ones_detector_ranked_first() {
        let round = vec![
            frame_with_ones(50, 0),
            frame_with_ones(50, 50),
            frame_with_ones(50, 0),
        ];
        let mut rng = substream(1, &[1]);
        let report = rank_by_bit_ones(&[round], &mut rng).unwrap();
        assert_eq!(report.ranking[0], 1);
        assert_eq!(report.rank_of(1), Some(1));
    }

    #[test]
    fn identical_vectors_tie_break_uniformly() {
        let mut total = 0.0;
        let trials = 4000;
        for t in 0..trials {
            let round = vec![frame_with_ones(50, 7); 10];
            let mut rng = substream(2, &[t]);
            let report = rank_by_bit_ones(&[round], &mut rng).unwrap();
            let real: BTreeSet<usize> = [3].into_iter().collect();
            total += normalized_rank(&report, &real).unwrap();
        }
        let mean = total / trials as f64;
        // expected normalized rank of a uniformly placed detector is
        // (C+1)/(2C) = 0.55 at C = 10
        assert!((mean - 0.55).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn bit_ones_ranking_matches_brute_force_sort() {
        let mut rng = substream(3, &[1]);
        let rounds: Vec<Vec<FrameVector>> = (0..3)
            .map(|r| {
                (0..20)
                    .map(|d| frame_with_ones(40, (d * 7 + r * 3) % 41))
                    .collect()
            })
            .collect();
        let report = rank_by_bit_ones(&rounds, &mut rng).unwrap();
        let mut totals = [0u64; 20];
        for round in &rounds {
            for (d, f) in round.iter().enumerate() {
                totals[d] += f.count_ones() as u64;
            }
        }
        for pair in report.ranking.windows(2) {
            assert!(totals[pair[0]] >= totals[pair[1]]);
        }
        let as_set: BTreeSet<usize> = report.ranking.iter().copied().collect();
        assert_eq!(as_set.len(), 20);
    }

    #[test]
    fn p_value_ranking_orders_by_recomputed_statistic() {
        let expected = 0.3;
        let round: Vec<FrameVector> = (0..20).map(|d| frame_with_ones(40, 2 * d)).collect();
        let mut rng = substream(4, &[1]);
        let report = rank_by_p_value(std::slice::from_ref(&round), expected, &mut rng).unwrap();
        // independent recomputation
        let mut expected_order: Vec<(u8, f64, usize)> = round
            .iter()
            .enumerate()
            .map(|(d, f)| {
                let p_ob = f.count_ones() as f64 / 40.0;
                let delta: f64 = p_ob - expected;
                let chi = delta * delta / expected + delta * delta / (1.0 - expected);
                let p = crate::numeric::chi_sq1_upper(chi);
                (if p_ob >= expected { 0 } else { 1 }, p, d)
            })
            .collect();
        expected_order.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.partial_cmp(&b.1).unwrap()));
        // counts here are all distinct, so ordering is deterministic
        let expected_ranking: Vec<usize> = expected_order.into_iter().map(|(_, _, d)| d).collect();
        assert_eq!(report.ranking, expected_ranking);
    }

    #[test]
    fn p_value_below_expected_ranked_after() {
        let expected = 0.5;
        // detector 0 far below expected, detector 1 exactly at it,
        // detector 2 slightly above
        let round = vec![
            frame_with_ones(40, 2),
            frame_with_ones(40, 20),
            frame_with_ones(40, 24),
        ];
        let mut rng = substream(5, &[1]);
        let report = rank_by_p_value(&[round], expected, &mut rng).unwrap();
        assert_eq!(report.ranking[0], 2);
        assert_eq!(report.ranking[1], 1); // p-value 1, but still on the >= side
        assert_eq!(report.ranking[2], 0); // fewer ones than expected: last
    }

    #[test]
    fn all_polled_bits_one_is_most_suspected() {
        let round = vec![
            frame_with_ones(30, 12),
            frame_with_ones(30, 30),
            frame_with_ones(30, 11),
        ];
        let mut rng = substream(6, &[1]);
        let report = rank_by_p_value(&[round], 0.4, &mut rng).unwrap();
        assert_eq!(report.ranking[0], 1);
    }

    #[test]
    fn normalized_rank_examples() {
        let report = RankReport {
            strategy: RankStrategy::BitOnes,
            ranking: (0..10).collect(),
        };
        let first: BTreeSet<usize> = [0].into_iter().collect();
        assert_eq!(normalized_rank(&report, &first), Some(0.1));
        let last: BTreeSet<usize> = [9].into_iter().collect();
        assert_eq!(normalized_rank(&report, &last), Some(1.0));
        let pair: BTreeSet<usize> = [2, 6].into_iter().collect();
        assert_eq!(normalized_rank(&report, &pair), Some(0.3));
        let empty = BTreeSet::new();
        assert_eq!(normalized_rank(&report, &empty), None);
    }

    #[test]
    fn rankings_are_permutations() {
        let mut rng = substream(7, &[1]);
        let rounds: Vec<Vec<FrameVector>> = (0..2)
            .map(|r| (0..15).map(|d| frame_with_ones(25, (d + r) % 26)).collect())
            .collect();
        for report in [
            rank_by_bit_ones(&rounds, &mut rng).unwrap(),
            rank_by_p_value(&rounds, 0.37, &mut rng).unwrap(),
        ] {
            let set: BTreeSet<usize> = report.ranking.iter().copied().collect();
            assert_eq!(set.len(), 15);
            assert_eq!(*set.iter().max().unwrap(), 14);
        }
    }

    #[test]
    fn degenerate_expected_probability_rejected() {
        let round = vec![frame_with_ones(10, 3)];
        let mut rng = substream(8, &[1]);
        assert!(rank_by_p_value(std::slice::from_ref(&round), 0.0, &mut rng).is_err());
        assert!(rank_by_p_value(&[round], 1.0, &mut rng).is_err());
    }

    #[test]
    fn mismatched_round_sizes_rejected() {
        let mut rng = substream(9, &[1]);
        let rounds = vec![
            vec![frame_with_ones(10, 1), frame_with_ones(10, 2)],
            vec![frame_with_ones(10, 1)],
        ];
        assert!(rank_by_bit_ones(&rounds, &mut rng).is_err());
    }
}
