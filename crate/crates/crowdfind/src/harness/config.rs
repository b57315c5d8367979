//! Simulation configuration and the key=value config-file format.

use crate::analysis::MuMode;
use crate::error::{Error, Result};
use crate::owner::Scheme;
use crate::world::Placement;

/// All protocol and deployment parameters for one experiment.
///
/// Config files are plain text, one `key = value` per line, `#` comments.
/// Keys: `C`, `side`, `R`, `q`, `f`, `k`, `omega`, `p_thre`, `tau`,
/// `lambda`, `scheme` (basic|advanced), `fp_mode`, `mu_mode`
/// (oracle|as_written), `zone_size`, `seed`, `replicates`, `round_cap`,
/// `placement` (uniform|poisson), `homogeneous_c` (none or a count),
/// `fixed_rounds` (none or a count). Unknown keys are rejected; absent keys
/// keep their defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Detector count (exact in uniform placement, the mean in poisson).
    pub detectors: usize,
    /// Side of the square region, meters.
    pub side: f64,
    /// Transmission range, meters.
    pub radius: f64,
    /// Probability a hearing neighbor acts as a dummy tag.
    pub dummy_prob: f64,
    /// ALOHA frame length f.
    pub frame_len: usize,
    /// Number of hash functions k.
    pub hash_count: usize,
    /// Polled positions per advanced round, omega.
    pub polled: usize,
    /// Gate threshold on the indistinguishability p-value.
    pub p_thre: f64,
    /// Stop after this many consecutive rounds without candidate change.
    pub stall_rounds: u32,
    /// Sealed locations fetched at the end, candidates plus decoys.
    pub retrieval_size: usize,
    pub scheme: Scheme,
    /// Run without the lost tag present (false-positive experiment).
    pub fp_mode: bool,
    /// Which expected-distinct-slots expression feeds derived formulas.
    pub mu_mode: MuMode,
    /// Provider-visible zone granularity, meters.
    pub zone_size: f64,
    /// Root seed; replicate r runs under a substream of (seed, r).
    pub seed: u64,
    pub replicates: usize,
    /// Safety bound on polling rounds per run.
    pub round_cap: u32,
    pub placement: Placement,
    /// When set, dummy election ignores geometry and every frame draws from
    /// exactly this many dummy-capable neighbors. Matches the homogeneity
    /// assumption behind the closed-form object-security analysis.
    pub homogeneous_c: Option<usize>,
    /// When set, run exactly this many polling rounds, ignoring the stop
    /// rule. Used by the false-positive experiment.
    pub fixed_rounds: Option<u32>,
}

impl SimConfig {
    /// Full-scale default settings: 10,000 detectors over a 2,000 m
    /// square, q = 0.9, f = 300, k = 10, omega = 15, R = 50 m.
    pub fn full_scale_defaults() -> Self {
        SimConfig {
            detectors: 10_000,
            side: 2000.0,
            radius: 50.0,
            dummy_prob: 0.9,
            frame_len: 300,
            hash_count: 10,
            polled: 15,
            p_thre: 0.1,
            stall_rounds: 2,
            retrieval_size: 50,
            scheme: Scheme::Basic,
            fp_mode: false,
            mu_mode: MuMode::Oracle,
            zone_size: 250.0,
            seed: 0x5eed_f00d,
            replicates: 100,
            round_cap: 200,
            placement: Placement::Uniform,
            homogeneous_c: None,
            fixed_rounds: None,
        }
    }

    /// Same density as the full-scale defaults at a quarter of the side
    /// length: 625 detectors over a 500 m square, so the mean neighbor
    /// count stays ~19.6 while runs stay fast. Test-scale default.
    pub fn desk_defaults() -> Self {
        SimConfig {
            detectors: 625,
            side: 500.0,
            ..SimConfig::full_scale_defaults()
        }
    }

    /// Publicly known mean neighbor count c = floor(pi R^2 C / S), or the
    /// exact homogenized count when one is configured.
    pub fn avg_neighbors(&self) -> f64 {
        match self.homogeneous_c {
            Some(c) => c as f64,
            None => {
                let s = self.side * self.side;
                (std::f64::consts::PI * self.radius * self.radius * self.detectors as f64 / s)
                    .floor()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.detectors == 0 {
            return Err(Error::config("C", "detector count must be at least 1"));
        }
        if self.side <= 0.0 {
            return Err(Error::config("side", "region side must be positive"));
        }
        if self.radius <= 0.0 {
            return Err(Error::config("R", "transmission range must be positive"));
        }
        if !(0.0..=1.0).contains(&self.dummy_prob) {
            return Err(Error::config("q", "dummy probability must lie in [0, 1]"));
        }
        if self.frame_len == 0 {
            return Err(Error::config("f", "frame length must be at least 1"));
        }
        if self.hash_count == 0 {
            return Err(Error::config("k", "hash count must be at least 1"));
        }
        if self.polled == 0 || self.polled > self.frame_len {
            return Err(Error::config(
                "omega",
                format!("polled positions must lie in [1, f = {}]", self.frame_len),
            ));
        }
        if !(0.0..=1.0).contains(&self.p_thre) {
            return Err(Error::config("p_thre", "threshold must lie in [0, 1]"));
        }
        if self.stall_rounds < 2 {
            return Err(Error::config("tau", "stall rounds must be at least 2"));
        }
        if self.retrieval_size == 0 {
            return Err(Error::config("lambda", "retrieval size must be at least 1"));
        }
        if self.zone_size <= 0.0 {
            return Err(Error::config("zone_size", "zone size must be positive"));
        }
        if self.replicates == 0 {
            return Err(Error::config("replicates", "replicate count must be at least 1"));
        }
        if self.round_cap == 0 {
            return Err(Error::config("round_cap", "round cap must be at least 1"));
        }
        Ok(())
    }

    /// Parses the key=value format on top of the full-scale defaults.
    pub fn parse(text: &str) -> Result<SimConfig> {
        let mut config = SimConfig::full_scale_defaults();
        for (line_no, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(
                    format!("line {}", line_no + 1),
                    format!("expected key = value, got '{line}'"),
                )
            })?;
            config.apply(key.trim(), value.trim())?;
        }
        config.validate()?;
        Ok(config)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            value
                .parse::<T>()
                .map_err(|e| Error::config(key, format!("bad value '{value}': {e}")))
        }
        match key {
            "C" => self.detectors = parse(key, value)?,
            "side" => self.side = parse(key, value)?,
            "R" => self.radius = parse(key, value)?,
            "q" => self.dummy_prob = parse(key, value)?,
            "f" => self.frame_len = parse(key, value)?,
            "k" => self.hash_count = parse(key, value)?,
            "omega" => self.polled = parse(key, value)?,
            "p_thre" => self.p_thre = parse(key, value)?,
            "tau" => self.stall_rounds = parse(key, value)?,
            "lambda" => self.retrieval_size = parse(key, value)?,
            "scheme" => self.scheme = value.parse()?,
            "fp_mode" => self.fp_mode = parse(key, value)?,
            "mu_mode" => {
                self.mu_mode = match value {
                    "oracle" => MuMode::Oracle,
                    "as_written" => MuMode::AsWritten,
                    other => {
                        return Err(Error::config(
                            key,
                            format!("unknown mode '{other}' (oracle|as_written)"),
                        ))
                    }
                }
            }
            "zone_size" => self.zone_size = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "replicates" => self.replicates = parse(key, value)?,
            "round_cap" => self.round_cap = parse(key, value)?,
            "placement" => {
                self.placement = match value {
                    "uniform" => Placement::Uniform,
                    "poisson" => Placement::PoissonTotal,
                    other => {
                        return Err(Error::config(
                            key,
                            format!("unknown placement '{other}' (uniform|poisson)"),
                        ))
                    }
                }
            }
            "homogeneous_c" => {
                self.homogeneous_c = match value {
                    "none" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "fixed_rounds" => {
                self.fixed_rounds = match value {
                    "none" => None,
                    v => Some(parse(key, v)?),
                }
            }
            other => {
                return Err(Error::config(other, "unknown configuration key"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_full_scale_defaults() {
        let config = SimConfig::parse("").unwrap();
        assert_eq!(config, SimConfig::full_scale_defaults());
        assert_eq!(config.detectors, 10_000);
        assert_eq!(config.side, 2000.0);
        assert_eq!(config.dummy_prob, 0.9);
        assert_eq!(config.frame_len, 300);
        assert_eq!(config.hash_count, 10);
        assert_eq!(config.polled, 15);
    }

    #[test]
    fn desk_scale_preserves_density() {
        let desk = SimConfig::desk_defaults();
        let full = SimConfig::full_scale_defaults();
        assert_eq!(desk.avg_neighbors(), full.avg_neighbors());
        assert_eq!(desk.avg_neighbors(), 19.0);
    }

    #[test]
    fn omega_beyond_frame_rejected() {
        let err = SimConfig::parse("omega = 400\nf = 300").unwrap_err();
        assert!(err.to_string().contains("omega"));
    }

    #[test]
    fn tau_below_two_rejected() {
        let err = SimConfig::parse("tau = 1").unwrap_err();
        assert!(err.to_string().contains("tau"));
    }

    #[test]
    fn unknown_key_rejected() {
        let err = SimConfig::parse("warp_factor = 9").unwrap_err();
        assert!(err.to_string().contains("warp_factor"));
    }

    #[test]
    fn comments_and_overrides_parse() {
        let text = "# comment\nC = 625 # inline\nside = 500\nscheme = advanced\nmu_mode = as_written\nplacement = poisson\nhomogeneous_c = 4\nfixed_rounds = 3\n";
        let config = SimConfig::parse(text).unwrap();
        assert_eq!(config.detectors, 625);
        assert_eq!(config.scheme, Scheme::Advanced);
        assert_eq!(config.mu_mode, MuMode::AsWritten);
        assert_eq!(config.placement, Placement::PoissonTotal);
        assert_eq!(config.homogeneous_c, Some(4));
        assert_eq!(config.fixed_rounds, Some(3));
    }

    #[test]
    fn bad_value_reports_key() {
        let err = SimConfig::parse("q = fast").unwrap_err();
        assert!(err.to_string().contains('q'));
    }
}
