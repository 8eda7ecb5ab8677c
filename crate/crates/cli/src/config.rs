//! Experiment configuration: profile defaults, `key = value` override files,
//! and the canonical hash that binds artifacts to the configuration that
//! produced them.
//!
//! Every key carries its unit in its name. Unknown keys are rejected so a
//! typo cannot silently fall back to a default.

use std::path::Path;

use wavejam::classifier::Head;
use wavejam::{AttackConfig, Rect, StftPlan, TimeGrid, TrainConfig};

use crate::error::{io_at, CliError, Result};

/// Base parameter set; individual keys can be overridden by a config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Profile {
    /// Desk scale: a 10 m square domain that runs end to end in minutes.
    Desk,
    /// Publication scale: a 100 m square domain with kilohertz sampling.
    Paper,
}

/// One flat bag of experiment parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub domain_width_m: f64,
    pub domain_height_m: f64,
    pub mesh_h_m: f64,
    pub mesh_jitter_frac: f64,
    pub wave_speed_m_per_s: f64,
    pub time_step_s: f64,
    pub num_steps: usize,
    pub intruder_x_m: f64,
    pub intruder_y_m: f64,
    pub interferer_x_m: f64,
    pub interferer_y_m: f64,
    pub receiver_x_m: f64,
    pub receiver_y_m: f64,
    pub source_radius_m: f64,
    pub source_amplitude: f64,
    pub window_len: usize,
    pub hop: usize,
    pub num_freqs: usize,
    pub floor_db: f64,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub projector_tol: f64,
    pub freq_min_hz: f64,
    pub freq_max_hz: f64,
    pub freq_step_hz: f64,
    pub label_threshold_hz: f64,
    pub train_per_freq: usize,
    pub test_per_freq: usize,
    pub val_per_freq: usize,
    pub noise_kappa: f64,
    pub head: Head,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub attack_max_iters: usize,
    pub attack_check_every: usize,
    pub bench_reps: usize,
    pub seed: u64,
}

/// Round-trippable config value.
trait Value: Sized {
    fn render(&self) -> String;
    fn parse_value(s: &str) -> Option<Self>;
}

impl Value for f64 {
    fn render(&self) -> String {
        format!("{self}")
    }
    fn parse_value(s: &str) -> Option<Self> {
        s.parse().ok().filter(|v: &f64| v.is_finite())
    }
}

impl Value for usize {
    fn render(&self) -> String {
        format!("{self}")
    }
    fn parse_value(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

impl Value for u64 {
    fn render(&self) -> String {
        format!("{self}")
    }
    fn parse_value(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

impl Value for Head {
    fn render(&self) -> String {
        match self {
            Head::GlobalAverage => "global_average".into(),
            Head::TimeAverage => "time_average".into(),
        }
    }
    fn parse_value(s: &str) -> Option<Self> {
        match s {
            "global_average" => Some(Head::GlobalAverage),
            "time_average" => Some(Head::TimeAverage),
            _ => None,
        }
    }
}

/// Binds field names to config keys once; everything else (assignment,
/// canonical serialization) is generated from this single table. Keys are
/// listed alphabetically so the canonical form is sorted by construction.
macro_rules! config_keys {
    ($(($key:literal, $field:ident)),+ $(,)?) => {
        impl Config {
            /// Assigns one key. `None` means the key is unknown; `Some(Err)`
            /// an unparsable value.
            fn assign(&mut self, key: &str, raw: &str) -> Option<std::result::Result<(), String>> {
                match key {
                    $($key => Some(match Value::parse_value(raw) {
                        Some(v) => {
                            self.$field = v;
                            Ok(())
                        }
                        None => Err(format!("cannot parse {raw:?} for key {key}")),
                    }),)+
                    _ => None,
                }
            }

            /// Canonical serialization: every key, sorted, one `key = value`
            /// line each. Identical configurations render identically.
            pub fn canonical(&self) -> String {
                let mut s = String::new();
                $(
                    s.push_str($key);
                    s.push_str(" = ");
                    s.push_str(&self.$field.render());
                    s.push('\n');
                )+
                s
            }
        }

        #[cfg(test)]
        const KEY_TABLE: &[&str] = &[$($key),+];
    };
}

config_keys![
    ("attack_check_every", attack_check_every),
    ("attack_max_iters", attack_max_iters),
    ("band_high_hz", band_high_hz),
    ("band_low_hz", band_low_hz),
    ("batch_size", batch_size),
    ("bench_reps", bench_reps),
    ("domain_height_m", domain_height_m),
    ("domain_width_m", domain_width_m),
    ("floor_db", floor_db),
    ("freq_max_hz", freq_max_hz),
    ("freq_min_hz", freq_min_hz),
    ("freq_step_hz", freq_step_hz),
    ("head", head),
    ("hop", hop),
    ("interferer_x_m", interferer_x_m),
    ("interferer_y_m", interferer_y_m),
    ("intruder_x_m", intruder_x_m),
    ("intruder_y_m", intruder_y_m),
    ("label_threshold_hz", label_threshold_hz),
    ("learning_rate", learning_rate),
    ("max_epochs", max_epochs),
    ("mesh_h_m", mesh_h_m),
    ("mesh_jitter_frac", mesh_jitter_frac),
    ("noise_kappa", noise_kappa),
    ("num_freqs", num_freqs),
    ("num_steps", num_steps),
    ("patience", patience),
    ("projector_tol", projector_tol),
    ("receiver_x_m", receiver_x_m),
    ("receiver_y_m", receiver_y_m),
    ("seed", seed),
    ("source_amplitude", source_amplitude),
    ("source_radius_m", source_radius_m),
    ("test_per_freq", test_per_freq),
    ("time_step_s", time_step_s),
    ("train_per_freq", train_per_freq),
    ("val_per_freq", val_per_freq),
    ("wave_speed_m_per_s", wave_speed_m_per_s),
    ("window_len", window_len),
];

impl Config {
    pub fn profile(p: Profile) -> Self {
        match p {
            Profile::Desk => Config {
                domain_width_m: 10.0,
                domain_height_m: 10.0,
                mesh_h_m: 0.3125,
                mesh_jitter_frac: 0.05,
                wave_speed_m_per_s: 625.0,
                time_step_s: 1.25e-4,
                num_steps: 3200,
                intruder_x_m: 0.5,
                intruder_y_m: 7.5,
                interferer_x_m: 0.975,
                interferer_y_m: 6.875,
                receiver_x_m: 5.25,
                receiver_y_m: 1.25,
                source_radius_m: 0.625,
                source_amplitude: 1e6,
                window_len: 64,
                hop: 64,
                num_freqs: 65,
                floor_db: -120.0,
                band_low_hz: 125.0,
                band_high_hz: 6000.0,
                projector_tol: 1e-10,
                freq_min_hz: 50.0,
                freq_max_hz: 1000.0,
                freq_step_hz: 50.0,
                label_threshold_hz: 500.0,
                train_per_freq: 10,
                test_per_freq: 4,
                val_per_freq: 4,
                noise_kappa: 0.1,
                head: Head::TimeAverage,
                learning_rate: 0.1,
                batch_size: 16,
                max_epochs: 120,
                patience: 20,
                attack_max_iters: 100,
                attack_check_every: 10,
                bench_reps: 30,
                seed: 42,
            },
            Profile::Paper => Config {
                domain_width_m: 100.0,
                domain_height_m: 100.0,
                mesh_h_m: 100.0 / 99.0,
                mesh_jitter_frac: 0.05,
                wave_speed_m_per_s: 1525.0,
                time_step_s: 1.0 / 6000.0,
                num_steps: 6000,
                intruder_x_m: 5.0,
                intruder_y_m: 75.0,
                interferer_x_m: 9.75,
                interferer_y_m: 68.75,
                receiver_x_m: 52.5,
                receiver_y_m: 12.5,
                source_radius_m: 2.0 * 100.0 / 99.0,
                source_amplitude: 1e6,
                window_len: 64,
                hop: 64,
                num_freqs: 129,
                floor_db: -120.0,
                band_low_hz: 100.0,
                band_high_hz: 6000.0,
                projector_tol: 1e-10,
                freq_min_hz: 10.0,
                freq_max_hz: 800.0,
                freq_step_hz: 10.0,
                label_threshold_hz: 400.0,
                train_per_freq: 10,
                test_per_freq: 4,
                val_per_freq: 4,
                noise_kappa: 0.1,
                head: Head::TimeAverage,
                learning_rate: 0.1,
                batch_size: 16,
                max_epochs: 120,
                patience: 20,
                attack_max_iters: 100,
                attack_check_every: 10,
                bench_reps: 30,
                seed: 42,
            },
        }
    }

    /// Applies `key = value` override lines. `#` starts a comment; blank
    /// lines are skipped; unknown keys and bad values are configuration
    /// errors naming the offending line.
    pub fn apply_overrides(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, raw_line) in text.lines().enumerate() {
            let line = match raw_line.split_once('#') {
                Some((before, _)) => before,
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| CliError::config(format!("{origin} line {}: {msg}", i + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected `key = value`, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if value.is_empty() {
                return Err(at(format!("key {key} has no value")));
            }
            match self.assign(key, value) {
                None => return Err(at(format!("unknown key {key:?}"))),
                Some(Err(msg)) => return Err(at(msg)),
                Some(Ok(())) => {}
            }
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(io_at(path))?;
        self.apply_overrides(&text, &path.display().to_string())
    }

    /// FNV-1a 64 over the canonical serialization. Stored in every artifact
    /// so stages refuse inputs produced under a different configuration.
    pub fn hash(&self) -> u64 {
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h = OFFSET;
        for b in self.canonical().bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(PRIME);
        }
        h
    }

    /// Cross-field sanity checks that the core constructors cannot see.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if !(self.freq_step_hz > 0.0) {
            return bad("freq_step_hz must be positive".into());
        }
        if self.freq_min_hz > self.freq_max_hz {
            return bad(format!(
                "freq_min_hz {} exceeds freq_max_hz {}",
                self.freq_min_hz, self.freq_max_hz
            ));
        }
        if !(self.freq_min_hz > 0.0) {
            return bad("freq_min_hz must be positive".into());
        }
        if !(self.source_amplitude > 0.0) || !self.source_amplitude.is_finite() {
            return bad("source_amplitude must be positive and finite".into());
        }
        if self.bench_reps == 0 {
            return bad("bench_reps must be at least 1".into());
        }
        if self.train_per_freq == 0 || self.test_per_freq == 0 || self.val_per_freq == 0 {
            return bad("per-frequency example counts must be at least 1".into());
        }
        if !(self.noise_kappa >= 0.0) || !self.noise_kappa.is_finite() {
            return bad("noise_kappa must be finite and non-negative".into());
        }
        Ok(())
    }

    // ---- derived objects -------------------------------------------------

    pub fn domain(&self) -> Rect<f64> {
        Rect::new(0.0, self.domain_width_m, 0.0, self.domain_height_m)
    }

    pub fn time_grid(&self) -> Result<TimeGrid<f64>> {
        Ok(TimeGrid::new(self.time_step_s, self.num_steps)?)
    }

    pub fn stft_plan(&self) -> Result<StftPlan<f64>> {
        Ok(StftPlan::new(
            self.window_len,
            self.hop,
            self.num_freqs,
            self.num_steps + 1,
            self.time_step_s,
        )?)
    }

    pub fn train_config(&self) -> TrainConfig<f64> {
        TrainConfig {
            head: self.head,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
        }
    }

    pub fn attack_config(&self) -> AttackConfig<f64> {
        AttackConfig {
            max_iters: self.attack_max_iters,
            check_every: self.attack_check_every,
            ..AttackConfig::default()
        }
    }

    /// The intruder tone ladder `freq_min, freq_min + step, ..<= freq_max`.
    pub fn frequencies_hz(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 0u32;
        loop {
            let f = self.freq_min_hz + f64::from(k) * self.freq_step_hz;
            if f > self.freq_max_hz * (1.0 + 1e-12) {
                break;
            }
            out.push(f);
            k += 1;
        }
        out
    }

    /// True when a tone at this frequency is labeled malicious.
    pub fn label_of(&self, freq_hz: f64) -> bool {
        freq_hz <= self.label_threshold_hz
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_is_sorted_and_covers_every_key() {
        let c = Config::profile(Profile::Desk);
        let canon = c.canonical();
        let keys: Vec<&str> = canon
            .lines()
            .map(|l| l.split(" = ").next().unwrap())
            .collect();
        let mut sorted = keys.clone();
        sorted.sort_unstable();
        assert_eq!(keys, sorted, "canonical keys must come out sorted");
        assert_eq!(keys.len(), KEY_TABLE.len());
    }

    #[test]
    fn canonical_round_trips_through_the_parser() {
        let paper = Config::profile(Profile::Paper);
        let mut rebuilt = Config::profile(Profile::Desk);
        rebuilt.apply_overrides(&paper.canonical(), "mem").unwrap();
        assert_eq!(rebuilt, paper);
        assert_eq!(rebuilt.hash(), paper.hash());
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected_with_line_numbers() {
        let mut c = Config::profile(Profile::Desk);
        let err = c.apply_overrides("seed = 1\nwibble = 2\n", "f").unwrap_err();
        assert!(err.to_string().contains("f line 2"), "{err}");
        assert!(err.to_string().contains("wibble"), "{err}");
        let err = c.apply_overrides("num_steps = soon", "f").unwrap_err();
        assert!(err.to_string().contains("soon"), "{err}");
        let err = c.apply_overrides("head = average", "f").unwrap_err();
        assert_eq!(err.exit_code(), 2, "{err}");
        assert!(c.apply_overrides("time_step_s = inf", "f").is_err());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let mut c = Config::profile(Profile::Desk);
        c.apply_overrides("# preamble\n\nseed = 9 # trailing\n", "f")
            .unwrap();
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn hash_changes_with_any_key() {
        let base = Config::profile(Profile::Desk);
        let mut tweaked = base.clone();
        tweaked.noise_kappa = 0.2;
        assert_ne!(base.hash(), tweaked.hash());
        assert_ne!(base.hash(), Config::profile(Profile::Paper).hash());
    }

    #[test]
    fn profiles_pass_their_own_validation_and_stability_bound() {
        for p in [Profile::Desk, Profile::Paper] {
            let c = Config::profile(p);
            c.validate().unwrap();
            c.time_grid().unwrap();
            let plan = c.stft_plan().unwrap();
            assert_eq!(plan.num_samples, c.num_steps + 1);
            // The configured step must clear the CFL bound even on the
            // jittered mesh the seed produces.
            let mesh = wavejam::build_rect_mesh(
                c.domain(),
                c.mesh_h_m,
                c.mesh_jitter_frac,
                wavejam::derive_seed(c.seed, &[0]),
            )
            .unwrap();
            let bound = wavejam::cfl_estimate(&mesh, c.wave_speed_m_per_s);
            assert!(
                c.time_step_s < bound,
                "profile step {} is not below the bound {bound}",
                c.time_step_s
            );
        }
    }

    #[test]
    fn frequency_ladder_spans_both_classes() {
        let c = Config::profile(Profile::Desk);
        let freqs = c.frequencies_hz();
        assert_eq!(freqs.len(), 20);
        assert_eq!(freqs[0], 50.0);
        assert_eq!(*freqs.last().unwrap(), 1000.0);
        assert_eq!(freqs.iter().filter(|&&f| c.label_of(f)).count(), 10);
        let p = Config::profile(Profile::Paper);
        assert_eq!(p.frequencies_hz().len(), 80);
        assert_eq!(
            p.frequencies_hz().iter().filter(|&&f| p.label_of(f)).count(),
            40
        );
    }
}
