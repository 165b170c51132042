//! Run and sweep configuration, including the bundled sweep profiles.
//!
//! Sweep files are flat key/value text with one section per family plus an
//! optional `[defaults]` section:
//!
//! ```text
//! [defaults]
//! trials = 10
//! time_cap = 1200
//!
//! [LI]
//! width_min = 2
//! width_step = 100
//! width_max = 1502
//! depth_min = 1
//! depth_step = 100
//! depth_max = 1501
//! ```

use std::fmt;
use std::str::FromStr;

use devstone_core::{BenchmarkSpec, Family};
use serde::Deserialize;
use thiserror::Error;

pub const DEFAULT_TRIALS: u32 = 10;
pub const DEFAULT_TIME_CAP: f64 = 1200.0;
pub const DEFAULT_MEM_CAP: u64 = 4 * 1024 * 1024 * 1024;

const PAPER_PROFILE: &str = include_str!("../profiles/paper.cfg");
const DESK_PROFILE: &str = include_str!("../profiles/desk.cfg");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("trials must be at least 1")]
    Trials,
    #[error("caps must be positive")]
    Caps,
    #[error("invalid benchmark: {0}")]
    Spec(#[from] devstone_core::devstone::SpecError),
    #[error("{family} {axis} range {range} is invalid: {reason}")]
    Range {
        family: Family,
        axis: &'static str,
        range: ParamRange,
        reason: &'static str,
    },
    #[error("{family} section is missing `{key}`")]
    MissingKey { family: Family, key: &'static str },
    #[error("cannot parse sweep config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown profile `{0}` (expected paper or desk)")]
    UnknownProfile(String),
}

/// One benchmark cell plus how to measure it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub spec: BenchmarkSpec,
    pub trials: u32,
    /// Wall-clock cap on the simulation loop, seconds.
    pub time_cap: f64,
    /// Memory cap, bytes.
    pub mem_cap: u64,
    /// Run each trial in its own child process.
    pub isolate: bool,
}

impl RunConfig {
    pub fn new(spec: BenchmarkSpec) -> Self {
        RunConfig {
            spec,
            trials: DEFAULT_TRIALS,
            time_cap: DEFAULT_TIME_CAP,
            mem_cap: DEFAULT_MEM_CAP,
            isolate: true,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.spec.validate()?;
        if self.trials < 1 {
            return Err(ConfigError::Trials);
        }
        if !(self.time_cap > 0.0 && self.time_cap.is_finite()) || self.mem_cap == 0 {
            return Err(ConfigError::Caps);
        }
        Ok(())
    }
}

/// Inclusive `min..=max` range walked in `step` increments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamRange {
    pub min: u32,
    pub step: u32,
    pub max: u32,
}

impl ParamRange {
    pub fn new(min: u32, step: u32, max: u32) -> Self {
        ParamRange { min, step, max }
    }

    pub fn values(&self) -> impl Iterator<Item = u32> {
        (self.min..=self.max).step_by(self.step.max(1) as usize)
    }

    pub fn len(&self) -> usize {
        if self.max < self.min || self.step == 0 {
            0
        } else {
            ((self.max - self.min) / self.step + 1) as usize
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for ParamRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.min, self.step, self.max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilySweep {
    pub family: Family,
    pub width: ParamRange,
    pub depth: ParamRange,
    pub trials: u32,
    pub time_cap: f64,
    pub mem_cap: u64,
    pub int_delay: f64,
    pub ext_delay: f64,
    pub events: u32,
}

impl FamilySweep {
    fn validate(&self) -> Result<(), ConfigError> {
        let check = |axis, range: ParamRange, floor| {
            let reason = if range.min < floor {
                Some("min below family minimum")
            } else if range.step < 1 {
                Some("step must be at least 1")
            } else if range.max < range.min {
                Some("max below min")
            } else {
                None
            };
            match reason {
                Some(reason) => Err(ConfigError::Range {
                    family: self.family,
                    axis,
                    range,
                    reason,
                }),
                None => Ok(()),
            }
        };
        check("width", self.width, 2)?;
        check("depth", self.depth, 1)?;
        self.run_config(self.width.min, self.depth.min, true)
            .validate()
    }

    pub fn run_config(&self, width: u32, depth: u32, isolate: bool) -> RunConfig {
        RunConfig {
            spec: BenchmarkSpec::new(self.family, width, depth)
                .with_delays(self.int_delay, self.ext_delay)
                .with_events(self.events),
            trials: self.trials,
            time_cap: self.time_cap,
            mem_cap: self.mem_cap,
            isolate,
        }
    }

    pub fn cell_count(&self) -> usize {
        self.width.len() * self.depth.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// In family order LI, HI, HO, HOmod, HOmem.
    pub families: Vec<FamilySweep>,
    pub isolate: bool,
}

impl SweepConfig {
    pub fn cell_count(&self) -> usize {
        self.families.iter().map(FamilySweep::cell_count).sum()
    }

    /// Parses a sweep file on its own.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::empty().overlay(text)
    }

    pub fn profile(profile: Profile) -> Self {
        let text = match profile {
            Profile::Paper => PAPER_PROFILE,
            Profile::Desk => DESK_PROFILE,
        };
        Self::parse(text).expect("bundled profiles parse")
    }

    fn empty() -> Self {
        SweepConfig {
            families: Vec::new(),
            isolate: true,
        }
    }

    /// Applies the keys of `text` on top of this configuration. Families not
    /// yet present must define every range key.
    pub fn overlay(mut self, text: &str) -> Result<Self, ConfigError> {
        let mut file: SweepFile = toml::from_str(text)?;
        let defaults = file.defaults.take().unwrap_or_default();
        for fs in &mut self.families {
            defaults.apply_shared(fs);
        }
        for (family, section) in file.sections() {
            let Some(section) = section else { continue };
            let idx = match self.families.iter().position(|f| f.family == family) {
                Some(i) => i,
                None => {
                    let mut fs = FamilySweep {
                        family,
                        width: ParamRange::new(0, 0, 0),
                        depth: ParamRange::new(0, 0, 0),
                        trials: DEFAULT_TRIALS,
                        time_cap: DEFAULT_TIME_CAP,
                        mem_cap: DEFAULT_MEM_CAP,
                        int_delay: 0.0,
                        ext_delay: 0.0,
                        events: 1,
                    };
                    section.require_ranges(family)?;
                    defaults.apply_shared(&mut fs);
                    self.families.push(fs);
                    self.families.len() - 1
                }
            };
            section.apply(&mut self.families[idx]);
        }
        self.families.sort_by_key(|f| f.family);
        for fs in &self.families {
            fs.validate()?;
        }
        Ok(self)
    }

    /// Keeps only the listed families.
    pub fn retain_families(&mut self, keep: &[Family]) {
        self.families.retain(|f| keep.contains(&f.family));
    }

    pub fn for_each_family(
        &mut self,
        mut f: impl FnMut(&mut FamilySweep),
    ) -> Result<(), ConfigError> {
        for fs in &mut self.families {
            f(fs);
            fs.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Paper,
    Desk,
}

impl FromStr for Profile {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            _ => Err(ConfigError::UnknownProfile(s.to_string())),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Section {
    width_min: Option<u32>,
    width_step: Option<u32>,
    width_max: Option<u32>,
    depth_min: Option<u32>,
    depth_step: Option<u32>,
    depth_max: Option<u32>,
    trials: Option<u32>,
    time_cap: Option<f64>,
    mem_cap: Option<u64>,
    delta_int: Option<f64>,
    delta_ext: Option<f64>,
    events: Option<u32>,
}

impl Section {
    fn require_ranges(&self, family: Family) -> Result<(), ConfigError> {
        let keys = [
            ("width_min", self.width_min),
            ("width_step", self.width_step),
            ("width_max", self.width_max),
            ("depth_min", self.depth_min),
            ("depth_step", self.depth_step),
            ("depth_max", self.depth_max),
        ];
        match keys.iter().find(|(_, v)| v.is_none()) {
            Some((key, _)) => Err(ConfigError::MissingKey { family, key }),
            None => Ok(()),
        }
    }

    fn apply_shared(&self, fs: &mut FamilySweep) {
        if let Some(v) = self.trials {
            fs.trials = v;
        }
        if let Some(v) = self.time_cap {
            fs.time_cap = v;
        }
        if let Some(v) = self.mem_cap {
            fs.mem_cap = v;
        }
        if let Some(v) = self.delta_int {
            fs.int_delay = v;
        }
        if let Some(v) = self.delta_ext {
            fs.ext_delay = v;
        }
        if let Some(v) = self.events {
            fs.events = v;
        }
    }

    fn apply(&self, fs: &mut FamilySweep) {
        let set = |slot: &mut u32, v: Option<u32>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut fs.width.min, self.width_min);
        set(&mut fs.width.step, self.width_step);
        set(&mut fs.width.max, self.width_max);
        set(&mut fs.depth.min, self.depth_min);
        set(&mut fs.depth.step, self.depth_step);
        set(&mut fs.depth.max, self.depth_max);
        self.apply_shared(fs);
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    defaults: Option<Section>,
    #[serde(rename = "LI")]
    li: Option<Section>,
    #[serde(rename = "HI")]
    hi: Option<Section>,
    #[serde(rename = "HO")]
    ho: Option<Section>,
    #[serde(rename = "HOmod")]
    homod: Option<Section>,
    #[serde(rename = "HOmem")]
    homem: Option<Section>,
}

impl SweepFile {
    fn sections(self) -> [(Family, Option<Section>); 5] {
        [
            (Family::Li, self.li),
            (Family::Hi, self.hi),
            (Family::Ho, self.ho),
            (Family::HoMod, self.homod),
            (Family::HoMem, self.homem),
        ]
    }
}
