//! Versioned JSON run configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelModel, Scenario};
use crate::eval::EvalConfig;
use crate::frontend::BpfSpec;
use crate::io::WavFormat;
use crate::locator::LocatorSettings;
use crate::pll::PllConfig;
use crate::pulsedet::ThresholdPolicy;
use crate::waveform::WaveformParams;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub waveform: WaveformParams,
    #[serde(default)]
    pub channel: ChannelModel,
    #[serde(default)]
    pub scenario: Option<Scenario>,
    /// Band-pass filter; centred on the carrier when absent.
    #[serde(default)]
    pub bpf: Option<BpfSpec>,
    #[serde(default)]
    pub pll: PllConfig,
    #[serde(default)]
    pub detector: Option<ThresholdPolicy>,
    #[serde(default)]
    pub locator: LocatorSettings,
    #[serde(default)]
    pub eval: EvalConfig,
    /// Transmit length for `synth` when there is no scenario, s.
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default)]
    pub wav_format: WavFormat,
}

fn default_duration() -> f64 {
    10.0
}

impl Default for Config {
    fn default() -> Self {
        Self {
            schema: SCHEMA_VERSION,
            seed: 0,
            waveform: WaveformParams::default(),
            channel: ChannelModel::default(),
            scenario: None,
            bpf: None,
            pll: PllConfig::default(),
            detector: None,
            locator: LocatorSettings::default(),
            eval: EvalConfig::default(),
            duration: default_duration(),
            wav_format: WavFormat::default(),
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        match raw.get("schema").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::Config(format!(
                    "schema {v}, this build reads {SCHEMA_VERSION}"
                )))
            }
            None => return Err(Error::Config("missing \"schema\"".into())),
        }
        let cfg: Config = serde_json::from_value(raw).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.waveform.validate()?;
        self.channel.validate()?;
        self.pll.validate()?;
        self.bpf_spec().validate(self.waveform.sample_rate)?;
        if let Some(s) = &self.scenario {
            s.validate()?;
        }
        if (self.pll.carrier_hz - self.waveform.carrier_hz).abs() > 1e-9
            || (self.pll.sample_rate - self.waveform.sample_rate).abs() > 1e-9
        {
            return Err(Error::Config(
                "pll carrier/rate differ from the waveform".into(),
            ));
        }
        Ok(())
    }

    pub fn bpf_spec(&self) -> BpfSpec {
        self.bpf
            .unwrap_or_else(|| BpfSpec::centered(self.waveform.carrier_hz))
    }

    pub fn detector(&self) -> ThresholdPolicy {
        self.detector
            .unwrap_or_else(|| ThresholdPolicy::for_params(&self.waveform))
    }

    /// Retunes waveform, loop and filter to another carrier.
    pub fn with_channel(mut self, carrier_hz: f64) -> Result<Self> {
        self.waveform.carrier_hz = carrier_hz;
        self.pll.carrier_hz = carrier_hz;
        if let Some(b) = &mut self.bpf {
            b.center = carrier_hz;
        }
        self.validate()?;
        Ok(self)
    }
}
