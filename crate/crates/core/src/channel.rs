//! Aerial 5G link model built from field measurements of a commercial NSA
//! deployment at 3.5 GHz.
//!
//! Throughput is drawn per transfer from a normal distribution around the
//! measured mean of the active band, clamped at a 1 Mbps floor. One-way delay
//! is half the measured round-trip latency. Samples are keyed on
//! `(seed, t, direction, band)`, so replaying the same query sequence yields
//! bit-identical results without any mutable cursor.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{NodeId, UAV_NODE};

/// Upper edge of the measured altitude range, meters.
pub const MAX_MEASURED_ALTITUDE_M: f64 = 100.0;
/// Boundary between the low and high altitude bands, meters.
pub const BAND_SPLIT_ALTITUDE_M: f64 = 50.0;
/// Uplink throughput spread across altitudes, Mbps.
pub const DEFAULT_UL_STD_MBPS: f64 = 11.83;
/// Downlink throughput spread across altitudes, Mbps.
pub const DEFAULT_DL_STD_MBPS: f64 = 72.09;
pub const DEFAULT_FLOOR_MBPS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    /// 0 m to below 50 m.
    LowAltitude,
    /// 50 m to 100 m.
    HighAltitude,
    /// Rotating in place, any altitude.
    Rotation,
}

impl Band {
    pub const ALL: [Band; 3] = [Band::LowAltitude, Band::HighAltitude, Band::Rotation];

    fn index(self) -> usize {
        match self {
            Band::LowAltitude => 0,
            Band::HighAltitude => 1,
            Band::Rotation => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Band::LowAltitude => "low",
            Band::HighAltitude => "high",
            Band::Rotation => "rotation",
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Band {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" | "low_altitude" | "lowaltitude" => Ok(Band::LowAltitude),
            "high" | "high_altitude" | "highaltitude" => Ok(Band::HighAltitude),
            "rotation" => Ok(Band::Rotation),
            other => Err(format!("unknown band {other:?} (expected low, high or rotation)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Direction {
    /// UAV transmits.
    Ul,
    /// UAV receives.
    Dl,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Ul => "UL",
            Direction::Dl => "DL",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkBandParams {
    pub band: Band,
    pub dl_mean: f64,
    pub ul_mean: f64,
    /// Round-trip latency, milliseconds.
    pub rtt_mean: f64,
    pub dl_std: f64,
    pub ul_std: f64,
}

impl LinkBandParams {
    pub fn mean(&self, dir: Direction) -> f64 {
        match dir {
            Direction::Ul => self.ul_mean,
            Direction::Dl => self.dl_mean,
        }
    }

    pub fn std(&self, dir: Direction) -> f64 {
        match dir {
            Direction::Ul => self.ul_std,
            Direction::Dl => self.dl_std,
        }
    }

    fn check(&self) -> Result<(), ChannelError> {
        let ok = [self.dl_mean, self.ul_mean, self.rtt_mean].iter().all(|v| v.is_finite() && *v > 0.0)
            && [self.dl_std, self.ul_std].iter().all(|v| v.is_finite() && *v >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(ChannelError::InvalidParams(format!("{self:?}")))
        }
    }
}

/// Measured per-band means, with the across-altitude spreads applied to every
/// band.
pub fn default_link_params() -> [LinkBandParams; 3] {
    let band = |band, dl_mean, ul_mean, rtt_mean| LinkBandParams {
        band,
        dl_mean,
        ul_mean,
        rtt_mean,
        dl_std: DEFAULT_DL_STD_MBPS,
        ul_std: DEFAULT_UL_STD_MBPS,
    };
    [
        band(Band::LowAltitude, 356.77, 48.13, 20.06),
        band(Band::HighAltitude, 264.62, 37.12, 22.28),
        band(Band::Rotation, 339.97, 57.99, 19.8),
    ]
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("altitude {0} m is outside the measured range [0, {MAX_MEASURED_ALTITUDE_M}] m")]
    OutOfMeasuredRange(f64),
    #[error("payload must be finite and >= 0, got {0}")]
    InvalidPayload(f64),
    #[error("invalid link parameters: {0}")]
    InvalidParams(String),
}

/// Altitude band for a flight state. The 50 m boundary belongs to the high
/// band; rotation overrides altitude banding.
pub fn band_for(altitude: f64, rotating: bool) -> Result<Band, ChannelError> {
    if !(0.0..=MAX_MEASURED_ALTITUDE_M).contains(&altitude) {
        return Err(ChannelError::OutOfMeasuredRange(altitude));
    }
    Ok(if rotating {
        Band::Rotation
    } else if altitude < BAND_SPLIT_ALTITUDE_M {
        Band::LowAltitude
    } else {
        Band::HighAltitude
    })
}

/// Altitude and rotation of the UAV at some instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightState {
    pub altitude: f64,
    pub rotating: bool,
}

impl FlightState {
    pub const fn hover(altitude: f64) -> Self {
        Self { altitude, rotating: false }
    }

    pub fn band(&self) -> Result<Band, ChannelError> {
        band_for(self.altitude, self.rotating)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSample {
    pub t: f64,
    pub direction: Direction,
    pub band: Band,
    /// Mbps.
    pub throughput: f64,
    /// Milliseconds.
    pub one_way_delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub bands: [LinkBandParams; 3],
    pub noise_seed: u64,
    /// Wireless node served by this link.
    pub attachment: NodeId,
    pub floor_mbps: f64,
    /// Multiplies every band's standard deviation. 0 gives a mean-only link.
    pub variance_scale: f64,
    /// Replaces `rtt / 2` as the one-way delay when set, milliseconds.
    pub one_way_delay_override: Option<f64>,
}

impl Default for LinkModel {
    fn default() -> Self {
        Self::new(default_link_params(), 0)
    }
}

impl LinkModel {
    pub fn new(bands: [LinkBandParams; 3], noise_seed: u64) -> Self {
        Self {
            bands,
            noise_seed,
            attachment: UAV_NODE,
            floor_mbps: DEFAULT_FLOOR_MBPS,
            variance_scale: 1.0,
            one_way_delay_override: None,
        }
    }

    /// Same means, zero variance. Used for reproducible predictions.
    pub fn mean_only(&self) -> Self {
        Self { variance_scale: 0.0, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        for (i, b) in self.bands.iter().enumerate() {
            if b.band.index() != i {
                return Err(ChannelError::InvalidParams(format!("band {} out of order", b.band)));
            }
            b.check()?;
        }
        let scalars = [self.floor_mbps, self.variance_scale];
        if !(self.floor_mbps > 0.0 && scalars.iter().all(|v| v.is_finite()) && self.variance_scale >= 0.0) {
            return Err(ChannelError::InvalidParams(format!(
                "floor {} Mbps, variance scale {}",
                self.floor_mbps, self.variance_scale
            )));
        }
        if let Some(d) = self.one_way_delay_override {
            if !(d.is_finite() && d >= 0.0) {
                return Err(ChannelError::InvalidParams(format!("one-way delay override {d}")));
            }
        }
        Ok(())
    }

    pub fn params(&self, band: Band) -> &LinkBandParams {
        &self.bands[band.index()]
    }

    pub fn params_mut(&mut self, band: Band) -> &mut LinkBandParams {
        &mut self.bands[band.index()]
    }

    /// One-way delay for a band, milliseconds.
    pub fn one_way_delay(&self, band: Band) -> f64 {
        self.one_way_delay_override.unwrap_or(self.params(band).rtt_mean / 2.0)
    }

    /// Samples the link's throughput for a transfer starting at `t`.
    pub fn sample_throughput(
        &self,
        t: f64,
        flight: FlightState,
        direction: Direction,
    ) -> Result<LinkSample, ChannelError> {
        let band = flight.band()?;
        let params = self.params(band);
        let mean = params.mean(direction);
        let std = params.std(direction) * self.variance_scale;
        let raw = if std > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(sample_key(self.noise_seed, t, direction, band));
            // std is finite and positive here, so construction cannot fail.
            Normal::new(mean, std).expect("valid normal").sample(&mut rng)
        } else {
            mean
        };
        Ok(LinkSample {
            t,
            direction,
            band,
            throughput: raw.max(self.floor_mbps),
            one_way_delay: self.one_way_delay(band),
        })
    }

    /// Seconds to move `payload` bits over the link: one-way delay plus
    /// serialization at the sampled throughput.
    pub fn transfer_time(
        &self,
        payload: f64,
        t: f64,
        flight: FlightState,
        direction: Direction,
    ) -> Result<f64, ChannelError> {
        Ok(self.transfer(payload, t, flight, direction)?.0)
    }

    /// Like [`transfer_time`](Self::transfer_time) but also returns the sample.
    pub fn transfer(
        &self,
        payload: f64,
        t: f64,
        flight: FlightState,
        direction: Direction,
    ) -> Result<(f64, LinkSample), ChannelError> {
        if !(payload.is_finite() && payload >= 0.0) {
            return Err(ChannelError::InvalidPayload(payload));
        }
        let sample = self.sample_throughput(t, flight, direction)?;
        let secs = sample.one_way_delay / 1e3 + payload / (sample.throughput * 1e6);
        Ok((secs, sample))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn sample_key(seed: u64, t: f64, direction: Direction, band: Band) -> u64 {
    let dir = match direction {
        Direction::Ul => 1u64,
        Direction::Dl => 2,
    };
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ t.to_bits());
    h = splitmix64(h ^ (dir << 8 | band.index() as u64));
    h
}

/// Wired or dedicated path between two ground nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Backhaul {
    pub rate_mbps: f64,
    pub delay_ms: f64,
}

impl Default for Backhaul {
    fn default() -> Self {
        Self { rate_mbps: 1000.0, delay_ms: 2.0 }
    }
}

/// How a hop between two nodes is carried.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "via", rename_all = "snake_case")]
pub enum HopSample {
    Radio(LinkSample),
    Backhaul { rate_mbps: f64, delay_ms: f64 },
}

/// The UAV's radio link plus the ground backhaul between servers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub radio: LinkModel,
    pub backhaul: Backhaul,
}

impl Network {
    pub fn new(radio: LinkModel) -> Self {
        Self { radio, backhaul: Backhaul::default() }
    }

    pub fn mean_only(&self) -> Self {
        Self { radio: self.radio.mean_only(), backhaul: self.backhaul }
    }

    /// Radio direction for a hop, or `None` when neither end is the attached
    /// wireless node.
    pub fn direction(&self, from: NodeId, to: NodeId) -> Option<Direction> {
        if from == self.radio.attachment {
            Some(Direction::Ul)
        } else if to == self.radio.attachment {
            Some(Direction::Dl)
        } else {
            None
        }
    }

    /// Seconds to move `payload` bits from `from` to `to`. Zero when both ends
    /// are the same node.
    pub fn hop(
        &self,
        from: NodeId,
        to: NodeId,
        payload: f64,
        t: f64,
        flight: FlightState,
    ) -> Result<Option<(f64, HopSample)>, ChannelError> {
        if from == to {
            return Ok(None);
        }
        match self.direction(from, to) {
            Some(dir) => {
                let (secs, sample) = self.radio.transfer(payload, t, flight, dir)?;
                Ok(Some((secs, HopSample::Radio(sample))))
            }
            None => {
                if !(payload.is_finite() && payload >= 0.0) {
                    return Err(ChannelError::InvalidPayload(payload));
                }
                let b = self.backhaul;
                let secs = b.delay_ms / 1e3 + payload / (b.rate_mbps * 1e6);
                Ok(Some((secs, HopSample::Backhaul { rate_mbps: b.rate_mbps, delay_ms: b.delay_ms })))
            }
        }
    }
}

/// Whether a stream bitrate fits within a band's mean uplink.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub bitrate: f64,
    pub band: Band,
    pub mean_uplink: f64,
    /// Mean uplink minus bitrate, Mbps.
    pub headroom: f64,
    pub sustainable: bool,
}

/// Compares `bitrate` (Mbps) with the band's mean uplink. A stream is
/// sustainable only with headroom strictly greater than `margin`.
pub fn uplink_feasibility(link: &LinkModel, bitrate: f64, band: Band, margin: f64) -> Feasibility {
    let mean_uplink = link.params(band).ul_mean;
    let headroom = mean_uplink - bitrate;
    Feasibility { bitrate, band, mean_uplink, headroom, sustainable: headroom > margin }
}
