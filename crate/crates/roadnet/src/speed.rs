//! Speed policy: metadata → mph, the 7-bin channel scheme, and travel time.
//!
//! Base speeds come from a (road type, lane bucket) table; unpaved roads are
//! slowed by a multiplier (0.75 by default). Speeds map to seven 10 mph-wide
//! mask channels: channel 0 covers (0, 10] mph, channel 1 (10, 20] mph, and
//! so on up to channel 6.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{RoadEdge, RoadGraph, RoadMetadata, RoadType, MPH_TO_MPS};

/// Number of speed channels.
pub const N_CHANNELS: usize = 7;
/// Width of one speed bin in mph.
pub const BIN_WIDTH_MPH: f64 = 10.0;
/// Maximum road speed in mph; continuous masks scale against this.
pub const MAX_SPEED_MPH: f64 = 65.0;

/// Base speed lookup with the default table baked in; every entry can be
/// overridden from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeedTable {
    /// mph for (road type, lane bucket) with buckets 1, 2, 3+.
    pub base: HashMap<RoadType, [f64; 3]>,
    /// Multiplier applied to unpaved roads.
    pub unpaved_multiplier: f64,
}

impl Default for SpeedTable {
    fn default() -> Self {
        let mut base = HashMap::new();
        base.insert(RoadType::Motorway, [55.0, 55.0, 65.0]);
        base.insert(RoadType::Primary, [45.0, 45.0, 55.0]);
        base.insert(RoadType::Secondary, [35.0, 35.0, 45.0]);
        base.insert(RoadType::Tertiary, [30.0, 30.0, 35.0]);
        base.insert(RoadType::Residential, [25.0, 25.0, 30.0]);
        base.insert(RoadType::Unclassified, [20.0, 20.0, 20.0]);
        base.insert(RoadType::CartTrack, [20.0, 20.0, 20.0]);
        SpeedTable {
            base,
            unpaved_multiplier: 0.75,
        }
    }
}

impl SpeedTable {
    /// Final speed for a labeled edge: table lookup by lane bucket, then the
    /// unpaved multiplier when applicable.
    pub fn assign_speed(&self, md: &RoadMetadata) -> f64 {
        let bucket = (md.lanes.clamp(1, 3) - 1) as usize;
        let base = self.base[&md.road_type][bucket];
        if md.paved {
            base
        } else {
            base * self.unpaved_multiplier
        }
    }
}

/// Convenience wrapper over the default table.
pub fn assign_speed(md: &RoadMetadata) -> f64 {
    SpeedTable::default().assign_speed(md)
}

/// Fill missing edge speeds (and travel times) from the table using each
/// edge's metadata. Edges that already carry a speed keep it (the travel
/// time is recomputed if absent); edges with neither speed nor metadata
/// are left untouched.
pub fn apply_speed_table(graph: &RoadGraph, table: &SpeedTable) -> RoadGraph {
    let mut b = RoadGraph::builder();
    for n in graph.nodes() {
        b.node_at(n.x, n.y);
    }
    for e in graph.edges() {
        let speed = e
            .speed_mph
            .or_else(|| e.metadata.as_ref().map(|md| table.assign_speed(md)));
        let time = e
            .travel_time_s
            .or_else(|| speed.map(|s| e.length_m / (s * MPH_TO_MPS)));
        b.edge(RoadEdge {
            speed_mph: speed,
            travel_time_s: time,
            ..e.clone()
        });
    }
    b.build().with_transform(graph.transform().cloned())
}

/// Channel index for a speed in (0, 70] mph. Bin boundaries are half-open,
/// `(10·i, 10·(i+1)]`, so 10 mph lands in channel 0.
pub fn speed_to_channel(speed_mph: f64) -> Result<usize> {
    if !(speed_mph > 0.0 && speed_mph <= BIN_WIDTH_MPH * N_CHANNELS as f64) {
        return Err(Error::domain(format!(
            "speed {speed_mph} mph outside (0, 70]"
        )));
    }
    Ok((speed_mph / BIN_WIDTH_MPH).ceil() as usize - 1)
}

/// Center speed of a channel: 10·c + 5 mph.
pub fn channel_to_speed(channel: usize) -> Result<f64> {
    if channel >= N_CHANNELS {
        return Err(Error::domain(format!(
            "channel {channel} outside 0..{N_CHANNELS}"
        )));
    }
    Ok(BIN_WIDTH_MPH * channel as f64 + 5.0)
}

/// Bin-center quantization of a speed.
pub fn quantize_speed(speed_mph: f64) -> Result<f64> {
    channel_to_speed(speed_to_channel(speed_mph)?)
}

/// Seconds to traverse `length_m` meters at `speed_mph`.
pub fn travel_time(length_m: f64, speed_mph: f64) -> Result<f64> {
    if !(speed_mph > 0.0) {
        return Err(Error::domain(format!(
            "travel time needs a positive speed, got {speed_mph}"
        )));
    }
    if length_m < 0.0 {
        return Err(Error::domain("negative length"));
    }
    Ok(length_m / (speed_mph * MPH_TO_MPS))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_examples() {
        assert_eq!(
            assign_speed(&RoadMetadata::new(RoadType::Motorway, 3, true)),
            65.0
        );
        assert_eq!(
            assign_speed(&RoadMetadata::new(RoadType::Residential, 1, true)),
            25.0
        );
        assert_eq!(
            assign_speed(&RoadMetadata::new(RoadType::CartTrack, 1, false)),
            15.0
        );
    }

    #[test]
    fn lane_bucketing_and_monotonicity() {
        let t = SpeedTable::default();
        for rt in RoadType::ALL {
            let row = t.base[&rt];
            assert!(row[0] <= row[1] && row[1] <= row[2]);
            // 4+ lanes use the 3+ bucket.
            assert_eq!(
                t.assign_speed(&RoadMetadata::new(rt, 7, true)),
                t.assign_speed(&RoadMetadata::new(rt, 3, true))
            );
            // Unpaved is exactly 0.75x for every lane count.
            for lanes in 1..=4 {
                let paved = t.assign_speed(&RoadMetadata::new(rt, lanes, true));
                let unpaved = t.assign_speed(&RoadMetadata::new(rt, lanes, false));
                assert_eq!(unpaved, paved * 0.75);
                assert!((15.0..=65.0).contains(&unpaved));
            }
        }
    }

    #[test]
    fn channel_binning() {
        assert_eq!(speed_to_channel(10.0).unwrap(), 0);
        assert_eq!(speed_to_channel(10.5).unwrap(), 1);
        assert_eq!(speed_to_channel(35.0).unwrap(), 3);
        assert_eq!(speed_to_channel(65.0).unwrap(), 6);
        assert!(speed_to_channel(0.0).is_err());
        assert!(speed_to_channel(70.5).is_err());

        assert_eq!(channel_to_speed(3).unwrap(), 35.0);
        assert_eq!(channel_to_speed(0).unwrap(), 5.0);
        assert_eq!(channel_to_speed(6).unwrap(), 65.0);
        assert!(channel_to_speed(7).is_err());

        // Round trip on channel indices.
        for c in 0..N_CHANNELS {
            assert_eq!(speed_to_channel(channel_to_speed(c).unwrap()).unwrap(), c);
        }
        // Binning error is at most half a bin.
        for i in 1..=700 {
            let s = i as f64 / 10.0;
            let back = quantize_speed(s).unwrap();
            assert!((back - s).abs() <= 5.0 + 1e-12, "s={s} back={back}");
        }
    }

    #[test]
    fn travel_time_examples() {
        assert_eq!(travel_time(0.0, 30.0).unwrap(), 0.0);
        assert!((travel_time(1000.0, 25.0).unwrap() - 89.477).abs() < 1e-3);
        assert!((travel_time(447.04, 10.0).unwrap() - 100.0).abs() < 1e-12);
        assert!(travel_time(100.0, 0.0).is_err());
        assert!(travel_time(-1.0, 10.0).is_err());
    }
}
