//! Linear FPGA resource model and peak arithmetic rate.
//!
//! Only two synthesized instances are available to anchor the model (16 and
//! 32 cores), so the fixed LUT overhead is interpolated linearly between them
//! and anything outside `[16, 32]` cores is reported as uncalibrated.

use super::ArchConfig;
use std::ops::RangeInclusive;

pub const LUTS_PER_CORE: u64 = 1_364;
pub const DSPS_PER_CORE: u64 = 4;
pub const DSP_OVERHEAD: u64 = 7;

/// (cores, LUT overhead) anchor points.
const LUT_ANCHORS: [(u64, u64); 2] = [(16, 2_566), (32, 2_928)];

/// 36 Kb blocks per word of total local memory: 140 blocks for 512 KB.
const BRAM_BLOCKS: u64 = 140;
const BRAM_WORDS: u64 = 131_072;

/// Core counts inside which the model interpolates between measured points.
pub const CALIBRATED_CORES: RangeInclusive<u32> = 16..=32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResourceEstimate {
    pub luts: u64,
    pub dsps: u64,
    /// 36 Kb-equivalent block RAMs.
    pub brams: u64,
    /// True when the core count lies outside the calibrated range.
    pub extrapolated: bool,
}

/// Peak rate in FLOP/s: one fused multiply-add (two operations) per core per
/// cycle.
pub fn peak_flops(cfg: &ArchConfig) -> f64 {
    2.0 * cfg.num_cores as f64 * cfg.clock_hz as f64
}

fn lut_overhead(p: u64) -> u64 {
    let [(p0, o0), (p1, o1)] = LUT_ANCHORS;
    // o(p) = o0 + (p - p0) * (o1 - o0) / (p1 - p0), rounded to nearest
    let num = o0 as i128 * (p1 - p0) as i128 + (p as i128 - p0 as i128) * (o1 - o0) as i128;
    let den = (p1 - p0) as i128;
    let v = (2 * num + den).div_euclid(2 * den);
    v.max(0) as u64
}

pub fn estimate_resources(cfg: &ArchConfig) -> ResourceEstimate {
    let p = cfg.num_cores as u64;
    let words = cfg.total_local_mem_words();
    ResourceEstimate {
        luts: LUTS_PER_CORE * p + lut_overhead(p),
        dsps: DSPS_PER_CORE * p + DSP_OVERHEAD,
        brams: (words * BRAM_BLOCKS).div_ceil(BRAM_WORDS),
        extrapolated: !CALIBRATED_CORES.contains(&cfg.num_cores),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_matches_reference_rates() {
        assert_eq!(peak_flops(&ArchConfig::default()), 8.0e9);
        assert_eq!(peak_flops(&ArchConfig::baseline_32core()), 16.0e9);
        let one = ArchConfig {
            num_cores: 1,
            cores_per_cluster: 1,
            ..ArchConfig::default()
        };
        assert_eq!(peak_flops(&one), 0.5e9);
    }

    #[test]
    fn both_synthesized_instances_are_exact() {
        let a = estimate_resources(&ArchConfig::default());
        assert_eq!(
            (a.luts, a.dsps, a.brams, a.extrapolated),
            (24_390, 71, 140, false)
        );
        let b = estimate_resources(&ArchConfig::baseline_32core());
        assert_eq!(
            (b.luts, b.dsps, b.brams, b.extrapolated),
            (46_576, 135, 140, false)
        );
    }

    #[test]
    fn overhead_arithmetic() {
        assert_eq!(24_390 - 16 * LUTS_PER_CORE, 2_566);
        assert_eq!(46_576 - 32 * LUTS_PER_CORE, 2_928);
        assert_eq!(71 - 16 * DSPS_PER_CORE, DSP_OVERHEAD);
        assert_eq!(135 - 32 * DSPS_PER_CORE, DSP_OVERHEAD);
        assert_eq!(lut_overhead(24), 2_747);
    }

    #[test]
    fn outside_anchor_range_is_flagged() {
        let cfg = ArchConfig {
            num_cores: 64,
            cores_per_cluster: 16,
            ..ArchConfig::default()
        };
        let e = estimate_resources(&cfg);
        assert!(e.extrapolated);
        assert!(e.luts > 46_576);
    }
}
