//! Base-supply synthesis, flexibility-bid generation and bid perturbation.
//!
//! All randomness is drawn from keyed streams: every (seed, bus, field,
//! sample) tuple owns an independent generator, so adding or removing a bid
//! at one bus never shifts the draws at another, and restricting the
//! eligible bus set (SL1 vs SL2) is exactly a filter over the same draws.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::RadialNetwork;

/// Bid-cost bounds, EUR/MWh: demand bids draw from `DEMAND_COST_RANGE`,
/// supply offers from `SUPPLY_COST_RANGE`.
pub const DEMAND_COST_RANGE: (f64, f64) = (35.0, 45.0);
pub const SUPPLY_COST_RANGE: (f64, f64) = (45.0, 55.0);

/// Base-supply fraction of load, drawn uniformly per bus.
pub const BASE_SUPPLY_RANGE: (f64, f64) = (0.10, 0.90);

#[derive(Debug, Error)]
pub enum BidError {
    #[error("bid references unknown bus {0}")]
    UnknownBus(i64),
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("csv error: {0}")]
    Csv(String),
}

/// How widely flexibility is offered across the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpreadLevel {
    /// Bids only at the end nodes of long laterals.
    Sl1,
    /// Bids at every bus where load or generation exists.
    Sl2,
}

impl std::fmt::Display for SpreadLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpreadLevel::Sl1 => write!(f, "SL1"),
            SpreadLevel::Sl2 => write!(f, "SL2"),
        }
    }
}

/// Base generation and load profiles, MW per bus (internal index).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaseProfile {
    /// Base supply per bus, MW.
    pub p_gen: Vec<f64>,
    /// Base real load per bus, MW (after `load_scale`).
    pub p_load: Vec<f64>,
    /// Base reactive load per bus, MVAr (after `load_scale`).
    pub q_load: Vec<f64>,
    /// Multiplier that was applied to the case's base load.
    pub load_scale: f64,
}

impl BaseProfile {
    /// Net base injection at a bus, MW (generation minus load).
    pub fn net_injection(&self, bus: usize) -> f64 {
        self.p_gen[bus] - self.p_load[bus]
    }
}

/// A four-sided flexibility offer at one bus. Quantities are MW caps,
/// costs EUR/MWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlexBid {
    /// External bus label.
    pub bus: i64,
    /// Generation-increase cap.
    pub qty_p_up: f64,
    /// Generation-decrease cap.
    pub qty_p_dn: f64,
    /// Demand-decrease (upward flexibility) cap.
    pub qty_d_up: f64,
    /// Demand-increase (downward flexibility) cap.
    pub qty_d_dn: f64,
    pub cost_p_up: f64,
    pub cost_p_dn: f64,
    pub cost_d_up: f64,
    pub cost_d_dn: f64,
}

/// Monte Carlo sampling configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Std-dev of the Gaussian cost scale factor.
    pub sigma_cost: f64,
    /// Std-dev of the Gaussian quantity scale factor.
    pub sigma_qty: f64,
    pub seed: u64,
    pub samples: usize,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), BidError> {
        if self.sigma_cost < 0.0 || self.sigma_qty < 0.0 {
            return Err(BidError::InvalidConfig("sigma must be >= 0".into()));
        }
        if self.samples < 1 {
            return Err(BidError::InvalidConfig("samples must be >= 1".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// keyed RNG streams

/// Stream labels; each (seed, label, bus, sample) tuple is an independent
/// generator.
#[derive(Debug, Clone, Copy)]
pub(crate) enum StreamField {
    BaseSupply,
    CostPUp,
    CostPDn,
    CostDUp,
    CostDDn,
    QtyPUp,
    QtyPDn,
    QtyDUp,
    QtyDDn,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Domain-separation constant so these streams can never collide with a
/// generator seeded elsewhere from the same user seed.
const STREAM_DOMAIN: u64 = 0x5b1d_cafe_f1e8_0001;

/// Deterministic generator for a (seed, field, bus, sample) tuple.
pub(crate) fn stream(seed: u64, field: StreamField, bus: i64, sample: u64) -> ChaCha8Rng {
    let mut state = splitmix64(seed ^ STREAM_DOMAIN);
    for part in [field as u64, bus as u64, sample] {
        state = splitmix64(state ^ splitmix64(part));
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

// ---------------------------------------------------------------------------

/// Synthesize base supply at every loaded bus: a uniform fraction of the bus
/// load in `BASE_SUPPLY_RANGE`, drawn independently per bus.
pub fn synthesize_base_supply(net: &RadialNetwork, seed: u64, load_scale: f64) -> BaseProfile {
    let n = net.n_buses();
    let mut p_gen = vec![0.0; n];
    let mut p_load = vec![0.0; n];
    let mut q_load = vec![0.0; n];
    for i in 0..n {
        let bus = &net.buses[i];
        p_load[i] = bus.base_load_p * load_scale;
        q_load[i] = bus.base_load_q * load_scale;
        if p_load[i] > 0.0 {
            let mut rng = stream(seed, StreamField::BaseSupply, bus.id, 0);
            let u = rng.gen_range(BASE_SUPPLY_RANGE.0..BASE_SUPPLY_RANGE.1);
            p_gen[i] = u * p_load[i];
        }
    }
    BaseProfile {
        p_gen,
        p_load,
        q_load,
        load_scale,
    }
}

/// Buses eligible for SL1: leaves whose depth is in the top quartile of leaf
/// depths (at least 5 leaves), further restricted to those carrying load or
/// generation. An explicit bus list overrides the depth rule.
pub fn sl1_buses(
    net: &RadialNetwork,
    profile: &BaseProfile,
    explicit: Option<&[i64]>,
) -> Result<Vec<usize>, BidError> {
    if let Some(list) = explicit {
        let mut out = Vec::new();
        for &id in list {
            let idx = net.index_of(id).map_err(|_| BidError::UnknownBus(id))?;
            out.push(idx);
        }
        out.sort_unstable();
        out.dedup();
        return Ok(out);
    }
    let depths = net.leaf_depths();
    if depths.is_empty() {
        return Ok(Vec::new());
    }
    let mut sorted: Vec<(usize, usize)> = depths.iter().map(|(&b, &d)| (b, d)).collect();
    // deepest first; ties broken by bus index for determinism
    sorted.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let quartile = (sorted.len() + 3) / 4;
    let keep = quartile.max(5).min(sorted.len());
    // include every leaf tied with the depth at the cutoff
    let cutoff = sorted[keep - 1].1;
    let mut out: Vec<usize> = sorted
        .into_iter()
        .filter(|&(_, d)| d >= cutoff)
        .map(|(b, _)| b)
        .filter(|&b| profile.p_load[b] > 0.0 || profile.p_gen[b] > 0.0)
        .collect();
    out.sort_unstable();
    Ok(out)
}

/// Generate one bid per eligible bus.
///
/// Quantity caps follow the base profile exactly: demand can drop to zero
/// (`qty_d_up = p_load`) or grow by half (`qty_d_dn = p_load / 2`); supply
/// can drop to zero (`qty_p_dn = p_gen`) or grow by half
/// (`qty_p_up = p_gen / 2`). Costs are uniform draws, demand bids in
/// [35, 45] EUR/MWh and supply offers in [45, 55] EUR/MWh, independent per
/// bus and field.
pub fn generate_bids(
    profile: &BaseProfile,
    spread: SpreadLevel,
    net: &RadialNetwork,
    seed: u64,
    sl1_explicit: Option<&[i64]>,
) -> Result<Vec<FlexBid>, BidError> {
    let eligible: Vec<usize> = match spread {
        SpreadLevel::Sl2 => (0..net.n_buses())
            .filter(|&b| profile.p_load[b] > 0.0 || profile.p_gen[b] > 0.0)
            .collect(),
        SpreadLevel::Sl1 => sl1_buses(net, profile, sl1_explicit)?,
    };
    let uniform = |lo: f64, hi: f64, field: StreamField, bus: i64| -> f64 {
        stream(seed, field, bus, 0).gen_range(lo..hi)
    };
    Ok(eligible
        .into_iter()
        .map(|b| {
            let id = net.bus_id(b);
            let (dlo, dhi) = DEMAND_COST_RANGE;
            let (slo, shi) = SUPPLY_COST_RANGE;
            FlexBid {
                bus: id,
                qty_d_up: profile.p_load[b],
                qty_d_dn: 0.5 * profile.p_load[b],
                qty_p_dn: profile.p_gen[b],
                qty_p_up: 0.5 * profile.p_gen[b],
                cost_d_up: uniform(dlo, dhi, StreamField::CostDUp, id),
                cost_d_dn: uniform(dlo, dhi, StreamField::CostDDn, id),
                cost_p_up: uniform(slo, shi, StreamField::CostPUp, id),
                cost_p_dn: uniform(slo, shi, StreamField::CostPDn, id),
            }
        })
        .collect())
}

/// One truncated-Gaussian scale factor: N(1, sigma) resampled while
/// negative, so caps and costs stay nonnegative.
fn scale_factor(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 1.0;
    }
    let dist = Normal::new(1.0, sigma).expect("sigma validated nonnegative");
    loop {
        let f = dist.sample(rng);
        if f >= 0.0 {
            return f;
        }
    }
}

/// Scale every cost and quantity cap of every bid by independent truncated
/// Gaussian factors. Deterministic in (cfg.seed, sample).
pub fn perturb_bids(bids: &[FlexBid], cfg: &ScenarioConfig, sample: usize) -> Vec<FlexBid> {
    let s = sample as u64 + 1; // sample stream 0 is reserved for generation
    let factor = |field: StreamField, bus: i64, sigma: f64| -> f64 {
        let mut rng = stream(cfg.seed, field, bus, s);
        scale_factor(&mut rng, sigma)
    };
    bids.iter()
        .map(|b| FlexBid {
            bus: b.bus,
            qty_p_up: b.qty_p_up * factor(StreamField::QtyPUp, b.bus, cfg.sigma_qty),
            qty_p_dn: b.qty_p_dn * factor(StreamField::QtyPDn, b.bus, cfg.sigma_qty),
            qty_d_up: b.qty_d_up * factor(StreamField::QtyDUp, b.bus, cfg.sigma_qty),
            qty_d_dn: b.qty_d_dn * factor(StreamField::QtyDDn, b.bus, cfg.sigma_qty),
            cost_p_up: b.cost_p_up * factor(StreamField::CostPUp, b.bus, cfg.sigma_cost),
            cost_p_dn: b.cost_p_dn * factor(StreamField::CostPDn, b.bus, cfg.sigma_cost),
            cost_d_up: b.cost_d_up * factor(StreamField::CostDUp, b.bus, cfg.sigma_cost),
            cost_d_dn: b.cost_d_dn * factor(StreamField::CostDDn, b.bus, cfg.sigma_cost),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// CSV import/export so externally supplied bid sets can bypass generation

const BID_CSV_HEADER: [&str; 9] = [
    "bus", "qty_p_up", "qty_p_dn", "qty_d_up", "qty_d_dn", "cost_p_up", "cost_p_dn", "cost_d_up",
    "cost_d_dn",
];

/// Write bids as CSV (one row per bus).
pub fn bids_to_csv<W: std::io::Write>(bids: &[FlexBid], writer: W) -> Result<(), BidError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(BID_CSV_HEADER)
        .map_err(|e| BidError::Csv(e.to_string()))?;
    for b in bids {
        w.write_record(&[
            b.bus.to_string(),
            b.qty_p_up.to_string(),
            b.qty_p_dn.to_string(),
            b.qty_d_up.to_string(),
            b.qty_d_dn.to_string(),
            b.cost_p_up.to_string(),
            b.cost_p_dn.to_string(),
            b.cost_d_up.to_string(),
            b.cost_d_dn.to_string(),
        ])
        .map_err(|e| BidError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| BidError::Csv(e.to_string()))
}

/// Read bids from CSV produced by [`bids_to_csv`] (or hand-written with the
/// same header).
pub fn bids_from_csv<R: std::io::Read>(reader: R) -> Result<Vec<FlexBid>, BidError> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for record in r.deserialize::<BTreeMap<String, f64>>() {
        let rec = record.map_err(|e| BidError::Csv(e.to_string()))?;
        let get = |k: &str| -> Result<f64, BidError> {
            rec.get(k)
                .copied()
                .ok_or_else(|| BidError::Csv(format!("missing column `{k}`")))
        };
        out.push(FlexBid {
            bus: get("bus")? as i64,
            qty_p_up: get("qty_p_up")?,
            qty_p_dn: get("qty_p_dn")?,
            qty_d_up: get("qty_d_up")?,
            qty_d_dn: get("qty_d_dn")?,
            cost_p_up: get("cost_p_up")?,
            cost_p_dn: get("cost_p_dn")?,
            cost_d_up: get("cost_d_up")?,
            cost_d_dn: get("cost_d_dn")?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{build_radial, cases, parse_case, BuildOptions};

    fn net69() -> RadialNetwork {
        build_radial(&parse_case(cases::CASE69).unwrap(), &BuildOptions::default()).unwrap()
    }

    #[test]
    fn base_supply_fraction_in_range_and_deterministic() {
        let net = net69();
        let a = synthesize_base_supply(&net, 7, 1.0);
        let b = synthesize_base_supply(&net, 7, 1.0);
        assert_eq!(a.p_gen, b.p_gen);
        for i in 0..net.n_buses() {
            if a.p_load[i] > 0.0 {
                let u = a.p_gen[i] / a.p_load[i];
                assert!((0.10..0.90).contains(&u), "u = {u}");
            } else {
                assert_eq!(a.p_gen[i], 0.0);
            }
        }
    }

    #[test]
    fn bid_caps_follow_profile_exactly() {
        let net = net69();
        let profile = synthesize_base_supply(&net, 3, 1.0);
        let bids = generate_bids(&profile, SpreadLevel::Sl2, &net, 3, None).unwrap();
        for bid in &bids {
            let i = net.index_of(bid.bus).unwrap();
            assert_eq!(bid.qty_d_up, profile.p_load[i]);
            assert_eq!(bid.qty_d_dn, 0.5 * profile.p_load[i]);
            assert_eq!(bid.qty_p_dn, profile.p_gen[i]);
            assert_eq!(bid.qty_p_up, 0.5 * profile.p_gen[i]);
            assert!((35.0..45.0).contains(&bid.cost_d_up));
            assert!((35.0..45.0).contains(&bid.cost_d_dn));
            assert!((45.0..55.0).contains(&bid.cost_p_up));
            assert!((45.0..55.0).contains(&bid.cost_p_dn));
        }
    }

    #[test]
    fn example_caps_ten_load_four_gen() {
        // p_load = 10, p_gen = 4 => caps (d_up, d_dn, p_dn, p_up) = (10, 5, 4, 2)
        let net = net69();
        let mut profile = synthesize_base_supply(&net, 3, 1.0);
        let bus = net
            .leaf_depths()
            .keys()
            .copied()
            .find(|&b| profile.p_load[b] > 0.0)
            .unwrap();
        profile.p_load[bus] = 10.0;
        profile.p_gen[bus] = 4.0;
        let bids = generate_bids(&profile, SpreadLevel::Sl2, &net, 3, None).unwrap();
        let bid = bids.iter().find(|b| b.bus == net.bus_id(bus)).unwrap();
        assert_eq!(
            (bid.qty_d_up, bid.qty_d_dn, bid.qty_p_dn, bid.qty_p_up),
            (10.0, 5.0, 4.0, 2.0)
        );
    }

    #[test]
    fn sl1_is_restriction_of_sl2() {
        let net = net69();
        let profile = synthesize_base_supply(&net, 11, 1.0);
        let sl1 = generate_bids(&profile, SpreadLevel::Sl1, &net, 11, None).unwrap();
        let sl2 = generate_bids(&profile, SpreadLevel::Sl2, &net, 11, None).unwrap();
        assert!(!sl1.is_empty());
        assert!(sl1.len() < sl2.len());
        for bid in &sl1 {
            // the same bus draws the same bid under both spread levels
            let other = sl2.iter().find(|b| b.bus == bid.bus).expect("subset");
            assert_eq!(bid, other);
        }
    }

    #[test]
    fn sl1_picks_deep_leaves() {
        let net = net69();
        let profile = synthesize_base_supply(&net, 11, 1.0);
        let chosen = sl1_buses(&net, &profile, None).unwrap();
        assert!(chosen.len() >= 5);
        let depths = net.leaf_depths();
        let chosen_min = chosen.iter().map(|b| depths[b]).min().unwrap();
        // no unchosen loaded leaf may be strictly deeper than a chosen one
        for (&leaf, &d) in &depths {
            if profile.p_load[leaf] > 0.0 && !chosen.contains(&leaf) {
                assert!(d <= chosen_min);
            }
        }
    }

    #[test]
    fn explicit_sl1_override() {
        let net = net69();
        let profile = synthesize_base_supply(&net, 11, 1.0);
        let chosen = sl1_buses(&net, &profile, Some(&[5, 9])).unwrap();
        let expect: Vec<usize> = [5, 9].iter().map(|&id| net.index_of(id).unwrap()).collect();
        assert_eq!(chosen, expect);
        assert!(sl1_buses(&net, &profile, Some(&[9999])).is_err());
    }

    #[test]
    fn zero_sigma_perturbation_is_identity() {
        let net = net69();
        let profile = synthesize_base_supply(&net, 5, 1.0);
        let bids = generate_bids(&profile, SpreadLevel::Sl2, &net, 5, None).unwrap();
        let cfg = ScenarioConfig {
            sigma_cost: 0.0,
            sigma_qty: 0.0,
            seed: 5,
            samples: 1,
        };
        assert_eq!(perturb_bids(&bids, &cfg, 0), bids);
    }

    #[test]
    fn perturbation_deterministic_and_nonnegative() {
        let net = net69();
        let profile = synthesize_base_supply(&net, 5, 1.0);
        let bids = generate_bids(&profile, SpreadLevel::Sl2, &net, 5, None).unwrap();
        let cfg = ScenarioConfig {
            sigma_cost: 0.15,
            sigma_qty: 0.3,
            seed: 42,
            samples: 4,
        };
        let a = perturb_bids(&bids, &cfg, 2);
        let b = perturb_bids(&bids, &cfg, 2);
        assert_eq!(a, b);
        let c = perturb_bids(&bids, &cfg, 3);
        assert_ne!(a, c);
        for bid in a.iter().chain(c.iter()) {
            for v in [
                bid.qty_p_up, bid.qty_p_dn, bid.qty_d_up, bid.qty_d_dn, bid.cost_p_up,
                bid.cost_p_dn, bid.cost_d_up, bid.cost_d_dn,
            ] {
                assert!(v >= 0.0);
            }
        }
    }

    #[test]
    fn truncated_factor_mean_near_one() {
        // direct-sampling oracle for the truncated N(1, 0.15) mean
        let mut rng = stream(99, StreamField::CostDUp, 0, 1);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| scale_factor(&mut rng, 0.15)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean = {mean}");
    }

    #[test]
    fn csv_round_trip() {
        let net = net69();
        let profile = synthesize_base_supply(&net, 5, 1.0);
        let bids = generate_bids(&profile, SpreadLevel::Sl1, &net, 5, None).unwrap();
        let mut buf = Vec::new();
        bids_to_csv(&bids, &mut buf).unwrap();
        let back = bids_from_csv(buf.as_slice()).unwrap();
        assert_eq!(bids, back);
    }
}
