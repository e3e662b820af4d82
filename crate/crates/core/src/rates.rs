//! Optimal communication and key rates for the three-layer network, plus the
//! one-hop baseline used for comparison.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{HsaError, Result};

/// Network shape: `u` relays, `v` users per relay, at most `t` colluding users.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HsaConfig {
    #[serde(rename = "U")]
    pub u: usize,
    #[serde(rename = "V")]
    pub v: usize,
    #[serde(rename = "T")]
    pub t: usize,
}

impl HsaConfig {
    pub fn new(u: usize, v: usize, t: usize) -> Result<Self> {
        if u < 2 {
            return Err(HsaError::InvalidConfig(format!(
                "at least two relays are required, got U={u}"
            )));
        }
        if v < 1 {
            return Err(HsaError::InvalidConfig(
                "clusters must contain at least one user".into(),
            ));
        }
        Ok(Self { u, v, t })
    }

    pub fn users(&self) -> usize {
        self.u * self.v
    }

    /// Smallest collusion level at which the problem becomes infeasible.
    pub fn infeasibility_boundary(&self) -> usize {
        (self.u - 1) * self.v
    }

    pub fn is_feasible(&self) -> bool {
        self.t < self.infeasibility_boundary()
    }

    pub fn ensure_feasible(&self) -> Result<()> {
        if self.is_feasible() {
            Ok(())
        } else {
            Err(HsaError::Infeasible {
                u: self.u,
                v: self.v,
                t: self.t,
                boundary: self.infeasibility_boundary(),
            })
        }
    }

    /// `max{V+T, min{UV-1, U+T-1}}`, evaluated regardless of feasibility.
    pub fn source_key_symbols(&self) -> usize {
        let (u, v, t) = (self.u, self.v, self.t);
        (v + t).max((u * v - 1).min(u + t - 1))
    }
}

impl fmt::Display for HsaConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(U={}, V={}, T={})", self.u, self.v, self.t)
    }
}

/// Minimum achievable rates for a feasible configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimalRates {
    pub r_x: usize,
    pub r_y: usize,
    pub r_z: usize,
    pub r_z_sigma: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateRegion {
    Feasible(OptimalRates),
    Infeasible,
}

impl RateRegion {
    pub fn is_feasible(&self) -> bool {
        matches!(self, RateRegion::Feasible(_))
    }

    pub fn rates(&self) -> Option<OptimalRates> {
        match self {
            RateRegion::Feasible(r) => Some(*r),
            RateRegion::Infeasible => None,
        }
    }
}

pub fn optimal_rates(cfg: &HsaConfig) -> Result<RateRegion> {
    let cfg = HsaConfig::new(cfg.u, cfg.v, cfg.t)?;
    if !cfg.is_feasible() {
        return Ok(RateRegion::Infeasible);
    }
    Ok(RateRegion::Feasible(OptimalRates {
        r_x: 1,
        r_y: 1,
        r_z: 1,
        r_z_sigma: cfg.source_key_symbols(),
    }))
}

/// Source key rate of the one-hop baseline, `UV - 1`.
pub fn baseline_source_rate(cfg: &HsaConfig) -> usize {
    cfg.users() - 1
}

/// Which term of `max{V+T, min{UV-1, U+T-1}}` determines the optimum.
/// Ties favour the relay term, then `U+T-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActiveBranch {
    #[serde(rename = "V+T")]
    RelayTerm,
    #[serde(rename = "U+T-1")]
    ServerTerm,
    #[serde(rename = "UV-1")]
    OneHopCap,
    #[serde(rename = "infeasible")]
    Infeasible,
}

impl ActiveBranch {
    pub fn of(cfg: &HsaConfig) -> Self {
        if !cfg.is_feasible() {
            return ActiveBranch::Infeasible;
        }
        let (u, v, t) = (cfg.u, cfg.v, cfg.t);
        let server = (u * v - 1).min(u + t - 1);
        if v + t >= server {
            ActiveBranch::RelayTerm
        } else if u + t - 1 < u * v {
            ActiveBranch::ServerTerm
        } else {
            ActiveBranch::OneHopCap
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ActiveBranch::RelayTerm => "V+T",
            ActiveBranch::ServerTerm => "U+T-1",
            ActiveBranch::OneHopCap => "UV-1",
            ActiveBranch::Infeasible => "infeasible",
        }
    }
}

/// One row of a tabulated sweep.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateRow {
    #[serde(rename = "U")]
    pub u: usize,
    #[serde(rename = "V")]
    pub v: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub feasible: bool,
    #[serde(rename = "R_X")]
    pub r_x: Option<usize>,
    #[serde(rename = "R_Y")]
    pub r_y: Option<usize>,
    #[serde(rename = "R_Z")]
    pub r_z: Option<usize>,
    #[serde(rename = "R_Zsigma")]
    pub r_z_sigma: Option<usize>,
    pub baseline: usize,
    pub active_branch: ActiveBranch,
}

impl RateRow {
    pub fn for_config(cfg: &HsaConfig) -> Result<Self> {
        let region = optimal_rates(cfg)?;
        let r = region.rates();
        Ok(RateRow {
            u: cfg.u,
            v: cfg.v,
            t: cfg.t,
            feasible: region.is_feasible(),
            r_x: r.map(|r| r.r_x),
            r_y: r.map(|r| r.r_y),
            r_z: r.map(|r| r.r_z),
            r_z_sigma: r.map(|r| r.r_z_sigma),
            baseline: baseline_source_rate(cfg),
            active_branch: ActiveBranch::of(cfg),
        })
    }

    /// Baseline excess over the optimum, for feasible rows.
    pub fn gap(&self) -> Option<usize> {
        self.r_z_sigma.map(|r| self.baseline - r)
    }
}

/// Evaluates every `(U, V, T)` in the cartesian product of the ranges, in
/// lexicographic order.
pub fn rate_table(
    u_range: std::ops::RangeInclusive<usize>,
    v_range: std::ops::RangeInclusive<usize>,
    t_range: std::ops::RangeInclusive<usize>,
) -> Result<Vec<RateRow>> {
    if u_range.is_empty() || v_range.is_empty() || t_range.is_empty() {
        return Err(HsaError::InvalidArgument(
            "sweep ranges must be nonempty".into(),
        ));
    }
    let mut rows = Vec::new();
    for u in u_range {
        for v in v_range.clone() {
            for t in t_range.clone() {
                rows.push(RateRow::for_config(&HsaConfig::new(u, v, t)?)?);
            }
        }
    }
    Ok(rows)
}

pub const RATE_CSV_HEADER: &str = "U,V,T,feasible,R_X,R_Y,R_Z,R_Zsigma,baseline,active_branch";

/// Writes rows as CSV with [`RATE_CSV_HEADER`]; rate cells of infeasible rows
/// are left empty.
pub fn write_rate_csv<W: Write>(rows: &[RateRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| HsaError::Format(e.to_string());
    for row in rows {
        w.serialize(row).map_err(io)?;
    }
    if rows.is_empty() {
        w.write_record(RATE_CSV_HEADER.split(',')).map_err(io)?;
    }
    w.flush().map_err(|e| HsaError::Format(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(u: usize, v: usize, t: usize) -> HsaConfig {
        HsaConfig::new(u, v, t).unwrap()
    }

    fn feasible(r_z_sigma: usize) -> RateRegion {
        RateRegion::Feasible(OptimalRates {
            r_x: 1,
            r_y: 1,
            r_z: 1,
            r_z_sigma,
        })
    }

    #[test]
    fn optimal_rate_examples() {
        assert_eq!(optimal_rates(&cfg(2, 3, 1)).unwrap(), feasible(4));
        assert_eq!(optimal_rates(&cfg(3, 2, 2)).unwrap(), feasible(4));
        assert_eq!(
            optimal_rates(&cfg(2, 3, 3)).unwrap(),
            RateRegion::Infeasible
        );
        assert_eq!(optimal_rates(&cfg(2, 2, 0)).unwrap(), feasible(2));
    }

    #[test]
    fn single_relay_is_rejected() {
        assert!(matches!(
            HsaConfig::new(1, 3, 0),
            Err(HsaError::InvalidConfig(_))
        ));
        let raw = HsaConfig { u: 1, v: 3, t: 0 };
        assert!(matches!(
            optimal_rates(&raw),
            Err(HsaError::InvalidConfig(_))
        ));
        assert!(HsaConfig::new(2, 0, 0).is_err());
    }

    #[test]
    fn baseline_examples() {
        assert_eq!(baseline_source_rate(&cfg(3, 2, 2)), 5);
        assert_eq!(baseline_source_rate(&cfg(2, 3, 1)), 5);
        assert_eq!(baseline_source_rate(&cfg(2, 1, 0)), 1);
    }

    #[test]
    fn table_u4_v3_follows_relay_term() {
        let rows = rate_table(4..=4, 3..=3, 0..=8).unwrap();
        for row in &rows {
            assert!(row.feasible);
            assert_eq!(row.r_z_sigma, Some(3 + row.t));
        }
        let beyond = rate_table(4..=4, 3..=3, 9..=10).unwrap();
        assert!(beyond.iter().all(|r| !r.feasible && r.r_z_sigma.is_none()));
        assert!(beyond
            .iter()
            .all(|r| r.active_branch == ActiveBranch::Infeasible));
    }

    #[test]
    fn table_u2_v2_branch() {
        let rows = rate_table(2..=2, 2..=2, 0..=1).unwrap();
        assert!(rows
            .iter()
            .all(|r| r.active_branch == ActiveBranch::RelayTerm));
        assert_eq!(rows[0].r_z_sigma, Some(2));
        assert_eq!(rows[1].r_z_sigma, Some(3));
    }

    #[test]
    fn other_branches_are_reported() {
        // U=5, V=1, T=0: max{1, min{4, 4}} = 4 via U+T-1.
        assert_eq!(ActiveBranch::of(&cfg(5, 1, 0)), ActiveBranch::ServerTerm);
        // U=5, V=2, T=7: max{9, min{9, 11}} = 9 -> tie goes to V+T.
        assert_eq!(ActiveBranch::of(&cfg(5, 2, 7)), ActiveBranch::RelayTerm);
        // U=6, V=2, T=6: max{8, min{11, 11}} = 11.
        assert_eq!(ActiveBranch::of(&cfg(6, 2, 6)), ActiveBranch::ServerTerm);
        // U=6, V=2, T=8: max{10, min{11, 13}} = 11 via the one-hop cap.
        assert_eq!(ActiveBranch::of(&cfg(6, 2, 8)), ActiveBranch::OneHopCap);
    }

    #[test]
    fn csv_output() {
        let rows = rate_table(2..=2, 3..=3, 1..=3).unwrap();
        let mut buf = Vec::new();
        write_rate_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], RATE_CSV_HEADER);
        assert_eq!(lines[1], "2,3,1,true,1,1,1,4,5,V+T");
        assert_eq!(lines[3], "2,3,3,false,,,,,5,infeasible");
    }

    #[test]
    fn empty_range_rejected() {
        #[allow(clippy::reversed_empty_ranges)]
        let r = rate_table(3..=2, 1..=1, 0..=0);
        assert!(r.is_err());
    }

    proptest! {
        #[test]
        fn monotone_in_t(u in 2usize..8, v in 1usize..8) {
            let c = cfg(u, v, 0);
            let mut prev = 0;
            for t in 0..c.infeasibility_boundary() {
                let r = optimal_rates(&cfg(u, v, t)).unwrap().rates().unwrap().r_z_sigma;
                prop_assert!(r >= prev);
                prev = r;
            }
        }

        #[test]
        fn feasibility_boundary(u in 2usize..8, v in 1usize..8, t in 0usize..60) {
            let feasible = optimal_rates(&cfg(u, v, t)).unwrap().is_feasible();
            prop_assert_eq!(feasible, t < (u - 1) * v);
        }

        #[test]
        fn baseline_dominates(u in 2usize..10, v in 1usize..10, t in 0usize..80) {
            let c = cfg(u, v, t);
            if let Some(r) = optimal_rates(&c).unwrap().rates() {
                prop_assert!(baseline_source_rate(&c) >= r.r_z_sigma);
            }
        }
    }
}
