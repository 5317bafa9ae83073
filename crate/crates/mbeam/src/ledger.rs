//! Air-time accounting for probe transmissions.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub const SSB_MS: f64 = 0.5;
pub const CSI_RS_MS: f64 = 0.125;
/// Beam directions that fit in one SS burst.
pub const BURST_BEAMS: usize = 64;
pub const BURST_MS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProbeKind {
    #[serde(rename = "SSB")]
    Ssb,
    #[serde(rename = "CSIRS")]
    CsiRs,
}

impl ProbeKind {
    pub fn label(self) -> &'static str {
        match self {
            ProbeKind::Ssb => "SSB",
            ProbeKind::CsiRs => "CSIRS",
        }
    }
}

/// How SSB probes are charged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SsbAccounting {
    /// Each SSB costs a full 0.5 ms.
    #[default]
    PerSsb,
    /// SSBs share a 5 ms burst of up to 64 beams.
    Burst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeEntry {
    pub slot: u64,
    pub kind: ProbeKind,
    pub duration_ms: f64,
    pub beam_id: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProbeLedger {
    entries: Vec<ProbeEntry>,
    accounting: SsbAccounting,
}

impl ProbeLedger {
    pub fn new(accounting: SsbAccounting) -> Self {
        Self { entries: Vec::new(), accounting }
    }

    pub fn record(&mut self, slot: u64, kind: ProbeKind, beam_id: usize) {
        let duration_ms = match (kind, self.accounting) {
            (ProbeKind::CsiRs, _) => CSI_RS_MS,
            (ProbeKind::Ssb, SsbAccounting::PerSsb) => SSB_MS,
            (ProbeKind::Ssb, SsbAccounting::Burst) => BURST_MS / BURST_BEAMS as f64,
        };
        self.entries.push(ProbeEntry { slot, kind, duration_ms, beam_id });
    }

    pub fn entries(&self) -> &[ProbeEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, kind: ProbeKind) -> usize {
        self.entries.iter().filter(|e| e.kind == kind).count()
    }

    pub fn total_ms(&self) -> f64 {
        self.entries.iter().fold(0.0, |acc, e| acc + e.duration_ms)
    }

    pub fn extend(&mut self, other: &ProbeLedger) {
        self.entries.extend_from_slice(&other.entries);
    }

    /// `slot,probe_type,duration_ms,beam_id` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("slot,probe_type,duration_ms,beam_id\n");
        for e in &self.entries {
            let _ = writeln!(out, "{},{},{},{}", e.slot, e.kind.label(), e.duration_ms, e.beam_id);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accounting_modes() {
        let mut per = ProbeLedger::new(SsbAccounting::PerSsb);
        let mut burst = ProbeLedger::new(SsbAccounting::Burst);
        for b in 0..64 {
            per.record(0, ProbeKind::Ssb, b);
            burst.record(0, ProbeKind::Ssb, b);
        }
        assert!((per.total_ms() - 32.0).abs() < 1e-12);
        assert!((burst.total_ms() - 5.0).abs() < 1e-12);
        per.record(1, ProbeKind::CsiRs, 0);
        assert_eq!(per.count(ProbeKind::CsiRs), 1);
        assert!(per.to_csv().ends_with("1,CSIRS,0.125,0\n"));
    }
}
