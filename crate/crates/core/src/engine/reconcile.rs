use serde::{Deserialize, Serialize};

use super::ledger::SessionLedger;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Severity {
    /// Blocks a passing report.
    Discrepancy,
    /// Reported, does not block.
    Informational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub message: String,
}

/// End-of-operation check that every gauze is accounted for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconciliationReport {
    pub total_in: u64,
    pub total_out: u64,
    pub in_play: i64,
    pub onscreen_in: u64,
    pub onscreen_out: u64,
    pub passed: bool,
    pub discrepancies: Vec<Finding>,
}

impl ReconciliationReport {
    pub fn blocking(&self) -> impl Iterator<Item = &Finding> {
        self.discrepancies.iter().filter(|f| f.severity == Severity::Discrepancy)
    }
}

/// Passes iff In Play is zero. Gauzes still resting on the In tray are
/// counted as in play by that formula; they are surfaced as an
/// informational finding rather than failing the report.
pub fn reconcile(ledger: &SessionLedger) -> ReconciliationReport {
    let t = ledger.totals();
    let in_play = t.in_play();
    let mut findings = Vec::new();

    if in_play > 0 {
        findings.push(Finding {
            severity: Severity::Discrepancy,
            message: format!("{in_play} {} unaccounted for", if in_play == 1 { "gauze" } else { "gauzes" }),
        });
    } else if in_play < 0 {
        findings.push(Finding {
            severity: Severity::Discrepancy,
            message: format!("Total Out exceeds Total In by {}", in_play.unsigned_abs()),
        });
    }
    if t.onscreen_in > 0 {
        findings.push(Finding {
            severity: Severity::Informational,
            message: format!("{} unused gauzes remain on In tray", t.onscreen_in),
        });
    }

    ReconciliationReport {
        total_in: t.total_in,
        total_out: t.total_out,
        in_play,
        onscreen_in: t.onscreen_in,
        onscreen_out: t.onscreen_out,
        passed: in_play == 0,
        discrepancies: findings,
    }
}
