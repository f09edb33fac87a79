use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::noise::NoiseKind;
use super::session::{run_session, SessionConfig, SessionOutcome, Tamper};
use super::store::random_template;
use super::transport::Transport;
use super::{derive_seed, trial_seed};
use crate::params::ProtocolParams;
use crate::protocol::AbortReason;
use crate::vector::FeatureVector;

#[derive(Debug, Clone)]
pub struct TrialConfig {
    pub params: ProtocolParams,
    pub noise: NoiseKind,
    pub transport: Transport,
    pub tamper: Tamper,
    pub trials: u32,
    pub master_seed: u64,
    /// Fixed template for every trial; a fresh random one per trial if `None`.
    pub template: Option<FeatureVector>,
    pub parallel: bool,
}

impl TrialConfig {
    pub fn new(params: ProtocolParams, noise: NoiseKind, trials: u32, master_seed: u64) -> Self {
        Self {
            params,
            noise,
            transport: Transport::InProcess,
            tamper: Tamper::None,
            trials,
            master_seed,
            template: None,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status")]
pub enum TrialStatus {
    KeyEstablished { round: u16, keys_agree: bool },
    Aborted { reason: AbortReason },
    InfrastructureError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: u32,
    pub seed: u64,
    #[serde(flatten)]
    pub status: TrialStatus,
    pub rounds: u16,
    pub queries_sent: u64,
    pub wall_time_us: u64,
}

/// Aggregate statistics over a batch of sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub sessions_run: u64,
    pub succeeded: u64,
    pub aborted_by_reason: BTreeMap<AbortReason, u64>,
    pub infrastructure_errors: u64,
    /// Round index at which each successful session matched.
    pub rounds_to_success: BTreeMap<u16, u64>,
    pub queries_sent: u64,
    pub mean_wall_time_us: f64,
    #[serde(skip)]
    pub rows: Vec<TrialRow>,
}

impl TrialReport {
    fn from_rows(rows: Vec<TrialRow>) -> Self {
        let mut report = Self {
            sessions_run: rows.len() as u64,
            succeeded: 0,
            aborted_by_reason: BTreeMap::new(),
            infrastructure_errors: 0,
            rounds_to_success: BTreeMap::new(),
            queries_sent: 0,
            mean_wall_time_us: 0.0,
            rows: Vec::new(),
        };
        let mut total_us = 0u64;
        for row in &rows {
            report.queries_sent += row.queries_sent;
            total_us += row.wall_time_us;
            match row.status {
                TrialStatus::KeyEstablished { round, .. } => {
                    report.succeeded += 1;
                    *report.rounds_to_success.entry(round).or_default() += 1;
                }
                TrialStatus::Aborted { reason } => {
                    *report.aborted_by_reason.entry(reason).or_default() += 1;
                }
                TrialStatus::InfrastructureError => report.infrastructure_errors += 1,
            }
        }
        if !rows.is_empty() {
            report.mean_wall_time_us = total_us as f64 / rows.len() as f64;
        }
        report.rows = rows;
        report
    }

    pub fn aborted(&self) -> u64 {
        self.aborted_by_reason.values().sum()
    }

    pub fn success_rate(&self) -> f64 {
        if self.sessions_run == 0 {
            return 0.0;
        }
        self.succeeded as f64 / self.sessions_run as f64
    }

    /// Successful sessions where the two sides ended with different keys.
    pub fn key_disagreements(&self) -> u64 {
        self.rows
            .iter()
            .filter(|r| matches!(r.status, TrialStatus::KeyEstablished { keys_agree: false, .. }))
            .count() as u64
    }

    /// Arithmetic consistency of the aggregate counters.
    pub fn is_consistent(&self) -> bool {
        self.succeeded + self.aborted() + self.infrastructure_errors <= self.sessions_run
            && self.rounds_to_success.values().sum::<u64>() == self.succeeded
            && self.rows.len() as u64 == self.sessions_run
    }

    /// Copy with every timing field zeroed; equal across reruns of one config.
    pub fn without_timing(&self) -> Self {
        let mut copy = self.clone();
        copy.mean_wall_time_us = 0.0;
        for row in &mut copy.rows {
            row.wall_time_us = 0;
        }
        copy
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<24} {:>12}", "sessions run", self.sessions_run);
        let _ = writeln!(
            out,
            "{:<24} {:>12} ({:.2}%)",
            "succeeded",
            self.succeeded,
            100.0 * self.success_rate()
        );
        for (reason, count) in &self.aborted_by_reason {
            let _ = writeln!(out, "{:<24} {:>12}", format!("aborted: {reason}"), count);
        }
        if self.infrastructure_errors > 0 {
            let _ = writeln!(out, "{:<24} {:>12}", "infrastructure errors", self.infrastructure_errors);
        }
        let _ = writeln!(out, "{:<24} {:>12}", "verifiers sent", self.queries_sent);
        let _ = writeln!(out, "{:<24} {:>12.1}", "mean wall time (us)", self.mean_wall_time_us);
        if !self.rounds_to_success.is_empty() {
            let _ = writeln!(out, "rounds to success:");
            for (round, count) in &self.rounds_to_success {
                let _ = writeln!(out, "  round {round:<5} {count:>12}");
            }
        }
        out
    }

    /// One JSON object per trial followed by a summary object.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            let mut value = serde_json::to_value(row).expect("row serializes");
            value["type"] = "trial".into();
            out.push_str(&value.to_string());
            out.push('\n');
        }
        let mut summary = serde_json::to_value(self).expect("report serializes");
        summary["type"] = "summary".into();
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }
}

fn run_one(config: &TrialConfig, trial: u32) -> TrialRow {
    let seed = trial_seed(config.master_seed, u64::from(trial));
    let template = config.template.clone().unwrap_or_else(|| {
        let mut rng = ChaCha20Rng::from_seed(derive_seed(seed, "template", 0));
        random_template(&config.params, &mut rng)
    });
    let session = SessionConfig {
        params: config.params.clone(),
        template,
        noise: config.noise.clone(),
        transport: config.transport,
        tamper: config.tamper,
        seed,
        record_transcript: false,
    };
    match run_session(&session) {
        Ok(report) => TrialRow {
            trial,
            seed,
            status: match &report.outcome {
                SessionOutcome::KeyEstablished { round, .. } => TrialStatus::KeyEstablished {
                    round: *round,
                    keys_agree: report.outcome.keys_agree(),
                },
                SessionOutcome::Aborted { reason } => TrialStatus::Aborted { reason: *reason },
            },
            rounds: report.rounds,
            queries_sent: report.queries_sent,
            wall_time_us: report.wall_time.as_micros() as u64,
        },
        Err(_) => TrialRow {
            trial,
            seed,
            status: TrialStatus::InfrastructureError,
            rounds: 0,
            queries_sent: 0,
            wall_time_us: 0,
        },
    }
}

/// Runs `config.trials` sessions with per-trial seeds derived from the
/// master seed. Rows are merged in trial order regardless of scheduling.
pub fn run_trials(config: &TrialConfig) -> TrialReport {
    let rows: Vec<TrialRow> = if config.parallel {
        (0..config.trials)
            .into_par_iter()
            .map(|t| run_one(config, t))
            .collect()
    } else {
        (0..config.trials).map(|t| run_one(config, t)).collect()
    };
    TrialReport::from_rows(rows)
}
