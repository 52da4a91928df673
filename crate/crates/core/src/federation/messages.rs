//! Simulated protocol messages and their byte accounting.
//!
//! Every scalar, count and index is charged 8 bytes.

use serde::{Deserialize, Serialize};

use crate::models::GradientSet;

pub const WORD: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MessageKind {
    /// Client → server, condensed features, labels and dense adjacency.
    CondensedUpload,
    /// Server → client, gradient-generation weights for one round.
    ThetaBroadcast,
    /// Client → server, per-class counts and gradients.
    ClassGradientReport,
    /// Server → client, averaged model weights.
    ParamBroadcast,
    /// Client → server, locally updated model weights.
    ParamUpload,
    /// Server → client, the final trained model.
    ModelDownload,
}

impl MessageKind {
    pub fn is_upload(self) -> bool {
        matches!(
            self,
            MessageKind::CondensedUpload | MessageKind::ClassGradientReport | MessageKind::ParamUpload
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub round: usize,
    pub kind: MessageKind,
    pub client: usize,
    pub bytes: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MessageLog {
    records: Vec<MessageRecord>,
}

impl MessageLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, round: usize, kind: MessageKind, client: usize, bytes: u64) {
        self.records.push(MessageRecord {
            round,
            kind,
            client,
            bytes,
        });
    }

    pub fn records(&self) -> &[MessageRecord] {
        &self.records
    }

    pub fn count(&self, kind: MessageKind) -> usize {
        self.records.iter().filter(|r| r.kind == kind).count()
    }

    /// Upload and download bytes for messages matching `filter`.
    pub fn bytes_where(&self, filter: impl Fn(&MessageRecord) -> bool) -> (u64, u64) {
        self.records
            .iter()
            .filter(|r| filter(r))
            .fold((0, 0), |(up, down), r| {
                if r.kind.is_upload() {
                    (up + r.bytes, down)
                } else {
                    (up, down + r.bytes)
                }
            })
    }

    pub fn total_bytes(&self) -> (u64, u64) {
        self.bytes_where(|_| true)
    }
}

/// Features, labels and the dense `N'×N'` adjacency block.
pub fn condensed_upload_bytes(nodes: usize, features: usize) -> u64 {
    let n = nodes as u64;
    WORD * (n * features as u64 + n + n * n)
}

pub fn params_bytes(numel: usize) -> u64 {
    WORD * numel as u64
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassGradient {
    pub class: usize,
    /// Number of class-`class` training nodes on the client.
    pub count: usize,
    pub gradient: GradientSet,
}

/// One client's answer to a round's broadcast.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassGradientReport {
    pub client: usize,
    pub round: usize,
    pub entries: Vec<ClassGradient>,
}

impl ClassGradientReport {
    /// Class id, count and gradient entries per reported class.
    pub fn bytes(&self) -> u64 {
        self.entries
            .iter()
            .map(|e| WORD * 2 + params_bytes(e.gradient.numel()))
            .sum()
    }

    pub fn get(&self, class: usize) -> Option<&ClassGradient> {
        self.entries.iter().find(|e| e.class == class)
    }
}
