use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    /// Canonical plan text.
    pub plan: String,
    pub instruction: String,
    /// Primary metric mean on the iteration's sampled batch.
    pub performance: f64,
    pub iteration: usize,
    /// Insertion counter; larger is newer.
    #[serde(default)]
    pub seq: u64,
}

/// Best `capacity` entries by (performance desc, recency desc).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryBank {
    pub capacity: usize,
    pub entries: Vec<MemoryEntry>,
    next_seq: u64,
}

impl MemoryBank {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, entries: Vec::new(), next_seq: 0 }
    }

    pub fn insert(&mut self, mut entry: MemoryEntry) {
        entry.seq = self.next_seq;
        self.next_seq += 1;
        self.entries.push(entry);
        self.entries.sort_by(|a, b| b.performance.total_cmp(&a.performance).then(b.seq.cmp(&a.seq)));
        self.entries.truncate(self.capacity);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn memory_update(mut bank: MemoryBank, entry: MemoryEntry) -> MemoryBank {
    bank.insert(entry);
    bank
}
