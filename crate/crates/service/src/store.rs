use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use idde::{CorrelationCurve64, Dataset64, RadiiProfile64};
use serde::Serialize;
use tokio::sync::OnceCell;

/// One registered dataset. Read-only once inserted.
pub struct Entry {
    pub id: String,
    pub source: String,
    pub dataset: Dataset64,
    pub profile: RadiiProfile64,
    curve: OnceCell<Arc<CorrelationCurve64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntrySummary {
    pub id: String,
    pub n: usize,
    pub d_ambient: usize,
    pub duplicate_pairs: usize,
    pub lr: usize,
    pub subsampled: bool,
    pub source: String,
}

impl Entry {
    pub fn new(id: String, source: String, dataset: Dataset64, profile: RadiiProfile64) -> Self {
        Self {
            id,
            source,
            dataset,
            profile,
            curve: OnceCell::new(),
        }
    }

    pub fn summary(&self) -> EntrySummary {
        EntrySummary {
            id: self.id.clone(),
            n: self.dataset.n(),
            d_ambient: self.dataset.dim(),
            duplicate_pairs: self.profile.zero_pairs(),
            lr: self.profile.lr(),
            subsampled: self.profile.is_subsampled(),
            source: self.source.clone(),
        }
    }

    /// The raw curve, built on first use; concurrent callers wait for the same result.
    pub async fn curve(self: &Arc<Self>) -> idde::Result<Arc<CorrelationCurve64>> {
        let this = Arc::clone(self);
        self.curve
            .get_or_try_init(|| async move {
                tokio::task::spawn_blocking(move || idde::curve(&this.profile, None).map(Arc::new))
                    .await
                    .expect("curve task panicked")
            })
            .await
            .cloned()
    }
}

/// In-memory map of dataset id to entry. Entries leave only on explicit delete.
#[derive(Default)]
pub struct SessionStore {
    entries: RwLock<HashMap<String, Arc<Entry>>>,
}

impl SessionStore {
    pub fn insert(&self, entry: Entry) -> Arc<Entry> {
        let entry = Arc::new(entry);
        self.entries
            .write()
            .expect("store lock poisoned")
            .insert(entry.id.clone(), Arc::clone(&entry));
        entry
    }

    pub fn get(&self, id: &str) -> Option<Arc<Entry>> {
        self.entries.read().expect("store lock poisoned").get(id).cloned()
    }

    pub fn remove(&self, id: &str) -> Option<Arc<Entry>> {
        self.entries.write().expect("store lock poisoned").remove(id)
    }

    pub fn list(&self) -> Vec<EntrySummary> {
        let mut out: Vec<_> = self
            .entries
            .read()
            .expect("store lock poisoned")
            .values()
            .map(|e| e.summary())
            .collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }
}
