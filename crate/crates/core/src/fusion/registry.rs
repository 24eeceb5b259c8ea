use std::collections::BTreeMap;
use std::sync::Arc;

use super::query::{
    BevNeighborhood, BruteForceSearch, HashGridSearch, ManhattanNeighborhood, NeighborSearch,
    WindowNeighborhood,
};
use crate::error::{Error, Result};

/// Named strategy table.
pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<String, Arc<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: impl Into<String>, strategy: Arc<T>) {
        self.entries.insert(name.into(), strategy);
    }

    pub fn get(&self, name: &str) -> Result<Arc<T>> {
        self.entries.get(name).cloned().ok_or_else(|| {
            Error::config(
                self.kind,
                format!(
                    "unknown strategy `{name}`; registered: {}",
                    self.names().join(", ")
                ),
            )
        })
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}

/// Ball-query backends: `brute-force` and `hash-grid`.
pub fn search_registry() -> Registry<dyn NeighborSearch> {
    let mut r: Registry<dyn NeighborSearch> = Registry::new("qhf.search");
    for s in [
        Arc::new(BruteForceSearch) as Arc<dyn NeighborSearch>,
        Arc::new(HashGridSearch),
    ] {
        r.register(s.name(), s);
    }
    r
}

/// BEV neighbourhoods: `window` (per-axis `|di| <= a && |dj| <= b`) and
/// `manhattan` (`|di| + |dj| <= a`).
pub fn neighborhood_registry() -> Registry<dyn BevNeighborhood> {
    let mut r: Registry<dyn BevNeighborhood> = Registry::new("qbf.distance_mode");
    for s in [
        Arc::new(WindowNeighborhood) as Arc<dyn BevNeighborhood>,
        Arc::new(ManhattanNeighborhood),
    ] {
        r.register(s.name(), s);
    }
    r
}
