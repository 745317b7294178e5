use std::collections::BTreeMap;

use super::{EntityId, KnowledgeBase, Relation};

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Weakly connected component labels. Components are numbered 0, 1, ... in
/// order of their smallest entity id. Relations naming unknown ids are skipped.
pub fn component_labels(
    ids: impl IntoIterator<Item = EntityId>,
    relations: &[Relation],
) -> BTreeMap<EntityId, usize> {
    let ids: Vec<EntityId> = {
        let mut v: Vec<_> = ids.into_iter().collect();
        v.sort();
        v.dedup();
        v
    };
    let index: BTreeMap<EntityId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut uf = UnionFind::new(ids.len());
    for rel in relations {
        if let (Some(&a), Some(&b)) = (index.get(&rel.src), index.get(&rel.dst)) {
            uf.union(a, b);
        }
    }
    let mut root_label = BTreeMap::new();
    let mut labels = BTreeMap::new();
    for (i, id) in ids.iter().enumerate() {
        let root = uf.find(i);
        let next = root_label.len();
        let label = *root_label.entry(root).or_insert(next);
        labels.insert(*id, label);
    }
    labels
}

/// A group of entities whose stored component label disagrees with the edge set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentViolation {
    pub entities: Vec<EntityId>,
    pub message: String,
}

/// Compares stored `component_id`s against a fresh union-find labeling, up to
/// relabeling. Returns one violation per true component that is either split
/// across several stored labels or shares its label with an earlier component.
pub fn validate_components(kb: &KnowledgeBase) -> Vec<ComponentViolation> {
    let truth = component_labels(kb.entities().map(|e| e.id), kb.relations());
    let mut groups: BTreeMap<usize, Vec<EntityId>> = BTreeMap::new();
    for (id, label) in &truth {
        groups.entry(*label).or_default().push(*id);
    }

    let mut claimed: BTreeMap<usize, usize> = BTreeMap::new();
    let mut violations = Vec::new();
    for (true_label, members) in groups {
        let stored: Vec<usize> = members
            .iter()
            .map(|id| kb.entity(*id).map(|e| e.component_id).unwrap_or(usize::MAX))
            .collect();
        let first = stored[0];
        if stored.iter().any(|&s| s != first) {
            violations.push(ComponentViolation {
                entities: members.clone(),
                message: format!(
                    "entities {} are connected but carry different component ids",
                    join_ids(&members)
                ),
            });
            continue;
        }
        if let Some(other) = claimed.get(&first) {
            violations.push(ComponentViolation {
                entities: members.clone(),
                message: format!(
                    "entities {} share component id {first} with disconnected component {other}",
                    join_ids(&members)
                ),
            });
            continue;
        }
        claimed.insert(first, true_label);
    }
    violations
}

fn join_ids(ids: &[EntityId]) -> String {
    ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
}
