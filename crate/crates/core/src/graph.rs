//! Population graph over cases: an edge joins two cases whose selected meta
//! fields are all equal. Every node carries a self-loop.

use std::collections::HashMap;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::data::{Encoder, MetaField, MetaValue, PatientCase};
use crate::diffcore::Matrix;
use crate::error::{Error, Result};

/// Neighbor lists in CSR layout: node `i` aggregates over
/// `neighbors[offsets[i]..offsets[i + 1]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl Adjacency {
    pub fn from_lists(lists: &[Vec<usize>]) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        let mut neighbors = Vec::with_capacity(lists.iter().map(Vec::len).sum());
        offsets.push(0);
        for l in lists {
            neighbors.extend_from_slice(l);
            offsets.push(neighbors.len());
        }
        Self { offsets, neighbors }
    }

    /// Only self-loops.
    pub fn identity(n: usize) -> Self {
        Self {
            offsets: (0..=n).collect(),
            neighbors: (0..n).collect(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn entry_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn neighbor_slice(&self) -> &[usize] {
        &self.neighbors
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn to_lists(&self) -> Vec<Vec<usize>> {
        (0..self.node_count()).map(|i| self.neighbors(i).to_vec()).collect()
    }

    /// Every list non-empty, in range, containing its own node.
    pub fn validate(&self) -> Result<()> {
        let n = self.node_count();
        for i in 0..n {
            let l = self.neighbors(i);
            if l.is_empty() || !l.contains(&i) || l.iter().any(|&j| j >= n) {
                return Err(Error::Contract(format!("neighbor list of node {i} is invalid")));
            }
        }
        Ok(())
    }
}

/// Node features plus neighbor lists for a labelled case population.
#[derive(Debug, Clone)]
pub struct PopulationGraph {
    pub features: Matrix,
    pub adjacency: Adjacency,
    pub meta_fields: Vec<MetaField>,
    pub node_ids: Vec<String>,
    pub labels: Vec<Option<usize>>,
    pub vocab_hash: String,
    keys: Vec<Vec<MetaValue>>,
    groups: HashMap<Vec<MetaValue>, Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphStats {
    pub nodes: usize,
    /// Undirected edges between distinct nodes.
    pub edges: usize,
    /// `edges / (M(M−1)/2)`
    pub density: f64,
    /// Mean number of non-self neighbors.
    pub mean_degree: f64,
    /// Fraction of non-self edges joining same-label nodes; `None` without such edges.
    pub homophily: Option<f64>,
}

/// Graph with extra query nodes appended. Query nodes see consistent base
/// nodes and themselves; base nodes keep their original neighbor lists.
#[derive(Debug, Clone)]
pub struct AttachedGraph {
    pub features: Matrix,
    pub adjacency: Adjacency,
    pub base_nodes: usize,
}

impl AttachedGraph {
    pub fn query_node(&self, q: usize) -> usize {
        self.base_nodes + q
    }
}

fn check_fields(fields: &[MetaField]) -> Result<()> {
    if fields.is_empty() {
        return Err(Error::Contract("meta_fields must be non-empty".into()));
    }
    let mut seen = fields.to_vec();
    seen.sort();
    seen.dedup();
    if seen.len() != fields.len() {
        return Err(Error::Contract("meta_fields contains duplicates".into()));
    }
    Ok(())
}

impl PopulationGraph {
    pub fn build<'a>(
        cases: impl IntoIterator<Item = &'a PatientCase>,
        encoder: &Encoder,
        meta_fields: &[MetaField],
    ) -> Result<Self> {
        check_fields(meta_fields)?;
        let cases: Vec<&PatientCase> = cases.into_iter().collect();
        if cases.is_empty() {
            return Err(Error::Contract("graph needs at least one case".into()));
        }
        let keys: Vec<Vec<MetaValue>> = cases.iter().map(|c| c.meta.key(meta_fields)).collect();
        let mut groups: HashMap<Vec<MetaValue>, Vec<usize>> = HashMap::new();
        for (i, k) in keys.iter().enumerate() {
            groups.entry(k.clone()).or_default().push(i);
        }
        // Members are pushed in ascending order, so every list is sorted.
        let lists: Vec<Vec<usize>> = keys.iter().map(|k| groups[k].clone()).collect();
        Ok(Self {
            features: encoder.feature_matrix(cases.iter().copied())?,
            adjacency: Adjacency::from_lists(&lists),
            meta_fields: meta_fields.to_vec(),
            node_ids: cases.iter().map(|c| c.id.clone()).collect(),
            labels: cases.iter().map(|c| c.label).collect(),
            vocab_hash: encoder.vocab.hash(),
            keys,
            groups,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_ids.len()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        self.adjacency.neighbors(node)
    }

    /// Base nodes whose selected meta fields equal the query's.
    pub fn consistent_nodes(&self, query: &PatientCase) -> &[usize] {
        self.groups
            .get(&query.meta.key(&self.meta_fields))
            .map_or(&[], Vec::as_slice)
    }

    fn check_encoder(&self, encoder: &Encoder) -> Result<()> {
        let hash = encoder.vocab.hash();
        if hash != self.vocab_hash {
            return Err(Error::VocabularyMismatch(
                "query encoder vocabulary differs from the graph's".into(),
            ));
        }
        if encoder.feature_width() != self.features.cols() {
            return Err(Error::VocabularyMismatch(format!(
                "query feature width {} differs from graph width {}",
                encoder.feature_width(),
                self.features.cols()
            )));
        }
        Ok(())
    }

    /// Appends one query node connected to every consistent base node.
    pub fn attach_query(&self, query: &PatientCase, encoder: &Encoder) -> Result<AttachedGraph> {
        self.attach_queries(std::slice::from_ref(query), encoder)
    }

    /// Appends several query nodes at once. Queries never see each other.
    pub fn attach_queries(&self, queries: &[PatientCase], encoder: &Encoder) -> Result<AttachedGraph> {
        self.check_encoder(encoder)?;
        let base = self.node_count();
        let mut lists = self.adjacency.to_lists();
        let mut rows = self.features.to_rows();
        for (q, case) in queries.iter().enumerate() {
            let mut l = self.consistent_nodes(case).to_vec();
            l.push(base + q);
            lists.push(l);
            rows.push(encoder.features(case)?);
        }
        Ok(AttachedGraph {
            features: Matrix::from_rows(&rows)?,
            adjacency: Adjacency::from_lists(&lists),
            base_nodes: base,
        })
    }

    /// The smallest subgraph that reproduces the query node's output of a
    /// `depth`-layer message-passing stack exactly. Node 0 of the result is
    /// the query; the remaining nodes are base nodes within `depth` hops.
    pub fn query_subgraph(
        &self,
        query: &PatientCase,
        encoder: &Encoder,
        depth: usize,
    ) -> Result<(Matrix, Adjacency, Vec<usize>)> {
        self.check_encoder(encoder)?;
        // Collect base nodes by hop distance from the query.
        let mut local: HashMap<usize, usize> = HashMap::new();
        let mut order: Vec<usize> = Vec::new();
        let mut frontier: Vec<usize> = self.consistent_nodes(query).to_vec();
        for &j in &frontier {
            local.insert(j, order.len() + 1);
            order.push(j);
        }
        for _ in 1..depth {
            let mut next = Vec::new();
            for &i in &frontier {
                for &j in self.neighbors(i) {
                    if let std::collections::hash_map::Entry::Vacant(e) = local.entry(j) {
                        e.insert(order.len() + 1);
                        order.push(j);
                        next.push(j);
                    }
                }
            }
            frontier = next;
        }
        let mut lists = Vec::with_capacity(order.len() + 1);
        let mut q_list: Vec<usize> = self
            .consistent_nodes(query)
            .iter()
            .map(|j| local[j])
            .collect();
        q_list.push(0);
        lists.push(q_list);
        let mut rows = Vec::with_capacity(order.len() + 1);
        rows.push(encoder.features(query)?);
        for &j in &order {
            lists.push(
                self.neighbors(j)
                    .iter()
                    .filter_map(|k| local.get(k).copied())
                    .collect(),
            );
            rows.push(self.features.row(j).to_vec());
        }
        Ok((Matrix::from_rows(&rows)?, Adjacency::from_lists(&lists), order))
    }

    pub fn stats(&self) -> GraphStats {
        let m = self.node_count();
        let mut directed = 0usize;
        let mut same = 0usize;
        let mut labelled = 0usize;
        for i in 0..m {
            for &j in self.neighbors(i) {
                if i == j {
                    continue;
                }
                directed += 1;
                if let (Some(a), Some(b)) = (self.labels[i], self.labels[j]) {
                    labelled += 1;
                    if a == b {
                        same += 1;
                    }
                }
            }
        }
        let edges = directed / 2;
        let pairs = m * m.saturating_sub(1) / 2;
        GraphStats {
            nodes: m,
            edges,
            density: if pairs == 0 { 0.0 } else { edges as f64 / pairs as f64 },
            mean_degree: if m == 0 { 0.0 } else { directed as f64 / m as f64 },
            homophily: (labelled > 0).then(|| same as f64 / labelled as f64),
        }
    }

    /// Non-self undirected edges `(i, j)` with `i < j`, for debugging dumps.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.node_count() {
            for &j in self.neighbors(i) {
                if i < j {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// SHA-256 over features, neighbor lists and ids.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for v in self.features.as_slice() {
            h.update(v.to_bits().to_le_bytes());
        }
        for v in self.adjacency.offsets() {
            h.update((*v as u64).to_le_bytes());
        }
        for v in self.adjacency.neighbor_slice() {
            h.update((*v as u64).to_le_bytes());
        }
        for id in &self.node_ids {
            h.update(id.as_bytes());
            h.update([0]);
        }
        debug_assert_eq!(self.keys.len(), self.node_ids.len());
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AgeGroup, Dataset, Gender, MetaRecord, RawCase, RawLiterature};

    fn meta(gender: Gender) -> MetaRecord {
        MetaRecord {
            age_group: AgeGroup::Adult,
            gender,
            aetiology: "accidental".into(),
            point_of_entry: "oral".into(),
            weekday: 2,
            year: 2010,
        }
    }

    fn dataset(metas: &[(MetaRecord, &str)]) -> Dataset {
        let lit = vec![
            RawLiterature { toxin: "t0".into(), symptoms: vec!["a".into()] },
            RawLiterature { toxin: "t1".into(), symptoms: vec!["b".into()] },
        ];
        let cases = metas
            .iter()
            .enumerate()
            .map(|(i, (m, l))| RawCase {
                id: format!("c{i}"),
                symptoms: vec!["a".into()],
                meta: m.clone(),
                label: Some(l.to_string()),
            })
            .collect();
        Dataset::new(lit, cases).unwrap()
    }

    #[test]
    fn identical_meta_connects_both_ways() {
        let ds = dataset(&[(meta(Gender::Male), "t0"), (meta(Gender::Male), "t0")]);
        let g = PopulationGraph::build(&ds.cases, &ds.encoder, &MetaField::ALL).unwrap();
        assert_eq!(g.neighbors(0), &[0, 1]);
        assert_eq!(g.neighbors(1), &[0, 1]);
        assert_eq!(g.stats().homophily, Some(1.0));
    }

    #[test]
    fn gender_difference_breaks_edge() {
        let ds = dataset(&[(meta(Gender::Male), "t0"), (meta(Gender::Female), "t1")]);
        let g = PopulationGraph::build(&ds.cases, &ds.encoder, &MetaField::ALL).unwrap();
        assert_eq!(g.neighbors(0), &[0]);
        assert_eq!(g.neighbors(1), &[1]);
        let s = g.stats();
        assert_eq!(s.edges, 0);
        assert_eq!(s.density, 0.0);
        assert_eq!(s.homophily, None);
        // Dropping gender from the consistency check reconnects them.
        let g = PopulationGraph::build(&ds.cases, &ds.encoder, &[MetaField::AgeGroup, MetaField::Year]).unwrap();
        assert_eq!(g.neighbors(0), &[0, 1]);
    }

    #[test]
    fn attach_query_sizes_and_isolation() {
        let ds = dataset(&[
            (meta(Gender::Male), "t0"),
            (meta(Gender::Male), "t1"),
            (meta(Gender::Female), "t1"),
        ]);
        let g = PopulationGraph::build(&ds.cases, &ds.encoder, &MetaField::ALL).unwrap();
        let before = g.content_hash();
        let q = ds.cases[0].clone();
        let view = g.attach_query(&q, &ds.encoder).unwrap();
        assert_eq!(view.adjacency.neighbors(3), &[0, 1, 3]);
        assert_eq!(view.adjacency.neighbors(0), &[0, 1]);
        let mut lonely = q.clone();
        lonely.meta.gender = Gender::Unknown;
        let view = g.attach_query(&lonely, &ds.encoder).unwrap();
        assert_eq!(view.adjacency.neighbors(3), &[3]);
        drop(view);
        assert_eq!(g.content_hash(), before);
    }

    #[test]
    fn attach_rejects_other_vocabulary() {
        let ds = dataset(&[(meta(Gender::Male), "t0")]);
        let g = PopulationGraph::build(&ds.cases, &ds.encoder, &MetaField::ALL).unwrap();
        let mut other = ds.encoder.clone();
        other.vocab = crate::data::SymptomVocabulary::build(["a", "b"], ["zz"]).unwrap();
        assert!(matches!(
            g.attach_query(&ds.cases[0], &other),
            Err(Error::VocabularyMismatch(_))
        ));
    }

    #[test]
    fn empty_field_selection_is_rejected() {
        let ds = dataset(&[(meta(Gender::Male), "t0")]);
        assert!(PopulationGraph::build(&ds.cases, &ds.encoder, &[]).is_err());
    }
}
