use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use chem::{count_cycles, AtomTypeTable, MolecularGraph};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{ModelError, Result};

/// A loaded training set: graphs plus whatever named properties their
/// records carried.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub graphs: Vec<MolecularGraph>,
    pub props: Vec<BTreeMap<String, f64>>,
}

impl Dataset {
    pub fn from_graphs(graphs: Vec<MolecularGraph>) -> Self {
        let props = vec![BTreeMap::new(); graphs.len()];
        Dataset { graphs, props }
    }

    pub fn load(path: &Path, table: &AtomTypeTable) -> Result<Self> {
        let records = chem::jsonl::read_records(path)?;
        if records.is_empty() {
            return Err(ModelError::EmptyDataset(path.display().to_string()));
        }
        let mut graphs = Vec::with_capacity(records.len());
        let mut props = Vec::with_capacity(records.len());
        for rec in records {
            graphs.push(rec.to_graph(table)?);
            props.push(rec.props);
        }
        Ok(Dataset { graphs, props })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn size_policy(&self) -> SizePolicy {
        SizePolicy::from_sizes(self.graphs.iter().map(|g| g.node_count()))
    }

    /// Values of a named property for every graph: stored values win,
    /// otherwise the surrogate is computed on the spot.
    pub fn property_values(&self, name: &str, table: &AtomTypeTable) -> Result<Vec<f64>> {
        self.graphs
            .iter()
            .zip(&self.props)
            .map(|(g, p)| match p.get(name) {
                Some(&v) => Ok(v),
                None => surrogate_property(name, g, table),
            })
            .collect()
    }

    pub fn canonical_keys(&self) -> HashSet<Vec<u8>> {
        self.graphs.iter().map(chem::canonical_key).collect()
    }
}

/// Computable stand-in properties for latent-space supervision.
pub const SURROGATE_PROPERTIES: [&str; 2] = ["molweight", "ring56"];

pub fn surrogate_property(name: &str, g: &MolecularGraph, table: &AtomTypeTable) -> Result<f64> {
    match name {
        "molweight" => Ok(g.molecular_weight(table)?),
        "ring56" => {
            let counts = count_cycles(g);
            Ok((counts.get(5) + counts.get(6)) as f64)
        }
        other => Err(ModelError::UnknownProperty(other.to_string())),
    }
}

/// Min-max normalization of property values to [0, 1], fitted on the
/// training set and stored in the checkpoint.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PropertyNorm {
    pub min: f64,
    pub max: f64,
}

impl PropertyNorm {
    pub fn fit(values: &[f64]) -> Self {
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        PropertyNorm { min, max }
    }

    pub fn apply(&self, x: f64) -> f64 {
        if self.max > self.min {
            (x - self.min) / (self.max - self.min)
        } else {
            0.5
        }
    }
}

/// Empirical node-count histogram; sampling draws molecule sizes from it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SizePolicy {
    pub counts: Vec<(usize, u64)>,
}

impl SizePolicy {
    pub fn from_sizes(sizes: impl Iterator<Item = usize>) -> Self {
        let mut map: BTreeMap<usize, u64> = BTreeMap::new();
        for s in sizes {
            *map.entry(s).or_insert(0) += 1;
        }
        SizePolicy {
            counts: map.into_iter().collect(),
        }
    }

    pub fn fixed(n: usize) -> Self {
        SizePolicy {
            counts: vec![(n, 1)],
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total: u64 = self.counts.iter().map(|&(_, c)| c).sum();
        if total == 0 {
            return 1;
        }
        let mut r = rng.gen_range(0..total);
        for &(size, count) in &self.counts {
            if r < count {
                return size;
            }
            r -= count;
        }
        self.counts.last().map(|&(s, _)| s).unwrap_or(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn size_policy_matches_histogram() {
        let policy = SizePolicy::from_sizes([3, 3, 3, 9].into_iter());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let draws = 4000;
        let hits = (0..draws)
            .filter(|_| policy.sample(&mut rng) == 3)
            .count() as f64;
        let freq = hits / draws as f64;
        assert!((freq - 0.75).abs() < 0.03, "freq {freq}");
    }

    #[test]
    fn property_norm_degenerate_range() {
        let n = PropertyNorm::fit(&[5.0, 5.0]);
        assert_eq!(n.apply(5.0), 0.5);
        let n = PropertyNorm::fit(&[0.0, 10.0]);
        assert_eq!(n.apply(5.0), 0.5);
        assert_eq!(n.apply(0.0), 0.0);
        assert_eq!(n.apply(10.0), 1.0);
    }

    #[test]
    fn surrogate_values() {
        let t = AtomTypeTable::qm9();
        let c = t.index_of("C").unwrap();
        let g = MolecularGraph::new(vec![c]).complete_hydrogens(&t).unwrap();
        assert!((surrogate_property("molweight", &g, &t).unwrap() - 16.043).abs() < 0.01);
        assert_eq!(surrogate_property("ring56", &g, &t).unwrap(), 0.0);
        assert!(surrogate_property("nope", &g, &t).is_err());
    }
}
