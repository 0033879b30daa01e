use std::collections::{BTreeMap, HashSet};

use chem::{count_cycles, AtomTypeTable, BondOrder, MolecularGraph, MAX_RING, MIN_RING};

use crate::{ModelError, Result};

/// Streaming mean and (population) standard deviation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    pub fn std(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let m = self.mean();
        (self.sum_sq / self.n as f64 - m * m).max(0.0).sqrt()
    }
}

/// Per-molecule distribution statistics over a sample set: counts per atom
/// type, bond type and ring size, plus simple molecular properties.
#[derive(Debug, Clone)]
pub struct SampleStats {
    pub n_samples: usize,
    /// (metric name, moments), in a fixed schema order.
    pub rows: Vec<(String, Moments)>,
}

impl SampleStats {
    pub fn get(&self, name: &str) -> Option<&Moments> {
        self.rows.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }
}

/// Fraction of samples passing validity, as a percentage.
pub fn pct_valid(samples: &[MolecularGraph], table: &AtomTypeTable) -> Result<f64> {
    if samples.is_empty() {
        return Err(ModelError::EmptySampleSet);
    }
    let valid = samples.iter().filter(|g| g.is_valid(table)).count();
    Ok(100.0 * valid as f64 / samples.len() as f64)
}

/// Fraction of samples whose canonical key is absent from the training set.
pub fn pct_novel(samples: &[MolecularGraph], training_keys: &HashSet<Vec<u8>>) -> Result<f64> {
    if samples.is_empty() {
        return Err(ModelError::EmptySampleSet);
    }
    let novel = samples
        .iter()
        .filter(|g| !training_keys.contains(&chem::canonical_key(g)))
        .count();
    Ok(100.0 * novel as f64 / samples.len() as f64)
}

/// Distinct canonical keys over sample set size.
pub fn pct_unique(samples: &[MolecularGraph]) -> Result<f64> {
    if samples.is_empty() {
        return Err(ModelError::EmptySampleSet);
    }
    let distinct: HashSet<Vec<u8>> = samples.iter().map(chem::canonical_key).collect();
    Ok(100.0 * distinct.len() as f64 / samples.len() as f64)
}

/// Mean and standard deviation of every per-molecule count metric.
pub fn distribution_stats(
    samples: &[MolecularGraph],
    table: &AtomTypeTable,
) -> Result<SampleStats> {
    if samples.is_empty() {
        return Err(ModelError::EmptySampleSet);
    }
    let mut atom: BTreeMap<usize, Moments> = (0..table.len()).map(|i| (i, Moments::default())).collect();
    let mut bond: BTreeMap<u8, Moments> = (1..=3).map(|l| (l, Moments::default())).collect();
    let mut ring: BTreeMap<usize, Moments> =
        (MIN_RING..=MAX_RING).map(|l| (l, Moments::default())).collect();
    let mut weight = Moments::default();
    let mut donors = Moments::default();
    let mut acceptors = Moments::default();

    for g in samples {
        let mut atom_counts = vec![0usize; table.len()];
        for &t in g.types() {
            if t < atom_counts.len() {
                atom_counts[t] += 1;
            }
        }
        for (i, &c) in atom_counts.iter().enumerate() {
            atom.get_mut(&i).expect("schema").push(c as f64);
        }
        let mut bond_counts = [0usize; 3];
        for e in g.edges() {
            bond_counts[e.order.bonds() as usize - 1] += 1;
        }
        for l in 1..=3u8 {
            bond.get_mut(&l).expect("schema").push(bond_counts[l as usize - 1] as f64);
        }
        let cycles = count_cycles(g);
        for len in MIN_RING..=MAX_RING {
            ring.get_mut(&len).expect("schema").push(cycles.get(len) as f64);
        }
        weight.push(g.molecular_weight(table)?);
        donors.push(g.h_donor_count(table)? as f64);
        acceptors.push(g.h_acceptor_count(table)? as f64);
    }

    let mut rows = Vec::new();
    for (i, m) in atom {
        rows.push((format!("atom.{}", table.symbol(i)?), m));
    }
    for (l, m) in bond {
        let name = match BondOrder::from_bonds(l)? {
            BondOrder::Single => "bond.single",
            BondOrder::Double => "bond.double",
            BondOrder::Triple => "bond.triple",
        };
        rows.push((name.to_string(), m));
    }
    for (len, m) in ring {
        rows.push((format!("ring.{len}"), m));
    }
    rows.push(("molweight".to_string(), weight));
    rows.push(("h_donors".to_string(), donors));
    rows.push(("h_acceptors".to_string(), acceptors));
    Ok(SampleStats {
        n_samples: samples.len(),
        rows,
    })
}

/// One line of a divergence report between sample and dataset statistics.
#[derive(Debug, Clone)]
pub struct MetricRow {
    pub name: String,
    pub sample_mean: f64,
    pub sample_std: f64,
    pub data_mean: f64,
    pub data_std: f64,
    pub abs_delta: f64,
    /// |sample - data| / |data|, absent when the data mean is zero.
    pub rel_delta: Option<f64>,
}

/// Per-metric absolute and relative differences. Schemas must match.
pub fn compare(samples: &SampleStats, data: &SampleStats) -> Result<Vec<MetricRow>> {
    if samples.rows.len() != data.rows.len()
        || samples
            .rows
            .iter()
            .zip(&data.rows)
            .any(|((a, _), (b, _))| a != b)
    {
        return Err(ModelError::SchemaMismatch(
            "sample and dataset statistics have different metric schemas".into(),
        ));
    }
    Ok(samples
        .rows
        .iter()
        .zip(&data.rows)
        .map(|((name, s), (_, d))| {
            let abs_delta = (s.mean() - d.mean()).abs();
            let rel_delta = if d.mean() != 0.0 {
                Some(abs_delta / d.mean().abs())
            } else {
                None
            };
            MetricRow {
                name: name.clone(),
                sample_mean: s.mean(),
                sample_std: s.std(),
                data_mean: d.mean(),
                data_std: d.std(),
                abs_delta,
                rel_delta,
            }
        })
        .collect())
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from("metric,sample_mean,sample_std,data_mean,data_std,abs_delta,rel_delta\n");
    for r in rows {
        let rel = r
            .rel_delta
            .map(|x| format!("{x:.6}"))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
            r.name, r.sample_mean, r.sample_std, r.data_mean, r.data_std, r.abs_delta, rel
        ));
    }
    out
}

/// Spearman rank correlation; ties get average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    pearson(&rx, &ry)
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chem::BondOrder;

    fn table() -> AtomTypeTable {
        AtomTypeTable::qm9()
    }

    fn methane(t: &AtomTypeTable) -> MolecularGraph {
        MolecularGraph::new(vec![t.index_of("C").unwrap()])
            .complete_hydrogens(t)
            .unwrap()
    }

    fn triangle(t: &AtomTypeTable) -> MolecularGraph {
        let c = t.index_of("C").unwrap();
        let mut g = MolecularGraph::new(vec![c; 3]);
        g.add_edge(0, 1, BondOrder::Single).unwrap();
        g.add_edge(1, 2, BondOrder::Single).unwrap();
        g.add_edge(0, 2, BondOrder::Single).unwrap();
        g.complete_hydrogens(t).unwrap()
    }

    #[test]
    fn validity_percentage() {
        let t = table();
        let mut samples = vec![methane(&t); 9];
        // one hand-built valence violator among nine valid
        let broken = MolecularGraph::new(vec![t.index_of("C").unwrap()]);
        samples.push(broken);
        assert_eq!(pct_valid(&samples, &t).unwrap(), 90.0);
        assert!(pct_valid(&[], &t).is_err());
    }

    #[test]
    fn novelty_percentages() {
        let t = table();
        let m = methane(&t);
        let tri = triangle(&t);
        let keys: HashSet<Vec<u8>> = [chem::canonical_key(&m)].into_iter().collect();
        assert_eq!(pct_novel(&[m.clone()], &keys).unwrap(), 0.0);
        assert_eq!(pct_novel(&[tri.clone()], &keys).unwrap(), 100.0);
        assert_eq!(pct_novel(&[m, tri], &keys).unwrap(), 50.0);
    }

    #[test]
    fn uniqueness_percentages() {
        let t = table();
        let m = methane(&t);
        let tri = triangle(&t);
        assert_eq!(pct_unique(&vec![m.clone(); 10]).unwrap(), 10.0);
        let ethanol = chem::smiles::parse("CCO", &t).unwrap();
        // {A, A, B, C} -> 75
        let set = vec![m.clone(), m, tri, ethanol];
        assert_eq!(pct_unique(&set).unwrap(), 75.0);
    }

    #[test]
    fn stats_fixtures() {
        let t = table();
        // kekulized ethanol-like chain: atoms C,C,O; two single bonds
        let g = chem::smiles::parse("CCO", &t).unwrap();
        let stats = distribution_stats(&[g], &t).unwrap();
        assert_eq!(stats.get("atom.C").unwrap().mean(), 2.0);
        assert_eq!(stats.get("atom.O").unwrap().mean(), 1.0);
        assert_eq!(stats.get("bond.single").unwrap().mean(), 2.0);
        assert_eq!(stats.get("bond.double").unwrap().mean(), 0.0);

        // triangle + chain: ring-3 mean one half
        let mixed = vec![triangle(&t), chem::smiles::parse("CCC", &t).unwrap()];
        let stats = distribution_stats(&mixed, &t).unwrap();
        assert_eq!(stats.get("ring.3").unwrap().mean(), 0.5);

        // all six-rings: mean 1, std 0
        let ring6 = chem::smiles::parse("C1CCCCC1", &t).unwrap();
        let stats = distribution_stats(&vec![ring6; 4], &t).unwrap();
        assert_eq!(stats.get("ring.6").unwrap().mean(), 1.0);
        assert_eq!(stats.get("ring.6").unwrap().std(), 0.0);
    }

    #[test]
    fn compare_reports_deltas() {
        let t = table();
        let a = distribution_stats(&[triangle(&t)], &t).unwrap();
        let rows = compare(&a, &a).unwrap();
        assert_eq!(rows.len(), a.rows.len());
        for r in &rows {
            assert_eq!(r.abs_delta, 0.0);
        }
        let b = distribution_stats(&[methane(&t)], &t).unwrap();
        let rows = compare(&b, &a).unwrap();
        let ring3 = rows.iter().find(|r| r.name == "ring.3").unwrap();
        assert_eq!(ring3.abs_delta, 1.0);
        assert_eq!(ring3.rel_delta, Some(1.0));
    }

    #[test]
    fn stats_are_order_invariant() {
        let t = table();
        let a = vec![methane(&t), triangle(&t)];
        let b = vec![triangle(&t), methane(&t)];
        let sa = distribution_stats(&a, &t).unwrap();
        let sb = distribution_stats(&b, &t).unwrap();
        for ((n1, m1), (n2, m2)) in sa.rows.iter().zip(&sb.rows) {
            assert_eq!(n1, n2);
            assert_eq!(m1.mean(), m2.mean());
            assert_eq!(m1.std(), m2.std());
        }
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        // monotone transform leaves it unchanged
        let xs = [0.3f64, 1.7, 0.9, 2.4];
        let ys: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
        assert!((spearman(&xs, &ys) - 1.0).abs() < 1e-12);
    }
}
