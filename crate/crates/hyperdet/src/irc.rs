//! Interactive relationship construction: dynamic state hyperedges appended to
//! the incidence structure, plus raw node features built from state, time and
//! spectral position on the infected subgraph.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha12Rng;

use crate::autodiff::Tensor;
use crate::diffusion::Snapshot;
use crate::error::{Error, Result};
use crate::hypergraph::Hypergraph;

/// Base incidence plus the two dynamic state columns.
///
/// Columns `0..base_cols` mirror the hypergraph's edges. When dynamic columns
/// are present, column `base_cols` collects the non-spreaders (e_ig) and
/// column `base_cols+1` the spreaders (e_sp); each node belongs to exactly one
/// of the two. Boundary snapshots keep all-zero dynamic columns so shapes stay
/// state-independent.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedIncidence {
    pub n: usize,
    pub base_cols: usize,
    /// Member lists per column, ascending node ids.
    pub columns: Vec<Vec<usize>>,
    pub weights: Vec<f64>,
}

impl AugmentedIncidence {
    pub fn num_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn has_dynamic_cols(&self) -> bool {
        self.columns.len() == self.base_cols + 2
    }
}

/// Append e_ig and e_sp columns for one snapshot.
pub fn augment_incidence(g: &Hypergraph, snapshot: &Snapshot) -> AugmentedIncidence {
    assert_eq!(g.node_count(), snapshot.node_count(), "snapshot/hypergraph size mismatch");
    let mut columns: Vec<Vec<usize>> = g.edges().to_vec();
    let mut weights = g.weights().to_vec();
    let ignorant: Vec<usize> = (0..g.node_count()).filter(|&v| !snapshot.states[v]).collect();
    let spreaders: Vec<usize> = (0..g.node_count()).filter(|&v| snapshot.states[v]).collect();
    columns.push(ignorant);
    columns.push(spreaders);
    weights.push(1.0);
    weights.push(1.0);
    AugmentedIncidence { n: g.node_count(), base_cols: g.edge_count(), columns, weights }
}

/// Base incidence only, for runs without the dynamic interaction columns.
pub fn base_incidence(g: &Hypergraph) -> AugmentedIncidence {
    AugmentedIncidence {
        n: g.node_count(),
        base_cols: g.edge_count(),
        columns: g.edges().to_vec(),
        weights: g.weights().to_vec(),
    }
}

/// State feature X¹: +1 for spreaders, −1 otherwise.
pub fn state_feature(snapshot: &Snapshot) -> Vec<f64> {
    snapshot.states.iter().map(|&s| if s { 1.0 } else { -1.0 }).collect()
}

/// Time feature X²: the snapshot's visible timestamps (−1 for non-spreaders).
pub fn time_feature(snapshot: &Snapshot) -> Vec<f64> {
    snapshot.timestamps.clone()
}

/// Infected subgraph with its node mapping back to the full graph.
#[derive(Debug, Clone)]
pub struct InfectedSubgraph {
    pub sub: Hypergraph,
    /// `node_map[i]` is the original id of subgraph node `i` (ascending).
    pub node_map: Vec<usize>,
}

/// Restrict every base hyperedge to spreader members; edges that shrink below
/// two members are dropped, weights are retained. Dynamic columns are never
/// part of the subgraph.
pub fn infected_subhypergraph(g: &Hypergraph, snapshot: &Snapshot) -> Result<InfectedSubgraph> {
    let node_map: Vec<usize> = (0..g.node_count()).filter(|&v| snapshot.states[v]).collect();
    if node_map.is_empty() {
        return Err(Error::InvalidHypergraph("infected subgraph needs at least one spreader".into()));
    }
    let mut dense = vec![usize::MAX; g.node_count()];
    for (i, &v) in node_map.iter().enumerate() {
        dense[v] = i;
    }
    let mut edges = Vec::new();
    let mut weights = Vec::new();
    for (e, members) in g.edges().iter().enumerate() {
        let kept: Vec<usize> = members
            .iter()
            .filter(|&&v| snapshot.states[v])
            .map(|&v| dense[v])
            .collect();
        if kept.len() >= 2 {
            edges.push(kept);
            weights.push(g.weights()[e]);
        }
    }
    let sub = Hypergraph::with_weights(node_map.len(), edges, weights)?;
    Ok(InfectedSubgraph { sub, node_map })
}

/// Symmetric normalized hypergraph Laplacian
/// `L = I − D_V^{−1/2} H D_E^{−1} Hᵀ D_V^{−1/2}`, with hyperedge weights
/// folded into the node degrees. Requires every node to have degree ≥ 1.
pub fn hypergraph_laplacian(g: &Hypergraph) -> Result<DMatrix<f64>> {
    let n = g.node_count();
    let deg = g.degrees();
    if let Some(v) = deg.node_deg.iter().position(|&d| d <= 0.0) {
        return Err(Error::InvalidHypergraph(format!(
            "node {v} has zero degree; exclude isolated nodes before the Laplacian"
        )));
    }
    let inv_sqrt: Vec<f64> = deg.node_deg.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut l = DMatrix::<f64>::identity(n, n);
    for (e, members) in g.edges().iter().enumerate() {
        let inv_edge = 1.0 / deg.edge_deg[e];
        for &u in members {
            for &v in members {
                l[(u, v)] -= inv_sqrt[u] * inv_edge * inv_sqrt[v];
            }
        }
    }
    Ok(l)
}

/// Eigendecomposition of a Laplacian, sorted ascending with deterministic
/// sign and tie conventions.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    /// Ascending; ties ordered by lexicographic sign-fixed eigenvector.
    pub eigenvalues: Vec<f64>,
    /// `eigenvectors[j]` is the eigenvector of `eigenvalues[j]`, sign-fixed so
    /// its maximum-magnitude entry (lowest index on ties) is positive.
    pub eigenvectors: Vec<Vec<f64>>,
    /// Sorted indices used for positional encoding: 1..=min(k, n−1).
    pub selected: Vec<usize>,
}

/// Flip a vector in place so its maximum-magnitude entry is positive; among
/// equal magnitudes the lowest index decides.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Decompose a symmetric matrix and select the `k` smallest non-trivial
/// eigenvector indices (the single smallest eigenvalue is skipped).
pub fn spectral_decomposition(l: &DMatrix<f64>, k: usize) -> Result<SpectralDecomposition> {
    let n = l.nrows();
    let eig = SymmetricEigen::try_new(l.clone(), 1e-13, 100_000).ok_or_else(|| {
        Error::Numeric(format!("eigensolver did not converge on {n}x{n} matrix:\n{l}"))
    })?;
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|j| {
            let mut col: Vec<f64> = eig.eigenvectors.column(j).iter().copied().collect();
            fix_sign(&mut col);
            (eig.eigenvalues[j], col)
        })
        .collect();
    // Repeated eigenvalues (e.g. disconnected subgraphs) get a stable order
    // via the sign-fixed eigenvectors.
    pairs.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then_with(|| a.1.partial_cmp(&b.1).unwrap())
    });
    let selected: Vec<usize> = (1..n.min(k + 1)).collect();
    let (eigenvalues, eigenvectors) = pairs.into_iter().unzip();
    Ok(SpectralDecomposition { eigenvalues, eigenvectors, selected })
}

/// Spectral positional encoding X³, mapped back to the full node set.
///
/// Spreader rows come from the eigenvectors of the infected subgraph's
/// Laplacian; missing columns (fewer than `k` non-trivial eigenvectors) are
/// zero-padded; isolated spreaders and empty subgraphs get zero rows;
/// non-spreaders get constant −1 rows.
pub fn positional_encoding(g: &Hypergraph, snapshot: &Snapshot, k: usize) -> Result<Tensor> {
    assert!(k >= 1, "positional dimension k must be >= 1");
    let n = g.node_count();
    let mut out = Tensor::from_vec(n, k, vec![-1.0; n * k]);
    let spreaders: Vec<usize> = (0..n).filter(|&v| snapshot.states[v]).collect();
    if spreaders.is_empty() {
        return Ok(out);
    }
    for &v in &spreaders {
        for j in 0..k {
            out.set(v, j, 0.0);
        }
    }
    let infected = infected_subhypergraph(g, snapshot)?;
    // Only nodes covered by a surviving edge enter the Laplacian.
    let sub_deg = infected.sub.degrees();
    let core: Vec<usize> = (0..infected.sub.node_count())
        .filter(|&i| sub_deg.node_deg[i] > 0.0)
        .collect();
    if core.is_empty() {
        return Ok(out);
    }
    let mut core_dense = vec![usize::MAX; infected.sub.node_count()];
    for (ci, &i) in core.iter().enumerate() {
        core_dense[i] = ci;
    }
    let core_edges: Vec<Vec<usize>> = infected
        .sub
        .edges()
        .iter()
        .map(|e| e.iter().map(|&v| core_dense[v]).collect())
        .collect();
    let core_graph =
        Hypergraph::with_weights(core.len(), core_edges, infected.sub.weights().to_vec())?;
    let l = hypergraph_laplacian(&core_graph)?;
    let spec = spectral_decomposition(&l, k)?;
    for (j, &col) in spec.selected.iter().enumerate() {
        let psi = &spec.eigenvectors[col];
        for (ci, &sub_i) in core.iter().enumerate() {
            out.set(infected.node_map[sub_i], j, psi[ci]);
        }
    }
    Ok(out)
}

/// Raw node features: column 0 state, column 1 time, columns 2.. positional.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub k: usize,
    pub data: Tensor,
}

impl FeatureMatrix {
    pub fn width(&self) -> usize {
        2 + self.k
    }

    /// CSV with header `state,time,pe_0..pe_{k−1}`, one row per node.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write;
        let mut s = String::from("state,time");
        for j in 0..self.k {
            let _ = write!(s, ",pe_{j}");
        }
        s.push('\n');
        for i in 0..self.data.rows {
            let row = self.data.row(i);
            let line: Vec<String> = row.iter().map(|x| format!("{x}")).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }
}

/// Concatenate X¹ ‖ X² ‖ X³ into the n × (2+k) feature matrix.
pub fn assemble_features(x1: &[f64], x2: &[f64], x3: &Tensor) -> FeatureMatrix {
    let n = x1.len();
    assert_eq!(x2.len(), n, "feature column length mismatch");
    assert_eq!(x3.rows, n, "positional block row mismatch");
    let k = x3.cols;
    let mut data = Vec::with_capacity(n * (2 + k));
    for i in 0..n {
        data.push(x1[i]);
        data.push(x2[i]);
        data.extend_from_slice(x3.row(i));
    }
    FeatureMatrix { k, data: Tensor::from_vec(n, 2 + k, data) }
}

/// Full raw-feature pipeline for one snapshot.
pub fn build_features(g: &Hypergraph, snapshot: &Snapshot, k: usize) -> Result<FeatureMatrix> {
    let x1 = state_feature(snapshot);
    let x2 = time_feature(snapshot);
    let x3 = positional_encoding(g, snapshot, k)?;
    Ok(assemble_features(&x1, &x2, &x3))
}

/// Zero the feature rows of ⌊rate·n⌋ uniformly chosen nodes (labels are not
/// touched by this; it models unobservable nodes).
pub fn mask_incomplete(features: &FeatureMatrix, rate: f64, rng: &mut ChaCha12Rng) -> FeatureMatrix {
    assert!((0.0..1.0).contains(&rate), "mask rate must be in [0,1)");
    let n = features.data.rows;
    let count = (rate * n as f64).floor() as usize;
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(rng);
    let mut out = features.clone();
    for &v in ids.iter().take(count) {
        for j in 0..features.width() {
            out.data.set(v, j, 0.0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{self, DiffusionModel, PropagationConfig};
    use rand::SeedableRng;

    /// Snapshot with the given spreaders; timestamps 0 for spreaders.
    fn snap(n: usize, spreaders: &[usize]) -> Snapshot {
        let mut states = vec![false; n];
        let mut timestamps = vec![-1.0; n];
        for &v in spreaders {
            states[v] = true;
            timestamps[v] = 0.0;
        }
        Snapshot {
            states,
            timestamps,
            sources: spreaders.to_vec(),
            meta: crate::diffusion::SnapshotMeta {
                seed: 0,
                model: DiffusionModel::Ic,
                delta: 0.3,
                step: 0,
                died_out: false,
                terminal_fraction: spreaders.len() as f64 / n as f64,
            },
        }
    }

    fn sample_snapshot(seed: u64, n: usize, m: usize) -> (Hypergraph, Snapshot) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let g = diffusion::random_hypergraph(n, m, 2, 5, &mut rng).unwrap();
        let cfg = PropagationConfig {
            model: DiffusionModel::Si,
            source_fraction: 0.1,
            seed,
            ..Default::default()
        };
        let s = diffusion::run_until_fraction(&g, &cfg).unwrap();
        (g, s)
    }

    #[test]
    fn augmented_columns_read_off() {
        let g = Hypergraph::new(3, vec![vec![0, 1], vec![1, 2]]).unwrap();
        let s = snap(3, &[0]);
        let aug = augment_incidence(&g, &s);
        assert_eq!(aug.num_cols(), 4);
        assert_eq!(aug.columns[2], vec![1, 2]); // e_ig
        assert_eq!(aug.columns[3], vec![0]); // e_sp
        assert_eq!(aug.weights[2..], [1.0, 1.0]);
    }

    #[test]
    fn boundary_snapshots_keep_empty_columns() {
        let g = Hypergraph::new(3, vec![vec![0, 1, 2]]).unwrap();
        let all = augment_incidence(&g, &snap(3, &[0, 1, 2]));
        assert!(all.columns[1].is_empty()); // e_ig
        assert_eq!(all.columns[2], vec![0, 1, 2]);

        let none = augment_incidence(&g, &snap(3, &[]));
        assert_eq!(none.columns[1], vec![0, 1, 2]);
        assert!(none.columns[2].is_empty()); // e_sp
    }

    #[test]
    fn dynamic_columns_partition_nodes() {
        let (g, s) = sample_snapshot(3, 30, 25);
        let aug = augment_incidence(&g, &s);
        let m = aug.base_cols;
        let mut cover = vec![0u8; g.node_count()];
        for &v in &aug.columns[m] {
            cover[v] += 1;
        }
        for &v in &aug.columns[m + 1] {
            cover[v] += 1;
        }
        assert!(cover.iter().all(|&c| c == 1));
    }

    #[test]
    fn state_and_time_features() {
        let mut s = snap(4, &[1, 2]);
        s.timestamps[2] = 1.0; // infected at the capture step
        assert_eq!(state_feature(&s), vec![-1.0, 1.0, 1.0, -1.0]);
        assert_eq!(time_feature(&s), vec![-1.0, 0.0, 1.0, -1.0]);
    }

    #[test]
    fn subhypergraph_restriction_and_mapping() {
        let g = Hypergraph::new(5, vec![vec![0, 1, 2], vec![2, 3], vec![3, 4]]).unwrap();
        let s = snap(5, &[0, 1, 3]);
        let sub = infected_subhypergraph(&g, &s).unwrap();
        assert_eq!(sub.node_map, vec![0, 1, 3]);
        // {0,1,2}∩s = {0,1} kept; {2,3}∩s = {3} dropped; {3,4}∩s = {3} dropped.
        assert_eq!(sub.sub.edges(), &[vec![0, 1]]);
        assert!(infected_subhypergraph(&g, &snap(5, &[])).is_err());
    }

    #[test]
    fn single_edge_laplacian_hand_values() {
        let g = Hypergraph::new(2, vec![vec![0, 1]]).unwrap();
        let l = hypergraph_laplacian(&g).unwrap();
        assert_eq!(l[(0, 0)], 0.5);
        assert_eq!(l[(0, 1)], -0.5);
        assert_eq!(l[(1, 0)], -0.5);
        assert_eq!(l[(1, 1)], 0.5);
        let spec = spectral_decomposition(&l, 1).unwrap();
        assert!((spec.eigenvalues[0] - 0.0).abs() <= 1e-10);
        assert!((spec.eigenvalues[1] - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn laplacian_rejects_isolated_nodes() {
        let g = Hypergraph::new(3, vec![vec![0, 1]]).unwrap();
        assert!(hypergraph_laplacian(&g).is_err());
    }

    #[test]
    fn single_edge_pe_sign_convention() {
        let g = Hypergraph::new(3, vec![vec![0, 1], vec![1, 2]]).unwrap();
        let s = snap(3, &[0, 1]);
        let pe = positional_encoding(&g, &s, 1).unwrap();
        let r = 0.5f64.sqrt();
        assert!((pe.get(0, 0) - r).abs() <= 1e-9, "got {}", pe.get(0, 0));
        assert!((pe.get(1, 0) + r).abs() <= 1e-9, "got {}", pe.get(1, 0));
        assert_eq!(pe.get(2, 0), -1.0);
    }

    #[test]
    fn pe_pads_missing_columns_with_zeros() {
        let g = Hypergraph::new(3, vec![vec![0, 1], vec![1, 2]]).unwrap();
        let s = snap(3, &[0, 1]);
        let pe = positional_encoding(&g, &s, 4).unwrap();
        for j in 1..4 {
            assert_eq!(pe.get(0, j), 0.0);
            assert_eq!(pe.get(1, j), 0.0);
            assert_eq!(pe.get(2, j), -1.0);
        }
    }

    #[test]
    fn isolated_spreaders_and_empty_subgraphs_get_zero_rows() {
        let g = Hypergraph::new(4, vec![vec![0, 1], vec![2, 3]]).unwrap();
        // Spreaders {0, 2}: both restricted edges shrink to singletons.
        let pe = positional_encoding(&g, &snap(4, &[0, 2]), 2).unwrap();
        assert_eq!(pe.row(0), &[0.0, 0.0]);
        assert_eq!(pe.row(2), &[0.0, 0.0]);
        assert_eq!(pe.row(1), &[-1.0, -1.0]);

        // No spreaders at all: every row is the -1 fill.
        let pe = positional_encoding(&g, &snap(4, &[]), 2).unwrap();
        assert!(pe.data.iter().all(|&x| x == -1.0));
    }

    #[test]
    fn laplacian_spectral_properties_on_random_subgraphs() {
        for seed in 0..25 {
            let (g, s) = sample_snapshot(seed, 40, 35);
            let infected = match infected_subhypergraph(&g, &s) {
                Ok(i) => i,
                Err(_) => continue,
            };
            let deg = infected.sub.degrees();
            let core: Vec<usize> = (0..infected.sub.node_count())
                .filter(|&i| deg.node_deg[i] > 0.0)
                .collect();
            if core.len() < 2 {
                continue;
            }
            let mut dense = vec![usize::MAX; infected.sub.node_count()];
            for (ci, &i) in core.iter().enumerate() {
                dense[i] = ci;
            }
            let edges: Vec<Vec<usize>> = infected
                .sub
                .edges()
                .iter()
                .map(|e| e.iter().map(|&v| dense[v]).collect())
                .collect();
            let cg = Hypergraph::new(core.len(), edges).unwrap();
            let l = hypergraph_laplacian(&cg).unwrap();

            let asym = (&l - l.transpose()).abs().max();
            assert!(asym <= 1e-12, "asymmetry {asym}");

            let spec = spectral_decomposition(&l, 8).unwrap();
            for &ev in &spec.eigenvalues {
                assert!(ev >= -1e-8 && ev <= 1.0 + 1e-8, "eigenvalue {ev}");
            }

            // reconstruction and orthonormality
            let n = l.nrows();
            let psi = DMatrix::from_fn(n, n, |i, j| spec.eigenvectors[j][i]);
            let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(
                spec.eigenvalues.clone(),
            ));
            let recon = (&psi * lambda * psi.transpose() - &l).abs().max();
            assert!(recon <= 1e-8, "reconstruction error {recon}");
            let ortho = (psi.transpose() * &psi - DMatrix::<f64>::identity(n, n)).abs().max();
            assert!(ortho <= 1e-8, "orthonormality error {ortho}");
        }
    }

    #[test]
    fn connected_subgraph_kernel_is_degree_vector() {
        // Chain of overlapping edges: connected by construction.
        let g = Hypergraph::new(6, vec![vec![0, 1, 2], vec![2, 3], vec![3, 4, 5]]).unwrap();
        let l = hypergraph_laplacian(&g).unwrap();
        let spec = spectral_decomposition(&l, 3).unwrap();
        assert!(spec.eigenvalues[0].abs() <= 1e-10);
        assert!(spec.eigenvalues[1] > 1e-6, "zero eigenvalue must be simple");

        let deg = g.degrees();
        let mut expect: Vec<f64> = deg.node_deg.iter().map(|d| d.sqrt()).collect();
        let norm: f64 = expect.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut expect {
            *x /= norm;
        }
        fix_sign(&mut expect);
        let got = &spec.eigenvectors[0];
        for (a, b) in got.iter().zip(&expect) {
            assert!((a - b).abs() <= 1e-6, "kernel eigenvector {a} vs {b}");
        }
    }

    #[test]
    fn positional_encoding_is_pure() {
        let (g, s) = sample_snapshot(11, 30, 25);
        let a = positional_encoding(&g, &s, 8).unwrap();
        let b = positional_encoding(&g, &s, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn assembled_features_layout() {
        let g = Hypergraph::new(3, vec![vec![0, 1], vec![1, 2]]).unwrap();
        let s = snap(3, &[0, 1]);
        let f = build_features(&g, &s, 8).unwrap();
        assert_eq!(f.width(), 10);
        assert_eq!(f.data.cols, 10);
        // spreader source row: (+1, 0.0, ψ…)
        assert_eq!(f.data.get(0, 0), 1.0);
        assert_eq!(f.data.get(0, 1), 0.0);
        // ignorant row: all −1
        assert!(f.data.row(2).iter().all(|&x| x == -1.0));

        let csv = f.to_csv();
        assert!(csv.starts_with("state,time,pe_0,"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn mask_incomplete_counts_and_determinism() {
        let (g, s) = sample_snapshot(13, 100, 80);
        let f = build_features(&g, &s, 4).unwrap();

        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let same = mask_incomplete(&f, 0.0, &mut rng);
        assert_eq!(same, f);

        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let masked = mask_incomplete(&f, 0.25, &mut rng);
        let zero_rows = (0..100)
            .filter(|&i| masked.data.row(i).iter().all(|&x| x == 0.0))
            .count();
        assert_eq!(zero_rows, 25);

        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let again = mask_incomplete(&f, 0.25, &mut rng);
        assert_eq!(masked, again);
    }
}
