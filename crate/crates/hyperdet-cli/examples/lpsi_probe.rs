use hyperdet::baseline;
use hyperdet::diffusion;
use hyperdet::metrics::{auc, confusion_metrics, MetricsReport, SnapshotMetrics};
use hyperdet::Hypergraph;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let data = std::path::Path::new(&args[1]);
    let g = Hypergraph::load(&data.join("hypergraph.hg")).unwrap();
    let exp = g.clique_expansion_hypergraph().unwrap();
    let test = diffusion::load_dataset(&data.join("test.json")).unwrap();
    let rows: Vec<SnapshotMetrics> = test
        .iter()
        .map(|s| {
            let pred = baseline::lpsi(&exp, s, 0.5);
            let c = confusion_metrics(&pred, &s.sources, g.node_count());
            let scores = baseline::lpsi_labels(&exp, s, 0.5);
            let labels: Vec<bool> = (0..g.node_count()).map(|v| s.is_source(v)).collect();
            SnapshotMetrics {
                acc: c.acc,
                precision: c.precision,
                recall: c.recall,
                f1: c.f1,
                auc: auc(&scores, &labels),
            }
        })
        .collect();
    let rep = MetricsReport::from_snapshots(rows, Default::default());
    println!(
        "lpsi: acc {:.4} precision {:.4} recall {:.4} f1 {:.4}",
        rep.mean.acc, rep.mean.precision, rep.mean.recall, rep.mean.f1
    );
}
