use hyperdet::diffusion;
use hyperdet::model::{classify, load_checkpoint, AttentionMode};
use hyperdet::trainer::{predict_probs, TrainSnapshot};
use hyperdet::Hypergraph;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let data = std::path::Path::new(&args[1]);
    let ckpt = std::path::Path::new(&args[2]);
    let k: usize = args[3].parse().unwrap();
    let g = Hypergraph::load(&data.join("hypergraph.hg")).unwrap();
    let test = diffusion::load_dataset(&data.join("test.json")).unwrap();
    let params = load_checkpoint(ckpt).unwrap();
    for snap in test.iter().take(3) {
        let ts = TrainSnapshot::prepare(&g, snap, k, true).unwrap();
        let probs = predict_probs(&params, &ts, AttentionMode::Learned);
        let pred = classify(&probs);
        let sources = &snap.sources;
        println!("sources: {sources:?}");
        println!("predicted ({}): {pred:?}", pred.len());
        // bucket FPs by timestamp
        let mut buckets: std::collections::BTreeMap<String, usize> = Default::default();
        for &v in &pred {
            if !sources.contains(&v) {
                let t = snap.timestamps[v];
                let key = if !snap.states[v] { "uninfected".to_string() } else { format!("t={t:.2}") };
                *buckets.entry(key).or_default() += 1;
            }
        }
        println!("false positives by time: {buckets:?}");
        let missed: Vec<_> = sources.iter().filter(|v| !pred.contains(v)).collect();
        println!("missed sources: {missed:?}");
        // prob of each source vs top non-sources
        let mut ranked: Vec<(usize, f64)> = (0..g.node_count()).map(|v| (v, probs.get(v, 0))).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        let top: Vec<String> = ranked.iter().take(15).map(|(v, p)| {
            let tag = if sources.contains(v) { "SRC" } else if snap.states[*v] { "inf" } else { "ign" };
            format!("{v}:{tag}:{p:.2}")
        }).collect();
        println!("top 15 by p(source): {top:?}\n");
    }
}
