use hyperdet::config::ExperimentConfig;
use hyperdet::metrics::MetricsReport;
use hyperdet::sweeps::{arm_seed, run_experiment, run_lpsi_experiment, RunSpec, Variant};

fn per_seed_f1(rep: &MetricsReport, seeds: usize) -> Vec<f64> {
    let chunk = rep.per_snapshot.len() / seeds;
    rep.per_snapshot
        .chunks(chunk)
        .map(|c| c.iter().map(|m| m.f1).sum::<f64>() / c.len() as f64)
        .collect()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let cfg_path = std::path::Path::new(&args[1]);
    let inc: f64 = args[2].parse().unwrap();
    let seeds: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1);
    let arms = args.get(4).map(|s| s.as_str()).unwrap_or("full,woe,woh,lpsi");
    let mut cfg = ExperimentConfig::load(cfg_path).unwrap();
    cfg.seeds = seeds;
    let g = cfg.resolve_hypergraph().unwrap();
    let arm = arm_seed(cfg.master_seed, None);
    for name in arms.split(',') {
        let mut delta = None;
        let variant = match name {
            "full" => Variant::Full,
            "early" => {
                delta = Some(0.10);
                Variant::Full
            }
            "woe" => Variant::WoE,
            "woh" => Variant::WoH,
            "lpsi" => {
                let spec = RunSpec { incompleteness: inc, ..Default::default() };
                let rep = run_lpsi_experiment(&g, &cfg, &spec, arm).unwrap();
                println!("lpsi: acc {:.4} f1 {:.4}", rep.mean.acc, rep.mean.f1);
                continue;
            }
            other => panic!("unknown arm {other}"),
        };
        let spec = RunSpec { variant, delta, incompleteness: inc, ..Default::default() };
        let rep = run_experiment(&g, &cfg, &spec, arm).unwrap();
        println!(
            "{variant:?}: acc {:.4} precision {:.4} recall {:.4} f1 {:.4} per-seed {:?}",
            rep.mean.acc,
            rep.mean.precision,
            rep.mean.recall,
            rep.mean.f1,
            per_seed_f1(&rep, seeds).iter().map(|x| (x * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        );
    }
}
