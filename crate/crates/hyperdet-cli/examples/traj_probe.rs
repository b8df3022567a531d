use hyperdet::config::ExperimentConfig;
use hyperdet::metrics::MetricsReport;
use hyperdet::sweeps::{
    arm_seed, evaluate_model, prepare_data, train_run, RunSpec, Variant,
};
use hyperdet::derive_seed;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let cfg_path = std::path::Path::new(&args[1]);
    let inc: f64 = args[2].parse().unwrap();
    let cfg = ExperimentConfig::load(cfg_path).unwrap();
    let g = cfg.resolve_hypergraph().unwrap();
    let arm = arm_seed(cfg.master_seed, None);
    let run_seed = derive_seed(arm, 0);
    for variant in [Variant::Full, Variant::WoE] {
        let spec = RunSpec { variant, incompleteness: inc, ..Default::default() };
        let data = prepare_data(&g, &cfg, &spec, run_seed).unwrap();
        let trained = train_run(&data, &cfg, &spec, run_seed).unwrap();
        let rows = evaluate_model(&trained.params, &data.test, spec.variant.attention_mode());
        let rep = MetricsReport::from_snapshots(rows, Default::default());
        let v: Vec<String> = trained.report.val_f1.iter().map(|x| format!("{x:.3}")).collect();
        println!("{variant:?}: test f1 {:.4} best epoch {}", rep.mean.f1, trained.report.best_epoch);
        println!("  val: {}", v.join(" "));
    }
}
