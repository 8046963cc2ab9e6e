// scratch debug: HGCN NC/LP on synthetic trees across hie settings.
// args: key=value pairs passed straight to the config, plus
//   seeds=N variant=H|L modes=off,full,...
use hyprel::graph::{gen_tree, TreeVariant};
use hyprel::trainer::{evaluate, train, Split, TrainConfig};

fn main() {
    let mut seeds = 1u64;
    let mut variant = TreeVariant::H;
    let mut modes: Vec<String> = vec!["off".into(), "full".into()];
    let mut pairs: Vec<(String, String)> = Vec::new();
    let mut epochs = 300usize;
    for arg in std::env::args().skip(1) {
        let (k, v) = arg.split_once('=').expect("key=value");
        match k {
            "seeds" => seeds = v.parse().unwrap(),
            "variant" => variant = TreeVariant::parse(v).unwrap(),
            "modes" => modes = v.split(',').map(|s| s.to_string()).collect(),
            "epochs" => epochs = v.parse().unwrap(),
            _ => pairs.push((k.to_string(), v.to_string())),
        }
    }
    for seed in 0..seeds {
        let graph = gen_tree(3, 1093, variant, 32, seed).unwrap();
        for mode in &modes {
            let mut config = TrainConfig {
                max_epochs: epochs,
                patience: 100,
                dim: 16,
                dropout: 0.1,
                seed,
                ..TrainConfig::default()
            };
            config.set("hie.mode", mode).unwrap();
            for (k, v) in &pairs {
                config.set(k, v).unwrap();
            }
            let split = Split::for_config(&config, &graph).unwrap();
            let out = match train(&config, &graph, &split) {
                Ok(o) => o,
                Err(e) => {
                    println!("seed {seed} mode {mode:<10} FAILED: {e}");
                    continue;
                }
            };
            let report = evaluate(&config, &graph, &split, &out).unwrap();
            let emb = &out.embedding;
            let o = emb.space.origin(emb.dim());
            let mut values: Vec<f64> = (0..emb.n())
                .map(|i| hyprel::manifold::dist(&emb.point(i), &o).unwrap())
                .collect();
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let hdo = &report.hdo_stats;
            let below = values.iter().filter(|&&v| v < hdo.root).count() as f64
                / values.len() as f64;
            let depth = graph.depth.as_ref().unwrap();
            let mut by_depth: Vec<Vec<f64>> = vec![Vec::new(); 7];
            for i in 0..emb.n() {
                by_depth[depth[i]]
                    .push(hyprel::manifold::dist(&emb.point(i), &o).unwrap());
            }
            let prof: Vec<String> = by_depth
                .iter()
                .map(|v| format!("{:.1}", v.iter().sum::<f64>() / v.len().max(1) as f64))
                .collect();
            let task_metric = report
                .metrics
                .get("accuracy")
                .or_else(|| report.metrics.get("auc"))
                .unwrap();
            println!(
                "seed {seed} mode {mode:<10} task {:.4} hier {:.4} mean {:.2} root {:.2} pct {:.2} depths [{}] ep {}",
                task_metric,
                report.metrics["hierarchy_accuracy"],
                hdo.mean,
                hdo.root,
                below,
                prof.join(" "),
                out.best_epoch,
            );
        }
    }
}
