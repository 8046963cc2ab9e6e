// scratch debug for the shallow LP acceptance direction
use hyprel::graph::{gen_tree, TreeVariant};
use hyprel::trainer::{evaluate, train, Split, TrainConfig};

fn run(hie_on: bool, seed: u64, lr: f64, epochs: usize, init: f64, lambda: f64, sigma: &str) -> (f64, f64) {
    let graph = gen_tree(3, 1093, TreeVariant::H, 32, seed).unwrap();
    let mut config = TrainConfig {
        max_epochs: epochs,
        patience: epochs,
        dim: 16,
        lr,
        dropout: 0.0,
        seed,
        init_scale: init,
        ..TrainConfig::default()
    };
    config.set("model", "shallow").unwrap();
    config.set("task", "lp").unwrap();
    config.set("manifold", "poincare").unwrap();
    config.set("lp_ratios", "0.25,0.05,0.70").unwrap();
    if hie_on {
        config.set("hie.mode", "full").unwrap();
        config.set("hie.space", "hyperbolic").unwrap();
        config.set("hie.sigma", sigma).unwrap();
        config.hie.lambda = lambda;
    }
    let split = Split::for_config(&config, &graph).unwrap();
    let out = train(&config, &graph, &split).unwrap();
    let report = evaluate(&config, &graph, &split, &out).unwrap();
    (report.metrics["auc"], report.hdo_stats.mean)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.3);
    let epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(300);
    let init: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.001);
    let lambda: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let sigma: String = args.get(5).cloned().unwrap_or_else(|| "tanh".into());
    for seed in [0u64, 1, 2] {
        let (plain, pm) = run(false, seed, lr, epochs, init, lambda, &sigma);
        let (hie, hm) = run(true, seed, lr, epochs, init, lambda, &sigma);
        println!(
            "seed {seed}: plain auc {plain:.4} (hdo {pm:.3}) | hie auc {hie:.4} (hdo {hm:.3}) | gap {:+.4}",
            hie - plain
        );
    }
}
