// scratch: where do leaves sit radially vs internals, per configuration
use hyprel::graph::{gen_tree, TreeVariant};
use hyprel::trainer::{train, Split, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let manifold = args.get(1).cloned().unwrap_or_else(|| "lorentz".into());
    let mode = args.get(2).cloned().unwrap_or_else(|| "off".into());
    let epochs: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(300);
    let layers: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(2);
    let variant = args.get(5).cloned().unwrap_or_else(|| "H".into());
    let lambda: f64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let graph = gen_tree(
        3,
        1093,
        if variant == "H" { TreeVariant::H } else { TreeVariant::L },
        32,
        0,
    )
    .unwrap();
    let mut config = TrainConfig {
        max_epochs: epochs,
        patience: 100,
        layers,
        dim: 16,
        lr: 0.01,
        dropout: 0.1,
        seed: 0,
        ..TrainConfig::default()
    };
    config.set("manifold", &manifold).unwrap();
    config.set("hie.mode", &mode).unwrap();
    config.hie.lambda = lambda;
    let split = Split::for_config(&config, &graph).unwrap();
    let out = train(&config, &graph, &split).unwrap();
    let emb = &out.embedding;
    let o = emb.space.origin(emb.dim());
    let depth = graph.depth.as_ref().unwrap();
    let mut by_depth: Vec<Vec<f64>> = vec![Vec::new(); 7];
    for i in 0..emb.n() {
        by_depth[depth[i]].push(hyprel::manifold::dist(&emb.point(i), &o).unwrap());
    }
    print!("{manifold} {mode} L{layers} {variant}: mean HDO by depth: ");
    for (d, v) in by_depth.iter().enumerate() {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        print!("d{d}:{m:.2} ");
    }
    let report = hyprel::trainer::evaluate(&config, &graph, &split, &out).unwrap();
    println!("| hier {:.3}", report.metrics["hierarchy_accuracy"]);
}
