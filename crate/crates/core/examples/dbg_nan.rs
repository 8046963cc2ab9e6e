// scratch: locate the first NaN in hgcn training
use hyprel::graph::{gen_tree, TreeVariant};
use hyprel::trainer::{train_observed, Split, TrainConfig};

fn main() {
    let graph = gen_tree(3, 1093, TreeVariant::H, 32, 0).unwrap();
    let f = graph.features.as_ref().unwrap();
    let mut maxn: f64 = 0.0;
    for row in f.rows() {
        maxn = maxn.max(row.dot(&row).sqrt());
    }
    println!("max feature norm {maxn:.2}");
    let mut config = TrainConfig {
        max_epochs: 3,
        patience: 10,
        dim: 16,
        lr: 0.01,
        dropout: 0.1,
        seed: 0,
        ..TrainConfig::default()
    };
    config.set("hie.mode", "off").unwrap();
    let split = Split::for_config(&config, &graph).unwrap();
    let r = train_observed(&config, &graph, &split, |epoch, emb| {
        let nan = emb.coords.iter().filter(|v| v.is_nan()).count();
        let max = emb.coords.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
        println!("epoch {epoch}: {nan} NaN coords, max |coord| {max:.3e}");
    });
    println!("result: {:?}", r.map(|o| o.best_epoch));
}
