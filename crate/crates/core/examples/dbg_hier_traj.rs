// scratch: hierarchy-accuracy trajectory during training
use hyprel::eval::hierarchy_accuracy;
use hyprel::graph::{gen_tree, TreeVariant};
use hyprel::trainer::{train_observed, Split, TrainConfig};

fn main() {
    let mut pairs: Vec<(String, String)> = Vec::new();
    let mut epochs = 600usize;
    let mut modes = vec!["off".to_string(), "full".to_string()];
    for arg in std::env::args().skip(1) {
        let (k, v) = arg.split_once('=').expect("key=value");
        match k {
            "epochs" => epochs = v.parse().unwrap(),
            "modes" => modes = v.split(',').map(|s| s.to_string()).collect(),
            _ => pairs.push((k.to_string(), v.to_string())),
        }
    }
    let graph = gen_tree(3, 1093, TreeVariant::H, 32, 0).unwrap();
    let depth = graph.depth.clone().unwrap();
    for mode in &modes {
        let mut config = TrainConfig {
            max_epochs: epochs,
            patience: epochs,
            dim: 16,
            dropout: 0.1,
            seed: 0,
            ..TrainConfig::default()
        };
        config.set("hie.mode", mode).unwrap();
        for (k, v) in &pairs {
            config.set(k, v).unwrap();
        }
        let split = Split::for_config(&config, &graph).unwrap();
        print!("{mode:<9}: ");
        let _ = train_observed(&config, &graph, &split, |epoch, emb| {
            if epoch % (epochs / 8).max(1) == 0 {
                let h = hierarchy_accuracy(emb, &depth, 2000, 1).unwrap();
                print!("e{epoch}:{h:.3} ");
            }
        })
        .unwrap();
        println!();
    }
}
