// scratch debug: test-AUC trajectories for plain vs hie shallow LP
use hyprel::eval::ranking_metrics;
use hyprel::graph::{gen_tree, TreeVariant};
use hyprel::models::lp_scores;
use hyprel::trainer::{train_observed, Split, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args[1].parse().unwrap();
    let epochs: usize = args[2].parse().unwrap();
    let init: f64 = args[3].parse().unwrap();
    let lambda: f64 = args[4].parse().unwrap();
    let sigma = &args[5];
    let seed: u64 = args[6].parse().unwrap();

    let graph = gen_tree(3, 1093, TreeVariant::H, 32, seed).unwrap();
    for hie_on in [false, true] {
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
            config.set("hie.sigma", sigma).unwrap();
            config.hie.lambda = lambda;
        }
        let split = Split::for_config(&config, &graph).unwrap();
        let (tp, tn) = match &split {
            Split::Link(ls) => (ls.test_pos.clone(), ls.test_neg.clone()),
            _ => unreachable!(),
        };
        print!("{}: ", if hie_on { "hie  " } else { "plain" });
        let _ = train_observed(&config, &graph, &split, |epoch, emb| {
            if epoch % (epochs / 10).max(1) == 0 {
                let pos = lp_scores(emb, &tp, &config.fd).unwrap();
                let neg = lp_scores(emb, &tn, &config.fd).unwrap();
                let (auc, _) = ranking_metrics(&pos, &neg).unwrap();
                let o = emb.space.origin(emb.dim());
                let mean_hdo: f64 = (0..emb.n())
                    .map(|i| hyprel::manifold::dist(&emb.point(i), &o).unwrap())
                    .sum::<f64>()
                    / emb.n() as f64;
                print!("e{epoch}:auc={auc:.3}/hdo={mean_hdo:.2} ");
            }
        })
        .unwrap();
        println!();
    }
}
