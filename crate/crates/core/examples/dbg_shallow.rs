// scratch debug — not part of the crate
use hyprel::graph::{gen_tree, TreeVariant};
use hyprel::trainer::{train, Split, TrainConfig};

fn main() {
    let graph = gen_tree(3, 121, TreeVariant::H, 4, 0).unwrap();
    let mut config = TrainConfig {
        max_epochs: 600,
        patience: 150,
        dim: 8,
        lr: 0.3,
        dropout: 0.0,
        ..TrainConfig::default()
    };
    config.set("model", "shallow").unwrap();
    config.set("task", "lp").unwrap();
    config.set("manifold", "poincare").unwrap();
    config.init_scale = 0.001;
    config.set("lp_ratios", "0.70,0.15,0.15").unwrap();
    let split = Split::for_config(&config, &graph).unwrap();
    let out = train(&config, &graph, &split).unwrap();
    for h in out.history.iter().step_by(50) {
        println!("epoch {:4} loss {:.4} val {:.4}", h.epoch, h.total_loss, h.val_metric);
    }
    println!("best epoch {} best val {:.4}", out.best_epoch, out.best_val);
    let report = hyprel::trainer::evaluate(&config, &graph, &split, &out).unwrap();
    println!("metrics {:?}", report.metrics);
    println!("hdo {:?}", report.hdo_stats);

    // final-params embedding (not best checkpoint)
    let emb = hyprel::trainer::embed(&config, &graph, &split, out.params.clone()).unwrap();
    let d = |a: usize, b: usize| hyprel::manifold::dist(&emb.point(a), &emb.point(b)).unwrap();
    let (mut tp, mut vp, mut vn) = (0.0, 0.0, 0.0);
    if let Split::Link(ls) = &split {
        for &(u, v) in &ls.train_pos { tp += d(u, v); }
        tp /= ls.train_pos.len() as f64;
        for &(u, v) in &ls.val_pos { vp += d(u, v); }
        vp /= ls.val_pos.len() as f64;
        for &(u, v) in &ls.val_neg { vn += d(u, v); }
        vn /= ls.val_neg.len() as f64;
    }
    let mut norms: Vec<f64> = (0..emb.n()).map(|i| emb.coords.row(i).dot(&emb.coords.row(i)).sqrt()).collect();
    norms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!("mean d: train_pos {:.4} val_pos {:.4} val_neg {:.4}", tp, vp, vn);
    println!("norm median {:.4} max {:.4}", norms[norms.len()/2], norms[norms.len()-1]);

    // evaluate the loss by hand on the final embedding
    if let Split::Link(ls) = &split {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(999);
        let negs = hyprel::models::sample_negatives(&graph.adjacency(), &ls.train_pos, config.neg_samples, &mut rng);
        let geo = hyprel::diffgeo::DiffSpace::new(emb.space);
        let tape = hyprel::autodiff::Tape::new();
        let z = tape.leaf(emb.coords.clone());
        let l = hyprel::models::shallow_loss_diff(&geo, z, &ls.train_pos, &negs).unwrap();
        println!("hand loss on final embedding: {:.4}", l.scalar_value());
    }

}
