//! Recovers a style vector for a texture: Gram loss against the L2 baseline.
//!
//! ```text
//! cargo run --release --example invert -- [checkpoint]
//! ```
//! The target is one of the corpus textures, seen through random crops.

mod common;

use texgen::features::RandomVgg;
use texgen::image_io::{crop, grid, save_rgb, to_unit};
use texgen::inversion::{evaluate_style, invert, InversionConfig, InversionLoss, RandomCrops};
use texgen::rng::RngStream;

fn main() {
    let gen = common::generator_from_args();
    let corpus = common::desk_corpus();
    let dir = common::out_dir("invert");
    let vgg = RandomVgg::default();
    let res = gen.config().train_resolution;
    let target = corpus.records[3].image.clone();
    let crops = || RandomCrops::new(target.clone(), res).unwrap();

    let mut row = vec![crop(&target, 0, 0, res)];
    for kind in [InversionLoss::Gram, InversionLoss::L2] {
        let cfg = InversionConfig { loss_kind: kind, iterations: 1500, crops_per_eval: 2, ..InversionConfig::default() };
        let out = invert(&gen, &mut crops(), &vgg, &cfg, &mut RngStream::new(41)).unwrap();
        let eval_cfg = InversionConfig { crops_per_eval: 4, ..cfg.clone() };
        let score = evaluate_style(&gen, &out.w_star, &mut crops(), &vgg, InversionLoss::Gram, &eval_cfg, 8, &mut RngStream::new(42)).unwrap();
        println!(
            "{kind:>5}: loss {:.4e} -> {:.4e} (best {:.4e}); Gram metric of result {score:.4e}",
            out.loss_trace[0],
            out.final_loss,
            out.best_trace.last().unwrap()
        );
        let render = gen.render_styles(
            &gen.params().bind_frozen(),
            &autodiff::Var::constant(out.w_star.w.clone(), &[1, out.w_star.w.len()]),
            &mut RngStream::new(43),
            res,
        );
        row.push(to_unit(&render.unwrap()[0]));
    }
    save_rgb(&dir.join("target_gram_l2.png"), &grid(&row, 3).unwrap()).unwrap();
    println!("comparison strip in {}", dir.display());
}
