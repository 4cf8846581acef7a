//! Walks between two latent codes in Z and in W.
//!
//! ```text
//! cargo run --release --example interpolate -- [checkpoint]
//! ```

mod common;

use texgen::generator::LatentCode;
use texgen::image_io::{grid, save_rgb, to_unit};
use texgen::inversion::{interpolate_latent, LatentSpace};
use texgen::rng::RngStream;

fn main() {
    let gen = common::generator_from_args();
    let dir = common::out_dir("interpolate");
    let d = gen.config().latent_dim;
    let za = LatentCode::sample(d, &mut RngStream::new(1));
    let zb = LatentCode::sample(d, &mut RngStream::new(2));
    let res = 2 * gen.config().train_resolution;
    let steps = 8;
    for (space, name) in [(LatentSpace::Z, "z"), (LatentSpace::W, "w")] {
        let frames = interpolate_latent(&gen, &za, &zb, steps, space, &mut RngStream::new(5), res).unwrap();
        let unit: Vec<_> = frames.iter().map(to_unit).collect();
        let path = dir.join(format!("strip_{name}.png"));
        save_rgb(&path, &grid(&unit, steps).unwrap()).unwrap();
        println!("{steps} frames through {name} -> {}", path.display());
    }
}
