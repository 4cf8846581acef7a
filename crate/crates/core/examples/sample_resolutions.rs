//! Samples one latent at 1×, 2× and 4× the training resolution.
//!
//! ```text
//! cargo run --release --example sample_resolutions -- [checkpoint]
//! ```

mod common;

use texgen::generator::{sample_noise, LatentCode};
use texgen::image_io::{save_rgb, to_unit};
use texgen::rng::RngStream;

fn main() {
    let gen = common::generator_from_args();
    let dir = common::out_dir("sample_resolutions");
    let mut rng = RngStream::new(11);
    let z = LatentCode::sample(gen.config().latent_dim, &mut rng);
    let train_res = gen.config().train_resolution;
    for k in [1, 2, 4] {
        let res = k * train_res;
        // noise grids and TB maps are sized for the requested output
        let noise = sample_noise(gen.config(), &mut rng, res).unwrap();
        let img = gen.generate(&z, &noise, &gen.sample_phases(&mut rng), res).unwrap();
        let path = dir.join(format!("x{k}.png"));
        save_rgb(&path, &to_unit(&img)).unwrap();
        println!("{res}x{res} -> {}", path.display());
    }
    // not a multiple of the training resolution
    let err = gen.sample_images(&mut rng, 1, train_res + 8).unwrap_err();
    println!("{}px rejected: {err}", train_res + 8);
}
