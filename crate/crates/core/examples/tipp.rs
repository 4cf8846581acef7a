//! σ-maps and TIPP curves for a model and for the corpus it learns from.
//!
//! ```text
//! cargo run --release --example tipp -- [checkpoint]
//! ```

mod common;

use texgen::generator::LatentCode;
use texgen::image_io::save_gray;
use texgen::metrics::{default_thresholds, stddev_map, tipp_for_dataset, tipp_for_model, write_tipp_csv, TippProtocol};
use texgen::rng::RngStream;

fn main() {
    let gen = common::generator_from_args();
    let dir = common::out_dir("tipp");
    let res = gen.config().train_resolution;
    let mut rng = RngStream::new(21);

    for i in 0..4 {
        let z = LatentCode::sample(gen.config().latent_dim, &mut rng);
        let m = stddev_map(&gen, &z, 20, &mut rng, res).unwrap();
        let vals: Vec<f32> = m.sigma.iter().map(|&s| s as f32).collect();
        // brighter = more variation across noise and phase resamples
        save_gray(&dir.join(format!("sigma{i}.png")), &vals, m.h, m.w, 0.25).unwrap();
    }

    let proto = TippProtocol { latent_codes: 64, samples_per_code: 20, repeats: 3, ..TippProtocol::default() };
    let summary = tipp_for_model(&gen, &proto, &mut rng, res).unwrap();
    write_tipp_csv(&dir.join("tipp.csv"), &summary).unwrap();
    let data = tipp_for_dataset(&common::desk_corpus(), &default_thresholds(), 9).unwrap();
    println!("{:>9} {:>16} {:>8}", "t*255", "model", "corpus");
    for ((t, m), d) in summary.thresholds.iter().zip(&summary.values).zip(&data.values) {
        println!("{:>9.1} {:>8.4} ± {:.4} {:>8.4}", t * 255.0, m.mean, m.ci95, d);
    }
}
