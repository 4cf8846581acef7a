//! FID between model samples and corpus crops, with a corpus-vs-corpus floor.
//!
//! ```text
//! cargo run --release --example fid -- [checkpoint]
//! ```

mod common;

use texgen::corpus::grid_crops;
use texgen::features::RandomVgg;
use texgen::image_io::to_signed;
use texgen::metrics::{fid, FeatureStats};
use texgen::rng::RngStream;

fn main() {
    let gen = common::generator_from_args();
    let corpus = common::desk_corpus();
    let vgg = RandomVgg::default();

    let crops: Vec<_> = corpus.records.iter().flat_map(|r| grid_crops(r, corpus.crop_size, 9)).map(|c| to_signed(&c)).collect();
    let (even, odd): (Vec<_>, Vec<_>) = crops.iter().cloned().enumerate().partition(|(i, _)| i % 2 == 0);
    let strip = |v: Vec<(usize, _)>| v.into_iter().map(|(_, c)| c).collect::<Vec<_>>();
    let (even, odd) = (strip(even), strip(odd));

    let real = FeatureStats::from_images(&vgg, &crops).unwrap();
    let samples = gen.sample_images(&mut RngStream::new(31), crops.len(), gen.config().train_resolution).unwrap();
    let fake = FeatureStats::from_images(&vgg, &samples).unwrap();

    let floor = fid(&FeatureStats::from_images(&vgg, &even).unwrap(), &FeatureStats::from_images(&vgg, &odd).unwrap()).unwrap();
    println!("{} crops, {}-d embedding", crops.len(), real.dim());
    println!("FID(model, corpus)          {:.4}", fid(&fake, &real).unwrap());
    println!("FID(corpus half, other half) {floor:.4}");
}
