//! Builds the 16-texture synthetic desk corpus and writes it with its manifest.
//!
//! ```text
//! cargo run --release --example build_corpus
//! ```

mod common;

use texgen::corpus::sample_crops;
use texgen::image_io::{grid, save_rgb, to_unit};
use texgen::metrics::{default_thresholds, tipp_for_dataset};
use texgen::rng::RngStream;

fn main() {
    let corpus = common::desk_corpus();
    let dir = common::out_dir("corpus");
    let manifest = corpus.save(&dir).unwrap();
    for (r, e) in corpus.records.iter().zip(&manifest.textures) {
        let a = r.admission.as_ref().unwrap();
        println!("{:<22} period {:?}  crops {:>2}  luminance cv {:.3}", e.id, a.period, a.independent_crops, a.luminance_cv);
    }

    // one training batch: 4 textures, 2 crops each
    let batch = sample_crops(&corpus, 4, 2, &mut RngStream::new(0)).unwrap();
    let s = corpus.crop_size;
    let crops: Vec<_> = batch.data.data.chunks(3 * s * s).map(|c| to_unit(&texgen::params::Tensor::new(&[3, s, s], c.to_vec()))).collect();
    save_rgb(&dir.join("batch.png"), &grid(&crops, 2).unwrap()).unwrap();

    let tipp = tipp_for_dataset(&corpus, &default_thresholds(), 9).unwrap();
    println!("dataset TIPP {:?}", tipp.values);
    println!("wrote {} textures to {}", corpus.len(), dir.display());
}
