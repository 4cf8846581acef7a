// Shared by the examples: a model to play with and a place to write files.
// Not every example uses every helper.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use texgen::checkpoint::load_checkpoint;
use texgen::config::RunConfig;
use texgen::corpus::{build_synthetic_corpus, Corpus};
use texgen::generator::Generator;
use texgen::training::{train_loop, Silent};

/// EMA generator from the checkpoint named by the first argument, or a
/// quickly trained desk model when none is given.
pub fn generator_from_args() -> Generator {
    match std::env::args().nth(1) {
        Some(p) => load_checkpoint(Path::new(&p)).expect("readable checkpoint").ema_generator().unwrap(),
        None => {
            eprintln!("no checkpoint given, training a desk model for 300 iterations");
            let cfg = RunConfig::desk(16, 300);
            let ck = train_loop(cfg.generator_config(), cfg.critic_config(), cfg.train_config(), &desk_corpus(), &mut Silent)
                .unwrap();
            ck.ema_generator().unwrap()
        }
    }
}

pub fn desk_corpus() -> Corpus {
    let cfg = RunConfig::desk(16, 0);
    build_synthetic_corpus(cfg.corpus_textures, cfg.train_resolution, cfg.corpus_image_size, cfg.seed).unwrap()
}

pub fn out_dir(name: &str) -> PathBuf {
    let dir = PathBuf::from("example-output").join(name);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
