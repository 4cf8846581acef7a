//! Trains the desk-scale model, logging losses, sample grids and checkpoints.
//!
//! ```text
//! cargo run --release --example train_desk -- [iterations] [multi_scale|bottom_only|none]
//! ```
//! Around a third of a second per iteration on one core.

mod common;

use texgen::config::RunConfig;
use texgen::generator::TbMode;
use texgen::training::{run, RunWriter, TrainingState};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let iterations = args.first().map(|s| s.parse().expect("iteration count")).unwrap_or(2000);
    let tb_mode = match args.get(1).map(String::as_str) {
        None | Some("multi_scale") => TbMode::MultiScale,
        Some("bottom_only") => TbMode::BottomOnly,
        Some("none") => TbMode::None,
        Some(other) => panic!("unknown tb mode {other}"),
    };
    let cfg = RunConfig { tb_mode, ..RunConfig::desk(16, iterations) };
    let dir = common::out_dir("train_desk");
    cfg.write_snapshot(&dir).unwrap();

    let corpus = common::desk_corpus();
    let mut state = TrainingState::new(cfg.generator_config(), cfg.critic_config(), cfg.train_config()).unwrap();
    let mut writer = RunWriter::create(&dir, 500, 250, cfg.seed).unwrap();
    writer.log_every = 50;
    let ck = run(&mut state, &corpus, &mut writer).unwrap();
    println!("trained {} iterations; final checkpoint and losses.csv in {}", ck.iteration, dir.display());
}
