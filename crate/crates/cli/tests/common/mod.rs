#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use initiative_cli::config::RunConfig;
use initiative_cli::pipeline;

pub const TINY: &str = r#"
seed = 1

[decoder]
embed_dim = 16
layers = 1
heads = 2
ff_dim = 32
max_seq_len = 96
dropout = 0.0

[encoder]
embed_dim = 16
layers = 1
heads = 2
ff_dim = 32
max_seq_len = 256
dropout = 0.0

[train.unified]
lr = 3e-3
max_epochs = 3

[train.classifier]
lr = 3e-3
max_epochs = 3

[train.discrete]
lr = 3e-3
max_epochs = 3

[train.bridge]
lr = 3e-3
max_epochs = 2

[decode.chitchat]
top_k = 5
top_p = 0.9
max_new_tokens = 12
seed = 0

[decode.taskoriented]
top_k = 10
top_p = 0.5
max_new_tokens = 12
seed = 0
"#;

pub fn tiny_config(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::from_toml(TINY).unwrap();
    cfg.out = out.to_path_buf();
    cfg
}

pub fn write_tiny_toml(dir: &Path) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, TINY).unwrap();
    p
}

/// Runs every stage once into a shared directory.
pub fn trained() -> &'static RunConfig {
    static DIR: OnceLock<(tempfile::TempDir, RunConfig)> = OnceLock::new();
    &DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        pipeline::gen_data(&cfg, 20).unwrap();
        pipeline::prepare(&cfg).unwrap();
        pipeline::train_unified_cmd(&cfg).unwrap();
        pipeline::train_classifier_cmd(&cfg).unwrap();
        pipeline::train_discrete_cmd(&cfg, false).unwrap();
        pipeline::train_discrete_cmd(&cfg, true).unwrap();
        pipeline::train_bridge_cmd(&cfg).unwrap();
        (dir, cfg)
    })
    .1
}
