#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use tte::config::ConfigFile;
use tte::{pipeline, RunConfig, Threads};

/// A cohort and model small enough to run the whole pipeline in seconds.
pub const TINY: &str = "\
[synth]
patients = 300
seed = 3
[tasks]
num_tasks = 12
[model]
vocabulary_size = 128
inner_dim = 8
layers = 1
heads = 2
attention_window = 8
max_sequence_length = 64
survival_dim = 4
num_time_pieces = 4
[train]
epochs = 2
batch_size = 16
[adapt]
epochs = 1
[evaluate]
bootstrap_replicates = 20
";

pub fn config(text: &str, out: &Path, overrides: &[&str]) -> RunConfig {
    let mut file = ConfigFile::parse(text).unwrap();
    file.set(&format!("run.output_dir={}", out.display())).unwrap();
    for o in overrides {
        file.set(o).unwrap();
    }
    RunConfig::from_file(&file).unwrap()
}

pub fn tiny(out: &Path, overrides: &[&str]) -> RunConfig {
    config(TINY, out, overrides)
}

/// synth, select-tasks, pretrain, adapt (probe) and evaluate.
pub fn run_pipeline(cfg: &RunConfig, exec: &Threads) {
    pipeline::synth(cfg).unwrap();
    pipeline::select_tasks_stage(cfg).unwrap();
    pipeline::pretrain_stage(cfg, exec, false).unwrap();
    pipeline::adapt_stage(cfg, exec).unwrap();
    pipeline::evaluate_stage(cfg, exec).unwrap();
}

/// Every file under `dir` with its bytes, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}
