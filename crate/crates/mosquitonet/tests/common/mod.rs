#![allow(dead_code)]

use std::path::Path;

use mosquitonet::export::{rgb_png, save_checkpoint};
use mosquitonet::synthetic;
use mosquitonet_core::{ModelConfig, MosquitoNet, RngSeed};

pub fn tiny_config(side: usize) -> ModelConfig {
    ModelConfig {
        height: side,
        width: side,
        conv_channels: vec![4, 8],
        fc_sizes: vec![16],
        ..ModelConfig::default()
    }
}

pub fn tiny_model(seed: u64) -> MosquitoNet {
    MosquitoNet::build(tiny_config(24), RngSeed(seed)).unwrap()
}

/// A PNG cell image of the given side.
pub fn cell_png(index: usize, side: usize) -> Vec<u8> {
    let src = synthetic::cell_images(index + 1, side, RngSeed(99));
    rgb_png(&src.images[index]).unwrap()
}

pub fn saved_tiny(dir: &Path, seed: u64) -> (std::path::PathBuf, MosquitoNet, u32) {
    let m = tiny_model(seed);
    let path = dir.join("tiny.mqt");
    let id = save_checkpoint(&m, &path).unwrap();
    (path, m, id)
}
