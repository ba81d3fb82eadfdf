//! File formats: PNG rendering of images and heatmaps, checkpoint files.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder};
use mosquitonet_core::checkpoint;
use mosquitonet_core::xai::Heatmap;
use mosquitonet_core::{Error as CoreError, MosquitoNet, Tensor};

use crate::error::{Error, Result};

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn encode_png(bytes: &[u8], w: usize, h: usize, color: ExtendedColorType) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    PngEncoder::new(&mut out)
        .write_image(bytes, w as u32, h as u32, color)
        .map_err(|source| Error::Image {
            context: "png encoder".into(),
            source,
        })?;
    Ok(out)
}

/// PNG bytes of a `[3, H, W]` image in `[0, 1]`.
pub fn rgb_png(img: &Tensor) -> Result<Vec<u8>> {
    let &[3, h, w] = img.shape() else {
        return Err(CoreError::shape("rgb_png", img.shape(), &[3, 0, 0]).into());
    };
    let plane = h * w;
    let d = img.data();
    let mut px = Vec::with_capacity(3 * plane);
    for i in 0..plane {
        px.extend([to_u8(d[i]), to_u8(d[plane + i]), to_u8(d[2 * plane + i])]);
    }
    encode_png(&px, w, h, ExtendedColorType::Rgb8)
}

/// Grayscale PNG of a heatmap.
pub fn heatmap_png(heatmap: &Heatmap) -> Result<Vec<u8>> {
    let &[h, w] = heatmap.values.shape() else {
        return Err(CoreError::shape("heatmap_png", heatmap.values.shape(), &[0, 0]).into());
    };
    let px: Vec<u8> = heatmap.values.data().iter().map(|&v| to_u8(v)).collect();
    encode_png(&px, w, h, ExtendedColorType::L8)
}

/// Writes via a sibling temp file and rename, so `path` never holds a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// Saves a checkpoint and returns its model id.
pub fn save_checkpoint(model: &MosquitoNet, path: &Path) -> Result<u32> {
    let bytes = checkpoint::encode(model);
    write_atomic(path, &bytes)?;
    Ok(checkpoint::checksum(&bytes).expect("encoded checkpoint has a trailer"))
}

/// Loads a checkpoint, returning the model and its id (the stored checksum).
pub fn load_checkpoint(path: &Path) -> Result<(MosquitoNet, u32)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let model = checkpoint::decode(&bytes).map_err(|e| match e {
        CoreError::Checkpoint(msg) => CoreError::Checkpoint(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    Ok((model, checkpoint::checksum(&bytes).expect("decoded")))
}

pub fn model_id_hex(id: u32) -> String {
    format!("{id:08x}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use mosquitonet_core::{ModelConfig, RngSeed};

    #[test]
    fn png_round_trip_is_exact_on_255_grid() {
        let data: Vec<f32> = (0..3 * 4 * 5).map(|i| (i * 4) as f32 / 255.0).collect();
        let img = Tensor::new(&[3, 4, 5], data).unwrap();
        let bytes = rgb_png(&img).unwrap();
        let back = crate::dataset::decode_image(&bytes, 4, 5).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn checkpoint_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ModelConfig {
            height: 8,
            width: 8,
            conv_channels: vec![2],
            fc_sizes: vec![4],
            ..ModelConfig::default()
        };
        let m = MosquitoNet::build(cfg, RngSeed(1)).unwrap();
        let path = dir.path().join("m.mqt");
        let id = save_checkpoint(&m, &path).unwrap();
        let (back, id2) = load_checkpoint(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(id, id2);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);

        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 9);
        fs::write(&path, bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err().to_string();
        assert!(err.contains("m.mqt"), "{err}");
    }
}
