//! Cell-image datasets on disk: `<root>/Parasitized/*`, `<root>/Uninfected/*`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::ImageFormat;
use mosquitonet_core::data::SampleSource;
use mosquitonet_core::imageops::resize_bilinear;
use mosquitonet_core::{ClassLabel, Tensor};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleManifest {
    pub root: PathBuf,
    /// Sorted by path.
    pub entries: Vec<(PathBuf, ClassLabel)>,
    /// Files that were not recognizable images.
    pub skipped: Vec<PathBuf>,
}

impl SampleManifest {
    /// Per-class counts indexed by class index.
    pub fn counts(&self) -> [usize; 2] {
        let mut c = [0; 2];
        for (_, l) in &self.entries {
            c[l.index()] += 1;
        }
        c
    }

    pub fn labels(&self) -> Vec<ClassLabel> {
        self.entries.iter().map(|(_, l)| *l).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `label<TAB>path` per line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (p, l) in &self.entries {
            let _ = writeln!(out, "{l}\t{}", p.display());
        }
        out
    }

    pub fn from_tsv(root: impl Into<PathBuf>, text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (label, path) = line.split_once('\t').ok_or_else(|| {
                Error::Dataset(format!("manifest line {}: expected label<TAB>path", n + 1))
            })?;
            let label = ClassLabel::parse(label).ok_or_else(|| {
                Error::Dataset(format!("manifest line {}: unknown label {label:?}", n + 1))
            })?;
            entries.push((PathBuf::from(path), label));
        }
        Ok(SampleManifest {
            root: root.into(),
            entries,
            skipped: Vec::new(),
        })
    }
}

fn class_dir(name: &str) -> Option<ClassLabel> {
    match name.to_ascii_lowercase().as_str() {
        "parasitized" => Some(ClassLabel::Parasitized),
        "uninfected" => Some(ClassLabel::Uninfected),
        _ => None,
    }
}

/// Recognizes PNG/JPEG (and the other formats the decoder knows) by signature.
fn looks_like_image(path: &Path) -> bool {
    let mut head = [0u8; 16];
    let Ok(mut f) = fs::File::open(path) else {
        return false;
    };
    let n = std::io::Read::read(&mut f, &mut head).unwrap_or(0);
    matches!(
        image::guess_format(&head[..n]),
        Ok(ImageFormat::Png | ImageFormat::Jpeg)
    )
}

/// Enumerates both class directories (matched case-insensitively). Files
/// without a PNG or JPEG signature are skipped and listed in `skipped`.
pub fn scan_dataset(root: impl AsRef<Path>) -> Result<SampleManifest> {
    let root = root.as_ref();
    let listing = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut dirs: [Option<PathBuf>; 2] = [None, None];
    let mut found = Vec::new();
    for entry in listing {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if entry.path().is_dir() {
            if let Some(l) = class_dir(&name) {
                dirs[l.index()] = Some(entry.path());
            }
            found.push(name);
        }
    }
    found.sort();
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for label in ClassLabel::ALL {
        let Some(dir) = &dirs[label.index()] else {
            return Err(Error::Dataset(format!(
                "{}: no {} directory (found: [{}])",
                root.display(),
                label.as_str(),
                found.join(", ")
            )));
        };
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        let before = entries.len();
        for f in files {
            if looks_like_image(&f) {
                entries.push((f, label));
            } else {
                skipped.push(f);
            }
        }
        if entries.len() == before {
            return Err(Error::Dataset(format!(
                "{}: class directory contains no images",
                dir.display()
            )));
        }
    }
    entries.sort();
    if !skipped.is_empty() {
        log::warn!(
            "skipped {} non-image files under {}",
            skipped.len(),
            root.display()
        );
    }
    Ok(SampleManifest {
        root: root.to_path_buf(),
        entries,
        skipped,
    })
}

/// Decodes PNG/JPEG bytes to RGB, scales to `[0, 1]` and resizes bilinearly to `height × width`.
pub fn decode_image(bytes: &[u8], height: usize, width: usize) -> Result<Tensor> {
    let img = image::load_from_memory(bytes).map_err(|source| Error::Image {
        context: "request body".into(),
        source,
    })?;
    Ok(rgb_to_tensor(&img.to_rgb8(), height, width)?)
}

pub fn rgb_to_tensor(
    img: &image::RgbImage,
    height: usize,
    width: usize,
) -> mosquitonet_core::Result<Tensor> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.as_raw();
    let mut data = vec![0.0f32; 3 * h * w];
    for (i, px) in raw.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * h * w + i] = px[c] as f32 / 255.0;
        }
    }
    resize_bilinear(&Tensor::new(&[3, h, w], data)?, height, width)
}

pub fn load_and_preprocess(path: impl AsRef<Path>, height: usize, width: usize) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes, height, width).map_err(|e| match e {
        Error::Image { source, .. } => Error::Image {
            context: path.display().to_string(),
            source,
        },
        other => other,
    })
}

/// Decodes manifest entries on demand.
#[derive(Debug, Clone)]
pub struct ManifestSource {
    pub manifest: SampleManifest,
    pub height: usize,
    pub width: usize,
}

impl SampleSource for ManifestSource {
    fn len(&self) -> usize {
        self.manifest.entries.len()
    }

    fn label(&self, index: usize) -> ClassLabel {
        self.manifest.entries[index].1
    }

    fn load(&self, index: usize) -> mosquitonet_core::Result<Tensor> {
        let path = &self.manifest.entries[index].0;
        load_and_preprocess(path, self.height, self.width)
            .map_err(|e| mosquitonet_core::Error::Source(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn png(path: &Path, rgb: [u8; 3], w: u32, h: u32) {
        image::RgbImage::from_pixel(w, h, image::Rgb(rgb))
            .save(path)
            .unwrap();
    }

    #[test]
    fn scan_two_per_class_with_junk() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("parasitized");
        let u = dir.path().join("Uninfected");
        fs::create_dir_all(&p).unwrap();
        fs::create_dir_all(&u).unwrap();
        for (d, n) in [(&p, "a.png"), (&p, "b.png"), (&u, "c.png"), (&u, "d.png")] {
            png(&d.join(n), [10, 20, 30], 5, 4);
        }
        fs::write(u.join("Thumbs.db"), b"junk").unwrap();
        let m = scan_dataset(dir.path()).unwrap();
        assert_eq!(m.len(), 4);
        assert_eq!(m.counts(), [2, 2]);
        assert_eq!(m.skipped.len(), 1);
        let back = SampleManifest::from_tsv(dir.path(), &m.to_tsv()).unwrap();
        assert_eq!(back.entries, m.entries);
    }

    #[test]
    fn missing_or_empty_class_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("Uninfected")).unwrap();
        fs::create_dir_all(dir.path().join("other")).unwrap();
        png(&dir.path().join("Uninfected/x.png"), [0, 0, 0], 2, 2);
        let err = scan_dataset(dir.path()).unwrap_err().to_string();
        assert!(
            err.contains("parasitized") && err.contains("other"),
            "{err}"
        );
        fs::create_dir_all(dir.path().join("Parasitized")).unwrap();
        assert!(scan_dataset(dir.path()).is_err());
    }

    #[test]
    fn gray_image_any_size() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("g.png");
        png(&f, [128, 128, 128], 37, 91);
        let t = load_and_preprocess(&f, 120, 120).unwrap();
        assert_eq!(t.shape(), &[3, 120, 120]);
        assert!(t.data().iter().all(|&v| (v - 128.0 / 255.0).abs() < 1e-3));
    }

    #[test]
    fn native_size_is_exact() {
        let img = image::RgbImage::from_fn(120, 120, |x, y| {
            image::Rgb([x as u8, y as u8, (x ^ y) as u8])
        });
        let t = rgb_to_tensor(&img, 120, 120).unwrap();
        assert_eq!(t.data()[121], 1.0 / 255.0);
        assert_eq!(t.data()[120 * 120 + 120 * 5 + 7], 5.0 / 255.0);
        assert_eq!(
            t.data()[2 * 120 * 120 + 120 * 5 + 7],
            (5u8 ^ 7) as f32 / 255.0
        );
    }

    #[test]
    fn garbage_is_rejected_with_path() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("bad.png");
        fs::write(&f, b"hello").unwrap();
        let err = load_and_preprocess(&f, 8, 8).unwrap_err().to_string();
        assert!(err.contains("bad.png"), "{err}");
        assert!(decode_image(b"hello", 8, 8).is_err());
    }
}
