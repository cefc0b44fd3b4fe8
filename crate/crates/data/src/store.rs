//! Datasets on disk: one directory per sample with PNG frames and a
//! `key = value` meta file, plus a JSON manifest at the root.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rc3d_core::models::parse_key_values;
use rc3d_core::Tensor;

use crate::clip::{segment_three_frames, Clip, Preprocess};
use crate::error::{DataError, Result};
use crate::scene::{generate_sample, GestureVideo, SceneSpec, ShapeKind, Trajectory, CLASS_COUNT};
use crate::split::{split_dataset, DatasetManifest, GenConfig, SampleEntry, Split};

pub const MANIFEST_FILE: &str = "manifest.json";

fn quantise(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a `[1,H,W]` or `[3,H,W]` image as 8-bit grayscale or RGB.
pub fn write_png(path: impl AsRef<Path>, img: &Tensor<f32>) -> Result<()> {
    let &[c, h, w] = img.shape() else {
        return Err(DataError::Invalid(format!("expected a [C,H,W] image, got {:?}", img.shape())));
    };
    let colour = match c {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        _ => return Err(DataError::Invalid(format!("cannot write {c}-channel image as PNG"))),
    };
    let d = img.data();
    let n = h * w;
    let bytes: Vec<u8> = (0..n).flat_map(|i| (0..c).map(move |ch| quantise(d[ch * n + i]))).collect();
    let mut enc = png::Encoder::new(BufWriter::new(File::create(path)?), w as u32, h as u32);
    enc.set_color(colour);
    enc.set_depth(png::BitDepth::Eight);
    enc.write_header()?.write_image_data(&bytes)?;
    Ok(())
}

/// Reads an 8-bit grayscale or RGB PNG into `[C,H,W]` in `[0, 1]`.
pub fn read_png(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let decoder = png::Decoder::new(std::io::BufReader::new(File::open(path)?));
    let mut reader = decoder.read_info()?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| DataError::Png("image too large".into()))?];
    let info = reader.next_frame(&mut buf)?;
    let c = match (info.color_type, info.bit_depth) {
        (png::ColorType::Grayscale, png::BitDepth::Eight) => 1,
        (png::ColorType::Rgb, png::BitDepth::Eight) => 3,
        other => return Err(DataError::Png(format!("{}: unsupported PNG layout {other:?}", path.display()))),
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let n = w * h;
    let bytes = &buf[..info.buffer_size()];
    let data = (0..c * n).map(|k| bytes[(k % n) * c + k / n] as f32 / 255.0).collect();
    Ok(Tensor::new(&[c, h, w], data)?)
}

fn frame(t: &Tensor<f32>, i: usize) -> Tensor<f32> {
    let s = t.shape();
    let per: usize = s[1..].iter().product();
    Tensor::new(&s[1..], t.data()[i * per..(i + 1) * per].to_vec()).expect("frame shape")
}

fn meta_text(v: &GestureVideo) -> String {
    let s = &v.spec;
    let shape = match s.shape {
        ShapeKind::Disc => "disc",
        ShapeKind::Rectangle => "rectangle",
    };
    format!(
        "label = {}\nseed = {}\nframes = {}\nextent = {}\nshape = {shape}\ntrajectory = {}\nsize = {}\nbase_depth = {}\nshape_depth = {}\ntravel = {}\nnoise = {}\n",
        v.label,
        v.seed,
        s.frames,
        s.extent,
        s.trajectory.id(),
        s.size,
        s.base_depth,
        s.shape_depth,
        s.travel,
        s.noise
    )
}

fn parse_meta(text: &str) -> Result<(usize, u64, SceneSpec)> {
    let m = parse_key_values(text)?;
    let get = |k: &str| m.get(k).ok_or_else(|| DataError::Format(format!("meta lacks {k:?}")));
    fn num<V: std::str::FromStr>(k: &str, v: &str) -> Result<V> {
        v.parse().map_err(|_| DataError::Format(format!("meta {k}: cannot parse {v:?}")))
    }
    let shape = match get("shape")?.as_str() {
        "disc" => ShapeKind::Disc,
        "rectangle" => ShapeKind::Rectangle,
        other => return Err(DataError::Format(format!("meta shape {other:?}"))),
    };
    let spec = SceneSpec {
        extent: num("extent", get("extent")?)?,
        frames: num("frames", get("frames")?)?,
        shape,
        trajectory: Trajectory::new(num("trajectory", get("trajectory")?)?)?,
        size: num("size", get("size")?)?,
        base_depth: num("base_depth", get("base_depth")?)?,
        shape_depth: num("shape_depth", get("shape_depth")?)?,
        travel: num("travel", get("travel")?)?,
        noise: num("noise", get("noise")?)?,
    };
    Ok((num("label", get("label")?)?, num("seed", get("seed")?)?, spec))
}

pub fn save_sample(dir: impl AsRef<Path>, v: &GestureVideo) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for t in 0..v.frames() {
        write_png(dir.join(format!("rgb_{t:03}.png")), &frame(&v.rgb, t))?;
        write_png(dir.join(format!("depth_{t:03}.png")), &frame(&v.depth, t))?;
    }
    fs::write(dir.join("meta.txt"), meta_text(v))?;
    Ok(())
}

/// Reads a sample back; pixel values carry the 8-bit quantisation.
pub fn load_sample(dir: impl AsRef<Path>) -> Result<GestureVideo> {
    let dir = dir.as_ref();
    let (label, seed, spec) = parse_meta(&fs::read_to_string(dir.join("meta.txt"))?)?;
    let read = |kind: &str, c: usize| -> Result<Tensor<f32>> {
        let mut data = Vec::new();
        for t in 0..spec.frames {
            let img = read_png(dir.join(format!("{kind}_{t:03}.png")))?;
            if img.shape() != [c, spec.extent, spec.extent] {
                return Err(DataError::Format(format!("{}: {kind} frame {t} has shape {:?}", dir.display(), img.shape())));
            }
            data.extend_from_slice(img.data());
        }
        Ok(Tensor::new(&[spec.frames, c, spec.extent, spec.extent], data)?)
    };
    Ok(GestureVideo {
        rgb: read("rgb", 3)?,
        depth: read("depth", 1)?,
        label,
        seed,
        spec,
    })
}

/// Scene of sample `index`, a pure function of the base seed and index.
pub fn sample_video(cfg: &GenConfig, index: usize) -> Result<GestureVideo> {
    let seed = cfg.seed ^ index as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let spec = SceneSpec::sample(index % CLASS_COUNT, cfg.extent, cfg.noise, &mut rng)?;
    generate_sample(&spec, seed)
}

/// Generates `per_class` videos of every class under `root`, splits them and
/// writes the manifest. Samples are independent, so they render in parallel.
pub fn generate_dataset(root: impl AsRef<Path>, cfg: &GenConfig) -> Result<DatasetManifest> {
    let root = root.as_ref();
    if cfg.per_class == 0 {
        return Err(DataError::Invalid("per_class must be at least 1".into()));
    }
    let total = cfg.per_class * CLASS_COUNT;
    let entries = (0..total)
        .into_par_iter()
        .map(|i| {
            let v = sample_video(cfg, i)?;
            let path = format!("samples/s{i:05}");
            save_sample(root.join(&path), &v)?;
            Ok(SampleEntry {
                path,
                label: v.label,
                split: Split::Train,
                seed: v.seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut manifest = split_dataset(entries, cfg.valid_fraction, cfg.seed)?;
    manifest.generator = Some(cfg.clone());
    fs::write(root.join(MANIFEST_FILE), manifest.to_json()?)?;
    Ok(manifest)
}

/// A dataset directory with its manifest.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    /// Opens `root` and checks that every sample directory exists.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| DataError::Format(format!("{}: {e}", path.display())))?;
        let manifest = DatasetManifest::from_json(&text)?;
        if let Some(s) = manifest.samples.iter().find(|s| !root.join(&s.path).join("meta.txt").is_file()) {
            return Err(DataError::Format(format!("manifest references missing sample {}", s.path)));
        }
        Ok(Self { root, manifest })
    }

    /// Segmented, preprocessed clips of one split, in manifest order.
    pub fn clips(&self, split: Split, prep: &Preprocess) -> Result<Vec<Clip>> {
        let entries: Vec<&SampleEntry> = self.manifest.split(split).collect();
        entries
            .par_iter()
            .map(|s| {
                let v = load_sample(self.root.join(&s.path))?;
                if v.label != s.label {
                    return Err(DataError::Format(format!("{}: meta label {} disagrees with manifest {}", s.path, v.label, s.label)));
                }
                segment_three_frames(&v)?.preprocess(prep)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_roundtrip_quantises() {
        let dir = tempfile::tempdir().unwrap();
        let img = Tensor::from_fn(&[3, 4, 5], |i| (i % 7) as f32 / 6.0).unwrap();
        write_png(dir.path().join("a.png"), &img).unwrap();
        let back = read_png(dir.path().join("a.png")).unwrap();
        assert_eq!(back.shape(), img.shape());
        assert!(back.max_abs_diff(&img) <= 0.5 / 255.0 + 1e-6);
        let gray = Tensor::from_fn(&[1, 3, 2], |i| i as f32 / 5.0).unwrap();
        write_png(dir.path().join("g.png"), &gray).unwrap();
        assert!(read_png(dir.path().join("g.png")).unwrap().max_abs_diff(&gray) <= 0.5 / 255.0 + 1e-6);
    }

    #[test]
    fn sample_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = GenConfig { extent: 24, ..GenConfig::new(1, 5) };
        let v = sample_video(&cfg, 3).unwrap();
        save_sample(dir.path(), &v).unwrap();
        let back = load_sample(dir.path()).unwrap();
        assert_eq!((back.label, back.seed), (v.label, v.seed));
        assert_eq!(back.spec, v.spec);
        assert!(back.rgb.max_abs_diff(&v.rgb) <= 0.5 / 255.0 + 1e-6);
    }
}
