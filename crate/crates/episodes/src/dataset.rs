//! Dataset ingestion.
//!
//! A [`DatasetHandle`] is an immutable index of classes and image sources.
//! Loading validates every file up front by reading its PNG header
//! (signature, dimensions, color type) but leaves pixel decoding lazy, so
//! opening a large corpus is cheap. Synthetic datasets keep their images
//! in memory and share the same handle type, which lets every downstream
//! component run against either without caring.

use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use diffcore::Tensor;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{EpisodeError, Result};

/// Where one image's pixels come from.
#[derive(Debug, Clone)]
enum ImageSource {
    /// A PNG on disk, decoded on demand.
    File(PathBuf),
    /// An in-memory tensor (h,w,c) with values in [0,1].
    Memory(Arc<Tensor>),
}

#[derive(Debug, Clone)]
struct ClassEntry {
    name: String,
    sources: Vec<ImageSource>,
}

/// How to interpret a dataset directory.
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// CSV manifest with header `relative_path,class_name`; when present it
    /// defines the classes instead of the directory layout.
    pub manifest: Option<PathBuf>,
    /// Treat the tree as alphabet/character/*.png and make each character
    /// directory its own class (named `alphabet/character`).
    pub flatten_characters: bool,
    /// Resample every image to (height, width) at decode time (bilinear).
    pub resize: Option<(usize, usize)>,
}

/// An immutable, order-stable index over a dataset's classes and images.
#[derive(Clone)]
pub struct DatasetHandle {
    classes: Vec<ClassEntry>,
    /// Decoded image extents (height, width, channels).
    shape: (usize, usize, usize),
    resize: Option<(usize, usize)>,
}

impl fmt::Debug for DatasetHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DatasetHandle")
            .field("classes", &self.classes.len())
            .field("shape", &self.shape)
            .finish()
    }
}

// ── PNG header inspection ───────────────────────────────────────────────

/// Dimensions and channel family read from a PNG's IHDR chunk without
/// decoding any pixel data.
fn png_header(path: &Path) -> Result<(usize, usize, bool)> {
    let mut file = fs::File::open(path).map_err(|source| EpisodeError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut head = [0u8; 26];
    file.read_exact(&mut head).map_err(|_| EpisodeError::Decode {
        path: path.to_path_buf(),
        detail: "file shorter than a PNG header".into(),
    })?;
    const SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', b'\r', b'\n', 0x1a, b'\n'];
    if head[..8] != SIGNATURE {
        return Err(EpisodeError::Decode {
            path: path.to_path_buf(),
            detail: "missing PNG signature".into(),
        });
    }
    if &head[12..16] != b"IHDR" {
        return Err(EpisodeError::Decode {
            path: path.to_path_buf(),
            detail: "first chunk is not IHDR".into(),
        });
    }
    let width = u32::from_be_bytes([head[16], head[17], head[18], head[19]]) as usize;
    let height = u32::from_be_bytes([head[20], head[21], head[22], head[23]]) as usize;
    if width == 0 || height == 0 {
        return Err(EpisodeError::Decode {
            path: path.to_path_buf(),
            detail: "zero image extent".into(),
        });
    }
    // Color types: 0 gray, 2 rgb, 3 palette, 4 gray+alpha, 6 rgba.
    let grayscale = match head[25] {
        0 | 4 => true,
        2 | 3 | 6 => false,
        other => {
            return Err(EpisodeError::Decode {
                path: path.to_path_buf(),
                detail: format!("unknown PNG color type {other}"),
            })
        }
    };
    Ok((height, width, grayscale))
}

// ── directory / manifest scanning ───────────────────────────────────────

fn sorted_subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let entries = fs::read_dir(dir).map_err(|source| EpisodeError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for entry in entries {
        let entry = entry.map_err(|source| EpisodeError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        if entry.path().is_dir() {
            out.push(entry.path());
        }
    }
    out.sort();
    Ok(out)
}

fn sorted_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let entries = fs::read_dir(dir).map_err(|source| EpisodeError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for entry in entries {
        let entry = entry.map_err(|source| EpisodeError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        let is_png = path
            .extension()
            .map(|e| e.eq_ignore_ascii_case("png"))
            .unwrap_or(false);
        if path.is_file() && is_png {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn dir_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Classes from the directory layout (one subdirectory per class, or
/// alphabet/character two-level when flattening).
fn scan_directories(root: &Path, flatten: bool) -> Result<Vec<(String, Vec<PathBuf>)>> {
    let mut classes = Vec::new();
    if flatten {
        for alphabet in sorted_subdirs(root)? {
            for character in sorted_subdirs(&alphabet)? {
                let name = format!("{}/{}", dir_name(&alphabet), dir_name(&character));
                classes.push((name, sorted_pngs(&character)?));
            }
        }
    } else {
        for class_dir in sorted_subdirs(root)? {
            classes.push((dir_name(&class_dir), sorted_pngs(&class_dir)?));
        }
    }
    if classes.is_empty() {
        return Err(EpisodeError::Layout(format!(
            "no class directories found under {}",
            root.display()
        )));
    }
    Ok(classes)
}

/// Classes from a `relative_path,class_name` CSV manifest.
fn scan_manifest(root: &Path, manifest: &Path) -> Result<Vec<(String, Vec<PathBuf>)>> {
    let mut reader = csv::Reader::from_path(manifest).map_err(|e| {
        EpisodeError::Manifest(format!("cannot read {}: {e}", manifest.display()))
    })?;
    let headers = reader
        .headers()
        .map_err(|e| EpisodeError::Manifest(format!("bad header: {e}")))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| EpisodeError::Manifest(format!("missing column `{name}`")))
    };
    let path_col = col("relative_path")?;
    let class_col = col("class_name")?;

    let mut classes: Vec<(String, Vec<PathBuf>)> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| EpisodeError::Manifest(format!("row {}: {e}", line + 2)))?;
        let rel = record.get(path_col).unwrap_or_default();
        let class = record.get(class_col).unwrap_or_default();
        if rel.is_empty() || class.is_empty() {
            return Err(EpisodeError::Manifest(format!("row {}: empty field", line + 2)));
        }
        let full = root.join(rel);
        if !full.is_file() {
            return Err(EpisodeError::Manifest(format!(
                "row {}: listed file {} does not exist on disk",
                line + 2,
                full.display()
            )));
        }
        match classes.iter_mut().find(|(name, _)| name == class) {
            Some((_, files)) => files.push(full),
            None => classes.push((class.to_string(), vec![full])),
        }
    }
    if classes.is_empty() {
        return Err(EpisodeError::Manifest("manifest lists no images".into()));
    }
    classes.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(classes)
}

// ── loading ─────────────────────────────────────────────────────────────

/// Indexes a dataset directory. Every file's PNG header is validated and
/// the image geometry fixed here; pixels stay on disk until sampled.
pub fn load_dataset(root: impl AsRef<Path>, options: &LoadOptions) -> Result<DatasetHandle> {
    let root = root.as_ref();
    let classes = match &options.manifest {
        Some(manifest) => scan_manifest(root, manifest)?,
        None => scan_directories(root, options.flatten_characters)?,
    };

    let mut extent: Option<(usize, usize)> = None;
    let mut all_gray = true;
    let mut entries = Vec::with_capacity(classes.len());
    for (name, files) in classes {
        if files.is_empty() {
            return Err(EpisodeError::EmptyClass(name));
        }
        for file in &files {
            let (h, w, gray) = png_header(file)?;
            all_gray &= gray;
            if options.resize.is_none() {
                match extent {
                    None => extent = Some((h, w)),
                    Some(e) if e != (h, w) => {
                        return Err(EpisodeError::Layout(format!(
                            "image {} is {}x{} but the dataset started at {}x{}; \
                             supply a resize target to mix sizes",
                            file.display(),
                            h,
                            w,
                            e.0,
                            e.1
                        )))
                    }
                    Some(_) => {}
                }
            }
        }
        entries.push(ClassEntry {
            name,
            sources: files.into_iter().map(ImageSource::File).collect(),
        });
    }

    let (h, w) = options
        .resize
        .or(extent)
        .expect("nonempty classes imply at least one image");
    let channels = if all_gray { 1 } else { 3 };
    Ok(DatasetHandle {
        classes: entries,
        shape: (h, w, channels),
        resize: options.resize,
    })
}

fn decode_file(path: &Path, channels: usize, resize: Option<(usize, usize)>) -> Result<Tensor> {
    let img = image::open(path).map_err(|e| EpisodeError::Decode {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let img = match resize {
        Some((h, w)) => {
            img.resize_exact(w as u32, h as u32, image::imageops::FilterType::Triangle)
        }
        None => img,
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match channels {
        1 => img.to_luma8().into_raw().iter().map(|&v| v as f64 / 255.0).collect(),
        _ => img.to_rgb8().into_raw().iter().map(|&v| v as f64 / 255.0).collect(),
    };
    Ok(Tensor::new(&[h, w, channels], data)?)
}

impl DatasetHandle {
    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn class_name(&self, class: usize) -> &str {
        &self.classes[class].name
    }

    /// Number of images in one class.
    pub fn class_len(&self, class: usize) -> usize {
        self.classes[class].sources.len()
    }

    /// Smallest class size across the dataset.
    pub fn min_class_len(&self) -> usize {
        self.classes.iter().map(|c| c.sources.len()).min().unwrap_or(0)
    }

    /// Decoded image extents (height, width, channels).
    pub fn image_shape(&self) -> (usize, usize, usize) {
        self.shape
    }

    /// Decodes (or fetches) one image as an (h,w,c) tensor in [0,1].
    pub fn image(&self, class: usize, index: usize) -> Result<Tensor> {
        match &self.classes[class].sources[index] {
            ImageSource::File(path) => decode_file(path, self.shape.2, self.resize),
            ImageSource::Memory(t) => Ok(t.as_ref().clone()),
        }
    }
}

// ── synthetic data ──────────────────────────────────────────────────────

/// Geometry and noise model for generated class prototypes.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Standard deviation of the per-pixel Gaussian noise added to the
    /// class prototype for each image.
    pub noise: f64,
    /// Edge length of the coarse random grid that is bilinearly upsampled
    /// into the prototype pattern; smaller values give smoother, blobbier
    /// class structure.
    pub prototype_cells: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            height: 28,
            width: 28,
            channels: 1,
            noise: 0.1,
            prototype_cells: 4,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(EpisodeError::BadSynthetic(format!(
                "image extents must be positive, got {}x{}x{}",
                self.height, self.width, self.channels
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(EpisodeError::BadSynthetic(format!(
                "noise must be a finite non-negative number, got {}",
                self.noise
            )));
        }
        if self.prototype_cells == 0 {
            return Err(EpisodeError::BadSynthetic("prototype grid needs at least one cell".into()));
        }
        Ok(())
    }
}

/// Bilinearly upsamples a (cells, cells, c) grid to (h, w, c) using
/// cell-center alignment.
fn upsample_grid(grid: &[f64], cells: usize, c: usize, h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w * c];
    for y in 0..h {
        for x in 0..w {
            // Map the pixel center into grid coordinates.
            let gy = ((y as f64 + 0.5) / h as f64) * cells as f64 - 0.5;
            let gx = ((x as f64 + 0.5) / w as f64) * cells as f64 - 0.5;
            let y0 = gy.floor().clamp(0.0, (cells - 1) as f64) as usize;
            let x0 = gx.floor().clamp(0.0, (cells - 1) as f64) as usize;
            let y1 = (y0 + 1).min(cells - 1);
            let x1 = (x0 + 1).min(cells - 1);
            let fy = (gy - y0 as f64).clamp(0.0, 1.0);
            let fx = (gx - x0 as f64).clamp(0.0, 1.0);
            for ch in 0..c {
                let g = |yy: usize, xx: usize| grid[(yy * cells + xx) * c + ch];
                let top = g(y0, x0) * (1.0 - fx) + g(y0, x1) * fx;
                let bottom = g(y1, x0) * (1.0 - fx) + g(y1, x1) * fx;
                out[(y * w + x) * c + ch] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    out
}

/// Builds a fully in-memory dataset of noisy class prototypes. Prototypes
/// are smooth random patterns, pairwise distinct by construction; each
/// image is its class prototype plus Gaussian noise, clipped to [0,1].
pub fn generate_synthetic(
    spec: &SyntheticSpec,
    class_count: usize,
    images_per_class: usize,
    seed: u64,
) -> Result<DatasetHandle> {
    spec.validate()?;
    if class_count < 2 {
        return Err(EpisodeError::BadSynthetic(format!(
            "need at least 2 classes, got {class_count}"
        )));
    }
    if images_per_class == 0 {
        return Err(EpisodeError::BadSynthetic("need at least one image per class".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spec.noise.max(f64::MIN_POSITIVE)).expect("validated spec");
    let (h, w, c) = (spec.height, spec.width, spec.channels);
    let cells = spec.prototype_cells;

    let mut prototypes: Vec<Vec<f64>> = Vec::with_capacity(class_count);
    for _ in 0..class_count {
        // Coarse values stay inside [0.15, 0.85] so the added noise rarely
        // clips and class contrasts stay strong.
        let grid: Vec<f64> = (0..cells * cells * c).map(|_| rng.random_range(0.15..0.85)).collect();
        prototypes.push(upsample_grid(&grid, cells, c, h, w));
    }
    for i in 0..class_count {
        for j in (i + 1)..class_count {
            if prototypes[i] == prototypes[j] {
                return Err(EpisodeError::BadSynthetic(format!(
                    "prototypes {i} and {j} collided; use more cells or another seed"
                )));
            }
        }
    }

    let width = class_count.to_string().len();
    let mut classes = Vec::with_capacity(class_count);
    for (k, proto) in prototypes.iter().enumerate() {
        let mut sources = Vec::with_capacity(images_per_class);
        for _ in 0..images_per_class {
            let data: Vec<f64> = if spec.noise == 0.0 {
                proto.clone()
            } else {
                proto.iter().map(|&p| (p + noise.sample(&mut rng)).clamp(0.0, 1.0)).collect()
            };
            sources.push(ImageSource::Memory(Arc::new(Tensor::new(&[h, w, c], data)?)));
        }
        classes.push(ClassEntry {
            name: format!("class_{k:0width$}"),
            sources,
        });
    }
    Ok(DatasetHandle {
        classes,
        shape: (h, w, c),
        resize: None,
    })
}
