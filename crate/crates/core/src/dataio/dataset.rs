//! Synthetic paired datasets and the on-disk paired-directory layout.
//!
//! A split directory holds `measurements/NAME.pgm` and `objects/NAME.pgm`
//! with matching names. Synthetic objects and measurements are quantized to
//! 16-bit levels (measurements are also clipped to the sensor range `[0, 1]`)
//! before being stored, so the files reproduce the in-memory pairs exactly.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::phantom::random_phantom;
use super::pnm::{quantize, read_image, write_image, BitDepth};
use crate::error::{Error, Result};
use crate::lensnet::Pair;
use crate::optics::{
    generate_mask, mask_to_psf, simulate_measurement, CodedMask, MaskPattern, NoiseModel, PointSpreadFunction,
};
use crate::tensor::Tensor;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATASET_FORMAT_VERSION: u32 = 1;

/// Coded mask occupying the top-left `support × support` window of the
/// sensor plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskSpec {
    pub pattern: MaskPattern,
    pub density: f64,
    pub support: usize,
    pub seed: u64,
}

impl Default for MaskSpec {
    fn default() -> Self {
        Self { pattern: MaskPattern::Random, density: 0.25, support: 8, seed: 1 }
    }
}

impl MaskSpec {
    pub fn build_psf(&self, extents: [usize; 2]) -> Result<PointSpreadFunction> {
        let [h, w] = extents;
        if self.support < 2 || self.support > h.min(w) {
            return Err(Error::config(format!("mask support {} must lie in [2, {}]", self.support, h.min(w))));
        }
        let small = generate_mask(self.pattern, (self.support, self.support), self.seed, self.density)?;
        let mut plane = Tensor::zeros([1, 1, h, w]);
        for i in 0..self.support {
            for j in 0..self.support {
                plane.set(0, 0, i, j, small.plane.get(0, 0, i, j));
            }
        }
        mask_to_psf(&CodedMask { plane, ..small })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self { train: 140, val: 40, test: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub root: PathBuf,
    pub splits: SplitSizes,
    pub extents: [usize; 2],
    pub mask: MaskSpec,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl Default for DatasetManifest {
    fn default() -> Self {
        Self {
            format_version: DATASET_FORMAT_VERSION,
            root: PathBuf::from("data"),
            splits: SplitSizes::default(),
            extents: [32, 32],
            mask: MaskSpec::default(),
            noise: NoiseModel::gaussian(0.02, 0),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn id(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Val => 2,
            Split::Test => 3,
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::argument(format!("unknown split '{other}' (train, val, test)"))),
        }
    }
}

/// Dataset held in memory with its PSF.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub manifest: DatasetManifest,
    pub psf: PointSpreadFunction,
    pub train: Vec<Pair>,
    pub val: Vec<Pair>,
    pub test: Vec<Pair>,
}

impl SyntheticDataset {
    pub fn split(&self, split: Split) -> &[Pair] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// SplitMix64 finalizer, used to derive independent per-item seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn item_seed(seed: u64, split: Split, index: usize, stream: u64) -> u64 {
    mix(mix(mix(seed) ^ split.id()) ^ (index as u64)) ^ stream
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::config(format!("unsupported dataset format version {}", self.format_version)));
        }
        self.noise.validate()?;
        if self.extents.iter().any(|&e| e < 8 || !e.is_power_of_two()) {
            return Err(Error::config(format!("extents {:?} must be powers of two, at least 8", self.extents)));
        }
        Ok(())
    }

    pub fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.splits.train,
            Split::Val => self.splits.val,
            Split::Test => self.splits.test,
        }
    }

    /// The synthetic pair `index` of `split`; independent of every other item.
    pub fn generate_pair(&self, psf: &PointSpreadFunction, split: Split, index: usize) -> Result<Pair> {
        let [h, w] = self.extents;
        let mut rng = ChaCha8Rng::seed_from_u64(item_seed(self.seed, split, index, 0));
        let object = random_phantom(h, w, &mut rng).map(|v| quantize(v, BitDepth::Sixteen));
        let noise = self.noise.with_seed(item_seed(self.seed, split, index, 0x6E_6F69_7365));
        let raw = simulate_measurement(&object, psf, &noise)?;
        let measurement = raw.map(|v| quantize(v.clamp(0.0, 1.0), BitDepth::Sixteen));
        Ok(Pair { measurement, object })
    }

    /// Generates every split in memory.
    pub fn generate(&self) -> Result<SyntheticDataset> {
        self.validate()?;
        let psf = self.mask.build_psf(self.extents)?;
        let make = |split: Split| -> Result<Vec<Pair>> {
            (0..self.count(split)).map(|i| self.generate_pair(&psf, split, i)).collect()
        };
        Ok(SyntheticDataset {
            train: make(Split::Train)?,
            val: make(Split::Val)?,
            test: make(Split::Test)?,
            psf,
            manifest: self.clone(),
        })
    }
}

fn item_name(index: usize) -> String {
    format!("{index:05}.pgm")
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Generates the dataset and writes it under `manifest.root`: the manifest,
/// a viewable PSF image and one paired directory per split.
pub fn synthesize_dataset(manifest: &DatasetManifest) -> Result<SyntheticDataset> {
    let data = manifest.generate()?;
    let root = &manifest.root;
    create_dir(root)?;
    let json = serde_json::to_string_pretty(manifest).map_err(|e| Error::config(e.to_string()))?;
    let path = root.join(MANIFEST_FILE);
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    let kernel = data.psf.kernel();
    write_image(&root.join("psf.pgm"), &kernel.scale(1.0 / kernel.max()), BitDepth::Sixteen)?;
    for split in Split::ALL {
        write_pairs(&root.join(split.name()), data.split(split))?;
    }
    Ok(data)
}

pub fn write_pairs(dir: &Path, pairs: &[Pair]) -> Result<()> {
    let (mdir, odir) = (dir.join("measurements"), dir.join("objects"));
    create_dir(&mdir)?;
    create_dir(&odir)?;
    for (i, pair) in pairs.iter().enumerate() {
        write_image(&mdir.join(item_name(i)), &pair.measurement, BitDepth::Sixteen)?;
        write_image(&odir.join(item_name(i)), &pair.object, BitDepth::Sixteen)?;
    }
    Ok(())
}

/// Loads `dir/measurements/*` and `dir/objects/*` paired by file name, in
/// lexicographic order. Any PNM depth is accepted.
pub fn load_paired_directory(dir: &Path) -> Result<Vec<Pair>> {
    let mdir = dir.join("measurements");
    let odir = dir.join("objects");
    let entries = fs::read_dir(&mdir).map_err(|e| Error::io(&mdir, e))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(&mdir, e))?;
        let name = entry.file_name();
        let is_pnm = Path::new(&name)
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "ppm" | "pnm"));
        if is_pnm {
            names.push(name);
        }
    }
    names.sort();
    names
        .into_iter()
        .map(|name| {
            let measurement = read_image(&mdir.join(&name))?;
            let opath = odir.join(&name);
            if !opath.exists() {
                return Err(Error::argument(format!(
                    "measurement {} has no matching object {}",
                    mdir.join(&name).display(),
                    opath.display()
                )));
            }
            let object = read_image(&opath)?;
            if object.shape() != measurement.shape() {
                return Err(Error::sizing(format!(
                    "pair {:?}: object {:?} and measurement {:?} differ in shape",
                    name,
                    object.shape(),
                    measurement.shape()
                )));
            }
            Ok(Pair { measurement, object })
        })
        .collect()
}

pub fn read_manifest(root: &Path) -> Result<DatasetManifest> {
    let path = root.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        source_name: path.display().to_string(),
        offset: byte_offset(&text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    manifest.root = root.to_path_buf();
    manifest.validate()?;
    Ok(manifest)
}

/// Byte offset of a 1-based line/column position reported by the JSON parser.
pub(crate) fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

/// Reads a synthesized dataset back from disk: the manifest (for the PSF)
/// and every split's paired directory.
pub fn load_dataset(root: &Path) -> Result<SyntheticDataset> {
    let manifest = read_manifest(root)?;
    let psf = manifest.mask.build_psf(manifest.extents)?;
    let load = |split: Split| load_paired_directory(&root.join(split.name()));
    Ok(SyntheticDataset { train: load(Split::Train)?, val: load(Split::Val)?, test: load(Split::Test)?, psf, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{conv2d, ConvMode};

    fn small(root: PathBuf, noise: NoiseModel) -> DatasetManifest {
        DatasetManifest {
            root,
            splits: SplitSizes { train: 10, val: 2, test: 1 },
            noise,
            seed: 7,
            ..DatasetManifest::default()
        }
    }

    #[test]
    fn synthesis_is_deterministic_and_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let m = small(dir.path().join("d"), NoiseModel::gaussian(0.02, 0));
        let written = synthesize_dataset(&m).unwrap();
        assert_eq!(written.train.len(), 10);
        let again = m.generate().unwrap();
        assert_eq!(again.train, written.train);
        let loaded = load_dataset(&m.root).unwrap();
        assert_eq!(loaded.train, written.train);
        assert_eq!(loaded.val, written.val);
        assert_eq!(loaded.test, written.test);
        assert_eq!(loaded.manifest, m);
        assert!(loaded.train.iter().all(|p| p.object.shape() == [1, 1, 32, 32]));
    }

    #[test]
    fn noiseless_measurements_match_the_convolution_oracle() {
        let m = small(PathBuf::from("unused"), NoiseModel::none());
        let data = m.generate().unwrap();
        let kernel = data.psf.centered_kernel();
        for pair in &data.train {
            let oracle = conv2d(&pair.object, kernel, ConvMode::Circular).unwrap();
            let err = oracle.sub(&pair.measurement).unwrap().max_abs();
            assert!(err <= 0.5 / 65535.0 + 1e-12, "{err}");
        }
    }

    #[test]
    fn items_differ_and_seeds_matter() {
        let m = small(PathBuf::from("unused"), NoiseModel::gaussian(0.02, 0));
        let a = m.generate().unwrap();
        assert_ne!(a.train[0].object, a.train[1].object);
        let other = DatasetManifest { seed: 8, ..m };
        assert_ne!(other.generate().unwrap().train[0].object, a.train[0].object);
    }

    #[test]
    fn psf_support_is_validated() {
        let spec = MaskSpec { support: 64, ..MaskSpec::default() };
        assert!(matches!(spec.build_psf([32, 32]), Err(Error::Config(_))));
    }

    #[test]
    fn manifest_rejects_unknown_keys_with_position() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), "{\n  \"bogus\": 1\n}").unwrap();
        match read_manifest(dir.path()) {
            Err(Error::Parse { offset, .. }) => assert!(offset > 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unwritable_root_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("file");
        fs::write(&file, b"x").unwrap();
        let m = small(file.join("sub"), NoiseModel::none());
        assert!(matches!(synthesize_dataset(&m), Err(Error::Io { .. })));
    }
}
