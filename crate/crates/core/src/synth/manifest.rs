use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pgm::{read_pgm, write_pgm};
use super::scene::{generate_scene, Difficulty, SceneSample};
use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::rng;
use crate::tensor::GridShape;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// One scene's files, relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub image: PathBuf,
    pub region: PathBuf,
    pub boundary: PathBuf,
    pub seed: u64,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub samples: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.samples.iter().filter(move |e| e.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.entries(split).count()
    }

    fn check_ids(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.samples {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate sample id {:?}", e.id)));
            }
        }
        Ok(())
    }
}

/// `(train, val, test)` sizes for `count` scenes: a quarter is held out for
/// testing and a tenth of the remaining pool (rounded) for validation.
pub fn split_counts(count: usize) -> (usize, usize, usize) {
    let test = count / 4;
    let pool = count - test;
    let val = (pool as f64 * 0.1).round() as usize;
    (pool - val, val, test)
}

/// Split of scene `i` for a dataset of `count` scenes generated from `seed`.
pub fn assign_splits(count: usize, seed: u64) -> Vec<Split> {
    let (_, val, test) = split_counts(count);
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut rng::seeded(seed ^ 0x5EED_5B17));
    let mut splits = vec![Split::Train; count];
    for (rank, &i) in order.iter().enumerate() {
        splits[i] = if rank < test {
            Split::Test
        } else if rank < test + val {
            Split::Val
        } else {
            Split::Train
        };
    }
    splits
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    manifest.check_ids()?;
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Parses and validates a manifest: version, unique ids and existing files.
pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m: Manifest = serde_json::from_str(&text)?;
    if m.version != MANIFEST_VERSION {
        return Err(Error::Manifest(format!(
            "version {} unsupported (expected {MANIFEST_VERSION})",
            m.version
        )));
    }
    m.check_ids()?;
    let root = path.parent().unwrap_or(Path::new("."));
    for e in &m.samples {
        for f in [&e.image, &e.region, &e.boundary] {
            if !root.join(f).is_file() {
                return Err(Error::Manifest(format!(
                    "sample {:?} references missing file {}",
                    e.id,
                    root.join(f).display()
                )));
            }
        }
    }
    Ok(m)
}

/// Generates `count` scenes with seeds `seed + i` under `out`, writes the
/// PGM triples and the manifest, and returns the manifest.
pub fn generate_dataset(
    out: &Path,
    seed: u64,
    count: usize,
    size: usize,
    difficulty: Difficulty,
) -> Result<Manifest> {
    for sub in ["images", "regions", "boundaries"] {
        let d = out.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let splits = assign_splits(count, seed);
    let samples = (0..count)
        .into_par_iter()
        .map(|i| {
            let s = seed.wrapping_add(i as u64);
            let scene = generate_scene(s, size, difficulty)?;
            let id = format!("scene_{i:04}");
            let entry = ManifestEntry {
                image: PathBuf::from("images").join(format!("{id}.pgm")),
                region: PathBuf::from("regions").join(format!("{id}.pgm")),
                boundary: PathBuf::from("boundaries").join(format!("{id}.pgm")),
                id,
                seed: s,
                split: splits[i],
            };
            write_pgm(&out.join(&entry.image), &scene.image)?;
            write_pgm(&out.join(&entry.region), &scene.region.to_image())?;
            write_pgm(&out.join(&entry.boundary), &scene.boundary.to_image())?;
            Ok(entry)
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        samples,
    };
    write_manifest(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Scenes of one dataset, generated in memory and split exactly as
/// [`generate_dataset`] would write them.
#[derive(Clone, Debug)]
pub struct SplitScenes {
    pub train: Vec<SceneSample>,
    pub val: Vec<SceneSample>,
    pub test: Vec<SceneSample>,
}

pub fn generate_split(
    seed: u64,
    count: usize,
    size: usize,
    difficulty: Difficulty,
) -> Result<SplitScenes> {
    let splits = assign_splits(count, seed);
    let scenes = (0..count)
        .into_par_iter()
        .map(|i| generate_scene(seed.wrapping_add(i as u64), size, difficulty))
        .collect::<Result<Vec<_>>>()?;
    let mut out = SplitScenes {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (scene, split) in scenes.into_iter().zip(splits) {
        match split {
            Split::Train => out.train.push(scene),
            Split::Val => out.val.push(scene),
            Split::Test => out.test.push(scene),
        }
    }
    Ok(out)
}

fn load_entry(root: &Path, e: &ManifestEntry) -> Result<SceneSample> {
    let image = read_pgm(&root.join(&e.image))?;
    let grid = GridShape::new(image.rows(), image.cols());
    let mask = |p: &Path| -> Result<Mask> {
        let m = read_pgm(&root.join(p))?;
        Mask::from_matrix(&m, grid)
            .map_err(|err| Error::Manifest(format!("{}: {err}", root.join(p).display())))
    };
    Ok(SceneSample {
        region: mask(&e.region)?,
        boundary: mask(&e.boundary)?,
        image,
        seed: e.seed,
        blob_count: 0,
    })
}

/// Reads every scene of `split`, in manifest order.
pub fn load_samples(root: &Path, manifest: &Manifest, split: Split) -> Result<Vec<SceneSample>> {
    let entries: Vec<&ManifestEntry> = manifest.entries(split).collect();
    entries.par_iter().map(|e| load_entry(root, e)).collect()
}
