//! "KSC v1" on-disk dataset container.
//!
//! Per sample:
//! - `{id}.json` header: schema_version, id, shape `[coils, h, w]`,
//!   dtype `"c64le"`, mask pattern as a 0/1 array, acceleration,
//!   center_fraction, noise_sigma, and a ground-truth presence flag.
//! - `{id}.ksp` raw little-endian f64 blob, interleaved `(re, im)` in
//!   row-major `[coils][h][w]` order.
//! - `{id}.gt` raw little-endian f64 blob of the ground-truth image.
//!
//! Round trips are bit-exact.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mri::mask::SamplingMask;
use crate::mri::Sample;
use crate::numerics::tensor::{ComplexTensor, RealTensor};

pub const KSC_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KscHeader {
    pub schema_version: u32,
    pub id: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub mask_pattern: Vec<u8>,
    pub acceleration: f64,
    pub center_fraction: f64,
    pub noise_sigma: f64,
    pub ground_truth: bool,
}

fn write_f64_blob(path: &Path, values: impl Iterator<Item = f64>) -> Result<()> {
    let mut bytes = Vec::new();
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn read_f64_blob(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format(format!(
            "{}: length {} is not a multiple of 8",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn header_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{}.json", id))
}

/// Write one sample into `dir`. Fails if its header already exists,
/// unless `force` is set.
pub fn write_sample(dir: &Path, sample: &Sample, force: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    let hp = header_path(dir, &sample.id);
    if hp.exists() && !force {
        return Err(Error::InvalidParam(format!(
            "{} exists; refusing to overwrite without force",
            hp.display()
        )));
    }
    let header = KscHeader {
        schema_version: KSC_SCHEMA_VERSION,
        id: sample.id.clone(),
        shape: sample.kspace.shape.clone(),
        dtype: "c64le".into(),
        mask_pattern: sample.mask.pattern.clone(),
        acceleration: sample.mask.acceleration,
        center_fraction: sample.mask.center_fraction,
        noise_sigma: sample.noise_sigma,
        ground_truth: true,
    };
    fs::write(&hp, serde_json::to_vec_pretty(&header)?)?;
    write_f64_blob(
        &dir.join(format!("{}.ksp", sample.id)),
        sample
            .kspace
            .data
            .iter()
            .flat_map(|z| [z.re, z.im]),
    )?;
    write_f64_blob(
        &dir.join(format!("{}.gt", sample.id)),
        sample.ground_truth.data.iter().copied(),
    )?;
    Ok(())
}

/// Read one sample back by id.
pub fn read_sample(dir: &Path, id: &str) -> Result<Sample> {
    let hp = header_path(dir, id);
    if !hp.exists() {
        return Err(Error::MissingArtifact(format!("{}", hp.display())));
    }
    let header: KscHeader = serde_json::from_slice(&fs::read(&hp)?)?;
    if header.schema_version != KSC_SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "unsupported KSC schema version {}",
            header.schema_version
        )));
    }
    if header.dtype != "c64le" {
        return Err(Error::Format(format!("unsupported dtype {}", header.dtype)));
    }
    if header.shape.len() != 3 {
        return Err(Error::Format(format!(
            "expected shape [coils, h, w], got {:?}",
            header.shape
        )));
    }
    let (h, w) = (header.shape[1], header.shape[2]);
    if header.mask_pattern.len() != w {
        return Err(Error::Format(format!(
            "mask pattern length {} vs width {}",
            header.mask_pattern.len(),
            w
        )));
    }

    let raw = read_f64_blob(&dir.join(format!("{}.ksp", id)))?;
    let n: usize = header.shape.iter().product();
    if raw.len() != 2 * n {
        return Err(Error::Format(format!(
            "kspace blob holds {} f64 values, expected {}",
            raw.len(),
            2 * n
        )));
    }
    let kdata: Vec<Complex64> = raw
        .chunks_exact(2)
        .map(|p| Complex64::new(p[0], p[1]))
        .collect();
    let kspace = ComplexTensor::new(header.shape.clone(), kdata)?;

    let gt_raw = read_f64_blob(&dir.join(format!("{}.gt", id)))?;
    if gt_raw.len() != h * w {
        return Err(Error::Format(format!(
            "ground truth blob holds {} values, expected {}",
            gt_raw.len(),
            h * w
        )));
    }
    let ground_truth = RealTensor::new(vec![h, w], gt_raw)?;

    let mask = SamplingMask {
        width: w,
        pattern: header.mask_pattern,
        acceleration: header.acceleration,
        center_fraction: header.center_fraction,
    };

    Ok(Sample {
        id: header.id,
        kspace,
        mask,
        ground_truth,
        noise_sigma: header.noise_sigma,
    })
}

/// Sorted list of sample ids present in `dir`.
pub fn list_samples(dir: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(stem) = name.strip_suffix(".json") {
            ids.push(stem.to_string());
        }
    }
    ids.sort();
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mri::{gen_sample, DatasetConfig};

    #[test]
    fn round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DatasetConfig {
            height: 16,
            width: 16,
            n_coils: 2,
            acceleration: 2.0,
            center_fraction: 0.25,
            noise_sigma: 0.01,
            ..Default::default()
        };
        let sample = gen_sample(&cfg, 3, 0).unwrap();
        write_sample(dir.path(), &sample, false).unwrap();
        let back = read_sample(dir.path(), &sample.id).unwrap();
        assert_eq!(sample.kspace.data, back.kspace.data);
        assert_eq!(sample.ground_truth.data, back.ground_truth.data);
        assert_eq!(sample.mask, back.mask);

        // Writing again without force fails; with force succeeds.
        assert!(write_sample(dir.path(), &sample, false).is_err());
        write_sample(dir.path(), &sample, true).unwrap();
    }

    #[test]
    fn list_is_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DatasetConfig {
            height: 8,
            width: 8,
            acceleration: 2.0,
            center_fraction: 0.25,
            ..Default::default()
        };
        for i in [2usize, 0, 1] {
            let s = gen_sample(&cfg, 1, i).unwrap();
            write_sample(dir.path(), &s, false).unwrap();
        }
        let ids = list_samples(dir.path()).unwrap();
        assert_eq!(ids, vec!["sample_0000", "sample_0001", "sample_0002"]);
    }

    #[test]
    fn missing_sample_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            read_sample(dir.path(), "nope"),
            Err(Error::MissingArtifact(_))
        ));
    }
}
