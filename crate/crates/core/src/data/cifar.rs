//! CIFAR-10 / CIFAR-100 binary archives.
//!
//! CIFAR-10 records are 3073 bytes: one label byte followed by 3072 pixel
//! bytes (R plane, G plane, B plane, each 32x32 row-major). CIFAR-100 records
//! are 3074 bytes: coarse label, fine label, then the same pixel layout.

use super::{Dataset, DatasetMeta, Sample};
use crate::error::{Error, Result};
use crate::views::Image;
use std::path::{Path, PathBuf};

pub const SIDE: usize = 32;
pub const PIXEL_BYTES: usize = 3 * SIDE * SIDE;
pub const CIFAR10_RECORD: usize = 1 + PIXEL_BYTES;
pub const CIFAR100_RECORD: usize = 2 + PIXEL_BYTES;

pub const CIFAR10_TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const CIFAR10_TEST_FILE: &str = "test_batch.bin";
pub const CIFAR100_TRAIN_FILE: &str = "train.bin";
pub const CIFAR100_TEST_FILE: &str = "test.bin";

fn parse_records(
    bytes: &[u8],
    record: usize,
    label_at: usize,
    classes: usize,
) -> Result<Vec<Sample>> {
    if bytes.len() % record != 0 {
        let whole = bytes.len() / record;
        return Err(Error::Parse {
            offset: whole * record,
            msg: format!(
                "truncated record: {} trailing bytes, records are {record} bytes",
                bytes.len() - whole * record
            ),
        });
    }
    bytes
        .chunks_exact(record)
        .enumerate()
        .map(|(i, rec)| {
            let label = rec[label_at] as usize;
            if label >= classes {
                return Err(Error::Parse {
                    offset: i * record + label_at,
                    msg: format!("label {label} out of range for {classes} classes"),
                });
            }
            let image = Image::from_bytes(3, SIDE, SIDE, &rec[record - PIXEL_BYTES..])?;
            Ok(Sample { label, image })
        })
        .collect()
}

pub fn parse_cifar10(bytes: &[u8]) -> Result<Vec<Sample>> {
    parse_records(bytes, CIFAR10_RECORD, 0, 10)
}

/// Keeps the fine label; the coarse label byte is discarded.
pub fn parse_cifar100(bytes: &[u8]) -> Result<Vec<Sample>> {
    parse_records(bytes, CIFAR100_RECORD, 1, 100)
}

fn check_encodable(samples: &[Sample], classes: usize) -> Result<()> {
    for (i, s) in samples.iter().enumerate() {
        if s.image.dims() != (3, SIDE, SIDE) {
            return Err(Error::Data(format!(
                "sample {i} is {:?}, records hold 3x32x32",
                s.image.dims()
            )));
        }
        if s.label >= classes {
            return Err(Error::Data(format!(
                "sample {i} label {} >= {classes}",
                s.label
            )));
        }
    }
    Ok(())
}

pub fn encode_cifar10(samples: &[Sample]) -> Result<Vec<u8>> {
    check_encodable(samples, 10)?;
    let mut out = Vec::with_capacity(samples.len() * CIFAR10_RECORD);
    for s in samples {
        out.push(s.label as u8);
        out.extend(s.image.to_bytes());
    }
    Ok(out)
}

/// `coarse` supplies the coarse label byte for each sample.
pub fn encode_cifar100(samples: &[Sample], coarse: impl Fn(usize) -> u8) -> Result<Vec<u8>> {
    check_encodable(samples, 100)?;
    let mut out = Vec::with_capacity(samples.len() * CIFAR100_RECORD);
    for s in samples {
        out.push(coarse(s.label));
        out.push(s.label as u8);
        out.extend(s.image.to_bytes());
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CifarKind {
    Cifar10,
    Cifar100,
}

impl CifarKind {
    pub fn meta(self) -> DatasetMeta {
        match self {
            CifarKind::Cifar10 => DatasetMeta {
                name: "cifar10".into(),
                num_classes: 10,
                input_dim: (3, SIDE, SIDE),
                train_count: 50_000,
                test_count: 10_000,
            },
            CifarKind::Cifar100 => DatasetMeta {
                name: "cifar100".into(),
                num_classes: 100,
                input_dim: (3, SIDE, SIDE),
                train_count: 50_000,
                test_count: 10_000,
            },
        }
    }

    fn subdir(self) -> &'static str {
        match self {
            CifarKind::Cifar10 => "cifar-10-batches-bin",
            CifarKind::Cifar100 => "cifar-100-binary",
        }
    }

    fn probe_file(self) -> &'static str {
        match self {
            CifarKind::Cifar10 => CIFAR10_TEST_FILE,
            CifarKind::Cifar100 => CIFAR100_TEST_FILE,
        }
    }

    /// Directory holding the archive files: `dir` itself or its standard
    /// extraction subdirectory.
    pub fn locate(self, dir: &Path) -> Result<PathBuf> {
        for cand in [dir.to_path_buf(), dir.join(self.subdir())] {
            if cand.join(self.probe_file()).is_file() {
                return Ok(cand);
            }
        }
        Err(Error::Data(format!(
            "no {} archive under {} (looked for {} there and in {}/)",
            self.meta().name,
            dir.display(),
            self.probe_file(),
            self.subdir()
        )))
    }

    fn parse(self, bytes: &[u8]) -> Result<Vec<Sample>> {
        match self {
            CifarKind::Cifar10 => parse_cifar10(bytes),
            CifarKind::Cifar100 => parse_cifar100(bytes),
        }
    }

    fn read(self, path: &Path) -> Result<Vec<Sample>> {
        let bytes =
            std::fs::read(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        self.parse(&bytes).map_err(|e| match e {
            Error::Parse { offset, msg } => Error::Parse {
                offset,
                msg: format!("{}: {msg}", path.display()),
            },
            other => other,
        })
    }

    /// Loads `(train, test)` splits.
    pub fn load(self, dir: &Path) -> Result<(Dataset, Dataset)> {
        let root = self.locate(dir)?;
        let meta = self.meta();
        let train_files: Vec<&str> = match self {
            CifarKind::Cifar10 => CIFAR10_TRAIN_FILES.to_vec(),
            CifarKind::Cifar100 => vec![CIFAR100_TRAIN_FILE],
        };
        let mut train = Vec::new();
        for f in train_files {
            train.extend(self.read(&root.join(f))?);
        }
        let test = self.read(&root.join(self.probe_file()))?;
        Ok((
            Dataset::new(meta.name.clone(), meta.num_classes, train),
            Dataset::new(meta.name, meta.num_classes, test),
        ))
    }
}
