//! IDX container reading and writing (the MNIST distribution format).
//!
//! Header fields are big-endian `u32`: the magic number, the item count and,
//! for images, the row and column counts. Payload bytes follow directly.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::LabeledDataset;
use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    /// `count · rows · cols` bytes, row-major per image.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn count(&self) -> usize {
        self.pixels.len() / (self.rows * self.cols).max(1)
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

fn header(bytes: &[u8], path: &Path, words: usize, magic: u32) -> Result<Vec<usize>> {
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            path: path.into(),
            detail: format!("{} bytes, no magic number", bytes.len()),
        });
    }
    let word = |k: usize| u32::from_be_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap());
    let found = word(0);
    if found != magic {
        return Err(Error::BadMagic {
            path: path.into(),
            expected: magic,
            found,
        });
    }
    if bytes.len() < 4 * (words + 1) {
        return Err(Error::Truncated {
            path: path.into(),
            detail: format!(
                "header needs {} bytes, file has {}",
                4 * (words + 1),
                bytes.len()
            ),
        });
    }
    Ok((1..=words).map(|k| word(k) as usize).collect())
}

fn payload<'a>(bytes: &'a [u8], path: &Path, offset: usize, len: usize) -> Result<&'a [u8]> {
    bytes
        .get(offset..offset + len)
        .ok_or_else(|| Error::Truncated {
            path: path.into(),
            detail: format!(
                "expected {len} payload bytes, found {}",
                bytes.len().saturating_sub(offset)
            ),
        })
}

pub fn read_images(path: &Path) -> Result<IdxImages> {
    let bytes = read_file(path)?;
    let h = header(&bytes, path, 3, IMAGE_MAGIC)?;
    let (n, rows, cols) = (h[0], h[1], h[2]);
    let pixels = payload(&bytes, path, 16, n * rows * cols)?.to_vec();
    Ok(IdxImages { rows, cols, pixels })
}

pub fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read_file(path)?;
    let h = header(&bytes, path, 1, LABEL_MAGIC)?;
    Ok(payload(&bytes, path, 8, h[0])?.to_vec())
}

pub fn write_images(path: &Path, images: &IdxImages) -> Result<()> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [
        IMAGE_MAGIC,
        images.count() as u32,
        images.rows as u32,
        images.cols as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn write_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Loads images whose digit is in `keep_digits`, scaled to `[0, 1]`.
///
/// The class label is the digit's position in `keep_digits`, so `{0, 1}`
/// maps each digit to itself. Pixel `k` of a row sits at `(k / cols, k % cols)`.
pub fn load_mnist_binary(
    images_path: &Path,
    labels_path: &Path,
    keep_digits: &[u8],
) -> Result<LabeledDataset> {
    if keep_digits.len() != LabeledDataset::N_CLASSES {
        return Err(Error::InvalidArgument(format!(
            "expected {} digits to keep, got {}",
            LabeledDataset::N_CLASSES,
            keep_digits.len()
        )));
    }
    let images = read_images(images_path)?;
    let digits = read_labels(labels_path)?;
    if images.count() != digits.len() {
        return Err(Error::CountMismatch {
            images: images.count(),
            labels: digits.len(),
        });
    }
    let d = images.rows * images.cols;
    let kept: Vec<(usize, usize)> = digits
        .iter()
        .enumerate()
        .filter_map(|(i, dg)| keep_digits.iter().position(|k| k == dg).map(|c| (i, c)))
        .collect();
    let mut features = Array2::zeros((kept.len(), d));
    for (mut row, &(i, _)) in features.rows_mut().into_iter().zip(&kept) {
        for (v, &px) in row.iter_mut().zip(&images.pixels[i * d..(i + 1) * d]) {
            *v = f64::from(px) / 255.0;
        }
    }
    let labels = kept.iter().map(|&(_, c)| c).collect();
    LabeledDataset::new("mnist-binary", features, labels, None)
}

/// Inverse of [`load_mnist_binary`] for a 28×28 dataset whose kept digits are `digits`.
pub fn write_mnist_binary(
    dataset: &LabeledDataset,
    digits: &[u8],
    images_path: &Path,
    labels_path: &Path,
) -> Result<()> {
    let d = dataset.n_features();
    let side = (d as f64).sqrt() as usize;
    if side * side != d {
        return Err(Error::Data(format!(
            "{d} features do not form a square image"
        )));
    }
    let pixels = dataset
        .features
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    write_images(
        images_path,
        &IdxImages {
            rows: side,
            cols: side,
            pixels,
        },
    )?;
    let labels: Vec<u8> = dataset.labels.iter().map(|&c| digits[c]).collect();
    write_labels(labels_path, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(
        dir: &Path,
        digits: &[u8],
        fill: impl Fn(usize, usize) -> u8,
    ) -> (std::path::PathBuf, std::path::PathBuf) {
        let n = digits.len();
        let pixels = (0..n * 4).map(|k| fill(k / 4, k % 4)).collect();
        let ip = dir.join("img");
        let lp = dir.join("lbl");
        write_images(
            &ip,
            &IdxImages {
                rows: 2,
                cols: 2,
                pixels,
            },
        )
        .unwrap();
        write_labels(&lp, digits).unwrap();
        (ip, lp)
    }

    #[test]
    fn keeps_only_zero_and_one() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = fixture(dir.path(), &[3, 0, 1, 7, 1], |i, k| (i * 10 + k) as u8);
        let d = load_mnist_binary(&ip, &lp, &[0, 1]).unwrap();
        assert_eq!(d.labels, vec![0, 1, 1]);
        assert_eq!(
            d.features.row(0).to_vec(),
            vec![10.0 / 255.0, 11.0 / 255.0, 12.0 / 255.0, 13.0 / 255.0]
        );
        assert_eq!(d.features[[2, 3]], 43.0 / 255.0);
    }

    #[test]
    fn black_image_is_zero_row() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = fixture(dir.path(), &[0], |_, _| 0);
        let d = load_mnist_binary(&ip, &lp, &[0, 1]).unwrap();
        assert!(d.features.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = fixture(dir.path(), &[0, 1], |_, _| 9);
        let mut bytes = fs::read(&ip).unwrap();
        bytes[..4].copy_from_slice(&0xDEAD_BEEFu32.to_be_bytes());
        fs::write(&ip, bytes).unwrap();
        match load_mnist_binary(&ip, &lp, &[0, 1]) {
            Err(Error::BadMagic {
                found, expected, ..
            }) => {
                assert_eq!(found, 0xDEAD_BEEF);
                assert_eq!(expected, IMAGE_MAGIC);
            }
            other => panic!("unexpected {other:?}"),
        }
        // Labels file passed as images is also a magic error.
        assert!(matches!(read_images(&lp), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn truncated_and_mismatched() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = fixture(dir.path(), &[0, 1, 1], |_, _| 1);
        let bytes = fs::read(&ip).unwrap();
        fs::write(&ip, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(
            load_mnist_binary(&ip, &lp, &[0, 1]),
            Err(Error::Truncated { .. })
        ));
        fs::write(&ip, &bytes[..10]).unwrap();
        assert!(matches!(read_images(&ip), Err(Error::Truncated { .. })));

        fs::write(&ip, &bytes).unwrap();
        write_labels(&lp, &[0, 1]).unwrap();
        assert!(matches!(
            load_mnist_binary(&ip, &lp, &[0, 1]),
            Err(Error::CountMismatch {
                images: 3,
                labels: 2
            })
        ));
    }

    #[test]
    fn write_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = fixture(dir.path(), &[1, 0, 5, 1], |i, k| (i * 60 + k * 7) as u8);
        let d = load_mnist_binary(&ip, &lp, &[0, 1]).unwrap();
        let ip2 = dir.path().join("img2");
        let lp2 = dir.path().join("lbl2");
        write_mnist_binary(&d, &[0, 1], &ip2, &lp2).unwrap();
        let back = load_mnist_binary(&ip2, &lp2, &[0, 1]).unwrap();
        assert_eq!(back.features, d.features);
        assert_eq!(back.labels, d.labels);
    }
}
