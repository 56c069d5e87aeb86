//! MNIST IDX reader (plain or gzip) and the crop-and-binarize preprocessing.

use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use super::DataError;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const SIDE: usize = 28;
pub const CROP_OFFSET: usize = 3;
pub const CROP_SIDE: usize = 22;
/// Pixels strictly above this become 1.
pub const BINARY_THRESHOLD: u8 = 127;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledImage {
    /// Row-major 28×28 grayscale.
    pub pixels: Vec<u8>,
    pub label: u8,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, DataError> {
    let raw = std::fs::read(path).map_err(|e| DataError::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = vec![];
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out).map_err(|e| DataError::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

/// Validates an IDX header and returns the dimension sizes and payload.
fn parse_idx<'a>(path: &Path, bytes: &'a [u8], magic: u32) -> Result<(Vec<usize>, &'a [u8]), DataError> {
    if bytes.len() < 4 {
        return Err(DataError::Truncated { path: path.to_path_buf(), expected: 4, actual: bytes.len() });
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(DataError::BadMagic { path: path.to_path_buf(), expected: magic, found });
    }
    let ndims = (magic & 0xff) as usize;
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(DataError::Truncated { path: path.to_path_buf(), expected: header, actual: bytes.len() });
    }
    let dims: Vec<usize> = (0..ndims).map(|k| be_u32(bytes, 4 + 4 * k) as usize).collect();
    let expected = header + dims.iter().product::<usize>();
    if bytes.len() < expected {
        return Err(DataError::Truncated { path: path.to_path_buf(), expected, actual: bytes.len() });
    }
    Ok((dims, &bytes[header..expected]))
}

pub fn load_mnist(images: &Path, labels: &Path) -> Result<Vec<LabeledImage>, DataError> {
    let image_bytes = read_bytes(images)?;
    let label_bytes = read_bytes(labels)?;
    let (idims, pixels) = parse_idx(images, &image_bytes, IMAGE_MAGIC)?;
    let (ldims, labels_raw) = parse_idx(labels, &label_bytes, LABEL_MAGIC)?;
    if idims[1] != SIDE || idims[2] != SIDE {
        return Err(DataError::Shape { expected: SIDE * SIDE, found: idims[1] * idims[2] });
    }
    if idims[0] != ldims[0] {
        return Err(DataError::CountMismatch { images: idims[0], labels: ldims[0] });
    }
    Ok(pixels
        .chunks_exact(SIDE * SIDE)
        .zip(labels_raw)
        .map(|(p, &label)| LabeledImage { pixels: p.to_vec(), label })
        .collect())
}

/// The train and test splits found in `dir`, under the standard file names
/// with or without a `.gz` suffix.
pub struct MnistDir {
    pub train: Vec<LabeledImage>,
    pub test: Vec<LabeledImage>,
}

fn locate(dir: &Path, stem: &str) -> Result<PathBuf, DataError> {
    for name in [stem.to_string(), format!("{stem}.gz")] {
        let p = dir.join(name);
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(DataError::Missing(dir.join(stem)))
}

pub fn load_mnist_dir(dir: &Path) -> Result<MnistDir, DataError> {
    let train = load_mnist(&locate(dir, "train-images-idx3-ubyte")?, &locate(dir, "train-labels-idx1-ubyte")?)?;
    let test = load_mnist(&locate(dir, "t10k-images-idx3-ubyte")?, &locate(dir, "t10k-labels-idx1-ubyte")?)?;
    Ok(MnistDir { train, test })
}

/// Center 22×22 crop, thresholded to {0, 1}, row-major.
pub fn preprocess(image: &[u8]) -> Result<Vec<u8>, DataError> {
    if image.len() != SIDE * SIDE {
        return Err(DataError::Shape { expected: SIDE * SIDE, found: image.len() });
    }
    Ok((CROP_OFFSET..CROP_OFFSET + CROP_SIDE)
        .flat_map(|r| &image[r * SIDE + CROP_OFFSET..r * SIDE + CROP_OFFSET + CROP_SIDE])
        .map(|&p| u8::from(p > BINARY_THRESHOLD))
        .collect())
}

/// Encodes images and labels as IDX byte streams.
pub fn encode_idx(images: &[LabeledImage]) -> (Vec<u8>, Vec<u8>) {
    let n = images.len() as u32;
    let mut img = vec![];
    img.extend(IMAGE_MAGIC.to_be_bytes());
    img.extend(n.to_be_bytes());
    img.extend((SIDE as u32).to_be_bytes());
    img.extend((SIDE as u32).to_be_bytes());
    let mut lab = vec![];
    lab.extend(LABEL_MAGIC.to_be_bytes());
    lab.extend(n.to_be_bytes());
    for im in images {
        img.extend(&im.pixels);
        lab.push(im.label);
    }
    (img, lab)
}
