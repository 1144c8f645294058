//! Binary MNIST subsets read from IDX files.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::problems::{even_partition, Logistic};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Two-digit subset; the first digit is labelled +1, the second −1.
#[derive(Debug, Clone)]
pub struct MnistSubset {
    /// `pixels × samples`, values in `[0, 1]`.
    pub features: DMatrix<f64>,
    pub labels: Vec<f64>,
    /// Contiguous sample ranges, one per node.
    pub partition: Vec<std::ops::Range<usize>>,
    /// Matching images found before truncating to a multiple of the node count.
    pub matched: usize,
}

impl MnistSubset {
    pub fn samples(&self) -> usize {
        self.labels.len()
    }

    pub fn logistic(&self, lambda: f64) -> Result<Logistic> {
        Logistic::partition(&self.features, &self.labels, self.partition.len(), lambda)
    }
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Dataset("truncated IDX header".into()))
}

/// Parses an IDX image file into `(rows·cols, images)`.
pub fn parse_images(bytes: &[u8]) -> Result<(usize, Vec<&[u8]>)> {
    let magic = read_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Dataset(format!(
            "image file magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"
        )));
    }
    let count = read_u32(bytes, 4)? as usize;
    let pixels = read_u32(bytes, 8)? as usize * read_u32(bytes, 12)? as usize;
    let body = &bytes[16..];
    if pixels == 0 || body.len() != count * pixels {
        return Err(Error::Dataset(format!(
            "image file holds {} bytes of pixels, header says {count} × {pixels}",
            body.len()
        )));
    }
    Ok((pixels, body.chunks_exact(pixels).collect()))
}

pub fn parse_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = read_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(Error::Dataset(format!(
            "label file magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"
        )));
    }
    let count = read_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(Error::Dataset(format!(
            "label file holds {} labels, header says {count}",
            body.len()
        )));
    }
    Ok(body)
}

/// Keeps the two digits in file order, truncates to a multiple of `nodes`
/// and partitions evenly.
pub fn subset_from_bytes(images: &[u8], labels: &[u8], digits: [u8; 2], nodes: usize) -> Result<MnistSubset> {
    if digits[0] == digits[1] || digits.iter().any(|&d| d > 9) {
        return Err(Error::Dataset(format!("need two different digits, got {digits:?}")));
    }
    if nodes == 0 {
        return Err(Error::Dataset("need at least one node".into()));
    }
    let (pixels, imgs) = parse_images(images)?;
    let labs = parse_labels(labels)?;
    if imgs.len() != labs.len() {
        return Err(Error::Dataset(format!("{} images but {} labels", imgs.len(), labs.len())));
    }
    let keep: Vec<usize> = (0..labs.len()).filter(|&s| digits.contains(&labs[s])).collect();
    for d in digits {
        if !keep.iter().any(|&s| labs[s] == d) {
            return Err(Error::Dataset(format!("digit {d} does not occur in the label file")));
        }
    }
    let matched = keep.len();
    let used = matched / nodes * nodes;
    if used == 0 {
        return Err(Error::Dataset(format!(
            "{matched} samples cannot be split across {nodes} nodes"
        )));
    }
    if used < matched {
        log::info!("mnist: {matched} images of digits {digits:?}, truncated to {used} for {nodes} nodes");
    } else {
        log::info!("mnist: {matched} images of digits {digits:?}");
    }
    let mut features = DMatrix::zeros(pixels, used);
    let mut out_labels = Vec::with_capacity(used);
    for (col, &s) in keep.iter().take(used).enumerate() {
        for (k, &v) in imgs[s].iter().enumerate() {
            features[(k, col)] = f64::from(v) / 255.0;
        }
        out_labels.push(if labs[s] == digits[0] { 1.0 } else { -1.0 });
    }
    Ok(MnistSubset {
        features,
        labels: out_labels,
        partition: even_partition(used, nodes),
        matched,
    })
}

pub fn load_mnist_idx(images: &Path, labels: &Path, digits: [u8; 2], nodes: usize) -> Result<MnistSubset> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| Error::Dataset(format!("{}: {e}", p.display())));
    subset_from_bytes(&read(images)?, &read(labels)?, digits, nodes)
}

/// IDX encoders, used to write small fixtures.
pub fn encode_images(rows: usize, cols: usize, images: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::new();
    for v in [IMAGES_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        assert_eq!(img.len(), rows * cols);
        out.extend_from_slice(img);
    }
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
