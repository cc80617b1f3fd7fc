//! Message padding and the per-variant mapping between message bytes and
//! table rows.
//!
//! A message is stored as `0x01 || msg || 0x00...`, which keeps every real
//! row nonzero. Unpadding trims trailing zeros, so messages that end in
//! zero bytes lose them.

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use crate::collision::{coded_row_elems, decode_coded_row, encode_coded_row, random_nonzero, CodedRow, CELL_DATA_BYTES};
use crate::error::{invalid, Result};
use crate::field::Fp;
use crate::group::{decode_group_message, encode_group_message, PrimeGroup};
use crate::payload::{GroupPayload, Payload};

pub const PAD_MARKER: u8 = 0x01;

/// Pads `msg` to exactly `width` bytes.
pub fn pad_message(msg: &[u8], width: usize) -> Result<Vec<u8>> {
    if msg.len() + 1 > width {
        return Err(invalid(format!("message of {} bytes exceeds capacity {}", msg.len(), width.saturating_sub(1))));
    }
    let mut out = vec![0u8; width];
    out[0] = PAD_MARKER;
    out[1..=msg.len()].copy_from_slice(msg);
    Ok(out)
}

/// Inverse of [`pad_message`]; `None` when the marker is missing.
pub fn unpad_message(row: &[u8]) -> Option<Vec<u8>> {
    if row.first() != Some(&PAD_MARKER) {
        return None;
    }
    let end = row.iter().rposition(|&b| b != 0).expect("marker is nonzero");
    Some(row[1..=end].to_vec())
}

/// What a revealed row holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowContent {
    Empty,
    Single(Vec<u8>),
    Pair(Vec<u8>, Vec<u8>),
    Unrecoverable,
}

impl RowContent {
    pub fn status(&self) -> &'static str {
        match self {
            RowContent::Empty => "empty",
            RowContent::Single(_) => "single",
            RowContent::Pair(..) => "pair",
            RowContent::Unrecoverable => "unrecoverable",
        }
    }

    pub fn messages(&self) -> Vec<&[u8]> {
        match self {
            RowContent::Single(m) => vec![m],
            RowContent::Pair(a, b) => vec![a, b],
            _ => vec![],
        }
    }
}

/// How message bytes become row elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum RowFormat {
    /// Plain bytes under XOR.
    Xor { row_bytes: usize },
    /// `F_p` collision-recovery coding with `data_cells` data cells.
    Coded { data_cells: usize },
    /// Group-element chunks of `G::EMBED_BYTES` each.
    Group { chunks: usize, embed_bytes: usize },
}

impl RowFormat {
    /// Smallest format of the given kind holding `row_bytes` padded bytes.
    pub fn xor(row_bytes: usize) -> Self {
        RowFormat::Xor { row_bytes }
    }

    pub fn coded(row_bytes: usize) -> Self {
        RowFormat::Coded { data_cells: row_bytes.div_ceil(CELL_DATA_BYTES).max(1) }
    }

    pub fn group<G: PrimeGroup>(row_bytes: usize) -> Self {
        RowFormat::Group { chunks: row_bytes.div_ceil(G::EMBED_BYTES).max(1), embed_bytes: G::EMBED_BYTES }
    }

    /// Padded bytes per row, marker included.
    pub fn padded_bytes(&self) -> usize {
        match *self {
            RowFormat::Xor { row_bytes } => row_bytes,
            RowFormat::Coded { data_cells } => data_cells * CELL_DATA_BYTES,
            RowFormat::Group { chunks, embed_bytes } => chunks * embed_bytes,
        }
    }

    /// Largest message that fits.
    pub fn capacity(&self) -> usize {
        self.padded_bytes() - 1
    }

    /// Payload elements per row.
    pub fn row_elems(&self) -> usize {
        match *self {
            RowFormat::Xor { row_bytes } => row_bytes,
            RowFormat::Coded { data_cells } => coded_row_elems(data_cells),
            RowFormat::Group { chunks, .. } => chunks,
        }
    }
}

pub fn encode_xor_row(msg: &[u8], row_bytes: usize) -> Result<Vec<u8>> {
    pad_message(msg, row_bytes)
}

pub fn decode_xor_row(row: &[u8]) -> RowContent {
    if row.iter().all(|&b| b == 0) {
        return RowContent::Empty;
    }
    match unpad_message(row) {
        Some(m) => RowContent::Single(m),
        None => RowContent::Unrecoverable,
    }
}

pub fn encode_fp_row(msg: &[u8], data_cells: usize) -> Result<Vec<Fp>> {
    Ok(encode_coded_row(&pad_message(msg, data_cells * CELL_DATA_BYTES)?))
}

pub fn decode_fp_row(cells: &[Fp]) -> RowContent {
    let unpad = |b: &[u8]| unpad_message(b);
    match decode_coded_row(cells) {
        CodedRow::Empty => RowContent::Empty,
        CodedRow::Single(b) => unpad(&b).map_or(RowContent::Unrecoverable, RowContent::Single),
        CodedRow::Pair(a, b) => match (unpad(&a), unpad(&b)) {
            (Some(a), Some(b)) => RowContent::Pair(a, b),
            _ => RowContent::Unrecoverable,
        },
        CodedRow::Unrecoverable => RowContent::Unrecoverable,
    }
}

pub fn encode_group_row<G: PrimeGroup>(msg: &[u8], chunks: usize) -> Result<Vec<G>> {
    let padded = pad_message(msg, chunks * G::EMBED_BYTES)?;
    padded.chunks(G::EMBED_BYTES).map(encode_group_message::<G>).collect()
}

pub fn decode_group_row<G: PrimeGroup>(elems: &[G]) -> RowContent {
    if elems.iter().all(|e| e.is_identity()) {
        return RowContent::Empty;
    }
    let mut bytes = Vec::with_capacity(elems.len() * G::EMBED_BYTES);
    for e in elems {
        match decode_group_message(e) {
            Ok(chunk) if chunk.len() == G::EMBED_BYTES => bytes.extend_from_slice(&chunk),
            _ => return RowContent::Unrecoverable,
        }
    }
    unpad_message(&bytes).map_or(RowContent::Unrecoverable, RowContent::Single)
}

/// Random nonzero row contents for cover writes.
pub fn cover_xor_row<R: RngCore + CryptoRng>(rng: &mut R, row_bytes: usize) -> Vec<u8> {
    loop {
        let mut r = vec![0u8; row_bytes];
        rng.fill_bytes(&mut r);
        if r.iter().any(|&b| b != 0) {
            return r;
        }
    }
}

pub fn cover_fp_row<R: RngCore + CryptoRng>(rng: &mut R, data_cells: usize) -> Vec<Fp> {
    (0..coded_row_elems(data_cells)).map(|_| random_nonzero(rng)).collect()
}

pub fn cover_group_row<G: PrimeGroup, R: RngCore + CryptoRng>(rng: &mut R, chunks: usize) -> Vec<G> {
    (0..chunks)
        .map(|_| loop {
            let e = GroupPayload::<G>::random(rng);
            if !e.is_identity() {
                break e;
            }
        })
        .collect()
}
