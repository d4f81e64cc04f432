//! Wonder filters: derivation from signatures, inversion, overlay, and
//! model-specific shape mapping.
//!
//! A filter is a contiguous block of 0/1 bits placed inside a 2-D view of
//! the input. Overlaying replaces each block cell with an out-of-bound
//! value (negative for 0-bits, positive for 1-bits) far outside the
//! normalized data range; every other cell is transparent. The block's
//! target label, position, and bit pattern are all derived from the owner's
//! signature through four domain-separated SHA-256 hashes, so the filter is
//! a pure function of the signature.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::identity::Signature;
use crate::nn::Tensor;
use crate::scalar::Scalar;

/// Default out-of-bound magnitude used for filter cells.
pub const DEFAULT_OOB_MAGNITUDE: f64 = 2000.0;
/// Out-of-bound magnitudes at or below this bound are rejected.
pub const MIN_OOB_MAGNITUDE: f64 = 1000.0;

// ---------------------------------------------------------------------------
// HashSuite
// ---------------------------------------------------------------------------

/// Four domain-separated hashes over one 256-bit base hash:
/// `h_i(m) = SHA-256(tag_i ‖ m)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashSuite {
    base_hash_id: String,
    domain_tags: [String; 4],
}

impl HashSuite {
    pub fn new(base_hash_id: &str, domain_tags: [&str; 4]) -> Result<Self> {
        if base_hash_id != "sha256" {
            return Err(Error::InvalidHashSuite(format!(
                "unsupported base hash `{base_hash_id}`"
            )));
        }
        for (i, a) in domain_tags.iter().enumerate() {
            if a.is_empty() || a.chars().any(|c| c.is_whitespace()) {
                return Err(Error::InvalidHashSuite(format!(
                    "tag {i} must be non-empty and whitespace-free"
                )));
            }
            for b in &domain_tags[i + 1..] {
                if a == b {
                    return Err(Error::InvalidHashSuite(format!("duplicate tag `{a}`")));
                }
            }
        }
        Ok(Self {
            base_hash_id: base_hash_id.to_string(),
            domain_tags: domain_tags.map(str::to_string),
        })
    }

    pub fn base_hash_id(&self) -> &str {
        &self.base_hash_id
    }

    pub fn domain_tags(&self) -> [&str; 4] {
        [
            &self.domain_tags[0],
            &self.domain_tags[1],
            &self.domain_tags[2],
            &self.domain_tags[3],
        ]
    }

    fn digest(&self, which: usize, msg: &[u8]) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.domain_tags[which].as_bytes());
        h.update(msg);
        h.finalize().into()
    }

    /// Interpret `h_which(msg)` as a big-endian integer mod `modulus`.
    fn digest_mod(&self, which: usize, msg: &[u8], modulus: u64) -> u64 {
        debug_assert!(modulus > 0);
        let digest = self.digest(which, msg);
        let mut r: u128 = 0;
        for b in digest {
            r = (r * 256 + b as u128) % modulus as u128;
        }
        r as u64
    }

    /// First `nbits` of the stream `h_4(msg ‖ be32(0)), h_4(msg ‖ be32(1)), …`,
    /// consumed MSB-first.
    fn bit_stream(&self, msg: &[u8], nbits: usize) -> BitPattern {
        let nbytes = (nbits + 7) / 8;
        let mut raw = Vec::with_capacity(nbytes + 32);
        let mut counter: u32 = 0;
        while raw.len() < nbytes {
            let mut extended = Vec::with_capacity(msg.len() + 4);
            extended.extend_from_slice(msg);
            extended.extend_from_slice(&counter.to_be_bytes());
            raw.extend_from_slice(&self.digest(3, &extended));
            counter += 1;
        }
        raw.truncate(nbytes);
        let mut bits = BitPattern {
            bytes: raw,
            len: nbits,
        };
        bits.mask_tail();
        bits
    }
}

impl Default for HashSuite {
    fn default() -> Self {
        Self::new("sha256", ["wm-label", "wm-row", "wm-col", "wm-bits"]).expect("valid default")
    }
}

// ---------------------------------------------------------------------------
// BitPattern
// ---------------------------------------------------------------------------

/// A fixed-length bit string packed MSB-first; trailing pad bits are zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitPattern {
    bytes: Vec<u8>,
    len: usize,
}

impl BitPattern {
    pub fn from_bools(bits: &[bool]) -> Self {
        let mut bytes = vec![0u8; (bits.len() + 7) / 8];
        for (i, &b) in bits.iter().enumerate() {
            if b {
                bytes[i / 8] |= 0x80 >> (i % 8);
            }
        }
        Self {
            bytes,
            len: bits.len(),
        }
    }

    pub fn from_hex(s: &str, len: usize) -> Result<Self> {
        let bytes = hex::decode(s.trim())
            .map_err(|e| Error::Format(format!("bit pattern hex: {e}")))?;
        if bytes.len() != (len + 7) / 8 {
            return Err(Error::Format(format!(
                "bit pattern holds {} bytes, expected {} for {len} bits",
                bytes.len(),
                (len + 7) / 8
            )));
        }
        let mut out = Self { bytes, len };
        out.mask_tail();
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.bytes[i / 8] & (0x80 >> (i % 8)) != 0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.bytes)
    }

    pub fn count_ones(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    /// Bitwise complement of the meaningful bits.
    pub fn complement(&self) -> Self {
        let mut out = Self {
            bytes: self.bytes.iter().map(|b| !b).collect(),
            len: self.len,
        };
        out.mask_tail();
        out
    }

    fn mask_tail(&mut self) {
        let rem = self.len % 8;
        if rem != 0 {
            if let Some(last) = self.bytes.last_mut() {
                *last &= 0xFFu8 << (8 - rem);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// WonderFilter
// ---------------------------------------------------------------------------

/// The watermark: a bit block at a fixed position of the input view, a
/// target label, and the out-of-bound magnitude its bits map to.
///
/// `input_shape` is either `(C, T)` — viewed as a C×T 2-D grid — or
/// `(C, H, W)`, whose view is the H×W plane with the block replicated
/// across all C channels on overlay.
#[derive(Debug, Clone, PartialEq)]
pub struct WonderFilter {
    input_shape: Vec<usize>,
    block_rows: usize,
    block_cols: usize,
    row: usize,
    col: usize,
    bits: BitPattern,
    target_label: usize,
    oob_magnitude: f64,
}

/// H×W view of a 2-D or 3-D input shape.
pub fn view_dims(input_shape: &[usize]) -> Result<(usize, usize)> {
    match *input_shape {
        [rows, cols] => Ok((rows, cols)),
        [_, rows, cols] => Ok((rows, cols)),
        _ => Err(Error::ShapeMismatch {
            expected: "2-D (C, T) or 3-D (C, H, W) input shape".into(),
            got: format!("{input_shape:?}"),
        }),
    }
}

impl WonderFilter {
    /// Assemble a filter from explicit parts, enforcing the block-fit,
    /// bit-length, and magnitude invariants.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        input_shape: &[usize],
        block: (usize, usize),
        row: usize,
        col: usize,
        bits: BitPattern,
        target_label: usize,
        oob_magnitude: f64,
    ) -> Result<Self> {
        let (rows, cols) = view_dims(input_shape)?;
        let (block_rows, block_cols) = block;
        if block_rows == 0 || block_cols == 0 || block_rows > rows || block_cols > cols {
            return Err(Error::BlockTooLarge {
                block_rows,
                block_cols,
                rows,
                cols,
            });
        }
        if row > rows - block_rows || col > cols - block_cols {
            return Err(Error::BlockTooLarge {
                block_rows,
                block_cols,
                rows,
                cols,
            });
        }
        if bits.len() != block_rows * block_cols {
            return Err(Error::Format(format!(
                "bit pattern length {} does not match block {block_rows}x{block_cols}",
                bits.len()
            )));
        }
        if !(oob_magnitude > MIN_OOB_MAGNITUDE) {
            return Err(Error::InvalidOobMagnitude(oob_magnitude));
        }
        Ok(Self {
            input_shape: input_shape.to_vec(),
            block_rows,
            block_cols,
            row,
            col,
            bits,
            target_label,
            oob_magnitude,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn block(&self) -> (usize, usize) {
        (self.block_rows, self.block_cols)
    }

    pub fn position(&self) -> (usize, usize) {
        (self.row, self.col)
    }

    pub fn bits(&self) -> &BitPattern {
        &self.bits
    }

    pub fn target_label(&self) -> usize {
        self.target_label
    }

    pub fn oob_magnitude(&self) -> f64 {
        self.oob_magnitude
    }

    /// The filter with every block bit complemented; position, label, and
    /// magnitude are unchanged.
    pub fn inverted(&self) -> Self {
        Self {
            bits: self.bits.complement(),
            ..self.clone()
        }
    }

    /// Render the (possibly inverted) filter as a ternary mask over the
    /// 2-D view.
    pub fn to_mask(&self, use_inverted: bool) -> FilterMask {
        let (rows, cols) = view_dims(&self.input_shape).expect("validated at construction");
        let mut cells = vec![MaskCell::Transparent; rows * cols];
        for br in 0..self.block_rows {
            for bc in 0..self.block_cols {
                let mut bit = self.bits.get(br * self.block_cols + bc);
                if use_inverted {
                    bit = !bit;
                }
                let cell = if bit { MaskCell::OneBit } else { MaskCell::ZeroBit };
                cells[(self.row + br) * cols + (self.col + bc)] = cell;
            }
        }
        FilterMask {
            dims: vec![rows, cols],
            cells,
        }
    }

    /// Stable key-value record, used for files and digests.
    pub fn to_record_string(&self, suite: &HashSuite) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "input_shape: {}", dims_to_string(&self.input_shape));
        let _ = writeln!(s, "block: {}x{}", self.block_rows, self.block_cols);
        let _ = writeln!(s, "row: {}", self.row);
        let _ = writeln!(s, "col: {}", self.col);
        let _ = writeln!(s, "bits: {}", self.bits.to_hex());
        let _ = writeln!(s, "target_label: {}", self.target_label);
        let _ = writeln!(s, "oob_magnitude: {}", self.oob_magnitude);
        let _ = writeln!(
            s,
            "suite: {} {}",
            suite.base_hash_id(),
            suite.domain_tags().join(" ")
        );
        s
    }

    /// Parse a record produced by [`to_record_string`]. Returns the filter
    /// and its hash suite.
    pub fn from_record_str(text: &str) -> Result<(Self, HashSuite)> {
        let mut fields = std::collections::BTreeMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once(':')
                .ok_or_else(|| Error::Format(format!("filter record line `{line}`")))?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| -> Result<&String> {
            fields
                .get(k)
                .ok_or_else(|| Error::Format(format!("filter record missing `{k}`")))
        };
        let input_shape = dims_from_string(get("input_shape")?)?;
        let block = dims_from_string(get("block")?)?;
        if block.len() != 2 {
            return Err(Error::Format("block must be RxC".into()));
        }
        let row: usize = parse_num(get("row")?, "row")?;
        let col: usize = parse_num(get("col")?, "col")?;
        let target_label: usize = parse_num(get("target_label")?, "target_label")?;
        let oob: f64 = get("oob_magnitude")?
            .parse()
            .map_err(|_| Error::Format("oob_magnitude".into()))?;
        let bits = BitPattern::from_hex(get("bits")?, block[0] * block[1])?;
        let suite_parts: Vec<&str> = get("suite")?.split_whitespace().collect();
        if suite_parts.len() != 5 {
            return Err(Error::Format(
                "suite must be `<base> <tag1> <tag2> <tag3> <tag4>`".into(),
            ));
        }
        let suite = HashSuite::new(
            suite_parts[0],
            [
                suite_parts[1],
                suite_parts[2],
                suite_parts[3],
                suite_parts[4],
            ],
        )?;
        let filter = Self::new(
            &input_shape,
            (block[0], block[1]),
            row,
            col,
            bits,
            target_label,
            oob,
        )?;
        Ok((filter, suite))
    }

    pub fn write_record_file(&self, suite: &HashSuite, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_record_string(suite))?;
        Ok(())
    }

    pub fn from_record_file(path: &Path) -> Result<(Self, HashSuite)> {
        let text = std::fs::read_to_string(path)?;
        Self::from_record_str(&text)
    }

    /// SHA-256 of the canonical record, hex-encoded.
    pub fn digest(&self, suite: &HashSuite) -> String {
        let mut h = Sha256::new();
        h.update(self.to_record_string(suite).as_bytes());
        hex::encode(h.finalize())
    }
}

pub fn dims_to_string(dims: &[usize]) -> String {
    dims.iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

pub fn dims_from_string(s: &str) -> Result<Vec<usize>> {
    s.split('x')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("dimension list `{s}`")))
        })
        .collect()
}

fn parse_num(s: &str, field: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::Format(format!("field `{field}`: `{s}`")))
}

// ---------------------------------------------------------------------------
// Transform (signature -> filter)
// ---------------------------------------------------------------------------

/// Derive a wonder filter from a signature.
///
/// * target label: `h1(sig) mod num_labels`
/// * row: `h2(sig) mod (H − n_r + 1)`, col: `h3(sig) mod (W − n_c + 1)`
///   (modulo valid placements, so the block always fits)
/// * bits: first `n_r·n_c` bits of `h4(sig ‖ be32(counter))` for
///   counter = 0, 1, …
pub fn transform(
    sig: &Signature,
    input_shape: &[usize],
    num_labels: usize,
    block: (usize, usize),
    suite: &HashSuite,
    oob_magnitude: f64,
) -> Result<WonderFilter> {
    if num_labels == 0 {
        return Err(Error::InvalidLabelSpace);
    }
    let (rows, cols) = view_dims(input_shape)?;
    let (block_rows, block_cols) = block;
    if block_rows == 0 || block_cols == 0 || block_rows > rows || block_cols > cols {
        return Err(Error::BlockTooLarge {
            block_rows,
            block_cols,
            rows,
            cols,
        });
    }
    let msg = sig.bytes();
    let target_label = suite.digest_mod(0, msg, num_labels as u64) as usize;
    let row = suite.digest_mod(1, msg, (rows - block_rows + 1) as u64) as usize;
    let col = suite.digest_mod(2, msg, (cols - block_cols + 1) as u64) as usize;
    let bits = suite.bit_stream(msg, block_rows * block_cols);
    WonderFilter::new(
        input_shape,
        block,
        row,
        col,
        bits,
        target_label,
        oob_magnitude,
    )
}

/// Probability that a uniformly random (position, bit pattern, label) guess
/// reproduces a given filter:
/// `1 / (num_positions · 2^(n_r·n_c) · num_labels)`.
///
/// Underflows to zero for block areas beyond roughly a thousand bits.
pub fn guess_probability(
    input_shape: &[usize],
    block: (usize, usize),
    num_labels: usize,
) -> Result<f64> {
    if num_labels == 0 {
        return Err(Error::InvalidLabelSpace);
    }
    let (rows, cols) = view_dims(input_shape)?;
    let (block_rows, block_cols) = block;
    if block_rows == 0 || block_cols == 0 || block_rows > rows || block_cols > cols {
        return Err(Error::BlockTooLarge {
            block_rows,
            block_cols,
            rows,
            cols,
        });
    }
    let positions = ((rows - block_rows + 1) * (cols - block_cols + 1)) as f64;
    let area = (block_rows * block_cols) as i32;
    Ok(1.0 / (positions * num_labels as f64 * 2f64.powi(area)))
}

// ---------------------------------------------------------------------------
// FilterMask
// ---------------------------------------------------------------------------

/// Ternary cell of a [`FilterMask`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskCell {
    Transparent,
    ZeroBit,
    OneBit,
}

/// A ternary grid over input coordinates; 2-D masks broadcast across the
/// channel dimension of 3-D inputs on overlay.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterMask {
    dims: Vec<usize>,
    cells: Vec<MaskCell>,
}

impl FilterMask {
    pub fn transparent(dims: &[usize]) -> Self {
        Self {
            dims: dims.to_vec(),
            cells: vec![MaskCell::Transparent; dims.iter().product()],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn cells(&self) -> &[MaskCell] {
        &self.cells
    }

    pub fn non_transparent_count(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| !matches!(c, MaskCell::Transparent))
            .count()
    }
}

// ---------------------------------------------------------------------------
// Overlay
// ---------------------------------------------------------------------------

/// Overlay a filter on an input tensor, returning a fresh tensor. 0-bits map
/// to `−oob_magnitude`, 1-bits to `+oob_magnitude`; transparent cells keep
/// the original value. Pass `use_inverted` to overlay the inverse pattern.
pub fn overlay<F: Scalar>(
    x: &Tensor<F>,
    filter: &WonderFilter,
    use_inverted: bool,
) -> Result<Tensor<F>> {
    if x.shape() != filter.input_shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", filter.input_shape()),
            got: format!("{:?}", x.shape()),
        });
    }
    overlay_mask(x, &filter.to_mask(use_inverted), filter.oob_magnitude)
}

/// Overlay an arbitrary mask. The mask dims must equal the tensor shape, or
/// be the trailing H×W of a 3-D tensor (broadcast across channels).
pub fn overlay_mask<F: Scalar>(
    x: &Tensor<F>,
    mask: &FilterMask,
    oob_magnitude: f64,
) -> Result<Tensor<F>> {
    let neg = F::cast(-oob_magnitude);
    let pos = F::cast(oob_magnitude);
    let mut out = x.clone();
    let plane: usize = mask.dims.iter().product();
    let broadcast = x.shape().len() == 3 && mask.dims.len() == 2 && x.shape()[1..] == mask.dims[..];
    if !broadcast && x.shape() != mask.dims() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", mask.dims()),
            got: format!("{:?}", x.shape()),
        });
    }
    let channels = if broadcast { x.shape()[0] } else { 1 };
    let data = out.data_mut();
    for ch in 0..channels {
        let base = ch * plane;
        for (i, cell) in mask.cells.iter().enumerate() {
            match cell {
                MaskCell::Transparent => {}
                MaskCell::ZeroBit => data[base + i] = neg,
                MaskCell::OneBit => data[base + i] = pos,
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// ChannelMap / grid reshaping
// ---------------------------------------------------------------------------

/// Placement of logical channels onto a 2-D grid, used to reshape per-band
/// C-channel filters into (bands × grid) masks. The default maps the 32
/// DEAP electrodes onto the standard 9×9 scalp grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelMap {
    positions: Vec<(usize, usize)>,
    grid: (usize, usize),
}

/// The 32 DEAP electrode positions on a 9×9 grid, in DEAP channel order
/// (Fp1, AF3, F3, F7, FC5, FC1, C3, T7, CP5, CP1, P3, P7, PO3, O1, Oz, Pz,
/// Fp2, AF4, Fz, F4, F8, FC6, FC2, Cz, C4, T8, CP6, CP2, P4, P8, PO4, O2).
pub const DEAP_9X9_MAP: &str = include_str!("../data/channel_map_10_20.txt");

impl ChannelMap {
    pub fn new(positions: Vec<(usize, usize)>, grid: (usize, usize)) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for &(r, c) in &positions {
            if r >= grid.0 || c >= grid.1 {
                return Err(Error::InvalidChannelMap(format!(
                    "cell ({r}, {c}) outside {}x{} grid",
                    grid.0, grid.1
                )));
            }
            if !seen.insert((r, c)) {
                return Err(Error::InvalidChannelMap(format!(
                    "cell ({r}, {c}) assigned to two channels"
                )));
            }
        }
        Ok(Self { positions, grid })
    }

    /// Parse `channel row col` lines. Channels must form 0..N exactly once.
    pub fn parse(text: &str, grid: (usize, usize)) -> Result<Self> {
        let mut entries = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(Error::InvalidChannelMap(format!(
                    "expected `channel row col`, got `{line}`"
                )));
            }
            let ch: usize = parts[0]
                .parse()
                .map_err(|_| Error::InvalidChannelMap(format!("channel `{}`", parts[0])))?;
            let r: usize = parts[1]
                .parse()
                .map_err(|_| Error::InvalidChannelMap(format!("row `{}`", parts[1])))?;
            let c: usize = parts[2]
                .parse()
                .map_err(|_| Error::InvalidChannelMap(format!("col `{}`", parts[2])))?;
            entries.push((ch, (r, c)));
        }
        entries.sort_by_key(|&(ch, _)| ch);
        for (i, &(ch, _)) in entries.iter().enumerate() {
            if ch != i {
                return Err(Error::InvalidChannelMap(format!(
                    "channels must cover 0..{} exactly once",
                    entries.len()
                )));
            }
        }
        Self::new(entries.into_iter().map(|(_, p)| p).collect(), grid)
    }

    /// The shipped DEAP 10–20 layout on a 9×9 grid.
    pub fn deap_default() -> Self {
        Self::parse(DEAP_9X9_MAP, (9, 9)).expect("shipped map is valid")
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, channel: usize) -> (usize, usize) {
        self.positions[channel]
    }

    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }
}

/// Scatter a (bands × channels) filter onto a (bands × grid) mask: the
/// filter cell (b, c) lands at `map[c]` in band b; unmapped grid cells stay
/// transparent. Cell count is preserved.
pub fn map_to_grid(filter: &WonderFilter, map: &ChannelMap) -> Result<FilterMask> {
    if filter.input_shape().len() != 2 {
        return Err(Error::ShapeMismatch {
            expected: "2-D (bands, channels) filter".into(),
            got: format!("{:?}", filter.input_shape()),
        });
    }
    let bands = filter.input_shape()[0];
    let channels = filter.input_shape()[1];
    if channels != map.len() {
        return Err(Error::InvalidChannelMap(format!(
            "map covers {} channels, filter has {channels}",
            map.len()
        )));
    }
    let (grid_r, grid_c) = map.grid;
    let flat = filter.to_mask(false);
    let mut cells = vec![MaskCell::Transparent; bands * grid_r * grid_c];
    for b in 0..bands {
        for c in 0..channels {
            let cell = flat.cells[b * channels + c];
            if !matches!(cell, MaskCell::Transparent) {
                let (r, col) = map.positions[c];
                cells[b * grid_r * grid_c + r * grid_c + col] = cell;
            }
        }
    }
    Ok(FilterMask {
        dims: vec![bands, grid_r, grid_c],
        cells,
    })
}

/// Select and reorder the rows of a (C, T) tensor: output row i is input row
/// `selection[i]`. The selection must be injective into 0..C; it may pick a
/// subset (e.g. 28 of 32 channels).
pub fn reorder_channels<F: Scalar>(x: &Tensor<F>, selection: &[usize]) -> Result<Tensor<F>> {
    let shape = x.shape();
    if shape.len() != 2 {
        return Err(Error::ShapeMismatch {
            expected: "(C, T) tensor".into(),
            got: format!("{shape:?}"),
        });
    }
    let (c, t) = (shape[0], shape[1]);
    let mut seen = vec![false; c];
    for &idx in selection {
        if idx >= c {
            return Err(Error::InvalidPermutation(format!(
                "index {idx} out of range 0..{c}"
            )));
        }
        if seen[idx] {
            return Err(Error::InvalidPermutation(format!("index {idx} repeated")));
        }
        seen[idx] = true;
    }
    let mut data = Vec::with_capacity(selection.len() * t);
    for &idx in selection {
        data.extend_from_slice(&x.data()[idx * t..(idx + 1) * t]);
    }
    Tensor::from_vec(&[selection.len(), t], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::SCHEME_ED25519;

    fn sig(bytes: Vec<u8>) -> Signature {
        Signature::from_bytes(bytes, SCHEME_ED25519)
    }

    fn small_filter(bits: &[bool]) -> WonderFilter {
        WonderFilter::new(
            &[4, 4],
            (2, 2),
            1,
            1,
            BitPattern::from_bools(bits),
            1,
            2000.0,
        )
        .unwrap()
    }

    #[test]
    fn transform_is_deterministic() {
        let suite = HashSuite::default();
        let s = sig(vec![0xAB; 64]);
        let a = transform(&s, &[8, 64], 2, (4, 32), &suite, 2000.0).unwrap();
        let b = transform(&s, &[8, 64], 2, (4, 32), &suite, 2000.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn transform_single_label_forces_zero() {
        let suite = HashSuite::default();
        for fill in [0u8, 1, 0x77, 0xFF] {
            let f = transform(&sig(vec![fill; 64]), &[4, 4], 1, (2, 2), &suite, 2000.0).unwrap();
            assert_eq!(f.target_label(), 0);
        }
    }

    #[test]
    fn transform_single_position_forces_origin() {
        let suite = HashSuite::default();
        let f = transform(&sig(vec![0x3C; 64]), &[4, 32], 2, (4, 32), &suite, 2000.0).unwrap();
        assert_eq!(f.position(), (0, 0));
    }

    #[test]
    fn transform_rejects_oversized_block() {
        let suite = HashSuite::default();
        let err = transform(&sig(vec![0; 64]), &[4, 4], 2, (5, 2), &suite, 2000.0).unwrap_err();
        assert!(matches!(err, Error::BlockTooLarge { .. }));
    }

    #[test]
    fn transform_rejects_empty_label_space() {
        let suite = HashSuite::default();
        let err = transform(&sig(vec![0; 64]), &[4, 4], 0, (2, 2), &suite, 2000.0).unwrap_err();
        assert!(matches!(err, Error::InvalidLabelSpace));
    }

    #[test]
    fn oob_magnitude_must_exceed_1000() {
        let suite = HashSuite::default();
        assert!(matches!(
            transform(&sig(vec![0; 64]), &[4, 4], 2, (2, 2), &suite, 1000.0),
            Err(Error::InvalidOobMagnitude(_))
        ));
        assert!(transform(&sig(vec![0; 64]), &[4, 4], 2, (2, 2), &suite, 1001.0).is_ok());
    }

    #[test]
    fn inversion_complements_bits_only() {
        let f = small_filter(&[false, true, true, false]);
        let inv = f.inverted();
        assert_eq!(inv.position(), f.position());
        assert_eq!(inv.target_label(), f.target_label());
        let got: Vec<bool> = (0..4).map(|i| inv.bits().get(i)).collect();
        assert_eq!(got, vec![true, false, false, true]);
    }

    #[test]
    fn inversion_is_an_involution() {
        let f = small_filter(&[false, false, false, false]);
        let inv = f.inverted();
        assert!((0..4).all(|i| inv.bits().get(i)));
        assert_eq!(f.inverted().inverted(), f);
    }

    #[test]
    fn overlay_writes_oob_values_row_major() {
        let f = WonderFilter::new(
            &[2, 2],
            (2, 2),
            0,
            0,
            BitPattern::from_bools(&[false, true, false, true]),
            0,
            2000.0,
        )
        .unwrap();
        let x = Tensor::<f32>::zeros(&[2, 2]);
        let y = overlay(&x, &f, false).unwrap();
        assert_eq!(y.data(), &[-2000.0, 2000.0, -2000.0, 2000.0]);
    }

    #[test]
    fn overlay_single_one_bit() {
        let f = WonderFilter::new(
            &[3, 3],
            (1, 1),
            0,
            0,
            BitPattern::from_bools(&[true]),
            0,
            2000.0,
        )
        .unwrap();
        let x = Tensor::<f64>::from_vec(&[3, 3], vec![0.5; 9]).unwrap();
        let y = overlay(&x, &f, false).unwrap();
        assert_eq!(y.data()[0], 2000.0);
        assert!(y.data()[1..].iter().all(|&v| v == 0.5));
    }

    #[test]
    fn overlay_transparent_mask_is_identity() {
        let mask = FilterMask::transparent(&[3, 4]);
        let x = Tensor::<f32>::from_vec(&[3, 4], (0..12).map(|v| v as f32).collect()).unwrap();
        let y = overlay_mask(&x, &mask, 2000.0).unwrap();
        assert_eq!(x.data(), y.data());
    }

    #[test]
    fn overlay_never_mutates_input() {
        let f = small_filter(&[true, true, false, false]);
        let x = Tensor::<f32>::from_vec(&[4, 4], vec![0.25; 16]).unwrap();
        let _ = overlay(&x, &f, false).unwrap();
        assert!(x.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn overlay_broadcasts_2d_mask_over_channels() {
        let f = WonderFilter::new(
            &[2, 2, 2],
            (1, 1),
            1,
            1,
            BitPattern::from_bools(&[true]),
            0,
            2000.0,
        )
        .unwrap();
        let x = Tensor::<f32>::zeros(&[2, 2, 2]);
        let y = overlay(&x, &f, false).unwrap();
        // cell (1,1) of both channels
        assert_eq!(y.data()[3], 2000.0);
        assert_eq!(y.data()[7], 2000.0);
        assert_eq!(y.data().iter().filter(|&&v| v != 0.0).count(), 2);
    }

    #[test]
    fn overlay_shape_mismatch() {
        let f = small_filter(&[true, true, false, false]);
        let x = Tensor::<f32>::zeros(&[5, 5]);
        assert!(matches!(
            overlay(&x, &f, false),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn normal_and_inverted_overlays_differ_exactly_on_block() {
        let suite = HashSuite::default();
        let f = transform(&sig(vec![0x42; 64]), &[8, 16], 2, (3, 5), &suite, 2000.0).unwrap();
        let x = Tensor::<f32>::from_vec(&[8, 16], (0..128).map(|v| v as f32 / 128.0).collect())
            .unwrap();
        let a = overlay(&x, &f, false).unwrap();
        let b = overlay(&x, &f, true).unwrap();
        let diff_count = a
            .data()
            .iter()
            .zip(b.data())
            .filter(|(p, q)| p != q)
            .count();
        assert_eq!(diff_count, 15);
        for (i, (&p, &q)) in a.data().iter().zip(b.data()).enumerate() {
            if p != q {
                let (r, c) = (i / 16, i % 16);
                let (fr, fc) = f.position();
                assert!(r >= fr && r < fr + 3 && c >= fc && c < fc + 5);
                assert_eq!(p, -q);
                assert_eq!(p.abs(), 2000.0);
            }
        }
    }

    #[test]
    fn map_to_grid_traces_single_cell() {
        let map = ChannelMap::new(vec![(2, 3), (0, 0)], (4, 4)).unwrap();
        let f = WonderFilter::new(
            &[1, 2],
            (1, 1),
            0,
            0,
            BitPattern::from_bools(&[true]),
            0,
            2000.0,
        )
        .unwrap();
        let mask = map_to_grid(&f, &map).unwrap();
        assert_eq!(mask.dims(), &[1, 4, 4]);
        assert_eq!(mask.non_transparent_count(), 1);
        assert_eq!(mask.cells()[2 * 4 + 3], MaskCell::OneBit);
    }

    #[test]
    fn map_to_grid_preserves_cell_count() {
        let suite = HashSuite::default();
        let map = ChannelMap::deap_default();
        for fill in [0u8, 9, 0xAA, 0xF1] {
            let f =
                transform(&sig(vec![fill; 64]), &[4, 32], 2, (2, 7), &suite, 2000.0).unwrap();
            let mask = map_to_grid(&f, &map).unwrap();
            assert_eq!(mask.dims(), &[4, 9, 9]);
            assert_eq!(
                mask.non_transparent_count(),
                f.to_mask(false).non_transparent_count()
            );
        }
    }

    #[test]
    fn channel_map_rejects_collisions() {
        assert!(matches!(
            ChannelMap::new(vec![(1, 1), (1, 1)], (3, 3)),
            Err(Error::InvalidChannelMap(_))
        ));
        assert!(matches!(
            ChannelMap::new(vec![(3, 0)], (3, 3)),
            Err(Error::InvalidChannelMap(_))
        ));
    }

    #[test]
    fn deap_default_map_is_injective_and_complete() {
        let map = ChannelMap::deap_default();
        assert_eq!(map.len(), 32);
        assert_eq!(map.grid(), (9, 9));
    }

    #[test]
    fn reorder_identity_and_reverse() {
        let x = Tensor::<f32>::from_vec(&[3, 2], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let id = reorder_channels(&x, &[0, 1, 2]).unwrap();
        assert_eq!(id.data(), x.data());
        let rev = reorder_channels(&x, &[2, 1, 0]).unwrap();
        assert_eq!(rev.data(), &[5., 6., 3., 4., 1., 2.]);
    }

    #[test]
    fn reorder_roundtrip_through_inverse() {
        let x = Tensor::<f64>::from_vec(&[4, 3], (0..12).map(f64::from).collect()).unwrap();
        let perm = [2usize, 0, 3, 1];
        let mut inverse = [0usize; 4];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        let y = reorder_channels(&x, &perm).unwrap();
        let z = reorder_channels(&y, &inverse).unwrap();
        assert_eq!(z.data(), x.data());
    }

    #[test]
    fn reorder_subset_selection() {
        let x = Tensor::<f32>::from_vec(&[4, 2], (0..8).map(|v| v as f32).collect()).unwrap();
        let y = reorder_channels(&x, &[3, 1]).unwrap();
        assert_eq!(y.shape(), &[2, 2]);
        assert_eq!(y.data(), &[6., 7., 2., 3.]);
    }

    #[test]
    fn reorder_rejects_bad_indices() {
        let x = Tensor::<f32>::zeros(&[3, 2]);
        assert!(matches!(
            reorder_channels(&x, &[0, 3]),
            Err(Error::InvalidPermutation(_))
        ));
        assert!(matches!(
            reorder_channels(&x, &[1, 1]),
            Err(Error::InvalidPermutation(_))
        ));
    }

    #[test]
    fn guess_probability_small_cases() {
        assert_eq!(guess_probability(&[1, 1], (1, 1), 1).unwrap(), 0.5);
        assert_eq!(
            guess_probability(&[4, 4], (2, 2), 2).unwrap(),
            1.0 / 288.0
        );
    }

    #[test]
    fn guess_probability_halves_with_labels() {
        let p2 = guess_probability(&[6, 6], (2, 3), 2).unwrap();
        let p4 = guess_probability(&[6, 6], (2, 3), 4).unwrap();
        assert_eq!(p4 * 2.0, p2);
    }

    #[test]
    fn record_round_trip() {
        let suite = HashSuite::default();
        let f = transform(&sig(vec![0x11; 64]), &[8, 64], 2, (4, 32), &suite, 2000.0).unwrap();
        let text = f.to_record_string(&suite);
        let (parsed, parsed_suite) = WonderFilter::from_record_str(&text).unwrap();
        assert_eq!(parsed, f);
        assert_eq!(parsed_suite, suite);
        assert_eq!(parsed.to_record_string(&parsed_suite), text);
    }

    #[test]
    fn suite_rejects_duplicate_tags() {
        assert!(matches!(
            HashSuite::new("sha256", ["a", "b", "a", "c"]),
            Err(Error::InvalidHashSuite(_))
        ));
        assert!(matches!(
            HashSuite::new("md5", ["a", "b", "c", "d"]),
            Err(Error::InvalidHashSuite(_))
        ));
    }

    #[test]
    fn bit_pattern_hex_round_trip() {
        let bits = BitPattern::from_bools(&[true, false, true, true, false]);
        let hex = bits.to_hex();
        let back = BitPattern::from_hex(&hex, 5).unwrap();
        assert_eq!(back, bits);
    }
}
