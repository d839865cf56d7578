//! Patch frame wire format and communication-volume accounting.
//!
//! All integers are big-endian. A frame is a fixed 33-byte header, an
//! optional index block, and the RGB payload:
//!
//! | offset | size | field                                            |
//! |-------:|-----:|--------------------------------------------------|
//! |      0 |    4 | magic `MVPF`                                     |
//! |      4 |    1 | version, currently 1                             |
//! |      5 |    1 | mode: 0 random, 1 semantic                       |
//! |      6 |    1 | flags: bit 0 set when the index block is a bitmap|
//! |      7 |    2 | camera id                                        |
//! |      9 |    4 | frame id                                         |
//! |     13 |    2 | image width `W`                                  |
//! |     15 |    2 | image height `H`                                 |
//! |     17 |    2 | patch size `p`                                   |
//! |     19 |    2 | masking ratio in thousandths                     |
//! |     21 |    8 | sampling seed                                    |
//! |     29 |    4 | body length in bytes (index block + payload)     |
//!
//! Random-mode frames carry no index block: the receiver regenerates the kept
//! set from the seed. Semantic-mode frames list the kept patches either as
//! `S` indices of `ceil(log2 N)` bits or as an `N`-bit bitmap, whichever is
//! shorter (ties go to the index list), MSB first and zero-padded to a whole
//! byte. The payload holds `p * p * 3` bytes per kept patch in ascending
//! patch order.

use std::io::{self, Read, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::imageio::RasterImage;
use crate::masking::{sample_random, MaskMode, MaskPlan};
use crate::patch_grid::{make_grid, unmasked_count, MaskingRatio, PatchGrid};

pub const MAGIC: [u8; 4] = *b"MVPF";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 33;
pub const BITS_PER_PIXEL: u64 = 24;

const FLAG_BITMAP: u8 = 0b0000_0001;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndexEncoding {
    /// No index block (random mode).
    Seed,
    Packed,
    Bitmap,
}

/// Index block encoding and size for a frame with these parameters.
pub fn index_layout(grid: &PatchGrid, mode: MaskMode, kept: usize) -> (IndexEncoding, usize) {
    match mode {
        MaskMode::Random => (IndexEncoding::Seed, 0),
        MaskMode::Semantic => {
            let packed = kept as u64 * grid.index_bits() as u64;
            let bitmap = grid.patch_count() as u64;
            if bitmap < packed {
                (IndexEncoding::Bitmap, bitmap.div_ceil(8) as usize)
            } else {
                (IndexEncoding::Packed, packed.div_ceil(8) as usize)
            }
        }
    }
}

pub fn payload_len(grid: &PatchGrid, kept: usize) -> usize {
    let p = grid.patch_size() as usize;
    kept * p * p * 3
}

/// Exact byte length of the encoded frame for `plan`.
pub fn frame_len(plan: &MaskPlan) -> usize {
    let (_, index) = index_layout(plan.grid(), plan.mode(), plan.kept_count());
    HEADER_LEN + index + payload_len(plan.grid(), plan.kept_count())
}

pub fn encode(img: &RasterImage, plan: &MaskPlan, camera_id: u16, frame_id: u32) -> Result<Vec<u8>> {
    let grid = plan.grid();
    grid.matches(img)?;
    if img.channels() != 3 {
        return Err(Error::Channel {
            expected: 3,
            found: img.channels(),
        });
    }
    let dims = [grid.image_width(), grid.image_height(), grid.patch_size()];
    if dims.iter().any(|&d| d > u16::MAX as u32) {
        return Err(Error::Dimension(format!(
            "grid {}x{} p={} does not fit the 16-bit header fields",
            dims[0], dims[1], dims[2]
        )));
    }

    let (encoding, index_len) = index_layout(grid, plan.mode(), plan.kept_count());
    let body = index_len + payload_len(grid, plan.kept_count());
    let mut out = Vec::with_capacity(HEADER_LEN + body);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(match plan.mode() {
        MaskMode::Random => 0,
        MaskMode::Semantic => 1,
    });
    out.push(if encoding == IndexEncoding::Bitmap { FLAG_BITMAP } else { 0 });
    out.extend_from_slice(&camera_id.to_be_bytes());
    out.extend_from_slice(&frame_id.to_be_bytes());
    for d in dims {
        out.extend_from_slice(&(d as u16).to_be_bytes());
    }
    out.extend_from_slice(&plan.ratio().milli().to_be_bytes());
    out.extend_from_slice(&plan.seed().to_be_bytes());
    out.extend_from_slice(&(body as u32).to_be_bytes());
    debug_assert_eq!(out.len(), HEADER_LEN);

    match encoding {
        IndexEncoding::Seed => {}
        IndexEncoding::Packed => {
            let mut bits = BitWriter::new(&mut out);
            for &i in plan.unmasked() {
                bits.put(i as u64, grid.index_bits());
            }
            bits.finish();
        }
        IndexEncoding::Bitmap => {
            let mut bits = BitWriter::new(&mut out);
            for kept in plan.kept_flags() {
                bits.put(kept as u64, 1);
            }
            bits.finish();
        }
    }

    for &i in plan.unmasked() {
        out.extend_from_slice(&grid.patch_pixels(i as usize, img)?);
    }
    debug_assert_eq!(out.len(), HEADER_LEN + body);
    Ok(out)
}

/// Receiver-side view: kept patches in place, everything else unknown.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseImage {
    image: RasterImage,
    known: Vec<bool>,
}

impl SparseImage {
    /// Copies the kept patches of `full` out of a complete image.
    pub fn from_plan(full: &RasterImage, plan: &MaskPlan) -> Result<Self> {
        let image = crate::masking::apply_mask(full, plan)?;
        Ok(Self {
            known: known_pixels(plan),
            image,
        })
    }

    /// Rebuilds the sparse view from a zero-filled image and its plan.
    pub fn from_parts(image: RasterImage, plan: &MaskPlan) -> Result<Self> {
        plan.grid().matches(&image)?;
        Ok(Self {
            known: known_pixels(plan),
            image,
        })
    }

    /// Pixel samples; unknown pixels read as zero.
    pub fn image(&self) -> &RasterImage {
        &self.image
    }

    pub fn is_known(&self, x: u32, y: u32) -> bool {
        self.known[y as usize * self.image.width() as usize + x as usize]
    }

    pub fn known_count(&self) -> usize {
        self.known.iter().filter(|&&k| k).count()
    }
}

fn known_pixels(plan: &MaskPlan) -> Vec<bool> {
    let grid = plan.grid();
    let flags = plan.kept_flags();
    let (w, h) = (grid.image_width(), grid.image_height());
    let mut known = vec![false; w as usize * h as usize];
    for y in 0..h {
        for x in 0..w {
            if let Some(i) = grid.patch_at(x, y) {
                known[y as usize * w as usize + x as usize] = flags[i];
            }
        }
    }
    known
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodedFrame {
    pub camera_id: u16,
    pub frame_id: u32,
    pub index_encoding: IndexEncoding,
    pub plan: MaskPlan,
    pub sparse: SparseImage,
}

pub fn decode(bytes: &[u8]) -> Result<DecodedFrame> {
    if bytes.len() < 5 {
        if !MAGIC.starts_with(&bytes[..bytes.len().min(4)]) {
            return Err(Error::Version("bad magic".into()));
        }
        return Err(Error::Truncation {
            missing: HEADER_LEN - bytes.len(),
        });
    }
    if bytes[..4] != MAGIC {
        return Err(Error::Version("bad magic".into()));
    }
    if bytes[4] != VERSION {
        return Err(Error::Version(format!("frame version {} (expected {VERSION})", bytes[4])));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncation {
            missing: HEADER_LEN - bytes.len(),
        });
    }
    let u16_at = |at: usize| u16::from_be_bytes([bytes[at], bytes[at + 1]]);
    let u32_at = |at: usize| u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap());

    let mode = match bytes[5] {
        0 => MaskMode::Random,
        1 => MaskMode::Semantic,
        m => return Err(Error::Frame(format!("unknown mode byte {m}"))),
    };
    let flags = bytes[6];
    if flags & !FLAG_BITMAP != 0 {
        return Err(Error::Frame(format!("reserved flag bits set: {flags:#04x}")));
    }
    let camera_id = u16_at(7);
    let frame_id = u32_at(9);
    let grid = make_grid(u16_at(13) as u32, u16_at(15) as u32, u16_at(17) as u32)
        .map_err(|e| Error::Frame(format!("bad grid: {e}")))?;
    let ratio = MaskingRatio::from_milli(u16_at(19)).map_err(|e| Error::Frame(e.to_string()))?;
    let seed = u64::from_be_bytes(bytes[21..29].try_into().unwrap());
    let body_len = u32_at(29) as usize;

    let kept = unmasked_count(&grid, ratio);
    let (encoding, index_len) = index_layout(&grid, mode, kept);
    let wants_bitmap = encoding == IndexEncoding::Bitmap;
    if (flags & FLAG_BITMAP != 0) != wants_bitmap {
        return Err(Error::Frame("index encoding flag disagrees with frame parameters".into()));
    }
    let expected_body = index_len + payload_len(&grid, kept);
    if body_len != expected_body {
        return Err(Error::Frame(format!(
            "body length {body_len} does not match the {expected_body} bytes implied by the header"
        )));
    }
    let available = bytes.len() - HEADER_LEN;
    if available < body_len {
        return Err(Error::Truncation {
            missing: body_len - available,
        });
    }
    if available > body_len {
        return Err(Error::Frame(format!("{} trailing byte(s)", available - body_len)));
    }

    let index_block = &bytes[HEADER_LEN..HEADER_LEN + index_len];
    let plan = match encoding {
        IndexEncoding::Seed => sample_random(&grid, ratio, seed)?,
        IndexEncoding::Packed => {
            let mut bits = BitReader::new(index_block);
            let indices = (0..kept).map(|_| bits.take(grid.index_bits()) as u32).collect();
            bits.check_padding()?;
            MaskPlan::new(grid, mode, ratio, None, seed, indices)?
        }
        IndexEncoding::Bitmap => {
            let mut bits = BitReader::new(index_block);
            let indices = (0..grid.patch_count() as u32).filter(|_| bits.take(1) == 1).collect();
            bits.check_padding()?;
            MaskPlan::new(grid, mode, ratio, None, seed, indices)?
        }
    };

    let mut image = RasterImage::new(
        grid.image_width(),
        grid.image_height(),
        3,
        vec![0; grid.image_width() as usize * grid.image_height() as usize * 3],
    )?;
    let block = payload_len(&grid, 1);
    let payload = &bytes[HEADER_LEN + index_len..];
    for (k, &i) in plan.unmasked().iter().enumerate() {
        grid.put_patch(i as usize, &mut image, &payload[k * block..(k + 1) * block])?;
    }
    let sparse = SparseImage::from_parts(image, &plan)?;
    Ok(DecodedFrame {
        camera_id,
        frame_id,
        index_encoding: encoding,
        plan,
        sparse,
    })
}

struct BitWriter<'a> {
    out: &'a mut Vec<u8>,
    acc: u64,
    used: u32,
}

impl<'a> BitWriter<'a> {
    fn new(out: &'a mut Vec<u8>) -> Self {
        Self { out, acc: 0, used: 0 }
    }

    fn put(&mut self, value: u64, width: u32) {
        for bit in (0..width).rev() {
            self.acc = (self.acc << 1) | ((value >> bit) & 1);
            self.used += 1;
            if self.used == 8 {
                self.out.push(self.acc as u8);
                self.acc = 0;
                self.used = 0;
            }
        }
    }

    fn finish(mut self) {
        if self.used > 0 {
            self.out.push((self.acc << (8 - self.used)) as u8);
            self.used = 0;
        }
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, width: u32) -> u64 {
        let mut v = 0;
        for _ in 0..width {
            let bit = (self.bytes[self.pos / 8] >> (7 - self.pos % 8)) & 1;
            v = (v << 1) | bit as u64;
            self.pos += 1;
        }
        v
    }

    fn check_padding(&mut self) -> Result<()> {
        while self.pos < self.bytes.len() * 8 {
            if self.take(1) != 0 {
                return Err(Error::Frame("nonzero padding in index block".into()));
            }
        }
        Ok(())
    }
}

/// Writes one frame as a record: 4-byte big-endian length, then the frame.
pub fn write_record<W: Write>(mut out: W, frame: &[u8]) -> io::Result<()> {
    out.write_all(&(frame.len() as u32).to_be_bytes())?;
    out.write_all(frame)
}

/// Reads the next record, `None` at a clean end of stream.
pub fn read_record<R: Read>(mut input: R) -> Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match input.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(Error::Truncation { missing: 4 - got }),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::io("<record stream>", e)),
        }
    }
    let len = u32::from_be_bytes(len) as usize;
    let mut frame = Vec::with_capacity(len);
    input
        .take(len as u64)
        .read_to_end(&mut frame)
        .map_err(|e| Error::io("<record stream>", e))?;
    if frame.len() < len {
        return Err(Error::Truncation {
            missing: len - frame.len(),
        });
    }
    Ok(Some(frame))
}

/// Splits a whole container into frames.
pub fn read_records(mut bytes: &[u8]) -> Result<Vec<Vec<u8>>> {
    let mut frames = Vec::new();
    while let Some(frame) = read_record(&mut bytes)? {
        frames.push(frame);
    }
    Ok(frames)
}

/// Which parts of a frame count toward communication volume.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeaderPolicy {
    /// Header, index block and payload.
    Include,
    /// Pixel payload only.
    PayloadOnly,
}

impl std::str::FromStr for HeaderPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "include" => Ok(HeaderPolicy::Include),
            "payload-only" => Ok(HeaderPolicy::PayloadOnly),
            other => Err(Error::Config(format!("unknown header policy '{other}'"))),
        }
    }
}

/// Exact bit counts for a set of camera frames.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CommReport {
    pub cameras: usize,
    pub payload_bits: u64,
    pub header_bits: u64,
    pub index_bits: u64,
    /// Bits counted under the chosen policy.
    pub total_bits: u64,
    /// Uncompressed source frames at `source_scale` times the grid image size.
    pub baseline_full_bits: u64,
}

impl CommReport {
    /// `baseline / total`, absent when nothing was sent.
    pub fn reduction_factor(&self) -> Option<f64> {
        (self.total_bits > 0).then(|| self.baseline_full_bits as f64 / self.total_bits as f64)
    }

    pub fn total_megabits(&self) -> f64 {
        self.total_bits as f64 / 1e6
    }

    pub fn baseline_megabits(&self) -> f64 {
        self.baseline_full_bits as f64 / 1e6
    }

    pub fn merge(&self, other: &CommReport) -> CommReport {
        CommReport {
            cameras: self.cameras + other.cameras,
            payload_bits: self.payload_bits + other.payload_bits,
            header_bits: self.header_bits + other.header_bits,
            index_bits: self.index_bits + other.index_bits,
            total_bits: self.total_bits + other.total_bits,
            baseline_full_bits: self.baseline_full_bits + other.baseline_full_bits,
        }
    }
}

/// Bit accounting for one frame per plan. `source_scale` relates the grid
/// image to the captured frame (2 when frames are halved before masking).
/// An empty plan list yields an all-zero report.
pub fn comm_report(plans: &[MaskPlan], policy: HeaderPolicy, source_scale: u32) -> CommReport {
    plans.iter().fold(CommReport::default(), |acc, plan| {
        let grid = plan.grid();
        let payload = payload_len(grid, plan.kept_count()) as u64 * 8;
        let (_, index) = index_layout(grid, plan.mode(), plan.kept_count());
        let header = HEADER_LEN as u64 * 8;
        let index = index as u64 * 8;
        let total = match policy {
            HeaderPolicy::Include => header + index + payload,
            HeaderPolicy::PayloadOnly => payload,
        };
        let source_w = grid.image_width() as u64 * source_scale as u64;
        let source_h = grid.image_height() as u64 * source_scale as u64;
        acc.merge(&CommReport {
            cameras: 1,
            payload_bits: payload,
            header_bits: header,
            index_bits: index,
            total_bits: total,
            baseline_full_bits: source_w * source_h * BITS_PER_PIXEL,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masking::{sample_unmasked, SelectionDistribution};
    use crate::rng::MaskRng;
    use proptest::prelude::*;

    fn noise(w: u32, h: u32, seed: u64) -> RasterImage {
        let mut rng = MaskRng::new(seed);
        let data = (0..w * h * 3).map(|_| rng.below(256) as u8).collect();
        RasterImage::new(w, h, 3, data).unwrap()
    }

    fn semantic(grid: &PatchGrid, r: MaskingRatio, seed: u64) -> MaskPlan {
        let n = grid.patch_count();
        let weights: Vec<f64> = (0..n).map(|i| (i % 7 + 1) as f64).collect();
        let total: f64 = weights.iter().sum();
        let dist = SelectionDistribution::from_probs(weights.iter().map(|w| w / total).collect(), 0.15)
            .unwrap();
        sample_unmasked(&dist, grid, r, seed).unwrap()
    }

    fn r(x: f64) -> MaskingRatio {
        MaskingRatio::new(x).unwrap()
    }

    #[test]
    fn table_one_payload_size() {
        let grid = make_grid(640, 360, 20).unwrap();
        let plan = semantic(&grid, r(0.7), 1);
        let img = noise(640, 360, 2);
        let frame = encode(&img, &plan, 0, 0).unwrap();
        assert_eq!(payload_len(&grid, plan.kept_count()), 207_600);
        // 576 bitmap bits beat 173 * 10 packed bits
        assert_eq!(frame.len(), HEADER_LEN + 72 + 207_600);
        assert_eq!(frame[6], FLAG_BITMAP);
        let report = comm_report(&[plan], HeaderPolicy::PayloadOnly, 2);
        assert_eq!(report.payload_bits, 1_660_800);
        assert_eq!(report.total_bits, 1_660_800);
    }

    #[test]
    fn fully_masked_frame_is_header_only() {
        let grid = make_grid(40, 40, 20).unwrap();
        let img = noise(40, 40, 0);
        for plan in [sample_random(&grid, r(1.0), 3).unwrap(), semantic(&grid, r(1.0), 3)] {
            let frame = encode(&img, &plan, 1, 2).unwrap();
            assert_eq!(frame.len(), HEADER_LEN);
            let back = decode(&frame).unwrap();
            assert_eq!(back.plan.kept_count(), 0);
            assert_eq!(back.sparse.known_count(), 0);
        }
    }

    #[test]
    fn random_mode_omits_index_block() {
        let grid = make_grid(640, 360, 20).unwrap();
        let img = noise(640, 360, 9);
        let random = encode(&img, &sample_random(&grid, r(0.7), 5).unwrap(), 0, 0).unwrap();
        let sem = encode(&img, &semantic(&grid, r(0.7), 5), 0, 0).unwrap();
        assert_eq!(random.len(), HEADER_LEN + 207_600);
        assert_eq!(sem.len() - random.len(), 72);
    }

    #[test]
    fn packed_indices_when_cheaper() {
        // N = 576, r = 0.99 -> S = 6, 60 bits < 576
        let grid = make_grid(640, 360, 20).unwrap();
        let plan = semantic(&grid, r(0.99), 5);
        assert_eq!(plan.kept_count(), 6);
        assert_eq!(index_layout(&grid, MaskMode::Semantic, 6), (IndexEncoding::Packed, 8));
        let frame = encode(&noise(640, 360, 1), &plan, 0, 0).unwrap();
        let back = decode(&frame).unwrap();
        assert_eq!(back.index_encoding, IndexEncoding::Packed);
        assert!(back.plan.same_selection(&plan));
    }

    #[test]
    fn truncation_reports_missing_bytes() {
        let grid = make_grid(40, 20, 20).unwrap();
        let plan = sample_random(&grid, r(0.0), 0).unwrap();
        let frame = encode(&noise(40, 20, 0), &plan, 0, 0).unwrap();
        let cut = &frame[..frame.len() - 17];
        assert!(matches!(decode(cut), Err(Error::Truncation { missing: 17 })));
        assert!(matches!(decode(&frame[..10]), Err(Error::Truncation { missing: 23 })));
        let mut bad = frame.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Version(_))));
        let mut bad = frame.clone();
        bad[4] = 2;
        assert!(matches!(decode(&bad), Err(Error::Version(_))));
        let mut long = frame;
        long.push(0);
        assert!(matches!(decode(&long), Err(Error::Frame(_))));
    }

    #[test]
    fn encode_rejects_wrong_inputs() {
        let grid = make_grid(40, 20, 20).unwrap();
        let plan = sample_random(&grid, r(0.5), 0).unwrap();
        assert!(matches!(
            encode(&noise(20, 40, 0), &plan, 0, 0),
            Err(Error::DimensionMismatch(_))
        ));
        let gray = RasterImage::filled(40, 20, &[3]).unwrap();
        assert!(matches!(encode(&gray, &plan, 0, 0), Err(Error::Channel { .. })));
    }

    #[test]
    fn frame_len_matches_encoder() {
        let grid = make_grid(100, 60, 10).unwrap();
        let img = noise(100, 60, 4);
        for milli in (0..=1000).step_by(50) {
            let ratio = MaskingRatio::from_milli(milli).unwrap();
            for plan in [sample_random(&grid, ratio, 1).unwrap(), semantic(&grid, ratio, 1)] {
                let frame = encode(&img, &plan, 0, 0).unwrap();
                assert_eq!(frame.len(), frame_len(&plan));
                let report = comm_report(&[plan], HeaderPolicy::Include, 1);
                assert_eq!(report.total_bits, frame.len() as u64 * 8);
            }
        }
    }

    #[test]
    fn record_container() {
        let grid = make_grid(40, 20, 20).unwrap();
        let img = noise(40, 20, 0);
        let mut buf = Vec::new();
        let frames: Vec<Vec<u8>> = (0..3)
            .map(|f| encode(&img, &sample_random(&grid, r(0.5), f).unwrap(), 4, f as u32).unwrap())
            .collect();
        for f in &frames {
            write_record(&mut buf, f).unwrap();
        }
        assert_eq!(read_records(&buf).unwrap(), frames);
        assert!(matches!(
            read_records(&buf[..buf.len() - 1]),
            Err(Error::Truncation { missing: 1 })
        ));
    }

    #[test]
    fn empty_report_is_zero() {
        let report = comm_report(&[], HeaderPolicy::Include, 2);
        assert_eq!(report, CommReport::default());
        assert_eq!(report.reduction_factor(), None);
    }

    #[test]
    fn flipped_header_or_index_bytes_never_alias() {
        let grid = make_grid(120, 80, 10).unwrap();
        let img = noise(120, 80, 6);
        let plans = [
            sample_random(&grid, r(0.7), 11).unwrap(),
            semantic(&grid, r(0.7), 11),
            semantic(&grid, r(0.97), 11),
        ];
        for plan in plans {
            let frame = encode(&img, &plan, 3, 77).unwrap();
            let original = decode(&frame).unwrap();
            let index_end = frame.len() - payload_len(&grid, plan.kept_count());
            for at in 0..index_end {
                for mask in [0x01u8, 0x80, 0xFF] {
                    let mut bent = frame.clone();
                    bent[at] ^= mask;
                    if let Ok(d) = decode(&bent) {
                        let same = d.camera_id == original.camera_id
                            && d.frame_id == original.frame_id
                            && d.plan.same_selection(&original.plan);
                        assert!(!same, "flip {mask:#x} at byte {at} went unnoticed");
                    }
                }
            }
        }
    }

    fn frame_case() -> impl Strategy<Value = (u32, u32, u32, u16, bool, u64)> {
        (1u32..8, 1u32..8, 1u32..6, 0u16..=1000, any::<bool>(), any::<u64>()).prop_map(
            |(cols, rows, p, milli, sem, seed)| {
                let extra = (seed % 3) as u32;
                (cols * p + extra, rows * p + extra, p, milli, sem, seed)
            },
        )
    }

    proptest! {
        #[test]
        fn round_trip_is_exact((w, h, p, milli, sem, seed) in frame_case()) {
            let grid = make_grid(w, h, p).unwrap();
            let ratio = MaskingRatio::from_milli(milli).unwrap();
            let plan = if sem { semantic(&grid, ratio, seed) } else { sample_random(&grid, ratio, seed).unwrap() };
            let img = noise(w, h, seed ^ 1);
            let frame = encode(&img, &plan, (seed >> 7) as u16, (seed >> 23) as u32).unwrap();
            let back = decode(&frame).unwrap();
            prop_assert!(back.plan.same_selection(&plan));
            prop_assert_eq!(back.sparse, SparseImage::from_plan(&img, &plan).unwrap());
        }

        #[test]
        fn payload_bits_formula(cols in 1u32..40, rows in 1u32..40, milli in 0u16..=1000) {
            let grid = make_grid(cols * 20, rows * 20, 20).unwrap();
            let ratio = MaskingRatio::from_milli(milli).unwrap();
            let plan = sample_random(&grid, ratio, 0).unwrap();
            let n = grid.patch_count() as u64;
            let kept = (n * (1000 - milli as u64)).div_ceil(1000);
            let report = comm_report(&[plan], HeaderPolicy::PayloadOnly, 2);
            prop_assert_eq!(report.payload_bits, kept * 400 * 24);
        }
    }
}
