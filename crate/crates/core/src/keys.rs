//! Key-stream generation, user-key issuance, and the key file format.
//!
//! The producer draws xi offsets and operator signs from a SplitMix64
//! stream, so a (config, seed) pair reproduces a scramble exactly. User
//! keys are derived from the producer key: operators inverted for
//! decoding, xi shifted by a per-block delta drawn from a stream seeded
//! by the user id's digest. Key files use a fixed little-endian layout so
//! equal keys serialize to identical bytes.

use crate::codec::{CoefficientImage, COEFF_LIMIT};
use crate::dcfe::{
    decode_image, modsym, recover_original, BlockKey, DecodeKey, OpSign, ProducerKey,
};
use crate::error::{Error, Result};
use crate::trace::{canonical_bytes, digest128, Fingerprint128};

const MAGIC: &[u8; 4] = b"DCFE";
const VERSION: u8 = 1;
const KIND_PRODUCER: u8 = 0;
const KIND_USER: u8 = 1;
/// High bit of the per-block count field: block recorded but not scrambled.
const SKIP_FLAG: u16 = 0x8000;
/// An 8x8 block has at most 64 nonzero coefficients.
const MAX_M: u16 = 64;

/// SplitMix64 stream; all key-material draws come from this generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrngState {
    state: u64,
}

impl PrngState {
    pub fn new(seed: u64) -> Self {
        PrngState { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

/// How the xi offset is chosen during key generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XiMode {
    /// Every scrambled block uses this offset.
    Fixed(i16),
    /// Each scrambled block draws its offset from the stream.
    PerBlock,
}

/// Which components get scrambled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentSelection {
    All,
    LumaOnly,
}

/// Generation and issuance parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyGenConfig {
    pub xi_mode: XiMode,
    /// Per-block xi offsets are drawn from [-xi_range, xi_range].
    pub xi_range: u16,
    /// Fingerprint deltas are drawn from [-delta_max, delta_max] \ {0}.
    pub delta_max: u16,
    pub components: ComponentSelection,
}

impl Default for KeyGenConfig {
    fn default() -> Self {
        KeyGenConfig {
            xi_mode: XiMode::PerBlock,
            xi_range: 7,
            delta_max: 2,
            components: ComponentSelection::All,
        }
    }
}

impl KeyGenConfig {
    fn validate(&self) -> Result<()> {
        if let XiMode::Fixed(v) = self.xi_mode {
            if i32::from(v).abs() > COEFF_LIMIT {
                return Err(Error::Argument(format!(
                    "fixed xi offset {v} outside [-{COEFF_LIMIT}, {COEFF_LIMIT}]"
                )));
            }
        }
        if i32::from(self.xi_range) > COEFF_LIMIT {
            return Err(Error::Argument(format!(
                "xi range {} exceeds {COEFF_LIMIT}",
                self.xi_range
            )));
        }
        if self.delta_max == 0 || i32::from(self.delta_max) > COEFF_LIMIT {
            return Err(Error::Argument(format!(
                "delta max {} outside 1..={COEFF_LIMIT}",
                self.delta_max
            )));
        }
        Ok(())
    }
}

fn op_from_draw(draw: u64) -> OpSign {
    if draw & 1 == 1 {
        OpSign::Add
    } else {
        OpSign::Sub
    }
}

/// Draft one key per block in the block ordering contract.
///
/// Stream consumption per scrambled block with m nonzero coefficients:
/// one xi draw (per-block mode only), then m operator draws (xi operator
/// first, chain operators in computation order). Skipped blocks consume
/// nothing.
pub fn generate_block_keys(
    image: &CoefficientImage,
    config: &KeyGenConfig,
    seed: u64,
) -> Result<Vec<BlockKey>> {
    config.validate()?;
    let mut rng = PrngState::new(seed);
    let mut keys = Vec::with_capacity(image.total_blocks());
    for (ci, comp) in image.components.iter().enumerate() {
        let included = match config.components {
            ComponentSelection::All => true,
            ComponentSelection::LumaOnly => ci == 0,
        };
        for block in &comp.blocks {
            let m = block.nonzero_count();
            if !included || m == 0 {
                keys.push(BlockKey::Skip { m: m as u16 });
                continue;
            }
            let xi = match config.xi_mode {
                XiMode::Fixed(v) => v,
                XiMode::PerBlock => {
                    let span = 2 * u64::from(config.xi_range) + 1;
                    ((rng.next_u64() % span) as i64 - i64::from(config.xi_range)) as i16
                }
            };
            let xi_op = op_from_draw(rng.next_u64());
            let chain_ops = (1..m).map(|_| op_from_draw(rng.next_u64())).collect();
            keys.push(BlockKey::Active {
                xi,
                xi_op,
                chain_ops,
            });
        }
    }
    Ok(keys)
}

/// Draw a fingerprint delta in [-delta_max, delta_max] \ {0}, redrawing
/// while the fingerprinted value modsym(p_last + delta) would be zero.
fn draw_delta(rng: &mut PrngState, delta_max: u16, p_last: i32) -> i32 {
    let span = 2 * u64::from(delta_max);
    loop {
        let mut d = (rng.next_u64() % span) as i64 - i64::from(delta_max);
        if d >= 0 {
            d += 1;
        }
        let d = d as i32;
        if modsym(p_last + d) != 0 {
            return d;
        }
    }
}

/// The user-side xi and operator for one block: the operator is inverted,
/// and xi absorbs the delta so the decoded last value becomes
/// modsym(p_last + delta).
fn user_xi(xi: i16, xi_op: OpSign, delta: i32) -> (i16, OpSign) {
    match xi_op {
        OpSign::Sub => (modsym(i32::from(xi) + delta) as i16, OpSign::Add),
        OpSign::Add => (modsym(i32::from(xi) - delta) as i16, OpSign::Sub),
    }
}

/// Issue a decode key for `user_id`, bound to `trial` by digest.
///
/// The original coefficients are recovered with the producer key, deltas
/// are drawn from a stream seeded by the first 8 bytes (little-endian) of
/// digest128(user_id), and the issued key is replay-checked: decoding the
/// trial must plant a nonzero value differing from the original at the
/// last nonzero position of every scrambled block.
pub fn issue_user_key(
    trial: &CoefficientImage,
    producer: &ProducerKey,
    user_id: &str,
    config: &KeyGenConfig,
) -> Result<DecodeKey> {
    config.validate()?;
    if user_id.is_empty() {
        return Err(Error::Argument("user id must not be empty".into()));
    }
    if user_id.len() > usize::from(u16::MAX) {
        return Err(Error::Argument(format!(
            "user id is {} bytes, limit is {}",
            user_id.len(),
            u16::MAX
        )));
    }
    let original = recover_original(trial, producer)?;
    let id_digest = digest128(user_id.as_bytes());
    let seed = u64::from_le_bytes(id_digest.as_bytes()[..8].try_into().unwrap());
    let mut rng = PrngState::new(seed);

    let mut block_keys = Vec::with_capacity(producer.block_keys.len());
    let mut originals_last = Vec::with_capacity(producer.block_keys.len());
    for (block, key) in original.blocks().zip(&producer.block_keys) {
        match key {
            BlockKey::Skip { m } => {
                block_keys.push(BlockKey::Skip { m: *m });
                originals_last.push(None);
            }
            BlockKey::Active {
                xi,
                xi_op,
                chain_ops,
            } => {
                let last = block.last_nonzero().ok_or_else(|| {
                    Error::Precondition("scrambled block decoded to all zeros".into())
                })?;
                let p_last = block.0[last];
                let delta = draw_delta(&mut rng, config.delta_max, p_last);
                let (xi_u, op_u) = user_xi(*xi, *xi_op, delta);
                block_keys.push(BlockKey::Active {
                    xi: xi_u,
                    xi_op: op_u,
                    chain_ops: chain_ops.iter().map(|op| op.inverse()).collect(),
                });
                originals_last.push(Some((last, p_last)));
            }
        }
    }

    let key = DecodeKey {
        user_id: user_id.to_string(),
        image_digest: digest128(&canonical_bytes(trial)),
        block_keys,
    };

    let decoded = decode_image(trial, &key)?;
    for (i, (block, expect)) in decoded.blocks().zip(&originals_last).enumerate() {
        let Some((last, p_last)) = expect else {
            continue;
        };
        let d_last = block.0[*last];
        if d_last == 0 || d_last == *p_last {
            return Err(Error::Precondition(format!(
                "issued key failed decode replay at block {i}"
            )));
        }
    }
    Ok(key)
}

/// A parsed key file: either the producer's scramble record or an issued
/// user decode key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Key {
    Producer(ProducerKey),
    User(DecodeKey),
}

/// Serialize a key to its canonical byte layout. Equal keys always yield
/// identical bytes.
pub fn serialize_key(key: &Key) -> Result<Vec<u8>> {
    let (kind, seed, digest, user_id, blocks) = match key {
        Key::Producer(p) => (KIND_PRODUCER, p.seed, &p.image_digest, "", &p.block_keys),
        Key::User(u) => (
            KIND_USER,
            0u64,
            &u.image_digest,
            u.user_id.as_str(),
            &u.block_keys,
        ),
    };
    if kind == KIND_USER && user_id.is_empty() {
        return Err(Error::Argument("user key without user id".into()));
    }
    if user_id.len() > usize::from(u16::MAX) {
        return Err(Error::Argument(format!(
            "user id is {} bytes, limit is {}",
            user_id.len(),
            u16::MAX
        )));
    }
    let block_count: u32 = blocks
        .len()
        .try_into()
        .map_err(|_| Error::Argument(format!("{} block entries exceed u32", blocks.len())))?;

    let mut out = Vec::with_capacity(38 + user_id.len() + 8 * blocks.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(kind);
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(&seed.to_le_bytes());
    out.extend_from_slice(digest.as_bytes());
    out.extend_from_slice(&(user_id.len() as u16).to_le_bytes());
    out.extend_from_slice(user_id.as_bytes());
    out.extend_from_slice(&block_count.to_le_bytes());

    for block in blocks {
        let m = block.m();
        if m > MAX_M {
            return Err(Error::Argument(format!(
                "block key records {m} nonzero coefficients, limit is {MAX_M}"
            )));
        }
        match block {
            BlockKey::Skip { m } => {
                let field = if *m == 0 { 0 } else { SKIP_FLAG | m };
                out.extend_from_slice(&field.to_le_bytes());
            }
            BlockKey::Active {
                xi,
                xi_op,
                chain_ops,
            } => {
                if i32::from(*xi).abs() > COEFF_LIMIT {
                    return Err(Error::Argument(format!(
                        "xi offset {xi} outside [-{COEFF_LIMIT}, {COEFF_LIMIT}]"
                    )));
                }
                out.extend_from_slice(&m.to_le_bytes());
                out.extend_from_slice(&xi.to_le_bytes());
                let mut bits = vec![0u8; usize::from(m).div_ceil(8)];
                let ops = std::iter::once(xi_op).chain(chain_ops.iter());
                for (j, op) in ops.enumerate() {
                    if *op == OpSign::Add {
                        bits[j / 8] |= 1 << (j % 8);
                    }
                }
                out.extend_from_slice(&bits);
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(Error::format_at(self.pos, "unexpected end of key file"));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parse a key file, enforcing canonical form: every well-formed key has
/// exactly one byte representation, and anything else is rejected.
pub fn parse_key(data: &[u8]) -> Result<Key> {
    let mut r = Reader { data, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::format_at(0, "bad magic, not a key file"));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(Error::format_at(
            4,
            format!("unsupported key version {version}"),
        ));
    }
    let kind = r.u8()?;
    if kind != KIND_PRODUCER && kind != KIND_USER {
        return Err(Error::format_at(5, format!("unknown key kind {kind}")));
    }
    if r.take(2)? != [0, 0] {
        return Err(Error::format_at(6, "reserved bytes must be zero"));
    }
    let seed = r.u64()?;
    if kind == KIND_USER && seed != 0 {
        return Err(Error::format_at(8, "user key seed field must be zero"));
    }
    let digest = Fingerprint128::new(r.take(16)?.try_into().unwrap());
    let id_len_at = r.pos;
    let id_len = r.u16()?;
    if kind == KIND_PRODUCER && id_len != 0 {
        return Err(Error::format_at(
            id_len_at,
            "producer key carries a user id",
        ));
    }
    if kind == KIND_USER && id_len == 0 {
        return Err(Error::format_at(id_len_at, "user key without user id"));
    }
    let id_at = r.pos;
    let id_bytes = r.take(usize::from(id_len))?;
    let user_id = std::str::from_utf8(id_bytes)
        .map_err(|_| Error::format_at(id_at, "user id is not valid UTF-8"))?
        .to_string();
    let block_count = r.u32()?;

    let mut block_keys = Vec::with_capacity(block_count as usize);
    for _ in 0..block_count {
        let at = r.pos;
        let field = r.u16()?;
        if field == 0 {
            block_keys.push(BlockKey::Skip { m: 0 });
            continue;
        }
        if field & SKIP_FLAG != 0 {
            let m = field & !SKIP_FLAG;
            if m == 0 {
                return Err(Error::format_at(at, "skip marker with zero count"));
            }
            if m > MAX_M {
                return Err(Error::format_at(
                    at,
                    format!("coefficient count {m} exceeds block capacity"),
                ));
            }
            block_keys.push(BlockKey::Skip { m });
            continue;
        }
        let m = field;
        if m > MAX_M {
            return Err(Error::format_at(
                at,
                format!("coefficient count {m} exceeds block capacity"),
            ));
        }
        let xi_at = r.pos;
        let xi = i16::from_le_bytes(r.take(2)?.try_into().unwrap());
        if i32::from(xi).abs() > COEFF_LIMIT {
            return Err(Error::format_at(
                xi_at,
                format!("xi offset {xi} out of range"),
            ));
        }
        let bits_at = r.pos;
        let bits = r.take(usize::from(m).div_ceil(8))?;
        let op_at = |j: usize| -> OpSign {
            if bits[j / 8] & (1 << (j % 8)) != 0 {
                OpSign::Add
            } else {
                OpSign::Sub
            }
        };
        for j in usize::from(m)..bits.len() * 8 {
            if bits[j / 8] & (1 << (j % 8)) != 0 {
                return Err(Error::format_at(bits_at, "op padding bits set"));
            }
        }
        let xi_op = op_at(0);
        let chain_ops = (1..usize::from(m)).map(op_at).collect();
        block_keys.push(BlockKey::Active {
            xi,
            xi_op,
            chain_ops,
        });
    }

    if r.pos != data.len() {
        return Err(Error::format_at(r.pos, "trailing bytes after key data"));
    }

    Ok(match kind {
        KIND_PRODUCER => Key::Producer(ProducerKey {
            seed,
            image_digest: digest,
            block_keys,
        }),
        _ => Key::User(DecodeKey {
            user_id,
            image_digest: digest,
            block_keys,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{Component, QuantizedBlock};
    use crate::dcfe::scramble_image;

    #[test]
    fn splitmix_reference_vector() {
        let mut rng = PrngState::new(0);
        assert_eq!(rng.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(rng.next_u64(), 0x6E78_9E6A_A1B9_65F4);
    }

    fn single_block_image(coeffs: [i32; 64]) -> CoefficientImage {
        CoefficientImage {
            width: 8,
            height: 8,
            components: vec![Component {
                id: 1,
                h: 1,
                v: 1,
                quant_table: 0,
                blocks_w: 1,
                blocks_h: 1,
                blocks: vec![QuantizedBlock(coeffs)],
            }],
            quant_tables: [Some([1; 64]), None, None, None],
        }
    }

    fn two_component_image() -> CoefficientImage {
        let mut luma = [0i32; 64];
        luma[0] = 12;
        luma[1] = -3;
        let mut chroma = [0i32; 64];
        chroma[0] = 7;
        CoefficientImage {
            width: 8,
            height: 8,
            components: vec![
                Component {
                    id: 1,
                    h: 1,
                    v: 1,
                    quant_table: 0,
                    blocks_w: 1,
                    blocks_h: 1,
                    blocks: vec![QuantizedBlock(luma)],
                },
                Component {
                    id: 2,
                    h: 1,
                    v: 1,
                    quant_table: 1,
                    blocks_w: 1,
                    blocks_h: 1,
                    blocks: vec![QuantizedBlock(chroma)],
                },
            ],
            quant_tables: [Some([1; 64]), Some([1; 64]), None, None],
        }
    }

    #[test]
    fn generation_is_deterministic_and_in_range() {
        let mut coeffs = [0i32; 64];
        coeffs[0] = 100;
        coeffs[3] = -40;
        coeffs[10] = 6;
        let image = single_block_image(coeffs);
        let config = KeyGenConfig::default();
        let a = generate_block_keys(&image, &config, 7).unwrap();
        let b = generate_block_keys(&image, &config, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 1);
        match &a[0] {
            BlockKey::Active { xi, chain_ops, .. } => {
                assert!((-7..=7).contains(xi));
                assert_eq!(chain_ops.len(), 2);
            }
            other => panic!("expected active key, got {other:?}"),
        }
        let c = generate_block_keys(&image, &config, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generation_stream_order_is_xi_then_ops() {
        let mut coeffs = [0i32; 64];
        coeffs[0] = 1;
        coeffs[1] = 2;
        let image = single_block_image(coeffs);
        let seed = 42;
        let mut rng = PrngState::new(seed);
        let xi_draw = rng.next_u64();
        let op0 = rng.next_u64();
        let op1 = rng.next_u64();

        let config = KeyGenConfig::default();
        let keys = generate_block_keys(&image, &config, seed).unwrap();
        let BlockKey::Active {
            xi,
            xi_op,
            chain_ops,
        } = &keys[0]
        else {
            panic!("expected active key");
        };
        assert_eq!(i64::from(*xi), (xi_draw % 15) as i64 - 7);
        assert_eq!(*xi_op, op_from_draw(op0));
        assert_eq!(chain_ops[0], op_from_draw(op1));

        // Fixed mode draws no xi, so the first draw becomes the xi operator.
        let fixed = KeyGenConfig {
            xi_mode: XiMode::Fixed(3),
            ..config
        };
        let keys = generate_block_keys(&image, &fixed, seed).unwrap();
        let BlockKey::Active {
            xi,
            xi_op,
            chain_ops,
        } = &keys[0]
        else {
            panic!("expected active key");
        };
        assert_eq!(*xi, 3);
        assert_eq!(*xi_op, op_from_draw(xi_draw));
        assert_eq!(chain_ops[0], op_from_draw(op0));
    }

    #[test]
    fn luma_only_skips_other_components() {
        let image = two_component_image();
        let config = KeyGenConfig {
            components: ComponentSelection::LumaOnly,
            ..KeyGenConfig::default()
        };
        let keys = generate_block_keys(&image, &config, 1).unwrap();
        assert!(matches!(keys[0], BlockKey::Active { .. }));
        assert_eq!(keys[1], BlockKey::Skip { m: 1 });
    }

    #[test]
    fn all_zero_blocks_consume_no_draws() {
        let image_zero = single_block_image([0; 64]);
        let keys = generate_block_keys(&image_zero, &KeyGenConfig::default(), 5).unwrap();
        assert_eq!(keys, vec![BlockKey::Skip { m: 0 }]);
    }

    #[test]
    fn config_validation() {
        let image = single_block_image([0; 64]);
        let bad_delta = KeyGenConfig {
            delta_max: 0,
            ..KeyGenConfig::default()
        };
        assert!(matches!(
            generate_block_keys(&image, &bad_delta, 1),
            Err(Error::Argument(_))
        ));
        let bad_fixed = KeyGenConfig {
            xi_mode: XiMode::Fixed(1024),
            ..KeyGenConfig::default()
        };
        assert!(matches!(
            generate_block_keys(&image, &bad_fixed, 1),
            Err(Error::Argument(_))
        ));
        let bad_range = KeyGenConfig {
            xi_range: 1024,
            ..KeyGenConfig::default()
        };
        assert!(matches!(
            generate_block_keys(&image, &bad_range, 1),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn delta_avoids_zero_fingerprints() {
        for seed in 0..200 {
            let mut rng = PrngState::new(seed);
            let d = draw_delta(&mut rng, 2, 1);
            assert!([-2, 1, 2].contains(&d), "p_last=1 drew {d}");
            let mut rng = PrngState::new(seed);
            let d = draw_delta(&mut rng, 2, -2);
            assert!([-2, -1, 1].contains(&d), "p_last=-2 drew {d}");
            let mut rng = PrngState::new(seed);
            let d = draw_delta(&mut rng, 1, 500);
            assert!([-1, 1].contains(&d));
        }
    }

    #[test]
    fn user_xi_reference_case() {
        assert_eq!(user_xi(3, OpSign::Sub, -1), (2, OpSign::Add));
        assert_eq!(user_xi(3, OpSign::Add, -1), (4, OpSign::Sub));
        // Wraps stay in range.
        assert_eq!(user_xi(1023, OpSign::Sub, 1), (-1023, OpSign::Add));
    }

    fn reference_trial() -> (CoefficientImage, CoefficientImage, ProducerKey) {
        let mut coeffs = [0i32; 64];
        for (k, v) in [
            (0, 10),
            (1, 5),
            (2, 7),
            (3, 3),
            (4, 2),
            (5, 8),
            (6, 1),
            (7, 9),
        ] {
            coeffs[k] = v;
        }
        let image = single_block_image(coeffs);
        let config = KeyGenConfig {
            xi_mode: XiMode::Fixed(3),
            ..KeyGenConfig::default()
        };
        let (trial, producer) = scramble_image(&image, &config, 99).unwrap();
        (image, trial, producer)
    }

    #[test]
    fn issued_key_plants_a_fingerprint() {
        let (image, trial, producer) = reference_trial();
        let key = issue_user_key(&trial, &producer, "alice", &KeyGenConfig::default()).unwrap();
        assert_eq!(key.user_id, "alice");
        let decoded = decode_image(&trial, &key).unwrap();
        let original = &image.components[0].blocks[0].0;
        let got = &decoded.components[0].blocks[0].0;
        assert_eq!(got[..7], original[..7]);
        assert_ne!(got[7], original[7]);
        assert_ne!(got[7], 0);
        let delta = got[7] - original[7];
        assert!((-2..=2).contains(&delta) && delta != 0);
    }

    #[test]
    fn issuance_is_deterministic_per_user() {
        // Several blocks so two users' delta draws cannot all coincide.
        let mut blocks = Vec::new();
        for b in 0..4 {
            let mut coeffs = [0i32; 64];
            for (k, v) in [(0, 50 + b), (2, -9), (7, 4), (20, 2)] {
                coeffs[k as usize] = v;
            }
            blocks.push(QuantizedBlock(coeffs));
        }
        let image = CoefficientImage {
            width: 16,
            height: 16,
            components: vec![Component {
                id: 1,
                h: 1,
                v: 1,
                quant_table: 0,
                blocks_w: 2,
                blocks_h: 2,
                blocks,
            }],
            quant_tables: [Some([1; 64]), None, None, None],
        };
        let config = KeyGenConfig::default();
        let (trial, producer) = scramble_image(&image, &config, 99).unwrap();
        let a = issue_user_key(&trial, &producer, "alice", &config).unwrap();
        let b = issue_user_key(&trial, &producer, "alice", &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serialize_key(&Key::User(a.clone())).unwrap(),
            serialize_key(&Key::User(b)).unwrap()
        );
        let c = issue_user_key(&trial, &producer, "bob", &config).unwrap();
        assert_ne!(a.block_keys, c.block_keys);
    }

    #[test]
    fn issuance_rejects_mismatched_content() {
        let (image, _, producer) = reference_trial();
        // The original is not the trial; the recovered digest will differ.
        assert!(matches!(
            issue_user_key(&image, &producer, "alice", &KeyGenConfig::default()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn issuance_rejects_empty_user() {
        let (_, trial, producer) = reference_trial();
        assert!(matches!(
            issue_user_key(&trial, &producer, "", &KeyGenConfig::default()),
            Err(Error::Argument(_))
        ));
    }

    fn sample_digest() -> Fingerprint128 {
        Fingerprint128::new([
            0xAA, 0xBB, 0xCC, 0xDD, 0xEE, 0xFF, 0x00, 0x11, 0x22, 0x33, 0x44, 0x55, 0x66, 0x77,
            0x88, 0x99,
        ])
    }

    #[test]
    fn golden_producer_key_bytes() {
        let key = Key::Producer(ProducerKey {
            seed: 0x0102_0304_0506_0708,
            image_digest: sample_digest(),
            block_keys: vec![BlockKey::Active {
                xi: 3,
                xi_op: OpSign::Sub,
                chain_ops: vec![],
            }],
        });
        let bytes = serialize_key(&key).unwrap();
        let mut expected = Vec::new();
        expected.extend_from_slice(b"DCFE");
        expected.push(1);
        expected.push(0);
        expected.extend_from_slice(&[0, 0]);
        expected.extend_from_slice(&0x0102_0304_0506_0708u64.to_le_bytes());
        expected.extend_from_slice(sample_digest().as_bytes());
        expected.extend_from_slice(&[0, 0]);
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&[0x01, 0x00, 0x03, 0x00, 0x00]);
        assert_eq!(bytes, expected);
        assert_eq!(parse_key(&bytes).unwrap(), key);
    }

    #[test]
    fn op_bit_packing() {
        // m = 9: ops fill one byte and spill one bit into the next.
        let ops = [
            OpSign::Add, // xi op, bit 0
            OpSign::Sub,
            OpSign::Add, // bit 2
            OpSign::Add, // bit 3
            OpSign::Sub,
            OpSign::Sub,
            OpSign::Add, // bit 6
            OpSign::Sub,
            OpSign::Add, // bit 8
        ];
        let key = Key::Producer(ProducerKey {
            seed: 0,
            image_digest: sample_digest(),
            block_keys: vec![BlockKey::Active {
                xi: -1,
                xi_op: ops[0],
                chain_ops: ops[1..].to_vec(),
            }],
        });
        let bytes = serialize_key(&key).unwrap();
        let record = &bytes[bytes.len() - 6..];
        assert_eq!(record[..2], [9, 0]);
        assert_eq!(record[2..4], (-1i16).to_le_bytes());
        assert_eq!(record[4], 0b0100_1101);
        assert_eq!(record[5], 0b0000_0001);
        assert_eq!(parse_key(&bytes).unwrap(), key);
    }

    #[test]
    fn mixed_key_round_trip() {
        let key = Key::Producer(ProducerKey {
            seed: u64::MAX,
            image_digest: sample_digest(),
            block_keys: vec![
                BlockKey::Skip { m: 0 },
                BlockKey::Skip { m: 64 },
                BlockKey::Active {
                    xi: -1023,
                    xi_op: OpSign::Add,
                    chain_ops: vec![],
                },
                BlockKey::Active {
                    xi: 1023,
                    xi_op: OpSign::Sub,
                    chain_ops: vec![OpSign::Add; 63],
                },
            ],
        });
        let bytes = serialize_key(&key).unwrap();
        let parsed = parse_key(&bytes).unwrap();
        assert_eq!(parsed, key);
        assert_eq!(serialize_key(&parsed).unwrap(), bytes);
    }

    #[test]
    fn user_key_round_trip() {
        let key = Key::User(DecodeKey {
            user_id: "user-\u{30c6}\u{30b9}\u{30c8}".into(),
            image_digest: sample_digest(),
            block_keys: vec![BlockKey::Active {
                xi: 2,
                xi_op: OpSign::Add,
                chain_ops: vec![OpSign::Sub, OpSign::Sub],
            }],
        });
        let bytes = serialize_key(&key).unwrap();
        assert_eq!(parse_key(&bytes).unwrap(), key);
    }

    fn valid_user_bytes() -> Vec<u8> {
        serialize_key(&Key::User(DecodeKey {
            user_id: "alice".into(),
            image_digest: sample_digest(),
            block_keys: vec![BlockKey::Active {
                xi: 3,
                xi_op: OpSign::Sub,
                chain_ops: vec![OpSign::Add],
            }],
        }))
        .unwrap()
    }

    #[test]
    fn parse_rejects_mutants() {
        let good = valid_user_bytes();
        assert!(parse_key(&good).is_ok());

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(
            parse_key(&bad),
            Err(Error::Format {
                offset: Some(0),
                ..
            })
        ));

        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(
            parse_key(&bad),
            Err(Error::Format {
                offset: Some(4),
                ..
            })
        ));

        let mut bad = good.clone();
        bad[5] = 2;
        assert!(matches!(
            parse_key(&bad),
            Err(Error::Format {
                offset: Some(5),
                ..
            })
        ));

        let mut bad = good.clone();
        bad[6] = 1;
        assert!(matches!(
            parse_key(&bad),
            Err(Error::Format {
                offset: Some(6),
                ..
            })
        ));

        // User key with a nonzero seed field.
        let mut bad = good.clone();
        bad[8] = 1;
        assert!(matches!(
            parse_key(&bad),
            Err(Error::Format {
                offset: Some(8),
                ..
            })
        ));

        // Set an op padding bit: m = 2 uses bits 0..1, bit 7 is padding.
        let mut bad = good.clone();
        let last = bad.len() - 1;
        bad[last] |= 0x80;
        assert!(matches!(parse_key(&bad), Err(Error::Format { .. })));

        // Trailing byte.
        let mut bad = good.clone();
        bad.push(0);
        assert!(matches!(parse_key(&bad), Err(Error::Format { .. })));

        // Truncations at every prefix length fail cleanly.
        for n in 0..good.len() {
            assert!(parse_key(&good[..n]).is_err(), "prefix {n} parsed");
        }
    }

    #[test]
    fn parse_rejects_bad_block_records() {
        fn with_block(record: &[u8]) -> Vec<u8> {
            let mut out = Vec::new();
            out.extend_from_slice(b"DCFE");
            out.extend_from_slice(&[1, 0, 0, 0]);
            out.extend_from_slice(&0u64.to_le_bytes());
            out.extend_from_slice(sample_digest().as_bytes());
            out.extend_from_slice(&[0, 0]);
            out.extend_from_slice(&1u32.to_le_bytes());
            out.extend_from_slice(record);
            out
        }

        // Skip marker with zero count is non-canonical.
        assert!(matches!(
            parse_key(&with_block(&0x8000u16.to_le_bytes())),
            Err(Error::Format { .. })
        ));
        // 65 nonzero coefficients cannot exist in an 8x8 block.
        assert!(matches!(
            parse_key(&with_block(&(0x8000u16 | 65).to_le_bytes())),
            Err(Error::Format { .. })
        ));
        let mut active65 = Vec::new();
        active65.extend_from_slice(&65u16.to_le_bytes());
        active65.extend_from_slice(&3i16.to_le_bytes());
        active65.extend_from_slice(&[0; 9]);
        assert!(matches!(
            parse_key(&with_block(&active65)),
            Err(Error::Format { .. })
        ));
        // xi out of range.
        let mut bad_xi = Vec::new();
        bad_xi.extend_from_slice(&1u16.to_le_bytes());
        bad_xi.extend_from_slice(&1024i16.to_le_bytes());
        bad_xi.push(0);
        assert!(matches!(
            parse_key(&with_block(&bad_xi)),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn producer_key_with_user_id_is_rejected() {
        let mut bytes = valid_user_bytes();
        bytes[5] = KIND_PRODUCER;
        // Seed field is zero so only the user id check can fire.
        assert!(matches!(
            parse_key(&bytes),
            Err(Error::Format {
                offset: Some(32),
                ..
            })
        ));
    }

    #[test]
    fn serialize_rejects_invalid_keys() {
        let key = Key::User(DecodeKey {
            user_id: String::new(),
            image_digest: sample_digest(),
            block_keys: vec![],
        });
        assert!(matches!(serialize_key(&key), Err(Error::Argument(_))));

        let key = Key::Producer(ProducerKey {
            seed: 0,
            image_digest: sample_digest(),
            block_keys: vec![BlockKey::Skip { m: 65 }],
        });
        assert!(matches!(serialize_key(&key), Err(Error::Argument(_))));

        let key = Key::Producer(ProducerKey {
            seed: 0,
            image_digest: sample_digest(),
            block_keys: vec![BlockKey::Active {
                xi: 1024,
                xi_op: OpSign::Add,
                chain_ops: vec![],
            }],
        });
        assert!(matches!(serialize_key(&key), Err(Error::Argument(_))));
    }
}
