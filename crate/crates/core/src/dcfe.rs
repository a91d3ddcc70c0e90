//! Coefficient scrambling and fingerprinting decode.
//!
//! Each block's nonzero zigzag subsequence p_0..p_n is replaced by keyed
//! running differences: e_n = p_n (+/-) xi, then e_i = p_i (+/-) e_{i+1}
//! walking toward the front. Decoding replays the chain with the key's
//! operators verbatim; a matched inverse key recovers p exactly, and an
//! issued user key recovers p everywhere except the last nonzero position,
//! which lands on p_n + delta. All arithmetic is symmetric-modular so every
//! value stays codable and the chain stays exactly invertible.

use crate::codec::{CoefficientImage, QuantizedBlock, COEFF_LIMIT};
use crate::error::{Error, Result};
use crate::keys::{generate_block_keys, KeyGenConfig};
use crate::trace::{canonical_bytes, digest128, Fingerprint128};

/// The modulus of the symmetric residue system: values live in
/// [-COEFF_LIMIT, COEFF_LIMIT].
pub const MODULUS: i32 = 2 * COEFF_LIMIT + 1;

/// Operator used at one chain position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpSign {
    Add,
    Sub,
}

impl OpSign {
    pub fn inverse(self) -> OpSign {
        match self {
            OpSign::Add => OpSign::Sub,
            OpSign::Sub => OpSign::Add,
        }
    }

    fn apply(self, a: i32, b: i32) -> i32 {
        match self {
            OpSign::Add => modsym(a + b),
            OpSign::Sub => modsym(a - b),
        }
    }
}

/// Per-block key material.
///
/// `Skip` marks a block the scrambler left untouched (all-zero block or a
/// component excluded from scrambling); `m` records the block's nonzero
/// count so later stages can verify alignment. `Active` carries the xi
/// offset and one operator per nonzero coefficient: `xi_op` for the last
/// position, then `chain_ops` in computation order (second-to-last
/// position first, position 0 last).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlockKey {
    Skip {
        m: u16,
    },
    Active {
        xi: i16,
        xi_op: OpSign,
        chain_ops: Vec<OpSign>,
    },
}

impl BlockKey {
    /// Number of nonzero coefficients this key is built for.
    pub fn m(&self) -> u16 {
        match self {
            BlockKey::Skip { m } => *m,
            BlockKey::Active { chain_ops, .. } => chain_ops.len() as u16 + 1,
        }
    }

    /// The decode-side counterpart: every operator flipped, same offset.
    pub fn inverse(&self) -> BlockKey {
        match self {
            BlockKey::Skip { m } => BlockKey::Skip { m: *m },
            BlockKey::Active {
                xi,
                xi_op,
                chain_ops,
            } => BlockKey::Active {
                xi: *xi,
                xi_op: xi_op.inverse(),
                chain_ops: chain_ops.iter().map(|op| op.inverse()).collect(),
            },
        }
    }
}

/// The producer's record of a scramble: the generation seed, the digest of
/// the ORIGINAL coefficient image, and the finalized per-block keys in the
/// block ordering contract.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProducerKey {
    pub seed: u64,
    pub image_digest: Fingerprint128,
    pub block_keys: Vec<BlockKey>,
}

/// A user's decode key: bound to the TRIAL image by digest, with operators
/// already inverted for decoding and xi adjusted to plant that user's
/// fingerprint offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeKey {
    pub user_id: String,
    pub image_digest: Fingerprint128,
    pub block_keys: Vec<BlockKey>,
}

/// Symmetric residue of `x` modulo [`MODULUS`], in [-1023, 1023].
pub fn modsym(x: i32) -> i32 {
    (x + COEFF_LIMIT).rem_euclid(MODULUS) - COEFF_LIMIT
}

fn check_sequence(values: &[i32]) -> Result<()> {
    for &v in values {
        if v == 0 {
            return Err(Error::Precondition(
                "zero coefficient in nonzero sequence".into(),
            ));
        }
        if v.abs() > COEFF_LIMIT {
            return Err(Error::Precondition(format!(
                "coefficient {v} outside [-{COEFF_LIMIT}, {COEFF_LIMIT}]"
            )));
        }
    }
    Ok(())
}

fn check_xi(xi: i16) -> Result<()> {
    if i32::from(xi).abs() > COEFF_LIMIT {
        return Err(Error::Argument(format!(
            "xi offset {xi} outside [-{COEFF_LIMIT}, {COEFF_LIMIT}]"
        )));
    }
    Ok(())
}

/// Apply `op`, flipping it when the result would be zero. Both operators
/// can only yield zero together when the left operand is itself zero,
/// which the sequence precondition rules out.
fn apply_with_flip(op: &mut OpSign, a: i32, b: i32) -> i32 {
    let v = op.apply(a, b);
    if v != 0 {
        return v;
    }
    *op = op.inverse();
    let v = op.apply(a, b);
    debug_assert_ne!(v, 0);
    v
}

/// Scramble one nonzero sequence with operators drawn from `ops`,
/// returning the scrambled sequence and the finalized key (operator flips
/// applied where a step would have produced zero).
pub fn scramble_block<I>(p: &[i32], xi: i16, ops: &mut I) -> Result<(Vec<i32>, BlockKey)>
where
    I: Iterator<Item = OpSign>,
{
    check_sequence(p)?;
    check_xi(xi)?;
    if p.is_empty() {
        return Ok((Vec::new(), BlockKey::Skip { m: 0 }));
    }
    let next_op = |ops: &mut I| {
        ops.next()
            .ok_or_else(|| Error::Argument("operator stream exhausted".into()))
    };
    let n = p.len() - 1;
    let mut e = vec![0i32; p.len()];
    let mut xi_op = next_op(ops)?;
    e[n] = apply_with_flip(&mut xi_op, p[n], i32::from(xi));
    let mut chain_ops = Vec::with_capacity(n);
    for i in (0..n).rev() {
        let mut op = next_op(ops)?;
        e[i] = apply_with_flip(&mut op, p[i], e[i + 1]);
        chain_ops.push(op);
    }
    Ok((
        e,
        BlockKey::Active {
            xi,
            xi_op,
            chain_ops,
        },
    ))
}

/// Decode one scrambled nonzero sequence, applying the key verbatim.
pub fn decode_block(e: &[i32], key: &BlockKey) -> Result<Vec<i32>> {
    check_sequence(e)?;
    if usize::from(key.m()) != e.len() {
        return Err(Error::Precondition(format!(
            "key is built for {} nonzero coefficients, sequence has {}",
            key.m(),
            e.len()
        )));
    }
    match key {
        BlockKey::Skip { .. } => Ok(e.to_vec()),
        BlockKey::Active {
            xi,
            xi_op,
            chain_ops,
        } => {
            check_xi(*xi)?;
            let n = e.len() - 1;
            let mut d = vec![0i32; e.len()];
            d[n] = xi_op.apply(e[n], i32::from(*xi));
            for i in 0..n {
                d[i] = chain_ops[n - 1 - i].apply(e[i], e[i + 1]);
            }
            Ok(d)
        }
    }
}

fn nonzero_values(block: &QuantizedBlock) -> (Vec<usize>, Vec<i32>) {
    let mut positions = Vec::new();
    let mut values = Vec::new();
    for (k, &v) in block.0.iter().enumerate() {
        if v != 0 {
            positions.push(k);
            values.push(v);
        }
    }
    (positions, values)
}

fn check_image_range(image: &CoefficientImage) -> Result<()> {
    for (i, block) in image.blocks().enumerate() {
        if !block.in_coeff_range() {
            return Err(Error::Precondition(format!(
                "coefficient out of range in block {i}"
            )));
        }
    }
    Ok(())
}

fn check_alignment(image: &CoefficientImage, keys: &[BlockKey]) -> Result<()> {
    if keys.len() != image.total_blocks() {
        return Err(Error::Precondition(format!(
            "key holds {} block entries, image has {} blocks",
            keys.len(),
            image.total_blocks()
        )));
    }
    for (i, (block, key)) in image.blocks().zip(keys).enumerate() {
        if usize::from(key.m()) != block.nonzero_count() {
            return Err(Error::Precondition(format!(
                "key block {i} is built for {} nonzero coefficients, block has {}",
                key.m(),
                block.nonzero_count()
            )));
        }
    }
    Ok(())
}

/// Scramble every block against its draft key, returning the scrambled
/// image and the finalized keys (with zero-collision flips recorded).
pub fn scramble_image_with_keys(
    image: &CoefficientImage,
    drafts: &[BlockKey],
) -> Result<(CoefficientImage, Vec<BlockKey>)> {
    check_image_range(image)?;
    check_alignment(image, drafts)?;
    let mut out = image.clone();
    let mut finalized = Vec::with_capacity(drafts.len());
    for (block, draft) in out.blocks_mut().zip(drafts) {
        match draft {
            BlockKey::Skip { m } => finalized.push(BlockKey::Skip { m: *m }),
            BlockKey::Active {
                xi,
                xi_op,
                chain_ops,
            } => {
                let (positions, values) = nonzero_values(block);
                let mut ops = std::iter::once(*xi_op).chain(chain_ops.iter().copied());
                let (scrambled, key) = scramble_block(&values, *xi, &mut ops)?;
                for (&k, &v) in positions.iter().zip(&scrambled) {
                    block.0[k] = v;
                }
                finalized.push(key);
            }
        }
    }
    Ok((out, finalized))
}

/// Scramble an image with keys generated from (config, seed); the returned
/// producer key records the original image's digest and the finalized
/// per-block keys.
pub fn scramble_image(
    image: &CoefficientImage,
    config: &KeyGenConfig,
    seed: u64,
) -> Result<(CoefficientImage, ProducerKey)> {
    let drafts = generate_block_keys(image, config, seed)?;
    let image_digest = digest128(&canonical_bytes(image));
    let (scrambled, block_keys) = scramble_image_with_keys(image, &drafts)?;
    Ok((
        scrambled,
        ProducerKey {
            seed,
            image_digest,
            block_keys,
        },
    ))
}

fn apply_decode_keys(scrambled: &CoefficientImage, keys: &[BlockKey]) -> Result<CoefficientImage> {
    check_image_range(scrambled)?;
    check_alignment(scrambled, keys)?;
    let mut out = scrambled.clone();
    for (block, key) in out.blocks_mut().zip(keys) {
        if let BlockKey::Active { .. } = key {
            let (positions, values) = nonzero_values(block);
            let decoded = decode_block(&values, key)?;
            for (&k, &v) in positions.iter().zip(&decoded) {
                block.0[k] = v;
            }
        }
    }
    Ok(out)
}

/// Decode a trial image with a user key, planting that user's fingerprint.
///
/// The key must have been issued for exactly this content: its digest is
/// checked against the input before any work.
pub fn decode_image(scrambled: &CoefficientImage, key: &DecodeKey) -> Result<CoefficientImage> {
    let digest = digest128(&canonical_bytes(scrambled));
    if digest != key.image_digest {
        return Err(Error::Precondition(format!(
            "decode key was issued for different content (key digest {}, input digest {digest})",
            key.image_digest
        )));
    }
    apply_decode_keys(scrambled, &key.block_keys)
}

/// Invert a scramble exactly using the producer's own key. The result is
/// verified against the original-image digest the producer key records.
pub fn recover_original(
    trial: &CoefficientImage,
    producer: &ProducerKey,
) -> Result<CoefficientImage> {
    let inverse: Vec<BlockKey> = producer.block_keys.iter().map(BlockKey::inverse).collect();
    let recovered = apply_decode_keys(trial, &inverse)?;
    let digest = digest128(&canonical_bytes(&recovered));
    if digest != producer.image_digest {
        return Err(Error::Precondition(format!(
            "producer key does not match this trial content (recovered digest {digest}, key records {})",
            producer.image_digest
        )));
    }
    Ok(recovered)
}
