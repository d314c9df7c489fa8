//! Escape sequences on the infinite ternary tree: the window condition
//! `(P_k)`, the block maps ψ and φ, and synthesis of rotor configurations
//! realizing a given word.
//!
//! A word records, chip by chip, whether the chip returned to the origin (0)
//! or escaped to infinity (1).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::{escape_bits, run_chips_infinite, Address, Arena, LazyTreeConfig, TreeError};

#[derive(Debug, Error)]
pub enum EscapeError {
    #[error("`{0}` is not a binary digit")]
    NotBinary(char),
    #[error("three consecutive ones starting at position {0}")]
    ThreeConsecutiveOnes(usize),
    #[error("word lengths differ: {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("`{0}` is not an escape sequence")]
    NotRealizable(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct BinaryWord(Vec<bool>);

impl BinaryWord {
    pub fn new(bits: Vec<bool>) -> Self {
        BinaryWord(bits)
    }

    pub fn zeros(n: usize) -> Self {
        BinaryWord(vec![false; n])
    }

    /// The word of length `len` spelling `value` in binary, most significant
    /// bit first.
    pub fn from_index(value: u64, len: usize) -> Self {
        BinaryWord((0..len).rev().map(|i| value >> i & 1 == 1).collect())
    }

    /// All `2^len` words of length `len` in lexicographic order.
    pub fn all(len: usize) -> impl Iterator<Item = BinaryWord> {
        (0..1u64 << len).map(move |v| BinaryWord::from_index(v, len))
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn push(&mut self, bit: bool) {
        self.0.push(bit);
    }

    pub fn prefix(&self, len: usize) -> BinaryWord {
        BinaryWord(self.0[..len.min(self.len())].to_vec())
    }

    pub fn starts_with(&self, other: &BinaryWord) -> bool {
        self.0.starts_with(&other.0)
    }

    /// `a_j a_{j+s} a_{j+2s} …` with `j` counted from 1.
    pub fn residue(&self, j: usize, stride: usize) -> BinaryWord {
        BinaryWord(self.0.iter().skip(j - 1).step_by(stride).copied().collect())
    }

    /// Interleaves words so that letter `i` of word `j` lands at position
    /// `j + i·len(words)` (1-based).
    pub fn interleave(words: &[BinaryWord]) -> BinaryWord {
        let total = words.iter().map(BinaryWord::len).sum();
        let mut out = Vec::with_capacity(total);
        for i in 0.. {
            if out.len() == total {
                break;
            }
            for w in words {
                if let Some(&b) = w.0.get(i) {
                    out.push(b);
                }
            }
        }
        BinaryWord(out)
    }
}

impl fmt::Display for BinaryWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BinaryWord {
    type Err = EscapeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                c => Err(EscapeError::NotBinary(c)),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(BinaryWord)
    }
}

impl TryFrom<String> for BinaryWord {
    type Error = EscapeError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<BinaryWord> for String {
    fn from(w: BinaryWord) -> String {
        w.to_string()
    }
}

fn window(k: u32) -> Option<usize> {
    1usize.checked_shl(k).map(|w| w - 1)
}

/// `(P_k)`: every window of exactly `2^k - 1` letters has at most `2^{k-1}`
/// ones. Vacuous when the word is shorter than the window.
pub fn satisfies_pk(a: &BinaryWord, k: u32) -> bool {
    violation_pk(a, k).is_none()
}

/// 1-based start of the first window violating `(P_k)`.
fn violation_pk(a: &BinaryWord, k: u32) -> Option<usize> {
    if k == 0 {
        return None;
    }
    let w = window(k)?;
    if w > a.len() {
        return None;
    }
    let limit = 1usize << (k - 1);
    let bits = a.bits();
    let mut ones = bits[..w].iter().filter(|&&b| b).count();
    if ones > limit {
        return Some(1);
    }
    for start in 1..=a.len() - w {
        ones += bits[start + w - 1] as usize;
        ones -= bits[start - 1] as usize;
        if ones > limit {
            return Some(start + 1);
        }
    }
    None
}

/// A window violating some `(P_k)`, positions 1-based and inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub k: u32,
    pub start: usize,
    pub end: usize,
}

/// The violation with smallest `k`, then leftmost window.
pub fn first_violation(a: &BinaryWord) -> Option<Violation> {
    (2..)
        .map_while(|k| window(k).filter(|&w| w <= a.len()).map(|w| (k, w)))
        .find_map(|(k, w)| {
            violation_pk(a, k).map(|start| Violation {
                k,
                start,
                end: start + w - 1,
            })
        })
}

/// `(P_k)` for every `k`.
pub fn satisfies_all(a: &BinaryWord) -> bool {
    first_violation(a).is_none()
}

/// Whether `a · bit` still satisfies every `(P_k)`, given that `a` does.
pub fn extends_validly(a: &BinaryWord, bit: bool) -> bool {
    if !bit {
        return true;
    }
    let bits = a.bits();
    let n = bits.len() + 1;
    let mut k = 2;
    while let Some(w) = window(k).filter(|&w| w <= n) {
        let ones = 1 + bits[n - w..].iter().filter(|&&b| b).count();
        if ones > 1 << (k - 1) {
            return false;
        }
        k += 1;
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Block {
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "10")]
    OneZero,
    #[serde(rename = "110")]
    OneOneZero,
}

impl Block {
    pub fn as_str(self) -> &'static str {
        match self {
            Block::Zero => "0",
            Block::OneZero => "10",
            Block::OneOneZero => "110",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockFactorization {
    pub blocks: Vec<Block>,
    /// A 0 was appended to complete a trailing `1` or `11`.
    pub appended_zero: bool,
}

impl BlockFactorization {
    pub fn concat(&self) -> BinaryWord {
        let s: String = self.blocks.iter().map(|b| b.as_str()).collect();
        s.parse().expect("blocks are binary")
    }
}

/// Greedy factorization into blocks `0`, `10`, `110`.
pub fn factor_blocks(a: &BinaryWord) -> Result<BlockFactorization, EscapeError> {
    let bits = a.bits();
    let n = bits.len();
    let mut blocks = Vec::new();
    let mut appended_zero = false;
    let mut i = 0;
    while i < n {
        let run = bits[i..].iter().take_while(|&&b| b).count();
        let block = match run {
            0 => Block::Zero,
            1 => Block::OneZero,
            2 => Block::OneOneZero,
            _ => return Err(EscapeError::ThreeConsecutiveOnes(i + 1)),
        };
        blocks.push(block);
        if i + run == n {
            appended_zero = run > 0;
            break;
        }
        i += run + 1;
    }
    Ok(BlockFactorization {
        blocks,
        appended_zero,
    })
}

/// ψ: one letter pair per block, with the `10` blocks alternating between
/// `(1,0)` and `(0,1)`.
pub fn psi(a: &BinaryWord) -> Result<(BinaryWord, BinaryWord), EscapeError> {
    let f = factor_blocks(a)?;
    let mut c = Vec::with_capacity(f.blocks.len());
    let mut d = Vec::with_capacity(f.blocks.len());
    let mut tens = 0usize;
    for b in &f.blocks {
        let pair = match b {
            Block::Zero => (false, false),
            Block::OneOneZero => (true, true),
            Block::OneZero => {
                tens += 1;
                if tens % 2 == 1 {
                    (true, false)
                } else {
                    (false, true)
                }
            }
        };
        c.push(pair.0);
        d.push(pair.1);
    }
    Ok((BinaryWord(c), BinaryWord(d)))
}

/// φ: concatenation of `0`, `10` or `110` according to the number of ones in
/// each letter pair.
pub fn phi(c: &BinaryWord, d: &BinaryWord) -> Result<BinaryWord, EscapeError> {
    if c.len() != d.len() {
        return Err(EscapeError::LengthMismatch(c.len(), d.len()));
    }
    let mut out = Vec::with_capacity(c.len() * 2);
    for (&x, &y) in c.bits().iter().zip(d.bits()) {
        out.extend(std::iter::repeat_n(true, x as usize + y as usize));
        out.push(false);
    }
    Ok(BinaryWord(out))
}

/// Initial rotor at the root of a branch, in ternary-tree terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RootDirection {
    Left,
    Right,
    Up,
}

impl RootDirection {
    pub fn direction(self) -> u8 {
        match self {
            RootDirection::Left => 1,
            RootDirection::Right => 2,
            RootDirection::Up => 3,
        }
    }

    pub const ALL: [RootDirection; 3] = [RootDirection::Left, RootDirection::Right, RootDirection::Up];
}

/// Sub-branch words padded for a root rotor that does not start pointing up.
pub fn extend_for_root(c: &BinaryWord, d: &BinaryWord, root: RootDirection) -> (BinaryWord, BinaryWord) {
    let pad = |w: &BinaryWord| {
        let mut v = vec![false];
        v.extend_from_slice(w.bits());
        BinaryWord(v)
    };
    match root {
        RootDirection::Up => (c.clone(), d.clone()),
        RootDirection::Left => (pad(c), d.clone()),
        RootDirection::Right => (pad(c), pad(d)),
    }
}

pub fn is_escape_branch(a: &BinaryWord) -> bool {
    satisfies_all(a)
}

/// Each residue class mod 3 satisfies every `(P_k)`.
pub fn is_escape_tree(a: &BinaryWord) -> bool {
    (1..=3).all(|j| satisfies_all(&a.residue(j, 3)))
}

/// Recursive description of a rotor configuration on a ternary branch.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum ConfigDescriptor {
    /// The top `h` levels point in direction 2, everything below points up.
    Level { h: u32 },
    /// A root rotor and descriptors for the left and right sub-branches.
    Node {
        root: RootDirection,
        left: Box<ConfigDescriptor>,
        right: Box<ConfigDescriptor>,
    },
}

impl ConfigDescriptor {
    pub fn level(h: u32) -> Self {
        ConfigDescriptor::Level { h }
    }

    pub fn node(root: RootDirection, left: ConfigDescriptor, right: ConfigDescriptor) -> Self {
        ConfigDescriptor::Node {
            root,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            ConfigDescriptor::Level { .. } => 0,
            ConfigDescriptor::Node { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Writes the rules for the branch rooted at `at` into `config`.
    pub fn expand_into(&self, config: &mut LazyTreeConfig, at: &Address) -> Result<(), TreeError> {
        match self {
            ConfigDescriptor::Level { h } => config.add_level_rule(at.clone(), *h, 2, 3),
            ConfigDescriptor::Node { root, left, right } => {
                config.add_override(at.clone(), root.direction())?;
                left.expand_into(config, &at.child(1))?;
                right.expand_into(config, &at.child(2))
            }
        }
    }

    /// Configuration on the branch arena, whose root has address `1`.
    pub fn branch_config(&self) -> Result<LazyTreeConfig, TreeError> {
        let mut config = LazyTreeConfig::new(3, 1)?;
        self.expand_into(&mut config, &Address::from_path(vec![1]))?;
        Ok(config)
    }
}

/// Escape word of the first `m` chips on a single branch.
pub fn simulate_branch(desc: &ConfigDescriptor, m: usize) -> Result<BinaryWord, EscapeError> {
    simulate(&desc.branch_config()?, Arena::Branch, m)
}

pub fn simulate(config: &LazyTreeConfig, arena: Arena, m: usize) -> Result<BinaryWord, EscapeError> {
    let (out, _) = run_chips_infinite(config, arena, m as u64)?;
    Ok(escape_bits(&out).parse().expect("escape bits are binary"))
}

fn synthesize_unchecked(a: &BinaryWord) -> ConfigDescriptor {
    let n = a.len();
    if n == 0 {
        return ConfigDescriptor::level(0);
    }
    let (c, d) = psi(a).expect("valid words have no 111");
    if c.len() < n {
        return ConfigDescriptor::node(RootDirection::Up, synthesize_unchecked(&c), synthesize_unchecked(&d));
    }
    // only 0…0 and 0…01 fail to shorten
    if a.bits()[n - 1] {
        ConfigDescriptor::level(n as u32 - 1)
    } else {
        ConfigDescriptor::level(n as u32)
    }
}

/// A branch configuration whose first `|a|` chips have escape word `a`.
pub fn synthesize_branch(a: &BinaryWord) -> Result<ConfigDescriptor, EscapeError> {
    if !is_escape_branch(a) {
        return Err(EscapeError::NotRealizable(a.to_string()));
    }
    Ok(synthesize_unchecked(a))
}

/// A full-tree configuration whose first `|a|` chips have escape word `a`.
/// The origin rotor starts in direction 3, so chip `j` enters branch
/// `((j - 1) mod 3) + 1`.
pub fn synthesize_tree(a: &BinaryWord) -> Result<LazyTreeConfig, EscapeError> {
    if !is_escape_tree(a) {
        return Err(EscapeError::NotRealizable(a.to_string()));
    }
    let mut config = LazyTreeConfig::new(3, 1)?;
    config.add_override(Address::origin(), 3)?;
    for j in 1..=3u8 {
        let desc = synthesize_unchecked(&a.residue(j as usize, 3));
        desc.expand_into(&mut config, &Address::from_path(vec![j]))?;
    }
    Ok(config)
}

/// A random word of length `len` satisfying every `(P_k)`:
/// each letter is a fair coin flip, forced to 0 when a 1 would be illegal.
pub fn random_branch_word<R: Rng + ?Sized>(rng: &mut R, len: usize) -> BinaryWord {
    let mut w = BinaryWord::default();
    for _ in 0..len {
        let bit = rng.gen_bool(0.5) && extends_validly(&w, true);
        w.push(bit);
    }
    w
}

/// A random word of length `len` whose residues mod 3 are branch words.
pub fn random_tree_word<R: Rng + ?Sized>(rng: &mut R, len: usize) -> BinaryWord {
    let parts: Vec<BinaryWord> = (0..3)
        .map(|j| random_branch_word(rng, (len + 2 - j) / 3))
        .collect();
    BinaryWord::interleave(&parts)
}
