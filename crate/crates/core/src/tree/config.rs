//! Finite descriptions of rotor states on the infinite `d`-regular tree.
//!
//! A vertex is addressed by its child-index path from the origin: the origin
//! is the empty address, its neighbours are `1..=d`, and every other vertex
//! has children `1..=d-1`. Direction `d` at a non-origin vertex points to the
//! parent. Rules are looked up in the order override, ray, level rule, default.

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TreeError;

/// Child-index path from the origin, written `1/2/1` (the origin is `""`).
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Address(Vec<u8>);

impl Address {
    pub fn origin() -> Self {
        Address(Vec::new())
    }

    pub fn from_path(path: Vec<u8>) -> Self {
        Address(path)
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn is_origin(&self) -> bool {
        self.0.is_empty()
    }

    pub fn child(&self, k: u8) -> Address {
        let mut path = self.0.clone();
        path.push(k);
        Address(path)
    }

    pub fn parent(&self) -> Option<Address> {
        if self.0.is_empty() {
            None
        } else {
            Some(Address(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    /// Principal branch (first index), if any.
    pub fn branch(&self) -> Option<u8> {
        self.0.first().copied()
    }
}

impl Borrow<[u8]> for Address {
    fn borrow(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("/")?;
            }
            write!(f, "{k}")?;
        }
        Ok(())
    }
}

impl FromStr for Address {
    type Err = TreeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().trim_matches('/');
        if s.is_empty() {
            return Ok(Address::origin());
        }
        s.split('/')
            .map(|part| {
                part.parse::<u8>()
                    .ok()
                    .filter(|&k| k > 0)
                    .ok_or_else(|| TreeError::InvalidConfig(format!("bad address component `{part}`")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Address)
    }
}

impl TryFrom<String> for Address {
    type Error = TreeError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Address> for String {
    fn from(a: Address) -> String {
        a.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverrideRule {
    pub addr: Address,
    pub dir: u8,
}

/// Every vertex `start · p_0 p_1 … p_{i-1}` (indices taken cyclically from
/// `pattern`) has direction `dir`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RayRule {
    pub start_addr: Address,
    pub pattern: Vec<u8>,
    pub dir: u8,
}

impl RayRule {
    pub fn contains(&self, addr: &[u8]) -> bool {
        let s = self.start_addr.as_slice();
        addr.len() >= s.len()
            && addr[..s.len()] == *s
            && addr[s.len()..]
                .iter()
                .enumerate()
                .all(|(i, &k)| k == self.pattern[i % self.pattern.len()])
    }
}

/// The subtree at `addr`: vertices less than `levels` below `addr` have
/// direction `upper`, deeper ones `lower`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelRule {
    pub addr: Address,
    pub levels: u32,
    pub upper: u8,
    pub lower: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConfigFile {
    d: u8,
    default: u8,
    #[serde(default)]
    overrides: Vec<OverrideRule>,
    #[serde(default)]
    rays: Vec<RayRule>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    level_rules: Vec<LevelRule>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ConfigFile", into = "ConfigFile")]
pub struct LazyTreeConfig {
    degree: u8,
    default_dir: u8,
    overrides: BTreeMap<Address, u8>,
    rays: Vec<RayRule>,
    level_rules: Vec<LevelRule>,
    // prefixes of overrides and ray starts, strict prefixes of level roots
    anchors: HashSet<Vec<u8>>,
    level_index: HashMap<Vec<u8>, usize>,
    level_depths: BTreeSet<usize>,
}

impl PartialEq for LazyTreeConfig {
    fn eq(&self, other: &Self) -> bool {
        self.degree == other.degree
            && self.default_dir == other.default_dir
            && self.overrides == other.overrides
            && self.rays == other.rays
            && self.level_rules == other.level_rules
    }
}

impl Eq for LazyTreeConfig {}

fn invalid(msg: impl Into<String>) -> TreeError {
    TreeError::InvalidConfig(msg.into())
}

impl LazyTreeConfig {
    pub fn new(degree: u8, default_dir: u8) -> Result<Self, TreeError> {
        if degree < 3 {
            return Err(TreeError::BadParameters(format!("degree {degree} < 3")));
        }
        let c = LazyTreeConfig {
            degree,
            default_dir,
            overrides: BTreeMap::new(),
            rays: Vec::new(),
            level_rules: Vec::new(),
            anchors: HashSet::new(),
            level_index: HashMap::new(),
            level_depths: BTreeSet::new(),
        };
        c.check_dir(default_dir)?;
        Ok(c)
    }

    /// Every vertex, origin included, in direction `dir`.
    pub fn uniform(degree: u8, dir: u8) -> Result<Self, TreeError> {
        Self::new(degree, dir)
    }

    pub fn degree(&self) -> u8 {
        self.degree
    }

    pub fn default_direction(&self) -> u8 {
        self.default_dir
    }

    pub fn overrides(&self) -> &BTreeMap<Address, u8> {
        &self.overrides
    }

    pub fn rays(&self) -> &[RayRule] {
        &self.rays
    }

    pub fn level_rules(&self) -> &[LevelRule] {
        &self.level_rules
    }

    fn check_dir(&self, dir: u8) -> Result<(), TreeError> {
        if (1..=self.degree).contains(&dir) {
            Ok(())
        } else {
            Err(invalid(format!("direction {dir} outside 1..={}", self.degree)))
        }
    }

    fn check_addr(&self, addr: &Address) -> Result<(), TreeError> {
        for (i, &k) in addr.as_slice().iter().enumerate() {
            let max = if i == 0 { self.degree } else { self.degree - 1 };
            if !(1..=max).contains(&k) {
                return Err(invalid(format!("address `{addr}` has child index {k} outside 1..={max}")));
            }
        }
        Ok(())
    }

    fn in_level_subtree(&self, addr: &[u8]) -> bool {
        self.enclosing_level(addr).is_some()
    }

    fn enclosing_level(&self, addr: &[u8]) -> Option<&LevelRule> {
        self.level_depths
            .iter()
            .take_while(|&&len| len <= addr.len())
            .find_map(|&len| self.level_index.get(&addr[..len]))
            .map(|&i| &self.level_rules[i])
    }

    fn add_anchor_prefixes(&mut self, addr: &[u8], inclusive: bool) {
        let end = if inclusive { addr.len() } else { addr.len().saturating_sub(1) };
        for len in 0..=end {
            self.anchors.insert(addr[..len].to_vec());
        }
    }

    pub fn add_override(&mut self, addr: Address, dir: u8) -> Result<(), TreeError> {
        self.check_addr(&addr)?;
        self.check_dir(dir)?;
        if self.overrides.contains_key(&addr) {
            return Err(invalid(format!("address `{addr}` overridden twice")));
        }
        if self.rays.iter().any(|r| r.contains(addr.as_slice())) {
            return Err(invalid(format!("override at `{addr}` lies on a ray")));
        }
        if self.in_level_subtree(addr.as_slice()) {
            return Err(invalid(format!("override at `{addr}` lies inside a level rule")));
        }
        self.add_anchor_prefixes(addr.as_slice(), true);
        self.overrides.insert(addr, dir);
        Ok(())
    }

    pub fn add_ray(&mut self, start_addr: Address, pattern: Vec<u8>, dir: u8) -> Result<(), TreeError> {
        self.check_addr(&start_addr)?;
        self.check_dir(dir)?;
        if start_addr.is_origin() {
            return Err(invalid("a ray may not start at the origin"));
        }
        if pattern.is_empty() {
            return Err(invalid("empty ray pattern"));
        }
        if let Some(&k) = pattern.iter().find(|&&k| !(1..self.degree).contains(&k)) {
            return Err(invalid(format!("ray pattern index {k} outside 1..={}", self.degree - 1)));
        }
        let ray = RayRule {
            start_addr,
            pattern,
            dir,
        };
        if let Some(o) = self.overrides.keys().find(|o| ray.contains(o.as_slice())) {
            return Err(invalid(format!("override at `{o}` lies on a ray")));
        }
        for other in &self.rays {
            if other.contains(ray.start_addr.as_slice()) || ray.contains(other.start_addr.as_slice()) {
                return Err(invalid(format!(
                    "rays from `{}` and `{}` overlap",
                    ray.start_addr, other.start_addr
                )));
            }
        }
        if self.in_level_subtree(ray.start_addr.as_slice())
            || self.level_rules.iter().any(|l| ray.contains(l.addr.as_slice()))
        {
            return Err(invalid(format!("ray from `{}` meets a level rule", ray.start_addr)));
        }
        self.add_anchor_prefixes(ray.start_addr.as_slice(), true);
        self.rays.push(ray);
        Ok(())
    }

    pub fn add_level_rule(&mut self, addr: Address, levels: u32, upper: u8, lower: u8) -> Result<(), TreeError> {
        self.check_addr(&addr)?;
        self.check_dir(upper)?;
        self.check_dir(lower)?;
        if addr.is_origin() {
            return Err(invalid("a level rule may not be rooted at the origin"));
        }
        let a = addr.as_slice();
        let nested = |b: &[u8]| b.len() <= a.len() && a[..b.len()] == *b || a.len() <= b.len() && b[..a.len()] == *a;
        if self.level_rules.iter().any(|l| nested(l.addr.as_slice())) {
            return Err(invalid(format!("level rule at `{addr}` overlaps another")));
        }
        let below = |b: &[u8]| b.len() >= a.len() && b[..a.len()] == *a;
        if self.overrides.keys().any(|o| below(o.as_slice())) {
            return Err(invalid(format!("level rule at `{addr}` contains an override")));
        }
        if self
            .rays
            .iter()
            .any(|r| below(r.start_addr.as_slice()) || r.contains(a))
        {
            return Err(invalid(format!("level rule at `{addr}` meets a ray")));
        }
        self.add_anchor_prefixes(a, false);
        self.level_index.insert(a.to_vec(), self.level_rules.len());
        self.level_depths.insert(a.len());
        self.level_rules.push(LevelRule {
            addr,
            levels,
            upper,
            lower,
        });
        Ok(())
    }

    /// Initial direction of the vertex at `addr`.
    pub fn direction(&self, addr: &[u8]) -> u8 {
        if let Some(&dir) = self.overrides.get(addr) {
            return dir;
        }
        if let Some(r) = self.rays.iter().find(|r| r.contains(addr)) {
            return r.dir;
        }
        if let Some(l) = self.enclosing_level(addr) {
            let rel = addr.len() - l.addr.depth();
            return if (rel as u64) < l.levels as u64 { l.upper } else { l.lower };
        }
        self.default_dir
    }

    pub fn succ(&self, dir: u8) -> u8 {
        if dir == self.degree {
            1
        } else {
            dir + 1
        }
    }

    /// Whether a chip entering the fresh vertex `addr` from its parent is
    /// certain to descend through fresh vertices forever.
    pub fn escape_certain(&self, addr: &[u8]) -> bool {
        let bounce = self.degree - 1;
        if addr.is_empty() {
            return false;
        }
        if let Some(r) = self.rays.iter().find(|r| r.contains(addr)) {
            let next = self.succ(r.dir);
            return r.dir != bounce && r.pattern.iter().all(|&k| k == next);
        }
        if self.anchors.contains(addr) {
            return false;
        }
        match self.enclosing_level(addr) {
            Some(l) if (addr.len() - l.addr.depth()) as u64 >= l.levels as u64 => l.lower != bounce,
            Some(l) => l.upper != bounce && l.lower != bounce,
            None => self.default_dir != bounce,
        }
    }

    /// Whether the initial directions in the subtree at `addr` depend only on
    /// depth, so that `addr · 1^j` represents every vertex `j` levels below.
    pub fn has_layered_subtree(&self, addr: &[u8]) -> bool {
        !addr.is_empty() && !self.anchors.contains(addr) && !self.rays.iter().any(|r| r.contains(addr))
    }

    fn points_at(&self, p: &[u8]) -> Option<Vec<u8>> {
        let dir = self.direction(p);
        if !p.is_empty() && dir == self.degree {
            return None;
        }
        let mut w = p.to_vec();
        w.push(dir);
        Some(w)
    }

    fn cycle_at(&self, p: &[u8]) -> Option<(Address, Address)> {
        let w = self.points_at(p)?;
        (self.direction(&w) == self.degree).then(|| (Address(p.to_vec()), Address(w)))
    }

    /// A parent/child pair whose rotors point at each other, if any. On a
    /// tree these are the only possible oriented cycles.
    pub fn find_two_cycle(&self) -> Option<(Address, Address)> {
        let max_depth = self
            .overrides
            .keys()
            .map(Address::depth)
            .chain(self.rays.iter().map(|r| r.start_addr.depth()))
            .chain(self.level_rules.iter().map(|l| l.addr.depth()))
            .max()
            .unwrap_or(0);
        let level_span = self.level_rules.iter().map(|l| l.levels as usize).max().unwrap_or(0);

        let mut candidates: Vec<Vec<u8>> = vec![Vec::new()];
        for o in self.overrides.keys() {
            candidates.push(o.as_slice().to_vec());
            if let Some(p) = o.parent() {
                candidates.push(p.0);
            }
        }
        for r in &self.rays {
            if let Some(p) = r.start_addr.parent() {
                candidates.push(p.0);
            }
            let limit = max_depth + level_span + 2 * r.pattern.len() + 2;
            let mut v = r.start_addr.as_slice().to_vec();
            let mut i = 0;
            while v.len() <= limit {
                candidates.push(v.clone());
                v.push(r.pattern[i % r.pattern.len()]);
                i += 1;
            }
        }
        for l in &self.level_rules {
            if let Some(p) = l.addr.parent() {
                candidates.push(p.0);
            }
            let mut v = l.addr.as_slice().to_vec();
            for _ in 0..=l.levels {
                candidates.push(v.clone());
                v.push(1);
            }
        }
        candidates.into_iter().find_map(|p| self.cycle_at(&p))
    }

    pub fn is_acyclic(&self) -> bool {
        self.find_two_cycle().is_none()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, TreeError> {
        serde_json::from_str(s).map_err(|e| invalid(e.to_string()))
    }
}

impl TryFrom<ConfigFile> for LazyTreeConfig {
    type Error = TreeError;

    fn try_from(f: ConfigFile) -> Result<Self, Self::Error> {
        let mut c = LazyTreeConfig::new(f.d, f.default)?;
        for o in f.overrides {
            c.add_override(o.addr, o.dir)?;
        }
        for r in f.rays {
            c.add_ray(r.start_addr, r.pattern, r.dir)?;
        }
        for l in f.level_rules {
            c.add_level_rule(l.addr, l.levels, l.upper, l.lower)?;
        }
        Ok(c)
    }
}

impl From<LazyTreeConfig> for ConfigFile {
    fn from(c: LazyTreeConfig) -> Self {
        ConfigFile {
            d: c.degree,
            default: c.default_dir,
            overrides: c
                .overrides
                .into_iter()
                .map(|(addr, dir)| OverrideRule { addr, dir })
                .collect(),
            rays: c.rays,
            level_rules: c.level_rules,
        }
    }
}
