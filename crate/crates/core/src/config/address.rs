use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ConfigError;

/// One step of a [`NodeAddress`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Key(String),
    Index(usize),
}

/// Path to a node, rendered like `model.backbone.layer_cfgs[4].act_cfg`.
///
/// Equality and hashing go through the rendered string.
#[derive(Debug, Clone)]
pub struct NodeAddress {
    segments: Vec<Segment>,
}

impl NodeAddress {
    pub fn root() -> Self {
        Self {
            segments: vec![Segment::Key("model".to_string())],
        }
    }

    pub fn from_segments(segments: Vec<Segment>) -> Result<Self, ConfigError> {
        match segments.first() {
            Some(Segment::Key(k)) if k == "model" => Ok(Self { segments }),
            _ => Err(ConfigError::BadAddress(render_segments(&segments))),
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn is_root(&self) -> bool {
        self.segments.len() == 1
    }

    pub fn key(&self, key: impl Into<String>) -> Self {
        let mut s = self.segments.clone();
        s.push(Segment::Key(key.into()));
        Self { segments: s }
    }

    pub fn index(&self, i: usize) -> Self {
        let mut s = self.segments.clone();
        s.push(Segment::Index(i));
        Self { segments: s }
    }

    pub fn parent(&self) -> Option<Self> {
        if self.is_root() {
            return None;
        }
        Some(Self {
            segments: self.segments[..self.segments.len() - 1].to_vec(),
        })
    }

    pub fn last(&self) -> &Segment {
        self.segments.last().expect("address is never empty")
    }

    /// Index of the final segment, if it addresses a list position.
    pub fn list_index(&self) -> Option<usize> {
        match self.last() {
            Segment::Index(i) => Some(*i),
            Segment::Key(_) => None,
        }
    }

    /// Same container, different list position.
    pub fn with_index(&self, i: usize) -> Option<Self> {
        self.list_index()?;
        let mut s = self.segments.clone();
        *s.last_mut().unwrap() = Segment::Index(i);
        Some(Self { segments: s })
    }

    /// True when `self` equals `other` or lies beneath it.
    pub fn starts_with(&self, other: &NodeAddress) -> bool {
        self.segments.len() >= other.segments.len()
            && self.segments[..other.segments.len()] == other.segments[..]
    }
}

fn render_segments(segments: &[Segment]) -> String {
    let mut out = String::new();
    for (i, seg) in segments.iter().enumerate() {
        match seg {
            Segment::Key(k) => {
                if i > 0 {
                    out.push('.');
                }
                out.push_str(k);
            }
            Segment::Index(n) => {
                out.push('[');
                out.push_str(&n.to_string());
                out.push(']');
            }
        }
    }
    out
}

impl fmt::Display for NodeAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_segments(&self.segments))
    }
}

impl PartialEq for NodeAddress {
    fn eq(&self, other: &Self) -> bool {
        self.to_string() == other.to_string()
    }
}

impl Eq for NodeAddress {}

impl Hash for NodeAddress {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.to_string().hash(state)
    }
}

impl PartialOrd for NodeAddress {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for NodeAddress {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.to_string().cmp(&other.to_string())
    }
}

fn is_ident_start(c: char) -> bool {
    c == '_' || c.is_ascii_alphabetic()
}

fn is_ident_char(c: char) -> bool {
    c == '_' || c.is_ascii_alphanumeric()
}

impl FromStr for NodeAddress {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ConfigError::BadAddress(s.to_string());
        let s_trim = s.trim();
        let chars: Vec<char> = s_trim.chars().collect();
        let mut segments = Vec::new();
        let mut i = 0;
        let mut expect_key = true;
        while i < chars.len() {
            let c = chars[i];
            if c == '[' {
                if expect_key {
                    return Err(bad());
                }
                let start = i + 1;
                let mut j = start;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                if j == start || j >= chars.len() || chars[j] != ']' {
                    return Err(bad());
                }
                let n: String = chars[start..j].iter().collect();
                segments.push(Segment::Index(n.parse().map_err(|_| bad())?));
                i = j + 1;
                expect_key = false;
            } else if c == '.' {
                if expect_key {
                    return Err(bad());
                }
                expect_key = true;
                i += 1;
            } else if is_ident_start(c) {
                if !expect_key {
                    return Err(bad());
                }
                let start = i;
                while i < chars.len() && is_ident_char(chars[i]) {
                    i += 1;
                }
                segments.push(Segment::Key(chars[start..i].iter().collect()));
                expect_key = false;
            } else {
                return Err(bad());
            }
        }
        if expect_key {
            return Err(bad());
        }
        Self::from_segments(segments).map_err(|_| bad())
    }
}

impl Serialize for NodeAddress {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for NodeAddress {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
