use std::borrow::Borrow;
use std::fmt;

use bytes::Bytes;

use crate::error::{KeyError, TagError};

pub const MAX_KEY_LEN: usize = u16::MAX as usize;
pub const MAX_VALUE_LEN: u64 = u32::MAX as u64;
pub const MAX_TAGS: usize = 255;

/// Opaque key, 1 to 65535 bytes, ordered lexicographically.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Key(Bytes);

impl Key {
    pub fn new(bytes: impl Into<Bytes>) -> Result<Key, KeyError> {
        let bytes = bytes.into();
        match bytes.len() {
            0 => Err(KeyError::Empty),
            n if n > MAX_KEY_LEN => Err(KeyError::TooLong(n)),
            _ => Ok(Key(bytes)),
        }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn into_bytes(self) -> Bytes {
        self.0
    }
}

impl Borrow<[u8]> for Key {
    fn borrow(&self) -> &[u8] {
        &self.0
    }
}

impl AsRef<[u8]> for Key {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

impl TryFrom<&str> for Key {
    type Error = KeyError;

    fn try_from(s: &str) -> Result<Self, Self::Error> {
        Key::new(Bytes::copy_from_slice(s.as_bytes()))
    }
}

impl TryFrom<&[u8]> for Key {
    type Error = KeyError;

    fn try_from(s: &[u8]) -> Result<Self, Self::Error> {
        Key::new(Bytes::copy_from_slice(s))
    }
}

impl fmt::Debug for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match std::str::from_utf8(&self.0) {
            Ok(s) => write!(f, "Key({s:?})"),
            Err(_) => write!(f, "Key({:02x?})", &self.0[..]),
        }
    }
}

/// A typed numeric tag: `ttype` groups, `tvalue` orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tag {
    pub ttype: i64,
    pub tvalue: i64,
}

impl Tag {
    pub const fn new(ttype: i64, tvalue: i64) -> Tag {
        Tag { ttype, tvalue }
    }
}

/// The tags of one record: at most one value per tag type, sorted by type.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TagSet(Vec<Tag>);

impl TagSet {
    pub fn empty() -> TagSet {
        TagSet(Vec::new())
    }

    /// Builds a set from tags in attachment order. A later tag with an
    /// already-seen type replaces the earlier value.
    pub fn from_tags<I: IntoIterator<Item = Tag>>(tags: I) -> Result<TagSet, TagError> {
        let mut out: Vec<Tag> = Vec::new();
        for tag in tags {
            match out.binary_search_by_key(&tag.ttype, |t| t.ttype) {
                Ok(i) => out[i].tvalue = tag.tvalue,
                Err(i) => {
                    if out.len() == MAX_TAGS {
                        return Err(TagError::TooMany);
                    }
                    out.insert(i, tag);
                }
            }
        }
        Ok(TagSet(out))
    }

    pub fn get(&self, ttype: i64) -> Option<i64> {
        self.0
            .binary_search_by_key(&ttype, |t| t.ttype)
            .ok()
            .map(|i| self.0[i].tvalue)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tag> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Tag] {
        &self.0
    }
}

/// Comparison applied to tag values by queries and group expiry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Lt,
    Gt,
}

impl CmpOp {
    /// `candidate op operand`, with strict `Lt`/`Gt`.
    pub fn matches(self, candidate: i64, operand: i64) -> bool {
        match self {
            CmpOp::Eq => candidate == operand,
            CmpOp::Lt => candidate < operand,
            CmpOp::Gt => candidate > operand,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            CmpOp::Eq => 0,
            CmpOp::Lt => 1,
            CmpOp::Gt => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<CmpOp> {
        match code {
            0 => Some(CmpOp::Eq),
            1 => Some(CmpOp::Lt),
            2 => Some(CmpOp::Gt),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_length_limits() {
        assert_eq!(Key::new(Bytes::new()), Err(KeyError::Empty));
        assert!(Key::new(vec![0u8; MAX_KEY_LEN]).is_ok());
        assert_eq!(
            Key::new(vec![0u8; MAX_KEY_LEN + 1]),
            Err(KeyError::TooLong(MAX_KEY_LEN + 1))
        );
    }

    #[test]
    fn keys_order_lexicographically() {
        let a = Key::try_from("a").unwrap();
        let ab = Key::try_from("ab").unwrap();
        let b = Key::try_from("b").unwrap();
        assert!(a < ab && ab < b);
    }

    #[test]
    fn later_tag_of_same_type_wins() {
        let set = TagSet::from_tags([Tag::new(1, 5), Tag::new(2, 0), Tag::new(1, 9)]).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.get(1), Some(9));
        assert_eq!(set.get(2), Some(0));
        assert_eq!(set.get(3), None);
    }

    #[test]
    fn tag_limit() {
        assert!(TagSet::from_tags((0..255).map(|t| Tag::new(t, 0))).is_ok());
        assert_eq!(
            TagSet::from_tags((0..256).map(|t| Tag::new(t, 0))),
            Err(TagError::TooMany)
        );
        // Duplicates of existing types never count against the limit.
        assert!(TagSet::from_tags((0..300).map(|t| Tag::new(t % 255, t))).is_ok());
    }

    #[test]
    fn cmp_semantics() {
        assert!(CmpOp::Lt.matches(3, 5));
        assert!(!CmpOp::Lt.matches(5, 5));
        assert!(!CmpOp::Gt.matches(5, 5));
        assert!(CmpOp::Eq.matches(5, 5));
        assert!(!CmpOp::Lt.matches(i64::MIN, i64::MIN));
        for op in [CmpOp::Eq, CmpOp::Lt, CmpOp::Gt] {
            assert_eq!(CmpOp::from_code(op.code()), Some(op));
        }
        assert_eq!(CmpOp::from_code(3), None);
    }
}
