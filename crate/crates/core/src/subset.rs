use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// A feature subset S, kept sorted and duplicate-free.
///
/// Text form is `{}` for the empty set and `{0,3}` otherwise.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SubsetId {
    members: Vec<usize>,
}

impl SubsetId {
    pub fn empty() -> Self {
        Self { members: Vec::new() }
    }

    pub fn singleton(i: usize) -> Self {
        Self { members: vec![i] }
    }

    /// Pair `{i,j}` in canonical order. Panics if `i == j`.
    pub fn pair(i: usize, j: usize) -> Self {
        assert_ne!(i, j, "a pair needs two distinct features");
        Self { members: vec![i.min(j), i.max(j)] }
    }

    pub fn new(mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        Self { members }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.binary_search(&i).is_ok()
    }

    /// Largest member, if any.
    pub fn max_feature(&self) -> Option<usize> {
        self.members.last().copied()
    }

    /// All subsets R ⊆ S, ordered by bitmask over the members (∅ first, S last).
    pub fn subsets(&self) -> Vec<SubsetId> {
        let k = self.members.len();
        assert!(k < usize::BITS as usize);
        (0..(1usize << k))
            .map(|mask| SubsetId {
                members: (0..k).filter(|b| mask >> b & 1 == 1).map(|b| self.members[b]).collect(),
            })
            .collect()
    }

    /// S \ {i}.
    pub fn without(&self, i: usize) -> SubsetId {
        SubsetId { members: self.members.iter().copied().filter(|&m| m != i).collect() }
    }

    pub fn union(&self, other: &SubsetId) -> SubsetId {
        let mut m = self.members.clone();
        m.extend_from_slice(&other.members);
        SubsetId::new(m)
    }

    pub fn is_subset_of(&self, other: &SubsetId) -> bool {
        self.members.iter().all(|&m| other.contains(m))
    }

    /// True if S and `other` share at least one member.
    pub fn intersects(&self, other: &SubsetId) -> bool {
        self.members.iter().any(|&m| other.contains(m))
    }
}

impl fmt::Display for SubsetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, m) in self.members.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{m}")?;
        }
        f.write_str("}")
    }
}

impl FromStr for SubsetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let inner = s
            .trim()
            .strip_prefix('{')
            .and_then(|t| t.strip_suffix('}'))
            .ok_or_else(|| Error::Config(format!("subset `{s}` must look like {{i,j}}")))?;
        if inner.trim().is_empty() {
            return Ok(SubsetId::empty());
        }
        let mut members = Vec::new();
        for part in inner.split(',') {
            let v = part
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("subset `{s}` has a non-integer member `{part}`")))?;
            members.push(v);
        }
        let id = SubsetId::new(members.clone());
        if id.len() != members.len() {
            return Err(Error::Config(format!("subset `{s}` repeats a member")));
        }
        Ok(id)
    }
}

impl Serialize for SubsetId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SubsetId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn canonical_text_form() {
        assert_eq!(SubsetId::empty().to_string(), "{}");
        assert_eq!(SubsetId::pair(3, 1).to_string(), "{1,3}");
        assert_eq!(SubsetId::new(vec![2, 0, 2]).members(), &[0, 2]);
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!("1,2".parse::<SubsetId>().is_err());
        assert!("{1,x}".parse::<SubsetId>().is_err());
        assert!("{1,1}".parse::<SubsetId>().is_err());
        assert_eq!("{ }".parse::<SubsetId>().unwrap(), SubsetId::empty());
    }

    #[test]
    fn subsets_enumerates_lattice() {
        let s = SubsetId::new(vec![0, 2, 5]);
        let all = s.subsets();
        assert_eq!(all.len(), 8);
        assert_eq!(all[0], SubsetId::empty());
        assert_eq!(all[7], s);
        assert!(all.iter().all(|r| r.is_subset_of(&s)));
    }

    proptest! {
        #[test]
        fn text_round_trip(v in proptest::collection::btree_set(0usize..64, 0..6)) {
            let id = SubsetId::new(v.into_iter().collect());
            let back: SubsetId = id.to_string().parse().unwrap();
            prop_assert_eq!(back, id);
        }
    }
}
