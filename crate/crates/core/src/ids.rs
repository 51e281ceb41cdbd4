//! Identifier newtypes shared across the planner and the kernel.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! ordinal_id {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

macro_rules! named_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

ordinal_id!(
    /// Position of a segment along the structure axis.
    SegmentId,
    "s"
);
ordinal_id!(CompartmentId, "c");
ordinal_id!(GoalId, "g");
ordinal_id!(VirtualId, "v");
ordinal_id!(RelationId, "r");
ordinal_id!(OrderId, "o");

named_id!(SiteId);
named_id!(
    /// Physical drone identifier as written in the scenario file.
    DroneId
);
named_id!(
    /// A shared resource: either a boundary interface between two adjacent
    /// compartments or a staging site used by several of them.
    ResourceId
);

impl ResourceId {
    pub fn boundary(left: CompartmentId, right: CompartmentId) -> Self {
        Self(format!("boundary:{left}-{right}"))
    }

    pub fn site(site: &SiteId) -> Self {
        Self(format!("site:{site}"))
    }
}
