use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

macro_rules! record_id {
    ($name:ident, $dir:literal) => {
        /// Zero-padded, monotonically assigned population index.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub u32);

        impl $name {
            /// Directory of this record, relative to the run root.
            pub fn dir(self) -> String {
                format!(concat!($dir, "/{}"), self)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{:04}", self.0)
            }
        }

        impl FromStr for $name {
            type Err = std::num::ParseIntError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                s.parse().map($name)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

record_id!(SolverId, "populations/solvers");
record_id!(AgentId, "populations/agents");

pub fn iteration_dir(n: u32) -> String {
    format!("iterations/{n:02}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_zero_padded_and_round_trip() {
        let id = SolverId(7);
        assert_eq!(id.to_string(), "0007");
        assert_eq!(id.dir(), "populations/solvers/0007");
        assert_eq!(serde_json::to_string(&id).unwrap(), "\"0007\"");
        let back: SolverId = serde_json::from_str("\"0007\"").unwrap();
        assert_eq!(back, id);
        assert_eq!(AgentId(12).dir(), "populations/agents/0012");
        assert_eq!(iteration_dir(3), "iterations/03");
    }
}
