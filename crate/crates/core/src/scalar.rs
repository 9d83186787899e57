//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use serde::de::{self, DeserializeOwned, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

/// Real floating-point scalar usable by the identification pipeline.
///
/// Implemented for `f32` and `f64`. Literal constants are routed through
/// [`Real::lit`] so generic code never hard-codes a concrete float type.
pub trait Real:
    RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + fmt::LowerExp
    + fmt::Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal, rounding to the nearest representable value.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal is representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the concrete type.
    fn epsilon() -> Self {
        Self::default_epsilon()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// A non-negative quantity that may be unbounded, such as a memory horizon,
/// an eigenvalue lifetime or the condition number of a singular Gramian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extended<T> {
    Finite(T),
    Infinite,
}

impl<T: Real> Extended<T> {
    pub fn is_finite(&self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn finite(&self) -> Option<T> {
        match self {
            Extended::Finite(v) => Some(*v),
            Extended::Infinite => None,
        }
    }

    /// `self <= other` on the extended real line.
    pub fn le(&self, other: &Self) -> bool {
        match (self, other) {
            (_, Extended::Infinite) => true,
            (Extended::Infinite, Extended::Finite(_)) => false,
            (Extended::Finite(a), Extended::Finite(b)) => a <= b,
        }
    }

    pub fn as_f64(&self) -> f64 {
        match self {
            Extended::Finite(v) => v.as_f64(),
            Extended::Infinite => f64::INFINITY,
        }
    }
}

impl<T: Real> fmt::Display for Extended<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(v) => write!(f, "{}", v.as_f64()),
            Extended::Infinite => f.write_str("inf"),
        }
    }
}

// JSON has no infinity literal, so the unbounded case is written as "inf".
impl<T: Real> Serialize for Extended<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Extended::Finite(v) => v.serialize(s),
            Extended::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de, T: Real> Deserialize<'de> for Extended<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct ExtVisitor<T>(std::marker::PhantomData<T>);

        impl<T: Real> Visitor<'_> for ExtVisitor<T> {
            type Value = Extended<T>;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or the string \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Self::Value, E> {
                Ok(Extended::Finite(T::lit(v)))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
                Ok(Extended::Finite(T::lit(v as f64)))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
                Ok(Extended::Finite(T::lit(v as f64)))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
                match v {
                    "inf" | "+inf" | "Infinity" => Ok(Extended::Infinite),
                    other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
                }
            }
        }

        d.deserialize_any(ExtVisitor(std::marker::PhantomData))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extended_ordering() {
        let a = Extended::Finite(1.0_f64);
        let b = Extended::Finite(2.0_f64);
        assert!(a.le(&b));
        assert!(!b.le(&a));
        assert!(b.le(&Extended::Infinite));
        assert!(!Extended::<f64>::Infinite.le(&a));
        assert!(Extended::<f64>::Infinite.le(&Extended::Infinite));
    }

    #[test]
    fn extended_json() {
        let v = vec![Extended::Finite(2.5_f64), Extended::Infinite];
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"[2.5,"inf"]"#);
        let back: Vec<Extended<f64>> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn literals_round_to_type() {
        assert_eq!(<f32 as Real>::lit(0.1), 0.1_f32);
        assert_eq!(<f64 as Real>::lit(0.1), 0.1_f64);
    }
}
