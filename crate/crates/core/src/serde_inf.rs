//! Serde helpers writing infinite floats as the strings `"inf"` / `"-inf"`
//! (JSON has no literal for them) and NaN as `null`.

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

pub fn serialize<S: Serializer>(v: &f64, ser: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        ser.serialize_f64(*v)
    } else if v.is_nan() {
        ser.serialize_none()
    } else if *v > 0.0 {
        ser.serialize_str("inf")
    } else {
        ser.serialize_str("-inf")
    }
}

pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<f64, D::Error> {
    struct V;
    impl Visitor<'_> for V {
        type Value = f64;

        fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
            f.write_str("a number, \"inf\", \"-inf\" or null")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(E::custom(format!("unexpected string `{other}`"))),
            }
        }

        fn visit_none<E: de::Error>(self) -> Result<f64, E> {
            Ok(f64::NAN)
        }

        fn visit_unit<E: de::Error>(self) -> Result<f64, E> {
            Ok(f64::NAN)
        }
    }
    de.deserialize_any(V)
}

/// Same encoding for optional values (`None` stays `null`).
pub mod option {
    use super::*;

    #[derive(Serialize, Deserialize)]
    struct Wrap(#[serde(with = "super")] f64);

    pub fn serialize<S: Serializer>(v: &Option<f64>, ser: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => super::serialize(x, ser),
            None => ser.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Option<f64>, D::Error> {
        let v: Option<Wrap> = Option::deserialize(de)?;
        Ok(v.map(|w| w.0))
    }
}

/// Same encoding for float vectors.
pub mod vec {
    use super::*;

    #[derive(Serialize, Deserialize)]
    struct Wrap(#[serde(with = "super")] f64);

    pub fn serialize<S: Serializer>(v: &[f64], ser: S) -> Result<S::Ok, S::Error> {
        let wrapped: Vec<Wrap> = v.iter().map(|&x| Wrap(x)).collect();
        wrapped.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<f64>, D::Error> {
        let v: Vec<Wrap> = Vec::deserialize(de)?;
        Ok(v.into_iter().map(|w| w.0).collect())
    }
}

/// Formats a float for CSV output with 17 significant digits, `inf` for
/// infinities.
pub fn csv_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[cfg(test)]
mod tests {
    use serde::{Deserialize, Serialize};

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct T {
        #[serde(with = "super")]
        a: f64,
        #[serde(with = "super::option")]
        b: Option<f64>,
    }

    #[test]
    fn infinity_round_trips_as_string() {
        let t = T {
            a: f64::INFINITY,
            b: Some(2.5),
        };
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(s, r#"{"a":"inf","b":2.5}"#);
        assert_eq!(serde_json::from_str::<T>(&s).unwrap(), t);
        let none = T { a: 1.0, b: None };
        let s = serde_json::to_string(&none).unwrap();
        assert_eq!(serde_json::from_str::<T>(&s).unwrap(), none);
    }
}
