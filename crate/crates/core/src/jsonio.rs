//! JSON conventions shared by every artifact: complex numbers serialize as
//! `[re, im]` pairs and floats are emitted with 17 significant digits so that
//! certificates are byte-stable across runs.

use crate::C;
use serde::{self, Deserialize, Deserializer, Serialize, Serializer};

/// `#[serde(with = "crate::jsonio::complex")]` for `Complex64` fields.
pub mod complex {
    use super::*;

    pub fn serialize<S: Serializer>(z: &C, s: S) -> Result<S::Ok, S::Error> {
        [z.re, z.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<C, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(C::new(re, im))
    }
}

/// `#[serde(with = "crate::jsonio::complex_vec")]` for `Vec<Complex64>` fields.
pub mod complex_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[C], s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = v.iter().map(|z| [z.re, z.im]).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<C>, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(pairs.into_iter().map(|[re, im]| C::new(re, im)).collect())
    }
}

/// `#[serde(with = "crate::jsonio::complex3")]` for `[Complex64; 3]` fields.
pub mod complex3 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[C; 3], s: S) -> Result<S::Ok, S::Error> {
        let pairs: [[f64; 2]; 3] = [[v[0].re, v[0].im], [v[1].re, v[1].im], [v[2].re, v[2].im]];
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[C; 3], D::Error> {
        let p = <[[f64; 2]; 3]>::deserialize(d)?;
        Ok([
            C::new(p[0][0], p[0][1]),
            C::new(p[1][0], p[1][1]),
            C::new(p[2][0], p[2][1]),
        ])
    }
}

/// Serialize any value to JSON with floats pinned to 17 significant digits.
pub fn to_json_17<T: Serialize>(value: &T) -> crate::Result<String> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&v, &mut out);
    Ok(out)
}

fn write_value(v: &serde_json::Value, out: &mut String) {
    use serde_json::Value::*;
    match v {
        Null => out.push_str("null"),
        Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                let x = n.as_f64().unwrap();
                if x.is_finite() {
                    out.push_str(&format!("{:.16e}", x));
                } else {
                    out.push_str("null");
                }
            }
        }
        String(s) => {
            out.push_str(&serde_json::to_string(s).unwrap());
        }
        Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(item, out);
            }
            out.push(']');
        }
        Object(map) => {
            out.push('{');
            for (i, (k, val)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).unwrap());
                out.push(':');
                write_value(val, out);
            }
            out.push('}');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Serialize;

    #[derive(Serialize)]
    struct Probe {
        #[serde(with = "crate::jsonio::complex")]
        z: C,
        x: f64,
        n: u32,
    }

    #[test]
    fn complex_serializes_as_pair_and_floats_are_pinned() {
        let p = Probe {
            z: C::new(1.5, -2.25),
            x: 0.1,
            n: 7,
        };
        let s = to_json_17(&p).unwrap();
        assert!(s.contains("\"n\":7"));
        assert!(s.contains("1.0000000000000001e-1"));
        let t = to_json_17(&p).unwrap();
        assert_eq!(s, t);
    }

    #[test]
    fn complex_roundtrip() {
        #[derive(Serialize, serde::Deserialize, PartialEq, Debug)]
        struct P2 {
            #[serde(with = "crate::jsonio::complex")]
            z: C,
        }
        let p = P2 {
            z: C::new(-0.25, 3.5),
        };
        let s = serde_json::to_string(&p).unwrap();
        let q: P2 = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
    }
}
