//! Complex scalar alias and `[re, im]` serde adapters.

pub use faer::c64;

pub const I: c64 = c64 { re: 0.0, im: 1.0 };

pub fn cx(re: f64, im: f64) -> c64 {
    c64::new(re, im)
}

pub fn real(re: f64) -> c64 {
    c64::new(re, 0.0)
}

pub mod pair {
    use super::c64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(z: &c64, s: S) -> Result<S::Ok, S::Error> {
        [z.re, z.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<c64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(c64::new(re, im))
    }
}

pub mod pairs {
    use super::c64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[c64], s: S) -> Result<S::Ok, S::Error> {
        let raw: Vec<[f64; 2]> = v.iter().map(|z| [z.re, z.im]).collect();
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<c64>, D::Error> {
        let raw = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(raw.into_iter().map(|[re, im]| c64::new(re, im)).collect())
    }
}
