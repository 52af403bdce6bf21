//! Binary gesture dataset.
//!
//! Layout (all little-endian): the 9-byte magic `GESTDATA1`, a `u64` record
//! count, then per record 9500 `f64` values in row-major `[step][feature]`
//! order followed by a label of three `f64`: kind (0 = referencing,
//! 1 = intervention), bearing in radians (0 for intervention) and template
//! index (-1 for referencing).

use std::io::{Read, Write};

use super::{GestureSequence, GESTURE_LEN};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 9] = b"GESTDATA1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GestureLabel {
    Referencing { bearing_rad: f64 },
    Intervention { template: usize },
}

impl GestureLabel {
    fn encode(self) -> [f64; 3] {
        match self {
            GestureLabel::Referencing { bearing_rad } => [0.0, bearing_rad, -1.0],
            GestureLabel::Intervention { template } => [1.0, 0.0, template as f64],
        }
    }

    fn decode(v: [f64; 3]) -> Result<Self> {
        match v[0] {
            k if k == 0.0 => Ok(GestureLabel::Referencing { bearing_rad: v[1] }),
            k if k == 1.0 && v[2] >= 0.0 => Ok(GestureLabel::Intervention {
                template: v[2] as usize,
            }),
            _ => Err(Error::InvalidRecord(format!("bad gesture label {v:?}"))),
        }
    }
}

pub fn write_dataset<W: Write>(mut w: W, records: &[(GestureSequence, GestureLabel)]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(records.len() as u64).to_le_bytes())?;
    for (seq, label) in records {
        for v in seq.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in label.encode() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<Vec<(GestureSequence, GestureLabel)>> {
    let mut magic = [0u8; 9];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::InvalidRecord("not a GESTDATA1 file".into()));
    }
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8)?;
    let count = u64::from_le_bytes(buf8) as usize;
    let mut out = Vec::with_capacity(count);
    let mut read_f64 = |r: &mut R| -> Result<f64> {
        r.read_exact(&mut buf8)?;
        Ok(f64::from_le_bytes(buf8))
    };
    for _ in 0..count {
        let values = (0..GESTURE_LEN)
            .map(|_| read_f64(&mut r))
            .collect::<Result<Vec<_>>>()?;
        let label = [read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?];
        out.push((GestureSequence::from_values(values)?, GestureLabel::decode(label)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gesture::{intervention_gesture, referencing_gesture, GestureAnatomy};

    #[test]
    fn round_trip_is_bit_exact() {
        let a = GestureAnatomy::from_seed(3);
        let records = vec![
            (
                referencing_gesture(0.7, &a, 1, 0.05).unwrap(),
                GestureLabel::Referencing { bearing_rad: 0.7 },
            ),
            (
                intervention_gesture(4, &a).unwrap(),
                GestureLabel::Intervention { template: 4 },
            ),
        ];
        let mut bytes = Vec::new();
        write_dataset(&mut bytes, &records).unwrap();
        assert_eq!(&bytes[..9], b"GESTDATA1");
        assert_eq!(bytes.len(), 9 + 8 + 2 * (9500 + 3) * 8);
        let back = read_dataset(bytes.as_slice()).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn bad_magic_rejected() {
        let bytes = b"NOTGESTUR\0\0\0\0\0\0\0\0".to_vec();
        assert!(read_dataset(bytes.as_slice()).is_err());
    }
}
