//! Fixed-width numeric formatting shared by transcripts, tables and CLI output.

/// Formats `x` with exactly 12 significant digits in scientific notation.
///
/// The output is valid JSON number syntax and is byte-stable for a given
/// `f64`. Negative zero prints as zero.
pub fn sig12(x: f64) -> String {
    if x == 0.0 {
        return "0.00000000000e0".to_string();
    }
    format!("{x:.11e}")
}

/// `x` rounded to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    sig12(x).parse().unwrap_or(x)
}

/// Serde adapters that round floats to 12 significant digits on the way out.
pub mod rounded {
    use serde::ser::{SerializeSeq, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(super::round12(*x))
    }

    pub fn serialize_slice<S: Serializer, T: AsRef<[f64]>>(xs: &T, s: S) -> Result<S::Ok, S::Error> {
        let xs = xs.as_ref();
        let mut seq = s.serialize_seq(Some(xs.len()))?;
        for x in xs {
            seq.serialize_element(&super::round12(*x))?;
        }
        seq.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(sig12(5.0 / 6.0), "8.33333333333e-1");
        assert_eq!(sig12(1.0), "1.00000000000e0");
        assert_eq!(sig12(-3.0), "-3.00000000000e0");
        assert_eq!(sig12(-0.0), "0.00000000000e0");
        let parsed: f64 = serde_json::from_str(&sig12(1.0 / 3.0)).unwrap();
        assert!((parsed - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(round12(5.0 / 6.0), 0.833333333333);
        assert_eq!(round12(1.0000000000000007), 1.0);
    }
}
