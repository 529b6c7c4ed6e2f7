//! Contiguous train/test splits.

use crate::error::{LmarError, Result};

/// 40 s at 30 Hz.
pub const DEFAULT_TRAIN_LEN: usize = 1200;
pub const DEFAULT_TEST_LEN: usize = 1200;

/// First `train_len` values and the `test_len` values after them. Any
/// remainder is left out, so callers needing targets past the test window
/// should check the length themselves.
pub fn split_train_test(
    values: &[f64],
    train_len: usize,
    test_len: usize,
) -> Result<(&[f64], &[f64])> {
    if train_len == 0 || test_len == 0 {
        return Err(LmarError::InvalidParameter(
            "train and test lengths must be positive".into(),
        ));
    }
    if values.len() < train_len + test_len {
        return Err(LmarError::SeriesTooShort(format!(
            "{} observations, split needs {}",
            values.len(),
            train_len + test_len
        )));
    }
    let (train, rest) = values.split_at(train_len);
    Ok((train, &rest[..test_len]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits() {
        let v: Vec<f64> = (0..2418).map(|t| t as f64).collect();
        let (a, b) = split_train_test(&v, DEFAULT_TRAIN_LEN, DEFAULT_TEST_LEN).unwrap();
        assert_eq!((a.len(), b.len()), (1200, 1200));
        assert_eq!(b[0], 1200.0);
        let (a, b) = split_train_test(&v[..10], 4, 6).unwrap();
        assert_eq!(a, &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(b.len(), 6);
        assert!(matches!(
            split_train_test(&v[..9], 4, 6),
            Err(LmarError::SeriesTooShort(_))
        ));
    }
}
