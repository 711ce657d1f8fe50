use crate::{Error, Result};

/// Levenshtein distance with unit substitution, deletion and insertion costs.
pub fn edit_distance<T: PartialEq>(hyp: &[T], reference: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=hyp.len()).collect();
    let mut cur = vec![0; hyp.len() + 1];
    for (i, r) in reference.iter().enumerate() {
        cur[0] = i + 1;
        for (j, h) in hyp.iter().enumerate() {
            let sub = prev[j] + usize::from(h != r);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[hyp.len()]
}

/// Phone error rate in percent.
pub fn phone_error_rate<T: PartialEq>(hyp: &[T], reference: &[T]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Invalid("empty reference".into()));
    }
    Ok(100.0 * edit_distance(hyp, reference) as f64 / reference.len() as f64)
}

/// Errors and reference length summed over a test set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ErrorCount {
    pub errors: usize,
    pub ref_len: usize,
}

impl ErrorCount {
    pub fn add<T: PartialEq>(&mut self, hyp: &[T], reference: &[T]) {
        self.errors += edit_distance(hyp, reference);
        self.ref_len += reference.len();
    }

    pub fn per(&self) -> Result<f64> {
        if self.ref_len == 0 {
            return Err(Error::Invalid("empty reference".into()));
        }
        Ok(100.0 * self.errors as f64 / self.ref_len as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive(h: &[u8], r: &[u8]) -> usize {
        match (h.split_first(), r.split_first()) {
            (None, _) => r.len(),
            (_, None) => h.len(),
            (Some((a, hs)), Some((b, rs))) => (naive(hs, rs) + usize::from(a != b))
                .min(naive(hs, r) + 1)
                .min(naive(h, rs) + 1),
        }
    }

    #[test]
    fn examples() {
        assert_eq!(phone_error_rate(&["aa", "s"], &["aa", "s"]).unwrap(), 0.0);
        let per = phone_error_rate(&["aa", "iy"], &["aa", "s", "iy"]).unwrap();
        assert!((per - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(phone_error_rate(&[1, 2, 3, 4], &[9]).unwrap(), 400.0);
        assert!(phone_error_rate::<u8>(&[1], &[]).is_err());
    }

    proptest! {
        #[test]
        fn matches_recursive_definition(h in prop::collection::vec(0u8..4, 0..7), r in prop::collection::vec(0u8..4, 0..7)) {
            prop_assert_eq!(edit_distance(&h, &r), naive(&h, &r));
            prop_assert_eq!(edit_distance(&h, &h), 0);
        }
    }
}
