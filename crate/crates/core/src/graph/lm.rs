use ndarray::Array2;

use crate::store::Bundle;
use crate::Result;

/// Add-one smoothed phone bigram. Row `P` is the sentence-start context and
/// column `P` the sentence end, where `P` is the number of phones.
#[derive(Debug, Clone, PartialEq)]
pub struct PhoneBigram {
    pub log_probs: Array2<f64>,
}

impl PhoneBigram {
    pub fn estimate<'a>(num_phones: usize, transcripts: impl IntoIterator<Item = &'a [usize]>) -> Self {
        let p = num_phones;
        let mut counts = Array2::<f64>::ones((p + 1, p + 1));
        for tr in transcripts {
            let mut prev = p;
            for &ph in tr {
                counts[[prev, ph]] += 1.0;
                prev = ph;
            }
            counts[[prev, p]] += 1.0;
        }
        for mut row in counts.outer_iter_mut() {
            let total = row.sum();
            row.mapv_inplace(|c| (c / total).ln());
        }
        Self { log_probs: counts }
    }

    pub fn uniform(num_phones: usize) -> Self {
        let n = num_phones + 1;
        Self {
            log_probs: Array2::from_elem((n, n), -(n as f64).ln()),
        }
    }

    pub fn num_phones(&self) -> usize {
        self.log_probs.nrows() - 1
    }

    pub fn start(&self, phone: usize) -> f64 {
        self.log_probs[[self.num_phones(), phone]]
    }

    pub fn next(&self, prev: usize, phone: usize) -> f64 {
        self.log_probs[[prev, phone]]
    }

    pub fn end(&self, prev: usize) -> f64 {
        self.log_probs[[prev, self.num_phones()]]
    }

    /// Log-probability of a complete phone string including the end symbol.
    pub fn score(&self, phones: &[usize]) -> f64 {
        let mut prev = self.num_phones();
        let mut s = 0.0;
        for &p in phones {
            s += self.log_probs[[prev, p]];
            prev = p;
        }
        s + self.log_probs[[prev, self.num_phones()]]
    }

    pub fn to_bundle(&self) -> Bundle {
        let mut b = Bundle::new("phone-bigram");
        b.insert("log_probs", self.log_probs.clone());
        b
    }

    pub fn from_bundle(b: &Bundle) -> Result<Self> {
        Ok(Self {
            log_probs: b.get("log_probs")?.clone(),
        })
    }
}
