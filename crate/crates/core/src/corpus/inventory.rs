use crate::{Error, Result};

pub const SIL: &str = "sil";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhoneClass {
    Silence,
    Vowel,
    Nasal,
    Fricative,
    Stop,
}

impl PhoneClass {
    pub fn is_voiced(self) -> bool {
        matches!(self, PhoneClass::Vowel | PhoneClass::Nasal)
    }
}

/// Ordered phone symbols; `sil` is always index 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhoneInventory {
    phones: Vec<String>,
}

impl Default for PhoneInventory {
    fn default() -> Self {
        Self::new(
            ["sil", "aa", "iy", "uw", "eh", "ao", "s", "sh", "f", "m", "n", "t"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        )
        .expect("default inventory is valid")
    }
}

impl PhoneInventory {
    pub fn new(phones: Vec<String>) -> Result<Self> {
        if phones.first().map(String::as_str) != Some(SIL) {
            return Err(Error::Invalid("inventory must start with sil".into()));
        }
        for (i, p) in phones.iter().enumerate() {
            if phones[..i].contains(p) {
                return Err(Error::Invalid(format!("duplicate phone {p}")));
            }
        }
        Ok(Self { phones })
    }

    pub fn len(&self) -> usize {
        self.phones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phones.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.phones
    }

    pub fn symbol(&self, idx: usize) -> &str {
        &self.phones[idx]
    }

    pub fn index(&self, sym: &str) -> Result<usize> {
        self.phones
            .iter()
            .position(|p| p == sym)
            .ok_or_else(|| Error::UnknownPhone(sym.to_string()))
    }

    pub fn encode<S: AsRef<str>>(&self, syms: &[S]) -> Result<Vec<usize>> {
        syms.iter().map(|s| self.index(s.as_ref())).collect()
    }

    pub fn class(&self, idx: usize) -> PhoneClass {
        match self.phones[idx].as_str() {
            "sil" => PhoneClass::Silence,
            "aa" | "iy" | "uw" | "eh" | "ao" => PhoneClass::Vowel,
            "m" | "n" => PhoneClass::Nasal,
            "t" => PhoneClass::Stop,
            _ => PhoneClass::Fricative,
        }
    }

    pub fn vowels(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.class(i) == PhoneClass::Vowel).collect()
    }

    pub fn consonants(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| !matches!(self.class(i), PhoneClass::Vowel | PhoneClass::Silence))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_inventory() {
        let inv = PhoneInventory::default();
        assert_eq!(inv.len(), 12);
        assert_eq!(inv.symbol(0), SIL);
        assert_eq!(inv.vowels().len(), 5);
        assert_eq!(inv.consonants().len(), 6);
        assert!(matches!(inv.index("zz"), Err(Error::UnknownPhone(_))));
    }

    #[test]
    fn rejects_bad_inventories() {
        assert!(PhoneInventory::new(vec!["aa".into(), "sil".into()]).is_err());
        assert!(PhoneInventory::new(vec!["sil".into(), "aa".into(), "aa".into()]).is_err());
    }
}
