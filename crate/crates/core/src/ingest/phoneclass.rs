//! Vowel/consonant classification of ARPAbet-style phones.
//!
//! A static class table ships with the crate; a custom table can be loaded
//! from a file of `PHONE V|C` lines. Trailing stress digits (AA1, AH0) are
//! stripped before lookup.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

const ARPABET_TABLE: &str = "\
AA V\nAE V\nAH V\nAO V\nAW V\nAY V\nEH V\nER V\nEY V\nIH V\nIY V\nOW V\nOY V\nUH V\nUW V\n\
B C\nCH C\nD C\nDH C\nF C\nG C\nHH C\nJH C\nK C\nL C\nM C\nN C\nNG C\nP C\nR C\nS C\nSH C\nT C\nTH C\nV C\nW C\nY C\nZ C\nZH C\n";

#[derive(Debug, Clone)]
pub struct PhoneClasses {
    map: BTreeMap<String, bool>, // true = vowel
}

impl PhoneClasses {
    /// The built-in ARPAbet table.
    pub fn arpabet() -> PhoneClasses {
        PhoneClasses::parse(ARPABET_TABLE).expect("built-in table is well-formed")
    }

    pub fn parse(text: &str) -> Result<PhoneClasses> {
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let phone = parts
                .next()
                .ok_or_else(|| Error::ingest(format!("phone classes line {}", lineno + 1)))?;
            let class = parts.next().ok_or_else(|| {
                Error::ingest(format!("phone classes line {}: missing class", lineno + 1))
            })?;
            let is_vowel = match class {
                "V" => true,
                "C" => false,
                other => {
                    return Err(Error::ingest(format!(
                        "phone classes line {}: class '{other}' is not V or C",
                        lineno + 1
                    )))
                }
            };
            map.insert(phone.to_string(), is_vowel);
        }
        if map.is_empty() {
            return Err(Error::ingest("phone class table is empty"));
        }
        Ok(PhoneClasses { map })
    }

    pub fn load(path: &Path) -> Result<PhoneClasses> {
        let text = std::fs::read_to_string(path)?;
        PhoneClasses::parse(&text)
    }

    pub fn is_vowel(&self, phone: &str) -> Result<bool> {
        let stripped = phone.trim_end_matches(|c: char| c.is_ascii_digit());
        self.map.get(stripped).copied().ok_or_else(|| {
            Error::contract(format!("phone '{phone}' not in the class table"))
        })
    }

    /// (vowel count, consonant count) of a phone sequence.
    pub fn counts(&self, phones: &[String]) -> Result<(usize, usize)> {
        let mut vowels = 0;
        let mut consonants = 0;
        for p in phones {
            if self.is_vowel(p)? {
                vowels += 1;
            } else {
                consonants += 1;
            }
        }
        Ok((vowels, consonants))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bike_has_one_vowel_two_consonants() {
        let classes = PhoneClasses::arpabet();
        let phones: Vec<String> = ["B", "AY", "K"].iter().map(|s| s.to_string()).collect();
        assert_eq!(classes.counts(&phones).unwrap(), (1, 2));
    }

    #[test]
    fn stress_digits_are_stripped() {
        let classes = PhoneClasses::arpabet();
        assert!(classes.is_vowel("AA1").unwrap());
        assert!(classes.is_vowel("AH0").unwrap());
        assert!(!classes.is_vowel("K").unwrap());
    }

    #[test]
    fn unknown_phone_is_contract_violation() {
        let classes = PhoneClasses::arpabet();
        assert!(matches!(classes.is_vowel("QQ"), Err(Error::Contract(_))));
    }

    #[test]
    fn custom_table_parses() {
        let classes = PhoneClasses::parse("# comment\nXX V\nYY C\n").unwrap();
        assert!(classes.is_vowel("XX").unwrap());
        assert!(!classes.is_vowel("YY").unwrap());
        assert!(PhoneClasses::parse("XX Q\n").is_err());
    }
}
