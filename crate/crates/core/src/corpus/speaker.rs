use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sub_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeakerGroup {
    AdultMale,
    AdultFemale,
    Child,
}

impl SpeakerGroup {
    pub fn f0_range(self) -> (f64, f64) {
        match self {
            SpeakerGroup::AdultMale => (90.0, 140.0),
            SpeakerGroup::AdultFemale => (160.0, 230.0),
            SpeakerGroup::Child => (200.0, 350.0),
        }
    }

    pub fn vtl_range(self) -> (f64, f64) {
        match self {
            SpeakerGroup::AdultMale => (0.85, 0.93),
            SpeakerGroup::AdultFemale => (0.92, 1.0),
            SpeakerGroup::Child => (1.05, 1.3),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SpeakerGroup::AdultMale => "adult_male",
            SpeakerGroup::AdultFemale => "adult_female",
            SpeakerGroup::Child => "child",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "adult_male" => Some(SpeakerGroup::AdultMale),
            "adult_female" => Some(SpeakerGroup::AdultFemale),
            "child" => Some(SpeakerGroup::Child),
            _ => None,
        }
    }

    fn prefix(self) -> &'static str {
        match self {
            SpeakerGroup::AdultMale => "m",
            SpeakerGroup::AdultFemale => "f",
            SpeakerGroup::Child => "c",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerProfile {
    pub id: String,
    pub group: SpeakerGroup,
    pub base_f0: f64,
    /// Relative standard deviation of the slow f0 wander.
    pub f0_jitter: f64,
    /// Formant multiplier (vocal tract length proxy).
    pub vtl_scale: f64,
    /// Per-vowel F2 offset in Hz, indexed like `PhoneInventory::vowels()`.
    pub accent_shift: [f64; 5],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroupCounts {
    pub adult_male: usize,
    pub adult_female: usize,
    pub child: usize,
}

/// Deterministic speaker population. `tag` prefixes the ids so several
/// populations can coexist in one corpus; `accent` is added to every
/// speaker's vowel F2.
pub fn make_population(seed: u64, counts: GroupCounts, tag: &str, accent: [f64; 5]) -> Vec<SpeakerProfile> {
    let mut out = Vec::new();
    for (gi, (group, n)) in [
        (SpeakerGroup::AdultMale, counts.adult_male),
        (SpeakerGroup::AdultFemale, counts.adult_female),
        (SpeakerGroup::Child, counts.child),
    ]
    .into_iter()
    .enumerate()
    {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, gi as u64 + 1));
        for i in 0..n {
            let (lo, hi) = group.f0_range();
            let (vlo, vhi) = group.vtl_range();
            let base_f0 = rng.random_range(lo..=hi);
            let vtl_scale = rng.random_range(vlo..=vhi);
            let f0_jitter = match group {
                SpeakerGroup::Child => rng.random_range(0.03..0.05),
                _ => rng.random_range(0.02..0.035),
            };
            out.push(SpeakerProfile {
                id: format!("{tag}{}{:03}", group.prefix(), i),
                group,
                base_f0,
                f0_jitter,
                vtl_scale,
                accent_shift: accent,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spread(p: &[SpeakerProfile], g: SpeakerGroup) -> f64 {
        let v: Vec<f64> = p.iter().filter(|s| s.group == g).map(|s| s.base_f0).collect();
        v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min)
    }

    #[test]
    fn deterministic_and_in_range() {
        let c = GroupCounts { adult_male: 10, adult_female: 10, child: 10 };
        let a = make_population(7, c, "x", [0.0; 5]);
        assert_eq!(a, make_population(7, c, "x", [0.0; 5]));
        assert_eq!(a.len(), 30);
        for s in &a {
            let (lo, hi) = s.group.f0_range();
            assert!((lo..=hi).contains(&s.base_f0));
            let (vlo, vhi) = s.group.vtl_range();
            assert!((vlo..=vhi).contains(&s.vtl_scale));
        }
        let ids: std::collections::BTreeSet<_> = a.iter().map(|s| &s.id).collect();
        assert_eq!(ids.len(), 30);
    }

    #[test]
    fn children_spread_wider() {
        let c = GroupCounts { adult_male: 20, adult_female: 20, child: 20 };
        for seed in 0..5 {
            let p = make_population(seed, c, "x", [0.0; 5]);
            let child = spread(&p, SpeakerGroup::Child);
            assert!(child >= 1.5 * spread(&p, SpeakerGroup::AdultMale));
            assert!(child >= 1.5 * spread(&p, SpeakerGroup::AdultFemale));
        }
    }
}
