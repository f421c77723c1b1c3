//! Exhaustive Hamming matching with mutual-best, ratio and distance filters.

use serde::{Deserialize, Serialize};

use super::features::Descriptor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    /// A match survives only if `best < ratio · second_best`.
    pub ratio: f64,
    pub max_distance: u32,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { ratio: 0.8, max_distance: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Match {
    pub a: usize,
    pub b: usize,
    pub distance: u32,
}

/// Best and second-best distance of `d` against `set`; ties go to the lowest index.
fn best_two(d: &Descriptor, set: &[Descriptor]) -> Option<(usize, u32, Option<u32>)> {
    let mut best: Option<(usize, u32)> = None;
    let mut second: Option<u32> = None;
    for (j, e) in set.iter().enumerate() {
        let dist = d.hamming(e);
        match best {
            None => best = Some((j, dist)),
            Some((_, bd)) if dist < bd => {
                second = Some(bd);
                best = Some((j, dist));
            }
            Some(_) => {
                if second.is_none_or(|s| dist < s) {
                    second = Some(dist);
                }
            }
        }
    }
    best.map(|(j, d)| (j, d, second))
}

/// Matches sorted by index into `a`.
pub fn match_descriptors(a: &[Descriptor], b: &[Descriptor], cfg: &MatchConfig) -> Vec<Match> {
    let back: Vec<Option<usize>> = b.iter().map(|d| best_two(d, a).map(|(i, _, _)| i)).collect();
    let mut out = Vec::new();
    for (i, d) in a.iter().enumerate() {
        let Some((j, dist, second)) = best_two(d, b) else {
            continue;
        };
        if back[j] != Some(i) || dist > cfg.max_distance {
            continue;
        }
        if let Some(s) = second {
            if !((dist as f64) < cfg.ratio * s as f64) {
                continue;
            }
        }
        out.push(Match { a: i, b: j, distance: dist });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_desc(rng: &mut impl Rng) -> Descriptor {
        Descriptor([rng.random(), rng.random(), rng.random(), rng.random()])
    }

    /// Straight transcription of the three filters over the full distance table.
    fn oracle(a: &[Descriptor], b: &[Descriptor], cfg: &MatchConfig) -> Vec<Match> {
        let table: Vec<Vec<u32>> = a.iter().map(|x| b.iter().map(|y| x.hamming(y)).collect()).collect();
        let argmin = |v: &[u32]| (0..v.len()).min_by_key(|&k| (v[k], k));
        let mut out = Vec::new();
        for i in 0..a.len() {
            let Some(j) = argmin(&table[i]) else { continue };
            let col: Vec<u32> = (0..a.len()).map(|r| table[r][j]).collect();
            if argmin(&col) != Some(i) {
                continue;
            }
            let d = table[i][j];
            let mut rest: Vec<u32> = table[i].clone();
            rest.remove(j);
            let ratio_ok = rest.iter().min().is_none_or(|&s| (d as f64) < cfg.ratio * s as f64);
            if ratio_ok && d <= cfg.max_distance {
                out.push(Match { a: i, b: j, distance: d });
            }
        }
        out
    }

    #[test]
    fn identical_sets_match_identically() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<Descriptor> = (0..20).map(|_| random_desc(&mut rng)).collect();
        let m = match_descriptors(&a, &a, &MatchConfig::default());
        assert_eq!(m.len(), 20);
        assert!(m.iter().all(|m| m.a == m.b && m.distance == 0));
    }

    #[test]
    fn complement_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = random_desc(&mut rng);
        assert!(match_descriptors(&[d], &[d.complement()], &MatchConfig::default()).is_empty());
    }

    #[test]
    fn random_instances_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = MatchConfig { ratio: 0.8, max_distance: 256 };
        for _ in 0..50 {
            let a: Vec<Descriptor> = (0..20).map(|_| random_desc(&mut rng)).collect();
            let b: Vec<Descriptor> = (0..20).map(|_| random_desc(&mut rng)).collect();
            assert_eq!(match_descriptors(&a, &b, &cfg), oracle(&a, &b, &cfg));
        }
    }

    fn near_copies(seed: u64, n: usize, m: usize, flips: u32) -> (Vec<Descriptor>, Vec<Descriptor>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<Descriptor> = (0..n).map(|_| random_desc(&mut rng)).collect();
        let mut b: Vec<Descriptor> = a
            .iter()
            .take(m)
            .map(|d| {
                let mut e = *d;
                for _ in 0..rng.random_range(0..=flips) {
                    let bit = rng.random_range(0..256);
                    e.0[bit / 64] ^= 1 << (bit % 64);
                }
                e
            })
            .collect();
        while b.len() < m {
            b.push(random_desc(&mut rng));
        }
        (a, b)
    }

    proptest! {
        #[test]
        fn matcher_equals_oracle(seed in any::<u64>(), n in 0usize..=32, m in 0usize..=32, flips in 0u32..120) {
            let (a, b) = near_copies(seed, n, m, flips);
            let cfg = MatchConfig::default();
            prop_assert_eq!(match_descriptors(&a, &b, &cfg), oracle(&a, &b, &cfg));
        }
    }
}
