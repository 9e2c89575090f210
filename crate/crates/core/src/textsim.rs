//! Token-bag string similarity (cosine, extended Jaccard, Jensen-Shannon).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Cosine,
    ExtendedJaccard,
    JensenShannon,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Cosine => "cosine",
            Metric::ExtendedJaccard => "extended_jaccard",
            Metric::JensenShannon => "jensen_shannon",
        })
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cosine" => Ok(Metric::Cosine),
            "extended_jaccard" => Ok(Metric::ExtendedJaccard),
            "jensen_shannon" => Ok(Metric::JensenShannon),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

/// Multiset of lowercase tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenBag {
    counts: BTreeMap<String, u32>,
    total: u32,
}

impl TokenBag {
    pub fn counts(&self) -> &BTreeMap<String, u32> {
        &self.counts
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn get(&self, token: &str) -> u32 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    fn push(&mut self, token: &str) {
        if token.is_empty() {
            return;
        }
        *self.counts.entry(token.to_lowercase()).or_insert(0) += 1;
        self.total += 1;
    }

    fn norm_sq(&self) -> f64 {
        self.counts
            .values()
            .map(|&c| f64::from(c) * f64::from(c))
            .sum()
    }

    fn dot(&self, other: &TokenBag) -> f64 {
        self.counts
            .iter()
            .map(|(t, &c)| f64::from(c) * f64::from(other.get(t)))
            .sum()
    }
}

impl<S: AsRef<str>> FromIterator<S> for TokenBag {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut bag = TokenBag::default();
        for t in iter {
            bag.push(t.as_ref());
        }
        bag
    }
}

/// Splits on non-alphanumerics and on lowercase→uppercase boundaries.
pub fn tokenize(label: &str) -> TokenBag {
    let mut bag = TokenBag::default();
    let mut current = String::new();
    let mut prev_lower = false;
    for ch in label.chars() {
        if !ch.is_alphanumeric() {
            bag.push(&current);
            current.clear();
            prev_lower = false;
            continue;
        }
        if prev_lower && ch.is_uppercase() {
            bag.push(&current);
            current.clear();
        }
        current.push(ch);
        prev_lower = ch.is_lowercase();
    }
    bag.push(&current);
    bag
}

pub fn similarity(a: &TokenBag, b: &TokenBag, metric: Metric) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    if a == b {
        return 1.0;
    }
    let score = match metric {
        Metric::Cosine => a.dot(b) / (a.norm_sq().sqrt() * b.norm_sq().sqrt()),
        Metric::ExtendedJaccard => {
            let dot = a.dot(b);
            dot / (a.norm_sq() + b.norm_sq() - dot)
        }
        Metric::JensenShannon => 1.0 - jensen_shannon_divergence(a, b) / std::f64::consts::LN_2,
    };
    score.clamp(0.0, 1.0)
}

/// Natural-log JSD between the relative-frequency distributions of two bags.
fn jensen_shannon_divergence(a: &TokenBag, b: &TokenBag) -> f64 {
    let (ta, tb) = (f64::from(a.total), f64::from(b.total));
    let mut tokens: Vec<&String> = a.counts.keys().chain(b.counts.keys()).collect();
    tokens.sort();
    tokens.dedup();
    let mut jsd = 0.0;
    for t in tokens {
        let p = f64::from(a.get(t)) / ta;
        let q = f64::from(b.get(t)) / tb;
        let m = 0.5 * (p + q);
        let side = |x: f64| if x > 0.0 { 0.5 * x * (x / m).ln() } else { 0.0 };
        // one addition per token keeps the sum exactly symmetric
        jsd += side(p) + side(q);
    }
    jsd.max(0.0)
}

/// Best pairwise similarity between two label lists; 0 if either is empty.
pub fn annotation_similarity<A: AsRef<str>, B: AsRef<str>>(
    a: &[A],
    b: &[B],
    metric: Metric,
) -> f64 {
    let bags_b: Vec<TokenBag> = b.iter().map(|y| tokenize(y.as_ref())).collect();
    a.iter()
        .map(|x| tokenize(x.as_ref()))
        .flat_map(|bx| {
            bags_b
                .iter()
                .map(move |by| similarity(&bx, by, metric))
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max)
}
