//! n-gram candidates, chi-squared selection and TF-IDF features.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Group {
    /// Word unigrams and bigrams.
    Word,
    /// Character 3-, 4- and 5-grams.
    Char,
}

impl Group {
    fn name(self) -> &'static str {
        match self {
            Group::Word => "word",
            Group::Char => "char",
        }
    }
}

/// Word uni- and bigrams of a whitespace-tokenized text.
pub fn word_ngrams(text: &str) -> Vec<String> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let mut out: Vec<String> = words.iter().map(|w| w.to_string()).collect();
    out.extend(words.windows(2).map(|p| format!("{} {}", p[0], p[1])));
    out
}

/// Character 3- to 5-grams of the text with single spaces and one space of
/// padding on each side.
pub fn char_ngrams(text: &str) -> Vec<String> {
    let norm: Vec<char> = format!(" {} ", text.split_whitespace().collect::<Vec<_>>().join(" "))
        .chars()
        .collect();
    if norm.len() <= 2 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for n in 3..=5 {
        out.extend(norm.windows(n).map(|w| w.iter().collect::<String>()));
    }
    out
}

fn ngrams(text: &str, g: Group) -> Vec<String> {
    match g {
        Group::Word => word_ngrams(text),
        Group::Char => char_ngrams(text),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub text: String,
    pub group: Group,
    pub chi2: f64,
    pub idf: f64,
}

/// Selected features: the word group first, then the char group, each in
/// descending chi-squared order.
#[derive(Debug, Clone, PartialEq)]
pub struct BowVocab {
    pub features: Vec<Feature>,
    index: BTreeMap<(Group, String), usize>,
}

/// Chi-squared statistic of every feature's document presence against the
/// class labels: `sum_c (O_c - E_c)^2 / E_c` with `O_c` the number of class
/// `c` documents containing the feature and `E_c = df * n_c / N`.
pub fn chi2_scores(docs: &[BTreeSet<String>], labels: &[usize], classes: usize) -> Result<BTreeMap<String, f64>> {
    let n = docs.len();
    let mut class_n = vec![0usize; classes];
    for &l in labels {
        if l >= classes {
            return Err(Error::Input(format!("label {l} out of range for {classes} classes")));
        }
        class_n[l] += 1;
    }
    if class_n.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::Input("chi-squared needs documents from at least two classes".into()));
    }
    let mut observed: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (d, &l) in docs.iter().zip(labels) {
        for f in d {
            observed.entry(f.as_str()).or_insert_with(|| vec![0; classes])[l] += 1;
        }
    }
    Ok(observed
        .into_iter()
        .map(|(f, o)| {
            let df: usize = o.iter().sum();
            let chi: f64 = (0..classes)
                .filter(|&c| class_n[c] > 0)
                .map(|c| {
                    let e = df as f64 * class_n[c] as f64 / n as f64;
                    (o[c] as f64 - e).powi(2) / e
                })
                .sum();
            (f.to_string(), chi)
        })
        .collect())
}

/// Smoothed inverse document frequency `ln((1 + N) / (1 + df)) + 1`.
pub fn smooth_idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

impl BowVocab {
    /// Select the `per_group` highest chi-squared features of each group
    /// (ties broken lexicographically) from training documents only.
    pub fn build(texts: &[String], labels: &[usize], classes: usize, per_group: usize) -> Result<Self> {
        if texts.len() != labels.len() {
            return Err(Error::Input(format!("{} texts but {} labels", texts.len(), labels.len())));
        }
        let mut features = Vec::new();
        for g in [Group::Word, Group::Char] {
            let docs: Vec<BTreeSet<String>> = texts.iter().map(|t| ngrams(t, g).into_iter().collect()).collect();
            let scores = chi2_scores(&docs, labels, classes)?;
            let mut ranked: Vec<(String, f64)> = scores.into_iter().collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            ranked.truncate(per_group);
            for (text, chi2) in ranked {
                let df = docs.iter().filter(|d| d.contains(&text)).count();
                features.push(Feature {
                    idf: smooth_idf(docs.len(), df),
                    text,
                    group: g,
                    chi2,
                });
            }
        }
        Ok(Self::from_features(features))
    }

    fn from_features(features: Vec<Feature>) -> Self {
        let index = features
            .iter()
            .enumerate()
            .map(|(i, f)| ((f.group, f.text.clone()), i))
            .collect();
        Self { features, index }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn group_len(&self, g: Group) -> usize {
        self.features.iter().filter(|f| f.group == g).count()
    }

    /// Raw counts times IDF, L2-normalized over the whole vector. Text with
    /// no selected n-gram maps to the zero vector.
    pub fn featurize(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0.0f64; self.len()];
        for g in [Group::Word, Group::Char] {
            for t in ngrams(text, g) {
                if let Some(&i) = self.index.get(&(g, t)) {
                    v[i] += 1.0;
                }
            }
        }
        for (x, f) in v.iter_mut().zip(&self.features) {
            *x *= f.idf;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| if norm > 0.0 { (x / norm) as f32 } else { 0.0 }).collect()
    }

    /// One line per feature: `feature<TAB>group<TAB>chi2<TAB>idf`.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# bow-vocab 1\n");
        for f in &self.features {
            s += &format!("{}\t{}\t{}\t{}\n", f.text, f.group.name(), f.chi2, f.idf);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let err = |line: usize, m: &str| Error::format("vocab", format!("line {}: {m}", line + 1));
        let mut lines = text.lines().enumerate();
        if lines.next().map(|(_, l)| l) != Some("# bow-vocab 1") {
            return Err(err(0, "missing `# bow-vocab 1` header"));
        }
        let mut features = Vec::new();
        for (i, l) in lines {
            let f: Vec<&str> = l.split('\t').collect();
            if f.len() != 4 {
                return Err(err(i, "expected 4 tab-separated fields"));
            }
            features.push(Feature {
                text: f[0].to_string(),
                group: match f[1] {
                    "word" => Group::Word,
                    "char" => Group::Char,
                    _ => return Err(err(i, "group must be word or char")),
                },
                chi2: f[2].parse().map_err(|_| err(i, "bad chi2"))?,
                idf: f[3].parse().map_err(|_| err(i, "bad idf"))?,
            });
        }
        Ok(Self::from_features(features))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn ngram_extraction() {
        assert_eq!(word_ngrams("is he ok"), s(&["is", "he", "ok", "is he", "he ok"]));
        let c = char_ngrams("ab");
        assert_eq!(c, s(&[" ab", "ab ", " ab "]));
        assert!(char_ngrams("").is_empty());
    }

    #[test]
    fn chi2_matches_hand_computation() {
        // four documents, classes 1 1 0 0
        let texts = s(&["breathing now", "breathing", "hello there", "hello now"]);
        let labels = [1, 1, 0, 0];
        let docs: Vec<BTreeSet<String>> = texts.iter().map(|t| word_ngrams(t).into_iter().collect()).collect();
        let c = chi2_scores(&docs, &labels, 2).unwrap();
        // "breathing": O = (0, 2), E = (1, 1) -> 1 + 1 = 2
        assert!((c["breathing"] - 2.0).abs() < 1e-12);
        assert!((c["hello"] - 2.0).abs() < 1e-12);
        // "now": O = (1, 1), E = (1, 1) -> 0
        assert!(c["now"].abs() < 1e-12);
        // "there": O = (1, 0), E = (0.5, 0.5) -> 0.5 + 0.5
        assert!((c["there"] - 1.0).abs() < 1e-12);
        let v = BowVocab::build(&texts, &labels, 2, 3).unwrap();
        let words: Vec<&str> = v.features.iter().filter(|f| f.group == Group::Word).map(|f| f.text.as_str()).collect();
        // ties resolved lexicographically
        assert_eq!(words, ["breathing", "hello", "breathing now"]);
    }

    #[test]
    fn single_class_corpus_is_rejected() {
        assert!(BowVocab::build(&s(&["a b", "c d"]), &[1, 1], 6, 10).is_err());
    }

    #[test]
    fn tfidf_matches_oracle() {
        let texts = s(&["is he breathing", "he is old", "okay"]);
        let v = BowVocab::build(&texts, &[4, 3, 0], 6, 500).unwrap();
        let x = v.featurize("is he is");
        // oracle over the word group only, then the char group joins the norm
        let mut raw = vec![0.0f64; v.len()];
        for (i, f) in v.features.iter().enumerate() {
            let count = match f.group {
                Group::Word => word_ngrams("is he is").iter().filter(|g| **g == f.text).count(),
                Group::Char => char_ngrams("is he is").iter().filter(|g| **g == f.text).count(),
            };
            let df = texts
                .iter()
                .filter(|t| match f.group {
                    Group::Word => word_ngrams(t).contains(&f.text),
                    Group::Char => char_ngrams(t).contains(&f.text),
                })
                .count();
            raw[i] = count as f64 * (((1.0 + 3.0) / (1.0 + df as f64)).ln() + 1.0);
        }
        let norm = raw.iter().map(|r| r * r).sum::<f64>().sqrt();
        for (a, b) in x.iter().zip(&raw) {
            assert!((*a as f64 - b / norm).abs() < 1e-6);
        }
        assert!(v.featurize("").iter().all(|&z| z == 0.0));
        assert_eq!(v.featurize("he is old"), v.featurize("he is old"));
    }

    #[test]
    fn text_round_trip() {
        let v = BowVocab::build(&s(&["is he breathing", "he is old"]), &[4, 3], 6, 500).unwrap();
        assert_eq!(BowVocab::from_text(&v.to_text()).unwrap(), v);
        assert!(BowVocab::from_text("nope").is_err());
    }
}
