//! Topic inspection of codewords: which words dominate the documents
//! assigned to a given centroid, and a simple word-cloud SVG.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::attribution::{subvector_attribution, AttributionConfig};
use crate::corpus::{TokenSeq, UNK_ID};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::quantizer::QuantIndex;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicMode {
    /// Raw occurrence counts.
    #[default]
    Frequency,
    /// Summed positive attribution for the pool.
    Attribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordWeight {
    pub word: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicReport {
    pub pool: usize,
    pub code: usize,
    pub doc_count: usize,
    pub words: Vec<WordWeight>,
}

/// The code of `pool` used by the most documents (ties to the lowest code).
pub fn most_populated_code(index: &QuantIndex, pool: usize) -> Option<(usize, usize)> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for (_, code) in &index.entries {
        *counts.entry(code.get(pool)).or_default() += 1;
    }
    counts
        .into_iter()
        .fold(None, |best, (c, n)| match best {
            Some((_, bn)) if bn >= n => best,
            _ => Some((c, n)),
        })
}

/// Top words of the documents whose code in `pool` equals `code`.
/// `docs` must be in the same order as `index`.
#[allow(clippy::too_many_arguments)]
pub fn topic_report<T: Scalar>(
    model: &Model<T>,
    index: &QuantIndex,
    docs: &[TokenSeq],
    pool: usize,
    code: usize,
    top_n: usize,
    mode: TopicMode,
    attribution: &AttributionConfig,
) -> Result<TopicReport> {
    if pool >= model.num_subvectors() {
        return Err(Error::OutOfRange(format!("pool {pool} of {}", model.num_subvectors())));
    }
    if code >= model.num_centroids() {
        return Err(Error::OutOfRange(format!("code {code} of {}", model.num_centroids())));
    }
    if docs.len() != index.len() {
        return Err(Error::Dimension(format!("{} documents for an index of {}", docs.len(), index.len())));
    }
    let mut weights: BTreeMap<u32, f64> = BTreeMap::new();
    let mut doc_count = 0;
    for ((_, c), tokens) in index.entries.iter().zip(docs) {
        if c.get(pool) != code {
            continue;
        }
        doc_count += 1;
        match mode {
            TopicMode::Frequency => {
                for &t in tokens.iter().filter(|&&t| t != UNK_ID) {
                    *weights.entry(t).or_default() += 1.0;
                }
            }
            TopicMode::Attribution => {
                let scores = subvector_attribution(model, tokens, pool, attribution)?;
                for (&t, s) in tokens.iter().zip(scores) {
                    let s = s.as_f64();
                    if t != UNK_ID && s > 0.0 {
                        *weights.entry(t).or_default() += s;
                    }
                }
            }
        }
    }
    let mut words: Vec<WordWeight> = weights
        .into_iter()
        .map(|(t, weight)| WordWeight { word: model.vocab.token(t).unwrap_or("<unk>").to_string(), weight })
        .collect();
    words.sort_by(|a, b| b.weight.total_cmp(&a.weight).then_with(|| a.word.cmp(&b.word)));
    words.truncate(top_n);
    Ok(TopicReport { pool, code, doc_count, words })
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
        .replace('\'', "&apos;")
}

/// Renders a report as a static word cloud: words flow left to right in
/// rows, font size scales linearly between `min_font` and `max_font` with
/// the word weight.
pub fn word_cloud_svg(report: &TopicReport, width: f64, min_font: f64, max_font: f64) -> String {
    let (lo, hi) = report
        .words
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), w| (lo.min(w.weight), hi.max(w.weight)));
    let size = |w: f64| {
        if hi > lo {
            min_font + (max_font - min_font) * (w - lo) / (hi - lo)
        } else {
            max_font
        }
    };
    let margin = 10.0;
    let mut body = String::new();
    let (mut x, mut y, mut row_h) = (margin, margin, 0.0f64);
    for w in &report.words {
        let fs = size(w.weight);
        let est = 0.6 * fs * w.word.chars().count() as f64;
        if x > margin && x + est > width - margin {
            x = margin;
            y += row_h * 1.2;
            row_h = 0.0;
        }
        row_h = row_h.max(fs);
        let _ = writeln!(
            body,
            r#"  <text x="{x:.1}" y="{:.1}" font-size="{fs:.1}" font-family="sans-serif">{}</text>"#,
            y + fs,
            escape_xml(&w.word)
        );
        x += est + 0.5 * fs;
    }
    let height = y + row_h * 1.2 + margin;
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">\n{body}</svg>\n"
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use crate::encoder::EncoderParams;
    use crate::model::ModelConfig;
    use crate::quantizer::{Codebooks, DiscreteCode};

    fn tiny_model() -> Model<f64> {
        let vocab = Vocabulary::from_tokens(["cat", "dog"]).unwrap();
        let cfg = ModelConfig { d_emb: 2, hidden: 2, dim: 2, num_subvectors: 1, num_centroids: 2, min_count: 1 };
        let enc = EncoderParams::zeros(cfg.dims(vocab.len())).unwrap();
        Model::new(vocab, enc, Codebooks::zeros(1, 2, 2).unwrap()).unwrap()
    }

    #[test]
    fn frequency_report() {
        let model = tiny_model();
        let docs = vec![TokenSeq::new(vec![1, 1, 2, 0]).unwrap()];
        let index = QuantIndex { entries: vec![("d".into(), DiscreteCode::new(vec![0]))] };
        let r = topic_report(&model, &index, &docs, 0, 0, 2, TopicMode::Frequency, &AttributionConfig::default()).unwrap();
        assert_eq!(r.doc_count, 1);
        assert_eq!(
            r.words,
            vec![WordWeight { word: "cat".into(), weight: 2.0 }, WordWeight { word: "dog".into(), weight: 1.0 }]
        );
        let empty = topic_report(&model, &index, &docs, 0, 1, 2, TopicMode::Frequency, &AttributionConfig::default()).unwrap();
        assert_eq!(empty.doc_count, 0);
        assert!(empty.words.is_empty());
        assert!(topic_report(&model, &index, &docs, 1, 0, 2, TopicMode::Frequency, &AttributionConfig::default()).is_err());
        assert!(topic_report(&model, &index, &docs, 0, 2, 2, TopicMode::Frequency, &AttributionConfig::default()).is_err());
    }

    #[test]
    fn most_populated() {
        let index = QuantIndex {
            entries: vec![
                ("a".into(), DiscreteCode::new(vec![3])),
                ("b".into(), DiscreteCode::new(vec![1])),
                ("c".into(), DiscreteCode::new(vec![3])),
                ("d".into(), DiscreteCode::new(vec![1])),
            ],
        };
        assert_eq!(most_populated_code(&index, 0), Some((1, 2)));
    }

    #[test]
    fn svg_scales_fonts() {
        let r = TopicReport {
            pool: 0,
            code: 0,
            doc_count: 1,
            words: vec![
                WordWeight { word: "big".into(), weight: 10.0 },
                WordWeight { word: "a<b".into(), weight: 0.0 },
            ],
        };
        let svg = word_cloud_svg(&r, 400.0, 10.0, 50.0);
        assert!(svg.contains(r#"font-size="50.0""#));
        assert!(svg.contains(r#"font-size="10.0""#));
        assert!(svg.contains("a&lt;b"));
        assert!(svg.starts_with("<svg"));
    }
}
