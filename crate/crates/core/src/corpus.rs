//! Corpus ingestion: sentence splitting, tokenization, vocabulary building,
//! length filtering and padded batch encoding.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
pub const NUM_SPECIALS: u32 = 4;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";

/// One raw review plus its optional reference summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub id: String,
    pub text: String,
    pub summary: Option<String>,
}

/// A review after tokenization and id encoding. Sentences carry BOS/EOS
/// sentinels; the reference does not.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Vec<u32>>,
    pub reference: Option<Vec<u32>>,
    pub reference_text: Option<String>,
}

impl Document {
    pub fn n(&self) -> usize {
        self.sentences.len()
    }

    /// Content tokens per sentence, excluding BOS (EOS is a prediction target).
    pub fn target_len(&self, i: usize) -> usize {
        self.sentences[i].len() - 1
    }
}

/// Token <-> id bijection with the four reserved specials at ids 0..3.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>) -> Self {
        let mut index = HashMap::with_capacity(tokens.len() + 4);
        for (i, t) in tokens.iter().enumerate() {
            index.insert(t.clone(), i as u32 + NUM_SPECIALS);
        }
        Vocab { tokens, index }
    }

    pub fn size(&self) -> usize {
        self.tokens.len() + NUM_SPECIALS as usize
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> &str {
        match id {
            PAD => PAD_TOKEN,
            UNK => UNK_TOKEN,
            BOS => BOS_TOKEN,
            EOS => EOS_TOKEN,
            _ => &self.tokens[(id - NUM_SPECIALS) as usize],
        }
    }

    /// Plain-text persistence, one token per line, line number = id - 4.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut tokens = Vec::new();
        for line in BufReader::new(file).lines() {
            tokens.push(line?);
        }
        Ok(Vocab::from_tokens(tokens))
    }

    /// SHA-256 over the persisted byte representation, used by checkpoints
    /// to detect vocabulary mismatches.
    pub fn hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        h.finalize().into()
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }
}

/// Splits on sentence-final punctuation followed by whitespace.
pub fn split_sentences(text: &str) -> Result<Vec<String>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        if matches!(chars[i], '.' | '!' | '?') {
            // swallow runs like "?!" or "..."
            let mut end = i + 1;
            while end < chars.len() && matches!(chars[end], '.' | '!' | '?') {
                end += 1;
            }
            if end >= chars.len() || chars[end].is_whitespace() {
                let seg: String = chars[start..end].iter().collect();
                let seg = seg.trim();
                if !seg.is_empty() {
                    out.push(seg.to_string());
                }
                start = end;
                i = end;
                continue;
            }
        }
        i += 1;
    }
    if start < chars.len() {
        let seg: String = chars[start..].iter().collect();
        let seg = seg.trim();
        if !seg.is_empty() {
            out.push(seg.to_string());
        }
    }
    if out.is_empty() {
        return Err(CoreError::EmptyDocument);
    }
    Ok(out)
}

/// Lowercases, splits on whitespace, and peels leading/trailing ASCII
/// punctuation into standalone tokens. Interior punctuation ("it's") stays.
pub fn tokenize(sentence: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in sentence.to_lowercase().split_whitespace() {
        let chars: Vec<char> = word.chars().collect();
        let mut lo = 0;
        let mut hi = chars.len();
        let mut leading = Vec::new();
        while lo < hi && chars[lo].is_ascii_punctuation() {
            leading.push(chars[lo].to_string());
            lo += 1;
        }
        let mut trailing = Vec::new();
        while hi > lo && chars[hi - 1].is_ascii_punctuation() {
            trailing.push(chars[hi - 1].to_string());
            hi -= 1;
        }
        out.extend(leading);
        if lo < hi {
            out.push(chars[lo..hi].iter().collect());
        }
        trailing.reverse();
        out.extend(trailing);
    }
    out
}

/// Keeps the `cap` most frequent tokens; ties broken lexicographically.
pub fn build_vocab<'a, I>(token_streams: I, cap: usize) -> Vocab
where
    I: IntoIterator<Item = &'a [String]>,
{
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for stream in token_streams {
        for tok in stream {
            *counts.entry(tok.as_str()).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(cap);
    Vocab::from_tokens(ranked.into_iter().map(|(t, _)| t.to_string()).collect())
}

/// Keeps records whose sentence count meets the minimum.
pub fn filter_corpus(records: Vec<ReviewRecord>, min_sentences: usize) -> Vec<ReviewRecord> {
    assert!(min_sentences >= 1);
    records
        .into_iter()
        .filter(|r| match split_sentences(&r.text) {
            Ok(sents) => sents.len() >= min_sentences,
            Err(_) => false,
        })
        .collect()
}

/// Truncation limits applied when turning records into documents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationCaps {
    pub max_sentences: usize,
    pub max_tokens_per_sentence: usize,
    pub max_reference_tokens: usize,
}

impl Default for TruncationCaps {
    fn default() -> Self {
        TruncationCaps {
            max_sentences: 40,
            max_tokens_per_sentence: 50,
            max_reference_tokens: 20,
        }
    }
}

/// Splits, tokenizes, truncates and id-encodes one record.
pub fn encode_record(record: &ReviewRecord, vocab: &Vocab, caps: &TruncationCaps) -> Result<Document> {
    let mut sentences = Vec::new();
    for sent in split_sentences(&record.text)?.into_iter().take(caps.max_sentences) {
        let mut toks = tokenize(&sent);
        if toks.is_empty() {
            continue;
        }
        toks.truncate(caps.max_tokens_per_sentence);
        let mut ids = Vec::with_capacity(toks.len() + 2);
        ids.push(BOS);
        ids.extend(vocab.encode(&toks));
        ids.push(EOS);
        sentences.push(ids);
    }
    if sentences.is_empty() {
        return Err(CoreError::EmptyDocument);
    }
    let (reference, reference_text) = match &record.summary {
        Some(s) => {
            let mut toks = tokenize(s);
            toks.truncate(caps.max_reference_tokens);
            (Some(vocab.encode(&toks)), Some(s.clone()))
        }
        None => (None, None),
    };
    Ok(Document {
        id: record.id.clone(),
        sentences,
        reference,
        reference_text,
    })
}

/// Rectangular [batch x max_n x max_len] id tensor with masks that recover
/// the original ragged layout exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedBatch {
    pub ids: Vec<Vec<Vec<u32>>>,
    /// true where a sentence slot holds a real sentence
    pub sentence_mask: Vec<Vec<bool>>,
    /// original token count per real sentence
    pub token_lens: Vec<Vec<usize>>,
}

pub fn encode_batch(docs: &[Document], pad_id: u32) -> EncodedBatch {
    assert!(!docs.is_empty());
    let max_n = docs.iter().map(Document::n).max().unwrap();
    let max_len = docs
        .iter()
        .flat_map(|d| d.sentences.iter().map(Vec::len))
        .max()
        .unwrap();
    let mut ids = Vec::with_capacity(docs.len());
    let mut sentence_mask = Vec::with_capacity(docs.len());
    let mut token_lens = Vec::with_capacity(docs.len());
    for doc in docs {
        let mut doc_ids = Vec::with_capacity(max_n);
        let mut mask = Vec::with_capacity(max_n);
        let mut lens = Vec::with_capacity(doc.n());
        for s in 0..max_n {
            if s < doc.n() {
                let mut row = doc.sentences[s].clone();
                lens.push(row.len());
                row.resize(max_len, pad_id);
                doc_ids.push(row);
                mask.push(true);
            } else {
                doc_ids.push(vec![pad_id; max_len]);
                mask.push(false);
            }
        }
        ids.push(doc_ids);
        sentence_mask.push(mask);
        token_lens.push(lens);
    }
    EncodedBatch {
        ids,
        sentence_mask,
        token_lens,
    }
}

impl EncodedBatch {
    /// Strips padding back off; inverse of `encode_batch` up to ids.
    pub fn decode(&self) -> Vec<Vec<Vec<u32>>> {
        self.ids
            .iter()
            .zip(&self.token_lens)
            .map(|(doc, lens)| {
                doc.iter()
                    .zip(lens)
                    .map(|(row, &len)| row[..len].to_vec())
                    .collect()
            })
            .collect()
    }
}

/// Maps record field names; the Amazon dump uses "reviewText" for the body.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct FieldMap {
    pub text: String,
    pub summary: String,
    pub id: Option<String>,
}

impl Default for FieldMap {
    fn default() -> Self {
        FieldMap {
            text: "text".into(),
            summary: "summary".into(),
            id: None,
        }
    }
}

/// Reads a JSON Lines review file. Malformed lines are reported with their
/// 1-based line number.
pub fn read_jsonl<R: Read>(reader: R, fields: &FieldMap) -> Result<Vec<ReviewRecord>> {
    let mut records = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| CoreError::MalformedInput {
                line: lineno + 1,
                message: e.to_string(),
            })?;
        let text = value
            .get(&fields.text)
            .and_then(|v| v.as_str())
            .ok_or_else(|| CoreError::MalformedInput {
                line: lineno + 1,
                message: format!("missing string field \"{}\"", fields.text),
            })?;
        if text.is_empty() {
            return Err(CoreError::MalformedInput {
                line: lineno + 1,
                message: "empty review text".into(),
            });
        }
        let summary = value
            .get(&fields.summary)
            .and_then(|v| v.as_str())
            .map(str::to_string);
        let id = fields
            .id
            .as_ref()
            .and_then(|f| value.get(f))
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .unwrap_or_else(|| format!("line-{}", lineno + 1));
        records.push(ReviewRecord {
            id,
            text: text.to_string(),
            summary,
        });
    }
    Ok(records)
}

pub fn read_jsonl_path(path: &Path, fields: &FieldMap) -> Result<Vec<ReviewRecord>> {
    read_jsonl(std::fs::File::open(path)?, fields)
}

/// Writes encoded documents as JSON Lines, one document per line.
pub fn write_documents(path: &Path, docs: &[Document]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for doc in docs {
        serde_json::to_writer(&mut file, doc)?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_documents(path: &Path) -> Result<Vec<Document>> {
    let file = std::fs::File::open(path)?;
    let mut docs = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        docs.push(serde_json::from_str(&line)?);
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_terminal_punctuation() {
        let sents = split_sentences("Great toy. My son loves it!").unwrap();
        assert_eq!(sents, vec!["Great toy.", "My son loves it!"]);
    }

    #[test]
    fn unpunctuated_text_is_one_sentence() {
        let sents = split_sentences("No punctuation here").unwrap();
        assert_eq!(sents, vec!["No punctuation here"]);
    }

    #[test]
    fn whitespace_only_is_empty_document() {
        assert!(matches!(split_sentences("   "), Err(CoreError::EmptyDocument)));
    }

    #[test]
    fn abbreviation_like_runs_do_not_split_mid_word() {
        let sents = split_sentences("Wait... what?! Ok.").unwrap();
        assert_eq!(sents, vec!["Wait...", "what?!", "Ok."]);
    }

    #[test]
    fn tokenize_keeps_interior_apostrophes() {
        assert_eq!(tokenize("It's GREAT!"), vec!["it's", "great", "!"]);
        assert_eq!(tokenize("a b"), vec!["a", "b"]);
        assert_eq!(tokenize("(nice)"), vec!["(", "nice", ")"]);
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn vocab_keeps_most_frequent() {
        let stream = toks("a a b");
        let v = build_vocab([stream.as_slice()], 1);
        assert_eq!(v.size(), 5);
        assert_eq!(v.id("a"), 4);
        assert_eq!(v.id("b"), UNK);
    }

    #[test]
    fn vocab_cap_above_distinct_keeps_all() {
        let stream = toks("a b c");
        let v = build_vocab([stream.as_slice()], 100);
        assert_eq!(v.size(), 7);
    }

    #[test]
    fn vocab_tie_breaks_lexicographically() {
        let stream = toks("x y x y");
        let v = build_vocab([stream.as_slice()], 1);
        assert_eq!(v.id("x"), 4);
        assert_eq!(v.id("y"), UNK);
    }

    #[test]
    fn filter_by_sentence_count() {
        let nine = (0..9).map(|i| format!("S{i}.")).collect::<Vec<_>>().join(" ");
        let five = (0..5).map(|i| format!("S{i}.")).collect::<Vec<_>>().join(" ");
        let records = vec![
            ReviewRecord { id: "a".into(), text: nine, summary: None },
            ReviewRecord { id: "b".into(), text: five.clone(), summary: None },
        ];
        let kept = filter_corpus(records.clone(), 10);
        assert!(kept.is_empty());
        let kept = filter_corpus(records.clone(), 5);
        assert_eq!(kept.len(), 2);
        let kept = filter_corpus(records, 1);
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn batch_round_trip() {
        let vocab = build_vocab([toks("a b c d").as_slice()], 10);
        let caps = TruncationCaps::default();
        let d1 = encode_record(
            &ReviewRecord { id: "1".into(), text: "a b. c.".into(), summary: None },
            &vocab,
            &caps,
        )
        .unwrap();
        let d2 = encode_record(
            &ReviewRecord { id: "2".into(), text: "a. b c d. c.".into(), summary: None },
            &vocab,
            &caps,
        )
        .unwrap();
        let batch = encode_batch(&[d1.clone(), d2.clone()], PAD);
        assert!(!batch.sentence_mask[0][2]);
        assert!(batch.sentence_mask[1][2]);
        let decoded = batch.decode();
        assert_eq!(decoded[0], d1.sentences);
        assert_eq!(decoded[1], d2.sentences);
    }

    #[test]
    fn single_doc_batch_is_identity_layout() {
        let vocab = build_vocab([toks("a b").as_slice()], 10);
        let d = encode_record(
            &ReviewRecord { id: "1".into(), text: "a b. a b.".into(), summary: None },
            &vocab,
            &TruncationCaps::default(),
        )
        .unwrap();
        let batch = encode_batch(std::slice::from_ref(&d), PAD);
        assert_eq!(batch.decode()[0], d.sentences);
        assert!(batch.sentence_mask[0].iter().all(|&m| m));
    }

    #[test]
    fn jsonl_field_mapping_and_errors() {
        let fields = FieldMap { text: "reviewText".into(), summary: "summary".into(), id: None };
        let data = "{\"reviewText\": \"Good. Bad.\", \"summary\": \"ok\"}\n";
        let recs = read_jsonl(data.as_bytes(), &fields).unwrap();
        assert_eq!(recs[0].text, "Good. Bad.");
        assert_eq!(recs[0].summary.as_deref(), Some("ok"));

        let bad = "{\"reviewText\": \"x.\"}\nnot json\n";
        let err = read_jsonl(bad.as_bytes(), &fields).unwrap_err();
        match err {
            CoreError::MalformedInput { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn vocab_save_load_round_trip_and_hash() {
        let stream = toks("b a a c c c");
        let v = build_vocab([stream.as_slice()], 10);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        v.save(&path).unwrap();
        let v2 = Vocab::load(&path).unwrap();
        assert_eq!(v.hash(), v2.hash());
        assert_eq!(v2.id("c"), 4); // most frequent first
        assert_eq!(v2.token(4), "c");
    }

    #[test]
    fn truncation_caps_apply() {
        let vocab = build_vocab([toks("a").as_slice()], 10);
        let caps = TruncationCaps { max_sentences: 2, max_tokens_per_sentence: 3, max_reference_tokens: 2 };
        let text = "a a a a a. a. a. a.";
        let doc = encode_record(
            &ReviewRecord { id: "1".into(), text: text.into(), summary: Some("a a a a".into()) },
            &vocab,
            &caps,
        )
        .unwrap();
        assert_eq!(doc.n(), 2);
        assert_eq!(doc.sentences[0].len(), 3 + 2); // 3 tokens + BOS/EOS
        assert_eq!(doc.reference.as_ref().unwrap().len(), 2);
    }
}
