//! Reader and writer for the WordNet "grind" database layout (`data.noun`,
//! `index.noun`).

use std::io::BufRead;

use super::{SynsetId, WordNetError};

/// One parsed `data.noun` record, before graph resolution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct DataRecord {
    pub offset: SynsetId,
    pub lex_filenum: u8,
    pub lemmas: Vec<String>,
    pub hypernyms: Vec<SynsetId>,
    pub gloss: String,
}

/// One parsed `index.noun` record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct IndexRecord {
    pub lemma: String,
    pub offsets: Vec<SynsetId>,
}

fn malformed(file: &str, line: usize, reason: impl Into<String>) -> WordNetError {
    WordNetError::MalformedLine {
        file: file.to_string(),
        line,
        reason: reason.into(),
    }
}

/// Yields `(line_number, text)` for every content line: the license header
/// (lines starting with two spaces) and blank lines are skipped.
fn content_lines<R: BufRead>(
    reader: R,
    file: &'static str,
) -> impl Iterator<Item = Result<(usize, String), WordNetError>> {
    reader
        .lines()
        .enumerate()
        .filter_map(move |(i, line)| match line {
            Err(e) => Some(Err(WordNetError::Io {
                path: file.into(),
                source: e,
            })),
            Ok(text) if text.starts_with("  ") || text.trim().is_empty() => None,
            Ok(text) => Some(Ok((i + 1, text))),
        })
}

fn parse_offset(tok: &str, file: &str, line: usize) -> Result<SynsetId, WordNetError> {
    if tok.len() != 8 || !tok.bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed(file, line, format!("bad synset offset {tok:?}")));
    }
    tok.parse()
        .map(SynsetId)
        .map_err(|_| malformed(file, line, format!("bad synset offset {tok:?}")))
}

pub(crate) fn parse_data<R: BufRead>(reader: R) -> Result<Vec<DataRecord>, WordNetError> {
    const FILE: &str = "data.noun";
    let mut out = Vec::new();
    for item in content_lines(reader, FILE) {
        let (ln, text) = item?;
        let (fields, gloss) = match text.split_once('|') {
            Some((f, g)) => (f, g.trim().to_string()),
            None => (text.as_str(), String::new()),
        };
        let mut toks = fields.split_ascii_whitespace();
        let mut next = |what: &str| {
            toks.next()
                .ok_or_else(|| malformed(FILE, ln, format!("missing {what}")))
        };

        let offset = parse_offset(next("offset")?, FILE, ln)?;
        let lex_tok = next("lex_filenum")?;
        let lex_filenum = lex_tok
            .parse::<u8>()
            .map_err(|_| malformed(FILE, ln, format!("bad lex_filenum {lex_tok:?}")))?;
        let ss_type = next("ss_type")?;
        if ss_type != "n" {
            return Err(malformed(FILE, ln, format!("unexpected ss_type {ss_type:?}")));
        }
        let w_tok = next("w_cnt")?;
        let w_cnt = usize::from_str_radix(w_tok, 16)
            .map_err(|_| malformed(FILE, ln, format!("bad w_cnt {w_tok:?}")))?;
        if w_cnt == 0 {
            return Err(malformed(FILE, ln, "synset without lemmas"));
        }
        let mut lemmas = Vec::with_capacity(w_cnt);
        for _ in 0..w_cnt {
            let word = next("word")?;
            let lex_id = next("lex_id")?;
            u8::from_str_radix(lex_id, 16)
                .map_err(|_| malformed(FILE, ln, format!("bad lex_id {lex_id:?}")))?;
            lemmas.push(word.to_lowercase());
        }
        let p_tok = next("p_cnt")?;
        let p_cnt: usize = p_tok
            .parse()
            .map_err(|_| malformed(FILE, ln, format!("bad p_cnt {p_tok:?}")))?;
        let mut hypernyms = Vec::new();
        for _ in 0..p_cnt {
            let symbol = next("pointer symbol")?;
            let target = parse_offset(next("pointer offset")?, FILE, ln)?;
            let pos = next("pointer pos")?;
            let st = next("pointer source/target")?;
            if st.len() != 4 || u16::from_str_radix(st, 16).is_err() {
                return Err(malformed(FILE, ln, format!("bad source/target {st:?}")));
            }
            if (symbol == "@" || symbol == "@i") && pos == "n" && !hypernyms.contains(&target) {
                hypernyms.push(target);
            }
        }
        if let Some(extra) = toks.next() {
            return Err(malformed(FILE, ln, format!("trailing field {extra:?}")));
        }
        out.push(DataRecord {
            offset,
            lex_filenum,
            lemmas,
            hypernyms,
            gloss,
        });
    }
    Ok(out)
}

pub(crate) fn parse_index<R: BufRead>(reader: R) -> Result<Vec<IndexRecord>, WordNetError> {
    const FILE: &str = "index.noun";
    let mut out = Vec::new();
    for item in content_lines(reader, FILE) {
        let (ln, text) = item?;
        let toks: Vec<&str> = text.split_ascii_whitespace().collect();
        let num = |i: usize, what: &str| -> Result<usize, WordNetError> {
            toks.get(i)
                .ok_or_else(|| malformed(FILE, ln, format!("missing {what}")))?
                .parse()
                .map_err(|_| malformed(FILE, ln, format!("bad {what}")))
        };
        if toks.len() < 4 {
            return Err(malformed(FILE, ln, "too few fields"));
        }
        let synset_cnt = num(2, "synset_cnt")?;
        let p_cnt = num(3, "p_cnt")?;
        // lemma pos synset_cnt p_cnt [ptr]*p_cnt sense_cnt tagsense_cnt [offset]*synset_cnt
        let first_offset = 4 + p_cnt + 2;
        if toks.len() != first_offset + synset_cnt {
            return Err(malformed(
                FILE,
                ln,
                format!(
                    "expected {} fields, found {}",
                    first_offset + synset_cnt,
                    toks.len()
                ),
            ));
        }
        num(4 + p_cnt, "sense_cnt")?;
        num(5 + p_cnt, "tagsense_cnt")?;
        let offsets = toks[first_offset..]
            .iter()
            .map(|t| parse_offset(t, FILE, ln))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(IndexRecord {
            lemma: toks[0].to_lowercase(),
            offsets,
        });
    }
    Ok(out)
}

pub(crate) fn write_data_line(out: &mut String, rec: &DataRecord) {
    use std::fmt::Write;
    let _ = write!(
        out,
        "{} {:02} n {:02x}",
        rec.offset, rec.lex_filenum, rec.lemmas.len()
    );
    for lemma in &rec.lemmas {
        let _ = write!(out, " {lemma} 0");
    }
    let _ = write!(out, " {:03}", rec.hypernyms.len());
    for h in &rec.hypernyms {
        let _ = write!(out, " @ {h} n 0000");
    }
    let _ = writeln!(out, " | {}", rec.gloss);
}

pub(crate) fn write_index_line(out: &mut String, rec: &IndexRecord) {
    use std::fmt::Write;
    let _ = write!(
        out,
        "{} n {} 0 {} 0",
        rec.lemma,
        rec.offsets.len(),
        rec.offsets.len()
    );
    for o in &rec.offsets {
        let _ = write!(out, " {o}");
    }
    out.push_str("  \n");
}
