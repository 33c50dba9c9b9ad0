//! CoNLL column format: whitespace-separated columns, one token per line,
//! blank line between sentences, `-DOCSTART-` lines skipped.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::types::{CorpusError, RawCorpus, Sentence};

pub fn load_conll(
    path: &Path,
    token_column: usize,
    label_column: usize,
) -> Result<RawCorpus, CorpusError> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut corpus = Vec::new();
    let mut tokens: Vec<String> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let want = token_column.max(label_column) + 1;

    let mut flush = |tokens: &mut Vec<String>, labels: &mut Vec<String>| -> Result<(), CorpusError> {
        if !tokens.is_empty() {
            corpus.push((Sentence::new(std::mem::take(tokens))?, std::mem::take(labels)));
        }
        Ok(())
    };

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            flush(&mut tokens, &mut labels)?;
            continue;
        }
        if trimmed.starts_with("-DOCSTART-") {
            continue;
        }
        let cols: Vec<&str> = trimmed.split_whitespace().collect();
        if cols.len() < want {
            return Err(CorpusError::RaggedColumns {
                line: lineno + 1,
                want,
                found: cols.len(),
            });
        }
        tokens.push(cols[token_column].to_string());
        labels.push(cols[label_column].to_string());
    }
    flush(&mut tokens, &mut labels)?;

    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok(corpus)
}

/// Write a two-column token/label file, with optional extra per-sentence
/// comment lines (used for the per-sentence energy column of `infer`).
pub fn write_conll(path: &Path, corpus: &RawCorpus) -> Result<(), CorpusError> {
    write_conll_with(path, corpus, None)
}

pub fn write_conll_with(
    path: &Path,
    corpus: &RawCorpus,
    energies: Option<&[f64]>,
) -> Result<(), CorpusError> {
    let mut out = BufWriter::new(File::create(path)?);
    for (i, (sent, labels)) in corpus.iter().enumerate() {
        for (tok, lab) in sent.tokens().iter().zip(labels) {
            match energies {
                Some(es) => writeln!(out, "{tok} {lab} {:.6}", es[i])?,
                None => writeln!(out, "{tok} {lab}")?,
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmpfile(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn two_line_sentence() {
        let f = tmpfile("dog NN\n. .\n\n");
        let corpus = load_conll(f.path(), 0, 1).unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(corpus[0].0.tokens(), &["dog", "."]);
        assert_eq!(corpus[0].1, vec!["NN", "."]);
    }

    #[test]
    fn blank_only_file_is_empty_corpus() {
        let f = tmpfile("\n\n\n");
        match load_conll(f.path(), 0, 1) {
            Err(CorpusError::EmptyCorpus) => {}
            other => panic!("expected empty corpus error, got {other:?}"),
        }
    }

    #[test]
    fn docstart_skipped() {
        let f = tmpfile("-DOCSTART- -X- O\n\ndog NN\n\n");
        let corpus = load_conll(f.path(), 0, 1).unwrap();
        assert_eq!(corpus.len(), 1);
    }

    #[test]
    fn ragged_columns_rejected() {
        let f = tmpfile("dog NN\ncat\n\n");
        assert!(matches!(
            load_conll(f.path(), 0, 1),
            Err(CorpusError::RaggedColumns { line: 2, .. })
        ));
    }

    #[test]
    fn round_trip_identity() {
        let corpus: RawCorpus = vec![
            (
                Sentence::from_strs(&["the", "dog", "barks"]),
                vec!["D".into(), "N".into(), "V".into()],
            ),
            (Sentence::from_strs(&["hi"]), vec!["UH".into()]),
        ];
        let f = tempfile::NamedTempFile::new().unwrap();
        write_conll(f.path(), &corpus).unwrap();
        let reloaded = load_conll(f.path(), 0, 1).unwrap();
        assert_eq!(reloaded, corpus);
    }
}
