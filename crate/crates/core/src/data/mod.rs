//! Corpus ingestion: tokenizing, vocabularies, padded batches and file readers.

mod batch;
mod pretrained;
mod readers;
mod vocab;

pub use batch::{encode_sentence, make_batches, window_mask, EncodedSentence, SentenceBatch};
pub use pretrained::{load_pretrained, parse_pretrained, PretrainedEmbeddings};
pub use readers::{
    group_qa, parse_classification, parse_qa, read_classification_tsv, read_qa_tsv,
    ClassificationRecord, QaGroup, QaRecord,
};
pub use vocab::{Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};

const ISOLATED: &[char] = &['.', ',', '!', '?', '\'', '"', '(', ')'];

/// Lowercases `text`, isolates `. , ! ? ' " ( )` as their own tokens and
/// splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut spaced = String::with_capacity(text.len() + 8);
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ISOLATED.contains(&ch) {
            spaced.push(' ');
            spaced.push(ch);
            spaced.push(' ');
        } else {
            spaced.push(ch);
        }
    }
    spaced.split_whitespace().map(str::to_owned).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Good food!"), vec!["good", "food", "!"]);
        assert!(tokenize("").is_empty());
        assert_eq!(
            tokenize("It's (really) \"fine\","),
            vec!["it", "'", "s", "(", "really", ")", "\"", "fine", "\"", ","]
        );
    }

    proptest! {
        #[test]
        fn tokenize_is_idempotent(text in "[ a-zA-Z.,!?'\"()\t]{0,40}") {
            let once = tokenize(&text);
            let twice = tokenize(&once.join(" "));
            prop_assert_eq!(once, twice);
        }
    }
}
