#![no_main]

use libfuzzer_sys::fuzz_target;
use vsmquant::corpus::{corpus_stats, parse_corpus};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(corpus) = parse_corpus(text) else { return };
    assert_eq!(corpus.class_counts().iter().sum::<usize>(), corpus.doc_count());
    for d in corpus.documents() {
        assert!(!d.tokens.is_empty());
        assert!(d.label_id < corpus.n_classes());
    }
    if corpus.doc_count() > 0 {
        corpus_stats(&corpus).unwrap();
    }
});
