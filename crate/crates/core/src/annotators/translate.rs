use crate::knowledge::Lexicon;
use crate::model::Document;
use crate::text::{primary_subtag, tokenize};

pub const TRANSLATED_FROM: &str = "translated-from";

/// Word-by-word lexicon substitution standing in for machine translation.
/// Words without a translation and all inter-token text are copied as they
/// are. The result gets id `<source id>-<target>`, the target language and
/// the source metadata plus `translated-from`.
pub fn translate_stub(doc: &Document, lexicon: &Lexicon, target_lang: &str) -> Document {
    let source = primary_subtag(&doc.language);
    let target = primary_subtag(target_lang);
    let chars: Vec<char> = doc.content.chars().collect();
    let mut content = String::with_capacity(doc.content.len());
    let mut pos = 0;
    for token in tokenize(&doc.content).into_iter().filter(|t| t.is_word()) {
        content.extend(&chars[pos..token.begin]);
        content.push_str(lexicon.translate(source, token.text, target).unwrap_or(token.text));
        pos = token.end;
    }
    content.extend(&chars[pos..]);
    let mut out = Document::new(format!("{}-{}", doc.id, target_lang), content, target_lang);
    out.collection_id = doc.collection_id.clone();
    out.metadata = doc.metadata.clone();
    out.metadata.insert(TRANSLATED_FROM.into(), doc.id.clone());
    out
}
