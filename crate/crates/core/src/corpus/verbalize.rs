use crate::error::{Error, Result};

/// `"<category> <name>"`, or the bare name when there is no category.
pub fn verbalize_entity(name: &str, category: Option<&str>) -> Result<String> {
    if name.is_empty() {
        return Err(Error::Input("entity name is empty".into()));
    }
    Ok(match category.filter(|c| !c.is_empty()) {
        Some(c) => format!("{c} {name}"),
        None => name.to_owned(),
    })
}

/// The one-word-limitation prompt whose last-token state serves as the
/// embedding. Both quotes are U+0027; the output is used verbatim as a cache
/// key, so it must stay byte-stable.
pub fn eol_prompt(phrase: &str) -> Result<String> {
    if phrase.is_empty() {
        return Err(Error::Input("phrase is empty".into()));
    }
    Ok(format!("The description of the term '{phrase}' in one word is"))
}
