/// A token with its byte range in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
}

impl Token<'_> {
    pub fn is_word(&self) -> bool {
        is_word_token(self.text)
    }
}

/// Word tokens start with an alphanumeric character; everything else is
/// punctuation.
pub fn is_word_token(token: &str) -> bool {
    token.chars().next().is_some_and(char::is_alphanumeric)
}

fn is_joiner(c: char) -> bool {
    matches!(c, '-' | '\'' | '\u{2019}')
}

/// Splits text into words and punctuation.
///
/// A word is a run of alphanumeric characters, optionally joined by a single
/// hyphen or apostrophe between two alphanumerics ("African-American",
/// "don't"). Whitespace separates tokens; every other character is a token
/// of its own.
pub fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if !c.is_alphanumeric() {
            let end = start + c.len_utf8();
            out.push(Token {
                text: &text[start..end],
                start,
                end,
            });
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < chars.len() {
            let c = chars[j].1;
            if c.is_alphanumeric() {
                j += 1;
            } else if is_joiner(c) && chars.get(j + 1).is_some_and(|&(_, n)| n.is_alphanumeric()) {
                j += 2;
            } else {
                break;
            }
        }
        let end = chars.get(j).map_or(text.len(), |&(b, _)| b);
        out.push(Token {
            text: &text[start..end],
            start,
            end,
        });
        i = j;
    }
    out
}

/// Token strings only.
pub fn tokens(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.text.to_string()).collect()
}
