//! Praat TextGrid word tiers (long and short text formats).

use super::ConditioningError;

#[derive(Debug, Clone, PartialEq)]
pub struct WordInterval {
    pub word: String,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Str(String),
    Num(f64),
}

/// Both formats reduce to the same sequence once keys (`xmin =`), bracket
/// indices (`[1]:`) and the `<exists>` flag are removed: only quoted strings
/// and bare numbers carry information.
fn tokenize(doc: &str) -> Result<Vec<Token>, ConditioningError> {
    let mut out = Vec::new();
    let mut chars = doc.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c == '"' {
            chars.next();
            let mut s = String::new();
            loop {
                match chars.next() {
                    Some('"') => {
                        // "" is an escaped quote
                        if chars.peek() == Some(&'"') {
                            chars.next();
                            s.push('"');
                        } else {
                            break;
                        }
                    }
                    Some(ch) => s.push(ch),
                    None => return Err(ConditioningError::TextGrid("unterminated string".into())),
                }
            }
            out.push(Token::Str(s));
        } else if c == '[' {
            while let Some(ch) = chars.next() {
                if ch == ']' {
                    break;
                }
            }
        } else if c == '!' {
            // comment to end of line
            for ch in chars.by_ref() {
                if ch == '\n' {
                    break;
                }
            }
        } else if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' {
            let mut s = String::new();
            while let Some(&ch) = chars.peek() {
                if ch.is_ascii_alphanumeric() || matches!(ch, '.' | '-' | '+') {
                    s.push(ch);
                    chars.next();
                } else {
                    break;
                }
            }
            let v = s.parse::<f64>().map_err(|_| ConditioningError::TextGrid(format!("bad number {s:?}")))?;
            out.push(Token::Num(v));
        } else {
            // keys, `=`, `<exists>`, whitespace
            chars.next();
        }
    }
    Ok(out)
}

struct Cursor {
    tokens: Vec<Token>,
    pos: usize,
}

impl Cursor {
    fn next(&mut self) -> Result<Token, ConditioningError> {
        let t = self.tokens.get(self.pos).cloned().ok_or_else(|| ConditioningError::TextGrid("unexpected end of document".into()))?;
        self.pos += 1;
        Ok(t)
    }

    fn num(&mut self) -> Result<f64, ConditioningError> {
        match self.next()? {
            Token::Num(v) => Ok(v),
            Token::Str(s) => Err(ConditioningError::TextGrid(format!("expected number, found {s:?}"))),
        }
    }

    fn string(&mut self) -> Result<String, ConditioningError> {
        match self.next()? {
            Token::Str(s) => Ok(s),
            Token::Num(v) => Err(ConditioningError::TextGrid(format!("expected string, found {v}"))),
        }
    }
}

/// Intervals of the tier named `words`, with empty labels dropped.
pub fn parse_textgrid(doc: &str) -> Result<Vec<WordInterval>, ConditioningError> {
    let doc = doc.strip_prefix('\u{feff}').unwrap_or(doc);
    let mut cur = Cursor { tokens: tokenize(doc)?, pos: 0 };
    let file_type = cur.string()?;
    let object_class = cur.string()?;
    if file_type != "ooTextFile" || object_class != "TextGrid" {
        return Err(ConditioningError::TextGrid(format!("not a TextGrid: {file_type:?} {object_class:?}")));
    }
    let _xmin = cur.num()?;
    let _xmax = cur.num()?;
    let tiers = cur.num()? as usize;
    let mut words = None;
    for _ in 0..tiers {
        let class = cur.string()?;
        let name = cur.string()?;
        let _tmin = cur.num()?;
        let _tmax = cur.num()?;
        let count = cur.num()? as usize;
        let interval = match class.as_str() {
            "IntervalTier" => true,
            "TextTier" => false,
            other => return Err(ConditioningError::TextGrid(format!("unknown tier class {other:?}"))),
        };
        let mut items = Vec::new();
        for _ in 0..count {
            if interval {
                let start = cur.num()?;
                let end = cur.num()?;
                let word = cur.string()?;
                items.push(WordInterval { word, start, end });
            } else {
                cur.num()?;
                cur.string()?;
            }
        }
        if interval && name == "words" && words.is_none() {
            words = Some(items);
        }
    }
    let words = words.ok_or(ConditioningError::MissingWordsTier)?;
    validate_intervals(words.into_iter().filter(|w| !w.word.trim().is_empty()).collect())
}

fn validate_intervals(mut words: Vec<WordInterval>) -> Result<Vec<WordInterval>, ConditioningError> {
    for w in &words {
        if !(w.end > w.start) || w.start < 0.0 {
            return Err(ConditioningError::BadInterval { word: w.word.clone(), start: w.start, end: w.end });
        }
    }
    words.sort_by(|a, b| a.start.total_cmp(&b.start));
    for pair in words.windows(2) {
        if pair[1].start < pair[0].end {
            return Err(ConditioningError::OverlappingIntervals { first: pair[0].word.clone(), second: pair[1].word.clone() });
        }
    }
    Ok(words)
}

/// Long-format serialization with a single `words` tier; gaps are filled
/// with empty intervals as aligners do.
pub fn write_textgrid(words: &[WordInterval], xmax: f64) -> String {
    let mut filled = Vec::new();
    let mut t = 0.0;
    for w in words {
        if w.start > t {
            filled.push(WordInterval { word: String::new(), start: t, end: w.start });
        }
        filled.push(w.clone());
        t = w.end;
    }
    if xmax > t {
        filled.push(WordInterval { word: String::new(), start: t, end: xmax });
    }
    let mut s = String::new();
    s.push_str("File type = \"ooTextFile\"\nObject class = \"TextGrid\"\n\n");
    s.push_str(&format!("xmin = 0 \nxmax = {xmax} \ntiers? <exists> \nsize = 1 \nitem []: \n"));
    s.push_str("    item [1]:\n        class = \"IntervalTier\" \n        name = \"words\" \n");
    s.push_str(&format!("        xmin = 0 \n        xmax = {xmax} \n        intervals: size = {} \n", filled.len()));
    for (i, w) in filled.iter().enumerate() {
        s.push_str(&format!(
            "        intervals [{}]:\n            xmin = {} \n            xmax = {} \n            text = \"{}\" \n",
            i + 1,
            w.start,
            w.end,
            w.word.replace('"', "\"\"")
        ));
    }
    s
}
