//! Line-level helpers shared by the parsers. Everything returns slices of the
//! input so payload strings stay verbatim.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Marker {
    Numbered(u32),
    Bullet,
    /// Markdown heading with its level (number of `#`).
    Heading(u8),
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Line<'a> {
    /// 1-based.
    pub number: usize,
    pub indent: usize,
    pub marker: Option<Marker>,
    /// Text after indentation and marker, trimmed.
    pub text: &'a str,
}

impl Line<'_> {
    pub fn is_blank(&self) -> bool {
        self.marker.is_none() && self.text.is_empty()
    }
}

pub(crate) fn lines(raw: &str) -> Vec<Line<'_>> {
    raw.lines()
        .enumerate()
        .map(|(i, line)| classify(i + 1, line))
        .collect()
}

fn classify(number: usize, line: &str) -> Line<'_> {
    let indent = line
        .chars()
        .take_while(|c| c.is_whitespace())
        .map(|c| if c == '\t' { 4 } else { 1 })
        .sum();
    let body = line.trim();
    let (marker, text) = strip_marker(body);
    Line {
        number,
        indent,
        marker,
        text: text.trim(),
    }
}

fn strip_marker(body: &str) -> (Option<Marker>, &str) {
    if body.starts_with('#') {
        let level = body.bytes().take_while(|b| *b == b'#').count();
        let rest = &body[level..];
        if level <= 6 && (rest.is_empty() || rest.starts_with(' ')) {
            let rest = rest.trim_start();
            // "### 2. Unwrapping" keeps its number out of the heading text.
            let (_, rest) = strip_number(rest).unwrap_or((0, rest));
            return (Some(Marker::Heading(level as u8)), rest);
        }
    }
    if let Some((n, rest)) = strip_number(body) {
        return (Some(Marker::Numbered(n)), rest);
    }
    for bullet in ["- ", "* ", "+ ", "\u{2013} ", "\u{2014} ", "\u{2022} "] {
        if let Some(rest) = body.strip_prefix(bullet) {
            return (Some(Marker::Bullet), rest);
        }
    }
    if matches!(body, "-" | "*" | "\u{2013}" | "\u{2022}") {
        return (Some(Marker::Bullet), "");
    }
    (None, body)
}

fn strip_number(body: &str) -> Option<(u32, &str)> {
    let digits = body.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 || digits > 4 {
        return None;
    }
    let rest = &body[digits..];
    let rest = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')'))?;
    if !(rest.is_empty() || rest.starts_with(' ')) {
        return None;
    }
    Some((body[..digits].parse().ok()?, rest.trim_start()))
}

/// Removes wrapping emphasis markers: `**x**`, `__x__`, `*x*`.
pub(crate) fn strip_emphasis(s: &str) -> &str {
    let mut s = s.trim();
    loop {
        let before = s;
        for mark in ["**", "__", "*", "_"] {
            if s.len() >= 2 * mark.len() {
                if let Some(inner) = s.strip_prefix(mark).and_then(|r| r.strip_suffix(mark)) {
                    s = inner.trim();
                }
            }
        }
        if s == before {
            return s;
        }
    }
}

/// Splits a leading bold span: `**Name:** rest` or `**Name**: rest` gives
/// `("Name", "rest")`.
pub(crate) fn split_bold_head(s: &str) -> Option<(&str, &str)> {
    let inner = s.strip_prefix("**").or_else(|| s.strip_prefix("__"))?;
    let close = inner.find("**").or_else(|| inner.find("__"))?;
    let head = inner[..close].trim().trim_end_matches(':').trim();
    let rest = inner[close + 2..].trim_start();
    let rest = rest.strip_prefix(':').unwrap_or(rest).trim();
    if head.is_empty() {
        return None;
    }
    Some((head, rest))
}

/// Splits `Term: explanation` (also with a dash separator, or a bold term).
pub(crate) fn split_term(s: &str) -> Option<(&str, &str)> {
    if let Some((head, rest)) = split_bold_head(s) {
        let rest = rest
            .strip_prefix("- ")
            .or_else(|| rest.strip_prefix("\u{2013} "))
            .or_else(|| rest.strip_prefix("\u{2014} "))
            .unwrap_or(rest)
            .trim();
        return (!rest.is_empty()).then_some((head, rest));
    }
    let seps = [": ", " \u{2013} ", " \u{2014} ", " - "];
    let (pos, sep) = seps
        .iter()
        .filter_map(|sep| s.find(sep).map(|p| (p, *sep)))
        .min_by_key(|(p, _)| *p)?;
    let term = strip_emphasis(s[..pos].trim());
    let rest = s[pos + sep.len()..].trim();
    (!term.is_empty() && !rest.is_empty()).then_some((term, rest))
}

/// Matches a `Label:` prefix, ignoring case and emphasis, against any of
/// `labels`. Returns the remainder after the colon.
pub(crate) fn field<'a>(s: &'a str, labels: &[&str]) -> Option<&'a str> {
    let (head, rest) = if let Some((head, rest)) = split_bold_head(s) {
        (head, rest)
    } else {
        let colon = s.find(':')?;
        (strip_emphasis(&s[..colon]), s[colon + 1..].trim())
    };
    labels
        .iter()
        .any(|l| head.eq_ignore_ascii_case(l))
        .then_some(rest)
}

/// Finds `needle` in `hay` ignoring ASCII case at word boundaries; returns
/// all byte offsets.
pub(crate) fn find_word_ci(hay: &str, needle: &str) -> Vec<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return Vec::new();
    }
    let hay_l = hay.to_ascii_lowercase();
    let needle_l = needle.to_ascii_lowercase();
    let bytes = hay_l.as_bytes();
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(pos) = hay_l[from..].find(&needle_l) {
        let start = from + pos;
        let end = start + needle_l.len();
        let left_ok = start == 0 || !bytes[start - 1].is_ascii_alphanumeric();
        let right_ok = end == bytes.len() || !bytes[end].is_ascii_alphanumeric();
        if left_ok && right_ok {
            out.push(start);
        }
        from = start + 1;
        while !hay_l.is_char_boundary(from) {
            from += 1;
        }
    }
    out
}
