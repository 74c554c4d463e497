//! Byte spans and the byte-offset to line-number arithmetic.
//!
//! Line numbers follow the prefix-count convention used for labelling: the
//! line of byte offset `b` is the number of lines the decoded prefix
//! `source[..b]` splits into. A span therefore covers the inclusive range
//! `[lines(start), lines(start + length)]`. A node that begins in column 0
//! also claims the line before it, and an offset of 0 yields line 0.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::AstError;

/// A `start:length:fileIndex` triple pointing into the source bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SourceSpan {
    pub start: usize,
    pub length: usize,
    pub file_index: i64,
}

impl SourceSpan {
    pub fn new(start: usize, length: usize, file_index: i64) -> Self {
        Self { start, length, file_index }
    }

    /// Exclusive end offset.
    pub fn end(&self) -> usize {
        self.start + self.length
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.length, self.file_index)
    }
}

impl FromStr for SourceSpan {
    type Err = AstError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_src(s)
    }
}

/// Decomposes a `start:length:fileIndex` string.
pub fn parse_src(src: &str) -> Result<SourceSpan, AstError> {
    let malformed = || AstError::MalformedSpan(src.to_string());
    let mut fields = src.split(':');
    let (Some(start), Some(length), Some(file), None) =
        (fields.next(), fields.next(), fields.next(), fields.next())
    else {
        return Err(malformed());
    };
    // `usize::from_str` accepts a leading '+'; the compiler never writes one.
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(start) || !digits(length) {
        return Err(malformed());
    }
    let file_digits = file.strip_prefix('-').unwrap_or(file);
    if !digits(file_digits) {
        return Err(malformed());
    }
    Ok(SourceSpan {
        start: start.parse().map_err(|_| malformed())?,
        length: length.parse().map_err(|_| malformed())?,
        file_index: file.parse().map_err(|_| malformed())?,
    })
}

/// Inclusive range of line numbers covered by a span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LineRange {
    pub first: usize,
    pub last: usize,
}

impl LineRange {
    pub fn lines(&self) -> std::ops::RangeInclusive<usize> {
        self.first..=self.last
    }

    pub fn contains(&self, line: usize) -> bool {
        self.first <= line && line <= self.last
    }
}

/// Line-start table of a UTF-8 source file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineIndex {
    /// Byte offset at which each line begins; always starts with 0.
    line_starts: Vec<usize>,
    line_count: usize,
    byte_len: usize,
    /// Offsets that fall inside a multi-byte character (sorted).
    interior: Vec<usize>,
}

/// Characters that end a line when splitting text into lines; `\r\n` counts
/// as a single terminator.
fn is_line_terminator(c: char) -> bool {
    matches!(
        c,
        '\n' | '\r' | '\u{0b}' | '\u{0c}' | '\u{1c}' | '\u{1d}' | '\u{1e}' | '\u{85}' | '\u{2028}' | '\u{2029}'
    )
}

impl LineIndex {
    pub fn new(source: &[u8]) -> Result<Self, AstError> {
        let text = std::str::from_utf8(source).map_err(|e| AstError::InvalidEncoding {
            offset: e.valid_up_to(),
        })?;
        let mut line_starts = vec![0];
        let mut interior = Vec::new();
        let mut chars = text.char_indices().peekable();
        while let Some((at, c)) = chars.next() {
            let width = c.len_utf8();
            interior.extend(at + 1..at + width);
            if !is_line_terminator(c) {
                continue;
            }
            let mut next = at + width;
            if c == '\r' {
                if let Some(&(_, '\n')) = chars.peek() {
                    chars.next();
                    next += 1;
                }
            }
            if next < text.len() {
                line_starts.push(next);
            }
        }
        let line_count = if text.is_empty() { 0 } else { line_starts.len() };
        Ok(Self { line_starts, line_count, byte_len: source.len(), interior })
    }

    pub fn line_starts(&self) -> &[usize] {
        &self.line_starts
    }

    /// Number of lines the whole file splits into.
    pub fn line_count(&self) -> usize {
        self.line_count
    }

    pub fn byte_len(&self) -> usize {
        self.byte_len
    }

    /// Number of lines in the decoded prefix `source[..offset]`.
    pub fn lines_before(&self, offset: usize) -> Result<usize, AstError> {
        if offset > self.byte_len {
            return Err(AstError::SpanOutOfBounds { end: offset, len: self.byte_len });
        }
        if self.interior.binary_search(&offset).is_ok() {
            return Err(AstError::InvalidEncoding { offset });
        }
        Ok(self.line_starts.partition_point(|&s| s < offset))
    }

    /// Inclusive line range covered by `span`.
    pub fn span_to_lines(&self, span: SourceSpan) -> Result<LineRange, AstError> {
        if span.end() > self.byte_len {
            return Err(AstError::SpanOutOfBounds { end: span.end(), len: self.byte_len });
        }
        Ok(LineRange {
            first: self.lines_before(span.start)?,
            last: self.lines_before(span.end())?,
        })
    }
}

pub fn build_line_index(source: &[u8]) -> Result<LineIndex, AstError> {
    LineIndex::new(source)
}

pub fn span_to_lines(span: SourceSpan, index: &LineIndex) -> Result<LineRange, AstError> {
    index.span_to_lines(span)
}
