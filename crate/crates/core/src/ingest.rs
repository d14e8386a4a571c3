//! Transcript (plain text, SubRip, WebVTT) and slide-deck text parsing.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;
use tracing::warn;

use crate::model::{SlidePage, TranscriptSegment};

static SRT_TIMING: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(\d{2,}):(\d{2}):(\d{2}),(\d{3})\s+-->\s+(\d{2,}):(\d{2}):(\d{2}),(\d{3})(?:\s.*)?$")
        .expect("srt timing regex")
});

static VTT_TIMING: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?:(\d{2,}):)?(\d{2}):(\d{2})\.(\d{3})\s+-->\s+(?:(\d{2,}):)?(\d{2}):(\d{2})\.(\d{3})(?:\s.*)?$")
        .expect("vtt timing regex")
});

static PAGE_DELIMITER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^--- page [0-9]+ ---$").expect("page delimiter regex"));

const NOTES_DELIMITER: &str = "--- notes ---";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IngestError {
    #[error("input matches none of the supported transcript formats (plain, srt, vtt)")]
    UnrecognizedFormat,
    #[error("transcript contains no text")]
    EmptyTranscript,
    #[error("malformed cue at line {line}: {reason}")]
    MalformedCue { line: usize, reason: String },
    #[error("slide deck contains no non-blank page")]
    EmptyDeck,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FormatHint {
    #[default]
    Auto,
    Plain,
    Srt,
    Vtt,
}

impl FromStr for FormatHint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(FormatHint::Auto),
            "plain" | "txt" => Ok(FormatHint::Plain),
            "srt" => Ok(FormatHint::Srt),
            "vtt" | "webvtt" => Ok(FormatHint::Vtt),
            other => Err(format!("unknown transcript format {other:?}")),
        }
    }
}

impl fmt::Display for FormatHint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FormatHint::Auto => "auto",
            FormatHint::Plain => "plain",
            FormatHint::Srt => "srt",
            FormatHint::Vtt => "vtt",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedTranscript {
    /// The grammar actually used; never `Auto`.
    pub format: FormatHint,
    pub segments: Vec<TranscriptSegment>,
    pub warnings: Vec<String>,
}

/// Decodes as UTF-8 (lossily, with a warning), drops a byte-order mark and
/// normalizes line endings to `\n`.
fn decode(raw: &[u8], warnings: &mut Vec<String>) -> String {
    let text = String::from_utf8_lossy(raw);
    if matches!(text, std::borrow::Cow::Owned(_)) {
        warnings.push("input is not valid UTF-8; invalid bytes were replaced".into());
    }
    let text = text.strip_prefix('\u{feff}').unwrap_or(&text);
    text.replace("\r\n", "\n").replace('\r', "\n")
}

pub fn parse_transcript(raw: &[u8], hint: FormatHint) -> Result<ParsedTranscript, IngestError> {
    let mut warnings = Vec::new();
    let text = decode(raw, &mut warnings);
    let format = match hint {
        FormatHint::Auto => detect(&text).ok_or(IngestError::UnrecognizedFormat)?,
        explicit => explicit,
    };
    let mut segments = match format {
        FormatHint::Plain => parse_plain(&text),
        FormatHint::Srt => parse_srt(&text, &mut warnings)?,
        FormatHint::Vtt => parse_vtt(&text, &mut warnings)?,
        FormatHint::Auto => unreachable!("detect never yields Auto"),
    };
    if segments.is_empty() {
        return Err(IngestError::EmptyTranscript);
    }
    if segments.windows(2).any(|w| w[1].start_ms < w[0].start_ms) {
        segments.sort_by_key(|s| s.start_ms);
        warnings.push("cues were out of order and have been sorted by start time".into());
    }
    for w in &warnings {
        warn!("{w}");
    }
    Ok(ParsedTranscript {
        format,
        segments,
        warnings,
    })
}

fn detect(text: &str) -> Option<FormatHint> {
    if is_vtt_header(text.lines().next().unwrap_or("")) {
        return Some(FormatHint::Vtt);
    }
    let mut lines = text.lines().skip_while(|l| l.trim().is_empty());
    let first = lines.next()?;
    let looks_like_srt = !first.trim().is_empty()
        && first.trim().bytes().all(|b| b.is_ascii_digit())
        && lines.next().is_some_and(|l| l.contains("-->"));
    Some(if looks_like_srt {
        FormatHint::Srt
    } else {
        FormatHint::Plain
    })
}

fn is_vtt_header(line: &str) -> bool {
    line.strip_prefix("WEBVTT")
        .is_some_and(|rest| rest.is_empty() || rest.starts_with([' ', '\t']))
}

/// One segment per blank-line-separated paragraph.
fn parse_plain(text: &str) -> Vec<TranscriptSegment> {
    paragraphs(text)
        .into_iter()
        .map(|(_, lines)| lines.join("\n").trim().to_string())
        .filter(|p| !p.is_empty())
        .enumerate()
        .map(|(i, p)| TranscriptSegment::untimed(i as u32 + 1, p))
        .collect()
}

/// Blank-line-separated blocks with the 1-based line number of their first
/// line.
fn paragraphs(text: &str) -> Vec<(usize, Vec<&str>)> {
    let mut blocks = Vec::new();
    let mut current: Option<(usize, Vec<&str>)> = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            blocks.extend(current.take());
        } else {
            current.get_or_insert_with(|| (i + 1, Vec::new())).1.push(line);
        }
    }
    blocks.extend(current);
    blocks
}

fn millis(h: &str, m: &str, s: &str, ms: &str) -> Option<u64> {
    let h: u64 = h.parse().ok()?;
    let m: u64 = m.parse().ok()?;
    let s: u64 = s.parse().ok()?;
    let ms: u64 = ms.parse().ok()?;
    if m >= 60 || s >= 60 {
        return None;
    }
    Some(((h * 60 + m) * 60 + s) * 1000 + ms)
}

fn timing(re: &Regex, line: &str, line_no: usize) -> Result<(u64, u64), IngestError> {
    let malformed = |reason: &str| IngestError::MalformedCue {
        line: line_no,
        reason: reason.to_string(),
    };
    let caps = re
        .captures(line.trim())
        .ok_or_else(|| malformed("unreadable timing line"))?;
    let get = |i: usize| caps.get(i).map_or("0", |m| m.as_str());
    let start = millis(get(1), get(2), get(3), get(4)).ok_or_else(|| malformed("timestamp out of range"))?;
    let end = millis(get(5), get(6), get(7), get(8)).ok_or_else(|| malformed("timestamp out of range"))?;
    if end < start {
        return Err(malformed("cue ends before it starts"));
    }
    Ok((start, end))
}

fn cue_text(lines: &[&str]) -> String {
    lines.join("\n").trim().to_string()
}

fn parse_srt(text: &str, warnings: &mut Vec<String>) -> Result<Vec<TranscriptSegment>, IngestError> {
    let mut segments = Vec::new();
    for (line_no, lines) in paragraphs(text) {
        let index: u32 = lines[0].trim().parse().map_err(|_| IngestError::MalformedCue {
            line: line_no,
            reason: format!("expected a cue number, found {:?}", lines[0].trim()),
        })?;
        let Some(timing_line) = lines.get(1) else {
            return Err(IngestError::MalformedCue {
                line: line_no + 1,
                reason: "cue has no timing line".into(),
            });
        };
        let (start, end) = timing(&SRT_TIMING, timing_line, line_no + 1)?;
        let body = cue_text(&lines[2..]);
        if body.is_empty() {
            warnings.push(format!("cue {index} at line {line_no} has no text and was skipped"));
            continue;
        }
        segments.push(TranscriptSegment::timed(index, start, end, body));
    }
    Ok(segments)
}

fn parse_vtt(text: &str, warnings: &mut Vec<String>) -> Result<Vec<TranscriptSegment>, IngestError> {
    let blocks = paragraphs(text);
    let Some((_, header)) = blocks.first().filter(|(_, lines)| is_vtt_header(lines[0])) else {
        return Err(IngestError::MalformedCue {
            line: 1,
            reason: "missing WEBVTT header".into(),
        });
    };
    debug_assert!(!header.is_empty());

    let mut segments = Vec::new();
    for (line_no, lines) in blocks.iter().skip(1) {
        let first = lines[0].trim_start();
        let keyword = first.split_whitespace().next().unwrap_or("");
        if matches!(keyword, "NOTE" | "STYLE" | "REGION") && !first.contains("-->") {
            continue;
        }
        let (id, timing_at) = if lines[0].contains("-->") {
            (None, 0)
        } else {
            (Some(lines[0].trim()), 1)
        };
        let Some(timing_line) = lines.get(timing_at) else {
            return Err(IngestError::MalformedCue {
                line: line_no + timing_at,
                reason: "cue has no timing line".into(),
            });
        };
        let (start, end) = timing(&VTT_TIMING, timing_line, line_no + timing_at)?;
        let ordinal = segments.len() as u32 + 1;
        let index = id.and_then(|id| id.parse().ok()).unwrap_or(ordinal);
        let body = cue_text(&lines[timing_at + 1..]);
        if body.is_empty() {
            warnings.push(format!("cue at line {line_no} has no text and was skipped"));
            continue;
        }
        segments.push(TranscriptSegment::timed(index, start, end, body));
    }
    Ok(segments)
}

fn clock(ms: u64, fraction_sep: char) -> String {
    let (h, rest) = (ms / 3_600_000, ms % 3_600_000);
    let (m, rest) = (rest / 60_000, rest % 60_000);
    let (s, ms) = (rest / 1000, rest % 1000);
    format!("{h:02}:{m:02}:{s:02}{fraction_sep}{ms:03}")
}

/// SubRip serialization of timed segments. Untimed segments are written with
/// zero-length cues at 0 ms.
pub fn write_srt(segments: &[TranscriptSegment]) -> String {
    let mut out = String::new();
    for seg in segments {
        let (start, end) = (seg.start_ms.unwrap_or(0), seg.end_ms.or(seg.start_ms).unwrap_or(0));
        out.push_str(&format!(
            "{}\n{} --> {}\n{}\n\n",
            seg.index,
            clock(start, ','),
            clock(end, ','),
            seg.text
        ));
    }
    out
}

pub fn write_vtt(segments: &[TranscriptSegment]) -> String {
    let mut out = String::from("WEBVTT\n\n");
    for seg in segments {
        let (start, end) = (seg.start_ms.unwrap_or(0), seg.end_ms.or(seg.start_ms).unwrap_or(0));
        out.push_str(&format!(
            "{}\n{} --> {}\n{}\n\n",
            seg.index,
            clock(start, '.'),
            clock(end, '.'),
            seg.text
        ));
    }
    out
}

/// Splits a deck on form feeds and `--- page N ---` lines. A `--- notes ---`
/// line inside a page moves the rest of that page into its speaker notes.
pub fn parse_slides(raw: &[u8]) -> Result<Vec<SlidePage>, IngestError> {
    let mut warnings = Vec::new();
    let text = decode(raw, &mut warnings);
    for w in &warnings {
        warn!("{w}");
    }

    let mut pages: Vec<String> = vec![String::new()];
    for line in text.split('\n') {
        if PAGE_DELIMITER.is_match(line.trim_end()) {
            pages.push(String::new());
            continue;
        }
        let mut parts = line.split('\u{c}');
        if let Some(first) = parts.next() {
            push_line(pages.last_mut().expect("at least one page"), first);
        }
        for part in parts {
            pages.push(String::new());
            push_line(pages.last_mut().expect("at least one page"), part);
        }
    }

    let slides: Vec<SlidePage> = pages
        .iter()
        .filter_map(|page| split_notes(page))
        .enumerate()
        .map(|(i, (text, notes))| SlidePage {
            page_no: i as u32 + 1,
            text,
            notes,
        })
        .collect();
    if slides.is_empty() {
        return Err(IngestError::EmptyDeck);
    }
    Ok(slides)
}

fn push_line(page: &mut String, line: &str) {
    if !page.is_empty() {
        page.push('\n');
    }
    page.push_str(line);
}

fn split_notes(page: &str) -> Option<(String, Option<String>)> {
    let (text, notes) = match page.split_once(&format!("\n{NOTES_DELIMITER}")) {
        Some((text, notes)) => (text, Some(notes)),
        None => match page.strip_prefix(NOTES_DELIMITER) {
            Some(notes) => ("", Some(notes)),
            None => (page, None),
        },
    };
    let text = text.trim().to_string();
    let notes = notes.map(str::trim).filter(|n| !n.is_empty()).map(String::from);
    if text.is_empty() && notes.is_none() {
        return None;
    }
    Some((text, notes))
}

#[cfg(test)]
mod tests {
    use super::*;

    const POINTER_TRANSCRIPT: &str = "So when you declare the pointers, so before initializing, it basically has now, you know, it doesn't have anything, okay? So a pointer is a variable that contents and memory address that we have saved several times in the last few classes. And source of confusion is star P and P. So that's the two different things. So when we say the P, we know that P is a pointer variable.";

    #[test]
    fn single_srt_cue() {
        let parsed = parse_transcript(b"1\n00:00:01,000 --> 00:00:04,000\nhello\n", FormatHint::Auto).unwrap();
        assert_eq!(parsed.format, FormatHint::Srt);
        assert_eq!(parsed.segments, vec![TranscriptSegment::timed(1, 1000, 4000, "hello")]);
    }

    #[test]
    fn plain_lecture_text() {
        let parsed = parse_transcript(POINTER_TRANSCRIPT.as_bytes(), FormatHint::Plain).unwrap();
        assert_eq!(parsed.segments.len(), 1);
        assert!(parsed.segments[0].text.contains("So when you declare the pointers"));
        assert_eq!(parsed.segments[0].start_ms, None);
    }

    #[test]
    fn plain_paragraphs() {
        let parsed = parse_transcript(b"first para\nstill first\n\n\n  \nsecond\n", FormatHint::Auto).unwrap();
        assert_eq!(parsed.format, FormatHint::Plain);
        let texts: Vec<_> = parsed.segments.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(texts, ["first para\nstill first", "second"]);
        assert_eq!(parsed.segments[1].index, 2);
    }

    #[test]
    fn empty_input() {
        assert_eq!(
            parse_transcript(b"  \n\n", FormatHint::Auto),
            Err(IngestError::UnrecognizedFormat)
        );
        assert_eq!(
            parse_transcript(b"", FormatHint::Plain),
            Err(IngestError::EmptyTranscript)
        );
    }

    #[test]
    fn out_of_order_srt_is_sorted() {
        let cues = [
            "1\n00:00:01,000 --> 00:00:02,000\na\n",
            "2\n00:00:03,000 --> 00:00:04,000\nb\n",
            "3\n00:00:05,000 --> 00:00:06,000\nc\n",
        ];
        let ordered = parse_transcript(cues.join("\n").as_bytes(), FormatHint::Srt).unwrap();
        assert!(ordered.warnings.is_empty());
        let shuffled = [cues[2], cues[0], cues[1]].join("\n");
        let parsed = parse_transcript(shuffled.as_bytes(), FormatHint::Auto).unwrap();
        assert_eq!(parsed.segments, ordered.segments);
        assert_eq!(parsed.warnings.len(), 1);
    }

    #[test]
    fn malformed_middle_cue_aborts_with_line() {
        let raw = "1\n00:00:01,000 --> 00:00:02,000\na\n\n2\n00:00:03 --> 00:00:04,000\nb\n";
        match parse_transcript(raw.as_bytes(), FormatHint::Auto) {
            Err(IngestError::MalformedCue { line, .. }) => assert_eq!(line, 6),
            other => panic!("{other:?}"),
        }
        let backwards = "1\n00:00:05,000 --> 00:00:02,000\na\n";
        assert!(matches!(
            parse_transcript(backwards.as_bytes(), FormatHint::Srt),
            Err(IngestError::MalformedCue { line: 2, .. })
        ));
    }

    #[test]
    fn vtt_with_notes_and_short_timestamps() {
        let raw = "\u{feff}WEBVTT - lecture 4\r\n\r\nNOTE recorded in room 2\r\n\r\nintro\r\n00:01.500 --> 00:04.000\r\nPointers hold addresses.\r\n\r\n7\r\n01:00:00.000 --> 01:00:02.250 align:start\r\n<v Prof>Line one\r\nline two\r\n";
        let parsed = parse_transcript(raw.as_bytes(), FormatHint::Auto).unwrap();
        assert_eq!(parsed.format, FormatHint::Vtt);
        assert_eq!(
            parsed.segments,
            vec![
                TranscriptSegment::timed(1, 1500, 4000, "Pointers hold addresses."),
                TranscriptSegment::timed(7, 3_600_000, 3_602_250, "<v Prof>Line one\nline two"),
            ]
        );
    }

    #[test]
    fn lossy_utf8_warns() {
        let parsed = parse_transcript(b"caf\xe9 au lait", FormatHint::Plain).unwrap();
        assert_eq!(parsed.warnings.len(), 1);
        assert!(parsed.segments[0].text.contains('\u{fffd}'));
    }

    #[test]
    fn writers_round_trip() {
        let segs = vec![
            TranscriptSegment::timed(1, 0, 1500, "one"),
            TranscriptSegment::timed(2, 1500, 3_723_004, "two\nlines"),
        ];
        assert_eq!(
            parse_transcript(write_srt(&segs).as_bytes(), FormatHint::Auto)
                .unwrap()
                .segments,
            segs
        );
        assert_eq!(
            parse_transcript(write_vtt(&segs).as_bytes(), FormatHint::Auto)
                .unwrap()
                .segments,
            segs
        );
    }

    #[test]
    fn two_delimited_pages() {
        let deck = "--- page 1 ---\nPointers\n--- page 2 ---\nint *p;\n";
        let pages = parse_slides(deck.as_bytes()).unwrap();
        assert_eq!(pages.len(), 2);
        assert_eq!(pages[1].page_no, 2);
        assert_eq!(pages[1].text, "int *p;");
    }

    #[test]
    fn form_feeds_and_notes() {
        let deck = "Title slide\u{c}Body\n--- notes ---\nsay hi\u{c}\u{c}  \u{c}Last";
        let pages = parse_slides(deck.as_bytes()).unwrap();
        let texts: Vec<_> = pages.iter().map(|p| p.text.as_str()).collect();
        assert_eq!(texts, ["Title slide", "Body", "Last"]);
        assert_eq!(pages[1].notes.as_deref(), Some("say hi"));
        assert_eq!(pages.iter().map(|p| p.page_no).collect::<Vec<_>>(), [1, 2, 3]);
    }

    #[test]
    fn whitespace_deck_is_empty() {
        assert_eq!(parse_slides(b"  \n\t\n"), Err(IngestError::EmptyDeck));
        assert_eq!(
            parse_slides(b"--- page 1 ---\n\n--- page 2 ---\n"),
            Err(IngestError::EmptyDeck)
        );
    }
}
