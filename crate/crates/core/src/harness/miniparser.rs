//! An instrumented parser for a cut-down PDF-like document format, used as
//! the built-in fuzzing target.
//!
//! ```text
//! %PDF-1.4
//! %<binary comment>
//! 1 0 obj << /Type /Catalog /Pages 2 0 R >> endobj
//! 3 0 obj << /Length 12 /Filter /RunLengthDecode >> stream
//! <12 bytes> endstream endobj
//! xref
//! 0 4
//! 0000000000 65535 f
//! 0000000015 00000 n
//! ...
//! trailer << /Size 4 /Root 1 0 R >>
//! startxref
//! 1234
//! %%EOF
//! ```
//!
//! Each [`Block`] is one probe point. Probes only fire once the construct they
//! guard has been recognised, so a run that stops early at a syntax error
//! hits a subset of the blocks of a run that gets further. The first error
//! ends the run.

use std::collections::{BTreeSet, HashMap};
use std::time::{Duration, Instant};

use super::{ExecutionTrace, HarnessError, Outcome, Target};

/// Probe points of the built-in parser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u32)]
pub enum Block {
    HeaderCheck,
    HeaderMagic,
    HeaderVersion,
    HeaderBinaryComment,

    Whitespace,
    Comment,
    Integer,
    Real,
    Signed,
    LiteralString,
    StringEscape,
    StringOctal,
    StringNested,
    HexString,
    HexOddDigits,
    Name,
    NameEscape,
    Keyword,
    DictOpen,
    DictClose,
    ArrayOpen,
    ArrayClose,

    ValueInteger,
    ValueReal,
    ValueString,
    ValueName,
    ValueBool,
    ValueNull,
    ValueArray,
    ValueDict,
    ValueRef,
    ArrayNested,
    DictNested,
    DictTypeEntry,
    DictLengthEntry,
    DictFilterEntry,

    ObjectHeader,
    ObjectRedefined,
    StreamKeyword,
    StreamEolLf,
    StreamEolCrLf,
    StreamData,
    StreamChecksum,
    RleLiteral,
    RleRepeat,
    RleEod,
    RleTruncated,
    EndStream,
    EndObj,

    XrefKeyword,
    XrefSubsection,
    XrefInUse,
    XrefFree,
    XrefOffsetMatch,
    XrefComplete,

    TrailerKeyword,
    TrailerSize,
    TrailerRoot,
    TrailerCatalog,
    StartXref,
    StartXrefMatch,
    EofMarker,
    TrailerAccepted,
}

impl Block {
    pub const COUNT: usize = Block::TrailerAccepted as usize + 1;

    pub fn id(self) -> u32 {
        self as u32
    }
}

#[derive(Debug, Default, Clone)]
struct Coverage {
    bits: [u64; 2],
}

impl Coverage {
    #[inline]
    fn hit(&mut self, b: Block) {
        let id = b as usize;
        self.bits[id / 64] |= 1 << (id % 64);
    }

    fn blocks(&self) -> BTreeSet<u32> {
        (0..Block::COUNT as u32)
            .filter(|&id| self.bits[id as usize / 64] & (1 << (id % 64)) != 0)
            .collect()
    }
}

/// Why a run ended before acceptance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stop {
    Reject,
    /// The planted defect: an xref subsection that claims more entries than
    /// precede the trailer makes the parser read past the table.
    Fault,
    Deadline,
}

type Step<T> = Result<T, Stop>;

#[derive(Debug, Clone, PartialEq)]
enum Token<'a> {
    Int(i64),
    Real,
    Str,
    Hex,
    Name(Vec<u8>),
    Keyword(&'a [u8]),
    DictOpen,
    DictClose,
    ArrayOpen,
    ArrayClose,
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Int(i64),
    Real,
    Str,
    Name(Vec<u8>),
    Bool,
    Null,
    Ref(i64, i64),
    Array,
    Dict(Vec<(Vec<u8>, Value)>),
}

impl Value {
    fn dict_get(&self, key: &[u8]) -> Option<&Value> {
        match self {
            Value::Dict(entries) => entries.iter().find(|(k, _)| k == key).map(|(_, v)| v),
            _ => None,
        }
    }
}

fn is_whitespace(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\r' | b'\n' | b'\x0c' | b'\0')
}

fn is_delimiter(b: u8) -> bool {
    matches!(b, b'(' | b')' | b'<' | b'>' | b'[' | b']' | b'{' | b'}' | b'/' | b'%')
}

fn is_regular(b: u8) -> bool {
    !is_whitespace(b) && !is_delimiter(b)
}

struct ObjectInfo {
    offset: usize,
    is_catalog: bool,
}

const MAX_DEPTH: usize = 32;
const DEADLINE_STRIDE: usize = 1 << 14;

struct Parser<'a> {
    data: &'a [u8],
    pos: usize,
    cov: Coverage,
    objects: HashMap<i64, ObjectInfo>,
    deadline: Option<Instant>,
    checksum: u32,
}

impl<'a> Parser<'a> {
    fn new(data: &'a [u8], deadline: Option<Instant>) -> Self {
        Self {
            data,
            pos: 0,
            cov: Coverage::default(),
            objects: HashMap::new(),
            deadline,
            checksum: 0,
        }
    }

    fn check_deadline(&self) -> Step<()> {
        match self.deadline {
            Some(d) if Instant::now() > d => Err(Stop::Deadline),
            _ => Ok(()),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.data.get(self.pos).copied()
    }

    fn skip_space(&mut self) {
        loop {
            match self.peek() {
                Some(b) if is_whitespace(b) => {
                    self.cov.hit(Block::Whitespace);
                    self.pos += 1;
                }
                Some(b'%') => {
                    self.cov.hit(Block::Comment);
                    while let Some(b) = self.peek() {
                        if b == b'\n' || b == b'\r' {
                            break;
                        }
                        self.pos += 1;
                    }
                }
                _ => return,
            }
        }
    }

    fn next_token(&mut self) -> Step<Token<'a>> {
        self.skip_space();
        let Some(b) = self.peek() else {
            return Ok(Token::Eof);
        };
        match b {
            b'0'..=b'9' | b'+' | b'-' | b'.' => self.lex_number(),
            b'(' => self.lex_string(),
            b'<' => {
                if self.data.get(self.pos + 1) == Some(&b'<') {
                    self.pos += 2;
                    self.cov.hit(Block::DictOpen);
                    Ok(Token::DictOpen)
                } else {
                    self.lex_hex()
                }
            }
            b'>' => {
                if self.data.get(self.pos + 1) == Some(&b'>') {
                    self.pos += 2;
                    self.cov.hit(Block::DictClose);
                    Ok(Token::DictClose)
                } else {
                    Err(Stop::Reject)
                }
            }
            b'[' => {
                self.pos += 1;
                self.cov.hit(Block::ArrayOpen);
                Ok(Token::ArrayOpen)
            }
            b']' => {
                self.pos += 1;
                self.cov.hit(Block::ArrayClose);
                Ok(Token::ArrayClose)
            }
            b'/' => self.lex_name(),
            b if is_regular(b) => {
                let start = self.pos;
                while self.peek().is_some_and(is_regular) {
                    self.pos += 1;
                }
                self.cov.hit(Block::Keyword);
                Ok(Token::Keyword(&self.data[start..self.pos]))
            }
            _ => Err(Stop::Reject),
        }
    }

    fn lex_number(&mut self) -> Step<Token<'a>> {
        let start = self.pos;
        let signed = matches!(self.peek(), Some(b'+' | b'-'));
        if signed {
            self.pos += 1;
        }
        let mut digits = 0usize;
        let mut dot = false;
        while let Some(b) = self.peek() {
            match b {
                b'0'..=b'9' => digits += 1,
                b'.' if !dot => dot = true,
                _ => break,
            }
            self.pos += 1;
        }
        if digits == 0 {
            return Err(Stop::Reject);
        }
        if signed {
            self.cov.hit(Block::Signed);
        }
        if dot {
            self.cov.hit(Block::Real);
            return Ok(Token::Real);
        }
        let text = std::str::from_utf8(&self.data[start..self.pos]).map_err(|_| Stop::Reject)?;
        let value: i64 = text.parse().map_err(|_| Stop::Reject)?;
        self.cov.hit(Block::Integer);
        Ok(Token::Int(value))
    }

    fn lex_string(&mut self) -> Step<Token<'a>> {
        self.pos += 1;
        let mut depth = 1usize;
        while let Some(b) = self.peek() {
            self.pos += 1;
            match b {
                b'\\' => {
                    let Some(esc) = self.peek() else {
                        return Err(Stop::Reject);
                    };
                    self.pos += 1;
                    if esc.is_ascii_digit() {
                        self.cov.hit(Block::StringOctal);
                        let mut n = 1;
                        while n < 3 && self.peek().is_some_and(|c| (b'0'..=b'7').contains(&c)) {
                            self.pos += 1;
                            n += 1;
                        }
                    } else {
                        self.cov.hit(Block::StringEscape);
                    }
                }
                b'(' => {
                    self.cov.hit(Block::StringNested);
                    depth += 1;
                }
                b')' => {
                    depth -= 1;
                    if depth == 0 {
                        self.cov.hit(Block::LiteralString);
                        return Ok(Token::Str);
                    }
                }
                _ => {}
            }
        }
        Err(Stop::Reject)
    }

    fn lex_hex(&mut self) -> Step<Token<'a>> {
        self.pos += 1;
        let mut digits = 0usize;
        while let Some(b) = self.peek() {
            self.pos += 1;
            match b {
                b'>' => {
                    self.cov.hit(Block::HexString);
                    if digits % 2 == 1 {
                        self.cov.hit(Block::HexOddDigits);
                    }
                    return Ok(Token::Hex);
                }
                b if b.is_ascii_hexdigit() => digits += 1,
                b if is_whitespace(b) => {}
                _ => return Err(Stop::Reject),
            }
        }
        Err(Stop::Reject)
    }

    fn lex_name(&mut self) -> Step<Token<'a>> {
        self.pos += 1;
        let mut name = Vec::new();
        while let Some(b) = self.peek() {
            if !is_regular(b) {
                break;
            }
            if b == b'#' {
                let hex = self
                    .data
                    .get(self.pos + 1..self.pos + 3)
                    .and_then(|h| std::str::from_utf8(h).ok())
                    .and_then(|h| u8::from_str_radix(h, 16).ok());
                if let Some(v) = hex {
                    self.cov.hit(Block::NameEscape);
                    name.push(v);
                    self.pos += 3;
                    continue;
                }
            }
            name.push(b);
            self.pos += 1;
        }
        self.cov.hit(Block::Name);
        Ok(Token::Name(name))
    }

    fn parse_value(&mut self, tok: Token<'a>, depth: usize) -> Step<Value> {
        if depth > MAX_DEPTH {
            return Err(Stop::Reject);
        }
        match tok {
            Token::Int(n) => {
                let save = self.pos;
                let cov = self.cov.clone();
                if let Ok(Token::Int(g)) = self.next_token() {
                    if let Ok(Token::Keyword(b"R")) = self.next_token() {
                        self.cov.hit(Block::ValueRef);
                        return Ok(Value::Ref(n, g));
                    }
                }
                self.pos = save;
                self.cov = cov;
                self.cov.hit(Block::ValueInteger);
                Ok(Value::Int(n))
            }
            Token::Real => {
                self.cov.hit(Block::ValueReal);
                Ok(Value::Real)
            }
            Token::Str | Token::Hex => {
                self.cov.hit(Block::ValueString);
                Ok(Value::Str)
            }
            Token::Name(n) => {
                self.cov.hit(Block::ValueName);
                Ok(Value::Name(n))
            }
            Token::Keyword(b"true" | b"false") => {
                self.cov.hit(Block::ValueBool);
                Ok(Value::Bool)
            }
            Token::Keyword(b"null") => {
                self.cov.hit(Block::ValueNull);
                Ok(Value::Null)
            }
            Token::ArrayOpen => {
                loop {
                    let t = self.next_token()?;
                    match t {
                        Token::ArrayClose => break,
                        Token::Eof => return Err(Stop::Reject),
                        Token::ArrayOpen => {
                            self.parse_value(t, depth + 1)?;
                            self.cov.hit(Block::ArrayNested);
                        }
                        t => {
                            self.parse_value(t, depth + 1)?;
                        }
                    }
                }
                self.cov.hit(Block::ValueArray);
                Ok(Value::Array)
            }
            Token::DictOpen => {
                let mut entries = Vec::new();
                loop {
                    let key = match self.next_token()? {
                        Token::DictClose => break,
                        Token::Name(k) => k,
                        _ => return Err(Stop::Reject),
                    };
                    let t = self.next_token()?;
                    let nested = t == Token::DictOpen;
                    let value = self.parse_value(t, depth + 1)?;
                    if nested {
                        self.cov.hit(Block::DictNested);
                    }
                    match key.as_slice() {
                        b"Type" => self.cov.hit(Block::DictTypeEntry),
                        b"Length" => self.cov.hit(Block::DictLengthEntry),
                        b"Filter" => self.cov.hit(Block::DictFilterEntry),
                        _ => {}
                    }
                    entries.push((key, value));
                }
                self.cov.hit(Block::ValueDict);
                Ok(Value::Dict(entries))
            }
            _ => Err(Stop::Reject),
        }
    }

    fn parse_header(&mut self) -> Step<()> {
        self.cov.hit(Block::HeaderCheck);
        if !self.data.starts_with(b"%PDF-") {
            return Err(Stop::Reject);
        }
        self.cov.hit(Block::HeaderMagic);
        self.pos = 5;
        let version = self.data.get(5..8).ok_or(Stop::Reject)?;
        if !(version[0].is_ascii_digit() && version[1] == b'.' && version[2].is_ascii_digit()) {
            return Err(Stop::Reject);
        }
        self.pos = 8;
        if !self.eat_eol() {
            return Err(Stop::Reject);
        }
        self.cov.hit(Block::HeaderVersion);
        if self.peek() == Some(b'%') {
            let line_start = self.pos + 1;
            let mut end = line_start;
            while self.data.get(end).is_some_and(|&b| b != b'\n' && b != b'\r') {
                end += 1;
            }
            self.pos = end;
            if !self.eat_eol() {
                return Err(Stop::Reject);
            }
            let binary = self.data[line_start..end].iter().filter(|&&b| b >= 0x80).count();
            if binary >= 4 {
                self.cov.hit(Block::HeaderBinaryComment);
            }
        }
        Ok(())
    }

    fn eat_eol(&mut self) -> bool {
        match (self.peek(), self.data.get(self.pos + 1)) {
            (Some(b'\r'), Some(b'\n')) => {
                self.pos += 2;
                true
            }
            (Some(b'\n' | b'\r'), _) => {
                self.pos += 1;
                true
            }
            _ => false,
        }
    }

    /// Body objects until the `xref` keyword; returns the keyword's offset.
    fn parse_body(&mut self) -> Step<usize> {
        loop {
            self.check_deadline()?;
            self.skip_space();
            let start = self.pos;
            match self.next_token()? {
                Token::Int(num) => self.parse_object(num, start)?,
                Token::Keyword(b"xref") => {
                    self.cov.hit(Block::XrefKeyword);
                    return Ok(start);
                }
                _ => return Err(Stop::Reject),
            }
        }
    }

    fn parse_object(&mut self, num: i64, start: usize) -> Step<()> {
        let Token::Int(_gen) = self.next_token()? else {
            return Err(Stop::Reject);
        };
        if self.next_token()? != Token::Keyword(b"obj") {
            return Err(Stop::Reject);
        }
        self.cov.hit(Block::ObjectHeader);
        let tok = self.next_token()?;
        let value = self.parse_value(tok, 0)?;
        match self.next_token()? {
            Token::Keyword(b"endobj") => {}
            Token::Keyword(b"stream") => {
                self.cov.hit(Block::StreamKeyword);
                self.parse_stream(&value)?;
                if self.next_token()? != Token::Keyword(b"endobj") {
                    return Err(Stop::Reject);
                }
            }
            _ => return Err(Stop::Reject),
        }
        self.cov.hit(Block::EndObj);
        let is_catalog = matches!(value.dict_get(b"Type"), Some(Value::Name(n)) if n == b"Catalog");
        if self.objects.contains_key(&num) {
            self.cov.hit(Block::ObjectRedefined);
        }
        self.objects.insert(num, ObjectInfo { offset: start, is_catalog });
        Ok(())
    }

    fn parse_stream(&mut self, dict: &Value) -> Step<()> {
        match (self.peek(), self.data.get(self.pos + 1)) {
            (Some(b'\r'), Some(b'\n')) => {
                self.pos += 2;
                self.cov.hit(Block::StreamEolCrLf);
            }
            (Some(b'\n'), _) => {
                self.pos += 1;
                self.cov.hit(Block::StreamEolLf);
            }
            _ => return Err(Stop::Reject),
        }
        let Some(Value::Int(len)) = dict.dict_get(b"Length") else {
            return Err(Stop::Reject);
        };
        let len = usize::try_from(*len).map_err(|_| Stop::Reject)?;
        let end = self.pos.checked_add(len).ok_or(Stop::Reject)?;
        let data = self.data.get(self.pos..end).ok_or(Stop::Reject)?;
        self.cov.hit(Block::StreamData);
        let rle = matches!(dict.dict_get(b"Filter"), Some(Value::Name(n)) if n == b"RunLengthDecode");
        if rle {
            self.run_length_decode(data)?;
        } else {
            self.adler32(data)?;
        }
        self.pos = end;
        if self.next_token()? != Token::Keyword(b"endstream") {
            return Err(Stop::Reject);
        }
        self.cov.hit(Block::EndStream);
        Ok(())
    }

    fn adler32(&mut self, data: &[u8]) -> Step<()> {
        let (mut a, mut b) = (1u32, 0u32);
        for chunk in data.chunks(DEADLINE_STRIDE) {
            self.check_deadline()?;
            for &byte in chunk {
                a = (a + u32::from(byte)) % 65521;
                b = (b + a) % 65521;
            }
        }
        self.checksum ^= (b << 16) | a;
        self.cov.hit(Block::StreamChecksum);
        Ok(())
    }

    /// PDF RunLengthDecode into a scratch buffer.
    fn run_length_decode(&mut self, data: &[u8]) -> Step<()> {
        let mut out = Vec::with_capacity(data.len() * 2);
        let mut i = 0;
        let mut next_check = DEADLINE_STRIDE;
        while i < data.len() {
            if out.len() > next_check {
                self.check_deadline()?;
                next_check += DEADLINE_STRIDE;
            }
            let n = data[i] as usize;
            i += 1;
            match n {
                0..=127 => {
                    let run = n + 1;
                    let Some(lit) = data.get(i..i + run) else {
                        self.cov.hit(Block::RleTruncated);
                        break;
                    };
                    out.extend_from_slice(lit);
                    i += run;
                    self.cov.hit(Block::RleLiteral);
                }
                128 => {
                    self.cov.hit(Block::RleEod);
                    break;
                }
                _ => {
                    let Some(&byte) = data.get(i) else {
                        self.cov.hit(Block::RleTruncated);
                        break;
                    };
                    out.resize(out.len() + 257 - n, byte);
                    i += 1;
                    self.cov.hit(Block::RleRepeat);
                }
            }
        }
        self.checksum = out
            .iter()
            .fold(self.checksum, |h, &b| h.rotate_left(5) ^ u32::from(b));
        Ok(())
    }

    fn parse_xref(&mut self) -> Step<usize> {
        let mut total = 0usize;
        let mut listed = 0usize;
        loop {
            match self.next_token()? {
                Token::Int(first) => {
                    let Token::Int(count) = self.next_token()? else {
                        return Err(Stop::Reject);
                    };
                    if first < 0 || count < 0 {
                        return Err(Stop::Reject);
                    }
                    self.cov.hit(Block::XrefSubsection);
                    for i in 0..count {
                        let offset = match self.next_token()? {
                            Token::Int(o) => o,
                            Token::Keyword(b"trailer") => return Err(Stop::Fault),
                            _ => return Err(Stop::Reject),
                        };
                        let Token::Int(_gen) = self.next_token()? else {
                            return Err(Stop::Reject);
                        };
                        match self.next_token()? {
                            Token::Keyword(b"n") => {
                                let num = first + i;
                                let recorded = self.objects.get(&num).map(|o| o.offset as i64);
                                if recorded != Some(offset) {
                                    return Err(Stop::Reject);
                                }
                                self.cov.hit(Block::XrefInUse);
                                self.cov.hit(Block::XrefOffsetMatch);
                                listed += 1;
                            }
                            Token::Keyword(b"f") => self.cov.hit(Block::XrefFree),
                            _ => return Err(Stop::Reject),
                        }
                    }
                    total += count as usize;
                }
                Token::Keyword(b"trailer") => {
                    if listed == self.objects.len() {
                        self.cov.hit(Block::XrefComplete);
                    }
                    self.cov.hit(Block::TrailerKeyword);
                    return Ok(total);
                }
                _ => return Err(Stop::Reject),
            }
        }
    }

    fn parse_trailer(&mut self, xref_offset: usize, xref_entries: usize) -> Step<()> {
        let tok = self.next_token()?;
        if tok != Token::DictOpen {
            return Err(Stop::Reject);
        }
        let dict = self.parse_value(tok, 0)?;
        match dict.dict_get(b"Size") {
            Some(Value::Int(n)) if *n as usize == xref_entries => self.cov.hit(Block::TrailerSize),
            _ => return Err(Stop::Reject),
        }
        let Some(Value::Ref(root, _)) = dict.dict_get(b"Root") else {
            return Err(Stop::Reject);
        };
        self.cov.hit(Block::TrailerRoot);
        match self.objects.get(root) {
            Some(info) if info.is_catalog => self.cov.hit(Block::TrailerCatalog),
            _ => return Err(Stop::Reject),
        }
        if self.next_token()? != Token::Keyword(b"startxref") {
            return Err(Stop::Reject);
        }
        self.cov.hit(Block::StartXref);
        // the lexer would swallow %%EOF as a comment, so read it by hand
        while self.peek().is_some_and(is_whitespace) {
            self.pos += 1;
        }
        let Token::Int(at) = self.lex_number()? else {
            return Err(Stop::Reject);
        };
        if at as usize != xref_offset {
            return Err(Stop::Reject);
        }
        self.cov.hit(Block::StartXrefMatch);
        while self.peek().is_some_and(is_whitespace) {
            self.pos += 1;
        }
        if !self.data[self.pos..].starts_with(b"%%EOF") {
            return Err(Stop::Reject);
        }
        self.cov.hit(Block::EofMarker);
        self.cov.hit(Block::TrailerAccepted);
        Ok(())
    }

    fn parse_document(&mut self) -> Step<()> {
        self.parse_header()?;
        let xref_offset = self.parse_body()?;
        let entries = self.parse_xref()?;
        self.parse_trailer(xref_offset, entries)
    }
}

fn run(input: &[u8], deadline: Option<Instant>) -> (BTreeSet<u32>, Outcome) {
    let mut parser = Parser::new(input, deadline);
    let result = parser.parse_document();
    std::hint::black_box(parser.checksum);
    let outcome = match result {
        Ok(()) => Outcome::Completed,
        Err(Stop::Reject) => Outcome::RejectedEarly,
        Err(Stop::Fault) => Outcome::Crashed,
        Err(Stop::Deadline) => Outcome::TimedOut,
    };
    (parser.cov.blocks(), outcome)
}

/// Parses `input` once without a deadline and reports the probes it hit.
pub fn builtin_miniparser(input: &[u8]) -> ExecutionTrace {
    let start = Instant::now();
    let (blocks, outcome) = run(input, None);
    let wall_time = start.elapsed().as_secs_f64();
    ExecutionTrace {
        blocks,
        wall_time,
        outcome,
    }
}

/// The built-in parser as a [`Target`].
#[derive(Debug, Default, Clone)]
pub struct MiniParser;

impl MiniParser {
    pub fn new() -> Self {
        Self
    }
}

impl Target for MiniParser {
    fn execute(&mut self, input: &[u8], timeout: Duration) -> Result<ExecutionTrace, HarnessError> {
        let start = Instant::now();
        let (blocks, outcome) = run(input, Some(start + timeout));
        let mut wall_time = start.elapsed().as_secs_f64();
        if outcome == Outcome::TimedOut {
            wall_time = wall_time.min(timeout.as_secs_f64());
        }
        Ok(ExecutionTrace {
            blocks,
            wall_time,
            outcome,
        })
    }

    fn describe(&self) -> String {
        "builtin".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &[u8] = b"%PDF-1.4\n%\xe2\xe3\xcf\xd3\n\
1 0 obj\n<< /Type /Catalog /Pages 2 0 R >>\nendobj\n\
2 0 obj\n[1 -2 3.5 (a\\(b\\) \\101 (x)) <414> /N#20a true null]\nendobj\n\
3 0 obj\n<< /Length 4 /Filter /RunLengthDecode >>\nstream\n\x01\x05\x06\x80\nendstream\nendobj\n";

    fn small_doc() -> Vec<u8> {
        let mut doc = SMALL.to_vec();
        let offsets: Vec<usize> = [b"1 0 obj", b"2 0 obj", b"3 0 obj"]
            .iter()
            .map(|m| doc.windows(7).position(|w| w == *m).unwrap())
            .collect();
        let xref = doc.len();
        doc.extend_from_slice(b"xref\n0 4\n0000000000 65535 f \n");
        for o in offsets {
            doc.extend_from_slice(format!("{o:010} 00000 n \n").as_bytes());
        }
        doc.extend_from_slice(format!("trailer\n<< /Size 4 /Root 1 0 R >>\nstartxref\n{xref}\n%%EOF\n").as_bytes());
        doc
    }

    #[test]
    fn small_document_is_accepted() {
        let t = builtin_miniparser(&small_doc());
        assert_eq!(t.outcome, Outcome::Completed);
        assert!(t.blocks.contains(&Block::TrailerAccepted.id()));
        assert!(t.blocks.contains(&Block::HexOddDigits.id()));
        assert!(t.blocks.contains(&Block::NameEscape.id()));
        assert!(t.blocks.contains(&Block::RleEod.id()));
    }

    #[test]
    fn empty_input_hits_header_check_only() {
        let t = builtin_miniparser(b"");
        assert_eq!(t.outcome, Outcome::RejectedEarly);
        assert_eq!(t.blocks, BTreeSet::from([Block::HeaderCheck.id()]));
    }

    #[test]
    fn every_prefix_hits_a_subset() {
        let doc = small_doc();
        let full = builtin_miniparser(&doc).blocks;
        // the final "%%EOF\n" is the last thing checked
        for cut in 0..doc.len() - 6 {
            let blocks = builtin_miniparser(&doc[..cut]).blocks;
            assert!(blocks.is_subset(&full), "prefix {cut} left the full block set");
            assert!(blocks.len() < full.len(), "prefix {cut} reached every block");
        }
    }

    #[test]
    fn xref_overread_is_a_crash() {
        let mut doc = small_doc();
        let at = doc.windows(9).position(|w| w == b"xref\n0 4\n").unwrap();
        doc[at + 7] = b'5';
        assert_eq!(builtin_miniparser(&doc).outcome, Outcome::Crashed);
    }

    #[test]
    fn shifted_offsets_are_rejected() {
        let mut doc = small_doc();
        doc.insert(20, b' ');
        let t = builtin_miniparser(&doc);
        assert_eq!(t.outcome, Outcome::RejectedEarly);
        assert!(!t.blocks.contains(&Block::XrefOffsetMatch.id()));
    }

    #[test]
    fn deadline_times_out() {
        let mut p = MiniParser::new();
        let doc = small_doc();
        // a deadline that has already passed when the body starts
        let (_, outcome) = run(&doc, Some(Instant::now() - Duration::from_millis(1)));
        assert_eq!(outcome, Outcome::TimedOut);
        assert_eq!(
            p.execute(&doc, Duration::from_secs(5)).unwrap().outcome,
            Outcome::Completed
        );
    }

    const _: () = assert!(Block::COUNT >= 40 && Block::COUNT <= 128);
}
