//! The bundled seed document.
//!
//! [`generate_sample`] builds it from a fixed seed; `data/sample.pdf` is that
//! output checked in. Stream payloads only use bytes in `0x00..=0x1f` and
//! `0x80..=0xff`, so no keyword or marker can appear inside a stream.

use std::fmt::Write as _;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The checked-in sample document.
pub const SAMPLE_SEED: &[u8] = include_bytes!("../data/sample.pdf");

const GENERATOR_SEED: u64 = 0x5eed_d0c5;
const PAGES: usize = 32;
const IMAGES: usize = 31;

struct Gen {
    rng: ChaCha8Rng,
}

impl Gen {
    fn below(&mut self, n: u32) -> u32 {
        self.rng.next_u32() % n
    }

    fn opaque_byte(&mut self) -> u8 {
        let r = self.below(160) as u8;
        if r < 32 {
            r
        } else {
            0x80 + (r - 32)
        }
    }

    fn raw_payload(&mut self, len: usize) -> Vec<u8> {
        (0..len).map(|_| self.opaque_byte()).collect()
    }

    /// RunLengthDecode data: literal runs of at most 32 bytes, repeats of
    /// 2..=128, then the end marker.
    fn rle_payload(&mut self, target_len: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(target_len + 40);
        while out.len() < target_len {
            if self.below(3) == 0 {
                let count = 2 + self.below(127) as usize;
                out.push((257 - count) as u8);
                out.push(self.opaque_byte());
            } else {
                let run = 1 + self.below(32) as usize;
                out.push((run - 1) as u8);
                for _ in 0..run {
                    out.push(self.opaque_byte());
                }
            }
        }
        out.push(0x80);
        out
    }
}

struct Writer {
    buf: Vec<u8>,
    offsets: Vec<usize>,
}

impl Writer {
    fn object(&mut self, num: usize, body: &str) {
        self.start(num);
        self.buf.extend_from_slice(format!("{num} 0 obj\n{body}\nendobj\n").as_bytes());
    }

    fn stream(&mut self, num: usize, dict: &str, data: &[u8], crlf: bool) {
        self.start(num);
        let eol = if crlf { "\r\n" } else { "\n" };
        self.buf
            .extend_from_slice(format!("{num} 0 obj\n{dict}\nstream{eol}").as_bytes());
        self.buf.extend_from_slice(data);
        self.buf.extend_from_slice(b"\nendstream\nendobj\n");
    }

    fn start(&mut self, num: usize) {
        assert_eq!(num, self.offsets.len() + 1, "objects are written in order");
        self.offsets.push(self.buf.len());
    }
}

/// Builds the sample document: a catalog, a page tree, fonts, an info
/// dictionary, content streams and image-like streams, followed by a
/// matching cross-reference table and trailer.
pub fn generate_sample() -> Vec<u8> {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(GENERATOR_SEED),
    };
    let mut w = Writer {
        buf: b"%PDF-1.4\n%\xe2\xe3\xcf\xd3\n".to_vec(),
        offsets: Vec::new(),
    };

    let fonts = [3usize, 4, 5];
    let info = 6;
    let first_page = 7;
    let page_num = |i: usize| first_page + 2 * i;
    let first_image = first_page + 2 * PAGES;

    w.object(
        1,
        "<< /Type /Catalog /Pages 2 0 R /PageMode /UseNone /Lang (en-US) \
         /ViewerPreferences << /HideToolbar false /FitWindow true /Direction /L2R >> >>",
    );
    let kids: Vec<String> = (0..PAGES).map(|i| format!("{} 0 R", page_num(i))).collect();
    w.object(
        2,
        &format!(
            "<< /Type /Pages /Kids [{}] /Count {PAGES} /MediaBox [0 0 612.0 792.0] >>",
            kids.join(" ")
        ),
    );
    let font_names = ["Helvetica", "Times-Roman", "Courier"];
    for (num, name) in fonts.iter().zip(font_names) {
        w.object(
            *num,
            &format!(
                "<< /Type /Font /Subtype /Type1 /BaseFont /{name} /Encoding /WinAnsiEncoding \
                 /FirstChar 32 /LastChar 126 /Widths null >>"
            ),
        );
    }
    w.buf.extend_from_slice(b"% document information\n");
    w.object(
        info,
        "<< /Title (Quarterly \\(draft\\) report) /Author (A. N. Author \\050ed.\\051) \
         /Subject (notes (with nesting) and escapes\\n) /Keywords <53616d706c65> \
         /Producer /Sample#20Writer /Trapped false /Version -1.25 /Revision -3 >>",
    );

    for i in 0..PAGES {
        let content = page_num(i) + 1;
        let font = fonts[i % fonts.len()];
        let images: Vec<String> = (0..2)
            .map(|k| format!("/Im{k} {} 0 R", first_image + (i + k) % IMAGES))
            .collect();
        w.object(
            page_num(i),
            &format!(
                "<< /Type /Page /Parent 2 0 R /Contents {content} 0 R \
                 /Resources << /Font << /F1 {font} 0 R >> /XObject << {} >> >> \
                 /Rotate {} /UserUnit 1.0 /Annots [] /Group null >>",
                images.join(" "),
                if i % 4 == 0 { 90 } else { 0 },
            ),
        );
        let (dict, data) = if i % 2 == 0 {
            let len = 1800 + g.below(1200) as usize;
            let data = g.rle_payload(len);
            let dict = format!("<< /Length {} /Filter /RunLengthDecode >>", data.len());
            (dict, data)
        } else {
            let len = 1500 + g.below(1500) as usize;
            let data = g.raw_payload(len);
            (format!("<< /Length {} >>", data.len()), data)
        };
        w.stream(content, &dict, &data, i == 5);
    }

    for k in 0..IMAGES {
        let num = first_image + k;
        let (width, height) = (16 + 4 * g.below(12), 8 + 2 * g.below(20));
        let data_len = 1800 + g.below(1800) as usize;
        let rle = k % 3 == 0;
        let data = if rle { g.rle_payload(data_len) } else { g.raw_payload(data_len) };
        let mut dict = format!(
            "<< /Type /XObject /Subtype /Image /Width {width} /Height {height} \
             /ColorSpace [/Indexed /DeviceRGB 1 <00ff00 ff00ff>] /BitsPerComponent 8 \
             /Decode [0 1] /Interpolate true /Length {}",
            data.len()
        );
        if rle {
            dict.push_str(" /Filter /RunLengthDecode");
        }
        dict.push_str(" >>");
        w.stream(num, &dict, &data, false);
    }

    let total = w.offsets.len() + 1;
    let xref_at = w.buf.len();
    let mut tail = String::new();
    let _ = write!(tail, "xref\n0 {total}\n0000000000 65535 f \n");
    for off in &w.offsets {
        let _ = writeln!(tail, "{off:010} 00000 n ");
    }
    let _ = write!(
        tail,
        "trailer\n<< /Size {total} /Root 1 0 R /Info {info} 0 R /ID [<0123456789abcdef> <fedcba9876543210>] >>\n\
         startxref\n{xref_at}\n%%EOF\n"
    );
    w.buf.extend_from_slice(tail.as_bytes());
    w.buf
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::miniparser::Block;
    use crate::harness::{builtin_miniparser, Outcome};

    #[test]
    fn checked_in_sample_matches_generator() {
        assert!(SAMPLE_SEED == generate_sample().as_slice(), "regenerate data/sample.pdf");
    }

    #[test]
    fn sample_parses_completely() {
        let t = builtin_miniparser(SAMPLE_SEED);
        assert_eq!(t.outcome, Outcome::Completed);
        assert!(t.blocks.contains(&Block::TrailerAccepted.id()));
        assert!(t.blocks.len() >= 40, "only {} blocks", t.blocks.len());
    }

    #[test]
    fn streams_hold_no_keywords() {
        let text = SAMPLE_SEED;
        let objs = text.windows(7).filter(|w| w.ends_with(b" 0 obj")).count();
        assert_eq!(objs, 101);
    }
}
