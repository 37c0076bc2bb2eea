//! PGM / PPM images, plain (`P2`, `P3`) and binary (`P5`, `P6`).
//!
//! Samples are kept as raw integers in `0..=maxval`; binary files with
//! `maxval > 255` store big-endian 16-bit samples. Writers emit the header
//! `P<n>\n<w> <h>\n<maxval>\n`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// 1 for PGM, 3 for PPM.
    pub channels: usize,
    pub maxval: u16,
    /// Interleaved samples, row-major.
    pub samples: Vec<u16>,
    /// Binary (`P5`/`P6`) rather than plain encoding.
    pub binary: bool,
}

fn fmt_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

struct Cursor<'a> {
    b: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_ws_and_comments(&mut self) {
        while self.pos < self.b.len() {
            match self.b[self.pos] {
                b'#' => {
                    while self.pos < self.b.len() && self.b[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self) -> Result<u32> {
        self.skip_ws_and_comments();
        let start = self.pos;
        while self.pos < self.b.len() && self.b[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return fmt_err(format!("expected a number at byte {start}"));
        }
        std::str::from_utf8(&self.b[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .map_or_else(|| fmt_err("number out of range"), Ok)
    }
}

impl Image {
    pub fn gray(width: usize, height: usize, maxval: u16, samples: Vec<u16>) -> Result<Self> {
        Self::new(width, height, 1, maxval, samples, true)
    }

    pub fn new(width: usize, height: usize, channels: usize, maxval: u16, samples: Vec<u16>, binary: bool) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return fmt_err(format!("{channels} channels; only 1 (PGM) or 3 (PPM) are supported"));
        }
        if maxval == 0 {
            return fmt_err("maxval must be positive");
        }
        if samples.len() != width * height * channels {
            return fmt_err(format!("{} samples for {width}x{height}x{channels}", samples.len()));
        }
        if let Some(s) = samples.iter().find(|&&s| s > maxval) {
            return fmt_err(format!("sample {s} exceeds maxval {maxval}"));
        }
        Ok(Self {
            width,
            height,
            channels,
            maxval,
            samples,
            binary,
        })
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 2 || bytes[0] != b'P' {
            return fmt_err("missing Netpbm magic");
        }
        let (channels, binary) = match bytes[1] {
            b'2' => (1, false),
            b'3' => (3, false),
            b'5' => (1, true),
            b'6' => (3, true),
            m => return fmt_err(format!("unsupported Netpbm type P{}", m as char)),
        };
        let mut cur = Cursor { b: bytes, pos: 2 };
        let width = cur.number()? as usize;
        let height = cur.number()? as usize;
        let maxval = cur.number()?;
        if maxval == 0 || maxval > 65535 {
            return fmt_err(format!("maxval {maxval} out of range"));
        }
        let count = width * height * channels;
        let mut samples = Vec::with_capacity(count);
        if binary {
            if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
                return fmt_err("missing whitespace after maxval");
            }
            let data = &bytes[cur.pos + 1..];
            let wide = maxval > 255;
            let need = count * if wide { 2 } else { 1 };
            if data.len() < need {
                return fmt_err(format!("raster has {} bytes, need {need}", data.len()));
            }
            if wide {
                samples.extend(data[..need].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])));
            } else {
                samples.extend(data[..need].iter().map(|&b| b as u16));
            }
        } else {
            for _ in 0..count {
                let v = cur.number()?;
                if v > maxval {
                    return fmt_err(format!("sample {v} exceeds maxval {maxval}"));
                }
                samples.push(v as u16);
            }
        }
        Self::new(width, height, channels, maxval as u16, samples, binary)
    }

    pub fn encode(&self) -> Vec<u8> {
        let magic = match (self.channels, self.binary) {
            (1, false) => "P2",
            (3, false) => "P3",
            (1, true) => "P5",
            _ => "P6",
        };
        let mut out = format!("{magic}\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        if self.binary {
            if self.maxval > 255 {
                for s in &self.samples {
                    out.extend_from_slice(&s.to_be_bytes());
                }
            } else {
                out.extend(self.samples.iter().map(|&s| s as u8));
            }
        } else {
            let row = self.width * self.channels;
            for line in self.samples.chunks(row.max(1)) {
                let text: Vec<String> = line.iter().map(|s| s.to_string()).collect();
                out.extend_from_slice(text.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
        out
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    /// `(1, channels, height, width)` tensor of raw sample values.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let ch = self.channels;
        Tensor::from_fn([1, ch, self.height, self.width], |_, c, y, x| {
            T::from_acc(self.samples[(y * self.width + x) * ch + c] as f64)
        })
    }

    /// Rounds and clamps a `(1, c, h, w)` tensor (c = 1 or 3) into an image.
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>, maxval: u16, binary: bool) -> Result<Self> {
        let s = t.shape();
        if s.n != 1 || (s.c != 1 && s.c != 3) {
            return fmt_err(format!("cannot store tensor {s} as an image"));
        }
        let mut samples = Vec::with_capacity(s.c * s.plane());
        for y in 0..s.h {
            for x in 0..s.w {
                for c in 0..s.c {
                    let v = t.at(0, c, y, x).acc();
                    let v = if v.is_finite() { v.round().clamp(0.0, maxval as f64) } else { 0.0 };
                    samples.push(v as u16);
                }
            }
        }
        Self::new(s.w, s.h, s.c, maxval, samples, binary)
    }
}
