//! 16-bit binary PGM with a fixed-point scale recorded in a comment line.

use super::MbdError;
use std::io::{BufRead, Write};

/// Fixed-point factor applied before quantizing to 16 bits.
pub const PGM_SCALE: f64 = 64.0;

pub fn quantize(value: f64) -> u16 {
    (value * PGM_SCALE).round().clamp(0.0, u16::MAX as f64) as u16
}

pub fn write_pgm16<W: Write>(
    mut out: W,
    width: usize,
    height: usize,
    values: &[f64],
) -> std::io::Result<()> {
    write!(out, "P5\n# scale={}\n{} {}\n65535\n", PGM_SCALE as u32, width, height)?;
    let mut buf = Vec::with_capacity(values.len() * 2);
    for &v in values {
        buf.extend_from_slice(&quantize(v).to_be_bytes());
    }
    out.write_all(&buf)
}

/// Decoded PGM: raw samples plus the scale found in the header (1 if absent).
#[derive(Debug, Clone, PartialEq)]
pub struct Pgm16 {
    pub width: usize,
    pub height: usize,
    pub scale: f64,
    pub samples: Vec<u16>,
}

impl Pgm16 {
    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|&s| s as f64 / self.scale).collect()
    }
}

pub fn read_pgm16<R: BufRead>(mut input: R) -> Result<Pgm16, MbdError> {
    let bad = |m: &str| MbdError::Pgm(m.to_string());
    let mut tokens: Vec<String> = Vec::new();
    let mut scale = 1.0;
    while tokens.len() < 4 {
        let mut line = String::new();
        if input.read_line(&mut line).map_err(|e| bad(&e.to_string()))? == 0 {
            return Err(bad("truncated header"));
        }
        let line = line.trim();
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(v) = comment.trim().strip_prefix("scale=") {
                scale = v.trim().parse().map_err(|_| bad("bad scale comment"))?;
            }
            continue;
        }
        tokens.extend(line.split_whitespace().map(str::to_string));
    }
    if tokens[0] != "P5" {
        return Err(bad("not a binary PGM"));
    }
    let parse = |t: &str| t.parse::<usize>().map_err(|_| bad("bad header number"));
    let (width, height, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
    if maxval != 65535 {
        return Err(bad("expected maxval 65535"));
    }
    let mut raw = vec![0u8; width * height * 2];
    input.read_exact(&mut raw).map_err(|e| bad(&e.to_string()))?;
    let samples = raw
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok(Pgm16 { width, height, scale, samples })
}
