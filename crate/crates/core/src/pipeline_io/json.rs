//! JSON output with every float written to six decimal places.

use serde::Serialize;
use serde_json::ser::Formatter;
use std::io::{self, Write};

#[derive(Debug, Default, Clone, Copy)]
pub struct SixDigits;

impl Formatter for SixDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        // avoid "-0.000000" so output does not depend on the sign of tiny values
        let v = if value == 0.0 { 0.0 } else { value };
        let s = format!("{v:.6}");
        let s = if s.trim_start_matches('-').bytes().all(|b| b == b'0' || b == b'.') {
            "0.000000".to_string()
        } else {
            s
        };
        writer.write_all(s.as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

pub fn to_writer<W: Write, T: Serialize + ?Sized>(writer: W, value: &T) -> serde_json::Result<()> {
    let mut ser = serde_json::Serializer::with_formatter(writer, SixDigits);
    value.serialize(&mut ser)
}

pub fn to_string<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    to_writer(&mut buf, value).expect("serializing to memory cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}
