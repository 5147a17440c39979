//! Initial memory images.
//!
//! Text format, one directive per line, `#` comments:
//!
//! ```text
//! size 2049                  # memory words
//! symbol __a 0 1024          # name, base address, length in words
//! data 0 5 -7 12             # words stored from address 0 onward
//! ```
//!
//! Words not covered by a `data` line are zero.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::SimError;
use crate::codegen::{Symbol, SymbolTable};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DataImage {
    pub symbols: Vec<Symbol>,
    pub words: Vec<i32>,
}

impl DataImage {
    /// Zeroed memory laid out by `table`.
    pub fn new(table: &SymbolTable) -> DataImage {
        DataImage { symbols: table.symbols.clone(), words: vec![0; table.size as usize] }
    }

    pub fn symbol(&self, name: &str) -> Option<&Symbol> {
        self.symbols.iter().find(|s| s.name == name)
    }

    pub fn addresses(&self) -> BTreeMap<String, u32> {
        self.symbols.iter().map(|s| (s.name.clone(), s.addr)).collect()
    }

    /// Words of a symbol.
    pub fn read(&self, name: &str) -> Option<&[i32]> {
        let s = self.symbol(name)?;
        self.words.get(s.addr as usize..(s.addr + s.len) as usize)
    }

    /// Overwrite the start of a symbol's words. Returns false if the symbol
    /// is unknown or too short.
    pub fn write(&mut self, name: &str, data: &[i32]) -> bool {
        let Some(s) = self.symbol(name).cloned() else { return false };
        if data.len() > s.len as usize {
            return false;
        }
        let at = s.addr as usize;
        match self.words.get_mut(at..at + data.len()) {
            Some(dst) => {
                dst.copy_from_slice(data);
                true
            }
            None => false,
        }
    }

    pub fn parse(text: &str) -> Result<DataImage, SimError> {
        let mut img = DataImage::default();
        let mut sized = false;
        for (i, raw) in text.lines().enumerate() {
            let err = |msg: &str| SimError::ImageSyntax { line: i + 1, msg: msg.to_string() };
            let line = raw.split('#').next().unwrap_or("").trim();
            let mut f = line.split_whitespace();
            let Some(kw) = f.next() else { continue };
            let nums = |f: std::str::SplitWhitespace<'_>| -> Result<Vec<i64>, SimError> {
                f.map(|w| w.parse::<i64>().map_err(|_| err(&format!("bad number `{w}`")))).collect()
            };
            match kw {
                "size" => {
                    let v = nums(f)?;
                    let [n] = v[..] else { return Err(err("size takes one number")) };
                    if sized || n < 0 {
                        return Err(err("bad or repeated size"));
                    }
                    img.words = vec![0; n as usize];
                    sized = true;
                }
                "symbol" => {
                    let name = f.next().ok_or_else(|| err("symbol needs a name"))?.to_string();
                    let v = nums(f)?;
                    let [addr, len] = v[..] else { return Err(err("symbol takes name, address, length")) };
                    let (Ok(addr), Ok(len)) = (u32::try_from(addr), u32::try_from(len)) else {
                        return Err(err("negative symbol address or length"));
                    };
                    if img.symbol(&name).is_some() {
                        return Err(err("symbol defined twice"));
                    }
                    img.symbols.push(Symbol { name, addr, len });
                }
                "data" => {
                    if !sized {
                        return Err(err("data before size"));
                    }
                    let v = nums(f)?;
                    let Some((&addr, values)) = v.split_first() else { return Err(err("data needs an address")) };
                    let end = addr + values.len() as i64;
                    if addr < 0 || end > img.words.len() as i64 {
                        return Err(err("data outside memory"));
                    }
                    for (k, &w) in values.iter().enumerate() {
                        img.words[addr as usize + k] = i32::try_from(w)
                            .or_else(|_| u32::try_from(w).map(|u| u as i32))
                            .map_err(|_| err("word out of 32-bit range"))?;
                    }
                }
                _ => return Err(err(&format!("unknown directive `{kw}`"))),
            }
        }
        if let Some(s) = img.symbols.iter().find(|s| (s.addr + s.len) as usize > img.words.len()) {
            return Err(SimError::ImageSyntax { line: 0, msg: format!("symbol {} exceeds memory", s.name) });
        }
        Ok(img)
    }

    /// Text form; zero runs are omitted.
    pub fn to_text(&self) -> String {
        let mut out = format!("size {}\n", self.words.len());
        for s in &self.symbols {
            let _ = writeln!(out, "symbol {} {} {}", s.name, s.addr, s.len);
        }
        let mut at = 0;
        while at < self.words.len() {
            if self.words[at] == 0 {
                at += 1;
                continue;
            }
            let end = (at..self.words.len()).find(|&k| self.words[k] == 0).unwrap_or(self.words.len());
            for chunk_start in (at..end).step_by(16) {
                let chunk = &self.words[chunk_start..end.min(chunk_start + 16)];
                let words: Vec<String> = chunk.iter().map(i32::to_string).collect();
                let _ = writeln!(out, "data {chunk_start} {}", words.join(" "));
            }
            at = end;
        }
        out
    }
}
