//! Print-format templates: rendering ops as assembly text and matching
//! assembly text back into ops.
//!
//! A template is literal text with placeholders: `{c}` is the op's cluster
//! prefix and `{0}`, `{1}`, ... are operands in opcode-class order.
//! Matching ignores whitespace in both the template and the text.

use crate::isa::{ClusterSet, Cond, Half, MemRef, Op, Operand, OperandKind, Reg, RegClass, RegId, RegRef};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Lit(String),
    Cluster,
    Operand(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrintFormat {
    source: String,
    segments: Vec<Segment>,
}

impl PrintFormat {
    pub fn parse(source: &str) -> Result<PrintFormat, String> {
        let mut segments = Vec::new();
        let mut lit = String::new();
        let mut chars = source.chars().peekable();
        while let Some(ch) = chars.next() {
            if ch != '{' {
                lit.push(ch);
                continue;
            }
            let mut name = String::new();
            loop {
                match chars.next() {
                    Some('}') => break,
                    Some(c) => name.push(c),
                    None => return Err(format!("unterminated placeholder in {source:?}")),
                }
            }
            if !lit.is_empty() {
                segments.push(Segment::Lit(std::mem::take(&mut lit)));
            }
            if name == "c" {
                segments.push(Segment::Cluster);
            } else {
                let idx: usize = name.parse().map_err(|_| format!("unknown placeholder {{{name}}}"))?;
                segments.push(Segment::Operand(idx));
            }
        }
        if !lit.is_empty() {
            segments.push(Segment::Lit(lit));
        }
        Ok(PrintFormat { source: source.to_string(), segments })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Distinct operand placeholders, sorted.
    pub fn operand_placeholders(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .segments
            .iter()
            .filter_map(|s| match s {
                Segment::Operand(i) => Some(*i),
                _ => None,
            })
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn has_cluster(&self) -> bool {
        self.segments.contains(&Segment::Cluster)
    }

    pub fn render(&self, op: &Op, clusters: &[String]) -> String {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Lit(s) => out.push_str(s),
                Segment::Cluster => out.push_str(&cluster_prefix(op.clusters, clusters)),
                Segment::Operand(i) => {
                    if let Some(o) = op.operands.get(*i) {
                        out.push_str(&render_operand(o, clusters));
                    }
                }
            }
        }
        out
    }

    /// Match whitespace-free `text` against this template. Returns the
    /// cluster set (empty when the template has no `{c}`) and the operands.
    pub fn matches(
        &self,
        text: &str,
        kinds: &[OperandKind],
        clusters: &[String],
    ) -> Option<(ClusterSet, Vec<Operand>)> {
        let mut pos = 0;
        let mut set = ClusterSet::EMPTY;
        let mut operands: Vec<Option<Operand>> = vec![None; kinds.len()];
        for seg in &self.segments {
            let rest = &text[pos..];
            match seg {
                Segment::Lit(s) => {
                    let lit: String = s.chars().filter(|c| !c.is_whitespace()).collect();
                    if !rest.starts_with(&lit) {
                        return None;
                    }
                    pos += lit.len();
                }
                Segment::Cluster => {
                    let (cs, used) = parse_cluster_prefix(rest, clusters)?;
                    if cs.is_empty() {
                        return None;
                    }
                    set = cs;
                    pos += used;
                }
                Segment::Operand(i) => {
                    let kind = *kinds.get(*i)?;
                    let (opnd, used) = parse_operand(rest, kind, clusters)?;
                    operands[*i] = Some(opnd);
                    pos += used;
                }
            }
        }
        if pos != text.len() {
            return None;
        }
        let operands = operands.into_iter().collect::<Option<Vec<_>>>()?;
        Some((set, operands))
    }
}

pub fn cluster_prefix(set: ClusterSet, clusters: &[String]) -> String {
    set.iter().filter_map(|i| clusters.get(i)).map(String::as_str).collect()
}

pub fn render_reg(r: RegRef) -> String {
    let r = r.resolved();
    match (r.reg.class, r.reg.id) {
        (RegClass::Gpr, RegId::Phys(n)) => format!("r{n}"),
        (RegClass::Pair, RegId::Phys(n)) => format!("r{}:{}", n + 1, n),
        (RegClass::Addr, RegId::Phys(n)) => format!("u{n}"),
        (RegClass::Macc, RegId::Phys(n)) => format!("MACC{n}"),
        (class, RegId::Virt(v)) => {
            let base = match class {
                RegClass::Gpr => "%r",
                RegClass::Pair => "%p",
                RegClass::Addr => "%u",
                RegClass::Macc => "%m",
            };
            match r.half {
                Half::Whole => format!("{base}{v}"),
                Half::Lo => format!("{base}{v}.lo"),
                Half::Hi => format!("{base}{v}.hi"),
            }
        }
    }
}

pub fn render_operand(o: &Operand, clusters: &[String]) -> String {
    match o {
        Operand::Reg(r) => render_reg(*r),
        Operand::ClusterReg(set, r) => format!("{}{}", cluster_prefix(*set, clusters), render_reg(*r)),
        Operand::Imm(v) => v.to_string(),
        Operand::Sym { name, offset } => match offset {
            0 => name.clone(),
            o if *o > 0 => format!("{name}+{o}"),
            o => format!("{name}{o}"),
        },
        Operand::Mem(m) => {
            let base = render_reg(RegRef::whole(m.base));
            let flag = u8::from(m.distributed);
            if m.post_inc {
                format!("[{base}+={},{flag}]", m.amount)
            } else if m.amount >= 0 {
                format!("[{base}+{},{flag}]", m.amount)
            } else {
                format!("[{base}{},{flag}]", m.amount)
            }
        }
        Operand::Cond(c) => c.symbol().to_string(),
        Operand::Label(l) => l.clone(),
    }
}

fn parse_cluster_prefix(s: &str, clusters: &[String]) -> Option<(ClusterSet, usize)> {
    let mut set = ClusterSet::EMPTY;
    let mut used = 0;
    for ch in s.chars() {
        let Some(idx) = clusters.iter().position(|c| c.len() == 1 && c.starts_with(ch)) else {
            break;
        };
        if set.contains(idx) {
            return None;
        }
        set.insert(idx);
        used += ch.len_utf8();
    }
    Some((set, used))
}

fn parse_number(s: &str) -> Option<(i64, usize)> {
    let bytes = s.as_bytes();
    let mut i = 0;
    if bytes.first() == Some(&b'-') {
        i = 1;
    }
    let start = i;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i == start {
        return None;
    }
    s[..i].parse().ok().map(|v| (v, i))
}

fn parse_unsigned(s: &str) -> Option<(u8, usize)> {
    let end = s.bytes().take_while(u8::is_ascii_digit).count();
    if end == 0 {
        return None;
    }
    s[..end].parse().ok().map(|v| (v, end))
}

fn parse_gpr(s: &str) -> Option<(u8, usize)> {
    let rest = s.strip_prefix('r')?;
    let (n, used) = parse_unsigned(rest)?;
    if rest[used..].starts_with(':') {
        return None;
    }
    Some((n, used + 1))
}

fn parse_pair(s: &str) -> Option<(u8, usize)> {
    let rest = s.strip_prefix('r')?;
    let (hi, a) = parse_unsigned(rest)?;
    let rest2 = rest[a..].strip_prefix(':')?;
    let (lo, b) = parse_unsigned(rest2)?;
    if lo % 2 != 0 || hi != lo.checked_add(1)? {
        return None;
    }
    Some((lo, 1 + a + 1 + b))
}

fn parse_ident(s: &str) -> Option<(String, usize)> {
    let first = s.chars().next()?;
    if !(first == '_' || first == '.' || first.is_ascii_alphabetic()) {
        return None;
    }
    let end = s
        .char_indices()
        .find(|(_, c)| !(c.is_ascii_alphanumeric() || *c == '_' || *c == '.' || *c == '$'))
        .map_or(s.len(), |(i, _)| i);
    Some((s[..end].to_string(), end))
}

fn parse_sym(s: &str) -> Option<(Operand, usize)> {
    if !s.starts_with('_') {
        return None;
    }
    let (name, mut used) = parse_ident(s)?;
    let mut offset = 0i32;
    let rest = &s[used..];
    if let Some(r) = rest.strip_prefix('+') {
        let (v, n) = parse_number(r)?;
        offset = i32::try_from(v).ok()?;
        used += 1 + n;
    } else if rest.starts_with('-') {
        let (v, n) = parse_number(rest)?;
        offset = i32::try_from(v).ok()?;
        used += n;
    }
    Some((Operand::Sym { name, offset }, used))
}

fn parse_imm_or_sym(s: &str) -> Option<(Operand, usize)> {
    if let Some((v, n)) = parse_number(s) {
        return Some((Operand::Imm(i32::try_from(v).ok()?), n));
    }
    parse_sym(s)
}

fn parse_mem(s: &str) -> Option<(Operand, usize)> {
    let rest = s.strip_prefix("[u")?;
    let (base, a) = parse_unsigned(rest)?;
    let mut pos = 2 + a;
    let tail = &s[pos..];
    let (post_inc, amount) = if let Some(t) = tail.strip_prefix("+=") {
        let (v, n) = parse_number(t)?;
        pos += 2 + n;
        (true, v)
    } else if let Some(t) = tail.strip_prefix('+') {
        let (v, n) = parse_number(t)?;
        pos += 1 + n;
        (false, v)
    } else {
        let (v, n) = parse_number(tail)?;
        if v >= 0 {
            return None;
        }
        pos += n;
        (false, v)
    };
    let tail = s[pos..].strip_prefix(',')?;
    let distributed = match tail.as_bytes().first()? {
        b'0' => false,
        b'1' => true,
        _ => return None,
    };
    if !tail[1..].starts_with(']') {
        return None;
    }
    pos += 3;
    let mem = MemRef { base: Reg::addr(base), amount: i32::try_from(amount).ok()?, post_inc, distributed };
    Some((Operand::Mem(mem), pos))
}

fn parse_cond(s: &str) -> Option<(Operand, usize)> {
    const TABLE: [(&str, Cond); 6] =
        [("==", Cond::Eq), ("!=", Cond::Ne), ("<=", Cond::Le), (">=", Cond::Ge), ("<", Cond::Lt), (">", Cond::Gt)];
    TABLE.iter().find(|(t, _)| s.starts_with(t)).map(|(t, c)| (Operand::Cond(*c), t.len()))
}

fn parse_cluster_gpr(s: &str, clusters: &[String]) -> Option<(Operand, usize)> {
    let (set, a) = parse_cluster_prefix(s, clusters)?;
    if set.is_empty() {
        return None;
    }
    let (n, b) = parse_gpr(&s[a..])?;
    Some((Operand::ClusterReg(set, RegRef::whole(Reg::gpr(n))), a + b))
}

pub fn parse_operand(s: &str, kind: OperandKind, clusters: &[String]) -> Option<(Operand, usize)> {
    let whole = |r: Reg| Operand::Reg(RegRef::whole(r));
    match kind {
        OperandKind::Gpr => parse_gpr(s).map(|(n, u)| (whole(Reg::gpr(n)), u)),
        OperandKind::Pair => parse_pair(s).map(|(n, u)| (whole(Reg::pair(n)), u)),
        OperandKind::Addr => {
            let (n, u) = parse_unsigned(s.strip_prefix('u')?)?;
            Some((whole(Reg::addr(n)), u + 1))
        }
        OperandKind::Macc => {
            let (n, u) = parse_unsigned(s.strip_prefix("MACC")?)?;
            Some((whole(Reg::macc(n)), u + 4))
        }
        OperandKind::ImmOrSym => parse_imm_or_sym(s),
        OperandKind::Mem => parse_mem(s),
        OperandKind::Cond => parse_cond(s),
        OperandKind::Label => parse_ident(s).map(|(l, u)| (Operand::Label(l), u)),
        OperandKind::ClusterGpr => parse_cluster_gpr(s, clusters),
        OperandKind::AddrSrc => parse_imm_or_sym(s).or_else(|| parse_cluster_gpr(s, clusters)),
    }
}
