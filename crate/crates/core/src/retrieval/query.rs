//! A small SQL-like selection language over two derived relations:
//!
//! ```text
//! Objects(object_id, category, volume)
//! Objects_Frames(object_id, frame_id)
//! ```
//!
//! Grammar (keywords are case-insensitive, a trailing `;` is allowed):
//!
//! ```text
//! query   = "SELECT" columns "FROM" source [ "WHERE" cond { "AND" cond } ]
//! columns = "*" | column { "," column }
//! source  = "Objects" | "Objects_Frames"
//!         | "Objects" "JOIN" "Objects_Frames" [ "ON" column "=" column | "USING" "(" "object_id" ")" ]
//! cond    = column op literal
//!         | column [ "NOT" ] "IN" "(" literal { "," literal } ")"
//!         | column "BETWEEN" literal "AND" literal
//! op      = "=" | "!=" | "<>" | "<" | "<=" | ">" | ">="
//! column  = [ table "." ] ( "object_id" | "category" | "volume" | "frame_id" )
//! literal = number | "'" text "'" | '"' text '"'
//! ```
//!
//! Results are sets: duplicate rows collapse and rows come back sorted.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::memory::{ObjectId, SceneMemory};
use crate::FrameId;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("malformed query: {0}")]
    MalformedPredicate(String),
}

fn malformed(msg: impl Into<String>) -> QueryError {
    QueryError::MalformedPredicate(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Column {
    ObjectId,
    Category,
    Volume,
    FrameId,
}

impl Column {
    fn parse(name: &str) -> Result<Column, QueryError> {
        let lower = name.to_ascii_lowercase();
        let (table, col) = match lower.split_once('.') {
            Some((t, c)) => (Some(t), c),
            None => (None, lower.as_str()),
        };
        let column = match col {
            "object_id" => Column::ObjectId,
            "category" => Column::Category,
            "volume" => Column::Volume,
            "frame_id" => Column::FrameId,
            _ => return Err(QueryError::UnknownColumn(name.to_string())),
        };
        match (table, column) {
            (None, _) | (Some("objects"), Column::ObjectId | Column::Category | Column::Volume) => Ok(column),
            (Some("objects_frames"), Column::ObjectId | Column::FrameId) => Ok(column),
            _ => Err(QueryError::UnknownColumn(name.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Column::ObjectId => "object_id",
            Column::Category => "category",
            Column::Volume => "volume",
            Column::FrameId => "frame_id",
        }
    }

    fn is_text(self) -> bool {
        self == Column::Category
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Objects,
    ObjectsFrames,
    Join,
}

impl Source {
    pub fn columns(self) -> &'static [Column] {
        match self {
            Source::Objects => &[Column::ObjectId, Column::Category, Column::Volume],
            Source::ObjectsFrames => &[Column::ObjectId, Column::FrameId],
            Source::Join => &[Column::ObjectId, Column::Category, Column::Volume, Column::FrameId],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Condition {
    Compare(Column, CmpOp, Literal),
    In { column: Column, negated: bool, values: Vec<Literal> },
    Between(Column, Literal, Literal),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub columns: Vec<Column>,
    pub source: Source,
    pub conditions: Vec<Condition>,
}

/// Cell value. Ordering is total (floats via `total_cmp`).
#[derive(Debug, Clone)]
pub enum Value {
    Int(u64),
    Float(f64),
    Text(String),
}

impl Value {
    fn rank(&self) -> u8 {
        match self {
            Value::Int(_) => 0,
            Value::Float(_) => 1,
            Value::Text(_) => 2,
        }
    }

    pub fn as_u64(&self) -> Option<u64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Float(a), Value::Float(b)) => a.total_cmp(b),
            (Value::Text(a), Value::Text(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v}"),
            Value::Text(s) => write!(f, "{s:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowSet {
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Value>>,
}

impl RowSet {
    /// Values of the `object_id` column, if projected.
    pub fn object_ids(&self) -> Vec<ObjectId> {
        let Some(i) = self.columns.iter().position(|c| *c == Column::ObjectId) else { return Vec::new() };
        let ids: BTreeSet<ObjectId> = self.rows.iter().filter_map(|r| r[i].as_u64()).collect();
        ids.into_iter().collect()
    }
}

// ---- lexer ----

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Num(f64),
    Str(String),
    Sym(&'static str),
}

fn lex(src: &str) -> Result<Vec<Tok>, QueryError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                i += 1;
            }
            out.push(Tok::Word(chars[start..i].iter().collect()));
        } else if c.is_ascii_digit() || ((c == '-' || c == '.') && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            i += 1;
            while i < chars.len()
                && (chars[i].is_ascii_digit()
                    || matches!(chars[i], '.' | 'e' | 'E')
                    || (matches!(chars[i], '+' | '-') && matches!(chars[i - 1], 'e' | 'E')))
            {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let v: f64 = text.parse().map_err(|_| malformed(alloc::format!("bad number `{text}`")))?;
            out.push(Tok::Num(v));
        } else if c == '\'' || c == '"' {
            let start = i + 1;
            let end =
                chars[start..].iter().position(|&d| d == c).map(|p| start + p).ok_or_else(|| malformed("unterminated string"))?;
            out.push(Tok::Str(chars[start..end].iter().collect()));
            i = end + 1;
        } else {
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            let sym = match two.as_str() {
                "<=" => Some("<="),
                ">=" => Some(">="),
                "!=" => Some("!="),
                "<>" => Some("!="),
                _ => None,
            };
            if let Some(s) = sym {
                out.push(Tok::Sym(s));
                i += 2;
                continue;
            }
            let s = match c {
                ',' => ",",
                '(' => "(",
                ')' => ")",
                '*' => "*",
                '=' => "=",
                '<' => "<",
                '>' => ">",
                ';' => ";",
                _ => return Err(malformed(alloc::format!("unexpected character `{c}`"))),
            };
            out.push(Tok::Sym(s));
            i += 1;
        }
    }
    Ok(out)
}

// ---- parser ----

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn keyword(&mut self, kw: &str) -> Result<(), QueryError> {
        if self.is_keyword(kw) {
            self.pos += 1;
            Ok(())
        } else {
            Err(malformed(alloc::format!("expected {kw}")))
        }
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(t)) if *t == s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn sym(&mut self, s: &str) -> Result<(), QueryError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(malformed(alloc::format!("expected `{s}`")))
        }
    }

    fn column(&mut self) -> Result<Column, QueryError> {
        match self.next() {
            Some(Tok::Word(w)) => Column::parse(&w),
            _ => Err(malformed("expected column name")),
        }
    }

    fn literal(&mut self) -> Result<Literal, QueryError> {
        match self.next() {
            Some(Tok::Num(v)) => Ok(Literal::Number(v)),
            Some(Tok::Str(s)) => Ok(Literal::Text(s)),
            _ => Err(malformed("expected literal")),
        }
    }

    fn source(&mut self) -> Result<Source, QueryError> {
        let first = match self.next() {
            Some(Tok::Word(w)) => w.to_ascii_lowercase(),
            _ => return Err(malformed("expected table name")),
        };
        match first.as_str() {
            "objects_frames" => Ok(Source::ObjectsFrames),
            "objects" if self.is_keyword("JOIN") => {
                self.pos += 1;
                match self.next() {
                    Some(Tok::Word(w)) if w.eq_ignore_ascii_case("objects_frames") => {}
                    _ => return Err(malformed("only Objects JOIN Objects_Frames is supported")),
                }
                if self.is_keyword("ON") {
                    self.pos += 1;
                    let a = self.column()?;
                    self.sym("=")?;
                    let b = self.column()?;
                    if a != Column::ObjectId || b != Column::ObjectId {
                        return Err(malformed("join condition must equate object_id"));
                    }
                } else if self.is_keyword("USING") {
                    self.pos += 1;
                    self.sym("(")?;
                    if self.column()? != Column::ObjectId {
                        return Err(malformed("join must use object_id"));
                    }
                    self.sym(")")?;
                }
                Ok(Source::Join)
            }
            "objects" => Ok(Source::Objects),
            _ => Err(malformed(alloc::format!("unknown table `{first}`"))),
        }
    }

    fn condition(&mut self) -> Result<Condition, QueryError> {
        let column = self.column()?;
        let negated = if self.is_keyword("NOT") {
            self.pos += 1;
            if !self.is_keyword("IN") {
                return Err(malformed("expected IN after NOT"));
            }
            true
        } else {
            false
        };
        if self.is_keyword("IN") {
            self.pos += 1;
            self.sym("(")?;
            let mut values = alloc::vec![self.literal()?];
            while self.eat_sym(",") {
                values.push(self.literal()?);
            }
            self.sym(")")?;
            return Ok(Condition::In { column, negated, values });
        }
        if self.is_keyword("BETWEEN") {
            self.pos += 1;
            let lo = self.literal()?;
            self.keyword("AND")?;
            let hi = self.literal()?;
            return Ok(Condition::Between(column, lo, hi));
        }
        let op = match self.next() {
            Some(Tok::Sym("=")) => CmpOp::Eq,
            Some(Tok::Sym("!=")) => CmpOp::Ne,
            Some(Tok::Sym("<")) => CmpOp::Lt,
            Some(Tok::Sym("<=")) => CmpOp::Le,
            Some(Tok::Sym(">")) => CmpOp::Gt,
            Some(Tok::Sym(">=")) => CmpOp::Ge,
            _ => return Err(malformed("expected comparison operator")),
        };
        Ok(Condition::Compare(column, op, self.literal()?))
    }
}

fn check_type(column: Column, lit: &Literal) -> Result<(), QueryError> {
    match (column.is_text(), lit) {
        (true, Literal::Text(_)) | (false, Literal::Number(_)) => Ok(()),
        _ => Err(malformed(alloc::format!("type mismatch for column {}", column.name()))),
    }
}

impl Condition {
    fn columns_and_literals(&self) -> (Column, Vec<&Literal>) {
        match self {
            Condition::Compare(c, _, l) => (*c, alloc::vec![l]),
            Condition::In { column, values, .. } => (*column, values.iter().collect()),
            Condition::Between(c, a, b) => (*c, alloc::vec![a, b]),
        }
    }
}

pub fn parse(src: &str) -> Result<Query, QueryError> {
    let mut p = Parser { toks: lex(src)?, pos: 0 };
    p.keyword("SELECT")?;
    let mut columns = Vec::new();
    let star = p.eat_sym("*");
    if !star {
        columns.push(p.column()?);
        while p.eat_sym(",") {
            columns.push(p.column()?);
        }
    }
    p.keyword("FROM")?;
    let source = p.source()?;
    let mut conditions = Vec::new();
    if p.is_keyword("WHERE") {
        p.pos += 1;
        conditions.push(p.condition()?);
        while p.is_keyword("AND") {
            p.pos += 1;
            conditions.push(p.condition()?);
        }
    }
    p.eat_sym(";");
    if p.pos < p.toks.len() {
        return Err(malformed("trailing input"));
    }
    if star {
        columns = source.columns().to_vec();
    }
    for c in &columns {
        if !source.columns().contains(c) {
            return Err(QueryError::UnknownColumn(c.name().to_owned()));
        }
    }
    for cond in &conditions {
        let (c, lits) = cond.columns_and_literals();
        if !source.columns().contains(&c) {
            return Err(QueryError::UnknownColumn(c.name().to_owned()));
        }
        for l in lits {
            check_type(c, l)?;
        }
    }
    Ok(Query { columns, source, conditions })
}

// ---- evaluation ----

struct Row<'a> {
    object_id: ObjectId,
    category: &'a str,
    volume: f64,
    frame_id: FrameId,
}

enum Cell<'a> {
    Num(f64),
    Text(&'a str),
}

impl Row<'_> {
    fn cell(&self, c: Column) -> Cell<'_> {
        match c {
            Column::ObjectId => Cell::Num(self.object_id as f64),
            Column::Category => Cell::Text(self.category),
            Column::Volume => Cell::Num(self.volume),
            Column::FrameId => Cell::Num(self.frame_id as f64),
        }
    }

    fn value(&self, c: Column) -> Value {
        match c {
            Column::ObjectId => Value::Int(self.object_id),
            Column::Category => Value::Text(self.category.to_string()),
            Column::Volume => Value::Float(self.volume),
            Column::FrameId => Value::Int(self.frame_id),
        }
    }
}

fn compare(cell: &Cell<'_>, lit: &Literal) -> Option<Ordering> {
    match (cell, lit) {
        (Cell::Num(a), Literal::Number(b)) => a.partial_cmp(b),
        (Cell::Text(a), Literal::Text(b)) => Some((*a).cmp(b.as_str())),
        _ => None,
    }
}

impl Condition {
    fn holds(&self, row: &Row<'_>) -> bool {
        match self {
            Condition::Compare(c, op, lit) => {
                let Some(ord) = compare(&row.cell(*c), lit) else { return false };
                match op {
                    CmpOp::Eq => ord == Ordering::Equal,
                    CmpOp::Ne => ord != Ordering::Equal,
                    CmpOp::Lt => ord == Ordering::Less,
                    CmpOp::Le => ord != Ordering::Greater,
                    CmpOp::Gt => ord == Ordering::Greater,
                    CmpOp::Ge => ord != Ordering::Less,
                }
            }
            Condition::In { column, negated, values } => {
                let cell = row.cell(*column);
                let found = values.iter().any(|v| compare(&cell, v) == Some(Ordering::Equal));
                found != *negated
            }
            Condition::Between(c, lo, hi) => {
                let cell = row.cell(*c);
                compare(&cell, lo).is_some_and(|o| o != Ordering::Less)
                    && compare(&cell, hi).is_some_and(|o| o != Ordering::Greater)
            }
        }
    }
}

impl Query {
    /// Exact evaluation over the memory's current contents.
    pub fn evaluate(&self, memory: &SceneMemory) -> RowSet {
        let mut out: BTreeSet<Vec<Value>> = BTreeSet::new();
        let mut emit = |row: Row<'_>| {
            if self.conditions.iter().all(|c| c.holds(&row)) {
                out.insert(self.columns.iter().map(|c| row.value(*c)).collect());
            }
        };
        match self.source {
            Source::Objects => {
                for e in memory.entries() {
                    emit(Row { object_id: e.id, category: &e.category, volume: e.box3d.volume(), frame_id: 0 });
                }
            }
            Source::ObjectsFrames => {
                for r in memory.history.visible() {
                    emit(Row { object_id: r.object_id, category: "", volume: 0.0, frame_id: r.frame_id });
                }
            }
            Source::Join => {
                for r in memory.history.visible() {
                    if let Some(e) = memory.get(r.object_id) {
                        emit(Row { object_id: e.id, category: &e.category, volume: e.box3d.volume(), frame_id: r.frame_id });
                    }
                }
            }
        }
        RowSet { columns: self.columns.clone(), rows: out.into_iter().collect() }
    }
}

/// Parses and evaluates in one step.
pub fn query_structured(memory: &SceneMemory, src: &str) -> Result<RowSet, QueryError> {
    Ok(parse(src)?.evaluate(memory))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn parses_reference_shape() {
        let q = parse(r#"SELECT object_id FROM Objects WHERE category IN ("wine glass", "bottle")"#).unwrap();
        assert_eq!(q.columns, vec![Column::ObjectId]);
        assert_eq!(q.source, Source::Objects);
        assert_eq!(
            q.conditions,
            vec![Condition::In {
                column: Column::Category,
                negated: false,
                values: vec![Literal::Text("wine glass".into()), Literal::Text("bottle".into())]
            }]
        );
    }

    #[test]
    fn join_forms() {
        for src in [
            "select * from Objects join Objects_Frames",
            "SELECT Objects.object_id, frame_id FROM Objects JOIN Objects_Frames ON Objects.object_id = Objects_Frames.object_id;",
            "SELECT object_id FROM Objects JOIN Objects_Frames USING (object_id) WHERE frame_id BETWEEN 3 AND 9",
        ] {
            assert_eq!(parse(src).unwrap().source, Source::Join, "{src}");
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(parse("SELECT colour FROM Objects"), Err(QueryError::UnknownColumn(_))));
        assert!(matches!(parse("SELECT frame_id FROM Objects"), Err(QueryError::UnknownColumn(_))));
        assert!(matches!(parse("SELECT * FROM Objects WHERE frame_id = 3"), Err(QueryError::UnknownColumn(_))));
        assert!(matches!(parse("SELECT * FROM Objects WHERE volume = 'big'"), Err(QueryError::MalformedPredicate(_))));
        assert!(matches!(parse("SELECT * FROM Objects WHERE"), Err(QueryError::MalformedPredicate(_))));
        assert!(matches!(parse("SELECT * FROM Objects WHERE category IN ('a'"), Err(QueryError::MalformedPredicate(_))));
        assert!(matches!(parse("SELECT * FROM Things"), Err(QueryError::MalformedPredicate(_))));
        assert!(matches!(parse("SELECT * FROM Objects extra"), Err(QueryError::MalformedPredicate(_))));
    }

    #[test]
    fn numbers() {
        let q = parse("SELECT * FROM Objects WHERE volume < 1e-3 AND object_id >= -2 AND volume > .5").unwrap();
        assert_eq!(q.conditions.len(), 3);
        assert_eq!(q.conditions[0], Condition::Compare(Column::Volume, CmpOp::Lt, Literal::Number(0.001)));
    }
}
