//! Textual forms of [`UnifiedAction`].
//!
//! Two coordinate dialects share the same action grammar:
//!
//! ```text
//! TAGGED  CLICK <point>[[101, 872]]</point>
//!         DRAG <box>[[10, 20, 30, 40]]</box>
//! PAIR    CLICK <|box_start|>(101,872)<|box_end|>
//!         DRAG <|box_start|>(10,20),(30,40)<|box_end|>
//! both    TYPE [Shanghai shopping mall]
//!         SCROLL [UP]
//! ```
//!
//! Inside `[...]`, `]` and `\` are escaped with a backslash. Whitespace around
//! coordinate tokens is insignificant.

use serde::{Deserialize, Serialize};

use super::{ActionError, ActionName, ActionText, Direction, Slot, UnifiedAction, Vocabulary};
use crate::geom::{Box, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dialect {
    /// `<point>[[x, y]]</point>` and `<box>[[x1, y1, x2, y2]]</box>`.
    Tagged,
    /// `<|box_start|>(x,y)<|box_end|>` and `<|box_start|>(x1,y1),(x2,y2)<|box_end|>`.
    Pair,
}

impl Dialect {
    pub const ALL: [Dialect; 2] = [Dialect::Tagged, Dialect::Pair];
}

const POINT_OPEN: &str = "<point>";
const POINT_CLOSE: &str = "</point>";
const BOX_OPEN: &str = "<box>";
const BOX_CLOSE: &str = "</box>";
const PAIR_OPEN: &str = "<|box_start|>";
const PAIR_CLOSE: &str = "<|box_end|>";

fn write_point(out: &mut String, p: Point, dialect: Dialect) {
    use std::fmt::Write;
    match dialect {
        Dialect::Tagged => write!(out, "{POINT_OPEN}[[{}, {}]]{POINT_CLOSE}", p.x(), p.y()),
        Dialect::Pair => write!(out, "{PAIR_OPEN}({},{}){PAIR_CLOSE}", p.x(), p.y()),
    }
    .expect("write to String");
}

fn write_box(out: &mut String, b: Box, dialect: Dialect) {
    use std::fmt::Write;
    let [x1, y1, x2, y2] = b.coords();
    match dialect {
        Dialect::Tagged => write!(out, "{BOX_OPEN}[[{x1}, {y1}, {x2}, {y2}]]{BOX_CLOSE}"),
        Dialect::Pair => write!(out, "{PAIR_OPEN}({x1},{y1}),({x2},{y2}){PAIR_CLOSE}"),
    }
    .expect("write to String");
}

fn write_bracketed(out: &mut String, text: &str) {
    out.push('[');
    for c in text.chars() {
        if c == ']' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push(']');
}

/// Canonical text of an action in the given dialect.
pub fn serialize_action(action: &UnifiedAction, dialect: Dialect) -> String {
    let mut out = String::from(action.name());
    if let Some(p) = action.point() {
        out.push(' ');
        write_point(&mut out, p, dialect);
    }
    if let Some(b) = action.bbox() {
        out.push(' ');
        write_box(&mut out, b, dialect);
    }
    if let Some(t) = action.text() {
        out.push(' ');
        write_bracketed(&mut out, t);
    }
    if let Some(d) = action.direction() {
        out.push(' ');
        write_bracketed(&mut out, d.as_str());
    }
    out
}

/// Parse one action using the built-in vocabulary.
pub fn parse_action(text: &str, dialect: Dialect) -> Result<UnifiedAction, ActionError> {
    parse_with(text, dialect, &Vocabulary::builtin(), &|_| None)
}

impl Vocabulary {
    pub fn parse(&self, text: &str, dialect: Dialect) -> Result<UnifiedAction, ActionError> {
        parse_with(text, dialect, self, &|_| None)
    }
}

#[derive(Debug)]
enum Arg {
    Point(Point),
    Box(Box),
    Bracket(String, usize),
}

impl Arg {
    fn kind(&self) -> &'static str {
        match self {
            Arg::Point(_) => "point",
            Arg::Box(_) => "box",
            Arg::Bracket(..) => "bracketed",
        }
    }
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn eof(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn skip_ws(&mut self) -> bool {
        let before = self.pos;
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
        self.pos > before
    }

    fn err<T>(&self, expected: impl Into<String>) -> Result<T, ActionError> {
        Err(ActionError::Syntax {
            pos: self.pos,
            expected: expected.into(),
        })
    }

    fn eat(&mut self, lit: &str) -> bool {
        if self.rest().starts_with(lit) {
            self.pos += lit.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, lit: &str) -> Result<(), ActionError> {
        self.skip_ws();
        if self.eat(lit) {
            Ok(())
        } else {
            self.err(format!("`{lit}`"))
        }
    }

    fn ident(&mut self) -> Result<&'a str, ActionError> {
        let start = self.pos;
        let rest = self.rest();
        let len = rest
            .char_indices()
            .find(|&(i, c)| !(c == '_' || c.is_ascii_alphabetic() || (i > 0 && c.is_ascii_digit())))
            .map(|(i, _)| i)
            .unwrap_or(rest.len());
        if len == 0 {
            return self.err("action name");
        }
        self.pos += len;
        Ok(&self.src[start..self.pos])
    }

    fn int(&mut self) -> Result<(i64, usize), ActionError> {
        self.skip_ws();
        let start = self.pos;
        let neg = self.eat("-");
        let digits = self.rest().bytes().take_while(u8::is_ascii_digit).count();
        if digits == 0 {
            self.pos = start;
            return self.err("integer");
        }
        let s = &self.src[self.pos..self.pos + digits];
        self.pos += digits;
        // anything that does not fit is certainly out of range
        let magnitude = s.parse::<i64>().unwrap_or(i64::MAX);
        Ok((if neg { -magnitude } else { magnitude }, start))
    }

    fn coords<const N: usize>(&mut self) -> Result<([i64; N], usize), ActionError> {
        let mut out = [0i64; N];
        let mut first = 0;
        for (i, slot) in out.iter_mut().enumerate() {
            if i > 0 {
                self.expect(",")?;
            }
            let (v, at) = self.int()?;
            if i == 0 {
                first = at;
            }
            *slot = v;
        }
        Ok((out, first))
    }

    fn bracketed(&mut self) -> Result<String, ActionError> {
        // caller consumed `[`
        let mut text = String::new();
        let mut chars = self.rest().char_indices();
        let base = self.pos;
        while let Some((i, c)) = chars.next() {
            match c {
                ']' => {
                    self.pos = base + i + 1;
                    return Ok(text);
                }
                '\\' => match chars.next() {
                    Some((_, e @ (']' | '\\'))) => text.push(e),
                    _ => {
                        self.pos = base + i;
                        return self.err("`\\]` or `\\\\` escape");
                    }
                },
                c => text.push(c),
            }
        }
        self.pos = self.src.len();
        self.err("closing `]`")
    }

    fn arg(&mut self, dialect: Dialect) -> Result<Arg, ActionError> {
        let at = self.pos;
        if self.eat("[") {
            return Ok(Arg::Bracket(self.bracketed()?, at));
        }
        let coord_err = |pos, source| ActionError::Coordinate { pos, source };
        match dialect {
            Dialect::Tagged => {
                if self.eat(POINT_OPEN) {
                    self.expect("[[")?;
                    let ([x, y], p) = self.coords::<2>()?;
                    self.expect("]]")?;
                    self.expect(POINT_CLOSE)?;
                    Point::new(x, y).map(Arg::Point).map_err(|e| coord_err(p, e))
                } else if self.eat(BOX_OPEN) {
                    self.expect("[[")?;
                    let ([x1, y1, x2, y2], p) = self.coords::<4>()?;
                    self.expect("]]")?;
                    self.expect(BOX_CLOSE)?;
                    Box::new(x1, y1, x2, y2)
                        .map(Arg::Box)
                        .map_err(|e| coord_err(p, e))
                } else {
                    self.err("`<point>`, `<box>` or `[`")
                }
            }
            Dialect::Pair => {
                if !self.eat(PAIR_OPEN) {
                    return self.err("`<|box_start|>` or `[`");
                }
                self.expect("(")?;
                let ([x1, y1], p) = self.coords::<2>()?;
                self.expect(")")?;
                self.skip_ws();
                if self.eat(",") {
                    self.expect("(")?;
                    let ([x2, y2], _) = self.coords::<2>()?;
                    self.expect(")")?;
                    self.expect(PAIR_CLOSE)?;
                    Box::new(x1, y1, x2, y2)
                        .map(Arg::Box)
                        .map_err(|e| coord_err(p, e))
                } else {
                    self.expect(PAIR_CLOSE)?;
                    Point::new(x1, y1).map(Arg::Point).map_err(|e| coord_err(p, e))
                }
            }
        }
    }
}

/// Parse with a vocabulary and a fallback resolver for non-canonical names.
pub(crate) fn parse_with(
    text: &str,
    dialect: Dialect,
    vocab: &Vocabulary,
    resolve: &dyn Fn(&str) -> Option<ActionName>,
) -> Result<UnifiedAction, ActionError> {
    let mut cur = Cursor { src: text, pos: 0 };
    cur.skip_ws();
    let name_pos = cur.pos;
    let raw_name = cur.ident()?;
    let name = if vocab.contains(raw_name) {
        ActionName::new(raw_name)?
    } else {
        resolve(raw_name)
            .filter(|n| vocab.contains(n.as_str()))
            .ok_or_else(|| ActionError::UnknownAction {
                name: raw_name.to_string(),
                pos: name_pos,
            })?
    };
    let slots = vocab.slots(name.as_str()).expect("name is in vocabulary");

    let mut args = Vec::new();
    loop {
        let had_ws = cur.skip_ws();
        if cur.eof() {
            break;
        }
        if !had_ws && args.is_empty() && !cur.rest().starts_with(['<', '[']) {
            return cur.err("whitespace after action name");
        }
        args.push(cur.arg(dialect)?);
    }

    let mismatch = |args: &[Arg]| ActionError::SlotMismatch {
        name: name.to_string(),
        expected: super::slot_list(&slots),
        found: args.iter().map(Arg::kind).collect::<Vec<_>>().join(", "),
    };
    if args.len() != slots.len() {
        return Err(mismatch(&args));
    }
    let (mut point, mut bbox, mut txt, mut dir) = (None, None, None, None);
    for (slot, arg) in slots.iter().zip(&args) {
        match (slot, arg) {
            (Slot::Point, Arg::Point(p)) => point = Some(*p),
            (Slot::Box, Arg::Box(b)) => bbox = Some(*b),
            (Slot::Text, Arg::Bracket(s, _)) => txt = Some(ActionText::new(s.clone())?),
            (Slot::Direction, Arg::Bracket(s, at)) => {
                dir = Some(s.trim().parse::<Direction>().map_err(|_| ActionError::Syntax {
                    pos: *at,
                    expected: "direction (UP/DOWN/LEFT/RIGHT)".into(),
                })?)
            }
            _ => return Err(mismatch(&args)),
        }
    }
    UnifiedAction::from_parts(&name, point, bbox, txt, dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: i64, y: i64) -> Point {
        Point::new(x, y).unwrap()
    }

    #[test]
    fn prompt_table_examples() {
        let click = parse_action("CLICK <point>[[101, 872]]</point>", Dialect::Tagged).unwrap();
        assert_eq!(click, UnifiedAction::click(pt(101, 872)));
        let ty = parse_action("TYPE [Shanghai shopping mall]", Dialect::Tagged).unwrap();
        assert_eq!(ty, UnifiedAction::type_text("Shanghai shopping mall").unwrap());
        let sc = parse_action("SCROLL [UP]", Dialect::Tagged).unwrap();
        assert_eq!(sc, UnifiedAction::scroll(Direction::Up));
        let origin = parse_action("CLICK <point>[[0, 0]]</point>", Dialect::Tagged).unwrap();
        assert_eq!(origin, UnifiedAction::click(pt(0, 0)));
    }

    #[test]
    fn serializes_canonically() {
        let click = UnifiedAction::click(pt(101, 872));
        assert_eq!(
            serialize_action(&click, Dialect::Tagged),
            "CLICK <point>[[101, 872]]</point>"
        );
        assert_eq!(
            serialize_action(&click, Dialect::Pair),
            "CLICK <|box_start|>(101,872)<|box_end|>"
        );
        assert_eq!(
            serialize_action(&UnifiedAction::scroll(Direction::Left), Dialect::Tagged),
            "SCROLL [LEFT]"
        );
    }

    #[test]
    fn all_directions_round_trip() {
        for d in Direction::ALL {
            for dialect in Dialect::ALL {
                let a = UnifiedAction::scroll(d);
                let s = serialize_action(&a, dialect);
                assert_eq!(s, format!("SCROLL [{}]", d.as_str()));
                assert_eq!(parse_action(&s, dialect).unwrap(), a);
            }
        }
    }

    #[test]
    fn pair_box_round_trip() {
        let mut c = super::super::CustomAction::new(ActionName::new("DRAG").unwrap()).unwrap();
        c.bbox = Some(Box::new(10, 20, 30, 40).unwrap());
        let a = UnifiedAction::Custom(c);
        let s = serialize_action(&a, Dialect::Pair);
        assert_eq!(s, "DRAG <|box_start|>(10,20),(30,40)<|box_end|>");
        assert_eq!(parse_action(&s, Dialect::Pair).unwrap(), a);
        assert_eq!(
            parse_action("DRAG <box>[[10,20,30,40]]</box>", Dialect::Tagged).unwrap(),
            a
        );
    }

    #[test]
    fn whitespace_inside_coordinates_is_insignificant() {
        let a = parse_action("CLICK <point>[[ 101 ,872 ]]</point>", Dialect::Tagged).unwrap();
        assert_eq!(a, UnifiedAction::click(pt(101, 872)));
        let b = parse_action("CLICK <|box_start|>( 101 , 872 )<|box_end|>", Dialect::Pair).unwrap();
        assert_eq!(b, a);
    }

    #[test]
    fn escaped_brackets_in_text() {
        let a = UnifiedAction::type_text(r"a]b\c[d").unwrap();
        let s = serialize_action(&a, Dialect::Tagged);
        assert_eq!(s, r"TYPE [a\]b\\c[d]");
        assert_eq!(parse_action(&s, Dialect::Tagged).unwrap(), a);
        assert!(matches!(
            parse_action(r"TYPE [a\nb]", Dialect::Tagged),
            Err(ActionError::Syntax { pos: 7, .. })
        ));
    }

    #[test]
    fn errors_report_positions() {
        match parse_action("CLICK <point>[[101, x]]</point>", Dialect::Tagged) {
            Err(ActionError::Syntax { pos, .. }) => assert_eq!(pos, 20),
            other => panic!("{other:?}"),
        }
        match parse_action("CLICK <point>[[1001, 5]]</point>", Dialect::Tagged) {
            Err(ActionError::Coordinate { pos, .. }) => assert_eq!(pos, 15),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_action("CLICK <point>[[-1, 5]]</point>", Dialect::Tagged),
            Err(ActionError::Coordinate { .. })
        ));
        assert!(matches!(
            parse_action("TYPE [unterminated", Dialect::Tagged),
            Err(ActionError::Syntax { .. })
        ));
    }

    #[test]
    fn unknown_names_are_rejected() {
        assert!(matches!(
            parse_action("FLY [away]", Dialect::Tagged),
            Err(ActionError::UnknownAction { pos: 0, .. })
        ));
        assert!(matches!(
            parse_action("tap <point>[[1, 2]]</point>", Dialect::Tagged),
            Err(ActionError::UnknownAction { .. })
        ));
    }

    #[test]
    fn dialects_are_not_mixed() {
        assert!(parse_action("CLICK <point>[[1, 2]]</point>", Dialect::Pair).is_err());
        assert!(parse_action("CLICK <|box_start|>(1,2)<|box_end|>", Dialect::Tagged).is_err());
    }

    #[test]
    fn slot_mismatches() {
        assert!(matches!(
            parse_action("CLICK [here]", Dialect::Tagged),
            Err(ActionError::SlotMismatch { .. })
        ));
        assert!(matches!(
            parse_action("PRESS_BACK [now]", Dialect::Tagged),
            Err(ActionError::SlotMismatch { .. })
        ));
        assert!(parse_action("TYPE []", Dialect::Tagged).is_err());
        assert!(parse_action("SCROLL [SIDEWAYS]", Dialect::Tagged).is_err());
        assert_eq!(
            parse_action("PRESS_BACK", Dialect::Tagged).unwrap(),
            UnifiedAction::custom("PRESS_BACK").unwrap()
        );
    }
}
