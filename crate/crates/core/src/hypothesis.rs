//! Text form of linear hypotheses `A beta = b`.
//!
//! ```text
//! spec     := clause ('&' clause)*
//! clause   := 'equal:all'
//!           | 'equal:' i ',' j (';' i ',' j)*     beta_i = beta_j (beta_0 = 0)
//!           | 'zero:' i                          beta_i = 0
//!           | 'fix:' i '=' v1 ',' ... ',' vd       beta_i = v
//!           | 'lincomb:' expr '=' rhs
//! expr     := ['+'|'-'] term (('+'|'-') term)*
//! term     := [number ['*']] 'b' i ['[' a ']']
//! rhs      := number (',' number)*
//! ```
//!
//! A `lincomb` over whole blocks (`2*b1-b2=0`) expands to `d` rows with the
//! coefficients broadcast over components; component references (`b1[2]`,
//! 1-based) give a single row. Whitespace is ignored.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::ConstraintSpec;

struct Cursor<'a> {
    src: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> Cursor<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            pos: self.base + self.pos,
            msg: msg.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected `{}`", c as char))
        }
    }

    fn at_end(&mut self) -> bool {
        self.peek().is_none()
    }

    fn integer(&mut self) -> Result<usize> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected an integer");
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        text.parse().or_else(|_| {
            self.pos = start;
            self.err("integer too large")
        })
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        let s = self.src;
        let mut i = self.pos;
        if i < s.len() && (s[i] == b'+' || s[i] == b'-') {
            i += 1;
        }
        let digits_start = i;
        while i < s.len() && (s[i].is_ascii_digit() || s[i] == b'.') {
            i += 1;
        }
        if i == digits_start {
            return self.err("expected a number");
        }
        if i < s.len() && (s[i] == b'e' || s[i] == b'E') {
            let mut j = i + 1;
            if j < s.len() && (s[j] == b'+' || s[j] == b'-') {
                j += 1;
            }
            if j < s.len() && s[j].is_ascii_digit() {
                while j < s.len() && s[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let text = std::str::from_utf8(&s[start..i]).expect("ascii number");
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => {
                self.pos = i;
                Ok(v)
            }
            _ => self.err(format!("invalid number `{text}`")),
        }
    }

    fn starts_number(&mut self) -> bool {
        matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == b'.')
    }
}

struct Builder {
    m: usize,
    d: usize,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

impl Builder {
    fn check_index(&self, i: usize, allow_zero: bool) -> Result<()> {
        if i > self.m || (i == 0 && !allow_zero) {
            return Err(Error::IndexOutOfRange { index: i, max: self.m });
        }
        Ok(())
    }

    fn block_rows(&mut self, coefs: &[(usize, f64)], rhs: &[f64]) {
        for a in 0..self.d {
            let mut row = vec![0.0; self.m * self.d];
            for &(k, c) in coefs {
                if k > 0 {
                    row[(k - 1) * self.d + a] += c;
                }
            }
            self.rows.push(row);
            self.rhs.push(rhs[a]);
        }
    }

    fn clause(&mut self, cur: &mut Cursor) -> Result<()> {
        cur.skip_ws();
        let rest = &cur.src[cur.pos..];
        let kw_len = rest.iter().position(|&c| c == b':').unwrap_or(rest.len());
        let keyword = std::str::from_utf8(&rest[..kw_len]).unwrap_or("").trim().to_string();
        if kw_len == rest.len() {
            return cur.err("expected `<kind>:`");
        }
        let kw_pos = cur.pos;
        cur.pos += kw_len + 1;
        match keyword.as_str() {
            "equal" => self.equal(cur),
            "zero" => {
                let i = cur.integer()?;
                self.check_index(i, false)?;
                self.block_rows(&[(i, 1.0)], &vec![0.0; self.d]);
                Ok(())
            }
            "fix" => {
                let i = cur.integer()?;
                self.check_index(i, false)?;
                cur.expect(b'=')?;
                let vals = self.values(cur)?;
                if vals.len() != self.d {
                    return cur.err(format!("fix needs {} values, got {}", self.d, vals.len()));
                }
                self.block_rows(&[(i, 1.0)], &vals);
                Ok(())
            }
            "lincomb" => self.lincomb(cur),
            _ => {
                cur.pos = kw_pos;
                cur.err(format!("unknown hypothesis kind `{keyword}`"))
            }
        }
    }

    fn equal(&mut self, cur: &mut Cursor) -> Result<()> {
        let save = cur.pos;
        cur.skip_ws();
        if cur.src[cur.pos..].starts_with(b"all") {
            cur.pos += 3;
            for i in 1..=self.m {
                self.block_rows(&[(i, 1.0)], &vec![0.0; self.d]);
            }
            return Ok(());
        }
        cur.pos = save;
        loop {
            let i = cur.integer()?;
            self.check_index(i, true)?;
            cur.expect(b',')?;
            let j = cur.integer()?;
            self.check_index(j, true)?;
            if i == j {
                return cur.err(format!("`equal:{i},{j}` compares a population with itself"));
            }
            self.block_rows(&[(i, 1.0), (j, -1.0)], &vec![0.0; self.d]);
            if !cur.eat(b';') {
                return Ok(());
            }
        }
    }

    fn values(&self, cur: &mut Cursor) -> Result<Vec<f64>> {
        let mut vals = vec![cur.number()?];
        while cur.eat(b',') {
            vals.push(cur.number()?);
        }
        Ok(vals)
    }

    fn lincomb(&mut self, cur: &mut Cursor) -> Result<()> {
        // (population, component or None for the whole block, coefficient)
        let mut terms: Vec<(usize, Option<usize>, f64)> = Vec::new();
        let mut first = true;
        loop {
            let mut sign = 1.0;
            if cur.eat(b'-') {
                sign = -1.0;
            } else if !cur.eat(b'+') && !first {
                break;
            }
            first = false;
            let coef = if cur.starts_number() {
                let v = cur.number()?;
                cur.eat(b'*');
                v
            } else {
                1.0
            };
            if !cur.eat(b'b') {
                return cur.err("expected a coefficient reference `b<i>`");
            }
            let k = cur.integer()?;
            self.check_index(k, false)?;
            let comp = if cur.eat(b'[') {
                let a = cur.integer()?;
                if a == 0 || a > self.d {
                    return Err(Error::IndexOutOfRange { index: a, max: self.d });
                }
                cur.expect(b']')?;
                Some(a - 1)
            } else {
                None
            };
            terms.push((k, comp, sign * coef));
        }
        cur.expect(b'=')?;
        let rhs = self.values(cur)?;
        let componentwise = terms.iter().filter(|t| t.1.is_some()).count();
        if componentwise == 0 {
            let rhs = match rhs.len() {
                1 => vec![rhs[0]; self.d],
                n if n == self.d => rhs,
                n => return cur.err(format!("right-hand side needs 1 or {} values, got {n}", self.d)),
            };
            let coefs: Vec<(usize, f64)> = terms.iter().map(|t| (t.0, t.2)).collect();
            self.block_rows(&coefs, &rhs);
        } else if componentwise == terms.len() {
            if rhs.len() != 1 {
                return cur.err("a componentwise combination has a scalar right-hand side");
            }
            let mut row = vec![0.0; self.m * self.d];
            for (k, a, c) in terms {
                row[(k - 1) * self.d + a.expect("componentwise")] += c;
            }
            self.rows.push(row);
            self.rhs.push(rhs[0]);
        } else {
            return cur.err("cannot mix block references and component references");
        }
        Ok(())
    }
}

/// Parses a hypothesis for `m` non-baseline populations and basis dimension `d`.
pub fn parse_hypothesis(spec: &str, m: usize, d: usize) -> Result<ConstraintSpec> {
    if m == 0 || d == 0 {
        return Err(Error::Parameter("need m >= 1 and d >= 1".into()));
    }
    let mut b = Builder {
        m,
        d,
        rows: Vec::new(),
        rhs: Vec::new(),
    };
    let mut base = 0;
    for part in spec.split('&') {
        let mut cur = Cursor {
            src: part.as_bytes(),
            pos: 0,
            base,
        };
        if cur.at_end() {
            return cur.err("empty clause");
        }
        b.clause(&mut cur)?;
        if !cur.at_end() {
            return cur.err("unexpected trailing input");
        }
        base += part.len() + 1;
    }
    let q = b.rows.len();
    let a = DMatrix::from_fn(q, m * d, |i, j| b.rows[i][j]);
    ConstraintSpec::new(a, DVector::from_vec(b.rhs))
}

fn format_number(v: f64) -> String {
    format!("{v}")
}

/// Prints `c` in a form that [`parse_hypothesis`] maps back to the same `(A, b)`.
pub fn format_hypothesis(c: &ConstraintSpec, d: usize) -> String {
    if c.is_full_equality() {
        return "equal:all".into();
    }
    let a = c.a();
    let mut clauses = Vec::with_capacity(a.nrows());
    for i in 0..a.nrows() {
        let mut expr = String::new();
        for j in 0..a.ncols() {
            let v = a[(i, j)];
            if v == 0.0 {
                continue;
            }
            let (k, comp) = (j / d + 1, j % d + 1);
            let sign = if v < 0.0 {
                "-"
            } else if expr.is_empty() {
                ""
            } else {
                "+"
            };
            let mag = v.abs();
            let coef = if mag == 1.0 {
                String::new()
            } else {
                format!("{}*", format_number(mag))
            };
            expr.push_str(&format!("{sign}{coef}b{k}[{comp}]"));
        }
        clauses.push(format!("lincomb:{expr}={}", format_number(c.b()[i])));
    }
    clauses.join(" & ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_all() {
        let c = parse_hypothesis("equal:all", 2, 2).unwrap();
        assert_eq!(c.a(), &DMatrix::identity(4, 4));
        assert_eq!(c.b(), &DVector::zeros(4));
        assert_eq!(c.q(), 4);
    }

    #[test]
    fn example_lincomb() {
        let c = parse_hypothesis("lincomb:2*b1-b2=0", 2, 2).unwrap();
        let expect = DMatrix::from_row_slice(2, 4, &[2.0, 0.0, -1.0, 0.0, 0.0, 2.0, 0.0, -1.0]);
        assert_eq!(c.a(), &expect);
        assert_eq!(c.b(), &DVector::zeros(2));
    }

    #[test]
    fn stacked_equalities() {
        let c = parse_hypothesis("equal:1,2;3,4", 5, 2).unwrap();
        assert_eq!(c.q(), 4);
        assert_eq!(c.a()[(0, 0)], 1.0);
        assert_eq!(c.a()[(0, 2)], -1.0);
        assert_eq!(c.a()[(3, 5)], 1.0);
        assert_eq!(c.a()[(3, 7)], -1.0);
    }

    #[test]
    fn fix_zero_and_combination() {
        let c = parse_hypothesis("fix:1=6,-1.5 & zero:2", 2, 2).unwrap();
        assert_eq!(c.b().as_slice(), &[6.0, -1.5, 0.0, 0.0]);
        assert_eq!(c.a(), &DMatrix::identity(4, 4));
        assert!(!c.is_full_equality());
        let z = parse_hypothesis("equal:0,1", 1, 2).unwrap();
        assert_eq!(z.a(), &DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]));
    }

    #[test]
    fn errors_carry_positions() {
        match parse_hypothesis("lincomb:2*c1=0", 2, 2) {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos, 10),
            other => panic!("{other:?}"),
        }
        match parse_hypothesis("zero:1 & bogus:1", 2, 2) {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos, 9),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_hypothesis("zero:3", 2, 2),
            Err(Error::IndexOutOfRange { index: 3, max: 2 })
        ));
        assert!(matches!(parse_hypothesis("fix:1=1", 2, 2), Err(Error::Parse { .. })));
        assert!(matches!(
            parse_hypothesis("equal:1,2 junk", 2, 2),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_hypothesis("zero:1 & zero:1", 2, 2),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn printing_round_trips() {
        for (spec, m, d) in [
            ("equal:all", 2, 2),
            ("lincomb:2*b1-b2=0", 2, 2),
            ("equal:1,2;3,4", 5, 2),
            ("fix:1=6,-1.5", 2, 2),
            ("lincomb:0.5*b1[2]+b2[1]=-3e-4", 2, 2),
        ] {
            let c = parse_hypothesis(spec, m, d).unwrap();
            let printed = format_hypothesis(&c, d);
            assert_eq!(parse_hypothesis(&printed, m, d).unwrap(), c, "{printed}");
        }
    }

    proptest! {
        #[test]
        fn random_constraints_round_trip(
            rows in proptest::collection::vec(proptest::collection::vec(-5i32..=5, 6), 1..4),
            rhs in proptest::collection::vec(-1e3f64..1e3, 3),
        ) {
            let q = rows.len();
            let a = DMatrix::from_fn(q, 6, |i, j| rows[i][j] as f64 / 4.0);
            let b = DVector::from_fn(q, |i, _| rhs[i]);
            if let Ok(c) = ConstraintSpec::new(a, b) {
                let printed = format_hypothesis(&c, 2);
                prop_assert_eq!(parse_hypothesis(&printed, 3, 2).unwrap(), c);
            }
        }
    }
}
