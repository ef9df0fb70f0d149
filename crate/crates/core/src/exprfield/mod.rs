//! User-supplied scalar fields: a small expression language over `x`, `y`
//! and `pi`, evaluated with forward-mode dual numbers so every evaluation
//! also yields the exact gradient.

mod dual;
mod parser;

use std::fmt;

use thiserror::Error;

use crate::landscape::{CellGrid, FieldSample, GridError, Point2, Region, ScalarField};

pub use dual::DualNumber;

/// Names accepted by the parser besides numeric literals.
pub const ALLOWED_NAMES: &str = "x, y, pi, sin, cos, tan, exp, log, sqrt, abs";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}; allowed names: {ALLOWED_NAMES}")]
    UnknownIdent { offset: usize, name: String },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. } | ParseError::UnknownIdent { offset, .. } => *offset,
        }
    }
}

/// Evaluation left the domain of some sub-expression.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("domain error in `{node}`: {reason}")]
pub struct DomainError {
    pub node: String,
    pub reason: String,
}

impl DomainError {
    fn at(node: &Expr, reason: impl Into<String>) -> Self {
        DomainError {
            node: node.to_string(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(&self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Func {
    pub const ALL: [Func; 7] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Abs,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

/// Expression tree. Literals produced by the parser are never negative;
/// negation is always an explicit [`Expr::Neg`] node.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Pi,
    X,
    Y,
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn call(func: Func, arg: Expr) -> Expr {
        Expr::Call(func, Box::new(arg))
    }

    /// The builtin landscape written as an expression.
    pub fn builtin() -> Expr {
        parse(BUILTIN_SOURCE).expect("builtin expression parses")
    }

    pub fn uses_x(&self) -> bool {
        self.any_leaf(&|e| matches!(e, Expr::X))
    }

    pub fn uses_y(&self) -> bool {
        self.any_leaf(&|e| matches!(e, Expr::Y))
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Pi | Expr::X | Expr::Y => 1,
            Expr::Neg(e) | Expr::Call(_, e) => 1 + e.depth(),
            Expr::Binary(_, l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    fn any_leaf(&self, pred: &dyn Fn(&Expr) -> bool) -> bool {
        match self {
            Expr::Neg(e) | Expr::Call(_, e) => e.any_leaf(pred),
            Expr::Binary(_, l, r) => l.any_leaf(pred) || r.any_leaf(pred),
            leaf => pred(leaf),
        }
    }

    fn eval_dual(&self, x: DualNumber, y: DualNumber) -> Result<DualNumber, DomainError> {
        let out = match self {
            Expr::Num(v) => DualNumber::constant(*v),
            Expr::Pi => DualNumber::constant(std::f64::consts::PI),
            Expr::X => x,
            Expr::Y => y,
            Expr::Neg(e) => -e.eval_dual(x, y)?,
            Expr::Binary(op, l, r) => {
                let a = l.eval_dual(x, y)?;
                match op {
                    BinOp::Add => a + r.eval_dual(x, y)?,
                    BinOp::Sub => a - r.eval_dual(x, y)?,
                    BinOp::Mul => a * r.eval_dual(x, y)?,
                    BinOp::Div => {
                        let b = r.eval_dual(x, y)?;
                        if b.value == 0.0 {
                            return Err(DomainError::at(self, "division by zero"));
                        }
                        a / b
                    }
                    BinOp::Pow => self.eval_pow(a, r, x, y)?,
                }
            }
            Expr::Call(func, arg) => {
                let a = arg.eval_dual(x, y)?;
                match func {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tan => a.tan(),
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if a.value <= 0.0 {
                            return Err(DomainError::at(self, "logarithm of a non-positive value"));
                        }
                        a.ln()
                    }
                    Func::Sqrt => {
                        if a.value < 0.0 {
                            return Err(DomainError::at(self, "square root of a negative value"));
                        }
                        a.sqrt()
                    }
                    Func::Abs => a.abs(),
                }
            }
        };
        if !out.is_finite() {
            return Err(DomainError::at(self, "value or derivative is not finite"));
        }
        Ok(out)
    }

    fn eval_pow(
        &self,
        base: DualNumber,
        exponent: &Expr,
        x: DualNumber,
        y: DualNumber,
    ) -> Result<DualNumber, DomainError> {
        let b = exponent.eval_dual(x, y)?;
        let constant_exponent = !exponent.uses_x() && !exponent.uses_y();
        if constant_exponent && b.value.fract() == 0.0 && b.value.abs() <= i32::MAX as f64 {
            let n = b.value as i32;
            if base.value == 0.0 && n < 0 {
                return Err(DomainError::at(self, "zero raised to a negative power"));
            }
            return Ok(base.powi(n));
        }
        if base.value < 0.0 {
            return Err(DomainError::at(
                self,
                "negative base requires an integer-valued constant exponent",
            ));
        }
        if base.value == 0.0 {
            if !constant_exponent || b.value < 0.0 {
                return Err(DomainError::at(
                    self,
                    "zero base with a non-constant or negative exponent",
                ));
            }
            if b.value < 1.0 {
                return Err(DomainError::at(self, "derivative undefined at zero base"));
            }
            return Ok(DualNumber::constant(0.0));
        }
        if constant_exponent {
            Ok(base.powf(b.value))
        } else {
            Ok(base.pow(b))
        }
    }
}

/// Prints fully parenthesised so that re-parsing reproduces the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => {
                write!(f, "(-{})", -v)
            }
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Pi => f.write_str("pi"),
            Expr::X => f.write_str("x"),
            Expr::Y => f.write_str("y"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Call(func, arg) => write!(f, "{}({arg})", func.name()),
        }
    }
}

/// Source text of the builtin landscape.
pub const BUILTIN_SOURCE: &str = "sin(pi*x)*sin(2*pi*x)*cos(pi*y)*cos(2*pi*y)";

pub fn parse(source: &str) -> Result<Expr, ParseError> {
    parser::parse(source)
}

/// Value and gradient in a single forward pass.
pub fn eval_with_grad(e: &Expr, p: Point2) -> Result<(f64, Point2), DomainError> {
    let d = e.eval_dual(DualNumber::var_x(p.x), DualNumber::var_y(p.y))?;
    Ok((d.value, Point2::new(d.dx, d.dy)))
}

/// A parsed expression usable wherever a [`ScalarField`] is expected.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprField {
    source: String,
    expr: Expr,
}

impl ExprField {
    pub fn parse(source: &str) -> Result<Self, ParseError> {
        Ok(ExprField {
            source: source.to_string(),
            expr: parse(source)?,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    /// Axis-parallel zero lines contributed by univariate factors of a
    /// top-level product. Factors that mix `x` and `y` contribute nothing.
    pub fn zero_lines(&self, region: &Region) -> (Vec<f64>, Vec<f64>) {
        let mut factors = Vec::new();
        collect_factors(&self.expr, &mut factors);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for factor in factors {
            match (factor.uses_x(), factor.uses_y()) {
                (true, false) => xs.extend(univariate_roots(
                    |t| factor.eval_dual(DualNumber::var_x(t), DualNumber::constant(0.0)),
                    region.x_min(),
                    region.x_max(),
                )),
                (false, true) => ys.extend(univariate_roots(
                    |t| factor.eval_dual(DualNumber::constant(0.0), DualNumber::var_y(t)),
                    region.y_min(),
                    region.y_max(),
                )),
                _ => {}
            }
        }
        (
            tidy_roots(xs, region.x_min(), region.x_max()),
            tidy_roots(ys, region.y_min(), region.y_max()),
        )
    }

    /// Cell grid from the detected zero lines, with lattice-estimated minima.
    pub fn cell_grid(&self, region: &Region) -> Result<CellGrid, GridError> {
        let (xs, ys) = self.zero_lines(region);
        CellGrid::from_zero_lines(self, region, xs, ys)
    }
}

impl ScalarField for ExprField {
    fn sample(&self, p: Point2) -> Result<FieldSample, DomainError> {
        let (value, grad) = eval_with_grad(&self.expr, p)?;
        Ok(FieldSample { value, grad })
    }
}

/// Multiplicative factors whose zeros are zeros of the whole expression.
fn collect_factors<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
    match e {
        Expr::Binary(BinOp::Mul, l, r) => {
            collect_factors(l, out);
            collect_factors(r, out);
        }
        Expr::Binary(BinOp::Div, l, _) => collect_factors(l, out),
        Expr::Neg(inner) => collect_factors(inner, out),
        Expr::Binary(BinOp::Pow, base, exp) if !exp.uses_x() && !exp.uses_y() => {
            collect_factors(base, out)
        }
        other => out.push(other),
    }
}

const ROOT_SCAN_POINTS: usize = 20_000;
/// Roots this close together, or this close to a region edge, are merged.
const ROOT_MERGE_TOL: f64 = 1e-9;

/// Zeros of a univariate function on `[lo, hi]`: sign changes refined by
/// bisection, plus touching zeros found at local minima of `|φ|`.
fn univariate_roots<F>(phi: F, lo: f64, hi: f64) -> Vec<f64>
where
    F: Fn(f64) -> Result<DualNumber, DomainError>,
{
    let value = |t: f64| phi(t).map(|d| d.value).unwrap_or(f64::NAN);
    let n = ROOT_SCAN_POINTS;
    let ts: Vec<f64> = (0..=n)
        .map(|k| lo + (hi - lo) * k as f64 / n as f64)
        .collect();
    let vs: Vec<f64> = ts.iter().map(|&t| value(t)).collect();
    let scale = vs
        .iter()
        .filter(|v| v.is_finite())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let mut roots = Vec::new();
    let negligible = 1e-12 * scale.max(1.0);
    for k in [0, n] {
        if vs[k].abs() <= negligible {
            roots.push(ts[k]);
        }
    }
    for k in 0..=n {
        if vs[k] == 0.0 {
            roots.push(ts[k]);
        }
        if k < n && vs[k].is_finite() && vs[k + 1].is_finite() && vs[k] * vs[k + 1] < 0.0 {
            roots.push(bisect(&value, ts[k], ts[k + 1], vs[k]));
        }
        if k > 0 && k < n {
            let (a, b, c) = (vs[k - 1].abs(), vs[k].abs(), vs[k + 1].abs());
            let same_sign = vs[k - 1] * vs[k] > 0.0 && vs[k] * vs[k + 1] > 0.0;
            if same_sign && b < a && b < c {
                let t = golden_min(|t| value(t).abs(), ts[k - 1], ts[k + 1]);
                if value(t).abs() <= 1e-10 * scale.max(1.0) {
                    roots.push(t);
                }
            }
        }
    }
    roots
}

fn bisect(value: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, va: f64) -> f64 {
    let mut sa = va.signum();
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let vm = value(m);
        if vm == 0.0 {
            return m;
        }
        if vm.signum() == sa {
            a = m;
            sa = vm.signum();
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs()) {
            break;
        }
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - r * (b - a);
        d = a + r * (b - a);
    }
    0.5 * (a + b)
}

fn tidy_roots(mut roots: Vec<f64>, lo: f64, hi: f64) -> Vec<f64> {
    for r in roots.iter_mut() {
        if (*r - lo).abs() <= ROOT_MERGE_TOL {
            *r = lo;
        } else if (*r - hi).abs() <= ROOT_MERGE_TOL {
            *r = hi;
        }
    }
    roots.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(roots.len());
    for r in roots {
        match out.last() {
            Some(&last) if r - last <= ROOT_MERGE_TOL => {}
            _ => out.push(r),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::{build_cell_grid, BuiltinField};

    fn eval(src: &str, x: f64, y: f64) -> Result<(f64, Point2), DomainError> {
        eval_with_grad(&parse(src).unwrap(), Point2::new(x, y))
    }

    #[test]
    fn variables_and_constants() {
        assert_eq!(parse("x").unwrap(), Expr::X);
        assert_eq!(parse("  y ").unwrap(), Expr::Y);
        assert_eq!(parse("pi").unwrap(), Expr::Pi);
        assert_eq!(parse("2.5e-1").unwrap(), Expr::Num(0.25));
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("1+2*3", 0.0, 0.0).unwrap().0, 7.0);
        assert_eq!(eval("8-4-2", 0.0, 0.0).unwrap().0, 2.0);
        assert_eq!(eval("8/4/2", 0.0, 0.0).unwrap().0, 1.0);
        assert_eq!(eval("2^3^2", 0.0, 0.0).unwrap().0, 512.0);
        assert_eq!(eval("-2^2", 0.0, 0.0).unwrap().0, -4.0);
        assert_eq!(eval("2^-1", 0.0, 0.0).unwrap().0, 0.5);
        assert_eq!(eval("(1+2)*3", 0.0, 0.0).unwrap().0, 9.0);
        assert_eq!(
            parse("-x^2").unwrap(),
            Expr::Neg(Box::new(Expr::binary(BinOp::Pow, Expr::X, Expr::Num(2.0))))
        );
    }

    #[test]
    fn bilinear_and_quadratic_gradients() {
        let (v, g) = eval("x*y", 2.0, 3.0).unwrap();
        assert_eq!((v, g), (6.0, Point2::new(3.0, 2.0)));
        let (v, g) = eval("x^2+y^2", 1.0, 1.0).unwrap();
        assert_eq!((v, g), (2.0, Point2::new(2.0, 2.0)));
    }

    #[test]
    fn unclosed_call_reports_offset() {
        let err = parse("sin(").unwrap_err();
        assert_eq!(err.offset(), 4);
        assert!(matches!(err, ParseError::Syntax { .. }));
    }

    #[test]
    fn syntax_errors() {
        assert_eq!(parse("").unwrap_err().offset(), 0);
        assert_eq!(parse("x +").unwrap_err().offset(), 3);
        assert_eq!(parse("(x").unwrap_err().offset(), 2);
        assert_eq!(parse("x $ y").unwrap_err().offset(), 2);
        assert_eq!(parse("sin x").unwrap_err().offset(), 4);
    }

    #[test]
    fn implicit_multiplication_is_rejected() {
        assert_eq!(parse("2pi").unwrap_err().offset(), 1);
        assert_eq!(parse("2 x").unwrap_err().offset(), 2);
        assert!(parse("x(y)").is_err());
    }

    #[test]
    fn unknown_identifier_lists_allowed_names() {
        let err = parse("sinh(x)").unwrap_err();
        assert_eq!(
            err,
            ParseError::UnknownIdent {
                offset: 0,
                name: "sinh".into()
            }
        );
        let msg = err.to_string();
        assert!(msg.contains("sqrt") && msg.contains("pi"), "{msg}");
    }

    #[test]
    fn domain_errors_name_the_node() {
        let err = eval("log(x)", 0.0, 0.0).unwrap_err();
        assert_eq!(err.node, "log(x)");
        assert!(eval("1/x", 0.0, 1.0).is_err());
        assert!(eval("x^-1", 0.0, 1.0).is_err());
        assert!(eval("sqrt(x)", -1.0, 0.0).is_err());
        assert!(eval("x^0.5", -1.0, 0.0).is_err());
        assert!(eval("x^y", -1.0, 2.0).is_err());
    }

    #[test]
    fn integer_powers_of_negative_bases() {
        let (v, g) = eval("x^3", -2.0, 0.0).unwrap();
        assert_eq!(v, -8.0);
        assert_eq!(g.x, 12.0);
        let (v, g) = eval("x^(-2)", -2.0, 0.0).unwrap();
        assert_eq!(v, 0.25);
        assert_eq!(g.x, 0.25);
        assert_eq!(eval("x^0", 0.0, 0.0).unwrap().0, 1.0);
    }

    #[test]
    fn general_power_gradient() {
        let (v, g) = eval("x^y", 2.0, 3.0).unwrap();
        assert!((v - 8.0).abs() < 1e-12);
        assert!((g.x - 12.0).abs() < 1e-12);
        assert!((g.y - 8.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn print_reparses_to_same_tree() {
        for src in [
            "-x^2",
            "2^3^2",
            "sin(pi*x)/(1+y)",
            "-(x-y)-3",
            BUILTIN_SOURCE,
        ] {
            let e = parse(src).unwrap();
            assert_eq!(parse(&e.to_string()).unwrap(), e, "{src}");
        }
    }

    #[test]
    fn builtin_expression_matches_closed_form() {
        let e = Expr::builtin();
        for &(x, y) in &[(0.3, 0.1), (-0.7, 1.1), (0.25, 0.0), (0.9, -0.4)] {
            let p = Point2::new(x, y);
            let (v, g) = eval_with_grad(&e, p).unwrap();
            assert!((v - BuiltinField.eval(p)).abs() < 1e-12);
            assert!((g - BuiltinField.grad(p)).norm() < 1e-12);
        }
    }

    #[test]
    fn detected_zero_lines_match_builtin() {
        let region = Region::default();
        let field = ExprField::parse(BUILTIN_SOURCE).unwrap();
        let (xs, ys) = field.zero_lines(&region);
        let exact = build_cell_grid(&BuiltinField, &region).unwrap();
        let xs_full: Vec<f64> = exact.x_lines().to_vec();
        let ys_full: Vec<f64> = exact.y_lines().to_vec();
        assert_eq!(xs.len(), xs_full.len());
        assert_eq!(ys.len(), ys_full.len());
        for (a, b) in xs.iter().zip(&xs_full).chain(ys.iter().zip(&ys_full)) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        let grid = field.cell_grid(&region).unwrap();
        assert_eq!(grid.len(), exact.len());
        for c in exact.indices() {
            assert_eq!(grid.class(c).kind, exact.class(c).kind);
        }
    }

    #[test]
    fn touching_zeros_are_found() {
        let field = ExprField::parse("(x-0.3)^2*(y+0.2)").unwrap();
        let (xs, ys) = field.zero_lines(&Region::new(-1.0, 1.0, -1.0, 1.0).unwrap());
        assert_eq!(xs.len(), 1);
        assert!((xs[0] - 0.3).abs() < 1e-6);
        assert_eq!(ys.len(), 1);
        assert!((ys[0] + 0.2).abs() < 1e-12);
    }

    #[test]
    fn mixed_factors_contribute_no_lines() {
        let field = ExprField::parse("x^2 + y^2 - 1").unwrap();
        let (xs, ys) = field.zero_lines(&Region::default());
        assert!(xs.is_empty() && ys.is_empty());
        let grid = field.cell_grid(&Region::default()).unwrap();
        assert_eq!(grid.len(), 1);
    }
}
