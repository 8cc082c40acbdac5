//! SMT-LIB 2 export of the truncated-series density condition.
//!
//! The script asserts the *negation* of the condition over the spec's
//! domain, so `unsat` from a solver certifies the encoded condition.
//! Every exponential is the same partial sum that [`super::taylor_exp`]
//! computes, written in Horner form.

use std::fmt::Write as _;

use super::DpConditionSpec;

/// Exact decimal spelling of the shortest round-trip representation of `v`,
/// e.g. `5e-8` becomes `0.00000005`. Negative values use `(- ...)`.
pub fn smt_real(v: f64) -> String {
    assert!(v.is_finite(), "SMT-LIB reals must be finite, got {v}");
    let s = format!("{:e}", v.abs());
    let (mantissa, exp) = s.split_once('e').expect("`{:e}` always has an exponent");
    let exp: i64 = exp.parse().expect("integer exponent");
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    let digits = format!("{int_part}{frac_part}");
    // value = 0.digits * 10^(point)
    let point = int_part.len() as i64 + exp;
    let mut out = if point <= 0 {
        format!("0.{}{}", "0".repeat((-point) as usize), digits)
    } else if point as usize >= digits.len() {
        format!("{}{}.0", digits, "0".repeat(point as usize - digits.len()))
    } else {
        let (a, b) = digits.split_at(point as usize);
        format!("{a}.{b}")
    };
    if out.contains('.') {
        while out.ends_with('0') && !out.ends_with(".0") {
            out.pop();
        }
    }
    if v < 0.0 {
        format!("(- {out})")
    } else {
        out
    }
}

/// Horner form of `sum_{i < terms} u^i / i!` as an SMT-LIB term in `u`.
fn horner(u: &str, terms: u32) -> String {
    // 1 + u(1 + u/2(1 + u/3(... (1 + u/(n-1)))))
    let mut acc = String::from("1.0");
    for i in (1..terms).rev() {
        acc = format!("(+ 1.0 (* (/ {u} {i}.0) {acc}))");
    }
    acc
}

/// Same polynomial as [`horner`], evaluated in f64.
fn horner_eval(u: f64, terms: u32) -> f64 {
    let mut acc = 1.0;
    for i in (1..terms).rev() {
        acc = 1.0 + (u / f64::from(i)) * acc;
    }
    acc
}

/// Evaluate the script's negated condition at `(w, x) = (0, x)` in f64.
///
/// Used to re-substitute witnesses found by the internal checker.
pub fn negated_condition_holds(spec: &DpConditionSpec, x: f64) -> bool {
    let n = spec.taylor_terms;
    let s2 = 2.0 * spec.sigma * spec.sigma;
    let norm = 1.0 / (std::f64::consts::PI * s2).sqrt();
    let pdf_w = norm * horner_eval(-(x * x) / s2, n);
    let d = x - spec.delta_w;
    let pdf_wp = norm * horner_eval(-(d * d) / s2, n);
    let in_domain = x >= spec.x_domain.0 && x <= spec.x_domain.1;
    in_domain && !(pdf_w <= horner_eval(spec.epsilon, n) * pdf_wp + spec.delta)
}

/// Deterministic SMT-LIB 2 script over real arithmetic.
pub fn export_smtlib(spec: &DpConditionSpec) -> String {
    let n = spec.taylor_terms;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * spec.sigma * spec.sigma).sqrt();
    let mut s = String::new();
    let _ = writeln!(s, "; negated density condition pdf_w <= exp(eps) * pdf_w' + delta");
    let _ = writeln!(
        s,
        "; exp replaced by its {n}-term partial sum; unsat certifies the condition"
    );
    let _ = writeln!(s, "(set-logic QF_NRA)");
    let _ = writeln!(s, "(define-fun epsilon () Real {})", smt_real(spec.epsilon));
    let _ = writeln!(s, "(define-fun delta () Real {})", smt_real(spec.delta));
    let _ = writeln!(s, "(define-fun sigma () Real {})", smt_real(spec.sigma));
    let _ = writeln!(s, "(define-fun delta_w () Real {})", smt_real(spec.delta_w));
    let _ = writeln!(s, "(define-fun norm () Real {})", smt_real(norm));
    let _ = writeln!(s, "(define-fun texp ((u Real)) Real {})", horner("u", n));
    let _ = writeln!(s, "(declare-const w Real)");
    let _ = writeln!(s, "(declare-const w_prime Real)");
    let _ = writeln!(s, "(declare-const noisy_w Real)");
    let _ = writeln!(s, "(declare-const x Real)");
    let _ = writeln!(s, "(assert (= w_prime (+ w delta_w)))");
    let _ = writeln!(s, "(assert (= x noisy_w))");
    let _ = writeln!(s, "(assert (>= (- x w) {}))", smt_real(spec.x_domain.0));
    let _ = writeln!(s, "(assert (<= (- x w) {}))", smt_real(spec.x_domain.1));
    let _ = writeln!(
        s,
        "(define-fun pdf_w () Real (* norm (texp (/ (- (* (- x w) (- x w))) (* 2.0 sigma sigma)))))"
    );
    let _ = writeln!(
        s,
        "(define-fun pdf_w_prime () Real (* norm (texp (/ (- (* (- x w_prime) (- x w_prime))) (* 2.0 sigma sigma)))))"
    );
    let _ = writeln!(s, "(assert (not (<= pdf_w (+ (* (texp epsilon) pdf_w_prime) delta))))");
    let _ = writeln!(s, "(check-sat)");
    let _ = writeln!(s, "(exit)");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::taylor_exp;

    #[test]
    fn decimal_spelling() {
        assert_eq!(smt_real(5e-8), "0.00000005");
        assert_eq!(smt_real(1.25), "1.25");
        assert_eq!(smt_real(0.0), "0.0");
        assert_eq!(smt_real(100.0), "100.0");
        assert_eq!(smt_real(191.94103648752323), "191.94103648752323");
        assert_eq!(smt_real(-0.5), "(- 0.5)");
        assert_eq!(smt_real(1e21), "1000000000000000000000.0");
        // shortest round-trip digits survive exactly
        let v = 0.1 + 0.2;
        let back: f64 = smt_real(v).parse().unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn horner_matches_incremental_sum() {
        for &u in &[-3.0, -0.5, 0.0, 0.7, 2.0] {
            let a = horner_eval(u, 20);
            let b = taylor_exp(u, 20);
            assert!((a - b).abs() <= 1e-13 * b.abs().max(1.0), "{u}: {a} vs {b}");
        }
        assert_eq!(horner("u", 1), "1.0");
        assert_eq!(horner("u", 3), "(+ 1.0 (* (/ u 1.0) (+ 1.0 (* (/ u 2.0) 1.0))))");
    }

    #[test]
    fn zero_sensitivity_script_aliases_the_two_densities() {
        let spec = DpConditionSpec::new(1.0, 1e-6, 0.5, 0.0).unwrap();
        let script = export_smtlib(&spec);
        assert!(script.contains("(define-fun delta_w () Real 0.0)"));
        assert!(script.contains("(assert (= w_prime (+ w delta_w)))"));
        assert!(script.contains("(check-sat)"));
    }

    #[test]
    fn golden_script() {
        let spec = DpConditionSpec::with_domain(1.0, 1e-8, 0.25, 0.5, 3, (-2.0, 2.5)).unwrap();
        let expected = "\
; negated density condition pdf_w <= exp(eps) * pdf_w' + delta
; exp replaced by its 3-term partial sum; unsat certifies the condition
(set-logic QF_NRA)
(define-fun epsilon () Real 1.0)
(define-fun delta () Real 0.00000001)
(define-fun sigma () Real 0.25)
(define-fun delta_w () Real 0.5)
(define-fun norm () Real 1.5957691216057308)
(define-fun texp ((u Real)) Real (+ 1.0 (* (/ u 1.0) (+ 1.0 (* (/ u 2.0) 1.0)))))
(declare-const w Real)
(declare-const w_prime Real)
(declare-const noisy_w Real)
(declare-const x Real)
(assert (= w_prime (+ w delta_w)))
(assert (= x noisy_w))
(assert (>= (- x w) (- 2.0)))
(assert (<= (- x w) 2.5))
(define-fun pdf_w () Real (* norm (texp (/ (- (* (- x w) (- x w))) (* 2.0 sigma sigma)))))
(define-fun pdf_w_prime () Real (* norm (texp (/ (- (* (- x w_prime) (- x w_prime))) (* 2.0 sigma sigma)))))
(assert (not (<= pdf_w (+ (* (texp epsilon) pdf_w_prime) delta))))
(check-sat)
(exit)
";
        assert_eq!(export_smtlib(&spec), expected);
        assert_eq!(export_smtlib(&spec), export_smtlib(&spec));
    }
}
