//! Named numeric comparisons collected by the verification routines.

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    /// `|lhs − rhs| ≤ tolerance`.
    pub fn equal(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let pass = (lhs - rhs).abs() <= tolerance;
        Check::finish(name, lhs, rhs, tolerance, pass)
    }

    /// `lhs ≤ rhs + tolerance`.
    pub fn at_most(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let pass = lhs <= rhs + tolerance;
        Check::finish(name, lhs, rhs, tolerance, pass)
    }

    /// `lhs ≥ rhs`, for witnesses that must exceed a threshold.
    pub fn at_least(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        let pass = lhs >= rhs;
        Check::finish(name, lhs, rhs, 0.0, pass)
    }

    /// A residual that must not exceed the tolerance.
    pub fn residual(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check::at_most(name, value, 0.0, tolerance)
    }

    pub fn failed(name: impl Into<String>, tolerance: f64) -> Self {
        Check::finish(name, f64::NAN, f64::NAN, tolerance, false)
    }

    fn finish(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64, pass: bool) -> Self {
        Check {
            name: name.into(),
            lhs,
            rhs,
            tolerance,
            pass: pass && lhs.is_finite() && rhs.is_finite(),
        }
    }
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comparisons() {
        assert!(Check::equal("a", 1.0, 1.0 + 1e-10, 1e-9).pass);
        assert!(!Check::equal("a", 1.0, 1.1, 1e-9).pass);
        assert!(Check::at_most("b", 0.5, 0.5, 0.0).pass);
        assert!(!Check::at_most("b", f64::NAN, 0.5, 1.0).pass);
        assert!(Check::at_least("c", 1.2, 1e-3).pass);
        assert!(!Check::failed("d", 1e-9).pass);
    }
}
