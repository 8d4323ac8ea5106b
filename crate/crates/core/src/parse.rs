//! Parsing of real numbers written as decimals, fractions or powers.

/// Parses `1.5`, `-2e-3`, `3/4`, `2^-9` or `-1/3`.
pub fn parse_real(text: &str) -> Result<f64, String> {
    let t = text.trim();
    let bad = || format!("`{t}` is not a number");
    let value = if let Some((base, exp)) = t.split_once('^') {
        let base: f64 = base.trim().parse().map_err(|_| bad())?;
        let exp: i32 = exp.trim().parse().map_err(|_| bad())?;
        base.powi(exp)
    } else if let Some((num, den)) = t.split_once('/') {
        let num: f64 = num.trim().parse().map_err(|_| bad())?;
        let den: f64 = den.trim().parse().map_err(|_| bad())?;
        num / den
    } else {
        t.parse().map_err(|_| bad())?
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("`{t}` is not finite"))
    }
}

#[cfg(test)]
mod tests {
    use super::parse_real;

    #[test]
    fn forms() {
        assert_eq!(parse_real("1.5"), Ok(1.5));
        assert_eq!(parse_real(" 3/4 "), Ok(0.75));
        assert_eq!(parse_real("2^-9"), Ok(1.0 / 512.0));
        assert_eq!(parse_real("-1e-3"), Ok(-1e-3));
        assert!(parse_real("1/0").is_err());
        assert!(parse_real("abc").is_err());
        assert!(parse_real("").is_err());
    }
}
