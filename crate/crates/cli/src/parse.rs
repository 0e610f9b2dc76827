//! Flag value parsing. Failures are usage errors.

use crate::UsageError;
use anyhow::Result;
use subpop_core::attribute_catalog::{parse_attribute_types, AttributeType};

fn usage(msg: String) -> anyhow::Error {
    UsageError(msg).into()
}

fn items(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty())
}

/// Integers, where a trailing `...,last` continues the progression of the
/// first terms: geometric when three or more of them share a constant integer
/// ratio, else arithmetic. `last` is always included.
pub fn parse_ks(s: &str) -> Result<Vec<usize>> {
    let parts: Vec<&str> = items(s).collect();
    let num = |t: &str| t.parse::<usize>().map_err(|_| usage(format!("bad k value {t:?}")));
    let Some(dots) = parts.iter().position(|t| *t == "...") else {
        return parts.into_iter().map(num).collect();
    };
    if dots < 2 || dots + 2 != parts.len() {
        return Err(usage(format!("progression {s:?} needs two leading terms and one final term")));
    }
    let head = parts[..dots].iter().map(|t| num(t)).collect::<Result<Vec<_>>>()?;
    let last = num(parts[dots + 1])?;
    let (a, b) = (head[dots - 2], head[dots - 1]);
    let geometric = head.len() >= 3 && a > 0 && b % a == 0 && b / a > 1 && head.windows(2).all(|w| w[1] == w[0] * (b / a));
    let arithmetic = b > a && head.windows(2).all(|w| w[1] - w[0] == b - a);
    let mut out = head.clone();
    let mut v = b;
    loop {
        v = if geometric {
            v * (b / a)
        } else if arithmetic {
            v + (b - a)
        } else {
            return Err(usage(format!("{s:?} is neither geometric nor arithmetic")));
        };
        if v > last {
            break;
        }
        out.push(v);
    }
    if out.last() != Some(&last) {
        out.push(last);
    }
    Ok(out)
}

/// A comma list of floats, or `start:end:step` (inclusive of `end`).
pub fn parse_lambdas(s: &str) -> Result<Vec<f64>> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| usage(format!("bad lambda value {t:?}")));
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(usage(format!("range {s:?} must be start:end:step")));
        }
        let (start, end, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || end < start {
            return Err(usage(format!("range {s:?} needs start <= end and a positive step")));
        }
        let n = ((end - start) / step + 1e-9).floor() as usize;
        // Rounded so 0:1:0.1 yields 0.3 rather than 0.30000000000000004.
        return Ok((0..=n).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect());
    }
    items(s).map(num).collect()
}

pub fn parse_fractions(s: &str) -> Result<Vec<f64>> {
    let qs: Vec<f64> = items(s)
        .map(|t| t.parse::<f64>().map_err(|_| usage(format!("bad fraction {t:?}"))))
        .collect::<Result<_>>()?;
    if qs.is_empty() {
        return Err(usage("empty fraction list".into()));
    }
    if let Some(q) = qs.iter().find(|q| !(**q > 0.0 && **q <= 1.0)) {
        return Err(usage(format!("fraction {q} outside (0, 1]")));
    }
    Ok(qs)
}

pub fn parse_types(s: &str) -> Result<Vec<AttributeType>> {
    parse_attribute_types(s).map_err(|e| usage(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn progressions() {
        assert_eq!(parse_ks("1,2,4,...,128").unwrap(), vec![1, 2, 4, 8, 16, 32, 64, 128]);
        assert_eq!(parse_ks("1,2,...,5").unwrap(), vec![1, 2, 3, 4, 5]);
        assert_eq!(parse_ks("2,5,...,12").unwrap(), vec![2, 5, 8, 11, 12]);
        assert_eq!(parse_ks("3,1,7").unwrap(), vec![3, 1, 7]);
        assert!(parse_ks("1,...,4").is_err());
        assert!(parse_ks("4,2,...,1").is_err());
        assert!(parse_ks("a").is_err());
    }

    #[test]
    fn lambda_ranges() {
        let l = parse_lambdas("0:1:0.1").unwrap();
        assert_eq!(l.len(), 11);
        assert_eq!(l[3], 0.3);
        assert_eq!(l[10], 1.0);
        assert_eq!(parse_lambdas("0, 0.5,1").unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(parse_lambdas("0:1").is_err());
        assert!(parse_lambdas("1:0:0.1").is_err());
    }

    #[test]
    fn fractions() {
        assert_eq!(parse_fractions("0.05,0.10").unwrap(), vec![0.05, 0.1]);
        assert!(parse_fractions("0").is_err());
        assert!(parse_fractions("").is_err());
    }
}
