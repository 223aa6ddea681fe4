//! CSV rows and one-line JSON headers. Floats carry 17 significant digits.

use std::fmt::Write as _;

/// `{:.16e}`: 17 significant digits, enough to round-trip any f64.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn row(values: &[f64]) -> String {
    values.iter().map(|&v| num(v)).collect::<Vec<_>>().join(",")
}

/// Ordered JSON object rendered on one line.
#[derive(Default)]
pub struct Header {
    fields: Vec<(String, String)>,
}

impl Header {
    pub fn new(command: &str) -> Self {
        let mut h = Self::default();
        h.str("command", command);
        h
    }

    fn push(&mut self, key: &str, json: String) -> &mut Self {
        self.fields.push((key.to_string(), json));
        self
    }

    pub fn num(&mut self, key: &str, x: f64) -> &mut Self {
        let v = if x.is_finite() { num(x) } else { "null".into() };
        self.push(key, v)
    }

    pub fn int(&mut self, key: &str, x: u64) -> &mut Self {
        self.push(key, x.to_string())
    }

    pub fn str(&mut self, key: &str, s: &str) -> &mut Self {
        self.push(key, serde_json::Value::from(s).to_string())
    }

    pub fn bool(&mut self, key: &str, b: bool) -> &mut Self {
        self.push(key, b.to_string())
    }

    pub fn nums(&mut self, key: &str, xs: &[f64]) -> &mut Self {
        let body = xs
            .iter()
            .map(|&x| if x.is_finite() { num(x) } else { "null".into() })
            .collect::<Vec<_>>()
            .join(",");
        self.push(key, format!("[{body}]"))
    }

    pub fn ints(&mut self, key: &str, xs: &[u64]) -> &mut Self {
        let body = xs.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
        self.push(key, format!("[{body}]"))
    }

    /// The JSON object alone.
    pub fn json(&self) -> String {
        let mut s = String::from("{");
        for (i, (k, v)) in self.fields.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            let _ = write!(s, "{}:{v}", serde_json::Value::from(k.as_str()));
        }
        s.push('}');
        s
    }

    /// `# {json}`, the first line of a CSV report.
    pub fn comment_line(&self) -> String {
        format!("# {}", self.json())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(-2.0), "-2.0000000000000000e0");
        let x = 0.1f64 + 0.2;
        assert_eq!(num(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn header_is_valid_json() {
        let mut h = Header::new("band");
        h.num("b_n", 100.0).str("path", "a\"b").int("n", 3).nums("v", &[1.0, f64::NAN]);
        let v: serde_json::Value = serde_json::from_str(&h.json()).unwrap();
        assert_eq!(v["command"], "band");
        assert_eq!(v["b_n"].as_f64(), Some(100.0));
        assert_eq!(v["path"], "a\"b");
        assert!(v["v"][1].is_null());
    }
}
