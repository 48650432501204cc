//! Structured text reports: titled sections of `key = value` lines.

use std::fmt;

#[derive(Debug, Clone, Default)]
pub struct Section {
    pub name: String,
    pub entries: Vec<(String, String)>,
}

impl Section {
    pub fn new(name: &str) -> Self {
        Section { name: name.into(), entries: Vec::new() }
    }

    pub fn kv(mut self, k: &str, v: impl fmt::Display) -> Self {
        self.entries.push((k.into(), v.to_string()));
        self
    }

    pub fn num(self, k: &str, v: f64) -> Self {
        self.kv(k, fmt_num(v))
    }

    pub fn get(&self, k: &str) -> Option<&str> {
        self.entries.iter().find(|(a, _)| a == k).map(|(_, v)| v.as_str())
    }
}

/// Shortest-roundtrip formatting, scientific outside [1e-4, 1e6).
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 || !v.is_finite() || (v.abs() >= 1e-4 && v.abs() < 1e6) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub title: String,
    pub sections: Vec<Section>,
}

impl Report {
    pub fn new(title: &str) -> Self {
        Report { title: title.into(), sections: Vec::new() }
    }

    pub fn push(&mut self, s: Section) -> &mut Self {
        self.sections.push(s);
        self
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# {}", self.title)?;
        for s in &self.sections {
            writeln!(f, "\n[{}]", s.name)?;
            for (k, v) in &s.entries {
                writeln!(f, "{k} = {v}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_sections() {
        let mut r = Report::new("demo");
        r.push(Section::new("a").num("x", 0.5).num("tiny", 1e-9).kv("label", "ok"));
        let s = r.to_string();
        assert!(s.contains("[a]\nx = 0.5\ntiny = 1e-9\nlabel = ok"));
        assert_eq!(r.section("a").unwrap().get("label"), Some("ok"));
    }
}
