//! Skeleton description files.
//!
//! Line-oriented text: `joints N`, `bone P Q`, `limb NAME J...`,
//! `mirror NAME NAME`. Blank lines and `#` comments are ignored.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const DEFAULT_SKELETON: &str = include_str!("../../assets/skeleton22.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonSpec {
    pub joint_count: usize,
    pub bones: Vec<(usize, usize)>,
    pub limbs: Vec<(String, Vec<usize>)>,
    pub mirrors: Vec<(String, String)>,
}

impl SkeletonSpec {
    /// The shipped 22-joint layout (two legs, spine, two five-joint arms).
    pub fn default_22() -> Self {
        Self::parse(DEFAULT_SKELETON).expect("shipped skeleton parses")
    }

    /// Joints `0..n` connected in a line, no limbs.
    pub fn chain(n: usize) -> Self {
        SkeletonSpec {
            joint_count: n,
            bones: (1..n).map(|i| (i - 1, i)).collect(),
            limbs: Vec::new(),
            mirrors: Vec::new(),
        }
    }

    pub fn limb(&self, name: &str) -> Option<&[usize]> {
        self.limbs.iter().find(|(n, _)| n == name).map(|(_, j)| j.as_slice())
    }

    pub fn validate(&self) -> Result<()> {
        if self.joint_count == 0 {
            return Err(Error::Spec("joint count must be positive".into()));
        }
        let n = self.joint_count;
        for &(p, q) in &self.bones {
            if p >= n || q >= n {
                return Err(Error::Spec(format!("bone ({p}, {q}) out of range for {n} joints")));
            }
            if p == q {
                return Err(Error::Spec(format!("bone ({p}, {p}) is a self-loop")));
            }
        }
        for (name, joints) in &self.limbs {
            if let Some(j) = joints.iter().find(|&&j| j >= n) {
                return Err(Error::Spec(format!("limb {name} joint {j} out of range for {n} joints")));
            }
        }
        for (a, b) in &self.mirrors {
            for name in [a, b] {
                if self.limb(name).is_none() {
                    return Err(Error::Spec(format!("mirror references unknown limb {name}")));
                }
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_named(text, "<skeleton>")
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_named(&text, &path.display().to_string())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    fn parse_named(text: &str, source: &str) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: source.to_string(),
            line,
            msg,
        };
        let mut joint_count = None;
        let mut bones = Vec::new();
        let mut limbs = Vec::new();
        let mut mirrors = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut tok = line.split_whitespace();
            let key = tok.next().unwrap();
            let rest: Vec<&str> = tok.collect();
            let index = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| err(lineno, format!("expected joint index, got {s:?}")))
            };
            match key {
                "joints" => {
                    if rest.len() != 1 {
                        return Err(err(lineno, "joints takes one count".into()));
                    }
                    if joint_count.is_some() {
                        return Err(err(lineno, "duplicate joints line".into()));
                    }
                    joint_count = Some(index(rest[0])?);
                }
                "bone" => {
                    if rest.len() != 2 {
                        return Err(err(lineno, "bone takes two joint indices".into()));
                    }
                    bones.push((index(rest[0])?, index(rest[1])?));
                }
                "limb" => {
                    if rest.len() < 2 {
                        return Err(err(lineno, "limb takes a name and at least one joint".into()));
                    }
                    let joints = rest[1..].iter().map(|s| index(s)).collect::<Result<Vec<_>>>()?;
                    limbs.push((rest[0].to_string(), joints));
                }
                "mirror" => {
                    if rest.len() != 2 {
                        return Err(err(lineno, "mirror takes two limb names".into()));
                    }
                    mirrors.push((rest[0].to_string(), rest[1].to_string()));
                }
                other => return Err(err(lineno, format!("unknown directive {other:?}"))),
            }
        }
        let joint_count = joint_count.ok_or_else(|| err(0, "missing joints line".into()))?;
        let spec = SkeletonSpec {
            joint_count,
            bones,
            limbs,
            mirrors,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Canonical text form; `parse(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "joints {}", self.joint_count).unwrap();
        for (p, q) in &self.bones {
            writeln!(s, "bone {p} {q}").unwrap();
        }
        for (name, joints) in &self.limbs {
            write!(s, "limb {name}").unwrap();
            for j in joints {
                write!(s, " {j}").unwrap();
            }
            s.push('\n');
        }
        for (a, b) in &self.mirrors {
            writeln!(s, "mirror {a} {b}").unwrap();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_default_skeleton_is_a_tree() {
        let s = SkeletonSpec::default_22();
        assert_eq!(s.joint_count, 22);
        assert_eq!(s.bones.len(), 21);
        assert_eq!(s.limbs.len(), 4);
        assert_eq!(s.mirrors.len(), 2);
    }

    #[test]
    fn test_text_round_trip() {
        let s = SkeletonSpec::default_22();
        let text = s.to_text();
        let back = SkeletonSpec::parse(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn test_comments_and_blank_lines() {
        let s = SkeletonSpec::parse("# chain\njoints 3\n\nbone 0 1 # first\nbone 1 2\n").unwrap();
        assert_eq!(s.bones, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn test_rejects_bad_input() {
        assert!(matches!(SkeletonSpec::parse("joints 2\nbone 0 2\n"), Err(Error::Spec(_))));
        assert!(matches!(SkeletonSpec::parse("joints 2\nbone 1 1\n"), Err(Error::Spec(_))));
        assert!(matches!(
            SkeletonSpec::parse("joints 2\nlimb a 0\nmirror a b\n"),
            Err(Error::Spec(_))
        ));
        assert!(matches!(
            SkeletonSpec::parse("joints 2\nedge 0 1\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(SkeletonSpec::parse("bone 0 1\n"), Err(Error::Parse { .. })));
    }
}
