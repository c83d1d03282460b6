use std::fmt::Write as _;
use std::path::Path;

use super::NnError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

/// Flat parameter storage with named, shaped segments.
///
/// Every mutable borrow bumps a generation counter so cached activations can
/// detect that the weights they were computed from have changed.
#[derive(Debug, Clone, Default)]
pub struct ParamVector {
    data: Vec<f64>,
    segments: Vec<Segment>,
    generation: u64,
}

impl PartialEq for ParamVector {
    fn eq(&self, other: &Self) -> bool {
        self.data == other.data && self.segments == other.segments
    }
}

impl ParamVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a zero-initialized segment and return its offset.
    pub fn add_segment(&mut self, name: impl Into<String>, shape: &[usize]) -> usize {
        let name = name.into();
        assert!(self.segment(&name).is_none(), "duplicate segment `{name}`");
        let len = shape.iter().product();
        let offset = self.data.len();
        self.data.resize(offset + len, 0.0);
        self.segments.push(Segment { name, shape: shape.to_vec(), offset, len });
        self.generation += 1;
        offset
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    pub fn get(&self, name: &str) -> Result<&[f64], NnError> {
        let s = self.segment(name).ok_or_else(|| NnError::UnknownSegment(name.into()))?;
        Ok(&self.data[s.offset..s.offset + s.len])
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut [f64], NnError> {
        let s = self.segment(name).ok_or_else(|| NnError::UnknownSegment(name.into()))?.clone();
        self.generation += 1;
        Ok(&mut self.data[s.offset..s.offset + s.len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        self.generation += 1;
        &mut self.data
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// FNV-1a over the bit patterns of all values.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.data {
            for b in v.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    /// Segments whose names start with `prefix`, with the prefix stripped.
    pub fn extract(&self, prefix: &str) -> ParamVector {
        let mut out = ParamVector::new();
        for s in &self.segments {
            if let Some(rest) = s.name.strip_prefix(prefix) {
                let off = out.add_segment(rest, &s.shape);
                out.data[off..off + s.len].copy_from_slice(&self.data[s.offset..s.offset + s.len]);
            }
        }
        out
    }

    /// Copy with the named segment removed.
    pub fn without(&self, name: &str) -> ParamVector {
        let mut out = ParamVector::new();
        for s in self.segments.iter().filter(|s| s.name != name) {
            let off = out.add_segment(s.name.clone(), &s.shape);
            out.data[off..off + s.len].copy_from_slice(&self.data[s.offset..s.offset + s.len]);
        }
        out
    }

    /// Append all segments of `other` under `prefix`.
    pub fn append(&mut self, prefix: &str, other: &ParamVector) {
        for s in &other.segments {
            let off = self.add_segment(format!("{prefix}{}", s.name), &s.shape);
            self.data[off..off + s.len].copy_from_slice(&other.data[s.offset..s.offset + s.len]);
        }
    }

    pub fn to_text(&self, kind: &str) -> String {
        let mut out = format!("twtlrl-params v1 {kind}\n");
        for s in &self.segments {
            let shape: Vec<String> = s.shape.iter().map(|d| d.to_string()).collect();
            let _ = write!(out, "{} {}", s.name, if shape.is_empty() { "1".into() } else { shape.join("x") });
            for v in &self.data[s.offset..s.offset + s.len] {
                let _ = write!(out, " {v:?}");
            }
            out.push('\n');
        }
        out
    }

    /// Parse the text format, returning the model kind and the parameters.
    pub fn from_text(text: &str) -> Result<(String, ParamVector), NnError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| NnError::Format("empty file".into()))?;
        let kind = header
            .strip_prefix("twtlrl-params v1 ")
            .map(str::trim)
            .filter(|k| !k.is_empty())
            .ok_or_else(|| NnError::Format(format!("bad header `{header}`")))?;
        let mut pv = ParamVector::new();
        for (n, line) in lines.enumerate() {
            let mut fields = line.split_ascii_whitespace();
            let bad = |m: &str| NnError::Format(format!("segment line {}: {m}", n + 2));
            let name = fields.next().ok_or_else(|| bad("missing name"))?;
            let shape_text = fields.next().ok_or_else(|| bad("missing shape"))?;
            let shape = shape_text
                .split('x')
                .map(|d| d.parse::<usize>().map_err(|_| bad("bad shape")))
                .collect::<Result<Vec<_>, _>>()?;
            let values = fields
                .map(|v| v.parse::<f64>().map_err(|_| bad(&format!("bad value `{v}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            if pv.segment(name).is_some() {
                return Err(bad("duplicate segment"));
            }
            let off = pv.add_segment(name, &shape);
            if values.len() != shape.iter().product::<usize>() {
                return Err(bad(&format!("expected {} values, found {}", shape.iter().product::<usize>(), values.len())));
            }
            pv.data[off..off + values.len()].copy_from_slice(&values);
        }
        Ok((kind.to_string(), pv))
    }

    pub fn save(&self, kind: &str, path: &Path) -> Result<(), NnError> {
        std::fs::write(path, self.to_text(kind))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(String, ParamVector), NnError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segments_cover_the_vector() {
        let mut p = ParamVector::new();
        p.add_segment("w", &[3, 2]);
        p.add_segment("b", &[3]);
        assert_eq!(p.len(), 9);
        assert_eq!(p.segments().iter().map(|s| s.len).sum::<usize>(), p.len());
        assert_eq!(p.get("b").unwrap().len(), 3);
        assert!(p.get("nope").is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let mut p = ParamVector::new();
        p.add_segment("a.w", &[2, 2]);
        p.add_segment("mix_raw", &[1]);
        p.as_mut_slice().copy_from_slice(&[0.1, -1e-300, 1.0 / 3.0, 12345.678e20, -2.1972245773362196]);
        let (kind, q) = ParamVector::from_text(&p.to_text("hybrid")).unwrap();
        assert_eq!(kind, "hybrid");
        assert_eq!(p, q);
        assert_eq!(p.checksum(), q.checksum());
    }

    #[test]
    fn bad_files_are_rejected() {
        assert!(ParamVector::from_text("").is_err());
        assert!(ParamVector::from_text("params v2 x\n").is_err());
        assert!(ParamVector::from_text("twtlrl-params v1 m\nw 2x2 1 2 3\n").is_err());
        assert!(ParamVector::from_text("twtlrl-params v1 m\nw 2 1 zz\n").is_err());
    }

    #[test]
    fn generation_tracks_mutation() {
        let mut p = ParamVector::new();
        p.add_segment("w", &[2]);
        let g = p.generation();
        let _ = p.as_slice();
        assert_eq!(p.generation(), g);
        p.as_mut_slice()[0] = 1.0;
        assert!(p.generation() > g);
    }

    #[test]
    fn extract_and_append() {
        let mut p = ParamVector::new();
        p.add_segment("on.w", &[2]);
        p.add_segment("off.w", &[1]);
        p.as_mut_slice().copy_from_slice(&[1.0, 2.0, 3.0]);
        let on = p.extract("on.");
        assert_eq!(on.get("w").unwrap(), &[1.0, 2.0]);
        let mut q = ParamVector::new();
        q.append("x.", &on);
        assert_eq!(q.get("x.w").unwrap(), &[1.0, 2.0]);
    }
}
