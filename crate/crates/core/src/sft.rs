//! Subshifts of finite type: admissibility, word enumeration, periodic points,
//! mixing checks, and the window space of `(k+1)`-words on which every
//! depth-`k` locally constant function lives.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite word over the alphabet, stored with 0-based symbols.
///
/// Displayed 1-based, so the golden-mean words of length two print as
/// `11`, `12`, `21`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Word(pub Vec<u8>);

impl Word {
    /// Number of symbols.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// True for the empty word.
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Parses the 1-based display form, either plain digits (`"121"`) or
    /// dot-separated numbers (`"1.12.3"`).
    pub fn parse(s: &str) -> Result<Word> {
        let s = s.trim();
        let parts: Vec<&str> = if s.contains('.') {
            s.split('.').collect()
        } else {
            s.split("").filter(|p| !p.is_empty()).collect()
        };
        let mut out = Vec::with_capacity(parts.len());
        for p in parts {
            let v: usize = p
                .parse()
                .map_err(|_| Error::Config(format!("bad word {s:?}")))?;
            if v == 0 || v > 255 {
                return Err(Error::Config(format!("symbol {v} out of range in {s:?}")));
            }
            out.push((v - 1) as u8);
        }
        Ok(Word(out))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.iter().all(|&a| a < 9) {
            for a in &self.0 {
                write!(f, "{}", a + 1)?;
            }
            Ok(())
        } else {
            let parts: Vec<String> = self.0.iter().map(|a| (a + 1).to_string()).collect();
            write!(f, "{}", parts.join("."))
        }
    }
}

/// Alphabet size, 0/1 transition matrix and metric base.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubshiftSpec {
    /// Alphabet size.
    pub n: usize,
    /// Row-major transition matrix; `t[a][b] = 1` allows `a` followed by `b`.
    pub t: Vec<Vec<u8>>,
    /// Base of the metric `d(x, y) = β₀^{first disagreement}`.
    #[serde(default = "default_beta0")]
    pub beta0: f64,
}

fn default_beta0() -> f64 {
    0.5
}

impl SubshiftSpec {
    /// Validates and builds a spec.
    pub fn new(t: Vec<Vec<u8>>, beta0: f64) -> Result<Self> {
        let spec = SubshiftSpec { n: t.len(), t, beta0 };
        spec.validate()?;
        Ok(spec)
    }

    /// Full shift on `n` symbols.
    pub fn full(n: usize) -> Self {
        SubshiftSpec { n, t: vec![vec![1; n]; n], beta0: 0.5 }
    }

    /// Golden-mean shift, `T = [[1,1],[1,0]]`.
    pub fn golden_mean() -> Self {
        SubshiftSpec { n: 2, t: vec![vec![1, 1], vec![1, 0]], beta0: 0.5 }
    }

    /// Checks shape, entries, dead states, metric base and mixing.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > 255 {
            return Err(Error::InvalidModel(format!("alphabet size {}", self.n)));
        }
        if self.t.len() != self.n || self.t.iter().any(|row| row.len() != self.n) {
            return Err(Error::InvalidModel("transition matrix is not N×N".into()));
        }
        if self.t.iter().flatten().any(|&e| e > 1) {
            return Err(Error::InvalidModel("transition entries must be 0 or 1".into()));
        }
        if !(self.beta0 > 0.0 && self.beta0 < 1.0) {
            return Err(Error::InvalidModel(format!("beta0 {} not in (0,1)", self.beta0)));
        }
        for a in 0..self.n {
            if self.t[a].iter().all(|&e| e == 0) || (0..self.n).all(|b| self.t[b][a] == 0) {
                return Err(Error::DeadState(a + 1));
            }
        }
        self.mixing_exponent()?;
        Ok(())
    }

    /// Whether `a` may be followed by `b`.
    #[inline]
    pub fn allowed(&self, a: u8, b: u8) -> bool {
        self.t[a as usize][b as usize] == 1
    }

    /// Whether every consecutive pair of the word is allowed.
    pub fn is_admissible(&self, w: &[u8]) -> bool {
        w.iter().all(|&a| (a as usize) < self.n) && w.windows(2).all(|p| self.allowed(p[0], p[1]))
    }

    /// All admissible words of the given length in lexicographic order.
    pub fn enumerate_words(&self, length: usize) -> Vec<Word> {
        let mut out = Vec::new();
        if length == 0 {
            return out;
        }
        let mut buf = Vec::with_capacity(length);
        self.extend_words(&mut buf, length, &mut out);
        out
    }

    fn extend_words(&self, buf: &mut Vec<u8>, length: usize, out: &mut Vec<Word>) {
        if buf.len() == length {
            out.push(Word(buf.clone()));
            return;
        }
        for b in 0..self.n as u8 {
            if buf.last().is_none_or(|&a| self.allowed(a, b)) {
                buf.push(b);
                self.extend_words(buf, length, out);
                buf.pop();
            }
        }
    }

    /// Admissible words of length `n` whose cyclic closure is admissible; these
    /// index the fixed points of `σⁿ`.
    pub fn fixed_points(&self, n: usize) -> Vec<Word> {
        self.enumerate_words(n)
            .into_iter()
            .filter(|w| self.allowed(w.0[n - 1], w.0[0]))
            .collect()
    }

    /// Least `m` with `T^m` entrywise positive.
    pub fn mixing_exponent(&self) -> Result<usize> {
        let n = self.n;
        let base: Vec<Vec<bool>> = self.t.iter().map(|r| r.iter().map(|&e| e == 1).collect()).collect();
        let mut p = base.clone();
        for m in 1..=n * n {
            if p.iter().flatten().all(|&e| e) {
                return Ok(m);
            }
            let mut q = vec![vec![false; n]; n];
            for i in 0..n {
                for k in 0..n {
                    if p[i][k] {
                        for j in 0..n {
                            q[i][j] |= base[k][j];
                        }
                    }
                }
            }
            p = q;
        }
        Err(Error::NotMixing)
    }
}

/// Indexing of the admissible `(k+1)`-words ("windows") together with the
/// shift-predecessor structure used by transfer operators.
///
/// The window of a point `x` is `x₀…x_k`. A preimage `ax` of `x` has window
/// `(a, x₀, …, x_{k-1})`, so transfer-operator rows couple a window to the
/// windows that overlap it in `k` symbols after a shift.
#[derive(Clone, Debug)]
pub struct WindowSpace {
    /// Cocycle depth `k`.
    pub depth: usize,
    /// Windows in lexicographic order.
    pub windows: Vec<Word>,
    /// For window `i`, the windows `j` of its shift-preimages.
    pub preds: Vec<Vec<usize>>,
    /// For window `j`, the windows `i` reachable by one shift.
    pub succs: Vec<Vec<usize>>,
    index: HashMap<Vec<u8>, usize>,
}

impl WindowSpace {
    /// Builds the window space of depth `k`.
    pub fn new(spec: &SubshiftSpec, depth: usize) -> Self {
        let windows = spec.enumerate_words(depth + 1);
        let index: HashMap<Vec<u8>, usize> =
            windows.iter().enumerate().map(|(i, w)| (w.0.clone(), i)).collect();
        let mut preds = vec![Vec::new(); windows.len()];
        let mut succs = vec![Vec::new(); windows.len()];
        for (i, w) in windows.iter().enumerate() {
            for a in 0..spec.n as u8 {
                if !spec.allowed(a, w.0[0]) {
                    continue;
                }
                let mut p = Vec::with_capacity(depth + 1);
                p.push(a);
                p.extend_from_slice(&w.0[..depth]);
                if let Some(&j) = index.get(&p) {
                    preds[i].push(j);
                }
            }
        }
        for (i, ps) in preds.iter().enumerate() {
            for &j in ps {
                succs[j].push(i);
            }
        }
        for s in &mut succs {
            s.sort_unstable();
        }
        WindowSpace { depth, windows, preds, succs, index }
    }

    /// Number of windows.
    pub fn dim(&self) -> usize {
        self.windows.len()
    }

    /// Index of a window.
    pub fn index_of(&self, w: &[u8]) -> Option<usize> {
        self.index.get(w).copied()
    }

    /// Window indices `W_0, …, W_{n-1}` of the `n = len - depth` shifted
    /// windows of a finite word.
    pub fn windows_of(&self, word: &[u8]) -> Result<Vec<usize>> {
        if word.len() < self.depth + 1 {
            return Err(Error::WordTooShort { len: word.len(), depth: self.depth });
        }
        word.windows(self.depth + 1)
            .map(|w| self.index_of(w).ok_or_else(|| Error::Inadmissible(Word(word.to_vec()).to_string())))
            .collect()
    }

    /// Window indices along the periodic point `(w)^∞`, one per symbol of `w`.
    pub fn cyclic_windows(&self, w: &[u8]) -> Result<Vec<usize>> {
        let n = w.len();
        let ext: Vec<u8> = (0..n + self.depth).map(|j| w[j % n]).collect();
        self.windows_of(&ext)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_display_round_trip() {
        let w = Word(vec![0, 1, 0]);
        assert_eq!(w.to_string(), "121");
        assert_eq!(Word::parse("121").unwrap(), w);
        assert_eq!(Word::parse("1.12").unwrap(), Word(vec![0, 11]));
        assert_eq!(Word(vec![0, 11]).to_string(), "1.12");
    }

    #[test]
    fn full_shift_words_and_points() {
        let s = SubshiftSpec::full(2);
        assert_eq!(s.enumerate_words(3).len(), 8);
        let fp: Vec<String> = s.fixed_points(2).iter().map(|w| w.to_string()).collect();
        assert_eq!(fp, ["11", "12", "21", "22"]);
        assert_eq!(s.mixing_exponent().unwrap(), 1);
    }

    #[test]
    fn golden_mean_words_and_points() {
        let s = SubshiftSpec::golden_mean();
        let w: Vec<String> = s.enumerate_words(2).iter().map(|w| w.to_string()).collect();
        assert_eq!(w, ["11", "12", "21"]);
        assert_eq!(s.enumerate_words(5).len(), 13);
        assert_eq!(s.fixed_points(1).len(), 1);
        assert_eq!(s.fixed_points(4).len(), 7);
        assert_eq!(s.mixing_exponent().unwrap(), 2);
    }

    #[test]
    fn rejects_periodic_and_dead_matrices() {
        assert_eq!(SubshiftSpec::new(vec![vec![0, 1], vec![1, 0]], 0.5), Err(Error::NotMixing));
        assert_eq!(SubshiftSpec::new(vec![vec![1, 1], vec![0, 0]], 0.5), Err(Error::DeadState(2)));
        assert!(SubshiftSpec::new(vec![vec![1, 2], vec![1, 0]], 0.5).is_err());
    }

    #[test]
    fn window_predecessors_overlap_after_shift() {
        let s = SubshiftSpec::golden_mean();
        let ws = WindowSpace::new(&s, 1);
        assert_eq!(ws.dim(), 3);
        for (i, w) in ws.windows.iter().enumerate() {
            for &j in &ws.preds[i] {
                assert_eq!(ws.windows[j].0[1], w.0[0]);
            }
        }
        assert_eq!(ws.cyclic_windows(&[0, 1]).unwrap().len(), 2);
        assert!(ws.windows_of(&[1, 1]).is_err());
    }
}
