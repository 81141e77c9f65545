//! Versioned text snapshots of a [`PolicyState`].
//!
//! ```text
//! cascade-hybrid policy-state v1
//! dims <d> <m>
//! step <step>
//! gamma <gamma>
//! rebuilds <count>
//! matrix <name> <rows> <cols>
//! <row-major values, one row per line>
//! vector <name> <len>
//! <values>
//! ```
//! Floats use the shortest representation that round-trips exactly.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::PolicyState;

const MAGIC: &str = "cascade-hybrid policy-state v1";

fn write_err(e: std::io::Error) -> Error {
    Error::io("<snapshot>", e)
}

fn write_values<'a, W: Write>(w: &mut W, values: impl Iterator<Item = &'a f64>) -> Result<()> {
    let line: Vec<String> = values.map(|v| v.to_string()).collect();
    writeln!(w, "{}", line.join(" ")).map_err(write_err)
}

impl PolicyState {
    pub fn write_snapshot<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{MAGIC}").map_err(write_err)?;
        writeln!(w, "dims {} {}", self.d, self.m).map_err(write_err)?;
        writeln!(w, "step {}", self.step).map_err(write_err)?;
        writeln!(w, "gamma {}", self.gamma).map_err(write_err)?;
        writeln!(w, "rebuilds {}", self.rebuilds).map_err(write_err)?;
        let matrices = [
            ("M", &self.rel_gram),
            ("M_inv", &self.rel_gram_inv),
            ("B", &self.cross),
            ("H", &self.schur),
            ("H_inv", &self.schur_inv),
            ("H_raw", &self.raw_topic_gram),
        ];
        for (name, mat) in matrices {
            writeln!(w, "matrix {name} {} {}", mat.nrows(), mat.ncols()).map_err(write_err)?;
            for row in mat.row_iter() {
                write_values(w, row.iter())?;
            }
        }
        for (name, vec) in [
            ("y", &self.rel_clicks),
            ("u", &self.topic_clicks),
            ("u_raw", &self.raw_topic_clicks),
        ] {
            writeln!(w, "vector {name} {}", vec.len()).map_err(write_err)?;
            write_values(w, vec.iter())?;
        }
        Ok(())
    }

    pub fn to_snapshot_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_snapshot(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("snapshot is ASCII")
    }

    pub fn read_snapshot<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = SnapshotLines {
            inner: r.lines(),
            line: 0,
        };
        if lines.next_line()? != MAGIC {
            return Err(lines.error("not a policy-state v1 snapshot"));
        }
        let dims = lines.keyed("dims", 2)?;
        let (d, m) = (lines.parse_usize(&dims[0])?, lines.parse_usize(&dims[1])?);
        let step = lines.keyed("step", 1)?[0]
            .parse::<u64>()
            .map_err(|e| lines.error(e.to_string()))?;
        let gamma = lines.keyed("gamma", 1)?;
        let gamma = lines.parse_f64(&gamma[0])?;
        let rebuilds = lines.keyed("rebuilds", 1)?[0]
            .parse::<u64>()
            .map_err(|e| lines.error(e.to_string()))?;

        let mut state = PolicyState::new(d, m, gamma)?;
        state.step = step;
        state.rebuilds = rebuilds;
        state.rel_gram = lines.matrix("M", m, m)?;
        state.rel_gram_inv = lines.matrix("M_inv", m, m)?;
        state.cross = lines.matrix("B", d, m)?;
        state.schur = lines.matrix("H", d, d)?;
        state.schur_inv = lines.matrix("H_inv", d, d)?;
        state.raw_topic_gram = lines.matrix("H_raw", d, d)?;
        state.rel_clicks = lines.vector("y", m)?;
        state.topic_clicks = lines.vector("u", d)?;
        state.raw_topic_clicks = lines.vector("u_raw", d)?;
        Ok(state)
    }
}

struct SnapshotLines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> SnapshotLines<R> {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: "<snapshot>".into(),
            line: self.line,
            message: message.into(),
        }
    }

    fn next_line(&mut self) -> Result<String> {
        self.line += 1;
        match self.inner.next() {
            Some(Ok(l)) => Ok(l.trim_end().to_owned()),
            Some(Err(e)) => Err(Error::io("<snapshot>", e)),
            None => Err(self.error("unexpected end of snapshot")),
        }
    }

    fn keyed(&mut self, key: &str, n: usize) -> Result<Vec<String>> {
        let line = self.next_line()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(self.error(format!("expected '{key}'")));
        }
        let rest: Vec<String> = parts.map(str::to_owned).collect();
        if rest.len() != n {
            return Err(self.error(format!("'{key}' takes {n} values")));
        }
        Ok(rest)
    }

    fn parse_usize(&self, s: &str) -> Result<usize> {
        s.parse().map_err(|_| self.error(format!("bad integer '{s}'")))
    }

    fn parse_f64(&self, s: &str) -> Result<f64> {
        s.parse().map_err(|_| self.error(format!("bad number '{s}'")))
    }

    fn values(&mut self, n: usize) -> Result<Vec<f64>> {
        let line = self.next_line()?;
        let vals = line
            .split_whitespace()
            .map(|t| self.parse_f64(t))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != n {
            return Err(self.error(format!("expected {n} values, found {}", vals.len())));
        }
        Ok(vals)
    }

    fn matrix(&mut self, name: &str, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let header = self.keyed("matrix", 3)?;
        if header[0] != name || self.parse_usize(&header[1])? != rows || self.parse_usize(&header[2])? != cols {
            return Err(self.error(format!("expected matrix {name} {rows} {cols}")));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(self.values(cols)?);
        }
        Ok(DMatrix::from_row_slice(rows, cols, &data))
    }

    fn vector(&mut self, name: &str, len: usize) -> Result<DVector<f64>> {
        let header = self.keyed("vector", 2)?;
        if header[0] != name || self.parse_usize(&header[1])? != len {
            return Err(self.error(format!("expected vector {name} {len}")));
        }
        Ok(DVector::from_vec(self.values(len)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Observation;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn snapshot_round_trips_exactly(
            d in 0usize..4,
            m in 0usize..4,
            obs in prop::collection::vec((prop::collection::vec(0.0f64..1.0, 4), prop::collection::vec(-1.0f64..1.0, 4), any::<bool>()), 0..12),
        ) {
            prop_assume!(d + m > 0);
            let mut state = PolicyState::new(d, m, 0.7).unwrap();
            for (omega, z, click) in &obs {
                let o = Observation { omega: omega[..d].to_vec(), z: z[..m].to_vec() };
                state.observe(&[o], click.then_some(0)).unwrap();
            }
            let text = state.to_snapshot_string();
            let restored = PolicyState::read_snapshot(text.as_bytes()).unwrap();
            prop_assert_eq!(&restored, &state);
            prop_assert_eq!(restored.to_snapshot_string(), text);
        }
    }

    #[test]
    fn rejects_foreign_and_truncated_input() {
        assert!(PolicyState::read_snapshot("hello\n".as_bytes()).is_err());
        let text = PolicyState::new(2, 1, 1.0).unwrap().to_snapshot_string();
        let truncated: String = text.lines().take(8).map(|l| format!("{l}\n")).collect();
        assert!(matches!(
            PolicyState::read_snapshot(truncated.as_bytes()),
            Err(Error::Parse { .. })
        ));
    }
}
