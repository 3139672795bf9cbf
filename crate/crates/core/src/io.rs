//! Plain-text spike, stimulus and CSV files.
//!
//! Spike files hold one `0`/`1` per line under a `# delta=<seconds>` header.
//! Stimulus files hold one real per line with an optional `# pad=<n>` header
//! giving the number of leading pre-history samples. CSV files start with a
//! `# schema=<name>/<version>` line followed by the column header.

use std::fmt::Display;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{SpikeTrain, StimulusSequence};

pub const SCHEMA_VERSION: u32 = 1;

fn header_value<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    let body = line.strip_prefix('#')?.trim();
    let (k, v) = body.split_once('=')?;
    (k.trim() == key).then(|| v.trim())
}

pub fn parse_spikes(text: &str) -> Result<SpikeTrain> {
    let mut delta = None;
    let mut bins = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if let Some(v) = header_value(line, "delta") {
                delta = Some(v.parse::<f64>().map_err(|_| Error::Parse {
                    line: no + 1,
                    message: format!("bad bin width {v:?}"),
                })?);
            }
            continue;
        }
        bins.push(match line {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::Parse {
                    line: no + 1,
                    message: format!("spike bins must be 0 or 1, found {other:?}"),
                })
            }
        });
    }
    let delta = delta.ok_or_else(|| Error::Parse {
        line: 1,
        message: "missing '# delta=' header".into(),
    })?;
    SpikeTrain::new(bins, delta)
}

pub fn format_spikes(spikes: &SpikeTrain) -> String {
    let mut out = format!("# delta={:?}\n", spikes.delta());
    for b in spikes.bins() {
        out.push_str(if *b == 1 { "1\n" } else { "0\n" });
    }
    out
}

pub fn parse_stimulus(text: &str) -> Result<StimulusSequence> {
    let mut pad = 0;
    let mut values = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if let Some(v) = header_value(line, "pad") {
                pad = v.parse().map_err(|_| Error::Parse {
                    line: no + 1,
                    message: format!("bad pad {v:?}"),
                })?;
            }
            continue;
        }
        values.push(line.parse::<f64>().map_err(|_| Error::Parse {
            line: no + 1,
            message: format!("bad stimulus value {line:?}"),
        })?);
    }
    StimulusSequence::new(values, pad)
}

pub fn format_stimulus(stim: &StimulusSequence) -> String {
    let mut out = format!("# pad={}\n", stim.pad());
    for v in stim.raw() {
        out.push_str(&format!("{v:?}\n"));
    }
    out
}

pub fn read_spikes(path: &Path) -> Result<SpikeTrain> {
    parse_spikes(&std::fs::read_to_string(path)?)
}

pub fn read_stimulus(path: &Path) -> Result<StimulusSequence> {
    parse_stimulus(&std::fs::read_to_string(path)?)
}

/// Buffered CSV writer that emits the schema line and column header up front
/// and checks the width of every row.
pub struct CsvWriter {
    out: BufWriter<File>,
    columns: usize,
}

impl CsvWriter {
    pub fn create(path: &Path, schema: &str, columns: &[&str]) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "# schema={schema}/{SCHEMA_VERSION}")?;
        writeln!(out, "{}", columns.join(","))?;
        Ok(Self {
            out,
            columns: columns.len(),
        })
    }

    pub fn row<T: Display>(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.columns {
            return Err(Error::DimensionMismatch {
                context: "CSV row",
                expected: self.columns,
                got: values.len(),
            });
        }
        let line: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        writeln!(self.out, "{}", line.join(","))?;
        Ok(())
    }

    /// Writes a preformatted row.
    pub fn raw(&mut self, line: &str) -> Result<()> {
        let width = line.split(',').count();
        if width != self.columns {
            return Err(Error::DimensionMismatch {
                context: "CSV row",
                expected: self.columns,
                got: width,
            });
        }
        writeln!(self.out, "{line}")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spike_round_trip() {
        let s = SpikeTrain::new(vec![0, 1, 1, 0, 0], 0.001).unwrap();
        assert_eq!(parse_spikes(&format_spikes(&s)).unwrap(), s);
        assert!(parse_spikes("0\n1\n").is_err());
        assert!(parse_spikes("# delta=0.001\n0\n2\n").is_err());
    }

    #[test]
    fn stimulus_round_trip() {
        let s = StimulusSequence::new(vec![0.1, -0.25, 3.0e-7], 1).unwrap();
        let back = parse_stimulus(&format_stimulus(&s)).unwrap();
        assert_eq!(back, s);
        assert_eq!(parse_stimulus("1.5\n2\n").unwrap().pad(), 0);
        assert!(parse_stimulus("x\n").is_err());
    }

    #[test]
    fn csv_schema_and_width() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let mut w = CsvWriter::create(&path, "demo", &["a", "b"]).unwrap();
        w.row(&[1.0, 2.5]).unwrap();
        assert!(w.row(&[1.0]).is_err());
        w.finish().unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "# schema=demo/1\na,b\n1,2.5\n");
    }
}
