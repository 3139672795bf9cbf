//! Plain-text checkpoints of the ℓ1 filters.
//!
//! ```text
//! # sparse-ppf snapshot v1
//! filter=l1-ppf1
//! M=3
//! W=1
//! beta=0.999
//! gamma=0.5
//! alpha=0.0009
//! R=1
//! k=1200
//! c=0.25
//! penalize_intercept=true
//! semantics=once_per_window
//! [w_hat]
//! <M values>
//! [u]            (l1-ppf1)   or   [g]   (l1-ppf0)
//! <M values>
//! [B]            (l1-ppf1 only)
//! <M rows of M values, row-major>
//! ```
//!
//! Values are space separated and printed in shortest round-trip form, so a
//! save/load cycle reproduces the state bit for bit.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{FilterConfig, IterationSemantics, Ppf0, Ppf1, PointProcessFilter};
use crate::error::{Error, Result};
use crate::prox::ProxHyper;

const MAGIC: &str = "# sparse-ppf snapshot v1";

#[derive(Debug, Clone)]
pub enum Snapshot {
    Ppf0(Ppf0),
    Ppf1(Ppf1),
}

fn join(values: impl Iterator<Item = f64>) -> String {
    values.map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}

fn header(out: &mut String, name: &str, cfg: &FilterConfig, k: usize) {
    let h = &cfg.hyper;
    let semantics = match cfg.semantics {
        IterationSemantics::OncePerWindow => "once_per_window",
        IterationSemantics::Literal => "literal",
    };
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "filter={name}");
    let _ = writeln!(out, "M={}", cfg.dim);
    let _ = writeln!(out, "W={}", cfg.window_len);
    let _ = writeln!(out, "beta={:?}", cfg.beta);
    let _ = writeln!(out, "gamma={:?}", h.gamma);
    let _ = writeln!(out, "alpha={:?}", h.step_size);
    let _ = writeln!(out, "R={}", h.iterations);
    let _ = writeln!(out, "k={k}");
    let _ = writeln!(out, "c={:?}", h.c);
    let _ = writeln!(out, "penalize_intercept={}", h.penalize_intercept);
    let _ = writeln!(out, "semantics={semantics}");
}

impl Snapshot {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        match self {
            Snapshot::Ppf0(f) => {
                header(&mut out, f.name(), f.config(), f.windows_seen());
                let _ = writeln!(out, "[w_hat]\n{}", join(f.estimate().iter().copied()));
                let _ = writeln!(out, "[g]\n{}", join(f.gradient().iter().copied()));
            }
            Snapshot::Ppf1(f) => {
                header(&mut out, f.name(), f.config(), f.windows_seen());
                let _ = writeln!(out, "[w_hat]\n{}", join(f.estimate().iter().copied()));
                let _ = writeln!(out, "[u]\n{}", join(f.u().iter().copied()));
                let _ = writeln!(out, "[B]");
                for row in f.information().outer_iter() {
                    let _ = writeln!(out, "{}", join(row.iter().copied()));
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        match lines.next() {
            Some((_, l)) if l == MAGIC => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: "missing snapshot header".into(),
                })
            }
        }
        let mut keys = HashMap::new();
        let mut sections: Vec<(String, Vec<(usize, &str)>)> = Vec::new();
        for (no, line) in lines {
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                sections.push((name.to_string(), Vec::new()));
            } else if let Some((_, body)) = sections.last_mut() {
                body.push((no, line));
            } else if let Some((key, value)) = line.split_once('=') {
                keys.insert(key.to_string(), (no, value.to_string()));
            } else {
                return Err(Error::Parse {
                    line: no,
                    message: format!("unexpected line {line:?}"),
                });
            }
        }

        let get = |key: &str| {
            keys.get(key).ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("missing key {key}"),
            })
        };
        fn parse<T: std::str::FromStr>(entry: &(usize, String)) -> Result<T> {
            entry.1.parse().map_err(|_| Error::Parse {
                line: entry.0,
                message: format!("cannot parse {:?}", entry.1),
            })
        }
        let dim: usize = parse(get("M")?)?;
        let semantics = match get("semantics")?.1.as_str() {
            "once_per_window" => IterationSemantics::OncePerWindow,
            "literal" => IterationSemantics::Literal,
            other => {
                return Err(Error::Parse {
                    line: get("semantics")?.0,
                    message: format!("unknown semantics {other:?}"),
                })
            }
        };
        let mut hyper = ProxHyper::new(parse(get("alpha")?)?, parse(get("gamma")?)?, parse(get("R")?)?)?;
        hyper.c = parse(get("c")?)?;
        hyper.penalize_intercept = parse(get("penalize_intercept")?)?;
        let config = FilterConfig {
            dim,
            window_len: parse(get("W")?)?,
            beta: parse(get("beta")?)?,
            hyper,
            semantics,
        };
        let k: usize = parse(get("k")?)?;

        let section = |name: &str| -> Result<Vec<Vec<f64>>> {
            let (_, body) = sections
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| Error::Parse {
                    line: 0,
                    message: format!("missing section [{name}]"),
                })?;
            body.iter()
                .map(|(no, l)| {
                    l.split_whitespace()
                        .map(|t| {
                            t.parse::<f64>().map_err(|_| Error::Parse {
                                line: *no,
                                message: format!("bad number {t:?}"),
                            })
                        })
                        .collect()
                })
                .collect()
        };
        let vector = |name: &str| -> Result<Array1<f64>> {
            let rows = section(name)?;
            match rows.as_slice() {
                [row] if row.len() == dim => Ok(Array1::from(row.clone())),
                _ => Err(Error::Parse {
                    line: 0,
                    message: format!("section [{name}] must hold one row of {dim} values"),
                }),
            }
        };

        let w_hat = vector("w_hat")?;
        match get("filter")?.1.as_str() {
            "l1-ppf0" => Ok(Snapshot::Ppf0(Ppf0::from_parts(config, vector("g")?, w_hat, k)?)),
            "l1-ppf1" => {
                let rows = section("B")?;
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::Parse {
                        line: 0,
                        message: format!("section [B] must be {dim} × {dim}"),
                    });
                }
                let b = Array2::from_shape_fn((dim, dim), |(i, j)| rows[i][j]);
                Ok(Snapshot::Ppf1(Ppf1::from_parts(config, vector("u")?, b, w_hat, k)?))
            }
            other => Err(Error::Parse {
                line: get("filter")?.0,
                message: format!("unknown filter {other:?}"),
            }),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn cfg() -> FilterConfig {
        FilterConfig {
            dim: 3,
            window_len: 2,
            beta: 0.97,
            hyper: ProxHyper::new(0.0123, 0.3, 2).unwrap(),
            semantics: IterationSemantics::OncePerWindow,
        }
    }

    fn feed(f: &mut dyn PointProcessFilter, from: usize, to: usize) {
        for i in from..to {
            let s = (i as f64 * 0.37).sin();
            let x = array![[1.0, s, 0.1 * i as f64 % 1.0], [1.0, -s, s * s]];
            let n = array![(i % 3 == 0) as u8 as f64, (i % 5 == 0) as u8 as f64];
            f.update(n.view(), x.view()).unwrap();
        }
    }

    #[test]
    fn ppf1_round_trip_resumes_identically() {
        let mut a = Ppf1::new(cfg()).unwrap();
        feed(&mut a, 0, 30);
        let text = Snapshot::Ppf1(a.clone()).to_text();
        let Snapshot::Ppf1(mut b) = Snapshot::from_text(&text).unwrap() else {
            panic!("wrong filter kind");
        };
        assert_eq!(b.u(), a.u());
        assert_eq!(b.information(), a.information());
        feed(&mut a, 30, 60);
        feed(&mut b, 30, 60);
        assert_eq!(a.estimate(), b.estimate());
        assert_eq!(b.windows_seen(), 60);
    }

    #[test]
    fn ppf0_round_trip() {
        let mut a = Ppf0::new(cfg()).unwrap();
        feed(&mut a, 0, 25);
        let text = Snapshot::Ppf0(a.clone()).to_text();
        let Snapshot::Ppf0(b) = Snapshot::from_text(&text).unwrap() else {
            panic!("wrong filter kind");
        };
        assert_eq!(b.gradient(), a.gradient());
        assert_eq!(b.estimate(), a.estimate());
        assert_eq!(b.config(), a.config());
    }

    #[test]
    fn rejects_truncated_input() {
        let a = Ppf1::new(cfg()).unwrap();
        let text = Snapshot::Ppf1(a).to_text();
        let cut: String = text.lines().take(15).collect::<Vec<_>>().join("\n");
        assert!(Snapshot::from_text(&cut).is_err());
        assert!(Snapshot::from_text("garbage").is_err());
    }
}
