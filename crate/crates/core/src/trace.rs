//! Sampled paths and the ambient-space interface the analysis runs against.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::dl::{DlGraph, DlVertex};
use crate::error::{Error, Result};
use crate::sol::{SolParams, SolPoint};

/// A metric space with a height function, seen through certified distance
/// bounds. Spaces with an exact metric return `lower == upper`.
pub trait Ambient: Sync {
    type Point: Clone + Send + Sync;

    fn distance_bounds(&self, p: &Self::Point, q: &Self::Point) -> (f64, f64);

    fn height(&self, p: &Self::Point) -> f64;

    fn space_tag(&self) -> SpaceTag;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "space", rename_all = "lowercase")]
pub enum SpaceTag {
    Sol { a: f64, b: f64 },
    Dl { m: u32, n: u32 },
}

/// A finite sampled path: strictly increasing parameters with matching points.
#[derive(Clone, Debug, PartialEq)]
pub struct PathTrace<P> {
    params: Vec<f64>,
    points: Vec<P>,
}

impl<P: Clone> PathTrace<P> {
    pub fn new(params: Vec<f64>, points: Vec<P>) -> Result<Self> {
        if params.len() != points.len() {
            return Err(Error::Validation(format!(
                "trace has {} params but {} points",
                params.len(),
                points.len()
            )));
        }
        if params.is_empty() {
            return Err(Error::Degenerate("empty trace".into()));
        }
        if params.iter().any(|t| !t.is_finite()) {
            return Err(Error::Domain("trace params must be finite".into()));
        }
        if params.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("trace params must be strictly increasing".into()));
        }
        Ok(Self { params, points })
    }

    /// Samples `f` at `count` evenly spaced parameters on `[t0, t1]`.
    pub fn sample(t0: f64, t1: f64, count: usize, f: impl Fn(f64) -> P) -> Result<Self> {
        if count < 2 || t1 <= t0 {
            return Err(Error::Degenerate(format!(
                "cannot sample {count} points on [{t0}, {t1}]"
            )));
        }
        let step = (t1 - t0) / (count - 1) as f64;
        let params: Vec<f64> = (0..count)
            .map(|k| if k + 1 == count { t1 } else { t0 + step * k as f64 })
            .collect();
        let points = params.iter().map(|&t| f(t)).collect();
        Self::new(params, points)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn points(&self) -> &[P] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.params[0]
    }

    pub fn end(&self) -> f64 {
        self.params[self.params.len() - 1]
    }

    pub fn span(&self) -> f64 {
        self.end() - self.start()
    }

    /// Index of the sample whose parameter is closest to `t` (ties go low).
    pub fn index_near(&self, t: f64) -> usize {
        let i = self.params.partition_point(|&s| s < t);
        if i == 0 {
            return 0;
        }
        if i == self.params.len() {
            return i - 1;
        }
        if (self.params[i] - t) < (t - self.params[i - 1]) {
            i
        } else {
            i - 1
        }
    }

    pub fn point_at(&self, t: f64) -> &P {
        &self.points[self.index_near(t)]
    }

    /// `t ↦ t_N − t + t_0`, traversed in the opposite direction.
    pub fn reversed(&self) -> Self {
        let (t0, tn) = (self.start(), self.end());
        let params = self.params.iter().rev().map(|&t| tn - t + t0).collect();
        let points = self.points.iter().rev().cloned().collect();
        Self { params, points }
    }

    pub fn with_scaled_params(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.params.iter().map(|t| t * factor).collect(),
            self.points.clone(),
        )
    }

    /// Samples with index in `lo..=hi`.
    pub fn slice(&self, lo: usize, hi: usize) -> Self {
        Self {
            params: self.params[lo..=hi].to_vec(),
            points: self.points[lo..=hi].to_vec(),
        }
    }

    pub fn map_points<Q: Clone>(&self, f: impl Fn(&P) -> Q) -> PathTrace<Q> {
        PathTrace {
            params: self.params.clone(),
            points: self.points.iter().map(f).collect(),
        }
    }
}

/// One line of a trace file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "space", rename_all = "lowercase")]
pub enum TraceRecord {
    Sol {
        a: f64,
        b: f64,
        params: Vec<f64>,
        points: Vec<[f64; 3]>,
    },
    Dl {
        m: u32,
        n: u32,
        params: Vec<f64>,
        points: Vec<String>,
    },
}

impl TraceRecord {
    pub fn from_sol(params: SolParams, trace: &PathTrace<SolPoint>) -> Self {
        TraceRecord::Sol {
            a: params.a(),
            b: params.b(),
            params: trace.params().to_vec(),
            points: trace.points().iter().map(|p| [p.x, p.y, p.z]).collect(),
        }
    }

    pub fn from_dl(graph: DlGraph, trace: &PathTrace<DlVertex>) -> Self {
        TraceRecord::Dl {
            m: graph.m(),
            n: graph.n(),
            params: trace.params().to_vec(),
            points: trace.points().iter().map(|v| v.to_string()).collect(),
        }
    }
}

/// A decoded trace together with the space it lives in.
#[derive(Clone, Debug)]
pub enum AnyTrace {
    Sol(SolParams, PathTrace<SolPoint>),
    Dl(DlGraph, PathTrace<DlVertex>),
}

impl TryFrom<&TraceRecord> for AnyTrace {
    type Error = Error;

    fn try_from(rec: &TraceRecord) -> Result<Self> {
        match rec {
            TraceRecord::Sol { a, b, params, points } => {
                let sp = SolParams::new(*a, *b)?;
                let pts = points.iter().map(|p| SolPoint::new(p[0], p[1], p[2])).collect();
                Ok(AnyTrace::Sol(sp, PathTrace::new(params.clone(), pts)?))
            }
            TraceRecord::Dl { m, n, params, points } => {
                let g = DlGraph::new(*m, *n)?;
                let pts = points
                    .iter()
                    .map(|s| {
                        let v: DlVertex = s.parse()?;
                        g.validate(&v)?;
                        Ok(v)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(AnyTrace::Dl(g, PathTrace::new(params.clone(), pts)?))
            }
        }
    }
}

pub fn write_trace_file<W: Write>(mut out: W, records: &[TraceRecord]) -> Result<()> {
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace_file<R: BufRead>(input: R) -> Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
