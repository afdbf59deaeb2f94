//! Compactly supported real potentials.
//!
//! A [`Potential`] is pure data: piecewise constant cells, a uniformly sampled
//! grid, the unit-interval square well, or a chain of contiguous sampled
//! segments (the form produced by bound-state surgery, where the potential may
//! jump between segments). Every form vanishes identically outside its support.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::simpson;

/// Uniform samples `samples[i] = V(x0 + i*dx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledGrid {
    x0: f64,
    dx: f64,
    samples: Vec<f64>,
}

impl SampledGrid {
    pub fn new(x0: f64, dx: f64, samples: Vec<f64>) -> Result<Self> {
        if !(dx.is_finite() && dx > 0.0) {
            return Err(Error::InvalidPotential(format!(
                "grid step must be positive, got {dx}"
            )));
        }
        if samples.len() < 2 {
            return Err(Error::InvalidPotential(
                "grid needs at least 2 samples".into(),
            ));
        }
        if !x0.is_finite() || samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPotential(
                "grid contains non-finite values".into(),
            ));
        }
        Ok(Self { x0, dx, samples })
    }

    /// Samples `f` at `cells + 1` equally spaced nodes spanning `[lo, hi]`.
    pub fn from_fn(lo: f64, hi: f64, cells: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if !(hi > lo) || cells == 0 {
            return Err(Error::InvalidPotential(format!(
                "bad grid span [{lo}, {hi}] with {cells} cells"
            )));
        }
        let dx = (hi - lo) / cells as f64;
        let samples = (0..=cells).map(|i| f(node(lo, hi, cells, i))).collect();
        Self::new(lo, dx, samples)
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn cells(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn end(&self) -> f64 {
        self.x0 + self.dx * self.cells() as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        node(self.x0, self.end(), self.cells(), i)
    }

    /// Linear interpolation inside the grid, zero outside.
    pub fn interp_linear(&self, x: f64) -> f64 {
        if x < self.x0 || x > self.end() {
            return 0.0;
        }
        let t = (x - self.x0) / self.dx;
        let i = (t.floor() as usize).min(self.cells() - 1);
        let w = t - i as f64;
        self.samples[i] * (1.0 - w) + self.samples[i + 1] * w
    }

    /// Four-point Lagrange interpolation, one-sided near the ends. Used by the
    /// ODE integrator so that sub-step evaluations stay fourth-order accurate.
    pub(crate) fn interp_cubic(&self, x: f64) -> f64 {
        let n = self.samples.len();
        let t = ((x - self.x0) / self.dx).clamp(0.0, self.cells() as f64);
        if n < 4 {
            return self.interp_linear(self.x0 + t * self.dx);
        }
        let i = (t.floor() as usize).min(n - 2);
        let start = i.saturating_sub(1).min(n - 4);
        let s = t - start as f64;
        if (s - s.round()).abs() < 1e-12 {
            return self.samples[start + s.round() as usize];
        }
        let y = &self.samples[start..start + 4];
        let (s0, s1, s2, s3) = (s, s - 1.0, s - 2.0, s - 3.0);
        -y[0] * s1 * s2 * s3 / 6.0 + y[1] * s0 * s2 * s3 / 2.0 - y[2] * s0 * s1 * s3 / 2.0
            + y[3] * s0 * s1 * s2 / 6.0
    }

    fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    fn min_value(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub(crate) fn node(lo: f64, hi: f64, cells: usize, i: usize) -> f64 {
    if i == cells {
        hi
    } else {
        lo + (hi - lo) * (i as f64 / cells as f64)
    }
}

/// Constant values on consecutive cells `[breakpoints[i], breakpoints[i+1]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstant {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 || values.len() + 1 != breakpoints.len() {
            return Err(Error::InvalidPotential(format!(
                "{} breakpoints need {} values, got {}",
                breakpoints.len(),
                breakpoints.len().saturating_sub(1),
                values.len()
            )));
        }
        if breakpoints
            .iter()
            .chain(values.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidPotential(
                "non-finite breakpoint or value".into(),
            ));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidPotential(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            breakpoints,
            values,
        })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// The potential forms understood by the engine.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    PiecewiseConstant(PiecewiseConstant),
    SampledGrid(SampledGrid),
    /// `V = -depth` on `[0, 1]`.
    SquareWell {
        depth: f64,
    },
    /// Contiguous grids; the potential may jump where one segment meets the next.
    Segmented(Vec<SampledGrid>),
}

/// One smooth stretch of a potential.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Piece<'a> {
    Constant { lo: f64, hi: f64, value: f64 },
    Grid(&'a SampledGrid),
}

impl Piece<'_> {
    pub(crate) fn lo(&self) -> f64 {
        match self {
            Piece::Constant { lo, .. } => *lo,
            Piece::Grid(g) => g.x0,
        }
    }

    pub(crate) fn hi(&self) -> f64 {
        match self {
            Piece::Constant { hi, .. } => *hi,
            Piece::Grid(g) => g.end(),
        }
    }

    /// Value inside the piece; positions on its boundary get the one-sided limit.
    pub(crate) fn value_at(&self, x: f64) -> f64 {
        match self {
            Piece::Constant { value, .. } => *value,
            Piece::Grid(g) => g.interp_cubic(x),
        }
    }

    pub(crate) fn max_abs(&self) -> f64 {
        match self {
            Piece::Constant { value, .. } => value.abs(),
            Piece::Grid(g) => g.max_abs(),
        }
    }

    pub(crate) fn min_value(&self) -> f64 {
        match self {
            Piece::Constant { value, .. } => *value,
            Piece::Grid(g) => g.min_value(),
        }
    }
}

/// Norms of a potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormReport {
    /// `sqrt(∫ V²)`.
    pub l2: f64,
    /// `∫ (1 + |x|) |V|`.
    pub l1_weighted: f64,
    /// `∫ V`.
    pub integral: f64,
}

impl Potential {
    pub fn square_well(depth: f64) -> Result<Self> {
        if !(depth.is_finite() && depth > 0.0) {
            return Err(Error::InvalidPotential(format!(
                "square-well depth must be positive, got {depth}"
            )));
        }
        Ok(Potential::SquareWell { depth })
    }

    /// The zero potential, declared on `[0, 1]`.
    pub fn zero() -> Self {
        Potential::PiecewiseConstant(PiecewiseConstant {
            breakpoints: vec![0.0, 1.0],
            values: vec![0.0],
        })
    }

    pub fn piecewise(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        PiecewiseConstant::new(breakpoints, values).map(Potential::PiecewiseConstant)
    }

    pub fn grid(x0: f64, dx: f64, samples: Vec<f64>) -> Result<Self> {
        SampledGrid::new(x0, dx, samples).map(Potential::SampledGrid)
    }

    /// Builds a segmented potential, checking contiguity.
    pub fn segmented(segments: Vec<SampledGrid>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidPotential(
                "segmented potential needs a segment".into(),
            ));
        }
        for w in segments.windows(2) {
            let gap = (w[1].x0 - w[0].end()).abs();
            if gap > 1e-9 * (1.0 + w[0].end().abs()) {
                return Err(Error::InvalidPotential(format!(
                    "segments not contiguous: {} vs {}",
                    w[0].end(),
                    w[1].x0
                )));
            }
        }
        if segments.len() == 1 {
            return Ok(Potential::SampledGrid(segments.into_iter().next().unwrap()));
        }
        Ok(Potential::Segmented(segments))
    }

    pub(crate) fn pieces(&self) -> Vec<Piece<'_>> {
        match self {
            Potential::PiecewiseConstant(pc) => pc
                .breakpoints
                .windows(2)
                .zip(&pc.values)
                .map(|(b, &value)| Piece::Constant {
                    lo: b[0],
                    hi: b[1],
                    value,
                })
                .collect(),
            Potential::SampledGrid(g) => vec![Piece::Grid(g)],
            Potential::SquareWell { depth } => vec![Piece::Constant {
                lo: 0.0,
                hi: 1.0,
                value: -depth,
            }],
            Potential::Segmented(segs) => segs.iter().map(Piece::Grid).collect(),
        }
    }

    /// Closed support interval `[a, b]`.
    pub fn support(&self) -> (f64, f64) {
        let pieces = self.pieces();
        (pieces[0].lo(), pieces[pieces.len() - 1].hi())
    }

    pub fn support_length(&self) -> f64 {
        let (a, b) = self.support();
        b - a
    }

    /// Pointwise value; exactly zero outside the support.
    pub fn evaluate(&self, x: f64) -> f64 {
        let (a, b) = self.support();
        if !(x >= a && x <= b) {
            return 0.0;
        }
        match self {
            Potential::PiecewiseConstant(pc) => {
                let i = pc.breakpoints.partition_point(|&bp| bp <= x);
                pc.values[(i.max(1) - 1).min(pc.values.len() - 1)]
            }
            Potential::SampledGrid(g) => g.interp_linear(x),
            Potential::SquareWell { depth } => -depth,
            Potential::Segmented(segs) => {
                let i = segs.partition_point(|s| s.x0 <= x);
                segs[(i.max(1) - 1).min(segs.len() - 1)].interp_linear(x)
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.pieces().iter().fold(0.0, |m, p| m.max(p.max_abs()))
    }

    /// `max(-V, 0)`: no bound state can lie deeper than `sqrt` of this.
    pub fn max_well_depth(&self) -> f64 {
        self.pieces()
            .iter()
            .fold(0.0, |m: f64, p| m.max(-p.min_value()))
    }

    /// Finest node spacing of the sampled parts, if any.
    pub(crate) fn finest_grid_step(&self) -> Option<f64> {
        self.pieces()
            .iter()
            .filter_map(|p| match p {
                Piece::Grid(g) => Some(g.dx),
                Piece::Constant { .. } => None,
            })
            .reduce(f64::min)
    }

    /// Default integration step: support length / 4096, refined to the
    /// finest sampled spacing when that is smaller.
    pub fn default_step(&self) -> f64 {
        let base = self.support_length() / 4096.0;
        self.finest_grid_step().map_or(base, |dx| base.min(dx))
    }

    pub fn norms(&self) -> NormReport {
        let mut l2sq = 0.0;
        let mut l1w = 0.0;
        let mut integral = 0.0;
        for piece in self.pieces() {
            match piece {
                Piece::Constant { lo, hi, value } => {
                    l2sq += value * value * (hi - lo);
                    integral += value * (hi - lo);
                    l1w += value.abs() * weight_integral(lo, hi);
                }
                Piece::Grid(g) => {
                    let xs: Vec<f64> = (0..g.samples.len()).map(|i| g.node(i)).collect();
                    l2sq += trapezoid(g.dx, g.samples.iter().map(|v| v * v));
                    integral += trapezoid(g.dx, g.samples.iter().copied());
                    l1w += trapezoid(
                        g.dx,
                        g.samples
                            .iter()
                            .zip(&xs)
                            .map(|(v, x)| (1.0 + x.abs()) * v.abs()),
                    );
                }
            }
        }
        NormReport {
            l2: l2sq.max(0.0).sqrt(),
            l1_weighted: l1w,
            integral,
        }
    }

    /// `∫ V²` by composite Simpson on each piece. Higher order than the
    /// trapezoid used by [`Potential::norms`]; used by the identity checks.
    pub fn l2_squared_simpson(&self) -> f64 {
        self.pieces()
            .iter()
            .map(|p| match p {
                Piece::Constant { lo, hi, value } => value * value * (hi - lo),
                Piece::Grid(g) => {
                    simpson(g.dx, &g.samples.iter().map(|v| v * v).collect::<Vec<_>>())
                }
            })
            .sum()
    }

    /// `c * V`.
    pub fn scaled(&self, c: f64) -> Potential {
        match self {
            Potential::PiecewiseConstant(pc) => Potential::PiecewiseConstant(PiecewiseConstant {
                breakpoints: pc.breakpoints.clone(),
                values: pc.values.iter().map(|v| c * v).collect(),
            }),
            Potential::SampledGrid(g) => Potential::SampledGrid(scale_grid(g, c)),
            Potential::SquareWell { depth } => Potential::PiecewiseConstant(PiecewiseConstant {
                breakpoints: vec![0.0, 1.0],
                values: vec![-c * depth],
            }),
            Potential::Segmented(segs) => {
                Potential::Segmented(segs.iter().map(|g| scale_grid(g, c)).collect())
            }
        }
    }

    /// `V(x - shift)`.
    pub fn shifted(&self, shift: f64) -> Potential {
        match self {
            Potential::PiecewiseConstant(pc) => Potential::PiecewiseConstant(PiecewiseConstant {
                breakpoints: pc.breakpoints.iter().map(|b| b + shift).collect(),
                values: pc.values.clone(),
            }),
            Potential::SampledGrid(g) => Potential::SampledGrid(shift_grid(g, shift)),
            Potential::SquareWell { depth } => Potential::PiecewiseConstant(PiecewiseConstant {
                breakpoints: vec![shift, 1.0 + shift],
                values: vec![-depth],
            }),
            Potential::Segmented(segs) => {
                Potential::Segmented(segs.iter().map(|g| shift_grid(g, shift)).collect())
            }
        }
    }

    /// Renders every piece as samples: constant pieces get `ceil(len / step)`
    /// cells, sampled pieces are kept as they are.
    pub fn to_grid(&self, step: f64) -> Result<Potential> {
        let segs = self
            .pieces()
            .iter()
            .map(|p| match p {
                Piece::Constant { lo, hi, value } => {
                    let cells = ((hi - lo) / step).ceil().max(1.0) as usize;
                    SampledGrid::from_fn(*lo, *hi, cells, |_| *value)
                }
                Piece::Grid(g) => Ok((*g).clone()),
            })
            .collect::<Result<Vec<_>>>()?;
        Potential::segmented(segs)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&PotentialFile::from(self)).expect("potential serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PotentialFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn read_from(mut reader: impl Read) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        Self::from_json(&text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write_to(&self, mut writer: impl Write) -> Result<()> {
        writer.write_all(self.to_json().as_bytes())?;
        writer.write_all(b"\n")?;
        Ok(())
    }
}

fn scale_grid(g: &SampledGrid, c: f64) -> SampledGrid {
    SampledGrid {
        x0: g.x0,
        dx: g.dx,
        samples: g.samples.iter().map(|v| c * v).collect(),
    }
}

fn shift_grid(g: &SampledGrid, shift: f64) -> SampledGrid {
    SampledGrid {
        x0: g.x0 + shift,
        dx: g.dx,
        samples: g.samples.clone(),
    }
}

/// `∫_lo^hi (1 + |x|) dx`.
fn weight_integral(lo: f64, hi: f64) -> f64 {
    let antiderivative = |x: f64| x + 0.5 * x * x.abs();
    antiderivative(hi) - antiderivative(lo)
}

fn trapezoid(dx: f64, values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut first = None;
    let mut last = 0.0;
    for v in values {
        if first.is_none() {
            first = Some(v);
        }
        sum += v;
        last = v;
    }
    let first = first.unwrap_or(0.0);
    dx * (sum - 0.5 * (first + last))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    x0: f64,
    dx: f64,
    samples: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase", deny_unknown_fields)]
enum PotentialFile {
    Piecewise {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
    Grid {
        x0: f64,
        dx: f64,
        samples: Vec<f64>,
    },
    Squarewell {
        epsilon: f64,
    },
    Segmented {
        segments: Vec<GridFile>,
    },
}

impl From<&Potential> for PotentialFile {
    fn from(p: &Potential) -> Self {
        match p {
            Potential::PiecewiseConstant(pc) => PotentialFile::Piecewise {
                breakpoints: pc.breakpoints.clone(),
                values: pc.values.clone(),
            },
            Potential::SampledGrid(g) => PotentialFile::Grid {
                x0: g.x0,
                dx: g.dx,
                samples: g.samples.clone(),
            },
            Potential::SquareWell { depth } => PotentialFile::Squarewell { epsilon: *depth },
            Potential::Segmented(segs) => PotentialFile::Segmented {
                segments: segs
                    .iter()
                    .map(|g| GridFile {
                        x0: g.x0,
                        dx: g.dx,
                        samples: g.samples.clone(),
                    })
                    .collect(),
            },
        }
    }
}

impl TryFrom<PotentialFile> for Potential {
    type Error = Error;

    fn try_from(file: PotentialFile) -> Result<Self> {
        match file {
            PotentialFile::Piecewise {
                breakpoints,
                values,
            } => Potential::piecewise(breakpoints, values),
            PotentialFile::Grid { x0, dx, samples } => Potential::grid(x0, dx, samples),
            PotentialFile::Squarewell { epsilon } => Potential::square_well(epsilon),
            PotentialFile::Segmented { segments } => Potential::segmented(
                segments
                    .into_iter()
                    .map(|g| SampledGrid::new(g.x0, g.dx, g.samples))
                    .collect::<Result<Vec<_>>>()?,
            ),
        }
    }
}
