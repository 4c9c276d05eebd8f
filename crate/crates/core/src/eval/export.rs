//! Plot-ready exports: score fields over a 2-D grid and per-class histograms of
//! squared distances to the center.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::quantile;
use crate::data::{Label, LabeledDataset};
use crate::error::{Error, Result};
use crate::numcore::{dist_sq, Matrix, Network};
use crate::sphere::{imdad_score, view_hypersphere};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSpace {
    /// Grid over the 2-D representation `φ`.
    Representation,
    /// Grid over the 2-D input, each cell forwarded through the network.
    Input,
}

/// Score field on a `resolution × resolution` grid plus circle overlays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryGrid {
    pub space: GridSpace,
    pub resolution: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major by `y`: `scores[iy * resolution + ix]`.
    pub scores: Vec<f64>,
    pub center: Vec<f64>,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub decision_radius: f64,
    /// Data points in grid coordinates.
    pub points: Vec<GridPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub x: f64,
    pub y: f64,
    pub label: Label,
}

impl BoundaryGrid {
    pub fn score_at(&self, ix: usize, iy: usize) -> f64 {
        self.scores[iy * self.resolution + ix]
    }

    /// `x,y,score` lines, one per cell.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,y,score")?;
        for (iy, y) in self.ys.iter().enumerate() {
            for (ix, x) in self.xs.iter().enumerate() {
                writeln!(w, "{x},{y},{}", self.score_at(ix, iy))?;
            }
        }
        Ok(())
    }

    /// Circle overlays as `name,cx,cy,radius` lines.
    pub fn write_circles_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "name,cx,cy,radius")?;
        let (cx, cy) = (self.center[0], self.center[1]);
        writeln!(w, "inner,{cx},{cy},{}", self.inner_radius)?;
        writeln!(w, "outer,{cx},{cy},{}", self.outer_radius)?;
        writeln!(w, "decision,{cx},{cy},{}", self.decision_radius)?;
        Ok(())
    }

    pub fn write_points_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,y,label")?;
        for p in &self.points {
            writeln!(w, "{},{},{}", p.x, p.y, p.label.sign())?;
        }
        Ok(())
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Bounding box of `pts` (and the center), widened by `margin` of its span.
fn grid_axes(
    pts: &[GridPoint],
    center: &[f64],
    resolution: usize,
    margin: f64,
) -> (Vec<f64>, Vec<f64>) {
    let mut lo = [center[0], center[1]];
    let mut hi = lo;
    for p in pts {
        lo[0] = lo[0].min(p.x);
        lo[1] = lo[1].min(p.y);
        hi[0] = hi[0].max(p.x);
        hi[1] = hi[1].max(p.y);
    }
    let mut axes = [Vec::new(), Vec::new()];
    for k in 0..2 {
        let span = (hi[k] - lo[k]).max(1e-9);
        axes[k] = linspace(lo[k] - margin * span, hi[k] + margin * span, resolution);
    }
    let [xs, ys] = axes;
    (xs, ys)
}

/// Score field of an end-to-end network.
///
/// With a 2-D representation the grid lives in `φ`-space, where the score is
/// `‖z−c‖² − T²`; otherwise 2-D inputs are gridded and forwarded.
pub fn export_boundary(
    net: &Network,
    ds: &LabeledDataset,
    resolution: usize,
    margin: f64,
) -> Result<BoundaryGrid> {
    if resolution < 2 {
        return Err(Error::Domain(format!(
            "resolution must be >= 2, got {resolution}"
        )));
    }
    let view = view_hypersphere(net);
    let t_sq = view.t * view.t;
    let space = if net.rep_dim() == 2 {
        GridSpace::Representation
    } else if ds.dim() == 2 {
        GridSpace::Input
    } else {
        return Err(Error::Unsupported(format!(
            "boundary export needs a 2-D representation or 2-D input (p = {}, d = {})",
            net.rep_dim(),
            ds.dim()
        )));
    };
    let points: Vec<GridPoint> = match space {
        GridSpace::Representation => {
            let out = net.forward_batch(ds.x())?;
            out.phi
                .iter_rows()
                .zip(ds.labels())
                .map(|(r, l)| GridPoint {
                    x: r[0],
                    y: r[1],
                    label: *l,
                })
                .collect()
        }
        GridSpace::Input => ds
            .x()
            .iter_rows()
            .zip(ds.labels())
            .map(|(r, l)| GridPoint {
                x: r[0],
                y: r[1],
                label: *l,
            })
            .collect(),
    };
    let (xs, ys, scores) = match space {
        GridSpace::Representation => {
            let (xs, ys) = grid_axes(&points, &view.center, resolution, margin);
            let scores = ys
                .iter()
                .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
                .map(|(x, y)| dist_sq(&[x, y], &view.center) - t_sq)
                .collect();
            (xs, ys, scores)
        }
        GridSpace::Input => {
            // center is irrelevant for the input-space box; use the data mean
            let mid = [
                points.iter().map(|p| p.x).sum::<f64>() / points.len().max(1) as f64,
                points.iter().map(|p| p.y).sum::<f64>() / points.len().max(1) as f64,
            ];
            let (xs, ys) = grid_axes(&points, &mid, resolution, margin);
            let cells: Vec<(f64, f64)> = ys
                .iter()
                .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
                .collect();
            let scores = cells
                .par_iter()
                .map(|&(x, y)| imdad_score(net, &[x, y]))
                .collect::<Result<Vec<_>>>()?;
            (xs, ys, scores)
        }
    };
    Ok(BoundaryGrid {
        space,
        resolution,
        xs,
        ys,
        scores,
        center: view.center.clone(),
        inner_radius: view.inner_radius(),
        outer_radius: view.outer_radius(),
        decision_radius: view.t.abs(),
        points,
    })
}

/// Per-class histogram of `‖φ(x)−c‖²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceHistogram {
    pub epoch_tag: String,
    /// `bins + 1` increasing edges; bin `k` is `[edges[k], edges[k+1])`, the
    /// last bin closed.
    pub edges: Vec<f64>,
    pub normal_counts: Vec<usize>,
    pub abnormal_counts: Vec<usize>,
    pub r_bar: f64,
    pub outer: f64,
}

impl DistanceHistogram {
    /// Abnormal rows in bins at or beyond the outer sphere `R̄ + ρ̄`.
    pub fn abnormal_beyond_outer(&self) -> usize {
        self.edges
            .windows(2)
            .zip(&self.abnormal_counts)
            .filter(|(e, _)| e[0] >= self.outer)
            .map(|(_, c)| c)
            .sum()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,bin_lo,bin_hi,normal,abnormal")?;
        for (k, e) in self.edges.windows(2).enumerate() {
            writeln!(
                w,
                "{},{},{},{},{}",
                self.epoch_tag, e[0], e[1], self.normal_counts[k], self.abnormal_counts[k]
            )?;
        }
        Ok(())
    }
}

const MAX_BINS: usize = 512;

/// Freedman–Diaconis bin edges over all distances, with `R̄` and `R̄ + ρ̄`
/// inserted as extra edges when they fall inside the range so that sphere
/// membership can be read off the bins exactly.
fn fd_edges(values: &[f64], extra: &[f64]) -> Result<Vec<f64>> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return Ok(vec![lo, hi]);
    }
    let iqr = quantile(values, 0.75)? - quantile(values, 0.25)?;
    let width = 2.0 * iqr / (values.len() as f64).cbrt();
    let bins = if width > 0.0 {
        (((hi - lo) / width).ceil() as usize).clamp(1, MAX_BINS)
    } else {
        1
    };
    let mut edges: Vec<f64> = (0..=bins)
        .map(|k| lo + (hi - lo) * k as f64 / bins as f64)
        .collect();
    edges[bins] = hi;
    for &e in extra {
        if e > lo && e < hi && !edges.contains(&e) {
            edges.push(e);
        }
    }
    edges.sort_by(f64::total_cmp);
    Ok(edges)
}

fn bin_of(edges: &[f64], v: f64) -> usize {
    let last = edges.len() - 2;
    // first edge strictly greater than v, minus one
    let k = edges.partition_point(|e| *e <= v);
    k.saturating_sub(1).min(last)
}

pub fn distance_histogram(
    dist_sq: &[f64],
    labels: &[Label],
    r_bar: f64,
    outer: f64,
    epoch_tag: &str,
) -> Result<DistanceHistogram> {
    if dist_sq.is_empty() {
        return Err(Error::InvalidBatch("no distances to histogram".into()));
    }
    let edges = fd_edges(dist_sq, &[r_bar, outer])?;
    let bins = edges.len() - 1;
    let mut normal_counts = vec![0; bins];
    let mut abnormal_counts = vec![0; bins];
    for (d, l) in dist_sq.iter().zip(labels) {
        let k = bin_of(&edges, *d);
        match l {
            Label::Normal => normal_counts[k] += 1,
            Label::Abnormal => abnormal_counts[k] += 1,
        }
    }
    Ok(DistanceHistogram {
        epoch_tag: epoch_tag.to_string(),
        edges,
        normal_counts,
        abnormal_counts,
        r_bar,
        outer,
    })
}

/// Histogram of squared distances of `ds` to the network's center.
pub fn export_distance_density(
    net: &Network,
    ds: &LabeledDataset,
    epoch_tag: &str,
) -> Result<DistanceHistogram> {
    let view = view_hypersphere(net);
    let out = net.forward_batch(ds.x())?;
    let d: Vec<f64> = out
        .phi
        .iter_rows()
        .map(|r| dist_sq(r, &view.center))
        .collect();
    distance_histogram(
        &d,
        ds.labels(),
        view.r_bar,
        view.r_bar + view.rho_bar,
        epoch_tag,
    )
}

/// Representation rows for external plotting.
pub fn representation(net: &Network, ds: &LabeledDataset) -> Result<Matrix> {
    Ok(net.forward_batch(ds.x())?.phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{Activation, Layer};
    use Label::{Abnormal as A, Normal as N};

    fn identity_net(w: Vec<f64>, b: f64, rho: f64) -> Network {
        let p = w.len();
        let mut eye = Matrix::zeros(p, p);
        for i in 0..p {
            eye.set(i, i, 1.0);
        }
        let layer = Layer::new(eye, vec![0.0; p], Activation::Identity).unwrap();
        Network::new(vec![layer], w, b, rho).unwrap()
    }

    fn square_data() -> LabeledDataset {
        let x = Matrix::from_rows(&[
            vec![-2.0, -2.0],
            vec![2.0, 2.0],
            vec![0.0, 1.0],
            vec![-1.0, 0.0],
        ])
        .unwrap();
        LabeledDataset::new("sq", x, vec![N, A, N, A]).unwrap()
    }

    #[test]
    fn grid_shape_and_minimum_at_center() {
        let net = identity_net(vec![2.0, 0.0], 0.0, 1.0);
        let g = export_boundary(&net, &square_data(), 41, 0.0).unwrap();
        assert_eq!(g.space, GridSpace::Representation);
        assert_eq!(g.scores.len(), 41 * 41);
        assert_eq!(g.xs.len(), 41);
        // center (-1, 0) is on the grid: x from -2..2 step 0.1, y likewise
        let (imin, _) = g
            .scores
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let (ix, iy) = (imin % 41, imin / 41);
        assert!((g.xs[ix] + 1.0).abs() < 1e-9);
        assert!(g.ys[iy].abs() < 1e-9);
    }

    #[test]
    fn zero_level_on_decision_circle() {
        let net = identity_net(vec![2.0, 0.0], 0.0, 3.0);
        let g = export_boundary(&net, &square_data(), 101, 0.1).unwrap();
        let t = g.decision_radius;
        assert!((t - 1.5).abs() < 1e-12);
        for iy in 0..g.resolution {
            for ix in 0..g.resolution {
                let r = dist_sq(&[g.xs[ix], g.ys[iy]], &g.center).sqrt();
                let s = g.score_at(ix, iy);
                // sign of the field matches the circle test everywhere
                assert_eq!(s > 0.0, r > t, "cell ({ix},{iy})");
            }
        }
    }

    #[test]
    fn input_space_grid_uses_forward() {
        // p = 3, d = 2 → input-space grid
        let w1 = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]]).unwrap();
        let layer = Layer::new(w1, vec![0.0; 3], Activation::Identity).unwrap();
        let net = Network::new(vec![layer], vec![2.0, 0.0, 0.0], 0.0, 1.0).unwrap();
        let g = export_boundary(&net, &square_data(), 5, 0.0).unwrap();
        assert_eq!(g.space, GridSpace::Input);
        let s = imdad_score(&net, &[g.xs[2], g.ys[3]]).unwrap();
        assert_eq!(g.score_at(2, 3), s);
    }

    #[test]
    fn unsupported_dimensions() {
        let w1 = Matrix::zeros(3, 3);
        let layer = Layer::new(w1, vec![0.0; 3], Activation::Identity).unwrap();
        let net = Network::new(vec![layer], vec![2.0, 0.0, 0.0], 0.0, 1.0).unwrap();
        let x = Matrix::zeros(2, 3);
        let ds = LabeledDataset::new("d3", x, vec![N, A]).unwrap();
        assert!(matches!(
            export_boundary(&net, &ds, 10, 0.1),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn histogram_constant_and_mass() {
        let h = distance_histogram(&[0.5; 6], &[N, N, N, A, A, N], 1.0, 2.0, "e1").unwrap();
        assert_eq!(h.normal_counts.iter().filter(|c| **c > 0).count(), 1);
        assert_eq!(h.normal_counts.iter().sum::<usize>(), 4);
        assert_eq!(h.abnormal_counts.iter().sum::<usize>(), 2);

        let d: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let l: Vec<Label> = (0..50).map(|i| if i < 30 { N } else { A }).collect();
        let h = distance_histogram(&d, &l, 1.05, 3.33, "e2").unwrap();
        assert_eq!(h.normal_counts.iter().sum::<usize>(), 30);
        assert_eq!(h.abnormal_counts.iter().sum::<usize>(), 20);
        assert!(h.edges.contains(&3.33));
        // abnormal distances 3.0..4.9: those ≥ 3.33 are 3.4..4.9 → 16
        assert_eq!(h.abnormal_beyond_outer(), 16);
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("epoch,bin_lo"));
    }
}
