//! Exact discrete optimal transport with {0, 1} cell costs and forbidden
//! cells, used as ground truth for the closed-form bounds.

mod flow;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::distributions::MarginalDistribution;
use crate::error::{Error, Result};
use crate::shape::ShapeContext;
use flow::{FlowGraph, INF_CAP};

/// Integer units per unit of probability mass.
pub const MASS_SCALE: i64 = 1_000_000_000;
const CMP_TOL: f64 = 1e-12;

/// Why a masked transport problem has no feasible coupling.
#[derive(Debug, Clone, PartialEq)]
pub enum Certificate {
    /// Treated mass at or below `threshold` exceeds untreated mass there.
    Dominance { threshold: f64, mass1: f64, mass0: f64 },
    /// The listed untreated cells can only reach the listed treated cells,
    /// which carry less mass.
    HallViolation {
        rows: Vec<usize>,
        cols: Vec<usize>,
        row_mass: f64,
        col_mass: f64,
    },
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Certificate::Dominance { threshold, mass1, mass0 } => write!(
                f,
                "dominance fails at t = {threshold}: treated mass {mass1:.6} at or below t exceeds untreated mass {mass0:.6}"
            ),
            Certificate::HallViolation {
                rows,
                cols,
                row_mass,
                col_mass,
            } => write!(
                f,
                "{} untreated cells carry mass {row_mass:.6} but reach only {} treated cells with mass {col_mass:.6}",
                rows.len(),
                cols.len()
            ),
        }
    }
}

/// Finitely supported distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMarginal {
    pub points: Vec<f64>,
    pub masses: Vec<f64>,
}

impl DiscreteMarginal {
    pub fn new(points: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("discrete marginal has no points"));
        }
        if points.len() != masses.len() {
            return Err(Error::ShapeMismatch("points and masses differ in length".into()));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::domain("support points must be strictly increasing"));
        }
        if masses.iter().any(|m| !(*m >= 0.0)) {
            return Err(Error::domain("masses must be nonnegative"));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::domain(format!("masses sum to {total}, not 1")));
        }
        Ok(DiscreteMarginal { points, masses })
    }

    /// Integer masses summing to exactly `MASS_SCALE`, rounded through the
    /// cumulative distribution so that stochastic ordering between two
    /// marginals survives the rounding.
    fn scaled(&self) -> Vec<i64> {
        let mut out = Vec::with_capacity(self.masses.len());
        let mut cum = 0.0;
        let mut prev = 0i64;
        let last = self.masses.len() - 1;
        for (i, m) in self.masses.iter().enumerate() {
            cum += m;
            let c = if i == last {
                MASS_SCALE
            } else {
                ((cum * MASS_SCALE as f64).round() as i64).clamp(prev, MASS_SCALE)
            };
            out.push(c - prev);
            prev = c;
        }
        out
    }

    pub fn cdf(&self, t: f64) -> f64 {
        let idx = self.points.partition_point(|p| *p <= t);
        self.masses[..idx].iter().sum()
    }
}

/// n equal cells on [lo, hi] with masses F(right) − F(left) placed at the
/// midpoints; tail mass is folded into the end cells.
pub fn discretize(f: &MarginalDistribution, n: usize, lo: f64, hi: f64) -> Result<DiscreteMarginal> {
    if n < 2 {
        return Err(Error::domain("discretization needs at least two cells"));
    }
    if !(lo < hi) {
        return Err(Error::domain(format!("empty discretization range [{lo}, {hi}]")));
    }
    let left_tail = f.cdf(lo);
    let right_tail = 1.0 - f.cdf(hi);
    let missing = left_tail + right_tail;
    if missing > 1e-4 {
        return Err(Error::Coverage { lo, hi, missing });
    }
    let width = (hi - lo) / n as f64;
    let edges: Vec<f64> = (0..=n).map(|i| lo + width * i as f64).collect();
    let cdf: Vec<f64> = edges.iter().map(|e| f.cdf(*e)).collect();
    let mut masses: Vec<f64> = cdf.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
    masses[0] += left_tail;
    masses[n - 1] += right_tail;
    let total: f64 = masses.iter().sum();
    for m in masses.iter_mut() {
        *m /= total;
    }
    let points = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    DiscreteMarginal::new(points, masses)
}

/// n atoms of mass 1/n at the quantiles (i + 0.5)/n; atoms that coincide
/// (step CDFs) are merged. The CDF error is at most 1/(2n) everywhere, and
/// first-order dominance between two inputs carries over atom by atom.
pub fn discretize_quantiles(f: &MarginalDistribution, n: usize) -> Result<DiscreteMarginal> {
    if n < 2 {
        return Err(Error::domain("discretization needs at least two cells"));
    }
    let mut points: Vec<f64> = Vec::with_capacity(n);
    let mut masses: Vec<f64> = Vec::with_capacity(n);
    for i in 0..n {
        let y = f.quantile((i as f64 + 0.5) / n as f64)?;
        match points.last() {
            Some(&last) if y <= last => *masses.last_mut().unwrap() += 1.0 / n as f64,
            _ => {
                points.push(y);
                masses.push(1.0 / n as f64);
            }
        }
    }
    let total: f64 = masses.iter().sum();
    masses.iter_mut().for_each(|m| *m /= total);
    DiscreteMarginal::new(points, masses)
}

/// Support restriction at the level of individual (y0, y1) cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SupportRegion {
    None,
    Mtr,
    Concave(ShapeContext),
    Convex(ShapeContext),
    /// Treated arm: y1 − y0 ≥ m_c; untreated arm: y1 − y0 < m_c.
    RoyArm { treated: bool, m_c: f64 },
}

impl SupportRegion {
    pub fn contains(&self, y0: f64, y1: f64) -> bool {
        match *self {
            SupportRegion::None => true,
            SupportRegion::Mtr => y1 >= y0 - CMP_TOL,
            SupportRegion::Concave(c) => {
                y1 >= y0 - CMP_TOL && y0 >= c.w - CMP_TOL && y1 <= c.s1() * y0 + (1.0 - c.s1()) * c.w + CMP_TOL
            }
            SupportRegion::Convex(c) => {
                y1 >= y0 - CMP_TOL && y0 >= c.w - CMP_TOL && y1 >= c.s1() * y0 + (1.0 - c.s1()) * c.w - CMP_TOL
            }
            SupportRegion::RoyArm { treated: true, m_c } => y1 - y0 >= m_c - CMP_TOL,
            SupportRegion::RoyArm { treated: false, m_c } => y1 - y0 < m_c - CMP_TOL,
        }
    }
}

/// Allowed cells of the points0 × points1 grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub rows: usize,
    pub cols: usize,
    pub allowed: Vec<bool>,
    pub region: SupportRegion,
}

impl Mask {
    pub fn is_allowed(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.cols + j]
    }
}

pub fn build_mask(points0: &[f64], points1: &[f64], region: SupportRegion) -> Mask {
    let mut allowed = Vec::with_capacity(points0.len() * points1.len());
    for &y0 in points0 {
        for &y1 in points1 {
            allowed.push(region.contains(y0, y1));
        }
    }
    Mask {
        rows: points0.len(),
        cols: points1.len(),
        allowed,
        region,
    }
}

/// Joint masses over points0 × points1 together with the mask they respect.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCoupling {
    pub mass: Vec<Vec<f64>>,
    pub mask: Mask,
}

impl DiscreteCoupling {
    /// Row sums, column sums and mask-zero conditions, within `tol`.
    pub fn verify(&self, mu0: &DiscreteMarginal, mu1: &DiscreteMarginal, tol: f64) -> bool {
        let rows_ok = self
            .mass
            .iter()
            .zip(&mu0.masses)
            .all(|(row, m)| (row.iter().sum::<f64>() - m).abs() <= tol);
        let cols_ok = (0..self.mask.cols).all(|j| {
            let s: f64 = self.mass.iter().map(|row| row[j]).sum();
            (s - mu1.masses[j]).abs() <= tol
        });
        let mask_ok = self.mass.iter().enumerate().all(|(i, row)| {
            row.iter()
                .enumerate()
                .all(|(j, m)| *m >= 0.0 && (self.mask.is_allowed(i, j) || *m == 0.0))
        });
        rows_ok && cols_ok && mask_ok
    }
}

/// Outcome of a feasibility check.
#[derive(Debug, Clone, PartialEq)]
pub struct Feasibility {
    pub feasible: bool,
    pub certificate: Option<Certificate>,
}

struct Network {
    graph: FlowGraph,
    source: usize,
    sink: usize,
    cell_arcs: Vec<(usize, usize, usize)>,
}

fn network(mu0: &DiscreteMarginal, mu1: &DiscreteMarginal, mask: &Mask, cost: impl Fn(f64, f64) -> i64) -> Result<Network> {
    if mask.rows != mu0.points.len() || mask.cols != mu1.points.len() {
        return Err(Error::ShapeMismatch(format!(
            "mask is {}×{} but marginals have {} and {} points",
            mask.rows,
            mask.cols,
            mu0.points.len(),
            mu1.points.len()
        )));
    }
    let (n0, n1) = (mask.rows, mask.cols);
    let source = n0 + n1;
    let sink = source + 1;
    let mut graph = FlowGraph::new(n0 + n1 + 2);
    for (i, a) in mu0.scaled().into_iter().enumerate() {
        graph.add_arc(source, i, a, 0);
    }
    for (j, b) in mu1.scaled().into_iter().enumerate() {
        graph.add_arc(n0 + j, sink, b, 0);
    }
    let mut cell_arcs = Vec::new();
    for i in 0..n0 {
        for j in 0..n1 {
            if mask.is_allowed(i, j) {
                let id = graph.add_arc(i, n0 + j, INF_CAP, cost(mu0.points[i], mu1.points[j]));
                cell_arcs.push((i, j, id));
            }
        }
    }
    Ok(Network {
        graph,
        source,
        sink,
        cell_arcs,
    })
}

fn certificate(mu0: &DiscreteMarginal, mu1: &DiscreteMarginal, mask: &Mask, net: &Network) -> Certificate {
    if mask.region == SupportRegion::Mtr {
        let mut thresholds: Vec<f64> = mu0.points.iter().chain(&mu1.points).cloned().collect();
        thresholds.sort_by(f64::total_cmp);
        let mut worst: Option<(f64, f64, f64)> = None;
        for t in thresholds {
            let (m1, m0) = (mu1.cdf(t), mu0.cdf(t));
            if m1 - m0 > worst.map_or(0.0, |w| w.1 - w.2) {
                worst = Some((t, m1, m0));
            }
        }
        if let Some((threshold, mass1, mass0)) = worst {
            return Certificate::Dominance { threshold, mass1, mass0 };
        }
    }
    let seen = net.graph.reachable(net.source);
    let rows: Vec<usize> = (0..mask.rows).filter(|&i| seen[i]).collect();
    let cols: Vec<usize> = (0..mask.cols).filter(|&j| seen[mask.rows + j]).collect();
    Certificate::HallViolation {
        row_mass: rows.iter().map(|&i| mu0.masses[i]).sum(),
        col_mass: cols.iter().map(|&j| mu1.masses[j]).sum(),
        rows,
        cols,
    }
}

/// Whether some coupling of `mu0` and `mu1` puts all its mass on allowed
/// cells (a max-flow of full value on the allowed bipartite graph).
pub fn check_feasibility(mu0: &DiscreteMarginal, mu1: &DiscreteMarginal, mask: &Mask) -> Result<Feasibility> {
    let mut net = network(mu0, mu1, mask, |_, _| 0)?;
    let (flow, _) = net.graph.min_cost_flow(net.source, net.sink, MASS_SCALE);
    if flow == MASS_SCALE {
        Ok(Feasibility {
            feasible: true,
            certificate: None,
        })
    } else {
        Ok(Feasibility {
            feasible: false,
            certificate: Some(certificate(mu0, mu1, mask, &net)),
        })
    }
}

/// Which extreme of Pr(Y1 − Y0 ≤ δ) to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// min Σ π · 1{y1 − y0 < δ}
    MinBelow,
    /// 1 − min Σ π · 1{y1 − y0 > δ}
    MaxBelow,
}

/// Exact optimum of the masked transport problem with 0/1 costs.
pub fn solve_transport_lp(
    mu0: &DiscreteMarginal,
    mu1: &DiscreteMarginal,
    mask: &Mask,
    delta: f64,
    direction: Direction,
) -> Result<(f64, DiscreteCoupling)> {
    let cost = move |y0: f64, y1: f64| -> i64 {
        let d = y1 - y0;
        let hit = match direction {
            Direction::MinBelow => d < delta - CMP_TOL,
            Direction::MaxBelow => d > delta + CMP_TOL,
        };
        i64::from(hit)
    };
    let mut net = network(mu0, mu1, mask, cost)?;
    let (flow, total_cost) = net.graph.min_cost_flow(net.source, net.sink, MASS_SCALE);
    if flow < MASS_SCALE {
        return Err(Error::Infeasible(certificate(mu0, mu1, mask, &net)));
    }
    let mut mass = vec![vec![0.0; mask.cols]; mask.rows];
    for &(i, j, id) in &net.cell_arcs {
        mass[i][j] = net.graph.flow(id) as f64 / MASS_SCALE as f64;
    }
    let share = total_cost as f64 / MASS_SCALE as f64;
    let value = match direction {
        Direction::MinBelow => share,
        Direction::MaxBelow => 1.0 - share,
    };
    Ok((
        value,
        DiscreteCoupling {
            mass,
            mask: mask.clone(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point(a: f64, b: f64) -> DiscreteMarginal {
        DiscreteMarginal::new(vec![a, b], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn discretize_examples() {
        let u = MarginalDistribution::uniform(0.0, 1.0).unwrap();
        let d = discretize(&u, 2, 0.0, 1.0).unwrap();
        assert_eq!(d.points, vec![0.25, 0.75]);
        assert!((d.masses[0] - 0.5).abs() < 1e-15 && (d.masses[1] - 0.5).abs() < 1e-15);

        let n = MarginalDistribution::normal(0.0, 1.0).unwrap();
        let d = discretize(&n, 4, -4.0, 4.0).unwrap();
        assert!((d.masses[0] - d.masses[3]).abs() < 1e-12);
        assert!((d.masses[1] - d.masses[2]).abs() < 1e-12);

        // [0, 10] leaves 1.6e-3 of χ²(1) mass uncovered, above the 1e-4 limit.
        let chi = MarginalDistribution::chi_square(1.0).unwrap();
        assert!(matches!(discretize(&chi, 100, 0.0, 10.0), Err(Error::Coverage { .. })));
        let d = discretize(&chi, 100, 0.0, 20.0).unwrap();
        assert!((d.masses.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn quantile_discretization() {
        let u = MarginalDistribution::uniform(0.0, 1.0).unwrap();
        let d = discretize_quantiles(&u, 4).unwrap();
        assert_eq!(d.points, vec![0.125, 0.375, 0.625, 0.875]);
        let step = MarginalDistribution::step_cdf(vec![1.0, 2.0], vec![0.5, 1.0]).unwrap();
        let d = discretize_quantiles(&step, 10).unwrap();
        assert_eq!(d.points, vec![1.0, 2.0]);
        assert!((d.masses[0] - 0.5).abs() < 1e-12);
        let n = MarginalDistribution::normal(0.0, 1.0).unwrap();
        let d = discretize_quantiles(&n, 200).unwrap();
        for t in [-1.3, 0.0, 0.4, 2.0] {
            assert!((d.cdf(t) - n.cdf(t)).abs() <= 0.5 / 200.0 + 1e-12);
        }
    }

    #[test]
    fn scaled_masses_are_exact_and_ordered() {
        let a = DiscreteMarginal::new(vec![0.0, 1.0, 2.0], vec![0.1, 0.2, 0.7]).unwrap();
        let s = a.scaled();
        assert_eq!(s.iter().sum::<i64>(), MASS_SCALE);
        assert_eq!(s, vec![100_000_000, 200_000_000, 700_000_000]);
    }

    #[test]
    fn mask_examples() {
        let m = build_mask(&[0.0, 1.0], &[0.0, 1.0], SupportRegion::Mtr);
        assert_eq!(m.allowed, vec![true, true, false, true]);
        let m = build_mask(&[0.0, 1.0], &[0.0, 1.0], SupportRegion::None);
        assert!(m.allowed.iter().all(|a| *a));
        let ctx = ShapeContext::new(0.0, 0.0, 1.0, 2.0).unwrap();
        assert!(!SupportRegion::Concave(ctx).contains(1.0, 3.0));
        assert!(SupportRegion::Concave(ctx).contains(1.0, 1.5));
        assert!(SupportRegion::Convex(ctx).contains(1.0, 3.0));
    }

    #[test]
    fn feasibility_examples() {
        let mu = two_point(0.0, 1.0);
        let m = build_mask(&mu.points, &mu.points, SupportRegion::Mtr);
        assert!(check_feasibility(&mu, &mu, &m).unwrap().feasible);

        let mu0 = two_point(0.5, 1.5);
        let mu1 = two_point(0.0, 1.0);
        let m = build_mask(&mu0.points, &mu1.points, SupportRegion::Mtr);
        let f = check_feasibility(&mu0, &mu1, &m).unwrap();
        assert!(!f.feasible);
        match f.certificate.unwrap() {
            Certificate::Dominance { threshold, mass1, mass0 } => {
                assert_eq!(threshold, 0.0);
                assert!((mass1 - 0.5).abs() < 1e-12 && mass0 == 0.0);
            }
            other => panic!("unexpected certificate {other}"),
        }
        let m = build_mask(&mu0.points, &mu1.points, SupportRegion::None);
        assert!(check_feasibility(&mu0, &mu1, &m).unwrap().feasible);
    }

    #[test]
    fn lp_examples() {
        let p0 = DiscreteMarginal::new(vec![0.0], vec![1.0]).unwrap();
        let p1 = DiscreteMarginal::new(vec![1.0], vec![1.0]).unwrap();
        let m = build_mask(&p0.points, &p1.points, SupportRegion::None);
        assert_eq!(solve_transport_lp(&p0, &p1, &m, 0.5, Direction::MinBelow).unwrap().0, 0.0);

        let mu0 = two_point(0.0, 1.0);
        let mu1 = two_point(0.5, 1.5);
        let m = build_mask(&mu0.points, &mu1.points, SupportRegion::Mtr);
        let (lo, c) = solve_transport_lp(&mu0, &mu1, &m, 0.6, Direction::MinBelow).unwrap();
        let (hi, _) = solve_transport_lp(&mu0, &mu1, &m, 0.6, Direction::MaxBelow).unwrap();
        assert_eq!((lo, hi), (1.0, 1.0));
        assert!(c.verify(&mu0, &mu1, 1e-8));

        let m = build_mask(&mu0.points, &mu1.points, SupportRegion::None);
        let (lo, c) = solve_transport_lp(&mu0, &mu1, &m, 0.6, Direction::MinBelow).unwrap();
        assert!((lo - 0.5).abs() < 1e-12);
        assert!(c.verify(&mu0, &mu1, 1e-8));
        assert!((c.mass[0][1] - 0.5).abs() < 1e-9 && (c.mass[1][0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn infeasible_solve_reports_certificate() {
        let mu0 = two_point(0.5, 1.5);
        let mu1 = two_point(0.0, 1.0);
        let m = build_mask(&mu0.points, &mu1.points, SupportRegion::Mtr);
        assert!(matches!(
            solve_transport_lp(&mu0, &mu1, &m, 0.0, Direction::MinBelow),
            Err(Error::Infeasible(Certificate::Dominance { .. }))
        ));
    }
}
