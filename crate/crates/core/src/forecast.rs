//! Technology improvement forecasting: five-year log improvement rates from
//! historical cost/efficiency series, clustered into discrete joint
//! improvement distributions.

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ForecastError {
    #[error("series {0}: no computable improvement points")]
    NoPoints(String),
    #[error("series row {line}: {msg}")]
    BadRow { line: usize, msg: String },
    #[error("cannot form {k} clusters from {n} points")]
    TooFewPoints { k: usize, n: usize },
    #[error("series {series}, year {year}: nonpositive value")]
    NonPositiveValue { series: String, year: i32 },
}

/// A historical efficiency/cost series; either column may have gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechSeries {
    pub technology: String,
    pub rows: Vec<SeriesRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub year: i32,
    pub efficiency: Option<f64>,
    pub cost: Option<f64>,
}

impl TechSeries {
    /// Parse a `year,efficiency,cost` CSV with empty cells for gaps.
    pub fn from_csv_str(technology: &str, text: &str) -> Result<TechSeries, ForecastError> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() < 3 {
                return Err(ForecastError::BadRow {
                    line: i + 1,
                    msg: "expected year,efficiency,cost".into(),
                });
            }
            let year: i32 = cols[0].parse().map_err(|_| ForecastError::BadRow {
                line: i + 1,
                msg: format!("bad year {:?}", cols[0]),
            })?;
            let parse_opt = |s: &str| -> Result<Option<f64>, ForecastError> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| ForecastError::BadRow {
                        line: i + 1,
                        msg: format!("bad value {s:?}"),
                    })
                }
            };
            rows.push(SeriesRow {
                year,
                efficiency: parse_opt(cols[1])?,
                cost: parse_opt(cols[2])?,
            });
        }
        Ok(TechSeries {
            technology: technology.to_string(),
            rows,
        })
    }

    fn value_at(&self, year: i32) -> Option<SeriesRow> {
        self.rows.iter().find(|r| r.year == year).copied()
    }
}

/// Bundled battery series (energy density Wh/kg, cell cost USD/kWh).
pub fn beb_battery_series() -> TechSeries {
    TechSeries::from_csv_str("BEB-battery", include_str!("../data/beb_battery.csv"))
        .expect("bundled battery series parses")
}

/// Bundled fuel-cell series (system efficiency, system cost USD/kW).
pub fn hfcb_fuelcell_series() -> TechSeries {
    TechSeries::from_csv_str("HFCB-fuelcell", include_str!("../data/hfcb_fuelcell.csv"))
        .expect("bundled fuel-cell series parses")
}

/// One year's efficiency and cost improvement rates against `horizon` years
/// earlier: `eff = ln(e_t/e_{t-h})`, `cost = -ln(c_t/c_{t-h})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImprovementPoint {
    pub year: i32,
    pub eff_rate: f64,
    pub cost_rate: f64,
}

/// One branch of a discrete joint improvement distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub cost_multiplier: f64,
    pub eff_multiplier: f64,
    pub probability: f64,
    /// Number of historical points in the branch's cluster.
    pub count: usize,
}

/// Joint discrete distribution of per-stage improvement multipliers,
/// branches ordered fastest cost improvement first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementDistribution {
    pub technology: String,
    pub branches: Vec<Branch>,
}

impl ImprovementDistribution {
    /// Distribution of a technology that does not change.
    pub fn static_tech(technology: &str) -> ImprovementDistribution {
        ImprovementDistribution {
            technology: technology.to_string(),
            branches: vec![Branch {
                cost_multiplier: 1.0,
                eff_multiplier: 1.0,
                probability: 1.0,
                count: 0,
            }],
        }
    }

    /// Build from explicit branch values, fastest cost improvement first.
    pub fn from_branches(technology: &str, branches: Vec<Branch>) -> ImprovementDistribution {
        ImprovementDistribution {
            technology: technology.to_string(),
            branches,
        }
    }

    pub fn branching(&self) -> usize {
        self.branches.len()
    }
}

/// Compute improvement rates for every year whose `horizon`-earlier values
/// both exist; years with gaps at either endpoint are skipped.
pub fn improvement_rates(
    series: &TechSeries,
    horizon: i32,
) -> Result<Vec<ImprovementPoint>, ForecastError> {
    let mut points = Vec::new();
    for row in &series.rows {
        let (Some(eff), Some(cost)) = (row.efficiency, row.cost) else {
            continue;
        };
        let Some(prev) = series.value_at(row.year - horizon) else {
            continue;
        };
        let (Some(eff0), Some(cost0)) = (prev.efficiency, prev.cost) else {
            continue;
        };
        for (v, y) in [
            (eff, row.year),
            (cost, row.year),
            (eff0, prev.year),
            (cost0, prev.year),
        ] {
            if v <= 0.0 {
                return Err(ForecastError::NonPositiveValue {
                    series: series.technology.clone(),
                    year: y,
                });
            }
        }
        points.push(ImprovementPoint {
            year: row.year,
            eff_rate: (eff / eff0).ln(),
            cost_rate: -(cost / cost0).ln(),
        });
    }
    if points.is_empty() {
        return Err(ForecastError::NoPoints(series.technology.clone()));
    }
    Ok(points)
}

type Point = (f64, f64);

fn dist2(a: Point, b: Point) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    dx * dx + dy * dy
}

fn lex_cmp(a: &Point, b: &Point) -> std::cmp::Ordering {
    a.0.partial_cmp(&b.0)
        .unwrap()
        .then(a.1.partial_cmp(&b.1).unwrap())
}

/// Farthest-point seeds starting from a chosen point; ties pick the
/// lexicographically smallest candidate.
fn farthest_seeds(points: &[Point], start: Point, k: usize) -> Vec<Point> {
    let mut seeds = vec![start];
    let mut ordered: Vec<Point> = points.to_vec();
    ordered.sort_by(lex_cmp);
    while seeds.len() < k {
        let mut best = ordered[0];
        let mut best_d = -1.0;
        for &p in &ordered {
            let d = seeds
                .iter()
                .map(|&s| dist2(p, s))
                .fold(f64::INFINITY, f64::min);
            if d > best_d + 1e-15 {
                best_d = d;
                best = p;
            }
        }
        seeds.push(best);
    }
    seeds
}

fn lloyd(points: &[Point], mut centers: Vec<Point>) -> (Vec<Point>, Vec<usize>, f64) {
    let k = centers.len();
    let mut assign = vec![0usize; points.len()];
    for _ in 0..300 {
        for (i, &p) in points.iter().enumerate() {
            assign[i] = (0..k)
                .min_by(|&a, &b| {
                    dist2(p, centers[a])
                        .partial_cmp(&dist2(p, centers[b]))
                        .unwrap()
                })
                .unwrap();
        }
        let mut next = Vec::with_capacity(k);
        for j in 0..k {
            let members: Vec<Point> = points
                .iter()
                .enumerate()
                .filter(|(i, _)| assign[*i] == j)
                .map(|(_, &p)| p)
                .collect();
            if members.is_empty() {
                // Re-seed an empty cluster on the point farthest from its
                // assigned center.
                let far = points
                    .iter()
                    .enumerate()
                    .max_by(|(ia, &a), (ib, &b)| {
                        dist2(a, centers[assign[*ia]])
                            .partial_cmp(&dist2(b, centers[assign[*ib]]))
                            .unwrap()
                    })
                    .map(|(_, &p)| p)
                    .unwrap();
                next.push(far);
            } else {
                let n = members.len() as f64;
                next.push((
                    members.iter().map(|p| p.0).sum::<f64>() / n,
                    members.iter().map(|p| p.1).sum::<f64>() / n,
                ));
            }
        }
        if next == centers {
            break;
        }
        centers = next;
    }
    let sse = points
        .iter()
        .enumerate()
        .map(|(i, &p)| dist2(p, centers[assign[i]]))
        .sum();
    (centers, assign, sse)
}

/// Cluster improvement points into `k` branches by k-means on the raw
/// (eff_rate, cost_rate) plane.
///
/// Seeding is deterministic: farthest-point completion restarted from every
/// point in lexicographic order, keeping the lowest within-cluster squared
/// error. Multipliers are the exponentials of the cluster centers and each
/// branch's probability is its cluster fraction.
pub fn cluster_improvements(
    points: &[ImprovementPoint],
    k: usize,
    technology: &str,
) -> Result<ImprovementDistribution, ForecastError> {
    if k == 0 || k > points.len() {
        return Err(ForecastError::TooFewPoints { k, n: points.len() });
    }
    let coords: Vec<Point> = points.iter().map(|p| (p.eff_rate, p.cost_rate)).collect();
    let mut starts: Vec<Point> = coords.clone();
    starts.sort_by(lex_cmp);
    starts.dedup();

    let mut best: Option<(Vec<Point>, Vec<usize>, f64)> = None;
    for &start in &starts {
        let seeds = farthest_seeds(&coords, start, k);
        let candidate = lloyd(&coords, seeds);
        let better = match &best {
            None => true,
            Some((_, _, sse)) => candidate.2 < sse - 1e-12,
        };
        if better {
            best = Some(candidate);
        }
    }
    let (centers, assign, _) = best.unwrap();

    let mut branches: Vec<Branch> = (0..k)
        .map(|j| {
            let count = assign.iter().filter(|&&a| a == j).count();
            Branch {
                cost_multiplier: (-centers[j].1).exp(),
                eff_multiplier: centers[j].0.exp(),
                probability: count as f64 / coords.len() as f64,
                count,
            }
        })
        .collect();
    // Fastest cost improvement first (F before S).
    branches.sort_by(|a, b| a.cost_multiplier.partial_cmp(&b.cost_multiplier).unwrap());
    Ok(ImprovementDistribution {
        technology: technology.to_string(),
        branches,
    })
}
