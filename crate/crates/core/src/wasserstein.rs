//! Wasserstein distances between equal-size empirical measures.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::dynamics::TrajectoryState;
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Largest cloud accepted by [`wp_exact_small`].
pub const MAX_EXACT_SAMPLES: usize = 512;

/// `m` equally weighted points in `k` dimensions, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    data: Vec<f64>,
    m: usize,
    k: usize,
}

impl EmpiricalMeasure {
    pub fn new(data: Vec<f64>, m: usize, k: usize) -> Result<Self> {
        if m == 0 || k == 0 {
            return Err(Error::Empty("empirical measure"));
        }
        if data.len() != m * k {
            return Err(Error::DimensionMismatch {
                expected: m * k,
                got: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("empirical measure"));
        }
        Ok(Self { data, m, k })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let k = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != k) {
            return Err(Error::invalid("points", "rows have different lengths"));
        }
        Self::new(points.iter().flatten().copied().collect(), points.len(), k)
    }

    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec(), values.len(), 1)
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            data: self.data.iter().map(|x| c * x).collect(),
            ..self.clone()
        }
    }

    fn project(&self, u: &[f64]) -> Vec<f64> {
        self.data
            .chunks_exact(self.k)
            .map(|x| x.iter().zip(u).map(|(a, b)| a * b).sum())
            .collect()
    }
}

fn check_pair(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<()> {
    if a.m != b.m {
        return Err(Error::invalid(
            "samples",
            format!("unequal sample counts {} and {}; resample upstream", a.m, b.m),
        ));
    }
    if a.k != b.k {
        return Err(Error::DimensionMismatch {
            expected: a.k,
            got: b.k,
        });
    }
    Ok(())
}

fn sorted_w1(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Exact `W₁` between two 1-D clouds via the sorted coupling.
pub fn w1_exact_1d(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    check_pair(a, b)?;
    if a.k != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: a.k,
        });
    }
    Ok(sorted_w1(a.data.clone(), b.data.clone()))
}

/// Minimum-cost perfect matching on a square cost matrix (row-major).
///
/// Shortest augmenting paths with row/column potentials, `O(m³)`.
/// Returns `assignment[row] = column`.
pub fn solve_assignment(cost: &[f64], m: usize) -> Vec<usize> {
    assert_eq!(cost.len(), m * m);
    // 1-based internally; index 0 is the virtual source column.
    let mut u = vec![0.0; m + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=m {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; m];
    for j in 1..=m {
        assignment[p[j] - 1] = j - 1;
    }
    assignment
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Exact `W_p` between equal-size clouds by optimal assignment.
pub fn wp_exact_small(a: &EmpiricalMeasure, b: &EmpiricalMeasure, p: f64) -> Result<f64> {
    check_pair(a, b)?;
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::invalid("p", format!("must be >= 1, got {p}")));
    }
    let m = a.m;
    if m > MAX_EXACT_SAMPLES {
        return Err(Error::TooLarge {
            what: "samples",
            got: m,
            limit: MAX_EXACT_SAMPLES,
        });
    }
    let powp = |d: f64| if p == 1.0 { d } else { d.powf(p) };
    let mut cost = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            cost[i * m + j] = powp(euclid(a.point(i), b.point(j)));
        }
    }
    let assignment = solve_assignment(&cost, m);
    let total: f64 = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i * m + j])
        .sum();
    let mean = total / m as f64;
    Ok(if p == 1.0 { mean } else { mean.powf(1.0 / p) })
}

/// Sliced `W₁`: mean over random unit directions of the 1-D `W₁` between
/// projections. Each projected distance is at most `W₁` (projection is
/// 1-Lipschitz), but this is a different quantity and is labelled as such
/// in outputs.
pub fn sliced_w1(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    projections: usize,
    stream: RngStream,
) -> Result<f64> {
    Ok(sliced_w1_detail(a, b, projections, stream)?.mean)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SlicedEstimate {
    pub mean: f64,
    /// Standard error over projection directions.
    pub std_err: f64,
    pub projections: usize,
}

pub fn sliced_w1_detail(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    projections: usize,
    stream: RngStream,
) -> Result<SlicedEstimate> {
    check_pair(a, b)?;
    if projections == 0 {
        return Err(Error::invalid("projections", "must be >= 1"));
    }
    if a.k == 1 {
        // every unit direction is ±1 and W₁ is invariant under x ↦ −x
        return Ok(SlicedEstimate {
            mean: sorted_w1(a.data.clone(), b.data.clone()),
            std_err: 0.0,
            projections,
        });
    }
    let mut rng = stream.rng();
    let mut u = vec![0.0; a.k];
    let values: Vec<f64> = (0..projections)
        .map(|_| {
            random_unit(&mut rng, &mut u);
            sorted_w1(a.project(&u), b.project(&u))
        })
        .collect();
    let (mean, std_err) = mean_and_std_err(&values);
    Ok(SlicedEstimate {
        mean,
        std_err,
        projections,
    })
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R, u: &mut [f64]) {
    loop {
        for x in u.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            u.iter_mut().for_each(|x| *x /= n);
            return;
        }
    }
}

pub(crate) fn mean_and_std_err(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CouplingEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub count: usize,
}

/// Mean distance between synchronously coupled final states; the cost of
/// one valid coupling, so an upper estimate of `W₁` up to Monte-Carlo error.
pub fn coupling_distance_bound(pairs: &[(TrajectoryState, TrajectoryState)]) -> Result<CouplingEstimate> {
    if pairs.is_empty() {
        return Err(Error::Empty("coupled pairs"));
    }
    let d: Vec<f64> = pairs.iter().map(|(a, b)| a.distance(b)).collect();
    let (mean, std_err) = mean_and_std_err(&d);
    Ok(CouplingEstimate {
        mean,
        std_err,
        count: pairs.len(),
    })
}
