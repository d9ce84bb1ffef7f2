//! Exact transport quantities: closed-form 1D Wasserstein, exact assignment
//! Wasserstein between equal-size clouds, Chamfer discrepancy and the
//! Wasserstein distance along a single fixed direction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::PointCloud;
use crate::sphere::UnitDirection;

/// Largest cloud size accepted by [`exact_wasserstein`].
pub const EXACT_MAX_POINTS: usize = 256;

/// Order `p >= 1` of a Wasserstein distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WassersteinOrder(f64);

impl WassersteinOrder {
    pub fn new(p: f64) -> Result<Self> {
        if !(p.is_finite() && p >= 1.0) {
            return Err(Error::invalid(format!("Wasserstein order must be finite and >= 1, got {p}")));
        }
        Ok(Self(p))
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// `|t|^p`, exact for `p = 1, 2`.
    pub(crate) fn power(self, t: f64) -> f64 {
        let a = t.abs();
        if self.0 == 1.0 {
            a
        } else if self.0 == 2.0 {
            a * a
        } else {
            a.powf(self.0)
        }
    }

    pub(crate) fn root(self, s: f64) -> f64 {
        if self.0 == 1.0 {
            s
        } else if self.0 == 2.0 {
            s.sqrt()
        } else {
            s.powf(1.0 / self.0)
        }
    }
}

impl Default for WassersteinOrder {
    fn default() -> Self {
        Self(2.0)
    }
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Mean of `|x_(i) - y_(i)|^p` over sorted order statistics (the p-th power
/// of the 1D Wasserstein distance between two uniform measures).
pub fn wasserstein_1d_pow(xs: &[f64], ys: &[f64], p: WassersteinOrder) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::shape("wasserstein_1d", format!("{} vs {} points", xs.len(), ys.len())));
    }
    if xs.is_empty() {
        return Err(Error::invalid("wasserstein_1d on empty input"));
    }
    let (sx, sy) = (sorted(xs), sorted(ys));
    let total: f64 = sx.iter().zip(&sy).map(|(a, b)| p.power(a - b)).sum();
    Ok(total / xs.len() as f64)
}

pub fn wasserstein_1d(xs: &[f64], ys: &[f64], p: WassersteinOrder) -> Result<f64> {
    Ok(p.root(wasserstein_1d_pow(xs, ys, p)?))
}

fn check_pair(x: &PointCloud, y: &PointCloud) -> Result<()> {
    if x.m() != y.m() || x.d() != y.d() {
        return Err(Error::shape(
            "cloud pair",
            format!("{}x{} vs {}x{}", x.m(), x.d(), y.m(), y.d()),
        ));
    }
    Ok(())
}

fn ground_cost(a: &[f64], b: &[f64], p: WassersteinOrder) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum();
    if p.get() == 2.0 {
        sq
    } else {
        sq.sqrt().powf(p.get())
    }
}

/// Minimum-cost perfect matching on a square cost matrix (row-major, `n x n`).
///
/// Shortest augmenting path with dual potentials, `O(n^3)`. Returns
/// `assignment[row] = column`.
pub fn min_cost_assignment(cost: &[f64], n: usize) -> Result<Vec<usize>> {
    if cost.len() != n * n {
        return Err(Error::shape("assignment", format!("{} entries for n={}", cost.len(), n)));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("assignment cost"));
    }
    // 1-based indexing; column 0 is a virtual start column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[col_owner[j] - 1] = j - 1;
    }
    Ok(assignment)
}

/// Optimal matching between equal-size clouds under `||x - y||^p`; returns the
/// p-th power of the distance and `matching[i] = j`.
pub fn exact_assignment(x: &PointCloud, y: &PointCloud, p: WassersteinOrder) -> Result<(f64, Vec<usize>)> {
    check_pair(x, y)?;
    let m = x.m();
    if m > EXACT_MAX_POINTS {
        return Err(Error::invalid(format!(
            "exact Wasserstein limited to m <= {EXACT_MAX_POINTS}, got {m}"
        )));
    }
    let mut cost = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            cost.push(ground_cost(x.row(i), y.row(j), p));
        }
    }
    let matching = min_cost_assignment(&cost, m)?;
    let total: f64 = matching.iter().enumerate().map(|(i, &j)| cost[i * m + j]).sum();
    Ok((total / m as f64, matching))
}

/// Exact p-Wasserstein distance between two uniform equal-size clouds.
pub fn exact_wasserstein(x: &PointCloud, y: &PointCloud, p: WassersteinOrder) -> Result<f64> {
    let (pow, _) = exact_assignment(x, y, p)?;
    Ok(p.root(pow))
}

/// Symmetric Chamfer discrepancy with squared Euclidean ground cost. Sizes may differ.
pub fn chamfer(x: &PointCloud, y: &PointCloud) -> Result<f64> {
    if x.d() != y.d() {
        return Err(Error::shape("chamfer", format!("d={} vs d={}", x.d(), y.d())));
    }
    let nearest = |a: &PointCloud, b: &PointCloud| -> f64 {
        let total: f64 = (0..a.m())
            .map(|i| {
                (0..b.m())
                    .map(|j| ground_cost(a.row(i), b.row(j), WassersteinOrder(2.0)))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum();
        total / a.m() as f64
    };
    Ok(nearest(x, y) + nearest(y, x))
}

pub fn project(cloud: &PointCloud, theta: &[f64]) -> Vec<f64> {
    (0..cloud.m())
        .map(|i| cloud.row(i).iter().zip(theta).map(|(a, b)| a * b).sum())
        .collect()
}

/// Wasserstein distance between the projections of two clouds onto `theta`.
pub fn projected_wasserstein(
    x: &PointCloud,
    y: &PointCloud,
    theta: &UnitDirection,
    p: WassersteinOrder,
) -> Result<f64> {
    check_pair(x, y)?;
    if theta.dim() != x.d() {
        return Err(Error::shape("projected_wasserstein", format!("theta dim {} for d={}", theta.dim(), x.d())));
    }
    wasserstein_1d(&project(x, theta.as_slice()), &project(y, theta.as_slice()), p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two() -> WassersteinOrder {
        WassersteinOrder::default()
    }

    fn cloud(rows: &[&[f64]]) -> PointCloud {
        PointCloud::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn one_dimensional_examples() {
        assert_eq!(wasserstein_1d(&[0.0, 1.0], &[0.0, 1.0], two()).unwrap(), 0.0);
        let one = WassersteinOrder::new(1.0).unwrap();
        assert_eq!(wasserstein_1d(&[0.0], &[5.0], one).unwrap(), 5.0);
        assert_eq!(wasserstein_1d(&[0.0, 2.0], &[3.0, 1.0], two()).unwrap(), 1.0);
    }

    #[test]
    fn one_dimensional_errors() {
        assert!(wasserstein_1d(&[0.0], &[0.0, 1.0], two()).is_err());
        assert!(wasserstein_1d(&[], &[], two()).is_err());
        assert!(WassersteinOrder::new(0.5).is_err());
    }

    #[test]
    fn exact_examples() {
        let x = cloud(&[&[0.0, 0.0]]);
        let y = cloud(&[&[3.0, 4.0]]);
        assert_eq!(exact_wasserstein(&x, &y, two()).unwrap(), 5.0);
        assert_eq!(exact_wasserstein(&x, &x, two()).unwrap(), 0.0);
    }

    #[test]
    fn exact_rejects_oversized_and_mismatched() {
        let big = PointCloud::new(crate::autodiff::Tensor::zeros(&[257, 2])).unwrap();
        assert!(exact_wasserstein(&big, &big, two()).is_err());
        let a = cloud(&[&[0.0, 0.0]]);
        let b = cloud(&[&[0.0, 0.0], &[1.0, 1.0]]);
        assert!(exact_wasserstein(&a, &b, two()).is_err());
    }

    #[test]
    fn assignment_small_case() {
        // Optimal: 0->1, 1->0, 2->2 with cost 1 + 2 + 2.
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = min_cost_assignment(&cost, 3).unwrap();
        let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[i * 3 + j]).sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn chamfer_examples() {
        let x = cloud(&[&[0.0, 0.0]]);
        let y = cloud(&[&[1.0, 0.0]]);
        assert_eq!(chamfer(&x, &x).unwrap(), 0.0);
        assert_eq!(chamfer(&x, &y).unwrap(), 2.0);
        let x2 = cloud(&[&[0.0, 0.0], &[1.0, 0.0]]);
        assert_eq!(chamfer(&x2, &x).unwrap(), 0.5);
        assert!(chamfer(&x, &cloud(&[&[0.0, 0.0, 0.0]])).is_err());
    }

    #[test]
    fn projected_examples() {
        let x = cloud(&[&[0.0, 0.0]]);
        let y = cloud(&[&[3.0, 4.0]]);
        let along = UnitDirection::new(vec![0.6, 0.8]).unwrap();
        let v = projected_wasserstein(&x, &y, &along, two()).unwrap();
        assert!((v - 5.0).abs() < 1e-12);
        let ortho = UnitDirection::new(vec![0.8, -0.6]).unwrap();
        let v = projected_wasserstein(&x, &y, &ortho, two()).unwrap();
        assert!(v.abs() < 1e-12);
        assert_eq!(projected_wasserstein(&y, &y, &along, two()).unwrap(), 0.0);
    }
}
