//! Static resilience: the fraction `rho[x]` of `x`-node subsets from which
//! the object is decodable, the resulting availability curve under i.i.d.
//! node availability `p`,
//!
//! ```text
//! obj_up(p) = sum_{x=k..n} rho[x] * C(n,x) * p^x * (1-p)^(n-x)
//! ```
//!
//! and the repair download comparison against minimum-storage regenerating
//! codes.

use std::fmt::Write as _;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::gf2::Echelon;
use crate::repair::{plan_min_download, LiveSet, RepairError};
use crate::spread::SpreadLayout;
use crate::NodeId;

/// Default cap on `C(n, x)` for exhaustive enumeration.
pub const DEFAULT_BUDGET: u128 = 1 << 22;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ResilienceError {
    #[error("C({n},{x}) subsets exceed the enumeration budget {budget}; use sampling")]
    BudgetExceeded { n: usize, x: usize, budget: u128 },
    #[error("subset size {x} exceeds node count {n}")]
    InvalidSubsetSize { n: usize, x: usize },
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error("worker pool: {0}")]
    Workers(String),
    #[error(transparent)]
    Repair(#[from] RepairError),
}

/// `C(n, k)`, or `None` on overflow.
pub fn binomial(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhoMethod {
    Exhaustive,
    Sampled { samples: u64, seed: u64 },
    /// `rho[x] = 1` for `x >= k`: an MDS code with the same `n`, `k`.
    MdsReference,
}

/// `rho[x]` for `x = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoTable {
    pub n: usize,
    pub k: usize,
    pub deficient: Vec<u128>,
    pub total: Vec<u128>,
    pub rho: Vec<f64>,
    pub method: RhoMethod,
}

impl RhoTable {
    pub fn mds(n: usize, k: usize) -> Self {
        let total: Vec<u128> = (0..=n).map(|x| binomial(n, x).unwrap_or(u128::MAX)).collect();
        let deficient = (0..=n).map(|x| if x < k { total[x] } else { 0 }).collect();
        let rho = (0..=n).map(|x| if x < k { 0.0 } else { 1.0 }).collect();
        RhoTable { n, k, deficient, total, rho, method: RhoMethod::MdsReference }
    }

    /// `1 - rho[x]`, the probability `x` random nodes cannot rebuild the object.
    pub fn failure(&self, x: usize) -> f64 {
        1.0 - self.rho[x]
    }

    /// CSV with columns `x,deficient,total,rho`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,deficient,total,rho\n");
        for x in 0..=self.n {
            let _ = writeln!(out, "{x},{},{},{}", self.deficient[x], self.total[x], self.rho[x]);
        }
        out
    }
}

/// Per-node pieces as packed rows, for the enumeration hot loop.
fn node_rows(layout: &SpreadLayout) -> Vec<Vec<u32>> {
    layout.bases().iter().map(|b| b.iter().map(|v| v.bits()).collect()).collect()
}

fn with_node(ech: &Echelon, rows: &[u32]) -> Echelon {
    let mut next = ech.clone();
    for &r in rows {
        next.insert(r);
    }
    next
}

/// Counts full-rank subsets by size over all subsets whose smallest
/// element is at least `first`, extending the subset `size`/`ech`. Once a
/// prefix reaches full rank every extension of it is full rank, so those
/// are counted in closed form.
struct FullCounter<'a> {
    rows: &'a [Vec<u32>],
    dim: u32,
    max_size: usize,
    /// Only subsets of exactly `max_size` matter; skip prefixes that cannot reach it.
    exact: bool,
}

impl FullCounter<'_> {
    fn visit(&self, last: usize, size: usize, ech: &Echelon, full: &mut [u128]) {
        let n = self.rows.len();
        if ech.rank() == self.dim {
            let remaining = n - last - 1;
            for t in 0..=remaining.min(self.max_size - size) {
                full[size + t] += binomial(remaining, t).expect("within budget");
            }
            return;
        }
        if size == self.max_size {
            return;
        }
        for j in last + 1..n {
            if self.exact && n - j - 1 < self.max_size - size - 1 {
                break;
            }
            self.visit(j, size + 1, &with_node(ech, &self.rows[j]), full);
        }
    }

    /// Full-rank counts by subset size, split across `workers` by first element.
    fn count(&self, workers: usize) -> Result<Vec<u128>, ResilienceError> {
        let n = self.rows.len();
        let mut full = vec![0u128; self.max_size + 1];
        if self.dim == 0 {
            full[0] = 1;
        }
        let branch = |j: usize| {
            let mut f = vec![0u128; self.max_size + 1];
            let reachable = !self.exact || n - j >= self.max_size;
            if self.max_size >= 1 && reachable {
                self.visit(j, 1, &with_node(&Echelon::new(), &self.rows[j]), &mut f);
            }
            f
        };
        let parts: Vec<Vec<u128>> = if workers <= 1 {
            (0..n).map(branch).collect()
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| ResilienceError::Workers(e.to_string()))?;
            pool.install(|| (0..n).into_par_iter().map(branch).collect())
        };
        for p in parts {
            for (a, b) in full.iter_mut().zip(p) {
                *a += b;
            }
        }
        Ok(full)
    }
}

/// Exact count of `x`-subsets whose pooled pieces have rank below `dim`,
/// and `rho[x] = 1 - deficient / C(n, x)`.
pub fn rho_exhaustive(layout: &SpreadLayout, x: usize, budget: u128) -> Result<(u128, u128, f64), ResilienceError> {
    let n = layout.node_count();
    if x > n {
        return Err(ResilienceError::InvalidSubsetSize { n, x });
    }
    let total = binomial(n, x).filter(|&t| t <= budget).ok_or(ResilienceError::BudgetExceeded { n, x, budget })?;
    let rows = node_rows(layout);
    let counter = FullCounter { rows: &rows, dim: layout.params().dim, max_size: x, exact: true };
    let full = counter.count(1)?[x];
    let deficient = total - full;
    Ok((deficient, total, 1.0 - deficient as f64 / total as f64))
}

/// The whole table by exhaustive enumeration. Every `C(n, x)` must fit the budget.
pub fn rho_table_exhaustive(layout: &SpreadLayout, budget: u128, workers: usize) -> Result<RhoTable, ResilienceError> {
    let n = layout.node_count();
    let mut total = Vec::with_capacity(n + 1);
    for x in 0..=n {
        total.push(binomial(n, x).filter(|&t| t <= budget).ok_or(ResilienceError::BudgetExceeded { n, x, budget })?);
    }
    let rows = node_rows(layout);
    let counter = FullCounter { rows: &rows, dim: layout.params().dim, max_size: n, exact: false };
    let full = counter.count(workers)?;
    let deficient: Vec<u128> = total.iter().zip(&full).map(|(t, f)| t - f).collect();
    let rho = full.iter().zip(&total).map(|(&f, &t)| f as f64 / t as f64).collect();
    Ok(RhoTable { n, k: layout.params().k as usize, deficient, total, rho, method: RhoMethod::Exhaustive })
}

/// A sampled `rho[x]` with a 95% confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoEstimate {
    pub x: usize,
    pub samples: u64,
    pub deficient: u64,
    pub rho: f64,
    pub ci: (f64, f64),
}

const Z95: f64 = 1.959963984540054;

/// Normal-approximation interval for a proportion, switching to Wilson's
/// score interval when either count is below 5.
pub fn proportion_ci(successes: u64, trials: u64) -> (f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    if successes < 5 || trials - successes < 5 {
        let z2 = Z95 * Z95;
        let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
        let half = Z95 / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
        ((centre - half).max(0.0), (centre + half).min(1.0))
    } else {
        let half = Z95 * (p * (1.0 - p) / n).sqrt();
        ((p - half).max(0.0), (p + half).min(1.0))
    }
}

/// Monte Carlo `rho[x]` from `samples` uniform `x`-subsets; deterministic per seed.
pub fn rho_sampled(layout: &SpreadLayout, x: usize, samples: u64, seed: u64) -> Result<RhoEstimate, ResilienceError> {
    let n = layout.node_count();
    if x > n {
        return Err(ResilienceError::InvalidSubsetSize { n, x });
    }
    if samples == 0 {
        return Err(ResilienceError::NoSamples);
    }
    if x < layout.params().k as usize {
        return Ok(RhoEstimate { x, samples: 0, deficient: 0, rho: 0.0, ci: (0.0, 0.0) });
    }
    let rows = node_rows(layout);
    let dim = layout.params().dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut deficient = 0u64;
    for _ in 0..samples {
        let mut ech = Echelon::new();
        for i in index::sample(&mut rng, n, x) {
            for &r in &rows[i] {
                ech.insert(r);
            }
        }
        if ech.rank() < dim {
            deficient += 1;
        }
    }
    let ok = samples - deficient;
    Ok(RhoEstimate { x, samples, deficient, rho: ok as f64 / samples as f64, ci: proportion_ci(ok, samples) })
}

/// Sampled table; `rho[x]` is exact (0) for `x < k` and sampled above.
pub fn rho_table_sampled(layout: &SpreadLayout, samples: u64, seed: u64) -> Result<RhoTable, ResilienceError> {
    let n = layout.node_count();
    let mut deficient = Vec::with_capacity(n + 1);
    let mut total = Vec::with_capacity(n + 1);
    let mut rho = Vec::with_capacity(n + 1);
    for x in 0..=n {
        // distinct, reproducible stream per x
        let est = rho_sampled(layout, x, samples, seed.wrapping_add(x as u64))?;
        if est.samples == 0 {
            deficient.push(1);
            total.push(1);
        } else {
            deficient.push(est.deficient as u128);
            total.push(est.samples as u128);
        }
        rho.push(est.rho);
    }
    Ok(RhoTable { n, k: layout.params().k as usize, deficient, total, rho, method: RhoMethod::Sampled { samples, seed } })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AvailabilityPoint {
    pub p: f64,
    pub obj_up: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AvailabilityCurve {
    pub points: Vec<AvailabilityPoint>,
}

/// `{0, 0.01, ..., 1}`.
pub fn default_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for i in 1..=n {
        out[i] = out[i - 1] + (i as f64).ln();
    }
    out
}

/// `obj_up(p)` for each grid point, with binomial weights formed in the log domain.
pub fn availability(rho: &RhoTable, grid: &[f64]) -> AvailabilityCurve {
    let n = rho.n;
    let lf = ln_factorials(n);
    let points = grid
        .iter()
        .map(|&p| {
            let obj_up = if p <= 0.0 {
                rho.rho[0]
            } else if p >= 1.0 {
                rho.rho[n]
            } else {
                let (lp, lq) = (p.ln(), (-p).ln_1p());
                (0..=n)
                    .filter(|&x| rho.rho[x] > 0.0)
                    .map(|x| {
                        let lw = lf[n] - lf[x] - lf[n - x] + x as f64 * lp + (n - x) as f64 * lq;
                        rho.rho[x] * lw.exp()
                    })
                    .sum::<f64>()
                    .clamp(0.0, 1.0)
            };
            AvailabilityPoint { p, obj_up }
        })
        .collect();
    AvailabilityCurve { points }
}

/// CSV with columns `p,objup_psrc,objup_mds`; the curves must share a grid.
pub fn availability_csv(psrc: &AvailabilityCurve, mds: &AvailabilityCurve) -> String {
    let mut out = String::from("p,objup_psrc,objup_mds\n");
    for (a, b) in psrc.points.iter().zip(&mds.points) {
        let _ = writeln!(out, "{},{},{}", a.p, a.obj_up, b.obj_up);
    }
    out
}

/// Total repair download of a minimum-storage regenerating code,
/// `dim * d / (k * (d - k + 1))`, defined only for `d >= k`.
pub fn msr_download(dim: u32, k: u32, d: u32) -> Option<f64> {
    (d >= k && k > 0).then(|| (dim * d) as f64 / (k * (d - k + 1)) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthRow {
    pub d: usize,
    pub msr_units: Option<f64>,
    pub psrc_units: Option<usize>,
    pub psrc_optimal: bool,
}

/// Minimal repair download of `N_1` (all others live) next to the MSR figure, per degree.
pub fn compare_bandwidth(
    layout: &SpreadLayout,
    degrees: impl IntoIterator<Item = usize>,
) -> Result<Vec<BandwidthRow>, ResilienceError> {
    let p = layout.params();
    let failed = NodeId::from_index(0);
    let live = LiveSet::without(layout.node_count(), &[failed]);
    let mut rows = Vec::new();
    for d in degrees {
        let plan = match plan_min_download(layout, failed, d, &live) {
            Ok(plan) => Some(plan),
            Err(RepairError::InsufficientLiveNodes { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        rows.push(BandwidthRow {
            d,
            msr_units: msr_download(p.dim, p.k, d as u32),
            psrc_units: plan.as_ref().map(|p| p.download_units()),
            psrc_optimal: plan.as_ref().is_none_or(|p| p.optimal),
        });
    }
    Ok(rows)
}

/// CSV with columns `d,msr_units,psrc_units`; undefined entries print `n/a`.
pub fn bandwidth_csv(rows: &[BandwidthRow]) -> String {
    let mut out = String::from("d,msr_units,psrc_units\n");
    for r in rows {
        let msr = r.msr_units.map_or("n/a".to_string(), |u| format!("{u}"));
        let psrc = r.psrc_units.map_or("n/a".to_string(), |u| u.to_string());
        let _ = writeln!(out, "{},{msr},{psrc}", r.d);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf2::rank;

    /// Plain lexicographic enumeration with a from-scratch rank per subset.
    fn deficient_oracle(layout: &SpreadLayout, x: usize) -> u64 {
        fn rec(layout: &SpreadLayout, start: usize, x: usize, chosen: &mut Vec<usize>, count: &mut u64) {
            if chosen.len() == x {
                let rows: Vec<_> = chosen.iter().flat_map(|&i| layout.bases()[i].iter().copied()).collect();
                if rank(&rows).unwrap() < layout.params().dim as usize {
                    *count += 1;
                }
                return;
            }
            for i in start..layout.node_count() {
                chosen.push(i);
                rec(layout, i + 1, x, chosen, count);
                chosen.pop();
            }
        }
        let mut count = 0;
        rec(layout, 0, x, &mut Vec::new(), &mut count);
        count
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(21, 5), Some(20349));
        assert_eq!(binomial(21, 3), Some(1330));
        assert_eq!(binomial(3, 5), Some(0));
        assert_eq!(binomial(85, 42).map(|c| c > u64::MAX as u128), Some(true));
    }

    #[test]
    fn counts_for_21_nodes() {
        let layout = SpreadLayout::canonical(6, 2).unwrap();
        // frozen from the plain enumeration oracle
        assert_eq!(deficient_oracle(&layout, 5), 21);
        assert_eq!(deficient_oracle(&layout, 3), 210);
        assert_eq!(deficient_oracle(&layout, 4), 105);
        assert_eq!(rho_exhaustive(&layout, 5, DEFAULT_BUDGET).unwrap(), (21, 20349, 1.0 - 21.0 / 20349.0));
        assert_eq!(rho_exhaustive(&layout, 3, DEFAULT_BUDGET).unwrap(), (210, 1330, 1.0 - 210.0 / 1330.0));
        assert_eq!(rho_exhaustive(&layout, 4, DEFAULT_BUDGET).unwrap().0, 105);
        assert_eq!(rho_exhaustive(&layout, 21, DEFAULT_BUDGET).unwrap().0, 0);
        assert_eq!(rho_exhaustive(&layout, 2, DEFAULT_BUDGET).unwrap(), (210, 210, 0.0));
    }

    #[test]
    fn table_matches_oracle_and_is_monotone() {
        for (dim, alpha) in [(4, 2), (6, 3), (6, 2)] {
            let layout = SpreadLayout::canonical(dim, alpha).unwrap();
            let table = rho_table_exhaustive(&layout, DEFAULT_BUDGET, 1).unwrap();
            let n = layout.node_count();
            for x in 0..=n.min(7) {
                assert_eq!(table.deficient[x], deficient_oracle(&layout, x) as u128, "({dim},{alpha}) x={x}");
            }
            assert!(table.rho.windows(2).all(|w| w[0] <= w[1]));
            assert_eq!(table.rho[n], 1.0);
            assert!(table.rho[..table.k].iter().all(|&r| r == 0.0));
        }
    }

    #[test]
    fn workers_do_not_change_the_table() {
        let layout = SpreadLayout::canonical(6, 2).unwrap();
        let a = rho_table_exhaustive(&layout, DEFAULT_BUDGET, 1).unwrap();
        let b = rho_table_exhaustive(&layout, DEFAULT_BUDGET, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn budget_is_enforced() {
        let layout = SpreadLayout::canonical(8, 2).unwrap();
        assert!(matches!(rho_exhaustive(&layout, 5, DEFAULT_BUDGET), Err(ResilienceError::BudgetExceeded { .. })));
        assert!(rho_table_exhaustive(&layout, DEFAULT_BUDGET, 1).is_err());
        assert_eq!(rho_exhaustive(&layout, 85, DEFAULT_BUDGET).unwrap().0, 0);
    }

    #[test]
    fn sampled_below_k_is_exactly_zero() {
        let layout = SpreadLayout::canonical(6, 2).unwrap();
        let est = rho_sampled(&layout, 2, 1000, 1).unwrap();
        assert_eq!((est.rho, est.samples), (0.0, 0));
        assert_eq!(rho_sampled(&layout, 5, 0, 1).unwrap_err(), ResilienceError::NoSamples);
    }

    #[test]
    fn sampled_is_deterministic_and_covers_exact_value() {
        let layout = SpreadLayout::canonical(6, 2).unwrap();
        let a = rho_sampled(&layout, 5, 100_000, 42).unwrap();
        assert_eq!(a, rho_sampled(&layout, 5, 100_000, 42).unwrap());
        let exact = rho_exhaustive(&layout, 5, DEFAULT_BUDGET).unwrap().2;
        assert!(a.ci.0 <= exact && exact <= a.ci.1, "{a:?}");
    }

    #[test]
    fn sampled_interval_coverage() {
        let layout = SpreadLayout::canonical(6, 2).unwrap();
        let exact = rho_exhaustive(&layout, 5, DEFAULT_BUDGET).unwrap().2;
        let runs = 1000u64;
        let hits = (0..runs)
            .into_par_iter()
            .filter(|&seed| {
                let e = rho_sampled(&layout, 5, 100_000, 1000 + seed).unwrap();
                e.ci.0 <= exact && exact <= e.ci.1
            })
            .count() as u64;
        assert!(hits * 100 >= 93 * runs, "coverage {hits}/{runs}");
    }

    #[test]
    fn interval_coverage_probability() {
        // exact coverage: sum the binomial pmf over outcomes whose interval holds q
        let n = 100_000u64;
        let q: f64 = 21.0 / 20349.0;
        let ln_fact = |k: u64| (1..=k).map(|i| (i as f64).ln()).sum::<f64>();
        let ln_n = ln_fact(n);
        let mut coverage = 0.0;
        let (mut ln_d, mut ln_rest) = (0.0, ln_n);
        for d in 0..2000u64 {
            if d > 0 {
                ln_d += (d as f64).ln();
                ln_rest -= ((n - d + 1) as f64).ln();
            }
            let ln_pmf = ln_n - ln_d - ln_rest + d as f64 * q.ln() + (n - d) as f64 * (1.0 - q).ln();
            let (lo, hi) = proportion_ci(n - d, n);
            if lo <= 1.0 - q && 1.0 - q <= hi {
                coverage += ln_pmf.exp();
            }
        }
        assert!(coverage >= 0.93, "coverage {coverage}");
    }

    #[test]
    fn wilson_interval_for_small_counts() {
        let (lo, hi) = proportion_ci(0, 100);
        assert!(lo < 1e-12);
        assert!(hi > 0.0 && hi < 0.05);
        let (lo, hi) = proportion_ci(100, 100);
        assert!(lo > 0.95 && hi == 1.0);
    }

    #[test]
    fn mds_curve_is_binomial_survival() {
        let mds = RhoTable::mds(21, 3);
        let curve = availability(&mds, &[0.0, 0.2, 0.5, 1.0]);
        let surv = |p: f64| {
            1.0 - (0..3).map(|x| binomial(21, x).unwrap() as f64 * p.powi(x as i32) * (1.0 - p).powi(21 - x as i32)).sum::<f64>()
        };
        for pt in &curve.points {
            assert!((pt.obj_up - surv(pt.p)).abs() < 1e-12, "{pt:?}");
        }
        assert_eq!(curve.points[0].obj_up, 0.0);
        assert_eq!(curve.points[3].obj_up, 1.0);
    }

    #[test]
    fn psrc_curve_below_mds() {
        let layout = SpreadLayout::canonical(6, 2).unwrap();
        let table = rho_table_exhaustive(&layout, DEFAULT_BUDGET, 2).unwrap();
        let grid = default_grid();
        let psrc = availability(&table, &grid);
        let mds = availability(&RhoTable::mds(21, 3), &grid);
        for (a, b) in psrc.points.iter().zip(&mds.points) {
            assert!(a.obj_up <= b.obj_up + 1e-12);
        }
        assert!(psrc.points.windows(2).all(|w| w[0].obj_up <= w[1].obj_up + 1e-12));
        let csv = availability_csv(&psrc, &mds);
        assert!(csv.starts_with("p,objup_psrc,objup_mds\n0,0,0\n"));
        assert_eq!(csv.lines().count(), 102);
    }

    #[test]
    fn msr_figures() {
        assert_eq!(msr_download(6, 3, 3), Some(6.0));
        assert_eq!(msr_download(6, 3, 4), Some(4.0));
        assert_eq!(msr_download(6, 3, 2), None);
    }

    #[test]
    fn bandwidth_table() {
        let layout = SpreadLayout::canonical(6, 2).unwrap();
        let rows = compare_bandwidth(&layout, 2..=4).unwrap();
        assert_eq!(rows[0].psrc_units, Some(4));
        assert_eq!(rows[1].psrc_units, Some(3));
        assert_eq!(rows[2].psrc_units, Some(3));
        assert_eq!(bandwidth_csv(&rows), "d,msr_units,psrc_units\n2,n/a,4\n3,6,3\n4,4,3\n");
    }

    #[test]
    fn rho_csv_header() {
        let layout = SpreadLayout::canonical(4, 2).unwrap();
        let csv = rho_table_exhaustive(&layout, DEFAULT_BUDGET, 1).unwrap().to_csv();
        assert!(csv.starts_with("x,deficient,total,rho\n0,1,1,0\n1,5,5,0\n2,0,10,1\n"));
    }
}
