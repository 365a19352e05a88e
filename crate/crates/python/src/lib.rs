//! Python bindings. Node ids are 1-based ints; coefficient vectors are bit
//! strings with coordinate 0 first.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use spreadcode::codec::{self, ObjectData, Piece};
use spreadcode::repair::{self, LiveSet};
use spreadcode::resilience::{self, RhoTable, DEFAULT_BUDGET};
use spreadcode::sim::{self, ClusterState, ScenarioConfig};
use spreadcode::{BitVector, CodeParams, NodeId, PolyTable, SpreadLayout};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn node(id: u32) -> PyResult<NodeId> {
    NodeId::new(id).ok_or_else(|| value_err(format!("node ids start at 1, got {id}")))
}

fn nodes(ids: &[u32]) -> PyResult<Vec<NodeId>> {
    ids.iter().map(|&i| node(i)).collect()
}

fn ids(nodes: &[NodeId]) -> Vec<u32> {
    nodes.iter().map(|n| n.get()).collect()
}

#[pyclass(name = "Layout", module = "spreadcode", frozen)]
struct PyLayout {
    inner: SpreadLayout,
}

impl PyLayout {
    fn check(&self, id: u32) -> PyResult<NodeId> {
        let n = node(id)?;
        if self.inner.contains_node(n) {
            Ok(n)
        } else {
            Err(value_err(format!("no node {n} in a {}-node layout", self.inner.node_count())))
        }
    }
}

#[pymethods]
impl PyLayout {
    #[new]
    #[pyo3(signature = (b, alpha, poly=None))]
    fn new(b: u32, alpha: u32, poly: Option<u32>) -> PyResult<Self> {
        let params = match poly {
            Some(poly) => CodeParams::derive_with_poly(b, alpha, poly),
            None => CodeParams::derive_with_table(b, alpha, &PolyTable::from_env().map_err(value_err)?),
        }
        .map_err(value_err)?;
        Ok(PyLayout { inner: SpreadLayout::build(params).map_err(value_err)? })
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(PyLayout { inner: SpreadLayout::parse(text).map_err(value_err)? })
    }

    #[getter(B)]
    fn dim(&self) -> u32 {
        self.inner.params().dim
    }

    #[getter]
    fn alpha(&self) -> u32 {
        self.inner.params().alpha
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn k(&self) -> u32 {
        self.inner.params().k
    }

    #[getter]
    fn poly(&self) -> u32 {
        self.inner.params().poly
    }

    fn basis(&self, node: u32) -> PyResult<Vec<String>> {
        Ok(self.inner.basis(self.check(node)?).iter().map(BitVector::to_string).collect())
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    /// `(ok, report)`.
    fn verify(&self) -> (bool, String) {
        let report = self.inner.verify();
        (report.is_ok(), report.to_string())
    }

    fn partners(&self, failed: u32, first: u32) -> PyResult<Vec<u32>> {
        let (failed, first) = (self.check(failed)?, self.check(first)?);
        let found = if self.inner.params().alpha == 2 {
            repair::three_partners_alpha2(&self.inner, failed, first).map(|p| p.to_vec())
        } else {
            repair::pair_partner(&self.inner, failed, first)
        };
        Ok(ids(&found.map_err(value_err)?))
    }

    fn repair_pairs(&self, failed: u32) -> PyResult<Vec<(u32, u32)>> {
        let pairs = repair::repair_pairs(&self.inner, self.check(failed)?).map_err(value_err)?;
        Ok(pairs.into_iter().map(|(a, b)| (a.get(), b.get())).collect())
    }

    #[pyo3(signature = (failed, pair=None, degree=2, dead=vec![]))]
    fn repair_plan(&self, failed: u32, pair: Option<(u32, u32)>, degree: usize, dead: Vec<u32>) -> PyResult<PyRepairPlan> {
        let failed = self.check(failed)?;
        let plan = match pair {
            Some((a, b)) => repair::plan_pair_repair(&self.inner, failed, (self.check(a)?, self.check(b)?)),
            None => {
                let mut down = nodes(&dead)?;
                down.push(failed);
                repair::plan_min_download(&self.inner, failed, degree, &LiveSet::without(self.inner.node_count(), &down))
            }
        };
        Ok(PyRepairPlan { inner: plan.map_err(value_err)? })
    }

    /// Pieces for `data`, as `(node, piece, coeff, payload)` tuples.
    fn encode<'py>(&self, py: Python<'py>, data: &[u8]) -> PyResult<Vec<(u32, usize, String, Bound<'py, PyBytes>)>> {
        let object = ObjectData::from_bytes(data, self.inner.params().dim);
        let mut out = Vec::new();
        for np in codec::encode(&self.inner, &object).map_err(value_err)? {
            for (j, p) in np.pieces.iter().enumerate() {
                out.push((np.node.get(), j + 1, p.coeff.to_string(), PyBytes::new(py, &p.payload)));
            }
        }
        Ok(out)
    }

    /// `(deficient, total, rho)` for `x`-node subsets, by enumeration.
    #[pyo3(signature = (x, budget=DEFAULT_BUDGET))]
    fn rho(&self, x: usize, budget: u128) -> PyResult<(u128, u128, f64)> {
        resilience::rho_exhaustive(&self.inner, x, budget).map_err(value_err)
    }

    /// `(rho, deficient, ci_low, ci_high)` from `samples` random subsets.
    fn rho_sampled(&self, x: usize, samples: u64, seed: u64) -> PyResult<(f64, u64, f64, f64)> {
        let e = resilience::rho_sampled(&self.inner, x, samples, seed).map_err(value_err)?;
        Ok((e.rho, e.deficient, e.ci.0, e.ci.1))
    }

    #[pyo3(signature = (workers=1))]
    fn rho_table(&self, workers: usize) -> PyResult<Vec<f64>> {
        Ok(resilience::rho_table_exhaustive(&self.inner, DEFAULT_BUDGET, workers).map_err(value_err)?.rho)
    }

    /// `(p, obj_up, obj_up_mds)` over `grid`, or `0, 0.01, .., 1`.
    #[pyo3(signature = (grid=None, workers=1))]
    fn availability(&self, grid: Option<Vec<f64>>, workers: usize) -> PyResult<Vec<(f64, f64, f64)>> {
        let table = resilience::rho_table_exhaustive(&self.inner, DEFAULT_BUDGET, workers).map_err(value_err)?;
        let grid = grid.unwrap_or_else(resilience::default_grid);
        let psrc = resilience::availability(&table, &grid);
        let mds = resilience::availability(&RhoTable::mds(table.n, table.k), &grid);
        Ok(psrc.points.iter().zip(&mds.points).map(|(a, b)| (a.p, a.obj_up, b.obj_up)).collect())
    }

    /// `(d, msr_units, units)` rows for repairing `N_1`.
    fn bandwidth(&self, degrees: Vec<usize>) -> PyResult<Vec<(usize, Option<f64>, Option<usize>)>> {
        let rows = resilience::compare_bandwidth(&self.inner, degrees).map_err(value_err)?;
        Ok(rows.into_iter().map(|r| (r.d, r.msr_units, r.psrc_units)).collect())
    }

    fn __repr__(&self) -> String {
        format!("Layout({})", self.inner.params())
    }
}

#[pyclass(name = "RepairPlan", module = "spreadcode", frozen)]
struct PyRepairPlan {
    inner: repair::RepairPlan,
}

#[pymethods]
impl PyRepairPlan {
    #[getter]
    fn failed(&self) -> u32 {
        self.inner.failed.get()
    }

    /// `(node, piece)` pairs, both 1-based.
    #[getter]
    fn downloads(&self) -> Vec<(u32, usize)> {
        self.inner.downloads.iter().map(|d| (d.node.get(), d.piece + 1)).collect()
    }

    #[getter]
    fn download_units(&self) -> usize {
        self.inner.download_units()
    }

    #[getter]
    fn optimal(&self) -> bool {
        self.inner.optimal
    }

    /// Lost payloads from the downloaded ones, in download order.
    fn reconstruct<'py>(&self, py: Python<'py>, payloads: Vec<Vec<u8>>) -> PyResult<Vec<Bound<'py, PyBytes>>> {
        let pieces = self.inner.reconstruct(&payloads).map_err(value_err)?;
        Ok(pieces.iter().map(|p| PyBytes::new(py, &p.payload)).collect())
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }
}

/// Rebuilds `size` bytes from `(coeff, payload)` pairs.
#[pyfunction]
fn decode<'py>(py: Python<'py>, pieces: Vec<(String, Vec<u8>)>, size: usize) -> PyResult<Bound<'py, PyBytes>> {
    let pieces: Vec<Piece> = pieces
        .into_iter()
        .map(|(c, payload)| Ok(Piece { coeff: c.parse::<BitVector>().map_err(value_err)?, payload }))
        .collect::<PyResult<_>>()?;
    let dim = pieces.first().map(|p| p.coeff.width()).ok_or_else(|| value_err("no pieces"))?;
    let object = codec::decode(&pieces, dim).map_err(value_err)?;
    Ok(PyBytes::new(py, &object.to_bytes(size)))
}

/// Minimum-storage regenerating download, or `None` when `d < k`.
#[pyfunction(name = "msr_download")]
#[pyo3(signature = (b, k, d))]
fn msr(b: u32, k: u32, d: u32) -> Option<f64> {
    resilience::msr_download(b, k, d)
}

#[pyclass(name = "Cluster", module = "spreadcode")]
struct PyCluster {
    inner: ClusterState,
}

#[pymethods]
impl PyCluster {
    /// From scenario text (`key=value` lines).
    #[new]
    fn new(scenario: &str) -> PyResult<Self> {
        let config: ScenarioConfig = scenario.parse().map_err(value_err)?;
        Ok(PyCluster { inner: sim::sim_init(config).map_err(value_err)? })
    }

    fn kill(&mut self, node: u32) -> PyResult<()> {
        let n = node_in(&self.inner, node)?;
        self.inner.kill(n);
        Ok(())
    }

    /// One epoch; `(epoch, live, transfers, repairs_ok, repairs_failed, decodable)`.
    fn step(&mut self) -> (u64, usize, u64, u64, u64, bool) {
        let r = self.inner.step();
        (r.epoch, r.live, r.transfers, r.repairs_ok, r.repairs_failed, r.decodable)
    }

    fn run(&mut self) {
        self.inner.run();
    }

    fn is_decodable(&self) -> bool {
        self.inner.is_decodable()
    }

    fn report_csv(&self) -> String {
        self.inner.report_csv()
    }

    fn summary(&self) -> String {
        self.inner.summary()
    }
}

fn node_in(state: &ClusterState, id: u32) -> PyResult<NodeId> {
    let n = node(id)?;
    if state.layout().contains_node(n) {
        Ok(n)
    } else {
        Err(value_err(format!("no node {n}")))
    }
}

#[pymodule]
#[pyo3(name = "spreadcode")]
fn spreadcode_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLayout>()?;
    m.add_class::<PyRepairPlan>()?;
    m.add_class::<PyCluster>()?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(msr, m)?)?;
    Ok(())
}
