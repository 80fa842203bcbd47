//! The closed-contour selection problem on polar rays.
//!
//! A candidate object is probed along `m` rays, each sampled at `n` radial
//! positions. Every (ray, position) pair carries a boundary-likeliness score
//! and a contour picks one position per ray. The contour must be smooth:
//! positions on neighbouring rays, including the last/first pair, may differ
//! by at most `sigma`. The objective is the plain sum of the picked scores.
//!
//! Positions are one-based throughout the public API (`1..=n`), matching the
//! JSON exchange format. Rays are indexed from zero.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on `n^m` for [`brute_force_solve`].
pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

/// An instance of the cyclic contour problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceFile", into = "InstanceFile")]
pub struct ContourInstance {
    n: usize,
    m: usize,
    sigma: usize,
    /// Row-major, `m` rows of `n` entries.
    table: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    n: usize,
    m: usize,
    sigma: usize,
    #[serde(rename = "L")]
    table: Vec<Vec<f64>>,
}

impl TryFrom<InstanceFile> for ContourInstance {
    type Error = Error;

    fn try_from(f: InstanceFile) -> Result<Self> {
        if f.table.len() != f.m {
            return Err(Error::invalid(format!(
                "L has {} rows, m = {}",
                f.table.len(),
                f.m
            )));
        }
        ContourInstance::from_rows(f.n, f.sigma, f.table)
    }
}

impl From<ContourInstance> for InstanceFile {
    fn from(inst: ContourInstance) -> Self {
        InstanceFile {
            n: inst.n,
            m: inst.m,
            sigma: inst.sigma,
            table: inst.rows().map(<[f64]>::to_vec).collect(),
        }
    }
}

impl ContourInstance {
    /// Builds an instance from a row-major `m x n` table.
    pub fn new(n: usize, m: usize, sigma: usize, table: Vec<f64>) -> Result<Self> {
        if n == 0 || m == 0 || sigma == 0 {
            return Err(Error::invalid(format!(
                "n, m and sigma must be positive (got n={n}, m={m}, sigma={sigma})"
            )));
        }
        if table.len() != n * m {
            return Err(Error::invalid(format!(
                "table has {} entries, expected m*n = {}",
                table.len(),
                n * m
            )));
        }
        if let Some(i) = table.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite likeliness at ray {}, position {}",
                i / n,
                i % n + 1
            )));
        }
        Ok(ContourInstance { n, m, sigma, table })
    }

    /// Builds an instance from one row per ray.
    pub fn from_rows(n: usize, sigma: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::invalid(format!(
                "row {i} has {} entries, expected n = {n}",
                r.len()
            )));
        }
        Self::new(n, m, sigma, rows.into_iter().flatten().collect())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("instance serialization is infallible")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }

    /// Positions per ray.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of rays.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Smoothness bound.
    pub fn sigma(&self) -> usize {
        self.sigma
    }

    /// Scores of ray `ray` (zero-based); element `p - 1` is position `p`.
    pub fn row(&self, ray: usize) -> &[f64] {
        &self.table[ray * self.n..(ray + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.table.chunks_exact(self.n)
    }

    /// Score of one-based position `pos` on zero-based ray `ray`.
    #[inline]
    pub fn value(&self, ray: usize, pos: usize) -> f64 {
        self.table[ray * self.n + pos - 1]
    }

    /// The full position range `{1..n}`.
    pub fn full_range(&self) -> IndexRange {
        IndexRange { lo: 1, hi: self.n }
    }

    /// `I + [-sigma, sigma]` intersected with `{1..n}`.
    pub fn widen(&self, range: IndexRange) -> IndexRange {
        IndexRange {
            lo: range.lo.saturating_sub(self.sigma).max(1),
            hi: (range.hi + self.sigma).min(self.n),
        }
    }

    fn check_vector(&self, p: &[usize]) -> Result<()> {
        if p.len() != self.m {
            return Err(Error::invalid(format!(
                "vertex vector has length {}, expected m = {}",
                p.len(),
                self.m
            )));
        }
        if let Some((i, &v)) = p.iter().enumerate().find(|(_, &v)| v == 0 || v > self.n) {
            return Err(Error::invalid(format!(
                "vertex {i} is {v}, outside 1..={}",
                self.n
            )));
        }
        Ok(())
    }

    fn check_range(&self, range: IndexRange) -> Result<()> {
        if range.hi > self.n {
            return Err(Error::invalid(format!(
                "range {range} exceeds 1..={}",
                self.n
            )));
        }
        Ok(())
    }
}

/// A contour: one position per ray and its objective value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonSolution {
    pub p: Vec<usize>,
    pub objective: f64,
}

impl PolygonSolution {
    /// Wraps `p`, recomputing the objective by summation in ray order.
    pub fn evaluate(inst: &ContourInstance, p: Vec<usize>) -> Result<Self> {
        let objective = objective(inst, &p)?;
        Ok(PolygonSolution { p, objective })
    }
}

/// A nonempty contiguous inclusive range of positions `{lo..=hi}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexRange {
    lo: usize,
    hi: usize,
}

impl IndexRange {
    pub fn new(lo: usize, hi: usize) -> Result<Self> {
        if lo == 0 || lo > hi {
            return Err(Error::invalid(format!(
                "index range must satisfy 1 <= lo <= hi (got {lo}..={hi})"
            )));
        }
        Ok(IndexRange { lo, hi })
    }

    pub fn singleton(h: usize) -> Result<Self> {
        Self::new(h, h)
    }

    pub fn lo(&self) -> usize {
        self.lo
    }

    pub fn hi(&self) -> usize {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.hi - self.lo + 1
    }

    /// Always false; ranges are nonempty by construction.
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn contains(&self, h: usize) -> bool {
        self.lo <= h && h <= self.hi
    }

    pub fn iter(&self) -> std::ops::RangeInclusive<usize> {
        self.lo..=self.hi
    }
}

impl fmt::Display for IndexRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}..{}}}", self.lo, self.hi)
    }
}

/// `J(p)`, the sum of the chosen scores.
pub fn objective(inst: &ContourInstance, p: &[usize]) -> Result<f64> {
    inst.check_vector(p)?;
    Ok(p.iter()
        .enumerate()
        .map(|(ray, &pos)| inst.value(ray, pos))
        .sum())
}

#[inline]
fn chain_ok(p: &[usize], sigma: usize) -> bool {
    p.windows(2).all(|w| w[0].abs_diff(w[1]) <= sigma)
}

/// Membership in the strict region `S(I)`: last vertex in `range`, all cyclic
/// neighbour pairs within `sigma`.
pub fn is_feasible(inst: &ContourInstance, p: &[usize], range: IndexRange) -> Result<bool> {
    inst.check_vector(p)?;
    let m = inst.m;
    Ok(
        range.contains(p[m - 1])
            && chain_ok(p, inst.sigma)
            && p[m - 1].abs_diff(p[0]) <= inst.sigma,
    )
}

/// Membership in the relaxed region `S_L(I)`: the wraparound pair is dropped
/// and replaced by `p[0] in I + [-sigma, sigma]`.
pub fn is_feasible_relaxed(inst: &ContourInstance, p: &[usize], range: IndexRange) -> Result<bool> {
    inst.check_vector(p)?;
    let m = inst.m;
    Ok(range.contains(p[m - 1]) && inst.widen(range).contains(p[0]) && chain_ok(p, inst.sigma))
}

/// Which feasible region an exhaustive search enumerates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Strict,
    Relaxed,
}

/// Exact maximiser of `J` over `S({1..n})` by enumeration. Ties go to the
/// lexicographically smallest vector.
pub fn brute_force_solve(inst: &ContourInstance) -> Result<PolygonSolution> {
    brute_force_region(
        inst,
        inst.full_range(),
        Region::Strict,
        DEFAULT_ENUMERATION_CAP,
    )
}

/// Exact maximiser of `J` over `S(range)` or `S_L(range)` by enumeration.
///
/// Vectors are visited in lexicographic order. Branches that already break a
/// chain constraint are skipped, every completed vector is then tested with
/// the region's membership predicate.
pub fn brute_force_region(
    inst: &ContourInstance,
    range: IndexRange,
    region: Region,
    cap: u64,
) -> Result<PolygonSolution> {
    inst.check_range(range)?;
    let size = (inst.n as u64).checked_pow(inst.m as u32);
    if size.is_none_or(|s| s > cap) {
        return Err(Error::InstanceTooLarge {
            n: inst.n,
            m: inst.m,
            cap,
        });
    }

    struct Search<'a> {
        inst: &'a ContourInstance,
        range: IndexRange,
        region: Region,
        p: Vec<usize>,
        best: Option<PolygonSolution>,
    }

    impl Search<'_> {
        fn visit(&mut self, depth: usize) {
            let inst = self.inst;
            if depth == inst.m {
                let member = match self.region {
                    Region::Strict => is_feasible(inst, &self.p, self.range),
                    Region::Relaxed => is_feasible_relaxed(inst, &self.p, self.range),
                }
                .expect("well-formed vector");
                if member {
                    let j: f64 = self
                        .p
                        .iter()
                        .enumerate()
                        .map(|(ray, &pos)| inst.row(ray)[pos - 1])
                        .sum();
                    if self.best.as_ref().is_none_or(|b| j > b.objective) {
                        self.best = Some(PolygonSolution {
                            p: self.p.clone(),
                            objective: j,
                        });
                    }
                }
                return;
            }
            for pos in 1..=inst.n {
                if depth > 0 && self.p[depth - 1].abs_diff(pos) > inst.sigma {
                    continue;
                }
                self.p[depth] = pos;
                self.visit(depth + 1);
            }
        }
    }

    let mut search = Search {
        inst,
        range,
        region,
        p: vec![0; inst.m],
        best: None,
    };
    search.visit(0);
    // Constant vectors (h, .., h) with h in range belong to both regions.
    Ok(search.best.expect("feasible region is never empty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, m: usize, sigma: usize) -> ContourInstance {
        let table = (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect();
        ContourInstance::new(n, m, sigma, table).unwrap()
    }

    /// Every vector of `{1..n}^m`, in lexicographic order.
    fn all_vectors(n: usize, m: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..m {
            out = out
                .into_iter()
                .flat_map(|v| {
                    (1..=n).map(move |x| {
                        let mut w = v.clone();
                        w.push(x);
                        w
                    })
                })
                .collect();
        }
        out
    }

    // Direct transcription of the region definitions, kept separate from the
    // library predicates.
    fn in_strict(p: &[usize], lo: usize, hi: usize, sigma: i64) -> bool {
        let m = p.len();
        let last = p[m - 1];
        if last < lo || last > hi {
            return false;
        }
        (0..m).all(|i| (p[i] as i64 - p[(i + 1) % m] as i64).abs() <= sigma)
    }

    fn in_relaxed(p: &[usize], lo: usize, hi: usize, n: usize, sigma: i64) -> bool {
        let m = p.len();
        let last = p[m - 1];
        if last < lo || last > hi {
            return false;
        }
        let first = p[0] as i64;
        let near = (lo..=hi).any(|h| (first - h as i64).abs() <= sigma) && p[0] >= 1 && p[0] <= n;
        near && (0..m - 1).all(|i| (p[i] as i64 - p[i + 1] as i64).abs() <= sigma)
    }

    #[test]
    fn zero_table_objective_is_zero() {
        let inst = ContourInstance::new(4, 3, 1, vec![0.0; 12]).unwrap();
        assert_eq!(objective(&inst, &[1, 2, 3]).unwrap(), 0.0);
    }

    #[test]
    fn linear_table_sum() {
        let rows = vec![vec![1.0, 2.0, 3.0]; 3];
        let inst = ContourInstance::from_rows(3, 1, rows).unwrap();
        assert_eq!(objective(&inst, &[3, 3, 3]).unwrap(), 9.0);
    }

    #[test]
    fn objective_rejects_bad_vectors() {
        let inst = ContourInstance::new(3, 3, 1, vec![0.0; 9]).unwrap();
        assert!(objective(&inst, &[1, 2]).is_err());
        assert!(objective(&inst, &[1, 2, 4]).is_err());
        assert!(objective(&inst, &[0, 2, 3]).is_err());
    }

    #[test]
    fn objective_matches_resummation_on_every_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let inst = random_instance(&mut rng, 5, 4, 1);
        for p in all_vectors(5, 4) {
            let mut expect = 0.0;
            for (i, &pos) in p.iter().enumerate() {
                expect += inst.row(i)[pos - 1];
            }
            assert_eq!(objective(&inst, &p).unwrap(), expect);
        }
    }

    #[test]
    fn rejects_malformed_instances() {
        assert!(ContourInstance::new(0, 3, 1, vec![]).is_err());
        assert!(ContourInstance::new(2, 3, 0, vec![0.0; 6]).is_err());
        assert!(ContourInstance::new(2, 3, 1, vec![0.0; 5]).is_err());
        assert!(ContourInstance::new(2, 3, 1, vec![0.0, f64::NAN, 0.0, 0.0, 0.0, 0.0]).is_err());
        assert!(
            ContourInstance::from_json_str(r#"{"n":2,"m":3,"sigma":1,"L":[[0,0],[0,0]]}"#).is_err()
        );
        assert!(
            ContourInstance::from_json_str(r#"{"n":2,"m":2,"sigma":1,"L":[[0,0],[0]]}"#).is_err()
        );
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = random_instance(&mut rng, 6, 5, 2);
        let back = ContourInstance::from_json_str(&inst.to_json_string()).unwrap();
        assert_eq!(inst, back);
        let v: serde_json::Value = serde_json::from_str(&inst.to_json_string()).unwrap();
        assert_eq!(v["L"].as_array().unwrap().len(), 5);
    }

    #[test]
    fn constant_vector_is_feasible() {
        let inst = ContourInstance::new(4, 4, 1, vec![0.0; 16]).unwrap();
        assert!(is_feasible(&inst, &[2, 2, 2, 2], inst.full_range()).unwrap());
    }

    #[test]
    fn chain_violation_is_infeasible() {
        let inst = ContourInstance::new(4, 4, 1, vec![0.0; 16]).unwrap();
        assert!(!is_feasible(&inst, &[1, 2, 3, 1], inst.full_range()).unwrap());
        assert!(!is_feasible_relaxed(&inst, &[1, 2, 3, 1], inst.full_range()).unwrap());
    }

    #[test]
    fn wraparound_only_matters_for_strict_region() {
        let inst = ContourInstance::new(5, 4, 1, vec![0.0; 20]).unwrap();
        let p = [1, 2, 3, 4];
        assert!(!is_feasible(&inst, &p, inst.full_range()).unwrap());
        assert!(is_feasible_relaxed(&inst, &p, inst.full_range()).unwrap());
    }

    #[test]
    fn predicates_match_definitions_exhaustively() {
        let (n, m, sigma) = (4, 3, 1);
        let inst = ContourInstance::new(n, m, sigma, vec![0.0; n * m]).unwrap();
        for lo in 1..=n {
            for hi in lo..=n {
                let r = IndexRange::new(lo, hi).unwrap();
                for p in all_vectors(n, m) {
                    let strict = is_feasible(&inst, &p, r).unwrap();
                    let relaxed = is_feasible_relaxed(&inst, &p, r).unwrap();
                    assert_eq!(strict, in_strict(&p, lo, hi, sigma as i64), "{p:?} {r}");
                    assert_eq!(
                        relaxed,
                        in_relaxed(&p, lo, hi, n, sigma as i64),
                        "{p:?} {r}"
                    );
                    assert!(!strict || relaxed, "S(I) must be inside S_L(I)");
                }
            }
        }
    }

    #[test]
    fn strict_region_splits_into_disjoint_halves() {
        let (n, m) = (5, 4);
        let inst = ContourInstance::new(n, m, 1, vec![0.0; n * m]).unwrap();
        let whole = inst.full_range();
        for cut in 1..n {
            let a = IndexRange::new(1, cut).unwrap();
            let b = IndexRange::new(cut + 1, n).unwrap();
            for p in all_vectors(n, m) {
                let in_whole = is_feasible(&inst, &p, whole).unwrap();
                let in_a = is_feasible(&inst, &p, a).unwrap();
                let in_b = is_feasible(&inst, &p, b).unwrap();
                assert_eq!(in_whole, in_a || in_b);
                assert!(!(in_a && in_b));
            }
        }
    }

    #[test]
    fn objective_shifts_with_row_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inst = random_instance(&mut rng, 5, 4, 1);
        let c = 0.75;
        let rows: Vec<Vec<f64>> = inst
            .rows()
            .enumerate()
            .map(|(i, r)| r.iter().map(|v| if i == 2 { v + c } else { *v }).collect())
            .collect();
        let shifted = ContourInstance::from_rows(5, 1, rows).unwrap();
        for p in all_vectors(5, 4) {
            let a = objective(&inst, &p).unwrap();
            let b = objective(&shifted, &p).unwrap();
            assert!((b - a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn brute_force_single_position() {
        let inst = ContourInstance::new(1, 4, 1, vec![0.5, -1.0, 2.0, 0.25]).unwrap();
        let sol = brute_force_solve(&inst).unwrap();
        assert_eq!(sol.p, vec![1; 4]);
        assert_eq!(sol.objective, 0.5 - 1.0 + 2.0 + 0.25);
    }

    #[test]
    fn brute_force_vacuous_constraints_pick_row_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut inst = random_instance(&mut rng, 4, 5, 3);
        // Introduce a tie on ray 0 to exercise the lowest-index rule.
        inst.table[0] = 5.0;
        inst.table[2] = 5.0;
        let sol = brute_force_solve(&inst).unwrap();
        for (i, &pos) in sol.p.iter().enumerate() {
            let row = inst.row(i);
            let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let first = row.iter().position(|&v| v == best).unwrap() + 1;
            assert_eq!(pos, first);
        }
    }

    #[test]
    fn brute_force_is_optimal_and_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let inst = random_instance(&mut rng, 4, 4, 1);
            let sol = brute_force_solve(&inst).unwrap();
            assert!(is_feasible(&inst, &sol.p, inst.full_range()).unwrap());
            for p in all_vectors(4, 4) {
                if in_strict(&p, 1, 4, 1) {
                    assert!(objective(&inst, &p).unwrap() <= sol.objective);
                }
            }
        }
    }

    #[test]
    fn brute_force_respects_cap() {
        let inst = ContourInstance::new(10, 8, 1, vec![0.0; 80]).unwrap();
        assert!(matches!(
            brute_force_solve(&inst),
            Err(Error::InstanceTooLarge { .. })
        ));
    }

    #[test]
    fn index_range_validation() {
        assert!(IndexRange::new(0, 3).is_err());
        assert!(IndexRange::new(4, 3).is_err());
        let r = IndexRange::new(3, 7).unwrap();
        assert_eq!(r.len(), 5);
        assert!(r.contains(3) && r.contains(7) && !r.contains(8));
    }

    #[test]
    fn widen_clips_to_grid() {
        let inst = ContourInstance::new(10, 3, 2, vec![0.0; 30]).unwrap();
        assert_eq!(
            inst.widen(IndexRange::new(1, 3).unwrap()),
            IndexRange::new(1, 5).unwrap()
        );
        assert_eq!(
            inst.widen(IndexRange::new(9, 10).unwrap()),
            IndexRange::new(7, 10).unwrap()
        );
    }
}
