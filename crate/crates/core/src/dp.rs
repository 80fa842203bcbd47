//! Exact solvers for the cyclic contour problem.
//!
//! Dropping the wraparound constraint turns the problem into a chain that an
//! `O(n m sigma)` dynamic program solves exactly ([`relaxed_dp`]). The
//! exhaustive solver ([`edp_solve`]) pins the last vertex to each of the `n`
//! positions in turn, where the relaxation is tight. The divide-and-conquer
//! solvers ([`dcdp_basic`], [`dcdp_solve`]) solve the relaxation over a range
//! of last-vertex positions, stop when its optimum already closes the loop,
//! and otherwise split the range in two. The pruned variant threads a lower
//! bound through the recursion and discards ranges whose relaxed optimum
//! cannot reach it.
//!
//! All argmax ties resolve toward the lowest position, and between two
//! children with equal objective the first evaluated child wins.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::contour::{is_feasible, objective, ContourInstance, IndexRange, PolygonSolution};
use crate::error::{Error, Result};

/// How a position range is divided when the relaxed optimum is infeasible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitScheme {
    /// Split at the middle of the range; evaluate the half holding the larger
    /// last-ray score first.
    Half,
    /// Split just after the best-scoring last-ray position; evaluate the
    /// smaller part first.
    Max,
    /// Split at the midpoint of the parent's relaxed first and last vertex;
    /// evaluate the smaller part first.
    Adap,
}

impl SplitScheme {
    pub const ALL: [SplitScheme; 3] = [SplitScheme::Half, SplitScheme::Max, SplitScheme::Adap];

    pub fn name(&self) -> &'static str {
        match self {
            SplitScheme::Half => "half",
            SplitScheme::Max => "max",
            SplitScheme::Adap => "adap",
        }
    }
}

impl fmt::Display for SplitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SplitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "half" => Ok(SplitScheme::Half),
            "max" => Ok(SplitScheme::Max),
            "adap" | "adaptive" => Ok(SplitScheme::Adap),
            other => Err(Error::invalid(format!("unknown split scheme '{other}'"))),
        }
    }
}

/// Instrumentation collected during one solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    /// Invocations of the relaxed dynamic program.
    pub n_dp: usize,
    pub wall_time: Duration,
    /// Deepest recursion level reached; the root call is level 1.
    pub branch_depth_max: usize,
    /// Child branches whose relaxed optimum equals their parent's.
    pub repeated_relaxed_solution_count: usize,
    /// Lower bound handed to each pruned call, in evaluation order.
    pub bound_trace: Vec<f64>,
}

/// Return tuple of the pruned recursion on one range.
///
/// With `bound` the lower bound passed in, exactly one holds:
/// * the range holds a contour scoring at least `bound`; then `p0` is an
///   optimum over the range and `j0 == ell0 == J(p0) >= bound`;
/// * it does not; then `j0 < ell0 == bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunedResult {
    pub p0: Option<PolygonSolution>,
    pub j0: f64,
    pub ell0: f64,
}

/// Reusable `Q`/`P` tables for the relaxed dynamic program.
#[derive(Debug, Clone, Default)]
pub struct RelaxedDp {
    q: Vec<f64>,
    back: Vec<usize>,
}

impl RelaxedDp {
    pub fn new() -> Self {
        Self::default()
    }

    /// Maximises `J` over `S_L(range)`.
    pub fn solve(&mut self, inst: &ContourInstance, range: IndexRange) -> PolygonSolution {
        let (n, m, sigma) = (inst.n(), inst.m(), inst.sigma());
        debug_assert!(range.hi() <= n);
        self.q.clear();
        self.q.resize(n * m, f64::NEG_INFINITY);
        self.back.clear();
        self.back.resize(n * m, 0);
        let q = &mut self.q;
        let back = &mut self.back;

        // Column t holds ray t; entry i - 1 holds position i.
        let first = inst.row(0);
        for j in inst.widen(range).iter() {
            q[j - 1] = first[j - 1];
        }

        for t in 1..m {
            let rows = if t + 1 < m { inst.full_range() } else { range };
            let row = inst.row(t);
            let (prev, cur) = q.split_at_mut(t * n);
            let prev = &prev[(t - 1) * n..];
            let cur = &mut cur[..n];
            let back = &mut back[t * n..(t + 1) * n];
            for i in rows.iter() {
                let lo = i.saturating_sub(sigma).max(1);
                let hi = (i + sigma).min(n);
                let mut best_j = lo;
                let mut best = prev[lo - 1];
                for j in lo + 1..=hi {
                    if prev[j - 1] > best {
                        best = prev[j - 1];
                        best_j = j;
                    }
                }
                cur[i - 1] = row[i - 1] + best;
                back[i - 1] = best_j;
            }
        }

        let last = &q[(m - 1) * n..];
        let mut p_last = range.lo();
        for i in range.iter().skip(1) {
            if last[i - 1] > last[p_last - 1] {
                p_last = i;
            }
        }
        let mut p = vec![0; m];
        p[m - 1] = p_last;
        for t in (1..m).rev() {
            p[t - 1] = back[t * n + p[t] - 1];
        }
        let objective = objective(inst, &p).expect("dp yields in-range vertices");
        PolygonSolution { p, objective }
    }
}

/// Maximiser of `J` over the relaxed region `S_L(range)`.
pub fn relaxed_dp(inst: &ContourInstance, range: IndexRange) -> Result<PolygonSolution> {
    check_range(inst, range)?;
    Ok(RelaxedDp::new().solve(inst, range))
}

fn check_range(inst: &ContourInstance, range: IndexRange) -> Result<()> {
    if range.hi() > inst.n() {
        return Err(Error::invalid(format!(
            "range {range} exceeds 1..={}",
            inst.n()
        )));
    }
    Ok(())
}

/// Solves the problem by fixing the last vertex to each position in turn.
pub fn edp_solve(inst: &ContourInstance) -> (PolygonSolution, SolveStats) {
    let start = Instant::now();
    let mut dp = RelaxedDp::new();
    let mut best: Option<PolygonSolution> = None;
    for k in 1..=inst.n() {
        let range = IndexRange::singleton(k).expect("k >= 1");
        let sol = dp.solve(inst, range);
        if best.as_ref().is_none_or(|b| sol.objective > b.objective) {
            best = Some(sol);
        }
    }
    let stats = SolveStats {
        n_dp: inst.n(),
        wall_time: start.elapsed(),
        branch_depth_max: 1,
        ..SolveStats::default()
    };
    (best.expect("n >= 1"), stats)
}

/// Result of splitting a range: `lower` holds the smaller positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Split {
    pub lower: IndexRange,
    pub upper: IndexRange,
    /// Evaluate `upper` before `lower`.
    pub swapped: bool,
}

impl Split {
    /// The two parts in evaluation order.
    pub fn ordered(&self) -> (IndexRange, IndexRange) {
        if self.swapped {
            (self.upper, self.lower)
        } else {
            (self.lower, self.upper)
        }
    }
}

/// Divides `range` into two nonempty contiguous parts.
///
/// `parent_relaxed` is the relaxed optimum over `range`; only the adaptive
/// scheme reads it.
pub fn split(
    range: IndexRange,
    inst: &ContourInstance,
    scheme: SplitScheme,
    parent_relaxed: Option<&PolygonSolution>,
) -> Result<Split> {
    check_range(inst, range)?;
    if range.len() < 2 {
        return Err(Error::invalid(format!(
            "cannot split singleton range {range}"
        )));
    }
    let (lo, hi) = (range.lo(), range.hi());
    let last_row = inst.row(inst.m() - 1);
    let part = |cut: usize| {
        (
            IndexRange::new(lo, cut).expect("cut >= lo"),
            IndexRange::new(cut + 1, hi).expect("cut < hi"),
        )
    };
    let smaller_first = |lower: IndexRange, upper: IndexRange| Split {
        lower,
        upper,
        swapped: lower.len() > upper.len(),
    };

    let out = match scheme {
        SplitScheme::Half => {
            let (lower, upper) = part(lo + (range.len() - 1) / 2);
            let peak = |r: IndexRange| {
                r.iter()
                    .map(|h| last_row[h - 1])
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            Split {
                lower,
                upper,
                swapped: peak(lower) < peak(upper),
            }
        }
        SplitScheme::Max => {
            let mut h_star = lo;
            for h in lo + 1..=hi {
                if last_row[h - 1] > last_row[h_star - 1] {
                    h_star = h;
                }
            }
            // An empty upper part takes h* over from the lower one.
            let cut = if h_star == hi { hi - 1 } else { h_star };
            let (lower, upper) = part(cut);
            smaller_first(lower, upper)
        }
        SplitScheme::Adap => {
            let parent = parent_relaxed.ok_or_else(|| {
                Error::invalid("adaptive split needs the parent's relaxed optimum")
            })?;
            let m = parent.p.len();
            if m == 0 {
                return Err(Error::invalid("empty parent solution"));
            }
            let mid = (parent.p[0] + parent.p[m - 1]) / 2;
            // Empty lower part: its smallest candidate moves down. Empty upper
            // part: the lower part's largest entry moves up.
            let cut = mid.clamp(lo, hi - 1);
            let (lower, upper) = part(cut);
            smaller_first(lower, upper)
        }
    };
    Ok(out)
}

struct Recursion<'a> {
    inst: &'a ContourInstance,
    scheme: SplitScheme,
    dp: RelaxedDp,
    stats: SolveStats,
}

impl<'a> Recursion<'a> {
    fn new(inst: &'a ContourInstance, scheme: SplitScheme) -> Self {
        Recursion {
            inst,
            scheme,
            dp: RelaxedDp::new(),
            stats: SolveStats::default(),
        }
    }

    fn relax(
        &mut self,
        range: IndexRange,
        depth: usize,
        parent: Option<&[usize]>,
    ) -> PolygonSolution {
        self.stats.n_dp += 1;
        self.stats.branch_depth_max = self.stats.branch_depth_max.max(depth);
        let sol = self.dp.solve(self.inst, range);
        if parent == Some(sol.p.as_slice()) {
            self.stats.repeated_relaxed_solution_count += 1;
        }
        sol
    }

    fn closes(&self, sol: &PolygonSolution, range: IndexRange) -> bool {
        is_feasible(self.inst, &sol.p, range).expect("dp yields well-formed vectors")
    }

    fn basic(
        &mut self,
        range: IndexRange,
        depth: usize,
        parent: Option<&[usize]>,
    ) -> PolygonSolution {
        let relaxed = self.relax(range, depth, parent);
        if self.closes(&relaxed, range) {
            return relaxed;
        }
        let parts = split(range, self.inst, self.scheme, Some(&relaxed))
            .expect("infeasible relaxed optimum implies |I| >= 2");
        let (first, second) = parts.ordered();
        let a = self.basic(first, depth + 1, Some(&relaxed.p));
        let b = self.basic(second, depth + 1, Some(&relaxed.p));
        if b.objective > a.objective {
            b
        } else {
            a
        }
    }

    fn pruned(
        &mut self,
        range: IndexRange,
        bound: f64,
        depth: usize,
        parent: Option<&[usize]>,
    ) -> PrunedResult {
        self.stats.bound_trace.push(bound);
        let relaxed = self.relax(range, depth, parent);

        // Rule A: even the relaxation cannot reach the bound.
        if bound > relaxed.objective {
            return PrunedResult {
                p0: None,
                j0: f64::NEG_INFINITY,
                ell0: bound,
            };
        }

        // Rule B: the relaxed optimum already closes the loop.
        if self.closes(&relaxed, range) {
            let j0 = relaxed.objective;
            return PrunedResult {
                p0: Some(relaxed),
                j0,
                ell0: bound.max(j0),
            };
        }

        // Rule C: split, solve the first part, hand its bound to the second.
        let parts = split(range, self.inst, self.scheme, Some(&relaxed))
            .expect("infeasible relaxed optimum implies |I| >= 2");
        let (first, second) = parts.ordered();
        let r1 = self.pruned(first, bound, depth + 1, Some(&relaxed.p));
        let r2 = self.pruned(second, r1.ell0, depth + 1, Some(&relaxed.p));
        let ell2 = r2.ell0;
        let best = if r2.j0 > r1.j0 { r2 } else { r1 };
        PrunedResult {
            ell0: ell2.max(best.j0),
            ..best
        }
    }
}

/// Maximiser of `J` over `S(range)` by the unpruned divide-and-conquer scheme.
pub fn dcdp_basic(
    inst: &ContourInstance,
    range: IndexRange,
    scheme: SplitScheme,
) -> Result<(PolygonSolution, SolveStats)> {
    check_range(inst, range)?;
    let start = Instant::now();
    let mut rec = Recursion::new(inst, scheme);
    let sol = rec.basic(range, 1, None);
    rec.stats.wall_time = start.elapsed();
    Ok((sol, rec.stats))
}

/// Runs the pruned recursion on `range` with lower bound `bound`, which may
/// be `f64::NEG_INFINITY`.
pub fn dcdp_pruned(
    inst: &ContourInstance,
    range: IndexRange,
    bound: f64,
    scheme: SplitScheme,
) -> Result<(PrunedResult, SolveStats)> {
    check_range(inst, range)?;
    if bound.is_nan() || bound == f64::INFINITY {
        return Err(Error::invalid(format!(
            "bound must be finite or -inf, got {bound}"
        )));
    }
    let start = Instant::now();
    let mut rec = Recursion::new(inst, scheme);
    let result = rec.pruned(range, bound, 1, None);
    rec.stats.wall_time = start.elapsed();
    Ok((result, rec.stats))
}

/// Exact optimum of the cyclic problem by the pruned divide-and-conquer
/// solver started on the full range with an unbounded lower bound.
pub fn dcdp_solve(inst: &ContourInstance, scheme: SplitScheme) -> (PolygonSolution, SolveStats) {
    let (result, stats) = dcdp_pruned(inst, inst.full_range(), f64::NEG_INFINITY, scheme)
        .expect("full range and -inf bound are valid");
    let sol = result
        .p0
        .expect("the full range always holds a contour above -inf");
    (sol, stats)
}

/// A solver selectable from configuration and the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Solver {
    Edp,
    Dcdp(SplitScheme),
}

impl Solver {
    pub const ALL: [Solver; 4] = [
        Solver::Dcdp(SplitScheme::Half),
        Solver::Dcdp(SplitScheme::Max),
        Solver::Dcdp(SplitScheme::Adap),
        Solver::Edp,
    ];

    pub fn solve(&self, inst: &ContourInstance) -> (PolygonSolution, SolveStats) {
        match self {
            Solver::Edp => edp_solve(inst),
            Solver::Dcdp(scheme) => dcdp_solve(inst, *scheme),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Solver::Edp => "edp",
            Solver::Dcdp(s) => s.name(),
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("edp") {
            Ok(Solver::Edp)
        } else {
            s.parse().map(Solver::Dcdp)
        }
    }
}

/// JSON record emitted for one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub p: Vec<usize>,
    pub objective: f64,
    pub n_dp: usize,
    pub wall_time_us: f64,
    pub scheme: String,
}

impl SolutionRecord {
    pub fn new(solver: Solver, sol: &PolygonSolution, stats: &SolveStats) -> Self {
        SolutionRecord {
            p: sol.p.clone(),
            objective: sol.objective,
            n_dp: stats.n_dp,
            wall_time_us: stats.wall_time.as_secs_f64() * 1e6,
            scheme: solver.name().to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::{brute_force_region, brute_force_solve, Region, DEFAULT_ENUMERATION_CAP};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, m: usize, sigma: usize) -> ContourInstance {
        let table = (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect();
        ContourInstance::new(n, m, sigma, table).unwrap()
    }

    fn r(lo: usize, hi: usize) -> IndexRange {
        IndexRange::new(lo, hi).unwrap()
    }

    /// Eight positions, twelve rays. Ray 0 rewards position 5 (9.5) and
    /// position 7 (0.1); the last ray rewards position 8 (10.0).
    fn toy() -> ContourInstance {
        let (n, m) = (8, 12);
        let mut rows = vec![vec![0.0; n]; m];
        rows[0][4] = 9.5;
        rows[0][6] = 0.1;
        rows[m - 1][7] = 10.0;
        ContourInstance::from_rows(n, 1, rows).unwrap()
    }

    #[test]
    fn singleton_range_relaxation_is_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let inst = random_instance(&mut rng, 6, 5, 1);
            let h = rng.random_range(1..=6);
            let sol = relaxed_dp(&inst, r(h, h)).unwrap();
            assert_eq!(sol.p[4], h);
            assert!(is_feasible(&inst, &sol.p, r(h, h)).unwrap());
        }
    }

    #[test]
    fn vacuous_constraints_give_row_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inst = random_instance(&mut rng, 4, 6, 3);
        let sol = relaxed_dp(&inst, inst.full_range()).unwrap();
        for (i, &pos) in sol.p.iter().enumerate() {
            let row = inst.row(i);
            let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(row[pos - 1], best);
        }
    }

    #[test]
    fn relaxed_dp_matches_relaxed_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let inst = random_instance(&mut rng, 5, 4, 1);
            let lo = rng.random_range(1..=5);
            let hi = rng.random_range(lo..=5);
            let dp = relaxed_dp(&inst, r(lo, hi)).unwrap();
            let oracle =
                brute_force_region(&inst, r(lo, hi), Region::Relaxed, DEFAULT_ENUMERATION_CAP)
                    .unwrap();
            assert_eq!(dp.objective, oracle.objective);
            assert_eq!(dp.p, oracle.p);
        }
    }

    #[test]
    fn relaxation_dominates_strict_region() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let sigma = rng.random_range(1..=2);
            let inst = random_instance(&mut rng, 6, 4, sigma);
            let lo = rng.random_range(1..=6);
            let hi = rng.random_range(lo..=6);
            let dp = relaxed_dp(&inst, r(lo, hi)).unwrap();
            let strict =
                brute_force_region(&inst, r(lo, hi), Region::Strict, DEFAULT_ENUMERATION_CAP)
                    .unwrap();
            assert!(dp.objective >= strict.objective);
        }
    }

    #[test]
    fn relaxed_dp_handles_short_chains() {
        let inst = ContourInstance::new(3, 1, 1, vec![0.5, 2.0, 1.0]).unwrap();
        assert_eq!(relaxed_dp(&inst, inst.full_range()).unwrap().p, vec![2]);
        let inst = ContourInstance::new(3, 2, 1, vec![3.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let sol = edp_solve(&inst).0;
        assert_eq!(sol.objective, 3.0);
    }

    #[test]
    fn edp_single_position() {
        let inst = ContourInstance::new(1, 3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let (sol, stats) = edp_solve(&inst);
        assert_eq!(sol, relaxed_dp(&inst, inst.full_range()).unwrap());
        assert_eq!(stats.n_dp, 1);
    }

    #[test]
    fn solvers_agree_with_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let inst = random_instance(&mut rng, 5, 4, 1);
            let oracle = brute_force_solve(&inst).unwrap();
            let (edp, stats) = edp_solve(&inst);
            assert_eq!(edp.objective, oracle.objective);
            assert_eq!(stats.n_dp, 5);
            for scheme in SplitScheme::ALL {
                let (basic, _) = dcdp_basic(&inst, inst.full_range(), scheme).unwrap();
                assert_eq!(basic.objective, oracle.objective, "basic {scheme}");
                let (pruned, stats) = dcdp_solve(&inst, scheme);
                assert_eq!(pruned.objective, oracle.objective, "pruned {scheme}");
                assert!(stats.n_dp >= 1 && stats.n_dp < 2 * inst.n());
                assert!(stats.branch_depth_max <= inst.n());
            }
        }
    }

    #[test]
    fn constant_table_needs_one_dp() {
        let inst = ContourInstance::new(7, 9, 1, vec![0.25; 63]).unwrap();
        for scheme in SplitScheme::ALL {
            let (sol, stats) = dcdp_solve(&inst, scheme);
            assert_eq!(sol.p, vec![1; 9]);
            assert_eq!(stats.n_dp, 1);
        }
    }

    #[test]
    fn feasible_relaxation_needs_one_dp() {
        let rows = (0..6).map(|_| vec![0.0, 1.0, 3.0, 1.0, 0.0]).collect();
        let inst = ContourInstance::from_rows(5, 1, rows).unwrap();
        let (sol, stats) = dcdp_basic(&inst, inst.full_range(), SplitScheme::Half).unwrap();
        assert_eq!(sol.p, vec![3; 6]);
        assert_eq!(stats.n_dp, 1);
    }

    #[test]
    fn toy_relaxed_optimum_is_open() {
        let inst = toy();
        let top = relaxed_dp(&inst, inst.full_range()).unwrap();
        assert_eq!((top.p[0], top.p[11]), (5, 8));
        assert!(crate::contour::is_feasible_relaxed(&inst, &top.p, inst.full_range()).unwrap());
        assert!(!is_feasible(&inst, &top.p, inst.full_range()).unwrap());
    }

    #[test]
    fn toy_adaptive_trace() {
        let inst = toy();
        let top = relaxed_dp(&inst, inst.full_range()).unwrap();
        let s = split(inst.full_range(), &inst, SplitScheme::Adap, Some(&top)).unwrap();
        assert_eq!(s.ordered(), (r(7, 8), r(1, 6)));

        let child = relaxed_dp(&inst, r(7, 8)).unwrap();
        assert!(is_feasible(&inst, &child.p, r(7, 8)).unwrap());
        assert!((child.objective - 10.1).abs() < 1e-12);
        let other = relaxed_dp(&inst, r(1, 6)).unwrap();
        assert!((other.objective - 9.5).abs() < 1e-12);

        let (sol, stats) = dcdp_basic(&inst, inst.full_range(), SplitScheme::Adap).unwrap();
        assert_eq!(sol.p, child.p);
        let (pruned, pstats) = dcdp_solve(&inst, SplitScheme::Adap);
        assert_eq!(pruned.p, child.p);
        assert_eq!(pstats.n_dp, 3);
        assert!(stats.n_dp >= pstats.n_dp);
    }

    #[test]
    fn toy_half_split_repeats_parent() {
        let inst = toy();
        let top = relaxed_dp(&inst, inst.full_range()).unwrap();
        let s = split(inst.full_range(), &inst, SplitScheme::Half, Some(&top)).unwrap();
        assert_eq!(s.ordered(), (r(5, 8), r(1, 4)));
        let again = relaxed_dp(&inst, r(5, 8)).unwrap();
        assert_eq!(again.p, top.p);
        assert!(!is_feasible(&inst, &again.p, r(5, 8)).unwrap());

        let (half_sol, half) = dcdp_solve(&inst, SplitScheme::Half);
        let (adap_sol, adap) = dcdp_solve(&inst, SplitScheme::Adap);
        assert_eq!(half_sol.objective, adap_sol.objective);
        assert!(half.n_dp > adap.n_dp);
        assert!(half.repeated_relaxed_solution_count > adap.repeated_relaxed_solution_count);
    }

    #[test]
    fn split_examples() {
        let mut rows = vec![vec![0.0; 12]; 3];
        let inst0 = ContourInstance::from_rows(12, 1, rows.clone()).unwrap();
        let half = split(r(7, 12), &inst0, SplitScheme::Half, None).unwrap();
        assert_eq!((half.lower, half.upper), (r(7, 9), r(10, 12)));

        rows[2][7] = 1.0;
        let inst = ContourInstance::from_rows(12, 1, rows).unwrap();
        let max = split(r(7, 12), &inst, SplitScheme::Max, None).unwrap();
        assert_eq!((max.lower, max.upper), (r(7, 8), r(9, 12)));
        assert!(!max.swapped);

        let parent = PolygonSolution {
            p: vec![9, 10, 12],
            objective: 0.0,
        };
        let adap = split(r(7, 12), &inst, SplitScheme::Adap, Some(&parent)).unwrap();
        assert_eq!((adap.lower, adap.upper), (r(7, 10), r(11, 12)));
        assert_eq!(adap.ordered(), (r(11, 12), r(7, 10)));
    }

    #[test]
    fn split_edge_cases() {
        let mut rows = vec![vec![0.0; 6]; 3];
        rows[2][5] = 1.0;
        let inst = ContourInstance::from_rows(6, 1, rows).unwrap();
        // h* at the top of the range moves into the upper part.
        let max = split(r(2, 6), &inst, SplitScheme::Max, None).unwrap();
        assert_eq!((max.lower, max.upper), (r(2, 5), r(6, 6)));
        assert_eq!(max.ordered().0, r(6, 6));
        // Midpoint below the range: the lower part borrows the smallest entry.
        let low = PolygonSolution {
            p: vec![1, 1, 3],
            objective: 0.0,
        };
        let s = split(r(3, 6), &inst, SplitScheme::Adap, Some(&low)).unwrap();
        assert_eq!((s.lower, s.upper), (r(3, 3), r(4, 6)));
        // Midpoint above the range: the upper part takes the largest entry.
        let high = PolygonSolution {
            p: vec![6, 6, 4],
            objective: 0.0,
        };
        let s = split(r(3, 4), &inst, SplitScheme::Adap, Some(&high)).unwrap();
        assert_eq!((s.lower, s.upper), (r(3, 3), r(4, 4)));

        assert!(split(r(3, 3), &inst, SplitScheme::Half, None).is_err());
        assert!(split(r(3, 5), &inst, SplitScheme::Adap, None).is_err());
    }

    #[test]
    fn split_parts_partition_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..300 {
            let n = rng.random_range(2..=12);
            let inst = random_instance(&mut rng, n, 4, 1);
            let lo = rng.random_range(1..n);
            let hi = rng.random_range(lo + 1..=n);
            let parent = relaxed_dp(&inst, r(lo, hi)).unwrap();
            for scheme in SplitScheme::ALL {
                let s = split(r(lo, hi), &inst, scheme, Some(&parent)).unwrap();
                assert_eq!(s.lower.lo(), lo);
                assert_eq!(s.upper.hi(), hi);
                assert_eq!(s.lower.hi() + 1, s.upper.lo());
            }
        }
    }

    #[test]
    fn bounds_thread_monotonically() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let inst = random_instance(&mut rng, 8, 7, 1);
            for scheme in SplitScheme::ALL {
                let (_, stats) = dcdp_solve(&inst, scheme);
                assert_eq!(stats.bound_trace.len(), stats.n_dp);
                assert!(stats.bound_trace.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }

    #[test]
    fn rejects_bad_bounds_and_ranges() {
        let inst = ContourInstance::new(3, 3, 1, vec![0.0; 9]).unwrap();
        assert!(dcdp_pruned(&inst, inst.full_range(), f64::NAN, SplitScheme::Half).is_err());
        assert!(dcdp_pruned(&inst, r(1, 4), 0.0, SplitScheme::Half).is_err());
        assert!(relaxed_dp(&inst, r(2, 5)).is_err());
    }

    #[test]
    fn solver_names_round_trip() {
        for s in Solver::ALL {
            assert_eq!(s.name().parse::<Solver>().unwrap(), s);
        }
        assert!("quarter".parse::<Solver>().is_err());
    }
}
