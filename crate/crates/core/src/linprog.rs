//! Exact rational linear feasibility and optimization.
//!
//! A [`LinearSystem`] constrains nonnegative variables by rows
//! `sum_j a_ij * x_j REL_i b_i` with `REL_i` one of `<=`, `=`, `>=`. The
//! solver is a revised phase-1 simplex over arbitrary-precision rationals
//! with Bland's anti-cycling pivot rule, so every run terminates and every
//! comparison is exact — no tolerances anywhere.
//!
//! Every outcome is independently checkable by [`verify_result`]:
//!
//! * `Feasible(x)` — re-substitute: `x >= 0` and every row holds exactly.
//! * `Infeasible(certificate)` — the certificate combines rows (multiplier
//!   `lambda_i`, with `lambda_i >= 0` on `>=` rows, `lambda_i <= 0` on `<=`
//!   rows, free on `=` rows) and nonnegativity axioms `x_j >= 0`
//!   (multiplier `mu_j >= 0`) into the absurd inequality `0 >= beta` with
//!   `beta > 0`: componentwise `sum_i lambda_i a_ij + mu_j = 0` while
//!   `sum_i lambda_i b_i > 0`.
//!
//! The verifier needs only the original system and the multipliers; it never
//! trusts solver internals.

use alloc::string::String;
use alloc::vec::Vec;

use num_traits::{One, Signed, Zero};

use crate::rational::{format_rational, Rational};

/// Row sense of a linear constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

/// One row: `sum_j coeffs[j] * x_j  relation  rhs`, coefficients sparse with
/// strictly increasing column indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, Rational)>,
    pub relation: Relation,
    pub rhs: Rational,
}

/// A feasibility problem over nonnegative variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearSystem {
    /// One label per variable; fixes the column count.
    pub columns: Vec<String>,
    pub rows: Vec<Constraint>,
}

/// Errors for malformed systems (never raised for infeasibility, which is a
/// regular outcome).
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LinprogError {
    #[error("row {row} references column {column}, but the system has {columns} columns")]
    BadColumnIndex {
        row: usize,
        column: usize,
        columns: usize,
    },
    #[error("row {row} has unsorted or duplicate column indices")]
    UnsortedRow { row: usize },
    #[error("expected {expected} entries, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("pivot iteration limit exceeded")]
    IterationLimit,
}

impl LinearSystem {
    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Structural well-formedness (indices in range, rows sorted).
    pub fn validate(&self) -> Result<(), LinprogError> {
        for (i, row) in self.rows.iter().enumerate() {
            let mut prev: Option<usize> = None;
            for (col, _) in &row.coeffs {
                if *col >= self.columns.len() {
                    return Err(LinprogError::BadColumnIndex {
                        row: i,
                        column: *col,
                        columns: self.columns.len(),
                    });
                }
                if prev.is_some_and(|p| p >= *col) {
                    return Err(LinprogError::UnsortedRow { row: i });
                }
                prev = Some(*col);
            }
        }
        Ok(())
    }

    /// Human-readable rendering, one row per line.
    pub fn dump_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&alloc::format!(
            "columns: {}\nrows: {}\n",
            self.columns.len(),
            self.rows.len()
        ));
        for row in &self.rows {
            let mut first = true;
            for (col, a) in &row.coeffs {
                if !first {
                    out.push_str(" + ");
                }
                out.push_str(&alloc::format!(
                    "{} {}",
                    format_rational(a),
                    self.columns[*col]
                ));
                first = false;
            }
            if first {
                out.push('0');
            }
            out.push_str(&alloc::format!(
                " {} {}\n",
                row.relation.symbol(),
                format_rational(&row.rhs)
            ));
        }
        out
    }
}

/// Multipliers deriving `0 >= beta` with `beta > 0` from the system (see
/// module docs for the exact conditions).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InfeasibilityCertificate {
    /// One multiplier per row.
    pub row_multipliers: Vec<Rational>,
    /// One multiplier per column, for the axiom `x_j >= 0`.
    pub column_multipliers: Vec<Rational>,
}

/// Outcome of a feasibility run: a point or a refutation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeasibilityResult {
    Feasible(Vec<Rational>),
    Infeasible(InfeasibilityCertificate),
}

/// Outcome of maximizing a linear objective over the feasible set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OptimizeResult {
    Infeasible(InfeasibilityCertificate),
    Unbounded,
    Optimal { value: Rational, point: Vec<Rational> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColKind {
    Structural,
    Slack,
    Artificial,
}

/// Revised simplex state over the row-flipped equality form.
struct Tableau<'a> {
    ls: &'a LinearSystem,
    m: usize,
    /// Sparse columns of the equality system (structural, then slack, then
    /// artificial), rows already flipped so the right-hand side is >= 0.
    cols: Vec<Vec<(usize, Rational)>>,
    kind: Vec<ColKind>,
    num_structural: usize,
    /// Right-hand side after flipping.
    /// Which rows were negated to make the right-hand side nonnegative.
    flipped: Vec<bool>,
    /// Basic column of each row.
    basis: Vec<usize>,
    /// Row a column is basic in, if any.
    basic_row: Vec<Option<usize>>,
    /// Dense basis inverse.
    binv: Vec<Vec<Rational>>,
    /// Current basic values, always >= 0.
    xb: Vec<Rational>,
}

/// Generous bound on pivots; Bland's rule terminates long before this on any
/// system this crate builds. Hitting it signals a bug, not an input problem.
const MAX_PIVOTS: usize = 2_000_000;

impl<'a> Tableau<'a> {
    fn new(ls: &'a LinearSystem) -> Result<Self, LinprogError> {
        ls.validate()?;
        let m = ls.num_rows();
        let n = ls.num_columns();

        let mut flipped = alloc::vec![false; m];
        let mut rhs = Vec::with_capacity(m);
        for (i, row) in ls.rows.iter().enumerate() {
            flipped[i] = row.rhs.is_negative();
            rhs.push(if flipped[i] {
                -row.rhs.clone()
            } else {
                row.rhs.clone()
            });
        }

        // Structural columns, transposed from the rows with flip applied.
        let mut cols: Vec<Vec<(usize, Rational)>> = alloc::vec![Vec::new(); n];
        for (i, row) in ls.rows.iter().enumerate() {
            for (col, a) in &row.coeffs {
                let v = if flipped[i] { -a.clone() } else { a.clone() };
                if !v.is_zero() {
                    cols[*col].push((i, v));
                }
            }
        }
        let mut kind = alloc::vec![ColKind::Structural; n];

        // Slack per inequality row (sign follows the flipped sense), then an
        // artificial wherever the slack cannot start in the basis.
        let mut basis = Vec::with_capacity(m);
        let mut slack_ready: Vec<Option<usize>> = alloc::vec![None; m];
        for (i, row) in ls.rows.iter().enumerate() {
            let sense = effective_sense(row.relation, flipped[i]);
            match sense {
                Some(Relation::Le) => {
                    cols.push(alloc::vec![(i, Rational::one())]);
                    kind.push(ColKind::Slack);
                    slack_ready[i] = Some(cols.len() - 1);
                }
                Some(Relation::Ge) => {
                    cols.push(alloc::vec![(i, -Rational::one())]);
                    kind.push(ColKind::Slack);
                }
                _ => {}
            }
        }
        for (i, ready) in slack_ready.iter().enumerate() {
            match ready {
                Some(slack_col) => basis.push(*slack_col),
                None => {
                    cols.push(alloc::vec![(i, Rational::one())]);
                    kind.push(ColKind::Artificial);
                    basis.push(cols.len() - 1);
                }
            }
        }

        let mut basic_row = alloc::vec![None; cols.len()];
        for (r, &col) in basis.iter().enumerate() {
            basic_row[col] = Some(r);
        }

        // Initial basis is the identity.
        let mut binv = alloc::vec![alloc::vec![Rational::zero(); m]; m];
        for (r, row) in binv.iter_mut().enumerate() {
            row[r] = Rational::one();
        }
        let xb = rhs;

        Ok(Tableau {
            ls,
            m,
            cols,
            kind,
            num_structural: n,
            flipped,
            basis,
            basic_row,
            binv,
            xb,
        })
    }

    /// Simplex multipliers `y = c_B B^-1` for the given per-column costs.
    fn multipliers(&self, cost: &dyn Fn(usize) -> Rational) -> Vec<Rational> {
        let mut y = alloc::vec![Rational::zero(); self.m];
        for r in 0..self.m {
            let cb = cost(self.basis[r]);
            if cb.is_zero() {
                continue;
            }
            for (yk, b) in y.iter_mut().zip(&self.binv[r]) {
                if !b.is_zero() {
                    *yk += &cb * b;
                }
            }
        }
        y
    }

    /// Lowest-index nonbasic, non-artificial column with negative reduced
    /// cost (Bland's entering rule), or None at optimality.
    fn entering(&self, y: &[Rational], cost: &dyn Fn(usize) -> Rational) -> Option<usize> {
        for j in 0..self.cols.len() {
            if self.kind[j] == ColKind::Artificial || self.basic_row[j].is_some() {
                continue;
            }
            let mut reduced = cost(j);
            for (r, a) in &self.cols[j] {
                if !y[*r].is_zero() {
                    reduced -= &y[*r] * a;
                }
            }
            if reduced.is_negative() {
                return Some(j);
            }
        }
        None
    }

    /// Direction `d = B^-1 A_j` of the entering column.
    fn direction(&self, j: usize) -> Vec<Rational> {
        let mut d = alloc::vec![Rational::zero(); self.m];
        for (r, a) in &self.cols[j] {
            for (di, binv_row) in d.iter_mut().zip(&self.binv) {
                let b = &binv_row[*r];
                if !b.is_zero() {
                    *di += b * a;
                }
            }
        }
        d
    }

    /// Minimum-ratio row with Bland's tie break (lowest basic column), or
    /// None when the direction is unbounded.
    fn leaving(&self, d: &[Rational]) -> Option<usize> {
        let mut best: Option<(Rational, usize)> = None;
        for (i, di) in d.iter().enumerate() {
            if !di.is_positive() {
                continue;
            }
            let ratio = &self.xb[i] / di;
            let better = match &best {
                None => true,
                Some((best_ratio, best_row)) => {
                    ratio < *best_ratio
                        || (ratio == *best_ratio && self.basis[i] < self.basis[*best_row])
                }
            };
            if better {
                best = Some((ratio, i));
            }
        }
        best.map(|(_, i)| i)
    }

    fn pivot(&mut self, r: usize, entering: usize, d: &[Rational]) {
        let dr = d[r].clone();
        debug_assert!(!dr.is_zero());

        // Scale row r of B^-1 and x_B.
        if !dr.is_one() {
            for cell in self.binv[r].iter_mut() {
                if !cell.is_zero() {
                    *cell = &*cell / &dr;
                }
            }
            self.xb[r] = &self.xb[r] / &dr;
        }

        // Eliminate the entering column from every other row.
        let pivot_row = self.binv[r].clone();
        let pivot_x = self.xb[r].clone();
        for (i, ((row, xi), di)) in self
            .binv
            .iter_mut()
            .zip(self.xb.iter_mut())
            .zip(d)
            .enumerate()
        {
            if i == r || di.is_zero() {
                continue;
            }
            for (cell, p) in row.iter_mut().zip(&pivot_row) {
                if !p.is_zero() {
                    let t = di * p;
                    *cell -= t;
                }
            }
            if !pivot_x.is_zero() {
                let t = di * &pivot_x;
                *xi -= t;
            }
        }

        let leaving_col = self.basis[r];
        self.basic_row[leaving_col] = None;
        self.basis[r] = entering;
        self.basic_row[entering] = Some(r);
    }

    /// Runs simplex to optimality for the given costs. Returns the final
    /// multipliers `y`.
    fn optimize(&mut self, cost: &dyn Fn(usize) -> Rational) -> Result<Vec<Rational>, SimplexStop> {
        for _ in 0..MAX_PIVOTS {
            let y = self.multipliers(cost);
            let Some(j) = self.entering(&y, cost) else {
                return Ok(y);
            };
            let d = self.direction(j);
            let Some(r) = self.leaving(&d) else {
                return Err(SimplexStop::Unbounded);
            };
            self.pivot(r, j, &d);
        }
        Err(SimplexStop::IterationLimit)
    }

    /// Phase-1 objective value: total artificial mass in the basis.
    fn artificial_mass(&self) -> Rational {
        let mut total = Rational::zero();
        for r in 0..self.m {
            if self.kind[self.basis[r]] == ColKind::Artificial {
                total += &self.xb[r];
            }
        }
        total
    }

    /// After a successful phase 1, pivot basic artificials out wherever a
    /// non-artificial column can replace them. Rows where none can are
    /// redundant; their artificial stays basic at value zero and never moves
    /// again (every later direction has a zero entry there).
    fn drive_out_artificials(&mut self) {
        for r in 0..self.m {
            if self.kind[self.basis[r]] != ColKind::Artificial {
                continue;
            }
            debug_assert!(self.xb[r].is_zero());
            'search: for j in 0..self.cols.len() {
                if self.kind[j] == ColKind::Artificial || self.basic_row[j].is_some() {
                    continue;
                }
                // d_r = (B^-1 A_j)_r.
                let mut dr = Rational::zero();
                for (row, a) in &self.cols[j] {
                    let b = &self.binv[r][*row];
                    if !b.is_zero() {
                        dr += b * a;
                    }
                }
                if !dr.is_zero() {
                    let d = self.direction(j);
                    self.pivot(r, j, &d);
                    break 'search;
                }
            }
        }
    }

    /// Current structural solution.
    fn solution(&self) -> Vec<Rational> {
        let mut x = alloc::vec![Rational::zero(); self.num_structural];
        for (j, xi) in x.iter_mut().enumerate() {
            if let Some(r) = self.basic_row[j] {
                *xi = self.xb[r].clone();
            }
        }
        x
    }

    /// Farkas multipliers for the original rows from the phase-1 duals.
    fn certificate(&self, y: Vec<Rational>) -> InfeasibilityCertificate {
        let mut lambda = y;
        for (i, l) in lambda.iter_mut().enumerate() {
            if self.flipped[i] {
                *l = -l.clone();
            }
        }
        // mu_j = -(sum_i lambda_i a_ij), nonnegative at phase-1 optimality.
        let mut mu = alloc::vec![Rational::zero(); self.num_structural];
        for (i, row) in self.ls.rows.iter().enumerate() {
            if lambda[i].is_zero() {
                continue;
            }
            for (col, a) in &row.coeffs {
                let t = &lambda[i] * a;
                mu[*col] -= t;
            }
        }
        InfeasibilityCertificate {
            row_multipliers: lambda,
            column_multipliers: mu,
        }
    }
}

enum SimplexStop {
    Unbounded,
    IterationLimit,
}

/// Sense of a row after slack insertion: `Some(Le)` means a `+1` slack
/// completes the row, `Some(Ge)` a `-1` surplus, `None` an equality.
fn effective_sense(relation: Relation, flipped: bool) -> Option<Relation> {
    match (relation, flipped) {
        (Relation::Eq, _) => None,
        (Relation::Le, false) | (Relation::Ge, true) => Some(Relation::Le),
        (Relation::Ge, false) | (Relation::Le, true) => Some(Relation::Ge),
    }
}

/// Decides whether the system has a nonnegative solution, returning either a
/// point or an infeasibility certificate. Deterministic: identical systems
/// yield identical results.
pub fn solve_feasibility(ls: &LinearSystem) -> Result<FeasibilityResult, LinprogError> {
    let mut tab = Tableau::new(ls)?;
    let phase1_cost = phase1_cost_for(&tab);
    let y = match tab.optimize(&phase1_cost) {
        Ok(y) => y,
        // Phase 1 minimizes a sum of nonnegative variables: never unbounded.
        Err(SimplexStop::Unbounded) | Err(SimplexStop::IterationLimit) => {
            return Err(LinprogError::IterationLimit)
        }
    };
    if tab.artificial_mass().is_zero() {
        Ok(FeasibilityResult::Feasible(tab.solution()))
    } else {
        Ok(FeasibilityResult::Infeasible(tab.certificate(y)))
    }
}

/// Maximizes `objective . x` over the feasible set of `ls`.
pub fn maximize(ls: &LinearSystem, objective: &[Rational]) -> Result<OptimizeResult, LinprogError> {
    if objective.len() != ls.num_columns() {
        return Err(LinprogError::DimensionMismatch {
            expected: ls.num_columns(),
            got: objective.len(),
        });
    }
    let mut tab = Tableau::new(ls)?;
    let phase1_cost = phase1_cost_for(&tab);
    let y = match tab.optimize(&phase1_cost) {
        Ok(y) => y,
        Err(_) => return Err(LinprogError::IterationLimit),
    };
    if !tab.artificial_mass().is_zero() {
        return Ok(OptimizeResult::Infeasible(tab.certificate(y)));
    }
    tab.drive_out_artificials();

    // Phase 2: minimize the negated objective over structural columns.
    let obj: Vec<Rational> = objective.to_vec();
    let num_structural = tab.num_structural;
    let phase2_cost = move |j: usize| {
        if j < num_structural {
            -obj[j].clone()
        } else {
            Rational::zero()
        }
    };
    match tab.optimize(&phase2_cost) {
        Ok(_) => {
            let point = tab.solution();
            let mut value = Rational::zero();
            for (j, c) in objective.iter().enumerate() {
                if !c.is_zero() && !point[j].is_zero() {
                    value += c * &point[j];
                }
            }
            Ok(OptimizeResult::Optimal { value, point })
        }
        Err(SimplexStop::Unbounded) => Ok(OptimizeResult::Unbounded),
        Err(SimplexStop::IterationLimit) => Err(LinprogError::IterationLimit),
    }
}

/// Phase-1 cost vector: 1 on artificials, 0 elsewhere. Owns a copy of the
/// column kinds so the tableau stays mutably borrowable during pivoting.
fn phase1_cost_for(tab: &Tableau<'_>) -> impl Fn(usize) -> Rational {
    let kinds = tab.kind.clone();
    move |j: usize| {
        if kinds[j] == ColKind::Artificial {
            Rational::one()
        } else {
            Rational::zero()
        }
    }
}

/// Re-checks a solver outcome against the system from scratch, with exact
/// arithmetic and no access to solver state. Returns false on any length
/// mismatch, sign violation, or failed identity.
pub fn verify_result(ls: &LinearSystem, result: &FeasibilityResult) -> bool {
    if ls.validate().is_err() {
        return false;
    }
    match result {
        FeasibilityResult::Feasible(x) => {
            if x.len() != ls.num_columns() {
                return false;
            }
            if x.iter().any(|v| v.is_negative()) {
                return false;
            }
            for row in &ls.rows {
                let mut lhs = Rational::zero();
                for (col, a) in &row.coeffs {
                    if !x[*col].is_zero() {
                        lhs += a * &x[*col];
                    }
                }
                let ok = match row.relation {
                    Relation::Le => lhs <= row.rhs,
                    Relation::Eq => lhs == row.rhs,
                    Relation::Ge => lhs >= row.rhs,
                };
                if !ok {
                    return false;
                }
            }
            true
        }
        FeasibilityResult::Infeasible(cert) => {
            let lambda = &cert.row_multipliers;
            let mu = &cert.column_multipliers;
            if lambda.len() != ls.num_rows() || mu.len() != ls.num_columns() {
                return false;
            }
            // Sign conditions make each scaled row a valid `>=` consequence.
            for (row, l) in ls.rows.iter().zip(lambda) {
                let ok = match row.relation {
                    Relation::Le => !l.is_positive(),
                    Relation::Eq => true,
                    Relation::Ge => !l.is_negative(),
                };
                if !ok {
                    return false;
                }
            }
            if mu.iter().any(|m| m.is_negative()) {
                return false;
            }
            // Combined coefficients must vanish identically...
            let mut combined = mu.clone();
            for (row, l) in ls.rows.iter().zip(lambda) {
                if l.is_zero() {
                    continue;
                }
                for (col, a) in &row.coeffs {
                    combined[*col] += l * a;
                }
            }
            if combined.iter().any(|c| !c.is_zero()) {
                return false;
            }
            // ...while the combined bound stays strictly positive.
            let mut beta = Rational::zero();
            for (row, l) in ls.rows.iter().zip(lambda) {
                if !l.is_zero() {
                    beta += l * &row.rhs;
                }
            }
            beta.is_positive()
        }
    }
}
