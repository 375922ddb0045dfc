//! The limit energy and its minimizing structures: piecewise-constant
//! boundary phases, the interface/wall/jump decomposition, the exact
//! dynamic program over boundary labelings, and the recovery fields that
//! realize the limit energy at small eps.
//!
//! The limit of the scaled functionals charges three mechanisms:
//!
//!   Phi(u, v) = sigma_p |S_u|  +  c_p int |Wcal(Tu) - Wcal(v)| dH^1
//!             + gamma_p #(S_v)
//!
//! an interior interface cost per unit length, a wall cost where the bulk
//! trace and the boundary phase disagree, and a fixed cost per boundary
//! phase jump. Here Wcal is the antiderivative of W^{(p-1)/p} and gamma_p
//! is the half-plane cell-problem constant.

use crate::functionals::CellWeights;
use crate::geometry::{Field, GeometryError, HalfPlaneGrid, Polyline, RectDomainGrid};
use crate::par;
use crate::potentials::{antiderivative_w, constant_c_p, constant_sigma_p, DoubleWell, PExponent, PotentialError};
use crate::profiles::Profile1D;
use crate::quad;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LimitError {
    #[error("potential error: {0}")]
    Potential(#[from] PotentialError),
    #[error("geometry error: {0}")]
    Geometry(#[from] GeometryError),
    #[error("boundary function invalid: {0}")]
    BadBoundaryFunction(String),
    #[error("labeling instance too large: {0} segments exceeds the 32-segment gate")]
    TooManySegments(usize),
    #[error("recovery partition infeasible: {0}")]
    InfeasiblePartition(String),
    #[error("boundary phase does not match the bulk trace: {0}")]
    PhaseTraceMismatch(String),
}

/// Piecewise-constant function on a boundary arc, parameterized by
/// arclength t in [0, length). Piece k holds `values[k]` on
/// [breakpoints[k], breakpoints[k+1]), the last piece running to the end
/// and, when `closed`, wrapping to breakpoints[0].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFunction {
    pub length: f64,
    pub closed: bool,
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl BoundaryFunction {
    pub fn new(
        length: f64,
        closed: bool,
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self, LimitError> {
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(LimitError::BadBoundaryFunction(format!(
                "{} breakpoints vs {} values",
                breakpoints.len(),
                values.len()
            )));
        }
        if !(length > 0.0) {
            return Err(LimitError::BadBoundaryFunction(format!("length {length}")));
        }
        if breakpoints[0] != 0.0 && !closed {
            return Err(LimitError::BadBoundaryFunction(
                "an open arc must start its first piece at t = 0".into(),
            ));
        }
        for w in breakpoints.windows(2) {
            if !(w[0] < w[1]) {
                return Err(LimitError::BadBoundaryFunction("breakpoints must increase".into()));
            }
        }
        if *breakpoints.last().unwrap() >= length {
            return Err(LimitError::BadBoundaryFunction("breakpoints must stay below length".into()));
        }
        Ok(Self { length, closed, breakpoints, values })
    }

    /// Constant function on the arc.
    pub fn constant(length: f64, closed: bool, value: f64) -> Self {
        Self { length, closed, breakpoints: vec![0.0], values: vec![value] }
    }

    pub fn piece_count(&self) -> usize {
        self.values.len()
    }

    /// Length of piece k.
    pub fn piece_length(&self, k: usize) -> f64 {
        let n = self.breakpoints.len();
        if k + 1 < n {
            self.breakpoints[k + 1] - self.breakpoints[k]
        } else if self.closed {
            // wraps through the end of the parameter interval
            self.length - self.breakpoints[n - 1] + self.breakpoints[0]
        } else {
            self.length - self.breakpoints[n - 1]
        }
    }

    /// Value at parameter t (t taken mod length for closed arcs).
    pub fn value_at(&self, t: f64) -> f64 {
        let t = if self.closed { t.rem_euclid(self.length) } else { t.clamp(0.0, self.length) };
        // last piece whose breakpoint does not exceed t; before the first
        // breakpoint of a closed arc the wrap piece is active
        let mut idx = self.breakpoints.len() - 1;
        for (k, &bp) in self.breakpoints.iter().enumerate() {
            if bp <= t {
                idx = k;
            } else {
                break;
            }
        }
        if t < self.breakpoints[0] {
            // only possible for closed arcs: the wrapping last piece
            idx = self.breakpoints.len() - 1;
        }
        self.values[idx]
    }

    /// Number of jumps: value changes between consecutive pieces, plus the
    /// wrap change for closed arcs.
    pub fn jump_count(&self) -> usize {
        let n = self.values.len();
        if n <= 1 {
            return 0;
        }
        let mut jumps = 0;
        for w in self.values.windows(2) {
            if w[0] != w[1] {
                jumps += 1;
            }
        }
        if self.closed && self.values[n - 1] != self.values[0] {
            jumps += 1;
        }
        jumps
    }

    /// Parameter positions where the value jumps (piece start points).
    pub fn jump_positions(&self) -> Vec<f64> {
        let n = self.values.len();
        let mut out = Vec::new();
        if n <= 1 {
            return out;
        }
        for k in 1..n {
            if self.values[k] != self.values[k - 1] {
                out.push(self.breakpoints[k]);
            }
        }
        if self.closed && self.values[n - 1] != self.values[0] {
            out.push(self.breakpoints[0]);
        }
        out
    }
}

/// A candidate limit configuration: the bulk interface (if any), the bulk
/// trace restricted to the active boundary arc, and the boundary phase on
/// the same arc.
#[derive(Debug, Clone)]
pub struct LimitPair {
    pub interface: Option<Polyline>,
    pub bulk_trace: BoundaryFunction,
    pub boundary_phase: BoundaryFunction,
}

impl LimitPair {
    pub fn new(
        interface: Option<Polyline>,
        bulk_trace: BoundaryFunction,
        boundary_phase: BoundaryFunction,
    ) -> Result<Self, LimitError> {
        if (bulk_trace.length - boundary_phase.length).abs() > 1e-12 * bulk_trace.length
            || bulk_trace.closed != boundary_phase.closed
        {
            return Err(LimitError::BadBoundaryFunction(
                "trace and phase must live on the same arc".into(),
            ));
        }
        Ok(Self { interface, bulk_trace, boundary_phase })
    }
}

/// The three terms of the limit energy; `total` is their ordered sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiValue {
    pub interface_term: f64,
    pub wall_term: f64,
    pub jump_term: f64,
    pub total: f64,
}

impl PhiValue {
    fn new(interface_term: f64, wall_term: f64, jump_term: f64) -> Self {
        Self { interface_term, wall_term, jump_term, total: interface_term + wall_term + jump_term }
    }
}

/// Evaluate the limit energy of a configuration. `gamma_p` is supplied by
/// the caller (typically an output of the cell-problem estimate); all Wcal
/// evaluations share one quadrature tolerance.
pub fn phi_energy(
    pair: &LimitPair,
    wells: &DoubleWell,
    p: &PExponent,
    gamma_p: f64,
    quad_tol: f64,
) -> Result<PhiValue, LimitError> {
    let sigma = constant_sigma_p(wells, p, quad_tol)?;
    let interface_term = sigma * pair.interface.as_ref().map_or(0.0, |c| c.length());

    // merge the two breakpoint sets and integrate the piecewise-constant
    // wall density exactly
    let tr = &pair.bulk_trace;
    let ph = &pair.boundary_phase;
    let mut cuts: Vec<f64> = tr
        .breakpoints
        .iter()
        .chain(ph.breakpoints.iter())
        .copied()
        .chain([0.0, tr.length])
        .collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    let mut wcal_cache: Vec<(f64, f64)> = Vec::new();
    let mut wcal = |t: f64| -> Result<f64, LimitError> {
        if let Some(&(_, w)) = wcal_cache.iter().find(|(v, _)| *v == t) {
            return Ok(w);
        }
        let w = antiderivative_w(wells, p, t, quad_tol)?;
        wcal_cache.push((t, w));
        Ok(w)
    };
    let cp = constant_c_p(p.value());
    let mut wall_term = 0.0;
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo {
            continue;
        }
        let mid = 0.5 * (lo + hi);
        let wa = wcal(tr.value_at(mid))?;
        let wb = wcal(ph.value_at(mid))?;
        wall_term += cp * (wa - wb).abs() * (hi - lo);
    }

    let jump_term = gamma_p * ph.jump_count() as f64;
    Ok(PhiValue::new(interface_term, wall_term, jump_term))
}

/// An instance of the boundary labeling problem: per-segment costs of the
/// two labels plus a fixed penalty per label change (wrapping when closed).
#[derive(Debug, Clone)]
pub struct SegmentCosts {
    pub cost_low: Vec<f64>,
    pub cost_high: Vec<f64>,
    pub jump_penalty: f64,
    pub closed: bool,
}

#[derive(Clone, Copy)]
struct Cand {
    cost: f64,
    jumps: u32,
    key: u64,
}

impl Cand {
    /// Order: cost, then jump count, then the label bitstring with segment 0
    /// in the most significant position (low label preferred).
    fn better_than(&self, other: &Cand) -> bool {
        if self.cost != other.cost {
            return self.cost < other.cost;
        }
        if self.jumps != other.jumps {
            return self.jumps < other.jumps;
        }
        self.key < other.key
    }
}

fn fold_cost(c: &SegmentCosts, acc: f64, k: usize, label: bool, prev: Option<bool>) -> f64 {
    // jump penalty first, then the segment cost: one fixed fold order shared
    // by the dynamic program and the exhaustive reference
    let mut acc = acc;
    if let Some(prev) = prev {
        if prev != label {
            acc += c.jump_penalty;
        }
    }
    acc + if label { c.cost_high[k] } else { c.cost_low[k] }
}

/// Exact minimizer of a labeling instance by forward dynamic programming
/// over (first label, last label) states. Costs accumulate left to right in
/// the same order as `exhaustive_labeling`, so the optimal value agrees
/// with the brute force bit for bit. Returns (labels, cost, jumps) with
/// `true` meaning the high label.
pub fn optimal_labeling(c: &SegmentCosts) -> Result<(Vec<bool>, f64, u32), LimitError> {
    let n = c.cost_low.len();
    if n == 0 || n != c.cost_high.len() {
        return Err(LimitError::BadBoundaryFunction("empty or mismatched cost table".into()));
    }
    if n > 32 {
        return Err(LimitError::TooManySegments(n));
    }
    // state table indexed [first][last]
    let mut best: [[Option<Cand>; 2]; 2] = [[None; 2]; 2];
    for first in [false, true] {
        let cand = Cand {
            cost: fold_cost(c, 0.0, 0, first, None),
            jumps: 0,
            key: (first as u64) << (n - 1),
        };
        best[first as usize][first as usize] = Some(cand);
    }
    for k in 1..n {
        let mut next: [[Option<Cand>; 2]; 2] = [[None; 2]; 2];
        for first in 0..2 {
            for last in 0..2 {
                let Some(prev) = best[first][last] else { continue };
                for label in [false, true] {
                    let cand = Cand {
                        cost: fold_cost(c, prev.cost, k, label, Some(last == 1)),
                        jumps: prev.jumps + u32::from((last == 1) != label),
                        key: prev.key | ((label as u64) << (n - 1 - k)),
                    };
                    let slot = &mut next[first][label as usize];
                    if slot.map_or(true, |s| cand.better_than(&s)) {
                        *slot = Some(cand);
                    }
                }
            }
        }
        best = next;
    }
    let mut winner: Option<Cand> = None;
    for first in 0..2 {
        for last in 0..2 {
            let Some(mut cand) = best[first][last] else { continue };
            if c.closed && first != last {
                cand.cost += c.jump_penalty;
                cand.jumps += 1;
            }
            if winner.map_or(true, |w| cand.better_than(&w)) {
                winner = Some(cand);
            }
        }
    }
    let w = winner.expect("at least one labeling exists");
    let labels = (0..n).map(|k| (w.key >> (n - 1 - k)) & 1 == 1).collect();
    Ok((labels, w.cost, w.jumps))
}

/// Reference implementation: scan all 2^n labelings, folding costs left to
/// right, keeping the first optimum in (cost, jumps, bitstring) order.
/// Exponential; for tests and small certificates only.
pub fn exhaustive_labeling(c: &SegmentCosts) -> Result<(Vec<bool>, f64, u32), LimitError> {
    let n = c.cost_low.len();
    if n == 0 || n != c.cost_high.len() {
        return Err(LimitError::BadBoundaryFunction("empty or mismatched cost table".into()));
    }
    if n > 24 {
        return Err(LimitError::TooManySegments(n));
    }
    let mut winner: Option<Cand> = None;
    for key in 0..(1_u64 << n) {
        let mut acc = 0.0;
        let mut jumps = 0_u32;
        let mut prev: Option<bool> = None;
        for k in 0..n {
            let label = (key >> (n - 1 - k)) & 1 == 1;
            acc = fold_cost(c, acc, k, label, prev);
            if let Some(p) = prev {
                jumps += u32::from(p != label);
            }
            prev = Some(label);
        }
        let first = (key >> (n - 1)) & 1 == 1;
        let last = prev.unwrap();
        if c.closed && first != last {
            acc += c.jump_penalty;
            jumps += 1;
        }
        let cand = Cand { cost: acc, jumps, key };
        if winner.map_or(true, |w| cand.better_than(&w)) {
            winner = Some(cand);
        }
    }
    let w = winner.expect("nonempty scan");
    let labels = (0..n).map(|k| (w.key >> (n - 1 - k)) & 1 == 1).collect();
    Ok((labels, w.cost, w.jumps))
}

/// Minimize the boundary part of the limit energy over piecewise-constant
/// phases with values in the wells of V, for a fixed bulk trace. Candidate
/// jump locations are the trace breakpoints (jumps elsewhere only add
/// cost), optionally refined so no segment exceeds `max_segment_len`.
pub fn minimize_phi_over_v(
    bulk_trace: &BoundaryFunction,
    wells: &DoubleWell,
    vpot: &DoubleWell,
    p: &PExponent,
    gamma_p: f64,
    max_segment_len: Option<f64>,
    quad_tol: f64,
) -> Result<(BoundaryFunction, f64, u32), LimitError> {
    // segment skeleton: trace pieces, refined to the length cap
    let mut seg_start: Vec<f64> = Vec::new();
    let mut seg_len: Vec<f64> = Vec::new();
    let mut seg_trace: Vec<f64> = Vec::new();
    let npieces = bulk_trace.piece_count();
    for k in 0..npieces {
        let start = bulk_trace.breakpoints[k];
        let len = bulk_trace.piece_length(k);
        let parts = match max_segment_len {
            Some(cap) => (len / cap).ceil().max(1.0) as usize,
            None => 1,
        };
        for j in 0..parts {
            seg_start.push(start + len * j as f64 / parts as f64);
            seg_len.push(len / parts as f64);
            seg_trace.push(bulk_trace.values[k]);
        }
    }
    let n = seg_start.len();
    if n > 32 {
        return Err(LimitError::TooManySegments(n));
    }

    let cp = constant_c_p(p.value());
    let wcal_lo = antiderivative_w(wells, p, vpot.well_low, quad_tol)?;
    let wcal_hi = antiderivative_w(wells, p, vpot.well_high, quad_tol)?;
    let mut cost_low = Vec::with_capacity(n);
    let mut cost_high = Vec::with_capacity(n);
    for k in 0..n {
        let wtr = antiderivative_w(wells, p, seg_trace[k], quad_tol)?;
        cost_low.push(cp * (wtr - wcal_lo).abs() * seg_len[k]);
        cost_high.push(cp * (wtr - wcal_hi).abs() * seg_len[k]);
    }
    let costs = SegmentCosts { cost_low, cost_high, jump_penalty: gamma_p, closed: bulk_trace.closed };
    let (labels, cost, jumps) = optimal_labeling(&costs)?;

    // merge consecutive equal labels into a boundary function
    let mut breakpoints = Vec::new();
    let mut values = Vec::new();
    for k in 0..n {
        let v = if labels[k] { vpot.well_high } else { vpot.well_low };
        if values.last() != Some(&v) {
            breakpoints.push(seg_start[k]);
            values.push(v);
        }
    }
    // a closed arc whose first and last pieces agree keeps the seam implicit
    if bulk_trace.closed && values.len() > 1 && values.first() == values.last() {
        breakpoints.remove(0);
        let v = values.remove(0);
        debug_assert_eq!(values.last(), Some(&v));
    }
    let phase = BoundaryFunction::new(bulk_trace.length, bulk_trace.closed, breakpoints, values)?;
    debug_assert_eq!(phase.jump_count() as u32, jumps, "merged phase must keep the jump count");
    Ok((phase, cost, jumps))
}

/// Bulk recovery: dress the interface with the optimal profile at the
/// depth-dependent width (eps / h)^{(p-2)/(p-1)}, where h is the boundary
/// distance of the projection onto the interface. The per-unit-length
/// interface energy of this field is depth-independent.
pub fn build_bulk_recovery(
    grid: &RectDomainGrid,
    curve: &Polyline,
    profile: &Profile1D,
    eps: f64,
) -> Field {
    assert!(eps > 0.0, "eps must be positive");
    let a_exp = (profile.p - 2.0) / (profile.p - 1.0);
    let values = par::map_indexed(grid.nx * grid.ny, |idx| {
        let (i, j) = (idx % grid.nx, idx / grid.nx);
        let (x, y) = (grid.x(i), grid.y(j));
        let d = curve.signed_distance(x, y);
        let (proj, _, _) = curve.project(x, y);
        let h = grid
            .distance_to_boundary(proj[0], proj[1])
            .expect("interface projections stay inside the closed domain");
        let arg = d * (h / eps).powf(a_exp);
        profile.eval(arg)
    });
    Field { nx: grid.nx, ny: grid.ny, values }
}

/// Wall recovery: a field depending on the boundary distance alone,
/// following the depth-reparameterized profile so the Young balance holds
/// at every point of the layer. With `boundary_high` the trace sits at the
/// high end of the profile and the interior at the low well; otherwise the
/// mirror image.
pub fn build_wall_recovery(
    grid: &RectDomainGrid,
    profile: &Profile1D,
    eps: f64,
    boundary_high: bool,
) -> Field {
    assert!(eps > 0.0, "eps must be positive");
    let p = profile.p;
    let a_exp = (p - 2.0) / (p - 1.0);
    let s_pow = (2.0 * p - 3.0) / (p - 1.0);
    let s_coef = (p - 1.0) / (2.0 * p - 3.0) / eps.powf(a_exp);
    let s_hi = *profile.s.last().expect("profile has samples");
    let s_lo = profile.s[0];
    let values = par::map_indexed(grid.nx * grid.ny, |idx| {
        let (i, j) = (idx % grid.nx, idx / grid.nx);
        let h = grid
            .distance_to_boundary(grid.x(i), grid.y(j))
            .expect("lattice nodes lie in the closed domain");
        let s_of_h = s_coef * h.powf(s_pow);
        let arg = if boundary_high { s_hi - s_of_h } else { s_lo + s_of_h };
        profile.eval(arg)
    });
    Field { nx: grid.nx, ny: grid.ny, values }
}

/// Geometry of the boundary-jump patch: blow-up core up to sigma, blend
/// annulus up to rho, far field outside.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundaryRecovery {
    pub rho: f64,
    pub sigma: f64,
    pub eps: f64,
    pub b_exponent: f64,
}

/// Sample the cell-problem minimizer at blow-up coordinates, falling back
/// to the angular far field outside its lattice (the far field is
/// scale-invariant, so the fallback is seamless at the edge).
fn sample_psi(
    psi: &Field,
    psi_grid: &HalfPlaneGrid,
    xi: f64,
    eta: f64,
    alpha: f64,
    beta: f64,
) -> f64 {
    if xi.abs() <= psi_grid.r && eta >= 0.0 && eta <= psi_grid.h {
        let fi = (xi + psi_grid.r) / psi_grid.delta;
        let fj = eta / psi_grid.delta;
        psi.bilinear(fi, fj)
    } else {
        angular_value(xi, eta, alpha, beta)
    }
}

/// The angular interpolation between the wells: alpha at angle pi, beta at
/// angle 0, midpoint at the origin.
fn angular_value(xi: f64, eta: f64, alpha: f64, beta: f64) -> f64 {
    if xi == 0.0 && eta == 0.0 {
        return 0.5 * (alpha + beta);
    }
    let phi = eta.atan2(xi);
    (phi / std::f64::consts::PI) * alpha + (1.0 - phi / std::f64::consts::PI) * beta
}

/// Build the boundary-jump recovery on a half-plane chart centered at the
/// jump: psi at blow-up scale in the core, a linear radial blend to the
/// angular far field across [sigma, rho], the far field outside. The patch
/// radius is rho = eps^b; the blend annulus must be nonempty and inside
/// the chart.
#[allow(clippy::too_many_arguments)]
pub fn build_boundary_recovery(
    grid: &HalfPlaneGrid,
    psi: &Field,
    psi_grid: &HalfPlaneGrid,
    alpha: f64,
    beta: f64,
    eps: f64,
    b_exponent: f64,
    sigma_fraction: f64,
) -> Result<(Field, BoundaryRecovery), LimitError> {
    assert!(eps > 0.0, "eps must be positive");
    let rho = eps.powf(b_exponent);
    let sigma = sigma_fraction * rho;
    if !(sigma < rho) {
        return Err(LimitError::InfeasiblePartition(format!(
            "cutoff annulus is empty: sigma {sigma} must be below rho {rho}"
        )));
    }
    if rho > grid.r {
        return Err(LimitError::InfeasiblePartition(format!(
            "patch radius rho {rho} exceeds the chart half width {}",
            grid.r
        )));
    }
    let s = eps.sqrt();
    let values = par::map_indexed(grid.nx * grid.ny, |idx| {
        let (i, j) = (idx % grid.nx, idx / grid.nx);
        let (x, y) = (grid.x(i), grid.y(j));
        let r = (x * x + y * y).sqrt();
        if r <= sigma {
            sample_psi(psi, psi_grid, x / s, y / s, alpha, beta)
        } else if r < rho {
            let t = (r - sigma) / (rho - sigma);
            let core = sample_psi(psi, psi_grid, x / s, y / s, alpha, beta);
            (1.0 - t) * core + t * angular_value(x, y, alpha, beta)
        } else {
            angular_value(x, y, alpha, beta)
        }
    });
    let field = Field { nx: grid.nx, ny: grid.ny, values };
    Ok((field, BoundaryRecovery { rho, sigma, eps, b_exponent }))
}

/// The measured boundary-layer diagnostics at one eps: the far-field ring
/// gradient energy, the true blend-annulus gradient energy next to its
/// sup-factored upper bound, and the core well energy next to its coarse
/// area bound. Slopes of these against eps are the content of the
/// boundary-term scaling analysis.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundaryLayerTerms {
    pub ring_grad: f64,
    pub blend_grad: f64,
    pub blend_sup_bound: f64,
    pub core_bulk: f64,
    pub core_bulk_coarse_bound: f64,
    pub rho: f64,
    pub sigma: f64,
}

/// Fraction of a 4x4 midpoint subsample of the cell lying in the radial
/// shell [r tradelo, r_hi); smooths the lattice quantization of shell masks.
fn shell_coverage(grid: &HalfPlaneGrid, ci: usize, cj: usize, r_lo: f64, r_hi: f64) -> f64 {
    let mut hits = 0;
    for a in 0..4 {
        for b in 0..4 {
            let x = grid.x(ci) + (a as f64 + 0.5) * grid.delta / 4.0;
            let y = grid.y(cj) + (b as f64 + 0.5) * grid.delta / 4.0;
            let r = (x * x + y * y).sqrt();
            if r >= r_lo && r < r_hi {
                hits += 1;
            }
        }
    }
    hits as f64 / 16.0
}

/// Measure the three boundary-layer terms of a recovery field in original
/// variables (gradient terms carry eps^{p-2}, the well term carries
/// eps^{-(p-2)/(p-1)}).
pub fn boundary_layer_terms(
    field: &Field,
    grid: &HalfPlaneGrid,
    rec: &BoundaryRecovery,
    psi: &Field,
    psi_grid: &HalfPlaneGrid,
    wells: &DoubleWell,
    p: &PExponent,
    alpha: f64,
    beta: f64,
) -> BoundaryLayerTerms {
    let w = CellWeights::for_halfplane(grid, p);
    let pe = p.value();
    let ncx = w.ncx;
    let (rho, sigma, eps) = (rec.rho, rec.sigma, rec.eps);
    let cg = eps.powf(pe - 2.0);
    let cb = eps.powf(-p.bulk_weight_exponent());

    // per cell: (ring grad, blend grad, blend weight, core well energy)
    let cells = par::map_indexed(w.ncx * w.ncy, |idx| {
        let (ci, cj) = (idx % ncx, idx / ncx);
        let base = cj * field.nx + ci;
        let ub = field.values[base];
        let gx = (field.values[base + 1] - ub) / w.delta;
        let gy = (field.values[base + field.nx] - ub) / w.delta;
        let gp = {
            let t = gx * gx + gy * gy;
            if t == 0.0 {
                0.0
            } else {
                t.powf(0.5 * pe)
            }
        };
        let cov_ring = shell_coverage(grid, ci, cj, rho, f64::INFINITY);
        let cov_blend = shell_coverage(grid, ci, cj, sigma, rho);
        let cov_core = shell_coverage(grid, ci, cj, 0.0, rho);
        let ax = wells.segment_average(ub, field.values[base + 1]);
        let ay = wells.segment_average(ub, field.values[base + field.nx]);
        (
            cov_ring * gp * w.grad[idx],
            cov_blend * gp * w.grad[idx],
            cov_blend * w.grad[idx],
            cov_core * ax.max(ay) * w.bulk[idx],
        )
    });
    let ring_grad = cg * quad::tree_sum_by(&cells, |c| c.0);
    let blend_grad = cg * quad::tree_sum_by(&cells, |c| c.1);
    let blend_weight = quad::tree_sum_by(&cells, |c| c.2);
    let core_bulk = cb * quad::tree_sum_by(&cells, |c| c.3);

    // sup factor over nodes near the blend annulus
    let s = eps.sqrt();
    let mut sup = 0.0_f64;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let (x, y) = (grid.x(i), grid.y(j));
            let r = (x * x + y * y).sqrt();
            if r >= sigma - grid.delta && r <= rho + grid.delta {
                let diff = (sample_psi(psi, psi_grid, x / s, y / s, alpha, beta)
                    - angular_value(x, y, alpha, beta))
                .abs();
                sup = sup.max(diff);
            }
        }
    }
    let blend_sup_bound = cg * (rho - sigma).powf(-pe) * sup.powf(pe) * blend_weight;

    // coarse core bound: patch area times the well barrier, no weight gain
    let barrier = wells.eval(0.5 * (wells.well_low + wells.well_high));
    let core_bulk_coarse_bound = cb * rho * rho * barrier;

    BoundaryLayerTerms {
        ring_grad,
        blend_grad,
        blend_sup_bound,
        core_bulk,
        core_bulk_coarse_bound,
        rho,
        sigma,
    }
}

/// McShane extension of boundary data into the rectangle: the infimum of
/// cone functions over all boundary nodes. The Lipschitz constant is
/// eps^{-(p-2)/(p-1)} plus the discrete Lipschitz constant of the data
/// itself, so the extension reproduces the data exactly on the boundary.
pub fn build_lipschitz_extension(
    trace: &[f64],
    grid: &RectDomainGrid,
    p: &PExponent,
    eps: f64,
) -> Field {
    assert!(eps > 0.0, "eps must be positive");
    let loop_nodes = grid.boundary_loop();
    assert_eq!(trace.len(), loop_nodes.len(), "trace must cover the boundary loop");
    let pts: Vec<(f64, f64, f64)> = loop_nodes
        .iter()
        .zip(trace.iter())
        .map(|(&(i, j), &v)| (grid.x(i), grid.y(j), v))
        .collect();
    let mut lip_data = 0.0_f64;
    for a in 0..pts.len() {
        for b in a + 1..pts.len() {
            let d = ((pts[a].0 - pts[b].0).powi(2) + (pts[a].1 - pts[b].1).powi(2)).sqrt();
            if d > 0.0 {
                lip_data = lip_data.max((pts[a].2 - pts[b].2).abs() / d);
            }
        }
    }
    let lip = eps.powf(-p.bulk_weight_exponent()) + lip_data;
    let values = par::map_indexed(grid.nx * grid.ny, |idx| {
        let (i, j) = (idx % grid.nx, idx / grid.nx);
        let (x, y) = (grid.x(i), grid.y(j));
        pts.iter()
            .map(|&(bx, by, v)| v + lip * ((x - bx).powi(2) + (y - by).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min)
    });
    Field { nx: grid.nx, ny: grid.ny, values }
}

/// Placement parameters of the standard-pair recovery: a vertical interface
/// at `interface_x` meeting the bottom side, a constant band of half-width
/// `tube_radius` along the boundary, and a boundary patch of radius
/// eps^{patch_exponent} (clamped to the tube radius) at the jump.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StandardPairLayout {
    pub interface_x: f64,
    pub tube_radius: f64,
    pub patch_exponent: f64,
}

impl Default for StandardPairLayout {
    fn default() -> Self {
        Self { interface_x: 0.5, tube_radius: 0.15, patch_exponent: 1.0 / 3.0 }
    }
}

/// The bulk trace of the standard pair on the bottom side, as an open arc.
pub fn standard_pair_trace(lx: f64, interface_x: f64, alpha: f64, beta: f64) -> BoundaryFunction {
    BoundaryFunction::new(lx, false, vec![0.0, interface_x], vec![alpha, beta])
        .expect("two ordered pieces")
}

/// Assemble the global recovery field for the standard pair: boundary
/// patch (cell minimizer at blow-up scale, blended to the angular field),
/// constant phases in the boundary band, the dressed interface in the
/// bulk, and linear blends in between. Fails rather than degrades when the
/// pieces do not fit or the boundary phase disagrees with the trace.
#[allow(clippy::too_many_arguments)]
pub fn assemble_global_recovery(
    grid: &RectDomainGrid,
    profile: &Profile1D,
    psi: &Field,
    psi_grid: &HalfPlaneGrid,
    v_star: &BoundaryFunction,
    layout: &StandardPairLayout,
    eps: f64,
) -> Result<Field, LimitError> {
    assert!(eps > 0.0, "eps must be positive");
    let (alpha, beta) = (profile.wells.well_low, profile.wells.well_high);
    let r = layout.tube_radius;
    let jx = layout.interface_x;

    // the pieces must fit: patch ball inside the square and clear of the
    // lateral sides, constant band below the bulk region
    if 3.0 * r > jx || 3.0 * r > grid.lx - jx || 2.0 * r >= grid.ly {
        return Err(LimitError::InfeasiblePartition(format!(
            "tube radius {r} does not fit a jump at x = {jx} in a {} x {} box",
            grid.lx, grid.ly
        )));
    }
    // the recovery realizes the wall-free pair: the boundary phase must be
    // the bulk trace itself (one jump at the interface foot, well values)
    let want = standard_pair_trace(grid.lx, jx, alpha, beta);
    let matches = v_star.closed == want.closed
        && v_star.values.len() == 2
        && (v_star.values[0] - alpha).abs() < 1e-12
        && (v_star.values[1] - beta).abs() < 1e-12
        && (v_star.breakpoints[1] - jx).abs() < 1e-9;
    if !matches {
        return Err(LimitError::PhaseTraceMismatch(format!(
            "expected the trace phase {:?}, got {:?}",
            (want.breakpoints, want.values),
            (v_star.breakpoints.clone(), v_star.values.clone())
        )));
    }

    let rho = eps.powf(layout.patch_exponent).min(r);
    let sigma = 0.5 * rho;
    let s = eps.sqrt();
    let a_exp = (profile.p - 2.0) / (profile.p - 1.0);
    let interface =
        Polyline::new(vec![[jx, 0.0], [jx, grid.ly]]).expect("vertical interface is simple");

    let outer_value = |x: f64, y: f64| -> f64 {
        let theta_field = {
            let d = x - jx;
            let proj_y = y.clamp(0.0, grid.ly);
            let h = grid
                .distance_to_boundary(jx, proj_y)
                .expect("projection stays inside the box");
            profile.eval(d * (h / eps).powf(a_exp))
        };
        let const_field = if x < jx {
            alpha
        } else if x > jx {
            beta
        } else {
            0.5 * (alpha + beta)
        };
        if y <= r {
            const_field
        } else if y >= 2.0 * r {
            theta_field
        } else {
            let z = (y - r) / r;
            (1.0 - z) * const_field + z * theta_field
        }
    };

    let values = par::map_indexed(grid.nx * grid.ny, |idx| {
        let (i, j) = (idx % grid.nx, idx / grid.nx);
        let (x, y) = (grid.x(i), grid.y(j));
        let (xi, eta) = (x - jx, y);
        let rr = (xi * xi + eta * eta).sqrt();
        if rr >= 3.0 * r {
            return outer_value(x, y);
        }
        let ubar = angular_value(xi, eta, alpha, beta);
        if rr <= sigma {
            sample_psi(psi, psi_grid, xi / s, eta / s, alpha, beta)
        } else if rr < rho {
            let t = (rr - sigma) / (rho - sigma);
            let core = sample_psi(psi, psi_grid, xi / s, eta / s, alpha, beta);
            (1.0 - t) * core + t * ubar
        } else if rr <= 1.5 * r {
            ubar
        } else {
            let z = (rr - 1.5 * r) / (1.5 * r);
            (1.0 - z) * ubar + z * outer_value(x, y)
        }
    });
    let _ = interface;
    Ok(Field { nx: grid.nx, ny: grid.ny, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::DoubleWell;
    use crate::profiles::{solve_profile_ode, ProfileOptions};

    fn p25() -> PExponent {
        PExponent::new(2.5).unwrap()
    }

    #[test]
    fn boundary_function_pieces_and_jumps() {
        // closed loop: three pieces, wrap jump counts
        let f = BoundaryFunction::new(4.0, true, vec![0.5, 1.5, 3.0], vec![1.0, -1.0, 1.0])
            .unwrap();
        assert_eq!(f.piece_count(), 3);
        assert!((f.piece_length(0) - 1.0).abs() < 1e-15);
        assert!((f.piece_length(1) - 1.5).abs() < 1e-15);
        assert!((f.piece_length(2) - 1.5).abs() < 1e-15, "wrap piece 3.0 -> 0.5");
        assert_eq!(f.jump_count(), 2);
        assert_eq!(f.value_at(0.1), 1.0, "before the first breakpoint the wrap piece rules");
        assert_eq!(f.value_at(2.0), -1.0);
        // open arc: no wrap jump
        let g = BoundaryFunction::new(4.0, false, vec![0.0, 1.0], vec![1.0, -1.0]).unwrap();
        assert_eq!(g.jump_count(), 1);
        assert_eq!(g.jump_positions(), vec![1.0]);
        let c = BoundaryFunction::constant(2.0, true, 0.5);
        assert_eq!(c.jump_count(), 0);
    }

    #[test]
    fn phi_of_the_standard_pair() {
        let wells = DoubleWell::quartic_pm1();
        let p = p25();
        let trace = standard_pair_trace(1.0, 0.5, -1.0, 1.0);
        let phase = trace.clone();
        let interface = Polyline::new(vec![[0.5, 0.0], [0.5, 1.0]]).unwrap();
        let pair = LimitPair::new(Some(interface), trace, phase).unwrap();
        let gamma = 1.75;
        let phi = phi_energy(&pair, &wells, &p, gamma, 1e-11).unwrap();
        let sigma = crate::potentials::constant_sigma_p(&wells, &p, 1e-12).unwrap();
        assert!((phi.interface_term - sigma).abs() < 1e-9, "unit-length interface");
        assert_eq!(phi.wall_term, 0.0, "phase equals trace: no wall");
        assert!((phi.jump_term - gamma).abs() < 1e-15, "one jump");
        assert_eq!(phi.total, phi.interface_term + phi.wall_term + phi.jump_term);
    }

    #[test]
    fn wall_term_integrates_the_disagreement() {
        let wells = DoubleWell::quartic_pm1();
        let p = p25();
        // trace constant low, phase constant high on an arc of length 2
        let trace = BoundaryFunction::constant(2.0, false, -1.0);
        let phase = BoundaryFunction::constant(2.0, false, 1.0);
        let pair = LimitPair::new(None, trace, phase).unwrap();
        let phi = phi_energy(&pair, &wells, &p, 0.7, 1e-11).unwrap();
        let sigma = crate::potentials::constant_sigma_p(&wells, &p, 1e-12).unwrap();
        // c_p |Wcal(1) - Wcal(-1)| = sigma_p per unit length, times length 2
        assert!((phi.wall_term - 2.0 * sigma).abs() < 1e-9);
        assert_eq!(phi.jump_term, 0.0);
    }

    #[test]
    fn dp_matches_exhaustive_bit_for_bit() {
        // deterministic pseudo-random instances, both topologies
        let mut state = 0x9e3779b97f4a7c15_u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1_u64 << 53) as f64
        };
        for trial in 0..60 {
            let n = 1 + (trial % 12);
            let closed = trial % 2 == 0;
            let cost_low: Vec<f64> = (0..n).map(|_| next() * 3.0).collect();
            let cost_high: Vec<f64> = (0..n).map(|_| next() * 3.0).collect();
            let costs = SegmentCosts { cost_low, cost_high, jump_penalty: next(), closed };
            let (la, ca, ja) = optimal_labeling(&costs).unwrap();
            let (lb, cb, jb) = exhaustive_labeling(&costs).unwrap();
            assert_eq!(ca.to_bits(), cb.to_bits(), "trial {trial}: cost mismatch {ca} vs {cb}");
            assert_eq!(ja, jb, "trial {trial}: jump count");
            assert_eq!(la, lb, "trial {trial}: labeling");
        }
    }

    #[test]
    fn dp_prefers_fewer_jumps_then_low_label_on_ties() {
        // all costs zero: the constant-low labeling is the canonical optimum
        let costs = SegmentCosts {
            cost_low: vec![0.0; 5],
            cost_high: vec![0.0; 5],
            jump_penalty: 0.0,
            closed: true,
        };
        let (labels, cost, jumps) = optimal_labeling(&costs).unwrap();
        assert_eq!(cost, 0.0);
        assert_eq!(jumps, 0);
        assert!(labels.iter().all(|l| !l), "ties resolve to the low label");
    }

    #[test]
    fn phase_optimization_keeps_the_trace_when_jumps_are_cheap() {
        let wells = DoubleWell::quartic_pm1();
        let vpot = DoubleWell::quartic_pm1();
        let p = p25();
        let trace = standard_pair_trace(1.0, 0.5, -1.0, 1.0);
        let (phase, _, jumps) =
            minimize_phi_over_v(&trace, &wells, &vpot, &p, 0.5, None, 1e-11).unwrap();
        assert_eq!(jumps, 1);
        assert_eq!(phase.values, vec![-1.0, 1.0]);
        assert!((phase.breakpoints[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn phase_optimization_drops_the_jump_when_it_is_dear() {
        let wells = DoubleWell::quartic_pm1();
        let vpot = DoubleWell::quartic_pm1();
        let p = p25();
        // short high piece: wall cost of ignoring it is below the jump cost
        let trace = BoundaryFunction::new(1.0, false, vec![0.0, 0.9], vec![-1.0, 1.0]).unwrap();
        let sigma = crate::potentials::constant_sigma_p(&wells, &p, 1e-12).unwrap();
        let dear = 2.0 * sigma; // two jumps would cost 4 sigma, wall only 0.1 sigma
        let (phase, _, jumps) =
            minimize_phi_over_v(&trace, &wells, &vpot, &p, dear, None, 1e-11).unwrap();
        assert_eq!(jumps, 0, "phase {:?}", phase);
        assert_eq!(phase.values, vec![-1.0]);
    }

    #[test]
    fn lipschitz_extension_reproduces_boundary_data() {
        let grid = RectDomainGrid::unit_square(0.125).unwrap();
        let p = p25();
        let loop_nodes = grid.boundary_loop();
        let trace: Vec<f64> =
            (0..loop_nodes.len()).map(|k| if k < 10 { -1.0 } else { 1.0 }).collect();
        let eps = 0.05;
        let ext = build_lipschitz_extension(&trace, &grid, &p, eps);
        for (t, &(i, j)) in trace.iter().zip(loop_nodes.iter()) {
            assert!(
                (ext.at(i, j) - t).abs() < 1e-12,
                "extension must match the data at ({i},{j})"
            );
        }
        // Lipschitz bound across all node pairs
        let mut lip_data = 0.0_f64;
        let pts: Vec<(f64, f64, f64)> = loop_nodes
            .iter()
            .zip(trace.iter())
            .map(|(&(i, j), &v)| (grid.x(i), grid.y(j), v))
            .collect();
        for a in 0..pts.len() {
            for b in a + 1..pts.len() {
                let d = ((pts[a].0 - pts[b].0).powi(2) + (pts[a].1 - pts[b].1).powi(2)).sqrt();
                if d > 0.0 {
                    lip_data = lip_data.max((pts[a].2 - pts[b].2).abs() / d);
                }
            }
        }
        let lip = eps.powf(-p.bulk_weight_exponent()) + lip_data;
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                for (dj, di) in [(0_usize, 1_usize), (1, 0)] {
                    if i + di < grid.nx && j + dj < grid.ny {
                        let diff = (ext.at(i + di, j + dj) - ext.at(i, j)).abs();
                        assert!(
                            diff <= lip * grid.delta * (1.0 + 1e-12),
                            "edge ({i},{j})+({di},{dj}) violates the Lipschitz bound"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn wall_recovery_spans_boundary_to_bulk() {
        let wells = DoubleWell::quartic_pm1();
        let p = p25();
        let prof = solve_profile_ode(&wells, &p, &ProfileOptions::default()).unwrap();
        let grid = RectDomainGrid::new(2.0, 1.0, 0.0625).unwrap();
        let eps = 0.01;
        let f = build_wall_recovery(&grid, &prof, eps, true);
        // on the boundary the field sits at the high cut, deep inside at the low cut
        let b = f.at(0, 0);
        assert!((b - prof.theta.last().unwrap()).abs() < 1e-12);
        let center = f.at(grid.nx / 2, grid.ny / 2);
        assert!(
            (center - prof.theta[0]).abs() < 1e-6,
            "center {center} should be near the low well"
        );
    }

    #[test]
    fn bulk_recovery_is_the_profile_across_the_interface() {
        let wells = DoubleWell::quartic_pm1();
        let p = p25();
        let prof = solve_profile_ode(&wells, &p, &ProfileOptions::default()).unwrap();
        let grid = RectDomainGrid::unit_square(0.0625).unwrap();
        let curve = Polyline::new(vec![[0.5, 0.0], [0.5, 1.0]]).unwrap();
        let f = build_bulk_recovery(&grid, &curve, &prof, 0.05);
        // left of the interface low, right high, midline at the midpoint
        assert!(f.at(1, 8) < -0.9);
        assert!(f.at(grid.nx - 2, 8) > 0.9);
        let midcol = f.at(grid.nx / 2, 8);
        assert!(midcol.abs() < 1e-9, "interface column carries the midpoint value");
    }

    #[test]
    fn boundary_recovery_rejects_oversized_patches() {
        let wells = DoubleWell::quartic_pm1();
        let p = p25();
        let psi_grid = HalfPlaneGrid::new(2.0, 1.0, 0.25).unwrap();
        let psi = crate::profiles::polar_extension(&psi_grid, -1.0, 1.0);
        let grid = HalfPlaneGrid::new(0.5, 0.5, 0.0625).unwrap();
        // rho = eps^b = 0.9^(1/3) ~ 0.965 exceeds the chart half width 0.5
        let r = build_boundary_recovery(&grid, &psi, &psi_grid, -1.0, 1.0, 0.9, 1.0 / 3.0, 0.5);
        assert!(matches!(r, Err(LimitError::InfeasiblePartition(_))));
        // sigma fraction 1 empties the annulus
        let r2 = build_boundary_recovery(&grid, &psi, &psi_grid, -1.0, 1.0, 0.01, 1.0 / 3.0, 1.0);
        assert!(matches!(r2, Err(LimitError::InfeasiblePartition(_))));
        let _ = wells;
    }

    #[test]
    fn global_recovery_checks_its_preconditions() {
        let wells = DoubleWell::quartic_pm1();
        let p = p25();
        let prof = solve_profile_ode(&wells, &p, &ProfileOptions::default()).unwrap();
        let grid = RectDomainGrid::unit_square(0.125).unwrap();
        let psi_grid = HalfPlaneGrid::new(2.0, 1.0, 0.25).unwrap();
        let psi = crate::profiles::polar_extension(&psi_grid, -1.0, 1.0);
        let layout = StandardPairLayout::default();
        let good = standard_pair_trace(1.0, 0.5, -1.0, 1.0);
        let built =
            assemble_global_recovery(&grid, &prof, &psi, &psi_grid, &good, &layout, 0.05);
        assert!(built.is_ok());
        let f = built.unwrap();
        for v in &f.values {
            assert!(v.is_finite() && *v >= -1.0 - 1e-9 && *v <= 1.0 + 1e-9);
        }
        // wrong phase: constant, missing the jump
        let bad = BoundaryFunction::constant(1.0, false, -1.0);
        let r = assemble_global_recovery(&grid, &prof, &psi, &psi_grid, &bad, &layout, 0.05);
        assert!(matches!(r, Err(LimitError::PhaseTraceMismatch(_))));
        // oversized tube
        let fat = StandardPairLayout { tube_radius: 0.2, ..Default::default() };
        let r2 = assemble_global_recovery(&grid, &prof, &psi, &psi_grid, &good, &fat, 0.05);
        assert!(matches!(r2, Err(LimitError::InfeasiblePartition(_))));
    }
}
