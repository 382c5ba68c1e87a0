//! The primal approximating chain and the dual chain on the truncated lattice
//! `(h·ℤ₊^d) ∩ [0,K]^d`, `h = 1/√n`.

mod compiled;
pub mod rates;

use alloc::format;
use alloc::vec::Vec;

pub use compiled::{potential, CompiledChain, DEFAULT_STATE_CAP};
pub use rates::{Direction, RateContext, RateTable, Side};

use crate::error::LatticeError;
use crate::model::RbmSpec;
use crate::MAX_DIM;

/// Free constants of the boundary tables.
///
/// On a face `x_i = 0` the tangential constants are `c₊ = c0 + m₊`,
/// `c₋ = c0 + m₋` with `m = −r_ii a_ij / a_ii`; at corners both equal `c0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryConstants {
    pub c0: f64,
}

impl Default for BoundaryConstants {
    fn default() -> Self {
        Self { c0: 1.0 }
    }
}

impl BoundaryConstants {
    pub fn new(c0: f64) -> Result<Self, LatticeError> {
        if c0 > 0.0 && c0.is_finite() {
            Ok(Self { c0 })
        } else {
            Err(LatticeError::Constants(format!("c0 = {c0} must be positive and finite")))
        }
    }
}

/// Scale `n` and truncation level `K`, a multiple of `h` with `K ≥ 2h`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatticeParams {
    n: u64,
    k: f64,
    steps: u32,
}

impl LatticeParams {
    pub fn new(n: u64, k: f64) -> Result<Self, LatticeError> {
        if n == 0 {
            return Err(LatticeError::Params("scale n must be positive".into()));
        }
        let h = 1.0 / libm::sqrt(n as f64);
        if !(k.is_finite() && k >= h * (1.0 - 1e-9)) {
            return Err(LatticeError::Params(format!("K = {k} is below the lattice step h = {h}: empty lattice")));
        }
        let m = libm::round(k / h);
        if (m * h - k).abs() > 1e-9 * k.max(1.0) {
            return Err(LatticeError::Params(format!("K = {k} is not a multiple of h = {h}")));
        }
        if m < 2.0 {
            return Err(LatticeError::Params(format!("K = {k} must be at least 2h = {}", 2.0 * h)));
        }
        if m > u32::MAX as f64 / 2.0 {
            return Err(LatticeError::Params(format!("K = {k} gives too many lattice steps")));
        }
        Ok(Self { n, k, steps: m as u32 })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn h(&self) -> f64 {
        1.0 / libm::sqrt(self.n as f64)
    }

    pub fn sqrt_n(&self) -> f64 {
        libm::sqrt(self.n as f64)
    }

    /// `K / h`, the largest coordinate in lattice units.
    pub fn steps(&self) -> u32 {
        self.steps
    }
}

/// Zero set, clamped set and boundary-layer membership of a site.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SiteClass {
    /// Bit `i` set iff `x_i = 0`.
    pub zero: u32,
    /// Bit `i` set iff `x_i = K`.
    pub upper: u32,
    /// Some coordinate is at most `h`.
    pub layer: bool,
}

/// Site enumeration of `{0..m}^d`, lexicographic with the first coordinate
/// most significant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Lattice {
    d: usize,
    m: u32,
}

impl Lattice {
    pub fn new(d: usize, m: u32) -> Self {
        assert!((1..=MAX_DIM).contains(&d));
        Self { d, m }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn steps(&self) -> u32 {
        self.m
    }

    /// `(m+1)^d`, or `None` on overflow.
    pub fn num_states(&self) -> Option<u64> {
        (0..self.d).try_fold(1u64, |acc, _| acc.checked_mul(self.m as u64 + 1))
    }

    pub fn contains(&self, site: &[i64]) -> bool {
        site.len() == self.d && site.iter().all(|&k| (0..=self.m as i64).contains(&k))
    }

    pub fn index_of(&self, site: &[i64]) -> Option<usize> {
        if !self.contains(site) {
            return None;
        }
        Some(site.iter().fold(0usize, |acc, &k| acc * (self.m as usize + 1) + k as usize))
    }

    pub fn site_of(&self, mut index: usize) -> [i64; MAX_DIM] {
        let mut s = [0i64; MAX_DIM];
        let base = self.m as usize + 1;
        for k in (0..self.d).rev() {
            s[k] = (index % base) as i64;
            index /= base;
        }
        s
    }

    pub fn classify(&self, site: &[i64]) -> SiteClass {
        let mut c = SiteClass { zero: 0, upper: 0, layer: false };
        for (i, &k) in site.iter().enumerate().take(self.d) {
            if k == 0 {
                c.zero |= 1 << i;
            }
            if k == self.m as i64 {
                c.upper |= 1 << i;
            }
            if k <= 1 {
                c.layer = true;
            }
        }
        c
    }

    /// `site + dir` if it stays on the lattice.
    pub fn step(&self, site: &[i64], dir: &Direction) -> Option<[i64; MAX_DIM]> {
        let mut t = [0i64; MAX_DIM];
        for k in 0..self.d {
            t[k] = site[k] + dir[k] as i64;
            if t[k] < 0 || t[k] > self.m as i64 {
                return None;
            }
        }
        Some(t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChainKind {
    Primal,
    Dual,
}

/// A lattice chain with a site-classified rate oracle.
#[derive(Clone, Debug)]
pub struct ChainSpec {
    spec: RbmSpec,
    params: LatticeParams,
    constants: BoundaryConstants,
    kind: ChainKind,
    lattice: Lattice,
    ctx: RateContext<f64>,
    primal_tables: Vec<RateTable<f64>>,
    dual_tables: Vec<RateTable<f64>>,
    primal_dirs: Vec<Direction>,
}

/// Smallest `n` for which every rate of every table is nonnegative.
pub fn min_scale(spec: &RbmSpec) -> Result<u64, LatticeError> {
    Ok(context(spec, u64::MAX >> 12, BoundaryConstants::default())?.min_scale())
}

fn context(spec: &RbmSpec, n: u64, constants: BoundaryConstants) -> Result<RateContext<f64>, LatticeError> {
    RateContext::new(
        spec.drift().to_vec(),
        spec.covariance().as_slice().to_vec(),
        spec.reflection().as_slice().to_vec(),
        n,
        libm::sqrt(n as f64),
        constants.c0,
    )
}

/// Primal chain. Requires diagonal dominance of `A`, positive principal row
/// sums of `R` and `R*`, and `n ≥ min_scale`; the sign of `R⁻¹b` is not
/// checked, so transient drifts can be simulated too.
pub fn build_chain(
    spec: &RbmSpec,
    params: LatticeParams,
    constants: BoundaryConstants,
) -> Result<ChainSpec, LatticeError> {
    BoundaryConstants::new(constants.c0)?;
    let ctx = context(spec, params.n(), constants)?;
    let d = spec.dim();
    let masks = 1u32 << d;
    let primal_tables = (0..masks).map(|m| ctx.boundary(m, Side::Primal)).collect::<Result<Vec<_>, _>>()?;
    let dual_tables = (0..masks).map(|m| ctx.boundary(m, Side::Dual)).collect::<Result<Vec<_>, _>>()?;
    let mut primal_dirs: Vec<Direction> = primal_tables.iter().flat_map(|t| t.jumps().iter().map(|j| j.0)).collect();
    primal_dirs.sort();
    primal_dirs.dedup();
    Ok(ChainSpec {
        spec: spec.clone(),
        params,
        constants,
        kind: ChainKind::Primal,
        lattice: Lattice::new(d, params.steps()),
        ctx,
        primal_tables,
        dual_tables,
        primal_dirs,
    })
}

/// Dual chain of a primal chain: the transpose away from the boundary layer,
/// boundary-type rates with `R*` on the faces and corners.
pub fn build_dual_chain(primal: &ChainSpec) -> ChainSpec {
    let mut c = primal.clone();
    c.kind = ChainKind::Dual;
    c
}

impl ChainSpec {
    pub fn spec(&self) -> &RbmSpec {
        &self.spec
    }

    pub fn params(&self) -> LatticeParams {
        self.params
    }

    pub fn constants(&self) -> BoundaryConstants {
        self.constants
    }

    pub fn kind(&self) -> ChainKind {
        self.kind
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn context(&self) -> &RateContext<f64> {
        &self.ctx
    }

    pub fn primal(&self) -> ChainSpec {
        let mut c = self.clone();
        c.kind = ChainKind::Primal;
        c
    }

    /// Untruncated table for the zero set `mask`.
    pub fn class_table(&self, mask: u32, layer: bool) -> &RateTable<f64> {
        match self.kind {
            ChainKind::Primal => &self.primal_tables[mask as usize],
            ChainKind::Dual if layer => &self.dual_tables[mask as usize],
            ChainKind::Dual => &self.dual_tables[0],
        }
    }

    fn primal_rate_at(&self, site: &[i64], dir: &Direction) -> f64 {
        let mask = self.lattice.classify(site).zero;
        self.primal_tables[mask as usize].rate(dir)
    }

    fn check_site(&self, site: &[i64]) -> Result<(), LatticeError> {
        if self.lattice.contains(site) {
            Ok(())
        } else {
            Err(LatticeError::SiteOutside(site.to_vec()))
        }
    }

    /// Jump rates at `site` (lattice units), with exits from `[0,K]^d`
    /// removed, sorted by direction.
    ///
    /// On the dual boundary layer any jump `x → y` with `q_{y,x} > 0` that
    /// the boundary tables lack is added at rate `q_{y,x}`, so the dual
    /// chain always dominates the support of the transposed primal.
    pub fn rates_at(&self, site: &[i64]) -> Result<RateTable<f64>, LatticeError> {
        self.check_site(site)?;
        let class = self.lattice.classify(site);
        let mut table = self.class_table(class.zero, class.layer).clone();
        table.retain(|dir| self.lattice.step(site, dir).is_some());
        if self.kind == ChainKind::Dual && class.layer {
            for (dir, rate) in self.completions(site, &table) {
                table.add(dir, rate);
            }
        }
        table.sort();
        Ok(table)
    }

    fn completions(&self, site: &[i64], table: &RateTable<f64>) -> Vec<(Direction, f64)> {
        let mut out = Vec::new();
        for dir in &self.primal_dirs {
            let back = rates::negate(dir);
            let Some(from) = self.lattice.step(site, &back) else { continue };
            let q = self.primal_rate_at(&from[..self.dim()], dir);
            if q > 0.0 && table.rate(&back) == 0.0 {
                out.push((back, q));
            }
        }
        out
    }

    /// Number of dual jumps added by support completion over the lattice.
    pub fn support_completions(&self) -> usize {
        let Some(total) = self.lattice.num_states() else { return 0 };
        let dual = build_dual_chain(self);
        (0..total as usize)
            .map(|idx| {
                let s = self.lattice.site_of(idx);
                let site = &s[..self.dim()];
                let class = self.lattice.classify(site);
                if !class.layer {
                    return 0;
                }
                let mut t = dual.class_table(class.zero, true).clone();
                t.retain(|dir| self.lattice.step(site, dir).is_some());
                dual.completions(site, &t).len()
            })
            .sum()
    }
}
