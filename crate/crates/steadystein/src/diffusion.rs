//! Stationary densities of the one-dimensional diffusion approximations.
//!
//! The log-density `psi(x) = ln(2/a(x)) + int_0^x 2b/a` is quadratic or linear
//! on pieces where `a` is constant, and handled in closed form there. Where `a`
//! is linear the exponent has a closed-form antiderivative but the density has
//! no closed-form integral, so those pieces are integrated by adaptive Simpson
//! once and the leaf partition is reused for every moment and CDF query.

use crate::error::{Error, Result};
use crate::models::{Mode, QueueParams};
use crate::numeric::{ksum, ln_add_exp, ln_norm_interval, log1p_minus, simpson, KahanSum};

/// Absolute error per unit length, in units of the piece's peak density.
const LEAF_TOL: f64 = 1e-17;
/// Relative acceptance for a leaf; the Boole value is much tighter than this.
const REL_LEAF_TOL: f64 = 1e-10;
/// Log-density drop beyond which an unbounded rational tail is cut.
const TAIL_DROP: f64 = 90.0;
pub const MAX_MOMENT: u32 = 20;

#[derive(Clone, Debug)]
struct Leaf {
    a: f64,
    b: f64,
    /// `f` at `a`, `a + h/4`, `a + h/2`, `a + 3h/4`, `b` with `f = exp(psi - shift)`.
    f: [f64; 5],
}

impl Leaf {
    fn xs(&self) -> [f64; 5] {
        let h = self.b - self.a;
        [self.a, self.a + 0.25 * h, self.a + 0.5 * h, self.a + 0.75 * h, self.b]
    }

    /// Boole-rule integral of `x^j f`.
    fn integral(&self, j: u32) -> f64 {
        let xs = self.xs();
        let g: Vec<f64> = (0..5).map(|i| self.f[i] * xs[i].powi(j as i32)).collect();
        let h = self.b - self.a;
        let whole = h / 6.0 * (g[0] + 4.0 * g[2] + g[4]);
        let halves = h / 12.0 * (g[0] + 4.0 * g[1] + 2.0 * g[2] + 4.0 * g[3] + g[4]);
        halves + (halves - whole) / 15.0
    }
}

#[derive(Clone, Debug)]
enum Kind {
    /// `psi = h - (x - m)^2 / (2 s2)`
    Gauss { m: f64, s2: f64, h: f64 },
    /// `psi = psi0 + rate (x - x0)`
    Expo { x0: f64, psi0: f64, rate: f64 },
    /// `a = a0 + a1 y`, `b = b0 + b1 y` with `y = x - x0`, `psi(x0) = psi0`.
    Rational {
        x0: f64,
        psi0: f64,
        a0: f64,
        a1: f64,
        b0: f64,
        b1: f64,
        shift: f64,
        leaves: Vec<Leaf>,
        /// `cum[i]` and `rcum[i]`: integral of `f` over leaves `..i` and `i..`.
        cum: Vec<f64>,
        rcum: Vec<f64>,
    },
}

#[derive(Clone, Debug)]
struct Piece {
    lo: f64,
    hi: f64,
    kind: Kind,
    /// `ln int_lo^hi exp(psi)`
    ln_mass: f64,
}

fn rational_psi(x: f64, x0: f64, psi0: f64, a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    let y = x - x0;
    let t = a1 * y / a0;
    let c = 2.0 * (b0 * a1 - b1 * a0) / (a1 * a1);
    psi0 - t.ln_1p() + 2.0 * b0 * y / a0 + c * log1p_minus(t)
}

impl Piece {
    fn psi(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Gauss { m, s2, h } => h - (x - m) * (x - m) / (2.0 * s2),
            Kind::Expo { x0, psi0, rate } => psi0 + rate * (x - x0),
            Kind::Rational { x0, psi0, a0, a1, b0, b1, .. } => rational_psi(x, *x0, *psi0, *a0, *a1, *b0, *b1),
        }
    }

    /// Largest value of `psi` on the piece.
    fn psi_max(&self) -> f64 {
        match &self.kind {
            Kind::Gauss { m, .. } => self.psi(m.clamp(self.lo, self.hi)),
            Kind::Expo { rate, .. } => {
                if *rate <= 0.0 {
                    self.psi(self.lo)
                } else {
                    self.psi(self.hi)
                }
            }
            Kind::Rational { x0, a0, a1, b0, b1, .. } => {
                let mut best = self.psi(self.lo).max(self.psi(self.hi));
                // psi' = (2b - a') / a vanishes where 2 (b0 + b1 y) = a1.
                if *b1 != 0.0 {
                    let y = (0.5 * a1 - b0) / b1;
                    let x = x0 + y;
                    if x > self.lo && x < self.hi && a0 + a1 * y > 0.0 {
                        best = best.max(self.psi(x));
                    }
                }
                best
            }
        }
    }

    /// `ln int_u^v exp(psi)` for `lo <= u <= v <= hi`.
    fn ln_integral(&self, u: f64, v: f64) -> f64 {
        if v <= u {
            return f64::NEG_INFINITY;
        }
        match &self.kind {
            Kind::Gauss { m, s2, h } => {
                let s = s2.sqrt();
                h + (s * (2.0 * std::f64::consts::PI).sqrt()).ln() + ln_norm_interval((u - m) / s, (v - m) / s)
            }
            Kind::Expo { x0, psi0, rate } => {
                let r = *rate;
                if r == 0.0 {
                    psi0 + (v - u).ln()
                } else if r < 0.0 {
                    psi0 + r * (u - x0) + (-(r * (v - u)).exp_m1()).ln() - (-r).ln()
                } else {
                    psi0 + r * (v - x0) + (-(-r * (v - u)).exp_m1()).ln() - r.ln()
                }
            }
            Kind::Rational { shift, .. } => {
                let val = self.rational_partial(u, v, 0);
                if val > 0.0 {
                    shift + val.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// `int_u^v x^j exp(psi - shift)` on a rational piece. Whole leaves are
    /// summed from whichever end keeps far-tail intervals free of cancellation.
    fn rational_partial(&self, u: f64, v: f64, j: u32) -> f64 {
        let Kind::Rational { leaves, cum, rcum, shift, .. } = &self.kind else {
            unreachable!("rational_partial on an analytic piece")
        };
        let (u, v) = (u.max(self.lo), v.min(self.hi));
        if v <= u || leaves.is_empty() {
            return 0.0;
        }
        let f = |x: f64| (self.psi(x) - shift).exp() * x.powi(j as i32);
        let part = |l: &Leaf, a: f64, b: f64| -> f64 {
            let (a, b) = (a.max(l.a), b.min(l.b));
            if a <= l.a && b >= l.b {
                l.integral(j)
            } else if b > a {
                let tol = REL_LEAF_TOL * l.integral(j).abs() * (b - a) / (l.b - l.a);
                simpson(&f, a, b, tol).unwrap_or_else(|e| e.estimate)
            } else {
                0.0
            }
        };
        let last = leaves.len() - 1;
        let iu = leaves.partition_point(|l| l.b <= u).min(last);
        let iv = leaves.partition_point(|l| l.b < v).min(last);
        if iu == iv {
            return part(&leaves[iu], u, v);
        }
        let ends = part(&leaves[iu], u, v) + part(&leaves[iv], u, v);
        let (a, b) = (iu + 1, iv);
        let inner = if a == b {
            0.0
        } else if j == 0 {
            if rcum[a] < cum[b] {
                rcum[a] - rcum[b]
            } else {
                cum[b] - cum[a]
            }
        } else {
            ksum(leaves[a..b].iter().map(|l| l.integral(j)))
        };
        ends + inner
    }

    /// `int_u^v x^j exp(psi - s)` for `lo <= u <= v <= hi`.
    fn moment_integral(&self, j: u32, u: f64, v: f64, s: f64) -> f64 {
        if v <= u {
            return 0.0;
        }
        let bnd = |x: f64, k: u32| -> f64 {
            if x.is_infinite() {
                0.0
            } else {
                x.powi(k as i32) * (self.psi(x) - s).exp()
            }
        };
        match &self.kind {
            Kind::Gauss { m, s2, .. } => {
                let mut prev = 0.0;
                let mut cur = (self.ln_integral(u, v) - s).exp();
                for k in 0..j {
                    let next = m * cur + s2 * (k as f64 * prev - (bnd(v, k) - bnd(u, k)));
                    prev = cur;
                    cur = next;
                }
                cur
            }
            Kind::Expo { rate, .. } => {
                let mut cur = (self.ln_integral(u, v) - s).exp();
                for k in 1..=j {
                    cur = ((bnd(v, k) - bnd(u, k)) - k as f64 * cur) / rate;
                }
                cur
            }
            Kind::Rational { shift, .. } => self.rational_partial(u, v, j) * (shift - s).exp(),
        }
    }
}

/// Stationary density of a diffusion approximation.
#[derive(Clone, Debug)]
pub struct DensityCurve {
    params: QueueParams,
    mode: Mode,
    pieces: Vec<Piece>,
    ln_z: f64,
    masses: Vec<f64>,
}

/// Build the stationary density of the diffusion with drift `b` and coefficient `a` for `mode`.
pub fn build_density(params: &QueueParams, mode: Mode) -> Result<DensityCurve> {
    DensityCurve::new(params, mode)
}

impl DensityCurve {
    pub fn new(params: &QueueParams, mode: Mode) -> Result<Self> {
        let p = *params;
        let mu = p.mu();
        let alpha = p.alpha();
        let [left_bp, right_bp] = p.breakpoints();
        let b_at = |x: f64| p.drift(x);
        let a_at = |x: f64| p.diff_coeff(x, mode);

        // Analytic piece where `a` is the constant `a_c` and `b` has slope `b1`.
        let analytic = |lo: f64, hi: f64, xa: f64, psi_a: f64, a_c: f64, b1: f64| -> Piece {
            let b0 = b_at(xa) - b1 * xa;
            let kind = if b1 < 0.0 {
                let m = -b0 / b1;
                let s2 = -a_c / (2.0 * b1);
                Kind::Gauss { m, s2, h: psi_a + (xa - m) * (xa - m) / (2.0 * s2) }
            } else {
                Kind::Expo { x0: xa, psi0: psi_a, rate: 2.0 * b_at(xa) / a_c }
            };
            let mut pc = Piece { lo, hi, kind, ln_mass: 0.0 };
            pc.ln_mass = pc.ln_integral(lo, hi);
            pc
        };

        let mut pieces = Vec::new();
        match mode {
            Mode::Constant => {
                let a_c = 2.0 * mu;
                let psi_a = (2.0 / a_c).ln();
                pieces.push(analytic(f64::NEG_INFINITY, right_bp, right_bp, psi_a, a_c, -mu));
                pieces.push(analytic(right_bp, f64::INFINITY, right_bp, psi_a, a_c, -alpha));
            }
            Mode::StateDependent => {
                let psi_l = (2.0 / a_at(left_bp)).ln();
                pieces.push(analytic(f64::NEG_INFINITY, left_bp, left_bp, psi_l, mu, -mu));
                let d = p.delta();
                let middle = Self::rational(left_bp, right_bp, psi_l, a_at(left_bp), mu * d, b_at(left_bp), -mu)?;
                let psi_r = middle.psi(right_bp);
                pieces.push(middle);
                let a_r = a_at(right_bp);
                if alpha == 0.0 {
                    pieces.push(analytic(right_bp, f64::INFINITY, right_bp, psi_r, a_r, 0.0));
                } else {
                    pieces.push(Self::rational(right_bp, f64::INFINITY, psi_r, a_r, d * alpha, b_at(right_bp), -alpha)?);
                }
            }
        }

        let ln_z = pieces.iter().fold(f64::NEG_INFINITY, |acc, pc| ln_add_exp(acc, pc.ln_mass));
        if !ln_z.is_finite() {
            return Err(Error::Numeric(format!("density normalization is not finite: {ln_z}")));
        }
        let masses = pieces.iter().map(|pc| (pc.ln_mass - ln_z).exp()).collect();
        Ok(DensityCurve { params: p, mode, pieces, ln_z, masses })
    }

    fn rational(lo: f64, hi: f64, psi0: f64, a0: f64, a1: f64, b0: f64, b1: f64) -> Result<Piece> {
        let mut pc = Piece {
            lo,
            hi,
            kind: Kind::Rational { x0: lo, psi0, a0, a1, b0, b1, shift: 0.0, leaves: Vec::new(), cum: Vec::new(), rcum: Vec::new() },
            ln_mass: 0.0,
        };
        // Re-anchor at the peak so the two large terms of the exponent stay small where the mass is.
        if let Kind::Rational { x0, psi0, a0, a1, b0, b1, .. } = &mut pc.kind {
            let mut xs = lo;
            if *b1 != 0.0 {
                let y = (0.5 * *a1 - *b0) / *b1;
                if y > 0.0 && lo + y < hi {
                    xs = lo + y;
                }
            }
            let y = xs - lo;
            *psi0 = rational_psi(xs, *x0, *psi0, *a0, *a1, *b0, *b1);
            *a0 += *a1 * y;
            *b0 += *b1 * y;
            *x0 = xs;
        }
        let shift = pc.psi_max();
        let mut end = hi;
        if end.is_infinite() {
            // Walk out until the density and its 20th moment weight are negligible.
            let w = |x: f64| pc.psi(x) + MAX_MOMENT as f64 * x.abs().max(1.0).ln();
            let mut step = 1.0;
            end = lo + step;
            while w(end) > shift - TAIL_DROP || pc.psi(end) > pc.psi(end - 1e-3 * step) {
                step *= 1.5;
                end = lo + step;
                if step > 1e12 {
                    return Err(Error::Numeric("rational tail does not decay".into()));
                }
            }
            pc.hi = end;
        }
        let f = |x: f64| (pc.psi(x) - shift).exp();
        let mut leaves = Vec::new();
        let seeds = 64usize;
        let h = (end - lo) / seeds as f64;
        for i in 0..seeds {
            let a = lo + h * i as f64;
            let b = if i + 1 == seeds { end } else { a + h };
            record_leaves(&f, a, b, f(a), f(0.5 * (a + b)), f(b), LEAF_TOL, 40, &mut leaves)?;
        }
        let running = |it: &mut dyn Iterator<Item = &Leaf>| {
            let mut acc = KahanSum::new();
            let mut out = vec![0.0];
            for l in it {
                acc.add(l.integral(0));
                out.push(acc.value());
            }
            out
        };
        let cum = running(&mut leaves.iter());
        let mut rcum = running(&mut leaves.iter().rev());
        rcum.reverse();
        let total = *rcum.first().expect("seeded leaves");
        if let Kind::Rational { shift: s, leaves: lv, cum: c, rcum: r, .. } = &mut pc.kind {
            *s = shift;
            *lv = leaves;
            *c = cum;
            *r = rcum;
        }
        pc.ln_mass = shift + total.ln();
        Ok(pc)
    }

    pub fn params(&self) -> &QueueParams {
        &self.params
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Log of the normalizing constant of `exp(psi)`.
    pub fn ln_normalizer(&self) -> f64 {
        self.ln_z
    }

    fn piece_index(&self, x: f64) -> usize {
        self.pieces.iter().position(|pc| x <= pc.hi).unwrap_or(self.pieces.len() - 1)
    }

    pub fn ln_density(&self, x: f64) -> f64 {
        let i = self.piece_index(x);
        let pc = &self.pieces[i];
        if x > pc.hi {
            return f64::NEG_INFINITY;
        }
        pc.psi(x) - self.ln_z
    }

    pub fn density(&self, x: f64) -> f64 {
        self.ln_density(x).exp()
    }

    /// Supremum of the density.
    pub fn sup_density(&self) -> f64 {
        self.pieces.iter().map(|pc| (pc.psi_max() - self.ln_z).exp()).fold(0.0, f64::max)
    }

    /// `int_u^v x^j nu(x) dx`; bounds may be infinite.
    pub fn partial_moment(&self, j: u32, u: f64, v: f64) -> f64 {
        if v <= u {
            return 0.0;
        }
        ksum(self.pieces.iter().map(|pc| {
            let lo = u.max(pc.lo);
            let hi = v.min(pc.hi);
            if lo >= hi {
                0.0
            } else {
                pc.moment_integral(j, lo, hi, self.ln_z)
            }
        }))
    }

    /// `P(u <= Y <= v)`.
    pub fn interval_prob(&self, u: f64, v: f64) -> f64 {
        if v <= u {
            return 0.0;
        }
        ksum(self.pieces.iter().zip(&self.masses).map(|(pc, &mass)| {
            let lo = u.max(pc.lo);
            let hi = v.min(pc.hi);
            if lo >= hi {
                0.0
            } else if lo == pc.lo && hi == pc.hi {
                mass
            } else {
                (pc.ln_integral(lo, hi) - self.ln_z).exp()
            }
        }))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.interval_prob(f64::NEG_INFINITY, x).min(1.0)
    }

    /// `P(Y >= x)`.
    pub fn sf(&self, x: f64) -> f64 {
        self.interval_prob(x, f64::INFINITY).min(1.0)
    }

    /// `ln P(Y >= x)`, finite far into the right tail.
    pub fn ln_sf(&self, x: f64) -> f64 {
        self.pieces.iter().fold(f64::NEG_INFINITY, |acc, pc| {
            let lo = x.max(pc.lo);
            if lo >= pc.hi {
                acc
            } else {
                ln_add_exp(acc, pc.ln_integral(lo, pc.hi) - self.ln_z)
            }
        })
    }

    /// `E[Y^m]`.
    pub fn moment(&self, m: u32) -> Result<f64> {
        if m > MAX_MOMENT {
            return Err(Error::InvalidParam(format!("moment order {m} above {MAX_MOMENT}")));
        }
        Ok(self.partial_moment(m, f64::NEG_INFINITY, f64::INFINITY))
    }

    /// `E[g(Y)]` by quadrature over the density, split at the breakpoints and at 0.
    pub fn expect<F: Fn(f64) -> f64>(&self, g: F, extra_breaks: &[f64]) -> Result<f64> {
        let [l, r] = self.params.breakpoints();
        let lo = self.lower_cut();
        let hi = self.upper_cut();
        let mut pts = vec![lo, hi, l, r, 0.0];
        pts.extend_from_slice(extra_breaks);
        pts.retain(|p| *p >= lo && *p <= hi);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let h = |x: f64| g(x) * self.density(x);
        let mut acc = KahanSum::new();
        for w in pts.windows(2) {
            acc.add(simpson(&h, w[0], w[1], 1e-13).map_err(|e| Error::Numeric(format!("quadrature failed on [{}, {}]", e.lo, e.hi)))?);
        }
        Ok(acc.value())
    }

    /// Point below which the density mass is below `1e-30`.
    pub fn lower_cut(&self) -> f64 {
        let mut x = self.params.breakpoints()[0].min(-1.0);
        let mut step = 1.0;
        while self.cdf(x) > 1e-30 {
            x -= step;
            step *= 1.5;
        }
        x
    }

    /// Point above which the density mass is below `1e-30`.
    pub fn upper_cut(&self) -> f64 {
        let mut x = self.params.breakpoints()[1].max(1.0);
        let mut step = 1.0;
        while self.ln_sf(x) > -69.0 {
            x += step;
            step *= 1.5;
        }
        x
    }

    /// Points at which the density changes formula.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.pieces.iter().skip(1).map(|pc| pc.lo).collect()
    }
}

#[allow(clippy::too_many_arguments)]
fn record_leaves<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    tol: f64,
    depth: u32,
    out: &mut Vec<Leaf>,
) -> Result<()> {
    let m = 0.5 * (a + b);
    let flm = f(0.5 * (a + m));
    let frm = f(0.5 * (m + b));
    let h = b - a;
    let whole = h / 6.0 * (fa + 4.0 * fm + fb);
    let halves = h / 12.0 * (fa + 4.0 * flm + 2.0 * fm + 4.0 * frm + fb);
    let err = (halves - whole).abs();
    if err <= REL_LEAF_TOL * halves.abs() || err <= 15.0 * tol * h || h <= 1e-13 * (a.abs() + b.abs()) {
        out.push(Leaf { a, b, f: [fa, flm, fm, frm, fb] });
        return Ok(());
    }
    if depth == 0 {
        return Err(Error::Numeric(format!("density quadrature did not converge on [{a}, {b}]")));
    }
    record_leaves(f, a, m, fa, flm, fm, tol, depth - 1, out)?;
    record_leaves(f, m, b, fm, frm, fb, tol, depth - 1, out)
}
