//! No-U-Turn transition with slice-variable acceptance.
//!
//! The trajectory doubles in a random direction until either end starts to
//! turn back or the maximum depth is reached; the next state is drawn
//! uniformly from the leaves inside the slice.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::hmc::{hamiltonian, leapfrog, sample_momentum, PhasePoint, StepInfo, DIVERGENCE_THRESHOLD};
use super::Target;
use crate::error::Result;

struct Tree {
    minus: (PhasePoint, DVector<f64>),
    plus: (PhasePoint, DVector<f64>),
    proposal: (PhasePoint, DVector<f64>),
    /// Leaves inside the slice.
    n: usize,
    /// No U-turn and no divergence so far.
    ok: bool,
    alpha: f64,
    n_alpha: usize,
    divergent: bool,
}

struct Ctx<'a, T: Target + ?Sized> {
    target: &'a T,
    inv_mass: &'a DVector<f64>,
    eps: f64,
    log_u: f64,
    h0: f64,
    stream: u64,
}

fn no_uturn(minus: &(PhasePoint, DVector<f64>), plus: &(PhasePoint, DVector<f64>), inv_mass: &DVector<f64>) -> bool {
    let dx = &plus.0.x - &minus.0.x;
    dx.dot(&minus.1.component_mul(inv_mass)) >= 0.0 && dx.dot(&plus.1.component_mul(inv_mass)) >= 0.0
}

fn build_tree<T: Target + ?Sized>(
    ctx: &Ctx<'_, T>,
    from: &(PhasePoint, DVector<f64>),
    dir: f64,
    depth: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Tree> {
    if depth == 0 {
        let step = leapfrog(ctx.target, &from.0, &from.1, dir * ctx.eps, 1, ctx.inv_mass, ctx.stream)?;
        let Some((p, v)) = step else {
            return Ok(Tree {
                minus: from.clone(),
                plus: from.clone(),
                proposal: from.clone(),
                n: 0,
                ok: false,
                alpha: 0.0,
                n_alpha: 1,
                divergent: true,
            });
        };
        let h = hamiltonian(&p, &v, ctx.inv_mass);
        let joint = -h;
        let n = usize::from(ctx.log_u <= joint);
        let divergent = !(ctx.log_u < joint + DIVERGENCE_THRESHOLD) || !h.is_finite();
        let alpha = if h.is_finite() { (ctx.h0 - h).exp().min(1.0) } else { 0.0 };
        let leaf = (p, v);
        return Ok(Tree {
            minus: leaf.clone(),
            plus: leaf.clone(),
            proposal: leaf,
            n,
            ok: !divergent,
            alpha,
            n_alpha: 1,
            divergent,
        });
    }
    let mut t = build_tree(ctx, from, dir, depth - 1, rng)?;
    if !t.ok {
        return Ok(t);
    }
    let edge = if dir < 0.0 { t.minus.clone() } else { t.plus.clone() };
    let t2 = build_tree(ctx, &edge, dir, depth - 1, rng)?;
    let total = t.n + t2.n;
    if total > 0 && rng.random::<f64>() < t2.n as f64 / total as f64 {
        t.proposal = t2.proposal;
    }
    if dir < 0.0 {
        t.minus = t2.minus;
    } else {
        t.plus = t2.plus;
    }
    t.alpha += t2.alpha;
    t.n_alpha += t2.n_alpha;
    t.divergent |= t2.divergent;
    t.ok = t2.ok && no_uturn(&t.minus, &t.plus, ctx.inv_mass);
    t.n = total;
    Ok(t)
}

/// One NUTS transition from `current`.
pub fn nuts_step<T: Target + ?Sized>(
    target: &T,
    current: &PhasePoint,
    eps: f64,
    max_depth: usize,
    inv_mass: &DVector<f64>,
    rng: &mut ChaCha8Rng,
    stream: u64,
) -> Result<StepInfo> {
    let v0 = sample_momentum(inv_mass, rng);
    let h0 = hamiltonian(current, &v0, inv_mass);
    let log_u = -h0 + rng.random::<f64>().ln();
    let ctx = Ctx {
        target,
        inv_mass,
        eps,
        log_u,
        h0,
        stream,
    };
    let start = (current.clone(), v0);
    let mut minus = start.clone();
    let mut plus = start.clone();
    let mut proposal = start;
    let mut n = 1usize;
    let mut depth = 0;
    let mut alpha = 0.0;
    let mut n_alpha = 0usize;
    let mut divergent = false;
    let mut moved = false;
    while depth < max_depth {
        let dir = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let t = if dir < 0.0 {
            build_tree(&ctx, &minus, dir, depth, rng)?
        } else {
            build_tree(&ctx, &plus, dir, depth, rng)?
        };
        if dir < 0.0 {
            minus = t.minus;
        } else {
            plus = t.plus;
        }
        alpha += t.alpha;
        n_alpha += t.n_alpha;
        divergent |= t.divergent;
        depth += 1;
        if !t.ok {
            break;
        }
        if rng.random::<f64>() < t.n as f64 / n as f64 {
            proposal = t.proposal;
            moved = true;
        }
        n += t.n;
        if !no_uturn(&minus, &plus, inv_mass) {
            break;
        }
    }
    let accept_prob = if n_alpha > 0 { alpha / n_alpha as f64 } else { 0.0 };
    let energy = hamiltonian(&proposal.0, &proposal.1, inv_mass);
    Ok(StepInfo {
        point: proposal.0,
        accepted: moved,
        accept_prob,
        h_start: h0,
        h_proposal: energy,
        energy,
        divergent,
        depth,
    })
}
